//! Irving–Kirkwood averaging of particle-chain snapshots onto uniform bins,
//! plus the interface tracking built on top of the averaged fields.
//!
//! Density and momentum deposit each particle into the bin containing it.
//! The pressure combines a kinetic part, using velocities relative to the
//! bin's mean velocity, with the pair virial `f_ij r_ij`. The virial is
//! spread over the bins that the segment `[x_i, x_{i+1}]` overlaps, in
//! proportion to the overlap length. This is the bin integral of the
//! line-delta kernel `lambda_ij`.

use std::io::Write;

use crate::eos::{Phase, PhaseBounds};
use crate::error::{Error, Result};
use crate::mdchain::ParticleChain;
use crate::state::FluidState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinGrid {
    x_min: f64,
    x_max: f64,
    n_bins: usize,
}

impl BinGrid {
    pub fn new(x_min: f64, x_max: f64, n_bins: usize) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bin grid needs x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_bins < 4 {
            return Err(Error::InvalidParameter(format!(
                "bin grid needs at least 4 bins, got {n_bins}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_bins,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_bins as f64
    }

    /// Left edge of bin `j` (`j == n_bins` gives `x_max`).
    pub fn edge(&self, j: usize) -> f64 {
        if j == self.n_bins {
            self.x_max
        } else {
            self.x_min + j as f64 * self.width()
        }
    }

    pub fn center(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.width()
    }

    /// Bin containing `x`; the right end belongs to the last bin.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.x_min && x <= self.x_max) {
            return None;
        }
        let j = ((x - self.x_min) / self.width()) as usize;
        Some(j.min(self.n_bins - 1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedField {
    pub grid: BinGrid,
    pub rho: Vec<f64>,
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl AveragedField {
    /// Field with zero velocity and pressure, mainly for synthetic tests.
    pub fn from_density(grid: BinGrid, rho: Vec<f64>) -> Self {
        let n = rho.len();
        Self {
            grid,
            rho,
            velocity: vec![0.0; n],
            pressure: vec![0.0; n],
        }
    }

    pub fn momentum(&self, j: usize) -> f64 {
        self.rho[j] * self.velocity[j]
    }

    /// Writes `x,rho,v,p` rows, one per bin center.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "rho", "v", "p"])?;
        for j in 0..self.grid.n_bins() {
            w.write_record([
                format!("{:.16e}", self.grid.center(j)),
                format!("{:.16e}", self.rho[j]),
                format!("{:.16e}", self.velocity[j]),
                format!("{:.16e}", self.pressure[j]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bins density, velocity and pressure of a chain snapshot.
pub fn bin_fields(chain: &ParticleChain, grid: &BinGrid) -> AveragedField {
    let n = grid.n_bins();
    let h = grid.width();
    let m = chain.mass();
    let x = chain.positions();
    let v = chain.velocities();

    let mut mass = vec![0.0; n];
    let mut mom = vec![0.0; n];
    let bins: Vec<Option<usize>> = x.iter().map(|&xi| grid.index_of(xi)).collect();
    for (i, bin) in bins.iter().enumerate() {
        if let Some(j) = *bin {
            mass[j] += m;
            mom[j] += m * v[i];
        }
    }
    let velocity: Vec<f64> = mass
        .iter()
        .zip(&mom)
        .map(|(&ms, &p)| if ms > 0.0 { p / ms } else { 0.0 })
        .collect();

    let mut stress = vec![0.0; n];
    for (i, bin) in bins.iter().enumerate() {
        if let Some(j) = *bin {
            let rel = v[i] - velocity[j];
            stress[j] += m * rel * rel;
        }
    }

    let params = chain.params();
    for w in x.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let r = hi - lo;
        // f_ij r_ij for the pair: the force on the right particle is -phi'(r).
        let virial = -params.potential_deriv_unchecked(r) * r;
        let a = lo.max(grid.x_min());
        let b = hi.min(grid.x_max());
        if !(a < b) {
            continue;
        }
        let j_lo = grid.index_of(a).unwrap_or(0);
        let j_hi = grid.index_of(b).unwrap_or(n - 1);
        for j in j_lo..=j_hi {
            let overlap = b.min(grid.edge(j + 1)) - a.max(grid.edge(j));
            if overlap > 0.0 {
                stress[j] += virial * overlap / r;
            }
        }
    }

    AveragedField {
        grid: *grid,
        rho: mass.iter().map(|ms| ms / h).collect(),
        velocity,
        pressure: stress.iter().map(|s| s / h).collect(),
    }
}

/// Options for [`detect_interface`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceSearch {
    /// Absolute `[lo, hi]` range of admissible edge positions; `None` means
    /// the middle half of the grid.
    pub window: Option<(f64, f64)>,
    /// A jump must exceed this multiple of the median neighboring-bin
    /// difference.
    pub noise_factor: f64,
    /// Previously detected position, used to break ties.
    pub previous: Option<f64>,
}

impl Default for InterfaceSearch {
    fn default() -> Self {
        Self {
            window: None,
            noise_factor: 10.0,
            previous: None,
        }
    }
}

/// Position of the bin edge with the largest density jump inside the search
/// window.
pub fn detect_interface(field: &AveragedField, search: &InterfaceSearch) -> Result<f64> {
    let grid = &field.grid;
    let n = grid.n_bins();
    if field.rho.iter().filter(|&&r| r > 0.0).count() < 4 {
        return Err(Error::Extraction(
            "fewer than 4 bins carry mass".to_string(),
        ));
    }
    let (lo, hi) = search.window.unwrap_or_else(|| {
        let span = grid.x_max() - grid.x_min();
        (grid.x_min() + 0.25 * span, grid.x_max() - 0.25 * span)
    });
    // Interior edge k sits between bins k-1 and k.
    let candidates: Vec<(f64, f64)> = (1..n)
        .map(|k| (grid.edge(k), (field.rho[k] - field.rho[k - 1]).abs()))
        .filter(|&(x, _)| x >= lo && x <= hi)
        .collect();
    if candidates.is_empty() {
        return Err(Error::Extraction(format!(
            "no bin edge inside the search window [{lo}, {hi}]"
        )));
    }
    let mut jumps: Vec<f64> = candidates.iter().map(|c| c.1).collect();
    jumps.sort_by(f64::total_cmp);
    let median = if jumps.len() % 2 == 1 {
        jumps[jumps.len() / 2]
    } else {
        0.5 * (jumps[jumps.len() / 2 - 1] + jumps[jumps.len() / 2])
    };
    let floor = search.noise_factor * median;
    let max_jump = *jumps.last().unwrap();
    if !(max_jump > floor) || max_jump == 0.0 {
        return Err(Error::Extraction(format!(
            "density field is flat: largest jump {max_jump} does not exceed noise floor {floor}"
        )));
    }
    let anchor = search.previous.unwrap_or(0.0);
    let best = candidates
        .iter()
        .filter(|c| c.1 == max_jump)
        .min_by(|a, b| (a.0 - anchor).abs().total_cmp(&(b.0 - anchor).abs()))
        .unwrap();
    Ok(best.0)
}

/// Sharpens a coarse interface position to the particle scale.
///
/// Gaps whose midpoint lies within `half_width` of `coarse` are classified
/// as liquid-like (`r < split`) or vapor-like. The returned position is that
/// of the particle whose index best separates the two classes: it minimizes
/// the number of misclassified gaps for the given orientation. Ties go to
/// the candidate nearest `coarse`.
pub fn locate_phase_boundary(
    chain: &ParticleChain,
    coarse: f64,
    half_width: f64,
    bounds: &PhaseBounds,
    left_phase: Phase,
) -> Result<f64> {
    let x = chain.positions();
    let split = bounds.split_volume() * chain.mass();
    let lo = coarse - half_width;
    let hi = coarse + half_width;
    let first = x.partition_point(|&xi| xi < lo).saturating_sub(1);
    let last = x.partition_point(|&xi| xi <= hi).min(x.len() - 1);
    if last <= first + 1 {
        return Err(Error::Extraction(format!(
            "no particle gaps near x = {coarse}"
        )));
    }
    // gap g connects particles g and g+1 for g in first..last
    let left_liquid = left_phase == Phase::Liquid;
    let wrong_on_left = |g: usize| {
        let liquid = x[g + 1] - x[g] < split;
        liquid != left_liquid
    };
    let n_gaps = last - first;
    // cost(k): k gaps to the left of the split particle first + k.
    let mut cost: i64 = (first..last).filter(|&g| !wrong_on_left(g)).count() as i64;
    let mut best = (cost, f64::INFINITY, first);
    for k in 0..=n_gaps {
        let idx = first + k;
        let dist = (x[idx] - coarse).abs();
        if cost < best.0 || (cost == best.0 && dist < best.1) {
            best = (cost, dist, idx);
        }
        if k < n_gaps {
            let g = first + k;
            cost += if wrong_on_left(g) { 1 } else { -1 };
        }
    }
    Ok(x[best.2])
}

/// Interface positions over time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterfaceTrack {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
}

impl InterfaceTrack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, x: f64) {
        self.times.push(t);
        self.positions.push(x);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The last `fraction` of the samples (at least two when available).
    pub fn tail(&self, fraction: f64) -> InterfaceTrack {
        let n = self.len();
        let keep = ((n as f64 * fraction).ceil() as usize).clamp(n.min(2), n);
        InterfaceTrack {
            times: self.times[n - keep..].to_vec(),
            positions: self.positions[n - keep..].to_vec(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "pos"])?;
        for (t, x) in self.times.iter().zip(&self.positions) {
            w.write_record([format!("{t:.16e}"), format!("{x:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least-squares slope of position against time.
pub fn estimate_speed(track: &InterfaceTrack) -> Result<f64> {
    let n = track.len();
    if n < 2 {
        return Err(Error::Extraction(format!(
            "speed fit needs at least 2 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let t_mean = track.times.iter().sum::<f64>() / nf;
    let x_mean = track.positions.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, x) in track.times.iter().zip(&track.positions) {
        sxx += (t - t_mean) * (t - t_mean);
        sxy += (t - t_mean) * (x - x_mean);
    }
    if sxx == 0.0 {
        return Err(Error::Extraction(
            "speed fit is degenerate: all sample times are equal".to_string(),
        ));
    }
    Ok(sxy / sxx)
}

/// Spatial averages over `[pos - offset - window, pos - offset]` and
/// `[pos + offset, pos + offset + window]`.
///
/// The density is mass per window length and the momentum is momentum per
/// window length, so the velocity is the mass-weighted mean. Bins cut by a
/// window boundary count with their overlap fraction.
pub fn extract_states(
    field: &AveragedField,
    interface_pos: f64,
    window: f64,
    offset: f64,
) -> Result<(FluidState, FluidState)> {
    if !(window > 0.0 && offset >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "window must be positive and offset non-negative, got {window} and {offset}"
        )));
    }
    let left = window_average(
        field,
        interface_pos - offset - window,
        interface_pos - offset,
    )?;
    let right = window_average(
        field,
        interface_pos + offset,
        interface_pos + offset + window,
    )?;
    Ok((left, right))
}

/// Plateau states measured directly on the particles.
///
/// Uses the same windows as [`extract_states`]. The density inside a window
/// is `m (k - 1) / (x_last - x_first)` over the `k` particles it contains,
/// which is the mass of the bonds spread uniformly along them. This avoids
/// the one-particle counting error of fixed bins. The velocity is the mean
/// particle velocity.
pub fn extract_states_particles(
    chain: &ParticleChain,
    interface_pos: f64,
    window: f64,
    offset: f64,
) -> Result<(FluidState, FluidState)> {
    if !(window > 0.0 && offset >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "window must be positive and offset non-negative, got {window} and {offset}"
        )));
    }
    let left = particle_window_average(
        chain,
        interface_pos - offset - window,
        interface_pos - offset,
    )?;
    let right = particle_window_average(
        chain,
        interface_pos + offset,
        interface_pos + offset + window,
    )?;
    Ok((left, right))
}

fn particle_window_average(chain: &ParticleChain, a: f64, b: f64) -> Result<FluidState> {
    let x = chain.positions();
    let first = x.partition_point(|&xi| xi < a);
    let end = x.partition_point(|&xi| xi <= b);
    if end < first + 2 {
        return Err(Error::Extraction(format!(
            "averaging window [{a}, {b}] holds fewer than 2 particles"
        )));
    }
    let k = end - first;
    let span = x[end - 1] - x[first];
    let rho = chain.mass() * (k - 1) as f64 / span;
    let v_mean = chain.velocities()[first..end].iter().sum::<f64>() / k as f64;
    Ok(FluidState::from_velocity(rho, v_mean))
}

fn window_average(field: &AveragedField, a: f64, b: f64) -> Result<FluidState> {
    let grid = &field.grid;
    if a < grid.x_min() || b > grid.x_max() {
        return Err(Error::Extraction(format!(
            "averaging window [{a}, {b}] leaves the grid [{}, {}]",
            grid.x_min(),
            grid.x_max()
        )));
    }
    let j_lo = grid.index_of(a).unwrap_or(0);
    let j_hi = grid.index_of(b).unwrap_or(grid.n_bins() - 1);
    let mut mass = 0.0;
    let mut mom = 0.0;
    for j in j_lo..=j_hi {
        let overlap = b.min(grid.edge(j + 1)) - a.max(grid.edge(j));
        if overlap > 0.0 {
            mass += field.rho[j] * overlap;
            mom += field.momentum(j) * overlap;
        }
    }
    if !(mass > 0.0) {
        return Err(Error::Extraction(format!(
            "averaging window [{a}, {b}] contains no mass"
        )));
    }
    let len = b - a;
    Ok(FluidState::new(mass / len, mom / len))
}
