//! Nearest-neighbor particle chain with free ends, integrated by velocity
//! Verlet.
//!
//! The chain energy is `sum_i m v_i^2 / 2 + sum_i phi(x_{i+1} - x_i)`, so the
//! force on particle `i` is `phi'(r_{i,i+1}) - phi'(r_{i-1,i})`. End particles
//! only feel their single interior neighbor.

use rayon::prelude::*;

use crate::eos::VdwParams;
use crate::error::{Error, Result};
use crate::state::FluidState;

/// Chains at least this long evaluate forces with rayon.
const PARALLEL_THRESHOLD: usize = 16_384;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleChain {
    positions: Vec<f64>,
    velocities: Vec<f64>,
    mass: f64,
    params: VdwParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainObservables {
    pub total_mass: f64,
    pub total_momentum: f64,
    pub total_energy: f64,
}

impl ParticleChain {
    pub fn new(
        positions: Vec<f64>,
        velocities: Vec<f64>,
        mass: f64,
        params: VdwParams,
    ) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a chain needs at least 2 particles, got {}",
                positions.len()
            )));
        }
        if positions.len() != velocities.len() {
            return Err(Error::InvalidInput(format!(
                "{} positions but {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "particle mass must be positive, got {mass}"
            )));
        }
        params.validate()?;
        if velocities.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial velocities"));
        }
        let chain = Self {
            positions,
            velocities,
            mass,
            params,
        };
        chain.check_gaps()?;
        Ok(chain)
    }

    /// Riemann data: `n/2` particles left of the origin with spacing
    /// `m / rho_L` and velocity `v_L`, `n/2` to the right with spacing
    /// `m / rho_R` and velocity `v_R`. The outermost particles adjacent to the
    /// jump sit half a spacing away from `x = 0`.
    pub fn riemann(
        left: FluidState,
        right: FluidState,
        n: usize,
        mass: f64,
        params: VdwParams,
    ) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "particle count must be even and >= 2, got {n}"
            )));
        }
        if !(left.rho > 0.0 && right.rho > 0.0) {
            return Err(Error::InvalidInput(format!(
                "densities must be positive, got {} and {}",
                left.rho, right.rho
            )));
        }
        let dx_l = mass / left.rho;
        let dx_r = mass / right.rho;
        for (side, dx) in [("left", dx_l), ("right", dx_r)] {
            if dx <= params.b {
                return Err(Error::InvalidInput(format!(
                    "{side} spacing {dx} lies inside the hard core b = {}",
                    params.b
                )));
            }
        }
        let half = n / 2;
        let mut positions = Vec::with_capacity(n);
        let mut velocities = Vec::with_capacity(n);
        let (v_l, v_r) = (left.velocity(), right.velocity());
        for k in (0..half).rev() {
            positions.push(-dx_l * (k as f64 + 0.5));
            velocities.push(v_l);
        }
        for k in 0..half {
            positions.push(dx_r * (k as f64 + 0.5));
            velocities.push(v_r);
        }
        Self::new(positions, velocities, mass, params)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn params(&self) -> &VdwParams {
        &self.params
    }

    fn check_gaps(&self) -> Result<()> {
        let b = self.params.b;
        for (i, w) in self.positions.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if !(gap > b) {
                if !gap.is_finite() {
                    return Err(Error::NonFinite("particle positions"));
                }
                return Err(Error::HardCore { index: i, gap, b });
            }
        }
        Ok(())
    }

    /// Accelerations of all particles.
    pub fn accelerations(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.accelerations_into(&mut out)?;
        Ok(out)
    }

    fn accelerations_into(&self, out: &mut [f64]) -> Result<()> {
        self.check_gaps()?;
        let n = self.len();
        let x = &self.positions;
        let p = &self.params;
        let inv_m = 1.0 / self.mass;
        let kernel = |i: usize| -> f64 {
            let right = if i + 1 < n {
                p.potential_deriv_unchecked(x[i + 1] - x[i])
            } else {
                0.0
            };
            let left = if i > 0 {
                p.potential_deriv_unchecked(x[i] - x[i - 1])
            } else {
                0.0
            };
            (right - left) * inv_m
        };
        if n >= PARALLEL_THRESHOLD {
            out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
                let base = c * CHUNK;
                for (k, a) in chunk.iter_mut().enumerate() {
                    *a = kernel(base + k);
                }
            });
        } else {
            for (i, a) in out.iter_mut().enumerate() {
                *a = kernel(i);
            }
        }
        Ok(())
    }

    /// One velocity-Verlet step. `accel` must hold the accelerations of the
    /// current configuration and is overwritten with those of the new one.
    ///
    /// Implemented in kick-drift-kick form, which is algebraically identical
    /// to `x += dt v + dt^2 a / 2; v += dt (a + a_new) / 2`.
    pub fn verlet_step(&mut self, dt: f64, accel: &mut [f64]) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if accel.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "acceleration buffer has {} entries for {} particles",
                accel.len(),
                self.len()
            )));
        }
        let half_dt = 0.5 * dt;
        for ((x, v), a) in self
            .positions
            .iter_mut()
            .zip(self.velocities.iter_mut())
            .zip(accel.iter())
        {
            *v += half_dt * a;
            *x += dt * *v;
        }
        self.accelerations_into(accel)?;
        for (v, a) in self.velocities.iter_mut().zip(accel.iter()) {
            *v += half_dt * a;
        }
        Ok(())
    }

    /// Integrates up to `t_end` with `ceil(t_end / dt)` equal steps of size
    /// `t_end / steps <= dt`. The observer sees the chain at `t = 0`, after
    /// every `stride`-th step, and after the final step.
    pub fn run<F>(&mut self, dt: f64, t_end: f64, stride: usize, mut observer: F) -> Result<()>
    where
        F: FnMut(f64, &ParticleChain) -> Result<()>,
    {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "end time must be non-negative, got {t_end}"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidParameter("observer stride must be >= 1".into()));
        }
        observer(0.0, self)?;
        if t_end == 0.0 {
            return Ok(());
        }
        let steps = (t_end / dt).ceil() as usize;
        let h = t_end / steps as f64;
        let mut accel = self.accelerations()?;
        for step in 1..=steps {
            self.verlet_step(h, &mut accel)?;
            if step % stride == 0 || step == steps {
                if self.velocities.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("particle velocities"));
                }
                observer(step as f64 * h, self)?;
            }
        }
        Ok(())
    }

    pub fn observables(&self) -> ChainObservables {
        let m = self.mass;
        let total_momentum = self.velocities.iter().map(|v| m * v).sum();
        let kinetic: f64 = self.velocities.iter().map(|v| 0.5 * m * v * v).sum();
        let potential: f64 = self
            .positions
            .windows(2)
            .map(|w| {
                let r = w[1] - w[0];
                -self.params.a / r - self.params.r * self.params.t_ref * (r - self.params.b).ln()
            })
            .sum();
        ChainObservables {
            total_mass: self.len() as f64 * m,
            total_momentum,
            total_energy: kinetic + potential,
        }
    }

    /// Shifts every velocity by `w`.
    pub fn boost(&mut self, w: f64) {
        self.velocities.iter_mut().for_each(|v| *v += w);
    }
}

/// Default step: `dt * sqrt(max |phi''(r)| / m) = 0.1` over the given
/// initial spacings.
pub fn default_time_step(params: &VdwParams, mass: f64, spacings: &[f64]) -> Result<f64> {
    let mut stiffness: f64 = 0.0;
    for &r in spacings {
        stiffness = stiffness.max(params.potential_second_deriv(r)?.abs());
    }
    if stiffness == 0.0 {
        return Err(Error::InvalidParameter(
            "cannot derive a time step from zero stiffness".into(),
        ));
    }
    Ok(0.1 / (stiffness / mass).sqrt())
}
