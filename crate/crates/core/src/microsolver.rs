//! One microscale Riemann problem: particle chain from macroscale data, time
//! integration, interface tracking, and extraction of `(s, u*_L, u*_R)`.

use serde::{Deserialize, Serialize};

use crate::eos::{Phase, PhaseBounds, VdwParams};
use crate::error::{Error, Result};
use crate::kirkwood::{
    bin_fields, detect_interface, estimate_speed, extract_states, locate_phase_boundary,
    extract_states_particles, AveragedField, BinGrid, InterfaceSearch, InterfaceTrack,
};
use crate::mdchain::{default_time_step, ParticleChain};
use crate::state::FluidState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannInput {
    pub left: FluidState,
    pub right: FluidState,
}

impl RiemannInput {
    pub fn new(left: FluidState, right: FluidState) -> Self {
        Self { left, right }
    }

    /// Reflection `x -> -x`.
    pub fn mirror(&self) -> Self {
        Self {
            left: FluidState::new(self.right.rho, -self.right.momentum),
            right: FluidState::new(self.left.rho, -self.left.momentum),
        }
    }

    pub fn shifted(&self, w: f64) -> Self {
        Self {
            left: FluidState::new(self.left.rho, self.left.momentum + self.left.rho * w),
            right: FluidState::new(self.right.rho, self.right.momentum + self.right.rho * w),
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [
            self.left.rho,
            self.left.momentum,
            self.right.rho,
            self.right.momentum,
        ]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        Self::new(FluidState::new(x[0], x[1]), FluidState::new(x[2], x[3]))
    }

    /// Phase of the left state; fails unless exactly one side is liquid and
    /// the other vapor, both admissible.
    pub fn left_phase(&self, bounds: &PhaseBounds) -> Result<Phase> {
        let pl = bounds.classify_density(self.left.rho);
        let pr = bounds.classify_density(self.right.rho);
        if !(self.left.is_finite() && self.right.is_finite()) {
            return Err(Error::InvalidInput("non-finite Riemann data".into()));
        }
        match (pl, pr) {
            (Some(a), Some(b)) if a != b => Ok(a),
            _ => Err(Error::InvalidInput(format!(
                "Riemann data must be two-phase: left rho = {} ({}), right rho = {} ({})",
                self.left.rho,
                describe(pl),
                self.right.rho,
                describe(pr)
            ))),
        }
    }
}

fn describe(p: Option<Phase>) -> &'static str {
    p.map(Phase::as_str).unwrap_or("inadmissible")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannResponse {
    pub s: f64,
    pub left: FluidState,
    pub right: FluidState,
    /// `|rho_L (v_L - s) - rho_R (v_R - s)|` over the starred states.
    pub rh_mass_residual: f64,
    /// `|[rho (v - s) v + p(rho)]|` over the starred states.
    pub rh_momentum_residual: f64,
    /// Set when the mass residual exceeds the configured sanity bound.
    pub flagged: bool,
}

impl RiemannResponse {
    /// Builds a response and fills in the jump residuals.
    pub fn with_residuals(
        s: f64,
        left: FluidState,
        right: FluidState,
        params: &VdwParams,
    ) -> Result<Self> {
        let (mass, mom) = rankine_hugoniot_residuals(s, left, right, params)?;
        Ok(Self {
            s,
            left,
            right,
            rh_mass_residual: mass,
            rh_momentum_residual: mom,
            flagged: false,
        })
    }

    pub fn mirror(&self) -> Self {
        Self {
            s: -self.s,
            left: FluidState::new(self.right.rho, -self.right.momentum),
            right: FluidState::new(self.left.rho, -self.left.momentum),
            ..*self
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.s,
            self.left.rho,
            self.left.momentum,
            self.right.rho,
            self.right.momentum,
        ]
    }

    pub fn from_array(y: [f64; 5]) -> Self {
        Self {
            s: y[0],
            left: FluidState::new(y[1], y[2]),
            right: FluidState::new(y[3], y[4]),
            rh_mass_residual: f64::NAN,
            rh_momentum_residual: f64::NAN,
            flagged: false,
        }
    }
}

/// 1D jump residuals of mass and momentum across a discontinuity moving at
/// `s`.
pub fn rankine_hugoniot_residuals(
    s: f64,
    left: FluidState,
    right: FluidState,
    params: &VdwParams,
) -> Result<(f64, f64)> {
    let flux_l = left.rho * (left.velocity() - s);
    let flux_r = right.rho * (right.velocity() - s);
    let mom_l = flux_l * left.velocity() + params.pressure_of_density(left.rho)?;
    let mom_r = flux_r * right.velocity() + params.pressure_of_density(right.rho)?;
    Ok(((flux_l - flux_r).abs(), (mom_l - mom_r).abs()))
}

fn default_snapshots() -> usize {
    100
}
fn default_n() -> usize {
    4000
}
fn default_mass() -> f64 {
    1.0
}
fn default_safety() -> f64 {
    0.7
}
fn default_fit() -> f64 {
    0.5
}
fn default_rh() -> f64 {
    0.05
}
fn default_search() -> f64 {
    0.5
}

/// How plateau states are measured on the final snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extraction {
    /// Window averages of the binned field.
    Bins,
    /// Window averages over the particles themselves (bond density).
    Particles,
}

/// Microscale run parameters. Length scales left as `None` default to
/// multiples of the mean initial particle spacing: bin width 20, averaging
/// window 50, window offset 25.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroConfig {
    pub n_particles: usize,
    pub mass: f64,
    /// Time step; defaults to `0.1 / sqrt(max |phi''| / m)` over the initial
    /// spacings.
    pub dt: Option<f64>,
    /// End time; defaults to `reflection_safety` times the earliest time an
    /// end disturbance can reach the jump.
    pub t_end: Option<f64>,
    pub reflection_safety: f64,
    /// Number of snapshots used for interface tracking.
    pub snapshots: usize,
    pub bin_width: Option<f64>,
    pub window: Option<f64>,
    pub offset: Option<f64>,
    /// Fraction of the track (latest samples) used for the speed fit.
    pub fit_fraction: f64,
    /// Sanity bound on the mass jump residual; exceeding it flags the
    /// response.
    pub rh_bound: f64,
    /// Fraction of the bin grid, centered on it, searched for the interface.
    pub search_fraction: f64,
    pub extraction: Extraction,
}

impl Default for MicroConfig {
    fn default() -> Self {
        Self {
            n_particles: default_n(),
            mass: default_mass(),
            dt: None,
            t_end: None,
            reflection_safety: default_safety(),
            snapshots: default_snapshots(),
            bin_width: None,
            window: None,
            offset: None,
            fit_fraction: default_fit(),
            rh_bound: default_rh(),
            search_fraction: default_search(),
            extraction: Extraction::Particles,
        }
    }
}

impl MicroConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_particles < 8 || self.n_particles % 2 != 0 {
            return bad(format!(
                "n_particles must be even and >= 8, got {}",
                self.n_particles
            ));
        }
        if !(self.mass > 0.0) {
            return bad(format!("mass must be positive, got {}", self.mass));
        }
        for (name, v) in [
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("bin_width", self.bin_width),
            ("window", self.window),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if let Some(o) = self.offset {
            if !(o >= 0.0) {
                return bad(format!("offset must be non-negative, got {o}"));
            }
        }
        if !(self.reflection_safety > 0.0 && self.reflection_safety < 1.0) {
            return bad(format!(
                "reflection_safety must lie in (0, 1), got {}",
                self.reflection_safety
            ));
        }
        if self.snapshots < 4 {
            return bad(format!("snapshots must be >= 4, got {}", self.snapshots));
        }
        if !(self.fit_fraction > 0.0 && self.fit_fraction <= 1.0) {
            return bad(format!(
                "fit_fraction must lie in (0, 1], got {}",
                self.fit_fraction
            ));
        }
        if !(self.search_fraction > 0.0 && self.search_fraction <= 1.0) {
            return bad(format!(
                "search_fraction must lie in (0, 1], got {}",
                self.search_fraction
            ));
        }
        if !(self.rh_bound > 0.0) {
            return bad(format!("rh_bound must be positive, got {}", self.rh_bound));
        }
        Ok(())
    }
}

/// Derived run geometry for one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroPlan {
    pub dt: f64,
    pub t_end: f64,
    /// Latest admissible end time before end disturbances reach the jump.
    pub t_limit: f64,
    pub stride: usize,
    pub grid: BinGrid,
    pub window: f64,
    pub offset: f64,
    pub left_phase: Phase,
}

/// Diagnostics collected during a run.
#[derive(Debug, Clone, Default)]
pub struct MicroTrace {
    pub track: InterfaceTrack,
    /// Averaged fields per tracked snapshot, kept only when requested.
    pub snapshots: Vec<(f64, AveragedField)>,
    pub final_field: Option<AveragedField>,
}

#[derive(Debug, Clone)]
pub struct MicroSolver {
    params: VdwParams,
    bounds: PhaseBounds,
    config: MicroConfig,
}

impl MicroSolver {
    pub fn new(params: VdwParams, config: MicroConfig) -> Result<Self> {
        config.validate()?;
        let bounds = params.spinodal_bounds()?;
        Ok(Self {
            params,
            bounds,
            config,
        })
    }

    pub fn params(&self) -> &VdwParams {
        &self.params
    }

    pub fn config(&self) -> &MicroConfig {
        &self.config
    }

    pub fn bounds(&self) -> &PhaseBounds {
        &self.bounds
    }

    /// Resolves time step, end time, bins and windows for `input`.
    pub fn plan(&self, input: &RiemannInput) -> Result<MicroPlan> {
        let left_phase = input.left_phase(&self.bounds)?;
        let cfg = &self.config;
        let m = cfg.mass;
        let half = (cfg.n_particles / 2) as f64;
        let dx_l = m / input.left.rho;
        let dx_r = m / input.right.rho;
        let dt = match cfg.dt {
            Some(dt) => dt,
            None => default_time_step(&self.params, m, &[dx_l, dx_r])?,
        };

        // Disturbances from the free ends travel at the sound speed relative
        // to the bulk; measuring relative to the mean drift keeps the choice
        // Galilean and mirror invariant.
        let v_mean = 0.5 * (input.left.velocity() + input.right.velocity());
        let signal = |s: &FluidState| -> Result<f64> {
            Ok(self.params.sound_speed_sq(s.rho)?.sqrt() + (s.velocity() - v_mean).abs())
        };
        let mean_spacing = 0.5 * (dx_l + dx_r);
        let bin_width = cfg.bin_width.unwrap_or(20.0 * mean_spacing);
        let window = cfg.window.unwrap_or(50.0 * mean_spacing);
        let offset = cfg.offset.unwrap_or(25.0 * mean_spacing);
        let len_l = half * dx_l;
        let len_r = half * dx_r;
        // The end disturbance must not enter the averaging windows.
        let reach = offset + window;
        if len_l.min(len_r) <= reach {
            return Err(Error::InvalidParameter(format!(
                "chain half-length {} does not exceed the averaging reach {reach}",
                len_l.min(len_r)
            )));
        }
        let t_limit =
            ((len_l - reach) / signal(&input.left)?).min((len_r - reach) / signal(&input.right)?);
        let t_end = match cfg.t_end {
            Some(t) if t >= t_limit => {
                return Err(Error::InvalidParameter(format!(
                    "t_end = {t} lets end disturbances reach the interface (limit {t_limit})"
                )))
            }
            Some(t) => t,
            None => cfg.reflection_safety * t_limit,
        };
        let steps = (t_end / dt).ceil() as usize;
        let stride = (steps / cfg.snapshots).max(1);

        // Even bin count keeps an edge at the initial jump.
        let extent = len_l.min(len_r);
        let n_bins = (2 * (extent / bin_width).round() as usize).max(4);
        let grid = BinGrid::new(-extent, extent, n_bins)?;
        Ok(MicroPlan {
            dt,
            t_end,
            t_limit,
            stride,
            grid,
            window,
            offset,
            left_phase,
        })
    }

    pub fn solve(&self, input: &RiemannInput) -> Result<RiemannResponse> {
        self.solve_traced(input, false).map(|(r, _)| r)
    }

    pub fn solve_traced(
        &self,
        input: &RiemannInput,
        keep_snapshots: bool,
    ) -> Result<(RiemannResponse, MicroTrace)> {
        let plan = self.plan(input)?;
        let mut chain = ParticleChain::riemann(
            input.left,
            input.right,
            self.config.n_particles,
            self.config.mass,
            self.params,
        )?;
        let grid = plan.grid;
        let span = grid.x_max() - grid.x_min();
        let margin = 0.5 * (1.0 - self.config.search_fraction) * span;
        let window = (grid.x_min() + margin, grid.x_max() - margin);
        let refine = 2.0 * grid.width();

        let mut trace = MicroTrace::default();
        let mut previous: Option<f64> = None;
        let bounds = self.bounds;
        chain.run(plan.dt, plan.t_end, plan.stride, |t, c| {
            let field = bin_fields(c, &grid);
            let search = InterfaceSearch {
                window: Some(window),
                previous,
                ..Default::default()
            };
            let coarse = detect_interface(&field, &search)?;
            let pos = locate_phase_boundary(c, coarse, refine, &bounds, plan.left_phase)?;
            previous = Some(pos);
            trace.track.push(t, pos);
            if keep_snapshots {
                trace.snapshots.push((t, field.clone()));
            }
            trace.final_field = Some(field);
            Ok(())
        })?;

        let field = trace
            .final_field
            .as_ref()
            .ok_or_else(|| Error::Extraction("no snapshot recorded".into()))?;
        let s = estimate_speed(&trace.track.tail(self.config.fit_fraction))?;
        let pos = *trace.track.positions.last().unwrap();
        let (left, right) = match self.config.extraction {
            Extraction::Bins => extract_states(field, pos, plan.window, plan.offset)?,
            Extraction::Particles => {
                extract_states_particles(&chain, pos, plan.window, plan.offset)?
            }
        };

        let right_phase = plan.left_phase.other();
        for (side, state, phase) in [("left", left, plan.left_phase), ("right", right, right_phase)] {
            if !self.bounds.is_admissible(1.0 / state.rho, phase) {
                return Err(Error::Extraction(format!(
                    "{side} plateau rho = {} is not an admissible {} state",
                    state.rho,
                    phase.as_str()
                )));
            }
        }
        let mut response = RiemannResponse::with_residuals(s, left, right, &self.params)?;
        response.flagged = response.rh_mass_residual > self.config.rh_bound;
        Ok((response, trace))
    }
}

/// Convenience wrapper around [`MicroSolver`].
pub fn solve_micro_riemann(
    input: &RiemannInput,
    config: &MicroConfig,
    params: &VdwParams,
) -> Result<RiemannResponse> {
    MicroSolver::new(*params, config.clone())?.solve(input)
}
