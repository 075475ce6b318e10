//! Front-tracking finite-volume solver for the 1D isothermal Euler system
//! with one sharp phase boundary.
//!
//! The phase boundary always sits on a mesh edge. That edge moves with the
//! speed `s` returned by the microscale model (through the surrogate), and
//! the flux across it is built from the starred states of the response. All
//! other edges are static and use a local Lax-Friedrichs flux. The two cells
//! next to the moving edge change width and are updated in geometric
//! conservation form; they are merged or split when they get too thin or
//! too wide.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::eos::{Phase, PhaseBounds, VdwParams};
use crate::error::{Error, Result};
use crate::microsolver::{RiemannInput, RiemannResponse};
use crate::state::FluidState;
use crate::surrogate::{GatedOutcome, Sample, Surrogate};

/// Physical flux `(rho v, rho v^2 + p(rho))`. Fails for densities in the
/// spinodal region or the hard core.
pub fn euler_flux(u: FluidState, params: &VdwParams) -> Result<[f64; 2]> {
    params.sound_speed_sq(u.rho)?;
    let p = params.pressure_of_density(u.rho)?;
    Ok([u.momentum, u.momentum * u.momentum / u.rho + p])
}

/// `|v| + c`.
pub fn wave_speed(u: FluidState, params: &VdwParams) -> Result<f64> {
    Ok(u.velocity().abs() + params.sound_speed_sq(u.rho)?.sqrt())
}

pub fn lax_friedrichs_flux(
    ul: FluidState,
    ur: FluidState,
    alpha: f64,
    params: &VdwParams,
) -> Result<[f64; 2]> {
    let fl = euler_flux(ul, params)?;
    let fr = euler_flux(ur, params)?;
    Ok([
        0.5 * (fl[0] + fr[0]) - 0.5 * alpha * (ur.rho - ul.rho),
        0.5 * (fl[1] + fr[1]) - 0.5 * alpha * (ur.momentum - ul.momentum),
    ])
}

/// Local Lax-Friedrichs flux with `alpha` the larger of the two wave speeds.
pub fn local_lf_flux(ul: FluidState, ur: FluidState, params: &VdwParams) -> Result<[f64; 2]> {
    let alpha = wave_speed(ul, params)?.max(wave_speed(ur, params)?);
    lax_friedrichs_flux(ul, ur, alpha, params)
}

/// Flux through the moving interface edge and its speed.
///
/// `g = (f(u*_L) + f(u*_R) - s (u*_L + u*_R)) / 2`, the mean of the two
/// moving-frame fluxes.
pub fn interface_flux(resp: &RiemannResponse, params: &VdwParams) -> Result<([f64; 2], f64)> {
    let s = resp.s;
    if !s.is_finite() {
        return Err(Error::NonFinite("interface speed"));
    }
    let fl = euler_flux(resp.left, params)?;
    let fr = euler_flux(resp.right, params)?;
    let g = [
        0.5 * (fl[0] + fr[0] - s * (resp.left.rho + resp.right.rho)),
        0.5 * (fl[1] + fr[1] - s * (resp.left.momentum + resp.right.momentum)),
    ];
    Ok((g, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Mirror ghost cell with negated momentum.
    Reflecting,
    /// Fixed ghost state.
    Inflow(FluidState),
}

impl Boundary {
    fn ghost(&self, inner: FluidState) -> FluidState {
        match *self {
            Boundary::Reflecting => FluidState::new(inner.rho, -inner.momentum),
            Boundary::Inflow(u) => u,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontMesh {
    edges: Vec<f64>,
    states: Vec<FluidState>,
    phases: Vec<Phase>,
    /// Index into `edges` of the phase boundary; `None` for a single-phase
    /// mesh.
    interface: Option<usize>,
    /// Reference cell width for merge and split decisions.
    h0: f64,
    /// Interface speed of the last step, used for the time step cap.
    last_speed: f64,
}

impl FrontMesh {
    pub fn new(
        edges: Vec<f64>,
        states: Vec<FluidState>,
        phases: Vec<Phase>,
        interface: Option<usize>,
        h0: f64,
    ) -> Result<Self> {
        let mesh = Self {
            edges,
            states,
            phases,
            interface,
            h0,
            last_speed: 0.0,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Uniform mesh on `[x_min, x_max]` with the state `left` on cells whose
    /// center is left of `x_jump` and `right` elsewhere. The phase boundary
    /// is the edge nearest to `x_jump` when the two states have different
    /// phases; otherwise the mesh is single-phase.
    pub fn riemann(
        x_min: f64,
        x_max: f64,
        n_cells: usize,
        x_jump: f64,
        left: FluidState,
        right: FluidState,
        bounds: &PhaseBounds,
    ) -> Result<Self> {
        if n_cells < 2 || !(x_min < x_max) {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 cells on a non-empty domain, got {n_cells} on [{x_min}, {x_max}]"
            )));
        }
        let h = (x_max - x_min) / n_cells as f64;
        let edges: Vec<f64> = (0..=n_cells)
            .map(|j| if j == n_cells { x_max } else { x_min + j as f64 * h })
            .collect();
        let k = ((x_jump - x_min) / h).round().clamp(0.0, n_cells as f64) as usize;
        let phase_of = |u: &FluidState| {
            bounds.classify_density(u.rho).ok_or_else(|| {
                Error::InvalidInput(format!("initial density {} is not admissible", u.rho))
            })
        };
        let (pl, pr) = (phase_of(&left)?, phase_of(&right)?);
        let states: Vec<FluidState> = (0..n_cells).map(|j| if j < k { left } else { right }).collect();
        let phases: Vec<Phase> = (0..n_cells).map(|j| if j < k { pl } else { pr }).collect();
        let interface = if pl != pr { Some(k) } else { None };
        Self::new(edges, states, phases, interface, h)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        let bad = |m: String| Err(Error::InvalidInput(m));
        if n < 2 || self.edges.len() != n + 1 || self.phases.len() != n {
            return bad(format!(
                "mesh needs n >= 2 cells with n + 1 edges and n phase labels, got {} edges, {} states, {} labels",
                self.edges.len(),
                n,
                self.phases.len()
            ));
        }
        if !self.edges.windows(2).all(|w| w[0] < w[1]) {
            return bad("mesh edges must be strictly increasing".into());
        }
        if !(self.h0 > 0.0) {
            return bad(format!("reference width must be positive, got {}", self.h0));
        }
        match self.interface {
            Some(k) => {
                if k == 0 || k >= n {
                    return bad(format!("interface edge {k} is not interior"));
                }
                let (pl, pr) = (self.phases[0], self.phases[k]);
                if pl == pr
                    || !self.phases[..k].iter().all(|&p| p == pl)
                    || !self.phases[k..].iter().all(|&p| p == pr)
                {
                    return bad(format!("phase labels must change exactly at edge {k}"));
                }
            }
            None => {
                if !self.phases.iter().all(|&p| p == self.phases[0]) {
                    return bad("single-phase mesh with mixed labels".into());
                }
            }
        }
        Ok(())
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn states(&self) -> &[FluidState] {
        &self.states
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn interface_edge(&self) -> Option<usize> {
        self.interface
    }

    pub fn interface_position(&self) -> Option<f64> {
        self.interface.map(|k| self.edges[k])
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn last_speed(&self) -> f64 {
        self.last_speed
    }

    pub fn set_last_speed(&mut self, s: f64) {
        self.last_speed = s;
    }

    pub fn n_cells(&self) -> usize {
        self.states.len()
    }

    pub fn width(&self, j: usize) -> f64 {
        self.edges[j + 1] - self.edges[j]
    }

    pub fn center(&self, j: usize) -> f64 {
        0.5 * (self.edges[j] + self.edges[j + 1])
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.n_cells())
            .map(|j| self.width(j) * self.states[j].rho)
            .sum()
    }

    pub fn total_momentum(&self) -> f64 {
        (0..self.n_cells())
            .map(|j| self.width(j) * self.states[j].momentum)
            .sum()
    }

    /// Microscale input built from the two cells next to the interface.
    pub fn interface_input(&self) -> Option<RiemannInput> {
        self.interface
            .map(|k| RiemannInput::new(self.states[k - 1], self.states[k]))
    }

    /// Writes `x_center,width,rho,v,phase`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x_center", "width", "rho", "v", "phase"])?;
        for j in 0..self.n_cells() {
            w.write_record([
                format!("{:.16e}", self.center(j)),
                format!("{:.16e}", self.width(j)),
                format!("{:.16e}", self.states[j].rho),
                format!("{:.16e}", self.states[j].velocity()),
                self.phases[j].as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn merge(&mut self, a: usize) {
        // Cells a and a+1 become one; the edge between them is dropped.
        let (wa, wb) = (self.width(a), self.width(a + 1));
        let w = wa + wb;
        let (ua, ub) = (self.states[a], self.states[a + 1]);
        self.states[a] = FluidState::new(
            (wa * ua.rho + wb * ub.rho) / w,
            (wa * ua.momentum + wb * ub.momentum) / w,
        );
        self.states.remove(a + 1);
        self.phases.remove(a + 1);
        self.edges.remove(a + 1);
        if let Some(k) = self.interface.as_mut() {
            if *k > a + 1 {
                *k -= 1;
            }
        }
    }

    fn split(&mut self, a: usize) {
        let mid = self.center(a);
        self.edges.insert(a + 1, mid);
        self.states.insert(a + 1, self.states[a]);
        self.phases.insert(a + 1, self.phases[a]);
        if let Some(k) = self.interface.as_mut() {
            if *k > a {
                *k += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    /// Initial jump position.
    pub x_jump: f64,
    pub left_state: FluidState,
    pub right_state: FluidState,
    pub cfl: f64,
    pub t_end: f64,
    pub left_boundary: Boundary,
    pub right_boundary: Boundary,
    /// Steps between stored snapshots; the initial and final meshes are
    /// always stored.
    pub output_stride: usize,
    pub max_rejections: usize,
    /// Merge an interface cell thinner than this fraction of `h0`.
    pub merge_fraction: f64,
    /// Split an interface cell wider than this fraction of `h0`.
    pub split_fraction: f64,
}

impl Default for MacroConfig {
    fn default() -> Self {
        Self {
            x_min: -1.0,
            x_max: 1.0,
            n_cells: 200,
            x_jump: 0.0,
            left_state: FluidState::new(2.0, 0.0),
            right_state: FluidState::new(0.320_334_870_751_991_1, 0.0),
            cfl: 0.5,
            t_end: 0.5,
            left_boundary: Boundary::Reflecting,
            right_boundary: Boundary::Reflecting,
            output_stride: 10,
            max_rejections: 5,
            merge_fraction: 0.3,
            split_fraction: 1.7,
        }
    }
}

impl MacroConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return bad(format!("need x_min < x_max, got [{}, {}]", self.x_min, self.x_max));
        }
        if self.n_cells < 4 {
            return bad(format!("n_cells must be >= 4, got {}", self.n_cells));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return bad(format!("cfl must lie in (0, 1), got {}", self.cfl));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if self.output_stride == 0 {
            return bad("output_stride must be positive".into());
        }
        if !(self.merge_fraction > 0.0
            && self.merge_fraction < 0.5
            && self.split_fraction > 1.0
            && self.split_fraction < 2.0)
        {
            return bad(format!(
                "need 0 < merge_fraction < 0.5 and 1 < split_fraction < 2, got {} and {}",
                self.merge_fraction, self.split_fraction
            ));
        }
        for (name, u) in [("left_state", self.left_state), ("right_state", self.right_state)] {
            if !(u.rho > 0.0 && u.is_finite()) {
                return bad(format!("{name} needs a positive finite density, got {u:?}"));
            }
        }
        Ok(())
    }

    pub fn initial_mesh(&self, bounds: &PhaseBounds) -> Result<FrontMesh> {
        FrontMesh::riemann(
            self.x_min,
            self.x_max,
            self.n_cells,
            self.x_jump,
            self.left_state,
            self.right_state,
            bounds,
        )
    }
}

/// Microscale response through the distance-gated surrogate, with call
/// counting and timing.
pub struct GatedModel<F> {
    pub surrogate: Surrogate,
    pub epsilon_model: f64,
    oracle: F,
    pub micro_calls: usize,
    pub micro_seconds: f64,
    pub surrogate_seconds: f64,
}

impl<F> GatedModel<F>
where
    F: FnMut(&RiemannInput) -> Result<RiemannResponse>,
{
    pub fn new(surrogate: Surrogate, epsilon_model: f64, oracle: F) -> Self {
        Self {
            surrogate,
            epsilon_model,
            oracle,
            micro_calls: 0,
            micro_seconds: 0.0,
            surrogate_seconds: 0.0,
        }
    }

    pub fn into_surrogate(self) -> Surrogate {
        self.surrogate
    }

    pub fn evaluate(&mut self, input: &RiemannInput) -> Result<(RiemannResponse, GatedOutcome)> {
        let start = Instant::now();
        let mut micro_time = 0.0;
        let mut called = false;
        let mut response = None;
        let oracle = &mut self.oracle;
        let outcome = self.surrogate.evaluate_gated(&input.to_array(), self.epsilon_model, |x| {
            called = true;
            let t0 = Instant::now();
            let input = RiemannInput::from_array(*x);
            let r = oracle(&input);
            micro_time = t0.elapsed().as_secs_f64();
            let r = r?;
            response = Some(r);
            Ok(Sample::from_response(&input, &r))
        });
        self.micro_calls += usize::from(called);
        self.micro_seconds += micro_time;
        self.surrogate_seconds += start.elapsed().as_secs_f64() - micro_time;
        let outcome = outcome?;
        let resp = match response {
            Some(r) => r,
            None => RiemannResponse::from_array(outcome.y),
        };
        Ok((resp, outcome))
    }
}

/// What one accepted step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub rejections: usize,
    pub sampled: bool,
    pub score: f64,
    pub speed: f64,
}

#[derive(Debug, Clone)]
pub struct MacroSolver {
    params: VdwParams,
    bounds: PhaseBounds,
    config: MacroConfig,
}

impl MacroSolver {
    pub fn new(params: VdwParams, config: MacroConfig) -> Result<Self> {
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

    pub fn bounds(&self) -> &PhaseBounds {
        &self.bounds
    }

    pub fn config(&self) -> &MacroConfig {
        &self.config
    }

    pub fn initial_mesh(&self) -> Result<FrontMesh> {
        self.config.initial_mesh(&self.bounds)
    }

    /// CFL time step, also capped so that the interface (moving at the last
    /// known speed) cannot cross a neighboring edge.
    pub fn cfl_dt(&self, mesh: &FrontMesh) -> Result<f64> {
        cfl_dt(mesh, self.config.cfl, &self.params)
    }

    /// Advances `mesh` by at most `dt`. Returns the step actually taken,
    /// which is shorter when the interface speed or a rejected update
    /// demands it.
    pub fn step<F>(&self, mesh: &mut FrontMesh, dt: f64, model: &mut GatedModel<F>) -> Result<StepInfo>
    where
        F: FnMut(&RiemannInput) -> Result<RiemannResponse>,
    {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let moving = match mesh.interface_input() {
            Some(input) => {
                let (resp, outcome) = model.evaluate(&input)?;
                let (g, s) = interface_flux(&resp, &self.params)?;
                Some((g, s, outcome))
            }
            None => None,
        };
        let mut dt = dt;
        if let (Some((_, s, _)), Some(k)) = (&moving, mesh.interface) {
            let room = self.config.cfl * mesh.width(k - 1).min(mesh.width(k));
            if s.abs() * dt > room {
                dt = room / s.abs();
            }
        }
        let fluxes = self.edge_fluxes(mesh, moving.as_ref().map(|m| m.0))?;
        let speed = moving.as_ref().map_or(0.0, |m| m.1);

        let mut attempt = 0;
        loop {
            match self.update(mesh, &fluxes, speed, dt) {
                Ok(next) => {
                    *mesh = next;
                    mesh.last_speed = speed;
                    self.maintain(mesh);
                    return Ok(StepInfo {
                        dt,
                        rejections: attempt,
                        sampled: moving.as_ref().is_some_and(|m| m.2.sampled),
                        score: moving.as_ref().map_or(f64::NAN, |m| m.2.score),
                        speed,
                    });
                }
                Err(reason) => {
                    attempt += 1;
                    if attempt > self.config.max_rejections {
                        return Err(Error::StepRejected {
                            attempts: attempt,
                            reason,
                        });
                    }
                    dt *= 0.5;
                }
            }
        }
    }

    fn edge_fluxes(&self, mesh: &FrontMesh, interface: Option<[f64; 2]>) -> Result<Vec<[f64; 2]>> {
        let n = mesh.n_cells();
        let u = &mesh.states;
        let mut fluxes = Vec::with_capacity(n + 1);
        let left_ghost = self.config.left_boundary.ghost(u[0]);
        fluxes.push(local_lf_flux(left_ghost, u[0], &self.params)?);
        for k in 1..n {
            if mesh.interface == Some(k) {
                fluxes.push(interface.expect("interface flux missing"));
            } else {
                fluxes.push(local_lf_flux(u[k - 1], u[k], &self.params)?);
            }
        }
        let right_ghost = self.config.right_boundary.ghost(u[n - 1]);
        fluxes.push(local_lf_flux(u[n - 1], right_ghost, &self.params)?);
        Ok(fluxes)
    }

    fn update(
        &self,
        mesh: &FrontMesh,
        fluxes: &[[f64; 2]],
        s: f64,
        dt: f64,
    ) -> std::result::Result<FrontMesh, String> {
        let mut next = mesh.clone();
        let n = mesh.n_cells();
        if let Some(k) = mesh.interface {
            next.edges[k] = mesh.edges[k] + s * dt;
            if !(next.edges[k] > next.edges[k - 1] && next.edges[k] < next.edges[k + 1]) {
                return Err(format!("interface edge would leave its neighbors at dt = {dt}"));
            }
        }
        for j in 0..n {
            let (fl, fr) = (fluxes[j], fluxes[j + 1]);
            let u = mesh.states[j];
            let moves = mesh.interface.is_some_and(|k| j + 1 == k || j == k);
            let new = if moves {
                let (w_old, w_new) = (mesh.width(j), next.width(j));
                FluidState::new(
                    (w_old * u.rho + dt * (fl[0] - fr[0])) / w_new,
                    (w_old * u.momentum + dt * (fl[1] - fr[1])) / w_new,
                )
            } else {
                let w = mesh.width(j);
                FluidState::new(
                    u.rho - dt / w * (fr[0] - fl[0]),
                    u.momentum - dt / w * (fr[1] - fl[1]),
                )
            };
            if !new.is_finite() || !self.bounds.is_admissible(1.0 / new.rho, mesh.phases[j]) {
                return Err(format!(
                    "cell {j} would leave the {} phase: rho = {}, momentum = {} at dt = {dt}",
                    mesh.phases[j].as_str(),
                    new.rho,
                    new.momentum
                ));
            }
            next.states[j] = new;
        }
        Ok(next)
    }

    fn maintain(&self, mesh: &mut FrontMesh) {
        let Some(k) = mesh.interface else { return };
        let lo = self.config.merge_fraction * mesh.h0;
        let hi = self.config.split_fraction * mesh.h0;
        // Left neighbor of the interface is cell k-1, right neighbor cell k.
        if mesh.width(k) < lo && k + 1 < mesh.n_cells() {
            mesh.merge(k);
        } else if mesh.width(k) > hi {
            mesh.split(k);
        }
        let k = mesh.interface.expect("interface kept");
        if mesh.width(k - 1) < lo && k >= 2 {
            mesh.merge(k - 2);
        } else if mesh.width(k - 1) > hi {
            mesh.split(k - 1);
        }
    }

    /// Advances from `initial` to the configured end time.
    pub fn run<F>(&self, initial: FrontMesh, model: &mut GatedModel<F>) -> Result<MacroRun>
    where
        F: FnMut(&RiemannInput) -> Result<RiemannResponse>,
    {
        initial.validate()?;
        let mut mesh = initial;
        let mut t = 0.0;
        let mut out = MacroRun::default();
        out.snapshots.push((0.0, mesh.clone()));
        if let Some(x) = mesh.interface_position() {
            out.track.push((0.0, x));
        }
        let t_end = self.config.t_end;
        let mut step = 0usize;
        while t < t_end {
            let start = Instant::now();
            let (micro0, sur0) = (model.micro_seconds, model.surrogate_seconds);
            let dt_cfl = self.cfl_dt(&mesh)?;
            let dt = dt_cfl.min(t_end - t);
            let info = self.step(&mut mesh, dt, model)?;
            t = if info.dt == t_end - t { t_end } else { t + info.dt };
            step += 1;
            let micro = model.micro_seconds - micro0;
            let sur = model.surrogate_seconds - sur0;
            let total = start.elapsed().as_secs_f64();
            out.report.push(StepRecord {
                step,
                t,
                micro_calls_total: model.micro_calls,
                score_min: info.score,
                wall_ms_bulk: 1e3 * (total - micro - sur).max(0.0),
                wall_ms_micro: 1e3 * micro,
                wall_ms_surrogate: 1e3 * sur,
            });
            out.rejections += info.rejections;
            if let Some(x) = mesh.interface_position() {
                out.track.push((t, x));
            }
            if step % self.config.output_stride == 0 || t >= t_end {
                out.snapshots.push((t, mesh.clone()));
            }
        }
        out.final_mesh = Some(mesh);
        Ok(out)
    }
}

/// CFL time step for `mesh`; see [`MacroSolver::cfl_dt`].
pub fn cfl_dt(mesh: &FrontMesh, cfl: f64, params: &VdwParams) -> Result<f64> {
    let mut dt = f64::INFINITY;
    for j in 0..mesh.n_cells() {
        let c = wave_speed(mesh.states[j], params)?;
        if c > 0.0 {
            dt = dt.min(mesh.width(j) / c);
        }
    }
    dt *= cfl;
    if let Some(k) = mesh.interface {
        let s = mesh.last_speed.abs();
        if s > 0.0 {
            dt = dt.min(cfl * mesh.width(k - 1).min(mesh.width(k)) / s);
        }
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::NonFinite("CFL time step"));
    }
    Ok(dt)
}

/// One row of the run report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub micro_calls_total: usize,
    /// Gate score of this step's interface evaluation (`NaN` without an
    /// interface).
    pub score_min: f64,
    pub wall_ms_bulk: f64,
    pub wall_ms_micro: f64,
    pub wall_ms_surrogate: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MacroRun {
    pub snapshots: Vec<(f64, FrontMesh)>,
    /// `(t, interface position)` after every step.
    pub track: Vec<(f64, f64)>,
    pub report: Vec<StepRecord>,
    pub rejections: usize,
    pub final_mesh: Option<FrontMesh>,
}

impl MacroRun {
    pub fn micro_calls(&self) -> usize {
        self.report.last().map_or(0, |r| r.micro_calls_total)
    }

    pub fn total_ms(&self) -> (f64, f64, f64) {
        self.report.iter().fold((0.0, 0.0, 0.0), |a, r| {
            (a.0 + r.wall_ms_bulk, a.1 + r.wall_ms_micro, a.2 + r.wall_ms_surrogate)
        })
    }

    /// Least-squares interface speed over the samples with `t >= t_from`.
    pub fn interface_speed(&self, t_from: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.track.iter().copied().filter(|p| p.0 >= t_from).collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let xm = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for &(t, x) in &pts {
            sxy += (t - tm) * (x - xm);
            sxx += (t - tm) * (t - tm);
        }
        (sxx > 0.0).then(|| sxy / sxx)
    }

    pub fn write_report<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "t",
            "micro_calls_total",
            "score_min",
            "wall_ms_bulk",
            "wall_ms_micro",
            "wall_ms_surrogate",
        ])?;
        for r in &self.report {
            w.write_record([
                r.step.to_string(),
                format!("{:.16e}", r.t),
                r.micro_calls_total.to_string(),
                format!("{:.16e}", r.score_min),
                format!("{:.6}", r.wall_ms_bulk),
                format!("{:.6}", r.wall_ms_micro),
                format!("{:.6}", r.wall_ms_surrogate),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_track<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "pos"])?;
        for &(t, x) in &self.track {
            w.write_record([format!("{t:.16e}"), format!("{x:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{Baseline, InputScaling};
    use approx::assert_relative_eq;

    fn params() -> VdwParams {
        VdwParams::calibrated()
    }

    /// Oracle that answers with "no wave": `s = 0`, starred states equal to
    /// the inputs.
    fn exact_equilibrium(x: &RiemannInput) -> Result<RiemannResponse> {
        RiemannResponse::with_residuals(0.0, x.left, x.right, &params())
    }

    fn model<F>(oracle: F) -> GatedModel<F>
    where
        F: FnMut(&RiemannInput) -> Result<RiemannResponse>,
    {
        let p = params();
        let sur = Surrogate::empty(InputScaling::from_params(&p, 1.0).unwrap(), 10.0, 1e-10, Baseline::Mean)
            .unwrap();
        GatedModel::new(sur, 0.5, oracle)
    }

    #[test]
    fn euler_flux_values() {
        let p = params();
        let u = FluidState::new(0.3, 0.0);
        assert_eq!(euler_flux(u, &p).unwrap(), [0.0, p.pressure(1.0 / 0.3).unwrap()]);
        // tau = 1 lies in the spinodal region of the calibrated EOS.
        assert!(euler_flux(FluidState::new(1.0, 1.0), &p).is_err());
        let rt = 8.0 / 3.0 * p.t_ref;
        let u = FluidState::new(0.25, 0.25);
        let f = euler_flux(u, &p).unwrap();
        assert_relative_eq!(f[0], 0.25);
        assert_relative_eq!(f[1], 0.25 + rt / (4.0 - 1.0 / 3.0) - 3.0 / 16.0, epsilon = 1e-14);
    }

    #[test]
    fn euler_flux_galilean_shift() {
        let p = params();
        let (rho, v, w) = (1.9, 0.1, 0.3);
        let f0 = euler_flux(FluidState::from_velocity(rho, v), &p).unwrap();
        let f1 = euler_flux(FluidState::from_velocity(rho, v + w), &p).unwrap();
        assert_relative_eq!(f1[0] - f0[0], rho * w, epsilon = 1e-14);
        assert_relative_eq!(f1[1] - f0[1], rho * (2.0 * v * w + w * w), epsilon = 1e-13);
    }

    #[test]
    fn lf_consistency_and_symmetry() {
        let p = params();
        let u = FluidState::new(0.3, 0.05);
        assert_eq!(lax_friedrichs_flux(u, u, 2.0, &p).unwrap(), euler_flux(u, &p).unwrap());
        let a = FluidState::new(0.3, 0.05);
        let b = FluidState::new(0.25, -0.02);
        let fab = lax_friedrichs_flux(a, b, 1.5, &p).unwrap();
        let fba = lax_friedrichs_flux(b, a, 1.5, &p).unwrap();
        let (fa, fb) = (euler_flux(a, &p).unwrap(), euler_flux(b, &p).unwrap());
        for c in 0..2 {
            let central = 0.5 * (fa[c] + fb[c]);
            assert_relative_eq!(fab[c] - central, -(fba[c] - central), epsilon = 1e-15);
        }
    }

    #[test]
    fn interface_flux_cases() {
        let p = params();
        let u = FluidState::new(1.85, 0.1);
        let r = RiemannResponse::from_array([0.0, u.rho, u.momentum, u.rho, u.momentum]);
        let (g, s) = interface_flux(&r, &p).unwrap();
        assert_eq!(s, 0.0);
        let f = euler_flux(u, &p).unwrap();
        assert_relative_eq!(g[0], f[0], epsilon = 1e-15);
        assert_relative_eq!(g[1], f[1], epsilon = 1e-15);

        let eq = p.maxwell_equilibrium().unwrap();
        let r = RiemannResponse::from_array([0.0, eq.rho_liq(), 0.0, eq.rho_vap(), 0.0]);
        let (g, _) = interface_flux(&r, &p).unwrap();
        assert_eq!(g[0], 0.0);
        assert_relative_eq!(g[1], eq.p_star, epsilon = 1e-9);
    }

    #[test]
    fn interface_flux_under_exact_jump_conditions() {
        // A jump moving at s with the same velocity on both sides and equal
        // pressures satisfies both jump conditions.
        let p = params();
        let eq = p.maxwell_equilibrium().unwrap();
        let s = 0.2;
        let l = FluidState::from_velocity(eq.rho_liq(), s);
        let r = FluidState::from_velocity(eq.rho_vap(), s);
        let resp = RiemannResponse::with_residuals(s, l, r, &p).unwrap();
        assert!(resp.rh_mass_residual < 1e-15 && resp.rh_momentum_residual < 1e-9);
        let (g, _) = interface_flux(&resp, &p).unwrap();
        let (fl, fr) = (euler_flux(l, &p).unwrap(), euler_flux(r, &p).unwrap());
        assert_relative_eq!(g[0], fl[0] - s * l.rho, epsilon = 1e-12);
        assert_relative_eq!(g[0], fr[0] - s * r.rho, epsilon = 1e-12);
        assert_relative_eq!(g[1], fl[1] - s * l.momentum, epsilon = 1e-9);
        assert_relative_eq!(g[1], fr[1] - s * r.momentum, epsilon = 1e-9);
    }

    #[test]
    fn cfl_dt_cases() {
        let p = params();
        let b = p.spinodal_bounds().unwrap();
        let eq = p.maxwell_equilibrium().unwrap();
        let vap = FluidState::new(eq.rho_vap(), 0.0);
        let mesh = FrontMesh::riemann(0.0, 1.0, 50, 2.0, vap, vap, &b).unwrap();
        let c = p.sound_speed_sq(eq.rho_vap()).unwrap().sqrt();
        assert_relative_eq!(cfl_dt(&mesh, 0.5, &p).unwrap(), 0.5 * 0.02 / c, epsilon = 1e-14);
        let fine = FrontMesh::riemann(0.0, 1.0, 100, 2.0, vap, vap, &b).unwrap();
        assert_relative_eq!(
            cfl_dt(&fine, 0.5, &p).unwrap(),
            0.5 * cfl_dt(&mesh, 0.5, &p).unwrap(),
            epsilon = 1e-14
        );

        let liq = FluidState::new(eq.rho_liq(), 0.0);
        let mut two = FrontMesh::riemann(0.0, 1.0, 50, 0.5, liq, vap, &b).unwrap();
        let plain = cfl_dt(&two, 0.5, &p).unwrap();
        two.set_last_speed(100.0);
        let capped = cfl_dt(&two, 0.5, &p).unwrap();
        assert!(capped < plain);
        assert_relative_eq!(capped, 0.5 * 0.02 / 100.0, epsilon = 1e-14);
    }

    #[test]
    fn riemann_mesh_places_interface() {
        let p = params();
        let b = p.spinodal_bounds().unwrap();
        let m = FrontMesh::riemann(
            -1.0,
            1.0,
            20,
            0.0,
            FluidState::new(2.0, 0.0),
            FluidState::new(0.3, 0.0),
            &b,
        )
        .unwrap();
        assert_eq!(m.interface_edge(), Some(10));
        assert_eq!(m.interface_position(), Some(0.0));
        assert_eq!(m.phases()[9], Phase::Liquid);
        assert_eq!(m.phases()[10], Phase::Vapor);
        let bad = FrontMesh::riemann(-1.0, 1.0, 20, 0.0, FluidState::new(1.0, 0.0), FluidState::new(0.3, 0.0), &b);
        assert!(bad.is_err());
    }

    #[test]
    fn equilibrium_wall_stays_put() {
        let p = params();
        let eq = p.maxwell_equilibrium().unwrap();
        let cfg = MacroConfig {
            n_cells: 40,
            left_state: FluidState::new(eq.rho_liq(), 0.0),
            right_state: FluidState::new(eq.rho_vap(), 0.0),
            t_end: 0.2,
            ..Default::default()
        };
        let solver = MacroSolver::new(p, cfg).unwrap();
        let mut mesh = solver.initial_mesh().unwrap();
        let mut m = model(exact_equilibrium);
        let before = mesh.clone();
        for _ in 0..20 {
            let dt = solver.cfl_dt(&mesh).unwrap();
            let info = solver.step(&mut mesh, dt, &mut m).unwrap();
            assert_eq!(info.rejections, 0);
        }
        assert_eq!(mesh.edges(), before.edges());
        for (a, b) in mesh.states().iter().zip(before.states()) {
            assert!((a.rho - b.rho).abs() < 1e-9 && a.momentum.abs() < 1e-9);
        }
        assert_eq!(m.micro_calls, 1);
    }

    #[test]
    fn moving_interface_conserves_mass_with_merges() {
        // Equilibrium interface translating with the fluid; the oracle answers
        // with the translated Maxwell states.
        let p = params();
        let eq = p.maxwell_equilibrium().unwrap();
        let s = 0.1;
        let cfg = MacroConfig {
            x_min: -4.0,
            x_max: 4.0,
            n_cells: 120,
            left_state: FluidState::from_velocity(eq.rho_liq(), s),
            right_state: FluidState::from_velocity(eq.rho_vap(), s),
            ..Default::default()
        };
        let solver = MacroSolver::new(p, cfg).unwrap();
        let mut mesh = solver.initial_mesh().unwrap();
        let oracle = move |_: &RiemannInput| {
            let pp = params();
            let eq = pp.maxwell_equilibrium().unwrap();
            let l = FluidState::from_velocity(eq.rho_liq(), s);
            let r = FluidState::from_velocity(eq.rho_vap(), s);
            RiemannResponse::with_residuals(s, l, r, &pp)
        };
        let mut m = model(oracle);
        let mass0 = mesh.total_mass();
        let x0 = mesh.interface_position().unwrap();
        let (mut splits, mut merges) = (0, 0);
        let mut t = 0.0;
        // Stops before the wall rarefaction reaches the interface.
        for _ in 0..100 {
            let n_before = mesh.n_cells();
            let dt = solver.cfl_dt(&mesh).unwrap();
            t += solver.step(&mut mesh, dt, &mut m).unwrap().dt;
            mesh.validate().unwrap();
            match mesh.n_cells().cmp(&n_before) {
                std::cmp::Ordering::Greater => splits += 1,
                std::cmp::Ordering::Less => merges += 1,
                std::cmp::Ordering::Equal => {}
            }
            let k = mesh.interface_edge().unwrap();
            assert!(mesh.width(k - 1) >= 0.3 * mesh.h0() && mesh.width(k) >= 0.3 * mesh.h0());
        }
        assert_relative_eq!(mesh.interface_position().unwrap(), x0 + s * t, epsilon = 1e-12);
        assert!(splits > 0 && merges > 0, "splits {splits}, merges {merges}");
        assert_relative_eq!(mesh.total_mass(), mass0, max_relative = 1e-12);
    }

    #[test]
    fn step_rejection_gives_up() {
        let p = params();
        let eq = p.maxwell_equilibrium().unwrap();
        let cfg = MacroConfig {
            n_cells: 20,
            left_state: FluidState::new(eq.rho_liq(), 0.0),
            right_state: FluidState::new(eq.rho_vap(), 0.0),
            ..Default::default()
        };
        let solver = MacroSolver::new(p, cfg).unwrap();
        let mut mesh = solver.initial_mesh().unwrap();
        // Huge mass flux into the vapor cell pushes it into the spinodal.
        let oracle = |x: &RiemannInput| {
            Ok(RiemannResponse::from_array([0.0, x.left.rho, 50.0, x.right.rho, 50.0]))
        };
        let mut m = model(oracle);
        let before = mesh.clone();
        let dt = solver.cfl_dt(&mesh).unwrap();
        let err = solver.step(&mut mesh, dt, &mut m).unwrap_err();
        assert!(matches!(err, Error::StepRejected { attempts: 6, .. }));
        assert_eq!(mesh, before);
    }

    #[test]
    fn zero_end_time_keeps_initial_snapshot_only() {
        let p = params();
        let cfg = MacroConfig {
            t_end: 0.0,
            ..Default::default()
        };
        let solver = MacroSolver::new(p, cfg).unwrap();
        let mesh = solver.initial_mesh().unwrap();
        let mut m = model(exact_equilibrium);
        let run = solver.run(mesh.clone(), &mut m).unwrap();
        assert_eq!(run.snapshots.len(), 1);
        assert_eq!(run.snapshots[0].1, mesh);
        assert!(run.report.is_empty());
        assert_eq!(m.micro_calls, 0);
    }

    #[test]
    fn config_validation() {
        assert!(MacroConfig::default().validate().is_ok());
        for cfg in [
            MacroConfig { cfl: 1.0, ..Default::default() },
            MacroConfig { t_end: -1.0, ..Default::default() },
            MacroConfig { x_max: -2.0, ..Default::default() },
            MacroConfig { output_stride: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn snapshot_csv_header() {
        let p = params();
        let b = p.spinodal_bounds().unwrap();
        let m = FrontMesh::riemann(0.0, 1.0, 4, 0.5, FluidState::new(2.0, 0.0), FluidState::new(0.3, 0.0), &b)
            .unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x_center,width,rho,v,phase");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].ends_with(",liquid") && lines[4].ends_with(",vapor"));
    }
}
