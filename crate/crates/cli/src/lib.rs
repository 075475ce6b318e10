//! Configuration, command implementations and CSV emission for the
//! `chainflow` binary.
//!
//! Every command takes a [`RunConfig`] and a writer for the human-readable
//! summary, so the same code paths serve the binary and the tests.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chainflow::macrosolver::{GatedModel, MacroConfig, MacroRun, MacroSolver};
use chainflow::microsolver::{MicroConfig, MicroSolver, RiemannInput, RiemannResponse};
use chainflow::surrogate::{GateConfig, Insertion, Sample, SampleSet, Surrogate};
use chainflow::{Error, FluidState, MaxwellStates, Result, VdwParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Environment variable capping parallel micro evaluations.
pub const THREADS_ENV: &str = "CHAINFLOW_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EosConfig {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub t_ref: f64,
}

impl Default for EosConfig {
    fn default() -> Self {
        let p = VdwParams::calibrated();
        Self {
            a: p.a,
            b: p.b,
            r: p.r,
            t_ref: p.t_ref,
        }
    }
}

impl EosConfig {
    pub fn params(&self) -> Result<VdwParams> {
        VdwParams::new(self.a, self.b, self.r, self.t_ref)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub out_dir: PathBuf,
    /// Sample store. Loaded before and written after `macro` and
    /// `sample-table`. Without it `macro` starts empty and writes its samples
    /// to `out_dir/samples.csv`.
    pub store: Option<PathBuf>,
    /// Write averaged micro fields and the interface track.
    pub dump_fields: bool,
    /// Runs have no random seeds and are always deterministic; `false` is
    /// rejected. Timing columns of `report.csv` are the only varying output.
    pub deterministic: bool,
    /// `[rho_L, v_L, rho_R, v_R]` for `micro`.
    pub micro_input: [f64; 4],
    /// Inputs for `sample-table`, same layout as `micro_input`.
    pub sample_inputs: Vec<[f64; 4]>,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            store: None,
            dump_fields: false,
            deterministic: true,
            micro_input: [1.9, 0.0, 0.3, 0.0],
            sample_inputs: Vec::new(),
        }
    }
}

/// Whole-run configuration; every field has a default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub eos: EosConfig,
    pub micro: MicroConfig,
    pub gate: GateConfig,
    #[serde(rename = "macro")]
    pub macro_: MacroConfig,
    pub io: IoConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks the nested configs. EOS parameters are checked without
    /// requiring a two-phase regime so that `maxwell` can report that case.
    pub fn validate(&self) -> Result<()> {
        self.eos.params()?;
        self.micro.validate()?;
        self.gate.validate()?;
        self.macro_.validate()?;
        if !self.io.deterministic {
            return Err(Error::InvalidParameter(
                "deterministic = false is not supported; runs have no seeds".into(),
            ));
        }
        for x in std::iter::once(&self.io.micro_input).chain(&self.io.sample_inputs) {
            if x.iter().any(|v| !v.is_finite()) || x[0] <= 0.0 || x[2] <= 0.0 {
                return Err(Error::InvalidInput(format!("bad Riemann input {x:?}")));
            }
        }
        Ok(())
    }
}

/// `[rho_L, v_L, rho_R, v_R]` to a conservative Riemann input.
pub fn riemann_input(x: &[f64; 4]) -> RiemannInput {
    RiemannInput::new(
        FluidState::from_velocity(x[0], x[1]),
        FluidState::from_velocity(x[2], x[3]),
    )
}

fn create_out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.io.out_dir)?;
    Ok(&cfg.io.out_dir)
}

fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(BufWriter<File>) -> Result<()>,
{
    body(BufWriter::new(File::create(path)?))
}

pub fn cmd_maxwell<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<MaxwellStates> {
    let p = cfg.eos.params()?;
    let eq = p.maxwell_equilibrium()?;
    writeln!(out, "t_ref     {:.16e}", p.t_ref)?;
    writeln!(out, "tau_liq   {:.16e}", eq.tau_liq_eq)?;
    writeln!(out, "tau_vap   {:.16e}", eq.tau_vap_eq)?;
    writeln!(out, "rho_liq   {:.16e}", eq.rho_liq())?;
    writeln!(out, "rho_vap   {:.16e}", eq.rho_vap())?;
    writeln!(out, "p_star    {:.16e}", eq.p_star)?;
    Ok(eq)
}

fn print_response<W: Write>(out: &mut W, r: &RiemannResponse) -> Result<()> {
    writeln!(out, "s          {:.10e}", r.s)?;
    writeln!(out, "rho_L*     {:.10e}", r.left.rho)?;
    writeln!(out, "m_L*       {:.10e}", r.left.momentum)?;
    writeln!(out, "rho_R*     {:.10e}", r.right.rho)?;
    writeln!(out, "m_R*       {:.10e}", r.right.momentum)?;
    writeln!(out, "rh_mass    {:.3e}", r.rh_mass_residual)?;
    writeln!(out, "rh_mom     {:.3e}", r.rh_momentum_residual)?;
    if r.flagged {
        writeln!(out, "warning: mass jump residual above rh_bound")?;
    }
    Ok(())
}

/// Solves `io.micro_input`. With `dump_fields` writes `micro_track.csv`,
/// `micro_field.csv` (last snapshot) and `micro_field_NNNN.csv` per tracked
/// snapshot.
pub fn cmd_micro<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<RiemannResponse> {
    let p = cfg.eos.params()?;
    let solver = MicroSolver::new(p, cfg.micro.clone())?;
    let input = riemann_input(&cfg.io.micro_input);
    input.left_phase(solver.bounds())?;
    let (resp, trace) = solver.solve_traced(&input, cfg.io.dump_fields)?;
    print_response(out, &resp)?;
    if cfg.io.dump_fields {
        let dir = create_out_dir(cfg)?;
        write_file(&dir.join("micro_track.csv"), |w| trace.track.write_csv(w))?;
        if let Some(f) = &trace.final_field {
            write_file(&dir.join("micro_field.csv"), |w| f.write_csv(w))?;
        }
        for (k, (_, f)) in trace.snapshots.iter().enumerate() {
            write_file(&dir.join(format!("micro_field_{k:04}.csv")), |w| f.write_csv(w))?;
        }
    }
    Ok(resp)
}

fn load_surrogate(cfg: &RunConfig, p: &VdwParams) -> Result<Surrogate> {
    let empty = Surrogate::from_gate(&cfg.gate, p)?;
    let Some(path) = &cfg.io.store else {
        return Ok(empty);
    };
    let set = SampleSet::load(path, empty.scaling())?;
    Surrogate::train(
        set,
        *empty.scaling(),
        cfg.gate.kernel_width,
        cfg.gate.regularization,
        cfg.gate.baseline,
    )
}

fn store_path(cfg: &RunConfig) -> PathBuf {
    cfg.io
        .store
        .clone()
        .unwrap_or_else(|| cfg.io.out_dir.join("samples.csv"))
}

/// Runs the gated multiscale solver. Writes `macro_NNNN.csv` per snapshot,
/// `track.csv`, `report.csv` and the sample store.
pub fn cmd_macro<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<MacroRun> {
    let p = cfg.eos.params()?;
    let macro_solver = MacroSolver::new(p, cfg.macro_.clone())?;
    let micro = MicroSolver::new(p, cfg.micro.clone())?;
    let surrogate = load_surrogate(cfg, &p)?;
    let dir = create_out_dir(cfg)?.to_path_buf();

    let mut model = GatedModel::new(surrogate, cfg.gate.epsilon_model, |x: &RiemannInput| {
        micro.solve(x)
    });
    let run = macro_solver.run(macro_solver.initial_mesh()?, &mut model)?;
    let surrogate = model.into_surrogate();

    for (k, (_, mesh)) in run.snapshots.iter().enumerate() {
        write_file(&dir.join(format!("macro_{k:04}.csv")), |w| mesh.write_csv(w))?;
    }
    write_file(&dir.join("track.csv"), |w| run.write_track(w))?;
    write_file(&dir.join("report.csv"), |w| run.write_report(w))?;
    surrogate.samples().save(&store_path(cfg))?;

    let (bulk, micro_ms, sur_ms) = run.total_ms();
    writeln!(out, "steps          {}", run.report.len())?;
    writeln!(out, "micro_calls    {}", run.micro_calls())?;
    writeln!(out, "rejections     {}", run.rejections)?;
    writeln!(out, "samples        {}", surrogate.samples().len())?;
    if let Some(x) = run.track.last() {
        writeln!(out, "interface      {:.10e} at t = {:.6e}", x.1, x.0)?;
    }
    if let Some(s) = run.interface_speed(0.5 * cfg.macro_.t_end) {
        writeln!(out, "speed          {s:.10e}")?;
    }
    writeln!(out, "wall_ms        bulk {bulk:.1} micro {micro_ms:.1} surrogate {sur_ms:.1}")?;
    Ok(run)
}

/// Outcome counts of one `sample-table` batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TableSummary {
    pub appended: usize,
    pub replaced: usize,
    pub failed: usize,
}

fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidParameter(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

/// Evaluates `io.sample_inputs` in parallel and inserts the results into the
/// store in input order. A failed row is reported on `out` and skipped.
pub fn cmd_sample_table<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<TableSummary> {
    let p = cfg.eos.params()?;
    let micro = MicroSolver::new(p, cfg.micro.clone())?;
    let scaling = cfg.gate.resolve_scaling(&p)?;
    let path = store_path(cfg);
    let mut set = SampleSet::load(&path, &scaling)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let results: Vec<Result<Sample>> = pool.install(|| {
        cfg.io
            .sample_inputs
            .par_iter()
            .map(|x| {
                let input = riemann_input(x);
                input.left_phase(micro.bounds())?;
                let r = micro.solve(&input)?;
                Ok(Sample::from_response(&input, &r))
            })
            .collect()
    });

    let mut summary = TableSummary::default();
    for (x, r) in cfg.io.sample_inputs.iter().zip(results) {
        match r.and_then(|s| set.insert(s, &scaling)) {
            Ok(Insertion::Appended) => summary.appended += 1,
            Ok(Insertion::Replaced(_)) => summary.replaced += 1,
            Err(e) => {
                summary.failed += 1;
                writeln!(out, "row {x:?} failed: {e}")?;
            }
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    set.save(&path)?;
    writeln!(
        out,
        "appended {} replaced {} failed {} total {}",
        summary.appended,
        summary.replaced,
        summary.failed,
        set.len()
    )?;
    Ok(summary)
}

/// Process exit code for a failed command: 1 for bad input or
/// configuration, 2 for numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        1
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"gate": {"epsilon_model": 1.0}, "macro": {"n_cells": 50}}"#)
            .unwrap();
        assert_eq!(cfg.gate.epsilon_model, 1.0);
        assert_eq!(cfg.macro_.n_cells, 50);
        assert_eq!(cfg.micro, MicroConfig::default());
    }

    #[test]
    fn unknown_fields_and_bad_values_are_validation_errors() {
        for text in [
            r#"{"gate": {"epsilonmodel": 1.0}}"#,
            r#"{"gate": {"epsilon_model": -1.0}}"#,
            r#"{"io": {"deterministic": false}}"#,
            r#"{"io": {"micro_input": [0.0, 0.0, 0.3, 0.0]}}"#,
            r#"{"eos": {"b": -1.0}}"#,
            "not json",
        ] {
            let e = RunConfig::from_json(text).unwrap_err();
            assert_eq!(exit_code(&e), 1, "{text}: {e}");
        }
    }

    #[test]
    fn riemann_input_uses_velocities() {
        let x = riemann_input(&[2.0, 0.5, 0.3, -1.0]);
        assert_eq!(x.left.momentum, 1.0);
        assert_eq!(x.right.momentum, -0.3);
    }
}
