//! Kernel surrogate for the microscale response map, with a distance gate
//! that decides when a fresh microscale sample is drawn.
//!
//! Inputs are `x = (rho_L, m_L, rho_R, m_R)` and outputs
//! `y = (s, rho*_L, m*_L, rho*_R, m*_R)`. The model is
//! `f(x) = m(x) + sum_i alpha_i k(x_i, x)` with an RBF kernel on scaled
//! inputs, trained by kernel ridge regression on the residuals `y - m(x)`.
//! The trend `m` is zero, the output mean, or a ridge-regularized affine fit
//! ([`Baseline`]).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::eos::VdwParams;
use crate::error::{Error, Result};
use crate::microsolver::{RiemannInput, RiemannResponse};

/// Scaled distance under which two inputs count as the same sample.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

pub const STORE_HEADER: [&str; 11] = [
    "rho_L", "m_L", "rho_R", "m_R", "s", "rho_sL", "m_sL", "rho_sR", "m_sR", "rh_mass_res",
    "rh_mom_res",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: [f64; 4],
    pub y: [f64; 5],
    pub rh_mass_residual: f64,
    pub rh_momentum_residual: f64,
}

impl Sample {
    pub fn new(x: [f64; 4], y: [f64; 5]) -> Self {
        Self {
            x,
            y,
            rh_mass_residual: f64::NAN,
            rh_momentum_residual: f64::NAN,
        }
    }

    pub fn from_response(input: &RiemannInput, response: &RiemannResponse) -> Self {
        Self {
            x: input.to_array(),
            y: response.to_array(),
            rh_mass_residual: response.rh_mass_residual,
            rh_momentum_residual: response.rh_momentum_residual,
        }
    }

    pub fn response(&self) -> RiemannResponse {
        RiemannResponse {
            rh_mass_residual: self.rh_mass_residual,
            rh_momentum_residual: self.rh_momentum_residual,
            ..RiemannResponse::from_array(self.y)
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.x.iter().chain(&self.y).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("sample has non-finite entries".into()));
        }
        if !(self.x[0] > 0.0 && self.x[2] > 0.0 && self.y[1] > 0.0 && self.y[3] > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample densities must be positive: x = {:?}, y = {:?}",
                self.x, self.y
            )));
        }
        Ok(())
    }
}

/// Per-component divisors applied before any distance is taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputScaling(pub [f64; 4]);

impl InputScaling {
    pub fn unit() -> Self {
        Self([1.0; 4])
    }

    /// Densities by the liquid Maxwell density, momenta by that density times
    /// a reference flow speed `c_ref`.
    pub fn from_params(params: &VdwParams, c_ref: f64) -> Result<Self> {
        let eq = params.maxwell_equilibrium()?;
        let rho = eq.rho_liq();
        let s = Self([rho, rho * c_ref, rho, rho * c_ref]);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|&v| v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "input scaling must be positive, got {:?}",
                self.0
            )))
        }
    }

    pub fn apply(&self, x: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|k| x[k] / self.0[k])
    }

    pub fn distance_sq(&self, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        (0..4)
            .map(|k| {
                let d = (a[k] - b[k]) / self.0[k];
                d * d
            })
            .sum()
    }

    pub fn distance(&self, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        self.distance_sq(a, b).sqrt()
    }
}

/// RBF kernel `exp(-gamma ||a - b||^2)` on scaled inputs.
pub fn kernel(a: &[f64; 4], b: &[f64; 4], gamma_k: f64, scaling: &InputScaling) -> f64 {
    (-gamma_k * scaling.distance_sq(a, b)).exp()
}

/// Distance from `x` to the nearest stored input; infinite for an empty set.
pub fn score(x: &[f64; 4], set: &SampleSet, scaling: &InputScaling) -> f64 {
    set.samples
        .iter()
        .map(|s| scaling.distance(x, &s.x))
        .fold(f64::INFINITY, f64::min)
}

/// What [`SampleSet::insert`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insertion {
    Appended,
    Replaced(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Adds a sample; an existing sample within [`DUPLICATE_TOLERANCE`]
    /// (scaled) is replaced instead.
    pub fn insert(&mut self, sample: Sample, scaling: &InputScaling) -> Result<Insertion> {
        sample.validate()?;
        let hit = self
            .samples
            .iter()
            .position(|s| scaling.distance(&s.x, &sample.x) <= DUPLICATE_TOLERANCE);
        Ok(match hit {
            Some(i) => {
                self.samples[i] = sample;
                Insertion::Replaced(i)
            }
            None => {
                self.samples.push(sample);
                Insertion::Appended
            }
        })
    }

    pub fn read_csv<R: Read>(reader: R, scaling: &InputScaling) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().ne(STORE_HEADER.iter().copied()) {
            return Err(Error::InvalidInput(format!(
                "unexpected sample store header: {header:?}"
            )));
        }
        let mut set = Self::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let values: Vec<f64> = record
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| {
                    Error::InvalidInput(format!("sample store row {}: {e}", line + 1))
                })?;
            if values.len() != STORE_HEADER.len() {
                return Err(Error::InvalidInput(format!(
                    "sample store row {} has {} fields",
                    line + 1,
                    values.len()
                )));
            }
            let sample = Sample {
                x: std::array::from_fn(|k| values[k]),
                y: std::array::from_fn(|k| values[4 + k]),
                rh_mass_residual: values[9],
                rh_momentum_residual: values[10],
            };
            set.insert(sample, scaling)?;
        }
        Ok(set)
    }

    /// Writes every sample with 17 significant digits, which round-trips
    /// `f64` exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(STORE_HEADER)?;
        for s in &self.samples {
            w.write_record(
                s.x.iter()
                    .chain(&s.y)
                    .chain([&s.rh_mass_residual, &s.rh_momentum_residual])
                    .map(|v| format!("{v:.16e}")),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a store; a missing file gives an empty set.
    pub fn load(path: &Path, scaling: &InputScaling) -> Result<Self> {
        match std::fs::File::open(path) {
            Ok(f) => Self::read_csv(std::io::BufReader::new(f), scaling),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Trend the kernel expansion is added to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Plain expansion; predictions decay to zero away from the samples.
    Zero,
    /// Targets are centered on their mean; predictions decay to it.
    Mean,
    /// Mean plus a ridge-regularized linear fit in the scaled inputs.
    #[default]
    Affine,
}

/// Slope penalty of the affine trend, in scaled input units.
pub const TREND_RIDGE: f64 = 1e-3;

/// Default momentum normalization speed. Interface flows in the droplet
/// scenarios move at a few hundredths, far below the sound speed.
pub const DEFAULT_REFERENCE_SPEED: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Trend {
    x_mean: [f64; 4],
    y_mean: [f64; 5],
    /// `slopes[k][c]`: change of output `c` per unit of scaled input `k`.
    slopes: [[f64; 5]; 4],
}

impl Trend {
    fn fit(baseline: Baseline, samples: &[Sample], scaling: &InputScaling) -> Result<Self> {
        let mut t = Trend::default();
        if baseline == Baseline::Zero || samples.is_empty() {
            return Ok(t);
        }
        let n = samples.len() as f64;
        let xs: Vec<[f64; 4]> = samples.iter().map(|s| scaling.apply(&s.x)).collect();
        t.y_mean = std::array::from_fn(|c| samples.iter().map(|s| s.y[c]).sum::<f64>() / n);
        if baseline == Baseline::Mean {
            return Ok(t);
        }
        t.x_mean = std::array::from_fn(|k| xs.iter().map(|x| x[k]).sum::<f64>() / n);
        let mut a = nalgebra::Matrix4::<f64>::identity() * TREND_RIDGE;
        let mut b = nalgebra::SMatrix::<f64, 4, 5>::zeros();
        for (x, s) in xs.iter().zip(samples) {
            let dx: [f64; 4] = std::array::from_fn(|k| x[k] - t.x_mean[k]);
            for i in 0..4 {
                for j in 0..4 {
                    a[(i, j)] += dx[i] * dx[j];
                }
                for c in 0..5 {
                    b[(i, c)] += dx[i] * (s.y[c] - t.y_mean[c]);
                }
            }
        }
        let chol = a.cholesky().ok_or(Error::IllConditioned {
            samples: samples.len(),
        })?;
        let slopes = chol.solve(&b);
        t.slopes = std::array::from_fn(|k| std::array::from_fn(|c| slopes[(k, c)]));
        Ok(t)
    }

    fn eval(&self, scaled: &[f64; 4]) -> [f64; 5] {
        let mut y = self.y_mean;
        for k in 0..4 {
            let d = scaled[k] - self.x_mean[k];
            for c in 0..5 {
                y[c] += self.slopes[k][c] * d;
            }
        }
        y
    }
}

/// Sampling gate and regression settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub epsilon_model: f64,
    /// Kernel width `gamma_k`, in scaled units.
    pub kernel_width: f64,
    pub regularization: f64,
    /// Typical interface flow speed used to normalize momenta.
    pub reference_speed: f64,
    /// Explicit distance normalization; overrides `reference_speed`.
    pub input_scaling: Option<InputScaling>,
    pub baseline: Baseline,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            epsilon_model: 0.5,
            kernel_width: 10.0,
            regularization: 1e-10,
            reference_speed: DEFAULT_REFERENCE_SPEED,
            input_scaling: None,
            baseline: Baseline::Affine,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_model > 0.0 && self.epsilon_model.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon_model must be positive, got {}",
                self.epsilon_model
            )));
        }
        if !(self.kernel_width > 0.0 && self.kernel_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel_width must be positive, got {}",
                self.kernel_width
            )));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularization must be non-negative, got {}",
                self.regularization
            )));
        }
        if !(self.reference_speed > 0.0 && self.reference_speed.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "reference_speed must be positive, got {}",
                self.reference_speed
            )));
        }
        if let Some(s) = &self.input_scaling {
            s.validate()?;
        }
        Ok(())
    }

    pub fn resolve_scaling(&self, params: &VdwParams) -> Result<InputScaling> {
        match self.input_scaling {
            Some(s) => Ok(s),
            None => InputScaling::from_params(params, self.reference_speed),
        }
    }
}

/// Result of one gated evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatedOutcome {
    pub y: [f64; 5],
    pub sampled: bool,
    pub score: f64,
}

/// Sample set plus the regression coefficients trained on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    samples: SampleSet,
    scaling: InputScaling,
    kernel_width: f64,
    regularization: f64,
    baseline: Baseline,
    trend: Trend,
    /// One row per sample, one column per output component.
    coefficients: Vec<[f64; 5]>,
    trained_on: usize,
}

impl Surrogate {
    /// Surrogate with no samples; every gated evaluation will sample.
    pub fn empty(
        scaling: InputScaling,
        kernel_width: f64,
        regularization: f64,
        baseline: Baseline,
    ) -> Result<Self> {
        scaling.validate()?;
        if !(kernel_width > 0.0) || !(regularization >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need kernel_width > 0 and regularization >= 0, got {kernel_width}, {regularization}"
            )));
        }
        Ok(Self {
            samples: SampleSet::new(),
            scaling,
            kernel_width,
            regularization,
            baseline,
            trend: Trend::default(),
            coefficients: Vec::new(),
            trained_on: 0,
        })
    }

    pub fn from_gate(gate: &GateConfig, params: &VdwParams) -> Result<Self> {
        gate.validate()?;
        Self::empty(
            gate.resolve_scaling(params)?,
            gate.kernel_width,
            gate.regularization,
            gate.baseline,
        )
    }

    /// Fits the coefficients to `samples`. One Cholesky factorization of
    /// `K + lambda I` serves all five outputs.
    pub fn train(
        samples: SampleSet,
        scaling: InputScaling,
        kernel_width: f64,
        regularization: f64,
        baseline: Baseline,
    ) -> Result<Self> {
        let mut s = Self::empty(scaling, kernel_width, regularization, baseline)?;
        s.samples = samples;
        s.fit()?;
        Ok(s)
    }

    fn fit(&mut self) -> Result<()> {
        let n = self.samples.len();
        if n == 0 {
            self.coefficients.clear();
            self.trained_on = 0;
            return Ok(());
        }
        let pts = self.samples.samples();
        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = 1.0 + self.regularization;
            for j in 0..i {
                let v = kernel(&pts[i].x, &pts[j].x, self.kernel_width, &self.scaling);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let trend = Trend::fit(self.baseline, pts, &self.scaling)?;
        let mut rhs = DMatrix::<f64>::zeros(n, 5);
        for (i, p) in pts.iter().enumerate() {
            let m = trend.eval(&self.scaling.apply(&p.x));
            for c in 0..5 {
                rhs[(i, c)] = p.y[c] - m[c];
            }
        }
        let chol = nalgebra::Cholesky::<f64, Dyn>::new(k)
            .ok_or(Error::IllConditioned { samples: n })?;
        let alpha = chol.solve(&rhs);
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditioned { samples: n });
        }
        self.trend = trend;
        self.coefficients = (0..n)
            .map(|i| std::array::from_fn(|c| alpha[(i, c)]))
            .collect();
        self.trained_on = n;
        Ok(())
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn coefficients(&self) -> &[[f64; 5]] {
        &self.coefficients
    }

    pub fn trained_on(&self) -> usize {
        self.trained_on
    }

    pub fn scaling(&self) -> &InputScaling {
        &self.scaling
    }

    pub fn kernel_width(&self) -> f64 {
        self.kernel_width
    }

    pub fn is_trained(&self) -> bool {
        self.trained_on == self.samples.len() && self.trained_on > 0
    }

    pub fn predict(&self, x: &[f64; 4]) -> Result<[f64; 5]> {
        if !self.is_trained() {
            return Err(Error::Untrained);
        }
        let mut y = self.trend.eval(&self.scaling.apply(x));
        for (p, a) in self.samples.samples().iter().zip(&self.coefficients) {
            let k = kernel(&p.x, x, self.kernel_width, &self.scaling);
            for c in 0..5 {
                y[c] += a[c] * k;
            }
        }
        Ok(y)
    }

    pub fn score(&self, x: &[f64; 4]) -> f64 {
        score(x, &self.samples, &self.scaling)
    }

    /// Adds a sample and retrains. The surrogate is unchanged on failure.
    pub fn add_sample(&mut self, sample: Sample) -> Result<Insertion> {
        let mut next = self.clone();
        let how = next.samples.insert(sample, &self.scaling)?;
        next.fit()?;
        *self = next;
        Ok(how)
    }

    /// Predicts when `x` lies within `epsilon_model` of a stored input and
    /// otherwise calls `micro`, stores its answer, retrains and returns the
    /// fresh answer.
    pub fn evaluate_gated<F>(&mut self, x: &[f64; 4], epsilon_model: f64, micro: F) -> Result<GatedOutcome>
    where
        F: FnOnce(&[f64; 4]) -> Result<Sample>,
    {
        if !(epsilon_model > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon_model must be positive, got {epsilon_model}"
            )));
        }
        let sc = self.score(x);
        if sc < epsilon_model {
            return Ok(GatedOutcome {
                y: self.predict(x)?,
                sampled: false,
                score: sc,
            });
        }
        let sample = micro(x)?;
        let y = sample.y;
        self.add_sample(sample)?;
        Ok(GatedOutcome {
            y,
            sampled: true,
            score: sc,
        })
    }
}
