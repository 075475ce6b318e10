//! Van der Waals thermodynamics at a fixed reference temperature.
//!
//! Everything is expressed in the specific volume `tau = 1/rho`:
//!
//! ```text
//! p(tau)    = R T / (tau - b) - a / tau^2
//! phi(r)    = -a / r - R T ln(r - b)
//! phi'(r)   =  a / r^2 - R T / (r - b)      so that p(tau) = -phi'(tau)
//! ```
//!
//! Below the critical temperature `T_c = 8a / (27 R b)` the pressure is
//! non-monotone and the interval between the two stationary points of `p`
//! (the spinodal region) is excluded from the admissible states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{bisect, golden_section};

/// Reference temperature of the default parameter set, found by
/// [`VdwParams::calibrate_t_ref`] against the target equilibrium densities
/// `rho_liq = 1.804`, `rho_vap = 0.317`.
pub const CALIBRATED_T_REF: f64 = 0.850_331_731_151_292_8;

/// Target Maxwell densities used for the default calibration.
pub const TARGET_RHO_LIQ: f64 = 1.804;
pub const TARGET_RHO_VAP: f64 = 0.317;

const ROOT_TOL: f64 = 1e-12;
const MAXWELL_INNER_TOL: f64 = 1e-15;
const MAXWELL_AREA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Liquid,
    Vapor,
}

impl Phase {
    pub fn other(self) -> Phase {
        match self {
            Phase::Liquid => Phase::Vapor,
            Phase::Vapor => Phase::Liquid,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Liquid => "liquid",
            Phase::Vapor => "vapor",
        }
    }
}

/// Van der Waals constants shared by the EOS and the pair potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VdwParams {
    /// Attraction constant.
    pub a: f64,
    /// Covolume; hard-core floor for specific volume and particle spacing.
    pub b: f64,
    /// Gas constant.
    pub r: f64,
    /// Fixed reference temperature.
    pub t_ref: f64,
}

/// Spinodal specific volumes: `p'(tau) = 0` at both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseBounds {
    pub covolume: f64,
    pub tau_liq_max: f64,
    pub tau_vap_min: f64,
}

impl PhaseBounds {
    /// Liquid iff `tau in (b, tau_liq_max]`, vapor iff `tau >= tau_vap_min`,
    /// `None` inside the spinodal region or the hard core.
    pub fn classify(&self, tau: f64) -> Option<Phase> {
        if tau > self.covolume && tau <= self.tau_liq_max {
            Some(Phase::Liquid)
        } else if tau >= self.tau_vap_min && tau.is_finite() {
            Some(Phase::Vapor)
        } else {
            None
        }
    }

    pub fn classify_density(&self, rho: f64) -> Option<Phase> {
        if rho > 0.0 {
            self.classify(1.0 / rho)
        } else {
            None
        }
    }

    pub fn is_admissible(&self, tau: f64, phase: Phase) -> bool {
        self.classify(tau) == Some(phase)
    }

    /// Midpoint of the spinodal interval; used to split particle gaps into
    /// liquid-like and vapor-like ones.
    pub fn split_volume(&self) -> f64 {
        0.5 * (self.tau_liq_max + self.tau_vap_min)
    }
}

/// Equal-area (Maxwell) coexistence states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxwellStates {
    pub tau_liq_eq: f64,
    pub tau_vap_eq: f64,
    pub p_star: f64,
}

impl MaxwellStates {
    pub fn rho_liq(&self) -> f64 {
        1.0 / self.tau_liq_eq
    }

    pub fn rho_vap(&self) -> f64 {
        1.0 / self.tau_vap_eq
    }
}

impl VdwParams {
    pub fn new(a: f64, b: f64, r: f64, t_ref: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("R", r), ("T_ref", t_ref)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { a, b, r, t_ref })
    }

    /// Like [`VdwParams::new`] but also requires `T_ref < T_c`.
    pub fn two_phase(a: f64, b: f64, r: f64, t_ref: f64) -> Result<Self> {
        let p = Self::new(a, b, r, t_ref)?;
        p.require_two_phase()?;
        Ok(p)
    }

    /// Reduced parameter set (`T_c = 1`, critical density 1) at the calibrated
    /// reference temperature.
    pub fn calibrated() -> Self {
        Self::reduced(CALIBRATED_T_REF)
    }

    pub fn reduced(t_ref: f64) -> Self {
        Self {
            a: 3.0,
            b: 1.0 / 3.0,
            r: 8.0 / 3.0,
            t_ref,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.a, self.b, self.r, self.t_ref).map(|_| ())
    }

    pub fn critical_temperature(&self) -> f64 {
        8.0 * self.a / (27.0 * self.r * self.b)
    }

    pub fn is_two_phase(&self) -> bool {
        self.t_ref < self.critical_temperature()
    }

    fn require_two_phase(&self) -> Result<()> {
        let t_c = self.critical_temperature();
        if self.t_ref >= t_c {
            return Err(Error::Supercritical {
                t_ref: self.t_ref,
                t_c,
            });
        }
        Ok(())
    }

    fn rt(&self) -> f64 {
        self.r * self.t_ref
    }

    fn check_volume(&self, tau: f64, quantity: &'static str) -> Result<()> {
        if tau > self.b && tau.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain {
                quantity,
                value: tau,
                reason: "must exceed the covolume b",
            })
        }
    }

    /// Van der Waals pressure as a function of specific volume.
    pub fn pressure(&self, tau: f64) -> Result<f64> {
        self.check_volume(tau, "specific volume")?;
        Ok(self.pressure_unchecked(tau))
    }

    #[inline]
    pub(crate) fn pressure_unchecked(&self, tau: f64) -> f64 {
        self.rt() / (tau - self.b) - self.a / (tau * tau)
    }

    pub fn pressure_of_density(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::Domain {
                quantity: "density",
                value: rho,
                reason: "must be positive",
            });
        }
        self.pressure(1.0 / rho)
    }

    /// `dp/dtau`.
    pub fn pressure_deriv_tau(&self, tau: f64) -> Result<f64> {
        self.check_volume(tau, "specific volume")?;
        Ok(self.pressure_deriv_tau_unchecked(tau))
    }

    fn pressure_deriv_tau_unchecked(&self, tau: f64) -> f64 {
        let d = tau - self.b;
        -self.rt() / (d * d) + 2.0 * self.a / (tau * tau * tau)
    }

    /// `dp/drho = -tau^2 dp/dtau`. Fails inside the spinodal region where the
    /// value would be negative.
    pub fn sound_speed_sq(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain {
                quantity: "density",
                value: rho,
                reason: "must be positive",
            });
        }
        let tau = 1.0 / rho;
        self.check_volume(tau, "specific volume")?;
        let d = tau - self.b;
        let repulsive = self.rt() / (d * d);
        let c2 = tau * tau * (repulsive - 2.0 * self.a / (tau * tau * tau));
        if c2 < -1e-9 * tau * tau * repulsive {
            return Err(Error::Domain {
                quantity: "specific volume",
                value: tau,
                reason: "inside the spinodal region (imaginary sound speed)",
            });
        }
        Ok(c2.max(0.0))
    }

    /// Pair potential `phi(r) = -a/r - R T ln(r - b)`.
    pub fn potential(&self, r: f64) -> Result<f64> {
        self.check_volume(r, "particle distance")?;
        Ok(-self.a / r - self.rt() * (r - self.b).ln())
    }

    /// `phi'(r) = a/r^2 - R T/(r - b)`; equals `-pressure(r)`.
    pub fn potential_deriv(&self, r: f64) -> Result<f64> {
        self.check_volume(r, "particle distance")?;
        Ok(self.potential_deriv_unchecked(r))
    }

    #[inline]
    pub(crate) fn potential_deriv_unchecked(&self, r: f64) -> f64 {
        self.a / (r * r) - self.rt() / (r - self.b)
    }

    /// `phi''(r) = -2a/r^3 + R T/(r - b)^2`.
    pub fn potential_second_deriv(&self, r: f64) -> Result<f64> {
        self.check_volume(r, "particle distance")?;
        Ok(-self.pressure_deriv_tau_unchecked(r))
    }

    /// Antiderivative of `p(tau)`.
    fn pressure_antiderivative(&self, tau: f64) -> f64 {
        self.rt() * (tau - self.b).ln() + self.a / tau
    }

    /// The two stationary points of `p(tau)`.
    ///
    /// `p'(tau) = 0` is equivalent to `h(tau) = R T tau^3 - 2a (tau - b)^2 = 0`;
    /// `h(b) > 0` and `h(3b) < 0` below `T_c`, which brackets the liquid root
    /// in `(b, 3b)` and the vapor root in `(3b, inf)`.
    pub fn spinodal_bounds(&self) -> Result<PhaseBounds> {
        self.require_two_phase()?;
        let rt = self.rt();
        let (a, b) = (self.a, self.b);
        let h = |tau: f64| rt * tau * tau * tau - 2.0 * a * (tau - b) * (tau - b);
        let tau_liq_max = bisect(h, b, 3.0 * b, ROOT_TOL)?;
        let mut upper = 6.0 * b;
        while h(upper) <= 0.0 {
            upper *= 2.0;
        }
        let tau_vap_min = bisect(h, 3.0 * b, upper, ROOT_TOL)?;
        Ok(PhaseBounds {
            covolume: b,
            tau_liq_max,
            tau_vap_min,
        })
    }

    /// Phase bounds for classification: the spinodal bounds below `T_c`;
    /// above it every `tau > b` counts as vapor.
    pub fn phase_bounds(&self) -> PhaseBounds {
        self.spinodal_bounds().unwrap_or(PhaseBounds {
            covolume: self.b,
            tau_liq_max: self.b,
            tau_vap_min: self.b * (1.0 + f64::EPSILON),
        })
    }

    /// Liquid-branch specific volume with `p(tau) = p_target`.
    fn liquid_volume_at(&self, bounds: &PhaseBounds, p_target: f64, tol: f64) -> Result<f64> {
        let b = self.b;
        let lo = b + (bounds.tau_liq_max - b) * 1e-15;
        bisect(
            |t| self.pressure_unchecked(t) - p_target,
            lo.max(b * (1.0 + 1e-15)),
            bounds.tau_liq_max,
            tol,
        )
    }

    /// Vapor-branch specific volume with `p(tau) = p_target > 0`.
    fn vapor_volume_at(&self, bounds: &PhaseBounds, p_target: f64, tol: f64) -> Result<f64> {
        let mut upper = 2.0 * bounds.tau_vap_min;
        let mut guard = 0;
        while self.pressure_unchecked(upper) > p_target {
            upper *= 2.0;
            guard += 1;
            if guard > 2000 {
                return Err(Error::NoConvergence {
                    what: "vapor bracket expansion",
                    iterations: guard,
                });
            }
        }
        bisect(
            |t| self.pressure_unchecked(t) - p_target,
            bounds.tau_vap_min,
            upper,
            tol * upper.max(1.0),
        )
    }

    /// Equal-area construction by bisection over the coexistence pressure.
    ///
    /// For a trial `p*` the liquid and vapor volumes solve `p(tau) = p*` on
    /// their monotone branches; the signed area
    /// `int_{tau_l}^{tau_v} (p - p*) dtau` (closed form) decreases in `p*`.
    pub fn maxwell_equilibrium(&self) -> Result<MaxwellStates> {
        let bounds = self.spinodal_bounds()?;
        let p_min = self.pressure_unchecked(bounds.tau_liq_max);
        let p_max = self.pressure_unchecked(bounds.tau_vap_min);
        let area = |p_star: f64| -> Result<(f64, f64, f64)> {
            let tl = self.liquid_volume_at(&bounds, p_star, MAXWELL_INNER_TOL)?;
            let tv = self.vapor_volume_at(&bounds, p_star, MAXWELL_INNER_TOL)?;
            let a = self.pressure_antiderivative(tv)
                - self.pressure_antiderivative(tl)
                - p_star * (tv - tl);
            Ok((a, tl, tv))
        };

        let mut lo = p_min.max(0.0) + 1e-14 * p_max;
        let mut hi = p_max - 1e-14 * p_max;
        let (a_lo, _, _) = area(lo)?;
        let (a_hi, _, _) = area(hi)?;
        if !(a_lo > 0.0 && a_hi < 0.0) {
            return Err(Error::NoConvergence {
                what: "Maxwell pressure bracket",
                iterations: 0,
            });
        }
        const MAX_ITER: usize = 300;
        for _ in 0..MAX_ITER {
            let mid = 0.5 * (lo + hi);
            let (a_mid, tl, tv) = area(mid)?;
            if a_mid.abs() < 1e-13 || mid <= lo || mid >= hi {
                return self.finish_maxwell(mid, tl, tv, a_mid);
            }
            if a_mid > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(Error::NoConvergence {
            what: "Maxwell equal-area bisection",
            iterations: MAX_ITER,
        })
    }

    fn finish_maxwell(&self, p_star: f64, tl: f64, tv: f64, area: f64) -> Result<MaxwellStates> {
        let dp = (self.pressure_unchecked(tl) - self.pressure_unchecked(tv)).abs();
        if area.abs() >= MAXWELL_AREA_TOL || dp >= MAXWELL_AREA_TOL {
            return Err(Error::NoConvergence {
                what: "Maxwell equal-area residual",
                iterations: 0,
            });
        }
        Ok(MaxwellStates {
            tau_liq_eq: tl,
            tau_vap_eq: tv,
            p_star,
        })
    }

    /// Scalar search over `T_ref` in `[t_lo, t_hi]` minimizing the squared
    /// mismatch between the Maxwell densities and the targets.
    pub fn calibrate_t_ref(
        a: f64,
        b: f64,
        r: f64,
        target_liq: f64,
        target_vap: f64,
        t_lo: f64,
        t_hi: f64,
    ) -> Result<f64> {
        golden_section(
            |t| {
                let m = VdwParams::two_phase(a, b, r, t)?.maxwell_equilibrium()?;
                Ok((m.rho_liq() - target_liq).powi(2) + (m.rho_vap() - target_vap).powi(2))
            },
            t_lo,
            t_hi,
            1e-11,
        )
    }
}
