use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// Conservative isothermal state `(rho, rho v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    pub rho: f64,
    pub momentum: f64,
}

impl FluidState {
    pub const fn new(rho: f64, momentum: f64) -> Self {
        Self { rho, momentum }
    }

    pub fn from_velocity(rho: f64, velocity: f64) -> Self {
        Self {
            rho,
            momentum: rho * velocity,
        }
    }

    pub fn velocity(&self) -> f64 {
        self.momentum / self.rho
    }

    pub fn specific_volume(&self) -> f64 {
        1.0 / self.rho
    }

    pub fn is_finite(&self) -> bool {
        self.rho.is_finite() && self.momentum.is_finite()
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.rho, self.momentum]
    }
}

impl From<[f64; 2]> for FluidState {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl Add for FluidState {
    type Output = FluidState;
    fn add(self, rhs: Self) -> Self {
        FluidState::new(self.rho + rhs.rho, self.momentum + rhs.momentum)
    }
}

impl Sub for FluidState {
    type Output = FluidState;
    fn sub(self, rhs: Self) -> Self {
        FluidState::new(self.rho - rhs.rho, self.momentum - rhs.momentum)
    }
}

impl Mul<FluidState> for f64 {
    type Output = FluidState;
    fn mul(self, rhs: FluidState) -> FluidState {
        FluidState::new(self * rhs.rho, self * rhs.momentum)
    }
}
