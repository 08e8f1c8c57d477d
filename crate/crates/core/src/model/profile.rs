use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// Initial macroscopic density profile `rho0(u)` on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Constant { rho: f64 },
    /// `mean + amplitude * sin(2 pi u)`.
    Sine { mean: f64, amplitude: f64 },
}

impl Profile {
    pub fn constant(rho: f64) -> Self {
        Self::Constant { rho }
    }

    pub fn sine(mean: f64, amplitude: f64) -> Self {
        Self::Sine { mean, amplitude }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Profile::Constant { rho } => rho,
            Profile::Sine { mean, amplitude } => mean + amplitude * (TAU * u).sin(),
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            Profile::Constant { rho } => rho,
            Profile::Sine { mean, amplitude } => mean + amplitude.abs(),
        }
    }

    pub fn min(&self) -> f64 {
        match *self {
            Profile::Constant { rho } => rho,
            Profile::Sine { mean, amplitude } => mean - amplitude.abs(),
        }
    }

    /// Total mass over the unit torus.
    pub fn mass(&self) -> f64 {
        match *self {
            Profile::Constant { rho } => rho,
            Profile::Sine { mean, .. } => mean,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Profile::Constant { rho } => format!("const:{rho}"),
            Profile::Sine { mean, amplitude } => format!("sine:{mean},{amplitude}"),
        }
    }
}
