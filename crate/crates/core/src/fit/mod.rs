//! Least-squares characterization fits.

pub mod airy;
pub mod lm;
pub mod lorentzian;
pub mod peaks;
pub mod thickness;

use serde::{Deserialize, Serialize};

pub use airy::{fit_airy_timescan, fit_airy_wavelength, AiryModel, TimeScan};
pub use lorentzian::fit_lorentzian;
pub use thickness::{fit_thickness, ReflectivityPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub unit: String,
    pub value: f64,
    /// One-sigma uncertainty from the residual-scaled covariance.
    pub sigma: f64,
}

impl FitParameter {
    pub fn new(name: &str, unit: &str, value: f64, sigma: f64) -> Self {
        Self { name: name.into(), unit: unit.into(), value, sigma: sigma.abs() }
    }
}

/// A local minimum of a scanned objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimum {
    pub value: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    pub residual_norm: f64,
    /// When false the estimates are unreliable.
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub local_minima: Vec<LocalMinimum>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Value of a parameter known to exist.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map(|p| p.value).unwrap_or(f64::NAN)
    }
}
