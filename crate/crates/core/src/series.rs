//! One-dimensional data series with unit-bearing column names.
//!
//! Values are stored in the units named by their column (e.g. `wavelength_nm`
//! holds nanometres) so that writing and re-reading a series is lossless.
//! Use [`Column::to_si`] / [`SpectrumSeries::x_si`] to get SI values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    WavelengthM,
    WavelengthNm,
    FreqHz,
    PsdV2Hz,
    TransmissionNorm,
    Reflectivity,
    DisplacementM,
    DisplacementNm,
    VoltageV,
    TimeS,
}

impl Column {
    pub const ALL: [Column; 10] = [
        Column::WavelengthM,
        Column::WavelengthNm,
        Column::FreqHz,
        Column::PsdV2Hz,
        Column::TransmissionNorm,
        Column::Reflectivity,
        Column::DisplacementM,
        Column::DisplacementNm,
        Column::VoltageV,
        Column::TimeS,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::WavelengthM => "wavelength_m",
            Column::WavelengthNm => "wavelength_nm",
            Column::FreqHz => "freq_hz",
            Column::PsdV2Hz => "psd_v2_hz",
            Column::TransmissionNorm => "transmission_norm",
            Column::Reflectivity => "reflectivity",
            Column::DisplacementM => "displacement_m",
            Column::DisplacementNm => "displacement_nm",
            Column::VoltageV => "voltage_v",
            Column::TimeS => "t_s",
        }
    }

    /// Stored units per SI unit (1e9 for nanometre columns).
    pub fn per_si(self) -> f64 {
        match self {
            Column::WavelengthNm | Column::DisplacementNm => 1e9,
            _ => 1.0,
        }
    }

    pub fn to_si(self, v: f64) -> f64 {
        v / self.per_si()
    }

    pub fn from_si(self, v: f64) -> f64 {
        v * self.per_si()
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Column::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown column `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    pub x_column: Column,
    pub y_column: Column,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SpectrumSeries {
    pub fn new(x_column: Column, y_column: Column, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return domain(format!("series length mismatch: {} x vs {} y", x.len(), y.len()));
        }
        Ok(Self { x_column, y_column, x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_si(&self) -> Vec<f64> {
        self.x.iter().map(|&v| self.x_column.to_si(v)).collect()
    }

    pub fn y_si(&self) -> Vec<f64> {
        self.y.iter().map(|&v| self.y_column.to_si(v)).collect()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.x.windows(2).all(|w| w[1] > w[0])
    }
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n).map(|i| start + step * i as f64).collect()
        }
    }
}
