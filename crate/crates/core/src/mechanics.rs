//! Membrane normal modes, susceptibilities and displacement spectra.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::fit::lm::{levenberg_marquardt, LmOptions};

/// Square or rectangular membrane under uniform tension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembranePlate {
    pub lx_m: f64,
    pub ly_m: f64,
    pub stress_pa: f64,
    pub density_kg_m3: f64,
}

impl MembranePlate {
    pub fn new(lx_m: f64, ly_m: f64, stress_pa: f64, density_kg_m3: f64) -> Result<Self> {
        let p = Self { lx_m, ly_m, stress_pa, density_kg_m3 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lx_m, self.ly_m, self.stress_pa, self.density_kg_m3];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return domain(format!("plate parameters must be positive: {self:?}"));
        }
        Ok(())
    }

    /// Nominal 1 mm square silicon nitride membrane.
    pub fn nominal() -> Self {
        Self { lx_m: 1e-3, ly_m: 1e-3, stress_pa: 1e9, density_kg_m3: 3100.0 }
    }
}

/// Prefactor of the mode formula `nu = c sqrt((sigma/rho)((n/Lx)^2 + (m/Ly)^2))`.
///
/// The standard string/membrane dispersion has `c = 1/2`; `AsWritten` uses
/// `c = 1`, which doubles every frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FrequencyConvention {
    AsWritten,
    #[default]
    HalfFactor,
}

impl FrequencyConvention {
    pub fn factor(self) -> f64 {
        match self {
            FrequencyConvention::AsWritten => 1.0,
            FrequencyConvention::HalfFactor => 0.5,
        }
    }
}

/// Mode frequency in Hz.
pub fn mode_frequency(plate: &MembranePlate, n: u32, m: u32, conv: FrequencyConvention) -> Result<f64> {
    plate.validate()?;
    if n == 0 || m == 0 {
        return domain(format!("mode indices must be >= 1, got ({n}, {m})"));
    }
    let q = (n as f64 / plate.lx_m).powi(2) + (m as f64 / plate.ly_m).powi(2);
    Ok(conv.factor() * (plate.stress_pa / plate.density_kg_m3 * q).sqrt())
}

/// Quarter of the physical membrane mass.
pub fn default_effective_mass(plate: &MembranePlate, thickness_m: f64) -> f64 {
    plate.density_kg_m3 * plate.lx_m * plate.ly_m * thickness_m / 4.0
}

/// `omega_m(V) = omega_m0 (1 + beta V)`.
pub fn piezo_shifted(omega0: f64, beta_per_v: f64, voltage: f64) -> f64 {
    omega0 * (1.0 + beta_per_v * voltage)
}

/// One mechanical mode as seen by the optical field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechMode {
    /// rad/s
    pub omega_m: f64,
    /// rad/s
    pub gamma_m: f64,
    pub m_eff_kg: f64,
    /// Overlap of the mode shape with the optical spot, 0..1.
    pub overlap: f64,
    /// Force spectral amplitude [N/sqrt(Hz)].
    pub force: f64,
}

impl MechMode {
    pub fn new(omega_m: f64, gamma_m: f64, m_eff_kg: f64, overlap: f64, force: f64) -> Result<Self> {
        let mode = Self { omega_m, gamma_m, m_eff_kg, overlap, force };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_m > 0.0 && self.gamma_m > 0.0 && self.m_eff_kg > 0.0) {
            return domain(format!("mode needs omega_m, gamma_m, m_eff > 0: {self:?}"));
        }
        if !(0.0..=1.0).contains(&self.overlap) || !self.force.is_finite() {
            return domain(format!("overlap must lie in [0, 1]: {self:?}"));
        }
        Ok(())
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega_m / self.gamma_m
    }

    pub fn frequency_hz(&self) -> f64 {
        self.omega_m / (2.0 * PI)
    }

    /// Same mode with its frequency moved by the piezo bias.
    pub fn piezo_biased(&self, beta_per_v: f64, voltage: f64) -> Self {
        Self { omega_m: piezo_shifted(self.omega_m, beta_per_v, voltage), ..*self }
    }
}

/// `chi(omega) = (1/m) / (omega_m^2 - omega^2 + i gamma omega)` [m/N].
pub fn susceptibility(mode: &MechMode, omega: f64) -> Complex64 {
    let den = Complex64::new(mode.omega_m.powi(2) - omega * omega, mode.gamma_m * omega);
    (1.0 / mode.m_eff_kg) / den
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Correlation {
    #[default]
    Uncorrelated,
    CommonDrive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementSpectra {
    pub s11: f64,
    pub s22: f64,
    pub s12: Complex64,
}

/// Displacement auto and cross spectra [m^2/Hz] of two driven modes.
pub fn displacement_spectra(m1: &MechMode, m2: &MechMode, omega: f64, corr: Correlation) -> DisplacementSpectra {
    let x1 = susceptibility(m1, omega) * m1.force;
    let x2 = susceptibility(m2, omega) * m2.force;
    let s12 = match corr {
        Correlation::Uncorrelated => Complex64::new(0.0, 0.0),
        Correlation::CommonDrive => x1.conj() * x2,
    };
    DisplacementSpectra { s11: x1.norm_sqr(), s22: x2.norm_sqr(), s12 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMeasurement {
    pub n: u32,
    pub m: u32,
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideLengthFit {
    pub lx_m: f64,
    pub ly_m: f64,
    pub sigma_lx_m: f64,
    pub sigma_ly_m: f64,
    /// `(measured - model) / model` per input mode.
    pub relative_shifts: Vec<f64>,
    pub converged: bool,
}

/// Invert measured mode frequencies for the side lengths.
///
/// `nu^2` is linear in `(1/Lx^2, 1/Ly^2)`, which gives a direct seed; the
/// relative frequency residuals are then minimized.
pub fn infer_side_lengths(
    modes: &[ModeMeasurement],
    stress_pa: f64,
    density_kg_m3: f64,
    conv: FrequencyConvention,
) -> Result<SideLengthFit> {
    if !(stress_pa > 0.0 && density_kg_m3 > 0.0) {
        return domain("stress and density must be positive");
    }
    if modes.iter().any(|md| md.n == 0 || md.m == 0 || !(md.frequency_hz > 0.0)) {
        return domain("mode indices must be >= 1 and frequencies positive");
    }
    let c2 = conv.factor().powi(2) * stress_pa / density_kg_m3;
    let k = modes.len();
    let a = DMatrix::from_fn(k, 2, |i, j| {
        let md = &modes[i];
        let q = if j == 0 { md.n } else { md.m } as f64;
        c2 * q * q / md.frequency_hz.powi(2)
    });
    let b = DVector::from_element(k, 1.0);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if k < 2 || svd.singular_values.min() <= 1e-9 * smax {
        return domain("need at least two modes with independent (n, m) to fix Lx and Ly");
    }
    let uv = svd.solve(&b, 1e-12 * smax).map_err(|e| crate::Error::Internal(e.to_string()))?;
    if uv[0] <= 0.0 || uv[1] <= 0.0 {
        return domain("mode data are inconsistent with a rectangular membrane");
    }
    let seed = [1.0 / uv[0].sqrt(), 1.0 / uv[1].sqrt()];

    let model = |lx: f64, ly: f64, md: &ModeMeasurement| {
        (c2 * ((md.n as f64 / lx).powi(2) + (md.m as f64 / ly).powi(2))).sqrt()
    };
    let out = levenberg_marquardt(
        |p, r| {
            for (i, md) in modes.iter().enumerate() {
                r[i] = md.frequency_hz / model(p[0] * seed[0], p[1] * seed[1], md) - 1.0;
            }
        },
        &[1.0, 1.0],
        k,
        &LmOptions::default(),
    )?;
    let (lx, ly) = (out.params[0] * seed[0], out.params[1] * seed[1]);
    let sig = out.sigmas();
    let relative_shifts = modes.iter().map(|md| md.frequency_hz / model(lx, ly, md) - 1.0).collect();
    Ok(SideLengthFit {
        lx_m: lx,
        ly_m: ly,
        sigma_lx_m: sig[0] * seed[0],
        sigma_ly_m: sig[1] * seed[1],
        relative_shifts,
        converged: out.converged,
    })
}
