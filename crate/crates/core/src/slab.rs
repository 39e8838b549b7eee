//! Lossless dielectric slab: complex amplitude reflection and transmission.
//!
//! For a slab of index `n` and thickness `L` probed at wavenumber `k`,
//!
//! ```text
//! r = (n^2 - 1) sin(k n L) / [ (n^2 + 1) sin(k n L) + 2 i n cos(k n L) ]
//! t =            2 n      / [ (n^2 + 1) sin(k n L) + 2 i n cos(k n L) ]
//! ```
//!
//! With this phase convention `r / t` is real and the boundary scattering
//! matrix `[[t, r], [-r*, t*]]` is unitary, so `|r|^2 + |t|^2 = 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::series::{Column, SpectrumSeries};

/// Geometry and (real) refractive index of one membrane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabParams {
    pub index: f64,
    /// Thickness [m].
    pub thickness: f64,
}

impl SlabParams {
    pub fn new(index: f64, thickness: f64) -> Result<Self> {
        let slab = Self { index, thickness };
        slab.validate()?;
        Ok(slab)
    }

    pub fn validate(&self) -> Result<()> {
        // n = 1 is allowed: it is the index-matched (invisible) limit.
        if !self.index.is_finite() || self.index < 1.0 {
            return domain(format!("refractive index must be >= 1, got {}", self.index));
        }
        if !self.thickness.is_finite() || self.thickness < 0.0 {
            return domain(format!("slab thickness must be >= 0, got {}", self.thickness));
        }
        Ok(())
    }
}

/// Complex amplitude coefficients of one membrane at one wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabCoefficients {
    pub r: Complex64,
    pub t: Complex64,
    /// Intensity reflectivity `|r|^2`.
    pub reflectivity: f64,
    /// Reflection phase `arg(r)` [rad].
    pub phase: f64,
}

impl SlabCoefficients {
    fn from_rt(r: Complex64, t: Complex64) -> Self {
        Self {
            r,
            t,
            reflectivity: r.norm_sqr(),
            phase: r.arg(),
        }
    }

    /// Idealized lossless element with intensity reflectivity `reflectivity`
    /// and reflection phase `phase`, in the same convention as the slab
    /// formula (`r / t` real and positive).
    pub fn from_reflectivity(reflectivity: f64, phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&reflectivity) {
            return domain(format!("reflectivity must lie in [0, 1], got {reflectivity}"));
        }
        let r = Complex64::from_polar(reflectivity.sqrt(), phase);
        let t = Complex64::from_polar((1.0 - reflectivity).sqrt(), phase);
        Ok(Self::from_rt(r, t))
    }

    /// A fully transparent element (`r = 0`, `t = 1`).
    pub fn transparent() -> Self {
        Self::from_rt(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    }

    pub fn transmissivity(&self) -> f64 {
        self.t.norm_sqr()
    }
}

/// Evaluate `r`, `t` of a slab at vacuum wavelength `wavelength` [m].
pub fn slab_coefficients(slab: &SlabParams, wavelength: f64) -> Result<SlabCoefficients> {
    slab.validate()?;
    if !wavelength.is_finite() || wavelength <= 0.0 {
        return domain(format!("wavelength must be positive, got {wavelength}"));
    }
    let n = slab.index;
    let k = 2.0 * PI / wavelength;
    let (s, c) = (k * n * slab.thickness).sin_cos();
    let den = Complex64::new((n * n + 1.0) * s, 2.0 * n * c);
    let r = Complex64::new((n * n - 1.0) * s, 0.0) / den;
    let t = Complex64::new(2.0 * n, 0.0) / den;
    Ok(SlabCoefficients::from_rt(r, t))
}

/// Refractive-index model for the membrane material.
///
/// The default is the Philipp Sellmeier fit for stoichiometric Si3N4,
/// `n^2 = 1 + 2.8939 lambda^2 / (lambda^2 - 0.13967^2)` with lambda in um.
/// It is an assumption: the index of the measured membranes is not known, and
/// the thickness recovered by [`crate::fit::fit_thickness`] depends on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IndexModel {
    /// Wavelength-independent index.
    Constant { value: f64 },
    /// Stoichiometric Si3N4, single-term Sellmeier (Philipp).
    SiliconNitride,
    /// `n^2 = 1 + sum_i b_i l^2 / (l^2 - c_i^2)`, `l` in micrometres.
    Sellmeier { b: Vec<f64>, c_um: Vec<f64> },
    /// Tabulated `(wavelength_m, n)` pairs, linearly interpolated and clamped
    /// at the ends.
    Table { points: Vec<(f64, f64)> },
}

impl Default for IndexModel {
    fn default() -> Self {
        IndexModel::SiliconNitride
    }
}

/// Constant index used when no dispersion information is wanted; the value is
/// the commonly quoted Si3N4 index at 532 nm.
pub const FALLBACK_INDEX: f64 = 2.046;

impl IndexModel {
    pub fn constant_fallback() -> Self {
        IndexModel::Constant { value: FALLBACK_INDEX }
    }

    pub fn name(&self) -> &'static str {
        match self {
            IndexModel::Constant { .. } => "constant",
            IndexModel::SiliconNitride => "silicon-nitride",
            IndexModel::Sellmeier { .. } => "sellmeier",
            IndexModel::Table { .. } => "table",
        }
    }

    /// Refractive index at vacuum wavelength `wavelength` [m].
    pub fn index_at(&self, wavelength: f64) -> Result<f64> {
        if !wavelength.is_finite() || wavelength <= 0.0 {
            return domain(format!("wavelength must be positive, got {wavelength}"));
        }
        let n = match self {
            IndexModel::Constant { value } => *value,
            IndexModel::SiliconNitride => sellmeier(&[2.8939], &[0.13967], wavelength)?,
            IndexModel::Sellmeier { b, c_um } => {
                if b.len() != c_um.len() || b.is_empty() {
                    return domain("sellmeier model needs matching, non-empty b and c_um");
                }
                sellmeier(b, c_um, wavelength)?
            }
            IndexModel::Table { points } => interpolate(points, wavelength)?,
        };
        if !n.is_finite() || n < 1.0 {
            return domain(format!("index model gives n = {n} at {wavelength} m"));
        }
        Ok(n)
    }

    pub fn slab_at(&self, thickness: f64, wavelength: f64) -> Result<SlabParams> {
        SlabParams::new(self.index_at(wavelength)?, thickness)
    }

    pub fn coefficients(&self, thickness: f64, wavelength: f64) -> Result<SlabCoefficients> {
        slab_coefficients(&self.slab_at(thickness, wavelength)?, wavelength)
    }
}

fn sellmeier(b: &[f64], c_um: &[f64], wavelength: f64) -> Result<f64> {
    let l2 = (wavelength * 1e6).powi(2);
    let mut n2 = 1.0;
    for (bi, ci) in b.iter().zip(c_um) {
        let den = l2 - ci * ci;
        if den <= 0.0 {
            return domain(format!("wavelength {wavelength} m at or below a Sellmeier pole"));
        }
        n2 += bi * l2 / den;
    }
    Ok(n2.sqrt())
}

fn interpolate(points: &[(f64, f64)], x: f64) -> Result<f64> {
    if points.is_empty() {
        return domain("empty index table");
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return domain("index table wavelengths must be strictly increasing");
    }
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first.0 {
        return Ok(first.1);
    }
    if x >= last.0 {
        return Ok(last.1);
    }
    let i = points.partition_point(|p| p.0 <= x);
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    Ok(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

/// Intensity reflectivity `R(lambda)` of a slab of fixed thickness over a
/// wavelength grid [m]. The series is written with `wavelength_m` /
/// `reflectivity` columns.
pub fn reflectivity_curve(
    thickness: f64,
    index: &IndexModel,
    wavelengths: &[f64],
) -> Result<SpectrumSeries> {
    if wavelengths.is_empty() {
        return domain("wavelength grid is empty");
    }
    if wavelengths.windows(2).any(|w| w[1] <= w[0]) {
        return domain("wavelength grid must be strictly increasing");
    }
    let y = wavelengths
        .iter()
        .map(|&l| index.coefficients(thickness, l).map(|c| c.reflectivity))
        .collect::<Result<Vec<_>>>()?;
    SpectrumSeries::new(
        Column::WavelengthM,
        Column::Reflectivity,
        wavelengths.to_vec(),
        y,
    )
}
