//! Airy-fringe fits: cavity length from a transmission spectrum, and
//! reflectivity / finesse from a piezo length scan.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::peaks::fringe_peaks;
use super::{FitParameter, FitResult};
use crate::error::{domain, Result};
use crate::etalon::{finesse_fwhm, steady_transmission, EtalonGeometry};
use crate::series::{Column, SpectrumSeries};
use crate::slab::{IndexModel, SlabCoefficients};

/// Two dispersive membranes described by an index model and thicknesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AiryModel {
    pub index: IndexModel,
    pub thickness_m: [f64; 2],
}

impl AiryModel {
    pub fn coefficients(&self, wavelength: f64) -> Result<(SlabCoefficients, SlabCoefficients)> {
        Ok((
            self.index.coefficients(self.thickness_m[0], wavelength)?,
            self.index.coefficients(self.thickness_m[1], wavelength)?,
        ))
    }

    /// Transmitted fraction at cavity length `length`.
    pub fn transmission(&self, length: f64, wavelength: f64) -> Result<f64> {
        let (c1, c2) = self.coefficients(wavelength)?;
        steady_transmission(&c1, &c2, &EtalonGeometry::new(length, 0.0)?, wavelength)
    }
}

fn shape(coeffs: &[(SlabCoefficients, SlabCoefficients)], lambdas: &[f64], length: f64, out: &mut [f64]) {
    for ((c1, c2), (&lam, o)) in coeffs.iter().zip(lambdas.iter().zip(out.iter_mut())) {
        // identical to steady_transmission with a static geometry of this length
        let mu = -c1.r * c2.r.conj() * num_complex::Complex64::from_polar(1.0, -4.0 * PI * length / lam);
        *o = (c1.t * c2.t).norm_sqr() / (1.0 - mu).norm_sqr();
    }
}

/// Least-squares amplitude of `y ~ a s`.
fn best_amplitude(y: &[f64], s: &[f64]) -> f64 {
    let num: f64 = y.iter().zip(s).map(|(a, b)| a * b).sum();
    let den: f64 = s.iter().map(|b| b * b).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Fractional half-width of the coarse length scan around the guess.
const LENGTH_SCAN_SPAN: f64 = 0.2;

/// Fit `T(lambda) = A |t1 t2|^2 / |1 - mu(lambda; L)|^2` to a transmission
/// spectrum for the cavity length `L` and free amplitude `A`.
pub fn fit_airy_wavelength(spectrum: &SpectrumSeries, model: &AiryModel, length_guess: f64) -> Result<FitResult> {
    if !(length_guess > 0.0) {
        return domain("cavity length guess must be positive");
    }
    let lambdas = spectrum.x_si();
    let y = spectrum.y_si();
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return domain("wavelengths must be positive");
    }
    if fringe_peaks(&y).len() < 2 {
        return domain("spectrum must span at least two fringe peaks");
    }
    let coeffs = lambdas.iter().map(|&l| model.coefficients(l)).collect::<Result<Vec<_>>>()?;
    let n = y.len();
    let mut s = vec![0.0; n];
    let cost_at = |len: f64, s: &mut [f64]| {
        shape(&coeffs, &lambdas, len, s);
        let a = best_amplitude(&y, s);
        y.iter().zip(s.iter()).map(|(yi, si)| (yi - a * si).powi(2)).sum::<f64>()
    };

    let lmin = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let step = lmin / 40.0;
    let lo = length_guess * (1.0 - LENGTH_SCAN_SPAN);
    let count = (2.0 * LENGTH_SCAN_SPAN * length_guess / step).ceil() as usize + 1;
    let (mut best_len, mut best_cost) = (length_guess, f64::INFINITY);
    for i in 0..count {
        let len = lo + i as f64 * step;
        let c = cost_at(len, &mut s);
        if c < best_cost {
            best_cost = c;
            best_len = len;
        }
    }
    shape(&coeffs, &lambdas, best_len, &mut s);
    let a0 = best_amplitude(&y, &s);
    let yscale = y.iter().cloned().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);

    let out = levenberg_marquardt(
        |p, r| {
            shape(&coeffs, &lambdas, p[0] * best_len, r);
            for (ri, yi) in r.iter_mut().zip(&y) {
                *ri = (p[1] * *ri * yscale - yi) / yscale;
            }
        },
        &[1.0, a0 / yscale],
        n,
        &LmOptions::default(),
    )?;
    let sig = out.sigmas();
    Ok(FitResult {
        parameters: vec![
            FitParameter::new("cavity_length", "m", out.params[0] * best_len, sig[0] * best_len),
            FitParameter::new("amplitude", "1", out.params[1] * yscale, sig[1] * yscale),
        ],
        residual_norm: out.residual_norm * yscale,
        converged: out.converged,
        iterations: out.iterations,
        local_minima: Vec::new(),
        flags: Vec::new(),
    })
}

/// Synthetic transmission spectrum with additive Gaussian noise of standard
/// deviation `noise` times the peak transmission.
pub fn synthetic_white_light<R: Rng>(
    model: &AiryModel,
    length: f64,
    wavelengths_m: &[f64],
    noise: f64,
    rng: &mut R,
) -> Result<SpectrumSeries> {
    let clean = wavelengths_m
        .iter()
        .map(|&l| model.transmission(length, l))
        .collect::<Result<Vec<_>>>()?;
    let peak = clean.iter().cloned().fold(0.0, f64::max);
    let dist = Normal::new(0.0, noise * peak).map_err(|e| crate::Error::Domain(e.to_string()))?;
    let y = clean.iter().map(|&v| v + dist.sample(rng)).collect();
    let x = wavelengths_m.iter().map(|&l| Column::WavelengthNm.from_si(l)).collect();
    SpectrumSeries::new(Column::WavelengthNm, Column::TransmissionNorm, x, y)
}

/// Transmission recorded during a piezo voltage ramp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeScan {
    pub voltage_v: Vec<f64>,
    pub transmission: Vec<f64>,
}

impl TimeScan {
    pub fn from_series(s: &SpectrumSeries) -> Result<Self> {
        if s.x_column != Column::VoltageV {
            return domain(format!("time scan needs a {} column, got {}", Column::VoltageV, s.x_column));
        }
        Ok(Self { voltage_v: s.x.clone(), transmission: s.y.clone() })
    }

    pub fn to_series(&self) -> Result<SpectrumSeries> {
        SpectrumSeries::new(Column::VoltageV, Column::TransmissionNorm, self.voltage_v.clone(), self.transmission.clone())
    }
}

/// Piezo response `d(V) = a1 V + a2 V^2` and the identical-mirror Airy
/// profile `A (1 - R)^2 / (1 + R^2 - 2 R cos(theta0 + 4 pi d / lambda))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanModel {
    pub reflectivity: f64,
    pub amplitude: f64,
    pub theta0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl ScanModel {
    pub fn eval(&self, v: f64, wavelength: f64) -> f64 {
        let r = self.reflectivity;
        let theta = self.theta0 + 4.0 * PI * (self.a1 * v + self.a2 * v * v) / wavelength;
        self.amplitude * (1.0 - r).powi(2) / (1.0 + r * r - 2.0 * r * theta.cos())
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn finesse_of(r: f64) -> Result<f64> {
    let c = SlabCoefficients::from_reflectivity(r, 0.0)?;
    finesse_fwhm(&c, &c)
}

/// Fit a length-scan trace for the mirror reflectivity (identical mirrors)
/// and report the finesse through [`finesse_fwhm`].
pub fn fit_airy_timescan(scan: &TimeScan, wavelength: f64, disp_per_volt_guess: f64) -> Result<FitResult> {
    if scan.voltage_v.len() != scan.transmission.len() {
        return domain("voltage and transmission differ in length");
    }
    if !(wavelength > 0.0) || disp_per_volt_guess == 0.0 || !disp_per_volt_guess.is_finite() {
        return domain("wavelength must be positive and the displacement guess non-zero");
    }
    let mut pairs: Vec<(f64, f64)> = scan.voltage_v.iter().cloned().zip(scan.transmission.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let v: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || max - min <= 1e-3 * max {
        return domain("transmission trace is flat; no fringes to fit");
    }
    let peaks = fringe_peaks(&y);
    if peaks.len() < 2 {
        return domain(format!("scan shows {} full fringe peak(s), need 2", peaks.len()));
    }
    let dv = (v[*peaks.last().unwrap()] - v[peaks[0]]) / (peaks.len() - 1) as f64;
    let a1 = disp_per_volt_guess.signum() * wavelength / 2.0 / dv;
    let theta0 = -4.0 * PI * a1 * v[peaks[0]] / wavelength;
    let c = (min.max(0.0) / max).sqrt();
    let r0 = ((1.0 - c) / (1.0 + c)).clamp(0.01, 0.99);
    let vmax = v.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    // internal parameters: logit R, A / max, theta0, a1 / a1_seed, a2 vmax^2 / lambda
    let unpack = |p: &[f64]| ScanModel {
        reflectivity: logistic(p[0]),
        amplitude: p[1] * max,
        theta0: p[2],
        a1: p[3] * a1,
        a2: p[4] * wavelength / (vmax * vmax),
    };
    let start = [(r0 / (1.0 - r0)).ln(), 1.0, theta0, 1.0, 0.0];
    let out = levenberg_marquardt(
        |p, r| {
            let m = unpack(p);
            for i in 0..v.len() {
                r[i] = (m.eval(v[i], wavelength) - y[i]) / max;
            }
        },
        &start,
        v.len(),
        &LmOptions::default(),
    )?;
    let m = unpack(&out.params);
    let sig = out.sigmas();
    let dr_dp = m.reflectivity * (1.0 - m.reflectivity);
    let sigma_r = sig[0] * dr_dp;
    let mut flags = Vec::new();
    let (finesse, sigma_f) = match finesse_of(m.reflectivity) {
        Ok(f) => {
            let h = 1e-6;
            let slope = match (finesse_of(m.reflectivity + h), finesse_of(m.reflectivity - h)) {
                (Ok(a), Ok(b)) => (a - b) / (2.0 * h),
                _ => 0.0,
            };
            (f, slope.abs() * sigma_r)
        }
        Err(_) => {
            flags.push("finesse undefined: fringe never drops to half maximum".to_string());
            (f64::NAN, f64::NAN)
        }
    };
    Ok(FitResult {
        parameters: vec![
            FitParameter::new("finesse", "1", finesse, sigma_f),
            FitParameter::new("reflectivity", "1", m.reflectivity, sigma_r),
            FitParameter::new("amplitude", "1", m.amplitude, sig[1] * max),
            FitParameter::new("theta0", "rad", m.theta0, sig[2]),
            FitParameter::new("disp_per_volt", "m/V", m.a1, sig[3] * a1.abs()),
            FitParameter::new("disp_per_volt2", "m/V^2", m.a2, sig[4] * wavelength / (vmax * vmax)),
        ],
        residual_norm: out.residual_norm * max,
        converged: out.converged,
        iterations: out.iterations,
        local_minima: Vec::new(),
        flags,
    })
}

/// Synthetic scan with additive Gaussian noise (`noise` times the peak).
pub fn synthetic_timescan<R: Rng>(model: &ScanModel, wavelength: f64, voltages: &[f64], noise: f64, rng: &mut R) -> Result<TimeScan> {
    let dist = Normal::new(0.0, noise * model.amplitude.abs()).map_err(|e| crate::Error::Domain(e.to_string()))?;
    Ok(TimeScan {
        voltage_v: voltages.to_vec(),
        transmission: voltages.iter().map(|&v| model.eval(v, wavelength) + dist.sample(rng)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::linspace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> AiryModel {
        AiryModel { index: IndexModel::default(), thickness_m: [75.2e-9, 75.2e-9] }
    }

    #[test]
    fn fringe_spacing_near_532() {
        // FSR in wavelength: lambda^2 / 2L = 24.8 nm, read off bare-cavity peaks
        let m = AiryModel { index: IndexModel::constant_fallback(), thickness_m: [0.0, 0.0] };
        let mirrors = SlabCoefficients::from_reflectivity(0.36, 0.0).unwrap();
        let lam = linspace(500e-9, 600e-9, 100001);
        let y: Vec<f64> = lam
            .iter()
            .map(|&l| steady_transmission(&mirrors, &mirrors, &EtalonGeometry::new(5.707e-6, 0.0).unwrap(), l).unwrap())
            .collect();
        let p = fringe_peaks(&y);
        let i = p.iter().position(|&i| lam[i] >= 525e-9).unwrap();
        let (a, b) = (lam[p[i]], lam[p[i + 1]]);
        // adjacent orders are one FSR apart in wavenumber
        assert!(((1.0 / a - 1.0 / b) * 2.0 * 5.707e-6 - 1.0).abs() < 1e-3);
        let approx = 532e-9_f64.powi(2) / (2.0 * 5.707e-6);
        assert!((approx - 24.8e-9).abs() < 0.05e-9);
        assert!((b - a - approx).abs() < 0.05 * approx);
        assert!((m.transmission(5.707e-6, 532e-9).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lam = linspace(500e-9, 900e-9, 801);
        let s = synthetic_white_light(&model(), 5.707e-6, &lam, 0.0, &mut rng).unwrap();
        let fit = fit_airy_wavelength(&s, &model(), 5.5e-6).unwrap();
        assert!(fit.converged);
        assert!((fit.value("cavity_length") / 5.707e-6 - 1.0).abs() < 1e-9);
        assert!(fit.residual_norm < 1e-10);
        // rescaled data: same length, scaled amplitude
        let scaled = SpectrumSeries::new(s.x_column, s.y_column, s.x.clone(), s.y.iter().map(|v| 7.0 * v).collect()).unwrap();
        let f2 = fit_airy_wavelength(&scaled, &model(), 5.5e-6).unwrap();
        assert!((f2.value("cavity_length") / 5.707e-6 - 1.0).abs() < 1e-9);
        assert!((f2.value("amplitude") - 7.0).abs() < 1e-8);
    }

    #[test]
    fn too_few_fringes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lam = linspace(530e-9, 540e-9, 50);
        let s = synthetic_white_light(&model(), 5.707e-6, &lam, 0.0, &mut rng).unwrap();
        assert!(fit_airy_wavelength(&s, &model(), 5.7e-6).is_err());
    }

    fn scan(r: f64) -> ScanModel {
        ScanModel { reflectivity: r, amplitude: 0.8, theta0: 0.7, a1: 40e-9, a2: 0.3e-9 }
    }

    #[test]
    fn timescan_recovers_finesse() {
        let v = linspace(0.0, 30.0, 3000);
        for (r, f) in [(0.3618, 2.809), (0.3571, 2.766), (0.2652, 1.9774)] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let data = synthetic_timescan(&scan(r), 532e-9, &v, 0.005, &mut rng).unwrap();
            let fit = fit_airy_timescan(&data, 532e-9, 30e-9).unwrap();
            assert!(fit.converged);
            assert!((fit.value("finesse") / f - 1.0).abs() < 0.005, "R={r}: {}", fit.value("finesse"));
            assert!((fit.value("reflectivity") - r).abs() < 3e-3);
        }
    }

    #[test]
    fn timescan_noiseless_round_trip() {
        let v = linspace(-5.0, 25.0, 1500);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = synthetic_timescan(&scan(0.3618), 632.8e-9, &v, 0.0, &mut rng).unwrap();
        let fit = fit_airy_timescan(&data, 632.8e-9, 50e-9).unwrap();
        assert!((fit.value("reflectivity") - 0.3618).abs() < 1e-8);
        assert!((fit.value("disp_per_volt2") - 0.3e-9).abs() < 1e-15);
        assert!(fit.residual_norm < 1e-8);
    }

    #[test]
    fn flat_scan_rejected() {
        let v = linspace(0.0, 30.0, 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = synthetic_timescan(&scan(0.0), 532e-9, &v, 0.0, &mut rng).unwrap();
        assert!(fit_airy_timescan(&data, 532e-9, 30e-9).is_err());
        let short = linspace(0.0, 4.0, 100);
        let one = synthetic_timescan(&scan(0.36), 532e-9, &short, 0.0, &mut rng).unwrap();
        assert!(fit_airy_timescan(&one, 532e-9, 30e-9).is_err());
    }
}
