//! Multi-peak Lorentzian fit of mechanical resonances in a PSD segment.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::lm::{levenberg_marquardt, LmOptions};
use super::peaks::{local_maxima_above, median};
use super::{FitParameter, FitResult};
use crate::error::{domain, Result};
use crate::series::{Column, SpectrumSeries};

/// One resonance of the `|chi|^2` shape, normalized to its peak height:
/// `h (f0 G)^2 / ((f0^2 - f^2)^2 + (f G)^2)` with `G = gamma / 2 pi` [Hz].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzPeak {
    pub frequency_hz: f64,
    pub linewidth_hz: f64,
    pub height: f64,
}

impl LorentzPeak {
    pub fn eval(&self, f: f64) -> f64 {
        let (f0, g) = (self.frequency_hz, self.linewidth_hz);
        self.height * (f0 * g).powi(2) / ((f0 * f0 - f * f).powi(2) + (f * g).powi(2))
    }

    pub fn quality_factor(&self) -> f64 {
        self.frequency_hz / self.linewidth_hz
    }
}

/// Threshold on peaks, in units of the segment median.
const PEAK_THRESHOLD: f64 = 3.0;

fn half_width(f: &[f64], y: &[f64], i: usize, floor: f64) -> f64 {
    let half = floor + 0.5 * (y[i] - floor);
    let mut lo = i;
    while lo > 0 && y[lo] > half {
        lo -= 1;
    }
    let mut hi = i;
    while hi + 1 < y.len() && y[hi] > half {
        hi += 1;
    }
    let bin = (f[f.len() - 1] - f[0]).abs() / (f.len() - 1).max(1) as f64;
    ((f[hi] - f[lo]) / 2.0).max(bin)
}

/// Fit `peak_count` Lorentzians plus a constant floor to a `freq_hz` series.
pub fn fit_lorentzian(spectrum: &SpectrumSeries, peak_count: usize) -> Result<FitResult> {
    if peak_count == 0 {
        return domain("peak count must be >= 1");
    }
    if !spectrum.is_strictly_increasing() {
        return domain("frequency grid must be strictly increasing");
    }
    let f = spectrum.x_si();
    let y = spectrum.y_si();
    if f.len() < 3 * peak_count + 2 {
        return domain("segment too short for the requested peaks");
    }
    let floor = median(&y);
    let threshold = PEAK_THRESHOLD * floor.max(0.0);

    let mut seeds: Vec<(usize, f64)> = Vec::new();
    for i in local_maxima_above(&y, threshold) {
        if seeds.len() == peak_count {
            break;
        }
        if seeds.iter().any(|&(j, hw)| (f[i] - f[j]).abs() < 1.5 * 2.0 * hw) {
            continue;
        }
        seeds.push((i, half_width(&f, &y, i, floor)));
    }
    if seeds.len() < peak_count {
        return domain(format!(
            "found {} peak(s) above {PEAK_THRESHOLD} x median floor, {peak_count} requested",
            seeds.len()
        ));
    }
    seeds.sort_by(|a, b| f[a.0].total_cmp(&f[b.0]));

    let ymax = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let seed_peaks: Vec<LorentzPeak> = seeds
        .iter()
        .map(|&(i, hw)| LorentzPeak { frequency_hz: f[i], linewidth_hz: 2.0 * hw, height: y[i] - floor })
        .collect();
    // internal: per peak (df / G_seed, ln(G / G_seed), h / ymax), then floor / ymax
    let unpack = |p: &[f64]| -> (Vec<LorentzPeak>, f64) {
        let peaks = seed_peaks
            .iter()
            .enumerate()
            .map(|(k, s)| LorentzPeak {
                frequency_hz: s.frequency_hz + p[3 * k] * s.linewidth_hz,
                linewidth_hz: s.linewidth_hz * p[3 * k + 1].exp(),
                height: p[3 * k + 2] * ymax,
            })
            .collect();
        (peaks, p[3 * seed_peaks.len()] * ymax)
    };
    let mut start = Vec::with_capacity(3 * peak_count + 1);
    for s in &seed_peaks {
        start.extend_from_slice(&[0.0, 0.0, s.height / ymax]);
    }
    start.push(floor / ymax);

    let out = levenberg_marquardt(
        |p, r| {
            let (peaks, fl) = unpack(p);
            for i in 0..f.len() {
                r[i] = (peaks.iter().map(|pk| pk.eval(f[i])).sum::<f64>() + fl - y[i]) / ymax;
            }
        },
        &start,
        f.len(),
        &LmOptions::default(),
    )?;
    let (peaks, fl) = unpack(&out.params);
    let sig = out.sigmas();
    let mut parameters = Vec::new();
    let mut flags = Vec::new();
    for (k, pk) in peaks.iter().enumerate() {
        let s = &seed_peaks[k];
        let sf = sig[3 * k] * s.linewidth_hz;
        let sg = sig[3 * k + 1] * pk.linewidth_hz;
        let q = pk.quality_factor();
        let sq = q * ((sf / pk.frequency_hz).powi(2) + (sg / pk.linewidth_hz).powi(2)).sqrt();
        let n = k + 1;
        parameters.push(FitParameter::new(&format!("frequency_{n}"), "Hz", pk.frequency_hz, sf));
        parameters.push(FitParameter::new(&format!("linewidth_{n}"), "Hz", pk.linewidth_hz, sg));
        parameters.push(FitParameter::new(&format!("q_{n}"), "1", q, sq));
        parameters.push(FitParameter::new(&format!("height_{n}"), spectrum.y_column.name(), pk.height, sig[3 * k + 2] * ymax));
        if pk.height <= fl.max(0.0) {
            flags.push(format!("peak {n} below floor"));
        }
    }
    parameters.push(FitParameter::new("floor", spectrum.y_column.name(), fl, sig[3 * peak_count] * ymax));
    Ok(FitResult {
        parameters,
        residual_norm: out.residual_norm * ymax,
        converged: out.converged,
        iterations: out.iterations,
        local_minima: Vec::new(),
        flags,
    })
}

/// Peaks plus floor with additive Gaussian noise of standard deviation
/// `noise` (absolute, PSD units).
pub fn synthetic_lorentzian<R: Rng>(
    peaks: &[LorentzPeak],
    floor: f64,
    freqs_hz: &[f64],
    noise: f64,
    rng: &mut R,
) -> Result<SpectrumSeries> {
    let dist = Normal::new(0.0, noise).map_err(|e| crate::Error::Domain(e.to_string()))?;
    let y = freqs_hz
        .iter()
        .map(|&f| peaks.iter().map(|p| p.eval(f)).sum::<f64>() + floor + dist.sample(rng))
        .collect();
    SpectrumSeries::new(Column::FreqHz, Column::PsdV2Hz, freqs_hz.to_vec(), y)
}
