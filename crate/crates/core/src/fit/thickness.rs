//! Membrane thickness from reflectivities measured at several wavelengths.

use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::{FitParameter, FitResult, LocalMinimum};
use crate::error::{domain, Result};
use crate::slab::IndexModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectivityPoint {
    pub wavelength_m: f64,
    pub reflectivity: f64,
    pub sigma: f64,
}

/// Reflectivities of the measured membranes (532, 632.8 and 980 nm).
pub fn reference_points() -> Vec<ReflectivityPoint> {
    vec![
        ReflectivityPoint { wavelength_m: 532e-9, reflectivity: 0.3618, sigma: 0.0003 },
        ReflectivityPoint { wavelength_m: 632.8e-9, reflectivity: 0.3571, sigma: 0.0003 },
        ReflectivityPoint { wavelength_m: 980e-9, reflectivity: 0.2652, sigma: 0.0001 },
    ]
}

const SCAN_POINTS: usize = 4000;

fn weighted_residuals(points: &[ReflectivityPoint], index: &IndexModel, thickness: f64, r: &mut [f64]) -> Result<()> {
    for (p, ri) in points.iter().zip(r.iter_mut()) {
        let model = index.coefficients(thickness.max(0.0), p.wavelength_m)?.reflectivity;
        *ri = (model - p.reflectivity) / p.sigma;
    }
    Ok(())
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Weighted least-squares thickness over `[0, max lambda / 2n]`.
///
/// The objective is scanned on a grid; every local minimum is refined and
/// reported, and the one closest to `guess` is polished and returned.
pub fn fit_thickness(points: &[ReflectivityPoint], index: &IndexModel, guess: f64) -> Result<FitResult> {
    if points.is_empty() {
        return domain("no reflectivity points");
    }
    for p in points {
        if !(p.wavelength_m > 0.0) || !(0.0..=1.0).contains(&p.reflectivity) || !(p.sigma > 0.0) {
            return domain(format!("invalid reflectivity point {p:?}"));
        }
    }
    let upper = points
        .iter()
        .map(|p| Ok(p.wavelength_m / (2.0 * index.index_at(p.wavelength_m)?)))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let cost = |l: f64| -> f64 {
        let mut r = vec![0.0; points.len()];
        match weighted_residuals(points, index, l, &mut r) {
            Ok(()) => r.iter().map(|v| v * v).sum(),
            Err(_) => f64::INFINITY,
        }
    };
    let grid: Vec<f64> = (0..=SCAN_POINTS).map(|i| upper * i as f64 / SCAN_POINTS as f64).collect();
    let costs: Vec<f64> = grid.iter().map(|&l| cost(l)).collect();
    let mut minima = Vec::new();
    for i in 0..grid.len() {
        let left = if i == 0 { f64::INFINITY } else { costs[i - 1] };
        let right = if i + 1 == grid.len() { f64::INFINITY } else { costs[i + 1] };
        if costs[i] <= left && costs[i] < right {
            let a = grid[i.saturating_sub(1)];
            let b = grid[(i + 1).min(grid.len() - 1)];
            let l = golden_min(cost, a, b);
            minima.push(LocalMinimum { value: l, cost: cost(l) });
        }
    }
    let chosen = minima
        .iter()
        .min_by(|a, b| (a.value - guess).abs().total_cmp(&(b.value - guess).abs()))
        .cloned()
        .ok_or_else(|| crate::Error::Internal("thickness objective has no minimum".into()))?;

    let scale = chosen.value.max(1e-12);
    let out = levenberg_marquardt(
        |p, r| {
            if weighted_residuals(points, index, p[0] * scale, r).is_err() {
                r.iter_mut().for_each(|v| *v = f64::INFINITY);
            }
        },
        &[1.0],
        points.len(),
        &LmOptions::default(),
    )?;
    let thickness = out.params[0] * scale;
    let mut flags = Vec::new();
    if points.len() < 2 {
        flags.push("single wavelength: thickness is not uniquely determined".to_string());
    }
    if minima.len() > 1 {
        flags.push(format!("{} local minima in [0, {upper:.4e}] m", minima.len()));
    }
    Ok(FitResult {
        parameters: vec![FitParameter::new("thickness", "m", thickness, out.sigmas()[0] * scale)],
        residual_norm: out.residual_norm,
        converged: out.converged,
        iterations: out.iterations,
        local_minima: minima,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(index: &IndexModel, l: f64) -> Vec<ReflectivityPoint> {
        [532e-9, 632.8e-9, 980e-9]
            .into_iter()
            .map(|w| ReflectivityPoint {
                wavelength_m: w,
                reflectivity: index.coefficients(l, w).unwrap().reflectivity,
                sigma: 3e-4,
            })
            .collect()
    }

    #[test]
    fn forward_model_round_trip() {
        for index in [IndexModel::default(), IndexModel::constant_fallback()] {
            let fit = fit_thickness(&synth(&index, 75.2e-9), &index, 70e-9).unwrap();
            assert!((fit.value("thickness") / 75.2e-9 - 1.0).abs() < 1e-6, "{}", fit.value("thickness"));
            assert!(fit.residual_norm < 1e-6);
        }
    }

    #[test]
    fn single_point_lists_all_minima() {
        let index = IndexModel::constant_fallback();
        let pts = &synth(&index, 75.2e-9)[..1];
        let fit = fit_thickness(pts, &index, 75e-9).unwrap();
        // R(L) is periodic in L with period lambda / 2n and symmetric inside
        // each period: two exact solutions in [0, lambda / 2n]
        assert_eq!(fit.local_minima.len(), 2);
        assert!(fit.local_minima.iter().all(|m| m.cost < 1e-12));
        let period = 532e-9 / (2.0 * 2.046);
        assert!((fit.local_minima[0].value - (period - 75.2e-9)).abs() < 1e-12);
        assert!((fit.local_minima[1].value - 75.2e-9).abs() < 1e-12);
        assert!((fit.value("thickness") - 75.2e-9).abs() < 1e-12);
        assert!(!fit.flags.is_empty());
    }

    #[test]
    fn guess_selects_branch() {
        let index = IndexModel::constant_fallback();
        let pts = &synth(&index, 75.2e-9)[..1];
        let fit = fit_thickness(pts, &index, 50e-9).unwrap();
        assert!((fit.value("thickness") - (532e-9 / (2.0 * 2.046) - 75.2e-9)).abs() < 1e-12);
    }

    #[test]
    fn invalid_points() {
        let bad = [ReflectivityPoint { wavelength_m: 532e-9, reflectivity: 0.3, sigma: 0.0 }];
        assert!(fit_thickness(&bad, &IndexModel::default(), 7e-8).is_err());
        assert!(fit_thickness(&[], &IndexModel::default(), 7e-8).is_err());
    }
}
