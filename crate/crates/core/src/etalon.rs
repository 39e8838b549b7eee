//! Static-mirror response of the two-membrane etalon.
//!
//! The intracavity field obeys `E = t1 E1 + mu E(t - tau)` with the
//! round-trip factor `mu = r1 * conj(rbar2)`, `rbar2 = -r2 exp(i omega_L tau)`.
//! For static mirrors the sum over round trips is geometric and the
//! transmission is the Airy function `|t1 t2|^2 / |1 - mu|^2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::series::{Column, SpectrumSeries};
use crate::slab::SlabCoefficients;
use crate::SPEED_OF_LIGHT;

/// Cavity geometry. `x1` sits at the origin and `x2 = L0 + deltaL`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtalonGeometry {
    /// Resonant reference length [m].
    pub l0: f64,
    /// Stationary mismatch from `l0` [m].
    pub delta_l: f64,
    pub x1: f64,
    pub x2: f64,
    /// Round-trip time `2 (L0 + deltaL) / c` [s].
    pub tau: f64,
    /// Free spectral range `1 / tau` [Hz].
    pub fsr: f64,
}

impl EtalonGeometry {
    pub fn new(l0: f64, delta_l: f64) -> Result<Self> {
        let length = l0 + delta_l;
        if !l0.is_finite() || !delta_l.is_finite() || l0 <= 0.0 || length <= 0.0 {
            return domain(format!("cavity length must be positive (L0 = {l0}, dL = {delta_l})"));
        }
        let tau = 2.0 * length / SPEED_OF_LIGHT;
        Ok(Self {
            l0,
            delta_l,
            x1: 0.0,
            x2: length,
            tau,
            fsr: 1.0 / tau,
        })
    }

    /// Geometry whose `l0` is the resonant length closest to `approx_length`
    /// for the given membranes and wavelength.
    pub fn resonant(
        c1: &SlabCoefficients,
        c2: &SlabCoefficients,
        wavelength: f64,
        approx_length: f64,
        delta_l: f64,
    ) -> Result<Self> {
        Self::new(resonant_length(c1, c2, wavelength, approx_length)?, delta_l)
    }

    pub fn length(&self) -> f64 {
        self.x2 - self.x1
    }

    /// Same `l0`, mismatch increased by `shift`.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        Self::new(self.l0, self.delta_l + shift)
    }

    /// Mismatch above 10% of `l0` stretches the "small mismatch" picture.
    pub fn mismatch_flagged(&self) -> bool {
        self.delta_l.abs() > 0.1 * self.l0
    }
}

/// Resonant cavity length closest to `approx_length`: the length at which
/// `arg(mu) = 0 (mod 2 pi)`.
pub fn resonant_length(
    c1: &SlabCoefficients,
    c2: &SlabCoefficients,
    wavelength: f64,
    approx_length: f64,
) -> Result<f64> {
    if wavelength <= 0.0 || approx_length <= 0.0 {
        return domain("wavelength and approximate length must be positive");
    }
    let k = 2.0 * PI / wavelength;
    // mu = -r1 conj(r2) exp(-2 i k L)  =>  arg mu = pi + arg r1 - arg r2 - 2 k L
    let offset = PI + c1.r.arg() - c2.r.arg();
    let q = ((offset - 2.0 * k * approx_length) / (2.0 * PI)).round();
    let mut length = (offset - 2.0 * PI * q) / (2.0 * k);
    if length <= 0.0 {
        length += PI / k;
    }
    Ok(length)
}

/// `rbar2 = -r2 exp(i omega_L tau)`.
pub fn folded_r2(c2: &SlabCoefficients, geometry: &EtalonGeometry, wavelength: f64) -> Complex64 {
    let phase = 4.0 * PI * geometry.length() / wavelength;
    -c2.r * Complex64::from_polar(1.0, phase)
}

/// Round-trip factor `mu = r1 conj(rbar2)`; `|mu| = sqrt(R1 R2)`.
pub fn round_trip_factor(
    c1: &SlabCoefficients,
    c2: &SlabCoefficients,
    geometry: &EtalonGeometry,
    wavelength: f64,
) -> Complex64 {
    c1.r * folded_r2(c2, geometry, wavelength).conj()
}

/// Round-trip magnitudes within this distance of 1 are treated as lossless
/// mirrors, for which no steady state exists.
pub const DIVERGENCE_MARGIN: f64 = 1e-12;

pub(crate) fn check_convergent(mu: Complex64) -> Result<()> {
    let m = mu.norm();
    if !(m < 1.0 - DIVERGENCE_MARGIN) {
        return Err(Error::Divergent(m));
    }
    Ok(())
}

/// Steady transmitted intensity fraction for static mirrors.
pub fn steady_transmission(
    c1: &SlabCoefficients,
    c2: &SlabCoefficients,
    geometry: &EtalonGeometry,
    wavelength: f64,
) -> Result<f64> {
    let mu = round_trip_factor(c1, c2, geometry, wavelength);
    check_convergent(mu)?;
    Ok((c1.t * c2.t).norm_sqr() / (Complex64::new(1.0, 0.0) - mu).norm_sqr())
}

/// Relative tolerance on the half-maximum crossing.
const FWHM_TOL: f64 = 1e-9;

/// Finesse `FSR / FWHM` of the Airy peak, with the width found by bisection on
/// the half-maximum crossing of the round-trip-phase scan.
///
/// Fails when the fringe never falls to half its maximum, i.e. for
/// `|mu| <= 3 - 2 sqrt(2)` (about 0.1716), where the width is undefined.
pub fn finesse_fwhm(c1: &SlabCoefficients, c2: &SlabCoefficients) -> Result<f64> {
    let m = (c1.reflectivity * c2.reflectivity).sqrt();
    check_convergent(Complex64::new(m, 0.0))?;
    // Only |mu| matters; the transmission profile relative to its peak is
    // (1 - m)^2 / |1 - m e^{i d}|^2.
    let profile = |d: f64| (1.0 - m).powi(2) / (1.0 + m * m - 2.0 * m * d.cos());
    if profile(PI) >= 0.5 {
        return domain(format!(
            "fringe contrast too low for a half-maximum width (|mu| = {m:.4})"
        ));
    }
    let (mut lo, mut hi) = (0.0_f64, PI);
    while hi - lo > FWHM_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if profile(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let half_width = 0.5 * (lo + hi);
    Ok(2.0 * PI / (2.0 * half_width))
}

/// Transmission versus displacement of membrane 2, normalized to the Airy
/// peak so that a resonance reads 1.
pub fn fringe_scan(
    c1: &SlabCoefficients,
    c2: &SlabCoefficients,
    geometry: &EtalonGeometry,
    wavelength: f64,
    displacements: &[f64],
) -> Result<SpectrumSeries> {
    if displacements.is_empty() {
        return domain("displacement grid is empty");
    }
    let m = (c1.reflectivity * c2.reflectivity).sqrt();
    check_convergent(Complex64::new(m, 0.0))?;
    let peak = (c1.t * c2.t).norm_sqr() / (1.0 - m).powi(2);
    let y = displacements
        .iter()
        .map(|&d| {
            let g = geometry.shifted(d)?;
            Ok(steady_transmission(c1, c2, &g, wavelength)? / peak)
        })
        .collect::<Result<Vec<_>>>()?;
    SpectrumSeries::new(Column::DisplacementM, Column::TransmissionNorm, displacements.to_vec(), y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::linspace;

    const LAMBDA: f64 = 532e-9;

    fn identical(r: f64) -> (SlabCoefficients, SlabCoefficients) {
        let c = SlabCoefficients::from_reflectivity(r, 0.3).unwrap();
        (c, c)
    }

    /// Closed-form FWHM finesse, used only as an independent check on the
    /// bisection: half maximum where cos d = (1 + m^2 - 2 (1 - m)^2) / (2 m).
    fn finesse_closed_form(m: f64) -> f64 {
        let c = (1.0 + m * m - 2.0 * (1.0 - m).powi(2)) / (2.0 * m);
        PI / c.acos()
    }

    #[test]
    fn round_trip_factor_magnitude() {
        let (c1, c2) = identical(0.3618);
        let g = EtalonGeometry::new(5.707e-6, 0.0).unwrap();
        assert!((round_trip_factor(&c1, &c2, &g, LAMBDA).norm() - 0.3618).abs() < 1e-15);

        let transparent = SlabCoefficients::transparent();
        assert_eq!(round_trip_factor(&c1, &transparent, &g, LAMBDA).norm(), 0.0);
    }

    #[test]
    fn round_trip_phase_period_is_half_wavelength() {
        let (c1, c2) = identical(0.3618);
        let g = EtalonGeometry::new(5.707e-6, 12e-9).unwrap();
        let a = round_trip_factor(&c1, &c2, &g, LAMBDA);
        let b = round_trip_factor(&c1, &c2, &g.shifted(LAMBDA / 2.0).unwrap(), LAMBDA);
        assert!((a - b).norm() < 1e-9);
        let quarter = round_trip_factor(&c1, &c2, &g.shifted(LAMBDA / 4.0).unwrap(), LAMBDA);
        assert!((a + quarter).norm() < 1e-9);
    }

    #[test]
    fn resonance_and_antiresonance() {
        let (c1, c2) = identical(0.3618);
        let g = EtalonGeometry::resonant(&c1, &c2, LAMBDA, 5.707e-6, 0.0).unwrap();
        assert!((g.l0 - 5.707e-6).abs() <= LAMBDA / 4.0);
        let mu = round_trip_factor(&c1, &c2, &g, LAMBDA);
        assert!(mu.arg().abs() < 1e-9);
        assert!((steady_transmission(&c1, &c2, &g, LAMBDA).unwrap() - 1.0).abs() < 1e-12);

        let anti = g.shifted(LAMBDA / 4.0).unwrap();
        let r: f64 = 0.3618;
        let want = (1.0 - r).powi(2) / (1.0 + r).powi(2);
        assert!((steady_transmission(&c1, &c2, &anti, LAMBDA).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.21963).abs() < 1e-5);
    }

    #[test]
    fn truncated_series_matches_closed_form() {
        let (c1, c2) = identical(0.3618);
        let g = EtalonGeometry::new(5.707e-6, 37e-9).unwrap();
        let mu = round_trip_factor(&c1, &c2, &g, LAMBDA);
        let partial: Complex64 = (0..=28).map(|n| mu.powi(n)).sum();
        let series = (c1.t * c2.t * partial).norm_sqr();
        let closed = steady_transmission(&c1, &c2, &g, LAMBDA).unwrap();
        assert!((series - closed).abs() < 1e-12);
    }

    #[test]
    fn divergent_cavity_rejected() {
        let (c1, c2) = identical(1.0);
        let g = EtalonGeometry::new(1e-5, 0.0).unwrap();
        assert!(matches!(
            steady_transmission(&c1, &c2, &g, LAMBDA),
            Err(Error::Divergent(_))
        ));
        assert!(matches!(finesse_fwhm(&c1, &c2), Err(Error::Divergent(_))));
    }

    #[test]
    fn finesse_reported_values() {
        for (r, want, tol) in [(0.3618, 2.809, 0.003), (0.3571, 2.766, 0.003), (0.2652, 1.9774, 0.003)] {
            let (c1, c2) = identical(r);
            let f = finesse_fwhm(&c1, &c2).unwrap();
            assert!((f - want).abs() < tol, "R = {r}: F = {f}");
            assert!((f - finesse_closed_form(r)).abs() < 1e-8);
        }
    }

    #[test]
    fn finesse_low_contrast_and_monotonic() {
        let (c1, c2) = identical(0.15);
        assert!(finesse_fwhm(&c1, &c2).is_err());
        let mut last = 0.0;
        for r in linspace(0.172, 0.99, 200) {
            let (c1, c2) = identical(r);
            let f = finesse_fwhm(&c1, &c2).unwrap();
            assert!(f > last, "finesse not increasing at R = {r}");
            last = f;
        }
    }

    #[test]
    fn fringe_scan_period_and_width() {
        let (c1, c2) = identical(0.3618);
        let g = EtalonGeometry::resonant(&c1, &c2, LAMBDA, 5.707e-6, 0.0).unwrap();
        let d = linspace(-0.3 * LAMBDA, 0.8 * LAMBDA, 22001);
        let scan = fringe_scan(&c1, &c2, &g, LAMBDA, &d).unwrap();
        let peaks: Vec<f64> = (1..d.len() - 1)
            .filter(|&i| scan.y[i] > scan.y[i - 1] && scan.y[i] >= scan.y[i + 1])
            .map(|i| d[i])
            .collect();
        assert_eq!(peaks.len(), 2);
        let step = d[1] - d[0];
        for w in peaks.windows(2) {
            assert!((w[1] - w[0] - LAMBDA / 2.0).abs() < 2.0 * step);
        }
        let max = scan.y.iter().cloned().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-6);

        // FWHM in displacement = (lambda / 2) / F = 94.7 nm for F = 2.809
        let above = scan
            .y
            .iter()
            .zip(&d)
            .filter(|(y, x)| **y >= 0.5 && x.abs() < LAMBDA / 4.0)
            .count();
        let fwhm = above as f64 * step;
        assert!((fwhm - 94.7e-9).abs() < 0.3e-9, "FWHM = {fwhm}");
    }

    #[test]
    fn fringe_scan_without_second_membrane_is_flat() {
        let c1 = SlabCoefficients::from_reflectivity(0.3618, 0.1).unwrap();
        let c2 = SlabCoefficients::transparent();
        let g = EtalonGeometry::new(5.7e-6, 0.0).unwrap();
        let scan = fringe_scan(&c1, &c2, &g, LAMBDA, &linspace(0.0, 3e-7, 50)).unwrap();
        assert!(scan.y.iter().all(|&y| (y - 1.0).abs() < 1e-14));
        assert!(fringe_scan(&c1, &c2, &g, LAMBDA, &[]).is_err());
    }

    #[test]
    fn geometry_invariants() {
        let g = EtalonGeometry::new(5e-6, 1e-7).unwrap();
        assert!((g.tau - 2.0 * 5.1e-6 / SPEED_OF_LIGHT).abs() < 1e-24);
        assert!((g.fsr * g.tau - 1.0).abs() < 1e-15);
        assert!(g.x2 > g.x1);
        assert!(!g.mismatch_flagged());
        assert!(EtalonGeometry::new(5e-6, 1e-6).unwrap().mismatch_flagged());
        assert!(EtalonGeometry::new(-1.0, 0.0).is_err());
    }
}
