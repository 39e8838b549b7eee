//! Balanced homodyne readout of the reflected field and the voltage noise
//! spectrum it produces.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::etalon::EtalonGeometry;
use crate::mechanics::{displacement_spectra, Correlation, MechMode};
use crate::response::{bad_cavity_reflection, BadCavity, ResponseParams};
use crate::series::{Column, SpectrumSeries};
use crate::slab::SlabCoefficients;

/// How `lo_phase_rad` is referenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoReference {
    /// Phase of the local oscillator itself.
    Absolute,
    /// Offset from the phase of the reflected carrier, as for a locked
    /// interferometer; `+-pi/2` reads the phase quadrature. Where the
    /// carrier vanishes (a symmetric cavity on resonance) there is nothing to
    /// lock to and the phase is taken as absolute.
    #[default]
    Carrier,
}

/// Reflected-carrier magnitude below which the carrier reference is void.
pub const CARRIER_LOCK_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionChain {
    pub p_in_w: f64,
    pub p_lo_w: f64,
    pub lo_phase_rad: f64,
    #[serde(default)]
    pub lo_reference: LoReference,
    pub transimpedance_v_per_a: f64,
    pub responsivity_a_per_w: f64,
    /// Amplifier bandwidth [rad/s]; recorded, not applied.
    pub bandwidth_rad_s: f64,
    pub noise_floor_v2_hz: f64,
}

impl DetectionChain {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.p_in_w, self.p_lo_w, self.noise_floor_v2_hz, self.bandwidth_rad_s];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return domain(format!("powers, bandwidth and floor must be >= 0: {self:?}"));
        }
        if !self.lo_phase_rad.is_finite() || !self.transimpedance_v_per_a.is_finite() || !self.responsivity_a_per_w.is_finite() {
            return domain("detection chain has non-finite entries");
        }
        Ok(())
    }

    /// Absolute LO phase given the reflected carrier coefficient.
    pub fn absolute_phase(&self, carrier: Complex64) -> f64 {
        match self.lo_reference {
            LoReference::Absolute => self.lo_phase_rad,
            LoReference::Carrier if carrier.norm() < CARRIER_LOCK_THRESHOLD => self.lo_phase_rad,
            LoReference::Carrier => carrier.arg() + self.lo_phase_rad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Photocurrent {
    pub current_a: f64,
    pub voltage_v: f64,
}

/// Difference photocurrent of a balanced detector with a unit-envelope LO at
/// absolute phase `lo_phase`:
/// `I = 2 sqrt(P_lo P_in) Re{exp(-i phi) E_r / sqrt(P_in)}`, `V = g_T S I`.
pub fn photocurrent(er: Complex64, lo_phase: f64, chain: &DetectionChain) -> Photocurrent {
    let quad = if chain.p_in_w > 0.0 {
        (Complex64::from_polar(1.0, -lo_phase) * er / chain.p_in_w.sqrt()).re
    } else {
        0.0
    };
    let current_a = 2.0 * (chain.p_lo_w * chain.p_in_w).sqrt() * quad;
    Photocurrent { current_a, voltage_v: chain.transimpedance_v_per_a * chain.responsivity_a_per_w * current_a }
}

/// LO phase reading the quadrature orthogonal to the reflected carrier.
pub fn carrier_quadrature_phase(bc: &BadCavity) -> f64 {
    bc.r0.arg() + PI / 2.0
}

/// Transduction gains `G_j = Im{exp(-i phi) R1_j}` at absolute LO phase `phi`.
pub fn quadrature_gains(bc: &BadCavity, lo_phase: f64) -> [f64; 2] {
    let rot = Complex64::from_polar(1.0, -lo_phase);
    [(rot * bc.r1[0]).im, (rot * bc.r1[1]).im]
}

/// Prefactor `(4 g_T S omega_L / c sqrt(2 P_lo P_in))^2`.
pub fn spectrum_prefactor(chain: &DetectionChain, wavelength: f64) -> f64 {
    let omega_l = 2.0 * PI * crate::SPEED_OF_LIGHT / wavelength;
    let a = 4.0 * chain.transimpedance_v_per_a * chain.responsivity_a_per_w * omega_l / crate::SPEED_OF_LIGHT
        * (2.0 * chain.p_lo_w * chain.p_in_w).sqrt();
    a * a
}

/// Peak weights `(eta_j G_j)^2` times the prefactor, per membrane.
pub fn membrane_weights(chain: &DetectionChain, bc: &BadCavity, modes: [&MechMode; 2], wavelength: f64) -> [f64; 2] {
    let g = quadrature_gains(bc, chain.absolute_phase(bc.r0));
    let pre = spectrum_prefactor(chain, wavelength);
    [pre * (modes[0].overlap * g[0]).powi(2), pre * (modes[1].overlap * g[1]).powi(2)]
}

/// Single-sided voltage noise spectrum [V^2/Hz] on `freqs_hz`:
///
/// ```text
/// S_W = A { (eta1 G1)^2 S11 + (eta2 G2)^2 S22 - eta1 eta2 G1 G2 Re S12 } + floor
/// ```
pub fn voltage_noise_spectrum(
    chain: &DetectionChain,
    bc: &BadCavity,
    modes: [&MechMode; 2],
    correlation: Correlation,
    wavelength: f64,
    freqs_hz: &[f64],
) -> Result<SpectrumSeries> {
    chain.validate()?;
    let y = spectrum_values(chain, bc, modes, correlation, wavelength, freqs_hz)?;
    SpectrumSeries::new(Column::FreqHz, Column::PsdV2Hz, freqs_hz.to_vec(), y)
}

fn spectrum_values(
    chain: &DetectionChain,
    bc: &BadCavity,
    modes: [&MechMode; 2],
    correlation: Correlation,
    wavelength: f64,
    freqs_hz: &[f64],
) -> Result<Vec<f64>> {
    let g = quadrature_gains(bc, chain.absolute_phase(bc.r0));
    let a = [modes[0].overlap * g[0], modes[1].overlap * g[1]];
    let pre = spectrum_prefactor(chain, wavelength);
    freqs_hz
        .iter()
        .map(|&f| {
            let s = displacement_spectra(modes[0], modes[1], 2.0 * PI * f, correlation);
            let signal = a[0] * a[0] * s.s11 + a[1] * a[1] * s.s22 - a[0] * a[1] * s.s12.re;
            // allow for rounding in the exactly-cancelling common-drive case
            if signal < -1e-12 * (a[0] * a[0] * s.s11 + a[1] * a[1] * s.s22) {
                return Err(Error::Internal(format!("negative PSD {signal:e} at {f} Hz")));
            }
            Ok(pre * signal.max(0.0) + chain.noise_floor_v2_hz)
        })
        .collect()
}

/// Phenomenological piezo: cavity-length offset per volt and the relative
/// frequency shift per volt of each membrane's mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiezoModel {
    pub displacement_per_volt_m: f64,
    pub beta_per_v: [f64; 2],
}

impl Default for PiezoModel {
    fn default() -> Self {
        Self { displacement_per_volt_m: 1e-8, beta_per_v: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone)]
pub struct SweepInputs {
    pub c1: SlabCoefficients,
    pub c2: SlabCoefficients,
    pub geometry: EtalonGeometry,
    pub wavelength: f64,
    pub chain: DetectionChain,
    pub modes: [MechMode; 2],
    pub correlation: Correlation,
    pub piezo: PiezoModel,
    pub level_calibration: f64,
    /// Cavity-length offsets in units of `lambda / 2`.
    pub dl_over_halflambda: Vec<f64>,
    pub freqs_hz: Vec<f64>,
}

/// Noise spectra versus cavity-length offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMap {
    pub dl_grid: Vec<f64>,
    pub freq_grid: Vec<f64>,
    pub psd_rows: Vec<Vec<f64>>,
    /// Per-row peak weights of membrane 1 and 2 (level-calibrated).
    pub weights: Vec<[f64; 2]>,
    /// Rows where the mechanical frequencies are not far below the cavity
    /// bandwidth.
    pub bad_cavity_violations: usize,
}

impl SweepMap {
    /// Weight summed over all offsets, per membrane.
    pub fn integrated_weights(&self) -> [f64; 2] {
        self.weights.iter().fold([0.0, 0.0], |acc, w| [acc[0] + w[0], acc[1] + w[1]])
    }

    /// 1 or 2, whichever membrane carries more signal over the map.
    pub fn dominant_membrane(&self) -> usize {
        let w = self.integrated_weights();
        if w[0] >= w[1] {
            1
        } else {
            2
        }
    }
}

fn sweep_row(inp: &SweepInputs, dl: f64) -> Result<(Vec<f64>, [f64; 2], bool)> {
    let shift = dl * inp.wavelength / 2.0;
    let geometry = inp.geometry.shifted(shift)?;
    let volts = if inp.piezo.displacement_per_volt_m != 0.0 { shift / inp.piezo.displacement_per_volt_m } else { 0.0 };
    let m1 = inp.modes[0].piezo_biased(inp.piezo.beta_per_v[0], volts);
    let m2 = inp.modes[1].piezo_biased(inp.piezo.beta_per_v[1], volts);
    let p = ResponseParams::new(inp.c1, inp.c2, geometry, inp.wavelength, [0.0, 0.0], [m1.omega_m, m2.omega_m])?;
    let bc = bad_cavity_reflection(&p)?;
    let mut row = spectrum_values(&inp.chain, &bc, [&m1, &m2], inp.correlation, inp.wavelength, &inp.freqs_hz)?;
    let cal = inp.level_calibration;
    let floor = inp.chain.noise_floor_v2_hz;
    for v in &mut row {
        *v = cal * (*v - floor) + floor;
    }
    let w = membrane_weights(&inp.chain, &bc, [&m1, &m2], inp.wavelength);
    Ok((row, [cal * w[0], cal * w[1]], bc.precondition_ok))
}

/// Build the map, computing rows on `workers` threads. Rows are merged in
/// grid order, so the result does not depend on the worker count.
pub fn sweep_map(inp: &SweepInputs, workers: usize) -> Result<SweepMap> {
    if inp.dl_over_halflambda.is_empty() || inp.freqs_hz.is_empty() {
        return domain("sweep grids must be non-empty");
    }
    if !(inp.level_calibration >= 0.0) {
        return domain("level calibration must be >= 0");
    }
    inp.chain.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let rows: Vec<_> = pool.install(|| {
        inp.dl_over_halflambda
            .par_iter()
            .map(|&dl| sweep_row(inp, dl))
            .collect::<Result<Vec<_>>>()
    })?;
    let bad_cavity_violations = rows.iter().filter(|r| !r.2).count();
    let (psd_rows, weights) = rows.into_iter().map(|(r, w, _)| (r, w)).unzip();
    Ok(SweepMap {
        dl_grid: inp.dl_over_halflambda.clone(),
        freq_grid: inp.freqs_hz.clone(),
        psd_rows,
        weights,
        bad_cavity_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, DriveField, MembraneTrajectory};
    use crate::series::linspace;

    const LAMBDA: f64 = 532e-9;

    fn chain() -> DetectionChain {
        DetectionChain {
            p_in_w: 1e-3,
            p_lo_w: 5e-3,
            lo_phase_rad: PI / 2.0,
            lo_reference: LoReference::Carrier,
            transimpedance_v_per_a: 1e4,
            responsivity_a_per_w: 0.3,
            bandwidth_rad_s: 2.0 * PI * 1e7,
            noise_floor_v2_hz: 1e-14,
        }
    }

    fn modes() -> [MechMode; 2] {
        let w = 2.0 * PI * 411.2e3;
        [
            MechMode::new(w, w / 1e5, 1e-10, 0.5, 1e-16).unwrap(),
            MechMode::new(w + 2.0 * PI * 300.0, w / 1e5, 1e-10, 0.9, 1e-16).unwrap(),
        ]
    }

    fn cavity(dl: f64) -> ResponseParams {
        let c = SlabCoefficients::from_reflectivity(0.3618, 0.4).unwrap();
        let g = EtalonGeometry::new(5.707e-6, dl).unwrap();
        let m = modes();
        ResponseParams::new(c, c, g, LAMBDA, [0.0; 2], [m[0].omega_m, m[1].omega_m]).unwrap()
    }

    #[test]
    fn carrier_reference_without_carrier() {
        let ch = chain();
        assert_eq!(ch.absolute_phase(Complex64::new(0.0, 3e-17)), ch.lo_phase_rad);
        let z = Complex64::from_polar(0.2, 0.7);
        assert!((ch.absolute_phase(z) - 0.7 - ch.lo_phase_rad).abs() < 1e-15);
    }

    #[test]
    fn photocurrent_quadratures() {
        let ch = chain();
        assert_eq!(photocurrent(Complex64::new(0.0, 0.0), 0.3, &ch).current_a, 0.0);
        let er = Complex64::new(0.02, 0.0);
        let a = photocurrent(er, 0.0, &ch);
        assert!((a.current_a - 2.0 * ch.p_lo_w.sqrt() * 0.02).abs() < 1e-15);
        assert!((a.voltage_v - a.current_a * 1e4 * 0.3).abs() < 1e-15);
        let er = Complex64::new(0.01, 0.03);
        let b = photocurrent(er, PI / 2.0, &ch);
        assert!((b.current_a - 2.0 * ch.p_lo_w.sqrt() * 0.03).abs() < 1e-15);
        for phi in linspace(0.0, 2.0 * PI, 17) {
            assert!(photocurrent(er, phi, &ch).current_a.abs() <= 2.0 * ch.p_lo_w.sqrt() * er.norm() + 1e-15);
        }
    }

    #[test]
    fn spectrum_floor_and_single_membrane() {
        let ch = chain();
        let bc = bad_cavity_reflection(&cavity(20e-9)).unwrap();
        let [m1, m2] = modes();
        let f = linspace(410.0e3, 412.5e3, 2001);
        for corr in [Correlation::Uncorrelated, Correlation::CommonDrive] {
            let s = voltage_noise_spectrum(&ch, &bc, [&m1, &m2], corr, LAMBDA, &f).unwrap();
            assert!(s.y.iter().all(|&v| v >= ch.noise_floor_v2_hz));
        }
        let silent = MechMode { overlap: 0.0, ..m1 };
        let s = voltage_noise_spectrum(&ch, &bc, [&silent, &m2], Correlation::CommonDrive, LAMBDA, &f).unwrap();
        let (imax, _) = s.y.iter().enumerate().fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert!((f[imax] - m2.frequency_hz()).abs() < 2.0);
        let g = quadrature_gains(&bc, ch.absolute_phase(bc.r0));
        let pre = spectrum_prefactor(&ch, LAMBDA);
        for (i, &fi) in f.iter().enumerate().step_by(97) {
            let chi = crate::mechanics::susceptibility(&m2, 2.0 * PI * fi);
            let want = pre * (m2.overlap * g[1]).powi(2) * chi.norm_sqr() * m2.force.powi(2) + ch.noise_floor_v2_hz;
            assert!((s.y[i] - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn uncorrelated_is_sum_of_lorentzians() {
        let ch = DetectionChain { noise_floor_v2_hz: 0.0, ..chain() };
        let bc = bad_cavity_reflection(&cavity(0.0)).unwrap();
        let [m1, m2] = modes();
        let f = linspace(410.5e3, 412.0e3, 101);
        let both = voltage_noise_spectrum(&ch, &bc, [&m1, &m2], Correlation::Uncorrelated, LAMBDA, &f).unwrap();
        let a = voltage_noise_spectrum(&ch, &bc, [&m1, &MechMode { overlap: 0.0, ..m2 }], Correlation::Uncorrelated, LAMBDA, &f).unwrap();
        let b = voltage_noise_spectrum(&ch, &bc, [&MechMode { overlap: 0.0, ..m1 }, &m2], Correlation::Uncorrelated, LAMBDA, &f).unwrap();
        for i in 0..f.len() {
            assert!((both.y[i] - a.y[i] - b.y[i]).abs() <= 1e-12 * both.y[i]);
        }
    }

    #[test]
    fn spectrum_scaling() {
        let ch = DetectionChain { noise_floor_v2_hz: 0.0, ..chain() };
        let bc = bad_cavity_reflection(&cavity(10e-9)).unwrap();
        let [m1, m2] = modes();
        let f = [411.0e3, 411.2e3, 411.5e3];
        let base = voltage_noise_spectrum(&ch, &bc, [&m1, &m2], Correlation::CommonDrive, LAMBDA, &f).unwrap();
        let more = DetectionChain { p_lo_w: 3.0 * ch.p_lo_w, p_in_w: 2.0 * ch.p_in_w, transimpedance_v_per_a: 2.0 * ch.transimpedance_v_per_a, ..ch };
        let s = voltage_noise_spectrum(&ch, &bc, [&m1, &m2], Correlation::CommonDrive, LAMBDA, &f).unwrap();
        assert_eq!(s, base);
        let s2 = voltage_noise_spectrum(&more, &bc, [&m1, &m2], Correlation::CommonDrive, LAMBDA, &f).unwrap();
        for i in 0..f.len() {
            assert!((s2.y[i] / base.y[i] - 24.0).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_lock_is_optimal_for_single_membrane() {
        let c1 = SlabCoefficients::from_reflectivity(0.3618, 1.1).unwrap();
        let c2 = SlabCoefficients::transparent();
        let g = EtalonGeometry::new(5.707e-6, 0.0).unwrap();
        let p = ResponseParams::new(c1, c2, g, LAMBDA, [0.0; 2], [2.6e6; 2]).unwrap();
        let bc = bad_cavity_reflection(&p).unwrap();
        let best = quadrature_gains(&bc, carrier_quadrature_phase(&bc))[0].abs();
        for phi in linspace(0.0, 2.0 * PI, 64) {
            assert!(quadrature_gains(&bc, phi)[0].abs() <= best + 1e-15);
        }
        assert!((best - bc.r1[0].norm()).abs() < 1e-15);
    }

    #[test]
    fn bad_cavity_field_matches_simulation() {
        let p = cavity(35e-9);
        let bc = bad_cavity_reflection(&p).unwrap();
        let tau = p.geometry.tau;
        let w = 2e-4 / tau;
        let drive = DriveField::constant(1e-3, LAMBDA).unwrap();
        let t1 = MembraneTrajectory::sinusoid(2e-13, w);
        let t2 = MembraneTrajectory::Sinusoid { amplitude: 3e-13, omega: 0.7 * w, phase: 0.4 };
        let rec = simulate(&p.c1, &p.c2, &p.geometry, &drive, &t1, &t2, 2.0 * PI / w, 2).unwrap();
        let ch = chain();
        let phi = ch.absolute_phase(bc.r0);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in (rec.ring_up_index..rec.len()).step_by(101) {
            let t = rec.times[i];
            let lin = bc.reflected_field(drive.amplitude(t), [t1.displacement(t), t2.displacement(t)], LAMBDA);
            let a = photocurrent(rec.reflected[i], phi, &ch).current_a;
            let b = photocurrent(lin, phi, &ch).current_a;
            worst = worst.max((a - b).abs());
            scale = scale.max(b.abs());
        }
        // the quadrature signal is first order in dx; lag and second-order
        // corrections are ~ omega tau and ~ xi relative to it
        assert!(scale > 0.0);
        assert!(worst < 1e-2 * scale, "{worst} vs {scale}");
    }

    fn inputs(dl: Vec<f64>) -> SweepInputs {
        let c = SlabCoefficients::from_reflectivity(0.3618, 0.4).unwrap();
        SweepInputs {
            c1: c,
            c2: c,
            geometry: EtalonGeometry::new(5.707e-6, 0.0).unwrap(),
            wavelength: LAMBDA,
            chain: chain(),
            modes: modes(),
            correlation: Correlation::CommonDrive,
            piezo: PiezoModel { displacement_per_volt_m: 1e-8, beta_per_v: [0.0, 0.0] },
            level_calibration: 1.0,
            dl_over_halflambda: dl,
            freqs_hz: linspace(410.8e3, 412.0e3, 301),
        }
    }

    #[test]
    fn sweep_map_periodic_and_worker_independent() {
        let dl = linspace(0.0, 2.0, 41);
        let one = sweep_map(&inputs(dl.clone()), 1).unwrap();
        let four = sweep_map(&inputs(dl), 4).unwrap();
        assert_eq!(one, four);
        for i in 0..20 {
            for (a, b) in one.psd_rows[i].iter().zip(&one.psd_rows[i + 20]) {
                assert!((a - b).abs() <= 1e-10 * a.abs());
            }
        }
        assert_eq!(one.bad_cavity_violations, 0);
        // weights genuinely modulate with the offset
        let w2: Vec<f64> = one.weights.iter().map(|w| w[1]).collect();
        let max = w2.iter().cloned().fold(0.0, f64::max);
        let min = w2.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min < 0.5 * max);
    }

    #[test]
    fn sweep_map_rejects_empty_grids() {
        assert!(sweep_map(&inputs(Vec::new()), 1).is_err());
    }
}
