//! Invariant checks run by the `selftest` command. Each one is fast and
//! independent of any configuration except the seed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{extract_sidebands, simulate, DriveField, FieldKind, MembraneTrajectory};
use crate::error::Result;
use crate::etalon::{finesse_fwhm, steady_transmission, EtalonGeometry};
use crate::mechanics::{infer_side_lengths, mode_frequency, FrequencyConvention, MembranePlate, ModeMeasurement};
use crate::response::{
    bad_cavity_reflection, carrier_amplitude, reflection_response_r0, sideband_amplitude, Membrane, ResponseParams,
    Sideband,
};
use crate::slab::{slab_coefficients, SlabCoefficients, SlabParams};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

const LAMBDA: f64 = 532e-9;
const DRAWS: usize = 200;

fn slab_energy(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..DRAWS {
        let slab = SlabParams::new(rng.random_range(1.0..4.0), rng.random_range(0.0..2e-6))?;
        let c = slab_coefficients(&slab, rng.random_range(300e-9..2e-6))?;
        worst = worst.max((c.reflectivity + c.transmissivity() - 1.0).abs());
    }
    Ok((worst < 1e-12, format!("max ||r|^2 + |t|^2 - 1| = {worst:.2e}")))
}

fn steady_energy(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..DRAWS {
        let c1 = SlabCoefficients::from_reflectivity(rng.random_range(0.0..0.95), rng.random_range(-PI..PI))?;
        let c2 = SlabCoefficients::from_reflectivity(rng.random_range(0.0..0.95), rng.random_range(-PI..PI))?;
        let g = EtalonGeometry::new(rng.random_range(1e-6..1e-4), rng.random_range(-1e-7..1e-7))?;
        let p = ResponseParams::new(c1, c2, g, LAMBDA, [0.0; 2], [0.0; 2])?;
        let r = reflection_response_r0(&p, Complex64::new(0.0, 0.0))?.norm_sqr();
        let t = steady_transmission(&c1, &c2, &g, LAMBDA)?;
        worst = worst.max((r + t - 1.0).abs());
    }
    Ok((worst < 1e-9, format!("max |T + R - 1| = {worst:.2e}")))
}

fn finesse_values() -> Result<(bool, String)> {
    let mut ok = true;
    let mut out = Vec::new();
    for (r, want) in [(0.3618, 2.809), (0.3571, 2.766)] {
        let c = SlabCoefficients::from_reflectivity(r, 0.0)?;
        let f = finesse_fwhm(&c, &c)?;
        ok &= (f / want - 1.0).abs() < 5e-3;
        out.push(format!("F({r}) = {f:.4}"));
    }
    Ok((ok, out.join(", ")))
}

fn time_domain_matches_airy() -> Result<(bool, String)> {
    let c = SlabCoefficients::from_reflectivity(0.3618, 0.3)?;
    let g = EtalonGeometry::new(5.707e-6, 40e-9)?;
    let drive = DriveField::constant(1e-3, LAMBDA)?;
    let st = MembraneTrajectory::Static;
    let rec = simulate(&c, &c, &g, &drive, &st, &st, 200.0 * g.tau, 4)?;
    let sim = rec.transmitted.last().map_or(f64::NAN, |e| e.norm_sqr()) / drive.power;
    let airy = steady_transmission(&c, &c, &g, LAMBDA)?;
    let err = (sim - airy).abs();
    Ok((err < 1e-9, format!("|T_sim - T_airy| = {err:.2e}")))
}

fn sidebands_match_prediction() -> Result<(bool, String)> {
    let c = SlabCoefficients::from_reflectivity(0.3618, 0.0)?;
    let g = EtalonGeometry::new(5.707e-6, 20e-9)?;
    let w = 0.2 / g.tau;
    let xi = 1e-4;
    let drive = DriveField::constant(1e-3, LAMBDA)?;
    let tr = MembraneTrajectory::from_modulation_index(xi, w, LAMBDA);
    let rec = simulate(&c, &c, &g, &drive, &tr, &MembraneTrajectory::Static, 200.0 * g.tau + 40.0 * 2.0 * PI / w, 16)?;
    let p = ResponseParams::new(c, c, g, LAMBDA, [xi, 0.0], [w, w])?;
    let sb = extract_sidebands(&rec, FieldKind::Reflected, w / (2.0 * PI), 1)?;
    let amp = drive.power.sqrt();
    let mut worst: f64 = 0.0;
    for (band, k) in [(Sideband::Upper, 1), (Sideband::Lower, -1)] {
        let want = sideband_amplitude(&p, FieldKind::Reflected, Membrane::One, band)? * amp;
        worst = worst.max((sb.get(k) - want).norm() / want.norm());
    }
    let dc = carrier_amplitude(&p, FieldKind::Reflected)? * amp;
    worst = worst.max((sb.get(0) - dc).norm() / dc.norm());
    Ok((worst < 1e-2, format!("max relative sideband error = {worst:.2e}")))
}

fn single_membrane_limit() -> Result<(bool, String)> {
    let c1 = SlabCoefficients::from_reflectivity(0.3618, 0.4)?;
    let g = EtalonGeometry::new(5.707e-6, 0.0)?;
    let p = ResponseParams::new(c1, SlabCoefficients::transparent(), g, LAMBDA, [0.0; 2], [1e5; 2])?;
    let bc = bad_cavity_reflection(&p)?;
    let err = (bc.r0 + c1.r.conj()).norm() + bc.r1[1].norm();
    Ok((err < 1e-15, format!("|R0 + r1*| + |R1_2| = {err:.2e}")))
}

fn half_wavelength_period() -> Result<(bool, String)> {
    let c = SlabCoefficients::from_reflectivity(0.3618, 0.2)?;
    let mut worst: f64 = 0.0;
    for dl in [0.0, 37e-9, 91e-9] {
        let a = steady_transmission(&c, &c, &EtalonGeometry::new(5.707e-6, dl)?, LAMBDA)?;
        let b = steady_transmission(&c, &c, &EtalonGeometry::new(5.707e-6, dl + LAMBDA / 2.0)?, LAMBDA)?;
        worst = worst.max((a - b).abs());
    }
    Ok((worst < 1e-9, format!("max |T(L) - T(L + lambda/2)| = {worst:.2e}")))
}

fn side_length_round_trip() -> Result<(bool, String)> {
    let plate = MembranePlate { lx_m: 0.9774e-3, ly_m: 0.9759e-3, ..MembranePlate::nominal() };
    let conv = FrequencyConvention::HalfFactor;
    let mut modes = Vec::new();
    for n in 1..=3 {
        for m in 1..=3 {
            modes.push(ModeMeasurement { n, m, frequency_hz: mode_frequency(&plate, n, m, conv)? });
        }
    }
    let fit = infer_side_lengths(&modes, plate.stress_pa, plate.density_kg_m3, conv)?;
    let err = (fit.lx_m / plate.lx_m - 1.0).abs().max((fit.ly_m / plate.ly_m - 1.0).abs());
    Ok((err < 1e-9, format!("max relative side error = {err:.2e}")))
}

/// Run every check with the given seed for the randomized ones.
pub fn run_selftest(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<(bool, String)>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
        out.push(CheckOutcome { name, passed, detail });
    };
    push("slab energy conservation", slab_energy(&mut rng));
    push("steady cavity energy conservation", steady_energy(&mut rng));
    push("finesse of the measured membranes", finesse_values());
    push("time-domain steady state equals Airy", time_domain_matches_airy());
    push("sidebands match transfer functions", sidebands_match_prediction());
    push("single-membrane limit", single_membrane_limit());
    push("half-wavelength periodicity", half_wavelength_period());
    push("side-length inversion round trip", side_length_round_trip());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_selftest(7) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
