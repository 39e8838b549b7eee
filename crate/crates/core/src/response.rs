//! First-order transfer functions of the etalon with sinusoidally driven
//! membranes.
//!
//! With `dx_j(t) = a_j sin(omega_j t)` and modulation index `xi_j = 2 k a_j`,
//! every field acquires sidebands at `+-omega_j` whose amplitudes, to first
//! order in `xi_j`, follow from
//!
//! ```text
//! D(s)      = 1 - mu exp(-s tau) J0(xi1) J0(xi2)
//! C0(s)     = t1 / D(s)
//! C1(s, +-) = (t1/2) (1 - D(s))/D(s) exp(-+ s_m tau) / D(s +- s_m)
//! R0(s)     = -conj(r1) + conj(rbar2) |t1|^2 exp(-s tau) / D(s)
//! R1_1      = conj(r1)/2 + (conj(rbar2)/2) (1 - D(s))/D(s) |t1|^2 exp(-(s +- s_m) tau) / D(s +- s_m)
//! R1_2      = (conj(rbar2)/2) |t1|^2 exp(-(s +- s_m) tau) / (D(s) D(s +- s_m))
//! ```
//!
//! with `s_m = i omega_m`. The upper sideband of membrane `j` is
//! `-(-1)^j xi_j X(s_m, -)` and the lower one `(-1)^j xi_j X(-s_m, +)`, in
//! units of the drive amplitude. These forms were fixed against the
//! time-domain recursion in [`crate::dynamics`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel::bessel_j0;
use crate::dynamics::FieldKind;
use crate::error::{domain, Error, Result};
use crate::etalon::{folded_r2, round_trip_factor, EtalonGeometry};
use crate::slab::SlabCoefficients;

/// Modulation index above which first-order results are flagged.
pub const PERTURBATIVE_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membrane {
    One,
    Two,
}

impl Membrane {
    pub const BOTH: [Membrane; 2] = [Membrane::One, Membrane::Two];

    pub fn index(self) -> usize {
        match self {
            Membrane::One => 0,
            Membrane::Two => 1,
        }
    }

    /// `(-1)^j`.
    fn parity(self) -> f64 {
        match self {
            Membrane::One => -1.0,
            Membrane::Two => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sideband {
    /// `s + s_m`.
    Upper,
    /// `s - s_m`.
    Lower,
}

impl Sideband {
    fn sign(self) -> f64 {
        match self {
            Sideband::Upper => 1.0,
            Sideband::Lower => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResponseParams {
    pub c1: SlabCoefficients,
    pub c2: SlabCoefficients,
    pub geometry: EtalonGeometry,
    pub wavelength: f64,
    pub xi: [f64; 2],
    /// Mechanical angular frequencies [rad/s].
    pub omega_m: [f64; 2],
}

impl ResponseParams {
    pub fn new(
        c1: SlabCoefficients,
        c2: SlabCoefficients,
        geometry: EtalonGeometry,
        wavelength: f64,
        xi: [f64; 2],
        omega_m: [f64; 2],
    ) -> Result<Self> {
        if xi.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return domain(format!("modulation indices must be >= 0, got {xi:?}"));
        }
        if !wavelength.is_finite() || wavelength <= 0.0 {
            return domain(format!("wavelength must be positive, got {wavelength}"));
        }
        Ok(Self { c1, c2, geometry, wavelength, xi, omega_m })
    }

    /// True when some `xi_j` exceeds [`PERTURBATIVE_LIMIT`].
    pub fn perturbative_warning(&self) -> bool {
        self.xi.iter().any(|&x| x > PERTURBATIVE_LIMIT)
    }

    pub fn mu(&self) -> Complex64 {
        round_trip_factor(&self.c1, &self.c2, &self.geometry, self.wavelength)
    }

    pub fn rbar2(&self) -> Complex64 {
        folded_r2(&self.c2, &self.geometry, self.wavelength)
    }

    fn s_m(&self, j: Membrane) -> Complex64 {
        Complex64::new(0.0, self.omega_m[j.index()])
    }
}

pub fn d_of_s(p: &ResponseParams, s: Complex64) -> Complex64 {
    let j = bessel_j0(p.xi[0]) * bessel_j0(p.xi[1]);
    1.0 - p.mu() * (-s * p.geometry.tau).exp() * j
}

fn nonzero(d: Complex64) -> Result<Complex64> {
    if d.norm() < 1e-300 {
        return Err(Error::Singular("D(s) vanishes".into()));
    }
    Ok(d)
}

pub fn cavity_response_c0(p: &ResponseParams, s: Complex64) -> Result<Complex64> {
    Ok(p.c1.t / nonzero(d_of_s(p, s))?)
}

pub fn cavity_response_c1(p: &ResponseParams, j: Membrane, s: Complex64, band: Sideband) -> Result<Complex64> {
    let sm = band.sign() * p.s_m(j);
    let d = nonzero(d_of_s(p, s))?;
    let ds = nonzero(d_of_s(p, s + sm))?;
    Ok(p.c1.t / 2.0 * (1.0 - d) / d * (-sm * p.geometry.tau).exp() / ds)
}

pub fn reflection_response_r0(p: &ResponseParams, s: Complex64) -> Result<Complex64> {
    let d = nonzero(d_of_s(p, s))?;
    Ok(-p.c1.r.conj() + p.rbar2().conj() * p.c1.t.norm_sqr() * (-s * p.geometry.tau).exp() / d)
}

pub fn reflection_response_r1(p: &ResponseParams, j: Membrane, s: Complex64, band: Sideband) -> Result<Complex64> {
    let sm = band.sign() * p.s_m(j);
    let d = nonzero(d_of_s(p, s))?;
    let ds = nonzero(d_of_s(p, s + sm))?;
    let base = p.rbar2().conj() / 2.0 * p.c1.t.norm_sqr() * (-(s + sm) * p.geometry.tau).exp() / (d * ds);
    Ok(match j {
        Membrane::One => p.c1.r.conj() / 2.0 + base * (1.0 - d),
        Membrane::Two => base,
    })
}

/// Predicted complex amplitude of the sideband at `+omega_j` (upper) or
/// `-omega_j` (lower) caused by membrane `j`, per unit drive amplitude and
/// referenced to `t = 0`.
pub fn sideband_amplitude(p: &ResponseParams, field: FieldKind, j: Membrane, band: Sideband) -> Result<Complex64> {
    let sm = p.s_m(j);
    let (s, arg_band, sign) = match band {
        Sideband::Upper => (sm, Sideband::Lower, -j.parity()),
        Sideband::Lower => (-sm, Sideband::Upper, j.parity()),
    };
    let xi = p.xi[j.index()];
    let coeff = match field {
        FieldKind::Cavity => cavity_response_c1(p, j, s, arg_band)?,
        FieldKind::Reflected => reflection_response_r1(p, j, s, arg_band)?,
        FieldKind::Transmitted => {
            p.c2.t * cavity_response_c1(p, j, s, arg_band)? * (-s * p.geometry.tau / 2.0).exp()
        }
    };
    Ok(sign * xi * coeff)
}

/// Predicted carrier amplitude per unit drive amplitude.
pub fn carrier_amplitude(p: &ResponseParams, field: FieldKind) -> Result<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    Ok(match field {
        FieldKind::Cavity => cavity_response_c0(p, zero)?,
        FieldKind::Reflected => reflection_response_r0(p, zero)?,
        FieldKind::Transmitted => p.c2.t * cavity_response_c0(p, zero)?,
    })
}

/// Low-frequency reflection coefficients.
///
/// For mechanical frequencies far below the cavity bandwidth the reflected
/// field follows the membranes adiabatically:
///
/// ```text
/// Er(t) = E1(t) [ R0 + 2i * 2k (R1_1 dx1(t) - R1_2 dx2(t)) ]
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BadCavity {
    pub r0: Complex64,
    pub r1: [Complex64; 2],
    /// False when the mechanical frequencies are not small against the
    /// cavity bandwidth.
    pub precondition_ok: bool,
}

impl BadCavity {
    /// Reflected field for displacements `dx` and drive amplitude `e1`.
    pub fn reflected_field(&self, e1: Complex64, dx: [f64; 2], wavelength: f64) -> Complex64 {
        let k = 2.0 * std::f64::consts::PI / wavelength;
        let i = Complex64::new(0.0, 1.0);
        e1 * (self.r0 + 2.0 * i * 2.0 * k * (self.r1[0] * dx[0] - self.r1[1] * dx[1]))
    }
}

/// Ratio of `omega_m` to the cavity bandwidth `2 pi FSR (1 - |mu|)` above
/// which [`BadCavity::precondition_ok`] is cleared.
pub const BAD_CAVITY_RATIO: f64 = 1e-2;

pub fn bad_cavity_reflection(p: &ResponseParams) -> Result<BadCavity> {
    let zero = Complex64::new(0.0, 0.0);
    let d0 = nonzero(d_of_s(p, zero))?;
    let mu_j = 1.0 - d0;
    let rb2c = p.rbar2().conj();
    let t1sq = p.c1.t.norm_sqr();
    let r0 = reflection_response_r0(p, zero)?;
    let r1_1 = p.c1.r.conj() / 2.0 + rb2c / 2.0 * t1sq * mu_j / (d0 * d0);
    let r1_2 = rb2c / 2.0 * t1sq / (d0 * d0);
    let bandwidth = 2.0 * std::f64::consts::PI * p.geometry.fsr * (1.0 - p.mu().norm());
    let precondition_ok = p.omega_m.iter().all(|w| w.abs() < BAD_CAVITY_RATIO * bandwidth);
    Ok(BadCavity { r0, r1: [r1_1, r1_2], precondition_ok })
}

/// Lorentzian-cavity parameters. All rates in rad/s, with `FSR` in Hz so that
/// `kappa_j = |t_j|^2 FSR / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighFinesseParams {
    pub kappa: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Detuning `-arg(mu) FSR` of the reference geometry [rad/s].
    pub delta: f64,
    pub fsr: f64,
}

impl HighFinesseParams {
    pub fn from_cavity(c1: &SlabCoefficients, c2: &SlabCoefficients, geometry: &EtalonGeometry, wavelength: f64) -> Self {
        let fsr = geometry.fsr;
        let kappa1 = c1.t.norm_sqr() * fsr / 2.0;
        let kappa2 = c2.t.norm_sqr() * fsr / 2.0;
        let mu = round_trip_factor(c1, c2, geometry, wavelength);
        Self { kappa: kappa1 + kappa2, kappa1, kappa2, delta: -mu.arg() * fsr, fsr }
    }
}

/// `D(i omega) = [kappa + i (Delta + 2 k dL FSR) + i omega] / FSR`, where `dL`
/// is a length change relative to the geometry `hf` was built from.
pub fn high_finesse_d(hf: &HighFinesseParams, delta_l: f64, omega: f64, wavelength: f64) -> Complex64 {
    let k = 2.0 * std::f64::consts::PI / wavelength;
    Complex64::new(hf.kappa, hf.delta + 2.0 * k * delta_l * hf.fsr + omega) / hf.fsr
}

/// Field amplitude normalized to an energy density, `E / sqrt(FSR)`.
pub fn normalized_amplitude(e: Complex64, fsr: f64) -> Complex64 {
    e / fsr.sqrt()
}
