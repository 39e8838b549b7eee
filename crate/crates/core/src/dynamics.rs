//! Time-domain fields of the etalon with moving membranes.
//!
//! The intracavity slowly-varying amplitude follows the delay recursion
//!
//! ```text
//! E(t) = t1 E1(t) + mu E(t - tau) exp(-i Phi(t)),   Phi(t) = 2k [dx2(t) - dx1(t)]
//! ```
//!
//! with `E = 0` before the drive is switched on at `t = 0`. Outputs are
//!
//! ```text
//! Et(t) = t2 E(t - tau/2)
//! Er(t) = -conj(r1) E1(t) exp(-2ik dx1(t)) + conj(t1) conj(rbar2) E(t - tau) exp(-2ik dx2(t))
//! ```
//!
//! Round-trip and transit times are taken as `tau` and `tau/2`; the small
//! modulation of the transit time by the membrane motion is neglected.
//!
//! The recursion is evaluated on a grid with step `tau / subdivisions`, so the
//! round-trip delay is an exact number of steps. The half-trip delay of the
//! transmitted field is linearly interpolated when `subdivisions` is odd.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::etalon::{check_convergent, folded_r2, round_trip_factor, EtalonGeometry};
use crate::slab::SlabCoefficients;

pub type Envelope = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;
pub type Displacement = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Quasi-monochromatic input field `E1(t) = sqrt(P) f(t)` for `t >= 0`.
#[derive(Clone)]
pub struct DriveField {
    pub power: f64,
    pub wavelength: f64,
    envelope: Option<Envelope>,
}

impl std::fmt::Debug for DriveField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriveField")
            .field("power", &self.power)
            .field("wavelength", &self.wavelength)
            .field("envelope", &self.envelope.as_ref().map(|_| "fn"))
            .finish()
    }
}

impl DriveField {
    pub fn constant(power: f64, wavelength: f64) -> Result<Self> {
        if !power.is_finite() || power < 0.0 {
            return domain(format!("drive power must be >= 0, got {power}"));
        }
        if !wavelength.is_finite() || wavelength <= 0.0 {
            return domain(format!("wavelength must be positive, got {wavelength}"));
        }
        Ok(Self { power, wavelength, envelope: None })
    }

    pub fn with_envelope(power: f64, wavelength: f64, envelope: Envelope) -> Result<Self> {
        let mut d = Self::constant(power, wavelength)?;
        d.envelope = Some(envelope);
        Ok(d)
    }

    pub fn envelope(&self, t: f64) -> Complex64 {
        match &self.envelope {
            Some(f) => f(t),
            None => Complex64::new(1.0, 0.0),
        }
    }

    /// `E1(t)` in sqrt(W); zero before switch-on.
    pub fn amplitude(&self, t: f64) -> Complex64 {
        if t < 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.power.sqrt() * self.envelope(t)
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn angular_frequency(&self) -> f64 {
        self.wavenumber() * crate::SPEED_OF_LIGHT
    }
}

/// Displacement of one membrane about its rest position.
#[derive(Clone)]
pub enum MembraneTrajectory {
    Static,
    /// `dx(t) = amplitude sin(omega t + phase)`.
    Sinusoid { amplitude: f64, omega: f64, phase: f64 },
    Custom(Displacement),
}

impl std::fmt::Debug for MembraneTrajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Static => f.write_str("Static"),
            Self::Sinusoid { amplitude, omega, phase } => f
                .debug_struct("Sinusoid")
                .field("amplitude", amplitude)
                .field("omega", omega)
                .field("phase", phase)
                .finish(),
            Self::Custom(_) => f.write_str("Custom(fn)"),
        }
    }
}

impl MembraneTrajectory {
    pub fn sinusoid(amplitude: f64, omega: f64) -> Self {
        Self::Sinusoid { amplitude, omega, phase: 0.0 }
    }

    /// Sinusoid whose modulation index `2 k a` equals `xi` at `wavelength`.
    pub fn from_modulation_index(xi: f64, omega: f64, wavelength: f64) -> Self {
        Self::sinusoid(xi * wavelength / (4.0 * PI), omega)
    }

    pub fn displacement(&self, t: f64) -> f64 {
        match self {
            Self::Static => 0.0,
            Self::Sinusoid { amplitude, omega, phase } => amplitude * (omega * t + phase).sin(),
            Self::Custom(f) => f(t),
        }
    }

    /// The same motion delayed by `delay`.
    pub fn delayed(&self, delay: f64) -> Self {
        match self {
            Self::Static => Self::Static,
            Self::Sinusoid { amplitude, omega, phase } => Self::Sinusoid {
                amplitude: *amplitude,
                omega: *omega,
                phase: phase - omega * delay,
            },
            Self::Custom(f) => {
                let f = f.clone();
                Self::Custom(Arc::new(move |t| f(t - delay)))
            }
        }
    }

    fn angular_frequency(&self) -> Option<f64> {
        match self {
            Self::Sinusoid { omega, .. } => Some(*omega),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimWarning {
    /// Duration shorter than `50 tau / (1 - |mu|)`, or less than 100 round
    /// trips of settled field after ring-up.
    ShortDuration,
    /// `|dx| / L` above 1e-3.
    LargeDisplacement,
    /// `omega_m tau` above 0.01: the instantaneous-probe approximation for
    /// the transit times is stretched.
    FastModulation,
}

/// Sampled fields of one simulation.
#[derive(Debug, Clone)]
pub struct FieldRecord {
    pub dt: f64,
    pub tau: f64,
    pub times: Vec<f64>,
    pub cavity: Vec<Complex64>,
    pub transmitted: Vec<Complex64>,
    pub reflected: Vec<Complex64>,
    /// First sample after which the switch-on transient is below 1e-10 of the
    /// drive-normalized field.
    pub ring_up_index: usize,
    pub warnings: Vec<SimWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Cavity,
    Transmitted,
    Reflected,
}

impl FieldRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn field(&self, kind: FieldKind) -> &[Complex64] {
        match kind {
            FieldKind::Cavity => &self.cavity,
            FieldKind::Transmitted => &self.transmitted,
            FieldKind::Reflected => &self.reflected,
        }
    }

    pub fn is_steady(&self) -> bool {
        !self.warnings.contains(&SimWarning::ShortDuration)
    }
}

/// Transient decay level at which the cavity counts as rung up.
const RING_UP_LEVEL: f64 = 1e-10;
/// Settled round trips required after ring-up.
const STEADY_ROUND_TRIPS: usize = 100;

/// Round trips after which `|mu|^n` drops below [`RING_UP_LEVEL`].
pub fn ring_up_round_trips(mu_abs: f64) -> usize {
    if mu_abs <= 0.0 {
        return 1;
    }
    (RING_UP_LEVEL.ln() / mu_abs.ln()).ceil().max(1.0) as usize
}

/// Minimum recommended duration `50 tau / (1 - |mu|)`.
pub fn minimum_duration(tau: f64, mu_abs: f64) -> f64 {
    50.0 * tau / (1.0 - mu_abs)
}

pub const DEFAULT_SUBDIVISIONS: usize = 64;

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    c1: &SlabCoefficients,
    c2: &SlabCoefficients,
    geometry: &EtalonGeometry,
    drive: &DriveField,
    traj1: &MembraneTrajectory,
    traj2: &MembraneTrajectory,
    duration: f64,
    subdivisions: usize,
) -> Result<FieldRecord> {
    if subdivisions == 0 {
        return domain("subdivisions must be >= 1");
    }
    if !duration.is_finite() || duration <= 0.0 {
        return domain(format!("duration must be positive, got {duration}"));
    }
    let lambda = drive.wavelength;
    let mu = round_trip_factor(c1, c2, geometry, lambda);
    check_convergent(mu)?;
    let rbar2c = folded_r2(c2, geometry, lambda).conj();
    let k = drive.wavenumber();
    let tau = geometry.tau;
    let dt = tau / subdivisions as f64;
    let n = (duration / dt).floor() as usize + 1;
    let sub = subdivisions;

    let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let mut cavity = vec![Complex64::new(0.0, 0.0); n];
    let mut reflected = Vec::with_capacity(n);
    let zero = Complex64::new(0.0, 0.0);
    let mut max_disp = 0.0_f64;

    for (i, &t) in times.iter().enumerate() {
        let e1 = drive.amplitude(t);
        let d1 = traj1.displacement(t);
        let d2 = traj2.displacement(t);
        max_disp = max_disp.max(d1.abs()).max(d2.abs());
        let delayed = if i >= sub { cavity[i - sub] } else { zero };
        let phi = 2.0 * k * (d2 - d1);
        cavity[i] = c1.t * e1 + mu * delayed * Complex64::from_polar(1.0, -phi);
        let er = -c1.r.conj() * e1 * Complex64::from_polar(1.0, -2.0 * k * d1)
            + c1.t.conj() * rbar2c * delayed * Complex64::from_polar(1.0, -2.0 * k * d2);
        reflected.push(er);
    }

    let at = |j: isize| if j >= 0 { cavity[j as usize] } else { zero };
    let transmitted: Vec<Complex64> = (0..n as isize)
        .map(|i| {
            let delayed = if sub % 2 == 0 {
                at(i - (sub / 2) as isize)
            } else {
                let lo = at(i - (sub as isize + 1) / 2);
                let hi = at(i - (sub as isize - 1) / 2);
                0.5 * (lo + hi)
            };
            c2.t * delayed
        })
        .collect();

    let ring_up_index = (ring_up_round_trips(mu.norm()) + 1) * sub;
    let mut warnings = Vec::new();
    if duration < minimum_duration(tau, mu.norm()) || ring_up_index + STEADY_ROUND_TRIPS * sub > n {
        warnings.push(SimWarning::ShortDuration);
    }
    if max_disp > 1e-3 * geometry.length() {
        warnings.push(SimWarning::LargeDisplacement);
    }
    let fast = [traj1, traj2]
        .iter()
        .filter_map(|t| t.angular_frequency())
        .any(|w| w * tau > 0.01);
    if fast {
        warnings.push(SimWarning::FastModulation);
    }

    Ok(FieldRecord {
        dt,
        tau,
        times,
        cavity,
        transmitted,
        reflected,
        ring_up_index: ring_up_index.min(n),
        warnings,
    })
}

/// Truncated round-trip (Neumann) sum for the intracavity field at time `t`:
///
/// `t1 sum_{n=0}^{order} mu^n E1(t - n tau) prod_{m<n} exp(-i Phi(t - m tau))`.
///
/// Terms with `t - n tau < 0` vanish (cavity empty before switch-on).
#[allow(clippy::too_many_arguments)]
pub fn neumann_field(
    c1: &SlabCoefficients,
    c2: &SlabCoefficients,
    geometry: &EtalonGeometry,
    drive: &DriveField,
    traj1: &MembraneTrajectory,
    traj2: &MembraneTrajectory,
    t: f64,
    order: usize,
) -> Complex64 {
    let lambda = drive.wavelength;
    let mu = round_trip_factor(c1, c2, geometry, lambda);
    let k = drive.wavenumber();
    let tau = geometry.tau;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut weight = Complex64::new(1.0, 0.0);
    for n in 0..=order {
        let tn = t - n as f64 * tau;
        if tn < 0.0 {
            break;
        }
        sum += weight * drive.amplitude(tn);
        let phi = 2.0 * k * (traj2.displacement(tn) - traj1.displacement(tn));
        weight *= mu * Complex64::from_polar(1.0, -phi);
    }
    c1.t * sum
}

/// Bound on the neglected tail of [`neumann_field`], relative to `|t1 E1|`.
pub fn neumann_residual_bound(mu_abs: f64, order: usize) -> f64 {
    mu_abs.powi(order as i32 + 1) / (1.0 - mu_abs)
}

/// Least-squares amplitudes `a_j` of the model `sum_j a_j exp(2 pi i f_j t)`.
///
/// With a window spanning many periods of the slowest beat this is a leakage
/// free replacement for a windowed DFT: components absent from the model
/// only enter through their (small) projection.
pub fn project_tones(times: &[f64], samples: &[Complex64], freqs_hz: &[f64]) -> Result<Vec<Complex64>> {
    if times.len() != samples.len() {
        return domain("times and samples differ in length");
    }
    let m = freqs_hz.len();
    if m == 0 || times.len() < m {
        return domain("not enough samples for the requested tones");
    }
    let t0 = times[0];
    let mut gram = DMatrix::<Complex64>::zeros(m, m);
    let mut rhs = DVector::<Complex64>::zeros(m);
    let mut basis = vec![Complex64::new(0.0, 0.0); m];
    for (&t, &x) in times.iter().zip(samples) {
        for (b, &f) in basis.iter_mut().zip(freqs_hz) {
            *b = Complex64::from_polar(1.0, 2.0 * PI * f * (t - t0));
        }
        for a in 0..m {
            let ca = basis[a].conj();
            rhs[a] += ca * x;
            for b in 0..m {
                gram[(a, b)] += ca * basis[b];
            }
        }
    }
    let sol = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("tone set is degenerate over this window".into()))?;
    // Re-reference the phases from the window start to t = 0.
    Ok(sol
        .iter()
        .zip(freqs_hz)
        .map(|(a, &f)| a * Complex64::from_polar(1.0, -2.0 * PI * f * t0))
        .collect())
}

/// Complex amplitudes at `k * modulation_hz` for `|k| <= orders`, referenced
/// to `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sidebands {
    pub modulation_hz: f64,
    pub orders: usize,
    pub amplitudes: Vec<Complex64>,
}

impl Sidebands {
    /// Amplitude of order `k` (`0` is the carrier).
    pub fn get(&self, k: i32) -> Complex64 {
        self.amplitudes[(k + self.orders as i32) as usize]
    }
}

/// Minimum steady window in periods of the modulation.
const MIN_PERIODS: f64 = 20.0;

pub fn extract_sidebands(
    record: &FieldRecord,
    field: FieldKind,
    modulation_hz: f64,
    orders: usize,
) -> Result<Sidebands> {
    extract_sidebands_from(record, field, modulation_hz, orders, record.ring_up_index)
}

/// As [`extract_sidebands`] with an explicit first sample (must not precede
/// the ring-up index).
pub fn extract_sidebands_from(
    record: &FieldRecord,
    field: FieldKind,
    modulation_hz: f64,
    orders: usize,
    start: usize,
) -> Result<Sidebands> {
    if !(modulation_hz > 0.0) {
        return domain("modulation frequency must be positive");
    }
    let start = start.max(record.ring_up_index);
    if start >= record.len() {
        return domain("record ends before ring-up completes");
    }
    let span = (record.len() - start) as f64 * record.dt;
    if span * modulation_hz < MIN_PERIODS {
        return domain(format!(
            "steady record spans {:.1} modulation periods, need {MIN_PERIODS}",
            span * modulation_hz
        ));
    }
    let k = orders as i32;
    let freqs: Vec<f64> = (-k..=k).map(|j| j as f64 * modulation_hz).collect();
    let amplitudes = project_tones(&record.times[start..], &record.field(field)[start..], &freqs)?;
    Ok(Sidebands { modulation_hz, orders, amplitudes })
}
