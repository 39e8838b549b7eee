//! Run configuration: a versioned JSON document with SI units carried in the
//! field names. Every section is optional; [`RunConfig::resolve`] expands
//! defaults so that the written provenance record is complete.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{minimum_duration, ring_up_round_trips, DEFAULT_SUBDIVISIONS};
use crate::error::{domain, Error, Result};
use crate::etalon::{round_trip_factor, EtalonGeometry};
use crate::fit::thickness::reference_points;
use crate::fit::ReflectivityPoint;
use crate::homodyne::{DetectionChain, LoReference, PiezoModel, SweepInputs};
use crate::mechanics::{default_effective_mass, mode_frequency, Correlation, FrequencyConvention, MechMode, MembranePlate};
use crate::series::linspace;
use crate::slab::{IndexModel, SlabCoefficients};

pub const SCHEMA_VERSION: u32 = 1;

/// Identifier of the generator behind every synthetic data set.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng";

const BOLTZMANN: f64 = 1.380649e-23;

/// Evenly spaced grid, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub const fn new(start: f64, stop: f64, points: usize) -> Self {
        Self { start, stop, points }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            return domain(format!("invalid grid {self:?}"));
        }
        if self.points > 1 && self.stop <= self.start {
            return domain(format!("grid stop must exceed start: {self:?}"));
        }
        Ok(linspace(self.start, self.stop, self.points))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsConfig {
    pub wavelength_m: f64,
    pub index: IndexModel,
    pub thickness_m: [f64; 2],
    /// Replaces the slab model by lossless mirrors of these reflectivities.
    pub reflectivity: Option<[f64; 2]>,
    pub cavity_length_m: f64,
    /// Move `cavity_length_m` to the nearest resonance before applying
    /// `delta_l_m`.
    pub snap_to_resonance: bool,
    pub delta_l_m: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            wavelength_m: 532e-9,
            index: IndexModel::default(),
            thickness_m: [75.2e-9, 75.2e-9],
            reflectivity: None,
            cavity_length_m: 5.707e-6,
            snap_to_resonance: true,
            delta_l_m: 0.0,
        }
    }
}

impl OpticsConfig {
    pub fn coefficients(&self) -> Result<(SlabCoefficients, SlabCoefficients)> {
        match self.reflectivity {
            Some([r1, r2]) => Ok((
                SlabCoefficients::from_reflectivity(r1, 0.0)?,
                SlabCoefficients::from_reflectivity(r2, 0.0)?,
            )),
            None => Ok((
                self.index.coefficients(self.thickness_m[0], self.wavelength_m)?,
                self.index.coefficients(self.thickness_m[1], self.wavelength_m)?,
            )),
        }
    }

    pub fn geometry(&self) -> Result<EtalonGeometry> {
        let (c1, c2) = self.coefficients()?;
        if self.snap_to_resonance {
            EtalonGeometry::resonant(&c1, &c2, self.wavelength_m, self.cavity_length_m, self.delta_l_m)
        } else {
            EtalonGeometry::new(self.cavity_length_m, self.delta_l_m)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub power_w: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self { power_w: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConfig {
    pub plate: MembranePlate,
    pub n: u32,
    pub m: u32,
    /// Overrides the plate formula when set.
    pub frequency_hz: Option<f64>,
    pub quality_factor: f64,
    /// Defaults to a quarter of the plate mass.
    pub m_eff_kg: Option<f64>,
    /// Optical overlap of the mode with the beam.
    pub overlap: f64,
    /// Force noise amplitude; defaults to thermal at `temperature_k`.
    pub force_n_per_rthz: Option<f64>,
    pub temperature_k: f64,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            plate: MembranePlate::nominal(),
            n: 1,
            m: 1,
            frequency_hz: None,
            quality_factor: 1e5,
            m_eff_kg: None,
            overlap: 1.0,
            force_n_per_rthz: None,
            temperature_k: 295.0,
        }
    }
}

impl ModeConfig {
    fn with_plate(lx_mm: f64, ly_mm: f64) -> Self {
        Self { plate: MembranePlate { lx_m: lx_mm * 1e-3, ly_m: ly_mm * 1e-3, ..MembranePlate::nominal() }, ..Self::default() }
    }

    fn resolve(&mut self, thickness_m: f64, conv: FrequencyConvention) -> Result<()> {
        let f = match self.frequency_hz {
            Some(f) => f,
            None => mode_frequency(&self.plate, self.n, self.m, conv)?,
        };
        self.frequency_hz = Some(f);
        let m = *self.m_eff_kg.get_or_insert(default_effective_mass(&self.plate, thickness_m));
        if !(self.quality_factor > 0.0) {
            return domain(format!("quality factor must be positive, got {}", self.quality_factor));
        }
        let gamma = 2.0 * PI * f / self.quality_factor;
        let thermal = (4.0 * BOLTZMANN * self.temperature_k * m * gamma).sqrt();
        self.force_n_per_rthz.get_or_insert(thermal);
        Ok(())
    }

    /// Mechanical mode of a resolved entry.
    pub fn mode(&self) -> Result<MechMode> {
        let (Some(f), Some(m), Some(force)) = (self.frequency_hz, self.m_eff_kg, self.force_n_per_rthz) else {
            return Err(Error::Internal("mode entry used before resolution".into()));
        };
        let w = 2.0 * PI * f;
        MechMode::new(w, w / self.quality_factor, m, self.overlap, force)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanicsConfig {
    pub modes: [ModeConfig; 2],
    pub correlation: Correlation,
}

impl Default for MechanicsConfig {
    fn default() -> Self {
        Self {
            modes: [ModeConfig::with_plate(0.9774, 0.9759), ModeConfig::with_plate(0.9756, 0.9773)],
            correlation: Correlation::Uncorrelated,
        }
    }
}

pub fn default_chain() -> DetectionChain {
    DetectionChain {
        p_in_w: 1e-3,
        p_lo_w: 1e-3,
        lo_phase_rad: PI / 2.0,
        lo_reference: LoReference::Carrier,
        transimpedance_v_per_a: 1e4,
        responsivity_a_per_w: 0.3,
        bandwidth_rad_s: 2.0 * PI * 10e6,
        noise_floor_v2_hz: 1e-16,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridsConfig {
    pub wavelength_m: Grid,
    pub displacement_m: Grid,
    /// Defaults to a window around the two configured modes.
    pub freq_hz: Option<Grid>,
    pub dl_over_halflambda: Grid,
}

impl Default for GridsConfig {
    fn default() -> Self {
        Self {
            wavelength_m: Grid::new(400e-9, 1000e-9, 601),
            displacement_m: Grid::new(-300e-9, 300e-9, 1201),
            freq_hz: None,
            dl_over_halflambda: Grid::new(0.0, 2.0, 81),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationConfig {
    /// Modulation index `2 k a`; 0 keeps the membrane still.
    pub xi: f64,
    /// Defaults to `FSR / 20` (membrane 1) and `FSR / 13` (membrane 2), far
    /// above real mechanical frequencies so that a short record resolves the
    /// sidebands.
    pub frequency_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub modulation: [ModulationConfig; 2],
    /// Record length in round trips.
    pub duration_round_trips: Option<f64>,
    pub subdivisions: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            modulation: [
                ModulationConfig { xi: 1e-4, frequency_hz: None },
                ModulationConfig { xi: 0.0, frequency_hz: None },
            ],
            duration_round_trips: None,
            subdivisions: DEFAULT_SUBDIVISIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub level_calibration: f64,
    pub piezo: PiezoModel,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { level_calibration: 1.0, piezo: PiezoModel::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AiryLambdaConfig {
    pub input: Option<String>,
    pub length_guess_m: f64,
    /// Synthetic data, used when no input is given.
    pub true_length_m: f64,
    pub noise: f64,
    pub wavelength_m: Grid,
}

impl Default for AiryLambdaConfig {
    fn default() -> Self {
        Self {
            input: None,
            length_guess_m: 5.6e-6,
            true_length_m: 5.707e-6,
            noise: 0.01,
            wavelength_m: Grid::new(500e-9, 900e-9, 801),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AiryScanConfig {
    pub input: Option<String>,
    pub disp_per_volt_guess_m: f64,
    pub true_reflectivity: f64,
    pub true_disp_per_volt_m: f64,
    pub true_disp_per_volt2_m: f64,
    pub noise: f64,
    pub voltage_v: Grid,
}

impl Default for AiryScanConfig {
    fn default() -> Self {
        Self {
            input: None,
            disp_per_volt_guess_m: 1e-8,
            true_reflectivity: 0.3618,
            true_disp_per_volt_m: 1.1e-8,
            true_disp_per_volt2_m: 2e-11,
            noise: 0.01,
            voltage_v: Grid::new(0.0, 60.0, 2001),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThicknessConfig {
    pub points: Vec<ReflectivityPoint>,
    pub guess_m: f64,
}

impl Default for ThicknessConfig {
    fn default() -> Self {
        Self { points: reference_points(), guess_m: 75e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LorentzianConfig {
    pub input: Option<String>,
    pub peak_count: usize,
    /// Relative noise on synthetic data (times the largest peak).
    pub noise: f64,
}

impl Default for LorentzianConfig {
    fn default() -> Self {
        Self { input: None, peak_count: 2, noise: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitsConfig {
    pub airy_lambda: AiryLambdaConfig,
    pub airy_scan: AiryScanConfig,
    pub thickness: ThicknessConfig,
    pub lorentzian: LorentzianConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub convention: FrequencyConvention,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub optics: OpticsConfig,
    #[serde(default)]
    pub drive: DriveConfig,
    #[serde(default)]
    pub mechanics: MechanicsConfig,
    #[serde(default = "default_chain")]
    pub detection: DetectionChain,
    #[serde(default)]
    pub grids: GridsConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub fits: FitsConfig,
}

fn one() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            convention: FrequencyConvention::default(),
            workers: 1,
            optics: OpticsConfig::default(),
            drive: DriveConfig::default(),
            mechanics: MechanicsConfig::default(),
            detection: default_chain(),
            grids: GridsConfig::default(),
            simulate: SimulateConfig::default(),
            sweep: SweepConfig::default(),
            fits: FitsConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse a config document. Errors carry `origin:line:column`.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            let line = text.lines().position(|l| l.contains("\"schema_version\"")).map_or(1, |i| i + 1);
            return Err(Error::Parse(format!(
                "{origin}:{line}:1: unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Fill every derived default in place.
    pub fn resolve(&mut self) -> Result<()> {
        if self.workers == 0 {
            return domain("workers must be >= 1");
        }
        self.detection.validate()?;
        let conv = self.convention;
        for (mode, &h) in self.mechanics.modes.iter_mut().zip(&self.optics.thickness_m) {
            mode.resolve(h, conv)?;
        }
        if self.grids.freq_hz.is_none() {
            let modes = [self.mechanics.modes[0].mode()?, self.mechanics.modes[1].mode()?];
            let f: Vec<f64> = modes.iter().map(|m| m.frequency_hz()).collect();
            let width = modes.iter().map(|m| m.gamma_m / (2.0 * PI)).fold(0.0, f64::max);
            let half = 0.75 * (f[0] - f[1]).abs() + 20.0 * width;
            let mid = 0.5 * (f[0] + f[1]);
            self.grids.freq_hz = Some(Grid::new(mid - half, mid + half, 2001));
        }
        let (c1, c2) = self.optics.coefficients()?;
        let geometry = self.optics.geometry()?;
        let fsr = geometry.fsr;
        for (j, m) in self.simulate.modulation.iter_mut().enumerate() {
            m.frequency_hz.get_or_insert(fsr / [20.0, 13.0][j]);
        }
        if self.simulate.duration_round_trips.is_none() {
            let mu = round_trip_factor(&c1, &c2, &geometry, self.optics.wavelength_m).norm();
            let slowest = self
                .simulate
                .modulation
                .iter()
                .filter(|m| m.xi != 0.0)
                .filter_map(|m| m.frequency_hz)
                .fold(f64::INFINITY, f64::min);
            let periods = if slowest.is_finite() { 40.0 * fsr / slowest } else { 0.0 };
            let settle = minimum_duration(geometry.tau, mu) / geometry.tau;
            let trips = (ring_up_round_trips(mu) as f64 + 1.0 + periods).max(settle);
            self.simulate.duration_round_trips = Some(trips.ceil());
        }
        Ok(())
    }

    /// Parsed, resolved configuration with CLI overrides applied.
    pub fn prepare(path: Option<&Path>, seed: Option<u64>, convention: Option<FrequencyConvention>, workers: Option<usize>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(c) = convention {
            cfg.convention = c;
        }
        if let Some(w) = workers {
            cfg.workers = w;
        }
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn freq_grid(&self) -> Result<Vec<f64>> {
        self.grids
            .freq_hz
            .ok_or_else(|| Error::Internal("frequency grid used before resolution".into()))?
            .values()
    }

    pub fn modes(&self) -> Result<[MechMode; 2]> {
        Ok([self.mechanics.modes[0].mode()?, self.mechanics.modes[1].mode()?])
    }

    pub fn sweep_inputs(&self) -> Result<SweepInputs> {
        let o = &self.optics;
        let (c1, c2) = o.coefficients()?;
        Ok(SweepInputs {
            c1,
            c2,
            geometry: o.geometry()?,
            wavelength: o.wavelength_m,
            chain: self.detection,
            modes: self.modes()?,
            correlation: self.mechanics.correlation,
            piezo: self.sweep.piezo,
            level_calibration: self.sweep.level_calibration,
            dl_over_halflambda: self.grids.dl_over_halflambda.values()?,
            freqs_hz: self.freq_grid()?,
        })
    }
}

/// Record written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance<'a> {
    pub program: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub rng_algorithm: &'static str,
    pub seed: u64,
    pub resolved_config: &'a RunConfig,
}

impl<'a> Provenance<'a> {
    pub fn new(command: &'a str, cfg: &'a RunConfig) -> Self {
        Self {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            rng_algorithm: RNG_ALGORITHM,
            seed: cfg.seed,
            resolved_config: cfg,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves() {
        let mut cfg = RunConfig::from_json(r#"{"schema_version": 1}"#, "t").unwrap();
        cfg.resolve().unwrap();
        let f = cfg.mechanics.modes[0].frequency_hz.unwrap();
        assert!(f > 3e5 && f < 5e5, "{f}");
        assert!(cfg.grids.freq_hz.is_some());
        assert!(cfg.simulate.duration_round_trips.unwrap() > 800.0);
        // the resolved form parses back to itself
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text, "t").unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let text = "{\n  \"schema_version\": 1,\n  \"optics\": {\n    \"wavelength\": 5e-7\n  }\n}";
        let msg = RunConfig::from_json(text, "cfg.json").unwrap_err().to_string();
        assert!(msg.contains("cfg.json:4:"), "{msg}");
        assert!(msg.contains("wavelength"), "{msg}");
    }

    #[test]
    fn schema_version_checked() {
        assert!(RunConfig::from_json("{}", "c").is_err());
        let msg = RunConfig::from_json("{\n\"schema_version\": 7\n}", "c").unwrap_err().to_string();
        assert!(msg.contains("c:2:1"), "{msg}");
    }

    #[test]
    fn convention_changes_frequency() {
        let a = RunConfig::prepare(None, None, Some(FrequencyConvention::AsWritten), None).unwrap();
        let b = RunConfig::prepare(None, None, Some(FrequencyConvention::HalfFactor), None).unwrap();
        let fa = a.mechanics.modes[0].frequency_hz.unwrap();
        let fb = b.mechanics.modes[0].frequency_hz.unwrap();
        assert!((fa / fb - 2.0).abs() < 1e-12);
    }
}
