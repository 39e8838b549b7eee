//! Command-line front end. Every command reads one [`RunConfig`], writes its
//! artifacts plus `provenance.json` into the output directory, and maps
//! failures to exit codes: 1 for domain, parse or I/O errors, 2 when a fit
//! does not converge.

use std::f64::consts::PI;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::config::{RunConfig, RNG_ALGORITHM};
use crate::dynamics::{project_tones, simulate, DriveField, FieldKind, MembraneTrajectory};
use crate::error::{domain, Error, Result};
use crate::etalon::{finesse_fwhm, fringe_scan, round_trip_factor};
use crate::fit::airy::{synthetic_timescan, synthetic_white_light, ScanModel};
use crate::fit::{fit_airy_timescan, fit_airy_wavelength, fit_lorentzian, fit_thickness, AiryModel, FitResult, ReflectivityPoint, TimeScan};
use crate::homodyne::{membrane_weights, sweep_map, voltage_noise_spectrum};
use crate::io::{read_series, write_field_record, write_json, write_map_csv, write_map_json, write_series, write_table};
use crate::mechanics::FrequencyConvention;
use crate::response::{
    bad_cavity_reflection, carrier_amplitude, cavity_response_c0, d_of_s, reflection_response_r0,
    reflection_response_r1, sideband_amplitude, HighFinesseParams, Membrane, ResponseParams, Sideband,
};
use crate::selftest::run_selftest;
use crate::series::{Column, SpectrumSeries};
use crate::slab::reflectivity_curve;

#[derive(Debug, Parser)]
#[command(name = "etalon", version, about = "Two-membrane etalon simulation and characterization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Mode-frequency convention.
    #[arg(long, global = true, value_enum)]
    convention: Option<FrequencyConvention>,
    /// Measured data for the fit commands (CSV).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Reflectivity of both membranes versus wavelength.
    Slab,
    /// Transmission versus displacement of membrane 2.
    Fringe,
    /// Time-domain field recursion with modulated membranes.
    Simulate,
    /// First-order transfer functions over the frequency grid.
    Response,
    /// Homodyne voltage noise spectrum at the configured offset.
    Spectrum,
    /// Noise spectra versus cavity-length offset.
    SweepMap,
    /// Cavity length from a white-light transmission spectrum.
    FitAiryLambda,
    /// Finesse from a piezo length scan.
    FitAiryScan,
    /// Membrane thickness from reflectivities at several wavelengths.
    FitThickness,
    /// Mechanical resonances in a noise spectrum.
    FitLorentzian,
    /// Run the invariant checks.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Slab => "slab",
            Command::Fringe => "fringe",
            Command::Simulate => "simulate",
            Command::Response => "response",
            Command::Spectrum => "spectrum",
            Command::SweepMap => "sweep-map",
            Command::FitAiryLambda => "fit-airy-lambda",
            Command::FitAiryScan => "fit-airy-scan",
            Command::FitThickness => "fit-thickness",
            Command::FitLorentzian => "fit-lorentzian",
            Command::Selftest => "selftest",
        }
    }
}

enum Status {
    Done,
    NotConverged,
    Failed,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    input: Option<PathBuf>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed)
    }

    fn input_for(&self, configured: &Option<String>) -> Option<PathBuf> {
        self.input.clone().or_else(|| configured.as_ref().map(PathBuf::from))
    }

    fn report(&self, name: &str) {
        println!("wrote {}", self.path(name).display());
    }
}

/// Parse `argv` (program name first), run the command and return the exit
/// status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(Status::Done) => 0,
        Ok(Status::Failed) => 1,
        Ok(Status::NotConverged) => {
            eprintln!("error: fit did not converge");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(cli: &Cli) -> Result<Status> {
    let cfg = RunConfig::prepare(cli.config.as_deref(), cli.seed, cli.convention, cli.workers)?;
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Ctx { cfg, out: cli.out.clone(), input: cli.input.clone() };
    let cmd = cli.command;
    let status = match cmd {
        Command::Slab => cmd_slab(&ctx)?,
        Command::Fringe => cmd_fringe(&ctx)?,
        Command::Simulate => cmd_simulate(&ctx)?,
        Command::Response => cmd_response(&ctx)?,
        Command::Spectrum => cmd_spectrum(&ctx)?,
        Command::SweepMap => cmd_sweep_map(&ctx)?,
        Command::FitAiryLambda => cmd_fit_airy_lambda(&ctx)?,
        Command::FitAiryScan => cmd_fit_airy_scan(&ctx)?,
        Command::FitThickness => cmd_fit_thickness(&ctx)?,
        Command::FitLorentzian => cmd_fit_lorentzian(&ctx)?,
        Command::Selftest => cmd_selftest(&ctx)?,
    };
    write_json(&ctx.path("provenance.json"), &crate::config::Provenance::new(cmd.name(), &ctx.cfg))?;
    Ok(status)
}

fn cx(z: Complex64) -> serde_json::Value {
    json!([z.re, z.im])
}

fn cmd_slab(ctx: &Ctx) -> Result<Status> {
    let o = &ctx.cfg.optics;
    let grid = ctx.cfg.grids.wavelength_m.values()?;
    let r1 = reflectivity_curve(o.thickness_m[0], &o.index, &grid)?;
    let r2 = reflectivity_curve(o.thickness_m[1], &o.index, &grid)?;
    write_table(
        &ctx.path("slab.csv"),
        &["wavelength_m", "reflectivity_1", "reflectivity_2"],
        grid.iter().enumerate().map(|(i, &l)| vec![l, r1.y[i], r2.y[i]]),
    )?;
    let mut membranes = Vec::new();
    for &h in &o.thickness_m {
        let c = o.index.coefficients(h, o.wavelength_m)?;
        membranes.push(json!({
            "thickness_m": h,
            "index": o.index.index_at(o.wavelength_m)?,
            "reflectivity": c.reflectivity,
            "phase_rad": c.phase,
            "r": cx(c.r),
            "t": cx(c.t),
        }));
    }
    write_json(&ctx.path("slab.json"), &json!({ "wavelength_m": o.wavelength_m, "membranes": membranes }))?;
    ctx.report("slab.csv");
    Ok(Status::Done)
}

fn cmd_fringe(ctx: &Ctx) -> Result<Status> {
    let o = &ctx.cfg.optics;
    let (c1, c2) = o.coefficients()?;
    let g = o.geometry()?;
    let scan = fringe_scan(&c1, &c2, &g, o.wavelength_m, &ctx.cfg.grids.displacement_m.values()?)?;
    write_series(&ctx.path("fringe.csv"), &scan)?;
    let finesse = finesse_fwhm(&c1, &c2).ok();
    write_json(
        &ctx.path("fringe.json"),
        &json!({
            "reflectivity": [c1.reflectivity, c2.reflectivity],
            "finesse_fwhm": finesse,
            "resonant_length_m": g.l0,
            "fsr_hz": g.fsr,
        }),
    )?;
    ctx.report("fringe.csv");
    Ok(Status::Done)
}

fn cmd_simulate(ctx: &Ctx) -> Result<Status> {
    let cfg = &ctx.cfg;
    let o = &cfg.optics;
    let lambda = o.wavelength_m;
    let (c1, c2) = o.coefficients()?;
    let g = o.geometry()?;
    let drive = DriveField::constant(cfg.drive.power_w, lambda)?;
    let sim = &cfg.simulate;
    let mut freqs = [0.0; 2];
    let mut xis = [0.0; 2];
    let mut traj = [MembraneTrajectory::Static, MembraneTrajectory::Static];
    for (j, m) in sim.modulation.iter().enumerate() {
        let f = m.frequency_hz.ok_or_else(|| Error::Internal("unresolved modulation frequency".into()))?;
        if m.xi < 0.0 || !(f > 0.0) {
            return domain(format!("membrane {}: modulation index must be >= 0 and frequency > 0", j + 1));
        }
        freqs[j] = f;
        xis[j] = m.xi;
        if m.xi > 0.0 {
            traj[j] = MembraneTrajectory::from_modulation_index(m.xi, 2.0 * PI * f, lambda);
        }
    }
    let moving: Vec<usize> = (0..2).filter(|&j| xis[j] > 0.0).collect();
    if moving.len() == 2 && (freqs[0] - freqs[1]).abs() < 1e-9 * freqs[0] {
        return domain("modulated membranes need distinct frequencies to separate their sidebands");
    }
    let trips = sim.duration_round_trips.ok_or_else(|| Error::Internal("unresolved duration".into()))?;
    let rec = simulate(&c1, &c2, &g, &drive, &traj[0], &traj[1], trips * g.tau, sim.subdivisions)?;
    write_field_record(&ctx.path("field.csv"), &rec)?;

    let w = [2.0 * PI * freqs[0], 2.0 * PI * freqs[1]];
    let p = ResponseParams::new(c1, c2, g, lambda, xis, w)?;
    let mut tones = vec![0.0];
    for &j in &moving {
        tones.extend([freqs[j], -freqs[j]]);
    }
    let start = rec.ring_up_index.min(rec.len());
    let amp = drive.power.sqrt();
    let mut fields = Vec::new();
    for (kind, label) in [(FieldKind::Cavity, "cavity"), (FieldKind::Transmitted, "transmitted"), (FieldKind::Reflected, "reflected")] {
        let got = project_tones(&rec.times[start..], &rec.field(kind)[start..], &tones)?;
        let mut entry = json!({
            "field": label,
            "carrier": { "simulated": cx(got[0]), "predicted": cx(carrier_amplitude(&p, kind)? * amp) },
        });
        let mut bands = Vec::new();
        for (i, &j) in moving.iter().enumerate() {
            let mem = Membrane::BOTH[j];
            for (band, k, name) in [(Sideband::Upper, 1 + 2 * i, "upper"), (Sideband::Lower, 2 + 2 * i, "lower")] {
                let want = sideband_amplitude(&p, kind, mem, band)? * amp;
                bands.push(json!({
                    "membrane": j + 1,
                    "band": name,
                    "frequency_hz": tones[k],
                    "simulated": cx(got[k]),
                    "predicted": cx(want),
                    "relative_error": (got[k] - want).norm() / want.norm(),
                }));
            }
        }
        entry["sidebands"] = json!(bands);
        fields.push(entry);
    }
    let warnings: Vec<String> = rec.warnings.iter().map(|w| format!("{w:?}")).collect();
    write_json(
        &ctx.path("sidebands.json"),
        &json!({
            "round_trip_time_s": g.tau,
            "samples": rec.len(),
            "ring_up_index": rec.ring_up_index,
            "warnings": warnings,
            "fields": fields,
        }),
    )?;
    ctx.report("field.csv");
    ctx.report("sidebands.json");
    Ok(Status::Done)
}

fn cmd_response(ctx: &Ctx) -> Result<Status> {
    let o = &ctx.cfg.optics;
    let lambda = o.wavelength_m;
    let (c1, c2) = o.coefficients()?;
    let g = o.geometry()?;
    let freqs = ctx.cfg.freq_grid()?;
    let mut rows = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        let w = 2.0 * PI * f;
        let p = ResponseParams::new(c1, c2, g, lambda, [0.0; 2], [w, w])?;
        let s = Complex64::new(0.0, w);
        let vals = [
            d_of_s(&p, s),
            cavity_response_c0(&p, s)?,
            reflection_response_r0(&p, s)?,
            reflection_response_r1(&p, Membrane::One, s, Sideband::Lower)?,
            reflection_response_r1(&p, Membrane::Two, s, Sideband::Lower)?,
        ];
        let mut row = vec![f];
        row.extend(vals.iter().flat_map(|z| [z.re, z.im]));
        rows.push(row);
    }
    write_table(
        &ctx.path("response.csv"),
        &["freq_hz", "re_d", "im_d", "re_c0", "im_c0", "re_r0", "im_r0", "re_r1_1", "im_r1_1", "re_r1_2", "im_r1_2"],
        rows,
    )?;
    let modes = ctx.cfg.modes()?;
    let p = ResponseParams::new(c1, c2, g, lambda, [0.0; 2], [modes[0].omega_m, modes[1].omega_m])?;
    let bc = bad_cavity_reflection(&p)?;
    let hf = HighFinesseParams::from_cavity(&c1, &c2, &g, lambda);
    write_json(
        &ctx.path("response.json"),
        &json!({
            "mu": cx(round_trip_factor(&c1, &c2, &g, lambda)),
            "fsr_hz": g.fsr,
            "bad_cavity": { "r0": cx(bc.r0), "r1": [cx(bc.r1[0]), cx(bc.r1[1])], "precondition_ok": bc.precondition_ok },
            "high_finesse": { "kappa_rad_s": hf.kappa, "kappa1_rad_s": hf.kappa1, "kappa2_rad_s": hf.kappa2, "detuning_rad_s": hf.delta },
        }),
    )?;
    ctx.report("response.csv");
    Ok(Status::Done)
}

fn cmd_spectrum(ctx: &Ctx) -> Result<Status> {
    let cfg = &ctx.cfg;
    let o = &cfg.optics;
    let (c1, c2) = o.coefficients()?;
    let g = o.geometry()?;
    let modes = cfg.modes()?;
    let p = ResponseParams::new(c1, c2, g, o.wavelength_m, [0.0; 2], [modes[0].omega_m, modes[1].omega_m])?;
    let bc = bad_cavity_reflection(&p)?;
    let s = voltage_noise_spectrum(&cfg.detection, &bc, [&modes[0], &modes[1]], cfg.mechanics.correlation, o.wavelength_m, &cfg.freq_grid()?)?;
    write_series(&ctx.path("spectrum.csv"), &s)?;
    let w = membrane_weights(&cfg.detection, &bc, [&modes[0], &modes[1]], o.wavelength_m);
    write_json(
        &ctx.path("spectrum.json"),
        &json!({ "weights": w, "bad_cavity_ok": bc.precondition_ok, "dominant_membrane": if w[0] >= w[1] { 1 } else { 2 } }),
    )?;
    ctx.report("spectrum.csv");
    Ok(Status::Done)
}

fn cmd_sweep_map(ctx: &Ctx) -> Result<Status> {
    let cfg = &ctx.cfg;
    let inp = cfg.sweep_inputs()?;
    let map = sweep_map(&inp, cfg.workers)?;
    write_map_csv(&ctx.path("map.csv"), &map)?;
    write_map_json(&ctx.path("map.json"), &map)?;
    write_json(
        &ctx.path("sweep_summary.json"),
        &json!({
            "integrated_weights": map.integrated_weights(),
            "dominant_membrane": map.dominant_membrane(),
            "bad_cavity_violations": map.bad_cavity_violations,
            "row_weights": map.weights,
        }),
    )?;
    ctx.report("map.csv");
    ctx.report("map.json");
    println!("dominant membrane: {}", map.dominant_membrane());
    Ok(Status::Done)
}

fn finish_fit(ctx: &Ctx, fit: &FitResult) -> Result<Status> {
    write_json(&ctx.path("fit.json"), fit)?;
    ctx.report("fit.json");
    for p in &fit.parameters {
        println!("{} = {:.6e} +- {:.2e} {}", p.name, p.value, p.sigma, p.unit);
    }
    for f in &fit.flags {
        println!("flag: {f}");
    }
    Ok(if fit.converged { Status::Done } else { Status::NotConverged })
}

fn expect_columns(s: &SpectrumSeries, xs: &[Column], y: Column) -> Result<()> {
    if !xs.contains(&s.x_column) {
        let names: Vec<&str> = xs.iter().map(|c| c.name()).collect();
        return Err(Error::Parse(format!("expected x column {}, found `{}`", names.join(" or "), s.x_column)));
    }
    if s.y_column != y {
        return Err(Error::Parse(format!("expected column `{y}`, found `{}`", s.y_column)));
    }
    Ok(())
}

fn cmd_fit_airy_lambda(ctx: &Ctx) -> Result<Status> {
    let fc = &ctx.cfg.fits.airy_lambda;
    let o = &ctx.cfg.optics;
    let model = AiryModel { index: o.index.clone(), thickness_m: o.thickness_m };
    let spectrum = match ctx.input_for(&fc.input) {
        Some(p) => {
            let s = read_series(&p, None)?;
            expect_columns(&s, &[Column::WavelengthNm, Column::WavelengthM], Column::TransmissionNorm)?;
            s
        }
        None => {
            let s = synthetic_white_light(&model, fc.true_length_m, &fc.wavelength_m.values()?, fc.noise, &mut ctx.rng())?;
            write_series(&ctx.path("data.csv"), &s)?;
            s
        }
    };
    finish_fit(ctx, &fit_airy_wavelength(&spectrum, &model, fc.length_guess_m)?)
}

fn cmd_fit_airy_scan(ctx: &Ctx) -> Result<Status> {
    let fc = &ctx.cfg.fits.airy_scan;
    let lambda = ctx.cfg.optics.wavelength_m;
    let scan = match ctx.input_for(&fc.input) {
        Some(p) => {
            let s = read_series(&p, Some((Column::VoltageV, Column::TransmissionNorm)))?;
            TimeScan::from_series(&s)?
        }
        None => {
            let model = ScanModel {
                reflectivity: fc.true_reflectivity,
                amplitude: 1.0,
                theta0: 0.3,
                a1: fc.true_disp_per_volt_m,
                a2: fc.true_disp_per_volt2_m,
            };
            let s = synthetic_timescan(&model, lambda, &fc.voltage_v.values()?, fc.noise, &mut ctx.rng())?;
            write_series(&ctx.path("data.csv"), &s.to_series()?)?;
            s
        }
    };
    finish_fit(ctx, &fit_airy_timescan(&scan, lambda, fc.disp_per_volt_guess_m)?)
}

/// Default uncertainty for reflectivities read from a file.
const INPUT_SIGMA: f64 = 3e-4;

fn cmd_fit_thickness(ctx: &Ctx) -> Result<Status> {
    let fc = &ctx.cfg.fits.thickness;
    let points = match &ctx.input {
        Some(p) => {
            let s = read_series(p, None)?;
            expect_columns(&s, &[Column::WavelengthNm, Column::WavelengthM], Column::Reflectivity)?;
            s.x_si()
                .into_iter()
                .zip(s.y_si())
                .map(|(wavelength_m, reflectivity)| ReflectivityPoint { wavelength_m, reflectivity, sigma: INPUT_SIGMA })
                .collect()
        }
        None => fc.points.clone(),
    };
    finish_fit(ctx, &fit_thickness(&points, &ctx.cfg.optics.index, fc.guess_m)?)
}

fn cmd_fit_lorentzian(ctx: &Ctx) -> Result<Status> {
    let cfg = &ctx.cfg;
    let fc = &cfg.fits.lorentzian;
    let spectrum = match ctx.input_for(&fc.input) {
        Some(p) => read_series(&p, Some((Column::FreqHz, Column::PsdV2Hz)))?,
        None => {
            let o = &cfg.optics;
            let (c1, c2) = o.coefficients()?;
            let modes = cfg.modes()?;
            let p = ResponseParams::new(c1, c2, o.geometry()?, o.wavelength_m, [0.0; 2], [modes[0].omega_m, modes[1].omega_m])?;
            let bc = bad_cavity_reflection(&p)?;
            let clean = voltage_noise_spectrum(&cfg.detection, &bc, [&modes[0], &modes[1]], cfg.mechanics.correlation, o.wavelength_m, &cfg.freq_grid()?)?;
            let peak = clean.y.iter().cloned().fold(0.0, f64::max);
            let dist = Normal::new(0.0, fc.noise * peak).map_err(|e| Error::Domain(e.to_string()))?;
            let mut rng = ctx.rng();
            let y = clean.y.iter().map(|&v| v + dist.sample(&mut rng)).collect();
            let s = SpectrumSeries::new(Column::FreqHz, Column::PsdV2Hz, clean.x.clone(), y)?;
            write_series(&ctx.path("data.csv"), &s)?;
            s
        }
    };
    finish_fit(ctx, &fit_lorentzian(&spectrum, fc.peak_count)?)
}

fn cmd_selftest(ctx: &Ctx) -> Result<Status> {
    let checks = run_selftest(ctx.cfg.seed);
    let mut all = true;
    let mut records = Vec::new();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        all &= c.passed;
        records.push(json!({ "name": c.name, "passed": c.passed, "detail": c.detail }));
    }
    write_json(&ctx.path("selftest.json"), &json!({ "rng_algorithm": RNG_ALGORITHM, "seed": ctx.cfg.seed, "checks": records }))?;
    Ok(if all { Status::Done } else { Status::Failed })
}
