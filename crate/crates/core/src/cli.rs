//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::analysis::fit::{car_curve, fit_brightness, BrightnessFit, CarCurve};
use crate::analysis::heralding::{intrinsic_heralding, IntrinsicHeralding};
use crate::analysis::jsi::{
    jsi_noise_sigma, monte_carlo_purity, supersample_jsi, supersampling_error_curve, BinError, McPurity, MeasuredJsi,
};
use crate::config::RunConfig;
use crate::coupler::{design_space_scan, CouplerGeometry, CouplingCoefficientModel, TolerantPoint};
use crate::error::{Error, Result};
use crate::io;
use crate::molecule::{escape_efficiency, find_resonances, resonance_near, solve_fields, ResonanceInfo};
use crate::optimizer::{select_design, sweep, DesignEvaluator, SweepCell, LINEWIDTH_POINTS, LINEWIDTH_WINDOW_FSR};
use crate::sfwm::{
    jsi_purity_gap, maximize_purity_over_pump, purity_trace, relative_brightness, schmidt_decompose_real,
    schmidt_purity, PumpOptimum,
};

#[derive(Debug, Parser)]
#[command(
    name = "pairsource",
    version,
    about = "Coupled-ring photon-pair source design and analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; defaults are used for every missing key.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides io.out_dir; default ./out).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for Monte-Carlo steps (overrides io.seed).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (overrides io.threads; default all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Transmission spectrum and resonance table of the device.
    Spectrum,
    /// Joint spectral amplitude and its Schmidt decomposition.
    Jsa,
    /// Purity and brightness over the auxiliary couplings.
    Sweep,
    /// Coupler transmittance, gap tolerance and dispersion over (L_s, θ).
    CouplerScan,
    /// Brightness fit, CAR, heralding and measured-JSI purity.
    Analyze,
}

/// Resolved settings of one invocation.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Run {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if cli.threads == Some(0) {
            return Err(Error::usage("--threads must be at least 1"));
        }
        Ok(Self {
            out_dir: cli
                .out
                .clone()
                .or_else(|| config.io.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
            seed: cli.seed.unwrap_or(config.io.seed),
            threads: cli.threads.or(config.io.threads),
            config,
        })
    }
}

/// Runs `command` and returns the files written.
pub fn execute(command: Command, run: &Run) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&run.out_dir).map_err(|source| Error::Io {
        path: run.out_dir.clone(),
        source,
    })?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = run.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::usage(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Spectrum => cmd_spectrum(run),
        Command::Jsa => cmd_jsa(run),
        Command::Sweep => cmd_sweep(run),
        Command::CouplerScan => cmd_coupler_scan(run),
        Command::Analyze => cmd_analyze(run),
    })
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    execute(cli.command, &Run::from_cli(cli)?)
}

#[derive(Serialize)]
struct SpectrumRow {
    wavelength_nm: f64,
    #[serde(rename = "re_Eout")]
    re_eout: f64,
    #[serde(rename = "im_Eout")]
    im_eout: f64,
    #[serde(rename = "abs2_Eout")]
    abs2_eout: f64,
    #[serde(rename = "abs2_Eins1")]
    abs2_eins1: f64,
    #[serde(rename = "abs2_Eins2")]
    abs2_eins2: f64,
}

#[derive(Serialize)]
struct Triplet {
    pump: Option<ResonanceInfo>,
    signal: Option<ResonanceInfo>,
    idler: Option<ResonanceInfo>,
}

#[derive(Serialize)]
struct SpectrumReport {
    fsr_nm: f64,
    escape_efficiency: f64,
    /// Primary resonances nearest the pump and its two neighbours.
    triplet: Triplet,
    resonances: Vec<ResonanceInfo>,
}

fn cmd_spectrum(run: &Run) -> Result<Vec<PathBuf>> {
    let c = &run.config;
    let p = &c.device;
    let grid = c.spectrum.grid()?;
    let f = solve_fields(p, &grid)?;
    let rows: Vec<SpectrumRow> = (0..grid.len())
        .map(|i| {
            let e = f.e_out.values()[i];
            SpectrumRow {
                wavelength_nm: grid.wavelength(i),
                re_eout: e.re,
                im_eout: e.im,
                abs2_eout: e.norm_sqr(),
                abs2_eins1: f.e_ins1.values()[i].norm_sqr(),
                abs2_eins2: f.e_ins2.values()[i].norm_sqr(),
            }
        })
        .collect();
    let power = crate::spectral::RealSpectrum::new(grid, rows.iter().map(|r| r.abs2_eout).collect())?;

    let m = p.primary_order_near(c.pump.center_nm)?;
    let near = |order: u32| {
        let centre = p.primary_resonance_nm(order);
        resonance_near(p, centre, LINEWIDTH_WINDOW_FSR * p.fsr_nm(centre), LINEWIDTH_POINTS).ok()
    };
    let report = SpectrumReport {
        fsr_nm: p.fsr_nm(c.pump.center_nm),
        escape_efficiency: escape_efficiency(p).unwrap_or(0.0),
        triplet: Triplet {
            pump: near(m),
            signal: near(m + 1),
            idler: near(m - 1),
        },
        resonances: find_resonances(&power),
    };

    let csv = run.out_dir.join("spectrum.csv");
    let json = run.out_dir.join("resonances.json");
    io::write_csv(&csv, &rows)?;
    io::write_json(&json, &report)?;
    Ok(vec![csv, json])
}

#[derive(Serialize)]
struct JsaReport {
    purity: f64,
    purity_trace: f64,
    schmidt_number: f64,
    schmidt_probs: Vec<f64>,
    /// Purity of |JSA| and its distance from the full-phase purity.
    jsi_purity: f64,
    jsi_purity_gap: f64,
    relative_brightness: f64,
    raw_strength: f64,
    pump_fwhm_pm: f64,
    pump_optimum: Option<PumpOptimum>,
    signal_center_nm: f64,
    idler_center_nm: f64,
    points: usize,
}

fn cmd_jsa(run: &Run) -> Result<Vec<PathBuf>> {
    let c = &run.config;
    let mut pump = c.pump;
    let optimum = if c.jsa_run.optimize_pump {
        let o = maximize_purity_over_pump(&c.device, &pump, &c.jsa)?;
        pump = pump.with_fwhm(o.fwhm_pm);
        Some(o)
    } else {
        None
    };
    let eval = DesignEvaluator::new(&c.device, &pump, &c.jsa)?;
    let j = eval.jsa(c.device.kappa2_sq, c.device.kappa_mzi_sq)?;
    let schmidt = schmidt_purity(&j)?;
    let gap = jsi_purity_gap(&j)?;
    let jsi_purity = schmidt_decompose_real(&j.abs_amplitude())?.purity;
    let report = JsaReport {
        purity: schmidt.purity,
        purity_trace: purity_trace(&j.amplitude)?,
        schmidt_number: schmidt.schmidt_number,
        schmidt_probs: schmidt
            .schmidt_probs
            .iter()
            .take(c.jsa_run.schmidt_modes)
            .copied()
            .collect(),
        jsi_purity,
        jsi_purity_gap: gap,
        relative_brightness: relative_brightness(&j, &eval.reference)?,
        raw_strength: j.raw_strength,
        pump_fwhm_pm: pump.fwhm_pm,
        pump_optimum: optimum,
        signal_center_nm: j.signal_grid.center(),
        idler_center_nm: j.idler_grid.center(),
        points: c.jsa.points,
    };
    let jsi = MeasuredJsi::new(j.signal_grid.to_vec(), j.idler_grid.to_vec(), j.intensity())?;

    let csv = run.out_dir.join("jsi.csv");
    let json = run.out_dir.join("purity.json");
    io::write_jsi(&csv, &jsi)?;
    io::write_json(&json, &report)?;
    Ok(vec![csv, json])
}

#[derive(Serialize)]
struct SweepReport {
    min_purity: f64,
    cells: usize,
    success_fraction: f64,
    pump_fwhm_pm: f64,
    selected: Option<SweepCell>,
}

fn cmd_sweep(run: &Run) -> Result<Vec<PathBuf>> {
    let c = &run.config;
    let grid = sweep(&c.sweep_spec()?)?;
    let csv = run.out_dir.join("sweep.csv");
    io::write_csv(&csv, &grid.cells)?;

    let success = grid.success_fraction();
    let selection = select_design(&grid.cells, c.sweep.min_purity);
    let report = SweepReport {
        min_purity: c.sweep.min_purity,
        cells: grid.cells.len(),
        success_fraction: success,
        pump_fwhm_pm: grid.pump_fwhm_pm,
        selected: selection.as_ref().ok().cloned(),
    };
    let json = run.out_dir.join("selection.json");
    io::write_json(&json, &report)?;
    if success < c.sweep.min_success_fraction {
        return Err(Error::Data(format!(
            "only {:.1}% of sweep cells evaluated",
            100.0 * success
        )));
    }
    selection?;
    Ok(vec![csv, json])
}

#[derive(Serialize)]
struct CouplerRow {
    #[serde(rename = "L_s_um")]
    straight_length_um: f64,
    theta_rad: f64,
    transmittance: f64,
    gap_sensitivity: f64,
    dispersion: f64,
}

#[derive(Serialize)]
struct CouplerReport {
    template: CouplerGeometry,
    model: CouplingCoefficientModel,
    tolerant: Vec<TolerantPoint>,
}

fn cmd_coupler_scan(run: &Run) -> Result<Vec<PathBuf>> {
    let c = &run.config;
    let ls = c.coupler_scan.straight_length_um.resolve("coupler_scan.L_s_um")?;
    let th = c.coupler_scan.theta_rad.resolve("coupler_scan.theta_rad")?;
    let space = design_space_scan(&ls, &th, &c.coupler_scan.template, &c.coupler_model)?;
    let mut rows = Vec::with_capacity(space.cells.len());
    for (r, &l) in ls.iter().enumerate() {
        for (k, &t) in th.iter().enumerate() {
            let m = space.get(r, k);
            rows.push(CouplerRow {
                straight_length_um: l,
                theta_rad: t,
                transmittance: m.transmittance,
                gap_sensitivity: m.gap_sensitivity,
                dispersion: m.dispersion,
            });
        }
    }
    let csv = run.out_dir.join("coupler_scan.csv");
    let json = run.out_dir.join("coupler_tolerant.json");
    io::write_csv(&csv, &rows)?;
    io::write_json(
        &json,
        &CouplerReport {
            template: space.template,
            model: c.coupler_model,
            tolerant: space.tolerant,
        },
    )?;
    Ok(vec![csv, json])
}

#[derive(Serialize)]
struct JsiReport {
    native_shape: (usize, usize),
    native_step_pm: (f64, f64),
    bin_pm: f64,
    binned_shape: (usize, usize),
    /// Relative pixel noise at native resolution. The Monte-Carlo step applies
    /// it unchanged to every binned pixel, so the quoted error takes no credit
    /// for the averaging.
    noise_sigma: f64,
    noise_sigma_estimated: bool,
    monte_carlo: McPurity,
    supersampling: Vec<BinError>,
}

#[derive(Serialize)]
struct AnalysisReport {
    seed: u64,
    brightness: Option<BrightnessFit>,
    car: Option<CarCurve>,
    heralding: Option<IntrinsicHeralding>,
    jsi: Option<JsiReport>,
}

fn analyze_jsi(path: &Path, run: &Run) -> Result<JsiReport> {
    let a = &run.config.analysis;
    let native = io::read_jsi(path)?;
    let (sigma, estimated) = match a.jsi_noise_sigma {
        Some(s) => (s, false),
        None => (jsi_noise_sigma(&native)?, true),
    };
    let binned = supersample_jsi(&native, a.jsi_bin_pm)?;
    let monte_carlo = monte_carlo_purity(&binned, sigma, a.mc_trials, run.seed)?;
    let supersampling = if a.supersampling_bins_pm.is_empty() {
        Vec::new()
    } else {
        supersampling_error_curve(
            &native,
            sigma,
            &a.supersampling_bins_pm,
            a.supersampling_realizations,
            run.seed,
        )?
    };
    Ok(JsiReport {
        native_shape: native.intensity.shape(),
        native_step_pm: (native.signal_step_pm(), native.idler_step_pm()),
        bin_pm: a.jsi_bin_pm,
        binned_shape: binned.intensity.shape(),
        noise_sigma: sigma,
        noise_sigma_estimated: estimated,
        monte_carlo,
        supersampling,
    })
}

fn cmd_analyze(run: &Run) -> Result<Vec<PathBuf>> {
    let a = &run.config.analysis;
    if a.power_series_csv.is_none() && a.jsi_csv.is_none() {
        return Err(Error::config(
            "analysis",
            "set `power_series_csv` and/or `jsi_csv` to give analyze something to read",
        ));
    }
    let mut report = AnalysisReport {
        seed: run.seed,
        brightness: None,
        car: None,
        heralding: None,
        jsi: None,
    };
    if let Some(path) = &a.power_series_csv {
        let data = io::read_power_series(path, a.coincidence_window_s)?;
        let curve = car_curve(&data, a.weighting)?;
        // Points flagged as TPA-suppressed are left out of the brightness fit.
        let fit = match (&curve.fit, curve.knee_mw) {
            (Some(f), Some(_)) => f.clone(),
            _ => fit_brightness(&data, a.weighting)?,
        };
        report.heralding = Some(intrinsic_heralding(&fit, &a.budget_signal, &a.budget_idler)?);
        report.brightness = Some(fit);
        report.car = Some(curve);
    }
    if let Some(path) = &a.jsi_csv {
        report.jsi = Some(analyze_jsi(path, run)?);
    }
    let json = run.out_dir.join("analysis.json");
    io::write_json(&json, &report)?;
    Ok(vec![json])
}
