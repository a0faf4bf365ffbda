//! Run configuration: strict JSON, units in key names, every block optional.
//!
//! Nested parameter blocks fall back key by key to their defaults, so
//! `{"device": {"kappa2_sq": 0}}` is the default design with the auxiliary
//! ring decoupled. Unknown keys and unphysical values are rejected at load
//! with the offending key path in the error.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::fit::Weighting;
use crate::analysis::heralding::LossBudget;
use crate::coupler::{CouplerGeometry, CouplingCoefficientModel};
use crate::error::{Error, Result};
use crate::molecule::MoleculeParams;
use crate::optimizer::{linear_spaced, log_spaced, SweepSpec};
use crate::sfwm::{JsaSettings, PumpPulse};
use crate::spectral::WavelengthGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Either explicit `values` or `min`/`max`/`points` with a spacing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AxisSpec {
    pub values: Option<Vec<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: Option<usize>,
    pub spacing: Spacing,
}

impl AxisSpec {
    pub fn range(min: f64, max: f64, points: usize, spacing: Spacing) -> Self {
        Self {
            values: None,
            min: Some(min),
            max: Some(max),
            points: Some(points),
            spacing,
        }
    }

    pub fn resolve(&self, key: &str) -> Result<Vec<f64>> {
        let v = match (&self.values, self.min, self.max, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(lo), Some(hi), Some(n)) => {
                if n == 0 {
                    return Err(Error::config(format!("{key}.points"), "must be at least 1"));
                }
                if !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::config(key, format!("need finite min ≤ max, got [{lo}, {hi}]")));
                }
                match self.spacing {
                    Spacing::Linear => linear_spaced(lo, hi, n),
                    Spacing::Log if lo > 0.0 => log_spaced(lo, hi, n),
                    Spacing::Log => return Err(Error::config(format!("{key}.min"), "log spacing needs min > 0")),
                }
            }
            _ => {
                return Err(Error::config(
                    key,
                    "give either `values` or all of `min`, `max` and `points`",
                ))
            }
        };
        if v.is_empty() {
            return Err(Error::config(key, "range is empty"));
        }
        if v.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config(key, "values must be strictly increasing"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub center_nm: f64,
    pub span_nm: f64,
    pub points: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            center_nm: 1550.0,
            span_nm: 2.5,
            points: 5001,
        }
    }
}

impl SpectrumConfig {
    pub fn grid(&self) -> Result<WavelengthGrid> {
        WavelengthGrid::centered(self.center_nm, self.span_nm, self.points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JsaRunConfig {
    /// Replace the pump bandwidth by the one that maximises purity.
    pub optimize_pump: bool,
    /// Number of Schmidt probabilities reported.
    pub schmidt_modes: usize,
}

impl Default for JsaRunConfig {
    fn default() -> Self {
        Self {
            optimize_pump: false,
            schmidt_modes: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplerScanConfig {
    /// Gap, radius and bent fraction; length and angle are scanned.
    pub template: CouplerGeometry,
    #[serde(rename = "L_s_um")]
    pub straight_length_um: AxisSpec,
    pub theta_rad: AxisSpec,
}

impl Default for CouplerScanConfig {
    fn default() -> Self {
        Self {
            template: CouplerGeometry::default(),
            straight_length_um: AxisSpec::range(0.0, 30.0, 61, Spacing::Linear),
            theta_rad: AxisSpec::range(0.0, 1.2, 49, Spacing::Linear),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kappa2_sq: AxisSpec,
    pub kappa_mzi_sq: AxisSpec,
    pub min_purity: f64,
    /// Minimum fraction of cells that must evaluate for the sweep to succeed.
    pub min_success_fraction: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kappa2_sq: AxisSpec::range(0.01, 0.9, 25, Spacing::Log),
            kappa_mzi_sq: AxisSpec::range(0.01, 0.9, 25, Spacing::Log),
            min_purity: 0.99,
            min_success_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// CSV with P_mW, Cs_Hz, Ci_Hz, Ccc_Hz and optional ACC_Hz.
    pub power_series_csv: Option<PathBuf>,
    pub coincidence_window_s: f64,
    pub weighting: Weighting,
    pub budget_signal: LossBudget,
    pub budget_idler: LossBudget,
    /// Long-format JSI CSV (signal_nm, idler_nm, intensity).
    pub jsi_csv: Option<PathBuf>,
    pub jsi_bin_pm: f64,
    /// Relative pixel noise at native resolution; estimated from the data when absent.
    pub jsi_noise_sigma: Option<f64>,
    pub mc_trials: usize,
    /// Bin sizes for the purity-error curve; empty skips it.
    pub supersampling_bins_pm: Vec<f64>,
    pub supersampling_realizations: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            power_series_csv: None,
            coincidence_window_s: 1e-9,
            weighting: Weighting::default(),
            budget_signal: LossBudget::reference_signal(),
            budget_idler: LossBudget::reference_idler(),
            jsi_csv: None,
            jsi_bin_pm: 4.0,
            jsi_noise_sigma: None,
            mc_trials: 200,
            supersampling_bins_pm: Vec::new(),
            supersampling_realizations: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub device: MoleculeParams,
    pub pump: PumpPulse,
    pub jsa: JsaSettings,
    pub jsa_run: JsaRunConfig,
    pub spectrum: SpectrumConfig,
    pub coupler_model: CouplingCoefficientModel,
    pub coupler_scan: CouplerScanConfig,
    pub sweep: SweepConfig,
    pub analysis: AnalysisConfig,
    pub io: IoConfig,
}

fn tag<T>(key: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::config(key, other.to_string()),
    })
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            Error::config(
                if key == "." { "<root>".to_string() } else { key },
                e.into_inner().to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates; relative data paths are resolved against the
    /// directory of the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&crate::io::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.analysis.power_series_csv, &mut cfg.analysis.jsi_csv]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        tag("device", self.device.validate())?;
        tag("pump", self.pump.validate())?;
        tag("jsa", self.jsa.validate())?;
        tag("spectrum", self.spectrum.grid().map(|_| ()))?;
        tag("coupler_model", self.coupler_model.validate())?;
        tag("coupler_scan.template", self.coupler_scan.template.validate())?;
        self.coupler_scan.straight_length_um.resolve("coupler_scan.L_s_um")?;
        self.coupler_scan.theta_rad.resolve("coupler_scan.theta_rad")?;
        tag("sweep", self.sweep_spec().and_then(|s| s.validate()))?;
        if !(0.0..=1.0).contains(&self.sweep.min_purity) {
            return Err(Error::config("sweep.min_purity", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.sweep.min_success_fraction) {
            return Err(Error::config("sweep.min_success_fraction", "must lie in [0, 1]"));
        }
        let a = &self.analysis;
        if !(a.coincidence_window_s >= 0.0) || !a.coincidence_window_s.is_finite() {
            return Err(Error::config("analysis.coincidence_window_s", "must be non-negative"));
        }
        tag("analysis.budget_signal", a.budget_signal.validate())?;
        tag("analysis.budget_idler", a.budget_idler.validate())?;
        if !(a.jsi_bin_pm > 0.0) {
            return Err(Error::config("analysis.jsi_bin_pm", "must be positive"));
        }
        if a.jsi_noise_sigma.is_some_and(|s| !(s >= 0.0) || !s.is_finite()) {
            return Err(Error::config("analysis.jsi_noise_sigma", "must be non-negative"));
        }
        if a.mc_trials < crate::analysis::jsi::MIN_TRIALS {
            return Err(Error::config(
                "analysis.mc_trials",
                format!("must be at least {}", crate::analysis::jsi::MIN_TRIALS),
            ));
        }
        if a.supersampling_bins_pm.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::config("analysis.supersampling_bins_pm", "bins must be positive"));
        }
        if a.supersampling_realizations == 0 {
            return Err(Error::config(
                "analysis.supersampling_realizations",
                "must be at least 1",
            ));
        }
        if self.io.threads == Some(0) {
            return Err(Error::config("io.threads", "must be at least 1"));
        }
        Ok(())
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        Ok(SweepSpec {
            kappa2_sq_range: self.sweep.kappa2_sq.resolve("sweep.kappa2_sq")?,
            kappa_mzi_sq_range: self.sweep.kappa_mzi_sq.resolve("sweep.kappa_mzi_sq")?,
            fixed: self.device,
            pump: self.pump,
            jsa: self.jsa,
        })
    }
}
