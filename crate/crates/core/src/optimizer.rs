//! Purity/brightness maps over the auxiliary couplings (κ2², κ_mzi²).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::molecule::{resonance_near, MoleculeParams};
use crate::sfwm::{build_jsa, jsa_grids, purity_trace, JointSpectrum, JsaGrids, JsaSettings, PumpPulse};

/// Scan window either side of a resonance when measuring simulated linewidths, in FSR.
pub const LINEWIDTH_WINDOW_FSR: f64 = 0.49;
pub const LINEWIDTH_POINTS: usize = 1401;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kappa2_sq_range: Vec<f64>,
    pub kappa_mzi_sq_range: Vec<f64>,
    /// Template for everything except the two swept couplings.
    pub fixed: MoleculeParams,
    pub pump: PumpPulse,
    pub jsa: JsaSettings,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("kappa2_sq", &self.kappa2_sq_range),
            ("kappa_mzi_sq", &self.kappa_mzi_sq_range),
        ] {
            if r.is_empty() {
                return Err(Error::usage(format!("{name} range is empty")));
            }
            if r.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::usage(format!("{name} range must be strictly increasing")));
            }
            if r.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::usage(format!("{name} values must lie in [0, 1]")));
            }
        }
        self.fixed.validate()?;
        self.pump.validate()?;
        self.jsa.validate()
    }
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn linear_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub kappa2_sq: f64,
    pub kappa_mzi_sq: f64,
    pub purity: f64,
    pub relative_brightness: f64,
    pub pump_fwhm_sim_pm: f64,
    pub signal_fwhm_sim_pm: f64,
    /// Set when the cell could not be evaluated; numeric fields are then NaN.
    pub error: Option<String>,
}

impl SweepCell {
    fn failed(kappa2_sq: f64, kappa_mzi_sq: f64, e: &Error) -> Self {
        Self {
            kappa2_sq,
            kappa_mzi_sq,
            purity: f64::NAN,
            relative_brightness: f64::NAN,
            pump_fwhm_sim_pm: f64::NAN,
            signal_fwhm_sim_pm: f64::NAN,
            error: Some(e.to_string()),
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Row-major grid: rows follow κ2², columns κ_mzi².
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub kappa2_sq: Vec<f64>,
    pub kappa_mzi_sq: Vec<f64>,
    pub cells: Vec<SweepCell>,
    /// The pump bandwidth is held fixed across cells.
    pub pump_fwhm_pm: f64,
}

impl SweepGrid {
    pub fn get(&self, row: usize, col: usize) -> &SweepCell {
        &self.cells[row * self.kappa_mzi_sq.len() + col]
    }

    pub fn success_fraction(&self) -> f64 {
        self.cells.iter().filter(|c| c.ok()).count() as f64 / self.cells.len() as f64
    }
}

/// Shared state for evaluating many devices that differ only in κ2² and κ_mzi².
pub struct DesignEvaluator {
    pub fixed: MoleculeParams,
    pub pump: PumpPulse,
    pub jsa: JsaSettings,
    pub grids: JsaGrids,
    pub reference: JointSpectrum,
}

impl DesignEvaluator {
    /// Builds the shared grids and the single-ring (κ2² = 0) brightness reference.
    pub fn new(fixed: &MoleculeParams, pump: &PumpPulse, jsa: &JsaSettings) -> Result<Self> {
        let grids = jsa_grids(fixed, pump, jsa)?;
        let reference = build_jsa(&fixed.with_couplings(0.0, 0.0), pump, &grids.signal, &grids.idler, jsa)?;
        Ok(Self {
            fixed: *fixed,
            pump: *pump,
            jsa: *jsa,
            grids,
            reference,
        })
    }

    pub fn jsa(&self, kappa2_sq: f64, kappa_mzi_sq: f64) -> Result<JointSpectrum> {
        let p = self.fixed.with_couplings(kappa2_sq, kappa_mzi_sq);
        build_jsa(&p, &self.pump, &self.grids.signal, &self.grids.idler, &self.jsa)
    }

    pub fn cell(&self, kappa2_sq: f64, kappa_mzi_sq: f64) -> SweepCell {
        self.try_cell(kappa2_sq, kappa_mzi_sq)
            .unwrap_or_else(|e| SweepCell::failed(kappa2_sq, kappa_mzi_sq, &e))
    }

    fn try_cell(&self, kappa2_sq: f64, kappa_mzi_sq: f64) -> Result<SweepCell> {
        let j = self.jsa(kappa2_sq, kappa_mzi_sq)?;
        let purity = purity_trace(&j.amplitude)?;
        let relative_brightness = crate::sfwm::relative_brightness(&j, &self.reference)?;
        let p = self.fixed.with_couplings(kappa2_sq, kappa_mzi_sq);
        let (pump_fwhm_sim_pm, signal_fwhm_sim_pm) = simulated_linewidths(&p, &self.pump);
        Ok(SweepCell {
            kappa2_sq,
            kappa_mzi_sq,
            purity,
            relative_brightness,
            pump_fwhm_sim_pm,
            signal_fwhm_sim_pm,
            error: None,
        })
    }
}

/// FWHM (pm) of the simulated pump and signal dips; NaN where no dip is found.
pub fn simulated_linewidths(p: &MoleculeParams, pump: &PumpPulse) -> (f64, f64) {
    let measure = |order: u32| -> f64 {
        let centre = p.primary_resonance_nm(order);
        let half = LINEWIDTH_WINDOW_FSR * p.fsr_nm(centre);
        resonance_near(p, centre, half, LINEWIDTH_POINTS)
            .map(|r| r.fwhm_pm)
            .unwrap_or(f64::NAN)
    };
    match p.primary_order_near(pump.center_nm) {
        Ok(m) => (measure(m), measure(m + 1)),
        Err(_) => (f64::NAN, f64::NAN),
    }
}

pub fn sweep(spec: &SweepSpec) -> Result<SweepGrid> {
    spec.validate()?;
    let eval = DesignEvaluator::new(&spec.fixed, &spec.pump, &spec.jsa)?;
    let ncol = spec.kappa_mzi_sq_range.len();
    let cells = (0..spec.kappa2_sq_range.len() * ncol)
        .into_par_iter()
        .map(|idx| eval.cell(spec.kappa2_sq_range[idx / ncol], spec.kappa_mzi_sq_range[idx % ncol]))
        .collect();
    Ok(SweepGrid {
        kappa2_sq: spec.kappa2_sq_range.clone(),
        kappa_mzi_sq: spec.kappa_mzi_sq_range.clone(),
        cells,
        pump_fwhm_pm: spec.pump.fwhm_pm,
    })
}

/// Brightest successful cell with purity ≥ `min_purity`; ties go to the
/// larger κ2², then the larger κ_mzi².
pub fn select_design(cells: &[SweepCell], min_purity: f64) -> Result<SweepCell> {
    if cells.is_empty() {
        return Err(Error::usage("cannot select from an empty sweep"));
    }
    cells
        .iter()
        .filter(|c| c.ok() && c.purity >= min_purity)
        .max_by(|a, b| {
            a.relative_brightness
                .total_cmp(&b.relative_brightness)
                .then(a.kappa2_sq.total_cmp(&b.kappa2_sq))
                .then(a.kappa_mzi_sq.total_cmp(&b.kappa_mzi_sq))
        })
        .cloned()
        .ok_or_else(|| Error::NotFound(format!("no sweep cell reaches purity {min_purity}")))
}
