//! Back-propagation of fitted detection efficiencies to the source.

use serde::{Deserialize, Serialize};

use crate::analysis::fit::BrightnessFit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossEntry {
    pub label: String,
    /// Positive number of dB lost.
    #[serde(rename = "loss_dB")]
    pub loss_db: f64,
    #[serde(rename = "err_dB", default)]
    pub err_db: f64,
}

impl LossEntry {
    pub fn new(label: &str, loss_db: f64, err_db: f64) -> Self {
        Self {
            label: label.to_string(),
            loss_db,
            err_db,
        }
    }
}

/// Ordered list of losses between the source and one detector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossBudget {
    pub entries: Vec<LossEntry>,
}

impl LossBudget {
    pub fn new(entries: Vec<LossEntry>) -> Result<Self> {
        let b = Self { entries };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if !(e.loss_db >= 0.0) || !e.loss_db.is_finite() {
                return Err(Error::usage(format!(
                    "loss `{}` must be a non-negative number of dB",
                    e.label
                )));
            }
            if !(e.err_db >= 0.0) || !e.err_db.is_finite() {
                return Err(Error::usage(format!("error on `{}` must be non-negative", e.label)));
            }
        }
        Ok(())
    }

    pub fn total_db(&self) -> f64 {
        self.entries.iter().map(|e| e.loss_db).sum()
    }

    /// Quadrature sum of the entry errors.
    pub fn err_db(&self) -> f64 {
        self.entries.iter().map(|e| e.err_db * e.err_db).sum::<f64>().sqrt()
    }

    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.total_db() / 10.0)
    }

    /// Signal channel losses: filters, grating coupler, fiber, detector.
    pub fn reference_signal() -> Self {
        Self {
            entries: vec![
                LossEntry::new("filters", 5.8, 0.1),
                LossEntry::new("grating_coupler", 3.75, 0.1),
                LossEntry::new("fiber", 0.42, 0.02),
                LossEntry::new("detector", 1.060, 0.044),
            ],
        }
    }

    pub fn reference_idler() -> Self {
        Self {
            entries: vec![
                LossEntry::new("filters", 7.0, 0.1),
                LossEntry::new("grating_coupler", 3.75, 0.1),
                LossEntry::new("fiber", 0.71, 0.02),
                LossEntry::new("detector", 0.814, 0.026),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeraldingEstimate {
    pub eta_fit: f64,
    pub eta_src: f64,
    pub err: f64,
    /// Part of `err` from the fit covariance.
    pub err_fit: f64,
    /// Part of `err` from the loss budget.
    pub err_budget: f64,
    #[serde(rename = "budget_total_dB")]
    pub budget_total_db: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntrinsicHeralding {
    pub signal: HeraldingEstimate,
    pub idler: HeraldingEstimate,
}

/// η_src = η / 10^(−L/10) with first-order errors from σ_η and the dB errors.
pub fn back_propagate(eta: f64, eta_err: f64, budget: &LossBudget) -> Result<HeraldingEstimate> {
    budget.validate()?;
    if !(eta > 0.0) {
        return Err(Error::domain(format!("efficiency must be positive, got {eta}")));
    }
    let eta_src = eta / budget.transmission();
    let err_fit = eta_src * eta_err / eta;
    let err_budget = eta_src * std::f64::consts::LN_10 / 10.0 * budget.err_db();
    let err = err_fit.hypot(err_budget);
    let warning = (eta_src - err > 1.0).then(|| {
        format!(
            "budget of {:.3} dB implies source efficiency {:.3} ± {:.3} > 1",
            budget.total_db(),
            eta_src,
            err
        )
    });
    Ok(HeraldingEstimate {
        eta_fit: eta,
        eta_src,
        err,
        err_fit,
        err_budget,
        budget_total_db: budget.total_db(),
        warning,
    })
}

pub fn intrinsic_heralding(
    fit: &BrightnessFit,
    budget_s: &LossBudget,
    budget_i: &LossBudget,
) -> Result<IntrinsicHeralding> {
    Ok(IntrinsicHeralding {
        signal: back_propagate(fit.eta_s, fit.std_error(1), budget_s)?,
        idler: back_propagate(fit.eta_i, fit.std_error(2), budget_i)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_budget_is_identity() {
        let e = back_propagate(0.056, 0.002, &LossBudget::default()).unwrap();
        assert_eq!(e.eta_src, 0.056);
        assert_relative_eq!(e.err, 0.002, epsilon = 1e-15);
    }

    #[test]
    fn reference_budgets() {
        let s = back_propagate(0.072, 0.002, &LossBudget::reference_signal()).unwrap();
        let i = back_propagate(0.056, 0.002, &LossBudget::reference_idler()).unwrap();
        assert!((s.eta_src - 0.921).abs() < 0.03, "{}", s.eta_src);
        assert!((i.eta_src - 0.940).abs() < 0.03, "{}", i.eta_src);
        assert!(s.warning.is_none() && i.warning.is_none());
    }

    #[test]
    fn doubling_budget_errors_doubles_budget_term() {
        let b = LossBudget::reference_idler();
        let mut b2 = b.clone();
        for e in &mut b2.entries {
            e.err_db *= 2.0;
        }
        let e1 = back_propagate(0.056, 0.002, &b).unwrap();
        let e2 = back_propagate(0.056, 0.002, &b2).unwrap();
        assert_relative_eq!(e2.err_budget, 2.0 * e1.err_budget, max_relative = 1e-12);
        assert_eq!(e1.err_fit, e2.err_fit);
    }

    #[test]
    fn budget_error_matches_finite_difference() {
        let b = LossBudget::reference_signal();
        let base = back_propagate(0.072, 0.0, &b).unwrap();
        let mut var = 0.0;
        for k in 0..b.entries.len() {
            let mut bp = b.clone();
            let h = 1e-6;
            bp.entries[k].loss_db += h;
            let d = (back_propagate(0.072, 0.0, &bp).unwrap().eta_src - base.eta_src) / h;
            var += (d * b.entries[k].err_db).powi(2);
        }
        assert_relative_eq!(base.err_budget, var.sqrt(), max_relative = 1e-5);
    }

    #[test]
    fn excessive_budget_warns() {
        let b = LossBudget::new(vec![LossEntry::new("too much", 20.0, 0.1)]).unwrap();
        assert!(back_propagate(0.056, 0.001, &b).unwrap().warning.is_some());
        assert!(LossBudget::new(vec![LossEntry::new("gain", -1.0, 0.0)]).is_err());
    }
}
