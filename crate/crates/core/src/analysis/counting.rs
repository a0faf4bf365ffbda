//! Second-order correlation estimators for pulsed sources.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singles and coincidence rates behind a 50:50 splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    #[serde(rename = "C_A_Hz")]
    pub c_a_hz: f64,
    #[serde(rename = "C_B_Hz")]
    pub c_b_hz: f64,
    #[serde(rename = "C_AB_Hz")]
    pub c_ab_hz: f64,
}

/// Herald counts and herald-conditioned counts of the split partner arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeraldedCounts {
    pub n_h: u64,
    pub n_ha: u64,
    pub n_hb: u64,
    pub n_hab: u64,
}

/// g2 = (C_AB/R) / ((C_A/R)·(C_B/R)) per pulse.
pub fn g2_unheralded(counts: &SplitCounts, rep_rate_hz: f64) -> Result<f64> {
    if !(rep_rate_hz > 0.0) {
        return Err(Error::usage("repetition rate must be positive"));
    }
    if !(counts.c_a_hz > 0.0 && counts.c_b_hz > 0.0) {
        return Err(Error::Data("g2 undefined without singles in both arms".into()));
    }
    if !(counts.c_ab_hz >= 0.0) {
        return Err(Error::Data("coincidence rate must be non-negative".into()));
    }
    Ok((counts.c_ab_hz / rep_rate_hz) / ((counts.c_a_hz / rep_rate_hz) * (counts.c_b_hz / rep_rate_hz)))
}

/// g2_h = N_hab·N_h / (N_ha·N_hb).
pub fn g2_heralded(c: &HeraldedCounts) -> Result<f64> {
    if c.n_h == 0 {
        return Err(Error::Data("no heralds".into()));
    }
    if c.n_ha == 0 || c.n_hb == 0 {
        return Err(Error::Data(
            "heralded g2 undefined without heralded singles in both arms".into(),
        ));
    }
    Ok(c.n_hab as f64 * c.n_h as f64 / (c.n_ha as f64 * c.n_hb as f64))
}
