//! Synthetic data generators: power series, photon-counting statistics and JSIs.
//!
//! Every generator takes an explicit seed and draws from `ChaCha8Rng`, so
//! output is reproducible across runs and platforms.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::counting::{HeraldedCounts, SplitCounts};
use crate::analysis::fit::{PowerPoint, PowerSeries};
use crate::analysis::jsi::MeasuredJsi;
use crate::error::{Error, Result};
use crate::molecule::MoleculeParams;
use crate::sfwm::{build_jsa, jsa_grids, JsaSettings, PumpPulse};
use crate::spectral::WavelengthGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrightnessTruth {
    #[serde(rename = "gamma_eff_Hz_mW2")]
    pub gamma_eff: f64,
    pub eta_s: f64,
    pub eta_i: f64,
    #[serde(rename = "beta_s_Hz_mW")]
    pub beta_s: f64,
    #[serde(rename = "beta_i_Hz_mW")]
    pub beta_i: f64,
    #[serde(rename = "dark_Hz")]
    pub dark: f64,
}

impl Default for BrightnessTruth {
    fn default() -> Self {
        Self {
            gamma_eff: 4.4e6,
            eta_s: 0.072,
            eta_i: 0.056,
            beta_s: 2.0e3,
            beta_i: 1.5e3,
            dark: 500.0,
        }
    }
}

/// Pair generation suppressed by 1/(1 + s·(P − P_knee)) above the knee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpaModel {
    #[serde(rename = "knee_mW")]
    pub knee_mw: f64,
    #[serde(rename = "strength_per_mW")]
    pub strength_per_mw: f64,
}

impl TpaModel {
    pub fn factor(&self, p_mw: f64) -> f64 {
        1.0 / (1.0 + self.strength_per_mw * (p_mw - self.knee_mw).max(0.0))
    }
}

/// Rates from the brightness model with multiplicative gaussian noise of
/// relative size `noise_rel` on every observed rate (clamped at zero).
pub fn synthetic_power_series(
    truth: &BrightnessTruth,
    powers_mw: &[f64],
    coincidence_window_s: f64,
    noise_rel: f64,
    tpa: Option<TpaModel>,
    seed: u64,
) -> Result<PowerSeries> {
    if !(noise_rel >= 0.0) {
        return Err(Error::usage("noise level must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = |x: f64| -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        (x * (1.0 + noise_rel * e)).max(0.0)
    };
    let rows = powers_mw
        .iter()
        .map(|&p| {
            let pair = truth.gamma_eff * p * p * tpa.map_or(1.0, |t| t.factor(p));
            let cs = pair * truth.eta_s + truth.beta_s * p + truth.dark;
            let ci = pair * truth.eta_i + truth.beta_i * p + truth.dark;
            let ccc = pair * truth.eta_s * truth.eta_i + cs * ci * coincidence_window_s;
            PowerPoint {
                p_mw: p,
                cs_hz: noisy(cs),
                ci_hz: noisy(ci),
                ccc_hz: noisy(ccc),
                acc_hz: None,
            }
        })
        .collect();
    PowerSeries::new(rows, coincidence_window_s)
}

fn thermal(mean: f64) -> Result<Geometric> {
    Geometric::new(1.0 / (1.0 + mean)).map_err(|e| Error::usage(format!("invalid thermal mean {mean}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalSplitResult {
    pub counts: SplitCounts,
    pub g2: f64,
    /// Standard error of g2 from the spread of per-batch estimates.
    pub g2_err: f64,
    pub expected: f64,
}

/// One arm of a multimode thermal source sent onto a 50:50 splitter.
///
/// Each Schmidt mode k carries a thermal photon number of mean µ·p_k; the
/// detectors resolve photon number, so C_AB accumulates n_A·n_B and the
/// estimator is unbiased at any µ. Expected g2 is 1 + Σp_k².
pub fn simulate_thermal_split(
    schmidt_probs: &[f64],
    mean_photons: f64,
    pulses: u64,
    rep_rate_hz: f64,
    batches: u64,
    seed: u64,
) -> Result<ThermalSplitResult> {
    if schmidt_probs.is_empty() || pulses == 0 || batches == 0 || pulses < batches {
        return Err(Error::usage("thermal simulation needs modes, pulses and batches"));
    }
    let total: f64 = schmidt_probs.iter().sum();
    let modes = schmidt_probs
        .iter()
        .map(|p| thermal(mean_photons * p / total))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_batch = pulses / batches;
    let (mut sa, mut sb, mut sab) = (0u64, 0u64, 0u64);
    let mut estimates = Vec::with_capacity(batches as usize);
    for b in 0..batches {
        let n_pulses = if b == batches - 1 {
            pulses - per_batch * (batches - 1)
        } else {
            per_batch
        };
        let (mut ba, mut bb, mut bab) = (0u64, 0u64, 0u64);
        for _ in 0..n_pulses {
            let n: u64 = modes.iter().map(|m| m.sample(&mut rng)).sum();
            if n == 0 {
                continue;
            }
            let na = Binomial::new(n, 0.5).expect("valid binomial").sample(&mut rng);
            let nb = n - na;
            ba += na;
            bb += nb;
            bab += na * nb;
        }
        if ba > 0 && bb > 0 {
            estimates.push(n_pulses as f64 * bab as f64 / (ba as f64 * bb as f64));
        }
        sa += ba;
        sb += bb;
        sab += bab;
    }
    let counts = SplitCounts {
        c_a_hz: sa as f64 / pulses as f64 * rep_rate_hz,
        c_b_hz: sb as f64 / pulses as f64 * rep_rate_hz,
        c_ab_hz: sab as f64 / pulses as f64 * rep_rate_hz,
    };
    let g2 = crate::analysis::counting::g2_unheralded(&counts, rep_rate_hz)?;
    let k = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / k;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    let sum_p2: f64 = schmidt_probs.iter().map(|p| (p / total).powi(2)).sum();
    Ok(ThermalSplitResult {
        counts,
        g2,
        g2_err: (var / k).sqrt(),
        expected: 1.0 + sum_p2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairStatistics {
    /// Single-mode thermal (pure two-mode squeezed vacuum).
    Thermal,
    Poisson,
}

/// Samples n ≥ 1 from a zero-truncated Poisson distribution by inverse CDF.
fn truncated_poisson<R: Rng>(mu: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random::<f64>() * (1.0 - (-mu).exp());
    let mut n = 1u64;
    let mut term = mu * (-mu).exp();
    let mut cdf = term;
    while cdf < u && n < 1000 {
        n += 1;
        term *= mu / n as f64;
        cdf += term;
    }
    n
}

/// Pair source with mean µ pairs per pulse, ideal herald detector, and the
/// heralded arm split 50:50 onto two threshold detectors.
///
/// Only pulses with at least one pair can herald, so their number is drawn
/// from a binomial and only those pulses are simulated.
pub fn simulate_heralded(mu: f64, statistics: PairStatistics, pulses: u64, seed: u64) -> Result<HeraldedCounts> {
    if !(mu > 0.0) || pulses == 0 {
        return Err(Error::usage("heralded simulation needs µ > 0 and pulses > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_any = match statistics {
        PairStatistics::Thermal => mu / (1.0 + mu),
        PairStatistics::Poisson => 1.0 - (-mu).exp(),
    };
    let n_h = Binomial::new(pulses, p_any)
        .map_err(|e| Error::usage(e.to_string()))?
        .sample(&mut rng);
    let extra = thermal(mu)?;
    let (mut n_ha, mut n_hb, mut n_hab) = (0u64, 0u64, 0u64);
    for _ in 0..n_h {
        let n = match statistics {
            // memoryless: given n ≥ 1, n − 1 is again thermal with mean µ
            PairStatistics::Thermal => 1 + extra.sample(&mut rng),
            PairStatistics::Poisson => truncated_poisson(mu, &mut rng),
        };
        let na = Binomial::new(n, 0.5).expect("valid binomial").sample(&mut rng);
        let (a, b) = (na > 0, n - na > 0);
        n_ha += a as u64;
        n_hb += b as u64;
        n_hab += (a && b) as u64;
    }
    Ok(HeraldedCounts { n_h, n_ha, n_hb, n_hab })
}

/// Herald and both arms clicking independently with fixed probabilities.
pub fn simulate_independent_arms(p_h: f64, p_a: f64, p_b: f64, pulses: u64, seed: u64) -> Result<HeraldedCounts> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bin = |n: u64, p: f64| Binomial::new(n, p).map_err(|e| Error::usage(e.to_string()));
    let n_h = bin(pulses, p_h)?.sample(&mut rng);
    let n_ha = bin(n_h, p_a)?.sample(&mut rng);
    let n_hab = bin(n_ha, p_b)?.sample(&mut rng);
    let n_hb = n_hab + bin(n_h - n_ha, p_b)?.sample(&mut rng);
    Ok(HeraldedCounts { n_h, n_ha, n_hb, n_hab })
}

/// Noise-free JSI of a device on spectrometer-like axes: `half_width_pm`
/// either side of the signal resonance and its energy-conserving idler.
pub fn synthetic_jsi(
    p: &MoleculeParams,
    pulse: &PumpPulse,
    settings: &JsaSettings,
    half_width_pm: f64,
    signal_step_pm: f64,
    idler_step_pm: f64,
) -> Result<MeasuredJsi> {
    if !(half_width_pm > 0.0 && signal_step_pm > 0.0 && idler_step_pm > 0.0) {
        return Err(Error::usage("JSI window and steps must be positive"));
    }
    let centres = jsa_grids(p, pulse, settings)?;
    let axis = |centre: f64, step_pm: f64| -> Result<WavelengthGrid> {
        let half_points = (half_width_pm / step_pm).round() as usize;
        let half = half_points as f64 * step_pm * 1e-3;
        WavelengthGrid::new(centre - half, centre + half, 2 * half_points + 1)
    };
    let sg = axis(centres.signal.center(), signal_step_pm)?;
    let ig = axis(centres.idler.center(), idler_step_pm)?;
    let j = build_jsa(p, pulse, &sg, &ig, settings)?;
    let intensity = j.intensity();
    let peak = intensity.max();
    MeasuredJsi::new(sg.to_vec(), ig.to_vec(), intensity / peak)
}

/// Multiplies each pixel by (1 + σ·N(0,1)) and clamps at zero.
pub fn add_multiplicative_noise<R: Rng>(intensity: &DMatrix<f64>, sigma: f64, rng: &mut R) -> DMatrix<f64> {
    intensity.map(|v| {
        let e: f64 = rng.sample(StandardNormal);
        (v * (1.0 + sigma * e)).max(0.0)
    })
}
