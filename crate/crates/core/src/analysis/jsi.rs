//! Measured joint spectral intensities: block supersampling, pixel-noise
//! estimation and Monte-Carlo purity uncertainty.
//!
//! Purity of a JSI is computed from √JSI, i.e. the JSA with its phase dropped.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sfwm::schmidt_decompose_real;
use crate::sim::add_multiplicative_noise;

/// Pixels below this fraction of the peak are ignored by the noise estimator.
pub const NOISE_SUPPORT_FRACTION: f64 = 0.01;
pub const MIN_TRIALS: usize = 100;

const AXIS_UNIFORMITY: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredJsi {
    pub signal_nm: Vec<f64>,
    pub idler_nm: Vec<f64>,
    /// Rows follow the signal axis.
    pub intensity: DMatrix<f64>,
}

fn axis_step(name: &str, axis: &[f64]) -> Result<f64> {
    if axis.len() < 2 {
        return Err(Error::usage(format!("{name} axis needs at least two samples")));
    }
    let step = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::usage(format!("{name} axis must be increasing")));
    }
    for w in axis.windows(2) {
        if ((w[1] - w[0]) - step).abs() > AXIS_UNIFORMITY * step.max(1e-3) + 1e-9 * w[0].abs() {
            return Err(Error::usage(format!("{name} axis is not uniformly sampled")));
        }
    }
    Ok(step)
}

impl MeasuredJsi {
    pub fn new(signal_nm: Vec<f64>, idler_nm: Vec<f64>, intensity: DMatrix<f64>) -> Result<Self> {
        let j = Self {
            signal_nm,
            idler_nm,
            intensity,
        };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<()> {
        axis_step("signal", &self.signal_nm)?;
        axis_step("idler", &self.idler_nm)?;
        if self.intensity.nrows() != self.signal_nm.len() || self.intensity.ncols() != self.idler_nm.len() {
            return Err(Error::usage(format!(
                "intensity is {}×{} but axes have {} and {} samples",
                self.intensity.nrows(),
                self.intensity.ncols(),
                self.signal_nm.len(),
                self.idler_nm.len()
            )));
        }
        if self.intensity.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Data("intensities must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn signal_step_pm(&self) -> f64 {
        (self.signal_nm[self.signal_nm.len() - 1] - self.signal_nm[0]) / (self.signal_nm.len() - 1) as f64 * 1e3
    }

    pub fn idler_step_pm(&self) -> f64 {
        (self.idler_nm[self.idler_nm.len() - 1] - self.idler_nm[0]) / (self.idler_nm.len() - 1) as f64 * 1e3
    }

    /// √JSI as a phase-free JSA proxy.
    pub fn amplitude(&self) -> DMatrix<f64> {
        self.intensity.map(f64::sqrt)
    }

    pub fn purity(&self) -> Result<f64> {
        Ok(schmidt_decompose_real(&self.amplitude())?.purity)
    }
}

fn block_size(bin_pm: f64, step_pm: f64, axis: &str) -> Result<usize> {
    if bin_pm < step_pm * (1.0 - 1e-9) {
        return Err(Error::usage(format!(
            "bin of {bin_pm} pm is finer than the native {axis} step of {step_pm} pm"
        )));
    }
    Ok(((bin_pm / step_pm).round() as usize).max(1))
}

/// Averages the JSI over bin×bin pm cells. Each axis uses round(bin/step)
/// native samples per cell; trailing partial cells are dropped and every
/// output axis value is the mean of its cell.
pub fn supersample_jsi(j: &MeasuredJsi, bin_pm: f64) -> Result<MeasuredJsi> {
    j.validate()?;
    if !(bin_pm > 0.0) {
        return Err(Error::usage("bin must be positive"));
    }
    let bs = block_size(bin_pm, j.signal_step_pm(), "signal")?;
    let bi = block_size(bin_pm, j.idler_step_pm(), "idler")?;
    let (ns, ni) = (j.signal_nm.len() / bs, j.idler_nm.len() / bi);
    if ns == 0 || ni == 0 {
        return Err(Error::usage(format!("bin of {bin_pm} pm exceeds the JSI extent")));
    }
    let mean_axis = |axis: &[f64], b: usize, n: usize| -> Vec<f64> {
        (0..n)
            .map(|k| axis[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64)
            .collect()
    };
    let norm = (bs * bi) as f64;
    let intensity = DMatrix::from_fn(ns, ni, |r, c| {
        let mut s = 0.0;
        for x in r * bs..(r + 1) * bs {
            for y in c * bi..(c + 1) * bi {
                s += j.intensity[(x, y)];
            }
        }
        s / norm
    });
    Ok(MeasuredJsi {
        signal_nm: mean_axis(&j.signal_nm, bs, ns),
        idler_nm: mean_axis(&j.idler_nm, bi, ni),
        intensity,
    })
}

/// Relative pixel noise from second differences along the idler axis.
///
/// For each run of three pixels above the support threshold,
/// d = (I_{x-1} − 2I_x + I_{x+1}) / I_x; with independent multiplicative noise
/// σ, std(d) ≈ √6·σ. The second difference cancels the local slope, so a
/// smooth JSI contributes only at order step².
pub fn jsi_noise_sigma(j: &MeasuredJsi) -> Result<f64> {
    j.validate()?;
    let (nr, nc) = j.intensity.shape();
    if nr < 3 || nc < 3 {
        return Err(Error::usage("noise estimation needs at least a 3×3 JSI"));
    }
    let peak = j.intensity.max();
    if !(peak > 0.0) {
        return Err(Error::Data("JSI is identically zero".into()));
    }
    let threshold = NOISE_SUPPORT_FRACTION * peak;
    let mut d = Vec::new();
    for r in 0..nr {
        for c in 1..nc - 1 {
            let (a, b, e) = (j.intensity[(r, c - 1)], j.intensity[(r, c)], j.intensity[(r, c + 1)]);
            if a > threshold && b > threshold && e > threshold {
                d.push((a - 2.0 * b + e) / b);
            }
        }
    }
    if d.len() < 2 {
        return Err(Error::Data("too few pixels above the noise-support threshold".into()));
    }
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
    Ok((var / 6.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McPurity {
    /// Purity of the input without added noise.
    pub purity_noiseless: f64,
    /// Mean purity over the noisy trials.
    pub purity: f64,
    /// Sample standard deviation over trials.
    pub std: f64,
    /// RMS deviation of the trials from the noiseless purity.
    pub err: f64,
    pub sigma: f64,
    pub trials: usize,
    pub seed: u64,
}

/// RNG of trial `k`: ChaCha8 seeded with `seed`, stream `k`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Purity spread of √JSI under independent multiplicative gaussian pixel
/// noise of relative size `sigma`.
pub fn monte_carlo_purity(j: &MeasuredJsi, sigma: f64, trials: usize, seed: u64) -> Result<McPurity> {
    j.validate()?;
    if trials < MIN_TRIALS {
        return Err(Error::usage(format!(
            "Monte-Carlo purity needs at least {MIN_TRIALS} trials"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::usage("noise level must be non-negative"));
    }
    let p0 = j.purity()?;
    let samples = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k as u64);
            let noisy = add_multiplicative_noise(&j.intensity, sigma, &mut rng);
            Ok(schmidt_decompose_real(&noisy.map(f64::sqrt))?.purity)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = (samples.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let err = (samples.iter().map(|p| (p - p0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(McPurity {
        purity_noiseless: p0,
        purity: mean,
        std,
        err,
        sigma,
        trials,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinError {
    pub bin_pm: f64,
    pub purity_noiseless: f64,
    /// RMS over realisations of |P(noisy, binned) − P(noiseless, binned)|.
    pub rms_error: f64,
}

/// Purity error against bin size: native-resolution noise is injected into
/// `j`, the result supersampled at each bin, and compared with the equally
/// supersampled noise-free JSI.
pub fn supersampling_error_curve(
    j: &MeasuredJsi,
    sigma: f64,
    bins_pm: &[f64],
    realizations: usize,
    seed: u64,
) -> Result<Vec<BinError>> {
    j.validate()?;
    if realizations == 0 {
        return Err(Error::usage("need at least one realisation"));
    }
    let clean = bins_pm
        .iter()
        .map(|&b| supersample_jsi(j, b)?.purity())
        .collect::<Result<Vec<_>>>()?;
    let per_real = (0..realizations)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k as u64);
            let noisy = MeasuredJsi {
                intensity: add_multiplicative_noise(&j.intensity, sigma, &mut rng),
                ..j.clone()
            };
            bins_pm
                .iter()
                .map(|&b| supersample_jsi(&noisy, b)?.purity())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(bins_pm
        .iter()
        .enumerate()
        .map(|(i, &bin_pm)| {
            let ms = per_real.iter().map(|r| (r[i] - clean[i]).powi(2)).sum::<f64>() / realizations as f64;
            BinError {
                bin_pm,
                purity_noiseless: clean[i],
                rms_error: ms.sqrt(),
            }
        })
        .collect())
}
