//! Joint weighted least-squares fit of singles and coincidence rates vs pump power.
//!
//! ```text
//! C_s  = γ·η_s·P² + β_s·P + DC
//! C_i  = γ·η_i·P² + β_i·P + DC
//! C_cc = γ·η_s·η_i·P² + ACC,   ACC = C_s·C_i·Δt unless measured
//! ```
//!
//! The model is linear in x = (a_s, a_i, c, β_s, β_i, DC) with a_s = γη_s,
//! a_i = γη_i and c = γη_sη_i; the physical parameters follow from
//! γ = a_s·a_i/c, η_s = c/a_i and η_i = c/a_s, with the covariance carried
//! through the Jacobian of that map.

use nalgebra::{DMatrix, DVector, Matrix6, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fits with a larger condition number (after column scaling) are rejected.
pub const MAX_CONDITION: f64 = 1e12;
pub const MIN_FIT_POINTS: usize = 5;
/// Residual threshold, in standard deviations, for flagging the TPA knee.
pub const KNEE_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerPoint {
    #[serde(rename = "P_mW")]
    pub p_mw: f64,
    #[serde(rename = "Cs_Hz")]
    pub cs_hz: f64,
    #[serde(rename = "Ci_Hz")]
    pub ci_hz: f64,
    #[serde(rename = "Ccc_Hz")]
    pub ccc_hz: f64,
    /// Accidental rate from delayed-window histograms, when available.
    #[serde(rename = "ACC_Hz", default, skip_serializing_if = "Option::is_none")]
    pub acc_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    pub rows: Vec<PowerPoint>,
    pub coincidence_window_s: f64,
}

impl PowerSeries {
    pub fn new(rows: Vec<PowerPoint>, coincidence_window_s: f64) -> Result<Self> {
        let s = Self {
            rows,
            coincidence_window_s,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coincidence_window_s >= 0.0) || !self.coincidence_window_s.is_finite() {
            return Err(Error::usage("coincidence window must be non-negative"));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !(r.p_mw > 0.0) || !r.p_mw.is_finite() {
                return Err(Error::usage(format!("row {i}: power must be positive")));
            }
            let rates = [r.cs_hz, r.ci_hz, r.ccc_hz, r.acc_hz.unwrap_or(0.0)];
            if rates.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::usage(format!("row {i}: rates must be finite and non-negative")));
            }
        }
        if self.rows.windows(2).any(|w| !(w[1].p_mw > w[0].p_mw)) {
            return Err(Error::usage("powers must be strictly increasing"));
        }
        Ok(())
    }

    pub fn accidentals(&self, i: usize) -> f64 {
        let r = &self.rows[i];
        r.acc_hz.unwrap_or(r.cs_hz * r.ci_hz * self.coincidence_window_s)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Variance proportional to the rate (counting statistics).
    #[default]
    Poisson,
    Uniform,
    /// Variance proportional to the squared rate (constant relative error).
    Relative,
}

impl Weighting {
    fn weight(self, rate: f64) -> f64 {
        match self {
            Weighting::Uniform => 1.0,
            Weighting::Poisson if rate > 0.0 => 1.0 / rate,
            Weighting::Relative if rate > 0.0 => 1.0 / (rate * rate),
            _ => 1.0,
        }
    }
}

/// Parameter order in [`BrightnessFit::covariance`].
pub const PARAMETER_NAMES: [&str; 6] = [
    "gamma_eff_Hz_mW2",
    "eta_s",
    "eta_i",
    "beta_s_Hz_mW",
    "beta_i_Hz_mW",
    "dark_Hz",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrightnessFit {
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
    /// Covariance of (γ, η_s, η_i, β_s, β_i, DC), scaled by the reduced χ².
    pub covariance: [[f64; 6]; 6],
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub condition_number: f64,
    pub points_used: usize,
    pub weighting: Weighting,
    pub warnings: Vec<String>,
}

impl BrightnessFit {
    pub fn std_error(&self, k: usize) -> f64 {
        self.covariance[k][k].max(0.0).sqrt()
    }

    pub fn values(&self) -> [f64; 6] {
        [
            self.gamma_eff,
            self.eta_s,
            self.eta_i,
            self.beta_s,
            self.beta_i,
            self.dark,
        ]
    }
}

/// Linear coefficients (a_s, a_i, c, β_s, β_i, DC) with their covariance.
struct LinearFit {
    x: [f64; 6],
    cov: Matrix6<f64>,
    residual_norm: f64,
    reduced_chi2: f64,
    condition: f64,
}

fn linear_fit(data: &PowerSeries, weighting: Weighting, use_row: &[bool]) -> Result<LinearFit> {
    let rows: Vec<usize> = (0..data.len()).filter(|&i| use_row[i]).collect();
    if rows.len() < MIN_FIT_POINTS {
        return Err(Error::usage(format!(
            "brightness fit needs at least {MIN_FIT_POINTS} power points, got {}",
            rows.len()
        )));
    }
    let m = 3 * rows.len();
    let mut j = DMatrix::<f64>::zeros(m, 6);
    let mut y = DVector::<f64>::zeros(m);
    let mut w = DVector::<f64>::zeros(m);
    for (k, &i) in rows.iter().enumerate() {
        let r = &data.rows[i];
        let (p, p2) = (r.p_mw, r.p_mw * r.p_mw);
        let base = 3 * k;
        j[(base, 0)] = p2;
        j[(base, 3)] = p;
        j[(base, 5)] = 1.0;
        y[base] = r.cs_hz;
        w[base] = weighting.weight(r.cs_hz);

        j[(base + 1, 1)] = p2;
        j[(base + 1, 4)] = p;
        j[(base + 1, 5)] = 1.0;
        y[base + 1] = r.ci_hz;
        w[base + 1] = weighting.weight(r.ci_hz);

        j[(base + 2, 2)] = p2;
        y[base + 2] = r.ccc_hz - data.accidentals(i);
        w[base + 2] = weighting.weight(r.ccc_hz);
    }

    // whiten, then scale columns to unit norm so the condition number is meaningful
    let sw = w.map(f64::sqrt);
    let mut a = j.clone();
    for r in 0..m {
        for c in 0..6 {
            a[(r, c)] *= sw[r];
        }
    }
    let b = y.component_mul(&sw);
    let scale: Vec<f64> = (0..6).map(|c| a.column(c).norm()).collect();
    if scale.contains(&0.0) {
        return Err(Error::Fit {
            message: "a model column vanishes; parameters are not identifiable".into(),
            condition: f64::INFINITY,
        });
    }
    for (c, s) in scale.iter().enumerate() {
        a.column_mut(c).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Fit {
            message: "normal equations are singular or ill-conditioned".into(),
            condition,
        });
    }
    let z = svd.solve(&b, 0.0).map_err(|e| Error::Fit {
        message: e.to_string(),
        condition,
    })?;
    let residual = &a * &z - &b;
    let chi2 = residual.norm_squared();
    let dof = m - 6;
    let reduced_chi2 = if dof > 0 { chi2 / dof as f64 } else { 0.0 };

    // (AᵀA)⁻¹ = V Σ⁻² Vᵀ in scaled coordinates
    let v_t = svd.v_t.as_ref().expect("requested V");
    let mut cov_z = Matrix6::<f64>::zeros();
    for r in 0..6 {
        for c in 0..6 {
            let mut s = 0.0;
            for k in 0..6 {
                s += v_t[(k, r)] * v_t[(k, c)] / svd.singular_values[k].powi(2);
            }
            cov_z[(r, c)] = s;
        }
    }
    let mut x = [0.0; 6];
    let mut cov = Matrix6::<f64>::zeros();
    for r in 0..6 {
        x[r] = z[r] / scale[r];
        for c in 0..6 {
            cov[(r, c)] = reduced_chi2 * cov_z[(r, c)] / (scale[r] * scale[c]);
        }
    }
    Ok(LinearFit {
        x,
        cov,
        residual_norm: chi2.sqrt(),
        reduced_chi2,
        condition,
    })
}

fn physical(lin: &LinearFit, points_used: usize, weighting: Weighting) -> Result<BrightnessFit> {
    let [a_s, a_i, c, beta_s, beta_i, dark] = lin.x;
    for (name, v) in [
        ("signal quadratic", a_s),
        ("idler quadratic", a_i),
        ("coincidence quadratic", c),
    ] {
        if !(v > 0.0) {
            return Err(Error::Fit {
                message: format!("{name} coefficient is not positive ({v:e})"),
                condition: lin.condition,
            });
        }
    }
    let gamma = a_s * a_i / c;
    let eta_s = c / a_i;
    let eta_i = c / a_s;

    let mut g = SMatrix::<f64, 6, 6>::identity();
    g[(0, 0)] = a_i / c;
    g[(0, 1)] = a_s / c;
    g[(0, 2)] = -a_s * a_i / (c * c);
    g[(1, 0)] = 0.0;
    g[(1, 1)] = -c / (a_i * a_i);
    g[(1, 2)] = 1.0 / a_i;
    g[(2, 0)] = -c / (a_s * a_s);
    g[(2, 1)] = 0.0;
    g[(2, 2)] = 1.0 / a_s;
    let cov = g * lin.cov * g.transpose();

    let mut warnings = Vec::new();
    for (name, eta) in [("eta_s", eta_s), ("eta_i", eta_i)] {
        if eta > 1.0 {
            warnings.push(format!("{name} = {eta:.4} exceeds 1"));
        }
    }
    let mut covariance = [[0.0; 6]; 6];
    for (r, row) in covariance.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = cov[(r, c)];
        }
    }
    Ok(BrightnessFit {
        gamma_eff: gamma,
        eta_s,
        eta_i,
        beta_s,
        beta_i,
        dark,
        covariance,
        residual_norm: lin.residual_norm,
        reduced_chi2: lin.reduced_chi2,
        condition_number: lin.condition,
        points_used,
        weighting,
        warnings,
    })
}

pub fn fit_brightness(data: &PowerSeries, weighting: Weighting) -> Result<BrightnessFit> {
    fit_brightness_masked(data, weighting, &vec![true; data.len()])
}

/// Fit restricted to rows with `use_row[i]` set.
pub fn fit_brightness_masked(data: &PowerSeries, weighting: Weighting, use_row: &[bool]) -> Result<BrightnessFit> {
    data.validate()?;
    if use_row.len() != data.len() {
        return Err(Error::usage("row mask length differs from the data"));
    }
    let lin = linear_fit(data, weighting, use_row)?;
    physical(&lin, use_row.iter().filter(|u| **u).count(), weighting)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarPoint {
    #[serde(rename = "P_mW")]
    pub p_mw: f64,
    /// +∞ when the accidental rate is zero.
    #[serde(serialize_with = "crate::io::serialize_f64_inf")]
    pub car: f64,
    #[serde(rename = "ACC_Hz")]
    pub acc_hz: f64,
    /// Coincidences fall more than 3σ below the quadratic fit.
    pub tpa_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarCurve {
    pub points: Vec<CarPoint>,
    /// Lowest flagged power, if any point was flagged.
    #[serde(rename = "knee_mW")]
    pub knee_mw: Option<f64>,
    /// Fit over the unflagged points.
    pub fit: Option<BrightnessFit>,
}

pub fn car(ccc_hz: f64, acc_hz: f64) -> f64 {
    if acc_hz == 0.0 {
        f64::INFINITY
    } else {
        (ccc_hz - acc_hz) / acc_hz
    }
}

/// CAR per point plus iterative 3σ flagging of coincidence points that fall
/// below the quadratic model (the worst offender is removed and the model
/// refitted until no point exceeds the threshold).
pub fn car_curve(data: &PowerSeries, weighting: Weighting) -> Result<CarCurve> {
    data.validate()?;
    let n = data.len();
    let mut keep = vec![true; n];
    let mut fit = None;
    loop {
        if keep.iter().filter(|k| **k).count() < MIN_FIT_POINTS {
            break;
        }
        let lin = match linear_fit(data, weighting, &keep) {
            Ok(l) => l,
            Err(_) => break,
        };
        let c = lin.x[2];
        let scale_floor = 1e-9 * data.rows.iter().map(|r| r.ccc_hz).fold(0.0, f64::max);
        let mut worst: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| keep[i]) {
            let r = &data.rows[i];
            let obs = r.ccc_hz - data.accidentals(i);
            let model = c * r.p_mw * r.p_mw;
            let sigma = (lin.reduced_chi2 / weighting.weight(r.ccc_hz)).sqrt().max(scale_floor);
            let z = (obs - model) / sigma;
            if z < -KNEE_SIGMA && worst.is_none_or(|(_, wz)| z < wz) {
                worst = Some((i, z));
            }
        }
        match worst {
            Some((i, _)) => keep[i] = false,
            None => {
                fit = physical(&lin, keep.iter().filter(|k| **k).count(), weighting).ok();
                break;
            }
        }
    }
    let points: Vec<CarPoint> = (0..n)
        .map(|i| {
            let acc = data.accidentals(i);
            CarPoint {
                p_mw: data.rows[i].p_mw,
                car: car(data.rows[i].ccc_hz, acc),
                acc_hz: acc,
                tpa_flag: !keep[i],
            }
        })
        .collect();
    let knee_mw = points.iter().find(|p| p.tpa_flag).map(|p| p.p_mw);
    Ok(CarCurve { points, knee_mw, fit })
}
