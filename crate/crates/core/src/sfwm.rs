//! Joint spectral amplitude of SFWM pairs, Schmidt purity and brightness ratios.
//!
//! The JSA is
//!
//! ```text
//! A(ωs, ωi) = FE(ωs)·FE(ωi)·∫ α(ω)·α(ωs+ωi−ω)·FE(ω)·FE(ωs+ωi−ω) dω
//! ```
//!
//! with `FE` the primary-ring enhancement `E_ins1` and `α` the pump amplitude.
//! The pump integral depends on ωs+ωi only, so it is tabulated once as a
//! trapezoid autoconvolution of `α·FE` on a uniform pump frequency grid and
//! cubic-interpolated to every (ωs, ωi) pair.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::molecule::{Molecule, MoleculeParams};
use crate::spectral::{angular_frequency, wavelength_of, width_pm_to_angular, ComplexSpectrum, WavelengthGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Gaussian,
    Sech,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpPulse {
    pub center_nm: f64,
    /// Intensity FWHM of the spectrum.
    pub fwhm_pm: f64,
    pub shape: PulseShape,
    #[serde(rename = "rep_rate_Hz")]
    pub rep_rate_hz: f64,
}

impl Default for PumpPulse {
    fn default() -> Self {
        Self {
            center_nm: 1550.0,
            fwhm_pm: 340.0,
            shape: PulseShape::Gaussian,
            rep_rate_hz: 51e6,
        }
    }
}

impl PumpPulse {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_nm > 0.0) {
            return Err(Error::domain(format!(
                "pump centre must be positive, got {}",
                self.center_nm
            )));
        }
        if !(self.fwhm_pm > 0.0) || !self.fwhm_pm.is_finite() {
            return Err(Error::domain(format!(
                "pump FWHM must be positive, got {}",
                self.fwhm_pm
            )));
        }
        if !(self.rep_rate_hz > 0.0) {
            return Err(Error::domain("repetition rate must be positive"));
        }
        Ok(())
    }

    pub fn with_fwhm(&self, fwhm_pm: f64) -> Self {
        Self { fwhm_pm, ..*self }
    }

    /// Intensity FWHM in rad/ps.
    pub fn fwhm_angular(&self) -> f64 {
        width_pm_to_angular(self.fwhm_pm, self.center_nm)
    }

    /// Unnormalised real amplitude at angular detuning `d` (rad/ps); 1 at the centre.
    pub fn amplitude(&self, d: f64) -> f64 {
        let w = self.fwhm_angular();
        match self.shape {
            PulseShape::Gaussian => (-2.0 * std::f64::consts::LN_2 * (d / w).powi(2)).exp(),
            PulseShape::Sech => {
                let tau = w / (2.0 * std::f64::consts::SQRT_2.acosh());
                1.0 / (d / tau).cosh()
            }
        }
    }
}

/// Flat-phase pump amplitude sampled on `grid`, unit L2 norm.
pub fn pump_envelope(pulse: &PumpPulse, grid: &WavelengthGrid) -> Result<ComplexSpectrum> {
    pulse.validate()?;
    if grid.span() < 4.0 * pulse.fwhm_pm * 1e-3 {
        return Err(Error::usage(format!(
            "pump grid spans {} nm, needs at least 4 × FWHM = {} nm",
            grid.span(),
            4.0 * pulse.fwhm_pm * 1e-3
        )));
    }
    let w0 = angular_frequency(pulse.center_nm);
    let raw: Vec<f64> = grid
        .iter()
        .map(|l| pulse.amplitude(angular_frequency(l) - w0))
        .collect();
    let norm = raw.iter().map(|a| a * a).sum::<f64>().sqrt();
    ComplexSpectrum::new(*grid, raw.iter().map(|a| Complex64::new(a / norm, 0.0)).collect())
}

/// Sampling of the JSA and of the pump integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JsaSettings {
    /// Points per axis of the signal and idler grids.
    pub points: usize,
    /// Width of each axis in units of the estimated signal linewidth.
    pub span_linewidths: f64,
    /// Points of the pump frequency grid used for the pump integral.
    pub pump_points: usize,
    /// Width of the pump frequency grid in units of the pulse FWHM.
    pub pump_span_fwhm: f64,
}

impl Default for JsaSettings {
    fn default() -> Self {
        Self {
            points: 128,
            span_linewidths: 12.0,
            pump_points: 513,
            pump_span_fwhm: 8.0,
        }
    }
}

impl JsaSettings {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 || self.pump_points < 3 {
            return Err(Error::usage("JSA needs at least 2 points per axis and 3 pump points"));
        }
        if !(self.span_linewidths > 0.0) || !(self.pump_span_fwhm > 0.0) {
            return Err(Error::usage("JSA spans must be positive"));
        }
        Ok(())
    }
}

/// Signal and idler grids around adjacent primary resonances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JsaGrids {
    pub signal: WavelengthGrid,
    pub idler: WavelengthGrid,
}

/// Places the signal grid on the primary resonance one order above the pump
/// (shorter wavelength) and centres the idler grid on its energy-conserving
/// partner. Both grids cover the same angular span. Grids depend only on the
/// primary ring, so devices differing only in the auxiliary couplings share them.
pub fn jsa_grids(p: &MoleculeParams, pulse: &PumpPulse, settings: &JsaSettings) -> Result<JsaGrids> {
    p.validate()?;
    pulse.validate()?;
    settings.validate()?;
    let m = p.primary_order_near(pulse.center_nm)?;
    let ls = p.primary_resonance_nm(m + 1);
    let width = settings.span_linewidths * p.primary_linewidth_nm(ls)?;
    let wi = 2.0 * angular_frequency(pulse.center_nm) - angular_frequency(ls);
    if !(wi > 0.0) {
        return Err(Error::usage("no energy-conserving idler for this pump"));
    }
    let li = wavelength_of(wi);
    let width_i = width * (li / ls).powi(2);
    Ok(JsaGrids {
        signal: WavelengthGrid::centered(ls, width, settings.points)?,
        idler: WavelengthGrid::centered(li, width_i, settings.points)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectrum {
    pub signal_grid: WavelengthGrid,
    pub idler_grid: WavelengthGrid,
    /// Rows follow the signal grid, columns the idler grid.
    pub amplitude: DMatrix<Complex64>,
    /// Frobenius norm before normalisation.
    pub raw_strength: f64,
    pub normalized: bool,
    /// Pump the spectrum was built with, if any.
    pub pump: Option<PumpPulse>,
}

impl JointSpectrum {
    /// Wraps a matrix and normalises it to unit Frobenius norm.
    pub fn from_amplitude(
        signal_grid: WavelengthGrid,
        idler_grid: WavelengthGrid,
        amplitude: DMatrix<Complex64>,
    ) -> Result<Self> {
        if amplitude.nrows() != signal_grid.len() || amplitude.ncols() != idler_grid.len() {
            return Err(Error::usage(format!(
                "amplitude is {}×{}, grids are {}×{}",
                amplitude.nrows(),
                amplitude.ncols(),
                signal_grid.len(),
                idler_grid.len()
            )));
        }
        check_finite(&amplitude)?;
        let raw_strength = amplitude.norm();
        if raw_strength == 0.0 {
            return Err(Error::Data("joint spectrum is identically zero".into()));
        }
        Ok(Self {
            signal_grid,
            idler_grid,
            amplitude: amplitude / Complex64::from(raw_strength),
            raw_strength,
            normalized: true,
            pump: None,
        })
    }

    pub fn intensity(&self) -> DMatrix<f64> {
        self.amplitude.map(|a| a.norm_sqr())
    }

    pub fn abs_amplitude(&self) -> DMatrix<f64> {
        self.amplitude.map(|a| a.norm())
    }
}

fn check_finite(a: &DMatrix<Complex64>) -> Result<()> {
    if a.iter().any(|z| !z.is_finite()) {
        return Err(Error::Data("non-finite entry in joint spectrum".into()));
    }
    Ok(())
}

/// Pump integral tabulated on Ω_m = 2ω_0 + m·h.
struct PumpFunction {
    omega0: f64,
    h: f64,
    values: Vec<Complex64>,
}

impl PumpFunction {
    fn new(mol: &Molecule, pulse: &PumpPulse, settings: &JsaSettings) -> Result<Self> {
        let n = settings.pump_points;
        let wp = angular_frequency(pulse.center_nm);
        let span = settings.pump_span_fwhm * pulse.fwhm_angular();
        let h = span / (n - 1) as f64;
        let start = wp - span / 2.0;
        let alpha: Vec<f64> = (0..n).map(|j| pulse.amplitude(start + j as f64 * h - wp)).collect();
        let alpha_norm = (h * alpha.iter().map(|a| a * a).sum::<f64>()).sqrt();
        let g = (0..n)
            .map(|j| {
                let w = start + j as f64 * h;
                Ok(mol.enhancement(wavelength_of(w))? * (alpha[j] / alpha_norm))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut values = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
        for (m, out) in values.iter_mut().enumerate() {
            let a = m.saturating_sub(n - 1);
            let b = m.min(n - 1);
            if a == b {
                continue;
            }
            let mut sum = Complex64::new(0.0, 0.0);
            for k in a..=b {
                sum += g[k] * g[m - k];
            }
            sum -= 0.5 * (g[a] * g[m - a] + g[b] * g[m - b]);
            *out = sum * h;
        }
        Ok(Self {
            omega0: 2.0 * start,
            h,
            values,
        })
    }

    /// Catmull-Rom interpolation; zero outside the tabulated lattice.
    fn at(&self, omega_sum: f64) -> Complex64 {
        let x = (omega_sum - self.omega0) / self.h;
        let last = (self.values.len() - 1) as f64;
        if !(0.0..=last).contains(&x) {
            return Complex64::new(0.0, 0.0);
        }
        let i = (x.floor() as isize).min(self.values.len() as isize - 2);
        let t = x - i as f64;
        let v = |k: isize| {
            if k < 0 || k as usize >= self.values.len() {
                Complex64::new(0.0, 0.0)
            } else {
                self.values[k as usize]
            }
        };
        let (p0, p1, p2, p3) = (v(i - 1), v(i), v(i + 1), v(i + 2));
        let t2 = t * t;
        let t3 = t2 * t;
        0.5 * (2.0 * p1
            + (p2 - p0) * t
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
            + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3)
    }
}

/// Checks that signal and idler grid centres conserve energy with the pump centre.
pub fn check_energy_alignment(
    pulse: &PumpPulse,
    signal_grid: &WavelengthGrid,
    idler_grid: &WavelengthGrid,
) -> Result<()> {
    let mismatch = angular_frequency(signal_grid.center()) + angular_frequency(idler_grid.center())
        - 2.0 * angular_frequency(pulse.center_nm);
    let tol = signal_grid.angular_step().max(idler_grid.angular_step());
    if mismatch.abs() > tol {
        return Err(Error::usage(format!(
            "signal ({} nm) and idler ({} nm) grid centres miss energy conservation with the {} nm pump by {:.3e} rad/ps (tolerance {:.3e})",
            signal_grid.center(),
            idler_grid.center(),
            pulse.center_nm,
            mismatch,
            tol
        )));
    }
    Ok(())
}

pub fn build_jsa(
    p: &MoleculeParams,
    pulse: &PumpPulse,
    signal_grid: &WavelengthGrid,
    idler_grid: &WavelengthGrid,
    settings: &JsaSettings,
) -> Result<JointSpectrum> {
    pulse.validate()?;
    settings.validate()?;
    check_energy_alignment(pulse, signal_grid, idler_grid)?;
    let mol = Molecule::new(p)?;
    let pf = PumpFunction::new(&mol, pulse, settings)?;

    let ws: Vec<f64> = signal_grid.iter().map(angular_frequency).collect();
    let wi: Vec<f64> = idler_grid.iter().map(angular_frequency).collect();
    let fs = signal_grid
        .iter()
        .map(|l| mol.enhancement(l))
        .collect::<Result<Vec<_>>>()?;
    let fi = idler_grid
        .iter()
        .map(|l| mol.enhancement(l))
        .collect::<Result<Vec<_>>>()?;
    let a = DMatrix::from_fn(ws.len(), wi.len(), |r, c| fs[r] * fi[c] * pf.at(ws[r] + wi[c]));
    let mut j = JointSpectrum::from_amplitude(*signal_grid, *idler_grid, a)?;
    j.pump = Some(*pulse);
    Ok(j)
}

/// Builds the JSA on the default grids of [`jsa_grids`].
pub fn build_default_jsa(p: &MoleculeParams, pulse: &PumpPulse, settings: &JsaSettings) -> Result<JointSpectrum> {
    let g = jsa_grids(p, pulse, settings)?;
    build_jsa(p, pulse, &g.signal, &g.idler, settings)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchmidtResult {
    pub schmidt_probs: Vec<f64>,
    pub purity: f64,
    pub schmidt_number: f64,
}

impl SchmidtResult {
    fn from_singular_values(mut s: Vec<f64>) -> Result<Self> {
        let total: f64 = s.iter().map(|x| x * x).sum();
        if !(total > 0.0) {
            return Err(Error::Data("matrix has no weight".into()));
        }
        s.sort_by(|a, b| b.total_cmp(a));
        let probs: Vec<f64> = s.iter().map(|x| x * x / total).collect();
        let purity: f64 = probs.iter().map(|p| p * p).sum();
        Ok(Self {
            schmidt_probs: probs,
            purity,
            schmidt_number: 1.0 / purity,
        })
    }
}

pub fn schmidt_decompose(a: &DMatrix<Complex64>) -> Result<SchmidtResult> {
    check_finite(a)?;
    let svd = a.clone().svd(false, false);
    SchmidtResult::from_singular_values(svd.singular_values.iter().copied().collect())
}

pub fn schmidt_decompose_real(a: &DMatrix<f64>) -> Result<SchmidtResult> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("non-finite entry in matrix".into()));
    }
    let svd = a.clone().svd(false, false);
    SchmidtResult::from_singular_values(svd.singular_values.iter().copied().collect())
}

pub fn schmidt_purity(j: &JointSpectrum) -> Result<SchmidtResult> {
    schmidt_decompose(&j.amplitude)
}

/// Purity from the trace identity P = ‖A†A‖²_F / ‖A‖⁴_F, without an SVD.
pub fn purity_trace(a: &DMatrix<Complex64>) -> Result<f64> {
    check_finite(a)?;
    let n2 = a.norm_squared();
    if !(n2 > 0.0) {
        return Err(Error::Data("matrix has no weight".into()));
    }
    let gram = a.adjoint() * a;
    Ok(gram.norm_squared() / (n2 * n2))
}

/// |P(JSA) − P(|JSA|)|.
pub fn jsi_purity_gap(j: &JointSpectrum) -> Result<f64> {
    let full = schmidt_purity(j)?.purity;
    let modulus = schmidt_decompose_real(&j.abs_amplitude())?.purity;
    Ok((full - modulus).abs())
}

/// Pair-rate ratio raw_strength(J)² / raw_strength(J_ref)².
pub fn relative_brightness(j: &JointSpectrum, reference: &JointSpectrum) -> Result<f64> {
    if j.signal_grid != reference.signal_grid || j.idler_grid != reference.idler_grid {
        return Err(Error::usage("brightness ratio needs identical signal and idler grids"));
    }
    if j.pump != reference.pump {
        return Err(Error::usage("brightness ratio needs the same pump"));
    }
    Ok((j.raw_strength / reference.raw_strength).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PumpOptimum {
    pub fwhm_pm: f64,
    pub purity: f64,
}

/// Largest pump bandwidth, in signal linewidths, considered by [`maximize_purity_over_pump`].
pub const MAX_PUMP_LINEWIDTHS: f64 = 12.0;

/// Maximises SVD purity over the pump FWHM within [0.25, 12] signal linewidths:
/// coarse logarithmic scan followed by golden-section refinement.
pub fn maximize_purity_over_pump(p: &MoleculeParams, pulse: &PumpPulse, settings: &JsaSettings) -> Result<PumpOptimum> {
    let grids = jsa_grids(p, pulse, settings)?;
    let lw_pm = p.primary_linewidth_nm(grids.signal.center())? * 1e3;
    let (lo, hi) = (0.25 * lw_pm, MAX_PUMP_LINEWIDTHS * lw_pm);
    let eval = |fwhm: f64| -> Result<f64> {
        let j = build_jsa(p, &pulse.with_fwhm(fwhm), &grids.signal, &grids.idler, settings)?;
        Ok(schmidt_purity(&j)?.purity)
    };

    let n = 12;
    let xs: Vec<f64> = (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect();
    let ys = xs.iter().map(|&x| eval(x)).collect::<Result<Vec<_>>>()?;
    let best = (0..n).max_by(|&a, &b| ys[a].total_cmp(&ys[b])).unwrap_or(0);
    let (mut a, mut b) = (xs[best.saturating_sub(1)], xs[(best + 1).min(n - 1)]);
    let mut result = PumpOptimum {
        fwhm_pm: xs[best],
        purity: ys[best],
    };

    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    for _ in 0..12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d)?;
        }
    }
    for (x, y) in [(c, fc), (d, fd)] {
        if y > result.purity {
            result = PumpOptimum { fwhm_pm: x, purity: y };
        }
    }
    Ok(result)
}
