//! Primary ring + auxiliary ring + AMZI transfer-matrix model.
//!
//! The bus couples to the primary ring (κ1), the primary ring couples to the
//! auxiliary ring (κ2) and the auxiliary ring contains an asymmetric
//! Mach-Zehnder whose drop port acts as a wavelength-selective loss channel.
//! Junctions are point-like and lossless; propagation loss is lumped into the
//! field factors `r_1L`, `r_2L` and `r_mziL`. Every field is normalised to an
//! input field of one.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ComplexSpectrum, RealSpectrum, WaveguideModel, WavelengthGrid};

/// Smallest resonance denominator magnitude accepted by the field solver.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoleculeParams {
    #[serde(rename = "L1_um")]
    pub l1_um: f64,
    #[serde(rename = "L2_um")]
    pub l2_um: f64,
    #[serde(rename = "dL_AMZI_um")]
    pub dl_amzi_um: f64,
    pub kappa1_sq: f64,
    pub kappa2_sq: f64,
    pub kappa_mzi_sq: f64,
    pub waveguide: WaveguideModel,
}

impl Default for MoleculeParams {
    fn default() -> Self {
        Self::designed()
    }
}

impl MoleculeParams {
    /// Longitudinal order of the default primary ring at its reference wavelength.
    pub const DESIGN_ORDER: u32 = 1238;

    /// High-purity design: pump family resonant at 1550 nm, auxiliary ring and
    /// AMZI at half the primary length, κ1² = 0.23 and 3 dB/cm loss.
    pub fn designed() -> Self {
        let waveguide = WaveguideModel::default();
        let l1_um = Self::DESIGN_ORDER as f64 * waveguide.lambda0_nm / waveguide.n_eff0 * 1e-3;
        Self {
            l1_um,
            l2_um: l1_um / 2.0,
            dl_amzi_um: l1_um / 2.0,
            kappa1_sq: 0.23,
            kappa2_sq: 0.1665,
            kappa_mzi_sq: 0.1665,
            waveguide,
        }
    }

    /// The same primary ring with the auxiliary ring decoupled.
    pub fn single_ring() -> Self {
        Self {
            kappa2_sq: 0.0,
            kappa_mzi_sq: 0.0,
            ..Self::designed()
        }
    }

    pub fn with_couplings(&self, kappa2_sq: f64, kappa_mzi_sq: f64) -> Self {
        Self {
            kappa2_sq,
            kappa_mzi_sq,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.waveguide.validate()?;
        for (name, v) in [
            ("kappa1_sq", self.kappa1_sq),
            ("kappa2_sq", self.kappa2_sq),
            ("kappa_mzi_sq", self.kappa_mzi_sq),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        for (name, v) in [
            ("L1_um", self.l1_um),
            ("L2_um", self.l2_um),
            ("dL_AMZI_um", self.dl_amzi_um),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Field factor for one pass around the primary ring.
    pub fn r_1l(&self) -> Result<f64> {
        self.waveguide.loss_transmission(self.l1_um)
    }

    pub fn r_2l(&self) -> Result<f64> {
        self.waveguide.loss_transmission(self.l2_um)
    }

    pub fn r_mzil(&self) -> Result<f64> {
        self.waveguide.loss_transmission(self.dl_amzi_um)
    }

    /// Wavelength of primary-ring order `m` (k·L1 = 2πm under the linear dispersion model).
    pub fn primary_resonance_nm(&self, order: u32) -> f64 {
        let w = &self.waveguide;
        let l1 = self.l1_um * 1e3;
        w.n_g * l1 / (order as f64 + (w.n_g - w.n_eff0) * l1 / w.lambda0_nm)
    }

    /// Primary-ring order whose resonance lies closest to `lambda_nm`.
    pub fn primary_order_near(&self, lambda_nm: f64) -> Result<u32> {
        let k = self.waveguide.propagation_constant(lambda_nm)?;
        let m = (k * self.l1_um * 1e3 / (2.0 * std::f64::consts::PI)).round();
        if !(m >= 1.0) {
            return Err(Error::domain(format!("no primary resonance near {lambda_nm} nm")));
        }
        Ok(m as u32)
    }

    pub fn fsr_nm(&self, lambda_nm: f64) -> f64 {
        lambda_nm * lambda_nm / (self.waveguide.n_g * self.l1_um * 1e3)
    }

    /// FWHM (nm) of a bare primary-ring resonance at `lambda_nm`, ignoring the auxiliary ring.
    pub fn primary_linewidth_nm(&self, lambda_nm: f64) -> Result<f64> {
        let r1a = (1.0 - self.kappa1_sq).sqrt() * self.r_1l()?;
        Ok(lambda_nm * lambda_nm * (1.0 - r1a)
            / (std::f64::consts::PI * self.waveguide.n_g * self.l1_um * 1e3 * r1a.sqrt()))
    }
}

/// Field solution normalised to E_in = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub e_out: ComplexSpectrum,
    pub e_ins1: ComplexSpectrum,
    pub e_ins2: ComplexSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fields {
    pub e_out: Complex64,
    pub e_ins1: Complex64,
    pub e_ins2: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceInfo {
    pub center_nm: f64,
    pub fwhm_pm: f64,
    #[serde(rename = "extinction_dB")]
    pub extinction_db: f64,
}

/// Parameters with the square roots and loss factors precomputed.
#[derive(Debug, Clone, Copy)]
pub struct Molecule {
    params: MoleculeParams,
    k1: f64,
    r1: f64,
    k2: f64,
    r2: f64,
    kz: f64,
    rz: f64,
    r1l: f64,
    r2l: f64,
    rzl: f64,
    l1_nm: f64,
    l2_nm: f64,
    dl_nm: f64,
}

impl Molecule {
    pub fn new(params: &MoleculeParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params: *params,
            k1: params.kappa1_sq.sqrt(),
            r1: (1.0 - params.kappa1_sq).sqrt(),
            k2: params.kappa2_sq.sqrt(),
            r2: (1.0 - params.kappa2_sq).sqrt(),
            kz: params.kappa_mzi_sq.sqrt(),
            rz: (1.0 - params.kappa_mzi_sq).sqrt(),
            r1l: params.r_1l()?,
            r2l: params.r_2l()?,
            rzl: params.r_mzil()?,
            l1_nm: params.l1_um * 1e3,
            l2_nm: params.l2_um * 1e3,
            dl_nm: params.dl_amzi_um * 1e3,
        })
    }

    pub fn params(&self) -> &MoleculeParams {
        &self.params
    }

    /// Complex round-trip transmission T_Ring2 of the auxiliary ring at propagation constant `k` (rad/nm).
    pub fn aux_round_trip(&self, k: f64) -> Complex64 {
        let amzi = self.rz * self.rz - self.kz * self.kz * self.rzl * Complex64::cis(k * self.dl_nm);
        amzi * self.r2l * Complex64::cis(k * self.l2_nm)
    }

    pub fn fields_at(&self, lambda_nm: f64) -> Result<Fields> {
        let k = self.params.waveguide.propagation_constant(lambda_nm)?;
        let (k1, r1, k2, r2, r1l) = (self.k1, self.r1, self.k2, self.r2, self.r1l);
        let e1 = Complex64::cis(k * self.l1_nm);
        let eh = Complex64::cis(k * self.l1_nm / 2.0);
        let t = self.aux_round_trip(k);

        let d = 1.0 - r1 * r2 * r1l * e1;
        let den2 = d * (1.0 - r2 * t) + k2 * k2 * r1l * r1 * e1 * t;
        let magnitude = if k2 == 0.0 { d.norm() } else { d.norm().min(den2.norm()) };
        if magnitude < SINGULAR_TOLERANCE {
            return Err(Error::Singular {
                wavelength_nm: lambda_nm,
                magnitude,
            });
        }
        // with κ2 = 0 the auxiliary ring is detached and E_ins2 vanishes identically
        let e_ins2 = if k2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            -k1 * k2 * r1l * eh / den2
        };
        let e_ins1 = (I * k2 * r1 * eh * t * e_ins2 + I * k1) / d;
        let e_out = I * k1 * r2 * r1l * e1 * e_ins1 - k1 * k2 * eh * t * e_ins2 + r1;
        Ok(Fields { e_out, e_ins1, e_ins2 })
    }

    /// Primary-ring field enhancement E_ins1 at `lambda_nm`.
    pub fn enhancement(&self, lambda_nm: f64) -> Result<Complex64> {
        Ok(self.fields_at(lambda_nm)?.e_ins1)
    }
}

pub fn aux_round_trip(p: &MoleculeParams, k: f64) -> Result<Complex64> {
    Ok(Molecule::new(p)?.aux_round_trip(k))
}

pub fn solve_fields(p: &MoleculeParams, grid: &WavelengthGrid) -> Result<FieldSolution> {
    let m = Molecule::new(p)?;
    let n = grid.len();
    let (mut out, mut ins1, mut ins2) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for lambda in grid.iter() {
        let f = m.fields_at(lambda)?;
        out.push(f.e_out);
        ins1.push(f.e_ins1);
        ins2.push(f.e_ins2);
    }
    Ok(FieldSolution {
        e_out: ComplexSpectrum::new(*grid, out)?,
        e_ins1: ComplexSpectrum::new(*grid, ins1)?,
        e_ins2: ComplexSpectrum::new(*grid, ins2)?,
    })
}

/// |E_out|² over the grid.
pub fn transmission_spectrum(p: &MoleculeParams, grid: &WavelengthGrid) -> Result<RealSpectrum> {
    let m = Molecule::new(p)?;
    let values = grid
        .iter()
        .map(|l| m.fields_at(l).map(|f| f.e_out.norm_sqr()))
        .collect::<Result<Vec<_>>>()?;
    RealSpectrum::new(*grid, values)
}

/// Dips shallower than this (in transmission units) are ignored.
pub const MIN_DIP_DEPTH: f64 = 1e-3;

/// Locates transmission dips and their half-depth widths.
///
/// Each local minimum is bounded by the nearest maxima on either side; the
/// lower of the two is the baseline, and the width is taken between the
/// linearly interpolated crossings of the half-depth level.
pub fn find_resonances(spectrum: &RealSpectrum) -> Vec<ResonanceInfo> {
    let v = spectrum.values();
    let grid = spectrum.grid();
    let n = v.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let mut i = 1;
    while i + 1 < n {
        if !(v[i] < v[i - 1] && v[i] <= v[i + 1]) {
            i += 1;
            continue;
        }
        // extend across a flat bottom
        let mut j = i;
        while j + 1 < n && v[j + 1] == v[i] {
            j += 1;
        }
        if j + 1 >= n {
            break;
        }
        let mut left = i;
        while left > 0 && v[left - 1] >= v[left] {
            left -= 1;
        }
        let mut right = j;
        while right + 1 < n && v[right + 1] >= v[right] {
            right += 1;
        }
        let bottom = v[i];
        let baseline = v[left].min(v[right]);
        if baseline - bottom >= MIN_DIP_DEPTH {
            let half = 0.5 * (baseline + bottom);
            let x = |k: usize| grid.wavelength(k);
            let mut a = i;
            while a > left && v[a] < half {
                a -= 1;
            }
            let lo = if v[a] >= half && a < i {
                x(a) + (half - v[a]) / (v[a + 1] - v[a]) * (x(a + 1) - x(a))
            } else {
                x(a)
            };
            let mut b = j;
            while b < right && v[b] < half {
                b += 1;
            }
            let hi = if v[b] >= half && b > j {
                x(b - 1) + (half - v[b - 1]) / (v[b] - v[b - 1]) * (x(b) - x(b - 1))
            } else {
                x(b)
            };
            let center = if i == j {
                let (y0, y1, y2) = (v[i - 1], v[i], v[i + 1]);
                let curv = y0 - 2.0 * y1 + y2;
                let shift = if curv > 0.0 { 0.5 * (y0 - y2) / curv } else { 0.0 };
                x(i) + shift * grid.step()
            } else {
                0.5 * (x(i) + x(j))
            };
            let fwhm_pm = (hi - lo) * 1e3;
            if fwhm_pm > 0.0 {
                out.push(ResonanceInfo {
                    center_nm: center,
                    fwhm_pm,
                    extinction_db: 10.0 * (baseline / bottom.max(f64::MIN_POSITIVE)).log10(),
                });
            }
        }
        i = j + 1;
    }
    out
}

/// Probability that a generated photon leaves through the bus rather than
/// being lost in the primary ring: κ1²/(κ1² + A) with A = 1 − r_1L².
pub fn escape_efficiency(p: &MoleculeParams) -> Result<f64> {
    p.validate()?;
    if p.kappa1_sq == 0.0 {
        return Err(Error::domain(
            "escape efficiency undefined for an uncoupled ring (kappa1_sq = 0)",
        ));
    }
    let a = 1.0 - p.r_1l()?.powi(2);
    Ok(p.kappa1_sq / (p.kappa1_sq + a))
}

/// Locates the dip closest to `lambda_nm` on a local scan of `half_window_nm` either side.
pub fn resonance_near(p: &MoleculeParams, lambda_nm: f64, half_window_nm: f64, points: usize) -> Result<ResonanceInfo> {
    let grid = WavelengthGrid::centered(lambda_nm, 2.0 * half_window_nm, points)?;
    let spectrum = transmission_spectrum(p, &grid)?;
    find_resonances(&spectrum)
        .into_iter()
        .min_by(|a, b| {
            (a.center_nm - lambda_nm)
                .abs()
                .total_cmp(&(b.center_nm - lambda_nm).abs())
        })
        .ok_or_else(|| Error::NotFound(format!("no resonance within {half_window_nm} nm of {lambda_nm} nm")))
}
