//! Shared optical types: wavelength grids, the waveguide dispersion/loss
//! model and complex spectra.
//!
//! Units: wavelengths in nm, lengths in µm, propagation constants in rad/nm,
//! angular frequencies in rad/ps. All field quantities are amplitudes; a
//! power is the squared modulus of a field.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in nm/ps.
pub const SPEED_OF_LIGHT_NM_PER_PS: f64 = 299_792.458;

/// Angular frequency (rad/ps) of a vacuum wavelength in nm.
pub fn angular_frequency(lambda_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT_NM_PER_PS / lambda_nm
}

/// Vacuum wavelength (nm) of an angular frequency in rad/ps.
pub fn wavelength_of(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT_NM_PER_PS / omega
}

/// Converts a spectral width in pm at `lambda_nm` to an angular-frequency width (rad/ps).
pub fn width_pm_to_angular(width_pm: f64, lambda_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT_NM_PER_PS * (width_pm * 1e-3) / (lambda_nm * lambda_nm)
}

/// Uniformly sampled wavelength axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    start_nm: f64,
    stop_nm: f64,
    points: usize,
}

impl WavelengthGrid {
    pub fn new(start_nm: f64, stop_nm: f64, points: usize) -> Result<Self> {
        if !(start_nm.is_finite() && stop_nm.is_finite()) || start_nm <= 0.0 {
            return Err(Error::domain(format!(
                "grid bounds must be finite and positive, got [{start_nm}, {stop_nm}]"
            )));
        }
        if start_nm >= stop_nm {
            return Err(Error::domain(format!(
                "grid start {start_nm} nm must be below stop {stop_nm} nm"
            )));
        }
        if points < 2 {
            return Err(Error::domain(format!("grid needs at least 2 points, got {points}")));
        }
        Ok(Self {
            start_nm,
            stop_nm,
            points,
        })
    }

    /// Grid of `points` samples spanning `span_nm` symmetrically about `center_nm`.
    pub fn centered(center_nm: f64, span_nm: f64, points: usize) -> Result<Self> {
        Self::new(center_nm - 0.5 * span_nm, center_nm + 0.5 * span_nm, points)
    }

    pub fn start(&self) -> f64 {
        self.start_nm
    }

    pub fn stop(&self) -> f64 {
        self.stop_nm
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.stop_nm - self.start_nm) / (self.points - 1) as f64
    }

    pub fn span(&self) -> f64 {
        self.stop_nm - self.start_nm
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start_nm + self.stop_nm)
    }

    /// Wavelength of sample `i`; the last sample is exactly `stop`.
    pub fn wavelength(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.stop_nm
        } else {
            self.start_nm + i as f64 * self.step()
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.points).map(move |i| self.wavelength(i))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }

    /// Angular-frequency step (rad/ps) at the grid centre.
    pub fn angular_step(&self) -> f64 {
        let c = self.center();
        2.0 * PI * SPEED_OF_LIGHT_NM_PER_PS * self.step() / (c * c)
    }
}

/// Strip-waveguide model with first-order (group-index) dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveguideModel {
    pub n_eff0: f64,
    pub n_g: f64,
    #[serde(rename = "alpha_dB_cm")]
    pub alpha_db_cm: f64,
    #[serde(rename = "lambda0_nm")]
    pub lambda0_nm: f64,
}

impl Default for WaveguideModel {
    /// 500 × 220 nm silicon strip guide at 3 dB/cm.
    fn default() -> Self {
        Self {
            n_eff0: 2.4,
            n_g: 4.2,
            alpha_db_cm: 3.0,
            lambda0_nm: 1550.0,
        }
    }
}

impl WaveguideModel {
    pub fn new(n_eff0: f64, n_g: f64, alpha_db_cm: f64, lambda0_nm: f64) -> Result<Self> {
        let w = Self {
            n_eff0,
            n_g,
            alpha_db_cm,
            lambda0_nm,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_eff0 > 1.0) || !self.n_eff0.is_finite() {
            return Err(Error::domain(format!("n_eff0 must exceed 1, got {}", self.n_eff0)));
        }
        if !(self.n_g >= self.n_eff0) || !self.n_g.is_finite() {
            return Err(Error::domain(format!(
                "group index {} must be >= n_eff0 {}",
                self.n_g, self.n_eff0
            )));
        }
        if !(self.alpha_db_cm >= 0.0) || !self.alpha_db_cm.is_finite() {
            return Err(Error::domain(format!(
                "propagation loss must be >= 0 dB/cm, got {}",
                self.alpha_db_cm
            )));
        }
        if !(self.lambda0_nm > 0.0) || !self.lambda0_nm.is_finite() {
            return Err(Error::domain(format!(
                "reference wavelength must be positive, got {}",
                self.lambda0_nm
            )));
        }
        Ok(())
    }

    /// n_eff(λ) = n_eff0 − (λ − λ0)(n_g − n_eff0)/λ0.
    pub fn effective_index(&self, lambda_nm: f64) -> f64 {
        self.n_eff0 - (lambda_nm - self.lambda0_nm) * (self.n_g - self.n_eff0) / self.lambda0_nm
    }

    /// Propagation constant k = 2π n_eff(λ)/λ in rad/nm.
    pub fn propagation_constant(&self, lambda_nm: f64) -> Result<f64> {
        if !(lambda_nm > 0.0) || !lambda_nm.is_finite() {
            return Err(Error::domain(format!("wavelength must be positive, got {lambda_nm}")));
        }
        Ok(self.propagation_constant_unchecked(lambda_nm))
    }

    #[inline]
    pub(crate) fn propagation_constant_unchecked(&self, lambda_nm: f64) -> f64 {
        2.0 * PI * self.effective_index(lambda_nm) / lambda_nm
    }

    /// Field transmission 10^(−α·L/20) over `length_um`.
    pub fn loss_transmission(&self, length_um: f64) -> Result<f64> {
        if !(length_um >= 0.0) || !length_um.is_finite() {
            return Err(Error::domain(format!("length must be >= 0, got {length_um} um")));
        }
        let length_cm = length_um * 1e-4;
        Ok(10f64.powf(-self.alpha_db_cm * length_cm / 20.0))
    }
}

/// Complex field amplitude sampled on a wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    grid: WavelengthGrid,
    values: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(grid: WavelengthGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::usage(format!(
                "spectrum has {} values for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// |E|² per sample.
    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }
}

/// Real-valued spectrum (typically a power transmission).
#[derive(Debug, Clone, PartialEq)]
pub struct RealSpectrum {
    grid: WavelengthGrid,
    values: Vec<f64>,
}

impl RealSpectrum {
    pub fn new(grid: WavelengthGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::usage(format!(
                "spectrum has {} values for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
