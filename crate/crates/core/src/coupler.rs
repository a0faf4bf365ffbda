//! Parametric transfer-matrix model of straight and bent directional couplers.
//!
//! A coupler is a lossless symmetric two-port. The straight section
//! accumulates a coupling phase `C_s(gap, λ)·L_s` and the bent section
//! `f·C_b(gap, λ)·r·θ`; the power cross-coupling is `κ² = sin²(φ)` with
//! `φ` the sum of both. Coupling strengths fall off exponentially with the
//! gap and vary linearly with wavelength. The bent section carries its own
//! decay length and wavelength slope, standing in for the phase mismatch
//! between the inner and outer bent guides; setting them equal to the
//! straight-section values collapses the model to a single coefficient.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fabrication tolerance on the gap used for the sensitivity metric.
pub const GAP_TOLERANCE_NM: f64 = 50.0;
/// Number of gap samples across `gap ± GAP_TOLERANCE_NM`.
pub const GAP_SAMPLES: usize = 11;
/// Telecom C-band limits used for the dispersion metric.
pub const C_BAND_NM: (f64, f64) = (1530.0, 1565.0);
/// Number of wavelength samples across the C-band.
pub const BAND_SAMPLES: usize = 36;
/// Wavelength at which transmittance is quoted.
pub const REFERENCE_WAVELENGTH_NM: f64 = 1550.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingCoefficientModel {
    /// Straight-section coupling per unit length at `g_ref_nm` and `lambda0_nm`.
    #[serde(rename = "C0_rad_um")]
    pub c0_rad_um: f64,
    pub g_ref_nm: f64,
    pub decay_length_nm: f64,
    /// Fractional change of the straight coupling per nm of wavelength.
    pub wavelength_slope_per_nm: f64,
    pub lambda0_nm: f64,
    pub bent_decay_length_nm: f64,
    pub bent_wavelength_slope_per_nm: f64,
}

impl Default for CouplingCoefficientModel {
    /// Calibrated so that a 300 nm gap straight coupler reaches κ² = 0.5 at
    /// L_s = 15 µm and 1550 nm.
    fn default() -> Self {
        Self {
            c0_rad_um: std::f64::consts::PI / 60.0,
            g_ref_nm: 300.0,
            decay_length_nm: 100.0,
            wavelength_slope_per_nm: 0.004,
            lambda0_nm: 1550.0,
            bent_decay_length_nm: 200.0,
            bent_wavelength_slope_per_nm: -0.002,
        }
    }
}

impl CouplingCoefficientModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0_rad_um > 0.0) {
            return Err(Error::domain(format!("C0 must be positive, got {}", self.c0_rad_um)));
        }
        if !(self.decay_length_nm > 0.0) || !(self.bent_decay_length_nm > 0.0) {
            return Err(Error::domain("decay lengths must be positive"));
        }
        if !(self.lambda0_nm > 0.0) || !(self.g_ref_nm > 0.0) {
            return Err(Error::domain("reference gap and wavelength must be positive"));
        }
        if !self.wavelength_slope_per_nm.is_finite() || !self.bent_wavelength_slope_per_nm.is_finite() {
            return Err(Error::domain("wavelength slopes must be finite"));
        }
        Ok(())
    }

    /// Straight-section coupling strength C_s(gap, λ) in rad/µm.
    pub fn straight_coefficient(&self, gap_nm: f64, lambda_nm: f64) -> f64 {
        self.c0_rad_um
            * (-(gap_nm - self.g_ref_nm) / self.decay_length_nm).exp()
            * (1.0 + self.wavelength_slope_per_nm * (lambda_nm - self.lambda0_nm))
    }

    /// Bent-section coupling strength C_b(gap, λ) in rad/µm, before the bent fraction.
    pub fn bent_coefficient(&self, gap_nm: f64, lambda_nm: f64) -> f64 {
        self.c0_rad_um
            * (-(gap_nm - self.g_ref_nm) / self.bent_decay_length_nm).exp()
            * (1.0 + self.bent_wavelength_slope_per_nm * (lambda_nm - self.lambda0_nm))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplerGeometry {
    pub gap_nm: f64,
    #[serde(rename = "L_s_um")]
    pub straight_length_um: f64,
    pub radius_um: f64,
    pub theta_rad: f64,
    pub bent_fraction: f64,
}

impl Default for CouplerGeometry {
    fn default() -> Self {
        Self::straight(300.0, 0.0)
    }
}

impl CouplerGeometry {
    pub fn straight(gap_nm: f64, straight_length_um: f64) -> Self {
        Self {
            gap_nm,
            straight_length_um,
            radius_um: 10.0,
            theta_rad: 0.0,
            bent_fraction: 0.5,
        }
    }

    /// Length of the bent coupled region, L_c = r·θ.
    pub fn bent_length_um(&self) -> f64 {
        self.radius_um * self.theta_rad
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gap_nm > 0.0) {
            return Err(Error::domain(format!("gap must be positive, got {}", self.gap_nm)));
        }
        if !(self.straight_length_um >= 0.0) || !(self.theta_rad >= 0.0) || !(self.radius_um >= 0.0) {
            return Err(Error::domain("coupler lengths, radius and angle must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.bent_fraction) {
            return Err(Error::domain(format!(
                "bent fraction must lie in [0, 1], got {}",
                self.bent_fraction
            )));
        }
        Ok(())
    }

    fn with_gap(&self, gap_nm: f64) -> Self {
        Self { gap_nm, ..*self }
    }
}

/// Fabrication and wavelength sensitivity of one coupler geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplerMetrics {
    pub transmittance: f64,
    pub gap_sensitivity: f64,
    pub dispersion: f64,
}

/// Half-phase φ accumulated through the coupler.
pub fn coupling_phase(g: &CouplerGeometry, m: &CouplingCoefficientModel, lambda_nm: f64) -> f64 {
    m.straight_coefficient(g.gap_nm, lambda_nm) * g.straight_length_um
        + g.bent_fraction * m.bent_coefficient(g.gap_nm, lambda_nm) * g.bent_length_um()
}

/// Power cross-coupling κ² of the coupler.
pub fn coupler_transmittance(g: &CouplerGeometry, m: &CouplingCoefficientModel, lambda_nm: f64) -> f64 {
    coupling_phase(g, m, lambda_nm).sin().powi(2)
}

/// Power self-coupling r² = 1 − κ².
pub fn coupler_self_coupling(g: &CouplerGeometry, m: &CouplingCoefficientModel, lambda_nm: f64) -> f64 {
    coupling_phase(g, m, lambda_nm).cos().powi(2)
}

pub fn coupler_metrics(g: &CouplerGeometry, m: &CouplingCoefficientModel) -> Result<CouplerMetrics> {
    g.validate()?;
    m.validate()?;
    if g.gap_nm <= GAP_TOLERANCE_NM {
        return Err(Error::domain(format!(
            "gap {} nm leaves no room for the ±{GAP_TOLERANCE_NM} nm tolerance scan",
            g.gap_nm
        )));
    }
    let nominal = coupler_transmittance(g, m, REFERENCE_WAVELENGTH_NM);

    let gap_step = 2.0 * GAP_TOLERANCE_NM / (GAP_SAMPLES - 1) as f64;
    let gap_sensitivity = (0..GAP_SAMPLES)
        .map(|i| g.gap_nm - GAP_TOLERANCE_NM + i as f64 * gap_step)
        .map(|gap| (coupler_transmittance(&g.with_gap(gap), m, REFERENCE_WAVELENGTH_NM) - nominal).abs())
        .fold(0.0, f64::max);

    let (lo, hi) = C_BAND_NM;
    let band_step = (hi - lo) / (BAND_SAMPLES - 1) as f64;
    let dispersion = (0..BAND_SAMPLES)
        .map(|i| lo + i as f64 * band_step)
        .map(|lambda| (coupler_transmittance(g, m, lambda) - nominal).abs())
        .fold(0.0, f64::max);

    Ok(CouplerMetrics {
        transmittance: nominal,
        gap_sensitivity,
        dispersion,
    })
}

/// One straight line piece of an iso-transmittance contour, in (L_s µm, θ rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourSegment {
    pub from: (f64, f64),
    pub to: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contour {
    pub level: f64,
    pub segments: Vec<ContourSegment>,
}

/// Most gap-tolerant geometry found on one iso-transmittance contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TolerantPoint {
    pub target: f64,
    #[serde(rename = "L_s_um")]
    pub straight_length_um: f64,
    pub theta_rad: f64,
    pub metrics: CouplerMetrics,
}

/// Metrics over a (L_s, θ) grid; rows follow `straight_lengths_um`, columns `thetas_rad`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignSpace {
    pub template: CouplerGeometry,
    pub straight_lengths_um: Vec<f64>,
    pub thetas_rad: Vec<f64>,
    pub cells: Vec<CouplerMetrics>,
    pub contours: Vec<Contour>,
    pub tolerant: Vec<TolerantPoint>,
}

impl DesignSpace {
    pub fn get(&self, row: usize, col: usize) -> &CouplerMetrics {
        &self.cells[row * self.thetas_rad.len() + col]
    }

    pub fn tolerant_point(&self, target: f64) -> Option<&TolerantPoint> {
        self.tolerant.iter().find(|p| (p.target - target).abs() < 1e-9)
    }
}

/// Contour levels 0.05, 0.10, …, 0.95.
pub fn transmittance_levels() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

fn check_axis(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::usage(format!("{name} range is empty")));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::usage(format!("{name} range must be strictly increasing")));
    }
    Ok(())
}

/// Evaluates `coupler_metrics` over every (L_s, θ) pair, extracts the
/// iso-transmittance contours and the most gap-tolerant point on each.
pub fn design_space_scan(
    straight_lengths_um: &[f64],
    thetas_rad: &[f64],
    template: &CouplerGeometry,
    model: &CouplingCoefficientModel,
) -> Result<DesignSpace> {
    check_axis("L_s", straight_lengths_um)?;
    check_axis("theta", thetas_rad)?;
    template.validate()?;
    model.validate()?;

    let ncol = thetas_rad.len();
    let cells = (0..straight_lengths_um.len() * ncol)
        .into_par_iter()
        .map(|idx| {
            let g = CouplerGeometry {
                straight_length_um: straight_lengths_um[idx / ncol],
                theta_rad: thetas_rad[idx % ncol],
                ..*template
            };
            coupler_metrics(&g, model)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut space = DesignSpace {
        template: *template,
        straight_lengths_um: straight_lengths_um.to_vec(),
        thetas_rad: thetas_rad.to_vec(),
        cells,
        contours: Vec::new(),
        tolerant: Vec::new(),
    };
    for level in transmittance_levels() {
        let segments = marching_squares(&space, level);
        if let Some(p) = most_tolerant_on_level(&space, model, level)? {
            space.tolerant.push(p);
        }
        space.contours.push(Contour { level, segments });
    }
    Ok(space)
}

/// Points where the transmittance crosses `level` along grid edges.
fn edge_crossings(space: &DesignSpace, level: f64) -> Vec<(f64, f64)> {
    let (ls, th) = (&space.straight_lengths_um, &space.thetas_rad);
    let t = |r: usize, c: usize| space.get(r, c).transmittance;
    let mut out = Vec::new();
    let interp = |a: f64, b: f64, ta: f64, tb: f64| a + (level - ta) / (tb - ta) * (b - a);
    for r in 0..ls.len() {
        for c in 0..th.len() {
            let here = t(r, c);
            if here == level {
                out.push((ls[r], th[c]));
                continue;
            }
            if c + 1 < th.len() {
                let right = t(r, c + 1);
                if (here - level) * (right - level) < 0.0 {
                    out.push((ls[r], interp(th[c], th[c + 1], here, right)));
                }
            }
            if r + 1 < ls.len() {
                let down = t(r + 1, c);
                if (here - level) * (down - level) < 0.0 {
                    out.push((interp(ls[r], ls[r + 1], here, down), th[c]));
                }
            }
        }
    }
    out
}

fn most_tolerant_on_level(
    space: &DesignSpace,
    model: &CouplingCoefficientModel,
    level: f64,
) -> Result<Option<TolerantPoint>> {
    let mut best: Option<TolerantPoint> = None;
    for (l_s, theta) in edge_crossings(space, level) {
        let g = CouplerGeometry {
            straight_length_um: l_s,
            theta_rad: theta,
            ..space.template
        };
        let metrics = coupler_metrics(&g, model)?;
        let better = match &best {
            None => true,
            Some(b) => metrics.gap_sensitivity < b.metrics.gap_sensitivity,
        };
        if better {
            best = Some(TolerantPoint {
                target: level,
                straight_length_um: l_s,
                theta_rad: theta,
                metrics,
            });
        }
    }
    Ok(best)
}

fn marching_squares(space: &DesignSpace, level: f64) -> Vec<ContourSegment> {
    let (ls, th) = (&space.straight_lengths_um, &space.thetas_rad);
    let mut segments = Vec::new();
    if ls.len() < 2 || th.len() < 2 {
        return segments;
    }
    let t = |r: usize, c: usize| space.get(r, c).transmittance;
    for r in 0..ls.len() - 1 {
        for c in 0..th.len() - 1 {
            // corners counter-clockwise: (r,c) (r,c+1) (r+1,c+1) (r+1,c)
            let corners = [
                (ls[r], th[c], t(r, c)),
                (ls[r], th[c + 1], t(r, c + 1)),
                (ls[r + 1], th[c + 1], t(r + 1, c + 1)),
                (ls[r + 1], th[c], t(r + 1, c)),
            ];
            let mut pts = Vec::with_capacity(4);
            for e in 0..4 {
                let (x0, y0, v0) = corners[e];
                let (x1, y1, v1) = corners[(e + 1) % 4];
                if (v0 < level) != (v1 < level) {
                    let s = (level - v0) / (v1 - v0);
                    pts.push((x0 + s * (x1 - x0), y0 + s * (y1 - y0)));
                }
            }
            match pts.len() {
                2 => segments.push(ContourSegment {
                    from: pts[0],
                    to: pts[1],
                }),
                4 => {
                    // saddle: resolve with the cell-centre average
                    let centre = corners.iter().map(|c| c.2).sum::<f64>() / 4.0;
                    let (a, b) = if (centre < level) == (corners[0].2 < level) {
                        ((0, 3), (1, 2))
                    } else {
                        ((0, 1), (2, 3))
                    };
                    segments.push(ContourSegment {
                        from: pts[a.0],
                        to: pts[a.1],
                    });
                    segments.push(ContourSegment {
                        from: pts[b.0],
                        to: pts[b.1],
                    });
                }
                _ => {}
            }
        }
    }
    segments
}
