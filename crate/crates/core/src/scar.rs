//! Scar functions by dynamical averaging: the window
//! `exp(-(E_n - E_c)^2 / (2 dE^2))` applied to the packet's coefficients is
//! the spectral form of averaging `exp(i E_c t) phi(t)` over a time window of
//! length `~ 2 pi / dE`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::{dist_to_segment, Vec2};
use crate::packet::SpectralState;
use crate::spectral::{EigenBasis, GridSpec};
use crate::{Error, Result};

/// Recurrence period of the diagonal orbit at the default packet energy.
pub const DEFAULT_PERIOD: f64 = 0.0466;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScarSpec {
    pub center_energy: f64,
    /// Window width `dE`.
    pub delta_e: f64,
}

impl Default for ScarSpec {
    fn default() -> Self {
        Self::from_window(2304.0, 2.0, DEFAULT_PERIOD)
    }
}

impl ScarSpec {
    /// Averaging over `n_periods` periods: `dE = 2 pi / (n_periods T)`.
    pub fn from_window(center_energy: f64, n_periods: f64, period: f64) -> Self {
        Self { center_energy, delta_e: std::f64::consts::TAU / (n_periods * period) }
    }

    /// Same centre with the averaging time doubled, which selects the second
    /// recurrence.
    pub fn second_recurrence(&self) -> Self {
        Self { center_energy: self.center_energy, delta_e: 0.5 * self.delta_e }
    }

    pub fn weight(&self, e: f64) -> f64 {
        (-(e - self.center_energy).powi(2) / (2.0 * self.delta_e * self.delta_e)).exp()
    }
}

#[derive(Clone, Debug)]
pub struct ScarFunction {
    pub spec: ScarSpec,
    /// Filtered coefficients, unit norm.
    pub coeffs: Vec<Complex64>,
    /// `|psi_scar|^2` on the interior unknowns.
    pub intensity: Vec<f64>,
}

impl ScarFunction {
    pub fn overlap(&self, other: &ScarFunction) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm()
    }

    pub fn grid_norm(&self, grid: &GridSpec) -> f64 {
        self.intensity.iter().sum::<f64>() * grid.cell_area()
    }
}

pub fn build_scar(state0: &SpectralState, basis: &EigenBasis, spec: ScarSpec) -> Result<ScarFunction> {
    if !(spec.delta_e > 0.0) {
        return Err(Error::invalid(format!("window width must be positive, got {}", spec.delta_e)));
    }
    let mut coeffs: Vec<Complex64> =
        state0.coeffs.iter().zip(&state0.energies).map(|(c, &e)| c * spec.weight(e)).collect();
    if coeffs.iter().all(|d| d.norm() < 1e-12) {
        return Err(Error::EmptyWindow);
    }
    let norm = coeffs.iter().map(|d| d.norm_sqr()).sum::<f64>().sqrt();
    for d in &mut coeffs {
        *d /= norm;
    }
    let filtered = SpectralState { coeffs, energies: state0.energies.clone(), t: 0.0, norm_capture: 1.0 };
    let intensity = filtered.density_snapshot(basis);
    Ok(ScarFunction { spec, coeffs: filtered.coeffs, intensity })
}

/// Mean intensity within `half_width` of the polyline over the mean outside.
pub fn tube_localization(grid: &GridSpec, intensity: &[f64], polyline: &[Vec2], half_width: f64) -> Result<f64> {
    if !(half_width > 0.0) {
        return Err(Error::invalid(format!("tube half-width must be positive, got {half_width}")));
    }
    if polyline.is_empty() {
        return Err(Error::invalid("empty polyline"));
    }
    let dist = |p: Vec2| {
        if polyline.len() == 1 {
            return (p - polyline[0]).norm();
        }
        polyline.windows(2).map(|s| dist_to_segment(p, s[0], s[1])).fold(f64::INFINITY, f64::min)
    };
    let (mut p_in, mut n_in, mut p_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (k, &v) in intensity.iter().enumerate() {
        if dist(grid.interior_point(k)) <= half_width {
            p_in += v;
            n_in += 1;
        } else {
            p_out += v;
            n_out += 1;
        }
    }
    if n_out == 0 {
        return Err(Error::TubeCoversDomain);
    }
    if n_in == 0 {
        return Err(Error::invalid("tube contains no grid nodes"));
    }
    let mean_out = p_out / n_out as f64;
    if mean_out == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((p_in / n_in as f64) / mean_out)
}
