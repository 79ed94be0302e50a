//! Initial coherent state, its spectral representation and exact evolution.

mod field;
mod gridfile;

pub use field::{quantum_potential_from_amplitude, FieldEvaluator, FieldSample};
pub use gridfile::{read_grid_file, write_grid_csv, write_grid_file, GridFile};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::{Billiard, Vec2};
use crate::spectral::{EigenBasis, GridSpec, Laplacian};
use crate::{Error, Result, MASS};

/// Default fraction of the packet norm the eigenbasis must hold.
pub const DEFAULT_CAPTURE_THRESHOLD: f64 = 0.999;

/// Gaussian coherent state `exp(-alpha |r - r0|^2 + i P0 . r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherentParams {
    pub alpha: f64,
    pub center: [f64; 2],
    pub momentum: [f64; 2],
}

impl Default for CoherentParams {
    fn default() -> Self {
        let s5 = 5f64.sqrt();
        Self { alpha: 30.68, center: [1.0, 0.5], momentum: [96.0 / s5, -48.0 / s5] }
    }
}

impl CoherentParams {
    pub fn center(&self) -> Vec2 {
        Vec2::new(self.center[0], self.center[1])
    }

    pub fn momentum(&self) -> Vec2 {
        Vec2::new(self.momentum[0], self.momentum[1])
    }

    /// `|P0|^2`, the energy of the central classical orbit.
    pub fn central_energy(&self) -> f64 {
        self.momentum().norm_squared() / (2.0 * MASS)
    }

    /// `<H>` of the untruncated Gaussian: `(|P0|^2 + 2 alpha) / 2m`.
    pub fn mean_energy(&self) -> f64 {
        (self.momentum().norm_squared() + 2.0 * self.alpha) / (2.0 * MASS)
    }

    /// Classical speed `|P0| / m`.
    pub fn speed(&self) -> f64 {
        self.momentum().norm() / MASS
    }

    pub fn validate(&self, region: &impl Billiard) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !region.is_interior(self.center()) {
            return Err(Error::OutsideDomain { x: self.center[0], y: self.center[1] });
        }
        Ok(())
    }
}

/// Samples the coherent state on the interior unknowns and renormalizes it to
/// unit grid norm.
pub fn coherent_state(params: &CoherentParams, grid: &GridSpec) -> Result<Vec<Complex64>> {
    params.validate(&grid.region)?;
    let (c, p) = (params.center(), params.momentum());
    let mut field: Vec<Complex64> = grid
        .interior_points()
        .map(|r| {
            let d2 = (r - c).norm_squared();
            Complex64::from_polar((-params.alpha * d2).exp(), p.dot(&r))
        })
        .collect();
    let norm = grid_norm(grid, &field).sqrt();
    for v in &mut field {
        *v /= norm;
    }
    Ok(field)
}

pub fn grid_norm(grid: &GridSpec, field: &[Complex64]) -> f64 {
    field.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_area()
}

/// Quadrature moments of a grid field.
#[derive(Clone, Copy, Debug)]
pub struct PacketMoments {
    pub norm: f64,
    pub position: Vec2,
    pub momentum: Vec2,
    /// `<H>` with the discrete operator.
    pub energy: f64,
}

pub fn moments(grid: &GridSpec, field: &[Complex64]) -> PacketMoments {
    let da = grid.cell_area();
    let norm = grid_norm(grid, field);
    let mut pos = Vec2::zeros();
    for (k, v) in field.iter().enumerate() {
        pos += grid.interior_point(k) * v.norm_sqr();
    }
    pos *= da / norm;

    let re: Vec<f64> = field.iter().map(|v| v.re).collect();
    let im: Vec<f64> = field.iter().map(|v| v.im).collect();
    let (gxr, gyr) = fd_gradient(grid, &re);
    let (gxi, gyi) = fd_gradient(grid, &im);
    // <p> = sum conj(phi) (-i grad phi) = sum (re grad im - im grad re)
    let mut mom = Vec2::zeros();
    for k in 0..field.len() {
        mom.x += re[k] * gxi[k] - im[k] * gxr[k];
        mom.y += re[k] * gyi[k] - im[k] * gyr[k];
    }
    mom *= da / norm;

    let op = Laplacian::new(grid);
    let kinetic = (op.quadratic_form(&re) + op.quadratic_form(&im)) * da / norm;
    PacketMoments { norm, position: pos, momentum: mom, energy: kinetic / (2.0 * MASS) }
}

/// Fourth-order central differences on interior nodes under the Dirichlet
/// extension of the field.
pub(crate) fn fd_gradient(grid: &GridSpec, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n_interior();
    let inv = 1.0 / (12.0 * grid.dx);
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    for k in 0..n {
        let (i, j) = grid.interior_node(k);
        let (i, j) = (i as i64, j as i64);
        let v = |a, b| grid.extended_value(f, a, b);
        gx[k] = (v(i - 2, j) - 8.0 * v(i - 1, j) + 8.0 * v(i + 1, j) - v(i + 2, j)) * inv;
        gy[k] = (v(i, j - 2) - 8.0 * v(i, j - 1) + 8.0 * v(i, j + 1) - v(i, j + 2)) * inv;
    }
    (gx, gy)
}

/// Packet in the eigenbasis: `phi(t) = sum c_n(t) psi_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralState {
    pub coeffs: Vec<Complex64>,
    /// Aligned with `coeffs`; copied from the basis so the state stands alone.
    pub energies: Vec<f64>,
    pub t: f64,
    /// `sum |c_n|^2` at projection time.
    pub norm_capture: f64,
}

impl SpectralState {
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Exact evolution to absolute time `t`: phases only.
    pub fn evolve(&self, t: f64) -> SpectralState {
        let dt = t - self.t;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&self.energies)
            .map(|(c, e)| c * Complex64::from_polar(1.0, -e * dt))
            .collect();
        SpectralState { coeffs, energies: self.energies.clone(), t, norm_capture: self.norm_capture }
    }

    /// `phi` on the basis grid's interior unknowns.
    pub fn grid_amplitude(&self, basis: &EigenBasis) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); basis.grid.n_interior()];
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(basis.mode(k)) {
                *o += c * m;
            }
        }
        out
    }

    /// `|phi|^2` on the interior unknowns.
    pub fn density_snapshot(&self, basis: &EigenBasis) -> Vec<f64> {
        self.grid_amplitude(basis).iter().map(|v| v.norm_sqr()).collect()
    }
}

/// `c_n = sum psi_n phi dx^2`, with no capture check.
pub fn project_unchecked(field: &[Complex64], basis: &EigenBasis) -> SpectralState {
    let da = basis.grid.cell_area();
    let coeffs: Vec<Complex64> = (0..basis.len())
        .map(|k| {
            let m = basis.mode(k);
            let mut acc = Complex64::new(0.0, 0.0);
            for (f, v) in field.iter().zip(m) {
                acc += f * v;
            }
            acc * da
        })
        .collect();
    let capture = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / grid_norm(&basis.grid, field).max(f64::MIN_POSITIVE);
    SpectralState { coeffs, energies: basis.energies.clone(), t: 0.0, norm_capture: capture }
}

/// Projects a unit-norm grid field; fails if the captured norm is too small.
pub fn project(field: &[Complex64], basis: &EigenBasis, threshold: f64) -> Result<SpectralState> {
    if field.len() != basis.grid.n_interior() {
        return Err(Error::invalid("field and basis live on different grids"));
    }
    let state = project_unchecked(field, basis);
    if !(state.norm_capture >= threshold) {
        return Err(Error::LowCapture { capture: state.norm_capture, threshold });
    }
    Ok(state)
}
