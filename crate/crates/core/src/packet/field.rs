//! Off-grid evaluation of `phi(p, t)` and derived guidance quantities.

use std::cell::RefCell;

use num_complex::Complex64;

use super::SpectralState;
use crate::geometry::Vec2;
use crate::spectral::{EigenBasis, GridSpec};
use crate::MASS;

/// Polar decomposition of `phi` at one point and time.
#[derive(Clone, Copy, Debug)]
pub struct FieldSample {
    pub phi: Complex64,
    pub grad_phi: [Complex64; 2],
    /// `R = |phi|`.
    pub amplitude: f64,
    /// `S = arg phi`.
    pub phase: f64,
    /// `Im(grad phi / phi) / m`.
    pub velocity: Vec2,
    /// `-(1/2m) lap R / R`; `None` where `R < node_epsilon`.
    pub quantum_potential: Option<f64>,
    /// `R < node_epsilon`: velocity is returned but unreliable.
    pub near_node: bool,
}

const PHASE_CACHE: usize = 8;

/// Interpolates each retained mode and its gradient bicubically from the grid
/// and sums them with the exactly evolved coefficients.
pub struct FieldEvaluator {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
    energies: Vec<f64>,
    t_ref: f64,
    /// Node-major: for padded node `(i, j)`, `[psi; dpsi/dx; dpsi/dy]` over modes.
    table: Vec<f64>,
    stride_x: usize,
    node_epsilon: f64,
    scratch: RefCell<Scratch>,
}

#[derive(Default)]
struct Scratch {
    acc: Vec<f64>,
    phases: Vec<(f64, Vec<Complex64>)>,
    next_slot: usize,
}

impl FieldEvaluator {
    /// Keeps modes whose `|c_n|^2` exceeds `drop_below` (0 keeps every nonzero).
    pub fn new(state: &SpectralState, basis: &EigenBasis, drop_below: f64) -> Self {
        let grid = basis.grid.clone();
        let keep: Vec<usize> = (0..state.coeffs.len())
            .filter(|&k| state.coeffs[k].norm_sqr() > drop_below && state.coeffs[k].norm_sqr() > 0.0)
            .collect();
        let m = keep.len();
        let (nx, ny) = (grid.nx as i64, grid.ny as i64);
        let stride_x = (nx + 2) as usize;
        let padded = stride_x * (ny + 2) as usize;

        // Extended lookup over [-3, nx+2] x [-3, ny+2]; stored nodes are [-1, nx] x [-1, ny].
        let ew = (nx + 6) as usize;
        let eh = (ny + 6) as usize;
        let ext: Vec<Option<(f64, usize)>> = (0..eh)
            .flat_map(|b| (0..ew).map(move |a| (a as i64 - 3, b as i64 - 3)))
            .map(|(i, j)| grid.extended_sign_index(i, j, 2))
            .collect();

        let mut table = vec![0.0; padded * 3 * m];
        let inv = 1.0 / (12.0 * grid.dx);
        let mut vals = vec![0.0; ew * eh];
        for (slot, &k) in keep.iter().enumerate() {
            let mode = basis.mode(k);
            for (v, e) in vals.iter_mut().zip(&ext) {
                *v = e.map_or(0.0, |(s, idx)| s * mode[idx]);
            }
            let at = |i: i64, j: i64| vals[(j + 3) as usize * ew + (i + 3) as usize];
            for j in -1..=ny {
                for i in -1..=nx {
                    let base = ((j + 1) as usize * stride_x + (i + 1) as usize) * 3 * m;
                    table[base + slot] = at(i, j);
                    table[base + m + slot] =
                        (at(i - 2, j) - 8.0 * at(i - 1, j) + 8.0 * at(i + 1, j) - at(i + 2, j)) * inv;
                    table[base + 2 * m + slot] =
                        (at(i, j - 2) - 8.0 * at(i, j - 1) + 8.0 * at(i, j + 1) - at(i, j + 2)) * inv;
                }
            }
        }

        let peak = state
            .evolve(state.t)
            .grid_amplitude(basis)
            .iter()
            .fold(0.0f64, |a, v| a.max(v.norm()));
        Self {
            grid,
            coeffs: keep.iter().map(|&k| state.coeffs[k]).collect(),
            energies: keep.iter().map(|&k| state.energies[k]).collect(),
            t_ref: state.t,
            table,
            stride_x,
            node_epsilon: 1e-6 * peak,
            scratch: RefCell::new(Scratch::default()),
        }
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn node_epsilon(&self) -> f64 {
        self.node_epsilon
    }

    pub fn set_node_epsilon(&mut self, eps: f64) {
        self.node_epsilon = eps;
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn weights_at(&self, t: f64, scratch: &mut Scratch) -> usize {
        if let Some(pos) = scratch.phases.iter().position(|(tt, _)| *tt == t) {
            return pos;
        }
        let dt = t - self.t_ref;
        let w: Vec<Complex64> = self
            .coeffs
            .iter()
            .zip(&self.energies)
            .map(|(c, e)| c * Complex64::from_polar(1.0, -e * dt))
            .collect();
        if scratch.phases.len() < PHASE_CACHE {
            scratch.phases.push((t, w));
            scratch.phases.len() - 1
        } else {
            let slot = scratch.next_slot;
            scratch.phases[slot] = (t, w);
            scratch.next_slot = (slot + 1) % PHASE_CACHE;
            slot
        }
    }

    /// Interpolated `phi` and `grad phi`.
    fn amplitude_and_gradient(&self, p: Vec2, t: f64) -> (Complex64, [Complex64; 2]) {
        let m = self.coeffs.len();
        let h = self.grid.dx;
        let (ix, wx) = catmull_rom(p.x / h, self.grid.nx);
        let (iy, wy) = catmull_rom(p.y / h, self.grid.ny);

        let mut guard = self.scratch.borrow_mut();
        let scratch = &mut *guard;
        scratch.acc.clear();
        scratch.acc.resize(3 * m, 0.0);
        for (b, wyb) in wy.iter().enumerate() {
            let row = (iy + b) * self.stride_x;
            for (a, wxa) in wx.iter().enumerate() {
                let wt = wxa * wyb;
                if wt == 0.0 {
                    continue;
                }
                let base = (row + ix + a) * 3 * m;
                for (acc, v) in scratch.acc.iter_mut().zip(&self.table[base..base + 3 * m]) {
                    *acc += wt * v;
                }
            }
        }
        let slot = self.weights_at(t, scratch);
        let w = &scratch.phases[slot].1;
        let acc = &scratch.acc;
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for k in 0..m {
            let wk = w[k];
            out[0] += wk * acc[k];
            out[1] += wk * acc[m + k];
            out[2] += wk * acc[2 * m + k];
        }
        (out[0], [out[1], out[2]])
    }

    /// Guidance velocity and the near-node flag; the integrator's fast path.
    pub fn velocity(&self, p: Vec2, t: f64) -> (Vec2, bool) {
        let (phi, grad) = self.amplitude_and_gradient(p, t);
        (guidance(phi, grad), phi.norm() < self.node_epsilon)
    }

    pub fn sample(&self, p: Vec2, t: f64) -> FieldSample {
        let (phi, grad) = self.amplitude_and_gradient(p, t);
        let amplitude = phi.norm();
        let near_node = amplitude < self.node_epsilon;
        FieldSample {
            phi,
            grad_phi: grad,
            amplitude,
            phase: phi.arg(),
            velocity: guidance(phi, grad),
            quantum_potential: if near_node { None } else { self.quantum_potential(p, t) },
            near_node,
        }
    }

    /// `R` at stored node `(i, j)` (node indices, `-1..=n`).
    fn node_amplitude(&self, i: i64, j: i64, w: &[Complex64]) -> Option<f64> {
        if i < -1 || j < -1 || i > self.grid.nx as i64 || j > self.grid.ny as i64 {
            return None;
        }
        let m = self.coeffs.len();
        let base = ((j + 1) as usize * self.stride_x + (i + 1) as usize) * 3 * m;
        let mut acc = Complex64::new(0.0, 0.0);
        for (wk, v) in w.iter().zip(&self.table[base..base + m]) {
            acc += wk * v;
        }
        Some(acc.norm())
    }

    /// Bicubic interpolation of nodal `Q` from the fourth-order Laplacian of
    /// `R`; `None` if any node involved is masked or unavailable.
    fn quantum_potential(&self, p: Vec2, t: f64) -> Option<f64> {
        let h = self.grid.dx;
        let (ix, wx) = catmull_rom(p.x / h, self.grid.nx);
        let (iy, wy) = catmull_rom(p.y / h, self.grid.ny);
        // Node index of the first interpolation node.
        let (i0, j0) = (ix as i64 - 1, iy as i64 - 1);
        let w = {
            let mut guard = self.scratch.borrow_mut();
            let slot = self.weights_at(t, &mut guard);
            guard.phases[slot].1.clone()
        };
        let mut r = [[0.0; 8]; 8];
        for (b, row) in r.iter_mut().enumerate() {
            for (a, v) in row.iter_mut().enumerate() {
                let val = self.node_amplitude(i0 - 2 + a as i64, j0 - 2 + b as i64, &w)?;
                *v = val;
            }
        }
        let c = 1.0 / (12.0 * h * h);
        let mut q = 0.0;
        for b in 0..4 {
            for a in 0..4 {
                let (x, y) = (a + 2, b + 2);
                let centre = r[y][x];
                let lap = -60.0 * centre
                    + 16.0 * (r[y][x - 1] + r[y][x + 1] + r[y - 1][x] + r[y + 1][x])
                    - (r[y][x - 2] + r[y][x + 2] + r[y - 2][x] + r[y + 2][x]);
                let used = [centre, r[y][x - 1], r[y][x + 1], r[y - 1][x], r[y + 1][x], r[y][x - 2], r[y][x + 2], r[y - 2][x], r[y + 2][x]];
                if used.iter().any(|&v| v < self.node_epsilon) {
                    return None;
                }
                q += wx[a] * wy[b] * (-lap * c / centre / (2.0 * MASS));
            }
        }
        Some(q)
    }
}

/// `(first padded index, weights)` for the four nodes around coordinate `u`
/// (in grid units). Padded index 0 is node `-1`.
fn catmull_rom(u: f64, n: usize) -> (usize, [f64; 4]) {
    let hi = (n - 2) as f64;
    let u = u.clamp(0.0, (n - 1) as f64);
    let i0 = u.floor().min(hi);
    let s = u - i0;
    let (s2, s3) = (s * s, s * s * s);
    let w = [
        0.5 * (-s + 2.0 * s2 - s3),
        0.5 * (2.0 - 5.0 * s2 + 3.0 * s3),
        0.5 * (s + 4.0 * s2 - 3.0 * s3),
        0.5 * (-s2 + s3),
    ];
    (i0 as usize, w)
}

/// `Im(conj(phi) grad phi) / (|phi|^2 m)`, i.e. `Im(grad phi / phi) / m`.
fn guidance(phi: Complex64, grad: [Complex64; 2]) -> Vec2 {
    let r2 = phi.norm_sqr();
    if r2 == 0.0 {
        return Vec2::zeros();
    }
    Vec2::new((phi.conj() * grad[0]).im, (phi.conj() * grad[1]).im) / (r2 * MASS)
}

impl SpectralState {
    /// `Q` on interior nodes; see [`quantum_potential_from_amplitude`].
    pub fn quantum_potential_grid(&self, basis: &EigenBasis, node_epsilon: f64) -> Vec<f64> {
        let r: Vec<f64> = self.grid_amplitude(basis).iter().map(|v| v.norm()).collect();
        quantum_potential_from_amplitude(&basis.grid, &r, node_epsilon)
    }
}

/// `Q = -(1/2m) lap R / R` on interior nodes with the fourth-order Laplacian;
/// NaN where `R < node_epsilon` at any stencil node.
pub fn quantum_potential_from_amplitude(grid: &GridSpec, r: &[f64], node_epsilon: f64) -> Vec<f64> {
    let c = 1.0 / (12.0 * grid.dx * grid.dx);
    (0..grid.n_interior())
        .map(|k| {
            let (i, j) = grid.interior_node(k);
            let (i, j) = (i as i64, j as i64);
            let at = |a, b| grid.extended_value(r, a, b).abs();
            let mut lap = -60.0 * r[k];
            let mut ok = r[k] >= node_epsilon;
            for (d, wgt) in [(1, 16.0), (2, -1.0)] {
                for v in [at(i - d, j), at(i + d, j), at(i, j - d), at(i, j + d)] {
                    lap += wgt * v;
                    ok &= v >= node_epsilon;
                }
            }
            if ok {
                -lap * c / r[k] / (2.0 * MASS)
            } else {
                f64::NAN
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Billiard, Domain};
    use crate::packet::{coherent_state, project_unchecked, CoherentParams};
    use crate::spectral::GridSpec;
    use crate::spectral::solve_eigen;

    fn single_mode(basis: &EigenBasis, k: usize, c: Complex64) -> SpectralState {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); basis.len()];
        coeffs[k] = c;
        SpectralState { coeffs, energies: basis.energies.clone(), t: 0.0, norm_capture: 1.0 }
    }

    #[test]
    fn reproduces_grid_values_at_nodes() {
        let grid = GridSpec::with_cells(Domain::default().into(), 20);
        let basis = solve_eigen(&grid, 900.0).unwrap();
        let field = coherent_state(&CoherentParams { alpha: 10.0, momentum: [12.0, 4.0], ..Default::default() }, &grid).unwrap();
        let state = project_unchecked(&field, &basis).evolve(0.003);
        let ev = FieldEvaluator::new(&state, &basis, 0.0);
        let on_grid = state.grid_amplitude(&basis);
        for k in (0..grid.n_interior()).step_by(7) {
            let s = ev.sample(grid.interior_point(k), 0.003);
            assert!((s.phi - on_grid[k]).norm() < 1e-10, "{k} {:?} {} {}", grid.interior_node(k), s.phi, on_grid[k]);
            assert_eq!(s.amplitude, s.phi.norm());
        }
    }

    #[test]
    fn velocity_is_the_phase_gradient() {
        let grid = GridSpec::with_cells(Domain::default().into(), 20);
        let basis = solve_eigen(&grid, 900.0).unwrap();
        let field = coherent_state(&CoherentParams { alpha: 10.0, momentum: [12.0, 4.0], ..Default::default() }, &grid).unwrap();
        let ev = FieldEvaluator::new(&project_unchecked(&field, &basis), &basis, 0.0);
        let s = ev.sample(Vec2::new(0.93, 0.41), 0.0);
        assert!(!s.near_node);
        let ratio = [s.grad_phi[0] / s.phi, s.grad_phi[1] / s.phi];
        assert!((s.velocity.x * MASS - ratio[0].im).abs() < 1e-10);
        assert!((s.velocity.y * MASS - ratio[1].im).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_differences_of_the_interpolant_for_smooth_fields() {
        let grid = GridSpec::with_cells(Domain::default().into(), 64);
        let basis = solve_eigen(&grid, 60.0).unwrap();
        let state = single_mode(&basis, 0, Complex64::new(1.0, 0.0));
        let ev = FieldEvaluator::new(&state, &basis, 0.0);
        let p = Vec2::new(0.7, 0.45);
        let s = ev.sample(p, 0.0);
        let d = 1e-5;
        let fx = (ev.sample(p + Vec2::new(d, 0.0), 0.0).phi - ev.sample(p - Vec2::new(d, 0.0), 0.0).phi) / (2.0 * d);
        let fy = (ev.sample(p + Vec2::new(0.0, d), 0.0).phi - ev.sample(p - Vec2::new(0.0, d), 0.0).phi) / (2.0 * d);
        let scale = s.grad_phi[0].norm().max(s.grad_phi[1].norm());
        assert!((fx - s.grad_phi[0]).norm() < 1e-3 * scale, "{fx} vs {}", s.grad_phi[0]);
        assert!((fy - s.grad_phi[1]).norm() < 1e-3 * scale);
    }

    #[test]
    fn eigenmode_has_constant_quantum_potential_minus_energy_terms() {
        // For a real mode, S is constant and lap R / R = -E away from nodes.
        let grid = GridSpec::with_cells(Domain::default().into(), 48);
        let basis = solve_eigen(&grid, 60.0).unwrap();
        let state = single_mode(&basis, 0, Complex64::new(1.0, 0.0));
        let ev = FieldEvaluator::new(&state, &basis, 0.0);
        let s = ev.sample(Vec2::new(0.8, 0.5), 0.0);
        let q = s.quantum_potential.unwrap();
        assert!((q - basis.energies[0] / (2.0 * MASS)).abs() < 1e-6 * basis.energies[0]);
        assert!(s.velocity.norm() < 1e-9);
        let qg = state.quantum_potential_grid(&basis, ev.node_epsilon());
        let k = grid.index_of(38, 24).unwrap();
        assert!((qg[k] - basis.energies[0]).abs() < 0.01 * basis.energies[0]);
    }

    #[test]
    fn gaussian_quantum_potential_matches_the_analytic_value() {
        // Q = (2 alpha / m)(1 - alpha |r - r0|^2) for R = exp(-alpha |r - r0|^2).
        let grid = GridSpec::with_cells(Domain::default().into(), 84);
        let params = CoherentParams::default();
        let r: Vec<f64> = coherent_state(&params, &grid).unwrap().iter().map(|v| v.norm()).collect();
        let q = quantum_potential_from_amplitude(&grid, &r, 1e-12);
        for (i, j) in [(84, 42), (90, 40), (78, 47)] {
            let k = grid.index_of(i, j).unwrap();
            let d2 = (grid.node(i, j) - params.center()).norm_squared();
            let want = 2.0 * params.alpha / MASS * (1.0 - params.alpha * d2);
            assert!((q[k] - want).abs() < 0.02 * 2.0 * params.alpha / MASS, "{} vs {want}", q[k]);
        }
    }

    #[test]
    fn nodal_points_are_flagged() {
        let grid = GridSpec::with_cells(Domain::default().into(), 24);
        let basis = solve_eigen(&grid, 60.0).unwrap();
        let state = single_mode(&basis, 0, Complex64::new(1.0, 0.0));
        let ev = FieldEvaluator::new(&state, &basis, 0.0);
        // The wall is a nodal line.
        let s = ev.sample(Vec2::new(0.5, 0.0), 0.0);
        assert!(s.near_node && s.quantum_potential.is_none());
        assert!(grid.region.contains(Vec2::new(0.5, 0.0)));
    }
}
