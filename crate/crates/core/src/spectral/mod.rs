//! Dirichlet eigenpairs of `-lap` on a grid over a billiard region.

mod chfsi;
mod grid;
mod io;
mod operator;

pub use chfsi::SolverOptions;
pub use grid::{build_grid, build_grid_with_budget, weyl_count, GridMeta, GridSpec, DEFAULT_MEMORY_BUDGET_MB};
pub use io::{load_basis, save_basis, BASIS_FORMAT_VERSION};
pub use operator::{count_below, Laplacian};

use crate::geometry::Billiard;
use crate::{Error, Result};

/// Eigenpairs with `E_n <= cutoff`, ascending.
///
/// Modes are sampled on the grid's interior unknowns and normalized under the
/// grid quadrature, `sum |psi|^2 dx^2 = 1`.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    pub grid: GridSpec,
    pub cutoff: f64,
    pub energies: Vec<f64>,
    /// Mode-major: mode `k` occupies `modes[k * n .. (k + 1) * n]`.
    modes: Vec<f64>,
}

impl EigenBasis {
    pub(crate) fn from_parts(grid: GridSpec, cutoff: f64, energies: Vec<f64>, modes: Vec<f64>) -> Self {
        debug_assert_eq!(modes.len(), energies.len() * grid.n_interior());
        Self { grid, cutoff, energies, modes }
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn mode(&self, k: usize) -> &[f64] {
        let n = self.grid.n_interior();
        &self.modes[k * n..(k + 1) * n]
    }

    pub(crate) fn raw_modes(&self) -> &[f64] {
        &self.modes
    }

    /// Grid inner product `sum a b dx^2`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * self.grid.cell_area()
    }
}

/// Solves for every eigenpair with `E <= e_max` using default options.
pub fn solve_eigen(grid: &GridSpec, e_max: f64) -> Result<EigenBasis> {
    solve_eigen_with(grid, e_max, &SolverOptions::default())
}

pub fn solve_eigen_with(grid: &GridSpec, e_max: f64, opts: &SolverOptions) -> Result<EigenBasis> {
    if !(e_max > 0.0) {
        return Err(Error::invalid(format!("E_max must be positive, got {e_max}")));
    }
    let op = Laplacian::new(grid);
    let wanted = count_at(&op, e_max)?;
    let pairs = chfsi::lowest_eigenpairs(&op, wanted, e_max, opts)?;
    log::debug!("{wanted} eigenpairs below {e_max} after {} filter sweeps", pairs.iterations);
    let found = pairs.values.iter().filter(|&&e| e <= e_max).count();
    if found != wanted {
        return Err(Error::CountMismatch { e_max, expected: wanted, found });
    }
    let n = grid.n_interior();
    let scale = 1.0 / grid.dx;
    let mut modes = Vec::with_capacity(wanted * n);
    for c in 0..wanted {
        let col = pairs.vectors.column(c);
        let peak = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let first = col.iter().find(|v| v.abs() > 1e-8 * peak).copied().unwrap_or(1.0);
        let sign = if first < 0.0 { -1.0 } else { 1.0 };
        let norm = col.norm();
        modes.extend(col.iter().map(|v| sign * v / norm * scale));
    }
    Ok(EigenBasis::from_parts(grid.clone(), e_max, pairs.values, modes))
}

/// Inertia count of eigenvalues `<= e_max`, nudging the shift off a zero pivot.
fn count_at(op: &Laplacian, e_max: f64) -> Result<usize> {
    let mut shift = e_max;
    for _ in 0..8 {
        // `count_below` is strict; a hair above keeps `E == e_max` inside.
        match count_below(op, shift * (1.0 + 4.0 * f64::EPSILON)) {
            Ok(c) => return Ok(c),
            Err(Error::SingularShift { .. }) => shift *= 1.0 + 1e-10,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SingularShift { shift })
}

/// Modes below `e` predicted by Weyl's law for the grid's region.
pub fn weyl_estimate(grid: &GridSpec, e: f64) -> f64 {
    weyl_count(grid.region.area(), grid.region.perimeter(), e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, Rectangle};
    use std::f64::consts::PI;

    #[test]
    fn square_spectrum() {
        let grid = GridSpec::with_cells(Rectangle::unit_square().into(), 24);
        let basis = solve_eigen(&grid, 60.0).unwrap();
        let want = [2.0 * PI * PI, 5.0 * PI * PI, 5.0 * PI * PI];
        assert_eq!(basis.len(), 3);
        for (e, w) in basis.energies.iter().zip(want) {
            assert!((e - w).abs() / w < 1e-3, "{e} vs {w}");
        }
    }

    #[test]
    fn below_first_eigenvalue_is_empty() {
        let grid = GridSpec::with_cells(Rectangle::unit_square().into(), 12);
        let basis = solve_eigen(&grid, 10.0).unwrap();
        assert!(basis.is_empty());
    }

    #[test]
    fn basis_invariants() {
        let grid = GridSpec::with_cells(Domain::default().into(), 20);
        let opts = SolverOptions { dense_threshold: 0, guard_min: 12, ..Default::default() };
        let basis = solve_eigen_with(&grid, 1500.0, &opts).unwrap();
        let op = Laplacian::new(&grid);
        assert!(basis.energies.windows(2).all(|w| w[0] <= w[1]));
        assert!(basis.energies[0] > 0.0);
        for a in 0..basis.len() {
            let ma = basis.mode(a);
            assert!((basis.inner(ma, ma) - 1.0).abs() < 1e-10);
            let rq = op.quadratic_form(ma) / ma.iter().map(|v| v * v).sum::<f64>();
            assert!((rq - basis.energies[a]).abs() < 1e-8 * basis.energies[a]);
            let first = ma.iter().find(|v| v.abs() > 1e-6).unwrap();
            assert!(*first > 0.0);
            for b in 0..a {
                assert!(basis.inner(ma, basis.mode(b)).abs() < 1e-8);
            }
        }
        // A smaller cutoff gives a prefix of the same spectrum.
        let small = solve_eigen_with(&grid, 700.0, &opts).unwrap();
        assert!(small.len() < basis.len());
        for (a, b) in small.energies.iter().zip(&basis.energies) {
            assert!((a - b).abs() < 1e-8 * b);
        }
    }
}
