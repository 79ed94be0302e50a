//! Oracle suites with closed-form answers: the Dirichlet unit square and a
//! freely spreading Gaussian.

use std::f64::consts::PI;

use crate::bohm::{integrate_ensemble, FreeGaussian, IntegrationOptions, TrajectoryStatus};
use crate::geometry::{Rectangle, Vec2};
use crate::spectral::{build_grid, solve_eigen};
use crate::Result;

/// Outcome of one oracle comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub name: &'static str,
    /// Largest relative deviation from the closed form.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

/// `pi^2 (m^2 + n^2)` for `m, n >= 1`, ascending, the first `count` values.
pub fn square_eigenvalues(count: usize) -> Vec<f64> {
    let side = (count as f64).sqrt().ceil() as usize + 2;
    let mut v: Vec<f64> = (1..=side)
        .flat_map(|m| (1..=side).map(move |n| PI * PI * (m * m + n * n) as f64))
        .collect();
    v.sort_by(f64::total_cmp);
    v.truncate(count);
    v
}

/// Lowest `count` eigenvalues of the unit square at `ppw` points per
/// wavelength for wavenumbers up to `k_max`.
pub fn square_oracle(count: usize, ppw: f64, k_max: f64) -> Result<OracleReport> {
    let e_max = k_max * k_max;
    let grid = build_grid(Rectangle::unit_square().into(), ppw, e_max)?;
    let basis = solve_eigen(&grid, e_max)?;
    let exact = square_eigenvalues(count);
    let found = basis.energies.len();
    let worst = if found < count {
        f64::INFINITY
    } else {
        basis.energies.iter().zip(&exact).map(|(e, x)| (e - x).abs() / x).fold(0.0, f64::max)
    };
    Ok(OracleReport {
        name: "square billiard",
        worst,
        tolerance: 5e-3,
        detail: format!(
            "{count} lowest of {found} modes below k={k_max} on a {0}x{0} grid, worst relative error {worst:.2e}",
            grid.nx - 1
        ),
    })
}

/// Default square oracle: 20 modes, 8 points per wavelength, `k_max = 25`.
pub fn square_oracle_default() -> Result<OracleReport> {
    square_oracle(20, 8.0, 25.0)
}

/// Integrates trajectories through a free Gaussian for three spreading times
/// and compares with the closed-form width scaling, relative to each path's
/// offset from the packet centre.
pub fn free_gaussian_oracle(alpha: f64) -> Result<OracleReport> {
    let free = FreeGaussian { alpha, center: Vec2::new(0.3, -0.2), momentum: Vec2::new(40.0, -20.0) };
    let t_end = 3.0 * free.spreading_time();
    let opts = IntegrationOptions { t_end, dt_out: t_end / 120.0, ..Default::default() };
    let starts: Vec<Vec2> = [(0.01, 0.0), (0.03, -0.02), (-0.05, 0.04), (0.1, 0.1), (-0.2, -0.05)]
        .iter()
        .map(|&(dx, dy)| free.center + Vec2::new(dx, dy))
        .collect();
    let ens = integrate_ensemble(&starts, &free, &opts)?;
    let mut worst: f64 = 0.0;
    for (tr, &s0) in ens.trajectories.iter().zip(&starts) {
        if tr.status != TrajectoryStatus::Ok {
            worst = f64::INFINITY;
            continue;
        }
        for s in &tr.samples[1..] {
            let exact = free.position(s0, s.t);
            let offset = (exact - free.centre_at(s.t)).norm();
            worst = worst.max((s.pos - exact).norm() / offset);
        }
    }
    Ok(OracleReport {
        name: "free Gaussian",
        worst,
        tolerance: 1e-6,
        detail: format!(
            "{} paths over {:.3e} (3 spreading times, width x{:.2}), worst relative error {worst:.2e}",
            starts.len(),
            t_end,
            free.width_ratio(t_end)
        ),
    })
}

pub fn run_all() -> Result<Vec<OracleReport>> {
    Ok(vec![square_oracle_default()?, free_gaussian_oracle(30.68)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_levels_are_sorted_with_degeneracies() {
        let v = square_eigenvalues(6);
        let unit = PI * PI;
        let want = [2.0, 5.0, 5.0, 8.0, 10.0, 10.0];
        for (a, b) in v.iter().zip(want) {
            assert!((a / unit - b).abs() < 1e-12);
        }
    }

    #[test]
    fn oracles_pass() {
        for r in run_all().unwrap() {
            assert!(r.passed(), "{}: {}", r.name, r.detail);
        }
    }
}
