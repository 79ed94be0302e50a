//! Survival probability `S(t) = |<phi(t)|phi(0)>|^2`: exact spectral form and
//! the Gaussian-kernel estimate over a trajectory ensemble.

mod peaks;

pub use peaks::{analyze_peaks, find_peaks, label_peaks, Peak, PeakLabel, PeakReport, RecurrenceWindows};

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bohm::TrajectoryEnsemble;
use crate::geometry::{PeriodicOrbit, Vec2};
use crate::packet::SpectralState;
use crate::{Error, Result};

pub const DEFAULT_SIGMA: f64 = 156.25;
pub const DEFAULT_PROMINENCE: f64 = 0.02;

/// `|sum w_n exp(-i E_n t)|^2` with `w_n = |c_n|^2 / sum |c_m|^2`.
pub fn survival_exact(state0: &SpectralState, times: &[f64]) -> Vec<f64> {
    let total: f64 = state0.coeffs.iter().map(|c| c.norm_sqr()).sum();
    if total == 0.0 {
        return vec![0.0; times.len()];
    }
    let w: Vec<(f64, f64)> = state0
        .coeffs
        .iter()
        .zip(&state0.energies)
        .map(|(c, &e)| (c.norm_sqr() / total, e))
        .filter(|(w, _)| *w > 0.0)
        .collect();
    times
        .iter()
        .map(|&t| {
            let dt = t - state0.t;
            let a: Complex64 = w.iter().map(|&(wn, e)| Complex64::from_polar(wn, -e * dt)).sum();
            a.norm_sqr()
        })
        .collect()
}

/// Long-time average of the exact series: `sum w_n^2`.
pub fn inverse_participation(state0: &SpectralState) -> f64 {
    let total: f64 = state0.coeffs.iter().map(|c| c.norm_sqr()).sum();
    state0.coeffs.iter().map(|c| (c.norm_sqr() / total).powi(2)).sum()
}

/// Kernel estimate on the ensemble mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxSeries {
    pub sigma: f64,
    pub n: usize,
    /// `N^-1 sum_ij K_ij(t)`.
    pub raw: Vec<f64>,
    /// `raw / raw[0]`.
    pub rescaled: Vec<f64>,
    /// First mesh index at which some trajectory had already stopped.
    pub truncated_from: Option<usize>,
}

/// Pair term `exp(-sigma |r_i(t) - r_j(0)|^2 - |p_i(t) - p_j(0)|^2 / sigma)`.
fn kernel(sigma: f64, r: Vec2, p: Vec2, r0: Vec2, p0: Vec2) -> f64 {
    (-sigma * (r - r0).norm_squared() - (p - p0).norm_squared() / sigma).exp()
}

/// Row sums `N^-1 sum_j K_ij` at mesh index `k`, one per trajectory
/// (zero for trajectories that stopped before `k`).
pub fn row_contributions(ensemble: &TrajectoryEnsemble, sigma: f64, k: usize) -> Vec<f64> {
    let n = ensemble.len() as f64;
    let starts: Vec<(Vec2, Vec2)> = ensemble
        .trajectories
        .iter()
        .map(|t| (t.samples[0].pos, t.samples[0].momentum()))
        .collect();
    ensemble
        .trajectories
        .iter()
        .map(|tr| match tr.samples.get(k) {
            Some(s) => {
                let (r, p) = (s.pos, s.momentum());
                starts.iter().map(|&(r0, p0)| kernel(sigma, r, p, r0, p0)).sum::<f64>() / n
            }
            None => 0.0,
        })
        .collect()
}

pub fn survival_approx(ensemble: &TrajectoryEnsemble, sigma: f64) -> Result<ApproxSeries> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if ensemble.is_empty() || ensemble.trajectories.iter().any(|t| t.samples.is_empty()) {
        return Err(Error::invalid("ensemble has no samples"));
    }
    let raw: Vec<f64> = (0..ensemble.mesh.len())
        .map(|k| row_contributions(ensemble, sigma, k).iter().sum())
        .collect();
    let rescaled = raw.iter().map(|v| v / raw[0]).collect();
    let truncated_from = ensemble.trajectories.iter().map(|t| t.samples.len()).filter(|&l| l < ensemble.mesh.len()).min();
    Ok(ApproxSeries { sigma, n: ensemble.len(), raw, rescaled, truncated_from })
}

/// Per-trajectory share of the estimator at its maximum inside a time window.
#[derive(Clone, Debug, PartialEq)]
pub struct Contributors {
    pub mesh_index: usize,
    pub t: f64,
    /// Estimator value at `t`; equals the sum of all contributions.
    pub total: f64,
    /// `(trajectory id, contribution)`, largest first; ties by id.
    pub ranked: Vec<(usize, f64)>,
}

impl Contributors {
    pub fn top(&self, n: usize) -> Vec<usize> {
        self.ranked.iter().take(n).map(|&(id, _)| id).collect()
    }
}

pub fn top_contributors(ensemble: &TrajectoryEnsemble, sigma: f64, window: (f64, f64)) -> Result<Contributors> {
    let series = survival_approx(ensemble, sigma)?;
    let k = ensemble
        .mesh
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= window.0 && t <= window.1)
        .max_by(|a, b| series.raw[a.0].total_cmp(&series.raw[b.0]).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
        .ok_or(Error::EmptyWindow)?;
    let rows = row_contributions(ensemble, sigma, k);
    let mut ranked: Vec<(usize, f64)> = rows.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(Contributors { mesh_index: k, t: ensemble.mesh[k], total: series.raw[k], ranked })
}

/// Time-averaged distance of a path to the orbit's chord over mesh indices
/// `0..=upto` (or the whole path).
pub fn chord_distance(ensemble: &TrajectoryEnsemble, id: usize, orbit: &PeriodicOrbit, upto: Option<usize>) -> f64 {
    let samples = &ensemble.trajectories[id].samples;
    let end = upto.map_or(samples.len(), |k| (k + 1).min(samples.len()));
    samples[..end].iter().map(|s| orbit.distance(s.pos)).sum::<f64>() / end.max(1) as f64
}

/// Mesh index where a trajectory's own kernel overlap with its starting
/// point, `K_ii(t)`, peaks within `window`.
pub fn self_overlap_peak(ensemble: &TrajectoryEnsemble, id: usize, sigma: f64, window: (f64, f64)) -> Option<usize> {
    let tr = &ensemble.trajectories[id];
    let (r0, p0) = (tr.samples[0].pos, tr.samples[0].momentum());
    tr.samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.t >= window.0 && s.t <= window.1)
        .max_by(|a, b| {
            let ka = kernel(sigma, a.1.pos, a.1.momentum(), r0, p0);
            let kb = kernel(sigma, b.1.pos, b.1.momentum(), r0, p0);
            ka.total_cmp(&kb).then(b.0.cmp(&a.0))
        })
        .map(|(k, _)| k)
}

/// `t,s_exact,s_approx,s_approx_rescaled`.
pub fn write_survival_csv(mut w: impl Write, times: &[f64], exact: &[f64], approx: Option<&ApproxSeries>) -> Result<()> {
    writeln!(w, "t,s_exact,s_approx,s_approx_rescaled")?;
    for (k, (t, e)) in times.iter().zip(exact).enumerate() {
        match approx {
            Some(a) => writeln!(w, "{t},{e},{},{}", a.raw[k], a.rescaled[k])?,
            None => writeln!(w, "{t},{e},,")?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
