//! Bohmian trajectory ensembles under the guidance law `m r' = Im(grad phi / phi)`.

mod free;
mod radau;

pub use free::FreeGaussian;
pub use radau::Tolerances;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Billiard, Vec2};
use crate::packet::FieldEvaluator;
use crate::{Error, Result, MASS};

/// A velocity field a trajectory can be integrated through.
pub trait GuidanceField {
    /// Velocity at `p`, and whether `p` is within the near-node threshold.
    fn velocity(&self, p: Vec2, t: f64) -> (Vec2, bool);
    /// Whether `p` is an admissible position.
    fn inside(&self, p: Vec2) -> bool;
}

impl GuidanceField for FieldEvaluator {
    fn velocity(&self, p: Vec2, t: f64) -> (Vec2, bool) {
        FieldEvaluator::velocity(self, p, t)
    }

    fn inside(&self, p: Vec2) -> bool {
        self.grid().region.contains(p)
    }
}

/// Initial points on concentric rings around the packet centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub center: [f64; 2],
    pub rings: Vec<f64>,
    /// Points per ring, aligned with `rings`.
    pub counts: Vec<usize>,
    /// Seeds the angular offset of each ring.
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self { center: [1.0, 0.5], rings: vec![0.00333, 0.0333, 0.05, 0.1], counts: vec![20; 4], seed: 0 }
    }
}

impl EnsembleSpec {
    /// Splits `total` points over the rings as evenly as possible, the
    /// remainder going to the innermost rings.
    pub fn with_total(mut self, total: usize) -> Self {
        let n = self.rings.len().max(1);
        self.counts = (0..self.rings.len()).map(|k| total / n + usize::from(k < total % n)).collect();
        self
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.center[0], self.center[1])
    }

    fn validate(&self) -> Result<()> {
        if self.rings.len() != self.counts.len() {
            return Err(Error::invalid(format!(
                "{} ring radii but {} ring counts",
                self.rings.len(),
                self.counts.len()
            )));
        }
        if self.total() == 0 {
            return Err(Error::invalid("ensemble has no points"));
        }
        for (&r, &n) in self.rings.iter().zip(&self.counts) {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::invalid(format!("ring radius must be non-negative, got {r}")));
            }
            if r == 0.0 && n > 1 {
                return Err(Error::invalid("a ring of radius 0 holds at most one point"));
            }
        }
        Ok(())
    }
}

/// Ring points at angles `2 pi j / n + phase`, with one seeded phase per ring.
pub fn sample_initial(spec: &EnsembleSpec, region: &impl Billiard) -> Result<Vec<Vec2>> {
    spec.validate()?;
    let c = spec.center();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tau = std::f64::consts::TAU;
    let mut points = Vec::with_capacity(spec.total());
    for (&r, &n) in spec.rings.iter().zip(&spec.counts) {
        let phase: f64 = rng.random::<f64>() * tau;
        if n == 0 {
            continue;
        }
        // The whole circle must be interior, not just the sampled points.
        let probes = 720;
        if let Some(p) = (0..probes)
            .map(|k| c + r * Vec2::new((tau * k as f64 / probes as f64).cos(), (tau * k as f64 / probes as f64).sin()))
            .find(|&p| !region.is_interior(p))
        {
            return Err(Error::RingOutside { radius: r, x: p.x, y: p.y });
        }
        for j in 0..n {
            let a = tau * j as f64 / n as f64 + phase;
            points.push(c + r * Vec2::new(a.cos(), a.sin()));
        }
    }
    Ok(points)
}

/// Uniform output times `0, dt, 2 dt, ...` closed by `t_end`.
pub fn output_mesh(t_end: f64, dt_out: f64) -> Result<Vec<f64>> {
    if !(t_end > 0.0) || !(dt_out > 0.0) {
        return Err(Error::invalid(format!("need t_end > 0 and dt_out > 0, got {t_end}, {dt_out}")));
    }
    let n = (t_end / dt_out).round();
    if n > 1e7 {
        return Err(Error::invalid("output mesh too fine"));
    }
    let n = n as usize;
    let mut mesh: Vec<f64> = (0..=n).map(|k| k as f64 * dt_out).collect();
    if (mesh[n] - t_end).abs() <= 1e-9 * dt_out {
        mesh[n] = t_end;
    } else {
        mesh.retain(|&t| t < t_end - 1e-9 * dt_out);
        mesh.push(t_end);
    }
    Ok(mesh)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationOptions {
    pub tol: Tolerances,
    pub t_end: f64,
    pub dt_out: f64,
    /// Accepted plus rejected steps per trajectory before giving up.
    pub max_steps: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self { tol: Tolerances::default(), t_end: 0.1, dt_out: 2.5e-4, max_steps: 2_000_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub pos: Vec2,
    pub vel: Vec2,
}

impl TrajectorySample {
    /// `p = m v`.
    pub fn momentum(&self) -> Vec2 {
        self.vel * MASS
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrajectoryStatus {
    Ok,
    NearNodeVisited,
    LeftDomain { t: f64 },
    StepFailure { t: f64 },
}

impl TrajectoryStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::NearNodeVisited => "near-node-visited",
            Self::LeftDomain { .. } => "left-domain",
            Self::StepFailure { .. } => "step-failure",
        }
    }

    /// Ran to the end of the mesh.
    pub fn completed(&self) -> bool {
        matches!(self, Self::Ok | Self::NearNodeVisited)
    }
}

impl fmt::Display for TrajectoryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    /// On the ensemble's output mesh; a prefix of it if the path failed.
    pub samples: Vec<TrajectorySample>,
    pub status: TrajectoryStatus,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn at_index(&self, k: usize) -> Option<&TrajectorySample> {
        self.samples.get(k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEnsemble {
    pub mesh: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn count_status(&self, label: &str) -> usize {
        self.trajectories.iter().filter(|t| t.status.label() == label).count()
    }

    /// Mean position of the trajectories present at mesh index `k`.
    pub fn centroid(&self, k: usize) -> Option<Vec2> {
        let pts: Vec<Vec2> = self.trajectories.iter().filter_map(|t| t.at_index(k)).map(|s| s.pos).collect();
        (!pts.is_empty()).then(|| pts.iter().sum::<Vec2>() / pts.len() as f64)
    }

    /// Smallest distance between two completed trajectories at a common mesh
    /// time, with the mesh index where it occurs.
    pub fn min_pair_distance(&self) -> Option<(f64, usize)> {
        let done: Vec<&Trajectory> = self.trajectories.iter().filter(|t| t.status.completed()).collect();
        let mut best: Option<(f64, usize)> = None;
        for k in 0..self.mesh.len() {
            for a in 0..done.len() {
                for b in a + 1..done.len() {
                    let d = (done[a].samples[k].pos - done[b].samples[k].pos).norm();
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, k));
                    }
                }
            }
        }
        best
    }
}

/// Integrates every point over `[0, t_end]`; failed trajectories keep their
/// prefix and status.
pub fn integrate_ensemble(
    points: &[Vec2],
    field: &(impl GuidanceField + ?Sized),
    opts: &IntegrationOptions,
) -> Result<TrajectoryEnsemble> {
    if !(opts.tol.abs > 0.0 && opts.tol.rel > 0.0) {
        return Err(Error::invalid("tolerances must be positive"));
    }
    let mesh = output_mesh(opts.t_end, opts.dt_out)?;
    if let Some(p) = points.iter().find(|&&p| !field.inside(p)) {
        return Err(Error::OutsideDomain { x: p.x, y: p.y });
    }
    let trajectories = points
        .iter()
        .enumerate()
        .map(|(id, &p)| {
            let r = radau::integrate_path(field, p, &mesh, opts.tol, opts.max_steps);
            Trajectory { id, samples: r.samples, status: r.status, stats: r.stats }
        })
        .collect();
    Ok(TrajectoryEnsemble { mesh, trajectories })
}

/// Integrates a single path through `field` on an arbitrary ascending mesh.
pub fn integrate_path(
    field: &(impl GuidanceField + ?Sized),
    start: Vec2,
    mesh: &[f64],
    tol: Tolerances,
    max_steps: usize,
) -> Result<Trajectory> {
    if mesh.len() < 2 || mesh.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("mesh must be strictly ascending with at least two times"));
    }
    let r = radau::integrate_path(field, start, mesh, tol, max_steps);
    Ok(Trajectory { id: 0, samples: r.samples, status: r.status, stats: r.stats })
}

/// One interval of the ensemble's paths.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub t_start: f64,
    pub t_end: f64,
    /// `(trajectory id, samples with t in [t_start, t_end])`.
    pub paths: Vec<(usize, Vec<TrajectorySample>)>,
}

/// Splits paths at `cuts`; both interval ends are inclusive so consecutive
/// panels share their boundary sample.
pub fn segment_panels(ensemble: &TrajectoryEnsemble, cuts: &[f64]) -> Result<Vec<Panel>> {
    let (t0, t1) = (ensemble.mesh[0], ensemble.mesh[ensemble.mesh.len() - 1]);
    if cuts.windows(2).any(|w| w[1] <= w[0]) || cuts.iter().any(|&c| c < t0 || c > t1) {
        return Err(Error::invalid(format!("cut times must be ascending within [{t0}, {t1}]")));
    }
    let mut bounds = vec![t0];
    bounds.extend(cuts.iter().copied().filter(|&c| c > t0));
    if *bounds.last().unwrap() < t1 {
        bounds.push(t1);
    }
    if cuts.first() == Some(&t0) {
        bounds.insert(0, t0);
    }
    let tol = 1e-9 * (t1 - t0).max(f64::MIN_POSITIVE);
    Ok(bounds
        .windows(2)
        .map(|w| Panel {
            t_start: w[0],
            t_end: w[1],
            paths: ensemble
                .trajectories
                .iter()
                .map(|tr| {
                    let seg = tr.samples.iter().filter(|s| s.t >= w[0] - tol && s.t <= w[1] + tol).copied().collect();
                    (tr.id, seg)
                })
                .collect(),
        })
        .collect())
}

pub const ENSEMBLE_CSV_HEADER: &str = "id,t,x,y,px,py,status";

/// One row per sample: `id,t,x,y,px,py,status`.
pub fn write_ensemble_csv(mut w: impl Write, ensemble: &TrajectoryEnsemble) -> Result<()> {
    writeln!(w, "{ENSEMBLE_CSV_HEADER}")?;
    for tr in &ensemble.trajectories {
        write_rows(&mut w, tr.id, &tr.samples, tr.status)?;
    }
    Ok(())
}

pub fn write_panel_csv(mut w: impl Write, panel: &Panel, ensemble: &TrajectoryEnsemble) -> Result<()> {
    writeln!(w, "{ENSEMBLE_CSV_HEADER}")?;
    for (id, seg) in &panel.paths {
        write_rows(&mut w, *id, seg, ensemble.trajectories[*id].status)?;
    }
    Ok(())
}

fn write_rows(w: &mut impl Write, id: usize, samples: &[TrajectorySample], status: TrajectoryStatus) -> Result<()> {
    for s in samples {
        let p = s.momentum();
        writeln!(w, "{id},{},{},{},{},{},{status}", s.t, s.pos.x, s.pos.y, p.x, p.y)?;
    }
    Ok(())
}

impl FromStr for TrajectoryStatus {
    type Err = Error;
    /// Failure times are not stored in the label; they are restored from the
    /// last sample by [`read_ensemble_csv`].
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ok" => Self::Ok,
            "near-node-visited" => Self::NearNodeVisited,
            "left-domain" => Self::LeftDomain { t: f64::NAN },
            "step-failure" => Self::StepFailure { t: f64::NAN },
            other => return Err(Error::Format(format!("unknown trajectory status {other:?}"))),
        })
    }
}

/// Reads an ensemble written by [`write_ensemble_csv`] on the given mesh.
/// Step statistics are not stored and come back zeroed.
pub fn read_ensemble_csv(r: impl BufRead, mesh: Vec<f64>) -> Result<TrajectoryEnsemble> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty ensemble file".into()))??;
    if header.trim() != ENSEMBLE_CSV_HEADER {
        return Err(Error::Format(format!("unexpected ensemble header {header:?}")));
    }
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::Format(format!("ensemble row needs 7 fields: {line:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}")));
        let id: usize = f[0].parse().map_err(|_| Error::Format(format!("bad id {:?}", f[0])))?;
        let sample = TrajectorySample {
            t: num(f[1])?,
            pos: Vec2::new(num(f[2])?, num(f[3])?),
            vel: Vec2::new(num(f[4])?, num(f[5])?) / MASS,
        };
        let status: TrajectoryStatus = f[6].parse()?;
        if trajectories.last().is_none_or(|t| t.id != id) {
            if id != trajectories.len() {
                return Err(Error::Format(format!("trajectory ids must be consecutive from 0, found {id}")));
            }
            trajectories.push(Trajectory { id, samples: Vec::new(), status, stats: StepStats::default() });
        }
        trajectories.last_mut().unwrap().samples.push(sample);
    }
    for tr in &mut trajectories {
        if tr.samples.len() > mesh.len() {
            return Err(Error::Format(format!("trajectory {} is longer than the mesh", tr.id)));
        }
        let last = tr.samples.last().map_or(f64::NAN, |s| s.t);
        match &mut tr.status {
            TrajectoryStatus::LeftDomain { t } | TrajectoryStatus::StepFailure { t } => *t = last,
            _ => {}
        }
    }
    Ok(TrajectoryEnsemble { mesh, trajectories })
}

#[cfg(test)]
mod tests;
