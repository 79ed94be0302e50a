//! Acceptance checks evaluated on a finished run.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use super::stages::contributor_sets;
use super::Pipeline;
use crate::geometry::{diagonal_po, dist_to_segment, reflect_ray, Ray, Vec2};
use crate::spectral::weyl_count;
use crate::survival::{
    analyze_peaks, chord_distance, self_overlap_peak, survival_approx, survival_exact, Peak, PeakLabel, PeakReport,
    RecurrenceWindows,
};
use crate::validation;
use crate::{Billiard, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{mark}] {:>2}. {}: {}", self.id, self.name, self.detail)
    }
}

fn check(id: u32, name: &'static str, passed: bool, detail: String) -> Check {
    Check { id, name, passed, detail }
}

/// Cutoff at which the mode count is compared with Weyl's law.
const WEYL_CUTOFF: f64 = 3456.0;
/// End of the window in which the packet follows the classical ray.
const EHRENFEST_END: f64 = 0.023;

/// Criteria 1-10; the run's stages must be current.
pub fn checklist(p: &Pipeline) -> Result<Vec<Check>> {
    let c = p.config();
    let basis = p.load_basis()?;
    let project = p.load_project()?;
    let state = &project.state;
    let ens = p.load_ensemble()?;
    let mesh = &ens.mesh;
    let scar = p.load_scar_summary()?;
    let windows = RecurrenceWindows::new(c.period());
    let mut out = Vec::new();

    let sq = validation::square_oracle_default()?;
    out.push(check(1, "square-billiard eigenvalues within 0.5%", sq.passed(), sq.detail));

    let region = basis.grid.region;
    let weyl = weyl_count(region.area(), region.perimeter(), WEYL_CUTOFF);
    let count = basis.energies.iter().filter(|&&e| e <= WEYL_CUTOFF).count();
    let dev = (count as f64 - weyl).abs() / weyl;
    out.push(check(
        2,
        "Weyl count at E_max = 3456 within 5%",
        basis.cutoff >= WEYL_CUTOFF && dev <= 0.05,
        format!("{count} modes vs Weyl {weyl:.1} ({:.2}%); basis cutoff {}", 100.0 * dev, basis.cutoff),
    ));

    let s0 = survival_exact(state, &[0.0])[0];
    let pos = Vec2::new(project.position[0], project.position[1]);
    let target = c.coherent().center();
    let t_nominal = (c.period() * 1e4).round() / 1e4;
    let ok3 = project.capture >= c.grid.capture_threshold
        && (s0 - 1.0).abs() <= 1e-9
        && (pos - target).norm() <= 1e-3
        && (project.central_energy - 2304.0).abs() < 1e-9
        && (t_nominal - 0.0466).abs() < 1e-12;
    out.push(check(
        3,
        "packet projection",
        ok3,
        format!(
            "capture {:.6}, S(0) - 1 = {:.1e}, <r> = ({:.5}, {:.5}), |P0|^2 = {}, T = {:.5}, <H> = {:.1}",
            project.capture,
            s0 - 1.0,
            pos.x,
            pos.y,
            project.central_energy,
            c.period(),
            project.mean_energy
        ),
    ));

    let exact = survival_exact(state, mesh);
    let pe = analyze_peaks(mesh, &exact, c.survival.prominence, &windows);
    let main: Vec<&Peak> = pe.peaks.iter().filter(|p| matches!(p.label, PeakLabel::A | PeakLabel::B | PeakLabel::C)).collect();
    let first = first_recurrence(&pe);
    let second = pe.first(PeakLabel::C);
    let shoulders: Vec<&Peak> = pe
        .with_label(PeakLabel::Shoulder)
        .filter(|s| second.is_some_and(|c| s.t < c.t && s.t > first.map_or(0.0, |f| f.t)))
        .collect();
    let ok4 = main.len() == 2
        && first.is_some_and(|f| (f.t - 0.047).abs() <= 0.003)
        && second.is_some_and(|s| (s.t - 0.094).abs() <= 0.004)
        && matches!((first, second), (Some(f), Some(s)) if s.height < f.height)
        && !shoulders.is_empty();
    out.push(check(
        4,
        "exact recurrences at 0.047 and 0.094 with shoulders",
        ok4,
        format!(
            "{} main peak(s): {}; {} leading-edge shoulder(s) at {}",
            main.len(),
            describe(&main),
            shoulders.len(),
            shoulders.iter().map(|s| format!("{:.4} (prominence {:.4})", s.t, s.prominence)).collect::<Vec<_>>().join(", ")
        ),
    ));

    let approx = survival_approx(&ens, c.survival.sigma)?;
    let pa = analyze_peaks(mesh, &approx.rescaled, c.survival.prominence, &windows);
    let pairs = [(first, first_recurrence(&pa)), (second, pa.first(PeakLabel::C))];
    let diffs: Vec<Option<f64>> = pairs.iter().map(|&(e, a)| Some((e?.t - a?.t).abs())).collect();
    let ok5 = diffs.iter().all(|d| d.is_some_and(|d| d <= 0.005));
    let a_main: Vec<&Peak> = pa.peaks.iter().filter(|p| matches!(p.label, PeakLabel::A | PeakLabel::B | PeakLabel::C)).collect();
    out.push(check(
        5,
        "trajectory estimate peaks match exact within 0.005",
        ok5,
        format!(
            "estimate peaks {}; |dt| = {}",
            describe(&a_main),
            diffs.iter().map(|d| d.map_or("missing".into(), |d| format!("{d:.4}"))).collect::<Vec<_>>().join(", ")
        ),
    ));

    let free = validation::free_gaussian_oracle(c.packet.alpha)?;
    out.push(check(6, "free-Gaussian trajectories within 1e-6", free.passed(), free.detail));

    out.push(ehrenfest(p, &basis, state, &ens)?);

    let (min_d, _) = ens.min_pair_distance().unwrap_or((f64::INFINITY, 0));
    let left = ens.count_status("left-domain");
    out.push(check(
        8,
        "flow single-valued, no escapes",
        min_d >= 1e-6 && left == 0,
        format!(
            "minimum pair distance {min_d:.2e}; {left} left the domain; {} of {} ok",
            ens.count_status("ok"),
            ens.len()
        ),
    ));

    out.push(contributors(p, &ens, &pa, &windows)?);

    let ok10 = scar.first.tube_ratio > 3.0 && scar.first.tube_ratio > scar.baseline_tube_ratio;
    out.push(check(
        10,
        "scar tube ratio > 3 and above the packet baseline",
        ok10,
        format!(
            "scar {:.3} (dE = {:.2}), unwindowed packet {:.3}, second-recurrence scar {:.3}, overlap {:.4}",
            scar.first.tube_ratio, scar.first.delta_e, scar.baseline_tube_ratio, scar.second.tube_ratio, scar.overlap
        ),
    ));
    Ok(out)
}

fn first_recurrence(r: &PeakReport) -> Option<&Peak> {
    [r.first(PeakLabel::A), r.first(PeakLabel::B)].into_iter().flatten().max_by(|a, b| a.height.total_cmp(&b.height))
}

fn describe(peaks: &[&Peak]) -> String {
    peaks.iter().map(|p| format!("{} at {:.4} (S = {:.4})", p.label, p.t, p.height)).collect::<Vec<_>>().join(", ")
}

/// Distance from the classical ray's path (not its time-synchronized
/// position) for the ensemble centroid and the density centroid.
fn ehrenfest(
    p: &Pipeline,
    basis: &crate::spectral::EigenBasis,
    state: &crate::packet::SpectralState,
    ens: &crate::bohm::TrajectoryEnsemble,
) -> Result<Check> {
    let c = p.config();
    let packet = c.coherent();
    let ray = reflect_ray(&c.domain(), &Ray::new(packet.center(), packet.momentum(), packet.speed()), EHRENFEST_END);
    let dist = |q: Vec2| ray.vertices.windows(2).map(|w| dist_to_segment(q, w[0].1, w[1].1)).fold(f64::INFINITY, f64::min);
    let (mut worst_e, mut worst_d) = (0.0f64, 0.0f64);
    let points: Vec<Vec2> = basis.grid.interior_points().collect();
    for (k, &t) in ens.mesh.iter().enumerate() {
        if t > EHRENFEST_END + 1e-12 {
            break;
        }
        if let Some(cen) = ens.centroid(k) {
            worst_e = worst_e.max(dist(cen));
        }
        let rho = state.evolve(t).density_snapshot(basis);
        let norm: f64 = rho.iter().sum();
        let dc = points.iter().zip(&rho).map(|(q, r)| q * *r).sum::<Vec2>() / norm;
        worst_d = worst_d.max(dist(dc));
    }
    Ok(check(
        7,
        "centroids follow the classical ray for t <= 0.023",
        worst_e <= 0.05 && worst_d <= 0.05,
        format!("largest distance from the ray path: ensemble {worst_e:.4}, density {worst_d:.4}"),
    ))
}

/// Path-to-chord distance of the `a` contributors against the ensemble, and
/// the order in which `a` and `b` contributors return to their start.
fn contributors(
    p: &Pipeline,
    ens: &crate::bohm::TrajectoryEnsemble,
    approx_peaks: &PeakReport,
    windows: &RecurrenceWindows,
) -> Result<Check> {
    let c = p.config();
    let sigma = c.survival.sigma;
    let po = diagonal_po(&c.domain());
    let sets = contributor_sets(ens, approx_peaks, sigma)?;
    let find = |l: PeakLabel| sets.iter().find(|(label, _)| *label == l).map(|(_, s)| s);
    let Some(a) = find(PeakLabel::A) else {
        return Ok(check(9, "contributor analysis", false, "no peak a in the trajectory estimate".into()));
    };
    let top_a = a.top(5);
    let mean = |ids: &[usize], upto: usize| ids.iter().map(|&i| chord_distance(ens, i, &po, Some(upto))).sum::<f64>() / ids.len() as f64;
    let all: Vec<usize> = (0..ens.len()).collect();
    let (d_top, d_all) = (mean(&top_a, a.mesh_index), mean(&all, a.mesh_index));
    let ratio = d_all / d_top;
    let at_peak = |ids: &[usize]| {
        ids.iter().filter_map(|&i| ens.trajectories[i].samples.get(a.mesh_index)).map(|s| po.distance(s.pos)).sum::<f64>()
            / ids.len() as f64
    };
    let inst = at_peak(&all) / at_peak(&top_a);

    let w1 = windows.window(1);
    let return_time = |ids: &[usize]| {
        let ts: Vec<f64> = ids.iter().filter_map(|&i| self_overlap_peak(ens, i, sigma, w1)).map(|k| ens.mesh[k]).collect();
        (!ts.is_empty()).then(|| ts.iter().sum::<f64>() / ts.len() as f64)
    };
    let ta = return_time(&top_a);
    let tb = find(PeakLabel::B).and_then(|b| return_time(&b.top(5)));
    let delay = ta.zip(tb).map(|(a, b)| b - a);
    let passed = ratio >= 3.0 && delay.is_some_and(|d| d > 0.0);
    Ok(check(
        9,
        "contributor analysis",
        passed,
        format!(
            "a at t = {:.4}, top 5 {top_a:?}: mean chord distance over [0, t_a] {d_top:.4} vs ensemble {d_all:.4} \
             (ratio {ratio:.2}, need 3; at t_a alone {inst:.2}); b-minus-a self-overlap delay {}",
            a.t,
            delay.map_or("n/a (no peak b)".into(), |d| format!("{d:.4}"))
        ),
    ))
}

/// Byte comparison of every CSV under two run directories.
pub fn compare_outputs(a: &Path, b: &Path) -> Result<Check> {
    let (fa, fb) = (csv_files(a)?, csv_files(b)?);
    let mut differing = Vec::new();
    if fa != fb {
        differing.push("file lists differ".to_string());
    }
    for rel in fa.iter().filter(|f| fb.contains(f)) {
        if fs::read(a.join(rel))? != fs::read(b.join(rel))? {
            differing.push(rel.display().to_string());
        }
    }
    Ok(check(
        11,
        "byte-identical CSVs across clean runs",
        differing.is_empty() && !fa.is_empty(),
        if differing.is_empty() {
            format!("{} CSV files identical", fa.len())
        } else {
            format!("differences: {}", differing.join(", "))
        },
    ))
}

fn csv_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                out.push(path.strip_prefix(root).expect("walk stays under root").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}
