use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::{write_json, Pipeline, Stage};
use crate::bohm::{integrate_ensemble, sample_initial, segment_panels, write_ensemble_csv, write_panel_csv, TrajectoryEnsemble};
use crate::geometry::{diagonal_po, reflect_ray, write_polyline_csv, Ray, Region};
use crate::packet::{coherent_state, moments, project, project_unchecked, write_grid_file, CoherentParams, FieldEvaluator, SpectralState};
use crate::scar::{build_scar, tube_localization, ScarSpec};
use crate::spectral::{build_grid_with_budget, load_basis, save_basis, solve_eigen, weyl_estimate, EigenBasis};
use crate::survival::{
    analyze_peaks, inverse_participation, survival_approx, survival_exact, top_contributors, write_survival_csv,
    Contributors, PeakLabel, PeakReport, RecurrenceWindows,
};
use crate::{Error, Result};

/// One cutoff tried by the eigensolve stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenAttempt {
    pub e_max: f64,
    pub cells_per_unit: usize,
    pub unknowns: usize,
    pub modes: usize,
    pub weyl: f64,
    pub capture: f64,
    /// `solved`, or `adopted` for a basis file supplied by the user.
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub capture: f64,
    pub modes: usize,
    pub e_max: f64,
    /// Grid moments of the projected packet.
    pub position: [f64; 2],
    pub momentum: [f64; 2],
    pub mean_energy: f64,
    /// `|P0|^2 / 2m`.
    pub central_energy: f64,
    /// `(|P0|^2 + 2 alpha) / 2m`.
    pub nominal_mean_energy: f64,
    pub period: f64,
    pub state: SpectralState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScarEntry {
    pub center_energy: f64,
    pub delta_e: f64,
    pub tube_ratio: f64,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScarSummary {
    pub tube_width: f64,
    pub first: ScarEntry,
    pub second: ScarEntry,
    /// The unfiltered packet (infinitely wide window).
    pub baseline_tube_ratio: f64,
    /// `|<first|second>|`.
    pub overlap: f64,
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn capture_of(basis: &EigenBasis, packet: &CoherentParams) -> Result<f64> {
    Ok(project_unchecked(&coherent_state(packet, &basis.grid)?, basis).norm_capture)
}

fn attempt(basis: &EigenBasis, capture: f64, source: &str) -> EigenAttempt {
    EigenAttempt {
        e_max: basis.cutoff,
        cells_per_unit: basis.grid.cells_per_unit,
        unknowns: basis.grid.n_interior(),
        modes: basis.len(),
        weyl: weyl_estimate(&basis.grid, basis.cutoff),
        capture,
        source: source.into(),
    }
}

/// Top contributors at the `a` and `b` peaks of the trajectory estimate,
/// each taken at the estimator's maximum within two output steps of the
/// refined peak.
pub(crate) fn contributor_sets(
    ensemble: &TrajectoryEnsemble,
    approx_peaks: &PeakReport,
    sigma: f64,
) -> Result<Vec<(PeakLabel, Contributors)>> {
    let mesh = &ensemble.mesh;
    let mut out = Vec::new();
    for label in [PeakLabel::A, PeakLabel::B] {
        if let Some(p) = approx_peaks.first(label) {
            let lo = mesh[p.index.saturating_sub(2)];
            let hi = mesh[(p.index + 2).min(mesh.len() - 1)];
            out.push((label, top_contributors(ensemble, sigma, (lo, hi))?));
        }
    }
    Ok(out)
}

impl Pipeline {
    pub(super) fn run_eigensolve(&self) -> Result<Vec<PathBuf>> {
        let c = &self.config;
        let dir = self.stage_dir(Stage::Eigensolve);
        let path = self.basis_path();
        let packet = c.coherent();
        let region: Region = c.domain().into();
        let mut attempts = Vec::new();
        let basis = if self.opts.basis.is_some() && path.exists() {
            let b = load_basis(&path)?;
            if b.grid.region != region {
                return Err(Error::Config(format!("{} was built for a different domain", path.display())));
            }
            let capture = capture_of(&b, &packet)?;
            attempts.push(attempt(&b, capture, "adopted"));
            write_json(&dir.join("attempts.json"), &attempts)?;
            if capture < c.grid.capture_threshold {
                return Err(Error::LowCapture { capture, threshold: c.grid.capture_threshold });
            }
            b
        } else {
            let g = &c.grid;
            let mut e_max = g.e_max;
            let mut tries = 0;
            loop {
                tries += 1;
                let grid = build_grid_with_budget(region, g.points_per_wavelength, e_max, g.memory_budget_mb)?;
                log::info!("eigensolve: E_max = {e_max}, {} unknowns", grid.n_interior());
                let b = solve_eigen(&grid, e_max)?;
                let capture = capture_of(&b, &packet)?;
                log::info!("eigensolve: {} modes, capture {capture:.6}", b.len());
                attempts.push(attempt(&b, capture, "solved"));
                if capture >= g.capture_threshold {
                    save_basis(&b, &path)?;
                    break b;
                }
                if tries == g.max_attempts {
                    write_json(&dir.join("attempts.json"), &attempts)?;
                    return Err(Error::LowCapture { capture, threshold: g.capture_threshold });
                }
                e_max *= g.raise_factor;
            }
        };
        write_json(&dir.join("attempts.json"), &attempts)?;
        *self.basis.borrow_mut() = Some(Rc::new(basis));
        let recorded = if self.opts.basis.is_some() { std::path::absolute(&path)? } else { PathBuf::from("basis.bin") };
        Ok(vec![recorded, "attempts.json".into()])
    }

    pub(super) fn run_project(&self) -> Result<Vec<PathBuf>> {
        let c = &self.config;
        let dir = self.stage_dir(Stage::Project);
        let basis = self.load_basis()?;
        let packet = c.coherent();
        let field = coherent_state(&packet, &basis.grid)?;
        let state = project(&field, &basis, c.grid.capture_threshold)?;
        let m = moments(&basis.grid, &state.grid_amplitude(&basis));
        let summary = ProjectSummary {
            capture: state.norm_capture,
            modes: basis.len(),
            e_max: basis.cutoff,
            position: [m.position.x, m.position.y],
            momentum: [m.momentum.x, m.momentum.y],
            mean_energy: m.energy,
            central_energy: packet.central_energy(),
            nominal_mean_energy: packet.mean_energy(),
            period: c.period(),
            state,
        };
        write_json(&dir.join("state.json"), &summary)?;
        let mut w = create(&dir.join("coefficients.csv"))?;
        writeln!(w, "n,energy,re,im,weight")?;
        for (n, (cn, e)) in summary.state.coeffs.iter().zip(&summary.state.energies).enumerate() {
            writeln!(w, "{n},{e},{},{},{}", cn.re, cn.im, cn.norm_sqr())?;
        }
        w.flush()?;
        Ok(vec!["state.json".into(), "coefficients.csv".into()])
    }

    pub(super) fn run_snapshots(&self) -> Result<Vec<PathBuf>> {
        let dir = self.stage_dir(Stage::Snapshots);
        let basis = self.load_basis()?;
        let state = self.load_state()?;
        let grid = &basis.grid;
        let mut files = Vec::new();
        let mut index = create(&dir.join("snapshots.csv"))?;
        writeln!(index, "t,file,norm,x,y")?;
        for &t in &self.config.snapshots.times {
            let rho = state.evolve(t).density_snapshot(&basis);
            let name = format!("density_t{t}.grid");
            let mut w = create(&dir.join(&name))?;
            write_grid_file(&mut w, grid, &rho, t)?;
            w.flush()?;
            let norm: f64 = rho.iter().sum::<f64>();
            let centroid = grid.interior_points().zip(&rho).map(|(p, r)| p * *r).sum::<crate::Vec2>() / norm;
            writeln!(index, "{t},{name},{},{},{}", norm * grid.cell_area(), centroid.x, centroid.y)?;
            files.push(PathBuf::from(name));
        }
        index.flush()?;
        files.push("snapshots.csv".into());
        Ok(files)
    }

    pub(super) fn run_trajectories(&self) -> Result<Vec<PathBuf>> {
        let c = &self.config;
        let dir = self.stage_dir(Stage::Trajectories);
        let basis = self.load_basis()?;
        let state = self.load_state()?;
        let field = FieldEvaluator::new(&state, &basis, 0.0);
        let spec = c.ensemble_spec();
        let points = sample_initial(&spec, &c.domain())?;
        log::info!("trajectories: integrating {} paths to t = {}", points.len(), c.integrator.t_end);
        let ens = integrate_ensemble(&points, &field, &c.integration())?;

        let mut w = create(&dir.join("ensemble.csv"))?;
        write_ensemble_csv(&mut w, &ens)?;
        w.flush()?;
        let mut files = vec![PathBuf::from("ensemble.csv")];

        let mut w = create(&dir.join("stats.csv"))?;
        writeln!(w, "id,ring,x0,y0,status,accepted,rejected,evaluations")?;
        let rings: Vec<usize> = spec.counts.iter().enumerate().flat_map(|(r, &n)| std::iter::repeat_n(r, n)).collect();
        for (tr, ring) in ens.trajectories.iter().zip(rings) {
            let p = tr.samples[0].pos;
            let s = tr.stats;
            writeln!(w, "{},{ring},{},{},{},{},{},{}", tr.id, p.x, p.y, tr.status, s.accepted, s.rejected, s.evaluations)?;
        }
        w.flush()?;
        files.push("stats.csv".into());

        let panels = segment_panels(&ens, &c.snapshots.times)?;
        let mut index = create(&dir.join("panels.csv"))?;
        writeln!(index, "panel,t_start,t_end,file")?;
        for (k, panel) in panels.iter().enumerate() {
            let name = format!("panel_{}.csv", k + 1);
            let mut w = create(&dir.join(&name))?;
            write_panel_csv(&mut w, panel, &ens)?;
            w.flush()?;
            writeln!(index, "{},{},{},{name}", k + 1, panel.t_start, panel.t_end)?;
            files.push(name.into());
        }
        index.flush()?;
        files.push("panels.csv".into());
        Ok(files)
    }

    pub(super) fn run_survival(&self) -> Result<Vec<PathBuf>> {
        let c = &self.config;
        let dir = self.stage_dir(Stage::Survival);
        let state = self.load_state()?;
        let ens = self.load_ensemble()?;
        let exact = survival_exact(&state, &ens.mesh);
        let approx = survival_approx(&ens, c.survival.sigma)?;
        let mut w = create(&dir.join("survival.csv"))?;
        write_survival_csv(&mut w, &ens.mesh, &exact, Some(&approx))?;
        w.flush()?;

        let windows = RecurrenceWindows::new(c.period());
        let pe = analyze_peaks(&ens.mesh, &exact, c.survival.prominence, &windows);
        let pa = analyze_peaks(&ens.mesh, &approx.rescaled, c.survival.prominence, &windows);
        for (report, name) in [(&pe, "peaks_exact.csv"), (&pa, "peaks_approx.csv")] {
            let mut w = create(&dir.join(name))?;
            report.write_csv(&mut w)?;
            w.flush()?;
        }
        let mut text = pe.summary("exact S(t)");
        text += &pa.summary("trajectory estimate (rescaled)");
        text += &format!(
            "estimator at t=0 before rescaling: {}\ninverse participation ratio: {}\n",
            approx.raw[0],
            inverse_participation(&state)
        );
        if let Some(k) = approx.truncated_from {
            text += &format!("some trajectories stop before mesh index {k}\n");
        }

        let mut files: Vec<PathBuf> =
            vec!["survival.csv".into(), "peaks_exact.csv".into(), "peaks_approx.csv".into()];
        let mut w = create(&dir.join("contributors.csv"))?;
        writeln!(w, "peak,t,rank,id,contribution,share")?;
        for (label, con) in contributor_sets(&ens, &pa, c.survival.sigma)? {
            for (rank, &(id, v)) in con.ranked.iter().enumerate() {
                writeln!(w, "{label},{},{},{id},{v},{}", con.t, rank + 1, v / con.total)?;
            }
            let top = con.top(5);
            text += &format!("top contributors at {label} (t = {}): {top:?}\n", con.t);
            let subset = TrajectoryEnsemble {
                mesh: ens.mesh.clone(),
                trajectories: top.iter().map(|&id| ens.trajectories[id].clone()).collect(),
            };
            let name = format!("contributors_{label}.csv");
            let mut t = create(&dir.join(&name))?;
            write_ensemble_csv(&mut t, &subset)?;
            t.flush()?;
            files.push(name.into());
        }
        w.flush()?;
        files.push("contributors.csv".into());
        std::fs::write(dir.join("peaks.txt"), text)?;
        files.push("peaks.txt".into());
        Ok(files)
    }

    pub(super) fn run_scar(&self) -> Result<Vec<PathBuf>> {
        let c = &self.config;
        let dir = self.stage_dir(Stage::Scar);
        let basis = self.load_basis()?;
        let state = self.load_state()?;
        let domain = c.domain();
        let po = diagonal_po(&domain);
        let polyline = po.polyline();
        let width = c.scar.tube_width;
        let grid = &basis.grid;

        let first = build_scar(&state, &basis, c.scar_spec())?;
        let second = build_scar(&state, &basis, first.spec.second_recurrence())?;
        let baseline = build_scar(&state, &basis, ScarSpec { center_energy: first.spec.center_energy, delta_e: f64::INFINITY })?;
        let entry = |scar: &crate::scar::ScarFunction, name: &str| -> Result<ScarEntry> {
            let mut w = create(&dir.join(name))?;
            write_grid_file(&mut w, grid, &scar.intensity, 0.0)?;
            w.flush()?;
            Ok(ScarEntry {
                center_energy: scar.spec.center_energy,
                delta_e: scar.spec.delta_e,
                tube_ratio: tube_localization(grid, &scar.intensity, &polyline, width)?,
                file: name.into(),
            })
        };
        let summary = ScarSummary {
            tube_width: width,
            first: entry(&first, "scar_first.grid")?,
            second: entry(&second, "scar_second.grid")?,
            baseline_tube_ratio: {
                let mut w = create(&dir.join("packet_baseline.grid"))?;
                write_grid_file(&mut w, grid, &baseline.intensity, 0.0)?;
                w.flush()?;
                tube_localization(grid, &baseline.intensity, &polyline, width)?
            },
            overlap: first.overlap(&second),
        };
        write_json(&dir.join("scar.json"), &summary)?;

        let period = po.period(c.coherent().speed());
        let orbit = [(0.0, po.start), (0.5 * period, po.end), (period, po.start)];
        let packet = c.coherent();
        let ray = reflect_ray(&domain, &Ray::new(packet.center(), packet.momentum(), packet.speed()), c.integrator.t_end);
        for (name, vertices) in [("diagonal_po.csv", &orbit[..]), ("classical_ray.csv", &ray.vertices)] {
            let mut w = create(&dir.join(name))?;
            write_polyline_csv(&mut w, vertices)?;
            w.flush()?;
        }
        Ok(vec![
            "scar_first.grid".into(),
            "scar_second.grid".into(),
            "packet_baseline.grid".into(),
            "scar.json".into(),
            "diagonal_po.csv".into(),
            "classical_ray.csv".into(),
        ])
    }
}
