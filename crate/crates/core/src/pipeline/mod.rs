//! Cached pipeline stages, configuration and exports.
//!
//! Each stage writes its artifacts into `<output_dir>/<stage>/` together with
//! a `provenance.json` recording the configuration it read, the digests of
//! its upstream stages and a hash of every artifact. A stage whose inputs are
//! unchanged and whose artifacts still match their hashes is skipped.

mod checklist;
mod config;
mod provenance;
mod stages;

pub use checklist::{checklist, compare_outputs, Check};
pub use config::{
    Config, DomainConfig, EnsembleConfig, GridConfig, IntegratorConfig, PacketConfig, ScarConfig, SnapshotConfig,
    SurvivalConfig, CONFIG_FORMAT_VERSION, DEFAULT_SNAPSHOT_TIMES,
};
pub use provenance::{hash_file, Artifact, Provenance, PROVENANCE_FILE, TOOL_VERSION};
pub use stages::{EigenAttempt, ProjectSummary, ScarSummary};

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::str::FromStr;

use crate::bohm::{output_mesh, read_ensemble_csv, TrajectoryEnsemble};
use crate::packet::SpectralState;
use crate::spectral::{load_basis, EigenBasis};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Eigensolve,
    Project,
    Snapshots,
    Trajectories,
    Survival,
    Scar,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Eigensolve, Stage::Project, Stage::Snapshots, Stage::Trajectories, Stage::Survival, Stage::Scar];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Eigensolve => "eigensolve",
            Stage::Project => "project",
            Stage::Snapshots => "snapshots",
            Stage::Trajectories => "trajectories",
            Stage::Survival => "survival",
            Stage::Scar => "scar",
        }
    }

    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Eigensolve => &[],
            Stage::Project => &[Stage::Eigensolve],
            Stage::Snapshots | Stage::Trajectories | Stage::Scar => &[Stage::Eigensolve, Stage::Project],
            Stage::Survival => &[Stage::Project, Stage::Trajectories],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Run missing or stale upstream stages instead of failing.
    pub auto_deps: bool,
    /// Treat a cached artifact whose hash no longer matches as an error
    /// rather than recomputing it.
    pub strict: bool,
    /// Report what would run without writing anything.
    pub dry_run: bool,
    /// Eigenbasis file location; adopted if it exists, written otherwise.
    pub basis: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    CacheHit,
    /// Dry run: would execute.
    Planned,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub outcome: Outcome,
    pub dir: PathBuf,
    pub digest: Option<String>,
}

impl fmt::Display for StageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.outcome {
            Outcome::Ran => "ran",
            Outcome::CacheHit => "cached",
            Outcome::Planned => "would run",
        };
        write!(f, "{:<13} {:<10} {}", self.stage.name(), what, self.dir.display())
    }
}

pub struct Pipeline {
    config: Config,
    opts: RunOptions,
    verified: RefCell<HashMap<Stage, Option<String>>>,
    basis: RefCell<Option<Rc<EigenBasis>>>,
}

impl Pipeline {
    pub fn new(config: Config, opts: RunOptions) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, opts, verified: RefCell::default(), basis: RefCell::default() })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn options(&self) -> &RunOptions {
        &self.opts
    }

    pub fn root(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root().join(stage.name())
    }

    pub fn basis_path(&self) -> PathBuf {
        self.opts.basis.clone().unwrap_or_else(|| self.stage_dir(Stage::Eigensolve).join("basis.bin"))
    }

    /// Brings `stage` up to date, returning a report for it and for every
    /// upstream stage it had to run or check.
    pub fn run(&self, stage: Stage) -> Result<Vec<StageReport>> {
        let mut reports = Vec::new();
        self.resolve(stage, &mut reports)?;
        Ok(reports)
    }

    /// Runs every stage in dependency order.
    pub fn run_all(&self) -> Result<Vec<StageReport>> {
        let mut reports = Vec::new();
        for stage in Stage::ALL {
            self.resolve(stage, &mut reports)?;
        }
        Ok(reports)
    }

    fn resolve(&self, stage: Stage, reports: &mut Vec<StageReport>) -> Result<Option<String>> {
        if let Some(r) = reports.iter().find(|r| r.stage == stage) {
            return Ok(r.digest.clone());
        }
        let mut upstream = BTreeMap::new();
        let mut pending = false;
        for &dep in stage.deps() {
            let digest = if self.opts.auto_deps {
                self.resolve(dep, reports)?
            } else {
                Some(self.cached_digest(dep)?.ok_or_else(|| Error::MissingUpstream {
                    stage: stage.name().into(),
                    missing: dep.name().into(),
                })?)
            };
            match digest {
                Some(d) => {
                    upstream.insert(dep.name().to_string(), d);
                }
                None => pending = true,
            }
        }
        let dir = self.stage_dir(stage);
        let config = self.stage_config(stage);
        if !pending {
            let key = provenance::stage_key(stage.name(), &config, &upstream);
            if let Some(p) = self.check_cache(stage, &key)? {
                log::info!("{stage}: cache hit");
                reports.push(StageReport { stage, outcome: Outcome::CacheHit, dir, digest: Some(p.digest.clone()) });
                return Ok(Some(p.digest));
            }
        }
        if self.opts.dry_run {
            reports.push(StageReport { stage, outcome: Outcome::Planned, dir, digest: None });
            return Ok(None);
        }
        log::info!("{stage}: running");
        fs::create_dir_all(&dir)?;
        // A stale record must not survive a half-finished rerun.
        let _ = fs::remove_file(dir.join(PROVENANCE_FILE));
        let files = self.execute(stage)?;
        let mut artifacts = Vec::with_capacity(files.len());
        for path in files {
            let sha256 = hash_file(&Provenance::resolve(&dir, &path))?;
            artifacts.push(Artifact { path, sha256 });
        }
        let record = Provenance::new(stage.name(), config, upstream, artifacts);
        record.write(&dir)?;
        self.verified.borrow_mut().insert(stage, Some(record.digest.clone()));
        reports.push(StageReport { stage, outcome: Outcome::Ran, dir, digest: Some(record.digest.clone()) });
        Ok(Some(record.digest))
    }

    /// Digest of a stage whose cached artifacts are current, without running
    /// anything.
    fn cached_digest(&self, stage: Stage) -> Result<Option<String>> {
        if let Some(d) = self.verified.borrow().get(&stage) {
            return Ok(d.clone());
        }
        let mut upstream = BTreeMap::new();
        for &dep in stage.deps() {
            match self.cached_digest(dep)? {
                Some(d) => {
                    upstream.insert(dep.name().to_string(), d);
                }
                None => return Ok(None),
            }
        }
        let key = provenance::stage_key(stage.name(), &self.stage_config(stage), &upstream);
        Ok(self.check_cache(stage, &key)?.map(|p| p.digest))
    }

    fn check_cache(&self, stage: Stage, key: &str) -> Result<Option<Provenance>> {
        let dir = self.stage_dir(stage);
        let Some(p) = Provenance::read(&dir)? else {
            return Ok(None);
        };
        if p.key != key {
            return Ok(None);
        }
        if stage == Stage::Eigensolve {
            let recorded = p.artifacts.first().map(|a| std::path::absolute(Provenance::resolve(&dir, &a.path)));
            let wanted = std::path::absolute(self.basis_path());
            if !matches!((recorded, wanted), (Some(Ok(a)), Ok(b)) if a == b) {
                return Ok(None);
            }
        }
        if let Some(bad) = p.first_mismatch(&dir) {
            if self.opts.strict {
                return Err(Error::CacheTampered(bad));
            }
            log::warn!("{stage}: {} changed since it was written; recomputing", bad.display());
            return Ok(None);
        }
        self.verified.borrow_mut().insert(stage, Some(p.digest.clone()));
        Ok(Some(p))
    }

    /// The configuration values a stage reads.
    fn stage_config(&self, stage: Stage) -> serde_json::Value {
        use serde_json::json;
        let c = &self.config;
        match stage {
            Stage::Eigensolve => json!({ "domain": c.domain, "grid": c.grid, "packet": c.packet }),
            Stage::Project => json!({
                "domain": c.domain,
                "packet": c.packet,
                "capture_threshold": c.grid.capture_threshold,
                "period": c.period(),
            }),
            Stage::Snapshots => json!({ "times": c.snapshots.times }),
            Stage::Trajectories => json!({
                "ensemble": c.ensemble_spec(),
                "integrator": c.integrator,
                "panel_cuts": c.snapshots.times,
            }),
            Stage::Survival => json!({
                "sigma": c.survival.sigma,
                "prominence": c.survival.prominence,
                "period": c.period(),
            }),
            Stage::Scar => json!({
                "spec": c.scar_spec(),
                "tube_width": c.scar.tube_width,
                "period": c.period(),
                "t_end": c.integrator.t_end,
            }),
        }
    }

    fn execute(&self, stage: Stage) -> Result<Vec<PathBuf>> {
        match stage {
            Stage::Eigensolve => self.run_eigensolve(),
            Stage::Project => self.run_project(),
            Stage::Snapshots => self.run_snapshots(),
            Stage::Trajectories => self.run_trajectories(),
            Stage::Survival => self.run_survival(),
            Stage::Scar => self.run_scar(),
        }
    }

    pub fn load_basis(&self) -> Result<Rc<EigenBasis>> {
        if let Some(b) = self.basis.borrow().as_ref() {
            return Ok(b.clone());
        }
        let b = Rc::new(load_basis(self.basis_path())?);
        *self.basis.borrow_mut() = Some(b.clone());
        Ok(b)
    }

    pub fn load_project(&self) -> Result<ProjectSummary> {
        read_json(&self.stage_dir(Stage::Project).join("state.json"))
    }

    pub fn load_state(&self) -> Result<SpectralState> {
        Ok(self.load_project()?.state)
    }

    pub fn load_attempts(&self) -> Result<Vec<EigenAttempt>> {
        read_json(&self.stage_dir(Stage::Eigensolve).join("attempts.json"))
    }

    pub fn load_ensemble(&self) -> Result<TrajectoryEnsemble> {
        let i = &self.config.integrator;
        let mesh = output_mesh(i.t_end, i.dt_out)?;
        let f = File::open(self.stage_dir(Stage::Trajectories).join("ensemble.csv"))?;
        read_ensemble_csv(BufReader::new(f), mesh)
    }

    pub fn load_scar_summary(&self) -> Result<ScarSummary> {
        read_json(&self.stage_dir(Stage::Scar).join("scar.json"))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
