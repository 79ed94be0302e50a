//! End-to-end behaviour of the staged pipeline on a deliberately small
//! problem: caching, invalidation, tamper handling and dry runs.

use std::fs;
use std::path::PathBuf;

use stadium_bohm::pipeline::{compare_outputs, Config, Outcome, Pipeline, Provenance, RunOptions, Stage, StageReport};
use stadium_bohm::Error;

const TINY: &str = r#"
[grid]
points_per_wavelength = 6.0
e_max = 500.0
capture_threshold = 0.99

[packet]
alpha = 10.0
center = [1.0, 0.5]
momentum = [14.0, -7.0]

[ensemble]
rings = [0.01, 0.05]
counts = [4, 4]
seed = 3

[integrator]
abs_tol = 1e-6
rel_tol = 1e-6
t_end = 0.2
dt_out = 0.002

[snapshots]
times = [0.02, 0.05]

[survival]
sigma = 40.0
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("pipeline").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn tiny(name: &str) -> Config {
    let mut c = Config::from_toml_str(TINY).unwrap();
    c.output_dir = scratch(name);
    c
}

fn auto() -> RunOptions {
    RunOptions { auto_deps: true, ..Default::default() }
}

fn outcome(reports: &[StageReport], stage: Stage) -> Outcome {
    reports.iter().find(|r| r.stage == stage).unwrap_or_else(|| panic!("no report for {stage}")).outcome
}

#[test]
fn second_run_is_all_cache_hits() {
    let c = tiny("rerun");
    let first = Pipeline::new(c.clone(), auto()).unwrap().run_all().unwrap();
    assert!(first.iter().all(|r| r.outcome == Outcome::Ran));
    let second = Pipeline::new(c, auto()).unwrap().run_all().unwrap();
    assert_eq!(second.len(), Stage::ALL.len());
    assert!(second.iter().all(|r| r.outcome == Outcome::CacheHit), "{second:?}");
    let digests = |rs: &[StageReport]| rs.iter().map(|r| r.digest.clone()).collect::<Vec<_>>();
    assert_eq!(digests(&first), digests(&second));
}

#[test]
fn changing_sigma_reruns_only_survival() {
    let mut c = tiny("sigma");
    Pipeline::new(c.clone(), auto()).unwrap().run_all().unwrap();
    c.survival.sigma = 60.0;
    let r = Pipeline::new(c, auto()).unwrap().run_all().unwrap();
    for stage in Stage::ALL {
        let expect = if stage == Stage::Survival { Outcome::Ran } else { Outcome::CacheHit };
        assert_eq!(outcome(&r, stage), expect, "{stage}");
    }
}

#[test]
fn changing_seed_invalidates_trajectories_and_survival() {
    let mut c = tiny("seed");
    Pipeline::new(c.clone(), auto()).unwrap().run_all().unwrap();
    c.ensemble.seed = 4;
    let r = Pipeline::new(c, auto()).unwrap().run_all().unwrap();
    assert_eq!(outcome(&r, Stage::Project), Outcome::CacheHit);
    assert_eq!(outcome(&r, Stage::Snapshots), Outcome::CacheHit);
    assert_eq!(outcome(&r, Stage::Trajectories), Outcome::Ran);
    assert_eq!(outcome(&r, Stage::Survival), Outcome::Ran);
}

#[test]
fn tampered_artifact_is_recomputed_or_refused() {
    let c = tiny("tamper");
    Pipeline::new(c.clone(), auto()).unwrap().run(Stage::Survival).unwrap();
    let victim = c.output_dir.join("project").join("coefficients.csv");
    let original = fs::read(&victim).unwrap();
    fs::write(&victim, b"n,energy\n").unwrap();

    let strict = RunOptions { strict: true, ..auto() };
    match Pipeline::new(c.clone(), strict).unwrap().run(Stage::Survival) {
        Err(Error::CacheTampered(p)) => assert_eq!(p, victim),
        other => panic!("expected a tamper error, got {other:?}"),
    }

    let r = Pipeline::new(c.clone(), auto()).unwrap().run(Stage::Survival).unwrap();
    assert_eq!(outcome(&r, Stage::Eigensolve), Outcome::CacheHit);
    assert_eq!(outcome(&r, Stage::Project), Outcome::Ran);
    assert_eq!(fs::read(&victim).unwrap(), original);
    // Regenerated bytes are identical, so downstream stages stay valid.
    assert_eq!(outcome(&r, Stage::Trajectories), Outcome::CacheHit);
    assert_eq!(outcome(&r, Stage::Survival), Outcome::CacheHit);
}

#[test]
fn dry_run_plans_without_writing() {
    let c = tiny("dry");
    let opts = RunOptions { dry_run: true, ..auto() };
    let r = Pipeline::new(c.clone(), opts.clone()).unwrap().run_all().unwrap();
    assert!(r.iter().all(|r| r.outcome == Outcome::Planned));
    assert!(!c.output_dir.exists());

    Pipeline::new(c.clone(), auto()).unwrap().run(Stage::Project).unwrap();
    let before = fs::read_dir(&c.output_dir).unwrap().count();
    let r = Pipeline::new(c.clone(), opts).unwrap().run(Stage::Snapshots).unwrap();
    assert_eq!(outcome(&r, Stage::Project), Outcome::CacheHit);
    assert_eq!(outcome(&r, Stage::Snapshots), Outcome::Planned);
    assert_eq!(fs::read_dir(&c.output_dir).unwrap().count(), before);
}

#[test]
fn missing_upstream_without_auto_deps() {
    let c = tiny("missing");
    match Pipeline::new(c.clone(), RunOptions::default()).unwrap().run(Stage::Project) {
        Err(Error::MissingUpstream { stage, missing }) => {
            assert_eq!(stage, "project");
            assert_eq!(missing, "eigensolve");
        }
        other => panic!("expected MissingUpstream, got {other:?}"),
    }
    Pipeline::new(c.clone(), RunOptions::default()).unwrap().run(Stage::Eigensolve).unwrap();
    let r = Pipeline::new(c, RunOptions::default()).unwrap().run(Stage::Project).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].outcome, Outcome::Ran);
}

#[test]
fn provenance_records_config_and_upstream() {
    let c = tiny("prov");
    Pipeline::new(c.clone(), auto()).unwrap().run(Stage::Survival).unwrap();
    let eig = Provenance::read(&c.output_dir.join("eigensolve")).unwrap().unwrap();
    let proj = Provenance::read(&c.output_dir.join("project")).unwrap().unwrap();
    let surv = Provenance::read(&c.output_dir.join("survival")).unwrap().unwrap();
    assert_eq!(proj.upstream.get("eigensolve"), Some(&eig.digest));
    assert_eq!(surv.upstream.keys().collect::<Vec<_>>(), ["project", "trajectories"]);
    assert!(surv.artifacts.iter().any(|a| a.path.ends_with("survival.csv")));
    assert_eq!(surv.first_mismatch(&c.output_dir.join("survival")), None);
    assert_eq!(surv.config["sigma"], 40.0);
}

#[test]
fn shared_basis_file_is_adopted() {
    let a = tiny("basis_a");
    let b = tiny("basis_b");
    Pipeline::new(a.clone(), auto()).unwrap().run(Stage::Eigensolve).unwrap();
    let basis = a.output_dir.join("eigensolve").join("basis.bin");
    let opts = RunOptions { basis: Some(basis.clone()), ..auto() };
    let r = Pipeline::new(b.clone(), opts).unwrap().run(Stage::Project).unwrap();
    assert_eq!(outcome(&r, Stage::Project), Outcome::Ran);
    assert!(!b.output_dir.join("eigensolve").join("basis.bin").exists());
    let pa = Pipeline::new(a, auto()).unwrap();
    pa.run(Stage::Project).unwrap();
    let pb = Pipeline::new(b, RunOptions { basis: Some(basis), ..auto() }).unwrap();
    assert_eq!(pa.load_project().unwrap().capture, pb.load_project().unwrap().capture);
}

#[test]
fn clean_runs_are_byte_identical() {
    let a = tiny("det_a");
    let b = tiny("det_b");
    Pipeline::new(a.clone(), auto()).unwrap().run_all().unwrap();
    Pipeline::new(b.clone(), auto()).unwrap().run_all().unwrap();
    let check = compare_outputs(&a.output_dir, &b.output_dir).unwrap();
    assert!(check.passed, "{check}");
}

#[test]
fn config_round_trips_through_toml() {
    let c = tiny("roundtrip");
    let text = c.to_toml_string().unwrap();
    assert_eq!(Config::from_toml_str(&text).unwrap(), c);
    assert!(Config::from_toml_str("[grid]\nbogus = 1\n").is_err());
}
