use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stadium_bohm::pipeline::{checklist, Config, Outcome, Pipeline, RunOptions, Stage, StageReport};
use stadium_bohm::validation;

/// Bohmian trajectories of a coherent packet in the desymmetrized stadium.
///
/// Every stage caches its artifacts under the output directory and reruns
/// only when its configuration or upstream results change.
#[derive(Parser)]
#[command(name = "stadium", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Dirichlet eigenpairs up to the cutoff (raised until the packet fits).
    Eigensolve,
    /// Project the coherent state onto the basis.
    Project,
    /// Density grids at the snapshot times.
    Snapshots,
    /// Integrate the trajectory ensemble and split it into panels.
    Trajectories,
    /// Exact and trajectory-estimated survival probability, peaks, contributors.
    Survival,
    /// Scar functions and tube-localization ratios.
    Scar,
    /// Run every stage and print the acceptance checklist.
    ReproducePaper {
        /// Exit with status 2 if any check fails.
        #[arg(long)]
        check: bool,
    },
    /// Run the oracle suites (unit square, free Gaussian).
    Validate,
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Eigenbasis file: adopted if it exists, written there otherwise.
    #[arg(long, global = true)]
    basis: Option<PathBuf>,
    /// Run missing or stale upstream stages.
    #[arg(long, global = true)]
    auto_deps: bool,
    /// Refuse to reuse cached artifacts whose hashes no longer match.
    #[arg(long, global = true)]
    strict: bool,
    /// Print the stage plan without running or writing anything.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Comma-separated snapshot (and panel cut) times.
    #[arg(long, global = true, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
    /// Ensemble size, split evenly over the rings.
    #[arg(long, global = true)]
    n_traj: Option<usize>,
    /// Comma-separated ring radii.
    #[arg(long, global = true, value_delimiter = ',')]
    rings: Option<Vec<f64>>,
    /// Absolute and relative integrator tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    t_end: Option<f64>,
    #[arg(long, global = true)]
    dt_out: Option<f64>,
    /// Seed for the ring phases.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Phase-space kernel width of the trajectory estimate.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Peak prominence threshold, as a fraction of the highest recurrence.
    #[arg(long, global = true)]
    prominence: Option<f64>,
    /// Scar window centre energy.
    #[arg(long, global = true)]
    scar_ec: Option<f64>,
    /// Scar window width.
    #[arg(long, global = true)]
    scar_de: Option<f64>,
    /// Tube half-width for the localization ratio.
    #[arg(long, global = true)]
    tube_width: Option<f64>,
}

impl Common {
    fn config(&self) -> stadium_bohm::Result<Config> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(v) = &self.out {
            c.output_dir = v.clone();
        }
        if let Some(v) = &self.snapshot_times {
            c.snapshots.times = v.clone();
        }
        if let Some(v) = &self.rings {
            c.set_rings(v.clone());
        }
        if let Some(v) = self.n_traj {
            c.set_n_traj(v);
        }
        if let Some(v) = self.tol {
            c.integrator.abs_tol = v;
            c.integrator.rel_tol = v;
        }
        if let Some(v) = self.t_end {
            c.integrator.t_end = v;
        }
        if let Some(v) = self.dt_out {
            c.integrator.dt_out = v;
        }
        if let Some(v) = self.seed {
            c.ensemble.seed = v;
        }
        if let Some(v) = self.sigma {
            c.survival.sigma = v;
        }
        if let Some(v) = self.prominence {
            c.survival.prominence = v;
        }
        if let Some(v) = self.scar_ec {
            c.scar.center_energy = Some(v);
        }
        if let Some(v) = self.scar_de {
            c.scar.delta_e = Some(v);
        }
        if let Some(v) = self.tube_width {
            c.scar.tube_width = v;
        }
        c.validate()?;
        Ok(c)
    }

    fn options(&self) -> RunOptions {
        RunOptions { auto_deps: self.auto_deps, strict: self.strict, dry_run: self.dry_run, basis: self.basis.clone() }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> stadium_bohm::Result<ExitCode> {
    let stage = match &cli.command {
        Command::Eigensolve => Stage::Eigensolve,
        Command::Project => Stage::Project,
        Command::Snapshots => Stage::Snapshots,
        Command::Trajectories => Stage::Trajectories,
        Command::Survival => Stage::Survival,
        Command::Scar => Stage::Scar,
        Command::Validate => return validate(),
        Command::Config => {
            print!("{}", cli.common.config()?.to_toml_string()?);
            return Ok(ExitCode::SUCCESS);
        }
        Command::ReproducePaper { check } => return reproduce(&cli.common, *check),
    };
    let pipeline = Pipeline::new(cli.common.config()?, cli.common.options())?;
    let reports = pipeline.run(stage)?;
    print_reports(&reports);
    if !cli.common.dry_run {
        describe(&pipeline, stage)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn print_reports(reports: &[StageReport]) {
    for r in reports {
        println!("{r}");
    }
}

fn describe(p: &Pipeline, stage: Stage) -> stadium_bohm::Result<()> {
    match stage {
        Stage::Eigensolve => {
            for a in p.load_attempts()? {
                println!(
                    "E_max {:>8.1}: {:>5} modes (Weyl {:.1}), {} unknowns, capture {:.6} [{}]",
                    a.e_max, a.modes, a.weyl, a.unknowns, a.capture, a.source
                );
            }
        }
        Stage::Project => {
            let s = p.load_project()?;
            println!("capture {:.6} over {} modes (E_max {})", s.capture, s.modes, s.e_max);
            println!("<r> = ({:.6}, {:.6}), <p> = ({:.4}, {:.4})", s.position[0], s.position[1], s.momentum[0], s.momentum[1]);
            println!(
                "|P0|^2 = {}, nominal <H> = {:.2}, grid <H> = {:.2}, T = {:.6}",
                s.central_energy, s.nominal_mean_energy, s.mean_energy, s.period
            );
        }
        Stage::Snapshots | Stage::Trajectories => {
            let dir = p.stage_dir(stage);
            let index = if stage == Stage::Snapshots { "snapshots.csv" } else { "panels.csv" };
            print!("{}", fs::read_to_string(dir.join(index))?);
            if stage == Stage::Trajectories {
                let ens = p.load_ensemble()?;
                let (d, _) = ens.min_pair_distance().unwrap_or((f64::INFINITY, 0));
                println!(
                    "{} trajectories: {} ok, {} near-node, {} left domain, {} step failures; minimum pair distance {d:.3e}",
                    ens.len(),
                    ens.count_status("ok"),
                    ens.count_status("near-node-visited"),
                    ens.count_status("left-domain"),
                    ens.count_status("step-failure")
                );
            }
        }
        Stage::Survival => print!("{}", fs::read_to_string(p.stage_dir(stage).join("peaks.txt"))?),
        Stage::Scar => {
            let s = p.load_scar_summary()?;
            for (name, e) in [("first", &s.first), ("second", &s.second)] {
                println!(
                    "{name:<7} scar: E_c {:.2}, dE {:.4}, tube ratio {:.3} ({})",
                    e.center_energy, e.delta_e, e.tube_ratio, e.file
                );
            }
            println!("unwindowed packet tube ratio {:.3}; overlap {:.4}", s.baseline_tube_ratio, s.overlap);
        }
    }
    Ok(())
}

fn validate() -> stadium_bohm::Result<ExitCode> {
    let mut ok = true;
    for r in validation::run_all()? {
        println!("[{}] {}: {}", if r.passed() { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed();
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn reproduce(common: &Common, check: bool) -> stadium_bohm::Result<ExitCode> {
    let mut opts = common.options();
    opts.auto_deps = true;
    let pipeline = Pipeline::new(common.config()?, opts)?;
    let reports = pipeline.run_all()?;
    print_reports(&reports);
    if reports.iter().any(|r| r.outcome == Outcome::Planned) {
        return Ok(ExitCode::SUCCESS);
    }
    let checks = checklist(&pipeline)?;
    let text: String = checks.iter().map(|c| format!("{c}\n")).collect();
    print!("\nacceptance checklist\n{text}");
    fs::write(pipeline.root().join("checklist.txt"), &text)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(if check && failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}
