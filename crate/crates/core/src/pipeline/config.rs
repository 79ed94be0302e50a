use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bohm::{EnsembleSpec, IntegrationOptions, Tolerances};
use crate::geometry::{diagonal_po, Domain};
use crate::packet::{CoherentParams, DEFAULT_CAPTURE_THRESHOLD};
use crate::scar::ScarSpec;
use crate::spectral::DEFAULT_MEMORY_BUDGET_MB;
use crate::survival::{DEFAULT_PROMINENCE, DEFAULT_SIGMA};
use crate::{Error, Result};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Snapshot times; also the cut times of the trajectory panels.
pub const DEFAULT_SNAPSHOT_TIMES: [f64; 8] = [0.012, 0.023, 0.034, 0.045, 0.056, 0.07, 0.085, 0.1];

/// Full run configuration. Every section may be omitted; unknown keys are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub format_version: u32,
    pub output_dir: PathBuf,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub packet: PacketConfig,
    pub ensemble: EnsembleConfig,
    pub integrator: IntegratorConfig,
    pub snapshots: SnapshotConfig,
    pub survival: SurvivalConfig,
    pub scar: ScarConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            output_dir: PathBuf::from("out"),
            domain: DomainConfig::default(),
            grid: GridConfig::default(),
            packet: PacketConfig::default(),
            ensemble: EnsembleConfig::default(),
            integrator: IntegratorConfig::default(),
            snapshots: SnapshotConfig::default(),
            survival: SurvivalConfig::default(),
            scar: ScarConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub straight_length: f64,
    pub radius: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        let d = Domain::default();
        Self { straight_length: d.straight_length, radius: d.radius }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub points_per_wavelength: f64,
    /// First cutoff tried; raised by `raise_factor` while the packet's
    /// captured norm is below `capture_threshold`.
    pub e_max: f64,
    pub capture_threshold: f64,
    pub raise_factor: f64,
    pub max_attempts: usize,
    pub memory_budget_mb: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points_per_wavelength: 8.0,
            e_max: 3456.0,
            capture_threshold: DEFAULT_CAPTURE_THRESHOLD,
            raise_factor: 1.25,
            max_attempts: 4,
            memory_budget_mb: DEFAULT_MEMORY_BUDGET_MB,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacketConfig {
    pub alpha: f64,
    pub center: [f64; 2],
    pub momentum: [f64; 2],
}

impl Default for PacketConfig {
    fn default() -> Self {
        let p = CoherentParams::default();
        Self { alpha: p.alpha, center: p.center, momentum: p.momentum }
    }
}

/// Rings are centred on the packet centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub rings: Vec<f64>,
    pub counts: Vec<usize>,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        let e = EnsembleSpec::default();
        Self { rings: e.rings, counts: e.counts, seed: e.seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub t_end: f64,
    pub dt_out: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        let o = IntegrationOptions::default();
        Self { abs_tol: o.tol.abs, rel_tol: o.tol.rel, t_end: o.t_end, dt_out: o.dt_out, max_steps: o.max_steps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnapshotConfig {
    pub times: Vec<f64>,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        Self { times: DEFAULT_SNAPSHOT_TIMES.to_vec() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurvivalConfig {
    pub sigma: f64,
    /// Peak threshold as a fraction of the highest recurrence.
    pub prominence: f64,
    /// Recurrence period; the diagonal orbit's period when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self { sigma: DEFAULT_SIGMA, prominence: DEFAULT_PROMINENCE, period: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScarConfig {
    /// Window centre; the packet's central energy when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_energy: Option<f64>,
    /// Window width; `2 pi / (n_periods T)` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_e: Option<f64>,
    pub n_periods: f64,
    pub tube_width: f64,
}

impl Default for ScarConfig {
    fn default() -> Self {
        Self { center_energy: None, delta_e: None, n_periods: 2.0, tube_width: 0.1 }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.format_version != CONFIG_FORMAT_VERSION {
            return bad(format!("format_version {} unsupported (expected {CONFIG_FORMAT_VERSION})", self.format_version));
        }
        let d = &self.domain;
        if !(d.straight_length >= 0.0 && d.radius > 0.0) {
            return bad("domain needs straight_length >= 0 and radius > 0".into());
        }
        let g = &self.grid;
        if !(g.e_max > 0.0) || !(g.raise_factor > 1.0) || g.max_attempts == 0 {
            return bad("grid needs e_max > 0, raise_factor > 1 and max_attempts >= 1".into());
        }
        if !(0.0..=1.0).contains(&g.capture_threshold) {
            return bad(format!("capture_threshold {} outside [0, 1]", g.capture_threshold));
        }
        if !(self.packet.alpha > 0.0) {
            return bad("packet alpha must be positive".into());
        }
        self.coherent().validate(&self.domain())?;
        let i = &self.integrator;
        if !(i.abs_tol > 0.0 && i.rel_tol > 0.0 && i.t_end > 0.0 && i.dt_out > 0.0 && i.dt_out <= i.t_end) {
            return bad("integrator needs positive tolerances and 0 < dt_out <= t_end".into());
        }
        let times = &self.snapshots.times;
        if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|&t| !(0.0..=i.t_end).contains(&t)) {
            return bad(format!("snapshot times must ascend within [0, {}]", i.t_end));
        }
        let s = &self.survival;
        if !(s.sigma > 0.0) || !(0.0..1.0).contains(&s.prominence) || s.period.is_some_and(|p| !(p > 0.0)) {
            return bad("survival needs sigma > 0, prominence in [0, 1) and period > 0".into());
        }
        let sc = &self.scar;
        if !(sc.n_periods > 0.0 && sc.tube_width > 0.0) || sc.delta_e.is_some_and(|v| !(v > 0.0)) {
            return bad("scar needs n_periods, tube_width and delta_e positive".into());
        }
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        Domain::new(self.domain.straight_length, self.domain.radius)
    }

    pub fn coherent(&self) -> CoherentParams {
        CoherentParams { alpha: self.packet.alpha, center: self.packet.center, momentum: self.packet.momentum }
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        let e = &self.ensemble;
        EnsembleSpec { center: self.packet.center, rings: e.rings.clone(), counts: e.counts.clone(), seed: e.seed }
    }

    pub fn integration(&self) -> IntegrationOptions {
        let i = &self.integrator;
        IntegrationOptions {
            tol: Tolerances { abs: i.abs_tol, rel: i.rel_tol },
            t_end: i.t_end,
            dt_out: i.dt_out,
            max_steps: i.max_steps,
        }
    }

    /// Recurrence period: configured, or the diagonal orbit at the packet's
    /// speed.
    pub fn period(&self) -> f64 {
        self.survival.period.unwrap_or_else(|| diagonal_po(&self.domain()).period(self.coherent().speed()))
    }

    pub fn scar_spec(&self) -> ScarSpec {
        let ec = self.scar.center_energy.unwrap_or_else(|| self.coherent().central_energy());
        let base = ScarSpec::from_window(ec, self.scar.n_periods, self.period());
        ScarSpec { center_energy: ec, delta_e: self.scar.delta_e.unwrap_or(base.delta_e) }
    }

    /// Sets the ensemble size, splitting it evenly over the rings.
    pub fn set_n_traj(&mut self, n: usize) {
        let spec = self.ensemble_spec().with_total(n);
        self.ensemble.counts = spec.counts;
    }

    /// Replaces the ring radii, keeping the total size.
    pub fn set_rings(&mut self, rings: Vec<f64>) {
        let total: usize = self.ensemble.counts.iter().sum();
        self.ensemble.rings = rings;
        self.set_n_traj(total);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        c.validate().unwrap();
        let text = c.to_toml_string().unwrap();
        assert_eq!(Config::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c = Config::from_toml_str("[survival]\nsigma = 100.0\n").unwrap();
        assert_eq!(c.survival.sigma, 100.0);
        assert_eq!(c.grid, GridConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml_str("[survival]\nsigmaa = 1.0\n").is_err());
        assert!(Config::from_toml_str("colour = 1\n").is_err());
        assert!(Config::from_toml_str("[grids]\n").is_err());
    }

    #[test]
    fn derived_defaults() {
        let c = Config::default();
        assert!((c.period() - 2.0 * 5f64.sqrt() / 96.0).abs() < 1e-15);
        let s = c.scar_spec();
        assert!((s.center_energy - 2304.0).abs() < 1e-9);
        assert!((s.delta_e * 2.0 * c.period() - std::f64::consts::TAU).abs() < 1e-12);
    }

    #[test]
    fn ensemble_resizing() {
        let mut c = Config::default();
        c.set_n_traj(10);
        assert_eq!(c.ensemble.counts, vec![3, 3, 2, 2]);
        c.set_rings(vec![0.01, 0.02]);
        assert_eq!(c.ensemble.counts, vec![5, 5]);
    }

    #[test]
    fn invalid_values() {
        let mut c = Config::default();
        c.snapshots.times = vec![0.05, 0.02];
        assert!(c.validate().is_err());
        let mut c = Config::default();
        c.packet.center = [5.0, 5.0];
        assert!(c.validate().is_err());
    }
}
