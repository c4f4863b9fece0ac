//! Experiment specification: a TOML file whose top-level keys and sections
//! mirror [`ExperimentSpec`], with command-line flags layered on top.
//!
//! ```toml
//! replicates = 10
//! K_list = [256, 1024]
//! chi_list = [2.0]
//! output_dir = "out/speed"
//!
//! [sim]
//! dt = 0.01
//! t_end = 150
//! seed = 7
//!
//! [speed]
//! t1 = 50
//! t2 = 150
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gogrow_core::engine::SimConfig;
use gogrow_core::limit_pde::LeftBoundary;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    SpeedSweep,
    Histogram,
    Lineage,
    PdeFront,
    FpEvolve,
    Verify,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::SpeedSweep => "speed-sweep",
            Kind::Histogram => "histogram",
            Kind::Lineage => "lineage",
            Kind::PdeFront => "pde-front",
            Kind::FpEvolve => "fp-evolve",
            Kind::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Informational; the subcommand decides what runs.
    pub kind: Option<Kind>,
    pub replicates: u64,
    /// Defaults to `[sim.k]`.
    #[serde(rename = "K_list")]
    pub k_list: Option<Vec<usize>>,
    /// Defaults to `[sim.chi]`.
    pub chi_list: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    pub sim: SimConfig,
    pub speed: SpeedSection,
    pub histogram: HistogramSection,
    pub lineage: LineageSection,
    pub pde: PdeSection,
    pub fp: FpSection,
    pub verify: VerifySection,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: None,
            replicates: 1,
            k_list: None,
            chi_list: None,
            output_dir: PathBuf::from("out"),
            sim: SimConfig::default(),
            speed: SpeedSection::default(),
            histogram: HistogramSection::default(),
            lineage: LineageSection::default(),
            pde: PdeSection::default(),
            fp: FpSection::default(),
            verify: VerifySection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedSection {
    pub t1: f64,
    pub t2: f64,
}

impl Default for SpeedSection {
    fn default() -> Self {
        Self { t1: 100.0, t2: 200.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramSection {
    pub bin_width: f64,
    pub lo: f64,
    pub hi: f64,
    /// Time of the histogram; defaults to `sim.t_end`.
    pub t: Option<f64>,
}

impl Default for HistogramSection {
    fn default() -> Self {
        Self {
            bin_width: 0.1,
            lo: -5.0,
            hi: 3.0,
            t: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineageSection {
    /// Sampling time; defaults to `sim.t_end`.
    pub t: Option<f64>,
    pub s_max: f64,
    pub s_step: f64,
    /// Selection window in the frame centered at `ξ_t`.
    pub window: [f64; 2],
}

impl Default for LineageSection {
    fn default() -> Self {
        Self {
            t: None,
            s_max: 50.0,
            s_step: 1.0,
            window: [-20.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeInit {
    /// The minimal traveling wave, threshold at 0.
    Profile,
    /// The plateau value on `x <= 0`, zero to the right.
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSection {
    pub chi: Option<f64>,
    pub dx: f64,
    /// Defaults to the largest monotone step times `safety`.
    pub dt: Option<f64>,
    pub safety: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub t_end: f64,
    pub record_dt: f64,
    pub profile_dt: f64,
    pub init: PdeInit,
    pub left: LeftBoundary,
    pub window_shift: bool,
    /// Start of the window used for the logarithmic-delay fit.
    pub fit_from: f64,
}

impl Default for PdeSection {
    fn default() -> Self {
        Self {
            chi: None,
            dx: 0.05,
            dt: None,
            safety: 0.9,
            x_min: -20.0,
            x_max: 60.0,
            t_end: 20.0,
            record_dt: 0.5,
            profile_dt: 5.0,
            init: PdeInit::Profile,
            left: LeftBoundary::Plateau,
            window_shift: true,
            fit_from: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpSection {
    pub chi: Option<f64>,
    pub dz: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub s_end: f64,
    pub record_dt: f64,
    /// Support of the truncated initial profile.
    pub support: [f64; 2],
}

impl Default for FpSection {
    fn default() -> Self {
        Self {
            chi: None,
            dz: 0.02,
            z_min: -40.0,
            z_max: 120.0,
            s_end: 100.0,
            record_dt: 10.0,
            support: [-20.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Criterion names; empty means all.
    pub criteria: Vec<String>,
    /// Defaults to the built-in acceptance seed; `--seed` sets it.
    pub base_seed: Option<u64>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            criteria: Vec::new(),
            base_seed: None,
        }
    }
}

/// Command-line overrides; `None` keeps the config value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub chi: Option<f64>,
    pub k: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub replicates: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Flags replace config keys. `--chi` and `--k` also replace the sweep
    /// lists, so a flag always means "run exactly this value".
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(chi) = o.chi {
            self.sim.chi = chi;
            self.chi_list = None;
            self.pde.chi = None;
            self.fp.chi = None;
        }
        if let Some(k) = o.k {
            self.sim.k = k;
            self.k_list = None;
        }
        if let Some(dt) = o.dt {
            self.sim.dt = dt;
        }
        if let Some(t) = o.t_end {
            self.sim.t_end = t;
        }
        if let Some(seed) = o.seed {
            self.sim.seed = seed;
            self.verify.base_seed = Some(seed);
        }
        if let Some(r) = o.replicates {
            self.replicates = r;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
    }

    pub fn k_values(&self) -> Vec<usize> {
        self.k_list.clone().unwrap_or_else(|| vec![self.sim.k])
    }

    pub fn chi_values(&self) -> Vec<f64> {
        self.chi_list.clone().unwrap_or_else(|| vec![self.sim.chi])
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            bail!("replicates must be at least 1");
        }
        if self.k_values().is_empty() || self.chi_values().is_empty() {
            bail!("K_list and chi_list must not be empty");
        }
        self.sim.validate()?;
        Ok(())
    }
}
