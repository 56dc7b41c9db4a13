//! Run configuration: an optional TOML file whose values are overridden by
//! command-line flags and `LOBMM_*` environment variables.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use lobmm::backtest::{BootstrapConfig, PipelineConfig, Policy, DEFAULT_LAMBDA};
use lobmm::estimation::{EstimationConfig, WeightScheme};
use lobmm::model::TimeGrid;
use lobmm::simulator::{RegimeWalk, SyntheticDay};

use crate::Exit;

pub const DEFAULT_SEED: u64 = 20_190_101;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Model parameter file used by `solve` and `simulate`.
    pub params: Option<PathBuf>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub surface: SurfaceSection,
    #[serde(default)]
    pub synthetic: SyntheticSection,
    pub data: Option<DataSection>,
    #[serde(default)]
    pub pipeline: PipelineSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub paths: usize,
    /// Initial midprice in currency.
    pub s0: f64,
    /// Standard deviation of the per-step price innovation.
    pub innovation_std: f64,
    /// Number of leading paths whose step logs are written.
    pub episodes: usize,
    /// Clip fills at zero when a quote lies beyond the reservation price.
    pub truncate_fills: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            paths: 10_000,
            s0: 100.0,
            innovation_std: 0.01,
            episodes: 1,
            truncate_fills: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceSection {
    pub pi_joint: Vec<f64>,
    pub inventory: Vec<f64>,
    /// Write every `stride`-th step plus the last one.
    pub stride: usize,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        Self {
            pi_joint: vec![0.0, 0.05, 0.1, 0.2],
            inventory: vec![0.0],
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub days: usize,
    pub steps: usize,
    pub mu_c: f64,
    pub sd_c: f64,
    pub mu_p: f64,
    pub sd_p: f64,
    pub joint_share: f64,
    pub ladder_levels: usize,
    pub walk: Option<RegimeWalk>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            days: 21,
            steps: 19_800,
            mu_c: 100.0,
            sd_c: 20.0,
            mu_p: 4.0,
            sd_p: 1.0,
            joint_share: 0.3,
            ladder_levels: 12,
            walk: None,
        }
    }
}

impl SyntheticSection {
    pub fn build(&self) -> anyhow::Result<SyntheticDay> {
        use lobmm::simulator::SideDemand;
        let d = SideDemand::lognormal(
            self.mu_c,
            self.sd_c * self.sd_c,
            self.mu_p,
            self.sd_p * self.sd_p,
        );
        let mut day = SyntheticDay::u_shaped(self.steps, d.clone(), d, self.joint_share);
        day.ladder_levels = self.ladder_levels;
        if let Some(w) = &self.walk {
            day.walk = *w;
        }
        day.validate().map_err(|e| Exit::Invalid(e.to_string()))?;
        Ok(day)
    }
}

/// Recorded event files, one per day, read in file-name order.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dir: PathBuf,
    pub steps: usize,
    #[serde(default = "default_step_seconds")]
    pub step_seconds: f64,
    /// Session open in nanoseconds after midnight.
    #[serde(default = "default_session_start")]
    pub session_start_ns: i64,
    pub tick_size: f64,
}

fn default_step_seconds() -> f64 {
    1.0
}

fn default_session_start() -> i64 {
    lobmm::simulator::SESSION_OPEN_NS
}

impl DataSection {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            session_start_ns: self.session_start_ns,
            ..TimeGrid::new(self.steps, self.step_seconds)
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub window: usize,
    pub lambda: f64,
    pub policies: Option<Vec<String>>,
    pub k_levels: usize,
    pub estimation_levels: usize,
    pub uniform_weights: bool,
    pub max_gap_ns: Option<i64>,
    pub break_quantile: f64,
    pub bootstrap_level: f64,
    pub bootstrap_m: Option<usize>,
    pub bootstrap_replicates: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            window: p.window,
            lambda: DEFAULT_LAMBDA,
            policies: None,
            k_levels: p.k_levels,
            estimation_levels: p.estimation.levels,
            uniform_weights: false,
            max_gap_ns: None,
            break_quantile: p.break_quantile,
            bootstrap_level: p.bootstrap.level,
            bootstrap_m: None,
            bootstrap_replicates: p.bootstrap.replicates,
        }
    }
}

pub fn parse_policies(list: &[String]) -> anyhow::Result<Vec<Policy>> {
    list.iter()
        .map(|s| Policy::parse(s).map_err(|e| Exit::Invalid(e.to_string()).into()))
        .collect()
}

impl PipelineSection {
    pub fn to_config(&self, seed: u64) -> anyhow::Result<PipelineConfig> {
        let policies = match &self.policies {
            Some(list) => parse_policies(list)?,
            None => Policy::standard_set(),
        };
        if policies.is_empty() {
            return Err(Exit::Invalid("policy list is empty".into()).into());
        }
        if self.window == 0 {
            return Err(Exit::Invalid("window must be at least 1".into()).into());
        }
        Ok(PipelineConfig {
            window: self.window,
            lambda: self.lambda,
            policies,
            estimation: EstimationConfig {
                levels: self.estimation_levels,
                weights: if self.uniform_weights {
                    WeightScheme::Uniform
                } else {
                    WeightScheme::Distance
                },
            },
            k_levels: self.k_levels,
            max_gap_ns: self.max_gap_ns,
            break_quantile: self.break_quantile,
            bootstrap: BootstrapConfig {
                level: self.bootstrap_level,
                m: self.bootstrap_m,
                replicates: self.bootstrap_replicates,
                seed,
            },
        })
    }
}

pub fn require_file(path: &Path) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Exit::Missing(path.to_path_buf()).into())
    }
}

pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    require_file(path)?;
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| Exit::Invalid(format!("{}: {e}", path.display())).into())
}
