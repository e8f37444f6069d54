//! Experiment configuration: a TOML document with a strict schema
//! (unknown keys are rejected everywhere). The README documents every
//! section; bundled configs under `configs/` cover the shipped examples.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use drbayes_core::prior::PriorSpec;
use drbayes_core::sim::{NormalTwoSourceModel, PoissonModel, RickerModel, SimModel, SummaryChoice};
use drbayes_flows::flow::FlowConfig;
use drbayes_flows::TrainConfig;
use drbayes_infer::PriorClassSpec;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    pub prior_class: PriorClassSection,
    #[serde(default)]
    pub observed: Option<ObservedSection>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub sbc: SbcSection,
    #[serde(default)]
    pub posterior: PosteriorSection,
    #[serde(default)]
    pub normal_analytic: Option<NormalAnalyticSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSection {
    Poisson {
        #[serde(default = "default_n_obs")]
        n_obs: usize,
        summary: SummaryChoice,
        #[serde(default = "default_true")]
        dequantize: bool,
    },
    NormalTwoSource {
        n1: usize,
        n2: usize,
        delta1: f64,
        delta2: f64,
        shrink_k: f64,
    },
    Ricker {
        #[serde(default = "default_t_len")]
        t_len: usize,
        #[serde(default = "default_n0")]
        n0: f64,
        #[serde(default = "default_burn_in")]
        burn_in: usize,
    },
}

fn default_n_obs() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_t_len() -> usize {
    100
}

fn default_n0() -> f64 {
    1.0
}

fn default_burn_in() -> usize {
    50
}

impl ModelSection {
    pub fn build(&self) -> Result<Box<dyn SimModel<f64>>, CliError> {
        match self {
            ModelSection::Poisson {
                n_obs,
                summary,
                dequantize,
            } => Ok(Box::new(PoissonModel {
                n_obs: *n_obs,
                summary: *summary,
                dequantize: *dequantize,
            })),
            ModelSection::NormalTwoSource {
                n1,
                n2,
                delta1,
                delta2,
                shrink_k,
            } => {
                let m = NormalTwoSourceModel {
                    n1: *n1,
                    n2: *n2,
                    delta1: *delta1,
                    delta2: *delta2,
                    shrink_k: *shrink_k,
                };
                m.validate().map_err(CliError::config)?;
                Ok(Box::new(m))
            }
            ModelSection::Ricker { t_len, n0, burn_in } => {
                let m = RickerModel {
                    t_len: *t_len,
                    n0: *n0,
                    burn_in: *burn_in,
                };
                m.validate().map_err(CliError::config)?;
                Ok(Box::new(m))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorClassSection {
    pub r: f64,
    pub lower: PriorSpec<f64>,
    pub upper: PriorSpec<f64>,
}

impl PriorClassSection {
    pub fn to_spec(&self) -> Result<PriorClassSpec<f64>, CliError> {
        let spec = PriorClassSpec {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            r: self.r,
        };
        spec.validate().map_err(CliError::config)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedKind {
    Raw,
    Summaries,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservedSection {
    pub path: PathBuf,
    pub kind: ObservedKind,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub n_sims: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub val_frac: f64,
    pub patience: usize,
    pub coupling_blocks: usize,
    pub hidden: usize,
    pub ar_layers: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let f = FlowConfig::default();
        TrainSection {
            n_sims: 20_000,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            grad_clip: t.grad_clip,
            val_frac: t.val_frac,
            patience: t.patience,
            coupling_blocks: f.coupling_blocks,
            hidden: f.hidden,
            ar_layers: f.ar_layers,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: 0, // overridden per flow pair from the master seed
            grad_clip: self.grad_clip,
            val_frac: self.val_frac,
            patience: self.patience,
        }
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            coupling_blocks: self.coupling_blocks,
            hidden: self.hidden,
            ar_layers: self.ar_layers,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    /// Replicates per side for the predictive checks.
    pub v: usize,
    /// Joint simulation pool for ABC conditioning.
    pub abc_pool: usize,
    /// Conditional replicates kept by the ABC sampler.
    pub abc_keep: usize,
    /// Summary indices of the conditioning block for split checks.
    pub split_a: Vec<usize>,
    /// Summary indices of the checked block for split checks.
    pub split_b: Vec<usize>,
}

impl Default for ChecksSection {
    fn default() -> Self {
        ChecksSection {
            v: 2000,
            abc_pool: 100_000,
            abc_keep: 500,
            split_a: Vec::new(),
            split_b: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbcSection {
    pub enabled: bool,
    pub n_sbc: usize,
    pub m_draws: usize,
    pub level: f64,
    pub grid: usize,
}

impl Default for SbcSection {
    fn default() -> Self {
        SbcSection {
            enabled: true,
            n_sbc: 1000,
            m_draws: 100,
            level: 0.95,
            grid: 100,
        }
    }
}

impl SbcSection {
    pub fn to_config(&self) -> drbayes_infer::SbcConfig {
        drbayes_infer::SbcConfig {
            n_sbc: self.n_sbc,
            m_draws: self.m_draws,
            level: self.level,
            grid: self.grid,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PosteriorSection {
    /// Posterior flow draws per bound for the marginal curves.
    pub n_draws: usize,
    /// Draws behind each anchor-point (posterior mean) estimate.
    pub m_mean: usize,
}

impl Default for PosteriorSection {
    fn default() -> Self {
        PosteriorSection {
            n_draws: 10_000,
            m_mean: 1000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalAnalyticSection {
    pub wbar_min: f64,
    pub wbar_max: f64,
    pub points: usize,
    /// Class ratios to overlay (one curve set per value).
    pub r_values: Vec<f64>,
    #[serde(default)]
    pub zbar_obs: f64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: ExperimentConfig = toml::from_str(&raw)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.prior_class.to_spec()?;
        let model = self.model.build()?;
        if self.prior_class.lower.dim() != model.param_dim() {
            return Err(CliError::Config(format!(
                "prior dimension {} does not match model parameter dimension {}",
                self.prior_class.lower.dim(),
                model.param_dim()
            )));
        }
        if self.train.n_sims == 0 {
            return Err(CliError::Config("train.n_sims must be >= 1".into()));
        }
        if !self.checks.split_a.is_empty() || !self.checks.split_b.is_empty() {
            let split = drbayes_infer::SummarySplit {
                a_idx: self.checks.split_a.clone(),
                b_idx: self.checks.split_b.clone(),
            };
            split
                .validate(model.summary_dim())
                .map_err(CliError::config)?;
        }
        Ok(())
    }
}
