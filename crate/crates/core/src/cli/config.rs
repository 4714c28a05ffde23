//! Run configuration: JSON file schema, flag overrides, and resolution
//! into validated library configs. Precedence is flags, then file, then
//! built-in defaults. The seed additionally falls back to `SVI_SEED`.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::data::TargetColumn;
use crate::elbo::{OptimizerKind, TrainConfig};
use crate::error::{Result, SviError};
use crate::eval::DEFAULT_DRAWS;
use crate::rates::RateInputs;
use crate::rng::derive_seed;
use crate::select::WidthCandidate;
use crate::variational::{EntropyUnits, PriorConfig};

pub const SEED_ENV: &str = "SVI_SEED";

/// Stream under the run seed for evaluation draws when none is configured.
const STREAM_EVAL: u64 = 2000;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub sigma0: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_s: Option<f64>,
    pub sigma_eps: Option<f64>,
    pub tau: Option<f64>,
    pub entropy_units: Option<EntropyUnits>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub mc_samples: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<OptimizerKind>,
    pub early_stop_tol: Option<f64>,
    pub early_stop_window: Option<usize>,
    pub eval_passes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherSection {
    pub input_dim: usize,
    pub widths: Vec<usize>,
    pub weight_low: f64,
    pub weight_high: f64,
    pub zero_rate: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Falls back to the prior's `sigma_eps`.
    pub sigma_eps: Option<f64>,
}

impl Default for TeacherSection {
    fn default() -> Self {
        TeacherSection {
            input_dim: 20,
            widths: vec![10, 10],
            weight_low: 0.5,
            weight_high: 1.5,
            zero_rate: 0.5,
            n_train: 10_000,
            n_test: 1_000,
            sigma_eps: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Column name or integer index; negative indices count from the end.
    pub target: Option<String>,
    #[serde(default)]
    pub standardize: bool,
    /// Teacher file enabling the Hellinger diagnostic.
    pub teacher: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub draws: Option<usize>,
    pub seed: Option<u64>,
    pub params: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierSection {
    pub values: Vec<u64>,
    pub hidden_layers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSection {
    pub alpha: f64,
    #[serde(default = "one")]
    pub c_n: f64,
    pub f_norm: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub depth: u32,
    pub width: f64,
    pub sparsity: f64,
    pub n: f64,
    pub input_dim: u32,
    pub bound: Option<f64>,
    pub delta: Option<f64>,
    pub constant: Option<f64>,
    #[serde(default)]
    pub holder: Option<HolderSection>,
}

impl RatesSection {
    pub fn inputs(&self) -> RateInputs {
        let mut inp = RateInputs::new(self.depth, self.width, self.sparsity, self.n, self.input_dim);
        inp.bound = self.bound.unwrap_or(inp.bound);
        inp.delta = self.delta.unwrap_or(inp.delta);
        inp.constant = self.constant.unwrap_or(inp.constant);
        inp.alpha = self.holder.as_ref().map(|h| h.alpha);
        inp
    }
}

/// The on-disk config document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallel: Option<usize>,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub teacher: TeacherSection,
    #[serde(default)]
    pub data: DataSection,
    pub widths: Option<Vec<usize>>,
    pub candidates: Option<Vec<Vec<usize>>>,
    pub multipliers: Option<MultiplierSection>,
    #[serde(default)]
    pub eval: EvalSection,
    pub rates: Option<RatesSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SviError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SviError::Config(e.to_string()))
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed (falls back to the config file, then SVI_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for candidate training.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub lambda_s: Option<f64>,
    #[arg(long, global = true)]
    pub sigma0: Option<f64>,
    #[arg(long, global = true)]
    pub sigma_eps: Option<f64>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Hidden widths for `train`, e.g. `10,10`.
    #[arg(long, global = true)]
    pub widths: Option<String>,
    /// Candidate width lists for `select`, e.g. `2,2;4,4;8,8`.
    #[arg(long, global = true)]
    pub candidates: Option<String>,
    /// Params file for `eval`.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
}

fn parse_widths(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|_| SviError::Config(format!("bad width {w:?} in {s:?}")))
        })
        .collect()
}

fn parse_candidates(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';').filter(|c| !c.trim().is_empty()).map(parse_widths).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeacherSpec {
    pub input_dim: usize,
    pub widths: Vec<usize>,
    pub weight_low: f64,
    pub weight_high: f64,
    pub zero_rate: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub sigma_eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSpec {
    pub draws: usize,
    pub seed: u64,
    pub params: Option<PathBuf>,
}

/// Fully resolved, validated configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub seed: u64,
    pub out: PathBuf,
    pub parallel: usize,
    pub prior: PriorConfig,
    pub train: TrainConfig,
    pub teacher: TeacherSpec,
    pub data: DataSection,
    pub widths: Option<Vec<usize>>,
    pub candidates: Vec<WidthCandidate>,
    pub eval: EvalSpec,
    pub rates: Option<RatesSection>,
}

impl Resolved {
    pub fn target(&self) -> TargetColumn {
        TargetColumn::parse(self.data.target.as_deref().unwrap_or("-1"))
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| SviError::Config(format!("{SEED_ENV}={v:?} is not a u64"))),
        Err(_) => Ok(None),
    }
}

pub fn resolve(file: RunConfig, flags: &Overrides) -> Result<Resolved> {
    let seed = match flags.seed.or(file.seed) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };

    let d = PriorConfig::default();
    let p = &file.prior;
    let prior = PriorConfig {
        sigma0: flags.sigma0.or(p.sigma0).unwrap_or(d.sigma0),
        lambda: flags.lambda.or(p.lambda).unwrap_or(d.lambda),
        lambda_s: flags.lambda_s.or(p.lambda_s).unwrap_or(d.lambda_s),
        sigma_eps: flags.sigma_eps.or(p.sigma_eps).unwrap_or(d.sigma_eps),
        tau: flags.tau.or(p.tau).unwrap_or(d.tau),
        entropy_units: p.entropy_units.unwrap_or(d.entropy_units),
    };
    prior.validate()?;

    let d = TrainConfig::default();
    let t = &file.train;
    let train = TrainConfig {
        batch_size: flags.batch_size.or(t.batch_size).unwrap_or(d.batch_size),
        mc_samples: t.mc_samples.unwrap_or(d.mc_samples),
        epochs: flags.epochs.or(t.epochs).unwrap_or(d.epochs),
        learning_rate: flags.lr.or(t.learning_rate).unwrap_or(d.learning_rate),
        optimizer: t.optimizer.unwrap_or(d.optimizer),
        seed,
        early_stop_tol: t.early_stop_tol.unwrap_or(d.early_stop_tol),
        early_stop_window: t.early_stop_window.unwrap_or(d.early_stop_window),
        eval_passes: t.eval_passes.unwrap_or(d.eval_passes),
    };
    train.validate()?;

    let ts = &file.teacher;
    let teacher = TeacherSpec {
        input_dim: ts.input_dim,
        widths: ts.widths.clone(),
        weight_low: ts.weight_low,
        weight_high: ts.weight_high,
        zero_rate: ts.zero_rate,
        n_train: ts.n_train,
        n_test: ts.n_test,
        sigma_eps: flags.sigma_eps.or(ts.sigma_eps).unwrap_or(prior.sigma_eps),
    };
    if teacher.input_dim == 0 || teacher.widths.contains(&0) {
        return Err(SviError::Config("teacher dims must be positive".into()));
    }
    if teacher.n_train == 0 || teacher.n_test == 0 {
        return Err(SviError::Config("teacher n_train and n_test must be positive".into()));
    }
    if !(teacher.weight_low < teacher.weight_high) {
        return Err(SviError::Config("teacher weight_low must be below weight_high".into()));
    }
    if !(0.0..=1.0).contains(&teacher.zero_rate) {
        return Err(SviError::Config("teacher zero_rate must lie in [0,1]".into()));
    }
    if !(teacher.sigma_eps >= 0.0) {
        return Err(SviError::Config("teacher sigma_eps must be nonnegative".into()));
    }

    let widths = match &flags.widths {
        Some(s) => Some(parse_widths(s)?),
        None => file.widths.clone(),
    };
    if let Some(w) = &widths {
        if w.is_empty() || w.contains(&0) {
            return Err(SviError::Config(format!("widths must be positive, got {w:?}")));
        }
    }

    let mut candidates = Vec::new();
    let lists = match &flags.candidates {
        Some(s) => Some(parse_candidates(s)?),
        None => file.candidates.clone(),
    };
    if let Some(lists) = lists {
        for w in lists {
            candidates.push(WidthCandidate::explicit(w).map_err(|e| SviError::Config(e.to_string()))?);
        }
    }
    if flags.candidates.is_none() {
        if let Some(m) = &file.multipliers {
            let p = file.teacher.input_dim;
            for &v in &m.values {
                candidates.push(
                    WidthCandidate::from_multiplier(v, p, m.hidden_layers)
                        .map_err(|e| SviError::Config(e.to_string()))?,
                );
            }
        }
    }

    let parallel = flags.parallel.or(file.parallel).unwrap_or(1);
    if parallel == 0 {
        return Err(SviError::Config("parallel must be at least 1".into()));
    }
    let draws = file.eval.draws.unwrap_or(DEFAULT_DRAWS);
    if draws == 0 {
        return Err(SviError::Config("eval draws must be at least 1".into()));
    }

    Ok(Resolved {
        seed,
        out: flags
            .out
            .clone()
            .or(file.out.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
        parallel,
        prior,
        train,
        teacher,
        data: file.data.clone(),
        widths,
        candidates,
        eval: EvalSpec {
            draws,
            seed: file.eval.seed.unwrap_or_else(|| derive_seed(seed, STREAM_EVAL)),
            params: flags.params.clone().or(file.eval.params.clone()),
        },
        rates: file.rates.clone(),
    })
}

/// Loads the config named by `--config` (if any) and resolves it.
pub fn load(flags: &Overrides) -> Result<Resolved> {
    let file = match &flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    resolve(file, flags)
}
