//! On-disk JSON artifacts. Flat vectors use canonical network order and
//! always travel with their shape.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::elbo::{ElboReport, TrainConfig};
use crate::error::{Result, SviError};
use crate::eval::SparsitySummary;
use crate::net::{NetworkShape, ThetaVector};
use crate::rates::{HolderStructure, RateInputs};
use crate::select::SelectionReport;
use crate::teacher::TeacherNetwork;
use crate::variational::{PriorConfig, VariationalParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherFile {
    pub shape: NetworkShape,
    pub theta: ThetaVector,
    pub mask: Vec<bool>,
    pub nonzero_count: usize,
    pub seed: u64,
    pub sigma_eps: f64,
    pub weight_low: f64,
    pub weight_high: f64,
    pub zero_rate: f64,
}

impl TeacherFile {
    pub fn network(&self) -> Result<TeacherNetwork> {
        let t = TeacherNetwork {
            shape: self.shape.clone(),
            theta: self.theta.clone(),
            mask: self.mask.clone(),
            nonzero_count: self.nonzero_count,
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub shape: NetworkShape,
    pub mu: Vec<f64>,
    pub sigma_raw: Vec<f64>,
    pub nu_raw: Vec<f64>,
    pub seed: u64,
    pub tau: f64,
    #[serde(default)]
    pub standardizer: Option<Standardizer>,
}

impl ParamsFile {
    pub fn new(
        shape: &NetworkShape,
        params: &VariationalParams,
        seed: u64,
        tau: f64,
        standardizer: Option<Standardizer>,
    ) -> Self {
        ParamsFile {
            shape: shape.clone(),
            mu: params.mu.clone(),
            sigma_raw: params.sigma_raw.clone(),
            nu_raw: params.nu_raw.clone(),
            seed,
            tau,
            standardizer,
        }
    }

    pub fn params(&self) -> Result<VariationalParams> {
        self.shape.validate()?;
        let p = VariationalParams::new(self.mu.clone(), self.sigma_raw.clone(), self.nu_raw.clone())?;
        p.check_shape(&self.shape)?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub draws: usize,
    pub eval_seed: u64,
    pub train_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    pub hellinger_sq: Option<f64>,
    pub sparsity: SparsitySummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub shape: NetworkShape,
    pub param_count: usize,
    pub prior: PriorConfig,
    pub train: TrainConfig,
    pub epochs_run: usize,
    pub omega: f64,
    pub elbo: ElboReport,
    pub metrics: EvalMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectOutput {
    pub seed: u64,
    pub prior: PriorConfig,
    pub train: TrainConfig,
    pub selection: SelectionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderOutput {
    pub alpha: f64,
    pub c_n: f64,
    pub f_norm: Option<f64>,
    pub structure: HolderStructure,
    pub approx_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatesOutput {
    pub inputs: RateInputs,
    pub variational_error: f64,
    pub estimation_rate: f64,
    pub holder: Option<HolderOutput>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| SviError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| SviError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
