//! Penalized-ELBO width selection.
//!
//! Each candidate architecture is trained independently; its score is the
//! final ELBO plus the log width prior. The highest score wins, ties going
//! to the candidate with fewer parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::RegressionDataset;
use crate::elbo::TrainConfig;
use crate::error::{Result, SviError};
use crate::eval::{posterior_mean_predict, rmse, sparsity_summary, SparsitySummary, DEFAULT_DRAWS};
use crate::net::NetworkShape;
use crate::rng::{derive_seed, seeded};
use crate::train::{train_width, TrainOutcome};
use crate::variational::{log_prior_width, PriorConfig, VariationalParams};

/// Stream used for the test-set predictions of each candidate.
const STREAM_PREDICT: u64 = 17;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthCandidate {
    pub widths: Vec<usize>,
    /// Set when the widths were generated as `12 p N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<u64>,
}

impl WidthCandidate {
    pub fn explicit(widths: Vec<usize>) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(SviError::Argument(format!(
                "candidate widths must be non-empty and positive, got {widths:?}"
            )));
        }
        Ok(WidthCandidate {
            widths,
            multiplier: None,
        })
    }

    /// `hidden_layers` layers of width `w` each.
    pub fn square(w: usize, hidden_layers: usize) -> Result<Self> {
        Self::explicit(vec![w; hidden_layers])
    }

    /// `hidden_layers` layers of width `12 p N`.
    pub fn from_multiplier(multiplier: u64, input_dim: usize, hidden_layers: usize) -> Result<Self> {
        if multiplier == 0 {
            return Err(SviError::Argument("width multiplier must be positive".into()));
        }
        let mut c = Self::explicit(vec![12 * input_dim * multiplier as usize; hidden_layers])?;
        c.multiplier = Some(multiplier);
        Ok(c)
    }

    /// The `N` entering the width prior: the multiplier when there is one,
    /// otherwise the widest hidden layer.
    pub fn prior_width(&self) -> u64 {
        self.multiplier
            .unwrap_or_else(|| self.widths.iter().copied().max().unwrap_or(1) as u64)
    }

    pub fn shape(&self, input_dim: usize) -> Result<NetworkShape> {
        NetworkShape::regression(input_dim, self.widths.clone())
    }
}

pub fn penalized_elbo(omega: f64, width: u64, lambda: f64) -> Result<f64> {
    Ok(omega + log_prior_width(width, lambda)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub index: usize,
    pub candidate: WidthCandidate,
    pub param_count: usize,
    pub seed: u64,
    pub log_prior: f64,
    pub omega: Option<f64>,
    pub omega_p: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub l3: Option<f64>,
    pub epochs_run: Option<usize>,
    pub test_rmse: Option<f64>,
    pub sparsity: Option<SparsitySummary>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub per_candidate: Vec<CandidateResult>,
    pub selected: usize,
    pub seed: u64,
}

impl SelectionReport {
    pub fn winner(&self) -> &CandidateResult {
        &self.per_candidate[self.selected]
    }
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub report: SelectionReport,
    pub shape: NetworkShape,
    pub params: VariationalParams,
}

/// Seed of candidate `index` under run seed `seed`.
pub fn candidate_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

/// Trains every candidate on a pool of `parallel` worker threads and picks
/// the penalized-ELBO maximizer. Results do not depend on `parallel`.
pub fn select_width(
    data: &RegressionDataset,
    candidates: &[WidthCandidate],
    prior: &PriorConfig,
    cfg: &TrainConfig,
    test: Option<&RegressionDataset>,
    parallel: usize,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(SviError::Argument("no width candidates given".into()));
    }
    let shapes = candidates
        .iter()
        .map(|c| c.shape(data.n_features))
        .collect::<Result<Vec<_>>>()?;
    let run = |i: usize| -> Result<TrainOutcome> {
        let cfg = TrainConfig {
            seed: candidate_seed(cfg.seed, i),
            ..cfg.clone()
        };
        train_width(data, &shapes[i], prior, &cfg)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| SviError::Argument(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<Result<TrainOutcome>> =
        pool.install(|| (0..candidates.len()).into_par_iter().map(run).collect());
    assemble(data, candidates, &shapes, prior, cfg, test, outcomes)
}

/// Deterministic reduction of per-candidate training outcomes, in
/// candidate order.
pub fn assemble(
    _data: &RegressionDataset,
    candidates: &[WidthCandidate],
    shapes: &[NetworkShape],
    prior: &PriorConfig,
    cfg: &TrainConfig,
    test: Option<&RegressionDataset>,
    outcomes: Vec<Result<TrainOutcome>>,
) -> Result<Selection> {
    let mut rows = Vec::with_capacity(candidates.len());
    let mut params: Vec<Option<VariationalParams>> = Vec::with_capacity(candidates.len());
    for (i, (cand, outcome)) in candidates.iter().zip(outcomes).enumerate() {
        let seed = candidate_seed(cfg.seed, i);
        let log_prior = log_prior_width(cand.prior_width(), prior.lambda)?;
        let mut row = CandidateResult {
            index: i,
            candidate: cand.clone(),
            param_count: shapes[i].param_count(),
            seed,
            log_prior,
            omega: None,
            omega_p: None,
            l1: None,
            l2: None,
            l3: None,
            epochs_run: None,
            test_rmse: None,
            sparsity: None,
            error: None,
        };
        match outcome {
            Ok(out) => {
                let omega = out.report.omega();
                row.omega = Some(omega);
                row.omega_p = Some(omega + log_prior);
                row.l1 = Some(out.report.l1);
                row.l2 = Some(out.report.l2);
                row.l3 = Some(out.report.l3);
                row.epochs_run = Some(out.epochs_run);
                row.sparsity = Some(sparsity_summary(&out.params));
                if let Some(test) = test {
                    let pred = posterior_mean_predict(
                        &out.params,
                        &shapes[i],
                        &test.x,
                        DEFAULT_DRAWS,
                        prior.tau,
                        &mut seeded(derive_seed(seed, STREAM_PREDICT)),
                    )?;
                    row.test_rmse = Some(rmse(&pred, &test.y)?);
                }
                params.push(Some(out.params));
            }
            Err(e) => {
                row.error = Some(e.to_string());
                params.push(None);
            }
        }
        rows.push(row);
    }
    let selected = argmax(&rows).ok_or(SviError::Selection)?;
    Ok(Selection {
        shape: shapes[selected].clone(),
        params: params[selected].take().expect("selected candidate trained"),
        report: SelectionReport {
            per_candidate: rows,
            selected,
            seed: cfg.seed,
        },
    })
}

/// Highest `omega_p`; ties prefer fewer parameters, then the earlier index.
pub fn argmax(rows: &[CandidateResult]) -> Option<usize> {
    rows.iter()
        .filter_map(|r| r.omega_p.filter(|v| v.is_finite()).map(|v| (r, v)))
        .max_by(|(a, va), (b, vb)| {
            va.total_cmp(vb)
                .then(b.param_count.cmp(&a.param_count))
                .then(b.index.cmp(&a.index))
        })
        .map(|(r, _)| r.index)
}
