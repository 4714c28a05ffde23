//! Per-width training loop.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::RegressionDataset;
use crate::elbo::{evaluate, ElboReport, OptimizerState, TrainConfig, VariationalGrad, Workspace};
use crate::error::{Result, SviError};
use crate::net::NetworkShape;
use crate::rng::{derive_seed, seeded, SviRng};
use crate::variational::{sigma_to_raw, NoiseDraw, PriorConfig, VariationalParams};

/// Initial slab standard deviation.
pub const INIT_SIGMA: f64 = 0.05;

// Stream indices under the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_EVAL: u64 = 3;

/// Means uniform on `(-r, r)` with `r = sqrt(6 / (fan_in + fan_out))` per
/// layer (biases use their layer's `r`), `sigma = 0.05`, `nu = 0.5`.
pub fn init_params(shape: &NetworkShape, rng: &mut SviRng) -> VariationalParams {
    let h = shape.param_count();
    let mut mu = Vec::with_capacity(h);
    for span in shape.spans() {
        let r = (6.0 / (span.fan_in + span.fan_out) as f64).sqrt();
        let count = span.end() - span.weight_offset;
        mu.extend((0..count).map(|_| rng.random_range(-r..r)));
    }
    VariationalParams {
        mu,
        sigma_raw: vec![sigma_to_raw(INIT_SIGMA); h],
        nu_raw: vec![0.0; h],
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: VariationalParams,
    /// Final averaged full-data objective plus the per-epoch trace.
    pub report: ElboReport,
    pub epochs_run: usize,
}

/// The exact starting point [`train_width`] uses for `cfg.seed`.
pub fn initial_params(shape: &NetworkShape, cfg: &TrainConfig) -> VariationalParams {
    init_params(shape, &mut seeded(derive_seed(cfg.seed, STREAM_INIT)))
}

pub fn train_width(
    data: &RegressionDataset,
    shape: &NetworkShape,
    prior: &PriorConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_width_observed(data, shape, prior, cfg, &mut |_, _| {})
}

/// [`train_width`] calling `observer(epoch, params)` after every completed
/// epoch (1-based).
pub fn train_width_observed(
    data: &RegressionDataset,
    shape: &NetworkShape,
    prior: &PriorConfig,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(usize, &VariationalParams),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    prior.validate()?;
    shape.validate()?;
    if shape.input_dim != data.n_features {
        return Err(SviError::Shape(format!(
            "network takes {} inputs, dataset has {} features",
            shape.input_dim, data.n_features
        )));
    }
    let n = data.len();
    if n < cfg.batch_size {
        return Err(SviError::Argument(format!(
            "batch size {} exceeds dataset size {n}",
            cfg.batch_size
        )));
    }

    let h = shape.param_count();
    let mut params = initial_params(shape, cfg);
    let mut shuffle_rng = seeded(derive_seed(cfg.seed, STREAM_SHUFFLE));
    let mut noise_rng = seeded(derive_seed(cfg.seed, STREAM_NOISE));
    let mut opt = OptimizerState::new(cfg.optimizer, h);
    let mut ws = Workspace::new(shape);
    let mut grad = VariationalGrad::zeros(h);
    let mut noises: Vec<NoiseDraw> = Vec::with_capacity(cfg.mc_samples);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.batch(chunk);
            noises.clear();
            noises.extend((0..cfg.mc_samples).map(|_| NoiseDraw::sample(h, &mut noise_rng)));
            let report = evaluate(&mut ws, &params, &batch, n, prior, &noises, Some(&mut grad));
            if !report.neg_elbo.is_finite() || !grad.is_finite() {
                return Err(SviError::Training {
                    epoch,
                    value: report.neg_elbo,
                });
            }
            crate::elbo::optimizer_update(&mut opt, &mut params, &grad, cfg.learning_rate)?;
            epoch_sum += report.neg_elbo;
            batches += 1;
        }
        trace.push(epoch_sum / batches as f64);
        observer(epoch, &params);
        if !params.is_finite() {
            return Err(SviError::Training {
                epoch,
                value: f64::NAN,
            });
        }
        if should_stop(&trace, cfg) {
            break;
        }
    }

    let mut report = full_data_objective(
        data,
        shape,
        &params,
        prior,
        cfg,
        &mut seeded(derive_seed(cfg.seed, STREAM_EVAL)),
    )?;
    if !report.neg_elbo.is_finite() {
        return Err(SviError::Training {
            epoch: trace.len(),
            value: report.neg_elbo,
        });
    }
    let epochs_run = trace.len();
    report.trace = trace;
    Ok(TrainOutcome {
        params,
        report,
        epochs_run,
    })
}

/// Compares the mean of the last `window` epochs against the window before.
fn should_stop(trace: &[f64], cfg: &TrainConfig) -> bool {
    let w = cfg.early_stop_window;
    if cfg.early_stop_tol <= 0.0 || trace.len() < 2 * w {
        return false;
    }
    let tail = &trace[trace.len() - 2 * w..];
    let before = tail[..w].iter().sum::<f64>() / w as f64;
    let after = tail[w..].iter().sum::<f64>() / w as f64;
    before - after < cfg.early_stop_tol
}

/// Negative ELBO on the whole dataset, averaged over `cfg.eval_passes`
/// independent noise sets of `cfg.mc_samples` draws each.
pub fn full_data_objective(
    data: &RegressionDataset,
    shape: &NetworkShape,
    params: &VariationalParams,
    prior: &PriorConfig,
    cfg: &TrainConfig,
    rng: &mut SviRng,
) -> Result<ElboReport> {
    params.check_shape(shape)?;
    let h = shape.param_count();
    let pairs = data.pairs();
    let mut ws = Workspace::new(shape);
    let passes = cfg.eval_passes.max(1);
    let (mut l1, mut l2, mut l3) = (0.0, 0.0, 0.0);
    for _ in 0..passes {
        let noises: Vec<NoiseDraw> = (0..cfg.mc_samples.max(1))
            .map(|_| NoiseDraw::sample(h, rng))
            .collect();
        let r = evaluate(&mut ws, params, &pairs, data.len(), prior, &noises, None);
        l1 += r.l1;
        l2 = r.l2;
        l3 = r.l3;
    }
    l1 /= passes as f64;
    Ok(ElboReport {
        l1,
        l2,
        l3,
        neg_elbo: l1 + l2 + l3,
        trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;

    fn tiny_data() -> RegressionDataset {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 / 20.0) - 1.0).collect();
        let y = x.iter().map(|v| v.max(0.0)).collect();
        RegressionDataset::new(1, x, y, 1.0, Provenance::Synthetic).unwrap()
    }

    #[test]
    fn init_scales() {
        let shape = NetworkShape::regression(8, vec![4, 4]).unwrap();
        let p = init_params(&shape, &mut seeded(0));
        for span in shape.spans() {
            let r = (6.0 / (span.fan_in + span.fan_out) as f64).sqrt();
            assert!(p.mu[span.weight_offset..span.end()].iter().all(|m| m.abs() < r));
        }
        assert!(p.sigma().iter().all(|s| (s - 0.05).abs() < 1e-12));
        assert!(p.nu().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn batch_larger_than_data_rejected() {
        let ds = tiny_data();
        let shape = NetworkShape::regression(1, vec![2]).unwrap();
        let cfg = TrainConfig {
            batch_size: 41,
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(train_width(&ds, &shape, &PriorConfig::default(), &cfg).is_err());
    }

    #[test]
    fn deterministic_params() {
        let ds = tiny_data();
        let shape = NetworkShape::regression(1, vec![2]).unwrap();
        let cfg = TrainConfig {
            batch_size: 16,
            epochs: 30,
            seed: 12,
            ..TrainConfig::default()
        };
        let a = train_width(&ds, &shape, &PriorConfig::default(), &cfg).unwrap();
        let b = train_width(&ds, &shape, &PriorConfig::default(), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.trace.len(), 30);
    }

    #[test]
    fn early_stop_triggers_on_flat_trace() {
        let cfg = TrainConfig {
            early_stop_tol: 0.1,
            early_stop_window: 3,
            ..TrainConfig::default()
        };
        assert!(!should_stop(&[5.0; 5], &cfg));
        assert!(should_stop(&[5.0; 6], &cfg));
        assert!(!should_stop(&[9.0, 9.0, 9.0, 5.0, 5.0, 5.0], &cfg));
        let off = TrainConfig::default();
        assert!(!should_stop(&[5.0; 600], &off));
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut ds = tiny_data();
        ds.y[3] = f64::INFINITY;
        let shape = NetworkShape::regression(1, vec![2]).unwrap();
        let cfg = TrainConfig {
            batch_size: 40,
            epochs: 5,
            ..TrainConfig::default()
        };
        match train_width(&ds, &shape, &PriorConfig::default(), &cfg) {
            Err(SviError::Training { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("expected training error, got {other:?}"),
        }
    }
}
