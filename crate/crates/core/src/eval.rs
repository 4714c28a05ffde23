//! Posterior-predictive metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SviError};
use crate::net::{Evaluator, NetworkShape, ThetaVector};
use crate::rng::SviRng;
use crate::teacher::TeacherNetwork;
use crate::variational::{nu_from_raw, sample_into, NoiseDraw, ThetaSample, VariationalParams};

pub const DEFAULT_DRAWS: usize = 30;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn check_rows(shape: &NetworkShape, x: &[f64]) -> Result<usize> {
    if x.len() % shape.input_dim != 0 {
        return Err(SviError::Shape(format!(
            "{} feature values do not divide into rows of {}",
            x.len(),
            shape.input_dim
        )));
    }
    Ok(x.len() / shape.input_dim)
}

/// Average of hard-gated forward passes over `draws` posterior samples.
/// `x` is row-major with `shape.input_dim` columns.
pub fn posterior_mean_predict(
    params: &VariationalParams,
    shape: &NetworkShape,
    x: &[f64],
    draws: usize,
    tau: f64,
    rng: &mut SviRng,
) -> Result<Vec<f64>> {
    if draws == 0 {
        return Err(SviError::Argument("draws must be at least 1".into()));
    }
    let noises: Vec<NoiseDraw> = (0..draws)
        .map(|_| NoiseDraw::sample(params.len(), rng))
        .collect();
    posterior_mean_predict_with_noise(params, shape, x, &noises, tau)
}

pub fn posterior_mean_predict_with_noise(
    params: &VariationalParams,
    shape: &NetworkShape,
    x: &[f64],
    noises: &[NoiseDraw],
    tau: f64,
) -> Result<Vec<f64>> {
    params.check_shape(shape)?;
    let rows = check_rows(shape, x)?;
    if noises.is_empty() {
        return Err(SviError::Argument("draws must be at least 1".into()));
    }
    if !(tau > 0.0) {
        return Err(SviError::Argument(format!("tau must be positive, got {tau}")));
    }
    let h = params.len();
    if noises.iter().any(|d| d.len() != h || d.u.len() != h) {
        return Err(SviError::Shape("noise draw length does not match params".into()));
    }
    let mut sample = ThetaSample {
        theta_hard: ThetaVector(vec![0.0; h]),
        theta_soft: ThetaVector(vec![0.0; h]),
        gate_soft: vec![0.0; h],
        gate_hard: vec![false; h],
    };
    let mut eval = Evaluator::new(shape);
    let mut acc = vec![CompensatedSum::default(); rows];
    for noise in noises {
        sample_into(params, noise, tau, &mut sample);
        for (a, row) in acc.iter_mut().zip(x.chunks_exact(shape.input_dim)) {
            a.add(eval.forward(&sample.theta_hard, row)[0]);
        }
    }
    let k = noises.len() as f64;
    Ok(acc.iter().map(|a| a.value() / k).collect())
}

pub fn predict_theta(shape: &NetworkShape, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let rows = check_rows(shape, x)?;
    if theta.len() != shape.param_count() {
        return Err(SviError::Shape(format!(
            "theta has length {}, shape needs {}",
            theta.len(),
            shape.param_count()
        )));
    }
    let mut eval = Evaluator::new(shape);
    let out = x
        .chunks_exact(shape.input_dim)
        .map(|row| eval.forward(theta, row)[0])
        .collect::<Vec<_>>();
    debug_assert_eq!(out.len(), rows);
    Ok(out)
}

pub fn rmse(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(SviError::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            y.len()
        )));
    }
    if pred.is_empty() {
        return Err(SviError::Argument("rmse of an empty set".into()));
    }
    let mut s = CompensatedSum::default();
    for (p, t) in pred.iter().zip(y) {
        s.add((p - t) * (p - t));
    }
    Ok((s.value() / pred.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsitySummary {
    pub mean_inclusion: f64,
    pub expected_edges: f64,
}

pub fn sparsity_summary(params: &VariationalParams) -> SparsitySummary {
    let mut s = CompensatedSum::default();
    for &raw in &params.nu_raw {
        s.add(nu_from_raw(raw));
    }
    let expected_edges = s.value();
    SparsitySummary {
        mean_inclusion: if params.is_empty() {
            0.0
        } else {
            expected_edges / params.len() as f64
        },
        expected_edges,
    }
}

/// Monte Carlo Hellinger distance squared between the Gaussian regression
/// models with means `pred` and `truth`:
/// mean of `1 - exp(-(pred - truth)^2 / (8 sigma_eps^2))`.
pub fn empirical_hellinger_sq(pred: &[f64], truth: &[f64], sigma_eps: f64) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(SviError::Shape(format!(
            "{} predictions for {} reference values",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(SviError::Argument("no evaluation points".into()));
    }
    if !(sigma_eps > 0.0) {
        return Err(SviError::Argument(format!("sigma_eps must be positive, got {sigma_eps}")));
    }
    let denom = 8.0 * sigma_eps * sigma_eps;
    let mut s = CompensatedSum::default();
    for (p, t) in pred.iter().zip(truth) {
        let d = p - t;
        s.add(-(-d * d / denom).exp_m1());
    }
    Ok((s.value() / pred.len() as f64).clamp(0.0, 1.0))
}

/// Hellinger diagnostic of a single parameter vector against a teacher.
pub fn theta_hellinger_sq(
    shape: &NetworkShape,
    theta: &[f64],
    teacher: &TeacherNetwork,
    x: &[f64],
    sigma_eps: f64,
) -> Result<f64> {
    let pred = predict_theta(shape, theta, x)?;
    let truth = predict_theta(&teacher.shape, &teacher.theta, x)?;
    empirical_hellinger_sq(&pred, &truth, sigma_eps)
}

/// Hellinger diagnostic of the posterior-mean predictor against a teacher.
#[allow(clippy::too_many_arguments)]
pub fn posterior_hellinger_sq(
    params: &VariationalParams,
    shape: &NetworkShape,
    teacher: &TeacherNetwork,
    x: &[f64],
    sigma_eps: f64,
    draws: usize,
    tau: f64,
    rng: &mut SviRng,
) -> Result<f64> {
    let pred = posterior_mean_predict(params, shape, x, draws, tau, rng)?;
    let truth = predict_theta(&teacher.shape, &teacher.theta, x)?;
    empirical_hellinger_sq(&pred, &truth, sigma_eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::variational::sigma_to_raw;
    use rand::Rng;

    fn small() -> (NetworkShape, VariationalParams, Vec<f64>) {
        let shape = NetworkShape::regression(2, vec![3]).unwrap();
        let h = shape.param_count();
        let mut rng = seeded(4);
        let params = VariationalParams::new(
            (0..h).map(|_| rng.random_range(-1.0..1.0)).collect(),
            vec![sigma_to_raw(0.3); h],
            (0..h).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let x = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        (shape, params, x)
    }

    #[test]
    fn collapsed_posterior_predicts_at_mu() {
        let (shape, mut params, x) = small();
        params.sigma_raw.iter_mut().for_each(|s| *s = -40.0);
        params.nu_raw.iter_mut().for_each(|s| *s = -40.0);
        let got = posterior_mean_predict(&params, &shape, &x, 7, 0.5, &mut seeded(1)).unwrap();
        let expect = predict_theta(&shape, &params.mu, &x).unwrap();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn single_draw_is_one_forward_pass() {
        let (shape, params, x) = small();
        let got = posterior_mean_predict(&params, &shape, &x, 1, 0.5, &mut seeded(3)).unwrap();
        let noise = NoiseDraw::sample(params.len(), &mut seeded(3));
        let s = crate::variational::sample_theta(&params, &noise, 0.5).unwrap();
        assert_eq!(got, predict_theta(&shape, &s.theta_hard, &x).unwrap());
    }

    #[test]
    fn draw_order_invariance() {
        let (shape, params, x) = small();
        let mut rng = seeded(5);
        let mut noises: Vec<NoiseDraw> =
            (0..50).map(|_| NoiseDraw::sample(params.len(), &mut rng)).collect();
        let a = posterior_mean_predict_with_noise(&params, &shape, &x, &noises, 0.5).unwrap();
        noises.reverse();
        noises.swap(3, 17);
        let b = posterior_mean_predict_with_noise(&params, &shape, &x, &noises, 0.5).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_spread_shrinks() {
        let (shape, params, x) = small();
        let x = &x[..2];
        let spread = |draws: usize| {
            let vals: Vec<f64> = (0..40)
                .map(|s| posterior_mean_predict(&params, &shape, x, draws, 0.5, &mut seeded(s)).unwrap()[0])
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        };
        let ratio = spread(100) / spread(1600);
        // 1/sqrt(draws) scaling predicts 4
        assert!((2.0..8.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_draws_rejected() {
        let (shape, params, x) = small();
        assert!(posterior_mean_predict(&params, &shape, &x, 0, 0.5, &mut seeded(0)).is_err());
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let y = [0.5, -1.0, 3.0];
        let shifted: Vec<f64> = y.iter().map(|v| v - 0.7).collect();
        assert!((rmse(&shifted, &y).unwrap() - 0.7).abs() < 1e-12);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.535_534).abs() < 1e-6);
        assert_eq!(rmse(&y, &shifted).unwrap(), rmse(&shifted, &y).unwrap());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sparsity_cases() {
        let p = VariationalParams::constant(12, 0.0, 0.0, 0.0);
        let s = sparsity_summary(&p);
        assert_eq!(s.mean_inclusion, 0.5);
        assert_eq!(s.expected_edges, 6.0);
        let p = VariationalParams::constant(12, 0.0, 0.0, -50.0);
        let s = sparsity_summary(&p);
        assert!((s.mean_inclusion - 1.0).abs() < 1e-15);
        assert!((s.expected_edges - 12.0).abs() < 1e-12);
    }

    #[test]
    fn hellinger_cases() {
        let t = [0.1, 0.5, -2.0];
        assert_eq!(empirical_hellinger_sq(&t, &t, 1.0).unwrap(), 0.0);
        let shifted: Vec<f64> = t.iter().map(|v| v + 2.0).collect();
        let d = empirical_hellinger_sq(&shifted, &t, 1.0).unwrap();
        assert!((d - 0.393_469).abs() < 1e-6);
        let wider: Vec<f64> = t.iter().map(|v| v + 3.0).collect();
        assert!(empirical_hellinger_sq(&wider, &t, 1.0).unwrap() >= d);
        let far: Vec<f64> = t.iter().map(|v| v + 1e6).collect();
        assert!(empirical_hellinger_sq(&far, &t, 1.0).unwrap() <= 1.0);
        assert!(empirical_hellinger_sq(&t, &t, 0.0).is_err());
    }
}
