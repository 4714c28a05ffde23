//! Spike-and-slab variational family.
//!
//! Each coordinate of theta has an inclusion probability `nu_i` and a
//! Gaussian slab `N(mu_i, sigma_i^2)`. The optimizer works on unconstrained
//! raws: `sigma_i = softplus(sigma_raw_i)` and `nu_i = 1 / (1 + exp(nu_raw_i))`,
//! so `logit(nu_i) = -nu_raw_i`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SviError};
use crate::net::{NetworkShape, ThetaVector};
use crate::rng::SviRng;

/// Bounds applied to uniform draws before they enter a logit.
pub const U_CLAMP: f64 = 1e-7;

/// Lower clamp on the binomial variance inside [`kl_structure`].
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams {
    pub mu: Vec<f64>,
    pub sigma_raw: Vec<f64>,
    pub nu_raw: Vec<f64>,
}

impl VariationalParams {
    pub fn new(mu: Vec<f64>, sigma_raw: Vec<f64>, nu_raw: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma_raw.len() || mu.len() != nu_raw.len() {
            return Err(SviError::Shape(format!(
                "parameter blocks disagree: mu {}, sigma_raw {}, nu_raw {}",
                mu.len(),
                sigma_raw.len(),
                nu_raw.len()
            )));
        }
        Ok(VariationalParams {
            mu,
            sigma_raw,
            nu_raw,
        })
    }

    /// All-coordinates-equal constructor, mostly for tests and fixtures.
    pub fn constant(h: usize, mu: f64, sigma_raw: f64, nu_raw: f64) -> Self {
        VariationalParams {
            mu: vec![mu; h],
            sigma_raw: vec![sigma_raw; h],
            nu_raw: vec![nu_raw; h],
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.sigma_raw.iter().map(|&s| sigma_from_raw(s)).collect()
    }

    pub fn nu(&self) -> Vec<f64> {
        self.nu_raw.iter().map(|&v| nu_from_raw(v)).collect()
    }

    pub fn check_shape(&self, shape: &NetworkShape) -> Result<()> {
        let h = shape.param_count();
        if self.len() != h
            || self.sigma_raw.len() != h
            || self.nu_raw.len() != h
        {
            return Err(SviError::Shape(format!(
                "variational params have length {}, shape needs {h}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.mu
            .iter()
            .chain(&self.sigma_raw)
            .chain(&self.nu_raw)
            .all(|v| v.is_finite())
    }
}

/// How the entropy term of the structure KL is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyUnits {
    /// `log2`, as the approximation is usually written.
    #[default]
    Bits,
    /// Natural log, consistent with every other term of the objective.
    Nats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub sigma0: f64,
    pub lambda: f64,
    pub lambda_s: f64,
    pub sigma_eps: f64,
    pub tau: f64,
    pub entropy_units: EntropyUnits,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            sigma0: 0.8,
            lambda: 10.0,
            lambda_s: 3.0,
            sigma_eps: 1.0,
            tau: 0.5,
            entropy_units: EntropyUnits::Bits,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma0", self.sigma0),
            ("lambda", self.lambda),
            ("lambda_s", self.lambda_s),
            ("sigma_eps", self.sigma_eps),
            ("tau", self.tau),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SviError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraw {
    pub eps: Vec<f64>,
    pub u: Vec<f64>,
}

impl NoiseDraw {
    pub fn sample(h: usize, rng: &mut SviRng) -> Self {
        let eps = (0..h).map(|_| rng.sample(StandardNormal)).collect();
        let u = (0..h)
            .map(|_| rng.random::<f64>().clamp(U_CLAMP, 1.0 - U_CLAMP))
            .collect();
        NoiseDraw { eps, u }
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaSample {
    pub theta_hard: ThetaVector,
    pub theta_soft: ThetaVector,
    pub gate_soft: Vec<f64>,
    pub gate_hard: Vec<bool>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn nu_from_raw(nu_raw: f64) -> f64 {
    sigmoid(-nu_raw)
}

pub fn nu_to_raw(nu: f64) -> f64 {
    ((1.0 - nu) / nu).ln()
}

/// Softplus, stable for large `|sigma_raw|`.
#[inline]
pub fn sigma_from_raw(sigma_raw: f64) -> f64 {
    sigma_raw.max(0.0) + (-sigma_raw.abs()).exp().ln_1p()
}

/// Inverse softplus, `ln(e^sigma - 1)`.
pub fn sigma_to_raw(sigma: f64) -> f64 {
    sigma + (-(-sigma).exp_m1()).ln()
}

#[inline]
fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
fn gate_from_logit(logit_nu: f64, u: f64, tau: f64) -> f64 {
    sigmoid((logit_nu + logit(u)) / tau)
}

/// Relaxed Bernoulli gate and its hard threshold.
pub fn gumbel_gate(nu: f64, u: f64, tau: f64) -> Result<(f64, bool)> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(SviError::Argument(format!("nu must lie in (0,1), got {nu}")));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(SviError::Argument(format!("u must lie in (0,1), got {u}")));
    }
    if !(tau > 0.0) {
        return Err(SviError::Argument(format!("tau must be positive, got {tau}")));
    }
    let g = gate_from_logit(logit(nu), u, tau);
    Ok((g, g > 0.5))
}

pub fn sample_theta(params: &VariationalParams, noise: &NoiseDraw, tau: f64) -> Result<ThetaSample> {
    let h = params.len();
    if noise.eps.len() != h || noise.u.len() != h {
        return Err(SviError::Shape(format!(
            "noise draw has length {}, params have {h}",
            noise.eps.len()
        )));
    }
    if !(tau > 0.0) {
        return Err(SviError::Argument(format!("tau must be positive, got {tau}")));
    }
    let mut sample = ThetaSample {
        theta_hard: ThetaVector(vec![0.0; h]),
        theta_soft: ThetaVector(vec![0.0; h]),
        gate_soft: vec![0.0; h],
        gate_hard: vec![false; h],
    };
    sample_into(params, noise, tau, &mut sample);
    Ok(sample)
}

/// Allocation-free [`sample_theta`]; all lengths must already agree.
pub(crate) fn sample_into(params: &VariationalParams, noise: &NoiseDraw, tau: f64, out: &mut ThetaSample) {
    for i in 0..params.len() {
        let slab = params.mu[i] + sigma_from_raw(params.sigma_raw[i]) * noise.eps[i];
        let g = gate_from_logit(-params.nu_raw[i], noise.u[i], tau);
        let hard = g > 0.5;
        out.gate_soft[i] = g;
        out.gate_hard[i] = hard;
        out.theta_soft[i] = g * slab;
        out.theta_hard[i] = if hard { slab } else { 0.0 };
    }
}

/// `KL(N(mu, sigma^2) || N(0, sigma0^2))`.
#[inline]
pub fn gaussian_kl(mu: f64, sigma: f64, sigma0: f64) -> f64 {
    (sigma0 / sigma).ln() + (sigma * sigma + mu * mu) / (2.0 * sigma0 * sigma0) - 0.5
}

/// Inclusion-weighted slab KL, summed over coordinates.
pub fn kl_gaussian_slab(params: &VariationalParams, sigma0: f64) -> f64 {
    (0..params.len())
        .map(|i| {
            nu_from_raw(params.nu_raw[i])
                * gaussian_kl(params.mu[i], sigma_from_raw(params.sigma_raw[i]), sigma0)
        })
        .sum()
}

/// Adds the gradient of [`kl_gaussian_slab`] with respect to the raw
/// parameters into the three output slices.
pub fn add_kl_gaussian_slab_grad(
    params: &VariationalParams,
    sigma0: f64,
    d_mu: &mut [f64],
    d_sigma_raw: &mut [f64],
    d_nu_raw: &mut [f64],
) {
    let inv_var0 = 1.0 / (sigma0 * sigma0);
    for i in 0..params.len() {
        let nu = nu_from_raw(params.nu_raw[i]);
        let sigma = sigma_from_raw(params.sigma_raw[i]);
        let mu = params.mu[i];
        d_mu[i] += nu * mu * inv_var0;
        d_sigma_raw[i] += nu * (sigma * inv_var0 - 1.0 / sigma) * sigmoid(params.sigma_raw[i]);
        d_nu_raw[i] += -nu * (1.0 - nu) * gaussian_kl(mu, sigma, sigma0);
    }
}

fn entropy_scale(units: EntropyUnits) -> f64 {
    match units {
        EntropyUnits::Bits => std::f64::consts::LOG2_E,
        EntropyUnits::Nats => 1.0,
    }
}

fn binomial_variance(sum_nu: f64, h: f64) -> f64 {
    sum_nu * (h - sum_nu) / h
}

/// Gaussian entropy approximation of `Binomial(h, sum_nu / h)` in the given
/// units, with the variance clamped at [`VARIANCE_FLOOR`].
pub fn binomial_entropy_approx(sum_nu: f64, h: usize, units: EntropyUnits) -> f64 {
    let v = binomial_variance(sum_nu, h as f64).max(VARIANCE_FLOOR);
    0.5 * entropy_scale(units) * (2.0 * std::f64::consts::PI * std::f64::consts::E * v).ln()
}

/// Structure KL with the entropy term in bits.
pub fn kl_structure(params: &VariationalParams, lambda_s: f64, h: usize) -> Result<f64> {
    kl_structure_in(params, lambda_s, h, EntropyUnits::Bits)
}

pub fn kl_structure_in(
    params: &VariationalParams,
    lambda_s: f64,
    h: usize,
    units: EntropyUnits,
) -> Result<f64> {
    if h != params.len() || h == 0 {
        return Err(SviError::Shape(format!(
            "H = {h} does not match params length {}",
            params.len()
        )));
    }
    let sum_nu: f64 = params.nu_raw.iter().map(|&v| nu_from_raw(v)).sum();
    Ok(-binomial_entropy_approx(sum_nu, h, units) + lambda_s * sum_nu)
}

pub fn add_kl_structure_grad(
    params: &VariationalParams,
    lambda_s: f64,
    units: EntropyUnits,
    d_nu_raw: &mut [f64],
) {
    let h = params.len() as f64;
    let sum_nu: f64 = params.nu_raw.iter().map(|&v| nu_from_raw(v)).sum();
    let v = binomial_variance(sum_nu, h);
    let d_entropy = if v > VARIANCE_FLOOR {
        0.5 * entropy_scale(units) * (h - 2.0 * sum_nu) / (h * v)
    } else {
        0.0
    };
    let d_sum = lambda_s - d_entropy;
    for (d, &raw) in d_nu_raw.iter_mut().zip(&params.nu_raw) {
        let nu = nu_from_raw(raw);
        *d += -nu * (1.0 - nu) * d_sum;
    }
}

/// `ln(e^x - 1)` without overflow.
fn ln_expm1(x: f64) -> f64 {
    if x > 1.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Log of the zero-truncated Poisson width prior `lambda^N / ((e^lambda - 1) N!)`.
pub fn log_prior_width(n: u64, lambda: f64) -> Result<f64> {
    if n == 0 {
        return Err(SviError::Argument("width prior is supported on N >= 1".into()));
    }
    if !(lambda > 0.0) {
        return Err(SviError::Argument(format!("lambda must be positive, got {lambda}")));
    }
    let n = n as f64;
    Ok(n * lambda.ln() - ln_expm1(lambda) - libm::lgamma(n + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn nu_raw_examples() {
        assert_eq!(nu_from_raw(0.0), 0.5);
        assert!(close(nu_from_raw(9f64.ln()), 0.1, 1e-15));
        assert!(close(nu_from_raw(-20.0), 1.0, 1e-8));
        assert!(close(nu_to_raw(0.1), 9f64.ln(), 1e-14));
    }

    #[test]
    fn sigma_raw_examples() {
        assert!(close(sigma_from_raw(0.0), std::f64::consts::LN_2, 1e-15));
        assert!(sigma_from_raw(30.0) - 30.0 < 1e-9);
        assert!(sigma_from_raw(-30.0) > 0.0);
        for s in [0.1, 1.0, 5.0] {
            assert!(close(sigma_from_raw(sigma_to_raw(s)), s, 1e-10));
        }
    }

    #[test]
    fn gate_examples() {
        assert_eq!(gumbel_gate(0.5, 0.5, 0.3).unwrap(), (0.5, false));
        assert_eq!(gumbel_gate(0.5, 0.5, 7.0).unwrap(), (0.5, false));
        let (g, hard) = gumbel_gate(0.9, 0.5, 0.5).unwrap();
        // sigmoid(2 ln 9) = 81/82
        assert!(close(g, 81.0 / 82.0, 1e-14));
        assert!(hard);
    }

    #[test]
    fn gate_rejects_boundaries() {
        assert!(gumbel_gate(0.0, 0.5, 0.5).is_err());
        assert!(gumbel_gate(1.0, 0.5, 0.5).is_err());
        assert!(gumbel_gate(0.5, 0.0, 0.5).is_err());
        assert!(gumbel_gate(0.5, 1.0, 0.5).is_err());
        assert!(gumbel_gate(0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn hard_gate_marginal_matches_nu() {
        let mut rng = seeded(99);
        let draws = 100_000;
        for nu in [0.2, 0.5, 0.8] {
            let hits = (0..draws)
                .filter(|_| {
                    let u = rng.random::<f64>().clamp(U_CLAMP, 1.0 - U_CLAMP);
                    gumbel_gate(nu, u, 0.5).unwrap().1
                })
                .count();
            assert!((hits as f64 / draws as f64 - nu).abs() < 0.01, "nu={nu}");
        }
    }

    #[test]
    fn sample_degenerate_cases() {
        let params = VariationalParams::constant(3, 1.7, 0.0, -30.0);
        let noise = NoiseDraw {
            eps: vec![0.0; 3],
            u: vec![0.01, 0.5, 0.99],
        };
        let s = sample_theta(&params, &noise, 0.5).unwrap();
        assert!(s.theta_hard.iter().all(|&t| t == 1.7));

        let params = VariationalParams::constant(5, 1.7, 0.0, 30.0);
        let noise = NoiseDraw {
            eps: vec![0.3; 5],
            u: vec![0.001, 0.2, 0.5, 0.8, 0.999],
        };
        let s = sample_theta(&params, &noise, 0.5).unwrap();
        assert!(s.theta_hard.iter().all(|&t| t == 0.0));
        assert!(s.gate_hard.iter().all(|&g| !g));
    }

    #[test]
    fn sample_composed_example() {
        let params = VariationalParams::new(
            vec![1.0],
            vec![sigma_to_raw(0.5)],
            vec![nu_to_raw(0.9)],
        )
        .unwrap();
        let noise = NoiseDraw {
            eps: vec![2.0],
            u: vec![0.5],
        };
        let s = sample_theta(&params, &noise, 0.5).unwrap();
        assert!(close(s.theta_soft[0], 162.0 / 82.0, 1e-14));
        assert!(close(s.theta_hard[0], 2.0, 1e-12));
        assert!(s.gate_hard[0]);
    }

    #[test]
    fn sample_rejects_mismatched_noise() {
        let params = VariationalParams::constant(3, 0.0, 0.0, 0.0);
        let noise = NoiseDraw {
            eps: vec![0.0; 2],
            u: vec![0.5; 2],
        };
        assert!(sample_theta(&params, &noise, 0.5).is_err());
    }

    #[test]
    fn slab_kl_examples() {
        let p = VariationalParams::constant(4, 0.0, sigma_to_raw(0.8), -30.0);
        assert!(kl_gaussian_slab(&p, 0.8).abs() < 1e-12);

        let p = VariationalParams::new(vec![1.0], vec![sigma_to_raw(0.5)], vec![-40.0]).unwrap();
        assert!(close(kl_gaussian_slab(&p, 1.0), 0.818_147, 1e-6));

        let full = VariationalParams::new(vec![1.0, 0.3], vec![0.2, -0.4], vec![0.0, 0.0]).unwrap();
        let mut half = full.clone();
        // nu 0.5 -> 0.25 on edge 0
        half.nu_raw[0] = nu_to_raw(0.25);
        let edge0 = 0.5 * gaussian_kl(1.0, sigma_from_raw(0.2), 1.0);
        assert!(close(
            kl_gaussian_slab(&full, 1.0) - kl_gaussian_slab(&half, 1.0),
            edge0 / 2.0,
            1e-12
        ));
    }

    #[test]
    fn structure_kl_examples() {
        let p = VariationalParams::constant(2, 0.0, 0.0, 0.0);
        assert!(close(kl_structure(&p, 3.0, 2).unwrap(), 1.452_904, 1e-6));

        let p = VariationalParams::constant(10, 0.0, 0.0, 60.0);
        let v = kl_structure(&p, 3.0, 10).unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 1e-8).log2();
        assert!(v.is_finite());
        assert!(close(v, expect, 1e-9));

        let p = VariationalParams::new(vec![0.0; 3], vec![0.0; 3], vec![0.3, -1.0, 2.0]).unwrap();
        let sum_nu: f64 = p.nu().iter().sum();
        let delta = 0.75;
        let a = kl_structure(&p, 3.0, 3).unwrap();
        let b = kl_structure(&p, 3.0 + delta, 3).unwrap();
        assert!(close(b - a, delta * sum_nu, 1e-12));
        assert!(kl_structure(&p, 3.0, 4).is_err());
    }

    #[test]
    fn structure_kl_units() {
        let p = VariationalParams::constant(6, 0.0, 0.0, 0.4);
        let bits = kl_structure_in(&p, 0.0, 6, EntropyUnits::Bits).unwrap();
        let nats = kl_structure_in(&p, 0.0, 6, EntropyUnits::Nats).unwrap();
        assert!(close(bits, nats * std::f64::consts::LOG2_E, 1e-12));
    }

    #[test]
    fn width_prior_values() {
        // 10 ln 10 - ln(e^10 - 1) - ln 3628800
        assert!(close(log_prior_width(10, 10.0).unwrap(), -2.078_516_242_174_682_6, 1e-12));
        let total: f64 = (1..=200).map(|n| log_prior_width(n, 10.0).unwrap().exp()).sum();
        assert!(close(total, 1.0, 1e-9));
        let at = |n| log_prior_width(n, 600.0).unwrap();
        assert!(at(600) > at(300));
        assert!(at(600) > at(900));
        assert!(log_prior_width(0, 10.0).is_err());
    }

    #[test]
    fn prior_config_validation() {
        assert!(PriorConfig::default().validate().is_ok());
        let bad = PriorConfig {
            tau: 0.0,
            ..PriorConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
