//! Closed-form rate quantities for sparse ReLU networks: variational error,
//! estimation rate and the Hölder-class structure prescription. Absolute
//! constants are inputs; results describe rate shapes, not certified bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SviError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateInputs {
    /// Network depth `L`.
    pub depth: u32,
    /// Width multiplier `N`.
    pub width: f64,
    /// Sparsity `s`.
    pub sparsity: f64,
    /// Sample size `n`.
    pub n: f64,
    /// Input dimension `p`.
    pub input_dim: u32,
    #[serde(default = "default_bound")]
    pub bound: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default = "one")]
    pub constant: f64,
}

fn default_bound() -> f64 {
    2.0
}

fn one() -> f64 {
    1.0
}

impl RateInputs {
    pub fn new(depth: u32, width: f64, sparsity: f64, n: f64, input_dim: u32) -> Self {
        RateInputs {
            depth,
            width,
            sparsity,
            n,
            input_dim,
            bound: 2.0,
            alpha: None,
            delta: 1.0,
            constant: 1.0,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.sparsity > 0.0) {
            return Err(SviError::Argument(format!(
                "sparsity s must be positive, got {}",
                self.sparsity
            )));
        }
        if self.depth == 0 || self.input_dim == 0 || !(self.width > 0.0) || !(self.n > 0.0) {
            return Err(SviError::Argument(
                "depth L, width N, sample size n and input dim p must be positive".into(),
            ));
        }
        if !(self.n * self.depth as f64 / self.sparsity > 1.0) {
            return Err(SviError::Argument(format!(
                "need nL/s > 1, got {}",
                self.n * self.depth as f64 / self.sparsity
            )));
        }
        Ok(())
    }
}

/// `r_n = (L s / n) ln(12 B p N) + (s / n) ln(n L / s)`.
pub fn variational_error(inp: &RateInputs) -> Result<f64> {
    inp.check()?;
    if !(inp.bound > 0.0) {
        return Err(SviError::Argument("bound B must be positive".into()));
    }
    let l = inp.depth as f64;
    let (s, n) = (inp.sparsity, inp.n);
    let p = inp.input_dim as f64;
    Ok(l * s / n * (12.0 * inp.bound * p * inp.width).ln() + s / n * (n * l / s).ln())
}

/// `eps_n = M sqrt((s ln(nL/s) + L s ln(pN)) / n) ln(n)^delta`.
pub fn estimation_rate(inp: &RateInputs) -> Result<f64> {
    inp.check()?;
    let l = inp.depth as f64;
    let (s, n) = (inp.sparsity, inp.n);
    let pn = inp.input_dim as f64 * inp.width;
    if !(pn > 1.0) {
        return Err(SviError::Argument(format!("need pN > 1, got {pn}")));
    }
    let core = (s * (n * l / s).ln() + l * s * pn.ln()) / n;
    Ok(inp.constant * core.sqrt() * n.ln().powf(inp.delta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderStructure {
    pub depth: u64,
    pub sparsity_bound: f64,
    pub width: f64,
}

fn floor_log2(v: u64) -> u64 {
    63 - v.leading_zeros() as u64
}

fn ceil_log2(v: u64) -> u64 {
    v.next_power_of_two().trailing_zeros() as u64
}

/// Depth, sparsity bound and width multiplier for an `alpha`-Hölder target
/// in `p` dimensions with `n` samples.
pub fn holder_structure(alpha: f64, p: u64, n: u64, c_n: f64) -> Result<HolderStructure> {
    if !(alpha > 0.0) || p == 0 || !(c_n > 0.0) {
        return Err(SviError::Argument("alpha, p and C_N must be positive".into()));
    }
    if n < 2 {
        return Err(SviError::Argument(format!("need n >= 2, got {n}")));
    }
    let depth = 8 + (floor_log2(n) + 5) * (1 + ceil_log2(p));
    let nf = n as f64;
    let pf = p as f64;
    let width = c_n * (nf.powf(pf / (2.0 * alpha + pf)) / nf.ln()).floor();
    let sparsity_bound = 94.0
        * pf
        * pf
        * (alpha + 1.0).powf(2.0 * pf)
        * width
        * (depth + ceil_log2(p)) as f64;
    Ok(HolderStructure {
        depth,
        sparsity_bound,
        width,
    })
}

/// Sup-norm approximation bound
/// `(2F + 1) 3^(p+1) N / n + F 2^alpha N^(-alpha/p)` with `F = f_norm`.
pub fn holder_approx_bound(alpha: f64, p: u64, n: f64, width: f64, f_norm: f64) -> Result<f64> {
    if !(alpha > 0.0) || p == 0 || !(n > 0.0) || !(width > 0.0) || !(f_norm >= 0.0) {
        return Err(SviError::Argument(
            "alpha, p, n, N must be positive and f_norm nonnegative".into(),
        ));
    }
    let pf = p as f64;
    Ok((2.0 * f_norm + 1.0) * 3f64.powf(pf + 1.0) * width / n
        + f_norm * 2f64.powf(alpha) * width.powf(-alpha / pf))
}
