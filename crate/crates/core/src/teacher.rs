//! Sparse ground-truth networks and synthetic regression data.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Provenance, RegressionDataset};
use crate::error::{Result, SviError};
use crate::net::{Evaluator, NetworkShape, ThetaVector};
use crate::rng::{child, SviRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherNetwork {
    pub shape: NetworkShape,
    pub theta: ThetaVector,
    pub mask: Vec<bool>,
    pub nonzero_count: usize,
}

impl TeacherNetwork {
    pub fn predict(&self, ds: &RegressionDataset) -> Vec<f64> {
        let mut eval = Evaluator::new(&self.shape);
        ds.rows().map(|x| eval.forward(&self.theta, x)[0]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let h = self.shape.param_count();
        if self.theta.len() != h || self.mask.len() != h {
            return Err(SviError::Shape(format!(
                "teacher has {} values and {} mask bits for {h} parameters",
                self.theta.len(),
                self.mask.len()
            )));
        }
        if self.theta.iter().zip(&self.mask).any(|(t, m)| !m && *t != 0.0) {
            return Err(SviError::Argument("teacher value outside its mask".into()));
        }
        if self.nonzero_count != self.mask.iter().filter(|m| **m).count() {
            return Err(SviError::Argument("nonzero_count disagrees with mask".into()));
        }
        Ok(())
    }
}

/// Draws every weight and bias from `U(weight_low, weight_high)`, then
/// zeroes each independently with probability `zero_rate`. Values and mask
/// come from separate child streams of `rng`.
pub fn generate_teacher(
    shape: &NetworkShape,
    weight_low: f64,
    weight_high: f64,
    zero_rate: f64,
    rng: &mut SviRng,
) -> Result<TeacherNetwork> {
    shape.validate()?;
    if !(weight_low < weight_high) {
        return Err(SviError::Argument(format!(
            "weight range [{weight_low}, {weight_high}) is empty"
        )));
    }
    if !(0.0..=1.0).contains(&zero_rate) {
        return Err(SviError::Argument(format!("zero_rate {zero_rate} outside [0,1]")));
    }
    let mut value_rng = child(rng);
    let mut mask_rng = child(rng);
    let h = shape.param_count();
    let mut theta: Vec<f64> = (0..h)
        .map(|_| value_rng.random_range(weight_low..weight_high))
        .collect();
    let mask: Vec<bool> = (0..h).map(|_| mask_rng.random::<f64>() >= zero_rate).collect();
    for (t, keep) in theta.iter_mut().zip(&mask) {
        if !keep {
            *t = 0.0;
        }
    }
    let nonzero_count = mask.iter().filter(|m| **m).count();
    Ok(TeacherNetwork {
        shape: shape.clone(),
        theta: ThetaVector(theta),
        mask,
        nonzero_count,
    })
}

/// `n` rows with `X ~ U([-1,1]^p)` and `y = f_teacher(X) + sigma_eps * N(0,1)`.
pub fn synthesize(
    teacher: &TeacherNetwork,
    n: usize,
    sigma_eps: f64,
    rng: &mut SviRng,
) -> Result<RegressionDataset> {
    if n == 0 {
        return Err(SviError::Argument("n must be positive".into()));
    }
    if !(sigma_eps >= 0.0) {
        return Err(SviError::Argument(format!("sigma_eps must be nonnegative, got {sigma_eps}")));
    }
    let p = teacher.shape.input_dim;
    let mut x_rng = child(rng);
    let mut noise_rng = child(rng);
    let x: Vec<f64> = (0..n * p).map(|_| x_rng.random_range(-1.0..=1.0)).collect();
    let mut eval = Evaluator::new(&teacher.shape);
    let y = x
        .chunks_exact(p)
        .map(|row| {
            let f = eval.forward(&teacher.theta, row)[0];
            let e: f64 = noise_rng.sample(StandardNormal);
            f + sigma_eps * e
        })
        .collect();
    RegressionDataset::new(p, x, y, sigma_eps, Provenance::Synthetic)
}
