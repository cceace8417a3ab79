//! Forward evaluation of the adaptive-margin softmax loss.
//!
//! The target logit is `s * cos(theta + g_angle) - g_add` with
//! `g_angle = -m * z_hat` and `g_add = m * z_hat + m`, where `z_hat` is the
//! batch-normalized feature norm clipped to `[-1, 1]`. At `z_hat = 0` this is
//! the additive cosine margin `s * cos(theta) - m`; at `z_hat = -1` it is the
//! additive angular margin `s * cos(theta + m)`.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Concentration hyperparameter commonly used with adaptive margins.
pub const DEFAULT_H: f64 = 0.33;

/// Below this batch standard deviation the normalized norm is 0.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBatchStats {
    pub mu_z: f64,
    pub sigma_z: f64,
    pub h: f64,
}

impl NormBatchStats {
    pub fn new(mu_z: f64, sigma_z: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidMarginParams("h must be positive"));
        }
        if !(sigma_z.is_finite() && sigma_z >= 0.0) {
            return Err(Error::InvalidMarginParams("sigma_z must be nonnegative"));
        }
        if !mu_z.is_finite() {
            return Err(Error::InvalidMarginParams("mu_z must be finite"));
        }
        Ok(NormBatchStats { mu_z, sigma_z, h })
    }

    /// Population mean and standard deviation of `norms`.
    pub fn from_norms(norms: &[f64], h: f64) -> Result<Self> {
        if norms.is_empty() {
            return Err(Error::TooFewSamples { required: 1, found: 0 });
        }
        let n = norms.len() as f64;
        let mu = norms.iter().sum::<f64>() / n;
        let var = norms.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
        Self::new(mu, var.sqrt(), h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginParams {
    pub m: f64,
    pub s: f64,
}

impl MarginParams {
    pub fn new(m: f64, s: f64) -> Result<Self> {
        if !(0.0..FRAC_PI_2).contains(&m) {
            return Err(Error::InvalidMarginParams("margin must lie in [0, pi/2)"));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidMarginParams("scale must be positive"));
        }
        Ok(MarginParams { m, s })
    }
}

pub fn normalized_feature_norm(norm: f64, stats: &NormBatchStats) -> f64 {
    if stats.sigma_z < SIGMA_FLOOR {
        return 0.0;
    }
    ((norm - stats.mu_z) / (stats.sigma_z / stats.h)).clamp(-1.0, 1.0)
}

/// Margin-adjusted logit for one class.
pub fn margin_score(cos_theta: f64, is_target: bool, z_hat: f64, params: &MarginParams) -> f64 {
    let cos_theta = cos_theta.clamp(-1.0, 1.0);
    if !is_target {
        return params.s * cos_theta;
    }
    let theta = cos_theta.acos();
    let g_angle = -params.m * z_hat;
    let g_add = params.m * z_hat + params.m;
    params.s * (theta + g_angle).cos() - g_add
}

/// Cross-entropy of the margin-adjusted target logit against the scaled
/// non-target logits.
pub fn adaface_loss(
    cos_thetas: &[f64],
    target_index: usize,
    z_hat: f64,
    params: &MarginParams,
) -> Result<f64> {
    if target_index >= cos_thetas.len() {
        return Err(Error::IndexOutOfRange {
            index: target_index,
            len: cos_thetas.len(),
        });
    }
    let logits: Vec<f64> = cos_thetas
        .iter()
        .enumerate()
        .map(|(j, &c)| margin_score(c, j == target_index, z_hat, params))
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    Ok((log_sum - logits[target_index]).max(0.0))
}
