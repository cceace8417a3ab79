//! Template pooling: per-medium weights and the weighted template feature.
//!
//! Every strategy produces weights `c_i` and a template `r = sum_i c_i f_i`.
//!
//! | kind   | score `l_i`                                   | weights               |
//! |--------|-----------------------------------------------|-----------------------|
//! | AP     | none                                          | `1 / k`               |
//! | QP     | `min(0.5 * ln(p_i / (1 - p_i)), 7)`           | `softmax(lambda * l)` |
//! | NP     | `||f_i|| / max_j ||f_j||`                     | `softmax(lambda * l)` |
//! | NP*    | min-max normalized `||f_i||`                  | `softmax(lambda * l)` |
//! | SP     | `||f_i|| / max_j ||f_j||`                     | `sparsemax(lambda * l)` |
//!
//! QP scores come from face detection probabilities rather than the
//! features. NP, NP* and SP treat the feature norm as a quality estimate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    l2_norm, max_normalize_norms, min_max_normalize_norms, softmax, sparsemax, weighted_combine,
    FeatureVector, Weights,
};
use crate::protocol::DomainId;

/// Upper clamp on the detection-probability logit used by quality pooling.
pub const QUALITY_LOGIT_CAP: f64 = 7.0;

pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingKind {
    /// Uniform weights.
    Ap,
    /// Softmax over clamped detection-probability logits.
    Qp,
    /// Softmax over max-normalized feature norms.
    Np,
    /// Softmax over min-max normalized feature norms.
    NpStar,
    /// Sparsemax over max-normalized feature norms.
    Sp,
}

impl PoolingKind {
    pub const ALL: [PoolingKind; 5] = [
        PoolingKind::Ap,
        PoolingKind::Qp,
        PoolingKind::Np,
        PoolingKind::NpStar,
        PoolingKind::Sp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PoolingKind::Ap => "ap",
            PoolingKind::Qp => "qp",
            PoolingKind::Np => "np",
            PoolingKind::NpStar => "npstar",
            PoolingKind::Sp => "sp",
        }
    }
}

impl fmt::Display for PoolingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoolingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PoolingKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown pooling strategy {s:?} (expected ap, qp, np, npstar or sp)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolingStrategy {
    kind: PoolingKind,
    lambda: f64,
}

impl PoolingStrategy {
    /// `lambda` must be positive and finite unless `kind` is AP, which ignores it.
    pub fn new(kind: PoolingKind, lambda: f64) -> Result<Self> {
        if kind != PoolingKind::Ap && !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidLambda(lambda));
        }
        Ok(PoolingStrategy { kind, lambda })
    }

    pub fn with_default_lambda(kind: PoolingKind) -> Self {
        PoolingStrategy {
            kind,
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn average() -> Self {
        Self::with_default_lambda(PoolingKind::Ap)
    }

    pub fn kind(&self) -> PoolingKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// One member of a template.
#[derive(Debug, Clone, PartialEq)]
pub struct Medium {
    pub media_id: String,
    pub feature: FeatureVector,
    pub detection_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledTemplate {
    pub feature: FeatureVector,
    pub weights: Weights,
    pub member_ids: Vec<String>,
    pub subject_id: String,
    pub domain: DomainId,
    pub strategy: PoolingStrategy,
}

/// Clamped half-logit of a detection probability.
pub fn quality_logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidDetectionProb(p));
    }
    Ok((0.5 * (p / (1.0 - p)).ln()).min(QUALITY_LOGIT_CAP))
}

/// The per-medium scores `l_i` fed to softmax or sparsemax. AP has no
/// scores and yields all zeros.
pub fn quality_scores(
    kind: PoolingKind,
    features: &[FeatureVector],
    detection_probs: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if features.is_empty() {
        return Err(Error::EmptyTemplate);
    }
    let norms = || features.iter().map(l2_norm).collect::<Vec<_>>();
    match kind {
        PoolingKind::Ap => Ok(vec![0.0; features.len()]),
        PoolingKind::Qp => {
            let probs = detection_probs.ok_or(Error::MissingQualityScores)?;
            if probs.len() != features.len() {
                return Err(Error::MissingQualityScores);
            }
            probs.iter().map(|&p| quality_logit(p)).collect()
        }
        PoolingKind::Np | PoolingKind::Sp => max_normalize_norms(&norms()),
        PoolingKind::NpStar => min_max_normalize_norms(&norms()),
    }
}

pub fn compute_weights(
    strategy: &PoolingStrategy,
    features: &[FeatureVector],
    detection_probs: Option<&[f64]>,
) -> Result<Weights> {
    if strategy.kind == PoolingKind::Ap {
        return Weights::uniform(features.len());
    }
    let scores = quality_scores(strategy.kind, features, detection_probs)?;
    let scaled: Vec<f64> = scores.iter().map(|l| strategy.lambda * l).collect();
    match strategy.kind {
        PoolingKind::Sp => sparsemax(&scaled),
        _ => softmax(&scaled),
    }
}

/// Pools `media` into one template, preserving member order.
pub fn pool_template(
    strategy: &PoolingStrategy,
    media: &[Medium],
    subject_id: &str,
    domain: DomainId,
) -> Result<PooledTemplate> {
    let first = media.first().ok_or(Error::EmptyTemplate)?;
    let dim = first.feature.dim();
    if let Some(bad) = media.iter().find(|m| m.feature.dim() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: bad.feature.dim(),
        });
    }
    let features: Vec<FeatureVector> = media.iter().map(|m| m.feature.clone()).collect();
    let probs: Option<Vec<f64>> = media.iter().map(|m| m.detection_prob).collect();
    let weights = compute_weights(strategy, &features, probs.as_deref())?;
    let feature = weighted_combine(&features, &weights)?;
    Ok(PooledTemplate {
        feature,
        weights,
        member_ids: media.iter().map(|m| m.media_id.clone()).collect(),
        subject_id: subject_id.to_string(),
        domain,
        strategy: *strategy,
    })
}
