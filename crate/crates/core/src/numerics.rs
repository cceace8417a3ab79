//! Vector and weighting primitives shared by pooling, scoring and reporting.
//!
//! Every function here is a pure function of its inputs. Reductions run in
//! ascending index order so results do not depend on how callers schedule
//! work across threads.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Tolerance used when validating that weights sum to one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Spread below which min-max normalization is treated as degenerate.
pub const MIN_MAX_DEGENERATE_SPREAD: f64 = 1e-12;

/// A finite, non-empty embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidFeature("dimension must be at least 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature("non-finite component"));
        }
        Ok(FeatureVector(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&v| v as f32).collect()
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Nonnegative per-medium weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyTemplate);
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidWeights(format!("entry {bad} is not a nonnegative finite value")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidWeights(format!("entries sum to {sum}")));
        }
        Ok(Weights(values))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyTemplate);
        }
        Ok(Weights(vec![1.0 / k as f64; k]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check_scores(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::InvalidScores("score vector is empty"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidScores("non-finite score"));
    }
    Ok(())
}

fn check_same_dim(a: &FeatureVector, b: &FeatureVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &FeatureVector) -> f64 {
    dot(v.as_slice(), v.as_slice()).sqrt()
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    check_same_dim(a, b)?;
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNormInput);
    }
    Ok((dot(a.as_slice(), b.as_slice()) / (na * nb)).clamp(-1.0, 1.0))
}

/// Component-wise `sum_i w_i * f_i`, accumulated in ascending index order.
pub fn weighted_combine(features: &[FeatureVector], weights: &Weights) -> Result<FeatureVector> {
    let first = features.first().ok_or(Error::EmptyTemplate)?;
    if features.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: weights.len(),
        });
    }
    let mut acc = vec![0.0; first.dim()];
    for (f, &w) in features.iter().zip(weights.as_slice()) {
        check_same_dim(first, f)?;
        for (a, x) in acc.iter_mut().zip(f.as_slice()) {
            *a += w * x;
        }
    }
    FeatureVector::new(acc)
}

pub fn softmax(z: &[f64]) -> Result<Weights> {
    check_scores(z)?;
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(Weights(exps.into_iter().map(|e| e / total).collect()))
}

/// Euclidean projection of `z` onto the probability simplex.
///
/// Sort-based closed form: with `z` sorted descending, the support size is
/// the largest `s` with `1 + s * z_(s) > sum_{j<=s} z_(j)`, the threshold is
/// `tau = (sum_{j<=s} z_(j) - 1) / s` and `p_i = max(z_i - tau, 0)`. Ties in
/// the sort are broken by ascending index.
pub fn sparsemax(z: &[f64]) -> Result<Weights> {
    check_scores(z)?;
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| {
        z[b].partial_cmp(&z[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut cumsum = 0.0;
    let mut support = 0;
    let mut support_sum = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        let s = (rank + 1) as f64;
        cumsum += z[idx];
        if 1.0 + s * z[idx] > cumsum {
            support = rank + 1;
            support_sum = cumsum;
        }
    }
    // The top element always satisfies the support condition.
    debug_assert!(support >= 1);
    let tau = (support_sum - 1.0) / support as f64;

    let mut p: Vec<f64> = z.iter().map(|v| (v - tau).max(0.0)).collect();
    // Elements outside the support can sit a rounding error above tau; the
    // closed form assigns them zero.
    for &idx in &order[support..] {
        p[idx] = 0.0;
    }
    Ok(Weights(p))
}

fn check_positive(norms: &[f64]) -> Result<()> {
    if norms.is_empty() {
        return Err(Error::EmptyTemplate);
    }
    if norms.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
        return Err(Error::ZeroNormInput);
    }
    Ok(())
}

/// `x_i / max_j x_j`; the largest entry maps to exactly 1.
pub fn max_normalize_norms(norms: &[f64]) -> Result<Vec<f64>> {
    check_positive(norms)?;
    let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(norms.iter().map(|n| n / max).collect())
}

/// `(x_i - min) / (max - min)`, or all zeros when the spread is below
/// [`MIN_MAX_DEGENERATE_SPREAD`].
pub fn min_max_normalize_norms(norms: &[f64]) -> Result<Vec<f64>> {
    check_positive(norms)?;
    let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = max - min;
    if spread < MIN_MAX_DEGENERATE_SPREAD {
        return Ok(vec![0.0; norms.len()]);
    }
    Ok(norms.iter().map(|n| (n - min) / spread).collect())
}

/// Fraction of weights that are exactly zero.
pub fn sparsity(w: &Weights) -> f64 {
    let zeros = w.as_slice().iter().filter(|&&v| v == 0.0).count();
    zeros as f64 / w.len() as f64
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            found: x.len(),
        });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantSeries);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn feature_vector_rejects_empty_and_nan() {
        assert!(FeatureVector::new(vec![]).is_err());
        assert!(FeatureVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(FeatureVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(l2_norm(&fv(&[3.0, 4.0])), 5.0);
        assert_eq!(l2_norm(&fv(&[0.0, 0.0, 0.0])), 0.0);
        let mut e = vec![0.0; 17];
        e[9] = 1.0;
        assert_eq!(l2_norm(&fv(&e)), 1.0);
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&fv(&[1.0, 1.0]), &fv(&[2.0, 2.0])).unwrap();
        assert!((c - 1.0).abs() < 1e-15 && c <= 1.0);
        assert!(matches!(
            cosine_similarity(&fv(&[0.0, 0.0]), &fv(&[1.0, 0.0])),
            Err(Error::ZeroNormInput)
        ));
        assert!(matches!(
            cosine_similarity(&fv(&[1.0]), &fv(&[1.0, 0.0])),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn combine_cases() {
        let w = Weights::new(vec![1.0, 0.0]).unwrap();
        let r = weighted_combine(&[fv(&[7.0, 7.0]), fv(&[9.0, 9.0])], &w).unwrap();
        assert_eq!(r.as_slice(), &[7.0, 7.0]);

        let w = Weights::new(vec![0.5, 0.5]).unwrap();
        let r = weighted_combine(&[fv(&[1.0, 0.0]), fv(&[0.0, 1.0])], &w).unwrap();
        assert_eq!(r.as_slice(), &[0.5, 0.5]);

        let w = Weights::new(vec![0.25, 0.75]).unwrap();
        let r = weighted_combine(&[fv(&[4.0, 0.0]), fv(&[0.0, 4.0])], &w).unwrap();
        assert_eq!(r.as_slice(), &[1.0, 3.0]);

        let w = Weights::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            weighted_combine(&[fv(&[1.0]), fv(&[1.0, 2.0])], &w),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(weighted_combine(&[], &w), Err(Error::EmptyTemplate)));
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap().as_slice(), &[0.5, 0.5]);
        let w = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert_close(w.as_slice(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15);
        let shifted = softmax(&[1001.0, 1000.0, 999.0]).unwrap();
        let base = softmax(&[1.0, 0.0, -1.0]).unwrap();
        assert_close(shifted.as_slice(), base.as_slice(), 1e-12);
        assert!(softmax(&[]).is_err());
        assert!(softmax(&[f64::NAN]).is_err());
    }

    #[test]
    fn sparsemax_cases() {
        for k in 1..8 {
            let w = sparsemax(&vec![-3.25; k]).unwrap();
            assert_close(w.as_slice(), &vec![1.0 / k as f64; k], 1e-15);
        }
        // Frozen from support enumeration.
        assert_eq!(sparsemax(&[2.0, 0.0]).unwrap().as_slice(), &[1.0, 0.0]);
        assert_close(sparsemax(&[0.5, 0.0]).unwrap().as_slice(), &[0.75, 0.25], 1e-15);
        let w = sparsemax(&[10.0, 0.0, 0.0]).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0, 0.0]);
        assert!((sparsity(&w) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_cases() {
        assert_eq!(max_normalize_norms(&[10.0, 5.0]).unwrap(), vec![1.0, 0.5]);
        assert_eq!(max_normalize_norms(&[7.0, 7.0, 7.0]).unwrap(), vec![1.0; 3]);
        assert_eq!(max_normalize_norms(&[1.0]).unwrap(), vec![1.0]);
        assert!(matches!(max_normalize_norms(&[1.0, 0.0]), Err(Error::ZeroNormInput)));

        assert_eq!(min_max_normalize_norms(&[10.0, 5.0, 7.5]).unwrap(), vec![1.0, 0.0, 0.5]);
        assert_eq!(min_max_normalize_norms(&[4.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(min_max_normalize_norms(&[0.8, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(min_max_normalize_norms(&[-1.0]), Err(Error::ZeroNormInput)));
    }

    #[test]
    fn sparsity_cases() {
        assert_eq!(sparsity(&Weights::new(vec![0.5, 0.5]).unwrap()), 0.0);
        assert_eq!(sparsity(&Weights::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap()), 0.75);
    }

    #[test]
    fn pearson_cases() {
        assert!((pearson_correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_correlation(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        let r = pearson_correlation(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert!(matches!(
            pearson_correlation(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::ConstantSeries)
        ));
        assert!(matches!(
            pearson_correlation(&[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn weights_validation() {
        assert!(Weights::new(vec![0.5, 0.6]).is_err());
        assert!(Weights::new(vec![1.5, -0.5]).is_err());
        assert!(Weights::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(z in prop::collection::vec(-50.0f64..50.0, 1..40), c in -500.0f64..500.0) {
            let w = softmax(&z).unwrap();
            let sum: f64 = w.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(w.as_slice().iter().all(|&v| v > 0.0));
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let ws = softmax(&shifted).unwrap();
            for (a, b) in w.as_slice().iter().zip(ws.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn sparsemax_is_ordered_distribution(z in prop::collection::vec(-5.0f64..5.0, 1..30)) {
            let p = sparsemax(&z).unwrap();
            let p = p.as_slice();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            for i in 0..z.len() {
                for j in 0..z.len() {
                    if z[i] >= z[j] {
                        prop_assert!(p[i] >= p[j]);
                    }
                }
            }
        }

        #[test]
        fn uniform_combine_is_mean(rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 1..20)) {
            let features: Vec<FeatureVector> = rows.iter().map(|r| fv(r)).collect();
            let k = features.len();
            let pooled = weighted_combine(&features, &Weights::uniform(k).unwrap()).unwrap();
            for d in 0..4 {
                let mean = rows.iter().map(|r| r[d]).sum::<f64>() / k as f64;
                let got = pooled.as_slice()[d];
                prop_assert!((got - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            }
        }

        #[test]
        fn pearson_affine_invariant(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
            a in 0.1f64..10.0, b in -10.0f64..10.0,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(r) = pearson_correlation(&x, &y) {
                let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let r2 = pearson_correlation(&xt, &y).unwrap();
                prop_assert!((r - r2).abs() < 1e-9);
            }
        }
    }
}
