//! Seeded synthetic multi-domain embeddings with known ground truth.
//!
//! Each subject gets a prototype drawn uniformly on the unit hypersphere.
//! Each medium draws a quality `q ~ Beta(alpha, beta)` from its domain
//! profile, then
//!
//! ```text
//! direction = normalize(prototype + noise_base * (1 - q) * g),  g ~ N(0, I)
//! feature   = direction * (norm_base + norm_gain * q + norm_jitter * e),  e ~ N(0, 1)
//! ```
//!
//! so low-quality media are both noisier and (on average) shorter. The
//! detection probability and the quality score of every medium are set to `q`.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bank::FeatureBank;
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, FeatureVector};
use crate::protocol::{seeded_rng, DomainId, MediaRecord};

/// Feature norms are floored here so every generated medium can be pooled.
pub const MIN_NORM: f64 = 1e-3;

/// Quality draws are kept inside the open unit interval.
const Q_EPS: f64 = 1e-6;

const STREAM_SYNTH: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub domain: DomainId,
    pub quality_alpha: f64,
    pub quality_beta: f64,
    pub media_min: usize,
    pub media_max: usize,
    pub noise_base: f64,
    pub norm_base: f64,
    pub norm_gain: f64,
    pub norm_jitter: f64,
}

impl DomainProfile {
    fn probe(domain: DomainId, alpha: f64, beta: f64) -> Self {
        DomainProfile {
            domain,
            quality_alpha: alpha,
            quality_beta: beta,
            media_min: 200,
            media_max: 1200,
            noise_base: 3.0,
            norm_base: 6.0,
            norm_gain: 20.0,
            norm_jitter: 1.5,
        }
    }

    /// Visible enrollment plus the seven default probe domains. Mean quality
    /// decreases as VIS-300m, VIS-400m, VIS-500m, SWIR-15m, VIS-GoPro,
    /// SWIR-30m, VIS-Surv, and the harder domains have wider quality spread.
    /// Probe domains hold 200..=1200 media per subject, about 45 times the
    /// mean legacy template size.
    pub fn default_profiles() -> Vec<DomainProfile> {
        vec![
            DomainProfile {
                media_min: 5,
                media_max: 10,
                ..Self::probe(DomainId::VISIBLE_ENROLLMENT, 12.0, 2.0)
            },
            DomainProfile {
                noise_base: 4.0,
                ..Self::probe(DomainId::VIS_SURVEILLANCE, 0.6, 0.9)
            },
            Self::probe(DomainId::VIS_GOPRO, 3.78, 3.22),
            Self::probe(DomainId::VIS_500M, 6.6, 3.4),
            Self::probe(DomainId::VIS_400M, 7.2, 2.8),
            Self::probe(DomainId::VIS_300M, 7.8, 2.2),
            Self::probe(DomainId::SWIR_15M, 4.8, 3.2),
            DomainProfile {
                noise_base: 3.5,
                ..Self::probe(DomainId::SWIR_30M, 0.8, 0.95)
            },
        ]
    }

    pub fn mean_quality(&self) -> f64 {
        self.quality_alpha / (self.quality_alpha + self.quality_beta)
    }

    pub fn quality_variance(&self) -> f64 {
        let (a, b) = (self.quality_alpha, self.quality_beta);
        a * b / ((a + b).powi(2) * (a + b + 1.0))
    }

    /// Population correlation between `norm_base + norm_gain * q + norm_jitter * e`
    /// and `q`, ignoring the norm floor.
    pub fn expected_norm_quality_correlation(&self) -> f64 {
        let sig = self.norm_gain * self.quality_variance().sqrt();
        sig / (sig * sig + self.norm_jitter * self.norm_jitter).sqrt()
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("domain {}: {msg}", self.domain.code())));
        if !(self.quality_alpha > 0.0 && self.quality_beta > 0.0)
            || !self.quality_alpha.is_finite()
            || !self.quality_beta.is_finite()
        {
            return bad("beta parameters must be positive");
        }
        if self.media_min < 1 || self.media_min > self.media_max {
            return bad("media range must satisfy 1 <= min <= max");
        }
        if !(self.noise_base >= 0.0 && self.noise_base.is_finite()) {
            return bad("noise_base must be nonnegative");
        }
        if !(self.norm_base.is_finite() && self.norm_gain.is_finite()) {
            return bad("norm model must be finite");
        }
        if !(self.norm_jitter >= 0.0 && self.norm_jitter.is_finite()) {
            return bad("norm_jitter must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub bank: FeatureBank,
    pub records: Vec<MediaRecord>,
    /// Unit-norm subject prototypes, one row per entry of `subject_ids`.
    pub prototypes: FeatureBank,
    pub subject_ids: Vec<String>,
}

pub fn subject_id(i: usize) -> String {
    format!("s{i:04}")
}

fn gaussian_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Generates the dataset from a single seeded stream: prototypes first,
/// then media by subject, then by profile order.
pub fn generate_dataset(profiles: &[DomainProfile], n_subjects: usize, dim: usize, seed: u64) -> Result<SynthDataset> {
    if n_subjects < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 subjects, got {n_subjects}")));
    }
    if dim < 2 {
        return Err(Error::InvalidConfig(format!("dimension must be at least 2, got {dim}")));
    }
    if profiles.is_empty() {
        return Err(Error::InvalidConfig("no domain profiles".into()));
    }
    for (i, p) in profiles.iter().enumerate() {
        p.validate()?;
        if profiles[..i].iter().any(|q| q.domain == p.domain) {
            return Err(Error::InvalidConfig(format!("domain {} listed twice", p.domain.code())));
        }
    }
    let betas = profiles
        .iter()
        .map(|p| Beta::new(p.quality_alpha, p.quality_beta))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut rng = seeded_rng(seed, STREAM_SYNTH);
    let mut prototypes = FeatureBank::with_capacity(dim, n_subjects)?;
    let mut proto_rows = Vec::with_capacity(n_subjects);
    for _ in 0..n_subjects {
        let mut p = gaussian_vector(&mut rng, dim);
        normalize(&mut p);
        prototypes.push(&p.iter().map(|&v| v as f32).collect::<Vec<_>>())?;
        proto_rows.push(p);
    }

    let subject_ids: Vec<String> = (0..n_subjects).map(subject_id).collect();
    let mut bank = FeatureBank::new(dim)?;
    let mut records = Vec::new();
    let mut row = vec![0f32; dim];
    for (s, proto) in proto_rows.iter().enumerate() {
        for (profile, beta) in profiles.iter().zip(&betas) {
            let count = rng.random_range(profile.media_min..=profile.media_max);
            for m in 0..count {
                let q = beta.sample(&mut rng).clamp(Q_EPS, 1.0 - Q_EPS);
                let sigma = profile.noise_base * (1.0 - q);
                let mut dir: Vec<f64> = gaussian_vector(&mut rng, dim)
                    .into_iter()
                    .zip(proto)
                    .map(|(g, p)| p + sigma * g)
                    .collect();
                normalize(&mut dir);
                let jitter: f64 = rng.sample(StandardNormal);
                let norm = (profile.norm_base + profile.norm_gain * q + profile.norm_jitter * jitter).max(MIN_NORM);
                for (dst, d) in row.iter_mut().zip(&dir) {
                    *dst = (d * norm) as f32;
                }
                let feature_index = bank.push(&row)?;
                records.push(MediaRecord {
                    media_id: format!("{}-d{:02}-{m:04}", subject_ids[s], profile.domain.code()),
                    subject_id: subject_ids[s].clone(),
                    domain: profile.domain,
                    feature_index,
                    detection_prob: Some(q),
                    quality_score: Some(q),
                });
            }
        }
    }

    Ok(SynthDataset {
        bank,
        records,
        prototypes,
        subject_ids,
    })
}

/// Index of the most cosine-similar prototype for every probe, by full
/// enumeration; ties go to the lowest index.
pub fn oracle_identify(probes: &[FeatureVector], prototypes: &[FeatureVector]) -> Result<Vec<usize>> {
    probes
        .iter()
        .map(|probe| {
            let mut best: Option<(usize, f64)> = None;
            for (j, proto) in prototypes.iter().enumerate() {
                let s = cosine_similarity(probe, proto)?;
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((j, s));
                }
            }
            best.map(|(j, _)| j).ok_or(Error::EmptyGallery)
        })
        .collect()
}
