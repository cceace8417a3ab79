//! 1:N identification metrics over pooled probe and gallery templates.
//!
//! Scores are cosine similarities. Ranking sorts gallery columns by
//! descending score and breaks ties by ascending column index. Open-set
//! thresholds are always placed at observed top-1 scores, so every reported
//! operating point can be checked by scanning those values.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::bank::FeatureBank;
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, l2_norm, pearson_correlation, sparsity};
use crate::pooling::{pool_template, Medium, PooledTemplate, PoolingKind, PoolingStrategy};
use crate::protocol::{DomainId, MediaRecord, TemplateSpec};

/// Probe-by-gallery similarity table with subject labels on both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    probe_labels: Vec<String>,
    gallery_labels: Vec<String>,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    /// `scores` is row-major with one row per probe.
    pub fn new(probe_labels: Vec<String>, gallery_labels: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        let expected = probe_labels.len() * gallery_labels.len();
        if scores.len() != expected {
            return Err(Error::LengthMismatch {
                left: scores.len(),
                right: expected,
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidScores("non-finite similarity"));
        }
        Ok(ScoreMatrix {
            probe_labels,
            gallery_labels,
            scores,
        })
    }

    pub fn n_probes(&self) -> usize {
        self.probe_labels.len()
    }

    pub fn n_gallery(&self) -> usize {
        self.gallery_labels.len()
    }

    pub fn probe_labels(&self) -> &[String] {
        &self.probe_labels
    }

    pub fn gallery_labels(&self) -> &[String] {
        &self.gallery_labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_gallery();
        &self.scores[i * n..(i + 1) * n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i)[j]
    }

    /// Applies `f` to every score.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.probe_labels.clone(),
            self.gallery_labels.clone(),
            self.scores.iter().map(|&s| f(s)).collect(),
        )
    }

    /// Column index and score of the best match in row `i`.
    pub fn top1(&self, i: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (j, &s) in self.row(i).iter().enumerate() {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        best
    }

    /// 1-based rank of column `j` in row `i`.
    pub fn rank_of(&self, i: usize, j: usize) -> usize {
        let row = self.row(i);
        let target = row[j];
        1 + row
            .iter()
            .enumerate()
            .filter(|&(c, &s)| s > target || (s == target && c < j))
            .count()
    }
}

pub fn score_probes(probes: &[PooledTemplate], gallery: &[PooledTemplate]) -> Result<ScoreMatrix> {
    let rows: Vec<Vec<f64>> = probes
        .par_iter()
        .map(|p| {
            gallery
                .iter()
                .map(|g| cosine_similarity(&p.feature, &g.feature))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    ScoreMatrix::new(
        probes.iter().map(|p| p.subject_id.clone()).collect(),
        gallery.iter().map(|g| g.subject_id.clone()).collect(),
        rows.into_iter().flatten().collect(),
    )
}

/// Cumulative match characteristic: entry `r` is the fraction of probes
/// whose mate ranks within the top `r + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmcCurve {
    pub rank_retrieval: Vec<f64>,
}

impl CmcCurve {
    pub fn from_ranks(ranks: &[usize], n_gallery: usize) -> Self {
        let mut counts = vec![0usize; n_gallery];
        for &r in ranks {
            counts[r - 1] += 1;
        }
        let total = ranks.len() as f64;
        let mut acc = 0;
        let rank_retrieval = counts
            .into_iter()
            .map(|c| {
                acc += c;
                acc as f64 / total
            })
            .collect();
        CmcCurve { rank_retrieval }
    }

    /// Retrieval rate at 1-based rank `k`; ranks beyond the gallery size
    /// report the final value.
    pub fn rank(&self, k: usize) -> f64 {
        assert!(k >= 1, "ranks are 1-based");
        match self.rank_retrieval.get(k - 1) {
            Some(&v) => v,
            None => self.rank_retrieval.last().copied().unwrap_or(0.0),
        }
    }
}

/// Best 1-based rank of a mate column for every probe.
pub fn mate_ranks(scores: &ScoreMatrix) -> Result<Vec<usize>> {
    (0..scores.n_probes())
        .map(|i| {
            let label = &scores.probe_labels[i];
            scores
                .gallery_labels
                .iter()
                .enumerate()
                .filter(|(_, g)| *g == label)
                .map(|(j, _)| scores.rank_of(i, j))
                .min()
                .ok_or_else(|| Error::MissingMate(label.clone()))
        })
        .collect()
}

pub fn closed_set_cmc(scores: &ScoreMatrix) -> Result<CmcCurve> {
    if scores.n_probes() == 0 {
        return Err(Error::EmptyProbeSet);
    }
    if scores.n_gallery() == 0 {
        return Err(Error::EmptyGallery);
    }
    let ranks = mate_ranks(scores)?;
    Ok(CmcCurve::from_ranks(&ranks, scores.n_gallery()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpenSetResult {
    pub fpir_target: f64,
    pub threshold: f64,
    /// FPIR actually achieved at `threshold`.
    pub fpir: f64,
    pub fnir: f64,
}

/// FNIR at a target FPIR.
///
/// The threshold is the smallest observed top-1 score (mated or non-mated)
/// at which the fraction of non-mated probes scoring at or above it is at
/// most `fpir_target`. If no observed score qualifies, the threshold sits
/// just above the highest non-mated score. A mated probe counts as a miss
/// when its top-1 identity is wrong or its top-1 score is below the
/// threshold.
pub fn open_set_eval(mated: &ScoreMatrix, nonmated: &ScoreMatrix, fpir_target: f64) -> Result<OpenSetResult> {
    if !(0.0..=1.0).contains(&fpir_target) {
        return Err(Error::InvalidFpirTarget(fpir_target));
    }
    if mated.n_probes() == 0 || nonmated.n_probes() == 0 {
        return Err(Error::EmptyProbeSet);
    }
    if mated.n_gallery() == 0 {
        return Err(Error::EmptyGallery);
    }
    if mated.gallery_labels != nonmated.gallery_labels {
        return Err(Error::InvalidProtocol(
            "mated and non-mated scores must use the same gallery".into(),
        ));
    }
    let gallery: BTreeSet<&String> = mated.gallery_labels.iter().collect();
    if let Some(p) = nonmated.probe_labels.iter().find(|p| gallery.contains(p)) {
        return Err(Error::InvalidProtocol(format!("non-mated probe {p} has a gallery mate")));
    }

    let mut nonmated_top: Vec<f64> = (0..nonmated.n_probes())
        .map(|i| nonmated.top1(i).expect("nonempty gallery").1)
        .collect();
    nonmated_top.sort_by(f64::total_cmp);
    let mated_top: Vec<(bool, f64)> = (0..mated.n_probes())
        .map(|i| {
            let (j, s) = mated.top1(i).expect("nonempty gallery");
            (mated.gallery_labels[j] == mated.probe_labels[i], s)
        })
        .collect();

    let n_nm = nonmated_top.len() as f64;
    let fpir_at = |t: f64| {
        let below = nonmated_top.partition_point(|&s| s < t);
        (nonmated_top.len() - below) as f64 / n_nm
    };

    let mut candidates: Vec<f64> = nonmated_top
        .iter()
        .copied()
        .chain(mated_top.iter().map(|&(_, s)| s))
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    // FPIR is nonincreasing in the threshold.
    let first_ok = candidates.partition_point(|&t| fpir_at(t) > fpir_target);
    let threshold = match candidates.get(first_ok) {
        Some(&t) => t,
        None => nonmated_top.last().copied().expect("nonempty").next_up(),
    };

    let misses = mated_top
        .iter()
        .filter(|&&(correct, s)| !correct || s < threshold)
        .count();
    Ok(OpenSetResult {
        fpir_target,
        threshold,
        fpir: fpir_at(threshold),
        fnir: misses as f64 / mated_top.len() as f64,
    })
}

/// Probe and gallery template memberships over one manifest and bank.
#[derive(Debug, Clone, Copy)]
pub struct IdentificationSet<'a> {
    pub records: &'a [MediaRecord],
    pub bank: &'a FeatureBank,
    pub probes: &'a [TemplateSpec],
    pub gallery: &'a [TemplateSpec],
}

/// Looks up the member features of `spec`.
pub fn template_media(records: &[MediaRecord], bank: &FeatureBank, spec: &TemplateSpec) -> Result<Vec<Medium>> {
    spec.members
        .iter()
        .map(|&i| {
            let r = records.get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: records.len(),
            })?;
            Ok(Medium {
                media_id: r.media_id.clone(),
                feature: bank.feature(r.feature_index)?,
                detection_prob: r.detection_prob,
            })
        })
        .collect()
}

/// Pools every spec; results keep the order of `specs`.
pub fn pool_specs(
    strategy: &PoolingStrategy,
    records: &[MediaRecord],
    bank: &FeatureBank,
    specs: &[TemplateSpec],
) -> Result<Vec<PooledTemplate>> {
    specs
        .par_iter()
        .map(|spec| {
            let media = template_media(records, bank, spec)?;
            pool_template(strategy, &media, &spec.subject_id, spec.domain)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainCmc {
    pub domain: DomainId,
    pub n_probes: usize,
    pub cmc: CmcCurve,
    /// Mean fraction of zero weights over the domain's probe templates.
    pub mean_sparsity: f64,
}

/// Pools probes with `strategy` and the gallery with `gallery_strategy`
/// (defaulting to `strategy`), then reports one CMC per probe domain in
/// ascending domain order.
pub fn evaluate_closed_set(
    strategy: &PoolingStrategy,
    gallery_strategy: Option<&PoolingStrategy>,
    set: &IdentificationSet<'_>,
) -> Result<Vec<DomainCmc>> {
    if set.probes.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    let gallery = pool_specs(gallery_strategy.unwrap_or(strategy), set.records, set.bank, set.gallery)?;
    let probes = pool_specs(strategy, set.records, set.bank, set.probes)?;
    let mut by_domain: BTreeMap<DomainId, Vec<PooledTemplate>> = BTreeMap::new();
    for p in probes {
        by_domain.entry(p.domain).or_default().push(p);
    }
    by_domain
        .into_iter()
        .map(|(domain, probes)| {
            let scores = score_probes(&probes, &gallery)?;
            let mean_sparsity = probes.iter().map(|p| sparsity(&p.weights)).sum::<f64>() / probes.len() as f64;
            Ok(DomainCmc {
                domain,
                n_probes: probes.len(),
                cmc: closed_set_cmc(&scores)?,
                mean_sparsity,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub domains: Vec<DomainCmc>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub kind: PoolingKind,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn domains(&self) -> Vec<DomainId> {
        self.rows
            .first()
            .map(|r| r.domains.iter().map(|d| d.domain).collect())
            .unwrap_or_default()
    }

    /// Row with the highest rank-1 rate for `domain`; ties go to the
    /// smallest lambda.
    pub fn best_for(&self, domain: DomainId) -> Option<(&SweepRow, &DomainCmc)> {
        let mut best: Option<(&SweepRow, &DomainCmc)> = None;
        for row in &self.rows {
            let Some(d) = row.domains.iter().find(|d| d.domain == domain) else {
                continue;
            };
            let better = match best {
                None => true,
                Some((b_row, b)) => {
                    let (r, br) = (d.cmc.rank(1), b.cmc.rank(1));
                    r > br || (r == br && row.lambda < b_row.lambda)
                }
            };
            if better {
                best = Some((row, d));
            }
        }
        best
    }
}

/// Full pool, score and CMC evaluation for every lambda.
pub fn lambda_sweep(
    kind: PoolingKind,
    lambdas: &[f64],
    gallery_strategy: Option<&PoolingStrategy>,
    set: &IdentificationSet<'_>,
) -> Result<SweepTable> {
    if lambdas.is_empty() {
        return Err(Error::InvalidLambda(f64::NAN));
    }
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let strategy = PoolingStrategy::new(kind, lambda)?;
            Ok(SweepRow {
                lambda,
                domains: evaluate_closed_set(&strategy, gallery_strategy, set)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable { kind, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormQualityRow {
    pub domain: DomainId,
    pub n: usize,
    /// `None` when the domain has fewer than two scored media or a constant series.
    pub pearson: Option<f64>,
}

/// Per-domain Pearson correlation between feature norms and quality scores,
/// over media that carry a quality score.
pub fn norm_quality_report(records: &[MediaRecord], bank: &FeatureBank) -> Result<Vec<NormQualityRow>> {
    let mut series: BTreeMap<DomainId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let Some(q) = r.quality_score else { continue };
        let norm = l2_norm(&bank.feature(r.feature_index)?);
        let entry = series.entry(r.domain).or_default();
        entry.0.push(norm);
        entry.1.push(q);
    }
    Ok(series
        .into_iter()
        .map(|(domain, (norms, quality))| NormQualityRow {
            domain,
            n: norms.len(),
            pearson: pearson_correlation(&norms, &quality).ok(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{FeatureVector, Weights};
    use proptest::prelude::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn template(subject: &str, v: &[f64]) -> PooledTemplate {
        PooledTemplate {
            feature: FeatureVector::new(v.to_vec()).unwrap(),
            weights: Weights::uniform(1).unwrap(),
            member_ids: vec![format!("{subject}-m")],
            subject_id: subject.into(),
            domain: DomainId::VIS_SURVEILLANCE,
            strategy: PoolingStrategy::average(),
        }
    }

    #[test]
    fn score_probes_hand_case() {
        let r = 1.0 / 2f64.sqrt();
        let probes = [template("a", &[1.0, 0.0]), template("b", &[0.0, 1.0])];
        let gallery = [template("a", &[1.0, 0.0]), template("b", &[r, r])];
        let m = score_probes(&probes, &gallery).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert!((m.get(0, 1) - r).abs() < 1e-15);
        assert_eq!(m.get(1, 0), 0.0);
        assert!((m.get(1, 1) - r).abs() < 1e-15);

        let orth = score_probes(&[template("z", &[0.0, 0.0, 1.0])], &[template("a", &[1.0, 0.0, 0.0]), template("b", &[0.0, 2.0, 0.0])]).unwrap();
        assert_eq!(orth.row(0), &[0.0, 0.0]);

        let zero = score_probes(&[template("z", &[0.0, 0.0])], &gallery);
        assert!(matches!(zero, Err(Error::ZeroNormInput)));
    }

    #[test]
    fn cmc_cases() {
        let m = ScoreMatrix::new(labels(&["a", "b"]), labels(&["a", "b"]), vec![1.0, 0.2, 0.1, 1.0]).unwrap();
        let cmc = closed_set_cmc(&m).unwrap();
        assert_eq!(cmc.rank(1), 1.0);

        let m = ScoreMatrix::new(labels(&["b"]), labels(&["a", "b", "c"]), vec![0.9, 0.5, 0.1]).unwrap();
        let cmc = closed_set_cmc(&m).unwrap();
        assert_eq!(cmc.rank_retrieval, vec![0.0, 1.0, 1.0]);
        assert_eq!(cmc.rank(5), 1.0);

        // Tie: mate at higher index loses.
        let m = ScoreMatrix::new(labels(&["b"]), labels(&["a", "b"]), vec![0.5, 0.5]).unwrap();
        assert_eq!(mate_ranks(&m).unwrap(), vec![2]);

        let m = ScoreMatrix::new(labels(&["x"]), labels(&["a"]), vec![0.5]).unwrap();
        assert!(matches!(closed_set_cmc(&m), Err(Error::MissingMate(_))));
    }

    #[test]
    fn matrix_validation() {
        assert!(ScoreMatrix::new(labels(&["a"]), labels(&["a", "b"]), vec![0.1]).is_err());
        assert!(ScoreMatrix::new(labels(&["a"]), labels(&["a"]), vec![f64::NAN]).is_err());
    }

    #[test]
    fn open_set_perfect_separation() {
        let mated = ScoreMatrix::new(labels(&["a", "b"]), labels(&["a", "b"]), vec![1.0, 0.1, 0.2, 1.0]).unwrap();
        let nonmated = ScoreMatrix::new(labels(&["x", "y"]), labels(&["a", "b"]), vec![-0.2, 0.0, -0.5, -0.1]).unwrap();
        let r = open_set_eval(&mated, &nonmated, 0.1).unwrap();
        assert_eq!(r.fnir, 0.0);
        assert_eq!(r.fpir, 0.0);
        assert!(r.threshold > 0.0 && r.threshold <= 1.0);
    }

    #[test]
    fn open_set_all_rejected() {
        let mated = ScoreMatrix::new(labels(&["a", "b"]), labels(&["a", "b"]), vec![0.1, 0.0, 0.0, 0.2]).unwrap();
        let nonmated = ScoreMatrix::new(labels(&["x", "y"]), labels(&["a", "b"]), vec![0.9, 0.0, 0.0, 0.8]).unwrap();
        let r = open_set_eval(&mated, &nonmated, 0.0).unwrap();
        assert_eq!(r.fnir, 1.0);
        assert_eq!(r.fpir, 0.0);
        assert!(r.threshold > 0.9);
    }

    #[test]
    fn open_set_full_fpir_counts_only_misidentification() {
        let mated = ScoreMatrix::new(labels(&["a", "b"]), labels(&["a", "b"]), vec![0.1, 0.0, 0.3, 0.2]).unwrap();
        let nonmated = ScoreMatrix::new(labels(&["x"]), labels(&["a", "b"]), vec![0.9, 0.0]).unwrap();
        let r = open_set_eval(&mated, &nonmated, 1.0).unwrap();
        assert_eq!(r.fnir, 0.5);
        assert!(r.threshold <= 0.1);
    }

    #[test]
    fn open_set_errors() {
        let m = ScoreMatrix::new(labels(&["a"]), labels(&["a"]), vec![1.0]).unwrap();
        let empty = ScoreMatrix::new(vec![], labels(&["a"]), vec![]).unwrap();
        assert!(matches!(open_set_eval(&m, &empty, 0.1), Err(Error::EmptyProbeSet)));
        assert!(matches!(open_set_eval(&m, &m, 0.1), Err(Error::InvalidProtocol(_))));
        assert!(matches!(open_set_eval(&m, &m, 1.5), Err(Error::InvalidFpirTarget(_))));
    }

    #[test]
    fn sweep_tie_goes_to_smallest_lambda() {
        let row = |lambda: f64, r1: f64| SweepRow {
            lambda,
            domains: vec![DomainCmc {
                domain: DomainId::VIS_GOPRO,
                n_probes: 1,
                cmc: CmcCurve { rank_retrieval: vec![r1, 1.0] },
                mean_sparsity: 0.0,
            }],
        };
        let t = SweepTable {
            kind: PoolingKind::Np,
            rows: vec![row(10.0, 0.5), row(2.0, 0.5), row(5.0, 0.25)],
        };
        assert_eq!(t.best_for(DomainId::VIS_GOPRO).unwrap().0.lambda, 2.0);
        assert!(t.best_for(DomainId::VIS_300M).is_none());
    }

    proptest! {
        #[test]
        fn cmc_is_monotone_and_complete(n in 2usize..12, seed in prop::collection::vec(-1.0f64..1.0, 144)) {
            let subjects: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
            let scores = seed[..n * n].to_vec();
            let m = ScoreMatrix::new(subjects.clone(), subjects, scores).unwrap();
            let cmc = closed_set_cmc(&m).unwrap();
            prop_assert!(cmc.rank_retrieval.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*cmc.rank_retrieval.last().unwrap(), 1.0);

            // Strictly increasing transforms keep every rank.
            let t = m.map(|s| (3.0 * s).exp() - 2.0).unwrap();
            prop_assert_eq!(mate_ranks(&m).unwrap(), mate_ranks(&t).unwrap());
        }
    }
}
