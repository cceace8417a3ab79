//! Media manifests, domains, galleries and probe-template assembly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DOMAIN_LABELS: [&str; 17] = [
    "Visible enrollment",
    "Visible surveillance",
    "Visible gopro",
    "Visible 500m",
    "Visible 400m",
    "Visible 300m",
    "Visible 500m 400m walking",
    "MWIR 15m",
    "MWIR 30m",
    "LWIR 15m",
    "LWIR 30m",
    "SWIR enrollment nofilter",
    "SWIR enrollment (captured at 1150 nm)",
    "SWIR enrollment (captured at 1350 nm)",
    "SWIR enrollment (captured at 1550 nm)",
    "SWIR 15m",
    "SWIR 30m",
];

/// One of the 17 capture domains, identified by its numeric code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct DomainId(u8);

impl DomainId {
    pub const VISIBLE_ENROLLMENT: DomainId = DomainId(0);
    pub const VIS_SURVEILLANCE: DomainId = DomainId(1);
    pub const VIS_GOPRO: DomainId = DomainId(2);
    pub const VIS_500M: DomainId = DomainId(3);
    pub const VIS_400M: DomainId = DomainId(4);
    pub const VIS_300M: DomainId = DomainId(5);
    pub const SWIR_15M: DomainId = DomainId(15);
    pub const SWIR_30M: DomainId = DomainId(16);

    /// Probe domains evaluated by default. Thermal (MWIR/LWIR) domains are
    /// left out.
    pub const DEFAULT_PROBE_DOMAINS: [DomainId; 7] = [
        DomainId::VIS_SURVEILLANCE,
        DomainId::VIS_GOPRO,
        DomainId::VIS_500M,
        DomainId::VIS_400M,
        DomainId::VIS_300M,
        DomainId::SWIR_15M,
        DomainId::SWIR_30M,
    ];

    pub fn new(code: u8) -> Result<Self> {
        if usize::from(code) < DOMAIN_LABELS.len() {
            Ok(DomainId(code))
        } else {
            Err(Error::UnknownDomain(code))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        DOMAIN_LABELS[usize::from(self.0)]
    }

    /// Short label used in report tables, e.g. `VIS-Surv`.
    pub fn short_label(self) -> &'static str {
        match self.0 {
            0 => "VIS-Enroll",
            1 => "VIS-Surv",
            2 => "VIS-GoPro",
            3 => "VIS-500m",
            4 => "VIS-400m",
            5 => "VIS-300m",
            6 => "VIS-Walking",
            7 => "MWIR-15m",
            8 => "MWIR-30m",
            9 => "LWIR-15m",
            10 => "LWIR-30m",
            11 => "SWIR-Enroll",
            12 => "SWIR-Enroll-1150",
            13 => "SWIR-Enroll-1350",
            14 => "SWIR-Enroll-1550",
            15 => "SWIR-15m",
            _ => "SWIR-30m",
        }
    }

    pub fn is_thermal(self) -> bool {
        (7..=10).contains(&self.0)
    }

    pub fn all() -> impl Iterator<Item = DomainId> {
        (0..DOMAIN_LABELS.len() as u8).map(DomainId)
    }
}

impl TryFrom<u8> for DomainId {
    type Error = Error;

    fn try_from(code: u8) -> Result<Self> {
        DomainId::new(code)
    }
}

impl From<DomainId> for u8 {
    fn from(d: DomainId) -> u8 {
        d.0
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Domain {}: {}", self.0, self.label())
    }
}

/// One medium's identity and quality metadata. This is also the manifest
/// line format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaRecord {
    pub media_id: String,
    pub subject_id: String,
    pub domain: DomainId,
    pub feature_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_records: usize,
    pub n_subjects: usize,
    /// Media ids that occur more than once, with every record position.
    pub duplicate_media_ids: Vec<(String, Vec<usize>)>,
    /// `(record position, feature_index)` pairs outside the bank.
    pub out_of_range: Vec<(usize, usize)>,
    /// `(record position, value)` pairs with a detection probability outside (0, 1).
    pub invalid_detection_probs: Vec<(usize, f64)>,
    /// `(subject, domain code)` pairs with no media although the domain
    /// appears in the manifest.
    pub missing_domain_media: Vec<(String, u8)>,
}

impl ValidationReport {
    /// True when no hard errors were found. Missing domain coverage is
    /// reported but does not fail validation.
    pub fn is_valid(&self) -> bool {
        self.duplicate_media_ids.is_empty()
            && self.out_of_range.is_empty()
            && self.invalid_detection_probs.is_empty()
    }
}

pub fn validate_manifest(records: &[MediaRecord], bank_size: usize) -> ValidationReport {
    let mut positions: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut coverage: BTreeMap<&str, BTreeSet<DomainId>> = BTreeMap::new();
    let mut domains = BTreeSet::new();
    let mut report = ValidationReport {
        n_records: records.len(),
        ..Default::default()
    };

    for (pos, r) in records.iter().enumerate() {
        positions.entry(&r.media_id).or_default().push(pos);
        coverage.entry(&r.subject_id).or_default().insert(r.domain);
        domains.insert(r.domain);
        if r.feature_index >= bank_size {
            report.out_of_range.push((pos, r.feature_index));
        }
        if let Some(p) = r.detection_prob {
            if !(p > 0.0 && p < 1.0) {
                report.invalid_detection_probs.push((pos, p));
            }
        }
    }

    report.n_subjects = coverage.len();
    report.duplicate_media_ids = positions
        .into_iter()
        .filter(|(_, p)| p.len() > 1)
        .map(|(id, p)| (id.to_string(), p))
        .collect();
    for (subject, seen) in &coverage {
        for d in domains.difference(seen) {
            report.missing_domain_media.push((subject.to_string(), d.code()));
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// Random subset of 1..=30 media per template.
    Legacy,
    /// Every available medium.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub legacy_min: usize,
    pub legacy_max: usize,
    pub seed: u64,
}

impl ProtocolConfig {
    pub const LEGACY_MIN: usize = 1;
    pub const LEGACY_MAX: usize = 30;

    pub fn legacy(seed: u64) -> Self {
        ProtocolConfig {
            kind: ProtocolKind::Legacy,
            legacy_min: Self::LEGACY_MIN,
            legacy_max: Self::LEGACY_MAX,
            seed,
        }
    }

    pub fn exhaustive(seed: u64) -> Self {
        ProtocolConfig {
            kind: ProtocolKind::Exhaustive,
            ..Self::legacy(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.legacy_min < 1 || self.legacy_min > self.legacy_max {
            return Err(Error::InvalidProtocol(format!(
                "legacy range [{}, {}] must satisfy 1 <= min <= max",
                self.legacy_min, self.legacy_max
            )));
        }
        Ok(())
    }
}

/// Members of one (subject, domain) template, as positions into the
/// manifest in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSpec {
    pub subject_id: String,
    pub domain: DomainId,
    pub members: Vec<usize>,
}

impl TemplateSpec {
    pub fn media_ids<'a>(&'a self, records: &'a [MediaRecord]) -> impl Iterator<Item = &'a str> + 'a {
        self.members.iter().map(move |&i| records[i].media_id.as_str())
    }
}

/// Stream ids keep the generators for different protocol steps independent
/// under a shared seed.
pub(crate) const STREAM_ASSEMBLY: u64 = 1;
pub(crate) const STREAM_GALLERY_SPLIT: u64 = 2;

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Builds one template per `(subject, domain)` pair, iterating subjects in
/// lexicographic order and domains by ascending code. Legacy templates draw
/// a size `U` uniformly from `[legacy_min, legacy_max]` and keep a uniform
/// random subset of `min(k, U)` media.
pub fn assemble_templates(
    records: &[MediaRecord],
    config: &ProtocolConfig,
    subjects: &BTreeSet<String>,
    domains: &[DomainId],
) -> Result<Vec<TemplateSpec>> {
    config.validate()?;
    let mut domains = domains.to_vec();
    domains.sort();
    domains.dedup();

    let mut by_pair: HashMap<(&str, DomainId), Vec<usize>> = HashMap::new();
    for (pos, r) in records.iter().enumerate() {
        by_pair.entry((&r.subject_id, r.domain)).or_default().push(pos);
    }

    let mut rng = seeded_rng(config.seed, STREAM_ASSEMBLY);
    let mut out = Vec::with_capacity(subjects.len() * domains.len());
    for subject in subjects {
        for &domain in &domains {
            let all = by_pair
                .get(&(subject.as_str(), domain))
                .filter(|m| !m.is_empty())
                .ok_or_else(|| Error::EmptyDomain {
                    subject: subject.clone(),
                    domain: domain.code(),
                })?;
            let members = match config.kind {
                ProtocolKind::Exhaustive => all.clone(),
                ProtocolKind::Legacy => {
                    let target = rng.random_range(config.legacy_min..=config.legacy_max);
                    let size = target.min(all.len());
                    let mut picked = index::sample(&mut rng, all.len(), size).into_vec();
                    picked.sort_unstable();
                    picked.into_iter().map(|i| all[i]).collect()
                }
            };
            out.push(TemplateSpec {
                subject_id: subject.clone(),
                domain,
                members,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GalleryId {
    G1,
    G2,
}

impl fmt::Display for GalleryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GalleryId::G1 => f.write_str("G1"),
            GalleryId::G2 => f.write_str("G2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GallerySpec {
    pub gallery_id: GalleryId,
    pub subject_ids: BTreeSet<String>,
}

/// Seeded shuffle of `subject_ids`; the first `ceil(n / 2)` go to G1 and
/// the rest to G2.
pub fn split_galleries(subject_ids: &[String], seed: u64) -> Result<(GallerySpec, GallerySpec)> {
    let unique: BTreeSet<&String> = subject_ids.iter().collect();
    if unique.len() != subject_ids.len() {
        return Err(Error::InvalidProtocol("duplicate subject ids".into()));
    }
    if subject_ids.len() < 2 {
        return Err(Error::TooFewSubjects(subject_ids.len()));
    }
    let mut shuffled = subject_ids.to_vec();
    shuffled.shuffle(&mut seeded_rng(seed, STREAM_GALLERY_SPLIT));
    let g2 = shuffled.split_off(subject_ids.len().div_ceil(2));
    Ok((
        GallerySpec {
            gallery_id: GalleryId::G1,
            subject_ids: shuffled.into_iter().collect(),
        },
        GallerySpec {
            gallery_id: GalleryId::G2,
            subject_ids: g2.into_iter().collect(),
        },
    ))
}

/// Distinct subject ids of `records` in lexicographic order.
pub fn subjects_of(records: &[MediaRecord]) -> BTreeSet<String> {
    records.iter().map(|r| r.subject_id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, subject: &str, domain: u8, idx: usize) -> MediaRecord {
        MediaRecord {
            media_id: id.into(),
            subject_id: subject.into(),
            domain: DomainId::new(domain).unwrap(),
            feature_index: idx,
            detection_prob: None,
            quality_score: None,
        }
    }

    fn subjects(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    /// `n` media for subject `s` in domain 1.
    fn media_for(s: &str, n: usize, offset: usize) -> Vec<MediaRecord> {
        (0..n).map(|i| record(&format!("{s}-{i}"), s, 1, offset + i)).collect()
    }

    #[test]
    fn domain_labels() {
        assert_eq!(DomainId::new(0).unwrap().label(), "Visible enrollment");
        assert_eq!(DomainId::new(16).unwrap().label(), "SWIR 30m");
        assert!(DomainId::new(17).is_err());
        assert_eq!(DomainId::all().count(), 17);
        assert!(DomainId::DEFAULT_PROBE_DOMAINS.iter().all(|d| !d.is_thermal()));
        assert_eq!(DomainId::all().filter(|d| d.is_thermal()).count(), 4);
    }

    #[test]
    fn validate_empty() {
        let r = validate_manifest(&[], 0);
        assert!(r.is_valid());
        assert_eq!(r.n_subjects, 0);
        assert_eq!(r, ValidationReport::default());
    }

    #[test]
    fn validate_flags_problems() {
        let mut recs = vec![
            record("a", "s1", 0, 0),
            record("b", "s1", 1, 1),
            record("a", "s2", 0, 2),
        ];
        recs[1].detection_prob = Some(1.0);
        let r = validate_manifest(&recs, 2);
        assert!(!r.is_valid());
        assert_eq!(r.duplicate_media_ids, vec![("a".to_string(), vec![0, 2])]);
        assert_eq!(r.out_of_range, vec![(2, 2)]);
        assert_eq!(r.invalid_detection_probs, vec![(1, 1.0)]);
        assert_eq!(r.missing_domain_media, vec![("s2".to_string(), 1)]);
        assert_eq!(r.n_subjects, 2);
    }

    #[test]
    fn legacy_single_medium() {
        let recs = media_for("s", 1, 0);
        let t = assemble_templates(&recs, &ProtocolConfig::legacy(3), &subjects(&["s"]), &[DomainId::new(1).unwrap()]).unwrap();
        assert_eq!(t[0].members, vec![0]);
    }

    #[test]
    fn exhaustive_keeps_everything() {
        let recs = media_for("s", 500, 0);
        let t = assemble_templates(&recs, &ProtocolConfig::exhaustive(3), &subjects(&["s"]), &[DomainId::new(1).unwrap()]).unwrap();
        assert_eq!(t[0].members, (0..500).collect::<Vec<_>>());
        assert_eq!(t[0].media_ids(&recs).next(), Some("s-0"));
    }

    #[test]
    fn legacy_is_deterministic_and_bounded() {
        let mut recs = media_for("a", 100, 0);
        recs.extend(media_for("b", 7, 100));
        let subs = subjects(&["a", "b"]);
        let d = [DomainId::new(1).unwrap()];
        let cfg = ProtocolConfig::legacy(11);
        let t1 = assemble_templates(&recs, &cfg, &subs, &d).unwrap();
        let t2 = assemble_templates(&recs, &cfg, &subs, &d).unwrap();
        assert_eq!(t1, t2);
        for t in &t1 {
            assert!((1..=30).contains(&t.members.len()));
            assert!(t.members.windows(2).all(|w| w[0] < w[1]));
            assert!(t.members.iter().all(|&i| recs[i].subject_id == t.subject_id));
        }
        assert!(t1[1].members.len() <= 7);
    }

    #[test]
    fn empty_domain_is_an_error() {
        let recs = media_for("s", 3, 0);
        let err = assemble_templates(&recs, &ProtocolConfig::exhaustive(0), &subjects(&["s"]), &[DomainId::VIS_300M]);
        assert!(matches!(err, Err(Error::EmptyDomain { domain: 5, .. })));
    }

    #[test]
    fn invalid_legacy_range() {
        let cfg = ProtocolConfig {
            legacy_min: 5,
            legacy_max: 4,
            ..ProtocolConfig::legacy(0)
        };
        assert!(cfg.validate().is_err());
        let cfg = ProtocolConfig {
            legacy_min: 0,
            ..ProtocolConfig::legacy(0)
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn gallery_split_sizes() {
        let ids: Vec<String> = (0..251).map(|i| format!("subj{i:03}")).collect();
        let (g1, g2) = split_galleries(&ids, 5).unwrap();
        assert_eq!(g1.subject_ids.len(), 126);
        assert_eq!(g2.subject_ids.len(), 125);
        assert!(g1.subject_ids.is_disjoint(&g2.subject_ids));
        assert_eq!(split_galleries(&ids, 5).unwrap(), (g1, g2));

        let (a, b) = split_galleries(&ids[..2], 0).unwrap();
        assert_eq!((a.subject_ids.len(), b.subject_ids.len()), (1, 1));
        assert!(matches!(split_galleries(&ids[..1], 0), Err(Error::TooFewSubjects(1))));
    }

    #[test]
    fn manifest_record_json_shape() {
        let mut r = record("m1", "s1", 16, 3);
        r.detection_prob = Some(0.5);
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(
            line,
            r#"{"media_id":"m1","subject_id":"s1","domain":16,"feature_index":3,"detection_prob":0.5}"#
        );
        assert_eq!(serde_json::from_str::<MediaRecord>(&line).unwrap(), r);
        assert!(serde_json::from_str::<MediaRecord>(&line.replace("16", "17")).is_err());
    }

    proptest! {
        #[test]
        fn exhaustive_membership_is_full_set(counts in prop::collection::vec((1usize..20, 0u8..3), 1..10)) {
            let mut recs = Vec::new();
            for (s, &(n, d)) in counts.iter().enumerate() {
                for i in 0..n {
                    recs.push(record(&format!("{s}-{i}"), &format!("s{s}"), d, recs.len()));
                }
            }
            prop_assert_eq!(subjects_of(&recs).len(), counts.len());
            for (s, &(_, d)) in counts.iter().enumerate() {
                let one: BTreeSet<String> = [format!("s{s}")].into_iter().collect();
                let got = assemble_templates(&recs, &ProtocolConfig::exhaustive(1), &one, &[DomainId::new(d).unwrap()]).unwrap();
                let expected: BTreeSet<usize> = recs.iter().enumerate()
                    .filter(|(_, r)| r.subject_id == format!("s{s}") && r.domain.code() == d)
                    .map(|(i, _)| i).collect();
                prop_assert_eq!(got[0].members.iter().copied().collect::<BTreeSet<_>>(), expected);
            }
        }

        #[test]
        fn split_is_disjoint_cover(n in 2usize..60, seed in any::<u64>()) {
            let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
            let (g1, g2) = split_galleries(&ids, seed).unwrap();
            prop_assert!(g1.subject_ids.is_disjoint(&g2.subject_ids));
            prop_assert_eq!(g1.subject_ids.len() + g2.subject_ids.len(), n);
            prop_assert_eq!(g1.subject_ids.len(), n.div_ceil(2));
        }
    }
}
