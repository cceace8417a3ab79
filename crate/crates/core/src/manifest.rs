//! Line-delimited JSON manifests.
//!
//! A media manifest holds one [`MediaRecord`] per line:
//!
//! ```text
//! {"media_id":"s0007-d16-0003","subject_id":"s0007","domain":16,"feature_index":412,"detection_prob":0.41,"quality_score":0.41}
//! ```
//!
//! `detection_prob` and `quality_score` are optional. Blank lines are
//! ignored. A template manifest written by `pool` uses the same framing with
//! [`TemplateRecord`] lines.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pooling::{PoolingKind, PooledTemplate};
use crate::protocol::{DomainId, MediaRecord};

/// One pooled template; `template_index` is its row in the pooled bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub template_index: usize,
    pub subject_id: String,
    pub domain: DomainId,
    pub strategy: PoolingKind,
    pub lambda: f64,
    pub member_ids: Vec<String>,
    pub weights: Vec<f64>,
}

impl TemplateRecord {
    pub fn from_template(template_index: usize, t: &PooledTemplate) -> Self {
        TemplateRecord {
            template_index,
            subject_id: t.subject_id.clone(),
            domain: t.domain,
            strategy: t.strategy.kind(),
            lambda: t.strategy.lambda(),
            member_ids: t.member_ids.clone(),
            weights: t.weights.as_slice().to_vec(),
        }
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<MediaRecord>> {
    read_jsonl(path)
}

pub fn write_manifest(records: &[MediaRecord], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(records, path)
}
