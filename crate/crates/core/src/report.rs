//! CSV result tables and their JSON mirrors.
//!
//! Rates are written as percentages with two decimals. Lambda is left empty
//! for average pooling, which has no temperature.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{CmcCurve, NormQualityRow, OpenSetResult};
use crate::pooling::{PoolingKind, PoolingStrategy};
use crate::protocol::DomainId;

/// `fraction` as a percentage rounded to two decimals.
pub fn percent(fraction: f64) -> f64 {
    (fraction * 10_000.0).round() / 100.0
}

fn fmt_percent(pct: f64) -> String {
    format!("{pct:.2}")
}

fn fmt_lambda(lambda: Option<f64>) -> String {
    lambda.map(|l| l.to_string()).unwrap_or_default()
}

fn strategy_lambda(s: &PoolingStrategy) -> Option<f64> {
    (s.kind() != PoolingKind::Ap).then_some(s.lambda())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub strategy: PoolingKind,
    pub lambda: Option<f64>,
    pub domain: u8,
    pub domain_label: &'static str,
    /// Percent.
    pub rank1: f64,
    /// Percent.
    pub rank5: f64,
}

impl RankRow {
    pub fn new(strategy: &PoolingStrategy, domain: DomainId, cmc: &CmcCurve) -> Self {
        RankRow {
            strategy: strategy.kind(),
            lambda: strategy_lambda(strategy),
            domain: domain.code(),
            domain_label: domain.short_label(),
            rank1: percent(cmc.rank(1)),
            rank5: percent(cmc.rank(5)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpenSetRow {
    pub strategy: PoolingKind,
    pub lambda: Option<f64>,
    pub domain: u8,
    pub domain_label: &'static str,
    pub fpir_target: f64,
    pub threshold: f64,
    pub fpir: f64,
    /// Percent.
    pub fnir: f64,
}

impl OpenSetRow {
    pub fn new(strategy: &PoolingStrategy, domain: DomainId, r: &OpenSetResult) -> Self {
        OpenSetRow {
            strategy: strategy.kind(),
            lambda: strategy_lambda(strategy),
            domain: domain.code(),
            domain_label: domain.short_label(),
            fpir_target: r.fpir_target,
            threshold: r.threshold,
            fpir: r.fpir,
            fnir: percent(r.fnir),
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_rank_csv(rows: &[RankRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    w.write_record(["strategy", "lambda", "domain", "rank1", "rank5"])?;
    for r in rows {
        w.write_record([
            r.strategy.to_string(),
            fmt_lambda(r.lambda),
            r.domain_label.to_string(),
            fmt_percent(r.rank1),
            fmt_percent(r.rank5),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Long-format CMC: one line per (domain, rank).
pub fn write_cmc_csv(curves: &[(RankRow, CmcCurve)], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    w.write_record(["strategy", "lambda", "domain", "rank", "retrieval"])?;
    for (row, cmc) in curves {
        for (i, &rate) in cmc.rank_retrieval.iter().enumerate() {
            w.write_record([
                row.strategy.to_string(),
                fmt_lambda(row.lambda),
                row.domain_label.to_string(),
                (i + 1).to_string(),
                fmt_percent(percent(rate)),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn write_open_set_csv(rows: &[OpenSetRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    w.write_record(["strategy", "lambda", "domain", "fpir_target", "threshold", "fnir"])?;
    for r in rows {
        w.write_record([
            r.strategy.to_string(),
            fmt_lambda(r.lambda),
            r.domain_label.to_string(),
            r.fpir_target.to_string(),
            format!("{:.6}", r.threshold),
            fmt_percent(r.fnir),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn write_norm_stats_csv(rows: &[NormQualityRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    w.write_record(["domain", "n", "pearson"])?;
    for r in rows {
        w.write_record([
            r.domain.short_label().to_string(),
            r.n.to_string(),
            r.pearson.map(|p| format!("{p:.4}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))
}
