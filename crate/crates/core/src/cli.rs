//! Command-line driver.
//!
//! Every command is deterministic given its flags and `--seed`. The
//! `NORMPOOL_WORKERS` environment variable caps the worker threads used for
//! pooling and scoring; it never changes any output byte.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bank::{read_feature_bank, write_feature_bank, FeatureBank};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_closed_set, lambda_sweep, norm_quality_report, open_set_eval, pool_specs, score_probes,
    IdentificationSet,
};
use crate::manifest::{read_manifest, write_jsonl, write_manifest, TemplateRecord};
use crate::pooling::{PooledTemplate, PoolingKind, PoolingStrategy};
use crate::protocol::{
    assemble_templates, split_galleries, subjects_of, validate_manifest, DomainId, GallerySpec, MediaRecord,
    ProtocolConfig, ProtocolKind, TemplateSpec,
};
use crate::report::{
    write_cmc_csv, write_json, write_norm_stats_csv, write_open_set_csv, write_rank_csv, OpenSetRow, RankRow,
};
use crate::synthgen::{generate_dataset, DomainProfile};

// Output goes to a pipe often enough (`| head`) that a closed stdout must not panic.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

pub const WORKERS_ENV: &str = "NORMPOOL_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_SUBJECTS: usize = 251;
pub const DEFAULT_DIM: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "normpool", version, about = "Feature-norm template pooling and 1:N identification evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pool media into one template per (subject, domain).
    Pool(PoolCmd),
    /// Closed-set rank-k retrieval per probe domain.
    EvalClosed(PoolCmd),
    /// Open-set FNIR at target FPIR per probe domain.
    EvalOpen(OpenCmd),
    /// Rank-1 retrieval over a list of lambdas, with an average-pooling baseline.
    Sweep(PoolCmd),
    /// Generate a synthetic multi-domain dataset.
    Synth(SynthCmd),
    /// Pearson correlation between feature norms and quality scores per domain.
    NormStats(NormStatsCmd),
    /// Check a manifest against a feature bank.
    Validate(ValidateCmd),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Media manifest (JSON lines).
    #[arg(long)]
    manifest: PathBuf,
    /// Feature bank (FTBK).
    #[arg(long)]
    bank: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Legacy,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GalleryArg {
    G1,
    G2,
}

#[derive(Debug, Args)]
struct PoolCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Pooling strategy: ap, qp, np, npstar or sp.
    #[arg(long, default_value = "np", value_parser = clap::value_parser!(PoolingKind))]
    strategy: PoolingKind,
    /// Temperature; `sweep` accepts a comma-separated list.
    #[arg(long, default_value = "1", value_delimiter = ',', num_args = 1..)]
    lambda: Vec<f64>,
    /// Strategy for gallery templates; defaults to --strategy.
    #[arg(long, value_parser = clap::value_parser!(PoolingKind))]
    gallery_strategy: Option<PoolingKind>,
    #[arg(long, value_enum, default_value = "legacy")]
    protocol: ProtocolArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probe domain codes, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,15,16")]
    domains: Vec<u8>,
    /// Gallery used for evaluation; the other gallery supplies non-mated probes.
    #[arg(long, value_enum, default_value = "g2")]
    gallery: GalleryArg,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OpenCmd {
    #[command(flatten)]
    pool: PoolCmd,
    /// Target FPIR values, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    fpir: Vec<f64>,
}

#[derive(Debug, Args)]
struct SynthCmd {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SUBJECTS)]
    subjects: usize,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct NormStatsCmd {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Also write validation.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Invalid(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("error: {WORKERS_ENV} must be a positive integer, got {v:?}");
                return EXIT_USAGE;
            }
        },
        Err(_) => 0,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_FAILURE;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun with --help for usage.");
            EXIT_USAGE
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("validation failed: {msg}");
            EXIT_FAILURE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Pool(c) => cmd_pool(&c),
        Command::EvalClosed(c) => cmd_eval_closed(&c),
        Command::EvalOpen(c) => cmd_eval_open(&c),
        Command::Sweep(c) => cmd_sweep(&c),
        Command::Synth(c) => cmd_synth(&c),
        Command::NormStats(c) => cmd_norm_stats(&c),
        Command::Validate(c) => cmd_validate(&c),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Reads and validates the manifest and bank.
fn load(data: &DataArgs) -> std::result::Result<(Vec<MediaRecord>, FeatureBank), Failure> {
    let records = read_manifest(&data.manifest)?;
    let bank = read_feature_bank(&data.bank)?;
    let report = validate_manifest(&records, bank.len());
    if !report.is_valid() {
        return Err(Failure::Invalid(format!(
            "{} duplicate media ids, {} out-of-range feature indices, {} invalid detection probabilities",
            report.duplicate_media_ids.len(),
            report.out_of_range.len(),
            report.invalid_detection_probs.len()
        )));
    }
    Ok((records, bank))
}

impl PoolCmd {
    fn single_strategy(&self) -> std::result::Result<PoolingStrategy, Failure> {
        match self.lambda.as_slice() {
            [lambda] => PoolingStrategy::new(self.strategy, *lambda).map_err(|e| Failure::Usage(e.to_string())),
            _ => Err(Failure::Usage("this command takes a single --lambda value".into())),
        }
    }

    fn gallery_strategy(&self, probe: &PoolingStrategy) -> std::result::Result<Option<PoolingStrategy>, Failure> {
        self.gallery_strategy
            .map(|kind| PoolingStrategy::new(kind, probe.lambda()).map_err(|e| Failure::Usage(e.to_string())))
            .transpose()
    }

    fn protocol(&self) -> ProtocolConfig {
        match self.protocol {
            ProtocolArg::Legacy => ProtocolConfig::legacy(self.seed),
            ProtocolArg::Exhaustive => ProtocolConfig::exhaustive(self.seed),
        }
    }

    fn domains(&self) -> std::result::Result<Vec<DomainId>, Failure> {
        let mut out = self
            .domains
            .iter()
            .map(|&c| DomainId::new(c).map_err(|e| Failure::Usage(e.to_string())))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

/// Evaluation and non-mated galleries under the command's seed.
fn galleries(records: &[MediaRecord], cmd: &PoolCmd) -> Result<(GallerySpec, GallerySpec)> {
    let subjects: Vec<String> = subjects_of(records).into_iter().collect();
    let (g1, g2) = split_galleries(&subjects, cmd.seed)?;
    Ok(match cmd.gallery {
        GalleryArg::G1 => (g1, g2),
        GalleryArg::G2 => (g2, g1),
    })
}

/// Gallery templates use every enrollment medium of each gallery subject.
fn gallery_specs(records: &[MediaRecord], gallery: &GallerySpec, seed: u64) -> Result<Vec<TemplateSpec>> {
    assemble_templates(
        records,
        &ProtocolConfig::exhaustive(seed),
        &gallery.subject_ids,
        &[DomainId::VISIBLE_ENROLLMENT],
    )
}

fn print_rank_rows(rows: &[RankRow]) {
    say!("{:<8} {:>8} {:<12} {:>7} {:>7}", "strategy", "lambda", "domain", "rank1", "rank5");
    for r in rows {
        let lambda = r.lambda.map(|l| l.to_string()).unwrap_or_else(|| "-".into());
        say!(
            "{:<8} {:>8} {:<12} {:>7.2} {:>7.2}",
            r.strategy.as_str(),
            lambda,
            r.domain_label,
            r.rank1,
            r.rank5
        );
    }
}

fn cmd_pool(cmd: &PoolCmd) -> CmdResult {
    let strategy = cmd.single_strategy()?;
    let (records, bank) = load(&cmd.data)?;
    let specs = assemble_templates(&records, &cmd.protocol(), &subjects_of(&records), &cmd.domains()?)?;
    let templates = pool_specs(&strategy, &records, &bank, &specs)?;

    ensure_dir(&cmd.out)?;
    let mut pooled = FeatureBank::with_capacity(bank.dim(), templates.len())?;
    for t in &templates {
        pooled.push(&t.feature.to_f32())?;
    }
    let meta: Vec<TemplateRecord> = templates
        .iter()
        .enumerate()
        .map(|(i, t)| TemplateRecord::from_template(i, t))
        .collect();
    write_feature_bank(&pooled, cmd.out.join("templates.ftbk"))?;
    write_jsonl(&meta, cmd.out.join("templates.jsonl"))?;
    say!("pooled {} templates with {}", templates.len(), strategy.kind());
    Ok(())
}

#[derive(Serialize)]
struct ClosedSummary<'a> {
    command: &'static str,
    protocol: ProtocolKind,
    seed: u64,
    gallery_size: usize,
    rows: &'a [RankRow],
}

fn cmd_eval_closed(cmd: &PoolCmd) -> CmdResult {
    let strategy = cmd.single_strategy()?;
    let gallery_strategy = cmd.gallery_strategy(&strategy)?;
    let (records, bank) = load(&cmd.data)?;
    let (gallery, _) = galleries(&records, cmd)?;
    let protocol = cmd.protocol();
    let gallery_t = gallery_specs(&records, &gallery, cmd.seed)?;
    let probes = assemble_templates(&records, &protocol, &gallery.subject_ids, &cmd.domains()?)?;
    let set = IdentificationSet {
        records: &records,
        bank: &bank,
        probes: &probes,
        gallery: &gallery_t,
    };
    let results = evaluate_closed_set(&strategy, gallery_strategy.as_ref(), &set)?;

    let curves: Vec<(RankRow, _)> = results
        .iter()
        .map(|d| (RankRow::new(&strategy, d.domain, &d.cmc), d.cmc.clone()))
        .collect();
    let rows: Vec<RankRow> = curves.iter().map(|(r, _)| r.clone()).collect();
    ensure_dir(&cmd.out)?;
    write_rank_csv(&rows, cmd.out.join("closed_set.csv"))?;
    write_cmc_csv(&curves, cmd.out.join("cmc.csv"))?;
    write_json(
        &ClosedSummary {
            command: "eval-closed",
            protocol: protocol.kind,
            seed: cmd.seed,
            gallery_size: gallery_t.len(),
            rows: &rows,
        },
        cmd.out.join("closed_set.json"),
    )?;
    print_rank_rows(&rows);
    Ok(())
}

#[derive(Serialize)]
struct OpenSummary<'a> {
    command: &'static str,
    metric: &'static str,
    protocol: ProtocolKind,
    seed: u64,
    rows: &'a [OpenSetRow],
}

fn pool_by_domain(templates: Vec<PooledTemplate>, domain: DomainId) -> Vec<PooledTemplate> {
    templates.into_iter().filter(|t| t.domain == domain).collect()
}

fn cmd_eval_open(cmd: &OpenCmd) -> CmdResult {
    let pc = &cmd.pool;
    let strategy = pc.single_strategy()?;
    let gallery_strategy = pc.gallery_strategy(&strategy)?.unwrap_or(strategy);
    if let Some(bad) = cmd.fpir.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Failure::Usage(format!("--fpir values must lie in [0, 1], got {bad}")));
    }
    let (records, bank) = load(&pc.data)?;
    let (gallery, others) = galleries(&records, pc)?;
    let protocol = pc.protocol();
    let domains = pc.domains()?;

    let gallery_t = pool_specs(&gallery_strategy, &records, &bank, &gallery_specs(&records, &gallery, pc.seed)?)?;
    let mated_specs = assemble_templates(&records, &protocol, &gallery.subject_ids, &domains)?;
    let nonmated_specs = assemble_templates(&records, &protocol, &others.subject_ids, &domains)?;
    let mated = pool_specs(&strategy, &records, &bank, &mated_specs)?;
    let nonmated = pool_specs(&strategy, &records, &bank, &nonmated_specs)?;

    let mut rows = Vec::new();
    for &domain in &domains {
        let m = score_probes(&pool_by_domain(mated.clone(), domain), &gallery_t)?;
        let n = score_probes(&pool_by_domain(nonmated.clone(), domain), &gallery_t)?;
        for &target in &cmd.fpir {
            rows.push(OpenSetRow::new(&strategy, domain, &open_set_eval(&m, &n, target)?));
        }
    }
    ensure_dir(&pc.out)?;
    write_open_set_csv(&rows, pc.out.join("open_set.csv"))?;
    write_json(
        &OpenSummary {
            command: "eval-open",
            metric: "FNIR@FPIR (toolkit definition)",
            protocol: protocol.kind,
            seed: pc.seed,
            rows: &rows,
        },
        pc.out.join("open_set.json"),
    )?;
    say!("{:<8} {:<12} {:>6} {:>10} {:>7}", "strategy", "domain", "fpir", "threshold", "fnir");
    for r in &rows {
        say!(
            "{:<8} {:<12} {:>6} {:>10.6} {:>7.2}",
            r.strategy.as_str(),
            r.domain_label,
            r.fpir_target,
            r.threshold,
            r.fnir
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct BestLambda {
    domain: u8,
    domain_label: &'static str,
    lambda: f64,
    rank1: f64,
    average_rank1: f64,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    command: &'static str,
    strategy: PoolingKind,
    protocol: ProtocolKind,
    seed: u64,
    rows: &'a [RankRow],
    best: Vec<BestLambda>,
}

fn cmd_sweep(cmd: &PoolCmd) -> CmdResult {
    if cmd.strategy == PoolingKind::Ap {
        return Err(Failure::Usage("sweep needs a strategy with a temperature (qp, np, npstar, sp)".into()));
    }
    for &l in &cmd.lambda {
        PoolingStrategy::new(cmd.strategy, l).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let (records, bank) = load(&cmd.data)?;
    let (gallery, _) = galleries(&records, cmd)?;
    let protocol = cmd.protocol();
    let gallery_t = gallery_specs(&records, &gallery, cmd.seed)?;
    let probes = assemble_templates(&records, &protocol, &gallery.subject_ids, &cmd.domains()?)?;
    let set = IdentificationSet {
        records: &records,
        bank: &bank,
        probes: &probes,
        gallery: &gallery_t,
    };
    let gallery_override = match cmd.gallery_strategy {
        Some(kind) => Some(PoolingStrategy::new(kind, 1.0).map_err(|e| Failure::Usage(e.to_string()))?),
        None => None,
    };

    let ap = PoolingStrategy::average();
    let baseline = evaluate_closed_set(&ap, gallery_override.as_ref(), &set)?;
    let table = lambda_sweep(cmd.strategy, &cmd.lambda, gallery_override.as_ref(), &set)?;

    let mut rows: Vec<RankRow> = baseline.iter().map(|d| RankRow::new(&ap, d.domain, &d.cmc)).collect();
    for row in &table.rows {
        let s = PoolingStrategy::new(cmd.strategy, row.lambda)?;
        rows.extend(row.domains.iter().map(|d| RankRow::new(&s, d.domain, &d.cmc)));
    }
    let best = baseline
        .iter()
        .filter_map(|b| {
            table.best_for(b.domain).map(|(row, d)| BestLambda {
                domain: b.domain.code(),
                domain_label: b.domain.short_label(),
                lambda: row.lambda,
                rank1: crate::report::percent(d.cmc.rank(1)),
                average_rank1: crate::report::percent(b.cmc.rank(1)),
            })
        })
        .collect();

    ensure_dir(&cmd.out)?;
    write_rank_csv(&rows, cmd.out.join("sweep.csv"))?;
    write_json(
        &SweepSummary {
            command: "sweep",
            strategy: cmd.strategy,
            protocol: protocol.kind,
            seed: cmd.seed,
            rows: &rows,
            best,
        },
        cmd.out.join("sweep.json"),
    )?;
    print_rank_rows(&rows);
    Ok(())
}

#[derive(Serialize)]
struct SynthSummary {
    seed: u64,
    subjects: usize,
    dim: usize,
    media: usize,
    profiles: Vec<DomainProfile>,
}

fn cmd_synth(cmd: &SynthCmd) -> CmdResult {
    let profiles = DomainProfile::default_profiles();
    let ds = generate_dataset(&profiles, cmd.subjects, cmd.dim, cmd.seed).map_err(|e| match e {
        Error::InvalidConfig(msg) => Failure::Usage(msg),
        other => Failure::Runtime(other),
    })?;
    ensure_dir(&cmd.out)?;
    write_feature_bank(&ds.bank, cmd.out.join("features.ftbk"))?;
    write_feature_bank(&ds.prototypes, cmd.out.join("prototypes.ftbk"))?;
    write_manifest(&ds.records, cmd.out.join("manifest.jsonl"))?;
    write_json(
        &SynthSummary {
            seed: cmd.seed,
            subjects: cmd.subjects,
            dim: cmd.dim,
            media: ds.records.len(),
            profiles,
        },
        cmd.out.join("synth.json"),
    )?;
    say!(
        "wrote {} media for {} subjects (dim {}) to {}",
        ds.records.len(),
        cmd.subjects,
        cmd.dim,
        cmd.out.display()
    );
    Ok(())
}

fn cmd_norm_stats(cmd: &NormStatsCmd) -> CmdResult {
    let (records, bank) = load(&cmd.data)?;
    let rows = norm_quality_report(&records, &bank)?;
    ensure_dir(&cmd.out)?;
    write_norm_stats_csv(&rows, cmd.out.join("norm_stats.csv"))?;
    write_json(&rows, cmd.out.join("norm_stats.json"))?;
    for r in &rows {
        let p = r.pearson.map(|p| format!("{p:.4}")).unwrap_or_else(|| "n/a".into());
        say!("{:<12} n={:<8} pearson={p}", r.domain.short_label(), r.n);
    }
    Ok(())
}

fn cmd_validate(cmd: &ValidateCmd) -> CmdResult {
    let records = read_manifest(&cmd.data.manifest)?;
    let bank = read_feature_bank(&cmd.data.bank)?;
    let report = validate_manifest(&records, bank.len());
    if let Some(out) = &cmd.out {
        ensure_dir(out)?;
        write_json(&report, out.join("validation.json"))?;
    }
    let missing: BTreeSet<&str> = report.missing_domain_media.iter().map(|(s, _)| s.as_str()).collect();
    say!(
        "{} records, {} subjects, {} duplicate ids, {} out-of-range indices, {} invalid detection probabilities, {} subjects with missing domains",
        report.n_records,
        report.n_subjects,
        report.duplicate_media_ids.len(),
        report.out_of_range.len(),
        report.invalid_detection_probs.len(),
        missing.len()
    );
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::Invalid("manifest has errors".into()))
    }
}
