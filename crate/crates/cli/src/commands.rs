use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use taxoutlier::evaluate::{evaluate_dataset, intersect_vocabulary, IntersectionStats};
use taxoutlier::formats::{
    load_embedding, read_anchor_records, read_dataset_with, read_entity_records, read_wikidata_dump,
    write_dataset_with, DatasetRecord, Embedding, HeaderMode, Tier, WikidataOptions,
};
use taxoutlier::generator::{Generator, Reject};
use taxoutlier::graph::{BuildStats, GraphBuilder, PruneStats};
use taxoutlier::refine::{build_anchor_index, refine_group, RefineReject, ViolationCode};
use taxoutlier::{AnchorIndex, EntityId, EvalReport, KnowledgeGraph};

use crate::config::{DumpFormat, Meta, PipelineConfig};

/// How a successful command ended.
#[derive(Debug, PartialEq, Eq)]
pub enum Status {
    Done,
    /// Ran fine but produced nothing.
    Empty,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// `<path>.report.json` next to an output file.
pub fn report_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".report.json");
    output.with_file_name(name)
}

fn load_graph(cfg: &PipelineConfig) -> Result<(KnowledgeGraph, BuildStats)> {
    let path = cfg
        .paths
        .dump
        .as_deref()
        .ok_or_else(|| anyhow!("no dump given (use --dump or [paths] dump)"))?;
    let reader = open(path)?;
    let mut builder = GraphBuilder::new();
    let ctx = || format!("reading dump {}", path.display());
    match cfg.paths.dump_format {
        DumpFormat::Simple => {
            for r in read_entity_records(reader) {
                builder.add(r.with_context(ctx)?).with_context(ctx)?;
            }
        }
        DumpFormat::Wikidata => {
            let opts = WikidataOptions {
                disambiguation_class: EntityId::new(cfg.prune.disambiguation_class.clone()),
            };
            for r in read_wikidata_dump(reader, opts) {
                builder.add(r.with_context(ctx)?).with_context(ctx)?;
            }
        }
    }
    Ok(builder.finish())
}

fn load_anchors(cfg: &PipelineConfig) -> Result<AnchorIndex> {
    let Some(path) = cfg.paths.anchors.as_deref() else {
        return Ok(AnchorIndex::empty(&cfg.language));
    };
    let entries = read_anchor_records(open(path)?)
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("reading anchors {}", path.display()))?;
    Ok(build_anchor_index(entries, &cfg.language))
}

#[derive(Debug, Serialize)]
pub struct GenerateReport {
    pub meta: Meta,
    pub build: BuildStats,
    pub prune: PruneStats,
    pub classes_considered: usize,
    pub generator_rejects: BTreeMap<String, usize>,
    /// Groups rejected by each check. A group failing several checks is
    /// counted under each.
    pub refine_rejects: BTreeMap<String, usize>,
    pub groups_emitted: usize,
    pub test_cases: usize,
    pub outliers_per_tier: BTreeMap<String, usize>,
}

const VIOLATION_CODES: [ViolationCode; 5] = [
    ViolationCode::DigitDuplicates,
    ViolationCode::AffixOverlap,
    ViolationCode::StopAffix,
    ViolationCode::SingleChar,
    ViolationCode::TooFewAfterDedup,
];

pub fn generate(cfg: &PipelineConfig) -> Result<Status> {
    let output = cfg
        .paths
        .output
        .clone()
        .ok_or_else(|| anyhow!("no output path given (use --output or [paths] output)"))?;
    let meta = Meta::new(cfg);
    let anchors = load_anchors(cfg)?;
    let (graph, build) = load_graph(cfg)?;
    let (graph, prune) = graph.prune(&cfg.prune.params())?;
    let profile = cfg.profile();
    let limits = cfg.limits();

    let gen = Generator::new(&graph, &cfg.generator)?;
    let outcomes = gen.generate_outcomes();

    let mut report = GenerateReport {
        meta,
        build,
        prune,
        classes_considered: outcomes.len(),
        generator_rejects: [Reject::TooFewInstances, Reject::NoOutliers]
            .iter()
            .map(|r| (format!("{r:?}"), 0))
            .collect(),
        refine_rejects: VIOLATION_CODES
            .iter()
            .map(|c| format!("{c:?}"))
            .chain(["NoOutliersAfterRefine".to_owned(), "Invalid".to_owned()])
            .map(|k| (k, 0))
            .collect(),
        groups_emitted: 0,
        test_cases: 0,
        outliers_per_tier: Tier::ALL.iter().map(|t| (t.to_string(), 0)).collect(),
    };

    let refined: Vec<Result<DatasetRecord, RefineReject>> = outcomes
        .par_iter()
        .filter_map(|(_, o)| o.as_ref().ok())
        .map(|raw| refine_group(raw, &anchors, &graph, &profile, &limits))
        .collect();
    for (_, o) in &outcomes {
        if let Err(r) = o {
            *report.generator_rejects.entry(format!("{r:?}")).or_default() += 1;
        }
    }
    let mut records = Vec::new();
    for r in refined {
        match r {
            Ok(rec) => records.push(rec),
            Err(RefineReject::Violations(vs)) => {
                for v in vs {
                    *report.refine_rejects.entry(format!("{:?}", v.code)).or_default() += 1;
                }
            }
            Err(RefineReject::NoOutliers) => {
                *report.refine_rejects.entry("NoOutliersAfterRefine".into()).or_default() += 1
            }
            Err(RefineReject::Invalid(_)) => *report.refine_rejects.entry("Invalid".into()).or_default() += 1,
        }
    }
    report.groups_emitted = records.len();
    for rec in &records {
        report.test_cases += rec.test_cases();
        for o in &rec.outliers {
            *report.outliers_per_tier.entry(o.tier.to_string()).or_default() += 1;
        }
    }

    let mut sink = create(&output)?;
    write_dataset_with(&records, &mut sink, &limits).with_context(|| format!("writing {}", output.display()))?;
    write_json(&report_path(&output), &report)?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", report.meta.header())?;
    writeln!(out, "entities={}", report.build.entities)?;
    writeln!(out, "dangling_edges={}", report.build.dangling_edges)?;
    writeln!(out, "retained_after_prune={}", report.prune.retained)?;
    writeln!(out, "classes_considered={}", report.classes_considered)?;
    for (k, v) in &report.generator_rejects {
        writeln!(out, "reject.{k}={v}")?;
    }
    for (k, v) in &report.refine_rejects {
        writeln!(out, "reject.{k}={v}")?;
    }
    writeln!(out, "groups_emitted={}", report.groups_emitted)?;
    writeln!(out, "test_cases={}", report.test_cases)?;
    for (k, v) in &report.outliers_per_tier {
        writeln!(out, "tier.{k}={v}")?;
    }
    Ok(if records.is_empty() {
        Status::Empty
    } else {
        Status::Done
    })
}

fn read_records(path: &Path, cfg: &PipelineConfig) -> Result<Vec<DatasetRecord>> {
    read_dataset_with(open(path)?, &cfg.limits()).with_context(|| format!("reading dataset {}", path.display()))
}

fn read_embedding(path: &Path, mode: HeaderMode, phrases: bool) -> Result<Embedding> {
    let e = load_embedding(open(path)?, mode).with_context(|| format!("loading embedding {}", path.display()))?;
    Ok(e.with_phrases(phrases))
}

#[derive(Debug, Serialize)]
struct EmbeddingReport {
    embedding: String,
    vocab_size: usize,
    report: EvalReport,
}

#[derive(Debug, Serialize)]
struct EvaluateOutput {
    meta: Meta,
    intersection: Option<IntersectionStats>,
    reports: Vec<EmbeddingReport>,
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.2}"))
}

pub struct EvaluateArgs<'a> {
    pub dataset: &'a Path,
    pub embeddings: Vec<PathBuf>,
    pub intersect: bool,
    pub header: HeaderMode,
    pub phrases: bool,
}

pub fn evaluate(cfg: &PipelineConfig, args: EvaluateArgs<'_>) -> Result<Status> {
    if args.embeddings.is_empty() {
        bail!("no embedding files given");
    }
    if args.intersect && args.embeddings.len() < 2 {
        bail!("--intersect needs at least two embeddings");
    }
    let meta = Meta::new(cfg);
    let policy = cfg.lookup();
    let records = read_records(args.dataset, cfg)?;
    if records.is_empty() {
        bail!("dataset {} is empty", args.dataset.display());
    }
    let embeddings: Vec<Embedding> = args
        .embeddings
        .par_iter()
        .map(|p| read_embedding(p, args.header, args.phrases))
        .collect::<Result<_>>()?;

    let (records, intersection) = if args.intersect {
        let refs: Vec<&Embedding> = embeddings.iter().collect();
        let (reduced, stats) = intersect_vocabulary(&refs, &records, &policy)?;
        (reduced, Some(stats))
    } else {
        (records, None)
    };

    let mut reports = Vec::new();
    for (path, e) in args.embeddings.iter().zip(&embeddings) {
        let report = if records.is_empty() {
            EvalReport {
                opp: None,
                accuracy: None,
                groups_skipped: 0,
                pct_cluster_oov: 0.0,
                pct_outlier_oov: 0.0,
                cases_evaluated: 0,
            }
        } else {
            evaluate_dataset(e, &records, &policy)?
        };
        reports.push(EmbeddingReport {
            embedding: path.display().to_string(),
            vocab_size: e.len(),
            report,
        });
    }

    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", meta.header())?;
    if let Some(s) = &intersection {
        writeln!(
            out,
            "# intersection: groups dropped {} of {}, cluster entities removed {:.2}%, outliers removed {:.2}%",
            s.groups_dropped, s.groups_in, s.pct_cluster_removed, s.pct_outliers_removed
        )?;
    }
    let width = reports.iter().map(|r| r.embedding.len()).max().unwrap_or(0).max(9);
    writeln!(
        out,
        "{:<width$}  {:>7}  {:>7}  {:>14}  {:>13}  {:>13}  {:>7}",
        "Embedding", "OPP", "Acc.", "Groups Skipped", "% Cluster OOV", "% Outlier OOV", "Cases"
    )?;
    for r in &reports {
        let x = &r.report;
        writeln!(
            out,
            "{:<width$}  {:>7}  {:>7}  {:>14}  {:>13.2}  {:>13.2}  {:>7}",
            r.embedding,
            pct(x.opp),
            pct(x.accuracy),
            x.groups_skipped,
            x.pct_cluster_oov,
            x.pct_outlier_oov,
            x.cases_evaluated
        )?;
    }
    for r in &reports {
        writeln!(out, "\n[{}]", r.embedding)?;
        writeln!(out, "vocab_size={}", r.vocab_size)?;
        write!(out, "{}", r.report.to_kv())?;
    }
    let empty = reports.iter().all(|r| r.report.cases_evaluated == 0);
    let json = EvaluateOutput {
        meta,
        intersection,
        reports,
    };
    match &cfg.paths.output {
        Some(p) => write_json(p, &json)?,
        None => writeln!(out, "\n{}", serde_json::to_string(&json)?)?,
    }
    Ok(if empty { Status::Empty } else { Status::Done })
}

#[derive(Debug, Default, Serialize)]
struct DatasetStats {
    groups: usize,
    test_cases: usize,
    outliers_per_tier: BTreeMap<String, usize>,
    per_language: BTreeMap<String, LanguageStats>,
}

#[derive(Debug, Default, Serialize)]
struct LanguageStats {
    groups: usize,
    test_cases: usize,
}

#[derive(Debug, Serialize)]
struct StatsOutput {
    meta: Meta,
    datasets: DatasetStats,
    embeddings: BTreeMap<String, usize>,
}

pub fn stats(cfg: &PipelineConfig, datasets: &[PathBuf], embeddings: &[PathBuf], header: HeaderMode) -> Result<Status> {
    if datasets.is_empty() && embeddings.is_empty() {
        bail!("nothing to summarize: give dataset files or --embedding");
    }
    let mut s = DatasetStats {
        outliers_per_tier: Tier::ALL.iter().map(|t| (t.to_string(), 0)).collect(),
        ..DatasetStats::default()
    };
    for path in datasets {
        for rec in read_records(path, cfg)? {
            s.groups += 1;
            s.test_cases += rec.test_cases();
            for o in &rec.outliers {
                *s.outliers_per_tier.entry(o.tier.to_string()).or_default() += 1;
            }
            let lang = s.per_language.entry(rec.language.clone()).or_default();
            lang.groups += 1;
            lang.test_cases += rec.test_cases();
        }
    }
    let mut vocab = BTreeMap::new();
    for path in embeddings {
        let e = read_embedding(path, header, false)?;
        vocab.insert(path.display().to_string(), e.len());
    }

    let meta = Meta::new(cfg);
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", meta.header())?;
    if !datasets.is_empty() {
        writeln!(out, "groups={}", s.groups)?;
        writeln!(out, "test_cases={}", s.test_cases)?;
        for (k, v) in &s.outliers_per_tier {
            writeln!(out, "tier.{k}={v}")?;
        }
        for (k, v) in &s.per_language {
            writeln!(out, "language.{k}.groups={}", v.groups)?;
            writeln!(out, "language.{k}.test_cases={}", v.test_cases)?;
        }
    }
    for (k, v) in &vocab {
        writeln!(out, "vocab_size[{k}]={v}")?;
    }
    let empty = !datasets.is_empty() && s.groups == 0;
    let json = StatsOutput {
        meta,
        datasets: s,
        embeddings: vocab,
    };
    if let Some(p) = &cfg.paths.output {
        write_json(p, &json)?;
    }
    Ok(if empty { Status::Empty } else { Status::Done })
}

#[derive(Debug, Serialize)]
struct PruneOutput {
    meta: Meta,
    build: BuildStats,
    prune: PruneStats,
}

pub fn prune_report(cfg: &PipelineConfig) -> Result<Status> {
    let meta = Meta::new(cfg);
    let (graph, build) = load_graph(cfg)?;
    let (_, prune) = graph.prune(&cfg.prune.params())?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", meta.header())?;
    for (k, v) in [
        ("entities", build.entities),
        ("instance_edges", build.instance_edges),
        ("subclass_edges", build.subclass_edges),
        ("dangling_edges", build.dangling_edges),
        ("duplicate_edges", build.duplicate_edges),
        ("removed.disambiguation", prune.disambiguation),
        ("removed.near_root", prune.near_root),
        ("removed.stop_class_instances", prune.stop_class_instances),
        ("edges_removed", prune.edges_removed),
        ("retained", prune.retained),
    ] {
        writeln!(out, "{k}={v}")?;
    }
    let retained = prune.retained;
    if let Some(p) = &cfg.paths.output {
        write_json(p, &PruneOutput { meta, build, prune })?;
    }
    Ok(if retained == 0 { Status::Empty } else { Status::Done })
}
