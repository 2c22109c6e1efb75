//! `generate`, `ingest`, `eval` and `export`.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use outfitgen_core::catalog::{canonical_label, canonical_occasion};
use outfitgen_core::eval::report;
use outfitgen_core::eval::{rank_distribution, Answer};
use outfitgen_core::exemplar::ExemplarStore;
use outfitgen_core::gateway::ProfileEmbedder;
use outfitgen_core::jsonl::{read_jsonl, write_jsonl};
use outfitgen_core::pipeline::{run_grid, GenerationRecord, PipelineDeps, Strategy, StrategyKind};
use outfitgen_core::prompt::Templates;
use outfitgen_core::rag::{self, Chunk, SourceKind, VectorIndex};
use outfitgen_core::{Gateway, SurveyResponse, TripletKind, Vocabulary};

use crate::config::RunConfig;

/// Bad flags or configuration; maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    PartialFailure,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::PartialFailure => 1,
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).map_err(|e| usage(format!("{e:#}")))
}

pub fn load_templates(cfg: &RunConfig) -> Result<Templates> {
    let mut t = Templates::shipped().clone();
    for (strategy, path) in &cfg.templates {
        let body = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        t = t
            .with_override(*strategy, &body)
            .map_err(|e| usage(format!("template {}: {e}", path.display())))?;
    }
    Ok(t)
}

#[derive(Debug, Clone, Default)]
pub struct GenerateArgs {
    pub strategies: Vec<StrategyKind>,
    pub kind: Option<TripletKind>,
    pub style: Option<String>,
    pub occasion: Option<String>,
    pub wearer_type: Option<String>,
    pub parallelism: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateSummary {
    pub attempted: usize,
    pub succeeded: usize,
    pub failed: usize,
}

impl fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "attempted {}, succeeded {}, failed {}",
            self.attempted, self.succeeded, self.failed
        )
    }
}

fn chunks_for(cfg: &RunConfig, kind: SourceKind) -> Result<Vec<Chunk>> {
    let cached = cfg.chunks_path(&kind.to_string());
    if cached.exists() {
        return Ok(rag::read_chunks(&cached)?);
    }
    let manifest = match kind {
        SourceKind::Pdf => cfg.corpus.pdf.as_ref(),
        SourceKind::Blog => cfg.corpus.blog.as_ref(),
    }
    .ok_or_else(|| usage(format!("rag-{kind} needs corpus.{kind} in the config")))?;
    Ok(rag::ingest_manifest(manifest, cfg.chunking)?)
}

fn build_index(cfg: &RunConfig, gateway: &Gateway, kind: SourceKind) -> Result<VectorIndex> {
    let chunks = chunks_for(cfg, kind)?;
    let embedder = ProfileEmbedder::new(gateway, &cfg.strategy.embed_profile);
    Ok(rag::build_index(chunks, &embedder)?)
}

fn load_store(gateway: &Gateway, cfg: &RunConfig, path: Option<&PathBuf>, what: &str) -> Result<ExemplarStore> {
    let path = path.ok_or_else(|| usage(format!("{what} needs an exemplar file in the config")))?;
    let embedder = ProfileEmbedder::new(gateway, &cfg.strategy.embed_profile);
    ExemplarStore::load_jsonl(path, &embedder, cfg.selector_text)
        .with_context(|| format!("loading {}", path.display()))
}

fn check_filter(name: &str, value: &Option<String>, allowed: &[String], canon: fn(&str) -> String) -> Result<()> {
    if let Some(v) = value {
        if !allowed.contains(&canon(v)) {
            return Err(usage(format!(
                "unknown --{name} \"{v}\" (expected one of: {})",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

/// Keeps earlier records whose ids were not regenerated, then appends the new ones.
fn merge_records(path: &Path, fresh: &[GenerationRecord]) -> Result<Vec<GenerationRecord>> {
    let mut merged: Vec<GenerationRecord> = if path.exists() { read_jsonl(path)? } else { Vec::new() };
    let fresh_ids: std::collections::HashSet<&str> = fresh.iter().map(|r| r.id.as_str()).collect();
    merged.retain(|r| !fresh_ids.contains(r.id.as_str()));
    merged.extend(fresh.iter().cloned());
    Ok(merged)
}

pub fn generate(mut cfg: RunConfig, args: &GenerateArgs) -> Result<(Status, GenerateSummary)> {
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(p) = args.parallelism {
        if p == 0 {
            return Err(usage("--parallelism must be at least 1"));
        }
        cfg.parallelism = p;
    }
    if args.seed.is_some() {
        cfg.generation.seed = args.seed;
    }
    let vocab = Vocabulary::load(&cfg.vocabulary).map_err(|e| usage(e.to_string()))?;
    let kind = args.kind.unwrap_or(TripletKind::Simple);
    check_filter("style", &args.style, &vocab.styles, canonical_label)?;
    check_filter("occasion", &args.occasion, &vocab.occasions, canonical_occasion)?;
    check_filter("type", &args.wearer_type, vocab.types_of(kind), canonical_label)?;

    let triplets: Vec<_> = vocab
        .enumerate_triplets(kind)
        .into_iter()
        .filter(|t| args.style.as_ref().map_or(true, |s| canonical_label(s) == t.style))
        .filter(|t| args.occasion.as_ref().map_or(true, |o| canonical_occasion(o) == t.occasion))
        .filter(|t| args.wearer_type.as_ref().map_or(true, |w| canonical_label(w) == t.wearer_type))
        .collect();
    let kinds = if args.strategies.is_empty() {
        StrategyKind::ALL.to_vec()
    } else {
        args.strategies.clone()
    };

    let gateway = Gateway::new(cfg.profiles.clone());
    let templates = load_templates(&cfg)?;
    let exemplars = match kinds.contains(&StrategyKind::Fs) {
        true => Some(load_store(&gateway, &cfg, cfg.exemplars.as_ref(), "fs")?),
        false => None,
    };
    let cot_exemplars = match kinds.contains(&StrategyKind::Cot) {
        true => Some(load_store(&gateway, &cfg, cfg.cot_exemplars.as_ref(), "cot")?),
        false => None,
    };
    let pdf_index = match kinds.contains(&StrategyKind::RagPdf) {
        true => Some(build_index(&cfg, &gateway, SourceKind::Pdf)?),
        false => None,
    };
    let blog_index = match kinds.contains(&StrategyKind::RagBlog) {
        true => Some(build_index(&cfg, &gateway, SourceKind::Blog)?),
        false => None,
    };

    let images = cfg.images_dir();
    std::fs::create_dir_all(&images).with_context(|| format!("creating {}", images.display()))?;
    let deps = PipelineDeps {
        gateway: &gateway,
        templates: &templates,
        exemplars: exemplars.as_ref(),
        cot_exemplars: cot_exemplars.as_ref(),
        pdf_index: pdf_index.as_ref(),
        blog_index: blog_index.as_ref(),
        generation: &cfg.generation,
        image_dir: Some(images),
    };
    let strategies: Vec<Strategy> = kinds
        .iter()
        .map(|k| Strategy {
            kind: *k,
            params: cfg.strategy.clone(),
        })
        .collect();
    let outcome = run_grid(&triplets, &strategies, &deps, cfg.parallelism);

    let fresh: Vec<GenerationRecord> = outcome.records().into_iter().cloned().collect();
    let failures: Vec<_> = outcome.failures().into_iter().cloned().collect();
    let merged = merge_records(&cfg.records_path(), &fresh)?;
    write_jsonl(&cfg.records_path(), &merged)?;
    write_jsonl(&cfg.failures_path(), &failures)?;

    let summary = GenerateSummary {
        attempted: outcome.attempted(),
        succeeded: fresh.len(),
        failed: failures.len(),
    };
    let status = if failures.is_empty() {
        Status::Success
    } else {
        Status::PartialFailure
    };
    Ok((status, summary))
}

/// Chunks both corpora, embeds them once to surface backend problems early,
/// and writes the chunk files that `generate` reuses.
pub fn ingest(cfg: &RunConfig) -> Result<Vec<(SourceKind, usize)>> {
    let gateway = Gateway::new(cfg.profiles.clone());
    let embedder = ProfileEmbedder::new(&gateway, &cfg.strategy.embed_profile);
    let mut counts = Vec::new();
    for (kind, manifest) in [(SourceKind::Pdf, &cfg.corpus.pdf), (SourceKind::Blog, &cfg.corpus.blog)] {
        let Some(manifest) = manifest else { continue };
        let chunks = rag::ingest_manifest(manifest, cfg.chunking)?;
        let index = rag::build_index(chunks, &embedder)?;
        let out = cfg.chunks_path(&kind.to_string());
        std::fs::create_dir_all(out.parent().expect("has parent"))?;
        rag::write_chunks(&out, index.chunks())?;
        counts.push((kind, index.len()));
    }
    if counts.is_empty() {
        return Err(usage("no corpus manifests configured"));
    }
    Ok(counts)
}

/// File name → CSV body.
pub fn eval(records: &Path, responses: Option<&Path>) -> Result<Vec<(&'static str, String)>> {
    let records: Vec<GenerationRecord> = read_jsonl(records)?;
    let responses: Vec<SurveyResponse> = match responses {
        Some(p) if p.exists() => read_jsonl(p)?,
        _ => Vec::new(),
    };
    let comparisons = report::all_comparisons(&responses)?;
    Ok(vec![
        ("alignment.csv", report::alignment_csv(&records)),
        ("alignment_means.csv", report::alignment_means_csv(&records)),
        ("rating_means.csv", report::rating_means_csv(&responses)?),
        ("comparisons.csv", report::comparisons_csv(&comparisons)),
        ("rank_matrix.csv", report::rank_matrix_csv(&rank_distribution(&responses)?)),
    ])
}

fn answer_cell(a: &Answer) -> String {
    match a {
        Answer::Rating(v) => v.to_string(),
        Answer::Choice(c) => serde_json::to_value(c)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        Answer::Ranking(order) => order.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(" > "),
        Answer::NotApplicable => String::new(),
    }
}

/// Long-format CSV: one row per (response, question).
pub fn export_long_csv(responses: &Path) -> Result<String> {
    let responses: Vec<SurveyResponse> = read_jsonl(responses)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["participant_id", "experiment", "stimulus_id", "method", "question", "answer", "timestamp"])?;
    for r in &responses {
        let method = r.method.map(|m| m.as_str()).unwrap_or("");
        for (q, a) in &r.answers {
            w.write_record([
                r.participant_id.as_str(),
                r.experiment.as_str(),
                &r.stimulus_id,
                method,
                q,
                &answer_cell(a),
                &r.timestamp,
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn records_by_id(path: &Path) -> Result<HashMap<String, GenerationRecord>> {
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let records: Vec<GenerationRecord> = read_jsonl(path)?;
    Ok(records.into_iter().map(|r| (r.id.clone(), r)).collect())
}
