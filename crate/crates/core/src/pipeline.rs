//! One generation job per `(triplet, strategy)`, and the grid runner.
//!
//! A job renders the strategy's prompt, calls the text backend (twice for
//! chain-of-thought), passes the description verbatim (capped) to the image
//! backend, and optionally scores text/image alignment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Triplet;
use crate::eval::alignment::{clip_score, ClipMode};
use crate::exemplar::{ExemplarStore, StoreError};
use crate::gateway::{Gateway, GatewayError, ImageGenRequest, ProfileEmbedder, TextGenRequest};
use crate::hashing::{hash_fields, sha256_hex};
use crate::prompt::{PromptError, RenderedPrompt, Templates, COT_REPROMPT_SUFFIX};
use crate::rag::{self, ChunkRef, RagError, VectorIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Zs,
    Fs,
    Cot,
    RagPdf,
    RagBlog,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Zs,
        StrategyKind::Fs,
        StrategyKind::Cot,
        StrategyKind::RagPdf,
        StrategyKind::RagBlog,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Zs => "zs",
            StrategyKind::Fs => "fs",
            StrategyKind::Cot => "cot",
            StrategyKind::RagPdf => "rag-pdf",
            StrategyKind::RagBlog => "rag-blog",
        }
    }

    pub fn is_rag(self) -> bool {
        matches!(self, StrategyKind::RagPdf | StrategyKind::RagBlog)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                format!(
                    "unknown strategy \"{s}\" (expected one of: {})",
                    StrategyKind::ALL.map(|k| k.as_str()).join(", ")
                )
            })
    }
}

fn default_fs_k() -> usize {
    crate::exemplar::DEFAULT_K
}
fn default_rag_k() -> usize {
    rag::DEFAULT_TOP_K
}
fn default_context_cap() -> usize {
    rag::DEFAULT_CONTEXT_CHARS
}

/// Profile names and retrieval parameters shared by every strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub text_profile: String,
    pub embed_profile: String,
    pub image_profile: String,
    /// Embedding profile used for alignment scoring; skipped when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_profile: Option<String>,
    #[serde(default = "default_fs_k")]
    pub fs_k: usize,
    #[serde(default = "default_fs_k")]
    pub cot_k: usize,
    #[serde(default = "default_rag_k")]
    pub rag_k: usize,
    #[serde(default = "default_context_cap")]
    pub context_cap: usize,
}

impl StrategyParams {
    pub fn new(text_profile: &str, embed_profile: &str, image_profile: &str) -> Self {
        Self {
            text_profile: text_profile.into(),
            embed_profile: embed_profile.into(),
            image_profile: image_profile.into(),
            clip_profile: None,
            fs_k: default_fs_k(),
            cot_k: default_fs_k(),
            rag_k: default_rag_k(),
            context_cap: default_context_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub params: StrategyParams,
}

fn default_max_tokens() -> u32 {
    512
}
fn default_temperature() -> f64 {
    0.7
}
fn default_image_side() -> u32 {
    512
}
fn default_image_prompt_cap() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_image_side")]
    pub image_width: u32,
    #[serde(default = "default_image_side")]
    pub image_height: u32,
    /// Characters of description forwarded to the image backend.
    #[serde(default = "default_image_prompt_cap")]
    pub image_prompt_cap: usize,
    #[serde(default)]
    pub clip_mode: ClipMode,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: default_max_tokens(),
            temperature: default_temperature(),
            seed: None,
            image_width: default_image_side(),
            image_height: default_image_side(),
            image_prompt_cap: default_image_prompt_cap(),
            clip_mode: ClipMode::default(),
        }
    }
}

/// Everything a job reads. All of it is shared read-only across a grid run.
pub struct PipelineDeps<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a Templates,
    pub exemplars: Option<&'a ExemplarStore>,
    pub cot_exemplars: Option<&'a ExemplarStore>,
    pub pdf_index: Option<&'a VectorIndex>,
    pub blog_index: Option<&'a VectorIndex>,
    pub generation: &'a GenerationParams,
    /// Where `<record-id>.png` files go; images are not written when absent.
    pub image_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Prepare,
    Retrieve,
    Select,
    Text,
    ColorsTextures,
    Image,
    Alignment,
    Persist,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Error)]
pub enum JobErrorKind {
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Rag(#[from] RagError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Dependency(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
#[error("{strategy} job for {triplet} failed at {stage}: {kind}")]
pub struct JobError {
    pub triplet: Triplet,
    pub strategy: StrategyKind,
    pub stage: Stage,
    #[source]
    pub kind: JobErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no \"{0}:\" line in the colors/textures answer")]
pub struct ParseError(pub &'static str);

/// Extracts the comma-separated values of the last `Colors:` and `Textures:`
/// lines (labels matched case-insensitively).
pub fn parse_colors_textures(output: &str) -> Result<(Vec<String>, Vec<String>), ParseError> {
    fn last_labeled(output: &str, label: &str) -> Option<Vec<String>> {
        output.lines().rev().find_map(|line| {
            let line = line.trim();
            let head = line.get(..label.len())?;
            if !head.eq_ignore_ascii_case(label) {
                return None;
            }
            let rest = line[label.len()..].trim_start().strip_prefix(':')?;
            Some(
                rest.split(',')
                    .map(|s| s.trim().trim_end_matches('.').trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect(),
            )
        })
    }
    let colors = last_labeled(output, "colors").ok_or(ParseError("Colors"))?;
    let textures = last_labeled(output, "textures").ok_or(ParseError("Textures"))?;
    Ok((colors, textures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileNames {
    pub text: String,
    pub embed: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub triplet: Triplet,
    pub strategy: StrategyKind,
    pub prompts: Vec<RenderedPrompt>,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub textures: Option<Vec<String>>,
    /// Set when the colors/textures step needed its one reprompt.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cot_reprompted: bool,
    /// Demonstrations used (few-shot and chain-of-thought).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplar_ids: Vec<String>,
    /// Chunks assembled into the context (RAG only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retrieved: Vec<ChunkRef>,
    pub image_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_score: Option<f64>,
    /// Milliseconds per stage.
    #[serde(default)]
    pub timings: BTreeMap<String, f64>,
    pub profiles: ProfileNames,
    pub config_digest: String,
}

impl GenerationRecord {
    /// Copy with timings cleared, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: BTreeMap::new(),
            ..self.clone()
        }
    }
}

/// Digest of everything that influences record contents.
pub fn config_digest(params: &StrategyParams, generation: &GenerationParams, templates: &Templates) -> String {
    let mut doc = serde_json::json!({
        "strategy": params,
        "generation": generation,
    });
    let bodies: BTreeMap<String, String> = crate::prompt::PromptStrategy::ALL
        .into_iter()
        .map(|s| (s.to_string(), templates.get(s).body.clone()))
        .collect();
    doc["templates"] = serde_json::to_value(bodies).expect("serializable");
    sha256_hex(doc.to_string().as_bytes())
}

pub fn record_id(triplet: &Triplet, strategy: &Strategy, config_digest: &str) -> String {
    let p = &strategy.params;
    let kind = triplet.kind.to_string();
    let full = hash_fields([
        triplet.style.as_str(),
        triplet.occasion.as_str(),
        triplet.wearer_type.as_str(),
        kind.as_str(),
        strategy.kind.as_str(),
        p.text_profile.as_str(),
        p.embed_profile.as_str(),
        p.image_profile.as_str(),
        p.clip_profile.as_deref().unwrap_or(""),
        config_digest,
    ]);
    full[..24].to_string()
}

struct Clock(BTreeMap<String, f64>);

impl Clock {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.0.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64() * 1e3;
        out
    }
}

fn truncate_chars(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

/// Runs one job. Any backend failure aborts the job with its stage.
pub fn run_job(triplet: &Triplet, strategy: &Strategy, deps: &PipelineDeps<'_>) -> Result<GenerationRecord, JobError> {
    let fail = |stage: Stage| {
        let triplet = triplet.clone();
        let kind_of = strategy.kind;
        move |e: JobErrorKind| JobError {
            triplet,
            strategy: kind_of,
            stage,
            kind: e,
        }
    };
    let p = &strategy.params;
    let gen = deps.generation;
    let templates = deps.templates;
    let digest = config_digest(p, gen, templates);
    let id = record_id(triplet, strategy, &digest);
    let mut clock = Clock(BTreeMap::new());
    let embedder = ProfileEmbedder::new(deps.gateway, &p.embed_profile);

    let text_request = |prompt: &str| TextGenRequest {
        prompt: prompt.to_string(),
        max_tokens: gen.max_tokens,
        temperature: gen.temperature,
        seed: gen.seed,
    };
    let generate = |clock: &mut Clock, stage: &str, prompt: &str| {
        clock.time(stage, || deps.gateway.generate_text(&p.text_profile, &text_request(prompt)))
    };

    let mut prompts = Vec::new();
    let mut colors = None;
    let mut textures = None;
    let mut reprompted = false;
    let mut exemplar_ids = Vec::new();
    let mut retrieved = Vec::new();

    let zs = templates.zero_shot(triplet);
    let description = match strategy.kind {
        StrategyKind::Zs => {
            let d = generate(&mut clock, "text", &zs.text).map_err(|e| fail(Stage::Text)(e.into()))?;
            prompts.push(zs);
            d
        }
        StrategyKind::Fs => {
            let store = deps
                .exemplars
                .filter(|s| !s.is_empty())
                .ok_or_else(|| fail(Stage::Prepare)(JobErrorKind::Dependency("few-shot needs a non-empty exemplar store".into())))?;
            let chosen = clock
                .time("select", || -> Result<_, JobErrorKind> {
                    let mut q = deps.gateway.embed(&p.embed_profile, &[zs.text.clone()])?;
                    Ok(store.select_top_k(&q.remove(0), p.fs_k)?)
                })
                .map_err(fail(Stage::Select))?;
            exemplar_ids = chosen.iter().map(|e| e.id.clone()).collect();
            let prompt = templates
                .few_shot(triplet, &chosen)
                .map_err(|e| fail(Stage::Prepare)(e.into()))?;
            let d = generate(&mut clock, "text", &prompt.text).map_err(|e| fail(Stage::Text)(e.into()))?;
            prompts.push(prompt);
            d
        }
        StrategyKind::Cot => {
            let store = deps
                .cot_exemplars
                .filter(|s| !s.is_empty())
                .ok_or_else(|| fail(Stage::Prepare)(JobErrorKind::Dependency("chain-of-thought needs a colors/textures exemplar store".into())))?;
            let chosen = clock
                .time("select", || -> Result<_, JobErrorKind> {
                    let mut q = deps.gateway.embed(&p.embed_profile, &[zs.text.clone()])?;
                    Ok(store.select_top_k(&q.remove(0), p.cot_k)?)
                })
                .map_err(fail(Stage::Select))?;
            exemplar_ids = chosen.iter().map(|e| e.id.clone()).collect();
            let step1 = templates
                .cot_step1(triplet, &chosen)
                .map_err(|e| fail(Stage::Prepare)(e.into()))?;
            let first = generate(&mut clock, "colors_textures", &step1.text)
                .map_err(|e| fail(Stage::ColorsTextures)(e.into()))?;
            let parsed = match parse_colors_textures(&first) {
                Ok(ct) if !ct.0.is_empty() && !ct.1.is_empty() => ct,
                _ => {
                    reprompted = true;
                    let retry = format!("{}\n{}", step1.text, COT_REPROMPT_SUFFIX);
                    let second = generate(&mut clock, "colors_textures", &retry)
                        .map_err(|e| fail(Stage::ColorsTextures)(e.into()))?;
                    let ct = parse_colors_textures(&second).map_err(|e| fail(Stage::ColorsTextures)(e.into()))?;
                    if ct.0.is_empty() || ct.1.is_empty() {
                        let missing = if ct.0.is_empty() { "Colors" } else { "Textures" };
                        return Err(fail(Stage::ColorsTextures)(ParseError(missing).into()));
                    }
                    ct
                }
            };
            let step2 = templates
                .cot_step2(triplet, &parsed.0, &parsed.1)
                .map_err(|e| fail(Stage::Prepare)(e.into()))?;
            let d = generate(&mut clock, "text", &step2.text).map_err(|e| fail(Stage::Text)(e.into()))?;
            prompts.push(step1);
            prompts.push(step2);
            colors = Some(parsed.0);
            textures = Some(parsed.1);
            d
        }
        StrategyKind::RagPdf | StrategyKind::RagBlog => {
            let index = match strategy.kind {
                StrategyKind::RagPdf => deps.pdf_index,
                _ => deps.blog_index,
            }
            .ok_or_else(|| fail(Stage::Prepare)(JobErrorKind::Dependency(format!("{} needs its index", strategy.kind))))?;
            let context = clock
                .time("retrieve", || -> Result<_, JobErrorKind> {
                    let hits = rag::retrieve(index, &zs.text, &embedder, p.rag_k)?;
                    let (context, used) = rag::assemble_context_counted(&hits, p.context_cap);
                    if used == 0 {
                        return Err(JobErrorKind::Dependency(format!(
                            "no retrieved chunk fits the {}-character context cap",
                            p.context_cap
                        )));
                    }
                    retrieved = hits[..used].iter().map(|h| h.to_ref()).collect();
                    Ok(context)
                })
                .map_err(fail(Stage::Retrieve))?;
            let mut prompt = templates
                .rag(&zs.text, &context)
                .map_err(|e| fail(Stage::Prepare)(e.into()))?;
            prompt.triplet = Some(triplet.clone());
            let d = generate(&mut clock, "text", &prompt.text).map_err(|e| fail(Stage::Text)(e.into()))?;
            prompts.push(prompt);
            d
        }
    };

    let image_req = ImageGenRequest {
        prompt: truncate_chars(&description, gen.image_prompt_cap).to_string(),
        seed: gen.seed,
        width: gen.image_width,
        height: gen.image_height,
    };
    let image = clock
        .time("image", || deps.gateway.generate_image(&p.image_profile, &image_req))
        .map_err(|e| fail(Stage::Image)(e.into()))?;

    let clip = match &p.clip_profile {
        Some(profile) => Some(
            clock
                .time("alignment", || -> Result<f64, JobErrorKind> {
                    let mut text_vec = deps.gateway.embed(profile, &[description.clone()])?;
                    let image_vec = deps.gateway.embed_image(profile, &image.png)?;
                    let score = clip_score(&image_vec, &text_vec.remove(0), gen.clip_mode)
                        .map_err(|e| JobErrorKind::Dependency(e.to_string()))?;
                    Ok(score)
                })
                .map_err(fail(Stage::Alignment))?,
        ),
        None => None,
    };

    let image_path = match &deps.image_dir {
        Some(dir) => {
            let name = format!("{id}.png");
            clock
                .time("persist", || std::fs::write(dir.join(&name), &image.png))
                .map_err(|e| fail(Stage::Persist)(e.into()))?;
            Some(name)
        }
        None => None,
    };

    Ok(GenerationRecord {
        id,
        triplet: triplet.clone(),
        strategy: strategy.kind,
        prompts,
        description,
        colors,
        textures,
        cot_reprompted: reprompted,
        exemplar_ids,
        retrieved,
        image_digest: image.digest,
        image_path,
        clip_score: clip,
        timings: clock.0,
        profiles: ProfileNames {
            text: p.text_profile.clone(),
            embed: p.embed_profile.clone(),
            image: p.image_profile.clone(),
            clip: p.clip_profile.clone(),
        },
        config_digest: digest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobFailure {
    pub triplet: Triplet,
    pub strategy: StrategyKind,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct GridOutcome {
    /// One entry per `(triplet, strategy)` in input order.
    pub results: Vec<Result<GenerationRecord, JobFailure>>,
}

impl GridOutcome {
    pub fn attempted(&self) -> usize {
        self.results.len()
    }

    pub fn records(&self) -> Vec<&GenerationRecord> {
        self.results.iter().filter_map(|r| r.as_ref().ok()).collect()
    }

    pub fn failures(&self) -> Vec<&JobFailure> {
        self.results.iter().filter_map(|r| r.as_ref().err()).collect()
    }
}

/// Runs every `(triplet, strategy)` pair on up to `parallelism` threads.
/// Failures are collected; results keep input order (triplet-major).
pub fn run_grid(
    triplets: &[Triplet],
    strategies: &[Strategy],
    deps: &PipelineDeps<'_>,
    parallelism: usize,
) -> GridOutcome {
    use rayon::prelude::*;

    let jobs: Vec<(&Triplet, &Strategy)> = triplets
        .iter()
        .flat_map(|t| strategies.iter().map(move |s| (t, s)))
        .collect();
    let run = |&(t, s): &(&Triplet, &Strategy)| {
        run_job(t, s, deps).map_err(|e| JobFailure {
            triplet: e.triplet.clone(),
            strategy: e.strategy,
            stage: e.stage,
            message: e.kind.to_string(),
        })
    };
    let results = match rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
    {
        Ok(pool) => pool.install(|| jobs.par_iter().map(run).collect()),
        Err(_) => jobs.iter().map(run).collect(),
    };
    GridOutcome { results }
}
