//! Corpus ingestion, chunking, embedding index and top-k retrieval.

use std::cmp::Ordering;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Embedder, GatewayError};
use crate::jsonl::JsonlError;
use crate::similarity::{cosine_similarity, normalize, SimilarityError};

pub const DEFAULT_CHUNK_SIZE: usize = 1000;
pub const DEFAULT_OVERLAP: usize = 200;
pub const DEFAULT_TOP_K: usize = 4;
pub const DEFAULT_CONTEXT_CHARS: usize = 4000;

const EMBED_BATCH: usize = 32;

#[derive(Debug, Error)]
pub enum RagError {
    #[error("chunking configuration: {0}")]
    Config(String),
    #[error("document \"{0}\" has no text")]
    EmptyDocument(String),
    #[error("embedding chunk ({doc_id}, {seq}): {source}")]
    Embed {
        doc_id: String,
        seq: usize,
        #[source]
        source: GatewayError,
    },
    #[error("query embedding: {0}")]
    QueryEmbed(#[source] GatewayError),
    #[error("retrieval from an empty index")]
    EmptyIndex,
    #[error("index: {0}")]
    Index(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Pdf,
    Blog,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::Pdf => "pdf",
            SourceKind::Blog => "blog",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    #[serde(default = "default_chunk_size")]
    pub chunk_size: usize,
    #[serde(default = "default_overlap")]
    pub overlap: usize,
}

fn default_chunk_size() -> usize {
    DEFAULT_CHUNK_SIZE
}
fn default_overlap() -> usize {
    DEFAULT_OVERLAP
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: DEFAULT_OVERLAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub seq: usize,
    pub text: String,
    pub source_kind: SourceKind,
    /// Filled by [`build_index`]; never persisted.
    #[serde(skip)]
    pub embedding: Vec<f64>,
}

/// Provenance of one retrieved chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRef {
    pub doc_id: String,
    pub seq: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredChunk<'a> {
    pub chunk: &'a Chunk,
    pub score: f64,
}

impl ScoredChunk<'_> {
    pub fn to_ref(&self) -> ChunkRef {
        ChunkRef {
            doc_id: self.chunk.doc_id.clone(),
            seq: self.chunk.seq,
            score: self.score,
        }
    }
}

/// Collapses every whitespace run to one space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes markup from saved blog pages: tags become spaces, `script`/`style`
/// bodies and comments are dropped, and the common entities are decoded.
pub fn strip_html(html: &str) -> String {
    let lower = html.to_ascii_lowercase();
    let mut out = String::with_capacity(html.len());
    let mut i = 0;
    while i < html.len() {
        let rest = &html[i..];
        if rest.starts_with("<!--") {
            i += rest.find("-->").map_or(rest.len(), |e| e + 3);
            out.push(' ');
            continue;
        }
        if rest.starts_with('<') {
            let lrest = &lower[i..];
            let skip_body = ["script", "style"].into_iter().find(|name| {
                lrest[1..].starts_with(name)
                    && lrest[1 + name.len()..]
                        .chars()
                        .next()
                        .map_or(true, |c| c == '>' || c.is_whitespace())
            });
            if let Some(name) = skip_body {
                let close = format!("</{name}");
                i += match lrest.find(&close) {
                    Some(c) => c + lrest[c..].find('>').map_or(lrest.len() - c, |g| g + 1),
                    None => rest.len(),
                };
            } else {
                i += rest.find('>').map_or(rest.len(), |g| g + 1);
            }
            out.push(' ');
            continue;
        }
        let ch = rest.chars().next().expect("non-empty");
        if ch == '&' {
            let entity = [
                ("&amp;", "&"),
                ("&lt;", "<"),
                ("&gt;", ">"),
                ("&quot;", "\""),
                ("&#39;", "'"),
                ("&apos;", "'"),
                ("&nbsp;", " "),
            ]
            .into_iter()
            .find(|(e, _)| lower[i..].starts_with(e));
            if let Some((e, rep)) = entity {
                out.push_str(rep);
                i += e.len();
                continue;
            }
        }
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

/// Splits `text` (after whitespace normalization) into overlapping chunks of at
/// most `chunk_size` characters. Each chunk ends just before the last space at
/// or before its cut point (a hard cut when a window has no usable space); the
/// next chunk starts exactly `overlap` characters before that end.
pub fn ingest_document(
    doc_id: &str,
    text: &str,
    source_kind: SourceKind,
    chunk_size: usize,
    overlap: usize,
) -> Result<Vec<Chunk>, RagError> {
    if chunk_size == 0 || overlap >= chunk_size {
        return Err(RagError::Config(format!(
            "overlap {overlap} must be smaller than chunk_size {chunk_size}"
        )));
    }
    let normalized = normalize_whitespace(text);
    if normalized.is_empty() {
        return Err(RagError::EmptyDocument(doc_id.to_string()));
    }
    let chars: Vec<char> = normalized.chars().collect();
    let make = |seq: usize, from: usize, to: usize| Chunk {
        doc_id: doc_id.to_string(),
        seq,
        text: chars[from..to].iter().collect(),
        source_kind,
        embedding: Vec::new(),
    };
    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        if chars.len() - start <= chunk_size {
            chunks.push(make(chunks.len(), start, chars.len()));
            break;
        }
        let limit = start + chunk_size;
        // a cut must leave the next start (end - overlap) strictly ahead of this one
        let end = (start + overlap + 1..=limit)
            .rev()
            .find(|&p| chars[p] == ' ')
            .unwrap_or(limit);
        chunks.push(make(chunks.len(), start, end));
        start = end - overlap;
    }
    Ok(chunks)
}

#[derive(Debug, Clone, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub path: PathBuf,
    pub source_kind: SourceKind,
}

/// Reads a corpus manifest and chunks every listed document. Relative paths
/// resolve against the manifest's directory. HTML files are tag-stripped;
/// PDFs are expected as pre-extracted text.
pub fn ingest_manifest(manifest: &Path, chunking: ChunkingConfig) -> Result<Vec<Chunk>, RagError> {
    let shown = manifest.display().to_string();
    let raw = std::fs::read_to_string(manifest).map_err(|source| RagError::Io {
        path: shown.clone(),
        source,
    })?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&raw).map_err(|e| RagError::Manifest {
        path: shown.clone(),
        message: e.to_string(),
    })?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut chunks = Vec::new();
    for entry in entries {
        let path = if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        };
        let body = std::fs::read_to_string(&path).map_err(|source| RagError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let is_html = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("html") || e.eq_ignore_ascii_case("htm"));
        let text = if is_html { strip_html(&body) } else { body };
        chunks.extend(ingest_document(
            &entry.doc_id,
            &text,
            entry.source_kind,
            chunking.chunk_size,
            chunking.overlap,
        )?);
    }
    Ok(chunks)
}

/// Immutable once built; safe to share across threads for retrieval.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    chunks: Vec<Chunk>,
    dimension: usize,
}

impl VectorIndex {
    /// Wraps chunks whose `embedding` is already populated (normalized here).
    pub fn from_embedded(chunks: Vec<Chunk>) -> Result<Self, RagError> {
        let Some(first) = chunks.first() else {
            return Err(RagError::Index("no chunks".into()));
        };
        let dimension = first.embedding.len();
        let mut out = Vec::with_capacity(chunks.len());
        for mut c in chunks {
            if c.embedding.len() != dimension {
                return Err(RagError::Index(format!(
                    "chunk ({}, {}) has dimension {}, expected {dimension}",
                    c.doc_id,
                    c.seq,
                    c.embedding.len()
                )));
            }
            c.embedding = normalize(std::mem::take(&mut c.embedding))?;
            out.push(c);
        }
        Ok(Self {
            chunks: out,
            dimension,
        })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    /// Top-`k` chunks by cosine similarity to `query`; ties go to the smaller
    /// `(doc_id, seq)`.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<ScoredChunk<'_>>, RagError> {
        if self.chunks.is_empty() {
            return Err(RagError::EmptyIndex);
        }
        if k == 0 {
            return Err(RagError::Config("k must be at least 1".into()));
        }
        let mut scored = self
            .chunks
            .iter()
            .map(|c| cosine_similarity(query, &c.embedding).map(|score| ScoredChunk { chunk: c, score }))
            .collect::<Result<Vec<_>, _>>()?;
        scored.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.chunk.doc_id.cmp(&b.chunk.doc_id))
                .then_with(|| a.chunk.seq.cmp(&b.chunk.seq))
        });
        scored.truncate(k);
        Ok(scored)
    }
}

/// Embeds every chunk and freezes the result into an index.
pub fn build_index(mut chunks: Vec<Chunk>, embedder: &dyn Embedder) -> Result<VectorIndex, RagError> {
    if chunks.is_empty() {
        return Err(RagError::Index("no chunks to index".into()));
    }
    for batch in chunks.chunks_mut(EMBED_BATCH) {
        let texts: Vec<String> = batch.iter().map(|c| c.text.clone()).collect();
        match embedder.embed_texts(&texts) {
            Ok(vectors) => {
                for (c, v) in batch.iter_mut().zip(vectors) {
                    c.embedding = v;
                }
            }
            Err(_) => {
                // find the chunk that fails on its own
                for c in batch.iter_mut() {
                    let mut v = embedder
                        .embed_texts(std::slice::from_ref(&c.text))
                        .map_err(|source| RagError::Embed {
                            doc_id: c.doc_id.clone(),
                            seq: c.seq,
                            source,
                        })?;
                    c.embedding = v.remove(0);
                }
            }
        }
    }
    VectorIndex::from_embedded(chunks)
}

pub fn retrieve<'a>(
    index: &'a VectorIndex,
    query_text: &str,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Vec<ScoredChunk<'a>>, RagError> {
    if index.is_empty() {
        return Err(RagError::EmptyIndex);
    }
    let mut q = embedder
        .embed_texts(&[query_text.to_string()])
        .map_err(RagError::QueryEmbed)?;
    index.search(&q.remove(0), k)
}

/// Joins chunk texts with a blank line, keeping only whole chunks and stopping
/// at the first one that would push the result past `max_chars` characters.
/// Returns the text and how many leading chunks it contains.
pub fn assemble_context_counted(scored: &[ScoredChunk<'_>], max_chars: usize) -> (String, usize) {
    let mut out = String::new();
    let mut used_chars = 0;
    let mut taken = 0;
    for s in scored {
        let sep = if taken == 0 { 0 } else { 2 };
        let add = s.chunk.text.chars().count();
        if used_chars + sep + add > max_chars {
            break;
        }
        if taken > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&s.chunk.text);
        used_chars += sep + add;
        taken += 1;
    }
    (out, taken)
}

pub fn assemble_context(scored: &[ScoredChunk<'_>], max_chars: usize) -> String {
    assemble_context_counted(scored, max_chars).0
}

pub fn write_chunks(path: &Path, chunks: &[Chunk]) -> Result<(), RagError> {
    Ok(crate::jsonl::write_jsonl(path, chunks)?)
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>, RagError> {
    Ok(crate::jsonl::read_jsonl(path)?)
}
