//! Triplet-driven outfit generation.
//!
//! The crate turns `(style, occasion, wearer type)` triplets into outfit
//! descriptions and images through four prompting strategies (zero-shot,
//! few-shot, two-step chain-of-thought and retrieval-augmented), talks to
//! text/embedding/image backends through a small HTTP-JSON gateway (with
//! deterministic in-process mocks), and evaluates the results with a cosine
//! alignment score and survey statistics.

pub mod catalog;
pub mod eval;
pub mod exemplar;
pub mod gateway;
pub mod hashing;
pub mod jsonl;
pub mod pipeline;
pub mod prompt;
pub mod rag;
pub mod similarity;

pub use catalog::{Triplet, TripletKind, Vocabulary};
pub use eval::{AlignmentScore, Experiment, MethodComparison, SurveyResponse};
pub use exemplar::{Exemplar, ExemplarStore};
pub use gateway::{BackendProfile, Capability, Gateway};
pub use pipeline::{GenerationRecord, Strategy, StrategyKind};
pub use prompt::{PromptStrategy, RenderedPrompt};
pub use rag::{Chunk, ScoredChunk, SourceKind, VectorIndex};
pub use similarity::cosine_similarity;
