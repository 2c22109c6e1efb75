#![allow(dead_code)]

use std::path::{Path, PathBuf};

use outfitgen_core::exemplar::{Exemplar, ExemplarStore, SelectorText};
use outfitgen_core::gateway::ProfileEmbedder;
use outfitgen_core::pipeline::{GenerationParams, PipelineDeps, Strategy, StrategyKind, StrategyParams};
use outfitgen_core::prompt::Templates;
use outfitgen_core::rag::{self, ChunkingConfig, VectorIndex};
use outfitgen_core::{BackendProfile, Capability, Gateway, Triplet, TripletKind};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(golden_dir().join(format!("{name}.txt"))).expect("golden file")
}

pub fn golden_triplet() -> Triplet {
    Triplet::new("gothic", "wedding", "woman", TripletKind::Simple)
}

const INTRO: &str = "Imagine you are an expert in fashion design.";

pub fn golden_fs_exemplars() -> Vec<Exemplar> {
    vec![
        Exemplar::unembedded(
            "g1",
            &format!("{INTRO} Write a description for a fashion outfit in casual style appropriate for a man at a barbecue. Be sure to address the colors and the textures."),
            "A faded chambray shirt over a white tee with khaki shorts and brown boat shoes.",
        ),
        Exemplar::unembedded(
            "g2",
            &format!("{INTRO} Write a description for a fashion outfit in classic style appropriate for a woman at a charity gala. Be sure to address the colors and the textures."),
            "A navy silk crepe column gown with pearl earrings and nude satin pumps.",
        ),
    ]
}

pub fn golden_cot_exemplars() -> Vec<Exemplar> {
    vec![
        Exemplar::unembedded(
            "c1",
            &format!("{INTRO} Suggest the colors and the textures for a fashion outfit in casual style appropriate for a man at a barbecue."),
            "Colors: light blue, white, khaki\nTextures: chambray, cotton",
        ),
        Exemplar::unembedded(
            "c2",
            &format!("{INTRO} Suggest the colors and the textures for a fashion outfit in classic style appropriate for a woman at a charity gala."),
            "Colors: navy, ivory\nTextures: silk crepe, satin",
        ),
    ]
}

pub const GOLDEN_CONTEXT: &str =
    "Evening weddings welcome jewel tones in velvet or satin.\n\nGothic dressing leans on black, oxblood and silver.";

pub fn golden_colors() -> (Vec<String>, Vec<String>) {
    (
        vec!["black".into(), "crimson".into()],
        vec!["velvet".into(), "lace".into()],
    )
}

/// All-mock backends plus loaded exemplar stores and corpus indexes.
pub struct Fixture {
    pub gateway: Gateway,
    pub templates: Templates,
    pub exemplars: ExemplarStore,
    pub cot_exemplars: ExemplarStore,
    pub pdf: VectorIndex,
    pub blog: VectorIndex,
    pub generation: GenerationParams,
}

pub fn mock_profiles() -> Vec<BackendProfile> {
    vec![
        BackendProfile::mock("text", Capability::Text),
        BackendProfile::mock("embed", Capability::Embed),
        BackendProfile::mock("image", Capability::Image),
        BackendProfile::mock("clip", Capability::Embed),
    ]
}

pub fn params() -> StrategyParams {
    let mut p = StrategyParams::new("text", "embed", "image");
    p.clip_profile = Some("clip".into());
    p
}

pub fn strategies() -> Vec<Strategy> {
    StrategyKind::ALL
        .into_iter()
        .map(|kind| Strategy { kind, params: params() })
        .collect()
}

impl Fixture {
    pub fn new() -> Self {
        Self::with_gateway(Gateway::new(mock_profiles()))
    }

    pub fn with_gateway(gateway: Gateway) -> Self {
        let data = data_dir();
        let (exemplars, cot_exemplars, pdf, blog) = {
            let embedder = ProfileEmbedder::new(&gateway, "embed");
            let ex = ExemplarStore::load_jsonl(&data.join("exemplars.jsonl"), &embedder, SelectorText::QuestionAnswer)
                .expect("exemplars");
            let cot =
                ExemplarStore::load_jsonl(&data.join("cot_exemplars.jsonl"), &embedder, SelectorText::QuestionAnswer)
                    .expect("cot exemplars");
            let index = |m: &str| {
                let chunks = rag::ingest_manifest(&data.join("corpus").join(m), ChunkingConfig::default()).expect("corpus");
                rag::build_index(chunks, &embedder).expect("index")
            };
            (ex, cot, index("pdf_manifest.json"), index("blog_manifest.json"))
        };
        Self {
            gateway,
            templates: Templates::shipped().clone(),
            exemplars,
            cot_exemplars,
            pdf,
            blog,
            generation: GenerationParams {
                seed: Some(11),
                image_width: 32,
                image_height: 32,
                ..GenerationParams::default()
            },
        }
    }

    pub fn deps(&self, image_dir: Option<PathBuf>) -> PipelineDeps<'_> {
        PipelineDeps {
            gateway: &self.gateway,
            templates: &self.templates,
            exemplars: Some(&self.exemplars),
            cot_exemplars: Some(&self.cot_exemplars),
            pdf_index: Some(&self.pdf),
            blog_index: Some(&self.blog),
            generation: &self.generation,
            image_dir,
        }
    }
}

/// The first `n` triplets of the shipped vocabulary's simple grid.
pub fn shipped_triplets(n: usize) -> Vec<Triplet> {
    let vocab = outfitgen_core::Vocabulary::load(&data_dir().join("vocabulary.json")).expect("vocabulary");
    vocab.enumerate_triplets(TripletKind::Simple).into_iter().take(n).collect()
}

/// Number of `Question:`/`Answer:` demonstration blocks ahead of the final query.
pub fn demonstration_count(prompt: &str) -> usize {
    prompt.matches("Question: ").count().saturating_sub(1)
}
