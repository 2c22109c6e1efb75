mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use common::*;
use outfitgen_core::gateway::{HttpReply, Transport, TransportFailure};
use outfitgen_core::pipeline::{run_grid, run_job, Stage, Strategy, StrategyKind};
use outfitgen_core::prompt::PromptStrategy;
use outfitgen_core::{BackendProfile, Capability, Gateway};

#[test]
fn cot_makes_two_text_calls_and_keeps_both_prompts() {
    let fx = Fixture::new();
    let t = golden_triplet();
    let before = fx.gateway.request_count("text");
    let s = Strategy { kind: StrategyKind::Cot, params: params() };
    let rec = run_job(&t, &s, &fx.deps(None)).unwrap();
    assert_eq!(fx.gateway.request_count("text") - before, 2);
    assert_eq!(rec.prompts.len(), 2);
    assert_eq!(rec.prompts[0].strategy, PromptStrategy::CotStep1);
    assert_eq!(rec.prompts[1].strategy, PromptStrategy::CotStep2);
    let colors = rec.colors.as_ref().unwrap();
    let textures = rec.textures.as_ref().unwrap();
    assert!(!colors.is_empty() && !textures.is_empty());
    assert!(rec.prompts[1].text.contains(&format!("these colors: {}", colors.join(", "))));
    assert!(!rec.cot_reprompted);
    assert_eq!(rec.exemplar_ids.len(), 2);
}

#[test]
fn few_shot_uses_two_demonstrations() {
    let fx = Fixture::new();
    let s = Strategy { kind: StrategyKind::Fs, params: params() };
    let rec = run_job(&golden_triplet(), &s, &fx.deps(None)).unwrap();
    assert_eq!(rec.prompts.len(), 1);
    assert_eq!(demonstration_count(&rec.prompts[0].text), 2);
    assert_eq!(rec.exemplar_ids.len(), 2);
    for id in &rec.exemplar_ids {
        let e = fx.exemplars.exemplars().iter().find(|e| &e.id == id).unwrap();
        assert!(rec.prompts[0].text.contains(&e.answer));
    }
}

#[test]
fn rag_records_name_their_chunks() {
    let fx = Fixture::new();
    for kind in [StrategyKind::RagPdf, StrategyKind::RagBlog] {
        let s = Strategy { kind, params: params() };
        let rec = run_job(&golden_triplet(), &s, &fx.deps(None)).unwrap();
        assert!(!rec.retrieved.is_empty() && rec.retrieved.len() <= 4);
        let prefix = if kind == StrategyKind::RagPdf { "pdf-" } else { "blog-" };
        assert!(rec.retrieved.iter().all(|c| c.doc_id.starts_with(prefix)));
        assert!(rec.prompts[0].text.starts_with("[INST]<> Imagine you are a fashion expert."));
    }
}

#[test]
fn grid_is_identical_across_parallelism() {
    let fx = Fixture::new();
    let triplets = shipped_triplets(6);
    let strategies = strategies();
    let serial = run_grid(&triplets, &strategies, &fx.deps(None), 1);
    let parallel = run_grid(&triplets, &strategies, &fx.deps(None), 8);
    assert_eq!(serial.attempted(), 30);
    assert!(serial.failures().is_empty());
    let a: Vec<_> = serial.records().iter().map(|r| r.without_timings()).collect();
    let b: Vec<_> = parallel.records().iter().map(|r| r.without_timings()).collect();
    assert_eq!(a, b);
    // input order: triplet-major, strategy-minor
    assert_eq!(a[1].strategy, StrategyKind::Fs);
    assert_eq!(a[5].triplet, triplets[1]);
}

#[test]
fn images_are_written_under_the_record_id() {
    let fx = Fixture::new();
    let dir = tempfile::tempdir().unwrap();
    let s = Strategy { kind: StrategyKind::Zs, params: params() };
    let rec = run_job(&golden_triplet(), &s, &fx.deps(Some(dir.path().to_path_buf()))).unwrap();
    let name = rec.image_path.clone().unwrap();
    assert_eq!(name, format!("{}.png", rec.id));
    let bytes = std::fs::read(dir.path().join(name)).unwrap();
    assert_eq!(outfitgen_core::hashing::sha256_hex(&bytes), rec.image_digest);
}

/// Text backend whose replies come from a script; everything else is mock.
struct ScriptedText {
    replies: Mutex<Vec<String>>,
    calls: AtomicUsize,
}

impl Transport for ScriptedText {
    fn post_json(&self, _url: &str, _body: &str, _bearer: Option<&str>, _timeout: Duration) -> Result<HttpReply, TransportFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut r = self.replies.lock().unwrap();
        let text = if r.is_empty() { "A plain description.".to_string() } else { r.remove(0) };
        Ok(HttpReply {
            status: 200,
            body: serde_json::to_vec(&serde_json::json!({ "text": text })).unwrap(),
        })
    }
}

fn scripted(replies: &[&str]) -> (Arc<ScriptedText>, Gateway) {
    let transport = Arc::new(ScriptedText {
        replies: Mutex::new(replies.iter().map(|s| s.to_string()).collect()),
        calls: AtomicUsize::new(0),
    });
    let mut profiles = mock_profiles();
    profiles[0] = BackendProfile::http("text", "http://scripted.invalid", Capability::Text);
    let gw = Gateway::with_transport(profiles, transport.clone());
    (transport, gw)
}

#[test]
fn unlabeled_colors_trigger_one_reprompt() {
    let (transport, gw) = scripted(&["Some reds and soft fabrics.", "Colors: red, black\nTextures: lace", "Final outfit."]);
    let fx = Fixture::with_gateway(gw);
    let s = Strategy { kind: StrategyKind::Cot, params: params() };
    let rec = run_job(&golden_triplet(), &s, &fx.deps(None)).unwrap();
    assert!(rec.cot_reprompted);
    assert_eq!(transport.calls.load(Ordering::SeqCst), 3);
    assert_eq!(rec.colors.unwrap(), ["red", "black"]);
    assert_eq!(rec.textures.unwrap(), ["lace"]);
    assert_eq!(rec.description, "Final outfit.");
    assert_eq!(rec.prompts.len(), 2);
}

#[test]
fn second_unlabeled_answer_fails_the_job_only() {
    let (_, gw) = scripted(&["no labels", "still no labels"]);
    let fx = Fixture::with_gateway(gw);
    let s = Strategy { kind: StrategyKind::Cot, params: params() };
    let err = run_job(&golden_triplet(), &s, &fx.deps(None)).unwrap_err();
    assert_eq!(err.stage, Stage::ColorsTextures);
    assert!(err.to_string().contains("Colors"));

    let (_, gw) = scripted(&["no labels", "still no labels"]);
    let fx = Fixture::with_gateway(gw);
    let zs = Strategy { kind: StrategyKind::Zs, params: params() };
    let cot = Strategy { kind: StrategyKind::Cot, params: params() };
    let out = run_grid(&[golden_triplet()], &[cot, zs], &fx.deps(None), 1);
    assert_eq!(out.failures().len(), 1);
    assert_eq!(out.records().len(), 1);
    assert_eq!(out.records()[0].strategy, StrategyKind::Zs);
}

#[test]
fn missing_dependencies_fail_at_prepare() {
    let fx = Fixture::new();
    let mut deps = fx.deps(None);
    deps.exemplars = None;
    deps.blog_index = None;
    for kind in [StrategyKind::Fs, StrategyKind::RagBlog] {
        let err = run_job(&golden_triplet(), &Strategy { kind, params: params() }, &deps).unwrap_err();
        assert_eq!(err.stage, Stage::Prepare);
    }
}

#[test]
fn record_ids_depend_on_configuration() {
    let fx = Fixture::new();
    let s = Strategy { kind: StrategyKind::Zs, params: params() };
    let a = run_job(&golden_triplet(), &s, &fx.deps(None)).unwrap();
    let mut other = params();
    other.rag_k = 3;
    let b = run_job(&golden_triplet(), &Strategy { kind: StrategyKind::Zs, params: other }, &fx.deps(None)).unwrap();
    assert_ne!(a.id, b.id);
    assert_eq!(a.id.len(), 24);
    let again = run_job(&golden_triplet(), &s, &fx.deps(None)).unwrap();
    assert_eq!(a.id, again.id);
}
