use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use outfitgen_core::eval::{chi2_sf, chi_square_homogeneity};
use outfitgen_core::exemplar::{ExemplarStore, SelectorText};
use outfitgen_core::gateway::{mock, ProfileEmbedder};
use outfitgen_core::pipeline::{run_grid, GenerationParams, PipelineDeps, Strategy, StrategyKind, StrategyParams};
use outfitgen_core::prompt::{render_few_shot, Templates};
use outfitgen_core::rag::{self, Chunk, ChunkingConfig, SourceKind, VectorIndex};
use outfitgen_core::{Gateway, Triplet, TripletKind, Vocabulary};

const DIM: usize = 384;

fn data(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn store(n: usize) -> ExemplarStore {
    let mut s = ExemplarStore::new();
    for i in 0..n {
        let q = format!("question {i}");
        s.insert_embedded(&format!("e{i}"), &q, "answer", mock::embed_text(&q, DIM)).unwrap();
    }
    s
}

fn index(n: usize) -> VectorIndex {
    let chunks = (0..n)
        .map(|i| Chunk {
            doc_id: format!("d{}", i / 10),
            seq: i % 10,
            text: format!("chunk {i}"),
            source_kind: SourceKind::Pdf,
            embedding: mock::embed_text(&format!("chunk {i}"), DIM),
        })
        .collect();
    VectorIndex::from_embedded(chunks).unwrap()
}

fn selection(c: &mut Criterion) {
    let query = mock::embed_text("gothic wedding woman", DIM);
    let mut g = c.benchmark_group("select_top_k");
    for n in [20, 200, 2000] {
        let s = store(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| {
            b.iter(|| s.select_top_k(black_box(&query), 5).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("index_search");
    for n in [100, 1000, 10000] {
        let idx = index(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &idx, |b, idx| {
            b.iter(|| idx.search(black_box(&query), 3).unwrap().len())
        });
    }
    g.finish();
}

fn chunking(c: &mut Criterion) {
    let text = std::fs::read_to_string(data("corpus/pdf/dressing_for_occasions.txt"))
        .unwrap()
        .repeat(20);
    let cfg = ChunkingConfig::default();
    c.bench_function("ingest_document", |b| {
        b.iter(|| rag::ingest_document("doc", black_box(&text), SourceKind::Pdf, cfg.chunk_size, cfg.overlap).unwrap())
    });
}

fn statistics(c: &mut Criterion) {
    c.bench_function("chi2_sf", |b| b.iter(|| chi2_sf(black_box(7.81), black_box(3)).unwrap()));
    c.bench_function("chi_square_homogeneity", |b| {
        b.iter(|| chi_square_homogeneity(black_box(&[3, 9, 21, 30, 16]), black_box(&[8, 14, 25, 20, 12])).unwrap())
    });
}

fn prompts(c: &mut Criterion) {
    let t = Triplet::new("gothic", "wedding", "woman", TripletKind::Simple);
    let s = store(5);
    c.bench_function("render_few_shot", |b| b.iter(|| render_few_shot(black_box(&t), s.exemplars()).unwrap()));
}

fn grid(c: &mut Criterion) {
    let gateway = Gateway::all_mock("text", "embed", "image");
    let embedder = ProfileEmbedder::new(&gateway, "embed");
    let ex = ExemplarStore::load_jsonl(&data("exemplars.jsonl"), &embedder, SelectorText::QuestionAnswer).unwrap();
    let cot = ExemplarStore::load_jsonl(&data("cot_exemplars.jsonl"), &embedder, SelectorText::QuestionAnswer).unwrap();
    let idx = |m: &str| {
        let chunks = rag::ingest_manifest(&data(&format!("corpus/{m}")), ChunkingConfig::default()).unwrap();
        rag::build_index(chunks, &embedder).unwrap()
    };
    let (pdf, blog) = (idx("pdf_manifest.json"), idx("blog_manifest.json"));
    let generation = GenerationParams {
        seed: Some(1),
        image_width: 16,
        image_height: 16,
        ..GenerationParams::default()
    };
    let deps = PipelineDeps {
        gateway: &gateway,
        templates: Templates::shipped(),
        exemplars: Some(&ex),
        cot_exemplars: Some(&cot),
        pdf_index: Some(&pdf),
        blog_index: Some(&blog),
        generation: &generation,
        image_dir: None,
    };
    let triplets: Vec<Triplet> = Vocabulary::load(&data("vocabulary.json"))
        .unwrap()
        .enumerate_triplets(TripletKind::Simple)
        .into_iter()
        .take(4)
        .collect();
    let strategies: Vec<Strategy> = StrategyKind::ALL
        .into_iter()
        .map(|kind| Strategy {
            kind,
            params: StrategyParams::new("text", "embed", "image"),
        })
        .collect();
    let mut g = c.benchmark_group("mock_grid_20_jobs");
    g.sample_size(10);
    for p in [1, 4] {
        g.bench_with_input(BenchmarkId::new("parallelism", p), &p, |b, &p| {
            b.iter(|| run_grid(&triplets, &strategies, &deps, p).attempted())
        });
    }
    g.finish();
}

criterion_group!(benches, selection, chunking, statistics, prompts, grid);
criterion_main!(benches);
