//! Deterministic in-process backends.
//!
//! Every output is a pure function of the request: embeddings come from a
//! ChaCha stream seeded with a stable hash of the input, text is a canonical
//! outfit sentence with hash-selected colors and textures, and images are
//! solid-color PNGs whose color and `mock-key` text chunk derive from the same hash.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::hashing::stable_hash64;
use crate::similarity::normalize;

pub const DEFAULT_MOCK_DIMENSION: usize = 64;

const COLORS: &[&str] = &[
    "black", "crimson", "ivory", "charcoal", "navy", "emerald", "burgundy", "blush pink",
    "camel", "mustard", "olive", "lavender", "silver", "cobalt", "terracotta", "cream",
];

const TEXTURES: &[&str] = &[
    "velvet", "silk", "lace", "denim", "leather", "linen", "tweed", "chiffon", "satin",
    "knit wool", "suede", "crochet",
];

const SILHOUETTES: &[&str] = &[
    "tailored two-piece look",
    "flowing maxi dress",
    "layered streetwear ensemble",
    "fitted jumpsuit",
    "relaxed separates outfit",
    "structured blazer-and-trousers set",
];

fn rng_for(domain: &str, bytes: &[u8], seed: Option<u64>) -> ChaCha8Rng {
    let mut keyed = Vec::with_capacity(domain.len() + bytes.len() + 9);
    keyed.extend_from_slice(domain.as_bytes());
    keyed.push(0);
    keyed.extend_from_slice(bytes);
    if let Some(s) = seed {
        keyed.extend_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::seed_from_u64(stable_hash64(&keyed))
}

fn unit_vector(mut rng: ChaCha8Rng, dimension: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(unit) = normalize(v) {
            return unit;
        }
    }
}

pub fn embed_text(text: &str, dimension: usize) -> Vec<f64> {
    unit_vector(rng_for("text", text.as_bytes(), None), dimension)
}

pub fn embed_image(png: &[u8], dimension: usize) -> Vec<f64> {
    unit_vector(rng_for("image", png, None), dimension)
}

pub fn generate_text(prompt: &str, seed: Option<u64>) -> String {
    let mut rng = rng_for("generate", prompt.as_bytes(), seed);
    let silhouette = SILHOUETTES.choose(&mut rng).expect("non-empty");
    let colors: Vec<&str> = COLORS.choose_multiple(&mut rng, 2).copied().collect();
    let textures: Vec<&str> = TEXTURES.choose_multiple(&mut rng, 2).copied().collect();
    format!(
        "A {silhouette} built around {c1} and {c2}, layered in {t1} and {t2}, with accessories kept in the same palette.\nColors: {c1}, {c2}\nTextures: {t1}, {t2}",
        c1 = colors[0],
        c2 = colors[1],
        t1 = textures[0],
        t2 = textures[1],
    )
}

pub fn generate_image(prompt: &str, seed: Option<u64>, width: u32, height: u32) -> Vec<u8> {
    let mut rng = rng_for("image-gen", prompt.as_bytes(), seed);
    let key: u64 = rng.gen();
    let rgb: [u8; 3] = rng.gen();
    let pixels: Vec<u8> = rgb
        .iter()
        .copied()
        .cycle()
        .take(width as usize * height as usize * 3)
        .collect();
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder
            .add_text_chunk("mock-key".to_string(), format!("{key:016x}"))
            .expect("text chunk");
        let mut writer = encoder.write_header().expect("png header");
        writer.write_image_data(&pixels).expect("png data");
    }
    out
}
