#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").canonicalize().unwrap()
}

/// A config over the shipped data whose outputs go to `out`.
pub fn config_value(out: &Path, vocabulary: &str) -> Value {
    let d = data_dir();
    let p = |rel: &str| d.join(rel).display().to_string();
    json!({
        "vocabulary": p(vocabulary),
        "exemplars": p("exemplars.jsonl"),
        "cot_exemplars": p("cot_exemplars.jsonl"),
        "corpus": { "pdf": p("corpus/pdf_manifest.json"), "blog": p("corpus/blog_manifest.json") },
        "profiles": [
            { "name": "text", "endpoint": "mock", "capability": "text" },
            { "name": "embed", "endpoint": "mock", "capability": "embed" },
            { "name": "image", "endpoint": "mock", "capability": "image" },
            { "name": "clip", "endpoint": "mock", "capability": "embed" }
        ],
        "strategy": {
            "text_profile": "text", "embed_profile": "embed",
            "image_profile": "image", "clip_profile": "clip"
        },
        "generation": { "seed": 3, "image_width": 16, "image_height": 16 },
        "output_dir": out.display().to_string(),
        "parallelism": 4,
        "survey": {
            "admin_token": "admin-secret",
            "stimuli": {
                "e1": [
                    { "id": "e1-a", "style": "gothic", "occasion": "a wedding", "type": "woman", "strategy": "zs" },
                    { "id": "e1-b", "style": "gothic", "occasion": "cruise", "type": "man", "strategy": "cot" }
                ],
                "e2": [
                    { "id": "e2-a", "style": "gothic", "occasion": "wedding", "type": "woman", "strategy": "fs" }
                ],
                "e3": [
                    { "id": "e3-a", "style": "gothic", "occasion": "wedding", "type": "woman" }
                ]
            }
        }
    })
}

pub fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}
