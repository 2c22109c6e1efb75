//! JSON bodies exchanged with `/v1/generate`, `/v1/embed` and `/v1/image`.

use serde::{Deserialize, Serialize};

pub const GENERATE_PATH: &str = "/v1/generate";
pub const EMBED_PATH: &str = "/v1/embed";
pub const IMAGE_PATH: &str = "/v1/image";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextGenRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TextGenRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 512,
            temperature: 0.7,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.prompt.trim().is_empty() {
            return Err("prompt is empty".into());
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be at least 1".into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature {} must be a non-negative number", self.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextGenResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

/// Image-side embedding request for text/image alignment backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEmbedRequest {
    pub image_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageGenRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub width: u32,
    pub height: u32,
}

impl ImageGenRequest {
    pub fn validate(&self) -> Result<(), String> {
        if self.prompt.trim().is_empty() {
            return Err("prompt is empty".into());
        }
        if self.width == 0 || self.height == 0 {
            return Err(format!("image size {}x{} must be positive", self.width, self.height));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageGenResponse {
    pub image_b64: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn field_names_are_fixed() {
        let req = TextGenRequest {
            prompt: "p".into(),
            max_tokens: 3,
            temperature: 0.5,
            seed: Some(9),
        };
        let v = serde_json::to_value(&req).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["max_tokens", "prompt", "seed", "temperature"]);

        let img = serde_json::to_value(ImageGenRequest {
            prompt: "p".into(),
            seed: None,
            width: 8,
            height: 4,
        })
        .unwrap();
        assert_eq!(img, serde_json::json!({"prompt": "p", "width": 8, "height": 4}));
        assert_eq!(
            serde_json::to_value(EmbedRequest { texts: vec!["a".into()] }).unwrap(),
            serde_json::json!({"texts": ["a"]})
        );
    }

    #[test]
    fn request_validation() {
        assert!(TextGenRequest::new("").validate().is_err());
        let mut r = TextGenRequest::new("x");
        r.temperature = -0.1;
        assert!(r.validate().is_err());
        r.temperature = 0.0;
        r.max_tokens = 0;
        assert!(r.validate().is_err());
    }

    proptest! {
        #[test]
        fn text_request_round_trip(
            prompt in ".{0,64}",
            max_tokens in 1u32..4096,
            temperature in 0.0f64..2.0,
            seed in proptest::option::of(any::<u64>()),
        ) {
            let req = TextGenRequest { prompt, max_tokens, temperature, seed };
            let back: TextGenRequest = serde_json::from_str(&serde_json::to_string(&req).unwrap()).unwrap();
            prop_assert_eq!(back, req);
        }

        #[test]
        fn image_and_embed_round_trip(
            prompt in ".{0,64}",
            seed in proptest::option::of(any::<u64>()),
            width in 1u32..2048,
            height in 1u32..2048,
            texts in proptest::collection::vec(".{0,16}", 0..8),
            vectors in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 0..6), 0..4),
        ) {
            let img = ImageGenRequest { prompt, seed, width, height };
            let back: ImageGenRequest = serde_json::from_str(&serde_json::to_string(&img).unwrap()).unwrap();
            prop_assert_eq!(back, img);
            let emb = EmbedRequest { texts };
            let back: EmbedRequest = serde_json::from_str(&serde_json::to_string(&emb).unwrap()).unwrap();
            prop_assert_eq!(back, emb);
            let resp = EmbedResponse { vectors };
            let back: EmbedResponse = serde_json::from_str(&serde_json::to_string(&resp).unwrap()).unwrap();
            prop_assert_eq!(back, resp);
        }
    }
}
