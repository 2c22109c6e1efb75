//! Uniform access to text generation, embedding and image generation backends.
//!
//! A backend is described by a [`BackendProfile`]. Profiles whose endpoint is
//! the literal `"mock"` are served in-process by [`mock`]; all others speak the
//! HTTP-JSON protocol in [`wire`] through a [`Transport`].

pub mod mock;
pub mod transport;
pub mod wire;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;
pub use transport::{HttpReply, HttpTransport, Transport, TransportFailure};
pub use wire::{
    EmbedRequest, EmbedResponse, ImageEmbedRequest, ImageGenRequest, ImageGenResponse,
    TextGenRequest, TextGenResponse,
};

pub const MOCK_ENDPOINT: &str = "mock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Text,
    Embed,
    Image,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capability::Text => "text",
            Capability::Embed => "embed",
            Capability::Image => "image",
        })
    }
}

fn default_timeout_ms() -> u64 {
    60_000
}
fn default_retry() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendProfile {
    pub name: String,
    /// Base URL, or `"mock"`.
    pub endpoint: String,
    pub capability: Capability,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after the first for transient failures.
    #[serde(default = "default_retry")]
    pub retry: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bearer_token: Option<String>,
    /// Vector width produced by the mock embedder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_dimension: Option<usize>,
}

impl BackendProfile {
    pub fn mock(name: &str, capability: Capability) -> Self {
        Self {
            name: name.to_string(),
            endpoint: MOCK_ENDPOINT.to_string(),
            capability,
            timeout_ms: default_timeout_ms(),
            retry: default_retry(),
            backoff_ms: default_backoff_ms(),
            max_concurrency: default_concurrency(),
            bearer_token: None,
            mock_dimension: None,
        }
    }

    pub fn http(name: &str, endpoint: &str, capability: Capability) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            ..Self::mock(name, capability)
        }
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == MOCK_ENDPOINT
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// `GATEWAY_<PROFILE>_URL`, with the profile name upper-cased and
    /// non-alphanumerics mapped to `_`.
    pub fn env_override_key(&self) -> String {
        let name: String = self
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
            .collect();
        format!("GATEWAY_{name}_URL")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GatewayErrorKind {
    UnknownProfile,
    Capability { expected: Capability, actual: Capability },
    Validation(String),
    Timeout,
    Transport(String),
    Status { code: u16, body: String },
    Malformed(String),
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("backend profile \"{profile}\": {kind}")]
pub struct GatewayError {
    pub profile: String,
    pub kind: GatewayErrorKind,
}

impl fmt::Display for GatewayErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GatewayErrorKind::UnknownProfile => f.write_str("no such profile"),
            GatewayErrorKind::Capability { expected, actual } => {
                write!(f, "profile serves {actual}, {expected} required")
            }
            GatewayErrorKind::Validation(m) => write!(f, "invalid request: {m}"),
            GatewayErrorKind::Timeout => f.write_str("timed out"),
            GatewayErrorKind::Transport(m) => write!(f, "transport failure: {m}"),
            GatewayErrorKind::Status { code, body } => write!(f, "HTTP {code}: {body}"),
            GatewayErrorKind::Malformed(m) => write!(f, "malformed response body: {m}"),
            GatewayErrorKind::Protocol(m) => write!(f, "protocol violation: {m}"),
        }
    }
}

impl GatewayErrorKind {
    fn is_transient(&self) -> bool {
        match self {
            GatewayErrorKind::Timeout | GatewayErrorKind::Transport(_) => true,
            GatewayErrorKind::Status { code, .. } => *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

/// A decoded, digest-stamped PNG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageResult {
    pub png: Vec<u8>,
    pub digest: String,
    pub width: u32,
    pub height: u32,
}

impl ImageResult {
    fn from_png(png: Vec<u8>) -> Result<Self, String> {
        let decoder = png::Decoder::new(png.as_slice());
        let reader = decoder.read_info().map_err(|e| e.to_string())?;
        let (width, height) = {
            let info = reader.info();
            (info.width, info.height)
        };
        let digest = sha256_hex(&png);
        Ok(Self {
            png,
            digest,
            width,
            height,
        })
    }

    pub fn digest_matches(&self) -> bool {
        sha256_hex(&self.png) == self.digest
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|p| p.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.permits.lock().unwrap_or_else(|p| p.into_inner());
        *n += 1;
        self.0.freed.notify_one();
    }
}

struct ProfileSlot {
    profile: BackendProfile,
    gate: Semaphore,
    requests: AtomicU64,
    attempts: AtomicU64,
}

/// Routes requests to named profiles. Stateless per request apart from call
/// counters and per-profile concurrency caps.
pub struct Gateway {
    slots: HashMap<String, ProfileSlot>,
    transport: Arc<dyn Transport>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.slots.keys().collect();
        names.sort();
        f.debug_struct("Gateway").field("profiles", &names).finish()
    }
}

impl Gateway {
    /// Builds a gateway over HTTP, applying `GATEWAY_<PROFILE>_URL` overrides.
    pub fn new(profiles: Vec<BackendProfile>) -> Self {
        let profiles = profiles
            .into_iter()
            .map(|mut p| {
                if let Ok(url) = std::env::var(p.env_override_key()) {
                    if !url.trim().is_empty() {
                        p.endpoint = url.trim().to_string();
                    }
                }
                p
            })
            .collect();
        Self::with_transport(profiles, Arc::new(HttpTransport::new()))
    }

    pub fn with_transport(profiles: Vec<BackendProfile>, transport: Arc<dyn Transport>) -> Self {
        let slots = profiles
            .into_iter()
            .map(|p| {
                let slot = ProfileSlot {
                    gate: Semaphore::new(p.max_concurrency),
                    requests: AtomicU64::new(0),
                    attempts: AtomicU64::new(0),
                    profile: p,
                };
                (slot.profile.name.clone(), slot)
            })
            .collect();
        Self { slots, transport }
    }

    /// A gateway whose text, embed and image profiles are all mocks.
    pub fn all_mock(text: &str, embed: &str, image: &str) -> Self {
        Self::with_transport(
            vec![
                BackendProfile::mock(text, Capability::Text),
                BackendProfile::mock(embed, Capability::Embed),
                BackendProfile::mock(image, Capability::Image),
            ],
            Arc::new(HttpTransport::new()),
        )
    }

    pub fn profile(&self, name: &str) -> Option<&BackendProfile> {
        self.slots.get(name).map(|s| &s.profile)
    }

    pub fn profile_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.slots.keys().cloned().collect();
        names.sort();
        names
    }

    /// Logical requests issued against `profile` so far.
    pub fn request_count(&self, profile: &str) -> u64 {
        self.slots
            .get(profile)
            .map_or(0, |s| s.requests.load(Ordering::SeqCst))
    }

    /// Wire attempts (including retries) issued against `profile` so far.
    pub fn attempt_count(&self, profile: &str) -> u64 {
        self.slots
            .get(profile)
            .map_or(0, |s| s.attempts.load(Ordering::SeqCst))
    }

    fn slot(&self, name: &str, capability: Capability) -> Result<&ProfileSlot, GatewayError> {
        let slot = self.slots.get(name).ok_or_else(|| GatewayError {
            profile: name.to_string(),
            kind: GatewayErrorKind::UnknownProfile,
        })?;
        if slot.profile.capability != capability {
            return Err(GatewayError {
                profile: name.to_string(),
                kind: GatewayErrorKind::Capability {
                    expected: capability,
                    actual: slot.profile.capability,
                },
            });
        }
        Ok(slot)
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        slot: &ProfileSlot,
        path: &str,
        req: &Req,
    ) -> Result<Resp, GatewayError> {
        let p = &slot.profile;
        let err = |kind| GatewayError {
            profile: p.name.clone(),
            kind,
        };
        let body = serde_json::to_string(req).map_err(|e| err(GatewayErrorKind::Validation(e.to_string())))?;
        let url = format!("{}{}", p.endpoint.trim_end_matches('/'), path);
        let mut attempt = 0u32;
        loop {
            slot.attempts.fetch_add(1, Ordering::SeqCst);
            let outcome = {
                let _permit = slot.gate.acquire();
                self.transport
                    .post_json(&url, &body, p.bearer_token.as_deref(), p.timeout())
            };
            let kind = match outcome {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    return serde_json::from_slice(&reply.body)
                        .map_err(|e| err(GatewayErrorKind::Malformed(e.to_string())));
                }
                Ok(reply) => GatewayErrorKind::Status {
                    code: reply.status,
                    body: String::from_utf8_lossy(&reply.body).chars().take(200).collect(),
                },
                Err(TransportFailure::Timeout) => GatewayErrorKind::Timeout,
                Err(TransportFailure::Connect(m)) | Err(TransportFailure::Other(m)) => {
                    GatewayErrorKind::Transport(m)
                }
            };
            if !kind.is_transient() || attempt >= p.retry {
                return Err(err(kind));
            }
            let backoff = p.backoff_ms.saturating_mul(1u64 << attempt.min(16));
            if backoff > 0 {
                std::thread::sleep(Duration::from_millis(backoff));
            }
            attempt += 1;
        }
    }

    pub fn generate_text(&self, profile: &str, req: &TextGenRequest) -> Result<String, GatewayError> {
        let slot = self.slot(profile, Capability::Text)?;
        let err = |kind| GatewayError {
            profile: profile.to_string(),
            kind,
        };
        req.validate().map_err(|m| err(GatewayErrorKind::Validation(m)))?;
        slot.requests.fetch_add(1, Ordering::SeqCst);
        let text = if slot.profile.is_mock() {
            slot.attempts.fetch_add(1, Ordering::SeqCst);
            mock::generate_text(&req.prompt, req.seed)
        } else {
            let resp: TextGenResponse = self.post(slot, wire::GENERATE_PATH, req)?;
            resp.text
        };
        if text.trim().is_empty() {
            return Err(err(GatewayErrorKind::Protocol("empty generation".into())));
        }
        Ok(text)
    }

    pub fn embed(&self, profile: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let slot = self.slot(profile, Capability::Embed)?;
        let err = |kind| GatewayError {
            profile: profile.to_string(),
            kind,
        };
        if texts.is_empty() {
            return Err(err(GatewayErrorKind::Validation("no texts to embed".into())));
        }
        slot.requests.fetch_add(1, Ordering::SeqCst);
        let vectors = if slot.profile.is_mock() {
            slot.attempts.fetch_add(1, Ordering::SeqCst);
            let dim = slot.profile.mock_dimension.unwrap_or(mock::DEFAULT_MOCK_DIMENSION);
            texts.iter().map(|t| mock::embed_text(t, dim)).collect()
        } else {
            let resp: EmbedResponse = self.post(
                slot,
                wire::EMBED_PATH,
                &EmbedRequest {
                    texts: texts.to_vec(),
                },
            )?;
            resp.vectors
        };
        check_vectors(&vectors, texts.len()).map_err(|m| err(GatewayErrorKind::Protocol(m)))?;
        Ok(vectors)
    }

    /// Embeds a PNG into the same space as [`Gateway::embed`] text vectors.
    pub fn embed_image(&self, profile: &str, png: &[u8]) -> Result<Vec<f64>, GatewayError> {
        let slot = self.slot(profile, Capability::Embed)?;
        let err = |kind| GatewayError {
            profile: profile.to_string(),
            kind,
        };
        if png.is_empty() {
            return Err(err(GatewayErrorKind::Validation("empty image".into())));
        }
        slot.requests.fetch_add(1, Ordering::SeqCst);
        let mut vectors = if slot.profile.is_mock() {
            slot.attempts.fetch_add(1, Ordering::SeqCst);
            let dim = slot.profile.mock_dimension.unwrap_or(mock::DEFAULT_MOCK_DIMENSION);
            vec![mock::embed_image(png, dim)]
        } else {
            let image_b64 = base64::engine::general_purpose::STANDARD.encode(png);
            let resp: EmbedResponse =
                self.post(slot, wire::EMBED_PATH, &ImageEmbedRequest { image_b64 })?;
            resp.vectors
        };
        check_vectors(&vectors, 1).map_err(|m| err(GatewayErrorKind::Protocol(m)))?;
        Ok(vectors.remove(0))
    }

    pub fn generate_image(&self, profile: &str, req: &ImageGenRequest) -> Result<ImageResult, GatewayError> {
        let slot = self.slot(profile, Capability::Image)?;
        let err = |kind| GatewayError {
            profile: profile.to_string(),
            kind,
        };
        req.validate().map_err(|m| err(GatewayErrorKind::Validation(m)))?;
        slot.requests.fetch_add(1, Ordering::SeqCst);
        let png = if slot.profile.is_mock() {
            slot.attempts.fetch_add(1, Ordering::SeqCst);
            mock::generate_image(&req.prompt, req.seed, req.width, req.height)
        } else {
            let resp: ImageGenResponse = self.post(slot, wire::IMAGE_PATH, req)?;
            base64::engine::general_purpose::STANDARD
                .decode(resp.image_b64.trim())
                .map_err(|e| err(GatewayErrorKind::Protocol(format!("image_b64: {e}"))))?
        };
        let image = ImageResult::from_png(png)
            .map_err(|m| err(GatewayErrorKind::Protocol(format!("undecodable image: {m}"))))?;
        if (image.width, image.height) != (req.width, req.height) {
            return Err(err(GatewayErrorKind::Protocol(format!(
                "image is {}x{}, requested {}x{}",
                image.width, image.height, req.width, req.height
            ))));
        }
        Ok(image)
    }
}

fn check_vectors(vectors: &[Vec<f64>], expected: usize) -> Result<(), String> {
    if vectors.len() != expected {
        return Err(format!("{} vectors for {} inputs", vectors.len(), expected));
    }
    let dim = vectors[0].len();
    if dim == 0 {
        return Err("zero-dimensional vector".into());
    }
    if vectors.iter().any(|v| v.len() != dim) {
        return Err("vectors disagree on dimension".into());
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err("non-finite vector component".into());
    }
    Ok(())
}

/// Anything that can turn texts into vectors.
pub trait Embedder: Send + Sync {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

/// Binds a gateway to one embedding profile.
#[derive(Debug, Clone, Copy)]
pub struct ProfileEmbedder<'a> {
    pub gateway: &'a Gateway,
    pub profile: &'a str,
}

impl<'a> ProfileEmbedder<'a> {
    pub fn new(gateway: &'a Gateway, profile: &'a str) -> Self {
        Self { gateway, profile }
    }
}

impl Embedder for ProfileEmbedder<'_> {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        self.gateway.embed(self.profile, texts)
    }
}
