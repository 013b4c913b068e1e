//! HTTP clients for the embedding, scoring, generation and inpainting
//! endpoints.

use std::sync::OnceLock;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use debias_core::embed::Embedder;
use debias_core::matching::{Generator, ScoreKind, ScoreProvider};
use debias_core::region::{InpaintBackend, RasterImage, Rect};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::io::{decode_png, encode_png};

const MAX_BODY: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("cannot reach {url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url} answered with status {status}: {message}")]
    Status { url: String, status: u16, message: String },
    #[error("malformed response from {url}: {message}")]
    Malformed { url: String, message: String },
    #[error("{url} returned {got} results for {expected} inputs")]
    Count { url: String, expected: usize, got: usize },
    #[error("{url} changed embedding dimension from {expected} to {got}")]
    Dimension { url: String, expected: usize, got: usize },
    #[error("builtin provider failed: {0}")]
    Builtin(String),
}

/// JSON-over-HTTP client bound to one base URL. Transport failures and 5xx
/// answers are retried.
#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    base: String,
    retries: u32,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

fn error_message(body: &str) -> String {
    match serde_json::from_str::<ErrorBody>(body) {
        Ok(e) => e.error,
        Err(_) => body.trim().chars().take(200).collect(),
    }
}

impl HttpClient {
    pub fn new(base: &str, timeout: Duration, retries: u32) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base: base.trim_end_matches('/').to_string(),
            retries,
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base, path.trim_start_matches('/'))
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ProviderError> {
        let url = self.endpoint(path);
        let mut last = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(50 << attempt.min(5)));
            }
            let mut resp = match self.agent.post(&url).send_json(body) {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("{url}: attempt {} failed: {e}", attempt + 1);
                    last = Some(ProviderError::Transport {
                        url: url.clone(),
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let text = match resp.body_mut().with_config().limit(MAX_BODY).read_to_string() {
                Ok(t) => t,
                Err(e) => {
                    last = Some(ProviderError::Transport {
                        url: url.clone(),
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            if !(200..300).contains(&status) {
                let err = ProviderError::Status {
                    url: url.clone(),
                    status,
                    message: error_message(&text),
                };
                if status >= 500 {
                    last = Some(err);
                    continue;
                }
                return Err(err);
            }
            return serde_json::from_str(&text).map_err(|e| ProviderError::Malformed {
                url,
                message: e.to_string(),
            });
        }
        Err(last.expect("at least one attempt"))
    }

    fn malformed(&self, path: &str, message: impl Into<String>) -> ProviderError {
        ProviderError::Malformed {
            url: self.endpoint(path),
            message: message.into(),
        }
    }

    fn check_count(&self, path: &str, expected: usize, got: usize) -> Result<(), ProviderError> {
        if expected == got {
            Ok(())
        } else {
            Err(ProviderError::Count {
                url: self.endpoint(path),
                expected,
                got,
            })
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

/// `POST /embed`. The dimension reported by the first answer is pinned for
/// the provider's lifetime.
#[derive(Debug)]
pub struct RemoteEmbedder {
    client: HttpClient,
    dim: OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(client: HttpClient) -> Self {
        Self {
            client,
            dim: OnceLock::new(),
        }
    }
}

impl Embedder for RemoteEmbedder {
    type Error = ProviderError;

    /// Zero until the first successful call.
    fn dim(&self) -> usize {
        self.dim.get().copied().unwrap_or(0)
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let r: EmbedResponse = self.client.post("embed", &EmbedRequest { texts })?;
        self.client.check_count("embed", texts.len(), r.vectors.len())?;
        if r.dim == 0 {
            return Err(self.client.malformed("embed", "dimension 0"));
        }
        if let Some(v) = r.vectors.iter().find(|v| v.len() != r.dim) {
            return Err(self
                .client
                .malformed("embed", format!("vector of length {} with dim {}", v.len(), r.dim)));
        }
        if r.vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(self.client.malformed("embed", "non-finite vector entry"));
        }
        let pinned = *self.dim.get_or_init(|| r.dim);
        if pinned != r.dim {
            return Err(ProviderError::Dimension {
                url: self.client.endpoint("embed"),
                expected: pinned,
                got: r.dim,
            });
        }
        Ok(r.vectors)
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    kind: &'static str,
    pairs: Vec<[&'a str; 2]>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

/// `POST /score`: one request per batch of pairs of one kind.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    client: HttpClient,
}

impl RemoteScorer {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl ScoreProvider for RemoteScorer {
    type Error = ProviderError;

    fn score(&self, kind: ScoreKind, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ProviderError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let req = ScoreRequest {
            kind: kind.as_str(),
            pairs: pairs.iter().map(|(a, b)| [*a, *b]).collect(),
        };
        let r: ScoreResponse = self.client.post("score", &req)?;
        self.client.check_count("score", pairs.len(), r.scores.len())?;
        if r.scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(self.client.malformed("score", "score outside [0, 1]"));
        }
        Ok(r.scores)
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    seed: u64,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// `POST /generate`.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    client: HttpClient,
}

impl RemoteGenerator {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl Generator for RemoteGenerator {
    type Error = ProviderError;

    fn generate(&self, prompt: &str, max_tokens: u32, seed: u64) -> Result<String, ProviderError> {
        let r: GenerateResponse = self.client.post(
            "generate",
            &GenerateRequest {
                prompt,
                max_tokens,
                seed,
            },
        )?;
        Ok(r.text)
    }
}

#[derive(Serialize)]
struct InpaintRequest<'a> {
    image: String,
    mask: [u32; 4],
    model: &'a str,
}

#[derive(Deserialize)]
struct InpaintResponse {
    image: String,
}

/// Which inpainting model a request addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InpaintModel {
    /// The pretrained model, used once on the whole region.
    Pretrained,
    /// The finetuned model, used for the refinement passes.
    Finetuned,
}

impl InpaintModel {
    pub fn as_str(self) -> &'static str {
        match self {
            InpaintModel::Pretrained => "p",
            InpaintModel::Finetuned => "f",
        }
    }
}

/// `POST /inpaint` with base64 PNG images.
#[derive(Debug, Clone)]
pub struct RemoteInpainter {
    client: HttpClient,
    model: InpaintModel,
}

impl RemoteInpainter {
    pub fn new(client: HttpClient, model: InpaintModel) -> Self {
        Self { client, model }
    }
}

impl InpaintBackend for RemoteInpainter {
    type Error = ProviderError;

    fn inpaint(&self, image: &RasterImage, mask: Rect) -> Result<RasterImage, ProviderError> {
        let req = InpaintRequest {
            image: B64.encode(encode_png(image)),
            mask: [mask.x0, mask.y0, mask.x1, mask.y1],
            model: self.model.as_str(),
        };
        let r: InpaintResponse = self.client.post("inpaint", &req)?;
        let bytes = B64
            .decode(r.image.as_bytes())
            .map_err(|e| self.client.malformed("inpaint", e.to_string()))?;
        let out = decode_png(&bytes).map_err(|e| self.client.malformed("inpaint", e))?;
        if out.width() != image.width() || out.height() != image.height() {
            return Err(self.client.malformed(
                "inpaint",
                format!(
                    "image is {}x{}, sent {}x{}",
                    out.width(),
                    out.height(),
                    image.width(),
                    image.height()
                ),
            ));
        }
        if out.channels() == image.channels() {
            return Ok(out);
        }
        // Match the request's channel layout (grey from RGB by the first channel).
        let mut fixed = image.clone();
        for y in 0..image.height() {
            for x in 0..image.width() {
                let p = out.pixel(x, y);
                let px = match (p.len(), image.channels()) {
                    (1, _) => [p[0]; 3],
                    _ => [p[0], p[1], p[2]],
                };
                fixed.set_pixel(x, y, &px[..usize::from(image.channels())]);
            }
        }
        Ok(fixed)
    }
}
