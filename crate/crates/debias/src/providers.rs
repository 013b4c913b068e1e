//! Provider selection: the builtin offline stand-ins or a remote server.

use std::time::Duration;

use debias_core::embed::{Embedder, HashingEmbedder};
use debias_core::matching::{EmbeddingScorer, ExtractiveGenerator, Generator, ScoreKind, ScoreProvider};
use debias_core::region::{
    ConstantFillBackend, IdentityBackend, InpaintBackend, NeighborFillBackend, RasterImage, Rect,
};

use crate::remote::{
    HttpClient, InpaintModel, ProviderError, RemoteEmbedder, RemoteGenerator, RemoteInpainter, RemoteScorer,
};

/// `builtin` or an `http(s)://` base URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Builtin,
    Remote(String),
}

impl ProviderSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s == "builtin" {
            Ok(ProviderSpec::Builtin)
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(ProviderSpec::Remote(s.to_string()))
        } else {
            Err(format!("provider must be `builtin` or an http(s) URL, got {s:?}"))
        }
    }
}

/// Network settings shared by every remote provider of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Network {
    pub timeout: Duration,
    pub retries: u32,
}

impl Network {
    fn client(&self, url: &str) -> HttpClient {
        HttpClient::new(url, self.timeout, self.retries)
    }
}

#[derive(Debug)]
pub enum AnyEmbedder {
    Builtin(HashingEmbedder),
    Remote(RemoteEmbedder),
}

impl AnyEmbedder {
    pub fn new(spec: &ProviderSpec, net: Network) -> Self {
        match spec {
            ProviderSpec::Builtin => AnyEmbedder::Builtin(HashingEmbedder::default()),
            ProviderSpec::Remote(url) => AnyEmbedder::Remote(RemoteEmbedder::new(net.client(url))),
        }
    }
}

impl Embedder for AnyEmbedder {
    type Error = ProviderError;

    fn dim(&self) -> usize {
        match self {
            AnyEmbedder::Builtin(e) => e.dim(),
            AnyEmbedder::Remote(e) => e.dim(),
        }
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        match self {
            AnyEmbedder::Builtin(e) => e.embed(texts).map_err(|never| match never {}),
            AnyEmbedder::Remote(e) => e.embed(texts),
        }
    }
}

#[derive(Debug)]
pub enum AnyScorer {
    Builtin(EmbeddingScorer<HashingEmbedder>),
    Remote(RemoteScorer),
}

impl AnyScorer {
    pub fn new(spec: &ProviderSpec, net: Network) -> Self {
        match spec {
            ProviderSpec::Builtin => AnyScorer::Builtin(EmbeddingScorer::new(HashingEmbedder::default())),
            ProviderSpec::Remote(url) => AnyScorer::Remote(RemoteScorer::new(net.client(url))),
        }
    }
}

impl ScoreProvider for AnyScorer {
    type Error = ProviderError;

    fn score(&self, kind: ScoreKind, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ProviderError> {
        match self {
            AnyScorer::Builtin(s) => s.score(kind, pairs).map_err(|never| match never {}),
            AnyScorer::Remote(s) => s.score(kind, pairs),
        }
    }
}

#[derive(Debug)]
pub enum AnyGenerator {
    Builtin(ExtractiveGenerator),
    Remote(RemoteGenerator),
}

impl AnyGenerator {
    pub fn new(spec: &ProviderSpec, net: Network) -> Self {
        match spec {
            ProviderSpec::Builtin => AnyGenerator::Builtin(ExtractiveGenerator),
            ProviderSpec::Remote(url) => AnyGenerator::Remote(RemoteGenerator::new(net.client(url))),
        }
    }
}

impl Generator for AnyGenerator {
    type Error = ProviderError;

    fn generate(&self, prompt: &str, max_tokens: u32, seed: u64) -> Result<String, ProviderError> {
        match self {
            AnyGenerator::Builtin(g) => g
                .generate(prompt, max_tokens, seed)
                .map_err(|e| ProviderError::Builtin(e.to_string())),
            AnyGenerator::Remote(g) => g.generate(prompt, max_tokens, seed),
        }
    }
}

/// `builtin:neighbor`, `builtin:identity`, `builtin:constant[:V]` or a URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Neighbor,
    Identity,
    Constant(u8),
    Remote(String),
}

impl BackendSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        let bad = || format!("backend must be builtin:neighbor|identity|constant[:V] or an http(s) URL, got {s:?}");
        if let Some(rest) = s.strip_prefix("builtin:") {
            return match rest {
                "neighbor" => Ok(BackendSpec::Neighbor),
                "identity" => Ok(BackendSpec::Identity),
                "constant" => Ok(BackendSpec::Constant(0)),
                _ => match rest.strip_prefix("constant:").map(str::parse::<u8>) {
                    Some(Ok(v)) => Ok(BackendSpec::Constant(v)),
                    _ => Err(bad()),
                },
            };
        }
        match ProviderSpec::parse(s) {
            Ok(ProviderSpec::Remote(url)) => Ok(BackendSpec::Remote(url)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug)]
pub enum AnyInpainter {
    Identity(IdentityBackend),
    Constant(ConstantFillBackend),
    Neighbor(NeighborFillBackend),
    Remote(RemoteInpainter),
}

impl AnyInpainter {
    pub fn new(spec: &BackendSpec, model: InpaintModel, net: Network) -> Self {
        match spec {
            BackendSpec::Neighbor => AnyInpainter::Neighbor(NeighborFillBackend),
            BackendSpec::Identity => AnyInpainter::Identity(IdentityBackend),
            BackendSpec::Constant(v) => AnyInpainter::Constant(ConstantFillBackend(*v)),
            BackendSpec::Remote(url) => AnyInpainter::Remote(RemoteInpainter::new(net.client(url), model)),
        }
    }
}

impl InpaintBackend for AnyInpainter {
    type Error = ProviderError;

    fn inpaint(&self, image: &RasterImage, mask: Rect) -> Result<RasterImage, ProviderError> {
        let infallible = |r: Result<RasterImage, core::convert::Infallible>| r.map_err(|never| match never {});
        match self {
            AnyInpainter::Identity(b) => infallible(b.inpaint(image, mask)),
            AnyInpainter::Constant(b) => infallible(b.inpaint(image, mask)),
            AnyInpainter::Neighbor(b) => infallible(b.inpaint(image, mask)),
            AnyInpainter::Remote(b) => b.inpaint(image, mask),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_parse() {
        assert_eq!(ProviderSpec::parse("builtin").unwrap(), ProviderSpec::Builtin);
        assert!(ProviderSpec::parse("ftp://x").is_err());
        assert_eq!(
            BackendSpec::parse("builtin:constant:7").unwrap(),
            BackendSpec::Constant(7)
        );
        assert_eq!(
            BackendSpec::parse("http://h:1").unwrap(),
            BackendSpec::Remote("http://h:1".into())
        );
        assert!(BackendSpec::parse("builtin:blur").is_err());
    }
}
