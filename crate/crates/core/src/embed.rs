//! Embedding providers, cosine similarity and distractor-similarity statistics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::convert::Infallible;

use crate::corpus::Corpus;
use crate::text::tokenize;

/// Maps texts to fixed-width vectors.
///
/// Implementations must be deterministic, return finite entries and keep the
/// output order equal to the input order.
pub trait Embedder {
    type Error;

    fn dim(&self) -> usize;

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, Self::Error>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    type Error = E::Error;

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, Self::Error> {
        (**self).embed(texts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CosineError {
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    libm::sqrt(dot(u, u))
}

/// `u·v / (‖u‖‖v‖)`, clamped into `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, CosineError> {
    if u.len() != v.len() {
        return Err(CosineError::DimensionMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(CosineError::ZeroNorm);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Built-in deterministic provider: bag of tokens hashed (FNV-1a) into
/// `dim` buckets, then L2-normalized. Texts with no tokens hash a fixed
/// sentinel so every output has unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

pub const HASHING_DIM: usize = 64;

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            v[(fnv1a(b"\0") % self.dim as u64) as usize] = 1.0;
            return v;
        }
        for t in &tokens {
            v[(fnv1a(t.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let n = norm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        v
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(HASHING_DIM)
    }
}

impl Embedder for HashingEmbedder {
    type Error = Infallible;

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, Infallible> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Distractor-similarity report.
#[derive(Debug, Clone, PartialEq)]
pub struct DsReport {
    /// Mean over samples of the mean correct-vs-distractor similarity.
    pub sim_cd: f64,
    /// Mean over samples of the mean pairwise distractor similarity; absent
    /// when no sample has two distractors.
    pub sim_dd: Option<f64>,
    /// Mean similarity of each correct answer to its k-th most similar other
    /// correct answer; absent when the corpus has `k` or fewer samples.
    pub inter_rank_sim: Option<f64>,
    pub k: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DsError<E> {
    #[error("corpus is empty")]
    Empty,
    #[error("rank parameter k must be at least 1")]
    InvalidRank,
    #[error("sample {0:?} has fewer than two options")]
    TooFewOptions(String),
    #[error("embedding provider failed on sample {sample_id:?}: {source}")]
    Provider { sample_id: String, source: E },
    #[error("sample {sample_id:?}: {source}")]
    Similarity { sample_id: String, source: CosineError },
    #[error("provider returned {got} vectors for {expected} texts")]
    BatchSize { expected: usize, got: usize },
}

/// Mean that does not depend on input order: values are summed in sorted order.
pub(crate) fn order_free_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    Some(values.into_iter().sum::<f64>() / n)
}

/// Embeds every option of every sample, memoizing repeated texts.
/// Returns one vector list per sample, aligned with its options.
pub fn embed_options<P: Embedder>(corpus: &Corpus, provider: &P) -> Result<Vec<Vec<Vec<f64>>>, DsError<P::Error>> {
    let mut memo: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut out = Vec::with_capacity(corpus.len());
    for s in corpus {
        let texts: Vec<String> = s.options.iter().map(|o| o.joined()).collect();
        let missing: Vec<&str> = {
            let mut seen = alloc::collections::BTreeSet::new();
            texts
                .iter()
                .filter(|t| !memo.contains_key(*t) && seen.insert(t.as_str()))
                .map(String::as_str)
                .collect()
        };
        if !missing.is_empty() {
            let vecs = provider.embed(&missing).map_err(|e| DsError::Provider {
                sample_id: s.id.clone(),
                source: e,
            })?;
            if vecs.len() != missing.len() {
                return Err(DsError::BatchSize {
                    expected: missing.len(),
                    got: vecs.len(),
                });
            }
            for (t, v) in missing.iter().zip(vecs) {
                memo.insert(String::from(*t), v);
            }
        }
        out.push(texts.iter().map(|t| memo[t].clone()).collect());
    }
    Ok(out)
}

/// Distractor-similarity statistics with rank parameter `k` (1-based).
pub fn ds_stats<P: Embedder>(corpus: &Corpus, provider: &P, k: usize) -> Result<DsReport, DsError<P::Error>> {
    if corpus.is_empty() {
        return Err(DsError::Empty);
    }
    if k == 0 {
        return Err(DsError::InvalidRank);
    }
    if let Some(s) = corpus.iter().find(|s| s.options.len() < 2) {
        return Err(DsError::TooFewOptions(s.id.clone()));
    }
    let vectors = embed_options(corpus, provider)?;
    ds_stats_from_vectors(corpus, &vectors, k)
}

/// Same as [`ds_stats`] over precomputed option vectors.
pub fn ds_stats_from_vectors<E>(corpus: &Corpus, vectors: &[Vec<Vec<f64>>], k: usize) -> Result<DsReport, DsError<E>> {
    let cos = |id: &str, a: &[f64], b: &[f64]| {
        cosine_similarity(a, b).map_err(|e| DsError::Similarity {
            sample_id: String::from(id),
            source: e,
        })
    };
    let mut cd = Vec::with_capacity(corpus.len());
    let mut dd = Vec::new();
    for (s, vs) in corpus.iter().zip(vectors) {
        let c = &vs[s.correct];
        let ds: Vec<usize> = s.distractor_indices().collect();
        let mut acc = Vec::with_capacity(ds.len());
        for &d in &ds {
            acc.push(cos(&s.id, c, &vs[d])?);
        }
        cd.push(order_free_mean(acc).unwrap_or(0.0));
        if ds.len() >= 2 {
            let mut pairs = Vec::new();
            for (x, &a) in ds.iter().enumerate() {
                for &b in &ds[x + 1..] {
                    pairs.push(cos(&s.id, &vs[a], &vs[b])?);
                }
            }
            dd.extend(order_free_mean(pairs));
        }
    }
    let n = corpus.len();
    let inter = if n > k {
        let mut ranked = Vec::with_capacity(n);
        for (i, (si, vi)) in corpus.iter().zip(vectors).enumerate() {
            let mut sims = Vec::with_capacity(n - 1);
            for (j, (sj, vj)) in corpus.iter().zip(vectors).enumerate() {
                if i != j {
                    sims.push(cos(&si.id, &vi[si.correct], &vj[sj.correct])?);
                }
            }
            sims.sort_by(|a, b| b.total_cmp(a));
            ranked.push(sims[k - 1]);
        }
        order_free_mean(ranked)
    } else {
        None
    };
    Ok(DsReport {
        sim_cd: order_free_mean(cd).unwrap_or(0.0),
        sim_dd: order_free_mean(dd),
        inter_rank_sim: inter,
        k,
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        // The 8-decimal literal is 1.2e-9 away from 1/sqrt(2).
        assert!((c - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        #[allow(clippy::approx_constant)]
        let printed = 0.70710678;
        assert!((c - printed).abs() < 2e-9);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(CosineError::ZeroNorm));
    }

    #[test]
    fn hashing_embedder_is_deterministic_and_unit() {
        let e = HashingEmbedder::default();
        let a = e.embed_one("the cat sat on the mat");
        assert_eq!(a, e.embed_one("the cat sat on the mat"));
        assert!((norm(&a) - 1.0).abs() < 1e-9);
        assert!((norm(&e.embed_one("")) - 1.0).abs() < 1e-9);
        assert_eq!(e.dim(), 64);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_scale_invariant_bounded(
            u in prop::collection::vec(-10.0f64..10.0, 4),
            v in prop::collection::vec(-10.0f64..10.0, 4),
            alpha in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&u) > 1e-6 && norm(&v) > 1e-6);
            let c = cosine_similarity(&u, &v).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert!((c - cosine_similarity(&v, &u).unwrap()).abs() < 1e-12);
            let su: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            prop_assert!((c - cosine_similarity(&su, &v).unwrap()).abs() < 1e-9);
        }
    }
}
