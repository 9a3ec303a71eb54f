//! Scoring candidate relations against a question and its path so far.
//!
//! Two backends are provided: [`EmbeddingScorer`] asks an `/embed` endpoint
//! for sentence vectors and ranks by cosine similarity, and
//! [`LexicalScorer`] uses token-set Jaccard overlap with no I/O at all.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, OnceLock, RwLock};

use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::http::{HttpClient, HttpSettings};
use crate::preprocess::jaccard;

pub use crate::kgdata::END;

/// Separates the question from the labels of relations already taken.
pub const SEP: &str = "[SEP]";

/// `question [SEP] label1 label2 ...`
pub fn build_query<S: AsRef<str>>(question: &str, prior_labels: &[S]) -> String {
    let mut query = format!("{question} {SEP}");
    for label in prior_labels {
        query.push(' ');
        query.push_str(label.as_ref());
    }
    query
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Embedding,
    Lexical,
    /// Test backends with planted answers.
    Oracle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRequest {
    query: String,
    candidates: Vec<String>,
}

impl ScoreRequest {
    pub fn new(query: impl Into<String>, candidates: Vec<String>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidInput("no candidates to score".to_owned()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = candidates.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate candidate {dup:?}")));
        }
        Ok(ScoreRequest {
            query: query.into(),
            candidates,
        })
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCandidates {
    pub scores: Vec<f64>,
    pub provenance: Provenance,
}

pub trait Scorer: Send + Sync {
    fn provenance(&self) -> Provenance;

    /// Raw similarity of each candidate to the query, aligned with `candidates`.
    fn score_texts(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>>;

    fn score(&self, request: &ScoreRequest) -> Result<ScoredCandidates> {
        let scores = self.score_texts(&request.query, &request.candidates)?;
        if scores.len() != request.candidates.len() {
            return Err(Error::Protocol(format!(
                "{} scores for {} candidates",
                scores.len(),
                request.candidates.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Protocol("non-finite score".to_owned()));
        }
        Ok(ScoredCandidates {
            scores,
            provenance: self.provenance(),
        })
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn provenance(&self) -> Provenance {
        (**self).provenance()
    }
    fn score_texts(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>> {
        (**self).score_texts(query, candidates)
    }
}

/// `log softmax(scores / temperature)`, computed stably.
///
/// `temperature` must be positive.
pub fn softmax_log_probs(scores: &[f64], temperature: f64) -> Vec<f64> {
    debug_assert!(temperature > 0.0, "temperature must be positive");
    if scores.is_empty() {
        return Vec::new();
    }
    let scaled: Vec<f64> = scores.iter().map(|s| s / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scaled.iter().map(|z| (z - max).exp()).sum();
    let log_norm = max + sum.ln();
    scaled.iter().map(|z| z - log_norm).collect()
}

fn tokens(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Jaccard overlap of lowercased alphanumeric token sets.
#[derive(Clone, Copy, Debug, Default)]
pub struct LexicalScorer;

impl Scorer for LexicalScorer {
    fn provenance(&self) -> Provenance {
        Provenance::Lexical
    }

    fn score_texts(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>> {
        let q = tokens(query);
        Ok(candidates.iter().map(|c| jaccard(&q, &tokens(c))).collect())
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

/// Client of an `/embed` endpoint: `{"texts": [...]}` in, `{"vectors": [...], "dim": d}` out.
///
/// Vectors are cached per text and L2-normalized on arrival.
pub struct EmbeddingScorer {
    url: String,
    http: HttpClient,
    batch_size: usize,
    dim: OnceLock<usize>,
    cache: RwLock<HashMap<String, Arc<Vec<f64>>>>,
}

impl EmbeddingScorer {
    pub const DEFAULT_BATCH_SIZE: usize = 128;

    pub fn new(endpoint: &str, settings: HttpSettings) -> Result<Self> {
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(Error::Config(format!(
                "embedding endpoint must be an http(s) URL, got {endpoint:?}"
            )));
        }
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/embed") {
            base.to_owned()
        } else {
            format!("{base}/embed")
        };
        Ok(EmbeddingScorer {
            url,
            http: HttpClient::new(settings),
            batch_size: Self::DEFAULT_BATCH_SIZE,
            dim: OnceLock::new(),
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn request(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = self.http.post_json(&self.url, &json!({ "texts": texts }), &[])?;
        let resp: EmbedResponse = serde_json::from_str(&body)
            .map_err(|e| Error::Protocol(format!("bad embedding response: {e}")))?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                resp.vectors.len()
            )));
        }
        let dim = *self.dim.get_or_init(|| resp.dim);
        if resp.dim != dim || resp.vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Protocol(format!(
                "embedding dimension mismatch (expected {dim})"
            )));
        }
        resp.vectors
            .into_iter()
            .map(|mut v| {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if !(norm.is_finite() && norm > 0.0) {
                    return Err(Error::Protocol("cannot normalize embedding".to_owned()));
                }
                v.iter_mut().for_each(|x| *x /= norm);
                Ok(v)
            })
            .collect()
    }

    /// Unit vectors for `texts`, in order; only uncached texts hit the endpoint.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Arc<Vec<f64>>>> {
        if texts.is_empty() {
            return Err(Error::InvalidInput("nothing to embed".to_owned()));
        }
        let missing: Vec<String> = {
            let cache = self.cache.read().unwrap();
            let mut seen = HashSet::new();
            texts
                .iter()
                .filter(|t| !cache.contains_key(*t) && seen.insert(t.as_str()))
                .cloned()
                .collect()
        };
        for batch in missing.chunks(self.batch_size) {
            let vectors = self.request(batch)?;
            let mut cache = self.cache.write().unwrap();
            for (text, v) in batch.iter().zip(vectors) {
                cache.insert(text.clone(), Arc::new(v));
            }
        }
        let cache = self.cache.read().unwrap();
        Ok(texts.iter().map(|t| cache[t].clone()).collect())
    }
}

impl Scorer for EmbeddingScorer {
    fn provenance(&self) -> Provenance {
        Provenance::Embedding
    }

    fn score_texts(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>> {
        let mut texts = Vec::with_capacity(candidates.len() + 1);
        texts.push(query.to_owned());
        texts.extend_from_slice(candidates);
        let vectors = self.embed(&texts)?;
        let q = &vectors[0];
        Ok(vectors[1..]
            .iter()
            .map(|c| {
                q.iter()
                    .zip(c.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    .clamp(-1.0, 1.0)
            })
            .collect())
    }
}
