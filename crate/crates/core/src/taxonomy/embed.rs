//! Snippet embeddings.
//!
//! [`LexicalEmbedder`] hashes code tokens into a fixed-size signed
//! term-frequency vector and needs no network. [`RemoteEmbedder`] calls an
//! embeddings endpoint (`POST {base_url}/embeddings`) with the same retry
//! rules as the chat client.

use std::hash::Hasher;
use std::sync::OnceLock;

use fnv::FnvHasher;
use regex::Regex;
use serde::Deserialize;
use serde_json::json;

use super::rules::strip_comments;
use super::SnippetRecord;
use crate::client::{post_with_retries, ClientConfig, ClientError, ReqwestTransport, Transport};

pub const DEFAULT_LEXICAL_DIM: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("malformed embeddings response: {0}")]
    Malformed(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Identifiers plus a `call:<name>` token for every identifier followed by `(`.
pub fn code_tokens(code: &str) -> Vec<String> {
    static IDENT: OnceLock<Regex> = OnceLock::new();
    let ident = IDENT.get_or_init(|| Regex::new(r"[A-Za-z_][A-Za-z0-9_]*").expect("valid regex"));
    let code = strip_comments(code);
    let mut out = Vec::new();
    for m in ident.find_iter(&code) {
        // skip tails of numeric literals like 1e5 or 0x1f
        if code[..m.start()].chars().next_back().is_some_and(|c| c.is_ascii_digit()) {
            continue;
        }
        out.push(m.as_str().to_string());
        if code[m.end()..].trim_start_matches([' ', '\t']).starts_with('(') {
            out.push(format!("call:{}", m.as_str()));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LexicalEmbedder {
    pub dim: usize,
}

impl Default for LexicalEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_LEXICAL_DIM }
    }
}

impl LexicalEmbedder {
    /// Unit-norm vector, or the zero vector and `true` when nothing survives.
    pub fn embed_one(&self, code: &str) -> (Vec<f64>, bool) {
        let mut v = vec![0.0; self.dim];
        for token in code_tokens(code) {
            let mut h = FnvHasher::default();
            h.write(token.as_bytes());
            let h = h.finish();
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (v, true);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        (v, false)
    }
}

pub struct RemoteEmbedder {
    /// `model_id` names the embedding model.
    pub config: ClientConfig,
    pub transport: Box<dyn Transport>,
    pub batch_size: usize,
    /// Concurrent requests in flight.
    pub parallelism: usize,
    /// Requested output dimension; also enforced on the response.
    pub dimensions: Option<usize>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        Self::with_transport(config, Box::new(ReqwestTransport::default()))
    }

    pub fn with_transport(config: ClientConfig, transport: Box<dyn Transport>) -> Result<Self, ClientError> {
        config.validate()?;
        Ok(Self {
            config,
            transport,
            batch_size: 64,
            parallelism: 4,
            dimensions: None,
        })
    }

    pub fn request_body(&self, inputs: &[&str]) -> Vec<u8> {
        let mut body = json!({ "model": self.config.model_id, "input": inputs });
        if let Some(d) = self.dimensions {
            body["dimensions"] = json!(d);
        }
        serde_json::to_vec(&body).expect("json body")
    }

    /// One vector per input, in input order.
    pub fn embed_batch(&self, inputs: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let url = format!("{}/embeddings", self.config.base_url.trim_end_matches('/'));
        let (reply, _) = post_with_retries(self.transport.as_ref(), &self.config, &url, &self.request_body(inputs))?;
        let mut parsed: EmbeddingResponse =
            serde_json::from_str(&reply.body).map_err(|e| EmbedError::Malformed(e.to_string()))?;
        parsed.data.sort_by_key(|d| d.index);
        if parsed.data.len() != inputs.len() || parsed.data.iter().enumerate().any(|(i, d)| d.index != i) {
            return Err(EmbedError::Malformed(format!(
                "expected {} embeddings indexed 0..{}, got {}",
                inputs.len(),
                inputs.len(),
                parsed.data.len()
            )));
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

pub enum Embedder {
    LocalLexical(LexicalEmbedder),
    RemoteApi(RemoteEmbedder),
}

/// Fills `embedding` on every record. All vectors end up with one dimension;
/// blank snippets get a zero vector and are marked `degenerate`.
pub fn embed(records: &mut [SnippetRecord], embedder: &Embedder) -> Result<(), EmbedError> {
    match embedder {
        Embedder::LocalLexical(lex) => {
            for r in records.iter_mut() {
                let (v, degenerate) = lex.embed_one(&r.code);
                r.embedding = Some(v);
                r.degenerate = degenerate;
            }
            Ok(())
        }
        Embedder::RemoteApi(remote) => embed_remote(records, remote),
    }
}

fn embed_remote(records: &mut [SnippetRecord], remote: &RemoteEmbedder) -> Result<(), EmbedError> {
    let live: Vec<usize> = (0..records.len()).filter(|&i| !records[i].code.trim().is_empty()).collect();
    let batches: Vec<&[usize]> = live.chunks(remote.batch_size.max(1)).collect();
    let mut vectors: Vec<Option<Result<Vec<Vec<f64>>, EmbedError>>> = (0..batches.len()).map(|_| None).collect();
    let workers = remote.parallelism.max(1);
    for (wave_idx, wave) in batches.chunks(workers).enumerate() {
        let results: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| {
                    let inputs: Vec<&str> = batch.iter().map(|&i| records[i].code.as_str()).collect();
                    scope.spawn(move || remote.embed_batch(&inputs))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("embedding worker panicked")).collect()
        });
        for (j, res) in results.into_iter().enumerate() {
            vectors[wave_idx * workers + j] = Some(res);
        }
    }

    let mut dim = remote.dimensions;
    for (batch, res) in batches.iter().zip(vectors) {
        let vs = res.expect("every batch ran")?;
        for (&i, v) in batch.iter().zip(vs) {
            let expected = *dim.get_or_insert(v.len());
            if v.len() != expected || expected == 0 {
                return Err(EmbedError::Dimension { expected, got: v.len() });
            }
            records[i].embedding = Some(v);
            records[i].degenerate = false;
        }
    }
    let dim = dim.unwrap_or(0);
    for r in records.iter_mut().filter(|r| r.code.trim().is_empty()) {
        r.embedding = Some(vec![0.0; dim]);
        r.degenerate = true;
    }
    Ok(())
}
