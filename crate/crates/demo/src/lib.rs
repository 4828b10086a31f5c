//! WebAssembly bindings behind `www/index.html`.
//!
//! Each exported function takes plain strings and numbers and returns a JSON
//! string, so the page needs no generated TypeScript glue beyond the loader.

use std::collections::BTreeMap;

use htmodel::evaluation::{alpha_grid, sweep_alpha, ModelMetrics};
use htmodel::labeling::TopicLabel;
use htmodel::merging::{embed_labels, merge, StubEmbedder};
use htmodel::preprocess::{detect_language, stem_porter, tokenize, StopwordConfig};
use htmodel::provider::{ResponseCache, RetryPolicy};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct TokenView {
    pub token: String,
    /// `None` when the token was dropped.
    pub stem: Option<String>,
    pub dropped: Option<&'static str>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CleanView {
    pub language: String,
    pub confidence: f64,
    pub english: bool,
    pub tokens: Vec<TokenView>,
}

/// Language check, tokenization, stopword and length filter, stemming.
pub fn clean(text: &str, min_token_len: usize) -> Result<CleanView, String> {
    let det = detect_language(text).map_err(|e| e.to_string())?;
    let stopwords = StopwordConfig::bundled();
    let tokens = tokenize(text)
        .into_iter()
        .map(|token| {
            let dropped = if stopwords.contains(&token) {
                Some("stopword")
            } else if token.chars().count() < min_token_len {
                Some("short")
            } else {
                None
            };
            TokenView {
                stem: dropped.is_none().then(|| stem_porter(&token)),
                token,
                dropped,
            }
        })
        .collect();
    Ok(CleanView {
        english: det.tag == "en" || det.tag.starts_with("en-"),
        language: det.tag,
        confidence: det.confidence,
        tokens,
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ClusterView {
    pub label: String,
    pub doc_count: usize,
    pub members: Vec<String>,
}

/// One label per line, optionally followed by `, <document count>`.
fn parse_label_lines(text: &str) -> Vec<(String, usize)> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|line| match line.rsplit_once(',') {
            Some((label, n)) if n.trim().parse::<usize>().is_ok() => {
                (label.trim().to_string(), n.trim().parse().unwrap_or(0))
            }
            _ => (line.to_string(), 1),
        })
        .collect()
}

/// Merges labels whose stub embeddings are at least `threshold` similar.
pub fn merge_lines(text: &str, threshold: f64, seed: u64) -> Result<Vec<ClusterView>, String> {
    let parsed = parse_label_lines(text);
    if parsed.is_empty() {
        return Err("enter at least one label".into());
    }
    let labels: Vec<TopicLabel> = parsed
        .iter()
        .enumerate()
        .map(|(i, (label, _))| TopicLabel {
            topic_id: i,
            label: label.clone(),
            provider_id: "demo".into(),
            prompt_hash: String::new(),
            raw_response: String::new(),
        })
        .collect();
    let counts: BTreeMap<usize, usize> = parsed.iter().enumerate().map(|(i, (_, n))| (i, *n)).collect();
    let embedder = StubEmbedder { dimension: 64, seed };
    let embs = embed_labels(&embedder, &labels, &ResponseCache::in_memory(), &RetryPolicy::no_delay(1))
        .map_err(|e| e.to_string())?;
    let set = merge(&labels, &embs, &counts, threshold).map_err(|e| e.to_string())?;
    Ok(set
        .clusters
        .into_iter()
        .map(|c| ClusterView {
            label: c.label,
            doc_count: c.doc_count,
            members: c.members.iter().map(|&m| parsed[m].0.clone()).collect(),
        })
        .collect())
}

/// Alpha sweep over 0.1..=1.0 for a JSON array of model metrics.
pub fn sweep(models_json: &str) -> Result<htmodel::evaluation::AlphaSweep, String> {
    let models: Vec<ModelMetrics> = serde_json::from_str(models_json).map_err(|e| e.to_string())?;
    sweep_alpha(&models, &alpha_grid()).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = cleanText)]
pub fn clean_text(text: &str, min_token_len: usize) -> Result<String, JsError> {
    to_json(clean(text, min_token_len))
}

#[wasm_bindgen(js_name = mergeLabels)]
pub fn merge_labels(text: &str, threshold: f64, seed: u32) -> Result<String, JsError> {
    to_json(merge_lines(text, threshold, seed.into()))
}

#[wasm_bindgen(js_name = alphaSweep)]
pub fn alpha_sweep(models_json: &str) -> Result<String, JsError> {
    to_json(sweep(models_json))
}
