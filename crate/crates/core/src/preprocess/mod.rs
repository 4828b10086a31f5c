//! Text cleaning: language filter, lowercasing, tokenization, stopword
//! removal, length filter and Porter stemming, in that order.

mod language;
mod porter;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusRole, Document, MonthKey};
use crate::error::{Error, Result};
use crate::util::sha256_hex;

pub use language::{detect_language, Detection, LanguageDetector, TrigramDetector};
pub use porter::stem_porter;

const BUNDLED_STANDARD: &str = include_str!("../../data/stopwords_en.txt");
const BUNDLED_DOMAIN: &str = include_str!("../../data/stopwords_vr.txt");

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopwordConfig {
    pub standard_list: BTreeSet<String>,
    pub domain_list: BTreeSet<String>,
}

/// Parses a stopword list: one token per line, `#` starts a comment.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

impl StopwordConfig {
    /// The bundled English list plus the bundled VR domain list.
    pub fn bundled() -> Self {
        StopwordConfig {
            standard_list: parse_stopwords(BUNDLED_STANDARD),
            domain_list: parse_stopwords(BUNDLED_DOMAIN),
        }
    }

    pub fn standard_only() -> Self {
        StopwordConfig {
            standard_list: parse_stopwords(BUNDLED_STANDARD),
            domain_list: BTreeSet::new(),
        }
    }

    pub fn from_files(standard: &Path, domain: Option<&Path>) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        Ok(StopwordConfig {
            standard_list: parse_stopwords(&read(standard)?),
            domain_list: match domain {
                Some(p) => parse_stopwords(&read(p)?),
                None => BTreeSet::new(),
            },
        })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.standard_list.contains(token) || self.domain_list.contains(token)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub stopwords: StopwordConfig,
    pub min_token_len: usize,
    pub keep_only_english: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            stopwords: StopwordConfig::bundled(),
            min_token_len: 2,
            keep_only_english: true,
        }
    }
}

/// Per-stage drop counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub ingested: usize,
    pub non_english: usize,
    pub empty_after_clean: usize,
    pub retained: usize,
    #[serde(default)]
    pub stopword_tokens: usize,
    #[serde(default)]
    pub short_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedCorpus {
    pub vocabulary: Vec<String>,
    pub docs: Vec<Vec<usize>>,
    pub doc_ids: Vec<String>,
    pub months: Vec<MonthKey>,
    pub role: CorpusRole,
}

impl TokenizedCorpus {
    /// Builds a corpus from pre-tokenized documents; the vocabulary is the
    /// sorted set of all tokens.
    pub fn from_tokens(
        docs: Vec<(String, MonthKey, Vec<String>)>,
        role: CorpusRole,
    ) -> Result<Self> {
        let vocab: BTreeSet<&str> = docs
            .iter()
            .flat_map(|(_, _, toks)| toks.iter().map(String::as_str))
            .collect();
        let vocabulary: Vec<String> = vocab.into_iter().map(str::to_owned).collect();
        let index: BTreeMap<&str, usize> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut months = Vec::with_capacity(docs.len());
        let mut ids = Vec::with_capacity(docs.len());
        for (id, month, toks) in &docs {
            doc_ids.push(id.clone());
            months.push(*month);
            ids.push(toks.iter().map(|t| index[t.as_str()]).collect());
        }
        let tc = TokenizedCorpus {
            vocabulary,
            docs: ids,
            doc_ids,
            months,
            role,
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.docs.len();
        if self.doc_ids.len() != n || self.months.len() != n {
            return Err(Error::InvalidArgument(
                "docs, doc_ids and months must have equal length".into(),
            ));
        }
        let v = self.vocabulary.len();
        if self.docs.iter().flatten().any(|&t| t >= v) {
            return Err(Error::InvalidArgument("term index out of range".into()));
        }
        let uniq: BTreeSet<&String> = self.vocabulary.iter().collect();
        if uniq.len() != v {
            return Err(Error::InvalidArgument("duplicate vocabulary entry".into()));
        }
        Ok(())
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    pub fn term_index(&self) -> BTreeMap<&str, usize> {
        self.vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect()
    }

    /// Hash of the vocabulary, used to tie model results to the corpus they
    /// were fit on.
    pub fn vocab_hash(&self) -> String {
        sha256_hex(self.vocabulary.join("\n").as_bytes())
    }
}

/// Lowercases and splits into maximal runs of Unicode letters and digits.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

struct DocOutcome {
    english: bool,
    tokens: Vec<String>,
    stopword_tokens: usize,
    short_tokens: usize,
}

fn is_english(tag: &str) -> bool {
    tag == "en" || tag.starts_with("en-")
}

fn clean_document(
    doc: &Document,
    opts: &PreprocessOptions,
    detector: &dyn LanguageDetector,
) -> DocOutcome {
    if opts.keep_only_english {
        let english = match &doc.language {
            Some(tag) => is_english(&tag.to_lowercase()),
            None => is_english(&detector.detect(&doc.text).tag),
        };
        if !english {
            return DocOutcome {
                english: false,
                tokens: Vec::new(),
                stopword_tokens: 0,
                short_tokens: 0,
            };
        }
    }
    let mut stopword_tokens = 0;
    let mut short_tokens = 0;
    let mut tokens = Vec::new();
    for tok in tokenize(&doc.text) {
        if opts.stopwords.contains(&tok) {
            stopword_tokens += 1;
        } else if tok.chars().count() < opts.min_token_len {
            short_tokens += 1;
        } else {
            tokens.push(stem_porter(&tok));
        }
    }
    DocOutcome {
        english: true,
        tokens,
        stopword_tokens,
        short_tokens,
    }
}

/// Runs the cleaning pipeline with the bundled trigram language detector.
pub fn preprocess_corpus(
    corpus: &Corpus,
    opts: &PreprocessOptions,
) -> (TokenizedCorpus, FilterReport) {
    preprocess_with(corpus, opts, &TrigramDetector::new())
}

pub fn preprocess_with(
    corpus: &Corpus,
    opts: &PreprocessOptions,
    detector: &dyn LanguageDetector,
) -> (TokenizedCorpus, FilterReport) {
    #[cfg(feature = "parallel")]
    let outcomes: Vec<DocOutcome> = {
        use rayon::prelude::*;
        corpus
            .documents
            .par_iter()
            .map(|d| clean_document(d, opts, detector))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<DocOutcome> = corpus
        .documents
        .iter()
        .map(|d| clean_document(d, opts, detector))
        .collect();

    let mut report = FilterReport {
        ingested: corpus.len(),
        ..FilterReport::default()
    };
    let mut kept = Vec::new();
    for (doc, out) in corpus.documents.iter().zip(outcomes) {
        report.stopword_tokens += out.stopword_tokens;
        report.short_tokens += out.short_tokens;
        if !out.english {
            report.non_english += 1;
        } else if out.tokens.is_empty() {
            report.empty_after_clean += 1;
        } else {
            kept.push((doc.id.clone(), doc.month(), out.tokens));
        }
    }
    report.retained = kept.len();
    let tc = TokenizedCorpus::from_tokens(kept, corpus.role)
        .expect("indices are built from the vocabulary itself");
    (tc, report)
}
