//! Topic models behind one result type: collapsed-Gibbs LDA,
//! multiplicative-update NMF and truncated-SVD LSA.
//!
//! Every model produces a [`TopicModelResult`] with a topic-word matrix
//! `phi` (T x V), a document-topic matrix `theta` (D x T, rows are
//! probability vectors), and the top-K keywords of each topic. Results from
//! models that are not implemented here (embedding-cluster models, for
//! instance) can be loaded from JSON and go through the same validation.

mod lda;
pub mod linalg;
mod lsa;
mod matrix;
mod nmf;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lda::{fit_lda, LdaCounts};
pub use lsa::fit_lsa;
pub use matrix::{build_matrix, DenseMatrix, DocTermMatrix, SparseRows};
pub use nmf::{factorize, fit_nmf, Factorization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Lda,
    Nmf,
    Lsa,
    /// Topics computed outside this crate and loaded from a result file.
    External,
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Lda => "lda",
            ModelFamily::Nmf => "nmf",
            ModelFamily::Lsa => "lsa",
            ModelFamily::External => "external",
        })
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lda" => Ok(ModelFamily::Lda),
            "nmf" => Ok(ModelFamily::Nmf),
            "lsa" => Ok(ModelFamily::Lsa),
            "external" => Ok(ModelFamily::External),
            other => Err(Error::InvalidSpec(format!("unknown model family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelSpec {
    pub family: ModelFamily,
    /// Number of topics.
    pub topics: usize,
    /// Keywords reported per topic.
    pub keywords: usize,
    pub seed: u64,
    /// Dirichlet document-topic prior; `None` means `50 / topics`.
    #[serde(default)]
    pub lda_alpha: Option<f64>,
    pub lda_beta: f64,
    pub iterations: usize,
    pub tolerance: f64,
}

impl TopicModelSpec {
    pub fn new(family: ModelFamily, topics: usize, keywords: usize) -> Self {
        TopicModelSpec {
            family,
            topics,
            keywords,
            seed: 42,
            lda_alpha: None,
            lda_beta: 0.01,
            iterations: 1000,
            tolerance: 1e-4,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.lda_alpha.unwrap_or(50.0 / self.topics as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let min_topics = if self.family == ModelFamily::Lda { 2 } else { 1 };
        if self.topics < min_topics {
            return Err(Error::InvalidSpec(format!(
                "{} needs at least {min_topics} topics",
                self.family
            )));
        }
        if self.keywords == 0 {
            return Err(Error::InvalidSpec("keywords per topic must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidSpec("iterations must be >= 1".into()));
        }
        if !(self.alpha() > 0.0 && self.lda_beta > 0.0) {
            return Err(Error::InvalidSpec("Dirichlet priors must be positive".into()));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::InvalidSpec("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelResult {
    pub spec: TopicModelSpec,
    /// Display name, e.g. `lda` or `bertopic`.
    pub model: String,
    pub vocab_hash: String,
    /// Topic-word weights, T x V, non-negative.
    pub phi: DenseMatrix,
    /// Document-topic distribution, D x T, rows sum to one.
    pub theta: DenseMatrix,
    pub keywords: Vec<Vec<String>>,
    pub objective_trace: Vec<f64>,
    /// LSA only: singular values of the retained components.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_values: Option<Vec<f64>>,
    /// LSA only: signed right singular vectors, T x V.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<DenseMatrix>,
}

impl TopicModelResult {
    pub fn n_topics(&self) -> usize {
        self.phi.rows
    }

    pub fn n_docs(&self) -> usize {
        self.theta.rows
    }

    /// `phi` with each row scaled to sum to one.
    pub fn phi_normalized(&self) -> DenseMatrix {
        self.phi.row_normalized()
    }

    pub fn dominant_topic(&self, doc: usize) -> usize {
        dominant_topic(self.theta.row(doc))
    }

    pub fn dominant_topics(&self) -> Vec<usize> {
        (0..self.n_docs()).map(|d| self.dominant_topic(d)).collect()
    }

    /// Checks shapes, theta normalization and keyword list sizes.
    pub fn validate(&self) -> Result<()> {
        let t = self.phi.rows;
        if self.theta.cols != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: self.theta.cols,
            });
        }
        if self.keywords.len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: self.keywords.len(),
            });
        }
        if self.phi.data.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidArgument("phi must be finite and non-negative".into()));
        }
        for d in 0..self.theta.rows {
            let row = self.theta.row(d);
            let s: f64 = row.iter().sum();
            if row.iter().any(|&x| x < 0.0 || !x.is_finite()) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "theta row {d} is not a probability vector"
                )));
            }
        }
        for (i, kw) in self.keywords.iter().enumerate() {
            let uniq: std::collections::BTreeSet<&String> = kw.iter().collect();
            if kw.is_empty() || uniq.len() != kw.len() {
                return Err(Error::InvalidArgument(format!(
                    "topic {i} keyword list is empty or repeats a term"
                )));
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads and validates a result file, e.g. one produced by an external
    /// embedding-cluster model.
    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let result: TopicModelResult = serde_json::from_slice(&bytes)?;
        result.validate()?;
        Ok(result)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn dominant_topic(theta_row: &[f64]) -> usize {
    let mut best = 0;
    for (t, &x) in theta_row.iter().enumerate() {
        if x > theta_row[best] {
            best = t;
        }
    }
    best
}

/// The `k` column indices with the largest weights, ties broken by lower
/// index.
pub fn top_k_indices(weights: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn keywords_from_phi(phi: &DenseMatrix, vocabulary: &[String], k: usize) -> Vec<Vec<String>> {
    (0..phi.rows)
        .map(|t| {
            top_k_indices(phi.row(t), k)
                .into_iter()
                .map(|v| vocabulary[v].clone())
                .collect()
        })
        .collect()
}

/// Fits the model named by `spec.family`.
pub fn fit(m: &DocTermMatrix, spec: &TopicModelSpec) -> Result<TopicModelResult> {
    match spec.family {
        ModelFamily::Lda => fit_lda(m, spec),
        ModelFamily::Nmf => fit_nmf(m, spec),
        ModelFamily::Lsa => fit_lsa(m, spec),
        ModelFamily::External => Err(Error::InvalidSpec(
            "external models are loaded from result files, not fit".into(),
        )),
    }
}

pub(crate) fn check_common(m: &DocTermMatrix, spec: &TopicModelSpec, family: ModelFamily) -> Result<()> {
    if spec.family != family {
        return Err(Error::InvalidSpec(format!(
            "spec family is {}, expected {family}",
            spec.family
        )));
    }
    spec.validate()?;
    if m.n_docs == 0 || m.total_count() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if spec.keywords > m.n_terms {
        return Err(Error::InvalidSpec(format!(
            "{} keywords requested but vocabulary has {} terms",
            spec.keywords, m.n_terms
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominant_topic_argmax() {
        assert_eq!(dominant_topic(&[0.1, 0.7, 0.2]), 1);
    }

    #[test]
    fn dominant_topic_ties_go_low() {
        assert_eq!(dominant_topic(&[0.5, 0.5]), 0);
        assert_eq!(dominant_topic(&[0.25; 4]), 0);
        assert_eq!(dominant_topic(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn top_k_breaks_ties_by_index() {
        assert_eq!(top_k_indices(&[0.1, 0.3, 0.3, 0.0, 0.3], 3), vec![1, 2, 4]);
        assert_eq!(top_k_indices(&[0.0, 0.0, 0.0], 2), vec![0, 1]);
    }

    #[test]
    fn spec_validation() {
        assert!(TopicModelSpec::new(ModelFamily::Lda, 1, 5).validate().is_err());
        assert!(TopicModelSpec::new(ModelFamily::Nmf, 1, 5).validate().is_ok());
        assert!(TopicModelSpec::new(ModelFamily::Lda, 4, 0).validate().is_err());
        assert!(TopicModelSpec::new(ModelFamily::Lda, 4, 3).with_iterations(0).validate().is_err());
        let mut s = TopicModelSpec::new(ModelFamily::Lda, 4, 3);
        s.lda_beta = 0.0;
        assert!(s.validate().is_err());
        assert_eq!(TopicModelSpec::new(ModelFamily::Lda, 50, 20).alpha(), 1.0);
    }

    #[test]
    fn family_parse() {
        assert_eq!("LDA".parse::<ModelFamily>().unwrap(), ModelFamily::Lda);
        assert!("bertopic".parse::<ModelFamily>().is_err());
    }
}
