//! Quantitative topic-quality metrics: coherence, coverage, diversity.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::TokenizedCorpus;
use crate::topics::TopicModelResult;

/// Pairwise similarity used inside coherence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoherenceMeasure {
    Npmi,
    Umass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceOptions {
    pub measure: CoherenceMeasure,
    /// Average pair scores within a topic (true) or sum them (false).
    pub normalized: bool,
    pub epsilon: f64,
}

impl Default for CoherenceOptions {
    fn default() -> Self {
        CoherenceOptions {
            measure: CoherenceMeasure::Npmi,
            normalized: true,
            epsilon: 1e-12,
        }
    }
}

/// Document-level occurrence counts for a set of terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceStats {
    pub n_docs: usize,
    df: HashMap<usize, usize>,
    joint: HashMap<(usize, usize), usize>,
}

impl CooccurrenceStats {
    /// Counts document frequency of each term in `terms` and joint document
    /// frequency of every pair of them.
    pub fn for_terms(tc: &TokenizedCorpus, terms: &BTreeSet<usize>) -> Self {
        let mut df: HashMap<usize, usize> = terms.iter().map(|&t| (t, 0)).collect();
        let mut joint = HashMap::new();
        for doc in &tc.docs {
            let present: Vec<usize> = doc
                .iter()
                .copied()
                .filter(|t| terms.contains(t))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            for (i, &a) in present.iter().enumerate() {
                *df.get_mut(&a).expect("tracked term") += 1;
                for &b in &present[i + 1..] {
                    *joint.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
        CooccurrenceStats {
            n_docs: tc.n_docs(),
            df,
            joint,
        }
    }

    pub fn df(&self, t: usize) -> usize {
        self.df.get(&t).copied().unwrap_or(0)
    }

    pub fn joint(&self, a: usize, b: usize) -> usize {
        if a == b {
            return self.df(a);
        }
        let key = if a < b { (a, b) } else { (b, a) };
        self.joint.get(&key).copied().unwrap_or(0)
    }
}

/// NPMI of two terms over document co-occurrence, clamped to [-1, 1].
///
/// A pair that appears together in every document scores 1. A pair where
/// either term never occurs scores -1.
pub fn npmi(df_a: usize, df_b: usize, joint: usize, n_docs: usize, epsilon: f64) -> f64 {
    if df_a == 0 || df_b == 0 {
        return -1.0;
    }
    if joint == n_docs {
        return 1.0;
    }
    let n = n_docs as f64;
    let (pa, pb, pab) = (df_a as f64 / n, df_b as f64 / n, joint as f64 / n);
    let score = ((pab + epsilon) / (pa * pb)).ln() / -(pab + epsilon).ln();
    score.clamp(-1.0, 1.0)
}

/// UMass score of `later` given the higher-ranked `earlier` keyword.
pub fn umass(df_earlier: usize, joint: usize) -> f64 {
    ((joint as f64 + 1.0) / df_earlier.max(1) as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub score: f64,
    pub per_topic: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn coherence_report(
    result: &TopicModelResult,
    tc: &TokenizedCorpus,
    opts: &CoherenceOptions,
) -> Result<CoherenceReport> {
    if tc.n_docs() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if result.keywords.is_empty() {
        return Err(Error::InvalidArgument("result has no keywords".into()));
    }
    let index = tc.term_index();
    let mut warnings = Vec::new();
    let mut resolved: Vec<Vec<Option<usize>>> = Vec::new();
    for (t, kws) in result.keywords.iter().enumerate() {
        resolved.push(
            kws.iter()
                .map(|w| {
                    let id = index.get(w.as_str()).copied();
                    if id.is_none() {
                        warnings.push(format!("topic {t}: keyword {w:?} not in vocabulary"));
                    }
                    id
                })
                .collect(),
        );
    }
    let terms: BTreeSet<usize> = resolved.iter().flatten().flatten().copied().collect();
    let stats = CooccurrenceStats::for_terms(tc, &terms);
    let df = |id: Option<usize>| id.map_or(0, |t| stats.df(t));
    let joint = |a: Option<usize>, b: Option<usize>| match (a, b) {
        (Some(a), Some(b)) => stats.joint(a, b),
        _ => 0,
    };

    let per_topic: Vec<f64> = resolved
        .iter()
        .map(|ids| {
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for i in 0..ids.len() {
                for j in i + 1..ids.len() {
                    let (a, b) = (ids[i], ids[j]);
                    sum += match opts.measure {
                        CoherenceMeasure::Npmi => {
                            npmi(df(a), df(b), joint(a, b), stats.n_docs, opts.epsilon)
                        }
                        CoherenceMeasure::Umass => umass(df(a), joint(a, b)),
                    };
                    pairs += 1;
                }
            }
            if opts.normalized && pairs > 0 {
                sum / pairs as f64
            } else {
                sum
            }
        })
        .collect();
    let score = per_topic.iter().sum::<f64>() / per_topic.len() as f64;
    Ok(CoherenceReport {
        score,
        per_topic,
        warnings,
    })
}

pub fn coherence(
    result: &TopicModelResult,
    tc: &TokenizedCorpus,
    measure: CoherenceMeasure,
) -> Result<f64> {
    let opts = CoherenceOptions {
        measure,
        ..Default::default()
    };
    coherence_report(result, tc, &opts).map(|r| r.score)
}

/// Fraction of documents whose largest topic weight is at least `tau`.
pub fn coverage(result: &TopicModelResult, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside (0, 1]")));
    }
    let n = result.theta.rows;
    if n == 0 {
        return Ok(0.0);
    }
    let covered = (0..n)
        .filter(|&d| result.theta.row(d).iter().copied().fold(0.0, f64::max) >= tau)
        .count();
    Ok(covered as f64 / n as f64)
}

/// Mean over topics of the share of keywords that no other topic lists.
pub fn diversity(result: &TopicModelResult) -> f64 {
    diversity_of(&result.keywords)
}

pub fn diversity_of(keywords: &[Vec<String>]) -> f64 {
    if keywords.is_empty() {
        return 0.0;
    }
    let mut owners: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (t, kws) in keywords.iter().enumerate() {
        for w in kws {
            owners.entry(w).or_default().insert(t);
        }
    }
    let total: f64 = keywords
        .iter()
        .map(|kws| {
            if kws.is_empty() {
                return 0.0;
            }
            let unique = kws.iter().filter(|w| owners[w.as_str()].len() == 1).count();
            unique as f64 / kws.len() as f64
        })
        .sum();
    total / keywords.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    #[serde(rename = "T")]
    pub topics: usize,
    #[serde(rename = "K")]
    pub keywords: usize,
    pub coherence: f64,
    pub coverage: f64,
    pub diversity: f64,
    pub warnings: Vec<String>,
}

/// All three metrics. `tau` defaults to `1 / T`.
pub fn evaluate(
    result: &TopicModelResult,
    tc: &TokenizedCorpus,
    opts: &CoherenceOptions,
    tau: Option<f64>,
) -> Result<MetricsReport> {
    let coh = coherence_report(result, tc, opts)?;
    let tau = tau.unwrap_or(1.0 / result.n_topics() as f64);
    Ok(MetricsReport {
        model: result.model.clone(),
        topics: result.n_topics(),
        keywords: result.spec.keywords,
        coherence: coh.score,
        coverage: coverage(result, tau)?,
        diversity: diversity(result),
        warnings: coh.warnings,
    })
}
