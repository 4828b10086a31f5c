//! Planted-topic corpora for checking that models recover known structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusRole, MonthKey};
use crate::error::Result;
use crate::preprocess::TokenizedCorpus;

/// Shape of a generated corpus.
///
/// Each document belongs to one planted topic. Every token is drawn from
/// that topic's private vocabulary, except that with probability `noise`
/// it comes from a shared background vocabulary instead.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTopics {
    pub topics: usize,
    pub words_per_topic: usize,
    pub background_words: usize,
    pub docs: usize,
    pub doc_len: usize,
    pub noise: f64,
    /// Documents are spread round-robin over this many consecutive months
    /// starting at January 2020.
    pub months: usize,
}

impl Default for PlantedTopics {
    fn default() -> Self {
        PlantedTopics {
            topics: 4,
            words_per_topic: 10,
            background_words: 60,
            docs: 200,
            doc_len: 30,
            noise: 0.2,
            months: 1,
        }
    }
}

impl PlantedTopics {
    pub fn word(topic: usize, i: usize) -> String {
        format!("t{topic}w{i}")
    }

    pub fn background(i: usize) -> String {
        format!("bg{i}")
    }

    /// Generates the corpus and the planted topic of each document.
    pub fn generate(&self, seed: u64) -> Result<(TokenizedCorpus, Vec<usize>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = MonthKey::new(2020, 1)?;
        let months: Vec<MonthKey> = std::iter::successors(Some(start), |m| Some(m.succ()))
            .take(self.months.max(1))
            .collect();
        let mut docs = Vec::with_capacity(self.docs);
        let mut labels = Vec::with_capacity(self.docs);
        for d in 0..self.docs {
            let topic = d % self.topics;
            let tokens = (0..self.doc_len)
                .map(|_| {
                    if self.background_words > 0 && rng.random::<f64>() < self.noise {
                        Self::background(rng.random_range(0..self.background_words))
                    } else {
                        Self::word(topic, rng.random_range(0..self.words_per_topic))
                    }
                })
                .collect();
            docs.push((format!("doc{d:05}"), months[d % months.len()], tokens));
            labels.push(topic);
        }
        Ok((TokenizedCorpus::from_tokens(docs, CorpusRole::User)?, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let p = PlantedTopics {
            docs: 12,
            months: 3,
            ..Default::default()
        };
        let (a, labels) = p.generate(1).unwrap();
        let (b, _) = p.generate(1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_docs(), 12);
        assert_eq!(labels[..5], [0, 1, 2, 3, 0]);
        let distinct: std::collections::BTreeSet<_> = a.months.iter().collect();
        assert_eq!(distinct.len(), 3);
    }
}
