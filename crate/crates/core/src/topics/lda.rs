use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_common, keywords_from_phi, DenseMatrix, DocTermMatrix, ModelFamily, TopicModelResult, TopicModelSpec};
use crate::error::{Error, Result};

/// Sufficient statistics of a collapsed Gibbs state.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaCounts {
    /// n_dt, D x T
    pub doc_topic: Vec<Vec<u32>>,
    /// n_tv, T x V
    pub topic_term: Vec<Vec<u32>>,
    /// n_t
    pub topic_total: Vec<u32>,
    /// N_d
    pub doc_len: Vec<u32>,
}

struct Sampler {
    n_topics: usize,
    n_terms: usize,
    alpha: f64,
    beta: f64,
    // token terms and assignments, flattened per document
    words: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    counts: LdaCounts,
}

impl Sampler {
    fn new(m: &DocTermMatrix, spec: &TopicModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let t = spec.topics;
        let words: Vec<Vec<usize>> = m
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .flat_map(|&(v, c)| std::iter::repeat_n(v, c as usize))
                    .collect()
            })
            .collect();
        let mut counts = LdaCounts {
            doc_topic: vec![vec![0; t]; m.n_docs],
            topic_term: vec![vec![0; m.n_terms]; t],
            topic_total: vec![0; t],
            doc_len: words.iter().map(|w| w.len() as u32).collect(),
        };
        let z = words
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.iter()
                    .map(|&v| {
                        let k = rng.random_range(0..t);
                        counts.doc_topic[d][k] += 1;
                        counts.topic_term[k][v] += 1;
                        counts.topic_total[k] += 1;
                        k
                    })
                    .collect()
            })
            .collect();
        Sampler {
            n_topics: t,
            n_terms: m.n_terms,
            alpha: spec.alpha(),
            beta: spec.lda_beta,
            words,
            z,
            counts,
        }
    }

    fn sweep(&mut self, rng: &mut ChaCha8Rng, probs: &mut [f64]) {
        let vbeta = self.n_terms as f64 * self.beta;
        let c = &mut self.counts;
        for (d, doc) in self.words.iter().enumerate() {
            for (i, &v) in doc.iter().enumerate() {
                let old = self.z[d][i];
                c.doc_topic[d][old] -= 1;
                c.topic_term[old][v] -= 1;
                c.topic_total[old] -= 1;

                let mut total = 0.0;
                for (k, p) in probs.iter_mut().enumerate() {
                    total += (c.doc_topic[d][k] as f64 + self.alpha)
                        * (c.topic_term[k][v] as f64 + self.beta)
                        / (c.topic_total[k] as f64 + vbeta);
                    *p = total;
                }
                let u = rng.random::<f64>() * total;
                let new = probs.iter().position(|&p| u < p).unwrap_or(self.n_topics - 1);

                self.z[d][i] = new;
                c.doc_topic[d][new] += 1;
                c.topic_term[new][v] += 1;
                c.topic_total[new] += 1;
            }
        }
    }

    /// log p(w | z), dropping no terms.
    fn log_likelihood(&self) -> f64 {
        let v = self.n_terms as f64;
        let lg_beta = libm::lgamma(self.beta);
        let mut ll = self.n_topics as f64 * (libm::lgamma(v * self.beta) - v * lg_beta);
        for k in 0..self.n_topics {
            for &n in &self.counts.topic_term[k] {
                ll += if n == 0 { lg_beta } else { libm::lgamma(n as f64 + self.beta) };
            }
            ll -= libm::lgamma(self.counts.topic_total[k] as f64 + v * self.beta);
        }
        ll
    }
}

pub(crate) fn run_sampler(m: &DocTermMatrix, spec: &TopicModelSpec) -> Result<(LdaCounts, Vec<f64>)> {
    check_common(m, spec, ModelFamily::Lda)?;
    let distinct = m.document_frequency().iter().filter(|&&df| df > 0).count();
    if distinct < spec.topics {
        return Err(Error::Degenerate(format!(
            "{distinct} distinct terms cannot support {} topics",
            spec.topics
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sampler = Sampler::new(m, spec, &mut rng);
    let mut probs = vec![0.0; spec.topics];
    let mut trace = Vec::with_capacity(spec.iterations);
    for _ in 0..spec.iterations {
        sampler.sweep(&mut rng, &mut probs);
        trace.push(sampler.log_likelihood());
    }
    Ok((sampler.counts, trace))
}

/// Collapsed Gibbs sampling. theta and phi are point estimates from the
/// final state:
/// `theta[d,t] = (n_dt + alpha) / (N_d + T alpha)`,
/// `phi[t,v] = (n_tv + beta) / (n_t + V beta)`.
pub fn fit_lda(m: &DocTermMatrix, spec: &TopicModelSpec) -> Result<TopicModelResult> {
    let (counts, trace) = run_sampler(m, spec)?;
    let t = spec.topics;
    let v = m.n_terms;
    let (alpha, beta) = (spec.alpha(), spec.lda_beta);

    let mut theta = DenseMatrix::zeros(m.n_docs, t);
    for d in 0..m.n_docs {
        let denom = counts.doc_len[d] as f64 + t as f64 * alpha;
        for k in 0..t {
            theta.set(d, k, (counts.doc_topic[d][k] as f64 + alpha) / denom);
        }
    }
    let mut phi = DenseMatrix::zeros(t, v);
    for k in 0..t {
        let denom = counts.topic_total[k] as f64 + v as f64 * beta;
        for w in 0..v {
            phi.set(k, w, (counts.topic_term[k][w] as f64 + beta) / denom);
        }
    }
    Ok(TopicModelResult {
        keywords: keywords_from_phi(&phi, &m.vocabulary, spec.keywords),
        spec: spec.clone(),
        model: "lda".into(),
        vocab_hash: m.vocab_hash.clone(),
        phi,
        theta,
        objective_trace: trace,
        singular_values: None,
        components: None,
    })
}
