//! Merging of near-duplicate topic labels by embedding cosine similarity.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::TopicLabel;
use crate::provider::{ResponseCache, RetryPolicy};
use crate::util::sha256_hex;

pub const DEFAULT_THRESHOLD: f64 = 0.8;

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity, clamped to [-1, 1] against rounding.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na, nb) = (l2(a), l2(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Scales `v` to unit length.
pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = l2(&v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEmbedding {
    pub topic_id: usize,
    pub vector: Vec<f64>,
    pub provider_id: String,
}

/// Maps texts to vectors. Output need not be normalized.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn model(&self) -> &str;
    /// Expected vector length, if the provider knows it up front.
    fn dimension(&self) -> Option<usize>;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Offline embedder: each lower-cased word is hashed to a seeded random
/// direction and the directions are summed. Labels that share words end up
/// close; identical labels get identical vectors.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    pub dimension: usize,
    pub seed: u64,
}

impl Default for StubEmbedder {
    fn default() -> Self {
        StubEmbedder { dimension: 64, seed: 0 }
    }
}

impl StubEmbedder {
    fn direction(&self, token: &str) -> Vec<f64> {
        let digest = sha256_hex(format!("{}\u{1f}{token}", self.seed).as_bytes());
        let key = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        (0..self.dimension).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
}

impl EmbeddingProvider for StubEmbedder {
    fn id(&self) -> &str {
        "stub"
    }

    fn model(&self) -> &str {
        "hash-projection"
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let lower = text.to_lowercase();
        let mut tokens: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();
        if tokens.is_empty() {
            tokens.push(lower.trim());
        }
        let mut v = vec![0.0; self.dimension];
        for t in tokens {
            v.iter_mut().zip(self.direction(t)).for_each(|(a, b)| *a += b);
        }
        Ok(v)
    }
}

#[cfg(feature = "remote")]
pub use remote::RemoteEmbedder;

#[cfg(feature = "remote")]
mod remote {
    use serde_json::json;

    use super::*;
    use crate::provider::http::JsonEndpoint;
    use crate::provider::ProviderConfig;

    /// OpenAI-style embeddings endpoint: `{"model", "input": [text]}` in,
    /// `data[0].embedding` out.
    pub struct RemoteEmbedder {
        id: String,
        model: String,
        dimension: Option<usize>,
        endpoint: JsonEndpoint,
    }

    impl RemoteEmbedder {
        pub fn new(cfg: &ProviderConfig, dimension: Option<usize>) -> Result<Self> {
            Ok(RemoteEmbedder {
                id: format!("embed:{}", cfg.endpoint_url),
                model: cfg.model.clone(),
                dimension,
                endpoint: JsonEndpoint::new(cfg)?,
            })
        }
    }

    impl EmbeddingProvider for RemoteEmbedder {
        fn id(&self) -> &str {
            &self.id
        }

        fn model(&self) -> &str {
            &self.model
        }

        fn dimension(&self) -> Option<usize> {
            self.dimension
        }

        fn embed(&self, text: &str) -> Result<Vec<f64>> {
            let v = self.endpoint.post(&json!({"model": self.model, "input": [text]}))?;
            let arr = v
                .pointer("/data/0/embedding")
                .and_then(|e| e.as_array())
                .ok_or_else(|| Error::Provider("response has no data[0].embedding".into()))?;
            arr.iter()
                .map(|x| x.as_f64().ok_or_else(|| Error::Provider("non-numeric embedding entry".into())))
                .collect()
        }
    }
}

/// Embeds each label's text, normalizing to unit length.
///
/// Raw vectors are cached as JSON under a hash of text, provider and model.
/// Every vector must have the provider's declared dimension (or, if none
/// is declared, the dimension of the first one).
pub fn embed_labels(
    provider: &dyn EmbeddingProvider,
    labels: &[TopicLabel],
    cache: &ResponseCache,
    retry: &RetryPolicy,
) -> Result<Vec<LabelEmbedding>> {
    let mut expected = provider.dimension();
    let mut out = Vec::with_capacity(labels.len());
    for l in labels {
        let key = sha256_hex(format!("{}\n{}\n{}", l.label, provider.id(), provider.model()).as_bytes());
        let cached = cache.get(&key).and_then(|s| serde_json::from_str::<Vec<f64>>(&s).ok());
        let raw = match cached {
            Some(v) => v,
            None => {
                let v = retry.run(|_| provider.embed(&l.label))?;
                cache.insert(&key, &serde_json::to_string(&v)?)?;
                v
            }
        };
        let want = *expected.get_or_insert(raw.len());
        if raw.len() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                found: raw.len(),
            });
        }
        out.push(LabelEmbedding {
            topic_id: l.topic_id,
            vector: normalize(raw)?,
            provider_id: provider.id().to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedCluster {
    pub id: usize,
    pub members: Vec<usize>,
    pub label: String,
    pub doc_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedTopicSet {
    pub threshold: f64,
    pub clusters: Vec<MergedCluster>,
    /// Original topic id to cluster id.
    pub mapping: BTreeMap<usize, usize>,
}

impl MergedTopicSet {
    /// Each topic in its own cluster, in topic order.
    pub fn identity(labels: &[TopicLabel], doc_counts: &BTreeMap<usize, usize>, threshold: f64) -> Self {
        let mut sorted: Vec<&TopicLabel> = labels.iter().collect();
        sorted.sort_by_key(|l| l.topic_id);
        let clusters: Vec<MergedCluster> = sorted
            .iter()
            .enumerate()
            .map(|(i, l)| MergedCluster {
                id: i,
                members: vec![l.topic_id],
                label: l.label.clone(),
                doc_count: doc_counts.get(&l.topic_id).copied().unwrap_or(0),
            })
            .collect();
        let mapping = clusters.iter().map(|c| (c.members[0], c.id)).collect();
        MergedTopicSet {
            threshold,
            clusters,
            mapping,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_of(&self, topic_id: usize) -> Option<usize> {
        self.mapping.get(&topic_id).copied()
    }

    /// Checks that clusters are non-empty, disjoint and agree with `mapping`.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (i, c) in self.clusters.iter().enumerate() {
            if c.id != i {
                return Err(Error::InvalidArgument(format!("cluster at position {i} has id {}", c.id)));
            }
            if c.members.is_empty() {
                return Err(Error::InvalidArgument(format!("cluster {i} is empty")));
            }
            for &m in &c.members {
                if seen.insert(m, i).is_some() {
                    return Err(Error::InvalidArgument(format!("topic {m} is in two clusters")));
                }
            }
        }
        if seen != self.mapping {
            return Err(Error::InvalidArgument("mapping disagrees with cluster membership".into()));
        }
        Ok(())
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so roots are deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Upper-triangle pairs `(i, j, cos)` with `i < j` over positions in `vectors`.
pub fn pairwise_similarities(vectors: &[&[f64]]) -> Result<Vec<(usize, usize, f64)>> {
    let n = vectors.len();
    let row = |i: usize| -> Result<Vec<(usize, usize, f64)>> {
        (i + 1..n).map(|j| Ok((i, j, cosine(vectors[i], vectors[j])?))).collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Result<Vec<_>>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Result<Vec<_>>> = (0..n).map(row).collect();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// Groups labels whose embeddings have cosine similarity at or above
/// `threshold`, taking connected components of the similarity graph.
///
/// `doc_counts` gives the number of documents whose dominant topic is each
/// topic id (missing ids count as 0). A cluster's label is the label of its
/// member with the most documents, ties going to the lowest topic id.
/// Clusters are numbered by their smallest member id.
pub fn merge(
    labels: &[TopicLabel],
    embeddings: &[LabelEmbedding],
    doc_counts: &BTreeMap<usize, usize>,
    threshold: f64,
) -> Result<MergedTopicSet> {
    if threshold.is_nan() {
        return Err(Error::InvalidArgument("threshold is NaN".into()));
    }
    let mut order: Vec<&TopicLabel> = labels.iter().collect();
    order.sort_by_key(|l| l.topic_id);
    if order.windows(2).any(|w| w[0].topic_id == w[1].topic_id) {
        return Err(Error::InvalidArgument("duplicate topic id among labels".into()));
    }
    let by_topic: BTreeMap<usize, &LabelEmbedding> = embeddings.iter().map(|e| (e.topic_id, e)).collect();
    if by_topic.len() != embeddings.len() || embeddings.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels but {} embeddings",
            labels.len(),
            embeddings.len()
        )));
    }
    let mut vectors = Vec::with_capacity(order.len());
    for l in &order {
        let e = by_topic
            .get(&l.topic_id)
            .ok_or_else(|| Error::InvalidArgument(format!("no embedding for topic {}", l.topic_id)))?;
        vectors.push(e.vector.as_slice());
    }

    let mut uf = UnionFind::new(order.len());
    for (i, j, s) in pairwise_similarities(&vectors)? {
        if s >= threshold {
            uf.union(i, j);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..order.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    let count = |pos: usize| doc_counts.get(&order[pos].topic_id).copied().unwrap_or(0);
    let mut clusters = Vec::with_capacity(groups.len());
    let mut mapping = BTreeMap::new();
    for (id, members) in groups.into_values().enumerate() {
        // members are ascending by topic id, so max_by_key's "last max wins"
        // needs the reversed iterator to prefer the lowest id
        let rep = *members.iter().rev().max_by_key(|&&p| count(p)).expect("non-empty");
        let ids: Vec<usize> = members.iter().map(|&p| order[p].topic_id).collect();
        for &t in &ids {
            mapping.insert(t, id);
        }
        clusters.push(MergedCluster {
            id,
            label: order[rep].label.clone(),
            doc_count: members.iter().map(|&p| count(p)).sum(),
            members: ids,
        });
    }
    Ok(MergedTopicSet {
        threshold,
        clusters,
        mapping,
    })
}

/// Cosine similarity of every label in `a` against every label in `b`
/// (rows follow `a`, columns follow `b`).
pub fn cross_similarity(a: &[LabelEmbedding], b: &[LabelEmbedding]) -> Result<Vec<Vec<f64>>> {
    a.iter()
        .map(|x| b.iter().map(|y| cosine(&x.vector, &y.vector)).collect())
        .collect()
}

/// Pairs `(topic in a, topic in b, similarity)` at or above `threshold`.
pub fn overlapping_topics(
    a: &[LabelEmbedding],
    b: &[LabelEmbedding],
    threshold: f64,
) -> Result<Vec<(usize, usize, f64)>> {
    let sims = cross_similarity(a, b)?;
    let mut out = Vec::new();
    for (i, row) in sims.iter().enumerate() {
        for (j, &s) in row.iter().enumerate() {
            if s >= threshold {
                out.push((a[i].topic_id, b[j].topic_id, s));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(id: usize, text: &str) -> TopicLabel {
        TopicLabel {
            topic_id: id,
            label: text.into(),
            provider_id: "t".into(),
            prompt_hash: String::new(),
            raw_response: String::new(),
        }
    }

    fn emb(id: usize, v: Vec<f64>) -> LabelEmbedding {
        LabelEmbedding {
            topic_id: id,
            vector: normalize(v).unwrap(),
            provider_id: "t".into(),
        }
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let want = 32.0 / (14.0f64.sqrt() * 77.0f64.sqrt());
        let got = cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.974_631_846).abs() < 1e-9);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn stub_is_deterministic_and_unit_after_embedding() {
        let s = StubEmbedder::default();
        let labels = vec![label(0, "Hand Tracking"), label(1, "hand tracking"), label(2, "Refund Policy")];
        let cache = ResponseCache::in_memory();
        let a = embed_labels(&s, &labels, &cache, &RetryPolicy::no_delay(1)).unwrap();
        let b = embed_labels(&s, &labels, &ResponseCache::in_memory(), &RetryPolicy::no_delay(1)).unwrap();
        assert_eq!(a, b);
        for e in &a {
            assert_eq!(e.vector.len(), 64);
            assert!((l2(&e.vector) - 1.0).abs() < 1e-12);
        }
        assert!((cosine(&a[0].vector, &a[1].vector).unwrap() - 1.0).abs() < 1e-12);
        assert!(cosine(&a[0].vector, &a[2].vector).unwrap() < 0.8);
    }

    struct WrongDim;
    impl EmbeddingProvider for WrongDim {
        fn id(&self) -> &str {
            "w"
        }
        fn model(&self) -> &str {
            "w"
        }
        fn dimension(&self) -> Option<usize> {
            Some(4)
        }
        fn embed(&self, _: &str) -> Result<Vec<f64>> {
            Ok(vec![1.0; 3])
        }
    }

    #[test]
    fn dimension_is_checked() {
        let out = embed_labels(&WrongDim, &[label(0, "x")], &ResponseCache::in_memory(), &RetryPolicy::no_delay(1));
        assert!(matches!(out, Err(Error::DimensionMismatch { expected: 4, found: 3 })));
    }

    #[test]
    fn chain_merges_transitively() {
        // angles chosen so cos(AB)=0.85, cos(BC)=0.82 and cos(AC) is low
        let ab = 0.85f64.acos();
        let bc = 0.82f64.acos();
        let labels = vec![label(0, "A"), label(1, "B"), label(2, "C")];
        let embs = vec![
            emb(0, vec![1.0, 0.0]),
            emb(1, vec![ab.cos(), ab.sin()]),
            emb(2, vec![(ab + bc).cos(), (ab + bc).sin()]),
        ];
        let counts = BTreeMap::from([(0, 5), (1, 9), (2, 9)]);
        let m = merge(&labels, &embs, &counts, 0.8).unwrap();
        assert_eq!(m.n_clusters(), 1);
        assert_eq!(m.clusters[0].members, vec![0, 1, 2]);
        assert_eq!(m.clusters[0].label, "B");
        assert_eq!(m.clusters[0].doc_count, 23);
        m.validate().unwrap();
    }

    #[test]
    fn below_threshold_is_identity() {
        let labels = vec![label(4, "x"), label(2, "y")];
        let embs = vec![emb(4, vec![1.0, 0.0]), emb(2, vec![0.0, 1.0])];
        let counts = BTreeMap::new();
        let m = merge(&labels, &embs, &counts, 0.8).unwrap();
        assert_eq!(m, MergedTopicSet::identity(&labels, &counts, 0.8));
        assert_eq!(m.cluster_of(2), Some(0));
        assert_eq!(m.cluster_of(4), Some(1));
    }

    #[test]
    fn strict_threshold_with_distinct_stub_labels() {
        let s = StubEmbedder::default();
        let labels: Vec<_> = ["Comfort", "Price", "Graphics Quality", "Controller Drift"]
            .iter()
            .enumerate()
            .map(|(i, t)| label(i, t))
            .collect();
        let embs = embed_labels(&s, &labels, &ResponseCache::in_memory(), &RetryPolicy::no_delay(1)).unwrap();
        let m = merge(&labels, &embs, &BTreeMap::new(), 1.0).unwrap();
        assert_eq!(m.n_clusters(), 4);
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let labels = vec![label(0, "x")];
        assert!(merge(&labels, &[], &BTreeMap::new(), 0.8).is_err());
        let embs = vec![emb(1, vec![1.0])];
        assert!(merge(&labels, &embs, &BTreeMap::new(), 0.8).is_err());
    }

    #[test]
    fn overlap_report() {
        let a = vec![emb(0, vec![1.0, 0.0]), emb(1, vec![0.0, 1.0])];
        let b = vec![emb(7, vec![1.0, 0.1])];
        let o = overlapping_topics(&a, &b, 0.8).unwrap();
        assert_eq!(o.len(), 1);
        assert_eq!((o[0].0, o[0].1), (0, 7));
    }
}
