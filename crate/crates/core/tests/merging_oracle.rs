//! Label merging against a transitive closure of the thresholded
//! similarity matrix.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use htmodel::labeling::TopicLabel;
use htmodel::merging::{embed_labels, merge, LabelEmbedding, StubEmbedder};
use htmodel::provider::{ResponseCache, RetryPolicy};

const POOL: [&str; 10] = [
    "tracking", "comfort", "price", "controller", "graphics", "refund", "sickness", "battery", "update", "store",
];

fn random_labels(rng: &mut ChaCha8Rng) -> Vec<TopicLabel> {
    let n = rng.random_range(1..=20);
    (0..n)
        .map(|t| {
            let words = rng.random_range(1..=3);
            let text = (0..words).map(|_| POOL[rng.random_range(0..POOL.len())]).collect::<Vec<_>>().join(" / ");
            TopicLabel {
                topic_id: t * 2 + 1,
                label: text,
                provider_id: "mock".into(),
                prompt_hash: String::new(),
                raw_response: String::new(),
            }
        })
        .collect()
}

fn closure(embs: &[LabelEmbedding], threshold: f64) -> BTreeSet<BTreeSet<usize>> {
    let n = embs.len();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = embs[i].vector.iter().zip(&embs[j].vector).map(|(a, b)| a * b).sum();
            reach[i][j] = i == j || dot.clamp(-1.0, 1.0) >= threshold;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    (0..n)
        .map(|i| (0..n).filter(|&j| reach[i][j]).map(|j| embs[j].topic_id).collect())
        .collect()
}

#[test]
fn merge_equals_transitive_closure() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let stub = StubEmbedder::default();
    let mut multi_member = 0;
    for case in 0..50 {
        let labels = random_labels(&mut rng);
        let embs = embed_labels(&stub, &labels, &ResponseCache::in_memory(), &RetryPolicy::no_delay(1)).unwrap();
        let counts: BTreeMap<usize, usize> = labels.iter().map(|l| (l.topic_id, rng.random_range(0..5))).collect();
        let mut last = 0;
        for threshold in [0.5, 0.8, 0.95] {
            let m = merge(&labels, &embs, &counts, threshold).unwrap();
            m.validate().unwrap();
            let got: BTreeSet<BTreeSet<usize>> =
                m.clusters.iter().map(|c| c.members.iter().copied().collect()).collect();
            assert_eq!(got, closure(&embs, threshold), "case {case} threshold {threshold}");
            for c in &m.clusters {
                let best = c.members.iter().map(|t| counts[t]).max().unwrap();
                let rep = c.members.iter().find(|t| counts[t] == best).unwrap();
                let rep_label = &labels.iter().find(|l| l.topic_id == *rep).unwrap().label;
                assert_eq!(&c.label, rep_label, "case {case} representative");
                assert_eq!(c.doc_count, c.members.iter().map(|t| counts[t]).sum::<usize>());
                if c.members.len() > 1 {
                    multi_member += 1;
                }
            }
            assert!(m.n_clusters() >= last, "cluster count fell as threshold rose");
            last = m.n_clusters();
        }
    }
    assert!(multi_member > 0, "fixtures never merged anything");
}
