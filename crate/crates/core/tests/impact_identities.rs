//! Additivity identities of the impact series on random fixtures.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use htmodel::corpus::MonthKey;
use htmodel::impact::{
    absolute_impact, build_series, popularity, relative_impact, CategoryScheme, MonthIndex, CANONICAL_CATEGORIES,
};
use htmodel::merging::{MergedCluster, MergedTopicSet};
use htmodel::topics::{DenseMatrix, ModelFamily, TopicModelResult, TopicModelSpec};

struct Case {
    result: TopicModelResult,
    months: MonthIndex,
    merged: MergedTopicSet,
    scheme: CategoryScheme,
}

fn case(rng: &mut ChaCha8Rng) -> Case {
    let t = rng.random_range(2..12);
    let n = rng.random_range(1..80);
    let theta: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..t).map(|_| rng.random::<f64>().powi(3)).collect();
            let s: f64 = raw.iter().sum::<f64>().max(1e-300);
            raw.iter().map(|x| x / s).collect()
        })
        .collect();
    let start = MonthKey::new(2013, 1).unwrap();
    let span = rng.random_range(1..30);
    let all = start.range_inclusive(MonthKey::new(2013 + (span / 12), 1 + (span % 12) as u32).unwrap());
    let months: Vec<MonthKey> = (0..n).map(|_| all[rng.random_range(0..all.len())]).collect();

    // random partition of topics into clusters
    let n_clusters = rng.random_range(1..=t);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for topic in 0..t {
        let c = if topic < n_clusters { topic } else { rng.random_range(0..n_clusters) };
        members[c].push(topic);
    }
    members.sort();
    let clusters: Vec<MergedCluster> = members
        .into_iter()
        .enumerate()
        .map(|(id, m)| MergedCluster {
            id,
            label: format!("cluster {id}"),
            doc_count: 0,
            members: m,
        })
        .collect();
    let mapping = clusters.iter().flat_map(|c| c.members.iter().map(move |&m| (m, c.id))).collect();
    let merged = MergedTopicSet {
        threshold: 0.8,
        clusters,
        mapping,
    };
    let mut cats: BTreeMap<String, BTreeSet<usize>> =
        CANONICAL_CATEGORIES.iter().map(|c| (c.to_string(), BTreeSet::new())).collect();
    for c in 0..n_clusters {
        let name = CANONICAL_CATEGORIES[rng.random_range(0..4)];
        cats.get_mut(name).unwrap().insert(c);
    }
    Case {
        result: TopicModelResult {
            spec: TopicModelSpec::new(ModelFamily::External, t, 1),
            model: "fixture".into(),
            vocab_hash: String::new(),
            phi: DenseMatrix::zeros(t, 1),
            theta: DenseMatrix::from_rows(&theta),
            keywords: vec![vec!["w".into()]; t],
            objective_trace: vec![],
            singular_values: None,
            components: None,
        },
        months: MonthIndex::from_months(&months),
        merged,
        scheme: CategoryScheme::from_ids(cats, true),
    }
}

#[test]
fn per_month_sums_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..20 {
        let c = case(&mut rng);
        let series = build_series(&c.result, &c.merged, &c.scheme, &c.months).unwrap();
        assert_eq!(series.months.len(), c.months.dense_range().len());
        for p in &series.months {
            assert_eq!(p.doc_count, c.months.doc_count(p.month));
            if p.doc_count == 0 {
                assert!(p.topics.iter().chain(&p.categories).all(|v| v.absolute.is_none() && v.relative.is_none()));
                continue;
            }
            for level in [&p.topics, &p.categories] {
                let abs: f64 = level.iter().map(|v| v.absolute.unwrap()).sum();
                let rel: f64 = level.iter().map(|v| v.relative.unwrap()).sum();
                assert!((abs - p.doc_count as f64).abs() <= 1e-9, "fixture {i} {}: abs {abs}", p.month);
                assert!((rel - 1.0).abs() <= 1e-9, "fixture {i} {}: rel {rel}", p.month);
                for v in level.iter() {
                    let r = v.relative.unwrap();
                    assert!((0.0..=1.0 + 1e-12).contains(&r));
                }
            }
            // cluster values equal the direct sum over member topics
            for (cl, v) in c.merged.clusters.iter().zip(&p.topics) {
                let set: BTreeSet<usize> = cl.members.iter().copied().collect();
                let direct = absolute_impact(&c.result, &c.months, &set, p.month).unwrap();
                assert!((direct - v.absolute.unwrap()).abs() <= 1e-9);
                let rel = relative_impact(&c.result, &c.months, &set, p.month).unwrap().unwrap();
                assert!((rel - direct / p.doc_count as f64).abs() <= 1e-15);
            }
        }
        let pop: f64 = (0..c.result.n_topics())
            .map(|t| popularity(&c.result, &BTreeSet::from([t])).unwrap())
            .sum();
        assert!((pop - 1.0).abs() <= 1e-12);
        assert!((series.popularity.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn absolute_impact_is_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let c = case(&mut rng);
        let t = c.result.n_topics();
        let m = c.months.first().unwrap();
        let split = rng.random_range(0..=t);
        let a: BTreeSet<usize> = (0..split).collect();
        let b: BTreeSet<usize> = (split..t).collect();
        let all: BTreeSet<usize> = (0..t).collect();
        let sum = absolute_impact(&c.result, &c.months, &a, m).unwrap() + absolute_impact(&c.result, &c.months, &b, m).unwrap();
        let whole = absolute_impact(&c.result, &c.months, &all, m).unwrap();
        assert!((sum - whole).abs() <= 1e-9);
        assert!((whole - c.months.doc_count(m) as f64).abs() <= 1e-9);
    }
}
