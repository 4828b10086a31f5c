//! Topic popularity and monthly absolute/relative impact.
//!
//! Absolute impact of a set of topics in month `m` is the theta mass those
//! topics receive from the documents of `m`; relative impact divides it by
//! the month's document count. Clusters and categories are just larger sets
//! of topics, so every quantity is additive over disjoint targets.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::MonthKey;
use crate::error::{Error, Result};
use crate::merging::MergedTopicSet;
use crate::preprocess::TokenizedCorpus;
use crate::topics::TopicModelResult;

pub const CANONICAL_CATEGORIES: [&str; 4] = ["Software", "Hardware", "Network", "User Experience"];

/// A scheme entry names a merged cluster either by id or by its label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterRef {
    Id(usize),
    Label(String),
}

/// Category name to merged-cluster references.
///
/// With `exhaustive` set, [`CategoryScheme::resolve`] also demands that
/// every cluster belongs to some category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScheme {
    pub categories: BTreeMap<String, Vec<ClusterRef>>,
    #[serde(default)]
    pub exhaustive: bool,
}

/// A scheme with every reference resolved to a cluster id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedScheme {
    pub categories: BTreeMap<String, BTreeSet<usize>>,
}

impl CategoryScheme {
    pub fn from_ids(categories: BTreeMap<String, BTreeSet<usize>>, exhaustive: bool) -> Self {
        CategoryScheme {
            categories: categories
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().map(ClusterRef::Id).collect()))
                .collect(),
            exhaustive,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Maps references to cluster ids, checking that each exists, that no
    /// cluster sits in two categories and, if exhaustive, that none is left out.
    pub fn resolve(&self, merged: &MergedTopicSet) -> Result<ResolvedScheme> {
        let by_label: BTreeMap<&str, usize> = merged.clusters.iter().map(|c| (c.label.as_str(), c.id)).collect();
        let mut owner: BTreeMap<usize, &str> = BTreeMap::new();
        let mut categories = BTreeMap::new();
        for (name, refs) in &self.categories {
            let mut ids = BTreeSet::new();
            for r in refs {
                let id = match r {
                    ClusterRef::Id(id) if *id < merged.clusters.len() => *id,
                    ClusterRef::Id(id) => {
                        return Err(Error::Scheme(format!("category {name:?} references unknown cluster {id}")))
                    }
                    ClusterRef::Label(l) => *by_label
                        .get(l.as_str())
                        .ok_or_else(|| Error::Scheme(format!("category {name:?} references unknown label {l:?}")))?,
                };
                if let Some(other) = owner.insert(id, name) {
                    if other != name {
                        return Err(Error::Scheme(format!(
                            "cluster {id} is in both {other:?} and {name:?}"
                        )));
                    }
                }
                ids.insert(id);
            }
            categories.insert(name.clone(), ids);
        }
        if self.exhaustive {
            let missing: Vec<usize> = (0..merged.clusters.len()).filter(|c| !owner.contains_key(c)).collect();
            if !missing.is_empty() {
                return Err(Error::Scheme(format!("clusters {missing:?} belong to no category")));
            }
        }
        Ok(ResolvedScheme { categories })
    }
}

/// Number of documents whose dominant topic is each topic id.
pub fn dominant_counts(result: &TopicModelResult) -> BTreeMap<usize, usize> {
    let mut counts: BTreeMap<usize, usize> = (0..result.n_topics()).map(|t| (t, 0)).collect();
    for t in result.dominant_topics() {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

/// Share of documents whose dominant topic lies in `cluster`.
pub fn popularity(result: &TopicModelResult, cluster: &BTreeSet<usize>) -> Result<f64> {
    if cluster.is_empty() {
        return Err(Error::InvalidArgument("popularity of an empty cluster".into()));
    }
    let n = result.n_docs();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let hits = result.dominant_topics().into_iter().filter(|t| cluster.contains(t)).count();
    Ok(hits as f64 / n as f64)
}

/// Row indices of documents grouped by month.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MonthIndex {
    months: BTreeMap<MonthKey, Vec<usize>>,
    n_docs: usize,
}

impl MonthIndex {
    pub fn from_months(months: &[MonthKey]) -> Self {
        let mut map: BTreeMap<MonthKey, Vec<usize>> = BTreeMap::new();
        for (d, &m) in months.iter().enumerate() {
            map.entry(m).or_default().push(d);
        }
        MonthIndex {
            months: map,
            n_docs: months.len(),
        }
    }

    pub fn from_corpus(tc: &TokenizedCorpus) -> Self {
        Self::from_months(&tc.months)
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn doc_count(&self, m: MonthKey) -> usize {
        self.months.get(&m).map_or(0, Vec::len)
    }

    pub fn docs(&self, m: MonthKey) -> &[usize] {
        self.months.get(&m).map_or(&[], Vec::as_slice)
    }

    pub fn first(&self) -> Option<MonthKey> {
        self.months.keys().next().copied()
    }

    pub fn last(&self) -> Option<MonthKey> {
        self.months.keys().next_back().copied()
    }

    /// Every calendar month from the first to the last, including empty ones.
    pub fn dense_range(&self) -> Vec<MonthKey> {
        match (self.first(), self.last()) {
            (Some(a), Some(b)) => a.range_inclusive(b),
            _ => Vec::new(),
        }
    }
}

fn check_rows(result: &TopicModelResult, months: &MonthIndex) -> Result<()> {
    if result.n_docs() != months.n_docs() {
        return Err(Error::DimensionMismatch {
            expected: months.n_docs(),
            found: result.n_docs(),
        });
    }
    Ok(())
}

/// Summed theta of `topics` over the documents of month `m`.
///
/// A month with no documents contributes 0 and logs a warning.
pub fn absolute_impact(
    result: &TopicModelResult,
    months: &MonthIndex,
    topics: &BTreeSet<usize>,
    m: MonthKey,
) -> Result<f64> {
    check_rows(result, months)?;
    if let Some(&t) = topics.iter().find(|&&t| t >= result.n_topics()) {
        return Err(Error::InvalidArgument(format!("topic {t} out of range")));
    }
    let docs = months.docs(m);
    if docs.is_empty() {
        log::warn!("month {m} has no documents");
    }
    Ok(docs
        .iter()
        .map(|&d| {
            let row = result.theta.row(d);
            topics.iter().map(|&t| row[t]).sum::<f64>()
        })
        .sum())
}

/// [`absolute_impact`] divided by the month's document count; `None` for a
/// month without documents.
pub fn relative_impact(
    result: &TopicModelResult,
    months: &MonthIndex,
    topics: &BTreeSet<usize>,
    m: MonthKey,
) -> Result<Option<f64>> {
    let abs = absolute_impact(result, months, topics, m)?;
    let n = months.doc_count(m);
    Ok((n > 0).then(|| abs / n as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactValue {
    pub name: String,
    pub absolute: Option<f64>,
    pub relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthImpact {
    pub month: MonthKey,
    pub doc_count: usize,
    /// One entry per merged cluster, in cluster order.
    pub topics: Vec<ImpactValue>,
    /// One entry per category, in name order.
    pub categories: Vec<ImpactValue>,
}

impl MonthImpact {
    pub fn is_missing(&self) -> bool {
        self.doc_count == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactSeries {
    pub months: Vec<MonthImpact>,
    /// Share of all documents dominated by each cluster.
    pub popularity: Vec<f64>,
}

fn cluster_names(merged: &MergedTopicSet) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &merged.clusters {
        *seen.entry(c.label.as_str()).or_insert(0) += 1;
    }
    merged
        .clusters
        .iter()
        .map(|c| {
            if seen[c.label.as_str()] > 1 {
                format!("{} #{}", c.label, c.id)
            } else {
                c.label.clone()
            }
        })
        .collect()
}

/// Dense monthly series for clusters and categories.
///
/// Months between the first and last document month that have no documents
/// appear with `doc_count` 0 and every value `None`.
pub fn build_series(
    result: &TopicModelResult,
    merged: &MergedTopicSet,
    scheme: &CategoryScheme,
    months: &MonthIndex,
) -> Result<ImpactSeries> {
    check_rows(result, months)?;
    merged.validate()?;
    let t = result.n_topics();
    if let Some(missing) = (0..t).find(|k| !merged.mapping.contains_key(k)) {
        return Err(Error::InvalidArgument(format!("topic {missing} is not in the merged set")));
    }
    if let Some(&extra) = merged.mapping.keys().find(|&&k| k >= t) {
        return Err(Error::InvalidArgument(format!("merged set references topic {extra} but the model has {t}")));
    }
    let resolved = scheme.resolve(merged)?;
    let n_clusters = merged.n_clusters();
    let names = cluster_names(merged);

    let per_month = |m: MonthKey| -> MonthImpact {
        let docs = months.docs(m);
        let n = docs.len();
        let mut cluster_abs = vec![0.0; n_clusters];
        for &d in docs {
            for (k, &x) in result.theta.row(d).iter().enumerate() {
                cluster_abs[merged.mapping[&k]] += x;
            }
        }
        let value = |name: String, abs: f64| ImpactValue {
            name,
            absolute: (n > 0).then_some(abs),
            relative: (n > 0).then(|| abs / n as f64),
        };
        let topics = names.iter().zip(&cluster_abs).map(|(nm, &a)| value(nm.clone(), a)).collect();
        let categories = resolved
            .categories
            .iter()
            .map(|(name, ids)| value(name.clone(), ids.iter().map(|&c| cluster_abs[c]).sum()))
            .collect();
        MonthImpact {
            month: m,
            doc_count: n,
            topics,
            categories,
        }
    };
    let range = months.dense_range();
    #[cfg(feature = "parallel")]
    let series: Vec<MonthImpact> = {
        use rayon::prelude::*;
        range.par_iter().map(|&m| per_month(m)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let series: Vec<MonthImpact> = range.iter().map(|&m| per_month(m)).collect();

    let dominant = dominant_counts(result);
    let mut popularity = vec![0.0; n_clusters];
    let n_docs = result.n_docs().max(1) as f64;
    for (topic, count) in dominant {
        popularity[merged.mapping[&topic]] += count as f64 / n_docs;
    }
    Ok(ImpactSeries {
        months: series,
        popularity,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the tidy CSV `month,level,name,absolute,relative,doc_count`.
/// Missing values are empty fields.
pub fn write_csv<W: Write>(series: &ImpactSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["month", "level", "name", "absolute", "relative", "doc_count"])?;
    for p in &series.months {
        let month = p.month.to_string();
        let count = p.doc_count.to_string();
        for (level, values) in [("topic", &p.topics), ("category", &p.categories)] {
            for v in values {
                w.write_record([
                    month.as_str(),
                    level,
                    v.name.as_str(),
                    &fmt_opt(v.absolute),
                    &fmt_opt(v.relative),
                    &count,
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merging::MergedCluster;
    use crate::topics::{DenseMatrix, ModelFamily, TopicModelSpec};

    fn result(theta: Vec<Vec<f64>>) -> TopicModelResult {
        let t = theta[0].len();
        TopicModelResult {
            spec: TopicModelSpec::new(ModelFamily::External, t, 1),
            model: "fixture".into(),
            vocab_hash: String::new(),
            phi: DenseMatrix::zeros(t, 1),
            theta: DenseMatrix::from_rows(&theta),
            keywords: vec![vec!["w".into()]; t],
            objective_trace: vec![],
            singular_values: None,
            components: None,
        }
    }

    fn mk(y: i32, m: u32) -> MonthKey {
        MonthKey::new(y, m).unwrap()
    }

    fn identity_merge(t: usize) -> MergedTopicSet {
        MergedTopicSet {
            threshold: 0.8,
            clusters: (0..t)
                .map(|i| MergedCluster {
                    id: i,
                    members: vec![i],
                    label: format!("t{i}"),
                    doc_count: 0,
                })
                .collect(),
            mapping: (0..t).map(|i| (i, i)).collect(),
        }
    }

    #[test]
    fn popularity_examples() {
        let r = result(vec![
            vec![0.9, 0.05, 0.05],
            vec![0.6, 0.3, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.1, 0.1, 0.8],
        ]);
        assert_eq!(popularity(&r, &BTreeSet::from([0])).unwrap(), 0.5);
        assert_eq!(popularity(&r, &BTreeSet::from([0, 1, 2])).unwrap(), 1.0);
        let s: f64 = (0..3).map(|t| popularity(&r, &BTreeSet::from([t])).unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(popularity(&r, &BTreeSet::new()).is_err());
    }

    #[test]
    fn impact_examples() {
        let r = result(vec![vec![0.7, 0.3], vec![0.3, 0.7]]);
        let idx = MonthIndex::from_months(&[mk(2020, 1), mk(2020, 1)]);
        let a = BTreeSet::from([0]);
        assert!((absolute_impact(&r, &idx, &a, mk(2020, 1)).unwrap() - 1.0).abs() < 1e-15);
        assert!((relative_impact(&r, &idx, &a, mk(2020, 1)).unwrap().unwrap() - 0.5).abs() < 1e-15);
        let all = BTreeSet::from([0, 1]);
        assert!((absolute_impact(&r, &idx, &all, mk(2020, 1)).unwrap() - 2.0).abs() < 1e-15);
        assert!((relative_impact(&r, &idx, &all, mk(2020, 1)).unwrap().unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(absolute_impact(&r, &idx, &BTreeSet::new(), mk(2020, 1)).unwrap(), 0.0);
        assert_eq!(absolute_impact(&r, &idx, &a, mk(2021, 5)).unwrap(), 0.0);
        assert_eq!(relative_impact(&r, &idx, &a, mk(2021, 5)).unwrap(), None);
    }

    #[test]
    fn series_is_dense_with_gaps() {
        let r = result(vec![vec![0.5, 0.5], vec![0.9, 0.1], vec![0.2, 0.8]]);
        let idx = MonthIndex::from_months(&[mk(2020, 11), mk(2021, 1), mk(2021, 1)]);
        let merged = identity_merge(2);
        let scheme = CategoryScheme::from_ids(
            BTreeMap::from([("Hardware".into(), BTreeSet::from([0])), ("Software".into(), BTreeSet::from([1]))]),
            true,
        );
        let s = build_series(&r, &merged, &scheme, &idx).unwrap();
        assert_eq!(s.months.len(), 3);
        assert!(s.months[1].is_missing());
        assert_eq!(s.months[1].topics[0].absolute, None);
        let jan = &s.months[2];
        assert_eq!(jan.doc_count, 2);
        let abs: f64 = jan.topics.iter().map(|v| v.absolute.unwrap()).sum();
        assert!((abs - 2.0).abs() < 1e-12);
        let rel: f64 = jan.categories.iter().map(|v| v.relative.unwrap()).sum();
        assert!((rel - 1.0).abs() < 1e-12);
        assert!((s.popularity.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_month_series() {
        let r = result(vec![vec![1.0]]);
        let idx = MonthIndex::from_months(&[mk(2019, 3)]);
        let scheme = CategoryScheme::from_ids(BTreeMap::new(), false);
        let s = build_series(&r, &identity_merge(1), &scheme, &idx).unwrap();
        assert_eq!(s.months.len(), 1);
    }

    #[test]
    fn scheme_validation() {
        let merged = identity_merge(3);
        let partial = CategoryScheme::from_ids(BTreeMap::from([("Network".into(), BTreeSet::from([0, 1]))]), true);
        assert!(matches!(partial.resolve(&merged), Err(Error::Scheme(_))));
        let lax = CategoryScheme { exhaustive: false, ..partial };
        assert!(lax.resolve(&merged).is_ok());
        let unknown = CategoryScheme::from_ids(BTreeMap::from([("Network".into(), BTreeSet::from([9]))]), false);
        assert!(unknown.resolve(&merged).is_err());
        let overlap = CategoryScheme::from_ids(
            BTreeMap::from([("A".into(), BTreeSet::from([0])), ("B".into(), BTreeSet::from([0]))]),
            false,
        );
        assert!(overlap.resolve(&merged).is_err());
    }

    #[test]
    fn scheme_by_label_from_json() {
        let merged = identity_merge(3);
        let s = CategoryScheme::from_json(r#"{"exhaustive": true, "categories": {"Software": ["t0", 1], "Hardware": ["t2"]}}"#)
            .unwrap();
        let r = s.resolve(&merged).unwrap();
        assert_eq!(r.categories["Software"], BTreeSet::from([0, 1]));
        assert_eq!(r.categories["Hardware"], BTreeSet::from([2]));
    }

    #[test]
    fn csv_shape() {
        let r = result(vec![vec![0.25, 0.75]]);
        let idx = MonthIndex::from_months(&[mk(2020, 1)]);
        let scheme = CategoryScheme::from_ids(BTreeMap::from([("Software".into(), BTreeSet::from([0, 1]))]), true);
        let s = build_series(&r, &identity_merge(2), &scheme, &idx).unwrap();
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "month,level,name,absolute,relative,doc_count");
        assert_eq!(lines[1], "2020-01,topic,t0,0.25,0.25,1");
        assert_eq!(lines[3], "2020-01,category,Software,1,1,1");
    }
}
