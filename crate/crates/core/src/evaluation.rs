//! Model selection: human label ratings, inter-rater agreement, the
//! combined score `S`, and sensitivity sweeps over alpha, T and K.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{coherence_report, coverage, diversity, CoherenceOptions};
use crate::preprocess::TokenizedCorpus;
use crate::topics::{build_matrix, fit, keywords_from_phi, TopicModelResult, TopicModelSpec};

/// Default weight of the quantitative metrics in `S`.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// One rater's 1-3 accuracy and usefulness marks for one topic label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualScore {
    pub topic_id: usize,
    pub rater_id: String,
    pub accuracy: u8,
    pub usefulness: u8,
}

impl QualScore {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("accuracy", self.accuracy), ("usefulness", self.usefulness)] {
            if !(1..=3).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} {v} for topic {} by {:?} is outside 1..=3",
                    self.topic_id, self.rater_id
                )));
            }
        }
        Ok(())
    }
}

/// Reads `topic_id,rater_id,accuracy,usefulness` rows (with header).
pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<QualScore>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let s: QualScore = row?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

/// Cohen's kappa between two equally long label sequences.
///
/// Perfect agreement with a single shared category (chance agreement 1)
/// counts as kappa 1.
pub fn cohen_kappa<T: Ord>(r1: &[T], r2: &[T]) -> Result<f64> {
    if r1.len() != r2.len() {
        return Err(Error::DimensionMismatch {
            expected: r1.len(),
            found: r2.len(),
        });
    }
    if r1.is_empty() {
        return Err(Error::InvalidArgument("kappa needs at least one item".into()));
    }
    let n = r1.len() as f64;
    let mut m1: BTreeMap<&T, usize> = BTreeMap::new();
    let mut m2: BTreeMap<&T, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (a, b) in r1.iter().zip(r2) {
        *m1.entry(a).or_insert(0) += 1;
        *m2.entry(b).or_insert(0) += 1;
        if a == b {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = m1
        .iter()
        .map(|(k, &c)| c as f64 * m2.get(k).copied().unwrap_or(0) as f64)
        .sum::<f64>()
        / (n * n);
    if p_e >= 1.0 {
        return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Kappa between two raters over the combined `(accuracy, usefulness)`
/// category of each topic both of them scored.
pub fn rater_kappa(scores: &[QualScore], rater_a: &str, rater_b: &str) -> Result<f64> {
    let pick = |r: &str| -> BTreeMap<usize, (u8, u8)> {
        scores
            .iter()
            .filter(|s| s.rater_id == r)
            .map(|s| (s.topic_id, (s.accuracy, s.usefulness)))
            .collect()
    };
    let (a, b) = (pick(rater_a), pick(rater_b));
    let mut la = Vec::new();
    let mut lb = Vec::new();
    for (t, va) in &a {
        let vb = b.get(t).ok_or_else(|| Error::MissingScore {
            topic_id: *t,
            rater_id: rater_b.to_string(),
        })?;
        la.push(*va);
        lb.push(*vb);
    }
    if let Some(t) = b.keys().find(|t| !a.contains_key(t)) {
        return Err(Error::MissingScore {
            topic_id: *t,
            rater_id: rater_a.to_string(),
        });
    }
    cohen_kappa(&la, &lb)
}

/// How rater marks are turned into `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityForm {
    /// Per rater, the share of topics with accuracy >= 2 plus the share with
    /// usefulness >= 2; averaged over raters. Range [0, 2].
    #[default]
    Proportion,
    /// Per rater, the mean of `accuracy + usefulness` over topics; averaged
    /// over raters. Range [2, 6], so it cannot enter `S` directly.
    RawMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterProportions {
    pub accuracy: f64,
    pub usefulness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub form: QualityForm,
    pub q: f64,
    pub per_rater: BTreeMap<String, RaterProportions>,
}

/// Aggregates rater marks into `Q`. Every rater must have scored every
/// topic that any rater scored.
pub fn qualitative_aggregate(
    scores: &[QualScore],
    raters: &BTreeSet<String>,
    form: QualityForm,
) -> Result<QualityReport> {
    if raters.is_empty() {
        return Err(Error::InvalidArgument("no raters".into()));
    }
    let mut cells: BTreeMap<(&str, usize), &QualScore> = BTreeMap::new();
    let mut topics = BTreeSet::new();
    for s in scores {
        s.validate()?;
        if !raters.contains(&s.rater_id) {
            continue;
        }
        topics.insert(s.topic_id);
        if cells.insert((s.rater_id.as_str(), s.topic_id), s).is_some() {
            return Err(Error::InvalidArgument(format!(
                "rater {:?} scored topic {} twice",
                s.rater_id, s.topic_id
            )));
        }
    }
    if topics.is_empty() {
        return Err(Error::InvalidArgument("no scores for the given raters".into()));
    }
    let n = topics.len() as f64;
    let mut per_rater = BTreeMap::new();
    let mut total = 0.0;
    for r in raters {
        let mut acc = 0usize;
        let mut useful = 0usize;
        let mut raw = 0usize;
        for &t in &topics {
            let s = cells.get(&(r.as_str(), t)).ok_or_else(|| Error::MissingScore {
                topic_id: t,
                rater_id: r.clone(),
            })?;
            acc += usize::from(s.accuracy >= 2);
            useful += usize::from(s.usefulness >= 2);
            raw += usize::from(s.accuracy) + usize::from(s.usefulness);
        }
        let props = RaterProportions {
            accuracy: acc as f64 / n,
            usefulness: useful as f64 / n,
        };
        total += match form {
            QualityForm::Proportion => props.accuracy + props.usefulness,
            QualityForm::RawMean => raw as f64 / n,
        };
        per_rater.insert(r.clone(), props);
    }
    Ok(QualityReport {
        form,
        q: total / raters.len() as f64,
        per_rater,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub coherence: f64,
    pub coverage: f64,
    pub diversity: f64,
    pub q: f64,
    pub alpha: f64,
    pub s: f64,
}

fn in_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} {x} outside [0, 1]")))
    }
}

/// `S = alpha (Coh + Cov + Div) / 3 + (1 - alpha) Q / 2`, with `Coh`
/// already scaled into [0, 1].
pub fn combined_score(model: &str, coh: f64, cov: f64, div: f64, q: f64, alpha: f64) -> Result<ModelScore> {
    in_unit("alpha", alpha)?;
    in_unit("coherence", coh)?;
    in_unit("coverage", cov)?;
    in_unit("diversity", div)?;
    if !(0.0..=2.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("Q {q} outside [0, 2]")));
    }
    let s = alpha * (coh + cov + div) / 3.0 + (1.0 - alpha) * q / 2.0;
    Ok(ModelScore {
        model: model.to_string(),
        coherence: coh,
        coverage: cov,
        diversity: div,
        q,
        alpha,
        s,
    })
}

/// Min-max scaling of raw coherence across the compared models. If all
/// values are equal every model gets 1.
pub fn scale_coherence(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .map(|&x| if hi > lo { (x - lo) / (hi - lo) } else { 1.0 })
        .collect()
}

/// Raw per-model inputs to the alpha sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    /// Unscaled coherence; scaled across the model set inside the sweep.
    pub coherence: f64,
    pub coverage: f64,
    pub diversity: f64,
    pub q: f64,
}

/// The alpha values 0.1, 0.2, ..., 1.0.
pub fn alpha_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaBest {
    pub alpha: f64,
    /// Every model within 1e-12 of the best score, in input order.
    pub models: Vec<String>,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweep {
    /// One row per (alpha, model), alpha-major.
    pub rows: Vec<ModelScore>,
    pub best: Vec<AlphaBest>,
}

const TIE: f64 = 1e-12;

pub fn sweep_alpha(models: &[ModelMetrics], alphas: &[f64]) -> Result<AlphaSweep> {
    if models.is_empty() || alphas.is_empty() {
        return Err(Error::InvalidArgument("alpha sweep needs models and alphas".into()));
    }
    let scaled = scale_coherence(&models.iter().map(|m| m.coherence).collect::<Vec<_>>());
    let mut rows = Vec::with_capacity(models.len() * alphas.len());
    let mut best = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let scores: Vec<ModelScore> = models
            .iter()
            .zip(&scaled)
            .map(|(m, &coh)| combined_score(&m.model, coh, m.coverage, m.diversity, m.q, alpha))
            .collect::<Result<_>>()?;
        let top = scores.iter().map(|s| s.s).fold(f64::NEG_INFINITY, f64::max);
        best.push(AlphaBest {
            alpha,
            models: scores.iter().filter(|s| top - s.s <= TIE).map(|s| s.model.clone()).collect(),
            s: top,
        });
        rows.extend(scores);
    }
    Ok(AlphaSweep { rows, best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub family: String,
    #[serde(rename = "T")]
    pub topics: usize,
    #[serde(rename = "K")]
    pub keywords: usize,
    pub coherence: f64,
    pub coverage: f64,
    pub diversity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSweep {
    pub rows: Vec<GridRow>,
    /// Grid values (T or K) whose coherence is within 1e-12 of the best.
    pub argmax: Vec<usize>,
}

impl GridSweep {
    fn from_rows(rows: Vec<GridRow>, key: fn(&GridRow) -> usize) -> Self {
        let top = rows.iter().map(|r| r.coherence).fold(f64::NEG_INFINITY, f64::max);
        let argmax = rows.iter().filter(|r| top - r.coherence <= TIE).map(key).collect();
        GridSweep { rows, argmax }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOptions {
    pub coherence: CoherenceOptions,
    /// Coverage threshold; `None` means `1 / T`.
    pub tau: Option<f64>,
}


fn row_for(result: &TopicModelResult, tc: &TokenizedCorpus, opts: &SweepOptions) -> Result<GridRow> {
    let t = result.n_topics();
    Ok(GridRow {
        family: result.spec.family.to_string(),
        topics: t,
        keywords: result.keywords.first().map_or(0, Vec::len),
        coherence: coherence_report(result, tc, &opts.coherence)?.score,
        coverage: coverage(result, opts.tau.unwrap_or(1.0 / t as f64))?,
        diversity: diversity(result),
    })
}

fn map_grid<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Fits `base` once per topic count and reports metrics for each.
pub fn sweep_topics(
    tc: &TokenizedCorpus,
    base: &TopicModelSpec,
    topic_counts: &[usize],
    opts: &SweepOptions,
) -> Result<GridSweep> {
    if topic_counts.is_empty() {
        return Err(Error::InvalidArgument("empty T grid".into()));
    }
    let m = build_matrix(tc)?;
    let rows = map_grid(topic_counts, |&t| {
        let mut spec = base.clone();
        spec.topics = t;
        let r = fit(&m, &spec)?;
        row_for(&r, tc, opts)
    })?;
    Ok(GridSweep::from_rows(rows, |r| r.topics))
}

/// Fits `base` once and reports metrics for each keyword count, taking the
/// top-K words of the same fitted topics.
pub fn sweep_keywords(
    tc: &TokenizedCorpus,
    base: &TopicModelSpec,
    keyword_counts: &[usize],
    opts: &SweepOptions,
) -> Result<GridSweep> {
    if keyword_counts.is_empty() {
        return Err(Error::InvalidArgument("empty K grid".into()));
    }
    let m = build_matrix(tc)?;
    if let Some(&k) = keyword_counts.iter().find(|&&k| k == 0 || k > m.n_terms) {
        return Err(Error::InvalidArgument(format!("K = {k} outside 1..={}", m.n_terms)));
    }
    let fitted = fit(&m, base)?;
    let rows = map_grid(keyword_counts, |&k| {
        let mut r = fitted.clone();
        r.keywords = keywords_from_phi(&r.phi, &m.vocabulary, k);
        r.spec.keywords = k;
        row_for(&r, tc, opts)
    })?;
    Ok(GridSweep::from_rows(rows, |r| r.keywords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::PlantedTopics;
    use crate::topics::ModelFamily;

    #[test]
    fn kappa_examples() {
        let a = [1, 2, 3, 1, 2];
        assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
        // 100 items, 40/10/10/40 table: p_o = 0.8, p_e = 0.5
        let mut r1 = Vec::new();
        let mut r2 = Vec::new();
        for (x, y, n) in [(0, 0, 40), (0, 1, 10), (1, 0, 10), (1, 1, 40)] {
            r1.extend(std::iter::repeat_n(x, n));
            r2.extend(std::iter::repeat_n(y, n));
        }
        assert!((cohen_kappa(&r1, &r2).unwrap() - 0.6).abs() < 1e-15);
        let balanced = [0, 1, 0, 1, 0, 1];
        assert_eq!(cohen_kappa(&balanced, &[0; 6]).unwrap(), 0.0);
        assert_eq!(cohen_kappa(&[5; 4], &[5; 4]).unwrap(), 1.0);
        assert!(cohen_kappa(&[1, 2], &[1]).is_err());
        assert!(cohen_kappa::<u8>(&[], &[]).is_err());
    }

    fn qs(topic: usize, rater: &str, acc: u8, useful: u8) -> QualScore {
        QualScore {
            topic_id: topic,
            rater_id: rater.into(),
            accuracy: acc,
            usefulness: useful,
        }
    }

    fn raters(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn q_examples() {
        let all3: Vec<_> = (0..5).flat_map(|t| [qs(t, "a", 3, 3), qs(t, "b", 3, 3)]).collect();
        let ab = raters(&["a", "b"]);
        assert_eq!(qualitative_aggregate(&all3, &ab, QualityForm::Proportion).unwrap().q, 2.0);
        assert_eq!(qualitative_aggregate(&all3, &ab, QualityForm::RawMean).unwrap().q, 6.0);
        let all1: Vec<_> = (0..5).flat_map(|t| [qs(t, "a", 1, 1), qs(t, "b", 1, 1)]).collect();
        assert_eq!(qualitative_aggregate(&all1, &ab, QualityForm::Proportion).unwrap().q, 0.0);

        let mut mixed = Vec::new();
        for t in 0..10 {
            mixed.push(qs(t, "a", if t < 8 { 2 } else { 1 }, if t < 6 { 3 } else { 1 }));
            mixed.push(qs(t, "b", 2, 2));
        }
        let rep = qualitative_aggregate(&mixed, &ab, QualityForm::Proportion).unwrap();
        assert!((rep.q - 1.7).abs() < 1e-15);
        assert_eq!(rep.per_rater["a"], RaterProportions { accuracy: 0.8, usefulness: 0.6 });
    }

    #[test]
    fn q_requires_every_cell() {
        let s = vec![qs(0, "a", 2, 2), qs(1, "a", 2, 2), qs(0, "b", 2, 2)];
        let out = qualitative_aggregate(&s, &raters(&["a", "b"]), QualityForm::Proportion);
        assert!(matches!(out, Err(Error::MissingScore { topic_id: 1, .. })));
        let bad = vec![qs(0, "a", 4, 2)];
        assert!(qualitative_aggregate(&bad, &raters(&["a"]), QualityForm::Proportion).is_err());
    }

    #[test]
    fn rater_kappa_uses_pairs() {
        let s = vec![qs(0, "a", 2, 2), qs(1, "a", 3, 1), qs(0, "b", 2, 2), qs(1, "b", 3, 1)];
        assert_eq!(rater_kappa(&s, "a", "b").unwrap(), 1.0);
        let s2 = vec![qs(0, "a", 2, 2), qs(0, "b", 2, 2), qs(1, "b", 1, 1)];
        assert!(rater_kappa(&s2, "a", "b").is_err());
    }

    #[test]
    fn combined_examples() {
        for alpha in [0.0, 0.3, 1.0] {
            assert!((combined_score("m", 1.0, 1.0, 1.0, 2.0, alpha).unwrap().s - 1.0).abs() < 1e-15);
        }
        assert!((combined_score("m", 0.6, 0.9, 0.9, 0.3, 1.0).unwrap().s - 0.8).abs() < 1e-15);
        assert_eq!(combined_score("m", 0.6, 0.9, 0.9, 1.3, 0.0).unwrap().s, 0.65);
        assert!(combined_score("m", 0.5, 0.5, 0.5, 1.0, 1.1).is_err());
        assert!(combined_score("m", 0.5, 0.5, 0.5, 2.5, 0.5).is_err());
    }

    #[test]
    fn csv_scores() {
        let text = "topic_id,rater_id,accuracy,usefulness\n0, r1, 3, 2\n1,r1,1,1\n";
        let s = read_scores_csv(text.as_bytes()).unwrap();
        assert_eq!(s[0], qs(0, "r1", 3, 2));
        assert!(read_scores_csv("topic_id,rater_id,accuracy,usefulness\n0,r,0,2\n".as_bytes()).is_err());
    }

    #[test]
    fn alpha_sweep_grid_and_dominance() {
        let models = vec![
            ModelMetrics {
                model: "best".into(),
                coherence: 0.3,
                coverage: 1.0,
                diversity: 0.9,
                q: 1.8,
            },
            ModelMetrics {
                model: "worse".into(),
                coherence: 0.1,
                coverage: 0.9,
                diversity: 0.7,
                q: 1.2,
            },
        ];
        let sweep = sweep_alpha(&models, &alpha_grid()).unwrap();
        assert_eq!(sweep.rows.len(), 20);
        assert_eq!(sweep.best.len(), 10);
        assert!(sweep.best.iter().all(|b| b.models == vec!["best".to_string()]));
    }

    #[test]
    fn alpha_sweep_reports_ties() {
        let m = ModelMetrics {
            model: "x".into(),
            coherence: 0.2,
            coverage: 0.5,
            diversity: 0.5,
            q: 1.0,
        };
        let twin = ModelMetrics { model: "y".into(), ..m.clone() };
        let sweep = sweep_alpha(&[m, twin], &[0.1]).unwrap();
        assert_eq!(sweep.best[0].models, vec!["x", "y"]);
    }

    #[test]
    fn coherence_scaling() {
        assert_eq!(scale_coherence(&[-0.2, 0.0, 0.2]), vec![0.0, 0.5, 1.0]);
        assert_eq!(scale_coherence(&[0.4]), vec![1.0]);
    }

    #[test]
    fn keyword_sweep_reuses_one_fit() {
        let (tc, _) = PlantedTopics {
            docs: 60,
            ..Default::default()
        }
        .generate(3)
        .unwrap();
        let spec = TopicModelSpec::new(ModelFamily::Lda, 4, 5).with_iterations(50);
        let s = sweep_keywords(&tc, &spec, &[5, 10, 15], &SweepOptions::default()).unwrap();
        assert_eq!(s.rows.iter().map(|r| r.keywords).collect::<Vec<_>>(), vec![5, 10, 15]);
        assert!(!s.argmax.is_empty());
        assert!(sweep_keywords(&tc, &spec, &[0], &SweepOptions::default()).is_err());
    }
}
