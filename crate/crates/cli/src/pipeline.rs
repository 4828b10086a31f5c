//! Stage execution, resumable runs and the output-directory lock.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use htmodel::corpus::{self, Corpus};
use htmodel::evaluation::{self, ModelMetrics, QualityForm, SweepOptions};
use htmodel::impact::{self, CategoryScheme, MonthIndex};
use htmodel::labeling::{self, LabelProvider, LabelRequest, MockProvider, RequestOptions, TopicLabel};
use htmodel::merging::{self, EmbeddingProvider, MergedTopicSet, StubEmbedder};
use htmodel::metrics;
use htmodel::preprocess;
use htmodel::provider::{ResponseCache, RetryPolicy};
use htmodel::topics::{self, ModelFamily, TopicModelResult};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::artifacts::*;
use crate::config::{EmbedBackend, LabelBackend, PipelineConfig};
use crate::error::{CliError, CliResult};

const STATE_FILE: &str = "state.json";
const LOCK_FILE: &str = ".lock";
const CACHE_DIR: &str = "cache";

/// What a stage did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub skipped: bool,
    pub artifact: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct StageRecord {
    inputs: String,
    output: String,
}

/// Per-stage fingerprints of the inputs that produced each artifact.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct RunState {
    stages: BTreeMap<String, StageRecord>,
}

impl RunState {
    fn load(path: &Path) -> Self {
        std::fs::read(path)
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default()
    }

    fn save(&self, path: &Path) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }
}

/// Exclusive hold on an output directory, released on drop.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> CliResult<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(path)),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    out: PathBuf,
    config_hash: String,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        let out = cfg.output_path();
        let config_hash = cfg.config_hash();
        Pipeline { cfg, out, config_hash }
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out = dir.into();
        self
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn artifact_path(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.artifact())
    }

    fn prepare(&self) -> CliResult<DirLock> {
        std::fs::create_dir_all(self.out.join(CACHE_DIR)).map_err(|e| CliError::io(&self.out, e))?;
        DirLock::acquire(&self.out)
    }

    /// Runs one stage unconditionally.
    pub fn run_stage(&self, stage: Stage) -> CliResult<StageOutcome> {
        let _lock = self.prepare()?;
        let state_path = self.out.join(STATE_FILE);
        let mut state = RunState::load(&state_path);
        let outcome = self.execute(stage, &mut state, false)?;
        state.save(&state_path)?;
        Ok(outcome)
    }

    /// Runs every stage in order, skipping those whose inputs and output
    /// are unchanged since they last ran.
    pub fn run_all(&self) -> CliResult<Vec<StageOutcome>> {
        self.preflight_providers()?;
        let _lock = self.prepare()?;
        let state_path = self.out.join(STATE_FILE);
        let mut state = RunState::load(&state_path);
        let mut outcomes = Vec::with_capacity(Stage::ALL.len());
        for stage in Stage::ALL {
            outcomes.push(self.execute(stage, &mut state, true)?);
            state.save(&state_path)?;
        }
        Ok(outcomes)
    }

    /// Fails on a misconfigured remote provider before any stage runs.
    fn preflight_providers(&self) -> CliResult<()> {
        if self.cfg.labeling.provider == LabelBackend::Chat {
            let r = &self.cfg.labeling.remote;
            r.validate()?;
            r.api_key()?;
        }
        if self.cfg.embedding.provider == EmbedBackend::Remote {
            let r = &self.cfg.embedding.remote;
            r.validate()?;
            r.api_key()?;
        }
        Ok(())
    }

    fn need(&self, stage: Stage) -> CliResult<PathBuf> {
        let path = self.artifact_path(stage);
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::MissingArtifact {
                artifact: stage.artifact(),
                stage: stage.name(),
                path,
            })
        }
    }

    fn external_inputs(&self, stage: Stage) -> Vec<PathBuf> {
        let c = &self.cfg;
        match stage {
            Stage::Ingest => c.corpus.inputs.iter().map(|p| c.resolve(p)).collect(),
            Stage::Preprocess => c.corpus.stopwords.iter().chain(&c.corpus.domain_stopwords).map(|p| c.resolve(p)).collect(),
            Stage::Impact => c.impact.scheme.iter().map(|p| c.resolve(p)).collect(),
            Stage::Score => c.evaluation.ratings.values().map(|p| c.resolve(p)).collect(),
            _ => Vec::new(),
        }
    }

    fn fingerprint(&self, stage: Stage) -> CliResult<String> {
        let mut lines = vec![format!("config {}", self.config_hash), format!("stage {stage}")];
        for up in stage.upstream() {
            lines.push(format!("{} {}", up.artifact(), sha256_file(&self.need(*up)?)?));
        }
        for p in self.external_inputs(stage) {
            lines.push(format!("{} {}", p.display(), sha256_file(&p)?));
        }
        Ok(htmodel::sha256_hex(lines.join("\n").as_bytes()))
    }

    fn execute(&self, stage: Stage, state: &mut RunState, allow_skip: bool) -> CliResult<StageOutcome> {
        let inputs = self.fingerprint(stage)?;
        let path = self.artifact_path(stage);
        if allow_skip {
            if let Some(rec) = state.stages.get(stage.name()) {
                if rec.inputs == inputs && path.is_file() && sha256_file(&path)? == rec.output {
                    info!("{stage}: up to date, skipped ({}) sha256={}", stage.artifact(), rec.output);
                    return Ok(StageOutcome {
                        stage,
                        skipped: true,
                        artifact: path,
                        sha256: rec.output.clone(),
                    });
                }
            }
        }
        self.warn_stale_inputs(stage);
        match stage {
            Stage::Ingest => self.ingest(&path)?,
            Stage::Preprocess => self.preprocess(&path)?,
            Stage::Fit => self.fit(&path)?,
            Stage::Metrics => self.metrics(&path)?,
            Stage::Label => self.label(&path)?,
            Stage::Merge => self.merge(&path)?,
            Stage::Assign => self.assign(&path)?,
            Stage::Impact => self.impact(&path)?,
            Stage::Score => self.score(&path)?,
            Stage::Sweep => self.sweep(&path)?,
            Stage::Report => self.report(&path)?,
        }
        let sha256 = sha256_file(&path)?;
        info!("{stage}: wrote {} sha256={sha256}", stage.artifact());
        state.stages.insert(
            stage.name().to_string(),
            StageRecord {
                inputs,
                output: sha256.clone(),
            },
        );
        Ok(StageOutcome {
            stage,
            skipped: false,
            artifact: path,
            sha256,
        })
    }

    /// Upstream artifacts made under a different config still get used, but
    /// the mismatch is logged.
    fn warn_stale_inputs(&self, stage: Stage) {
        for up in stage.upstream() {
            let path = self.artifact_path(*up);
            let found = match up {
                Stage::Ingest => corpus::load_snapshot(&path).ok().and_then(|c| c.provenance.get("config_hash").cloned()),
                Stage::Assign | Stage::Impact | Stage::Score | Stage::Sweep => csv_config_hash(&path).ok().flatten(),
                _ => read_json::<serde_json::Value>(&path).ok().map(|e| e.config_hash),
            };
            if found.as_deref() != Some(self.config_hash.as_str()) {
                warn!("{stage}: {} was produced by a different config; rerun {up} to refresh it", up.artifact());
            }
        }
    }

    fn load_tokenized(&self) -> CliResult<TokenizedArtifact> {
        Ok(read_json::<TokenizedArtifact>(&self.need(Stage::Preprocess)?)?.data)
    }

    fn load_topics(&self) -> CliResult<TopicModelResult> {
        Ok(read_json::<TopicsArtifact>(&self.need(Stage::Fit)?)?.data.result)
    }

    fn load_labels(&self) -> CliResult<LabelsArtifact> {
        Ok(read_json::<LabelsArtifact>(&self.need(Stage::Label)?)?.data)
    }

    fn load_merged(&self) -> CliResult<MergedTopicSet> {
        let path = self.need(Stage::Merge)?;
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_slice::<MergedArtifact>(&bytes)?.into_set())
    }

    fn ingest(&self, out: &Path) -> CliResult<()> {
        let role = self.cfg.corpus.role;
        let mut docs = Vec::new();
        let (mut lines, mut skipped) = (0usize, 0usize);
        for p in &self.cfg.corpus.inputs {
            let full = self.cfg.resolve(p);
            let part = match p.extension().and_then(|e| e.to_str()) {
                Some("csv") => corpus::ingest_csv(&full, Some(role))?,
                _ => corpus::ingest_jsonl(&full, Some(role))?,
            };
            let num = |k: &str| part.provenance.get(k).and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
            lines += num("lines");
            skipped += num("skipped");
            docs.extend(part.documents);
        }
        let mut c = Corpus::new(docs, role.into())?;
        let sources: Vec<String> = self.cfg.corpus.inputs.iter().map(|p| p.display().to_string()).collect();
        c.provenance.insert("source".into(), sources.join(";"));
        c.provenance.insert("lines".into(), lines.to_string());
        c.provenance.insert("skipped".into(), skipped.to_string());
        c.provenance.insert("config_hash".into(), self.config_hash.clone());
        if skipped > 0 {
            warn!("ingest: skipped {skipped} malformed records");
        }
        write_atomic_with(out, |tmp| Ok(corpus::save_snapshot(&c, tmp)?))
    }

    fn preprocess(&self, out: &Path) -> CliResult<()> {
        let c = corpus::load_snapshot(self.need(Stage::Ingest)?)?;
        let (tc, report) = preprocess::preprocess_corpus(&c, &self.cfg.preprocess_options()?);
        if tc.n_docs() == 0 {
            return Err(htmodel::Error::EmptyCorpus.into());
        }
        info!(
            "preprocess: {} ingested, {} non-English, {} empty, {} retained",
            report.ingested, report.non_english, report.empty_after_clean, report.retained
        );
        write_json(
            out,
            &self.config_hash,
            &TokenizedArtifact {
                filter_report: report,
                corpus: tc,
            },
        )
    }

    fn fit(&self, out: &Path) -> CliResult<()> {
        let tc = self.load_tokenized()?.corpus;
        let m = topics::build_matrix(&tc)?;
        let result = topics::fit(&m, &self.cfg.spec(self.cfg.model.family))?;
        write_json(out, &self.config_hash, &TopicsArtifact { result })
    }

    fn metrics(&self, out: &Path) -> CliResult<()> {
        let tc = self.load_tokenized()?.corpus;
        let r = self.load_topics()?;
        let report = metrics::evaluate(&r, &tc, &self.cfg.coherence_options(), self.cfg.metrics.tau)?;
        for w in &report.warnings {
            warn!("metrics: {w}");
        }
        write_json(out, &self.config_hash, &report)
    }

    fn label_provider(&self) -> CliResult<Box<dyn LabelProvider>> {
        Ok(match self.cfg.labeling.provider {
            LabelBackend::Mock => Box::new(MockProvider),
            LabelBackend::Chat => {
                let r = &self.cfg.labeling.remote;
                r.validate()?;
                Box::new(labeling::ChatProvider::new(r)?)
            }
        })
    }

    fn label(&self, out: &Path) -> CliResult<()> {
        let r = self.load_topics()?;
        let provider = self.label_provider()?;
        let t = r.n_topics();
        let reqs: Vec<LabelRequest> = r
            .keywords
            .iter()
            .enumerate()
            .map(|(i, kw)| LabelRequest::new(i, kw.clone(), self.cfg.corpus.role, t))
            .collect::<Result<_, _>>()?;
        let remote = &self.cfg.labeling.remote;
        let retry = match self.cfg.labeling.provider {
            LabelBackend::Mock => RetryPolicy::no_delay(1),
            LabelBackend::Chat => PipelineConfig::retry_for(remote),
        };
        let cache = ResponseCache::open(self.out.join(CACHE_DIR).join("labels.jsonl"))?;
        let opts = RequestOptions {
            max_parallel: remote.max_parallel.max(1),
            retry,
        };
        let run = labeling::request_labels(provider.as_ref(), &reqs, &cache, &opts)?;
        info!(
            "label: {} labels, {} failures, {} provider calls",
            run.labels.len(),
            run.failures.len(),
            run.provider_calls
        );
        let mut by_topic: BTreeMap<usize, TopicLabel> = run.labels.into_iter().map(|l| (l.topic_id, l)).collect();
        for f in &run.failures {
            warn!("label: topic {} failed ({}); using its keywords", f.topic_id, f.message);
            let kw = &r.keywords[f.topic_id];
            by_topic.insert(
                f.topic_id,
                TopicLabel {
                    topic_id: f.topic_id,
                    label: kw.iter().take(3).cloned().collect::<Vec<_>>().join(" / "),
                    provider_id: FALLBACK_PROVIDER.into(),
                    prompt_hash: f.prompt_hash.clone(),
                    raw_response: String::new(),
                },
            );
        }
        let artifact = LabelsArtifact {
            provider_id: provider.id().to_string(),
            model: provider.model().to_string(),
            labels: by_topic.into_values().collect(),
            failures: run.failures,
        };
        write_json(out, &self.config_hash, &artifact)
    }

    fn embedder(&self) -> CliResult<Box<dyn EmbeddingProvider>> {
        let e = &self.cfg.embedding;
        Ok(match e.provider {
            EmbedBackend::Stub => Box::new(StubEmbedder {
                dimension: e.dimension.unwrap_or(StubEmbedder::default().dimension),
                seed: self.cfg.seed,
            }),
            EmbedBackend::Remote => {
                e.remote.validate()?;
                Box::new(merging::RemoteEmbedder::new(&e.remote, e.dimension)?)
            }
        })
    }

    fn merge(&self, out: &Path) -> CliResult<()> {
        let r = self.load_topics()?;
        let labels = self.load_labels()?.labels;
        let embedder = self.embedder()?;
        let retry = match self.cfg.embedding.provider {
            EmbedBackend::Stub => RetryPolicy::no_delay(1),
            EmbedBackend::Remote => PipelineConfig::retry_for(&self.cfg.embedding.remote),
        };
        let cache = ResponseCache::open(self.out.join(CACHE_DIR).join("embeddings.jsonl"))?;
        let emb = merging::embed_labels(embedder.as_ref(), &labels, &cache, &retry)?;
        let counts = impact::dominant_counts(&r);
        let merged = merging::merge(&labels, &emb, &counts, self.cfg.merge.threshold)?;
        info!("merge: {} topics into {} clusters", labels.len(), merged.n_clusters());
        write_json_raw(out, &MergedArtifact::new(&self.config_hash, merged))
    }

    fn assign(&self, out: &Path) -> CliResult<()> {
        let tc = self.load_tokenized()?.corpus;
        let r = self.load_topics()?;
        let merged = self.load_merged()?;
        check_same_docs(&r, tc.n_docs())?;
        let mut bytes = csv_preamble(&self.config_hash, &[]);
        {
            let mut w = csv::Writer::from_writer(&mut bytes);
            w.write_record(["doc_id", "month", "topic", "weight", "cluster", "cluster_label"])?;
            for (d, id) in tc.doc_ids.iter().enumerate() {
                let row = r.theta.row(d);
                let t = topics::dominant_topic(row);
                let c = merged
                    .cluster_of(t)
                    .ok_or_else(|| htmodel::Error::InvalidArgument(format!("topic {t} missing from merged set")))?;
                w.write_record([
                    id.clone(),
                    tc.months[d].to_string(),
                    t.to_string(),
                    row[t].to_string(),
                    c.to_string(),
                    merged.clusters[c].label.clone(),
                ])?;
            }
            w.flush().map_err(|e| CliError::io(out, e))?;
        }
        write_atomic(out, &bytes)
    }

    fn scheme(&self) -> CliResult<CategoryScheme> {
        match &self.cfg.impact.scheme {
            Some(p) => Ok(CategoryScheme::load(self.cfg.resolve(p))?),
            None => Ok(CategoryScheme::from_ids(BTreeMap::new(), false)),
        }
    }

    fn impact(&self, out: &Path) -> CliResult<()> {
        let tc = self.load_tokenized()?.corpus;
        let r = self.load_topics()?;
        let merged = self.load_merged()?;
        check_same_docs(&r, tc.n_docs())?;
        let series = impact::build_series(&r, &merged, &self.scheme()?, &MonthIndex::from_corpus(&tc))?;
        let mut bytes = csv_preamble(&self.config_hash, &[]);
        impact::write_csv(&series, &mut bytes)?;
        write_atomic(out, &bytes)
    }

    fn score(&self, out: &Path) -> CliResult<()> {
        let tc = self.load_tokenized()?.corpus;
        let configured = self.load_topics()?;
        let copts = self.cfg.coherence_options();
        let form = self.cfg.evaluation.quality_form;
        let families = &self.cfg.evaluation.compare;
        if families.is_empty() {
            return Err(CliError::Config("evaluation.compare is empty; nothing to score".into()));
        }
        let m = topics::build_matrix(&tc)?;
        let mut models = Vec::with_capacity(families.len());
        let mut kappas = Vec::with_capacity(families.len());
        for &family in families {
            let r = if family == configured.spec.family {
                configured.clone()
            } else {
                topics::fit(&m, &self.cfg.spec(family))?
            };
            let mr = metrics::evaluate(&r, &tc, &copts, self.cfg.metrics.tau)?;
            let path = self.cfg.resolve(&self.cfg.evaluation.ratings[&family.to_string()]);
            let file = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
            let scores = evaluation::read_scores_csv(file)?;
            let raters: BTreeSet<String> = scores.iter().map(|s| s.rater_id.clone()).collect();
            let q = evaluation::qualitative_aggregate(&scores, &raters, form)?.q;
            kappas.push(mean_pairwise_kappa(&scores, &raters)?);
            models.push(ModelMetrics {
                model: family.to_string(),
                coherence: mr.coherence,
                coverage: mr.coverage,
                diversity: mr.diversity,
                q,
            });
        }
        let mut alphas = evaluation::alpha_grid();
        if !alphas.iter().any(|a| (a - self.cfg.evaluation.alpha).abs() < 1e-12) {
            alphas.push(self.cfg.evaluation.alpha);
            alphas.sort_by(f64::total_cmp);
        }
        let scaled = evaluation::scale_coherence(&models.iter().map(|m| m.coherence).collect::<Vec<_>>());
        let sweep = match form {
            QualityForm::Proportion => Some(evaluation::sweep_alpha(&models, &alphas)?),
            QualityForm::RawMean => {
                warn!("score: raw-mean Q lies outside [0, 2], so S is left empty");
                None
            }
        };
        let form_name = serde_json::to_value(form)?.as_str().unwrap_or_default().to_string();
        let mut bytes = csv_preamble(
            &self.config_hash,
            &[
                ("coherence_scaling", "min-max across compared models; all equal gives 1".into()),
                ("quality_form", form_name),
                ("configured_alpha", self.cfg.evaluation.alpha.to_string()),
            ],
        );
        {
            let mut w = csv::Writer::from_writer(&mut bytes);
            w.write_record([
                "model",
                "alpha",
                "coherence_raw",
                "coherence_scaled",
                "coverage",
                "diversity",
                "q",
                "kappa",
                "s",
                "best",
            ])?;
            for (ai, &alpha) in alphas.iter().enumerate() {
                for (mi, m) in models.iter().enumerate() {
                    let (s, best) = match &sweep {
                        Some(sw) => {
                            let row = &sw.rows[ai * models.len() + mi];
                            (row.s.to_string(), sw.best[ai].models.contains(&m.model).to_string())
                        }
                        None => (String::new(), String::new()),
                    };
                    w.write_record([
                        m.model.clone(),
                        alpha.to_string(),
                        m.coherence.to_string(),
                        scaled[mi].to_string(),
                        m.coverage.to_string(),
                        m.diversity.to_string(),
                        m.q.to_string(),
                        kappas[mi].map(|k| k.to_string()).unwrap_or_default(),
                        s,
                        best,
                    ])?;
                }
            }
            w.flush().map_err(|e| CliError::io(out, e))?;
        }
        write_atomic(out, &bytes)
    }

    fn sweep(&self, out: &Path) -> CliResult<()> {
        let tc = self.load_tokenized()?.corpus;
        let family = self.cfg.sweep.family.unwrap_or(self.cfg.model.family);
        let base = self.cfg.spec(family);
        let opts = SweepOptions {
            coherence: self.cfg.coherence_options(),
            tau: self.cfg.metrics.tau,
        };
        let mut bytes = csv_preamble(&self.config_hash, &[]);
        {
            let mut w = csv::Writer::from_writer(&mut bytes);
            w.write_record(["axis", "family", "T", "K", "coherence", "coverage", "diversity", "argmax"])?;
            let mut emit = |axis: &str, sweep: &evaluation::GridSweep, key: fn(&evaluation::GridRow) -> usize| -> CliResult<()> {
                for r in &sweep.rows {
                    w.write_record([
                        axis.to_string(),
                        r.family.clone(),
                        r.topics.to_string(),
                        r.keywords.to_string(),
                        r.coherence.to_string(),
                        r.coverage.to_string(),
                        r.diversity.to_string(),
                        sweep.argmax.contains(&key(r)).to_string(),
                    ])?;
                }
                Ok(())
            };
            if !self.cfg.sweep.topics.is_empty() {
                let s = evaluation::sweep_topics(&tc, &base, &self.cfg.sweep.topics, &opts)?;
                info!("sweep: coherence argmax over T at {:?}", s.argmax);
                emit("T", &s, |r| r.topics)?;
            }
            if !self.cfg.sweep.keywords.is_empty() {
                let s = evaluation::sweep_keywords(&tc, &base, &self.cfg.sweep.keywords, &opts)?;
                info!("sweep: coherence argmax over K at {:?}", s.argmax);
                emit("K", &s, |r| r.keywords)?;
            }
            w.flush().map_err(|e| CliError::io(out, e))?;
        }
        write_atomic(out, &bytes)
    }

    fn report(&self, out: &Path) -> CliResult<()> {
        let tok = self.load_tokenized()?;
        let r = self.load_topics()?;
        let metrics: MetricsArtifact = read_json(&self.need(Stage::Metrics)?)?.data;
        let labels = self.load_labels()?;
        let merged = self.load_merged()?;
        let scores: Vec<ScoreRow> = read_csv(&self.need(Stage::Score)?)?;
        let sweep: Vec<SweepRow> = read_csv(&self.need(Stage::Sweep)?)?;

        let mut clusters = Vec::with_capacity(merged.n_clusters());
        for c in &merged.clusters {
            let members: BTreeSet<usize> = c.members.iter().copied().collect();
            clusters.push(ClusterSummary {
                id: c.id,
                label: c.label.clone(),
                members: c.members.clone(),
                doc_count: c.doc_count,
                popularity: impact::popularity(&r, &members)?,
            });
        }
        clusters.sort_by(|a, b| b.popularity.total_cmp(&a.popularity).then(a.id.cmp(&b.id)));

        let alpha = self.cfg.evaluation.alpha;
        let at_alpha: Vec<ScoreRow> = scores.iter().filter(|s| (s.alpha - alpha).abs() < 1e-12).cloned().collect();
        let best_models = at_alpha.iter().filter(|s| s.best == Some(true)).map(|s| s.model.clone()).collect();
        let argmax = |axis: &str, key: fn(&SweepRow) -> usize| -> Vec<usize> {
            sweep.iter().filter(|s| s.axis == axis && s.argmax).map(key).collect()
        };

        let mut artifacts = BTreeMap::new();
        for up in Stage::Report.upstream().iter().chain([&Stage::Ingest]) {
            artifacts.insert(up.artifact().to_string(), sha256_file(&self.need(*up)?)?);
        }
        let report = Report {
            corpus: CorpusSummary {
                role: self.cfg.corpus.role.to_string(),
                filter_report: tok.filter_report,
                documents: tok.corpus.n_docs(),
                terms: tok.corpus.n_terms(),
                months: MonthIndex::from_corpus(&tok.corpus)
                    .dense_range()
                    .into_iter()
                    .map(|m| m.to_string())
                    .collect(),
            },
            model: ModelSummary {
                family: r.spec.family,
                topics: r.n_topics(),
                keywords: r.spec.keywords,
                seed: r.spec.seed,
            },
            metrics,
            labeling: LabelSummary {
                provider_id: labels.provider_id,
                model: labels.model,
                labeled: labels.labels.len() - labels.failures.len(),
                failed: labels.failures.len(),
            },
            merging: MergeSummary {
                threshold: merged.threshold,
                topics: merged.mapping.len(),
                clusters,
            },
            evaluation: EvalSummary {
                alpha,
                quality_form: self.cfg.evaluation.quality_form,
                best_models,
                scores: at_alpha,
            },
            sweep: SweepSummary {
                topics_argmax: argmax("T", |s| s.t),
                keywords_argmax: argmax("K", |s| s.k),
            },
            artifacts,
        };
        write_json(out, &self.config_hash, &report)
    }
}

fn check_same_docs(r: &TopicModelResult, n_docs: usize) -> CliResult<()> {
    if r.n_docs() != n_docs {
        return Err(htmodel::Error::DimensionMismatch {
            expected: n_docs,
            found: r.n_docs(),
        }
        .into());
    }
    Ok(())
}

/// Mean Cohen's kappa over all rater pairs; `None` with fewer than two
/// raters.
fn mean_pairwise_kappa(scores: &[evaluation::QualScore], raters: &BTreeSet<String>) -> CliResult<Option<f64>> {
    let raters: Vec<&String> = raters.iter().collect();
    let mut ks = Vec::new();
    for i in 0..raters.len() {
        for j in i + 1..raters.len() {
            ks.push(evaluation::rater_kappa(scores, raters[i], raters[j])?);
        }
    }
    Ok((!ks.is_empty()).then(|| ks.iter().sum::<f64>() / ks.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model: String,
    pub alpha: f64,
    pub coherence_raw: f64,
    pub coherence_scaled: f64,
    pub coverage: f64,
    pub diversity: f64,
    pub q: f64,
    pub kappa: Option<f64>,
    pub s: Option<f64>,
    pub best: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub family: String,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub coherence: f64,
    pub coverage: f64,
    pub diversity: f64,
    pub argmax: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub corpus: CorpusSummary,
    pub model: ModelSummary,
    pub metrics: MetricsArtifact,
    pub labeling: LabelSummary,
    pub merging: MergeSummary,
    pub evaluation: EvalSummary,
    pub sweep: SweepSummary,
    /// SHA-256 of every artifact the report was built from.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub role: String,
    pub filter_report: preprocess::FilterReport,
    pub documents: usize,
    pub terms: usize,
    pub months: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelSummary {
    pub family: ModelFamily,
    #[serde(rename = "T")]
    pub topics: usize,
    #[serde(rename = "K")]
    pub keywords: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelSummary {
    pub provider_id: String,
    pub model: String,
    pub labeled: usize,
    pub failed: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: usize,
    pub label: String,
    pub members: Vec<usize>,
    pub doc_count: usize,
    /// Share of documents whose dominant topic is in the cluster.
    pub popularity: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MergeSummary {
    pub threshold: f64,
    pub topics: usize,
    /// Most popular first.
    pub clusters: Vec<ClusterSummary>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub alpha: f64,
    pub quality_form: QualityForm,
    pub best_models: Vec<String>,
    pub scores: Vec<ScoreRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub topics_argmax: Vec<usize>,
    pub keywords_argmax: Vec<usize>,
}
