//! The pipeline configuration file.
//!
//! One TOML file drives every stage. Relative paths are resolved against the
//! directory holding the file. The API key of a remote provider is never
//! part of the file; only the name of the environment variable holding it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use htmodel::corpus::Role;
use htmodel::evaluation::QualityForm;
use htmodel::metrics::{CoherenceMeasure, CoherenceOptions};
use htmodel::preprocess::{PreprocessOptions, StopwordConfig};
use htmodel::provider::{ProviderConfig, RetryPolicy};
use htmodel::topics::{ModelFamily, TopicModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_USER_TOPICS: usize = 50;
pub const DEFAULT_DEVELOPER_TOPICS: usize = 40;
pub const DEFAULT_KEYWORDS: usize = 20;
pub const DEFAULT_MERGE_THRESHOLD: f64 = htmodel::merging::DEFAULT_THRESHOLD;
pub const DEFAULT_ALPHA: f64 = htmodel::evaluation::DEFAULT_ALPHA;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub labeling: LabelingSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub merge: MergeSection,
    #[serde(default)]
    pub impact: ImpactSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub sweep: SweepSection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    /// JSONL or CSV files; the format is chosen by extension.
    pub inputs: Vec<PathBuf>,
    pub role: Role,
    /// General stopword list. Unset means the bundled English and VR lists.
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    /// Domain stopword list, only read together with `stopwords`.
    #[serde(default)]
    pub domain_stopwords: Option<PathBuf>,
    #[serde(default = "default_min_token_len")]
    pub min_token_len: usize,
    #[serde(default = "yes")]
    pub keep_only_english: bool,
}

fn default_min_token_len() -> usize {
    2
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub family: ModelFamily,
    /// Unset means 50 for user corpora and 40 for developer corpora.
    pub topics: Option<usize>,
    pub keywords: usize,
    pub iterations: usize,
    pub lda_alpha: Option<f64>,
    pub lda_beta: f64,
    pub tolerance: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let base = TopicModelSpec::new(ModelFamily::Lda, DEFAULT_USER_TOPICS, DEFAULT_KEYWORDS);
        ModelSection {
            family: ModelFamily::Lda,
            topics: None,
            keywords: DEFAULT_KEYWORDS,
            iterations: base.iterations,
            lda_alpha: None,
            lda_beta: base.lda_beta,
            tolerance: base.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub measure: CoherenceMeasure,
    /// Mean over keyword pairs (true) or their sum (false).
    pub normalized: bool,
    /// Coverage threshold; unset means `1 / T`.
    pub tau: Option<f64>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let c = CoherenceOptions::default();
        MetricsSection {
            measure: c.measure,
            normalized: c.normalized,
            tau: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelBackend {
    #[default]
    Mock,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelingSection {
    pub provider: LabelBackend,
    /// Used when `provider = "chat"`.
    pub remote: ProviderConfig,
}

impl Default for LabelingSection {
    fn default() -> Self {
        LabelingSection {
            provider: LabelBackend::Mock,
            remote: ProviderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedBackend {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub provider: EmbedBackend,
    /// Required vector length. The stub embedder uses 64 when unset.
    pub dimension: Option<usize>,
    /// Used when `provider = "remote"`.
    pub remote: ProviderConfig,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            provider: EmbedBackend::Stub,
            dimension: None,
            remote: ProviderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeSection {
    pub threshold: f64,
}

impl Default for MergeSection {
    fn default() -> Self {
        MergeSection {
            threshold: DEFAULT_MERGE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpactSection {
    /// Category scheme JSON. Unset means topic-level series only.
    pub scheme: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub alpha: f64,
    pub quality_form: QualityForm,
    /// Model families entered into the combined score.
    pub compare: Vec<ModelFamily>,
    /// Rater CSV per compared family, keyed by family name.
    pub ratings: BTreeMap<String, PathBuf>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            alpha: DEFAULT_ALPHA,
            quality_form: QualityForm::default(),
            compare: vec![ModelFamily::Lda, ModelFamily::Nmf, ModelFamily::Lsa],
            ratings: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Family to sweep; unset means `model.family`.
    pub family: Option<ModelFamily>,
    pub topics: Vec<usize>,
    pub keywords: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            family: None,
            topics: vec![10, 20, 30, 40, 50],
            keywords: vec![5, 10, 15, 20],
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl PipelineConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    fn require_file(&self, what: &str, p: &Path) -> CliResult<()> {
        let full = self.resolve(p);
        if full.is_file() {
            Ok(())
        } else {
            Err(config_err(format!("{what} {} does not exist", full.display())))
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.corpus.inputs.is_empty() {
            return Err(config_err("corpus.inputs is empty"));
        }
        for p in &self.corpus.inputs {
            self.require_file("corpus input", p)?;
            match p.extension().and_then(|e| e.to_str()) {
                Some("jsonl" | "csv") => {}
                _ => return Err(config_err(format!("corpus input {} must end in .jsonl or .csv", p.display()))),
            }
        }
        match (&self.corpus.stopwords, &self.corpus.domain_stopwords) {
            (Some(s), d) => {
                self.require_file("stopword list", s)?;
                if let Some(d) = d {
                    self.require_file("domain stopword list", d)?;
                }
            }
            (None, Some(_)) => return Err(config_err("corpus.domain_stopwords needs corpus.stopwords")),
            (None, None) => {}
        }
        if self.model.family == ModelFamily::External {
            return Err(config_err("model.family must be lda, nmf or lsa"));
        }
        self.spec(self.model.family).validate().map_err(|e| config_err(e.to_string()))?;
        if let Some(tau) = self.metrics.tau {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(config_err(format!("metrics.tau {tau} outside (0, 1]")));
            }
        }
        let t = self.merge.threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(config_err(format!("merge.threshold {t} outside (0, 1]")));
        }
        let a = self.evaluation.alpha;
        if !(0.0..=1.0).contains(&a) {
            return Err(config_err(format!("evaluation.alpha {a} outside [0, 1]")));
        }
        if self.embedding.dimension == Some(0) {
            return Err(config_err("embedding.dimension must be positive"));
        }
        if let Some(s) = &self.impact.scheme {
            self.require_file("category scheme", s)?;
        }
        for f in &self.evaluation.compare {
            if *f == ModelFamily::External {
                return Err(config_err("evaluation.compare accepts lda, nmf and lsa"));
            }
            let path = self
                .evaluation
                .ratings
                .get(&f.to_string())
                .ok_or_else(|| config_err(format!("evaluation.ratings has no entry for {f}")))?;
            self.require_file("ratings file", path)?;
        }
        if let Some(k) = self.sweep.keywords.iter().find(|&&k| k == 0) {
            return Err(config_err(format!("sweep.keywords contains {k}")));
        }
        if self.sweep.topics.iter().any(|&t| t < 2) {
            return Err(config_err("sweep.topics values must be >= 2"));
        }
        Ok(())
    }

    pub fn topics(&self) -> usize {
        self.model.topics.unwrap_or(match self.corpus.role {
            Role::User => DEFAULT_USER_TOPICS,
            Role::Developer => DEFAULT_DEVELOPER_TOPICS,
        })
    }

    pub fn spec(&self, family: ModelFamily) -> TopicModelSpec {
        let m = &self.model;
        let mut spec = TopicModelSpec::new(family, self.topics(), m.keywords)
            .with_seed(self.seed)
            .with_iterations(m.iterations)
            .with_tolerance(m.tolerance);
        spec.lda_alpha = m.lda_alpha;
        spec.lda_beta = m.lda_beta;
        spec
    }

    pub fn coherence_options(&self) -> CoherenceOptions {
        CoherenceOptions {
            measure: self.metrics.measure,
            normalized: self.metrics.normalized,
            ..CoherenceOptions::default()
        }
    }

    pub fn preprocess_options(&self) -> CliResult<PreprocessOptions> {
        let stopwords = match &self.corpus.stopwords {
            None => StopwordConfig::bundled(),
            Some(s) => {
                let d = self.corpus.domain_stopwords.as_ref().map(|d| self.resolve(d));
                StopwordConfig::from_files(&self.resolve(s), d.as_deref())?
            }
        };
        Ok(PreprocessOptions {
            stopwords,
            min_token_len: self.corpus.min_token_len,
            keep_only_english: self.corpus.keep_only_english,
        })
    }

    /// Retry policy for a remote provider: the first attempt plus
    /// `max_retries` more.
    pub fn retry_for(cfg: &ProviderConfig) -> RetryPolicy {
        RetryPolicy {
            max_attempts: cfg.max_retries + 1,
            ..RetryPolicy::default()
        }
    }

    /// Hash of the configuration that produced an artifact. The output
    /// directory is left out so the same run written elsewhere hashes the
    /// same.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        htmodel::sha256_hex(v.to_string().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    fn minimal(dir: &Path) -> String {
        write(dir, "in.jsonl", "");
        "corpus = { inputs = [\"in.jsonl\"], role = \"user\" }\nevaluation.compare = []\n".to_string()
    }

    #[test]
    fn defaults_follow_role() {
        let d = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::parse(&minimal(d.path()), d.path()).unwrap();
        assert_eq!(cfg.topics(), 50);
        assert_eq!(cfg.model.keywords, 20);
        assert_eq!(cfg.merge.threshold, 0.8);
        assert_eq!(cfg.evaluation.alpha, 0.1);
        let dev = minimal(d.path()).replace("\"user\"", "\"developer\"");
        assert_eq!(PipelineConfig::parse(&dev, d.path()).unwrap().topics(), 40);
    }

    #[test]
    fn rejects_bad_values() {
        let d = tempfile::tempdir().unwrap();
        let base = minimal(d.path());
        for extra in ["merge.threshold = 0.0", "merge.threshold = 1.5", "evaluation.alpha = -0.1", "metrics.tau = 2.0", "bogus = 1"] {
            let text = format!("{extra}\n{base}");
            let err = PipelineConfig::parse(&text, d.path()).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{extra}: {err}");
        }
        let missing = base.replace("in.jsonl", "nope.jsonl");
        assert!(matches!(PipelineConfig::parse(&missing, d.path()), Err(CliError::Config(_))));
    }

    #[test]
    fn compare_needs_ratings() {
        let d = tempfile::tempdir().unwrap();
        let text = minimal(d.path()).replace("evaluation.compare = []", "evaluation.compare = [\"lda\"]");
        let err = PipelineConfig::parse(&text, d.path()).unwrap_err();
        assert!(err.to_string().contains("ratings"), "{err}");
        write(d.path(), "r.csv", "topic_id,rater_id,accuracy,usefulness\n");
        let ok = format!("{text}evaluation.ratings.lda = \"r.csv\"\n");
        PipelineConfig::parse(&ok, d.path()).unwrap();
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let d = tempfile::tempdir().unwrap();
        let base = minimal(d.path());
        let a = PipelineConfig::parse(&base, d.path()).unwrap();
        let b = PipelineConfig::parse(&format!("output_dir = \"elsewhere\"\n{base}"), d.path()).unwrap();
        let c = PipelineConfig::parse(&format!("seed = 7\n{base}"), d.path()).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
    }
}
