//! Artifact files: names, envelopes and atomic writes.
//!
//! JSON artifacts carry a top-level `config_hash` field. CSV artifacts start
//! with `#` comment lines, the first of which is `# config_hash: <hex>`; read
//! them with a CSV reader that skips `#` comments. The corpus snapshot keeps
//! the hash in its header's provenance map.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use htmodel::labeling::{LabelFailure, TopicLabel};
use htmodel::merging::{MergedCluster, MergedTopicSet};
use htmodel::metrics::MetricsReport;
use htmodel::preprocess::{FilterReport, TokenizedCorpus};
use htmodel::topics::TopicModelResult;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, clap::ValueEnum)]
pub enum Stage {
    Ingest,
    Preprocess,
    Fit,
    Metrics,
    Label,
    Merge,
    Assign,
    Impact,
    Score,
    Sweep,
    Report,
}

impl Stage {
    /// Every stage in run order.
    pub const ALL: [Stage; 11] = [
        Stage::Ingest,
        Stage::Preprocess,
        Stage::Fit,
        Stage::Metrics,
        Stage::Label,
        Stage::Merge,
        Stage::Assign,
        Stage::Impact,
        Stage::Score,
        Stage::Sweep,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Preprocess => "preprocess",
            Stage::Fit => "fit",
            Stage::Metrics => "metrics",
            Stage::Label => "label",
            Stage::Merge => "merge",
            Stage::Assign => "assign",
            Stage::Impact => "impact",
            Stage::Score => "score",
            Stage::Sweep => "sweep",
            Stage::Report => "report",
        }
    }

    /// File name of the one artifact the stage writes.
    pub fn artifact(self) -> &'static str {
        match self {
            Stage::Ingest => "corpus.jsonl",
            Stage::Preprocess => "tokenized.json",
            Stage::Fit => "topics.json",
            Stage::Metrics => "metrics.json",
            Stage::Label => "labels.json",
            Stage::Merge => "merged.json",
            Stage::Assign => "assignments.csv",
            Stage::Impact => "impact.csv",
            Stage::Score => "scores.csv",
            Stage::Sweep => "sweep.csv",
            Stage::Report => "report.json",
        }
    }

    /// Stages whose artifacts this stage reads.
    pub fn upstream(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Ingest => &[],
            Preprocess => &[Ingest],
            Fit => &[Preprocess],
            Metrics => &[Preprocess, Fit],
            Label => &[Fit],
            Merge => &[Fit, Label],
            Assign | Impact => &[Preprocess, Fit, Merge],
            Score => &[Preprocess, Fit],
            Sweep => &[Preprocess],
            Report => &[Preprocess, Fit, Metrics, Label, Merge, Assign, Impact, Score, Sweep],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A JSON artifact: the payload's fields plus `config_hash`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub config_hash: String,
    #[serde(flatten)]
    pub data: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedArtifact {
    pub filter_report: FilterReport,
    pub corpus: TokenizedCorpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicsArtifact {
    pub result: TopicModelResult,
}

pub type MetricsArtifact = MetricsReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsArtifact {
    pub provider_id: String,
    pub model: String,
    /// One label per topic in topic order. Topics whose request failed get
    /// a keyword fallback with provider id [`FALLBACK_PROVIDER`].
    pub labels: Vec<TopicLabel>,
    pub failures: Vec<LabelFailure>,
}

pub const FALLBACK_PROVIDER: &str = "fallback:keywords";

/// On-disk form of a [`MergedTopicSet`]. Spelled out rather than wrapped in
/// an [`Envelope`] because flattened maps lose their integer keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedArtifact {
    pub config_hash: String,
    pub threshold: f64,
    pub clusters: Vec<MergedCluster>,
    pub mapping: BTreeMap<usize, usize>,
}

impl MergedArtifact {
    pub fn new(config_hash: &str, set: MergedTopicSet) -> Self {
        MergedArtifact {
            config_hash: config_hash.to_string(),
            threshold: set.threshold,
            clusters: set.clusters,
            mapping: set.mapping,
        }
    }

    pub fn into_set(self) -> MergedTopicSet {
        MergedTopicSet {
            threshold: self.threshold,
            clusters: self.clusters,
            mapping: self.mapping,
        }
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(htmodel::sha256_hex(&bytes))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes through a temporary file so a crash never leaves half an artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = tmp_path(path);
    let mut f = std::fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Like [`write_atomic`] for writers that insist on a path of their own.
pub fn write_atomic_with(path: &Path, write: impl FnOnce(&Path) -> CliResult<()>) -> CliResult<()> {
    let tmp = tmp_path(path);
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, config_hash: &str, data: &T) -> CliResult<()> {
    write_json_raw(
        path,
        &Envelope {
            config_hash: config_hash.to_string(),
            data,
        },
    )
}

/// Writes a value that already carries its own `config_hash`.
pub fn write_json_raw<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<Envelope<T>> {
    let text = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_slice(&text)?)
}

/// Comment header for CSV artifacts.
pub fn csv_preamble(config_hash: &str, notes: &[(&str, String)]) -> Vec<u8> {
    let mut out = format!("# config_hash: {config_hash}\n");
    for (k, v) in notes {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out.into_bytes()
}

/// Reads the `config_hash` comment from the top of a CSV artifact.
pub fn csv_config_hash(path: &Path) -> CliResult<Option<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# config_hash: "))
        .map(str::to_string))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}
