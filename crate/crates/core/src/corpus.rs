//! Stakeholder text corpora: ingestion, month partitioning, snapshots.
//!
//! Input is JSON-lines, one object per document:
//!
//! ```text
//! {"id": "r1", "platform": "meta", "role": "user", "timestamp": "2016-08-01T12:00:00Z", "text": "..."}
//! ```
//!
//! Malformed lines are skipped and counted in the corpus provenance under
//! `skipped`. Duplicate ids and role mismatches are fatal.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Meta,
    SteamVR,
    Viveport,
    Other,
}

impl FromStr for Platform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "meta" => Ok(Platform::Meta),
            "steamvr" => Ok(Platform::SteamVR),
            "viveport" => Ok(Platform::Viveport),
            "other" => Ok(Platform::Other),
            other => Err(Error::InvalidArgument(format!("unknown platform {other:?}"))),
        }
    }
}

/// Stakeholder role of a single document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Developer,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::User => "user",
            Role::Developer => "developer",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "user" => Ok(Role::User),
            "developer" => Ok(Role::Developer),
            other => Err(Error::InvalidArgument(format!("unknown role {other:?}"))),
        }
    }
}

/// Role of a whole corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusRole {
    User,
    Developer,
    Mixed,
}

impl From<Role> for CorpusRole {
    fn from(r: Role) -> Self {
        match r {
            Role::User => CorpusRole::User,
            Role::Developer => CorpusRole::Developer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub platform: Platform,
    pub role: Role,
    #[serde(with = "timestamp_format")]
    pub timestamp: DateTime<Utc>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

impl Document {
    pub fn month(&self) -> MonthKey {
        MonthKey::of(&self.timestamp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub role: CorpusRole,
    pub provenance: BTreeMap<String, String>,
}

impl Corpus {
    /// Builds a corpus, checking id uniqueness and role consistency.
    pub fn new(documents: Vec<Document>, role: CorpusRole) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
            if role != CorpusRole::Mixed && CorpusRole::from(doc.role) != role {
                return Err(Error::RoleMismatch {
                    id: doc.id.clone(),
                    expected: format!("{role:?}").to_lowercase(),
                    found: doc.role.to_string(),
                });
            }
        }
        Ok(Corpus {
            documents,
            role,
            provenance: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// A UTC calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MonthKey {
    pub year: i32,
    pub month: u32,
}

impl MonthKey {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidArgument(format!("month {month} outside 1..=12")));
        }
        Ok(MonthKey { year, month })
    }

    pub fn of(ts: &DateTime<Utc>) -> Self {
        MonthKey {
            year: ts.year(),
            month: ts.month(),
        }
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            MonthKey {
                year: self.year + 1,
                month: 1,
            }
        } else {
            MonthKey {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// Every month from `self` to `last`, inclusive.
    pub fn range_inclusive(self, last: MonthKey) -> Vec<MonthKey> {
        let mut out = Vec::new();
        let mut m = self;
        while m <= last {
            out.push(m);
            m = m.succ();
        }
        out
    }
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad month key {s:?}"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        MonthKey::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl Serialize for MonthKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MonthKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses an ISO-8601 timestamp and normalizes it to a UTC instant with
/// second precision. Offsets are honoured; naive values are taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc).trunc_subsecs(0));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().trunc_subsecs(0));
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}

mod timestamp_format {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_timestamp(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid timestamp {s:?}")))
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    platform: String,
    role: String,
    timestamp: String,
    text: String,
    #[serde(default)]
    language: Option<String>,
}

impl RawRecord {
    fn into_document(self) -> Option<Document> {
        if self.id.trim().is_empty() || self.text.trim().is_empty() {
            return None;
        }
        Some(Document {
            id: self.id,
            platform: self.platform.parse().ok()?,
            role: self.role.parse().ok()?,
            timestamp: parse_timestamp(&self.timestamp)?,
            text: self.text,
            language: self.language.filter(|l| !l.trim().is_empty()),
        })
    }
}

fn assemble(
    docs: Vec<Document>,
    expected_role: Option<Role>,
    source: &Path,
    lines: usize,
    skipped: usize,
) -> Result<Corpus> {
    let role = match expected_role {
        Some(r) => CorpusRole::from(r),
        None => match docs.first() {
            Some(first) if docs.iter().all(|d| d.role == first.role) => first.role.into(),
            _ => CorpusRole::Mixed,
        },
    };
    let mut corpus = Corpus::new(docs, role)?;
    corpus
        .provenance
        .insert("source".into(), source.display().to_string());
    corpus.provenance.insert("lines".into(), lines.to_string());
    corpus.provenance.insert("skipped".into(), skipped.to_string());
    Ok(corpus)
}

/// Reads a JSON-lines corpus. Blank lines are ignored; malformed records are
/// skipped and counted.
pub fn ingest_jsonl(path: impl AsRef<Path>, expected_role: Option<Role>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let (mut lines, mut skipped) = (0usize, 0usize);
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        lines += 1;
        match serde_json::from_str::<RawRecord>(&line)
            .ok()
            .and_then(RawRecord::into_document)
        {
            Some(doc) => docs.push(doc),
            None => skipped += 1,
        }
    }
    assemble(docs, expected_role, path, lines, skipped)
}

/// CSV adapter over the same schema; the header must name the five columns
/// (plus optional `language`).
pub fn ingest_csv(path: impl AsRef<Path>, expected_role: Option<Role>) -> Result<Corpus> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidArgument(format!("{other:?}")),
        })?;
    let mut docs = Vec::new();
    let (mut lines, mut skipped) = (0usize, 0usize);
    for record in reader.deserialize::<RawRecord>() {
        lines += 1;
        match record.ok().and_then(RawRecord::into_document) {
            Some(doc) => docs.push(doc),
            None => skipped += 1,
        }
    }
    assemble(docs, expected_role, path, lines, skipped)
}

/// Buckets document ids by UTC calendar month, preserving corpus order
/// within each bucket.
pub fn partition_by_month(corpus: &Corpus) -> BTreeMap<MonthKey, Vec<String>> {
    let mut out: BTreeMap<MonthKey, Vec<String>> = BTreeMap::new();
    for doc in &corpus.documents {
        out.entry(doc.month()).or_default().push(doc.id.clone());
    }
    out
}

const SNAPSHOT_FORMAT: &str = "htmodel-corpus";

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    format: String,
    version: u32,
    role: CorpusRole,
    count: usize,
    provenance: BTreeMap<String, String>,
}

/// Writes the corpus as a header line followed by one document per line.
pub fn save_snapshot(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = SnapshotHeader {
        format: SNAPSHOT_FORMAT.into(),
        version: 1,
        role: corpus.role,
        count: corpus.documents.len(),
        provenance: corpus.provenance.clone(),
    };
    let mut write_line = |v: String| -> Result<()> {
        w.write_all(v.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    };
    write_line(serde_json::to_string(&header)?)?;
    for doc in &corpus.documents {
        write_line(serde_json::to_string(doc)?)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::CorruptSnapshot("missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: SnapshotHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::CorruptSnapshot(format!("header: {e}")))?;
    if header.format != SNAPSHOT_FORMAT || header.version != 1 {
        return Err(Error::CorruptSnapshot(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let mut docs = Vec::with_capacity(header.count);
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::CorruptSnapshot(format!("document {n}: {e}")))?;
        docs.push(doc);
    }
    if docs.len() != header.count {
        return Err(Error::CorruptSnapshot(format!(
            "header declares {} documents, found {}",
            header.count,
            docs.len()
        )));
    }
    let mut corpus = Corpus::new(docs, header.role)
        .map_err(|e| Error::CorruptSnapshot(e.to_string()))?;
    corpus.provenance = header.provenance;
    Ok(corpus)
}
