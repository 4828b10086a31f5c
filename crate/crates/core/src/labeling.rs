//! Topic labeling through a chat-completion provider.
//!
//! Each topic's keyword list is rendered into a fixed prompt, sent to a
//! [`LabelProvider`], and the `Topic: <label>` line of the answer becomes
//! the label. Responses are cached by prompt hash so a repeated run makes
//! no provider calls at all.
//!
//! # Wire format of [`ChatProvider`]
//!
//! ```text
//! POST {endpoint_url}
//! Authorization: Bearer $API_KEY
//! Content-Type: application/json
//!
//! {"model": "<model>", "temperature": 0,
//!  "messages": [{"role": "user", "content": "<prompt>"}]}
//! ```
//!
//! The label text is read from `choices[0].message.content`.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::Role;
use crate::error::{Error, Result};
use crate::provider::{ResponseCache, RetryPolicy};
use crate::util::sha256_hex;

pub const MAX_LABEL_CHARS: usize = 120;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub topic_id: usize,
    pub keywords: Vec<String>,
    pub stakeholder: Role,
    pub total_topics: usize,
}

impl LabelRequest {
    pub fn new(topic_id: usize, keywords: Vec<String>, stakeholder: Role, total_topics: usize) -> Result<Self> {
        let req = LabelRequest {
            topic_id,
            keywords,
            stakeholder,
            total_topics,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        if self.keywords.is_empty() {
            return Err(Error::InvalidArgument(format!("topic {} has no keywords", self.topic_id)));
        }
        if self.keywords.iter().any(|k| k.trim().is_empty()) {
            return Err(Error::InvalidArgument(format!("topic {} has an empty keyword", self.topic_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLabel {
    pub topic_id: usize,
    pub label: String,
    pub provider_id: String,
    pub prompt_hash: String,
    pub raw_response: String,
}

/// Renders the labeling prompt for one topic.
pub fn render_prompt(req: &LabelRequest) -> String {
    let corpus = match req.stakeholder {
        Role::User => "VR user reviews",
        Role::Developer => "VR developer discussions",
    };
    format!(
        "This analysis categorizes {corpus} into {} topics. One topic is defined by the following keywords: {}. \
         Generate a concise, semantically meaningful label that best represents this topic. \
         Use the format: Topic: <topic label>.",
        req.total_topics,
        req.keywords.join(", ")
    )
}

/// Cache key for a prompt sent to a particular provider and model.
pub fn prompt_hash(prompt: &str, provider_id: &str, model: &str) -> String {
    sha256_hex(format!("{prompt}\n{provider_id}\n{model}").as_bytes())
}

fn strip_markup(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_' | '`' | '#' | '"' | '\'' | '<' | '>'))
}

/// Extracts the label from a `Topic: <label>` response.
///
/// The prefix is matched case-insensitively on any line, after stripping
/// markdown emphasis, headings and quotes. A trailing period is dropped.
pub fn parse_label(response: &str) -> Result<String> {
    for line in response.lines() {
        let line = strip_markup(line.trim_start_matches(['-', ' ', '\t']));
        let Some(head) = line.get(..6) else { continue };
        if !head.eq_ignore_ascii_case("topic:") {
            continue;
        }
        let label = strip_markup(&line[6..]);
        let label = strip_markup(label.strip_suffix('.').unwrap_or(label));
        if label.is_empty() {
            break;
        }
        if label.chars().count() > MAX_LABEL_CHARS {
            return Err(Error::UnparseableResponse(format!(
                "label longer than {MAX_LABEL_CHARS} characters: {response}"
            )));
        }
        return Ok(label.to_string());
    }
    Err(Error::UnparseableResponse(response.to_string()))
}

/// Something that answers a single-turn prompt.
pub trait LabelProvider: Send + Sync {
    fn id(&self) -> &str;
    fn model(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Offline provider that labels a topic with its first three keywords.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider;

impl LabelProvider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn model(&self) -> &str {
        "join-first-3"
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        const START: &str = "defined by the following keywords: ";
        const END: &str = ". Generate a concise";
        let from = prompt
            .find(START)
            .map(|i| i + START.len())
            .ok_or_else(|| Error::Provider("mock: prompt has no keyword list".into()))?;
        let to = prompt[from..]
            .find(END)
            .map(|i| from + i)
            .ok_or_else(|| Error::Provider("mock: prompt has no keyword list".into()))?;
        let label = prompt[from..to].split(", ").take(3).collect::<Vec<_>>().join(" / ");
        Ok(format!("Topic: {label}"))
    }
}

#[cfg(feature = "remote")]
pub use remote::ChatProvider;

#[cfg(feature = "remote")]
mod remote {
    use serde_json::json;

    use super::*;
    use crate::provider::http::JsonEndpoint;
    use crate::provider::ProviderConfig;

    /// OpenAI-style chat-completion client at temperature 0.
    pub struct ChatProvider {
        id: String,
        model: String,
        endpoint: JsonEndpoint,
    }

    impl ChatProvider {
        /// Fails with [`Error::ProviderConfig`] if the configuration is
        /// incomplete or the API key variable is unset.
        pub fn new(cfg: &ProviderConfig) -> Result<Self> {
            Ok(ChatProvider {
                id: format!("chat:{}", cfg.endpoint_url),
                model: cfg.model.clone(),
                endpoint: JsonEndpoint::new(cfg)?,
            })
        }
    }

    impl LabelProvider for ChatProvider {
        fn id(&self) -> &str {
            &self.id
        }

        fn model(&self) -> &str {
            &self.model
        }

        fn complete(&self, prompt: &str) -> Result<String> {
            let body = json!({
                "model": self.model,
                "temperature": 0,
                "messages": [{"role": "user", "content": prompt}],
            });
            let v = self.endpoint.post(&body)?;
            v.pointer("/choices/0/message/content")
                .and_then(|c| c.as_str())
                .map(str::to_string)
                .ok_or_else(|| Error::Provider("response has no choices[0].message.content".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelFailure {
    pub topic_id: usize,
    pub prompt_hash: String,
    pub message: String,
}

/// Outcome of [`request_labels`]: labels and failures, both in request
/// order, plus how many provider calls were made.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRun {
    pub labels: Vec<TopicLabel>,
    pub failures: Vec<LabelFailure>,
    pub provider_calls: usize,
}

#[derive(Debug, Clone)]
pub struct RequestOptions {
    pub max_parallel: usize,
    pub retry: RetryPolicy,
}

impl Default for RequestOptions {
    fn default() -> Self {
        RequestOptions {
            max_parallel: 4,
            retry: RetryPolicy::default(),
        }
    }
}

enum Slot {
    /// The flag marks a fresh response that still has to be cached.
    Label(TopicLabel, bool),
    Failed(LabelFailure),
}

/// Labels every request, using the cache first.
///
/// Transient provider errors and unparseable answers are retried with
/// backoff; if they persist the topic gets a [`LabelFailure`] and the run
/// goes on. Configuration and authentication errors abort the whole call.
/// Only responses that parse are cached, and new entries are appended in
/// request order once all workers are done, so the cache file does not
/// depend on thread timing.
pub fn request_labels(
    provider: &dyn LabelProvider,
    reqs: &[LabelRequest],
    cache: &ResponseCache,
    opts: &RequestOptions,
) -> Result<LabelRun> {
    for r in reqs {
        r.validate()?;
    }
    let calls = AtomicUsize::new(0);
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<Error>> = Mutex::new(None);
    let slots: Mutex<Vec<Option<Slot>>> = Mutex::new((0..reqs.len()).map(|_| None).collect());

    let label_one = |req: &LabelRequest| -> Result<Slot> {
        let prompt = render_prompt(req);
        let hash = prompt_hash(&prompt, provider.id(), provider.model());
        let make = |raw: String, label: String| TopicLabel {
            topic_id: req.topic_id,
            label,
            provider_id: provider.id().to_string(),
            prompt_hash: hash.clone(),
            raw_response: raw,
        };
        if let Some(raw) = cache.get(&hash) {
            if let Ok(label) = parse_label(&raw) {
                return Ok(Slot::Label(make(raw, label), false));
            }
        }
        let outcome = opts.retry.run(|_| {
            calls.fetch_add(1, Ordering::SeqCst);
            let raw = provider.complete(&prompt)?;
            let label = parse_label(&raw)?;
            Ok((raw, label))
        });
        match outcome {
            Ok((raw, label)) => Ok(Slot::Label(make(raw, label), true)),
            Err(e @ (Error::Provider(_) | Error::UnparseableResponse(_))) => Ok(Slot::Failed(LabelFailure {
                topic_id: req.topic_id,
                prompt_hash: hash,
                message: e.to_string(),
            })),
            Err(e) => Err(e),
        }
    };

    let workers = opts.max_parallel.clamp(1, reqs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= reqs.len() {
                    break;
                }
                match label_one(&reqs[i]) {
                    Ok(slot) => slots.lock().expect("slots")[i] = Some(slot),
                    Err(e) => {
                        abort.store(true, Ordering::SeqCst);
                        fatal.lock().expect("fatal").get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = fatal.into_inner().expect("fatal") {
        return Err(e);
    }
    let mut run = LabelRun {
        labels: Vec::new(),
        failures: Vec::new(),
        provider_calls: calls.into_inner(),
    };
    for slot in slots.into_inner().expect("slots").into_iter().flatten() {
        match slot {
            Slot::Label(l, fresh) => {
                if fresh {
                    cache.insert(&l.prompt_hash, &l.raw_response)?;
                }
                run.labels.push(l);
            }
            Slot::Failed(f) => run.failures.push(f),
        }
    }
    Ok(run)
}
