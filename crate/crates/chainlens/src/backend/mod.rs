//! The sub-task query protocol and its implementations.
//!
//! Every chain reduces its vision task to typed queries — multi-choice,
//! multi-label, yes/no presence, same-object membership, pairwise order —
//! answered by a pluggable [`Backend`]: a remote chat API, the ground-truth
//! oracle, a specialist constrained to the same chain, or a seeded noisy
//! test double. The [`Session`] wraps a backend with prompt rendering,
//! response parsing, retries, caching, transcripts, and cost accounting.

mod cache;
mod cost;
mod grounded;
mod parse;
mod remote;
mod render;
mod templates;

pub use cache::{CacheEntry, QueryCache};
pub use cost::{record_cost, CostLedger, CostTotals, ModelPrice, PriceTable, Transcript, TranscriptEntry};
pub use grounded::{GroundTruthSource, GroundedBackend, ImageGroundTruth, ScriptedBackend, ScriptedMode};
pub use parse::{match_option, parse_answer};
pub use remote::{
    build_request, parse_response, HttpTransport, MockTransport, ProviderProfile, RemoteBackend,
    Transport,
};
pub use render::{render_view, Overlay, SourceImage, ViewSpec};
pub use templates::TemplateRegistry;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::core::PixelBox;
use crate::globalize::{Axis, Relation};
use crate::superpixel::RegionMask;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no valid answer after {attempts} attempts; last reply: {raw:?}")]
    InvalidAnswer { attempts: u32, raw: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("missing ground truth ({what}) for image {image_id}")]
    MissingGroundTruth {
        image_id: String,
        what: &'static str,
    },
    #[error("template error: {0}")]
    Template(String),
    #[error("image payload of {bytes} bytes exceeds the {limit}-byte provider limit")]
    PayloadTooLarge { bytes: usize, limit: usize },
    #[error("response parse error at {path}")]
    ResponseParse { path: String },
    #[error("missing API key: set {0}")]
    MissingApiKey(String),
    #[error("unknown model id {0:?} in price table")]
    UnknownModel(String),
    #[error("cache io: {0}")]
    CacheIo(#[from] std::io::Error),
}

/// The image region a query is grounded in; remote backends see rendered
/// payloads, grounded backends answer from this geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionSpec {
    FullImage,
    Window(PixelBox),
    Region(RegionMask),
}

impl RegionSpec {
    fn fingerprint(&self, out: &mut String) {
        match self {
            RegionSpec::FullImage => out.push_str("full"),
            RegionSpec::Window(b) => {
                out.push_str(&format!("win:{},{},{},{}", b.x_min, b.y_min, b.x_max, b.y_max))
            }
            RegionSpec::Region(r) => {
                out.push_str("region:");
                out.push_str(&r.digest());
            }
        }
    }
}

/// One item of a (possibly batched) multi-choice query.
#[derive(Debug, Clone)]
pub struct ChoiceItem {
    pub images: Vec<ImageRef>,
    pub region: RegionSpec,
    /// Short item tag used in prompts, e.g. a superpixel id.
    pub tag: String,
    /// Image the item is grounded in when a batch spans several images;
    /// `None` means the query's own image.
    pub image_id: Option<String>,
}

impl ChoiceItem {
    pub fn new(images: Vec<ImageRef>, region: RegionSpec, tag: impl Into<String>) -> Self {
        Self {
            images,
            region,
            tag: tag.into(),
            image_id: None,
        }
    }

    pub fn for_image(mut self, image_id: impl Into<String>) -> Self {
        self.image_id = Some(image_id.into());
        self
    }
}

/// A lazily rendered view of a source image.
#[derive(Debug, Clone)]
pub struct ImageRef {
    pub source: SourceImage,
    pub view: ViewSpec,
}

impl ImageRef {
    pub fn new(source: SourceImage, view: ViewSpec) -> Self {
        Self { source, view }
    }

    fn fingerprint(&self, out: &mut String) {
        out.push_str(self.source.digest());
        out.push('@');
        self.view.fingerprint(out);
    }
}

#[derive(Debug, Clone)]
pub enum QueryKind {
    /// One option per item, answered positionally when batched.
    MultiChoice {
        items: Vec<ChoiceItem>,
        options: Arc<Vec<String>>,
        /// Prior (tag, chosen option) pairs carried along the chain.
        history: Vec<(String, String)>,
    },
    /// The subset of options present in a region.
    MultiLabel {
        images: Vec<ImageRef>,
        region: RegionSpec,
        options: Arc<Vec<String>>,
    },
    /// Is any part of `class_name` inside the window?
    Presence {
        images: Vec<ImageRef>,
        window: PixelBox,
        class_name: String,
    },
    /// Does the candidate region belong to the same object as the cluster?
    SameObject {
        images: Vec<ImageRef>,
        candidate: RegionSpec,
        cluster: RegionSpec,
    },
    /// Rank two regions along an axis.
    PairOrder {
        a_images: Vec<ImageRef>,
        b_images: Vec<ImageRef>,
        a: RegionSpec,
        b: RegionSpec,
        axis: Axis,
        ternary: bool,
    },
}

#[derive(Debug, Clone)]
pub struct Query {
    pub image_id: String,
    pub kind: QueryKind,
    pub template_id: String,
}

impl Query {
    /// Closed option set the reply must come from.
    pub fn options(&self) -> Vec<String> {
        match &self.kind {
            QueryKind::MultiChoice { options, .. } | QueryKind::MultiLabel { options, .. } => {
                options.as_ref().clone()
            }
            QueryKind::Presence { .. } | QueryKind::SameObject { .. } => {
                vec!["yes".into(), "no".into()]
            }
            QueryKind::PairOrder { ternary, .. } => {
                let mut v = vec!["first".to_string(), "second".to_string()];
                if *ternary {
                    v.push("equal".to_string());
                }
                v
            }
        }
    }

    pub fn item_count(&self) -> usize {
        match &self.kind {
            QueryKind::MultiChoice { items, .. } => items.len(),
            _ => 1,
        }
    }

    /// Stable identity string: equal queries produce equal fingerprints.
    pub fn fingerprint(&self) -> String {
        let mut s = String::with_capacity(256);
        s.push_str(&self.image_id);
        s.push('|');
        s.push_str(&self.template_id);
        s.push('|');
        match &self.kind {
            QueryKind::MultiChoice {
                items,
                options,
                history,
            } => {
                s.push_str("multichoice|");
                for item in items {
                    s.push('[');
                    s.push_str(&item.tag);
                    s.push(';');
                    if let Some(id) = &item.image_id {
                        s.push_str(id);
                    }
                    s.push(';');
                    item.region.fingerprint(&mut s);
                    for img in &item.images {
                        s.push(';');
                        img.fingerprint(&mut s);
                    }
                    s.push(']');
                }
                s.push('|');
                s.push_str(&options.join(","));
                s.push('|');
                for (tag, opt) in history {
                    s.push_str(&format!("{tag}={opt};"));
                }
            }
            QueryKind::MultiLabel {
                images,
                region,
                options,
            } => {
                s.push_str("multilabel|");
                region.fingerprint(&mut s);
                for img in images {
                    s.push(';');
                    img.fingerprint(&mut s);
                }
                s.push('|');
                s.push_str(&options.join(","));
            }
            QueryKind::Presence {
                images,
                window,
                class_name,
            } => {
                s.push_str("presence|");
                RegionSpec::Window(*window).fingerprint(&mut s);
                s.push('|');
                s.push_str(class_name);
                for img in images {
                    s.push(';');
                    img.fingerprint(&mut s);
                }
            }
            QueryKind::SameObject {
                images,
                candidate,
                cluster,
            } => {
                s.push_str("sameobject|");
                candidate.fingerprint(&mut s);
                s.push('|');
                cluster.fingerprint(&mut s);
                for img in images {
                    s.push(';');
                    img.fingerprint(&mut s);
                }
            }
            QueryKind::PairOrder {
                a_images,
                b_images,
                a,
                b,
                axis,
                ternary,
            } => {
                s.push_str("pairorder|");
                s.push_str(axis.name());
                s.push('|');
                s.push_str(if *ternary { "ternary" } else { "binary" });
                s.push('|');
                a.fingerprint(&mut s);
                s.push('|');
                b.fingerprint(&mut s);
                for img in a_images.iter().chain(b_images) {
                    s.push(';');
                    img.fingerprint(&mut s);
                }
            }
        }
        s
    }

    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.fingerprint().as_bytes());
        hex::encode(&hasher.finalize()[..16])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnswerPayload {
    /// Per-item choices, aligned with the query's items.
    Choices(Vec<String>),
    /// Chosen subset of the option set.
    Labels(Vec<String>),
    YesNo(bool),
    Relation(Relation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub payload: AnswerPayload,
    pub raw_text: String,
    pub attempts: u32,
}

impl Answer {
    pub fn yes(&self) -> bool {
        matches!(self.payload, AnswerPayload::YesNo(true))
    }

    pub fn relation(&self) -> Option<Relation> {
        match self.payload {
            AnswerPayload::Relation(r) => Some(r),
            _ => None,
        }
    }
}

/// What a backend returns for one prompt round.
#[derive(Debug, Clone)]
pub struct RawReply {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
}

pub trait Backend: Send + Sync {
    /// Stable backend identifier (part of cache keys).
    fn id(&self) -> &str;
    /// Model identifier for pricing and cache keys.
    fn model_id(&self) -> &str;
    /// Whether answers may be served from / stored into the cache.
    fn cacheable(&self) -> bool {
        false
    }
    fn fetch(&self, query: &Query, prompt: &str, session: &Session)
        -> Result<RawReply, BackendError>;
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// Re-prompt budget for unparsable replies.
    pub max_answer_retries: u32,
    /// Transport backoff schedule.
    pub backoff: Vec<std::time::Duration>,
    /// Bound on concurrently in-flight remote requests.
    pub max_in_flight: usize,
    /// Render batched multi-choice queries as one numbered prompt.
    pub batching: bool,
    pub max_output_tokens: u32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_answer_retries: 3,
            backoff: vec![
                std::time::Duration::from_secs(1),
                std::time::Duration::from_secs(4),
                std::time::Duration::from_secs(16),
            ],
            max_in_flight: 4,
            batching: true,
            max_output_tokens: 512,
        }
    }
}

/// A run-scoped answering context: one backend plus prompt templates, the
/// response cache, the price table, and counters. Chains call
/// [`Session::answer`] with a per-image transcript.
pub struct Session {
    backend: Arc<dyn Backend>,
    templates: TemplateRegistry,
    cache: Option<QueryCache>,
    prices: PriceTable,
    config: SessionConfig,
    fetches: AtomicU64,
    transport_calls: AtomicU64,
    ledger: std::sync::Mutex<CostLedger>,
}

impl Session {
    pub fn new(
        backend: Arc<dyn Backend>,
        templates: TemplateRegistry,
        cache: Option<QueryCache>,
        prices: PriceTable,
        config: SessionConfig,
    ) -> Self {
        Self {
            backend,
            templates,
            cache,
            prices,
            config,
            fetches: AtomicU64::new(0),
            transport_calls: AtomicU64::new(0),
            ledger: std::sync::Mutex::new(CostLedger::default()),
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    /// Backend fetches that were not served from the cache.
    pub fn fetch_count(&self) -> u64 {
        self.fetches.load(Ordering::Relaxed)
    }

    /// Wire calls actually issued by remote backends.
    pub fn transport_call_count(&self) -> u64 {
        self.transport_calls.load(Ordering::Relaxed)
    }

    pub(crate) fn count_transport_call(&self) {
        self.transport_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger.lock().unwrap().clone()
    }

    /// Answer a query: consult the cache, otherwise prompt the backend,
    /// re-prompting with a constrained reminder when the reply does not
    /// parse into the closed option set. Every round is appended to the
    /// transcript and priced into the ledger.
    pub fn answer(&self, query: &Query, transcript: &mut Transcript) -> Result<Answer, BackendError> {
        let prompt = self.templates.render(query)?;
        let key = self.cache_key(query, &prompt);

        if self.backend.cacheable() {
            if let Some(cache) = &self.cache {
                if let Some(entry) = cache.get(&key)? {
                    if let Ok(payload) = parse_answer(query, &entry.raw_text) {
                        self.record(transcript, query, &prompt, &entry.raw_text,
                            entry.input_tokens, entry.output_tokens, 0, true)?;
                        return Ok(Answer {
                            payload,
                            raw_text: entry.raw_text,
                            attempts: 0,
                        });
                    }
                }
            }
        }

        let retries = self.config.max_answer_retries.max(1);
        let mut last_raw = String::new();
        for attempt in 1..=retries {
            let round_prompt = if attempt == 1 {
                prompt.clone()
            } else {
                format!("{prompt}\n\n{}", self.templates.reminder(query)?)
            };
            self.fetches.fetch_add(1, Ordering::Relaxed);
            let reply = self.backend.fetch(query, &round_prompt, self)?;
            self.record(transcript, query, &round_prompt, &reply.text,
                reply.input_tokens, reply.output_tokens, reply.latency_ms, false)?;
            match parse_answer(query, &reply.text) {
                Ok(payload) => {
                    if self.backend.cacheable() {
                        if let Some(cache) = &self.cache {
                            cache.put(
                                &key,
                                &CacheEntry {
                                    query_digest: query.digest(),
                                    raw_text: reply.text.clone(),
                                    input_tokens: reply.input_tokens,
                                    output_tokens: reply.output_tokens,
                                    timestamp: now_unix(),
                                },
                            )?;
                        }
                    }
                    return Ok(Answer {
                        payload,
                        raw_text: reply.text,
                        attempts: attempt,
                    });
                }
                Err(_) => last_raw = reply.text,
            }
        }

        Err(BackendError::InvalidAnswer {
            attempts: retries,
            raw: last_raw,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        transcript: &mut Transcript,
        query: &Query,
        prompt: &str,
        response: &str,
        input_tokens: u64,
        output_tokens: u64,
        latency_ms: u64,
        cached: bool,
    ) -> Result<(), BackendError> {
        let entry = TranscriptEntry {
            query_digest: query.digest(),
            model_id: self.backend.model_id().to_string(),
            prompt: prompt.to_string(),
            response: response.to_string(),
            input_tokens,
            output_tokens,
            latency_ms,
            cached,
        };
        self.ledger
            .lock()
            .unwrap()
            .record(&entry, &self.prices)?;
        transcript.push(entry);
        Ok(())
    }

    fn cache_key(&self, query: &Query, prompt: &str) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.backend.id().as_bytes());
        hasher.update([0]);
        hasher.update(self.backend.model_id().as_bytes());
        hasher.update([0]);
        hasher.update(query.template_id.as_bytes());
        hasher.update([0]);
        hasher.update(prompt.as_bytes());
        hasher.update([0]);
        hasher.update(query.fingerprint().as_bytes());
        hex::encode(hasher.finalize())
    }
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
