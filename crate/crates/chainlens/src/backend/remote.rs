//! Remote chat-API backends: wire-format builders/parsers per provider
//! profile, a pluggable transport, bounded in-flight requests, and
//! exponential backoff on transport failures.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use serde_json::{json, Value};

use super::render::render_view;
use super::{Backend, BackendError, ImageRef, Query, QueryKind, RawReply, Session};
use crate::raster::encode_png_bytes;

/// Published wire schemas this crate can speak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderProfile {
    OpenAiChat,
    AnthropicMessages,
    GeminiGenerate,
    OpenAiResponses,
}

impl ProviderProfile {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "openai-chat" => Self::OpenAiChat,
            "anthropic-messages" => Self::AnthropicMessages,
            "gemini-generate" => Self::GeminiGenerate,
            "openai-responses" => Self::OpenAiResponses,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::OpenAiChat => "openai-chat",
            Self::AnthropicMessages => "anthropic-messages",
            Self::GeminiGenerate => "gemini-generate",
            Self::OpenAiResponses => "openai-responses",
        }
    }

    pub fn key_env(&self) -> &'static str {
        match self {
            Self::OpenAiChat | Self::OpenAiResponses => "CHAINLENS_OPENAI_KEY",
            Self::AnthropicMessages => "CHAINLENS_ANTHROPIC_KEY",
            Self::GeminiGenerate => "CHAINLENS_GEMINI_KEY",
        }
    }

    pub fn default_base_url(&self) -> &'static str {
        match self {
            Self::OpenAiChat | Self::OpenAiResponses => "https://api.openai.com",
            Self::AnthropicMessages => "https://api.anthropic.com",
            Self::GeminiGenerate => "https://generativelanguage.googleapis.com",
        }
    }

    /// Per-image payload byte limit enforced before sending.
    pub fn image_byte_limit(&self) -> usize {
        match self {
            Self::OpenAiChat | Self::OpenAiResponses => 20_000_000,
            Self::AnthropicMessages => 5_000_000,
            Self::GeminiGenerate => 7_000_000,
        }
    }
}

/// Build the byte-exact request body for a prompt plus ordered PNG images.
/// Keys serialize in sorted order, so bodies are reproducible.
pub fn build_request(
    prompt: &str,
    images: &[Vec<u8>],
    profile: ProviderProfile,
    model: &str,
    max_tokens: u32,
) -> Result<Vec<u8>, BackendError> {
    use base64_encode as b64;
    for png in images {
        let limit = profile.image_byte_limit();
        if png.len() > limit {
            return Err(BackendError::PayloadTooLarge {
                bytes: png.len(),
                limit,
            });
        }
    }
    let body: Value = match profile {
        ProviderProfile::OpenAiChat => {
            let mut content = vec![json!({"text": prompt, "type": "text"})];
            for png in images {
                content.push(json!({
                    "image_url": {"url": format!("data:image/png;base64,{}", b64(png))},
                    "type": "image_url"
                }));
            }
            json!({
                "max_tokens": max_tokens,
                "messages": [{"content": content, "role": "user"}],
                "model": model,
                "temperature": 0
            })
        }
        ProviderProfile::OpenAiResponses => {
            let mut content = vec![json!({"text": prompt, "type": "input_text"})];
            for png in images {
                content.push(json!({
                    "image_url": format!("data:image/png;base64,{}", b64(png)),
                    "type": "input_image"
                }));
            }
            json!({
                "input": [{"content": content, "role": "user"}],
                "max_output_tokens": max_tokens,
                "model": model,
                "temperature": 0
            })
        }
        ProviderProfile::AnthropicMessages => {
            let mut content = vec![json!({"text": prompt, "type": "text"})];
            for png in images {
                content.push(json!({
                    "source": {"data": b64(png), "media_type": "image/png", "type": "base64"},
                    "type": "image"
                }));
            }
            json!({
                "max_tokens": max_tokens,
                "messages": [{"content": content, "role": "user"}],
                "model": model,
                "temperature": 0
            })
        }
        ProviderProfile::GeminiGenerate => {
            let mut parts = vec![json!({"text": prompt})];
            for png in images {
                parts.push(json!({
                    "inline_data": {"data": b64(png), "mime_type": "image/png"}
                }));
            }
            json!({
                "contents": [{"parts": parts, "role": "user"}],
                "generationConfig": {"maxOutputTokens": max_tokens, "temperature": 0}
            })
        }
    };
    Ok(serde_json::to_vec(&body).expect("serializable body"))
}

/// Extract (reply text, input tokens, output tokens) from a provider
/// response body. Errors name the missing path.
pub fn parse_response(
    bytes: &[u8],
    profile: ProviderProfile,
) -> Result<(String, u64, u64), BackendError> {
    let miss = |path: &str| BackendError::ResponseParse {
        path: path.to_string(),
    };
    let v: Value =
        serde_json::from_slice(bytes).map_err(|_| miss("<body is not valid JSON>"))?;
    let text;
    let usage: (u64, u64);
    match profile {
        ProviderProfile::OpenAiChat => {
            text = v["choices"][0]["message"]["content"]
                .as_str()
                .ok_or_else(|| miss("choices[0].message.content"))?
                .to_string();
            usage = (
                v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
                v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
            );
        }
        ProviderProfile::OpenAiResponses => {
            let output = v["output"].as_array().ok_or_else(|| miss("output"))?;
            let mut collected = String::new();
            for item in output {
                if item["type"] == "message" {
                    for part in item["content"].as_array().unwrap_or(&vec![]) {
                        if part["type"] == "output_text" {
                            collected.push_str(part["text"].as_str().unwrap_or(""));
                        }
                    }
                }
            }
            if collected.is_empty() {
                return Err(miss("output[].content[].text"));
            }
            text = collected;
            usage = (
                v["usage"]["input_tokens"].as_u64().unwrap_or(0),
                v["usage"]["output_tokens"].as_u64().unwrap_or(0),
            );
        }
        ProviderProfile::AnthropicMessages => {
            let content = v["content"].as_array().ok_or_else(|| miss("content"))?;
            let mut collected = String::new();
            for part in content {
                if part["type"] == "text" {
                    collected.push_str(part["text"].as_str().unwrap_or(""));
                }
            }
            if collected.is_empty() {
                return Err(miss("content[].text"));
            }
            text = collected;
            usage = (
                v["usage"]["input_tokens"].as_u64().unwrap_or(0),
                v["usage"]["output_tokens"].as_u64().unwrap_or(0),
            );
        }
        ProviderProfile::GeminiGenerate => {
            let parts = v["candidates"][0]["content"]["parts"]
                .as_array()
                .ok_or_else(|| miss("candidates[0].content.parts"))?;
            let mut collected = String::new();
            for part in parts {
                collected.push_str(part["text"].as_str().unwrap_or(""));
            }
            if collected.is_empty() {
                return Err(miss("candidates[0].content.parts[].text"));
            }
            text = collected;
            usage = (
                v["usageMetadata"]["promptTokenCount"].as_u64().unwrap_or(0),
                v["usageMetadata"]["candidatesTokenCount"].as_u64().unwrap_or(0),
            );
        }
    }
    Ok((text, usage.0, usage.1))
}

/// Minimal POST transport so tests can stand in for the network.
pub trait Transport: Send + Sync {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &[u8],
    ) -> Result<(u16, Vec<u8>), String>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: std::time::Duration) -> Self {
        Self {
            client: reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .expect("client"),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(std::time::Duration::from_secs(120))
    }
}

impl Transport for HttpTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &[u8],
    ) -> Result<(u16, Vec<u8>), String> {
        let mut req = self
            .client
            .post(url)
            .header("content-type", "application/json")
            .body(body.to_vec());
        for (k, v) in headers {
            req = req.header(k, v);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let bytes = resp.bytes().map_err(|e| e.to_string())?.to_vec();
        Ok((status, bytes))
    }
}

type MockHandler = dyn Fn(&str, &[u8]) -> Result<(u16, Vec<u8>), String> + Send + Sync;

/// Scripted transport for offline tests; counts calls.
pub struct MockTransport {
    handler: Box<MockHandler>,
    calls: AtomicU64,
}

impl MockTransport {
    pub fn new(
        handler: impl Fn(&str, &[u8]) -> Result<(u16, Vec<u8>), String> + Send + Sync + 'static,
    ) -> Self {
        Self {
            handler: Box::new(handler),
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Transport for MockTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &[u8],
    ) -> Result<(u16, Vec<u8>), String> {
        let _ = headers;
        self.calls.fetch_add(1, Ordering::Relaxed);
        (self.handler)(url, body)
    }
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteBackend {
    profile: ProviderProfile,
    model: String,
    base_url: String,
    transport: Arc<dyn Transport>,
    gate: Gate,
    /// Key resolved at construction; `None` is allowed for mock transports.
    api_key: Option<String>,
}

impl RemoteBackend {
    pub fn new(
        profile: ProviderProfile,
        model: &str,
        base_url: Option<&str>,
        transport: Arc<dyn Transport>,
        max_in_flight: usize,
    ) -> Self {
        Self {
            profile,
            model: model.to_string(),
            base_url: base_url.unwrap_or(profile.default_base_url()).to_string(),
            transport,
            gate: Gate::new(max_in_flight),
            api_key: std::env::var(profile.key_env()).ok(),
        }
    }

    pub fn over_http(
        profile: ProviderProfile,
        model: &str,
        base_url: Option<&str>,
        max_in_flight: usize,
    ) -> Result<Self, BackendError> {
        if std::env::var(profile.key_env()).is_err() {
            return Err(BackendError::MissingApiKey(profile.key_env().to_string()));
        }
        Ok(Self::new(
            profile,
            model,
            base_url,
            Arc::new(HttpTransport::default()),
            max_in_flight,
        ))
    }

    fn url(&self) -> String {
        match self.profile {
            ProviderProfile::OpenAiChat => format!("{}/v1/chat/completions", self.base_url),
            ProviderProfile::OpenAiResponses => format!("{}/v1/responses", self.base_url),
            ProviderProfile::AnthropicMessages => format!("{}/v1/messages", self.base_url),
            ProviderProfile::GeminiGenerate => format!(
                "{}/v1beta/models/{}:generateContent",
                self.base_url, self.model
            ),
        }
    }

    fn headers(&self) -> Vec<(String, String)> {
        let key = self.api_key.clone().unwrap_or_default();
        match self.profile {
            ProviderProfile::OpenAiChat | ProviderProfile::OpenAiResponses => {
                vec![("authorization".into(), format!("Bearer {key}"))]
            }
            ProviderProfile::AnthropicMessages => vec![
                ("x-api-key".into(), key),
                ("anthropic-version".into(), "2023-06-01".into()),
            ],
            ProviderProfile::GeminiGenerate => vec![("x-goog-api-key".into(), key)],
        }
    }

    /// All image refs of a query in prompt order.
    fn image_refs(query: &Query) -> Vec<&ImageRef> {
        match &query.kind {
            QueryKind::MultiChoice { items, .. } => {
                items.iter().flat_map(|i| i.images.iter()).collect()
            }
            QueryKind::MultiLabel { images, .. }
            | QueryKind::Presence { images, .. }
            | QueryKind::SameObject { images, .. } => images.iter().collect(),
            QueryKind::PairOrder {
                a_images, b_images, ..
            } => a_images.iter().chain(b_images.iter()).collect(),
        }
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        self.profile.name()
    }

    fn model_id(&self) -> &str {
        &self.model
    }

    fn cacheable(&self) -> bool {
        true
    }

    fn fetch(&self, query: &Query, prompt: &str, session: &Session) -> Result<RawReply, BackendError> {
        let images: Vec<Vec<u8>> = Self::image_refs(query)
            .into_iter()
            .map(|r| encode_png_bytes(&render_view(&r.source, &r.view)))
            .collect();
        let body = build_request(
            prompt,
            &images,
            self.profile,
            &self.model,
            session.config().max_output_tokens,
        )?;
        let url = self.url();
        let headers = self.headers();

        let schedule = &session.config().backoff;
        let started = Instant::now();
        let mut last_err = String::new();
        for attempt in 0..=schedule.len() {
            if attempt > 0 {
                std::thread::sleep(schedule[attempt - 1]);
            }
            let _permit = self.gate.acquire();
            session.count_transport_call();
            match self.transport.post(&url, &headers, &body) {
                Ok((status, bytes)) if status < 400 => {
                    let (text, input_tokens, output_tokens) =
                        parse_response(&bytes, self.profile)?;
                    return Ok(RawReply {
                        text,
                        input_tokens,
                        output_tokens,
                        latency_ms: started.elapsed().as_millis() as u64,
                    });
                }
                Ok((status, bytes)) if status == 429 || status >= 500 => {
                    last_err = format!("http {status}: {}", String::from_utf8_lossy(&bytes));
                }
                Ok((status, bytes)) => {
                    // 4xx other than throttling will not improve with retries
                    return Err(BackendError::Transport(format!(
                        "http {status}: {}",
                        String::from_utf8_lossy(&bytes)
                    )));
                }
                Err(e) => last_err = e,
            }
        }
        Err(BackendError::Transport(last_err))
    }
}

const B64_TABLE: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

/// Standard base64 with padding.
fn base64_encode(data: &[u8]) -> String {
    let mut out = String::with_capacity(data.len().div_ceil(3) * 4);
    for chunk in data.chunks(3) {
        let b = [
            chunk[0],
            chunk.get(1).copied().unwrap_or(0),
            chunk.get(2).copied().unwrap_or(0),
        ];
        let n = ((b[0] as u32) << 16) | ((b[1] as u32) << 8) | b[2] as u32;
        out.push(B64_TABLE[(n >> 18) as usize & 63] as char);
        out.push(B64_TABLE[(n >> 12) as usize & 63] as char);
        out.push(if chunk.len() > 1 {
            B64_TABLE[(n >> 6) as usize & 63] as char
        } else {
            '='
        });
        out.push(if chunk.len() > 2 {
            B64_TABLE[n as usize & 63] as char
        } else {
            '='
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base64_known_vectors() {
        assert_eq!(base64_encode(b""), "");
        assert_eq!(base64_encode(b"f"), "Zg==");
        assert_eq!(base64_encode(b"fo"), "Zm8=");
        assert_eq!(base64_encode(b"foo"), "Zm9v");
        assert_eq!(base64_encode(b"foobar"), "Zm9vYmFy");
    }

    #[test]
    fn text_only_bodies() {
        let body = build_request("hello", &[], ProviderProfile::OpenAiChat, "gpt-x", 64).unwrap();
        let v: Value = serde_json::from_slice(&body).unwrap();
        assert_eq!(v["messages"][0]["content"][0]["text"], "hello");
        assert_eq!(v["temperature"], 0);
        assert_eq!(v["messages"][0]["content"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn oversized_image_rejected_before_send() {
        let huge = vec![0u8; 6_000_000];
        let err = build_request("p", &[huge], ProviderProfile::AnthropicMessages, "m", 64)
            .unwrap_err();
        assert!(matches!(err, BackendError::PayloadTooLarge { .. }));
    }

    #[test]
    fn parse_response_paths() {
        let ok = serde_json::to_vec(&json!({
            "choices": [{"message": {"content": "Answer: yes"}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 4}
        }))
        .unwrap();
        let (text, i, o) = parse_response(&ok, ProviderProfile::OpenAiChat).unwrap();
        assert_eq!((text.as_str(), i, o), ("Answer: yes", 12, 4));

        let missing = serde_json::to_vec(&json!({"choices": [{}]})).unwrap();
        let err = parse_response(&missing, ProviderProfile::OpenAiChat).unwrap_err();
        assert!(err.to_string().contains("choices[0].message.content"));

        let anthropic = serde_json::to_vec(&json!({
            "content": [{"type": "text", "text": "no"}],
            "usage": {"input_tokens": 3, "output_tokens": 1}
        }))
        .unwrap();
        let (text, i, o) = parse_response(&anthropic, ProviderProfile::AnthropicMessages).unwrap();
        assert_eq!((text.as_str(), i, o), ("no", 3, 1));

        let gemini = serde_json::to_vec(&json!({
            "candidates": [{"content": {"parts": [{"text": "first"}]}}],
            "usageMetadata": {"promptTokenCount": 9, "candidatesTokenCount": 2}
        }))
        .unwrap();
        let (text, i, o) = parse_response(&gemini, ProviderProfile::GeminiGenerate).unwrap();
        assert_eq!((text.as_str(), i, o), ("first", 9, 2));

        let responses = serde_json::to_vec(&json!({
            "output": [{"type": "message", "content": [{"type": "output_text", "text": "second"}]}],
            "usage": {"input_tokens": 5, "output_tokens": 1}
        }))
        .unwrap();
        let (text, ..) = parse_response(&responses, ProviderProfile::OpenAiResponses).unwrap();
        assert_eq!(text, "second");
    }
}
