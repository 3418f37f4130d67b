//! Transport to external model endpoints.
//!
//! Three roles share one request/response contract: the assessor (returns a
//! raw response text), the subject verifier (returns presence of the prompt's
//! subject) and the consistency judge (returns whether reasoning supports the
//! answer). [`HttpPort`] speaks JSON over HTTP; [`MockPort`] and [`FnPort`]
//! are deterministic in-process doubles.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Images at or below this size are sent inline as base64 data URIs.
pub const INLINE_IMAGE_LIMIT: u64 = 4 * 1024 * 1024;

pub const ENV_ASSESSOR_URL: &str = "MAGIC_ASSESSOR_URL";
pub const ENV_VERIFIER_URL: &str = "MAGIC_VERIFIER_URL";
pub const ENV_JUDGE_URL: &str = "MAGIC_JUDGE_URL";
pub const ENV_API_KEY: &str = "MAGIC_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(
        "transport failed after {attempts} attempt(s), last status {last_status:?}: {message}"
    )]
    Transport {
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("unscripted {task} request for key {key:?}")]
    Unscripted { task: Task, key: String },
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("cannot read image {path}: {source}")]
    Image {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Assess,
    Verify,
    Judge,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Assess => "assess",
            Task::Verify => "verify",
            Task::Judge => "judge",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PortRequest {
    /// `image` is a local path or a URI; `prompt` is the generation prompt.
    Assess {
        image: String,
        prompt: String,
    },
    /// `subject` is the entity that must appear in the image.
    Verify {
        image: String,
        subject: String,
    },
    Judge {
        think: String,
        answer: String,
    },
}

impl PortRequest {
    pub fn task(&self) -> Task {
        match self {
            PortRequest::Assess { .. } => Task::Assess,
            PortRequest::Verify { .. } => Task::Verify,
            PortRequest::Judge { .. } => Task::Judge,
        }
    }

    /// Key used by scripted mocks: the image for assess/verify, the answer
    /// for judge.
    pub fn script_key(&self) -> &str {
        match self {
            PortRequest::Assess { image, .. } | PortRequest::Verify { image, .. } => image,
            PortRequest::Judge { answer, .. } => answer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PortResponse {
    Assess { text: String },
    Verify { present: bool },
    Judge { consistent: bool },
}

impl PortResponse {
    pub fn task(&self) -> Task {
        match self {
            PortResponse::Assess { .. } => Task::Assess,
            PortResponse::Verify { .. } => Task::Verify,
            PortResponse::Judge { .. } => Task::Judge,
        }
    }
}

/// A shareable handle to one inference endpoint.
pub trait Port: Send + Sync {
    fn call(&self, req: &PortRequest) -> Result<PortResponse, GatewayError>;
}

fn mismatch(expected: Task, got: &PortResponse) -> GatewayError {
    GatewayError::Protocol(format!(
        "expected a {expected} response, got {}",
        got.task()
    ))
}

/// Assessor role: returns the raw model response.
pub trait AssessorPort {
    fn assess(&self, image: &str, prompt: &str) -> Result<String, GatewayError>;
}

/// Subject verification role.
pub trait VerifierPort {
    fn verify(&self, image: &str, subject: &str) -> Result<bool, GatewayError>;
}

/// Consistency judge role.
pub trait JudgePort {
    fn judge(&self, think: &str, answer: &str) -> Result<bool, GatewayError>;
}

impl<P: Port + ?Sized> AssessorPort for P {
    fn assess(&self, image: &str, prompt: &str) -> Result<String, GatewayError> {
        let req = PortRequest::Assess {
            image: image.to_string(),
            prompt: prompt.to_string(),
        };
        match self.call(&req)? {
            PortResponse::Assess { text } => Ok(text),
            other => Err(mismatch(Task::Assess, &other)),
        }
    }
}

impl<P: Port + ?Sized> VerifierPort for P {
    fn verify(&self, image: &str, subject: &str) -> Result<bool, GatewayError> {
        let req = PortRequest::Verify {
            image: image.to_string(),
            subject: subject.to_string(),
        };
        match self.call(&req)? {
            PortResponse::Verify { present } => Ok(present),
            other => Err(mismatch(Task::Verify, &other)),
        }
    }
}

impl<P: Port + ?Sized> JudgePort for P {
    fn judge(&self, think: &str, answer: &str) -> Result<bool, GatewayError> {
        let req = PortRequest::Judge {
            think: think.to_string(),
            answer: answer.to_string(),
        };
        match self.call(&req)? {
            PortResponse::Judge { consistent } => Ok(consistent),
            other => Err(mismatch(Task::Judge, &other)),
        }
    }
}

/// API key wrapper whose `Debug` and `Display` never reveal the value.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Secret(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("***")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base: Duration,
    /// Fraction of the backoff randomly added or removed, in `[0, 1]`.
    pub jitter: f64,
    pub jitter_seed: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
            jitter: 0.2,
            jitter_seed: 0,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, for `attempt >= 1`.
    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let exp = self
            .backoff_base
            .saturating_mul(2u32.saturating_pow(attempt.saturating_sub(1)));
        if self.jitter <= 0.0 {
            return exp;
        }
        let factor = 1.0 + self.jitter * rng.gen_range(-1.0..=1.0);
        exp.mul_f64(factor.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WireFormat {
    /// `POST {base_url}/v1/infer` with the task contract of this crate.
    #[default]
    Native,
    /// `POST {base_url}/v1/chat/completions`, OpenAI-style chat messages.
    OpenAiChat,
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub base_url: String,
    pub api_key: Secret,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_inflight: usize,
    pub wire: WireFormat,
    /// Model name sent with OpenAI-style requests.
    pub model: Option<String>,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            api_key: Secret::default(),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            max_inflight: 8,
            wire: WireFormat::Native,
            model: None,
        }
    }

    /// Reads the base URL from `url_var` and the key from `MAGIC_API_KEY`.
    pub fn from_env(url_var: &str) -> Result<Self, GatewayError> {
        let url = std::env::var(url_var)
            .map_err(|_| GatewayError::Config(format!("{url_var} is not set")))?;
        let mut cfg = EndpointConfig::new(url);
        if let Ok(key) = std::env::var(ENV_API_KEY) {
            cfg.api_key = Secret::new(key);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.retry.max_attempts < 1 {
            return Err(GatewayError::Config(
                "max_attempts must be at least 1".into(),
            ));
        }
        if self.timeout.is_zero() {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        if self.max_inflight == 0 {
            return Err(GatewayError::Config("max_inflight must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.retry.jitter) {
            return Err(GatewayError::Config("jitter must lie in [0, 1]".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(GatewayError::Config(format!(
                "base_url must be http(s): {}",
                self.base_url
            )));
        }
        Ok(())
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

/// Turns a local path into the wire `image` field: a base64 data URI under
/// [`INLINE_IMAGE_LIMIT`], a `file://` URI above. Strings that already look
/// like URIs pass through.
pub fn encode_image(image: &str) -> Result<String, GatewayError> {
    if image.contains("://") || image.starts_with("data:") {
        return Ok(image.to_string());
    }
    let path = Path::new(image);
    let io_err = |source| GatewayError::Image {
        path: path.to_path_buf(),
        source,
    };
    let len = std::fs::metadata(path).map_err(io_err)?.len();
    if len > INLINE_IMAGE_LIMIT {
        let abs = path.canonicalize().map_err(io_err)?;
        return Ok(format!("file://{}", abs.display()));
    }
    let bytes = std::fs::read(path).map_err(io_err)?;
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        _ => "image/png",
    };
    Ok(format!(
        "data:{mime};base64,{}",
        base64::engine::general_purpose::STANDARD.encode(bytes)
    ))
}

/// Builds the native wire body for a request.
pub fn native_body(req: &PortRequest, image: Option<&str>) -> Value {
    match req {
        PortRequest::Assess { prompt, .. } => {
            json!({"task": "assess", "image": image, "prompt": prompt})
        }
        PortRequest::Verify { subject, .. } => {
            json!({"task": "verify", "image": image, "prompt": subject})
        }
        PortRequest::Judge { think, answer } => {
            json!({"task": "judge", "think": think, "answer": answer})
        }
    }
}

/// Decodes a native wire response body for `task`.
pub fn decode_native(task: Task, body: &str) -> Result<PortResponse, GatewayError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::Protocol(format!("response is not JSON: {e}")))?;
    let field = |name: &str| {
        v.get(name)
            .ok_or_else(|| GatewayError::Protocol(format!("{task} response lacks \"{name}\"")))
    };
    let bad = |name: &str| GatewayError::Protocol(format!("\"{name}\" has the wrong type"));
    match task {
        Task::Assess => Ok(PortResponse::Assess {
            text: field("text")?
                .as_str()
                .ok_or_else(|| bad("text"))?
                .to_string(),
        }),
        Task::Verify => Ok(PortResponse::Verify {
            present: field("present")?.as_bool().ok_or_else(|| bad("present"))?,
        }),
        Task::Judge => Ok(PortResponse::Judge {
            consistent: field("consistent")?
                .as_bool()
                .ok_or_else(|| bad("consistent"))?,
        }),
    }
}

fn chat_instruction(req: &PortRequest) -> String {
    match req {
        PortRequest::Assess { prompt, .. } => prompt.clone(),
        PortRequest::Verify { subject, .. } => {
            format!("Does the image contain the complete '{subject}'? Answer only yes or no.")
        }
        PortRequest::Judge { think, answer } => format!(
            "Reasoning:\n{think}\n\nFinal labels:\n{answer}\n\nIs the final labeling logically \
             consistent with the reasoning? Answer only yes or no."
        ),
    }
}

/// Builds an OpenAI-style chat completion body.
pub fn chat_body(req: &PortRequest, image: Option<&str>, model: Option<&str>) -> Value {
    let mut content = vec![json!({"type": "text", "text": chat_instruction(req)})];
    if let Some(url) = image {
        content.insert(0, json!({"type": "image_url", "image_url": {"url": url}}));
    }
    json!({
        "model": model.unwrap_or("default"),
        "temperature": 0,
        "messages": [{"role": "user", "content": content}],
    })
}

fn yes_no(text: &str) -> Result<bool, GatewayError> {
    let t = text.trim().trim_matches(|c: char| !c.is_alphanumeric());
    let head: String = t.chars().take(5).collect::<String>().to_ascii_lowercase();
    if head.starts_with("yes") || head.starts_with("true") {
        Ok(true)
    } else if head.starts_with("no") || head.starts_with("false") {
        Ok(false)
    } else {
        Err(GatewayError::Protocol(format!(
            "expected yes/no, got {:?}",
            text.chars().take(40).collect::<String>()
        )))
    }
}

/// Decodes an OpenAI-style chat completion body for `task`.
pub fn decode_chat(task: Task, body: &str) -> Result<PortResponse, GatewayError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::Protocol(format!("response is not JSON: {e}")))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Protocol("missing choices[0].message.content".into()))?;
    match task {
        Task::Assess => Ok(PortResponse::Assess {
            text: text.to_string(),
        }),
        Task::Verify => Ok(PortResponse::Verify {
            present: yes_no(text)?,
        }),
        Task::Judge => Ok(PortResponse::Judge {
            consistent: yes_no(text)?,
        }),
    }
}

/// JSON-over-HTTP port with retry, exponential backoff and an in-flight cap.
pub struct HttpPort {
    cfg: EndpointConfig,
    client: reqwest::blocking::Client,
    slots: Slots,
    rng: Mutex<ChaCha8Rng>,
}

impl fmt::Debug for HttpPort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpPort").field("cfg", &self.cfg).finish()
    }
}

impl HttpPort {
    pub fn new(cfg: EndpointConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpPort {
            slots: Slots::new(cfg.max_inflight),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(cfg.retry.jitter_seed)),
            client,
            cfg,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn endpoint(&self) -> String {
        let base = self.cfg.base_url.trim_end_matches('/');
        match self.cfg.wire {
            WireFormat::Native => format!("{base}/v1/infer"),
            WireFormat::OpenAiChat => format!("{base}/v1/chat/completions"),
        }
    }

    fn body(&self, req: &PortRequest) -> Result<Value, GatewayError> {
        let image = match req {
            PortRequest::Assess { image, .. } | PortRequest::Verify { image, .. } => {
                Some(encode_image(image)?)
            }
            PortRequest::Judge { .. } => None,
        };
        Ok(match self.cfg.wire {
            WireFormat::Native => native_body(req, image.as_deref()),
            WireFormat::OpenAiChat => chat_body(req, image.as_deref(), self.cfg.model.as_deref()),
        })
    }

    fn decode(&self, task: Task, body: &str) -> Result<PortResponse, GatewayError> {
        match self.cfg.wire {
            WireFormat::Native => decode_native(task, body),
            WireFormat::OpenAiChat => decode_chat(task, body),
        }
    }
}

impl Port for HttpPort {
    fn call(&self, req: &PortRequest) -> Result<PortResponse, GatewayError> {
        let body = self.body(req)?;
        let url = self.endpoint();
        let task = req.task();
        let max = self.cfg.retry.max_attempts;
        let mut last_status = None;
        let mut last_message = String::new();

        for attempt in 1..=max {
            if attempt > 1 {
                let delay = {
                    let mut rng = self.rng.lock().unwrap_or_else(|e| e.into_inner());
                    self.cfg.retry.delay(attempt - 1, &mut *rng)
                };
                std::thread::sleep(delay);
            }
            let _slot = self.slots.acquire();
            let started = Instant::now();
            let mut builder = self.client.post(&url).json(&body);
            if !self.cfg.api_key.is_empty() {
                builder = builder.bearer_auth(self.cfg.api_key.expose());
            }
            let outcome = builder.send();
            let latency = started.elapsed();
            match outcome {
                Ok(resp) => {
                    let status = resp.status();
                    log::debug!(
                        "{task} attempt {attempt}/{max} -> {} in {:?}",
                        status.as_u16(),
                        latency
                    );
                    if status.is_success() {
                        let text = resp.text().map_err(|e| GatewayError::Transport {
                            attempts: attempt,
                            last_status: Some(status.as_u16()),
                            message: e.to_string(),
                        })?;
                        return self.decode(task, &text);
                    }
                    last_status = Some(status.as_u16());
                    last_message = format!("HTTP {status}");
                    // client errors other than throttling will not improve on retry
                    if status.is_client_error() && status.as_u16() != 429 && status.as_u16() != 408
                    {
                        return Err(GatewayError::Transport {
                            attempts: attempt,
                            last_status,
                            message: last_message,
                        });
                    }
                }
                Err(e) => {
                    log::debug!("{task} attempt {attempt}/{max} failed in {latency:?}: {e}");
                    last_message = e.to_string();
                }
            }
        }
        Err(GatewayError::Transport {
            attempts: max,
            last_status,
            message: last_message,
        })
    }
}

/// One logged call of a mock port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub task: Task,
    pub key: String,
}

#[derive(Debug, Default)]
struct CallLog(Mutex<Vec<CallRecord>>);

impl CallLog {
    fn push(&self, req: &PortRequest) {
        self.0
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(CallRecord {
                task: req.task(),
                key: req.script_key().to_string(),
            });
    }

    fn snapshot(&self) -> Vec<CallRecord> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// Scripted port: maps `(task, key)` to a canned response. Unscripted
/// requests are errors. Every call is logged.
#[derive(Debug, Default)]
pub struct MockPort {
    script: BTreeMap<(Task, String), PortResponse>,
    log: CallLog,
}

impl MockPort {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, response: PortResponse) -> Self {
        self.script.insert((response.task(), key.into()), response);
        self
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.log.snapshot()
    }
}

/// Builds a scripted mock port from `(key, response)` pairs.
pub fn mock_port<I, K>(script: I) -> MockPort
where
    I: IntoIterator<Item = (K, PortResponse)>,
    K: Into<String>,
{
    script
        .into_iter()
        .fold(MockPort::new(), |port, (k, r)| port.with(k, r))
}

impl Port for MockPort {
    fn call(&self, req: &PortRequest) -> Result<PortResponse, GatewayError> {
        self.log.push(req);
        self.script
            .get(&(req.task(), req.script_key().to_string()))
            .cloned()
            .ok_or_else(|| GatewayError::Unscripted {
                task: req.task(),
                key: req.script_key().to_string(),
            })
    }
}

/// Rule-based port backed by a closure. Calls are logged.
pub struct FnPort<F> {
    rule: F,
    log: CallLog,
}

impl<F> FnPort<F>
where
    F: Fn(&PortRequest) -> Result<PortResponse, GatewayError> + Send + Sync,
{
    pub fn new(rule: F) -> Self {
        FnPort {
            rule,
            log: CallLog::default(),
        }
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.log.snapshot()
    }
}

impl<F> Port for FnPort<F>
where
    F: Fn(&PortRequest) -> Result<PortResponse, GatewayError> + Send + Sync,
{
    fn call(&self, req: &PortRequest) -> Result<PortResponse, GatewayError> {
        self.log.push(req);
        (self.rule)(req)
    }
}

/// Judge that accepts every response.
pub fn always_consistent_judge(
) -> FnPort<impl Fn(&PortRequest) -> Result<PortResponse, GatewayError> + Send + Sync> {
    FnPort::new(|_req: &PortRequest| Ok(PortResponse::Judge { consistent: true }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_mock() {
        let port = mock_port([(
            "img1",
            PortResponse::Assess {
                text: "normal".into(),
            },
        )]);
        assert_eq!(port.assess("img1", "p").unwrap(), "normal");
        assert!(matches!(
            port.assess("img2", "p"),
            Err(GatewayError::Unscripted {
                task: Task::Assess,
                ..
            })
        ));
        // same key, other task
        assert!(port.verify("img1", "cat").is_err());
        assert_eq!(port.calls().len(), 3);
    }

    #[test]
    fn role_mismatch_is_protocol_error() {
        let port = FnPort::new(|_r: &PortRequest| Ok(PortResponse::Verify { present: true }));
        assert!(matches!(
            port.judge("t", "a"),
            Err(GatewayError::Protocol(_))
        ));
    }

    #[test]
    fn secret_is_redacted() {
        let mut cfg = EndpointConfig::new("http://localhost:1");
        cfg.api_key = Secret::new("sk-very-secret");
        let shown = format!("{cfg:?} {}", cfg.api_key);
        assert!(!shown.contains("sk-very-secret"));
        let port = HttpPort::new(cfg).unwrap();
        assert!(!format!("{port:?}").contains("sk-very-secret"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = EndpointConfig::new("http://x");
        assert!(cfg.validate().is_ok());
        cfg.retry.max_attempts = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = EndpointConfig::new("http://x");
        cfg.timeout = Duration::ZERO;
        assert!(cfg.validate().is_err());
        assert!(EndpointConfig::new("ftp://x").validate().is_err());
    }

    #[test]
    fn backoff_doubles() {
        let policy = RetryPolicy {
            max_attempts: 4,
            backoff_base: Duration::from_millis(100),
            jitter: 0.0,
            jitter_seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d: Vec<u128> = (1..=3)
            .map(|a| policy.delay(a, &mut rng).as_millis())
            .collect();
        assert_eq!(d, vec![100, 200, 400]);
        let jittered = RetryPolicy {
            jitter: 0.5,
            ..policy
        };
        for a in 1..=3 {
            let ms = jittered.delay(a, &mut rng).as_millis() as f64;
            let nominal = 100.0 * 2f64.powi(a as i32 - 1);
            assert!(ms >= nominal * 0.5 - 1.0 && ms <= nominal * 1.5 + 1.0);
        }
    }

    #[test]
    fn native_codec() {
        assert_eq!(
            decode_native(Task::Verify, r#"{"present": false}"#).unwrap(),
            PortResponse::Verify { present: false }
        );
        assert!(matches!(
            decode_native(Task::Assess, "<html>oops</html>"),
            Err(GatewayError::Protocol(_))
        ));
        assert!(matches!(
            decode_native(Task::Judge, r#"{"consistent": "yes"}"#),
            Err(GatewayError::Protocol(_))
        ));
        let body = native_body(
            &PortRequest::Judge {
                think: "t".into(),
                answer: "a".into(),
            },
            None,
        );
        assert_eq!(body["task"], "judge");
    }

    #[test]
    fn chat_codec() {
        let body = r#"{"choices":[{"message":{"content":"Yes."}}]}"#;
        assert_eq!(
            decode_chat(Task::Judge, body).unwrap(),
            PortResponse::Judge { consistent: true }
        );
        let body = r#"{"choices":[{"message":{"content":"no"}}]}"#;
        assert_eq!(
            decode_chat(Task::Verify, body).unwrap(),
            PortResponse::Verify { present: false }
        );
        let body = r#"{"choices":[{"message":{"content":"maybe"}}]}"#;
        assert!(decode_chat(Task::Verify, body).is_err());
        let req = PortRequest::Verify {
            image: "x.png".into(),
            subject: "little boy".into(),
        };
        let b = chat_body(&req, Some("data:image/png;base64,AA=="), Some("vlm"));
        assert_eq!(b["messages"][0]["content"][0]["type"], "image_url");
    }

    #[test]
    fn image_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jpg");
        std::fs::write(&p, [1u8, 2, 3]).unwrap();
        let enc = encode_image(p.to_str().unwrap()).unwrap();
        assert_eq!(enc, "data:image/jpeg;base64,AQID");
        assert_eq!(encode_image("https://x/y.png").unwrap(), "https://x/y.png");
        assert!(matches!(
            encode_image(dir.path().join("missing.png").to_str().unwrap()),
            Err(GatewayError::Image { .. })
        ));
    }
}
