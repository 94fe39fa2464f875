//! Annotation backends.
//!
//! [`RemoteBackend`] speaks the JSON chat-completion wire format with frames
//! attached as base64 image parts. [`MockBackend`] renders plausible text
//! from a SHA-256 digest of the request, so equal requests always produce
//! equal output and the downstream parsers still see realistic shapes.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use base64::Engine as _;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnnotateError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http {status}: {body}")]
    Http { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: usize, last: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("backend: {0}")]
    Backend(String),
}

impl AnnotateError {
    pub fn is_retryable(&self) -> bool {
        match self {
            AnnotateError::Transport(_) => true,
            AnnotateError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// What a request is for. Remote backends ignore it; the mock uses it to
/// pick an output shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequestKind {
    Caption { level: u8 },
    QaGeneration,
    Distractors { count: usize },
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedImage {
    pub mime: String,
    pub bytes: Vec<u8>,
}

impl EncodedImage {
    pub fn png(bytes: Vec<u8>) -> Self {
        EncodedImage {
            mime: "image/png".into(),
            bytes,
        }
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }

    fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.mime,
            base64::engine::general_purpose::STANDARD.encode(&self.bytes)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRequest {
    pub system: String,
    pub user: String,
    /// Encoded frames, in presentation order.
    pub images: Vec<EncodedImage>,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Caller-supplied id for the audit trail.
    pub tag: String,
    pub kind: RequestKind,
}

impl AnnotationRequest {
    pub fn text(system: impl Into<String>, user: impl Into<String>, tag: impl Into<String>) -> Self {
        AnnotationRequest {
            system: system.into(),
            user: user.into(),
            images: Vec::new(),
            max_tokens: 1024,
            temperature: 0.7,
            tag: tag.into(),
            kind: RequestKind::Other,
        }
    }

    pub fn validate(&self) -> Result<(), AnnotateError> {
        if self.max_tokens == 0 {
            return Err(AnnotateError::InvalidRequest("max_tokens must be > 0".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(AnnotateError::InvalidRequest("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

pub trait AnnotationBackend: Send + Sync {
    fn complete(&self, req: &AnnotationRequest) -> Result<String, AnnotateError>;
}

impl<B: AnnotationBackend + ?Sized> AnnotationBackend for Arc<B> {
    fn complete(&self, req: &AnnotationRequest) -> Result<String, AnnotateError> {
        (**self).complete(req)
    }
}

impl<B: AnnotationBackend + ?Sized> AnnotationBackend for &B {
    fn complete(&self, req: &AnnotationRequest) -> Result<String, AnnotateError> {
        (**self).complete(req)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendPolicy {
    pub max_retries: usize,
    /// Seconds before the first retry; doubles per attempt.
    pub backoff_base: f64,
    /// Upper bound on any single backoff, seconds.
    pub backoff_ceiling: f64,
    pub max_in_flight: usize,
    pub requests_per_minute: f64,
}

impl Default for BackendPolicy {
    fn default() -> Self {
        BackendPolicy {
            max_retries: 5,
            backoff_base: 1.0,
            backoff_ceiling: 60.0,
            max_in_flight: 4,
            requests_per_minute: 600.0,
        }
    }
}

impl BackendPolicy {
    pub fn validate(&self) -> crate::Result<()> {
        let err = |f: &str| crate::Error::config(format!("backend.policy.{f}"), "must be positive");
        if self.max_retries == 0 {
            return Err(err("max_retries"));
        }
        if !(self.backoff_base > 0.0) {
            return Err(err("backoff_base"));
        }
        if !(self.backoff_ceiling > 0.0) || self.backoff_ceiling < self.backoff_base {
            return Err(crate::Error::config(
                "backend.policy.backoff_ceiling",
                "must be positive and >= backoff_base",
            ));
        }
        if self.max_in_flight == 0 {
            return Err(err("max_in_flight"));
        }
        if !(self.requests_per_minute > 0.0) {
            return Err(err("requests_per_minute"));
        }
        Ok(())
    }

    /// Delay before retry number `attempt` (0-based): `base * 2^attempt`, capped.
    pub fn backoff(&self, attempt: usize) -> Duration {
        let secs = self.backoff_base * 2f64.powi(attempt.min(62) as i32);
        Duration::from_secs_f64(secs.min(self.backoff_ceiling))
    }
}

/// Spaces request starts at least `60 / requests_per_minute` seconds apart.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(requests_per_minute: f64) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(60.0 / requests_per_minute),
            next_slot: Mutex::new(None),
        }
    }

    /// Block until the caller may start a request.
    pub fn acquire(&self) {
        let wait = {
            let mut slot = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let start = match *slot {
                Some(t) if t > now => t,
                _ => now,
            };
            *slot = Some(start + self.interval);
            start.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Retry `op` on retryable errors, sleeping per `policy` between attempts.
/// `op` runs at most `max_retries + 1` times.
pub fn with_retries<T>(
    policy: &BackendPolicy,
    mut op: impl FnMut() -> Result<T, AnnotateError>,
) -> Result<T, AnnotateError> {
    let mut attempt = 0;
    loop {
        match op() {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retryable() => {
                if attempt >= policy.max_retries {
                    return Err(AnnotateError::RetriesExhausted {
                        attempts: attempt + 1,
                        last: e.to_string(),
                    });
                }
                let delay = policy.backoff(attempt);
                log::warn!("retryable annotation error ({e}); retry {} in {:?}", attempt + 1, delay);
                std::thread::sleep(delay);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Run `reqs` with at most `policy.max_in_flight` concurrent calls and a
/// shared request-rate cap. Results keep input order; one failure never
/// aborts the rest.
pub fn complete_batch<B: AnnotationBackend + ?Sized>(
    backend: &B,
    reqs: &[AnnotationRequest],
    policy: &BackendPolicy,
) -> Vec<Result<String, AnnotateError>> {
    if reqs.is_empty() {
        return Vec::new();
    }
    let limiter = RateLimiter::new(policy.requests_per_minute);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<String, AnnotateError>>>> =
        Mutex::new(vec![None; reqs.len()]);
    let workers = policy.max_in_flight.max(1).min(reqs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= reqs.len() {
                    break;
                }
                limiter.acquire();
                let r = reqs[i].validate().and_then(|_| backend.complete(&reqs[i]));
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every index is claimed by a worker"))
        .collect()
}

/// Deterministic offline backend.
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub seed: u64,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend { seed }
    }

    fn digest(&self, req: &AnnotationRequest) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(req.system.as_bytes());
        h.update([0]);
        h.update(req.user.as_bytes());
        h.update([0]);
        for img in &req.images {
            h.update(img.digest().as_bytes());
            h.update([0]);
        }
        h.finalize().into()
    }
}

impl AnnotationBackend for MockBackend {
    fn complete(&self, req: &AnnotationRequest) -> Result<String, AnnotateError> {
        req.validate()?;
        let mut rng = ChaCha8Rng::from_seed(self.digest(req));
        Ok(match req.kind {
            RequestKind::Caption { level } => mock_caption(&mut rng, level, req.images.len()),
            RequestKind::QaGeneration => mock_qa(&mut rng, &req.system),
            RequestKind::Distractors { count } => mock_distractors(&mut rng, count),
            RequestKind::Other => mock_sentence(&mut rng),
        })
    }
}

const SUBJECTS: &[&str] = &[
    "a man in a blue jacket",
    "a young woman",
    "a child",
    "two cyclists",
    "a chef",
    "an elderly couple",
    "a small dog",
    "a group of friends",
    "a street performer",
    "a delivery driver",
];
const ACTIONS: &[&str] = &[
    "walks across",
    "arranges items on",
    "points toward",
    "carefully inspects",
    "runs past",
    "sets down a bag near",
    "waves at someone beside",
    "cleans",
    "climbs onto",
    "laughs while standing by",
];
const OBJECTS: &[&str] = &[
    "a wooden table",
    "a parked red car",
    "the kitchen counter",
    "a stack of books",
    "a fountain",
    "a bicycle",
    "a large window",
    "a market stall",
    "a staircase",
    "a whiteboard",
];
const PLACES: &[&str] = &[
    "a sunlit kitchen",
    "a busy city street",
    "a quiet park",
    "an office",
    "a living room",
    "a beach at dusk",
    "a gym",
    "a classroom",
    "a train platform",
    "a backyard garden",
];
const CAMERA: &[&str] = &[
    "The camera pans slowly to the left.",
    "The camera stays fixed.",
    "The camera zooms in gradually.",
    "The camera follows the movement from behind.",
    "The view shifts to a wider shot.",
];
const ADJECTIVES: &[&str] = &[
    "green", "tall", "round", "broken", "shiny", "striped", "tiny", "heavy", "old", "folded",
];
const NOUNS: &[&str] = &[
    "umbrella", "lamp", "basket", "ladder", "guitar", "kettle", "scarf", "bench", "clock", "helmet",
];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().unwrap_or("")
}

fn mock_sentence(rng: &mut ChaCha8Rng) -> String {
    let subject = pick(rng, SUBJECTS);
    let mut s = format!(
        "{} {} {} in {}.",
        subject,
        pick(rng, ACTIONS),
        pick(rng, OBJECTS),
        pick(rng, PLACES)
    );
    capitalize(&mut s);
    s
}

fn capitalize(s: &mut String) {
    if let Some(first) = s.get(0..1) {
        let up = first.to_uppercase();
        s.replace_range(0..1, &up);
    }
}

fn mock_caption(rng: &mut ChaCha8Rng, level: u8, frames: usize) -> String {
    let lead = match level {
        1 => "In this segment,",
        2 => "So far in the video,",
        _ => "The video",
    };
    let subject = pick(rng, SUBJECTS);
    let place = pick(rng, PLACES);
    let mut out = if level >= 3 {
        format!("{lead} takes place in {place}, where {subject} {} {}.", pick(rng, ACTIONS), pick(rng, OBJECTS))
    } else {
        format!("{lead} {subject} {} {} in {place}.", pick(rng, ACTIONS), pick(rng, OBJECTS))
    };
    let extra = rng.gen_range(1..=3);
    for _ in 0..extra {
        out.push(' ');
        if rng.gen_bool(0.3) {
            out.push_str(pick(rng, CAMERA));
        } else {
            out.push_str(&mock_sentence(rng));
        }
    }
    if level == 1 && frames > 0 {
        out.push_str(&format!(" Across the {frames} frames the scene stays consistent."));
    }
    if level >= 3 {
        out.push_str(" Overall, the video presents a continuous sequence of everyday activity.");
    }
    out
}

/// Dimension names from `# Name:` header lines of a QA system prompt.
fn prompt_dimensions(system: &str) -> Vec<String> {
    system
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|rest| rest.split_once(':').map(|(name, _)| name.trim().to_string()))
        .filter(|n| !n.is_empty())
        .collect()
}

fn mock_qa(rng: &mut ChaCha8Rng, system: &str) -> String {
    let dims = prompt_dimensions(system);
    let mut entries: Vec<serde_json::Value> = Vec::new();
    let mut questions: Vec<String> = Vec::new();
    for dim in &dims {
        if !rng.gen_bool(0.8) {
            continue;
        }
        let roll: f64 = rng.gen();
        let (q, a) = if roll < 0.08 {
            ("None".to_string(), "None".to_string())
        } else if roll < 0.16 {
            (
                format!("What color is the {} near {}?", pick(rng, NOUNS), pick(rng, OBJECTS)),
                "Does not mention the color in the description.".to_string(),
            )
        } else if roll < 0.26 && !questions.is_empty() {
            let q = questions.choose(rng).cloned().unwrap_or_default();
            (q, mock_sentence(rng))
        } else {
            let q = format!(
                "In the {} part of the video, what does {} do with {} {}?",
                pick(rng, &["first", "middle", "final"]),
                pick(rng, SUBJECTS),
                pick(rng, &["the", "a"]),
                pick(rng, NOUNS)
            );
            (q, mock_sentence(rng))
        };
        if q != "None" {
            questions.push(q.clone());
        }
        entries.push(json!({"Dimension": dim, "Question": q, "Answer": a}));
    }
    let body = serde_json::to_string_pretty(&entries).expect("json values serialize");
    if rng.gen_bool(0.3) {
        format!("Here are the question-answer pairs:\n```json\n{body}\n```")
    } else {
        body
    }
}

fn mock_distractors(rng: &mut ChaCha8Rng, count: usize) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut guard = 0;
    while out.len() < count && guard < 10_000 {
        guard += 1;
        let mut s = format!(
            "{} {} a {} {}.",
            pick(rng, SUBJECTS),
            pick(rng, ACTIONS),
            pick(rng, ADJECTIVES),
            pick(rng, NOUNS)
        );
        capitalize(&mut s);
        if !out.contains(&s) {
            out.push(s);
        }
    }
    serde_json::to_string(&out).expect("strings serialize")
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub policy: BackendPolicy,
    pub timeout: Duration,
}

/// Chat-completion client over blocking HTTP.
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    limiter: RateLimiter,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, AnnotateError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| AnnotateError::Transport(e.to_string()))?;
        let limiter = RateLimiter::new(config.policy.requests_per_minute);
        Ok(RemoteBackend {
            config,
            client,
            limiter,
        })
    }

    pub fn request_body(&self, req: &AnnotationRequest) -> serde_json::Value {
        let mut user_parts = vec![json!({"type": "text", "text": req.user})];
        for img in &req.images {
            user_parts.push(json!({"type": "image_url", "image_url": {"url": img.data_url()}}));
        }
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": user_parts},
            ],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, AnnotateError> {
        self.limiter.acquire();
        let mut rb = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.config.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().map_err(|e| AnnotateError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| AnnotateError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(AnnotateError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| AnnotateError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| AnnotateError::MalformedResponse("no choices in response".into()))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl AnnotationBackend for RemoteBackend {
    fn complete(&self, req: &AnnotationRequest) -> Result<String, AnnotateError> {
        req.validate()?;
        let body = self.request_body(req);
        with_retries(&self.config.policy, || self.attempt(&body))
    }
}

/// Append-only JSONL log of every request and its outcome.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    file: Mutex<File>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AuditRecord {
    pub tag: String,
    pub unix_ms: u128,
    pub kind: RequestKind,
    pub system: String,
    pub user: String,
    pub image_digests: Vec<String>,
    pub response: Option<String>,
    pub error: Option<String>,
}

impl AuditLog {
    pub fn open(path: &Path) -> crate::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        }
        crate::jsonl::truncate_partial_tail(path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| crate::Error::io(path, e))?;
        Ok(AuditLog {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&self, req: &AnnotationRequest, outcome: &Result<String, AnnotateError>) {
        let rec = AuditRecord {
            tag: req.tag.clone(),
            unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            kind: req.kind,
            system: req.system.clone(),
            user: req.user.clone(),
            image_digests: req.images.iter().map(EncodedImage::digest).collect(),
            response: outcome.as_ref().ok().cloned(),
            error: outcome.as_ref().err().map(|e| e.to_string()),
        };
        let mut line = match serde_json::to_vec(&rec) {
            Ok(l) => l,
            Err(e) => {
                log::error!("audit serialization failed: {e}");
                return;
            }
        };
        line.push(b'\n');
        // one write per record under the lock keeps lines whole
        let mut f = self.file.lock().unwrap();
        if let Err(e) = f.write_all(&line) {
            log::error!("audit write to {} failed: {e}", self.path.display());
        }
    }
}

/// Backend wrapper that logs every call to an [`AuditLog`].
pub struct Audited<B> {
    inner: B,
    log: Arc<AuditLog>,
}

impl<B> Audited<B> {
    pub fn new(inner: B, log: Arc<AuditLog>) -> Self {
        Audited { inner, log }
    }
}

impl<B: AnnotationBackend> AnnotationBackend for Audited<B> {
    fn complete(&self, req: &AnnotationRequest) -> Result<String, AnnotateError> {
        let out = self.inner.complete(req);
        self.log.record(req, &out);
        out
    }
}
