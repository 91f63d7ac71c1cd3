use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use dashmap::DashMap;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HttpMethod {
    Get,
    Post,
}

impl HttpMethod {
    fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: HttpMethod,
    pub url: String,
    pub params: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
    pub body: Option<String>,
    pub timeout: Option<Duration>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self {
            method: HttpMethod::Get,
            url: url.into(),
            params: Vec::new(),
            headers: Vec::new(),
            body: None,
            timeout: None,
        }
    }

    pub fn post(url: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            method: HttpMethod::Post,
            body: Some(body.into()),
            ..Self::get(url)
        }
    }

    pub fn param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.push((key.into(), value.into()));
        self
    }

    pub fn header(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((key.into(), value.into()));
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    /// Method, URL, sorted parameters and body. Headers and timeouts are
    /// not part of the key.
    pub fn canonical_key(&self) -> String {
        let mut params = self.params.clone();
        params.sort();
        let query = url::form_urlencoded::Serializer::new(String::new())
            .extend_pairs(params)
            .finish();
        let mut key = format!(
            "{} {}",
            self.method.as_str(),
            self.url.trim_end_matches('/')
        );
        if !query.is_empty() {
            key.push('?');
            key.push_str(&query);
        }
        if let Some(body) = &self.body {
            key.push('\n');
            key.push_str(body);
        }
        key
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_key().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            body: body.into(),
        }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("no fixture recorded for request {key} (expected {path})")]
    ReplayMiss { key: String, path: String },
    #[error("fixture i/o: {0}")]
    Io(String),
    #[error("transport disabled: {0}")]
    Disabled(String),
}

#[async_trait]
pub trait Transport: Send + Sync {
    /// Non-2xx responses are returned, not turned into errors.
    async fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Live HTTP over reqwest with per-host concurrency limiting and a single
/// retry for transient failures.
pub struct HttpTransport {
    client: reqwest::Client,
    per_host: DashMap<String, Arc<Semaphore>>,
    max_in_flight: usize,
    retry_backoff: Duration,
    default_timeout: Duration,
}

impl HttpTransport {
    pub fn new() -> Self {
        Self::with_limits(1, Duration::from_secs(1))
    }

    pub fn with_limits(max_in_flight_per_host: usize, retry_backoff: Duration) -> Self {
        let client = reqwest::Client::builder()
            .user_agent(concat!(
                "kgqa/",
                env!("CARGO_PKG_VERSION"),
                " (knowledge-graph question answering)"
            ))
            .build()
            .expect("static client configuration");
        Self {
            client,
            per_host: DashMap::new(),
            max_in_flight: max_in_flight_per_host.max(1),
            retry_backoff,
            default_timeout: Duration::from_secs(60),
        }
    }

    fn semaphore(&self, url: &str) -> Arc<Semaphore> {
        let host = url::Url::parse(url)
            .ok()
            .and_then(|u| u.host_str().map(str::to_string))
            .unwrap_or_default();
        self.per_host
            .entry(host)
            .or_insert_with(|| Arc::new(Semaphore::new(self.max_in_flight)))
            .clone()
    }

    async fn send_once(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let timeout = request.timeout.unwrap_or(self.default_timeout);
        let mut builder = match request.method {
            HttpMethod::Get => self.client.get(&request.url),
            HttpMethod::Post => self.client.post(&request.url),
        };
        if !request.params.is_empty() {
            builder = builder.query(&request.params);
        }
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        if let Some(body) = &request.body {
            builder = builder.body(body.clone());
        }
        let response = builder.timeout(timeout).send().await.map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout(timeout)
            } else {
                TransportError::Network(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let body = response.text().await.map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout(timeout)
            } else {
                TransportError::Network(e.to_string())
            }
        })?;
        Ok(HttpResponse { status, body })
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

fn is_transient_status(status: u16) -> bool {
    matches!(status, 429 | 502 | 503 | 504)
}

#[async_trait]
impl Transport for HttpTransport {
    async fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let semaphore = self.semaphore(&request.url);
        let _permit = semaphore
            .acquire()
            .await
            .map_err(|e| TransportError::Network(e.to_string()))?;
        match self.send_once(request).await {
            Ok(resp) if !is_transient_status(resp.status) => Ok(resp),
            Err(TransportError::Timeout(d)) => Err(TransportError::Timeout(d)),
            first => {
                tracing::debug!(url = %request.url, "transient failure, retrying once");
                tokio::time::sleep(self.retry_backoff).await;
                match self.send_once(request).await {
                    Ok(resp) => Ok(resp),
                    Err(e) => match first {
                        Ok(resp) => Ok(resp),
                        Err(_) => Err(e),
                    },
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureMode {
    /// Serve stored responses only; a missing fixture is an error.
    Replay,
    /// Forward to the inner transport and store every response.
    Record,
}

#[derive(Serialize, Deserialize)]
struct FixtureMeta {
    request: String,
    status: u16,
}

/// Record/replay layer. Fixtures live at `<dir>/<sha256(key)>.json` with the
/// response body stored verbatim, plus a `<hash>.meta.json` sidecar holding
/// the canonical request and the status code.
pub struct FixtureTransport {
    dir: PathBuf,
    mode: FixtureMode,
    inner: Option<Arc<dyn Transport>>,
    cache: Mutex<HashMap<String, HttpResponse>>,
}

impl FixtureTransport {
    /// `dir` is the per-backend directory, e.g. `fixtures/wikidata`.
    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            mode: FixtureMode::Replay,
            inner: None,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn record(dir: impl Into<PathBuf>, inner: Arc<dyn Transport>) -> Self {
        Self {
            dir: dir.into(),
            mode: FixtureMode::Record,
            inner: Some(inner),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn mode(&self) -> FixtureMode {
        self.mode
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn body_path(&self, request: &HttpRequest) -> PathBuf {
        self.dir.join(format!("{}.json", request.digest()))
    }

    /// Store a response for `request` as if it had been recorded.
    pub fn store(
        &self,
        request: &HttpRequest,
        response: &HttpResponse,
    ) -> Result<(), TransportError> {
        let digest = request.digest();
        std::fs::create_dir_all(&self.dir).map_err(|e| TransportError::Io(e.to_string()))?;
        let meta = FixtureMeta {
            request: request.canonical_key(),
            status: response.status,
        };
        let meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
        write_atomic(&self.dir.join(format!("{digest}.meta.json")), &meta_json)?;
        write_atomic(&self.dir.join(format!("{digest}.json")), &response.body)?;
        self.cache.lock().insert(digest, response.clone());
        Ok(())
    }

    fn load(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let digest = request.digest();
        if let Some(hit) = self.cache.lock().get(&digest) {
            return Ok(hit.clone());
        }
        let path = self.dir.join(format!("{digest}.json"));
        let body = match std::fs::read_to_string(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(TransportError::ReplayMiss {
                    key: request.canonical_key(),
                    path: path.display().to_string(),
                })
            }
            Err(e) => return Err(TransportError::Io(e.to_string())),
        };
        let status = match std::fs::read_to_string(self.dir.join(format!("{digest}.meta.json"))) {
            Ok(meta) => {
                serde_json::from_str::<FixtureMeta>(&meta)
                    .map_err(|e| TransportError::Io(format!("bad fixture meta: {e}")))?
                    .status
            }
            Err(_) => 200,
        };
        let response = HttpResponse { status, body };
        self.cache.lock().insert(digest, response.clone());
        Ok(response)
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), TransportError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| TransportError::Io(e.to_string()))?;
    std::fs::rename(&tmp, path).map_err(|e| TransportError::Io(e.to_string()))
}

#[async_trait]
impl Transport for FixtureTransport {
    async fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        match self.mode {
            FixtureMode::Replay => self.load(request),
            FixtureMode::Record => {
                let inner = self.inner.as_ref().ok_or_else(|| {
                    TransportError::Disabled("record mode without inner transport".into())
                })?;
                let response = inner.send(request).await?;
                self.store(request, &response)?;
                Ok(response)
            }
        }
    }
}

/// Refuses every request and counts attempts. Plugged in wherever a code path
/// must not touch the network.
#[derive(Default)]
pub struct FailingTransport {
    calls: AtomicUsize,
}

impl FailingTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl Transport for FailingTransport {
    async fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::Disabled(format!(
            "network access attempted: {}",
            request.canonical_key()
        )))
    }
}
