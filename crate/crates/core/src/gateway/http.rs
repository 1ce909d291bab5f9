use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{finish_completion, l2_normalize, CompletionRequest, EmbeddingRequest, GatewayError, LmGateway};

pub const API_KEY_ENV: &str = "LM_API_KEY";
pub const BASE_URL_ENV: &str = "LM_BASE_URL";

/// Raw HTTP answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// POSTs a JSON body. `Err` means no HTTP status was obtained.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<HttpReply, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        UreqTransport { agent: config.into() }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<HttpReply, String> {
        let mut response = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {bearer}"))
            .send_json(body)
            .map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Credential wrapper that never prints its contents.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }
    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub base_url: String,
    pub api_key: ApiKey,
    pub completion_model: String,
    pub embedding_model: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles each retry.
    pub initial_backoff: Duration,
}

impl GatewayConfig {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        GatewayConfig {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: ApiKey::new(api_key),
            completion_model: "gpt-4".into(),
            embedding_model: "text-embedding-3-small".into(),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }

    /// Read `LM_BASE_URL` and `LM_API_KEY`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let base = std::env::var(BASE_URL_ENV).map_err(|_| GatewayError::Config(format!("{BASE_URL_ENV} is not set")))?;
        let key = std::env::var(API_KEY_ENV).map_err(|_| GatewayError::Config(format!("{API_KEY_ENV} is not set")))?;
        Ok(GatewayConfig::new(base, key))
    }

    /// Backoff before retry number `retry` (1-based): 1s, 2s, 4s, ...
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(retry.saturating_sub(1))
    }
}

/// Counting semaphore capping concurrent requests.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(slots: usize) -> Self {
        Limiter { free: Mutex::new(slots.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().expect("limiter poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("limiter poisoned");
        }
        *free -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter poisoned") += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpGateway {
    config: GatewayConfig,
    transport: Box<dyn Transport>,
    sleeper: Box<dyn Sleeper>,
    limiter: Limiter,
}

impl fmt::Debug for HttpGateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpGateway").field("config", &self.config).finish_non_exhaustive()
    }
}

fn retryable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl HttpGateway {
    pub fn new(config: GatewayConfig) -> Self {
        let transport = Box::new(UreqTransport::new(config.timeout));
        Self::with_transport(config, transport, Box::new(ThreadSleeper))
    }

    pub fn with_transport(config: GatewayConfig, transport: Box<dyn Transport>, sleeper: Box<dyn Sleeper>) -> Self {
        let limiter = Limiter::new(config.max_in_flight);
        HttpGateway { config, transport, sleeper, limiter }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// POST with retries on 429, 5xx and transport failures. Other 4xx fail at once.
    fn post(&self, endpoint: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = format!("{}/{endpoint}", self.config.base_url);
        let attempts = self.config.max_attempts.max(1);
        let mut last = GatewayError::Transport("no attempt made".into());
        for attempt in 1..=attempts {
            if attempt > 1 {
                let wait = self.config.backoff(attempt - 1);
                tracing::debug!(%url, attempt, ?wait, "retrying after backoff");
                self.sleeper.sleep(wait);
            }
            let reply = {
                let _slot = self.limiter.acquire();
                self.transport.post_json(&url, self.config.api_key.expose(), body)
            };
            match reply {
                Ok(HttpReply { status, body }) if (200..300).contains(&status) => {
                    return serde_json::from_str(&body).map_err(|e| GatewayError::Malformed(e.to_string()));
                }
                Ok(HttpReply { status, body }) => {
                    tracing::warn!(%url, status, attempt, "request failed");
                    last = GatewayError::Status { status, body };
                    if !retryable_status(status) {
                        return Err(last);
                    }
                }
                Err(e) => {
                    tracing::warn!(%url, attempt, error = %e, "transport failure");
                    last = GatewayError::Transport(e);
                }
            }
        }
        Err(last)
    }
}

impl LmGateway for HttpGateway {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let mut body = json!({
            "model": self.config.completion_model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "top_p": request.top_p,
            "n": 1,
        });
        if !request.stop.is_empty() {
            body["stop"] = json!(request.stop);
        }
        let reply = self.post("completions", &body)?;
        let text = reply
            .pointer("/choices/0/text")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::Malformed("missing choices[0].text".into()))?;
        finish_completion(text, request)
    }

    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f32>>, GatewayError> {
        request.validate()?;
        let body = json!({ "model": self.config.embedding_model, "input": request.texts });
        let reply = self.post("embeddings", &body)?;
        let data = reply
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Malformed("missing data array".into()))?;
        if data.len() != request.texts.len() {
            return Err(GatewayError::Malformed(format!(
                "expected {} embeddings, got {}",
                request.texts.len(),
                data.len()
            )));
        }
        let mut out: Vec<(usize, Vec<f32>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let mut vector: Vec<f32> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| GatewayError::Malformed("missing embedding".into()))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<_>>()
                .ok_or_else(|| GatewayError::Malformed("non-numeric embedding".into()))?;
            l2_normalize(&mut vector)?;
            out.push((index, vector));
        }
        out.sort_by_key(|(i, _)| *i);
        let dim = out[0].1.len();
        if out.iter().any(|(_, v)| v.len() != dim) {
            return Err(GatewayError::Malformed("embedding dimensions differ".into()));
        }
        Ok(out.into_iter().map(|(_, v)| v).collect())
    }

    fn model_id(&self) -> String {
        self.config.completion_model.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;
    use std::sync::Arc;

    struct Canned {
        replies: Mutex<VecDeque<Result<HttpReply, String>>>,
        calls: Arc<Mutex<Vec<(String, Value)>>>,
    }

    impl Transport for Canned {
        fn post_json(&self, url: &str, _bearer: &str, body: &Value) -> Result<HttpReply, String> {
            self.calls.lock().unwrap().push((url.to_string(), body.clone()));
            self.replies.lock().unwrap().pop_front().unwrap_or_else(|| Err("no more replies".into()))
        }
    }

    struct RecordingSleeper(Arc<Mutex<Vec<Duration>>>);

    impl Sleeper for RecordingSleeper {
        fn sleep(&self, d: Duration) {
            self.0.lock().unwrap().push(d);
        }
    }

    type Calls = Arc<Mutex<Vec<(String, Value)>>>;

    fn gateway(replies: Vec<Result<HttpReply, String>>) -> (HttpGateway, Calls, Arc<Mutex<Vec<Duration>>>) {
        let calls = Arc::new(Mutex::new(vec![]));
        let sleeps = Arc::new(Mutex::new(vec![]));
        let transport = Canned { replies: Mutex::new(replies.into()), calls: calls.clone() };
        let gw = HttpGateway::with_transport(
            GatewayConfig::new("http://lm.local/v1/", "sk-secret"),
            Box::new(transport),
            Box::new(RecordingSleeper(sleeps.clone())),
        );
        (gw, calls, sleeps)
    }

    fn ok(body: &str) -> Result<HttpReply, String> {
        Ok(HttpReply { status: 200, body: body.into() })
    }

    fn status(s: u16) -> Result<HttpReply, String> {
        Ok(HttpReply { status: s, body: "busy".into() })
    }

    #[test]
    fn two_429s_then_success() {
        let (gw, calls, sleeps) = gateway(vec![status(429), status(429), ok(r#"{"choices":[{"text":"hello"}]}"#)]);
        assert_eq!(gw.complete(&CompletionRequest::sampling("p", 4)).unwrap(), "hello");
        assert_eq!(calls.lock().unwrap().len(), 3);
        assert_eq!(*sleeps.lock().unwrap(), [Duration::from_secs(1), Duration::from_secs(2)]);
        let (url, body) = &calls.lock().unwrap()[0];
        assert_eq!(url, "http://lm.local/v1/completions");
        assert_eq!(body["prompt"], "p");
        assert_eq!(body["temperature"], 1.0);
        assert_eq!(body["top_p"], 1.0);
    }

    #[test]
    fn three_failures_give_up() {
        let (gw, calls, _) = gateway(vec![status(503), Err("reset".into()), status(500), ok("{}")]);
        let err = gw.complete(&CompletionRequest::sampling("p", 4)).unwrap_err();
        assert_eq!(err, GatewayError::Status { status: 500, body: "busy".into() });
        assert_eq!(calls.lock().unwrap().len(), 3);
    }

    #[test]
    fn client_errors_not_retried() {
        let (gw, calls, sleeps) = gateway(vec![status(401), ok("{}")]);
        assert!(matches!(gw.complete(&CompletionRequest::sampling("p", 4)), Err(GatewayError::Status { status: 401, .. })));
        assert_eq!(calls.lock().unwrap().len(), 1);
        assert!(sleeps.lock().unwrap().is_empty());
    }

    #[test]
    fn stop_applied_client_side() {
        let (gw, calls, _) = gateway(vec![ok(r#"{"choices":[{"text":"line1\nline2"}]}"#)]);
        assert_eq!(gw.complete(&CompletionRequest::greedy_line("p", 4)).unwrap(), "line1");
        assert_eq!(calls.lock().unwrap()[0].1["stop"], json!(["\n"]));
        let (gw, _, _) = gateway(vec![ok(r#"{"choices":[{"text":"  "}]}"#)]);
        assert_eq!(gw.complete(&CompletionRequest::sampling("p", 4)), Err(GatewayError::EmptyCompletion));
    }

    #[test]
    fn embeddings_are_normalized_and_ordered() {
        let (gw, calls, _) = gateway(vec![ok(
            r#"{"data":[{"index":1,"embedding":[0,2]},{"index":0,"embedding":[3,4]}]}"#,
        )]);
        let v = gw.embed(&EmbeddingRequest::new(["a", "b"])).unwrap();
        assert_eq!(v, vec![vec![0.6, 0.8], vec![0.0, 1.0]]);
        assert_eq!(calls.lock().unwrap()[0].0, "http://lm.local/v1/embeddings");
        assert_eq!(calls.lock().unwrap()[0].1["input"], json!(["a", "b"]));
    }

    #[test]
    fn malformed_replies() {
        let (gw, _, _) = gateway(vec![ok("not json")]);
        assert!(matches!(gw.complete(&CompletionRequest::sampling("p", 4)), Err(GatewayError::Malformed(_))));
        let (gw, _, _) = gateway(vec![ok(r#"{"data":[{"embedding":[1]}]}"#)]);
        assert!(matches!(gw.embed(&EmbeddingRequest::new(["a", "b"])), Err(GatewayError::Malformed(_))));
    }

    #[test]
    fn credential_never_printed() {
        let (gw, _, _) = gateway(vec![]);
        let dbg = format!("{gw:?}");
        assert!(!dbg.contains("sk-secret"), "{dbg}");
        assert!(dbg.contains("redacted"));
    }

    #[test]
    fn backoff_schedule() {
        let c = GatewayConfig::new("x", "k");
        assert_eq!([c.backoff(1), c.backoff(2), c.backoff(3)], [1, 2, 4].map(Duration::from_secs));
    }
}
