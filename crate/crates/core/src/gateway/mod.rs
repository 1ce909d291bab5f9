//! Language-model services: text completion and text embedding.
//!
//! [`HttpGateway`] speaks the common `/completions` + `/embeddings` JSON
//! interface. [`ScriptedGateway`], [`SimulatedGateway`] and [`HashEmbedder`]
//! are deterministic in-process stand-ins for tests and offline runs.

mod http;
mod mock;

pub use http::{ApiKey, HttpGateway, HttpReply, GatewayConfig, Transport, UreqTransport, Sleeper, ThreadSleeper};
pub use mock::{HashEmbedder, ScriptedGateway, SimulatedGateway, SimulationConfig};

use thiserror::Error;

/// Sampling settings for data generation.
pub const GENERATION_TEMPERATURE: f64 = 1.0;
pub const GENERATION_TOP_P: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("empty completion")]
    EmptyCompletion,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gateway not configured: {0}")]
    Config(String),
    #[error("scripted gateway has no responses left")]
    Exhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub stop: Vec<String>,
}

impl CompletionRequest {
    /// Sampling at temperature 1, top_p 1, as used for synthetic data.
    pub fn sampling(prompt: impl Into<String>, max_tokens: u32) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            max_tokens,
            temperature: GENERATION_TEMPERATURE,
            top_p: GENERATION_TOP_P,
            stop: vec![],
        }
    }

    /// Greedy single-line decoding, as used for action selection.
    pub fn greedy_line(prompt: impl Into<String>, max_tokens: u32) -> Self {
        CompletionRequest { prompt: prompt.into(), max_tokens, temperature: 0.0, top_p: 1.0, stop: vec!["\n".into()] }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_tokens < 1 {
            return Err(GatewayError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} < 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidRequest(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingRequest {
    pub texts: Vec<String>,
}

impl EmbeddingRequest {
    pub fn new<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        EmbeddingRequest { texts: texts.into_iter().map(Into::into).collect() }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.texts.is_empty() {
            return Err(GatewayError::InvalidRequest("no texts to embed".into()));
        }
        if let Some(i) = self.texts.iter().position(|t| t.trim().is_empty()) {
            return Err(GatewayError::InvalidRequest(format!("text {i} is empty")));
        }
        Ok(())
    }
}

pub trait LmGateway: Send + Sync {
    /// First completion, cut at the first stop sequence. Never empty.
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError>;

    /// One unit-length vector per input text.
    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f32>>, GatewayError>;

    /// Identifier recorded in provenance.
    fn model_id(&self) -> String;
}

impl<G: LmGateway + ?Sized> LmGateway for &G {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f32>>, GatewayError> {
        (**self).embed(request)
    }
    fn model_id(&self) -> String {
        (**self).model_id()
    }
}

impl<G: LmGateway + ?Sized> LmGateway for std::sync::Arc<G> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f32>>, GatewayError> {
        (**self).embed(request)
    }
    fn model_id(&self) -> String {
        (**self).model_id()
    }
}

impl<G: LmGateway + ?Sized> LmGateway for Box<G> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f32>>, GatewayError> {
        (**self).embed(request)
    }
    fn model_id(&self) -> String {
        (**self).model_id()
    }
}

/// Cut `text` at the earliest occurrence of any stop sequence.
pub fn truncate_at_stop<'a>(text: &'a str, stops: &[String]) -> &'a str {
    let cut = stops.iter().filter(|s| !s.is_empty()).filter_map(|s| text.find(s.as_str())).min();
    match cut {
        Some(i) => &text[..i],
        None => text,
    }
}

/// Post-process a raw completion: stop-sequence truncation, reject empties.
pub fn finish_completion(raw: &str, request: &CompletionRequest) -> Result<String, GatewayError> {
    let text = truncate_at_stop(raw, &request.stop);
    if text.trim().is_empty() {
        return Err(GatewayError::EmptyCompletion);
    }
    Ok(text.to_string())
}

pub fn l2_normalize(v: &mut [f32]) -> Result<(), GatewayError> {
    let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(GatewayError::Malformed("embedding has zero or non-finite norm".into()));
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    Ok(())
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_truncation() {
        let req = CompletionRequest { stop: vec!["\n".into()], ..CompletionRequest::sampling("p", 8) };
        assert_eq!(finish_completion("line1\nline2", &req).unwrap(), "line1");
        assert_eq!(finish_completion("\nline2", &req), Err(GatewayError::EmptyCompletion));
        assert_eq!(truncate_at_stop("abcXYdef", &["Y".into(), "c".into()]), "ab");
        assert_eq!(truncate_at_stop("abc", &[]), "abc");
    }

    #[test]
    fn request_validation() {
        assert!(CompletionRequest::sampling("p", 0).validate().is_err());
        assert!(CompletionRequest { top_p: 0.0, ..CompletionRequest::sampling("p", 1) }.validate().is_err());
        assert!(CompletionRequest { temperature: -1.0, ..CompletionRequest::sampling("p", 1) }.validate().is_err());
        assert!(CompletionRequest::greedy_line("p", 1).validate().is_ok());
        assert!(EmbeddingRequest::new(Vec::<String>::new()).validate().is_err());
        assert!(EmbeddingRequest::new(["a", " "]).validate().is_err());
    }

    #[test]
    fn normalization() {
        let mut v = vec![3.0, 4.0];
        l2_normalize(&mut v).unwrap();
        assert!((dot(&v, &v) - 1.0).abs() < 1e-6);
        assert!(l2_normalize(&mut [0.0, 0.0]).is_err());
    }
}
