//! Interfaces to remote models, plus scripted doubles.
//!
//! Concrete HTTP clients, the on-disk response cache and the trigram embedder
//! live in the `chainqa` crate; everything here is transport-free.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

/// Sampling temperature used by default for answering and judging.
pub const DEFAULT_TEMPERATURE: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChatError {
    #[error("environment variable {0} is not set")]
    MissingAuth(String),
    #[error("request timed out")]
    Timeout,
    #[error("service returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no scripted response for prompt")]
    Unscripted,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("environment variable {0} is not set")]
    MissingAuth(String),
    #[error("embedding request failed: {0}")]
    Transport(String),
    #[error("malformed embedding response: {0}")]
    Malformed(String),
}

/// A chat model that returns `n` sampled completions for a single-turn
/// prompt. Implementations must return exactly `n` texts or an error.
pub trait ChatClient: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>, ChatError>;
}

impl<T: ChatClient + ?Sized> ChatClient for &T {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>, ChatError> {
        (**self).complete(prompt, temperature, n)
    }
}

impl<T: ChatClient + ?Sized> ChatClient for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>, ChatError> {
        (**self).complete(prompt, temperature, n)
    }
}

impl<T: ChatClient + ?Sized> ChatClient for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>, ChatError> {
        (**self).complete(prompt, temperature, n)
    }
}

/// Text encoder producing unit-norm vectors of a fixed dimension, so the dot
/// product is the cosine similarity.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for &T {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        (**self).embed(text)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        (**self).embed(text)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Chat double answering from fixture texts keyed by prompt.
///
/// For a request of `n` samples the scripted list is cycled from its start,
/// so `[Yes, Yes, No]` with `n = 3` yields exactly those three votes.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    id: String,
    by_prompt: BTreeMap<String, Vec<String>>,
    fallback: Option<Vec<String>>,
    calls: AtomicUsize,
}

impl ScriptedChat {
    pub fn new(id: &str) -> Self {
        ScriptedChat { id: id.to_string(), ..Default::default() }
    }

    /// Every prompt gets `response`.
    pub fn constant(id: &str, response: &str) -> Self {
        Self::new(id).with_fallback([response])
    }

    pub fn with<I, S>(mut self, prompt: &str, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.by_prompt.insert(prompt.to_string(), responses.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_fallback<I, S>(mut self, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.fallback = Some(responses.into_iter().map(Into::into).collect());
        self
    }

    /// Number of `complete` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for ScriptedChat {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str, _temperature: f64, n: usize) -> Result<Vec<String>, ChatError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let script = self
            .by_prompt
            .get(prompt)
            .or(self.fallback.as_ref())
            .filter(|s| !s.is_empty())
            .ok_or(ChatError::Unscripted)?;
        Ok((0..n).map(|i| script[i % script.len()].clone()).collect())
    }
}
