//! Completion backends.
//!
//! [`HttpLlm`] talks to a chat-completion endpoint. [`TranscriptLlm`] replays
//! canned responses, either strictly in order or keyed by prompt digest, and
//! [`ScriptedLlm`] answers through a closure. [`RecordingLlm`] wraps any
//! backend and keeps every exchange so it can be saved as a keyed transcript.

mod http;
mod transcript;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::Prompt;

pub use http::{HttpLlm, LlmConfig, RetryPolicy};
pub use transcript::{Transcript, TranscriptEntry, TranscriptLlm, TranscriptMode};

/// Default prompt ceiling in estimated tokens.
pub const DEFAULT_MAX_TOKENS: usize = 4096;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt needs about {estimated} tokens, limit is {limit}")]
    TokenLimitExceeded { estimated: usize, limit: usize },
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("endpoint returned an unusable response: {0}")]
    BadResponse(String),
    #[error("transcript exhausted after {used} response(s)")]
    TranscriptExhausted { used: usize },
    #[error("no transcript entry for prompt digest {digest}")]
    UnmatchedPrompt { digest: String },
    #[error("invalid transcript: {0}")]
    InvalidTranscript(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("scripted backend failed: {0}")]
    Scripted(String),
}

/// A text completion backend.
///
/// Implementations must reject prompts whose estimate exceeds
/// [`LlmClient::max_prompt_tokens`] with [`LlmError::TokenLimitExceeded`].
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError>;

    fn max_prompt_tokens(&self) -> usize {
        DEFAULT_MAX_TOKENS
    }
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }

    fn max_prompt_tokens(&self) -> usize {
        (**self).max_prompt_tokens()
    }
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }

    fn max_prompt_tokens(&self) -> usize {
        (**self).max_prompt_tokens()
    }
}

pub(crate) fn check_limit(prompt: &Prompt, limit: usize) -> Result<(), LlmError> {
    let estimated = prompt.estimated_tokens();
    if estimated > limit {
        return Err(LlmError::TokenLimitExceeded { estimated, limit });
    }
    Ok(())
}

type Script = dyn Fn(&Prompt) -> Result<String, LlmError> + Send + Sync;

/// Answers by calling a closure.
pub struct ScriptedLlm {
    script: Box<Script>,
    limit: usize,
}

impl ScriptedLlm {
    pub fn new(script: impl Fn(&Prompt) -> Result<String, LlmError> + Send + Sync + 'static) -> Self {
        ScriptedLlm {
            script: Box::new(script),
            limit: DEFAULT_MAX_TOKENS,
        }
    }

    /// Always returns the same text.
    pub fn constant(response: impl Into<String>) -> Self {
        let response = response.into();
        Self::new(move |_| Ok(response.clone()))
    }
}

impl LlmClient for ScriptedLlm {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        check_limit(prompt, self.limit)?;
        (self.script)(prompt)
    }

    fn max_prompt_tokens(&self) -> usize {
        self.limit
    }
}

/// One prompt/response pair seen by a [`RecordingLlm`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: Prompt,
    pub response: Option<String>,
    pub error: Option<String>,
}

/// Wraps a backend and records every call.
pub struct RecordingLlm<L> {
    inner: L,
    log: Mutex<Vec<Exchange>>,
}

impl<L: LlmClient> RecordingLlm<L> {
    pub fn new(inner: L) -> Self {
        RecordingLlm {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("recording lock").clone()
    }

    pub fn prompts(&self) -> Vec<Prompt> {
        self.exchanges().into_iter().map(|e| e.prompt).collect()
    }

    /// Successful exchanges as a keyed transcript.
    pub fn to_transcript(&self) -> Transcript {
        let mut transcript = Transcript::keyed(Vec::new());
        for e in self.exchanges() {
            if let Some(response) = e.response {
                let digest = e.prompt.digest();
                if !transcript.entries.iter().any(|t| t.digest.as_deref() == Some(&digest)) {
                    transcript.entries.push(TranscriptEntry {
                        digest: Some(digest),
                        ordinal: None,
                        response,
                    });
                }
            }
        }
        transcript
    }

    pub fn into_inner(self) -> L {
        self.inner
    }
}

impl<L: LlmClient> LlmClient for RecordingLlm<L> {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let result = self.inner.complete(prompt);
        let (response, error) = match &result {
            Ok(text) => (Some(text.clone()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.log.lock().expect("recording lock").push(Exchange {
            prompt: prompt.clone(),
            response,
            error,
        });
        result
    }

    fn max_prompt_tokens(&self) -> usize {
        self.inner.max_prompt_tokens()
    }
}
