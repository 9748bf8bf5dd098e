use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{check_limit, LlmClient, LlmError, DEFAULT_MAX_TOKENS};
use crate::prompt::Prompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Extra attempts after the first.
    pub retries: u32,
    /// Delay before the first retry; doubled on each further retry.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 3,
            backoff_ms: 1000,
        }
    }
}

/// Settings for [`HttpLlm`]. The API key is never serialized or printed.
#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    /// Prompt ceiling in estimated tokens.
    pub max_tokens: usize,
    /// Sent as the request's `max_tokens`, bounding the completion.
    pub response_max_tokens: u32,
    pub temperature: f32,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
    /// When set, sent as a system message ahead of the prompt.
    pub system_message: Option<String>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            api_key: None,
            max_tokens: DEFAULT_MAX_TOKENS,
            response_max_tokens: 1024,
            temperature: 0.0,
            retry: RetryPolicy::default(),
            timeout_secs: 120,
            system_message: None,
        }
    }
}

impl fmt::Debug for LlmConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmConfig")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("max_tokens", &self.max_tokens)
            .field("response_max_tokens", &self.response_max_tokens)
            .field("temperature", &self.temperature)
            .field("retry", &self.retry)
            .field("timeout_secs", &self.timeout_secs)
            .field("system_message", &self.system_message)
            .finish()
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidConfig("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Request body for one prompt.
    pub fn request_body(&self, prompt: &Prompt) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &self.system_message {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt.rendered()}));
        json!({
            "model": self.model,
            "messages": messages,
            "max_tokens": self.response_max_tokens,
            "temperature": self.temperature,
        })
    }
}

/// Chat-completion client over blocking HTTP.
pub struct HttpLlm {
    config: LlmConfig,
    client: reqwest::blocking::Client,
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

impl HttpLlm {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport {
                attempts: 0,
                detail: e.to_string(),
            })?;
        Ok(HttpLlm { config, client })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn attempt(&self, body: &Value) -> Result<String, Attempt> {
        let mut request = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| Attempt::Retry(e.without_url().to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(LlmError::BadResponse(format!("HTTP {status}"))));
        }
        let value: Value = response
            .json()
            .map_err(|e| Attempt::Fatal(LlmError::BadResponse(e.to_string())))?;
        extract_text(&value).map_err(Attempt::Fatal)
    }
}

/// Text of the first choice, chat or legacy completion shape.
pub(crate) fn extract_text(value: &Value) -> Result<String, LlmError> {
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::BadResponse("no choices".into()))?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::BadResponse("first choice has no text".into()))
}

impl LlmClient for HttpLlm {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        check_limit(prompt, self.config.max_tokens)?;
        let body = self.config.request_body(prompt);
        let attempts = self.config.retry.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.retry.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::warn!("retrying completion in {delay} ms: {last}");
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(detail)) => last = detail,
            }
        }
        Err(LlmError::Transport { attempts, detail: last })
    }

    fn max_prompt_tokens(&self) -> usize {
        self.config.max_tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn debug_redacts_key() {
        let config = LlmConfig {
            api_key: Some("sk-very-secret".into()),
            ..LlmConfig::default()
        };
        let shown = format!("{config:?}");
        assert!(!shown.contains("sk-very-secret"));
        assert!(shown.contains("<redacted>"));
        let json = serde_json::to_string(&config).unwrap();
        assert!(!json.contains("sk-very-secret"));
    }

    #[test]
    fn request_shape() {
        let config = LlmConfig::default();
        let body = config.request_body(&Prompt::raw("hello"));
        assert_eq!(body["model"], "gpt-3.5-turbo");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hello");
        assert_eq!(body["max_tokens"], 1024);
        assert_eq!(body["temperature"], 0.0);

        let with_system = LlmConfig {
            system_message: Some("be brief".into()),
            ..LlmConfig::default()
        };
        let body = with_system.request_body(&Prompt::raw("hello"));
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hello");
    }

    #[test]
    fn response_text_shapes() {
        let chat = json!({"choices": [{"message": {"role": "assistant", "content": "[id=2]"}}]});
        assert_eq!(extract_text(&chat).unwrap(), "[id=2]");
        let legacy = json!({"choices": [{"text": "1. [Tap] [\"a\"]"}]});
        assert_eq!(extract_text(&legacy).unwrap(), "1. [Tap] [\"a\"]");
        assert!(extract_text(&json!({"choices": []})).is_err());
        assert!(extract_text(&json!({"error": "nope"})).is_err());
    }

    #[test]
    fn zero_limit_rejected() {
        let config = LlmConfig {
            max_tokens: 0,
            ..LlmConfig::default()
        };
        assert!(HttpLlm::new(config).is_err());
    }
}
