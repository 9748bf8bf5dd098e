use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{check_limit, LlmClient, LlmError, DEFAULT_MAX_TOKENS};
use crate::prompt::Prompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptMode {
    /// Responses are handed out in file order, one per call.
    Strict,
    /// Responses are looked up by the SHA-256 of the rendered prompt.
    Keyed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<usize>,
    pub response: String,
}

/// Canned responses, stored as JSON:
///
/// ```json
/// {"mode": "strict", "entries": [{"response": "1. [Tap] [\"a\"]"}]}
/// {"mode": "keyed", "entries": [{"digest": "9f2c...", "response": "[id=3]"}]}
/// ```
///
/// Strict entries may carry an `ordinal`; when present they are sorted by it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub mode: TranscriptMode,
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn strict<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Transcript {
            mode: TranscriptMode::Strict,
            entries: responses
                .into_iter()
                .map(|r| TranscriptEntry {
                    digest: None,
                    ordinal: None,
                    response: r.into(),
                })
                .collect(),
        }
    }

    pub fn keyed(entries: Vec<TranscriptEntry>) -> Self {
        Transcript {
            mode: TranscriptMode::Keyed,
            entries,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::InvalidTranscript(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidTranscript(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

enum Cursor {
    Strict { responses: Vec<String>, next: Mutex<usize> },
    Keyed(HashMap<String, String>),
}

/// Deterministic backend over a [`Transcript`].
///
/// Strict mode is single-consumer: concurrent callers would race for the
/// next entry.
pub struct TranscriptLlm {
    cursor: Cursor,
    limit: usize,
}

impl TranscriptLlm {
    pub fn new(transcript: Transcript) -> Result<Self, LlmError> {
        let cursor = match transcript.mode {
            TranscriptMode::Strict => {
                let mut entries = transcript.entries;
                if entries.iter().any(|e| e.ordinal.is_some()) {
                    if entries.iter().any(|e| e.ordinal.is_none()) {
                        return Err(LlmError::InvalidTranscript(
                            "either all strict entries carry an ordinal or none do".into(),
                        ));
                    }
                    entries.sort_by_key(|e| e.ordinal);
                    if entries.windows(2).any(|w| w[0].ordinal == w[1].ordinal) {
                        return Err(LlmError::InvalidTranscript("duplicate ordinal".into()));
                    }
                }
                Cursor::Strict {
                    responses: entries.into_iter().map(|e| e.response).collect(),
                    next: Mutex::new(0),
                }
            }
            TranscriptMode::Keyed => {
                let mut map = HashMap::new();
                for e in transcript.entries {
                    let digest = e
                        .digest
                        .ok_or_else(|| LlmError::InvalidTranscript("keyed entry without digest".into()))?;
                    if map.insert(digest.clone(), e.response).is_some() {
                        return Err(LlmError::InvalidTranscript(format!("duplicate digest {digest}")));
                    }
                }
                Cursor::Keyed(map)
            }
        };
        Ok(TranscriptLlm {
            cursor,
            limit: DEFAULT_MAX_TOKENS,
        })
    }

    pub fn with_limit(mut self, limit: usize) -> Self {
        self.limit = limit;
        self
    }

    /// Strict mode: how many responses have been handed out.
    pub fn consumed(&self) -> usize {
        match &self.cursor {
            Cursor::Strict { next, .. } => *next.lock().expect("cursor lock"),
            Cursor::Keyed(_) => 0,
        }
    }
}

impl LlmClient for TranscriptLlm {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        check_limit(prompt, self.limit)?;
        match &self.cursor {
            Cursor::Strict { responses, next } => {
                let mut next = next.lock().expect("cursor lock");
                let response = responses
                    .get(*next)
                    .cloned()
                    .ok_or(LlmError::TranscriptExhausted { used: *next })?;
                *next += 1;
                Ok(response)
            }
            Cursor::Keyed(map) => {
                let digest = prompt.digest();
                map.get(&digest).cloned().ok_or(LlmError::UnmatchedPrompt { digest })
            }
        }
    }

    fn max_prompt_tokens(&self) -> usize {
        self.limit
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_consumes_in_order_then_exhausts() {
        let llm = TranscriptLlm::new(Transcript::strict(["one", "two"])).unwrap();
        let p = Prompt::raw("anything");
        assert_eq!(llm.complete(&p).unwrap(), "one");
        assert_eq!(llm.complete(&p).unwrap(), "two");
        assert!(matches!(
            llm.complete(&p),
            Err(LlmError::TranscriptExhausted { used: 2 })
        ));
    }

    #[test]
    fn strict_ordinals_sort() {
        let json = r#"{"mode":"strict","entries":[{"ordinal":2,"response":"b"},{"ordinal":1,"response":"a"}]}"#;
        let llm = TranscriptLlm::new(Transcript::from_json(json).unwrap()).unwrap();
        assert_eq!(llm.complete(&Prompt::raw("x")).unwrap(), "a");
        let dup = r#"{"mode":"strict","entries":[{"ordinal":1,"response":"b"},{"ordinal":1,"response":"a"}]}"#;
        assert!(TranscriptLlm::new(Transcript::from_json(dup).unwrap()).is_err());
    }

    #[test]
    fn keyed_miss_is_unmatched() {
        let p = Prompt::raw("known");
        let llm = TranscriptLlm::new(Transcript::keyed(vec![TranscriptEntry {
            digest: Some(p.digest()),
            ordinal: None,
            response: "hit".into(),
        }]))
        .unwrap();
        assert_eq!(llm.complete(&p).unwrap(), "hit");
        assert!(matches!(
            llm.complete(&Prompt::raw("unknown")),
            Err(LlmError::UnmatchedPrompt { .. })
        ));
    }

    #[test]
    fn keyed_requires_unique_digests() {
        let e = TranscriptEntry {
            digest: Some("d".into()),
            ordinal: None,
            response: "r".into(),
        };
        assert!(TranscriptLlm::new(Transcript::keyed(vec![e.clone(), e])).is_err());
    }

    #[test]
    fn over_limit_prompt_rejected_before_consuming() {
        let llm = TranscriptLlm::new(Transcript::strict(["one"])).unwrap().with_limit(2);
        assert!(matches!(
            llm.complete(&Prompt::raw("123456789")),
            Err(LlmError::TokenLimitExceeded { estimated: 3, limit: 2 })
        ));
        assert_eq!(llm.consumed(), 0);
    }

    #[test]
    fn json_round_trip() {
        let t = Transcript::strict(["a\nb"]);
        assert_eq!(Transcript::from_json(&t.to_json()).unwrap(), t);
    }
}
