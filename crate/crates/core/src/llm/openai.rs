//! Adapter for OpenAI-compatible `/chat/completions` endpoints.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatModel, Completion, CompletionConfig, LlmError, TokenUsage};
use crate::prompt::{ChatMessage, PromptBundle};

pub struct OpenAiCompatible {
    base_url: String,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl fmt::Debug for OpenAiCompatible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiCompatible")
            .field("base_url", &self.base_url)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct Response {
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl OpenAiCompatible {
    /// Reads the key from environment variable `key_var`.
    pub fn from_env(base_url: &str, key_var: &str, timeout: Duration) -> Result<Self, LlmError> {
        let key = std::env::var(key_var)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| LlmError::Auth(format!("environment variable {key_var} is not set")))?;
        Self::new(base_url, key, timeout)
    }

    pub fn new(base_url: &str, api_key: String, timeout: Duration) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(OpenAiCompatible {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            http,
        })
    }

    fn classify(status: u16, body: &str) -> LlmError {
        let snippet: String = body.chars().take(300).collect();
        match status {
            401 | 403 => LlmError::Auth(format!("HTTP {status}")),
            400 if body.contains("context_length_exceeded") => LlmError::BudgetExceeded(snippet),
            408 | 409 | 429 | 500..=599 => LlmError::Transport(format!("HTTP {status}: {snippet}")),
            _ => LlmError::BadRequest(format!("HTTP {status}: {snippet}")),
        }
    }
}

impl ChatModel for OpenAiCompatible {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    fn complete(
        &self,
        bundle: &PromptBundle,
        config: &CompletionConfig,
    ) -> Result<Completion, LlmError> {
        let body = Request {
            model: &config.model,
            messages: &bundle.messages,
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        };
        let resp = self
            .http
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| LlmError::Transport(e.without_url().to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(Self::classify(status, &text));
        }
        let parsed: Response = serde_json::from_str(&text)
            .map_err(|e| LlmError::Transport(format!("unreadable response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::Refusal("response has no choices".into()))?;
        if choice.finish_reason.as_deref() == Some("content_filter") {
            return Err(LlmError::Refusal("content filter".into()));
        }
        let content = choice
            .message
            .content
            .filter(|c| !c.trim().is_empty())
            .ok_or_else(|| LlmError::Refusal("empty completion".into()))?;
        Ok(Completion {
            text: content,
            usage: parsed.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves the given (status, body) replies in order and reports each
    /// request's authorization header.
    fn serve(replies: Vec<(u16, &'static str)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = line.trim().to_string();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                tx.send(auth).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), rx)
    }

    fn bundle() -> PromptBundle {
        PromptBundle {
            messages: vec![ChatMessage::new(crate::prompt::Role::User, "hi")],
            test_start: 0,
            exemplars_used: 0,
            exemplars_dropped: 0,
            test_db: "d".into(),
            test_questions: vec!["hi".into()],
        }
    }

    #[test]
    fn retries_server_errors_then_reads_the_reply() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"So SQL 1-1 is:\nSELECT 1"},"finish_reason":"stop"}],"usage":{"prompt_tokens":3,"completion_tokens":4}}"#;
        let (url, rx) = serve(vec![(503, "{}"), (200, ok)]);
        let model = OpenAiCompatible::new(&url, "sk-test".into(), Duration::from_secs(5)).unwrap();
        assert!(!format!("{model:?}").contains("sk-test"));
        let client = super::super::Client::new(
            Box::new(model),
            CompletionConfig {
                backoff_ms: 1,
                ..CompletionConfig::default()
            },
        );
        let resp = client.complete(&bundle()).unwrap();
        assert!(resp.raw.ends_with("SELECT 1"));
        assert_eq!(resp.usage.unwrap().completion_tokens, 4);
        assert_eq!(rx.recv().unwrap(), "authorization: Bearer sk-test");
    }

    #[test]
    fn auth_and_request_errors_are_distinct() {
        let (url, _rx) = serve(vec![
            (401, "{}"),
            (400, r#"{"error":{"code":"context_length_exceeded"}}"#),
            (422, "{}"),
        ]);
        let model = OpenAiCompatible::new(&url, "k".into(), Duration::from_secs(5)).unwrap();
        let cfg = CompletionConfig::default();
        assert!(matches!(
            model.complete(&bundle(), &cfg),
            Err(LlmError::Auth(_))
        ));
        assert!(matches!(
            model.complete(&bundle(), &cfg),
            Err(LlmError::BudgetExceeded(_))
        ));
        assert!(matches!(
            model.complete(&bundle(), &cfg),
            Err(LlmError::BadRequest(_))
        ));
    }

    #[test]
    fn missing_key_is_an_auth_error() {
        let err = OpenAiCompatible::from_env(
            "http://x",
            "COESQL_TEST_SURELY_UNSET_KEY",
            Duration::from_secs(1),
        )
        .unwrap_err();
        assert!(matches!(err, LlmError::Auth(_)));
    }
}
