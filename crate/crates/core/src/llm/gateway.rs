use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{Cassette, CassetteMode, ChatMessage, LlmConfig, LlmError, Role};
use crate::kg::{HttpRequest, Transport, TransportError};

const REQUEST_TIMEOUT: Duration = Duration::from_secs(120);

/// Hash of the model name and the role/content of every message. Headers,
/// keys and decoding settings do not participate.
pub fn request_digest(model: &str, messages: &[ChatMessage]) -> String {
    let canonical = serde_json::json!({
        "model": model,
        "messages": messages
            .iter()
            .map(|m| [m.role.as_str(), m.content.as_str()])
            .collect::<Vec<_>>(),
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct LlmGateway {
    transport: Arc<dyn Transport>,
    config: LlmConfig,
}

impl LlmGateway {
    pub fn new(transport: Arc<dyn Transport>, config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        Ok(Self { transport, config })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn build_request(&self, messages: &[ChatMessage]) -> Result<HttpRequest, LlmError> {
        let key = std::env::var(&self.config.api_key_env).map_err(|_| {
            LlmError::Auth(format!(
                "environment variable {} is not set",
                self.config.api_key_env
            ))
        })?;
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "messages": messages
                .iter()
                .map(|m| serde_json::json!({"role": m.role.as_str(), "content": m.content}))
                .collect::<Vec<_>>(),
        });
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        Ok(HttpRequest::post(url, body.to_string())
            .header("Content-Type", "application/json")
            .header("Authorization", format!("Bearer {key}"))
            .timeout(REQUEST_TIMEOUT))
    }

    async fn call_endpoint(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let request = self.build_request(messages)?;
        let response = self.transport.send(&request).await.map_err(|e| match e {
            TransportError::Timeout(d) => LlmError::Transport {
                status: None,
                message: format!("timed out after {d:?}"),
            },
            other => LlmError::Transport {
                status: None,
                message: other.to_string(),
            },
        })?;
        match response.status {
            401 | 403 => Err(LlmError::Auth(format!(
                "status {}: {}",
                response.status,
                truncate(&response.body, 200)
            ))),
            s if !(200..300).contains(&s) => Err(LlmError::Transport {
                status: Some(s),
                message: truncate(&response.body, 200),
            }),
            _ => Ok(response.body),
        }
    }

    /// One assistant turn. In replay mode the transport is never touched.
    pub async fn chat_complete(
        &self,
        messages: &[ChatMessage],
        cassette: &mut Cassette,
    ) -> Result<ChatMessage, LlmError> {
        match messages.first() {
            None => return Err(LlmError::Validation("no messages".into())),
            Some(m) if m.role != Role::System => {
                return Err(LlmError::Validation(
                    "first message must have role system".into(),
                ))
            }
            _ => {}
        }
        let digest = request_digest(&self.config.model, messages);
        let body = match cassette.mode() {
            CassetteMode::Replay => cassette.next_response(&digest)?,
            CassetteMode::Live => self.call_endpoint(messages).await?,
            CassetteMode::Record => {
                let body = self.call_endpoint(messages).await?;
                cassette.record(&digest, &body)?;
                body
            }
        };
        let completion: Completion = serde_json::from_str(&body)
            .map_err(|e| LlmError::Decode(format!("{e}: {}", truncate(&body, 200))))?;
        let content = completion
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Decode("completion has no message content".into()))?;
        Ok(ChatMessage::assistant(content))
    }
}

/// Chat-completions response body carrying `content`, as an endpoint would
/// send it. Used when authoring cassettes.
pub fn completion_body(model: &str, content: &str) -> String {
    serde_json::json!({
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }]
    })
    .to_string()
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}
