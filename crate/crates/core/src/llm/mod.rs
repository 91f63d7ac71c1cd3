//! Chat-completion gateway for OpenAI-compatible endpoints, prompt
//! assembly and conversation cassettes.

mod cassette;
mod gateway;
mod prompts;

use serde::{Deserialize, Serialize};

pub use cassette::{Cassette, CassetteEntry, CassetteMode};
pub use gateway::{completion_body, request_digest, LlmGateway};
pub use prompts::{
    assemble_few_shot, assemble_system_prompt, builtin_few_shot, format_build_query,
    FewShotExample, PROTOCOL_RULES,
};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("LLM transport error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Transport {
        status: Option<u16>,
        message: String,
    },
    #[error("LLM endpoint rejected credentials: {0}")]
    Auth(String),
    #[error("unexpected LLM response: {0}")]
    Decode(String),
    #[error("cassette error for request {digest}: {message}")]
    Cassette { digest: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// Who authored a message's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Human,
    Llm,
    SystemInjected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub origin: Origin,
    /// Always equal to `origin == Origin::Llm`.
    pub llm_generated: bool,
}

impl ChatMessage {
    fn with(role: Role, origin: Origin, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            origin,
            llm_generated: origin == Origin::Llm,
        }
    }

    /// System-role text written by the engine (prompts, KG results, reprompts).
    pub fn system(content: impl Into<String>) -> Self {
        Self::with(Role::System, Origin::SystemInjected, content)
    }

    /// A message typed (or edited) by the person at the keyboard.
    pub fn user(content: impl Into<String>) -> Self {
        Self::with(Role::User, Origin::Human, content)
    }

    /// A user-role message whose text comes from an engine template.
    pub fn templated_user(content: impl Into<String>) -> Self {
        Self::with(Role::User, Origin::SystemInjected, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::with(Role::Assistant, Origin::Llm, content)
    }

    /// Assistant-role text authored by the engine, e.g. few-shot answers.
    pub fn templated_assistant(content: impl Into<String>) -> Self {
        Self::with(Role::Assistant, Origin::SystemInjected, content)
    }
}

fn default_base_url() -> String {
    "https://api.openai.com/v1".into()
}

fn default_model() -> String {
    "gpt-4".into()
}

fn default_max_tokens() -> u32 {
    1024
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            base_url: default_base_url(),
            model: default_model(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            api_key_env: default_api_key_env(),
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let url = url::Url::parse(&self.base_url)
            .map_err(|e| LlmError::Validation(format!("base_url '{}': {e}", self.base_url)))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(LlmError::Validation(format!(
                "base_url '{}' must be http or https",
                self.base_url
            )));
        }
        if self.model.trim().is_empty() {
            return Err(LlmError::Validation("model is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Validation(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Validation("max_tokens must be positive".into()));
        }
        if self.api_key_env.trim().is_empty() {
            return Err(LlmError::Validation("api_key_env is empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_follows_origin() {
        for m in [
            ChatMessage::system("a"),
            ChatMessage::user("b"),
            ChatMessage::templated_user("c"),
            ChatMessage::assistant("d"),
            ChatMessage::templated_assistant("e"),
        ] {
            assert_eq!(m.llm_generated, m.origin == Origin::Llm);
        }
    }

    #[test]
    fn config_checks() {
        assert!(LlmConfig::default().validate().is_ok());
        let bad = LlmConfig {
            temperature: 2.5,
            ..LlmConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = LlmConfig {
            base_url: "not a url".into(),
            ..LlmConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn origin_wire_names() {
        assert_eq!(
            serde_json::to_string(&Origin::SystemInjected).unwrap(),
            "\"system-injected\""
        );
    }
}
