//! JSON wire types of the chat service.

use serde::{Deserialize, Serialize};

use crate::agent::{AgentTurn, AnswerError};
use crate::db::RowSet;
use crate::guard::ValidationReport;

pub const MAX_MESSAGE_CHARS: usize = 4000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RequestError {
    #[error("message is empty")]
    EmptyMessage,
    #[error("message has {0} characters, the limit is {MAX_MESSAGE_CHARS}")]
    MessageTooLong(usize),
    #[error("session id is empty")]
    EmptySessionId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub message: String,
}

impl ChatRequest {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            session_id: None,
            message: message.into(),
        }
    }

    pub fn validate(&self) -> Result<(), RequestError> {
        if self.message.trim().is_empty() {
            return Err(RequestError::EmptyMessage);
        }
        let chars = self.message.chars().count();
        if chars > MAX_MESSAGE_CHARS {
            return Err(RequestError::MessageTooLong(chars));
        }
        if self
            .session_id
            .as_deref()
            .is_some_and(|s| s.trim().is_empty())
        {
            return Err(RequestError::EmptySessionId);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub session_id: String,
    pub answer_text: String,
    pub sql: Option<String>,
    pub rows: Option<RowSet>,
    pub map_id: Option<String>,
    pub assumptions: Vec<String>,
    pub error: Option<AnswerError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<ValidationReport>,
}

impl ChatResponse {
    pub fn from_turn(session_id: impl Into<String>, turn: &AgentTurn) -> Self {
        let a = &turn.answer;
        Self {
            session_id: session_id.into(),
            answer_text: a.text.clone(),
            sql: a.sql.clone(),
            rows: a.rows.clone(),
            map_id: a.map.clone(),
            assumptions: a.assumptions.clone(),
            error: a.error.clone(),
            guard: a.guard.clone(),
        }
    }
}

/// Body of non-200 responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentStatus {
    Ok,
    Error,
    Unconfigured,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthReport {
    pub db: ComponentStatus,
    pub provider: ComponentStatus,
    pub version: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_limits() {
        assert_eq!(
            ChatRequest::new("  ").validate(),
            Err(RequestError::EmptyMessage)
        );
        assert!(ChatRequest::new("a".repeat(MAX_MESSAGE_CHARS))
            .validate()
            .is_ok());
        assert_eq!(
            ChatRequest::new("é".repeat(MAX_MESSAGE_CHARS + 1)).validate(),
            Err(RequestError::MessageTooLong(4001))
        );
        let r: ChatRequest = serde_json::from_str(r#"{"message": "hi"}"#).unwrap();
        assert_eq!(r.session_id, None);
    }
}
