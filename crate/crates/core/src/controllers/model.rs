//! Controller backed by an OpenAI-compatible chat-completion endpoint.

use std::time::Duration;

use serde_json::json;

use super::{Controller, ControllerFailure, Reply};
use crate::interpreter::DecisionPayload;

pub const SYSTEM_INSTRUCTION: &str = "You are a benchmark controller agent. CRITICAL OUTPUT CONTRACT. Select exactly one legal integer action index from legal_actions. Use only the provided compact agent-local payload, including current context, visible feedback, decision_factors, and bounded working_memory when present. Reply with exactly one JSON object and nothing else. Valid schema: {\"action\": <index>}. No reasoning. No markdown. No prose.";

const MAX_TOKENS: u32 = 32;

pub struct ModelService {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
    retries: u32,
}

impl ModelService {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration, retries: u32) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(true).build().into();
        let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        Self { agent, url, model: model.to_string(), api_key, retries }
    }

    /// Request body for one decision: fixed system instruction plus the
    /// compact payload, deterministic decoding and a short output budget.
    pub fn request_body(&self, payload: &DecisionPayload) -> serde_json::Value {
        json!({
            "model": self.model,
            "temperature": 0,
            "max_tokens": MAX_TOKENS,
            "messages": [
                {"role": "system", "content": SYSTEM_INSTRUCTION},
                {"role": "user", "content": payload.to_line()},
            ],
        })
    }
}

impl Controller for ModelService {
    fn name(&self) -> &str {
        "model_service"
    }

    fn query(&mut self, payload: &DecisionPayload) -> Result<Reply, ControllerFailure> {
        let mut req = self.agent.post(&self.url);
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(self.request_body(payload)).map_err(|e| ControllerFailure::Transport(e.to_string()))?;
        let body: serde_json::Value = resp.body_mut().read_json().map_err(|e| ControllerFailure::Transport(e.to_string()))?;
        let text = body
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| ControllerFailure::Transport("response has no message content".into()))?;
        Ok(Reply::Text(text.to_string()))
    }

    fn retry_budget(&self) -> u32 {
        self.retries
    }

    fn is_fatal(&self, _failure: &ControllerFailure) -> bool {
        false
    }
}
