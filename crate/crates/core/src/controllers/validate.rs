//! Reply validation and the contract-safe fallback policy.

use crate::interpreter::{ActionMask, DecisionPayload};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseFailure {
    #[error("reply is not a single JSON object")]
    NotAnObject,
    #[error("reply object must contain only `action`")]
    WrongFields,
    #[error("`action` is not a non-negative integer")]
    NotAnInteger,
    #[error("action {0} is not legal")]
    Illegal(i64),
}

/// Accepts exactly `{"action": <int>}` (surrounding whitespace allowed) with
/// the index legal under `mask`.
pub fn parse_model_response(text: &str, mask: &ActionMask) -> Result<usize, ParseFailure> {
    let value: serde_json::Value = serde_json::from_str(text.trim()).map_err(|_| ParseFailure::NotAnObject)?;
    let obj = value.as_object().ok_or(ParseFailure::NotAnObject)?;
    if obj.len() != 1 {
        return Err(ParseFailure::WrongFields);
    }
    let action = obj.get("action").ok_or(ParseFailure::WrongFields)?;
    let index = match action.as_u64() {
        Some(i) => i,
        None => match action.as_i64() {
            Some(neg) => return Err(ParseFailure::Illegal(neg)),
            None => return Err(ParseFailure::NotAnInteger),
        },
    };
    let index = usize::try_from(index).map_err(|_| ParseFailure::Illegal(i64::MAX))?;
    if !mask.is_legal(index) {
        return Err(ParseFailure::Illegal(index as i64));
    }
    Ok(index)
}

/// Deterministic safe choice: accept/bid for commitments, otherwise the
/// option with the least (backlog_jobs, active_jobs, index).
pub fn fallback_decide(payload: &DecisionPayload) -> usize {
    if payload.kind.is_commitment() {
        if let Some(o) = payload.options.iter().find(|o| matches!(o.decision.as_deref(), Some("accept") | Some("bid"))) {
            return o.action;
        }
    }
    payload
        .options
        .iter()
        .min_by_key(|o| (o.summary.backlog_jobs.unwrap_or(0), o.summary.active_jobs.unwrap_or(0), o.action))
        .map(|o| o.action)
        .or_else(|| payload.legal_actions.first().copied())
        .expect("payload has a legal action")
}
