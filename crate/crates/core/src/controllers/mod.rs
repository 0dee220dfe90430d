//! Controllers turn decision payloads into legal action indices.
//!
//! Every controller reply goes through the same validation. Anything that
//! fails validation, times out or comes from a dead endpoint is replaced by
//! the contract-safe fallback, and the decision is attributed accordingly.

mod external;
mod model;
mod rules;
mod validate;

use serde::{Deserialize, Serialize};

pub use external::ExternalProcess;
pub use model::{ModelService, SYSTEM_INSTRUCTION};
pub use rules::{RandomSeeded, RuleFallback, RuleGreedy};
pub use validate::{fallback_decide, parse_model_response, ParseFailure};

use crate::interpreter::{ActionMask, DecisionOutcome, DecisionPayload, DecisionSource};

pub const DEFAULT_TIMEOUT_SECS: f64 = 30.0;
pub const DEFAULT_MODEL_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerFailure {
    #[error("no reply within {0:.1} s")]
    Timeout(f64),
    #[error("controller process unavailable: {0}")]
    Dead(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid reply: {0}")]
    Invalid(ParseFailure),
}

/// One attempt's raw answer.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    /// Already an index (in-process controllers).
    Index(usize),
    /// Wire text still to be parsed.
    Text(String),
}

pub trait Controller: Send {
    fn name(&self) -> &str;
    fn query(&mut self, payload: &DecisionPayload) -> Result<Reply, ControllerFailure>;
    /// Extra attempts after an invalid or failed reply.
    fn retry_budget(&self) -> u32 {
        0
    }
    /// Failures after which further attempts are pointless.
    fn is_fatal(&self, failure: &ControllerFailure) -> bool {
        matches!(failure, ControllerFailure::Timeout(_) | ControllerFailure::Dead(_))
    }
}

/// Asks `controller` for a legal action, falling back on any failure.
pub fn decide(controller: &mut dyn Controller, payload: &DecisionPayload, mask: &ActionMask) -> DecisionOutcome {
    let mut attempts = 0;
    let mut last = None;
    for attempt in 0..=controller.retry_budget() {
        attempts += 1;
        let result = controller.query(payload).and_then(|r| match r {
            Reply::Index(i) if mask.is_legal(i) => Ok(i),
            Reply::Index(i) => Err(ControllerFailure::Invalid(ParseFailure::Illegal(i as i64))),
            Reply::Text(t) => parse_model_response(&t, mask).map_err(ControllerFailure::Invalid),
        });
        match result {
            Ok(action) => {
                return DecisionOutcome {
                    action,
                    source: DecisionSource::Controller,
                    first_pass: Some(attempt == 0),
                    attempts,
                    failure: None,
                }
            }
            Err(f) => {
                log::debug!("{} attempt {attempts} failed: {f}", controller.name());
                let fatal = controller.is_fatal(&f);
                last = Some(f);
                if fatal {
                    break;
                }
            }
        }
    }
    DecisionOutcome {
        action: fallback_decide(payload),
        source: DecisionSource::Fallback,
        first_pass: Some(false),
        attempts,
        failure: last.map(|f| f.to_string()),
    }
}

/// Decision taken by the runtime itself, without consulting a controller.
pub fn runtime_fallback(payload: &DecisionPayload) -> DecisionOutcome {
    DecisionOutcome { action: fallback_decide(payload), source: DecisionSource::Fallback, first_pass: None, attempts: 0, failure: None }
}

/// Which controller backs a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerBinding {
    RuleGreedy,
    RuleFallback,
    RuleRandomSeeded {
        seed: u64,
    },
    ExternalProcess {
        command: String,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
    ModelService {
        base_url: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
        #[serde(default = "default_retries")]
        retries: u32,
    },
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

fn default_retries() -> u32 {
    DEFAULT_MODEL_RETRIES
}

impl ControllerBinding {
    /// Label used in case ids and summary rows.
    pub fn label(&self) -> String {
        match self {
            ControllerBinding::RuleGreedy => "rule_greedy".into(),
            ControllerBinding::RuleFallback => "rule_fallback".into(),
            ControllerBinding::RuleRandomSeeded { seed } => format!("rule_random_seeded{seed}"),
            ControllerBinding::ExternalProcess { .. } => "external_process".into(),
            ControllerBinding::ModelService { model, .. } => {
                let clean: String = model.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '-' }).collect();
                format!("model_service-{clean}")
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ControllerBinding::RuleGreedy => "rule_greedy",
            ControllerBinding::RuleFallback => "rule_fallback",
            ControllerBinding::RuleRandomSeeded { .. } => "rule_random_seeded",
            ControllerBinding::ExternalProcess { .. } => "external_process",
            ControllerBinding::ModelService { .. } => "model_service",
        }
    }

    /// Fresh controller for one episode. Spawning an external process can
    /// fail; the returned controller then falls back on every decision.
    pub fn instantiate(&self) -> Box<dyn Controller> {
        match self {
            ControllerBinding::RuleGreedy => Box::new(RuleGreedy),
            ControllerBinding::RuleFallback => Box::new(RuleFallback),
            ControllerBinding::RuleRandomSeeded { seed } => Box::new(RandomSeeded::new(*seed)),
            ControllerBinding::ExternalProcess { command, timeout_secs } => {
                Box::new(ExternalProcess::spawn(command, std::time::Duration::from_secs_f64(*timeout_secs)))
            }
            ControllerBinding::ModelService { base_url, model, api_key, timeout_secs, retries } => Box::new(ModelService::new(
                base_url,
                model,
                api_key.clone(),
                std::time::Duration::from_secs_f64(*timeout_secs),
                *retries,
            )),
        }
    }
}

/// Per-episode attribution counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionAudit {
    pub controller_decisions: u32,
    pub fallback_decisions: u32,
    pub no_action_events: u32,
    pub first_pass_accepts: u32,
    /// Decisions for which a controller was actually consulted.
    pub controller_facing: u32,
}

impl DecisionAudit {
    pub fn record(&mut self, outcome: &DecisionOutcome) {
        match outcome.source {
            DecisionSource::Controller => self.controller_decisions += 1,
            DecisionSource::Fallback => self.fallback_decisions += 1,
        }
        if let Some(fp) = outcome.first_pass {
            self.controller_facing += 1;
            if fp {
                self.first_pass_accepts += 1;
            }
        }
    }

    pub fn total(&self) -> u32 {
        self.controller_decisions + self.fallback_decisions
    }

    /// First-pass acceptance rate; absent without controller-facing decisions.
    pub fn pass_at_one(&self) -> Option<f64> {
        (self.controller_facing > 0).then(|| self.first_pass_accepts as f64 / self.controller_facing as f64)
    }
}
