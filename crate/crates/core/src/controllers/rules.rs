//! Deterministic in-process controllers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Controller, ControllerFailure, Reply};
use crate::interpreter::{DecisionKind, DecisionPayload, OptionEntry};

/// Greedy heuristic over the payload's option summaries.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleGreedy;

fn by_key<K: Ord>(options: &[OptionEntry], key: impl Fn(&OptionEntry) -> K) -> usize {
    options.iter().min_by_key(|o| (key(o), o.action)).map(|o| o.action).expect("options are non-empty")
}

/// Orders finite estimates; missing ones sort first like a zero estimate.
fn ordered(x: Option<f64>) -> i64 {
    (x.unwrap_or(0.0) * 1e6).round() as i64
}

impl RuleGreedy {
    pub fn choose(payload: &DecisionPayload) -> usize {
        let opts = &payload.options;
        match payload.kind {
            DecisionKind::CellCommitment | DecisionKind::BidSubmission => {
                opts.iter().find(|o| matches!(o.decision.as_deref(), Some("accept") | Some("bid"))).map(|o| o.action).unwrap_or(opts[0].action)
            }
            DecisionKind::BacklogSelection => by_key(opts, |_| 0),
            DecisionKind::LocalDispatch => by_key(opts, |o| o.summary.setup_needed.unwrap_or(false)),
            DecisionKind::Reroute => by_key(opts, |o| o.summary.preference_rank.unwrap_or(u32::MAX)),
            _ => by_key(opts, |o| (o.summary.active_jobs.unwrap_or(0), ordered(o.summary.estimated_completion))),
        }
    }
}

impl Controller for RuleGreedy {
    fn name(&self) -> &str {
        "rule_greedy"
    }

    fn query(&mut self, payload: &DecisionPayload) -> Result<Reply, ControllerFailure> {
        Ok(Reply::Index(Self::choose(payload)))
    }
}

/// Uniform choice among legal actions from its own seeded stream.
#[derive(Debug, Clone)]
pub struct RandomSeeded {
    rng: ChaCha8Rng,
}

impl RandomSeeded {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Controller for RandomSeeded {
    fn name(&self) -> &str {
        "rule_random_seeded"
    }

    fn query(&mut self, payload: &DecisionPayload) -> Result<Reply, ControllerFailure> {
        let legal = &payload.legal_actions;
        Ok(Reply::Index(legal[self.rng.random_range(0..legal.len())]))
    }
}

/// The host fallback policy played as an ordinary controller, so its
/// decisions count as controller decisions. Useful as a reference point
/// for external runners that implement the same heuristic.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleFallback;

impl Controller for RuleFallback {
    fn name(&self) -> &str {
        "rule_fallback"
    }

    fn query(&mut self, payload: &DecisionPayload) -> Result<Reply, ControllerFailure> {
        Ok(Reply::Index(super::fallback_decide(payload)))
    }
}
