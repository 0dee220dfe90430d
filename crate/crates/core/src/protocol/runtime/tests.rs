use std::sync::Arc;

use super::*;
use crate::controllers::{Controller, ControllerFailure, RandomSeeded, Reply, RuleGreedy};
use crate::engine::advance;
use crate::engine::init_world;
use crate::instance::load_shipped;
use crate::interpreter::{interpret, DecisionOutcome, DecisionPayload, DecisionSource};
use crate::metrics::{EpisodeMeta, EpisodeTrace};
use crate::runner::{run_episode, run_episode_with};

/// Rejects every offer it is allowed to reject, declines every bid, and
/// plays greedy otherwise.
struct Refuser {
    decline_bids: bool,
}

impl Controller for Refuser {
    fn name(&self) -> &str {
        "refuser"
    }

    fn query(&mut self, payload: &DecisionPayload) -> Result<Reply, ControllerFailure> {
        let pick = |label: &str| payload.options.iter().find(|o| o.decision.as_deref() == Some(label)).map(|o| o.action);
        let choice = match payload.kind {
            DecisionKind::CellCommitment => pick("reject"),
            DecisionKind::BidSubmission if self.decline_bids => pick("decline"),
            _ => None,
        };
        Ok(Reply::Index(choice.unwrap_or_else(|| RuleGreedy::choose(payload))))
    }
}

fn meta(instance: &str, mode: &AuthorityMode, seed: u64) -> EpisodeMeta {
    EpisodeMeta {
        case_id: format!("{instance}__{}__test__seed{seed}", mode.mode_id),
        instance: instance.into(),
        mode: mode.mode_id.clone(),
        controller: "test".into(),
        seed,
        framework: None,
    }
}

fn episode(instance: &str, mode: AuthorityMode, seed: u64, controller: &mut dyn Controller) -> EpisodeTrace {
    let config = Arc::new(load_shipped(instance).unwrap());
    run_episode(config, &mode, controller, meta(instance, &mode, seed)).unwrap().trace
}

fn count(trace: &EpisodeTrace, kind: ObjectKind) -> usize {
    trace.protocol.objects.iter().filter(|o| o.kind == kind).count()
}

fn reasons(trace: &EpisodeTrace) -> Vec<&str> {
    trace.protocol.objects.iter().filter_map(|o| o.reason.as_deref()).collect()
}

#[test]
fn centralized_items_take_three_objects() {
    let t = episode("A3C9-1", AuthorityMode::centralized(), 3, &mut RuleGreedy);
    let items = t.protocol.contracts.len();
    assert_eq!(items, 30);
    assert_eq!(count(&t, ObjectKind::Allocation), items);
    assert_eq!(count(&t, ObjectKind::Commitment), items);
    assert_eq!(count(&t, ObjectKind::Settlement), items);
    assert_eq!(t.protocol.objects.len(), 3 * items);
    assert!(t.protocol.contracts.iter().all(|c| c.provenance == Provenance::DirectAward && c.issuer == AgentId::Plant));
    assert!(t.activations.iter().all(|a| a.kind != DecisionKind::CellCommitment));
}

#[test]
fn hierarchical_chain_goes_through_areas() {
    let t = episode("A3C9-1", AuthorityMode::hierarchical(), 3, &mut RuleGreedy);
    let items = t.protocol.contracts.len();
    assert!(t.protocol.contracts.iter().all(|c| c.provenance == Provenance::ChainAssignment && matches!(c.issuer, AgentId::Area(_))));
    assert_eq!(count(&t, ObjectKind::Allocation), 2 * items);
    assert_eq!(count(&t, ObjectKind::Bid) + count(&t, ObjectKind::Award) + count(&t, ObjectKind::Rejection), 0);
    let area_sel = t.activations.iter().filter(|a| a.kind == DecisionKind::AreaSelection).count();
    assert_eq!(area_sel, items);
}

#[test]
fn bid_rounds_award_the_best_estimate() {
    let t = episode("A5C12-1", AuthorityMode::heterarchical_cnp(), 2, &mut RuleGreedy);
    let objs = &t.protocol.objects;
    for award in objs.iter().filter(|o| o.kind == ObjectKind::Award) {
        let bids: Vec<_> = objs
            .iter()
            .filter(|o| o.kind == ObjectKind::Bid && o.item == award.item && o.id < award.id && o.epoch <= award.epoch)
            .collect();
        assert!(!bids.is_empty());
        let best = bids.iter().map(|b| b.estimate.unwrap()).fold(f64::INFINITY, f64::min);
        let awarded = bids.iter().find(|b| b.cell == award.cell).expect("award goes to a bidder");
        assert_eq!(awarded.estimate.unwrap(), best);
    }
    assert_eq!(count(&t, ObjectKind::Award), t.protocol.contracts.len());
}

#[test]
fn accept_only_modes_never_reject() {
    for mode in [AuthorityMode::centralized(), AuthorityMode::hierarchical()] {
        let t = episode("A3C9-1", mode.clone(), 1, &mut Refuser { decline_bids: false });
        assert_eq!(count(&t, ObjectKind::Rejection), 0, "{}", mode.mode_id);
        assert!(t.last.flags.done, "{}", mode.mode_id);
    }
}

#[test]
fn holonic_rejections_reroute_before_fallback() {
    let t = episode("A5C12-1", AuthorityMode::holonic_hybrid(), 4, &mut Refuser { decline_bids: false });
    assert!(count(&t, ObjectKind::Rejection) > 0);
    let r = reasons(&t);
    assert!(r.contains(&"area_reroute_exhausted"));
    assert!(r.contains(&"fallback_budget_exhausted"));
    let fallbacks: Vec<_> = t.activations.iter().filter(|a| a.ctx.runtime_fallback).collect();
    assert!(!fallbacks.is_empty());
    for f in fallbacks {
        let item = f.ctx.item_info.as_ref().unwrap().item;
        let rerouted = t
            .activations
            .iter()
            .any(|a| a.kind == DecisionKind::Reroute && a.epoch < f.epoch && a.ctx.item_info.as_ref().is_some_and(|i| i.item == item));
        let exhausted = t.protocol.objects.iter().any(|o| {
            o.reason.as_deref() == Some("area_reroute_exhausted") && o.item == Some(item) && o.epoch < f.epoch
        });
        assert!(rerouted || exhausted, "fallback at epoch {} for {item:?} has no reroute evidence", f.epoch);
    }
    // Refusing everything can never finish.
    assert!(!t.last.flags.done);
}

#[test]
fn heterarchical_refusals_reaward_then_fall_back() {
    let t = episode("A3C9-1", AuthorityMode::heterarchical_cnp(), 1, &mut Refuser { decline_bids: false });
    assert!(count(&t, ObjectKind::Rejection) > 0);
    let mut awards: BTreeMap<WorkItem, usize> = BTreeMap::new();
    for o in t.protocol.objects.iter().filter(|o| o.kind == ObjectKind::Award) {
        *awards.entry(o.item.unwrap()).or_default() += 1;
    }
    assert!(awards.values().any(|n| *n > 1), "a rejected award moves to the next bidder");
    let declined = episode("A3C9-1", AuthorityMode::heterarchical_cnp(), 1, &mut Refuser { decline_bids: true });
    assert_eq!(count(&declined, ObjectKind::Bid), 0);
    assert!(reasons(&declined).contains(&"no_bids"));
}

#[test]
fn contract_histories_follow_the_lifecycle() {
    for mode in AuthorityMode::builtins() {
        for seed in 1..=4 {
            let t = episode("A3C9-1", mode.clone(), seed, &mut RandomSeeded::new(seed * 7));
            for c in &t.protocol.contracts {
                let expected: &[ContractState] = match c.state {
                    ContractState::Settled | ContractState::Open => &[ContractState::Proposed, ContractState::Committed],
                    ContractState::Rejected | ContractState::Committed => &[ContractState::Proposed],
                    ContractState::Proposed => &[],
                };
                assert_eq!(c.history, expected, "{} contract {}", mode.mode_id, c.contract_id);
                let kinds: Vec<_> = t.protocol.settlements.iter().filter(|s| s.contract == c.contract_id).map(|s| s.kind).collect();
                assert_eq!(kinds.first(), Some(&SettlementKind::Proposed));
            }
            let committed = t.protocol.contracts.iter().filter(|c| c.state == ContractState::Committed).count();
            assert!(committed <= 4, "at most one committed contract per in-flight job");
        }
    }
}

#[test]
fn working_memory_keeps_the_last_three_decisions() {
    let config = Arc::new(load_shipped("A3C9-1").unwrap());
    let mode = AuthorityMode::hierarchical();
    let mut longest = 0;
    run_episode_with(config, &mode, &mut RuleGreedy, meta("A3C9-1", &mode, 1), &mut |_, act| {
        longest = longest.max(act.payload.context.working_memory.len());
        for line in &act.payload.context.working_memory {
            assert!(line.starts_with("epoch "));
        }
    })
    .unwrap();
    assert_eq!(longest, MEMORY_DEPTH);
}

fn first_activation() -> (WorldState, ProtocolRuntime, Activation) {
    let config = Arc::new(load_shipped("A3C9-1").unwrap());
    let mode = AuthorityMode::centralized();
    let mut state = init_world(config.clone(), 1);
    let mut rt = ProtocolRuntime::new(mode.clone(), &config);
    let adv = advance(&mut state, &mut rt).unwrap();
    let act = interpret(&adv.realized, &rt, &state, &mode).activations.remove(0);
    (state, rt, act)
}

#[test]
fn undecided_and_stale_activations_are_errors() {
    let (state, mut rt, act) = first_activation();
    assert!(matches!(rt.apply(&state, 1, std::slice::from_ref(&act)), Err(ProtocolError::Undecided { .. })));
    let mut stale = act.clone();
    stale.record.decision =
        Some(DecisionOutcome { action: 0, source: DecisionSource::Controller, first_pass: Some(true), attempts: 1, failure: None });
    stale.record.ctx.obligation = Some(99);
    assert_eq!(rt.apply(&state, 1, &[stale]), Err(ProtocolError::StaleActivation { agent: AgentId::Plant }));
}

#[test]
fn backlog_selection_opens_a_plant_routing_obligation() {
    let (state, mut rt, mut act) = first_activation();
    act.record.decision =
        Some(DecisionOutcome { action: 0, source: DecisionSource::Controller, first_pass: Some(true), attempts: 1, failure: None });
    let actions = rt.apply(&state, 1, &[act]).unwrap();
    assert!(matches!(actions.as_slice(), [PhysicalAction::SelectBacklog { .. }]));
    assert_eq!(rt.pending_obligations(), 1);
    let ctx = rt.pending_context(&state, AgentId::Plant).unwrap();
    assert_eq!(ctx.role_semantics, DecisionKind::CellSelection);
    assert_eq!(ctx.trigger_label, "release_cell_selection_window");
    assert_eq!(rt.working_memory(AgentId::Plant), vec!["epoch 1 backlog_selection -> action 0".to_string()]);
}
