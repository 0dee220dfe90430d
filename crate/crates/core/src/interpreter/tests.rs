use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::controllers::{ControllerBinding, RandomSeeded};
use crate::engine::{advance, init_world, JobStatus, MachineStatus};
use crate::instance::load_shipped;
use crate::metrics::EpisodeMeta;
use crate::runner::run_episode_with;

fn first_epoch(mode: AuthorityMode) -> (WorldState, ProtocolRuntime, Interpretation) {
    let config = Arc::new(load_shipped("A3C9-1").unwrap());
    let mut state = init_world(config.clone(), 1);
    let mut rt = ProtocolRuntime::new(mode.clone(), &config);
    let adv = advance(&mut state, &mut rt).unwrap();
    let interp = interpret(&adv.realized, &rt, &state, &mode);
    (state, rt, interp)
}

#[test]
fn first_epoch_is_one_plant_backlog_choice() {
    let (state, _, interp) = first_epoch(AuthorityMode::centralized());
    assert!(interp.no_actions.is_empty());
    assert_eq!(interp.activations.len(), 1);
    let a = &interp.activations[0];
    assert_eq!(a.record.agent, AgentId::Plant);
    assert_eq!(a.record.kind, DecisionKind::BacklogSelection);
    assert_eq!(a.record.loop_tag, LoopTag::Release);
    assert_eq!(a.record.epoch, 1);
    let top_k = state.config.scenario.backlog_top_k as usize;
    assert_eq!(a.mask.domain_size, top_k.min(state.backlog_candidates().len()));
    assert_eq!(a.mask.legal_count(), a.mask.domain_size);
    assert_eq!(a.payload.legal_actions, a.record.legal_actions);
    assert_eq!(a.payload.context.recent_event_types[0], "release_backlog_window");
}

#[test]
fn commitment_masks_follow_the_q_switch() {
    let (state, _, _) = first_epoch(AuthorityMode::centralized());
    let obs = build_observation(AgentId::Cell(CellId(0)), &state, None);
    let ctx = ProtocolContext {
        trigger: Cause::ProtocolObject(0),
        trigger_label: "contract_offer".into(),
        role_semantics: DecisionKind::CellCommitment,
        item_info: None,
        commitment_status: None,
        settlement_outcome: None,
        candidates: None,
        obligation: None,
        runtime_fallback: false,
    };
    let accept_only = legal_actions(AgentId::Cell(CellId(0)), &obs, &ctx, &AuthorityMode::hierarchical());
    assert_eq!(accept_only.legal_indices(), vec![0]);
    assert_eq!(accept_only.domain_size, 2);
    let both = legal_actions(AgentId::Cell(CellId(0)), &obs, &ctx, &AuthorityMode::holonic_hybrid());
    assert_eq!(both.legal_indices(), vec![0, 1]);
    assert_eq!(both.target(1), Some(Target::Reject));
}

#[test]
fn kinds_sit_at_their_levels() {
    use DecisionKind::*;
    let all = [BacklogSelection, AreaSelection, CellSelection, CellCommitment, LocalDispatch, BidSubmission, Reroute, EscalationHandling];
    for k in all {
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(json, format!("\"{}\"", k.as_str()));
        let levels = [AgentId::Plant, AgentId::Area(crate::ids::AreaId(0)), AgentId::Cell(CellId(0))];
        assert!(levels.iter().any(|a| k.fits(*a)), "{k:?} fits no level");
    }
    assert_eq!(loop_tag(Reroute), LoopTag::Recovery);
    assert_eq!(loop_tag(BidSubmission), LoopTag::Commitment);
    assert!(!LocalDispatch.fits(AgentId::Plant));
    assert!(CellCommitment.is_commitment() && BidSubmission.is_commitment() && !Reroute.is_commitment());
}

#[test]
fn causes_serialize_with_source_tags() {
    let c = serde_json::to_value(Cause::WorldEvent(4)).unwrap();
    assert_eq!(c, serde_json::json!({"source": "world_event", "ref": 4}));
    let p: Cause = serde_json::from_value(serde_json::json!({"source": "protocol_object", "ref": 9})).unwrap();
    assert_eq!(p, Cause::ProtocolObject(9));
}

/// Checks one decided activation against the state it was built from.
fn check_activation(pre: &WorldState, act: &Activation) -> Result<(), String> {
    let rec = &act.record;
    if !rec.kind.fits(rec.agent) {
        return Err(format!("{:?} held by {}", rec.kind, rec.agent));
    }
    if act.mask.legal.len() != act.mask.domain_size || act.mask.semantics.len() != act.mask.domain_size {
        return Err("mask vectors disagree with domain size".into());
    }
    let options: Vec<usize> = act.payload.options.iter().map(|o| o.action).collect();
    if options != rec.legal_actions || act.payload.legal_actions != rec.legal_actions {
        return Err("payload options differ from legal actions".into());
    }
    let back: DecisionPayload = serde_json::from_str(&act.payload.to_line()).map_err(|e| e.to_string())?;
    if back != act.payload {
        return Err("payload does not round-trip".into());
    }
    let eligible = rec.ctx.item_info.as_ref().map(|i| i.eligible_cells.clone());
    for i in act.mask.legal_indices() {
        match act.mask.target(i).unwrap() {
            Target::Binding { job, machine } => {
                let m = &pre.machines[machine.index()];
                let j = &pre.jobs[job.index()];
                let AgentId::Cell(c) = rec.agent else { return Err("binding outside a cell".into()) };
                if m.status != MachineStatus::Idle || m.cell != c || j.status != JobStatus::Ready || j.location != Some(c) {
                    return Err(format!("infeasible binding {job}->{machine}"));
                }
            }
            Target::Cell { cell } => {
                if !eligible.as_ref().is_some_and(|e| e.contains(&cell)) {
                    return Err(format!("cell {cell} not eligible"));
                }
            }
            Target::Job { job, .. } if !pre.backlog_candidates().contains(&job) => {
                return Err(format!("job {job} not selectable"));
            }
            _ => {}
        }
    }
    match &rec.decision {
        Some(d) if act.mask.is_legal(d.action) => Ok(()),
        other => Err(format!("decision {other:?} is not legal")),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn masks_are_sound_and_payloads_round_trip(seed in 1u64..500, ctl in 0u64..1000, m in 0usize..4, inst in 0usize..2) {
        let mode = AuthorityMode::builtins()[m].clone();
        let name = ["A3C9-1", "A5C12-2"][inst];
        let config = Arc::new(load_shipped(name).unwrap());
        let meta = EpisodeMeta {
            case_id: "p".into(),
            instance: name.into(),
            mode: mode.mode_id.clone(),
            controller: ControllerBinding::RuleRandomSeeded { seed: ctl }.label(),
            seed,
            framework: None,
        };
        let mut bad = Vec::new();
        let mut controller = RandomSeeded::new(ctl);
        run_episode_with(config, &mode, &mut controller, meta, &mut |pre, act| {
            if let Err(e) = check_activation(pre, act) {
                bad.push(e);
            }
        }).unwrap();
        prop_assert!(bad.is_empty(), "{:?}", &bad[..bad.len().min(5)]);
    }
}
