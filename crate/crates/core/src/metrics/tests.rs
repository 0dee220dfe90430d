use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::controllers::{RandomSeeded, RuleGreedy};
use crate::engine::OvershootInterval;
use crate::instance::load_shipped;
use crate::protocol::AuthorityMode;
use crate::runner::run_episode;

fn trace(instance: &str, mode: AuthorityMode, seed: u64, random: Option<u64>) -> EpisodeTrace {
    let config = Arc::new(load_shipped(instance).unwrap());
    let meta = EpisodeMeta {
        case_id: format!("{instance}__{}__x__seed{seed}", mode.mode_id),
        instance: instance.into(),
        mode: mode.mode_id.clone(),
        controller: "x".into(),
        seed,
        framework: None,
    };
    match random {
        Some(s) => run_episode(config, &mode, &mut RandomSeeded::new(s), meta),
        None => run_episode(config, &mode, &mut RuleGreedy, meta),
    }
    .unwrap()
    .trace
}

#[test]
fn width_statistics() {
    assert_eq!(widths([3, 1, 2, 2].into_iter()), (2.0, 0.75, 4.0));
    assert_eq!(widths(std::iter::empty()), (0.0, 0.0, 0.0));
}

#[test]
fn ledger_totals_sum_intervals_and_reject_overlaps() {
    let iv = |start, end, excess| OvershootInterval { start, end, excess };
    let ok = OvershootLedger { intervals: vec![iv(0.0, 1.5, 2.0), iv(3.0, 4.0, 0.5)], open: None };
    assert_eq!(ledger_totals(&ok, "energy").unwrap(), (2.5, 2.5, 2.0));
    let bad = OvershootLedger { intervals: vec![iv(0.0, 2.0, 1.0), iv(1.0, 3.0, 1.0)], open: None };
    assert!(matches!(ledger_totals(&bad, "carbon"), Err(MetricsError::LedgerCorruption { ledger: "carbon", .. })));
    let reversed = OvershootLedger { intervals: vec![iv(2.0, 1.0, 1.0)], open: None };
    assert!(ledger_totals(&reversed, "energy").is_err());
}

#[test]
fn tardiness_and_debt_from_job_outcomes() {
    let mut t = trace("A3C9-1", AuthorityMode::centralized(), 1, None);
    t.last.end_time = 10.0;
    t.last.jobs = vec![
        JobOutcome { job: crate::JobId(0), due_date: Some(5.0), completion_time: Some(8.0), stages: 3, completed_stages: 3 },
        JobOutcome { job: crate::JobId(1), due_date: Some(9.0), completion_time: Some(7.0), stages: 3, completed_stages: 3 },
        JobOutcome { job: crate::JobId(2), due_date: Some(2.0), completion_time: None, stages: 3, completed_stages: 1 },
        JobOutcome { job: crate::JobId(3), due_date: None, completion_time: None, stages: 2, completed_stages: 0 },
    ];
    let r = compute_episode_metrics(&t).unwrap();
    assert_eq!((r.td, r.ut, r.tcd), (3.0, 8.0, 11.0));
    assert_eq!((r.cj, r.dj, r.do_ops), (2.0, 2.0, 4.0));
    assert_eq!(r.th, Some(0.2));
}

#[test]
fn running_traces_are_incomplete() {
    let mut t = trace("A3C9-1", AuthorityMode::centralized(), 1, None);
    t.last.flags = crate::engine::EpisodeFlags::running();
    assert!(matches!(compute_episode_metrics(&t), Err(MetricsError::Incomplete(_))));
}

#[test]
fn decision_counts_come_from_the_trace() {
    let t = trace("A3C9-1", AuthorityMode::hierarchical(), 2, None);
    let r = compute_episode_metrics(&t).unwrap();
    assert_eq!(r.ds, t.activations.len() as f64);
    assert_eq!(r.bc, t.activations.iter().filter(|a| a.kind == DecisionKind::BacklogSelection).count() as f64);
    assert_eq!(r.cm, t.protocol.objects.len() as f64);
    assert_eq!(r.llm + r.fb, r.ds);
    assert_eq!(r.p1, Some(1.0));
    assert_eq!(r.ar, r.ds + r.na);
    assert_eq!(r.wc, None);
    assert_eq!(r.get("as"), Some(r.ds));
    assert_eq!(r.get("wc"), None);
}

#[test]
fn identities_catch_tampering() {
    let t = trace("A5C12-1", AuthorityMode::holonic_hybrid(), 3, Some(9));
    let mut r = compute_episode_metrics(&t).unwrap();
    assert!(identity_violations(&r, 1e-9).is_empty());
    r.tcd += 1.0;
    r.sr = 1.0 - r.sr;
    let v = identity_violations(&r, 1e-9);
    assert_eq!(v.len(), 2, "{v:?}");
}

#[test]
fn records_round_trip_through_values() {
    let r = compute_episode_metrics(&trace("A3C9-1", AuthorityMode::heterarchical_cnp(), 4, None)).unwrap();
    assert_eq!(MetricRecord::from_values(&r.values()), r);
    assert_eq!(METRICS.len(), r.values().len());
    let names: BTreeSet<_> = METRICS.iter().map(|m| m.1).collect();
    assert_eq!(names.len(), METRICS.len());
}

#[test]
fn suite_aggregation() {
    let base = compute_episode_metrics(&trace("A3C9-1", AuthorityMode::centralized(), 1, None)).unwrap();
    let meta = |seed: u64| EpisodeMeta {
        case_id: format!("c{seed}"),
        instance: "A3C9-1".into(),
        mode: "centralized".into(),
        controller: "rule_greedy".into(),
        seed,
        framework: None,
    };
    let mut a = base.clone();
    let mut b = base.clone();
    a.mk = 10.0;
    b.mk = 14.0;
    a.wc = Some(1.0);
    b.wc = None;
    a.ds = 90.0;
    b.ds = 100.0;
    let s = aggregate_suite(&[(meta(1), a.clone()), (meta(2), b.clone())]).unwrap();
    assert_eq!(s.seeds, 2);
    assert_eq!(s.metrics.mk, 12.0);
    assert_eq!(s.metrics.mk_std, Some(2.0));
    assert_eq!(s.metrics.ds, 95.0);
    assert_eq!(s.metrics.wc, None, "absent anywhere means absent");
    let mut other = meta(3);
    other.mode = "hierarchical".into();
    assert!(matches!(aggregate_suite(&[(meta(1), a), (other, b)]), Err(MetricsError::Mixed(_))));
    assert_eq!(aggregate_suite(&[]), Err(MetricsError::Empty));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn identities_hold_on_random_episodes(seed in 1u64..1000, ctl in 0u64..1000, m in 0usize..4, inst in 0usize..4) {
        let name = ["A3C9-1", "A5C12-1", "A5C12-2", "A5C12-3"][inst];
        let t = trace(name, AuthorityMode::builtins()[m].clone(), seed, Some(ctl));
        let r = compute_episode_metrics(&t).unwrap();
        let v = identity_violations(&r, 1e-9);
        prop_assert!(v.is_empty(), "{:?}", v);
        prop_assert!((r.co - 0.6 * r.en).abs() <= 1e-9 * r.en.max(1.0));
        prop_assert!((r.su - 6.0 * r.st).abs() <= 1e-9 * r.su.max(1.0));
        prop_assert!((r.te - 0.2 * r.tt).abs() <= 1e-9 * r.te.max(1.0));
    }
}
