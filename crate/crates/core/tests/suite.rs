use std::fs;
use std::path::Path;

use desbench_core::controllers::ControllerBinding;
use desbench_core::metrics::{compute_episode_metrics, METRICS};
use desbench_core::protocol::AuthorityMode;
use desbench_core::runner::{
    read_progress, read_summary_rows, read_trace, run_case, run_cases, run_suite, trace_path, CaseStatus, RunError, RunSpec,
    MANIFEST, SUITE_SUMMARY, SUMMARY, TRACE_KINDS,
};

fn spec(dir: &Path, mode: AuthorityMode, seeds: std::ops::RangeInclusive<u64>) -> RunSpec {
    RunSpec {
        suite: "intercell_a3c9_wide".into(),
        mode,
        controller: ControllerBinding::RuleGreedy,
        seeds: seeds.collect(),
        output_dir: dir.to_path_buf(),
        limits: Default::default(),
        jobs: None,
        framework: None,
    }
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn ten_seed_suite_writes_the_artifact_set() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_suite(&spec(dir.path(), AuthorityMode::centralized(), 1..=10)).unwrap();
    assert!(report.all_ok());
    assert_eq!(report.cases.len(), 10);
    assert_eq!(report.summaries.len(), 1);
    assert_eq!(report.summaries[0].metrics.ds, 90.0);

    assert_eq!(csv_rows(&dir.path().join(SUMMARY)).len(), 10);
    let suite = csv_rows(&dir.path().join(SUITE_SUMMARY));
    assert_eq!(suite.len(), METRICS.len());
    let ds = suite.iter().find(|r| r[5] == "ds").unwrap();
    assert_eq!((ds[4].as_str(), ds[6].as_str()), ("decision_steps", "90"));
    let wc = suite.iter().find(|r| r[5] == "wc").unwrap();
    assert!(wc[6].parse::<f64>().unwrap() > 0.0);

    let manifest = csv_rows(&dir.path().join(MANIFEST));
    assert_eq!(manifest.len(), 10 * TRACE_KINDS.len());
    for row in &manifest {
        assert!(dir.path().join(&row[2]).is_file(), "{row:?}");
    }
    let traces = fs::read_dir(dir.path().join("traces")).unwrap().count();
    assert_eq!(traces, manifest.len(), "every trace file is in the manifest");
    let progress = read_progress(dir.path()).unwrap();
    assert_eq!(progress.len(), 10);
    assert!(progress.iter().all(|p| p.status == CaseStatus::Completed && p.reproducible && p.fallback_decisions == 0));
}

#[test]
fn restart_skips_completed_cases() {
    let dir = tempfile::tempdir().unwrap();
    run_suite(&spec(dir.path(), AuthorityMode::hierarchical(), 1..=5)).unwrap();
    let before = read_summary_rows(dir.path()).unwrap();
    let report = run_suite(&spec(dir.path(), AuthorityMode::hierarchical(), 1..=10)).unwrap();
    let statuses: Vec<_> = report.cases.iter().map(|c| c.status).collect();
    assert_eq!(&statuses[..5], &[CaseStatus::Skipped; 5]);
    assert_eq!(&statuses[5..], &[CaseStatus::Completed; 5]);
    assert!(report.cases.iter().all(|c| c.metrics.is_some()));
    let after = read_summary_rows(dir.path()).unwrap();
    assert_eq!(after.len(), 10);
    for (id, row) in before {
        assert_eq!(after[&id], row, "recomputed row for {id} matches the original");
    }
    let log = read_progress(dir.path()).unwrap();
    assert_eq!(log.iter().filter(|p| p.status == CaseStatus::Skipped).count(), 5);
}

#[test]
fn reruns_are_byte_identical_and_replay_matches() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut sa = spec(a.path(), AuthorityMode::heterarchical_cnp(), 1..=3);
    sa.jobs = Some(3);
    let mut sb = spec(b.path(), AuthorityMode::heterarchical_cnp(), 1..=3);
    sb.jobs = Some(1);
    let ra = run_suite(&sa).unwrap();
    run_suite(&sb).unwrap();
    assert_eq!(fs::read(a.path().join(SUMMARY)).unwrap(), fs::read(b.path().join(SUMMARY)).unwrap());
    for case in &ra.cases {
        for kind in TRACE_KINDS {
            let rel = trace_path(&case.case_id, kind);
            assert_eq!(fs::read(a.path().join(&rel)).unwrap(), fs::read(b.path().join(&rel)).unwrap(), "{rel:?}");
        }
        let mut live = case.metrics.clone().unwrap();
        live.wc = None;
        let offline = compute_episode_metrics(&read_trace(a.path(), &case.case_id).unwrap()).unwrap();
        assert_eq!(offline, live);
    }
}

#[test]
fn parallel_and_sequential_paths_agree() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), AuthorityMode::holonic_hybrid(), 1..=6);
    let config = std::sync::Arc::new(desbench_core::instance::load_shipped("A3C9-1").unwrap());
    let cases: Vec<_> = s
        .seeds
        .iter()
        .map(|&seed| desbench_core::runner::CaseSpec {
            config: config.clone(),
            mode: s.mode.clone(),
            controller: ControllerBinding::RuleRandomSeeded { seed: seed + 100 },
            seed,
            framework: None,
        })
        .collect();
    let seq: Vec<_> = run_cases(&cases, 1).into_iter().map(|r| r.unwrap().trace).collect();
    let par: Vec<_> = run_cases(&cases, 4).into_iter().map(|r| r.unwrap().trace).collect();
    assert_eq!(seq, par);
}

#[test]
fn single_case_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), AuthorityMode::centralized(), 1..=3);
    let first = run_suite(&s).unwrap();
    let id = first.cases[1].case_id.clone();
    assert_eq!(id, "A3C9-1__centralized__rule_greedy__seed2");
    let before = read_summary_rows(dir.path()).unwrap();
    let again = run_case(&s, &id).unwrap();
    assert_eq!(again.cases[0].status, CaseStatus::Completed);
    assert_eq!(read_summary_rows(dir.path()).unwrap()[&id], before[&id]);

    let mut other = s.clone();
    other.controller = ControllerBinding::RuleRandomSeeded { seed: 4 };
    let r = run_case(&other, &id).unwrap();
    assert_eq!(r.cases[0].case_id, "A3C9-1__centralized__rule_random_seeded4__seed2");
    let rows = read_summary_rows(dir.path()).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[&id], before[&id], "original untouched");

    assert!(matches!(run_case(&s, "A3C9-1__centralized__rule_greedy"), Err(RunError::UnknownCase(_))));
    assert!(matches!(run_case(&s, "A9C9-1__centralized__rule_greedy__seed1"), Err(RunError::UnknownCase(_))));
    assert!(matches!(run_case(&s, "A3C9-1__hierarchical__rule_greedy__seed1"), Err(RunError::UnknownCase(_))));
}

#[test]
fn model_service_cases_are_flagged_non_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut s = spec(dir.path(), AuthorityMode::centralized(), 1..=1);
    s.controller = ControllerBinding::ModelService {
        base_url: format!("http://127.0.0.1:{port}"),
        model: "m".into(),
        api_key: None,
        timeout_secs: 0.5,
        retries: 0,
    };
    let r = run_suite(&s).unwrap();
    let m = r.cases[0].metrics.as_ref().unwrap();
    assert_eq!(m.fb, m.ds);
    assert_eq!(m.llm, 0.0);
    let log = read_progress(dir.path()).unwrap();
    assert!(!log[0].reproducible);
    assert!(!log[0].failures.is_empty());
}

#[test]
fn spawn_failure_aborts_before_any_episode() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(&dir.path().join("out"), AuthorityMode::centralized(), 1..=2);
    s.controller = ControllerBinding::ExternalProcess { command: "no-such-controller-xyz".into(), timeout_secs: 1.0 };
    assert!(matches!(run_suite(&s), Err(RunError::Spawn(_))));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn invalid_specs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(dir.path(), AuthorityMode::centralized(), 1..=2);
    s.seeds = vec![1, 1];
    assert!(matches!(run_suite(&s), Err(RunError::InvalidSpec(_))));
    s.seeds.clear();
    assert!(matches!(run_suite(&s), Err(RunError::InvalidSpec(_))));
    let mut s = spec(dir.path(), AuthorityMode::centralized(), 1..=2);
    s.suite = "nowhere".into();
    assert!(matches!(run_suite(&s), Err(RunError::Instance(_))));
}

#[test]
fn multi_instance_suites_group_their_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(dir.path(), AuthorityMode::centralized(), 1..=2);
    s.suite = "intercell_a5c12_harder".into();
    let r = run_suite(&s).unwrap();
    assert_eq!(r.cases.len(), 6);
    let groups: Vec<_> = r.summaries.iter().map(|g| g.instance.as_str()).collect();
    assert_eq!(groups, ["A5C12-1", "A5C12-2", "A5C12-3"]);
    assert!(r.summaries.iter().all(|g| g.metrics.ds == 120.0 && g.metrics.tm == 40.0));
}
