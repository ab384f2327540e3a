//! Acceptance gate: one test per release criterion. Each prints a single
//! PASS line on success; a failed assertion fails the criterion.

use indexmap::IndexMap;
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde_json::Map;

use evibound::approval::{evaluate_consensus, ApprovalOutcome, GateConfig, ReviewerId, ReviewerVerdict};
use evibound::bench::{all_fixtures, run_benchmark};
use evibound::clock::Clock;
use evibound::contract::{parse_contract, AcceptanceContract, Interval};
use evibound::ledger::{parse_ledger, ClaimStatus, ClaimsLedgerEntry, Evidence, RetryEvent};
use evibound::pipeline::{
    audit_ledger, run_task, AuditVerdict, ExecFailure, ExecutionClaim, PipelineConfig,
    SystemVariant, TaskExecutor, UnanimousPanel,
};
use evibound::store::{FsStore, RunStatus, RunStore};
use evibound::verify::{verify, FailureClass, VerifyOptions};

fn pass(n: u32, name: &str) {
    println!("[acceptance] criterion {n} ({name}): PASS");
}

fn fixed_clock() -> Clock {
    Clock::parse("fixed:2025-10-23T14:32:18Z").unwrap()
}

fn bench_once(variant: SystemVariant) -> (tempfile::TempDir, Vec<ClaimsLedgerEntry>, evibound::pipeline::AuditReport, evibound::bench::BenchReport) {
    let dir = tempfile::tempdir().unwrap();
    let store = FsStore::open_seeded(dir.path().join("store"), 42)
        .with_display_base("http://localhost:5000");
    let (entries, audit, report) =
        run_benchmark(&variant, &store, &dir.path().join("ledgers"), fixed_clock()).unwrap();
    (dir, entries, audit, report)
}

#[test]
fn criterion_1_differential_honesty() {
    let started = std::time::Instant::now();
    let rate = |v| bench_once(v).3.hallucination_rate;
    assert_eq!(rate(SystemVariant::baseline_a()), 1.0);
    assert_eq!(rate(SystemVariant::baseline_b()), 0.25);
    assert_eq!(rate(SystemVariant::evibound()), 0.0);
    assert!(started.elapsed().as_secs() < 10, "benchmark exceeded 10 s");
    pass(1, "differential honesty 1.00 / 0.25 / 0.00");
}

#[test]
fn criterion_2_per_task_matrix() {
    let mut cells = 0;
    for variant in [
        SystemVariant::baseline_a(),
        SystemVariant::baseline_b(),
        SystemVariant::evibound(),
    ] {
        let (_d, _e, _a, report) = bench_once(variant);
        for (fixture, result) in all_fixtures().iter().zip(&report.tasks) {
            assert_eq!(fixture.task_id, result.task_id);
            assert_eq!(
                fixture.expected(&variant),
                result.outcome,
                "task {} under variant {}",
                result.task_id,
                variant.name()
            );
            cells += 1;
        }
    }
    assert_eq!(cells, 24);
    pass(2, "24-cell per-task outcome matrix");
}

// --- criterion 3: oracle equivalence -------------------------------------

const ARTIFACT_POOL: [&str; 4] = ["a.txt", "d/b.txt", "c.bin", "d/e/f.npy"];
const METRIC_POOL: [&str; 3] = ["m1", "m2", "m3"];

/// Ground truth for one randomly generated scenario.
struct Scenario {
    contract: AcceptanceContract,
    run_exists: bool,
    status: RunStatus,
    stored_artifacts: Vec<&'static str>,
    stored_metrics: Vec<(&'static str, f64)>,
}

fn random_scenario(rng: &mut ChaCha20Rng) -> Scenario {
    let n_artifacts = rng.gen_range(0..=4);
    let mut pool = ARTIFACT_POOL.to_vec();
    pool.shuffle(rng);
    let required_artifacts: Vec<String> =
        pool[..n_artifacts].iter().map(|s| (*s).to_owned()).collect();

    let n_metrics = rng.gen_range(0..=3);
    let mut required_metrics = IndexMap::new();
    for name in METRIC_POOL.iter().take(n_metrics) {
        let lo = rng.gen_range(-5.0..5.0);
        required_metrics.insert((*name).to_owned(), Interval { lo, hi: lo + rng.gen_range(0.0..5.0) });
    }

    let mut contract = parse_contract(
        br#"{"task_id":"R","description":"randomized scenario","acceptance_criteria":{"run_id":{"deferred":true},"metrics":{},"artifacts":["x"],"status":"FINISHED"}}"#,
    )
    .unwrap();
    contract.acceptance_criteria.artifacts = required_artifacts;
    contract.acceptance_criteria.required_metrics =
        if required_metrics.is_empty() && rng.gen_bool(0.5) { None } else { Some(required_metrics) };

    let status = *[RunStatus::Running, RunStatus::Finished, RunStatus::Failed, RunStatus::Killed]
        .choose(rng)
        .unwrap();
    let stored_artifacts: Vec<&'static str> =
        ARTIFACT_POOL.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
    let mut stored_metrics: Vec<(&'static str, f64)> = Vec::new();
    for m in METRIC_POOL {
        if rng.gen_bool(0.6) {
            stored_metrics.push((m, rng.gen_range(-10.0..10.0)));
        }
    }

    Scenario {
        contract,
        run_exists: rng.gen_bool(0.8),
        status,
        stored_artifacts,
        stored_metrics,
    }
}

/// Independent predicate evaluator over the generated ground truth, in the
/// gate's documented check order.
fn oracle(s: &Scenario) -> Option<FailureClass> {
    if !s.run_exists {
        return Some(FailureClass::RunNotQueryable);
    }
    if s.status != RunStatus::Finished {
        return Some(FailureClass::NotFinished);
    }
    for required in &s.contract.acceptance_criteria.artifacts {
        if !s.stored_artifacts.iter().any(|a| a == required) {
            return Some(FailureClass::ArtifactMissing);
        }
    }
    if let Some(required) = &s.contract.acceptance_criteria.required_metrics {
        for (name, interval) in required {
            match s.stored_metrics.iter().find(|(m, _)| m == name) {
                None => return Some(FailureClass::MetricMissing),
                Some((_, v)) if !(*v >= interval.lo && *v <= interval.hi) => {
                    return Some(FailureClass::MetricOutOfRange)
                }
                Some(_) => {}
            }
        }
    }
    None
}

#[test]
fn criterion_3_algorithm_oracle_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let store = FsStore::open_seeded(dir.path(), 3);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for case in 0..1000 {
        let s = random_scenario(&mut rng);
        let claimed = if s.run_exists {
            let id = store.create_run().unwrap();
            for a in &s.stored_artifacts {
                store.log_artifact(&id, a, b"x").unwrap();
            }
            for (m, v) in &s.stored_metrics {
                store.log_metric(&id, m, *v).unwrap();
            }
            if s.status != RunStatus::Running {
                store.set_status(&id, s.status).unwrap();
            }
            id
        } else {
            "0123456789abcdef0123456789abcdef".to_owned()
        };
        let outcome = verify(&s.contract, &claimed, &store, &VerifyOptions::default());
        let expected = oracle(&s);
        assert_eq!(outcome.passed, expected.is_none(), "case {case}: pass/fail disagreement");
        assert_eq!(outcome.failure, expected, "case {case}: failure-class disagreement");
    }
    pass(3, "verification gate ≡ brute-force oracle over 1000 scenarios");
}

// --- criterion 4: bounded retries ----------------------------------------

/// Adversarial executor: every execution produces some randomly chosen
/// defect, so no attempt can ever verify.
struct Adversary {
    rng: ChaCha20Rng,
}

impl TaskExecutor for Adversary {
    fn execute(
        &mut self,
        contract: &AcceptanceContract,
        store: &dyn RunStore,
    ) -> Result<ExecutionClaim, ExecFailure> {
        match self.rng.gen_range(0..5) {
            0 => Err(ExecFailure::Runtime("sandbox crash".into())),
            1 => Err(ExecFailure::Scope("task scope mismatch".into())),
            // Claims a run that does not exist.
            2 => Ok(ExecutionClaim {
                run_id: "feedfacefeedfacefeedfacefeedface".into(),
                metrics: Map::new(),
                artifacts: Vec::new(),
            }),
            // Leaves the run RUNNING.
            3 => {
                let id = store.create_run().unwrap();
                Ok(ExecutionClaim { run_id: id, metrics: Map::new(), artifacts: Vec::new() })
            }
            // Finishes without logging any artifacts.
            _ => {
                let id = store.create_run().unwrap();
                let _ = contract;
                store.set_status(&id, RunStatus::Finished).unwrap();
                Ok(ExecutionClaim { run_id: id, metrics: Map::new(), artifacts: Vec::new() })
            }
        }
    }
}

#[test]
fn criterion_4_bounded_retries() {
    let dir = tempfile::tempdir().unwrap();
    let store = FsStore::open_seeded(dir.path(), 4);
    let contract = parse_contract(
        br#"{"task_id":"ADV","description":"adversarial scripts","acceptance_criteria":{"run_id":{"deferred":true},"metrics":{"m":{"type":"float","range":[0,1]}},"artifacts":["out/a.bin"],"status":"FINISHED","required_metrics":{"m":[0,1]}}}"#,
    )
    .unwrap();
    let config = PipelineConfig { clock: fixed_clock(), ..PipelineConfig::default() };
    for script in 0..100 {
        let mut adversary = Adversary { rng: ChaCha20Rng::seed_from_u64(script) };
        let entry = run_task(
            &contract,
            &mut adversary,
            &mut UnanimousPanel(0.9),
            &SystemVariant::evibound(),
            &store,
            &config,
        )
        .unwrap();
        // Terminal status reached, never a promotion.
        assert_ne!(entry.status, ClaimStatus::VerifiedSuccess, "script {script}");
        // No retry phase used more than twice.
        for phase in ["4.5", "5.5", "6.5"] {
            let used = entry.retry_history.iter().filter(|r| r.phase == phase).count();
            assert!(used <= 2, "script {script}: phase {phase} used {used} times");
        }
    }
    pass(4, "adversarial scripts terminate within the 2-per-phase budget");
}

// --- criterion 5: no promotion without evidence --------------------------

/// Executor with randomized (possibly dishonest) behavior.
struct Randomized {
    rng: ChaCha20Rng,
}

impl TaskExecutor for Randomized {
    fn execute(
        &mut self,
        contract: &AcceptanceContract,
        store: &dyn RunStore,
    ) -> Result<ExecutionClaim, ExecFailure> {
        if self.rng.gen_bool(0.1) {
            return Err(ExecFailure::Runtime("crash".into()));
        }
        if self.rng.gen_bool(0.15) {
            // Pure fabrication.
            return Ok(ExecutionClaim {
                run_id: "deadbeefdeadbeefdeadbeefdeadbeef".into(),
                metrics: Map::new(),
                artifacts: contract.acceptance_criteria.artifacts.clone(),
            });
        }
        let id = store.create_run().unwrap();
        for a in &contract.acceptance_criteria.artifacts {
            if self.rng.gen_bool(0.8) {
                store.log_artifact(&id, a, b"x").unwrap();
            }
        }
        if let Some(required) = &contract.acceptance_criteria.required_metrics {
            for (name, iv) in required {
                if self.rng.gen_bool(0.8) {
                    let v = if self.rng.gen_bool(0.8) {
                        (iv.lo + iv.hi) / 2.0
                    } else {
                        iv.hi + 1.0
                    };
                    store.log_metric(&id, name, v).unwrap();
                }
            }
        }
        if self.rng.gen_bool(0.9) {
            store.set_status(&id, RunStatus::Finished).unwrap();
        }
        Ok(ExecutionClaim { run_id: id, metrics: Map::new(), artifacts: Vec::new() })
    }
}

#[test]
fn criterion_5_no_promotion_without_evidence() {
    let dir = tempfile::tempdir().unwrap();
    let store = FsStore::open_seeded(dir.path(), 5);
    let contract = parse_contract(
        br#"{"task_id":"RND","description":"randomized executors","acceptance_criteria":{"run_id":{"deferred":true},"metrics":{"loss":{"type":"float","range":[0,2]}},"artifacts":["model.pt","logs/train.log"],"status":"FINISHED","required_metrics":{"loss":[0,2]}}}"#,
    )
    .unwrap();
    let config = PipelineConfig { clock: fixed_clock(), ..PipelineConfig::default() };
    for seed in 0..1000 {
        let mut executor = Randomized { rng: ChaCha20Rng::seed_from_u64(seed) };
        let entry = run_task(
            &contract,
            &mut executor,
            &mut UnanimousPanel(0.9),
            &SystemVariant::evibound(),
            &store,
            &config,
        )
        .unwrap();
        let report = audit_ledger(std::slice::from_ref(&entry), &store).unwrap();
        assert_eq!(report.hallucinated, 0, "seed {seed}: {entry:?}");
    }
    pass(5, "1000 randomized executors, zero hallucinations on immediate audit");
}

#[test]
fn criterion_6_consensus_grid() {
    let confidences = [0.0, 0.4, 0.5, 0.69, 0.7, 0.71, 1.0];
    let config = GateConfig::default();
    let mut cells = 0;
    for &(a_app, a_conf) in &grid(&confidences) {
        for &(b_app, b_conf) in &grid(&confidences) {
            for &(c_app, c_conf) in &grid(&confidences) {
                let verdicts = vec![
                    verdict(ReviewerId::OpsCommander, a_app, a_conf),
                    verdict(ReviewerId::QualitySafetyMonitor, b_app, b_conf),
                    verdict(ReviewerId::InfrastructureReviewer, c_app, c_conf),
                ];
                let cases = [(a_app, a_conf), (b_app, b_conf), (c_app, c_conf)];
                let expected = if cases.iter().any(|&(app, conf)| !app && conf < 0.5) {
                    ApprovalOutcome::HardVeto
                } else if cases.iter().all(|&(app, conf)| app && conf >= 0.7) {
                    ApprovalOutcome::Approved
                } else {
                    ApprovalOutcome::Rejected
                };
                let got = evaluate_consensus(&verdicts, &config).unwrap().outcome;
                assert_eq!(got, expected, "cells {cases:?}");
                cells += 1;
            }
        }
    }
    assert_eq!(cells, 14usize.pow(3));
    pass(6, "exhaustive consensus grid matches the rule in every cell");
}

fn grid(confidences: &[f64]) -> Vec<(bool, f64)> {
    confidences
        .iter()
        .flat_map(|&c| [(true, c), (false, c)])
        .collect()
}

fn verdict(id: ReviewerId, approves: bool, confidence: f64) -> ReviewerVerdict {
    if approves {
        ReviewerVerdict::approve(id, confidence)
    } else {
        ReviewerVerdict::reject(id, confidence, "objection")
    }
}

// --- criterion 7: ledger round-trip --------------------------------------

fn golden_entry() -> ClaimsLedgerEntry {
    let mut metrics = Map::new();
    metrics.insert("val_loss".into(), serde_json::json!(1.234));
    metrics.insert("epochs_completed".into(), serde_json::json!(3));
    ClaimsLedgerEntry {
        task_id: "T04".into(),
        status: ClaimStatus::VerifiedSuccess,
        run_id: Some("a3f8b2c1d4e5f6a7b8c9d0e1f2a3b4c5".into()),
        evidence: Some(Evidence {
            tracker_url: "http://localhost:5000/#/experiments/1/runs/a3f8...".into(),
            metrics,
            artifacts: vec!["model.pt".into(), "metrics.json".into(), "training.log".into()],
        }),
        verification_timestamp: "2025-10-23T14:32:18Z".into(),
        retry_history: Vec::new(),
    }
}

fn random_entry(rng: &mut ChaCha20Rng) -> ClaimsLedgerEntry {
    let status = *[
        ClaimStatus::VerifiedSuccess,
        ClaimStatus::VerificationFailed,
        ClaimStatus::BlockedAtApproval,
        ClaimStatus::ExecutionFailed,
        ClaimStatus::Escalated,
        ClaimStatus::Halted,
    ]
    .choose(rng)
    .unwrap();
    let run_id = match status {
        ClaimStatus::VerifiedSuccess => Some(format!("{:032x}", rng.gen::<u128>())),
        ClaimStatus::BlockedAtApproval => None,
        _ => rng.gen_bool(0.5).then(|| format!("{:032x}", rng.gen::<u128>())),
    };
    let evidence = if status == ClaimStatus::VerifiedSuccess || rng.gen_bool(0.3) {
        let mut metrics = Map::new();
        for i in 0..rng.gen_range(0..4) {
            metrics.insert(format!("m{i}"), serde_json::json!(rng.gen_range(0.0..9.0)));
        }
        Some(Evidence {
            tracker_url: format!("http://tracker/{}", rng.gen_range(0..100)),
            metrics,
            artifacts: (0..rng.gen_range(0..4)).map(|i| format!("a{i}.bin")).collect(),
        })
    } else {
        None
    };
    let retry_history = (0..rng.gen_range(0..3))
        .map(|i| RetryEvent { phase: "6.5".into(), patch_id: format!("T:{i}") })
        .collect();
    ClaimsLedgerEntry {
        task_id: format!("T{:02}", rng.gen_range(1..99)),
        status,
        run_id,
        evidence,
        verification_timestamp: "2025-10-23T14:32:18Z".into(),
        retry_history,
    }
}

#[test]
fn criterion_7_ledger_round_trip() {
    // Golden entry: byte-identical round trip against the checked-in fixture.
    let golden_path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/golden/t04_entry.json");
    let golden_text = std::fs::read_to_string(golden_path).unwrap();
    let serialized = serde_json::to_string_pretty(&golden_entry()).unwrap();
    assert_eq!(serialized, golden_text.trim_end());
    let reparsed: ClaimsLedgerEntry = serde_json::from_str(&serialized).unwrap();
    reparsed.validate().unwrap();
    assert_eq!(serde_json::to_string_pretty(&reparsed).unwrap(), serialized);

    // 500 randomized valid entries round-trip.
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for case in 0..500 {
        let entry = random_entry(&mut rng);
        entry.validate().unwrap_or_else(|e| panic!("case {case}: generator invalid: {e}"));
        let text = format!("[{}]", serde_json::to_string(&entry).unwrap());
        let loaded = parse_ledger(&text).unwrap();
        assert_eq!(loaded, vec![entry], "case {case}");
    }

    // Every invalid promoted entry is rejected on load.
    let mut broken = golden_entry();
    broken.run_id = None;
    let text = format!("[{}]", serde_json::to_string(&broken).unwrap());
    assert!(parse_ledger(&text).is_err());
    let mut no_evidence = golden_entry();
    no_evidence.evidence = None;
    let text = format!("[{}]", serde_json::to_string(&no_evidence).unwrap());
    assert!(parse_ledger(&text).is_err());
    pass(7, "golden + 500 randomized ledger entries round-trip; invalid rejected");
}

#[test]
fn criterion_8_recursive_artifact_check() {
    let dir = tempfile::tempdir().unwrap();
    let store = FsStore::open_seeded(dir.path(), 8);
    let contract = parse_contract(
        br#"{"task_id":"T05","description":"results report persistence","acceptance_criteria":{"run_id":{"deferred":true},"metrics":{"n":{"type":"int","min":1}},"artifacts":["reports/summary.md"],"status":"FINISHED"}}"#,
    )
    .unwrap();

    // Nested file present: passes.
    let ok = store.create_run().unwrap();
    store.log_artifact(&ok, "reports/summary.md", b"# ok").unwrap();
    store.set_status(&ok, RunStatus::Finished).unwrap();
    assert!(verify(&contract, &ok, &store, &VerifyOptions::default()).passed);
    // A flat listing would never have surfaced the nested path.
    let flat: Vec<String> = store
        .list_artifacts(&ok, false)
        .unwrap()
        .into_iter()
        .map(|e| e.path)
        .collect();
    assert!(!flat.contains(&"reports/summary.md".to_string()));
    assert!(flat.contains(&"reports".to_string()));

    // Same basename at the top level only: must fail.
    let bad = store.create_run().unwrap();
    store.log_artifact(&bad, "summary.md", b"# misplaced").unwrap();
    store.set_status(&bad, RunStatus::Finished).unwrap();
    let outcome = verify(&contract, &bad, &store, &VerifyOptions::default());
    assert_eq!(outcome.failure, Some(FailureClass::ArtifactMissing));
    pass(8, "nested artifacts found recursively; flat placement fails");
}

#[test]
fn criterion_9_tamper_audit() {
    let (_d0, entries, _a, _r) = bench_once(SystemVariant::evibound());
    let verified: Vec<String> = entries
        .iter()
        .filter(|e| e.status == ClaimStatus::VerifiedSuccess)
        .map(|e| e.task_id.clone())
        .collect();
    assert_eq!(verified.len(), 7);

    for victim in &verified {
        // Fresh benchmark, then tamper with exactly one verified run.
        let dir = tempfile::tempdir().unwrap();
        let store = FsStore::open_seeded(dir.path().join("store"), 42)
            .with_display_base("http://localhost:5000");
        let (entries, _, _) = run_benchmark(
            &SystemVariant::evibound(),
            &store,
            &dir.path().join("ledgers"),
            fixed_clock(),
        )
        .unwrap();
        let run_id = entries
            .iter()
            .find(|e| &e.task_id == victim)
            .and_then(|e| e.run_id.clone())
            .unwrap();
        std::fs::remove_dir_all(dir.path().join("store/runs").join(&run_id)).unwrap();

        let report = audit_ledger(&entries, &store).unwrap();
        for audit in &report.tasks {
            if &audit.task_id == victim {
                assert_eq!(audit.verdict, AuditVerdict::Hallucinated, "victim {victim}");
            } else {
                assert_ne!(audit.verdict, AuditVerdict::Hallucinated, "bystander {}", audit.task_id);
            }
        }
    }
    pass(9, "deleting any verified run flips exactly that task to HALLUCINATED");
}
