//! Deterministic benchmark harness: eight scripted tasks run under each
//! system variant from a fresh store root, then audited.
//!
//! Every executor is a fixed script (which artifacts/metrics it actually logs,
//! whether it finishes the run), so two runs from fresh roots produce
//! byte-identical ledgers when the clock is pinned.

use std::path::Path;

use serde::Serialize;
use serde_json::Map;
use thiserror::Error;

use crate::approval::{ReviewerId, ReviewerVerdict};
use crate::clock::Clock;
use crate::contract::{parse_contract, AcceptanceContract};
use crate::ledger::{emit_ledger, ClaimsLedgerEntry, LedgerError};
use crate::pipeline::{
    audit_ledger, metric_number, run_task, AuditError, AuditReport, AuditVerdict, ExecFailure,
    ExecutionClaim, PipelineConfig, PipelineError, ReviewerPanel, SystemVariant, TaskExecutor,
};
use crate::reflection::{PatchAction, PatchRule, PolicyDecision, Rulebook};
use crate::store::{FsStore, RunStatus, RunStore};

pub const TASK_IDS: [&str; 8] = ["T01", "T03", "T04", "T05", "T06", "T09", "T12", "T13"];

/// The five metrics the T06 executor actually implements (of eight proposed).
const T06_CORE_METRICS: [(&str, f64); 5] = [
    ("val_loss", 1.234),
    ("train_loss", 1.102),
    ("epoch_time", 42.5),
    ("accuracy", 0.87),
    ("learning_rate", 0.001),
];

/// What a scripted executor does with the store.
#[derive(Debug, Clone, PartialEq)]
pub enum Behavior {
    /// Claims a fabricated run id; makes no store writes at all.
    Fabricate,
    /// Logs every contract artifact and every required metric (midpoint).
    Honest,
    /// Logs exactly these metrics; artifacts only when `log_artifacts`.
    LogsExactly {
        metrics: Vec<(&'static str, f64)>,
        log_artifacts: bool,
    },
}

/// Benchmark outcome of one task, after auditing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BenchOutcome {
    #[serde(rename = "VERIFIED")]
    Verified,
    #[serde(rename = "HALLUCINATED")]
    Hallucinated,
    #[serde(rename = "BLOCKED")]
    Blocked,
}

impl BenchOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            BenchOutcome::Verified => "VERIFIED",
            BenchOutcome::Hallucinated => "HALLUCINATED",
            BenchOutcome::Blocked => "BLOCKED",
        }
    }
}

/// One benchmark task: contract fixture, per-variant executor scripts,
/// reviewer fixtures, and the expected outcome per variant.
pub struct TaskScript {
    pub task_id: &'static str,
    contract_json: &'static str,
    behavior_b: Behavior,
    behavior_evibound: Behavior,
    panel: PanelScript,
    pub expected_a: BenchOutcome,
    pub expected_b: BenchOutcome,
    pub expected_evibound: BenchOutcome,
}

impl TaskScript {
    pub fn contract(&self) -> AcceptanceContract {
        parse_contract(self.contract_json.as_bytes()).expect("fixture contracts parse")
    }

    pub fn contract_text(&self) -> &'static str {
        self.contract_json
    }

    pub fn expected(&self, variant: &SystemVariant) -> BenchOutcome {
        if variant.approval_gate_enabled {
            self.expected_evibound
        } else if variant.verification_gate_enabled {
            self.expected_b
        } else {
            self.expected_a
        }
    }

    fn behavior(&self, variant: &SystemVariant) -> Behavior {
        if !variant.verification_gate_enabled && !variant.approval_gate_enabled {
            Behavior::Fabricate
        } else if variant.approval_gate_enabled {
            self.behavior_evibound.clone()
        } else {
            self.behavior_b.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PanelScript {
    /// All three reviewers approve at this confidence.
    Approve,
    /// The quality monitor rejects while the contract carries more than five
    /// metrics (complex metrics lack implementations), then approves.
    ComplexMetricsObjection,
}

struct ScriptedPanel(PanelScript);

impl ReviewerPanel for ScriptedPanel {
    fn verdicts(&mut self, _attempt: u32, contract: &AcceptanceContract) -> Vec<ReviewerVerdict> {
        match self.0 {
            PanelScript::ComplexMetricsObjection if contract.acceptance_criteria.metrics.len() > 5 => {
                vec![
                    ReviewerVerdict::approve(ReviewerId::OpsCommander, 0.9),
                    ReviewerVerdict::reject(
                        ReviewerId::QualitySafetyMonitor,
                        0.8,
                        "proposed metrics lack implementations; simplify the contract",
                    ),
                    ReviewerVerdict::approve(ReviewerId::InfrastructureReviewer, 0.85),
                ]
            }
            _ => ReviewerId::ALL
                .iter()
                .map(|&id| ReviewerVerdict::approve(id, 0.9))
                .collect(),
        }
    }
}

/// Deterministic 32-hex identifier derived from the task id (used only by
/// fabricating executors; it never exists in any store).
fn fabricated_run_id(task_id: &str) -> String {
    let mut hex: String = task_id.bytes().map(|b| format!("{b:02x}")).collect();
    while hex.len() < 32 {
        hex.push('0');
    }
    hex.truncate(32);
    hex
}

fn midpoint_metrics(contract: &AcceptanceContract) -> Vec<(String, f64)> {
    match &contract.acceptance_criteria.required_metrics {
        Some(required) => required
            .iter()
            .map(|(name, iv)| (name.clone(), (iv.lo + iv.hi) / 2.0))
            .collect(),
        None => Vec::new(),
    }
}

pub struct ScriptedExecutor {
    behavior: Behavior,
}

impl ScriptedExecutor {
    pub fn new(behavior: Behavior) -> ScriptedExecutor {
        ScriptedExecutor { behavior }
    }
}

impl TaskExecutor for ScriptedExecutor {
    fn execute(
        &mut self,
        contract: &AcceptanceContract,
        store: &dyn RunStore,
    ) -> Result<ExecutionClaim, ExecFailure> {
        match &self.behavior {
            Behavior::Fabricate => {
                let mut metrics = Map::new();
                for (name, value) in midpoint_metrics(contract) {
                    metrics.insert(name, metric_number(value));
                }
                Ok(ExecutionClaim {
                    run_id: fabricated_run_id(&contract.task_id),
                    metrics,
                    artifacts: contract.acceptance_criteria.artifacts.clone(),
                })
            }
            Behavior::Honest => {
                let id = store.create_run().map_err(|e| ExecFailure::Runtime(e.to_string()))?;
                for artifact in &contract.acceptance_criteria.artifacts {
                    store
                        .log_artifact(&id, artifact, artifact_bytes(artifact))
                        .map_err(|e| ExecFailure::Runtime(e.to_string()))?;
                }
                for (name, value) in midpoint_metrics(contract) {
                    store
                        .log_metric(&id, &name, value)
                        .map_err(|e| ExecFailure::Runtime(e.to_string()))?;
                }
                store
                    .set_status(&id, RunStatus::Finished)
                    .map_err(|e| ExecFailure::Runtime(e.to_string()))?;
                Ok(ExecutionClaim { run_id: id, metrics: Map::new(), artifacts: Vec::new() })
            }
            Behavior::LogsExactly { metrics, log_artifacts } => {
                let id = store.create_run().map_err(|e| ExecFailure::Runtime(e.to_string()))?;
                if *log_artifacts {
                    for artifact in &contract.acceptance_criteria.artifacts {
                        store
                            .log_artifact(&id, artifact, artifact_bytes(artifact))
                            .map_err(|e| ExecFailure::Runtime(e.to_string()))?;
                    }
                }
                for (name, value) in metrics {
                    store
                        .log_metric(&id, name, *value)
                        .map_err(|e| ExecFailure::Runtime(e.to_string()))?;
                }
                store
                    .set_status(&id, RunStatus::Finished)
                    .map_err(|e| ExecFailure::Runtime(e.to_string()))?;
                Ok(ExecutionClaim { run_id: id, metrics: Map::new(), artifacts: Vec::new() })
            }
        }
    }
}

/// Plausible file content per artifact, so stores hold non-empty evidence.
fn artifact_bytes(path: &str) -> &'static [u8] {
    if path.ends_with("approval_contract_output.json") {
        br#"{"result": "pass", "confidence": 0.92, "timestamp": "2025-10-23T14:32:18Z"}"#
    } else if path.ends_with(".json") {
        br#"{"status": "ok"}"#
    } else if path.ends_with(".md") {
        b"# summary\n"
    } else {
        b"binary-evidence"
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown task: {0}")]
    UnknownTask(String),
    #[error("fixture missing for task {0}")]
    FixtureMissing(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Build the scripted fixture for one benchmark task.
pub fn make_fixture(task_id: &str) -> Result<TaskScript, BenchError> {
    let fixture = match task_id {
        "T01" => TaskScript {
            task_id: "T01",
            contract_json: include_str!("../fixtures/tasks/T01.json"),
            behavior_b: Behavior::LogsExactly {
                metrics: vec![("num_attention_files", 120.0)],
                log_artifacts: true,
            },
            behavior_evibound: Behavior::LogsExactly {
                metrics: vec![("num_attention_files", 120.0)],
                log_artifacts: true,
            },
            panel: PanelScript::Approve,
            expected_a: BenchOutcome::Hallucinated,
            expected_b: BenchOutcome::Verified,
            expected_evibound: BenchOutcome::Verified,
        },
        "T03" => TaskScript {
            task_id: "T03",
            contract_json: include_str!("../fixtures/tasks/T03.json"),
            behavior_b: Behavior::Honest,
            behavior_evibound: Behavior::Honest,
            panel: PanelScript::Approve,
            expected_a: BenchOutcome::Hallucinated,
            expected_b: BenchOutcome::Verified,
            expected_evibound: BenchOutcome::Verified,
        },
        "T04" => TaskScript {
            task_id: "T04",
            contract_json: include_str!("../fixtures/tasks/T04.json"),
            behavior_b: Behavior::LogsExactly {
                metrics: vec![("val_loss", 1.234), ("epochs_completed", 3.0)],
                log_artifacts: true,
            },
            behavior_evibound: Behavior::LogsExactly {
                metrics: vec![("val_loss", 1.234), ("epochs_completed", 3.0)],
                log_artifacts: true,
            },
            panel: PanelScript::Approve,
            expected_a: BenchOutcome::Hallucinated,
            expected_b: BenchOutcome::Verified,
            expected_evibound: BenchOutcome::Verified,
        },
        "T05" => TaskScript {
            task_id: "T05",
            contract_json: include_str!("../fixtures/tasks/T05.json"),
            behavior_b: Behavior::Honest,
            behavior_evibound: Behavior::Honest,
            panel: PanelScript::Approve,
            expected_a: BenchOutcome::Hallucinated,
            expected_b: BenchOutcome::Verified,
            expected_evibound: BenchOutcome::Verified,
        },
        "T06" => TaskScript {
            task_id: "T06",
            // Eight metrics proposed; the executor only implements five. The
            // approval gate catches the mismatch pre-execution and the
            // contract is simplified; without that gate, verification fails
            // post-hoc with no repair path.
            contract_json: include_str!("../fixtures/tasks/T06.json"),
            behavior_b: Behavior::LogsExactly {
                metrics: T06_CORE_METRICS.to_vec(),
                log_artifacts: true,
            },
            behavior_evibound: Behavior::LogsExactly {
                metrics: T06_CORE_METRICS.to_vec(),
                log_artifacts: true,
            },
            panel: PanelScript::ComplexMetricsObjection,
            expected_a: BenchOutcome::Hallucinated,
            expected_b: BenchOutcome::Hallucinated,
            expected_evibound: BenchOutcome::Verified,
        },
        "T09" => TaskScript {
            task_id: "T09",
            // Placeholder run id in the contract. Without approval, the
            // executor also forgets to log its artifacts; with approval, the
            // run id is concretized and the honest path runs.
            contract_json: include_str!("../fixtures/tasks/T09.json"),
            behavior_b: Behavior::LogsExactly {
                metrics: vec![("steps_completed", 4.0)],
                log_artifacts: false,
            },
            behavior_evibound: Behavior::LogsExactly {
                metrics: vec![("steps_completed", 4.0)],
                log_artifacts: true,
            },
            panel: PanelScript::Approve,
            expected_a: BenchOutcome::Hallucinated,
            expected_b: BenchOutcome::Hallucinated,
            expected_evibound: BenchOutcome::Verified,
        },
        "T12" => TaskScript {
            task_id: "T12",
            contract_json: include_str!("../fixtures/tasks/T12.json"),
            behavior_b: Behavior::LogsExactly {
                metrics: vec![("pinned_dependencies", 37.0)],
                log_artifacts: true,
            },
            behavior_evibound: Behavior::LogsExactly {
                metrics: vec![("pinned_dependencies", 37.0)],
                log_artifacts: true,
            },
            panel: PanelScript::Approve,
            expected_a: BenchOutcome::Hallucinated,
            expected_b: BenchOutcome::Verified,
            expected_evibound: BenchOutcome::Verified,
        },
        "T13" => TaskScript {
            task_id: "T13",
            // Placeholder run id with no high-confidence concretization rule:
            // approval blocks it, while the no-approval variants execute the
            // task successfully anyway.
            contract_json: include_str!("../fixtures/tasks/T13.json"),
            behavior_b: Behavior::Honest,
            behavior_evibound: Behavior::Honest,
            panel: PanelScript::Approve,
            expected_a: BenchOutcome::Hallucinated,
            expected_b: BenchOutcome::Verified,
            expected_evibound: BenchOutcome::Blocked,
        },
        other => return Err(BenchError::UnknownTask(other.to_owned())),
    };
    if fixture.contract_json.is_empty() {
        return Err(BenchError::FixtureMissing(task_id.to_owned()));
    }
    Ok(fixture)
}

pub fn all_fixtures() -> Vec<TaskScript> {
    TASK_IDS.iter().map(|id| make_fixture(id).expect("known task")).collect()
}

/// Rulebook the benchmark pipelines run with: the builtin verification rules
/// plus per-task approval-refinement rules.
pub fn bench_rulebook() -> Rulebook {
    let mut book = Rulebook::builtin();
    book.approval.default = Some(PatchRule {
        action: PatchAction::NoOp,
        confidence: 0.0,
        decision: PolicyDecision::Retry,
        risk_score: 0.5,
        keep_metrics: None,
    });
    book.approval.per_task.insert(
        "T06".into(),
        PatchRule {
            action: PatchAction::SimplifyContract,
            confidence: 0.85,
            decision: PolicyDecision::Retry,
            risk_score: 0.2,
            keep_metrics: Some(
                T06_CORE_METRICS.iter().map(|(name, _)| (*name).to_owned()).collect(),
            ),
        },
    );
    book.approval.per_task.insert(
        "T09".into(),
        PatchRule {
            action: PatchAction::ConcretizeRunId,
            confidence: 0.9,
            decision: PolicyDecision::Retry,
            risk_score: 0.2,
            keep_metrics: None,
        },
    );
    book.approval.per_task.insert(
        "T13".into(),
        PatchRule {
            action: PatchAction::ConcretizeRunId,
            confidence: 0.4,
            decision: PolicyDecision::Retry,
            risk_score: 0.6,
            keep_metrics: None,
        },
    );
    book
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchTaskResult {
    pub task_id: String,
    pub outcome: BenchOutcome,
    pub status: String,
    pub retries: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub variant: String,
    pub tasks: Vec<BenchTaskResult>,
    pub total: usize,
    pub verified: usize,
    pub blocked: usize,
    /// Tasks whose success claim did not survive the audit. Blocked tasks are
    /// excluded: prevention is not hallucination.
    pub hallucinated: usize,
    pub hallucination_rate: f64,
}

impl BenchReport {
    /// One-line summary in the benchmark's reporting style.
    pub fn summary_line(&self) -> String {
        format!(
            "variant {}: hallucination rate {:.0}% ({}/{}), verified {}/{}, blocked {}/{}",
            self.variant,
            self.hallucination_rate * 100.0,
            self.hallucinated,
            self.total,
            self.verified,
            self.total,
            self.blocked,
            self.total,
        )
    }
}

/// Run all eight tasks under `variant` against `store`, emit the ledger and
/// audit report under `out_dir`, and fold the audit into benchmark outcomes.
pub fn run_benchmark(
    variant: &SystemVariant,
    store: &FsStore,
    out_dir: &Path,
    clock: Clock,
) -> Result<(Vec<ClaimsLedgerEntry>, AuditReport, BenchReport), BenchError> {
    let config = PipelineConfig {
        rulebook: bench_rulebook(),
        clock,
        out_dir: Some(out_dir.to_path_buf()),
        ..PipelineConfig::default()
    };

    let mut entries = Vec::with_capacity(TASK_IDS.len());
    for fixture in all_fixtures() {
        let contract = fixture.contract();
        let mut executor = ScriptedExecutor { behavior: fixture.behavior(variant) };
        let mut panel = ScriptedPanel(fixture.panel);
        entries.push(run_task(&contract, &mut executor, &mut panel, variant, store, &config)?);
    }
    entries.sort_by(|a, b| a.task_id.cmp(&b.task_id));

    std::fs::create_dir_all(out_dir)?;
    emit_ledger(&entries, &out_dir.join("claims_ledger.json"))?;

    let audit = audit_ledger(&entries, store)?;
    std::fs::write(
        out_dir.join("audit_report.json"),
        serde_json::to_string_pretty(&audit).expect("audit report serializes"),
    )?;

    // Fold the strict audit into benchmark accounting: every scripted
    // executor claims success, so any task that is neither evidence-backed
    // nor blocked is a caught (or uncaught) hallucinated claim.
    let tasks: Vec<BenchTaskResult> = entries
        .iter()
        .zip(&audit.tasks)
        .map(|(entry, audited)| BenchTaskResult {
            task_id: entry.task_id.clone(),
            outcome: match audited.verdict {
                AuditVerdict::Verified => BenchOutcome::Verified,
                AuditVerdict::Blocked => BenchOutcome::Blocked,
                AuditVerdict::Hallucinated | AuditVerdict::Failed => BenchOutcome::Hallucinated,
            },
            status: entry.status.as_str().to_owned(),
            retries: entry.retry_history.len(),
        })
        .collect();
    let count = |o: BenchOutcome| tasks.iter().filter(|t| t.outcome == o).count();
    let (verified, blocked, hallucinated) = (
        count(BenchOutcome::Verified),
        count(BenchOutcome::Blocked),
        count(BenchOutcome::Hallucinated),
    );
    let report = BenchReport {
        variant: variant.name().to_owned(),
        total: tasks.len(),
        verified,
        blocked,
        hallucinated,
        hallucination_rate: hallucinated as f64 / tasks.len() as f64,
        tasks,
    };
    std::fs::write(
        out_dir.join("bench_report.json"),
        serde_json::to_string_pretty(&report).expect("bench report serializes"),
    )?;
    Ok((entries, audit, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::ClaimStatus;

    fn bench(variant: SystemVariant) -> (tempfile::TempDir, Vec<ClaimsLedgerEntry>, AuditReport, BenchReport) {
        let dir = tempfile::tempdir().unwrap();
        let store = FsStore::open_seeded(dir.path().join("store"), 42)
            .with_display_base("http://localhost:5000");
        let clock = Clock::parse("fixed:2025-10-23T14:32:18Z").unwrap();
        let (entries, audit, report) =
            run_benchmark(&variant, &store, &dir.path().join("ledgers"), clock).unwrap();
        (dir, entries, audit, report)
    }

    #[test]
    fn fixtures_parse_and_cover_the_benchmark() {
        let fixtures = all_fixtures();
        assert_eq!(fixtures.len(), 8);
        for f in &fixtures {
            let c = f.contract();
            assert_eq!(c.task_id, f.task_id);
            assert!(!c.acceptance_criteria.artifacts.is_empty());
        }
        assert!(matches!(make_fixture("T02"), Err(BenchError::UnknownTask(_))));
    }

    #[test]
    fn baseline_a_hallucinates_everything() {
        let (_d, _entries, audit, report) = bench(SystemVariant::baseline_a());
        assert_eq!(report.hallucination_rate, 1.0);
        assert_eq!(report.hallucinated, 8);
        assert_eq!(audit.hallucinated, 8);
    }

    #[test]
    fn baseline_b_catches_all_but_two() {
        let (_d, entries, _audit, report) = bench(SystemVariant::baseline_b());
        assert_eq!(report.hallucination_rate, 0.25);
        assert_eq!(report.verified, 6);
        let failed: Vec<&str> = report
            .tasks
            .iter()
            .filter(|t| t.outcome == BenchOutcome::Hallucinated)
            .map(|t| t.task_id.as_str())
            .collect();
        assert_eq!(failed, vec!["T06", "T09"]);
        // Both were caught post-hoc: verification failed, nothing promoted.
        for entry in entries.iter().filter(|e| ["T06", "T09"].contains(&e.task_id.as_str())) {
            assert_eq!(entry.status, ClaimStatus::VerificationFailed);
        }
    }

    #[test]
    fn evibound_verifies_seven_and_blocks_t13() {
        let (_d, entries, audit, report) = bench(SystemVariant::evibound());
        assert_eq!(report.hallucination_rate, 0.0);
        assert_eq!(report.verified, 7);
        assert_eq!(report.blocked, 1);
        assert_eq!(audit.hallucinated, 0);
        let t13 = entries.iter().find(|e| e.task_id == "T13").unwrap();
        assert_eq!(t13.status, ClaimStatus::BlockedAtApproval);
        assert!(t13.run_id.is_none());
        // T06 needed exactly one contract-refinement retry.
        let t06 = entries.iter().find(|e| e.task_id == "T06").unwrap();
        assert_eq!(t06.status, ClaimStatus::VerifiedSuccess);
        assert_eq!(t06.retry_history.len(), 1);
        assert_eq!(t06.retry_history[0].phase, "4.5");
        assert_eq!(t06.evidence.as_ref().unwrap().metrics.len(), 5);
    }

    #[test]
    fn per_task_matrix_matches_expectations_in_all_24_cells() {
        for variant in [
            SystemVariant::baseline_a(),
            SystemVariant::baseline_b(),
            SystemVariant::evibound(),
        ] {
            let (_d, _entries, _audit, report) = bench(variant);
            for (fixture, result) in all_fixtures().iter().zip(&report.tasks) {
                assert_eq!(fixture.task_id, result.task_id);
                assert_eq!(
                    fixture.expected(&variant),
                    result.outcome,
                    "task {} under {}",
                    result.task_id,
                    variant.name()
                );
            }
        }
    }

    #[test]
    fn benchmark_is_byte_deterministic_across_fresh_roots() {
        let run = || {
            let (dir, _e, _a, _r) = bench(SystemVariant::evibound());
            std::fs::read_to_string(dir.path().join("ledgers/claims_ledger.json")).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rate_is_monotone_across_variants() {
        let rate = |v| bench(v).3.hallucination_rate;
        let (a, b, e) = (
            rate(SystemVariant::baseline_a()),
            rate(SystemVariant::baseline_b()),
            rate(SystemVariant::evibound()),
        );
        assert!(e <= b && b <= a);
    }
}
