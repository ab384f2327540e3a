//! The Phase 3→7 governance pipeline: approval gate, execution, verification
//! gate, bounded confidence-gated retries, and claims-ledger emission — plus
//! the independent ledger audit.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::approval::{approve, GateConfig, PanelError, ReviewerVerdict};
use crate::clock::Clock;
use crate::contract::{AcceptanceContract, RunIdSpec};
use crate::ledger::{ClaimStatus, ClaimsLedgerEntry, Evidence, RetryEvent};
use crate::reflection::{
    generate_approval_patch, generate_patch, record_patch, should_apply, Patch, PatchAction,
    PatchRecord, PolicyDecision, Rulebook,
};
use crate::store::{RunStore, StoreError, StoreErrorKind, RunStatus};
use crate::verify::{route, verify, FailureClass, RoutingTarget, VerifyOptions};

/// How much evidence discipline a system variant enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceLogging {
    Optional,
    Required,
}

/// Gate/retry configuration of one governed system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemVariant {
    pub approval_gate_enabled: bool,
    pub verification_gate_enabled: bool,
    pub retries_enabled: bool,
    pub evidence_logging: EvidenceLogging,
}

impl SystemVariant {
    /// No gates: reports trust whatever executors claim.
    pub fn baseline_a() -> SystemVariant {
        SystemVariant {
            approval_gate_enabled: false,
            verification_gate_enabled: false,
            retries_enabled: false,
            evidence_logging: EvidenceLogging::Optional,
        }
    }

    /// Verification and retries only; no pre-execution approval.
    pub fn baseline_b() -> SystemVariant {
        SystemVariant {
            approval_gate_enabled: false,
            verification_gate_enabled: true,
            retries_enabled: true,
            evidence_logging: EvidenceLogging::Required,
        }
    }

    /// Both gates plus bounded retries.
    pub fn evibound() -> SystemVariant {
        SystemVariant {
            approval_gate_enabled: true,
            verification_gate_enabled: true,
            retries_enabled: true,
            evidence_logging: EvidenceLogging::Required,
        }
    }

    pub fn parse(name: &str) -> Option<SystemVariant> {
        match name {
            "A" | "a" | "baseline-a" => Some(SystemVariant::baseline_a()),
            "B" | "b" | "baseline-b" => Some(SystemVariant::baseline_b()),
            "evibound" | "EviBound" => Some(SystemVariant::evibound()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        if self.approval_gate_enabled {
            "evibound"
        } else if self.verification_gate_enabled {
            "B"
        } else {
            "A"
        }
    }
}

/// Per-phase retry counters. Counters never decrease; a retry phase whose
/// counter has reached `max_per_phase` may not be entered again.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryBudget {
    pub p45: u32,
    pub p55: u32,
    pub p65: u32,
    pub max_per_phase: u32,
}

impl RetryBudget {
    pub fn new(max_per_phase: u32) -> RetryBudget {
        RetryBudget { p45: 0, p55: 0, p65: 0, max_per_phase }
    }

    fn counter(&mut self, target: RoutingTarget) -> Option<&mut u32> {
        match target {
            RoutingTarget::Phase4_5 => Some(&mut self.p45),
            RoutingTarget::Phase5_5 => Some(&mut self.p55),
            RoutingTarget::Phase6_5 => Some(&mut self.p65),
            _ => None,
        }
    }

    /// Try to consume one retry in `target`; false when the budget is spent.
    fn consume(&mut self, target: RoutingTarget) -> bool {
        let max = self.max_per_phase;
        match self.counter(target) {
            Some(c) if *c < max => {
                *c += 1;
                true
            }
            _ => false,
        }
    }
}

/// What an executor claims after Phase 5. The claimed metrics/artifacts only
/// matter when no verification gate exists; verified variants rebuild the
/// evidence from the store.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionClaim {
    pub run_id: String,
    pub metrics: Map<String, Value>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecFailure {
    /// Runtime fault in the sandbox; repairable in Phase 5.5.
    Runtime(String),
    /// The task scope itself is wrong; needs Phase 3 re-planning.
    Scope(String),
}

/// Phase 5 stand-in: all evidence creation must go through the store.
pub trait TaskExecutor {
    fn execute(
        &mut self,
        contract: &AcceptanceContract,
        store: &dyn RunStore,
    ) -> Result<ExecutionClaim, ExecFailure>;

    /// Phase 6.5 evidence-regeneration hook for a claimed run.
    fn recover(&mut self, _run_id: &str, _contract: &AcceptanceContract, _store: &dyn RunStore) {}

    /// Phase 5.5 runtime-repair hook.
    fn repair(&mut self) {}
}

/// Phase 4 panel: one verdict per reviewer, possibly attempt-dependent.
pub trait ReviewerPanel {
    fn verdicts(&mut self, attempt: u32, contract: &AcceptanceContract) -> Vec<ReviewerVerdict>;
}

/// Panel that always approves with fixed confidence.
pub struct UnanimousPanel(pub f64);

impl ReviewerPanel for UnanimousPanel {
    fn verdicts(&mut self, _attempt: u32, _contract: &AcceptanceContract) -> Vec<ReviewerVerdict> {
        crate::approval::ReviewerId::ALL
            .iter()
            .map(|&id| ReviewerVerdict::approve(id, self.0))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Consensus confidence threshold.
    pub tau: f64,
    pub hard_veto_threshold: f64,
    /// Patch-application confidence threshold.
    pub patch_tau: f64,
    pub max_retries_per_phase: u32,
    pub run_id_format_check: bool,
    pub rulebook: Rulebook,
    pub clock: Clock,
    /// When set, patch records and risk scores are written here.
    pub out_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tau: 0.7,
            hard_veto_threshold: 0.5,
            patch_tau: 0.7,
            max_retries_per_phase: 2,
            run_id_format_check: false,
            rulebook: Rulebook::builtin(),
            clock: Clock::System,
            out_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("store unreachable at start: {0}")]
    StoreUnreachableAtStart(String),
    #[error("misconfigured variant: retries require at least one gate")]
    MisconfiguredVariant,
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("internal: {0}")]
    Internal(String),
}

enum Phase {
    Approval,
    Execute,
    Verify,
}

fn apply_patch(contract: &mut AcceptanceContract, patch: &Patch) {
    match patch.action {
        PatchAction::ConcretizeRunId => {
            contract.acceptance_criteria.run_id = RunIdSpec::Deferred;
        }
        PatchAction::SimplifyContract => {
            if let Some(keep) = &patch.keep_metrics {
                contract.acceptance_criteria.metrics.retain(|k, _| keep.contains(k));
                if let Some(required) = &mut contract.acceptance_criteria.required_metrics {
                    required.retain(|k, _| keep.contains(k));
                }
            }
        }
        _ => {}
    }
}

/// Render a metric for the ledger: integral values print without a fraction.
pub fn metric_number(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Value::from(v as i64)
    } else {
        serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
    }
}

fn evidence_from_store(store: &dyn RunStore, run_id: &str) -> Result<Evidence, StoreError> {
    let run = store.get_run(run_id)?;
    let artifacts = store
        .list_artifacts(run_id, true)?
        .into_iter()
        .map(|e| e.path)
        .collect();
    let mut metrics = Map::new();
    for (name, value) in &run.metrics {
        metrics.insert(name.clone(), metric_number(*value));
    }
    Ok(Evidence {
        tracker_url: store.run_uri(run_id),
        metrics,
        artifacts,
    })
}

/// Drive one task through the pipeline to a terminal ledger entry.
pub fn run_task(
    contract: &AcceptanceContract,
    executor: &mut dyn TaskExecutor,
    reviewers: &mut dyn ReviewerPanel,
    variant: &SystemVariant,
    store: &dyn RunStore,
    config: &PipelineConfig,
) -> Result<ClaimsLedgerEntry, PipelineError> {
    if variant.retries_enabled && !variant.approval_gate_enabled && !variant.verification_gate_enabled
    {
        return Err(PipelineError::MisconfiguredVariant);
    }
    store
        .healthcheck()
        .map_err(|e| PipelineError::StoreUnreachableAtStart(e.detail))?;

    let task_id = contract.task_id.clone();
    let mut contract = contract.clone();
    let mut budget = RetryBudget::new(config.max_retries_per_phase);
    let mut retry_history: Vec<RetryEvent> = Vec::new();
    let mut scope_restarts = 0u32;
    let mut approval_attempt = 0u32;
    let mut patch_attempt = 0u32;
    let mut claim: Option<ExecutionClaim> = None;
    let mut phase = Phase::Approval;

    let gate = GateConfig {
        tau: config.tau,
        hard_veto_threshold: config.hard_veto_threshold,
        run_id_format_check: config.run_id_format_check,
    };
    let verify_opts = VerifyOptions {
        run_id_format_check: config.run_id_format_check,
    };

    let finish = |status: ClaimStatus,
                  run_id: Option<String>,
                  evidence: Option<Evidence>,
                  retry_history: Vec<RetryEvent>| ClaimsLedgerEntry {
        task_id: task_id.clone(),
        status,
        run_id,
        evidence,
        verification_timestamp: config.clock.now_iso(),
        retry_history,
    };

    let note_patch = |patch: &Patch,
                          decision: PolicyDecision,
                          risk: f64,
                          applied: bool,
                          attempt: u32,
                          history: &mut Vec<RetryEvent>| {
        history.push(RetryEvent {
            phase: patch.target_phase.as_str().to_owned(),
            patch_id: patch.patch_id.clone(),
        });
        if let Some(out) = &config.out_dir {
            let _ = record_patch(
                out,
                &PatchRecord {
                    task_id: task_id.clone(),
                    attempt,
                    phase: patch.target_phase.as_str().to_owned(),
                    patch_id: patch.patch_id.clone(),
                    action: patch.action.as_str().to_owned(),
                    confidence: patch.confidence,
                    applied,
                    decision,
                    risk_score: risk,
                    provenance: patch.provenance.clone(),
                },
            );
        }
    };

    // The budgets bound the loop; the range is a defensive cap only.
    for _ in 0..64 {
        match phase {
            Phase::Approval => {
                if !variant.approval_gate_enabled {
                    phase = Phase::Execute;
                    continue;
                }
                approval_attempt += 1;
                let verdicts = reviewers.verdicts(approval_attempt, &contract);
                let decision = approve(&contract, &verdicts, &gate)?;
                if decision.approved() {
                    phase = Phase::Execute;
                    continue;
                }
                // Phase 4.5: contract refinement.
                if !variant.retries_enabled || !budget.consume(RoutingTarget::Phase4_5) {
                    return Ok(finish(ClaimStatus::BlockedAtApproval, None, None, retry_history));
                }
                patch_attempt += 1;
                let (patch, rec) = generate_approval_patch(&task_id, &config.rulebook);
                let applied = should_apply(&patch, config.patch_tau);
                note_patch(&patch, rec.decision, rec.risk_score, applied, patch_attempt, &mut retry_history);
                match rec.decision {
                    PolicyDecision::Escalate => {
                        return Ok(finish(ClaimStatus::Escalated, None, None, retry_history))
                    }
                    PolicyDecision::Abort => {
                        return Ok(finish(ClaimStatus::BlockedAtApproval, None, None, retry_history))
                    }
                    PolicyDecision::Retry => {}
                }
                if applied {
                    apply_patch(&mut contract, &patch);
                }
                // Re-enter Phase 4 with the (possibly patched) contract.
            }
            Phase::Execute => match executor.execute(&contract, store) {
                Ok(c) => {
                    claim = Some(c);
                    phase = Phase::Verify;
                }
                Err(ExecFailure::Runtime(_)) => {
                    if !variant.retries_enabled || !budget.consume(RoutingTarget::Phase5_5) {
                        return Ok(finish(ClaimStatus::ExecutionFailed, None, None, retry_history));
                    }
                    patch_attempt += 1;
                    let (patch, rec) = generate_patch(FailureClass::NotFinished, &task_id, &config.rulebook);
                    let applied = should_apply(&patch, config.patch_tau);
                    note_patch(&patch, rec.decision, rec.risk_score, applied, patch_attempt, &mut retry_history);
                    match rec.decision {
                        PolicyDecision::Escalate => {
                            return Ok(finish(ClaimStatus::Escalated, None, None, retry_history))
                        }
                        PolicyDecision::Abort => {
                            return Ok(finish(ClaimStatus::ExecutionFailed, None, None, retry_history))
                        }
                        PolicyDecision::Retry => {}
                    }
                    if applied {
                        executor.repair();
                    }
                }
                Err(ExecFailure::Scope(_)) => {
                    // Phase 3 re-planning: budget-free but at most once.
                    if scope_restarts >= 1 {
                        return Ok(finish(ClaimStatus::Escalated, None, None, retry_history));
                    }
                    scope_restarts += 1;
                    retry_history.push(RetryEvent {
                        phase: "3".into(),
                        patch_id: format!("{task_id}:scope:Replan"),
                    });
                    phase = Phase::Approval;
                }
            },
            Phase::Verify => {
                let run_id = claim.as_ref().expect("claim set before verify").run_id.clone();
                if !variant.verification_gate_enabled {
                    // No gate: the claim is promoted as-is.
                    let c = claim.as_ref().unwrap();
                    let evidence = Evidence {
                        tracker_url: store.run_uri(&run_id),
                        metrics: c.metrics.clone(),
                        artifacts: c.artifacts.clone(),
                    };
                    return Ok(finish(
                        ClaimStatus::VerifiedSuccess,
                        Some(run_id),
                        Some(evidence),
                        retry_history,
                    ));
                }
                let outcome = verify(&contract, &run_id, store, &verify_opts);
                if outcome.passed {
                    // Phase 7: promote with store-derived evidence.
                    return match evidence_from_store(store, &run_id) {
                        Ok(evidence) => Ok(finish(
                            ClaimStatus::VerifiedSuccess,
                            Some(run_id),
                            Some(evidence),
                            retry_history,
                        )),
                        Err(_) => Ok(finish(ClaimStatus::Halted, None, None, retry_history)),
                    };
                }
                let failure = outcome.failure.expect("failed outcome carries a class");
                match route(failure) {
                    RoutingTarget::Halt => {
                        return Ok(finish(ClaimStatus::Halted, None, None, retry_history))
                    }
                    RoutingTarget::Phase3 => {
                        if scope_restarts >= 1 {
                            return Ok(finish(ClaimStatus::Escalated, None, None, retry_history));
                        }
                        scope_restarts += 1;
                        retry_history.push(RetryEvent {
                            phase: "3".into(),
                            patch_id: format!("{task_id}:scope:Replan"),
                        });
                        claim = None;
                        phase = Phase::Approval;
                    }
                    target => {
                        if !variant.retries_enabled {
                            return Ok(finish(ClaimStatus::VerificationFailed, None, None, retry_history));
                        }
                        // Contract refinement needs the approval apparatus.
                        if target == RoutingTarget::Phase4_5 && !variant.approval_gate_enabled {
                            return Ok(finish(ClaimStatus::VerificationFailed, None, None, retry_history));
                        }
                        if !budget.consume(target) {
                            return Ok(finish(ClaimStatus::VerificationFailed, None, None, retry_history));
                        }
                        patch_attempt += 1;
                        let (patch, rec) = generate_patch(failure, &task_id, &config.rulebook);
                        let applied = should_apply(&patch, config.patch_tau);
                        note_patch(&patch, rec.decision, rec.risk_score, applied, patch_attempt, &mut retry_history);
                        match rec.decision {
                            PolicyDecision::Escalate => {
                                return Ok(finish(ClaimStatus::Escalated, None, None, retry_history))
                            }
                            PolicyDecision::Abort => {
                                let status = if failure == FailureClass::TrackerUnreachable {
                                    ClaimStatus::Halted
                                } else {
                                    ClaimStatus::VerificationFailed
                                };
                                return Ok(finish(status, None, None, retry_history));
                            }
                            PolicyDecision::Retry => {}
                        }
                        match target {
                            RoutingTarget::Phase6_5 => {
                                // Evidence regeneration, then re-verify.
                                if applied {
                                    executor.recover(&run_id, &contract, store);
                                }
                            }
                            RoutingTarget::Phase5_5 => {
                                if applied {
                                    executor.repair();
                                }
                                claim = None;
                                phase = Phase::Execute;
                            }
                            RoutingTarget::Phase4_5 => {
                                if applied {
                                    apply_patch(&mut contract, &patch);
                                }
                                claim = None;
                                phase = Phase::Approval;
                            }
                            _ => unreachable!(),
                        }
                    }
                }
            }
        }
    }
    Err(PipelineError::Internal("phase loop exceeded its bound".into()))
}

// ---------------------------------------------------------------------------
// Ledger audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AuditVerdict {
    #[serde(rename = "VERIFIED")]
    Verified,
    #[serde(rename = "HALLUCINATED")]
    Hallucinated,
    #[serde(rename = "BLOCKED")]
    Blocked,
    #[serde(rename = "FAILED")]
    Failed,
}

impl AuditVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            AuditVerdict::Verified => "VERIFIED",
            AuditVerdict::Hallucinated => "HALLUCINATED",
            AuditVerdict::Blocked => "BLOCKED",
            AuditVerdict::Failed => "FAILED",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskAudit {
    pub task_id: String,
    pub verdict: AuditVerdict,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub tasks: Vec<TaskAudit>,
    pub verified: usize,
    pub hallucinated: usize,
    pub blocked: usize,
    pub failed: usize,
    pub total: usize,
    /// hallucinated / total.
    pub hallucination_rate: f64,
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("empty ledger: hallucination rate is undefined over zero tasks")]
    EmptyLedger,
    #[error("store unreachable during audit: {0}")]
    StoreUnreachable(String),
}

/// Re-check one promoted claim against the store.
fn recheck(entry: &ClaimsLedgerEntry, store: &dyn RunStore) -> Result<(AuditVerdict, String), AuditError> {
    let Some(run_id) = &entry.run_id else {
        return Ok((AuditVerdict::Hallucinated, "claimed success without a run_id".into()));
    };
    let run = match store.get_run(run_id) {
        Ok(run) => run,
        Err(StoreError { kind: StoreErrorKind::Unreachable, detail }) => {
            return Err(AuditError::StoreUnreachable(detail))
        }
        Err(_) => {
            return Ok((AuditVerdict::Hallucinated, format!("run_id not queryable: {run_id}")))
        }
    };
    if run.status != RunStatus::Finished {
        return Ok((
            AuditVerdict::Hallucinated,
            format!("status is {}, not FINISHED", run.status.as_str()),
        ));
    }
    let listed: Vec<String> = match store.list_artifacts(run_id, true) {
        Ok(entries) => entries.into_iter().map(|e| e.path).collect(),
        Err(StoreError { kind: StoreErrorKind::Unreachable, detail }) => {
            return Err(AuditError::StoreUnreachable(detail))
        }
        Err(_) => {
            return Ok((AuditVerdict::Hallucinated, format!("run_id not queryable: {run_id}")))
        }
    };
    if let Some(evidence) = &entry.evidence {
        for artifact in &evidence.artifacts {
            if !listed.contains(artifact) {
                return Ok((AuditVerdict::Hallucinated, format!("artifact missing: {artifact}")));
            }
        }
        for name in evidence.metrics.keys() {
            if !run.metrics.contains_key(name) {
                return Ok((AuditVerdict::Hallucinated, format!("metric missing: {name}")));
            }
        }
    }
    Ok((AuditVerdict::Verified, String::new()))
}

/// Independent post-hoc audit: a task is hallucinated iff its entry claims
/// VERIFIED_SUCCESS and the claimed evidence no longer checks out against the
/// store. Blocked entries count in the denominator, never in the numerator.
pub fn audit_ledger(
    entries: &[ClaimsLedgerEntry],
    store: &dyn RunStore,
) -> Result<AuditReport, AuditError> {
    if entries.is_empty() {
        return Err(AuditError::EmptyLedger);
    }
    let mut tasks = Vec::with_capacity(entries.len());
    for entry in entries {
        let (verdict, detail) = match entry.status {
            ClaimStatus::VerifiedSuccess => recheck(entry, store)?,
            ClaimStatus::BlockedAtApproval => {
                (AuditVerdict::Blocked, "blocked at approval gate".into())
            }
            other => (AuditVerdict::Failed, format!("terminal status {}", other.as_str())),
        };
        tasks.push(TaskAudit {
            task_id: entry.task_id.clone(),
            verdict,
            detail,
        });
    }
    let count = |v: AuditVerdict| tasks.iter().filter(|t| t.verdict == v).count();
    let (verified, hallucinated, blocked, failed) = (
        count(AuditVerdict::Verified),
        count(AuditVerdict::Hallucinated),
        count(AuditVerdict::Blocked),
        count(AuditVerdict::Failed),
    );
    Ok(AuditReport {
        verified,
        hallucinated,
        blocked,
        failed,
        total: tasks.len(),
        hallucination_rate: hallucinated as f64 / tasks.len() as f64,
        tasks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{parse_contract, Interval};
    use crate::store::FsStore;
    use indexmap::IndexMap;

    fn contract() -> AcceptanceContract {
        let mut c = parse_contract(crate::contract::EXAMPLE_CONTRACT.as_bytes()).unwrap();
        c.acceptance_criteria.run_id = RunIdSpec::Deferred;
        c.acceptance_criteria.required_metrics = Some(IndexMap::from([(
            "val_loss".to_string(),
            Interval { lo: 0.0, hi: 5.0 },
        )]));
        c
    }

    fn store() -> (tempfile::TempDir, FsStore) {
        let dir = tempfile::tempdir().unwrap();
        let s = FsStore::open_seeded(dir.path().join("store"), 7);
        (dir, s)
    }

    fn config() -> PipelineConfig {
        PipelineConfig {
            clock: Clock::parse("fixed:2025-10-23T14:32:18Z").unwrap(),
            ..PipelineConfig::default()
        }
    }

    /// Creates a run, logs everything the contract demands, marks FINISHED.
    struct Honest;

    impl TaskExecutor for Honest {
        fn execute(
            &mut self,
            contract: &AcceptanceContract,
            store: &dyn RunStore,
        ) -> Result<ExecutionClaim, ExecFailure> {
            let id = store.create_run().map_err(|e| ExecFailure::Runtime(e.to_string()))?;
            for a in &contract.acceptance_criteria.artifacts {
                store.log_artifact(&id, a, b"bytes").unwrap();
            }
            if let Some(required) = &contract.acceptance_criteria.required_metrics {
                for (name, iv) in required {
                    store.log_metric(&id, name, (iv.lo + iv.hi) / 2.0).unwrap();
                }
            }
            store.set_status(&id, RunStatus::Finished).unwrap();
            Ok(ExecutionClaim {
                run_id: id,
                metrics: Map::new(),
                artifacts: Vec::new(),
            })
        }
    }

    /// Claims a fabricated run id and never touches the store.
    struct Fabricator;

    impl TaskExecutor for Fabricator {
        fn execute(
            &mut self,
            _contract: &AcceptanceContract,
            _store: &dyn RunStore,
        ) -> Result<ExecutionClaim, ExecFailure> {
            let mut metrics = Map::new();
            metrics.insert("val_loss".into(), serde_json::json!(0.5));
            Ok(ExecutionClaim {
                run_id: "f".repeat(32),
                metrics,
                artifacts: vec!["model.pt".into()],
            })
        }
    }

    /// Finishes the run but never logs artifacts; recovery does nothing.
    struct Forgetful;

    impl TaskExecutor for Forgetful {
        fn execute(
            &mut self,
            _contract: &AcceptanceContract,
            store: &dyn RunStore,
        ) -> Result<ExecutionClaim, ExecFailure> {
            let id = store.create_run().map_err(|e| ExecFailure::Runtime(e.to_string()))?;
            store.log_metric(&id, "val_loss", 1.0).unwrap();
            store.set_status(&id, RunStatus::Finished).unwrap();
            Ok(ExecutionClaim { run_id: id, metrics: Map::new(), artifacts: Vec::new() })
        }
    }

    #[test]
    fn honest_executor_is_promoted_with_store_evidence() {
        let (_d, s) = store();
        let entry = run_task(
            &contract(),
            &mut Honest,
            &mut UnanimousPanel(0.9),
            &SystemVariant::evibound(),
            &s,
            &config(),
        )
        .unwrap();
        assert_eq!(entry.status, ClaimStatus::VerifiedSuccess);
        let evidence = entry.evidence.as_ref().unwrap();
        assert!(evidence.artifacts.contains(&"model.pt".to_string()));
        assert!(evidence.metrics.contains_key("val_loss"));
        // Immediate audit: the architectural guarantee.
        let report = audit_ledger(&[entry], &s).unwrap();
        assert_eq!(report.hallucinated, 0);
        assert_eq!(report.verified, 1);
    }

    #[test]
    fn fabricated_claim_under_baseline_a_is_caught_by_audit() {
        let (_d, s) = store();
        let entry = run_task(
            &contract(),
            &mut Fabricator,
            &mut UnanimousPanel(0.9),
            &SystemVariant::baseline_a(),
            &s,
            &config(),
        )
        .unwrap();
        assert_eq!(entry.status, ClaimStatus::VerifiedSuccess);
        let report = audit_ledger(&[entry], &s).unwrap();
        assert_eq!(report.hallucinated, 1);
        assert_eq!(report.hallucination_rate, 1.0);
    }

    #[test]
    fn forgetful_executor_exhausts_phase_6_5_and_fails_verification() {
        let (_d, s) = store();
        let entry = run_task(
            &contract(),
            &mut Forgetful,
            &mut UnanimousPanel(0.9),
            &SystemVariant::evibound(),
            &s,
            &config(),
        )
        .unwrap();
        assert_eq!(entry.status, ClaimStatus::VerificationFailed);
        assert_eq!(entry.retry_history.len(), 2);
        assert!(entry.retry_history.iter().all(|r| r.phase == "6.5"));
    }

    #[test]
    fn placeholder_contract_is_blocked_with_zero_store_writes() {
        let (_d, s) = store();
        let mut c = contract();
        c.acceptance_criteria.run_id = RunIdSpec::Concrete("<mlflow_run_id>".into());
        // Per-task rule exists but its confidence misses the patch threshold.
        let mut cfg = config();
        cfg.rulebook.approval.per_task.insert(
            c.task_id.clone(),
            crate::reflection::PatchRule {
                action: PatchAction::ConcretizeRunId,
                confidence: 0.4,
                decision: PolicyDecision::Retry,
                risk_score: 0.6,
                keep_metrics: None,
            },
        );
        let entry = run_task(
            &c,
            &mut Honest,
            &mut UnanimousPanel(0.9),
            &SystemVariant::evibound(),
            &s,
            &cfg,
        )
        .unwrap();
        assert_eq!(entry.status, ClaimStatus::BlockedAtApproval);
        assert!(entry.run_id.is_none());
        assert_eq!(entry.retry_history.len(), 2);
        // No runs were ever created.
        assert!(s.list_run_ids().unwrap().is_empty());
    }

    #[test]
    fn applied_concretize_patch_unblocks_a_placeholder_contract() {
        let (_d, s) = store();
        let mut c = contract();
        c.acceptance_criteria.run_id = RunIdSpec::Concrete("<to_be_generated>".into());
        let mut cfg = config();
        cfg.rulebook.approval.per_task.insert(
            c.task_id.clone(),
            crate::reflection::PatchRule {
                action: PatchAction::ConcretizeRunId,
                confidence: 0.9,
                decision: PolicyDecision::Retry,
                risk_score: 0.2,
                keep_metrics: None,
            },
        );
        let entry = run_task(
            &c,
            &mut Honest,
            &mut UnanimousPanel(0.9),
            &SystemVariant::evibound(),
            &s,
            &cfg,
        )
        .unwrap();
        assert_eq!(entry.status, ClaimStatus::VerifiedSuccess);
        assert_eq!(entry.retry_history.len(), 1);
        assert_eq!(entry.retry_history[0].phase, "4.5");
    }

    #[test]
    fn metric_failure_without_approval_gate_terminates_immediately() {
        // Baseline B cannot refine contracts: Phase 4.5 needs the approval
        // apparatus.
        let (_d, s) = store();
        struct ArtifactsOnly;
        impl TaskExecutor for ArtifactsOnly {
            fn execute(
                &mut self,
                contract: &AcceptanceContract,
                store: &dyn RunStore,
            ) -> Result<ExecutionClaim, ExecFailure> {
                let id = store.create_run().unwrap();
                for a in &contract.acceptance_criteria.artifacts {
                    store.log_artifact(&id, a, b"x").unwrap();
                }
                store.set_status(&id, RunStatus::Finished).unwrap();
                Ok(ExecutionClaim { run_id: id, metrics: Map::new(), artifacts: Vec::new() })
            }
        }
        let mut c = contract();
        c.acceptance_criteria.required_metrics = Some(IndexMap::from([(
            "missing_metric".to_string(),
            Interval { lo: 0.0, hi: 1.0 },
        )]));
        let entry = run_task(
            &c,
            &mut ArtifactsOnly,
            &mut UnanimousPanel(0.9),
            &SystemVariant::baseline_b(),
            &s,
            &config(),
        )
        .unwrap();
        assert_eq!(entry.status, ClaimStatus::VerificationFailed);
        assert!(entry.retry_history.is_empty());
    }

    #[test]
    fn misconfigured_variant_is_rejected() {
        let (_d, s) = store();
        let bad = SystemVariant {
            approval_gate_enabled: false,
            verification_gate_enabled: false,
            retries_enabled: true,
            evidence_logging: EvidenceLogging::Optional,
        };
        let err = run_task(&contract(), &mut Honest, &mut UnanimousPanel(0.9), &bad, &s, &config())
            .unwrap_err();
        assert!(matches!(err, PipelineError::MisconfiguredVariant));
    }

    #[test]
    fn unreachable_store_fails_before_any_phase() {
        let dir = tempfile::tempdir().unwrap();
        let s = FsStore::open(dir.path().join("gone"));
        std::fs::remove_dir_all(dir.path().join("gone")).unwrap();
        let err = run_task(
            &contract(),
            &mut Honest,
            &mut UnanimousPanel(0.9),
            &SystemVariant::evibound(),
            &s,
            &config(),
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::StoreUnreachableAtStart(_)));
    }

    #[test]
    fn audit_of_empty_ledger_is_an_error() {
        let (_d, s) = store();
        assert!(matches!(audit_ledger(&[], &s), Err(AuditError::EmptyLedger)));
    }

    #[test]
    fn tampering_flips_a_verified_task_to_hallucinated() {
        let (dir, s) = store();
        let entry = run_task(
            &contract(),
            &mut Honest,
            &mut UnanimousPanel(0.9),
            &SystemVariant::evibound(),
            &s,
            &config(),
        )
        .unwrap();
        let run_id = entry.run_id.clone().unwrap();
        assert_eq!(audit_ledger(std::slice::from_ref(&entry), &s).unwrap().hallucinated, 0);
        std::fs::remove_dir_all(dir.path().join("store/runs").join(&run_id)).unwrap();
        let report = audit_ledger(&[entry], &s).unwrap();
        assert_eq!(report.hallucinated, 1);
        assert!(report.tasks[0].detail.contains("not queryable"));
    }

    #[test]
    fn variant_presets_and_parsing() {
        assert_eq!(SystemVariant::parse("A"), Some(SystemVariant::baseline_a()));
        assert_eq!(SystemVariant::parse("B"), Some(SystemVariant::baseline_b()));
        assert_eq!(SystemVariant::parse("evibound"), Some(SystemVariant::evibound()));
        assert_eq!(SystemVariant::parse("C"), None);
        assert!(!SystemVariant::baseline_a().verification_gate_enabled);
        assert!(!SystemVariant::baseline_b().approval_gate_enabled);
        assert!(SystemVariant::evibound().approval_gate_enabled);
    }

    #[test]
    fn integral_metrics_render_without_fraction() {
        assert_eq!(metric_number(3.0), serde_json::json!(3));
        assert_eq!(metric_number(1.234), serde_json::json!(1.234));
    }
}
