//! Post-execution verification gate: binds a claimed run id to store-resident
//! evidence, and routes each failure class to the phase that can repair it.
//!
//! Checks run in a fixed order and short-circuit at the first failure:
//! run queryable, status FINISHED, every contract artifact present in the
//! recursive listing, then (only when the contract names required metrics)
//! each metric present and inside its closed interval.

use crate::contract::{is_hex32, AcceptanceContract};
use crate::store::{RunStatus, RunStore, StoreError, StoreErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureClass {
    TrackerUnreachable,
    RunNotQueryable,
    NotFinished,
    ArtifactMissing,
    ArtifactListingFailed,
    MetricMissing,
    MetricOutOfRange,
    ScopeIssue,
}

impl FailureClass {
    pub const ALL: [FailureClass; 8] = [
        FailureClass::TrackerUnreachable,
        FailureClass::RunNotQueryable,
        FailureClass::NotFinished,
        FailureClass::ArtifactMissing,
        FailureClass::ArtifactListingFailed,
        FailureClass::MetricMissing,
        FailureClass::MetricOutOfRange,
        FailureClass::ScopeIssue,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FailureClass::TrackerUnreachable => "TrackerUnreachable",
            FailureClass::RunNotQueryable => "RunNotQueryable",
            FailureClass::NotFinished => "NotFinished",
            FailureClass::ArtifactMissing => "ArtifactMissing",
            FailureClass::ArtifactListingFailed => "ArtifactListingFailed",
            FailureClass::MetricMissing => "MetricMissing",
            FailureClass::MetricOutOfRange => "MetricOutOfRange",
            FailureClass::ScopeIssue => "ScopeIssue",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationOutcome {
    pub passed: bool,
    pub failure: Option<FailureClass>,
    pub detail: String,
}

impl VerificationOutcome {
    fn pass() -> Self {
        VerificationOutcome {
            passed: true,
            failure: None,
            detail: String::new(),
        }
    }

    fn fail(failure: FailureClass, detail: String) -> Self {
        VerificationOutcome {
            passed: false,
            failure: Some(failure),
            detail,
        }
    }
}

/// Retry phase a verification failure routes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoutingTarget {
    Phase3,
    Phase4_5,
    Phase5_5,
    Phase6_5,
    Halt,
}

impl RoutingTarget {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoutingTarget::Phase3 => "3",
            RoutingTarget::Phase4_5 => "4.5",
            RoutingTarget::Phase5_5 => "5.5",
            RoutingTarget::Phase6_5 => "6.5",
            RoutingTarget::Halt => "halt",
        }
    }
}

/// Failure-class routing table: each class maps to the minimal phase able to
/// repair it. Missing metrics route with out-of-range metrics, since both are
/// contract-refinement concerns.
pub fn route(failure: FailureClass) -> RoutingTarget {
    match failure {
        FailureClass::RunNotQueryable
        | FailureClass::ArtifactMissing
        | FailureClass::ArtifactListingFailed => RoutingTarget::Phase6_5,
        FailureClass::NotFinished => RoutingTarget::Phase5_5,
        FailureClass::MetricMissing | FailureClass::MetricOutOfRange => RoutingTarget::Phase4_5,
        FailureClass::ScopeIssue => RoutingTarget::Phase3,
        FailureClass::TrackerUnreachable => RoutingTarget::Halt,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    /// Additionally require the claimed run id to be 32 lowercase hex chars.
    pub run_id_format_check: bool,
}

/// Verification gate over a claimed run id.
pub fn verify(
    contract: &AcceptanceContract,
    claimed_run_id: &str,
    store: &dyn RunStore,
    opts: &VerifyOptions,
) -> VerificationOutcome {
    // Check 1: run queryable (transport faults are distinguished from
    // missing runs).
    let run = match store.get_run(claimed_run_id) {
        Ok(run) => run,
        Err(StoreError { kind: StoreErrorKind::NotFound, .. }) => {
            return VerificationOutcome::fail(
                FailureClass::RunNotQueryable,
                format!("run_id not queryable: {claimed_run_id}"),
            )
        }
        Err(e) => {
            return VerificationOutcome::fail(
                FailureClass::TrackerUnreachable,
                format!("tracker unreachable: {}", e.detail),
            )
        }
    };

    // Check 2: status is FINISHED.
    if run.status != RunStatus::Finished {
        return VerificationOutcome::fail(
            FailureClass::NotFinished,
            format!("execution not finished: status={}", run.status.as_str()),
        );
    }

    // Check 3: every contract artifact present, by recursive traversal.
    let listed = match store.list_artifacts(claimed_run_id, true) {
        Ok(entries) => entries,
        Err(StoreError { kind: StoreErrorKind::NotFound, .. }) => {
            return VerificationOutcome::fail(
                FailureClass::RunNotQueryable,
                format!("run_id not queryable: {claimed_run_id}"),
            )
        }
        Err(e) => {
            return VerificationOutcome::fail(
                FailureClass::ArtifactListingFailed,
                format!("artifact listing failed: {}", e.detail),
            )
        }
    };
    for required in &contract.acceptance_criteria.artifacts {
        if !listed.iter().any(|e| &e.path == required) {
            return VerificationOutcome::fail(
                FailureClass::ArtifactMissing,
                format!("artifact missing: {required}"),
            );
        }
    }

    // Check 4: metric validation, only when the contract names required
    // metrics. Intervals are closed.
    if let Some(required) = &contract.acceptance_criteria.required_metrics {
        for (name, interval) in required {
            match run.metrics.get(name) {
                None => {
                    return VerificationOutcome::fail(
                        FailureClass::MetricMissing,
                        format!("metric missing: {name}"),
                    )
                }
                Some(&value) if !interval.contains(value) => {
                    return VerificationOutcome::fail(
                        FailureClass::MetricOutOfRange,
                        format!(
                            "metric out of range: {name}={value} not in [{}, {}]",
                            interval.lo, interval.hi
                        ),
                    )
                }
                Some(_) => {}
            }
        }
    }

    if opts.run_id_format_check && !is_hex32(claimed_run_id) {
        return VerificationOutcome::fail(
            FailureClass::RunNotQueryable,
            format!("run_id format invalid: {claimed_run_id}"),
        );
    }

    VerificationOutcome::pass()
}
