//! Pre-execution approval gate: static contract checks composed with a
//! three-reviewer consensus rule.
//!
//! Consensus requires all three reviewers to approve with confidence at or
//! above the threshold `tau`. A rejecting verdict with confidence below the
//! hard-veto bound forces an immediate veto regardless of the other verdicts.

use thiserror::Error;

use crate::contract::{check_schema_with, AcceptanceContract, SchemaCheckOptions, SchemaViolation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReviewerId {
    OpsCommander,
    QualitySafetyMonitor,
    InfrastructureReviewer,
}

impl ReviewerId {
    pub const ALL: [ReviewerId; 3] = [
        ReviewerId::OpsCommander,
        ReviewerId::QualitySafetyMonitor,
        ReviewerId::InfrastructureReviewer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReviewerId::OpsCommander => "OpsCommander",
            ReviewerId::QualitySafetyMonitor => "QualitySafetyMonitor",
            ReviewerId::InfrastructureReviewer => "InfrastructureReviewer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewerVerdict {
    pub reviewer_id: ReviewerId,
    pub approves: bool,
    pub confidence: f64,
    pub rationale: String,
}

impl ReviewerVerdict {
    pub fn approve(reviewer_id: ReviewerId, confidence: f64) -> Self {
        ReviewerVerdict {
            reviewer_id,
            approves: true,
            confidence,
            rationale: String::new(),
        }
    }

    pub fn reject(reviewer_id: ReviewerId, confidence: f64, rationale: &str) -> Self {
        ReviewerVerdict {
            reviewer_id,
            approves: false,
            confidence,
            rationale: rationale.to_owned(),
        }
    }
}

/// Approval-gate thresholds.
#[derive(Debug, Clone, Copy)]
pub struct GateConfig {
    /// Consensus confidence threshold.
    pub tau: f64,
    /// A rejection below this confidence is a hard veto.
    pub hard_veto_threshold: f64,
    /// Require concrete run ids to be 32 lowercase hex characters.
    pub run_id_format_check: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            tau: 0.7,
            hard_veto_threshold: 0.5,
            run_id_format_check: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApprovalOutcome {
    Approved,
    Rejected,
    HardVeto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApprovalDecision {
    pub outcome: ApprovalOutcome,
    pub violations: Vec<SchemaViolation>,
    pub failing_reviewers: Vec<ReviewerId>,
}

impl ApprovalDecision {
    pub fn approved(&self) -> bool {
        self.outcome == ApprovalOutcome::Approved
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PanelError {
    #[error("wrong panel size: expected one verdict per reviewer, got {0}")]
    WrongPanelSize(usize),
}

/// Approval check 4: three-reviewer consensus with hard-veto rule.
pub fn evaluate_consensus(
    verdicts: &[ReviewerVerdict],
    config: &GateConfig,
) -> Result<ApprovalDecision, PanelError> {
    if verdicts.len() != 3 {
        return Err(PanelError::WrongPanelSize(verdicts.len()));
    }
    for id in ReviewerId::ALL {
        if verdicts.iter().filter(|v| v.reviewer_id == id).count() != 1 {
            return Err(PanelError::WrongPanelSize(verdicts.len()));
        }
    }

    let vetoes: Vec<ReviewerId> = verdicts
        .iter()
        .filter(|v| !v.approves && v.confidence < config.hard_veto_threshold)
        .map(|v| v.reviewer_id)
        .collect();
    if !vetoes.is_empty() {
        return Ok(ApprovalDecision {
            outcome: ApprovalOutcome::HardVeto,
            violations: Vec::new(),
            failing_reviewers: vetoes,
        });
    }

    let failing: Vec<ReviewerId> = verdicts
        .iter()
        .filter(|v| !v.approves || v.confidence < config.tau)
        .map(|v| v.reviewer_id)
        .collect();
    if failing.is_empty() {
        Ok(ApprovalDecision {
            outcome: ApprovalOutcome::Approved,
            violations: Vec::new(),
            failing_reviewers: Vec::new(),
        })
    } else {
        Ok(ApprovalDecision {
            outcome: ApprovalOutcome::Rejected,
            violations: Vec::new(),
            failing_reviewers: failing,
        })
    }
}

/// Full approval gate: schema checks short-circuit, then consensus.
pub fn approve(
    contract: &AcceptanceContract,
    verdicts: &[ReviewerVerdict],
    config: &GateConfig,
) -> Result<ApprovalDecision, PanelError> {
    let opts = SchemaCheckOptions {
        run_id_format_check: config.run_id_format_check,
    };
    let violations = check_schema_with(contract, &opts);
    if !violations.is_empty() {
        return Ok(ApprovalDecision {
            outcome: ApprovalOutcome::Rejected,
            violations,
            failing_reviewers: Vec::new(),
        });
    }
    evaluate_consensus(verdicts, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{parse_contract, RunIdSpec};

    fn panel(v: [(bool, f64); 3]) -> Vec<ReviewerVerdict> {
        ReviewerId::ALL
            .iter()
            .zip(v)
            .map(|(&id, (approves, confidence))| ReviewerVerdict {
                reviewer_id: id,
                approves,
                confidence,
                rationale: if approves { String::new() } else { "objection".into() },
            })
            .collect()
    }

    #[test]
    fn unanimous_above_tau_is_approved() {
        let d = evaluate_consensus(
            &panel([(true, 0.9), (true, 0.8), (true, 0.75)]),
            &GateConfig::default(),
        )
        .unwrap();
        assert_eq!(d.outcome, ApprovalOutcome::Approved);
    }

    #[test]
    fn low_confidence_rejection_is_a_hard_veto() {
        let d = evaluate_consensus(
            &panel([(true, 0.9), (false, 0.4), (true, 0.9)]),
            &GateConfig::default(),
        )
        .unwrap();
        assert_eq!(d.outcome, ApprovalOutcome::HardVeto);
        assert_eq!(d.failing_reviewers, vec![ReviewerId::QualitySafetyMonitor]);
    }

    #[test]
    fn below_tau_approval_is_rejected_not_vetoed() {
        let d = evaluate_consensus(
            &panel([(true, 0.9), (true, 0.65), (true, 0.9)]),
            &GateConfig::default(),
        )
        .unwrap();
        assert_eq!(d.outcome, ApprovalOutcome::Rejected);
        assert_eq!(d.failing_reviewers, vec![ReviewerId::QualitySafetyMonitor]);
    }

    #[test]
    fn wrong_panel_size_is_an_error() {
        let mut p = panel([(true, 0.9), (true, 0.9), (true, 0.9)]);
        p.pop();
        assert_eq!(
            evaluate_consensus(&p, &GateConfig::default()),
            Err(PanelError::WrongPanelSize(2))
        );
        let mut dup = panel([(true, 0.9), (true, 0.9), (true, 0.9)]);
        dup[2].reviewer_id = ReviewerId::OpsCommander;
        assert_eq!(
            evaluate_consensus(&dup, &GateConfig::default()),
            Err(PanelError::WrongPanelSize(3))
        );
    }

    #[test]
    fn valid_contract_with_strong_panel_is_approved() {
        let c = parse_contract(crate::contract::EXAMPLE_CONTRACT.as_bytes()).unwrap();
        let d = approve(
            &c,
            &panel([(true, 0.9), (true, 0.85), (true, 0.8)]),
            &GateConfig::default(),
        )
        .unwrap();
        assert_eq!(d.outcome, ApprovalOutcome::Approved);
    }

    #[test]
    fn schema_violations_short_circuit_the_panel() {
        let mut c = parse_contract(crate::contract::EXAMPLE_CONTRACT.as_bytes()).unwrap();
        c.acceptance_criteria.run_id = RunIdSpec::Concrete("<to_be_generated>".into());
        let d = approve(
            &c,
            &panel([(true, 1.0), (true, 1.0), (true, 1.0)]),
            &GateConfig::default(),
        )
        .unwrap();
        assert_eq!(d.outcome, ApprovalOutcome::Rejected);
        assert_eq!(d.violations.len(), 1);
        assert_eq!(d.violations[0].field_path, "acceptance_criteria.run_id");
    }
}
