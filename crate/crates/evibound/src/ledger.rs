//! Claims ledger: the auditable record of per-task terminal outcomes with
//! full provenance (run id, evidence, timestamp, retry history).

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClaimStatus {
    #[serde(rename = "VERIFIED_SUCCESS")]
    VerifiedSuccess,
    #[serde(rename = "VERIFICATION_FAILED")]
    VerificationFailed,
    #[serde(rename = "BLOCKED_AT_APPROVAL")]
    BlockedAtApproval,
    #[serde(rename = "EXECUTION_FAILED")]
    ExecutionFailed,
    #[serde(rename = "ESCALATED")]
    Escalated,
    #[serde(rename = "HALTED")]
    Halted,
}

impl ClaimStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClaimStatus::VerifiedSuccess => "VERIFIED_SUCCESS",
            ClaimStatus::VerificationFailed => "VERIFICATION_FAILED",
            ClaimStatus::BlockedAtApproval => "BLOCKED_AT_APPROVAL",
            ClaimStatus::ExecutionFailed => "EXECUTION_FAILED",
            ClaimStatus::Escalated => "ESCALATED",
            ClaimStatus::Halted => "HALTED",
        }
    }
}

/// Evidence backing a promoted claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(rename = "mlflow_url")]
    pub tracker_url: String,
    pub metrics: Map<String, Value>,
    pub artifacts: Vec<String>,
}

impl Evidence {
    pub fn is_empty(&self) -> bool {
        self.tracker_url.is_empty() && self.metrics.is_empty() && self.artifacts.is_empty()
    }
}

/// One retry taken while producing an entry: the retry phase and the patch
/// considered for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryEvent {
    pub phase: String,
    pub patch_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimsLedgerEntry {
    pub task_id: String,
    pub status: ClaimStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
    pub verification_timestamp: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retry_history: Vec<RetryEvent>,
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("malformed ledger: {0}")]
    Malformed(String),
    #[error("ledger io: {0}")]
    Io(#[from] std::io::Error),
}

impl ClaimsLedgerEntry {
    /// Structural invariants every entry must satisfy.
    pub fn validate(&self) -> Result<(), LedgerError> {
        match self.status {
            ClaimStatus::VerifiedSuccess => {
                if self.run_id.is_none() {
                    return Err(LedgerError::Malformed(format!(
                        "task {}: VERIFIED_SUCCESS requires a run_id",
                        self.task_id
                    )));
                }
                match &self.evidence {
                    None => {
                        return Err(LedgerError::Malformed(format!(
                            "task {}: VERIFIED_SUCCESS requires evidence",
                            self.task_id
                        )))
                    }
                    Some(e) if e.is_empty() => {
                        return Err(LedgerError::Malformed(format!(
                            "task {}: VERIFIED_SUCCESS requires non-empty evidence",
                            self.task_id
                        )))
                    }
                    Some(_) => {}
                }
            }
            ClaimStatus::BlockedAtApproval => {
                if self.run_id.is_some() {
                    return Err(LedgerError::Malformed(format!(
                        "task {}: BLOCKED_AT_APPROVAL must not carry a run_id",
                        self.task_id
                    )));
                }
            }
            _ => {}
        }
        for (name, v) in self.evidence.iter().flat_map(|e| e.metrics.iter()) {
            if !v.is_number() {
                return Err(LedgerError::Malformed(format!(
                    "task {}: metric {name} is not numeric",
                    self.task_id
                )));
            }
        }
        Ok(())
    }
}

/// Serialize entries (sorted by task id) to the ledger text format.
pub fn ledger_to_string(entries: &[ClaimsLedgerEntry]) -> String {
    let mut sorted: Vec<&ClaimsLedgerEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    serde_json::to_string_pretty(&sorted).expect("ledger serializes")
}

/// Write the ledger file.
pub fn emit_ledger(entries: &[ClaimsLedgerEntry], path: &std::path::Path) -> Result<(), LedgerError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, ledger_to_string(entries) + "\n")?;
    Ok(())
}

/// Parse and validate a ledger document.
pub fn parse_ledger(text: &str) -> Result<Vec<ClaimsLedgerEntry>, LedgerError> {
    let entries: Vec<ClaimsLedgerEntry> =
        serde_json::from_str(text).map_err(|e| LedgerError::Malformed(e.to_string()))?;
    for entry in &entries {
        entry.validate()?;
    }
    Ok(entries)
}

/// Load a ledger file.
pub fn load_ledger(path: &std::path::Path) -> Result<Vec<ClaimsLedgerEntry>, LedgerError> {
    parse_ledger(&std::fs::read_to_string(path)?)
}
