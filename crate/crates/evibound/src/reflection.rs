//! Deterministic reflection service: maps failure signals to patches with
//! confidence scores, risk scores, and a policy recommendation.
//!
//! Patch generation is a pure lookup in a declarative rulebook so retries are
//! reproducible. Patches are only applied when their confidence reaches the
//! threshold `tau`.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::verify::{route, FailureClass, RoutingTarget};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatchAction {
    SimplifyContract,
    ConcretizeRunId,
    RelogEvidence,
    RepairRuntime,
    NoOp,
}

impl PatchAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            PatchAction::SimplifyContract => "SimplifyContract",
            PatchAction::ConcretizeRunId => "ConcretizeRunId",
            PatchAction::RelogEvidence => "RelogEvidence",
            PatchAction::RepairRuntime => "RepairRuntime",
            PatchAction::NoOp => "NoOp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyDecision {
    #[serde(rename = "RETRY")]
    Retry,
    #[serde(rename = "ESCALATE")]
    Escalate,
    #[serde(rename = "ABORT")]
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyRecommendation {
    pub decision: PolicyDecision,
    pub risk_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub patch_id: String,
    pub target_phase: RoutingTarget,
    pub action: PatchAction,
    pub confidence: f64,
    pub provenance: String,
    /// For `SimplifyContract`: the metric names the simplified contract keeps.
    pub keep_metrics: Option<Vec<String>>,
}

/// One rulebook entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRule {
    pub action: PatchAction,
    pub confidence: f64,
    pub decision: PolicyDecision,
    pub risk_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_metrics: Option<Vec<String>>,
}

/// Declarative patch-rule table, loaded at startup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rulebook {
    /// Fallback rule; guarantees totality.
    pub default: PatchRule,
    /// Rules keyed by verification failure class name.
    #[serde(default)]
    pub verification: IndexMap<String, PatchRule>,
    /// Rules for approval-gate rejections.
    #[serde(default)]
    pub approval: ApprovalRules,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ApprovalRules {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<PatchRule>,
    #[serde(default)]
    pub per_task: IndexMap<String, PatchRule>,
}

#[derive(Debug, Error)]
pub enum RulebookError {
    #[error("malformed rulebook: {0}")]
    Malformed(String),
}

impl Rulebook {
    pub fn parse(text: &str) -> Result<Rulebook, RulebookError> {
        let book: Rulebook =
            serde_json::from_str(text).map_err(|e| RulebookError::Malformed(e.to_string()))?;
        for rule in std::iter::once(&book.default)
            .chain(book.verification.values())
            .chain(book.approval.default.iter())
            .chain(book.approval.per_task.values())
        {
            if !(0.0..=1.0).contains(&rule.confidence) || !(0.0..=1.0).contains(&rule.risk_score) {
                return Err(RulebookError::Malformed(
                    "confidence and risk_score must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(book)
    }

    /// Built-in rulebook covering every failure class.
    pub fn builtin() -> Rulebook {
        fn rule(action: PatchAction, confidence: f64, decision: PolicyDecision, risk: f64) -> PatchRule {
            PatchRule {
                action,
                confidence,
                decision,
                risk_score: risk,
                keep_metrics: None,
            }
        }
        let mut verification = IndexMap::new();
        verification.insert(
            "RunNotQueryable".into(),
            rule(PatchAction::ConcretizeRunId, 0.8, PolicyDecision::Retry, 0.3),
        );
        verification.insert(
            "ArtifactMissing".into(),
            rule(PatchAction::RelogEvidence, 0.8, PolicyDecision::Retry, 0.3),
        );
        verification.insert(
            "ArtifactListingFailed".into(),
            rule(PatchAction::RelogEvidence, 0.75, PolicyDecision::Retry, 0.4),
        );
        verification.insert(
            "MetricMissing".into(),
            rule(PatchAction::SimplifyContract, 0.75, PolicyDecision::Retry, 0.3),
        );
        verification.insert(
            "MetricOutOfRange".into(),
            rule(PatchAction::SimplifyContract, 0.75, PolicyDecision::Retry, 0.3),
        );
        verification.insert(
            "NotFinished".into(),
            rule(PatchAction::RepairRuntime, 0.75, PolicyDecision::Retry, 0.4),
        );
        verification.insert(
            "TrackerUnreachable".into(),
            rule(PatchAction::NoOp, 0.0, PolicyDecision::Abort, 1.0),
        );
        verification.insert(
            "ScopeIssue".into(),
            rule(PatchAction::NoOp, 0.75, PolicyDecision::Retry, 0.5),
        );
        Rulebook {
            default: rule(PatchAction::NoOp, 0.5, PolicyDecision::Retry, 0.5),
            verification,
            approval: ApprovalRules::default(),
        }
    }

    fn verification_rule(&self, failure: FailureClass) -> (&PatchRule, String) {
        match self.verification.get(failure.as_str()) {
            Some(rule) => (rule, format!("rulebook:verification.{}", failure.as_str())),
            None => (&self.default, "rulebook:default".to_string()),
        }
    }

    fn approval_rule(&self, task_id: &str) -> (&PatchRule, String) {
        if let Some(rule) = self.approval.per_task.get(task_id) {
            return (rule, format!("rulebook:approval.per_task.{task_id}"));
        }
        if let Some(rule) = &self.approval.default {
            return (rule, "rulebook:approval.default".to_string());
        }
        (&self.default, "rulebook:default".to_string())
    }
}

fn build(rule: &PatchRule, provenance: String, task_id: &str, target: RoutingTarget, key: &str)
    -> (Patch, PolicyRecommendation)
{
    (
        Patch {
            patch_id: format!("{task_id}:{key}:{}", rule.action.as_str()),
            target_phase: target,
            action: rule.action.clone(),
            confidence: rule.confidence,
            provenance,
            keep_metrics: rule.keep_metrics.clone(),
        },
        PolicyRecommendation {
            decision: rule.decision,
            risk_score: rule.risk_score,
        },
    )
}

/// Deterministic patch lookup for a verification failure.
pub fn generate_patch(
    failure: FailureClass,
    task_id: &str,
    rulebook: &Rulebook,
) -> (Patch, PolicyRecommendation) {
    let (rule, provenance) = rulebook.verification_rule(failure);
    build(rule, provenance, task_id, route(failure), failure.as_str())
}

/// Deterministic patch lookup for an approval-gate rejection.
pub fn generate_approval_patch(task_id: &str, rulebook: &Rulebook) -> (Patch, PolicyRecommendation) {
    let (rule, provenance) = rulebook.approval_rule(task_id);
    build(rule, provenance, task_id, RoutingTarget::Phase4_5, "approval")
}

/// Confidence gate: a patch is applied iff its confidence reaches `tau`.
pub fn should_apply(patch: &Patch, tau: f64) -> bool {
    patch.confidence >= tau
}

/// On-disk record of a patch considered during a retry, for auditability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchRecord {
    pub task_id: String,
    pub attempt: u32,
    pub phase: String,
    pub patch_id: String,
    pub action: String,
    pub confidence: f64,
    pub applied: bool,
    pub decision: PolicyDecision,
    pub risk_score: f64,
    pub provenance: String,
}

/// Write a patch record under `<out>/patches/<task_id>-<attempt>.json` and
/// update `<out>/risk_scores.json`.
pub fn record_patch(out_dir: &std::path::Path, record: &PatchRecord) -> std::io::Result<()> {
    let patches = out_dir.join("patches");
    std::fs::create_dir_all(&patches)?;
    let file = patches.join(format!("{}-{}.json", record.task_id, record.attempt));
    std::fs::write(&file, serde_json::to_string_pretty(record).expect("record serializes"))?;

    let risk_path = out_dir.join("risk_scores.json");
    let mut scores: IndexMap<String, f64> = match std::fs::read_to_string(&risk_path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => IndexMap::new(),
    };
    scores.insert(record.task_id.clone(), record.risk_score);
    std::fs::write(
        &risk_path,
        serde_json::to_string_pretty(&Value::Object(
            scores
                .into_iter()
                .map(|(k, v)| {
                    (
                        k,
                        serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null),
                    )
                })
                .collect(),
        ))
        .expect("risk scores serialize"),
    )
}
