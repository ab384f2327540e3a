//! Acceptance contracts: the machine-checkable evidence specification a task
//! must satisfy before its results can be promoted.
//!
//! A contract names the execution identifier slot, the metrics (with types
//! and ranges), the artifact paths that must exist, and the required terminal
//! status. Parsing preserves unknown fields so documents round-trip.

use indexmap::IndexMap;
use serde_json::{Map, Value};
use thiserror::Error;

/// Declared value type of a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueType {
    Float,
    Int,
}

impl ValueType {
    pub fn as_str(&self) -> &'static str {
        match self {
            ValueType::Float => "float",
            ValueType::Int => "int",
        }
    }
}

/// Closed numeric interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Success-criteria entry for a single metric.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricSpec {
    pub value_type: Option<ValueType>,
    pub range: Option<Interval>,
    pub min: Option<f64>,
    /// Unknown keys, preserved for round-trip.
    pub extra: Map<String, Value>,
}

impl MetricSpec {
    /// A metric counts as checkable when it declares a type, a range, or a
    /// lower bound.
    pub fn is_checkable(&self) -> bool {
        self.value_type.is_some() || self.range.is_some() || self.min.is_some()
    }
}

/// The execution-identifier slot of a contract.
///
/// `Deferred` marks contracts whose run id is generated at execution start;
/// it is distinct from a placeholder string and passes the placeholder check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunIdSpec {
    Concrete(String),
    Deferred,
}

impl RunIdSpec {
    pub fn as_concrete(&self) -> Option<&str> {
        match self {
            RunIdSpec::Concrete(s) => Some(s),
            RunIdSpec::Deferred => None,
        }
    }
}

/// The only status a contract may require.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequiredStatus {
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceCriteria {
    pub run_id: RunIdSpec,
    pub metrics: IndexMap<String, MetricSpec>,
    pub artifacts: Vec<String>,
    pub required_status: RequiredStatus,
    pub required_metrics: Option<IndexMap<String, Interval>>,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceContract {
    pub task_id: String,
    pub description: String,
    pub acceptance_criteria: AcceptanceCriteria,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("missing field: {0}")]
    MissingField(String),
}

/// Which of the three static approval checks a violation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckId {
    MissingField,
    NotCheckable,
    Placeholder,
}

impl CheckId {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckId::MissingField => "MissingField",
            CheckId::NotCheckable => "NotCheckable",
            CheckId::Placeholder => "Placeholder",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaViolation {
    pub check_id: CheckId,
    pub field_path: String,
    pub message: String,
}

impl std::fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {}: {}",
            self.check_id.as_str(),
            self.field_path,
            self.message
        )
    }
}

/// Knobs for the static checks that are policy rather than schema.
#[derive(Debug, Clone, Copy)]
pub struct SchemaCheckOptions {
    /// Require concrete run ids to be 32 lowercase hex characters.
    pub run_id_format_check: bool,
}

impl Default for SchemaCheckOptions {
    fn default() -> Self {
        SchemaCheckOptions {
            run_id_format_check: false,
        }
    }
}

/// True iff `s` is exactly 32 lowercase hexadecimal characters.
pub fn is_hex32(s: &str) -> bool {
    s.len() == 32 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Placeholder detection: after trimming whitespace, a value is a placeholder
/// iff it is empty, wrapped in angle brackets, or one of a small set of
/// well-known filler words (case-insensitive).
pub fn detect_placeholder(value: &str) -> bool {
    let v = value.trim();
    if v.is_empty() {
        return true;
    }
    if v.starts_with('<') && v.ends_with('>') {
        return true;
    }
    matches!(
        v.to_ascii_lowercase().as_str(),
        "tbd" | "todo" | "n/a" | "placeholder"
    )
}

fn want_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ParseError> {
    v.as_object()
        .ok_or_else(|| ParseError::MalformedDocument(format!("{path} must be an object")))
}

fn want_string(v: &Value, path: &str) -> Result<String, ParseError> {
    v.as_str()
        .map(str::to_owned)
        .ok_or_else(|| ParseError::MalformedDocument(format!("{path} must be a string")))
}

fn want_number(v: &Value, path: &str) -> Result<f64, ParseError> {
    v.as_f64()
        .ok_or_else(|| ParseError::MalformedDocument(format!("{path} must be a number")))
}

fn parse_interval(v: &Value, path: &str) -> Result<Interval, ParseError> {
    let arr = v
        .as_array()
        .ok_or_else(|| ParseError::MalformedDocument(format!("{path} must be a 2-element array")))?;
    if arr.len() != 2 {
        return Err(ParseError::MalformedDocument(format!(
            "{path} must be a 2-element array"
        )));
    }
    Ok(Interval {
        lo: want_number(&arr[0], path)?,
        hi: want_number(&arr[1], path)?,
    })
}

fn parse_metric_spec(v: &Value, path: &str) -> Result<MetricSpec, ParseError> {
    let obj = want_object(v, path)?;
    let mut spec = MetricSpec::default();
    for (k, val) in obj {
        match k.as_str() {
            "type" => {
                let t = want_string(val, &format!("{path}.type"))?;
                spec.value_type = Some(match t.as_str() {
                    "float" => ValueType::Float,
                    "int" => ValueType::Int,
                    other => {
                        return Err(ParseError::MalformedDocument(format!(
                            "{path}.type: unknown value type {other:?}"
                        )))
                    }
                });
            }
            "range" => spec.range = Some(parse_interval(val, &format!("{path}.range"))?),
            "min" => spec.min = Some(want_number(val, &format!("{path}.min"))?),
            _ => {
                spec.extra.insert(k.clone(), val.clone());
            }
        }
    }
    Ok(spec)
}

fn parse_run_id(v: &Value, path: &str) -> Result<RunIdSpec, ParseError> {
    match v {
        Value::String(s) => Ok(RunIdSpec::Concrete(s.clone())),
        Value::Object(obj) => {
            if obj.get("deferred").and_then(Value::as_bool) == Some(true) {
                Ok(RunIdSpec::Deferred)
            } else {
                Err(ParseError::MalformedDocument(format!(
                    "{path} object form must be {{\"deferred\": true}}"
                )))
            }
        }
        _ => Err(ParseError::MalformedDocument(format!(
            "{path} must be a string or {{\"deferred\": true}}"
        ))),
    }
}

/// Parse a contract document from its interchange text (UTF-8 JSON).
pub fn parse_contract(document: &[u8]) -> Result<AcceptanceContract, ParseError> {
    let text = std::str::from_utf8(document)
        .map_err(|e| ParseError::MalformedDocument(format!("not valid UTF-8: {e}")))?;
    let root: Value = serde_json::from_str(text)
        .map_err(|e| ParseError::MalformedDocument(e.to_string()))?;
    let obj = want_object(&root, "document")?;

    let task_id = match obj.get("task_id") {
        Some(v) => want_string(v, "task_id")?,
        None => return Err(ParseError::MissingField("task_id".into())),
    };
    let description = match obj.get("description") {
        Some(v) => want_string(v, "description")?,
        None => return Err(ParseError::MissingField("description".into())),
    };
    let criteria_val = obj
        .get("acceptance_criteria")
        .ok_or_else(|| ParseError::MissingField("acceptance_criteria".into()))?;
    let criteria_obj = want_object(criteria_val, "acceptance_criteria")?;

    let run_id = match criteria_obj.get("run_id") {
        Some(v) => parse_run_id(v, "acceptance_criteria.run_id")?,
        None => return Err(ParseError::MissingField("acceptance_criteria.run_id".into())),
    };

    let metrics_val = criteria_obj
        .get("metrics")
        .ok_or_else(|| ParseError::MissingField("acceptance_criteria.metrics".into()))?;
    let metrics_obj = want_object(metrics_val, "acceptance_criteria.metrics")?;
    let mut metrics = IndexMap::new();
    for (name, spec) in metrics_obj {
        let path = format!("acceptance_criteria.metrics.{name}");
        metrics.insert(name.clone(), parse_metric_spec(spec, &path)?);
    }

    let artifacts_val = criteria_obj
        .get("artifacts")
        .ok_or_else(|| ParseError::MissingField("acceptance_criteria.artifacts".into()))?;
    let artifacts_arr = artifacts_val.as_array().ok_or_else(|| {
        ParseError::MalformedDocument("acceptance_criteria.artifacts must be an array".into())
    })?;
    let mut artifacts = Vec::with_capacity(artifacts_arr.len());
    for (i, a) in artifacts_arr.iter().enumerate() {
        artifacts.push(want_string(a, &format!("acceptance_criteria.artifacts[{i}]"))?);
    }

    let status_val = criteria_obj
        .get("status")
        .ok_or_else(|| ParseError::MissingField("acceptance_criteria.status".into()))?;
    let status_str = want_string(status_val, "acceptance_criteria.status")?;
    if status_str != "FINISHED" {
        return Err(ParseError::MalformedDocument(format!(
            "acceptance_criteria.status: only \"FINISHED\" is contractible, got {status_str:?}"
        )));
    }

    let required_metrics = match criteria_obj.get("required_metrics") {
        None => None,
        Some(v) => {
            let rm_obj = want_object(v, "acceptance_criteria.required_metrics")?;
            let mut rm = IndexMap::new();
            for (name, iv) in rm_obj {
                let path = format!("acceptance_criteria.required_metrics.{name}");
                rm.insert(name.clone(), parse_interval(iv, &path)?);
            }
            Some(rm)
        }
    };

    let known_criteria = ["run_id", "metrics", "artifacts", "status", "required_metrics"];
    let criteria_extra: Map<String, Value> = criteria_obj
        .iter()
        .filter(|(k, _)| !known_criteria.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    let known_top = ["task_id", "description", "acceptance_criteria"];
    let extra: Map<String, Value> = obj
        .iter()
        .filter(|(k, _)| !known_top.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    Ok(AcceptanceContract {
        task_id,
        description,
        acceptance_criteria: AcceptanceCriteria {
            run_id,
            metrics,
            artifacts,
            required_status: RequiredStatus::Finished,
            required_metrics,
            extra: criteria_extra,
        },
        extra,
    })
}

fn number(v: f64) -> Value {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 9e15 {
        Value::Number((v as i64).into())
    } else {
        serde_json::Number::from_f64(v)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }
}

fn interval_value(iv: &Interval) -> Value {
    Value::Array(vec![number(iv.lo), number(iv.hi)])
}

/// Render a contract back to a JSON value with stable key order.
pub fn contract_to_value(c: &AcceptanceContract) -> Value {
    let mut criteria = Map::new();
    criteria.insert(
        "run_id".into(),
        match &c.acceptance_criteria.run_id {
            RunIdSpec::Concrete(s) => Value::String(s.clone()),
            RunIdSpec::Deferred => {
                let mut m = Map::new();
                m.insert("deferred".into(), Value::Bool(true));
                Value::Object(m)
            }
        },
    );
    let mut metrics = Map::new();
    for (name, spec) in &c.acceptance_criteria.metrics {
        let mut m = Map::new();
        if let Some(t) = spec.value_type {
            m.insert("type".into(), Value::String(t.as_str().into()));
        }
        if let Some(r) = &spec.range {
            m.insert("range".into(), interval_value(r));
        }
        if let Some(min) = spec.min {
            m.insert("min".into(), number(min));
        }
        for (k, v) in &spec.extra {
            m.insert(k.clone(), v.clone());
        }
        metrics.insert(name.clone(), Value::Object(m));
    }
    criteria.insert("metrics".into(), Value::Object(metrics));
    criteria.insert(
        "artifacts".into(),
        Value::Array(
            c.acceptance_criteria
                .artifacts
                .iter()
                .map(|a| Value::String(a.clone()))
                .collect(),
        ),
    );
    criteria.insert("status".into(), Value::String("FINISHED".into()));
    if let Some(rm) = &c.acceptance_criteria.required_metrics {
        let mut m = Map::new();
        for (name, iv) in rm {
            m.insert(name.clone(), interval_value(iv));
        }
        criteria.insert("required_metrics".into(), Value::Object(m));
    }
    for (k, v) in &c.acceptance_criteria.extra {
        criteria.insert(k.clone(), v.clone());
    }

    let mut root = Map::new();
    root.insert("task_id".into(), Value::String(c.task_id.clone()));
    root.insert("description".into(), Value::String(c.description.clone()));
    root.insert("acceptance_criteria".into(), Value::Object(criteria));
    for (k, v) in &c.extra {
        root.insert(k.clone(), v.clone());
    }
    Value::Object(root)
}

/// Serialize a contract back to interchange text.
pub fn serialize_contract(c: &AcceptanceContract) -> String {
    serde_json::to_string_pretty(&contract_to_value(c)).expect("contract value serializes")
}

/// Static approval checks 1-3 with default options.
pub fn check_schema(contract: &AcceptanceContract) -> Vec<SchemaViolation> {
    check_schema_with(contract, &SchemaCheckOptions::default())
}

/// Static approval checks 1-3: required structure, checkability, and
/// placeholder absence. Returns one violation per failed check, ordered by
/// field path (lexicographic), so reports are byte-stable.
pub fn check_schema_with(
    contract: &AcceptanceContract,
    opts: &SchemaCheckOptions,
) -> Vec<SchemaViolation> {
    let mut out = Vec::new();
    let c = &contract.acceptance_criteria;

    if contract.task_id.trim().is_empty() {
        out.push(SchemaViolation {
            check_id: CheckId::MissingField,
            field_path: "task_id".into(),
            message: "task_id must be non-empty".into(),
        });
    } else if detect_placeholder(&contract.task_id) {
        out.push(SchemaViolation {
            check_id: CheckId::Placeholder,
            field_path: "task_id".into(),
            message: format!("placeholder value {:?}", contract.task_id),
        });
    }

    if c.artifacts.is_empty() {
        out.push(SchemaViolation {
            check_id: CheckId::NotCheckable,
            field_path: "acceptance_criteria.artifacts".into(),
            message: "empty artifact lists specify no evidence".into(),
        });
    }
    for (i, a) in c.artifacts.iter().enumerate() {
        if detect_placeholder(a) {
            out.push(SchemaViolation {
                check_id: CheckId::Placeholder,
                field_path: format!("acceptance_criteria.artifacts[{i}]"),
                message: format!("placeholder value {a:?}"),
            });
        }
    }

    for (name, spec) in &c.metrics {
        let path = format!("acceptance_criteria.metrics.{name}");
        if !spec.is_checkable() {
            out.push(SchemaViolation {
                check_id: CheckId::NotCheckable,
                field_path: path.clone(),
                message: "metric declares no type, range, or lower bound".into(),
            });
        }
        if let Some(r) = &spec.range {
            if r.lo > r.hi {
                out.push(SchemaViolation {
                    check_id: CheckId::NotCheckable,
                    field_path: format!("{path}.range"),
                    message: format!("empty interval [{}, {}]", r.lo, r.hi),
                });
            }
        }
    }

    if let Some(rm) = &c.required_metrics {
        for (name, iv) in rm {
            let path = format!("acceptance_criteria.required_metrics.{name}");
            if !c.metrics.contains_key(name) {
                out.push(SchemaViolation {
                    check_id: CheckId::NotCheckable,
                    field_path: path.clone(),
                    message: "required metric is not declared in metrics".into(),
                });
            }
            if iv.lo > iv.hi {
                out.push(SchemaViolation {
                    check_id: CheckId::NotCheckable,
                    field_path: path.clone(),
                    message: format!("empty interval [{}, {}]", iv.lo, iv.hi),
                });
            }
        }
    }

    if let RunIdSpec::Concrete(run_id) = &c.run_id {
        if detect_placeholder(run_id) {
            out.push(SchemaViolation {
                check_id: CheckId::Placeholder,
                field_path: "acceptance_criteria.run_id".into(),
                message: format!("run_id must be concrete, not {run_id:?}"),
            });
        } else if opts.run_id_format_check && !is_hex32(run_id) {
            out.push(SchemaViolation {
                check_id: CheckId::NotCheckable,
                field_path: "acceptance_criteria.run_id".into(),
                message: "run_id is not a 32-character lowercase hex identifier".into(),
            });
        }
    }

    out.sort_by(|a, b| {
        a.field_path
            .cmp(&b.field_path)
            .then(a.check_id.cmp(&b.check_id))
    });
    out
}

#[cfg(test)]
pub(crate) const EXAMPLE_CONTRACT: &str = r#"{
  "task_id": "T01",
  "description": "Train CLIP model on subset data",
  "acceptance_criteria": {
    "run_id": "example-run-id-12345",
    "metrics": {
      "val_loss": {"type": "float", "range": [0, 5]},
      "epochs_completed": {"type": "int", "min": 1}
    },
    "artifacts": ["model.pt", "metrics.json", "training.log"],
    "status": "FINISHED"
  }
}"#;
