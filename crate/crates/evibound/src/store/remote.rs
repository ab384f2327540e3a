//! Remote run store speaking the common experiment-tracker REST protocol
//! (`runs/get`, `artifacts/list`, plus the corresponding write endpoints).
//!
//! Interface-conformant with the file-backed store; any tracker with a
//! queryable API can serve as the evidence substrate.

use indexmap::IndexMap;
use serde_json::Value;

use super::{
    validate_artifact_path, ArtifactEntry, RunRecord, RunStatus, RunStore, StoreError, WriteError,
};

pub struct RemoteStore {
    base: String,
    agent: ureq::Agent,
}

impl RemoteStore {
    pub fn new(base_url: &str) -> RemoteStore {
        RemoteStore {
            base: base_url.trim_end_matches('/').to_owned(),
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(10))
                .build(),
        }
    }

    fn endpoint(&self, name: &str) -> String {
        format!("{}/api/2.0/mlflow/{name}", self.base)
    }

    fn get_json(&self, name: &str, query: &[(&str, &str)]) -> Result<Value, StoreError> {
        let mut req = self.agent.get(&self.endpoint(name));
        for (k, v) in query {
            req = req.query(k, v);
        }
        match req.call() {
            Ok(resp) => resp
                .into_json()
                .map_err(|e| StoreError::corrupt(format!("invalid response body: {e}"))),
            Err(ureq::Error::Status(404, _)) => {
                Err(StoreError::not_found("run_id not queryable".to_owned()))
            }
            Err(ureq::Error::Status(code, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                if body.contains("RESOURCE_DOES_NOT_EXIST") {
                    Err(StoreError::not_found("run_id not queryable".to_owned()))
                } else {
                    Err(StoreError::unreachable(format!("HTTP {code}: {body}")))
                }
            }
            Err(e) => Err(StoreError::unreachable(e.to_string())),
        }
    }

    fn post_json(&self, name: &str, body: Value) -> Result<Value, WriteError> {
        match self.agent.post(&self.endpoint(name)).send_json(body) {
            Ok(resp) => resp
                .into_json()
                .map_err(|e| WriteError::Store(StoreError::corrupt(e.to_string()))),
            Err(ureq::Error::Status(404, _)) => {
                Err(WriteError::Store(StoreError::not_found("run_id not queryable")))
            }
            Err(e) => Err(WriteError::Store(StoreError::unreachable(e.to_string()))),
        }
    }

    fn list_dir(&self, run_id: &str, path: Option<&str>) -> Result<Vec<ArtifactEntry>, StoreError> {
        let mut query = vec![("run_id", run_id)];
        if let Some(p) = path {
            query.push(("path", p));
        }
        let v = self.get_json("artifacts/list", &query)?;
        let files = v.get("files").and_then(Value::as_array);
        let mut out = Vec::new();
        if let Some(files) = files {
            for f in files {
                let path = f
                    .get("path")
                    .and_then(Value::as_str)
                    .ok_or_else(|| StoreError::corrupt("artifact entry without path"))?;
                out.push(ArtifactEntry {
                    path: path.to_owned(),
                    is_directory: f.get("is_dir").and_then(Value::as_bool).unwrap_or(false),
                    size_bytes: f.get("file_size").and_then(Value::as_u64).unwrap_or(0),
                });
            }
        }
        Ok(out)
    }
}

impl RunStore for RemoteStore {
    fn get_run(&self, run_id: &str) -> Result<RunRecord, StoreError> {
        let v = self.get_json("runs/get", &[("run_id", run_id)])?;
        let run = v
            .get("run")
            .ok_or_else(|| StoreError::corrupt("response has no run object"))?;
        let info = run.get("info").unwrap_or(&Value::Null);
        let status_str = info
            .get("status")
            .and_then(Value::as_str)
            .ok_or_else(|| StoreError::corrupt("run has no status"))?;
        let status = RunStatus::from_str(status_str)
            .ok_or_else(|| StoreError::corrupt(format!("unknown status {status_str:?}")))?;

        let mut metrics = IndexMap::new();
        let mut params = IndexMap::new();
        if let Some(data) = run.get("data") {
            if let Some(ms) = data.get("metrics").and_then(Value::as_array) {
                for m in ms {
                    if let (Some(k), Some(val)) = (
                        m.get("key").and_then(Value::as_str),
                        m.get("value").and_then(Value::as_f64),
                    ) {
                        metrics.insert(k.to_owned(), val);
                    }
                }
            }
            if let Some(ps) = data.get("params").and_then(Value::as_array) {
                for p in ps {
                    if let (Some(k), Some(val)) = (
                        p.get("key").and_then(Value::as_str),
                        p.get("value").and_then(Value::as_str),
                    ) {
                        params.insert(k.to_owned(), val.to_owned());
                    }
                }
            }
        }

        Ok(RunRecord {
            run_id: run_id.to_owned(),
            status,
            metrics,
            params,
            artifact_root: info
                .get("artifact_uri")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_owned(),
        })
    }

    fn list_artifacts(&self, run_id: &str, recursive: bool) -> Result<Vec<ArtifactEntry>, StoreError> {
        let top = self.list_dir(run_id, None)?;
        if !recursive {
            return Ok(top);
        }
        // The wire protocol lists one directory per call; recurse client-side.
        let mut stack: Vec<ArtifactEntry> = top;
        let mut files = Vec::new();
        while let Some(entry) = stack.pop() {
            if entry.is_directory {
                stack.extend(self.list_dir(run_id, Some(&entry.path))?);
            } else {
                files.push(entry);
            }
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(files)
    }

    fn create_run(&self) -> Result<String, WriteError> {
        let v = self.post_json("runs/create", serde_json::json!({"experiment_id": "0"}))?;
        v.get("run")
            .and_then(|r| r.get("info"))
            .and_then(|i| i.get("run_id"))
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| WriteError::Store(StoreError::corrupt("runs/create returned no run_id")))
    }

    fn set_status(&self, run_id: &str, status: RunStatus) -> Result<(), WriteError> {
        self.post_json(
            "runs/update",
            serde_json::json!({"run_id": run_id, "status": status.as_str()}),
        )?;
        Ok(())
    }

    fn log_metric(&self, run_id: &str, name: &str, value: f64) -> Result<(), WriteError> {
        if !value.is_finite() {
            return Err(WriteError::NonFiniteMetric(value));
        }
        self.post_json(
            "runs/log-metric",
            serde_json::json!({"run_id": run_id, "key": name, "value": value, "timestamp": 0, "step": 0}),
        )?;
        Ok(())
    }

    fn log_param(&self, run_id: &str, name: &str, value: &str) -> Result<(), WriteError> {
        self.post_json(
            "runs/log-parameter",
            serde_json::json!({"run_id": run_id, "key": name, "value": value}),
        )?;
        Ok(())
    }

    fn log_artifact(&self, _run_id: &str, path: &str, _bytes: &[u8]) -> Result<(), WriteError> {
        validate_artifact_path(path)?;
        // The tracker wire protocol has no artifact-upload endpoint; artifact
        // bytes go through the artifact repository directly.
        Err(WriteError::Unsupported(
            "remote store cannot upload artifact bytes".into(),
        ))
    }

    fn healthcheck(&self) -> Result<(), StoreError> {
        // Any well-formed response (even an error status) proves reachability.
        match self.agent.get(&self.endpoint("experiments/list")).call() {
            Ok(_) | Err(ureq::Error::Status(_, _)) => Ok(()),
            Err(e) => Err(StoreError::unreachable(e.to_string())),
        }
    }

    fn run_uri(&self, run_id: &str) -> String {
        format!("{}/#/runs/{run_id}", self.base)
    }
}
