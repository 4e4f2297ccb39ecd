//! HTTP API over a flat directory store.
//!
//! Layout under the store root: `datasets/{id}.csv` with its upload settings
//! in `datasets/{id}.meta.json`, `explanations/{id}.json`, `jobs/{id}.json`
//! and `sweeps/{id}.csv`.

use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{error, info};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{BinConfig, Dataset, FeatureTable, RawTable};
use crate::error::Error;
use crate::oracle::{OracleMode, OracleSource};
use crate::pipeline::{self, ExplainRequest, Explanation, SweepSpec};

pub const STORE_ENV: &str = "BETA_STORE_DIR";

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    Conflict(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::OracleUnavailable(_) | Error::Protocol { .. } => {
                ApiError::Internal(e.to_string())
            }
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Explain,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub dataset_id: String,
    pub request: Value,
    /// Explanation id or sweep id once done.
    pub result: Option<String>,
    pub error: Option<String>,
    pub created_ms: u64,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
}

/// Upload settings sent as the multipart `config` field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UploadConfig {
    pub oracle: Option<String>,
    pub bins: BinConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub id: String,
    pub label_col: Option<String>,
    pub oracle: String,
    pub bins: BinConfig,
    pub rows: usize,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

/// Write through a temporary file so readers never see partial content.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", new_id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

pub struct Store {
    root: PathBuf,
    uploading: Mutex<HashSet<String>>,
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    jobs: Mutex<HashMap<String, Job>>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> crate::Result<Self> {
        let root = root.into();
        for sub in ["datasets", "explanations", "jobs", "sweeps"] {
            std::fs::create_dir_all(root.join(sub))?;
        }
        Ok(Store {
            root,
            uploading: Mutex::new(HashSet::new()),
            datasets: RwLock::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, dir: &str, id: &str, ext: &str) -> PathBuf {
        self.root.join(dir).join(format!("{id}.{ext}"))
    }

    /// Mark an id as being uploaded; requests for it answer 409 meanwhile.
    pub fn begin_upload(&self, id: &str) {
        self.uploading.lock().unwrap().insert(id.to_string());
    }

    pub fn end_upload(&self, id: &str) {
        self.uploading.lock().unwrap().remove(id);
    }

    fn check_dataset(&self, id: &str) -> ApiResult<()> {
        if self.uploading.lock().unwrap().contains(id) {
            return Err(ApiError::Conflict(format!("dataset {id} is still uploading")));
        }
        if !valid_id(id) || !self.path("datasets", id, "meta.json").exists() {
            return Err(ApiError::NotFound(format!("unknown dataset {id}")));
        }
        Ok(())
    }

    fn meta(&self, id: &str) -> ApiResult<DatasetMeta> {
        self.check_dataset(id)?;
        let text = std::fs::read_to_string(self.path("datasets", id, "meta.json"))
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| ApiError::Internal(e.to_string()))
    }

    fn oracle_of(meta: &DatasetMeta) -> crate::Result<OracleSource> {
        OracleSource::parse(&meta.oracle, meta.label_col.as_deref())
    }

    fn raw_table(&self, id: &str) -> crate::Result<RawTable> {
        RawTable::from_path(self.path("datasets", id, "csv"))
    }

    pub fn feature_table(&self, id: &str) -> ApiResult<(DatasetMeta, FeatureTable)> {
        let meta = self.meta(id)?;
        let table = self.raw_table(id)?;
        let oracle = Self::oracle_of(&meta)?;
        let mut exclude: Vec<&str> = meta.label_col.as_deref().into_iter().collect();
        exclude.extend(oracle.label_column());
        let features = FeatureTable::from_raw(&table, &exclude, &meta.bins)?;
        Ok((meta, features))
    }

    /// The labeled dataset, built once per store and then shared.
    pub fn dataset(&self, id: &str) -> ApiResult<Arc<Dataset>> {
        self.check_dataset(id)?;
        if let Some(ds) = self.datasets.read().unwrap().get(id) {
            return Ok(ds.clone());
        }
        let meta = self.meta(id)?;
        let table = self.raw_table(id)?;
        let oracle = Self::oracle_of(&meta)?;
        let ds = Arc::new(pipeline::prepare_dataset(&table, meta.label_col.as_deref(), &oracle, &meta.bins)?);
        self.datasets.write().unwrap().entry(id.to_string()).or_insert(ds.clone());
        Ok(ds)
    }

    pub fn put_dataset(&self, csv: &[u8], label_col: Option<String>, cfg: UploadConfig) -> ApiResult<DatasetMeta> {
        cfg.bins.validate()?;
        let oracle_spec = cfg.oracle.unwrap_or_else(|| "column".to_string());
        let oracle = OracleSource::parse(&oracle_spec, label_col.as_deref())?;
        if let OracleMode::Subprocess(_) = oracle.mode {
            return Err(ApiError::BadRequest(
                "config.oracle: subprocess oracles are not accepted over HTTP".into(),
            ));
        }
        let table = RawTable::from_reader(csv)?;
        let mut exclude: Vec<&str> = label_col.as_deref().into_iter().collect();
        exclude.extend(oracle.label_column());
        for c in &exclude {
            table
                .column_index(c)
                .map_err(|_| ApiError::BadRequest(format!("label_col: no column '{c}' in the CSV")))?;
        }
        FeatureTable::from_raw(&table, &exclude, &cfg.bins)?;

        let id = new_id();
        self.begin_upload(&id);
        let meta = DatasetMeta {
            id: id.clone(),
            label_col,
            oracle: oracle_spec,
            bins: cfg.bins,
            rows: table.rows.len(),
        };
        let written = write_atomic(&self.path("datasets", &id, "csv"), csv).and_then(|_| {
            write_atomic(
                &self.path("datasets", &id, "meta.json"),
                serde_json::to_string_pretty(&meta).unwrap().as_bytes(),
            )
        });
        self.end_upload(&id);
        written.map_err(|e| ApiError::Internal(e.to_string()))?;
        Ok(meta)
    }

    fn save_job(&self, job: &Job) {
        let bytes = serde_json::to_vec_pretty(job).expect("job serializes");
        if let Err(e) = write_atomic(&self.path("jobs", &job.id, "json"), &bytes) {
            error!("failed to persist job {}: {e}", job.id);
        }
        self.jobs.lock().unwrap().insert(job.id.clone(), job.clone());
    }

    fn update_job(&self, id: &str, f: impl FnOnce(&mut Job)) {
        let mut job = match self.jobs.lock().unwrap().get(id) {
            Some(j) => j.clone(),
            None => return,
        };
        f(&mut job);
        self.save_job(&job);
    }

    pub fn job(&self, id: &str) -> ApiResult<Job> {
        if let Some(j) = self.jobs.lock().unwrap().get(id) {
            return Ok(j.clone());
        }
        if !valid_id(id) {
            return Err(ApiError::NotFound(format!("unknown job {id}")));
        }
        let text = std::fs::read_to_string(self.path("jobs", id, "json"))
            .map_err(|_| ApiError::NotFound(format!("unknown job {id}")))?;
        serde_json::from_str(&text).map_err(|e| ApiError::Internal(e.to_string()))
    }

    pub fn explanation_bytes(&self, id: &str) -> ApiResult<Vec<u8>> {
        if !valid_id(id) {
            return Err(ApiError::NotFound(format!("unknown explanation {id}")));
        }
        std::fs::read(self.path("explanations", id, "json"))
            .map_err(|_| ApiError::NotFound(format!("unknown explanation {id}")))
    }

    pub fn sweep_bytes(&self, id: &str) -> ApiResult<Vec<u8>> {
        if !valid_id(id) {
            return Err(ApiError::NotFound(format!("unknown sweep {id}")));
        }
        std::fs::read(self.path("sweeps", id, "csv"))
            .map_err(|_| ApiError::NotFound(format!("unknown sweep {id}")))
    }

    fn new_job(&self, kind: JobKind, dataset_id: &str, request: Value) -> Job {
        let job = Job {
            id: new_id(),
            kind,
            state: JobState::Queued,
            dataset_id: dataset_id.to_string(),
            request,
            result: None,
            error: None,
            created_ms: now_ms(),
            started_ms: None,
            finished_ms: None,
        };
        self.save_job(&job);
        job
    }

    fn run_job(self: &Arc<Self>, job_id: String, work: impl FnOnce(&Store) -> crate::Result<String> + Send + 'static) {
        let store = self.clone();
        tokio::task::spawn_blocking(move || {
            store.update_job(&job_id, |j| {
                j.state = JobState::Running;
                j.started_ms = Some(now_ms());
            });
            let outcome = work(&store);
            store.update_job(&job_id, |j| {
                j.finished_ms = Some(now_ms());
                match outcome {
                    Ok(result) => {
                        j.state = JobState::Done;
                        j.result = Some(result);
                    }
                    Err(e) => {
                        j.state = JobState::Failed;
                        j.error = Some(e.to_string());
                    }
                }
            });
        });
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    if body.iter().all(|b| b.is_ascii_whitespace()) {
        return serde_json::from_str("{}").map_err(|e| ApiError::BadRequest(e.to_string()));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid request body: {e}")))
}

fn json_bytes(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json; charset=utf-8")], bytes).into_response()
}

async fn upload(State(store): State<Arc<Store>>, mut form: Multipart) -> ApiResult<Response> {
    let mut file = None;
    let mut label_col = None;
    let mut config = UploadConfig::default();
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::BadRequest(format!("multipart: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let data = field
            .bytes()
            .await
            .map_err(|e| ApiError::BadRequest(format!("{name}: {e}")))?;
        match name.as_str() {
            "file" => file = Some(data),
            "label_col" => {
                let s = String::from_utf8(data.to_vec())
                    .map_err(|_| ApiError::BadRequest("label_col: not UTF-8".into()))?;
                let s = s.trim().to_string();
                if !s.is_empty() {
                    label_col = Some(s);
                }
            }
            "config" => {
                config = serde_json::from_slice(&data)
                    .map_err(|e| ApiError::BadRequest(format!("config: {e}")))?
            }
            other => return Err(ApiError::BadRequest(format!("unexpected field '{other}'"))),
        }
    }
    let file = file.ok_or_else(|| ApiError::BadRequest("file: missing CSV upload".into()))?;
    let store2 = store.clone();
    let meta = tokio::task::spawn_blocking(move || store2.put_dataset(&file, label_col, config))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    info!("stored dataset {} ({} rows)", meta.id, meta.rows);
    Ok((StatusCode::CREATED, Json(json!({ "id": meta.id, "rows": meta.rows }))).into_response())
}

async fn features(State(store): State<Arc<Store>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let (meta, table) = store.feature_table(&id)?;
    Ok(Json(json!({
        "id": meta.id,
        "label_col": meta.label_col,
        "rows": table.len(),
        "features": table.schema(),
    }))
    .into_response())
}

async fn start_explain(
    State(store): State<Arc<Store>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Response> {
    store.check_dataset(&id)?;
    let req: ExplainRequest = parse_body(&body)?;
    let (_, table) = store.feature_table(&id)?;
    if let Some(u) = &req.features {
        if u.is_empty() {
            return Err(ApiError::BadRequest("features: must not be empty".into()));
        }
        if let Some(f) = u.iter().find(|f| !table.schema().iter().any(|s| &s.name == *f)) {
            return Err(ApiError::BadRequest(format!("features: unknown feature '{f}'")));
        }
    }
    req.objective.validate().map_err(|e| ApiError::BadRequest(format!("objective: {e}")))?;
    let job = store.new_job(JobKind::Explain, &id, serde_json::to_value(&req).unwrap());
    let dataset_id = id.clone();
    store.run_job(job.id.clone(), move |store| {
        let ds = store.dataset(&dataset_id).map_err(api_to_error)?;
        let explanation = pipeline::explain(&ds, &req)?;
        let eid = new_id();
        write_atomic(&store.path("explanations", &eid, "json"), explanation.to_json()?.as_bytes())?;
        Ok(eid)
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job.id }))).into_response())
}

async fn start_sweep(
    State(store): State<Arc<Store>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Response> {
    store.check_dataset(&id)?;
    let spec: SweepSpec = parse_body(&body)?;
    spec.validate()?;
    let job = store.new_job(JobKind::Sweep, &id, serde_json::to_value(&spec).unwrap());
    let dataset_id = id.clone();
    store.run_job(job.id.clone(), move |store| {
        let ds = store.dataset(&dataset_id).map_err(api_to_error)?;
        let rows = pipeline::sweep(&ds, &spec)?;
        let mut buf = Vec::new();
        pipeline::write_sweep_csv(&rows, spec.axis, &mut buf)?;
        let sid = new_id();
        write_atomic(&store.path("sweeps", &sid, "csv"), &buf)?;
        Ok(sid)
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job.id }))).into_response())
}

fn api_to_error(e: ApiError) -> Error {
    match e {
        ApiError::NotFound(m) | ApiError::BadRequest(m) | ApiError::Conflict(m) | ApiError::Internal(m) => {
            Error::Config(m)
        }
    }
}

async fn get_job(State(store): State<Arc<Store>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    Ok(Json(store.job(&id)?).into_response())
}

async fn get_explanation(State(store): State<Arc<Store>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    Ok(json_bytes(store.explanation_bytes(&id)?))
}

async fn get_sweep(State(store): State<Arc<Store>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let bytes = store.sweep_bytes(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], bytes).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictBody {
    instance: serde_json::Map<String, Value>,
}

async fn predict(
    State(store): State<Arc<Store>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let bytes = store.explanation_bytes(&id)?;
    let body: PredictBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError::BadRequest(format!("invalid request body: {e}")))?;
    let text = String::from_utf8(bytes).map_err(|e| ApiError::Internal(e.to_string()))?;
    let explanation = Explanation::from_json(&text).map_err(|e| ApiError::Internal(e.to_string()))?;
    let set = explanation.decision_set().map_err(|e| ApiError::Internal(e.to_string()))?;
    let out = pipeline::predict_instance(&set, &body.instance)
        .map_err(|e| ApiError::BadRequest(format!("instance: {e}")))?;
    Ok(Json(out).into_response())
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/datasets", post(upload))
        .route("/datasets/{id}/features", get(features))
        .route("/datasets/{id}/explain", post(start_explain))
        .route("/datasets/{id}/sweep", post(start_sweep))
        .route("/jobs/{id}", get(get_job))
        .route("/explanations/{id}", get(get_explanation))
        .route("/explanations/{id}/predict", post(predict))
        .route("/sweeps/{id}", get(get_sweep))
        .layer(DefaultBodyLimit::max(512 * 1024 * 1024))
        .with_state(store)
}

/// The store directory: `BETA_STORE_DIR` when set, else `flag`.
pub fn store_dir(flag: &Path) -> PathBuf {
    match std::env::var_os(STORE_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.to_path_buf(),
    }
}

/// Bind and serve until ctrl-c. `ready` receives the bound address.
pub async fn serve(
    addr: SocketAddr,
    store: Arc<Store>,
    ready: Option<tokio::sync::oneshot::Sender<SocketAddr>>,
) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    info!("listening on {local}, store {}", store.root().display());
    if let Some(tx) = ready {
        let _ = tx.send(local);
    }
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::TOY8_CSV;

    #[test]
    fn store_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let meta = store
            .put_dataset(TOY8_CSV.as_bytes(), Some("label".into()), UploadConfig::default())
            .unwrap();
        assert!(dir.path().join("datasets").join(format!("{}.csv", meta.id)).exists());
        let ds = store.dataset(&meta.id).unwrap();
        assert_eq!(ds.n(), 8);
        assert!(Arc::ptr_eq(&ds, &store.dataset(&meta.id).unwrap()));
        store.begin_upload(&meta.id);
        assert!(matches!(store.dataset(&meta.id), Err(ApiError::Conflict(_))));
        store.end_upload(&meta.id);
        assert!(matches!(store.job("nope"), Err(ApiError::NotFound(_))));
        assert!(matches!(store.explanation_bytes("../etc"), Err(ApiError::NotFound(_))));
    }

    #[test]
    fn upload_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let cmd = UploadConfig { oracle: Some("cmd:cat".into()), ..Default::default() };
        assert!(matches!(
            store.put_dataset(TOY8_CSV.as_bytes(), Some("label".into()), cmd),
            Err(ApiError::BadRequest(_))
        ));
        assert!(matches!(
            store.put_dataset(TOY8_CSV.as_bytes(), Some("nope".into()), UploadConfig::default()),
            Err(ApiError::BadRequest(_))
        ));
    }

    #[test]
    fn env_overrides_store_dir() {
        // only the absent case: tests run concurrently and must not mutate the environment
        if std::env::var_os(STORE_ENV).is_none() {
            assert_eq!(store_dir(Path::new("x")), PathBuf::from("x"));
        }
    }
}
