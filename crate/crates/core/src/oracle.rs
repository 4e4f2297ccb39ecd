//! Black-box labels from a dataset column or an external predictor.
//!
//! External predictors speak one line of JSON per request,
//! `{"instances":[{feature: value, ...}, ...]}`, and answer with one line
//! `{"labels":[...]}`. Subprocess predictors read requests on stdin and write
//! responses on stdout; HTTP predictors accept `POST /predict`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde_json::{json, Map, Value as Json};

use crate::data::{FeatureTable, RawTable};
use crate::error::{Error, Result};

pub type Instance = Map<String, Json>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleMode {
    /// Labels are read from this column of the input table.
    Column(String),
    /// Shell command line of a long-running predictor process.
    Subprocess(String),
    /// Base URL (or full `/predict` URL) of a predictor service.
    Http(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSource {
    pub mode: OracleMode,
    pub timeout: Duration,
    pub batch_size: usize,
}

impl OracleSource {
    pub fn column(name: impl Into<String>) -> Self {
        OracleSource {
            mode: OracleMode::Column(name.into()),
            timeout: Duration::from_secs(30),
            batch_size: 256,
        }
    }

    /// Parse the `--oracle` flag: `column`, `column:NAME`, `cmd:COMMAND` or `http:URL`.
    pub fn parse(spec: &str, label_column: Option<&str>) -> Result<Self> {
        let mode = if spec == "column" {
            let name = label_column.ok_or_else(|| {
                Error::Config("oracle 'column' needs a label column".into())
            })?;
            OracleMode::Column(name.to_string())
        } else if let Some(name) = spec.strip_prefix("column:") {
            OracleMode::Column(name.to_string())
        } else if let Some(cmd) = spec.strip_prefix("cmd:") {
            OracleMode::Subprocess(cmd.to_string())
        } else if let Some(url) = spec.strip_prefix("http:") {
            // accept both "http:localhost:9000" and "http:http://localhost:9000"
            let url = if url.starts_with("http://") || url.starts_with("https://") {
                url.to_string()
            } else {
                format!("http://{}", url.trim_start_matches("//"))
            };
            OracleMode::Http(url)
        } else {
            return Err(Error::Config(format!("unknown oracle '{spec}'")));
        };
        let src = OracleSource {
            mode,
            ..OracleSource::column("")
        };
        src.validate()?;
        Ok(src)
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout.is_zero() {
            return Err(Error::Config("oracle timeout must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("oracle batch size must be >= 1".into()));
        }
        match &self.mode {
            OracleMode::Column(c) if c.is_empty() => {
                Err(Error::Config("oracle column name is empty".into()))
            }
            OracleMode::Subprocess(c) if c.trim().is_empty() => {
                Err(Error::Config("oracle command is empty".into()))
            }
            _ => Ok(()),
        }
    }

    /// Column excluded from the features, if any.
    pub fn label_column(&self) -> Option<&str> {
        match &self.mode {
            OracleMode::Column(c) => Some(c),
            _ => None,
        }
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A labeling client with a per-run cache keyed by row content.
pub struct Oracle {
    src: OracleSource,
    cache: Mutex<HashMap<String, String>>,
    process: Mutex<Option<Process>>,
}

impl Oracle {
    pub fn new(src: OracleSource) -> Result<Self> {
        src.validate()?;
        Ok(Oracle {
            src,
            cache: Mutex::new(HashMap::new()),
            process: Mutex::new(None),
        })
    }

    pub fn source(&self) -> &OracleSource {
        &self.src
    }

    /// One label per feature row, in row order.
    pub fn label_table(&self, table: &RawTable, features: &FeatureTable) -> Result<Vec<String>> {
        match &self.src.mode {
            OracleMode::Column(name) => table.column(name),
            _ => {
                let rows: Vec<Instance> = (0..features.len()).map(|i| features.row_json(i)).collect();
                self.label_all(&rows)
            }
        }
    }

    /// Label instances through the external predictor. Rows already seen in
    /// this run are answered from the cache.
    pub fn label_all(&self, rows: &[Instance]) -> Result<Vec<String>> {
        if let OracleMode::Column(_) = self.src.mode {
            return Err(Error::Config(
                "column oracle labels come from the table, not from instances".into(),
            ));
        }
        let keys: Vec<String> = rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("JSON map serializes"))
            .collect();
        let mut pending: Vec<usize> = Vec::new();
        {
            let cache = self.cache.lock().unwrap();
            let mut queued = std::collections::HashSet::new();
            for (i, k) in keys.iter().enumerate() {
                if !cache.contains_key(k) && queued.insert(k.as_str()) {
                    pending.push(i);
                }
            }
        }
        for chunk in pending.chunks(self.src.batch_size) {
            let batch: Vec<&Instance> = chunk.iter().map(|&i| &rows[i]).collect();
            let labels = self.request(&batch)?;
            let mut cache = self.cache.lock().unwrap();
            for (&i, label) in chunk.iter().zip(labels) {
                // first answer wins so repeated rows stay consistent
                cache.entry(keys[i].clone()).or_insert(label);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(keys.iter().map(|k| cache[k].clone()).collect())
    }

    fn request(&self, batch: &[&Instance]) -> Result<Vec<String>> {
        let body = json!({ "instances": batch }).to_string();
        let payload = match &self.src.mode {
            OracleMode::Subprocess(cmd) => self.request_subprocess(cmd, &body)?,
            OracleMode::Http(url) => self.request_http(url, &body)?,
            OracleMode::Column(_) => unreachable!(),
        };
        parse_labels(&payload, batch.len())
    }

    fn request_subprocess(&self, cmd: &str, body: &str) -> Result<String> {
        let mut guard = self.process.lock().unwrap();
        if guard.is_none() {
            *guard = Some(spawn(cmd)?);
        }
        let proc = guard.as_mut().unwrap();
        let sent = writeln!(proc.stdin, "{body}").and_then(|_| proc.stdin.flush());
        if let Err(e) = sent {
            *guard = None;
            return Err(Error::OracleUnavailable(format!("predictor '{cmd}': {e}")));
        }
        match proc.lines.recv_timeout(self.src.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => {
                *guard = None;
                Err(Error::OracleUnavailable(format!("predictor '{cmd}': {e}")))
            }
            Err(RecvTimeoutError::Timeout) => {
                *guard = None;
                Err(Error::OracleUnavailable(format!(
                    "predictor '{cmd}' did not answer within {:?}",
                    self.src.timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                *guard = None;
                Err(Error::OracleUnavailable(format!(
                    "predictor '{cmd}' closed its output"
                )))
            }
        }
    }

    fn request_http(&self, url: &str, body: &str) -> Result<String> {
        let url = if url.trim_end_matches('/').ends_with("/predict") {
            url.to_string()
        } else {
            format!("{}/predict", url.trim_end_matches('/'))
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.src.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .post(&url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| Error::OracleUnavailable(format!("POST {url}: {e}")))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::OracleUnavailable(format!("POST {url}: {e}")))?;
        if status != 200 {
            return Err(Error::Protocol {
                msg: format!("POST {url} returned status {status}"),
                payload: truncate(&text),
            });
        }
        Ok(text)
    }
}

fn spawn(cmd: &str) -> Result<Process> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::OracleUnavailable(format!("cannot start '{cmd}': {e}")))?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    Ok(Process {
        child,
        stdin,
        lines: rx,
    })
}

fn truncate(s: &str) -> String {
    const MAX: usize = 200;
    if s.chars().count() <= MAX {
        s.to_string()
    } else {
        let cut: String = s.chars().take(MAX).collect();
        format!("{cut}...")
    }
}

/// Parse a `{"labels":[...]}` response carrying exactly `expected` labels.
pub fn parse_labels(payload: &str, expected: usize) -> Result<Vec<String>> {
    let protocol = |msg: &str| Error::Protocol {
        msg: msg.to_string(),
        payload: truncate(payload.trim()),
    };
    let v: Json = serde_json::from_str(payload.trim()).map_err(|_| protocol("response is not JSON"))?;
    let labels = v
        .get("labels")
        .and_then(Json::as_array)
        .ok_or_else(|| protocol("response lacks a \"labels\" array"))?;
    if labels.len() != expected {
        return Err(protocol(&format!(
            "expected {expected} labels, got {}",
            labels.len()
        )));
    }
    labels
        .iter()
        .map(|l| match l {
            Json::String(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
            Json::Number(n) if n.is_i64() || n.is_u64() => Ok(n.to_string()),
            Json::Bool(b) => Ok(b.to_string()),
            other => Err(Error::Label(format!("unsupported label value {other}"))),
        })
        .collect()
}
