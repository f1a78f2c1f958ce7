//! Client for an external malware scanning service.
//!
//! The service speaks a small REST protocol: `GET {endpoint}/files/{sha256}`
//! looks up a digest, `POST {endpoint}/files` uploads a file and returns an
//! analysis id, and `GET {endpoint}/analyses/{id}` polls that analysis.
//! Every request carries the API key in an `x-apikey` header. Reports are
//! JSON objects with `engines_total`, `engines_flagged` and `labels`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const API_KEY_ENV: &str = "SCAN_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictSource {
    Remote,
    Cache,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalwareVerdict {
    pub sha256: String,
    pub engines_total: u32,
    pub engines_flagged: u32,
    pub labels: Vec<String>,
    pub fetched_at: String,
    pub source: VerdictSource,
    /// Why no counts are available, when the service could not answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MalwareVerdict {
    pub fn stub(sha256: &str) -> MalwareVerdict {
        MalwareVerdict {
            sha256: sha256.to_string(),
            engines_total: 0,
            engines_flagged: 0,
            labels: Vec::new(),
            fetched_at: now(),
            source: VerdictSource::Stub,
            error: None,
        }
    }

    fn failed(sha256: &str, error: String) -> MalwareVerdict {
        MalwareVerdict {
            source: VerdictSource::Remote,
            error: Some(error),
            ..MalwareVerdict::stub(sha256)
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScanServiceError {
    #[error("scanning service unreachable: {0}")]
    NetworkUnavailable(String),
    #[error("scanning service rejected the API key")]
    AuthFailed,
    #[error("scanning service quota exceeded")]
    QuotaExceeded,
    #[error("malformed response from scanning service: {0}")]
    RemoteMalformedResponse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteReport {
    pub engines_total: u32,
    pub engines_flagged: u32,
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Analysis {
    Pending,
    Done(RemoteReport),
}

pub trait ScanService: Send + Sync {
    /// `None` when the service has never seen the digest.
    fn lookup(&self, sha256: &str) -> Result<Option<RemoteReport>, ScanServiceError>;
    /// Returns the analysis id.
    fn upload(&self, sha256: &str, bytes: &[u8]) -> Result<String, ScanServiceError>;
    fn poll(&self, analysis_id: &str) -> Result<Analysis, ScanServiceError>;
}

pub struct HttpScanService {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct UploadResponse {
    id: String,
}

#[derive(Deserialize)]
struct AnalysisResponse {
    status: String,
    report: Option<RemoteReport>,
}

impl HttpScanService {
    pub fn new(endpoint: &str, api_key: &str, timeout: Duration) -> HttpScanService {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpScanService {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            agent,
        }
    }

    fn finish(
        result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<Option<String>, ScanServiceError> {
        let mut resp = result.map_err(|e| ScanServiceError::NetworkUnavailable(e.to_string()))?;
        match resp.status().as_u16() {
            200..=299 => resp
                .body_mut()
                .read_to_string()
                .map(Some)
                .map_err(|e| ScanServiceError::NetworkUnavailable(e.to_string())),
            404 => Ok(None),
            401 | 403 => Err(ScanServiceError::AuthFailed),
            429 => Err(ScanServiceError::QuotaExceeded),
            s => Err(ScanServiceError::RemoteMalformedResponse(format!("HTTP status {s}"))),
        }
    }
}

fn decode<T: serde::de::DeserializeOwned>(body: &str) -> Result<T, ScanServiceError> {
    serde_json::from_str(body).map_err(|e| ScanServiceError::RemoteMalformedResponse(e.to_string()))
}

impl ScanService for HttpScanService {
    fn lookup(&self, sha256: &str) -> Result<Option<RemoteReport>, ScanServiceError> {
        let url = format!("{}/files/{sha256}", self.endpoint);
        let body = Self::finish(self.agent.get(&url).header("x-apikey", &self.api_key).call())?;
        body.map(|b| decode(&b)).transpose()
    }

    fn upload(&self, sha256: &str, bytes: &[u8]) -> Result<String, ScanServiceError> {
        let url = format!("{}/files", self.endpoint);
        let req = self
            .agent
            .post(&url)
            .header("x-apikey", &self.api_key)
            .header("x-sha256", sha256)
            .header("content-type", "application/octet-stream");
        let body = Self::finish(req.send(bytes))?
            .ok_or_else(|| ScanServiceError::RemoteMalformedResponse("upload endpoint not found".into()))?;
        Ok(decode::<UploadResponse>(&body)?.id)
    }

    fn poll(&self, analysis_id: &str) -> Result<Analysis, ScanServiceError> {
        let url = format!("{}/analyses/{analysis_id}", self.endpoint);
        let body = Self::finish(self.agent.get(&url).header("x-apikey", &self.api_key).call())?
            .ok_or_else(|| ScanServiceError::RemoteMalformedResponse(format!("unknown analysis {analysis_id}")))?;
        let a: AnalysisResponse = decode(&body)?;
        match (a.status.as_str(), a.report) {
            ("completed", Some(r)) => Ok(Analysis::Done(r)),
            ("completed", None) => Err(ScanServiceError::RemoteMalformedResponse(
                "completed analysis without a report".into(),
            )),
            _ => Ok(Analysis::Pending),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MalwareConfig {
    pub upload: bool,
    pub poll_attempts: u32,
    pub poll_interval: Duration,
    pub cache_dir: Option<PathBuf>,
}

impl Default for MalwareConfig {
    fn default() -> Self {
        MalwareConfig {
            upload: false,
            poll_attempts: 10,
            poll_interval: Duration::from_secs(15),
            cache_dir: None,
        }
    }
}

/// Malware lookups with a disk cache. Safe to share between scan tasks; at
/// most one lookup per digest is in flight.
pub struct MalwareClient {
    service: Option<Arc<dyn ScanService>>,
    config: MalwareConfig,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    service_calls: AtomicUsize,
}

impl MalwareClient {
    pub fn stub() -> MalwareClient {
        MalwareClient {
            service: None,
            config: MalwareConfig::default(),
            locks: Mutex::default(),
            service_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_service(service: Arc<dyn ScanService>, config: MalwareConfig) -> MalwareClient {
        MalwareClient {
            service: Some(service),
            config,
            ..MalwareClient::stub()
        }
    }

    pub fn is_stub(&self) -> bool {
        self.service.is_none()
    }

    /// Number of requests sent to the scanning service so far.
    pub fn service_calls(&self) -> usize {
        self.service_calls.load(Ordering::SeqCst)
    }

    pub fn scan(&self, sha256: &str, bytes: &[u8]) -> MalwareVerdict {
        let Some(service) = &self.service else {
            return MalwareVerdict::stub(sha256);
        };
        let lock = {
            let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
            locks.entry(sha256.to_string()).or_default().clone()
        };
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());

        if let Some(v) = self.read_cache(sha256) {
            return v;
        }
        match self.fetch(service.as_ref(), sha256, bytes) {
            Ok(Some(report)) => {
                let verdict = MalwareVerdict {
                    sha256: sha256.to_string(),
                    engines_total: report.engines_total,
                    engines_flagged: report.engines_flagged,
                    labels: report.labels,
                    fetched_at: now(),
                    source: VerdictSource::Remote,
                    error: None,
                };
                self.write_cache(&verdict);
                verdict
            }
            Ok(None) => MalwareVerdict::failed(sha256, "digest unknown to the scanning service".into()),
            Err(e) => MalwareVerdict::failed(sha256, e.to_string()),
        }
    }

    fn call<T>(&self, f: impl FnOnce() -> Result<T, ScanServiceError>) -> Result<T, ScanServiceError> {
        self.service_calls.fetch_add(1, Ordering::SeqCst);
        f()
    }

    fn fetch(&self, service: &dyn ScanService, sha256: &str, bytes: &[u8]) -> Result<Option<RemoteReport>, ScanServiceError> {
        let report = match self.call(|| service.lookup(sha256))? {
            Some(r) => Some(r),
            None if self.config.upload => {
                let id = self.call(|| service.upload(sha256, bytes))?;
                let mut done = None;
                for attempt in 0..self.config.poll_attempts {
                    if attempt > 0 {
                        std::thread::sleep(self.config.poll_interval);
                    }
                    if let Analysis::Done(r) = self.call(|| service.poll(&id))? {
                        done = Some(r);
                        break;
                    }
                }
                if done.is_none() {
                    return Err(ScanServiceError::NetworkUnavailable(format!("analysis {id} still pending")));
                }
                done
            }
            None => None,
        };
        if let Some(r) = &report {
            if r.engines_flagged > r.engines_total {
                return Err(ScanServiceError::RemoteMalformedResponse(format!(
                    "{} of {} engines flagged",
                    r.engines_flagged, r.engines_total
                )));
            }
        }
        Ok(report)
    }

    fn cache_path(&self, sha256: &str) -> Option<PathBuf> {
        let valid = sha256.len() == 64 && sha256.bytes().all(|b| b.is_ascii_hexdigit());
        valid
            .then(|| self.config.cache_dir.as_ref().map(|d| d.join(format!("{sha256}.json"))))
            .flatten()
    }

    fn read_cache(&self, sha256: &str) -> Option<MalwareVerdict> {
        let text = std::fs::read_to_string(self.cache_path(sha256)?).ok()?;
        let mut v: MalwareVerdict = serde_json::from_str(&text).ok()?;
        (v.sha256 == sha256).then(|| {
            v.source = VerdictSource::Cache;
            v
        })
    }

    fn write_cache(&self, verdict: &MalwareVerdict) {
        let Some(path) = self.cache_path(&verdict.sha256) else { return };
        let Some(dir) = path.parent() else { return };
        if std::fs::create_dir_all(dir).is_err() {
            return;
        }
        let tmp = path.with_extension("json.tmp");
        let json = serde_json::to_string_pretty(verdict).expect("verdict serializes");
        if std::fs::write(&tmp, json).is_ok() {
            let _ = std::fs::rename(&tmp, &path);
        }
    }
}
