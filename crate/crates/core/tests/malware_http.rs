mod oracles;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use droidsift::malware::{HttpScanService, MalwareClient, MalwareConfig, VerdictSource};
use oracles::mock_http::MockServer;

const KNOWN: &str = "aa00000000000000000000000000000000000000000000000000000000000001";
const UNKNOWN: &str = "bb00000000000000000000000000000000000000000000000000000000000002";
const REPORT: &str = r#"{"engines_total":70,"engines_flagged":3,"labels":["Android.Adware.Gen","PUA"]}"#;

fn service_server() -> MockServer {
    let polls = AtomicUsize::new(0);
    MockServer::start(move |req| {
        if req.header("x-apikey") != Some("secret") {
            return (401, String::new());
        }
        match (req.method.as_str(), req.path.as_str()) {
            ("GET", p) if p == format!("/files/{KNOWN}") => (200, REPORT.into()),
            ("GET", p) if p.starts_with("/files/") => (404, String::new()),
            ("POST", "/files") => (200, r#"{"id":"an-1"}"#.into()),
            ("GET", "/analyses/an-1") => {
                if polls.fetch_add(1, Ordering::SeqCst) == 0 {
                    (200, r#"{"status":"queued"}"#.into())
                } else {
                    (200, format!(r#"{{"status":"completed","report":{REPORT}}}"#))
                }
            }
            _ => (400, String::new()),
        }
    })
}

fn client(url: &str, key: &str, config: MalwareConfig) -> MalwareClient {
    MalwareClient::with_service(Arc::new(HttpScanService::new(url, key, Duration::from_secs(5))), config)
}

fn quick(upload: bool) -> MalwareConfig {
    MalwareConfig {
        upload,
        poll_attempts: 3,
        poll_interval: Duration::from_millis(10),
        cache_dir: None,
    }
}

#[test]
fn known_digest_yields_three_of_seventy() {
    let server = service_server();
    let v = client(&server.url, "secret", quick(false)).scan(KNOWN, b"apk");
    assert_eq!(v.error, None);
    assert_eq!((v.engines_flagged, v.engines_total), (3, 70));
    assert_eq!(v.labels, ["Android.Adware.Gen", "PUA"]);
    assert_eq!(v.source, VerdictSource::Remote);
    assert!(!v.fetched_at.is_empty());
    assert_eq!(server.requests()[0].path, format!("/files/{KNOWN}"));
}

#[test]
fn unknown_digest_without_upload_is_an_error_verdict() {
    let server = service_server();
    let v = client(&server.url, "secret", quick(false)).scan(UNKNOWN, b"apk");
    assert!(v.error.is_some());
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn unknown_digest_with_upload_polls_until_complete() {
    let server = service_server();
    let c = client(&server.url, "secret", quick(true));
    let v = c.scan(UNKNOWN, b"apk bytes");
    assert_eq!(v.error, None);
    assert_eq!(v.engines_flagged, 3);
    let reqs = server.requests();
    let paths: Vec<&str> = reqs.iter().map(|r| r.path.as_str()).collect();
    assert_eq!(paths, [&format!("/files/{UNKNOWN}")[..], "/files", "/analyses/an-1", "/analyses/an-1"]);
    assert_eq!(reqs[1].body, b"apk bytes");
    assert_eq!(reqs[1].header("x-sha256"), Some(UNKNOWN));
    assert_eq!(c.service_calls(), 4);
}

#[test]
fn rejected_key_is_reported_not_raised() {
    let server = service_server();
    let v = client(&server.url, "wrong", quick(false)).scan(KNOWN, b"apk");
    assert!(v.error.as_deref().unwrap().contains("API key"));
    assert_eq!(v.engines_total, 0);
}

#[test]
fn quota_and_server_errors_are_reported() {
    let quota = MockServer::start(|_| (429, String::new()));
    let v = client(&quota.url, "k", quick(false)).scan(KNOWN, b"");
    assert!(v.error.as_deref().unwrap().contains("quota"));

    let broken = MockServer::refusing();
    let v = client(&broken.url, "k", quick(false)).scan(KNOWN, b"");
    assert!(v.error.is_some());

    let garbage = MockServer::start(|_| (200, "{not json".into()));
    let v = client(&garbage.url, "k", quick(false)).scan(KNOWN, b"");
    assert!(v.error.as_deref().unwrap().contains("malformed"));
}

#[test]
fn inconsistent_counts_are_malformed() {
    let server = MockServer::start(|_| (200, r#"{"engines_total":2,"engines_flagged":5}"#.into()));
    let v = client(&server.url, "k", quick(false)).scan(KNOWN, b"");
    assert!(v.error.as_deref().unwrap().contains("malformed"));
}

#[test]
fn unreachable_service_degrades_to_error_verdict() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let v = client(&format!("http://127.0.0.1:{port}"), "k", quick(false)).scan(KNOWN, b"");
    assert!(v.error.as_deref().unwrap().contains("unreachable"));
}

#[test]
fn cached_verdict_avoids_second_request() {
    let server = service_server();
    let dir = tempfile::tempdir().unwrap();
    let config = MalwareConfig {
        cache_dir: Some(dir.path().to_path_buf()),
        ..quick(false)
    };
    let first = client(&server.url, "secret", config.clone()).scan(KNOWN, b"apk");
    let second = client(&server.url, "secret", config).scan(KNOWN, b"apk");
    assert_eq!(first.source, VerdictSource::Remote);
    assert_eq!(second.source, VerdictSource::Cache);
    assert_eq!(second.engines_flagged, 3);
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn stub_client_never_connects() {
    let server = service_server();
    let stub = MalwareClient::stub();
    let v = stub.scan(KNOWN, b"apk");
    assert_eq!(v.source, VerdictSource::Stub);
    assert_eq!(stub.service_calls(), 0);
    assert_eq!(server.connections(), 0);
}
