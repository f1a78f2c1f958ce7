//! Compares scan results against what each fixture planted.

use droidsift::report::{scan_bytes, ScanConfig, ScanReport};
use droidsift::rules::Location;
use droidsift::taint::StepKind;
use droidsift_testkit::fixtures::{ExpectedFinding, ExpectedFlow, ExpectedStep, Fixture, Site};

pub fn observed_findings(r: &ScanReport) -> Vec<ExpectedFinding> {
    let mut v: Vec<ExpectedFinding> = r
        .findings
        .iter()
        .map(|f| ExpectedFinding {
            rule_id: f.rule_id.clone(),
            site: match &f.location {
                Location::Code { method, offset, .. } => Site::Code {
                    method: method.clone(),
                    offset: *offset,
                },
                Location::Manifest { component, .. } => Site::Manifest {
                    component: component.clone(),
                },
            },
            pii_tag: if f.rule_id == "LOG-PII" { f.pii_tag.clone() } else { None },
        })
        .collect();
    v.sort();
    v
}

pub fn observed_flows(r: &ScanReport) -> Vec<ExpectedFlow> {
    let mut v: Vec<ExpectedFlow> = r
        .flows
        .iter()
        .map(|f| ExpectedFlow {
            source_method: f.source.method.clone(),
            source_site: f.source.site,
            sink_method: f.sink.method.clone(),
            sink_site: f.sink.site,
            channel: f.channel.to_string(),
            pii_tag: f.pii_tag.clone(),
            chain: f
                .call_chain
                .iter()
                .map(|s| ExpectedStep {
                    kind: match s.kind {
                        StepKind::Call => "call",
                        StepKind::Return => "return",
                        StepKind::Field => "field",
                        StepKind::Sink => "sink",
                    }
                    .into(),
                    caller: s.caller.clone(),
                    callee: s.callee.clone(),
                    site: s.site,
                })
                .collect(),
        })
        .collect();
    v.sort();
    v
}

pub fn scan(f: &Fixture) -> Result<ScanReport, droidsift::report::ScanFailure> {
    scan_bytes(&f.file_name(), &f.bytes, &ScanConfig::builtin())
}

pub fn check(f: &Fixture) {
    let report = match (scan(f), &f.failure_stage) {
        (Err(e), Some(stage)) => {
            let json = serde_json::to_value(&e).unwrap();
            assert_eq!(json["stage"], stage.as_str(), "{}", f.name);
            return;
        }
        (Ok(_), Some(_)) => panic!("{}: scan should fail", f.name),
        (Err(e), None) => panic!("{}: {e}", f.name),
        (Ok(r), None) => r,
    };
    assert_eq!(observed_findings(&report), f.findings, "{} findings", f.name);
    let flows = observed_flows(&report);
    assert_eq!(flows, f.flows, "{} flows", f.name);
    let mut trackers: Vec<String> = report.trackers.iter().map(|t| t.name.clone()).collect();
    trackers.sort();
    assert_eq!(trackers, f.trackers, "{} trackers", f.name);
    for d in &f.decoys {
        assert!(
            !report.findings.iter().any(|x| x.rule_id == d.rule_id
                && matches!(&x.location, Location::Code { method, offset, .. } if *method == d.method && *offset == d.offset)),
            "{}: decoy fired: {d:?}",
            f.name
        );
    }
    for n in &f.non_flows {
        assert!(
            !report
                .flows
                .iter()
                .any(|x| x.source.method == n.source_method && x.source.site == n.source_site),
            "{}: unexpected flow {n:?}",
            f.name
        );
    }
}

