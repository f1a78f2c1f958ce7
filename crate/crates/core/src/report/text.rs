use std::fmt::Write;

use super::ScanReport;
use crate::malware::VerdictSource;
use crate::rules::Location;

/// Human-readable summary of a report.
pub fn render_text(r: &ScanReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} ({})", r.apk.path, r.apk.package);
    let _ = writeln!(s, "sha256 {}", r.apk.sha256);

    let _ = writeln!(s, "\nFindings: {}", r.findings.len());
    for f in &r.findings {
        let at = match &f.location {
            Location::Code { method, offset, .. } => format!("{method} @{offset:#x}"),
            Location::Manifest { path, component } => match component {
                Some(c) => format!("{path} ({c})"),
                None => path.clone(),
            },
        };
        let _ = write!(s, "  [{:?}] {} at {at}: {}", f.severity, f.rule_id, f.evidence);
        if let Some(tag) = &f.pii_tag {
            let _ = write!(s, " (pii: {tag})");
        }
        s.push('\n');
    }

    let _ = writeln!(s, "\nFlows: {}", r.flows.len());
    for f in &r.flows {
        let _ = writeln!(s, "  {} -> {} [{}]", f.source.pattern, f.sink.pattern, f.channel);
        for step in &f.call_chain {
            let _ = writeln!(s, "      {:?} {} -> {} @{:#x}", step.kind, step.caller, step.callee, step.site);
        }
    }

    let _ = writeln!(s, "\nTrackers: {}", r.trackers.len());
    for t in &r.trackers {
        let _ = writeln!(s, "  {} ({} classes)", t.name, t.matched_classes);
    }

    let m = &r.malware;
    match (&m.error, m.source) {
        (Some(e), _) => {
            let _ = writeln!(s, "\nMalware scan: unavailable ({e})");
        }
        (None, VerdictSource::Stub) => {
            let _ = writeln!(s, "\nMalware scan: disabled");
        }
        (None, _) => {
            let _ = writeln!(
                s,
                "\nMalware scan: {}/{} engines flagged{}",
                m.engines_flagged,
                m.engines_total,
                if m.labels.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", m.labels.join(", "))
                }
            );
        }
    }

    if !r.warnings.is_empty() {
        let _ = writeln!(s, "\nWarnings: {}", r.warnings.len());
        for w in &r.warnings {
            let _ = writeln!(s, "  {}: {}", w.origin, w.message);
        }
    }
    s
}
