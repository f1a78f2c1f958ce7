//! Miniature APKs with planted defects and the results they should produce.
//!
//! Expectations are written down while the fixture is built: code sites come
//! from the assembler's symbol listing, never from the scanner.

use std::collections::BTreeMap;

use crate::apk::{ApkBuilder, Method};
use crate::axml::resource_id;
use crate::dex::{self, RefSym, Symbols};

/// Where a finding is reported.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Site {
    Manifest { component: Option<String> },
    Code { method: String, offset: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExpectedFinding {
    pub rule_id: String,
    pub site: Site,
    pub pii_tag: Option<String>,
}

/// Code that looks like a rule match but must not produce a finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoy {
    pub rule_id: String,
    pub method: String,
    pub offset: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExpectedStep {
    /// `call`, `return`, `field` or `sink`.
    pub kind: String,
    pub caller: String,
    pub callee: String,
    pub site: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExpectedFlow {
    pub source_method: String,
    pub source_site: u32,
    pub sink_method: String,
    pub sink_site: u32,
    pub channel: String,
    pub pii_tag: Option<String>,
    pub chain: Vec<ExpectedStep>,
}

/// A planted source/sink pair that must not become a flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonFlow {
    pub source_method: String,
    pub source_site: u32,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub package: String,
    pub bytes: Vec<u8>,
    pub findings: Vec<ExpectedFinding>,
    pub decoys: Vec<Decoy>,
    pub flows: Vec<ExpectedFlow>,
    pub non_flows: Vec<NonFlow>,
    /// Tracker names, sorted.
    pub trackers: Vec<String>,
    /// Pipeline stage at which the scan must fail, if it must.
    pub failure_stage: Option<String>,
    /// Symbol listing of each DEX entry.
    pub dex_symbols: Vec<(String, Symbols)>,
}

impl Fixture {
    pub fn file_name(&self) -> String {
        format!("{}.apk", self.name)
    }

    /// Severity-independent exit status the report should carry.
    pub fn has_code_defects(&self) -> bool {
        !self.findings.is_empty() || !self.flows.is_empty()
    }
}

pub const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";

fn fill(template: &str, vars: &[(&str, String)]) -> String {
    let mut s = template.to_string();
    for (k, v) in vars {
        s = s.replace(&format!("@{k}@"), v);
    }
    assert!(!s.contains("@P@"), "unfilled placeholder");
    s
}

fn descriptor_path(package: &str) -> String {
    package.replace('.', "/")
}

struct Builder {
    name: String,
    package: String,
    apk: ApkBuilder,
    symbols: Vec<(String, Symbols)>,
    findings: Vec<ExpectedFinding>,
    decoys: Vec<Decoy>,
    flows: Vec<ExpectedFlow>,
    non_flows: Vec<NonFlow>,
    trackers: Vec<String>,
    failure_stage: Option<String>,
}

impl Builder {
    fn new(name: &str) -> Builder {
        Builder {
            name: name.to_string(),
            package: format!("com.fx.{}", name.replace('-', "")),
            apk: ApkBuilder::new(),
            symbols: Vec::new(),
            findings: Vec::new(),
            decoys: Vec::new(),
            flows: Vec::new(),
            non_flows: Vec::new(),
            trackers: Vec::new(),
            failure_stage: None,
        }
    }

    fn pkg_path(&self) -> String {
        descriptor_path(&self.package)
    }

    fn class(&self, simple: &str) -> String {
        format!("L{}/{simple};", self.pkg_path())
    }

    /// `application_attrs` and `components` are spliced into a manifest.
    fn manifest(mut self, application_attrs: &str, components: &str) -> Builder {
        let xml = format!(
            r#"<manifest xmlns:android="{ANDROID_NS}" package="{pkg}" android:versionCode="1" android:versionName="1.0">
  <uses-sdk android:minSdkVersion="21" android:targetSdkVersion="30"/>
  <uses-permission android:name="android.permission.INTERNET"/>
  <application android:label="{name}" {application_attrs}>
{components}
  </application>
</manifest>"#,
            pkg = self.package,
            name = self.name,
        );
        self.apk = self.apk.manifest(&xml);
        self
    }

    /// Safe application flags: no backup, not debuggable, no clear text.
    fn safe_manifest(self, components: &str) -> Builder {
        self.manifest(
            r#"android:allowBackup="false" android:debuggable="false" android:usesCleartextTraffic="false""#,
            components,
        )
    }

    fn main_activity_component() -> &'static str {
        r#"    <activity android:name=".MainActivity" android:exported="false"/>"#
    }

    fn dex(mut self, entry: &str, smali: &str) -> Builder {
        let smali = fill(smali, &[("P", self.pkg_path())]);
        let assembled = dex::assemble(&smali).unwrap_or_else(|e| panic!("{} {entry}: {e}", self.name));
        self.apk = self.apk.entry(entry, assembled.bytes, Method::Deflated);
        self.symbols.push((entry.to_string(), assembled.symbols));
        self
    }

    fn layout(mut self, name: &str, xml: &str) -> Builder {
        self.apk = self.apk.layout(name, xml);
        self
    }

    fn method_sig(&self, class: &str, name: &str) -> String {
        let desc = self.class(class);
        for (_, s) in &self.symbols {
            if let Some(m) = s.method(&desc, name) {
                return format!("{}->{}{}", m.class, m.name, m.descriptor);
            }
        }
        panic!("{}: no method {desc}->{name}", self.name)
    }

    /// Byte offset of the `nth` instruction in `class.method` whose reference
    /// contains `needle`.
    fn site(&self, class: &str, method: &str, needle: &str, nth: usize) -> u32 {
        let desc = self.class(class);
        for (_, s) in &self.symbols {
            let Some(m) = s.method(&desc, method) else { continue };
            let code = m.code.as_ref().expect("method has code");
            let hits: Vec<u32> = code
                .insns
                .iter()
                .filter(|i| match &i.reference {
                    Some(RefSym::String(x) | RefSym::Type(x) | RefSym::Field(x) | RefSym::Method(x)) => {
                        x.contains(needle)
                    }
                    None => false,
                })
                .map(|i| i.offset)
                .collect();
            return *hits
                .get(nth)
                .unwrap_or_else(|| panic!("{}: {desc}->{method} has no reference #{nth} to {needle}", self.name));
        }
        panic!("{}: no method {desc}->{method}", self.name)
    }

    fn finding(mut self, rule: &str, class: &str, method: &str, needle: &str, nth: usize) -> Builder {
        let site = Site::Code {
            method: self.method_sig(class, method),
            offset: self.site(class, method, needle, nth),
        };
        self.findings.push(ExpectedFinding {
            rule_id: rule.into(),
            site,
            pii_tag: None,
        });
        self
    }

    fn pii_finding(mut self, rule: &str, class: &str, method: &str, needle: &str, tag: &str) -> Builder {
        self = self.finding(rule, class, method, needle, 0);
        self.findings.last_mut().expect("just pushed").pii_tag = Some(tag.into());
        self
    }

    fn manifest_finding(mut self, rule: &str, component: Option<&str>) -> Builder {
        let component = component.map(|c| format!("{}{c}", self.package));
        self.findings.push(ExpectedFinding {
            rule_id: rule.into(),
            site: Site::Manifest { component },
            pii_tag: None,
        });
        self
    }

    fn decoy(mut self, rule: &str, class: &str, method: &str, needle: &str, nth: usize, reason: &str) -> Builder {
        self.decoys.push(Decoy {
            rule_id: rule.into(),
            method: self.method_sig(class, method),
            offset: self.site(class, method, needle, nth),
            reason: reason.into(),
        });
        self
    }

    fn non_flow(mut self, class: &str, method: &str, needle: &str, reason: &str) -> Builder {
        self.non_flows.push(NonFlow {
            source_method: self.method_sig(class, method),
            source_site: self.site(class, method, needle, 0),
            reason: reason.into(),
        });
        self
    }

    fn trackers(mut self, names: &[&str]) -> Builder {
        self.trackers = names.iter().map(|s| s.to_string()).collect();
        self.trackers.sort();
        self
    }

    fn build(mut self) -> Fixture {
        self.findings.sort();
        self.flows.sort();
        Fixture {
            bytes: self.apk.build(),
            name: self.name,
            package: self.package,
            findings: self.findings,
            decoys: self.decoys,
            flows: self.flows,
            non_flows: self.non_flows,
            trackers: self.trackers,
            failure_stage: self.failure_stage,
            dex_symbols: self.symbols,
        }
    }
}

/// Describes one step of an expected chain as `(kind, caller method,
/// callee, site)` with methods given as `Class.method` of the fixture.
struct FlowSpec<'a> {
    source: (&'a str, &'a str, &'a str),
    sink: (&'a str, &'a str, &'a str),
    channel: &'a str,
    pii_tag: Option<&'a str>,
}

impl Builder {
    fn sig_of(&self, cm: &str) -> String {
        let (c, m) = cm.split_once('.').expect("Class.method");
        self.method_sig(c, m)
    }

    fn site_of(&self, cm: &str, needle: &str) -> u32 {
        let (c, m) = cm.split_once('.').expect("Class.method");
        self.site(c, m, needle, 0)
    }

    /// `steps` are `(kind, caller, callee, needle at the caller site)`; the
    /// sink step is appended from `spec.sink`.
    fn flow(mut self, spec: FlowSpec<'_>, steps: &[(&str, &str, &str, &str)]) -> Builder {
        let mut chain: Vec<ExpectedStep> = steps
            .iter()
            .map(|(kind, caller, callee, needle)| ExpectedStep {
                kind: kind.to_string(),
                caller: self.sig_of(caller),
                callee: self.sig_of(callee),
                site: self.site_of(caller, needle),
            })
            .collect();
        let (sink_class, sink_method, sink_callee) = spec.sink;
        let sink_cm = format!("{sink_class}.{sink_method}");
        let sink_site = self.site_of(&sink_cm, sink_callee);
        chain.push(ExpectedStep {
            kind: "sink".into(),
            caller: self.sig_of(&sink_cm),
            callee: sink_callee.to_string(),
            site: sink_site,
        });
        let (src_class, src_method, src_callee) = spec.source;
        let src_cm = format!("{src_class}.{src_method}");
        self.flows.push(ExpectedFlow {
            source_method: self.sig_of(&src_cm),
            source_site: self.site_of(&src_cm, src_callee),
            sink_method: self.sig_of(&sink_cm),
            sink_site,
            channel: spec.channel.into(),
            pii_tag: spec.pii_tag.map(Into::into),
            chain,
        });
        self
    }
}

const INIT: &str = r#"
.method public constructor <init>()V
    .registers 1
    invoke-direct {p0}, Landroid/app/Activity;-><init>()V
    return-void
.end method
"#;

fn activity(body: &str) -> String {
    format!(
        ".class public L@P@/MainActivity;\n.super Landroid/app/Activity;\n.source \"MainActivity.java\"\n{INIT}\n{body}"
    )
}

const ON_CREATE_PLAIN: &str = r#"
.method protected onCreate(Landroid/os/Bundle;)V
    .registers 2
    invoke-super {p0, p1}, Landroid/app/Activity;->onCreate(Landroid/os/Bundle;)V
    return-void
.end method
"#;

const SEND_SMS: &str = "Landroid/telephony/SmsManager;->sendTextMessage(Ljava/lang/String;Ljava/lang/String;Ljava/lang/String;Landroid/app/PendingIntent;Landroid/app/PendingIntent;)V";

/// Sends v5 as a text message; clobbers v2 to v7.
fn sms_send_v5() -> String {
    format!(
        r#"    invoke-static {{}}, Landroid/telephony/SmsManager;->getDefault()Landroid/telephony/SmsManager;
    move-result-object v2
    const-string v3, "+15550100"
    const/4 v4, 0
    const/4 v6, 0
    const/4 v7, 0
    invoke-virtual/range {{v2 .. v7}}, {SEND_SMS}
"#
    )
}

/// Puts the latitude of a fresh `Location` into v5 as a string; clobbers v0
/// and v1.
const LATITUDE_TO_V5: &str = r#"    new-instance v0, Landroid/location/Location;
    const-string v1, "gps"
    invoke-direct {v0, v1}, Landroid/location/Location;-><init>(Ljava/lang/String;)V
    invoke-virtual {v0}, Landroid/location/Location;->getLatitude()D
    move-result-wide v0
    invoke-static {v0, v1}, Ljava/lang/String;->valueOf(D)Ljava/lang/String;
    move-result-object v5
"#;

pub fn clean() -> Fixture {
    let body = r#"
.method protected onCreate(Landroid/os/Bundle;)V
    .registers 5
    invoke-super {p0, p1}, Landroid/app/Activity;->onCreate(Landroid/os/Bundle;)V
    const-string v0, "SHA-256"
    invoke-static {v0}, Ljava/security/MessageDigest;->getInstance(Ljava/lang/String;)Ljava/security/MessageDigest;
    move-result-object v0
    const-string v1, "MainActivity"
    const-string v2, "ready"
    invoke-static {v1, v2}, Landroid/util/Log;->d(Ljava/lang/String;Ljava/lang/String;)I
    return-void
.end method
"#;
    Builder::new("clean")
        .safe_manifest(Builder::main_activity_component())
        .dex("classes.dex", &activity(body))
        .decoy("LOG-PII", "MainActivity", "onCreate", "Log;->d", 0, "constant, non-personal log message")
        .decoy("CRYPTO-HASH", "MainActivity", "onCreate", "getInstance", 0, "SHA-256 is not a weak hash")
        .build()
}

pub fn crypto() -> Fixture {
    let body = r#"
.method protected onCreate(Landroid/os/Bundle;)V
    .registers 4
    invoke-super {p0, p1}, Landroid/app/Activity;->onCreate(Landroid/os/Bundle;)V
    const-string v0, "MD5"
    invoke-static {v0}, Ljava/security/MessageDigest;->getInstance(Ljava/lang/String;)Ljava/security/MessageDigest;
    move-result-object v0
    invoke-direct {p0}, L@P@/MainActivity;->encrypt()V
    const-string v1, "session"
    invoke-direct {p0, v1}, L@P@/MainActivity;->storeHash(Ljava/lang/String;)V
    return-void
.end method

.method private encrypt()V
    .registers 6
    const-string v0, "DES/ECB/PKCS5Padding"
    invoke-static {v0}, Ljavax/crypto/Cipher;->getInstance(Ljava/lang/String;)Ljavax/crypto/Cipher;
    move-result-object v0
    const-string v1, "RSA/ECB/OAEPWithSHA-256AndMGF1Padding"
    invoke-static {v1}, Ljavax/crypto/Cipher;->getInstance(Ljava/lang/String;)Ljavax/crypto/Cipher;
    move-result-object v1
    const/16 v2, 16
    new-array v2, v2, [B
    fill-array-data v2, :key
    new-instance v3, Ljavax/crypto/spec/SecretKeySpec;
    const-string v4, "AES"
    invoke-direct {v3, v2, v4}, Ljavax/crypto/spec/SecretKeySpec;-><init>([BLjava/lang/String;)V
    return-void
    :key
    .array-data 1
        0x10 0x21 0x32 0x43 0x54 0x65 0x76 0x07
        0x18 0x29 0x3a 0x4b 0x5c 0x6d 0x7e 0x0f
    .end array-data
.end method

.method private storeHash(Ljava/lang/String;)V
    .registers 6
    invoke-virtual {p1}, Ljava/lang/String;->hashCode()I
    move-result v0
    const-string v1, "prefs"
    const/4 v2, 0
    invoke-virtual {p0, v1, v2}, L@P@/MainActivity;->getSharedPreferences(Ljava/lang/String;I)Landroid/content/SharedPreferences;
    move-result-object v1
    invoke-interface {v1}, Landroid/content/SharedPreferences;->edit()Landroid/content/SharedPreferences$Editor;
    move-result-object v1
    const-string v2, "h"
    invoke-interface {v1, v2, v0}, Landroid/content/SharedPreferences$Editor;->putInt(Ljava/lang/String;I)Landroid/content/SharedPreferences$Editor;
    return-void
.end method

.method public legacyHash()V
    .registers 2
    const-string v0, "SHA-1"
    invoke-static {v0}, Ljava/security/MessageDigest;->getInstance(Ljava/lang/String;)Ljava/security/MessageDigest;
    return-void
.end method
"#;
    Builder::new("crypto")
        .safe_manifest(Builder::main_activity_component())
        .dex("classes.dex", &activity(body))
        .finding("CRYPTO-HASH", "MainActivity", "onCreate", "MessageDigest;->getInstance", 0)
        .finding("CRYPTO-HASH", "MainActivity", "storeHash", "hashCode", 0)
        .finding("CRYPTO-CIPHER", "MainActivity", "encrypt", "Cipher;->getInstance", 0)
        .finding("CRYPTO-HARDKEY", "MainActivity", "encrypt", "SecretKeySpec;-><init>", 0)
        .decoy("CRYPTO-CIPHER", "MainActivity", "encrypt", "Cipher;->getInstance", 1, "RSA with OAEP padding")
        .decoy("CRYPTO-HASH", "MainActivity", "legacyHash", "getInstance", 0, "dead code")
        .build()
}

pub fn random() -> Fixture {
    let body = r#"
.method protected onCreate(Landroid/os/Bundle;)V
    .registers 4
    invoke-super {p0, p1}, Landroid/app/Activity;->onCreate(Landroid/os/Bundle;)V
    new-instance v0, Ljava/util/Random;
    invoke-direct {v0}, Ljava/util/Random;-><init>()V
    invoke-virtual {v0}, Ljava/util/Random;->nextInt()I
    new-instance v1, Ljava/security/SecureRandom;
    invoke-direct {v1}, Ljava/security/SecureRandom;-><init>()V
    return-void
.end method

.class public L@P@/SyncService;
.super Landroid/app/Service;

.method public constructor <init>()V
    .registers 1
    invoke-direct {p0}, Landroid/app/Service;-><init>()V
    return-void
.end method

.method public onStartCommand(Landroid/content/Intent;II)I
    .registers 7
    new-instance v0, Ljava/security/SecureRandom;
    invoke-direct {v0}, Ljava/security/SecureRandom;-><init>()V
    const-wide/16 v1, 42
    invoke-virtual {v0, v1, v2}, Ljava/security/SecureRandom;->setSeed(J)V
    const/4 v0, 1
    return v0
.end method

.method public onBind(Landroid/content/Intent;)Landroid/os/IBinder;
    .registers 3
    const/4 v0, 0
    return-object v0
.end method

.class public final L@P@/Util;
.super Ljava/lang/Object;

.method public static shuffle()I
    .registers 2
    new-instance v0, Ljava/util/Random;
    invoke-direct {v0}, Ljava/util/Random;-><init>()V
    invoke-virtual {v0}, Ljava/util/Random;->nextInt()I
    move-result v1
    return v1
.end method
"#;
    let components = format!(
        "{}\n    <service android:name=\".SyncService\" android:exported=\"false\"/>",
        Builder::main_activity_component()
    );
    Builder::new("random")
        .safe_manifest(&components)
        .dex("classes.dex", &activity(body))
        .finding("RANDOM-INSECURE", "MainActivity", "onCreate", "Ljava/util/Random;", 0)
        .finding("RANDOM-INSECURE", "SyncService", "onStartCommand", "setSeed", 0)
        .decoy("RANDOM-INSECURE", "Util", "shuffle", "Ljava/util/Random;", 0, "dead code")
        .decoy("RANDOM-INSECURE", "MainActivity", "onCreate", "SecureRandom;", 0, "SecureRandom without a fixed seed")
        .build()
}

pub fn webview() -> Fixture {
    let body = r#"
.method protected onCreate(Landroid/os/Bundle;)V
    .registers 5
    invoke-super {p0, p1}, Landroid/app/Activity;->onCreate(Landroid/os/Bundle;)V
    const/4 v0, 1
    invoke-static {v0}, Landroid/webkit/WebView;->setWebContentsDebuggingEnabled(Z)V
    const-string v1, "http://10.0.2.15:8080/api"
    const-string v2, "127.0.0.1"
    return-void
.end method

.method protected onResume()V
    .registers 2
    invoke-super {p0}, Landroid/app/Activity;->onResume()V
    const/4 v0, 0
    invoke-static {v0}, Landroid/webkit/WebView;->setWebContentsDebuggingEnabled(Z)V
    const-string v0, "0.0.0.0"
    return-void
.end method

.method public debugEndpoint()Ljava/lang/String;
    .registers 2
    const-string v0, "192.168.0.10"
    return-object v0
.end method
"#;
    Builder::new("webview")
        .manifest(
            r#"android:allowBackup="false" android:debuggable="false" android:networkSecurityConfig="@xml/network_security_config""#,
            Builder::main_activity_component(),
        )
        .dex("classes.dex", &activity(body))
        .finding("WEBVIEW-DEBUG", "MainActivity", "onCreate", "setWebContentsDebuggingEnabled", 0)
        .finding("IP-DISCLOSURE", "MainActivity", "onCreate", "10.0.2.15", 0)
        .decoy("WEBVIEW-DEBUG", "MainActivity", "onResume", "setWebContentsDebuggingEnabled", 0, "debugging disabled")
        .decoy("IP-DISCLOSURE", "MainActivity", "onCreate", "127.0.0.1", 0, "loopback address")
        .decoy("IP-DISCLOSURE", "MainActivity", "onResume", "0.0.0.0", 0, "wildcard address")
        .decoy("IP-DISCLOSURE", "MainActivity", "debugEndpoint", "192.168.0.10", 0, "dead code")
        .build()
}

pub fn sqli() -> Fixture {
    let body = r#"
.method protected onCreate(Landroid/os/Bundle;)V
    .registers 6
    invoke-super {p0, p1}, Landroid/app/Activity;->onCreate(Landroid/os/Bundle;)V
    const-string v0, "notes.db"
    const/4 v1, 0
    const/4 v2, 0
    invoke-virtual {p0, v0, v1, v2}, L@P@/MainActivity;->openOrCreateDatabase(Ljava/lang/String;ILandroid/database/sqlite/SQLiteDatabase$CursorFactory;)Landroid/database/sqlite/SQLiteDatabase;
    move-result-object v0
    const-string v1, "CREATE TABLE IF NOT EXISTS notes(body TEXT)"
    invoke-virtual {v0, v1}, Landroid/database/sqlite/SQLiteDatabase;->execSQL(Ljava/lang/String;)V
    invoke-virtual {p0}, L@P@/MainActivity;->getIntent()Landroid/content/Intent;
    move-result-object v1
    const-string v2, "q"
    invoke-virtual {v1, v2}, Landroid/content/Intent;->getStringExtra(Ljava/lang/String;)Ljava/lang/String;
    move-result-object v1
    new-instance v2, Ljava/lang/StringBuilder;
    const-string v3, "SELECT * FROM notes WHERE body = '"
    invoke-direct {v2, v3}, Ljava/lang/StringBuilder;-><init>(Ljava/lang/String;)V
    invoke-virtual {v2, v1}, Ljava/lang/StringBuilder;->append(Ljava/lang/String;)Ljava/lang/StringBuilder;
    invoke-virtual {v2}, Ljava/lang/StringBuilder;->toString()Ljava/lang/String;
    move-result-object v2
    const/4 v3, 0
    invoke-virtual {v0, v2, v3}, Landroid/database/sqlite/SQLiteDatabase;->rawQuery(Ljava/lang/String;[Ljava/lang/String;)Landroid/database/Cursor;
    return-void
.end method
"#;
    Builder::new("sqli")
        .safe_manifest(Builder::main_activity_component())
        .dex("classes.dex", &activity(body))
        .finding("SQLI", "MainActivity", "onCreate", "rawQuery", 0)
        .decoy("SQLI", "MainActivity", "onCreate", "execSQL", 0, "constant statement")
        .build()
}

/// One weak hash, one personal log line and one SMS flow: exactly three
/// report items.
pub fn report3() -> Fixture {
    let body = format!(
        r#"
.field private password:Ljava/lang/String;

.method protected onCreate(Landroid/os/Bundle;)V
    .registers 10
    invoke-super {{p0, p1}}, Landroid/app/Activity;->onCreate(Landroid/os/Bundle;)V
    const-string v0, "MD5"
    invoke-static {{v0}}, Ljava/security/MessageDigest;->getInstance(Ljava/lang/String;)Ljava/security/MessageDigest;
    iget-object v0, p0, L@P@/MainActivity;->password:Ljava/lang/String;
    const-string v1, "auth"
    invoke-static {{v1, v0}}, Landroid/util/Log;->d(Ljava/lang/String;Ljava/lang/String;)I
    const-string v0, "started"
    invoke-static {{v1, v0}}, Landroid/util/Log;->d(Ljava/lang/String;Ljava/lang/String;)I
{LATITUDE_TO_V5}{sms}    return-void
.end method
"#,
        sms = sms_send_v5()
    );
    let b = Builder::new("report3")
        .safe_manifest(Builder::main_activity_component())
        .dex("classes.dex", &activity(&body))
        .finding("CRYPTO-HASH", "MainActivity", "onCreate", "getInstance", 0)
        .pii_finding("LOG-PII", "MainActivity", "onCreate", "Log;->d", "password")
        .decoy("LOG-PII", "MainActivity", "onCreate", "Log;->d", 1, "constant, non-personal log message");
    b.flow(
        FlowSpec {
            source: ("MainActivity", "onCreate", "getLatitude"),
            sink: ("MainActivity", "onCreate", SEND_SMS),
            channel: "SMS",
            pii_tag: None,
        },
        &[],
    )
    .build()
}

/// Planted flows of call depth 1 to 6 over call, return and field steps.
pub fn flows() -> Fixture {
    let phone = resource_id("id", "phone_number").expect("id type");
    let email = resource_id("id", "email_address").expect("id type");
    let layout = resource_id("layout", "activity_main").expect("layout type");
    let body = format!(
        r#"
.field private cache:Ljava/lang/String;

.method protected onCreate(Landroid/os/Bundle;)V
    .registers 8
    invoke-super {{p0, p1}}, Landroid/app/Activity;->onCreate(Landroid/os/Bundle;)V
    const v0, {layout:#x}
    invoke-virtual {{p0, v0}}, L@P@/MainActivity;->setContentView(I)V
    const v0, {phone:#x}
    invoke-virtual {{p0, v0}}, L@P@/MainActivity;->findViewById(I)Landroid/view/View;
    move-result-object v0
    check-cast v0, Landroid/widget/EditText;
    invoke-virtual {{v0}}, Landroid/widget/EditText;->getText()Landroid/text/Editable;
    move-result-object v0
    invoke-virtual {{v0}}, Ljava/lang/Object;->toString()Ljava/lang/String;
    move-result-object v0
    invoke-direct {{p0, v0}}, L@P@/MainActivity;->logIt(Ljava/lang/String;)V
    const v1, {email:#x}
    invoke-virtual {{p0, v1}}, L@P@/MainActivity;->findViewById(I)Landroid/view/View;
    move-result-object v1
    check-cast v1, Landroid/widget/EditText;
    invoke-virtual {{v1}}, Landroid/widget/EditText;->getText()Landroid/text/Editable;
    move-result-object v1
    invoke-virtual {{v1}}, Ljava/lang/Object;->toString()Ljava/lang/String;
    move-result-object v1
    iput-object v1, p0, L@P@/MainActivity;->cache:Ljava/lang/String;
    const-string v2, "users.db"
    const/4 v3, 0
    const/4 v4, 0
    invoke-virtual {{p0, v2, v3, v4}}, L@P@/MainActivity;->openOrCreateDatabase(Ljava/lang/String;ILandroid/database/sqlite/SQLiteDatabase$CursorFactory;)Landroid/database/sqlite/SQLiteDatabase;
    move-result-object v2
    const-string v3, "SELECT * FROM users"
    invoke-virtual {{v2, v3, v4}}, Landroid/database/sqlite/SQLiteDatabase;->rawQuery(Ljava/lang/String;[Ljava/lang/String;)Landroid/database/Cursor;
    move-result-object v2
    invoke-direct {{p0, v2}}, L@P@/MainActivity;->readName(Landroid/database/Cursor;)Ljava/lang/String;
    move-result-object v2
    invoke-direct {{p0, v2}}, L@P@/MainActivity;->share(Ljava/lang/String;)V
    return-void
.end method

.method private logIt(Ljava/lang/String;)V
    .registers 3
    const-string v0, "Flows"
    invoke-static {{v0, p1}}, Landroid/util/Log;->i(Ljava/lang/String;Ljava/lang/String;)I
    return-void
.end method

.method private readName(Landroid/database/Cursor;)Ljava/lang/String;
    .registers 3
    const-string v0, "user_name"
    invoke-interface {{p1, v0}}, Landroid/database/Cursor;->getColumnIndex(Ljava/lang/String;)I
    move-result v0
    invoke-interface {{p1, v0}}, Landroid/database/Cursor;->getString(I)Ljava/lang/String;
    move-result-object v0
    return-object v0
.end method

.method private share(Ljava/lang/String;)V
    .registers 4
    new-instance v0, Landroid/os/Bundle;
    invoke-direct {{v0}}, Landroid/os/Bundle;-><init>()V
    const-string v1, "profile"
    invoke-virtual {{v0, v1, p1}}, Landroid/os/Bundle;->putString(Ljava/lang/String;Ljava/lang/String;)V
    return-void
.end method

.method protected onStart()V
    .registers 6
    invoke-super {{p0}}, Landroid/app/Activity;->onStart()V
{LATITUDE_TO_V5}    invoke-direct {{p0, v5}}, L@P@/MainActivity;->hop1(Ljava/lang/String;)V
    return-void
.end method
{hops}
.method private hop6(Ljava/lang/String;)V
    .registers 4
    const-string v0, "geo"
    const/4 v1, 0
    invoke-virtual {{p0, v0, v1}}, L@P@/MainActivity;->getSharedPreferences(Ljava/lang/String;I)Landroid/content/SharedPreferences;
    move-result-object v0
    invoke-interface {{v0}}, Landroid/content/SharedPreferences;->edit()Landroid/content/SharedPreferences$Editor;
    move-result-object v0
    const-string v1, "lat"
    invoke-interface {{v0, v1, p1}}, Landroid/content/SharedPreferences$Editor;->putString(Ljava/lang/String;Ljava/lang/String;)Landroid/content/SharedPreferences$Editor;
    move-result-object v0
    invoke-interface {{v0}}, Landroid/content/SharedPreferences$Editor;->apply()V
    return-void
.end method

.method protected onResume()V
    .registers 9
    invoke-super {{p0}}, Landroid/app/Activity;->onResume()V
    iget-object v5, p0, L@P@/MainActivity;->cache:Ljava/lang/String;
{sms}    return-void
.end method

.method protected onPause()V
    .registers 9
    invoke-super {{p0}}, Landroid/app/Activity;->onPause()V
{LATITUDE_TO_V5}    const-string v5, "unknown"
{sms}    return-void
.end method

.method public leakLocation()V
    .registers 8
{LATITUDE_TO_V5}{sms}    return-void
.end method
"#,
        hops = (1..=5)
            .map(|i| format!(
                "\n.method private hop{i}(Ljava/lang/String;)V\n    .registers 2\n    invoke-direct {{p0, p1}}, L@P@/MainActivity;->hop{n}(Ljava/lang/String;)V\n    return-void\n.end method\n",
                n = i + 1
            ))
            .collect::<String>(),
        sms = sms_send_v5(),
    );
    let layout_xml = format!(
        r#"<LinearLayout xmlns:android="{ANDROID_NS}" android:orientation="vertical" android:layout_width="match_parent" android:layout_height="match_parent">
  <EditText android:id="@+id/phone_number" android:hint="Phone" android:inputType="phone"/>
  <EditText android:id="@+id/email_address" android:hint="Contact"/>
  <TextView android:id="@+id/title" android:text="Welcome"/>
  <Button android:id="@+id/submit" android:text="Send"/>
</LinearLayout>"#
    );
    let mut b = Builder::new("flows")
        .safe_manifest(Builder::main_activity_component())
        .layout("activity_main", &layout_xml)
        .dex("classes.dex", &activity(&body))
        .pii_finding("LOG-PII", "MainActivity", "logIt", "Log;->i", "phone number");
    b = b.flow(
        FlowSpec {
            source: ("MainActivity", "onCreate", "EditText;->getText"),
            sink: ("MainActivity", "logIt", "Landroid/util/Log;->i(Ljava/lang/String;Ljava/lang/String;)I"),
            channel: "Log",
            pii_tag: Some("phone number"),
        },
        &[("call", "MainActivity.onCreate", "MainActivity.logIt", "logIt")],
    );
    b = b.flow(
        FlowSpec {
            source: ("MainActivity", "readName", "Cursor;->getString"),
            sink: (
                "MainActivity",
                "share",
                "Landroid/os/Bundle;->putString(Ljava/lang/String;Ljava/lang/String;)V",
            ),
            channel: "Bundle",
            pii_tag: Some("name"),
        },
        &[
            ("return", "MainActivity.onCreate", "MainActivity.readName", "readName"),
            ("call", "MainActivity.onCreate", "MainActivity.share", "share"),
        ],
    );
    let mut hops = vec![("call", "MainActivity.onStart".to_string(), "MainActivity.hop1".to_string(), "hop1".to_string())];
    for i in 1..=5 {
        hops.push((
            "call",
            format!("MainActivity.hop{i}"),
            format!("MainActivity.hop{}", i + 1),
            format!("hop{}", i + 1),
        ));
    }
    let hop_steps: Vec<(&str, &str, &str, &str)> = hops
        .iter()
        .map(|(k, a, c, n)| (*k, a.as_str(), c.as_str(), n.as_str()))
        .collect();
    b = b.flow(
        FlowSpec {
            source: ("MainActivity", "onStart", "getLatitude"),
            sink: (
                "MainActivity",
                "hop6",
                "Landroid/content/SharedPreferences$Editor;->putString(Ljava/lang/String;Ljava/lang/String;)Landroid/content/SharedPreferences$Editor;",
            ),
            channel: "SharedPreferences",
            pii_tag: None,
        },
        &hop_steps,
    );
    b = b.flow(
        FlowSpec {
            source: ("MainActivity", "onCreate", "EditText;->getText"),
            sink: ("MainActivity", "onResume", SEND_SMS),
            channel: "SMS",
            pii_tag: Some("email"),
        },
        &[("field", "MainActivity.onCreate", "MainActivity.onResume", "->cache:")],
    );
    // The second getText call is the email source.
    let second = b.site("MainActivity", "onCreate", "EditText;->getText", 1);
    b.flows.last_mut().expect("just pushed").source_site = second;
    b.non_flow("MainActivity", "onPause", "getLatitude", "value overwritten before the sink")
        .non_flow("MainActivity", "leakLocation", "getLatitude", "dead code")
        .decoy("SQLI", "MainActivity", "onCreate", "rawQuery", 0, "constant query")
        .build()
}

pub fn manifest_weak() -> Fixture {
    let components = r#"    <activity android:name=".MainActivity" android:exported="false" android:launchMode="singleTask"/>
    <activity android:name=".AboutActivity" android:exported="false" android:launchMode="singleTop"/>
    <service android:name=".UploadService" android:exported="true"/>
    <receiver android:name=".BootReceiver">
      <intent-filter>
        <action android:name="android.intent.action.BOOT_COMPLETED"/>
      </intent-filter>
    </receiver>
    <provider android:name=".DataProvider" android:authorities="com.fx.manifestweak.data" android:exported="true" android:readPermission="com.fx.manifestweak.READ"/>"#;
    Builder::new("manifest-weak")
        .manifest(
            r#"android:allowBackup="false" android:debuggable="true" android:usesCleartextTraffic="true""#,
            components,
        )
        .dex("classes.dex", &activity(ON_CREATE_PLAIN))
        .manifest_finding("MANIFEST-DEBUG", None)
        .manifest_finding("MANIFEST-CLEARTEXT", None)
        .manifest_finding("MANIFEST-LAUNCHMODE", Some(".MainActivity"))
        .manifest_finding("MANIFEST-UNPROTECTED", Some(".UploadService"))
        .manifest_finding("MANIFEST-UNPROTECTED", Some(".BootReceiver"))
        .build()
}

/// `allow_backup` is the attribute value, or `None` to leave it out.
pub fn backup(allow_backup: Option<bool>) -> Fixture {
    let name = match allow_backup {
        Some(true) => "backup-true",
        Some(false) => "backup-false",
        None => "backup-absent",
    };
    let attr = allow_backup.map_or(String::new(), |v| format!("android:allowBackup=\"{v}\""));
    let b = Builder::new(name)
        .manifest(
            &format!(r#"{attr} android:debuggable="false" android:usesCleartextTraffic="false""#),
            Builder::main_activity_component(),
        )
        .dex("classes.dex", &activity(ON_CREATE_PLAIN));
    if allow_backup == Some(false) {
        b.build()
    } else {
        b.manifest_finding("MANIFEST-BACKUP", None).build()
    }
}

fn tracker_classes(classes: &[&str]) -> String {
    classes
        .iter()
        .map(|c| format!(".class public {c}\n.super Ljava/lang/Object;\n\n.method public static init()V\n    .registers 0\n    return-void\n.end method\n\n"))
        .collect()
}

pub fn trackers8() -> Fixture {
    let first = tracker_classes(&[
        "Lcom/google/firebase/analytics/FirebaseAnalytics;",
        "Lcom/google/firebase/analytics/connector/Connector;",
        "Lcom/crashlytics/android/Crashlytics;",
        "Lcom/facebook/appevents/AppEventsLogger;",
        "Lcom/flurry/android/FlurryAgent;",
    ]);
    let second = tracker_classes(&[
        "Lcom/appsflyer/AppsFlyerLib;",
        "Lcom/adjust/sdk/Adjust;",
        "Lcom/onesignal/OneSignal;",
        "Lcom/unity3d/ads/UnityAds;",
        "Lcom/flurryx/NotATracker;",
        "Lcom/facebookx/appevents/Lookalike;",
    ]);
    Builder::new("trackers8")
        .safe_manifest(Builder::main_activity_component())
        .dex("classes.dex", &format!("{}\n{first}", activity(ON_CREATE_PLAIN)))
        .dex("classes2.dex", &second)
        .trackers(&[
            "Google Firebase Analytics",
            "Google CrashLytics",
            "Facebook Analytics",
            "Flurry",
            "AppsFlyer",
            "Adjust",
            "OneSignal",
            "Unity3d Ads",
        ])
        .build()
}

pub fn corrupt_dex() -> Fixture {
    let mut b = Builder::new("corrupt-dex").safe_manifest(Builder::main_activity_component());
    let image = dex::assemble(&fill(&activity(ON_CREATE_PLAIN), &[("P", b.pkg_path())]))
        .expect("assembles")
        .bytes;
    b.apk = b.apk.entry("classes.dex", image[..0x50].to_vec(), Method::Stored);
    b.failure_stage = Some("dex".into());
    b.build()
}

/// Four apps with hand-countable statistics: two without backup protection,
/// three embedding Firebase Analytics, one weak hash, one location flow.
pub fn corpus4() -> Vec<Fixture> {
    let firebase = tracker_classes(&["Lcom/google/firebase/analytics/FirebaseAnalytics;"]);
    let crashlytics = tracker_classes(&["Lcom/google/firebase/crashlytics/FirebaseCrashlytics;"]);
    let md5 = r#"
.method protected onCreate(Landroid/os/Bundle;)V
    .registers 3
    invoke-super {p0, p1}, Landroid/app/Activity;->onCreate(Landroid/os/Bundle;)V
    const-string v0, "MD5"
    invoke-static {v0}, Ljava/security/MessageDigest;->getInstance(Ljava/lang/String;)Ljava/security/MessageDigest;
    return-void
.end method
"#;
    let leak = format!(
        r#"
.method protected onCreate(Landroid/os/Bundle;)V
    .registers 10
    invoke-super {{p0, p1}}, Landroid/app/Activity;->onCreate(Landroid/os/Bundle;)V
{LATITUDE_TO_V5}{sms}    return-void
.end method
"#,
        sms = sms_send_v5()
    );
    let flags_no = r#"android:allowBackup="false" android:debuggable="false" android:usesCleartextTraffic="false""#;
    let flags_yes = r#"android:allowBackup="true" android:debuggable="false" android:usesCleartextTraffic="false""#;
    let flags_unset = r#"android:debuggable="false" android:usesCleartextTraffic="false""#;
    let alpha = Builder::new("corpus-alpha")
        .manifest(flags_yes, Builder::main_activity_component())
        .dex("classes.dex", &format!("{}\n{firebase}\n{crashlytics}", activity(md5)))
        .manifest_finding("MANIFEST-BACKUP", None)
        .finding("CRYPTO-HASH", "MainActivity", "onCreate", "getInstance", 0)
        .trackers(&["Google Firebase Analytics", "Google CrashLytics"])
        .build();
    let beta = Builder::new("corpus-beta")
        .manifest(flags_unset, Builder::main_activity_component())
        .dex("classes.dex", &format!("{}\n{firebase}", activity(ON_CREATE_PLAIN)))
        .manifest_finding("MANIFEST-BACKUP", None)
        .trackers(&["Google Firebase Analytics"])
        .build();
    let gamma = Builder::new("corpus-gamma")
        .manifest(flags_no, Builder::main_activity_component())
        .dex("classes.dex", &format!("{}\n{firebase}", activity(&leak)))
        .trackers(&["Google Firebase Analytics"])
        .flow(
            FlowSpec {
                source: ("MainActivity", "onCreate", "getLatitude"),
                sink: ("MainActivity", "onCreate", SEND_SMS),
                channel: "SMS",
                pii_tag: None,
            },
            &[],
        )
        .build();
    let delta = Builder::new("corpus-delta")
        .manifest(flags_no, Builder::main_activity_component())
        .dex("classes.dex", &activity(ON_CREATE_PLAIN))
        .build();
    vec![alpha, beta, gamma, delta]
}

/// Hand-counted prevalence over [`corpus4`]: `(per rule, per tracker)`.
pub fn corpus4_prevalence() -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let rules = BTreeMap::from([("MANIFEST-BACKUP".to_string(), 2.0 / 4.0), ("CRYPTO-HASH".to_string(), 1.0 / 4.0)]);
    let trackers = BTreeMap::from([
        ("Google Firebase Analytics".to_string(), 3.0 / 4.0),
        ("Google CrashLytics".to_string(), 1.0 / 4.0),
    ]);
    (rules, trackers)
}

/// Every fixture except the four-app statistics corpus.
pub fn rule_corpus() -> Vec<Fixture> {
    vec![
        clean(),
        crypto(),
        random(),
        webview(),
        sqli(),
        report3(),
        flows(),
        manifest_weak(),
        backup(Some(true)),
        backup(Some(false)),
        backup(None),
        trackers8(),
        corrupt_dex(),
    ]
}

/// Every fixture.
pub fn all() -> Vec<Fixture> {
    let mut v = rule_corpus();
    v.extend(corpus4());
    v
}

/// Writes `fixtures` as `<name>.apk` files into `dir`.
pub fn write_all(dir: &std::path::Path, fixtures: &[Fixture]) -> std::io::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for f in fixtures {
        let path = dir.join(f.file_name());
        std::fs::write(&path, &f.bytes)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_builds_with_unique_names() {
        let all = all();
        let mut names: Vec<&str> = all.iter().map(|f| f.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
        assert!(all.len() >= 12);
    }

    #[test]
    fn deep_chain_has_six_calls() {
        let f = flows();
        let deep = f.flows.iter().find(|x| x.channel == "SharedPreferences").unwrap();
        assert_eq!(deep.chain.iter().filter(|s| s.kind == "call").count(), 6);
    }
}
