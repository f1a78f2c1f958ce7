//! Builds APK-shaped ZIP archives in memory.

use std::io::{Cursor, Write};

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use crate::{axml, dex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Stored,
    Deflated,
}

#[derive(Debug, Clone, Default)]
pub struct ApkBuilder {
    entries: Vec<(String, Vec<u8>, Method)>,
}

impl ApkBuilder {
    pub fn new() -> ApkBuilder {
        ApkBuilder::default()
    }

    pub fn entry(mut self, name: &str, data: Vec<u8>, method: Method) -> ApkBuilder {
        self.entries.push((name.to_string(), data, method));
        self
    }

    /// Compiles `xml` to binary form and stores it as `AndroidManifest.xml`.
    pub fn manifest(self, xml: &str) -> ApkBuilder {
        let data = axml::encode(xml, axml::Options::default()).expect("fixture manifest compiles");
        self.entry("AndroidManifest.xml", data, Method::Deflated)
    }

    pub fn layout(self, name: &str, xml: &str) -> ApkBuilder {
        let data = axml::encode(xml, axml::Options::default()).expect("fixture layout compiles");
        self.entry(&format!("res/layout/{name}.xml"), data, Method::Deflated)
    }

    /// Assembles `smali` into the given DEX entry.
    pub fn dex(self, name: &str, smali: &str) -> ApkBuilder {
        let image = match dex::assemble(smali) {
            Ok(a) => a.bytes,
            Err(e) => panic!("fixture {name} does not assemble: {e}"),
        };
        self.entry(name, image, Method::Deflated)
    }

    /// Archive bytes. Timestamps are fixed so equal inputs give equal bytes.
    pub fn build(&self) -> Vec<u8> {
        let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
        for (name, data, method) in &self.entries {
            let method = match method {
                Method::Stored => CompressionMethod::Stored,
                Method::Deflated => CompressionMethod::Deflated,
            };
            let opts = SimpleFileOptions::default()
                .compression_method(method)
                .last_modified_time(DateTime::default());
            zip.start_file(name.as_str(), opts).expect("zip entry");
            zip.write_all(data).expect("zip write");
        }
        zip.finish().expect("zip finish").into_inner()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_archive() {
        let b = ApkBuilder::new()
            .manifest(r#"<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="a.b"/>"#)
            .dex("classes.dex", ".class LA;\n")
            .entry("assets/x.bin", vec![7; 100], Method::Stored);
        let bytes = b.build();
        assert_eq!(bytes, b.build());
        assert_eq!(&bytes[..4], b"PK\x03\x04");
    }
}
