//! Compiles textual XML into Android binary XML.
//!
//! Attributes in the android namespace are typed the way the platform
//! compiler types them: booleans, integers, hex integers, launch modes and
//! `@type/name` references. Everything else stays a string. Resource IDs for
//! application resources are synthetic (see [`resource_id`]). For `@+id/`
//! references the source text is kept as the raw value so fixtures can
//! recover widget names without a resource table.

use std::collections::HashMap;

pub const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";

/// Framework attribute IDs for the attributes fixtures use.
pub const ANDROID_ATTRS: &[(&str, u32)] = &[
    ("theme", 0x0101_0000),
    ("label", 0x0101_0001),
    ("icon", 0x0101_0002),
    ("name", 0x0101_0003),
    ("permission", 0x0101_0006),
    ("readPermission", 0x0101_0007),
    ("writePermission", 0x0101_0008),
    ("enabled", 0x0101_000e),
    ("debuggable", 0x0101_000f),
    ("exported", 0x0101_0010),
    ("launchMode", 0x0101_001d),
    ("orientation", 0x0101_00c4),
    ("id", 0x0101_00d0),
    ("layout_width", 0x0101_00f4),
    ("layout_height", 0x0101_00f5),
    ("text", 0x0101_014f),
    ("hint", 0x0101_0150),
    ("minSdkVersion", 0x0101_020c),
    ("versionCode", 0x0101_021b),
    ("versionName", 0x0101_021c),
    ("inputType", 0x0101_0220),
    ("targetSdkVersion", 0x0101_0270),
    ("allowBackup", 0x0101_0280),
    ("usesCleartextTraffic", 0x0101_04ec),
    ("networkSecurityConfig", 0x0101_0527),
];

pub fn android_attr_id(name: &str) -> Option<u32> {
    ANDROID_ATTRS.iter().find(|(n, _)| *n == name).map(|(_, id)| *id)
}

const RESOURCE_TYPES: &[(&str, u32)] = &[
    ("drawable", 0x02),
    ("mipmap", 0x03),
    ("layout", 0x04),
    ("string", 0x05),
    ("style", 0x06),
    ("xml", 0x08),
    ("id", 0x0a),
    ("color", 0x0b),
];

/// Synthetic application resource ID: package 0x7f, a per-type byte and
/// a 16-bit FNV-1a hash of the name.
pub fn resource_id(res_type: &str, name: &str) -> Option<u32> {
    let t = RESOURCE_TYPES.iter().find(|(n, _)| *n == res_type)?.1;
    let mut h: u32 = 0x811c_9dc5;
    for b in name.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    Some(0x7f00_0000 | t << 16 | ((h ^ (h >> 16)) & 0xffff))
}

/// Value an attribute is expected to decode to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    String(String),
    Reference(u32),
    IntDec(i32),
    IntHex(u32),
    Boolean(bool),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attr {
    pub namespace: Option<String>,
    pub name: String,
    pub resource_id: Option<u32>,
    pub raw: Option<String>,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub namespace: Option<String>,
    pub name: String,
    pub attributes: Vec<Attr>,
    pub children: Vec<Element>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Options {
    pub utf8: bool,
}

const LAUNCH_MODES: &[&str] = &["standard", "singleTop", "singleTask", "singleInstance"];

fn type_value(namespace: Option<&str>, name: &str, text: &str) -> (Value, Option<String>) {
    if namespace != Some(ANDROID_NS) {
        return (Value::String(text.to_string()), Some(text.to_string()));
    }
    if name == "launchMode" {
        if let Some(i) = LAUNCH_MODES.iter().position(|m| *m == text) {
            return (Value::IntDec(i as i32), None);
        }
    }
    match text {
        "true" => return (Value::Boolean(true), None),
        "false" => return (Value::Boolean(false), None),
        _ => {}
    }
    if let Some(rest) = text.strip_prefix('@') {
        let rest = rest.strip_prefix('+').unwrap_or(rest);
        if let Some((t, n)) = rest.split_once('/') {
            if let Some(id) = resource_id(t, n) {
                let raw = (t == "id").then(|| text.to_string());
                return (Value::Reference(id), raw);
            }
        }
    }
    if let Some(hex) = text.strip_prefix("0x") {
        if let Ok(v) = u32::from_str_radix(hex, 16) {
            return (Value::IntHex(v), None);
        }
    }
    if let Ok(v) = text.parse::<i32>() {
        return (Value::IntDec(v), None);
    }
    (Value::String(text.to_string()), Some(text.to_string()))
}

/// Builds the expected tree from textual XML.
pub fn expected_tree(xml: &str) -> Result<Element, String> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| e.to_string())?;
    Ok(convert(doc.root_element()))
}

fn convert(node: roxmltree::Node<'_, '_>) -> Element {
    let attributes = node
        .attributes()
        .map(|a| {
            let ns = a.namespace();
            let (value, raw) = type_value(ns, a.name(), a.value());
            Attr {
                namespace: ns.map(str::to_string),
                name: a.name().to_string(),
                resource_id: if ns == Some(ANDROID_NS) {
                    android_attr_id(a.name())
                } else {
                    None
                },
                raw,
                value,
            }
        })
        .collect();
    Element {
        namespace: node.tag_name().namespace().map(str::to_string),
        name: node.tag_name().name().to_string(),
        attributes,
        children: node.children().filter(|c| c.is_element()).map(convert).collect(),
    }
}

struct Pool {
    strings: Vec<String>,
    index: HashMap<String, u32>,
}

impl Pool {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.strings.len() as u32;
        self.strings.push(s.to_string());
        self.index.insert(s.to_string(), i);
        i
    }
}

fn put16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn pad4(out: &mut Vec<u8>) {
    while out.len() % 4 != 0 {
        out.push(0);
    }
}

fn encode_len8(out: &mut Vec<u8>, n: usize) {
    if n > 0x7f {
        out.push(0x80 | (n >> 8) as u8);
    }
    out.push(n as u8);
}

fn encode_len16(out: &mut Vec<u8>, n: usize) {
    if n > 0x7fff {
        put16(out, 0x8000 | (n >> 16) as u16);
    }
    put16(out, n as u16);
}

fn string_pool(strings: &[String], utf8: bool) -> Vec<u8> {
    let mut data = Vec::new();
    let mut offsets = Vec::new();
    for s in strings {
        offsets.push(data.len() as u32);
        if utf8 {
            encode_len8(&mut data, s.chars().count());
            encode_len8(&mut data, s.len());
            data.extend_from_slice(s.as_bytes());
            data.push(0);
        } else {
            let units: Vec<u16> = s.encode_utf16().collect();
            encode_len16(&mut data, units.len());
            for u in units {
                put16(&mut data, u);
            }
            put16(&mut data, 0);
        }
    }
    pad4(&mut data);
    let header = 28;
    let strings_start = header + 4 * strings.len();
    let mut out = Vec::new();
    put16(&mut out, 0x0001);
    put16(&mut out, header as u16);
    put32(&mut out, (strings_start + data.len()) as u32);
    put32(&mut out, strings.len() as u32);
    put32(&mut out, 0);
    put32(&mut out, if utf8 { 1 << 8 } else { 0 });
    put32(&mut out, strings_start as u32);
    put32(&mut out, 0);
    for o in offsets {
        put32(&mut out, o);
    }
    out.extend_from_slice(&data);
    out
}

fn node_header(out: &mut Vec<u8>, kind: u16, size: u32, line: u32) {
    put16(out, kind);
    put16(out, 16);
    put32(out, size);
    put32(out, line);
    put32(out, 0xffff_ffff);
}

/// Encodes textual XML as binary XML.
pub fn encode(xml: &str, options: Options) -> Result<Vec<u8>, String> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| e.to_string())?;
    let root = doc.root_element();
    let tree = convert(root);

    // Attribute names with framework IDs lead the pool, matching the map.
    let mut pool = Pool {
        strings: Vec::new(),
        index: HashMap::new(),
    };
    let mut ids = Vec::new();
    fn mapped(e: &Element, pool: &mut Pool, ids: &mut Vec<u32>) {
        for a in &e.attributes {
            if let Some(id) = a.resource_id {
                if !pool.index.contains_key(&a.name) {
                    pool.intern(&a.name);
                    ids.push(id);
                }
            }
        }
        for c in &e.children {
            mapped(c, pool, ids);
        }
    }
    mapped(&tree, &mut pool, &mut ids);

    let namespaces: Vec<(String, String)> = root
        .namespaces()
        .map(|n| (n.name().unwrap_or("").to_string(), n.uri().to_string()))
        .collect();

    let mut body = Vec::new();
    for (prefix, uri) in &namespaces {
        let p = pool.intern(prefix);
        let u = pool.intern(uri);
        node_header(&mut body, 0x0100, 24, 1);
        put32(&mut body, p);
        put32(&mut body, u);
    }
    let mut line = 1;
    write_element(&tree, &mut pool, &mut body, &mut line);
    for (prefix, uri) in namespaces.iter().rev() {
        let p = pool.intern(prefix);
        let u = pool.intern(uri);
        node_header(&mut body, 0x0101, 24, line);
        put32(&mut body, p);
        put32(&mut body, u);
    }

    let sp = string_pool(&pool.strings, options.utf8);
    let mut map = Vec::new();
    put16(&mut map, 0x0180);
    put16(&mut map, 8);
    put32(&mut map, 8 + 4 * ids.len() as u32);
    for id in &ids {
        put32(&mut map, *id);
    }

    let mut out = Vec::new();
    put16(&mut out, 0x0003);
    put16(&mut out, 8);
    put32(&mut out, (8 + sp.len() + map.len() + body.len()) as u32);
    out.extend_from_slice(&sp);
    out.extend_from_slice(&map);
    out.extend_from_slice(&body);
    Ok(out)
}

fn write_element(e: &Element, pool: &mut Pool, out: &mut Vec<u8>, line: &mut u32) {
    *line += 1;
    let ns = e.namespace.as_deref().map(|n| pool.intern(n)).unwrap_or(0xffff_ffff);
    let name = pool.intern(&e.name);
    node_header(out, 0x0102, 16 + 20 + 20 * e.attributes.len() as u32, *line);
    put32(out, ns);
    put32(out, name);
    put16(out, 20);
    put16(out, 20);
    put16(out, e.attributes.len() as u16);
    let id_index = e
        .attributes
        .iter()
        .position(|a| a.name == "id" && a.namespace.is_none())
        .map_or(0, |i| i + 1);
    put16(out, id_index as u16);
    put16(out, 0);
    put16(out, 0);
    for a in &e.attributes {
        let ns = a.namespace.as_deref().map(|n| pool.intern(n)).unwrap_or(0xffff_ffff);
        let name = pool.intern(&a.name);
        let raw = a.raw.as_deref().map(|r| pool.intern(r)).unwrap_or(0xffff_ffff);
        let (data_type, data) = match &a.value {
            Value::String(s) => (0x03u8, pool.intern(s)),
            Value::Reference(id) => (0x01, *id),
            Value::IntDec(v) => (0x10, *v as u32),
            Value::IntHex(v) => (0x11, *v),
            Value::Boolean(b) => (0x12, if *b { 0xffff_ffff } else { 0 }),
        };
        put32(out, ns);
        put32(out, name);
        put32(out, raw);
        put16(out, 8);
        out.push(0);
        out.push(data_type);
        put32(out, data);
    }
    for c in &e.children {
        write_element(c, pool, out, line);
    }
    *line += 1;
    node_header(out, 0x0103, 24, *line);
    put32(out, ns);
    put32(out, name);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typing() {
        let xml = format!(
            r#"<manifest xmlns:android="{ANDROID_NS}" package="p"><application android:allowBackup="false" android:label="@string/app" android:launchMode="singleTask" android:versionCode="7" android:theme="0x10"/></manifest>"#
        );
        let t = expected_tree(&xml).unwrap();
        let app = &t.children[0];
        let v: Vec<&Value> = app.attributes.iter().map(|a| &a.value).collect();
        assert_eq!(v[0], &Value::Boolean(false));
        assert!(matches!(v[1], Value::Reference(id) if id >> 16 == 0x7f05));
        assert_eq!(v[2], &Value::IntDec(2));
        assert_eq!(v[3], &Value::IntDec(7));
        assert_eq!(v[4], &Value::IntHex(16));
        assert_eq!(t.attributes[0].value, Value::String("p".into()));
        assert!(encode(&xml, Options::default()).unwrap().starts_with(&[3, 0, 8, 0]));
    }

    #[test]
    fn ids_are_stable() {
        assert_eq!(resource_id("id", "et_phone"), resource_id("id", "et_phone"));
        assert_ne!(resource_id("id", "a"), resource_id("id", "b"));
        assert_eq!(resource_id("id", "a").unwrap() >> 16, 0x7f0a);
        assert_eq!(resource_id("nope", "a"), None);
    }
}
