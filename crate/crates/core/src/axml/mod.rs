//! Android binary XML (AXML) decoding.
//!
//! Compiled manifests and layouts are a sequence of little-endian chunks: a
//! string pool, an optional resource map that assigns framework attribute IDs
//! to the leading pool entries, and a stream of namespace/element events. The
//! parser rebuilds the element tree and decodes typed attribute values.

mod layout;
mod manifest;

pub use layout::{extract_layout_widgets, extract_layout_widgets_with, WidgetDecl, DEFAULT_WIDGET_SUFFIXES};
pub use manifest::{
    extract_manifest, AppFlags, Component, ComponentKind, LaunchMode, ManifestError, ManifestModel,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RES_STRING_POOL_TYPE: u16 = 0x0001;
pub const RES_XML_TYPE: u16 = 0x0003;
pub const RES_XML_START_NAMESPACE_TYPE: u16 = 0x0100;
pub const RES_XML_END_NAMESPACE_TYPE: u16 = 0x0101;
pub const RES_XML_START_ELEMENT_TYPE: u16 = 0x0102;
pub const RES_XML_END_ELEMENT_TYPE: u16 = 0x0103;
pub const RES_XML_CDATA_TYPE: u16 = 0x0104;
pub const RES_XML_RESOURCE_MAP_TYPE: u16 = 0x0180;

pub const TYPE_NULL: u8 = 0x00;
pub const TYPE_REFERENCE: u8 = 0x01;
pub const TYPE_ATTRIBUTE: u8 = 0x02;
pub const TYPE_STRING: u8 = 0x03;
pub const TYPE_INT_DEC: u8 = 0x10;
pub const TYPE_INT_HEX: u8 = 0x11;
pub const TYPE_INT_BOOLEAN: u8 = 0x12;

const UTF8_FLAG: u32 = 1 << 8;
const NO_INDEX: u32 = 0xFFFF_FFFF;

pub const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";

/// Framework attribute resource IDs used to identify attributes when the
/// string pool names are missing or obfuscated.
pub mod attr {
    pub const NAME: u32 = 0x0101_0003;
    pub const PERMISSION: u32 = 0x0101_0006;
    pub const READ_PERMISSION: u32 = 0x0101_0007;
    pub const WRITE_PERMISSION: u32 = 0x0101_0008;
    pub const DEBUGGABLE: u32 = 0x0101_000f;
    pub const EXPORTED: u32 = 0x0101_0010;
    pub const LAUNCH_MODE: u32 = 0x0101_001d;
    pub const ID: u32 = 0x0101_00d0;
    pub const TEXT: u32 = 0x0101_014f;
    pub const HINT: u32 = 0x0101_0150;
    pub const ALLOW_BACKUP: u32 = 0x0101_0280;
    pub const USES_CLEARTEXT_TRAFFIC: u32 = 0x0101_04ec;
    pub const NETWORK_SECURITY_CONFIG: u32 = 0x0101_0527;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AxmlError {
    #[error("bad magic: {0}")]
    BadMagic(String),
    #[error("truncated chunk at offset {offset}: needs {needed} bytes, {available} available")]
    TruncatedChunk {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("string index {index} out of range (pool has {len} strings)")]
    StringIndexOutOfRange { index: u32, len: usize },
    #[error("unbalanced elements: {0}")]
    UnbalancedElements(String),
    #[error("malformed string pool: {0}")]
    BadStringPool(String),
}

/// A decoded `Res_value`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum TypedValue {
    Null,
    String(String),
    Reference(u32),
    Attribute(u32),
    IntDec(i32),
    IntHex(u32),
    Boolean(bool),
    Other { data_type: u8, data: u32 },
}

impl TypedValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            TypedValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            TypedValue::Boolean(b) => Some(*b),
            TypedValue::IntDec(v) => Some(*v != 0),
            TypedValue::String(s) if s.eq_ignore_ascii_case("true") => Some(true),
            TypedValue::String(s) if s.eq_ignore_ascii_case("false") => Some(false),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            TypedValue::IntDec(v) => Some(*v as i64),
            TypedValue::IntHex(v) => Some(*v as i64),
            _ => None,
        }
    }

    pub fn is_reference(&self) -> bool {
        matches!(self, TypedValue::Reference(_) | TypedValue::Attribute(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XmlAttribute {
    pub namespace: Option<String>,
    pub name: String,
    pub resource_id: Option<u32>,
    /// The raw string value kept by the compiler, if any.
    pub raw: Option<String>,
    pub value: TypedValue,
}

impl XmlAttribute {
    /// String form of the value, falling back to the raw string kept next
    /// to non-string typed values.
    pub fn string_value(&self) -> Option<&str> {
        self.value.as_str().or(self.raw.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XmlElement {
    pub name: String,
    pub namespace: Option<String>,
    pub attributes: Vec<XmlAttribute>,
    pub children: Vec<XmlElement>,
}

impl XmlElement {
    /// Looks an attribute up by framework resource ID first, then by name in
    /// the android namespace (or no namespace).
    pub fn android_attr(&self, resource_id: u32, name: &str) -> Option<&XmlAttribute> {
        self.attributes
            .iter()
            .find(|a| a.resource_id == Some(resource_id))
            .or_else(|| {
                self.attributes.iter().find(|a| {
                    a.name == name
                        && matches!(a.namespace.as_deref(), None | Some(ANDROID_NS))
                })
            })
    }

    /// Looks up an attribute by bare name regardless of namespace.
    pub fn attr(&self, name: &str) -> Option<&XmlAttribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a XmlElement> + 'a {
        self.children.iter().filter(move |c| c.name == name)
    }

    /// Depth-first pre-order traversal including `self`.
    pub fn walk(&self) -> Vec<&XmlElement> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(el) = stack.pop() {
            out.push(el);
            stack.extend(el.children.iter().rev());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XmlDocument {
    pub string_pool: Vec<String>,
    pub resource_ids: Vec<u32>,
    pub root: XmlElement,
}

struct Reader<'a> {
    data: &'a [u8],
}

impl<'a> Reader<'a> {
    fn need(&self, offset: usize, len: usize) -> Result<&'a [u8], AxmlError> {
        offset
            .checked_add(len)
            .and_then(|end| self.data.get(offset..end))
            .ok_or(AxmlError::TruncatedChunk {
                offset,
                needed: len,
                available: self.data.len().saturating_sub(offset),
            })
    }

    fn u8(&self, offset: usize) -> Result<u8, AxmlError> {
        Ok(self.need(offset, 1)?[0])
    }

    fn u16(&self, offset: usize) -> Result<u16, AxmlError> {
        let b = self.need(offset, 2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&self, offset: usize) -> Result<u32, AxmlError> {
        let b = self.need(offset, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct ChunkHeader {
    kind: u16,
    header_size: usize,
    size: usize,
}

fn chunk_header(r: &Reader<'_>, offset: usize, limit: usize) -> Result<ChunkHeader, AxmlError> {
    let kind = r.u16(offset)?;
    let header_size = r.u16(offset + 2)? as usize;
    let size = r.u32(offset + 4)? as usize;
    if header_size < 8 || size < header_size {
        return Err(AxmlError::TruncatedChunk {
            offset,
            needed: header_size.max(8),
            available: size,
        });
    }
    if offset + size > limit {
        return Err(AxmlError::TruncatedChunk {
            offset,
            needed: size,
            available: limit - offset,
        });
    }
    Ok(ChunkHeader {
        kind,
        header_size,
        size,
    })
}

pub fn parse_axml(data: &[u8]) -> Result<XmlDocument, AxmlError> {
    let r = Reader { data };
    if data.len() < 8 {
        return Err(AxmlError::BadMagic(format!(
            "{} bytes is too short for a chunk header",
            data.len()
        )));
    }
    let kind = r.u16(0)?;
    if kind != RES_XML_TYPE {
        return Err(AxmlError::BadMagic(format!(
            "first chunk type {kind:#06x}, expected {RES_XML_TYPE:#06x}"
        )));
    }
    let top = chunk_header(&r, 0, data.len())?;

    let mut strings: Vec<String> = Vec::new();
    let mut resource_ids: Vec<u32> = Vec::new();
    let mut stack: Vec<XmlElement> = Vec::new();
    let mut root: Option<XmlElement> = None;

    let mut pos = top.header_size;
    while pos + 8 <= top.size {
        let chunk = chunk_header(&r, pos, top.size)?;
        let body = pos + chunk.header_size;
        match chunk.kind {
            RES_STRING_POOL_TYPE => strings = parse_string_pool(&r, pos, &chunk)?,
            RES_XML_RESOURCE_MAP_TYPE => {
                let count = (chunk.size - chunk.header_size) / 4;
                resource_ids = (0..count)
                    .map(|i| r.u32(body + i * 4))
                    .collect::<Result<_, _>>()?;
            }
            RES_XML_START_ELEMENT_TYPE => {
                let element = parse_start_element(&r, body, pos + chunk.size, &strings, &resource_ids)?;
                if stack.is_empty() && root.is_some() {
                    return Err(AxmlError::UnbalancedElements(format!(
                        "second root element <{}>",
                        element.name
                    )));
                }
                stack.push(element);
            }
            RES_XML_END_ELEMENT_TYPE => {
                let name = string_at(&strings, r.u32(body + 4)?)?;
                let element = stack.pop().ok_or_else(|| {
                    AxmlError::UnbalancedElements(format!("end of <{name}> without a start"))
                })?;
                if element.name != name {
                    return Err(AxmlError::UnbalancedElements(format!(
                        "<{}> closed by </{name}>",
                        element.name
                    )));
                }
                match stack.last_mut() {
                    Some(parent) => parent.children.push(element),
                    None => root = Some(element),
                }
            }
            // Namespace scoping and character data do not affect the tree we keep.
            RES_XML_START_NAMESPACE_TYPE | RES_XML_END_NAMESPACE_TYPE | RES_XML_CDATA_TYPE => {}
            _ => {}
        }
        pos += chunk.size;
    }

    if let Some(open) = stack.last() {
        return Err(AxmlError::UnbalancedElements(format!(
            "<{}> is never closed",
            open.name
        )));
    }
    let root = root.ok_or_else(|| AxmlError::UnbalancedElements("no root element".into()))?;
    Ok(XmlDocument {
        string_pool: strings,
        resource_ids,
        root,
    })
}

fn string_at(strings: &[String], index: u32) -> Result<String, AxmlError> {
    strings
        .get(index as usize)
        .cloned()
        .ok_or(AxmlError::StringIndexOutOfRange {
            index,
            len: strings.len(),
        })
}

fn optional_string(strings: &[String], index: u32) -> Result<Option<String>, AxmlError> {
    if index == NO_INDEX {
        Ok(None)
    } else {
        string_at(strings, index).map(Some)
    }
}

fn parse_start_element(
    r: &Reader<'_>,
    body: usize,
    chunk_end: usize,
    strings: &[String],
    resource_ids: &[u32],
) -> Result<XmlElement, AxmlError> {
    let namespace = optional_string(strings, r.u32(body)?)?;
    let name = string_at(strings, r.u32(body + 4)?)?;
    let attr_start = r.u16(body + 8)? as usize;
    let attr_size = r.u16(body + 10)? as usize;
    let attr_count = r.u16(body + 12)? as usize;
    if attr_size < 20 {
        return Err(AxmlError::TruncatedChunk {
            offset: body + 10,
            needed: 20,
            available: attr_size,
        });
    }
    let first = body + attr_start;
    if first + attr_count * attr_size > chunk_end {
        return Err(AxmlError::TruncatedChunk {
            offset: first,
            needed: attr_count * attr_size,
            available: chunk_end.saturating_sub(first),
        });
    }

    let mut attributes: Vec<XmlAttribute> = Vec::with_capacity(attr_count);
    for i in 0..attr_count {
        let at = first + i * attr_size;
        let attr_ns = optional_string(strings, r.u32(at)?)?;
        let name_index = r.u32(at + 4)?;
        let attr_name = string_at(strings, name_index)?;
        let raw = optional_string(strings, r.u32(at + 8)?)?;
        let data_type = r.u8(at + 15)?;
        let data = r.u32(at + 16)?;
        let value = match data_type {
            TYPE_NULL => TypedValue::Null,
            TYPE_REFERENCE => TypedValue::Reference(data),
            TYPE_ATTRIBUTE => TypedValue::Attribute(data),
            TYPE_STRING => TypedValue::String(string_at(strings, data)?),
            TYPE_INT_DEC => TypedValue::IntDec(data as i32),
            TYPE_INT_HEX => TypedValue::IntHex(data),
            TYPE_INT_BOOLEAN => TypedValue::Boolean(data != 0),
            other => TypedValue::Other {
                data_type: other,
                data,
            },
        };
        let attribute = XmlAttribute {
            namespace: attr_ns,
            resource_id: resource_ids.get(name_index as usize).copied(),
            name: attr_name,
            raw,
            value,
        };
        // Keep the first of any duplicated (namespace, name) pair.
        if !attributes
            .iter()
            .any(|a| a.namespace == attribute.namespace && a.name == attribute.name)
        {
            attributes.push(attribute);
        }
    }

    Ok(XmlElement {
        name,
        namespace,
        attributes,
        children: Vec::new(),
    })
}

fn parse_string_pool(
    r: &Reader<'_>,
    start: usize,
    chunk: &ChunkHeader,
) -> Result<Vec<String>, AxmlError> {
    if chunk.header_size < 28 {
        return Err(AxmlError::BadStringPool(format!(
            "header size {} < 28",
            chunk.header_size
        )));
    }
    let count = r.u32(start + 8)? as usize;
    let flags = r.u32(start + 16)?;
    let strings_start = r.u32(start + 20)? as usize;
    let end = start + chunk.size;
    let offsets_at = start + chunk.header_size;
    if offsets_at + count * 4 > end {
        return Err(AxmlError::TruncatedChunk {
            offset: offsets_at,
            needed: count * 4,
            available: end.saturating_sub(offsets_at),
        });
    }
    let utf8 = flags & UTF8_FLAG != 0;
    let base = start + strings_start;

    let mut strings = Vec::with_capacity(count);
    for i in 0..count {
        let at = base + r.u32(offsets_at + i * 4)? as usize;
        if at >= end {
            return Err(AxmlError::BadStringPool(format!(
                "string {i} starts at {at}, past the pool end {end}"
            )));
        }
        strings.push(if utf8 {
            read_utf8_string(r, at, end)?
        } else {
            read_utf16_string(r, at, end)?
        });
    }
    Ok(strings)
}

fn read_utf8_string(r: &Reader<'_>, at: usize, end: usize) -> Result<String, AxmlError> {
    // UTF-16 length first (unused), then byte length; each 1 or 2 bytes.
    let (_, n1) = utf8_len(r, at)?;
    let (byte_len, n2) = utf8_len(r, at + n1)?;
    let start = at + n1 + n2;
    if start + byte_len > end {
        return Err(AxmlError::BadStringPool(format!(
            "UTF-8 string at {at} overruns the pool"
        )));
    }
    let bytes = r.need(start, byte_len)?;
    Ok(String::from_utf8_lossy(bytes).into_owned())
}

fn utf8_len(r: &Reader<'_>, at: usize) -> Result<(usize, usize), AxmlError> {
    let first = r.u8(at)? as usize;
    if first & 0x80 != 0 {
        let second = r.u8(at + 1)? as usize;
        Ok((((first & 0x7f) << 8) | second, 2))
    } else {
        Ok((first, 1))
    }
}

fn read_utf16_string(r: &Reader<'_>, at: usize, end: usize) -> Result<String, AxmlError> {
    let first = r.u16(at)? as usize;
    let (len, header) = if first & 0x8000 != 0 {
        let second = r.u16(at + 2)? as usize;
        (((first & 0x7fff) << 16) | second, 4)
    } else {
        (first, 2)
    };
    let start = at + header;
    if start + len * 2 > end {
        return Err(AxmlError::BadStringPool(format!(
            "UTF-16 string at {at} overruns the pool"
        )));
    }
    let units: Vec<u16> = r
        .need(start, len * 2)?
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok(String::from_utf16_lossy(&units))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_bad_magic() {
        assert!(matches!(parse_axml(&[]), Err(AxmlError::BadMagic(_))));
    }

    #[test]
    fn wrong_chunk_type_is_bad_magic() {
        let data = [0x02, 0x00, 0x08, 0x00, 0x08, 0x00, 0x00, 0x00];
        assert!(matches!(parse_axml(&data), Err(AxmlError::BadMagic(_))));
    }

    #[test]
    fn length_beyond_buffer_is_truncated() {
        let data = [0x03, 0x00, 0x08, 0x00, 0x00, 0x10, 0x00, 0x00];
        assert!(matches!(
            parse_axml(&data),
            Err(AxmlError::TruncatedChunk { .. })
        ));
    }

    #[test]
    fn header_without_elements_has_no_root() {
        let data = [0x03, 0x00, 0x08, 0x00, 0x08, 0x00, 0x00, 0x00];
        assert!(matches!(
            parse_axml(&data),
            Err(AxmlError::UnbalancedElements(_))
        ));
    }

    #[test]
    fn typed_value_coercions() {
        assert_eq!(TypedValue::Boolean(true).as_bool(), Some(true));
        assert_eq!(TypedValue::String("FALSE".into()).as_bool(), Some(false));
        assert_eq!(TypedValue::Reference(0x7f01_0000).as_bool(), None);
        assert_eq!(TypedValue::IntHex(0x10).as_int(), Some(16));
        assert!(TypedValue::Attribute(1).is_reference());
    }

    proptest! {
        #[test]
        fn arbitrary_bytes_never_panic(mut bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
            if bytes.len() >= 8 {
                bytes[0] = 0x03;
                bytes[1] = 0x00;
            }
            let _ = parse_axml(&bytes);
        }
    }
}
