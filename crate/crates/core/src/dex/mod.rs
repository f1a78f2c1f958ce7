//! DEX image parsing.
//!
//! `parse_dex` materializes the ID tables and class definitions; method
//! bodies are decoded on demand from the retained image.

mod insn;
mod mutf8;

pub use insn::{Format, IndexKind, Opcode, Payload};

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{Warning, WarningKind};

const HEADER_SIZE: usize = 0x70;
const ENDIAN_CONSTANT: u32 = 0x1234_5678;
pub const NO_INDEX: u32 = 0xFFFF_FFFF;

pub const ACC_STATIC: u32 = 0x0008;
pub const ACC_NATIVE: u32 = 0x0100;
pub const ACC_INTERFACE: u32 = 0x0200;
pub const ACC_ABSTRACT: u32 = 0x0400;
pub const ACC_CONSTRUCTOR: u32 = 0x1_0000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DexError {
    #[error("bad magic: {0}")]
    BadMagic(String),
    #[error("unsupported DEX version {0:?}")]
    UnsupportedVersion(String),
    #[error("truncated {section} at offset {offset:#x}")]
    TruncatedSection { section: &'static str, offset: usize },
    #[error("{table} index {index} out of range ({len} entries) at offset {offset:#x}")]
    IndexOutOfRange {
        table: &'static str,
        index: u32,
        len: usize,
        offset: usize,
    },
    #[error("method {class}->{method} not found")]
    MethodNotFound { class: String, method: String },
    #[error("method {0} is abstract or native")]
    AbstractOrNative(String),
    #[error("malformed code in {method} at code offset {offset:#x}: {reason}")]
    MalformedCode {
        method: String,
        offset: usize,
        reason: String,
    },
}

impl DexError {
    /// File offset the error refers to, when it has one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            DexError::TruncatedSection { offset, .. }
            | DexError::IndexOutOfRange { offset, .. }
            | DexError::MalformedCode { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Prototype {
    pub shorty: String,
    pub return_type: String,
    pub parameters: Vec<String>,
}

impl Prototype {
    /// `(params)ret` descriptor form.
    pub fn descriptor(&self) -> String {
        let mut s = String::from("(");
        for p in &self.parameters {
            s.push_str(p);
        }
        s.push(')');
        s.push_str(&self.return_type);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodRef {
    pub class: String,
    pub name: String,
    pub proto: Prototype,
}

impl fmt::Display for MethodRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}{}", self.class, self.name, self.proto.descriptor())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldRef {
    pub class: String,
    pub name: String,
    pub field_type: String,
}

impl fmt::Display for FieldRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}:{}", self.class, self.name, self.field_type)
    }
}

/// Identity of a method defined in (or referenced from) a specific DEX file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodKey {
    /// Provenance: the archive entry the definition came from. Empty for
    /// library methods with no body in the program.
    pub dex: String,
    pub class: String,
    pub name: String,
    pub descriptor: String,
}

impl MethodKey {
    pub fn new(dex: &str, m: &MethodRef) -> MethodKey {
        MethodKey {
            dex: dex.to_string(),
            class: m.class.clone(),
            name: m.name.clone(),
            descriptor: m.proto.descriptor(),
        }
    }

    /// Key for a callee outside the program.
    pub fn external(m: &MethodRef) -> MethodKey {
        MethodKey::new("", m)
    }

    pub fn signature(&self) -> String {
        format!("{}->{}{}", self.class, self.name, self.descriptor)
    }
}

impl fmt::Display for MethodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.signature())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodedField {
    pub field_idx: u32,
    pub access_flags: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodedMethod {
    pub method_idx: u32,
    pub access_flags: u32,
    pub code_off: u32,
}

impl EncodedMethod {
    pub fn has_code(&self) -> bool {
        self.code_off != 0 && self.access_flags & (ACC_ABSTRACT | ACC_NATIVE) == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub descriptor: String,
    pub access_flags: u32,
    pub superclass: Option<String>,
    pub interfaces: Vec<String>,
    pub source_file: Option<String>,
    pub static_fields: Vec<EncodedField>,
    pub instance_fields: Vec<EncodedField>,
    pub direct_methods: Vec<EncodedMethod>,
    pub virtual_methods: Vec<EncodedMethod>,
}

impl ClassDef {
    /// Direct methods followed by virtual methods, in declaration order.
    pub fn methods(&self) -> impl Iterator<Item = &EncodedMethod> {
        self.direct_methods.iter().chain(self.virtual_methods.iter())
    }

    pub fn fields(&self) -> impl Iterator<Item = &EncodedField> {
        self.static_fields.iter().chain(self.instance_fields.iter())
    }

    pub fn is_interface(&self) -> bool {
        self.access_flags & ACC_INTERFACE != 0
    }
}

/// Resolved index operand of an instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reference {
    String(String),
    Type(String),
    Field(FieldRef),
    Method(MethodRef),
    Proto(Prototype),
    CallSite(u32),
    MethodHandle(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    /// Byte offset from the start of the method's instruction array.
    pub offset: u32,
    pub opcode: Opcode,
    pub registers: Vec<u16>,
    pub reference: Option<Reference>,
    pub literal: Option<i64>,
    /// Byte offset of a branch target or referenced payload.
    pub target: Option<u32>,
    /// Size in 16-bit code units.
    pub width: u32,
    pub payload: Option<Payload>,
}

impl Instruction {
    pub fn method_ref(&self) -> Option<&MethodRef> {
        match &self.reference {
            Some(Reference::Method(m)) => Some(m),
            _ => None,
        }
    }

    pub fn field_ref(&self) -> Option<&FieldRef> {
        match &self.reference {
            Some(Reference::Field(f)) => Some(f),
            _ => None,
        }
    }

    pub fn string(&self) -> Option<&str> {
        match &self.reference {
            Some(Reference::String(s)) => Some(s),
            _ => None,
        }
    }

    pub fn type_ref(&self) -> Option<&str> {
        match &self.reference {
            Some(Reference::Type(t)) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatchHandler {
    /// `None` for a catch-all handler.
    pub exception_type: Option<String>,
    /// Byte offset of the handler.
    pub target: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TryBlock {
    /// Covered byte range `[start, end)`.
    pub start: u32,
    pub end: u32,
    pub handlers: Vec<CatchHandler>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodBody {
    pub registers_size: u16,
    pub ins_size: u16,
    pub outs_size: u16,
    pub instructions: Vec<Instruction>,
    pub tries: Vec<TryBlock>,
}

impl MethodBody {
    /// Total size in code units.
    pub fn code_units(&self) -> u32 {
        self.instructions.iter().map(|i| i.width).sum()
    }

    /// Index of the instruction starting at `offset`, if any.
    pub fn index_of(&self, offset: u32) -> Option<usize> {
        self.instructions
            .binary_search_by_key(&offset, |i| i.offset)
            .ok()
    }

    /// First register holding an incoming parameter.
    pub fn first_param_register(&self) -> u16 {
        self.registers_size.saturating_sub(self.ins_size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invocation {
    pub caller: MethodKey,
    pub callee: MethodRef,
    /// Byte offset of the invoke instruction in the caller.
    pub site: u32,
    pub opcode: Opcode,
}

#[derive(Clone)]
pub struct DexFile {
    pub provenance: String,
    pub version: u32,
    pub strings: Vec<String>,
    pub types: Vec<String>,
    pub protos: Vec<Prototype>,
    pub fields: Vec<FieldRef>,
    pub methods: Vec<MethodRef>,
    pub classes: Vec<ClassDef>,
    pub warnings: Vec<Warning>,
    image: Vec<u8>,
}

impl fmt::Debug for DexFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DexFile")
            .field("provenance", &self.provenance)
            .field("version", &self.version)
            .field("strings", &self.strings.len())
            .field("types", &self.types.len())
            .field("methods", &self.methods.len())
            .field("classes", &self.classes.len())
            .finish()
    }
}

struct Cursor<'a> {
    data: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn bytes(&self, offset: usize, len: usize, section: &'static str) -> Result<&'a [u8], DexError> {
        offset
            .checked_add(len)
            .and_then(|end| self.data.get(offset..end))
            .ok_or(DexError::TruncatedSection { section, offset })
    }

    fn u16(&self, offset: usize, section: &'static str) -> Result<u16, DexError> {
        let b = self.bytes(offset, 2, section)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&self, offset: usize, section: &'static str) -> Result<u32, DexError> {
        let b = self.bytes(offset, 4, section)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn uleb128(&self, offset: &mut usize, section: &'static str) -> Result<u32, DexError> {
        let mut result: u32 = 0;
        for shift in 0..5 {
            let byte = *self
                .data
                .get(*offset)
                .ok_or(DexError::TruncatedSection { section, offset: *offset })?;
            *offset += 1;
            result |= ((byte & 0x7f) as u32) << (7 * shift);
            if byte & 0x80 == 0 {
                return Ok(result);
            }
        }
        Err(DexError::TruncatedSection { section, offset: *offset })
    }

    fn sleb128(&self, offset: &mut usize, section: &'static str) -> Result<i32, DexError> {
        let mut result: i32 = 0;
        let mut shift = 0;
        loop {
            let byte = *self
                .data
                .get(*offset)
                .ok_or(DexError::TruncatedSection { section, offset: *offset })?;
            *offset += 1;
            result |= ((byte & 0x7f) as i32) << shift;
            shift += 7;
            if byte & 0x80 == 0 {
                if shift < 32 && byte & 0x40 != 0 {
                    result |= -1i32 << shift;
                }
                return Ok(result);
            }
            if shift >= 35 {
                return Err(DexError::TruncatedSection { section, offset: *offset });
            }
        }
    }
}

fn lookup<T: Clone>(
    table: &[T],
    name: &'static str,
    index: u32,
    offset: usize,
) -> Result<T, DexError> {
    table
        .get(index as usize)
        .cloned()
        .ok_or(DexError::IndexOutOfRange {
            table: name,
            index,
            len: table.len(),
            offset,
        })
}

/// Reads `(size, offset)` for a table and checks it lies within the image.
fn table(
    c: &Cursor<'_>,
    header_at: usize,
    item_size: usize,
    section: &'static str,
) -> Result<(usize, usize), DexError> {
    let size = c.u32(header_at, "header")? as usize;
    let offset = c.u32(header_at + 4, "header")? as usize;
    if size > 0 {
        c.bytes(offset, size.saturating_mul(item_size), section)?;
    }
    Ok((size, offset))
}

fn utf16_cmp(a: &str, b: &str) -> Ordering {
    a.encode_utf16().cmp(b.encode_utf16())
}

pub fn parse_dex(data: &[u8], provenance: &str) -> Result<DexFile, DexError> {
    if data.len() < 8 || &data[..4] != b"dex\n" {
        return Err(DexError::BadMagic(format!(
            "{:02x?}",
            &data[..data.len().min(8)]
        )));
    }
    let version_text = String::from_utf8_lossy(&data[4..7]).into_owned();
    let version = match (&data[4..8], version_text.as_str()) {
        ([_, _, _, 0], "035" | "037" | "038" | "039") => version_text.parse::<u32>().unwrap_or(35),
        _ => return Err(DexError::UnsupportedVersion(version_text)),
    };
    let c = Cursor { data };
    c.bytes(0, HEADER_SIZE, "header")?;
    if c.u32(0x28, "header")? != ENDIAN_CONSTANT {
        return Err(DexError::BadMagic("byte-swapped DEX images are not supported".into()));
    }

    let mut warnings = Vec::new();

    let (string_count, string_ids_off) = table(&c, 0x38, 4, "string_ids")?;
    let mut strings = Vec::with_capacity(string_count);
    let mut repaired = 0usize;
    for i in 0..string_count {
        let mut at = c.u32(string_ids_off + i * 4, "string_ids")? as usize;
        if at >= data.len() {
            return Err(DexError::TruncatedSection {
                section: "string_data",
                offset: at,
            });
        }
        let _utf16_len = c.uleb128(&mut at, "string_data")?;
        let (text, _, bad) = mutf8::decode(&data[at..]);
        if bad {
            repaired += 1;
        }
        strings.push(text);
    }
    if repaired > 0 {
        warnings.push(Warning::new(
            WarningKind::Mutf8Repair,
            provenance,
            format!("{repaired} string(s) contained invalid MUTF-8 and were repaired"),
        ));
    }
    if let Some(pos) = strings
        .windows(2)
        .position(|w| utf16_cmp(&w[0], &w[1]) != Ordering::Less)
    {
        warnings.push(Warning::new(
            WarningKind::UnsortedStrings,
            provenance,
            format!("string pool not strictly sorted at index {}", pos + 1),
        ));
    }

    let (type_count, type_ids_off) = table(&c, 0x40, 4, "type_ids")?;
    let mut types = Vec::with_capacity(type_count);
    for i in 0..type_count {
        let at = type_ids_off + i * 4;
        types.push(lookup(&strings, "string", c.u32(at, "type_ids")?, at)?);
    }

    let type_list = |off: u32| -> Result<Vec<String>, DexError> {
        if off == 0 {
            return Ok(Vec::new());
        }
        let off = off as usize;
        let size = c.u32(off, "type_list")? as usize;
        c.bytes(off + 4, size.saturating_mul(2), "type_list")?;
        (0..size)
            .map(|k| {
                let at = off + 4 + k * 2;
                lookup(&types, "type", c.u16(at, "type_list")? as u32, at)
            })
            .collect()
    };

    let (proto_count, proto_ids_off) = table(&c, 0x48, 12, "proto_ids")?;
    let mut protos = Vec::with_capacity(proto_count);
    for i in 0..proto_count {
        let at = proto_ids_off + i * 12;
        protos.push(Prototype {
            shorty: lookup(&strings, "string", c.u32(at, "proto_ids")?, at)?,
            return_type: lookup(&types, "type", c.u32(at + 4, "proto_ids")?, at + 4)?,
            parameters: type_list(c.u32(at + 8, "proto_ids")?)?,
        });
    }

    let (field_count, field_ids_off) = table(&c, 0x50, 8, "field_ids")?;
    let mut fields = Vec::with_capacity(field_count);
    for i in 0..field_count {
        let at = field_ids_off + i * 8;
        fields.push(FieldRef {
            class: lookup(&types, "type", c.u16(at, "field_ids")? as u32, at)?,
            field_type: lookup(&types, "type", c.u16(at + 2, "field_ids")? as u32, at + 2)?,
            name: lookup(&strings, "string", c.u32(at + 4, "field_ids")?, at + 4)?,
        });
    }

    let (method_count, method_ids_off) = table(&c, 0x58, 8, "method_ids")?;
    let mut methods = Vec::with_capacity(method_count);
    for i in 0..method_count {
        let at = method_ids_off + i * 8;
        methods.push(MethodRef {
            class: lookup(&types, "type", c.u16(at, "method_ids")? as u32, at)?,
            proto: lookup(&protos, "proto", c.u16(at + 2, "method_ids")? as u32, at + 2)?,
            name: lookup(&strings, "string", c.u32(at + 4, "method_ids")?, at + 4)?,
        });
    }

    let (class_count, class_defs_off) = table(&c, 0x60, 32, "class_defs")?;
    let mut classes = Vec::with_capacity(class_count);
    for i in 0..class_count {
        let at = class_defs_off + i * 32;
        let superclass_idx = c.u32(at + 8, "class_defs")?;
        let source_idx = c.u32(at + 16, "class_defs")?;
        let mut class = ClassDef {
            descriptor: lookup(&types, "type", c.u32(at, "class_defs")?, at)?,
            access_flags: c.u32(at + 4, "class_defs")?,
            superclass: if superclass_idx == NO_INDEX {
                None
            } else {
                Some(lookup(&types, "type", superclass_idx, at + 8)?)
            },
            interfaces: type_list(c.u32(at + 12, "class_defs")?)?,
            source_file: if source_idx == NO_INDEX {
                None
            } else {
                Some(lookup(&strings, "string", source_idx, at + 16)?)
            },
            static_fields: Vec::new(),
            instance_fields: Vec::new(),
            direct_methods: Vec::new(),
            virtual_methods: Vec::new(),
        };
        let class_data_off = c.u32(at + 24, "class_defs")?;
        if class_data_off != 0 {
            read_class_data(&c, class_data_off as usize, field_count, method_count, &mut class)?;
        }
        classes.push(class);
    }

    Ok(DexFile {
        provenance: provenance.to_string(),
        version,
        strings,
        types,
        protos,
        fields,
        methods,
        classes,
        warnings,
        image: data.to_vec(),
    })
}

fn read_class_data(
    c: &Cursor<'_>,
    mut at: usize,
    field_count: usize,
    method_count: usize,
    class: &mut ClassDef,
) -> Result<(), DexError> {
    const S: &str = "class_data";
    let static_fields = c.uleb128(&mut at, S)?;
    let instance_fields = c.uleb128(&mut at, S)?;
    let direct_methods = c.uleb128(&mut at, S)?;
    let virtual_methods = c.uleb128(&mut at, S)?;

    let read_fields = |n: u32, at: &mut usize| -> Result<Vec<EncodedField>, DexError> {
        let mut idx = 0u32;
        let mut out = Vec::new();
        for _ in 0..n {
            let item_at = *at;
            idx = idx.wrapping_add(c.uleb128(at, S)?);
            let access_flags = c.uleb128(at, S)?;
            if idx as usize >= field_count {
                return Err(DexError::IndexOutOfRange {
                    table: "field",
                    index: idx,
                    len: field_count,
                    offset: item_at,
                });
            }
            out.push(EncodedField {
                field_idx: idx,
                access_flags,
            });
        }
        Ok(out)
    };
    class.static_fields = read_fields(static_fields, &mut at)?;
    class.instance_fields = read_fields(instance_fields, &mut at)?;

    let read_methods = |n: u32, at: &mut usize| -> Result<Vec<EncodedMethod>, DexError> {
        let mut idx = 0u32;
        let mut out = Vec::new();
        for _ in 0..n {
            let item_at = *at;
            idx = idx.wrapping_add(c.uleb128(at, S)?);
            let access_flags = c.uleb128(at, S)?;
            let code_off = c.uleb128(at, S)?;
            if idx as usize >= method_count {
                return Err(DexError::IndexOutOfRange {
                    table: "method",
                    index: idx,
                    len: method_count,
                    offset: item_at,
                });
            }
            out.push(EncodedMethod {
                method_idx: idx,
                access_flags,
                code_off,
            });
        }
        Ok(out)
    };
    class.direct_methods = read_methods(direct_methods, &mut at)?;
    class.virtual_methods = read_methods(virtual_methods, &mut at)?;
    Ok(())
}

/// Accepts either a descriptor (`Lcom/x/Main;`) or a dotted Java name.
fn to_descriptor(class_name: &str) -> String {
    if class_name.starts_with('L') && class_name.ends_with(';') {
        class_name.to_string()
    } else {
        format!("L{};", class_name.replace('.', "/"))
    }
}

impl DexFile {
    pub fn class(&self, class_name: &str) -> Option<&ClassDef> {
        let descriptor = to_descriptor(class_name);
        self.classes.iter().find(|c| c.descriptor == descriptor)
    }

    pub fn method_ref(&self, m: &EncodedMethod) -> &MethodRef {
        &self.methods[m.method_idx as usize]
    }

    pub fn method_key(&self, m: &EncodedMethod) -> MethodKey {
        MethodKey::new(&self.provenance, self.method_ref(m))
    }

    pub fn field_ref(&self, f: &EncodedField) -> &FieldRef {
        &self.fields[f.field_idx as usize]
    }

    /// Decodes the first method named `method_name` declared by `class_name`.
    pub fn decode_method(&self, class_name: &str, method_name: &str) -> Result<MethodBody, DexError> {
        let not_found = || DexError::MethodNotFound {
            class: class_name.to_string(),
            method: method_name.to_string(),
        };
        let class = self.class(class_name).ok_or_else(not_found)?;
        let method = class
            .methods()
            .find(|m| self.method_ref(m).name == method_name)
            .ok_or_else(not_found)?;
        self.decode_encoded(method)
    }

    /// Decodes the body of a method declared in this file.
    pub fn decode_encoded(&self, method: &EncodedMethod) -> Result<MethodBody, DexError> {
        let name = self.method_ref(method).to_string();
        if !method.has_code() {
            return Err(DexError::AbstractOrNative(name));
        }
        self.decode_code(method.code_off as usize, &name)
    }

    fn decode_code(&self, code_off: usize, method: &str) -> Result<MethodBody, DexError> {
        const S: &str = "code_item";
        let c = Cursor { data: &self.image };
        let registers_size = c.u16(code_off, S)?;
        let ins_size = c.u16(code_off + 2, S)?;
        let outs_size = c.u16(code_off + 4, S)?;
        let tries_size = c.u16(code_off + 6, S)? as usize;
        let insns_size = c.u32(code_off + 12, S)? as usize;
        let insns_at = code_off + 16;
        let raw = c.bytes(insns_at, insns_size.saturating_mul(2), S)?;
        let units: Vec<u16> = raw
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();

        let malformed = |unit: usize, reason: String| DexError::MalformedCode {
            method: method.to_string(),
            offset: unit * 2,
            reason,
        };
        if ins_size > registers_size {
            return Err(malformed(0, format!("ins_size {ins_size} > registers_size {registers_size}")));
        }
        let raw_insns = insn::decode_units(&units).map_err(|e| malformed(e.unit, e.reason))?;

        let mut instructions = Vec::with_capacity(raw_insns.len());
        for r in raw_insns {
            let operand_at = insns_at + r.unit * 2 + 2;
            let reference = match (r.opcode.index_kind(), r.index) {
                (_, None) | (IndexKind::None, _) => None,
                (IndexKind::String, Some(i)) => {
                    Some(Reference::String(lookup(&self.strings, "string", i, operand_at)?))
                }
                (IndexKind::Type, Some(i)) => {
                    Some(Reference::Type(lookup(&self.types, "type", i, operand_at)?))
                }
                (IndexKind::Field, Some(i)) => {
                    Some(Reference::Field(lookup(&self.fields, "field", i, operand_at)?))
                }
                (IndexKind::Method, Some(i)) => {
                    Some(Reference::Method(lookup(&self.methods, "method", i, operand_at)?))
                }
                (IndexKind::Proto, Some(i)) => {
                    Some(Reference::Proto(lookup(&self.protos, "proto", i, operand_at)?))
                }
                (IndexKind::CallSite, Some(i)) => Some(Reference::CallSite(i)),
                (IndexKind::MethodHandle, Some(i)) => Some(Reference::MethodHandle(i)),
            };
            if let Some(p) = r.proto_index {
                lookup(&self.protos, "proto", p, operand_at + 4)?;
            }
            for &reg in &r.registers {
                if reg >= registers_size && !r.opcode.is_payload() {
                    return Err(malformed(
                        r.unit,
                        format!("register v{reg} out of range (registers_size {registers_size})"),
                    ));
                }
            }
            let target = match r.target {
                None => None,
                Some(t) if t < 0 || t as usize >= units.len() => {
                    return Err(malformed(r.unit, format!("branch target {t} outside the code")));
                }
                Some(t) => Some((t as u32) * 2),
            };
            instructions.push(Instruction {
                offset: (r.unit * 2) as u32,
                opcode: r.opcode,
                registers: r.registers,
                reference,
                literal: r.literal,
                target,
                width: r.width as u32,
                payload: r.payload,
            });
        }

        let body_offsets: Vec<u32> = instructions.iter().map(|i| i.offset).collect();
        let on_boundary = |off: u32| body_offsets.binary_search(&off).is_ok();
        for insn in &instructions {
            if let Some(t) = insn.target {
                if !on_boundary(t) {
                    return Err(malformed(
                        insn.offset as usize / 2,
                        format!("branch target {t:#x} is not an instruction boundary"),
                    ));
                }
            }
        }

        let mut tries = Vec::with_capacity(tries_size);
        if tries_size > 0 {
            let tries_at = insns_at + insns_size * 2 + if insns_size % 2 == 1 { 2 } else { 0 };
            let handlers_at = tries_at + tries_size * 8;
            for k in 0..tries_size {
                let at = tries_at + k * 8;
                let start_addr = c.u32(at, "try_item")? as usize;
                let insn_count = c.u16(at + 4, "try_item")? as usize;
                let handler_off = c.u16(at + 6, "try_item")? as usize;
                let mut hat = handlers_at + handler_off;
                let size = c.sleb128(&mut hat, "encoded_catch_handler")?;
                let mut handlers = Vec::new();
                for _ in 0..size.unsigned_abs() {
                    let type_at = hat;
                    let type_idx = c.uleb128(&mut hat, "encoded_catch_handler")?;
                    let addr = c.uleb128(&mut hat, "encoded_catch_handler")?;
                    handlers.push(CatchHandler {
                        exception_type: Some(lookup(&self.types, "type", type_idx, type_at)?),
                        target: addr * 2,
                    });
                }
                if size <= 0 {
                    let addr = c.uleb128(&mut hat, "encoded_catch_handler")?;
                    handlers.push(CatchHandler {
                        exception_type: None,
                        target: addr * 2,
                    });
                }
                for h in &handlers {
                    if !on_boundary(h.target) {
                        return Err(malformed(
                            start_addr,
                            format!("handler at {:#x} is not an instruction boundary", h.target),
                        ));
                    }
                }
                tries.push(TryBlock {
                    start: (start_addr * 2) as u32,
                    end: ((start_addr + insn_count) * 2) as u32,
                    handlers,
                });
            }
        }

        Ok(MethodBody {
            registers_size,
            ins_size,
            outs_size,
            instructions,
            tries,
        })
    }

    /// Every invoke-kind call site, in class, method, then offset order.
    /// Methods whose code cannot be decoded are skipped.
    pub fn all_invocations(&self) -> Vec<Invocation> {
        let mut out = Vec::new();
        for class in &self.classes {
            for m in class.methods().filter(|m| m.has_code()) {
                let Ok(body) = self.decode_encoded(m) else {
                    continue;
                };
                let caller = self.method_key(m);
                for insn in &body.instructions {
                    if !insn.opcode.is_invoke() {
                        continue;
                    }
                    if let Some(callee) = insn.method_ref() {
                        out.push(Invocation {
                            caller: caller.clone(),
                            callee: callee.clone(),
                            site: insn.offset,
                            opcode: insn.opcode,
                        });
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_bad_magic() {
        assert!(matches!(parse_dex(&[], "classes.dex"), Err(DexError::BadMagic(_))));
    }

    #[test]
    fn unknown_version() {
        let mut data = b"dex\n036\0".to_vec();
        data.resize(HEADER_SIZE, 0);
        assert_eq!(
            parse_dex(&data, "classes.dex").unwrap_err(),
            DexError::UnsupportedVersion("036".into())
        );
    }

    #[test]
    fn string_ids_past_eof_is_truncated() {
        let mut data = b"dex\n035\0".to_vec();
        data.resize(HEADER_SIZE, 0);
        data[0x28..0x2c].copy_from_slice(&ENDIAN_CONSTANT.to_le_bytes());
        data[0x38..0x3c].copy_from_slice(&4u32.to_le_bytes());
        data[0x3c..0x40].copy_from_slice(&0x1000u32.to_le_bytes());
        assert!(matches!(
            parse_dex(&data, "classes.dex"),
            Err(DexError::TruncatedSection { section: "string_ids", .. })
        ));
    }

    #[test]
    fn short_header_is_truncated() {
        assert!(matches!(
            parse_dex(b"dex\n035\0\0\0", "classes.dex"),
            Err(DexError::TruncatedSection { section: "header", .. })
        ));
    }

    #[test]
    fn prototype_descriptor() {
        let p = Prototype {
            shorty: "LL".into(),
            return_type: "Ljava/security/MessageDigest;".into(),
            parameters: vec!["Ljava/lang/String;".into()],
        };
        assert_eq!(p.descriptor(), "(Ljava/lang/String;)Ljava/security/MessageDigest;");
    }

    #[test]
    fn sleb_decoding() {
        let data = [0x7f, 0x80, 0x7f, 0x02];
        let c = Cursor { data: &data };
        let mut at = 0;
        assert_eq!(c.sleb128(&mut at, "t").unwrap(), -1);
        assert_eq!(c.sleb128(&mut at, "t").unwrap(), -128);
        assert_eq!(c.sleb128(&mut at, "t").unwrap(), 2);
    }

    #[test]
    fn descriptor_normalization() {
        assert_eq!(to_descriptor("com.x.Main"), "Lcom/x/Main;");
        assert_eq!(to_descriptor("Lcom/x/Main;"), "Lcom/x/Main;");
    }
}
