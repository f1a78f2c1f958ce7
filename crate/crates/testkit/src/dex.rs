//! A small smali-style assembler producing DEX version 035 images.
//!
//! ```text
//! .class public Lcom/example/Main;
//! .super Landroid/app/Activity;
//! .implements Landroid/view/View$OnClickListener;
//! .field private static key:Ljava/lang/String;
//! .method public onCreate(Landroid/os/Bundle;)V
//!     .registers 3
//!     const-string v0, "MD5"
//!     invoke-static {v0}, Ljava/security/MessageDigest;->getInstance(Ljava/lang/String;)Ljava/security/MessageDigest;
//!     return-void
//! .end method
//! ```
//!
//! Supported: every non-polymorphic Dalvik instruction, `pN` parameter
//! registers, labels, `.catch`/`.catchall`, and packed-switch, sparse-switch
//! and array-data payloads. Tables are sorted as the format requires. The
//! SHA-1 signature field is left zero; the Adler-32 checksum is filled in.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for AsmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for AsmError {}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, AsmError> {
    Err(AsmError {
        line,
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fmt {
    F10x,
    F12x,
    F11n,
    F11x,
    F10t,
    F20t,
    F22x,
    F21t,
    F21s,
    F21h,
    F21c,
    F23x,
    F22b,
    F22t,
    F22s,
    F22c,
    F30t,
    F32x,
    F31i,
    F31t,
    F31c,
    F35c,
    F3rc,
    F51l,
}

impl Fmt {
    fn units(self) -> u32 {
        use Fmt::*;
        match self {
            F10x | F12x | F11n | F11x | F10t => 1,
            F20t | F22x | F21t | F21s | F21h | F21c | F23x | F22b | F22t | F22s | F22c => 2,
            F30t | F32x | F31i | F31t | F31c | F35c | F3rc => 3,
            F51l => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RefKind {
    None,
    String,
    Type,
    Field,
    Method,
}

fn lookup_op(m: &str) -> Option<(u8, Fmt, RefKind)> {
    use Fmt::*;
    use RefKind as R;
    let fixed: &[(&str, u8, Fmt, RefKind)] = &[
        ("nop", 0x00, F10x, R::None),
        ("move", 0x01, F12x, R::None),
        ("move/from16", 0x02, F22x, R::None),
        ("move/16", 0x03, F32x, R::None),
        ("move-wide", 0x04, F12x, R::None),
        ("move-wide/from16", 0x05, F22x, R::None),
        ("move-wide/16", 0x06, F32x, R::None),
        ("move-object", 0x07, F12x, R::None),
        ("move-object/from16", 0x08, F22x, R::None),
        ("move-object/16", 0x09, F32x, R::None),
        ("move-result", 0x0a, F11x, R::None),
        ("move-result-wide", 0x0b, F11x, R::None),
        ("move-result-object", 0x0c, F11x, R::None),
        ("move-exception", 0x0d, F11x, R::None),
        ("return-void", 0x0e, F10x, R::None),
        ("return", 0x0f, F11x, R::None),
        ("return-wide", 0x10, F11x, R::None),
        ("return-object", 0x11, F11x, R::None),
        ("const/4", 0x12, F11n, R::None),
        ("const/16", 0x13, F21s, R::None),
        ("const", 0x14, F31i, R::None),
        ("const/high16", 0x15, F21h, R::None),
        ("const-wide/16", 0x16, F21s, R::None),
        ("const-wide/32", 0x17, F31i, R::None),
        ("const-wide", 0x18, F51l, R::None),
        ("const-wide/high16", 0x19, F21h, R::None),
        ("const-string", 0x1a, F21c, R::String),
        ("const-string/jumbo", 0x1b, F31c, R::String),
        ("const-class", 0x1c, F21c, R::Type),
        ("monitor-enter", 0x1d, F11x, R::None),
        ("monitor-exit", 0x1e, F11x, R::None),
        ("check-cast", 0x1f, F21c, R::Type),
        ("instance-of", 0x20, F22c, R::Type),
        ("array-length", 0x21, F12x, R::None),
        ("new-instance", 0x22, F21c, R::Type),
        ("new-array", 0x23, F22c, R::Type),
        ("filled-new-array", 0x24, F35c, R::Type),
        ("filled-new-array/range", 0x25, F3rc, R::Type),
        ("fill-array-data", 0x26, F31t, R::None),
        ("throw", 0x27, F11x, R::None),
        ("goto", 0x28, F10t, R::None),
        ("goto/16", 0x29, F20t, R::None),
        ("goto/32", 0x2a, F30t, R::None),
        ("packed-switch", 0x2b, F31t, R::None),
        ("sparse-switch", 0x2c, F31t, R::None),
    ];
    if let Some(&(_, op, f, r)) = fixed.iter().find(|e| e.0 == m) {
        return Some((op, f, r));
    }
    let groups: &[(&[&str], u8, Fmt, RefKind)] = &[
        (&["cmpl-float", "cmpg-float", "cmpl-double", "cmpg-double", "cmp-long"], 0x2d, F23x, R::None),
        (&["if-eq", "if-ne", "if-lt", "if-ge", "if-gt", "if-le"], 0x32, F22t, R::None),
        (&["if-eqz", "if-nez", "if-ltz", "if-gez", "if-gtz", "if-lez"], 0x38, F21t, R::None),
        (
            &["aget", "aget-wide", "aget-object", "aget-boolean", "aget-byte", "aget-char", "aget-short",
              "aput", "aput-wide", "aput-object", "aput-boolean", "aput-byte", "aput-char", "aput-short"],
            0x44, F23x, R::None,
        ),
        (
            &["iget", "iget-wide", "iget-object", "iget-boolean", "iget-byte", "iget-char", "iget-short",
              "iput", "iput-wide", "iput-object", "iput-boolean", "iput-byte", "iput-char", "iput-short"],
            0x52, F22c, R::Field,
        ),
        (
            &["sget", "sget-wide", "sget-object", "sget-boolean", "sget-byte", "sget-char", "sget-short",
              "sput", "sput-wide", "sput-object", "sput-boolean", "sput-byte", "sput-char", "sput-short"],
            0x60, F21c, R::Field,
        ),
        (&["invoke-virtual", "invoke-super", "invoke-direct", "invoke-static", "invoke-interface"], 0x6e, F35c, R::Method),
        (
            &["invoke-virtual/range", "invoke-super/range", "invoke-direct/range", "invoke-static/range",
              "invoke-interface/range"],
            0x74, F3rc, R::Method,
        ),
    ];
    for (names, base, f, r) in groups {
        if let Some(i) = names.iter().position(|n| *n == m) {
            return Some((base + i as u8, *f, *r));
        }
    }
    const UN: [&str; 21] = [
        "neg-int", "not-int", "neg-long", "not-long", "neg-float", "neg-double", "int-to-long", "int-to-float",
        "int-to-double", "long-to-int", "long-to-float", "long-to-double", "float-to-int", "float-to-long",
        "float-to-double", "double-to-int", "double-to-long", "double-to-float", "int-to-byte", "int-to-char",
        "int-to-short",
    ];
    if let Some(i) = UN.iter().position(|n| *n == m) {
        return Some((0x7b + i as u8, F12x, R::None));
    }
    const BIN: [&str; 32] = [
        "add-int", "sub-int", "mul-int", "div-int", "rem-int", "and-int", "or-int", "xor-int", "shl-int", "shr-int",
        "ushr-int", "add-long", "sub-long", "mul-long", "div-long", "rem-long", "and-long", "or-long", "xor-long",
        "shl-long", "shr-long", "ushr-long", "add-float", "sub-float", "mul-float", "div-float", "rem-float",
        "add-double", "sub-double", "mul-double", "div-double", "rem-double",
    ];
    if let Some(base) = m.strip_suffix("/2addr") {
        return BIN.iter().position(|n| *n == base).map(|i| (0xb0 + i as u8, F12x, R::None));
    }
    if let Some(i) = BIN.iter().position(|n| *n == m) {
        return Some((0x90 + i as u8, F23x, R::None));
    }
    const L16: [&str; 8] = [
        "add-int/lit16", "rsub-int", "mul-int/lit16", "div-int/lit16", "rem-int/lit16", "and-int/lit16",
        "or-int/lit16", "xor-int/lit16",
    ];
    if let Some(i) = L16.iter().position(|n| *n == m) {
        return Some((0xd0 + i as u8, F22s, R::None));
    }
    const L8: [&str; 11] = [
        "add-int/lit8", "rsub-int/lit8", "mul-int/lit8", "div-int/lit8", "rem-int/lit8", "and-int/lit8",
        "or-int/lit8", "xor-int/lit8", "shl-int/lit8", "shr-int/lit8", "ushr-int/lit8",
    ];
    L8.iter().position(|n| *n == m).map(|i| (0xd8 + i as u8, F22b, R::None))
}

// ---------------------------------------------------------------------------
// Symbol listing

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefSym {
    String(String),
    Type(String),
    Field(String),
    Method(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayloadSym {
    /// Targets are in code units relative to the switch instruction.
    PackedSwitch { first_key: i32, targets: Vec<i32> },
    SparseSwitch { keys: Vec<i32>, targets: Vec<i32> },
    FillArrayData { element_width: u16, element_count: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsnSym {
    /// Byte offset from the start of the method's code.
    pub offset: u32,
    pub mnemonic: String,
    pub opcode: u16,
    pub registers: Vec<u16>,
    pub literal: Option<i64>,
    /// Absolute byte offset of a branch or payload target.
    pub target: Option<u32>,
    pub reference: Option<RefSym>,
    pub payload: Option<PayloadSym>,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrySym {
    /// Byte offsets, end exclusive.
    pub start: u32,
    pub end: u32,
    /// `(exception type or None for catch-all, handler byte offset)`.
    pub handlers: Vec<(Option<String>, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSym {
    pub registers: u16,
    pub ins: u16,
    pub outs: u16,
    pub insns: Vec<InsnSym>,
    pub tries: Vec<TrySym>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodSym {
    pub class: String,
    pub name: String,
    pub descriptor: String,
    pub access: u32,
    pub code: Option<CodeSym>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSym {
    pub class: String,
    pub name: String,
    pub field_type: String,
    pub access: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSym {
    pub descriptor: String,
    pub access: u32,
    pub superclass: Option<String>,
    pub interfaces: Vec<String>,
    pub source_file: Option<String>,
    pub static_fields: Vec<FieldSym>,
    pub instance_fields: Vec<FieldSym>,
    pub direct_methods: Vec<MethodSym>,
    pub virtual_methods: Vec<MethodSym>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtoSym {
    pub shorty: String,
    pub return_type: String,
    pub parameters: Vec<String>,
}

/// Everything an assembled image should decode back to.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Symbols {
    pub strings: Vec<String>,
    pub types: Vec<String>,
    pub protos: Vec<ProtoSym>,
    /// `(class, name, type)`
    pub fields: Vec<(String, String, String)>,
    /// `(class, name, descriptor)`
    pub methods: Vec<(String, String, String)>,
    pub classes: Vec<ClassSym>,
}

impl Symbols {
    pub fn class(&self, descriptor: &str) -> Option<&ClassSym> {
        self.classes.iter().find(|c| c.descriptor == descriptor)
    }

    pub fn method(&self, class: &str, name: &str) -> Option<&MethodSym> {
        let c = self.class(class)?;
        c.direct_methods.iter().chain(&c.virtual_methods).find(|m| m.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct Assembled {
    pub bytes: Vec<u8>,
    pub symbols: Symbols,
}

// ---------------------------------------------------------------------------
// Source parsing

pub const ACC_PUBLIC: u32 = 0x1;
pub const ACC_PRIVATE: u32 = 0x2;
pub const ACC_STATIC: u32 = 0x8;
pub const ACC_CONSTRUCTOR: u32 = 0x10000;

fn access_flag(word: &str) -> Option<u32> {
    Some(match word {
        "public" => 0x1,
        "private" => 0x2,
        "protected" => 0x4,
        "static" => 0x8,
        "final" => 0x10,
        "synchronized" => 0x20,
        "volatile" | "bridge" => 0x40,
        "transient" | "varargs" => 0x80,
        "native" => 0x100,
        "interface" => 0x200,
        "abstract" => 0x400,
        "strict" => 0x800,
        "synthetic" => 0x1000,
        "annotation" => 0x2000,
        "enum" => 0x4000,
        "constructor" => 0x10000,
        "declared-synchronized" => 0x20000,
        _ => return None,
    })
}

#[derive(Debug, Clone)]
enum Item {
    Label(String),
    Insn {
        line: usize,
        mnemonic: String,
        operands: Vec<String>,
    },
    Packed {
        line: usize,
        first_key: i32,
        labels: Vec<String>,
    },
    Sparse {
        line: usize,
        cases: Vec<(i32, String)>,
    },
    Array {
        width: u16,
        values: Vec<i64>,
    },
}

#[derive(Debug, Clone)]
struct CatchSrc {
    line: usize,
    exception: Option<String>,
    start: String,
    end: String,
    handler: String,
}

#[derive(Debug, Clone)]
struct MethodSrc {
    line: usize,
    name: String,
    descriptor: String,
    access: u32,
    registers: Option<u16>,
    locals: Option<u16>,
    items: Vec<Item>,
    catches: Vec<CatchSrc>,
}

#[derive(Debug, Clone)]
struct ClassSrc {
    descriptor: String,
    access: u32,
    superclass: Option<String>,
    interfaces: Vec<String>,
    source: Option<String>,
    fields: Vec<FieldSym>,
    methods: Vec<MethodSrc>,
}

/// Splits on commas outside quotes and braces.
fn split_operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut escaped = false;
    let mut depth = 0;
    for ch in s.chars() {
        if quoted {
            cur.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                quoted = false;
            }
            continue;
        }
        match ch {
            '"' => {
                quoted = true;
                cur.push(ch);
            }
            '{' => {
                depth += 1;
                cur.push(ch);
            }
            '}' => {
                depth -= 1;
                cur.push(ch);
            }
            ',' if depth == 0 => out.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(ch),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

/// Drops a trailing `#` comment that is not inside a string literal.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    let mut escaped = false;
    for (i, ch) in line.char_indices() {
        if quoted {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                quoted = false;
            }
        } else if ch == '"' {
            quoted = true;
        } else if ch == '#' {
            return &line[..i];
        }
    }
    line
}

fn parse_literal(s: &str, line: usize) -> Result<i64, AsmError> {
    let t = s.trim().trim_end_matches(['L', 'l', 't', 's']);
    let (neg, t) = match t.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, t),
    };
    let v = if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(h, 16).map(|v| v as i64)
    } else {
        t.parse::<i64>()
    };
    match v {
        Ok(v) => Ok(if neg { v.wrapping_neg() } else { v }),
        Err(_) => err(line, format!("bad literal {s:?}")),
    }
}

fn parse_string_literal(s: &str, line: usize) -> Result<String, AsmError> {
    let inner = s
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .ok_or_else(|| AsmError {
            line,
            message: format!("expected a string literal, got {s}"),
        })?;
    let mut out = String::new();
    let mut units: Vec<u16> = Vec::new();
    let mut chars = inner.chars();
    let flush = |units: &mut Vec<u16>, out: &mut String| {
        if !units.is_empty() {
            out.push_str(&String::from_utf16_lossy(units));
            units.clear();
        }
    };
    while let Some(c) = chars.next() {
        if c != '\\' {
            flush(&mut units, &mut out);
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('0') => out.push('\0'),
            Some('"') => out.push('"'),
            Some('\'') => out.push('\''),
            Some('\\') => out.push('\\'),
            Some('u') => {
                let hex: String = chars.by_ref().take(4).collect();
                let u = u16::from_str_radix(&hex, 16).map_err(|_| AsmError {
                    line,
                    message: format!("bad \\u escape {hex}"),
                })?;
                units.push(u);
                continue;
            }
            other => return err(line, format!("unknown escape \\{other:?}")),
        }
        flush(&mut units, &mut out);
    }
    flush(&mut units, &mut out);
    Ok(out)
}

/// Parameter types of a method descriptor.
pub fn descriptor_params(desc: &str) -> Option<(Vec<String>, String)> {
    let inner = desc.strip_prefix('(')?;
    let (params, ret) = inner.split_once(')')?;
    let mut out = Vec::new();
    let b = params.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let start = i;
        while b[i] == b'[' {
            i += 1;
        }
        if b[i] == b'L' {
            i += params[i..].find(';')? + 1;
        } else {
            i += 1;
        }
        out.push(params[start..i].to_string());
    }
    Some((out, ret.to_string()))
}

fn type_words(t: &str) -> u16 {
    if t == "J" || t == "D" {
        2
    } else {
        1
    }
}

fn shorty(t: &str) -> char {
    match t.as_bytes()[0] {
        b'[' | b'L' => 'L',
        c => c as char,
    }
}

fn parse_source(src: &str) -> Result<Vec<ClassSrc>, AsmError> {
    let mut classes: Vec<ClassSrc> = Vec::new();
    let mut method: Option<MethodSrc> = None;
    let mut lines = src.lines().enumerate().map(|(i, l)| (i + 1, strip_comment(l).trim()));
    while let Some((ln, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();

        if let Some(m) = method.as_mut() {
            match head {
                ".end" if rest == "method" => {
                    let m = method.take().expect("in method");
                    classes.last_mut().expect("method inside class").methods.push(m);
                }
                ".registers" => m.registers = Some(parse_literal(rest, ln)? as u16),
                ".locals" => m.locals = Some(parse_literal(rest, ln)? as u16),
                ".line" | ".param" | ".prologue" | ".local" | ".end local" => {}
                ".catch" | ".catchall" => {
                    let (exception, range) = if head == ".catch" {
                        let (t, r) = rest.split_once(char::is_whitespace).ok_or_else(|| AsmError {
                            line: ln,
                            message: "malformed .catch".into(),
                        })?;
                        (Some(t.to_string()), r.trim())
                    } else {
                        (None, rest)
                    };
                    let open = range.find('{');
                    let close = range.find('}');
                    let (Some(o), Some(c)) = (open, close) else {
                        return err(ln, "malformed catch range");
                    };
                    let (start, end) = range[o + 1..c].split_once("..").ok_or_else(|| AsmError {
                        line: ln,
                        message: "catch range needs `..`".into(),
                    })?;
                    m.catches.push(CatchSrc {
                        line: ln,
                        exception,
                        start: start.trim().trim_start_matches(':').to_string(),
                        end: end.trim().trim_start_matches(':').to_string(),
                        handler: range[c + 1..].trim().trim_start_matches(':').to_string(),
                    });
                }
                ".packed-switch" => {
                    let first_key = parse_literal(rest, ln)? as i32;
                    let mut labels = Vec::new();
                    for (l2, body) in lines.by_ref() {
                        if body == ".end packed-switch" {
                            break;
                        }
                        if !body.is_empty() {
                            labels.push(body.trim_start_matches(':').to_string());
                        }
                        let _ = l2;
                    }
                    m.items.push(Item::Packed {
                        line: ln,
                        first_key,
                        labels,
                    });
                }
                ".sparse-switch" => {
                    let mut cases = Vec::new();
                    for (l2, body) in lines.by_ref() {
                        if body == ".end sparse-switch" {
                            break;
                        }
                        if body.is_empty() {
                            continue;
                        }
                        let (k, l) = body.split_once("->").ok_or_else(|| AsmError {
                            line: l2,
                            message: "sparse-switch case needs `->`".into(),
                        })?;
                        cases.push((parse_literal(k, l2)? as i32, l.trim().trim_start_matches(':').to_string()));
                    }
                    m.items.push(Item::Sparse { line: ln, cases });
                }
                ".array-data" => {
                    let width = parse_literal(rest, ln)? as u16;
                    if ![1, 2, 4, 8].contains(&width) {
                        return err(ln, format!("bad array element width {width}"));
                    }
                    let mut values = Vec::new();
                    for (l2, body) in lines.by_ref() {
                        if body == ".end array-data" {
                            break;
                        }
                        for tok in body.split_whitespace() {
                            values.push(parse_literal(tok, l2)?);
                        }
                    }
                    m.items.push(Item::Array { width, values });
                }
                _ if head.starts_with(':') => m.items.push(Item::Label(head[1..].to_string())),
                _ if head.starts_with('.') => return err(ln, format!("unknown directive {head}")),
                _ => m.items.push(Item::Insn {
                    line: ln,
                    mnemonic: head.to_string(),
                    operands: split_operands(rest),
                }),
            }
            continue;
        }

        match head {
            ".class" => {
                let words: Vec<&str> = rest.split_whitespace().collect();
                let Some((desc, flags)) = words.split_last() else {
                    return err(ln, ".class needs a descriptor");
                };
                let mut access = 0;
                for f in flags {
                    access |= access_flag(f).ok_or_else(|| AsmError {
                        line: ln,
                        message: format!("unknown flag {f}"),
                    })?;
                }
                classes.push(ClassSrc {
                    descriptor: desc.to_string(),
                    access,
                    superclass: Some("Ljava/lang/Object;".into()),
                    interfaces: Vec::new(),
                    source: None,
                    fields: Vec::new(),
                    methods: Vec::new(),
                });
            }
            ".super" | ".implements" | ".source" | ".field" | ".method" if classes.is_empty() => {
                return err(ln, format!("{head} outside a class"));
            }
            ".super" => classes.last_mut().unwrap().superclass = Some(rest.to_string()),
            ".implements" => classes.last_mut().unwrap().interfaces.push(rest.to_string()),
            ".source" => classes.last_mut().unwrap().source = Some(parse_string_literal(rest, ln)?),
            ".field" => {
                let words: Vec<&str> = rest.split_whitespace().collect();
                let Some((decl, flags)) = words.split_last() else {
                    return err(ln, ".field needs a declaration");
                };
                let (name, ty) = decl.split_once(':').ok_or_else(|| AsmError {
                    line: ln,
                    message: "field declaration is name:Type".into(),
                })?;
                let mut access = 0;
                for f in flags {
                    access |= access_flag(f).ok_or_else(|| AsmError {
                        line: ln,
                        message: format!("unknown flag {f}"),
                    })?;
                }
                let class = classes.last_mut().unwrap();
                class.fields.push(FieldSym {
                    class: class.descriptor.clone(),
                    name: name.to_string(),
                    field_type: ty.to_string(),
                    access,
                });
            }
            ".method" => {
                let words: Vec<&str> = rest.split_whitespace().collect();
                let Some((decl, flags)) = words.split_last() else {
                    return err(ln, ".method needs a declaration");
                };
                let paren = decl.find('(').ok_or_else(|| AsmError {
                    line: ln,
                    message: "method declaration is name(params)R".into(),
                })?;
                let mut access = 0;
                for f in flags {
                    access |= access_flag(f).ok_or_else(|| AsmError {
                        line: ln,
                        message: format!("unknown flag {f}"),
                    })?;
                }
                let name = decl[..paren].to_string();
                if name == "<init>" || name == "<clinit>" {
                    access |= ACC_CONSTRUCTOR;
                }
                if descriptor_params(&decl[paren..]).is_none() {
                    return err(ln, format!("bad method descriptor {}", &decl[paren..]));
                }
                method = Some(MethodSrc {
                    line: ln,
                    name,
                    descriptor: decl[paren..].to_string(),
                    access,
                    registers: None,
                    locals: None,
                    items: Vec::new(),
                    catches: Vec::new(),
                });
            }
            ".end" if rest == "class" => {}
            _ => return err(ln, format!("unexpected {head} outside a method")),
        }
    }
    if let Some(m) = method {
        return err(m.line, format!("method {} is missing .end method", m.name));
    }
    Ok(classes)
}

// ---------------------------------------------------------------------------
// Symbol tables

fn utf16_cmp(a: &str, b: &str) -> Ordering {
    a.encode_utf16().cmp(b.encode_utf16())
}

#[derive(Default)]
struct Pools {
    strings: BTreeSet<String>,
    types: BTreeSet<String>,
    protos: BTreeSet<String>,
    fields: BTreeSet<(String, String, String)>,
    methods: BTreeSet<(String, String, String)>,
}

fn parse_method_ref(s: &str) -> Option<(String, String, String)> {
    let (class, rest) = s.split_once("->")?;
    let paren = rest.find('(')?;
    descriptor_params(&rest[paren..])?;
    Some((class.to_string(), rest[..paren].to_string(), rest[paren..].to_string()))
}

fn parse_field_ref(s: &str) -> Option<(String, String, String)> {
    let (class, rest) = s.split_once("->")?;
    let (name, ty) = rest.split_once(':')?;
    Some((class.to_string(), name.to_string(), ty.to_string()))
}

impl Pools {
    fn add_type(&mut self, t: &str) {
        self.types.insert(t.to_string());
        self.strings.insert(t.to_string());
    }

    fn add_proto(&mut self, desc: &str) {
        let (params, ret) = descriptor_params(desc).expect("validated descriptor");
        let short: String = std::iter::once(&ret).chain(&params).map(|t| shorty(t)).collect();
        self.strings.insert(short);
        self.add_type(&ret);
        for p in &params {
            self.add_type(p);
        }
        self.protos.insert(desc.to_string());
    }

    fn add_field(&mut self, f: (String, String, String)) {
        self.add_type(&f.0);
        self.add_type(&f.2);
        self.strings.insert(f.1.clone());
        self.fields.insert(f);
    }

    fn add_method(&mut self, m: (String, String, String)) {
        self.add_type(&m.0);
        self.strings.insert(m.1.clone());
        self.add_proto(&m.2);
        self.methods.insert(m);
    }
}

struct Tables {
    strings: Vec<String>,
    types: Vec<String>,
    protos: Vec<(String, ProtoSym)>,
    fields: Vec<(String, String, String)>,
    methods: Vec<(String, String, String)>,
    string_idx: HashMap<String, u32>,
    type_idx: HashMap<String, u32>,
    proto_idx: HashMap<String, u32>,
    field_idx: HashMap<(String, String, String), u32>,
    method_idx: HashMap<(String, String, String), u32>,
}

impl Tables {
    fn build(p: Pools) -> Tables {
        let mut strings: Vec<String> = p.strings.into_iter().collect();
        strings.sort_by(|a, b| utf16_cmp(a, b));
        let string_idx: HashMap<String, u32> =
            strings.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();

        let mut types: Vec<String> = p.types.into_iter().collect();
        types.sort_by_key(|t| string_idx[t]);
        let type_idx: HashMap<String, u32> = types.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();

        let mut protos: Vec<(String, ProtoSym)> = p
            .protos
            .into_iter()
            .map(|d| {
                let (params, ret) = descriptor_params(&d).expect("validated");
                let short = std::iter::once(&ret).chain(&params).map(|t| shorty(t)).collect();
                (
                    d,
                    ProtoSym {
                        shorty: short,
                        return_type: ret,
                        parameters: params,
                    },
                )
            })
            .collect();
        protos.sort_by_key(|(_, p)| {
            (
                type_idx[&p.return_type],
                p.parameters.iter().map(|t| type_idx[t]).collect::<Vec<_>>(),
            )
        });
        let proto_idx: HashMap<String, u32> =
            protos.iter().enumerate().map(|(i, (d, _))| (d.clone(), i as u32)).collect();

        let mut fields: Vec<(String, String, String)> = p.fields.into_iter().collect();
        fields.sort_by_key(|f| (type_idx[&f.0], string_idx[&f.1], type_idx[&f.2]));
        let field_idx = fields.iter().enumerate().map(|(i, f)| (f.clone(), i as u32)).collect();

        let mut methods: Vec<(String, String, String)> = p.methods.into_iter().collect();
        methods.sort_by_key(|m| (type_idx[&m.0], string_idx[&m.1], proto_idx[&m.2]));
        let method_idx = methods.iter().enumerate().map(|(i, m)| (m.clone(), i as u32)).collect();

        Tables {
            strings,
            types,
            protos,
            fields,
            methods,
            string_idx,
            type_idx,
            proto_idx,
            field_idx,
            method_idx,
        }
    }
}

// ---------------------------------------------------------------------------
// Code assembly

#[derive(Debug)]
enum Operand {
    Reg(u16),
    Regs(Vec<u16>),
    Label(String),
    Lit(i64),
    Ref(RefSym),
}

struct Layout {
    /// `(unit address, item index)`, plus alignment nops as `usize::MAX`.
    slots: Vec<(u32, usize)>,
    labels: HashMap<String, u32>,
    units: u32,
}

fn item_units(item: &Item, line_fmt: Option<Fmt>) -> u32 {
    match item {
        Item::Label(_) => 0,
        Item::Insn { .. } => line_fmt.map_or(0, Fmt::units),
        Item::Packed { labels, .. } => 4 + labels.len() as u32 * 2,
        Item::Sparse { cases, .. } => 2 + cases.len() as u32 * 4,
        Item::Array { width, values } => 4 + (values.len() as u32 * *width as u32).div_ceil(2),
    }
}

fn layout(items: &[Item]) -> Result<Layout, AsmError> {
    let mut slots = Vec::new();
    let mut labels = HashMap::new();
    let mut at = 0u32;
    for (i, item) in items.iter().enumerate() {
        let fmt = match item {
            Item::Insn { line, mnemonic, .. } => match lookup_op(mnemonic) {
                Some((_, f, _)) => Some(f),
                None => return err(*line, format!("unknown instruction {mnemonic}")),
            },
            _ => None,
        };
        match item {
            Item::Label(name) => {
                labels.insert(name.clone(), at);
                continue;
            }
            Item::Packed { .. } | Item::Sparse { .. } | Item::Array { .. } if at % 2 == 1 => {
                slots.push((at, usize::MAX));
                at += 1;
                // A label written just before the payload names the payload.
                for (k, v) in labels.iter_mut() {
                    if *v == at - 1 && items[..i].iter().rev().take_while(|x| matches!(x, Item::Label(_))).any(|x| matches!(x, Item::Label(n) if n == k)) {
                        *v = at;
                    }
                }
            }
            _ => {}
        }
        slots.push((at, i));
        at += item_units(item, fmt);
    }
    Ok(Layout {
        slots,
        labels,
        units: at,
    })
}

struct MethodCtx<'a> {
    tables: &'a Tables,
    registers: u16,
    ins: u16,
    labels: &'a HashMap<String, u32>,
}

impl MethodCtx<'_> {
    fn reg(&self, tok: &str, line: usize) -> Result<u16, AsmError> {
        let (base, n) = if let Some(n) = tok.strip_prefix('v') {
            (0u32, n)
        } else if let Some(n) = tok.strip_prefix('p') {
            ((self.registers - self.ins) as u32, n)
        } else {
            return err(line, format!("expected a register, got {tok}"));
        };
        let n: u32 = n.parse().map_err(|_| AsmError {
            line,
            message: format!("bad register {tok}"),
        })?;
        let r = base + n;
        if r >= self.registers as u32 {
            return err(line, format!("register {tok} outside .registers {}", self.registers));
        }
        Ok(r as u16)
    }

    fn label(&self, tok: &str, line: usize) -> Result<u32, AsmError> {
        let name = tok.trim_start_matches(':');
        self.labels.get(name).copied().ok_or_else(|| AsmError {
            line,
            message: format!("undefined label :{name}"),
        })
    }

    fn operand(&self, tok: &str, kind: RefKind, line: usize) -> Result<Operand, AsmError> {
        if let Some(inner) = tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
            let inner = inner.trim();
            if inner.is_empty() {
                return Ok(Operand::Regs(vec![]));
            }
            if let Some((a, b)) = inner.split_once("..") {
                let (a, b) = (self.reg(a.trim(), line)?, self.reg(b.trim(), line)?);
                if b < a {
                    return err(line, "descending register range");
                }
                return Ok(Operand::Regs((a..=b).collect()));
            }
            let regs = inner
                .split(',')
                .map(|r| self.reg(r.trim(), line))
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(Operand::Regs(regs));
        }
        if tok.starts_with(':') {
            return Ok(Operand::Label(tok.to_string()));
        }
        if tok.starts_with('"') {
            return Ok(Operand::Ref(RefSym::String(parse_string_literal(tok, line)?)));
        }
        let is_reg = |t: &str| {
            (t.starts_with('v') || t.starts_with('p')) && t.len() > 1 && t[1..].bytes().all(|b| b.is_ascii_digit())
        };
        if is_reg(tok) {
            return Ok(Operand::Reg(self.reg(tok, line)?));
        }
        match kind {
            RefKind::Type if tok.starts_with('L') || tok.starts_with('[') => Ok(Operand::Ref(RefSym::Type(tok.into()))),
            RefKind::Field if tok.contains("->") => Ok(Operand::Ref(RefSym::Field(tok.into()))),
            RefKind::Method if tok.contains("->") => Ok(Operand::Ref(RefSym::Method(tok.into()))),
            _ => Ok(Operand::Lit(parse_literal(tok, line)?)),
        }
    }

    fn ref_index(&self, r: &RefSym, line: usize) -> Result<u32, AsmError> {
        let t = self.tables;
        let found = match r {
            RefSym::String(s) => t.string_idx.get(s).copied(),
            RefSym::Type(s) => t.type_idx.get(s).copied(),
            RefSym::Field(s) => parse_field_ref(s).and_then(|f| t.field_idx.get(&f).copied()),
            RefSym::Method(s) => parse_method_ref(s).and_then(|m| t.method_idx.get(&m).copied()),
        };
        found.ok_or_else(|| AsmError {
            line,
            message: format!("unresolved reference {r:?}"),
        })
    }
}

fn collect_refs(items: &[Item], pools: &mut Pools) -> Result<(), AsmError> {
    for item in items {
        let Item::Insn { line, mnemonic, operands } = item else { continue };
        let Some((_, _, kind)) = lookup_op(mnemonic) else {
            return err(*line, format!("unknown instruction {mnemonic}"));
        };
        let Some(last) = operands.last() else { continue };
        match kind {
            RefKind::None => {}
            RefKind::String => {
                pools.strings.insert(parse_string_literal(last, *line)?);
            }
            RefKind::Type => pools.add_type(last),
            RefKind::Field => pools.add_field(parse_field_ref(last).ok_or_else(|| AsmError {
                line: *line,
                message: format!("bad field reference {last}"),
            })?),
            RefKind::Method => pools.add_method(parse_method_ref(last).ok_or_else(|| AsmError {
                line: *line,
                message: format!("bad method reference {last}"),
            })?),
        }
    }
    Ok(())
}

fn fits_signed(v: i64, bits: u32) -> bool {
    let min = -(1i64 << (bits - 1));
    let max = (1i64 << (bits - 1)) - 1;
    (min..=max).contains(&v)
}

struct EncodedCode {
    units: Vec<u16>,
    outs: u16,
    insns: Vec<InsnSym>,
}

fn encode_method(m: &MethodSrc, ins: u16, registers: u16, tables: &Tables) -> Result<EncodedCode, AsmError> {
    let lay = layout(&m.items)?;
    let ctx = MethodCtx {
        tables,
        registers,
        ins,
        labels: &lay.labels,
    };
    let mut units: Vec<u16> = Vec::with_capacity(lay.units as usize);
    let mut insns = Vec::new();
    let mut outs = 0u16;

    // Payload label -> address of the instruction referring to it.
    let mut payload_owner: HashMap<u32, u32> = HashMap::new();
    for &(addr, i) in &lay.slots {
        if let Some(Item::Insn { mnemonic, operands, line }) = m.items.get(i) {
            if matches!(mnemonic.as_str(), "packed-switch" | "sparse-switch" | "fill-array-data") {
                if let Some(l) = operands.last() {
                    payload_owner.insert(ctx.label(l, *line)?, addr);
                }
            }
        }
    }

    for &(addr, i) in &lay.slots {
        debug_assert_eq!(units.len() as u32, addr);
        if i == usize::MAX {
            units.push(0);
            insns.push(InsnSym {
                offset: addr * 2,
                mnemonic: "nop".into(),
                opcode: 0,
                registers: vec![],
                literal: None,
                target: None,
                reference: None,
                payload: None,
                width: 1,
            });
            continue;
        }
        match &m.items[i] {
            Item::Label(_) => {}
            Item::Insn { line, mnemonic, operands } => {
                let line = *line;
                let (op, fmt, kind) = lookup_op(mnemonic).expect("checked in layout");
                let ops = operands
                    .iter()
                    .map(|o| ctx.operand(o, kind, line))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut sym = InsnSym {
                    offset: addr * 2,
                    mnemonic: mnemonic.clone(),
                    opcode: op as u16,
                    registers: vec![],
                    literal: None,
                    target: None,
                    reference: None,
                    payload: None,
                    width: fmt.units(),
                };
                let word = encode_insn(&ctx, op, fmt, &ops, addr, line, &mut sym)?;
                if let Some(Operand::Regs(r)) = ops.first() {
                    if kind == RefKind::Method {
                        outs = outs.max(r.len() as u16);
                    }
                }
                debug_assert_eq!(word.len() as u32, fmt.units());
                units.extend(word);
                insns.push(sym);
            }
            Item::Packed { line, first_key, labels } => {
                let owner = *payload_owner.get(&addr).ok_or_else(|| AsmError {
                    line: *line,
                    message: "packed-switch payload is not referenced".into(),
                })?;
                let targets = labels
                    .iter()
                    .map(|l| Ok(ctx.label(l, *line)? as i32 - owner as i32))
                    .collect::<Result<Vec<i32>, AsmError>>()?;
                units.push(0x0100);
                units.push(targets.len() as u16);
                units.push(*first_key as u32 as u16);
                units.push((*first_key as u32 >> 16) as u16);
                for t in &targets {
                    units.push(*t as u32 as u16);
                    units.push((*t as u32 >> 16) as u16);
                }
                insns.push(payload_sym(
                    addr,
                    0x0100,
                    "packed-switch-payload",
                    PayloadSym::PackedSwitch {
                        first_key: *first_key,
                        targets,
                    },
                    item_units(&m.items[i], None),
                ));
            }
            Item::Sparse { line, cases } => {
                let owner = *payload_owner.get(&addr).ok_or_else(|| AsmError {
                    line: *line,
                    message: "sparse-switch payload is not referenced".into(),
                })?;
                let mut keys = Vec::new();
                let mut targets = Vec::new();
                for (k, l) in cases {
                    keys.push(*k);
                    targets.push(ctx.label(l, *line)? as i32 - owner as i32);
                }
                units.push(0x0200);
                units.push(keys.len() as u16);
                for v in keys.iter().chain(&targets) {
                    units.push(*v as u32 as u16);
                    units.push((*v as u32 >> 16) as u16);
                }
                insns.push(payload_sym(
                    addr,
                    0x0200,
                    "sparse-switch-payload",
                    PayloadSym::SparseSwitch { keys, targets },
                    item_units(&m.items[i], None),
                ));
            }
            Item::Array { width, values } => {
                units.push(0x0300);
                units.push(*width);
                units.push(values.len() as u32 as u16);
                units.push((values.len() as u32 >> 16) as u16);
                let mut bytes = Vec::new();
                for v in values {
                    bytes.extend_from_slice(&v.to_le_bytes()[..*width as usize]);
                }
                if bytes.len() % 2 == 1 {
                    bytes.push(0);
                }
                units.extend(bytes.chunks(2).map(|c| u16::from_le_bytes([c[0], c[1]])));
                insns.push(payload_sym(
                    addr,
                    0x0300,
                    "fill-array-data-payload",
                    PayloadSym::FillArrayData {
                        element_width: *width,
                        element_count: values.len() as u32,
                    },
                    item_units(&m.items[i], None),
                ));
            }
        }
    }
    Ok(EncodedCode { units, outs, insns })
}

fn payload_sym(addr: u32, opcode: u16, mnemonic: &str, payload: PayloadSym, width: u32) -> InsnSym {
    InsnSym {
        offset: addr * 2,
        mnemonic: mnemonic.into(),
        opcode,
        registers: vec![],
        literal: None,
        target: None,
        reference: None,
        payload: Some(payload),
        width,
    }
}

fn encode_insn(
    ctx: &MethodCtx<'_>,
    op: u8,
    fmt: Fmt,
    ops: &[Operand],
    addr: u32,
    line: usize,
    sym: &mut InsnSym,
) -> Result<Vec<u16>, AsmError> {
    use Fmt::*;
    let shape = |want: &str| -> AsmError {
        AsmError {
            line,
            message: format!("{} expects operands {want}", sym.mnemonic),
        }
    };
    let reg = |k: usize| -> Result<u16, AsmError> {
        match ops.get(k) {
            Some(Operand::Reg(r)) => Ok(*r),
            _ => Err(shape("starting with registers")),
        }
    };
    let lit = |k: usize| -> Result<i64, AsmError> {
        match ops.get(k) {
            Some(Operand::Lit(v)) => Ok(*v),
            _ => Err(shape("with a literal")),
        }
    };
    let target = |k: usize| -> Result<i64, AsmError> {
        match ops.get(k) {
            Some(Operand::Label(l)) => Ok(ctx.label(l, line)? as i64 - addr as i64),
            _ => Err(shape("with a label")),
        }
    };
    let reference = |k: usize| -> Result<(u32, RefSym), AsmError> {
        match ops.get(k) {
            Some(Operand::Ref(r)) => Ok((ctx.ref_index(r, line)?, r.clone())),
            _ => Err(shape("with a reference")),
        }
    };
    let nib = |r: u16| -> Result<u16, AsmError> {
        if r > 0xf {
            Err(AsmError {
                line,
                message: format!("v{r} does not fit a 4-bit register field"),
            })
        } else {
            Ok(r)
        }
    };
    let byte = |r: u16| -> Result<u16, AsmError> {
        if r > 0xff {
            Err(AsmError {
                line,
                message: format!("v{r} does not fit an 8-bit register field"),
            })
        } else {
            Ok(r)
        }
    };
    let range_err = |what: &str| AsmError {
        line,
        message: format!("{what} out of range for {}", sym.mnemonic),
    };
    let op = op as u16;
    let set_target = |rel: i64, s: &mut InsnSym| s.target = Some(((addr as i64 + rel) * 2) as u32);

    let out = match fmt {
        F10x => vec![op],
        F12x => {
            let (a, b) = (nib(reg(0)?)?, nib(reg(1)?)?);
            sym.registers = vec![a, b];
            vec![op | a << 8 | b << 12]
        }
        F11n => {
            let a = nib(reg(0)?)?;
            let v = lit(1)?;
            if !fits_signed(v, 4) {
                return Err(range_err("literal"));
            }
            sym.registers = vec![a];
            sym.literal = Some(v);
            vec![op | a << 8 | ((v as u16) & 0xf) << 12]
        }
        F11x => {
            let a = byte(reg(0)?)?;
            sym.registers = vec![a];
            vec![op | a << 8]
        }
        F10t => {
            let t = target(0)?;
            if !fits_signed(t, 8) || t == 0 {
                return Err(range_err("branch"));
            }
            set_target(t, sym);
            vec![op | ((t as i8 as u8) as u16) << 8]
        }
        F20t => {
            let t = target(0)?;
            if !fits_signed(t, 16) {
                return Err(range_err("branch"));
            }
            set_target(t, sym);
            vec![op, t as i16 as u16]
        }
        F22x => {
            let (a, b) = (byte(reg(0)?)?, reg(1)?);
            sym.registers = vec![a, b];
            vec![op | a << 8, b]
        }
        F21t => {
            let a = byte(reg(0)?)?;
            let t = target(1)?;
            if !fits_signed(t, 16) {
                return Err(range_err("branch"));
            }
            sym.registers = vec![a];
            set_target(t, sym);
            vec![op | a << 8, t as i16 as u16]
        }
        F21s => {
            let a = byte(reg(0)?)?;
            let v = lit(1)?;
            if !fits_signed(v, 16) {
                return Err(range_err("literal"));
            }
            sym.registers = vec![a];
            sym.literal = Some(v);
            vec![op | a << 8, v as u16]
        }
        F21h => {
            let a = byte(reg(0)?)?;
            let v = lit(1)?;
            let shift = if op == 0x19 { 48 } else { 16 };
            let hi = v >> shift;
            if (hi << shift) != v || !fits_signed(hi, 16) {
                return Err(range_err("literal"));
            }
            sym.registers = vec![a];
            sym.literal = Some(v);
            vec![op | a << 8, hi as u16]
        }
        F21c => {
            let a = byte(reg(0)?)?;
            let (idx, r) = reference(1)?;
            if idx > 0xffff {
                return Err(range_err("index"));
            }
            sym.registers = vec![a];
            sym.reference = Some(r);
            vec![op | a << 8, idx as u16]
        }
        F23x => {
            let (a, b, c) = (byte(reg(0)?)?, byte(reg(1)?)?, byte(reg(2)?)?);
            sym.registers = vec![a, b, c];
            vec![op | a << 8, b | c << 8]
        }
        F22b => {
            let (a, b) = (byte(reg(0)?)?, byte(reg(1)?)?);
            let v = lit(2)?;
            if !fits_signed(v, 8) {
                return Err(range_err("literal"));
            }
            sym.registers = vec![a, b];
            sym.literal = Some(v);
            vec![op | a << 8, b | ((v as i8 as u8) as u16) << 8]
        }
        F22t => {
            let (a, b) = (nib(reg(0)?)?, nib(reg(1)?)?);
            let t = target(2)?;
            if !fits_signed(t, 16) {
                return Err(range_err("branch"));
            }
            sym.registers = vec![a, b];
            set_target(t, sym);
            vec![op | a << 8 | b << 12, t as i16 as u16]
        }
        F22s => {
            let (a, b) = (nib(reg(0)?)?, nib(reg(1)?)?);
            let v = lit(2)?;
            if !fits_signed(v, 16) {
                return Err(range_err("literal"));
            }
            sym.registers = vec![a, b];
            sym.literal = Some(v);
            vec![op | a << 8 | b << 12, v as u16]
        }
        F22c => {
            let (a, b) = (nib(reg(0)?)?, nib(reg(1)?)?);
            let (idx, r) = reference(2)?;
            sym.registers = vec![a, b];
            sym.reference = Some(r);
            vec![op | a << 8 | b << 12, idx as u16]
        }
        F30t => {
            let t = target(0)?;
            set_target(t, sym);
            vec![op, t as u32 as u16, (t as u32 >> 16) as u16]
        }
        F32x => {
            let (a, b) = (reg(0)?, reg(1)?);
            sym.registers = vec![a, b];
            vec![op, a, b]
        }
        F31i => {
            let a = byte(reg(0)?)?;
            let v = lit(1)?;
            if !fits_signed(v, 32) && !(op == 0x14 && (0..=u32::MAX as i64).contains(&v)) {
                return Err(range_err("literal"));
            }
            let v32 = v as u32;
            sym.registers = vec![a];
            sym.literal = Some(v32 as i32 as i64);
            vec![op | a << 8, v32 as u16, (v32 >> 16) as u16]
        }
        F31t => {
            let a = byte(reg(0)?)?;
            let t = target(1)?;
            sym.registers = vec![a];
            set_target(t, sym);
            vec![op | a << 8, t as u32 as u16, (t as u32 >> 16) as u16]
        }
        F31c => {
            let a = byte(reg(0)?)?;
            let (idx, r) = reference(1)?;
            sym.registers = vec![a];
            sym.reference = Some(r);
            vec![op | a << 8, idx as u16, (idx >> 16) as u16]
        }
        F35c => {
            let Some(Operand::Regs(regs)) = ops.first() else {
                return Err(shape("{registers}, reference"));
            };
            if regs.len() > 5 {
                return Err(range_err("register count"));
            }
            let (idx, r) = reference(1)?;
            let mut n = [0u16; 5];
            for (k, &reg) in regs.iter().enumerate() {
                n[k] = nib(reg)?;
            }
            sym.registers = regs.clone();
            sym.reference = Some(r);
            vec![
                op | n[4] << 8 | (regs.len() as u16) << 12,
                idx as u16,
                n[0] | n[1] << 4 | n[2] << 8 | n[3] << 12,
            ]
        }
        F3rc => {
            let Some(Operand::Regs(regs)) = ops.first() else {
                return Err(shape("{vA .. vB}, reference"));
            };
            if regs.len() > 255 || regs.windows(2).any(|w| w[1] != w[0] + 1) {
                return Err(range_err("register range"));
            }
            let (idx, r) = reference(1)?;
            sym.registers = regs.clone();
            sym.reference = Some(r);
            vec![
                op | (regs.len() as u16) << 8,
                idx as u16,
                regs.first().copied().unwrap_or(0),
            ]
        }
        F51l => {
            let a = byte(reg(0)?)?;
            let v = lit(1)?;
            sym.registers = vec![a];
            sym.literal = Some(v);
            let u = v as u64;
            vec![op | a << 8, u as u16, (u >> 16) as u16, (u >> 32) as u16, (u >> 48) as u16]
        }
    };
    Ok(out)
}

// ---------------------------------------------------------------------------
// Image writer

fn uleb(out: &mut Vec<u8>, mut v: u32) {
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(b);
            return;
        }
        out.push(b | 0x80);
    }
}

fn sleb(out: &mut Vec<u8>, mut v: i32) {
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        let done = (v == 0 && b & 0x40 == 0) || (v == -1 && b & 0x40 != 0);
        if done {
            out.push(b);
            return;
        }
        out.push(b | 0x80);
    }
}

/// Modified UTF-8: NUL as two bytes, supplementary characters as surrogate
/// pairs of three bytes each.
pub fn mutf8(s: &str) -> Vec<u8> {
    let mut out = Vec::new();
    for u in s.encode_utf16() {
        match u {
            0x01..=0x7f => out.push(u as u8),
            0x00 | 0x80..=0x7ff => {
                out.push(0xc0 | (u >> 6) as u8);
                out.push(0x80 | (u & 0x3f) as u8);
            }
            _ => {
                out.push(0xe0 | (u >> 12) as u8);
                out.push(0x80 | ((u >> 6) & 0x3f) as u8);
                out.push(0x80 | (u & 0x3f) as u8);
            }
        }
    }
    out
}

fn align4(out: &mut Vec<u8>) {
    while out.len() % 4 != 0 {
        out.push(0);
    }
}

fn put16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn set32(out: &mut [u8], at: usize, v: u32) {
    out[at..at + 4].copy_from_slice(&v.to_le_bytes());
}

pub fn adler32(data: &[u8]) -> u32 {
    let (mut a, mut b) = (1u32, 0u32);
    for chunk in data.chunks(5552) {
        for &x in chunk {
            a += x as u32;
            b += a;
        }
        a %= 65521;
        b %= 65521;
    }
    b << 16 | a
}

/// Orders classes so that superclasses and interfaces defined in the same
/// file come first.
fn class_order(classes: &[ClassSrc]) -> Vec<usize> {
    let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.descriptor.as_str(), i)).collect();
    let mut done = vec![false; classes.len()];
    let mut order = Vec::new();
    fn visit(i: usize, classes: &[ClassSrc], index: &HashMap<&str, usize>, done: &mut [bool], order: &mut Vec<usize>) {
        if done[i] {
            return;
        }
        done[i] = true;
        let c = &classes[i];
        for dep in c.superclass.iter().chain(&c.interfaces) {
            if let Some(&j) = index.get(dep.as_str()) {
                visit(j, classes, index, done, order);
            }
        }
        order.push(i);
    }
    for i in 0..classes.len() {
        visit(i, classes, &index, &mut done, &mut order);
    }
    order
}

pub fn assemble(src: &str) -> Result<Assembled, AsmError> {
    let classes = parse_source(src)?;
    let mut seen = BTreeSet::new();
    for c in &classes {
        if !seen.insert(c.descriptor.clone()) {
            return err(0, format!("class {} defined twice", c.descriptor));
        }
    }

    let mut pools = Pools::default();
    for c in &classes {
        pools.add_type(&c.descriptor);
        if let Some(s) = &c.superclass {
            pools.add_type(s);
        }
        for i in &c.interfaces {
            pools.add_type(i);
        }
        if let Some(s) = &c.source {
            pools.strings.insert(s.clone());
        }
        for f in &c.fields {
            pools.add_field((f.class.clone(), f.name.clone(), f.field_type.clone()));
        }
        for m in &c.methods {
            pools.add_method((c.descriptor.clone(), m.name.clone(), m.descriptor.clone()));
            collect_refs(&m.items, &mut pools)?;
            for catch in &m.catches {
                if let Some(t) = &catch.exception {
                    pools.add_type(t);
                }
            }
        }
    }
    let tables = Tables::build(pools);

    // Fixed-size sections.
    let header_size = 0x70usize;
    let string_ids_off = header_size;
    let type_ids_off = string_ids_off + 4 * tables.strings.len();
    let proto_ids_off = type_ids_off + 4 * tables.types.len();
    let field_ids_off = proto_ids_off + 12 * tables.protos.len();
    let method_ids_off = field_ids_off + 8 * tables.fields.len();
    let class_defs_off = method_ids_off + 8 * tables.methods.len();
    let data_off = class_defs_off + 32 * classes.len();

    let mut out = vec![0u8; data_off];
    let mut map: Vec<(u16, u32, u32)> = vec![(0x0000, 1, 0)];
    let mut push_map = |kind: u16, size: usize, off: usize| {
        if size > 0 {
            map.push((kind, size as u32, off as u32));
        }
    };
    push_map(0x0001, tables.strings.len(), string_ids_off);
    push_map(0x0002, tables.types.len(), type_ids_off);
    push_map(0x0003, tables.protos.len(), proto_ids_off);
    push_map(0x0004, tables.fields.len(), field_ids_off);
    push_map(0x0005, tables.methods.len(), method_ids_off);
    push_map(0x0006, classes.len(), class_defs_off);

    // Code items.
    let order = class_order(&classes);
    let mut code_offsets: HashMap<(usize, usize), u32> = HashMap::new();
    let mut class_syms: BTreeMap<usize, ClassSym> = BTreeMap::new();
    let code_start = out.len();
    let mut code_count = 0;
    for &ci in &order {
        let c = &classes[ci];
        let mut sym = ClassSym {
            descriptor: c.descriptor.clone(),
            access: c.access,
            superclass: c.superclass.clone(),
            interfaces: c.interfaces.clone(),
            source_file: c.source.clone(),
            static_fields: vec![],
            instance_fields: vec![],
            direct_methods: vec![],
            virtual_methods: vec![],
        };
        for f in &c.fields {
            if f.access & ACC_STATIC != 0 {
                sym.static_fields.push(f.clone());
            } else {
                sym.instance_fields.push(f.clone());
            }
        }
        for (mi, m) in c.methods.iter().enumerate() {
            let (params, _) = descriptor_params(&m.descriptor).expect("validated");
            let is_static = m.access & ACC_STATIC != 0;
            let ins: u16 = params.iter().map(|p| type_words(p)).sum::<u16>() + u16::from(!is_static);
            let has_code = m.access & (0x100 | 0x400) == 0;
            let code = if has_code {
                let registers = match (m.registers, m.locals) {
                    (Some(r), _) => r,
                    (None, Some(l)) => l + ins,
                    (None, None) => return err(m.line, format!("method {} needs .registers or .locals", m.name)),
                };
                if registers < ins {
                    return err(m.line, format!("method {} has fewer registers than parameter words", m.name));
                }
                let enc = encode_method(m, ins, registers, &tables)?;
                let tries = assemble_tries(m, &enc, &tables)?;
                align4(&mut out);
                code_offsets.insert((ci, mi), out.len() as u32);
                code_count += 1;
                put16(&mut out, registers);
                put16(&mut out, ins);
                put16(&mut out, enc.outs);
                put16(&mut out, tries.len() as u16);
                put32(&mut out, 0);
                put32(&mut out, enc.units.len() as u32);
                for u in &enc.units {
                    put16(&mut out, *u);
                }
                if !tries.is_empty() {
                    if enc.units.len() % 2 == 1 {
                        put16(&mut out, 0);
                    }
                    write_tries(&mut out, &tries, &tables);
                }
                Some(CodeSym {
                    registers,
                    ins,
                    outs: enc.outs,
                    insns: enc.insns,
                    tries,
                })
            } else {
                None
            };
            let ms = MethodSym {
                class: c.descriptor.clone(),
                name: m.name.clone(),
                descriptor: m.descriptor.clone(),
                access: m.access,
                code,
            };
            let direct = m.access & (ACC_STATIC | ACC_PRIVATE | ACC_CONSTRUCTOR) != 0;
            if direct {
                sym.direct_methods.push(ms);
            } else {
                sym.virtual_methods.push(ms);
            }
        }
        let key = |f: &FieldSym| tables.field_idx[&(f.class.clone(), f.name.clone(), f.field_type.clone())];
        sym.static_fields.sort_by_key(key);
        sym.instance_fields.sort_by_key(key);
        let mkey = |m: &MethodSym| tables.method_idx[&(m.class.clone(), m.name.clone(), m.descriptor.clone())];
        sym.direct_methods.sort_by_key(mkey);
        sym.virtual_methods.sort_by_key(mkey);
        class_syms.insert(ci, sym);
    }
    push_map(0x2001, code_count, code_start);

    // Type lists.
    align4(&mut out);
    let mut type_lists: BTreeMap<Vec<String>, u32> = BTreeMap::new();
    let mut lists: Vec<Vec<String>> = tables
        .protos
        .iter()
        .map(|(_, p)| p.parameters.clone())
        .chain(classes.iter().map(|c| c.interfaces.clone()))
        .filter(|l| !l.is_empty())
        .collect();
    lists.sort();
    lists.dedup();
    let type_list_start = out.len();
    for l in &lists {
        align4(&mut out);
        type_lists.insert(l.clone(), out.len() as u32);
        put32(&mut out, l.len() as u32);
        for t in l {
            put16(&mut out, tables.type_idx[t] as u16);
        }
    }
    push_map(0x1001, lists.len(), type_list_start);

    // String data.
    let string_data_start = out.len();
    for (i, s) in tables.strings.iter().enumerate() {
        let at = out.len() as u32;
        set32(&mut out, string_ids_off + 4 * i, at);
        uleb(&mut out, s.encode_utf16().count() as u32);
        out.extend(mutf8(s));
        out.push(0);
    }
    push_map(0x2002, tables.strings.len(), string_data_start);

    // Class data.
    let class_data_start = out.len();
    let mut class_data_offsets = HashMap::new();
    let mut class_data_count = 0;
    for &ci in &order {
        let c = &classes[ci];
        let sym = &class_syms[&ci];
        let empty = sym.static_fields.is_empty()
            && sym.instance_fields.is_empty()
            && sym.direct_methods.is_empty()
            && sym.virtual_methods.is_empty();
        if empty {
            continue;
        }
        class_data_offsets.insert(ci, out.len() as u32);
        class_data_count += 1;
        uleb(&mut out, sym.static_fields.len() as u32);
        uleb(&mut out, sym.instance_fields.len() as u32);
        uleb(&mut out, sym.direct_methods.len() as u32);
        uleb(&mut out, sym.virtual_methods.len() as u32);
        for fields in [&sym.static_fields, &sym.instance_fields] {
            let mut prev = 0;
            for f in fields {
                let idx = tables.field_idx[&(f.class.clone(), f.name.clone(), f.field_type.clone())];
                uleb(&mut out, idx - prev);
                uleb(&mut out, f.access);
                prev = idx;
            }
        }
        for methods in [&sym.direct_methods, &sym.virtual_methods] {
            let mut prev = 0;
            for m in methods {
                let idx = tables.method_idx[&(m.class.clone(), m.name.clone(), m.descriptor.clone())];
                let mi = c
                    .methods
                    .iter()
                    .position(|x| x.name == m.name && x.descriptor == m.descriptor)
                    .expect("declared");
                uleb(&mut out, idx - prev);
                uleb(&mut out, m.access);
                uleb(&mut out, code_offsets.get(&(ci, mi)).copied().unwrap_or(0));
                prev = idx;
            }
        }
    }
    push_map(0x2000, class_data_count, class_data_start);

    // Id tables.
    for (i, t) in tables.types.iter().enumerate() {
        set32(&mut out, type_ids_off + 4 * i, tables.string_idx[t]);
    }
    for (i, (_, p)) in tables.protos.iter().enumerate() {
        let at = proto_ids_off + 12 * i;
        set32(&mut out, at, tables.string_idx[&p.shorty]);
        set32(&mut out, at + 4, tables.type_idx[&p.return_type]);
        let params = if p.parameters.is_empty() { 0 } else { type_lists[&p.parameters] };
        set32(&mut out, at + 8, params);
    }
    for (i, (class, name, ty)) in tables.fields.iter().enumerate() {
        let at = field_ids_off + 8 * i;
        out[at..at + 2].copy_from_slice(&(tables.type_idx[class] as u16).to_le_bytes());
        out[at + 2..at + 4].copy_from_slice(&(tables.type_idx[ty] as u16).to_le_bytes());
        set32(&mut out, at + 4, tables.string_idx[name]);
    }
    for (i, (class, name, desc)) in tables.methods.iter().enumerate() {
        let at = method_ids_off + 8 * i;
        out[at..at + 2].copy_from_slice(&(tables.type_idx[class] as u16).to_le_bytes());
        out[at + 2..at + 4].copy_from_slice(&(tables.proto_idx[desc] as u16).to_le_bytes());
        set32(&mut out, at + 4, tables.string_idx[name]);
    }
    for (k, &ci) in order.iter().enumerate() {
        let c = &classes[ci];
        let at = class_defs_off + 32 * k;
        set32(&mut out, at, tables.type_idx[&c.descriptor]);
        set32(&mut out, at + 4, c.access);
        set32(&mut out, at + 8, c.superclass.as_ref().map_or(u32::MAX, |s| tables.type_idx[s]));
        let interfaces = if c.interfaces.is_empty() { 0 } else { type_lists[&c.interfaces] };
        set32(&mut out, at + 12, interfaces);
        set32(&mut out, at + 16, c.source.as_ref().map_or(u32::MAX, |s| tables.string_idx[s]));
        set32(&mut out, at + 20, 0);
        set32(&mut out, at + 24, class_data_offsets.get(&ci).copied().unwrap_or(0));
        set32(&mut out, at + 28, 0);
    }

    // Map list.
    align4(&mut out);
    let map_off = out.len();
    map.push((0x1000, 1, map_off as u32));
    map.sort_by_key(|m| m.2);
    put32(&mut out, map.len() as u32);
    for (kind, size, off) in &map {
        put16(&mut out, *kind);
        put16(&mut out, 0);
        put32(&mut out, *size);
        put32(&mut out, *off);
    }

    // Header.
    out[..8].copy_from_slice(b"dex\n035\0");
    let file_size = out.len() as u32;
    set32(&mut out, 0x20, file_size);
    set32(&mut out, 0x24, header_size as u32);
    set32(&mut out, 0x28, 0x1234_5678);
    set32(&mut out, 0x34, map_off as u32);
    let sections = [
        (0x38, tables.strings.len(), string_ids_off),
        (0x40, tables.types.len(), type_ids_off),
        (0x48, tables.protos.len(), proto_ids_off),
        (0x50, tables.fields.len(), field_ids_off),
        (0x58, tables.methods.len(), method_ids_off),
        (0x60, classes.len(), class_defs_off),
    ];
    for (at, n, off) in sections {
        set32(&mut out, at, n as u32);
        set32(&mut out, at + 4, if n == 0 { 0 } else { off as u32 });
    }
    set32(&mut out, 0x68, file_size - data_off as u32);
    set32(&mut out, 0x6c, data_off as u32);
    let checksum = adler32(&out[12..]);
    set32(&mut out, 8, checksum);

    let symbols = Symbols {
        strings: tables.strings.clone(),
        types: tables.types.clone(),
        protos: tables.protos.iter().map(|(_, p)| p.clone()).collect(),
        fields: tables.fields.clone(),
        methods: tables.methods.clone(),
        classes: order.iter().map(|ci| class_syms[ci].clone()).collect(),
    };
    Ok(Assembled { bytes: out, symbols })
}

fn assemble_tries(m: &MethodSrc, enc: &EncodedCode, tables: &Tables) -> Result<Vec<TrySym>, AsmError> {
    let lay = layout(&m.items)?;
    let mut by_range: BTreeMap<(u32, u32), Vec<(Option<String>, u32)>> = BTreeMap::new();
    for c in &m.catches {
        let get = |l: &str| {
            lay.labels.get(l).copied().ok_or_else(|| AsmError {
                line: c.line,
                message: format!("undefined label :{l}"),
            })
        };
        let (s, e, h) = (get(&c.start)?, get(&c.end)?, get(&c.handler)?);
        if e <= s {
            return err(c.line, "empty try range");
        }
        if let Some(t) = &c.exception {
            if !tables.type_idx.contains_key(t) {
                return err(c.line, format!("unknown exception type {t}"));
            }
        }
        by_range.entry((s * 2, e * 2)).or_default().push((c.exception.clone(), h * 2));
    }
    let mut out: Vec<TrySym> = by_range
        .into_iter()
        .map(|((start, end), mut handlers)| {
            // A catch-all handler must come last.
            handlers.sort_by_key(|(t, _)| t.is_none());
            TrySym { start, end, handlers }
        })
        .collect();
    out.sort_by_key(|t| t.start);
    if out.windows(2).any(|w| w[1].start < w[0].end) {
        return err(m.line, "overlapping try ranges");
    }
    debug_assert!(enc.units.len() as u32 * 2 >= out.last().map_or(0, |t| t.end));
    Ok(out)
}

fn write_tries(out: &mut Vec<u8>, tries: &[TrySym], tables: &Tables) {
    let mut handler_blob = Vec::new();
    let mut offsets = Vec::new();
    uleb(&mut handler_blob, tries.len() as u32);
    for t in tries {
        offsets.push(handler_blob.len() as u16);
        let typed: Vec<&(Option<String>, u32)> = t.handlers.iter().filter(|h| h.0.is_some()).collect();
        let catch_all = t.handlers.iter().find(|h| h.0.is_none());
        let n = typed.len() as i32;
        sleb(&mut handler_blob, if catch_all.is_some() { -n } else { n });
        for (ty, addr) in typed {
            uleb(&mut handler_blob, tables.type_idx[ty.as_ref().expect("typed")]);
            uleb(&mut handler_blob, addr / 2);
        }
        if let Some((_, addr)) = catch_all {
            uleb(&mut handler_blob, addr / 2);
        }
    }
    for (t, off) in tries.iter().zip(offsets) {
        put32(out, t.start / 2);
        put16(out, ((t.end - t.start) / 2) as u16);
        put16(out, off);
    }
    out.extend(handler_blob);
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = r#"
.class public Lcom/example/Main;
.super Landroid/app/Activity;
.source "Main.java"
.field private static key:Ljava/lang/String;
.method public constructor <init>()V
    .registers 1
    invoke-direct {p0}, Landroid/app/Activity;-><init>()V
    return-void
.end method
.method public onCreate(Landroid/os/Bundle;)V
    .registers 4
    const-string v0, "MD5"
    invoke-static {v0}, Ljava/security/MessageDigest;->getInstance(Ljava/lang/String;)Ljava/security/MessageDigest;
    move-result-object v1
    if-eqz v1, :done
    const/4 v2, -1
    :done
    return-void
.end method
"#;

    #[test]
    fn assembles_header_and_tables() {
        let a = assemble(SRC).unwrap();
        let b = &a.bytes;
        assert_eq!(&b[..8], b"dex\n035\0");
        assert_eq!(u32::from_le_bytes(b[0x20..0x24].try_into().unwrap()) as usize, b.len());
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), adler32(&b[12..]));
        let s = &a.symbols;
        assert!(s.strings.windows(2).all(|w| utf16_cmp(&w[0], &w[1]) == Ordering::Less));
        assert!(s.types.contains(&"Ljava/security/MessageDigest;".to_string()));
        let m = s.method("Lcom/example/Main;", "onCreate").unwrap();
        let code = m.code.as_ref().unwrap();
        assert_eq!((code.registers, code.ins, code.outs), (4, 2, 1));
        assert_eq!(code.insns[3].target, Some(code.insns[5].offset));
        assert_eq!(code.insns[4].literal, Some(-1));
        assert_eq!(s.class("Lcom/example/Main;").unwrap().direct_methods[0].name, "<init>");
    }

    #[test]
    fn reports_errors_with_lines() {
        let e = assemble(".class LA;\n.method static f()V\n.registers 1\nbogus v0\n.end method\n").unwrap_err();
        assert_eq!(e.line, 4);
        let e = assemble(".class LA;\n.method static f()V\n.registers 1\nconst/4 v1, 0\n.end method\n").unwrap_err();
        assert!(e.message.contains("outside .registers"));
    }

    #[test]
    fn encodings() {
        let mut v = Vec::new();
        sleb(&mut v, -1);
        uleb(&mut v, 300);
        assert_eq!(v, [0x7f, 0xac, 0x02]);
        assert_eq!(mutf8("\0a\u{1F600}").len(), 2 + 1 + 6);
        assert_eq!(adler32(b"Wikipedia"), 0x11E6_0398);
    }
}
