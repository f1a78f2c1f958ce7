//! Dalvik opcode table and code-unit decoding.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Instruction encoding formats, named as in the Dalvik format reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
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
    F45cc,
    F4rcc,
    F51l,
    Payload,
}

/// What kind of table an index operand refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexKind {
    None,
    String,
    Type,
    Field,
    Method,
    Proto,
    CallSite,
    MethodHandle,
}

/// A Dalvik opcode. Payload pseudo-instructions use their 16-bit identifiers.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Opcode(pub u16);

impl Opcode {
    pub const NOP: Opcode = Opcode(0x00);
    pub const MOVE_RESULT: Opcode = Opcode(0x0a);
    pub const MOVE_RESULT_WIDE: Opcode = Opcode(0x0b);
    pub const MOVE_RESULT_OBJECT: Opcode = Opcode(0x0c);
    pub const MOVE_EXCEPTION: Opcode = Opcode(0x0d);
    pub const RETURN_VOID: Opcode = Opcode(0x0e);
    pub const CONST_STRING: Opcode = Opcode(0x1a);
    pub const CONST_STRING_JUMBO: Opcode = Opcode(0x1b);
    pub const NEW_INSTANCE: Opcode = Opcode(0x22);
    pub const FILL_ARRAY_DATA: Opcode = Opcode(0x26);
    pub const THROW: Opcode = Opcode(0x27);
    pub const PACKED_SWITCH: Opcode = Opcode(0x2b);
    pub const SPARSE_SWITCH: Opcode = Opcode(0x2c);
    pub const INVOKE_VIRTUAL: Opcode = Opcode(0x6e);
    pub const INVOKE_SUPER: Opcode = Opcode(0x6f);
    pub const INVOKE_DIRECT: Opcode = Opcode(0x70);
    pub const INVOKE_STATIC: Opcode = Opcode(0x71);
    pub const INVOKE_INTERFACE: Opcode = Opcode(0x72);
    pub const INVOKE_VIRTUAL_RANGE: Opcode = Opcode(0x74);
    pub const INVOKE_SUPER_RANGE: Opcode = Opcode(0x75);
    pub const INVOKE_DIRECT_RANGE: Opcode = Opcode(0x76);
    pub const INVOKE_STATIC_RANGE: Opcode = Opcode(0x77);
    pub const INVOKE_INTERFACE_RANGE: Opcode = Opcode(0x78);
    pub const PACKED_SWITCH_PAYLOAD: Opcode = Opcode(0x0100);
    pub const SPARSE_SWITCH_PAYLOAD: Opcode = Opcode(0x0200);
    pub const FILL_ARRAY_DATA_PAYLOAD: Opcode = Opcode(0x0300);

    pub fn mnemonic(self) -> &'static str {
        info(self).0
    }

    pub fn format(self) -> Format {
        info(self).1
    }

    pub fn index_kind(self) -> IndexKind {
        info(self).2
    }

    /// invoke-virtual/super/direct/static/interface and their range forms.
    pub fn is_invoke(self) -> bool {
        matches!(self.0, 0x6e..=0x72 | 0x74..=0x78)
    }

    pub fn is_static_invoke(self) -> bool {
        matches!(self.0, 0x71 | 0x77)
    }

    pub fn is_virtual_dispatch(self) -> bool {
        matches!(self.0, 0x6e | 0x72 | 0x74 | 0x78)
    }

    pub fn is_super_invoke(self) -> bool {
        matches!(self.0, 0x6f | 0x75)
    }

    pub fn is_payload(self) -> bool {
        self.0 > 0xff
    }

    /// Control never falls through to the next instruction.
    pub fn ends_block(self) -> bool {
        matches!(self.0, 0x0e..=0x11 | 0x27..=0x2a) || self.is_payload()
    }

    pub fn is_return(self) -> bool {
        matches!(self.0, 0x0e..=0x11)
    }

    pub fn is_conditional_branch(self) -> bool {
        matches!(self.0, 0x32..=0x3d)
    }

    pub fn is_goto(self) -> bool {
        matches!(self.0, 0x28..=0x2a)
    }
}

impl fmt::Debug for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({:#04x})", self.mnemonic(), self.0)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

const UNOPS: [&str; 21] = [
    "neg-int", "not-int", "neg-long", "not-long", "neg-float", "neg-double", "int-to-long",
    "int-to-float", "int-to-double", "long-to-int", "long-to-float", "long-to-double",
    "float-to-int", "float-to-long", "float-to-double", "double-to-int", "double-to-long",
    "double-to-float", "int-to-byte", "int-to-char", "int-to-short",
];

const BINOPS: [&str; 32] = [
    "add-int", "sub-int", "mul-int", "div-int", "rem-int", "and-int", "or-int", "xor-int",
    "shl-int", "shr-int", "ushr-int", "add-long", "sub-long", "mul-long", "div-long", "rem-long",
    "and-long", "or-long", "xor-long", "shl-long", "shr-long", "ushr-long", "add-float",
    "sub-float", "mul-float", "div-float", "rem-float", "add-double", "sub-double", "mul-double",
    "div-double", "rem-double",
];

const BINOPS_2ADDR: [&str; 32] = [
    "add-int/2addr", "sub-int/2addr", "mul-int/2addr", "div-int/2addr", "rem-int/2addr",
    "and-int/2addr", "or-int/2addr", "xor-int/2addr", "shl-int/2addr", "shr-int/2addr",
    "ushr-int/2addr", "add-long/2addr", "sub-long/2addr", "mul-long/2addr", "div-long/2addr",
    "rem-long/2addr", "and-long/2addr", "or-long/2addr", "xor-long/2addr", "shl-long/2addr",
    "shr-long/2addr", "ushr-long/2addr", "add-float/2addr", "sub-float/2addr", "mul-float/2addr",
    "div-float/2addr", "rem-float/2addr", "add-double/2addr", "sub-double/2addr",
    "mul-double/2addr", "div-double/2addr", "rem-double/2addr",
];

const LIT16: [&str; 8] = [
    "add-int/lit16", "rsub-int", "mul-int/lit16", "div-int/lit16", "rem-int/lit16",
    "and-int/lit16", "or-int/lit16", "xor-int/lit16",
];

const LIT8: [&str; 11] = [
    "add-int/lit8", "rsub-int/lit8", "mul-int/lit8", "div-int/lit8", "rem-int/lit8",
    "and-int/lit8", "or-int/lit8", "xor-int/lit8", "shl-int/lit8", "shr-int/lit8",
    "ushr-int/lit8",
];

const ARRAY_OPS: [&str; 14] = [
    "aget", "aget-wide", "aget-object", "aget-boolean", "aget-byte", "aget-char", "aget-short",
    "aput", "aput-wide", "aput-object", "aput-boolean", "aput-byte", "aput-char", "aput-short",
];

const INSTANCE_OPS: [&str; 14] = [
    "iget", "iget-wide", "iget-object", "iget-boolean", "iget-byte", "iget-char", "iget-short",
    "iput", "iput-wide", "iput-object", "iput-boolean", "iput-byte", "iput-char", "iput-short",
];

const STATIC_OPS: [&str; 14] = [
    "sget", "sget-wide", "sget-object", "sget-boolean", "sget-byte", "sget-char", "sget-short",
    "sput", "sput-wide", "sput-object", "sput-boolean", "sput-byte", "sput-char", "sput-short",
];

const COMPARES: [&str; 5] = ["cmpl-float", "cmpg-float", "cmpl-double", "cmpg-double", "cmp-long"];
const IF_TESTS: [&str; 6] = ["if-eq", "if-ne", "if-lt", "if-ge", "if-gt", "if-le"];
const IF_TESTZ: [&str; 6] = ["if-eqz", "if-nez", "if-ltz", "if-gez", "if-gtz", "if-lez"];
const INVOKES: [&str; 5] = [
    "invoke-virtual", "invoke-super", "invoke-direct", "invoke-static", "invoke-interface",
];
const INVOKES_RANGE: [&str; 5] = [
    "invoke-virtual/range", "invoke-super/range", "invoke-direct/range", "invoke-static/range",
    "invoke-interface/range",
];

fn info(op: Opcode) -> (&'static str, Format, IndexKind) {
    use Format::*;
    use IndexKind as I;
    let b = op.0;
    match b {
        0x0100 => ("packed-switch-payload", Payload, I::None),
        0x0200 => ("sparse-switch-payload", Payload, I::None),
        0x0300 => ("fill-array-data-payload", Payload, I::None),
        0x00 => ("nop", F10x, I::None),
        0x01 => ("move", F12x, I::None),
        0x02 => ("move/from16", F22x, I::None),
        0x03 => ("move/16", F32x, I::None),
        0x04 => ("move-wide", F12x, I::None),
        0x05 => ("move-wide/from16", F22x, I::None),
        0x06 => ("move-wide/16", F32x, I::None),
        0x07 => ("move-object", F12x, I::None),
        0x08 => ("move-object/from16", F22x, I::None),
        0x09 => ("move-object/16", F32x, I::None),
        0x0a => ("move-result", F11x, I::None),
        0x0b => ("move-result-wide", F11x, I::None),
        0x0c => ("move-result-object", F11x, I::None),
        0x0d => ("move-exception", F11x, I::None),
        0x0e => ("return-void", F10x, I::None),
        0x0f => ("return", F11x, I::None),
        0x10 => ("return-wide", F11x, I::None),
        0x11 => ("return-object", F11x, I::None),
        0x12 => ("const/4", F11n, I::None),
        0x13 => ("const/16", F21s, I::None),
        0x14 => ("const", F31i, I::None),
        0x15 => ("const/high16", F21h, I::None),
        0x16 => ("const-wide/16", F21s, I::None),
        0x17 => ("const-wide/32", F31i, I::None),
        0x18 => ("const-wide", F51l, I::None),
        0x19 => ("const-wide/high16", F21h, I::None),
        0x1a => ("const-string", F21c, I::String),
        0x1b => ("const-string/jumbo", F31c, I::String),
        0x1c => ("const-class", F21c, I::Type),
        0x1d => ("monitor-enter", F11x, I::None),
        0x1e => ("monitor-exit", F11x, I::None),
        0x1f => ("check-cast", F21c, I::Type),
        0x20 => ("instance-of", F22c, I::Type),
        0x21 => ("array-length", F12x, I::None),
        0x22 => ("new-instance", F21c, I::Type),
        0x23 => ("new-array", F22c, I::Type),
        0x24 => ("filled-new-array", F35c, I::Type),
        0x25 => ("filled-new-array/range", F3rc, I::Type),
        0x26 => ("fill-array-data", F31t, I::None),
        0x27 => ("throw", F11x, I::None),
        0x28 => ("goto", F10t, I::None),
        0x29 => ("goto/16", F20t, I::None),
        0x2a => ("goto/32", F30t, I::None),
        0x2b => ("packed-switch", F31t, I::None),
        0x2c => ("sparse-switch", F31t, I::None),
        0x2d..=0x31 => (COMPARES[(b - 0x2d) as usize], F23x, I::None),
        0x32..=0x37 => (IF_TESTS[(b - 0x32) as usize], F22t, I::None),
        0x38..=0x3d => (IF_TESTZ[(b - 0x38) as usize], F21t, I::None),
        0x44..=0x51 => (ARRAY_OPS[(b - 0x44) as usize], F23x, I::None),
        0x52..=0x5f => (INSTANCE_OPS[(b - 0x52) as usize], F22c, I::Field),
        0x60..=0x6d => (STATIC_OPS[(b - 0x60) as usize], F21c, I::Field),
        0x6e..=0x72 => (INVOKES[(b - 0x6e) as usize], F35c, I::Method),
        0x74..=0x78 => (INVOKES_RANGE[(b - 0x74) as usize], F3rc, I::Method),
        0x7b..=0x8f => (UNOPS[(b - 0x7b) as usize], F12x, I::None),
        0x90..=0xaf => (BINOPS[(b - 0x90) as usize], F23x, I::None),
        0xb0..=0xcf => (BINOPS_2ADDR[(b - 0xb0) as usize], F12x, I::None),
        0xd0..=0xd7 => (LIT16[(b - 0xd0) as usize], F22s, I::None),
        0xd8..=0xe2 => (LIT8[(b - 0xd8) as usize], F22b, I::None),
        0xfa => ("invoke-polymorphic", F45cc, I::Method),
        0xfb => ("invoke-polymorphic/range", F4rcc, I::Method),
        0xfc => ("invoke-custom", F35c, I::CallSite),
        0xfd => ("invoke-custom/range", F3rc, I::CallSite),
        0xfe => ("const-method-handle", F21c, I::MethodHandle),
        0xff => ("const-method-type", F21c, I::Proto),
        // 0x3e-0x43, 0x73, 0x79-0x7a, 0xe3-0xf9
        _ => ("unused", F10x, I::None),
    }
}

/// Payload data of the switch / array-data pseudo-instructions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    PackedSwitch { first_key: i32, targets: Vec<i32> },
    SparseSwitch { keys: Vec<i32>, targets: Vec<i32> },
    FillArrayData { element_width: u16, element_count: u32 },
}

/// An instruction before its index operand is resolved against the tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RawInsn {
    pub unit: usize,
    pub opcode: Opcode,
    pub registers: Vec<u16>,
    pub index: Option<u32>,
    pub proto_index: Option<u32>,
    pub literal: Option<i64>,
    /// Absolute code-unit target of a branch or payload reference.
    pub target: Option<i64>,
    pub width: usize,
    pub payload: Option<Payload>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct DecodeError {
    pub unit: usize,
    pub reason: String,
}

/// Decodes a complete instruction stream. Every code unit belongs to exactly
/// one instruction or payload.
pub(crate) fn decode_units(units: &[u16]) -> Result<Vec<RawInsn>, DecodeError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < units.len() {
        let insn = decode_one(units, i)?;
        i += insn.width;
        out.push(insn);
    }
    Ok(out)
}

fn decode_one(c: &[u16], i: usize) -> Result<RawInsn, DecodeError> {
    let first = c[i];
    let unit = |k: usize| -> Result<u16, DecodeError> {
        c.get(i + k).copied().ok_or(DecodeError {
            unit: i,
            reason: format!("instruction needs {} code units, stream ends", k + 1),
        })
    };
    let u32_at = |k: usize| -> Result<u32, DecodeError> {
        Ok(unit(k)? as u32 | (unit(k + 1)? as u32) << 16)
    };

    if matches!(first, 0x0100 | 0x0200 | 0x0300) {
        return decode_payload(c, i, first);
    }

    let opcode = Opcode(first & 0xff);
    let aa = first >> 8;
    let a = (first >> 8) & 0xf;
    let b = first >> 12;
    let mut insn = RawInsn {
        unit: i,
        opcode,
        registers: Vec::new(),
        index: None,
        proto_index: None,
        literal: None,
        target: None,
        width: 1,
        payload: None,
    };
    let rel = |off: i64| Some(i as i64 + off);

    match opcode.format() {
        Format::F10x => {}
        Format::F12x => insn.registers = vec![a, b],
        Format::F11n => {
            insn.registers = vec![a];
            insn.literal = Some(((b as i8) << 4 >> 4) as i64);
        }
        Format::F11x => insn.registers = vec![aa],
        Format::F10t => insn.target = rel((aa as u8 as i8) as i64),
        Format::F20t => {
            insn.width = 2;
            insn.target = rel(unit(1)? as i16 as i64);
        }
        Format::F22x => {
            insn.width = 2;
            insn.registers = vec![aa, unit(1)?];
        }
        Format::F21t => {
            insn.width = 2;
            insn.registers = vec![aa];
            insn.target = rel(unit(1)? as i16 as i64);
        }
        Format::F21s => {
            insn.width = 2;
            insn.registers = vec![aa];
            insn.literal = Some(unit(1)? as i16 as i64);
        }
        Format::F21h => {
            insn.width = 2;
            insn.registers = vec![aa];
            let hi = unit(1)? as i16 as i64;
            insn.literal = Some(if opcode.0 == 0x19 { hi << 48 } else { hi << 16 });
        }
        Format::F21c => {
            insn.width = 2;
            insn.registers = vec![aa];
            insn.index = Some(unit(1)? as u32);
        }
        Format::F23x => {
            insn.width = 2;
            let bc = unit(1)?;
            insn.registers = vec![aa, bc & 0xff, bc >> 8];
        }
        Format::F22b => {
            insn.width = 2;
            let cb = unit(1)?;
            insn.registers = vec![aa, cb & 0xff];
            insn.literal = Some((cb >> 8) as u8 as i8 as i64);
        }
        Format::F22t => {
            insn.width = 2;
            insn.registers = vec![a, b];
            insn.target = rel(unit(1)? as i16 as i64);
        }
        Format::F22s => {
            insn.width = 2;
            insn.registers = vec![a, b];
            insn.literal = Some(unit(1)? as i16 as i64);
        }
        Format::F22c => {
            insn.width = 2;
            insn.registers = vec![a, b];
            insn.index = Some(unit(1)? as u32);
        }
        Format::F30t => {
            insn.width = 3;
            insn.target = rel(u32_at(1)? as i32 as i64);
        }
        Format::F32x => {
            insn.width = 3;
            insn.registers = vec![unit(1)?, unit(2)?];
        }
        Format::F31i => {
            insn.width = 3;
            insn.registers = vec![aa];
            insn.literal = Some(u32_at(1)? as i32 as i64);
        }
        Format::F31t => {
            insn.width = 3;
            insn.registers = vec![aa];
            insn.target = rel(u32_at(1)? as i32 as i64);
        }
        Format::F31c => {
            insn.width = 3;
            insn.registers = vec![aa];
            insn.index = Some(u32_at(1)?);
        }
        Format::F35c | Format::F45cc => {
            insn.width = if opcode.format() == Format::F45cc { 4 } else { 3 };
            let count = b as usize;
            let g = a;
            insn.index = Some(unit(1)? as u32);
            let regs = unit(2)?;
            let all = [regs & 0xf, (regs >> 4) & 0xf, (regs >> 8) & 0xf, regs >> 12, g];
            if count > 5 {
                return Err(DecodeError {
                    unit: i,
                    reason: format!("{} with {count} argument registers", opcode.mnemonic()),
                });
            }
            insn.registers = all[..count].to_vec();
            if opcode.format() == Format::F45cc {
                insn.proto_index = Some(unit(3)? as u32);
            }
        }
        Format::F3rc | Format::F4rcc => {
            insn.width = if opcode.format() == Format::F4rcc { 4 } else { 3 };
            insn.index = Some(unit(1)? as u32);
            let start = unit(2)? as u32;
            if start + aa as u32 > 0x1_0000 {
                return Err(DecodeError {
                    unit: i,
                    reason: "register range exceeds v65535".into(),
                });
            }
            insn.registers = (start..start + aa as u32).map(|r| r as u16).collect();
            if opcode.format() == Format::F4rcc {
                insn.proto_index = Some(unit(3)? as u32);
            }
        }
        Format::F51l => {
            insn.width = 5;
            insn.registers = vec![aa];
            let lo = u32_at(1)? as u64;
            let hi = u32_at(3)? as u64;
            insn.literal = Some((lo | hi << 32) as i64);
        }
        Format::Payload => unreachable!("payload identifiers are handled above"),
    }
    // Validate the width even when trailing units carry no operands.
    unit(insn.width - 1)?;
    Ok(insn)
}

fn decode_payload(c: &[u16], i: usize, ident: u16) -> Result<RawInsn, DecodeError> {
    let get = |k: usize| -> Result<u16, DecodeError> {
        c.get(i + k).copied().ok_or(DecodeError {
            unit: i,
            reason: "payload runs past the end of the code".into(),
        })
    };
    let get32 = |k: usize| -> Result<i32, DecodeError> {
        Ok((get(k)? as u32 | (get(k + 1)? as u32) << 16) as i32)
    };
    let (payload, width) = match ident {
        0x0100 => {
            let size = get(1)? as usize;
            let first_key = get32(2)?;
            let targets = (0..size).map(|k| get32(4 + 2 * k)).collect::<Result<_, _>>()?;
            (Payload::PackedSwitch { first_key, targets }, 4 + size * 2)
        }
        0x0200 => {
            let size = get(1)? as usize;
            let keys = (0..size).map(|k| get32(2 + 2 * k)).collect::<Result<_, _>>()?;
            let targets = (0..size)
                .map(|k| get32(2 + 2 * size + 2 * k))
                .collect::<Result<_, _>>()?;
            (Payload::SparseSwitch { keys, targets }, 2 + size * 4)
        }
        _ => {
            let element_width = get(1)?;
            let element_count = get32(2)? as u32;
            let bytes = element_width as usize * element_count as usize;
            let width = 4 + bytes.div_ceil(2);
            (
                Payload::FillArrayData {
                    element_width,
                    element_count,
                },
                width,
            )
        }
    };
    get(width - 1)?;
    Ok(RawInsn {
        unit: i,
        opcode: Opcode(ident),
        registers: Vec::new(),
        index: None,
        proto_index: None,
        literal: None,
        target: None,
        width,
        payload: Some(payload),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_opcode_slot_has_a_mnemonic() {
        let mut used = 0;
        for b in 0u16..=0xff {
            let op = Opcode(b);
            assert!(!op.mnemonic().is_empty());
            if op.mnemonic() != "unused" {
                used += 1;
            }
        }
        // 256 slots minus 6 + 1 + 2 + 23 reserved ones.
        assert_eq!(used, 224);
    }

    #[test]
    fn decodes_basic_forms() {
        // const/4 v1, #-1 ; return-void
        let insns = decode_units(&[0xf112, 0x000e]).unwrap();
        assert_eq!(insns.len(), 2);
        assert_eq!(insns[0].registers, vec![1]);
        assert_eq!(insns[0].literal, Some(-1));
        assert_eq!(insns[1].opcode, Opcode::RETURN_VOID);
    }

    #[test]
    fn decodes_invoke_and_range() {
        // invoke-static {v0, v1}, meth@3
        let insns = decode_units(&[0x2071, 0x0003, 0x0010]).unwrap();
        assert_eq!(insns[0].registers, vec![0, 1]);
        assert_eq!(insns[0].index, Some(3));
        // invoke-virtual/range {v4..v6}, meth@2
        let insns = decode_units(&[0x0374, 0x0002, 0x0004]).unwrap();
        assert_eq!(insns[0].registers, vec![4, 5, 6]);
    }

    #[test]
    fn decodes_wide_literal() {
        let insns = decode_units(&[0x0018, 0x5678, 0x1234, 0xdef0, 0x9abc]).unwrap();
        assert_eq!(insns[0].literal, Some(0x9abc_def0_1234_5678u64 as i64));
        assert_eq!(insns[0].width, 5);
    }

    #[test]
    fn decodes_payloads() {
        // packed-switch-payload size 2, first_key 10, targets 3, 5
        let units = [0x0100, 2, 10, 0, 3, 0, 5, 0];
        let insns = decode_units(&units).unwrap();
        assert_eq!(insns.len(), 1);
        assert_eq!(
            insns[0].payload,
            Some(Payload::PackedSwitch {
                first_key: 10,
                targets: vec![3, 5]
            })
        );
        // fill-array-data-payload: width 1, 3 elements -> 2 data units
        let insns = decode_units(&[0x0300, 1, 3, 0, 0x0201, 0x0003]).unwrap();
        assert_eq!(insns[0].width, 6);
    }

    #[test]
    fn truncated_instruction_is_an_error() {
        assert!(decode_units(&[0x001a]).is_err());
        assert!(decode_units(&[0x0100, 4, 0]).is_err());
    }

    #[test]
    fn invoke_with_too_many_registers() {
        assert!(decode_units(&[0x6071, 0, 0]).is_err());
    }
}
