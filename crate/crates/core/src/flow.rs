//! Intraprocedural dataflow over decoded method bodies.
//!
//! Instructions are first classified into register-level [`Effect`]s; a
//! worklist solver then propagates abstract register frames along the
//! control-flow graph, including exception-handler edges.

use std::collections::VecDeque;

use crate::dex::{FieldRef, Instruction, MethodBody, MethodRef, Opcode, Payload};

/// What an instruction does to registers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect<'a> {
    Nop,
    Move { dst: u16, src: u16, wide: bool },
    MoveResult { dst: u16, wide: bool },
    MoveException { dst: u16 },
    Return { src: Option<u16> },
    Const { dst: u16, value: i64, wide: bool },
    ConstString { dst: u16, value: &'a str },
    ConstOther { dst: u16 },
    NewInstance { dst: u16, class: &'a str },
    NewArray { dst: u16, size: u16 },
    /// Result goes to the pending-result slot.
    FilledNewArray { args: &'a [u16] },
    FillArrayData { array: u16 },
    ArrayGet { dst: u16, array: u16, wide: bool },
    ArrayPut { src: u16, array: u16 },
    FieldGet { dst: u16, object: Option<u16>, field: &'a FieldRef, wide: bool },
    FieldPut { src: u16, object: Option<u16>, field: &'a FieldRef },
    /// `args` are the raw argument registers; see [`logical_args`].
    Invoke { method: Option<&'a MethodRef>, args: &'a [u16], opcode: Opcode },
    Compute { dst: u16, srcs: Vec<u16>, wide: bool },
    Throw { src: u16 },
    Branch,
}

pub fn effect(insn: &Instruction) -> Effect<'_> {
    let r = &insn.registers;
    let reg = |i: usize| r.get(i).copied().unwrap_or(0);
    let op = insn.opcode.0;
    match op {
        0x01..=0x09 => Effect::Move {
            dst: reg(0),
            src: reg(1),
            wide: matches!(op, 0x04..=0x06),
        },
        0x0a..=0x0c => Effect::MoveResult {
            dst: reg(0),
            wide: op == 0x0b,
        },
        0x0d => Effect::MoveException { dst: reg(0) },
        0x0e => Effect::Return { src: None },
        0x0f..=0x11 => Effect::Return { src: Some(reg(0)) },
        0x12..=0x19 => Effect::Const {
            dst: reg(0),
            value: insn.literal.unwrap_or(0),
            wide: op >= 0x16,
        },
        0x1a | 0x1b => match insn.string() {
            Some(value) => Effect::ConstString { dst: reg(0), value },
            None => Effect::ConstOther { dst: reg(0) },
        },
        0x1c | 0xfe | 0xff => Effect::ConstOther { dst: reg(0) },
        0x20 | 0x21 => Effect::Compute {
            dst: reg(0),
            srcs: vec![reg(1)],
            wide: false,
        },
        0x22 => Effect::NewInstance {
            dst: reg(0),
            class: insn.type_ref().unwrap_or(""),
        },
        0x23 => Effect::NewArray {
            dst: reg(0),
            size: reg(1),
        },
        0x24 | 0x25 => Effect::FilledNewArray { args: r },
        0x26 => Effect::FillArrayData { array: reg(0) },
        0x27 => Effect::Throw { src: reg(0) },
        0x2d..=0x31 => Effect::Compute {
            dst: reg(0),
            srcs: vec![reg(1), reg(2)],
            wide: false,
        },
        0x44..=0x4a => Effect::ArrayGet {
            dst: reg(0),
            array: reg(1),
            wide: op == 0x45,
        },
        0x4b..=0x51 => Effect::ArrayPut {
            src: reg(0),
            array: reg(1),
        },
        0x52..=0x58 | 0x60..=0x66 => match insn.field_ref() {
            Some(field) => Effect::FieldGet {
                dst: reg(0),
                object: (op <= 0x58).then(|| reg(1)),
                field,
                wide: op == 0x53 || op == 0x61,
            },
            None => Effect::Nop,
        },
        0x59..=0x5f | 0x67..=0x6d => match insn.field_ref() {
            Some(field) => Effect::FieldPut {
                src: reg(0),
                object: (op <= 0x5f).then(|| reg(1)),
                field,
            },
            None => Effect::Nop,
        },
        0x6e..=0x72 | 0x74..=0x78 | 0xfa..=0xfd => Effect::Invoke {
            method: insn.method_ref(),
            args: r,
            opcode: insn.opcode,
        },
        0x7b..=0x8f => Effect::Compute {
            dst: reg(0),
            srcs: vec![reg(1)],
            wide: matches!(op, 0x7d | 0x7e | 0x80 | 0x81 | 0x83 | 0x86 | 0x88 | 0x89 | 0x8b),
        },
        0x90..=0xaf => Effect::Compute {
            dst: reg(0),
            srcs: vec![reg(1), reg(2)],
            wide: matches!(op, 0x9b..=0xa5 | 0xab..=0xaf),
        },
        0xb0..=0xcf => Effect::Compute {
            dst: reg(0),
            srcs: vec![reg(0), reg(1)],
            wide: matches!(op, 0xbb..=0xc5 | 0xcb..=0xcf),
        },
        0xd0..=0xe2 => Effect::Compute {
            dst: reg(0),
            srcs: vec![reg(1)],
            wide: false,
        },
        0x28..=0x2c | 0x32..=0x3d => Effect::Branch,
        _ => Effect::Nop,
    }
}

/// Width in registers of a type descriptor.
pub fn type_width(descriptor: &str) -> usize {
    if descriptor == "J" || descriptor == "D" {
        2
    } else {
        1
    }
}

/// One register per logical argument (receiver first for instance calls);
/// wide arguments are represented by their low register.
pub fn logical_args(method: &MethodRef, is_static: bool, regs: &[u16]) -> Vec<u16> {
    let mut out = Vec::new();
    let mut i = 0;
    if !is_static {
        if let Some(&r) = regs.first() {
            out.push(r);
        }
        i = 1;
    }
    for p in &method.proto.parameters {
        match regs.get(i) {
            Some(&r) => out.push(r),
            None => break,
        }
        i += type_width(p);
    }
    out
}

/// Registers holding each logical parameter on method entry.
pub fn param_registers(body: &MethodBody, parameters: &[String], is_static: bool) -> Vec<u16> {
    let mut reg = body.first_param_register();
    let mut out = Vec::new();
    if !is_static {
        out.push(reg);
        reg += 1;
    }
    for p in parameters {
        out.push(reg);
        reg += type_width(p) as u16;
    }
    out
}

pub trait Lattice: Clone + PartialEq {
    fn bottom() -> Self;
    /// Joins `other` into `self`, returning whether `self` changed.
    fn join(&mut self, other: &Self) -> bool;
}

/// Abstract register file plus one slot for the pending invoke result.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<V> {
    regs: Vec<V>,
}

impl<V: Lattice> Frame<V> {
    pub fn new(registers: u16) -> Frame<V> {
        Frame {
            regs: vec![V::bottom(); registers as usize + 1],
        }
    }

    fn result_slot(&self) -> usize {
        self.regs.len() - 1
    }

    pub fn get(&self, r: u16) -> V {
        let r = r as usize;
        if r < self.result_slot() {
            self.regs[r].clone()
        } else {
            V::bottom()
        }
    }

    pub fn set(&mut self, r: u16, v: V) {
        let r = r as usize;
        if r < self.result_slot() {
            self.regs[r] = v;
        }
    }

    pub fn set_wide(&mut self, r: u16, v: V, wide: bool) {
        if wide {
            self.set(r.saturating_add(1), v.clone());
        }
        self.set(r, v);
    }

    pub fn result(&self) -> V {
        self.regs[self.result_slot()].clone()
    }

    pub fn set_result(&mut self, v: V) {
        let slot = self.result_slot();
        self.regs[slot] = v;
    }

    fn join(&mut self, other: &Frame<V>) -> bool {
        let mut changed = false;
        for (a, b) in self.regs.iter_mut().zip(&other.regs) {
            changed |= a.join(b);
        }
        changed
    }
}

/// Control-flow successors of instruction `idx`: normal edges first, then
/// exception-handler entries.
pub fn successors(body: &MethodBody, idx: usize) -> (Vec<usize>, Vec<usize>) {
    let insn = &body.instructions[idx];
    let mut normal = Vec::new();
    let op = insn.opcode;
    if !op.ends_block() && idx + 1 < body.instructions.len() {
        normal.push(idx + 1);
    }
    if op.is_conditional_branch() || op.is_goto() {
        if let Some(t) = insn.target.and_then(|t| body.index_of(t)) {
            normal.push(t);
        }
    }
    if op == Opcode::PACKED_SWITCH || op == Opcode::SPARSE_SWITCH {
        let payload = insn
            .target
            .and_then(|t| body.index_of(t))
            .and_then(|p| body.instructions[p].payload.as_ref());
        let rel: &[i32] = match payload {
            Some(Payload::PackedSwitch { targets, .. }) => targets,
            Some(Payload::SparseSwitch { targets, .. }) => targets,
            _ => &[],
        };
        for &t in rel {
            let byte = insn.offset as i64 + t as i64 * 2;
            if let Some(i) = u32::try_from(byte).ok().and_then(|b| body.index_of(b)) {
                normal.push(i);
            }
        }
    }
    let mut handlers = Vec::new();
    if !op.is_payload() {
        for t in &body.tries {
            if insn.offset >= t.start && insn.offset < t.end {
                for h in &t.handlers {
                    if let Some(i) = body.index_of(h.target) {
                        handlers.push(i);
                    }
                }
            }
        }
    }
    normal.sort_unstable();
    normal.dedup();
    handlers.sort_unstable();
    handlers.dedup();
    (normal, handlers)
}

/// Computes the abstract frame on entry to every instruction; `None` marks
/// unreachable instructions.
pub fn solve<V, F>(body: &MethodBody, entry: Frame<V>, mut transfer: F) -> Vec<Option<Frame<V>>>
where
    V: Lattice,
    F: FnMut(usize, &Instruction, &Effect<'_>, &mut Frame<V>),
{
    let n = body.instructions.len();
    let mut states: Vec<Option<Frame<V>>> = vec![None; n];
    if n == 0 {
        return states;
    }
    let succ: Vec<(Vec<usize>, Vec<usize>)> = (0..n).map(|i| successors(body, i)).collect();
    let effects: Vec<Effect<'_>> = body.instructions.iter().map(effect).collect();
    states[0] = Some(entry);
    let mut queue = VecDeque::from([0usize]);
    let mut queued = vec![false; n];
    queued[0] = true;
    while let Some(idx) = queue.pop_front() {
        queued[idx] = false;
        let Some(input) = states[idx].clone() else {
            continue;
        };
        let mut out = input.clone();
        transfer(idx, &body.instructions[idx], &effects[idx], &mut out);
        let (normal, handlers) = &succ[idx];
        let mut push = |target: usize, frame: &Frame<V>, states: &mut Vec<Option<Frame<V>>>| {
            let changed = match &mut states[target] {
                Some(existing) => existing.join(frame),
                slot @ None => {
                    *slot = Some(frame.clone());
                    true
                }
            };
            if changed && !queued[target] {
                queued[target] = true;
                queue.push_back(target);
            }
        };
        for &t in normal {
            push(t, &out, &mut states);
        }
        for &h in handlers {
            push(h, &input, &mut states);
            push(h, &out, &mut states);
        }
    }
    states
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dex::{CatchHandler, Prototype, Reference, TryBlock};
    use std::collections::BTreeSet;

    impl Lattice for BTreeSet<u32> {
        fn bottom() -> Self {
            BTreeSet::new()
        }
        fn join(&mut self, other: &Self) -> bool {
            let before = self.len();
            self.extend(other.iter().copied());
            self.len() != before
        }
    }

    fn insn(offset: u32, op: u16, regs: &[u16], width: u32) -> Instruction {
        Instruction {
            offset,
            opcode: Opcode(op),
            registers: regs.to_vec(),
            reference: None,
            literal: None,
            target: None,
            width,
            payload: None,
        }
    }

    fn body(instructions: Vec<Instruction>, tries: Vec<TryBlock>) -> MethodBody {
        MethodBody {
            registers_size: 3,
            ins_size: 1,
            outs_size: 0,
            instructions,
            tries,
        }
    }

    fn mref(params: &[&str]) -> MethodRef {
        MethodRef {
            class: "LA;".into(),
            name: "m".into(),
            proto: Prototype {
                shorty: String::new(),
                return_type: "V".into(),
                parameters: params.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    #[test]
    fn wide_arguments_collapse_to_low_register() {
        let m = mref(&["J", "I"]);
        assert_eq!(logical_args(&m, false, &[4, 5, 6, 7]), vec![4, 5, 7]);
        assert_eq!(logical_args(&m, true, &[5, 6, 7]), vec![5, 7]);
    }

    #[test]
    fn param_registers_follow_locals() {
        let mut b = body(vec![], vec![]);
        b.registers_size = 6;
        b.ins_size = 4;
        assert_eq!(param_registers(&b, &["J".into(), "I".into()], false), vec![2, 3, 5]);
    }

    #[test]
    fn redefinition_kills_and_branches_join() {
        // 0: const v0 (marks {1})   2: if-eqz v0 -> 6   4: const v0 (marks {2})   6: return v0
        let mut branch = insn(2, 0x38, &[0], 2);
        branch.target = Some(6);
        let b = body(
            vec![
                insn(0, 0x12, &[0], 1),
                branch,
                insn(4, 0x12, &[0], 1),
                insn(6, 0x0f, &[0], 1),
            ],
            vec![],
        );
        let states = solve(&b, Frame::<BTreeSet<u32>>::new(3), |i, _, e, f| {
            if let Effect::Const { dst, .. } = e {
                f.set(*dst, BTreeSet::from([i as u32 + 1]));
            }
        });
        let at_return = states[3].as_ref().unwrap().get(0);
        assert_eq!(at_return, BTreeSet::from([1, 3]));
    }

    #[test]
    fn handler_sees_state_before_throwing_instruction() {
        let mut call = insn(2, 0x71, &[], 3);
        call.reference = Some(Reference::Method(mref(&[])));
        let b = body(
            vec![
                insn(0, 0x12, &[0], 1),
                call,
                insn(8, 0x12, &[0], 1),
                insn(10, 0x0e, &[], 1),
                insn(12, 0x0d, &[1], 1),
                insn(14, 0x0f, &[0], 1),
            ],
            vec![TryBlock {
                start: 2,
                end: 8,
                handlers: vec![CatchHandler {
                    exception_type: None,
                    target: 12,
                }],
            }],
        );
        let states = solve(&b, Frame::<BTreeSet<u32>>::new(3), |i, _, e, f| {
            if let Effect::Const { dst, .. } = e {
                f.set(*dst, BTreeSet::from([i as u32]));
            }
        });
        assert_eq!(states[4].as_ref().unwrap().get(0), BTreeSet::from([0]));
        assert!(states[3].is_some());
    }

    #[test]
    fn unreachable_code_has_no_state() {
        let b = body(vec![insn(0, 0x0e, &[], 1), insn(2, 0x12, &[0], 1)], vec![]);
        let states = solve(&b, Frame::<BTreeSet<u32>>::new(3), |_, _, _, _| {});
        assert!(states[1].is_none());
    }
}
