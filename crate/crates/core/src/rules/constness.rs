use std::collections::BTreeSet;

use crate::dex::MethodBody;
use crate::flow::{self, Effect, Frame, Lattice};

const MAX_VALUES: usize = 32;

/// Value classes whose fresh instances start out as constants.
const VALUE_CLASSES: &[&str] = &["Ljava/lang/StringBuilder;", "Ljava/lang/StringBuffer;", "Ljava/lang/String;"];

/// Whether a register holds a compile-time constant, and which one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Const {
    Unreached,
    Strs(BTreeSet<String>),
    Ints(BTreeSet<i64>),
    /// Constant, but not a tracked literal (arrays, builders, derived values).
    Other,
    NonConst,
}

impl Const {
    pub fn is_const(&self) -> bool {
        !matches!(self, Const::NonConst)
    }

    pub fn strings(&self) -> impl Iterator<Item = &str> {
        let set = match self {
            Const::Strs(s) => Some(s),
            _ => None,
        };
        set.into_iter().flatten().map(String::as_str)
    }

    fn lift(&self) -> Const {
        if self.is_const() {
            Const::Other
        } else {
            Const::NonConst
        }
    }
}

impl Lattice for Const {
    fn bottom() -> Self {
        Const::Unreached
    }

    fn join(&mut self, other: &Self) -> bool {
        let joined = match (&*self, other) {
            (_, Const::Unreached) => return false,
            (Const::Unreached, o) => o.clone(),
            (Const::NonConst, _) | (_, Const::NonConst) => Const::NonConst,
            (Const::Strs(a), Const::Strs(b)) => {
                let u: BTreeSet<String> = a.union(b).cloned().collect();
                if u.len() > MAX_VALUES {
                    Const::Other
                } else {
                    Const::Strs(u)
                }
            }
            (Const::Ints(a), Const::Ints(b)) => {
                let u: BTreeSet<i64> = a.union(b).copied().collect();
                if u.len() > MAX_VALUES {
                    Const::Other
                } else {
                    Const::Ints(u)
                }
            }
            _ => Const::Other,
        };
        let changed = joined != *self;
        *self = joined;
        changed
    }
}

/// Constant propagation over one method. Parameters are non-constant;
/// `internal(site)` reports whether an invoke targets program code, whose
/// results are treated as non-constant.
pub fn analyze(
    body: &MethodBody,
    is_static: bool,
    parameters: &[String],
    internal: &dyn Fn(u32) -> bool,
) -> Vec<Option<Frame<Const>>> {
    let mut entry = Frame::<Const>::new(body.registers_size);
    for (i, r) in flow::param_registers(body, parameters, is_static)
        .into_iter()
        .enumerate()
    {
        let wide = i >= usize::from(!is_static)
            && parameters
                .get(i - usize::from(!is_static))
                .is_some_and(|p| flow::type_width(p) == 2);
        entry.set_wide(r, Const::NonConst, wide);
    }
    flow::solve(body, entry, |_, insn, e, f| transfer(insn.offset, e, f, internal))
}

fn transfer(offset: u32, e: &Effect<'_>, f: &mut Frame<Const>, internal: &dyn Fn(u32) -> bool) {
    match e {
        Effect::Move { dst, src, wide } => {
            let v = f.get(*src);
            f.set_wide(*dst, v, *wide);
        }
        Effect::MoveResult { dst, wide } => {
            let v = f.result();
            f.set_wide(*dst, v, *wide);
        }
        Effect::MoveException { dst } => f.set(*dst, Const::NonConst),
        Effect::Const { dst, value, wide } => f.set_wide(*dst, Const::Ints(BTreeSet::from([*value])), *wide),
        Effect::ConstString { dst, value } => f.set(*dst, Const::Strs(BTreeSet::from([value.to_string()]))),
        Effect::ConstOther { dst } => f.set(*dst, Const::Other),
        Effect::NewInstance { dst, class } => f.set(
            *dst,
            if VALUE_CLASSES.contains(class) {
                Const::Other
            } else {
                Const::NonConst
            },
        ),
        Effect::NewArray { dst, size } => {
            let v = f.get(*size).lift();
            f.set(*dst, v);
        }
        Effect::FilledNewArray { args } => {
            let all = args.iter().all(|&r| f.get(r).is_const());
            f.set_result(if all { Const::Other } else { Const::NonConst });
        }
        Effect::ArrayGet { dst, array, wide } => {
            let v = f.get(*array).lift();
            f.set_wide(*dst, v, *wide);
        }
        Effect::ArrayPut { src, array } => {
            let mut v = f.get(*array);
            v.join(&f.get(*src).lift());
            f.set(*array, v);
        }
        Effect::FieldGet { dst, wide, .. } => f.set_wide(*dst, Const::NonConst, *wide),
        Effect::Compute { dst, srcs, wide } => {
            let all = srcs.iter().all(|&r| f.get(r).is_const());
            f.set_wide(*dst, if all { Const::Other } else { Const::NonConst }, *wide);
        }
        Effect::Invoke { method, args, opcode } => {
            let logical = match method {
                Some(m) => flow::logical_args(m, opcode.is_static_invoke(), args),
                None => args.to_vec(),
            };
            let all_const = !logical.is_empty() && logical.iter().all(|&r| f.get(r).is_const());
            let result = if internal(offset) || method.is_none() || !all_const {
                Const::NonConst
            } else {
                Const::Other
            };
            if !all_const {
                for &r in &logical {
                    if f.get(r) == Const::Other {
                        f.set(r, Const::NonConst);
                    }
                }
            }
            f.set_result(result);
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn join_rules() {
        let mut a = Const::Strs(BTreeSet::from(["x".to_string()]));
        assert!(a.join(&Const::Strs(BTreeSet::from(["y".to_string()]))));
        assert_eq!(a.strings().count(), 2);
        assert!(a.join(&Const::Ints(BTreeSet::from([1]))));
        assert_eq!(a, Const::Other);
        assert!(!a.join(&Const::Unreached));
        assert!(a.join(&Const::NonConst));
        assert!(!a.is_const());
    }
}
