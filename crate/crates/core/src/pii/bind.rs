use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;

use super::{match_identifier, KeywordDatabase, PiiLocation, PiiOrigin, PiiVariable};
use crate::flow::{self, Effect, Frame, Lattice};
use crate::program::Program;

const VIEW_LOOKUPS: &[&str] = &["findViewById", "requireViewById"];
const TEXT_GETTERS: &[&str] = &["getText"];

/// Code-side PII facts used by the rule and taint engines.
#[derive(Debug, Clone, Default)]
pub struct PiiBinding {
    pub variables: Vec<PiiVariable>,
    /// `(method id, invoke offset)` of text getters reading a PII widget.
    pub text_sites: BTreeMap<(usize, u32), String>,
    /// PII-named fields keyed by `Lcls;->name:type`.
    pub fields: BTreeMap<String, String>,
    /// Methods containing a PII-named string constant.
    pub method_strings: BTreeMap<usize, String>,
}

impl PiiBinding {
    pub fn field_keyword(&self, field: &crate::dex::FieldRef) -> Option<&str> {
        self.fields.get(&field.to_string()).map(String::as_str)
    }
}

/// Whether a value is a widget id (`false`) or the widget's view (`true`).
#[derive(Debug, Clone, PartialEq, Default)]
struct Views(BTreeSet<(bool, usize)>);

impl Lattice for Views {
    fn bottom() -> Self {
        Views::default()
    }

    fn join(&mut self, other: &Self) -> bool {
        let before = self.0.len();
        self.0.extend(other.0.iter().copied());
        self.0.len() != before
    }
}

fn identifier_like() -> Regex {
    Regex::new(r"^[A-Za-z_][A-Za-z0-9_]{1,63}$").expect("valid regex")
}

/// Adds code-identifier PII variables to `pii`.
pub fn bind_pii_to_code(program: &Program, pii: &[PiiVariable], db: &KeywordDatabase) -> Vec<PiiVariable> {
    bind_pii(program, pii, db).variables
}

pub fn bind_pii(program: &Program, pii: &[PiiVariable], db: &KeywordDatabase) -> PiiBinding {
    let widgets: Vec<&PiiVariable> = pii
        .iter()
        .filter(|v| v.origin != PiiOrigin::CodeIdentifier)
        .collect();
    let mut binding = PiiBinding {
        variables: pii.to_vec(),
        ..Default::default()
    };
    let ident = identifier_like();

    for (class, fields) in program.declared_fields() {
        let source = program
            .class(&class)
            .map(|c| program.dexes[c.dex].provenance.clone())
            .unwrap_or_default();
        for f in fields {
            if let Some(k) = match_identifier(db, &f.name) {
                binding.fields.insert(f.to_string(), k.to_string());
                binding.variables.push(PiiVariable {
                    origin: PiiOrigin::CodeIdentifier,
                    matched_keyword: k.to_string(),
                    identifier: f.name.clone(),
                    location: PiiLocation {
                        source: source.clone(),
                        class: Some(class.clone()),
                        ..Default::default()
                    },
                    resource_id: None,
                });
            }
        }
    }

    for (mid, m, body) in program.bodies() {
        let source = &program.dexes[m.dex].provenance;
        let loc = |offset: u32| PiiLocation {
            source: source.clone(),
            class: Some(m.key.class.clone()),
            method: Some(m.key.signature()),
            offset: Some(offset),
        };

        let mut best: Option<&str> = None;
        for insn in &body.instructions {
            let Some(s) = insn.string() else { continue };
            if !ident.is_match(s) {
                continue;
            }
            if let Some(k) = match_identifier(db, s) {
                if best.is_none_or(|b| db.rank(k) < db.rank(b)) {
                    best = Some(k);
                }
                binding.variables.push(PiiVariable {
                    origin: PiiOrigin::CodeIdentifier,
                    matched_keyword: k.to_string(),
                    identifier: s.to_string(),
                    location: loc(insn.offset),
                    resource_id: None,
                });
            }
        }
        if let Some(k) = best {
            binding.method_strings.insert(mid, k.to_string());
        }

        if widgets.is_empty() {
            continue;
        }
        let states = flow::solve(body, Frame::<Views>::new(body.registers_size), |_, _, e, f| {
            view_transfer(e, f, &widgets)
        });
        for (i, insn) in body.instructions.iter().enumerate() {
            let Some(state) = &states[i] else { continue };
            let Some(callee) = insn.method_ref() else { continue };
            if !TEXT_GETTERS.contains(&callee.name.as_str()) || insn.opcode.is_static_invoke() {
                continue;
            }
            let Some(&receiver) = insn.registers.first() else { continue };
            let bound = state
                .get(receiver)
                .0
                .iter()
                .filter(|(is_view, _)| *is_view)
                .map(|&(_, w)| widgets[w])
                .min_by_key(|w| db.rank(&w.matched_keyword));
            if let Some(w) = bound {
                binding
                    .text_sites
                    .insert((mid, insn.offset), w.matched_keyword.clone());
                binding.variables.push(PiiVariable {
                    origin: PiiOrigin::CodeIdentifier,
                    matched_keyword: w.matched_keyword.clone(),
                    identifier: w.identifier.clone(),
                    location: loc(insn.offset),
                    resource_id: w.resource_id,
                });
            }
        }
    }
    binding.variables.sort();
    binding.variables.dedup();
    binding
}

fn view_transfer(e: &Effect<'_>, f: &mut Frame<Views>, widgets: &[&PiiVariable]) {
    match e {
        Effect::Move { dst, src, wide } => {
            let v = f.get(*src);
            f.set_wide(*dst, v, *wide);
        }
        Effect::MoveResult { dst, wide } => {
            let v = f.result();
            f.set_wide(*dst, v, *wide);
        }
        Effect::Const { dst, value, wide } => {
            let ids = widgets
                .iter()
                .enumerate()
                .filter(|(_, w)| w.resource_id.is_some_and(|r| r as i64 == *value || r as i32 as i64 == *value))
                .map(|(i, _)| (false, i))
                .collect();
            f.set_wide(*dst, Views(ids), *wide);
        }
        Effect::FieldGet { dst, field, wide, .. } => {
            let ids = if field.class.ends_with("R$id;") {
                widgets
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| w.identifier == field.name)
                    .map(|(i, _)| (false, i))
                    .collect()
            } else {
                BTreeSet::new()
            };
            f.set_wide(*dst, Views(ids), *wide);
        }
        Effect::Invoke { method, args, opcode } => {
            let mut result = Views::default();
            if let Some(m) = method {
                if VIEW_LOOKUPS.contains(&m.name.as_str()) {
                    let logical = flow::logical_args(m, opcode.is_static_invoke(), args);
                    if let Some(&id_reg) = logical.last() {
                        result.0 = f
                            .get(id_reg)
                            .0
                            .iter()
                            .filter(|(is_view, _)| !is_view)
                            .map(|&(_, w)| (true, w))
                            .collect();
                    }
                }
            }
            f.set_result(result);
        }
        Effect::FilledNewArray { .. } => f.set_result(Views::default()),
        Effect::MoveException { dst }
        | Effect::ConstString { dst, .. }
        | Effect::ConstOther { dst }
        | Effect::NewInstance { dst, .. }
        | Effect::NewArray { dst, .. } => f.set(*dst, Views::default()),
        Effect::ArrayGet { dst, wide, .. } | Effect::Compute { dst, wide, .. } => {
            f.set_wide(*dst, Views::default(), *wide)
        }
        _ => {}
    }
}
