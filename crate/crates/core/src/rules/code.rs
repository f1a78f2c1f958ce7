use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::constness::{self, Const};
use super::{Category, Finding, Location, Matcher, RuleSet};
use crate::dex::{MethodBody, MethodRef};
use crate::flow::{self, Effect};
use crate::pattern::MethodPattern;
use crate::pii::KeywordDatabase;
use crate::program::Program;
use crate::taint::engine::param_types;
use crate::taint::{CallGraph, TaintGraph};

/// A code location matching a rule, before reachability and PII checks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Candidate {
    pub rule: usize,
    pub method: usize,
    pub site: u32,
    pub evidence: String,
    pub location: Location,
}

fn any_match(patterns: &[MethodPattern], m: &MethodRef, program: &Program) -> bool {
    patterns.iter().any(|p| p.matches(m, Some(program)))
}

pub fn extract_candidate_methods(graph: &TaintGraph<'_>, rules: &RuleSet) -> Vec<Candidate> {
    let program = graph.program;
    let bodies: Vec<(usize, &MethodBody)> = program.bodies().map(|(i, _, b)| (i, b)).collect();
    let mut out: Vec<Candidate> = bodies
        .par_iter()
        .flat_map_iter(|&(mid, body)| method_candidates(graph, rules, mid, body))
        .collect();
    out.sort();
    out.dedup();
    out
}

fn method_candidates(graph: &TaintGraph<'_>, rules: &RuleSet, mid: usize, body: &MethodBody) -> Vec<Candidate> {
    let program = graph.program;
    let cg = graph.cg;
    let m = &program.methods[mid];
    let internal = |site: u32| {
        cg.targets(mid, site)
            .iter()
            .any(|&t| cg.nodes[t].method.is_some_and(|p| program.methods[p].body.is_some()))
    };
    let states = constness::analyze(body, m.is_static(), &param_types(&m.key.descriptor), &internal);
    let site_calls = body_calls(graph, mid);

    let mut out = Vec::new();
    let mut push = |rule: usize, site: u32, evidence: String| {
        out.push(Candidate {
            rule,
            method: mid,
            site,
            evidence,
            location: Location::Code {
                entry: program.dexes[m.dex].provenance.clone(),
                class: m.key.class.clone(),
                method: m.key.signature(),
                offset: site,
            },
        });
    };

    for (i, insn) in body.instructions.iter().enumerate() {
        let Some(state) = &states[i] else { continue };
        let effect = flow::effect(insn);
        for (ri, rule) in rules.rules.iter().enumerate() {
            if rule.category != Category::SecurityVulnerability {
                continue;
            }
            for (mi, matcher) in rule.matchers.iter().enumerate() {
                let regexes = &rules.regexes[ri][mi];
                if let Matcher::ConstString { exclude, .. } = matcher {
                    let (Effect::ConstString { value, .. }, Some(re)) = (&effect, &regexes.pattern) else {
                        continue;
                    };
                    if let Some(hit) = re.find_iter(value).map(|h| h.as_str()).find(|h| !exclude.iter().any(|x| x == h)) {
                        push(ri, insn.offset, format!("string constant {hit:?}"));
                    }
                    continue;
                }
                if let Matcher::NewInstance { classes } = matcher {
                    if let Effect::NewInstance { class, .. } = effect {
                        if classes.iter().any(|c| c == class) {
                            push(ri, insn.offset, format!("new-instance {class}"));
                        }
                    }
                    continue;
                }
                let Effect::Invoke {
                    method: Some(callee),
                    args,
                    opcode,
                } = &effect
                else {
                    continue;
                };
                let logical = flow::logical_args(callee, opcode.is_static_invoke(), args);
                let receiver = usize::from(!opcode.is_static_invoke());
                let arg_value = |arg: usize| -> Option<Const> { logical.get(arg + receiver).map(|&r| state.get(r)) };
                match matcher {
                    Matcher::InvokeConstString {
                        calls,
                        arg,
                        values,
                        ..
                    } if any_match(calls, callee, program) => {
                        let Some(v) = arg_value(*arg) else { continue };
                        let hit = v.strings().find(|s| {
                            let listed = values.iter().any(|x| x.eq_ignore_ascii_case(s));
                            let patterned = regexes.pattern.as_ref().is_some_and(|re| re.is_match(s));
                            let excluded = regexes.exclude.as_ref().is_some_and(|re| re.is_match(s));
                            (listed || patterned) && !excluded
                        });
                        if let Some(s) = hit {
                            push(ri, insn.offset, format!("{callee} with {s:?}"));
                        }
                    }
                    Matcher::InvokeResultReaches { calls, targets } if any_match(calls, callee, program) => {
                        if let Some((_, target)) = site_calls
                            .iter()
                            .find(|(t, tc)| any_match(targets, tc, program) && graph.result_reaches(mid, insn.offset, *t))
                        {
                            push(ri, insn.offset, format!("{callee} result reaches {target}"));
                        }
                    }
                    Matcher::InvokeArgConstant { calls, arg, equals } if any_match(calls, callee, program) => {
                        let Some(v) = arg_value(*arg) else { continue };
                        let ok = match equals {
                            None => v.is_const(),
                            Some(x) => matches!(&v, Const::Ints(set) if set.len() == 1 && set.contains(x)),
                        };
                        if ok {
                            push(ri, insn.offset, format!("{callee} with constant argument {arg}"));
                        }
                    }
                    Matcher::InvokeNonConstArg { calls, arg } if any_match(calls, callee, program) => {
                        if arg_value(*arg).is_some_and(|v| !v.is_const()) {
                            push(ri, insn.offset, format!("{callee} with non-constant argument {arg}"));
                        }
                    }
                    Matcher::Invoke { calls } if any_match(calls, callee, program) => {
                        push(ri, insn.offset, format!("call to {callee}"));
                    }
                    _ => {}
                }
            }
        }
    }
    out
}

fn body_calls(graph: &TaintGraph<'_>, mid: usize) -> Vec<(u32, MethodRef)> {
    graph
        .summary(mid)
        .map(|s| s.calls.iter().map(|(&o, m)| (o, m.clone())).collect())
        .unwrap_or_default()
}

/// Keeps candidates in reachable methods; rules needing PII also need a
/// PII keyword reaching the matched call.
pub fn confirm_candidates(
    cands: &[Candidate],
    rules: &RuleSet,
    cg: &CallGraph,
    pii_at_sites: &BTreeMap<(usize, u32), BTreeMap<usize, BTreeSet<String>>>,
    db: &KeywordDatabase,
) -> Vec<Finding> {
    let mut out = Vec::new();
    for c in cands {
        if !cg.is_reachable(c.method) {
            continue;
        }
        let rule = &rules.rules[c.rule];
        let pii_tag = pii_at_sites
            .get(&(c.method, c.site))
            .and_then(|by_arg| by_arg.values().flatten().min_by_key(|k| db.rank(k)).cloned());
        if rule.requires_pii && pii_tag.is_none() {
            continue;
        }
        out.push(Finding {
            rule_id: rule.id.clone(),
            category: rule.category,
            severity: rule.severity,
            evidence: c.evidence.clone(),
            location: c.location.clone(),
            pii_tag: if rule.requires_pii { pii_tag } else { None },
            confirmed_called: true,
        });
    }
    super::sort_findings(&mut out);
    out
}
