use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::callgraph::CallGraph;
use super::spec::{Channel, SourceCategory, TaintSpec};
use crate::dex::{MethodBody, MethodRef};
use crate::diag::{Warning, WarningKind};
use crate::flow::{self, Effect, Frame, Lattice};
use crate::pii::{KeywordDatabase, PiiBinding};
use crate::program::Program;

pub const DEFAULT_MAX_DEPTH: usize = 6;

/// A taint label local to one method.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Local {
    Param(u16),
    /// Result of the invoke at this byte offset.
    Result(u32),
    /// Value read from a field, keyed by `Lcls;->name:type`.
    Field(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Use {
    Arg { site: u32, index: usize },
    Ret,
    FieldWrite { field: String, site: u32 },
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Labels(BTreeSet<Local>);

impl Lattice for Labels {
    fn bottom() -> Self {
        Labels::default()
    }

    fn join(&mut self, other: &Self) -> bool {
        let before = self.0.len();
        self.0.extend(other.0.iter().cloned());
        self.0.len() != before
    }
}

impl Labels {
    fn union(&mut self, other: Labels) {
        self.0.extend(other.0);
    }
}

/// Where each label of one method ends up.
#[derive(Debug, Clone, Default)]
pub struct MethodSummary {
    pub uses: BTreeMap<Local, BTreeSet<Use>>,
    /// Callee of every reachable invoke, by byte offset.
    pub calls: BTreeMap<u32, MethodRef>,
}

fn summarize(program: &Program, cg: &CallGraph, mid: usize, body: &MethodBody) -> MethodSummary {
    let m = &program.methods[mid];
    let params = flow::param_registers(body, &param_types(&m.key.descriptor), m.is_static());
    let mut entry = Frame::<Labels>::new(body.registers_size);
    for (i, &r) in params.iter().enumerate() {
        entry.set(r, Labels(BTreeSet::from([Local::Param(i as u16)])));
    }
    let internal = |site: u32| {
        cg.targets(mid, site)
            .iter()
            .any(|&t| cg.nodes[t].method.is_some_and(|p| program.methods[p].body.is_some()))
    };
    let states = flow::solve(body, entry, |_, insn, e, f| transfer(insn.offset, e, f, &internal));

    let mut summary = MethodSummary::default();
    let mut record = |labels: Labels, u: Use| {
        for l in labels.0 {
            summary.uses.entry(l).or_default().insert(u.clone());
        }
    };
    let mut calls = BTreeMap::new();
    for (i, insn) in body.instructions.iter().enumerate() {
        let Some(state) = &states[i] else { continue };
        match flow::effect(insn) {
            Effect::Invoke {
                method: Some(callee),
                args,
                opcode,
            } => {
                calls.insert(insn.offset, callee.clone());
                for (index, r) in flow::logical_args(callee, opcode.is_static_invoke(), args)
                    .into_iter()
                    .enumerate()
                {
                    record(state.get(r), Use::Arg { site: insn.offset, index });
                }
            }
            Effect::Return { src: Some(r) } => record(state.get(r), Use::Ret),
            Effect::FieldPut { src, field, .. } => record(
                state.get(src),
                Use::FieldWrite {
                    field: field.to_string(),
                    site: insn.offset,
                },
            ),
            _ => {}
        }
    }
    summary.calls = calls;
    summary
}

/// Splits a `(params)ret` descriptor into parameter type descriptors.
pub fn param_types(descriptor: &str) -> Vec<String> {
    let inner = descriptor
        .strip_prefix('(')
        .and_then(|d| d.split(')').next())
        .unwrap_or("");
    let bytes = inner.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        while i < bytes.len() && bytes[i] == b'[' {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'L' {
            while i < bytes.len() && bytes[i] != b';' {
                i += 1;
            }
        }
        i += 1;
        out.push(inner[start..i.min(inner.len())].to_string());
    }
    out
}

fn transfer(offset: u32, e: &Effect<'_>, f: &mut Frame<Labels>, internal: &dyn Fn(u32) -> bool) {
    match e {
        Effect::Move { dst, src, wide } => {
            let v = f.get(*src);
            f.set_wide(*dst, v, *wide);
        }
        Effect::MoveResult { dst, wide } => {
            let v = f.result();
            f.set_wide(*dst, v, *wide);
        }
        Effect::MoveException { dst }
        | Effect::ConstString { dst, .. }
        | Effect::ConstOther { dst }
        | Effect::NewInstance { dst, .. }
        | Effect::NewArray { dst, .. } => f.set(*dst, Labels::default()),
        Effect::Const { dst, wide, .. } => f.set_wide(*dst, Labels::default(), *wide),
        Effect::FilledNewArray { args } => {
            let mut v = Labels::default();
            for &r in *args {
                v.union(f.get(r));
            }
            f.set_result(v);
        }
        Effect::ArrayGet { dst, array, wide } => {
            let v = f.get(*array);
            f.set_wide(*dst, v, *wide);
        }
        Effect::ArrayPut { src, array } => {
            let mut v = f.get(*array);
            v.union(f.get(*src));
            f.set(*array, v);
        }
        Effect::FieldGet { dst, field, wide, .. } => {
            f.set_wide(*dst, Labels(BTreeSet::from([Local::Field(field.to_string())])), *wide)
        }
        Effect::Compute { dst, srcs, wide } => {
            let mut v = Labels::default();
            for &r in srcs {
                v.union(f.get(r));
            }
            f.set_wide(*dst, v, *wide);
        }
        Effect::Invoke { method, args, opcode } => {
            let mut result = Labels(BTreeSet::from([Local::Result(offset)]));
            if !internal(offset) {
                let logical = match method {
                    Some(m) => flow::logical_args(m, opcode.is_static_invoke(), args),
                    None => args.to_vec(),
                };
                let mut inputs = Labels::default();
                for &r in &logical {
                    inputs.union(f.get(r));
                }
                if !opcode.is_static_invoke() && method.is_some() {
                    if let Some(&receiver) = logical.first() {
                        let mut others = Labels::default();
                        for &r in &logical[1..] {
                            others.union(f.get(r));
                        }
                        let mut v = f.get(receiver);
                        v.union(others);
                        f.set(receiver, v);
                    }
                }
                result.union(inputs);
            }
            f.set_result(result);
        }
        _ => {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Call,
    Return,
    Field,
    Sink,
}

/// One edge of a flow's call chain. For `Field` steps `caller` wrote the
/// field at `site` and `callee` read it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChainStep {
    pub kind: StepKind,
    pub caller: String,
    pub callee: String,
    pub site: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowEndpoint {
    pub entry: String,
    pub method: String,
    pub site: u32,
    pub pattern: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowStatus {
    Candidate,
    Confirmed,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowPath {
    pub source: FlowEndpoint,
    pub source_category: SourceCategory,
    pub sink: FlowEndpoint,
    pub channel: Channel,
    pub call_chain: Vec<ChainStep>,
    pub pii_tag: Option<String>,
    pub status: FlowStatus,
}

impl FlowPath {
    /// Chain length excluding the final sink edge.
    pub fn depth(&self) -> usize {
        self.call_chain.iter().filter(|s| s.kind != StepKind::Sink).count()
    }

    fn sort_key(&self) -> (&FlowEndpoint, &FlowEndpoint, usize, &Vec<ChainStep>) {
        (&self.source, &self.sink, self.call_chain.len(), &self.call_chain)
    }
}

pub fn sort_flows(flows: &mut [FlowPath]) {
    flows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Per-method label summaries plus the indexes needed to follow labels
/// across methods.
pub struct TaintGraph<'p> {
    pub program: &'p Program,
    pub cg: &'p CallGraph,
    summaries: Vec<Option<MethodSummary>>,
    field_readers: BTreeMap<String, BTreeSet<usize>>,
}

type Node = (usize, Local);
type Stack = Vec<(usize, u32)>;

struct SearchState {
    node: Node,
    stack: Stack,
    depth: usize,
    parent: Option<usize>,
    step: Option<ChainStep>,
}

struct SearchResult {
    states: Vec<SearchState>,
    /// `(state, site, arg index)` for every argument use reached.
    arg_hits: Vec<(usize, u32, usize)>,
    truncated: usize,
}

impl<'p> TaintGraph<'p> {
    pub fn new(program: &'p Program, cg: &'p CallGraph) -> TaintGraph<'p> {
        let summaries: Vec<Option<MethodSummary>> = program
            .methods
            .par_iter()
            .enumerate()
            .map(|(mid, m)| m.body.as_ref().map(|b| summarize(program, cg, mid, b)))
            .collect();
        let mut field_readers: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for (mid, s) in summaries.iter().enumerate() {
            let Some(s) = s else { continue };
            for l in s.uses.keys() {
                if let Local::Field(f) = l {
                    field_readers.entry(f.clone()).or_default().insert(mid);
                }
            }
        }
        TaintGraph {
            program,
            cg,
            summaries,
            field_readers,
        }
    }

    pub fn summary(&self, method: usize) -> Option<&MethodSummary> {
        self.summaries.get(method).and_then(Option::as_ref)
    }

    /// Whether the result of the invoke at `from` reaches an argument of the
    /// invoke at `to` within `method`.
    pub fn result_reaches(&self, method: usize, from: u32, to: u32) -> bool {
        self.summary(method)
            .and_then(|s| s.uses.get(&Local::Result(from)))
            .is_some_and(|uses| uses.iter().any(|u| matches!(u, Use::Arg { site, .. } if *site == to)))
    }

    fn signature(&self, method: usize) -> String {
        self.program.methods[method].key.signature()
    }

    fn search(&self, starts: &[Node], max_depth: usize) -> SearchResult {
        let mut states: Vec<SearchState> = Vec::new();
        let mut seen: HashSet<(Node, Stack)> = HashSet::new();
        let mut queue = VecDeque::new();
        for s in starts {
            if seen.insert((s.clone(), Vec::new())) {
                queue.push_back(states.len());
                states.push(SearchState {
                    node: s.clone(),
                    stack: Vec::new(),
                    depth: 0,
                    parent: None,
                    step: None,
                });
            }
        }
        let mut arg_hits = Vec::new();
        let mut truncated = 0;
        while let Some(si) = queue.pop_front() {
            let (method, label) = states[si].node.clone();
            let depth = states[si].depth;
            let stack = states[si].stack.clone();
            let Some(uses) = self.summary(method).and_then(|s| s.uses.get(&label)) else {
                continue;
            };
            let mut next: Vec<(Node, Stack, ChainStep)> = Vec::new();
            for u in uses {
                match u {
                    Use::Arg { site, index } => {
                        arg_hits.push((si, *site, *index));
                        for &t in self.cg.targets(method, *site) {
                            let Some(callee) = self.cg.nodes[t].method else { continue };
                            if self.summary(callee).is_none() {
                                continue;
                            }
                            let mut s = stack.clone();
                            s.push((method, *site));
                            next.push((
                                (callee, Local::Param(*index as u16)),
                                s,
                                ChainStep {
                                    kind: StepKind::Call,
                                    caller: self.signature(method),
                                    callee: self.signature(callee),
                                    site: *site,
                                },
                            ));
                        }
                    }
                    Use::Ret => {
                        let mut returns: Vec<(usize, u32, Stack)> = Vec::new();
                        if let Some((&(caller, site), rest)) = stack.split_last() {
                            returns.push((caller, site, rest.to_vec()));
                        } else {
                            for e in self.cg.callers(method) {
                                if self.summary(e.caller).is_some() {
                                    returns.push((e.caller, e.site, Vec::new()));
                                }
                            }
                        }
                        for (caller, site, s) in returns {
                            next.push((
                                (caller, Local::Result(site)),
                                s,
                                ChainStep {
                                    kind: StepKind::Return,
                                    caller: self.signature(caller),
                                    callee: self.signature(method),
                                    site,
                                },
                            ));
                        }
                    }
                    Use::FieldWrite { field, site } => {
                        for &reader in self.field_readers.get(field).into_iter().flatten() {
                            next.push((
                                (reader, Local::Field(field.clone())),
                                Vec::new(),
                                ChainStep {
                                    kind: StepKind::Field,
                                    caller: self.signature(method),
                                    callee: self.signature(reader),
                                    site: *site,
                                },
                            ));
                        }
                    }
                }
            }
            for (node, s, step) in next {
                if seen.contains(&(node.clone(), s.clone())) {
                    continue;
                }
                if depth + 1 > max_depth {
                    truncated += 1;
                    continue;
                }
                seen.insert((node.clone(), s.clone()));
                queue.push_back(states.len());
                states.push(SearchState {
                    node,
                    stack: s,
                    depth: depth + 1,
                    parent: Some(si),
                    step: Some(step),
                });
            }
        }
        SearchResult {
            states,
            arg_hits,
            truncated,
        }
    }

    fn chain(&self, states: &[SearchState], mut si: usize) -> Vec<ChainStep> {
        let mut steps = Vec::new();
        while let Some(step) = &states[si].step {
            steps.push(step.clone());
            match states[si].parent {
                Some(p) => si = p,
                None => break,
            }
        }
        steps.reverse();
        steps
    }

    /// PII keywords reaching the arguments of each invoke site, following
    /// at most `max_depth` interprocedural steps.
    pub fn pii_at_sites(&self, binding: &PiiBinding, max_depth: usize) -> BTreeMap<(usize, u32), BTreeMap<usize, BTreeSet<String>>> {
        let mut origins: Vec<(Node, String)> = binding
            .text_sites
            .iter()
            .map(|(&(m, site), k)| ((m, Local::Result(site)), k.clone()))
            .collect();
        for (field, k) in &binding.fields {
            for &reader in self.field_readers.get(field).into_iter().flatten() {
                origins.push(((reader, Local::Field(field.clone())), k.clone()));
            }
        }
        let hits: Vec<(String, Vec<(usize, u32, usize)>)> = origins
            .par_iter()
            .map(|(node, k)| {
                let r = self.search(std::slice::from_ref(node), max_depth);
                let hits = r
                    .arg_hits
                    .iter()
                    .map(|&(si, site, index)| (r.states[si].node.0, site, index))
                    .collect();
                (k.clone(), hits)
            })
            .collect();
        let mut out: BTreeMap<(usize, u32), BTreeMap<usize, BTreeSet<String>>> = BTreeMap::new();
        for (k, hs) in hits {
            for (m, site, index) in hs {
                out.entry((m, site))
                    .or_default()
                    .entry(index)
                    .or_default()
                    .insert(k.clone());
            }
        }
        out
    }
}

struct SourceSite {
    method: usize,
    site: u32,
    category: SourceCategory,
    pattern: String,
}

struct RawFlow {
    source: usize,
    sink_method: usize,
    sink_site: u32,
    sink_index: usize,
    sink_spec: usize,
    chain: Vec<ChainStep>,
}

/// Candidate flows from every source call to every sink call its value
/// reaches, plus depth-truncation warnings.
pub fn find_flows(
    graph: &TaintGraph<'_>,
    spec: &TaintSpec,
    binding: &PiiBinding,
    db: &KeywordDatabase,
    max_depth: usize,
) -> (Vec<FlowPath>, Vec<Warning>) {
    let program = graph.program;
    let mut sources = Vec::new();
    for (mid, _) in program.methods.iter().enumerate() {
        let Some(summary) = graph.summary(mid) else { continue };
        for (&site, callee) in &summary.calls {
            if let Some(s) = spec.sources.iter().find(|s| s.pattern.matches(callee, Some(program))) {
                sources.push(SourceSite {
                    method: mid,
                    site,
                    category: s.category,
                    pattern: s.pattern.to_string(),
                });
            }
        }
    }

    let searched: Vec<(Vec<RawFlow>, BTreeSet<(usize, u32)>, usize)> = sources
        .par_iter()
        .enumerate()
        .map(|(si, src)| {
            let r = graph.search(&[(src.method, Local::Result(src.site))], max_depth);
            let mut reached = BTreeSet::new();
            let mut flows: Vec<RawFlow> = Vec::new();
            let mut seen_sinks = BTreeSet::new();
            for &(state, site, index) in &r.arg_hits {
                let method = r.states[state].node.0;
                reached.insert((method, site));
                let Some(callee) = graph.summary(method).and_then(|s| s.calls.get(&site)) else {
                    continue;
                };
                let Some(k) = spec.sinks.iter().position(|s| s.pattern.matches(callee, Some(program))) else {
                    continue;
                };
                if !seen_sinks.insert((method, site)) {
                    continue;
                }
                let mut chain = graph.chain(&r.states, state);
                chain.push(ChainStep {
                    kind: StepKind::Sink,
                    caller: graph.signature(method),
                    callee: callee.to_string(),
                    site,
                });
                flows.push(RawFlow {
                    source: si,
                    sink_method: method,
                    sink_site: site,
                    sink_index: index,
                    sink_spec: k,
                    chain,
                });
            }
            (flows, reached, r.truncated)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut by_sink: BTreeMap<(usize, u32), Vec<usize>> = BTreeMap::new();
    for (si, (flows, _, truncated)) in searched.iter().enumerate() {
        if *truncated > 0 {
            let src = &sources[si];
            warnings.push(Warning::new(
                WarningKind::DepthTruncated,
                program.dexes[program.methods[src.method].dex].provenance.clone(),
                format!(
                    "flow search from {} at {:#x} stopped at depth {max_depth} ({truncated} branches)",
                    graph.signature(src.method),
                    src.site
                ),
            ));
        }
        for f in flows {
            by_sink.entry((f.sink_method, f.sink_site)).or_default().push(si);
        }
    }

    // A source whose value feeds another source reaching the same sink is
    // reported through the downstream source only.
    let site_of = |si: usize| (sources[si].method, sources[si].site);
    let subsumed = |s1: usize, sink: &(usize, u32)| {
        by_sink[sink].iter().any(|&s2| {
            s2 != s1 && searched[s1].1.contains(&site_of(s2)) && !searched[s2].1.contains(&site_of(s1))
        })
    };

    let tags = graph.pii_at_sites(binding, max_depth);
    let mut out = Vec::new();
    for (flows, _, _) in &searched {
        for f in flows {
            if subsumed(f.source, &(f.sink_method, f.sink_site)) {
                continue;
            }
            let src = &sources[f.source];
            let intrinsic_tag = binding
                .text_sites
                .get(&(src.method, src.site))
                .cloned()
                .or_else(|| {
                    (src.category == SourceCategory::Database)
                        .then(|| binding.method_strings.get(&src.method).cloned())
                        .flatten()
                });
            let value_tag = tags
                .get(&(f.sink_method, f.sink_site))
                .and_then(|by_arg| by_arg.get(&f.sink_index))
                .and_then(|ks| ks.iter().min_by_key(|k| db.rank(k)).cloned());
            let endpoint = |method: usize, site: u32, pattern: String| FlowEndpoint {
                entry: program.dexes[program.methods[method].dex].provenance.clone(),
                method: graph.signature(method),
                site,
                pattern,
            };
            let sink = &spec.sinks[f.sink_spec];
            out.push(FlowPath {
                source: endpoint(src.method, src.site, src.pattern.clone()),
                source_category: src.category,
                sink: endpoint(f.sink_method, f.sink_site, sink.pattern.to_string()),
                channel: sink.channel,
                call_chain: f.chain.clone(),
                pii_tag: intrinsic_tag.or(value_tag),
                status: FlowStatus::Candidate,
            });
        }
    }
    sort_flows(&mut out);
    (out, warnings)
}

/// Keeps flows whose source method is reachable and whose data is personal;
/// log sinks need a matched PII keyword.
pub fn confirm_flows(paths: &[FlowPath], cg: &CallGraph) -> Vec<FlowPath> {
    let nodes: HashMap<(String, String), usize> = cg
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| ((n.key.dex.clone(), n.key.signature()), i))
        .collect();
    paths
        .iter()
        .filter(|p| {
            let reachable = nodes
                .get(&(p.source.entry.clone(), p.source.method.clone()))
                .is_some_and(|&n| cg.is_reachable(n));
            let personal = p.source_category.is_intrinsic_pii() || p.pii_tag.is_some();
            let log_ok = p.channel != Channel::Log || p.pii_tag.is_some();
            reachable && personal && log_ok
        })
        .map(|p| FlowPath {
            status: FlowStatus::Confirmed,
            ..p.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_params() {
        assert_eq!(
            param_types("(I[Ljava/lang/String;J[[B)V"),
            vec!["I", "[Ljava/lang/String;", "J", "[[B"]
        );
        assert!(param_types("()V").is_empty());
    }
}
