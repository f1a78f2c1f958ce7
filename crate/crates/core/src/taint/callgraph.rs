use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Deserialize;

use crate::axml::{ComponentKind, ManifestModel};
use crate::dex::{MethodKey, MethodRef, Opcode};
use crate::program::Program;

pub const DEFAULT_ENTRY_POINTS: &str = include_str!("../../data/entry_points.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct EntryPointConfig {
    pub components: ComponentEntries,
    pub listeners: ListenerConfig,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ComponentEntries {
    pub activity: Vec<String>,
    pub service: Vec<String>,
    pub receiver: Vec<String>,
    pub provider: Vec<String>,
    pub application: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ListenerConfig {
    pub interface_suffixes: Vec<String>,
    pub interfaces: Vec<String>,
}

impl EntryPointConfig {
    pub fn builtin() -> EntryPointConfig {
        EntryPointConfig::parse(DEFAULT_ENTRY_POINTS).expect("shipped entry point file parses")
    }

    pub fn parse(text: &str) -> Result<EntryPointConfig, toml::de::Error> {
        toml::from_str(text)
    }

    fn names(&self, kind: ComponentKind) -> &[String] {
        match kind {
            ComponentKind::Activity => &self.components.activity,
            ComponentKind::Service => &self.components.service,
            ComponentKind::Receiver => &self.components.receiver,
            ComponentKind::Provider => &self.components.provider,
        }
    }

    fn is_listener_interface(&self, descriptor: &str) -> bool {
        let bare = descriptor.trim_end_matches(';');
        self.listeners.interfaces.iter().any(|i| i == descriptor)
            || self.listeners.interface_suffixes.iter().any(|s| bare.ends_with(s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CgNode {
    pub key: MethodKey,
    /// Program method index; `None` for boundary (library) methods.
    pub method: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CallEdge {
    pub caller: usize,
    pub callee: usize,
    /// Byte offset of the invoke instruction in the caller.
    pub site: u32,
}

/// Call multigraph over program methods plus boundary nodes. Node `i` for
/// `i < program.methods.len()` is program method `i`.
#[derive(Debug, Clone)]
pub struct CallGraph {
    pub nodes: Vec<CgNode>,
    pub edges: Vec<CallEdge>,
    pub entry_points: BTreeSet<usize>,
    reachable: Vec<bool>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    site_targets: HashMap<(usize, u32), Vec<usize>>,
}

impl CallGraph {
    pub fn is_reachable(&self, node: usize) -> bool {
        self.reachable.get(node).copied().unwrap_or(false)
    }

    pub fn reachable_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&n| self.reachable[n])
    }

    /// Callee nodes of the invoke at `site` in `method`.
    pub fn targets(&self, method: usize, site: u32) -> &[usize] {
        self.site_targets
            .get(&(method, site))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn callees(&self, node: usize) -> impl Iterator<Item = &CallEdge> {
        self.outgoing[node].iter().map(|&e| &self.edges[e])
    }

    pub fn callers(&self, node: usize) -> impl Iterator<Item = &CallEdge> {
        self.incoming[node].iter().map(|&e| &self.edges[e])
    }

    pub fn node_key(&self, node: usize) -> &MethodKey {
        &self.nodes[node].key
    }

    /// Copy of this graph with a different entry-point set.
    pub fn with_entry_points(&self, entry_points: BTreeSet<usize>) -> CallGraph {
        let mut g = self.clone();
        g.reachable = reach(&g.outgoing, &g.edges, &entry_points, g.nodes.len());
        g.entry_points = entry_points;
        g
    }
}

fn reach(outgoing: &[Vec<usize>], edges: &[CallEdge], roots: &BTreeSet<usize>, n: usize) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = roots.iter().copied().collect();
    for &r in roots {
        seen[r] = true;
    }
    while let Some(node) = queue.pop_front() {
        for &e in &outgoing[node] {
            let c = edges[e].callee;
            if !seen[c] {
                seen[c] = true;
                queue.push_back(c);
            }
        }
    }
    seen
}

/// Program methods an invoke may dispatch to under class hierarchy analysis.
pub fn dispatch_targets(program: &Program, callee: &MethodRef, opcode: Opcode) -> Vec<usize> {
    let descriptor = callee.proto.descriptor();
    let concrete = |i: &usize| program.methods[*i].is_concrete();
    let mut out = BTreeSet::new();
    if let Some(i) = program.resolve(&callee.class, &callee.name, &descriptor) {
        if concrete(&i) {
            out.insert(i);
        }
    }
    if opcode.is_virtual_dispatch() {
        for sub in program.all_subtypes(&callee.class) {
            if let Some(i) = program.declared(&sub, &callee.name, &descriptor) {
                if concrete(&i) {
                    out.insert(i);
                }
            }
        }
    }
    out.into_iter().collect()
}

pub fn build_call_graph(program: &Program, manifest: &ManifestModel, config: &EntryPointConfig) -> CallGraph {
    let mut nodes: Vec<CgNode> = program
        .methods
        .iter()
        .enumerate()
        .map(|(i, m)| CgNode {
            key: m.key.clone(),
            method: Some(i),
        })
        .collect();
    let mut boundary: BTreeMap<MethodKey, usize> = BTreeMap::new();
    let mut edges = Vec::new();
    let mut site_targets: HashMap<(usize, u32), Vec<usize>> = HashMap::new();

    for (mid, _, body) in program.bodies() {
        for insn in &body.instructions {
            if !insn.opcode.is_invoke() && !matches!(insn.opcode.0, 0xfa | 0xfb) {
                continue;
            }
            let Some(callee) = insn.method_ref() else { continue };
            let mut targets = dispatch_targets(program, callee, insn.opcode);
            if targets.is_empty() {
                let key = MethodKey::external(callee);
                let next = nodes.len();
                let node = *boundary.entry(key.clone()).or_insert_with(|| {
                    nodes.push(CgNode { key, method: None });
                    next
                });
                targets.push(node);
            }
            for &t in &targets {
                edges.push(CallEdge {
                    caller: mid,
                    callee: t,
                    site: insn.offset,
                });
            }
            site_targets.insert((mid, insn.offset), targets);
        }
    }

    let n = nodes.len();
    let mut outgoing = vec![Vec::new(); n];
    let mut incoming = vec![Vec::new(); n];
    for (i, e) in edges.iter().enumerate() {
        outgoing[e.caller].push(i);
        incoming[e.callee].push(i);
    }

    let mut entry_points = component_entries(program, manifest, config);
    let mut reachable = reach(&outgoing, &edges, &entry_points, n);
    loop {
        let extra = listener_entries(program, config, &reachable);
        let before = entry_points.len();
        entry_points.extend(extra);
        if entry_points.len() == before {
            break;
        }
        reachable = reach(&outgoing, &edges, &entry_points, n);
    }

    CallGraph {
        nodes,
        edges,
        entry_points,
        reachable,
        outgoing,
        incoming,
        site_targets,
    }
}

fn lifecycle_methods(program: &Program, class: &str, names: &[String], out: &mut BTreeSet<usize>) {
    let Some(pc) = program.class(class) else { return };
    let mut seen_sigs = BTreeSet::new();
    let mut current = Some(pc);
    let mut own = true;
    while let Some(c) = current {
        for &i in &c.methods {
            let m = &program.methods[i];
            if !names.contains(&m.key.name) || !m.is_concrete() {
                continue;
            }
            if m.key.name == "<init>" && !own {
                continue;
            }
            if seen_sigs.insert((m.key.name.clone(), m.key.descriptor.clone())) {
                out.insert(i);
            }
        }
        own = false;
        current = c.superclass.as_deref().and_then(|s| program.class(s));
    }
}

fn component_entries(program: &Program, manifest: &ManifestModel, config: &EntryPointConfig) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for c in &manifest.components {
        lifecycle_methods(program, &c.descriptor(), config.names(c.kind), &mut out);
    }
    if let Some(app) = &manifest.application_class {
        let descriptor = format!("L{};", app.replace('.', "/"));
        lifecycle_methods(program, &descriptor, &config.components.application, &mut out);
    }
    out
}

fn listener_entries(program: &Program, config: &EntryPointConfig, reachable: &[bool]) -> BTreeSet<usize> {
    let mut instantiated = BTreeSet::new();
    for (mid, _, body) in program.bodies() {
        if !reachable[mid] {
            continue;
        }
        for insn in &body.instructions {
            if insn.opcode == Opcode::NEW_INSTANCE {
                if let Some(t) = insn.type_ref() {
                    instantiated.insert(t.to_string());
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for class in instantiated {
        let Some(pc) = program.class(&class) else { continue };
        let supers = program.supertypes(&class);
        if !supers.iter().any(|s| config.is_listener_interface(s)) {
            continue;
        }
        for &i in &pc.methods {
            let m = &program.methods[i];
            if m.key.name != "<init>" && m.key.name != "<clinit>" && m.is_concrete() && !m.is_static() {
                out.insert(i);
            }
        }
    }
    out
}
