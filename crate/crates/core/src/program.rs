//! Multidex program view: all DEX files merged into one class hierarchy with
//! decoded method bodies.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::dex::{DexFile, MethodBody, MethodKey, ACC_ABSTRACT, ACC_NATIVE, ACC_STATIC};
use crate::diag::{Warning, WarningKind};

#[derive(Debug, Clone)]
pub struct ProgramMethod {
    pub key: MethodKey,
    pub dex: usize,
    pub class: usize,
    pub access_flags: u32,
    pub body: Option<MethodBody>,
}

impl ProgramMethod {
    pub fn is_static(&self) -> bool {
        self.access_flags & ACC_STATIC != 0
    }

    pub fn is_concrete(&self) -> bool {
        self.access_flags & (ACC_ABSTRACT | ACC_NATIVE) == 0
    }
}

#[derive(Debug, Clone)]
pub struct ProgramClass {
    pub descriptor: String,
    pub dex: usize,
    pub superclass: Option<String>,
    pub interfaces: Vec<String>,
    /// Indices into `Program::methods`, in declaration order.
    pub methods: Vec<usize>,
}

#[derive(Debug)]
pub struct Program {
    pub dexes: Vec<DexFile>,
    pub methods: Vec<ProgramMethod>,
    pub classes: Vec<ProgramClass>,
    class_index: HashMap<String, usize>,
    method_index: HashMap<MethodKey, usize>,
    /// Direct subtypes (subclasses and implementors) of each type.
    subtypes: HashMap<String, Vec<String>>,
    pub warnings: Vec<Warning>,
}

impl Program {
    /// Merges DEX files in the given order; the first definition of a class wins.
    pub fn new(dexes: Vec<DexFile>) -> Program {
        let mut warnings = Vec::new();
        let mut classes = Vec::new();
        let mut class_index = HashMap::new();
        let mut pending = Vec::new();

        for (d, dex) in dexes.iter().enumerate() {
            warnings.extend(dex.warnings.iter().cloned());
            for (c, class) in dex.classes.iter().enumerate() {
                if class_index.contains_key(&class.descriptor) {
                    warnings.push(Warning::new(
                        WarningKind::Other,
                        dex.provenance.clone(),
                        format!("duplicate class {} ignored", class.descriptor),
                    ));
                    continue;
                }
                class_index.insert(class.descriptor.clone(), classes.len());
                let mut method_ids = Vec::new();
                for m in class.methods() {
                    method_ids.push(pending.len());
                    pending.push((d, c, *m));
                }
                classes.push(ProgramClass {
                    descriptor: class.descriptor.clone(),
                    dex: d,
                    superclass: class.superclass.clone(),
                    interfaces: class.interfaces.clone(),
                    methods: method_ids,
                });
            }
        }

        let decoded: Vec<(ProgramMethod, Option<Warning>)> = pending
            .par_iter()
            .map(|&(d, c, m)| {
                let dex = &dexes[d];
                let key = dex.method_key(&m);
                let (body, warning) = if m.has_code() {
                    match dex.decode_encoded(&m) {
                        Ok(body) => (Some(body), None),
                        Err(e) => (
                            None,
                            Some(Warning::new(
                                WarningKind::Other,
                                dex.provenance.clone(),
                                format!("skipped undecodable method: {e}"),
                            )),
                        ),
                    }
                } else {
                    (None, None)
                };
                (
                    ProgramMethod {
                        key,
                        dex: d,
                        class: c,
                        access_flags: m.access_flags,
                        body,
                    },
                    warning,
                )
            })
            .collect();

        let mut methods = Vec::with_capacity(decoded.len());
        let mut method_index = HashMap::new();
        for (m, w) in decoded {
            warnings.extend(w);
            method_index.entry(m.key.clone()).or_insert(methods.len());
            methods.push(m);
        }

        let mut subtypes: HashMap<String, Vec<String>> = HashMap::new();
        for class in &classes {
            for parent in class.superclass.iter().chain(class.interfaces.iter()) {
                subtypes
                    .entry(parent.clone())
                    .or_default()
                    .push(class.descriptor.clone());
            }
        }

        Program {
            dexes,
            methods,
            classes,
            class_index,
            method_index,
            subtypes,
            warnings,
        }
    }

    pub fn class(&self, descriptor: &str) -> Option<&ProgramClass> {
        self.class_index.get(descriptor).map(|&i| &self.classes[i])
    }

    pub fn method(&self, key: &MethodKey) -> Option<&ProgramMethod> {
        self.method_index.get(key).map(|&i| &self.methods[i])
    }

    pub fn method_id(&self, key: &MethodKey) -> Option<usize> {
        self.method_index.get(key).copied()
    }

    /// A method declared directly by `class` with the given name and descriptor.
    pub fn declared(&self, class: &str, name: &str, descriptor: &str) -> Option<usize> {
        self.class(class)?.methods.iter().copied().find(|&i| {
            let k = &self.methods[i].key;
            k.name == name && k.descriptor == descriptor
        })
    }

    /// Resolves a method reference by walking up the superclass chain, then
    /// the implemented interfaces (for default methods).
    pub fn resolve(&self, class: &str, name: &str, descriptor: &str) -> Option<usize> {
        let mut seen = BTreeSet::new();
        let mut current = Some(class.to_string());
        while let Some(c) = current {
            if !seen.insert(c.clone()) {
                break;
            }
            if let Some(i) = self.declared(&c, name, descriptor) {
                return Some(i);
            }
            current = self.class(&c).and_then(|pc| pc.superclass.clone());
        }
        let mut queue: Vec<String> = seen
            .iter()
            .filter_map(|c| self.class(c))
            .flat_map(|pc| pc.interfaces.clone())
            .collect();
        while let Some(iface) = queue.pop() {
            if !seen.insert(iface.clone()) {
                continue;
            }
            if let Some(i) = self.declared(&iface, name, descriptor) {
                return Some(i);
            }
            if let Some(pc) = self.class(&iface) {
                queue.extend(pc.interfaces.iter().cloned());
            }
        }
        None
    }

    /// All program types transitively extending or implementing `class`.
    pub fn all_subtypes(&self, class: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack = vec![class.to_string()];
        while let Some(c) = stack.pop() {
            if let Some(children) = self.subtypes.get(&c) {
                for child in children {
                    if out.insert(child.clone()) {
                        stack.push(child.clone());
                    }
                }
            }
        }
        out
    }

    /// Whether `class` is `ancestor` or (transitively) extends/implements it.
    pub fn is_subtype_of(&self, class: &str, ancestor: &str) -> bool {
        class == ancestor || self.all_subtypes(ancestor).contains(class)
    }

    /// Supertypes of a program class, including external ones it names.
    pub fn supertypes(&self, class: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack = vec![class.to_string()];
        while let Some(c) = stack.pop() {
            if let Some(pc) = self.class(&c) {
                for p in pc.superclass.iter().chain(pc.interfaces.iter()) {
                    if out.insert(p.clone()) {
                        stack.push(p.clone());
                    }
                }
            }
        }
        out
    }

    /// Every class descriptor defined across all DEX files.
    pub fn class_descriptors(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.descriptor.as_str())
    }

    /// Methods with decoded bodies, in program order.
    pub fn bodies(&self) -> impl Iterator<Item = (usize, &ProgramMethod, &MethodBody)> {
        self.methods
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.body.as_ref().map(|b| (i, m, b)))
    }

    /// Field names declared by program classes, grouped by declaring class.
    pub fn declared_fields(&self) -> BTreeMap<String, Vec<crate::dex::FieldRef>> {
        let mut out: BTreeMap<String, Vec<crate::dex::FieldRef>> = BTreeMap::new();
        for dex in &self.dexes {
            for class in &dex.classes {
                if self.class(&class.descriptor).map(|c| c.dex) != Some(self.dex_index(dex)) {
                    continue;
                }
                for f in class.fields() {
                    out.entry(class.descriptor.clone())
                        .or_default()
                        .push(dex.field_ref(f).clone());
                }
            }
        }
        out
    }

    fn dex_index(&self, dex: &DexFile) -> usize {
        self.dexes
            .iter()
            .position(|d| std::ptr::eq(d, dex))
            .unwrap_or(usize::MAX)
    }
}
