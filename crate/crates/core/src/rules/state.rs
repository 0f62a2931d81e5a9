use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{Const, Operand};
use crate::taint::{tag_of_const, EvSet, Tag};

pub type SiteId = usize;

/// Abstract value of a variable or heap slot: its tag and the allocation
/// sites it may point to.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Cell {
    pub tag: Tag,
    pub pts: BTreeSet<SiteId>,
}

impl Cell {
    pub fn bottom() -> Cell {
        Cell::default()
    }

    pub fn of_tag(tag: Tag) -> Cell {
        Cell {
            tag,
            pts: BTreeSet::new(),
        }
    }

    pub fn of_const(c: &Const) -> Cell {
        Cell::of_tag(tag_of_const(c))
    }

    pub fn join(&self, other: &Cell, cap: usize) -> Cell {
        let mut out = self.clone();
        out.join_with(other, cap);
        out
    }

    pub fn join_with(&mut self, other: &Cell, cap: usize) -> bool {
        let mut changed = self.tag.join_with(&other.tag, cap);
        for s in &other.pts {
            changed |= self.pts.insert(*s);
        }
        changed
    }
}

/// An abstract object: named fields (framework state uses `$`-prefixed
/// names), array elements at resolved indices, a summary of every stored
/// element, and evidence stored at unresolved indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Obj {
    pub fields: BTreeMap<String, Cell>,
    pub elems: BTreeMap<i64, Cell>,
    pub summary: Cell,
    pub loose: EvSet,
}

impl Obj {
    fn join(&self, other: &Obj, cap: usize) -> Obj {
        let mut fields = self.fields.clone();
        for (k, v) in &other.fields {
            fields
                .entry(k.clone())
                .and_modify(|c| {
                    c.join_with(v, cap);
                })
                .or_insert_with(|| v.clone());
        }
        let keys: BTreeSet<i64> = self.elems.keys().chain(other.elems.keys()).copied().collect();
        let elems = keys
            .into_iter()
            .map(|k| {
                let a = self.elems.get(&k).unwrap_or(&self.summary);
                let b = other.elems.get(&k).unwrap_or(&other.summary);
                (k, a.join(b, cap))
            })
            .collect();
        Obj {
            fields,
            elems,
            summary: self.summary.join(&other.summary, cap),
            loose: self.loose.union(&other.loose).cloned().collect(),
        }
    }
}

/// Per-program-point analysis state. Statics and heap are threaded through
/// calls, so a callee's side effects reach its caller.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct State {
    pub locals: BTreeMap<String, Cell>,
    pub consts: BTreeMap<String, i64>,
    pub statics: BTreeMap<(String, String), Cell>,
    pub heap: BTreeMap<SiteId, Obj>,
}

fn join_maps<K: Ord + Clone>(a: &BTreeMap<K, Cell>, b: &BTreeMap<K, Cell>, cap: usize) -> BTreeMap<K, Cell> {
    let mut out = a.clone();
    for (k, v) in b {
        out.entry(k.clone())
            .and_modify(|c| {
                c.join_with(v, cap);
            })
            .or_insert_with(|| v.clone());
    }
    out
}

impl State {
    pub fn local(&self, v: &str) -> Cell {
        self.locals.get(v).cloned().unwrap_or_default()
    }

    pub fn operand(&self, op: &Operand) -> Cell {
        match op {
            Operand::Var(v) => self.local(v),
            Operand::Const(c) => Cell::of_const(c),
        }
    }

    pub fn const_int(&self, op: &Operand) -> Option<i64> {
        match op {
            Operand::Const(Const::Int(n)) => Some(*n),
            Operand::Var(v) => self.consts.get(v).copied(),
            Operand::Const(_) => None,
        }
    }

    pub fn set_local(&mut self, v: &str, cell: Cell) {
        self.locals.insert(v.to_string(), cell);
        self.consts.remove(v);
    }

    /// Pointwise join; integer constants survive only where both sides agree.
    pub fn join(&self, other: &State, cap: usize) -> State {
        let mut heap = self.heap.clone();
        for (k, v) in &other.heap {
            let joined = match heap.get(k) {
                Some(o) => o.join(v, cap),
                None => v.clone(),
            };
            heap.insert(*k, joined);
        }
        State {
            locals: join_maps(&self.locals, &other.locals, cap),
            consts: self
                .consts
                .iter()
                .filter(|(k, v)| other.consts.get(*k) == Some(v))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            statics: join_maps(&self.statics, &other.statics, cap),
            heap,
        }
    }

    /// Evidence reachable from a cell through the heap.
    pub fn deep_evset(&self, cell: &Cell) -> EvSet {
        let mut out = cell.tag.evset.clone();
        let mut seen = BTreeSet::new();
        let mut work: Vec<SiteId> = cell.pts.iter().copied().collect();
        while let Some(s) = work.pop() {
            if !seen.insert(s) {
                continue;
            }
            let Some(obj) = self.heap.get(&s) else { continue };
            let cells = obj
                .fields
                .values()
                .chain(obj.elems.values())
                .chain(std::iter::once(&obj.summary));
            for c in cells {
                out.extend(c.tag.evset.iter().cloned());
                work.extend(c.pts.iter().copied());
            }
            out.extend(obj.loose.iter().cloned());
        }
        out
    }
}
