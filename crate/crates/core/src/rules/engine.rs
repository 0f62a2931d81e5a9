use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;
use std::time::Instant;

use crate::aed::{FileKind, SinkRecord};
use crate::ir::{BinOp, Call, ClassDef, ComponentKind, Const, MethodDef, MethodRef, Operand, Program, Receiver, Resolution, Stmt};
use crate::sourcesink::{Config, PathCarrier, Payload, SinkSpec, SourceKind};
use crate::summaries::{apply_effects, native_overapprox, Catalog, EffectHost, Slot, Target};
use crate::taint::{EvSet, PathExpr, PathSet, Tag};

use super::state::{Cell, SiteId, State};
use super::{AnalysisOptions, AnalysisOutcome};

/// Surrogate for `Method.invoke`: `java.lang.reflect.Method.invoke(className,
/// methodName, receiver, args...)`.
pub(crate) const REFLECT_CLASS: &str = "java.lang.reflect.Method";
const OBJECT: &str = "java.lang.Object";
const GLOBAL: &str = "$global";

/// Budget exhausted; unwinds the whole analysis.
struct Timeout;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum SiteKey {
    /// The receiver of entry methods: one object per component class.
    Entry(String),
    /// An allocation statement under a calling context.
    Alloc { entry: usize, path: Vec<(MethodRef, usize)> },
}

#[derive(Clone, Debug)]
pub(super) struct SiteInfo {
    pub class: String,
    /// May stand for more than one concrete object; no strong updates.
    pub multi: bool,
}

struct Frame {
    method: MethodRef,
    recv_class: String,
    kind: ComponentKind,
    call_idx: usize,
    in_loop: bool,
}

struct RecAcc {
    sink: MethodRef,
    paths: PathSet,
    evset: EvSet,
    hint: Option<FileKind>,
}

struct Engine<'a> {
    program: &'a Program,
    config: &'a Config,
    catalog: &'a Catalog,
    cap: usize,
    deadline: Option<Instant>,
    entry: usize,
    sites: Vec<SiteInfo>,
    site_ids: HashMap<SiteKey, SiteId>,
    stack: Vec<Frame>,
    records: BTreeMap<String, RecAcc>,
    cycles: HashMap<MethodRef, Rc<Vec<bool>>>,
    steps: u64,
}

pub(super) fn run(program: &Program, config: &Config, catalog: &Catalog, opts: &AnalysisOptions) -> AnalysisOutcome {
    let start = Instant::now();
    let mut eng = Engine {
        program,
        config,
        catalog,
        cap: opts.path_cap,
        deadline: opts.budget.map(|b| start + b),
        entry: 0,
        sites: Vec::new(),
        site_ids: HashMap::new(),
        stack: Vec::new(),
        records: BTreeMap::new(),
        cycles: HashMap::new(),
        steps: 0,
    };
    let mut shared = State::default();
    let mut timed_out = false;
    let mut final_state = None;
    for (i, entry) in program.entry_points.iter().enumerate() {
        eng.entry = i;
        match eng.run_entry(entry, &mut shared) {
            Ok(st) => final_state = Some(st),
            Err(Timeout) => {
                timed_out = true;
                break;
            }
        }
    }
    AnalysisOutcome {
        records: eng.finish(timed_out),
        timed_out,
        elapsed: start.elapsed(),
        steps: eng.steps,
        final_state,
    }
}

/// Fully qualified name for the `java.lang` simple names MJIR sources use.
fn canonical_type(ty: &str) -> String {
    const LANG: [&str; 14] = [
        "Object", "String", "StringBuilder", "StringBuffer", "Integer", "Long", "Double", "Boolean", "System",
        "Thread", "Runnable", "Math", "CharSequence", "Character",
    ];
    if LANG.contains(&ty) {
        format!("java.lang.{ty}")
    } else {
        ty.to_string()
    }
}

fn is_string_type(ty: &str) -> bool {
    canonical_type(ty) == "java.lang.String"
}

fn eval_int(op: BinOp, a: i64, b: i64) -> Option<i64> {
    Some(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div => a.checked_div(b)?,
        BinOp::Rem => a.checked_rem(b)?,
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => a.wrapping_shl((b & 63) as u32),
        BinOp::Shr => a.wrapping_shr((b & 63) as u32),
        BinOp::Eq => (a == b) as i64,
        BinOp::Ne => (a != b) as i64,
        BinOp::Lt => (a < b) as i64,
        BinOp::Le => (a <= b) as i64,
        BinOp::Gt => (a > b) as i64,
        BinOp::Ge => (a >= b) as i64,
    })
}

/// Statements lying on a control-flow cycle.
fn cycle_statements(m: &MethodDef) -> Vec<bool> {
    let n = m.body.len();
    let succs: Vec<Vec<usize>> = (0..n).map(|i| successors(m, i)).collect();
    (0..n)
        .map(|i| {
            let mut seen = vec![false; n];
            let mut work: Vec<usize> = succs[i].clone();
            while let Some(j) = work.pop() {
                if j >= n || seen[j] {
                    continue;
                }
                if j == i {
                    return true;
                }
                seen[j] = true;
                work.extend(&succs[j]);
            }
            false
        })
        .collect()
}

fn successors(m: &MethodDef, i: usize) -> Vec<usize> {
    let label = |l: &str| m.label_index(l).expect("labels are validated at parse time");
    match &m.body[i] {
        Stmt::If { target, .. } => vec![i + 1, label(target)],
        Stmt::Goto(l) => vec![label(l)],
        Stmt::Return(_) => vec![],
        _ => vec![i + 1],
    }
}

/// The literal text a cell holds, when it is exactly one fully known string.
fn literal_of(cell: &Cell) -> Option<String> {
    let mut it = cell.tag.paths.iter();
    match (it.next(), it.next()) {
        (Some(p), None) if p.is_all_literal() => Some(p.to_string()),
        _ => None,
    }
}

impl<'a> Engine<'a> {
    fn tick(&mut self) -> Result<(), Timeout> {
        self.steps += 1;
        match self.deadline {
            Some(d) if Instant::now() >= d => Err(Timeout),
            _ => Ok(()),
        }
    }

    fn supertypes(&self) -> impl Fn(&str) -> Vec<String> + 'a {
        let catalog = self.catalog;
        move |c| catalog.supertypes(c)
    }

    fn site(&mut self, key: SiteKey, class: &str, multi: bool) -> SiteId {
        if let Some(id) = self.site_ids.get(&key) {
            return *id;
        }
        let id = self.sites.len();
        self.sites.push(SiteInfo {
            class: class.to_string(),
            multi,
        });
        self.site_ids.insert(key, id);
        id
    }

    fn alloc_site(&mut self, class: &str, idx: usize, loop_here: bool) -> SiteId {
        let top = self.stack.last().expect("allocation inside a method");
        let multi = top.in_loop || loop_here;
        let mut path: Vec<(MethodRef, usize)> = self.stack.iter().map(|f| (f.method.clone(), f.call_idx)).collect();
        path.last_mut().expect("non-empty").1 = idx;
        let key = SiteKey::Alloc {
            entry: self.entry,
            path,
        };
        self.site(key, class, multi)
    }

    fn location(&self) -> String {
        let frames: Vec<String> = self.stack.iter().map(|f| format!("{}@{}", f.method, f.call_idx)).collect();
        format!("e{}:{}", self.entry, frames.join(">"))
    }

    fn finish(&self, timed_out: bool) -> Vec<SinkRecord> {
        let mut out = Vec::new();
        for (loc, r) in &self.records {
            if r.evset.is_empty() && !self.config.record_empty {
                continue;
            }
            let paths = if r.paths.is_empty() {
                PathSet::single(PathExpr::unresolved())
            } else {
                r.paths.clone()
            };
            out.push(SinkRecord {
                sink: r.sink.clone(),
                location: loc.clone(),
                truncated: timed_out || paths.is_top(),
                paths,
                evset: r.evset.clone(),
                kind_hint: r.hint,
            });
        }
        out
    }

    fn run_entry(&mut self, entry: &MethodRef, shared: &mut State) -> Result<State, Timeout> {
        let Resolution::Declared { class, method } = self.program.resolve_call(&entry.class, &entry.name, entry.arity)
        else {
            return Ok(shared.clone());
        };
        let mut st = State {
            statics: std::mem::take(&mut shared.statics),
            heap: std::mem::take(&mut shared.heap),
            ..State::default()
        };
        if !method.is_static {
            let site = self.site(SiteKey::Entry(entry.class.clone()), &entry.class, false);
            st.heap.entry(site).or_default();
            st.locals.insert(
                "this".into(),
                Cell {
                    tag: Tag::bottom(),
                    pts: BTreeSet::from([site]),
                },
            );
        }
        let params = self.callback_params(&entry.class, method, vec![Cell::bottom(); method.arity()]);
        for (p, c) in method.params.iter().zip(params) {
            st.locals.insert(p.name.clone(), c);
        }
        let (exit, _) = self.run_method(class, method, &entry.class, st, false)?;
        shared.statics = exit.statics.clone();
        shared.heap = exit.heap.clone();
        Ok(exit)
    }

    /// Parameters of a method the framework calls back, tainted by the
    /// argument sources its overridden signature carries.
    fn callback_params(&self, recv_class: &str, m: &MethodDef, mut args: Vec<Cell>) -> Vec<Cell> {
        for anc in self.program.ancestors(recv_class, self.supertypes()) {
            let sig = MethodRef::new(anc, m.name.clone(), m.arity());
            for src in self.config.sources_for(&sig) {
                if !matches!(src.kind, SourceKind::ArgEvidence | SourceKind::CallbackArgEvidence) {
                    continue;
                }
                if let (Some(n), Payload::Evidence(e)) = (src.arg, &src.payload) {
                    if let Some(c) = args.get_mut(n - 1) {
                        c.tag.evset.insert(e.clone());
                    }
                }
            }
        }
        args
    }

    fn run_method(
        &mut self,
        class: &'a ClassDef,
        m: &'a MethodDef,
        recv_class: &str,
        init: State,
        in_loop: bool,
    ) -> Result<(State, Cell), Timeout> {
        let method = MethodRef::new(class.name.clone(), m.name.clone(), m.arity());
        let kind = self.program.class(recv_class).map_or(class.kind, |c| c.kind);
        let cycles = match self.cycles.get(&method) {
            Some(c) => c.clone(),
            None => {
                let c = Rc::new(cycle_statements(m));
                self.cycles.insert(method.clone(), c.clone());
                c
            }
        };
        self.stack.push(Frame {
            method,
            recv_class: recv_class.to_string(),
            kind,
            call_idx: 0,
            in_loop,
        });
        let r = self.fixpoint(class, m, init, &cycles);
        self.stack.pop();
        r
    }

    fn fixpoint(&mut self, class: &'a ClassDef, m: &'a MethodDef, init: State, cycles: &[bool]) -> Result<(State, Cell), Timeout> {
        let n = m.body.len();
        let mut ret = Cell::bottom();
        if n == 0 {
            return Ok((init, ret));
        }
        let mut ins: Vec<Option<State>> = vec![None; n];
        ins[0] = Some(init);
        let mut exit: Option<State> = None;
        let mut work = BTreeSet::from([0usize]);
        while let Some(i) = work.pop_first() {
            self.tick()?;
            let mut st = ins[i].clone().expect("queued statements have a state");
            match &m.body[i] {
                Stmt::Return(v) => {
                    if let Some(op) = v {
                        ret.join_with(&st.operand(op), self.cap);
                    }
                    exit = Some(match exit {
                        Some(e) => e.join(&st, self.cap),
                        None => st,
                    });
                    continue;
                }
                Stmt::If { .. } | Stmt::Goto(_) => {}
                Stmt::Invoke { ret: dst, call } => self.invoke(&mut st, class, m, i, cycles[i], dst.as_deref(), call)?,
                other => self.transfer(&mut st, m, i, cycles[i], other),
            }
            for s in successors(m, i) {
                if s >= n {
                    exit = Some(match exit {
                        Some(e) => e.join(&st, self.cap),
                        None => st.clone(),
                    });
                    continue;
                }
                let next = match &ins[s] {
                    Some(old) => {
                        let joined = old.join(&st, self.cap);
                        if &joined == old {
                            continue;
                        }
                        joined
                    }
                    None => st.clone(),
                };
                ins[s] = Some(next);
                work.insert(s);
            }
        }
        // a method that never returns leaves the heap as it found it
        let exit = exit.unwrap_or_else(|| ins[0].take().expect("entry state"));
        Ok((exit, ret))
    }

    fn is_string(&self, m: &MethodDef, op: &Operand) -> bool {
        match op {
            Operand::Const(Const::Str(_)) => true,
            Operand::Const(_) => false,
            Operand::Var(v) => m.var_type(v).is_some_and(is_string_type),
        }
    }

    fn strong(&self, pts: &BTreeSet<SiteId>) -> Option<SiteId> {
        match pts.iter().next() {
            Some(&s) if pts.len() == 1 && !self.sites[s].multi => Some(s),
            _ => None,
        }
    }

    fn transfer(&mut self, st: &mut State, m: &MethodDef, idx: usize, loop_here: bool, stmt: &Stmt) {
        let cap = self.cap;
        match stmt {
            Stmt::AssignConst { dst, value } => {
                st.set_local(dst, Cell::of_const(value));
                if let Const::Int(n) = value {
                    st.consts.insert(dst.clone(), *n);
                }
            }
            Stmt::AssignCopy { dst, src } => {
                let k = st.consts.get(src).copied();
                st.set_local(dst, st.local(src));
                if let Some(k) = k {
                    st.consts.insert(dst.clone(), k);
                }
            }
            Stmt::StaticFieldLoad { dst, class, field } => {
                let c = st.statics.get(&(class.clone(), field.clone())).cloned().unwrap_or_default();
                st.set_local(dst, c);
            }
            Stmt::StaticFieldStore { class, field, src } => {
                let c = st.operand(src);
                st.statics.insert((class.clone(), field.clone()), c);
            }
            Stmt::InstanceFieldLoad { dst, base, field } => {
                let b = st.local(base);
                let c = if b.pts.is_empty() {
                    Cell::of_tag(b.tag.evidence_only())
                } else {
                    let mut c = Cell::bottom();
                    for s in &b.pts {
                        if let Some(f) = st.heap.get(s).and_then(|o| o.fields.get(field)) {
                            c.join_with(f, cap);
                        }
                    }
                    c
                };
                st.set_local(dst, c);
            }
            Stmt::InstanceFieldStore { base, field, src } => {
                let b = st.local(base);
                let v = st.operand(src);
                if b.pts.is_empty() {
                    let cell = st.locals.entry(base.clone()).or_default();
                    cell.tag.evset.extend(v.tag.evset.iter().cloned());
                } else if let Some(s) = self.strong(&b.pts) {
                    st.heap.entry(s).or_default().fields.insert(field.clone(), v);
                } else {
                    for s in &b.pts {
                        st.heap.entry(*s).or_default().fields.entry(field.clone()).or_default().join_with(&v, cap);
                    }
                }
            }
            Stmt::ArrayLoad { dst, array, index } => {
                let a = st.local(array);
                let c = if a.pts.is_empty() {
                    Cell::of_tag(a.tag.clone())
                } else {
                    let k = st.const_int(index);
                    let mut c = Cell::bottom();
                    for s in &a.pts {
                        let Some(o) = st.heap.get(s) else { continue };
                        match k {
                            Some(k) => {
                                c.join_with(o.elems.get(&k).unwrap_or(&o.summary), cap);
                                c.tag.evset.extend(o.loose.iter().cloned());
                            }
                            None => {
                                c.join_with(&o.summary, cap);
                            }
                        }
                    }
                    c
                };
                st.set_local(dst, c);
            }
            Stmt::ArrayStore { array, index, src } => {
                let a = st.local(array);
                let v = st.operand(src);
                let k = st.const_int(index);
                if a.pts.is_empty() {
                    let cell = st.locals.entry(array.clone()).or_default();
                    cell.tag.evset.extend(v.tag.evset.iter().cloned());
                    return;
                }
                let strong = self.strong(&a.pts);
                for s in &a.pts {
                    let o = st.heap.entry(*s).or_default();
                    match k {
                        Some(k) => {
                            if strong.is_some() {
                                o.elems.insert(k, v.clone());
                            } else {
                                let summary = o.summary.clone();
                                o.elems.entry(k).or_insert(summary).join_with(&v, cap);
                            }
                            o.summary.join_with(&v, cap);
                        }
                        None => {
                            o.summary.tag.evset.extend(v.tag.evset.iter().cloned());
                            o.summary.pts.extend(v.pts.iter().copied());
                            o.loose.extend(v.tag.evset.iter().cloned());
                        }
                    }
                }
            }
            Stmt::BinaryOp { dst, op, lhs, rhs } => {
                let (a, b) = (st.operand(lhs), st.operand(rhs));
                let tag = if *op == BinOp::Add && self.is_string(m, lhs) && self.is_string(m, rhs) {
                    a.tag.concat(&b.tag, cap)
                } else {
                    Tag {
                        evset: a.tag.evset.union(&b.tag.evset).cloned().collect(),
                        paths: PathSet::new(),
                    }
                };
                let k = match (st.const_int(lhs), st.const_int(rhs)) {
                    (Some(x), Some(y)) => eval_int(*op, x, y),
                    _ => None,
                };
                st.set_local(dst, Cell::of_tag(tag));
                if let Some(k) = k {
                    st.consts.insert(dst.clone(), k);
                }
            }
            Stmt::New { dst, class } => self.allocate(st, dst, &canonical_type(class), idx, loop_here),
            Stmt::NewArray { dst, elem_type, .. } => {
                self.allocate(st, dst, &format!("{}[]", canonical_type(elem_type)), idx, loop_here)
            }
            Stmt::Invoke { .. } | Stmt::Return(_) | Stmt::If { .. } | Stmt::Goto(_) => {
                unreachable!("control and call statements are handled by the fixpoint")
            }
        }
    }

    fn allocate(&mut self, st: &mut State, dst: &str, class: &str, idx: usize, loop_here: bool) {
        let site = self.alloc_site(class, idx, loop_here);
        if self.sites[site].multi {
            st.heap.entry(site).or_default();
        } else {
            st.heap.insert(site, Default::default());
        }
        st.set_local(
            dst,
            Cell {
                tag: Tag::bottom(),
                pts: BTreeSet::from([site]),
            },
        );
    }

    /// Receiver classes to dispatch on, each with the receiver cell narrowed
    /// to the objects of that class.
    fn by_class(&self, cell: &Cell, fallback: Option<String>) -> Vec<(String, Cell)> {
        if cell.pts.is_empty() {
            return fallback.map(|ty| (ty, cell.clone())).into_iter().collect();
        }
        let mut groups: BTreeMap<String, BTreeSet<SiteId>> = BTreeMap::new();
        for s in &cell.pts {
            groups.entry(self.sites[*s].class.clone()).or_default().insert(*s);
        }
        groups
            .into_iter()
            .map(|(c, pts)| {
                (
                    c,
                    Cell {
                        tag: cell.tag.clone(),
                        pts,
                    },
                )
            })
            .collect()
    }

    fn declared_type(&self, m: &MethodDef, var: &str) -> Option<String> {
        if var == "this" {
            return self.stack.last().map(|f| f.recv_class.clone());
        }
        m.var_type(var).map(canonical_type)
    }

    #[allow(clippy::too_many_arguments)]
    fn invoke(
        &mut self,
        st: &mut State,
        class: &'a ClassDef,
        m: &'a MethodDef,
        idx: usize,
        loop_here: bool,
        dst: Option<&str>,
        call: &'a Call,
    ) -> Result<(), Timeout> {
        let top = self.stack.last_mut().expect("call inside a method");
        top.call_idx = idx;
        let in_loop = top.in_loop || loop_here;

        let ret = if matches!(&call.receiver, Receiver::Static(c) if c == REFLECT_CLASS) && call.method == "invoke" {
            self.reflective(st, call, in_loop)?
        } else {
            let (targets, declared, base_var) = match &call.receiver {
                Receiver::Static(c) => (vec![(c.clone(), Cell::bottom())], None, None),
                Receiver::Super => {
                    let sup = class.superclass.clone().unwrap_or_else(|| OBJECT.to_string());
                    (vec![(sup, st.local("this"))], None, Some("this"))
                }
                Receiver::Var(v) => {
                    let declared = self.declared_type(m, v);
                    let fallback = declared.clone().unwrap_or_else(|| OBJECT.to_string());
                    (self.by_class(&st.local(v), Some(fallback)), declared, Some(v.as_str()))
                }
            };
            let pre = st.clone();
            let mut joined: Option<(State, Cell)> = None;
            for (recv, this) in targets {
                let mut s = pre.clone();
                let r = self.dispatch(&mut s, &recv, this, declared.as_deref(), base_var, call, in_loop)?;
                joined = Some(match joined {
                    Some((js, jr)) => (js.join(&s, self.cap), jr.join(&r, self.cap)),
                    None => (s, r),
                });
            }
            let (s, r) = joined.unwrap_or((pre, Cell::bottom()));
            *st = s;
            r
        };
        if let Some(d) = dst {
            st.set_local(d, ret);
        }
        Ok(())
    }

    /// The receiver class, its supertypes, then the declared type's, ending
    /// at `java.lang.Object`.
    fn lookup_chain(&self, recv: &str, declared: Option<&str>) -> Vec<String> {
        let mut chain = self.program.ancestors(recv, self.supertypes());
        if let Some(d) = declared {
            for c in self.program.ancestors(d, self.supertypes()) {
                if !chain.contains(&c) {
                    chain.push(c);
                }
            }
        }
        if let Some(pos) = chain.iter().position(|c| c == OBJECT) {
            chain.remove(pos);
        }
        chain.push(OBJECT.to_string());
        chain
    }

    #[allow(clippy::too_many_arguments)]
    fn dispatch(
        &mut self,
        s: &mut State,
        recv: &str,
        this: Cell,
        declared: Option<&str>,
        base_var: Option<&str>,
        call: &'a Call,
        in_loop: bool,
    ) -> Result<Cell, Timeout> {
        let arity = call.args.len();
        match self.program.resolve_call(recv, &call.method, arity) {
            Resolution::Declared { class, method } => {
                let chain = self.lookup_chain(recv, declared);
                let sigs: Vec<MethodRef> = chain.iter().map(|c| MethodRef::new(c.clone(), call.method.clone(), arity)).collect();
                self.arg_sources(s, &sigs, call);
                let args = call.args.iter().map(|a| s.operand(a)).collect();
                let consts = call.args.iter().map(|a| s.const_int(a)).collect();
                let this = (!method.is_static).then_some(this);
                self.inline(s, class, method, recv, this, args, consts, in_loop, false)
            }
            Resolution::External { .. } => {
                if let Some(r) = self.redirect(s, recv, &this, call, in_loop)? {
                    return Ok(r);
                }
                let chain = self.lookup_chain(recv, declared);
                Ok(self.external(s, &chain, this, base_var, call))
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn inline(
        &mut self,
        s: &mut State,
        class: &'a ClassDef,
        m: &'a MethodDef,
        recv: &str,
        this: Option<Cell>,
        args: Vec<Cell>,
        consts: Vec<Option<i64>>,
        in_loop: bool,
        callback: bool,
    ) -> Result<Cell, Timeout> {
        let target = MethodRef::new(class.name.clone(), m.name.clone(), m.arity());
        if self.stack.iter().any(|f| f.method == target) {
            return Ok(Cell::bottom());
        }
        let mut callee = State {
            statics: std::mem::take(&mut s.statics),
            heap: std::mem::take(&mut s.heap),
            ..State::default()
        };
        if let (Some(t), false) = (this, m.is_static) {
            callee.locals.insert("this".into(), t);
        }
        let mut args = args;
        args.resize(m.arity(), Cell::bottom());
        let args = if callback { self.callback_params(recv, m, args) } else { args };
        for (i, (p, c)) in m.params.iter().zip(args).enumerate() {
            callee.locals.insert(p.name.clone(), c);
            if let Some(Some(k)) = consts.get(i) {
                callee.consts.insert(p.name.clone(), *k);
            }
        }
        let (exit, ret) = self.run_method(class, m, recv, callee, in_loop)?;
        s.statics = exit.statics;
        s.heap = exit.heap;
        Ok(ret)
    }

    /// Runs each `(receiver class, receiver)` target's `name` from the same
    /// state and joins the outcomes.
    fn fan_out(&mut self, s: &mut State, targets: Vec<(String, Cell)>, name: &str, args: Vec<Cell>, in_loop: bool) -> Result<(), Timeout> {
        let mut joined: Option<State> = None;
        for (recv, this) in targets {
            let Resolution::Declared { class, method } = self.program.resolve_call(&recv, name, args.len()) else {
                continue;
            };
            let mut t = s.clone();
            self.inline(&mut t, class, method, &recv, Some(this), args.clone(), vec![], in_loop, true)?;
            joined = Some(match joined {
                Some(j) => j.join(&t, self.cap),
                None => t,
            });
        }
        if let Some(j) = joined {
            *s = j;
        }
        Ok(())
    }

    fn hidden(&self, s: &State, cell: &Cell, field: &str) -> Cell {
        let mut out = Cell::bottom();
        for site in &cell.pts {
            if let Some(c) = s.heap.get(site).and_then(|o| o.fields.get(field)) {
                out.join_with(c, self.cap);
            }
        }
        out
    }

    /// Framework calls that start app code on another thread or queue.
    fn redirect(&mut self, s: &mut State, recv: &str, this: &Cell, call: &'a Call, in_loop: bool) -> Result<Option<Cell>, Timeout> {
        let kind = self.program.class(recv).map(|c| c.kind);
        let is = |k: ComponentKind, ty: &str| kind == Some(k) || self.program.is_subtype(recv, ty, self.supertypes());
        let arity = call.args.len();
        let (thread, task, handler) = (
            is(ComponentKind::Thread, "java.lang.Thread"),
            is(ComponentKind::AsyncTask, "android.os.AsyncTask"),
            is(ComponentKind::Handler, "android.os.Handler"),
        );
        if call.method == "start" && arity == 0 && thread {
            let targets = match self.program.resolve_call(recv, "run", 0) {
                Resolution::Declared { .. } => vec![(recv.to_string(), this.clone())],
                Resolution::External { .. } => {
                    let runnable = self.hidden(s, this, "$target");
                    self.by_class(&runnable, None)
                }
            };
            self.fan_out(s, targets, "run", vec![], in_loop)?;
            return Ok(Some(Cell::bottom()));
        }
        if call.method == "execute" && task {
            let args: Vec<Cell> = call.args.iter().map(|a| s.operand(a)).collect();
            let mut result = Cell::bottom();
            if let Some((c, m)) = self.program.resolve_by_name(recv, "doInBackground") {
                result = self.inline(s, c, m, recv, Some(this.clone()), args, vec![], in_loop, true)?;
            }
            if let Some((c, m)) = self.program.resolve_by_name(recv, "onPostExecute") {
                if m.arity() == 1 {
                    self.inline(s, c, m, recv, Some(this.clone()), vec![result], vec![], in_loop, true)?;
                }
            }
            return Ok(Some(this.clone()));
        }
        if arity == 1 && handler {
            let arg = s.operand(&call.args[0]);
            if call.method == "post" {
                let fallback = call.args[0].as_var().and_then(|v| {
                    let top = self.stack.last()?;
                    let m = self.program.method(&top.method)?;
                    m.var_type(v).map(canonical_type)
                });
                let targets = self.by_class(&arg, fallback);
                self.fan_out(s, targets, "run", vec![], in_loop)?;
                return Ok(Some(Cell::bottom()));
            }
            if call.method == "sendMessage" {
                self.fan_out(s, vec![(recv.to_string(), this.clone())], "handleMessage", vec![arg], in_loop)?;
                return Ok(Some(Cell::bottom()));
            }
        }
        Ok(None)
    }

    fn reflective(&mut self, st: &mut State, call: &'a Call, in_loop: bool) -> Result<Cell, Timeout> {
        if call.args.len() >= 3 {
            let target = literal_of(&st.operand(&call.args[0]));
            let name = literal_of(&st.operand(&call.args[1]));
            if let (Some(cls), Some(name)) = (target, name) {
                let rest = &call.args[3..];
                if let Resolution::Declared { class, method } = self.program.resolve_call(&cls, &name, rest.len()) {
                    let this = st.operand(&call.args[2]);
                    let args = rest.iter().map(|a| st.operand(a)).collect();
                    let consts = rest.iter().map(|a| st.const_int(a)).collect();
                    let this = (!method.is_static).then_some(this);
                    return self.inline(st, class, method, &cls, this, args, consts, in_loop, false);
                }
            }
        }
        let mut host = self.host(st, Cell::bottom(), None, &call.args);
        native_overapprox(&mut host, call.args.len(), true);
        Ok(host.ret)
    }

    fn arg_sources(&self, s: &mut State, sigs: &[MethodRef], call: &Call) -> bool {
        let mut matched = false;
        for sig in sigs {
            for src in self.config.sources_for(sig) {
                if src.kind != SourceKind::ArgEvidence {
                    continue;
                }
                matched = true;
                let (Some(n), Payload::Evidence(e)) = (src.arg, &src.payload) else { continue };
                if let Some(Operand::Var(v)) = call.args.get(n - 1) {
                    s.locals.entry(v.clone()).or_default().tag.evset.insert(e.clone());
                }
            }
        }
        matched
    }

    fn record_sink(&mut self, s: &State, spec: &SinkSpec, this: &Cell, call: &Call) {
        let mut evset = EvSet::new();
        for &n in &spec.data {
            if let Some(op) = call.args.get(n - 1) {
                evset.extend(s.deep_evset(&s.operand(op)));
            }
        }
        let carrier = match spec.path {
            PathCarrier::Base => this.clone(),
            PathCarrier::Arg(n) => call.args.get(n - 1).map(|a| s.operand(a)).unwrap_or_default(),
        };
        let loc = self.location();
        let cap = self.cap;
        let acc = self.records.entry(loc).or_insert_with(|| RecAcc {
            sink: spec.signature.clone(),
            paths: PathSet::new(),
            evset: EvSet::new(),
            hint: spec.kind,
        });
        acc.paths.union_with(&carrier.tag.paths, cap);
        acc.evset.extend(evset);
    }

    fn context_class(&self) -> String {
        let frame = self
            .stack
            .iter()
            .rev()
            .find(|f| f.kind.is_context())
            .or_else(|| self.stack.first());
        frame
            .map(|f| self.program.local_class_name(&f.recv_class).to_string())
            .unwrap_or_default()
    }

    fn host<'s>(&'s self, st: &'s mut State, base: Cell, base_var: Option<&'s str>, args: &'s [Operand]) -> Host<'s> {
        Host {
            st,
            base_var,
            base,
            args,
            ret: Cell::bottom(),
            cap: self.cap,
            ctx: self.context_class(),
            sites: &self.sites,
        }
    }

    /// A call that resolves outside the app.
    fn external(&mut self, s: &mut State, chain: &[String], this: Cell, base_var: Option<&str>, call: &Call) -> Cell {
        let arity = call.args.len();
        let sigs: Vec<MethodRef> = chain.iter().map(|c| MethodRef::new(c.clone(), call.method.clone(), arity)).collect();
        let mut matched = false;
        if let Some(spec) = sigs.iter().find_map(|sig| self.config.sink_for(sig)) {
            matched = true;
            self.record_sink(s, spec, &this, call);
        }
        matched |= self.arg_sources(s, &sigs, call);
        let this = match base_var {
            Some(v) => Cell {
                tag: s.local(v).tag,
                pts: this.pts,
            },
            None => this,
        };
        let summary = sigs.iter().find_map(|sig| self.catalog.lookup(sig));
        let mut ret = {
            let mut host = self.host(s, this, base_var, &call.args);
            if let Some(sum) = summary {
                apply_effects(&mut host, &sum.effects);
            }
            host.ret
        };
        matched |= summary.is_some();
        for sig in &sigs {
            for src in self.config.sources_for(sig) {
                match (src.kind, &src.payload) {
                    (SourceKind::ReturnEvidence, Payload::Evidence(e)) => {
                        ret.tag.evset.insert(e.clone());
                        matched = true;
                    }
                    (SourceKind::ReturnPathToken, Payload::Token(t)) => {
                        ret.tag.paths = PathSet::single(PathExpr::placeholder(*t));
                        matched = true;
                    }
                    _ => {}
                }
            }
        }
        if !matched {
            let base = match base_var {
                Some(v) => s.local(v),
                None => Cell::bottom(),
            };
            let mut host = self.host(s, base, base_var, &call.args);
            native_overapprox(&mut host, arity, true);
            ret = host.ret;
        }
        ret
    }
}

/// Summary effects evaluated against one call site.
struct Host<'s> {
    st: &'s mut State,
    base_var: Option<&'s str>,
    base: Cell,
    args: &'s [Operand],
    ret: Cell,
    cap: usize,
    ctx: String,
    sites: &'s [SiteInfo],
}

impl Host<'_> {
    fn slot(&self, slot: Slot) -> Cell {
        match slot {
            Slot::Ret => self.ret.clone(),
            Slot::Base => self.base.clone(),
            Slot::Arg(n) => self.args.get(n - 1).map(|a| self.st.operand(a)).unwrap_or_default(),
        }
    }

    fn set_slot_tag(&mut self, slot: Slot, tag: Tag, accumulate: bool) {
        let cap = self.cap;
        let update = |t: &mut Tag| {
            if accumulate {
                t.join_with(&tag, cap);
            } else {
                *t = tag.clone();
            }
        };
        let var = match slot {
            Slot::Ret => {
                update(&mut self.ret.tag);
                return;
            }
            Slot::Base => {
                update(&mut self.base.tag);
                self.base_var
            }
            Slot::Arg(n) => self.args.get(n - 1).and_then(|a| a.as_var()),
        };
        if let Some(v) = var {
            update(&mut self.st.locals.entry(v.to_string()).or_default().tag);
        }
    }
}

impl EffectHost for Host<'_> {
    type Cell = Cell;

    fn cap(&self) -> usize {
        self.cap
    }

    fn read(&self, target: &Target) -> Cell {
        match target {
            Target::Slot(s) => self.slot(*s),
            Target::Hidden(s, field) => {
                let c = self.slot(*s);
                if c.pts.is_empty() {
                    return Cell::of_tag(c.tag);
                }
                let mut out = Cell::bottom();
                for site in &c.pts {
                    if let Some(f) = self.st.heap.get(site).and_then(|o| o.fields.get(field)) {
                        out.join_with(f, self.cap);
                    }
                }
                out
            }
            Target::Global(name) => self
                .st
                .statics
                .get(&(GLOBAL.to_string(), name.clone()))
                .cloned()
                .unwrap_or_default(),
        }
    }

    fn write(&mut self, target: &Target, value: Cell, accumulate: bool) {
        let cap = self.cap;
        match target {
            Target::Slot(Slot::Ret) => {
                if accumulate {
                    self.ret.join_with(&value, cap);
                } else {
                    self.ret = value;
                }
            }
            Target::Slot(s) => self.set_slot_tag(*s, value.tag, accumulate),
            Target::Hidden(s, field) => {
                let c = self.slot(*s);
                if c.pts.is_empty() {
                    // no object to hold the state: fold it into the value itself
                    self.set_slot_tag(*s, value.tag, true);
                    return;
                }
                let strong = match c.pts.iter().next() {
                    Some(&site) if c.pts.len() == 1 && !self.sites[site].multi && !accumulate => Some(site),
                    _ => None,
                };
                if let Some(site) = strong {
                    self.st.heap.entry(site).or_default().fields.insert(field.clone(), value);
                } else {
                    for site in &c.pts {
                        self.st
                            .heap
                            .entry(*site)
                            .or_default()
                            .fields
                            .entry(field.clone())
                            .or_default()
                            .join_with(&value, cap);
                    }
                }
            }
            Target::Global(name) => {
                let slot = self.st.statics.entry((GLOBAL.to_string(), name.clone())).or_default();
                if accumulate {
                    slot.join_with(&value, cap);
                } else {
                    *slot = value;
                }
            }
        }
    }

    fn tag_of(&self, cell: &Cell) -> Tag {
        cell.tag.clone()
    }

    fn cell_of_tag(&self, tag: Tag) -> Cell {
        Cell::of_tag(tag)
    }

    fn join(&self, a: &Cell, b: &Cell) -> Cell {
        a.join(b, self.cap)
    }

    fn context_class(&self) -> String {
        self.ctx.clone()
    }
}
