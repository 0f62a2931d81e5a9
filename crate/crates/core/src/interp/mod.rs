//! Concrete interpreter for MJIR, used as a test oracle for the analysis.
//!
//! Values carry dynamic taint labels and, for strings and file handles, the
//! text they denote split into spans that remember which came from a dynamic
//! source. A sink call logs the destination both concretely and with those
//! spans folded back to their placeholder tokens.
//!
//! Framework behaviour is modelled here by hand and does not consult the
//! summary catalog. The source and sink configuration is shared, since it
//! defines what counts as evidence and as a write.

mod models;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ir::{BinOp, Call, ClassDef, ComponentKind, Cond, Const, MethodDef, MethodRef, Operand, Program, Receiver, Resolution, Stmt};
use crate::sourcesink::{Config, Payload, SourceKind};
use crate::taint::{EvSet, EvidenceType, Placeholder};

/// Inputs the program cannot compute itself.
#[derive(Clone, Debug)]
pub struct Valuation {
    /// Values of integer variables read before any assignment (branch
    /// conditions).
    pub ints: BTreeMap<String, i64>,
    /// Intent extras by key, for intents the app did not build itself.
    pub extras: BTreeMap<String, String>,
    /// Text returned by `<intent>` sources.
    pub intent_text: String,
    /// Milliseconds returned by clock sources.
    pub timestamp: i64,
    /// Seeds `UUID.randomUUID`.
    pub seed: u64,
}

impl Default for Valuation {
    fn default() -> Self {
        Valuation {
            ints: BTreeMap::new(),
            extras: BTreeMap::new(),
            intent_text: "inbox".into(),
            timestamp: 1_514_764_800_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InterpOptions {
    pub step_limit: u64,
    pub depth_limit: usize,
}

impl Default for InterpOptions {
    fn default() -> Self {
        InterpOptions {
            step_limit: 100_000,
            depth_limit: 256,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum InterpError {
    #[error("step limit of {0} exceeded")]
    StepLimit(u64),
    #[error("call depth limit of {0} exceeded")]
    DepthLimit(usize),
    #[error("reflective call cannot be resolved: {0}")]
    Reflection(String),
}

/// One observed sink call.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LogEntry {
    /// Destination with dynamic parts replaced by their tokens; the package
    /// directory stays concrete, as in AED rows.
    pub abstract_path: String,
    pub concrete_path: String,
    pub labels: EvSet,
    pub sink: MethodRef,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.abstract_path,
            self.concrete_path,
            crate::taint::render_evset(&self.labels),
            self.sink
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Span {
    text: String,
    token: Option<Placeholder>,
}

type Text = Vec<Span>;

fn lit(s: &str) -> Text {
    vec![Span {
        text: s.to_string(),
        token: None,
    }]
}

fn token_span(p: Placeholder, concrete: String) -> Text {
    vec![Span {
        text: concrete,
        token: Some(p),
    }]
}

fn concrete(t: &Text) -> String {
    t.iter().map(|s| s.text.as_str()).collect()
}

fn abstracted(t: &Text) -> String {
    t.iter().map(|s| s.token.map_or(s.text.as_str(), |p| p.token())).collect()
}

fn collapse_slashes(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c == '/' && out.ends_with('/') {
            continue;
        }
        out.push(c);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Kind {
    Null,
    Int(i64),
    Str(String),
    Obj(usize),
    /// A framework object with no modelled state, by class.
    Ext(String),
}

#[derive(Clone, Debug)]
struct Value {
    kind: Kind,
    labels: EvSet,
    /// The string or file path the value denotes, when known.
    text: Option<Text>,
}

impl Value {
    fn null() -> Value {
        Value {
            kind: Kind::Null,
            labels: EvSet::new(),
            text: None,
        }
    }

    fn int(n: i64) -> Value {
        Value {
            kind: Kind::Int(n),
            labels: EvSet::new(),
            text: None,
        }
    }

    fn string(t: Text) -> Value {
        Value {
            kind: Kind::Str(concrete(&t)),
            labels: EvSet::new(),
            text: Some(t),
        }
    }

    fn ext(class: &str, t: Text) -> Value {
        Value {
            kind: Kind::Ext(class.to_string()),
            labels: EvSet::new(),
            text: Some(t),
        }
    }

    fn of_const(c: &Const) -> Value {
        match c {
            Const::Str(s) => Value::string(lit(s)),
            Const::Int(n) => Value::int(*n),
            Const::Bool(b) => Value::int(*b as i64),
            Const::Null => Value::null(),
        }
    }

    fn as_int(&self) -> i64 {
        match &self.kind {
            Kind::Int(n) => *n,
            Kind::Null => 0,
            _ => 1,
        }
    }

    fn as_str(&self) -> Option<String> {
        match &self.kind {
            Kind::Str(s) => Some(s.clone()),
            _ => None,
        }
    }

    /// Java string conversion of the value's content.
    fn display(&self) -> String {
        match &self.kind {
            Kind::Null => "null".into(),
            Kind::Int(n) => n.to_string(),
            Kind::Str(s) => s.clone(),
            Kind::Obj(_) | Kind::Ext(_) => self.text.as_ref().map(concrete).unwrap_or_default(),
        }
    }

    /// A string copy of this value: same labels and text.
    fn to_string_value(&self) -> Value {
        Value {
            kind: Kind::Str(self.text.as_ref().map(concrete).unwrap_or_else(|| self.display())),
            labels: self.labels.clone(),
            text: self.text.clone(),
        }
    }
}

fn concat_text(a: &Option<Text>, b: &Option<Text>) -> Option<Text> {
    let mut out = a.clone()?;
    out.extend(b.clone()?);
    Some(out)
}

#[derive(Clone, Debug, Default)]
struct Object {
    class: String,
    fields: BTreeMap<String, Value>,
    elems: BTreeMap<i64, Value>,
}

struct Frame<'p> {
    class: &'p ClassDef,
    method: &'p MethodDef,
    recv_class: String,
    locals: BTreeMap<String, Value>,
}

struct Interp<'p> {
    program: &'p Program,
    config: &'p Config,
    val: &'p Valuation,
    opts: &'p InterpOptions,
    objects: Vec<Object>,
    statics: BTreeMap<(String, String), Value>,
    entry_objects: BTreeMap<String, usize>,
    started: Vec<Value>,
    log: Vec<LogEntry>,
    steps: u64,
    depth: usize,
    rng: ChaCha8Rng,
}

/// Executes every entry point in order and returns the sink log.
pub fn interpret(program: &Program, config: &Config, val: &Valuation, opts: &InterpOptions) -> Result<Vec<LogEntry>, InterpError> {
    let mut it = Interp {
        program,
        config,
        val,
        opts,
        objects: Vec::new(),
        statics: BTreeMap::new(),
        entry_objects: BTreeMap::new(),
        started: Vec::new(),
        log: Vec::new(),
        steps: 0,
        depth: 0,
        rng: ChaCha8Rng::seed_from_u64(val.seed),
    };
    for entry in &program.entry_points {
        it.run_entry(entry)?;
    }
    Ok(it.log)
}

/// Supertypes of framework classes, kept apart from the analysis catalog.
fn framework_supers(class: &str) -> Vec<String> {
    let supers: &[&str] = match class {
        "android.app.Activity" => &["android.view.ContextThemeWrapper"],
        "android.view.ContextThemeWrapper" => &["android.content.ContextWrapper"],
        "android.app.Service" | "android.app.Application" => &["android.content.ContextWrapper"],
        "android.app.IntentService" => &["android.app.Service"],
        "android.content.ContextWrapper" => &["android.content.Context"],
        "java.io.FileOutputStream" | "java.io.FilterOutputStream" => &["java.io.OutputStream"],
        "java.io.BufferedOutputStream" | "java.io.DataOutputStream" | "java.io.PrintStream" => {
            &["java.io.FilterOutputStream"]
        }
        "java.io.FileWriter" => &["java.io.OutputStreamWriter"],
        "java.io.OutputStreamWriter" | "java.io.BufferedWriter" | "java.io.PrintWriter" => &["java.io.Writer"],
        "java.util.ArrayList" | "java.util.LinkedList" | "java.util.Vector" => &["java.util.List"],
        "java.util.HashSet" | "java.util.TreeSet" | "java.util.LinkedHashSet" => &["java.util.Set"],
        "java.util.List" | "java.util.Set" => &["java.util.Collection"],
        "java.util.HashMap" | "java.util.TreeMap" | "java.util.LinkedHashMap" | "java.util.Hashtable" => {
            &["java.util.Map"]
        }
        "java.lang.Thread" => &["java.lang.Runnable"],
        "android.webkit.WebView" => &["android.view.View"],
        "android.widget.AutoCompleteTextView" => &["android.widget.EditText"],
        "android.widget.EditText" => &["android.widget.TextView"],
        "java.text.SimpleDateFormat" => &["java.text.DateFormat"],
        _ => &[],
    };
    supers.iter().map(|s| s.to_string()).collect()
}

fn qualified(ty: &str) -> String {
    match ty {
        "Object" | "String" | "StringBuilder" | "StringBuffer" | "Integer" | "Long" | "Double" | "System" | "Thread"
        | "Runnable" => format!("java.lang.{ty}"),
        _ => ty.to_string(),
    }
}

impl<'p> Interp<'p> {
    fn alloc(&mut self, class: &str) -> usize {
        self.objects.push(Object {
            class: class.to_string(),
            ..Object::default()
        });
        self.objects.len() - 1
    }

    fn chain(&self, class: &str, declared: Option<&str>) -> Vec<String> {
        let mut out = self.program.ancestors(class, framework_supers);
        if let Some(d) = declared {
            for c in self.program.ancestors(d, framework_supers) {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out.retain(|c| c != "java.lang.Object");
        out.push("java.lang.Object".into());
        out
    }

    fn is_a(&self, class: &str, target: &str) -> bool {
        self.program.is_subtype(class, target, framework_supers)
    }

    fn callback_labels(&self, recv_class: &str, m: &MethodDef, args: &mut [Value]) {
        for anc in self.program.ancestors(recv_class, framework_supers) {
            let sig = MethodRef::new(anc, m.name.clone(), m.arity());
            for src in self.config.sources_for(&sig) {
                if !matches!(src.kind, SourceKind::ArgEvidence | SourceKind::CallbackArgEvidence) {
                    continue;
                }
                if let (Some(n), Payload::Evidence(e)) = (src.arg, &src.payload) {
                    if let Some(v) = args.get_mut(n - 1) {
                        v.labels.insert(e.clone());
                        if v.kind == Kind::Null {
                            v.kind = Kind::Str(sample_for(e));
                        }
                    }
                }
            }
        }
    }

    fn run_entry(&mut self, entry: &MethodRef) -> Result<(), InterpError> {
        let Resolution::Declared { class, method } = self.program.resolve_call(&entry.class, &entry.name, entry.arity)
        else {
            return Ok(());
        };
        let this = if method.is_static {
            None
        } else {
            let id = match self.entry_objects.get(&entry.class) {
                Some(id) => *id,
                None => {
                    let id = self.alloc(&entry.class);
                    self.entry_objects.insert(entry.class.clone(), id);
                    id
                }
            };
            Some(Value {
                kind: Kind::Obj(id),
                labels: EvSet::new(),
                text: None,
            })
        };
        let mut args = vec![Value::null(); method.arity()];
        self.callback_labels(&entry.class, method, &mut args);
        self.call(class, method, &entry.class, this, args)?;
        Ok(())
    }

    fn call(&mut self, class: &'p ClassDef, m: &'p MethodDef, recv_class: &str, this: Option<Value>, args: Vec<Value>) -> Result<Value, InterpError> {
        if self.depth >= self.opts.depth_limit {
            return Err(InterpError::DepthLimit(self.opts.depth_limit));
        }
        self.depth += 1;
        let mut frame = Frame {
            class,
            method: m,
            recv_class: recv_class.to_string(),
            locals: BTreeMap::new(),
        };
        if let (Some(t), false) = (this, m.is_static) {
            frame.locals.insert("this".into(), t);
        }
        for (p, a) in m.params.iter().zip(args.into_iter().chain(std::iter::repeat(Value::null()))) {
            frame.locals.insert(p.name.clone(), a);
        }
        let r = self.exec(&mut frame);
        self.depth -= 1;
        r
    }

    fn read(&self, frame: &Frame, v: &str) -> Value {
        if let Some(x) = frame.locals.get(v) {
            return x.clone();
        }
        match self.val.ints.get(v) {
            Some(n) => Value::int(*n),
            None => Value::null(),
        }
    }

    fn operand(&self, frame: &Frame, op: &Operand) -> Value {
        match op {
            Operand::Var(v) => self.read(frame, v),
            Operand::Const(c) => Value::of_const(c),
        }
    }

    fn cond(&self, frame: &Frame, c: &Cond) -> bool {
        let l = self.operand(frame, &c.lhs).as_int();
        match &c.cmp {
            None => l != 0,
            Some((op, rhs)) => {
                let r = self.operand(frame, rhs).as_int();
                match op {
                    BinOp::Eq => l == r,
                    BinOp::Ne => l != r,
                    BinOp::Lt => l < r,
                    BinOp::Le => l <= r,
                    BinOp::Gt => l > r,
                    BinOp::Ge => l >= r,
                    _ => arith(*op, l, r).unwrap_or(0) != 0,
                }
            }
        }
    }

    fn exec(&mut self, frame: &mut Frame<'p>) -> Result<Value, InterpError> {
        let m = frame.method;
        let mut pc = 0usize;
        while pc < m.body.len() {
            self.steps += 1;
            if self.steps > self.opts.step_limit {
                return Err(InterpError::StepLimit(self.opts.step_limit));
            }
            let jump = |l: &str| m.label_index(l).expect("labels are validated at parse time");
            match &m.body[pc] {
                Stmt::Return(v) => return Ok(v.as_ref().map_or_else(Value::null, |op| self.operand(frame, op))),
                Stmt::Goto(l) => {
                    pc = jump(l);
                    continue;
                }
                Stmt::If { cond, target } => {
                    if self.cond(frame, cond) {
                        pc = jump(target);
                        continue;
                    }
                }
                Stmt::Invoke { ret, call } => {
                    let r = self.invoke(frame, call)?;
                    if let Some(d) = ret {
                        frame.locals.insert(d.clone(), r);
                    }
                }
                other => self.simple(frame, other),
            }
            pc += 1;
        }
        Ok(Value::null())
    }

    fn simple(&mut self, frame: &mut Frame<'p>, stmt: &Stmt) {
        match stmt {
            Stmt::AssignConst { dst, value } => {
                frame.locals.insert(dst.clone(), Value::of_const(value));
            }
            Stmt::AssignCopy { dst, src } => {
                let v = self.read(frame, src);
                frame.locals.insert(dst.clone(), v);
            }
            Stmt::StaticFieldLoad { dst, class, field } => {
                let v = self.statics.get(&(class.clone(), field.clone())).cloned().unwrap_or_else(Value::null);
                frame.locals.insert(dst.clone(), v);
            }
            Stmt::StaticFieldStore { class, field, src } => {
                let v = self.operand(frame, src);
                self.statics.insert((class.clone(), field.clone()), v);
            }
            Stmt::InstanceFieldLoad { dst, base, field } => {
                let b = self.read(frame, base);
                let v = match b.kind {
                    Kind::Obj(id) => self.objects[id].fields.get(field).cloned().unwrap_or_else(Value::null),
                    _ => Value {
                        labels: b.labels,
                        ..Value::null()
                    },
                };
                frame.locals.insert(dst.clone(), v);
            }
            Stmt::InstanceFieldStore { base, field, src } => {
                let v = self.operand(frame, src);
                match self.read(frame, base).kind {
                    Kind::Obj(id) => {
                        self.objects[id].fields.insert(field.clone(), v);
                    }
                    _ => {
                        if let Some(b) = frame.locals.get_mut(base) {
                            b.labels.extend(v.labels);
                        }
                    }
                }
            }
            Stmt::ArrayLoad { dst, array, index } => {
                let a = self.read(frame, array);
                let i = self.operand(frame, index).as_int();
                let v = match a.kind {
                    Kind::Obj(id) => self.objects[id].elems.get(&i).cloned().unwrap_or_else(Value::null),
                    _ => a,
                };
                frame.locals.insert(dst.clone(), v);
            }
            Stmt::ArrayStore { array, index, src } => {
                let v = self.operand(frame, src);
                let i = self.operand(frame, index).as_int();
                match self.read(frame, array).kind {
                    Kind::Obj(id) => {
                        self.objects[id].elems.insert(i, v);
                    }
                    _ => {
                        if let Some(a) = frame.locals.get_mut(array) {
                            a.labels.extend(v.labels);
                        }
                    }
                }
            }
            Stmt::BinaryOp { dst, op, lhs, rhs } => {
                let (a, b) = (self.operand(frame, lhs), self.operand(frame, rhs));
                let labels: EvSet = a.labels.union(&b.labels).cloned().collect();
                let is_str = |v: &Value| matches!(v.kind, Kind::Str(_));
                let v = if *op == BinOp::Add && (is_str(&a) || is_str(&b)) {
                    Value {
                        kind: Kind::Str(format!("{}{}", a.display(), b.display())),
                        labels,
                        text: concat_text(&a.text, &b.text),
                    }
                } else {
                    Value {
                        kind: Kind::Int(arith(*op, a.as_int(), b.as_int()).unwrap_or(0)),
                        labels,
                        text: None,
                    }
                };
                frame.locals.insert(dst.clone(), v);
            }
            Stmt::New { dst, class } => {
                let id = self.alloc(&qualified(class));
                frame.locals.insert(
                    dst.clone(),
                    Value {
                        kind: Kind::Obj(id),
                        labels: EvSet::new(),
                        text: None,
                    },
                );
            }
            Stmt::NewArray { dst, elem_type, .. } => {
                let id = self.alloc(&format!("{}[]", qualified(elem_type)));
                frame.locals.insert(
                    dst.clone(),
                    Value {
                        kind: Kind::Obj(id),
                        labels: EvSet::new(),
                        text: None,
                    },
                );
            }
            Stmt::Invoke { .. } | Stmt::Return(_) | Stmt::If { .. } | Stmt::Goto(_) => unreachable!(),
        }
    }

    fn class_of(&self, v: &Value) -> Option<String> {
        match &v.kind {
            Kind::Obj(id) => Some(self.objects[*id].class.clone()),
            Kind::Ext(c) => Some(c.clone()),
            _ => None,
        }
    }

    fn invoke(&mut self, frame: &mut Frame<'p>, call: &'p Call) -> Result<Value, InterpError> {
        if matches!(&call.receiver, Receiver::Static(c) if c == "java.lang.reflect.Method") && call.method == "invoke" {
            return self.reflective(frame, call);
        }
        let (recv_class, this, declared, base_var): (String, Option<Value>, Option<String>, Option<String>) =
            match &call.receiver {
                Receiver::Static(c) => (c.clone(), None, None, None),
                Receiver::Super => {
                    let sup = frame.class.superclass.clone().unwrap_or_else(|| "java.lang.Object".into());
                    (sup, Some(self.read(frame, "this")), None, Some("this".into()))
                }
                Receiver::Var(v) => {
                    let value = self.read(frame, v);
                    let declared = if v == "this" {
                        Some(frame.recv_class.clone())
                    } else {
                        frame.method.var_type(v).map(qualified)
                    };
                    let class = self
                        .class_of(&value)
                        .or_else(|| declared.clone())
                        .unwrap_or_else(|| "java.lang.Object".into());
                    (class, Some(value), declared, Some(v.clone()))
                }
            };
        let args: Vec<Value> = call.args.iter().map(|a| self.operand(frame, a)).collect();
        match self.program.resolve_call(&recv_class, &call.method, call.args.len()) {
            Resolution::Declared { class, method } => {
                let chain = self.chain(&recv_class, declared.as_deref());
                self.arg_sources(frame, &chain, call);
                let args: Vec<Value> = call.args.iter().map(|a| self.operand(frame, a)).collect();
                let this = if method.is_static { None } else { this };
                self.call(class, method, &recv_class, this, args)
            }
            Resolution::External { .. } => {
                let this = this.unwrap_or_else(Value::null);
                if let Some(r) = self.redirect(&recv_class, &this, &args, call)? {
                    return Ok(r);
                }
                let chain = self.chain(&recv_class, declared.as_deref());
                Ok(self.external(frame, &chain, this, base_var.as_deref(), args, call))
            }
        }
    }

    fn arg_sources(&self, frame: &mut Frame, chain: &[String], call: &Call) -> bool {
        let mut matched = false;
        for c in chain {
            let sig = MethodRef::new(c.clone(), call.method.clone(), call.args.len());
            for src in self.config.sources_for(&sig) {
                if src.kind != SourceKind::ArgEvidence {
                    continue;
                }
                matched = true;
                let (Some(n), Payload::Evidence(e)) = (src.arg, &src.payload) else { continue };
                if let Some(Operand::Var(v)) = call.args.get(n - 1) {
                    let mut x = self.read(frame, v);
                    x.labels.insert(e.clone());
                    frame.locals.insert(v.clone(), x);
                }
            }
        }
        matched
    }

    fn deep_labels(&self, v: &Value) -> EvSet {
        let mut out = v.labels.clone();
        let mut seen = BTreeSet::new();
        let mut work: Vec<usize> = match v.kind {
            Kind::Obj(id) => vec![id],
            _ => vec![],
        };
        while let Some(id) = work.pop() {
            if !seen.insert(id) {
                continue;
            }
            let o = &self.objects[id];
            for x in o.fields.values().chain(o.elems.values()) {
                out.extend(x.labels.iter().cloned());
                if let Kind::Obj(n) = x.kind {
                    work.push(n);
                }
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn external(&mut self, frame: &mut Frame<'p>, chain: &[String], this: Value, base_var: Option<&str>, args: Vec<Value>, call: &Call) -> Value {
        let arity = call.args.len();
        let sigs: Vec<MethodRef> = chain.iter().map(|c| MethodRef::new(c.clone(), call.method.clone(), arity)).collect();
        let mut matched = false;
        if let Some(spec) = sigs.iter().find_map(|s| self.config.sink_for(s)) {
            matched = true;
            let mut labels = EvSet::new();
            for &n in &spec.data {
                if let Some(a) = args.get(n - 1) {
                    labels.extend(self.deep_labels(a));
                }
            }
            let carrier = match spec.path {
                crate::sourcesink::PathCarrier::Base => Some(&this),
                crate::sourcesink::PathCarrier::Arg(n) => args.get(n - 1),
            };
            let (abstract_path, concrete_path) = match carrier.and_then(|c| c.text.as_ref()) {
                Some(t) => (collapse_slashes(&abstracted(t)), collapse_slashes(&concrete(t))),
                None => (Placeholder::Unresolved.token().to_string(), "?".to_string()),
            };
            self.log.push(LogEntry {
                abstract_path,
                concrete_path,
                labels,
                sink: spec.signature.clone(),
            });
        }
        matched |= self.arg_sources(frame, chain, call);
        let this = match base_var {
            Some(v) => Value {
                labels: self.read(frame, v).labels,
                text: self.read(frame, v).text,
                ..this
            },
            None => this,
        };
        let args: Vec<Value> = call.args.iter().map(|a| self.operand(frame, a)).collect();
        let mut ret = Value::null();
        let mut ctx = models::Ctx {
            frame,
            base_var,
            this,
            args: &args,
        };
        for c in chain {
            if let Some(r) = self.model(&mut ctx, c, &call.method, arity) {
                ret = r;
                matched = true;
                break;
            }
        }
        for sig in &sigs {
            for src in self.config.sources_for(sig) {
                match (src.kind, &src.payload) {
                    (SourceKind::ReturnEvidence, Payload::Evidence(e)) => {
                        matched = true;
                        ret.labels.insert(e.clone());
                        if ret.kind == Kind::Null {
                            ret.kind = Kind::Str(sample_for(e));
                        }
                    }
                    (SourceKind::ReturnPathToken, Payload::Token(t)) => {
                        matched = true;
                        let (kind, text) = self.token_value(*t);
                        ret.kind = kind;
                        ret.text = Some(text);
                    }
                    _ => {}
                }
            }
        }
        if !matched {
            ret = self.unknown_call(ctx.frame, base_var, call, &args, &ctx.this);
        }
        ret
    }

    fn token_value(&mut self, t: Placeholder) -> (Kind, Text) {
        match t {
            Placeholder::Timestamp => (
                Kind::Int(self.val.timestamp),
                token_span(t, self.val.timestamp.to_string()),
            ),
            Placeholder::Uuid => {
                use rand::Rng;
                let b: [u8; 16] = self.rng.gen();
                let h: String = b.iter().map(|x| format!("{x:02x}")).collect();
                let s = format!("{}-{}-{}-{}-{}", &h[0..8], &h[8..12], &h[12..16], &h[16..20], &h[20..32]);
                (Kind::Ext("java.util.UUID".into()), token_span(t, s))
            }
            other => (Kind::Str(self.val.intent_text.clone()), token_span(other, self.val.intent_text.clone())),
        }
    }

    /// A framework call nobody modelled: the result and every input may
    /// carry any input's labels.
    fn unknown_call(&self, frame: &mut Frame, base_var: Option<&str>, call: &Call, args: &[Value], this: &Value) -> Value {
        let mut union = this.labels.clone();
        for a in args {
            union.extend(a.labels.iter().cloned());
        }
        let vars = base_var.into_iter().chain(call.args.iter().filter_map(|a| a.as_var()));
        for v in vars {
            let mut x = self.read(frame, v);
            x.labels.extend(union.iter().cloned());
            frame.locals.insert(v.to_string(), x);
        }
        Value {
            labels: union,
            ..Value::null()
        }
    }

    fn redirect(&mut self, recv: &str, this: &Value, args: &[Value], call: &Call) -> Result<Option<Value>, InterpError> {
        let kind = self.program.class(recv).map(|c| c.kind);
        let arity = call.args.len();
        if call.method == "start" && arity == 0 && (kind == Some(ComponentKind::Thread) || self.is_a(recv, "java.lang.Thread")) {
            let (target_class, target) = match self.program.resolve_call(recv, "run", 0) {
                Resolution::Declared { .. } => (Some(recv.to_string()), this.clone()),
                Resolution::External { .. } => {
                    let t = match this.kind {
                        Kind::Obj(id) => self.objects[id].fields.get("$target").cloned().unwrap_or_else(Value::null),
                        _ => Value::null(),
                    };
                    (self.class_of(&t), t)
                }
            };
            if let Some(c) = target_class {
                self.run_callback(&c, "run", Some(0), target, vec![])?;
            }
            return Ok(Some(Value::null()));
        }
        if call.method == "execute" && (kind == Some(ComponentKind::AsyncTask) || self.is_a(recv, "android.os.AsyncTask")) {
            let result = self
                .run_callback(recv, "doInBackground", None, this.clone(), args.to_vec())?
                .unwrap_or_else(Value::null);
            self.run_callback(recv, "onPostExecute", Some(1), this.clone(), vec![result])?;
            return Ok(Some(this.clone()));
        }
        if arity == 1 && (kind == Some(ComponentKind::Handler) || self.is_a(recv, "android.os.Handler")) {
            if call.method == "post" {
                if let Some(c) = self.class_of(&args[0]) {
                    self.run_callback(&c, "run", Some(0), args[0].clone(), vec![])?;
                }
                return Ok(Some(Value::null()));
            }
            if call.method == "sendMessage" {
                self.run_callback(recv, "handleMessage", Some(1), this.clone(), args.to_vec())?;
                return Ok(Some(Value::null()));
            }
        }
        Ok(None)
    }

    fn run_callback(&mut self, recv: &str, name: &str, arity: Option<usize>, this: Value, mut args: Vec<Value>) -> Result<Option<Value>, InterpError> {
        let found = match arity {
            Some(n) => match self.program.resolve_call(recv, name, n) {
                Resolution::Declared { class, method } => Some((class, method)),
                Resolution::External { .. } => None,
            },
            None => self.program.resolve_by_name(recv, name),
        };
        let Some((class, method)) = found else { return Ok(None) };
        args.resize(method.arity(), Value::null());
        self.callback_labels(recv, method, &mut args);
        self.call(class, method, recv, Some(this), args).map(Some)
    }

    fn reflective(&mut self, frame: &mut Frame<'p>, call: &'p Call) -> Result<Value, InterpError> {
        let args: Vec<Value> = call.args.iter().map(|a| self.operand(frame, a)).collect();
        let (Some(cls), Some(name)) = (
            args.first().and_then(Value::as_str),
            args.get(1).and_then(Value::as_str),
        ) else {
            return Err(InterpError::Reflection("class or method name is not a string".into()));
        };
        if args.len() < 3 {
            return Err(InterpError::Reflection(format!("{cls}.{name}: missing receiver")));
        }
        let rest = args[3..].to_vec();
        match self.program.resolve_call(&cls, &name, rest.len()) {
            Resolution::Declared { class, method } => {
                let this = (!method.is_static).then(|| args[2].clone());
                self.call(class, method, &cls, this, rest)
            }
            Resolution::External { .. } => Err(InterpError::Reflection(format!("{cls}.{name}/{}", rest.len()))),
        }
    }
}

fn arith(op: BinOp, a: i64, b: i64) -> Option<i64> {
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

/// Concrete stand-in returned by an evidence source.
fn sample_for(e: &EvidenceType) -> String {
    match e {
        EvidenceType::Location => "40.4433".into(),
        EvidenceType::TextInput => "meet at noon".into(),
        EvidenceType::Time => "1514764800000".into(),
        EvidenceType::VisitedUrl => "https://example.org/page".into(),
        EvidenceType::Extension(name) => format!("{}-sample", name.to_lowercase()),
    }
}
