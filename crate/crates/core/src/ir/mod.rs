//! MJIR, a small textual three-address IR modelled on Jimple.
//!
//! A [`Program`] declares its package, entry points, and classes. Method
//! bodies are flat statement lists; control flow uses labels, `if` and
//! `goto`. See the crate README for the grammar.

mod parse;
mod render;

use std::collections::BTreeMap;
use std::fmt;

pub use parse::parse_program;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum IrError {
    #[error("{line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("duplicate class `{0}`")]
    DuplicateClass(String),
    #[error("duplicate method `{method}/{arity}` in class `{class}`")]
    DuplicateMethod {
        class: String,
        method: String,
        arity: usize,
    },
    #[error("duplicate field `{field}` in class `{class}`")]
    DuplicateField { class: String, field: String },
    #[error("unresolved label `{label}` in `{method}`")]
    UnresolvedLabel { method: String, label: String },
    #[error("duplicate label `{label}` in `{method}`")]
    DuplicateLabel { method: String, label: String },
    #[error("unresolved entry point `{0}`")]
    UnresolvedEntry(String),
    #[error("ambiguous entry point `{0}`: several overloads, give an arity")]
    AmbiguousEntry(String),
    #[error("unknown variable `{var}` in `{method}`")]
    UnknownVariable { method: String, var: String },
    #[error("superclass cycle through `{0}`")]
    SuperclassCycle(String),
    #[error("invalid package name `{0}`")]
    InvalidPackage(String),
}

/// A method reference: declaring class, name, and argument count.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodRef {
    pub class: String,
    pub name: String,
    pub arity: usize,
}

impl MethodRef {
    pub fn new(class: impl Into<String>, name: impl Into<String>, arity: usize) -> MethodRef {
        MethodRef {
            class: class.into(),
            name: name.into(),
            arity,
        }
    }

    /// Parses `pkg.Class.method/arity`.
    pub fn parse(text: &str) -> Option<MethodRef> {
        let (qualified, arity) = text.rsplit_once('/')?;
        let arity = arity.parse().ok()?;
        let (class, name) = qualified.rsplit_once('.')?;
        if class.is_empty() || name.is_empty() {
            return None;
        }
        Some(MethodRef::new(class, name, arity))
    }
}

impl fmt::Display for MethodRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}/{}", self.class, self.name, self.arity)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub package_name: String,
    pub entry_points: Vec<MethodRef>,
    pub classes: Vec<ClassDef>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum ComponentKind {
    Activity,
    Service,
    Receiver,
    Application,
    Thread,
    AsyncTask,
    Handler,
    #[default]
    Plain,
}

impl ComponentKind {
    pub fn parse(text: &str) -> Option<ComponentKind> {
        Some(match text {
            "activity" => ComponentKind::Activity,
            "service" => ComponentKind::Service,
            "receiver" => ComponentKind::Receiver,
            "application" => ComponentKind::Application,
            "thread" => ComponentKind::Thread,
            "asynctask" => ComponentKind::AsyncTask,
            "handler" => ComponentKind::Handler,
            "plain" => ComponentKind::Plain,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ComponentKind::Activity => "activity",
            ComponentKind::Service => "service",
            ComponentKind::Receiver => "receiver",
            ComponentKind::Application => "application",
            ComponentKind::Thread => "thread",
            ComponentKind::AsyncTask => "asynctask",
            ComponentKind::Handler => "handler",
            ComponentKind::Plain => "plain",
        }
    }

    /// Kinds whose instances are an Android `Context`.
    pub fn is_context(self) -> bool {
        matches!(
            self,
            ComponentKind::Activity | ComponentKind::Service | ComponentKind::Application
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub superclass: Option<String>,
    pub interfaces: Vec<String>,
    pub kind: ComponentKind,
    pub fields: Vec<FieldDecl>,
    pub methods: Vec<MethodDef>,
}

impl ClassDef {
    pub fn method(&self, name: &str, arity: usize) -> Option<&MethodDef> {
        self.methods
            .iter()
            .find(|m| m.name == name && m.params.len() == arity)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub is_static: bool,
    pub ty: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub ty: String,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalDecl {
    pub ty: String,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodDef {
    pub name: String,
    pub is_static: bool,
    pub params: Vec<Param>,
    pub ret_type: Option<String>,
    pub locals: Vec<LocalDecl>,
    pub body: Vec<Stmt>,
    /// Label name to the index of the statement it precedes. An index equal
    /// to `body.len()` labels the end of the method.
    pub labels: BTreeMap<String, usize>,
}

impl MethodDef {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.get(label).copied()
    }

    /// Declared type of a parameter or local; `None` for `this` and unknown names.
    pub fn var_type(&self, var: &str) -> Option<&str> {
        self.params
            .iter()
            .map(|p| (&p.name, &p.ty))
            .chain(self.locals.iter().map(|l| (&l.name, &l.ty)))
            .find(|(n, _)| n.as_str() == var)
            .map(|(_, t)| t.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Const {
    Str(String),
    Int(i64),
    Bool(bool),
    Null,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Var(String),
    Const(Const),
}

impl Operand {
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Operand::Var(v) => Some(v),
            Operand::Const(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub const ALL: [BinOp; 16] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Rem,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<BinOp> {
        BinOp::ALL.into_iter().find(|op| op.symbol() == s)
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Receiver {
    /// `v.m(..)`: dynamic dispatch on a variable (including `this`).
    Var(String),
    /// `super.m(..)`: `this`, dispatch starting at the superclass.
    Super,
    /// `pkg.Class.m(..)`: static call.
    Static(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Call {
    pub receiver: Receiver,
    pub method: String,
    pub args: Vec<Operand>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cond {
    pub lhs: Operand,
    /// `None` tests `lhs != 0`.
    pub cmp: Option<(BinOp, Operand)>,
}

/// Three-address statement forms.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Stmt {
    AssignConst {
        dst: String,
        value: Const,
    },
    AssignCopy {
        dst: String,
        src: String,
    },
    StaticFieldLoad {
        dst: String,
        class: String,
        field: String,
    },
    StaticFieldStore {
        class: String,
        field: String,
        src: Operand,
    },
    InstanceFieldLoad {
        dst: String,
        base: String,
        field: String,
    },
    InstanceFieldStore {
        base: String,
        field: String,
        src: Operand,
    },
    ArrayLoad {
        dst: String,
        array: String,
        index: Operand,
    },
    ArrayStore {
        array: String,
        index: Operand,
        src: Operand,
    },
    BinaryOp {
        dst: String,
        op: BinOp,
        lhs: Operand,
        rhs: Operand,
    },
    New {
        dst: String,
        class: String,
    },
    NewArray {
        dst: String,
        elem_type: String,
        size: Operand,
    },
    /// `v1.m(..)` when `ret` is `None`, `v0 = v1.m(..)` otherwise.
    Invoke {
        ret: Option<String>,
        call: Call,
    },
    Return(Option<Operand>),
    If {
        cond: Cond,
        target: String,
    },
    Goto(String),
}

impl Stmt {
    pub fn is_invoke(&self) -> bool {
        matches!(self, Stmt::Invoke { .. })
    }

    /// Variables read or written by this statement.
    pub fn vars(&self) -> Vec<&str> {
        fn op(o: &Operand) -> Option<&str> {
            o.as_var()
        }
        let mut out: Vec<&str> = Vec::new();
        match self {
            Stmt::AssignConst { dst, .. } => out.push(dst),
            Stmt::AssignCopy { dst, src } => out.extend([dst.as_str(), src.as_str()]),
            Stmt::StaticFieldLoad { dst, .. } => out.push(dst),
            Stmt::StaticFieldStore { src, .. } => out.extend(op(src)),
            Stmt::InstanceFieldLoad { dst, base, .. } => out.extend([dst.as_str(), base.as_str()]),
            Stmt::InstanceFieldStore { base, src, .. } => {
                out.push(base);
                out.extend(op(src));
            }
            Stmt::ArrayLoad { dst, array, index } => {
                out.extend([dst.as_str(), array.as_str()]);
                out.extend(op(index));
            }
            Stmt::ArrayStore { array, index, src } => {
                out.push(array);
                out.extend(op(index));
                out.extend(op(src));
            }
            Stmt::BinaryOp { dst, lhs, rhs, .. } => {
                out.push(dst);
                out.extend(op(lhs));
                out.extend(op(rhs));
            }
            Stmt::New { dst, .. } => out.push(dst),
            Stmt::NewArray { dst, size, .. } => {
                out.push(dst);
                out.extend(op(size));
            }
            Stmt::Invoke { ret, call } => {
                out.extend(ret.as_deref());
                if let Receiver::Var(v) = &call.receiver {
                    out.push(v);
                }
                out.extend(call.args.iter().filter_map(op));
            }
            Stmt::Return(v) => out.extend(v.as_ref().and_then(op)),
            Stmt::If { cond, .. } => {
                out.extend(op(&cond.lhs));
                if let Some((_, rhs)) = &cond.cmp {
                    out.extend(op(rhs));
                }
            }
            Stmt::Goto(_) => {}
        }
        out
    }
}

/// Outcome of class-hierarchy call resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Resolution<'p> {
    Declared {
        class: &'p ClassDef,
        method: &'p MethodDef,
    },
    /// Not declared in the program; `class` is the first undeclared class on
    /// the superclass chain (or `java.lang.Object` when the chain ends).
    External { class: String },
}

impl Program {
    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn method(&self, m: &MethodRef) -> Option<&MethodDef> {
        self.class(&m.class)?.method(&m.name, m.arity)
    }

    /// Walks `class` and then its superclasses looking for `name/arity`.
    pub fn resolve_call(&self, class: &str, name: &str, arity: usize) -> Resolution<'_> {
        let mut current = class.to_string();
        // the hierarchy is validated acyclic at parse time; the bound is belt
        // and braces for hand-built programs
        for _ in 0..=self.classes.len() {
            let Some(def) = self.class(&current) else {
                return Resolution::External { class: current };
            };
            if let Some(method) = def.method(name, arity) {
                return Resolution::Declared { class: def, method };
            }
            match &def.superclass {
                Some(sup) => current = sup.clone(),
                None => break,
            }
        }
        Resolution::External {
            class: "java.lang.Object".to_string(),
        }
    }

    /// Finds a method by name on the class chain, ignoring arity. Used for
    /// redirect targets whose arity varies (`doInBackground`).
    pub fn resolve_by_name(&self, class: &str, name: &str) -> Option<(&ClassDef, &MethodDef)> {
        let mut current = class.to_string();
        for _ in 0..=self.classes.len() {
            let def = self.class(&current)?;
            if let Some(m) = def.methods.iter().find(|m| m.name == name) {
                return Some((def, m));
            }
            current = def.superclass.clone()?;
        }
        None
    }

    /// The class and its supertypes in breadth-first order: superclass before
    /// interfaces at each level, `extra` supplying supertypes of undeclared
    /// classes. Each name appears once.
    pub fn ancestors<F>(&self, class: &str, extra: F) -> Vec<String>
    where
        F: Fn(&str) -> Vec<String>,
    {
        let mut out: Vec<String> = Vec::new();
        let mut queue = std::collections::VecDeque::from([class.to_string()]);
        while let Some(c) = queue.pop_front() {
            if out.contains(&c) {
                continue;
            }
            let supers = match self.class(&c) {
                Some(def) => def
                    .superclass
                    .iter()
                    .chain(def.interfaces.iter())
                    .cloned()
                    .collect(),
                None => extra(&c),
            };
            out.push(c);
            queue.extend(supers);
        }
        out
    }

    /// Whether `class` is `target` or inherits from it.
    pub fn is_subtype<F>(&self, class: &str, target: &str, extra: F) -> bool
    where
        F: Fn(&str) -> Vec<String>,
    {
        self.ancestors(class, extra).iter().any(|c| c == target)
    }

    /// Class name relative to the package, as Android's `getLocalClassName`.
    pub fn local_class_name<'a>(&self, class: &'a str) -> &'a str {
        class
            .strip_prefix(self.package_name.as_str())
            .and_then(|rest| rest.strip_prefix('.'))
            .unwrap_or(class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Program {
        parse_program(
            r#"
            package com.example.app;
            entry com.example.app.Main.onCreate;
            class com.example.app.Base extends android.app.Activity {
                method helper() { return; }
                method shared() { return; }
            }
            class com.example.app.Mid extends com.example.app.Base {
                method shared() { return; }
            }
            class com.example.app.Main extends com.example.app.Mid kind activity {
                method onCreate() { return; }
            }
            "#,
        )
        .unwrap()
    }

    #[test]
    fn resolves_on_receiver_class() {
        let p = fixture();
        match p.resolve_call("com.example.app.Main", "onCreate", 0) {
            Resolution::Declared { class, method } => {
                assert_eq!(class.name, "com.example.app.Main");
                assert_eq!(method.name, "onCreate");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolves_through_superclasses() {
        // hand enumeration: Main -> Mid -> Base -> android.app.Activity
        let p = fixture();
        let expect = [
            ("shared", "com.example.app.Mid"),
            ("helper", "com.example.app.Base"),
        ];
        for (name, owner) in expect {
            match p.resolve_call("com.example.app.Main", name, 0) {
                Resolution::Declared { class, .. } => assert_eq!(class.name, owner),
                other => panic!("{other:?}"),
            }
        }
        assert_eq!(
            p.resolve_call("com.example.app.Main", "openFileOutput", 2),
            Resolution::External {
                class: "android.app.Activity".into()
            }
        );
        // arity participates in lookup
        assert!(matches!(
            p.resolve_call("com.example.app.Main", "helper", 1),
            Resolution::External { .. }
        ));
    }

    #[test]
    fn undeclared_class_is_external() {
        let p = fixture();
        assert_eq!(
            p.resolve_call("android.webkit.WebView", "loadUrl", 1),
            Resolution::External {
                class: "android.webkit.WebView".into()
            }
        );
    }

    #[test]
    fn ancestors_use_extra_hierarchy() {
        let p = fixture();
        let chain = p.ancestors("com.example.app.Main", |c| match c {
            "android.app.Activity" => vec!["android.content.Context".into()],
            _ => vec![],
        });
        assert_eq!(
            chain,
            [
                "com.example.app.Main",
                "com.example.app.Mid",
                "com.example.app.Base",
                "android.app.Activity",
                "android.content.Context"
            ]
        );
    }

    #[test]
    fn method_ref_parse() {
        let m = MethodRef::parse("android.content.Context.getExternalFilesDir/1").unwrap();
        assert_eq!(m.class, "android.content.Context");
        assert_eq!(m.name, "getExternalFilesDir");
        assert_eq!(m.arity, 1);
        assert_eq!(
            MethodRef::parse("java.io.File.<init>/2").unwrap().name,
            "<init>"
        );
        assert!(MethodRef::parse("nodots/1").is_none());
    }

    #[test]
    fn local_class_name_strips_package() {
        let p = fixture();
        assert_eq!(p.local_class_name("com.example.app.Main"), "Main");
        assert_eq!(p.local_class_name("com.example.app.ui.Main"), "ui.Main");
        assert_eq!(p.local_class_name("org.other.Main"), "org.other.Main");
    }
}
