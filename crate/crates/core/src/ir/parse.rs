use std::collections::{BTreeMap, BTreeSet};

use super::*;

/// Entry declaration as written: class, method, optional arity.
type EntryDecl = (String, String, Option<usize>);

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 24] = [
    "==", "!=", "<=", ">=", "<<", ">>", ";", "{", "}", "(", ")", ",", ":", "=", "[", "]", "+",
    "-", "*", "/", "%", "&", "|", "^",
];
const SINGLE_ANGLE: [&str; 2] = ["<", ">"];
const SPECIAL_NAMES: [&str; 2] = ["<init>", "<clinit>"];

fn syntax(line: usize, col: usize, message: impl Into<String>) -> IrError {
    IrError::Syntax {
        line,
        col,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>, IrError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    let starts_with = |i: usize, s: &str| s.chars().enumerate().all(|(k, c)| chars.get(i + k) == Some(&c));
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if starts_with(i, "//") {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_alphabetic() || c == '_' || c == '$' {
            let mut name = String::new();
            loop {
                match chars.get(i) {
                    Some(&c) if c.is_alphanumeric() || c == '_' || c == '$' => {
                        name.push(c);
                        advance(&mut i, &mut line, &mut col, 1);
                    }
                    Some('.') => {
                        let special = SPECIAL_NAMES.iter().find(|s| starts_with(i + 1, s));
                        if let Some(s) = special {
                            name.push('.');
                            name.push_str(s);
                            advance(&mut i, &mut line, &mut col, 1 + s.chars().count());
                            break;
                        }
                        match chars.get(i + 1) {
                            Some(&n) if n.is_alphabetic() || n == '_' || n == '$' => {
                                name.push('.');
                                advance(&mut i, &mut line, &mut col, 1);
                            }
                            _ => return Err(syntax(line, col, "dangling `.` in identifier")),
                        }
                    }
                    _ => break,
                }
            }
            out.push(Token {
                tok: Tok::Ident(name),
                line: tl,
                col: tc,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let mut digits = String::new();
            while let Some(&d) = chars.get(i).filter(|d| d.is_ascii_digit()) {
                digits.push(d);
                advance(&mut i, &mut line, &mut col, 1);
            }
            let value = digits
                .parse::<i64>()
                .map_err(|_| syntax(tl, tc, format!("integer literal `{digits}` out of range")))?;
            out.push(Token {
                tok: Tok::Int(value),
                line: tl,
                col: tc,
            });
            continue;
        }
        if c == '"' {
            advance(&mut i, &mut line, &mut col, 1);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(syntax(tl, tc, "unterminated string literal")),
                    Some('"') => {
                        advance(&mut i, &mut line, &mut col, 1);
                        break;
                    }
                    Some('\\') => {
                        let esc = match chars.get(i + 1) {
                            Some('"') => '"',
                            Some('\\') => '\\',
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('r') => '\r',
                            _ => return Err(syntax(line, col, "invalid escape in string literal")),
                        };
                        s.push(esc);
                        advance(&mut i, &mut line, &mut col, 2);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut line, &mut col, 1);
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                line: tl,
                col: tc,
            });
            continue;
        }
        let sym = SYMBOLS
            .iter()
            .chain(SINGLE_ANGLE.iter())
            .find(|s| starts_with(i, s));
        match sym {
            Some(s) => {
                advance(&mut i, &mut line, &mut col, s.len());
                out.push(Token {
                    tok: Tok::Sym(s),
                    line: tl,
                    col: tc,
                });
            }
            None => return Err(syntax(tl, tc, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

const KEYWORDS: [&str; 19] = [
    "package", "entry", "class", "extends", "implements", "kind", "field", "static", "instance",
    "method", "local", "new", "newarray", "return", "if", "goto", "null", "true", "false",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

/// Variables visible in the method being parsed.
struct Scope {
    vars: BTreeSet<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let idx = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[idx].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn err(&self, message: impl Into<String>) -> IrError {
        let (l, c) = self.here();
        syntax(l, c, message)
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.next();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), IrError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`, found {}", describe(self.peek()))))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), IrError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{kw}`, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, IrError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.next();
                Ok(s)
            }
            other => Err(self.err(format!("expected {what}, found {}", describe(&other)))),
        }
    }

    /// A simple (undotted) name.
    fn simple_ident(&mut self, what: &str) -> Result<String, IrError> {
        let at = self.here();
        let name = self.ident(what)?;
        if name.contains('.') {
            return Err(syntax(at.0, at.1, format!("expected {what}, found `{name}`")));
        }
        Ok(name)
    }

    fn type_name(&mut self) -> Result<String, IrError> {
        let mut ty = self.ident("type name")?;
        while self.is_sym("[") && matches!(self.peek_at(1), Tok::Sym("]")) {
            self.next();
            self.next();
            ty.push_str("[]");
        }
        Ok(ty)
    }

    fn program(&mut self) -> Result<(Program, Vec<EntryDecl>), IrError> {
        self.expect_kw("package")?;
        let at = self.here();
        let package_name = self.ident("package name")?;
        if package_name.is_empty() || package_name.contains('/') {
            return Err(syntax(at.0, at.1, "invalid package name"));
        }
        self.expect_sym(";")?;
        let mut entries = Vec::new();
        let mut classes = Vec::new();
        loop {
            if self.eat_kw("entry") {
                let at = self.here();
                let qualified = self.ident("entry method")?;
                let Some((class, method)) = qualified.rsplit_once('.') else {
                    return Err(syntax(at.0, at.1, "entry must be `Class.method`"));
                };
                let arity = if self.eat_sym("/") {
                    match self.next() {
                        Tok::Int(n) => Some(n as usize),
                        other => return Err(self.err(format!("expected arity, found {}", describe(&other)))),
                    }
                } else {
                    None
                };
                self.expect_sym(";")?;
                entries.push((class.to_string(), method.to_string(), arity));
            } else if self.is_kw("class") {
                classes.push(self.class()?);
            } else if matches!(self.peek(), Tok::Eof) {
                break;
            } else {
                return Err(self.err(format!(
                    "expected `entry` or `class`, found {}",
                    describe(self.peek())
                )));
            }
        }
        Ok((
            Program {
                package_name,
                entry_points: Vec::new(),
                classes,
            },
            entries,
        ))
    }

    fn class(&mut self) -> Result<ClassDef, IrError> {
        self.expect_kw("class")?;
        let name = self.ident("class name")?;
        let superclass = if self.eat_kw("extends") {
            Some(self.ident("superclass name")?)
        } else {
            None
        };
        let mut interfaces = Vec::new();
        if self.eat_kw("implements") {
            interfaces.push(self.ident("interface name")?);
            while self.eat_sym(",") {
                interfaces.push(self.ident("interface name")?);
            }
        }
        let kind = if self.eat_kw("kind") {
            let at = self.here();
            let k = self.ident("component kind")?;
            ComponentKind::parse(&k)
                .ok_or_else(|| syntax(at.0, at.1, format!("unknown component kind `{k}`")))?
        } else {
            ComponentKind::Plain
        };
        self.expect_sym("{")?;
        let mut fields = Vec::new();
        let mut methods = Vec::new();
        loop {
            if self.eat_sym("}") {
                break;
            }
            if self.eat_kw("field") {
                let is_static = if self.eat_kw("static") {
                    true
                } else if self.eat_kw("instance") {
                    false
                } else {
                    return Err(self.err("expected `static` or `instance`"));
                };
                let first = self.type_name()?;
                let (ty, name) = if self.is_sym(";") {
                    (None, first)
                } else {
                    (Some(first), self.simple_ident("field name")?)
                };
                if name.contains('.') || name.contains('[') {
                    return Err(self.err(format!("invalid field name `{name}`")));
                }
                self.expect_sym(";")?;
                fields.push(FieldDecl {
                    name,
                    is_static,
                    ty,
                });
            } else if self.is_kw("method") {
                methods.push(self.method()?);
            } else {
                return Err(self.err(format!(
                    "expected `field`, `method` or `}}`, found {}",
                    describe(self.peek())
                )));
            }
        }
        Ok(ClassDef {
            name,
            superclass,
            interfaces,
            kind,
            fields,
            methods,
        })
    }

    fn method(&mut self) -> Result<MethodDef, IrError> {
        self.expect_kw("method")?;
        let is_static = self.eat_kw("static");
        let name = match self.peek().clone() {
            Tok::Sym("<") => {
                // constructors: `method <init>(..)`
                let at = self.here();
                self.next();
                let inner = self.simple_ident("method name")?;
                self.expect_sym(">")?;
                let full = format!("<{inner}>");
                if !SPECIAL_NAMES.contains(&full.as_str()) {
                    return Err(syntax(at.0, at.1, format!("invalid method name `{full}`")));
                }
                full
            }
            _ => self.simple_ident("method name")?,
        };
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                let first = self.type_name()?;
                let param = if self.is_sym(",") || self.is_sym(")") {
                    Param {
                        ty: "java.lang.Object".into(),
                        name: first,
                    }
                } else {
                    Param {
                        ty: first,
                        name: self.simple_ident("parameter name")?,
                    }
                };
                params.push(param);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        let ret_type = if self.eat_sym(":") {
            Some(self.type_name()?)
        } else {
            None
        };
        self.expect_sym("{")?;
        let mut scope = Scope {
            vars: params.iter().map(|p| p.name.clone()).collect(),
        };
        if !is_static {
            scope.vars.insert("this".into());
        }
        let mut locals = Vec::new();
        let mut body = Vec::new();
        let mut labels = BTreeMap::new();
        loop {
            if self.eat_sym("}") {
                break;
            }
            if self.eat_kw("local") {
                let ty = self.type_name()?;
                loop {
                    let at = self.here();
                    let v = self.simple_ident("local name")?;
                    if !scope.vars.insert(v.clone()) {
                        return Err(syntax(at.0, at.1, format!("duplicate variable `{v}`")));
                    }
                    locals.push(LocalDecl {
                        ty: ty.clone(),
                        name: v,
                    });
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(";")?;
                continue;
            }
            if let (Tok::Ident(l), Tok::Sym(":")) = (self.peek().clone(), self.peek_at(1)) {
                if !l.contains('.') && !KEYWORDS.contains(&l.as_str()) {
                    self.next();
                    self.next();
                    if labels.insert(l.clone(), body.len()).is_some() {
                        return Err(IrError::DuplicateLabel {
                            method: name.clone(),
                            label: l,
                        });
                    }
                    continue;
                }
            }
            body.push(self.stmt(&scope)?);
        }
        Ok(MethodDef {
            name,
            is_static,
            params,
            ret_type,
            locals,
            body,
            labels,
        })
    }

    fn operand(&mut self) -> Result<Operand, IrError> {
        match self.peek().clone() {
            Tok::Sym("-") => {
                self.next();
                match self.next() {
                    Tok::Int(n) => Ok(Operand::Const(Const::Int(-n))),
                    other => Err(self.err(format!("expected integer, found {}", describe(&other)))),
                }
            }
            Tok::Int(n) => {
                self.next();
                Ok(Operand::Const(Const::Int(n)))
            }
            Tok::Str(s) => {
                self.next();
                Ok(Operand::Const(Const::Str(s)))
            }
            Tok::Ident(s) if s == "null" => {
                self.next();
                Ok(Operand::Const(Const::Null))
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.next();
                Ok(Operand::Const(Const::Bool(s == "true")))
            }
            _ => {
                let at = self.here();
                let v = self.ident("operand")?;
                if v.contains('.') {
                    return Err(syntax(at.0, at.1, format!("`{v}` is not a variable; load it first")));
                }
                Ok(Operand::Var(v))
            }
        }
    }

    fn var(&mut self, scope: &Scope) -> Result<String, IrError> {
        let at = self.here();
        let v = self.simple_ident("variable")?;
        if !scope.vars.contains(&v) {
            return Err(syntax(at.0, at.1, format!("unknown variable `{v}`")));
        }
        Ok(v)
    }

    fn args(&mut self) -> Result<Vec<Operand>, IrError> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.is_sym(")") {
            args.push(self.operand()?);
            while self.eat_sym(",") {
                args.push(self.operand()?);
            }
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    /// Splits `recv.method` into a call receiver and method name.
    fn call_target(
        &self,
        qualified: &str,
        scope: &Scope,
        at: (usize, usize),
    ) -> Result<(Receiver, String), IrError> {
        let Some((prefix, method)) = qualified.rsplit_once('.') else {
            return Err(syntax(at.0, at.1, format!("call `{qualified}` needs a receiver")));
        };
        let receiver = if prefix == "super" {
            if !scope.vars.contains("this") {
                return Err(syntax(at.0, at.1, "`super` in a static method"));
            }
            Receiver::Super
        } else if scope.vars.contains(prefix) {
            Receiver::Var(prefix.to_string())
        } else if prefix.contains('.') {
            Receiver::Static(prefix.to_string())
        } else {
            return Err(syntax(at.0, at.1, format!("unknown variable `{prefix}`")));
        };
        Ok((receiver, method.to_string()))
    }

    fn stmt(&mut self, scope: &Scope) -> Result<Stmt, IrError> {
        let stmt = if self.eat_kw("return") {
            if self.is_sym(";") {
                Stmt::Return(None)
            } else {
                Stmt::Return(Some(self.operand()?))
            }
        } else if self.eat_kw("goto") {
            Stmt::Goto(self.simple_ident("label")?)
        } else if self.eat_kw("if") {
            let lhs = self.operand()?;
            let cmp = match self.peek().clone() {
                Tok::Sym(s) if BinOp::from_symbol(s).is_some_and(BinOp::is_comparison) => {
                    self.next();
                    Some((BinOp::from_symbol(s).unwrap(), self.operand()?))
                }
                _ => None,
            };
            self.expect_kw("goto")?;
            Stmt::If {
                cond: Cond { lhs, cmp },
                target: self.simple_ident("label")?,
            }
        } else {
            let at = self.here();
            let head = self.ident("statement")?;
            if self.is_sym("(") {
                let (receiver, method) = self.call_target(&head, scope, at)?;
                let args = self.args()?;
                Stmt::Invoke {
                    ret: None,
                    call: Call {
                        receiver,
                        method,
                        args,
                    },
                }
            } else if self.eat_sym("[") {
                if !scope.vars.contains(&head) {
                    return Err(syntax(at.0, at.1, format!("unknown variable `{head}`")));
                }
                let index = self.operand()?;
                self.expect_sym("]")?;
                self.expect_sym("=")?;
                let src = self.operand()?;
                Stmt::ArrayStore {
                    array: head,
                    index,
                    src,
                }
            } else {
                self.expect_sym("=")?;
                if let Some((prefix, field)) = head.rsplit_once('.') {
                    let src = self.operand()?;
                    if scope.vars.contains(prefix) {
                        Stmt::InstanceFieldStore {
                            base: prefix.to_string(),
                            field: field.to_string(),
                            src,
                        }
                    } else if prefix.contains('.') {
                        Stmt::StaticFieldStore {
                            class: prefix.to_string(),
                            field: field.to_string(),
                            src,
                        }
                    } else {
                        return Err(syntax(at.0, at.1, format!("unknown variable `{prefix}`")));
                    }
                } else {
                    if !scope.vars.contains(&head) {
                        return Err(syntax(at.0, at.1, format!("unknown variable `{head}`")));
                    }
                    self.rhs(head, scope)?
                }
            }
        };
        self.expect_sym(";")?;
        Ok(stmt)
    }

    fn rhs(&mut self, dst: String, scope: &Scope) -> Result<Stmt, IrError> {
        if self.eat_kw("new") {
            return Ok(Stmt::New {
                dst,
                class: self.ident("class name")?,
            });
        }
        if self.eat_kw("newarray") {
            let elem_type = self.ident("element type")?;
            self.expect_sym("[")?;
            let size = self.operand()?;
            self.expect_sym("]")?;
            return Ok(Stmt::NewArray {
                dst,
                elem_type,
                size,
            });
        }
        if self.is_sym("(") {
            // cast: `(T) v` keeps the tag
            self.next();
            self.type_name()?;
            self.expect_sym(")")?;
            let src = self.var(scope)?;
            return Ok(Stmt::AssignCopy { dst, src });
        }
        if let Tok::Ident(head) = self.peek().clone() {
            if !KEYWORDS.contains(&head.as_str()) {
                let at = self.here();
                self.next();
                if self.is_sym("(") {
                    let (receiver, method) = self.call_target(&head, scope, at)?;
                    let args = self.args()?;
                    return Ok(Stmt::Invoke {
                        ret: Some(dst),
                        call: Call {
                            receiver,
                            method,
                            args,
                        },
                    });
                }
                if let Some((prefix, field)) = head.rsplit_once('.') {
                    return if scope.vars.contains(prefix) {
                        Ok(Stmt::InstanceFieldLoad {
                            dst,
                            base: prefix.to_string(),
                            field: field.to_string(),
                        })
                    } else if prefix.contains('.') {
                        Ok(Stmt::StaticFieldLoad {
                            dst,
                            class: prefix.to_string(),
                            field: field.to_string(),
                        })
                    } else {
                        Err(syntax(at.0, at.1, format!("unknown variable `{prefix}`")))
                    };
                }
                if !scope.vars.contains(&head) {
                    return Err(syntax(at.0, at.1, format!("unknown variable `{head}`")));
                }
                if self.eat_sym("[") {
                    let index = self.operand()?;
                    self.expect_sym("]")?;
                    return Ok(Stmt::ArrayLoad {
                        dst,
                        array: head,
                        index,
                    });
                }
                if self.eat_kw("instanceof") {
                    self.type_name()?;
                    return Ok(Stmt::AssignCopy { dst, src: head });
                }
                if let Some(op) = self.binop() {
                    let rhs = self.operand()?;
                    return Ok(Stmt::BinaryOp {
                        dst,
                        op,
                        lhs: Operand::Var(head),
                        rhs,
                    });
                }
                return Ok(Stmt::AssignCopy { dst, src: head });
            }
        }
        let value = self.operand()?;
        if let Some(op) = self.binop() {
            let rhs = self.operand()?;
            return Ok(Stmt::BinaryOp {
                dst,
                op,
                lhs: value,
                rhs,
            });
        }
        match value {
            Operand::Const(value) => Ok(Stmt::AssignConst { dst, value }),
            Operand::Var(_) => unreachable!("identifiers handled above"),
        }
    }

    fn binop(&mut self) -> Option<BinOp> {
        let op = match self.peek() {
            Tok::Sym(s) => BinOp::from_symbol(s)?,
            _ => return None,
        };
        self.next();
        Some(op)
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Str(_) => "string literal".into(),
        Tok::Int(n) => format!("`{n}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses and validates MJIR source text.
pub fn parse_program(text: &str) -> Result<Program, IrError> {
    let mut parser = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let (mut program, entries) = parser.program()?;
    validate(&program)?;
    for (class, method, arity) in entries {
        let display = match arity {
            Some(n) => format!("{class}.{method}/{n}"),
            None => format!("{class}.{method}"),
        };
        let Some(def) = program.class(&class) else {
            return Err(IrError::UnresolvedEntry(display));
        };
        let arity = match arity {
            Some(n) => {
                if !matches!(program.resolve_call(&def.name, &method, n), Resolution::Declared { .. }) {
                    return Err(IrError::UnresolvedEntry(display));
                }
                n
            }
            None => {
                // nearest class on the superclass chain declaring the name
                let mut found = None;
                let mut current = Some(def);
                while let Some(c) = current {
                    let arities: BTreeSet<usize> = c
                        .methods
                        .iter()
                        .filter(|m| m.name == method)
                        .map(MethodDef::arity)
                        .collect();
                    if arities.len() > 1 {
                        return Err(IrError::AmbiguousEntry(display));
                    }
                    if let Some(&a) = arities.iter().next() {
                        found = Some(a);
                        break;
                    }
                    current = c.superclass.as_deref().and_then(|s| program.class(s));
                }
                found.ok_or(IrError::UnresolvedEntry(display))?
            }
        };
        program.entry_points.push(MethodRef::new(class, method, arity));
    }
    Ok(program)
}

fn validate(program: &Program) -> Result<(), IrError> {
    if program.package_name.is_empty() || program.package_name.contains('/') {
        return Err(IrError::InvalidPackage(program.package_name.clone()));
    }
    let mut class_names = BTreeSet::new();
    for class in &program.classes {
        if !class_names.insert(class.name.as_str()) {
            return Err(IrError::DuplicateClass(class.name.clone()));
        }
        let mut fields = BTreeSet::new();
        for f in &class.fields {
            if !fields.insert(f.name.as_str()) {
                return Err(IrError::DuplicateField {
                    class: class.name.clone(),
                    field: f.name.clone(),
                });
            }
        }
        let mut sigs = BTreeSet::new();
        for m in &class.methods {
            if !sigs.insert((m.name.as_str(), m.arity())) {
                return Err(IrError::DuplicateMethod {
                    class: class.name.clone(),
                    method: m.name.clone(),
                    arity: m.arity(),
                });
            }
            validate_method(&class.name, m)?;
        }
    }
    for class in &program.classes {
        let mut seen = BTreeSet::new();
        let mut current = Some(class);
        while let Some(c) = current {
            if !seen.insert(c.name.as_str()) {
                return Err(IrError::SuperclassCycle(class.name.clone()));
            }
            current = c.superclass.as_deref().and_then(|s| program.class(s));
        }
    }
    Ok(())
}

fn validate_method(class: &str, m: &MethodDef) -> Result<(), IrError> {
    let qualified = format!("{class}.{}", m.name);
    for stmt in &m.body {
        let target = match stmt {
            Stmt::If { target, .. } | Stmt::Goto(target) => target,
            _ => continue,
        };
        if !m.labels.contains_key(target) {
            return Err(IrError::UnresolvedLabel {
                method: qualified,
                label: target.clone(),
            });
        }
    }
    let mut known: BTreeSet<&str> = m.params.iter().map(|p| p.name.as_str()).collect();
    known.extend(m.locals.iter().map(|l| l.name.as_str()));
    if !m.is_static {
        known.insert("this");
    }
    for stmt in &m.body {
        for v in stmt.vars() {
            if !known.contains(v) {
                return Err(IrError::UnknownVariable {
                    method: qualified,
                    var: v.to_string(),
                });
            }
        }
    }
    Ok(())
}
