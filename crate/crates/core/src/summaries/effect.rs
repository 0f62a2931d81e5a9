use std::fmt;

use crate::taint::{EvSet, PathExpr, PathSet, Placeholder, Segment, Tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Ret,
    Base,
    /// 1-based argument index.
    Arg(usize),
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Ret => f.write_str("ret"),
            Slot::Base => f.write_str("base"),
            Slot::Arg(n) => write!(f, "arg{n}"),
        }
    }
}

/// A readable and writable location.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Slot(Slot),
    /// `slot.$name`: a field the framework keeps on the object.
    Hidden(Slot, String),
    /// `global.$name`: one cell shared by the whole program.
    Global(String),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Slot(s) => s.fmt(f),
            Target::Hidden(s, name) => write!(f, "{s}.{name}"),
            Target::Global(name) => write!(f, "global.{name}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Read(Target),
    Template(PathExpr),
    Concat(Vec<Expr>),
    Join(Vec<Expr>),
    Evs(Box<Expr>),
    /// `subdir(prefix, e)`: the prefix alone when `e` is the empty string or
    /// has no path, otherwise `prefix ++ e ++ "/"`.
    Subdir(Box<Expr>, Box<Expr>),
    /// `pathjoin(a, b)`: `a` and `b` joined by exactly one separator.
    PathJoin(Box<Expr>, Box<Expr>),
    /// `or_placeholder(e, "<token>")`: `e`, with the token as its path when it has none.
    OrPlaceholder(Box<Expr>, Placeholder),
    ContextClass,
    Bottom,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Effect {
    pub target: Target,
    pub accumulate: bool,
    pub expr: Expr,
}

/// The analysis state a summary runs against.
pub trait EffectHost {
    type Cell: Clone;

    fn cap(&self) -> usize;
    fn read(&self, target: &Target) -> Self::Cell;
    /// Writing `base` or `argN` changes only the tag of the variable; other
    /// targets take the whole cell.
    fn write(&mut self, target: &Target, value: Self::Cell, accumulate: bool);
    fn tag_of(&self, cell: &Self::Cell) -> Tag;
    fn cell_of_tag(&self, tag: Tag) -> Self::Cell;
    fn join(&self, a: &Self::Cell, b: &Self::Cell) -> Self::Cell;
    /// Local name of the component class the call runs under.
    fn context_class(&self) -> String;
}

pub fn apply_effects<H: EffectHost>(host: &mut H, effects: &[Effect]) {
    for e in effects {
        let value = eval(host, &e.expr);
        host.write(&e.target, value, e.accumulate);
    }
}

fn eval<H: EffectHost>(host: &H, expr: &Expr) -> H::Cell {
    let cap = host.cap();
    match expr {
        Expr::Read(t) => host.read(t),
        Expr::Template(p) => host.cell_of_tag(Tag::with_path(p.clone())),
        Expr::Concat(parts) => {
            let mut tags = parts.iter().map(|p| host.tag_of(&eval(host, p)));
            let first = tags.next().unwrap_or_default();
            host.cell_of_tag(tags.fold(first, |acc, t| acc.concat(&t, cap)))
        }
        Expr::Join(parts) => {
            let mut cells = parts.iter().map(|p| eval(host, p));
            let first = cells.next().unwrap_or_else(|| host.cell_of_tag(Tag::bottom()));
            cells.fold(first, |acc, c| host.join(&acc, &c))
        }
        Expr::Evs(e) => host.cell_of_tag(host.tag_of(&eval(host, e)).evidence_only()),
        Expr::Subdir(prefix, child) => {
            let p = host.tag_of(&eval(host, prefix));
            let c = host.tag_of(&eval(host, child));
            let evset: EvSet = p.evset.union(&c.evset).cloned().collect();
            let paths = if c.paths.is_empty() {
                p.paths.clone()
            } else {
                p.paths.product(&c.paths, cap, |pre, sub| {
                    if sub.is_empty() {
                        pre.clone()
                    } else {
                        pre.concat(sub).concat(&PathExpr::literal("/"))
                    }
                })
            };
            host.cell_of_tag(Tag { evset, paths })
        }
        Expr::PathJoin(a, b) => {
            let a = host.tag_of(&eval(host, a));
            let b = host.tag_of(&eval(host, b));
            host.cell_of_tag(Tag {
                evset: a.evset.union(&b.evset).cloned().collect(),
                paths: a.paths.product(&b.paths, cap, PathExpr::join_path),
            })
        }
        Expr::OrPlaceholder(e, ph) => {
            let mut t = host.tag_of(&eval(host, e));
            if t.paths.is_empty() {
                t.paths = PathSet::single(PathExpr::placeholder(*ph));
            }
            host.cell_of_tag(t)
        }
        Expr::ContextClass => host.cell_of_tag(Tag::with_path(PathExpr::literal(&host.context_class()))),
        Expr::Bottom => host.cell_of_tag(Tag::bottom()),
    }
}

/// Fallback for external methods without a summary: every input may be
/// modified and the result may derive from any input, so the union of the
/// input evidence sets flows to every input and to the return value.
pub fn native_overapprox<H: EffectHost>(host: &mut H, arity: usize, has_ret: bool) {
    let slots: Vec<Slot> = std::iter::once(Slot::Base)
        .chain((1..=arity).map(Slot::Arg))
        .collect();
    let mut union = EvSet::new();
    for s in &slots {
        let cell = host.read(&Target::Slot(*s));
        union.extend(host.tag_of(&cell).evset);
    }
    let u = Tag {
        evset: union,
        paths: PathSet::new(),
    };
    for s in &slots {
        let cell = host.cell_of_tag(u.clone());
        host.write(&Target::Slot(*s), cell, true);
    }
    if has_ret {
        let cell = host.cell_of_tag(u);
        host.write(&Target::Slot(Slot::Ret), cell, false);
    }
}

// ---- parsing ----

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    arity: usize,
}

pub(super) fn parse_effects(body: &str, arity: usize) -> Result<Vec<Effect>, String> {
    let mut out = Vec::new();
    for part in split_effects(body)? {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let mut c = Cursor {
            chars: part.chars().collect(),
            pos: 0,
            arity,
        };
        let target = c.target()?;
        c.skip_ws();
        let accumulate = if c.eat("+=") {
            true
        } else if c.eat("=") {
            false
        } else {
            return Err(format!("expected `=` or `+=` after `{target}`"));
        };
        let expr = c.expr()?;
        c.skip_ws();
        if c.pos != c.chars.len() {
            return Err(format!("trailing text in effect `{part}`"));
        }
        out.push(Effect {
            target,
            accumulate,
            expr,
        });
    }
    if out.is_empty() {
        return Err("summary has no effects".into());
    }
    Ok(out)
}

fn split_effects(body: &str) -> Result<Vec<String>, String> {
    let mut parts = vec![String::new()];
    let mut in_str = false;
    for c in body.chars() {
        match c {
            '"' => {
                in_str = !in_str;
                parts.last_mut().unwrap().push(c);
            }
            ';' if !in_str => parts.push(String::new()),
            c => parts.last_mut().unwrap().push(c),
        }
    }
    if in_str {
        return Err("unterminated string".into());
    }
    Ok(parts)
}

impl Cursor {
    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        let n = s.chars().count();
        if self.chars.len() >= self.pos + n
            && self.chars[self.pos..self.pos + n].iter().copied().eq(s.chars())
        {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn word(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self
            .chars
            .get(self.pos)
            .is_some_and(|c| c.is_alphanumeric() || *c == '_' || *c == '$' || *c == '.')
        {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn slot(&self, name: &str) -> Result<Slot, String> {
        match name {
            "ret" => Ok(Slot::Ret),
            "base" => Ok(Slot::Base),
            _ => {
                let n: usize = name
                    .strip_prefix("arg")
                    .and_then(|d| d.parse().ok())
                    .ok_or_else(|| format!("unknown slot `{name}`"))?;
                if n == 0 || n > self.arity {
                    return Err(format!("slot `{name}` out of range for arity {}", self.arity));
                }
                Ok(Slot::Arg(n))
            }
        }
    }

    fn locator(&self, word: &str) -> Result<Target, String> {
        match word.split_once('.') {
            None => Ok(Target::Slot(self.slot(word)?)),
            Some((head, field)) => {
                if !field.starts_with('$') || field.len() < 2 || field.contains('.') {
                    return Err(format!("hidden field in `{word}` must be a single `$name`"));
                }
                if head == "global" {
                    Ok(Target::Global(field.to_string()))
                } else {
                    Ok(Target::Hidden(self.slot(head)?, field.to_string()))
                }
            }
        }
    }

    fn target(&mut self) -> Result<Target, String> {
        let w = self.word();
        if w.is_empty() {
            return Err("missing effect target".into());
        }
        self.locator(&w)
    }

    fn string(&mut self) -> Result<String, String> {
        self.skip_ws();
        if self.chars.get(self.pos) != Some(&'"') {
            return Err("expected string".into());
        }
        self.pos += 1;
        let start = self.pos;
        while self.chars.get(self.pos).is_some_and(|c| *c != '"') {
            self.pos += 1;
        }
        if self.pos >= self.chars.len() {
            return Err("unterminated string".into());
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        self.pos += 1;
        Ok(s)
    }

    fn args(&mut self) -> Result<Vec<Expr>, String> {
        if !self.eat("(") {
            return Err("expected `(`".into());
        }
        let mut args = Vec::new();
        if self.eat(")") {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(")") {
                return Ok(args);
            }
            if !self.eat(",") {
                return Err("expected `,` or `)`".into());
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, String> {
        self.skip_ws();
        if self.chars.get(self.pos) == Some(&'"') {
            let s = self.string()?;
            return Ok(Expr::Template(template(&s)?));
        }
        let w = self.word();
        if w.is_empty() {
            return Err("expected expression".into());
        }
        let arity_err = |name: &str, n: usize| format!("`{name}` takes {n} argument(s)");
        match w.as_str() {
            "bottom" => Ok(Expr::Bottom),
            "concat" | "join" | "evs" | "subdir" | "pathjoin" | "or_placeholder"
            | "context_class" => {
                let mut args = self.args()?;
                match w.as_str() {
                    "concat" if !args.is_empty() => Ok(Expr::Concat(args)),
                    "join" if !args.is_empty() => Ok(Expr::Join(args)),
                    "concat" | "join" => Err(format!("`{w}` needs arguments")),
                    "evs" if args.len() == 1 => Ok(Expr::Evs(Box::new(args.remove(0)))),
                    "subdir" | "pathjoin" if args.len() == 2 => {
                        let b = Box::new(args.pop().unwrap());
                        let a = Box::new(args.pop().unwrap());
                        Ok(if w == "subdir" {
                            Expr::Subdir(a, b)
                        } else {
                            Expr::PathJoin(a, b)
                        })
                    }
                    "or_placeholder" if args.len() == 2 => {
                        let token = args.pop().unwrap();
                        let ph = match &token {
                            Expr::Template(p) => match p.segments() {
                                [Segment::Placeholder(ph)] => *ph,
                                _ => return Err("`or_placeholder` needs a single token".into()),
                            },
                            _ => return Err("`or_placeholder` needs a token string".into()),
                        };
                        Ok(Expr::OrPlaceholder(Box::new(args.pop().unwrap()), ph))
                    }
                    "context_class" if args.is_empty() => Ok(Expr::ContextClass),
                    "evs" => Err(arity_err(&w, 1)),
                    "context_class" => Err(arity_err(&w, 0)),
                    _ => Err(arity_err(&w, 2)),
                }
            }
            _ => {
                self.skip_ws();
                if self.chars.get(self.pos) == Some(&'(') {
                    return Err(format!("unknown primitive `{w}`"));
                }
                Ok(Expr::Read(self.locator(&w)?))
            }
        }
    }
}

/// Validates a path template: only canonical tokens may use angle brackets.
fn template(s: &str) -> Result<PathExpr, String> {
    let p = PathExpr::parse(s);
    for seg in p.segments() {
        if let Segment::Literal(t) = seg {
            if t.contains('<') || t.contains('>') {
                return Err(format!("template `{s}` has an unknown placeholder"));
            }
        }
    }
    Ok(p)
}
