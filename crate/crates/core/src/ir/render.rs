use std::fmt::{self, Write};

use super::*;

pub(crate) fn escape_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const::Str(s) => f.write_str(&escape_str(s)),
            Const::Int(n) => write!(f, "{n}"),
            Const::Bool(b) => write!(f, "{b}"),
            Const::Null => f.write_str("null"),
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => f.write_str(v),
            Operand::Const(c) => c.fmt(f),
        }
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.receiver {
            Receiver::Var(v) => write!(f, "{v}.")?,
            Receiver::Super => f.write_str("super.")?,
            Receiver::Static(c) => write!(f, "{c}.")?,
        }
        write!(f, "{}(", self.method)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::AssignConst { dst, value } => write!(f, "{dst} = {value};"),
            Stmt::AssignCopy { dst, src } => write!(f, "{dst} = {src};"),
            Stmt::StaticFieldLoad { dst, class, field } => write!(f, "{dst} = {class}.{field};"),
            Stmt::StaticFieldStore { class, field, src } => write!(f, "{class}.{field} = {src};"),
            Stmt::InstanceFieldLoad { dst, base, field } => write!(f, "{dst} = {base}.{field};"),
            Stmt::InstanceFieldStore { base, field, src } => write!(f, "{base}.{field} = {src};"),
            Stmt::ArrayLoad { dst, array, index } => write!(f, "{dst} = {array}[{index}];"),
            Stmt::ArrayStore { array, index, src } => write!(f, "{array}[{index}] = {src};"),
            Stmt::BinaryOp { dst, op, lhs, rhs } => {
                write!(f, "{dst} = {lhs} {} {rhs};", op.symbol())
            }
            Stmt::New { dst, class } => write!(f, "{dst} = new {class};"),
            Stmt::NewArray {
                dst,
                elem_type,
                size,
            } => write!(f, "{dst} = newarray {elem_type}[{size}];"),
            Stmt::Invoke { ret: Some(v), call } => write!(f, "{v} = {call};"),
            Stmt::Invoke { ret: None, call } => write!(f, "{call};"),
            Stmt::Return(None) => f.write_str("return;"),
            Stmt::Return(Some(v)) => write!(f, "return {v};"),
            Stmt::If { cond, target } => {
                write!(f, "if {}", cond.lhs)?;
                if let Some((op, rhs)) = &cond.cmp {
                    write!(f, " {} {rhs}", op.symbol())?;
                }
                write!(f, " goto {target};")
            }
            Stmt::Goto(l) => write!(f, "goto {l};"),
        }
    }
}

fn render_method(out: &mut String, m: &MethodDef) -> fmt::Result {
    write!(out, "    method ")?;
    if m.is_static {
        out.push_str("static ");
    }
    write!(out, "{}(", m.name)?;
    for (i, p) in m.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{} {}", p.ty, p.name)?;
    }
    out.push(')');
    if let Some(r) = &m.ret_type {
        write!(out, " : {r}")?;
    }
    out.push_str(" {\n");
    for l in &m.locals {
        writeln!(out, "        local {} {};", l.ty, l.name)?;
    }
    let mut labels: Vec<(&usize, &String)> = m.labels.iter().map(|(l, i)| (i, l)).collect();
    labels.sort();
    let mut next_label = labels.iter().peekable();
    for idx in 0..=m.body.len() {
        while let Some((i, l)) = next_label.peek() {
            if **i != idx {
                break;
            }
            writeln!(out, "      {l}:")?;
            next_label.next();
        }
        if let Some(s) = m.body.get(idx) {
            writeln!(out, "        {s}")?;
        }
    }
    out.push_str("    }\n");
    Ok(())
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        writeln!(out, "package {};", self.package_name)?;
        for e in &self.entry_points {
            writeln!(out, "entry {e};")?;
        }
        for c in &self.classes {
            write!(out, "\nclass {}", c.name)?;
            if let Some(s) = &c.superclass {
                write!(out, " extends {s}")?;
            }
            if !c.interfaces.is_empty() {
                write!(out, " implements {}", c.interfaces.join(", "))?;
            }
            if c.kind != ComponentKind::Plain {
                write!(out, " kind {}", c.kind.name())?;
            }
            out.push_str(" {\n");
            for fd in &c.fields {
                let scope = if fd.is_static { "static" } else { "instance" };
                match &fd.ty {
                    Some(t) => writeln!(out, "    field {scope} {t} {};", fd.name)?,
                    None => writeln!(out, "    field {scope} {};", fd.name)?,
                }
            }
            for m in &c.methods {
                render_method(&mut out, m)?;
            }
            out.push_str("}\n");
        }
        f.write_str(&out)
    }
}
