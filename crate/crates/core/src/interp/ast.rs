//! Program syntax tree and its canonical pretty-printer.
//!
//! The printer parenthesises every compound expression, so printing a parsed
//! program and parsing it again yields a tree that prints identically.

use std::fmt::{self, Write};

use super::value::float_repr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
    BitOr,
    BitAnd,
    BitXor,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
            BinOp::BitOr => "|",
            BinOp::BitAnd => "&",
            BinOp::BitXor => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Pos,
    Invert,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
    Is,
    IsNot,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::In => "in",
            CmpOp::NotIn => "not in",
            CmpOp::Is => "is",
            CmpOp::IsNot => "is not",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FPart {
    Lit(String),
    Field { expr: Box<Expr>, repr: bool, spec: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comprehension {
    pub target: Target,
    pub iter: Expr,
    pub conds: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Pos(Expr),
    Kw(String, Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lambda {
    pub params: Vec<String>,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    FStr(Vec<FPart>),
    Name(String),
    List(Vec<Expr>),
    Tuple(Vec<Expr>),
    Set(Vec<Expr>),
    ListComp(Box<Expr>, Vec<Comprehension>),
    SetComp(Box<Expr>, Vec<Comprehension>),
    /// Generator expressions are evaluated eagerly into a list.
    GenExp(Box<Expr>, Vec<Comprehension>),
    Attribute(Box<Expr>, String),
    Subscript(Box<Expr>, Box<Expr>),
    Slice(Option<Box<Expr>>, Option<Box<Expr>>, Option<Box<Expr>>),
    Call(Box<Expr>, Vec<Arg>),
    Lambda(Box<Lambda>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Compare(Box<Expr>, Vec<(CmpOp, Expr)>),
    IfExp {
        cond: Box<Expr>,
        then: Box<Expr>,
        orelse: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub line: usize,
    /// Height of this subtree; the parser bounds it so evaluation cannot
    /// exhaust the native stack.
    pub depth: u32,
}

impl Expr {
    pub fn new(kind: ExprKind, line: usize) -> Self {
        let depth = 1 + child_depth(&kind);
        Expr { kind, line, depth }
    }
}

fn target_depth(t: &Target) -> u32 {
    match t {
        Target::Name(_) => 1,
        Target::Tuple(items) => 1 + items.iter().map(target_depth).max().unwrap_or(0),
        Target::Subscript(a, b) => 1 + a.depth.max(b.depth),
        Target::Attribute(a, _) => 1 + a.depth,
    }
}

fn comp_depth(elt: &Expr, gens: &[Comprehension]) -> u32 {
    gens.iter()
        .map(|g| target_depth(&g.target).max(g.iter.depth).max(g.conds.iter().map(|c| c.depth).max().unwrap_or(0)))
        .fold(elt.depth, u32::max)
}

fn max_depth<'a>(items: impl IntoIterator<Item = &'a Expr>) -> u32 {
    items.into_iter().map(|e| e.depth).max().unwrap_or(0)
}

fn child_depth(kind: &ExprKind) -> u32 {
    match kind {
        ExprKind::None
        | ExprKind::Bool(_)
        | ExprKind::Int(_)
        | ExprKind::Float(_)
        | ExprKind::Str(_)
        | ExprKind::Name(_) => 0,
        ExprKind::FStr(parts) => parts
            .iter()
            .map(|p| match p {
                FPart::Lit(_) => 0,
                FPart::Field { expr, .. } => expr.depth,
            })
            .max()
            .unwrap_or(0),
        ExprKind::List(v) | ExprKind::Tuple(v) | ExprKind::Set(v) | ExprKind::And(v) | ExprKind::Or(v) => max_depth(v),
        ExprKind::ListComp(e, g) | ExprKind::SetComp(e, g) | ExprKind::GenExp(e, g) => comp_depth(e, g),
        ExprKind::Attribute(e, _) | ExprKind::Unary(_, e) => e.depth,
        ExprKind::Subscript(a, b) | ExprKind::Binary(_, a, b) => a.depth.max(b.depth),
        ExprKind::Slice(a, b, c) => [a, b, c].into_iter().flatten().map(|e| e.depth).max().unwrap_or(0),
        ExprKind::Call(func, args) => args
            .iter()
            .map(|a| match a {
                Arg::Pos(e) | Arg::Kw(_, e) => e.depth,
            })
            .fold(func.depth, u32::max),
        ExprKind::Lambda(l) => l.body.depth,
        ExprKind::Compare(first, rest) => rest.iter().map(|(_, e)| e.depth).fold(first.depth, u32::max),
        ExprKind::IfExp { cond, then, orelse } => cond.depth.max(then.depth).max(orelse.depth),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Name(String),
    Tuple(Vec<Target>),
    Subscript(Expr, Expr),
    Attribute(Expr, String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign(Vec<Target>, Expr),
    AugAssign(Target, BinOp, Expr),
    Expr(Expr),
    For { target: Target, iter: Expr, body: Vec<Stmt> },
    If { branches: Vec<(Expr, Vec<Stmt>)>, orelse: Option<Vec<Stmt>> },
    Pass,
    Break,
    Continue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub body: Vec<Stmt>,
}

impl Program {
    /// Canonical source text for this program.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        for s in &self.body {
            write_stmt(&mut out, s, 0);
        }
        out
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pretty())
    }
}

fn write_block(out: &mut String, body: &[Stmt], level: usize) {
    for s in body {
        write_stmt(out, s, level + 1);
    }
}

fn write_stmt(out: &mut String, s: &Stmt, level: usize) {
    let pad = "    ".repeat(level);
    match &s.kind {
        StmtKind::Assign(targets, value) => {
            out.push_str(&pad);
            for t in targets {
                let _ = write!(out, "{} = ", TargetDisplay(t));
            }
            let _ = writeln!(out, "{value}");
        }
        StmtKind::AugAssign(t, op, value) => {
            let _ = writeln!(out, "{pad}{} {}= {value}", TargetDisplay(t), op.symbol());
        }
        StmtKind::Expr(e) => {
            let _ = writeln!(out, "{pad}{e}");
        }
        StmtKind::For { target, iter, body } => {
            let _ = writeln!(out, "{pad}for {} in {iter}:", TargetDisplay(target));
            write_block(out, body, level);
        }
        StmtKind::If { branches, orelse } => {
            for (i, (cond, body)) in branches.iter().enumerate() {
                let kw = if i == 0 { "if" } else { "elif" };
                let _ = writeln!(out, "{pad}{kw} {cond}:");
                write_block(out, body, level);
            }
            if let Some(body) = orelse {
                let _ = writeln!(out, "{pad}else:");
                write_block(out, body, level);
            }
        }
        StmtKind::Pass => {
            let _ = writeln!(out, "{pad}pass");
        }
        StmtKind::Break => {
            let _ = writeln!(out, "{pad}break");
        }
        StmtKind::Continue => {
            let _ = writeln!(out, "{pad}continue");
        }
    }
}

struct TargetDisplay<'a>(&'a Target);

impl fmt::Display for TargetDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Target::Name(n) => f.write_str(n),
            Target::Tuple(items) => {
                f.write_str("(")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", TargetDisplay(t))?;
                }
                if items.len() == 1 {
                    f.write_str(",")?;
                }
                f.write_str(")")
            }
            Target::Subscript(obj, idx) => write!(f, "{obj}[{}]", SubscriptDisplay(idx)),
            Target::Attribute(obj, name) => write!(f, "{obj}.{name}"),
        }
    }
}

struct SubscriptDisplay<'a>(&'a Expr);

impl fmt::Display for SubscriptDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let ExprKind::Slice(a, b, c) = &self.0.kind {
            if let Some(a) = a {
                write!(f, "{a}")?;
            }
            f.write_str(":")?;
            if let Some(b) = b {
                write!(f, "{b}")?;
            }
            if let Some(c) = c {
                write!(f, ":{c}")?;
            }
            Ok(())
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Double-quoted literal with escapes; `braces` doubles `{`/`}` for f-strings.
pub fn quote_str(s: &str, braces: bool) -> String {
    let mut out = String::new();
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '{' if braces => out.push_str("{{"),
            '}' if braces => out.push_str("}}"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

fn write_list(f: &mut fmt::Formatter<'_>, items: &[Expr]) -> fmt::Result {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{e}")?;
    }
    Ok(())
}

fn write_comp(f: &mut fmt::Formatter<'_>, elt: &Expr, gens: &[Comprehension]) -> fmt::Result {
    write!(f, "{elt}")?;
    for g in gens {
        write!(f, " for {} in {}", TargetDisplay(&g.target), g.iter)?;
        for c in &g.conds {
            write!(f, " if {c}")?;
        }
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::None => f.write_str("None"),
            ExprKind::Bool(b) => f.write_str(if *b { "True" } else { "False" }),
            ExprKind::Int(i) if *i < 0 => write!(f, "({i})"),
            ExprKind::Int(i) => write!(f, "{i}"),
            ExprKind::Float(x) if x.is_sign_negative() => write!(f, "({})", float_repr(*x)),
            ExprKind::Float(x) => f.write_str(&float_repr(*x)),
            ExprKind::Str(s) => write!(f, "\"{}\"", quote_str(s, false)),
            ExprKind::FStr(parts) => {
                f.write_str("f\"")?;
                for p in parts {
                    match p {
                        FPart::Lit(s) => f.write_str(&quote_str(s, true))?,
                        FPart::Field { expr, repr, spec } => {
                            write!(f, "{{{expr}")?;
                            if *repr {
                                f.write_str("!r")?;
                            }
                            if !spec.is_empty() {
                                write!(f, ":{spec}")?;
                            }
                            f.write_str("}")?;
                        }
                    }
                }
                f.write_str("\"")
            }
            ExprKind::Name(n) => f.write_str(n),
            ExprKind::List(items) => {
                f.write_str("[")?;
                write_list(f, items)?;
                f.write_str("]")
            }
            ExprKind::Tuple(items) => {
                f.write_str("(")?;
                write_list(f, items)?;
                if items.len() == 1 {
                    f.write_str(",")?;
                }
                f.write_str(")")
            }
            ExprKind::Set(items) => {
                f.write_str("{")?;
                write_list(f, items)?;
                f.write_str("}")
            }
            ExprKind::ListComp(elt, gens) => {
                f.write_str("[")?;
                write_comp(f, elt, gens)?;
                f.write_str("]")
            }
            ExprKind::SetComp(elt, gens) => {
                f.write_str("{")?;
                write_comp(f, elt, gens)?;
                f.write_str("}")
            }
            ExprKind::GenExp(elt, gens) => {
                f.write_str("(")?;
                write_comp(f, elt, gens)?;
                f.write_str(")")
            }
            ExprKind::Attribute(obj, name) => write!(f, "{obj}.{name}"),
            ExprKind::Subscript(obj, idx) => write!(f, "{obj}[{}]", SubscriptDisplay(idx)),
            ExprKind::Slice(..) => write!(f, "{}", SubscriptDisplay(self)),
            ExprKind::Call(func, args) => {
                write!(f, "{func}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    match a {
                        Arg::Pos(e) => write!(f, "{e}")?,
                        Arg::Kw(k, e) => write!(f, "{k}={e}")?,
                    }
                }
                f.write_str(")")
            }
            ExprKind::Lambda(l) => {
                f.write_str("lambda")?;
                for (i, p) in l.params.iter().enumerate() {
                    f.write_str(if i == 0 { " " } else { ", " })?;
                    f.write_str(p)?;
                }
                write!(f, ": {}", l.body)
            }
            ExprKind::Unary(op, e) => match op {
                UnaryOp::Neg => write!(f, "(-{e})"),
                UnaryOp::Pos => write!(f, "(+{e})"),
                UnaryOp::Invert => write!(f, "(~{e})"),
                UnaryOp::Not => write!(f, "(not {e})"),
            },
            ExprKind::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            ExprKind::And(items) | ExprKind::Or(items) => {
                let kw = if matches!(self.kind, ExprKind::And(_)) { " and " } else { " or " };
                f.write_str("(")?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(kw)?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str(")")
            }
            ExprKind::Compare(first, rest) => {
                write!(f, "({first}")?;
                for (op, e) in rest {
                    write!(f, " {} {e}", op.symbol())?;
                }
                f.write_str(")")
            }
            ExprKind::IfExp { cond, then, orelse } => write!(f, "({then} if {cond} else {orelse})"),
        }
    }
}
