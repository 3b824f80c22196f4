//! Tree-walking evaluator with step, output and collection budgets.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use super::ast::*;
use super::value::*;
use super::{split_output, ErrorKind, EvalLimits, ExecResult, Observation, RuntimeErrorReport};
use crate::api::{self, AttributeValue, ToolContext};
use crate::scene::ObjectId;

/// Depth at which structural equality stops descending (self-referential lists).
const MAX_EQ_DEPTH: usize = 64;

pub(super) struct Exc {
    kind: ErrorKind,
    label: Option<&'static str>,
    msg: String,
    line: Option<usize>,
}

impl Exc {
    fn new(kind: ErrorKind, msg: impl Into<String>) -> Self {
        Exc { kind, label: None, msg: msg.into(), line: None }
    }

    fn labelled(kind: ErrorKind, label: &'static str, msg: impl Into<String>) -> Self {
        Exc { kind, label: Some(label), msg: msg.into(), line: None }
    }

    fn at(mut self, line: usize) -> Self {
        if self.line.is_none() {
            self.line = Some(line);
        }
        self
    }
}

type R<T> = Result<T, Exc>;

fn type_err(msg: impl Into<String>) -> Exc {
    Exc::new(ErrorKind::Type, msg)
}

fn value_err(msg: impl Into<String>) -> Exc {
    Exc::new(ErrorKind::Value, msg)
}

fn index_err(msg: impl Into<String>) -> Exc {
    Exc::labelled(ErrorKind::Value, "IndexError", msg)
}

fn key_err(msg: impl Into<String>) -> Exc {
    Exc::labelled(ErrorKind::Value, "KeyError", msg)
}

fn zero_div(msg: impl Into<String>) -> Exc {
    Exc::labelled(ErrorKind::Value, "ZeroDivisionError", msg)
}

fn overflow() -> Exc {
    Exc::labelled(ErrorKind::Limit, "OverflowError", "integer result does not fit in 64 bits")
}

fn attr_err(msg: impl Into<String>) -> Exc {
    Exc::new(ErrorKind::Attribute, msg)
}

enum Flow {
    Normal,
    Break,
    Continue,
}

pub(super) fn run(program: &Program, ctx: &ToolContext<'_>, limits: &EvalLimits) -> ExecResult {
    let mut it = Interp {
        ctx,
        limits: *limits,
        steps: 0,
        env: HashMap::new(),
        out: String::new(),
        out_chars: 0,
        truncated: false,
    };
    let result = it.exec_block(&program.body);
    let lines = split_output(&it.out);
    match result {
        Ok(_) => Ok(Observation { lines, truncated: it.truncated }),
        Err(e) => {
            let mut report = RuntimeErrorReport::new(e.kind, e.msg, e.line.unwrap_or(1));
            if let Some(label) = e.label {
                report.label = label.to_string();
            }
            report.partial_output = lines;
            Err(report)
        }
    }
}

const LIST_METHODS: [&str; 11] =
    ["append", "extend", "insert", "pop", "remove", "index", "count", "sort", "copy", "clear", "reverse"];
const SET_METHODS: [&str; 14] = [
    "add",
    "update",
    "remove",
    "discard",
    "union",
    "intersection",
    "difference",
    "symmetric_difference",
    "issubset",
    "issuperset",
    "isdisjoint",
    "copy",
    "clear",
    "pop",
];
const STR_METHODS: [&str; 19] = [
    "join",
    "lower",
    "upper",
    "strip",
    "lstrip",
    "rstrip",
    "split",
    "replace",
    "startswith",
    "endswith",
    "format",
    "title",
    "capitalize",
    "count",
    "find",
    "isdigit",
    "isalpha",
    "isnumeric",
    "splitlines",
];
const TUPLE_METHODS: [&str; 2] = ["index", "count"];

/// Attributes that exist only through `query_attribute`.
const QUERY_ONLY_ATTRIBUTES: [&str; 6] = ["lwh", "distance", "color", "shape", "material", "state"];

struct Interp<'c, 'a> {
    ctx: &'c ToolContext<'a>,
    limits: EvalLimits,
    steps: u64,
    env: HashMap<String, Value>,
    out: String,
    out_chars: usize,
    truncated: bool,
}

/// Exact comparison between numbers; NaN compares as unordered.
fn num_cmp(a: Num, b: Num) -> Option<Ordering> {
    match (a, b) {
        (Num::Int(x), Num::Int(y)) => Some(x.cmp(&y)),
        (Num::Float(x), Num::Float(y)) => x.partial_cmp(&y),
        (Num::Int(i), Num::Float(f)) => int_float_cmp(i, f),
        (Num::Float(f), Num::Int(i)) => int_float_cmp(i, f).map(Ordering::reverse),
    }
}

fn int_float_cmp(i: i64, f: f64) -> Option<Ordering> {
    if f.is_nan() {
        return None;
    }
    // i64::MIN as f64 is exactly -2^63.
    let edge = i64::MIN as f64;
    if f >= -edge {
        return Some(Ordering::Less);
    }
    if f < edge {
        return Some(Ordering::Greater);
    }
    let fl = f.floor();
    match i.cmp(&(fl as i64)) {
        Ordering::Equal if f > fl => Some(Ordering::Less),
        o => Some(o),
    }
}

fn as_index(v: &Value, what: &str) -> R<i64> {
    match v {
        Value::Int(i) => Ok(*i),
        Value::Bool(b) => Ok(*b as i64),
        other => Err(type_err(format!("{what} must be integers or slices, not {}", other.type_name()))),
    }
}

fn as_int_arg(v: &Value) -> R<i64> {
    match v {
        Value::Int(i) => Ok(*i),
        Value::Bool(b) => Ok(*b as i64),
        other => Err(type_err(format!("'{}' object cannot be interpreted as an integer", other.type_name()))),
    }
}

fn norm_index(i: i64, len: usize, what: &str) -> R<usize> {
    let n = len as i64;
    let j = if i < 0 { i + n } else { i };
    if j < 0 || j >= n {
        return Err(index_err(format!("{what} index out of range")));
    }
    Ok(j as usize)
}

/// Python slice index arithmetic.
fn slice_indices(len: usize, lo: Option<i64>, hi: Option<i64>, step: Option<i64>) -> R<Vec<usize>> {
    let step = step.unwrap_or(1);
    if step == 0 {
        return Err(value_err("slice step cannot be zero"));
    }
    let n = len as i128;
    let step = step as i128;
    let clamp = |v: Option<i64>, default: i128, low: i128, high: i128| -> i128 {
        match v {
            None => default,
            Some(v) => {
                let v = v as i128;
                let v = if v < 0 { v + n } else { v };
                v.clamp(low, high)
            }
        }
    };
    let (start, stop) = if step > 0 {
        (clamp(lo, 0, 0, n), clamp(hi, n, 0, n))
    } else {
        (clamp(lo, n - 1, -1, n - 1), clamp(hi, -1, -1, n - 1))
    };
    let mut out = Vec::new();
    let mut i = start;
    while (step > 0 && i < stop) || (step < 0 && i > stop) {
        out.push(i as usize);
        i += step;
    }
    Ok(out)
}

/// Stable merge sort with a fallible strict-less predicate (never panics on
/// inconsistent orderings, unlike the standard sort).
fn merge_sort(idx: &mut Vec<usize>, less: &mut dyn FnMut(usize, usize) -> R<bool>) -> R<()> {
    if idx.len() <= 1 {
        return Ok(());
    }
    let mut right = idx.split_off(idx.len() / 2);
    merge_sort(idx, less)?;
    merge_sort(&mut right, less)?;
    let left = std::mem::take(idx);
    let (mut i, mut j) = (0, 0);
    idx.reserve(left.len() + right.len());
    while i < left.len() && j < right.len() {
        if less(right[j], left[i])? {
            idx.push(right[j]);
            j += 1;
        } else {
            idx.push(left[i]);
            i += 1;
        }
    }
    idx.extend_from_slice(&left[i..]);
    idx.extend_from_slice(&right[j..]);
    Ok(())
}

fn py_mod_int(a: i64, b: i64) -> R<i64> {
    if b == 0 {
        return Err(zero_div("integer modulo by zero"));
    }
    let r = a.checked_rem(b).ok_or_else(overflow)?;
    Ok(if r != 0 && ((r < 0) != (b < 0)) { r + b } else { r })
}

fn py_floordiv_int(a: i64, b: i64) -> R<i64> {
    if b == 0 {
        return Err(zero_div("integer division by zero"));
    }
    let q = a.checked_div(b).ok_or_else(overflow)?;
    Ok(if a % b != 0 && ((a < 0) != (b < 0)) { q - 1 } else { q })
}

fn py_mod_float(a: f64, b: f64) -> R<f64> {
    if b == 0.0 {
        return Err(zero_div("float modulo"));
    }
    let r = a % b;
    Ok(if r != 0.0 && ((r < 0.0) != (b < 0.0)) { r + b } else { r })
}

fn title_case(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev_cased = false;
    for c in s.chars() {
        if c.is_alphabetic() {
            if prev_cased {
                out.extend(c.to_lowercase());
            } else {
                out.extend(c.to_uppercase());
            }
            prev_cased = true;
        } else {
            out.push(c);
            prev_cased = false;
        }
    }
    out
}

fn identical(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::None, Value::None) => true,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Object(x), Value::Object(y)) => x == y,
        (Value::List(x), Value::List(y)) => Rc::ptr_eq(x, y),
        (Value::Set(x), Value::Set(y)) => Rc::ptr_eq(x, y),
        (Value::Tuple(x), Value::Tuple(y)) => Rc::ptr_eq(x, y),
        (Value::Builtin(x), Value::Builtin(y)) => x == y,
        (Value::Method(x), Value::Method(y)) => Rc::ptr_eq(x, y),
        (Value::Lambda(x), Value::Lambda(y)) => Rc::ptr_eq(x, y),
        _ => false,
    }
}

fn py_eq(a: &Value, b: &Value, depth: usize) -> bool {
    if depth > MAX_EQ_DEPTH {
        return identical(a, b);
    }
    if let (Some(x), Some(y)) = (a.as_number(), b.as_number()) {
        return num_cmp(x, y) == Some(Ordering::Equal);
    }
    match (a, b) {
        (Value::None, Value::None) => true,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Object(x), Value::Object(y)) => x == y,
        (Value::List(x), Value::List(y)) => {
            if Rc::ptr_eq(x, y) {
                return true;
            }
            let (x, y) = (x.borrow().clone(), y.borrow().clone());
            x.len() == y.len() && x.iter().zip(&y).all(|(p, q)| py_eq(p, q, depth + 1))
        }
        (Value::Tuple(x), Value::Tuple(y)) => {
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| py_eq(p, q, depth + 1))
        }
        (Value::Set(x), Value::Set(y)) => Rc::ptr_eq(x, y) || x.borrow().keys().eq(y.borrow().keys()),
        _ => identical(a, b),
    }
}

impl<'c, 'a> Interp<'c, 'a> {
    // ---------------------------------------------------------------- budgets

    fn charge(&mut self, n: u64) -> R<()> {
        self.steps = self.steps.saturating_add(n);
        if self.steps > self.limits.max_steps {
            return Err(Exc::new(
                ErrorKind::Limit,
                format!("step budget of {} exceeded; simplify the program", self.limits.max_steps),
            ));
        }
        Ok(())
    }

    fn tick(&mut self) -> R<()> {
        self.charge(1)
    }

    fn check_len(&self, n: usize) -> R<()> {
        if n > self.limits.max_collection_len {
            return Err(Exc::new(
                ErrorKind::Limit,
                format!("collection size limit of {} exceeded", self.limits.max_collection_len),
            ));
        }
        Ok(())
    }

    fn emit(&mut self, text: &str) {
        if self.truncated {
            return;
        }
        let n = text.chars().count();
        let room = self.limits.max_output_chars - self.out_chars;
        if n <= room {
            self.out.push_str(text);
            self.out_chars += n;
        } else {
            self.out.extend(text.chars().take(room));
            self.out_chars += room;
            self.truncated = true;
        }
    }

    fn render(&mut self, v: &Value, repr: bool) -> R<String> {
        let mut r = Renderer::new(self.ctx.scene, self.limits.max_collection_len);
        let res = if repr { r.repr(v) } else { r.str(v) };
        let s = r.finish();
        self.charge((s.len() / 64) as u64)?;
        match res {
            Ok(()) => Ok(s),
            Err(TooLong) => Err(Exc::new(
                ErrorKind::Limit,
                format!("string length limit of {} exceeded", self.limits.max_collection_len),
            )),
        }
    }

    fn new_str(&self, s: String) -> R<Value> {
        self.check_len(s.chars().count())?;
        Ok(Value::Str(Rc::from(s)))
    }

    fn new_list(&self, items: Vec<Value>) -> R<Value> {
        self.check_len(items.len())?;
        Ok(Value::list(items))
    }

    fn set_from(&mut self, items: Vec<Value>) -> R<BTreeMap<Key, Value>> {
        let mut m = BTreeMap::new();
        for v in items {
            let k = v.key().map_err(type_err)?;
            m.entry(k).or_insert(v);
        }
        self.check_len(m.len())?;
        Ok(m)
    }

    fn iterate(&mut self, v: &Value) -> R<Vec<Value>> {
        let items: Vec<Value> = match v {
            Value::List(l) => l.borrow().clone(),
            Value::Tuple(t) => t.to_vec(),
            Value::Set(s) => s.borrow().values().cloned().collect(),
            Value::Str(s) => s.chars().map(|c| Value::str(c.to_string())).collect(),
            other => return Err(type_err(format!("'{}' object is not iterable", other.type_name()))),
        };
        self.charge(items.len() as u64)?;
        Ok(items)
    }

    // ------------------------------------------------------------- statements

    fn exec_block(&mut self, stmts: &[Stmt]) -> R<Flow> {
        for s in stmts {
            self.tick().map_err(|e| e.at(s.line))?;
            match self.exec_stmt(s).map_err(|e| e.at(s.line))? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec_stmt(&mut self, s: &Stmt) -> R<Flow> {
        match &s.kind {
            StmtKind::Assign(targets, value) => {
                let v = self.eval(value)?;
                for t in targets {
                    self.assign(t, v.clone())?;
                }
            }
            StmtKind::AugAssign(target, op, value) => match target {
                Target::Name(n) => {
                    let cur = self.lookup(n)?;
                    let rhs = self.eval(value)?;
                    let new = self.inplace(*op, cur, rhs)?;
                    self.env.insert(n.clone(), new);
                }
                Target::Subscript(obj, idx) => {
                    let o = self.eval(obj)?;
                    let i = self.eval(idx)?;
                    let cur = self.getitem(&o, &i)?;
                    let rhs = self.eval(value)?;
                    let new = self.inplace(*op, cur, rhs)?;
                    self.setitem(&o, &i, new)?;
                }
                Target::Attribute(obj, name) => {
                    let o = self.eval(obj)?;
                    return Err(self.setattr_error(&o, name));
                }
                Target::Tuple(_) => return Err(type_err("illegal target for augmented assignment")),
            },
            StmtKind::Expr(e) => {
                self.eval(e)?;
            }
            StmtKind::For { target, iter, body } => {
                let it = self.eval(iter)?;
                for item in self.iterate(&it)? {
                    self.assign(target, item)?;
                    match self.exec_block(body)? {
                        Flow::Break => break,
                        Flow::Continue | Flow::Normal => {}
                    }
                }
            }
            StmtKind::If { branches, orelse } => {
                for (cond, body) in branches {
                    if self.eval(cond)?.truthy() {
                        return self.exec_block(body);
                    }
                }
                if let Some(body) = orelse {
                    return self.exec_block(body);
                }
            }
            StmtKind::Pass => {}
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
        }
        Ok(Flow::Normal)
    }

    fn setattr_error(&self, o: &Value, name: &str) -> Exc {
        match o {
            Value::Object(_) => attr_err(format!("'ObjectAttribute' object attribute '{name}' is read-only")),
            other => attr_err(format!("'{}' object has no attribute '{name}'", other.type_name())),
        }
    }

    fn assign(&mut self, t: &Target, v: Value) -> R<()> {
        match t {
            Target::Name(n) => {
                self.env.insert(n.clone(), v);
            }
            Target::Tuple(ts) => {
                let items = self.iterate(&v)?;
                if items.len() > ts.len() {
                    return Err(value_err(format!("too many values to unpack (expected {})", ts.len())));
                }
                if items.len() < ts.len() {
                    return Err(value_err(format!(
                        "not enough values to unpack (expected {}, got {})",
                        ts.len(),
                        items.len()
                    )));
                }
                for (t, item) in ts.iter().zip(items) {
                    self.assign(t, item)?;
                }
            }
            Target::Subscript(obj, idx) => {
                let o = self.eval(obj)?;
                let i = self.eval(idx)?;
                self.setitem(&o, &i, v)?;
            }
            Target::Attribute(obj, name) => {
                let o = self.eval(obj)?;
                return Err(self.setattr_error(&o, name));
            }
        }
        Ok(())
    }

    fn inplace(&mut self, op: BinOp, cur: Value, rhs: Value) -> R<Value> {
        match (&cur, op) {
            (Value::List(l), BinOp::Add) => {
                let items = self.iterate(&rhs)?;
                let new_len = l.borrow().len() + items.len();
                self.check_len(new_len)?;
                l.borrow_mut().extend(items);
                Ok(cur)
            }
            (Value::Set(s), BinOp::BitOr) if matches!(rhs, Value::Set(_)) => {
                let items = self.iterate(&rhs)?;
                let add = self.set_from(items)?;
                let mut m = s.borrow_mut();
                for (k, v) in add {
                    m.entry(k).or_insert(v);
                }
                let n = m.len();
                drop(m);
                self.check_len(n)?;
                Ok(cur)
            }
            _ => self.binary(op, cur, rhs),
        }
    }

    fn lookup(&self, name: &str) -> R<Value> {
        if let Some(v) = self.env.get(name) {
            return Ok(v.clone());
        }
        if let Some(b) = Builtin::lookup(name) {
            return Ok(Value::Builtin(b));
        }
        Err(Exc::new(ErrorKind::Name, format!("name '{name}' is not defined")))
    }

    // ------------------------------------------------------------ expressions

    fn eval(&mut self, e: &Expr) -> R<Value> {
        self.tick().map_err(|x| x.at(e.line))?;
        self.eval_inner(e).map_err(|x| x.at(e.line))
    }

    fn eval_inner(&mut self, e: &Expr) -> R<Value> {
        Ok(match &e.kind {
            ExprKind::None => Value::None,
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Int(i) => Value::Int(*i),
            ExprKind::Float(x) => Value::Float(*x),
            ExprKind::Str(s) => Value::str(s),
            ExprKind::FStr(parts) => {
                let mut s = String::new();
                for p in parts {
                    match p {
                        FPart::Lit(l) => s.push_str(l),
                        FPart::Field { expr, repr, spec } => {
                            let v = self.eval(expr)?;
                            let text = self.render(&v, *repr)?;
                            let formatted = if *repr {
                                apply_format(&Value::str(&text), &text, spec)
                            } else {
                                apply_format(&v, &text, spec)
                            }
                            .map_err(value_err)?;
                            s.push_str(&formatted);
                        }
                    }
                    self.check_len(s.len())?;
                }
                self.new_str(s)?
            }
            ExprKind::Name(n) => self.lookup(n)?,
            ExprKind::List(items) => {
                let vals = items.iter().map(|i| self.eval(i)).collect::<R<Vec<_>>>()?;
                self.new_list(vals)?
            }
            ExprKind::Tuple(items) => {
                let vals = items.iter().map(|i| self.eval(i)).collect::<R<Vec<_>>>()?;
                Value::tuple(vals)
            }
            ExprKind::Set(items) => {
                let vals = items.iter().map(|i| self.eval(i)).collect::<R<Vec<_>>>()?;
                Value::set(self.set_from(vals)?)
            }
            ExprKind::ListComp(elt, gens) | ExprKind::GenExp(elt, gens) => {
                let mut out = Vec::new();
                self.comprehension(elt, gens, &mut out)?;
                Value::list(out)
            }
            ExprKind::SetComp(elt, gens) => {
                let mut out = Vec::new();
                self.comprehension(elt, gens, &mut out)?;
                Value::set(self.set_from(out)?)
            }
            ExprKind::Attribute(obj, name) => {
                let o = self.eval(obj)?;
                self.getattr(o, name)?
            }
            ExprKind::Subscript(obj, idx) => {
                let o = self.eval(obj)?;
                if let ExprKind::Slice(lo, hi, step) = &idx.kind {
                    let mut bound = |b: &Option<Box<Expr>>| -> R<Option<i64>> {
                        match b {
                            None => Ok(None),
                            Some(x) => match self.eval(x)? {
                                Value::None => Ok(None),
                                v => as_index(&v, "slice indices").map(Some),
                            },
                        }
                    };
                    let (lo, hi, step) = (bound(lo)?, bound(hi)?, bound(step)?);
                    self.slice(&o, lo, hi, step)?
                } else {
                    let i = self.eval(idx)?;
                    self.getitem(&o, &i)?
                }
            }
            ExprKind::Slice(..) => return Err(type_err("slice syntax is only valid inside brackets")),
            ExprKind::Call(func, args) => {
                let f = self.eval(func)?;
                let mut pos = Vec::new();
                let mut kw = Vec::new();
                for a in args {
                    match a {
                        Arg::Pos(x) => pos.push(self.eval(x)?),
                        Arg::Kw(k, x) => {
                            let v = self.eval(x)?;
                            kw.push((k.clone(), v));
                        }
                    }
                }
                self.call(&f, pos, kw).map_err(|x| x.at(e.line))?
            }
            ExprKind::Lambda(l) => Value::Lambda(Rc::new((**l).clone())),
            ExprKind::Unary(op, x) => {
                let v = self.eval(x)?;
                self.unary(*op, v)?
            }
            ExprKind::Binary(op, l, r) => {
                let a = self.eval(l)?;
                let b = self.eval(r)?;
                self.binary(*op, a, b)?
            }
            ExprKind::And(items) => {
                let mut last = Value::Bool(true);
                for i in items {
                    last = self.eval(i)?;
                    if !last.truthy() {
                        break;
                    }
                }
                last
            }
            ExprKind::Or(items) => {
                let mut last = Value::Bool(false);
                for i in items {
                    last = self.eval(i)?;
                    if last.truthy() {
                        break;
                    }
                }
                last
            }
            ExprKind::Compare(first, rest) => {
                let mut left = self.eval(first)?;
                for (op, r) in rest {
                    let right = self.eval(r)?;
                    if !self.compare(*op, &left, &right)? {
                        return Ok(Value::Bool(false));
                    }
                    left = right;
                }
                Value::Bool(true)
            }
            ExprKind::IfExp { cond, then, orelse } => {
                if self.eval(cond)?.truthy() {
                    self.eval(then)?
                } else {
                    self.eval(orelse)?
                }
            }
        })
    }

    fn bound_names(t: &Target, out: &mut Vec<String>) {
        match t {
            Target::Name(n) => out.push(n.clone()),
            Target::Tuple(ts) => ts.iter().for_each(|t| Self::bound_names(t, out)),
            _ => {}
        }
    }

    /// Comprehension variables do not leak into the enclosing scope.
    fn comprehension(&mut self, elt: &Expr, gens: &[Comprehension], out: &mut Vec<Value>) -> R<()> {
        let mut names = Vec::new();
        for g in gens {
            Self::bound_names(&g.target, &mut names);
        }
        let saved: Vec<(String, Option<Value>)> = names.iter().map(|n| (n.clone(), self.env.get(n).cloned())).collect();
        let r = self.comp_level(elt, gens, out);
        for (n, v) in saved {
            match v {
                Some(v) => self.env.insert(n, v),
                None => self.env.remove(&n),
            };
        }
        r
    }

    fn comp_level(&mut self, elt: &Expr, gens: &[Comprehension], out: &mut Vec<Value>) -> R<()> {
        let Some((g, rest)) = gens.split_first() else {
            let v = self.eval(elt)?;
            out.push(v);
            return self.check_len(out.len());
        };
        let it = self.eval(&g.iter)?;
        'items: for item in self.iterate(&it)? {
            self.assign(&g.target, item)?;
            for c in &g.conds {
                if !self.eval(c)?.truthy() {
                    continue 'items;
                }
            }
            self.comp_level(elt, rest, out)?;
        }
        Ok(())
    }

    fn getattr(&mut self, o: Value, name: &str) -> R<Value> {
        let methods: &[&str] = match &o {
            Value::Object(id) => {
                let obj = self.ctx.object(*id).map_err(|e| Exc::new(ErrorKind::Api, e.0))?;
                return match name {
                    "id" => Ok(Value::Int(id.0 as i64)),
                    "category" => Ok(Value::str(&obj.category)),
                    "xyz" => {
                        let c = obj.center();
                        Ok(Value::list(vec![Value::Float(c.x), Value::Float(c.y), Value::Float(c.z)]))
                    }
                    other if QUERY_ONLY_ATTRIBUTES.contains(&other) => Err(attr_err(format!(
                        "'ObjectAttribute' object has no attribute '{other}'; use query_attribute(object=..., attribute_type=\"{other}\")"
                    ))),
                    other => Err(attr_err(format!(
                        "'ObjectAttribute' object has no attribute '{other}' (available: id, category, xyz)"
                    ))),
                };
            }
            Value::List(_) => &LIST_METHODS,
            Value::Set(_) => &SET_METHODS,
            Value::Str(_) => &STR_METHODS,
            Value::Tuple(_) => &TUPLE_METHODS,
            _ => &[],
        };
        if methods.contains(&name) {
            return Ok(Value::Method(Rc::new(BoundMethod { recv: o, name: name.to_string() })));
        }
        Err(attr_err(format!("'{}' object has no attribute '{name}'", o.type_name())))
    }

    fn getitem(&mut self, o: &Value, i: &Value) -> R<Value> {
        match o {
            Value::List(l) => {
                let idx = as_index(i, "list indices")?;
                let l = l.borrow();
                Ok(l[norm_index(idx, l.len(), "list")?].clone())
            }
            Value::Tuple(t) => {
                let idx = as_index(i, "tuple indices")?;
                Ok(t[norm_index(idx, t.len(), "tuple")?].clone())
            }
            Value::Str(s) => {
                let idx = as_index(i, "string indices")?;
                let chars: Vec<char> = s.chars().collect();
                Ok(Value::str(chars[norm_index(idx, chars.len(), "string")?].to_string()))
            }
            Value::Set(_) => {
                Err(type_err("'set' object is not subscriptable (iterate over it, or convert with list(...) first)"))
            }
            other => Err(type_err(format!("'{}' object is not subscriptable", other.type_name()))),
        }
    }

    fn slice(&mut self, o: &Value, lo: Option<i64>, hi: Option<i64>, step: Option<i64>) -> R<Value> {
        match o {
            Value::List(l) => {
                let l = l.borrow().clone();
                let picked = slice_indices(l.len(), lo, hi, step)?.into_iter().map(|i| l[i].clone()).collect();
                Ok(Value::list(picked))
            }
            Value::Tuple(t) => {
                let picked = slice_indices(t.len(), lo, hi, step)?.into_iter().map(|i| t[i].clone()).collect();
                Ok(Value::tuple(picked))
            }
            Value::Str(s) => {
                let chars: Vec<char> = s.chars().collect();
                let picked: String = slice_indices(chars.len(), lo, hi, step)?.into_iter().map(|i| chars[i]).collect();
                Ok(Value::str(picked))
            }
            other => Err(type_err(format!("'{}' object is not subscriptable", other.type_name()))),
        }
    }

    fn setitem(&mut self, o: &Value, i: &Value, v: Value) -> R<()> {
        match o {
            Value::List(l) => {
                let idx = as_index(i, "list indices")?;
                let mut l = l.borrow_mut();
                let j = norm_index(idx, l.len(), "list assignment")?;
                l[j] = v;
                Ok(())
            }
            other => Err(type_err(format!("'{}' object does not support item assignment", other.type_name()))),
        }
    }

    // --------------------------------------------------------------- operators

    fn unary(&mut self, op: UnaryOp, v: Value) -> R<Value> {
        if op == UnaryOp::Not {
            return Ok(Value::Bool(!v.truthy()));
        }
        let sym = match op {
            UnaryOp::Neg => "-",
            UnaryOp::Pos => "+",
            _ => "~",
        };
        match (op, v.as_number()) {
            (UnaryOp::Neg, Some(Num::Int(i))) => i.checked_neg().map(Value::Int).ok_or_else(overflow),
            (UnaryOp::Neg, Some(Num::Float(x))) => Ok(Value::Float(-x)),
            (UnaryOp::Pos, Some(n)) => Ok(n.into_value()),
            (UnaryOp::Invert, Some(Num::Int(i))) => Ok(Value::Int(!i)),
            _ => Err(type_err(format!("bad operand type for unary {sym}: '{}'", v.type_name()))),
        }
    }

    fn binary(&mut self, op: BinOp, a: Value, b: Value) -> R<Value> {
        if let (Some(x), Some(y)) = (a.as_number(), b.as_number()) {
            if matches!(op, BinOp::BitOr | BinOp::BitAnd | BinOp::BitXor) {
                if let (Value::Bool(p), Value::Bool(q)) = (&a, &b) {
                    return Ok(Value::Bool(match op {
                        BinOp::BitOr => p | q,
                        BinOp::BitAnd => p & q,
                        _ => p ^ q,
                    }));
                }
            }
            return self.arith(op, x, y, &a, &b);
        }
        let unsupported = || {
            type_err(format!(
                "unsupported operand type(s) for {}: '{}' and '{}'",
                op.symbol(),
                a.type_name(),
                b.type_name()
            ))
        };
        match (op, &a, &b) {
            (BinOp::Add, Value::Str(x), Value::Str(y)) => {
                self.check_len(x.chars().count() + y.chars().count())?;
                Ok(Value::str(format!("{x}{y}")))
            }
            (BinOp::Add, Value::Str(_), other) => {
                Err(type_err(format!("can only concatenate str (not \"{}\") to str", other.type_name())))
            }
            (BinOp::Add, Value::List(x), Value::List(y)) => {
                let mut v = x.borrow().clone();
                v.extend(y.borrow().iter().cloned());
                self.charge(v.len() as u64)?;
                self.new_list(v)
            }
            (BinOp::Add, Value::List(_), other) => {
                Err(type_err(format!("can only concatenate list (not \"{}\") to list", other.type_name())))
            }
            (BinOp::Add, Value::Tuple(x), Value::Tuple(y)) => {
                let v: Vec<Value> = x.iter().chain(y.iter()).cloned().collect();
                self.check_len(v.len())?;
                Ok(Value::tuple(v))
            }
            (BinOp::Mul, seq, n) | (BinOp::Mul, n, seq)
                if matches!(seq, Value::Str(_) | Value::List(_) | Value::Tuple(_))
                    && matches!(n, Value::Int(_) | Value::Bool(_)) =>
            {
                let count = as_int_arg(n)?.max(0) as usize;
                self.repeat(seq, count)
            }
            (BinOp::Sub | BinOp::BitOr | BinOp::BitAnd | BinOp::BitXor, Value::Set(x), Value::Set(y)) => {
                let (x, y) = (x.borrow(), y.borrow());
                let m: BTreeMap<Key, Value> = match op {
                    BinOp::Sub => {
                        x.iter().filter(|(k, _)| !y.contains_key(k)).map(|(k, v)| (k.clone(), v.clone())).collect()
                    }
                    BinOp::BitAnd => {
                        x.iter().filter(|(k, _)| y.contains_key(k)).map(|(k, v)| (k.clone(), v.clone())).collect()
                    }
                    BinOp::BitOr => {
                        let mut m = x.clone();
                        for (k, v) in y.iter() {
                            m.entry(k.clone()).or_insert_with(|| v.clone());
                        }
                        m
                    }
                    _ => x
                        .iter()
                        .filter(|(k, _)| !y.contains_key(k))
                        .chain(y.iter().filter(|(k, _)| !x.contains_key(k)))
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect(),
                };
                let n = (x.len() + y.len()) as u64;
                drop((x, y));
                self.charge(n)?;
                self.check_len(m.len())?;
                Ok(Value::set(m))
            }
            (BinOp::Mod, Value::Str(_), _) => {
                Err(type_err("%-formatting of strings is not supported; use an f-string instead"))
            }
            _ => Err(unsupported()),
        }
    }

    fn repeat(&mut self, seq: &Value, count: usize) -> R<Value> {
        match seq {
            Value::Str(s) => {
                let n = s.chars().count().saturating_mul(count);
                self.check_len(n)?;
                Ok(Value::str(s.repeat(count)))
            }
            Value::List(l) => {
                let l = l.borrow().clone();
                self.check_len(l.len().saturating_mul(count))?;
                self.charge((l.len() * count) as u64)?;
                Ok(Value::list(l.iter().cloned().cycle().take(l.len() * count).collect()))
            }
            Value::Tuple(t) => {
                self.check_len(t.len().saturating_mul(count))?;
                Ok(Value::tuple(t.iter().cloned().cycle().take(t.len() * count).collect()))
            }
            _ => unreachable!("callers pass sequences"),
        }
    }

    fn arith(&mut self, op: BinOp, x: Num, y: Num, a: &Value, b: &Value) -> R<Value> {
        use Num::*;
        Ok(match (op, x, y) {
            (BinOp::Add, Int(p), Int(q)) => Value::Int(p.checked_add(q).ok_or_else(overflow)?),
            (BinOp::Sub, Int(p), Int(q)) => Value::Int(p.checked_sub(q).ok_or_else(overflow)?),
            (BinOp::Mul, Int(p), Int(q)) => Value::Int(p.checked_mul(q).ok_or_else(overflow)?),
            (BinOp::FloorDiv, Int(p), Int(q)) => Value::Int(py_floordiv_int(p, q)?),
            (BinOp::Mod, Int(p), Int(q)) => Value::Int(py_mod_int(p, q)?),
            (BinOp::BitOr, Int(p), Int(q)) => Value::Int(p | q),
            (BinOp::BitAnd, Int(p), Int(q)) => Value::Int(p & q),
            (BinOp::BitXor, Int(p), Int(q)) => Value::Int(p ^ q),
            (BinOp::BitOr | BinOp::BitAnd | BinOp::BitXor, _, _) => {
                return Err(type_err(format!(
                    "unsupported operand type(s) for {}: '{}' and '{}'",
                    op.symbol(),
                    a.type_name(),
                    b.type_name()
                )))
            }
            (BinOp::Pow, Int(p), Int(q)) if q >= 0 => {
                let e = u32::try_from(q).ok();
                match (p, e) {
                    (0 | 1, _) => Value::Int(if q == 0 { 1 } else { p }),
                    (-1, _) => Value::Int(if q % 2 == 0 { 1 } else { -1 }),
                    (_, Some(e)) => Value::Int(p.checked_pow(e).ok_or_else(overflow)?),
                    _ => return Err(overflow()),
                }
            }
            (BinOp::Pow, p, q) => {
                let (p, q) = (p.as_f64(), q.as_f64());
                if p == 0.0 && q < 0.0 {
                    return Err(zero_div("0.0 cannot be raised to a negative power"));
                }
                if p < 0.0 && q.fract() != 0.0 {
                    return Err(value_err("negative number cannot be raised to a fractional power"));
                }
                Value::Float(p.powf(q))
            }
            (BinOp::Div, p, q) => {
                if q.as_f64() == 0.0 {
                    return Err(zero_div("division by zero"));
                }
                Value::Float(p.as_f64() / q.as_f64())
            }
            (BinOp::FloorDiv, p, q) => {
                if q.as_f64() == 0.0 {
                    return Err(zero_div("float floor division by zero"));
                }
                Value::Float((p.as_f64() / q.as_f64()).floor())
            }
            (BinOp::Mod, p, q) => Value::Float(py_mod_float(p.as_f64(), q.as_f64())?),
            (BinOp::Add, p, q) => Value::Float(p.as_f64() + q.as_f64()),
            (BinOp::Sub, p, q) => Value::Float(p.as_f64() - q.as_f64()),
            (BinOp::Mul, p, q) => Value::Float(p.as_f64() * q.as_f64()),
        })
    }

    fn order(&mut self, a: &Value, b: &Value, sym: &str) -> R<Option<Ordering>> {
        if let (Some(x), Some(y)) = (a.as_number(), b.as_number()) {
            return Ok(num_cmp(x, y));
        }
        match (a, b) {
            (Value::Str(x), Value::Str(y)) => Ok(Some(x.cmp(y))),
            (Value::List(_), Value::List(_)) | (Value::Tuple(_), Value::Tuple(_)) => {
                let xs = self.iterate(a)?;
                let ys = self.iterate(b)?;
                for (p, q) in xs.iter().zip(&ys) {
                    if !py_eq(p, q, 0) {
                        return self.order(p, q, sym);
                    }
                }
                Ok(Some(xs.len().cmp(&ys.len())))
            }
            _ => Err(type_err(format!(
                "'{sym}' not supported between instances of '{}' and '{}'",
                a.type_name(),
                b.type_name()
            ))),
        }
    }

    fn less(&mut self, a: &Value, b: &Value) -> R<bool> {
        if let (Value::Set(x), Value::Set(y)) = (a, b) {
            let (x, y) = (x.borrow(), y.borrow());
            return Ok(x.len() < y.len() && x.keys().all(|k| y.contains_key(k)));
        }
        Ok(self.order(a, b, "<")? == Some(Ordering::Less))
    }

    fn contains(&mut self, container: &Value, item: &Value) -> R<bool> {
        match container {
            Value::Str(s) => match item {
                Value::Str(sub) => Ok(s.contains(&**sub)),
                other => {
                    Err(type_err(format!("'in <string>' requires string as left operand, not {}", other.type_name())))
                }
            },
            Value::List(_) | Value::Tuple(_) => {
                let items = self.iterate(container)?;
                Ok(items.iter().any(|x| py_eq(x, item, 0)))
            }
            Value::Set(s) => {
                let k = item.key().map_err(type_err)?;
                Ok(s.borrow().contains_key(&k))
            }
            other => Err(type_err(format!("argument of type '{}' is not iterable", other.type_name()))),
        }
    }

    fn compare(&mut self, op: CmpOp, a: &Value, b: &Value) -> R<bool> {
        Ok(match op {
            CmpOp::Eq => py_eq(a, b, 0),
            CmpOp::Ne => !py_eq(a, b, 0),
            CmpOp::In => self.contains(b, a)?,
            CmpOp::NotIn => !self.contains(b, a)?,
            CmpOp::Is => identical(a, b),
            CmpOp::IsNot => !identical(a, b),
            CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge => {
                if let (Value::Set(x), Value::Set(y)) = (a, b) {
                    let (x, y) = (x.borrow(), y.borrow());
                    let sub = |p: &BTreeMap<Key, Value>, q: &BTreeMap<Key, Value>| p.keys().all(|k| q.contains_key(k));
                    return Ok(match op {
                        CmpOp::Lt => x.len() < y.len() && sub(&x, &y),
                        CmpOp::Le => sub(&x, &y),
                        CmpOp::Gt => y.len() < x.len() && sub(&y, &x),
                        _ => sub(&y, &x),
                    });
                }
                let o = self.order(a, b, op.symbol())?;
                match (op, o) {
                    (_, None) => false,
                    (CmpOp::Lt, Some(o)) => o == Ordering::Less,
                    (CmpOp::Le, Some(o)) => o != Ordering::Greater,
                    (CmpOp::Gt, Some(o)) => o == Ordering::Greater,
                    (_, Some(o)) => o != Ordering::Less,
                }
            }
        })
    }

    // ------------------------------------------------------------------ calls

    fn call(&mut self, f: &Value, pos: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        match f {
            Value::Builtin(b) if b.is_api() => self.call_api(*b, pos, kw),
            Value::Builtin(b) => self.call_builtin(*b, pos, kw),
            Value::Method(m) => {
                let m = m.clone();
                self.call_method(&m.recv, &m.name, pos, kw)
            }
            Value::Lambda(l) => {
                if let Some((k, _)) = kw.first() {
                    return Err(type_err(format!("<lambda>() got an unexpected keyword argument '{k}'")));
                }
                if pos.len() != l.params.len() {
                    return Err(type_err(format!(
                        "<lambda>() takes {} positional argument{} but {} were given",
                        l.params.len(),
                        if l.params.len() == 1 { "" } else { "s" },
                        pos.len()
                    )));
                }
                let saved: Vec<(String, Option<Value>)> =
                    l.params.iter().map(|p| (p.clone(), self.env.get(p).cloned())).collect();
                for (p, v) in l.params.iter().zip(pos) {
                    self.env.insert(p.clone(), v);
                }
                let r = self.eval(&l.body);
                for (p, v) in saved {
                    match v {
                        Some(v) => self.env.insert(p, v),
                        None => self.env.remove(&p),
                    };
                }
                r
            }
            other => Err(type_err(format!("'{}' object is not callable", other.type_name()))),
        }
    }

    /// Binds positional and keyword arguments to `params`; the first
    /// `required` are mandatory.
    fn bind(
        kind: ErrorKind,
        fname: &str,
        params: &[&str],
        required: usize,
        pos: Vec<Value>,
        kw: Vec<(String, Value)>,
    ) -> R<Vec<Option<Value>>> {
        if pos.len() > params.len() {
            return Err(Exc::new(
                kind,
                format!(
                    "{fname}() takes at most {} argument{} ({} given)",
                    params.len(),
                    if params.len() == 1 { "" } else { "s" },
                    pos.len()
                ),
            ));
        }
        let mut slots: Vec<Option<Value>> = vec![None; params.len()];
        for (i, v) in pos.into_iter().enumerate() {
            slots[i] = Some(v);
        }
        for (k, v) in kw {
            let Some(i) = params.iter().position(|p| *p == k) else {
                return Err(Exc::new(
                    kind,
                    format!("{fname}() got an unexpected keyword argument '{k}' (expected: {})", params.join(", ")),
                ));
            };
            if slots[i].is_some() {
                return Err(Exc::new(kind, format!("{fname}() got multiple values for argument '{k}'")));
            }
            slots[i] = Some(v);
        }
        if let Some(i) = (0..required).find(|i| slots[*i].is_none()) {
            return Err(Exc::new(kind, format!("{fname}() missing required argument: '{}'", params[i])));
        }
        Ok(slots)
    }

    fn sort_values(&mut self, items: Vec<Value>, key: Option<&Value>, reverse: bool) -> R<Vec<Value>> {
        let keys = match key {
            Some(k) if !matches!(k, Value::None) => {
                let mut ks = Vec::with_capacity(items.len());
                for it in &items {
                    ks.push(self.call(k, vec![it.clone()], Vec::new())?);
                }
                ks
            }
            _ => items.clone(),
        };
        self.charge(items.len() as u64)?;
        let mut idx: Vec<usize> = (0..items.len()).collect();
        let mut less = |i: usize, j: usize| -> R<bool> {
            self.charge(1)?;
            if reverse {
                self.less(&keys[j], &keys[i])
            } else {
                self.less(&keys[i], &keys[j])
            }
        };
        merge_sort(&mut idx, &mut less)?;
        Ok(idx.into_iter().map(|i| items[i].clone()).collect())
    }

    fn call_builtin(&mut self, b: Builtin, pos: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        let name = b.name();
        let tk = ErrorKind::Type;
        match b {
            Builtin::Print => {
                let mut sep = " ".to_string();
                let mut end = "\n".to_string();
                for (k, v) in kw {
                    let text = match v {
                        Value::None => None,
                        Value::Str(s) => Some(s.to_string()),
                        other => {
                            return Err(type_err(format!("{k} must be None or a string, not {}", other.type_name())))
                        }
                    };
                    match k.as_str() {
                        "sep" => sep = text.unwrap_or_else(|| " ".into()),
                        "end" => end = text.unwrap_or_else(|| "\n".into()),
                        other => return Err(type_err(format!("print() got an unexpected keyword argument '{other}'"))),
                    }
                }
                let mut r = Renderer::new(self.ctx.scene, self.limits.max_output_chars + 1);
                let mut overflowed = false;
                for (i, v) in pos.iter().enumerate() {
                    if i > 0 && r.str(&Value::str(&sep)).is_err() {
                        overflowed = true;
                        break;
                    }
                    if r.str(v).is_err() {
                        overflowed = true;
                        break;
                    }
                }
                let mut line = r.finish();
                self.charge((line.len() / 64) as u64)?;
                if !overflowed {
                    line.push_str(&end);
                }
                self.emit(&line);
                Ok(Value::None)
            }
            Builtin::Len => {
                let a = Self::bind(tk, name, &["obj"], 1, pos, kw)?;
                let n = match a[0].as_ref().expect("required") {
                    Value::Str(s) => s.chars().count(),
                    Value::List(l) => l.borrow().len(),
                    Value::Tuple(t) => t.len(),
                    Value::Set(s) => s.borrow().len(),
                    other => return Err(type_err(format!("object of type '{}' has no len()", other.type_name()))),
                };
                Ok(Value::Int(n as i64))
            }
            Builtin::Sorted => {
                let a = Self::bind(tk, name, &["iterable", "key", "reverse"], 1, pos, kw)?;
                let items = self.iterate(a[0].as_ref().expect("required"))?;
                let reverse = a[2].as_ref().is_some_and(Value::truthy);
                let sorted = self.sort_values(items, a[1].as_ref(), reverse)?;
                Ok(Value::list(sorted))
            }
            Builtin::Min | Builtin::Max => {
                let mut key = None;
                let mut default = None;
                for (k, v) in kw {
                    match k.as_str() {
                        "key" => key = Some(v),
                        "default" => default = Some(v),
                        other => {
                            return Err(type_err(format!("{name}() got an unexpected keyword argument '{other}'")))
                        }
                    }
                }
                let items = match pos.len() {
                    0 => return Err(type_err(format!("{name} expected at least 1 argument, got 0"))),
                    1 => self.iterate(&pos[0])?,
                    _ => pos,
                };
                let mut best: Option<(Value, Value)> = None;
                for it in items {
                    let k = match &key {
                        Some(f) if !matches!(f, Value::None) => self.call(f, vec![it.clone()], Vec::new())?,
                        _ => it.clone(),
                    };
                    best = Some(match best {
                        None => (it, k),
                        Some((bv, bk)) => {
                            let better = if b == Builtin::Max { self.less(&bk, &k)? } else { self.less(&k, &bk)? };
                            if better {
                                (it, k)
                            } else {
                                (bv, bk)
                            }
                        }
                    });
                }
                match (best, default) {
                    (Some((v, _)), _) => Ok(v),
                    (None, Some(d)) => Ok(d),
                    (None, None) => Err(value_err(format!("{name}() arg is an empty sequence"))),
                }
            }
            Builtin::Abs => {
                let a = Self::bind(tk, name, &["x"], 1, pos, kw)?;
                let v = a[0].as_ref().expect("required");
                match v.as_number() {
                    Some(Num::Int(i)) => i.checked_abs().map(Value::Int).ok_or_else(overflow),
                    Some(Num::Float(x)) => Ok(Value::Float(x.abs())),
                    None => Err(type_err(format!("bad operand type for abs(): '{}'", v.type_name()))),
                }
            }
            Builtin::Sum => {
                let a = Self::bind(tk, name, &["iterable", "start"], 1, pos, kw)?;
                let mut acc = a[1].clone().unwrap_or(Value::Int(0));
                if matches!(acc, Value::Str(_)) {
                    return Err(type_err("sum() can't sum strings [use ''.join(seq) instead]"));
                }
                for it in self.iterate(a[0].as_ref().expect("required"))? {
                    if matches!(it, Value::Str(_)) {
                        return Err(type_err("unsupported operand type(s) for +: 'int' and 'str'"));
                    }
                    acc = self.binary(BinOp::Add, acc, it)?;
                }
                Ok(acc)
            }
            Builtin::Round => {
                let a = Self::bind(tk, name, &["number", "ndigits"], 1, pos, kw)?;
                let v = a[0].as_ref().expect("required");
                let nd = match &a[1] {
                    None | Some(Value::None) => None,
                    Some(d) => Some(as_int_arg(d)?),
                };
                match (v.as_number(), nd) {
                    (Some(Num::Int(i)), None) => Ok(Value::Int(i)),
                    (Some(Num::Int(i)), Some(d)) if d >= 0 => Ok(Value::Int(i)),
                    (Some(Num::Int(i)), Some(d)) => {
                        let p = 10i128.checked_pow(u32::try_from(-d).unwrap_or(u32::MAX)).unwrap_or(i128::MAX);
                        let x = i as i128;
                        let q = x.div_euclid(p);
                        let r = x.rem_euclid(p);
                        let q = match (2 * r).cmp(&p) {
                            Ordering::Greater => q + 1,
                            Ordering::Equal if q % 2 != 0 => q + 1,
                            _ => q,
                        };
                        i64::try_from(q.saturating_mul(p)).map(Value::Int).map_err(|_| overflow())
                    }
                    (Some(Num::Float(x)), None) => {
                        if x.is_nan() {
                            return Err(value_err("cannot convert float NaN to integer"));
                        }
                        let r = x.round_ties_even();
                        if !r.is_finite() || r.abs() >= 9.2e18 {
                            return Err(Exc::labelled(
                                ErrorKind::Value,
                                "OverflowError",
                                "cannot convert float infinity to integer",
                            ));
                        }
                        Ok(Value::Int(r as i64))
                    }
                    (Some(Num::Float(x)), Some(d)) => Ok(Value::Float(round_float(x, d))),
                    (None, _) => Err(type_err(format!("type {} doesn't define __round__ method", v.type_name()))),
                }
            }
            Builtin::Set => {
                let a = Self::bind(tk, name, &["iterable"], 0, pos, kw)?;
                let items = match &a[0] {
                    Some(v) => self.iterate(v)?,
                    None => Vec::new(),
                };
                Ok(Value::set(self.set_from(items)?))
            }
            Builtin::List => {
                let a = Self::bind(tk, name, &["iterable"], 0, pos, kw)?;
                let items = match &a[0] {
                    Some(v) => self.iterate(v)?,
                    None => Vec::new(),
                };
                self.new_list(items)
            }
            Builtin::Str => {
                let a = Self::bind(tk, name, &["object"], 0, pos, kw)?;
                match &a[0] {
                    None => Ok(Value::str("")),
                    Some(v) => {
                        let s = self.render(v, false)?;
                        Ok(Value::str(s))
                    }
                }
            }
            Builtin::Int => {
                let a = Self::bind(tk, name, &["x"], 0, pos, kw)?;
                match &a[0] {
                    None => Ok(Value::Int(0)),
                    Some(Value::Int(i)) => Ok(Value::Int(*i)),
                    Some(Value::Bool(b)) => Ok(Value::Int(*b as i64)),
                    Some(Value::Float(x)) => {
                        if x.is_nan() {
                            return Err(value_err("cannot convert float NaN to integer"));
                        }
                        let t = x.trunc();
                        if t.abs() >= 9.2e18 {
                            return Err(Exc::labelled(
                                ErrorKind::Value,
                                "OverflowError",
                                "cannot convert float infinity to integer",
                            ));
                        }
                        Ok(Value::Int(t as i64))
                    }
                    Some(Value::Str(s)) => s
                        .trim()
                        .replace('_', "")
                        .parse::<i64>()
                        .map(Value::Int)
                        .map_err(|_| value_err(format!("invalid literal for int() with base 10: {}", str_repr(s)))),
                    Some(other) => Err(type_err(format!(
                        "int() argument must be a string or a real number, not '{}'",
                        other.type_name()
                    ))),
                }
            }
            Builtin::Float => {
                let a = Self::bind(tk, name, &["x"], 0, pos, kw)?;
                match &a[0] {
                    None => Ok(Value::Float(0.0)),
                    Some(Value::Str(s)) => s
                        .trim()
                        .parse::<f64>()
                        .map(Value::Float)
                        .map_err(|_| value_err(format!("could not convert string to float: {}", str_repr(s)))),
                    Some(v) => match v.as_number() {
                        Some(n) => Ok(Value::Float(n.as_f64())),
                        None => Err(type_err(format!(
                            "float() argument must be a string or a real number, not '{}'",
                            v.type_name()
                        ))),
                    },
                }
            }
            Builtin::Enumerate => {
                let a = Self::bind(tk, name, &["iterable", "start"], 1, pos, kw)?;
                let start = match &a[1] {
                    Some(v) => as_int_arg(v)?,
                    None => 0,
                };
                let items = self.iterate(a[0].as_ref().expect("required"))?;
                let mut out = Vec::with_capacity(items.len());
                for (i, v) in items.into_iter().enumerate() {
                    let n = start.checked_add(i as i64).ok_or_else(overflow)?;
                    out.push(Value::tuple(vec![Value::Int(n), v]));
                }
                Ok(Value::list(out))
            }
            Builtin::Range => {
                if !kw.is_empty() {
                    return Err(type_err("range() takes no keyword arguments"));
                }
                let nums = pos.iter().map(as_int_arg).collect::<R<Vec<i64>>>()?;
                let (start, stop, step) = match nums.as_slice() {
                    [stop] => (0, *stop, 1),
                    [start, stop] => (*start, *stop, 1),
                    [start, stop, step] => (*start, *stop, *step),
                    _ => return Err(type_err(format!("range expected 1 to 3 arguments, got {}", nums.len()))),
                };
                if step == 0 {
                    return Err(value_err("range() arg 3 must not be zero"));
                }
                let (s, e, st) = (start as i128, stop as i128, step as i128);
                let len = if st > 0 { ((e - s).max(0) + st - 1) / st } else { ((s - e).max(0) + (-st) - 1) / (-st) };
                self.check_len(usize::try_from(len).unwrap_or(usize::MAX))?;
                self.charge(len as u64)?;
                Ok(Value::list((0..len).map(|k| Value::Int((s + k * st) as i64)).collect()))
            }
            Builtin::Any | Builtin::All => {
                let a = Self::bind(tk, name, &["iterable"], 1, pos, kw)?;
                let items = self.iterate(a[0].as_ref().expect("required"))?;
                Ok(Value::Bool(if b == Builtin::Any {
                    items.iter().any(Value::truthy)
                } else {
                    items.iter().all(Value::truthy)
                }))
            }
            _ => unreachable!("API builtins are dispatched separately"),
        }
    }

    // -------------------------------------------------------------------- API

    fn api_objects(fname: &str, param: &str, v: &Value) -> R<Vec<ObjectId>> {
        let api = |m: String| Exc::new(ErrorKind::Api, m);
        let items: Vec<Value> = match v {
            Value::Set(s) => s.borrow().values().cloned().collect(),
            Value::List(l) => l.borrow().clone(),
            Value::Tuple(t) => t.to_vec(),
            Value::Object(_) => {
                return Err(api(format!(
                    "{fname}(): {param} must be a set of objects, got a single ObjectAttribute (wrap it as {{obj}})"
                )))
            }
            other => {
                return Err(api(format!("{fname}(): {param} must be a set of objects, got {}", other.type_name())))
            }
        };
        items
            .iter()
            .map(|x| match x {
                Value::Object(id) => Ok(*id),
                other => Err(api(format!("{fname}(): {param} must contain only objects, found {}", other.type_name()))),
            })
            .collect()
    }

    fn api_object(fname: &str, param: &str, v: &Value) -> R<ObjectId> {
        match v {
            Value::Object(id) => Ok(*id),
            Value::Set(_) | Value::List(_) | Value::Tuple(_) => Err(Exc::new(
                ErrorKind::Api,
                format!(
                    "{fname}(): {param} must be a single ObjectAttribute, got {} (iterate over it to pick one object)",
                    v.type_name()
                ),
            )),
            other => Err(Exc::new(
                ErrorKind::Api,
                format!("{fname}(): {param} must be a single ObjectAttribute, got {}", other.type_name()),
            )),
        }
    }

    fn api_str(fname: &str, param: &str, v: &Value) -> R<String> {
        match v {
            Value::Str(s) => Ok(s.to_string()),
            other => {
                Err(Exc::new(ErrorKind::Api, format!("{fname}(): {param} must be a string, got {}", other.type_name())))
            }
        }
    }

    fn api_str_list(fname: &str, param: &str, v: Option<&Value>) -> R<Option<Vec<String>>> {
        let items: Vec<Value> = match v {
            None | Some(Value::None) => return Ok(None),
            Some(Value::List(l)) => l.borrow().clone(),
            Some(Value::Tuple(t)) => t.to_vec(),
            Some(Value::Set(s)) => s.borrow().values().cloned().collect(),
            Some(other) => {
                return Err(Exc::new(
                    ErrorKind::Api,
                    format!("{fname}(): {param} must be a list of strings, got {}", other.type_name()),
                ))
            }
        };
        items.iter().map(|x| Self::api_str(fname, param, x)).collect::<R<Vec<_>>>().map(Some)
    }

    fn object_set(ids: Vec<ObjectId>) -> Value {
        Value::set(ids.into_iter().map(|id| (Key::Object(id.0), Value::Object(id))).collect())
    }

    fn call_api(&mut self, b: Builtin, pos: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        let name = b.name();
        let ak = ErrorKind::Api;
        let ctx = self.ctx;
        let api = |e: api::ApiError| Exc::new(ErrorKind::Api, format!("{name}(): {}", e.0));
        let strs = |v: Vec<String>| Value::list(v.into_iter().map(Value::str).collect());
        match b {
            Builtin::Scene => {
                Self::bind(ak, name, &[], 0, pos, kw)?;
                let ids = api::scene_all(ctx);
                self.charge(ids.len() as u64)?;
                Ok(Self::object_set(ids))
            }
            Builtin::Filter => {
                let a = Self::bind(ak, name, &["object_set", "category"], 2, pos, kw)?;
                let ids = Self::api_objects(name, "object_set", a[0].as_ref().expect("required"))?;
                let cat = Self::api_str(name, "category", a[1].as_ref().expect("required"))?;
                self.charge(ids.len() as u64)?;
                Ok(Self::object_set(api::filter(ctx, &ids, &cat).map_err(api)?))
            }
            Builtin::Relate => {
                let a = Self::bind(ak, name, &["object_set", "reference_object", "relation"], 3, pos, kw)?;
                let ids = Self::api_objects(name, "object_set", a[0].as_ref().expect("required"))?;
                let reference = Self::api_object(name, "reference_object", a[1].as_ref().expect("required"))?;
                let rel = Self::api_str(name, "relation", a[2].as_ref().expect("required"))?;
                self.charge(ids.len() as u64)?;
                Ok(Self::object_set(api::relate(ctx, &ids, reference, &rel).map_err(api)?))
            }
            Builtin::RelateAgent => {
                let a = Self::bind(ak, name, &["object_set", "relation"], 2, pos, kw)?;
                let ids = Self::api_objects(name, "object_set", a[0].as_ref().expect("required"))?;
                let rel = Self::api_str(name, "relation", a[1].as_ref().expect("required"))?;
                self.charge(ids.len() as u64)?;
                Ok(Self::object_set(api::relate_agent(ctx, &ids, &rel).map_err(api)?))
            }
            Builtin::QueryRelation => {
                let a = Self::bind(ak, name, &["object", "reference_object", "candidate_relations"], 2, pos, kw)?;
                let obj = Self::api_object(name, "object", a[0].as_ref().expect("required"))?;
                let reference = Self::api_object(name, "reference_object", a[1].as_ref().expect("required"))?;
                let cands = Self::api_str_list(name, "candidate_relations", a[2].as_ref())?;
                Ok(strs(api::query_relation(ctx, obj, reference, cands.as_deref()).map_err(api)?))
            }
            Builtin::QueryRelationAgent => {
                let a = Self::bind(ak, name, &["object", "candidate_relations"], 1, pos, kw)?;
                let obj = Self::api_object(name, "object", a[0].as_ref().expect("required"))?;
                let cands = Self::api_str_list(name, "candidate_relations", a[1].as_ref())?;
                Ok(strs(api::query_relation_agent(ctx, obj, cands.as_deref()).map_err(api)?))
            }
            Builtin::QueryAttribute => {
                let a = Self::bind(ak, name, &["object", "attribute_type", "candidate_attribute_values"], 2, pos, kw)?;
                let obj = Self::api_object(name, "object", a[0].as_ref().expect("required"))?;
                let kind = Self::api_str(name, "attribute_type", a[1].as_ref().expect("required"))?;
                let cands = Self::api_str_list(name, "candidate_attribute_values", a[2].as_ref())?;
                Ok(match api::query_attribute(ctx, obj, &kind, cands.as_deref()).map_err(api)? {
                    AttributeValue::Lwh(l) => Value::list(l.iter().map(|x| Value::Float(*x)).collect()),
                    AttributeValue::Distance(d) => Value::Float(d),
                    AttributeValue::Text(t) => Value::str(t),
                })
            }
            Builtin::QueryState => {
                let a = Self::bind(ak, name, &["object", "candidate_states"], 2, pos, kw)?;
                let obj = Self::api_object(name, "object", a[0].as_ref().expect("required"))?;
                let cands = Self::api_str_list(name, "candidate_states", a[1].as_ref())?.unwrap_or_default();
                Ok(Value::str(api::query_state(ctx, obj, &cands).map_err(api)?))
            }
            _ => unreachable!("only API builtins reach call_api"),
        }
    }

    // ---------------------------------------------------------------- methods

    fn call_method(&mut self, recv: &Value, m: &str, pos: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        let tk = ErrorKind::Type;
        let fname = format!("{}.{m}", recv.type_name());
        let fname = fname.as_str();
        match recv {
            Value::List(l) => match m {
                "append" => {
                    let a = Self::bind(tk, fname, &["object"], 1, pos, kw)?;
                    let n = l.borrow().len() + 1;
                    self.check_len(n)?;
                    l.borrow_mut().push(a[0].clone().expect("required"));
                    Ok(Value::None)
                }
                "extend" => {
                    let a = Self::bind(tk, fname, &["iterable"], 1, pos, kw)?;
                    let items = self.iterate(a[0].as_ref().expect("required"))?;
                    let n = l.borrow().len() + items.len();
                    self.check_len(n)?;
                    l.borrow_mut().extend(items);
                    Ok(Value::None)
                }
                "insert" => {
                    let a = Self::bind(tk, fname, &["index", "object"], 2, pos, kw)?;
                    let i = as_int_arg(a[0].as_ref().expect("required"))?;
                    let n = l.borrow().len() as i64;
                    self.check_len(n as usize + 1)?;
                    let j = if i < 0 { (i + n).max(0) } else { i.min(n) };
                    l.borrow_mut().insert(j as usize, a[1].clone().expect("required"));
                    Ok(Value::None)
                }
                "pop" => {
                    let a = Self::bind(tk, fname, &["index"], 0, pos, kw)?;
                    let i = match &a[0] {
                        Some(v) => as_int_arg(v)?,
                        None => -1,
                    };
                    let mut l = l.borrow_mut();
                    if l.is_empty() {
                        return Err(index_err("pop from empty list"));
                    }
                    let j = norm_index(i, l.len(), "pop")?;
                    Ok(l.remove(j))
                }
                "remove" => {
                    let a = Self::bind(tk, fname, &["value"], 1, pos, kw)?;
                    let x = a[0].as_ref().expect("required");
                    let pos = l.borrow().iter().position(|v| py_eq(v, x, 0));
                    match pos {
                        Some(p) => {
                            l.borrow_mut().remove(p);
                            Ok(Value::None)
                        }
                        None => Err(value_err("list.remove(x): x not in list")),
                    }
                }
                "index" | "count" => {
                    let items = l.borrow().clone();
                    self.seq_index_count(&items, m, fname, pos, kw, "list")
                }
                "sort" => {
                    let a = Self::bind(tk, fname, &["key", "reverse"], 0, Vec::new(), kw)?;
                    if !pos.is_empty() {
                        return Err(type_err("sort() takes no positional arguments"));
                    }
                    let items = l.borrow().clone();
                    let reverse = a[1].as_ref().is_some_and(Value::truthy);
                    let sorted = self.sort_values(items, a[0].as_ref(), reverse)?;
                    *l.borrow_mut() = sorted;
                    Ok(Value::None)
                }
                "copy" => {
                    Self::bind(tk, fname, &[], 0, pos, kw)?;
                    Ok(Value::list(l.borrow().clone()))
                }
                "clear" => {
                    Self::bind(tk, fname, &[], 0, pos, kw)?;
                    l.borrow_mut().clear();
                    Ok(Value::None)
                }
                "reverse" => {
                    Self::bind(tk, fname, &[], 0, pos, kw)?;
                    l.borrow_mut().reverse();
                    Ok(Value::None)
                }
                _ => Err(attr_err(format!("'list' object has no attribute '{m}'"))),
            },
            Value::Tuple(t) => {
                let items = t.to_vec();
                self.seq_index_count(&items, m, fname, pos, kw, "tuple")
            }
            Value::Set(s) => self.set_method(s, m, fname, pos, kw),
            Value::Str(s) => self.str_method(s, m, fname, pos, kw),
            other => Err(attr_err(format!("'{}' object has no attribute '{m}'", other.type_name()))),
        }
    }

    fn seq_index_count(
        &mut self,
        items: &[Value],
        m: &str,
        fname: &str,
        pos: Vec<Value>,
        kw: Vec<(String, Value)>,
        tname: &str,
    ) -> R<Value> {
        let a = Self::bind(ErrorKind::Type, fname, &["value"], 1, pos, kw)?;
        let x = a[0].as_ref().expect("required");
        self.charge(items.len() as u64)?;
        if m == "count" {
            return Ok(Value::Int(items.iter().filter(|v| py_eq(v, x, 0)).count() as i64));
        }
        match items.iter().position(|v| py_eq(v, x, 0)) {
            Some(p) => Ok(Value::Int(p as i64)),
            None => {
                let r = self.render(x, true)?;
                Err(value_err(format!("{r} is not in {tname}")))
            }
        }
    }

    fn set_method(&mut self, s: &SetRef, m: &str, fname: &str, pos: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        let tk = ErrorKind::Type;
        match m {
            "add" | "remove" | "discard" => {
                let a = Self::bind(tk, fname, &["elem"], 1, pos, kw)?;
                let v = a[0].clone().expect("required");
                let k = v.key().map_err(type_err)?;
                match m {
                    "add" => {
                        let n = s.borrow().len() + 1;
                        if !s.borrow().contains_key(&k) {
                            self.check_len(n)?;
                        }
                        s.borrow_mut().entry(k).or_insert(v);
                    }
                    "remove" => {
                        if s.borrow_mut().remove(&k).is_none() {
                            let r = self.render(&v, true)?;
                            return Err(key_err(r));
                        }
                    }
                    _ => {
                        s.borrow_mut().remove(&k);
                    }
                }
                Ok(Value::None)
            }
            "update" => {
                if !kw.is_empty() {
                    return Err(type_err("set.update() takes no keyword arguments"));
                }
                for it in pos {
                    let items = self.iterate(&it)?;
                    let add = self.set_from(items)?;
                    let mut b = s.borrow_mut();
                    for (k, v) in add {
                        b.entry(k).or_insert(v);
                    }
                    let n = b.len();
                    drop(b);
                    self.check_len(n)?;
                }
                Ok(Value::None)
            }
            "union" | "intersection" | "difference" | "symmetric_difference" => {
                if !kw.is_empty() {
                    return Err(type_err(format!("{fname}() takes no keyword arguments")));
                }
                if m == "symmetric_difference" && pos.len() != 1 {
                    return Err(type_err("set.symmetric_difference() takes exactly one argument"));
                }
                let mut acc = s.borrow().clone();
                for it in pos {
                    let items = self.iterate(&it)?;
                    let other = self.set_from(items)?;
                    acc = match m {
                        "union" => {
                            let mut a = acc;
                            for (k, v) in other {
                                a.entry(k).or_insert(v);
                            }
                            a
                        }
                        "intersection" => acc.into_iter().filter(|(k, _)| other.contains_key(k)).collect(),
                        "difference" => acc.into_iter().filter(|(k, _)| !other.contains_key(k)).collect(),
                        _ => {
                            let mut a: BTreeMap<Key, Value> = acc
                                .iter()
                                .filter(|(k, _)| !other.contains_key(k))
                                .map(|(k, v)| (k.clone(), v.clone()))
                                .collect();
                            for (k, v) in other {
                                if !acc.contains_key(&k) {
                                    a.insert(k, v);
                                }
                            }
                            a
                        }
                    };
                    self.check_len(acc.len())?;
                }
                Ok(Value::set(acc))
            }
            "issubset" | "issuperset" | "isdisjoint" => {
                let a = Self::bind(tk, fname, &["other"], 1, pos, kw)?;
                let items = self.iterate(a[0].as_ref().expect("required"))?;
                let other = self.set_from(items)?;
                let me = s.borrow();
                Ok(Value::Bool(match m {
                    "issubset" => me.keys().all(|k| other.contains_key(k)),
                    "issuperset" => other.keys().all(|k| me.contains_key(k)),
                    _ => me.keys().all(|k| !other.contains_key(k)),
                }))
            }
            "copy" => {
                Self::bind(tk, fname, &[], 0, pos, kw)?;
                Ok(Value::set(s.borrow().clone()))
            }
            "clear" => {
                Self::bind(tk, fname, &[], 0, pos, kw)?;
                s.borrow_mut().clear();
                Ok(Value::None)
            }
            "pop" => {
                Self::bind(tk, fname, &[], 0, pos, kw)?;
                let first = s.borrow_mut().pop_first();
                first.map(|(_, v)| v).ok_or_else(|| key_err("'pop from an empty set'"))
            }
            _ => Err(attr_err(format!("'set' object has no attribute '{m}'"))),
        }
    }

    fn str_method(&mut self, s: &Rc<str>, m: &str, fname: &str, pos: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        let tk = ErrorKind::Type;
        let want_str = |v: &Value, what: &str| -> R<String> {
            match v {
                Value::Str(x) => Ok(x.to_string()),
                other => Err(type_err(format!("{what} must be str, not {}", other.type_name()))),
            }
        };
        self.charge((s.len() / 64) as u64)?;
        match m {
            "join" => {
                let a = Self::bind(tk, fname, &["iterable"], 1, pos, kw)?;
                let items = self.iterate(a[0].as_ref().expect("required"))?;
                let mut parts = Vec::with_capacity(items.len());
                let mut total = 0usize;
                for (i, it) in items.iter().enumerate() {
                    match it {
                        Value::Str(x) => {
                            total += x.chars().count();
                            parts.push(x.to_string());
                        }
                        other => {
                            return Err(type_err(format!(
                                "sequence item {i}: expected str instance, {} found",
                                other.type_name()
                            )))
                        }
                    }
                }
                total += s.chars().count() * parts.len().saturating_sub(1);
                self.check_len(total)?;
                Ok(Value::str(parts.join(s)))
            }
            "lower" | "upper" | "title" | "capitalize" | "isdigit" | "isalpha" | "isnumeric" | "splitlines" => {
                Self::bind(tk, fname, &[], 0, pos, kw)?;
                Ok(match m {
                    "lower" => Value::str(s.to_lowercase()),
                    "upper" => Value::str(s.to_uppercase()),
                    "title" => Value::str(title_case(s)),
                    "capitalize" => {
                        let mut c = s.chars();
                        Value::str(match c.next() {
                            Some(f) => f.to_uppercase().chain(c.flat_map(char::to_lowercase)).collect::<String>(),
                            None => String::new(),
                        })
                    }
                    "isdigit" | "isnumeric" => Value::Bool(!s.is_empty() && s.chars().all(|c| c.is_ascii_digit())),
                    "isalpha" => Value::Bool(!s.is_empty() && s.chars().all(char::is_alphabetic)),
                    _ => Value::list(s.lines().map(Value::str).collect()),
                })
            }
            "strip" | "lstrip" | "rstrip" => {
                let a = Self::bind(tk, fname, &["chars"], 0, pos, kw)?;
                let chars: Option<Vec<char>> = match &a[0] {
                    None | Some(Value::None) => None,
                    Some(v) => Some(want_str(v, "strip arg")?.chars().collect()),
                };
                let pred = |c: char| match &chars {
                    Some(cs) => cs.contains(&c),
                    None => c.is_whitespace(),
                };
                Ok(Value::str(match m {
                    "strip" => s.trim_matches(pred),
                    "lstrip" => s.trim_start_matches(pred),
                    _ => s.trim_end_matches(pred),
                }))
            }
            "split" => {
                let a = Self::bind(tk, fname, &["sep", "maxsplit"], 0, pos, kw)?;
                let maxsplit = match &a[1] {
                    Some(v) => as_int_arg(v)?,
                    None => -1,
                };
                let parts: Vec<String> = match &a[0] {
                    None | Some(Value::None) => {
                        let mut out: Vec<String> = Vec::new();
                        let mut rest = s.trim_start();
                        while !rest.is_empty() {
                            if maxsplit >= 0 && out.len() as i64 == maxsplit {
                                out.push(rest.to_string());
                                break;
                            }
                            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
                            out.push(rest[..end].to_string());
                            rest = rest[end..].trim_start();
                        }
                        out
                    }
                    Some(v) => {
                        let sep = want_str(v, "separator")?;
                        if sep.is_empty() {
                            return Err(value_err("empty separator"));
                        }
                        if maxsplit >= 0 {
                            s.splitn(maxsplit.saturating_add(1) as usize, sep.as_str()).map(str::to_string).collect()
                        } else {
                            s.split(sep.as_str()).map(str::to_string).collect()
                        }
                    }
                };
                self.new_list(parts.into_iter().map(Value::str).collect())
            }
            "replace" => {
                let a = Self::bind(tk, fname, &["old", "new", "count"], 2, pos, kw)?;
                let old = want_str(a[0].as_ref().expect("required"), "replace() argument 1")?;
                let new = want_str(a[1].as_ref().expect("required"), "replace() argument 2")?;
                let count = match &a[2] {
                    Some(v) => as_int_arg(v)?,
                    None => -1,
                };
                let occurrences = if old.is_empty() { s.chars().count() + 1 } else { s.matches(old.as_str()).count() };
                let n = if count >= 0 { occurrences.min(count as usize) } else { occurrences };
                let len = s.chars().count() + n * new.chars().count();
                self.check_len(len)?;
                Ok(Value::str(if count >= 0 {
                    s.replacen(old.as_str(), &new, count as usize)
                } else {
                    s.replace(old.as_str(), &new)
                }))
            }
            "startswith" | "endswith" => {
                let a = Self::bind(tk, fname, &["prefix"], 1, pos, kw)?;
                let options: Vec<String> = match a[0].as_ref().expect("required") {
                    Value::Tuple(t) => t.iter().map(|x| want_str(x, "tuple item")).collect::<R<_>>()?,
                    v => vec![want_str(v, &format!("{m} arg"))?],
                };
                Ok(Value::Bool(options.iter().any(|p| {
                    if m == "startswith" {
                        s.starts_with(p.as_str())
                    } else {
                        s.ends_with(p.as_str())
                    }
                })))
            }
            "count" | "find" => {
                let a = Self::bind(tk, fname, &["sub"], 1, pos, kw)?;
                let sub = want_str(a[0].as_ref().expect("required"), "substring")?;
                Ok(Value::Int(if m == "count" {
                    if sub.is_empty() {
                        s.chars().count() as i64 + 1
                    } else {
                        s.matches(sub.as_str()).count() as i64
                    }
                } else {
                    match s.find(sub.as_str()) {
                        Some(b) => s[..b].chars().count() as i64,
                        None => -1,
                    }
                }))
            }
            "format" => self.str_format(s, pos, kw),
            _ => Err(attr_err(format!("'str' object has no attribute '{m}'"))),
        }
    }

    fn str_format(&mut self, template: &str, pos: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        let chars: Vec<char> = template.chars().collect();
        let mut out = String::new();
        let mut auto = 0usize;
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c == '{' && chars.get(i + 1) == Some(&'{') {
                out.push('{');
                i += 2;
                continue;
            }
            if c == '}' && chars.get(i + 1) == Some(&'}') {
                out.push('}');
                i += 2;
                continue;
            }
            if c == '}' {
                return Err(value_err("Single '}' encountered in format string"));
            }
            if c != '{' {
                out.push(c);
                i += 1;
                continue;
            }
            let Some(len) = chars[i + 1..].iter().position(|c| *c == '}') else {
                return Err(value_err("Single '{' encountered in format string"));
            };
            let field: String = chars[i + 1..i + 1 + len].iter().collect();
            i += len + 2;
            let (head, spec) = field.split_once(':').unwrap_or((&field, ""));
            let (name, conv) = match head.split_once('!') {
                Some((n, c)) => (n, Some(c)),
                None => (head, None),
            };
            let v = if name.is_empty() {
                let v = pos.get(auto).cloned().ok_or_else(|| {
                    index_err(format!("Replacement index {auto} out of range for positional args tuple"))
                })?;
                auto += 1;
                v
            } else if let Ok(n) = name.parse::<usize>() {
                pos.get(n)
                    .cloned()
                    .ok_or_else(|| index_err(format!("Replacement index {n} out of range for positional args tuple")))?
            } else {
                kw.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone()).ok_or_else(|| key_err(str_repr(name)))?
            };
            let repr = conv == Some("r");
            let text = self.render(&v, repr)?;
            let formatted =
                if repr { apply_format(&Value::str(&text), &text, spec) } else { apply_format(&v, &text, spec) }
                    .map_err(value_err)?;
            out.push_str(&formatted);
            self.check_len(out.chars().count())?;
        }
        self.new_str(out)
    }
}
