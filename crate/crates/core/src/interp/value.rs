//! Runtime values, Python-compatible rendering, and set keys.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write;
use std::rc::Rc;

use super::ast::Lambda;
use crate::scene::{ObjectId, Scene};

pub type ListRef = Rc<RefCell<Vec<Value>>>;
pub type SetRef = Rc<RefCell<BTreeMap<Key, Value>>>;

/// Whitelisted builtins plus the scene-query API.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Print,
    Len,
    Sorted,
    Min,
    Max,
    Abs,
    Sum,
    Round,
    Set,
    List,
    Str,
    Int,
    Float,
    Enumerate,
    Range,
    Any,
    All,
    Scene,
    Filter,
    Relate,
    RelateAgent,
    QueryRelation,
    QueryRelationAgent,
    QueryAttribute,
    QueryState,
}

impl Builtin {
    pub const ALL: [(&'static str, Builtin); 25] = [
        ("print", Builtin::Print),
        ("len", Builtin::Len),
        ("sorted", Builtin::Sorted),
        ("min", Builtin::Min),
        ("max", Builtin::Max),
        ("abs", Builtin::Abs),
        ("sum", Builtin::Sum),
        ("round", Builtin::Round),
        ("set", Builtin::Set),
        ("list", Builtin::List),
        ("str", Builtin::Str),
        ("int", Builtin::Int),
        ("float", Builtin::Float),
        ("enumerate", Builtin::Enumerate),
        ("range", Builtin::Range),
        ("any", Builtin::Any),
        ("all", Builtin::All),
        ("scene", Builtin::Scene),
        ("filter", Builtin::Filter),
        ("relate", Builtin::Relate),
        ("relate_agent", Builtin::RelateAgent),
        ("query_relation", Builtin::QueryRelation),
        ("query_relation_agent", Builtin::QueryRelationAgent),
        ("query_attribute", Builtin::QueryAttribute),
        ("query_state", Builtin::QueryState),
    ];

    pub fn lookup(name: &str) -> Option<Builtin> {
        Self::ALL.iter().find(|(n, _)| *n == name).map(|(_, b)| *b)
    }

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, b)| *b == self).map(|(n, _)| *n).expect("every builtin is listed")
    }

    pub fn is_api(self) -> bool {
        matches!(
            self,
            Builtin::Scene
                | Builtin::Filter
                | Builtin::Relate
                | Builtin::RelateAgent
                | Builtin::QueryRelation
                | Builtin::QueryRelationAgent
                | Builtin::QueryAttribute
                | Builtin::QueryState
        )
    }
}

#[derive(Debug)]
pub struct BoundMethod {
    pub recv: Value,
    pub name: String,
}

#[derive(Debug, Clone)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Rc<str>),
    List(ListRef),
    Tuple(Rc<[Value]>),
    Set(SetRef),
    Object(ObjectId),
    Builtin(Builtin),
    Method(Rc<BoundMethod>),
    Lambda(Rc<Lambda>),
}

impl Value {
    pub fn str(s: impl AsRef<str>) -> Value {
        Value::Str(Rc::from(s.as_ref()))
    }

    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Rc::new(RefCell::new(items)))
    }

    pub fn tuple(items: Vec<Value>) -> Value {
        Value::Tuple(Rc::from(items))
    }

    pub fn set(items: BTreeMap<Key, Value>) -> Value {
        Value::Set(Rc::new(RefCell::new(items)))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::None => "NoneType",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Tuple(_) => "tuple",
            Value::Set(_) => "set",
            Value::Object(_) => "ObjectAttribute",
            Value::Builtin(_) => "builtin_function_or_method",
            Value::Method(_) => "builtin_function_or_method",
            Value::Lambda(_) => "function",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Float(x) => *x != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::List(l) => !l.borrow().is_empty(),
            Value::Tuple(t) => !t.is_empty(),
            Value::Set(s) => !s.borrow().is_empty(),
            _ => true,
        }
    }

    /// Numeric view: bools behave as integers.
    pub fn as_number(&self) -> Option<Num> {
        match self {
            Value::Bool(b) => Some(Num::Int(*b as i64)),
            Value::Int(i) => Some(Num::Int(*i)),
            Value::Float(x) => Some(Num::Float(*x)),
            _ => None,
        }
    }

    pub fn key(&self) -> Result<Key, String> {
        Ok(match self {
            Value::None => Key::None,
            Value::Bool(b) => Key::Num(NumKey::Int(*b as i64)),
            Value::Int(i) => Key::Num(NumKey::Int(*i)),
            Value::Float(x) => Key::Num(NumKey::from_f64(*x)),
            Value::Str(s) => Key::Str(s.clone()),
            Value::Tuple(items) => Key::Tuple(items.iter().map(Value::key).collect::<Result<_, _>>()?),
            Value::Object(id) => Key::Object(id.0),
            Value::Builtin(b) => Key::Builtin(b.name()),
            other => return Err(format!("unhashable type: '{}'", other.type_name())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Num {
    Int(i64),
    Float(f64),
}

impl Num {
    pub fn as_f64(self) -> f64 {
        match self {
            Num::Int(i) => i as f64,
            Num::Float(x) => x,
        }
    }

    pub fn into_value(self) -> Value {
        match self {
            Num::Int(i) => Value::Int(i),
            Num::Float(x) => Value::Float(x),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum NumKey {
    Int(i64),
    Float(f64),
}

impl NumKey {
    fn from_f64(x: f64) -> NumKey {
        if x.fract() == 0.0 && x.abs() < 9.2e18 {
            NumKey::Int(x as i64)
        } else {
            NumKey::Float(x)
        }
    }
}

impl Ord for NumKey {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (NumKey::Int(a), NumKey::Int(b)) => a.cmp(b),
            (NumKey::Float(a), NumKey::Float(b)) => a.total_cmp(b),
            (NumKey::Int(a), NumKey::Float(b)) => (*a as f64).total_cmp(b).then(Ordering::Less),
            (NumKey::Float(a), NumKey::Int(b)) => a.total_cmp(&(*b as f64)).then(Ordering::Greater),
        }
    }
}

impl PartialOrd for NumKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for NumKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for NumKey {}

/// Hashable projection of a value. Variant order fixes iteration order of
/// mixed sets; within a variant, objects sort by id and strings
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Key {
    None,
    Num(NumKey),
    Str(Rc<str>),
    Tuple(Vec<Key>),
    Object(u32),
    Builtin(&'static str),
}

// ------------------------------------------------------------------ floats

/// Python's `repr(float)`: shortest round-trip digits, exponent outside
/// `1e-4 <= |x| < 1e16`.
pub fn float_repr(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:e}", x.abs());
    let (mant, exp) = sci.split_once('e').expect("exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mant.chars().filter(|c| *c != '.').collect();
    let sign = if x < 0.0 { "-" } else { "" };
    if (-4..16).contains(&exp) {
        let body = if exp >= 0 {
            let e = exp as usize;
            if digits.len() > e + 1 {
                format!("{}.{}", &digits[..=e], &digits[e + 1..])
            } else {
                format!("{}{}.0", digits, "0".repeat(e + 1 - digits.len()))
            }
        } else {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        };
        format!("{sign}{body}")
    } else {
        let m = if digits.len() > 1 { format!("{}.{}", &digits[..1], &digits[1..]) } else { digits };
        let esign = if exp < 0 { '-' } else { '+' };
        format!("{sign}{m}e{esign}{:02}", exp.abs())
    }
}

/// Round half to even at `ndigits` decimal places, as Python's `round`.
pub fn round_float(x: f64, ndigits: i64) -> f64 {
    if !x.is_finite() || ndigits > 300 {
        return x;
    }
    if ndigits < -308 {
        return 0.0 * x;
    }
    // Formatting is correctly rounded (ties to even on the exact binary value),
    // matching CPython's algorithm.
    if ndigits >= 0 {
        format!("{:.*}", ndigits as usize, x).parse().unwrap_or(x)
    } else {
        let p = 10f64.powi((-ndigits) as i32);
        let y = x / p;
        let r = y.round();
        let r = if (y - y.trunc()).abs() == 0.5 { 2.0 * (y / 2.0).round() } else { r };
        r * p
    }
}

// ---------------------------------------------------------------- rendering

/// Error raised when a rendering exceeds its character budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TooLong;

pub struct Renderer<'a> {
    pub scene: &'a Scene,
    pub budget: usize,
    out: String,
    len: usize,
    stack: Vec<*const ()>,
}

impl<'a> Renderer<'a> {
    pub fn new(scene: &'a Scene, budget: usize) -> Self {
        Renderer { scene, budget, out: String::new(), len: 0, stack: Vec::new() }
    }

    pub fn finish(self) -> String {
        self.out
    }

    fn push(&mut self, s: &str) -> Result<(), TooLong> {
        let n = s.chars().count();
        if self.len + n > self.budget {
            let take = self.budget - self.len;
            self.out.extend(s.chars().take(take));
            self.len = self.budget;
            return Err(TooLong);
        }
        self.len += n;
        self.out.push_str(s);
        Ok(())
    }

    pub fn str(&mut self, v: &Value) -> Result<(), TooLong> {
        match v {
            Value::Str(s) => self.push(s),
            other => self.repr(other),
        }
    }

    fn seq(&mut self, ptr: *const (), open: &str, items: &[Value], close: &str, trailing: bool) -> Result<(), TooLong> {
        if self.stack.contains(&ptr) {
            return self.push(&format!("{open}...{close}"));
        }
        self.stack.push(ptr);
        self.push(open)?;
        for (i, item) in items.iter().enumerate() {
            if i > 0 {
                self.push(", ")?;
            }
            self.repr(item)?;
        }
        if trailing && items.len() == 1 {
            self.push(",")?;
        }
        self.stack.pop();
        self.push(close)
    }

    pub fn repr(&mut self, v: &Value) -> Result<(), TooLong> {
        match v {
            Value::None => self.push("None"),
            Value::Bool(b) => self.push(if *b { "True" } else { "False" }),
            Value::Int(i) => self.push(&i.to_string()),
            Value::Float(x) => self.push(&float_repr(*x)),
            Value::Str(s) => self.push(&str_repr(s)),
            Value::List(l) => {
                let items = l.borrow().clone();
                self.seq(Rc::as_ptr(l) as *const (), "[", &items, "]", false)
            }
            Value::Tuple(t) => self.seq(t.as_ptr() as *const (), "(", t, ")", true),
            Value::Set(s) => {
                let items: Vec<Value> = s.borrow().values().cloned().collect();
                if items.is_empty() {
                    return self.push("set()");
                }
                self.seq(Rc::as_ptr(s) as *const (), "{", &items, "}", false)
            }
            Value::Object(id) => match self.scene.object(*id) {
                Some(o) => {
                    let c = o.center();
                    let text = format!(
                        "ObjectAttribute(id={}, category={}, xyz=[{}, {}, {}])",
                        id.0,
                        str_repr(&o.category),
                        float_repr(c.x),
                        float_repr(c.y),
                        float_repr(c.z)
                    );
                    self.push(&text)
                }
                None => self.push(&format!("ObjectAttribute(id={})", id.0)),
            },
            Value::Builtin(b) => self.push(&format!("<built-in function {}>", b.name())),
            Value::Method(m) => self.push(&format!("<built-in method {} of {} object>", m.name, m.recv.type_name())),
            Value::Lambda(_) => self.push("<function <lambda>>"),
        }
    }
}

pub fn str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

// ------------------------------------------------------------ format specs

#[derive(Debug, Default, PartialEq)]
struct Spec {
    fill: Option<char>,
    align: Option<char>,
    sign: Option<char>,
    zero: bool,
    width: usize,
    grouping: bool,
    precision: Option<usize>,
    ty: Option<char>,
}

fn parse_spec(spec: &str) -> Result<Spec, String> {
    let bad = || format!("Invalid format specifier '{spec}'");
    let chars: Vec<char> = spec.chars().collect();
    let mut s = Spec::default();
    let mut i = 0;
    let is_align = |c: char| matches!(c, '<' | '>' | '^' | '=');
    if chars.len() >= 2 && is_align(chars[1]) {
        s.fill = Some(chars[0]);
        s.align = Some(chars[1]);
        i = 2;
    } else if !chars.is_empty() && is_align(chars[0]) {
        s.align = Some(chars[0]);
        i = 1;
    }
    if let Some(&c) = chars.get(i) {
        if matches!(c, '+' | '-' | ' ') {
            s.sign = Some(c);
            i += 1;
        }
    }
    if chars.get(i) == Some(&'0') {
        s.zero = true;
        i += 1;
    }
    let start = i;
    while chars.get(i).is_some_and(|c| c.is_ascii_digit()) {
        i += 1;
    }
    if i > start {
        s.width = chars[start..i].iter().collect::<String>().parse().map_err(|_| bad())?;
        if s.width > 1000 {
            return Err("format width is too large".into());
        }
    }
    if chars.get(i) == Some(&',') {
        s.grouping = true;
        i += 1;
    }
    if chars.get(i) == Some(&'.') {
        i += 1;
        let start = i;
        while chars.get(i).is_some_and(|c| c.is_ascii_digit()) {
            i += 1;
        }
        if i == start {
            return Err("Format specifier missing precision".into());
        }
        let p: usize = chars[start..i].iter().collect::<String>().parse().map_err(|_| bad())?;
        if p > 100 {
            return Err("precision too big".into());
        }
        s.precision = Some(p);
    }
    if let Some(&c) = chars.get(i) {
        if !"bcdeEfFgGnosxX%".contains(c) {
            return Err(bad());
        }
        s.ty = Some(c);
        i += 1;
    }
    if i != chars.len() {
        return Err(bad());
    }
    Ok(s)
}

fn group_thousands(digits: &str) -> String {
    let (int, frac) = match digits.find('.') {
        Some(p) => (&digits[..p], &digits[p..]),
        None => (digits, ""),
    };
    let mut out = String::new();
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out + frac
}

fn general(x: f64, precision: usize, strip: bool) -> String {
    let p = precision.max(1);
    if x == 0.0 {
        return if strip { "0".into() } else { format!("{:.*}", p - 1, 0.0) };
    }
    let sci = format!("{:.*e}", p - 1, x);
    let exp: i32 = sci.split_once('e').map(|(_, e)| e.parse().unwrap_or(0)).unwrap_or(0);
    let body = if exp < -4 || exp >= p as i32 {
        let (m, _) = sci.split_once('e').expect("exponent");
        let m = if strip && m.contains('.') {
            m.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            m.to_string()
        };
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let f = format!("{:.*}", (p as i32 - 1 - exp).max(0) as usize, x);
        if strip && f.contains('.') {
            f.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            f
        }
    };
    body
}

/// Applies a Python format spec to a value. `text` is the value's `str()`.
pub fn apply_format(v: &Value, text: &str, spec: &str) -> Result<String, String> {
    if spec.is_empty() {
        return Ok(text.to_string());
    }
    let s = parse_spec(spec)?;
    let num = match v {
        Value::Bool(_) if s.ty.is_none() => None,
        other => other.as_number(),
    };
    let (sign, body, numeric) = match (num, s.ty) {
        (None, None | Some('s')) => {
            if s.sign.is_some() {
                return Err("Sign not allowed in string format specifier".into());
            }
            let t: String = match s.precision {
                Some(p) => text.chars().take(p).collect(),
                None => text.to_string(),
            };
            (String::new(), t, false)
        }
        (None, Some(t)) => {
            return Err(format!("Unknown format code '{t}' for object of type '{}'", v.type_name()));
        }
        (Some(n), ty) => {
            let x = n.as_f64();
            let neg = x.is_sign_negative() && !(x == 0.0 && matches!(n, Num::Int(_)));
            let body = match (ty, n) {
                (Some('d') | Some('n') | None, Num::Int(i)) => {
                    if s.precision.is_some() {
                        return Err("Precision not allowed in integer format specifier".into());
                    }
                    i.unsigned_abs().to_string()
                }
                (Some('d') | Some('n'), Num::Float(_)) => {
                    return Err("Unknown format code 'd' for object of type 'float'".into());
                }
                (Some('s'), _) => {
                    return Err(format!("Unknown format code 's' for object of type '{}'", v.type_name()))
                }
                (Some('x'), Num::Int(i)) => format!("{:x}", i.unsigned_abs()),
                (Some('X'), Num::Int(i)) => format!("{:X}", i.unsigned_abs()),
                (Some('o'), Num::Int(i)) => format!("{:o}", i.unsigned_abs()),
                (Some('b'), Num::Int(i)) => format!("{:b}", i.unsigned_abs()),
                (Some('f' | 'F'), _) => fixed(x.abs(), s.precision.unwrap_or(6), ty == Some('F')),
                (Some('e' | 'E'), _) => {
                    let p = s.precision.unwrap_or(6);
                    let r = if x.is_finite() { sci(x.abs(), p) } else { fixed(x.abs(), 0, false) };
                    if ty == Some('E') {
                        r.to_uppercase()
                    } else {
                        r
                    }
                }
                (Some('%'), _) => {
                    let p = s.precision.unwrap_or(6);
                    format!("{}%", fixed(x.abs() * 100.0, p, false))
                }
                (Some('g' | 'G'), _) => {
                    let r = if x.is_finite() {
                        general(x.abs(), s.precision.unwrap_or(6), true)
                    } else {
                        fixed(x.abs(), 0, false)
                    };
                    if ty == Some('G') {
                        r.to_uppercase()
                    } else {
                        r
                    }
                }
                (None, _) => match s.precision {
                    Some(p) if x.is_finite() => {
                        let g = general(x.abs(), p, true);
                        if g.contains(['.', 'e', 'n', 'i']) {
                            g
                        } else {
                            format!("{g}.0")
                        }
                    }
                    _ => float_repr(x.abs()),
                },
                (Some(t), _) => {
                    return Err(format!("Unknown format code '{t}' for object of type '{}'", v.type_name()));
                }
            };
            let body = if s.grouping && body.chars().next().is_some_and(|c| c.is_ascii_digit()) {
                group_thousands(&body)
            } else {
                body
            };
            let sign = if neg {
                "-".to_string()
            } else {
                match s.sign {
                    Some('+') => "+".into(),
                    Some(' ') => " ".into(),
                    _ => String::new(),
                }
            };
            (sign, body, true)
        }
    };
    let len = sign.chars().count() + body.chars().count();
    if len >= s.width {
        return Ok(sign + &body);
    }
    let pad = s.width - len;
    let (fill, align) = if s.zero && s.align.is_none() && numeric {
        ('0', '=')
    } else {
        (s.fill.unwrap_or(' '), s.align.unwrap_or(if numeric { '>' } else { '<' }))
    };
    let fills = |n: usize| fill.to_string().repeat(n);
    Ok(match align {
        '<' => format!("{sign}{body}{}", fills(pad)),
        '>' => format!("{}{sign}{body}", fills(pad)),
        '^' => format!("{}{sign}{body}{}", fills(pad / 2), fills(pad - pad / 2)),
        _ => format!("{sign}{}{body}", fills(pad)),
    })
}

fn fixed(x: f64, p: usize, upper: bool) -> String {
    if x.is_nan() {
        return if upper { "NAN" } else { "nan" }.into();
    }
    if x.is_infinite() {
        return if upper { "INF" } else { "inf" }.into();
    }
    format!("{:.*}", p, x)
}

fn sci(x: f64, p: usize) -> String {
    let s = format!("{:.*e}", p, x);
    let (m, e) = s.split_once('e').expect("exponent");
    let e: i32 = e.parse().unwrap_or(0);
    format!("{m}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}
