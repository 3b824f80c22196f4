//! Recursive-descent parser producing [`Program`] trees.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::SyntaxError;

/// Maximum expression tree height accepted by the parser.
pub const MAX_EXPR_DEPTH: u32 = 100;
/// Maximum nesting of `for`/`if` blocks.
pub const MAX_BLOCK_DEPTH: usize = 40;

const FORBIDDEN: [&str; 15] = [
    "import", "from", "def", "class", "while", "with", "try", "raise", "global", "nonlocal", "del", "return", "yield",
    "async", "await",
];

const KEYWORDS: [&str; 35] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

pub fn parse(src: &str) -> Result<Program, SyntaxError> {
    parse_at(src, 0)
}

fn parse_at(src: &str, line_offset: usize) -> Result<Program, SyntaxError> {
    let mut toks = tokenize(src).map_err(|e| SyntaxError { line: e.line + line_offset, ..e })?;
    for t in &mut toks {
        t.line += line_offset;
    }
    let mut p = Parser { toks, pos: 0, loops: 0, blocks: 0, nesting: 0 };
    let mut body = Vec::new();
    while !p.at(&Tok::Eof) {
        if p.at(&Tok::Indent) {
            return Err(p.err("unexpected indent"));
        }
        body.extend(p.statement()?);
    }
    Ok(Program { body })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    loops: usize,
    blocks: usize,
    /// Recursion depth of the expression parser itself.
    nesting: u32,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Name(n) => format!("'{n}'"),
        Tok::Int(i) => format!("'{i}'"),
        Tok::Float(x) => format!("'{x}'"),
        Tok::Str(_) | Tok::FStr(_) => "string literal".into(),
        Tok::Op(o) => format!("'{o}'"),
        Tok::Newline => "end of line".into(),
        Tok::Indent => "indent".into(),
        Tok::Dedent => "dedent".into(),
        Tok::Eof => "end of input".into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn line(&self) -> usize {
        self.toks[self.pos].line.max(1)
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> SyntaxError {
        SyntaxError { message: msg.into(), line: self.line() }
    }

    fn unexpected(&self) -> SyntaxError {
        self.err(format!("invalid syntax: unexpected {}", describe(self.peek())))
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), SyntaxError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{op}', found {}", describe(self.peek()))))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{kw}', found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Name(n) if !KEYWORDS.contains(&n.as_str()) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.err(format!("expected a name, found {}", describe(self.peek())))),
        }
    }

    fn mk(&self, kind: ExprKind, line: usize) -> Result<Expr, SyntaxError> {
        let e = Expr::new(kind, line);
        if e.depth > MAX_EXPR_DEPTH {
            return Err(SyntaxError { message: "expression is too deeply nested".into(), line: line.max(1) });
        }
        Ok(e)
    }

    fn enter(&mut self) -> Result<(), SyntaxError> {
        self.nesting += 1;
        if self.nesting > MAX_EXPR_DEPTH {
            return Err(self.err("expression is too deeply nested"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.nesting -= 1;
    }

    // ---------------------------------------------------------------- statements

    fn statement(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        let line = self.line();
        if let Tok::Name(n) = self.peek().clone() {
            match n.as_str() {
                "if" => return Ok(vec![self.if_stmt()?]),
                "for" => return Ok(vec![self.for_stmt()?]),
                "elif" | "else" => return Err(self.err(format!("'{n}' without a matching 'if'"))),
                "lambda" => {}
                kw if FORBIDDEN.contains(&kw) => {
                    return Err(SyntaxError { message: format!("{kw} is not allowed"), line });
                }
                "assert" | "except" | "finally" | "as" => {
                    return Err(SyntaxError { message: format!("{n} is not allowed"), line });
                }
                _ => {}
            }
        }
        if self.at_op("@") {
            return Err(self.err("decorators are not allowed"));
        }
        self.simple_statements()
    }

    fn simple_statements(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        let mut out = vec![self.small_statement()?];
        while self.eat_op(";") {
            if self.at(&Tok::Newline) || self.at(&Tok::Eof) {
                break;
            }
            out.push(self.small_statement()?);
        }
        match self.peek() {
            Tok::Newline => {
                self.bump();
            }
            Tok::Eof | Tok::Dedent => {}
            _ => return Err(self.unexpected()),
        }
        Ok(out)
    }

    fn small_statement(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        if let Tok::Name(n) = self.peek().clone() {
            match n.as_str() {
                "pass" => {
                    self.bump();
                    return Ok(Stmt { kind: StmtKind::Pass, line });
                }
                "break" | "continue" => {
                    if self.loops == 0 {
                        return Err(self.err(format!("'{n}' outside loop")));
                    }
                    self.bump();
                    let kind = if n == "break" { StmtKind::Break } else { StmtKind::Continue };
                    return Ok(Stmt { kind, line });
                }
                kw if FORBIDDEN.contains(&kw) || ["assert", "if", "for", "elif", "else"].contains(&kw) => {
                    return Err(SyntaxError { message: format!("{kw} is not allowed here"), line });
                }
                _ => {}
            }
        }
        let first = self.expr_list()?;
        if let Tok::Op(op) = self.peek().clone() {
            let aug = match op {
                "+=" => Some(BinOp::Add),
                "-=" => Some(BinOp::Sub),
                "*=" => Some(BinOp::Mul),
                "/=" => Some(BinOp::Div),
                "//=" => Some(BinOp::FloorDiv),
                "%=" => Some(BinOp::Mod),
                "**=" => Some(BinOp::Pow),
                "|=" => Some(BinOp::BitOr),
                "&=" => Some(BinOp::BitAnd),
                "^=" => Some(BinOp::BitXor),
                _ => None,
            };
            if let Some(binop) = aug {
                let target = self.to_target(first)?;
                if matches!(target, Target::Tuple(_)) {
                    return Err(SyntaxError { message: "illegal target for augmented assignment".into(), line });
                }
                self.bump();
                let value = self.expr_list()?;
                return Ok(Stmt { kind: StmtKind::AugAssign(target, binop, value), line });
            }
            if op == ":=" {
                return Err(self.err("assignment expressions (:=) are not allowed"));
            }
            if op == "=" {
                let mut targets = vec![self.to_target(first)?];
                self.bump();
                let mut value = self.expr_list()?;
                while self.eat_op("=") {
                    targets.push(self.to_target(value)?);
                    value = self.expr_list()?;
                }
                return Ok(Stmt { kind: StmtKind::Assign(targets, value), line });
            }
            if op == ":" {
                return Err(self.err("variable annotations are not allowed"));
            }
        }
        Ok(Stmt { kind: StmtKind::Expr(first), line })
    }

    fn to_target(&self, e: Expr) -> Result<Target, SyntaxError> {
        let line = e.line.max(1);
        let what = match e.kind {
            ExprKind::Name(n) => return Ok(Target::Name(n)),
            ExprKind::Tuple(items) | ExprKind::List(items) if !items.is_empty() => {
                return items.into_iter().map(|i| self.to_target(i)).collect::<Result<_, _>>().map(Target::Tuple);
            }
            ExprKind::Subscript(obj, idx) => return Ok(Target::Subscript(*obj, *idx)),
            ExprKind::Attribute(obj, name) => return Ok(Target::Attribute(*obj, name)),
            ExprKind::Call(..) => "function call",
            ExprKind::None | ExprKind::Bool(_) | ExprKind::Int(_) | ExprKind::Float(_) | ExprKind::Str(_) => "literal",
            ExprKind::FStr(_) => "f-string expression",
            ExprKind::Compare(..) => "comparison",
            _ => "expression",
        };
        Err(SyntaxError { message: format!("cannot assign to {what}"), line })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.expect_op(":")?;
        self.blocks += 1;
        if self.blocks > MAX_BLOCK_DEPTH {
            return Err(self.err("too many statically nested blocks"));
        }
        let body = if self.at(&Tok::Newline) {
            self.bump();
            if !self.at(&Tok::Indent) {
                return Err(self.err("expected an indented block"));
            }
            self.bump();
            let mut body = Vec::new();
            while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
                if self.at(&Tok::Indent) {
                    return Err(self.err("unexpected indent"));
                }
                body.extend(self.statement()?);
            }
            if self.at(&Tok::Dedent) {
                self.bump();
            }
            body
        } else {
            self.simple_statements()?
        };
        self.blocks -= 1;
        Ok(body)
    }

    fn if_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        self.bump();
        let cond = self.expr()?;
        let mut branches = vec![(cond, self.block()?)];
        let mut orelse = None;
        loop {
            if self.eat_kw("elif") {
                let c = self.expr()?;
                branches.push((c, self.block()?));
            } else if self.eat_kw("else") {
                orelse = Some(self.block()?);
                break;
            } else {
                break;
            }
        }
        Ok(Stmt { kind: StmtKind::If { branches, orelse }, line })
    }

    fn for_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        self.bump();
        let target = self.target_list()?;
        self.expect_kw("in")?;
        let iter = self.expr_list()?;
        self.loops += 1;
        let body = self.block();
        self.loops -= 1;
        let body = body?;
        if self.at_kw("else") {
            return Err(self.err("for-else is not supported"));
        }
        Ok(Stmt { kind: StmtKind::For { target, iter, body }, line })
    }

    /// Loop targets: `a`, `a, b`, `(a, b)`, `x[i]`.
    fn target_list(&mut self) -> Result<Target, SyntaxError> {
        let line = self.line();
        let first = self.bitor()?;
        if !self.at_op(",") {
            return self.to_target(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_kw("in") {
                break;
            }
            items.push(self.bitor()?);
        }
        let tuple = self.mk(ExprKind::Tuple(items), line)?;
        self.to_target(tuple)
    }

    // --------------------------------------------------------------- expressions

    /// Comma-separated expressions; more than one (or a trailing comma) forms a tuple.
    fn expr_list(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = self.expr()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.ends_expr_list() {
                break;
            }
            items.push(self.expr()?);
        }
        self.mk(ExprKind::Tuple(items), line)
    }

    fn ends_expr_list(&self) -> bool {
        matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Dedent)
            || self.at_op("=")
            || self.at_op(")")
            || self.at_op(";")
            || self.at_op(":")
            || matches!(self.peek(), Tok::Op(o) if o.ends_with('=') && o.len() >= 2 && !["==", "!=", "<=", ">="].contains(o))
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.at_kw("lambda") {
            return Err(self.err("lambda is only allowed as a key= argument"));
        }
        self.enter()?;
        let r = self.ternary();
        self.leave();
        r
    }

    fn ternary(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let then = self.or_test()?;
        if self.eat_kw("if") {
            let cond = self.or_test()?;
            self.expect_kw("else")?;
            let orelse = self.expr()?;
            return self
                .mk(ExprKind::IfExp { cond: Box::new(cond), then: Box::new(then), orelse: Box::new(orelse) }, line);
        }
        Ok(then)
    }

    fn or_test(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = self.and_test()?;
        if !self.at_kw("or") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_kw("or") {
            items.push(self.and_test()?);
        }
        self.mk(ExprKind::Or(items), line)
    }

    fn and_test(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = self.not_test()?;
        if !self.at_kw("and") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_kw("and") {
            items.push(self.not_test()?);
        }
        self.mk(ExprKind::And(items), line)
    }

    fn not_test(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        if self.eat_kw("not") {
            self.enter()?;
            let inner = self.not_test();
            self.leave();
            return self.mk(ExprKind::Unary(UnaryOp::Not, Box::new(inner?)), line);
        }
        self.comparison()
    }

    fn comp_op(&mut self) -> Option<CmpOp> {
        let op = match self.peek() {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::Ne,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::Ge,
            Tok::Name(n) if n == "in" => CmpOp::In,
            Tok::Name(n) if n == "not" && matches!(self.peek_at(1), Tok::Name(m) if m == "in") => {
                self.bump();
                CmpOp::NotIn
            }
            Tok::Name(n) if n == "is" => {
                if matches!(self.peek_at(1), Tok::Name(m) if m == "not") {
                    self.bump();
                    CmpOp::IsNot
                } else {
                    CmpOp::Is
                }
            }
            _ => return None,
        };
        self.bump();
        Some(op)
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = self.bitor()?;
        let mut rest = Vec::new();
        while let Some(op) = self.comp_op() {
            rest.push((op, self.bitor()?));
        }
        if rest.is_empty() {
            Ok(first)
        } else {
            self.mk(ExprKind::Compare(Box::new(first), rest), line)
        }
    }

    fn binary_level(
        &mut self,
        ops: &[(&str, BinOp)],
        next: fn(&mut Self) -> Result<Expr, SyntaxError>,
    ) -> Result<Expr, SyntaxError> {
        let mut left = next(self)?;
        'outer: loop {
            for (sym, op) in ops {
                if self.at_op(sym) {
                    let line = self.line();
                    self.bump();
                    let right = next(self)?;
                    left = self.mk(ExprKind::Binary(*op, Box::new(left), Box::new(right)), line)?;
                    continue 'outer;
                }
            }
            return Ok(left);
        }
    }

    fn bitor(&mut self) -> Result<Expr, SyntaxError> {
        self.binary_level(&[("|", BinOp::BitOr)], Self::bitxor)
    }

    fn bitxor(&mut self) -> Result<Expr, SyntaxError> {
        self.binary_level(&[("^", BinOp::BitXor)], Self::bitand)
    }

    fn bitand(&mut self) -> Result<Expr, SyntaxError> {
        self.binary_level(&[("&", BinOp::BitAnd)], Self::arith)
    }

    fn arith(&mut self) -> Result<Expr, SyntaxError> {
        if self.at_op("<<") || self.at_op(">>") {
            return Err(self.unexpected());
        }
        let r = self.binary_level(&[("+", BinOp::Add), ("-", BinOp::Sub)], Self::term)?;
        if self.at_op("<<") || self.at_op(">>") {
            return Err(self.err("bit shifts are not supported"));
        }
        Ok(r)
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        self.binary_level(
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("//", BinOp::FloorDiv), ("%", BinOp::Mod)],
            Self::factor,
        )
    }

    fn factor(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let op = match self.peek() {
            Tok::Op("-") => UnaryOp::Neg,
            Tok::Op("+") => UnaryOp::Pos,
            Tok::Op("~") => UnaryOp::Invert,
            _ => return self.power(),
        };
        self.bump();
        self.enter()?;
        let inner = self.factor();
        self.leave();
        self.mk(ExprKind::Unary(op, Box::new(inner?)), line)
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.primary()?;
        if self.at_op("**") {
            let line = self.line();
            self.bump();
            self.enter()?;
            let exp = self.factor();
            self.leave();
            return self.mk(ExprKind::Binary(BinOp::Pow, Box::new(base), Box::new(exp?)), line);
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.atom()?;
        loop {
            let line = self.line();
            if self.eat_op(".") {
                let name = self.ident()?;
                e = self.mk(ExprKind::Attribute(Box::new(e), name), line)?;
            } else if self.eat_op("(") {
                self.enter()?;
                let args = self.call_args();
                self.leave();
                e = self.mk(ExprKind::Call(Box::new(e), args?), line)?;
            } else if self.eat_op("[") {
                self.enter()?;
                let idx = self.subscript();
                self.leave();
                e = self.mk(ExprKind::Subscript(Box::new(e), Box::new(idx?)), line)?;
            } else {
                return Ok(e);
            }
        }
    }

    fn subscript(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let lower = if self.at_op(":") { None } else { Some(self.expr()?) };
        if !self.at_op(":") {
            let lower = lower.expect("parsed above");
            let idx = if self.at_op(",") {
                let mut items = vec![lower];
                while self.eat_op(",") {
                    if self.at_op("]") {
                        break;
                    }
                    items.push(self.expr()?);
                }
                self.mk(ExprKind::Tuple(items), line)?
            } else {
                lower
            };
            self.expect_op("]")?;
            return Ok(idx);
        }
        self.bump();
        let upper = if self.at_op(":") || self.at_op("]") { None } else { Some(Box::new(self.expr()?)) };
        let step = if self.eat_op(":") && !self.at_op("]") { Some(Box::new(self.expr()?)) } else { None };
        self.expect_op("]")?;
        self.mk(ExprKind::Slice(lower.map(Box::new), upper, step), line)
    }

    fn call_args(&mut self) -> Result<Vec<Arg>, SyntaxError> {
        let mut args = Vec::new();
        let mut seen_kw = false;
        while !self.at_op(")") {
            if self.at_op("*") || self.at_op("**") {
                return Err(self.err("argument unpacking is not supported"));
            }
            if let (Tok::Name(n), Tok::Op("=")) = (self.peek().clone(), self.peek_at(1).clone()) {
                self.bump();
                self.bump();
                if args.iter().any(|a| matches!(a, Arg::Kw(k, _) if *k == n)) {
                    return Err(self.err(format!("keyword argument repeated: {n}")));
                }
                let value = if n == "key" && self.at_kw("lambda") { self.lambda()? } else { self.expr()? };
                args.push(Arg::Kw(n, value));
                seen_kw = true;
            } else {
                let line = self.line();
                let e = self.expr()?;
                if seen_kw {
                    return Err(self.err("positional argument follows keyword argument"));
                }
                if self.at_kw("for") {
                    let gens = self.comp_for()?;
                    if !self.at_op(")") || !args.is_empty() {
                        return Err(self.err("generator expression must be parenthesized"));
                    }
                    args.push(Arg::Pos(self.mk(ExprKind::GenExp(Box::new(e), gens), line)?));
                    break;
                }
                args.push(Arg::Pos(e));
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok(args)
    }

    fn lambda(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        self.expect_kw("lambda")?;
        let mut params = Vec::new();
        while !self.at_op(":") {
            let p = self.ident()?;
            if params.contains(&p) {
                return Err(self.err(format!("duplicate argument '{p}' in lambda")));
            }
            params.push(p);
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(":")?;
        let body = self.expr()?;
        self.mk(ExprKind::Lambda(Box::new(Lambda { params, body })), line)
    }

    fn comp_for(&mut self) -> Result<Vec<Comprehension>, SyntaxError> {
        let mut gens = Vec::new();
        while self.eat_kw("for") {
            let target = self.target_list()?;
            self.expect_kw("in")?;
            let iter = self.or_test()?;
            let mut conds = Vec::new();
            while self.eat_kw("if") {
                conds.push(self.or_test()?);
            }
            gens.push(Comprehension { target, iter, conds });
        }
        Ok(gens)
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                self.mk(ExprKind::Int(i), line)
            }
            Tok::Float(x) => {
                self.bump();
                self.mk(ExprKind::Float(x), line)
            }
            Tok::Str(_) | Tok::FStr(_) => self.strings(),
            Tok::Name(n) => match n.as_str() {
                "None" => {
                    self.bump();
                    self.mk(ExprKind::None, line)
                }
                "True" | "False" => {
                    self.bump();
                    self.mk(ExprKind::Bool(n == "True"), line)
                }
                "lambda" => Err(self.err("lambda is only allowed as a key= argument")),
                kw if FORBIDDEN.contains(&kw) => Err(self.err(format!("{kw} is not allowed"))),
                kw if KEYWORDS.contains(&kw) => Err(self.unexpected()),
                _ => {
                    self.bump();
                    self.mk(ExprKind::Name(n), line)
                }
            },
            Tok::Op("(") => {
                self.bump();
                self.enter()?;
                let r = self.paren(line);
                self.leave();
                r
            }
            Tok::Op("[") => {
                self.bump();
                self.enter()?;
                let r = self.list_display(line);
                self.leave();
                r
            }
            Tok::Op("{") => {
                self.bump();
                self.enter()?;
                let r = self.set_display(line);
                self.leave();
                r
            }
            Tok::Op("...") => Err(self.err("Ellipsis is not supported")),
            _ => Err(self.unexpected()),
        }
    }

    fn paren(&mut self, line: usize) -> Result<Expr, SyntaxError> {
        if self.eat_op(")") {
            return self.mk(ExprKind::Tuple(Vec::new()), line);
        }
        let first = self.expr()?;
        if self.at_kw("for") {
            let gens = self.comp_for()?;
            self.expect_op(")")?;
            return self.mk(ExprKind::GenExp(Box::new(first), gens), line);
        }
        if self.eat_op(")") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op(")") {
                break;
            }
            items.push(self.expr()?);
        }
        self.expect_op(")")?;
        self.mk(ExprKind::Tuple(items), line)
    }

    fn list_display(&mut self, line: usize) -> Result<Expr, SyntaxError> {
        if self.eat_op("]") {
            return self.mk(ExprKind::List(Vec::new()), line);
        }
        let first = self.expr()?;
        if self.at_kw("for") {
            let gens = self.comp_for()?;
            self.expect_op("]")?;
            return self.mk(ExprKind::ListComp(Box::new(first), gens), line);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op("]") {
                break;
            }
            items.push(self.expr()?);
        }
        self.expect_op("]")?;
        self.mk(ExprKind::List(items), line)
    }

    fn set_display(&mut self, line: usize) -> Result<Expr, SyntaxError> {
        if self.at_op("}") {
            return Err(self.err("dict literals are not supported; use set() for an empty set"));
        }
        let first = self.expr()?;
        if self.at_op(":") {
            return Err(self.err("dict literals are not supported"));
        }
        if self.at_kw("for") {
            let gens = self.comp_for()?;
            self.expect_op("}")?;
            return self.mk(ExprKind::SetComp(Box::new(first), gens), line);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op("}") {
                break;
            }
            items.push(self.expr()?);
        }
        self.expect_op("}")?;
        self.mk(ExprKind::Set(items), line)
    }

    /// Adjacent string literals concatenate; any f-string makes the whole an f-string.
    fn strings(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let mut parts: Vec<FPart> = Vec::new();
        let mut formatted = false;
        loop {
            match self.peek().clone() {
                Tok::Str(s) => {
                    self.bump();
                    push_lit(&mut parts, &s);
                }
                Tok::FStr(raw) => {
                    let tline = self.line();
                    self.bump();
                    formatted = true;
                    for p in self.fstring_parts(&raw, tline)? {
                        match p {
                            FPart::Lit(s) => push_lit(&mut parts, &s),
                            field => parts.push(field),
                        }
                    }
                }
                _ => break,
            }
        }
        if formatted {
            self.mk(ExprKind::FStr(parts), line)
        } else {
            let s = match parts.pop() {
                Some(FPart::Lit(s)) => s,
                _ => String::new(),
            };
            self.mk(ExprKind::Str(s), line)
        }
    }

    fn fstring_parts(&mut self, raw: &str, line: usize) -> Result<Vec<FPart>, SyntaxError> {
        let chars: Vec<char> = raw.chars().collect();
        let serr = |m: &str| SyntaxError { message: format!("f-string: {m}"), line };
        let mut parts = Vec::new();
        let mut lit = String::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            match c {
                '{' if chars.get(i + 1) == Some(&'{') => {
                    lit.push('{');
                    i += 2;
                }
                '}' if chars.get(i + 1) == Some(&'}') => {
                    lit.push('}');
                    i += 2;
                }
                '}' => return Err(serr("single '}' is not allowed")),
                '{' => {
                    if !lit.is_empty() {
                        parts.push(FPart::Lit(unescape(&std::mem::take(&mut lit))));
                    }
                    i += 1;
                    let (expr_src, repr, spec, next) = split_field(&chars, i).ok_or_else(|| serr("expecting '}'"))?;
                    i = next;
                    if expr_src.trim().is_empty() {
                        return Err(serr("empty expression not allowed"));
                    }
                    if spec.contains('{') {
                        return Err(serr("nested replacement fields in format specs are not supported"));
                    }
                    let expr = self.sub_expression(&expr_src, line)?;
                    parts.push(FPart::Field { expr: Box::new(expr), repr, spec });
                }
                _ => {
                    lit.push(c);
                    i += 1;
                }
            }
        }
        if !lit.is_empty() {
            parts.push(FPart::Lit(unescape(&lit)));
        }
        Ok(parts)
    }

    fn sub_expression(&mut self, src: &str, line: usize) -> Result<Expr, SyntaxError> {
        let wrapped = format!("({})", src.replace('\n', " "));
        let mut toks =
            tokenize(&wrapped).map_err(|e| SyntaxError { message: format!("f-string: {}", e.message), line })?;
        for t in &mut toks {
            t.line = line;
        }
        let mut sub = Parser { toks, pos: 0, loops: 0, blocks: 0, nesting: self.nesting };
        let e = sub.expr()?;
        if !matches!(sub.peek(), Tok::Newline | Tok::Eof) {
            return Err(SyntaxError { message: "f-string: invalid syntax".into(), line });
        }
        Ok(e)
    }
}

fn push_lit(parts: &mut Vec<FPart>, s: &str) {
    if let Some(FPart::Lit(prev)) = parts.last_mut() {
        prev.push_str(s);
    } else {
        parts.push(FPart::Lit(s.to_string()));
    }
}

/// Splits one replacement field starting after `{`. Returns the expression
/// source, the `!r` flag, the format spec and the index after `}`.
fn split_field(chars: &[char], start: usize) -> Option<(String, bool, String, usize)> {
    let mut depth = 0usize;
    let mut i = start;
    let mut quote: Option<char> = None;
    while i < chars.len() {
        let c = chars[i];
        if let Some(q) = quote {
            if c == '\\' {
                i += 2;
                continue;
            }
            if c == q {
                quote = None;
            }
            i += 1;
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' if depth > 0 => depth -= 1,
            '}' => {
                let e: String = chars[start..i].iter().collect();
                return Some((e, false, String::new(), i + 1));
            }
            '!' if depth == 0 && chars.get(i + 1) != Some(&'=') => {
                let e: String = chars[start..i].iter().collect();
                let conv = *chars.get(i + 1)?;
                if conv != 'r' && conv != 's' {
                    return None;
                }
                let mut j = i + 2;
                let mut spec = String::new();
                if chars.get(j) == Some(&':') {
                    j += 1;
                    while j < chars.len() && chars[j] != '}' {
                        spec.push(chars[j]);
                        j += 1;
                    }
                }
                if chars.get(j) != Some(&'}') {
                    return None;
                }
                return Some((e, conv == 'r', spec, j + 1));
            }
            ':' if depth == 0 => {
                let e: String = chars[start..i].iter().collect();
                let mut j = i + 1;
                let mut spec = String::new();
                while j < chars.len() && chars[j] != '}' {
                    spec.push(chars[j]);
                    j += 1;
                }
                if j >= chars.len() {
                    return None;
                }
                return Some((e, false, spec, j + 1));
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Escape processing for f-string literal text (plain strings are unescaped
/// by the lexer).
fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut it = s.chars().peekable();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('0') => out.push('\0'),
            Some('\\') => out.push('\\'),
            Some('\'') => out.push('\''),
            Some('"') => out.push('"'),
            Some('\n') => {}
            Some('x') => {
                let hex: String = (0..2).filter_map(|_| it.next()).collect();
                match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                    Some(ch) => out.push(ch),
                    None => {
                        out.push_str("\\x");
                        out.push_str(&hex);
                    }
                }
            }
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(src: &str) -> String {
        let p = parse(src).unwrap_or_else(|e| panic!("{src:?}: {e:?}"));
        let printed = p.pretty();
        let again = parse(&printed).unwrap_or_else(|e| panic!("reparse of {printed:?}: {e:?}"));
        assert_eq!(again.pretty(), printed, "source: {src}");
        printed
    }

    #[test]
    fn two_statements() {
        assert_eq!(parse("x = 1\nprint(x)").unwrap().body.len(), 2);
    }

    #[test]
    fn forbidden_constructs() {
        for (src, msg) in [
            ("import os", "import is not allowed"),
            ("from os import path", "from is not allowed"),
            ("def f():\n    pass", "def is not allowed"),
            ("class A:\n    pass", "class is not allowed"),
            ("while True:\n    pass", "while is not allowed"),
            ("x = 1\nwith open('f') as g:\n    pass", "with is not allowed"),
        ] {
            let e = parse(src).unwrap_err();
            assert_eq!(e.message, msg, "{src}");
        }
        assert_eq!(parse("x = 1\nimport os").unwrap_err().line, 2);
    }

    #[test]
    fn lambda_only_as_sort_key() {
        assert!(parse("y = sorted(xs, key=lambda o: o.xyz[0])").is_ok());
        assert!(parse("f = lambda o: o").unwrap_err().message.contains("key="));
        assert!(parse("m = max(xs, key=(lambda o: o))").is_err());
    }

    #[test]
    fn empty_braces_rejected() {
        assert!(parse("d = {}").unwrap_err().message.contains("set()"));
    }

    #[test]
    fn roundtrip_samples() {
        for src in [
            "x = 1 + 2 * 3 ** -1\n",
            "a, b = b, a\n",
            "for i, o in enumerate(objs):\n    if o.category == 'chair' and not i % 2:\n        print(i)\n    elif i > 3:\n        break\n    else:\n        continue\n",
            "s = {o.id for o in scene() if o.xyz[2] > 0.5}\n",
            "print(f\"{' '.join(rel)} and {x!r:>8} {{literal}}\")\n",
            "y = xs[1:3], xs[::-1], xs[:]\n",
            "z = [i * j for i in range(3) for j in range(i)]\n",
            "t = (1,)\nu = ()\nv = 'a' 'b'\n",
            "w = x if x is not None else 0\n",
            "total = sum(len(s) for s in names)\n",
            "q = -2 ** 2\nr = not a in b\n",
        ] {
            roundtrip(src);
        }
    }

    #[test]
    fn depth_limit() {
        let deep = format!("x = {}1{}", "(".repeat(500), ")".repeat(500));
        assert!(parse(&deep).unwrap_err().message.contains("nested"));
        let long = format!("x = {}", vec!["1"; 5000].join(" + "));
        assert!(parse(&long).unwrap_err().message.contains("nested"));
        let minus = format!("x = {}1", "-".repeat(5000));
        assert!(parse(&minus).is_err());
    }

    #[test]
    fn break_outside_loop() {
        assert!(parse("break").unwrap_err().message.contains("outside loop"));
        assert!(parse("for x in y:\n    if x:\n        break\n").is_ok());
    }
}
