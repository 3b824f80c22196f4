//! Tokenizer for the program language, including Python-style indentation.

use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    /// Raw body of an f-string; pieces are split by the parser.
    FStr(String),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
}

const OPS: [&str; 46] = [
    "**=", "//=", ">>=", "<<=", "...", "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&=", "|=",
    "^=", "->", ":=", "<<", ">>", "+", "-", "*", "/", "%", "<", ">", "=", "(", ")", "[", "]", "{", "}", ",", ":", ".",
    ";", "@", "&", "|", "^", "~",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    Lexer { chars: src.chars().collect(), pos: 0, line: 1, out: Vec::new(), indents: vec![0], depth: 0 }.run()
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    out: Vec<Token>,
    indents: Vec<usize>,
    /// Bracket nesting; newlines inside brackets are insignificant.
    depth: usize,
}

impl Lexer {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn err(&self, msg: impl Into<String>) -> SyntaxError {
        SyntaxError { message: msg.into(), line: self.line }
    }

    fn push(&mut self, tok: Tok, line: usize) {
        self.out.push(Token { tok, line });
    }

    fn run(mut self) -> Result<Vec<Token>, SyntaxError> {
        let mut at_line_start = true;
        loop {
            if at_line_start && self.depth == 0 {
                at_line_start = false;
                if self.indentation()? {
                    continue;
                }
            }
            let Some(c) = self.peek(0) else { break };
            match c {
                '\n' => {
                    self.pos += 1;
                    if self.depth == 0 {
                        if !matches!(self.out.last().map(|t| &t.tok), None | Some(Tok::Newline)) {
                            self.push(Tok::Newline, self.line);
                        }
                        at_line_start = true;
                    }
                    self.line += 1;
                }
                ' ' | '\t' | '\r' | '\x0c' => self.pos += 1,
                '#' => {
                    while self.peek(0).is_some_and(|c| c != '\n') {
                        self.pos += 1;
                    }
                }
                '\\' if self.peek(1) == Some('\n') => {
                    self.pos += 2;
                    self.line += 1;
                }
                c if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) => {
                    self.number()?
                }
                c if c == '_' || c.is_alphabetic() => self.name_or_string()?,
                '"' | '\'' => {
                    let line = self.line;
                    let s = self.string_body(false, false)?;
                    self.push(Tok::Str(s), line);
                }
                _ => self.operator()?,
            }
        }
        if !matches!(self.out.last().map(|t| &t.tok), None | Some(Tok::Newline)) {
            self.push(Tok::Newline, self.line);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, self.line);
        }
        self.push(Tok::Eof, self.line);
        Ok(self.out)
    }

    /// Measures leading whitespace of a logical line. Returns true when the
    /// line is blank or a comment and has been consumed.
    fn indentation(&mut self) -> Result<bool, SyntaxError> {
        let mut col = 0;
        let mut p = self.pos;
        while let Some(c) = self.chars.get(p) {
            match c {
                ' ' => col += 1,
                '\t' => col = (col / 8 + 1) * 8,
                '\x0c' | '\r' => {}
                _ => break,
            }
            p += 1;
        }
        match self.chars.get(p) {
            None => {
                self.pos = p;
                return Ok(false);
            }
            Some('\n') => {
                self.pos = p + 1;
                self.line += 1;
                return Ok(true);
            }
            Some('#') => {
                while self.chars.get(p).is_some_and(|c| *c != '\n') {
                    p += 1;
                }
                self.pos = p;
                if self.pos < self.chars.len() {
                    self.pos += 1;
                    self.line += 1;
                }
                return Ok(true);
            }
            _ => {}
        }
        self.pos = p;
        let cur = *self.indents.last().expect("indent stack never empty");
        if col > cur {
            self.indents.push(col);
            self.push(Tok::Indent, self.line);
        } else if col < cur {
            while *self.indents.last().expect("non-empty") > col {
                self.indents.pop();
                self.push(Tok::Dedent, self.line);
            }
            if *self.indents.last().expect("non-empty") != col {
                return Err(self.err("unindent does not match any outer indentation level"));
            }
        }
        Ok(false)
    }

    fn number(&mut self) -> Result<(), SyntaxError> {
        let start = self.pos;
        let line = self.line;
        if self.peek(0) == Some('0') && matches!(self.peek(1), Some('x' | 'X' | 'o' | 'O' | 'b' | 'B')) {
            let radix = match self.peek(1) {
                Some('x' | 'X') => 16,
                Some('o' | 'O') => 8,
                _ => 2,
            };
            self.pos += 2;
            while self.peek(0).is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                self.pos += 1;
            }
            let digits: String = self.chars[start + 2..self.pos].iter().filter(|c| **c != '_').collect();
            let v = i64::from_str_radix(&digits, radix).map_err(|_| self.err("invalid integer literal"))?;
            self.push(Tok::Int(v), line);
            return Ok(());
        }
        let mut is_float = false;
        while let Some(c) = self.peek(0) {
            if c.is_ascii_digit() || c == '_' {
                self.pos += 1;
            } else if c == '.' && !is_float {
                is_float = true;
                self.pos += 1;
            } else if (c == 'e' || c == 'E')
                && (self.peek(1).is_some_and(|d| d.is_ascii_digit())
                    || (matches!(self.peek(1), Some('+' | '-')) && self.peek(2).is_some_and(|d| d.is_ascii_digit())))
            {
                is_float = true;
                self.pos += 2;
            } else {
                break;
            }
        }
        if self.peek(0).is_some_and(|c| c.is_alphabetic() || c == '_') {
            return Err(self.err("invalid decimal literal"));
        }
        let text: String = self.chars[start..self.pos].iter().filter(|c| **c != '_').collect();
        if is_float {
            let v: f64 = text.parse().map_err(|_| self.err("invalid float literal"))?;
            if !v.is_finite() {
                return Err(self.err("float literal out of range"));
            }
            self.push(Tok::Float(v), line);
        } else {
            let v: i64 = text.parse().map_err(|_| self.err("integer literal too large"))?;
            self.push(Tok::Int(v), line);
        }
        Ok(())
    }

    fn name_or_string(&mut self) -> Result<(), SyntaxError> {
        let start = self.pos;
        while self.peek(0).is_some_and(|c| c == '_' || c.is_alphanumeric()) {
            self.pos += 1;
        }
        let word: String = self.chars[start..self.pos].iter().collect();
        if matches!(self.peek(0), Some('"' | '\'')) {
            let lower = word.to_ascii_lowercase();
            let (raw, fmt) = match lower.as_str() {
                "r" => (true, false),
                "f" => (false, true),
                "rf" | "fr" => (true, true),
                "b" | "rb" | "br" => return Err(self.err("bytes literals are not supported")),
                "u" => (false, false),
                _ => {
                    let line = self.line;
                    self.push(Tok::Name(word), line);
                    return Ok(());
                }
            };
            let line = self.line;
            let body = self.string_body(raw, fmt)?;
            self.push(if fmt { Tok::FStr(body) } else { Tok::Str(body) }, line);
            return Ok(());
        }
        let line = self.line;
        self.push(Tok::Name(word), line);
        Ok(())
    }

    /// Reads a quoted literal starting at the opening quote. Plain strings are
    /// unescaped here; f-string bodies are returned raw.
    fn string_body(&mut self, raw: bool, fmt: bool) -> Result<String, SyntaxError> {
        let q = self.peek(0).expect("caller saw a quote");
        let triple = self.peek(1) == Some(q) && self.peek(2) == Some(q);
        self.pos += if triple { 3 } else { 1 };
        let mut body = String::new();
        let mut brace_depth = 0usize;
        loop {
            let Some(c) = self.peek(0) else {
                return Err(self.err("unterminated string literal"));
            };
            if fmt && brace_depth > 0 && (c == '"' || c == '\'') {
                // Nested literal inside a replacement field.
                let start = self.pos;
                self.string_body(false, false)?;
                body.extend(&self.chars[start..self.pos]);
                continue;
            }
            if c == q && (!triple || (self.peek(1) == Some(q) && self.peek(2) == Some(q))) && brace_depth == 0 {
                self.pos += if triple { 3 } else { 1 };
                break;
            }
            if c == '\n' {
                if !triple {
                    return Err(self.err("unterminated string literal"));
                }
                self.line += 1;
            }
            if fmt {
                match c {
                    '{' if brace_depth == 0 && self.peek(1) == Some('{') => {
                        body.push_str("{{");
                        self.pos += 2;
                        continue;
                    }
                    '{' => brace_depth += 1,
                    '}' if brace_depth > 0 => brace_depth -= 1,
                    _ => {}
                }
                if c == '\\' && !raw {
                    body.push(c);
                    self.pos += 1;
                    if let Some(n) = self.peek(0) {
                        if n == '\n' {
                            self.line += 1;
                        }
                        body.push(n);
                        self.pos += 1;
                    }
                    continue;
                }
                body.push(c);
                self.pos += 1;
                continue;
            }
            if c == '\\' && !raw {
                self.pos += 1;
                let Some(e) = self.peek(0) else {
                    return Err(self.err("unterminated string literal"));
                };
                self.pos += 1;
                match e {
                    'n' => body.push('\n'),
                    't' => body.push('\t'),
                    'r' => body.push('\r'),
                    '0' => body.push('\0'),
                    '\\' => body.push('\\'),
                    '\'' => body.push('\''),
                    '"' => body.push('"'),
                    '\n' => self.line += 1,
                    'x' | 'u' | 'U' => {
                        let n = match e {
                            'x' => 2,
                            'u' => 4,
                            _ => 8,
                        };
                        let hex: String = (0..n).filter_map(|k| self.peek(k)).collect();
                        let cp = (hex.len() == n)
                            .then(|| u32::from_str_radix(&hex, 16).ok())
                            .flatten()
                            .and_then(char::from_u32)
                            .ok_or_else(|| self.err(format!("invalid \\{e} escape")))?;
                        self.pos += n;
                        body.push(cp);
                    }
                    other => {
                        body.push('\\');
                        body.push(other);
                    }
                }
                continue;
            }
            if raw && c == '\\' {
                body.push(c);
                self.pos += 1;
                if let Some(n) = self.peek(0) {
                    if n == '\n' {
                        self.line += 1;
                    }
                    body.push(n);
                    self.pos += 1;
                }
                continue;
            }
            body.push(c);
            self.pos += 1;
        }
        Ok(body)
    }

    fn operator(&mut self) -> Result<(), SyntaxError> {
        let line = self.line;
        for op in OPS {
            let n = op.chars().count();
            if self.chars.len() >= self.pos + n && op.chars().zip(&self.chars[self.pos..]).all(|(a, b)| a == *b) {
                self.pos += n;
                match op {
                    "(" | "[" | "{" => self.depth += 1,
                    ")" | "]" | "}" => self.depth = self.depth.saturating_sub(1),
                    _ => {}
                }
                self.push(Tok::Op(op), line);
                return Ok(());
            }
        }
        let c = self.peek(0).expect("caller checked");
        if c == '!' {
            return Err(self.err("invalid syntax: '!' (use 'not' for negation)"));
        }
        Err(self.err(format!("invalid character '{c}'")))
    }
}
