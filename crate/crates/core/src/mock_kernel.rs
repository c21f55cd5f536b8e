//! A stand-in kernel that speaks the wire protocol without Python.
//!
//! It understands a tiny line-oriented subset of Python, enough for tests and
//! scripted demos:
//!
//! * `name = expr` with integer/float/string arithmetic and tuples
//! * `print(a, b, ...)`
//! * `image_clue_N.size`, `.width`, `.height`
//! * `plt.show()` emits a small canned PNG figure
//! * `time.sleep(s)`, `os._exit(code)`, `raise Name("msg")`,
//!   `sys.stderr.write("...")`
//! * `import` lines bind their module names; comments are skipped
//!
//! Assignments whose right-hand side is outside the subset bind an opaque
//! value so later lines still resolve the name. Fault switches on the command
//! line make it misbehave on purpose (see [`MockOptions`]).

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::time::Duration;

use crate::image::{solid_png, ImageBlob};
use crate::protocol::{Frame, FrameStatus, PROTOCOL_VERSION};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MockOptions {
    /// Never send the ready frame.
    pub no_ready: bool,
    pub protocol_version: u32,
    /// Answer every exec with a result whose id is off by 1000.
    pub wrong_result_ids: bool,
    /// Exit with status 3 on receiving the Nth exec frame (1-based).
    pub crash_on_exec: Option<u64>,
}

impl Default for MockOptions {
    fn default() -> Self {
        Self {
            no_ready: false,
            protocol_version: PROTOCOL_VERSION,
            wrong_result_ids: false,
            crash_on_exec: None,
        }
    }
}

impl MockOptions {
    pub fn parse(args: &[String]) -> Result<Self, String> {
        let mut opts = Self::default();
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            match arg.as_str() {
                "--no-ready" => opts.no_ready = true,
                "--wrong-result-ids" => opts.wrong_result_ids = true,
                "--protocol-version" => {
                    opts.protocol_version = next_number(&mut it, arg)? as u32;
                }
                "--crash-on-exec" => opts.crash_on_exec = Some(next_number(&mut it, arg)?),
                other => return Err(format!("unknown mock kernel flag {other}")),
            }
        }
        Ok(opts)
    }
}

fn next_number<'a>(it: &mut impl Iterator<Item = &'a String>, flag: &str) -> Result<u64, String> {
    it.next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("{flag} needs a numeric argument"))
}

/// Serves frames on stdin/stdout until shutdown or EOF. Returns the exit code.
pub fn serve(opts: &MockOptions) -> i32 {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let emit = |out: &mut std::io::StdoutLock<'_>, frame: Frame| {
        let _ = out.write_all(frame.encode().as_bytes());
        let _ = out.flush();
    };

    if !opts.no_ready {
        emit(
            &mut out,
            Frame::Ready {
                id: 0,
                protocol_version: opts.protocol_version,
                implementation: Some("mock".into()),
            },
        );
    }

    let mut interp = Interpreter::default();
    let mut execs = 0u64;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let frame = match Frame::decode(&line) {
            Ok(frame) => frame,
            Err(e) => {
                emit(
                    &mut out,
                    Frame::result(0, FrameStatus::Error, String::new(), format!("ProtocolError: {e}"), vec![]),
                );
                continue;
            }
        };
        match frame {
            Frame::Init { id, images } => {
                let reply = match interp.inject(&images) {
                    Ok(()) => Frame::result(id, FrameStatus::Ok, String::new(), String::new(), vec![]),
                    Err(e) => Frame::result(id, FrameStatus::Error, String::new(), e, vec![]),
                };
                emit(&mut out, reply);
            }
            Frame::Exec { id, code } => {
                execs += 1;
                if opts.crash_on_exec == Some(execs) {
                    std::process::exit(3);
                }
                let outcome = interp.run(&code);
                let reply_id = if opts.wrong_result_ids { id + 1000 } else { id };
                let (status, error) = match outcome.error {
                    Some(e) => (FrameStatus::Error, e),
                    None => (FrameStatus::Ok, outcome.stderr),
                };
                emit(
                    &mut out,
                    Frame::result(
                        reply_id,
                        status,
                        outcome.stdout,
                        error,
                        outcome.figures.iter().map(ImageBlob::to_base64).collect(),
                    ),
                );
            }
            Frame::Shutdown { .. } => return 0,
            other => emit(
                &mut out,
                Frame::result(
                    other.id(),
                    FrameStatus::Error,
                    String::new(),
                    format!("ProtocolError: unexpected {} frame", other.kind()),
                    vec![],
                ),
            ),
        }
    }
    0
}

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    Tuple(Vec<Value>),
    None,
    Opaque(String),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Self::Int(_) => "int",
            Self::Float(_) => "float",
            Self::Str(_) => "str",
            Self::Tuple(_) => "tuple",
            Self::None => "NoneType",
            Self::Opaque(_) => "object",
        }
    }

    /// Python's `str()`.
    fn display(&self) -> String {
        match self {
            Self::Str(s) => s.clone(),
            other => other.repr(),
        }
    }

    /// Python's `repr()`.
    fn repr(&self) -> String {
        match self {
            Self::Int(i) => i.to_string(),
            Self::Float(f) => format_float(*f),
            Self::Str(s) => format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
            Self::Tuple(items) if items.len() == 1 => format!("({},)", items[0].repr()),
            Self::Tuple(items) => {
                let inner: Vec<String> = items.iter().map(Value::repr).collect();
                format!("({})", inner.join(", "))
            }
            Self::None => "None".into(),
            Self::Opaque(src) => format!("<object {src}>"),
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Int(i) => Some(*i as f64),
            Self::Float(f) => Some(*f),
            _ => None,
        }
    }
}

fn format_float(f: f64) -> String {
    if f.is_nan() {
        "nan".into()
    } else if f.is_infinite() {
        if f > 0.0 { "inf" } else { "-inf" }.into()
    } else if f.fract() == 0.0 && f.abs() < 1e16 {
        format!("{f:.1}")
    } else {
        format!("{f}")
    }
}

struct Outcome {
    stdout: String,
    stderr: String,
    error: Option<String>,
    figures: Vec<ImageBlob>,
}

/// Python-style exception: type name plus message.
struct Raised(String, String);

impl Raised {
    fn new(kind: &str, msg: impl Into<String>) -> Self {
        Self(kind.to_string(), msg.into())
    }
}

#[derive(Default)]
struct Interpreter {
    vars: HashMap<String, Value>,
    images: Vec<(u32, u32)>,
}

impl Interpreter {
    fn inject(&mut self, images: &[String]) -> Result<(), String> {
        let mut dims = Vec::with_capacity(images.len());
        for (i, b64) in images.iter().enumerate() {
            let blob = ImageBlob::from_base64(b64)
                .map_err(|e| format!("image_clue_{i}: cannot decode PNG: {e}"))?;
            dims.push((blob.width(), blob.height()));
        }
        self.images = dims;
        Ok(())
    }

    fn run(&mut self, code: &str) -> Outcome {
        let mut outcome = Outcome {
            stdout: String::new(),
            stderr: String::new(),
            error: None,
            figures: Vec::new(),
        };
        for (lineno, raw) in code.lines().enumerate() {
            if let Err(Raised(kind, msg)) = self.statement(raw.trim(), &mut outcome) {
                outcome.error = Some(format!(
                    "Traceback (most recent call last):\n  File \"<snippet>\", line {}, in <module>\n    {}\n{kind}: {msg}\n",
                    lineno + 1,
                    raw.trim()
                ));
                break;
            }
        }
        outcome
    }

    fn statement(&mut self, line: &str, out: &mut Outcome) -> Result<(), Raised> {
        if line.is_empty() || line.starts_with('#') {
            return Ok(());
        }
        if line.starts_with("import ") || line.starts_with("from ") {
            for name in imported_names(line) {
                self.vars.insert(name.clone(), Value::Opaque(name));
            }
            return Ok(());
        }
        if line == "plt.show()" {
            let shade = (40 * out.figures.len() % 256) as u8;
            out.figures.push(solid_png(4, 3, [shade, 128, 200]));
            return Ok(());
        }
        if let Some(args) = call_args(line, "print") {
            let values = split_top_level(args)
                .into_iter()
                .filter(|a| !a.trim().is_empty())
                .map(|a| self.eval(a.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            let text: Vec<String> = values.iter().map(Value::display).collect();
            out.stdout.push_str(&text.join(" "));
            out.stdout.push('\n');
            return Ok(());
        }
        if let Some(args) = call_args(line, "time.sleep") {
            let secs = self
                .eval(args)?
                .as_f64()
                .ok_or_else(|| Raised::new("TypeError", "sleep() needs a number"))?;
            std::thread::sleep(Duration::from_secs_f64(secs.max(0.0)));
            return Ok(());
        }
        if let Some(args) = call_args(line, "os._exit") {
            let code = match self.eval(args)? {
                Value::Int(c) => c as i32,
                _ => 1,
            };
            let _ = std::io::stdout().flush();
            std::process::exit(code);
        }
        if let Some(args) = call_args(line, "sys.stderr.write") {
            out.stderr.push_str(&self.eval(args)?.display());
            return Ok(());
        }
        if let Some(rest) = line.strip_prefix("raise ") {
            let rest = rest.trim();
            return Err(match rest.find('(') {
                Some(open) if rest.ends_with(')') => {
                    let msg = self.eval(&rest[open + 1..rest.len() - 1]).map(|v| v.display());
                    Raised::new(&rest[..open], msg.unwrap_or_default())
                }
                _ => Raised::new(rest, ""),
            });
        }
        if let Some((name, expr)) = split_assignment(line) {
            let value = match self.eval(expr) {
                Ok(v) => v,
                Err(Raised(kind, msg)) if kind == "NotImplementedError" => {
                    let _ = msg;
                    Value::Opaque(expr.to_string())
                }
                Err(e) => return Err(e),
            };
            self.vars.insert(name.to_string(), value);
            return Ok(());
        }
        // Bare expressions are evaluated for their errors only.
        match self.eval(line) {
            Ok(_) => Ok(()),
            Err(Raised(kind, _)) if kind == "NotImplementedError" => Ok(()),
            Err(e) => Err(e),
        }
    }

    fn eval(&self, src: &str) -> Result<Value, Raised> {
        let tokens = tokenize(src)?;
        let mut parser = ExprParser {
            tokens: &tokens,
            pos: 0,
            interp: self,
            src,
        };
        let value = parser.tuple_expr()?;
        if parser.pos != tokens.len() {
            return Err(unsupported(src));
        }
        Ok(value)
    }

    fn lookup(&self, name: &str) -> Result<Value, Raised> {
        if let Some(v) = self.vars.get(name) {
            return Ok(v.clone());
        }
        if let Some(idx) = name.strip_prefix("image_clue_").and_then(|i| i.parse::<usize>().ok()) {
            if idx < self.images.len() {
                return Ok(Value::Opaque(name.to_string()));
            }
        }
        match name {
            "None" => Ok(Value::None),
            "True" => Ok(Value::Int(1)),
            "False" => Ok(Value::Int(0)),
            _ => Err(Raised::new(
                "NameError",
                format!("name '{name}' is not defined"),
            )),
        }
    }

    fn attribute(&self, base: &Value, attr: &str) -> Result<Value, Raised> {
        if let Value::Opaque(name) = base {
            if let Some(idx) = name.strip_prefix("image_clue_").and_then(|i| i.parse::<usize>().ok()) {
                if let Some(&(w, h)) = self.images.get(idx) {
                    return match attr {
                        "size" => Ok(Value::Tuple(vec![Value::Int(w as i64), Value::Int(h as i64)])),
                        "width" => Ok(Value::Int(w as i64)),
                        "height" => Ok(Value::Int(h as i64)),
                        _ => Err(unsupported(attr)),
                    };
                }
            }
            return Err(unsupported(attr));
        }
        Err(Raised::new(
            "AttributeError",
            format!("'{}' object has no attribute '{attr}'", base.type_name()),
        ))
    }
}

fn unsupported(src: &str) -> Raised {
    Raised::new("NotImplementedError", format!("mock kernel cannot evaluate {src:?}"))
}

/// Names an import statement binds, e.g. `np` for `import numpy as np`.
fn imported_names(line: &str) -> Vec<String> {
    let list = match line.strip_prefix("from ") {
        Some(rest) => rest.split_once(" import ").map_or("", |(_, names)| names),
        None => line.strip_prefix("import ").unwrap_or(""),
    };
    list.trim_matches(['(', ')', ' '])
        .split(',')
        .filter_map(|item| {
            let item = item.trim();
            let name = match item.split_once(" as ") {
                Some((_, alias)) => alias.trim(),
                None => item.split('.').next().unwrap_or("").trim(),
            };
            (!name.is_empty() && name != "*").then(|| name.to_string())
        })
        .collect()
}

/// If `line` is exactly `name(...)`, returns the argument text.
fn call_args<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(name)?.trim_start();
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    Some(inner)
}

fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let eq = line.find('=')?;
    let (lhs, rhs) = (&line[..eq], &line[eq + 1..]);
    if rhs.starts_with('=') || lhs.ends_with(['!', '<', '>', '+', '-', '*', '/']) {
        return None;
    }
    let name = lhs.trim();
    let ident = name
        .chars()
        .enumerate()
        .all(|(i, c)| c == '_' || c.is_ascii_alphabetic() || (i > 0 && c.is_ascii_digit()));
    (ident && !name.is_empty()).then(|| (name, rhs.trim()))
}

/// Splits on commas that are not nested in brackets or string literals.
fn split_top_level(src: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut start = 0;
    let mut chars = src.char_indices();
    while let Some((i, c)) = chars.next() {
        match (quote, c) {
            (Some(_), '\\') => {
                chars.next();
            }
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '\'' | '"') => quote = Some(c),
            (None, '(' | '[' | '{') => depth += 1,
            (None, ')' | ']' | '}') => depth -= 1,
            (None, ',') if depth == 0 => {
                parts.push(&src[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&src[start..]);
    parts
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Value),
    Str(String),
    Ident(String),
    Op(&'static str),
}

fn tokenize(src: &str) -> Result<Vec<Tok>, Raised> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.' || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().filter(|&&c| c != '_').collect();
            let value = if text.contains('.') {
                Value::Float(text.parse().map_err(|_| unsupported(src))?)
            } else {
                Value::Int(text.parse().map_err(|_| unsupported(src))?)
            };
            toks.push(Tok::Num(value));
        } else if c == '"' || c == '\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(Raised::new("SyntaxError", "unterminated string literal")),
                    Some(&q) if q == c => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(&other) => s.push(other),
                            None => {}
                        }
                        i += 2;
                    }
                    Some(&other) => {
                        s.push(other);
                        i += 1;
                    }
                }
            }
            toks.push(Tok::Str(s));
        } else if c == '_' || c.is_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i] == '_' || chars[i].is_alphanumeric()) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            // f-strings and other prefixed literals are out of scope.
            if matches!(chars.get(i), Some('"' | '\'')) {
                return Err(unsupported(src));
            }
            toks.push(Tok::Ident(word));
        } else {
            let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let op = match two.as_str() {
                "//" => Some("//"),
                "**" => Some("**"),
                _ => None,
            };
            if let Some(op) = op {
                toks.push(Tok::Op(op));
                i += 2;
                continue;
            }
            let op = match c {
                '+' => "+",
                '-' => "-",
                '*' => "*",
                '/' => "/",
                '%' => "%",
                '(' => "(",
                ')' => ")",
                ',' => ",",
                '.' => ".",
                _ => return Err(unsupported(src)),
            };
            toks.push(Tok::Op(op));
            i += 1;
        }
    }
    Ok(toks)
}

struct ExprParser<'a> {
    tokens: &'a [Tok],
    pos: usize,
    interp: &'a Interpreter,
    src: &'a str,
}

impl ExprParser<'_> {
    fn peek_op(&self, op: &str) -> bool {
        matches!(self.tokens.get(self.pos), Some(Tok::Op(o)) if *o == op)
    }

    fn tuple_expr(&mut self) -> Result<Value, Raised> {
        let first = self.sum()?;
        if !self.peek_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.peek_op(",") {
            self.pos += 1;
            if self.pos == self.tokens.len() || self.peek_op(")") {
                break;
            }
            items.push(self.sum()?);
        }
        Ok(Value::Tuple(items))
    }

    fn sum(&mut self) -> Result<Value, Raised> {
        let mut acc = self.product()?;
        loop {
            let op = if self.peek_op("+") {
                "+"
            } else if self.peek_op("-") {
                "-"
            } else {
                return Ok(acc);
            };
            self.pos += 1;
            let rhs = self.product()?;
            acc = binary(op, acc, rhs)?;
        }
    }

    fn product(&mut self) -> Result<Value, Raised> {
        let mut acc = self.unary()?;
        loop {
            let op = ["*", "/", "//", "%"].into_iter().find(|op| self.peek_op(op));
            let Some(op) = op else { return Ok(acc) };
            self.pos += 1;
            let rhs = self.unary()?;
            acc = binary(op, acc, rhs)?;
        }
    }

    fn unary(&mut self) -> Result<Value, Raised> {
        if self.peek_op("-") {
            self.pos += 1;
            return binary("-", Value::Int(0), self.unary()?);
        }
        if self.peek_op("+") {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Value, Raised> {
        let base = self.postfix()?;
        if self.peek_op("**") {
            self.pos += 1;
            let exp = self.unary()?;
            return binary("**", base, exp);
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Value, Raised> {
        let mut value = self.atom()?;
        while self.peek_op(".") {
            self.pos += 1;
            let Some(Tok::Ident(attr)) = self.tokens.get(self.pos) else {
                return Err(unsupported(self.src));
            };
            self.pos += 1;
            if self.peek_op("(") {
                return Err(unsupported(self.src));
            }
            value = self.interp.attribute(&value, attr)?;
        }
        Ok(value)
    }

    fn atom(&mut self) -> Result<Value, Raised> {
        let tok = self.tokens.get(self.pos).cloned().ok_or_else(|| unsupported(self.src))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(v),
            Tok::Str(s) => Ok(Value::Str(s)),
            Tok::Op("(") => {
                if self.peek_op(")") {
                    self.pos += 1;
                    return Ok(Value::Tuple(vec![]));
                }
                let inner = self.tuple_expr()?;
                if !self.peek_op(")") {
                    return Err(unsupported(self.src));
                }
                self.pos += 1;
                Ok(inner)
            }
            Tok::Ident(name) if self.peek_op("(") => {
                self.pos += 1;
                let mut args = Vec::new();
                while !self.peek_op(")") {
                    args.push(self.sum()?);
                    if self.peek_op(",") {
                        self.pos += 1;
                    } else if !self.peek_op(")") {
                        return Err(unsupported(self.src));
                    }
                }
                self.pos += 1;
                builtin(&name, args, self.src)
            }
            Tok::Ident(name) => self.interp.lookup(&name),
            Tok::Op(_) => Err(unsupported(self.src)),
        }
    }
}

fn builtin(name: &str, args: Vec<Value>, src: &str) -> Result<Value, Raised> {
    let number = |v: &Value| {
        v.as_f64()
            .ok_or_else(|| Raised::new("TypeError", format!("{name}() needs a number, got {}", v.type_name())))
    };
    match (name, args.as_slice()) {
        ("len", [Value::Str(s)]) => Ok(Value::Int(s.chars().count() as i64)),
        ("len", [Value::Tuple(t)]) => Ok(Value::Int(t.len() as i64)),
        ("str", [v]) => Ok(Value::Str(v.display())),
        ("repr", [v]) => Ok(Value::Str(v.repr())),
        ("int", [Value::Str(s)]) => s.trim().parse().map(Value::Int).map_err(|_| {
            Raised::new("ValueError", format!("invalid literal for int() with base 10: '{s}'"))
        }),
        ("int", [v]) => Ok(Value::Int(number(v)?.trunc() as i64)),
        ("float", [v]) => Ok(Value::Float(number(v)?)),
        ("abs", [Value::Int(i)]) => Ok(Value::Int(i.abs())),
        ("abs", [v]) => Ok(Value::Float(number(v)?.abs())),
        ("round", [v]) => Ok(Value::Int(round_half_even(number(v)?) as i64)),
        ("round", [v, Value::Int(d)]) => {
            let scale = 10f64.powi(*d as i32);
            Ok(Value::Float(round_half_even(number(v)? * scale) / scale))
        }
        ("min" | "max", [_, _, ..]) => {
            let mut best = args[0].clone();
            for v in &args[1..] {
                let better = if name == "min" {
                    number(v)? < number(&best)?
                } else {
                    number(v)? > number(&best)?
                };
                if better {
                    best = v.clone();
                }
            }
            Ok(best)
        }
        _ => Err(unsupported(src)),
    }
}

fn round_half_even(x: f64) -> f64 {
    let r = x.round();
    if (x - x.trunc()).abs() == 0.5 && r % 2.0 != 0.0 {
        r - x.signum()
    } else {
        r
    }
}

fn binary(op: &str, lhs: Value, rhs: Value) -> Result<Value, Raised> {
    use Value::{Float, Int, Str, Tuple};
    let type_error = |l: &Value, r: &Value| {
        Raised::new(
            "TypeError",
            format!(
                "unsupported operand type(s) for {op}: '{}' and '{}'",
                l.type_name(),
                r.type_name()
            ),
        )
    };
    match (op, &lhs, &rhs) {
        ("+", Str(a), Str(b)) => Ok(Str(format!("{a}{b}"))),
        ("+", Tuple(a), Tuple(b)) => Ok(Tuple(a.iter().chain(b).cloned().collect())),
        ("*", Str(s), Int(n)) | ("*", Int(n), Str(s)) => Ok(Str(s.repeat((*n).max(0) as usize))),
        (_, Int(a), Int(b)) => {
            let (a, b) = (*a, *b);
            match op {
                "+" => Ok(Int(a.wrapping_add(b))),
                "-" => Ok(Int(a.wrapping_sub(b))),
                "*" => Ok(Int(a.wrapping_mul(b))),
                "/" if b == 0 => Err(Raised::new("ZeroDivisionError", "division by zero")),
                "/" => Ok(Float(a as f64 / b as f64)),
                "//" | "%" if b == 0 => Err(Raised::new(
                    "ZeroDivisionError",
                    "integer division or modulo by zero",
                )),
                "//" => Ok(Int(a.div_euclid(b) - if b < 0 && a.rem_euclid(b) != 0 { 1 } else { 0 })),
                "%" => Ok(Int(((a % b) + b) % b)),
                "**" if b >= 0 => Ok(Int(a.wrapping_pow(b as u32))),
                "**" => Ok(Float((a as f64).powf(b as f64))),
                _ => Err(type_error(&lhs, &rhs)),
            }
        }
        _ => {
            let (Some(a), Some(b)) = (lhs.as_f64(), rhs.as_f64()) else {
                return Err(type_error(&lhs, &rhs));
            };
            match op {
                "+" => Ok(Float(a + b)),
                "-" => Ok(Float(a - b)),
                "*" => Ok(Float(a * b)),
                "/" | "//" | "%" if b == 0.0 => Err(Raised::new("ZeroDivisionError", "float division by zero")),
                "/" => Ok(Float(a / b)),
                "//" => Ok(Float((a / b).floor())),
                "%" => Ok(Float(a - b * (a / b).floor())),
                "**" => Ok(Float(a.powf(b))),
                _ => Err(type_error(&lhs, &rhs)),
            }
        }
    }
}
