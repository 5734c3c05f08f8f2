//! Text form of tests: one statement per line, sequential variable
//! names, assertions last.

use std::collections::HashMap;
use std::fmt::Write;

use thiserror::Error;

use super::*;

fn type_name(subject: &SubjectClass, t: VarType) -> &str {
    match t {
        VarType::Int => "int",
        VarType::Bool => "bool",
        VarType::IntArray => "int[]",
        VarType::Object => &subject.name,
    }
}

fn literal_text(l: &Literal) -> String {
    match l {
        Literal::Int(v) => v.to_string(),
        Literal::Bool(b) => b.to_string(),
        Literal::IntArray(vs) => array_text(vs),
    }
}

fn array_text(vs: &[i64]) -> String {
    let items: Vec<String> = vs.iter().map(i64::to_string).collect();
    format!("[{}]", items.join(", "))
}

struct Names(HashMap<VarId, usize>);

impl Names {
    fn of(test: &TestCase) -> Self {
        let mut map = HashMap::new();
        for v in test.statements.iter().filter_map(Statement::defined) {
            let n = map.len();
            map.entry(v).or_insert(n);
        }
        Names(map)
    }

    fn get(&self, v: VarId) -> String {
        match self.0.get(&v) {
            Some(n) => format!("v{n}"),
            None => format!("?{}", v.0),
        }
    }

    fn args(&self, args: &[Arg]) -> String {
        args.iter()
            .map(|a| match a {
                Arg::Var(v) => self.get(*v),
                Arg::Lit(l) => literal_text(l),
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Renders a test with optional assertions and a raised-exception note.
pub fn render_test(
    subject: &SubjectClass,
    test: &TestCase,
    assertions: &[Assertion],
    raises: Option<&(usize, String)>,
) -> String {
    let names = Names::of(test);
    let mut out = String::from("test {\n");
    for (i, s) in test.statements.iter().enumerate() {
        let body = match s {
            Statement::Primitive { var, value } => format!(
                "{} {} = {};",
                type_name(subject, value.var_type()),
                names.get(*var),
                literal_text(value)
            ),
            Statement::Array { var, values } => format!("int[] {} = {};", names.get(*var), array_text(values)),
            Statement::Construct { var, ctor: _, args } => format!(
                "{} {} = new {}({});",
                subject.name,
                names.get(*var),
                subject.name,
                names.args(args)
            ),
            Statement::Call {
                result,
                receiver,
                method,
                args,
            } => {
                let decl = &subject.methods[*method as usize];
                let call = format!("{}.{}({});", names.get(*receiver), decl.name, names.args(args));
                match (result, decl.ret) {
                    (Some(r), Some(t)) => {
                        format!("{} {} = {call}", type_name(subject, t.into()), names.get(*r))
                    }
                    _ => call,
                }
            }
        };
        match raises {
            Some((at, name)) if *at == i => writeln!(out, "    {body} // raises {name}").unwrap(),
            _ => writeln!(out, "    {body}").unwrap(),
        }
    }
    for a in assertions {
        writeln!(out, "    {}", assertion_text(subject, &names, a)).unwrap();
    }
    out.push_str("}\n");
    out
}

fn assertion_text(subject: &SubjectClass, names: &Names, a: &Assertion) -> String {
    let lhs = match a.observed {
        Observed::Result(v) => names.get(v),
        Observed::Observer { var, method } => {
            format!("{}.{}()", names.get(var), subject.methods[method as usize].name)
        }
    };
    format!("assert {lhs} == {};", literal_text(&a.expected))
}

/// Renders one assertion in the context of `test`.
pub fn render_assertion(subject: &SubjectClass, test: &TestCase, a: &Assertion) -> String {
    assertion_text(subject, &Names::of(test), a)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseTestError {
    pub line: usize,
    pub message: String,
}

/// A test read back from its rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTest {
    pub test: TestCase,
    pub assertions: Vec<Assertion>,
    pub raises: Option<(usize, String)>,
}

/// Parses the rendered form. Variable `vN` becomes `VarId(N)`.
pub fn parse_test(subject: &SubjectClass, text: &str) -> Result<ParsedTest, ParseTestError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut out = ParsedTest {
        test: TestCase::default(),
        assertions: Vec::new(),
        raises: None,
    };
    loop {
        match lines.next() {
            None => return err(1, "missing `test {` header"),
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) if l.trim() == "test {" => break,
            Some((n, _)) => return err(n, "expected `test {`"),
        }
    }
    let mut closed = false;
    for (n, raw) in lines {
        let (code, comment) = match raw.find("//") {
            Some(i) => (raw[..i].trim(), Some(raw[i + 2..].trim())),
            None => (raw.trim(), None),
        };
        if code.is_empty() {
            continue;
        }
        if closed {
            return err(n, "content after closing brace");
        }
        if code == "}" {
            closed = true;
            continue;
        }
        let mut c = Cursor { s: code, line: n };
        if c.eat_word("assert") {
            let var = c.var()?;
            let observed = if c.eat(".") {
                let name = c.ident()?;
                c.expect("(")?;
                c.expect(")")?;
                let method = subject
                    .find_method(&name, 0)
                    .ok_or_else(|| c.error(&format!("unknown observer `{name}`")))?;
                Observed::Observer { var, method }
            } else {
                Observed::Result(var)
            };
            c.expect("==")?;
            let expected = c.literal()?;
            c.expect(";")?;
            c.end()?;
            out.assertions.push(Assertion { observed, expected });
            continue;
        }
        if !out.assertions.is_empty() {
            return err(n, "statement after assertions");
        }
        let stmt = parse_statement(subject, &mut c)?;
        if let Some(note) = comment.and_then(|t| t.strip_prefix("raises ")) {
            out.raises = Some((out.test.len(), note.trim().to_string()));
        }
        out.test.statements.push(stmt);
    }
    if !closed {
        return err(text.lines().count(), "missing closing `}`");
    }
    Ok(out)
}

fn parse_statement(subject: &SubjectClass, c: &mut Cursor) -> Result<Statement, ParseTestError> {
    // `vN.m(args);` has no declared type.
    if c.peek_var_dot() {
        let receiver = c.var()?;
        c.expect(".")?;
        let (method, args) = call_tail(subject, c, false)?;
        return Ok(Statement::Call {
            result: None,
            receiver,
            method,
            args,
        });
    }
    let ty = c.ident()?;
    let is_array = c.eat("[]");
    let var = c.var()?;
    c.expect("=")?;
    let stmt = if c.eat_word("new") {
        let class = c.ident()?;
        if class != subject.name {
            return Err(c.error(&format!("unknown class `{class}`")));
        }
        let args = c.args()?;
        let ctor = subject
            .find_ctor(args.len())
            .ok_or_else(|| c.error("no constructor with this arity"))?;
        c.expect(";")?;
        Statement::Construct { var, ctor, args }
    } else if c.peek_var_dot() {
        let receiver = c.var()?;
        c.expect(".")?;
        let (method, args) = call_tail(subject, c, true)?;
        Statement::Call {
            result: Some(var),
            receiver,
            method,
            args,
        }
    } else {
        let lit = c.literal()?;
        c.expect(";")?;
        match (ty.as_str(), is_array, lit) {
            ("int", true, Literal::IntArray(values)) => Statement::Array { var, values },
            ("int", false, l @ Literal::Int(_)) | ("bool", false, l @ Literal::Bool(_)) => {
                Statement::Primitive { var, value: l }
            }
            _ => return Err(c.error("literal does not match declared type")),
        }
    };
    c.end()?;
    Ok(stmt)
}

fn call_tail(subject: &SubjectClass, c: &mut Cursor, bound: bool) -> Result<(u16, Vec<Arg>), ParseTestError> {
    let name = c.ident()?;
    let args = c.args()?;
    c.expect(";")?;
    let method = subject
        .find_method(&name, args.len())
        .ok_or_else(|| c.error(&format!("unknown method `{name}/{}`", args.len())))?;
    if bound != subject.methods[method as usize].ret.is_some() {
        return Err(c.error("result binding does not match the return type"));
    }
    Ok((method, args))
}

fn err<T>(line: usize, message: &str) -> Result<T, ParseTestError> {
    Err(ParseTestError {
        line,
        message: message.to_string(),
    })
}

struct Cursor<'a> {
    s: &'a str,
    line: usize,
}

impl Cursor<'_> {
    fn error(&self, message: &str) -> ParseTestError {
        ParseTestError {
            line: self.line,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        self.s = self.s.trim_start();
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if let Some(rest) = self.s.strip_prefix(tok) {
            self.s = rest;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, word: &str) -> bool {
        self.skip_ws();
        let rest = match self.s.strip_prefix(word) {
            Some(r) => r,
            None => return false,
        };
        if rest.starts_with(|ch: char| ch.is_alphanumeric() || ch == '_') {
            return false;
        }
        self.s = rest;
        true
    }

    fn expect(&mut self, tok: &str) -> Result<(), ParseTestError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{tok}`")))
        }
    }

    fn end(&mut self) -> Result<(), ParseTestError> {
        self.skip_ws();
        if self.s.is_empty() {
            Ok(())
        } else {
            Err(self.error(&format!("unexpected `{}`", self.s)))
        }
    }

    fn ident(&mut self) -> Result<String, ParseTestError> {
        self.skip_ws();
        let end = self
            .s
            .find(|ch: char| !(ch.is_alphanumeric() || ch == '_'))
            .unwrap_or(self.s.len());
        if end == 0 || self.s.starts_with(|ch: char| ch.is_ascii_digit()) {
            return Err(self.error("expected identifier"));
        }
        let (id, rest) = self.s.split_at(end);
        self.s = rest;
        Ok(id.to_string())
    }

    fn peek_var_dot(&self) -> bool {
        let s = self.s.trim_start();
        let Some(rest) = s.strip_prefix('v') else {
            return false;
        };
        let digits = rest.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(rest.len());
        digits > 0 && rest[digits..].trim_start().starts_with('.')
    }

    fn var(&mut self) -> Result<VarId, ParseTestError> {
        let id = self.ident()?;
        id.strip_prefix('v')
            .and_then(|n| n.parse::<u32>().ok())
            .map(VarId)
            .ok_or_else(|| self.error(&format!("expected variable, found `{id}`")))
    }

    fn int(&mut self) -> Result<i64, ParseTestError> {
        self.skip_ws();
        let neg = self.s.starts_with('-');
        let body = if neg { &self.s[1..] } else { self.s };
        let end = body.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(body.len());
        if end == 0 {
            return Err(self.error("expected integer"));
        }
        let text = &self.s[..end + neg as usize];
        let v = text.parse::<i64>().map_err(|_| self.error("integer out of range"))?;
        self.s = &self.s[end + neg as usize..];
        Ok(v)
    }

    fn literal(&mut self) -> Result<Literal, ParseTestError> {
        if self.eat_word("true") {
            return Ok(Literal::Bool(true));
        }
        if self.eat_word("false") {
            return Ok(Literal::Bool(false));
        }
        if self.eat("[") {
            let mut values = Vec::new();
            if !self.eat("]") {
                loop {
                    values.push(self.int()?);
                    if self.eat("]") {
                        break;
                    }
                    self.expect(",")?;
                }
            }
            return Ok(Literal::IntArray(values));
        }
        Ok(Literal::Int(self.int()?))
    }

    fn args(&mut self) -> Result<Vec<Arg>, ParseTestError> {
        self.expect("(")?;
        let mut out = Vec::new();
        if self.eat(")") {
            return Ok(out);
        }
        loop {
            self.skip_ws();
            let arg = if self.s.starts_with('v') {
                Arg::Var(self.var()?)
            } else {
                Arg::Lit(self.literal()?)
            };
            out.push(arg);
            if self.eat(")") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }
}

/// Renames variables to `VarId(0..)` in definition order.
pub fn normalize_vars(test: &TestCase) -> TestCase {
    let names = Names::of(test);
    let map = |v: VarId| VarId(names.0.get(&v).map(|&n| n as u32).unwrap_or(u32::MAX));
    let args = |args: &[Arg]| {
        args.iter()
            .map(|a| match a {
                Arg::Var(v) => Arg::Var(map(*v)),
                Arg::Lit(l) => Arg::Lit(l.clone()),
            })
            .collect()
    };
    TestCase::new(
        test.statements
            .iter()
            .map(|s| match s {
                Statement::Primitive { var, value } => Statement::Primitive {
                    var: map(*var),
                    value: value.clone(),
                },
                Statement::Array { var, values } => Statement::Array {
                    var: map(*var),
                    values: values.clone(),
                },
                Statement::Construct { var, ctor, args: a } => Statement::Construct {
                    var: map(*var),
                    ctor: *ctor,
                    args: args(a),
                },
                Statement::Call {
                    result,
                    receiver,
                    method,
                    args: a,
                } => Statement::Call {
                    result: result.map(map),
                    receiver: map(*receiver),
                    method: *method,
                    args: args(a),
                },
            })
            .collect(),
    )
}
