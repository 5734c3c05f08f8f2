//! Recursive-descent parser and resolver for `.sub` sources.
//!
//! Parsing builds a name-based syntax tree; resolution then type-checks
//! it, binds names to slots, numbers branch nodes and mutation sites in
//! source order and enumerates the weak mutants of every site.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::lexer::{tokenize, Tok, Token};
use super::*;

#[derive(Debug, Clone)]
enum RawExpr {
    Int(i64),
    Bool(bool),
    Name(String),
    Index(Box<RawExpr>, Box<RawExpr>),
    Length(Box<RawExpr>),
    NewArray(Box<RawExpr>),
    Neg(Box<RawExpr>),
    Not(Box<RawExpr>),
    Binary(BinOp, Box<RawExpr>, Box<RawExpr>),
}

#[derive(Debug, Clone)]
struct RawStmt {
    line: u32,
    kind: RawStmtKind,
}

#[derive(Debug, Clone)]
enum RawStmtKind {
    Let(String, Type, RawExpr),
    Assign(String, RawExpr),
    Store(String, RawExpr, RawExpr),
    If(RawExpr, Vec<RawStmt>, Vec<RawStmt>),
    While(RawExpr, Option<i64>, Vec<RawStmt>),
    Return(Option<RawExpr>),
    Throw(String),
}

#[derive(Debug, Clone)]
struct RawMethod {
    name: String,
    params: Vec<Param>,
    ret: Option<Type>,
    body: Vec<RawStmt>,
    line: u32,
    observer: bool,
    ctor: bool,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SubjectError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = self.peek();
        Err(SubjectError::Syntax {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(x) if x == kw)
    }

    fn expect_sym(&mut self, s: &str) -> PResult<Token> {
        if self.is_sym(s) {
            Ok(self.bump())
        } else {
            self.err(format!("expected `{s}`, found {}", describe(&self.peek().tok)))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Token> {
        if self.is_kw(kw) {
            Ok(self.bump())
        } else {
            self.err(format!("expected `{kw}`, found {}", describe(&self.peek().tok)))
        }
    }

    fn ident(&mut self) -> PResult<(String, u32)> {
        match &self.peek().tok {
            Tok::Ident(name) if !is_keyword(name) => {
                let name = name.clone();
                let line = self.bump().line;
                Ok((name, line))
            }
            other => {
                let d = describe(other);
                self.err(format!("expected identifier, found {d}"))
            }
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        if self.is_kw("bool") {
            self.bump();
            return Ok(Type::Bool);
        }
        self.expect_kw("int")?;
        if self.is_sym("[]") {
            self.bump();
            return Ok(Type::IntArray);
        }
        if self.is_sym("[") && matches!(self.peek_at(1), Tok::Sym("]")) {
            self.bump();
            self.bump();
            return Ok(Type::IntArray);
        }
        Ok(Type::Int)
    }

    fn class(&mut self) -> PResult<(String, u32, Vec<(String, Type, RawExpr, u32)>, Vec<RawMethod>)> {
        let header = self.expect_kw("class")?;
        let (name, _) = self.ident()?;
        self.expect_sym("{")?;
        let mut fields = Vec::new();
        let mut methods = Vec::new();
        while !self.is_sym("}") {
            if self.is_kw("field") {
                let line = self.bump().line;
                let (fname, _) = self.ident()?;
                self.expect_sym(":")?;
                let ty = self.ty()?;
                self.expect_sym("=")?;
                let init = self.expr()?;
                self.expect_sym(";")?;
                fields.push((fname, ty, init, line));
            } else if self.is_kw("ctor") {
                let line = self.bump().line;
                let params = self.params()?;
                let body = self.block()?;
                methods.push(RawMethod {
                    name: name.clone(),
                    params,
                    ret: None,
                    body,
                    line,
                    observer: false,
                    ctor: true,
                });
            } else if self.is_kw("fn") || self.is_kw("observer") {
                let observer = self.is_kw("observer");
                let first = self.bump();
                if observer {
                    self.expect_kw("fn")?;
                }
                let (mname, _) = self.ident()?;
                let params = self.params()?;
                let ret = if self.is_sym("->") {
                    self.bump();
                    Some(self.ty()?)
                } else {
                    None
                };
                let body = self.block()?;
                methods.push(RawMethod {
                    name: mname,
                    params,
                    ret,
                    body,
                    line: first.line,
                    observer,
                    ctor: false,
                });
            } else {
                let d = describe(&self.peek().tok);
                return self.err(format!("expected `field`, `ctor`, `fn` or `observer`, found {d}"));
            }
        }
        self.expect_sym("}")?;
        if self.peek().tok != Tok::Eof {
            return self.err("trailing input after class body");
        }
        Ok((name, header.line, fields, methods))
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                let (name, _) = self.ident()?;
                self.expect_sym(":")?;
                let ty = self.ty()?;
                params.push(Param { name, ty });
                if self.is_sym(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(params)
    }

    fn block(&mut self) -> PResult<Vec<RawStmt>> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.is_sym("}") {
            if self.peek().tok == Tok::Eof {
                return self.err("unterminated block");
            }
            out.push(self.stmt()?);
        }
        self.expect_sym("}")?;
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<RawStmt> {
        let line = self.peek().line;
        let kind = if self.is_kw("let") {
            self.bump();
            let (name, _) = self.ident()?;
            self.expect_sym(":")?;
            let ty = self.ty()?;
            self.expect_sym("=")?;
            let init = self.expr()?;
            self.expect_sym(";")?;
            RawStmtKind::Let(name, ty, init)
        } else if self.is_kw("if") {
            return self.if_stmt();
        } else if self.is_kw("while") {
            self.bump();
            self.expect_sym("(")?;
            let cond = self.expr()?;
            self.expect_sym(")")?;
            let bound = if self.is_kw("bound") {
                self.bump();
                match self.bump().tok {
                    Tok::Int(n) => Some(n),
                    _ => return self.err("expected integer loop bound"),
                }
            } else {
                None
            };
            let body = self.block()?;
            RawStmtKind::While(cond, bound, body)
        } else if self.is_kw("return") {
            self.bump();
            let value = if self.is_sym(";") { None } else { Some(self.expr()?) };
            self.expect_sym(";")?;
            RawStmtKind::Return(value)
        } else if self.is_kw("throw") {
            self.bump();
            let (name, _) = self.ident()?;
            self.expect_sym(";")?;
            RawStmtKind::Throw(name)
        } else {
            let (name, _) = self.ident()?;
            if self.is_sym("[") {
                self.bump();
                let index = self.expr()?;
                self.expect_sym("]")?;
                self.expect_sym("=")?;
                let value = self.expr()?;
                self.expect_sym(";")?;
                RawStmtKind::Store(name, index, value)
            } else {
                self.expect_sym("=")?;
                let value = self.expr()?;
                self.expect_sym(";")?;
                RawStmtKind::Assign(name, value)
            }
        };
        Ok(RawStmt { line, kind })
    }

    fn if_stmt(&mut self) -> PResult<RawStmt> {
        let line = self.expect_kw("if")?.line;
        self.expect_sym("(")?;
        let cond = self.expr()?;
        self.expect_sym(")")?;
        let then_body = self.block()?;
        let else_body = if self.is_kw("else") {
            self.bump();
            if self.is_kw("if") {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(RawStmt {
            line,
            kind: RawStmtKind::If(cond, then_body, else_body),
        })
    }

    fn expr(&mut self) -> PResult<RawExpr> {
        self.binary(1)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        let Tok::Sym(s) = &self.peek().tok else {
            return None;
        };
        Some(match *s {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<RawExpr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = RawExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<RawExpr> {
        if self.is_sym("-") {
            self.bump();
            let inner = self.unary()?;
            return Ok(match inner {
                RawExpr::Int(v) => RawExpr::Int(-v),
                other => RawExpr::Neg(Box::new(other)),
            });
        }
        if self.is_sym("!") {
            self.bump();
            return Ok(RawExpr::Not(Box::new(self.unary()?)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<RawExpr> {
        let mut e = self.primary()?;
        loop {
            if self.is_sym("[") {
                self.bump();
                let index = self.expr()?;
                self.expect_sym("]")?;
                e = RawExpr::Index(Box::new(e), Box::new(index));
            } else if self.is_sym(".") {
                self.bump();
                self.expect_kw("length")?;
                e = RawExpr::Length(Box::new(e));
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<RawExpr> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Int(v) => {
                self.bump();
                Ok(RawExpr::Int(v))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(ref k) if k == "true" || k == "false" => {
                self.bump();
                Ok(RawExpr::Bool(k == "true"))
            }
            Tok::Ident(ref k) if k == "new" => {
                self.bump();
                self.expect_kw("int")?;
                self.expect_sym("[")?;
                let len = self.expr()?;
                self.expect_sym("]")?;
                Ok(RawExpr::NewArray(Box::new(len)))
            }
            Tok::Ident(ref k) if !is_keyword(k) => {
                self.bump();
                Ok(RawExpr::Name(k.clone()))
            }
            other => self.err(format!("expected expression, found {}", describe(&other))),
        }
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(
        s,
        "class"
            | "field"
            | "ctor"
            | "fn"
            | "observer"
            | "let"
            | "if"
            | "else"
            | "while"
            | "bound"
            | "return"
            | "throw"
            | "true"
            | "false"
            | "new"
            | "int"
            | "bool"
            | "length"
    )
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".to_string(),
    }
}

pub(crate) fn parse_subject(source: &str) -> Result<SubjectClass, SubjectError> {
    let toks = tokenize(source)?;
    let mut parser = Parser { toks, pos: 0 };
    let (name, header_line, raw_fields, raw_methods) = parser.class()?;
    Resolver::new(source, name, header_line).resolve(raw_fields, raw_methods)
}

struct Resolver {
    name: String,
    header_line: u32,
    source_lines: Vec<String>,
    fields: Vec<Field>,
    branches: Vec<BranchInfo>,
    sites: Vec<SiteInfo>,
    mutants: Vec<MutantInfo>,
    lines: BTreeMap<Line, LineInfo>,
    literals: BTreeSet<i64>,
}

/// Per-method resolution state.
struct Scope<'a> {
    method: MethodRef,
    params: &'a [Param],
    ret: Option<Type>,
    is_ctor: bool,
    locals: Vec<Local>,
    visible: Vec<Vec<(String, u16)>>,
    arms: Vec<Outcome>,
    line: u32,
}

fn sem<T>(line: u32, message: impl Into<String>) -> PResult<T> {
    Err(SubjectError::Semantic {
        line,
        message: message.into(),
    })
}

impl Resolver {
    fn new(source: &str, name: String, header_line: u32) -> Self {
        Resolver {
            name,
            header_line,
            source_lines: source.lines().map(str::to_string).collect(),
            fields: Vec::new(),
            branches: Vec::new(),
            sites: Vec::new(),
            mutants: Vec::new(),
            lines: BTreeMap::new(),
            literals: BTreeSet::new(),
        }
    }

    fn resolve(
        mut self,
        raw_fields: Vec<(String, Type, RawExpr, u32)>,
        raw_methods: Vec<RawMethod>,
    ) -> PResult<SubjectClass> {
        for (name, ty, init, line) in raw_fields {
            if self.fields.iter().any(|f| f.name == name) {
                return sem(line, format!("duplicate field `{name}`"));
            }
            let init = self.constant_expr(&init, line)?;
            if init.ty != ty {
                return sem(line, format!("field `{name}` declared {ty} but initialized with {}", init.ty));
            }
            self.fields.push(Field { name, ty, init });
        }

        let mut seen_ctor = HashSet::new();
        let mut seen_method = HashSet::new();
        let mut ctors_raw = Vec::new();
        let mut methods_raw = Vec::new();
        for m in raw_methods {
            if m.ctor {
                if !seen_ctor.insert(m.params.len()) {
                    return sem(m.line, format!("duplicate constructor with {} parameters", m.params.len()));
                }
                ctors_raw.push(m);
            } else {
                if !seen_method.insert((m.name.clone(), m.params.len())) {
                    return sem(m.line, format!("duplicate method `{}` with {} parameters", m.name, m.params.len()));
                }
                methods_raw.push(m);
            }
        }
        if ctors_raw.is_empty() {
            ctors_raw.push(RawMethod {
                name: self.name.clone(),
                params: Vec::new(),
                ret: None,
                body: Vec::new(),
                line: self.header_line,
                observer: false,
                ctor: true,
            });
        }
        let implicit_ctor = ctors_raw.len() == 1 && ctors_raw[0].line == self.header_line;

        let mut constructors = Vec::new();
        for (i, m) in ctors_raw.into_iter().enumerate() {
            let mut decl = self.method(MethodRef::Ctor(i as u16), m)?;
            decl.implicit = implicit_ctor;
            constructors.push(decl);
        }
        let mut methods = Vec::new();
        for (i, m) in methods_raw.into_iter().enumerate() {
            methods.push(self.method(MethodRef::Method(i as u16), m)?);
        }

        Ok(SubjectClass {
            name: self.name,
            fields: self.fields,
            constructors,
            methods,
            header_line: self.header_line,
            source_lines: self.source_lines,
            branches: self.branches,
            sites: self.sites,
            mutants: self.mutants,
            lines: self.lines,
            literal_pool: self.literals.into_iter().collect(),
        })
    }

    fn claim_line(&mut self, line: u32, method: MethodRef, parent: Option<Outcome>) -> PResult<()> {
        if self.lines.contains_key(&line) {
            return sem(line, "only one statement per line is allowed");
        }
        self.lines.insert(line, LineInfo { method, parent });
        Ok(())
    }

    fn method(&mut self, mref: MethodRef, m: RawMethod) -> PResult<MethodDecl> {
        let mut param_names = HashSet::new();
        for p in &m.params {
            if !param_names.insert(p.name.clone()) {
                return sem(m.line, format!("duplicate parameter `{}`", p.name));
            }
            if self.fields.iter().any(|f| f.name == p.name) {
                return sem(m.line, format!("parameter `{}` shadows a field", p.name));
            }
        }
        if m.observer {
            if !m.params.is_empty() {
                return sem(m.line, format!("observer `{}` must not take parameters", m.name));
            }
            if m.ret.is_none() {
                return sem(m.line, format!("observer `{}` must return a value", m.name));
            }
            if writes_field(&m.body, &self.fields) {
                return sem(m.line, format!("observer `{}` modifies object state", m.name));
            }
        }
        self.claim_line(m.line, mref, None)?;
        let mut scope = Scope {
            method: mref,
            params: &m.params,
            ret: m.ret,
            is_ctor: m.ctor,
            locals: Vec::new(),
            visible: vec![Vec::new()],
            arms: Vec::new(),
            line: m.line,
        };
        let body = self.block(&m.body, &mut scope)?;
        let locals = scope.locals;
        Ok(MethodDecl {
            name: m.name,
            params: m.params,
            ret: m.ret,
            body,
            line: m.line,
            observer: m.observer,
            implicit: false,
            locals,
        })
    }

    fn block(&mut self, stmts: &[RawStmt], scope: &mut Scope) -> PResult<Vec<Stmt>> {
        scope.visible.push(Vec::new());
        let out = stmts
            .iter()
            .map(|s| self.stmt(s, scope))
            .collect::<PResult<Vec<_>>>();
        scope.visible.pop();
        out
    }

    fn stmt(&mut self, s: &RawStmt, scope: &mut Scope) -> PResult<Stmt> {
        let line = s.line;
        scope.line = line;
        let parent = scope.arms.last().copied();
        self.claim_line(line, scope.method, parent)?;
        let kind = match &s.kind {
            RawStmtKind::Let(name, ty, init) => {
                let init = self.expr(init, scope)?;
                expect_type(&init, *ty, line)?;
                if self.lookup(name, scope).is_some() {
                    return sem(line, format!("variable `{name}` is already declared"));
                }
                let slot = scope.locals.len() as u16;
                scope.locals.push(Local {
                    name: name.clone(),
                    ty: *ty,
                });
                scope.visible.last_mut().unwrap().push((name.clone(), slot));
                StmtKind::Let { slot, init }
            }
            RawStmtKind::Assign(name, value) => {
                let (var, ty) = self.var(name, line, scope)?;
                let value = self.expr(value, scope)?;
                expect_type(&value, ty, line)?;
                StmtKind::Assign { var, value }
            }
            RawStmtKind::Store(name, index, value) => {
                let (array, ty) = self.var(name, line, scope)?;
                if ty != Type::IntArray {
                    return sem(line, format!("`{name}` is not an array"));
                }
                let index = self.expr(index, scope)?;
                expect_type(&index, Type::Int, line)?;
                let value = self.expr(value, scope)?;
                expect_type(&value, Type::Int, line)?;
                StmtKind::Store { array, index, value }
            }
            RawStmtKind::If(cond, then_raw, else_raw) => {
                let branch = self.new_branch(line, scope, false);
                let cond = self.expr(cond, scope)?;
                expect_type(&cond, Type::Bool, line)?;
                scope.arms.push(Outcome { branch, value: true });
                let then_body = self.block(then_raw, scope)?;
                scope.arms.pop();
                scope.arms.push(Outcome { branch, value: false });
                let else_body = self.block(else_raw, scope)?;
                scope.arms.pop();
                StmtKind::If {
                    branch,
                    cond,
                    then_body,
                    else_body,
                }
            }
            RawStmtKind::While(cond, bound, body_raw) => {
                let bound = match bound {
                    Some(b) if *b >= 1 && *b <= u32::MAX as i64 => *b as u32,
                    Some(b) => return sem(line, format!("loop bound {b} must be positive")),
                    None => return sem(line, "unbounded loop: `while` requires `bound N`"),
                };
                let branch = self.new_branch(line, scope, true);
                let cond = self.expr(cond, scope)?;
                expect_type(&cond, Type::Bool, line)?;
                scope.arms.push(Outcome { branch, value: true });
                let body = self.block(body_raw, scope)?;
                scope.arms.pop();
                StmtKind::While {
                    branch,
                    cond,
                    bound,
                    body,
                }
            }
            RawStmtKind::Return(value) => {
                let value = match value {
                    Some(v) => Some(self.expr(v, scope)?),
                    None => None,
                };
                match (&value, scope.ret) {
                    (None, None) => {}
                    (Some(v), Some(t)) => expect_type(v, t, line)?,
                    (Some(_), None) if scope.is_ctor => {
                        return sem(line, "constructors cannot return a value")
                    }
                    (Some(_), None) => return sem(line, "void method cannot return a value"),
                    (None, Some(t)) => return sem(line, format!("missing {t} return value")),
                }
                StmtKind::Return(value)
            }
            RawStmtKind::Throw(name) => StmtKind::Throw(name.clone()),
        };
        Ok(Stmt { line, kind })
    }

    fn new_branch(&mut self, line: u32, scope: &Scope, is_loop: bool) -> BranchId {
        let id = BranchId(self.branches.len() as u32);
        self.branches.push(BranchInfo {
            line,
            method: scope.method,
            parent: scope.arms.last().copied(),
            is_loop,
        });
        id
    }

    fn lookup(&self, name: &str, scope: &Scope) -> Option<(VarRef, Type)> {
        for frame in scope.visible.iter().rev() {
            if let Some((_, slot)) = frame.iter().rev().find(|(n, _)| n == name) {
                return Some((VarRef::Local(*slot), scope.locals[*slot as usize].ty));
            }
        }
        if let Some(i) = scope.params.iter().position(|p| p.name == name) {
            return Some((VarRef::Param(i as u16), scope.params[i].ty));
        }
        self.fields
            .iter()
            .position(|f| f.name == name)
            .map(|i| (VarRef::Field(i as u16), self.fields[i].ty))
    }

    fn var(&self, name: &str, line: u32, scope: &Scope) -> PResult<(VarRef, Type)> {
        self.lookup(name, scope)
            .map_or_else(|| sem(line, format!("undeclared variable `{name}`")), Ok)
    }

    fn new_site(&mut self, scope: &Scope, operator: MutationOperator, original: &str, replacements: Vec<Replacement>) -> SiteId {
        let site = SiteId(self.sites.len() as u32);
        let start = self.mutants.len() as u32;
        for replacement in replacements {
            self.mutants.push(MutantInfo {
                spec: MutantSpec {
                    operator,
                    site,
                    original: original.to_string(),
                    replacement,
                },
                line: scope.line,
                method: scope.method,
            });
        }
        self.sites.push(SiteInfo {
            line: scope.line,
            method: scope.method,
            mutants: start..self.mutants.len() as u32,
        });
        site
    }

    fn expr(&mut self, e: &RawExpr, scope: &Scope) -> PResult<Expr> {
        let line = scope.line;
        Ok(match e {
            RawExpr::Int(v) => {
                self.literals.insert(*v);
                Expr {
                    kind: ExprKind::Int(*v),
                    ty: Type::Int,
                }
            }
            RawExpr::Bool(b) => Expr {
                kind: ExprKind::Bool(*b),
                ty: Type::Bool,
            },
            RawExpr::Name(name) => {
                let (var, ty) = self.var(name, line, scope)?;
                let site = (ty == Type::Int)
                    .then(|| self.new_site(scope, MutationOperator::Uoi, name, vec![Replacement::Negate]));
                Expr {
                    kind: ExprKind::Var { var, site },
                    ty,
                }
            }
            RawExpr::Index(a, i) => {
                let a = self.expr(a, scope)?;
                expect_type(&a, Type::IntArray, line)?;
                let i = self.expr(i, scope)?;
                expect_type(&i, Type::Int, line)?;
                Expr {
                    kind: ExprKind::Index {
                        array: Box::new(a),
                        index: Box::new(i),
                    },
                    ty: Type::Int,
                }
            }
            RawExpr::Length(a) => {
                let a = self.expr(a, scope)?;
                expect_type(&a, Type::IntArray, line)?;
                Expr {
                    kind: ExprKind::Length(Box::new(a)),
                    ty: Type::Int,
                }
            }
            RawExpr::NewArray(n) => {
                let n = self.expr(n, scope)?;
                expect_type(&n, Type::Int, line)?;
                Expr {
                    kind: ExprKind::NewArray(Box::new(n)),
                    ty: Type::IntArray,
                }
            }
            RawExpr::Neg(inner) => {
                let inner = self.expr(inner, scope)?;
                expect_type(&inner, Type::Int, line)?;
                Expr {
                    kind: ExprKind::Neg(Box::new(inner)),
                    ty: Type::Int,
                }
            }
            RawExpr::Not(inner) => {
                let inner = self.expr(inner, scope)?;
                expect_type(&inner, Type::Bool, line)?;
                Expr {
                    kind: ExprKind::Not(Box::new(inner)),
                    ty: Type::Bool,
                }
            }
            RawExpr::Binary(op, l, r) => {
                let l = self.expr(l, scope)?;
                let r = self.expr(r, scope)?;
                let (ty, site) = match op {
                    BinOp::And | BinOp::Or => {
                        expect_type(&l, Type::Bool, line)?;
                        expect_type(&r, Type::Bool, line)?;
                        (Type::Bool, None)
                    }
                    BinOp::Eq | BinOp::Ne if l.ty == Type::Bool => {
                        expect_type(&r, Type::Bool, line)?;
                        (Type::Bool, None)
                    }
                    op if op.is_relational() => {
                        expect_type(&l, Type::Int, line)?;
                        expect_type(&r, Type::Int, line)?;
                        let reps = BinOp::RELATIONAL
                            .iter()
                            .filter(|o| **o != *op)
                            .map(|o| Replacement::Op(*o))
                            .collect();
                        (Type::Bool, Some(self.new_site(scope, MutationOperator::Ror, op.token(), reps)))
                    }
                    op => {
                        expect_type(&l, Type::Int, line)?;
                        expect_type(&r, Type::Int, line)?;
                        let reps = BinOp::ARITHMETIC
                            .iter()
                            .filter(|o| **o != *op)
                            .map(|o| Replacement::Op(*o))
                            .collect();
                        (Type::Int, Some(self.new_site(scope, MutationOperator::Aor, op.token(), reps)))
                    }
                };
                Expr {
                    kind: ExprKind::Binary {
                        op: *op,
                        lhs: Box::new(l),
                        rhs: Box::new(r),
                        site,
                    },
                    ty,
                }
            }
        })
    }

    /// Field initializers: literals, arithmetic and `new int[n]`, no variables.
    fn constant_expr(&mut self, e: &RawExpr, line: u32) -> PResult<Expr> {
        let kind_ty = match e {
            RawExpr::Int(v) => {
                self.literals.insert(*v);
                (ExprKind::Int(*v), Type::Int)
            }
            RawExpr::Bool(b) => (ExprKind::Bool(*b), Type::Bool),
            RawExpr::NewArray(n) => {
                let n = self.constant_expr(n, line)?;
                expect_type(&n, Type::Int, line)?;
                (ExprKind::NewArray(Box::new(n)), Type::IntArray)
            }
            RawExpr::Neg(inner) => {
                let inner = self.constant_expr(inner, line)?;
                expect_type(&inner, Type::Int, line)?;
                (ExprKind::Neg(Box::new(inner)), Type::Int)
            }
            RawExpr::Binary(op, l, r) if op.is_arithmetic() => {
                let l = self.constant_expr(l, line)?;
                let r = self.constant_expr(r, line)?;
                expect_type(&l, Type::Int, line)?;
                expect_type(&r, Type::Int, line)?;
                (
                    ExprKind::Binary {
                        op: *op,
                        lhs: Box::new(l),
                        rhs: Box::new(r),
                        site: None,
                    },
                    Type::Int,
                )
            }
            _ => return sem(line, "field initializers must be constant expressions"),
        };
        Ok(Expr {
            kind: kind_ty.0,
            ty: kind_ty.1,
        })
    }
}

fn expect_type(e: &Expr, ty: Type, line: u32) -> PResult<()> {
    if e.ty == ty {
        Ok(())
    } else {
        sem(line, format!("type mismatch: expected {ty}, found {}", e.ty))
    }
}

fn writes_field(body: &[RawStmt], fields: &[Field]) -> bool {
    body.iter().any(|s| match &s.kind {
        RawStmtKind::Assign(n, _) | RawStmtKind::Store(n, _, _) => fields.iter().any(|f| &f.name == n),
        RawStmtKind::If(_, a, b) => writes_field(a, fields) || writes_field(b, fields),
        RawStmtKind::While(_, _, b) => writes_field(b, fields),
        _ => false,
    })
}
