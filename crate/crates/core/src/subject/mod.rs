//! The subject language: a small deterministic imperative class language
//! standing in for the class under test.
//!
//! A subject is parsed from `.sub` source into a fully resolved
//! [`SubjectClass`]. Resolution assigns every variable reference a slot,
//! every branch node a [`BranchId`] and every mutable expression a
//! [`SiteId`] whose weak mutants are enumerated up front, so the
//! interpreter never has to look anything up by name.

mod describe;
mod lexer;
mod parser;
mod pretty;
mod targets;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use describe::render_target_description;
pub use targets::{
    control_dependencies, extract_targets, ControlDeps, CoverageTarget, TargetId, TargetKind, TargetSet,
};

/// Source line of a statement. Statement lines are unique within a subject.
pub type Line = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubjectError {
    Syntax { line: u32, col: u32, message: String },
    Semantic { line: u32, message: String },
}

impl fmt::Display for SubjectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubjectError::Syntax { line, col, message } => {
                write!(f, "syntax error at {line}:{col}: {message}")
            }
            SubjectError::Semantic { line, message } => {
                write!(f, "semantic error at line {line}: {message}")
            }
        }
    }
}

impl std::error::Error for SubjectError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Type {
    Int,
    Bool,
    IntArray,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Int => "int",
            Type::Bool => "bool",
            Type::IntArray => "int[]",
        })
    }
}

/// Identifies a constructor or a method of the subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodRef {
    Ctor(u16),
    Method(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BranchId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MutantId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SiteId(pub u32);

/// One arm of a branch node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub branch: BranchId,
    pub value: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    pub ty: Type,
    pub init: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Local {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Option<Type>,
    pub body: Vec<Stmt>,
    /// Line of the declaration header; executing the method hits it.
    pub line: Line,
    pub observer: bool,
    /// Constructors synthesized for classes that declare none.
    pub implicit: bool,
    pub locals: Vec<Local>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarRef {
    Field(u16),
    Param(u16),
    Local(u16),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub line: Line,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Let {
        slot: u16,
        init: Expr,
    },
    Assign {
        var: VarRef,
        value: Expr,
    },
    Store {
        array: VarRef,
        index: Expr,
        value: Expr,
    },
    If {
        branch: BranchId,
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    While {
        branch: BranchId,
        cond: Expr,
        bound: u32,
        body: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Throw(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub const ARITHMETIC: [BinOp; 5] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem];
    pub const RELATIONAL: [BinOp; 6] =
        [BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge, BinOp::Eq, BinOp::Ne];

    pub fn token(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        Self::ARITHMETIC.contains(&self)
    }

    pub fn is_relational(self) -> bool {
        Self::RELATIONAL.contains(&self)
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    /// A variable read. Int reads carry a UOI mutation site.
    Var { var: VarRef, site: Option<SiteId> },
    Index { array: Box<Expr>, index: Box<Expr> },
    Length(Box<Expr>),
    NewArray(Box<Expr>),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        site: Option<SiteId>,
    },
}

/// Mutation operators applied to subject expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MutationOperator {
    /// Relational operator replacement.
    Ror,
    /// Arithmetic operator replacement.
    Aor,
    /// Negation of an integer operand.
    Uoi,
}

impl MutationOperator {
    pub fn describe(self) -> &'static str {
        match self {
            MutationOperator::Ror => "relational operator replacement",
            MutationOperator::Aor => "arithmetic operator replacement",
            MutationOperator::Uoi => "unary operator insertion (operand negation)",
        }
    }
}

/// The concrete change a mutant applies at its site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Replacement {
    Op(BinOp),
    Negate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantSpec {
    pub operator: MutationOperator,
    pub site: SiteId,
    pub original: String,
    pub replacement: Replacement,
}

impl MutantSpec {
    pub fn replacement_token(&self) -> &'static str {
        match self.replacement {
            Replacement::Op(op) => op.token(),
            Replacement::Negate => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteInfo {
    pub line: Line,
    pub method: MethodRef,
    pub mutants: Range<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchInfo {
    pub line: Line,
    pub method: MethodRef,
    /// Enclosing branch arm, if the branch statement is nested.
    pub parent: Option<Outcome>,
    pub is_loop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineInfo {
    pub method: MethodRef,
    pub parent: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutantInfo {
    pub spec: MutantSpec,
    pub line: Line,
    pub method: MethodRef,
}

/// A parsed, resolved and instrumented class under test.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectClass {
    pub name: String,
    pub fields: Vec<Field>,
    pub constructors: Vec<MethodDecl>,
    pub methods: Vec<MethodDecl>,
    /// Line of the `class` header.
    pub header_line: Line,
    pub(crate) source_lines: Vec<String>,
    pub(crate) branches: Vec<BranchInfo>,
    pub(crate) sites: Vec<SiteInfo>,
    pub(crate) mutants: Vec<MutantInfo>,
    /// Every executable line: method headers and statements.
    pub(crate) lines: BTreeMap<Line, LineInfo>,
    pub(crate) literal_pool: Vec<i64>,
}

impl SubjectClass {
    pub fn parse(source: &str) -> Result<SubjectClass, SubjectError> {
        parser::parse_subject(source)
    }

    pub fn method(&self, m: MethodRef) -> &MethodDecl {
        match m {
            MethodRef::Ctor(i) => &self.constructors[i as usize],
            MethodRef::Method(i) => &self.methods[i as usize],
        }
    }

    /// Display name of a method; constructors are named after the class.
    pub fn method_name(&self, m: MethodRef) -> String {
        match m {
            MethodRef::Ctor(i) => {
                let decl = &self.constructors[i as usize];
                format!("{}({})", self.name, param_types(decl))
            }
            MethodRef::Method(i) => self.methods[i as usize].name.clone(),
        }
    }

    pub fn method_refs(&self) -> impl Iterator<Item = MethodRef> + '_ {
        (0..self.constructors.len() as u16)
            .map(MethodRef::Ctor)
            .chain((0..self.methods.len() as u16).map(MethodRef::Method))
    }

    pub fn observers(&self) -> impl Iterator<Item = (u16, &MethodDecl)> + '_ {
        self.methods
            .iter()
            .enumerate()
            .filter(|(_, m)| m.observer)
            .map(|(i, m)| (i as u16, m))
    }

    pub fn find_method(&self, name: &str, arity: usize) -> Option<u16> {
        self.methods
            .iter()
            .position(|m| m.name == name && m.params.len() == arity)
            .map(|i| i as u16)
    }

    pub fn find_ctor(&self, arity: usize) -> Option<u16> {
        self.constructors
            .iter()
            .position(|m| m.params.len() == arity)
            .map(|i| i as u16)
    }

    /// Source text of a line, trimmed.
    pub fn source_line(&self, line: Line) -> &str {
        self.source_lines
            .get(line.saturating_sub(1) as usize)
            .map(|s| s.trim())
            .unwrap_or("")
    }

    pub fn branches(&self) -> &[BranchInfo] {
        &self.branches
    }

    pub fn branch(&self, id: BranchId) -> &BranchInfo {
        &self.branches[id.0 as usize]
    }

    pub fn sites(&self) -> &[SiteInfo] {
        &self.sites
    }

    pub fn mutants(&self) -> &[MutantInfo] {
        &self.mutants
    }

    pub fn mutant(&self, id: MutantId) -> &MutantInfo {
        &self.mutants[id.0 as usize]
    }

    pub fn lines(&self) -> &BTreeMap<Line, LineInfo> {
        &self.lines
    }

    pub fn max_line(&self) -> Line {
        self.lines.keys().next_back().copied().unwrap_or(0)
    }

    /// Integer literals appearing in the source, used to seed test inputs.
    pub fn literal_pool(&self) -> &[i64] {
        &self.literal_pool
    }

    /// Source-like rendering of the whole class, one statement per line.
    pub fn pretty(&self) -> String {
        pretty::pretty_subject(self)
    }
}

fn param_types(decl: &MethodDecl) -> String {
    decl.params
        .iter()
        .map(|p| p.ty.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Error)]
#[error("cannot read subject {path}: {source}")]
pub struct SubjectIoError {
    pub path: String,
    #[source]
    pub source: std::io::Error,
}

/// Reads and parses a `.sub` file.
pub fn load_subject(path: &std::path::Path) -> Result<SubjectClass, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| SubjectIoError {
        path: path.display().to_string(),
        source,
    })?;
    Ok(SubjectClass::parse(&text)?)
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] SubjectIoError),
    #[error(transparent)]
    Subject(#[from] SubjectError),
}

/// The bundled `ArrayIntList` fixture.
pub const ARRAY_INT_LIST: &str = include_str!("../../fixtures/array_int_list.sub");
