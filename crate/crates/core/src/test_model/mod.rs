//! Test cases: the statement sequences the search evolves, their
//! minimized and assertion-augmented forms, rendering and identity.

mod render;
mod variation;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subject::{SubjectClass, TargetId, Type};

pub use render::{normalize_vars, parse_test, render_assertion, render_test, ParseTestError, ParsedTest};
pub use variation::{crossover, mutate, random_statement, random_test, VariationConfig};

/// Default maximum number of statements in a test.
pub const DEFAULT_MAX_LENGTH: usize = 40;

/// A variable defined by a test statement.
///
/// Ids are unique within a test but otherwise arbitrary; rendering
/// renames them sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Literal {
    Int(i64),
    Bool(bool),
    IntArray(Vec<i64>),
}

impl Literal {
    pub fn var_type(&self) -> VarType {
        match self {
            Literal::Int(_) => VarType::Int,
            Literal::Bool(_) => VarType::Bool,
            Literal::IntArray(_) => VarType::IntArray,
        }
    }
}

/// Static type of a test variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarType {
    Int,
    Bool,
    IntArray,
    /// An instance of the class under test.
    Object,
}

impl From<Type> for VarType {
    fn from(t: Type) -> Self {
        match t {
            Type::Int => VarType::Int,
            Type::Bool => VarType::Bool,
            Type::IntArray => VarType::IntArray,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arg {
    Var(VarId),
    Lit(Literal),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statement {
    /// `int v = 5;` or `bool v = true;`
    Primitive { var: VarId, value: Literal },
    /// `int[] v = [1, 2];`
    Array { var: VarId, values: Vec<i64> },
    /// `C v = new C(args);`
    Construct { var: VarId, ctor: u16, args: Vec<Arg> },
    /// `[T v =] recv.m(args);` Non-void calls always bind a result.
    Call {
        result: Option<VarId>,
        receiver: VarId,
        method: u16,
        args: Vec<Arg>,
    },
}

impl Statement {
    /// Variable introduced by this statement, if any.
    pub fn defined(&self) -> Option<VarId> {
        match self {
            Statement::Primitive { var, .. }
            | Statement::Array { var, .. }
            | Statement::Construct { var, .. } => Some(*var),
            Statement::Call { result, .. } => *result,
        }
    }

    /// Variables read by this statement, receiver first.
    pub fn uses(&self) -> Vec<VarId> {
        let mut out = Vec::new();
        let args = match self {
            Statement::Primitive { .. } | Statement::Array { .. } => return out,
            Statement::Construct { args, .. } => args,
            Statement::Call { receiver, args, .. } => {
                out.push(*receiver);
                args
            }
        };
        out.extend(args.iter().filter_map(|a| match a {
            Arg::Var(v) => Some(*v),
            Arg::Lit(_) => None,
        }));
        out
    }

    pub fn defined_type(&self, subject: &SubjectClass) -> Option<VarType> {
        match self {
            Statement::Primitive { value, .. } => Some(value.var_type()),
            Statement::Array { .. } => Some(VarType::IntArray),
            Statement::Construct { .. } => Some(VarType::Object),
            Statement::Call { result, method, .. } => {
                result.and(subject.methods[*method as usize].ret.map(VarType::from))
            }
        }
    }

    pub fn is_constructor(&self) -> bool {
        matches!(self, Statement::Construct { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TestError {
    #[error("statement {index}: variable v{} is not defined earlier", var.0)]
    Undefined { index: usize, var: VarId },
    #[error("statement {index}: variable v{} is defined twice", var.0)]
    Redefined { index: usize, var: VarId },
    #[error("statement {index}: unknown constructor or method #{id}")]
    UnknownCallee { index: usize, id: u16 },
    #[error("statement {index}: expected {expected} arguments, found {found}")]
    Arity {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("statement {index}: type mismatch ({message})")]
    Type { index: usize, message: String },
    #[error("test has {len} statements, more than the maximum {max}")]
    TooLong { len: usize, max: usize },
}

/// An evolvable test: an ordered list of statements.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestCase {
    pub statements: Vec<Statement>,
}

impl TestCase {
    pub fn new(statements: Vec<Statement>) -> Self {
        TestCase { statements }
    }

    /// Number of statements; the length used by the preference criterion.
    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    /// A variable id not used by any statement.
    pub fn fresh_var(&self) -> VarId {
        VarId(
            self.statements
                .iter()
                .filter_map(Statement::defined)
                .map(|v| v.0 + 1)
                .max()
                .unwrap_or(0),
        )
    }

    /// Types of all variables defined by statements before `end`.
    pub fn var_types(&self, subject: &SubjectClass, end: usize) -> HashMap<VarId, VarType> {
        let mut out = HashMap::new();
        for s in &self.statements[..end.min(self.statements.len())] {
            if let (Some(v), Some(t)) = (s.defined(), s.defined_type(subject)) {
                out.insert(v, t);
            }
        }
        out
    }

    pub fn has_constructor(&self) -> bool {
        self.statements.iter().any(Statement::is_constructor)
    }

    /// Checks that every reference resolves to an earlier, compatibly
    /// typed variable and that callees and arities match the subject.
    pub fn validate(&self, subject: &SubjectClass, max_length: usize) -> Result<(), TestError> {
        if self.len() > max_length {
            return Err(TestError::TooLong {
                len: self.len(),
                max: max_length,
            });
        }
        let mut types: HashMap<VarId, VarType> = HashMap::new();
        for (index, s) in self.statements.iter().enumerate() {
            let check_args = |params: &[crate::subject::Param], args: &[Arg], types: &HashMap<VarId, VarType>| {
                if params.len() != args.len() {
                    return Err(TestError::Arity {
                        index,
                        expected: params.len(),
                        found: args.len(),
                    });
                }
                for (p, a) in params.iter().zip(args) {
                    let want = VarType::from(p.ty);
                    let got = match a {
                        Arg::Var(v) => *types.get(v).ok_or(TestError::Undefined { index, var: *v })?,
                        Arg::Lit(l) => l.var_type(),
                    };
                    if got != want {
                        return Err(TestError::Type {
                            index,
                            message: format!("parameter `{}` wants {want:?}, got {got:?}", p.name),
                        });
                    }
                }
                Ok(())
            };
            match s {
                Statement::Primitive { value, .. } => {
                    if matches!(value, Literal::IntArray(_)) {
                        return Err(TestError::Type {
                            index,
                            message: "primitive declaration holds an array".into(),
                        });
                    }
                }
                Statement::Array { .. } => {}
                Statement::Construct { ctor, args, .. } => {
                    let decl = subject
                        .constructors
                        .get(*ctor as usize)
                        .ok_or(TestError::UnknownCallee { index, id: *ctor })?;
                    check_args(&decl.params, args, &types)?;
                }
                Statement::Call {
                    result,
                    receiver,
                    method,
                    args,
                } => {
                    let decl = subject
                        .methods
                        .get(*method as usize)
                        .ok_or(TestError::UnknownCallee { index, id: *method })?;
                    match types.get(receiver) {
                        None => return Err(TestError::Undefined { index, var: *receiver }),
                        Some(VarType::Object) => {}
                        Some(t) => {
                            return Err(TestError::Type {
                                index,
                                message: format!("receiver has type {t:?}"),
                            })
                        }
                    }
                    check_args(&decl.params, args, &types)?;
                    if result.is_some() != decl.ret.is_some() {
                        return Err(TestError::Type {
                            index,
                            message: "result binding must match the return type".into(),
                        });
                    }
                }
            }
            if let Some(v) = s.defined() {
                if types.contains_key(&v) {
                    return Err(TestError::Redefined { index, var: v });
                }
                types.insert(v, s.defined_type(subject).expect("defined statements have a type"));
            }
        }
        Ok(())
    }
}

/// What an assertion observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observed {
    /// The value bound by a call statement.
    Result(VarId),
    /// An observer method called on an object at the end of the test.
    Observer { var: VarId, method: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assertion {
    pub observed: Observed,
    pub expected: Literal,
}

/// A readability score in `[0, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReadabilityScore(u32);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("score {value} outside [0, {max}]")]
pub struct ScoreRangeError {
    pub value: i64,
    pub max: u32,
}

impl ReadabilityScore {
    pub fn new(value: i64, max: u32) -> Result<Self, ScoreRangeError> {
        if (0..=max as i64).contains(&value) {
            Ok(ReadabilityScore(value as u32))
        } else {
            Err(ScoreRangeError { value, max })
        }
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

/// A target-specific minimization of an inner test, possibly carrying
/// assertions, with its stable rendering and identity key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimizedTest {
    pub test: TestCase,
    pub target: TargetId,
    pub assertions: Vec<Assertion>,
    /// Index and exception name of a statement that raises.
    pub raises: Option<(usize, String)>,
    pub rendered: String,
    pub canonical_key: String,
}

impl MinimizedTest {
    pub fn new(
        subject: &SubjectClass,
        test: TestCase,
        target: TargetId,
        assertions: Vec<Assertion>,
        raises: Option<(usize, String)>,
    ) -> Self {
        let rendered = render_test(subject, &test, &assertions, raises.as_ref());
        let canonical_key = canonical_key_of(subject, &test);
        MinimizedTest {
            test,
            target,
            assertions,
            raises,
            rendered,
            canonical_key,
        }
    }

    pub fn len(&self) -> usize {
        self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.test.is_empty()
    }

    /// Replaces the assertions and re-renders.
    pub fn with_assertions(mut self, subject: &SubjectClass, assertions: Vec<Assertion>) -> Self {
        self.rendered = render_test(subject, &self.test, &assertions, self.raises.as_ref());
        self.assertions = assertions;
        self
    }
}

/// Identity of a minimization: a digest of its alpha-normalized
/// statement rendering.
///
/// Assertions are a deterministic function of the statements, so they
/// do not need to enter the digest.
pub fn canonical_key_of(subject: &SubjectClass, test: &TestCase) -> String {
    use sha2::{Digest, Sha256};
    let text = render_test(subject, test, &[], None);
    hex::encode(Sha256::digest(text.as_bytes()))
}
