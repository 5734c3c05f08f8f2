//! Instrumented execution of tests against a subject.
//!
//! Execution is total: every run ends normally, with a raised exception,
//! or by exhausting the step budget. The trace records which lines ran,
//! how close each branch came to each outcome and how close each weak
//! mutant came to infecting the state.

mod distance;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subject::{
    BinOp, Expr, ExprKind, MethodDecl, MethodRef, Replacement, SiteId, Stmt, StmtKind, SubjectClass, VarRef,
};
use crate::test_model::{Arg, Literal, Statement, TestCase, VarId};

pub use distance::{covers, fitness_vector, normalize, target_distance, K};

/// Default number of interpreted steps allowed per test.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000;

/// Largest array a subject may allocate.
pub const MAX_ARRAY_LEN: i64 = 10_000;

/// A value observed at the test level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuntimeValue {
    Int(i64),
    Bool(bool),
    IntArray(Vec<i64>),
    /// Handle of an instance created earlier in the same execution.
    Object(usize),
    Void,
}

impl RuntimeValue {
    /// The literal an assertion would compare against, if any.
    pub fn as_literal(&self) -> Option<Literal> {
        match self {
            RuntimeValue::Int(v) => Some(Literal::Int(*v)),
            RuntimeValue::Bool(b) => Some(Literal::Bool(*b)),
            _ => None,
        }
    }
}

/// What happened when a test statement ran.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallResult {
    Returned(RuntimeValue),
    Raised(String),
    /// The step budget ran out during this statement.
    Exhausted,
}

/// Per-branch evaluation summary. Distances are `f64::INFINITY` until
/// the branch is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub hits: u32,
    pub d_true: f64,
    pub d_false: f64,
}

impl Default for BranchRecord {
    fn default() -> Self {
        BranchRecord {
            hits: 0,
            d_true: f64::INFINITY,
            d_false: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    /// Indexed by line id.
    pub lines_hit: Vec<bool>,
    pub branches: Vec<BranchRecord>,
    /// Minimum infection distance per mutant; infinite when the site
    /// was never evaluated.
    pub infections: Vec<f64>,
    pub call_results: Vec<CallResult>,
    /// Index of the statement where execution stopped early.
    pub aborted_at: Option<usize>,
}

impl ExecutionTrace {
    pub fn line_hit(&self, line: u32) -> bool {
        self.lines_hit.get(line as usize).copied().unwrap_or(false)
    }

    pub fn hit_lines(&self) -> impl Iterator<Item = u32> + '_ {
        self.lines_hit
            .iter()
            .enumerate()
            .filter(|(_, h)| **h)
            .map(|(i, _)| i as u32)
    }

    /// Exception name of the statement that raised, if one did.
    pub fn raised(&self) -> Option<(usize, &str)> {
        let at = self.aborted_at?;
        match self.call_results.get(at) {
            Some(CallResult::Raised(name)) => Some((at, name)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid test at statement {index}: {message}")]
pub struct InvalidTest {
    pub index: usize,
    pub message: String,
}

/// Value of an observer method on a live object after the test ran.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObserverValue {
    pub var: VarId,
    pub method: u16,
    pub value: Option<RuntimeValue>,
}

/// Runs `test` and records its trace.
pub fn execute(subject: &SubjectClass, test: &TestCase, step_budget: u64) -> Result<ExecutionTrace, InvalidTest> {
    let mut m = Machine::new(subject, step_budget);
    m.run(test)?;
    Ok(m.trace)
}

/// Runs `test` and then, unless it stopped early, calls every observer
/// on every object variable. Observer calls are not traced.
pub fn execute_observed(
    subject: &SubjectClass,
    test: &TestCase,
    step_budget: u64,
) -> Result<(ExecutionTrace, Vec<ObserverValue>), InvalidTest> {
    let mut m = Machine::new(subject, step_budget);
    let env = m.run(test)?;
    let trace = m.trace.clone();
    let mut out = Vec::new();
    if trace.aborted_at.is_none() {
        m.tracing = false;
        for s in &test.statements {
            let Statement::Construct { var, .. } = s else { continue };
            let Some(Value::Object(obj)) = env.get(var) else { continue };
            for (method, _) in subject.observers() {
                m.steps = 0;
                let value = match m.invoke(MethodRef::Method(method), *obj, Vec::new()) {
                    Ok(v) => Some(m.export(v)),
                    Err(_) => None,
                };
                out.push(ObserverValue {
                    var: *var,
                    method,
                    value,
                });
            }
        }
    }
    Ok((trace, out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Value {
    Int(i64),
    Bool(bool),
    Array(usize),
    Object(usize),
    Void,
}

impl Value {
    fn int(self) -> i64 {
        match self {
            Value::Int(v) => v,
            other => panic!("expected int, found {other:?}"),
        }
    }

    fn bool(self) -> bool {
        match self {
            Value::Bool(b) => b,
            other => panic!("expected bool, found {other:?}"),
        }
    }

    fn array(self) -> usize {
        match self {
            Value::Array(a) => a,
            other => panic!("expected array, found {other:?}"),
        }
    }
}

/// Why evaluation stopped early.
enum Stop {
    Raise(String),
    Budget,
}

type Exec<T> = Result<T, Stop>;

enum Flow {
    Normal,
    Return(Value),
}

struct Frame {
    this: usize,
    params: Vec<Value>,
    locals: Vec<Value>,
}

struct Machine<'s> {
    subject: &'s SubjectClass,
    arrays: Vec<Vec<i64>>,
    objects: Vec<Vec<Value>>,
    trace: ExecutionTrace,
    steps: u64,
    budget: u64,
    tracing: bool,
}

fn raise<T>(name: &str) -> Exec<T> {
    Err(Stop::Raise(name.to_string()))
}

impl<'s> Machine<'s> {
    fn new(subject: &'s SubjectClass, budget: u64) -> Self {
        Machine {
            subject,
            arrays: Vec::new(),
            objects: Vec::new(),
            trace: ExecutionTrace {
                lines_hit: vec![false; subject.max_line() as usize + 1],
                branches: vec![BranchRecord::default(); subject.branches().len()],
                infections: vec![f64::INFINITY; subject.mutants().len()],
                call_results: Vec::new(),
                aborted_at: None,
            },
            steps: 0,
            budget,
            tracing: true,
        }
    }

    fn tick(&mut self) -> Exec<()> {
        self.steps += 1;
        if self.steps > self.budget {
            Err(Stop::Budget)
        } else {
            Ok(())
        }
    }

    fn hit(&mut self, line: u32) {
        if self.tracing {
            self.trace.lines_hit[line as usize] = true;
        }
    }

    fn infect(&mut self, mutant: u32, d: f64) {
        if self.tracing {
            let slot = &mut self.trace.infections[mutant as usize];
            if d < *slot {
                *slot = d;
            }
        }
    }

    fn export(&self, v: Value) -> RuntimeValue {
        match v {
            Value::Int(i) => RuntimeValue::Int(i),
            Value::Bool(b) => RuntimeValue::Bool(b),
            Value::Array(a) => RuntimeValue::IntArray(self.arrays[a].clone()),
            Value::Object(o) => RuntimeValue::Object(o),
            Value::Void => RuntimeValue::Void,
        }
    }

    fn alloc(&mut self, n: i64) -> Exec<usize> {
        if n < 0 {
            return raise("NegativeArraySize");
        }
        if n > MAX_ARRAY_LEN {
            return raise("OutOfMemory");
        }
        self.arrays.push(vec![0; n as usize]);
        Ok(self.arrays.len() - 1)
    }

    fn run(&mut self, test: &TestCase) -> Result<std::collections::HashMap<VarId, Value>, InvalidTest> {
        let mut env = std::collections::HashMap::new();
        for (index, s) in test.statements.iter().enumerate() {
            let invalid = |message: &str| InvalidTest {
                index,
                message: message.to_string(),
            };
            let args_of = |args: &[Arg], m: &mut Self| -> Result<Vec<Value>, InvalidTest> {
                args.iter()
                    .map(|a| match a {
                        Arg::Var(v) => env.get(v).copied().ok_or_else(|| invalid("undefined variable")),
                        Arg::Lit(l) => Ok(m.literal(l)),
                    })
                    .collect()
            };
            let outcome = match s {
                Statement::Primitive { var, value } => {
                    let v = self.literal(value);
                    env.insert(*var, v);
                    Ok(v)
                }
                Statement::Array { var, values } => {
                    self.arrays.push(values.clone());
                    let v = Value::Array(self.arrays.len() - 1);
                    env.insert(*var, v);
                    Ok(v)
                }
                Statement::Construct { var, ctor, args } => {
                    if *ctor as usize >= self.subject.constructors.len() {
                        return Err(invalid("unknown constructor"));
                    }
                    let args = args_of(args, self)?;
                    let r = self.construct(*ctor, args);
                    if let Ok(v) = r {
                        env.insert(*var, v);
                    }
                    r
                }
                Statement::Call {
                    result,
                    receiver,
                    method,
                    args,
                } => {
                    if *method as usize >= self.subject.methods.len() {
                        return Err(invalid("unknown method"));
                    }
                    let Some(Value::Object(obj)) = env.get(receiver).copied() else {
                        return Err(invalid("receiver is not an object"));
                    };
                    let args = args_of(args, self)?;
                    let r = self.invoke(MethodRef::Method(*method), obj, args);
                    if let (Ok(v), Some(res)) = (&r, result) {
                        env.insert(*res, *v);
                    }
                    r
                }
            };
            match outcome {
                Ok(v) => {
                    let rv = self.export(v);
                    self.trace.call_results.push(CallResult::Returned(rv));
                }
                Err(stop) => {
                    self.trace.call_results.push(match stop {
                        Stop::Raise(name) => CallResult::Raised(name),
                        Stop::Budget => CallResult::Exhausted,
                    });
                    self.trace.aborted_at = Some(index);
                    break;
                }
            }
        }
        Ok(env)
    }

    fn literal(&mut self, l: &Literal) -> Value {
        match l {
            Literal::Int(v) => Value::Int(*v),
            Literal::Bool(b) => Value::Bool(*b),
            Literal::IntArray(vs) => {
                self.arrays.push(vs.clone());
                Value::Array(self.arrays.len() - 1)
            }
        }
    }

    fn construct(&mut self, ctor: u16, args: Vec<Value>) -> Exec<Value> {
        let subject = self.subject;
        let obj = self.objects.len();
        self.objects.push(Vec::with_capacity(subject.fields.len()));
        let blank = Frame {
            this: obj,
            params: Vec::new(),
            locals: Vec::new(),
        };
        let mut blank = blank;
        for f in &subject.fields {
            let v = self.eval(&f.init, &mut blank)?;
            self.objects[obj].push(v);
        }
        self.invoke(MethodRef::Ctor(ctor), obj, args)?;
        Ok(Value::Object(obj))
    }

    fn invoke(&mut self, m: MethodRef, this: usize, params: Vec<Value>) -> Exec<Value> {
        let decl: &'s MethodDecl = self.subject.method(m);
        self.tick()?;
        self.hit(decl.line);
        let mut frame = Frame {
            this,
            params,
            locals: vec![Value::Void; decl.locals.len()],
        };
        match self.block(&decl.body, &mut frame)? {
            Flow::Return(v) => Ok(v),
            Flow::Normal if decl.ret.is_some() => raise("MissingReturn"),
            Flow::Normal => Ok(Value::Void),
        }
    }

    fn block(&mut self, body: &'s [Stmt], frame: &mut Frame) -> Exec<Flow> {
        for s in body {
            if let Flow::Return(v) = self.stmt(s, frame)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn store(&mut self, var: VarRef, v: Value, frame: &mut Frame) {
        match var {
            VarRef::Field(i) => self.objects[frame.this][i as usize] = v,
            VarRef::Param(i) => frame.params[i as usize] = v,
            VarRef::Local(i) => frame.locals[i as usize] = v,
        }
    }

    fn load(&self, var: VarRef, frame: &Frame) -> Value {
        match var {
            VarRef::Field(i) => self.objects[frame.this][i as usize],
            VarRef::Param(i) => frame.params[i as usize],
            VarRef::Local(i) => frame.locals[i as usize],
        }
    }

    fn stmt(&mut self, s: &'s Stmt, frame: &mut Frame) -> Exec<Flow> {
        self.tick()?;
        self.hit(s.line);
        match &s.kind {
            StmtKind::Let { slot, init } => {
                let v = self.eval(init, frame)?;
                frame.locals[*slot as usize] = v;
            }
            StmtKind::Assign { var, value } => {
                let v = self.eval(value, frame)?;
                self.store(*var, v, frame);
            }
            StmtKind::Store { array, index, value } => {
                let a = self.load(*array, frame).array();
                let i = self.eval(index, frame)?.int();
                let v = self.eval(value, frame)?.int();
                let arr = &mut self.arrays[a];
                if i < 0 || i as usize >= arr.len() {
                    return raise("IndexOutOfBounds");
                }
                arr[i as usize] = v;
            }
            StmtKind::If {
                branch,
                cond,
                then_body,
                else_body,
            } => {
                let taken = self.branch(branch.0, cond, frame)?;
                return if taken {
                    self.block(then_body, frame)
                } else {
                    self.block(else_body, frame)
                };
            }
            StmtKind::While {
                branch,
                cond,
                bound,
                body,
            } => {
                let mut iterations = 0u32;
                while self.branch(branch.0, cond, frame)? {
                    iterations += 1;
                    if iterations > *bound {
                        return raise("LoopBoundExceeded");
                    }
                    self.tick()?;
                    if let Flow::Return(v) = self.block(body, frame)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::Return(value) => {
                let v = match value {
                    Some(e) => self.eval(e, frame)?,
                    None => Value::Void,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Throw(name) => return raise(name),
        }
        Ok(Flow::Normal)
    }

    /// Evaluates a branch condition and records its distances.
    fn branch(&mut self, id: u32, cond: &'s Expr, frame: &mut Frame) -> Exec<bool> {
        let (taken, dt, df) = self.predicate(cond, frame)?;
        if self.tracing {
            let rec = &mut self.trace.branches[id as usize];
            rec.hits += 1;
            rec.d_true = rec.d_true.min(dt);
            rec.d_false = rec.d_false.min(df);
        }
        Ok(taken)
    }

    /// Evaluates a boolean expression to (value, distance to true,
    /// distance to false).
    fn predicate(&mut self, e: &'s Expr, frame: &mut Frame) -> Exec<(bool, f64, f64)> {
        match &e.kind {
            ExprKind::Not(inner) => {
                let (v, dt, df) = self.predicate(inner, frame)?;
                Ok((!v, df, dt))
            }
            ExprKind::Binary {
                op: BinOp::And,
                lhs,
                rhs,
                ..
            } => {
                let (a, at, af) = self.predicate(lhs, frame)?;
                if !a {
                    return Ok((false, at + K, 0.0));
                }
                let (b, bt, bf) = self.predicate(rhs, frame)?;
                Ok((b, at + bt, af.min(bf)))
            }
            ExprKind::Binary {
                op: BinOp::Or, lhs, rhs, ..
            } => {
                let (a, at, af) = self.predicate(lhs, frame)?;
                if a {
                    return Ok((true, 0.0, af + K));
                }
                let (b, bt, bf) = self.predicate(rhs, frame)?;
                Ok((b, at.min(bt), af + bf))
            }
            ExprKind::Binary { op, lhs, rhs, site } if op.is_relational() && lhs.ty == crate::subject::Type::Int => {
                let a = self.eval(lhs, frame)?.int();
                let b = self.eval(rhs, frame)?.int();
                if let Some(site) = site {
                    self.shadow_relational(*site, *op, a, b);
                }
                let v = relational(*op, a, b);
                let (dt, df) = distance::relational_distances(*op, a, b);
                Ok((v, dt, df))
            }
            _ => {
                let v = self.eval(e, frame)?.bool();
                Ok(if v { (true, 0.0, K) } else { (false, K, 0.0) })
            }
        }
    }

    fn shadow_relational(&mut self, site: SiteId, op: BinOp, a: i64, b: i64) {
        if !self.tracing {
            return;
        }
        let range = self.subject.sites()[site.0 as usize].mutants.clone();
        for m in range {
            if let Replacement::Op(rep) = self.subject.mutant(crate::subject::MutantId(m)).spec.replacement {
                self.infect(m, distance::ror_infection(op, rep, a, b));
            }
        }
    }

    fn shadow_arithmetic(&mut self, site: SiteId, a: i64, b: i64, original: &Result<i64, &str>) {
        if !self.tracing {
            return;
        }
        let range = self.subject.sites()[site.0 as usize].mutants.clone();
        for m in range {
            if let Replacement::Op(rep) = self.subject.mutant(crate::subject::MutantId(m)).spec.replacement {
                let mutated = arithmetic(rep, a, b);
                let d = if mutated == *original { 1.0 } else { 0.0 };
                self.infect(m, d);
            }
        }
    }

    fn eval(&mut self, e: &'s Expr, frame: &mut Frame) -> Exec<Value> {
        match &e.kind {
            ExprKind::Int(v) => Ok(Value::Int(*v)),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Var { var, site } => {
                let v = self.load(*var, frame);
                if let (Some(site), Value::Int(x)) = (site, v) {
                    if self.tracing {
                        let m = self.subject.sites()[site.0 as usize].mutants.start;
                        let d = if x.wrapping_neg() != x { 0.0 } else { 1.0 };
                        self.infect(m, d);
                    }
                }
                Ok(v)
            }
            ExprKind::Index { array, index } => {
                let a = self.eval(array, frame)?.array();
                let i = self.eval(index, frame)?.int();
                let arr = &self.arrays[a];
                if i < 0 || i as usize >= arr.len() {
                    return raise("IndexOutOfBounds");
                }
                Ok(Value::Int(arr[i as usize]))
            }
            ExprKind::Length(a) => {
                let a = self.eval(a, frame)?.array();
                Ok(Value::Int(self.arrays[a].len() as i64))
            }
            ExprKind::NewArray(n) => {
                let n = self.eval(n, frame)?.int();
                Ok(Value::Array(self.alloc(n)?))
            }
            ExprKind::Neg(x) => Ok(Value::Int(self.eval(x, frame)?.int().wrapping_neg())),
            ExprKind::Not(x) => Ok(Value::Bool(!self.eval(x, frame)?.bool())),
            ExprKind::Binary {
                op: BinOp::And | BinOp::Or,
                ..
            } => {
                let (v, _, _) = self.predicate(e, frame)?;
                Ok(Value::Bool(v))
            }
            ExprKind::Binary { op, lhs, rhs, site } => {
                let l = self.eval(lhs, frame)?;
                let r = self.eval(rhs, frame)?;
                match (l, r) {
                    (Value::Int(a), Value::Int(b)) if op.is_relational() => {
                        if let Some(site) = site {
                            self.shadow_relational(*site, *op, a, b);
                        }
                        Ok(Value::Bool(relational(*op, a, b)))
                    }
                    (Value::Int(a), Value::Int(b)) => {
                        let result = arithmetic(*op, a, b);
                        if let Some(site) = site {
                            self.shadow_arithmetic(*site, a, b, &result);
                        }
                        match result {
                            Ok(v) => Ok(Value::Int(v)),
                            Err(name) => raise(name),
                        }
                    }
                    (Value::Bool(a), Value::Bool(b)) => match op {
                        BinOp::Eq => Ok(Value::Bool(a == b)),
                        BinOp::Ne => Ok(Value::Bool(a != b)),
                        _ => unreachable!("resolver rejects {op:?} on bools"),
                    },
                    (l, r) => unreachable!("ill-typed operands {l:?} {op:?} {r:?}"),
                }
            }
        }
    }
}

pub(crate) fn relational(op: BinOp, a: i64, b: i64) -> bool {
    match op {
        BinOp::Lt => a < b,
        BinOp::Le => a <= b,
        BinOp::Gt => a > b,
        BinOp::Ge => a >= b,
        BinOp::Eq => a == b,
        BinOp::Ne => a != b,
        _ => unreachable!("{op:?} is not relational"),
    }
}

pub(crate) fn arithmetic(op: BinOp, a: i64, b: i64) -> Result<i64, &'static str> {
    match op {
        BinOp::Add => Ok(a.wrapping_add(b)),
        BinOp::Sub => Ok(a.wrapping_sub(b)),
        BinOp::Mul => Ok(a.wrapping_mul(b)),
        BinOp::Div if b == 0 => Err("ArithmeticException"),
        BinOp::Div => Ok(a.wrapping_div(b)),
        BinOp::Rem if b == 0 => Err("ArithmeticException"),
        BinOp::Rem => Ok(a.wrapping_rem(b)),
        _ => unreachable!("{op:?} is not arithmetic"),
    }
}

#[cfg(test)]
mod tests;
