//! Random generation, mutation and crossover of tests.
//!
//! Variation never rejects: offspring are repaired into valid tests by
//! rebinding dangling references or dropping statements that cannot be
//! rebound.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationConfig {
    pub max_length: usize,
    /// Longest array literal produced by generation.
    pub max_array_len: usize,
}

impl Default for VariationConfig {
    fn default() -> Self {
        VariationConfig {
            max_length: DEFAULT_MAX_LENGTH,
            max_array_len: 4,
        }
    }
}

fn random_int<R: Rng + ?Sized>(subject: &SubjectClass, rng: &mut R) -> i64 {
    let pool = subject.literal_pool();
    let roll: f64 = rng.random();
    if roll < 0.2 {
        *[-1, 0, 1].choose(rng).unwrap()
    } else if roll < 0.35 && !pool.is_empty() {
        *pool.choose(rng).unwrap()
    } else {
        rng.random_range(-100..=100)
    }
}

fn random_literal<R: Rng + ?Sized>(subject: &SubjectClass, t: VarType, cfg: &VariationConfig, rng: &mut R) -> Literal {
    match t {
        VarType::Int => Literal::Int(random_int(subject, rng)),
        VarType::Bool => Literal::Bool(rng.random()),
        VarType::IntArray => {
            let n = rng.random_range(0..=cfg.max_array_len);
            Literal::IntArray((0..n).map(|_| random_int(subject, rng)).collect())
        }
        VarType::Object => unreachable!("objects have no literal form"),
    }
}

/// Chooses arguments for `params`, possibly emitting declaration
/// statements (pushed to `decls`) for fresh primitive variables.
#[allow(clippy::too_many_arguments)]
fn random_args<R: Rng + ?Sized>(
    subject: &SubjectClass,
    params: &[crate::subject::Param],
    vars: &HashMap<VarId, VarType>,
    next_var: &mut u32,
    room: &mut usize,
    decls: &mut Vec<Statement>,
    cfg: &VariationConfig,
    rng: &mut R,
) -> Vec<Arg> {
    let mut args = Vec::with_capacity(params.len());
    for p in params {
        let want = VarType::from(p.ty);
        let mut existing: Vec<VarId> = vars.iter().filter(|(_, t)| **t == want).map(|(v, _)| *v).collect();
        existing.sort();
        if !existing.is_empty() && rng.random_bool(0.3) {
            args.push(Arg::Var(*existing.choose(rng).unwrap()));
        } else if *room > 0 && rng.random_bool(0.5) {
            let var = VarId(*next_var);
            *next_var += 1;
            *room -= 1;
            decls.push(match random_literal(subject, want, cfg, rng) {
                Literal::IntArray(values) => Statement::Array { var, values },
                value => Statement::Primitive { var, value },
            });
            args.push(Arg::Var(var));
        } else {
            args.push(Arg::Lit(random_literal(subject, want, cfg, rng)));
        }
    }
    args
}

fn random_constructor<R: Rng + ?Sized>(
    subject: &SubjectClass,
    vars: &HashMap<VarId, VarType>,
    next_var: &mut u32,
    room: &mut usize,
    cfg: &VariationConfig,
    rng: &mut R,
) -> Vec<Statement> {
    let ctor = rng.random_range(0..subject.constructors.len()) as u16;
    let mut out = Vec::new();
    let args = random_args(
        subject,
        &subject.constructors[ctor as usize].params,
        vars,
        next_var,
        room,
        &mut out,
        cfg,
        rng,
    );
    let var = VarId(*next_var);
    *next_var += 1;
    out.push(Statement::Construct { var, ctor, args });
    out
}

/// Generates statements to insert at `position` of `test`: a call on an
/// existing object, a new object, or a primitive declaration, preceded
/// by any helper declarations. At most `room` statements are produced.
pub fn random_statement<R: Rng + ?Sized>(
    subject: &SubjectClass,
    test: &TestCase,
    position: usize,
    room: usize,
    cfg: &VariationConfig,
    rng: &mut R,
) -> Vec<Statement> {
    if room == 0 {
        return Vec::new();
    }
    let vars = test.var_types(subject, position);
    let mut objects: Vec<VarId> = vars.iter().filter(|(_, t)| **t == VarType::Object).map(|(v, _)| *v).collect();
    objects.sort();
    let mut next_var = test.fresh_var().0;
    let mut spare = room - 1;
    let roll: f64 = rng.random();
    if objects.is_empty() || subject.methods.is_empty() || roll < 0.15 {
        return random_constructor(subject, &vars, &mut next_var, &mut spare, cfg, rng);
    }
    if roll < 0.22 {
        let t = *[VarType::Int, VarType::Int, VarType::Bool, VarType::IntArray].choose(rng).unwrap();
        let var = VarId(next_var);
        return vec![match random_literal(subject, t, cfg, rng) {
            Literal::IntArray(values) => Statement::Array { var, values },
            value => Statement::Primitive { var, value },
        }];
    }
    let method = rng.random_range(0..subject.methods.len()) as u16;
    let decl = &subject.methods[method as usize];
    let receiver = *objects.choose(rng).unwrap();
    let mut out = Vec::new();
    let args = random_args(subject, &decl.params, &vars, &mut next_var, &mut spare, &mut out, cfg, rng);
    let result = decl.ret.map(|_| {
        let v = VarId(next_var);
        next_var += 1;
        v
    });
    out.push(Statement::Call {
        result,
        receiver,
        method,
        args,
    });
    out
}

/// A random valid test of length in `[1, max_length]` starting with a
/// constructor call.
pub fn random_test<R: Rng + ?Sized>(subject: &SubjectClass, cfg: &VariationConfig, rng: &mut R) -> TestCase {
    let max = cfg.max_length.max(1);
    let goal = rng.random_range(1..=max);
    let mut test = TestCase::default();
    let mut next_var = 0;
    let mut room = goal - 1;
    test.statements = random_constructor(subject, &HashMap::new(), &mut next_var, &mut room, cfg, rng);
    while test.len() < goal {
        let at = test.len();
        let stmts = random_statement(subject, &test, at, goal - test.len(), cfg, rng);
        test.statements.extend(stmts);
    }
    test
}

/// Walks `stmts` and rebinds every reference to an unavailable variable
/// to a random compatible earlier one. Primitive arguments without a
/// candidate become literals; calls whose receiver cannot be rebound
/// are dropped, together with whatever depended on them.
pub(crate) fn repair<R: Rng + ?Sized>(
    subject: &SubjectClass,
    stmts: Vec<Statement>,
    cfg: &VariationConfig,
    rng: &mut R,
) -> Vec<Statement> {
    let mut types: HashMap<VarId, VarType> = HashMap::new();
    let mut by_type: HashMap<VarType, Vec<VarId>> = HashMap::new();
    let mut out = Vec::with_capacity(stmts.len());
    for mut s in stmts {
        let mut keep = true;
        let fix_args = |params: &[crate::subject::Param], args: &mut Vec<Arg>, rng: &mut R| {
            for (p, a) in params.iter().zip(args.iter_mut()) {
                let want = VarType::from(p.ty);
                if let Arg::Var(v) = a {
                    if types.get(v) == Some(&want) {
                        continue;
                    }
                    *a = match by_type.get(&want).and_then(|c| c.choose(rng)) {
                        Some(c) => Arg::Var(*c),
                        None => Arg::Lit(random_literal(subject, want, cfg, rng)),
                    };
                }
            }
        };
        match &mut s {
            Statement::Primitive { .. } | Statement::Array { .. } => {}
            Statement::Construct { ctor, args, .. } => {
                fix_args(&subject.constructors[*ctor as usize].params, args, rng);
            }
            Statement::Call {
                receiver, method, args, ..
            } => {
                if types.get(receiver) != Some(&VarType::Object) {
                    match by_type.get(&VarType::Object).and_then(|c| c.choose(rng)) {
                        Some(c) => *receiver = *c,
                        None => keep = false,
                    }
                }
                if keep {
                    fix_args(&subject.methods[*method as usize].params, args, rng);
                }
            }
        }
        if !keep {
            continue;
        }
        if let Some(v) = s.defined() {
            if types.contains_key(&v) {
                // Duplicate definition; should not happen after renaming.
                continue;
            }
            let t = s.defined_type(subject).expect("defined statements have a type");
            types.insert(v, t);
            by_type.entry(t).or_default().push(v);
        }
        out.push(s);
    }
    out
}

fn rename(s: &Statement, map: &HashMap<VarId, VarId>, dangling: VarId) -> Statement {
    let r = |v: &VarId| *map.get(v).unwrap_or(&dangling);
    let args = |a: &[Arg]| -> Vec<Arg> {
        a.iter()
            .map(|x| match x {
                Arg::Var(v) => Arg::Var(r(v)),
                Arg::Lit(l) => Arg::Lit(l.clone()),
            })
            .collect()
    };
    match s {
        Statement::Primitive { var, value } => Statement::Primitive {
            var: r(var),
            value: value.clone(),
        },
        Statement::Array { var, values } => Statement::Array {
            var: r(var),
            values: values.clone(),
        },
        Statement::Construct { var, ctor, args: a } => Statement::Construct {
            var: r(var),
            ctor: *ctor,
            args: args(a),
        },
        Statement::Call {
            result,
            receiver,
            method,
            args: a,
        } => Statement::Call {
            result: result.as_ref().map(r),
            receiver: r(receiver),
            method: *method,
            args: args(a),
        },
    }
}

fn splice<R: Rng + ?Sized>(
    subject: &SubjectClass,
    prefix: &[Statement],
    suffix: &[Statement],
    cfg: &VariationConfig,
    rng: &mut R,
) -> TestCase {
    let prefix_test = TestCase::new(prefix.to_vec());
    let mut next = prefix_test.fresh_var().0;
    let mut map = HashMap::new();
    for v in suffix.iter().filter_map(Statement::defined) {
        map.insert(v, VarId(next));
        next += 1;
    }
    let dangling = VarId(u32::MAX);
    let mut stmts = prefix.to_vec();
    stmts.extend(suffix.iter().map(|s| rename(s, &map, dangling)));
    finish(subject, stmts, cfg, rng)
}

/// Repairs, guarantees a constructor call and enforces the length cap.
fn finish<R: Rng + ?Sized>(subject: &SubjectClass, stmts: Vec<Statement>, cfg: &VariationConfig, rng: &mut R) -> TestCase {
    let mut stmts = repair(subject, stmts, cfg, rng);
    if !stmts.iter().any(Statement::is_constructor) {
        let t = TestCase::new(stmts.clone());
        let mut next = t.fresh_var().0;
        let mut room = 0;
        let mut ctor = random_constructor(subject, &HashMap::new(), &mut next, &mut room, cfg, rng);
        ctor.append(&mut stmts);
        stmts = repair(subject, ctor, cfg, rng);
    }
    stmts.truncate(cfg.max_length.max(1));
    TestCase::new(stmts)
}

/// Single-point crossover at the same relative position in both parents.
pub fn crossover<R: Rng + ?Sized>(
    subject: &SubjectClass,
    a: &TestCase,
    b: &TestCase,
    cfg: &VariationConfig,
    rng: &mut R,
) -> (TestCase, TestCase) {
    let alpha: f64 = rng.random();
    let pa = ((a.len() as f64) * alpha).floor() as usize;
    let pb = ((b.len() as f64) * alpha).floor() as usize;
    let c1 = splice(subject, &a.statements[..pa], &b.statements[pb..], cfg, rng);
    let c2 = splice(subject, &b.statements[..pb], &a.statements[pa..], cfg, rng);
    (c1, c2)
}

fn perturb_int<R: Rng + ?Sized>(subject: &SubjectClass, v: i64, rng: &mut R) -> i64 {
    if rng.random_bool(0.5) {
        if rng.random_bool(0.5) {
            v.wrapping_add(1)
        } else {
            v.wrapping_sub(1)
        }
    } else {
        random_int(subject, rng)
    }
}

fn perturb_literal<R: Rng + ?Sized>(subject: &SubjectClass, l: &mut Literal, cfg: &VariationConfig, rng: &mut R) {
    match l {
        Literal::Int(v) => *v = perturb_int(subject, *v, rng),
        Literal::Bool(b) => *b = !*b,
        Literal::IntArray(vs) => perturb_array(subject, vs, cfg, rng),
    }
}

fn perturb_array<R: Rng + ?Sized>(subject: &SubjectClass, vs: &mut Vec<i64>, cfg: &VariationConfig, rng: &mut R) {
    let roll: f64 = rng.random();
    if vs.is_empty() || roll < 0.25 {
        if let Literal::IntArray(fresh) = random_literal(subject, VarType::IntArray, cfg, rng) {
            *vs = fresh;
        }
    } else if roll < 0.5 && vs.len() < cfg.max_array_len {
        vs.push(random_int(subject, rng));
    } else if roll < 0.6 {
        vs.pop();
    } else {
        let i = rng.random_range(0..vs.len());
        vs[i] = perturb_int(subject, vs[i], rng);
    }
}

fn change_statement<R: Rng + ?Sized>(
    subject: &SubjectClass,
    test: &TestCase,
    index: usize,
    cfg: &VariationConfig,
    rng: &mut R,
) -> Statement {
    let mut s = test.statements[index].clone();
    let vars = test.var_types(subject, index);
    let new_arg = |p: &crate::subject::Param, rng: &mut R| -> Arg {
        let want = VarType::from(p.ty);
        let mut cands: Vec<VarId> = vars.iter().filter(|(_, t)| **t == want).map(|(v, _)| *v).collect();
        cands.sort();
        if !cands.is_empty() && rng.random_bool(0.5) {
            Arg::Var(*cands.choose(rng).unwrap())
        } else {
            Arg::Lit(random_literal(subject, want, cfg, rng))
        }
    };
    match &mut s {
        Statement::Primitive { value, .. } => perturb_literal(subject, value, cfg, rng),
        Statement::Array { values, .. } => perturb_array(subject, values, cfg, rng),
        Statement::Construct { ctor, args, .. } => {
            let params = &subject.constructors[*ctor as usize].params;
            if !args.is_empty() {
                let i = rng.random_range(0..args.len());
                match &mut args[i] {
                    Arg::Lit(l) if rng.random_bool(0.5) => perturb_literal(subject, l, cfg, rng),
                    a => *a = new_arg(&params[i], rng),
                }
            }
        }
        Statement::Call {
            receiver, method, args, ..
        } => {
            let decl = &subject.methods[*method as usize];
            if !args.is_empty() && rng.random_bool(0.8) {
                let i = rng.random_range(0..args.len());
                match &mut args[i] {
                    Arg::Lit(l) if rng.random_bool(0.5) => perturb_literal(subject, l, cfg, rng),
                    a => *a = new_arg(&decl.params[i], rng),
                }
            } else {
                // Switch to another method with the same return type, or
                // another receiver.
                let same: Vec<u16> = (0..subject.methods.len() as u16)
                    .filter(|m| subject.methods[*m as usize].ret == decl.ret)
                    .collect();
                let m = *same.choose(rng).unwrap();
                if m != *method {
                    *method = m;
                    *args = subject.methods[m as usize]
                        .params
                        .iter()
                        .map(|p| new_arg(p, rng))
                        .collect();
                } else {
                    let mut objs: Vec<VarId> =
                        vars.iter().filter(|(_, t)| **t == VarType::Object).map(|(v, _)| *v).collect();
                    objs.sort();
                    *receiver = *objs.choose(rng).unwrap();
                }
            }
        }
    }
    s
}

/// Applies deletion, change and insertion, each with probability 1/3,
/// retrying until the test actually changes.
pub fn mutate<R: Rng + ?Sized>(subject: &SubjectClass, test: &TestCase, cfg: &VariationConfig, rng: &mut R) -> TestCase {
    let mut current = test.clone();
    for _ in 0..10 {
        let mut t = current.clone();
        if rng.random_bool(1.0 / 3.0) && t.len() > 1 {
            let p = 1.0 / t.len() as f64;
            let mut ctors = t.statements.iter().filter(|s| s.is_constructor()).count();
            let mut kept = Vec::with_capacity(t.len());
            for s in t.statements.drain(..) {
                let last_ctor = s.is_constructor() && ctors == 1;
                if !last_ctor && rng.random_bool(p) {
                    if s.is_constructor() {
                        ctors -= 1;
                    }
                    continue;
                }
                kept.push(s);
            }
            t = finish(subject, kept, cfg, rng);
        }
        if rng.random_bool(1.0 / 3.0) {
            let p = 1.0 / t.len() as f64;
            for i in 0..t.len() {
                if rng.random_bool(p) {
                    t.statements[i] = change_statement(subject, &t, i, cfg, rng);
                }
            }
        }
        if rng.random_bool(1.0 / 3.0) {
            while t.len() < cfg.max_length && rng.random_bool(0.5) {
                let at = rng.random_range(0..=t.len());
                let room = cfg.max_length - t.len();
                let stmts = random_statement(subject, &t, at, room, cfg, rng);
                t.statements.splice(at..at, stmts);
            }
        }
        if t != *test {
            return t;
        }
        current = t;
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subject::ARRAY_INT_LIST;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> SubjectClass {
        SubjectClass::parse(ARRAY_INT_LIST).unwrap()
    }

    #[test]
    fn length_one_is_a_single_constructor() {
        let s = fixture();
        let cfg = VariationConfig {
            max_length: 1,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = random_test(&s, &cfg, &mut rng);
            assert_eq!(t.len(), 1);
            assert!(t.statements[0].is_constructor());
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let s = fixture();
        let cfg = VariationConfig::default();
        let a = random_test(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(11));
        let b = random_test(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn generated_tests_validate() {
        let s = fixture();
        let cfg = VariationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let t = random_test(&s, &cfg, &mut rng);
            t.validate(&s, cfg.max_length).unwrap();
            assert!((1..=cfg.max_length).contains(&t.len()));
            assert!(t.has_constructor());
        }
    }

    #[test]
    fn crossover_at_zero_copies_second_parent() {
        let s = fixture();
        let cfg = VariationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_test(&s, &cfg, &mut rng);
        let b = random_test(&s, &cfg, &mut rng);
        let c = splice(&s, &[], &b.statements, &cfg, &mut rng);
        assert_eq!(
            crate::test_model::render_test(&s, &c, &[], None),
            crate::test_model::render_test(&s, &b, &[], None)
        );
        let _ = a;
    }

    #[test]
    fn unrepairable_suffix_statements_are_dropped() {
        let s = fixture();
        let cfg = VariationConfig::default();
        let clear = s.find_method("clear", 0).unwrap();
        // Prefix offers no object; the suffix call's receiver dangles.
        let prefix = vec![Statement::Primitive {
            var: VarId(0),
            value: Literal::Int(4),
        }];
        let suffix = vec![Statement::Call {
            result: None,
            receiver: VarId(9),
            method: clear,
            args: vec![],
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = splice(&s, &prefix, &suffix, &cfg, &mut rng);
        c.validate(&s, cfg.max_length).unwrap();
        assert!(c.has_constructor());
        assert!(!c.statements.iter().any(|x| matches!(x, Statement::Call { .. })));
    }

    #[test]
    fn perturbing_five_by_one() {
        let s = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seen_step = false;
        for _ in 0..200 {
            let v = perturb_int(&s, 5, &mut rng);
            if v == 4 || v == 6 {
                seen_step = true;
            }
        }
        assert!(seen_step);
    }

    #[test]
    fn mutation_and_crossover_stay_valid() {
        let s = fixture();
        let cfg = VariationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut pool: Vec<TestCase> = (0..20).map(|_| random_test(&s, &cfg, &mut rng)).collect();
        for i in 0..1000 {
            let a = &pool[i % pool.len()];
            let b = &pool[(i * 7 + 3) % pool.len()];
            let (c1, c2) = crossover(&s, a, b, &cfg, &mut rng);
            let m = mutate(&s, &c1, &cfg, &mut rng);
            for t in [&c1, &c2, &m] {
                t.validate(&s, cfg.max_length).unwrap();
                assert!(!t.is_empty() && t.has_constructor());
            }
            pool[i % 20] = m;
        }
    }
}
