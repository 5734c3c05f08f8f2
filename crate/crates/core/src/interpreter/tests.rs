use super::*;
use crate::subject::{extract_targets, TargetKind, TargetSet, ARRAY_INT_LIST};
use crate::test_model::parse_test;

fn fixture() -> SubjectClass {
    SubjectClass::parse(ARRAY_INT_LIST).unwrap()
}

fn run(s: &SubjectClass, body: &str) -> ExecutionTrace {
    let t = parse_test(s, &format!("test {{\n{body}\n}}\n")).unwrap().test;
    execute(s, &t, DEFAULT_STEP_BUDGET).unwrap()
}

fn method_lines(s: &SubjectClass, name: &str, arity: usize) -> Vec<u32> {
    let m = MethodRef::Method(s.find_method(name, arity).unwrap());
    s.lines().iter().filter(|(_, i)| i.method == m).map(|(l, _)| *l).collect()
}

fn dist(s: &SubjectClass, targets: &TargetSet, trace: &ExecutionTrace, label: &str) -> f64 {
    target_distance(s, trace, targets.get(targets.by_label(label).unwrap()))
}

#[test]
fn empty_test_hits_nothing() {
    let s = fixture();
    let trace = execute(&s, &TestCase::default(), DEFAULT_STEP_BUDGET).unwrap();
    assert_eq!(trace.hit_lines().count(), 0);
    assert!(trace.call_results.is_empty());
    assert!(trace.aborted_at.is_none());
    assert!(trace.branches.iter().all(|b| b.hits == 0 && b.d_true.is_infinite()));
}

#[test]
fn add_then_clear_runs_both_methods() {
    let s = fixture();
    let trace = run(
        &s,
        "ArrayIntList v0 = new ArrayIntList();\nv0.add(0, 0);\nv0.clear();",
    );
    assert!(trace.aborted_at.is_none());
    for l in method_lines(&s, "clear", 0) {
        assert!(trace.line_hit(l), "clear line {l}");
    }
    let add = method_lines(&s, "add", 2);
    // Entry, bounds check, modCount, capacity check, shift loop, store, size.
    for l in [60, 61, 64, 65, 75, 76, 80, 81] {
        assert!(add.contains(&l) && trace.line_hit(l), "add line {l}");
    }
    assert!(!trace.line_hit(62) && !trace.line_hit(66));
}

#[test]
fn remove_on_empty_raises_and_stops() {
    let s = fixture();
    let trace = run(
        &s,
        "ArrayIntList v0 = new ArrayIntList();\nint v1 = v0.removeElementAt(5);\nv0.clear();",
    );
    assert_eq!(trace.aborted_at, Some(1));
    assert_eq!(trace.call_results.len(), 2);
    assert_eq!(trace.call_results[1], CallResult::Raised("IndexOutOfBounds".into()));
    assert_eq!(trace.raised(), Some((1, "IndexOutOfBounds")));
    assert!(!trace.line_hit(103), "clear must not run");
}

#[test]
fn fig_one_style_test_covers_remove_body() {
    let s = fixture();
    let t = extract_targets(&s);
    let trace = run(
        &s,
        "ArrayIntList v0 = new ArrayIntList();\nint v1 = 2181;\nbool v2 = v0.add(v1);\nint v3 = v0.removeElementAt(0);",
    );
    assert_eq!(trace.call_results[3], CallResult::Returned(RuntimeValue::Int(2181)));
    let line = t.get(t.line_target(98).unwrap());
    assert!(covers(&s, &trace, line));
    assert!(!covers(&s, &trace, t.get(t.line_target(92).unwrap())));
}

#[test]
fn branch_distances_follow_the_table() {
    let s = SubjectClass::parse(
        "class A {\n  fn m(x: int, y: int) {\n    if (x < y) {\n      return;\n    }\n  }\n}",
    )
    .unwrap();
    let t = extract_targets(&s);
    let trace = run(&s, "A v0 = new A();\nv0.m(3, 5);");
    assert_eq!(dist(&s, &t, &trace, "B3T"), 0.0);
    assert_eq!(dist(&s, &t, &trace, "B3F"), 0.75);
    assert_eq!(dist(&s, &t, &trace, "L4"), 0.0);
    let rec = trace.branches[0];
    assert_eq!((rec.hits, rec.d_true, rec.d_false), (1, 0.0, 3.0));
}

#[test]
fn approach_level_counts_unreached_ancestors() {
    let s = SubjectClass::parse(
        "class A {\n  fn m(a: int, b: int) {\n    if (a > 0) {\n      let q: int = 10 / b;\n      if (b > 5) {\n        return;\n      }\n    }\n  }\n}",
    )
    .unwrap();
    let t = extract_targets(&s);
    // Outer branch satisfied, then a division by zero before the inner one.
    let trace = run(&s, "A v0 = new A();\nv0.m(1, 0);");
    let d = dist(&s, &t, &trace, "B5T");
    assert!(d > 1.0 && d <= 2.0, "{d}");
    let leaf = dist(&s, &t, &trace, "L6");
    assert!(leaf >= d);
    // Outer branch also unsatisfied: the leaf is farther still.
    let far = run(&s, "A v0 = new A();\nv0.m(-4, 0);");
    assert!(dist(&s, &t, &far, "L6") > leaf);
}

#[test]
fn unreached_method_targets_are_not_covered() {
    let s = fixture();
    let t = extract_targets(&s);
    let trace = run(&s, "ArrayIntList v0 = new ArrayIntList();");
    for target in t.iter().filter(|x| x.method == MethodRef::Method(s.find_method("indexOf", 1).unwrap())) {
        let d = target_distance(&s, &trace, target);
        assert!(d >= 1.0 && d.is_finite(), "{} {d}", target.label);
    }
}

#[test]
fn uninfected_negation_is_not_covered() {
    let s = SubjectClass::parse("class A {\n  fn m(x: int) -> int {\n    return x;\n  }\n}").unwrap();
    let t = extract_targets(&s);
    let mutant = t.iter().find(|x| x.kind == TargetKind::WeakMutant).unwrap();
    let zero = run(&s, "A v0 = new A();\nint v1 = v0.m(0);");
    assert!(zero.line_hit(3));
    assert!(!covers(&s, &zero, mutant));
    assert_eq!(target_distance(&s, &zero, mutant), 0.5);
    let seven = run(&s, "A v0 = new A();\nint v1 = v0.m(7);");
    assert!(covers(&s, &seven, mutant));
}

#[test]
fn division_mutants_raise_and_infect() {
    let s = SubjectClass::parse("class A {\n  fn m(x: int, y: int) -> int {\n    return x / y;\n  }\n}").unwrap();
    let trace = run(&s, "A v0 = new A();\nint v1 = v0.m(6, 0);");
    assert_eq!(trace.call_results[1], CallResult::Raised("ArithmeticException".into()));
    // x / 0 raises; +, -, * do not, so they are infected; % raises too.
    let t = extract_targets(&s);
    let aor: Vec<_> = t.iter().filter(|x| x.mutant_spec(&s).map(|m| m.operator) == Some(crate::subject::MutationOperator::Aor)).collect();
    let covered: Vec<_> = aor.iter().map(|x| covers(&s, &trace, x)).collect();
    assert_eq!(covered.iter().filter(|c| **c).count(), 3);
}

#[test]
fn budget_exhaustion_truncates() {
    let s = fixture();
    let t = parse_test(
        &s,
        "test {\n    ArrayIntList v0 = new ArrayIntList();\n    v0.ensureCapacity(9000);\n    v0.trimToSize();\n}\n",
    )
    .unwrap()
    .test;
    let full = execute(&s, &t, DEFAULT_STEP_BUDGET).unwrap();
    assert!(full.aborted_at.is_none());
    let cut = execute(&s, &t, 5).unwrap();
    assert_eq!(cut.call_results.last(), Some(&CallResult::Exhausted));
    assert!(cut.aborted_at.is_some());
}

#[test]
fn execution_is_deterministic() {
    use rand::SeedableRng;
    let s = fixture();
    let cfg = crate::test_model::VariationConfig::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let t = crate::test_model::random_test(&s, &cfg, &mut rng);
        let a = execute(&s, &t, DEFAULT_STEP_BUDGET).unwrap();
        let b = execute(&s, &t, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(a, b);
        let targets = extract_targets(&s);
        for target in &targets {
            let d = target_distance(&s, &a, target);
            assert!(d.is_finite() && d >= 0.0);
            assert_eq!(d == 0.0, covers(&s, &a, target));
        }
        // Branch records: a hit branch has at least one zero distance.
        for rec in &a.branches {
            if rec.hits == 0 {
                assert!(rec.d_true.is_infinite() && rec.d_false.is_infinite());
            } else {
                assert!(rec.d_true == 0.0 || rec.d_false == 0.0);
            }
        }
        for (m, inf) in a.infections.iter().enumerate() {
            if *inf == 0.0 {
                assert!(a.line_hit(s.mutant(crate::subject::MutantId(m as u32)).line));
            }
        }
    }
}

#[test]
fn observers_report_final_state() {
    let s = fixture();
    let t = parse_test(
        &s,
        "test {\n    ArrayIntList v0 = new ArrayIntList();\n    bool v1 = v0.add(4);\n}\n",
    )
    .unwrap()
    .test;
    let (trace, obs) = execute_observed(&s, &t, DEFAULT_STEP_BUDGET).unwrap();
    assert!(trace.aborted_at.is_none());
    let size = s.find_method("size", 0).unwrap();
    let v = obs.iter().find(|o| o.method == size).unwrap();
    assert_eq!(v.value, Some(RuntimeValue::Int(1)));
    // Observer calls leave the recorded trace untouched.
    assert_eq!(trace, execute(&s, &t, DEFAULT_STEP_BUDGET).unwrap());
}
