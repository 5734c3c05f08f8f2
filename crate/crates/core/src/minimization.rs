//! Target-driven test minimization and assertion generation.

use thiserror::Error;

use crate::interpreter::{covers, execute, execute_observed, CallResult, ExecutionTrace};
use crate::subject::{CoverageTarget, SubjectClass};
use crate::test_model::{Assertion, MinimizedTest, Observed, Statement, TestCase, VarId};

/// Default cap on assertions per test.
pub const DEFAULT_MAX_ASSERTIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MinimizeError {
    #[error("test does not cover target {0}")]
    NotCovered(String),
    #[error("test is not executable: {0}")]
    Invalid(String),
}

/// Removes statement `index` and, transitively, every later statement
/// reading a variable that is no longer defined.
pub fn remove_with_dependents(test: &TestCase, index: usize) -> TestCase {
    let mut gone: Vec<VarId> = test.statements[index].defined().into_iter().collect();
    let mut out = Vec::with_capacity(test.len());
    for (i, s) in test.statements.iter().enumerate() {
        if i == index {
            continue;
        }
        if i > index && s.uses().iter().any(|v| gone.contains(v)) {
            gone.extend(s.defined());
            continue;
        }
        out.push(s.clone());
    }
    TestCase::new(out)
}

fn covering(subject: &SubjectClass, test: &TestCase, target: &CoverageTarget, budget: u64) -> Option<ExecutionTrace> {
    let trace = execute(subject, test, budget).ok()?;
    covers(subject, &trace, target).then_some(trace)
}

/// Shrinks `test` to a 1-minimal test still covering `target`.
///
/// Repeated backward passes try to drop each statement together with
/// its dependents, keeping a removal whenever coverage survives, until a
/// full pass removes nothing.
pub fn minimize_for_target(
    subject: &SubjectClass,
    test: &TestCase,
    target: &CoverageTarget,
    step_budget: u64,
) -> Result<MinimizedTest, MinimizeError> {
    let trace = execute(subject, test, step_budget).map_err(|e| MinimizeError::Invalid(e.to_string()))?;
    if !covers(subject, &trace, target) {
        return Err(MinimizeError::NotCovered(target.label.clone()));
    }
    let mut current = test.clone();
    // Statements after an early stop never run.
    if let Some(at) = trace.aborted_at {
        current.statements.truncate(at + 1);
    }
    let mut last = covering(subject, &current, target, step_budget).expect("prefix keeps coverage");
    loop {
        let mut changed = false;
        let mut i = current.len();
        while i > 0 {
            i -= 1;
            if i >= current.len() {
                continue;
            }
            let candidate = remove_with_dependents(&current, i);
            if let Some(t) = covering(subject, &candidate, target, step_budget) {
                current = candidate;
                last = t;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let raises = last.raised().map(|(at, name)| (at, name.to_string()));
    Ok(MinimizedTest::new(subject, current, target.id, Vec::new(), raises))
}

/// Adds equality assertions on call results and observer values,
/// keeping at most `cap`. Observers on the receiver of the last call
/// are preferred, then call results from the end backwards.
pub fn generate_assertions(subject: &SubjectClass, m: MinimizedTest, cap: usize, step_budget: u64) -> MinimizedTest {
    let Ok((trace, observed)) = execute_observed(subject, &m.test, step_budget) else {
        return m;
    };
    let last_receiver = m.test.statements.iter().rev().find_map(|s| match s {
        Statement::Call { receiver, .. } => Some(*receiver),
        _ => None,
    });
    let observer_assertions: Vec<Assertion> = observed
        .iter()
        .filter_map(|o| {
            let expected = o.value.as_ref()?.as_literal()?;
            Some(Assertion {
                observed: Observed::Observer {
                    var: o.var,
                    method: o.method,
                },
                expected,
            })
        })
        .collect();
    let mut result_assertions = Vec::new();
    for (i, s) in m.test.statements.iter().enumerate() {
        let Statement::Call { result: Some(v), .. } = s else { continue };
        if let Some(CallResult::Returned(r)) = trace.call_results.get(i) {
            if let Some(expected) = r.as_literal() {
                result_assertions.push(Assertion {
                    observed: Observed::Result(*v),
                    expected,
                });
            }
        }
    }

    let on_last = |a: &Assertion| matches!(a.observed, Observed::Observer { var, .. } if Some(var) == last_receiver);
    let mut ranked: Vec<&Assertion> = observer_assertions.iter().filter(|a| on_last(a)).collect();
    ranked.extend(result_assertions.iter().rev());
    ranked.extend(observer_assertions.iter().filter(|a| !on_last(a)));
    ranked.truncate(cap);

    // Present results in statement order, then observers.
    let mut chosen: Vec<Assertion> = result_assertions.iter().filter(|a| ranked.contains(a)).cloned().collect();
    chosen.extend(observer_assertions.iter().filter(|a| ranked.contains(a)).cloned());
    m.with_assertions(subject, chosen)
}

/// Re-executes `m` and checks every assertion against what it observes.
pub fn assertions_hold(subject: &SubjectClass, m: &MinimizedTest, step_budget: u64) -> bool {
    let Ok((trace, observed)) = execute_observed(subject, &m.test, step_budget) else {
        return false;
    };
    m.assertions.iter().all(|a| match a.observed {
        Observed::Result(v) => {
            let Some(i) = m.test.statements.iter().position(|s| s.defined() == Some(v)) else {
                return false;
            };
            matches!(trace.call_results.get(i), Some(CallResult::Returned(r)) if r.as_literal().as_ref() == Some(&a.expected))
        }
        Observed::Observer { var, method } => observed
            .iter()
            .any(|o| o.var == var && o.method == method && o.value.as_ref().and_then(|v| v.as_literal()).as_ref() == Some(&a.expected)),
    })
}

/// Minimizes for `target` and attaches assertions.
pub fn minimize_with_assertions(
    subject: &SubjectClass,
    test: &TestCase,
    target: &CoverageTarget,
    step_budget: u64,
) -> Result<MinimizedTest, MinimizeError> {
    let m = minimize_for_target(subject, test, target, step_budget)?;
    Ok(generate_assertions(subject, m, DEFAULT_MAX_ASSERTIONS, step_budget))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpreter::DEFAULT_STEP_BUDGET;
    use crate::subject::{extract_targets, ARRAY_INT_LIST};
    use crate::test_model::{parse_test, Literal};

    fn fixture() -> SubjectClass {
        SubjectClass::parse(ARRAY_INT_LIST).unwrap()
    }

    fn test_of(s: &SubjectClass, body: &str) -> TestCase {
        parse_test(s, &format!("test {{\n{body}\n}}\n")).unwrap().test
    }

    #[test]
    fn drops_unrelated_statements() {
        let s = fixture();
        let t = extract_targets(&s);
        let test = test_of(
            &s,
            "ArrayIntList v0 = new ArrayIntList();\nint v1 = 5;\nbool v2 = v0.add(v1);\nv0.clear();\nint v3 = v0.removeElementAt(0);",
        );
        // Line 103 is in clear().
        let target = t.get(t.line_target(103).unwrap());
        let m = minimize_for_target(&s, &test, target, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.rendered.contains("v0.clear();"));
    }

    #[test]
    fn minimal_test_is_unchanged() {
        let s = fixture();
        let t = extract_targets(&s);
        let test = test_of(&s, "ArrayIntList v0 = new ArrayIntList();\nv0.clear();");
        let target = t.get(t.line_target(104).unwrap());
        let m = minimize_for_target(&s, &test, target, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(m.test, test);
    }

    #[test]
    fn distinct_inner_tests_collapse() {
        let s = fixture();
        let t = extract_targets(&s);
        let target = t.get(t.line_target(104).unwrap());
        let a = test_of(&s, "ArrayIntList v0 = new ArrayIntList();\nbool v1 = v0.add(3);\nv0.clear();");
        let b = test_of(&s, "ArrayIntList v0 = new ArrayIntList();\nint v1 = v0.size();\nv0.clear();\nint v2 = v0.indexOf(9);");
        let ma = minimize_for_target(&s, &a, target, DEFAULT_STEP_BUDGET).unwrap();
        let mb = minimize_for_target(&s, &b, target, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(ma.canonical_key, mb.canonical_key);
    }

    #[test]
    fn rejects_non_covering_input() {
        let s = fixture();
        let t = extract_targets(&s);
        let test = test_of(&s, "ArrayIntList v0 = new ArrayIntList();");
        let target = t.get(t.line_target(104).unwrap());
        assert!(matches!(
            minimize_for_target(&s, &test, target, DEFAULT_STEP_BUDGET),
            Err(MinimizeError::NotCovered(_))
        ));
    }

    #[test]
    fn return_value_is_asserted() {
        let s = fixture();
        let t = extract_targets(&s);
        let test = test_of(
            &s,
            "ArrayIntList v0 = new ArrayIntList();\nint v1 = 2181;\nbool v2 = v0.add(v1);\nint v3 = v0.removeElementAt(0);",
        );
        let target = t.get(t.line_target(99).unwrap());
        let m = minimize_with_assertions(&s, &test, target, DEFAULT_STEP_BUDGET).unwrap();
        assert!(m.assertions.iter().any(|a| a.expected == Literal::Int(2181)));
        assert!(m.rendered.contains("assert v3 == 2181;"), "{}", m.rendered);
        assert!(m.assertions.len() <= DEFAULT_MAX_ASSERTIONS);
        assert!(assertions_hold(&s, &m, DEFAULT_STEP_BUDGET));
    }

    #[test]
    fn void_test_asserts_its_only_observer() {
        let s = SubjectClass::parse(
            "class Counter {\n  field n: int = 0;\n  fn bump() {\n    n = n + 1;\n  }\n  observer fn size() -> int {\n    return n;\n  }\n}",
        )
        .unwrap();
        let t = extract_targets(&s);
        let test = test_of(&s, "Counter v0 = new Counter();\nv0.bump();");
        let target = t.get(t.line_target(4).unwrap());
        let m = minimize_with_assertions(&s, &test, target, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(m.assertions.len(), 1);
        assert!(m.rendered.contains("assert v0.size() == 1;"));
    }

    #[test]
    fn raising_statement_is_kept_and_annotated() {
        let s = fixture();
        let t = extract_targets(&s);
        let test = test_of(&s, "ArrayIntList v0 = new ArrayIntList();\nint v1 = v0.get(4);\nv0.clear();");
        let target = t.get(t.line_target(28).unwrap());
        let m = minimize_with_assertions(&s, &test, target, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.raises, Some((1, "IndexOutOfBounds".into())));
        assert!(m.rendered.contains("// raises IndexOutOfBounds"));
    }
}
