//! Per-target fitness distances computed from an execution trace.
//!
//! Predicates use a Tracey-style distance table with constant `K`.
//! Distances of targets whose controlling branch was not reached grow by
//! one per unsatisfied ancestor, so every unreached target is farther
//! away than any reached one.

use crate::subject::{BinOp, CoverageTarget, Line, Outcome, SubjectClass, TargetKind};

use super::ExecutionTrace;

/// Distance added for a violated predicate.
pub const K: f64 = 1.0;

/// Maps `[0, ∞]` onto `[0, 1]`, strictly increasing on finite inputs.
pub fn normalize(d: f64) -> f64 {
    if d.is_infinite() {
        1.0
    } else {
        d / (d + 1.0)
    }
}

fn negate(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Ge,
        BinOp::Ge => BinOp::Lt,
        BinOp::Le => BinOp::Gt,
        BinOp::Gt => BinOp::Le,
        BinOp::Eq => BinOp::Ne,
        BinOp::Ne => BinOp::Eq,
        _ => unreachable!("{op:?} is not relational"),
    }
}

/// Distance to making `a op b` true; 0 when it already holds.
fn violation(op: BinOp, a: i64, b: i64) -> f64 {
    if super::relational(op, a, b) {
        return 0.0;
    }
    let (a, b) = (a as i128, b as i128);
    let d = match op {
        BinOp::Lt | BinOp::Le => a - b,
        BinOp::Gt | BinOp::Ge => b - a,
        BinOp::Eq => (a - b).abs(),
        BinOp::Ne => 0,
        _ => unreachable!(),
    };
    d as f64 + K
}

/// Distances to the true and to the false outcome of `a op b`.
pub(crate) fn relational_distances(op: BinOp, a: i64, b: i64) -> (f64, f64) {
    (violation(op, a, b), violation(negate(op), a, b))
}

/// Sign class of `a - b`: which of `<0`, `=0`, `>0` holds.
fn holds_in(op: BinOp, class: i8) -> bool {
    super::relational(op, class as i64, 0)
}

/// Distance to an evaluation where `original` and `replacement` disagree
/// on `(a, b)`. Zero when they already disagree.
pub(crate) fn ror_infection(original: BinOp, replacement: BinOp, a: i64, b: i64) -> f64 {
    let d = a as i128 - b as i128;
    let current = d.signum() as i8;
    let mut best = f64::INFINITY;
    for class in [-1i8, 0, 1] {
        if holds_in(original, class) == holds_in(replacement, class) {
            continue;
        }
        if class == current {
            return 0.0;
        }
        let dist = match class {
            -1 => d + 1,
            0 => d.abs(),
            _ => 1 - d,
        };
        best = best.min(dist as f64);
    }
    best
}

fn method_entered(subject: &SubjectClass, trace: &ExecutionTrace, line: Line) -> bool {
    let method = subject.lines()[&line].method;
    trace.line_hit(subject.method(method).line)
}

/// Distance to executing `line`.
fn reach(subject: &SubjectClass, trace: &ExecutionTrace, line: Line) -> f64 {
    if trace.line_hit(line) {
        return 0.0;
    }
    match subject.lines()[&line].parent {
        Some(o) => {
            let dp = outcome(subject, trace, o);
            if dp > 0.0 {
                dp
            } else {
                // The controlling outcome was taken but execution left
                // the arm early.
                normalize(K)
            }
        }
        None if method_entered(subject, trace, line) => normalize(K),
        None => 1.0,
    }
}

/// Distance to taking branch outcome `o`.
fn outcome(subject: &SubjectClass, trace: &ExecutionTrace, o: Outcome) -> f64 {
    let rec = &trace.branches[o.branch.0 as usize];
    if rec.hits > 0 {
        normalize(if o.value { rec.d_true } else { rec.d_false })
    } else {
        1.0 + reach(subject, trace, subject.branch(o.branch).line)
    }
}

/// Fitness of a trace for one target; 0 iff the target is covered.
pub fn target_distance(subject: &SubjectClass, trace: &ExecutionTrace, target: &CoverageTarget) -> f64 {
    match target.kind {
        TargetKind::Line => reach(subject, trace, target.line),
        TargetKind::BranchTrue | TargetKind::BranchFalse => outcome(
            subject,
            trace,
            Outcome {
                branch: target.branch.expect("branch targets carry their branch"),
                value: target.kind == TargetKind::BranchTrue,
            },
        ),
        TargetKind::WeakMutant => {
            let m = target.mutant.expect("mutant targets carry their mutant");
            let inf = trace.infections[m.0 as usize];
            if inf.is_finite() {
                normalize(inf)
            } else if trace.line_hit(target.line) {
                1.0
            } else {
                1.0 + reach(subject, trace, target.line)
            }
        }
    }
}

pub fn covers(subject: &SubjectClass, trace: &ExecutionTrace, target: &CoverageTarget) -> bool {
    target_distance(subject, trace, target) == 0.0
}

/// Distances for every target, in target order.
pub fn fitness_vector<'a>(
    subject: &SubjectClass,
    targets: impl IntoIterator<Item = &'a CoverageTarget>,
    trace: &ExecutionTrace,
) -> Vec<f64> {
    targets
        .into_iter()
        .map(|t| target_distance(subject, trace, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_is_monotone_and_bounded() {
        let mut prev = -1.0;
        for i in 0..1000 {
            let v = normalize(i as f64 * 0.37);
            assert!(v > prev && (0.0..1.0).contains(&v));
            prev = v;
        }
        assert_eq!(normalize(0.0), 0.0);
        assert_eq!(normalize(3.0), 0.75);
    }

    #[test]
    fn less_than_table() {
        // x = 3, y = 5: true taken; false needs y - x + 1 = 3.
        assert_eq!(relational_distances(BinOp::Lt, 3, 5), (0.0, 3.0));
        assert_eq!(relational_distances(BinOp::Lt, 5, 5), (1.0, 0.0));
        assert_eq!(relational_distances(BinOp::Eq, 2, 7), (6.0, 0.0));
        assert_eq!(relational_distances(BinOp::Ne, 4, 4), (1.0, 0.0));
    }

    #[test]
    fn exactly_one_outcome_is_zero() {
        for op in BinOp::RELATIONAL {
            for a in -3..=3 {
                for b in -3..=3 {
                    let (t, f) = relational_distances(op, a, b);
                    assert!((t == 0.0) != (f == 0.0), "{op:?} {a} {b}");
                }
            }
        }
    }

    #[test]
    fn ror_infection_matches_brute_force() {
        // Oracle: the smallest |shift| of `a` that makes the two
        // operators disagree.
        for op in BinOp::RELATIONAL {
            for rep in BinOp::RELATIONAL {
                if rep == op {
                    continue;
                }
                for a in -4i64..=4 {
                    for b in -4i64..=4 {
                        let oracle = (0..=20i64)
                            .find(|s| {
                                [a + s, a - s]
                                    .iter()
                                    .any(|x| super::super::relational(op, *x, b) != super::super::relational(rep, *x, b))
                            })
                            .unwrap() as f64;
                        assert_eq!(ror_infection(op, rep, a, b), oracle, "{op:?}->{rep:?} {a} {b}");
                    }
                }
            }
        }
    }
}
