use std::fmt::Write;

use super::targets::{CoverageTarget, TargetKind};
use super::SubjectClass;

/// Human-readable description of a target, as written next to the
/// candidate tests of an interaction.
///
/// Weak mutants name the kind of mutation but never the replacement.
pub fn render_target_description(target: &CoverageTarget, subject: &SubjectClass) -> String {
    let method = subject.method_name(target.method);
    let source = subject.source_line(target.line);
    let mut out = String::new();
    let kind = match target.kind {
        TargetKind::Line => "line coverage".to_string(),
        TargetKind::BranchTrue => "branch coverage (true outcome)".to_string(),
        TargetKind::BranchFalse => "branch coverage (false outcome)".to_string(),
        TargetKind::WeakMutant => {
            let op = target
                .mutant_spec(subject)
                .map(|m| m.operator.describe())
                .unwrap_or("mutation");
            format!("weak mutation ({op})")
        }
    };
    writeln!(out, "Target {}: {kind}", target.label).unwrap();
    writeln!(out, "Method: {method}").unwrap();
    writeln!(out, "Line {}: \"{source}\"", target.line).unwrap();
    let goal = match target.kind {
        TargetKind::Line => format!("reach line {}", target.line),
        TargetKind::BranchTrue => format!("make the condition on line {} evaluate to true", target.line),
        TargetKind::BranchFalse => format!("make the condition on line {} evaluate to false", target.line),
        TargetKind::WeakMutant => format!(
            "execute line {} so that a mutated expression there yields a different value than the original",
            target.line
        ),
    };
    writeln!(out, "Goal: {goal}").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subject::{extract_targets, MutationOperator};

    const SRC: &str = "class A {\n field n: int = 0;\n fn check(x: int) {\n  if (x < n) {\n   n = x;\n  }\n }\n}";

    #[test]
    fn branch_description_names_method_line_and_outcome() {
        let s = SubjectClass::parse(SRC).unwrap();
        let t = extract_targets(&s);
        let b = t.iter().find(|t| t.kind == TargetKind::BranchTrue).unwrap();
        let text = render_target_description(b, &s);
        assert!(text.contains("check"));
        assert!(text.contains("Line 4: \"if (x < n) {\""));
        assert!(text.contains("true"));
    }

    #[test]
    fn mutant_description_hides_replacement() {
        let s = SubjectClass::parse(SRC).unwrap();
        let t = extract_targets(&s);
        for m in t.iter().filter(|t| t.kind == TargetKind::WeakMutant) {
            let spec = m.mutant_spec(&s).unwrap();
            if spec.operator != MutationOperator::Ror {
                continue;
            }
            let text = render_target_description(m, &s);
            assert!(text.contains("relational operator replacement"));
            let goal = text.lines().last().unwrap();
            assert!(!goal.contains(spec.replacement_token()), "{goal}");
            assert!(!text.contains(&format!("replaced by {}", spec.replacement_token())));
        }
    }

    #[test]
    fn line_description_says_reach() {
        let s = SubjectClass::parse(SRC).unwrap();
        let t = extract_targets(&s);
        let l = t.get(t.line_target(5).unwrap());
        let text = render_target_description(l, &s);
        assert!(text.contains("reach line 5"));
        assert!(text.contains("\"n = x;\""));
    }
}
