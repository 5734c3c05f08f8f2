//! Coverage targets and the control-dependency forest over them.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{BranchId, Line, MethodRef, MutantId, MutantSpec, Outcome, SubjectClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TargetId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TargetKind {
    Line,
    BranchTrue,
    BranchFalse,
    WeakMutant,
}

/// One objective of the search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageTarget {
    pub id: TargetId,
    /// Stable textual token, e.g. `L12`, `B12T`, `M12.3`.
    pub label: String,
    pub kind: TargetKind,
    pub line: Line,
    pub method: MethodRef,
    pub control_parent: Option<TargetId>,
    pub branch: Option<BranchId>,
    pub mutant: Option<MutantId>,
}

impl CoverageTarget {
    pub fn mutant_spec<'a>(&self, subject: &'a SubjectClass) -> Option<&'a MutantSpec> {
        self.mutant.map(|m| &subject.mutant(m).spec)
    }
}

/// The ordered target list of a subject with lookup indexes.
#[derive(Debug, Clone)]
pub struct TargetSet {
    targets: Vec<CoverageTarget>,
    by_line: HashMap<Line, TargetId>,
    by_outcome: HashMap<Outcome, TargetId>,
    by_mutant: Vec<TargetId>,
    by_label: HashMap<String, TargetId>,
}

impl TargetSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CoverageTarget> {
        self.targets.iter()
    }

    pub fn get(&self, id: TargetId) -> &CoverageTarget {
        &self.targets[id.0 as usize]
    }

    pub fn as_slice(&self) -> &[CoverageTarget] {
        &self.targets
    }

    pub fn line_target(&self, line: Line) -> Option<TargetId> {
        self.by_line.get(&line).copied()
    }

    pub fn outcome_target(&self, outcome: Outcome) -> TargetId {
        self.by_outcome[&outcome]
    }

    pub fn mutant_target(&self, mutant: MutantId) -> TargetId {
        self.by_mutant[mutant.0 as usize]
    }

    pub fn by_label(&self, label: &str) -> Option<TargetId> {
        self.by_label.get(label).copied()
    }

    pub fn count(&self, kind: TargetKind) -> usize {
        self.targets.iter().filter(|t| t.kind == kind).count()
    }
}

impl<'a> IntoIterator for &'a TargetSet {
    type Item = &'a CoverageTarget;
    type IntoIter = std::slice::Iter<'a, CoverageTarget>;

    fn into_iter(self) -> Self::IntoIter {
        self.targets.iter()
    }
}

/// Extracts targets ordered by line, then kind, then mutant index.
pub fn extract_targets(subject: &SubjectClass) -> TargetSet {
    struct Pending {
        kind: TargetKind,
        line: Line,
        method: MethodRef,
        parent: Option<Outcome>,
        branch: Option<BranchId>,
        mutant: Option<MutantId>,
        order: u32,
    }

    let mut pending = Vec::new();
    for (&line, info) in &subject.lines {
        pending.push(Pending {
            kind: TargetKind::Line,
            line,
            method: info.method,
            parent: info.parent,
            branch: None,
            mutant: None,
            order: 0,
        });
    }
    for (i, b) in subject.branches.iter().enumerate() {
        for (kind, _) in [(TargetKind::BranchTrue, true), (TargetKind::BranchFalse, false)] {
            pending.push(Pending {
                kind,
                line: b.line,
                method: b.method,
                parent: b.parent,
                branch: Some(BranchId(i as u32)),
                mutant: None,
                order: 0,
            });
        }
    }
    for (i, m) in subject.mutants.iter().enumerate() {
        pending.push(Pending {
            kind: TargetKind::WeakMutant,
            line: m.line,
            method: m.method,
            parent: subject.lines[&m.line].parent,
            branch: None,
            mutant: Some(MutantId(i as u32)),
            order: i as u32,
        });
    }
    pending.sort_by_key(|p| (p.line, p.kind, p.order));

    let mut by_outcome = HashMap::new();
    for (i, p) in pending.iter().enumerate() {
        if let Some(b) = p.branch {
            let value = p.kind == TargetKind::BranchTrue;
            by_outcome.insert(Outcome { branch: b, value }, TargetId(i as u32));
        }
    }

    let mut targets = Vec::with_capacity(pending.len());
    let mut by_line = HashMap::new();
    let mut by_mutant = vec![TargetId(0); subject.mutants.len()];
    let mut by_label = HashMap::new();
    let mut mutant_ordinal: BTreeMap<Line, u32> = BTreeMap::new();
    for (i, p) in pending.into_iter().enumerate() {
        let id = TargetId(i as u32);
        let label = match p.kind {
            TargetKind::Line => {
                by_line.insert(p.line, id);
                format!("L{}", p.line)
            }
            TargetKind::BranchTrue => format!("B{}T", p.line),
            TargetKind::BranchFalse => format!("B{}F", p.line),
            TargetKind::WeakMutant => {
                by_mutant[p.mutant.unwrap().0 as usize] = id;
                let k = mutant_ordinal.entry(p.line).or_insert(0);
                *k += 1;
                format!("M{}.{}", p.line, *k - 1)
            }
        };
        by_label.insert(label.clone(), id);
        targets.push(CoverageTarget {
            id,
            label,
            kind: p.kind,
            line: p.line,
            method: p.method,
            control_parent: p.parent.map(|o| by_outcome[&o]),
            branch: p.branch,
            mutant: p.mutant,
        });
    }

    TargetSet {
        targets,
        by_line,
        by_outcome,
        by_mutant,
        by_label,
    }
}

/// Map from each target to the branch-outcome target that controls it.
pub type ControlDeps = BTreeMap<TargetId, Option<TargetId>>;

pub fn control_dependencies(subject: &SubjectClass) -> ControlDeps {
    extract_targets(subject)
        .iter()
        .map(|t| (t.id, t.control_parent))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subject::{BinOp, MutationOperator, Replacement, TargetKind, ARRAY_INT_LIST};

    fn subject(src: &str) -> SubjectClass {
        SubjectClass::parse(src).unwrap()
    }

    #[test]
    fn counts_lines_and_branches() {
        let s = subject("class A {\n fn m(c: bool) {\n  if (c) {\n   return;\n  }\n }\n}");
        let t = extract_targets(&s);
        // Implicit constructor entry + the method's three lines.
        let method_lines = t
            .iter()
            .filter(|t| t.kind == TargetKind::Line && t.method == MethodRef::Method(0))
            .count();
        assert_eq!(method_lines, 3);
        assert_eq!(t.count(TargetKind::BranchTrue) + t.count(TargetKind::BranchFalse), 2);
        assert_eq!(t.count(TargetKind::WeakMutant), 0);
    }

    #[test]
    fn relational_site_yields_five_mutants() {
        let s = subject("class A {\n fn m(a: int, b: int) -> bool {\n  return a < b;\n }\n}");
        let t = extract_targets(&s);
        let ror: Vec<_> = t
            .iter()
            .filter_map(|t| t.mutant_spec(&s))
            .filter(|m| m.operator == MutationOperator::Ror)
            .collect();
        assert_eq!(ror.len(), 5);
        let mut reps: Vec<_> = ror.iter().map(|m| m.replacement_token()).collect();
        reps.sort();
        assert_eq!(reps, vec!["!=", "<=", "==", ">", ">="]);
        assert!(ror.iter().all(|m| m.replacement != Replacement::Op(BinOp::Lt)));
    }

    #[test]
    fn straight_line_without_expressions_has_no_mutants() {
        let s = subject("class A {\n field f: bool = false;\n fn m() {\n  f = true;\n  return;\n }\n}");
        assert_eq!(extract_targets(&s).count(TargetKind::WeakMutant), 0);
    }

    #[test]
    fn nested_line_parent_is_true_outcome() {
        let s = subject("class A {\n fn m(c: bool) {\n  if (c) {\n   return;\n  }\n }\n}");
        let t = extract_targets(&s);
        let line = t.get(t.line_target(4).unwrap());
        let parent = t.get(line.control_parent.unwrap());
        assert_eq!(parent.kind, TargetKind::BranchTrue);
        assert_eq!(parent.line, 3);
        assert!(t.get(t.line_target(3).unwrap()).control_parent.is_none());
    }

    #[test]
    fn doubly_nested_chain_has_length_two() {
        let s = subject(
            "class A {\n fn m(a: bool, b: bool) {\n  if (a) {\n   if (b) {\n    return;\n   }\n  }\n }\n}",
        );
        let deps = control_dependencies(&s);
        let t = extract_targets(&s);
        let mut chain = Vec::new();
        let mut cur = deps[&t.line_target(5).unwrap()];
        while let Some(p) = cur {
            chain.push(p);
            cur = deps[&p];
        }
        assert_eq!(chain.len(), 2);
        let root = t.get(*chain.last().unwrap());
        assert_eq!((root.kind, root.line), (TargetKind::BranchTrue, 3));
    }

    #[test]
    fn fixture_invariants() {
        let s = subject(ARRAY_INT_LIST);
        let t = extract_targets(&s);
        assert_eq!(t.len(), extract_targets(&s).len());
        let a: Vec<_> = t.iter().map(|x| x.label.clone()).collect();
        let b: Vec<_> = extract_targets(&s).iter().map(|x| x.label.clone()).collect();
        assert_eq!(a, b);
        for target in &t {
            assert_eq!(target.method, s.lines()[&target.line].method);
            if let Some(p) = target.control_parent {
                let parent = t.get(p);
                assert!(matches!(parent.kind, TargetKind::BranchTrue | TargetKind::BranchFalse));
                assert_eq!(parent.method, target.method);
                // Parents sit on strictly earlier lines, so the relation is acyclic.
                assert!(parent.line < target.line);
            }
            if let Some(m) = target.mutant {
                let site = &s.sites()[s.mutant(m).spec.site.0 as usize];
                assert_eq!(site.method, target.method);
            }
        }
        // Pairs share a line.
        for b in 0..s.branches().len() as u32 {
            let tt = t.get(t.outcome_target(Outcome { branch: BranchId(b), value: true }));
            let ff = t.get(t.outcome_target(Outcome { branch: BranchId(b), value: false }));
            assert_eq!(tt.line, ff.line);
        }
    }
}
