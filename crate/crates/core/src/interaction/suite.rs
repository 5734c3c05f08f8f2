//! Final suite assembly: preference tests first, coverage-archive tests
//! to fill the gaps, then redundancy removal from the least readable up.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Context, PreferenceArchive};
use crate::interpreter::{execute, fitness_vector};
use crate::minimization::minimize_with_assertions;
use crate::search::CoverageArchive;
use crate::session::SuiteEntryRecord;
use crate::subject::TargetId;
use crate::test_model::{MinimizedTest, ReadabilityScore, TestCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteSource {
    Preference,
    Coverage,
}

impl SuiteSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SuiteSource::Preference => "preference",
            SuiteSource::Coverage => "coverage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteTest {
    pub test: MinimizedTest,
    pub source: SuiteSource,
    pub score: Option<ReadabilityScore>,
    pub covers: BTreeSet<TargetId>,
}

impl SuiteTest {
    /// Removal priority: unscored tests rank below every score.
    fn rank(&self) -> i64 {
        self.score.map_or(-1, |s| s.value() as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub subject: String,
    pub target_count: usize,
    pub tests: Vec<SuiteTest>,
}

impl TestSuite {
    pub fn covered(&self) -> BTreeSet<TargetId> {
        self.tests.iter().flat_map(|t| t.covers.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    pub fn render(&self, ctx: Context<'_>) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "// Test suite for {}: {} tests covering {} of {} targets",
            self.subject,
            self.tests.len(),
            self.covered().len(),
            self.target_count
        )
        .unwrap();
        for (i, t) in self.tests.iter().enumerate() {
            let label = &ctx.targets.get(t.test.target).label;
            let score = t.score.map_or("unscored".to_string(), |s| format!("readability {}", s.value()));
            writeln!(out, "\n// test {}: target {label}, {} archive, {score}", i + 1, t.source.as_str()).unwrap();
            out.push_str(&t.test.rendered);
        }
        out
    }

    pub fn records(&self, ctx: Context<'_>) -> Vec<SuiteEntryRecord> {
        self.tests
            .iter()
            .map(|t| SuiteEntryRecord {
                target: t.test.target.0,
                label: ctx.targets.get(t.test.target).label.clone(),
                source: t.source.as_str().to_string(),
                score: t.score.map(|s| s.value()),
                canonical_key: t.test.canonical_key.clone(),
                covers: t.covers.len(),
            })
            .collect()
    }
}

fn covered_by(ctx: Context<'_>, test: &TestCase) -> BTreeSet<TargetId> {
    let Ok(trace) = execute(ctx.subject, test, ctx.step_budget) else {
        return BTreeSet::new();
    };
    fitness_vector(ctx.subject, ctx.targets.iter(), &trace)
        .into_iter()
        .enumerate()
        .filter(|(_, f)| *f == 0.0)
        .map(|(i, _)| TargetId(i as u32))
        .collect()
}

/// Builds the final suite and reconciles `archive` with it.
///
/// Every preference test is included; each archived target the suite
/// does not yet cover adds its minimized archive test. Tests whose
/// coverage is subsumed by the rest are then dropped, lowest score
/// first (unscored before scored, longer before shorter, higher target
/// before lower). Targets the minimized tests happen to cover beyond the
/// archive are inserted into it at `generation`, so afterwards the
/// suite and the archive cover the same targets.
pub fn assemble_final_suite(
    ctx: Context<'_>,
    preference: &PreferenceArchive,
    archive: &mut CoverageArchive,
    generation: u32,
) -> TestSuite {
    let mut tests: Vec<SuiteTest> = preference
        .iter()
        .map(|(_, e)| SuiteTest {
            covers: covered_by(ctx, &e.test.test),
            test: e.test.clone(),
            source: SuiteSource::Preference,
            score: Some(e.score),
        })
        .collect();
    let mut union: BTreeSet<TargetId> = tests.iter().flat_map(|t| t.covers.iter().copied()).collect();
    let archived: Vec<(TargetId, TestCase)> = archive.iter().map(|(t, e)| (t, e.test.clone())).collect();
    for (target, test) in archived {
        if union.contains(&target) {
            continue;
        }
        let Ok(m) = minimize_with_assertions(ctx.subject, &test, ctx.targets.get(target), ctx.step_budget) else {
            continue;
        };
        let covers = covered_by(ctx, &m.test);
        union.extend(covers.iter().copied());
        tests.push(SuiteTest {
            test: m,
            source: SuiteSource::Coverage,
            score: None,
            covers,
        });
    }

    let mut order: Vec<usize> = (0..tests.len()).collect();
    order.sort_by(|&a, &b| {
        let (ta, tb) = (&tests[a], &tests[b]);
        ta.rank()
            .cmp(&tb.rank())
            .then(tb.test.len().cmp(&ta.test.len()))
            .then(tb.test.target.cmp(&ta.test.target))
    });
    let mut kept = vec![true; tests.len()];
    for i in order {
        let others: BTreeSet<TargetId> = (0..tests.len())
            .filter(|j| *j != i && kept[*j])
            .flat_map(|j| tests[j].covers.iter().copied())
            .collect();
        if tests[i].covers.is_subset(&others) {
            kept[i] = false;
        }
    }
    let mut tests: Vec<SuiteTest> = tests.into_iter().zip(kept).filter(|(_, k)| *k).map(|(t, _)| t).collect();
    tests.sort_by(|a, b| b.rank().cmp(&a.rank()).then(a.test.target.cmp(&b.test.target)));

    for t in &tests {
        for target in &t.covers {
            if !archive.contains(*target) {
                archive.offer(*target, &t.test.test, generation);
            }
        }
    }
    TestSuite {
        subject: ctx.subject.name.clone(),
        target_count: ctx.targets.len(),
        tests,
    }
}
