//! Does coverage time relate to test length? Runs the plain search over
//! many seeds, minimizes every archived test for its target, and compares
//! the lengths of targets covered in the initial population against
//! those covered later.

use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::minimization::minimize_for_target;
use crate::search::{run_search, SearchConfig};
use crate::stats::{cliffs_delta, rank_sum_test, CliffsDelta, RankSumResult};
use crate::subject::{SubjectClass, TargetSet};
use crate::test_model::{render_test, TestCase};

/// Significance level of the group comparison.
pub const ALPHA: f64 = 0.05;

/// Length of the minimized test covering one target in one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetLengthRecord {
    pub seed: u64,
    pub target: u32,
    pub label: String,
    pub covered_at: u32,
    /// Statement lines, assertions excluded.
    pub lines: usize,
    /// Characters on those lines, without indentation or trailing
    /// whitespace.
    pub chars: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GenerationGroup {
    #[serde(rename = "g0")]
    G0,
    #[serde(rename = "g1_9")]
    G1To9,
    #[serde(rename = "g10plus")]
    G10Plus,
}

impl GenerationGroup {
    pub const ALL: [GenerationGroup; 3] = [GenerationGroup::G0, GenerationGroup::G1To9, GenerationGroup::G10Plus];

    pub fn of(generation: u32) -> Self {
        match generation {
            0 => GenerationGroup::G0,
            1..=9 => GenerationGroup::G1To9,
            _ => GenerationGroup::G10Plus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GenerationGroup::G0 => "g0",
            GenerationGroup::G1To9 => "g1-9",
            GenerationGroup::G10Plus => "g10+",
        }
    }
}

/// Lines and characters of the statement body of `test`.
pub fn measure(subject: &SubjectClass, test: &TestCase) -> (usize, usize) {
    let text = render_test(subject, test, &[], None);
    let body: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && *l != "test {" && *l != "}")
        .collect();
    (body.len(), body.iter().map(|l| l.chars().count()).sum())
}

/// Runs the plain search once per seed and records every archived
/// target. `base` supplies everything but the seed.
pub fn collect_records(
    subject: &SubjectClass,
    targets: &TargetSet,
    base: &SearchConfig,
    seeds: &[u64],
) -> Vec<TargetLengthRecord> {
    let per_seed: Vec<Vec<TargetLengthRecord>> = seeds
        .par_iter()
        .map(|&seed| {
            let config = SearchConfig { seed, ..base.clone() };
            let outcome = run_search(subject, targets, &config);
            outcome
                .archive
                .iter()
                .filter_map(|(id, entry)| {
                    let target = targets.get(id);
                    let m = minimize_for_target(subject, &entry.test, target, config.step_budget).ok()?;
                    let (lines, chars) = measure(subject, &m.test);
                    Some(TargetLengthRecord {
                        seed,
                        target: id.0,
                        label: target.label.clone(),
                        covered_at: entry.covered_at,
                        lines,
                        chars,
                    })
                })
                .collect()
        })
        .collect();
    per_seed.into_iter().flatten().collect()
}

/// Splits records by coverage generation, in [`GenerationGroup::ALL`]
/// order.
pub fn group(records: &[TargetLengthRecord]) -> [Vec<&TargetLengthRecord>; 3] {
    let mut out: [Vec<&TargetLengthRecord>; 3] = Default::default();
    for r in records {
        let i = GenerationGroup::ALL
            .iter()
            .position(|g| *g == GenerationGroup::of(r.covered_at))
            .expect("every generation has a group");
        out[i].push(r);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: GenerationGroup,
    pub count: usize,
    pub mean_lines: f64,
    pub min_lines: usize,
    pub mean_chars: f64,
    pub min_chars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureComparison {
    pub rank_sum: RankSumResult,
    /// Effect of g0 against the later groups; negative when g0 tests are
    /// shorter.
    pub cliffs: CliffsDelta,
}

impl MeasureComparison {
    pub fn significant(&self) -> bool {
        self.rank_sum.p_value < ALPHA
    }

    /// Later tests are longer and the difference is significant.
    pub fn later_longer(&self) -> bool {
        self.significant() && self.cliffs.delta < 0.0
    }
}

/// g0 against g1-9 and g10+ joined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub lines: MeasureComparison,
    pub chars: MeasureComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Report {
    pub subject: String,
    pub seeds: usize,
    pub records: usize,
    /// Only non-empty groups.
    pub groups: Vec<GroupSummary>,
    /// Absent when either side of the comparison is empty.
    pub comparison: Option<GroupComparison>,
}

fn summarize(group: GenerationGroup, rs: &[&TargetLengthRecord]) -> GroupSummary {
    let n = rs.len() as f64;
    GroupSummary {
        group,
        count: rs.len(),
        mean_lines: rs.iter().map(|r| r.lines as f64).sum::<f64>() / n,
        min_lines: rs.iter().map(|r| r.lines).min().unwrap_or(0),
        mean_chars: rs.iter().map(|r| r.chars as f64).sum::<f64>() / n,
        min_chars: rs.iter().map(|r| r.chars).min().unwrap_or(0),
    }
}

fn compare(early: &[&TargetLengthRecord], late: &[&TargetLengthRecord], f: impl Fn(&TargetLengthRecord) -> usize) -> MeasureComparison {
    let xs: Vec<f64> = early.iter().map(|r| f(r) as f64).collect();
    let ys: Vec<f64> = late.iter().map(|r| f(r) as f64).collect();
    MeasureComparison {
        rank_sum: rank_sum_test(&xs, &ys),
        cliffs: cliffs_delta(&xs, &ys),
    }
}

pub fn experiment1_report(subject: &str, seeds: usize, records: &[TargetLengthRecord]) -> Exp1Report {
    let groups = group(records);
    let summaries = summaries(&groups);
    let early = &groups[0];
    let late: Vec<&TargetLengthRecord> = groups[1].iter().chain(&groups[2]).copied().collect();
    let comparison = (!early.is_empty() && !late.is_empty()).then(|| GroupComparison {
        lines: compare(early, &late, |r| r.lines),
        chars: compare(early, &late, |r| r.chars),
    });
    Exp1Report {
        subject: subject.to_string(),
        seeds,
        records: records.len(),
        groups: summaries,
        comparison,
    }
}

fn summaries(groups: &[Vec<&TargetLengthRecord>; 3]) -> Vec<GroupSummary> {
    GenerationGroup::ALL
        .iter()
        .zip(groups)
        .filter(|(_, rs)| !rs.is_empty())
        .map(|(g, rs)| summarize(*g, rs))
        .collect()
}

impl Exp1Report {
    pub fn group(&self, g: GenerationGroup) -> Option<&GroupSummary> {
        self.groups.iter().find(|s| s.group == g)
    }

    /// The aligned text table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "Minimized test length by coverage generation: {} ({} runs, {} records)",
            self.subject, self.seeds, self.records
        )
        .unwrap();
        writeln!(
            out,
            "{:<8} {:>7} {:>11} {:>10} {:>11} {:>10}",
            "group", "targets", "mean lines", "min lines", "mean chars", "min chars"
        )
        .unwrap();
        for s in &self.groups {
            writeln!(
                out,
                "{:<8} {:>7} {:>11.2} {:>10} {:>11.2} {:>10}",
                s.group.label(),
                s.count,
                s.mean_lines,
                s.min_lines,
                s.mean_chars,
                s.min_chars
            )
            .unwrap();
        }
        match &self.comparison {
            None => writeln!(out, "g0 vs g1+: not applicable (a group is empty)").unwrap(),
            Some(c) => {
                for (name, m) in [("lines", &c.lines), ("chars", &c.chars)] {
                    let verdict = if m.significant() {
                        format!("significant at alpha={ALPHA}")
                    } else {
                        format!("not significant at alpha={ALPHA}")
                    };
                    writeln!(
                        out,
                        "g0 vs g1+ {name:<5}: p={:.3e} ({:?}), Cliff's delta={:+.3} ({}), {verdict}",
                        m.rank_sum.p_value,
                        m.rank_sum.method,
                        m.cliffs.delta,
                        m.cliffs.magnitude.as_str()
                    )
                    .unwrap();
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subject::{extract_targets, ARRAY_INT_LIST};
    use crate::test_model::parse_test;

    fn rec(covered_at: u32, lines: usize, chars: usize) -> TargetLengthRecord {
        TargetLengthRecord {
            seed: 0,
            target: 0,
            label: "L1".into(),
            covered_at,
            lines,
            chars,
        }
    }

    #[test]
    fn groups_partition_by_generation() {
        let rs = vec![rec(0, 1, 10), rec(7, 2, 20), rec(42, 3, 30), rec(9, 2, 20), rec(10, 4, 40)];
        let g = group(&rs);
        assert_eq!((g[0].len(), g[1].len(), g[2].len()), (1, 2, 2));
        assert_eq!(GenerationGroup::of(0), GenerationGroup::G0);
        assert_eq!(GenerationGroup::of(7), GenerationGroup::G1To9);
        assert_eq!(GenerationGroup::of(42), GenerationGroup::G10Plus);
    }

    #[test]
    fn hand_computed_table() {
        let rs = vec![rec(0, 1, 12), rec(0, 3, 30), rec(3, 2, 20), rec(15, 4, 41), rec(20, 6, 60)];
        let r = experiment1_report("X", 1, &rs);
        let g0 = r.group(GenerationGroup::G0).unwrap();
        assert_eq!((g0.mean_lines, g0.min_lines, g0.mean_chars, g0.min_chars), (2.0, 1, 21.0, 12));
        let late = r.group(GenerationGroup::G10Plus).unwrap();
        assert_eq!((late.mean_lines, late.min_lines, late.mean_chars, late.min_chars), (5.0, 4, 50.5, 41));
        let c = r.comparison.as_ref().unwrap();
        // g0 {1,3} vs later {2,4,6}: pairs give (1 - 5) / 6.
        assert!((c.lines.cliffs.delta - (-4.0 / 6.0)).abs() < 1e-12);
        let text = r.render();
        assert!(text.contains("g10+"));
        assert!(text.contains("not significant"));
    }

    #[test]
    fn single_group_has_no_comparison() {
        let rs = vec![rec(0, 1, 10), rec(0, 2, 15)];
        let r = experiment1_report("X", 1, &rs);
        assert_eq!(r.groups.len(), 1);
        assert!(r.comparison.is_none());
        assert!(r.render().contains("not applicable"));
    }

    #[test]
    fn measure_skips_wrapper_and_indentation() {
        let s = SubjectClass::parse(ARRAY_INT_LIST).unwrap();
        let t = parse_test(&s, "test {\n    ArrayIntList v0 = new ArrayIntList();\n    v0.clear();\n}\n").unwrap().test;
        let (lines, chars) = measure(&s, &t);
        assert_eq!(lines, 2);
        assert_eq!(chars, "ArrayIntList v0 = new ArrayIntList();".len() + "v0.clear();".len());
    }

    #[test]
    fn records_come_from_archive() {
        let s = SubjectClass::parse(ARRAY_INT_LIST).unwrap();
        let t = extract_targets(&s);
        let base = SearchConfig {
            max_generations: 15,
            ..SearchConfig::default()
        };
        let rs = collect_records(&s, &t, &base, &[1, 2]);
        assert!(!rs.is_empty());
        assert!(rs.iter().all(|r| r.lines >= 1 && r.chars >= r.lines && r.covered_at <= 15));
        assert!(rs.iter().any(|r| r.seed == 2));
        assert!(rs.iter().any(|r| r.covered_at == 0));
    }
}
