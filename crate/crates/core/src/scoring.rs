//! Scorers: whoever (or whatever) answers a pending interaction with
//! readability scores.
//!
//! The engine only sees the [`Scorer`] trait, so the same run can be
//! driven by a person at a console, a web client behind the session
//! server, a deterministic heuristic, a script, or a recorded session.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::LogRecord;
use crate::test_model::{Arg, Literal, Statement, TestCase, VarId};

/// Per-candidate statistics the heuristic scorer reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CandidateStats {
    pub statements: usize,
    /// Literals whose magnitude exceeds 100.
    pub large_literals: usize,
    /// Statements identical to an earlier one, ignoring the name of the
    /// variable they define.
    pub repeated_statements: usize,
}

impl CandidateStats {
    pub fn of(test: &TestCase) -> Self {
        let large = |v: i64| usize::from(v.unsigned_abs() > 100);
        let lit = |l: &Literal| match l {
            Literal::Int(v) => large(*v),
            Literal::Bool(_) => 0,
            Literal::IntArray(vs) => vs.iter().map(|v| large(*v)).sum(),
        };
        let args = |a: &[Arg]| -> usize {
            a.iter()
                .map(|a| match a {
                    Arg::Lit(l) => lit(l),
                    Arg::Var(_) => 0,
                })
                .sum()
        };
        let mut large_literals = 0;
        let mut seen: Vec<Statement> = Vec::new();
        let mut repeated_statements = 0;
        for s in &test.statements {
            large_literals += match s {
                Statement::Primitive { value, .. } => lit(value),
                Statement::Array { values, .. } => values.iter().map(|v| large(*v)).sum(),
                Statement::Construct { args: a, .. } | Statement::Call { args: a, .. } => args(a),
            };
            let anon = anonymous(s);
            if seen.contains(&anon) {
                repeated_statements += 1;
            } else {
                seen.push(anon);
            }
        }
        CandidateStats {
            statements: test.len(),
            large_literals,
            repeated_statements,
        }
    }
}

/// `s` with the variable it defines blanked out.
fn anonymous(s: &Statement) -> Statement {
    let blank = VarId(u32::MAX);
    let mut s = s.clone();
    match &mut s {
        Statement::Primitive { var, .. } | Statement::Array { var, .. } | Statement::Construct { var, .. } => *var = blank,
        Statement::Call { result, .. } => {
            if result.is_some() {
                *result = Some(blank);
            }
        }
    }
    s
}

/// A minimization awaiting a score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateView {
    pub id: String,
    pub canonical_key: String,
    pub rendered: String,
    pub stats: CandidateStats,
}

/// An already-scored minimization shown for comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceView {
    pub canonical_key: String,
    pub rendered: String,
    pub score: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetView {
    pub id: u32,
    pub label: String,
    pub description: String,
}

/// Everything a tester needs to score one interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub interaction_id: u32,
    pub generation: u32,
    pub target: TargetView,
    pub unseen: Vec<CandidateView>,
    pub references: Vec<ReferenceView>,
    /// The target's current preference-archive entry.
    pub incumbent: Option<ReferenceView>,
    pub min_score: u32,
    pub max_score: u32,
}

/// Candidate id to integer score.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: BTreeMap<String, i64>,
}

impl ScoreResponse {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, i64)>,
        S: Into<String>,
    {
        ScoreResponse {
            scores: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

/// Why a response does not fit its request.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ResponseError {
    #[error("no score for candidate {0}")]
    Missing(String),
    #[error("unknown candidate {0}")]
    Unknown(String),
    #[error("score {score} for candidate {id} outside [{min}, {max}]")]
    OutOfRange { id: String, score: i64, min: u32, max: u32 },
}

impl ScoreRequest {
    /// Checks that `response` scores exactly the unseen candidates, each
    /// within bounds.
    pub fn validate(&self, response: &ScoreResponse) -> Result<(), ResponseError> {
        for c in &self.unseen {
            let Some(&score) = response.scores.get(&c.id) else {
                return Err(ResponseError::Missing(c.id.clone()));
            };
            if score < self.min_score as i64 || score > self.max_score as i64 {
                return Err(ResponseError::OutOfRange {
                    id: c.id.clone(),
                    score,
                    min: self.min_score,
                    max: self.max_score,
                });
            }
        }
        if let Some(extra) = response.scores.keys().find(|k| !self.unseen.iter().any(|c| &c.id == *k)) {
            return Err(ResponseError::Unknown(extra.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScorerError {
    /// The other side went away; the run cannot continue.
    #[error("scorer channel closed")]
    Closed,
    #[error("scorer timed out")]
    Timeout,
    #[error("invalid response: {0}")]
    Invalid(#[from] ResponseError),
    /// A recorded session does not match the run replaying it.
    #[error("replay mismatch: {0}")]
    Replay(String),
    #[error("scorer failed: {0}")]
    Failed(String),
}

impl ScorerError {
    /// Fatal errors end the run; the others only end the current
    /// interaction moment.
    pub fn is_fatal(&self) -> bool {
        matches!(self, ScorerError::Closed | ScorerError::Replay(_))
    }
}

pub trait Scorer {
    /// Returns one score per unseen candidate. May block.
    fn score(&mut self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError>;
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score(&mut self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        (**self).score(request)
    }
}

/// Deterministic stand-in for a tester. It penalizes length, large
/// literals and repetition; it is not a model of readability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeuristicScorer {
    /// Statements allowed before length costs anything.
    pub free_length: usize,
    /// Extra statements per point lost.
    pub length_step: usize,
    pub literal_penalty: u32,
    pub repeat_penalty: u32,
}

impl Default for HeuristicScorer {
    fn default() -> Self {
        HeuristicScorer {
            free_length: 4,
            length_step: 2,
            literal_penalty: 1,
            repeat_penalty: 1,
        }
    }
}

impl HeuristicScorer {
    pub fn score_one(&self, stats: &CandidateStats, max: u32) -> u32 {
        let step = self.length_step.max(1);
        let length = (stats.statements.saturating_sub(self.free_length) / step) as i64;
        let s = max as i64
            - length
            - (stats.large_literals as i64 * self.literal_penalty as i64)
            - (stats.repeated_statements as i64 * self.repeat_penalty as i64);
        s.clamp(0, max as i64) as u32
    }
}

impl Scorer for HeuristicScorer {
    fn score(&mut self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        Ok(ScoreResponse::from_pairs(
            request
                .unseen
                .iter()
                .map(|c| (c.id.clone(), self.score_one(&c.stats, request.max_score) as i64)),
        ))
    }
}

/// Scores from a closure, for directed scenarios.
pub struct ScriptedScorer<F> {
    script: F,
}

impl<F> ScriptedScorer<F>
where
    F: FnMut(&ScoreRequest) -> Result<ScoreResponse, ScorerError>,
{
    pub fn new(script: F) -> Self {
        ScriptedScorer { script }
    }
}

impl<F> Scorer for ScriptedScorer<F>
where
    F: FnMut(&ScoreRequest) -> Result<ScoreResponse, ScorerError>,
{
    fn score(&mut self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        (self.script)(request)
    }
}

/// Answers each request with the next list of scores, applied to the
/// unseen candidates in presentation order. Closed once exhausted.
#[derive(Debug, Clone, Default)]
pub struct QueueScorer {
    queue: VecDeque<Vec<i64>>,
}

impl QueueScorer {
    pub fn new(rounds: impl IntoIterator<Item = Vec<i64>>) -> Self {
        QueueScorer {
            queue: rounds.into_iter().collect(),
        }
    }
}

impl Scorer for QueueScorer {
    fn score(&mut self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let round = self.queue.pop_front().ok_or(ScorerError::Closed)?;
        Ok(ScoreResponse::from_pairs(
            request.unseen.iter().zip(round).map(|(c, s)| (c.id.clone(), s)),
        ))
    }
}

/// Replays the scores of a recorded session, matched by canonical key.
#[derive(Debug, Clone)]
pub struct ReplayScorer {
    rounds: VecDeque<(u32, Vec<(String, i64)>)>,
}

impl ReplayScorer {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a LogRecord>) -> Self {
        let rounds = records
            .into_iter()
            .filter_map(|r| match r {
                LogRecord::Interaction(i) => Some((i.interaction_id, i.scores.iter().map(|s| (s.canonical_key.clone(), s.score as i64)).collect())),
                _ => None,
            })
            .collect();
        ReplayScorer { rounds }
    }

    pub fn remaining(&self) -> usize {
        self.rounds.len()
    }
}

impl Scorer for ReplayScorer {
    fn score(&mut self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let Some((id, recorded)) = self.rounds.pop_front() else {
            return Err(ScorerError::Replay(format!(
                "log exhausted before interaction {}",
                request.interaction_id
            )));
        };
        let presented: Vec<&str> = request.unseen.iter().map(|c| c.canonical_key.as_str()).collect();
        let expected: Vec<&str> = recorded.iter().map(|(k, _)| k.as_str()).collect();
        if id != request.interaction_id || presented != expected {
            return Err(ScorerError::Replay(format!(
                "interaction {} presents different candidates than recorded interaction {id}",
                request.interaction_id
            )));
        }
        Ok(ScoreResponse::from_pairs(
            request.unseen.iter().zip(recorded).map(|(c, (_, s))| (c.id.clone(), s)),
        ))
    }
}

/// Line-oriented prompts; re-asks on anything that is not an in-range
/// integer.
pub struct ConsoleScorer<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> ConsoleScorer<R, W> {
    pub fn new(input: R, output: W) -> Self {
        ConsoleScorer { input, output }
    }

    fn show(&mut self, request: &ScoreRequest) -> std::io::Result<()> {
        let out = &mut self.output;
        writeln!(out, "== Interaction {} (generation {}) ==", request.interaction_id, request.generation)?;
        write!(out, "{}", request.target.description)?;
        if let Some(inc) = &request.incumbent {
            writeln!(out, "-- current preferred test (score {}) --\n{}", inc.score, inc.rendered)?;
        }
        for r in &request.references {
            writeln!(out, "-- already scored {} --\n{}", r.score, r.rendered)?;
        }
        for c in &request.unseen {
            writeln!(out, "-- candidate {} --\n{}", c.id, c.rendered)?;
        }
        Ok(())
    }
}

impl<R: BufRead, W: Write> Scorer for ConsoleScorer<R, W> {
    fn score(&mut self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let io = |e: std::io::Error| ScorerError::Failed(e.to_string());
        self.show(request).map_err(io)?;
        let mut scores = BTreeMap::new();
        for c in &request.unseen {
            loop {
                write!(self.output, "score for {} [{}-{}]: ", c.id, request.min_score, request.max_score).map_err(io)?;
                self.output.flush().map_err(io)?;
                let mut line = String::new();
                if self.input.read_line(&mut line).map_err(io)? == 0 {
                    return Err(ScorerError::Closed);
                }
                match line.trim().parse::<i64>() {
                    Ok(v) if (request.min_score as i64..=request.max_score as i64).contains(&v) => {
                        scores.insert(c.id.clone(), v);
                        break;
                    }
                    _ => writeln!(
                        self.output,
                        "please enter a whole number from {} to {}",
                        request.min_score, request.max_score
                    )
                    .map_err(io)?,
                }
            }
        }
        Ok(ScoreResponse { scores })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn request(n: usize) -> ScoreRequest {
        ScoreRequest {
            interaction_id: 1,
            generation: 200,
            target: TargetView {
                id: 0,
                label: "L12".into(),
                description: "Target L12\n".into(),
            },
            unseen: (0..n)
                .map(|i| CandidateView {
                    id: format!("c{}", i + 1),
                    canonical_key: format!("k{i}"),
                    rendered: "test {\n}\n".into(),
                    stats: CandidateStats {
                        statements: 3 + i,
                        ..Default::default()
                    },
                })
                .collect(),
            references: vec![],
            incumbent: None,
            min_score: 0,
            max_score: 10,
        }
    }

    #[test]
    fn heuristic_examples() {
        let h = HeuristicScorer::default();
        let s = |statements, large_literals, repeated_statements| CandidateStats {
            statements,
            large_literals,
            repeated_statements,
        };
        assert_eq!(h.score_one(&s(3, 0, 0), 10), 10);
        assert_eq!(h.score_one(&s(8, 1, 0), 10), 7);
        assert_eq!(h.score_one(&s(40, 3, 5), 10), 0);
        assert_eq!(h.score_one(&s(5, 0, 0), 10), 10);
        assert_eq!(h.score_one(&s(6, 0, 1), 10), 8);
    }

    #[test]
    fn stats_count_literals_and_repeats() {
        let subject = crate::subject::SubjectClass::parse(crate::subject::ARRAY_INT_LIST).unwrap();
        let t = crate::test_model::parse_test(
            &subject,
            "test {\n    ArrayIntList v0 = new ArrayIntList();\n    int v1 = 2181;\n    bool v2 = v0.add(v1);\n    bool v3 = v0.add(v1);\n    bool v4 = v0.add(-300);\n}\n",
        )
        .unwrap()
        .test;
        let st = CandidateStats::of(&t);
        assert_eq!((st.statements, st.large_literals, st.repeated_statements), (5, 2, 1));
    }

    #[test]
    fn single_candidate_single_entry() {
        let r = request(1);
        let resp = HeuristicScorer::default().score(&r).unwrap();
        assert_eq!(resp.scores.len(), 1);
        assert!(r.validate(&resp).is_ok());
    }

    #[test]
    fn validation_rejects_missing_extra_and_range() {
        let r = request(2);
        assert_eq!(
            r.validate(&ScoreResponse::from_pairs([("c1", 3)])),
            Err(ResponseError::Missing("c2".into()))
        );
        assert!(matches!(
            r.validate(&ScoreResponse::from_pairs([("c1", 3), ("c2", 4), ("c9", 1)])),
            Err(ResponseError::Unknown(_))
        ));
        assert!(matches!(
            r.validate(&ScoreResponse::from_pairs([("c1", 11), ("c2", 4)])),
            Err(ResponseError::OutOfRange { .. })
        ));
    }

    #[test]
    fn scripted_is_repeatable() {
        let mut s = ScriptedScorer::new(|r: &ScoreRequest| {
            Ok(ScoreResponse::from_pairs(r.unseen.iter().map(|c| (c.id.clone(), c.stats.statements as i64))))
        });
        let r = request(3);
        assert_eq!(s.score(&r).unwrap(), s.score(&r).unwrap());
    }

    #[test]
    fn console_reprompts_on_bad_input() {
        let input = b"seven\n12\n7\n4\n" as &[u8];
        let mut out = Vec::new();
        let resp = ConsoleScorer::new(input, &mut out).score(&request(2)).unwrap();
        assert_eq!(resp, ScoreResponse::from_pairs([("c1", 7), ("c2", 4)]));
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.matches("please enter").count(), 2);
    }

    #[test]
    fn console_eof_is_closed() {
        let mut out = Vec::new();
        let err = ConsoleScorer::new(b"3\n" as &[u8], &mut out).score(&request(2)).unwrap_err();
        assert_eq!(err, ScorerError::Closed);
    }

    #[test]
    fn queue_scorer_closes_when_empty() {
        let mut q = QueueScorer::new([vec![5, 6]]);
        assert_eq!(q.score(&request(2)).unwrap(), ScoreResponse::from_pairs([("c1", 5), ("c2", 6)]));
        assert_eq!(q.score(&request(2)), Err(ScorerError::Closed));
    }

    proptest! {
        #[test]
        fn heuristic_stays_in_range(
            statements in 0usize..200,
            large in 0usize..50,
            repeated in 0usize..50,
            max in 1u32..20,
        ) {
            let h = HeuristicScorer::default();
            let s = h.score_one(&CandidateStats { statements, large_literals: large, repeated_statements: repeated }, max);
            prop_assert!(s <= max);
        }
    }
}
