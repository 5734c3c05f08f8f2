//! Interactive readability assessment on top of the search.
//!
//! At scheduled moments the search pauses, picks recently covered
//! targets, minimizes candidate tests for each, asks a [`Scorer`] for
//! readability scores and keeps the best-scored test per target in the
//! preference archive. Those tests then seed breeding and take priority
//! when the final suite is assembled.
//!
//! [`Scorer`]: crate::scoring::Scorer

mod engine;
mod suite;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::PreferenceView;
use crate::minimization::{generate_assertions, minimize_for_target, DEFAULT_MAX_ASSERTIONS};
use crate::scoring::{CandidateStats, CandidateView, ReferenceView, ResponseError, ScoreRequest, ScoreResponse, TargetView};
use crate::search::{CoverageArchive, Individual};
use crate::subject::{render_target_description, MethodRef, SubjectClass, TargetId, TargetSet};
use crate::test_model::{MinimizedTest, ReadabilityScore, TestCase};

pub use engine::{run_interactive, FirstInteraction, RunError, RunOptions, RunResult};
pub use suite::{assemble_final_suite, SuiteSource, SuiteTest, TestSuite};

/// Interaction parameters. Serialized names follow the parameter names
/// testers know from the tool's documentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionConfig {
    /// Generations between interaction moments; `None` means a fifth of
    /// the search budget.
    #[serde(rename = "Revise_frequency", skip_serializing_if = "Option::is_none")]
    pub revise_frequency: Option<u32>,
    /// Maximum number of single interactions in a run.
    #[serde(rename = "Max_times")]
    pub max_times: u32,
    /// Coverage fraction required before the first moment.
    #[serde(rename = "Revise_after_percentage_coverage")]
    pub revise_after_percentage_coverage: f64,
    #[serde(rename = "Max_targets_interaction_moment")]
    pub max_targets_interaction_moment: u32,
    /// Fraction of the population shown per interaction.
    #[serde(rename = "Percentage_to_revise")]
    pub percentage_to_revise: f64,
    #[serde(rename = "Max_readability_score")]
    pub max_readability_score: u32,
    /// Scores below this never enter the preference archive.
    #[serde(rename = "Readability_threshold")]
    pub readability_threshold: u32,
    /// Chance that an archive-sourced parent comes from the preference
    /// archive.
    #[serde(rename = "P_preference_selection")]
    pub p_preference_selection: f64,
    /// No moment opens before this generation.
    #[serde(rename = "Min_generation_for_interaction")]
    pub min_generation_for_interaction: u32,
    /// Ask again about minimizations that were already scored.
    #[serde(rename = "revisit_candidates")]
    pub revisit_candidates: bool,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        InteractionConfig {
            revise_frequency: None,
            max_times: 10,
            revise_after_percentage_coverage: 0.5,
            max_targets_interaction_moment: 3,
            percentage_to_revise: 0.08,
            max_readability_score: 10,
            readability_threshold: 3,
            p_preference_selection: 0.2,
            min_generation_for_interaction: 10,
            revisit_candidates: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid interaction configuration: {0}")]
pub struct InteractionConfigError(pub String);

impl InteractionConfig {
    /// Moment spacing for a search budget of `max_generations`.
    pub fn revise_frequency_for(&self, max_generations: u32) -> u32 {
        self.revise_frequency.unwrap_or(max_generations / 5).max(1)
    }

    pub fn validate(&self) -> Result<(), InteractionConfigError> {
        let err = |m: &str| Err(InteractionConfigError(m.to_string()));
        let unit = 0.0..=1.0;
        if self.revise_frequency == Some(0) {
            return err("Revise_frequency must be positive");
        }
        if !unit.contains(&self.revise_after_percentage_coverage) {
            return err("Revise_after_percentage_coverage must be in [0, 1]");
        }
        if self.max_targets_interaction_moment == 0 {
            return err("Max_targets_interaction_moment must be positive");
        }
        if !unit.contains(&self.percentage_to_revise) {
            return err("Percentage_to_revise must be in [0, 1]");
        }
        if self.max_readability_score == 0 {
            return err("Max_readability_score must be positive");
        }
        if self.readability_threshold > self.max_readability_score {
            return err("Readability_threshold must not exceed Max_readability_score");
        }
        if !unit.contains(&self.p_preference_selection) {
            return err("P_preference_selection must be in [0, 1]");
        }
        Ok(())
    }
}

/// Best-scored minimization for a target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceEntry {
    pub test: MinimizedTest,
    pub score: ReadabilityScore,
    pub interaction: u32,
    pub generation: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceArchive {
    entries: BTreeMap<TargetId, PreferenceEntry>,
}

impl PreferenceArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, target: TargetId) -> Option<&PreferenceEntry> {
        self.entries.get(&target)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TargetId, &PreferenceEntry)> {
        self.entries.iter().map(|(t, e)| (*t, e))
    }

    /// Statement lists of every entry, the breeding source.
    pub fn tests(&self) -> Vec<TestCase> {
        self.entries.values().map(|e| e.test.test.clone()).collect()
    }

    pub fn views(&self, targets: &TargetSet) -> Vec<PreferenceView> {
        self.iter().map(|(t, e)| preference_view(targets, t, e)).collect()
    }

    fn put(&mut self, target: TargetId, entry: PreferenceEntry) {
        self.entries.insert(target, entry);
    }
}

pub fn preference_view(targets: &TargetSet, target: TargetId, e: &PreferenceEntry) -> PreferenceView {
    PreferenceView {
        target: target.0,
        label: targets.get(target).label.clone(),
        canonical_key: e.test.canonical_key.clone(),
        rendered: e.test.rendered.clone(),
        score: e.score.value(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadabilityRecord {
    pub score: ReadabilityScore,
    /// Interaction in which the minimization was first scored.
    pub first_interaction: u32,
    pub rendered: String,
}

/// Every minimization scored so far, by canonical key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadabilityArchive {
    entries: BTreeMap<String, ReadabilityRecord>,
}

impl ReadabilityArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&ReadabilityRecord> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ReadabilityRecord)> {
        self.entries.iter().map(|(k, r)| (k.as_str(), r))
    }

    /// Records a score. An existing key keeps its first score unless
    /// `overwrite` is set.
    pub fn record(&mut self, m: &MinimizedTest, score: ReadabilityScore, interaction: u32, overwrite: bool) {
        match self.entries.get_mut(&m.canonical_key) {
            Some(r) if overwrite => r.score = score,
            Some(_) => {}
            None => {
                self.entries.insert(
                    m.canonical_key.clone(),
                    ReadabilityRecord {
                        score,
                        first_interaction: interaction,
                        rendered: m.rendered.clone(),
                    },
                );
            }
        }
    }
}

/// What the engine needs to know about the class under test.
#[derive(Clone, Copy)]
pub struct Context<'a> {
    pub subject: &'a SubjectClass,
    pub targets: &'a TargetSet,
    pub step_budget: u64,
}

/// Whether a moment opens after `generation`.
pub fn should_open_moment(
    config: &InteractionConfig,
    max_generations: u32,
    generation: u32,
    coverage: f64,
    interactions_done: u32,
) -> bool {
    generation % config.revise_frequency_for(max_generations) == 0
        && generation >= config.min_generation_for_interaction
        && coverage >= config.revise_after_percentage_coverage
        && interactions_done < config.max_times
}

/// Number of candidates shown per interaction: the population share,
/// rounded down, but never fewer than two.
pub fn candidate_budget(population_size: usize, percentage_to_revise: f64) -> usize {
    // The epsilon keeps products like 100 x 0.29 from flooring one short.
    let share = (population_size as f64 * percentage_to_revise + 1e-9).floor() as usize;
    share.max(2)
}

/// Archived targets, most recently covered first.
pub fn recency_order(archive: &CoverageArchive) -> Vec<TargetId> {
    let mut v: Vec<(u32, u64, TargetId)> = archive.iter().map(|(t, e)| (e.covered_at, e.seq, t)).collect();
    v.sort_by(|a, b| b.cmp(a));
    v.into_iter().map(|(_, _, t)| t).collect()
}

/// First target in `recency` not yet attempted this moment whose method
/// was not already addressed this moment.
pub fn select_target(
    recency: &[TargetId],
    targets: &TargetSet,
    used_methods: &BTreeSet<MethodRef>,
    attempted: &BTreeSet<TargetId>,
) -> Option<TargetId> {
    recency
        .iter()
        .copied()
        .find(|t| !attempted.contains(t) && !used_methods.contains(&targets.get(*t).method))
}

/// The archived test for `target` plus up to `nt - 1` distinct
/// population members covering it, drawn at random.
pub fn select_candidates<R: Rng + ?Sized>(
    target: TargetId,
    population: &[Individual],
    archive: &CoverageArchive,
    nt: usize,
    rng: &mut R,
) -> Vec<TestCase> {
    let mut out = Vec::with_capacity(nt);
    if let Some(e) = archive.get(target) {
        out.push(e.test.clone());
    }
    let coverers: Vec<&Individual> = population.iter().filter(|i| i.covers(target)).collect();
    let room = nt.saturating_sub(out.len());
    out.extend(coverers.choose_multiple(rng, room).map(|i| i.test.clone()));
    out
}

/// Preparation figures recorded for every attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrepStats {
    pub candidates_selected: usize,
    pub distinct: usize,
    pub dedup_count: usize,
    pub archive_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub id: String,
    pub test: MinimizedTest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredTest {
    pub test: MinimizedTest,
    pub score: ReadabilityScore,
}

/// An interaction ready to be shown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingInteraction {
    pub id: u32,
    pub generation: u32,
    pub target: TargetId,
    pub description: String,
    pub unseen: Vec<Candidate>,
    pub references: Vec<ScoredTest>,
    pub incumbent: Option<PreferenceEntry>,
    pub stats: PrepStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Fewer than two distinct minimizations and nothing to compare
    /// against.
    TooFewCandidates,
    /// Every minimization was already scored.
    AllScored,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::TooFewCandidates => "too few distinct candidates",
            SkipReason::AllScored => "all candidates already scored",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Skipped {
    pub reason: SkipReason,
    pub stats: PrepStats,
}

/// Minimizes and deduplicates the candidates, splits them into unseen
/// and already-scored, and decides whether the interaction is worth
/// showing. Assertions are only added when it is.
pub fn prepare_interaction(
    ctx: Context<'_>,
    target: TargetId,
    candidates: &[TestCase],
    readability: &ReadabilityArchive,
    preference: &PreferenceArchive,
    config: &InteractionConfig,
    id: u32,
    generation: u32,
) -> Result<PendingInteraction, Skipped> {
    let t = ctx.targets.get(target);
    let mut distinct: Vec<MinimizedTest> = Vec::new();
    for c in candidates {
        let Ok(m) = minimize_for_target(ctx.subject, c, t, ctx.step_budget) else {
            continue;
        };
        if !distinct.iter().any(|d| d.canonical_key == m.canonical_key) {
            distinct.push(m);
        }
    }
    let incumbent = preference.get(target).cloned();
    let mut stats = PrepStats {
        candidates_selected: candidates.len(),
        distinct: distinct.len(),
        dedup_count: candidates.len() - distinct.len(),
        archive_hits: 0,
    };
    let mut unseen = Vec::new();
    let mut references = Vec::new();
    for m in distinct {
        match readability.get(&m.canonical_key) {
            Some(r) if !config.revisit_candidates => references.push((m, r.score)),
            _ => unseen.push(m),
        }
    }
    stats.archive_hits = references.len();
    if stats.distinct < 2 && incumbent.is_none() {
        return Err(Skipped {
            reason: SkipReason::TooFewCandidates,
            stats,
        });
    }
    if unseen.is_empty() {
        return Err(Skipped {
            reason: SkipReason::AllScored,
            stats,
        });
    }
    let assert = |m: MinimizedTest| generate_assertions(ctx.subject, m, DEFAULT_MAX_ASSERTIONS, ctx.step_budget);
    Ok(PendingInteraction {
        id,
        generation,
        target,
        description: render_target_description(t, ctx.subject),
        unseen: unseen
            .into_iter()
            .enumerate()
            .map(|(i, m)| Candidate {
                id: format!("c{}", i + 1),
                test: assert(m),
            })
            .collect(),
        references: references
            .into_iter()
            .map(|(m, score)| ScoredTest { test: assert(m), score })
            .collect(),
        incumbent,
        stats,
    })
}

impl PendingInteraction {
    pub fn request(&self, targets: &TargetSet, max_score: u32) -> ScoreRequest {
        let t = targets.get(self.target);
        ScoreRequest {
            interaction_id: self.id,
            generation: self.generation,
            target: TargetView {
                id: self.target.0,
                label: t.label.clone(),
                description: self.description.clone(),
            },
            unseen: self
                .unseen
                .iter()
                .map(|c| CandidateView {
                    id: c.id.clone(),
                    canonical_key: c.test.canonical_key.clone(),
                    rendered: c.test.rendered.clone(),
                    stats: CandidateStats::of(&c.test.test),
                })
                .collect(),
            references: self
                .references
                .iter()
                .map(|r| ReferenceView {
                    canonical_key: r.test.canonical_key.clone(),
                    rendered: r.test.rendered.clone(),
                    score: r.score.value(),
                })
                .collect(),
            incumbent: self.incumbent.as_ref().map(|e| ReferenceView {
                canonical_key: e.test.canonical_key.clone(),
                rendered: e.test.rendered.clone(),
                score: e.score.value(),
            }),
            min_score: 0,
            max_score,
        }
    }
}

/// Result of folding one interaction's scores into the archives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplyOutcome {
    /// Scores of the unseen candidates, in presentation order.
    pub scores: Vec<(MinimizedTest, ReadabilityScore)>,
    /// Best candidate, when it reached the threshold.
    pub winner: Option<ScoredTest>,
    /// New preference entry, when the archive changed.
    pub updated: Option<PreferenceEntry>,
    pub previous_score: Option<ReadabilityScore>,
}

/// Records the scores and updates the preference archive.
///
/// The best-scored candidate (unseen or reference; ties drawn at random)
/// enters the archive when it reaches the threshold and beats the
/// incumbent: a higher score wins, an equal score needs a strictly
/// shorter test.
pub fn apply_scores<R: Rng + ?Sized>(
    pending: &PendingInteraction,
    response: &ScoreResponse,
    preference: &mut PreferenceArchive,
    readability: &mut ReadabilityArchive,
    config: &InteractionConfig,
    targets: &TargetSet,
    rng: &mut R,
) -> Result<ApplyOutcome, ResponseError> {
    pending.request(targets, config.max_readability_score).validate(response)?;
    let max = config.max_readability_score;
    let scores: Vec<(MinimizedTest, ReadabilityScore)> = pending
        .unseen
        .iter()
        .map(|c| {
            let s = ReadabilityScore::new(response.scores[&c.id], max).expect("validated");
            (c.test.clone(), s)
        })
        .collect();
    for (m, s) in &scores {
        readability.record(m, *s, pending.id, config.revisit_candidates);
    }

    let pool: Vec<ScoredTest> = scores
        .iter()
        .map(|(test, score)| ScoredTest {
            test: test.clone(),
            score: *score,
        })
        .chain(pending.references.iter().cloned())
        .collect();
    let best = pool.iter().map(|c| c.score).max().expect("at least one unseen candidate");
    let tied: Vec<&ScoredTest> = pool.iter().filter(|c| c.score == best).collect();
    let pick = if tied.len() > 1 {
        tied[rng.random_range(0..tied.len())]
    } else {
        tied[0]
    };

    let mut outcome = ApplyOutcome {
        scores,
        winner: None,
        updated: None,
        previous_score: pending.incumbent.as_ref().map(|e| e.score),
    };
    if best.value() < config.readability_threshold {
        return Ok(outcome);
    }
    outcome.winner = Some(pick.clone());
    let current = preference.get(pending.target);
    let replaces = match current {
        None => true,
        Some(inc) => pick.score > inc.score || (pick.score == inc.score && pick.test.len() < inc.test.len()),
    };
    if replaces {
        let entry = PreferenceEntry {
            test: pick.test.clone(),
            score: pick.score,
            interaction: pending.id,
            generation: pending.generation,
        };
        preference.put(pending.target, entry.clone());
        outcome.updated = Some(entry);
    }
    Ok(outcome)
}
