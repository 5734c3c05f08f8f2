//! The interactive run: search generations interleaved with interaction
//! moments, then final suite assembly.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{
    apply_scores, assemble_final_suite, candidate_budget, preference_view, prepare_interaction, recency_order,
    select_candidates, select_target, should_open_moment, Context, InteractionConfig, PendingInteraction,
    PreferenceArchive, ReadabilityArchive, TestSuite,
};
use crate::events::{Emitter, EventKind, EventSink};
use crate::scoring::{ScoreRequest, Scorer, ScorerError};
use crate::search::{CoverageArchive, Search, SearchConfig};
use crate::session::{
    HeaderRecord, InteractionRecord, KeyScore, LogRecord, PreferenceEntryRecord, SessionLog, SCHEMA_VERSION,
};
use crate::subject::{SubjectClass, TargetSet};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where per-interaction files and preference snapshots go.
    pub artifact_dir: Option<PathBuf>,
}

/// When and at what coverage the first interaction was shown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstInteraction {
    pub generation: u32,
    pub coverage: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub suite: TestSuite,
    pub suite_text: String,
    pub coverage_archive: CoverageArchive,
    pub preference: PreferenceArchive,
    pub readability: ReadabilityArchive,
    pub log: SessionLog,
    pub generations: u32,
    pub moments: u32,
    pub interactions: u32,
    pub first_interaction: Option<FirstInteraction>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("run aborted at generation {generation}: {reason}")]
    Aborted {
        generation: u32,
        reason: String,
        /// Everything logged up to the abort.
        log: Box<SessionLog>,
    },
    #[error("cannot write artifacts: {0}")]
    Artifact(#[from] io::Error),
}

struct Engine<'a, 'e> {
    ctx: Context<'a>,
    config: InteractionConfig,
    search: Search<'a>,
    rng: ChaCha8Rng,
    preference: PreferenceArchive,
    readability: ReadabilityArchive,
    log: SessionLog,
    events: Emitter<'e>,
    artifacts: Option<PathBuf>,
    moments: u32,
    interactions: u32,
    next_interaction_id: u32,
    first_interaction: Option<FirstInteraction>,
}

/// Runs the search with interaction moments and assembles the suite.
///
/// With `Max_times = 0` no moment ever opens and the search draws
/// exactly the random numbers the plain search would.
pub fn run_interactive(
    subject: &SubjectClass,
    targets: &TargetSet,
    search_config: &SearchConfig,
    config: &InteractionConfig,
    scorer: &mut dyn Scorer,
    events: &mut dyn EventSink,
    options: &RunOptions,
) -> Result<RunResult, RunError> {
    let ctx = Context {
        subject,
        targets,
        step_budget: search_config.step_budget,
    };
    // Interaction draws come from their own stream so that they never
    // shift the search's random sequence.
    let mut rng = ChaCha8Rng::seed_from_u64(search_config.seed);
    rng.set_stream(1);
    let mut log = SessionLog::default();
    log.push(LogRecord::Header(HeaderRecord {
        schema_version: SCHEMA_VERSION,
        subject: subject.name.clone(),
        targets: targets.len(),
        seed: search_config.seed,
        search: search_config.clone(),
        interaction: config.clone(),
    }));
    let engine = Engine {
        ctx,
        config: config.clone(),
        search: Search::new(subject, targets, search_config.clone()),
        rng,
        preference: PreferenceArchive::new(),
        readability: ReadabilityArchive::new(),
        log,
        events: Emitter::new(events),
        artifacts: options.artifact_dir.clone(),
        moments: 0,
        interactions: 0,
        next_interaction_id: 1,
        first_interaction: None,
    };
    engine.run(scorer)
}

impl Engine<'_, '_> {
    fn run(mut self, scorer: &mut dyn Scorer) -> Result<RunResult, RunError> {
        self.progress();
        self.maybe_moment(scorer)?;
        while !self.search.finished() {
            let pool = if self.preference.is_empty() {
                Vec::new()
            } else {
                self.preference.tests()
            };
            self.search.evolve_generation(&pool, self.config.p_preference_selection);
            self.progress();
            self.maybe_moment(scorer)?;
        }
        self.finish()
    }

    fn progress(&mut self) {
        self.events.emit(EventKind::GenerationProgress {
            generation: self.search.generation(),
            coverage: self.search.coverage(),
            covered: self.search.covered_count(),
            active_targets: self.search.active_targets().len(),
            interactions_done: self.interactions,
            moments_done: self.moments,
        });
    }

    fn maybe_moment(&mut self, scorer: &mut dyn Scorer) -> Result<(), RunError> {
        let open = !self.search.is_complete()
            && should_open_moment(
                &self.config,
                self.search.config().max_generations,
                self.search.generation(),
                self.search.coverage(),
                self.interactions,
            );
        if !open {
            return Ok(());
        }
        match self.moment(scorer) {
            Ok(()) => Ok(()),
            Err(e) => {
                let generation = self.search.generation();
                let reason = e.to_string();
                self.log.push(LogRecord::RunAborted {
                    generation,
                    reason: reason.clone(),
                });
                self.events.emit(EventKind::RunAborted { reason: reason.clone() });
                Err(RunError::Aborted {
                    generation,
                    reason,
                    log: Box::new(std::mem::take(&mut self.log)),
                })
            }
        }
    }

    /// One interaction moment. Returns an error only for failures that
    /// end the run.
    fn moment(&mut self, scorer: &mut dyn Scorer) -> Result<(), ScorerError> {
        self.moments += 1;
        let moment = self.moments;
        let generation = self.search.generation();
        let coverage = self.search.coverage();
        self.log.push(LogRecord::MomentStart {
            moment,
            generation,
            coverage,
        });
        self.events.emit(EventKind::MomentOpened { moment, generation });

        let recency = recency_order(self.search.archive());
        let nt = candidate_budget(self.search.config().population_size, self.config.percentage_to_revise);
        let mut used_methods = BTreeSet::new();
        let mut attempted = BTreeSet::new();
        let (mut done, mut prep_ms, mut scoring_ms) = (0u32, 0u64, 0u64);
        while done < self.config.max_targets_interaction_moment && self.interactions < self.config.max_times {
            let Some(target) = select_target(&recency, self.ctx.targets, &used_methods, &attempted) else {
                break;
            };
            attempted.insert(target);
            let started = Instant::now();
            let candidates = select_candidates(target, self.search.population(), self.search.archive(), nt, &mut self.rng);
            let prepared = prepare_interaction(
                self.ctx,
                target,
                &candidates,
                &self.readability,
                &self.preference,
                &self.config,
                self.next_interaction_id,
                generation,
            );
            let pending = match prepared {
                Ok(p) => p,
                Err(skip) => {
                    let label = self.ctx.targets.get(target).label.clone();
                    self.log.push(LogRecord::InteractionSkipped {
                        moment,
                        generation,
                        target: target.0,
                        target_label: label.clone(),
                        reason: skip.reason.as_str().to_string(),
                    });
                    self.events.emit(EventKind::InteractionSkipped {
                        target: label,
                        reason: skip.reason.as_str().to_string(),
                    });
                    continue;
                }
            };
            self.next_interaction_id += 1;
            let preparation_ms = started.elapsed().as_millis() as u64;
            prep_ms += preparation_ms;
            let request = pending.request(self.ctx.targets, self.config.max_readability_score);
            if let Err(e) = self.write_interaction_artifacts(&pending, &request) {
                return Err(ScorerError::Failed(format!("cannot write interaction files: {e}")));
            }
            self.events.emit(EventKind::InteractionReady { request: request.clone() });

            let asked = Instant::now();
            let answer = scorer.score(&request);
            let elapsed = asked.elapsed().as_millis() as u64;
            scoring_ms += elapsed;
            let response = match answer {
                Ok(r) => r,
                Err(e) if e.is_fatal() => return Err(e),
                Err(e) => {
                    self.abort_moment(moment, generation, e.to_string());
                    break;
                }
            };
            let outcome = match apply_scores(
                &pending,
                &response,
                &mut self.preference,
                &mut self.readability,
                &self.config,
                self.ctx.targets,
                &mut self.rng,
            ) {
                Ok(o) => o,
                Err(e) => {
                    self.abort_moment(moment, generation, e.to_string());
                    break;
                }
            };

            let label = self.ctx.targets.get(target).label.clone();
            self.log.push(LogRecord::Interaction(InteractionRecord {
                interaction_id: pending.id,
                moment,
                generation,
                target: target.0,
                target_label: label.clone(),
                candidates_selected: pending.stats.candidates_selected,
                dedup_count: pending.stats.dedup_count,
                archive_hits: pending.stats.archive_hits,
                scores: outcome
                    .scores
                    .iter()
                    .map(|(m, s)| KeyScore {
                        canonical_key: m.canonical_key.clone(),
                        score: s.value(),
                    })
                    .collect(),
                winner: outcome.winner.as_ref().map(|w| w.test.canonical_key.clone()),
                preference_updated: outcome.updated.is_some(),
                preparation_ms,
                scoring_ms: elapsed,
            }));
            if let Some(entry) = &outcome.updated {
                self.log.push(LogRecord::PreferenceUpdate {
                    interaction_id: pending.id,
                    entry: PreferenceEntryRecord {
                        target: target.0,
                        label,
                        canonical_key: entry.test.canonical_key.clone(),
                        score: entry.score.value(),
                    },
                    previous_score: outcome.previous_score.map(|s| s.value()),
                });
            }
            self.events.emit(EventKind::ScoresApplied {
                interaction_id: pending.id,
                scores: response.scores.clone(),
                update: outcome
                    .updated
                    .as_ref()
                    .map(|e| preference_view(self.ctx.targets, target, e)),
            });
            if self.first_interaction.is_none() {
                self.first_interaction = Some(FirstInteraction { generation, coverage });
            }
            used_methods.insert(self.ctx.targets.get(target).method);
            done += 1;
            self.interactions += 1;
        }

        let snapshot: Vec<PreferenceEntryRecord> = self
            .preference
            .iter()
            .map(|(t, e)| PreferenceEntryRecord {
                target: t.0,
                label: self.ctx.targets.get(t).label.clone(),
                canonical_key: e.test.canonical_key.clone(),
                score: e.score.value(),
            })
            .collect();
        self.log.push(LogRecord::MomentEnd {
            moment,
            generation,
            interactions: done,
            preparation_ms: prep_ms,
            scoring_ms,
            preference: snapshot,
        });
        if let Err(e) = self.write_preference_snapshot(moment) {
            return Err(ScorerError::Failed(format!("cannot write preference snapshot: {e}")));
        }
        self.events.emit(EventKind::MomentClosed {
            moment,
            interactions: done,
            preference: self.preference.views(self.ctx.targets),
        });
        Ok(())
    }

    fn abort_moment(&mut self, moment: u32, generation: u32, error: String) {
        self.log.push(LogRecord::MomentAborted {
            moment,
            generation,
            error,
        });
    }

    fn finish(mut self) -> Result<RunResult, RunError> {
        let generation = self.search.generation();
        let mut archive = self.search.archive().clone();
        let suite = assemble_final_suite(self.ctx, &self.preference, &mut archive, generation);
        let suite_text = suite.render(self.ctx);
        self.log.push(LogRecord::FinalSuite {
            generations: generation,
            covered_targets: suite.covered().len(),
            tests: suite.records(self.ctx),
        });
        self.events.emit(EventKind::RunFinished {
            generations: generation,
            coverage: archive.len() as f64 / self.ctx.targets.len().max(1) as f64,
            suite_size: suite.len(),
        });
        Ok(RunResult {
            suite,
            suite_text,
            coverage_archive: archive,
            preference: self.preference,
            readability: self.readability,
            log: self.log,
            generations: generation,
            moments: self.moments,
            interactions: self.interactions,
            first_interaction: self.first_interaction,
        })
    }

    fn write_interaction_artifacts(&self, pending: &PendingInteraction, request: &ScoreRequest) -> io::Result<()> {
        let Some(root) = &self.artifacts else { return Ok(()) };
        let dir = root.join("interactions").join(format!("{:04}", pending.id));
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("target.txt"), &request.target.description)?;
        for c in &request.unseen {
            fs::write(dir.join(format!("candidate_{}.txt", c.id)), &c.rendered)?;
        }
        for (i, r) in request.references.iter().enumerate() {
            let text = format!("// already scored: {}\n{}", r.score, r.rendered);
            fs::write(dir.join(format!("reference_{}.txt", i + 1)), text)?;
        }
        if let Some(inc) = &request.incumbent {
            let text = format!("// preferred so far, score {}\n{}", inc.score, inc.rendered);
            fs::write(dir.join("incumbent.txt"), text)?;
        }
        write_json(&dir.join("request.json"), request)
    }

    fn write_preference_snapshot(&self, moment: u32) -> io::Result<()> {
        let Some(root) = &self.artifacts else { return Ok(()) };
        let dir = root.join("preference");
        fs::create_dir_all(&dir)?;
        let views = self.preference.views(self.ctx.targets);
        let mut text = String::new();
        for v in &views {
            text.push_str(&format!("// target {} score {}\n{}\n", v.label, v.score, v.rendered));
        }
        fs::write(dir.join(format!("moment_{moment:02}.txt")), text)?;
        write_json(&dir.join(format!("moment_{moment:02}.json")), &views)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    fs::write(path, text)
}
