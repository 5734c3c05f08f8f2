//! The many-objective evolutionary loop with dynamic target selection.
//!
//! Each generation breeds offspring by tournament selection, crossover
//! and mutation (occasionally mutating an archived test instead),
//! executes them, archives newly covered targets, activates targets
//! whose controlling outcome is now covered, and keeps the best
//! individuals by preference sorting.

mod archive;
mod ranking;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interpreter::{execute, fitness_vector, DEFAULT_STEP_BUDGET};
use crate::subject::{SubjectClass, TargetId, TargetSet};
use crate::test_model::{crossover, mutate, random_test, TestCase, VariationConfig, DEFAULT_MAX_LENGTH};

pub use archive::{ArchiveEntry, CoverageArchive};
pub use ranking::{
    crowding_distance, dominates, non_dominated_fronts, preference_compare, preference_sort, Preference, Ranking,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub population_size: usize,
    /// Search budget in generations.
    pub max_generations: u32,
    pub crossover_rate: f64,
    pub tournament_size: usize,
    /// Probability that an offspring is replaced by a mutated archive
    /// test before mutation.
    pub archive_probability: f64,
    pub step_budget: u64,
    pub max_length: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population_size: 50,
            max_generations: 1000,
            crossover_rate: 0.75,
            tournament_size: 4,
            archive_probability: 0.1,
            step_budget: DEFAULT_STEP_BUDGET,
            max_length: DEFAULT_MAX_LENGTH,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid search configuration: {0}")]
pub struct SearchConfigError(pub String);

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchConfigError> {
        let err = |m: &str| Err(SearchConfigError(m.to_string()));
        if self.population_size < 2 {
            return err("population_size must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return err("crossover_rate must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.archive_probability) {
            return err("archive_probability must be in [0, 1]");
        }
        if self.tournament_size == 0 {
            return err("tournament_size must be positive");
        }
        if self.max_length == 0 {
            return err("max_length must be positive");
        }
        if self.step_budget == 0 {
            return err("step_budget must be positive");
        }
        Ok(())
    }

    pub fn variation(&self) -> VariationConfig {
        VariationConfig {
            max_length: self.max_length,
            ..VariationConfig::default()
        }
    }
}

/// A test with its distance to every target.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub test: TestCase,
    pub fitness: Vec<f64>,
}

impl Individual {
    pub fn covers(&self, target: TargetId) -> bool {
        self.fitness[target.0 as usize] == 0.0
    }
}

/// Search state: population, archive and target bookkeeping.
pub struct Search<'a> {
    subject: &'a SubjectClass,
    targets: &'a TargetSet,
    config: SearchConfig,
    variation: VariationConfig,
    rng: ChaCha8Rng,
    generation: u32,
    population: Vec<Individual>,
    rank: Vec<usize>,
    crowding: Vec<f64>,
    archive: CoverageArchive,
    covered: Vec<bool>,
    active: Vec<usize>,
    evaluations: u64,
}

impl<'a> Search<'a> {
    /// Creates and evaluates the initial random population (generation 0).
    pub fn new(subject: &'a SubjectClass, targets: &'a TargetSet, config: SearchConfig) -> Self {
        let mut s = Search {
            subject,
            targets,
            variation: config.variation(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            generation: 0,
            population: Vec::new(),
            rank: Vec::new(),
            crowding: Vec::new(),
            archive: CoverageArchive::new(),
            covered: vec![false; targets.len()],
            active: Vec::new(),
            evaluations: 0,
        };
        let tests: Vec<TestCase> = (0..s.config.population_size)
            .map(|_| random_test(subject, &s.variation, &mut s.rng))
            .collect();
        let pop: Vec<Individual> = tests.into_iter().map(|t| s.evaluate(t)).collect();
        for ind in &pop {
            s.archive_individual(ind, 0);
        }
        s.expand_targets();
        s.select(pop);
        s
    }

    pub fn subject(&self) -> &'a SubjectClass {
        self.subject
    }

    pub fn targets(&self) -> &'a TargetSet {
        self.targets
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    pub fn archive(&self) -> &CoverageArchive {
        &self.archive
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Targets currently pursued.
    pub fn active_targets(&self) -> Vec<TargetId> {
        self.active.iter().map(|i| TargetId(*i as u32)).collect()
    }

    pub fn is_covered(&self, target: TargetId) -> bool {
        self.covered[target.0 as usize]
    }

    pub fn covered_count(&self) -> usize {
        self.covered.iter().filter(|c| **c).count()
    }

    /// Fraction of targets covered.
    pub fn coverage(&self) -> f64 {
        if self.targets.is_empty() {
            1.0
        } else {
            self.covered_count() as f64 / self.targets.len() as f64
        }
    }

    pub fn is_complete(&self) -> bool {
        self.covered.iter().all(|c| *c)
    }

    /// Budget exhausted or nothing left to cover.
    pub fn finished(&self) -> bool {
        self.generation >= self.config.max_generations || self.is_complete()
    }

    /// Executes a test and computes its fitness vector.
    pub fn evaluate(&mut self, test: TestCase) -> Individual {
        self.evaluations += 1;
        let trace = execute(self.subject, &test, self.config.step_budget)
            .unwrap_or_else(|e| panic!("variation produced an invalid test: {e}"));
        let fitness = fitness_vector(self.subject, self.targets.iter(), &trace);
        Individual { test, fitness }
    }

    fn archive_individual(&mut self, ind: &Individual, generation: u32) {
        for (i, f) in ind.fitness.iter().enumerate() {
            if *f == 0.0 {
                self.archive.offer(TargetId(i as u32), &ind.test, generation);
                self.covered[i] = true;
            }
        }
    }

    /// Activates every uncovered target whose controlling outcome is
    /// covered (or that has none).
    fn expand_targets(&mut self) {
        self.active = self
            .targets
            .iter()
            .filter(|t| !self.covered[t.id.0 as usize])
            .filter(|t| t.control_parent.is_none_or(|p| self.covered[p.0 as usize]))
            .map(|t| t.id.0 as usize)
            .collect();
    }

    /// Keeps the best `population_size` of `pool`.
    fn select(&mut self, pool: Vec<Individual>) {
        let fitness: Vec<Vec<f64>> = pool.iter().map(|i| i.fitness.clone()).collect();
        let lengths: Vec<usize> = pool.iter().map(|i| i.test.len()).collect();
        let ranking = preference_sort(&fitness, &lengths, &self.active);
        let n = self.config.population_size;
        let chosen: Vec<usize> = ranking.fronts.iter().flatten().copied().take(n).collect();
        let mut slots: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
        self.rank = chosen.iter().map(|i| ranking.rank[*i]).collect();
        self.crowding = chosen.iter().map(|i| ranking.crowding[*i]).collect();
        self.population = chosen.iter().map(|i| slots[*i].take().unwrap()).collect();
    }

    fn tournament(&mut self) -> usize {
        let n = self.population.len();
        let mut best = self.rng.random_range(0..n);
        for _ in 1..self.config.tournament_size {
            let c = self.rng.random_range(0..n);
            let better = self.rank[c] < self.rank[best]
                || (self.rank[c] == self.rank[best] && self.crowding[c] > self.crowding[best]);
            if better {
                best = c;
            }
        }
        best
    }

    /// Produces `population_size` offspring. With the configured archive
    /// probability a child is replaced by an archived test before
    /// mutation; such draws use `preference` (when non-empty) with
    /// probability `p_preference`.
    pub fn breed(&mut self, preference: &[TestCase], p_preference: f64) -> Vec<TestCase> {
        let n = self.config.population_size;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let a = self.tournament();
            let b = self.tournament();
            let (c1, c2) = if self.rng.random_bool(self.config.crossover_rate) {
                crossover(
                    self.subject,
                    &self.population[a].test,
                    &self.population[b].test,
                    &self.variation,
                    &mut self.rng,
                )
            } else {
                (self.population[a].test.clone(), self.population[b].test.clone())
            };
            for child in [c1, c2] {
                if out.len() == n {
                    break;
                }
                let base = if !self.archive.is_empty() && self.rng.random_bool(self.config.archive_probability) {
                    if !preference.is_empty() && self.rng.random_bool(p_preference) {
                        preference.choose(&mut self.rng).unwrap().clone()
                    } else {
                        let k = self.rng.random_range(0..self.archive.len());
                        self.archive.iter().nth(k).unwrap().1.test.clone()
                    }
                } else {
                    child
                };
                out.push(mutate(self.subject, &base, &self.variation, &mut self.rng));
            }
        }
        out
    }

    /// Runs one generation. `preference` holds the tests of the
    /// preference archive (empty when interaction is off).
    pub fn evolve_generation(&mut self, preference: &[TestCase], p_preference: f64) {
        let offspring = self.breed(preference, p_preference);
        let generation = self.generation + 1;
        let evaluated: Vec<Individual> = offspring.into_iter().map(|t| self.evaluate(t)).collect();
        for ind in &evaluated {
            self.archive_individual(ind, generation);
        }
        self.expand_targets();
        let mut pool = std::mem::take(&mut self.population);
        pool.extend(evaluated);
        self.select(pool);
        self.generation = generation;
    }
}

/// Outcome of a search without interaction.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub archive: CoverageArchive,
    pub generations: u32,
    pub evaluations: u64,
}

/// Runs the plain search to budget or full coverage.
pub fn run_search(subject: &SubjectClass, targets: &TargetSet, config: &SearchConfig) -> SearchOutcome {
    let mut search = Search::new(subject, targets, config.clone());
    while !search.finished() {
        search.evolve_generation(&[], 0.0);
    }
    SearchOutcome {
        archive: search.archive().clone(),
        generations: search.generation(),
        evaluations: search.evaluations(),
    }
}
