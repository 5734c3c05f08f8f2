//! The coverage archive: for each covered target, the shortest test
//! seen covering it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::subject::TargetId;
use crate::test_model::TestCase;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub test: TestCase,
    /// Generation at which the target was first covered.
    pub covered_at: u32,
    /// Generation of the last replacement.
    pub updated_at: u32,
    /// Insertion sequence number, for ordering targets covered in the
    /// same generation.
    pub seq: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageArchive {
    entries: BTreeMap<TargetId, ArchiveEntry>,
    next_seq: u64,
}

impl CoverageArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, target: TargetId) -> Option<&ArchiveEntry> {
        self.entries.get(&target)
    }

    pub fn contains(&self, target: TargetId) -> bool {
        self.entries.contains_key(&target)
    }

    /// Entries in target order.
    pub fn iter(&self) -> impl Iterator<Item = (TargetId, &ArchiveEntry)> {
        self.entries.iter().map(|(t, e)| (*t, e))
    }

    /// Offers `test` as covering `target`. Inserts for a new target;
    /// replaces only a strictly longer incumbent. Returns whether the
    /// archive changed.
    pub fn offer(&mut self, target: TargetId, test: &TestCase, generation: u32) -> bool {
        match self.entries.get_mut(&target) {
            None => {
                self.entries.insert(
                    target,
                    ArchiveEntry {
                        test: test.clone(),
                        covered_at: generation,
                        updated_at: generation,
                        seq: self.next_seq,
                    },
                );
                self.next_seq += 1;
                true
            }
            Some(e) if test.len() < e.test.len() => {
                e.test = test.clone();
                e.updated_at = generation;
                true
            }
            Some(_) => false,
        }
    }

    /// Targets in the order they were first covered.
    pub fn coverage_order(&self) -> Vec<TargetId> {
        let mut v: Vec<(u64, TargetId)> = self.entries.iter().map(|(t, e)| (e.seq, *t)).collect();
        v.sort();
        v.into_iter().map(|(_, t)| t).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_model::{Literal, Statement, VarId};

    fn test_of_len(n: usize) -> TestCase {
        TestCase::new(
            (0..n)
                .map(|i| Statement::Primitive {
                    var: VarId(i as u32),
                    value: Literal::Int(i as i64),
                })
                .collect(),
        )
    }

    #[test]
    fn records_first_coverage_generation() {
        let mut a = CoverageArchive::new();
        assert!(a.offer(TargetId(3), &test_of_len(4), 7));
        assert_eq!(a.get(TargetId(3)).unwrap().covered_at, 7);
    }

    #[test]
    fn shorter_replaces_equal_keeps() {
        let mut a = CoverageArchive::new();
        a.offer(TargetId(1), &test_of_len(5), 0);
        assert!(a.offer(TargetId(1), &test_of_len(3), 4));
        let e = a.get(TargetId(1)).unwrap();
        assert_eq!((e.test.len(), e.covered_at, e.updated_at), (3, 0, 4));
        let other = TestCase::new(vec![
            Statement::Primitive {
                var: VarId(0),
                value: Literal::Bool(true),
            };
            3
        ]);
        assert!(!a.offer(TargetId(1), &other, 5));
        assert_eq!(a.get(TargetId(1)).unwrap().test, test_of_len(3));
    }

    #[test]
    fn coverage_order_follows_insertion() {
        let mut a = CoverageArchive::new();
        a.offer(TargetId(9), &test_of_len(1), 0);
        a.offer(TargetId(2), &test_of_len(1), 0);
        a.offer(TargetId(5), &test_of_len(1), 3);
        assert_eq!(a.coverage_order(), vec![TargetId(9), TargetId(2), TargetId(5)]);
    }
}
