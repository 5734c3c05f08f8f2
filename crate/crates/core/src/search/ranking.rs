//! Preference sorting: the per-target preference front followed by
//! non-dominated fronts, each ordered by crowding distance.

use std::cmp::Ordering;

/// Which of two tests the preference criterion favours for one target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preference {
    First,
    Second,
    Tie,
}

/// Lower distance wins; equal distances fall back to shorter length.
pub fn preference_compare(f1: f64, len1: usize, f2: f64, len2: usize) -> Preference {
    match f1.partial_cmp(&f2).unwrap_or(Ordering::Equal).then(len1.cmp(&len2)) {
        Ordering::Less => Preference::First,
        Ordering::Greater => Preference::Second,
        Ordering::Equal => Preference::Tie,
    }
}

/// `a` dominates `b` on the given objectives (minimization).
pub fn dominates(a: &[f64], b: &[f64], objectives: &[usize]) -> bool {
    let mut strictly = false;
    for &o in objectives {
        if a[o] > b[o] {
            return false;
        }
        if a[o] < b[o] {
            strictly = true;
        }
    }
    strictly
}

/// Result of sorting a population.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    /// Fronts of individual indexes, best first, each ordered by
    /// crowding distance descending.
    pub fronts: Vec<Vec<usize>>,
    pub rank: Vec<usize>,
    pub crowding: Vec<f64>,
}

/// Ranks individuals with fitness vectors `fitness` and lengths
/// `lengths` over the objective indexes in `active`.
pub fn preference_sort(fitness: &[Vec<f64>], lengths: &[usize], active: &[usize]) -> Ranking {
    let n = fitness.len();
    let mut in_first = vec![false; n];
    for &t in active {
        let mut best: Option<usize> = None;
        for i in 0..n {
            best = match best {
                None => Some(i),
                Some(b) => match preference_compare(fitness[i][t], lengths[i], fitness[b][t], lengths[b]) {
                    Preference::First => Some(i),
                    _ => Some(b),
                },
            };
        }
        if let Some(b) = best {
            in_first[b] = true;
        }
    }
    let mut fronts = Vec::new();
    let first: Vec<usize> = (0..n).filter(|i| in_first[*i]).collect();
    if !first.is_empty() {
        fronts.push(first);
    }
    let rest: Vec<usize> = (0..n).filter(|i| !in_first[*i]).collect();
    fronts.extend(non_dominated_fronts(fitness, &rest, active));

    let mut rank = vec![0; n];
    let mut crowding = vec![0.0; n];
    for (r, front) in fronts.iter_mut().enumerate() {
        let d = crowding_distance(fitness, front, active);
        for (k, &i) in front.iter().enumerate() {
            rank[i] = r;
            crowding[i] = d[k];
        }
        // Stable: equal crowding keeps index order.
        front.sort_by(|a, b| crowding[*b].partial_cmp(&crowding[*a]).unwrap_or(Ordering::Equal));
    }
    Ranking { fronts, rank, crowding }
}

/// Fast non-dominated sorting of `members`.
pub fn non_dominated_fronts(fitness: &[Vec<f64>], members: &[usize], objectives: &[usize]) -> Vec<Vec<usize>> {
    let m = members.len();
    let mut dominated_by = vec![0usize; m];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); m];
    for a in 0..m {
        for b in a + 1..m {
            let (fa, fb) = (&fitness[members[a]], &fitness[members[b]]);
            if dominates(fa, fb, objectives) {
                dominates_list[a].push(b);
                dominated_by[b] += 1;
            } else if dominates(fb, fa, objectives) {
                dominates_list[b].push(a);
                dominated_by[a] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..m).filter(|i| dominated_by[*i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &a in &current {
            for &b in &dominates_list[a] {
                dominated_by[b] -= 1;
                if dominated_by[b] == 0 {
                    next.push(b);
                }
            }
        }
        next.sort();
        fronts.push(current.iter().map(|i| members[*i]).collect());
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front`, in `front` order.
pub fn crowding_distance(fitness: &[Vec<f64>], front: &[usize], objectives: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut d = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    for &o in objectives {
        order.sort_by(|a, b| {
            fitness[front[*a]][o]
                .partial_cmp(&fitness[front[*b]][o])
                .unwrap_or(Ordering::Equal)
        });
        let lo = fitness[front[order[0]]][o];
        let hi = fitness[front[order[n - 1]]][o];
        d[order[0]] = f64::INFINITY;
        d[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for k in 1..n - 1 {
                let gap = fitness[front[order[k + 1]]][o] - fitness[front[order[k - 1]]][o];
                d[order[k]] += gap / (hi - lo);
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compare_clauses() {
        assert_eq!(preference_compare(0.2, 9, 0.5, 1), Preference::First);
        assert_eq!(preference_compare(0.5, 3, 0.5, 7), Preference::First);
        assert_eq!(preference_compare(0.5, 3, 0.5, 3), Preference::Tie);
        assert_eq!(preference_compare(0.7, 1, 0.5, 3), Preference::Second);
    }

    #[test]
    fn single_target_front_zero_is_its_best() {
        let fitness = vec![vec![0.5], vec![0.2], vec![0.2], vec![0.9]];
        let r = preference_sort(&fitness, &[1, 4, 3, 1], &[0]);
        assert_eq!(r.fronts[0], vec![2]);
    }

    #[test]
    fn identical_vectors_share_a_front() {
        let fitness = vec![vec![0.0, 0.0], vec![0.3, 0.4], vec![0.3, 0.4]];
        let r = preference_sort(&fitness, &[1, 2, 2], &[0, 1]);
        assert_eq!(r.rank[1], r.rank[2]);
    }

    /// Exhaustive reference: front 0 by the preference criterion, then
    /// repeatedly peel every member no remaining member dominates.
    pub(crate) fn oracle(fitness: &[Vec<f64>], lengths: &[usize], active: &[usize]) -> Vec<Vec<usize>> {
        let n = fitness.len();
        let mut first = Vec::new();
        for &t in active {
            let best = (0..n)
                .min_by(|a, b| {
                    fitness[*a][t]
                        .partial_cmp(&fitness[*b][t])
                        .unwrap()
                        .then(lengths[*a].cmp(&lengths[*b]))
                        .then(a.cmp(b))
                })
                .unwrap();
            if !first.contains(&best) {
                first.push(best);
            }
        }
        first.sort();
        let mut fronts = vec![first.clone()];
        let mut left: Vec<usize> = (0..n).filter(|i| !first.contains(i)).collect();
        while !left.is_empty() {
            let front: Vec<usize> = left
                .iter()
                .copied()
                .filter(|&a| {
                    !left.iter().any(|&b| {
                        active.iter().all(|&o| fitness[b][o] <= fitness[a][o])
                            && active.iter().any(|&o| fitness[b][o] < fitness[a][o])
                    })
                })
                .collect();
            left.retain(|i| !front.contains(i));
            fronts.push(front);
        }
        fronts
    }

    fn sorted(fronts: &[Vec<usize>]) -> Vec<Vec<usize>> {
        fronts
            .iter()
            .map(|f| {
                let mut f = f.clone();
                f.sort();
                f
            })
            .collect()
    }

    proptest! {
        #[test]
        fn fronts_match_oracle(
            pop in 1usize..=10,
            targets in 1usize..=5,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // Few distinct values so ties and duplicates are common.
            let fitness: Vec<Vec<f64>> = (0..pop)
                .map(|_| (0..targets).map(|_| rng.random_range(0..4) as f64 / 4.0).collect())
                .collect();
            let lengths: Vec<usize> = (0..pop).map(|_| rng.random_range(1..5)).collect();
            let active: Vec<usize> = (0..targets).collect();
            let got = preference_sort(&fitness, &lengths, &active);
            prop_assert_eq!(sorted(&got.fronts), oracle(&fitness, &lengths, &active));
            for front in &got.fronts {
                for w in front.windows(2) {
                    prop_assert!(got.crowding[w[0]] >= got.crowding[w[1]]);
                }
            }
        }
    }
}
