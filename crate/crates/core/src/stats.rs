//! Two-sample rank-sum test and Cliff's delta.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Samples at or below this combined size get an exact p-value.
pub const EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSumMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Mann-Whitney U of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub method: RankSumMethod,
}

/// Mid-ranks (1-based, ties averaged) of `values`, doubled so they stay
/// integral.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let mut ranks = vec![0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 averaged, times two.
        let doubled = (i + 1 + j + 1) as u64;
        for k in i..=j {
            ranks[idx[k]] = doubled;
        }
        i = j + 1;
    }
    ranks
}

fn pooled(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    xs.iter().chain(ys).copied().collect()
}

fn u_statistic(xs: &[f64], ranks: &[u64]) -> f64 {
    let n1 = xs.len() as f64;
    let w: u64 = ranks[..xs.len()].iter().sum();
    w as f64 / 2.0 - n1 * (n1 + 1.0) / 2.0
}

/// Two-sided rank-sum test, exact for small samples and normal
/// otherwise.
pub fn rank_sum_test(xs: &[f64], ys: &[f64]) -> RankSumResult {
    assert!(!xs.is_empty() && !ys.is_empty(), "rank-sum test needs two non-empty samples");
    if xs.len() + ys.len() <= EXACT_LIMIT {
        rank_sum_exact(xs, ys)
    } else {
        rank_sum_normal(xs, ys)
    }
}

/// Exact two-sided p-value: the share of all splits of the pooled ranks
/// whose first-sample rank sum lies at least as far from its mean as the
/// observed one. Counted by dynamic programming over rank sums.
pub fn rank_sum_exact(xs: &[f64], ys: &[f64]) -> RankSumResult {
    let ranks = doubled_ranks(&pooled(xs, ys));
    let n1 = xs.len();
    let total: u64 = ranks.iter().sum();
    let observed: u64 = ranks[..n1].iter().sum();
    // Compare n * sum against n1 * total to stay in integers.
    let n = ranks.len() as i128;
    let dev = |s: u64| (n * s as i128 - n1 as i128 * total as i128).abs();
    let target = dev(observed);

    // ways[k][s]: subsets of size k with doubled rank sum s.
    let mut ways = vec![vec![0u128; total as usize + 1]; n1 + 1];
    ways[0][0] = 1;
    for &r in &ranks {
        for k in (1..=n1).rev() {
            for s in (r as usize..=total as usize).rev() {
                ways[k][s] += ways[k - 1][s - r as usize];
            }
        }
    }
    let all: u128 = ways[n1].iter().sum();
    let extreme: u128 = ways[n1]
        .iter()
        .enumerate()
        .filter(|(s, _)| dev(*s as u64) >= target)
        .map(|(_, c)| *c)
        .sum();
    RankSumResult {
        u: u_statistic(xs, &ranks),
        p_value: (extreme as f64 / all as f64).min(1.0),
        method: RankSumMethod::Exact,
    }
}

/// Normal approximation with tie and continuity corrections.
pub fn rank_sum_normal(xs: &[f64], ys: &[f64]) -> RankSumResult {
    let all = pooled(xs, ys);
    let ranks = doubled_ranks(&all);
    let (n1, n2) = (xs.len() as f64, ys.len() as f64);
    let n = n1 + n2;
    let u = u_statistic(xs, &ranks);
    let mean = n1 * n2 / 2.0;

    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * (1.0 - normal.cdf(z))).min(1.0)
    };
    RankSumResult {
        u,
        p_value,
        method: RankSumMethod::Normal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub fn of(delta: f64) -> Self {
        let d = delta.abs();
        if d < 0.147 {
            Magnitude::Negligible
        } else if d < 0.33 {
            Magnitude::Small
        } else if d < 0.474 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CliffsDelta {
    pub delta: f64,
    pub magnitude: Magnitude,
}

/// P(x > y) - P(x < y) over all pairs, counted by binary search in the
/// sorted second sample.
pub fn cliffs_delta(xs: &[f64], ys: &[f64]) -> CliffsDelta {
    assert!(!xs.is_empty() && !ys.is_empty(), "Cliff's delta needs two non-empty samples");
    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut greater: i64 = 0;
    let mut less: i64 = 0;
    for x in xs {
        let below = sorted.partition_point(|y| y < x);
        let not_above = sorted.partition_point(|y| y <= x);
        greater += below as i64;
        less += (sorted.len() - not_above) as i64;
    }
    let delta = (greater - less) as f64 / (xs.len() * ys.len()) as f64;
    CliffsDelta {
        delta,
        magnitude: Magnitude::of(delta),
    }
}
