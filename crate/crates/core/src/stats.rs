//! Two-sample Wilcoxon rank-sum (Mann-Whitney U) test and descriptive
//! statistics for group comparisons.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Largest pooled sample size the exact test will enumerate when
/// `Method::Auto` is in effect.
pub const EXACT_MAX_N: usize = 20;
/// Hard limit for a forced exact test; counts are held in `u128`.
pub const EXACT_HARD_LIMIT: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("degenerate sample: {0}")]
    Degenerate(String),
    #[error("validation error: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleGroup {
    pub name: String,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(StatsError::Validation(format!("group {name} is empty")));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(StatsError::Validation(format!("group {name} holds non-finite value {v}")));
        }
        Ok(SampleGroup { name, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestMethod::Exact => "Exact",
            TestMethod::NormalApprox => "NormalApprox",
        })
    }
}

/// How the p-value is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    /// Exact when the pooled size is at most [`EXACT_MAX_N`] and there are
    /// no ties, normal approximation otherwise.
    #[default]
    Auto,
    Exact,
    Normal,
}

impl FromStr for MethodChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "auto" => Ok(MethodChoice::Auto),
            "exact" => Ok(MethodChoice::Exact),
            "normal" => Ok(MethodChoice::Normal),
            other => Err(format!("unknown test method {other:?} (auto, exact, normal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    /// U of the first group: rank sum minus `n1(n1+1)/2`.
    pub u_statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: TestMethod,
    pub n1: usize,
    pub n2: usize,
    pub alpha: f64,
    pub significant: bool,
}

/// Ranks of the pooled sample, ties sharing their average rank, plus the
/// tie-correction term `Σ(t³ − t)`.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j share ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    (ranks, tie_term)
}

/// Number of size-`m` subsets of ranks `1..=n` for every attainable rank
/// sum; index is the sum.
fn rank_sum_counts(m: usize, n: usize) -> Vec<u128> {
    let max_sum = n * (n + 1) / 2;
    // ways[k][s]: subsets of size k summing to s
    let mut ways = vec![vec![0u128; max_sum + 1]; m + 1];
    ways[0][0] = 1;
    for r in 1..=n {
        for k in (1..=m.min(r)).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let (src, dst) = (&lower[k - 1], &mut upper[0]);
            for s in (r..=max_sum).rev() {
                if src[s - r] != 0 {
                    dst[s] += src[s - r];
                }
            }
        }
    }
    ways.swap_remove(m)
}

/// Exact two-sided p for rank sum `w` of a group of size `m` among `n`
/// tie-free observations: `min(1, 2·min(P(W ≤ w), P(W ≥ w)))`.
pub fn exact_p_value(w: usize, m: usize, n: usize) -> f64 {
    let counts = rank_sum_counts(m, n);
    let total: u128 = counts.iter().sum();
    let le: u128 = counts[..=w.min(counts.len() - 1)].iter().sum();
    let ge: u128 = counts.get(w..).map_or(0, |c| c.iter().sum());
    let tail = le.min(ge);
    ((2 * tail) as f64 / total as f64).min(1.0)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction. Errors when the variance vanishes.
pub fn normal_p_value(u: f64, n1: usize, n2: usize, tie_term: f64) -> Result<f64> {
    let (m, k) = (n1 as f64, n2 as f64);
    let n = m + k;
    let mean = m * k / 2.0;
    let correction = if n > 1.0 { tie_term / (n * (n - 1.0)) } else { 0.0 };
    let var = m * k / 12.0 * ((n + 1.0) - correction);
    if var <= 0.0 {
        return Err(StatsError::Degenerate("zero variance in rank-sum statistic".into()));
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok((2.0 * std_normal.sf(z)).clamp(f64::MIN_POSITIVE, 1.0))
}

pub fn rank_sum_test(a: &SampleGroup, b: &SampleGroup, alpha: f64, method: MethodChoice) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Validation("both groups must be non-empty".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Validation(format!("alpha {alpha} outside (0, 1)")));
    }
    let pooled: Vec<f64> = a.values.iter().chain(&b.values).copied().collect();
    if pooled.iter().all(|v| *v == pooled[0]) {
        return Err(StatsError::Degenerate(format!(
            "every value in {} and {} equals {}",
            a.name, b.name, pooled[0]
        )));
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let (ranks, tie_term) = midranks(&pooled);
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    let has_ties = tie_term > 0.0;

    let use_exact = match method {
        MethodChoice::Auto => n <= EXACT_MAX_N && !has_ties,
        MethodChoice::Normal => false,
        MethodChoice::Exact => {
            if has_ties {
                return Err(StatsError::Validation(
                    "exact test requires tie-free samples".into(),
                ));
            }
            if n > EXACT_HARD_LIMIT {
                return Err(StatsError::Validation(format!(
                    "exact test limited to {EXACT_HARD_LIMIT} observations, got {n}"
                )));
            }
            true
        }
    };
    let (p_value, method) = if use_exact {
        // tie-free, so the rank sum is an integer
        (exact_p_value(rank_sum as usize, n1, n), TestMethod::Exact)
    } else {
        (normal_p_value(u, n1, n2, tie_term)?, TestMethod::NormalApprox)
    };
    Ok(TestResult {
        u_statistic: u,
        p_value,
        method,
        n1,
        n2,
        alpha,
        significant: p_value < alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Description {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub std: f64,
    pub n: usize,
}

pub fn describe(group: &SampleGroup) -> Description {
    let n = group.len();
    let mean = group.values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        let ss: f64 = group.values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    Description { mean, std, n }
}
