//! Scoring statistics: LCS, ROUGE-L F1, accuracy, the rolling quality window,
//! and percentile bootstrap intervals.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Lowercase, split on whitespace, trim punctuation from both ends of each token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // single rolling row over b
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l_f1<T: PartialEq>(candidate: &[T], reference: &[T]) -> f64 {
    let l = lcs_length(candidate, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / candidate.len() as f64;
    let r = l as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return contract(format!(
            "accuracy: {} predictions vs {} labels",
            predicted.len(),
            truth.len()
        ));
    }
    if truth.is_empty() {
        return contract("accuracy: empty input");
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// FIFO window of per-generation validation means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityHistory {
    window: VecDeque<f64>,
    capacity: usize,
}

impl Default for QualityHistory {
    fn default() -> Self {
        Self::new()
    }
}

impl QualityHistory {
    pub const CAPACITY: usize = 3;

    pub fn new() -> Self {
        Self {
            window: VecDeque::with_capacity(Self::CAPACITY),
            capacity: Self::CAPACITY,
        }
    }

    pub fn from_values(values: &[f64]) -> Result<Self> {
        let mut h = Self::new();
        for &v in values {
            h.push(v)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return contract(format!("quality history value {value} outside [0,1]"));
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.window.iter().copied().collect()
    }
}

pub fn moving_average(history: &QualityHistory) -> Result<f64> {
    if history.is_empty() {
        return contract("moving average of an empty history");
    }
    Ok(history.window.iter().sum::<f64>() / history.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub resamples: usize,
}

/// Nearest-rank percentile of an ascending slice, `p` in (0, 1).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    // guard against p*n landing a hair above an integer
    let rank = ((p * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

pub fn bootstrap_ci<R: Rng + ?Sized>(
    scores: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<MetricSummary> {
    if scores.is_empty() {
        return contract("bootstrap over an empty score list");
    }
    if !(level > 0.0 && level < 1.0) {
        return contract(format!("confidence level {level} not in (0,1)"));
    }
    if resamples == 0 {
        return contract("bootstrap needs at least one resample");
    }
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut s = 0.0;
        for _ in 0..n {
            s += scores[rng.random_range(0..n)];
        }
        means.push(s / n as f64);
    }
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(MetricSummary {
        mean,
        ci_low: nearest_rank(&means, alpha),
        ci_high: nearest_rank(&means, 1.0 - alpha),
        n,
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_lowercases_and_trims() {
        assert_eq!(toks("  The CAT, sat.  "), vec!["the", "cat", "sat"]);
        assert_eq!(toks("\"quoted\" -- x"), vec!["quoted", "x"]);
        assert_eq!(toks("don't"), vec!["don't"]);
        assert!(toks(" ... ").is_empty());
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_length(&toks("a b c"), &toks("a b c")), 3);
        assert_eq!(lcs_length(&toks("a b c"), &toks("d e f")), 0);
        assert_eq!(lcs_length(&toks("the cat sat"), &toks("cat the sat")), 2);
        assert_eq!(lcs_length::<String>(&[], &toks("x")), 0);
    }

    #[test]
    fn rouge_examples() {
        let a = toks("the cat sat");
        assert_eq!(rouge_l_f1(&a, &a), 1.0);
        let f = rouge_l_f1(&a, &toks("the cat sat down"));
        assert!((f - 6.0 / 7.0).abs() < 1e-15);
        assert_eq!(rouge_l_f1(&[], &a), 0.0);
        assert_eq!(rouge_l_f1(&a, &[]), 0.0);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1, 1, 1], &[1, 2, 1, 2]).unwrap(), 0.5);
        assert!(accuracy(&[1], &[1, 2]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn window_eviction() {
        let mut h = QualityHistory::from_values(&[0.9]).unwrap();
        assert_eq!(moving_average(&h).unwrap(), 0.9);
        h = QualityHistory::from_values(&[0.8, 0.9, 1.0]).unwrap();
        assert!((moving_average(&h).unwrap() - 0.9).abs() < 1e-15);
        h.push(0.5).unwrap();
        assert_eq!(h.values(), vec![0.9, 1.0, 0.5]);
        assert!((moving_average(&h).unwrap() - 0.8).abs() < 1e-15);
        assert!(moving_average(&QualityHistory::new()).is_err());
        assert!(h.push(1.5).is_err());
    }

    #[test]
    fn nearest_rank_indices() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 0.025), 25.0);
        assert_eq!(nearest_rank(&v, 0.975), 975.0);
        assert_eq!(nearest_rank(&v, 0.0001), 1.0);
        assert_eq!(nearest_rank(&[3.0], 0.5), 3.0);
    }

    #[test]
    fn bootstrap_constant_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = bootstrap_ci(&[0.5; 50], 1000, 0.95, &mut rng).unwrap();
        assert_eq!((s.mean, s.ci_low, s.ci_high), (0.5, 0.5, 0.5));
        assert_eq!((s.n, s.resamples), (50, 1000));
        assert!(bootstrap_ci(&[], 1000, 0.95, &mut rng).is_err());
        assert!(bootstrap_ci(&[0.1], 1000, 1.0, &mut rng).is_err());
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        let scores: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let a = bootstrap_ci(&scores, 500, 0.9, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = bootstrap_ci(&scores, 500, 0.9, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.ci_low <= a.ci_high);
    }
}
