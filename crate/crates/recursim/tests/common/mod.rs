//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use recursim::data::VectorDataset;
use recursim::learners::SoftmaxModel;

pub fn is_subsequence<T: PartialEq>(needle: &[&T], hay: &[T]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// Longest common subsequence by trying every subsequence of `a`.
pub fn brute_lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    assert!(a.len() <= 16, "exhaustive search only for short inputs");
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let sub: Vec<&T> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if is_subsequence(&sub, b) {
            best = len;
        }
    }
    best
}

pub fn f1_from_lcs(lcs: usize, cand_len: usize, ref_len: usize) -> f64 {
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / cand_len as f64;
    let r = lcs as f64 / ref_len as f64;
    2.0 * p * r / (p + r)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut ranks = vec![0.0; v.len()];
    for (i, x) in v.iter().enumerate() {
        let below = v.iter().filter(|y| *y < x).count() as f64;
        let equal = v.iter().filter(|y| *y == x).count() as f64;
        ranks[i] = below + (equal + 1.0) / 2.0;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// k-NN vote where a point is a neighbour iff fewer than k points precede it
/// in (distance, index) order.
pub fn knn_oracle(train: &VectorDataset, x: &[f64], k: usize) -> usize {
    let d: Vec<f64> = train
        .samples
        .iter()
        .map(|s| s.features.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .collect();
    let mut votes = vec![0usize; train.class_count];
    for i in 0..d.len() {
        let ahead = (0..d.len()).filter(|&j| d[j] < d[i] || (d[j] == d[i] && j < i)).count();
        if ahead < k {
            votes[train.samples[i].label] += 1;
        }
    }
    let top = *votes.iter().max().unwrap();
    votes.iter().position(|&v| v == top).unwrap()
}

/// Worst relative gap between the analytic gradient and central differences.
pub fn finite_difference_error(m: &SoftmaxModel, x: &[f64], y: usize) -> f64 {
    let (_, gw, gb) = m.loss_and_gradient(x, y);
    let analytic: Vec<f64> = gw.into_iter().chain(gb).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let bump = |delta: f64| {
            let mut p = m.clone();
            if i < p.weights.len() {
                p.weights[i] += delta;
            } else {
                p.biases[i - p.weights.len()] += delta;
            }
            p.loss(x, y)
        };
        let numeric = (bump(h) - bump(-h)) / (2.0 * h);
        // components below the floor are compared absolutely
        worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-5));
    }
    worst
}
