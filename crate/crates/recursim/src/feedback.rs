//! Feedback-quality drift, label corruption and the three candidate filters.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::metrics::{moving_average, QualityHistory};

/// Probability that a feedback label is correct, pulled toward model quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackQuality {
    pub q: f64,
    pub coupling: f64,
    pub noise_std: f64,
}

impl Default for FeedbackQuality {
    fn default() -> Self {
        Self { q: 0.95, coupling: 0.5, noise_std: 0.02 }
    }
}

pub fn update_feedback_quality<R: Rng + ?Sized>(
    state: FeedbackQuality,
    model_quality: f64,
    rng: &mut R,
) -> Result<FeedbackQuality> {
    if !(0.0..=1.0).contains(&model_quality) {
        return contract(format!("model quality {model_quality} outside [0,1]"));
    }
    let noise = if state.noise_std > 0.0 {
        Normal::new(0.0, state.noise_std)
            .map_err(|e| Error::Contract(format!("noise std: {e}")))?
            .sample(rng)
    } else {
        0.0
    };
    let q = state.coupling * state.q + (1.0 - state.coupling) * model_quality + noise;
    Ok(FeedbackQuality { q: q.clamp(0.0, 1.0), ..state })
}

/// Keep each label with probability `q`, else swap in a uniformly drawn different one.
pub fn corrupt_labels<R: Rng + ?Sized>(
    labels: &[usize],
    q: f64,
    class_count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if class_count < 2 {
        return contract("corruption needs at least two classes");
    }
    if let Some(l) = labels.iter().find(|&&l| l >= class_count) {
        return contract(format!("label {l} not below class count {class_count}"));
    }
    Ok(labels
        .iter()
        .map(|&l| {
            if rng.random::<f64>() < q {
                l
            } else {
                let r = rng.random_range(0..class_count - 1);
                if r >= l {
                    r + 1
                } else {
                    r
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub threshold: f64,
    pub history: QualityHistory,
    pub last_accept_error_prob: f64,
}

impl FilterState {
    /// Starts from the base model's validation mean.
    pub fn seeded(threshold: f64, base_validation_mean: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return contract(format!("threshold {threshold} not in (0,1)"));
        }
        let history = QualityHistory::from_values(&[base_validation_mean])?;
        let last_accept_error_prob = 1.0 - moving_average(&history)?;
        Ok(Self { threshold, history, last_accept_error_prob })
    }

    /// Record one generation's validation mean.
    pub fn push(&mut self, validation_mean: f64) -> Result<()> {
        self.history.push(validation_mean)?;
        self.last_accept_error_prob = 1.0 - moving_average(&self.history)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub id: String,
    pub article_id: String,
    pub summary: Vec<String>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    AboveThreshold,
    StochasticErrorAccept,
    Rejected,
    RandomKeep,
    RandomDrop,
    Passthrough,
}

impl Reason {
    pub fn accepts(self) -> bool {
        !matches!(self, Reason::Rejected | Reason::RandomDrop)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub candidate_id: String,
    pub accepted: bool,
    pub reason: Reason,
}

impl FilterDecision {
    fn new(c: &ScoredCandidate, reason: Reason) -> Self {
        Self { candidate_id: c.id.clone(), accepted: reason.accepts(), reason }
    }
}

pub type FilterOutput = (Vec<ScoredCandidate>, Vec<FilterDecision>);

/// Threshold filter that lets a sub-threshold candidate through with
/// probability `1 - SMA(history)`. The history itself is left alone.
pub fn quality_filter<R: Rng + ?Sized>(
    candidates: &[ScoredCandidate],
    state: &FilterState,
    rng: &mut R,
) -> Result<(Vec<ScoredCandidate>, Vec<FilterDecision>, FilterState)> {
    let p_err = 1.0 - moving_average(&state.history)?;
    let mut selected = Vec::new();
    let mut decisions = Vec::with_capacity(candidates.len());
    for c in candidates {
        let reason = if c.score >= state.threshold {
            Reason::AboveThreshold
        } else if rng.random::<f64>() < p_err {
            Reason::StochasticErrorAccept
        } else {
            Reason::Rejected
        };
        if reason.accepts() {
            selected.push(c.clone());
        }
        decisions.push(FilterDecision::new(c, reason));
    }
    let next = FilterState { last_accept_error_prob: p_err, ..state.clone() };
    Ok((selected, decisions, next))
}

/// Uniform sample of exactly `target` candidates, input order kept.
pub fn random_filter<R: Rng + ?Sized>(
    candidates: &[ScoredCandidate],
    target: usize,
    rng: &mut R,
) -> Result<FilterOutput> {
    if target > candidates.len() {
        return contract(format!("cannot keep {target} of {} candidates", candidates.len()));
    }
    let mut keep = vec![false; candidates.len()];
    for i in sample(rng, candidates.len(), target) {
        keep[i] = true;
    }
    let mut selected = Vec::with_capacity(target);
    let mut decisions = Vec::with_capacity(candidates.len());
    for (c, &k) in candidates.iter().zip(&keep) {
        if k {
            selected.push(c.clone());
        }
        decisions.push(FilterDecision::new(c, if k { Reason::RandomKeep } else { Reason::RandomDrop }));
    }
    Ok((selected, decisions))
}

pub fn no_filter(candidates: &[ScoredCandidate]) -> FilterOutput {
    let decisions = candidates.iter().map(|c| FilterDecision::new(c, Reason::Passthrough)).collect();
    (candidates.to_vec(), decisions)
}

/// One JSON object per decision, one per line.
pub fn write_decisions<W: Write>(out: &mut W, decisions: &[FilterDecision]) -> Result<()> {
    for d in decisions {
        serde_json::to_writer(&mut *out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
