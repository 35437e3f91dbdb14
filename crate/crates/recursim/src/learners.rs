//! Trainable models: softmax regression fitted by per-sample SGD, k-NN label
//! retrieval, a small evolutionary population over softmax models, and an
//! order-2 Markov summarizer.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{VectorDataset, FEATURES, FEATURE_MAX};
use crate::error::{contract, Error, Result};

/// Linear softmax classifier over features scaled by 1/16.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub class_count: usize,
    /// Row-major `class_count x 64`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

fn scaled(features: &[f64]) -> Vec<f64> {
    features.iter().map(|v| v / FEATURE_MAX).collect()
}

impl SoftmaxModel {
    pub fn zeros(class_count: usize) -> Self {
        Self {
            class_count,
            weights: vec![0.0; class_count * FEATURES],
            biases: vec![0.0; class_count],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// Class scores for already-scaled inputs.
    fn scores_scaled(&self, x: &[f64]) -> Vec<f64> {
        (0..self.class_count)
            .map(|c| {
                let row = &self.weights[c * FEATURES..(c + 1) * FEATURES];
                self.biases[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn scores(&self, features: &[f64]) -> Vec<f64> {
        self.scores_scaled(&scaled(features))
    }

    /// Cross-entropy of the true label and its gradient (weights row-major, then biases).
    pub fn loss_and_gradient(&self, features: &[f64], label: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let x = scaled(features);
        let (loss, p) = softmax_loss(&self.scores_scaled(&x), label);
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.biases.len()];
        for c in 0..self.class_count {
            let d = p[c] - if c == label { 1.0 } else { 0.0 };
            gb[c] = d;
            for (g, v) in gw[c * FEATURES..(c + 1) * FEATURES].iter_mut().zip(&x) {
                *g = d * v;
            }
        }
        (loss, gw, gb)
    }

    pub fn loss(&self, features: &[f64], label: usize) -> f64 {
        softmax_loss(&self.scores(features), label).0
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|v| v.is_finite())
    }
}

/// Returns (-log p[label], p) using a max-shifted log-sum-exp.
fn softmax_loss(scores: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + m - scores[label];
    (loss, exps.into_iter().map(|e| e / z).collect())
}

pub fn sgd_train<R: Rng + ?Sized>(
    model: SoftmaxModel,
    data: &VectorDataset,
    epochs: usize,
    learning_rate: f64,
    rng: &mut R,
) -> Result<SoftmaxModel> {
    if learning_rate.is_nan() || learning_rate <= 0.0 {
        return contract(format!("learning rate {learning_rate} must be positive"));
    }
    if data.is_empty() {
        return contract("cannot train on an empty dataset");
    }
    if let Some(s) = data.samples.iter().find(|s| s.label >= model.class_count) {
        return contract(format!("label {} outside model's {} classes", s.label, model.class_count));
    }
    let mut m = model;
    let xs: Vec<Vec<f64>> = data.samples.iter().map(|s| scaled(&s.features)).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(rng);
        for &i in &order {
            let x = &xs[i];
            let y = data.samples[i].label;
            let (loss, p) = softmax_loss(&m.scores_scaled(x), y);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, sample: i });
            }
            for (c, pc) in p.into_iter().enumerate() {
                let d = learning_rate * (pc - if c == y { 1.0 } else { 0.0 });
                m.biases[c] -= d;
                for (w, v) in m.weights[c * FEATURES..(c + 1) * FEATURES].iter_mut().zip(x) {
                    *w -= d * v;
                }
            }
        }
        if !m.is_finite() {
            return Err(Error::Diverged { epoch, sample: order[order.len() - 1] });
        }
    }
    Ok(m)
}

/// Arg-max class; ties go to the lowest index.
pub fn sgd_predict(model: &SoftmaxModel, features: &[f64]) -> usize {
    argmax(&model.scores(features))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}

/// Per-sample 0/1 correctness on `data`.
pub fn correctness(model: &SoftmaxModel, data: &VectorDataset) -> Vec<f64> {
    data.samples
        .iter()
        .map(|s| if sgd_predict(model, &s.features) == s.label { 1.0 } else { 0.0 })
        .collect()
}

pub fn model_accuracy(model: &SoftmaxModel, data: &VectorDataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    correctness(model, data).iter().sum::<f64>() / data.len() as f64
}

pub fn knn_label(train: &VectorDataset, features: &[f64], k: usize) -> Result<usize> {
    if k == 0 {
        return contract("k must be at least 1");
    }
    if train.len() < k {
        return contract(format!("k = {k} exceeds {} training samples", train.len()));
    }
    let mut dist: Vec<(f64, usize)> = train
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let d: f64 = s.features.iter().zip(features).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; train.class_count];
    for &(_, i) in &dist[..k] {
        votes[train.samples[i].label] += 1;
    }
    let mut best = 0;
    for (label, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = label;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<SoftmaxModel>,
    pub fitness: Vec<f64>,
}

impl Population {
    pub fn evaluate(members: Vec<SoftmaxModel>, eval_set: &VectorDataset) -> Self {
        let fitness = members.iter().map(|m| model_accuracy(m, eval_set)).collect();
        Self { members, fitness }
    }

    /// Member indices, best first; equal fitness keeps the lower index first.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.members.len()).collect();
        idx.sort_by(|&a, &b| self.fitness[b].total_cmp(&self.fitness[a]).then(a.cmp(&b)));
        idx
    }

    pub fn best(&self) -> usize {
        self.ranking()[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EaConfig {
    pub population: usize,
    pub parents: usize,
    pub mutation_std: f64,
    pub child_epochs: usize,
    pub learning_rate: f64,
}

impl Default for EaConfig {
    fn default() -> Self {
        Self { population: 4, parents: 2, mutation_std: 0.01, child_epochs: 15, learning_rate: 0.25 }
    }
}

/// One generation: rank on `eval_set`, keep the parents, breed the rest by
/// uniform crossover + Gaussian mutation + SGD on `train_pool`, re-score all.
pub fn ea_step<R: Rng + ?Sized>(
    population: Population,
    train_pool: &VectorDataset,
    eval_set: &VectorDataset,
    cfg: &EaConfig,
    rng: &mut R,
) -> Result<Population> {
    let size = population.members.len();
    if size != cfg.population {
        return contract(format!("population has {size} members, expected {}", cfg.population));
    }
    if cfg.parents == 0 || cfg.parents >= size {
        return contract(format!("parents must be in 1..{size}"));
    }
    if train_pool.is_empty() || eval_set.is_empty() {
        return contract("evolution step needs non-empty training and evaluation sets");
    }
    let mutation = Normal::new(0.0, cfg.mutation_std)
        .map_err(|e| Error::Contract(format!("mutation std: {e}")))?;
    let ranked = Population::evaluate(population.members, eval_set);
    let order = ranked.ranking();
    let parents: Vec<&SoftmaxModel> = order[..cfg.parents].iter().map(|&i| &ranked.members[i]).collect();

    let mut next: Vec<SoftmaxModel> = parents.iter().map(|&p| p.clone()).collect();
    for c in 0..size - cfg.parents {
        let a = parents[c % cfg.parents];
        let b = parents[(c + 1) % cfg.parents];
        let mut pick = |x: f64, y: f64| (if rng.random::<bool>() { x } else { y }) + mutation.sample(rng);
        let child = SoftmaxModel {
            class_count: a.class_count,
            weights: a.weights.iter().zip(&b.weights).map(|(&x, &y)| pick(x, y)).collect(),
            biases: a.biases.iter().zip(&b.biases).map(|(&x, &y)| pick(x, y)).collect(),
        };
        next.push(sgd_train(child, train_pool, cfg.child_epochs, cfg.learning_rate, rng)?);
    }
    Ok(Population::evaluate(next, eval_set))
}

type Context = (String, String);

/// Order-2 token chain; candidates present in the article being summarized
/// get their weight multiplied by `1 + bias`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarkovSummarizer {
    pub bias: f64,
    transitions: BTreeMap<Context, BTreeMap<String, u64>>,
}

impl MarkovSummarizer {
    pub fn new(bias: f64) -> Self {
        Self { bias, transitions: BTreeMap::new() }
    }

    /// Count every (t[i], t[i+1]) -> t[i+2] triple.
    pub fn observe(&mut self, tokens: &[String]) {
        for w in tokens.windows(3) {
            *self
                .transitions
                .entry((w[0].clone(), w[1].clone()))
                .or_default()
                .entry(w[2].clone())
                .or_insert(0) += 1;
        }
    }

    pub fn count(&self, a: &str, b: &str, next: &str) -> u64 {
        self.transitions
            .get(&(a.to_string(), b.to_string()))
            .and_then(|t| t.get(next))
            .copied()
            .unwrap_or(0)
    }

    pub fn continuations(&self, a: &str, b: &str) -> Option<&BTreeMap<String, u64>> {
        self.transitions.get(&(a.to_string(), b.to_string()))
    }

    pub fn total_count(&self) -> u64 {
        self.transitions.values().flat_map(|t| t.values()).sum()
    }

    pub fn context_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn vocabulary(&self) -> HashSet<&str> {
        let mut v = HashSet::new();
        for ((a, b), next) in &self.transitions {
            v.insert(a.as_str());
            v.insert(b.as_str());
            v.extend(next.keys().map(String::as_str));
        }
        v
    }
}

pub fn summarize<R: Rng + ?Sized>(
    model: &MarkovSummarizer,
    article: &[String],
    max_len: usize,
    rng: &mut R,
) -> Vec<String> {
    let mut out: Vec<String> = article.iter().take(2.min(max_len)).cloned().collect();
    if out.len() < 2 {
        return out;
    }
    let present: HashSet<&str> = article.iter().map(String::as_str).collect();
    while out.len() < max_len {
        let n = out.len();
        let Some(table) = model.continuations(&out[n - 2], &out[n - 1]) else {
            break;
        };
        let weight = |tok: &str, c: u64| {
            c as f64 * if present.contains(tok) { 1.0 + model.bias } else { 1.0 }
        };
        let total: f64 = table.iter().map(|(t, &c)| weight(t, c)).sum();
        if total.is_nan() || total <= 0.0 {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut chosen = None;
        for (t, &c) in table {
            let w = weight(t, c);
            if w > 0.0 {
                chosen = Some(t);
                if u < w {
                    break;
                }
                u -= w;
            }
        }
        match chosen {
            Some(t) => out.push(t.clone()),
            None => break,
        }
    }
    out
}

/// Adds the triples of every summary; the articles only give context.
pub fn fine_tune_summarizer(
    mut model: MarkovSummarizer,
    pairs: &[(&[String], &[String])],
) -> MarkovSummarizer {
    for (_, summary) in pairs {
        model.observe(summary);
    }
    model
}

#[derive(Serialize, Deserialize)]
struct TransitionRow {
    context: [String; 2],
    next: BTreeMap<String, u64>,
}

#[derive(Serialize, Deserialize)]
struct MarkovRepr {
    bias: f64,
    transitions: Vec<TransitionRow>,
}

impl Serialize for MarkovSummarizer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MarkovRepr {
            bias: self.bias,
            transitions: self
                .transitions
                .iter()
                .map(|((a, b), next)| TransitionRow { context: [a.clone(), b.clone()], next: next.clone() })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MarkovSummarizer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MarkovRepr::deserialize(d)?;
        let mut m = MarkovSummarizer::new(repr.bias);
        for row in repr.transitions {
            let [a, b] = row.context;
            m.transitions.entry((a, b)).or_default().extend(row.next);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_digits, LabeledSample};
    use crate::metrics::tokenize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_model_predicts_class_zero() {
        let m = SoftmaxModel::zeros(10);
        assert_eq!(sgd_predict(&m, &[3.0; 64]), 0);
    }

    #[test]
    fn dominant_bias_wins() {
        let mut m = SoftmaxModel::zeros(10);
        m.biases[7] = 10.0;
        assert_eq!(sgd_predict(&m, &[16.0; 64]), 7);
        assert_eq!(sgd_predict(&m, &[0.0; 64]), 7);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let data = synth_digits(50, &mut rng(0)).unwrap();
        let mut m = SoftmaxModel::zeros(10);
        m.weights[5] = 0.3;
        let out = sgd_train(m.clone(), &data, 0, 0.1, &mut rng(1)).unwrap();
        assert_eq!(out, m);
        assert!(sgd_train(m.clone(), &data, 1, 0.0, &mut rng(1)).is_err());
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let data = synth_digits(100, &mut rng(0)).unwrap();
        let err = sgd_train(SoftmaxModel::zeros(10), &data, 5, f64::MAX, &mut rng(1)).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn knn_basic_cases() {
        let mut samples = Vec::new();
        for i in 0..6 {
            samples.push(LabeledSample::new(vec![i as f64; 64], if i < 5 { 3 } else { 1 }).unwrap());
        }
        let train = VectorDataset::new(samples, 10).unwrap();
        assert_eq!(knn_label(&train, &[0.0; 64], 5).unwrap(), 3);
        assert_eq!(knn_label(&train, &[5.0; 64], 1).unwrap(), 1);
        assert!(knn_label(&train, &[0.0; 64], 7).is_err());
    }

    #[test]
    fn ea_identical_parents() {
        let data = synth_digits(60, &mut rng(2)).unwrap();
        let m = SoftmaxModel::zeros(10);
        let pop = Population::evaluate(vec![m.clone(); 4], &data);
        let cfg = EaConfig { child_epochs: 0, ..EaConfig::default() };
        let next = ea_step(pop, &data, &data, &cfg, &mut rng(3)).unwrap();
        assert_eq!(next.members.len(), 4);
        assert_eq!(next.members[0], m);
        assert_eq!(next.members[1], m);
        for child in &next.members[2..] {
            assert!(child.weights.iter().all(|w| w.abs() < 0.1));
            assert_ne!(child, &m);
        }
    }

    #[test]
    fn markov_counts_and_empty_model() {
        let s = tokenize("a b c");
        let m = fine_tune_summarizer(MarkovSummarizer::new(1.0), &[(&s[..], &s[..])]);
        assert_eq!(m.count("a", "b", "c"), 1);
        assert_eq!(m.total_count(), 1);
        let art = tokenize("x y z w");
        assert_eq!(summarize(&MarkovSummarizer::new(1.0), &art, 10, &mut rng(0)), tokenize("x y"));
        assert_eq!(summarize(&MarkovSummarizer::new(1.0), &art, 1, &mut rng(0)), tokenize("x"));
        let unchanged = fine_tune_summarizer(m.clone(), &[]);
        assert_eq!(unchanged, m);
    }

    #[test]
    fn markov_json_round_trip() {
        let mut m = MarkovSummarizer::new(0.5);
        m.observe(&tokenize("in the harbor reopens the pier in the harbor closes"));
        let js = serde_json::to_string(&m).unwrap();
        let back: MarkovSummarizer = serde_json::from_str(&js).unwrap();
        assert_eq!(back, m);
    }
}
