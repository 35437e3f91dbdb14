//! The two recursive-training experiments.
//!
//! Experiment 1 feeds a classifier labels whose reliability tracks the
//! classifier's own accuracy; experiment 2 fine-tunes a Markov summarizer on
//! its own filtered outputs. Both emit one [`Trajectory`] per (arm, seed),
//! starting with a shared generation-0 record.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    load_corpus, load_vector_dataset, partition, synth_corpus_with, synth_digits_with,
    CorpusConfig, CorpusPartitions, DigitsConfig, TextPair, VectorDataset, CLASSES,
};
use crate::error::{contract, Error, Result};
use crate::feedback::{
    corrupt_labels, no_filter, quality_filter, random_filter, update_feedback_quality,
    FeedbackQuality, FilterDecision, FilterState, ScoredCandidate,
};
use crate::learners::{
    correctness, ea_step, knn_label, model_accuracy, sgd_train, summarize, EaConfig,
    MarkovSummarizer, Population, SoftmaxModel,
};
use crate::metrics::{bootstrap_ci, rouge_l_f1, MetricSummary};

/// Independent generator for one named purpose within one (seed, scope).
pub fn substream(seed: u64, scope: &str, name: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in scope.bytes().chain(std::iter::once(b'/')).chain(name.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exp1Arm {
    Baseline,
    Rag,
    Ea,
    EaRag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exp2Arm {
    Control,
    RandomFilter,
    QualityFilter,
}

impl Exp1Arm {
    pub const ALL: [Exp1Arm; 4] = [Exp1Arm::Baseline, Exp1Arm::Rag, Exp1Arm::Ea, Exp1Arm::EaRag];

    pub fn name(self) -> &'static str {
        match self {
            Exp1Arm::Baseline => "baseline",
            Exp1Arm::Rag => "rag",
            Exp1Arm::Ea => "ea",
            Exp1Arm::EaRag => "ea_rag",
        }
    }

    fn retrieves(self) -> bool {
        matches!(self, Exp1Arm::Rag | Exp1Arm::EaRag)
    }

    fn evolves(self) -> bool {
        matches!(self, Exp1Arm::Ea | Exp1Arm::EaRag)
    }
}

impl Exp2Arm {
    pub const ALL: [Exp2Arm; 3] = [Exp2Arm::Control, Exp2Arm::RandomFilter, Exp2Arm::QualityFilter];

    pub fn name(self) -> &'static str {
        match self {
            Exp2Arm::Control => "control",
            Exp2Arm::RandomFilter => "random_filter",
            Exp2Arm::QualityFilter => "quality_filter",
        }
    }
}

impl fmt::Display for Exp1Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Exp2Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Exp1Arm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Exp1Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown experiment-1 arm {s:?}")))
    }
}

impl FromStr for Exp2Arm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Exp2Arm::RandomFilter),
            "quality" => Ok(Exp2Arm::QualityFilter),
            _ => Exp2Arm::ALL
                .into_iter()
                .find(|a| a.name() == s)
                .ok_or_else(|| Error::Contract(format!("unknown experiment-2 arm {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub experiment: String,
    pub arm: String,
    pub seed: u64,
    pub generation: usize,
    pub metric: MetricSummary,
    pub validation_mean: Option<f64>,
    pub selected_count: usize,
    pub discarded_count: usize,
    pub feedback_q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub experiment: String,
    pub arm: String,
    pub seed: u64,
    pub records: Vec<GenerationRecord>,
}

impl Trajectory {
    pub fn initial(&self) -> &GenerationRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &GenerationRecord {
        self.records.last().expect("trajectory always holds generation 0")
    }
}

fn run_parallel<T, F>(jobs: usize, seeds: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if jobs <= 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

// ---------------------------------------------------------------- experiment 1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exp1Config {
    pub seeds: Vec<u64>,
    pub arms: Vec<Exp1Arm>,
    pub iterations: usize,
    /// CSV of 64-feature rows; synthetic digits are generated when absent.
    pub data_path: Option<PathBuf>,
    pub dataset_size: usize,
    pub digits: DigitsConfig,
    pub train_fraction: f64,
    pub pool_fraction: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_learning_rate: f64,
    pub init_target_accuracy: f64,
    pub init_max_epochs: usize,
    pub knn_k: usize,
    pub ea: EaConfig,
    pub feedback: FeedbackQuality,
    pub resamples: usize,
    pub ci_level: f64,
    pub jobs: usize,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            arms: Exp1Arm::ALL.to_vec(),
            iterations: 10,
            data_path: None,
            dataset_size: 3000,
            digits: DigitsConfig::default(),
            train_fraction: 0.6,
            pool_fraction: 0.2,
            batch_size: 200,
            learning_rate: 0.25,
            epochs: 5,
            init_learning_rate: 0.25,
            init_target_accuracy: 0.93,
            init_max_epochs: 30,
            knn_k: 5,
            ea: EaConfig::default(),
            feedback: FeedbackQuality::default(),
            resamples: 1000,
            ci_level: 0.95,
            jobs: 1,
        }
    }
}

impl Exp1Config {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return contract("seeds must be non-empty");
        }
        if self.arms.is_empty() {
            return contract("arms must be non-empty");
        }
        if self.iterations == 0 {
            return contract("iterations must be at least 1");
        }
        if !(self.train_fraction > 0.0
            && self.pool_fraction > 0.0
            && self.train_fraction + self.pool_fraction < 1.0)
        {
            return contract("train_fraction and pool_fraction must be positive with sum below 1");
        }
        if self.batch_size == 0 {
            return contract("batch_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.feedback.q) || !(0.0..=1.0).contains(&self.feedback.coupling) {
            return contract("feedback q and coupling must lie in [0,1]");
        }
        if self.ea.population < 2 || self.ea.parents == 0 || self.ea.parents >= self.ea.population {
            return contract("population must exceed parents, parents at least 1");
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) || self.resamples == 0 {
            return contract("ci_level must be in (0,1) and resamples positive");
        }
        Ok(())
    }
}

struct Exp1Data {
    train: VectorDataset,
    pool: VectorDataset,
    test: VectorDataset,
}

fn split_exp1(data: &VectorDataset, cfg: &Exp1Config, seed: u64) -> Result<Exp1Data> {
    let n = data.len();
    let n_train = (cfg.train_fraction * n as f64).round() as usize;
    let n_pool = (cfg.pool_fraction * n as f64).round() as usize;
    if n_train < cfg.knn_k || n_pool < cfg.batch_size || n_train + n_pool >= n {
        return contract(format!(
            "dataset of {n} too small for the split (train {n_train}, pool {n_pool}, batch {})",
            cfg.batch_size
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "exp1", "split"));
    Ok(Exp1Data {
        train: data.subset(&order[..n_train]),
        pool: data.subset(&order[n_train..n_train + n_pool]),
        test: data.subset(&order[n_train + n_pool..]),
    })
}

fn exp1_record(
    arm: &str,
    seed: u64,
    generation: usize,
    correct: &[f64],
    q: f64,
    selected: usize,
    cfg: &Exp1Config,
) -> Result<GenerationRecord> {
    let mut rng = substream(seed, "exp1", &format!("bootstrap/{arm}/{generation}"));
    Ok(GenerationRecord {
        experiment: "exp1".into(),
        arm: arm.into(),
        seed,
        generation,
        metric: bootstrap_ci(correct, cfg.resamples, cfg.ci_level, &mut rng)?,
        validation_mean: None,
        selected_count: selected,
        discarded_count: 0,
        feedback_q: Some(q),
    })
}

/// Softmax model trained on clean data until it first reaches the target
/// test accuracy (or runs out of epochs).
pub fn initial_classifier(
    train: &VectorDataset,
    test: &VectorDataset,
    cfg: &Exp1Config,
    seed: u64,
) -> Result<SoftmaxModel> {
    let mut rng = substream(seed, "exp1", "init");
    let mut model = SoftmaxModel::zeros(train.class_count);
    for _ in 0..cfg.init_max_epochs {
        model = sgd_train(model, train, 1, cfg.init_learning_rate, &mut rng)?;
        if model_accuracy(&model, test) >= cfg.init_target_accuracy {
            break;
        }
    }
    Ok(model)
}

fn run_exp1_arm(
    arm: Exp1Arm,
    seed: u64,
    d: &Exp1Data,
    initial: &SoftmaxModel,
    gen0: &GenerationRecord,
    cfg: &Exp1Config,
) -> Result<Trajectory> {
    let name = arm.name();
    let mut batch_rng = substream(seed, name, "batch");
    let mut feedback_rng = substream(seed, name, "feedback");
    let mut train_rng = substream(seed, name, "training");
    let mut quality_rng = substream(seed, name, "quality");

    let mut records = vec![GenerationRecord { arm: name.into(), ..gen0.clone() }];
    let mut fq = cfg.feedback;
    let mut model = initial.clone();
    let mut population = None;
    if arm.evolves() {
        let noise = Normal::new(0.0, cfg.ea.mutation_std)
            .map_err(|e| Error::Contract(format!("mutation std: {e}")))?;
        let mut members = vec![initial.clone()];
        for _ in 1..cfg.ea.population {
            let mut m = initial.clone();
            for w in m.weights.iter_mut().chain(m.biases.iter_mut()) {
                *w += noise.sample(&mut train_rng);
            }
            members.push(m);
        }
        population = Some(Population { fitness: vec![0.0; members.len()], members });
    }

    for t in 1..=cfg.iterations {
        let idx = sample(&mut batch_rng, d.pool.len(), cfg.batch_size).into_vec();
        let batch = d.pool.subset(&idx);
        let labels = if arm.retrieves() {
            batch
                .samples
                .iter()
                .map(|s| knn_label(&d.train, &s.features, cfg.knn_k))
                .collect::<Result<Vec<_>>>()?
        } else {
            corrupt_labels(&batch.labels(), fq.q, batch.class_count, &mut feedback_rng)?
        };
        let fed = batch.relabel(&labels);

        let scored = if let Some(pop) = population.take() {
            let next = ea_step(pop, &fed, &fed, &cfg.ea, &mut train_rng)?;
            // the fitter of this round's children stands for the population
            let child = (cfg.ea.parents..next.members.len())
                .reduce(|a, b| if next.fitness[b] > next.fitness[a] { b } else { a })
                .expect("population has children");
            let correct = correctness(&next.members[child], &d.test);
            population = Some(next);
            correct
        } else {
            model = sgd_train(model, &fed, cfg.epochs, cfg.learning_rate, &mut train_rng)?;
            correctness(&model, &d.test)
        };
        let qm = scored.iter().sum::<f64>() / scored.len() as f64;
        fq = update_feedback_quality(fq, qm, &mut quality_rng)?;
        records.push(exp1_record(name, seed, t, &scored, fq.q, cfg.batch_size, cfg)?);
    }
    Ok(Trajectory { experiment: "exp1".into(), arm: name.into(), seed, records })
}

fn run_exp1_seed(seed: u64, shared: Option<&VectorDataset>, cfg: &Exp1Config) -> Result<Vec<Trajectory>> {
    let owned;
    let data = match shared {
        Some(d) => d,
        None => {
            owned = synth_digits_with(
                cfg.dataset_size,
                CLASSES,
                &cfg.digits,
                &mut substream(seed, "exp1", "data"),
            )?;
            &owned
        }
    };
    let d = split_exp1(data, cfg, seed)?;
    let initial = initial_classifier(&d.train, &d.test, cfg, seed)?;
    let gen0 = exp1_record("", seed, 0, &correctness(&initial, &d.test), cfg.feedback.q, 0, cfg)?;
    cfg.arms
        .iter()
        .map(|&arm| run_exp1_arm(arm, seed, &d, &initial, &gen0, cfg))
        .collect()
}

pub fn run_experiment1(cfg: &Exp1Config) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let shared = cfg.data_path.as_deref().map(load_vector_dataset).transpose()?;
    let per_seed = run_parallel(cfg.jobs, &cfg.seeds, |s| run_exp1_seed(s, shared.as_ref(), cfg))?;
    Ok(per_seed.into_iter().flatten().collect())
}

// ---------------------------------------------------------------- experiment 2

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exp2Config {
    pub seeds: Vec<u64>,
    pub arms: Vec<Exp2Arm>,
    pub generations: usize,
    pub candidates: usize,
    pub threshold: f64,
    /// JSONL corpus; a synthetic one is generated when absent.
    pub corpus_path: Option<PathBuf>,
    pub corpus: CorpusConfig,
    pub generation_size: usize,
    pub validation_size: usize,
    pub test_count: usize,
    /// Generation-set articles whose text seeds the base summarizer.
    pub pretrain_articles: usize,
    pub summary_max_len: usize,
    pub continuation_bias: f64,
    /// Summaries drawn per evaluation article; its score is their mean F1.
    pub eval_samples: usize,
    pub resamples: usize,
    pub ci_level: f64,
    pub jobs: usize,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Self {
            seeds: (0..3).collect(),
            arms: Exp2Arm::ALL.to_vec(),
            generations: 5,
            candidates: 100,
            threshold: 0.15,
            corpus_path: None,
            corpus: CorpusConfig::default(),
            generation_size: 500,
            validation_size: 100,
            test_count: 50,
            pretrain_articles: 30,
            summary_max_len: 20,
            continuation_bias: 1.0,
            eval_samples: 4,
            resamples: 1000,
            ci_level: 0.95,
            jobs: 1,
        }
    }
}

impl Exp2Config {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.arms.is_empty() {
            return contract("seeds and arms must be non-empty");
        }
        if self.generations == 0 || self.candidates == 0 {
            return contract("generations and candidates must be at least 1");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return contract("threshold must be in (0,1)");
        }
        if self.generation_size == 0 || self.validation_size == 0 || self.test_count == 0 {
            return contract("generation_size, validation_size and test_count must be positive");
        }
        if self.candidates > self.generation_size {
            return contract("candidates cannot exceed generation_size");
        }
        if self.summary_max_len == 0 || self.eval_samples == 0 || self.continuation_bias < 0.0 {
            return contract(
                "summary_max_len and eval_samples must be positive, continuation_bias non-negative",
            );
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) || self.resamples == 0 {
            return contract("ci_level must be in (0,1) and resamples positive");
        }
        Ok(())
    }
}

/// Filter decisions of one generation of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seed: u64,
    pub arm: String,
    pub generation: usize,
    pub decisions: Vec<FilterDecision>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Output {
    pub trajectories: Vec<Trajectory>,
    pub audit: Vec<AuditEntry>,
}

struct Exp2Seed<'a> {
    seed: u64,
    parts: CorpusPartitions,
    base: MarkovSummarizer,
    cfg: &'a Exp2Config,
}

impl Exp2Seed<'_> {
    /// Scores on a fixed set with a fixed stream, so successive generations
    /// and different arms face the same sampling noise.
    fn scores(&self, model: &MarkovSummarizer, set: &[TextPair], stream: &str) -> Vec<f64> {
        let mut rng = substream(self.seed, "exp2", stream);
        let k = self.cfg.eval_samples;
        set.iter()
            .map(|p| {
                (0..k)
                    .map(|_| rouge_l_f1(&summarize(model, &p.article, self.cfg.summary_max_len, &mut rng), &p.reference))
                    .sum::<f64>()
                    / k as f64
            })
            .collect()
    }

    fn validation_mean(&self, model: &MarkovSummarizer) -> f64 {
        let s = self.scores(model, &self.parts.validation, "eval/validation");
        s.iter().sum::<f64>() / s.len() as f64
    }

    fn record(
        &self,
        arm: &str,
        generation: usize,
        model: &MarkovSummarizer,
        validation_mean: f64,
        selected: usize,
    ) -> Result<GenerationRecord> {
        let scores = self.scores(model, &self.parts.test, "eval/test");
        let mut rng = substream(self.seed, "exp2", &format!("bootstrap/{generation}"));
        Ok(GenerationRecord {
            experiment: "exp2".into(),
            arm: arm.into(),
            seed: self.seed,
            generation,
            metric: bootstrap_ci(&scores, self.cfg.resamples, self.cfg.ci_level, &mut rng)?,
            validation_mean: Some(validation_mean),
            selected_count: selected,
            discarded_count: if generation == 0 { 0 } else { self.cfg.candidates - selected },
            feedback_q: None,
        })
    }

    fn run_arm(
        &self,
        arm: Exp2Arm,
        gen0: &GenerationRecord,
        targets: Option<&[usize]>,
    ) -> Result<(Trajectory, Vec<AuditEntry>)> {
        let cfg = self.cfg;
        let name = arm.name();
        let mut gen_rng = substream(self.seed, name, "generation");
        let mut filter_rng = substream(self.seed, name, "filter");
        let mut model = self.base.clone();
        let mut state = FilterState::seeded(cfg.threshold, gen0.validation_mean.unwrap_or(0.0))?;
        let mut records = vec![GenerationRecord { arm: name.into(), ..gen0.clone() }];
        let mut audit = Vec::new();

        for g in 1..=cfg.generations {
            let pool = &self.parts.generation;
            let picks = sample(&mut gen_rng, pool.len(), cfg.candidates).into_vec();
            let candidates: Vec<ScoredCandidate> = picks
                .iter()
                .enumerate()
                .map(|(i, &j)| {
                    let pair = &pool[j];
                    let summary = summarize(&model, &pair.article, cfg.summary_max_len, &mut gen_rng);
                    ScoredCandidate {
                        id: format!("g{g}-c{i:03}"),
                        article_id: pair.id.clone(),
                        score: rouge_l_f1(&summary, &pair.reference),
                        summary,
                    }
                })
                .collect();

            let (selected, decisions) = match arm {
                Exp2Arm::Control => no_filter(&candidates),
                Exp2Arm::QualityFilter => {
                    let (sel, dec, next) = quality_filter(&candidates, &state, &mut filter_rng)?;
                    state = next;
                    (sel, dec)
                }
                Exp2Arm::RandomFilter => {
                    let target = targets
                        .and_then(|t| t.get(g - 1).copied())
                        .ok_or_else(|| Error::Contract("random arm run without matched targets".into()))?;
                    random_filter(&candidates, target, &mut filter_rng)?
                }
            };
            for c in &selected {
                model.observe(&c.summary);
            }
            let val = self.validation_mean(&model);
            state.push(val)?;
            records.push(self.record(name, g, &model, val, selected.len())?);
            audit.push(AuditEntry { seed: self.seed, arm: name.into(), generation: g, decisions });
        }
        let traj = Trajectory { experiment: "exp2".into(), arm: name.into(), seed: self.seed, records };
        Ok((traj, audit))
    }
}

fn run_exp2_seed(seed: u64, shared: Option<&[TextPair]>, cfg: &Exp2Config) -> Result<Exp2Output> {
    let owned;
    let pairs = match shared {
        Some(p) => p,
        None => {
            let n = cfg.generation_size + cfg.validation_size + cfg.test_count;
            owned = synth_corpus_with(n, &cfg.corpus, &mut substream(seed, "exp2", "corpus"))?;
            &owned[..]
        }
    };
    let rest = (cfg.generation_size + cfg.validation_size) as f64;
    let parts = partition(
        pairs,
        cfg.generation_size as f64 / rest,
        cfg.validation_size as f64 / rest,
        cfg.test_count,
        &mut substream(seed, "exp2", "partition"),
    )?;
    if parts.generation.len() < cfg.candidates {
        return contract(format!(
            "generation set of {} cannot supply {} candidates",
            parts.generation.len(),
            cfg.candidates
        ));
    }
    let mut base = MarkovSummarizer::new(cfg.continuation_bias);
    for p in parts.generation.iter().take(cfg.pretrain_articles) {
        base.observe(&p.article);
    }
    let ctx = Exp2Seed { seed, parts, base, cfg };
    let gen0 = ctx.record("", 0, &ctx.base, ctx.validation_mean(&ctx.base), 0)?;

    let mut out = Exp2Output { trajectories: Vec::new(), audit: Vec::new() };
    let mut targets = None;
    let needs_quality = cfg.arms.contains(&Exp2Arm::QualityFilter) || cfg.arms.contains(&Exp2Arm::RandomFilter);
    let quality = if needs_quality {
        let (t, a) = ctx.run_arm(Exp2Arm::QualityFilter, &gen0, None)?;
        targets = Some(t.records[1..].iter().map(|r| r.selected_count).collect::<Vec<_>>());
        Some((t, a))
    } else {
        None
    };
    for &arm in &cfg.arms {
        let (t, a) = match arm {
            Exp2Arm::QualityFilter => quality.clone().expect("quality arm ran first"),
            _ => ctx.run_arm(arm, &gen0, targets.as_deref())?,
        };
        out.trajectories.push(t);
        out.audit.extend(a);
    }
    Ok(out)
}

pub fn run_experiment2(cfg: &Exp2Config) -> Result<Exp2Output> {
    cfg.validate()?;
    let shared = cfg.corpus_path.as_deref().map(load_corpus).transpose()?;
    let per_seed = run_parallel(cfg.jobs, &cfg.seeds, |s| run_exp2_seed(s, shared.as_deref(), cfg))?;
    let mut out = Exp2Output { trajectories: Vec::new(), audit: Vec::new() };
    for o in per_seed {
        out.trajectories.extend(o.trajectories);
        out.audit.extend(o.audit);
    }
    Ok(out)
}

// ---------------------------------------------------------------- output

pub const CSV_HEADER: [&str; 11] = [
    "experiment",
    "arm",
    "seed",
    "generation",
    "metric_mean",
    "ci_low",
    "ci_high",
    "validation_mean",
    "selected_count",
    "discarded_count",
    "feedback_q",
];

fn fixed6(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_trajectories_csv<W: Write>(out: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in trajectories.iter().flat_map(|t| &t.records) {
        w.write_record([
            r.experiment.clone(),
            r.arm.clone(),
            r.seed.to_string(),
            r.generation.to_string(),
            fixed6(Some(r.metric.mean)),
            fixed6(Some(r.metric.ci_low)),
            fixed6(Some(r.metric.ci_high)),
            fixed6(r.validation_mean),
            r.selected_count.to_string(),
            r.discarded_count.to_string(),
            fixed6(r.feedback_q),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Seed-averaged metric mean per generation for one arm.
pub fn mean_trajectory(trajectories: &[Trajectory], arm: &str) -> Vec<f64> {
    let runs: Vec<&Trajectory> = trajectories.iter().filter(|t| t.arm == arm).collect();
    if runs.is_empty() {
        return Vec::new();
    }
    let len = runs.iter().map(|t| t.records.len()).min().unwrap_or(0);
    (0..len)
        .map(|g| runs.iter().map(|t| t.records[g].metric.mean).sum::<f64>() / runs.len() as f64)
        .collect()
}
