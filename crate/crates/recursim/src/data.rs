//! Datasets: 64-feature labelled vectors and templated article/summary pairs,
//! with synthetic generators, partitioning and file I/O.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::metrics::tokenize;

pub const FEATURES: usize = 64;
pub const CLASSES: usize = 10;
pub const FEATURE_MAX: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: usize) -> Result<Self> {
        if features.len() != FEATURES {
            return contract(format!("expected {FEATURES} features, got {}", features.len()));
        }
        if let Some(v) = features.iter().find(|v| !(0.0..=FEATURE_MAX).contains(*v)) {
            return contract(format!("feature value {v} outside [0,{FEATURE_MAX}]"));
        }
        Ok(Self { features, label })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorDataset {
    pub samples: Vec<LabeledSample>,
    pub class_count: usize,
}

impl VectorDataset {
    pub fn new(samples: Vec<LabeledSample>, class_count: usize) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.label >= class_count) {
            return contract(format!("label {} not below class count {class_count}", s.label));
        }
        Ok(Self { samples, class_count })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            class_count: self.class_count,
        }
    }

    /// Same features, labels replaced positionally.
    pub fn relabel(&self, labels: &[usize]) -> Self {
        assert_eq!(labels.len(), self.len(), "relabel length mismatch");
        Self {
            samples: self
                .samples
                .iter()
                .zip(labels)
                .map(|(s, &label)| LabeledSample { features: s.features.clone(), label })
                .collect(),
            class_count: self.class_count,
        }
    }
}

pub fn load_vector_dataset(path: &Path) -> Result<VectorDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let fail = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.len() != FEATURES + 1 {
            return Err(fail(line, format!("expected {} columns, found {}", FEATURES + 1, record.len())));
        }
        let mut features = Vec::with_capacity(FEATURES);
        for (col, field) in record.iter().take(FEATURES).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| fail(line, format!("column {}: not a number: {field:?}", col + 1)))?;
            if !(0.0..=FEATURE_MAX).contains(&v) {
                return Err(fail(line, format!("column {}: value {v} outside [0,16]", col + 1)));
            }
            features.push(v);
        }
        let raw = record[FEATURES].trim();
        let label: usize = raw
            .parse()
            .map_err(|_| fail(line, format!("label is not a class index: {raw:?}")))?;
        if label >= CLASSES {
            return Err(fail(line, format!("label {label} outside [0,{}]", CLASSES - 1)));
        }
        samples.push(LabeledSample { features, label });
    }
    Ok(VectorDataset { samples, class_count: CLASSES })
}

pub fn write_vector_dataset(path: &Path, data: &VectorDataset) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    for s in &data.samples {
        let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        row.push(s.label.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Geometry of the synthetic digit clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitsConfig {
    /// Distance of each class centre from the midpoint 8, along a ±1 code word.
    pub separation: f64,
    /// Sub-clusters ("writing styles") per class.
    pub styles: usize,
    pub style_spread: f64,
    pub noise_std: f64,
}

impl Default for DigitsConfig {
    fn default() -> Self {
        Self { separation: 0.6, styles: 16, style_spread: 2.5, noise_std: 1.0 }
    }
}

fn hadamard_entry(row: usize, col: usize) -> f64 {
    if (row & col).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn synth_digits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<VectorDataset> {
    synth_digits_with(n, CLASSES, &DigitsConfig::default(), rng)
}

/// Each class centre is `8 + separation * h` for a distinct non-constant
/// Hadamard row `h` (columns sign-flipped at random); samples come from
/// per-class style centres plus isotropic noise, clipped to [0,16].
pub fn synth_digits_with<R: Rng + ?Sized>(
    n: usize,
    class_count: usize,
    cfg: &DigitsConfig,
    rng: &mut R,
) -> Result<VectorDataset> {
    if class_count == 0 || class_count >= FEATURES {
        return contract(format!("class count {class_count} must be in 1..{FEATURES}"));
    }
    if n < class_count {
        return contract(format!("need at least {class_count} samples, asked for {n}"));
    }
    if cfg.styles == 0 {
        return contract("digit config needs at least one style per class");
    }
    let spread = Normal::new(0.0, cfg.style_spread)
        .map_err(|e| Error::Contract(format!("style spread: {e}")))?;
    let noise =
        Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Contract(format!("noise std: {e}")))?;

    let mut rows: Vec<usize> = (1..FEATURES).collect();
    rows.shuffle(rng);
    let signs: Vec<f64> = (0..FEATURES).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let mut styles = Vec::with_capacity(class_count);
    for &row in rows.iter().take(class_count) {
        let base: Vec<f64> = (0..FEATURES)
            .map(|j| 8.0 + cfg.separation * hadamard_entry(row, j) * signs[j])
            .collect();
        let class_styles: Vec<Vec<f64>> = (0..cfg.styles)
            .map(|_| base.iter().map(|b| b + spread.sample(rng)).collect())
            .collect();
        styles.push(class_styles);
    }

    let mut labels: Vec<usize> = (0..n).map(|i| i % class_count).collect();
    labels.shuffle(rng);
    let samples = labels
        .into_iter()
        .map(|label| {
            let centre = &styles[label][rng.random_range(0..cfg.styles)];
            let features = centre
                .iter()
                .map(|c| (c + noise.sample(rng)).clamp(0.0, FEATURE_MAX))
                .collect();
            LabeledSample { features, label }
        })
        .collect();
    Ok(VectorDataset { samples, class_count })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TextPair {
    pub id: String,
    pub article: Vec<String>,
    pub reference: Vec<String>,
}

const SUBJECTS: [&str; 8] = ["council", "harbor", "clinic", "river", "market", "station", "orchard", "league"];
const VERBS: [&str; 8] = ["approves", "reopens", "expands", "floods", "reports", "closes", "harvests", "hosts"];
const OBJECTS: [&str; 8] = ["budget", "pier", "ward", "valley", "prices", "platform", "apples", "finals"];
const QUALIFIERS: [&str; 8] = ["today", "again", "early", "overnight", "weekly", "briefly", "slowly", "tonight"];
const FILLERS: [&str; 8] = ["report", "data", "result", "method", "study", "value", "record", "season"];

/// Shape of the templated corpus.
///
/// Every article opens with its key sentence `in the <s> <v> <o> <q> <s> ...`
/// (a topic's four slot words cycled to 10-20 tokens), which is also the
/// reference. The remainder is filler prose over a per-article subset of
/// generic words; a `lead_in_rate` share of filler clauses reuse the
/// `in the` opener.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub topics: usize,
    pub filler_vocab: usize,
    pub fillers_per_article: usize,
    pub lead_in_rate: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { topics: 2, filler_vocab: 6, fillers_per_article: 3, lead_in_rate: 0.03 }
    }
}

impl CorpusConfig {
    fn validate(&self) -> Result<()> {
        if self.topics == 0 || self.topics > SUBJECTS.len() {
            return contract(format!("topics must be in 1..={}", SUBJECTS.len()));
        }
        if self.filler_vocab == 0 || self.filler_vocab > FILLERS.len() {
            return contract(format!("filler vocabulary must be in 1..={}", FILLERS.len()));
        }
        if self.fillers_per_article == 0 || self.fillers_per_article > self.filler_vocab {
            return contract("fillers per article must be in 1..=filler vocabulary");
        }
        if !(0.0..=1.0).contains(&self.lead_in_rate) {
            return contract("lead-in rate must be a probability");
        }
        Ok(())
    }
}

pub fn synth_corpus<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<TextPair>> {
    synth_corpus_with(n, &CorpusConfig::default(), rng)
}

pub fn synth_corpus_with<R: Rng + ?Sized>(
    n: usize,
    cfg: &CorpusConfig,
    rng: &mut R,
) -> Result<Vec<TextPair>> {
    if n == 0 {
        return contract("corpus size must be at least 1");
    }
    cfg.validate()?;
    let s = |w: &str| w.to_string();
    let mut out = Vec::with_capacity(n);
    for idx in 0..n {
        let topic = rng.random_range(0..cfg.topics);
        let slots = [SUBJECTS[topic], VERBS[topic], OBJECTS[topic], QUALIFIERS[topic]];
        let key_len = rng.random_range(10..=20);
        let mut reference = vec![s("in"), s("the")];
        reference.extend((0..key_len - 2).map(|i| s(slots[i % 4])));

        let mut pool: Vec<&str> = FILLERS[..cfg.filler_vocab].to_vec();
        pool.shuffle(rng);
        pool.truncate(cfg.fillers_per_article);
        let article_len = rng.random_range(60..=120);
        let mut article = reference.clone();
        while article.len() < article_len {
            let lead_in = rng.random::<f64>() < cfg.lead_in_rate;
            let joiner = if rng.random::<bool>() { "is" } else { "of" };
            let mut f = || s(pool[rng.random_range(0..pool.len())]);
            let clause = if lead_in {
                vec![s("in"), s("the"), f(), s("of"), s("the"), f()]
            } else {
                vec![s("the"), f(), s(joiner), f()]
            };
            article.extend(clause);
        }
        article.truncate(article_len);
        out.push(TextPair { id: format!("a{idx:05}"), article, reference });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    id: String,
    article: String,
    reference: String,
}

pub fn write_corpus(path: &Path, pairs: &[TextPair]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in pairs {
        let line = CorpusLine {
            id: p.id.clone(),
            article: p.article.join(" "),
            reference: p.reference.join(" "),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Vec<TextPair>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |msg: String| Error::Parse { path: path.to_path_buf(), line: i + 1, msg };
        let rec: CorpusLine = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        let pair = TextPair {
            article: tokenize(&rec.article),
            reference: tokenize(&rec.reference),
            id: rec.id,
        };
        if pair.article.is_empty() || pair.reference.is_empty() {
            return Err(fail("article and reference must be non-empty".into()));
        }
        if !seen.insert(pair.id.clone()) {
            return Err(fail(format!("duplicate id {:?}", pair.id)));
        }
        out.push(pair);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusPartitions {
    pub generation: Vec<TextPair>,
    pub validation: Vec<TextPair>,
    pub test: Vec<TextPair>,
}

/// Shuffle, take `test_count` for test, then split the remainder by the two
/// fractions (rounded); fractions summing to 1 use every pair.
pub fn partition<R: Rng + ?Sized>(
    pairs: &[TextPair],
    gen_fraction: f64,
    val_fraction: f64,
    test_count: usize,
    rng: &mut R,
) -> Result<CorpusPartitions> {
    if !(gen_fraction > 0.0 && val_fraction > 0.0) {
        return contract("partition fractions must be positive");
    }
    if gen_fraction + val_fraction > 1.0 + 1e-12 {
        return contract("partition fractions sum above 1");
    }
    if test_count > pairs.len() {
        return contract(format!("test count {test_count} exceeds {} pairs", pairs.len()));
    }
    let rest = pairs.len() - test_count;
    let n_gen = (gen_fraction * rest as f64).round() as usize;
    let n_val = ((val_fraction * rest as f64).round() as usize).min(rest - n_gen.min(rest));
    if n_gen == 0 || n_val == 0 || n_gen + n_val > rest {
        return contract(format!(
            "infeasible split of {rest} pairs into {gen_fraction}/{val_fraction}"
        ));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(rng);
    let take = |ix: &[usize]| ix.iter().map(|&i| pairs[i].clone()).collect::<Vec<_>>();
    Ok(CorpusPartitions {
        test: take(&order[..test_count]),
        generation: take(&order[test_count..test_count + n_gen]),
        validation: take(&order[test_count + n_gen..test_count + n_gen + n_val]),
    })
}
