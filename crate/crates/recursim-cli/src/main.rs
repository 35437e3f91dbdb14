use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use recursim::data::{synth_corpus_with, synth_digits_with, write_corpus, write_vector_dataset, CLASSES};
use recursim::engine::{
    mean_trajectory, run_experiment1, run_experiment2, substream, write_trajectories_csv, Exp1Arm,
    Exp1Config, Exp2Arm, Exp2Config, Trajectory,
};
use recursim::feedback::write_decisions;
use recursim::metrics::{bootstrap_ci, rouge_l_f1, tokenize};

#[derive(Parser)]
#[command(name = "recursim", version, about = "Recursive self-training simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classifier retrained on feedback labels whose quality tracks its own accuracy
    Exp1(Exp1Args),
    /// Summarizer fine-tuned on its own filtered outputs
    Exp2(Exp2Args),
    /// ROUGE-L F1 of candidate lines against reference lines, with a bootstrap CI
    Score(ScoreArgs),
    /// Write a synthetic dataset or corpus
    Synth(SynthArgs),
}

#[derive(Args)]
struct Exp1Args {
    /// Flat TOML file of config keys; flags given on the command line override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for exp1.csv and exp1_manifest.json
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "baseline,rag,ea,ea_rag")]
    arms: Vec<Exp1Arm>,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    /// Vector CSV (64 features then label, no header); synthetic digits when omitted
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.25)]
    learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    knn_k: usize,
    #[arg(long, default_value_t = 4)]
    population: usize,
    #[arg(long, default_value_t = 2)]
    parents: usize,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct Exp2Args {
    /// Flat TOML file of config keys; flags given on the command line override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for exp2.csv and exp2_manifest.json
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "control,random_filter,quality_filter")]
    arms: Vec<Exp2Arm>,
    #[arg(long, default_value_t = 5)]
    generations: usize,
    #[arg(long, default_value_t = 100)]
    candidates: usize,
    #[arg(long, default_value_t = 0.15)]
    threshold: f64,
    #[arg(long, default_value_t = 50)]
    test_count: usize,
    /// JSONL corpus with id, article and reference fields; synthetic when omitted
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Measure the quality arm's net change from its generation-1 score
    #[arg(long = "paper-net-change")]
    net_from_generation_one: bool,
    /// Write filter decisions as JSONL, one file per seed, arm and generation
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// One candidate text per line
    candidates: PathBuf,
    /// One reference text per line
    references: PathBuf,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Vector CSV of 64-feature digit-like samples
    Digits,
    /// JSONL article/reference corpus
    Corpus,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(value_enum)]
    kind: SynthKind,
    /// Output file
    #[arg(long)]
    out: PathBuf,
    /// Sample count (defaults: 3000 digits, 650 corpus pairs)
    #[arg(long)]
    n: Option<usize>,
    /// Same seed as an exp1/exp2 run reproduces that run's synthetic data
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    version: String,
    seeds: Vec<u64>,
    config: serde_json::Value,
    outputs: Vec<PathBuf>,
    duration_secs: f64,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Exp1File {
    seeds: Option<Vec<u64>>,
    arms: Option<Vec<Exp1Arm>>,
    iterations: Option<usize>,
    data_path: Option<PathBuf>,
    dataset_size: Option<usize>,
    train_fraction: Option<f64>,
    pool_fraction: Option<f64>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    epochs: Option<usize>,
    init_learning_rate: Option<f64>,
    init_target_accuracy: Option<f64>,
    init_max_epochs: Option<usize>,
    knn_k: Option<usize>,
    population: Option<usize>,
    parents: Option<usize>,
    mutation_std: Option<f64>,
    child_epochs: Option<usize>,
    feedback_q: Option<f64>,
    coupling: Option<f64>,
    noise_std: Option<f64>,
    digits_separation: Option<f64>,
    digits_styles: Option<usize>,
    digits_style_spread: Option<f64>,
    digits_noise_std: Option<f64>,
    resamples: Option<usize>,
    ci_level: Option<f64>,
    jobs: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Exp2File {
    seeds: Option<Vec<u64>>,
    arms: Option<Vec<Exp2Arm>>,
    generations: Option<usize>,
    candidates: Option<usize>,
    threshold: Option<f64>,
    corpus_path: Option<PathBuf>,
    generation_size: Option<usize>,
    validation_size: Option<usize>,
    test_count: Option<usize>,
    pretrain_articles: Option<usize>,
    summary_max_len: Option<usize>,
    continuation_bias: Option<f64>,
    eval_samples: Option<usize>,
    topics: Option<usize>,
    filler_vocab: Option<usize>,
    fillers_per_article: Option<usize>,
    lead_in_rate: Option<f64>,
    resamples: Option<usize>,
    ci_level: Option<f64>,
    jobs: Option<usize>,
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("config {}", path.display()))
}

/// Copies file values, then any flag given explicitly on the command line.
macro_rules! resolve {
    ($m:expr, $cfg:expr, $file:expr, $args:expr; $($field:ident),* $(,)?) => {
        $(
            if let Some(v) = $file.$field.take() {
                $cfg.$field = v;
            }
            if $m.value_source(stringify!($field)) == Some(ValueSource::CommandLine) {
                $cfg.$field = $args.$field.clone();
            }
        )*
    };
}

fn exp1_config(args: &Exp1Args, m: &ArgMatches) -> Result<Exp1Config> {
    let mut f: Exp1File = read_config(args.config.as_deref())?;
    let mut cfg = Exp1Config::default();
    resolve!(m, cfg, f, args; seeds, arms, iterations, batch_size, learning_rate, epochs, knn_k,
        resamples, ci_level, jobs);
    resolve!(m, cfg.ea, f, args; population, parents);
    let set = |v: &mut _, x: Option<_>| {
        if let Some(x) = x {
            *v = x;
        }
    };
    if let Some(p) = f.data_path.take() {
        cfg.data_path = Some(p);
    }
    if args.data.is_some() {
        cfg.data_path = args.data.clone();
    }
    set(&mut cfg.dataset_size, f.dataset_size);
    set(&mut cfg.init_max_epochs, f.init_max_epochs);
    set(&mut cfg.digits.styles, f.digits_styles);
    set(&mut cfg.ea.child_epochs, f.child_epochs);
    let setf = |v: &mut f64, x: Option<f64>| {
        if let Some(x) = x {
            *v = x;
        }
    };
    setf(&mut cfg.train_fraction, f.train_fraction);
    setf(&mut cfg.pool_fraction, f.pool_fraction);
    setf(&mut cfg.init_learning_rate, f.init_learning_rate);
    setf(&mut cfg.init_target_accuracy, f.init_target_accuracy);
    setf(&mut cfg.ea.mutation_std, f.mutation_std);
    setf(&mut cfg.feedback.q, f.feedback_q);
    setf(&mut cfg.feedback.coupling, f.coupling);
    setf(&mut cfg.feedback.noise_std, f.noise_std);
    setf(&mut cfg.digits.separation, f.digits_separation);
    setf(&mut cfg.digits.style_spread, f.digits_style_spread);
    setf(&mut cfg.digits.noise_std, f.digits_noise_std);
    cfg.ea.learning_rate = cfg.learning_rate;
    cfg.validate()?;
    Ok(cfg)
}

fn exp2_config(args: &Exp2Args, m: &ArgMatches) -> Result<Exp2Config> {
    let mut f: Exp2File = read_config(args.config.as_deref())?;
    let mut cfg = Exp2Config::default();
    resolve!(m, cfg, f, args; seeds, arms, generations, candidates, threshold, test_count,
        resamples, ci_level, jobs);
    if let Some(p) = f.corpus_path.take() {
        cfg.corpus_path = Some(p);
    }
    if args.corpus.is_some() {
        cfg.corpus_path = args.corpus.clone();
    }
    let set = |v: &mut usize, x: Option<usize>| {
        if let Some(x) = x {
            *v = x;
        }
    };
    set(&mut cfg.generation_size, f.generation_size);
    set(&mut cfg.validation_size, f.validation_size);
    set(&mut cfg.pretrain_articles, f.pretrain_articles);
    set(&mut cfg.summary_max_len, f.summary_max_len);
    set(&mut cfg.eval_samples, f.eval_samples);
    set(&mut cfg.corpus.topics, f.topics);
    set(&mut cfg.corpus.filler_vocab, f.filler_vocab);
    set(&mut cfg.corpus.fillers_per_article, f.fillers_per_article);
    if let Some(b) = f.continuation_bias {
        cfg.continuation_bias = b;
    }
    if let Some(r) = f.lead_in_rate {
        cfg.corpus.lead_in_rate = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_outputs(
    out: &Path,
    stem: &str,
    trajectories: &[Trajectory],
    mut manifest: RunManifest,
    extra: Vec<PathBuf>,
    started: Instant,
) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join(format!("{stem}.csv"));
    let mut buf = Vec::new();
    write_trajectories_csv(&mut buf, trajectories)?;
    fs::write(&csv_path, buf).with_context(|| format!("writing {}", csv_path.display()))?;
    let manifest_path = out.join(format!("{stem}_manifest.json"));
    manifest.outputs = std::iter::once(csv_path.clone()).chain(extra).collect();
    manifest.duration_secs = started.elapsed().as_secs_f64();
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    eprintln!("wrote {} and {}", csv_path.display(), manifest_path.display());
    Ok(())
}

fn manifest(command: &str, seeds: &[u64], config: &impl Serialize) -> Result<RunManifest> {
    Ok(RunManifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seeds: seeds.to_vec(),
        config: serde_json::to_value(config)?,
        outputs: Vec::new(),
        duration_secs: 0.0,
    })
}

fn arm_means<'a>(trajectories: &'a [Trajectory], arms: impl Iterator<Item = &'a str>) -> Vec<(&'a str, Vec<f64>)> {
    arms.map(|a| (a, mean_trajectory(trajectories, a))).filter(|(_, m)| !m.is_empty()).collect()
}

fn cmd_exp1(args: &Exp1Args, m: &ArgMatches) -> Result<()> {
    let started = Instant::now();
    let cfg = exp1_config(args, m)?;
    eprintln!("exp1: {} seeds x {} arms, {} iterations", cfg.seeds.len(), cfg.arms.len(), cfg.iterations);
    let trajectories = run_experiment1(&cfg)?;
    let man = manifest("exp1", &cfg.seeds, &cfg)?;
    write_outputs(&args.out, "exp1", &trajectories, man, Vec::new(), started)?;

    println!("{:<10} {:>9} {:>9} {:>8}", "arm", "initial", "final", "change");
    for (arm, means) in arm_means(&trajectories, cfg.arms.iter().map(|a| a.name())) {
        let (first, last) = (means[0], means[means.len() - 1]);
        println!("{arm:<10} {first:>9.4} {last:>9.4} {:>+8.4}", last - first);
    }
    Ok(())
}

fn cmd_exp2(args: &Exp2Args, m: &ArgMatches) -> Result<()> {
    let started = Instant::now();
    let cfg = exp2_config(args, m)?;
    eprintln!("exp2: {} seeds x {} arms, {} generations", cfg.seeds.len(), cfg.arms.len(), cfg.generations);
    let out = run_experiment2(&cfg)?;

    let mut extra = Vec::new();
    if let Some(dir) = &args.audit {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for e in out.audit.iter().filter(|e| cfg.arms.iter().any(|a| a.name() == e.arm)) {
            let path = dir.join(format!("seed{}_{}_gen{}.jsonl", e.seed, e.arm, e.generation));
            let mut buf = Vec::new();
            write_decisions(&mut buf, &e.decisions)?;
            fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
            extra.push(path);
        }
    }
    let man = manifest("exp2", &cfg.seeds, &cfg)?;
    write_outputs(&args.out, "exp2", &out.trajectories, man, extra, started)?;

    println!("{:<15} {:>9} {:>9} {:>10}", "arm", "base", "final", "net change");
    for (arm, means) in arm_means(&out.trajectories, cfg.arms.iter().map(|a| a.name())) {
        let base_gen = if args.net_from_generation_one && arm == Exp2Arm::QualityFilter.name() { 1 } else { 0 };
        let (base, last) = (means[base_gen], means[means.len() - 1]);
        let pct = if base > 0.0 { format!("{:+.2}%", 100.0 * (last - base) / base) } else { "n/a".into() };
        println!("{arm:<15} {base:>9.4} {last:>9.4} {pct:>10}");
    }
    Ok(())
}

#[derive(Serialize)]
struct ScoreReport {
    scores: Vec<f64>,
    summary: recursim::metrics::MetricSummary,
}

fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let cands = read(&args.candidates)?;
    let refs = read(&args.references)?;
    let (c, r): (Vec<&str>, Vec<&str>) = (cands.lines().collect(), refs.lines().collect());
    if c.len() != r.len() {
        bail!("{} candidate lines but {} reference lines", c.len(), r.len());
    }
    if c.is_empty() {
        bail!("no lines to score");
    }
    let scores: Vec<f64> = c.iter().zip(&r).map(|(a, b)| rouge_l_f1(&tokenize(a), &tokenize(b))).collect();
    let mut rng = substream(args.seed, "score", "bootstrap");
    let summary = bootstrap_ci(&scores, args.resamples, args.ci_level, &mut rng)?;
    if args.json {
        println!("{}", serde_json::to_string(&ScoreReport { scores, summary })?);
    } else {
        for (i, s) in scores.iter().enumerate() {
            println!("{}\t{s:.6}", i + 1);
        }
        println!(
            "mean {:.6} ci [{:.6}, {:.6}] n {} resamples {}",
            summary.mean, summary.ci_low, summary.ci_high, summary.n, summary.resamples
        );
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    match args.kind {
        SynthKind::Digits => {
            let cfg = Exp1Config::default();
            let n = args.n.unwrap_or(cfg.dataset_size);
            let data = synth_digits_with(n, CLASSES, &cfg.digits, &mut substream(args.seed, "exp1", "data"))?;
            write_vector_dataset(&args.out, &data)?;
        }
        SynthKind::Corpus => {
            let cfg = Exp2Config::default();
            let n = args.n.unwrap_or(cfg.generation_size + cfg.validation_size + cfg.test_count);
            let pairs = synth_corpus_with(n, &cfg.corpus, &mut substream(args.seed, "exp2", "corpus"))?;
            write_corpus(&args.out, &pairs)?;
        }
    }
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches)?;
    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand required");
    match &cli.command {
        Command::Exp1(a) => cmd_exp1(a, sub),
        Command::Exp2(a) => cmd_exp2(a, sub),
        Command::Score(a) => cmd_score(a),
        Command::Synth(a) => cmd_synth(a),
    }
}
