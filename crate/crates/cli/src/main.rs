use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use tp_core::engine::{extract_embedding_vanilla, Extractor, TpRunConfig};
use tp_core::eval::io::{self, EmbeddingDump};
use tp_core::eval::{
    bench_time, dependency_analysis, score_datasets, sweep, transfer_task, BenchArm, EvalReport,
    LogRegConfig, SweepAxis, BENCH_REPS,
};
use tp_core::prompts::{render, PromptTemplate};
use tp_core::{synth, train_bpe, ModelConfig, ModelWeights, TpConfig, Vocab};

#[derive(Parser)]
#[command(name = "tp", version, about = "Token-prepending sentence embeddings on a toy transformer")]
struct Cli {
    /// Worker threads for embedding computation.
    #[arg(long, global = true, env = "TP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a byte-level BPE vocabulary.
    TrainVocab(TrainVocabArgs),
    /// Build seeded toy weights from a model config.
    InitModel(InitModelArgs),
    /// Write synthetic STS, sentence and classification files.
    SynthData(SynthDataArgs),
    /// Embed one sentence per input line into a TPEB dump.
    Embed(EmbedArgs),
    /// Score STS datasets (Spearman × 100).
    EvalSts(EvalStsArgs),
    /// Average STS score across a range of one layer setting.
    Sweep(SweepArgs),
    /// Time extraction against the vanilla prompt.
    Bench(BenchArgs),
    /// Pivot-token dependency summary for a sentence file.
    AnalyzeDep(AnalyzeDepArgs),
    /// Logistic-regression probe accuracy on a classification split.
    EvalTransfer(EvalTransferArgs),
}

#[derive(Args)]
struct TrainVocabArgs {
    /// Text file, one document per line. Defaults to a synthetic corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 2048)]
    size: usize,
    /// Sentences in the synthetic corpus.
    #[arg(long, default_value_t = 2000)]
    synth_sentences: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InitModelArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthDataArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pairs per STS file.
    #[arg(long, default_value_t = 200)]
    pairs: usize,
}

/// Model, vocabulary, prompt and TP settings shared by the run commands.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// `off` or a JSON run file.
    #[arg(long, default_value = "off")]
    tp: String,
    /// Built-in template name or template file; overrides the run file.
    #[arg(long)]
    template: Option<String>,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Recompute the static prompt prefix for every sentence.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args)]
struct EvalStsArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Directory of `*.tsv` STS files.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Also score the template without TP at the last layer and report deltas.
    #[arg(long)]
    compare: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    data: PathBuf,
    /// end_layer, start_layer or exit_layer.
    #[arg(long, default_value = "end_layer")]
    axis: String,
    #[arg(long)]
    from: usize,
    #[arg(long)]
    to: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = BENCH_REPS)]
    reps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeDepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalTransferArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = LogRegConfig::default().l2)]
    l2: f64,
    #[arg(long, default_value_t = LogRegConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = LogRegConfig::default().lr)]
    lr: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Provenance echoed into every JSON artifact.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config_paths: Vec<String>,
    dataset_paths: Vec<String>,
    seed: Option<u64>,
    output_paths: Vec<String>,
    tool_version: &'static str,
    wall_time_secs: f64,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config_paths: Vec::new(),
            dataset_paths: Vec::new(),
            seed: None,
            output_paths: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION"),
            wall_time_secs: 0.0,
        }
    }
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

/// Writes via a temporary file in the target directory, so the target
/// either holds the complete artifact or is left untouched.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Loaded model, vocabulary, template and TP settings.
struct Run {
    weights: ModelWeights,
    vocab: Vocab,
    template: PromptTemplate,
    tp: TpConfig,
    echo: serde_json::Value,
}

impl Run {
    fn load(args: &RunArgs, manifest: &mut RunManifest) -> Result<Self> {
        let weights = ModelWeights::load(&args.model)
            .with_context(|| format!("loading model {}", args.model.display()))?;
        let vocab = Vocab::load(&args.vocab)
            .with_context(|| format!("loading vocabulary {}", args.vocab.display()))?;
        manifest.config_paths.push(show(&args.model));
        manifest.config_paths.push(show(&args.vocab));
        manifest.seed = Some(weights.config.seed);
        let (tp, file_template) = if args.tp == "off" {
            (TpConfig::disabled(weights.config.n_layers), None)
        } else {
            let path = Path::new(&args.tp);
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading TP config {}", path.display()))?;
            let run = TpRunConfig::from_json(&text)
                .with_context(|| format!("parsing TP config {}", path.display()))?;
            manifest.config_paths.push(show(path));
            (run.tp(), Some(run.template))
        };
        tp.validate(&weights.config)?;
        let spec = args
            .template
            .clone()
            .or(file_template)
            .unwrap_or_else(|| "prompteol".to_string());
        let template = PromptTemplate::resolve(&spec)?;
        let echo = serde_json::to_value(TpRunConfig::new(&tp, &template.name))?;
        Ok(Self {
            weights,
            vocab,
            template,
            tp,
            echo,
        })
    }

    fn extractor(&self, tp: TpConfig) -> Result<Extractor<'_>> {
        Ok(Extractor::new(&self.weights, &self.vocab, self.template.clone(), tp, true)?)
    }
}

fn train_vocab(a: &TrainVocabArgs, m: &mut RunManifest) -> Result<serde_json::Value> {
    let docs = match &a.corpus {
        Some(p) => {
            m.dataset_paths.push(show(p));
            std::fs::read_to_string(p)
                .with_context(|| format!("reading corpus {}", p.display()))?
                .lines()
                .map(str::to_string)
                .collect()
        }
        None => {
            m.seed = Some(a.seed);
            synth::corpus(a.seed, a.synth_sentences)
        }
    };
    let v = train_bpe(&docs, a.size)?;
    write_atomic(&a.out, v.to_text().as_bytes())?;
    eprintln!("vocabulary: {} tokens ({} merges)", v.size(), v.merges().len());
    Ok(json!({ "size": v.size(), "merges": v.merges().len() }))
}

fn init_model(a: &InitModelArgs, m: &mut RunManifest) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))?;
    let cfg: ModelConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", a.config.display()))?;
    m.config_paths.push(show(&a.config));
    m.seed = Some(cfg.seed);
    let w = ModelWeights::init(&cfg)?;
    write_atomic(&a.out, &w.to_bytes()?)?;
    eprintln!(
        "model: {} layers, d_model {}, {} embedding rows",
        cfg.n_layers,
        cfg.d_model,
        cfg.embedding_rows()
    );
    Ok(serde_json::to_value(cfg)?)
}

fn synth_data(a: &SynthDataArgs, m: &mut RunManifest) -> Result<serde_json::Value> {
    std::fs::create_dir_all(a.out_dir.join("sts"))?;
    m.seed = Some(a.seed);
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = a.out_dir.join(name);
        write_atomic(&p, body.as_bytes())?;
        written.push(show(&p));
        Ok(())
    };
    for (i, name) in ["synth-a", "synth-b", "synth-c"].iter().enumerate() {
        let body: String = synth::sts_pairs(a.seed + i as u64, a.pairs)
            .iter()
            .map(|p| format!("{}\t{}\t{}\n", p.gold, p.sentence_a, p.sentence_b))
            .collect();
        put(&format!("sts/{name}.tsv"), body)?;
    }
    let lines = |v: Vec<String>| v.into_iter().map(|s| s + "\n").collect::<String>();
    put("sentences.txt", lines(synth::sentences(a.seed + 10, 1000)))?;
    let labeled = |seed, n| {
        synth::topic_examples(seed, n)
            .into_iter()
            .map(|e| format!("{}\t{}\n", e.label, e.text))
            .collect::<String>()
    };
    put("topic-train.tsv", labeled(a.seed + 20, 300))?;
    put("topic-test.tsv", labeled(a.seed + 21, 150))?;
    m.output_paths.extend(written.iter().cloned());
    eprintln!("wrote {} files under {}", written.len(), a.out_dir.display());
    Ok(json!({ "files": written }))
}

fn embed(a: &EmbedArgs, m: &mut RunManifest) -> Result<serde_json::Value> {
    use rayon::prelude::*;
    let run = Run::load(&a.run, m)?;
    m.dataset_paths.push(show(&a.input));
    let sentences = io::read_sentences(&a.input)?;
    let vectors: Vec<Vec<f32>> = if run.tp.enabled {
        let ex = Extractor::new(&run.weights, &run.vocab, run.template.clone(), run.tp.clone(), !a.no_cache)?;
        sentences
            .par_iter()
            .map(|s| Ok(ex.embed(s)?.vector))
            .collect::<tp_core::Result<_>>()?
    } else {
        // Vanilla path: no placeholders, causal attention, plain readout.
        sentences
            .par_iter()
            .map(|s| {
                let r = render(&run.template, s, 0, &run.vocab)?;
                Ok(extract_embedding_vanilla(&run.weights, &r, run.tp.exit_layer)?.vector)
            })
            .collect::<tp_core::Result<_>>()?
    };
    let dump = EmbeddingDump {
        dim: run.weights.d_model(),
        config: run.echo.clone(),
        vectors,
    };
    write_atomic(&a.out, &dump.to_bytes()?)?;
    eprintln!("embedded {} sentences (dim {})", dump.vectors.len(), dump.dim);
    Ok(json!({ "count": dump.vectors.len(), "dim": dump.dim, "config": run.echo }))
}

fn eval_sts(a: &EvalStsArgs, m: &mut RunManifest) -> Result<serde_json::Value> {
    let run = Run::load(&a.run, m)?;
    m.dataset_paths.push(show(&a.data));
    let datasets = io::read_sts_dir(&a.data)?;
    let ex = run.extractor(run.tp.clone())?;
    let mut report = EvalReport::evaluate(&datasets, |s| ex.embed(s), run.echo.clone())?;
    if a.compare {
        let base = run.extractor(TpConfig::disabled(run.weights.config.n_layers))?;
        report = report.with_baseline(score_datasets(&datasets, &|s: &str| base.embed(s))?);
    }
    for (name, score) in &report.scores {
        match report.delta.as_ref().and_then(|d| d.get(name)) {
            Some(d) => eprintln!("{name:>12}  {score:6.2}  ({d:+.2})"),
            None => eprintln!("{name:>12}  {score:6.2}"),
        }
    }
    eprintln!("{:>12}  {:6.2}", "average", report.average);
    Ok(serde_json::to_value(report)?)
}

fn run_sweep(a: &SweepArgs, m: &mut RunManifest) -> Result<serde_json::Value> {
    let run = Run::load(&a.run, m)?;
    m.dataset_paths.push(show(&a.data));
    if a.from > a.to {
        bail!("--from {} is after --to {}", a.from, a.to);
    }
    let axis = SweepAxis::parse(&a.axis)?;
    let datasets = io::read_sts_dir(&a.data)?;
    let values: Vec<usize> = (a.from..=a.to).collect();
    let curve = sweep(&run.weights, &run.vocab, &run.template, &datasets, &run.tp, axis, &values)?;
    for p in &curve.points {
        eprintln!("{:>4}  {:6.2}", p.value, p.average);
    }
    Ok(serde_json::to_value(curve)?)
}

fn bench(a: &BenchArgs, m: &mut RunManifest) -> Result<serde_json::Value> {
    let run = Run::load(&a.run, m)?;
    m.dataset_paths.push(show(&a.input));
    let sentences = io::read_sentences(&a.input)?;
    // Same template and output layer, prepending off.
    let vanilla = BenchArm {
        name: "vanilla".into(),
        template: run.template.clone(),
        tp: TpConfig::disabled(run.tp.exit_layer),
    };
    let mut arms = vec![vanilla.clone()];
    if run.tp.enabled {
        arms.push(BenchArm { name: "tp".into(), ..vanilla.clone() });
        arms[1].tp = run.tp.clone();
    } else {
        arms.push(BenchArm { name: "vanilla-again".into(), ..vanilla });
    }
    let result = bench_time(&run.weights, &run.vocab, &sentences, &arms, a.reps)?;
    for arm in &result.arms {
        eprintln!(
            "{:>14}  {:8.4} s  ratio {:.2}  tokens {}",
            arm.name, arm.median_secs, arm.ratio, arm.tokens
        );
    }
    Ok(serde_json::to_value(result)?)
}

fn analyze_dep(a: &AnalyzeDepArgs, m: &mut RunManifest) -> Result<serde_json::Value> {
    let run = Run::load(&a.run, m)?;
    m.dataset_paths.push(show(&a.input));
    let sentences = io::read_sentences(&a.input)?;
    let report = dependency_analysis(&run.weights, &run.vocab, &run.template, &sentences, &run.tp)?;
    for (name, s) in [("evaluated", &report.evaluated), ("vanilla", &report.vanilla)] {
        let q = &s.quartiles;
        eprintln!(
            "{name:>10}  min {:.2}  q1 {:.2}  median {:.2}  q3 {:.2}  max {:.2}  mean {:.2}",
            q.min, q.q1, q.median, q.q3, q.max, s.mean
        );
    }
    let mut v = serde_json::to_value(report)?;
    v["config"] = run.echo;
    Ok(v)
}

fn eval_transfer(a: &EvalTransferArgs, m: &mut RunManifest) -> Result<serde_json::Value> {
    let run = Run::load(&a.run, m)?;
    m.dataset_paths.push(show(&a.train));
    m.dataset_paths.push(show(&a.test));
    let train = io::read_classification(&a.train)?;
    let test = io::read_classification(&a.test)?;
    let cfg = LogRegConfig { l2: a.l2, epochs: a.epochs, lr: a.lr };
    let ex = run.extractor(run.tp.clone())?;
    let result = transfer_task(&train, &test, |s| ex.embed(s), &cfg)?;
    eprintln!(
        "accuracy {:.2} (train {:.2}, {} classes)",
        result.accuracy, result.train_accuracy, result.n_classes
    );
    Ok(json!({ "result": result, "logreg": cfg, "config": run.echo }))
}

fn execute(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let (name, out) = match &cli.command {
        Command::TrainVocab(a) => ("train-vocab", &a.out),
        Command::InitModel(a) => ("init-model", &a.out),
        Command::SynthData(a) => ("synth-data", &a.out_dir),
        Command::Embed(a) => ("embed", &a.out),
        Command::EvalSts(a) => ("eval-sts", &a.report),
        Command::Sweep(a) => ("sweep", &a.out),
        Command::Bench(a) => ("bench", &a.out),
        Command::AnalyzeDep(a) => ("analyze-dep", &a.out),
        Command::EvalTransfer(a) => ("eval-transfer", &a.out),
    };
    let mut m = RunManifest::new(name);
    let result = match &cli.command {
        Command::TrainVocab(a) => train_vocab(a, &mut m),
        Command::InitModel(a) => init_model(a, &mut m),
        Command::SynthData(a) => synth_data(a, &mut m),
        Command::Embed(a) => embed(a, &mut m),
        Command::EvalSts(a) => eval_sts(a, &mut m),
        Command::Sweep(a) => run_sweep(a, &mut m),
        Command::Bench(a) => bench(a, &mut m),
        Command::AnalyzeDep(a) => analyze_dep(a, &mut m),
        Command::EvalTransfer(a) => eval_transfer(a, &mut m),
    }?;
    m.wall_time_secs = started.elapsed().as_secs_f64();
    // These commands write their own non-JSON artifact.
    if matches!(
        cli.command,
        Command::TrainVocab(_) | Command::InitModel(_) | Command::SynthData(_) | Command::Embed(_)
    ) {
        return Ok(());
    }
    m.output_paths.push(show(out));
    write_json(out, &json!({ "manifest": m, "result": result }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
