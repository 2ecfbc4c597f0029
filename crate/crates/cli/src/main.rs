//! `entqa` — perturbation, training, and evaluation toolkit CLI.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

use clap::{Args, Parser, Subcommand};
use entqa_core::corpus::{
    load_mrqa, load_squad, tokenize_lossy, LoadMode, QAExample, TokenizeOptions, Vocab,
};
use entqa_core::metrics::{EntropyMode, ReportFormat, TrainSetup};
use entqa_core::model::{load_checkpoint, save_checkpoint, ModelParams};
use entqa_core::perturb::{apply, FunctionWordLexicon, PerturbationKind};
use entqa_core::selfcheck::run_selftest;
use entqa_core::synth::{generate_split, SynthConfig};
use entqa_core::metrics::build_matrix;
use entqa_core::trainer::{
    append_run, eval_external, read_ledger, run_cross_eval, run_points, train, tune_all_lambda,
    tune_lambda, TrainConfig, TrainError,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "entqa", version, about = "Entropy-regularized extractive QA toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Apply a perturbation to a dataset and write the result as SQuAD JSON.
    Perturb(PerturbArgs),
    /// Train one configuration across seeds; append results to a ledger.
    Train(TrainArgs),
    /// Grid-search the entropy weight per perturbation.
    Tune(TuneArgs),
    /// Evaluate a saved checkpoint on a dataset (clean inputs).
    Eval(EvalArgs),
    /// Render the (train config x test perturbation) matrix.
    Matrix(MatrixArgs),
    /// Convert a dataset (SQuAD or MRQA) to normalized SQuAD JSON.
    Convert(ConvertArgs),
    /// Run the embedded golden tests and consistency checks.
    Selftest,
}

#[derive(Args)]
struct DataArgs {
    /// Training set (SQuAD JSON). Defaults to $SEL_DATA_DIR/train-v1.1.json.
    #[arg(long)]
    train_file: Option<PathBuf>,
    /// Dev set (SQuAD JSON). Defaults to $SEL_DATA_DIR/dev-v1.1.json.
    #[arg(long)]
    dev_file: Option<PathBuf>,
    /// Use the built-in synthetic corpus instead of files: N_TRAIN,N_DEV,SEED.
    #[arg(long, value_name = "N,M,SEED")]
    synth: Option<String>,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file (any TrainConfig field; flags override it).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training perturbation setup: none, del_func, del_que, shuf_word,
    /// shuf_sent, or all.
    #[arg(long)]
    perturb: Option<String>,
    /// Entropy weight applied to every active perturbation.
    #[arg(long)]
    lambda: Option<f64>,
    /// Run seeds (repeatable); overrides the config list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate (linearly decayed to zero).
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    max_context_len: Option<usize>,
    /// Entropy reported at eval time: full or gold.
    #[arg(long)]
    entropy_mode: Option<String>,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long, value_name = "FILE")]
    r#in: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// none, del_func, del_que, shuf_word, or shuf_sent.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input format: squad or mrqa.
    #[arg(long, default_value = "squad")]
    format: String,
    /// Fail on any invalid example instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Append one RunResult JSON line per seed.
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Directory for checkpoints and vocabularies.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seeds on this many threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Also grid-search one shared weight for the ALL setup (by default the
    /// per-perturbation choices are reused).
    #[arg(long)]
    retune_all: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint written by `train --out`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Vocabulary JSON; defaults to the checkpoint path with
    /// `.ckpt.json` replaced by `.vocab.json`.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    r#in: PathBuf,
    /// Dataset format: squad or mrqa.
    #[arg(long, default_value = "squad")]
    format: String,
    #[arg(long)]
    entropy_mode: Option<String>,
    #[arg(long)]
    max_context_len: Option<usize>,
    #[arg(long)]
    strict: bool,
    /// Append the evaluation summary as one JSON line.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    /// Runs ledger (JSONL of RunResults) to read, or to append to with --run.
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Execute the full 6-row x seeds cross evaluation first.
    #[arg(long)]
    run: bool,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Report metric: entropy, f1, or both.
    #[arg(long, default_value = "both")]
    metric: String,
    /// Output format: tsv, md, or text.
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long, value_name = "FILE")]
    r#in: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Input format: squad or mrqa.
    #[arg(long, default_value = "squad")]
    format: String,
    #[arg(long)]
    strict: bool,
}

enum CliError {
    Usage(String),
    Run(String),
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn failure<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Perturb(args) => cmd_perturb(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Tune(args) => cmd_tune(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Matrix(args) => cmd_matrix(args),
        Cmd::Convert(args) => cmd_convert(args),
        Cmd::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

// --- shared plumbing ---------------------------------------------------------

fn load_mode(strict: bool) -> LoadMode {
    if strict {
        LoadMode::Strict
    } else {
        LoadMode::Lenient
    }
}

fn load_dataset(path: &Path, format: &str, strict: bool) -> Result<Vec<QAExample>, CliError> {
    let (examples, skipped) = match format {
        "squad" => load_squad(path, load_mode(strict)).map_err(failure)?,
        "mrqa" => load_mrqa(path, load_mode(strict)).map_err(failure)?,
        other => return Err(usage(format!("unknown format: {other} (expected squad or mrqa)"))),
    };
    if !skipped.is_empty() {
        eprintln!("warning: skipped {} invalid examples in {}", skipped.len(), path.display());
    }
    Ok(examples)
}

fn data_dir_file(name: &str) -> Result<PathBuf, CliError> {
    match std::env::var("SEL_DATA_DIR") {
        Ok(dir) => Ok(Path::new(&dir).join(name)),
        Err(_) => Err(usage(format!(
            "no dataset given: pass --train-file/--dev-file, --synth, or set SEL_DATA_DIR \
             (expected {name} there)"
        ))),
    }
}

fn resolve_data(data: &DataArgs) -> Result<(Vec<QAExample>, Vec<QAExample>), CliError> {
    if let Some(spec) = &data.synth {
        let parts: Vec<&str> = spec.split(',').collect();
        if parts.len() != 3 {
            return Err(usage("--synth expects N_TRAIN,N_DEV,SEED"));
        }
        let n: usize = parts[0].parse().map_err(usage)?;
        let m: usize = parts[1].parse().map_err(usage)?;
        let seed: u64 = parts[2].parse().map_err(usage)?;
        return Ok(generate_split(&SynthConfig { seed, ..Default::default() }, n, m));
    }
    let train_path = match &data.train_file {
        Some(p) => p.clone(),
        None => data_dir_file("train-v1.1.json")?,
    };
    let dev_path = match &data.dev_file {
        Some(p) => p.clone(),
        None => data_dir_file("dev-v1.1.json")?,
    };
    Ok((
        load_dataset(&train_path, "squad", false)?,
        load_dataset(&dev_path, "squad", false)?,
    ))
}

fn build_config(args: &ConfigArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(failure)?;
            toml::from_str::<TrainConfig>(&text)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(setup) = &args.perturb {
        cfg.setup = TrainSetup::from_str(setup).map_err(usage)?;
    }
    if let Some(lambda) = args.lambda {
        if lambda < 0.0 {
            return Err(usage("--lambda must be nonnegative"));
        }
        cfg.lambdas = cfg.setup.active_kinds().into_iter().map(|k| (k, lambda)).collect();
    }
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds.clone();
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.lr_init = v;
    }
    if let Some(v) = args.dim {
        cfg.dim = v;
    }
    if let Some(v) = args.max_context_len {
        cfg.max_context_len = v;
    }
    if let Some(mode) = &args.entropy_mode {
        cfg.entropy_mode = EntropyMode::from_str(mode).map_err(usage)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_format(s: &str) -> Result<ReportFormat, CliError> {
    ReportFormat::from_str(s).map_err(usage)
}

fn vocab_path_for(checkpoint: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    match explicit {
        Some(p) => p.clone(),
        None => {
            let s = checkpoint.to_string_lossy();
            if let Some(stem) = s.strip_suffix(".ckpt.json") {
                PathBuf::from(format!("{stem}.vocab.json"))
            } else {
                PathBuf::from(format!("{s}.vocab.json"))
            }
        }
    }
}

fn save_vocab(path: &Path, vocab: &Vocab) -> Result<(), CliError> {
    let json = serde_json::to_string(vocab).map_err(failure)?;
    std::fs::write(path, json).map_err(failure)
}

fn load_vocab(path: &Path) -> Result<Vocab, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| failure(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| failure(format!("{}: {e}", path.display())))
}

// --- commands ----------------------------------------------------------------

fn cmd_perturb(args: PerturbArgs) -> Result<(), CliError> {
    let kind = PerturbationKind::from_str(&args.kind).map_err(usage)?;
    let examples = load_dataset(&args.r#in, &args.format, args.strict)?;
    let opts = TokenizeOptions::default();
    let lexicon = FunctionWordLexicon::default();
    let mut out = Vec::with_capacity(examples.len());
    let mut skipped = 0usize;
    for ex in &examples {
        let tok = match tokenize_lossy(ex, &opts) {
            Ok(t) => t,
            Err(e) if args.strict => return Err(failure(e)),
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let p = apply(kind, &tok, args.seed, &lexicon);
        let view = p.view();
        out.push(QAExample {
            id: ex.id.clone(),
            title: ex.title.clone(),
            context: p.perturbed_context.clone(),
            question: p.perturbed_question.clone(),
            answers: vec![entqa_core::GoldAnswer {
                text: p.answer_text(),
                char_start: view.context_tokens[view.answer_span.0].char_start,
            }],
        });
    }
    entqa_core::corpus::save_squad(&args.out, &out).map_err(failure)?;
    eprintln!(
        "wrote {} perturbed examples to {} ({} skipped)",
        out.len(),
        args.out.display(),
        skipped
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = build_config(&args.config)?;
    let (train_set, dev_set) = resolve_data(&args.data)?;
    let lexicon = FunctionWordLexicon::default();
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(failure)?;
    }
    let seeds = cfg.seeds.clone();
    let run_one = |seed: u64| train(&cfg, seed, &train_set, &dev_set, &lexicon);
    let runs: Vec<_> = if args.jobs > 1 && seeds.len() > 1 {
        std::thread::scope(|scope| {
            let run_one = &run_one;
            let handles: Vec<_> = seeds
                .iter()
                .map(|&seed| scope.spawn(move || run_one(seed)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    } else {
        seeds.iter().map(|&s| run_one(s)).collect()
    };
    for run in runs {
        let run = run?;
        if let Some(msg) = &run.result.failure {
            eprintln!("warning: seed {} aborted: {msg}", run.result.seed);
        }
        if let Some(dir) = &args.out {
            let stem = format!("{}-{}", run.result.setup, run.result.seed);
            let ckpt = dir.join(format!("{stem}.ckpt.json"));
            save_checkpoint(&ckpt, &run.params, run.vocab.hash()).map_err(failure)?;
            save_vocab(&dir.join(format!("{stem}.vocab.json")), &run.vocab)?;
            eprintln!("saved {}", ckpt.display());
        }
        if let Some(ledger) = &args.ledger {
            append_run(ledger, &run.result)?;
        }
        print!("setup={} seed={}", run.result.setup, run.result.seed);
        for (kind, stats) in &run.result.eval {
            print!(" {kind}:f1={:.3},H={:.3}", stats.f1, stats.entropy);
        }
        println!();
    }
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> Result<(), CliError> {
    let cfg = build_config(&args.config)?;
    let (train_set, dev_set) = resolve_data(&args.data)?;
    let lexicon = FunctionWordLexicon::default();
    let choices = tune_lambda(&cfg, &train_set, &dev_set, &lexicon)?;
    println!("perturbation\tlambda\tclean_f1\tseen_entropy\tentropy_bar\tmet_bar");
    for (kind, c) in &choices {
        println!(
            "{kind}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}",
            c.lambda, c.clean_f1, c.seen_entropy, c.entropy_bar, c.met_bar
        );
        if !c.met_bar {
            eprintln!("warning: {kind}: no grid value reached the entropy bar; best-F1 fallback");
        }
    }
    if args.retune_all {
        let all = tune_all_lambda(&cfg, &train_set, &dev_set, &lexicon)?;
        println!("all\t{}\t{:.4}\t-\t-\t{}", all.lambda, all.clean_f1, all.met_bar);
        if !all.met_bar {
            eprintln!("warning: all: no grid value reached the entropy bar; best-F1 fallback");
        }
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let (params, ckpt_hash): (ModelParams, u64) =
        load_checkpoint(&args.checkpoint).map_err(failure)?;
    let vocab = load_vocab(&vocab_path_for(&args.checkpoint, &args.vocab))?;
    if vocab.hash() != ckpt_hash {
        return Err(failure(format!(
            "vocabulary hash {:#x} does not match checkpoint hash {ckpt_hash:#x}",
            vocab.hash()
        )));
    }
    let examples = load_dataset(&args.r#in, &args.format, args.strict)?;
    let mode = match &args.entropy_mode {
        Some(s) => EntropyMode::from_str(s).map_err(usage)?,
        None => EntropyMode::Full,
    };
    let opts = TokenizeOptions {
        max_context_len: args.max_context_len.unwrap_or(entqa_core::DEFAULT_MAX_CONTEXT_LEN),
        ..TokenizeOptions::default()
    };
    let result = eval_external(&params, &vocab, &examples, &opts, mode)?;
    if result.low_coverage {
        eprintln!(
            "warning: vocabulary coverage is only {:.1}% — scores are dominated by \
             unknown-token embeddings",
            100.0 * result.coverage
        );
    }
    let summary = serde_json::json!({
        "checkpoint": args.checkpoint.display().to_string(),
        "dataset": args.r#in.display().to_string(),
        "format": args.format,
        "result": result,
    });
    let line = serde_json::to_string(&summary).map_err(failure)?;
    println!("{line}");
    if let Some(ledger) = &args.ledger {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(ledger)
            .map_err(failure)?;
        writeln!(f, "{line}").map_err(failure)?;
    }
    Ok(())
}

fn cmd_matrix(args: MatrixArgs) -> Result<(), CliError> {
    let format = report_format(&args.format)?;
    let matrix = if args.run {
        let cfg = build_config(&args.config)?;
        let (train_set, dev_set) = resolve_data(&args.data)?;
        let lexicon = FunctionWordLexicon::default();
        let (matrix, results) =
            run_cross_eval(&cfg, &train_set, &dev_set, &lexicon, args.jobs.max(1))?;
        if let Some(ledger) = &args.ledger {
            for r in &results {
                append_run(ledger, r)?;
            }
        }
        matrix
    } else {
        let ledger = args
            .ledger
            .as_ref()
            .ok_or_else(|| usage("matrix needs --ledger (or --run to execute the experiment)"))?;
        let results = read_ledger(ledger)?;
        build_matrix(&run_points(&results)).map_err(failure)?
    };
    match args.metric.as_str() {
        "entropy" | "f1" => println!("{}", matrix.render(&args.metric, format)),
        "both" => {
            println!("# entropy");
            println!("{}", matrix.render("entropy", format));
            println!("# f1");
            println!("{}", matrix.render("f1", format));
        }
        other => return Err(usage(format!("unknown metric: {other} (expected entropy, f1, or both)"))),
    }
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> Result<(), CliError> {
    let examples = load_dataset(&args.r#in, &args.format, args.strict)?;
    if examples.is_empty() {
        return Err(failure("input contains no valid examples"));
    }
    entqa_core::corpus::save_squad(&args.out, &examples).map_err(failure)?;
    eprintln!("wrote {} examples to {}", examples.len(), args.out.display());
    Ok(())
}

fn cmd_selftest() -> Result<(), CliError> {
    let results = run_selftest();
    let mut ok = true;
    for r in &results {
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        if r.detail.is_empty() {
            println!("selftest: {verdict} - {}", r.name);
        } else {
            println!("selftest: {verdict} - {} ({})", r.name, r.detail);
        }
        ok &= r.pass;
    }
    if ok {
        Ok(())
    } else {
        Err(failure("selftest failed"))
    }
}
