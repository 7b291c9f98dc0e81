//! `divfe`: train, evaluate and analyze Walsh-target feature extractors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use divfe_core::augment::{expand_training_set, AugmentConfig};
use divfe_core::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use divfe_core::data::{
    load_iris, load_mnist_dir, load_signals_csv, split, split_predefined, write_signals_csv, CsvOptions, LabeledDataset,
    Standardizer,
};
use divfe_core::divergence::{analyze, CenterSource, ScatterReport};
use divfe_core::trainer::{self, evaluate, feature_outputs, EpochMetrics, TrainConfig, TrialData};
use divfe_core::walsh::WalshCodebook;
use divfe_core::{Error, ModelSpec, Result};

#[derive(Parser)]
#[command(name = "divfe", version, about = "Walsh-target CNN feature extractor with minimum-distance classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// UCI iris.data rows: four features and a class name.
    Iris,
    /// Directory holding the four MNIST IDX files (train and t10k).
    Mnist,
    /// Rows of `label,v1,v2,...`.
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DivergenceMode {
    Paper,
    Empirical,
    Both,
}

#[derive(clap::Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "iris")]
    format: Format,
    /// Skip one header line in CSV inputs.
    #[arg(long)]
    header: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus per-epoch metrics CSV.
    Train {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Metrics CSV path (default: `<out>.metrics.csv`).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Classify a dataset with a checkpoint (MNIST: the t10k partition).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Scatter matrices and divergence of a checkpoint's features.
    Divergence {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "paper")]
        mode: DivergenceMode,
        /// Ridge added to S before inversion (default: scaled to tr(S)).
        #[arg(long)]
        ridge: Option<f64>,
    },
    /// Add conv layers from a template until training accuracy passes a threshold.
    Grow {
        #[arg(long)]
        template: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expand a signal CSV with augmented copies.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        factor: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        header: bool,
    },
    /// Repeat split-train-test with independent seeds and summarize.
    Trials {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

enum Loaded {
    Pool(LabeledDataset),
    Predefined { train: LabeledDataset, test: LabeledDataset },
}

impl Loaded {
    fn trial_data(&self) -> TrialData<'_> {
        match self {
            Loaded::Pool(d) => TrialData::Pool(d),
            Loaded::Predefined { train, test } => TrialData::Predefined { train, test },
        }
    }

    /// The samples an evaluation-type command looks at.
    fn eval_set(self) -> LabeledDataset {
        match self {
            Loaded::Pool(d) => d,
            Loaded::Predefined { test, .. } => test,
        }
    }
}

fn load(args: &DataArgs) -> Result<Loaded> {
    let opts = CsvOptions { skip_header: args.header };
    Ok(match args.format {
        Format::Iris => Loaded::Pool(load_iris(&args.data, opts)?),
        Format::Csv => Loaded::Pool(load_signals_csv(&args.data, opts)?),
        Format::Mnist => {
            let (train, test) = load_mnist_dir(&args.data)?;
            Loaded::Predefined { train, test }
        }
    })
}

fn load_config(path: Option<&Path>, format: Format) -> Result<TrainConfig> {
    let mut c = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    c.standardize.get_or_insert(format == Format::Iris);
    Ok(c)
}

fn normalize(data: LabeledDataset, st: Option<&Standardizer>) -> Result<LabeledDataset> {
    match st {
        Some(s) => s.apply(&data),
        None => Ok(data),
    }
}

fn print_epoch(m: &EpochMetrics) {
    println!(
        "epoch={} train_loss={:.6} val_loss={:.6} val_acc={:.6}",
        m.epoch, m.train_loss, m.val_loss, m.val_accuracy
    );
}

fn print_matrix(name: &str, m: &divfe_core::divergence::Matrix) {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.6e}", m[(r, c)])).collect();
        println!("{name}_row_{r}={}", row.join(","));
    }
}

fn train(model: &Path, data: &DataArgs, config: Option<&Path>, out: &Path, metrics: Option<&Path>) -> Result<()> {
    let spec = ModelSpec::load(model)?;
    let cfg = load_config(config, data.format)?;
    let loaded = load(data)?;
    let run = trainer::train_once_observed(&spec, loaded.trial_data(), &cfg, cfg.seed, &mut print_epoch)?;
    let metrics_path = metrics.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".metrics.csv");
        PathBuf::from(p)
    });
    run.report.write_metrics_csv(&metrics_path)?;
    save_checkpoint(
        &Checkpoint {
            model: run.model.clone(),
            codebook: run.codebook.clone(),
            normalization: run.standardizer.clone(),
        },
        out,
    )?;
    println!("train_samples={}", run.split.train.len());
    println!("val_samples={}", run.split.validation.len());
    println!("test_samples={}", run.split.test.len());
    println!("epochs_run={}", run.report.epochs_run);
    println!("best_epoch={}", run.report.best_epoch);
    println!("weight_count={}", run.model.weight_count());
    println!("param_count={}", run.model.param_count());
    println!("test_accuracy={:.6}", run.test.accuracy);
    println!("test_correct={}", run.test.correct);
    if let Some(d) = run.report.test_divergence {
        println!("test_divergence={d:.6e}");
    }
    println!("checkpoint={}", out.display());
    println!("metrics={}", metrics_path.display());
    Ok(())
}

fn eval(checkpoint: &Path, data: &DataArgs) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let set = normalize(load(data)?.eval_set(), ck.normalization.as_ref())?;
    let e = evaluate(&ck.model, &set, &ck.codebook)?;
    println!("samples={}", e.total);
    println!("correct={}", e.correct);
    println!("accuracy={:.6}", e.accuracy);
    println!("mean_loss={:.6}", e.mean_loss);
    for (k, row) in e.confusion.iter().enumerate() {
        let r: Vec<String> = row.iter().map(usize::to_string).collect();
        println!("confusion_row_{k}={}", r.join(","));
    }
    Ok(())
}

fn divergence(checkpoint: &Path, data: &DataArgs, mode: DivergenceMode, ridge: Option<f64>) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let set = normalize(load(data)?.eval_set(), ck.normalization.as_ref())?;
    let outputs = feature_outputs(&ck.model, &set)?;
    let report = |source| analyze(&outputs, set.labels(), &ck.codebook, source, ridge);
    let sources: &[(CenterSource, &str)] = match mode {
        DivergenceMode::Paper => &[(CenterSource::Walsh, "paper")],
        DivergenceMode::Empirical => &[(CenterSource::Empirical, "empirical")],
        DivergenceMode::Both => &[(CenterSource::Walsh, "paper"), (CenterSource::Empirical, "empirical")],
    };
    let reports: Vec<(ScatterReport, &str)> =
        sources.iter().map(|&(s, n)| Ok((report(s)?, n))).collect::<Result<_>>()?;
    println!("samples={}", set.len());
    println!("ridge={:.6e}", reports[0].0.ridge);
    print_matrix("within", &reports[0].0.within);
    for (r, name) in &reports {
        print_matrix(&format!("{name}_between"), &r.between);
        println!("{name}_divergence={:.9e}", r.divergence);
    }
    Ok(())
}

fn grow(template: &Path, data: &DataArgs, threshold: Option<f64>, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let spec = ModelSpec::load(template)?;
    let mut cfg = load_config(config, data.format)?;
    if let Some(t) = threshold {
        cfg.threshold = t;
    }
    cfg.validate()?;
    let (train, validation, st) = match load(data)? {
        Loaded::Pool(d) => {
            let s = split(&d, &cfg.split)?;
            let st = cfg.standardize.unwrap_or(false).then(|| Standardizer::fit(&s.train_pool()));
            (s.train, s.validation, st)
        }
        Loaded::Predefined { train, .. } => {
            let s = split_predefined(&train, &train.select(&[]), &cfg.split)?;
            (s.train, s.validation, cfg.standardize.unwrap_or(false).then(|| Standardizer::fit(&train)))
        }
    };
    let st = st.transpose()?;
    let (train, validation) = (normalize(train, st.as_ref())?, normalize(validation, st.as_ref())?);
    let codebook = WalshCodebook::new(spec.walsh_rank, train.class_count())?;
    let outcome = trainer::grow_layers(&spec, &train, &validation, &codebook, &cfg)?;
    for g in &outcome.report.growth {
        println!(
            "depth={} train_acc={:.6} val_acc={:.6} weights={} epochs={}",
            g.depth, g.train_accuracy, g.val_accuracy, g.weight_count, g.epochs_run
        );
    }
    println!("history_len={}", outcome.report.growth.len());
    println!("accepted={}", outcome.accepted);
    println!("final_depth={}", outcome.model.conv_depth());
    println!("threshold={}", cfg.threshold);
    if let Some(p) = out {
        save_checkpoint(
            &Checkpoint {
                model: outcome.model.clone(),
                codebook,
                normalization: st,
            },
            p,
        )?;
        println!("checkpoint={}", p.display());
    }
    print!("spec:\n{}", outcome.spec);
    Ok(())
}

fn augment(data: &Path, out: &Path, factor: usize, seed: u64, config: Option<&Path>, header: bool) -> Result<()> {
    let mut cfg = match config {
        Some(p) => TrainConfig::load(p)?.augment.unwrap_or_default(),
        None => AugmentConfig::default(),
    };
    cfg.factor = factor;
    cfg.seed = seed;
    let d = load_signals_csv(data, CsvOptions { skip_header: header })?;
    let e = expand_training_set(&d, &cfg)?;
    write_signals_csv(&e, out)?;
    println!("input_samples={}", d.len());
    println!("output_samples={}", e.len());
    let h: Vec<String> = e.class_histogram().iter().map(usize::to_string).collect();
    println!("class_counts={}", h.join(","));
    Ok(())
}

fn trials(model: &Path, data: &DataArgs, config: Option<&Path>, n: Option<usize>) -> Result<()> {
    let spec = ModelSpec::load(model)?;
    let mut cfg = load_config(config, data.format)?;
    if let Some(n) = n {
        cfg.trials = n;
    }
    let loaded = load(data)?;
    let s = trainer::run_trials(&spec, loaded.trial_data(), &cfg)?;
    for t in &s.trials {
        println!(
            "trial={} seed={} accuracy={:.6} correct={} total={} epochs={}",
            t.index, t.seed, t.accuracy, t.correct, t.total, t.report.epochs_run
        );
    }
    println!("mean_accuracy={:.6}", s.mean);
    println!("std_accuracy={:.6}", s.std);
    println!("median_accuracy={:.6}", s.median);
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        Error::Parse { .. } => 4,
        Error::Format { .. } | Error::Version { .. } => 5,
        Error::Wiring(_) | Error::Shape(_) => 6,
        Error::Contract(_) | Error::InvalidRank(_) | Error::Unsupported(_) => 7,
        Error::Diverged { .. } => 8,
        Error::InsufficientData(_) => 9,
        Error::Capacity { .. } => 10,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train {
            model,
            data,
            config,
            out,
            metrics,
        } => train(model, data, config.as_deref(), out, metrics.as_deref()),
        Command::Eval { checkpoint, data } => eval(checkpoint, data),
        Command::Divergence {
            checkpoint,
            data,
            mode,
            ridge,
        } => divergence(checkpoint, data, *mode, *ridge),
        Command::Grow {
            template,
            data,
            threshold,
            config,
            out,
        } => grow(template, data, *threshold, config.as_deref(), out.as_deref()),
        Command::Augment {
            data,
            out,
            factor,
            seed,
            config,
            header,
        } => augment(data, out, *factor, *seed, config.as_deref(), *header),
        Command::Trials {
            model,
            data,
            config,
            trials: n,
        } => trials(model, data, config.as_deref(), *n),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error: category={} message={message}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
