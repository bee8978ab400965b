//! `relrank`: one binary for the whole pipeline, from corpus ingestion to
//! ablation reports. Every JSON artifact carries the resolved config and seed.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use relrank::candidates::CandidateIndex;
use relrank::corpus::{generate_synthetic, load_tacred, relation_counts, SynthConfig};
use relrank::encoder::{load_checkpoint, save_checkpoint};
use relrank::eval::{
    ablation_csv, ablation_matrix, bucket_csv, bucket_svg, default_cells, evaluate, score_csv,
    AblationCell, BarSeries,
};
use relrank::trainer::{train, TrainError};
use relrank::{Dataset, EvaluationReport, RelationModel, Scalar};
use serde::Serialize;
use serde_json::{json, Value};

use config::{Precision, RunConfig, RunFlags};

#[derive(Parser, Debug)]
#[command(
    name = "relrank",
    version,
    about = "Relation extraction by ranking descriptive relation prompts"
)]
struct Cli {
    /// Directory for artifacts
    #[arg(
        long,
        global = true,
        env = "RELRANK_OUT",
        default_value = "relrank-out"
    )]
    out: PathBuf,
    /// JSON run config; its fields override flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a TACRED-format file or directory and print split statistics
    Ingest {
        path: PathBuf,
        /// Dataset name in the summary table
        #[arg(long)]
        name: Option<String>,
    },
    /// Generate a synthetic corpus into the data directory
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON synthetic-corpus config (relations, sizes, NA proportion)
        #[arg(long)]
        synth_config: Option<PathBuf>,
        #[arg(long)]
        train_size: Option<usize>,
        #[arg(long)]
        dev_size: Option<usize>,
        #[arg(long)]
        test_size: Option<usize>,
        #[arg(long)]
        na_proportion: Option<f64>,
    },
    /// Build the type-pair candidate index from the train split
    Index,
    /// Print the assembled input for an example and relation
    Render {
        #[arg(long)]
        example_id: String,
        /// Relation id; all candidates when omitted
        #[arg(long)]
        relation: Option<String>,
    },
    /// Train a model and write the checkpoint and training report
    Train,
    /// Evaluate a checkpoint on a split
    Eval,
    /// Train and evaluate each marker/prompt cell for every seed
    Ablate {
        /// Cells as marker:prompt, comma-separated [default: the four standard cells]
        #[arg(long, value_delimiter = ',')]
        cells: Option<Vec<String>>,
    },
    /// Render bucket comparisons from eval or ablation reports as CSV and SVG
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

/// Exit status 1 for bad input or config, 2 for failures while running.
struct Fail {
    code: u8,
    error: anyhow::Error,
}

trait Classify<T> {
    fn invalid(self) -> Result<T, Fail>;
    fn runtime(self) -> Result<T, Fail>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Fail> {
        self.map_err(|e| Fail {
            code: 1,
            error: e.into(),
        })
    }

    fn runtime(self) -> Result<T, Fail> {
        self.map_err(|e| Fail {
            code: 2,
            error: e.into(),
        })
    }
}

fn train_failure(e: TrainError) -> Fail {
    let code = match e {
        TrainError::Config(_) | TrainError::EmptyTrain | TrainError::GoldNotInCandidates { .. } => {
            1
        }
        _ => 2,
    };
    Fail {
        code,
        error: e.into(),
    }
}

#[derive(Serialize)]
struct Artifact<'a, R: Serialize> {
    command: &'a str,
    config: &'a RunConfig,
    seed: u64,
    result: R,
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<(), Fail> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .runtime()?;
    }
    std::fs::write(path, body)
        .with_context(|| format!("writing {}", path.display()))
        .runtime()
}

fn write_artifact<R: Serialize>(
    config: &RunConfig,
    command: &str,
    name: &str,
    seed: u64,
    result: R,
) -> Result<PathBuf, Fail> {
    let path = config.out.join(name);
    let body = serde_json::to_string_pretty(&Artifact {
        command,
        config,
        seed,
        result,
    })
    .runtime()?;
    write_file(&path, body + "\n")?;
    Ok(path)
}

fn load_dataset(config: &RunConfig) -> Result<Dataset, Fail> {
    let registry = config.load_registry().invalid()?;
    let dir = config.data_dir();
    Dataset::load_dir(&dir, registry)
        .with_context(|| format!("dataset {}", dir.display()))
        .invalid()
}

fn summary_row(name: &str, ds: &Dataset) -> Value {
    let labels: std::collections::BTreeSet<_> = ds
        .train
        .iter()
        .chain(&ds.dev)
        .chain(&ds.test)
        .map(|e| e.gold.clone())
        .collect();
    json!({ "dataset": name, "train": ds.train.len(), "dev": ds.dev.len(), "test": ds.test.len(), "relations": labels.len() })
}

fn cmd_ingest(config: &RunConfig, path: &Path, name: Option<String>) -> Result<(), Fail> {
    let registry = config.load_registry().invalid()?;
    let ds = if path.is_dir() {
        Dataset::load_dir(path, registry).invalid()?
    } else {
        let split = load_tacred(path, &registry).invalid()?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("train");
        let mut ds = Dataset {
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
            registry,
        };
        match stem {
            "dev" => ds.dev = split,
            "test" => ds.test = split,
            _ => ds.train = split,
        }
        ds
    };
    let name = name.unwrap_or_else(|| {
        path.file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("dataset")
            .to_string()
    });
    let row = summary_row(&name, &ds);
    println!(
        "{:<16} {:>8} {:>8} {:>8} {:>10}",
        "dataset", "#train", "#dev", "#test", "#relations"
    );
    println!(
        "{:<16} {:>8} {:>8} {:>8} {:>10}",
        name, row["train"], row["dev"], row["test"], row["relations"]
    );
    write_file(&config.out.join("stats.csv"), ds.stats_csv())?;
    write_artifact(config, "ingest", "ingest.json", config.seed(), row)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    config: &RunConfig,
    seed: u64,
    synth_config: Option<PathBuf>,
    train_size: Option<usize>,
    dev_size: Option<usize>,
    test_size: Option<usize>,
    na_proportion: Option<f64>,
) -> Result<(), Fail> {
    let mut sc = match synth_config {
        Some(p) => {
            let text = std::fs::read_to_string(&p)
                .with_context(|| format!("reading {}", p.display()))
                .invalid()?;
            serde_json::from_str::<SynthConfig>(&text)
                .with_context(|| format!("parsing {}", p.display()))
                .invalid()?
        }
        None => SynthConfig::default(),
    };
    sc.train_size = train_size.unwrap_or(sc.train_size);
    sc.dev_size = dev_size.unwrap_or(sc.dev_size);
    sc.test_size = test_size.unwrap_or(sc.test_size);
    sc.na_proportion = na_proportion.unwrap_or(sc.na_proportion);
    let ds = generate_synthetic(&sc, seed).invalid()?;
    let dir = config.data_dir();
    ds.save_dir(&dir).runtime()?;
    println!(
        "wrote {} / {} / {} examples to {}",
        ds.train.len(),
        ds.dev.len(),
        ds.test.len(),
        dir.display()
    );
    write_artifact(
        config,
        "synth",
        "synth.json",
        seed,
        json!({ "synth_config": sc, "summary": summary_row("synthetic", &ds) }),
    )?;
    Ok(())
}

fn build_index(config: &RunConfig, ds: &Dataset) -> CandidateIndex {
    config.experiment().build_index(ds)
}

fn cmd_index(config: &RunConfig) -> Result<(), Fail> {
    let ds = load_dataset(config)?;
    let index = build_index(config, &ds);
    let table: Value = serde_json::from_str(&index.to_json()).runtime()?;
    let path = write_artifact(config, "index", "index.json", config.seed(), table)?;
    println!("{} type pairs -> {}", index.len(), path.display());
    Ok(())
}

fn cmd_render(config: &RunConfig, example_id: &str, relation: Option<String>) -> Result<(), Fail> {
    let ds = load_dataset(config)?;
    let ex = ds
        .find(example_id)
        .ok_or_else(|| anyhow!("no example with id {example_id:?}"))
        .invalid()?;
    let relations = match relation {
        Some(r) => vec![ds.registry.resolve(&r).invalid()?],
        None => build_index(config, &ds).for_example(ex).relations,
    };
    for r in relations {
        let input = config.templates().render(&ds.registry, ex, &r).invalid()?;
        println!("{}", input.text());
    }
    Ok(())
}

fn cmd_train<T: Scalar>(config: &RunConfig) -> Result<(), Fail> {
    let ds = load_dataset(config)?;
    let exp = config.experiment().with_seed(config.seed());
    let index = exp.build_index(&ds);
    let outcome =
        train::<T>(&ds, &index, exp.templates, exp.encoder, &exp.train).map_err(train_failure)?;
    let ckpt = outcome
        .model
        .to_checkpoint(json!({ "config": config, "seed": config.seed() }));
    let path = config.checkpoint_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).runtime()?;
    }
    save_checkpoint(&path, &ckpt).runtime()?;
    let report = &outcome.report;
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        match report.dev_micro_f1.get(i) {
            Some(f1) => println!("epoch {:>3}  loss {loss:.4}  dev micro-F1 {f1:.4}", i + 1),
            None => println!("epoch {:>3}  loss {loss:.4}", i + 1),
        }
    }
    write_artifact(config, "train", "train_report.json", config.seed(), report)?;
    println!("checkpoint -> {}", path.display());
    Ok(())
}

fn cmd_eval<T: Scalar>(config: &RunConfig) -> Result<(), Fail> {
    let path = config.checkpoint_path();
    if !path.exists() {
        return Err(anyhow!(
            "checkpoint {} not found; run `relrank train` first",
            path.display()
        ))
        .invalid();
    }
    let ckpt = load_checkpoint::<T>(&path)
        .with_context(|| format!("checkpoint {}", path.display()))
        .invalid()?;
    let seed = ckpt
        .meta
        .get("seed")
        .and_then(Value::as_u64)
        .unwrap_or(config.seed());
    let model = RelationModel::from_checkpoint(ckpt).invalid()?;
    let ds = load_dataset(config)?;
    let index = build_index(config, &ds);
    let report = evaluate(
        &model,
        &ds,
        &index,
        &config.split,
        &relation_counts(&ds.train),
    )
    .invalid()?;
    let s = &report.score;
    println!(
        "{} examples  P {:.4}  R {:.4}  micro-F1 {:.4}  macro-F1 {:.4}",
        report.examples, s.precision, s.recall, s.micro_f1, s.macro_f1
    );
    if report.fallback_count > 0 {
        println!(
            "{} examples used the fallback candidate set",
            report.fallback_count
        );
    }
    write_file(&config.out.join("score.csv"), score_csv(s))?;
    let series = [BarSeries {
        name: format!("{}+{}", config.marker, config.prompt),
        buckets: report.buckets.clone(),
    }];
    write_file(&config.out.join("buckets.csv"), bucket_csv(&series))?;
    write_artifact(config, "eval", "eval_report.json", seed, &report)?;
    Ok(())
}

fn parse_cell(s: &str) -> anyhow::Result<AblationCell> {
    let (m, p) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("cell {s:?} is not marker:prompt"))?;
    Ok(AblationCell {
        marker: m.parse().map_err(|e: String| anyhow!(e))?,
        prompt: p.parse().map_err(|e: String| anyhow!(e))?,
    })
}

fn cmd_ablate<T: Scalar>(config: &RunConfig, cells: Option<Vec<String>>) -> Result<(), Fail> {
    let cells = match cells {
        Some(c) => c
            .iter()
            .map(|s| parse_cell(s))
            .collect::<anyhow::Result<Vec<_>>>()
            .invalid()?,
        None => default_cells(),
    };
    let ds = load_dataset(config)?;
    let matrix =
        ablation_matrix::<T>(&ds, &config.experiment(), &cells, &config.seeds).runtime()?;
    println!("{:<28} {:>10} {:>10}", "cell", "micro-F1", "std");
    for (cell, r) in &matrix.cells {
        let m = r.aggregate["micro_f1"];
        println!("{:<28} {:>10.4} {:>10.4}", cell.label(), m.mean, m.std);
    }
    write_file(&config.out.join("ablation.csv"), ablation_csv(&matrix))?;
    write_artifact(config, "ablate", "ablation.json", config.seed(), &matrix)?;
    Ok(())
}

/// Bucket series from an eval artifact (one) or an ablation artifact (one per cell).
fn series_from(path: &Path) -> Result<Vec<BarSeries>, Fail> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .invalid()?;
    let v: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .invalid()?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report")
        .to_string();
    let result = v.get("result").cloned().unwrap_or(Value::Null);
    match v.get("command").and_then(Value::as_str) {
        Some("eval") => {
            let report: EvaluationReport = serde_json::from_value(result).invalid()?;
            Ok(vec![BarSeries {
                name: stem,
                buckets: report.buckets,
            }])
        }
        Some("ablate") => {
            let matrix: relrank::eval::AblationMatrix = serde_json::from_value(result).invalid()?;
            Ok(matrix
                .cells
                .into_iter()
                .filter_map(|(cell, r)| {
                    r.runs.into_iter().next().map(|run| BarSeries {
                        name: cell.label(),
                        buckets: run.eval.buckets,
                    })
                })
                .collect())
        }
        _ => Err(anyhow!(
            "{} is not an eval or ablate artifact",
            path.display()
        ))
        .invalid(),
    }
}

fn cmd_report(config: &RunConfig, inputs: &[PathBuf]) -> Result<(), Fail> {
    let mut series = Vec::new();
    for p in inputs {
        series.extend(series_from(p)?);
    }
    write_file(&config.out.join("report.csv"), bucket_csv(&series))?;
    write_file(&config.out.join("report.svg"), bucket_svg(&series))?;
    println!(
        "{} series -> {}",
        series.len(),
        config.out.join("report.svg").display()
    );
    Ok(())
}

macro_rules! by_precision {
    ($config:expr, $f:ident($($arg:expr),*)) => {
        match $config.precision {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

fn run(cli: Cli) -> Result<(), Fail> {
    let config = RunConfig::resolve(&cli.out, &cli.flags, cli.config.as_deref()).invalid()?;
    match cli.command {
        Command::Ingest { path, name } => cmd_ingest(&config, &path, name),
        Command::Synth {
            seed,
            synth_config,
            train_size,
            dev_size,
            test_size,
            na_proportion,
        } => cmd_synth(
            &config,
            seed,
            synth_config,
            train_size,
            dev_size,
            test_size,
            na_proportion,
        ),
        Command::Index => cmd_index(&config),
        Command::Render {
            example_id,
            relation,
        } => cmd_render(&config, &example_id, relation),
        Command::Train => by_precision!(config, cmd_train(&config)),
        Command::Eval => by_precision!(config, cmd_eval(&config)),
        Command::Ablate { cells } => by_precision!(config, cmd_ablate(&config, cells)),
        Command::Report { inputs } => cmd_report(&config, &inputs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
