//! Reference implementation of the external extractor protocol backed by the
//! built-in network. The model directory holds a single `model.json`.
//!
//! ```text
//! deepfa-mlp-extractor train   --features in.dfa --labels labels.csv --model dir
//!                              --epochs N --lr R --momentum M --seed S [--hidden H]
//! deepfa-mlp-extractor extract --model dir --features in.dfa --out out.dfa
//! deepfa-mlp-extractor predict --model dir --features in.dfa --out probs.csv
//! ```
//!
//! An existing `model.json` with matching shape is used as the starting point
//! for `train`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use deepfa_core::data::{read_dfa, read_labels_sidecar, write_dfa};
use deepfa_core::extractor::mlp::{train, MlpModel, MlpTraining};

#[derive(Parser, Debug)]
#[command(name = "deepfa-mlp-extractor", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        hidden: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
    },
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn model_file(dir: &Path) -> PathBuf {
    dir.join("model.json")
}

fn load_model(dir: &Path) -> anyhow::Result<MlpModel> {
    let path = model_file(dir);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.verb {
        Verb::Train {
            features,
            labels,
            model,
            epochs,
            lr,
            momentum,
            seed,
            hidden,
            batch_size,
        } => {
            let x = read_dfa(&features)?;
            let rows = read_labels_sidecar(&labels)?;
            if rows.len() != x.rows() {
                bail!(
                    "{}: {} label rows for {} feature rows",
                    labels.display(),
                    rows.len(),
                    x.rows()
                );
            }
            let y = rows
                .iter()
                .map(|r| {
                    r.label
                        .parse::<usize>()
                        .with_context(|| format!("{}: label {:?} is not a class index", labels.display(), r.label))
                })
                .collect::<anyhow::Result<Vec<usize>>>()?;
            let classes = y.iter().max().map_or(0, |m| m + 1);
            let warm = load_model(&model).ok();
            let cfg = MlpTraining {
                hidden,
                epochs,
                lr_initial: lr,
                momentum,
                batch_size,
                seed,
            };
            let fitted = train(&x, &y, classes, &cfg, warm.as_ref())?;
            std::fs::create_dir_all(&model).with_context(|| format!("creating {}", model.display()))?;
            let path = model_file(&model);
            std::fs::write(&path, serde_json::to_string(&fitted)?)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Verb::Extract { model, features, out } => {
            let m = load_model(&model)?;
            let h = m.extract(&read_dfa(&features)?)?;
            write_dfa(&out, &h)?;
        }
        Verb::Predict { model, features, out } => {
            let m = load_model(&model)?;
            let p = m.probabilities(&read_dfa(&features)?)?;
            let mut text = String::from("id");
            for c in 0..p.cols() {
                text.push_str(&format!(",p{c}"));
            }
            text.push('\n');
            for (i, row) in p.iter_rows().enumerate() {
                text.push_str(&i.to_string());
                for v in row {
                    text.push_str(&format!(",{v}"));
                }
                text.push('\n');
            }
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
