//! Command-line interface.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use eegcn_core::corpus::{Encoded, Encoder, Sentence};
use eegcn_core::eval::{count_relation_params, ScoreReport};
use eegcn_core::model::{Baseline, Model};
use serde_json::json;

use crate::ablate::{self, Switch};
use crate::bench;
use crate::checkpoint;
use crate::data::{build_model, prepare};
use crate::error::{Error, Result};
use crate::inspect;
use crate::io::{load_corpus, write_corpus, write_text};
use crate::settings::Settings;
use crate::train::{evaluate, train};

#[derive(Debug, Parser)]
#[command(name = "eegcn", version, about = "Edge-enhanced GCN event trigger detection")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parent directory for run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Exact run directory, instead of `run-<unix time>-seed<seed>` under `--out`.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its checkpoint and metrics log.
    Train,
    /// Score a checkpoint on a JSONL corpus.
    Eval(CheckpointData),
    /// Write predicted triggers as JSONL.
    Predict(CheckpointData),
    /// Dump edge relevance matrices as CSV and JSON.
    Inspect {
        #[command(flatten)]
        io: CheckpointData,
        /// Edge state to read; defaults to the last layer.
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Write the synthetic corpus splits as JSONL.
    GenSynthetic,
    /// Relation parameter counts for the three encoders.
    CountParams {
        #[arg(long, default_value_t = 40, allow_negative_numbers = true)]
        relations: i64,
        #[arg(long, default_value_t = 50, allow_negative_numbers = true)]
        edge_dim: i64,
        #[arg(long, default_value_t = 150, allow_negative_numbers = true)]
        hidden: i64,
    },
    /// Batches per second for GCN, RGCN and EE-GCN.
    Bench {
        #[arg(long, default_value_t = 20)]
        batches: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
    },
    /// Median dev F1 of the full model and each ablated variant.
    Ablate {
        /// Comma-separated subset of TDL, NAEU, TDL&NAEU, MDER, BiLSTM.
        #[arg(long, value_delimiter = ',')]
        switches: Vec<String>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Median dev F1 along `edge_dim` or `layers`.
    Sweep {
        #[arg(long)]
        axis: String,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
}

#[derive(Debug, Args)]
pub struct CheckpointData {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSONL sentences.
    #[arg(long)]
    pub input: PathBuf,
}

/// Settings from the config file, overrides and `--seed`, validated before
/// any work starts.
pub fn settings(global: &Global) -> Result<Settings> {
    let mut s = match &global.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    for o in &global.overrides {
        s.apply(o)?;
    }
    if let Some(seed) = global.seed {
        s.seed = seed;
    }
    s.validate()?;
    Ok(s)
}

/// Creates the run directory, refusing one that already has files.
pub fn run_dir(global: &Global, seed: u64) -> Result<PathBuf> {
    let dir = match &global.run_dir {
        Some(d) => d.clone(),
        None => {
            let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            global.out.join(format!("run-{ts}-seed{seed}"))
        }
    };
    if dir.exists() {
        let mut entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        if entries.next().is_some() {
            return Err(Error::Usage(format!("run directory {} is not empty", dir.display())));
        }
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn print_report(label: &str, r: &ScoreReport) {
    let (i, c) = (&r.identification, &r.classification);
    println!(
        "{label}: identification P {:.4} R {:.4} F1 {:.4} | classification P {:.4} R {:.4} F1 {:.4}",
        i.precision(),
        i.recall(),
        i.f1(),
        c.precision(),
        c.recall(),
        c.f1()
    );
}

fn report_json(r: &ScoreReport) -> serde_json::Value {
    let prf = |p: &eegcn_core::eval::Prf| json!({"precision": p.precision(), "recall": p.recall(), "f1": p.f1()});
    json!({"identification": prf(&r.identification), "classification": prf(&r.classification)})
}

/// A file's sentences encoded with a checkpoint's vocabularies.
fn load_for(model: &Model, encoder: &Encoder, path: &Path) -> Result<(Vec<Sentence>, Vec<Encoded>)> {
    let corpus = load_corpus(path, model.config.max_len)?;
    let enc = encoder.encode_all(&corpus.sentences)?;
    Ok((corpus.sentences, enc))
}

fn json_text(v: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))
}

pub fn run(cli: &Cli) -> Result<()> {
    let s = settings(&cli.global)?;
    match &cli.command {
        Command::Train => cmd_train(&cli.global, &s),
        Command::Eval(io) => {
            let ck = checkpoint::load(&io.checkpoint)?;
            let (_, data) = load_for(&ck.model, &ck.encoder, &io.input)?;
            let ev = evaluate(&ck.model, &ck.encoder.tags, &data)?;
            print_report("eval", &ev.report);
            Ok(())
        }
        Command::Predict(io) => {
            let ck = checkpoint::load(&io.checkpoint)?;
            let (sentences, data) = load_for(&ck.model, &ck.encoder, &io.input)?;
            let ev = evaluate(&ck.model, &ck.encoder.tags, &data)?;
            let types = ck.encoder.tags.event_types();
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            for (s, spans) in sentences.iter().zip(&ev.predicted) {
                let triggers: Vec<_> = spans.iter().map(|p| json!([p.start, p.end, types[p.label]])).collect();
                let line = json!({"tokens": s.tokens, "triggers": triggers});
                writeln!(w, "{line}").map_err(|e| Error::io("stdout", e))?;
            }
            Ok(())
        }
        Command::Inspect { io, layer } => {
            let ck = checkpoint::load(&io.checkpoint)?;
            let (sentences, data) = load_for(&ck.model, &ck.encoder, &io.input)?;
            let layer = layer.unwrap_or(ck.model.config.layers);
            let dir = run_dir(&cli.global, s.seed)?;
            let mut docs = Vec::new();
            for (k, (sent, enc)) in sentences.iter().zip(&data).enumerate() {
                let m = inspect::relevance(&ck.model, enc, layer)?;
                let tokens = &sent.tokens[..m.shape()[0]];
                write_text(&dir.join(format!("relevance-{k}.csv")), &inspect::to_csv(tokens, &m))?;
                docs.push(inspect::to_json(tokens, layer, &m)?);
            }
            write_text(&dir.join("relevance.json"), &format!("[{}]\n", docs.join(",\n")))?;
            println!("wrote {} relevance matrices to {}", docs.len(), dir.display());
            Ok(())
        }
        Command::GenSynthetic => {
            let c = eegcn_core::corpus::gen_synthetic(&s.synth, s.synth_seed)?;
            let dir = run_dir(&cli.global, s.seed)?;
            write_corpus(&dir.join("train.jsonl"), &c.train)?;
            write_corpus(&dir.join("dev.jsonl"), &c.dev)?;
            write_corpus(&dir.join("test.jsonl"), &c.test)?;
            println!("wrote {}/{}/{} sentences to {}", c.train.len(), c.dev.len(), c.test.len(), dir.display());
            Ok(())
        }
        Command::CountParams { relations, edge_dim, hidden } => {
            for kind in [Baseline::EeGcn, Baseline::Rgcn, Baseline::Gcn] {
                let n = count_relation_params(kind, *relations, *edge_dim, *hidden)
                    .map_err(|e| Error::Usage(e.to_string()))?;
                println!("{:<6} {n}", kind.as_str());
            }
            Ok(())
        }
        Command::Bench { batches, warmup } => {
            let data = prepare(&s)?;
            let rows = bench::run(&s, &data.encoder, &data.train_enc, *batches, *warmup)?;
            print!("{}", bench::table(&rows));
            let dir = run_dir(&cli.global, s.seed)?;
            write_text(&dir.join("bench.json"), &json_text(&rows)?)
        }
        Command::Ablate { switches, seeds } => {
            let switches: Vec<Switch> = switches.iter().map(|x| x.parse()).collect::<Result<_>>()?;
            let data = prepare(&s)?;
            let rows = ablate::run_ablation(&s, &data, &switches, *seeds)?;
            print!("{}", ablate::table(&rows));
            let dir = run_dir(&cli.global, s.seed)?;
            write_text(&dir.join("ablation.json"), &json_text(&rows)?)
        }
        Command::Sweep { axis, seeds } => {
            let values = ablate::axis_values(axis)?;
            let data = prepare(&s)?;
            let rows = ablate::run_sweep(&s, &data, axis, &values, *seeds)?;
            print!("{}", ablate::table(&rows));
            let dir = run_dir(&cli.global, s.seed)?;
            write_text(&dir.join(format!("sweep-{axis}.json")), &json_text(&rows)?)
        }
    }
}

fn cmd_train(global: &Global, s: &Settings) -> Result<()> {
    let data = prepare(s)?;
    let dir = run_dir(global, s.seed)?;
    write_text(&dir.join("config.txt"), &s.to_text())?;
    let (mut model, _) = build_model(s, &data.encoder)?;
    let log_path = dir.join("metrics.jsonl");
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let state = train(&mut model, &data.encoder.tags, &data.train_enc, &data.dev_enc, s.seed, Some(&mut log))?;
    for r in &state.history {
        println!(
            "epoch {:>3}  dev P {:.4} R {:.4} F1 {:.4}",
            r.epoch, r.dev_precision, r.dev_recall, r.dev_f1
        );
    }
    checkpoint::save(&dir.join("model.ckpt"), &model, &data.encoder, s.seed)?;
    let mut summary = json!({"best_epoch": state.best_epoch, "best_dev_f1": state.best_dev_f1, "truncated": data.truncated});
    if !data.test_enc.is_empty() {
        let ev = evaluate(&model, &data.encoder.tags, &data.test_enc)?;
        print_report("test", &ev.report);
        summary["test"] = report_json(&ev.report);
    }
    write_text(&dir.join("summary.json"), &json_text(&summary)?)?;
    println!("best epoch {} (dev F1 {:.4}); run directory {}", state.best_epoch, state.best_dev_f1, dir.display());
    Ok(())
}
