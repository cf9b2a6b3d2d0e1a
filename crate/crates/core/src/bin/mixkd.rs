use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use mixkd::bounds::{self, empirical_gap_experiment, BoundInput, Testbed};
use mixkd::data::{load_tsv, Encoded, Schema, Vocab};
use mixkd::distill::{distill_student, run_seeds, train_teacher, RunRecord, Variant};
use mixkd::eval::{
    balanced_sample, evaluate, export_cls_features, parse_kv, random_batch, sweep_grid, throughput_bench,
    ExperimentConfig, SweepGrid,
};
use mixkd::mixup::{make_pairs, MixupConfig, PairingMode};
use mixkd::model::{load_checkpoint, save_checkpoint, Checkpoint};
use mixkd::{Error, Result};

const EVAL_BATCH: usize = 64;

#[derive(Parser)]
#[command(name = "mixkd", version, about = "Mixup-augmented distillation of small text classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a teacher from scratch on the MLE loss.
    TrainTeacher {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<String>,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill a student from a teacher checkpoint.
    Distill {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        augmented: Option<PathBuf>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy (and F1 for two classes) of a checkpoint on a labelled file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: String,
        /// Label name (or index) counted as positive for F1.
        #[arg(long)]
        positive_class: Option<String>,
    },
    /// Write [CLS] features of originals and their mixup children to CSV.
    ExportEmbeddings {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "sentence,label")]
        schema: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        mixup_ratio: usize,
        #[arg(long, default_value_t = 0.4)]
        beta_alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Eval-mode forward throughput on random full-length batches.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 20)]
        measured_batches: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
    },
    /// Train one SM+TMKD student per cell of an α grid.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample-size thresholds and the empirical coverage check.
    Bound {
        #[command(subcommand)]
        which: BoundCommand,
    },
    /// Repeat one variant over several seeds and report mean ± std.
    Seeds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        variant: Variant,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Reuse a teacher instead of training one from the config.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BoundArgs {
    /// JSON file with any of the inputs below; flags override it.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "g")]
    g_cardinality: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    epsilon_p: Option<f64>,
    #[arg(long)]
    triangle: Option<f64>,
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    rademacher: Option<f64>,
    #[arg(long)]
    log_capacity: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BoundCommand {
    Hoeffding(BoundArgs),
    Thm1(BoundArgs),
    Thm2(BoundArgs),
    Thm3(BoundArgs),
    /// Coverage of the gap bound on the enumerable testbed.
    Verify {
        #[arg(long, default_value_t = 10)]
        bits: usize,
        #[arg(long, default_value_t = 64)]
        hypotheses: usize,
        #[arg(long, default_value_t = 200)]
        a: usize,
        #[arg(long, default_value_t = 0)]
        b_mix: usize,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        triangle: f64,
        #[arg(long, default_value_t = 0.4)]
        beta_alpha: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(2)
        }
    }
}

/// JSON on one line, then an aligned table.
fn emit(value: &impl Serialize, rows: &[(&str, String)]) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in rows {
        println!("{k:<width$}\t{v}");
    }
    Ok(())
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, serde_json::to_string_pretty(value)?)?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4}"))
}

fn save_with_record(ckpt: &Checkpoint, record: &RunRecord, out: &Path) -> Result<()> {
    save_checkpoint(ckpt, out)?;
    record.write_jsonl(out.with_extension("jsonl"))
}

fn report_run(record: &RunRecord, out: &Path) -> Result<()> {
    let m = record.final_metrics.as_ref();
    emit(
        &json!({ "checkpoint": out, "best_step": record.best_step, "steps": record.steps.len(), "metrics": m }),
        &[
            ("checkpoint", out.display().to_string()),
            ("steps", record.steps.len().to_string()),
            ("best_step", record.best_step.to_string()),
            ("accuracy", fmt_opt(m.map(|m| m.accuracy))),
            ("f1", fmt_opt(m.and_then(|m| m.f1))),
            ("seconds", format!("{:.1}", record.wall_clock_secs)),
        ],
    )
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainTeacher {
            config,
            data,
            schema,
            dev,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if schema.is_some() {
                cfg.schema = schema;
            }
            if dev.is_some() {
                cfg.dev_path = dev;
            }
            let prep = cfg.prepare(Some(&data), None)?;
            let model = cfg.model_config(prep.vocab.len(), prep.labels.len());
            let (params, record) = train_teacher(&model, &cfg.train, &prep.splits)?;
            let ckpt = Checkpoint {
                params,
                vocab: Some(prep.vocab.tokens().to_vec()),
                labels: Some(prep.labels),
            };
            save_with_record(&ckpt, &record, &out)?;
            report_run(&record, &out)
        }
        Command::Distill {
            config,
            teacher,
            variant,
            data,
            augmented,
            fraction,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if augmented.is_some() {
                cfg.augmented_path = augmented;
            }
            if let Some(f) = fraction {
                cfg.fraction = f;
            }
            let teacher = load_checkpoint(&teacher)?;
            let prep = cfg.prepare(data.as_deref(), Some(&teacher))?;
            let student_cfg = teacher.params.config.with_layers(cfg.student_layers);
            let (params, record) = distill_student(&cfg.train, &prep.splits, &teacher.params, &student_cfg, variant)?;
            let ckpt = Checkpoint {
                params,
                vocab: teacher.vocab.clone(),
                labels: Some(prep.labels),
            };
            save_with_record(&ckpt, &record, &out)?;
            report_run(&record, &out)
        }
        Command::Eval {
            model,
            data,
            schema,
            positive_class,
        } => {
            let ckpt = load_checkpoint(&model)?;
            let (vocab, labels) = checkpoint_text(&ckpt)?;
            let schema: Schema = schema.parse()?;
            let ds = load_tsv(&data, &schema.with_labels(&labels))?;
            let enc = Encoded::new(&ds.examples, &vocab, ckpt.params.config.max_seq_len, labels.len())?;
            let positive = match positive_class {
                Some(p) => Some(
                    labels
                        .iter()
                        .position(|l| *l == p)
                        .or_else(|| p.parse().ok().filter(|&i: &usize| i < labels.len()))
                        .ok_or_else(|| Error::Config(format!("unknown positive class {p:?}")))?,
                ),
                None => (labels.len() == 2).then_some(1),
            };
            let m = evaluate(&ckpt.params, &enc, EVAL_BATCH, positive)?;
            emit(
                &m,
                &[
                    ("n_eval", m.n_eval.to_string()),
                    ("accuracy", format!("{:.4}", m.accuracy)),
                    ("f1", fmt_opt(m.f1)),
                    ("f1_degenerate", m.f1_degenerate.to_string()),
                ],
            )
        }
        Command::ExportEmbeddings {
            model,
            data,
            schema,
            n,
            mixup_ratio,
            beta_alpha,
            seed,
            out,
        } => {
            let ckpt = load_checkpoint(&model)?;
            let (vocab, labels) = checkpoint_text(&ckpt)?;
            let schema: Schema = schema.parse()?;
            let ds = load_tsv(&data, &schema.with_labels(&labels))?;
            let enc = Encoded::new(&ds.examples, &vocab, ckpt.params.config.max_seq_len, labels.len())?;
            let indices = balanced_sample(&enc, n, seed);
            let mix = MixupConfig {
                beta_alpha,
                mixup_ratio,
                pairing: PairingMode::InBatchShuffle,
                seed,
            };
            mix.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let specs = make_pairs(indices.len(), &mix, &mut rng, 0)?;
            let rows = export_cls_features(&ckpt.params, &enc, &indices, &specs, &out)?;
            emit(
                &json!({ "out": out, "rows": rows, "originals": indices.len(), "mixed": specs.len() }),
                &[
                    ("out", out.display().to_string()),
                    ("rows", rows.to_string()),
                    ("originals", indices.len().to_string()),
                    ("mixed", specs.len().to_string()),
                ],
            )
        }
        Command::Bench {
            model,
            batch_size,
            measured_batches,
            warmup,
        } => {
            let ckpt = load_checkpoint(&model)?;
            let c = &ckpt.params.config;
            let batch = random_batch(c.vocab_size, c.num_classes, batch_size, c.max_seq_len, 0);
            let r = throughput_bench(&ckpt.params, &batch, warmup, measured_batches)?;
            emit(
                &json!({ "layers": c.num_layers, "report": r }),
                &[
                    ("layers", c.num_layers.to_string()),
                    ("param_count", r.param_count.to_string()),
                    ("batch_size", r.batch_size.to_string()),
                    ("samples_per_second", format!("{:.1}", r.samples_per_second)),
                ],
            )
        }
        Command::Sweep {
            grid,
            teacher,
            data,
            out,
        } => {
            let (cfg, grid) = load_grid(&grid)?;
            let teacher = load_checkpoint(&teacher)?;
            let prep = cfg.prepare(data.as_deref(), Some(&teacher))?;
            let student_cfg = teacher.params.config.with_layers(cfg.student_layers);
            let table = sweep_grid(&grid, &prep.splits, &teacher.params, &student_cfg)?;
            std::fs::create_dir_all(&out)?;
            table.write(&out)?;
            println!("{}", serde_json::to_string(&json!({ "cells": table.cells.len(), "accuracy_spread": table.accuracy_spread() }))?);
            print!("{}", table.to_tsv());
            Ok(())
        }
        Command::Bound { which } => run_bound(which),
        Command::Seeds {
            config,
            variant,
            seeds,
            teacher,
            data,
            out,
        } => {
            let cfg = load_config(&config)?;
            let (teacher, prep) = match teacher {
                Some(p) => {
                    let t = load_checkpoint(&p)?;
                    let prep = cfg.prepare(data.as_deref(), Some(&t))?;
                    (t.params, prep)
                }
                None => {
                    let prep = cfg.prepare(data.as_deref(), None)?;
                    let model = cfg.model_config(prep.vocab.len(), prep.labels.len());
                    (train_teacher(&model, &cfg.train, &prep.splits)?.0, prep)
                }
            };
            let student_cfg = teacher.config.with_layers(cfg.student_layers);
            let report = run_seeds(&cfg.train, &prep.splits, &teacher, &student_cfg, variant, &seeds)?;
            write_json(out.as_deref(), &report)?;
            println!(
                "{}",
                serde_json::to_string(&json!({
                    "variant": report.variant,
                    "seeds": report.seeds,
                    "accuracy": report.accuracy,
                    "f1": report.f1,
                    "per_seed": report.accuracies(),
                }))?
            );
            println!("seed\taccuracy");
            for (s, a) in report.seeds.iter().zip(report.accuracies()) {
                println!("{s:<4}\t{a:.4}");
            }
            println!("mean\t{}", report.accuracy);
            Ok(())
        }
    }
}

fn checkpoint_text(ckpt: &Checkpoint) -> Result<(Vocab, Vec<String>)> {
    let vocab = ckpt
        .vocab
        .clone()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no vocabulary".into()))?;
    let labels = ckpt
        .labels
        .clone()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no label names".into()))?;
    Ok((Vocab::from_tokens(vocab)?, labels))
}

/// A grid file is an experiment file plus comma-separated
/// `alpha_sm_values`, `alpha_tmkd_values` and `mixup_ratio_values`.
fn load_grid(path: &Path) -> Result<(ExperimentConfig, SweepGrid)> {
    let text = std::fs::read_to_string(path)?;
    let mut kv = parse_kv(&text, path)?;
    fn list<T: std::str::FromStr>(kv: &mut mixkd::eval::KvConfig, key: &str, default: &str) -> Result<Vec<T>> {
        let (line, raw) = kv.entries.remove(key).unwrap_or((0, default.to_string()));
        raw.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| Error::Parse {
                    path: kv.path.clone(),
                    line,
                    msg: format!("bad {key} entry {s:?}"),
                })
            })
            .collect()
    }
    let sm = list(&mut kv, "alpha_sm_values", "0,0.25,0.5,0.75,1")?;
    let tmkd = list(&mut kv, "alpha_tmkd_values", "0,0.25,0.5,0.75,1")?;
    let ratios = list(&mut kv, "mixup_ratio_values", "1")?;
    let cfg = ExperimentConfig::from_kv(&kv)?;
    let grid = SweepGrid {
        alpha_sm_values: sm,
        alpha_tmkd_values: tmkd,
        mixup_ratio_values: ratios,
        base: cfg.train.clone(),
    };
    Ok((cfg, grid))
}

fn bound_input(args: &BoundArgs) -> Result<BoundInput> {
    let mut b = match &args.input {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => BoundInput::default(),
    };
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut b.m, args.m);
    set(&mut b.delta, args.delta);
    set(&mut b.g_cardinality, args.g_cardinality);
    set(&mut b.a, args.a);
    set(&mut b.epsilon_p, args.epsilon_p);
    set(&mut b.triangle, args.triangle);
    set(&mut b.lipschitz, args.lipschitz);
    set(&mut b.rademacher, args.rademacher);
    set(&mut b.log_capacity, args.log_capacity);
    Ok(b)
}

fn run_bound(which: BoundCommand) -> Result<()> {
    let (name, args) = match &which {
        BoundCommand::Hoeffding(a) => ("hoeffding", a),
        BoundCommand::Thm1(a) => ("thm1", a),
        BoundCommand::Thm2(a) => ("thm2", a),
        BoundCommand::Thm3(a) => ("thm3", a),
        BoundCommand::Verify {
            bits,
            hypotheses,
            a,
            b_mix,
            trials,
            delta,
            triangle,
            beta_alpha,
            seed,
            out,
        } => {
            let tb = Testbed::new(*bits, *hypotheses, *seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let r = empirical_gap_experiment(&tb, *a, *b_mix, *trials, *delta, *triangle, *beta_alpha, &mut rng)?;
            write_json(out.as_deref(), &r)?;
            return emit(
                &r,
                &[
                    ("bound_value", format!("{:.6}", r.bound_value)),
                    ("coverage_fraction", format!("{:.4}", r.coverage_fraction)),
                    ("passed", r.passed.to_string()),
                    ("eps_p_surrogate", format!("{:.6}", r.eps_p_surrogate)),
                    ("eps_star_surrogate", format!("{:.6}", r.eps_star_surrogate)),
                ],
            );
        }
    };
    let b = bound_input(args)?;
    let value = match which {
        BoundCommand::Hoeffding(_) => {
            let n = args
                .n
                .or((b.a >= 1.0).then_some(b.a as u64))
                .ok_or_else(|| Error::Config("hoeffding needs --n".into()))?;
            json!({ "gap_bound": bounds::hoeffding_gap_bound(b.m, b.g_cardinality, b.delta, n)? })
        }
        BoundCommand::Thm1(_) => json!({
            "threshold": bounds::thm1_threshold(b.m, b.g_cardinality, b.delta, b.a, b.epsilon_p, b.triangle)?,
            "required_b": bounds::thm1_required_b(b.m, b.g_cardinality, b.delta, b.a, b.epsilon_p, b.triangle)?,
        }),
        BoundCommand::Thm2(_) => json!({
            "threshold": bounds::thm2_threshold(b.m, b.delta, b.a, b.epsilon_p, b.triangle, b.lipschitz, b.rademacher)?,
            "required_b": bounds::thm2_required_b(b.m, b.delta, b.a, b.epsilon_p, b.triangle, b.lipschitz, b.rademacher)?,
        }),
        BoundCommand::Thm3(_) => {
            let r = bounds::thm3_required_b(b.delta, b.a, b.epsilon_p, b.triangle, b.log_capacity)?;
            json!({
                "threshold": bounds::thm3_threshold(b.delta, b.a, b.epsilon_p, b.triangle, b.log_capacity)?,
                "required_b": r.required_b,
                "required_a_min": r.required_a_min,
                "gamma": r.gamma,
            })
        }
        BoundCommand::Verify { .. } => unreachable!(),
    };
    let report = json!({ "bound": name, "input": b, "result": value });
    write_json(args.out.as_deref(), &report)?;
    let rows: Vec<(&str, String)> = value
        .as_object()
        .map(|o| o.iter().map(|(k, v)| (k.as_str(), v.to_string())).collect())
        .unwrap_or_default();
    emit(&report, &rows)
}
