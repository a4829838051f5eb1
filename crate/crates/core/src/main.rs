use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use comphy::gnn::{
    self, evaluate_dynamics, evaluate_ppl, load_checkpoint, save_checkpoint, train, LossCurves,
    PplMetrics,
};
use comphy::pipeline::{
    answer, build_worlds, evaluate, generate_corpus, infer_corpus, read_corpus, read_json,
    render_table, requested_edits, write_corpus, write_json, AnswerRecord, Answerer, CorpusEntry,
    Metrics, Mode, PipelineError, RunConfig,
};
use comphy::program::{execute, parse_program, Program};
use comphy::questions::parse_question_nl;

#[derive(Parser)]
#[command(
    name = "comphy",
    version,
    about = "Physical-reasoning problem sets: generate, infer, answer, evaluate"
)]
struct Cli {
    /// Run configuration (.toml or .json); missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a corpus of problem sets with balanced questions.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        sets: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer hidden properties for every set of a corpus.
    Infer {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer every question of a corpus.
    Answer {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "inferred")]
        mode: Mode,
        /// Trained models, required by `--mode gnn`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score answers; prints a table and optionally writes metrics JSON.
    Eval {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute one program against one set's world.
    Exec {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        set: usize,
        /// Program text, e.g. `(query_color (unique (filter_shape (objects) cube)))`.
        #[arg(long, conflicts_with_all = ["question", "text"])]
        program: Option<String>,
        /// Id of a stored question; all its options are executed.
        #[arg(long, conflicts_with = "text")]
        question: Option<String>,
        /// Natural-language question text.
        #[arg(long)]
        text: Option<String>,
        #[arg(long, default_value = "oracle")]
        mode: Mode,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the property learner and dynamics predictor.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Loss curves as CSV (`epoch,ppl,dynamics,ppl_smoothed,dynamics_smoothed`).
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Evaluate trained models on a corpus.
    EvalGnn {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(serde::Serialize)]
struct GnnReport {
    properties: PplMetrics,
    dynamics_mse: f64,
    stationary_mse: f64,
    constant_velocity_mse: f64,
}

type Models = Option<(gnn::Ppl, gnn::Dynamics)>;

fn load_models(mode: Mode, checkpoint: Option<&Path>) -> Result<Models, String> {
    match (mode, checkpoint) {
        (Mode::Gnn, Some(p)) => Ok(Some(
            load_checkpoint(p).map_err(|e| format!("{}: {e}", p.display()))?,
        )),
        (Mode::Gnn, None) => Err("--mode gnn needs --checkpoint".into()),
        _ => Ok(None),
    }
}

fn answerer<'a>(mode: Mode, cfg: &'a RunConfig, models: &'a Models) -> Answerer<'a> {
    match (mode, models) {
        (Mode::Oracle, _) => Answerer::Oracle,
        (Mode::Inferred, _) | (Mode::Gnn, None) => Answerer::Inferred(&cfg.inference),
        (Mode::Gnn, Some((ppl, dynamics))) => Answerer::Gnn { ppl, dynamics },
    }
}

fn find_set(entries: &[CorpusEntry], set: usize) -> Result<&CorpusEntry, String> {
    entries
        .iter()
        .find(|e| e.index == set)
        .ok_or_else(|| format!("corpus has no set {set}"))
}

fn write_curves(path: &Path, c: &LossCurves) -> Result<(), String> {
    let mut s = String::from("epoch,ppl,dynamics,ppl_smoothed,dynamics_smoothed\n");
    for i in 0..c.ppl.len() {
        s.push_str(&format!(
            "{i},{},{},{},{}\n",
            c.ppl[i], c.dynamics[i], c.ppl_smoothed[i], c.dynamics_smoothed[i]
        ));
    }
    std::fs::write(path, s).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<(), String> {
    let err = |e: PipelineError| e.to_string();
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(err)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Generate { seed, sets, out } => {
            let corpus = generate_corpus(seed, sets, &cfg).map_err(err)?;
            let manifest = write_corpus(&out, seed, &corpus, &cfg).map_err(err)?;
            let b = &manifest.balance;
            println!(
                "{} sets, {} questions (factual/counterfactual/predictive {:.3}/{:.3}/{:.3})",
                manifest.sets,
                b.after.iter().sum::<usize>(),
                b.proportions[0],
                b.proportions[1],
                b.proportions[2]
            );
            println!("corpus sha256 {}", manifest.corpus_sha256);
        }
        Command::Infer { corpus, out } => {
            let (_, entries) = read_corpus(&corpus).map_err(err)?;
            let inferred = infer_corpus(&entries, &cfg.physics, &cfg.inference).map_err(err)?;
            let exact = inferred
                .iter()
                .filter(|s| s.masses_correct == s.masses && s.edges_correct == s.edges)
                .count();
            write_json(&out, &inferred).map_err(err)?;
            println!("{exact}/{} sets recovered exactly", inferred.len());
        }
        Command::Answer {
            corpus,
            mode,
            checkpoint,
            out,
        } => {
            let (_, entries) = read_corpus(&corpus).map_err(err)?;
            let models = load_models(mode, checkpoint.as_deref())?;
            let records = answer(&entries, answerer(mode, &cfg, &models), &cfg.physics);
            write_json(&out, &records).map_err(err)?;
            println!("{} questions answered", records.len());
        }
        Command::Eval { answers, out } => {
            let records: Vec<AnswerRecord> = read_json(&answers).map_err(err)?;
            let metrics: Metrics = evaluate(&records).map_err(err)?;
            print!("{}", render_table(&metrics));
            if let Some(out) = out {
                write_json(&out, &metrics).map_err(err)?;
            }
        }
        Command::Exec {
            corpus,
            set,
            program,
            question,
            text,
            mode,
            checkpoint,
        } => {
            let (_, entries) = read_corpus(&corpus).map_err(err)?;
            let entry = find_set(&entries, set)?;
            let programs: Vec<(String, Program)> = if let Some(p) = program {
                vec![(p.clone(), parse_program(&p).map_err(|e| e.to_string())?)]
            } else if let Some(t) = text {
                vec![(t.clone(), parse_question_nl(&t).map_err(|e| e.to_string())?)]
            } else if let Some(id) = question {
                let q = entry
                    .questions
                    .iter()
                    .find(|q| q.id == id)
                    .ok_or_else(|| format!("set {set} has no question {id}"))?;
                if q.choices.is_empty() {
                    vec![(q.text.clone(), q.program.clone())]
                } else {
                    q.choices
                        .iter()
                        .map(|c| (format!("{} {}", q.text, c.text), c.program.clone()))
                        .collect()
                }
            } else {
                return Err("exec needs --program, --question or --text".into());
            };
            let models = load_models(mode, checkpoint.as_deref())?;
            let edits = requested_edits(&entry.set, programs.iter().map(|(_, p)| p));
            let world = build_worlds(
                entry.index,
                &entry.set,
                &edits,
                answerer(mode, &cfg, &models),
                &cfg.physics,
            )
            .map_err(err)?;
            for (label, p) in &programs {
                match execute(p, &world) {
                    Ok(v) => println!("{label}\n  {p}\n  => {}", v.answer_text()),
                    Err(e) => println!("{label}\n  {p}\n  => error: {e}"),
                }
            }
        }
        Command::Train {
            corpus,
            out,
            seed,
            epochs,
            curves,
        } => {
            let (_, entries) = read_corpus(&corpus).map_err(err)?;
            let mut tc = cfg.train.clone();
            if let Some(s) = seed {
                tc.seed = s;
            }
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            let sets: Vec<_> = entries.into_iter().map(|e| e.set).collect();
            let trained = train(&sets, &tc, &cfg.physics).map_err(|e| e.to_string())?;
            save_checkpoint(&out, &trained.ppl, &trained.dynamics).map_err(|e| e.to_string())?;
            if let Some(c) = curves {
                write_curves(&c, &trained.curves)?;
            }
            println!(
                "final loss: properties {:.4}, dynamics {:.3e}",
                trained.curves.ppl.last().copied().unwrap_or(f64::NAN),
                trained.curves.dynamics.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::EvalGnn {
            corpus,
            checkpoint,
            out,
        } => {
            let (_, entries) = read_corpus(&corpus).map_err(err)?;
            let (ppl, dynm) = load_checkpoint(&checkpoint).map_err(|e| e.to_string())?;
            let sets: Vec<_> = entries.into_iter().map(|e| e.set).collect();
            let properties = evaluate_ppl(&ppl, &sets, &cfg.physics).map_err(|e| e.to_string())?;
            let (dynamics_mse, stationary_mse, constant_velocity_mse) =
                evaluate_dynamics(&dynm, &sets, &cfg.train, &cfg.physics)
                    .map_err(|e| e.to_string())?;
            let report = GnnReport {
                properties,
                dynamics_mse,
                stationary_mse,
                constant_velocity_mse,
            };
            let p = &report.properties;
            println!(
                "mass accuracy {:.3} (always light {:.3}), edge accuracy {:.3} (always none {:.3})",
                p.mass_accuracy,
                p.mass_majority_baseline,
                p.edge_accuracy,
                p.edge_majority_baseline
            );
            println!("one-step mse {dynamics_mse:.3e} (stationary {stationary_mse:.3e}, constant velocity {constant_velocity_mse:.3e})");
            if let Some(out) = out {
                write_json(&out, &report).map_err(err)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
