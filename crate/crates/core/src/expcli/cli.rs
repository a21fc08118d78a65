use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use super::grid::{predict_split, read_predictions, run_grid, write_predictions, EvalModality, ExperimentManifest};
use super::report::{read_aggregate_csv, render_report, write_aggregate_csv, ReportStyle};
use super::{aggregate_cells, io_err, json_err, load_cell_reports, ExpError};
use crate::corpus::{corpus_stats, load_corpus, write_canonical, Corpus, Profile, Recordings, Split};
use crate::metrics::evaluate;
use crate::scheduler::{build_plan, nested_permutation, MixPlan, SchedulerConfig, Scheme};
use crate::synth::generate;
use crate::trainer::{export_manifest, train_with_dim, ModelState, SpeechSimConfig, TrainRecipe, DEFAULT_HASH_DIM};

#[derive(Debug, Parser)]
#[command(name = "slu-mix", version, about = "Text/speech mixing experiments for SLU fine-tuning")]
struct Cli {
    /// Emit log events as JSON lines on stderr.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Slurp,
    Massive,
    Canonical,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    TextOnly,
    Direct,
    Curriculum,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::TextOnly => Scheme::TextOnly,
            SchemeArg::Direct => Scheme::Direct,
            SchemeArg::Curriculum => Scheme::Curriculum,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StyleArg {
    Monolingual,
    ZeroshotRelative,
    Fewshot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModalityArg {
    Speech,
    Transcript,
}

#[derive(Debug, clap::Args)]
struct CorpusArgs {
    /// Corpus file.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "canonical")]
    profile: ProfileArg,
    /// SLURP only: keep the first recording of each transcript.
    #[arg(long)]
    first_recording: bool,
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus, ExpError> {
        load(&self.corpus, self.profile, self.first_recording)
    }
}

#[derive(Debug, clap::Args)]
struct SimArgs {
    #[arg(long, default_value_t = 0.3)]
    sim_substitution: f64,
    #[arg(long, default_value_t = 0.05)]
    sim_deletion: f64,
    #[arg(long, default_value_t = 0)]
    sim_seed: u64,
}

impl SimArgs {
    fn config(&self) -> SpeechSimConfig {
        SpeechSimConfig {
            substitution_rate: self.sim_substitution,
            deletion_rate: self.sim_deletion,
            seed: self.sim_seed,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a corpus, validate it and write canonical JSONL.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "canonical")]
        profile: ProfileArg,
        #[arg(long)]
        first_recording: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a mix plan over a corpus's train split.
    Plan {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        /// Speech proportion in [0, 1].
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        #[arg(long, default_value_t = 3)]
        epochs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the reference learner on a plan.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        plan: PathBuf,
        /// Recipe JSON; defaults to the desk-scale recipe for the plan's scheme.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        hash_dim: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict a split and write predictions JSONL.
    Predict {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "speech")]
        modality: ModalityArg,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions JSONL.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        /// Gold corpus for lines without an inline gold label.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "canonical")]
        profile: ProfileArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate the cells of a runs directory into a CSV.
    Aggregate {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an aggregate CSV as Markdown and CSV tables.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "monolingual")]
        style: StyleArg,
        /// Output stem: writes `<out>.md` and `<out>.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment grid from a manifest.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the manifest's worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a training manifest for an external trainer.
    ExportManifest {
        #[arg(long)]
        plan: PathBuf,
        /// Recipe JSON; defaults to the published recipe for the plan's scheme.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus_ref: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus as canonical JSONL.
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value = "en")]
        lang: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Log {
    json: bool,
}

impl Log {
    fn event(&self, event: &str, fields: serde_json::Value) {
        let mut err = std::io::stderr().lock();
        if self.json {
            let mut obj = json!({ "event": event });
            if let (Some(o), serde_json::Value::Object(f)) = (obj.as_object_mut(), fields) {
                o.extend(f);
            }
            let _ = writeln!(err, "{obj}");
        } else {
            let _ = writeln!(err, "{event}: {fields}");
        }
    }

    fn error(&self, e: &ExpError) {
        self.event("error", json!({ "message": e.to_string() }));
    }
}

fn load(path: &Path, profile: ProfileArg, first_recording: bool) -> Result<Corpus, ExpError> {
    let profile = match profile {
        ProfileArg::Slurp => Profile::Slurp {
            recordings: if first_recording { Recordings::First } else { Recordings::All },
        },
        ProfileArg::Massive => Profile::Massive,
        ProfileArg::Canonical => Profile::Canonical,
    };
    Ok(load_corpus(path, profile)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ExpError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path.display().to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<(), ExpError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn run(cli: Cli, log: &Log) -> Result<i32, ExpError> {
    match cli.command {
        Command::Ingest {
            input,
            profile,
            first_recording,
            out,
        } => {
            let corpus = load(&input, profile, first_recording)?;
            write_canonical(&corpus, &out)?;
            let stats = corpus_stats(&corpus);
            log.event(
                "ingest",
                json!({ "records": corpus.len(), "lang": corpus.lang, "stats": stats, "out": out }),
            );
        }
        Command::Plan {
            corpus,
            scheme,
            p,
            epochs,
            seed,
            out,
        } => {
            let c = corpus.load()?;
            let config = SchedulerConfig::new(scheme.into(), p, epochs, seed);
            let ordering = nested_permutation(&c.speech_item_ids(Split::Train), seed)?;
            let plan = build_plan(&config, &c.text_item_ids(Split::Train), &ordering)?;
            write_text(&out, &plan.to_json())?;
            log.event(
                "plan",
                json!({ "scheme": plan.config.scheme, "budget": plan.budget, "n_speech": plan.n_speech, "out": out }),
            );
        }
        Command::Train {
            corpus,
            plan,
            config,
            sim,
            hash_dim,
            out,
        } => {
            let c = corpus.load()?;
            let plan: MixPlan = read_json(&plan)?;
            let recipe = match config {
                Some(p) => read_json(&p)?,
                None => TrainRecipe::desk_scale(plan.config.scheme),
            };
            let model = train_with_dim(&plan, &c, &recipe, &sim.config(), hash_dim.unwrap_or(DEFAULT_HASH_DIM))?;
            write_text(&out, &model.to_json())?;
            log.event("train", json!({ "epochs": model.train_log, "out": out }));
        }
        Command::Predict {
            corpus,
            model,
            split,
            modality,
            sim,
            out,
        } => {
            let c = corpus.load()?;
            let text = fs::read_to_string(&model).map_err(io_err(&model))?;
            let model = ModelState::from_json(&text)?;
            let modality = match modality {
                ModalityArg::Speech => EvalModality::Speech,
                ModalityArg::Transcript => EvalModality::Transcript,
            };
            let lines = predict_split(&model, &c, split.into(), modality, &sim.config(), None);
            write_predictions(&out, &lines)?;
            log.event("predict", json!({ "records": lines.len(), "out": out }));
        }
        Command::Evaluate {
            pred,
            gold,
            profile,
            out,
        } => {
            let gold = gold.map(|g| load(&g, profile, false)).transpose()?;
            let lines = read_predictions(&pred)?;
            let records = lines
                .iter()
                .map(|l| l.to_record(gold.as_ref()))
                .collect::<Result<Vec<_>, _>>()?;
            let report = evaluate(&records)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            match out {
                Some(out) => write_text(&out, &text)?,
                None => println!("{text}"),
            }
            log.event("evaluate", json!({ "records": records.len(), "slu_f1": report.slu_f1 }));
        }
        Command::Aggregate { runs, out } => {
            let reports = load_cell_reports(&runs)?;
            let rows = aggregate_cells(&reports)?;
            write_aggregate_csv(&out, &rows)?;
            log.event("aggregate", json!({ "cells": reports.len(), "rows": rows.len(), "out": out }));
        }
        Command::Report { input, style, out } => {
            let rows = read_aggregate_csv(&input)?;
            let style = match style {
                StyleArg::Monolingual => ReportStyle::Monolingual,
                StyleArg::ZeroshotRelative => ReportStyle::ZeroshotRelative,
                StyleArg::Fewshot => ReportStyle::Fewshot,
            };
            let rendered = render_report(&rows, style)?;
            let md = out.with_extension("md");
            let csv = out.with_extension("csv");
            write_text(&md, &rendered.markdown)?;
            write_text(&csv, &rendered.csv)?;
            log.event("report", json!({ "markdown": md, "csv": csv }));
        }
        Command::Grid { config, out, workers } => {
            let mut manifest = ExperimentManifest::from_path(&config)?;
            if workers.is_some() {
                manifest.workers = workers;
            }
            let outcome = run_grid(&manifest, &out)?;
            for f in &outcome.failures {
                log.event("cell_failed", json!({ "cell_id": f.cell_id, "error": f.error }));
            }
            log.event(
                "grid",
                json!({
                    "cells": outcome.total_cells,
                    "ran": outcome.ran,
                    "skipped": outcome.skipped,
                    "failed": outcome.failures.len(),
                    "written": outcome.written,
                }),
            );
            if !outcome.failures.is_empty() {
                return Ok(1);
            }
        }
        Command::ExportManifest {
            plan,
            config,
            corpus_ref,
            out,
        } => {
            let plan: MixPlan = read_json(&plan)?;
            let recipe = match config {
                Some(p) => read_json(&p)?,
                None => TrainRecipe::published(plan.config.scheme),
            };
            let m = export_manifest(&plan, &recipe, &corpus_ref, &out)?;
            log.event("export_manifest", json!({ "phases": m.lr_phases.len(), "out": out }));
        }
        Command::Synth { n, lang, seed, out } => {
            let corpus = generate(n, &lang, seed);
            write_canonical(&corpus, &out)?;
            log.event("synth", json!({ "records": corpus.len(), "out": out }));
        }
    }
    Ok(0)
}

/// Run the command line `args` (including the program name) and return the
/// process exit code: 0 success, 1 data error, 2 usage error.
pub fn cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let log = Log { json: parsed.json };
    match run(parsed, &log) {
        Ok(code) => code,
        Err(e) => {
            log.error(&e);
            1
        }
    }
}
