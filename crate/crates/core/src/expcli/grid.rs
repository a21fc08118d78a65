use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::crosslingual::{make_crosslingual_corpus, source_origin, CrossLingualMode};
use super::report::{aggregate_rows, render_report, write_aggregate_csv, AggregateRow, ReportStyle};
use super::{io_err, json_err, ExpError};
use crate::corpus::{load_corpus, Corpus, Profile, Recordings, SemanticLabel, Split};
use crate::labelcodec::{parse_label, serialize_label, Decoded};
use crate::metrics::{evaluate, MetricReport, PredictionRecord};
use crate::scheduler::{
    build_plan, build_plan_from_pool, nested_permutation, speech_budget, MixPlan, SchedulerConfig, Scheme,
};
use crate::synth::{generate, pseudo_language};
use crate::trainer::{
    predict, simulate_speech, tokenize, train_with_dim, ModelState, SpeechSimConfig, TrainRecipe, DEFAULT_HASH_DIM,
};

pub const EXPERIMENT_MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_SPEECH_LEVELS: [f64; 7] = [0.0, 0.02, 0.05, 0.10, 0.25, 0.50, 1.0];
pub const DEFAULT_FEWSHOT_PAIRS: usize = 115;

/// Where a named corpus comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusSpec {
    File {
        path: PathBuf,
        #[serde(default = "default_profile")]
        profile: String,
        #[serde(default)]
        recordings: Recordings,
    },
    Synthetic {
        n: usize,
        lang: String,
        seed: u64,
    },
    /// A synthetic corpus rewritten into a pseudo-language.
    PseudoLanguage {
        n: usize,
        lang: String,
        seed: u64,
        keep_ratio: f64,
    },
}

fn default_profile() -> String {
    "canonical".into()
}

impl CorpusSpec {
    pub fn load(&self) -> Result<Corpus, ExpError> {
        match self {
            CorpusSpec::File {
                path,
                profile,
                recordings,
            } => {
                let profile = match profile.parse::<Profile>()? {
                    Profile::Slurp { .. } => Profile::Slurp {
                        recordings: *recordings,
                    },
                    p => p,
                };
                Ok(load_corpus(path, profile)?)
            }
            CorpusSpec::Synthetic { n, lang, seed } => Ok(generate(*n, lang, *seed)),
            CorpusSpec::PseudoLanguage {
                n,
                lang,
                seed,
                keep_ratio,
            } => Ok(pseudo_language(&generate(*n, "en", *seed), lang, *keep_ratio)?),
        }
    }

    /// Relative file paths are taken relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        if let CorpusSpec::File { path, .. } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalModality {
    /// Simulated speech for records that have a speech reference.
    #[default]
    Speech,
    /// Gold transcripts (the oracle setting).
    Transcript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLingualSpec {
    pub source: String,
    pub targets: Vec<String>,
    /// Full target-language text-only corpora, matched to targets by language.
    #[serde(default)]
    pub massive: Vec<String>,
    pub modes: Vec<CrossLingualMode>,
    #[serde(default = "default_fewshot")]
    pub fewshot_pairs: usize,
}

fn default_fewshot() -> usize {
    DEFAULT_FEWSHOT_PAIRS
}

fn default_version() -> u32 {
    EXPERIMENT_MANIFEST_VERSION
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

fn default_levels() -> Vec<f64> {
    DEFAULT_SPEECH_LEVELS.to_vec()
}

fn default_epochs() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    #[serde(default = "default_version")]
    pub manifest_version: u32,
    pub corpora: BTreeMap<String, CorpusSpec>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_levels")]
    pub speech_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Defaults to the desk-scale recipe; phase-2 fields apply to curriculum only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<TrainRecipe>,
    #[serde(default)]
    pub sim: SpeechSimConfig,
    #[serde(default)]
    pub eval_modality: EvalModality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash_dim: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crosslingual: Option<CrossLingualSpec>,
}

impl ExperimentManifest {
    pub fn from_path(path: &Path) -> Result<Self, ExpError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut m: Self = serde_json::from_str(&text).map_err(json_err(path.display().to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for spec in m.corpora.values_mut() {
            spec.resolve(base);
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ExpError> {
        let bad = |m: String| Err(ExpError::Manifest(m));
        if self.manifest_version != EXPERIMENT_MANIFEST_VERSION {
            return bad(format!("unsupported manifest_version {}", self.manifest_version));
        }
        if self.corpora.is_empty() || self.schemes.is_empty() || self.seeds.is_empty() {
            return bad("corpora, schemes and seeds must be non-empty".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if let Some(p) = self.speech_levels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("speech level {p} outside [0, 1]"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be unique".into());
        }
        self.sim.validate()?;
        for scheme in &self.schemes {
            self.recipe_for(*scheme).validate_for(*scheme)?;
        }
        if let Some(xl) = &self.crosslingual {
            let known = |n: &String| self.corpora.contains_key(n);
            if !known(&xl.source) || !xl.targets.iter().all(known) || !xl.massive.iter().all(known) {
                return bad("cross-lingual corpus names must appear in corpora".into());
            }
            if xl.targets.is_empty() || xl.modes.is_empty() {
                return bad("cross-lingual targets and modes must be non-empty".into());
            }
        }
        Ok(())
    }

    /// Recipe for one scheme: manifest epochs win, phase-2 fields are dropped
    /// unless the scheme is curriculum.
    pub fn recipe_for(&self, scheme: Scheme) -> TrainRecipe {
        let mut r = self
            .recipe
            .unwrap_or_else(|| TrainRecipe::desk_scale(Scheme::Curriculum));
        r.epochs = self.epochs;
        if scheme != Scheme::Curriculum {
            r.phase2_peak_lr = None;
            r.phase2_warmup_ratio = None;
        }
        r
    }

    /// All cells of the grid, in a fixed order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        let mut push = |corpus: &str, mode: Option<CrossLingualMode>, scheme: Scheme, level: f64| {
            for &seed in &self.seeds {
                out.push(CellKey {
                    corpus: corpus.to_string(),
                    mode,
                    scheme,
                    speech_level: level,
                    seed,
                });
            }
        };
        match &self.crosslingual {
            None => {
                for name in self.corpora.keys() {
                    for &scheme in &self.schemes {
                        for &level in &self.speech_levels {
                            if (scheme == Scheme::TextOnly) == (level == 0.0) {
                                push(name, None, scheme, level);
                            }
                        }
                    }
                }
            }
            Some(xl) => {
                for &mode in &xl.modes {
                    for &scheme in &self.schemes {
                        for &level in &self.speech_levels {
                            let keep = if level > 0.0 {
                                scheme != Scheme::TextOnly && mode.uses_source()
                            } else {
                                scheme == Scheme::TextOnly || mode.target_speech()
                            };
                            if keep {
                                push(&xl.source, Some(mode), scheme, level);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Identity of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub corpus: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<CrossLingualMode>,
    pub scheme: Scheme,
    pub speech_level: f64,
    pub seed: u64,
}

/// Hash of everything that affects a cell's result. Grid axes (schemes,
/// levels, seeds, modes) and the worker count are excluded so a grid can be
/// extended without invalidating finished cells.
pub fn manifest_hash(manifest: &ExperimentManifest) -> String {
    let mut m = manifest.clone();
    m.schemes.clear();
    m.speech_levels.clear();
    m.seeds.clear();
    m.workers = None;
    if let Some(xl) = &mut m.crosslingual {
        xl.modes.clear();
    }
    hex::encode(Sha256::digest(serde_json::to_vec(&m).expect("manifest serializes")))
}

pub fn cell_id(manifest_hash: &str, key: &CellKey) -> String {
    let mut h = Sha256::new();
    h.update(manifest_hash.as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_vec(key).expect("key serializes"));
    hex::encode(h.finalize())[..16].to_string()
}

/// Result file of one cell; `reports` maps evaluation group (corpus name)
/// to its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell_id: String,
    pub key: CellKey,
    pub reports: BTreeMap<String, MetricReport>,
}

/// One line of a predictions JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub utt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<SemanticLabel>,
    pub pred_raw: String,
}

impl PredictionLine {
    /// Pair with gold (inline or looked up in `gold`) and parse the raw output.
    pub fn to_record(&self, gold: Option<&Corpus>) -> Result<PredictionRecord, ExpError> {
        let label = match (&self.gold, gold) {
            (Some(l), _) => l.clone(),
            (None, Some(c)) => c
                .get(&self.utt_id)
                .map(|u| u.label.clone())
                .ok_or_else(|| ExpError::Other(format!("no gold record for {}", self.utt_id)))?,
            (None, None) => return Err(ExpError::Other(format!("no gold label for {}", self.utt_id))),
        };
        Ok(PredictionRecord::new(self.utt_id.clone(), label, parse_label(&self.pred_raw)))
    }
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionLine>, ExpError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(json_err(format!("{}:{}", path.display(), i + 1)))?);
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, lines: &[PredictionLine]) -> Result<(), ExpError> {
    let mut buf = Vec::new();
    for l in lines {
        serde_json::to_writer(&mut buf, l).map_err(json_err("predictions"))?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExpError> {
    let text = serde_json::to_string_pretty(value).map_err(json_err(path.display().to_string()))?;
    fs::write(path, text).map_err(io_err(path))
}

/// Model input for one test record.
pub(crate) fn eval_input(u: &crate::corpus::Utterance, modality: EvalModality, sim: &SpeechSimConfig) -> Vec<String> {
    match modality {
        EvalModality::Speech if u.has_speech() => simulate_speech(&u.text, &sim.for_item(&u.id)),
        _ => tokenize(&u.text),
    }
}

pub(crate) fn predict_split(
    model: &ModelState,
    corpus: &Corpus,
    split: Split,
    modality: EvalModality,
    sim: &SpeechSimConfig,
    group: Option<&str>,
) -> Vec<PredictionLine> {
    corpus
        .records()
        .iter()
        .filter(|u| u.split == split)
        .map(|u| {
            let pred_raw = match predict(model, &eval_input(u, modality, sim)) {
                Decoded::Parsed(l) => serialize_label(&l).unwrap_or_default(),
                Decoded::Unparseable => String::new(),
            };
            PredictionLine {
                utt_id: u.id.clone(),
                group: group.map(str::to_string),
                gold: Some(u.label.clone()),
                pred_raw,
            }
        })
        .collect()
}

struct Loaded {
    corpora: BTreeMap<String, Corpus>,
}

impl Loaded {
    fn get(&self, name: &str) -> &Corpus {
        &self.corpora[name]
    }
}

struct CellOutput {
    plan: MixPlan,
    model: ModelState,
    preds: Vec<PredictionLine>,
    reports: BTreeMap<String, MetricReport>,
}

fn score(preds: &[PredictionLine]) -> Result<MetricReport, ExpError> {
    let records = preds.iter().map(|p| p.to_record(None)).collect::<Result<Vec<_>, _>>()?;
    Ok(evaluate(&records)?)
}

fn run_cell(manifest: &ExperimentManifest, loaded: &Loaded, key: &CellKey) -> Result<CellOutput, ExpError> {
    let hash_dim = manifest.hash_dim.unwrap_or(DEFAULT_HASH_DIM);
    let sim = &manifest.sim;
    let config = SchedulerConfig::new(key.scheme, key.speech_level, manifest.epochs, key.seed);
    match (&manifest.crosslingual, key.mode) {
        (Some(xl), Some(mode)) => {
            let source = loaded.get(&xl.source);
            let targets: Vec<Corpus> = xl.targets.iter().map(|n| loaded.get(n).clone()).collect();
            let massive: Vec<Corpus> = xl.massive.iter().map(|n| loaded.get(n).clone()).collect();
            let combined = make_crosslingual_corpus(source, &targets, &massive, mode, xl.fewshot_pairs, key.seed)?;
            let text_ids = combined.text_item_ids(Split::Train);
            let speech_ids = combined.speech_item_ids(Split::Train);
            let origin = format!("{}/", source_origin(&source.lang));
            let (src_speech, tgt_speech): (Vec<String>, Vec<String>) =
                speech_ids.into_iter().partition(|id| id.starts_with(&origin));
            let ordering = nested_permutation(&src_speech, key.seed)?;
            let budget = speech_budget(src_speech.len(), config.effective_p())?;
            let mut pool = ordering.prefix(budget).to_vec();
            pool.extend(tgt_speech);
            // Target pairs are always trained on; a text-only source still
            // sees them once per epoch.
            let mut cfg = config;
            if cfg.scheme == Scheme::TextOnly && !pool.is_empty() {
                cfg.scheme = Scheme::Direct;
            }
            let mut plan = build_plan_from_pool(&cfg, &text_ids, &pool)?;
            plan.n_speech = src_speech.len();
            let recipe = manifest.recipe_for(cfg.scheme);
            let model = train_with_dim(&plan, &combined, &recipe, sim, hash_dim)?;
            let mut preds = Vec::new();
            let mut reports = BTreeMap::new();
            for (name, t) in xl.targets.iter().zip(&targets) {
                let p = predict_split(&model, t, Split::Test, manifest.eval_modality, sim, Some(name));
                reports.insert(name.clone(), score(&p)?);
                preds.extend(p);
            }
            Ok(CellOutput {
                plan,
                model,
                preds,
                reports,
            })
        }
        _ => {
            let corpus = loaded.get(&key.corpus);
            let text_ids = corpus.text_item_ids(Split::Train);
            let ordering = nested_permutation(&corpus.speech_item_ids(Split::Train), key.seed)?;
            let plan = build_plan(&config, &text_ids, &ordering)?;
            let model = train_with_dim(&plan, corpus, &manifest.recipe_for(key.scheme), sim, hash_dim)?;
            let preds = predict_split(&model, corpus, Split::Test, manifest.eval_modality, sim, None);
            let mut reports = BTreeMap::new();
            reports.insert(key.corpus.clone(), score(&preds)?);
            Ok(CellOutput {
                plan,
                model,
                preds,
                reports,
            })
        }
    }
}

fn persist(dir: &Path, id: &str, key: &CellKey, out: &CellOutput) -> Result<CellReport, ExpError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("cell.json"), key)?;
    let plan_path = dir.join("plan.json");
    fs::write(&plan_path, out.plan.to_json()).map_err(io_err(&plan_path))?;
    let model_path = dir.join("model.json");
    fs::write(&model_path, out.model.to_json()).map_err(io_err(&model_path))?;
    write_predictions(&dir.join("preds.jsonl"), &out.preds)?;
    let report = CellReport {
        cell_id: id.to_string(),
        key: key.clone(),
        reports: out.reports.clone(),
    };
    // report.json marks completion, so it goes last via a rename.
    let tmp = dir.join("report.json.tmp");
    write_json(&tmp, &report)?;
    let done = dir.join("report.json");
    fs::rename(&tmp, &done).map_err(io_err(&done))?;
    Ok(report)
}

fn read_report(path: &Path) -> Option<CellReport> {
    serde_json::from_str(&fs::read_to_string(path).ok()?).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell_id: String,
    pub key: CellKey,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub total_cells: usize,
    pub ran: usize,
    pub skipped: usize,
    pub failures: Vec<CellFailure>,
    pub rows: Vec<AggregateRow>,
    /// Report files written, relative to the output directory.
    pub written: Vec<String>,
}

/// Run every cell (in parallel up to `manifest.workers`), skipping cells
/// whose `report.json` already exists, then aggregate and render reports.
/// Cell failures are collected, not fatal.
pub fn run_grid(manifest: &ExperimentManifest, out_dir: &Path) -> Result<GridOutcome, ExpError> {
    manifest.validate()?;
    let loaded = Loaded {
        corpora: manifest
            .corpora
            .iter()
            .map(|(name, spec)| Ok((name.clone(), spec.load()?)))
            .collect::<Result<_, ExpError>>()?,
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_json(&out_dir.join("manifest.json"), manifest)?;

    let hash = manifest_hash(manifest);
    let cells: Vec<(String, CellKey)> = manifest
        .cells()
        .into_iter()
        .map(|k| (cell_id(&hash, &k), k))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.workers.unwrap_or(0))
        .build()
        .map_err(|e| ExpError::Other(e.to_string()))?;
    let results: Vec<(bool, Result<CellReport, CellFailure>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|(id, key)| {
                let dir = out_dir.join(id);
                if let Some(r) = read_report(&dir.join("report.json")) {
                    return (false, Ok(r));
                }
                let res = run_cell(manifest, &loaded, key).and_then(|o| persist(&dir, id, key, &o));
                (
                    true,
                    res.map_err(|e| CellFailure {
                        cell_id: id.clone(),
                        key: key.clone(),
                        error: e.to_string(),
                    }),
                )
            })
            .collect()
    });

    let ran = results.iter().filter(|(r, _)| *r).count();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (_, r) in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(f) => failures.push(f),
        }
    }
    let failures_path = out_dir.join("failures.json");
    if failures.is_empty() {
        let _ = fs::remove_file(&failures_path);
    } else {
        write_json(&failures_path, &failures)?;
    }

    let rows = aggregate_cells(&reports)?;
    let mut written = vec!["aggregate.csv".to_string()];
    write_aggregate_csv(&out_dir.join("aggregate.csv"), &rows)?;
    let styles: Vec<(&str, ReportStyle)> = match &manifest.crosslingual {
        None => vec![("report", ReportStyle::Monolingual)],
        Some(xl) => {
            let mut s = Vec::new();
            if xl.modes.contains(&CrossLingualMode::ZeroShot) {
                s.push(("zeroshot", ReportStyle::ZeroshotRelative));
            }
            if xl.modes.iter().any(|m| *m != CrossLingualMode::ZeroShot) {
                s.push(("fewshot", ReportStyle::Fewshot));
            }
            s
        }
    };
    for (stem, style) in styles {
        let selected: Vec<AggregateRow> = match style {
            ReportStyle::ZeroshotRelative => rows
                .iter()
                .filter(|r| r.mode == Some(CrossLingualMode::ZeroShot))
                .cloned()
                .collect(),
            ReportStyle::Fewshot => rows
                .iter()
                .filter(|r| r.mode != Some(CrossLingualMode::ZeroShot))
                .cloned()
                .collect(),
            ReportStyle::Monolingual => rows.clone(),
        };
        match render_report(&selected, style) {
            Ok(rendered) => {
                for (ext, body) in [("md", &rendered.markdown), ("csv", &rendered.csv)] {
                    let path = out_dir.join(format!("{stem}.{ext}"));
                    fs::write(&path, body).map_err(io_err(&path))?;
                    written.push(format!("{stem}.{ext}"));
                }
            }
            Err(e) if !failures.is_empty() => {
                log_to(&out_dir.join("report-errors.txt"), &e.to_string())?;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(GridOutcome {
        total_cells: cells.len(),
        ran,
        skipped: cells.len() - ran,
        failures,
        rows,
        written,
    })
}

fn log_to(path: &Path, line: &str) -> Result<(), ExpError> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    writeln!(f, "{line}").map_err(io_err(path))
}

/// Every `report.json` under `dir` (one level deep), sorted by cell id.
pub fn load_cell_reports(dir: &Path) -> Result<Vec<CellReport>, ExpError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path().join("report.json");
        if path.is_file() {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            out.push(serde_json::from_str(&text).map_err(json_err(path.display().to_string()))?);
        }
    }
    out.sort_by(|a: &CellReport, b| a.cell_id.cmp(&b.cell_id));
    Ok(out)
}

pub fn aggregate_cells(reports: &[CellReport]) -> Result<Vec<AggregateRow>, ExpError> {
    aggregate_rows(reports)
}
