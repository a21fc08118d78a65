//! Desk-scale reference learner that executes a [`MixPlan`], plus manifest
//! export for external trainers that replay the same plan on a real model.
//!
//! The learner has two parts:
//!
//! * a multinomial logistic intent classifier over hashed unigram and bigram
//!   features (FNV-1a 64, modulo `hash_dim`), trained by mini-batch SGD whose
//!   step size follows [`lr_at`];
//! * a filler lexicon mapping surface token sequences to `(etype, filler)`
//!   counts, scanned longest-match-first at prediction time.
//!
//! Speech items are stood in for by [`simulate_speech`], a seeded per-token
//! deletion/substitution channel. Substitutions draw from two fixed
//! confusions per word, so a model that sees simulated speech during training
//! can learn them.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, SemanticLabel, Utterance};
use crate::labelcodec::{normalize_filler, normalize_key, Decoded};
use crate::rng::{derive_seed, fnv1a64, SeededRng};
use crate::scheduler::{epoch_batches, plan_totals, MixPlan, Modality, ScheduleError, Scheme};

pub const DEFAULT_HASH_DIM: u32 = 1 << 18;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("total_steps must be positive")]
    ZeroSteps,
    #[error("step {step} beyond total_steps {total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("recipe has no phase-2 parameters")]
    MissingPhase2,
    #[error("invalid recipe: {0}")]
    Recipe(String),
    #[error("invalid speech simulator config: {0}")]
    SimConfig(String),
    #[error("plan item {0:?} not found in corpus")]
    UnresolvedId(String),
    #[error("plan item {0:?} is scheduled as speech but has no speech_ref")]
    NoSpeech(String),
    #[error("plan contains no training items")]
    EmptyPlan,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecipe {
    #[serde(default)]
    pub schedule_kind: ScheduleKind,
    pub peak_lr: f64,
    pub warmup_ratio: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub beams: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase2_peak_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase2_warmup_ratio: Option<f64>,
}

impl TrainRecipe {
    /// The large-model recipe: cosine schedule, peak 5e-6 with 4% warmup
    /// over three epochs, per-device batch 2 with 8 accumulation steps,
    /// 3-beam decoding. Curriculum runs its final speech epoch at peak 3e-6
    /// with 2% warmup.
    pub fn published(scheme: Scheme) -> Self {
        let curriculum = scheme == Scheme::Curriculum;
        Self {
            schedule_kind: ScheduleKind::Cosine,
            peak_lr: 5.0e-6,
            warmup_ratio: 0.04,
            epochs: 3,
            batch_size: 2,
            grad_accum: 8,
            beams: 3,
            phase2_peak_lr: curriculum.then_some(3.0e-6),
            phase2_warmup_ratio: curriculum.then_some(0.02),
        }
    }

    /// Same shape as [`TrainRecipe::published`] with step sizes suited to
    /// the SGD reference learner (the 5:3 phase ratio is kept).
    pub fn desk_scale(scheme: Scheme) -> Self {
        let curriculum = scheme == Scheme::Curriculum;
        Self {
            peak_lr: 1.0,
            batch_size: 16,
            phase2_peak_lr: curriculum.then_some(0.6),
            ..Self::published(scheme)
        }
    }

    /// Check ranges and that phase-2 fields are present iff `scheme` is
    /// curriculum.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate_for(&self, scheme: Scheme) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Recipe(m.to_string()));
        if !(self.peak_lr > 0.0) {
            return bad("peak_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must lie in [0, 1)");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.grad_accum == 0 {
            return bad("epochs, batch_size and grad_accum must be positive");
        }
        let has_phase2 = self.phase2_peak_lr.is_some() || self.phase2_warmup_ratio.is_some();
        match (scheme == Scheme::Curriculum, has_phase2) {
            (true, false) => return bad("curriculum recipe needs phase-2 parameters"),
            (false, true) => return bad("phase-2 parameters are only valid for curriculum"),
            _ => {}
        }
        if let Some(lr) = self.phase2_peak_lr {
            if !(lr > 0.0) {
                return bad("phase2_peak_lr must be positive");
            }
        }
        if let Some(w) = self.phase2_warmup_ratio {
            if !(0.0..1.0).contains(&w) {
                return bad("phase2_warmup_ratio must lie in [0, 1)");
            }
        }
        if scheme == Scheme::Curriculum && self.phase2_peak_lr.zip(self.phase2_warmup_ratio).is_none() {
            return bad("curriculum recipe needs both phase-2 parameters");
        }
        Ok(())
    }

    fn phase_params(&self, phase: u8) -> Result<(f64, f64), TrainError> {
        match phase {
            1 => Ok((self.peak_lr, self.warmup_ratio)),
            _ => self
                .phase2_peak_lr
                .zip(self.phase2_warmup_ratio)
                .ok_or(TrainError::MissingPhase2),
        }
    }
}

/// Linear warmup from 0 to the phase peak over `warmup_ratio * total_steps`,
/// then cosine decay to 0 at `total_steps`.
pub fn lr_at(recipe: &TrainRecipe, step: usize, total_steps: usize, phase: u8) -> Result<f64, TrainError> {
    if total_steps == 0 {
        return Err(TrainError::ZeroSteps);
    }
    if step > total_steps {
        return Err(TrainError::StepOutOfRange {
            step,
            total: total_steps,
        });
    }
    let (peak, ratio) = recipe.phase_params(phase)?;
    let warmup = ratio * total_steps as f64;
    let s = step as f64;
    if s < warmup {
        return Ok(peak * s / warmup);
    }
    let progress = (s - warmup) / (total_steps as f64 - warmup);
    Ok(peak * 0.5 * (1.0 + (PI * progress).cos()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeechSimConfig {
    pub substitution_rate: f64,
    pub deletion_rate: f64,
    pub seed: u64,
}

impl Default for SpeechSimConfig {
    fn default() -> Self {
        Self {
            substitution_rate: 0.3,
            deletion_rate: 0.05,
            seed: 0,
        }
    }
}

impl SpeechSimConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = |r: f64| (0.0..=1.0).contains(&r);
        if !ok(self.substitution_rate) || !ok(self.deletion_rate) {
            return Err(TrainError::SimConfig("rates must lie in [0, 1]".into()));
        }
        if self.substitution_rate + self.deletion_rate > 1.0 + 1e-12 {
            return Err(TrainError::SimConfig(
                "substitution_rate + deletion_rate must not exceed 1".into(),
            ));
        }
        Ok(())
    }

    /// Config for one utterance: same rates, seed derived from the item id.
    pub fn for_item(&self, id: &str) -> Self {
        Self {
            seed: derive_seed(self.seed, "speech-item", fnv1a64(id.as_bytes())),
            ..*self
        }
    }
}

/// Deterministic confusion `variant` of a token: one character replaced.
fn confuse(token: &str, variant: u64) -> String {
    let chars: Vec<char> = token.chars().collect();
    let h = fnv1a64(format!("{token}#{variant}").as_bytes());
    let pos = (h % chars.len() as u64) as usize;
    let mut letter = (b'a' + ((h >> 16) % 26) as u8) as char;
    if letter == chars[pos] {
        letter = (b'a' + ((letter as u8 - b'a' + 1) % 26)) as char;
    }
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| if i == pos { letter } else { *c })
        .collect()
}

/// Per-token channel output, aligned with the whitespace tokens of `text`
/// (`None` = deleted).
pub fn simulate_speech_aligned(text: &str, cfg: &SpeechSimConfig) -> Vec<Option<String>> {
    let mut rng = SeededRng::stream(cfg.seed, "speech-sim", 0);
    text.split_whitespace()
        .map(|tok| {
            let tok = tok.to_lowercase();
            let r = rng.next_f64();
            if r < cfg.deletion_rate {
                None
            } else if r < cfg.deletion_rate + cfg.substitution_rate {
                Some(confuse(&tok, rng.below(2)))
            } else {
                Some(tok)
            }
        })
        .collect()
}

/// Seeded per-token substitution/deletion over lowercased whitespace tokens.
pub fn simulate_speech(text: &str, cfg: &SpeechSimConfig) -> Vec<String> {
    simulate_speech_aligned(text, cfg).into_iter().flatten().collect()
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn features(tokens: &[String], dim: u32) -> Vec<u32> {
    let h = |s: String| (fnv1a64(s.as_bytes()) % u64::from(dim)) as u32;
    let mut out: Vec<u32> = tokens.iter().map(|t| h(format!("u:{t}"))).collect();
    out.extend(tokens.windows(2).map(|w| h(format!("b:{} {}", w[0], w[1]))));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub etype: String,
    pub filler: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: u8,
    pub text_items: usize,
    pub speech_items: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub hash_dim: u32,
    /// Intent classes, sorted.
    pub classes: Vec<SemanticIntent>,
    pub class_counts: Vec<usize>,
    pub bias: Vec<f64>,
    /// Hashed feature → per-class weight.
    pub intent_weights: BTreeMap<u32, Vec<f64>>,
    /// Lowercased surface token sequence → candidate labels.
    pub filler_lexicon: BTreeMap<String, Vec<LexiconEntry>>,
    pub max_surface_tokens: usize,
    pub train_log: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SemanticIntent {
    pub scenario: String,
    pub action: String,
}

impl ModelState {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TrainError> {
        Ok(serde_json::from_str(s)?)
    }

    fn scores(&self, feats: &[u32]) -> Vec<f64> {
        let mut s = self.bias.clone();
        for f in feats {
            if let Some(w) = self.intent_weights.get(f) {
                for (acc, wk) in s.iter_mut().zip(w) {
                    *acc += wk;
                }
            }
        }
        s
    }

    fn prior_class(&self) -> Option<usize> {
        argmax_first(&self.class_counts.iter().map(|&c| c as f64).collect::<Vec<_>>())
    }
}

/// Index of the maximum; ties go to the lowest index (classes are sorted,
/// so this is the lexicographically first name).
fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

struct PreparedItem {
    feats: Vec<u32>,
    class: usize,
    lexicon: Vec<(String, String, String)>,
}

fn find_span(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn prepare(
    u: &Utterance,
    modality: Modality,
    class: usize,
    sim: &SpeechSimConfig,
    dim: u32,
) -> PreparedItem {
    let clean = tokenize(&u.text);
    let mut lexicon = Vec::new();
    let tokens = match modality {
        Modality::Text => {
            for e in &u.label.entities {
                let surface = tokenize(&e.filler).join(" ");
                lexicon.push((surface, e.etype.clone(), e.filler.clone()));
            }
            clean
        }
        Modality::Speech => {
            let aligned = simulate_speech_aligned(&u.text, &sim.for_item(&u.id));
            for e in &u.label.entities {
                let filler_toks = tokenize(&e.filler);
                if let Some(start) = find_span(&clean, &filler_toks) {
                    let heard: Vec<&str> = aligned[start..start + filler_toks.len()]
                        .iter()
                        .flatten()
                        .map(String::as_str)
                        .collect();
                    if !heard.is_empty() {
                        lexicon.push((heard.join(" "), e.etype.clone(), e.filler.clone()));
                    }
                }
            }
            aligned.into_iter().flatten().collect()
        }
    };
    PreparedItem {
        feats: features(&tokens, dim),
        class,
        lexicon,
    }
}

fn intent_of(label: &SemanticLabel) -> SemanticIntent {
    SemanticIntent {
        scenario: label.scenario.clone(),
        action: label.action.clone(),
    }
}

/// Phase of 1-based `epoch`: curriculum's final epoch is phase 2.
pub fn phase_of(plan: &MixPlan, epoch: usize) -> u8 {
    if plan.config.scheme == Scheme::Curriculum && epoch == plan.epochs.len() {
        2
    } else {
        1
    }
}

pub fn train(
    plan: &MixPlan,
    corpus: &Corpus,
    recipe: &TrainRecipe,
    sim: &SpeechSimConfig,
) -> Result<ModelState, TrainError> {
    train_with_dim(plan, corpus, recipe, sim, DEFAULT_HASH_DIM)
}

pub fn train_with_dim(
    plan: &MixPlan,
    corpus: &Corpus,
    recipe: &TrainRecipe,
    sim: &SpeechSimConfig,
    hash_dim: u32,
) -> Result<ModelState, TrainError> {
    recipe.validate_for(plan.config.scheme)?;
    sim.validate()?;
    let totals = plan_totals(plan);
    if totals.text + totals.speech == 0 {
        return Err(TrainError::EmptyPlan);
    }

    // Resolve every id and fix the class inventory up front.
    let mut class_set: BTreeMap<SemanticIntent, usize> = BTreeMap::new();
    for ep in &plan.epochs {
        for (ids, speech) in [(&ep.text_item_ids, false), (&ep.speech_item_ids, true)] {
            for id in ids {
                let u = corpus.get(id).ok_or_else(|| TrainError::UnresolvedId(id.clone()))?;
                if speech && !u.has_speech() {
                    return Err(TrainError::NoSpeech(id.clone()));
                }
                class_set.entry(intent_of(&u.label)).or_default();
            }
        }
    }
    let classes: Vec<SemanticIntent> = class_set.keys().cloned().collect();
    for (i, c) in classes.iter().enumerate() {
        class_set.insert(c.clone(), i);
    }
    let k = classes.len();

    let mut model = ModelState {
        hash_dim,
        classes,
        class_counts: vec![0; k],
        bias: vec![0.0; k],
        intent_weights: BTreeMap::new(),
        filler_lexicon: BTreeMap::new(),
        max_surface_tokens: 0,
        train_log: Vec::new(),
    };
    let mut lex_counts: BTreeMap<String, BTreeMap<(String, String), usize>> = BTreeMap::new();
    let mut cache: HashMap<(String, Modality), PreparedItem> = HashMap::new();

    let batches: Vec<Vec<Vec<crate::scheduler::BatchItem>>> = (1..=plan.epochs.len())
        .map(|e| epoch_batches(plan, e, recipe.batch_size, plan.config.seed))
        .collect::<Result<_, _>>()?;
    let mut phase_steps: BTreeMap<u8, usize> = BTreeMap::new();
    for (i, b) in batches.iter().enumerate() {
        *phase_steps.entry(phase_of(plan, i + 1)).or_default() += b.len();
    }
    let mut phase_pos: BTreeMap<u8, usize> = BTreeMap::new();

    for (i, epoch_batches) in batches.iter().enumerate() {
        let epoch = i + 1;
        let phase = phase_of(plan, epoch);
        let total_steps = phase_steps[&phase];
        let mut log = EpochLog {
            epoch,
            phase,
            text_items: 0,
            speech_items: 0,
            steps: epoch_batches.len(),
            mean_loss: 0.0,
            train_accuracy: 0.0,
        };
        let mut correct = 0usize;
        let mut loss_sum = 0.0;
        for batch in epoch_batches {
            let pos = phase_pos.entry(phase).or_default();
            let lr = lr_at(recipe, *pos, total_steps, phase)?;
            *pos += 1;

            let mut grad: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            let mut grad_bias = vec![0.0; k];
            for item in batch {
                match item.modality {
                    Modality::Text => log.text_items += 1,
                    Modality::Speech => log.speech_items += 1,
                }
                let key = (item.id.clone(), item.modality);
                if !cache.contains_key(&key) {
                    let u = corpus.get(&item.id).expect("resolved above");
                    let class = class_set[&intent_of(&u.label)];
                    cache.insert(key.clone(), prepare(u, item.modality, class, sim, hash_dim));
                }
                let prepared = &cache[&key];
                model.class_counts[prepared.class] += 1;
                for (surface, etype, filler) in &prepared.lexicon {
                    *lex_counts
                        .entry(surface.clone())
                        .or_default()
                        .entry((etype.clone(), filler.clone()))
                        .or_default() += 1;
                }

                let probs = softmax(&model.scores(&prepared.feats));
                loss_sum -= probs[prepared.class].max(1e-300).ln();
                if argmax_first(&probs) == Some(prepared.class) {
                    correct += 1;
                }
                let mut delta = probs;
                delta[prepared.class] -= 1.0;
                for (g, d) in grad_bias.iter_mut().zip(&delta) {
                    *g += d;
                }
                for f in &prepared.feats {
                    let g = grad.entry(*f).or_insert_with(|| vec![0.0; k]);
                    for (gk, d) in g.iter_mut().zip(&delta) {
                        *gk += d;
                    }
                }
            }
            let scale = lr / batch.len() as f64;
            for (b, g) in model.bias.iter_mut().zip(&grad_bias) {
                *b -= scale * g;
            }
            for (f, g) in grad {
                let w = model.intent_weights.entry(f).or_insert_with(|| vec![0.0; k]);
                for (wk, gk) in w.iter_mut().zip(&g) {
                    *wk -= scale * gk;
                }
            }
        }
        let n = log.text_items + log.speech_items;
        if n > 0 {
            log.mean_loss = loss_sum / n as f64;
            log.train_accuracy = correct as f64 / n as f64;
        }
        model.train_log.push(log);
    }

    for (surface, counts) in lex_counts {
        if surface.is_empty() {
            continue;
        }
        model.max_surface_tokens = model.max_surface_tokens.max(surface.split(' ').count());
        let mut entries: Vec<LexiconEntry> = counts
            .into_iter()
            .map(|((etype, filler), count)| LexiconEntry { etype, filler, count })
            .collect();
        entries.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then_with(|| a.etype.cmp(&b.etype))
                .then_with(|| a.filler.cmp(&b.filler))
        });
        model.filler_lexicon.insert(surface, entries);
    }
    Ok(model)
}

/// Predict a label for an input token sequence. An untrained model (no
/// classes) yields [`Decoded::Unparseable`].
pub fn predict(model: &ModelState, input: &[String]) -> Decoded {
    let tokens: Vec<String> = input.iter().map(|t| t.to_lowercase()).collect();
    let class = if tokens.is_empty() {
        model.prior_class()
    } else {
        argmax_first(&model.scores(&features(&tokens, model.hash_dim)))
    };
    let Some(class) = class else {
        return Decoded::Unparseable;
    };
    let intent = &model.classes[class];

    let mut entities = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let longest = (1..=model.max_surface_tokens.min(tokens.len() - i))
            .rev()
            .find_map(|len| {
                model
                    .filler_lexicon
                    .get(&tokens[i..i + len].join(" "))
                    .and_then(|e| e.first())
                    .map(|e| (len, e))
            });
        match longest {
            Some((len, e)) => {
                entities.push(crate::corpus::Entity::new(
                    normalize_key(&e.etype),
                    normalize_filler(&e.filler),
                ));
                i += len;
            }
            None => i += 1,
        }
    }
    Decoded::Parsed(SemanticLabel::new(
        intent.scenario.clone(),
        intent.action.clone(),
        entities,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrPhase {
    pub phase: u8,
    pub epochs: Vec<usize>,
    pub schedule: ScheduleKind,
    pub peak_lr: f64,
    pub warmup_ratio: f64,
    /// Modules an external trainer keeps frozen in this phase.
    pub freeze: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEpoch {
    pub epoch: usize,
    pub phase: u8,
    pub text_ids: Vec<String>,
    pub speech_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeHints {
    pub strategy: String,
    pub beams: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub manifest_version: u32,
    pub corpus_ref: String,
    pub scheme: Scheme,
    pub speech_proportion: f64,
    pub seed: u64,
    pub n_speech: usize,
    pub speech_budget: usize,
    pub optimizer: String,
    pub precision: String,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub lr_phases: Vec<LrPhase>,
    pub decode: DecodeHints,
    pub epochs: Vec<ManifestEpoch>,
}

pub fn build_manifest(
    plan: &MixPlan,
    recipe: &TrainRecipe,
    corpus_ref: &str,
) -> Result<TrainManifest, TrainError> {
    recipe.validate_for(plan.config.scheme)?;
    let mut lr_phases: Vec<LrPhase> = Vec::new();
    for ep in &plan.epochs {
        let phase = phase_of(plan, ep.epoch);
        match lr_phases.iter_mut().find(|p| p.phase == phase) {
            Some(p) => p.epochs.push(ep.epoch),
            None => {
                let (peak_lr, warmup_ratio) = recipe.phase_params(phase)?;
                lr_phases.push(LrPhase {
                    phase,
                    epochs: vec![ep.epoch],
                    schedule: recipe.schedule_kind,
                    peak_lr,
                    warmup_ratio,
                    freeze: Vec::new(),
                });
            }
        }
    }
    // Phases that never see speech keep the audio side frozen.
    for p in &mut lr_phases {
        let has_speech = plan
            .epochs
            .iter()
            .any(|e| p.epochs.contains(&e.epoch) && !e.speech_item_ids.is_empty());
        if !has_speech {
            p.freeze = vec!["audio_encoder".into(), "adapter".into()];
        }
    }
    Ok(TrainManifest {
        manifest_version: MANIFEST_VERSION,
        corpus_ref: corpus_ref.to_string(),
        scheme: plan.config.scheme,
        speech_proportion: plan.config.effective_p(),
        seed: plan.config.seed,
        n_speech: plan.n_speech,
        speech_budget: plan.budget,
        optimizer: "adamw".into(),
        precision: "bfloat16".into(),
        batch_size: recipe.batch_size,
        grad_accum: recipe.grad_accum,
        lr_phases,
        decode: DecodeHints {
            strategy: "beam_search".into(),
            beams: recipe.beams,
        },
        epochs: plan
            .epochs
            .iter()
            .map(|e| ManifestEpoch {
                epoch: e.epoch,
                phase: phase_of(plan, e.epoch),
                text_ids: e.text_item_ids.clone(),
                speech_ids: e.speech_item_ids.clone(),
            })
            .collect(),
    })
}

/// Build the manifest and write it as pretty JSON to `out`.
pub fn export_manifest(
    plan: &MixPlan,
    recipe: &TrainRecipe,
    corpus_ref: &str,
    out: &Path,
) -> Result<TrainManifest, TrainError> {
    let manifest = build_manifest(plan, recipe, corpus_ref)?;
    fs::write(out, serde_json::to_string_pretty(&manifest)?).map_err(|source| TrainError::Io {
        path: out.display().to_string(),
        source,
    })?;
    Ok(manifest)
}
