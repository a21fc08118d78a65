//! Per-epoch text/speech training plans for the three fine-tuning schemes.
//!
//! With `N` speech–label pairs, proportion `p` and `E` epochs the speech
//! budget is `N_p = round_half_up(p * N)` and the per-epoch allocation is
//!
//! | scheme     | epoch `e < E` | epoch `E`  |
//! |------------|---------------|------------|
//! | text_only  | 0             | 0          |
//! | direct     | `N_p`         | `N_p`      |
//! | curriculum | 0             | `N_p * E`  |
//!
//! so direct and curriculum see the same total speech exposure. The selected
//! pool is always the `N_p`-prefix of one seeded permutation, which makes the
//! pools at increasing `p` nested. Every text item appears once per epoch.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("speech proportion {0} outside [0, 1]")]
    Proportion(f64),
    #[error("epoch count must be at least 1")]
    NoEpochs,
    #[error("duplicate speech id {0:?}")]
    DuplicateId(String),
    #[error("speech budget {budget} exceeds the {available} available speech items")]
    BudgetExceedsPool { budget: usize, available: usize },
    #[error("epoch {epoch} outside 1..={epochs}")]
    EpochOutOfRange { epoch: usize, epochs: usize },
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("unknown scheme {0:?} (expected text_only, direct or curriculum)")]
    UnknownScheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    TextOnly,
    Direct,
    Curriculum,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::TextOnly, Scheme::Direct, Scheme::Curriculum];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::TextOnly => "text_only",
            Scheme::Direct => "direct",
            Scheme::Curriculum => "curriculum",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text_only" | "text" => Ok(Scheme::TextOnly),
            "direct" => Ok(Scheme::Direct),
            "curriculum" | "curr" => Ok(Scheme::Curriculum),
            other => Err(ScheduleError::UnknownScheme(other.to_string())),
        }
    }
}

/// `N_p = round_half_up(p * N)`.
///
/// A 1e-9 nudge absorbs binary representation error so that decimal halves
/// (e.g. `0.7 * 5 = 3.5`) round up.
pub fn speech_budget(n: usize, p: f64) -> Result<usize, ScheduleError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ScheduleError::Proportion(p));
    }
    let raw = (p * n as f64 + 0.5 + 1e-9).floor();
    Ok((raw as usize).min(n))
}

/// Seeded ordering over the speech ids; every level takes a prefix of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechOrdering {
    pub seed: u64,
    pub ids: Vec<String>,
}

impl SpeechOrdering {
    pub fn prefix(&self, len: usize) -> &[String] {
        &self.ids[..len.min(self.ids.len())]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn nested_permutation(speech_ids: &[String], seed: u64) -> Result<SpeechOrdering, ScheduleError> {
    let mut seen = HashSet::with_capacity(speech_ids.len());
    for id in speech_ids {
        if !seen.insert(id.as_str()) {
            return Err(ScheduleError::DuplicateId(id.clone()));
        }
    }
    let mut ids = speech_ids.to_vec();
    SeededRng::stream(seed, "speech-permutation", 0).shuffle(&mut ids);
    Ok(SpeechOrdering { seed, ids })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub scheme: Scheme,
    /// Speech proportion; ignored (treated as 0) for text_only.
    pub p: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Speech–label pairs available; `None` means the ordering length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_speech: Option<usize>,
}

impl SchedulerConfig {
    pub fn new(scheme: Scheme, p: f64, epochs: usize, seed: u64) -> Self {
        Self {
            scheme,
            p,
            epochs,
            seed,
            n_speech: None,
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(ScheduleError::Proportion(self.p));
        }
        if self.epochs == 0 {
            return Err(ScheduleError::NoEpochs);
        }
        Ok(())
    }

    pub fn effective_p(&self) -> f64 {
        match self.scheme {
            Scheme::TextOnly => 0.0,
            _ => self.p,
        }
    }

    /// Speech-item allocation `a_e` for 1-based `epoch`.
    pub fn allocation(&self, epoch: usize, budget: usize) -> usize {
        match self.scheme {
            Scheme::TextOnly => 0,
            Scheme::Direct => budget,
            Scheme::Curriculum if epoch == self.epochs => budget * self.epochs,
            Scheme::Curriculum => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPlan {
    /// 1-based.
    pub epoch: usize,
    pub text_item_ids: Vec<String>,
    pub speech_item_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub config: SchedulerConfig,
    pub n_speech: usize,
    pub budget: usize,
    /// The selected speech pool, in permutation order.
    pub pool: Vec<String>,
    pub epochs: Vec<EpochPlan>,
}

impl MixPlan {
    pub fn epoch(&self, epoch: usize) -> Result<&EpochPlan, ScheduleError> {
        if epoch == 0 || epoch > self.epochs.len() {
            return Err(ScheduleError::EpochOutOfRange {
                epoch,
                epochs: self.epochs.len(),
            });
        }
        Ok(&self.epochs[epoch - 1])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// Build the plan from the `N_p`-prefix of `ordering`.
pub fn build_plan(
    config: &SchedulerConfig,
    text_ids: &[String],
    ordering: &SpeechOrdering,
) -> Result<MixPlan, ScheduleError> {
    config.validate()?;
    let n = config.n_speech.unwrap_or(ordering.len());
    let budget = speech_budget(n, config.effective_p())?;
    if budget > ordering.len() {
        return Err(ScheduleError::BudgetExceedsPool {
            budget,
            available: ordering.len(),
        });
    }
    let mut plan = build_plan_from_pool(config, text_ids, ordering.prefix(budget))?;
    plan.n_speech = n;
    Ok(plan)
}

/// Build a plan over an explicit speech pool (used when the pool is not a
/// single prefix, e.g. source prefix plus pinned target-language pairs).
pub fn build_plan_from_pool(
    config: &SchedulerConfig,
    text_ids: &[String],
    pool: &[String],
) -> Result<MixPlan, ScheduleError> {
    config.validate()?;
    let pool: Vec<String> = match config.scheme {
        Scheme::TextOnly => Vec::new(),
        _ => pool.to_vec(),
    };
    let budget = pool.len();
    let epochs = (1..=config.epochs)
        .map(|e| EpochPlan {
            epoch: e,
            text_item_ids: text_ids.to_vec(),
            speech_item_ids: epoch_speech(config, e, &pool),
        })
        .collect();
    Ok(MixPlan {
        config: *config,
        n_speech: budget,
        budget,
        pool,
        epochs,
    })
}

fn epoch_speech(config: &SchedulerConfig, epoch: usize, pool: &[String]) -> Vec<String> {
    let cycles = match config.allocation(epoch, pool.len()) {
        0 => return Vec::new(),
        a => a / pool.len(),
    };
    let mut out = Vec::with_capacity(cycles * pool.len());
    for c in 0..cycles {
        let mut cycle = pool.to_vec();
        let index = (epoch as u64) << 32 | c as u64;
        SeededRng::stream(config.seed, "speech-cycle", index).shuffle(&mut cycle);
        out.extend(cycle);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Speech,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BatchItem {
    pub id: String,
    pub modality: Modality,
}

/// Jointly shuffle the epoch's text and speech items, then chunk. The final
/// short batch is kept.
pub fn epoch_batches(
    plan: &MixPlan,
    epoch: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<BatchItem>>, ScheduleError> {
    if batch_size == 0 {
        return Err(ScheduleError::ZeroBatch);
    }
    let ep = plan.epoch(epoch)?;
    let mut items: Vec<BatchItem> = ep
        .text_item_ids
        .iter()
        .map(|id| BatchItem {
            id: id.clone(),
            modality: Modality::Text,
        })
        .chain(ep.speech_item_ids.iter().map(|id| BatchItem {
            id: id.clone(),
            modality: Modality::Speech,
        }))
        .collect();
    SeededRng::stream(seed, "epoch-batches", epoch as u64).shuffle(&mut items);
    Ok(items.chunks(batch_size).map(<[BatchItem]>::to_vec).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochTotals {
    pub epoch: usize,
    pub text: usize,
    pub speech: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTotals {
    pub per_epoch: Vec<EpochTotals>,
    pub text: usize,
    pub speech: usize,
}

impl PlanTotals {
    pub fn speech_per_epoch(&self) -> Vec<usize> {
        self.per_epoch.iter().map(|e| e.speech).collect()
    }
}

pub fn plan_totals(plan: &MixPlan) -> PlanTotals {
    let per_epoch: Vec<EpochTotals> = plan
        .epochs
        .iter()
        .map(|e| EpochTotals {
            epoch: e.epoch,
            text: e.text_item_ids.len(),
            speech: e.speech_item_ids.len(),
        })
        .collect();
    PlanTotals {
        text: per_epoch.iter().map(|e| e.text).sum(),
        speech: per_epoch.iter().map(|e| e.speech).sum(),
        per_epoch,
    }
}
