use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ExpError;
use crate::corpus::{Corpus, Split, Utterance, MIXED_LANG};
use crate::rng::derive_seed;
use crate::scheduler::nested_permutation;

/// Target-language data added to source-language training.
///
/// `T`: target transcripts of the few-shot subset; `S`: the same subset's
/// speech pairs; `M`: the full target text-only corpus. `no_source_*` modes
/// drop the source language entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CrossLingualMode {
    #[serde(rename = "zero_shot")]
    ZeroShot,
    T,
    #[serde(rename = "T_S")]
    TS,
    #[serde(rename = "T_M")]
    TM,
    #[serde(rename = "T_S_M")]
    TSM,
    #[serde(rename = "no_source_T")]
    NoSourceT,
    #[serde(rename = "no_source_T_S")]
    NoSourceTS,
    #[serde(rename = "no_source_T_M")]
    NoSourceTM,
    #[serde(rename = "no_source_T_S_M")]
    NoSourceTSM,
}

impl CrossLingualMode {
    pub const ALL: [CrossLingualMode; 9] = [
        CrossLingualMode::ZeroShot,
        CrossLingualMode::T,
        CrossLingualMode::TS,
        CrossLingualMode::TM,
        CrossLingualMode::TSM,
        CrossLingualMode::NoSourceT,
        CrossLingualMode::NoSourceTS,
        CrossLingualMode::NoSourceTM,
        CrossLingualMode::NoSourceTSM,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ZeroShot => "zero_shot",
            Self::T => "T",
            Self::TS => "T_S",
            Self::TM => "T_M",
            Self::TSM => "T_S_M",
            Self::NoSourceT => "no_source_T",
            Self::NoSourceTS => "no_source_T_S",
            Self::NoSourceTM => "no_source_T_M",
            Self::NoSourceTSM => "no_source_T_S_M",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Table label for the target-data column (`T+S+M` etc).
    pub fn target_label(self) -> &'static str {
        match self {
            Self::ZeroShot => "-",
            Self::T | Self::NoSourceT => "T",
            Self::TS | Self::NoSourceTS => "T+S",
            Self::TM | Self::NoSourceTM => "T+M",
            Self::TSM | Self::NoSourceTSM => "T+S+M",
        }
    }

    pub fn uses_source(self) -> bool {
        !matches!(
            self,
            Self::NoSourceT | Self::NoSourceTS | Self::NoSourceTM | Self::NoSourceTSM
        )
    }

    pub fn target_text(self) -> bool {
        self != Self::ZeroShot
    }

    pub fn target_speech(self) -> bool {
        matches!(self, Self::TS | Self::TSM | Self::NoSourceTS | Self::NoSourceTSM)
    }

    pub fn massive(self) -> bool {
        matches!(self, Self::TM | Self::TSM | Self::NoSourceTM | Self::NoSourceTSM)
    }
}

impl fmt::Display for CrossLingualMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn relabel(u: &Utterance, origin: &str, keep_speech: bool) -> Utterance {
    Utterance {
        id: format!("{origin}/{}", u.id),
        text_id: u.text_id.as_ref().map(|t| format!("{origin}/{t}")),
        speech_ref: if keep_speech { u.speech_ref.clone() } else { None },
        ..u.clone()
    }
}

/// The few-shot subset of a target corpus: the first `pairs` speech-bearing
/// train records of a seeded permutation. Prefix-nested in `pairs`.
pub(crate) fn fewshot_subset(
    target: &Corpus,
    pairs: usize,
    seed: u64,
) -> Result<Vec<&Utterance>, ExpError> {
    let ids = target.speech_item_ids(Split::Train);
    if ids.len() < pairs {
        return Err(ExpError::Other(format!(
            "target {} has {} train speech pairs, {} requested",
            target.lang,
            ids.len(),
            pairs
        )));
    }
    let stream = derive_seed(seed, &format!("fewshot:{}", target.lang), 0);
    let ordering = nested_permutation(&ids, stream)?;
    Ok(ordering
        .prefix(pairs)
        .iter()
        .map(|id| target.get(id).expect("id from this corpus"))
        .collect())
}

/// Origin tag for records of the source language inside a combined corpus.
pub(crate) fn source_origin(lang: &str) -> String {
    format!("src.{lang}")
}

/// Build the combined training corpus for one cross-lingual mode. Only train
/// splits are used; ids are prefixed with their origin (`src.<lang>`,
/// `fs.<lang>`, `m.<lang>`) so sources cannot collide.
pub fn make_crosslingual_corpus(
    source: &Corpus,
    targets: &[Corpus],
    massive: &[Corpus],
    mode: CrossLingualMode,
    fewshot_pairs: usize,
    seed: u64,
) -> Result<Corpus, ExpError> {
    let mut langs = HashSet::new();
    langs.insert(source.lang.as_str());
    for t in targets {
        if !langs.insert(t.lang.as_str()) {
            return Err(ExpError::LanguageClash(t.lang.clone()));
        }
    }

    let mut records: Vec<Utterance> = Vec::new();
    if mode.uses_source() {
        let origin = source_origin(&source.lang);
        records.extend(
            source
                .records()
                .iter()
                .filter(|u| u.split == Split::Train)
                .map(|u| relabel(u, &origin, true)),
        );
    }
    if mode.target_text() {
        for t in targets {
            let origin = format!("fs.{}", t.lang);
            for u in fewshot_subset(t, fewshot_pairs, seed)? {
                records.push(relabel(u, &origin, mode.target_speech()));
            }
        }
    }
    if mode.massive() {
        for t in targets {
            let m = massive
                .iter()
                .find(|m| m.lang == t.lang)
                .ok_or_else(|| ExpError::MissingData {
                    mode,
                    missing: format!("a text-only corpus for {}", t.lang),
                })?;
            let origin = format!("m.{}", t.lang);
            records.extend(
                m.records()
                    .iter()
                    .filter(|u| u.split == Split::Train)
                    .map(|u| relabel(u, &origin, false)),
            );
        }
    }
    if records.is_empty() {
        return Err(ExpError::MissingData {
            mode,
            missing: "at least one training record".into(),
        });
    }
    Ok(Corpus::new(format!("crosslingual-{mode}"), MIXED_LANG, records)?)
}
