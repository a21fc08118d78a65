//! SLU corpora: canonical records, import profiles and split statistics.
//!
//! The canonical on-disk format is JSONL, one utterance per line:
//!
//! ```text
//! {"id":"u1","lang":"en","split":"train","text":"wake me at seven am",
//!  "speech_ref":"audio/u1.flac","scenario":"alarm","action":"set",
//!  "entities":[{"type":"time","filler":"seven am"}]}
//! ```
//!
//! `speech_ref` is optional and opaque. `text_id` is optional and groups
//! several recordings of one transcript (SLURP keeps ~4.4 recordings per
//! transcript); it defaults to `id`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::labelcodec::{self, CodecError};

/// Language code carried by corpora that mix several languages.
pub const MIXED_LANG: &str = "mul";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("unknown profile {0:?} (expected slurp, massive or canonical)")]
    UnknownProfile(String),
    #[error("corpus file {0} contains no records")]
    Empty(String),
    #[error("record {id:?} has lang {found:?}, corpus lang is {expected:?}")]
    MixedLanguage {
        id: String,
        expected: String,
        found: String,
    },
    #[error("record {id:?}: {message}")]
    Invalid { id: String, message: String },
}

/// One slot: entity type and its surface filler.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    #[serde(rename = "type")]
    pub etype: String,
    pub filler: String,
}

impl Entity {
    pub fn new(etype: impl Into<String>, filler: impl Into<String>) -> Self {
        Self {
            etype: etype.into(),
            filler: filler.into(),
        }
    }
}

/// Intent (scenario, action) plus ordered slot–filler pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticLabel {
    pub scenario: String,
    pub action: String,
    #[serde(default)]
    pub entities: Vec<Entity>,
}

impl SemanticLabel {
    pub fn new(scenario: impl Into<String>, action: impl Into<String>, entities: Vec<Entity>) -> Self {
        Self {
            scenario: scenario.into(),
            action: action.into(),
            entities,
        }
    }

    /// `scenario_action`, the class name used by the reference learner.
    pub fn intent(&self) -> String {
        format!("{}_{}", self.scenario, self.action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    /// Accepts the aliases found in public releases (`devel`, `validation`,
    /// `train_115`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "train_115" | "train-115" => Ok(Split::Train),
            "dev" | "devel" | "validation" | "valid" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub lang: String,
    pub split: Split,
    pub text: String,
    pub speech_ref: Option<String>,
    /// Transcript group; `None` means the record is its own group.
    pub text_id: Option<String>,
    pub label: SemanticLabel,
}

impl Utterance {
    pub fn has_speech(&self) -> bool {
        self.speech_ref.is_some()
    }

    pub fn text_key(&self) -> &str {
        self.text_id.as_deref().unwrap_or(&self.id)
    }
}

/// Canonical JSONL line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CanonicalRecord {
    id: String,
    lang: String,
    split: Split,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speech_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_id: Option<String>,
    scenario: String,
    action: String,
    #[serde(default)]
    entities: Vec<Entity>,
}

impl From<&Utterance> for CanonicalRecord {
    fn from(u: &Utterance) -> Self {
        Self {
            id: u.id.clone(),
            lang: u.lang.clone(),
            split: u.split,
            text: u.text.clone(),
            speech_ref: u.speech_ref.clone(),
            text_id: u.text_id.clone(),
            scenario: u.label.scenario.clone(),
            action: u.label.action.clone(),
            entities: u.label.entities.clone(),
        }
    }
}

impl From<CanonicalRecord> for Utterance {
    fn from(r: CanonicalRecord) -> Self {
        Self {
            id: r.id,
            lang: r.lang,
            split: r.split,
            text: r.text,
            speech_ref: r.speech_ref,
            text_id: r.text_id,
            label: SemanticLabel::new(r.scenario, r.action, r.entities),
        }
    }
}

/// How SLURP recordings map onto utterances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recordings {
    /// One utterance per recording (train: 50,628 speech records).
    #[default]
    All,
    /// One utterance per transcript, carrying its first recording.
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Profile {
    Slurp {
        #[serde(default)]
        recordings: Recordings,
    },
    Massive,
    Canonical,
}

impl FromStr for Profile {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "slurp" => Ok(Profile::Slurp {
                recordings: Recordings::All,
            }),
            "massive" => Ok(Profile::Massive),
            "canonical" => Ok(Profile::Canonical),
            other => Err(CorpusError::UnknownProfile(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub name: String,
    pub lang: String,
    records: Vec<Utterance>,
    index: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.lang == other.lang && self.records == other.records
    }
}

impl Corpus {
    /// Validate and index a list of records. Labels are normalized.
    ///
    /// `lang` may be [`MIXED_LANG`], which lifts the shared-language check.
    pub fn new(
        name: impl Into<String>,
        lang: impl Into<String>,
        records: Vec<Utterance>,
    ) -> Result<Self, CorpusError> {
        let lang = lang.into();
        let mut index = HashMap::with_capacity(records.len());
        let mut normalized = Vec::with_capacity(records.len());
        for (i, mut r) in records.into_iter().enumerate() {
            validate_record(&mut r)?;
            if lang != MIXED_LANG && r.lang != lang {
                return Err(CorpusError::MixedLanguage {
                    id: r.id,
                    expected: lang,
                    found: r.lang,
                });
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId { line: i + 1, id: r.id });
            }
            normalized.push(r);
        }
        Ok(Self {
            name: name.into(),
            lang,
            records: normalized,
            index,
        })
    }

    pub fn empty(name: impl Into<String>, lang: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            lang: lang.into(),
            records: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn records(&self) -> &[Utterance] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    /// One representative record id per transcript group in `split`, in
    /// order of first appearance. These are the text training items.
    pub fn text_item_ids(&self, split: Split) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| r.split == split && seen.insert(r.text_key().to_string()))
            .map(|r| r.id.clone())
            .collect()
    }

    /// Ids of records in `split` that carry a speech reference.
    pub fn speech_item_ids(&self, split: Split) -> Vec<String> {
        self.records
            .iter()
            .filter(|r| r.split == split && r.has_speech())
            .map(|r| r.id.clone())
            .collect()
    }

    pub fn into_records(self) -> Vec<Utterance> {
        self.records
    }
}

fn validate_record(r: &mut Utterance) -> Result<(), CorpusError> {
    let invalid = |message: String| CorpusError::Invalid {
        id: r.id.clone(),
        message,
    };
    if r.id.trim().is_empty() {
        return Err(invalid("empty id".into()));
    }
    if r.lang.trim().is_empty() {
        return Err(invalid("empty lang".into()));
    }
    if r.text.trim().is_empty() {
        return Err(invalid("empty text".into()));
    }
    let label = labelcodec::normalize_label(&r.label);
    labelcodec::validate_label(&label).map_err(|e: CodecError| invalid(e.to_string()))?;
    r.label = label;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    /// Distinct transcripts.
    pub text: usize,
    /// Records with a speech reference.
    pub speech: usize,
    /// Raw record count.
    pub records: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub train: SplitCounts,
    pub dev: SplitCounts,
    pub test: SplitCounts,
}

impl CorpusStats {
    pub fn get(&self, split: Split) -> SplitCounts {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut SplitCounts {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut stats = CorpusStats::default();
    let mut groups: HashSet<(Split, &str)> = HashSet::new();
    for r in corpus.records() {
        let c = stats.get_mut(r.split);
        c.records += 1;
        if r.has_speech() {
            c.speech += 1;
        }
        if groups.insert((r.split, r.text_key())) {
            c.text += 1;
        }
    }
    stats
}

/// Records of one split, original order preserved.
pub fn filter_split(corpus: &Corpus, split: Split) -> Corpus {
    let records = corpus
        .records()
        .iter()
        .filter(|r| r.split == split)
        .cloned()
        .collect();
    Corpus::new(corpus.name.clone(), corpus.lang.clone(), records)
        .expect("subset of a valid corpus is valid")
}

pub fn load_corpus(path: &Path, profile: Profile) -> Result<Corpus, CorpusError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| display.clone());
    let reader = BufReader::new(file);

    let mut records: Vec<(usize, Utterance)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let parsed = match profile {
            Profile::Canonical => serde_json::from_value::<CanonicalRecord>(value)
                .map(|r| vec![Utterance::from(r)])
                .map_err(|e| e.to_string()),
            Profile::Slurp { recordings } => slurp_record(&value, path, recordings),
            Profile::Massive => massive_record(&value).map(|u| vec![u]),
        }
        .map_err(|message| CorpusError::Malformed {
            line: line_no,
            message,
        })?;
        records.extend(parsed.into_iter().map(|u| (line_no, u)));
    }
    if records.is_empty() {
        return Err(CorpusError::Empty(display));
    }

    let mut seen = HashSet::new();
    for (line, r) in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(CorpusError::DuplicateId {
                line: *line,
                id: r.id.clone(),
            });
        }
    }
    let lang = records[0].1.lang.clone();
    let mut out = Vec::with_capacity(records.len());
    for (line, mut r) in records {
        validate_record(&mut r).map_err(|e| CorpusError::Malformed {
            line,
            message: e.to_string(),
        })?;
        out.push(r);
    }
    Corpus::new(name, lang, out)
}

pub fn write_canonical(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in corpus.records() {
        let line = serde_json::to_string(&CanonicalRecord::from(r)).expect("record serializes");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Parse `[type : filler]` bracket annotations (SLURP `sentence_annotation`,
/// MASSIVE `annot_utt`) into entities.
pub fn parse_bracket_annotation(annotated: &str) -> Result<Vec<Entity>, String> {
    let mut entities = Vec::new();
    let mut rest = annotated;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let close = after
            .find(']')
            .ok_or_else(|| format!("unclosed '[' in annotation {annotated:?}"))?;
        let inner = &after[..close];
        let (etype, filler) = inner
            .split_once(':')
            .ok_or_else(|| format!("annotation span {inner:?} lacks ':'"))?;
        entities.push(Entity::new(etype.trim(), filler.trim()));
        rest = &after[close + 1..];
    }
    Ok(entities)
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str)
}

fn required_str<'a>(v: &'a Value, key: &str) -> Result<&'a str, String> {
    str_field(v, key).ok_or_else(|| format!("missing string field {key:?}"))
}

fn id_field(v: &Value, key: &str) -> Result<String, String> {
    match v.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(format!("missing id field {key:?}")),
    }
}

fn split_from_path(path: &Path) -> Option<Split> {
    let stem = path.file_stem()?.to_string_lossy().to_ascii_lowercase();
    ["train", "devel", "dev", "test"]
        .iter()
        .find(|k| stem.contains(*k))
        .and_then(|k| k.parse().ok())
}

/// SLURP JSONL: `slurp_id`, `sentence`, `sentence_annotation`, `scenario`,
/// `action`, `recordings: [{file}]`. Split comes from a `split` field or the
/// file name (`train.jsonl`, `devel.jsonl`, `test.jsonl`).
fn slurp_record(v: &Value, path: &Path, mode: Recordings) -> Result<Vec<Utterance>, String> {
    let slurp_id = id_field(v, "slurp_id")?;
    let text = required_str(v, "sentence")?.to_string();
    let split = match str_field(v, "split") {
        Some(s) => s.parse()?,
        None => split_from_path(path)
            .ok_or_else(|| format!("cannot infer split from {}", path.display()))?,
    };
    let entities = match str_field(v, "sentence_annotation") {
        Some(a) => parse_bracket_annotation(a)?,
        None => Vec::new(),
    };
    let label = SemanticLabel::new(
        required_str(v, "scenario")?,
        required_str(v, "action")?,
        entities,
    );
    let lang = str_field(v, "lang").unwrap_or("en").to_string();
    let files: Vec<String> = v
        .get("recordings")
        .and_then(Value::as_array)
        .map(|recs| {
            recs.iter()
                .filter_map(|r| r.get("file").and_then(Value::as_str).map(str::to_string))
                .collect()
        })
        .unwrap_or_default();

    let base = Utterance {
        id: slurp_id.clone(),
        lang,
        split,
        text,
        speech_ref: None,
        text_id: None,
        label,
    };
    Ok(match (files.is_empty(), mode) {
        (true, _) => vec![base],
        (false, Recordings::First) => vec![Utterance {
            speech_ref: Some(files[0].clone()),
            ..base
        }],
        (false, Recordings::All) => files
            .into_iter()
            .map(|f| Utterance {
                id: format!("{slurp_id}/{f}"),
                speech_ref: Some(f),
                text_id: Some(slurp_id.clone()),
                ..base.clone()
            })
            .collect(),
    })
}

/// MASSIVE / Speech-MASSIVE JSONL: `id`, `locale`, `partition`, `scenario`
/// (or `scenario_str`), `intent` (or `intent_str`, `scenario_action`),
/// `utt`, `annot_utt`, and an optional string `path`/`audio` for speech.
fn massive_record(v: &Value) -> Result<Utterance, String> {
    let id = id_field(v, "id")?;
    let scenario = str_field(v, "scenario")
        .or_else(|| str_field(v, "scenario_str"))
        .ok_or("missing scenario")?;
    let intent = str_field(v, "intent")
        .or_else(|| str_field(v, "intent_str"))
        .ok_or("missing intent")?;
    let action = intent
        .strip_prefix(scenario)
        .and_then(|a| a.strip_prefix('_'))
        .unwrap_or(intent);
    let entities = match str_field(v, "annot_utt") {
        Some(a) => parse_bracket_annotation(a)?,
        None => Vec::new(),
    };
    let speech_ref = str_field(v, "path")
        .or_else(|| str_field(v, "audio"))
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    Ok(Utterance {
        id,
        lang: required_str(v, "locale")?.to_string(),
        split: required_str(v, "partition")?.parse()?,
        text: required_str(v, "utt")?.to_string(),
        speech_ref,
        text_id: None,
        label: SemanticLabel::new(scenario, action, entities),
    })
}

/// Per-split counts keyed by split name, for reports.
pub fn stats_table(stats: &CorpusStats) -> BTreeMap<&'static str, SplitCounts> {
    Split::ALL.iter().map(|s| (s.as_str(), stats.get(*s))).collect()
}
