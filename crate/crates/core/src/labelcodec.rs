//! Structured target strings for SLU labels.
//!
//! Canonical grammar (single line):
//!
//! ```text
//! target   = "scenario: " value " | action: " value " | entities: [" [ entity { "; " entity } ] "]"
//! entity   = etype ": " filler
//! value    = 1*( any char except "|" ";" "[" "]" )
//! etype    = 1*( any char except "|" ";" "[" "]" ":" )
//! filler   = 1*( any char except "|" ";" "[" "]" )
//! ```
//!
//! Fields are normalized before serialization: trimmed, internal whitespace
//! collapsed to one space, scenario/action/etype lowercased. Fillers keep
//! their case.
//!
//! The parser is tolerant: keys are matched case-insensitively, whitespace is
//! free, `entity`/`slots` are accepted for `entities`, a missing entities
//! section reads as empty, and anything after the closing bracket is ignored.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Entity, SemanticLabel};

/// Placeholder substituted for the audio input in speech prompts.
pub const SPEECH_PLACEHOLDER: &str = "<|AUDIO|>";
/// Payload slot in instruction templates.
pub const PAYLOAD_SLOT: &str = "{input}";

const DELIMITERS: [char; 4] = ['|', ';', '[', ']'];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("{field} is empty after normalization")]
    EmptyField { field: &'static str },
    #[error("{field} {value:?} contains reserved character {ch:?}")]
    ReservedChar {
        field: &'static str,
        value: String,
        ch: char,
    },
    #[error("template has {0} payload placeholders, expected exactly one {PAYLOAD_SLOT}")]
    PayloadSlot(usize),
    #[error("template names {field:?} {count} times, expected exactly once")]
    FieldMention { field: String, count: usize },
}

/// Collapse whitespace runs to a single space and trim.
pub fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn normalize_key(s: &str) -> String {
    collapse_ws(s).to_lowercase()
}

pub fn normalize_filler(s: &str) -> String {
    collapse_ws(s)
}

pub fn normalize_label(label: &SemanticLabel) -> SemanticLabel {
    SemanticLabel {
        scenario: normalize_key(&label.scenario),
        action: normalize_key(&label.action),
        entities: label
            .entities
            .iter()
            .map(|e| Entity::new(normalize_key(&e.etype), normalize_filler(&e.filler)))
            .collect(),
    }
}

fn check_field(field: &'static str, value: &str, extra: Option<char>) -> Result<(), CodecError> {
    if value.is_empty() {
        return Err(CodecError::EmptyField { field });
    }
    if let Some(ch) = value
        .chars()
        .find(|c| DELIMITERS.contains(c) || Some(*c) == extra)
    {
        return Err(CodecError::ReservedChar {
            field,
            value: value.to_string(),
            ch,
        });
    }
    Ok(())
}

/// Check an already-normalized label against the grammar.
pub fn validate_label(label: &SemanticLabel) -> Result<(), CodecError> {
    check_field("scenario", &label.scenario, None)?;
    check_field("action", &label.action, None)?;
    for e in &label.entities {
        check_field("entity type", &e.etype, Some(':'))?;
        check_field("filler", &e.filler, None)?;
    }
    Ok(())
}

pub fn serialize_label(label: &SemanticLabel) -> Result<String, CodecError> {
    let label = normalize_label(label);
    validate_label(&label)?;
    let entities = label
        .entities
        .iter()
        .map(|e| format!("{}: {}", e.etype, e.filler))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(format!(
        "scenario: {} | action: {} | entities: [{}]",
        label.scenario, label.action, entities
    ))
}

/// Result of decoding a model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "label", rename_all = "lowercase")]
pub enum Decoded {
    Parsed(SemanticLabel),
    Unparseable,
}

impl Decoded {
    pub fn label(&self) -> Option<&SemanticLabel> {
        match self {
            Decoded::Parsed(l) => Some(l),
            Decoded::Unparseable => None,
        }
    }

    pub fn is_unparseable(&self) -> bool {
        matches!(self, Decoded::Unparseable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Key {
    Scenario,
    Action,
    Entities,
}

fn key_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(scenario|action|entities|entity|slots)\s*:").expect("valid regex")
    })
}

fn key_of(name: &str) -> Key {
    match name.to_ascii_lowercase().as_str() {
        "scenario" => Key::Scenario,
        "action" => Key::Action,
        _ => Key::Entities,
    }
}

/// Tolerant parse of a raw model output. Never fails; see the module docs.
pub fn parse_label(text: &str) -> Decoded {
    let mut scenario: Option<String> = None;
    let mut action: Option<String> = None;
    let mut entities: Option<Vec<Entity>> = None;

    let mut rest = text;
    while let Some(m) = key_regex().captures(rest) {
        let whole = m.get(0).expect("match");
        let key = key_of(&m[1]);
        let after = &rest[whole.end()..];
        let consumed = match key {
            Key::Entities => {
                let (list, used) = entity_section(after);
                if entities.is_none() {
                    entities = Some(list);
                }
                used
            }
            Key::Scenario | Key::Action => {
                let end = after.find(['|', '\n']).unwrap_or(after.len());
                let value = normalize_key(&after[..end]);
                let slot = if key == Key::Scenario {
                    &mut scenario
                } else {
                    &mut action
                };
                if slot.is_none() && !value.is_empty() && !value.contains(DELIMITERS) {
                    *slot = Some(value);
                }
                end
            }
        };
        rest = &after[consumed..];
        if scenario.is_some() && action.is_some() && entities.is_some() {
            break;
        }
    }

    match (scenario, action) {
        (Some(scenario), Some(action)) => Decoded::Parsed(SemanticLabel {
            scenario,
            action,
            entities: entities.unwrap_or_default(),
        }),
        _ => Decoded::Unparseable,
    }
}

/// Parse the text following an entities key. Returns the entities and the
/// number of bytes consumed.
fn entity_section(after: &str) -> (Vec<Entity>, usize) {
    let trimmed = after.trim_start();
    let offset = after.len() - trimmed.len();
    let (body, used) = if let Some(inner) = trimmed.strip_prefix('[') {
        match inner.find(']') {
            Some(close) => (&inner[..close], offset + 1 + close + 1),
            None => {
                let end = inner.find('|').unwrap_or(inner.len());
                (&inner[..end], offset + 1 + end)
            }
        }
    } else {
        let end = trimmed.find(['|', '\n']).unwrap_or(trimmed.len());
        (&trimmed[..end], offset + end)
    };
    let list = body
        .split(';')
        .filter_map(|item| {
            let (etype, filler) = item.split_once(':')?;
            let etype = normalize_key(etype);
            let filler = normalize_filler(filler);
            (!etype.is_empty() && !filler.is_empty() && !filler.contains('[')).then(|| Entity::new(etype, filler))
        })
        .collect();
    (list, used)
}

/// Instruction template shared by text and speech inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    /// Instruction with one `{input}` slot.
    pub instruction_text: String,
    /// Field names the instruction must mention exactly once each.
    pub output_contract: Vec<String>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            instruction_text: "Identify the intent and the slots of the following input. \
                Answer on one line as `scenario: <name> | action: <name> | entities: \
                [<type>: <filler>; ...]`, using `[]` when there are none.\nInput: {input}"
                .to_string(),
            output_contract: vec!["scenario".into(), "action".into(), "entities".into()],
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), CodecError> {
        let slots = self.instruction_text.matches(PAYLOAD_SLOT).count();
        if slots != 1 {
            return Err(CodecError::PayloadSlot(slots));
        }
        let lower = self.instruction_text.to_lowercase();
        for field in &self.output_contract {
            let re = Regex::new(&format!(r"\b{}\b", regex::escape(&field.to_lowercase())))
                .expect("escaped field is a valid regex");
            let count = re.find_iter(&lower).count();
            if count != 1 {
                return Err(CodecError::FieldMention {
                    field: field.clone(),
                    count,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload<'a> {
    Transcript(&'a str),
    Speech,
}

pub fn build_prompt(template: &PromptTemplate, payload: Payload<'_>) -> Result<String, CodecError> {
    template.validate()?;
    let input = match payload {
        Payload::Transcript(t) => t,
        Payload::Speech => SPEECH_PLACEHOLDER,
    };
    Ok(template.instruction_text.replacen(PAYLOAD_SLOT, input, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label(s: &str, a: &str, ents: &[(&str, &str)]) -> SemanticLabel {
        SemanticLabel::new(s, a, ents.iter().map(|(t, f)| Entity::new(*t, *f)).collect())
    }

    #[test]
    fn serializes_canonical_form() {
        assert_eq!(
            serialize_label(&label("alarm", "set", &[("time", "seven am")])).unwrap(),
            "scenario: alarm | action: set | entities: [time: seven am]"
        );
        assert_eq!(
            serialize_label(&label("weather", "query", &[])).unwrap(),
            "scenario: weather | action: query | entities: []"
        );
        assert_eq!(
            serialize_label(&label(
                "music",
                "play",
                &[("artist", "queen"), ("song", "bohemian rhapsody")]
            ))
            .unwrap(),
            "scenario: music | action: play | entities: [artist: queen; song: bohemian rhapsody]"
        );
    }

    #[test]
    fn serialization_rejects_delimiters() {
        assert!(matches!(
            serialize_label(&label("al|arm", "set", &[])),
            Err(CodecError::ReservedChar { ch: '|', .. })
        ));
        assert!(matches!(
            serialize_label(&label("alarm", "set", &[("ti:me", "x")])),
            Err(CodecError::ReservedChar { ch: ':', .. })
        ));
        assert!(matches!(
            serialize_label(&label("alarm", "  ", &[])),
            Err(CodecError::EmptyField { field: "action" })
        ));
    }

    #[test]
    fn parses_canonical_and_sloppy_forms() {
        assert_eq!(
            parse_label("scenario: alarm | action: set | entities: [time: seven am]"),
            Decoded::Parsed(label("alarm", "set", &[("time", "seven am")]))
        );
        assert_eq!(
            parse_label("SCENARIO: Alarm|action:set|entities:[]"),
            Decoded::Parsed(label("alarm", "set", &[]))
        );
        assert_eq!(parse_label("I think the answer is 42"), Decoded::Unparseable);
    }

    #[test]
    fn parser_tolerates_drift() {
        assert_eq!(
            parse_label("Sure! scenario: alarm | action: set | slots: [time : Seven  AM] hope this helps"),
            Decoded::Parsed(label("alarm", "set", &[("time", "Seven AM")]))
        );
        assert_eq!(
            parse_label("scenario: alarm\naction: query\nmore text"),
            Decoded::Parsed(label("alarm", "query", &[]))
        );
        assert_eq!(
            parse_label("scenario: action | action: scenario | entities: [place: a:b]"),
            Decoded::Parsed(label("action", "scenario", &[("place", "a:b")]))
        );
        assert_eq!(parse_label("scenario: alarm"), Decoded::Unparseable);
        assert_eq!(parse_label(""), Decoded::Unparseable);
    }

    #[test]
    fn prompt_substitutes_payload_only() {
        let t = PromptTemplate::default();
        let text = build_prompt(&t, Payload::Transcript("wake me at seven")).unwrap();
        let speech = build_prompt(&t, Payload::Speech).unwrap();
        assert!(text.ends_with("Input: wake me at seven"));
        assert!(speech.ends_with(&format!("Input: {SPEECH_PLACEHOLDER}")));
        let prefix = t.instruction_text.split(PAYLOAD_SLOT).next().unwrap();
        assert!(text.starts_with(prefix) && speech.starts_with(prefix));
    }

    #[test]
    fn prompt_template_validation() {
        let mut t = PromptTemplate::default();
        t.instruction_text = t.instruction_text.replace(PAYLOAD_SLOT, "");
        assert_eq!(build_prompt(&t, Payload::Speech), Err(CodecError::PayloadSlot(0)));

        let t = PromptTemplate {
            instruction_text: "give scenario and scenario and action {input}".into(),
            output_contract: vec!["scenario".into(), "action".into(), "entities".into()],
        };
        assert!(matches!(
            t.validate(),
            Err(CodecError::FieldMention { count: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn parse_never_panics(s in "\\PC{0,400}") {
            let _ = parse_label(&s);
        }

        #[test]
        fn round_trip_simple(
            s in "[a-z]{1,8}( [a-z]{1,8})?",
            a in "[a-z]{1,8}",
            ents in proptest::collection::vec(("[a-z_]{1,6}", "[A-Za-z0-9' ]{0,12}[A-Za-z0-9]"), 0..4),
        ) {
            let l = normalize_label(&SemanticLabel::new(
                s, a, ents.into_iter().map(|(t, f)| Entity::new(t, f)).collect()));
            let text = serialize_label(&l).unwrap();
            prop_assert_eq!(parse_label(&text), Decoded::Parsed(l));
        }
    }
}
