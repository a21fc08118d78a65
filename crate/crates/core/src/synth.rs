//! Synthetic SLU corpora for desk-scale runs.
//!
//! [`generate`] draws templated utterances over a fixed intent inventory
//! (16 intents, 10 slot types). Every record carries a `sim:` speech
//! reference, which the trainer realizes through the speech simulator.
//! [`pseudo_language`] derives a target-language variant by rewriting each
//! word into a deterministic pseudo-word, keeping a fraction of words as
//! shared "cognates"; labels keep their scenario/action names.

use crate::corpus::{Corpus, CorpusError, Entity, SemanticLabel, Split, Utterance};
use crate::rng::{fnv1a64, SeededRng};

struct IntentSpec {
    scenario: &'static str,
    action: &'static str,
    templates: &'static [&'static str],
}

const INTENTS: &[IntentSpec] = &[
    IntentSpec {
        scenario: "alarm",
        action: "set",
        templates: &[
            "wake me up at {time}",
            "set an alarm for {time}",
            "alarm at {time} please",
            "i need an alarm {date} at {time}",
        ],
    },
    IntentSpec {
        scenario: "alarm",
        action: "remove",
        templates: &["cancel my alarm for {time}", "remove the {time} alarm", "delete the alarm for {date}"],
    },
    IntentSpec {
        scenario: "alarm",
        action: "query",
        templates: &["what alarms do i have", "show my alarms for {date}", "is there an alarm at {time}"],
    },
    IntentSpec {
        scenario: "weather",
        action: "query",
        templates: &[
            "what is the weather in {place}",
            "will it rain {date}",
            "weather {date} in {place}",
            "how cold is it in {place}",
        ],
    },
    IntentSpec {
        scenario: "music",
        action: "play",
        templates: &["play {song} by {artist}", "play some {artist}", "put on {song}", "i want to hear {artist}"],
    },
    IntentSpec {
        scenario: "audio",
        action: "volume_up",
        templates: &["turn it up", "louder please", "increase the volume", "make the music louder"],
    },
    IntentSpec {
        scenario: "calendar",
        action: "set",
        templates: &[
            "add {event} to my calendar {date}",
            "schedule {event} at {time}",
            "put {event} on {date} at {time}",
        ],
    },
    IntentSpec {
        scenario: "calendar",
        action: "query",
        templates: &["what is on my calendar {date}", "do i have {event} {date}", "when is my {event}"],
    },
    IntentSpec {
        scenario: "transport",
        action: "ticket",
        templates: &["book a train to {place}", "get me a ticket to {place} {date}", "i need a train ticket to {place}"],
    },
    IntentSpec {
        scenario: "transport",
        action: "taxi",
        templates: &["call a taxi to {place}", "order a cab at {time}", "get me a cab to {place}"],
    },
    IntentSpec {
        scenario: "iot",
        action: "lights_on",
        templates: &["turn on the lights in the {room}", "lights on in the {room}", "switch on the {room} lights"],
    },
    IntentSpec {
        scenario: "iot",
        action: "lights_off",
        templates: &["turn off the {room} lights", "switch the lights off in the {room}", "lights off please"],
    },
    IntentSpec {
        scenario: "lists",
        action: "createoradd",
        templates: &["add {item} to my {list} list", "put {item} on the {list} list", "remember to buy {item}"],
    },
    IntentSpec {
        scenario: "qa",
        action: "factoid",
        templates: &["who is {person}", "tell me about {person}", "how old is {person}"],
    },
    IntentSpec {
        scenario: "general",
        action: "joke",
        templates: &["tell me a joke", "make me laugh", "say something funny"],
    },
    IntentSpec {
        scenario: "news",
        action: "query",
        templates: &["what is the latest news about {topic}", "any news on {topic}", "read me the {topic} headlines"],
    },
];

const SLOTS: &[(&str, &[&str])] = &[
    (
        "time",
        &["seven am", "six thirty", "noon", "nine pm", "five am", "ten fifteen", "midnight", "eight in the morning"],
    ),
    ("date", &["today", "tomorrow", "monday", "this weekend", "next friday", "tuesday evening"]),
    (
        "place",
        &["new york", "london", "paris", "boston", "san francisco", "york", "berlin", "tokyo", "the airport"],
    ),
    ("artist", &["queen", "adele", "the beatles", "miles davis", "taylor swift", "daft punk"]),
    ("song", &["bohemian rhapsody", "hello", "yesterday", "so what", "one more time", "shake it off"]),
    ("event", &["dentist appointment", "team meeting", "lunch with anna", "yoga class", "parent evening"]),
    ("room", &["kitchen", "bedroom", "living room", "bathroom", "garage"]),
    ("item", &["milk", "eggs", "green apples", "coffee beans", "dish soap"]),
    ("list", &["shopping", "grocery", "todo", "hardware"]),
    ("person", &["barack obama", "marie curie", "lionel messi", "ada lovelace", "frida kahlo"]),
    ("topic", &["sports", "politics", "technology", "the economy", "football"]),
];

fn slot_values(name: &str) -> &'static [&'static str] {
    SLOTS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| *v)
        .expect("template slot has a vocabulary")
}

fn fill(template: &str, rng: &mut SeededRng) -> (String, Vec<Entity>) {
    let mut text = String::new();
    let mut entities = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        text.push_str(&rest[..open]);
        let close = rest[open..].find('}').expect("closed slot") + open;
        let name = &rest[open + 1..close];
        let values = slot_values(name);
        let value = values[rng.below(values.len() as u64) as usize];
        text.push_str(value);
        entities.push(Entity::new(name, value));
        rest = &rest[close + 1..];
    }
    text.push_str(rest);
    (text, entities)
}

/// `n` utterances split 70/15/15 into train/dev/test, all with simulated
/// speech references.
pub fn generate(n: usize, lang: &str, seed: u64) -> Corpus {
    let mut rng = SeededRng::stream(seed, "synth-corpus", 0);
    let n_train = n * 70 / 100;
    let n_dev = n * 15 / 100;
    let records = (0..n)
        .map(|i| {
            let spec = &INTENTS[rng.below(INTENTS.len() as u64) as usize];
            let template = spec.templates[rng.below(spec.templates.len() as u64) as usize];
            let (text, entities) = fill(template, &mut rng);
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_dev {
                Split::Dev
            } else {
                Split::Test
            };
            let id = format!("{lang}-{i:05}");
            Utterance {
                speech_ref: Some(format!("sim:{id}")),
                id,
                lang: lang.to_string(),
                split,
                text,
                text_id: None,
                label: SemanticLabel::new(spec.scenario, spec.action, entities),
            }
        })
        .collect();
    Corpus::new(format!("synthetic-{lang}"), lang, records).expect("generated records are valid")
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "be", "da", "gu", "ho", "ji", "pe", "zu", "ra",
];

fn pseudo_word(word: &str, lang: &str, keep_ratio: f64) -> String {
    let h = fnv1a64(format!("{lang}\u{1f}{word}").as_bytes());
    if (h >> 11) as f64 / (1u64 << 53) as f64 <= keep_ratio {
        return word.to_string();
    }
    let n = 1 + (word.chars().count() + 1) / 3;
    (0..n)
        .map(|i| SYLLABLES[((h >> (4 * i)) & 0xf) as usize])
        .collect()
}

fn pseudo_text(text: &str, lang: &str, keep_ratio: f64) -> String {
    text.split_whitespace()
        .map(|w| pseudo_word(w, lang, keep_ratio))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Rewrite a corpus into pseudo-language `lang`. Ids are re-prefixed with
/// `lang`; scenario, action and entity types are unchanged.
pub fn pseudo_language(source: &Corpus, lang: &str, keep_ratio: f64) -> Result<Corpus, CorpusError> {
    let records = source
        .records()
        .iter()
        .map(|u| {
            let id = format!("{lang}:{}", u.id);
            Utterance {
                speech_ref: u.speech_ref.as_ref().map(|_| format!("sim:{id}")),
                id,
                lang: lang.to_string(),
                split: u.split,
                text: pseudo_text(&u.text, lang, keep_ratio),
                text_id: u.text_id.as_ref().map(|t| format!("{lang}:{t}")),
                label: SemanticLabel::new(
                    u.label.scenario.clone(),
                    u.label.action.clone(),
                    u.label
                        .entities
                        .iter()
                        .map(|e| Entity::new(e.etype.clone(), pseudo_text(&e.filler, lang, keep_ratio)))
                        .collect(),
                ),
            }
        })
        .collect();
    Corpus::new(format!("synthetic-{lang}"), lang, records)
}
