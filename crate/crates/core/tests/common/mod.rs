#![allow(dead_code)]

use slu_mix::labelcodec::Decoded;
use slu_mix::rng::SeededRng;
use slu_mix::{Entity, PredictionRecord, SemanticLabel};

/// Reference scores from exhaustive matching.
#[derive(Debug, Clone, Copy)]
pub struct OracleScores {
    pub intent_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub slu_f1: f64,
}

type Span = (String, String);

fn spans(label: &SemanticLabel, pseudo: bool) -> Vec<Span> {
    let mut out = Vec::new();
    if pseudo {
        out.push(("#scenario".to_string(), label.scenario.clone()));
        out.push(("#action".to_string(), label.action.clone()));
    }
    out.extend(label.entities.iter().map(|e| (e.etype.clone(), e.filler.clone())));
    out
}

fn sorted_overlap(mut a: Vec<String>, mut b: Vec<String>) -> f64 {
    a.sort();
    b.sort();
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    if common == 0 {
        0.0
    } else {
        2.0 * common as f64 / (a.len() + b.len()) as f64
    }
}

pub fn word_credit(g: &str, p: &str) -> f64 {
    let w = |s: &str| s.split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
    sorted_overlap(w(g), w(p))
}

pub fn char_credit(g: &str, p: &str) -> f64 {
    let c = |s: &str| s.chars().filter(|c| *c != ' ').map(String::from).collect();
    sorted_overlap(c(g), c(p))
}

pub fn exact_credit(g: &str, p: &str) -> f64 {
    if g == p {
        1.0
    } else {
        0.0
    }
}

/// Best total credit over every partial injective pairing of gold to
/// predicted spans of the same kind.
pub fn best_pairing(gold: &[Span], pred: &[Span], credit: fn(&str, &str) -> f64) -> f64 {
    fn go(i: usize, used: u64, gold: &[Span], pred: &[Span], credit: fn(&str, &str) -> f64) -> f64 {
        if i == gold.len() {
            return 0.0;
        }
        let mut best = go(i + 1, used, gold, pred, credit);
        for (j, p) in pred.iter().enumerate() {
            if used & (1 << j) == 0 && p.0 == gold[i].0 {
                let v = credit(&gold[i].1, &p.1) + go(i + 1, used | (1 << j), gold, pred, credit);
                if v > best {
                    best = v;
                }
            }
        }
        best
    }
    go(0, 0, gold, pred, credit)
}

fn prf(tp: f64, np: usize, ng: usize) -> (f64, f64, f64) {
    if np == 0 && ng == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if np == 0 { 0.0 } else { tp / np as f64 };
    let r = if ng == 0 { 0.0 } else { tp / ng as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Exhaustive reference scorer. Labels must already be normalized.
pub fn oracle(records: &[PredictionRecord]) -> OracleScores {
    let (mut correct, mut tp, mut np, mut ng) = (0usize, 0.0, 0usize, 0usize);
    let (mut w, mut c, mut snp, mut sng) = (0.0, 0.0, 0usize, 0usize);
    for r in records {
        let gold_e = spans(&r.gold, false);
        let gold_s = spans(&r.gold, true);
        ng += gold_e.len();
        sng += gold_s.len();
        if let Decoded::Parsed(p) = &r.pred {
            if p.scenario == r.gold.scenario && p.action == r.gold.action {
                correct += 1;
            }
            let pred_e = spans(p, false);
            let pred_s = spans(p, true);
            np += pred_e.len();
            snp += pred_s.len();
            tp += best_pairing(&gold_e, &pred_e, exact_credit);
            w += best_pairing(&gold_s, &pred_s, word_credit);
            c += best_pairing(&gold_s, &pred_s, char_credit);
        }
    }
    let (precision, recall, f1) = prf(tp, np, ng);
    let slu_f1 = (prf(w, snp, sng).2 + prf(c, snp, sng).2) / 2.0;
    OracleScores {
        intent_accuracy: correct as f64 / records.len() as f64,
        precision,
        recall,
        f1,
        slu_f1,
    }
}

const SCENARIOS: [&str; 3] = ["alarm", "weather", "music"];
const ACTIONS: [&str; 3] = ["set", "query", "play"];
const TYPES: [&str; 3] = ["time", "place", "date"];
const WORDS: [&str; 8] = ["seven", "am", "new", "york", "Paris", "noon", "next", "friday"];

fn pick<'a>(rng: &mut SeededRng, xs: &[&'a str]) -> &'a str {
    xs[rng.below(xs.len() as u64) as usize]
}

fn filler(rng: &mut SeededRng) -> String {
    let n = 1 + rng.below(3) as usize;
    (0..n).map(|_| pick(rng, &WORDS)).collect::<Vec<_>>().join(" ")
}

pub fn random_label(rng: &mut SeededRng, max_entities: u64) -> SemanticLabel {
    let n = rng.below(max_entities + 1);
    let entities = (0..n)
        .map(|_| Entity::new(pick(rng, &TYPES), filler(rng)))
        .collect();
    SemanticLabel::new(pick(rng, &SCENARIOS), pick(rng, &ACTIONS), entities)
}

/// A prediction near `gold`: entities kept, dropped, altered or added.
pub fn perturb(rng: &mut SeededRng, gold: &SemanticLabel, max_entities: usize) -> Decoded {
    if rng.below(10) == 0 {
        return Decoded::Unparseable;
    }
    let scenario = if rng.below(4) == 0 { pick(rng, &SCENARIOS).to_string() } else { gold.scenario.clone() };
    let action = if rng.below(4) == 0 { pick(rng, &ACTIONS).to_string() } else { gold.action.clone() };
    let mut entities: Vec<Entity> = Vec::new();
    for e in &gold.entities {
        match rng.below(4) {
            0 => {}
            1 => entities.push(Entity::new(e.etype.clone(), filler(rng))),
            _ => entities.push(e.clone()),
        }
    }
    while entities.len() < max_entities && rng.below(3) == 0 {
        entities.push(Entity::new(pick(rng, &TYPES), filler(rng)));
    }
    entities.truncate(max_entities);
    rng.shuffle(&mut entities);
    Decoded::Parsed(SemanticLabel::new(scenario, action, entities))
}

pub fn random_records(seed: u64, n: usize, max_entities: usize) -> Vec<PredictionRecord> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|i| {
            let gold = random_label(&mut rng, max_entities as u64);
            let pred = perturb(&mut rng, &gold, max_entities);
            PredictionRecord::new(format!("u{i}"), gold, pred)
        })
        .collect()
}

/// Published monolingual results: (level %, [direct, curriculum] × 9 columns of
/// (mean, half-width)); columns are SLURP, ITALIC, FR × (IA, EF1, SLU-F1).
pub type PublishedLevel = (u32, [[(f64, f64); 9]; 2]);

pub const PUBLISHED_MONO: [PublishedLevel; 6] = [
    (2, [
        [(0.8345, 0.0082), (0.6354, 0.0038), (0.7167, 0.0038), (0.8048, 0.0147), (0.5644, 0.0152), (0.6773, 0.0098), (0.8132, 0.0078), (0.5349, 0.0113), (0.6740, 0.0098)],
        [(0.8574, 0.0033), (0.6577, 0.0024), (0.7335, 0.0011), (0.8272, 0.0029), (0.6074, 0.0065), (0.7088, 0.0044), (0.8287, 0.0077), (0.5590, 0.0063), (0.6919, 0.0048)],
    ]),
    (5, [
        [(0.8558, 0.0050), (0.6617, 0.0054), (0.7373, 0.0042), (0.8376, 0.0048), (0.6190, 0.0070), (0.7165, 0.0037), (0.8376, 0.0118), (0.5677, 0.0053), (0.6969, 0.0037)],
        [(0.8642, 0.0016), (0.6765, 0.0021), (0.7475, 0.0025), (0.8412, 0.0032), (0.6334, 0.0072), (0.7271, 0.0041), (0.8423, 0.0023), (0.5802, 0.0035), (0.7048, 0.0044)],
    ]),
    (10, [
        [(0.8618, 0.0023), (0.6740, 0.0031), (0.7482, 0.0022), (0.8533, 0.0054), (0.6387, 0.0060), (0.7320, 0.0034), (0.8418, 0.0066), (0.5805, 0.0102), (0.7054, 0.0059)],
        [(0.8678, 0.0037), (0.6807, 0.0015), (0.7529, 0.0021), (0.8490, 0.0034), (0.6492, 0.0061), (0.7406, 0.0022), (0.8493, 0.0017), (0.5994, 0.0072), (0.7174, 0.0056)],
    ]),
    (25, [
        [(0.8689, 0.0028), (0.6779, 0.0040), (0.7515, 0.0043), (0.8618, 0.0071), (0.6650, 0.0041), (0.7518, 0.0021), (0.8619, 0.0053), (0.6150, 0.0065), (0.7278, 0.0053)],
        [(0.8743, 0.0026), (0.6873, 0.0023), (0.7580, 0.0015), (0.8622, 0.0017), (0.6690, 0.0039), (0.7529, 0.0040), (0.8634, 0.0024), (0.6176, 0.0050), (0.7285, 0.0037)],
    ]),
    (50, [
        [(0.8779, 0.0027), (0.6891, 0.0028), (0.7618, 0.0012), (0.8680, 0.0025), (0.6827, 0.0072), (0.7597, 0.0042), (0.8708, 0.0050), (0.6271, 0.0051), (0.7363, 0.0049)],
        [(0.8771, 0.0033), (0.6890, 0.0023), (0.7610, 0.0022), (0.8687, 0.0040), (0.6850, 0.0043), (0.7616, 0.0033), (0.8682, 0.0034), (0.6311, 0.0033), (0.7381, 0.0024)],
    ]),
    (100, [
        [(0.8813, 0.0035), (0.6959, 0.0030), (0.7675, 0.0022), (0.8767, 0.0016), (0.7022, 0.0054), (0.7737, 0.0063), (0.8739, 0.0040), (0.6445, 0.0031), (0.7486, 0.0025)],
        [(0.8810, 0.0043), (0.6932, 0.0030), (0.7644, 0.0017), (0.8735, 0.0034), (0.7056, 0.0049), (0.7766, 0.0032), (0.8718, 0.0036), (0.6463, 0.0075), (0.7492, 0.0067)],
    ]),
];

/// Published daggers (always on the curriculum row), same
/// column order as [`PUBLISHED_MONO`].
pub const PUBLISHED_DAGGERS: [[bool; 9]; 6] = [
    [true, true, true, true, true, true, false, true, true],
    [true, true, true, false, true, true, false, true, false],
    [false, true, true, false, false, true, false, true, true],
    [false, true, true, false, false, false, false, false, false],
    [false; 9],
    [false; 9],
];

pub const PUBLISHED_CORPORA: [&str; 3] = ["slurp", "italic", "speech_massive_fr"];
