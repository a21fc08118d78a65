//! Intent accuracy, micro entity F1 and SLU-F1.
//!
//! SLU-F1 convention: each utterance contributes a span set made of its
//! entities plus two pseudo-spans for scenario and action. Predicted and
//! gold spans of the same kind are paired by an optimal assignment that
//! maximizes total overlap credit; the credit of a pair is the F1 of the
//! word multisets (Word-F1) or of the non-space character multisets
//! (Char-F1) of the two strings. Micro precision is total credit over
//! predicted spans, micro recall total credit over gold spans, and SLU-F1 is
//! the mean of the word-level and char-level F1.
//!
//! Zero-denominator conventions: with no gold and no predicted spans at all
//! the score is 1; otherwise an empty denominator yields 0.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SemanticLabel;
use crate::labelcodec::{normalize_filler, normalize_key, Decoded};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("empty record list")]
    EmptyRecords,
    #[error("duplicate utt_id {0:?}")]
    DuplicateUtterance(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub utt_id: String,
    pub gold: SemanticLabel,
    pub pred: Decoded,
}

impl PredictionRecord {
    pub fn new(utt_id: impl Into<String>, gold: SemanticLabel, pred: Decoded) -> Self {
        Self {
            utt_id: utt_id.into(),
            gold,
            pred,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub n_utts: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Total word-level credit over SLU spans.
    pub word_tp_frac: f64,
    /// Total char-level credit over SLU spans.
    pub char_tp_frac: f64,
    pub slu_gold_spans: usize,
    pub slu_pred_spans: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub intent_accuracy: f64,
    pub entity_precision: f64,
    pub entity_recall: f64,
    pub entity_f1: f64,
    pub slu_word_f1: f64,
    pub slu_char_f1: f64,
    pub slu_f1: f64,
    pub counts: MetricCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Micro P/R/F1 from (fractional) true positives and span totals.
    pub fn from_counts(tp: f64, n_pred: usize, n_gold: usize) -> Self {
        if n_pred == 0 && n_gold == 0 {
            return Self {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            };
        }
        let precision = if n_pred == 0 { 0.0 } else { tp / n_pred as f64 };
        let recall = if n_gold == 0 { 0.0 } else { tp / n_gold as f64 };
        Self {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check(records: &[PredictionRecord]) -> Result<(), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.utt_id.as_str()) {
            return Err(MetricsError::DuplicateUtterance(r.utt_id.clone()));
        }
    }
    Ok(())
}

fn intent_correct(r: &PredictionRecord) -> bool {
    r.pred.label().is_some_and(|p| {
        normalize_key(&p.scenario) == normalize_key(&r.gold.scenario)
            && normalize_key(&p.action) == normalize_key(&r.gold.action)
    })
}

pub fn intent_accuracy(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    check(records)?;
    let correct = records.iter().filter(|r| intent_correct(r)).count();
    Ok(correct as f64 / records.len() as f64)
}

type EntityKey = (String, String);

fn entity_keys(label: Option<&SemanticLabel>) -> Vec<EntityKey> {
    label
        .map(|l| {
            l.entities
                .iter()
                .map(|e| (normalize_key(&e.etype), normalize_filler(&e.filler)))
                .collect()
        })
        .unwrap_or_default()
}

/// Exact-match counts for one utterance: (tp, n_pred, n_gold).
fn exact_counts(r: &PredictionRecord) -> (usize, usize, usize) {
    let gold = entity_keys(Some(&r.gold));
    let pred = entity_keys(r.pred.label());
    let mut bag: HashMap<&EntityKey, usize> = HashMap::new();
    for g in &gold {
        *bag.entry(g).or_default() += 1;
    }
    let mut tp = 0;
    for p in &pred {
        if let Some(c) = bag.get_mut(p) {
            if *c > 0 {
                *c -= 1;
                tp += 1;
            }
        }
    }
    (tp, pred.len(), gold.len())
}

pub fn entity_prf(records: &[PredictionRecord]) -> Result<Prf, MetricsError> {
    check(records)?;
    let (tp, np, ng) = records.iter().map(exact_counts).fold((0, 0, 0), |a, c| {
        (a.0 + c.0, a.1 + c.1, a.2 + c.2)
    });
    Ok(Prf::from_counts(tp as f64, np, ng))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum SpanKind {
    Scenario,
    Action,
    Entity(String),
}

fn slu_spans(label: Option<&SemanticLabel>) -> Vec<(SpanKind, String)> {
    let Some(l) = label else {
        return Vec::new();
    };
    let mut spans = vec![
        (SpanKind::Scenario, normalize_key(&l.scenario)),
        (SpanKind::Action, normalize_key(&l.action)),
    ];
    spans.extend(
        l.entities
            .iter()
            .map(|e| (SpanKind::Entity(normalize_key(&e.etype)), normalize_filler(&e.filler))),
    );
    spans
}

fn multiset_f1<T: Eq + std::hash::Hash>(gold: impl Iterator<Item = T>, pred: impl Iterator<Item = T>) -> f64 {
    let mut bag: HashMap<T, usize> = HashMap::new();
    let mut n_gold = 0usize;
    for g in gold {
        *bag.entry(g).or_default() += 1;
        n_gold += 1;
    }
    let mut n_pred = 0usize;
    let mut common = 0usize;
    for p in pred {
        n_pred += 1;
        if let Some(c) = bag.get_mut(&p) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    harmonic(common as f64 / n_pred as f64, common as f64 / n_gold as f64)
}

/// F1 between the word multisets of two strings.
pub fn word_overlap_f1(gold: &str, pred: &str) -> f64 {
    multiset_f1(gold.split_whitespace(), pred.split_whitespace())
}

/// F1 between the character multisets of two strings, whitespace excluded.
pub fn char_overlap_f1(gold: &str, pred: &str) -> f64 {
    let chars = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<Vec<_>>();
    multiset_f1(chars(gold).into_iter(), chars(pred).into_iter())
}

/// Maximum-weight assignment on a rectangular non-negative matrix
/// (`weights[i][j]`, rows × cols). Returns the optimal total weight.
///
/// Hungarian algorithm with potentials on the padded square cost matrix
/// `max_w - w`.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> f64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let n = rows.max(cols);
    let max_w = weights
        .iter()
        .flat_map(|r| r.iter().copied())
        .fold(0.0_f64, f64::max);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            max_w - weights[i][j]
        } else {
            max_w
        }
    };

    // 1-based arrays; p[j] = row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    // Sum the original weights along the matching for an exact total.
    (1..=n)
        .filter_map(|j| {
            let i = p[j];
            (i >= 1 && i - 1 < rows && j - 1 < cols).then(|| weights[i - 1][j - 1])
        })
        .sum()
}

/// Per-utterance SLU credit: (word credit, char credit, n_pred, n_gold).
fn slu_utterance(r: &PredictionRecord) -> (f64, f64, usize, usize) {
    let gold = slu_spans(Some(&r.gold));
    let pred = slu_spans(r.pred.label());
    let mut by_kind: BTreeMap<&SpanKind, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
    for (k, v) in &gold {
        by_kind.entry(k).or_default().0.push(v);
    }
    for (k, v) in &pred {
        by_kind.entry(k).or_default().1.push(v);
    }
    let mut word = 0.0;
    let mut chr = 0.0;
    for (g, p) in by_kind.values() {
        if g.is_empty() || p.is_empty() {
            continue;
        }
        let w: Vec<Vec<f64>> = g
            .iter()
            .map(|gs| p.iter().map(|ps| word_overlap_f1(gs, ps)).collect())
            .collect();
        let c: Vec<Vec<f64>> = g
            .iter()
            .map(|gs| p.iter().map(|ps| char_overlap_f1(gs, ps)).collect())
            .collect();
        word += max_weight_assignment(&w);
        chr += max_weight_assignment(&c);
    }
    (word, chr, pred.len(), gold.len())
}

struct SluTotals {
    word: f64,
    chr: f64,
    n_pred: usize,
    n_gold: usize,
}

fn slu_totals(records: &[PredictionRecord]) -> SluTotals {
    records.iter().map(slu_utterance).fold(
        SluTotals {
            word: 0.0,
            chr: 0.0,
            n_pred: 0,
            n_gold: 0,
        },
        |mut t, (w, c, np, ng)| {
            t.word += w;
            t.chr += c;
            t.n_pred += np;
            t.n_gold += ng;
            t
        },
    )
}

pub fn slu_f1(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    check(records)?;
    let t = slu_totals(records);
    let w = Prf::from_counts(t.word, t.n_pred, t.n_gold).f1;
    let c = Prf::from_counts(t.chr, t.n_pred, t.n_gold).f1;
    Ok((w + c) / 2.0)
}

pub fn evaluate(records: &[PredictionRecord]) -> Result<MetricReport, MetricsError> {
    check(records)?;
    let intent_accuracy = intent_accuracy(records)?;
    let (tp, np, ng) = records.iter().map(exact_counts).fold((0, 0, 0), |a, c| {
        (a.0 + c.0, a.1 + c.1, a.2 + c.2)
    });
    let ent = Prf::from_counts(tp as f64, np, ng);
    let t = slu_totals(records);
    let w = Prf::from_counts(t.word, t.n_pred, t.n_gold).f1;
    let c = Prf::from_counts(t.chr, t.n_pred, t.n_gold).f1;
    Ok(MetricReport {
        intent_accuracy,
        entity_precision: ent.precision,
        entity_recall: ent.recall,
        entity_f1: ent.f1,
        slu_word_f1: w,
        slu_char_f1: c,
        slu_f1: (w + c) / 2.0,
        counts: MetricCounts {
            n_utts: records.len(),
            tp,
            fp: np - tp,
            fn_: ng - tp,
            word_tp_frac: t.word,
            char_tp_frac: t.chr,
            slu_gold_spans: t.n_gold,
            slu_pred_spans: t.n_pred,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Entity;

    fn label(s: &str, a: &str, ents: &[(&str, &str)]) -> SemanticLabel {
        SemanticLabel::new(s, a, ents.iter().map(|(t, f)| Entity::new(*t, *f)).collect())
    }

    fn rec(id: &str, gold: SemanticLabel, pred: SemanticLabel) -> PredictionRecord {
        PredictionRecord::new(id, gold, Decoded::Parsed(pred))
    }

    #[test]
    fn intent_accuracy_examples() {
        let g = label("alarm", "set", &[]);
        let all: Vec<_> = (0..4).map(|i| rec(&i.to_string(), g.clone(), g.clone())).collect();
        assert_eq!(intent_accuracy(&all).unwrap(), 1.0);

        let mut half = all.clone();
        half[0].pred = Decoded::Parsed(label("alarm", "query", &[]));
        half[1].pred = Decoded::Unparseable;
        assert_eq!(intent_accuracy(&half).unwrap(), 0.5);

        let wrong_action = vec![rec("x", g.clone(), label("alarm", "remove", &[]))];
        assert_eq!(intent_accuracy(&wrong_action).unwrap(), 0.0);
        assert_eq!(intent_accuracy(&[]), Err(MetricsError::EmptyRecords));
    }

    #[test]
    fn entity_prf_examples() {
        let g = label("alarm", "set", &[("time", "seven am")]);
        let perfect = entity_prf(&[rec("1", g.clone(), g.clone())]).unwrap();
        assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));

        let empty = entity_prf(&[rec("1", g.clone(), label("alarm", "set", &[]))]).unwrap();
        assert_eq!((empty.precision, empty.recall, empty.f1), (0.0, 0.0, 0.0));

        let mixed = entity_prf(&[rec(
            "1",
            label("s", "a", &[("a", "x"), ("b", "y")]),
            label("s", "a", &[("a", "x"), ("b", "z"), ("c", "x")]),
        )])
        .unwrap();
        assert!((mixed.precision - 1.0 / 3.0).abs() < 1e-15);
        assert!((mixed.recall - 0.5).abs() < 1e-15);
        assert!((mixed.f1 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn overlap_credit() {
        assert!((word_overlap_f1("seven am", "seven") - 2.0 / 3.0).abs() < 1e-15);
        assert!((char_overlap_f1("seven am", "seven") - 10.0 / 12.0).abs() < 1e-15);
        assert_eq!(word_overlap_f1("a b", "c"), 0.0);
        assert_eq!(word_overlap_f1("new york", "york new"), 1.0);
    }

    #[test]
    fn slu_f1_extremes() {
        let g = label("alarm", "set", &[("time", "seven am")]);
        assert_eq!(slu_f1(&[rec("1", g.clone(), g.clone())]).unwrap(), 1.0);
        let bad = PredictionRecord::new("1", g.clone(), Decoded::Unparseable);
        assert_eq!(slu_f1(&[bad]).unwrap(), 0.0);
    }

    #[test]
    fn slu_partial_filler_credit() {
        let g = label("alarm", "set", &[("time", "seven am")]);
        let p = label("alarm", "set", &[("time", "seven")]);
        let r = evaluate(&[rec("1", g, p)]).unwrap();
        // 3 gold spans, 3 predicted: scenario and action full credit.
        assert!((r.slu_word_f1 - (2.0 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
        assert!((r.slu_char_f1 - (2.0 + 10.0 / 12.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hungarian_beats_greedy() {
        // Greedy on row 0 would take 0.9 and leave 0.0 for row 1.
        let w = vec![vec![0.9, 0.8], vec![0.7, 0.0]];
        assert!((max_weight_assignment(&w) - 1.5).abs() < 1e-15);
        let rect = vec![vec![0.1, 0.5, 0.2]];
        assert!((max_weight_assignment(&rect) - 0.5).abs() < 1e-15);
        assert_eq!(max_weight_assignment(&[]), 0.0);
    }

    #[test]
    fn entity_free_perfect_intents_score_one() {
        let recs: Vec<_> = (0..3)
            .map(|i| rec(&i.to_string(), label("a", "b", &[]), label("a", "b", &[])))
            .collect();
        assert_eq!(slu_f1(&recs).unwrap(), 1.0);
        let r = evaluate(&recs).unwrap();
        assert_eq!(r.entity_f1, 1.0);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let g = label("a", "b", &[]);
        let recs = vec![rec("1", g.clone(), g.clone()), rec("1", g.clone(), g)];
        assert_eq!(evaluate(&recs), Err(MetricsError::DuplicateUtterance("1".into())));
    }
}
