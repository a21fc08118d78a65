mod common;

use proptest::prelude::*;
use slu_mix::labelcodec::Decoded;
use slu_mix::metrics::{entity_prf, evaluate, intent_accuracy, max_weight_assignment, slu_f1};
use slu_mix::rng::SeededRng;
use slu_mix::{Entity, PredictionRecord, SemanticLabel};

use common::{oracle, random_records};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

#[test]
fn matches_exhaustive_scorer_per_utterance() {
    for r in random_records(11, 400, 5) {
        let one = std::slice::from_ref(&r);
        let o = oracle(one);
        let p = entity_prf(one).unwrap();
        assert!(close(p.f1, o.f1), "{r:?}: {} vs {}", p.f1, o.f1);
        assert!(close(slu_f1(one).unwrap(), o.slu_f1), "{r:?}");
    }
}

#[test]
fn fixed_ten_record_fixture() {
    let l = |s: &str, a: &str, e: &[(&str, &str)]| {
        SemanticLabel::new(s, a, e.iter().map(|(t, f)| Entity::new(*t, *f)).collect())
    };
    let recs = vec![
        PredictionRecord::new("1", l("alarm", "set", &[("time", "seven am")]), Decoded::Parsed(l("alarm", "set", &[("time", "seven am")]))),
        PredictionRecord::new("2", l("alarm", "set", &[("time", "seven am")]), Decoded::Parsed(l("alarm", "set", &[("time", "seven")]))),
        PredictionRecord::new("3", l("weather", "query", &[("place", "new york"), ("date", "today")]), Decoded::Parsed(l("weather", "query", &[("date", "today"), ("place", "york")]))),
        PredictionRecord::new("4", l("music", "play", &[]), Decoded::Parsed(l("music", "query", &[]))),
        PredictionRecord::new("5", l("music", "play", &[("artist", "queen")]), Decoded::Unparseable),
        PredictionRecord::new("6", l("iot", "lights_on", &[("room", "kitchen")]), Decoded::Parsed(l("iot", "lights_on", &[("room", "kitchen"), ("room", "kitchen")]))),
        PredictionRecord::new("7", l("lists", "createoradd", &[("item", "milk"), ("item", "eggs")]), Decoded::Parsed(l("lists", "createoradd", &[("item", "eggs milk")]))),
        PredictionRecord::new("8", l("qa", "factoid", &[("person", "Ada Lovelace")]), Decoded::Parsed(l("qa", "factoid", &[("person", "ada lovelace")]))),
        PredictionRecord::new("9", l("general", "joke", &[]), Decoded::Parsed(l("general", "joke", &[("date", "today")]))),
        PredictionRecord::new("10", l("transport", "taxi", &[("place", "paris")]), Decoded::Parsed(l("calendar", "taxi", &[("event", "paris")]))),
    ];
    let o = oracle(&recs);
    let r = evaluate(&recs).unwrap();
    assert!(close(r.intent_accuracy, o.intent_accuracy));
    assert!(close(r.entity_precision, o.precision));
    assert!(close(r.entity_recall, o.recall));
    assert!(close(r.entity_f1, o.f1));
    assert!(close(r.slu_f1, o.slu_f1), "{} vs {}", r.slu_f1, o.slu_f1);
    assert!(close(r.intent_accuracy, 0.7));
    // Fillers keep case, so record 8 is not an exact match.
    assert_eq!((r.counts.tp, r.counts.fp, r.counts.fn_), (3, 7, 7));
}

#[test]
fn spec_entity_example() {
    let gold = SemanticLabel::new("a", "b", vec![Entity::new("a", "x"), Entity::new("b", "y")]);
    let pred = SemanticLabel::new(
        "a",
        "b",
        vec![Entity::new("a", "x"), Entity::new("b", "z"), Entity::new("c", "x")],
    );
    let p = entity_prf(&[PredictionRecord::new("u", gold, Decoded::Parsed(pred))]).unwrap();
    assert!(close(p.precision, 1.0 / 3.0) && close(p.recall, 0.5) && close(p.f1, 0.4));
}

#[test]
fn assignment_matches_brute_force_on_random_matrices() {
    let mut rng = SeededRng::new(5);
    for _ in 0..300 {
        let rows = 1 + rng.below(6) as usize;
        let cols = 1 + rng.below(6) as usize;
        let w: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| (rng.below(5) as f64) / 4.0).collect())
            .collect();
        let spans_g: Vec<(String, String)> = (0..rows).map(|i| ("k".into(), i.to_string())).collect();
        let spans_p: Vec<(String, String)> = (0..cols).map(|j| ("k".into(), j.to_string())).collect();
        thread_local!(static W: std::cell::RefCell<Vec<Vec<f64>>> = const { std::cell::RefCell::new(Vec::new()) });
        W.with(|c| *c.borrow_mut() = w.clone());
        fn credit(g: &str, p: &str) -> f64 {
            W.with(|c| c.borrow()[g.parse::<usize>().unwrap()][p.parse::<usize>().unwrap()])
        }
        let brute = common::best_pairing(&spans_g, &spans_p, credit);
        assert!(close(max_weight_assignment(&w), brute), "{w:?}");
    }
}

#[test]
fn entity_free_slu_depends_only_on_intent() {
    let g = SemanticLabel::new("alarm", "set", vec![]);
    let perfect = PredictionRecord::new("u", g.clone(), Decoded::Parsed(g.clone()));
    assert_eq!(slu_f1(&[perfect]).unwrap(), 1.0);
    let wrong = PredictionRecord::new("u", g, Decoded::Parsed(SemanticLabel::new("alarm", "query", vec![])));
    // scenario full credit; "set"/"query" share one character ('e').
    let char_f1 = (1.0 + 2.0 / 8.0) / 2.0;
    assert!(close(slu_f1(std::slice::from_ref(&wrong)).unwrap(), (0.5 + char_f1) / 2.0));
    assert!(close(slu_f1(std::slice::from_ref(&wrong)).unwrap(), oracle(&[wrong]).slu_f1));
}

#[test]
fn all_unparseable_scores_zero() {
    let recs: Vec<_> = random_records(3, 20, 3)
        .into_iter()
        .map(|r| PredictionRecord::new(r.utt_id, r.gold, Decoded::Unparseable))
        .collect();
    let r = evaluate(&recs).unwrap();
    assert_eq!((r.intent_accuracy, r.entity_f1, r.slu_f1), (0.0, 0.0, 0.0));
}

fn records_strategy() -> impl Strategy<Value = Vec<PredictionRecord>> {
    (any::<u64>(), 1usize..40).prop_map(|(seed, n)| random_records(seed, n, 5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_in_unit_interval(recs in records_strategy()) {
        let r = evaluate(&recs).unwrap();
        for v in [r.intent_accuracy, r.entity_precision, r.entity_recall, r.entity_f1, r.slu_word_f1, r.slu_char_f1, r.slu_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn permutation_invariant(recs in records_strategy(), seed in any::<u64>()) {
        let mut shuffled = recs.clone();
        SeededRng::new(seed).shuffle(&mut shuffled);
        let a = evaluate(&recs).unwrap();
        let b = evaluate(&shuffled).unwrap();
        prop_assert!(close(a.slu_f1, b.slu_f1));
        prop_assert_eq!(a.entity_f1, b.entity_f1);
        prop_assert_eq!(a.intent_accuracy, b.intent_accuracy);
    }

    #[test]
    fn entity_order_does_not_matter(recs in records_strategy(), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let reordered: Vec<_> = recs.iter().map(|r| {
            let mut gold = r.gold.clone();
            rng.shuffle(&mut gold.entities);
            PredictionRecord::new(r.utt_id.clone(), gold, r.pred.clone())
        }).collect();
        let a = evaluate(&recs).unwrap();
        let b = evaluate(&reordered).unwrap();
        prop_assert!(close(a.slu_f1, b.slu_f1));
        prop_assert_eq!(a.entity_f1, b.entity_f1);
    }

    #[test]
    fn removing_a_false_positive_keeps_precision(recs in records_strategy(), pick in any::<prop::sample::Index>()) {
        let before = entity_prf(&recs).unwrap().precision;
        let mut edited = recs.clone();
        let i = pick.index(edited.len());
        let gold = edited[i].gold.clone();
        if let Decoded::Parsed(p) = &mut edited[i].pred {
            let fp = p.entities.iter().position(|e| !gold.entities.contains(e));
            if let Some(j) = fp {
                // Only a prediction that cannot match any gold span is a sure FP.
                let e = p.entities[j].clone();
                if gold.entities.iter().all(|g| g != &e) {
                    p.entities.remove(j);
                }
            }
        }
        prop_assert!(entity_prf(&edited).unwrap().precision + 1e-15 >= before);
    }

    #[test]
    fn adding_an_exact_match_keeps_f1(recs in records_strategy(), pick in any::<prop::sample::Index>()) {
        let before = entity_prf(&recs).unwrap().f1;
        let mut edited = recs.clone();
        let i = pick.index(edited.len());
        let extra = Entity::new("time", "seven am");
        edited[i].gold.entities.push(extra.clone());
        match &mut edited[i].pred {
            Decoded::Parsed(p) => p.entities.push(extra),
            d => *d = Decoded::Parsed(SemanticLabel::new("x", "y", vec![extra])),
        }
        prop_assert!(entity_prf(&edited).unwrap().f1 + 1e-15 >= before || before == 1.0);
    }

    #[test]
    fn perfect_intents_give_full_accuracy(recs in records_strategy()) {
        let perfect: Vec<_> = recs.iter()
            .map(|r| PredictionRecord::new(r.utt_id.clone(), r.gold.clone(), Decoded::Parsed(r.gold.clone())))
            .collect();
        prop_assert_eq!(intent_accuracy(&perfect).unwrap(), 1.0);
        prop_assert!(close(slu_f1(&perfect).unwrap(), 1.0));
    }
}
