use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use slu_mix::scheduler::{build_plan, epoch_batches, nested_permutation, plan_totals, speech_budget, Modality};
use slu_mix::{SchedulerConfig, Scheme};

const LEVELS: [f64; 6] = [0.02, 0.05, 0.10, 0.25, 0.50, 1.0];

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Half-up rounding of p·n with exact decimal arithmetic on p expressed in
/// basis points.
fn budget_ref(n: usize, bp: u64) -> usize {
    ((n as u64 * bp * 2 + 10_000) / 20_000) as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn budget_matches_integer_rounding(n in 0usize..200_000, bp in 0u64..=10_000) {
        prop_assert_eq!(speech_budget(n, bp as f64 / 10_000.0).unwrap(), budget_ref(n, bp));
    }

    #[test]
    fn equal_exposure(n in 1usize..400, epochs in 1usize..5, seed in any::<u64>(), li in 0usize..6) {
        let p = LEVELS[li];
        let speech = ids("s", n);
        let text = ids("t", n);
        let ord = nested_permutation(&speech, seed).unwrap();
        let mut totals = Vec::new();
        for scheme in [Scheme::Direct, Scheme::Curriculum] {
            let plan = build_plan(&SchedulerConfig::new(scheme, p, epochs, seed), &text, &ord).unwrap();
            totals.push(plan_totals(&plan).speech);
        }
        let b = speech_budget(n, p).unwrap();
        prop_assert_eq!(totals, vec![b * epochs, b * epochs]);
    }

    #[test]
    fn levels_nest(n in 1usize..500, seed in any::<u64>()) {
        let speech = ids("s", n);
        let ord = nested_permutation(&speech, seed).unwrap();
        let mut prev: HashSet<String> = HashSet::new();
        for p in LEVELS {
            let plan = build_plan(&SchedulerConfig::new(Scheme::Direct, p, 3, seed), &[], &ord).unwrap();
            let cur: HashSet<String> = plan.pool.iter().cloned().collect();
            prop_assert!(prev.is_subset(&cur));
            prev = cur;
        }
    }

    #[test]
    fn coverage(n in 1usize..300, epochs in 1usize..5, seed in any::<u64>(), li in 0usize..6) {
        let speech = ids("s", n);
        let ord = nested_permutation(&speech, seed).unwrap();
        let p = LEVELS[li];
        let direct = build_plan(&SchedulerConfig::new(Scheme::Direct, p, epochs, seed), &[], &ord).unwrap();
        for e in &direct.epochs {
            let mut got = e.speech_item_ids.clone();
            got.sort();
            let mut want = direct.pool.clone();
            want.sort();
            prop_assert_eq!(got, want);
        }
        let curr = build_plan(&SchedulerConfig::new(Scheme::Curriculum, p, epochs, seed), &[], &ord).unwrap();
        let last = curr.epochs.last().unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for id in &last.speech_item_ids {
            *counts.entry(id).or_default() += 1;
        }
        prop_assert_eq!(counts.len(), curr.pool.len());
        prop_assert!(counts.values().all(|c| *c == epochs));
        for e in &curr.epochs[..epochs - 1] {
            prop_assert!(e.speech_item_ids.is_empty());
        }
    }

    #[test]
    fn deterministic(n in 1usize..200, seed in any::<u64>()) {
        let speech = ids("s", n);
        let text = ids("t", n);
        let cfg = SchedulerConfig::new(Scheme::Curriculum, 0.25, 3, seed);
        let a = build_plan(&cfg, &text, &nested_permutation(&speech, seed).unwrap()).unwrap();
        let b = build_plan(&cfg, &text, &nested_permutation(&speech, seed).unwrap()).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn batches_partition_the_epoch(n in 1usize..200, bs in 1usize..40, seed in any::<u64>()) {
        let speech = ids("s", n);
        let text = ids("t", n);
        let plan = build_plan(&SchedulerConfig::new(Scheme::Direct, 0.5, 2, seed), &text, &nested_permutation(&speech, seed).unwrap()).unwrap();
        let batches = epoch_batches(&plan, 1, bs, seed).unwrap();
        let items: Vec<_> = batches.iter().flatten().collect();
        let e = plan.epoch(1).unwrap();
        prop_assert_eq!(items.len(), e.text_item_ids.len() + e.speech_item_ids.len());
        prop_assert_eq!(items.iter().filter(|b| b.modality == Modality::Speech).count(), e.speech_item_ids.len());
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= bs));
    }
}
