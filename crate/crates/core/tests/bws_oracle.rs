use std::collections::BTreeMap;

use num::{BigInt, BigRational, ToPrimitive};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use emotrans_core::bws::*;
use emotrans_core::data::Emotion;
use emotrans_core::exec::Execution;
use emotrans_core::synthetic;

/// Recount from scratch: for every item, walk the whole judgment list and
/// look the tuple up by linear scan.
fn recount(tuples: &[Tuple4], judgments: &[Judgment]) -> BTreeMap<String, (i64, i64, i64)> {
    let mut out = BTreeMap::new();
    let mut all_items: Vec<&String> = tuples.iter().flat_map(|t| t.item_ids.iter()).collect();
    all_items.sort();
    all_items.dedup();
    for item in all_items {
        let (mut b, mut w, mut n) = (0, 0, 0);
        for j in judgments {
            let t = tuples.iter().find(|t| t.tuple_id == j.tuple_id).unwrap();
            if t.item_ids.iter().any(|x| x == item) {
                n += 1;
                if &j.best == item {
                    b += 1;
                }
                if &j.worst == item {
                    w += 1;
                }
            }
        }
        if n > 0 {
            out.insert(item.clone(), (b, w, n));
        }
    }
    out
}

fn assert_matches_oracle(tuples: &[Tuple4], judgments: &[Judgment]) {
    let table = aggregate_scores(tuples, judgments).unwrap();
    let oracle = recount(tuples, judgments);
    assert_eq!(table.raw.len(), oracle.len());
    for (item, &(b, w, n)) in &oracle {
        let exact = BigRational::new(BigInt::from(b - w), BigInt::from(n));
        let raw = exact.to_f64().unwrap();
        assert_eq!(table.raw[item], raw, "{item}");
        assert_eq!(table.scores[item], (raw + 1.0) / 2.0, "{item}");
        assert_eq!(table.appearances[item], n as usize);
    }
}

fn tuple(id: &str, items: [&str; 4]) -> Tuple4 {
    Tuple4::new(id, Emotion::Anger, items.map(String::from)).unwrap()
}

fn judgment(t: &Tuple4, annotator: &str, best: usize, worst: usize) -> Judgment {
    Judgment {
        tuple_id: t.tuple_id.clone(),
        annotator_id: annotator.into(),
        best: t.item_ids[best].clone(),
        worst: t.item_ids[worst].clone(),
        timestamp: 0,
    }
}

/// The 12 ordered (best, worst) choices within a tuple.
fn choices() -> Vec<(usize, usize)> {
    (0..4).flat_map(|b| (0..4).filter(move |&w| w != b).map(move |w| (b, w))).collect()
}

#[test]
fn exhaustive_single_tuple_three_annotators() {
    let t = tuple("t1", ["a", "b", "c", "d"]);
    let ts = [t.clone()];
    let c = choices();
    for x in &c {
        for y in &c {
            for z in &c {
                let js = vec![
                    judgment(&t, "p", x.0, x.1),
                    judgment(&t, "q", y.0, y.1),
                    judgment(&t, "r", z.0, z.1),
                ];
                assert_matches_oracle(&ts, &js);
            }
        }
    }
}

#[test]
fn exhaustive_slots_over_ten_overlapping_tuples() {
    let items: Vec<String> = (0..16).map(|i| format!("i{i:02}")).collect();
    let tuples = generate_tuples(&items, 2, Emotion::Fear, 3).unwrap();
    assert!(tuples.len() <= 10);
    let mut rng = synthetic::rng(5);
    let base = synthetic::random_judgments(&tuples, 3, &mut rng);
    for slot in 0..base.len() {
        let t = tuples.iter().find(|t| t.tuple_id == base[slot].tuple_id).unwrap();
        for (b, w) in choices() {
            let mut js = base.clone();
            js[slot] = judgment(t, &js[slot].annotator_id.clone(), b, w);
            assert_matches_oracle(&tuples, &js);
        }
    }
}

#[test]
fn random_partial_sets_up_to_ten_tuples() {
    let mut rng = synthetic::rng(11);
    let items: Vec<String> = (0..12).map(|i| format!("x{i}")).collect();
    for round in 0..500 {
        let t_count = rng.random_range(1..=10);
        let tuples: Vec<Tuple4> = (0..t_count)
            .map(|k| {
                let mut pool = items.clone();
                pool.shuffle(&mut rng);
                Tuple4::new(format!("r{k}"), Emotion::Joy, [0, 1, 2, 3].map(|i| pool[i].clone())).unwrap()
            })
            .collect();
        let mut js = synthetic::random_judgments(&tuples, 3, &mut rng);
        js.retain(|_| rng.random_bool(0.7));
        if js.is_empty() {
            continue;
        }
        assert_matches_oracle(&tuples, &js);
        let table = aggregate_scores(&tuples, &js).unwrap();
        assert!(table.raw.values().all(|r| (-1.0..=1.0).contains(r)), "round {round}");
    }
}

#[test]
fn six_items_three_tuples_full_table() {
    let t1 = tuple("t1", ["a", "b", "c", "d"]);
    let t2 = tuple("t2", ["c", "d", "e", "f"]);
    let t3 = tuple("t3", ["a", "c", "e", "f"]);
    let tuples = [t1.clone(), t2.clone(), t3.clone()];
    let js = vec![
        judgment(&t1, "p", 0, 3),
        judgment(&t1, "q", 2, 3),
        judgment(&t2, "p", 2, 1),
        judgment(&t3, "p", 0, 1),
        judgment(&t3, "q", 3, 1),
    ];
    let s = aggregate_scores(&tuples, &js).unwrap();
    // a: best 2 of 4; b: 0 of 2; c: best 1, worst 2 of 5; d: worst 3 of 3; e, f: best 1 of 3
    let expected = [
        ("a", 2.0 / 4.0, 4),
        ("b", 0.0, 2),
        ("c", -1.0 / 5.0, 5),
        ("d", -1.0, 3),
        ("e", 1.0 / 3.0, 3),
        ("f", 1.0 / 3.0, 3),
    ];
    for (item, raw, n) in expected {
        assert_eq!(s.raw[item], raw, "{item}");
        assert_eq!(s.appearances[item], n);
    }
    assert_matches_oracle(&tuples, &js);
}

#[test]
fn histogram_for_twenty_items() {
    let items: Vec<String> = (0..20).map(|i| format!("tw{i}")).collect();
    let tuples = generate_tuples(&items, 8, Emotion::Sadness, 7).unwrap();
    assert_eq!(tuples.len(), 40);
    let mut hist: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &tuples {
        for id in &t.item_ids {
            *hist.entry(id).or_default() += 1;
        }
    }
    assert_eq!(hist.len(), 20);
    assert!(hist.values().all(|&c| c == 8));
    let mut sets: Vec<Vec<&String>> = tuples
        .iter()
        .map(|t| {
            let mut s: Vec<&String> = t.item_ids.iter().collect();
            s.sort();
            s
        })
        .collect();
    sets.sort();
    sets.dedup();
    assert_eq!(sets.len(), 40);
}

#[test]
fn reliability_does_not_depend_on_execution_mode() {
    let items: Vec<String> = (0..60).map(|i| format!("i{i}")).collect();
    let tuples = generate_tuples(&items, 4, Emotion::Anger, 1).unwrap();
    let js = synthetic::random_judgments(&tuples, 3, &mut synthetic::rng(2));
    let seq = split_half_reliability_with(&tuples, &js, 50, 9, Execution::Sequential).unwrap();
    let par = split_half_reliability_with(&tuples, &js, 50, 9, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    let mut shuffled = js.clone();
    shuffled.reverse();
    assert_eq!(split_half_reliability(&tuples, &shuffled, 50, 9).unwrap(), seq);
}

#[test]
fn consistent_annotators_agree_strongly() {
    let items: Vec<String> = (0..40).map(|i| format!("i{i:02}")).collect();
    let tuples = generate_tuples(&items, 8, Emotion::Joy, 4).unwrap();
    let latent = |id: &str| id[1..].parse::<f64>().unwrap();
    let js = synthetic::consistent_judgments(&tuples, &latent, 2);
    let r = split_half_reliability(&tuples, &js, 20, 0).unwrap();
    assert_eq!(r.pearson.mean, 1.0);
    assert_eq!(r.pearson.std, 0.0);
    let s = aggregate_scores(&tuples, &js).unwrap();
    let ranked: Vec<f64> = items.iter().map(|i| s.scores[i]).collect();
    let truth: Vec<f64> = items.iter().map(|i| latent(i)).collect();
    assert!(emotrans_core::metrics::spearman(&ranked, &truth).unwrap() > 0.9);
}

fn arb_case() -> impl Strategy<Value = (Vec<Tuple4>, Vec<Judgment>, u64)> {
    (1usize..=10, 1usize..=3, any::<u64>()).prop_map(|(n_tuples, annotators, seed)| {
        let mut rng = synthetic::rng(seed);
        let items: Vec<String> = (0..10).map(|i| format!("p{i}")).collect();
        let tuples: Vec<Tuple4> = (0..n_tuples)
            .map(|k| {
                let mut pool = items.clone();
                pool.shuffle(&mut rng);
                Tuple4::new(format!("q{k}"), Emotion::Fear, [0, 1, 2, 3].map(|i| pool[i].clone())).unwrap()
            })
            .collect();
        let js = synthetic::random_judgments(&tuples, annotators, &mut rng);
        (tuples, js, seed)
    })
}

proptest! {
    #[test]
    fn permutation_invariance((tuples, js, seed) in arb_case()) {
        let a = aggregate_scores(&tuples, &js).unwrap();
        let mut perm = js.clone();
        perm.shuffle(&mut synthetic::rng(seed ^ 1));
        prop_assert_eq!(a, aggregate_scores(&tuples, &perm).unwrap());
    }

    #[test]
    fn doubling_keeps_raw((tuples, js, _seed) in arb_case()) {
        let a = aggregate_scores(&tuples, &js).unwrap();
        let doubled: Vec<Judgment> = js.iter().chain(&js).cloned().collect();
        let b = aggregate_scores(&tuples, &doubled).unwrap();
        prop_assert_eq!(a.raw, b.raw);
    }

    #[test]
    fn scores_bounded((tuples, js, _seed) in arb_case()) {
        let a = aggregate_scores(&tuples, &js).unwrap();
        for (id, s) in &a.scores {
            prop_assert!((0.0..=1.0).contains(s));
            prop_assert!(a.appearances[id] >= 1);
        }
    }

    #[test]
    fn generated_tuples_are_valid(n in 4usize..40, k in 1usize..6, seed in any::<u64>()) {
        let items: Vec<String> = (0..n).map(|i| format!("g{i}")).collect();
        match generate_tuples(&items, k, Emotion::Anger, seed) {
            Ok(tuples) => {
                let mut hist: BTreeMap<&str, usize> = BTreeMap::new();
                for t in &tuples {
                    prop_assert!(t.validate().is_ok());
                    for id in &t.item_ids {
                        *hist.entry(id).or_default() += 1;
                    }
                }
                prop_assert!(hist.values().all(|&c| c == k || c == k + 1));
                prop_assert_eq!(generate_tuples(&items, k, Emotion::Anger, seed).unwrap(), tuples);
            }
            Err(e) => prop_assert!(n < 8, "unexpected infeasibility for n={}: {}", n, e),
        }
    }
}
