use std::collections::BTreeSet;
use std::io::Write;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};

use emotrans_core::bws::{aggregate_scores, generate_tuples, Judgment, Tuple4};
use emotrans_core::data::Emotion;
use emotrans_service::*;

fn campaign() -> (Campaign, Vec<Tuple4>) {
    let items: Vec<String> = (0..24).map(|i| format!("i{i:02}")).collect();
    let tuples = generate_tuples(&items, 4, Emotion::Anger, 3).unwrap();
    let c = Campaign::new("c", items.iter().map(|i| (i.clone(), i.clone())), tuples.clone()).unwrap();
    (c, tuples)
}

fn key(j: &Judgment) -> (String, String) {
    (j.tuple_id.clone(), j.annotator_id.clone())
}

/// Several annotator threads race to fetch and submit; the "crash" stops
/// them after `budget` submissions and may leave a torn record behind. The
/// restarted store must hold exactly the acknowledged judgments.
fn trial(seed: u64) {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let (c, tuples) = campaign();
    let mut acked: Vec<Judgment> = Vec::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    for _restart in 0..3 {
        let (handle, _) = CampaignHandle::open(c.clone(), &log).unwrap();
        let replayed: BTreeSet<_> = handle.store().snapshot().iter().map(key).collect();
        let expected: BTreeSet<_> = acked.iter().map(key).collect();
        assert_eq!(replayed, expected, "seed {seed}");
        if !acked.is_empty() {
            assert_eq!(
                handle.scores(Emotion::Anger).unwrap(),
                aggregate_scores(&tuples, &acked).unwrap(),
                "seed {seed}"
            );
        }

        let handle = Arc::new(handle);
        let budget = Arc::new(Mutex::new(rng.random_range(0..40usize)));
        let new_acks = Arc::new(Mutex::new(Vec::new()));
        let threads: Vec<_> = (0..4)
            .map(|a| {
                let (handle, budget, new_acks) = (handle.clone(), budget.clone(), new_acks.clone());
                let mut trng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (a as u64 + 1) * 0x9e37);
                std::thread::spawn(move || loop {
                    {
                        let mut b = budget.lock().unwrap();
                        if *b == 0 {
                            return;
                        }
                        *b -= 1;
                    }
                    let annotator = format!("a{}", trng.random_range(0..6));
                    let tuple = match handle.next_tuple(&annotator, Emotion::Anger).unwrap() {
                        NextTuple::Assigned(a) => a.tuple,
                        NextTuple::Done { .. } => continue,
                    };
                    let b = trng.random_range(0..4);
                    // one in eight submissions is invalid (best == worst)
                    let w = if trng.random_range(0..8) == 0 { b } else { (b + trng.random_range(1..4)) % 4 };
                    let j = Judgment {
                        tuple_id: tuple.tuple_id.clone(),
                        annotator_id: annotator,
                        best: tuple.item_ids[b].clone(),
                        worst: tuple.item_ids[w].clone(),
                        timestamp: 1,
                    };
                    match handle.submit(j.clone()) {
                        Ok(_) => new_acks.lock().unwrap().push(j),
                        Err(ServiceError::Validation(_)) => assert_eq!(b, w),
                        // another thread served the same annotator id the same tuple
                        Err(ServiceError::Conflict(_)) => {}
                        Err(e) => panic!("seed {seed}: {e}"),
                    }
                })
            })
            .collect();
        for t in threads {
            t.join().unwrap();
        }
        acked.extend(new_acks.lock().unwrap().drain(..));
        drop(handle);

        if rng.random_bool(0.5) {
            // a write cut short by the crash
            let t = &tuples[rng.random_range(0..tuples.len())];
            let line = serde_json::to_string(&Judgment {
                tuple_id: t.tuple_id.clone(),
                annotator_id: "ghost".into(),
                best: t.item_ids[0].clone(),
                worst: t.item_ids[1].clone(),
                timestamp: 1,
            })
            .unwrap();
            let cut = rng.random_range(1..line.len());
            let mut f = std::fs::OpenOptions::new().append(true).open(&log).unwrap();
            f.write_all(&line.as_bytes()[..cut]).unwrap();
        }
    }
    let (handle, _) = CampaignHandle::open(c, &log).unwrap();
    assert_eq!(handle.store().len(), acked.len());
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.is_empty() || text.ends_with('\n'));
    for line in text.lines() {
        serde_json::from_str::<Judgment>(line).unwrap();
    }
}

#[test]
fn crash_restart_keeps_exactly_the_acknowledged_judgments() {
    for seed in 0..40 {
        trial(seed);
    }
}

#[test]
fn concurrent_distinct_annotators_never_corrupt_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let (c, tuples) = campaign();
    let (handle, _) = CampaignHandle::open(c, &log).unwrap();
    let handle = Arc::new(handle);
    let threads: Vec<_> = (0..8)
        .map(|a| {
            let handle = handle.clone();
            std::thread::spawn(move || {
                let annotator = format!("ann{a}");
                let mut n = 0;
                while let NextTuple::Assigned(asg) = handle.next_tuple(&annotator, Emotion::Anger).unwrap() {
                    let t = asg.tuple;
                    assert!(!handle.store().view(|v| v.has_judged(&annotator, &t.tuple_id)));
                    handle
                        .submit(Judgment {
                            tuple_id: t.tuple_id.clone(),
                            annotator_id: annotator.clone(),
                            best: t.item_ids[a % 4].clone(),
                            worst: t.item_ids[(a + 1) % 4].clone(),
                            timestamp: 1,
                        })
                        .unwrap();
                    n += 1;
                }
                n
            })
        })
        .collect();
    let counts: Vec<usize> = threads.into_iter().map(|t| t.join().unwrap()).collect();
    assert!(counts.iter().all(|&n| n == tuples.len()));
    drop(handle);
    let js: Vec<Judgment> = emotrans_core::data::read_jsonl(&log).unwrap();
    assert_eq!(js.len(), 8 * tuples.len());
    let keys: BTreeSet<_> = js.iter().map(key).collect();
    assert_eq!(keys.len(), js.len());
}
