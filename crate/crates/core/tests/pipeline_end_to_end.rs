use std::sync::Arc;

use bm_core::ckks::{CkksClient, CkksContext, CkksEvaluator, KeySet, RingParams, SecurityCheck};
use bm_core::fvec::gen_dataset;
use bm_core::he::{Decryptor, Encryptor, Evaluator, ExactEngine, Op, SchemeParams};
use bm_core::pipeline::{
    decide, decrypt_all, expected_query_counts, extract_scores, make_masks, match_query,
    match_query_conventional, prepare_enroll_vector, prepare_query_vector, rotation_steps,
    EnrollmentStore, PackingLayout,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

struct Run {
    scores: std::collections::BTreeMap<usize, f64>,
}

fn run_pipeline<E: Evaluator + Encryptor + Decryptor>(
    e: &E,
    layout: PackingLayout,
    enrollees: &[(usize, Vec<f64>)],
    capacity: usize,
    query: &[f64],
) -> Run {
    let d = e.params().depth;
    let masks = make_masks(&layout);
    let mut store = EnrollmentStore::new(layout, d - 1, capacity);
    for (u, f) in enrollees {
        let ct = e.encrypt(&prepare_enroll_vector(f, &layout).unwrap()).unwrap();
        store.enroll(e, &masks, *u, &ct).unwrap();
    }
    let q = e.encrypt(&prepare_query_vector(query, &layout).unwrap()).unwrap();
    let out = match_query(e, &store, &masks, &q).unwrap();
    let packed = decrypt_all(e, &out.packed).unwrap();
    let scores = extract_scores(&packed, &layout, &out.sets, &|t| store.occupancy(t).to_vec());
    Run { scores }
}

#[test]
fn small_example_scores() {
    let e = ExactEngine::new(SchemeParams::exact(8, 3, 40)).unwrap();
    let l = PackingLayout::new(8, 4, 2).unwrap();
    let run = run_pipeline(
        &e,
        l,
        &[(0, vec![1., 0., 0., 0.]), (1, vec![0., 1., 0., 0.])],
        4,
        &[1., 0., 0., 0.],
    );
    assert_eq!(run.scores[&0], 1.0);
    assert_eq!(run.scores[&1], 0.0);
    assert_eq!(run.scores.len(), 2);
}

#[test]
fn exact_counts_match_prediction() {
    let e = ExactEngine::new(SchemeParams::exact(1024, 3, 40)).unwrap();
    let l = PackingLayout::new(1024, 64, 4).unwrap();
    let data = gen_dataset(200, 64, 3).unwrap();
    let masks = make_masks(&l);
    let mut store = EnrollmentStore::new(l, 2, 256);
    for u in 0..200 {
        let ct = e.encrypt(&prepare_enroll_vector(&data.row_f64(u), &l).unwrap()).unwrap();
        store.enroll(&e, &masks, u, &ct).unwrap();
    }
    let before = e.counters().snapshot();
    let q = e.encrypt(&prepare_query_vector(&data.row_f64(7), &l).unwrap()).unwrap();
    let out = match_query(&e, &store, &masks, &q).unwrap();
    let counts = e.counters().snapshot().since(&before);
    assert_eq!(out.sets.len(), 4);
    assert_eq!(counts, expected_query_counts(&l, 4, 3));
    assert_eq!(counts.total(Op::MulC), 16);
}

fn conventional_scores(e: &ExactEngine, slots: usize, m: usize, enrollees: &[(usize, Vec<f64>)], capacity: usize, query: &[f64]) -> std::collections::BTreeMap<usize, f64> {
    let base = PackingLayout::new(slots, m, 1).unwrap();
    let masks = make_masks(&base);
    let mut store = EnrollmentStore::new(base, 2, capacity);
    for (u, f) in enrollees {
        let ct = e.encrypt(&prepare_enroll_vector(f, &base).unwrap()).unwrap();
        store.enroll(e, &masks, *u, &ct).unwrap();
    }
    let q = e.encrypt_at_level(&prepare_query_vector(query, &base).unwrap(), 2).unwrap();
    let out = match_query_conventional(e, &store, &masks, &q).unwrap();
    let packed = decrypt_all(e, &out.packed).unwrap();
    extract_scores(&packed, &base, &out.sets, &|t| store.occupancy(t).to_vec())
}

#[test]
fn conventional_agrees_with_split() {
    let e = ExactEngine::new(SchemeParams::exact(256, 3, 40)).unwrap();
    let data = gen_dataset(20, 32, 5).unwrap();
    let enrollees: Vec<(usize, Vec<f64>)> = (0..20).map(|u| (u, data.row_f64(u))).collect();
    let query = data.row_f64(4);
    let base = conventional_scores(&e, 256, 32, &enrollees, 32, &query);
    for n_in in [2, 4, 8] {
        let split = run_pipeline(&e, PackingLayout::new(256, 32, n_in).unwrap(), &enrollees, 32, &query);
        assert_eq!(base.len(), split.scores.len());
        for (u, s) in &base {
            assert_eq!(s.to_bits(), split.scores[u].to_bits(), "N_in {n_in}, index {u}");
        }
    }
    assert_eq!(decide(base, 0.9).best_index, Some(4));
}

#[test]
fn ckks_pipeline_matches_plain_cosine() {
    let mut ring = RingParams::default_for(2048);
    ring.security = SecurityCheck::InsecureTestOnly;
    let ctx = Arc::new(CkksContext::new(ring).unwrap());
    let layout = PackingLayout::new(ctx.slots(), 64, 4).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let keys = KeySet::generate(&ctx, &rotation_steps(&layout, 4, true), &mut rng);
    let eval = CkksEvaluator::new(ctx.clone(), keys.evaluation.clone());
    let client = CkksClient::from_key_set(ctx, &keys).with_seed(22);

    let data = gen_dataset(40, 64, 9).unwrap();
    let masks = make_masks(&layout);
    let mut store = EnrollmentStore::new(layout, 2, 64);
    for u in 0..40 {
        let ct = client.encrypt(&prepare_enroll_vector(&data.row_f64(u), &layout).unwrap()).unwrap();
        store.enroll(&eval, &masks, u, &ct).unwrap();
    }
    let query = data.row_f64(13);
    let q = client.encrypt(&prepare_query_vector(&query, &layout).unwrap()).unwrap();
    let out = match_query(&eval, &store, &masks, &q).unwrap();
    assert_eq!(out.packed[0].level(), 0);
    let packed = decrypt_all(&client, &out.packed).unwrap();
    let scores = extract_scores(&packed, &layout, &out.sets, &|t| store.occupancy(t).to_vec());
    assert_eq!(scores.len(), 40);
    let mut worst: f64 = 0.0;
    for (u, s) in &scores {
        worst = worst.max((s - cosine(&query, &data.row_f64(*u))).abs());
    }
    assert!(worst < 1e-2, "max error {worst}");
    assert_eq!(decide(scores, 0.9).best_index, Some(13));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_oracle_equivalence(
        shape in prop::sample::select(vec![(64usize, 16usize, 2usize), (256, 32, 4), (128, 8, 8), (64, 16, 1)]),
        fill in 0.1f64..1.0,
        seed in any::<u64>(),
        q_pick in any::<prop::sample::Index>(),
    ) {
        let (slots, m, n_in) = shape;
        let layout = PackingLayout::new(slots, m, n_in).unwrap();
        let capacity = 2 * layout.capacity() + 3;
        let count = ((capacity as f64 * fill) as usize).max(1);
        let e = ExactEngine::new(SchemeParams::exact(slots, 3, 40)).unwrap();
        let data = gen_dataset(count + 1, m, seed).unwrap();
        let enrollees: Vec<(usize, Vec<f64>)> = (0..count).map(|u| (u, data.row_f64(u))).collect();
        let query = data.row_f64(q_pick.index(count + 1));
        let run = run_pipeline(&e, layout, &enrollees, capacity, &query);
        prop_assert_eq!(run.scores.len(), count);
        for (u, f) in &enrollees {
            prop_assert!((run.scores[u] - cosine(&query, f)).abs() <= 1e-9);
        }
        let base = conventional_scores(&e, slots, m, &enrollees, capacity, &query);
        for (u, v) in &base {
            prop_assert_eq!(v.to_bits(), run.scores[u].to_bits());
        }
    }
}
