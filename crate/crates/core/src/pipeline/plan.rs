use std::collections::BTreeSet;

use super::layout::{MaskSet, PackingLayout};
use super::ops::{compress, conventional_match, expand_query, match_set};
use super::store::EnrollmentStore;
use super::PipelineError;
use crate::he::{normalize_rotation, Ciphertext, CountSnapshot, Evaluator, Op};

/// Left-rotation steps a key set needs for querying a store of up to
/// `max_sets` sets, plus power-of-two block strides for enrollment.
pub fn rotation_steps(layout: &PackingLayout, max_sets: usize, enroll: bool) -> Vec<usize> {
    let slots = layout.slots();
    let s = layout.block();
    let mut steps = BTreeSet::new();
    let mut push = |r: i64| {
        let n = normalize_rotation(r, slots);
        if n != 0 {
            steps.insert(n);
        }
    };
    for j in 0..layout.log_n_in() {
        push((s << j) as i64);
        push(-((s << j) as i64));
    }
    for i in 0..layout.log_block() {
        push(1 << i);
    }
    for o in 1..=s.min(max_sets) {
        push(-(o as i64));
    }
    if enroll {
        let mut stride = s;
        while stride < slots {
            push(stride as i64);
            stride <<= 1;
        }
    }
    steps.into_iter().collect()
}

/// Rotation steps of the whole-vector baseline over `max_cts` stored ciphertexts.
pub fn conventional_rotation_steps(layout: &PackingLayout, max_cts: usize) -> Vec<usize> {
    let slots = layout.slots();
    let mut steps: BTreeSet<usize> = (0..layout.m().trailing_zeros()).map(|i| 1usize << i).collect();
    for o in 1..=layout.m().min(max_cts) {
        steps.insert(normalize_rotation(-(o as i64), slots));
    }
    steps.into_iter().collect()
}

/// Operation counts of one query against `sets` sets, by input level, for
/// a store at level `d - 1`.
pub fn expected_query_counts(layout: &PackingLayout, sets: usize, depth: usize) -> CountSnapshot {
    let n = layout.n_in() as u64;
    let log_n = layout.log_n_in() as u64;
    let log_s = layout.log_block() as u64;
    let t = sets as u64;
    let mut c = CountSnapshot::default();
    let (d, d1, d2, d3) = (depth, depth - 1, depth - 2, depth - 3);
    // expansion
    c.add(Op::MulP, d, n);
    c.add(Op::Res, d, n);
    c.add(Op::Rot, d1, n * log_n);
    c.add(Op::Add, d1, n * log_n);
    // split inner products
    c.add(Op::MulC, d1, n * t);
    c.add(Op::Res, d1, n * t);
    c.add(Op::Add, d2, (n - 1) * t);
    c.add(Op::Rot, d2, log_s * t);
    c.add(Op::Add, d2, log_s * t);
    // compression
    c.add(Op::Rot, d2, t);
    c.add(Op::MulP, d2, t);
    c.add(Op::Res, d2, t);
    c.add(Op::Add, d3, t - layout.packed_count(sets) as u64);
    c
}

/// Encrypted outputs of one query against one store.
#[derive(Clone, Debug)]
pub struct MatchOutput {
    pub packed: Vec<Ciphertext>,
    /// Store set id of each compression input, in order.
    pub sets: Vec<usize>,
}

fn expect_level(stage: &'static str, ct: &Ciphertext, level: usize) -> Result<(), PipelineError> {
    if ct.level() != level {
        return Err(PipelineError::LevelSchedule {
            stage,
            expected: level,
            got: ct.level(),
        });
    }
    Ok(())
}

/// Expansion, split matching over every occupied set, and compression,
/// asserting the level schedule `d -> d-1 -> d-2 -> d-3` along the way.
pub fn match_query(
    eval: &dyn Evaluator,
    store: &EnrollmentStore,
    masks: &MaskSet,
    ct_q: &Ciphertext,
) -> Result<MatchOutput, PipelineError> {
    let layout = store.layout();
    let d = store.level() + 1;
    expect_level("query", ct_q, d)?;
    let sets = store.occupied_sets();
    if sets.is_empty() {
        return Ok(MatchOutput {
            packed: Vec::new(),
            sets,
        });
    }
    let expanded = expand_query(eval, ct_q, layout, masks)?;
    for e in &expanded {
        expect_level("expansion", e, d - 1)?;
    }
    let results = sets
        .iter()
        .map(|&t| {
            let r = match_set(eval, &expanded, store.set(t).expect("occupied"), layout)?;
            expect_level("matching", &r, d - 2)?;
            Ok(r)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let packed = compress(eval, &results, layout, masks)?;
    for p in &packed {
        expect_level("compression", p, d - 3)?;
    }
    Ok(MatchOutput { packed, sets })
}

/// Whole-vector baseline against a store built with `N_in = 1`; the tiled
/// query is encrypted directly at the store level.
pub fn match_query_conventional(
    eval: &dyn Evaluator,
    store: &EnrollmentStore,
    masks: &MaskSet,
    ct_q: &Ciphertext,
) -> Result<MatchOutput, PipelineError> {
    let layout = store.layout();
    expect_level("query", ct_q, store.level())?;
    let sets = store.occupied_sets();
    let stored: Vec<Ciphertext> = sets
        .iter()
        .map(|&t| store.set(t).expect("occupied")[0].clone())
        .collect();
    let results = conventional_match(eval, ct_q, &stored, layout)?;
    let packed = compress(eval, &results, layout, masks)?;
    Ok(MatchOutput { packed, sets })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_layout_rotation_set() {
        let l = PackingLayout::new(8192, 128, 4).unwrap();
        let steps = rotation_steps(&l, 8, false);
        // +-32, +-64, 1..16 powers, compression offsets 1..=8
        let want: BTreeSet<usize> = [32, 64, 8192 - 32, 8192 - 64, 1, 2, 4, 8, 16]
            .into_iter()
            .chain((1..=8).map(|o| 8192 - o))
            .collect();
        assert_eq!(steps, want.into_iter().collect::<Vec<_>>());
        let with_enroll = rotation_steps(&l, 8, true);
        assert!(with_enroll.contains(&4096) && with_enroll.contains(&128));
    }

    #[test]
    fn expected_counts_follow_rotation_law() {
        let l = PackingLayout::new(1024, 64, 4).unwrap();
        let c = expected_query_counts(&l, 5, 3);
        // 4*2 expansion + 5*log2(16) ladders + one shift per set
        assert_eq!(c.total(Op::Rot), 8 + 20 + 5);
        assert_eq!(c.total(Op::MulC), 20);
        assert_eq!(c.total(Op::Res), 4 + 20 + 5);
    }
}
