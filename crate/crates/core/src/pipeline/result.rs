use std::collections::BTreeMap;

use super::layout::PackingLayout;

/// Scores of the enrollees in `sets` read from decrypted packed outputs.
///
/// `sets[j]` is the store set id whose result was the `j`-th input to
/// compression; keys of the returned map are shard-local indices
/// `set * B + block` for occupied blocks only.
pub fn extract_scores(
    packed: &[Vec<f64>],
    layout: &PackingLayout,
    sets: &[usize],
    occupancy: &dyn Fn(usize) -> Vec<bool>,
) -> BTreeMap<usize, f64> {
    let b = layout.capacity();
    let mut scores = BTreeMap::new();
    for (j, &t) in sets.iter().enumerate() {
        for (k, occupied) in occupancy(t).into_iter().enumerate() {
            if !occupied {
                continue;
            }
            let (ct, slot) = layout.packed_slot(j, k);
            if let Some(v) = packed.get(ct).and_then(|p| p.get(slot)) {
                scores.insert(t * b + k, *v);
            }
        }
    }
    scores
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub scores: BTreeMap<usize, f64>,
    pub best_index: Option<usize>,
    pub best_score: Option<f64>,
    pub accepted: bool,
    pub threshold: f64,
}

/// Argmax with exact ties going to the lowest index, then the threshold test.
pub fn decide(scores: BTreeMap<usize, f64>, threshold: f64) -> MatchResult {
    let mut best: Option<(usize, f64)> = None;
    for (&g, &v) in &scores {
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((g, v));
        }
    }
    MatchResult {
        best_index: best.map(|(g, _)| g),
        best_score: best.map(|(_, v)| v),
        accepted: best.is_some_and(|(_, v)| v >= threshold),
        threshold,
        scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_interleaved_layout() {
        let l = PackingLayout::new(8, 4, 2).unwrap();
        let packed = vec![vec![23., 10., 20., 11., 21., 12., 22., 13.]];
        let all = |_| vec![true; 4];
        let s = extract_scores(&packed, &l, &[0, 1], &all);
        assert_eq!(s[&0], 10.);
        assert_eq!(s[&4], 20.);
        assert_eq!(s[&3], 13.);
        assert_eq!(s[&7], 23.);
        assert_eq!(s.len(), 8);
        // Sparse set ids keep their own index range.
        let s = extract_scores(&packed, &l, &[0, 5], &|t| vec![t == 5, false, false, t == 5]);
        assert_eq!(s.keys().copied().collect::<Vec<_>>(), vec![20, 23]);
        assert_eq!(s[&20], 20.);
    }

    #[test]
    fn decision_rules() {
        let r = decide(BTreeMap::from([(3, 0.49), (5, 0.2)]), 0.5);
        assert_eq!(r.best_index, Some(3));
        assert!(!r.accepted);
        let r = decide(BTreeMap::from([(7, 0.9), (2, 0.9), (4, 0.1)]), 0.5);
        assert_eq!(r.best_index, Some(2));
        assert!(r.accepted);
        let r = decide(BTreeMap::new(), 0.0);
        assert_eq!(r.best_index, None);
        assert!(!r.accepted);
    }
}
