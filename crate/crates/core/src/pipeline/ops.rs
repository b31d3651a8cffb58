use super::layout::{MaskSet, PackingLayout};
use super::PipelineError;
use crate::he::{normalize_rotation, BackendId, Ciphertext, Decryptor, Evaluator, Payload};
use crate::HeError;

/// Left rotation by `r`, through the direct key if present and otherwise as
/// a chain of power-of-two rotations (each a multiple of `unit`).
pub fn rotate_composed(
    eval: &dyn Evaluator,
    ct: &Ciphertext,
    r: i64,
    unit: usize,
) -> Result<Ciphertext, HeError> {
    if eval.supports_rotation(r) {
        return eval.rotate(ct, r);
    }
    rotate_pow2(eval, ct, r, unit)
}

/// Left rotation by `r` as one rotation per set bit of `r mod S`; `r` must
/// be a multiple of the power of two `unit`.
pub fn rotate_pow2(
    eval: &dyn Evaluator,
    ct: &Ciphertext,
    r: i64,
    unit: usize,
) -> Result<Ciphertext, HeError> {
    let slots = eval.params().slot_count;
    let amount = normalize_rotation(r, slots);
    let unit = unit.max(1);
    if amount % unit != 0 {
        return Err(HeError::MissingRotationKey(r));
    }
    let mut out = ct.clone();
    let mut bit = unit;
    while bit < slots {
        if amount & bit != 0 {
            out = eval.rotate(&out, bit as i64)?;
        }
        bit <<= 1;
    }
    Ok(out)
}

fn is_m_periodic(ct: &Ciphertext, m: usize) -> Option<bool> {
    match ct.payload() {
        Payload::Exact(v) => Some((m..v.len()).all(|p| v[p] == v[p - m])),
        Payload::Ckks(_) => None,
    }
}

/// Turns an encrypted tiled query into `N_in` ciphertexts, the `i`-th
/// holding sub-part `i` repeated in every block.
///
/// Each output costs one masking product, one rescale and `log2 N_in`
/// rotate-and-add steps. Step `j` doubles the filled blocks by rotating
/// `s * 2^j` to the right when bit `j` of `i` is clear and to the left
/// when it is set, so the copies stay inside each `m`-period.
pub fn expand_query(
    eval: &dyn Evaluator,
    ct_q: &Ciphertext,
    layout: &PackingLayout,
    masks: &MaskSet,
) -> Result<Vec<Ciphertext>, PipelineError> {
    if cfg!(debug_assertions) && ct_q.backend() == BackendId::Exact {
        if let Some(false) = is_m_periodic(ct_q, layout.m()) {
            return Err(PipelineError::NotPeriodic);
        }
    }
    let s = layout.block() as i64;
    let mut out = Vec::with_capacity(layout.n_in());
    for (i, mask) in masks.expand.iter().enumerate() {
        let mut c = eval.rescale(&eval.mul_plain(ct_q, mask)?)?;
        for j in 0..layout.log_n_in() {
            let stride = s << j;
            let r = if (i >> j) & 1 == 0 { -stride } else { stride };
            let rotated = eval.rotate(&c, r)?;
            c = eval.add(&c, &rotated)?;
        }
        out.push(c);
    }
    Ok(out)
}

/// `C = add(rotate(C, 2^(i-1)), C)` for `i = 1..=log2(width)`, largest
/// stride first: slot `p` accumulates slots `p .. p + width`.
///
/// Running strides in descending order makes the summation tree of the
/// split and whole-vector paths identical, so the exact backend yields
/// bit-equal scores from both.
fn prefix_ladder(eval: &dyn Evaluator, mut c: Ciphertext, width: usize) -> Result<Ciphertext, HeError> {
    let mut step = width / 2;
    while step >= 1 {
        let rotated = eval.rotate(&c, step as i64)?;
        c = eval.add(&rotated, &c)?;
        step /= 2;
    }
    Ok(c)
}

/// Pairwise sum pairing `i` with `i + len/2` at every round.
fn tree_sum(eval: &dyn Evaluator, mut parts: Vec<Ciphertext>) -> Result<Ciphertext, HeError> {
    while parts.len() > 1 {
        let (lo, hi) = parts.split_at(parts.len() / 2);
        parts = lo.iter().zip(hi).map(|(a, b)| eval.add(a, b)).collect::<Result<_, _>>()?;
    }
    Ok(parts.pop().expect("N_in >= 1"))
}

/// Split cosine similarity of an expanded query against one stored set.
/// Slot `k * s` of the result holds the score of block `k`.
pub fn match_set(
    eval: &dyn Evaluator,
    expanded: &[Ciphertext],
    set: &[Ciphertext],
    layout: &PackingLayout,
) -> Result<Ciphertext, PipelineError> {
    if expanded.len() != layout.n_in() || set.len() != layout.n_in() {
        return Err(PipelineError::InvalidLayout(format!(
            "expected {} ciphertexts per side, got {} and {}",
            layout.n_in(),
            expanded.len(),
            set.len()
        )));
    }
    let prods = expanded
        .iter()
        .zip(set)
        .map(|(q, v)| eval.rescale(&eval.mul_ct(q, v)?))
        .collect::<Result<Vec<_>, _>>()?;
    let acc = tree_sum(eval, prods)?;
    Ok(prefix_ladder(eval, acc, layout.block())?)
}

/// Whole-vector baseline: the query tiled every `m` slots against stored
/// ciphertexts packing `S / m` full vectors each; slot `k * m` of result
/// `j` holds the score of vector `k` in stored ciphertext `j`.
pub fn conventional_match(
    eval: &dyn Evaluator,
    ct_q: &Ciphertext,
    stored: &[Ciphertext],
    layout: &PackingLayout,
) -> Result<Vec<Ciphertext>, PipelineError> {
    if layout.n_in() != 1 {
        return Err(PipelineError::InvalidLayout(
            "conventional matching needs N_in = 1".into(),
        ));
    }
    stored
        .iter()
        .map(|c| {
            let prod = eval.rescale(&eval.mul_ct(ct_q, c)?)?;
            Ok(prefix_ladder(eval, prod, layout.m())?)
        })
        .collect()
}

/// Packs `T` result ciphertexts into `ceil(T / s)`: result `t` is rotated
/// right by `(t mod s) + 1`, masked to its score slots and rescaled, then
/// summed into packed ciphertext `t / s`.
///
/// Offsets run over `1..=s` rather than `0..s`, so every result costs exactly
/// one counted rotation. The rotation comes before the mask because the
/// rescale that follows the mask leaves no level for rotating.
pub fn compress(
    eval: &dyn Evaluator,
    results: &[Ciphertext],
    layout: &PackingLayout,
    masks: &MaskSet,
) -> Result<Vec<Ciphertext>, PipelineError> {
    let s = layout.block();
    let mut packed: Vec<Ciphertext> = Vec::with_capacity(layout.packed_count(results.len()));
    for (t, r) in results.iter().enumerate() {
        let offset = layout.compress_offset(t);
        let shifted = eval.rotate(r, -(offset as i64))?;
        let scores = eval.rescale(&eval.mul_plain(&shifted, masks.compress_mask(offset))?)?;
        if t % s == 0 {
            packed.push(scores);
        } else {
            let last = packed.last_mut().expect("offset 0 came first");
            *last = eval.add(last, &scores)?;
        }
    }
    Ok(packed)
}

/// Decrypts packed outputs.
pub fn decrypt_all(dec: &dyn Decryptor, cts: &[Ciphertext]) -> Result<Vec<Vec<f64>>, HeError> {
    cts.iter().map(|c| dec.decrypt(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{Encryptor, ExactEngine, Op, PlainVector, SchemeParams};
    use crate::pipeline::layout::make_masks;

    fn exact(slots: usize) -> ExactEngine {
        ExactEngine::new(SchemeParams::exact(slots, 3, 40)).unwrap()
    }

    #[test]
    fn expansion_small_example() {
        let e = exact(8);
        let l = PackingLayout::new(8, 4, 2).unwrap();
        let masks = make_masks(&l);
        let (a, b, c, d) = (1.0, 2.0, 3.0, 4.0);
        let q = e.encrypt(&PlainVector::new(vec![a, b, c, d, a, b, c, d])).unwrap();
        let out = expand_query(&e, &q, &l, &masks).unwrap();
        assert_eq!(e.decrypt(&out[0]).unwrap(), vec![a, b, a, b, a, b, a, b]);
        assert_eq!(e.decrypt(&out[1]).unwrap(), vec![c, d, c, d, c, d, c, d]);
        assert_eq!(out[0].level(), 2);
    }

    #[test]
    fn expansion_without_split_is_masking_only() {
        let e = exact(8);
        let l = PackingLayout::new(8, 4, 1).unwrap();
        let masks = make_masks(&l);
        let v = vec![1., 2., 3., 4., 1., 2., 3., 4.];
        let out = expand_query(&e, &e.encrypt(&PlainVector::new(v.clone())).unwrap(), &l, &masks).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(e.decrypt(&out[0]).unwrap(), v);
        assert_eq!(e.counters().snapshot().total(Op::Rot), 0);
    }

    #[test]
    fn non_periodic_query_is_rejected() {
        let e = exact(8);
        let l = PackingLayout::new(8, 4, 2).unwrap();
        let q = e.encrypt(&PlainVector::new(vec![1., 0., 0., 0., 0., 0., 0., 0.])).unwrap();
        assert!(matches!(
            expand_query(&e, &q, &l, &make_masks(&l)),
            Err(PipelineError::NotPeriodic)
        ));
    }

    #[test]
    fn compression_interleaves_two_sets() {
        let e = exact(8);
        let l = PackingLayout::new(8, 4, 2).unwrap();
        let masks = make_masks(&l);
        let lvl = 1;
        let a = [0.1, 0.2, 0.3, 0.4];
        let b = [0.5, 0.6, 0.7, 0.8];
        let r0 = e
            .encrypt_at_level(&PlainVector::new(vec![a[0], 9., a[1], 9., a[2], 9., a[3], 9.]), lvl)
            .unwrap();
        let r1 = e
            .encrypt_at_level(&PlainVector::new(vec![b[0], 7., b[1], 7., b[2], 7., b[3], 7.]), lvl)
            .unwrap();
        let packed = compress(&e, &[r0.clone(), r1], &l, &masks).unwrap();
        assert_eq!(packed.len(), 1);
        assert_eq!(packed[0].level(), 0);
        assert_eq!(
            e.decrypt(&packed[0]).unwrap(),
            vec![b[3], a[0], b[0], a[1], b[1], a[2], b[2], a[3]]
        );
        let single = compress(&e, &[r0], &l, &masks).unwrap();
        assert_eq!(e.decrypt(&single[0]).unwrap(), vec![0., a[0], 0., a[1], 0., a[2], 0., a[3]]);
        assert_eq!(e.counters().snapshot().total(Op::Rot), 3);
    }

    #[test]
    fn composed_rotation_matches_direct() {
        let e = exact(16);
        let v: Vec<f64> = (0..16).map(|x| x as f64).collect();
        let c = e.encrypt(&PlainVector::new(v)).unwrap();
        let direct = e.decrypt(&e.rotate(&c, -12).unwrap()).unwrap();
        let composed = e.decrypt(&rotate_pow2(&e, &c, -12, 4).unwrap()).unwrap();
        assert_eq!(direct, composed);
        // 4 = 0b0100: a single power-of-two step.
        assert_eq!(e.counters().snapshot().total(Op::Rot), 2);
        assert!(rotate_pow2(&e, &c, 3, 4).is_err());
    }
}
