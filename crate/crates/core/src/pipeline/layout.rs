use super::PipelineError;
use crate::he::PlainVector;

/// Slot geometry of a packed database: `S` slots, feature dimension `m`,
/// split count `N_in`, block size `s = m / N_in` and set capacity `B = S / s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PackingLayout {
    slots: usize,
    m: usize,
    n_in: usize,
}

impl PackingLayout {
    pub fn new(slots: usize, m: usize, n_in: usize) -> Result<Self, PipelineError> {
        let bad = |why: &str| {
            Err(PipelineError::InvalidLayout(format!(
                "S={slots}, m={m}, N_in={n_in}: {why}"
            )))
        };
        if !slots.is_power_of_two() || !m.is_power_of_two() || !n_in.is_power_of_two() {
            return bad("all must be powers of two");
        }
        if m > slots {
            return bad("m exceeds the slot count");
        }
        if n_in > m {
            return bad("N_in exceeds m");
        }
        Ok(Self { slots, m, n_in })
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    /// Block size `s`.
    pub fn block(&self) -> usize {
        self.m / self.n_in
    }

    /// Enrollees per ciphertext set, `B = S * N_in / m`.
    pub fn capacity(&self) -> usize {
        self.slots / self.block()
    }

    /// Copies of an `m`-vector that fit in the slots.
    pub fn tiles(&self) -> usize {
        self.slots / self.m
    }

    pub fn log_n_in(&self) -> u32 {
        self.n_in.trailing_zeros()
    }

    pub fn log_block(&self) -> u32 {
        self.block().trailing_zeros()
    }

    /// `(set, block)` of a shard-local enrollee index.
    pub fn locate(&self, index: usize) -> (usize, usize) {
        (index / self.capacity(), index % self.capacity())
    }

    /// Compression shift of the `j`-th result: `(j mod s) + 1`, in `1..=s`.
    pub fn compress_offset(&self, j: usize) -> usize {
        j % self.block() + 1
    }

    /// Slot holding the score of `(set j, block k)` in packed output `j / s`.
    pub fn packed_slot(&self, set: usize, block: usize) -> (usize, usize) {
        let s = self.block();
        (set / s, (block * s + self.compress_offset(set)) % self.slots)
    }

    /// Number of packed output ciphertexts for `sets` result ciphertexts.
    pub fn packed_count(&self, sets: usize) -> usize {
        sets.div_ceil(self.block())
    }
}

/// Plaintext masks used by enrollment, expansion and compression.
#[derive(Clone, Debug)]
pub struct MaskSet {
    /// `E_i[p] = 1` iff `p` lies in block `i`.
    pub enroll: Vec<PlainVector>,
    /// `X_i[p] = 1` iff `p mod m` lies in block `i`.
    pub expand: Vec<PlainVector>,
    /// `M[p] = 1` iff `p mod s == 0`.
    pub score: PlainVector,
    // compress[o][p] = 1 iff p mod s == o
    compress: Vec<PlainVector>,
}

impl MaskSet {
    /// Score mask shifted right by `offset` slots.
    pub fn compress_mask(&self, offset: usize) -> &PlainVector {
        &self.compress[offset % self.compress.len()]
    }
}

fn indicator(len: usize, f: impl Fn(usize) -> bool) -> PlainVector {
    PlainVector::new((0..len).map(|p| if f(p) { 1.0 } else { 0.0 }).collect())
}

pub fn make_masks(layout: &PackingLayout) -> MaskSet {
    let (slots, m, s) = (layout.slots(), layout.m(), layout.block());
    let enroll = (0..layout.n_in())
        .map(|i| indicator(slots, |p| p / s == i))
        .collect();
    let expand = (0..layout.n_in())
        .map(|i| indicator(slots, |p| (p % m) / s == i))
        .collect();
    let compress: Vec<PlainVector> = (0..s).map(|o| indicator(slots, |p| p % s == o)).collect();
    MaskSet {
        enroll,
        expand,
        score: compress[0].clone(),
        compress,
    }
}

fn normalized(f: &[f64], m: usize) -> Result<Vec<f64>, PipelineError> {
    if f.len() != m {
        return Err(PipelineError::DimMismatch { got: f.len(), expected: m });
    }
    let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(PipelineError::ZeroVector);
    }
    Ok(f.iter().map(|x| x / norm).collect())
}

/// Unit-normalized `f` in slots `[0, m)`, zeros elsewhere.
pub fn prepare_enroll_vector(f: &[f64], layout: &PackingLayout) -> Result<PlainVector, PipelineError> {
    let mut v = normalized(f, layout.m())?;
    v.resize(layout.slots(), 0.0);
    Ok(PlainVector::new(v))
}

/// Unit-normalized `f` tiled across all slots.
pub fn prepare_query_vector(f: &[f64], layout: &PackingLayout) -> Result<PlainVector, PipelineError> {
    let v = normalized(f, layout.m())?;
    Ok(PlainVector::new(v.iter().copied().cycle().take(layout.slots()).collect()))
}

/// Plaintexts of one whole set: ciphertext `i` carries sub-part `i` of
/// each `(block, vector)` at that block. Vectors are normalized here.
pub fn pack_set_plain(
    layout: &PackingLayout,
    members: &[(usize, &[f64])],
) -> Result<Vec<PlainVector>, PipelineError> {
    let s = layout.block();
    let mut parts = vec![vec![0.0; layout.slots()]; layout.n_in()];
    for &(k, f) in members {
        if k >= layout.capacity() {
            return Err(PipelineError::CapacityExceeded {
                index: k,
                capacity: layout.capacity(),
            });
        }
        let v = normalized(f, layout.m())?;
        for (i, part) in parts.iter_mut().enumerate() {
            part[k * s..(k + 1) * s].copy_from_slice(&v[i * s..(i + 1) * s]);
        }
    }
    Ok(parts.into_iter().map(PlainVector::new).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_scale_capacity() {
        let l = PackingLayout::new(8192, 128, 4).unwrap();
        assert_eq!(l.block(), 32);
        assert_eq!(l.capacity(), 256);
        assert_eq!(l.tiles(), 64);
        assert!(PackingLayout::new(8192, 96, 4).is_err());
        assert!(PackingLayout::new(64, 128, 4).is_err());
        assert!(PackingLayout::new(64, 16, 32).is_err());
    }

    #[test]
    fn small_masks() {
        let l = PackingLayout::new(8, 4, 2).unwrap();
        let m = make_masks(&l);
        assert_eq!(m.expand[0].slots(), &[1., 1., 0., 0., 1., 1., 0., 0.]);
        assert_eq!(m.expand[1].slots(), &[0., 0., 1., 1., 0., 0., 1., 1.]);
        assert_eq!(m.enroll[0].slots(), &[1., 1., 0., 0., 0., 0., 0., 0.]);
        assert_eq!(m.enroll[1].slots(), &[0., 0., 1., 1., 0., 0., 0., 0.]);
        assert_eq!(m.score.slots(), &[1., 0., 1., 0., 1., 0., 1., 0.]);
        assert_eq!(m.compress_mask(1).slots(), &[0., 1., 0., 1., 0., 1., 0., 1.]);
    }

    #[test]
    fn prepared_vectors() {
        let l = PackingLayout::new(8, 4, 2).unwrap();
        let e = prepare_enroll_vector(&[3., 4., 0., 0.], &l).unwrap();
        assert_eq!(e.slots(), &[0.6, 0.8, 0., 0., 0., 0., 0., 0.]);
        let q = prepare_query_vector(&[0., 0., 0., 2.], &l).unwrap();
        assert_eq!(q.slots(), &[0., 0., 0., 1., 0., 0., 0., 1.]);
        assert!(matches!(prepare_query_vector(&[0.; 4], &l), Err(PipelineError::ZeroVector)));
        assert!(matches!(
            prepare_enroll_vector(&[1.; 3], &l),
            Err(PipelineError::DimMismatch { .. })
        ));
    }

    #[test]
    fn packed_slot_interleaves() {
        let l = PackingLayout::new(8, 4, 2).unwrap();
        assert_eq!(l.packed_slot(0, 0), (0, 1));
        assert_eq!(l.packed_slot(1, 0), (0, 2));
        assert_eq!(l.packed_slot(1, 3), (0, 0));
        assert_eq!(l.packed_slot(2, 1), (1, 3));
        assert_eq!(l.packed_count(3), 2);
    }

    fn layouts() -> impl Strategy<Value = PackingLayout> {
        (3u32..10, 1u32..6, 0u32..6).prop_filter_map("valid", |(ls, lm, ln)| {
            PackingLayout::new(1 << ls, 1 << lm, 1 << ln).ok()
        })
    }

    proptest! {
        #[test]
        fn expand_masks_partition_unity(l in layouts()) {
            let masks = make_masks(&l);
            for p in 0..l.slots() {
                let total: f64 = masks.expand.iter().map(|x| x.slots()[p]).sum();
                prop_assert_eq!(total, 1.0);
                let enrolled: f64 = masks.enroll.iter().map(|x| x.slots()[p]).sum();
                prop_assert_eq!(enrolled, if p < l.m() { 1.0 } else { 0.0 });
            }
        }

        #[test]
        fn prepared_norm_is_one(f in prop::collection::vec(-10.0f64..10.0, 16)) {
            prop_assume!(f.iter().any(|x| x.abs() > 1e-3));
            let l = PackingLayout::new(64, 16, 4).unwrap();
            let e = prepare_enroll_vector(&f, &l).unwrap();
            let n: f64 = e.slots()[..16].iter().map(|x| x * x).sum();
            prop_assert!((n - 1.0).abs() < 1e-12);
            let q = prepare_query_vector(&f, &l).unwrap();
            for p in 0..48 {
                prop_assert_eq!(q.slots()[p], q.slots()[p + 16]);
            }
        }
    }
}
