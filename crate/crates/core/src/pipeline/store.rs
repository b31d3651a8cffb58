use super::layout::{MaskSet, PackingLayout};
use super::ops::rotate_composed;
use super::PipelineError;
use crate::he::{Ciphertext, Evaluator};

/// Packed enrollee sub-vectors of one shard.
///
/// Set `t` is `N_in` ciphertexts; enrollee `u` with `(t, k) = locate(u)`
/// owns block `k` of every ciphertext in set `t`.
#[derive(Clone, Debug)]
pub struct EnrollmentStore {
    layout: PackingLayout,
    level: usize,
    capacity: usize,
    sets: Vec<Option<Vec<Ciphertext>>>,
    occupancy: Vec<Vec<bool>>,
}

impl EnrollmentStore {
    /// Empty store for `capacity` enrollees holding ciphertexts at `level`.
    pub fn new(layout: PackingLayout, level: usize, capacity: usize) -> Self {
        let n_sets = capacity.div_ceil(layout.capacity());
        Self {
            layout,
            level,
            capacity,
            sets: vec![None; n_sets],
            occupancy: vec![vec![false; layout.capacity()]; n_sets],
        }
    }

    pub fn layout(&self) -> &PackingLayout {
        &self.layout
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.occupancy.iter().flatten().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_occupied(&self, index: usize) -> bool {
        let (t, k) = self.layout.locate(index);
        self.occupancy.get(t).is_some_and(|row| row[k])
    }

    pub fn occupancy(&self, set: usize) -> &[bool] {
        &self.occupancy[set]
    }

    pub fn set(&self, t: usize) -> Option<&[Ciphertext]> {
        self.sets.get(t).and_then(|s| s.as_deref())
    }

    pub fn set_count(&self) -> usize {
        self.sets.len()
    }

    /// Ids of sets holding at least one enrollee, ascending.
    pub fn occupied_sets(&self) -> Vec<usize> {
        (0..self.sets.len()).filter(|&t| self.sets[t].is_some()).collect()
    }

    /// Shard-local indices of all enrollees, ascending.
    pub fn enrolled_indices(&self) -> Vec<usize> {
        let b = self.layout.capacity();
        self.occupancy
            .iter()
            .enumerate()
            .flat_map(|(t, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &o)| o)
                    .map(move |(k, _)| t * b + k)
            })
            .collect()
    }

    fn check_index(&self, index: usize) -> Result<(usize, usize), PipelineError> {
        if index >= self.capacity {
            return Err(PipelineError::CapacityExceeded {
                index,
                capacity: self.capacity,
            });
        }
        if self.is_occupied(index) {
            return Err(PipelineError::SlotOccupied(index));
        }
        Ok(self.layout.locate(index))
    }

    /// Enrolls a fresh encryption of `prepare_enroll_vector` output: for each
    /// sub-part `i`, mask block `i`, rescale, rotate right by `(k - i) * s`
    /// and add into set ciphertext `i`.
    pub fn enroll(
        &mut self,
        eval: &dyn Evaluator,
        masks: &MaskSet,
        index: usize,
        ct: &Ciphertext,
    ) -> Result<(), PipelineError> {
        let (t, k) = self.check_index(index)?;
        if ct.level() != self.level + 1 {
            return Err(PipelineError::LevelMismatch {
                expected: self.level + 1,
                got: ct.level(),
            });
        }
        let s = self.layout.block() as i64;
        let mut parts = Vec::with_capacity(self.layout.n_in());
        for (i, mask) in masks.enroll.iter().enumerate() {
            let piece = eval.rescale(&eval.mul_plain(ct, mask)?)?;
            let shift = -(k as i64 - i as i64) * s;
            parts.push(rotate_composed(eval, &piece, shift, s as usize)?);
        }
        let merged = match self.sets[t].take() {
            None => parts,
            Some(existing) => {
                let merged: Result<Vec<_>, _> = existing
                    .iter()
                    .zip(&parts)
                    .map(|(a, b)| eval.add(a, b))
                    .collect();
                match merged {
                    Ok(m) => m,
                    Err(e) => {
                        self.sets[t] = Some(existing);
                        return Err(e.into());
                    }
                }
            }
        };
        self.sets[t] = Some(merged);
        self.occupancy[t][k] = true;
        Ok(())
    }

    /// Installs a whole set encrypted client-side from `pack_set_plain`.
    pub fn load_set(
        &mut self,
        t: usize,
        cts: Vec<Ciphertext>,
        blocks: &[usize],
    ) -> Result<(), PipelineError> {
        if t >= self.sets.len() {
            return Err(PipelineError::CapacityExceeded {
                index: t * self.layout.capacity(),
                capacity: self.capacity,
            });
        }
        if cts.len() != self.layout.n_in() {
            return Err(PipelineError::InvalidLayout(format!(
                "set needs {} ciphertexts, got {}",
                self.layout.n_in(),
                cts.len()
            )));
        }
        if self.sets[t].is_some() {
            return Err(PipelineError::SlotOccupied(t * self.layout.capacity()));
        }
        for ct in &cts {
            if ct.level() != self.level {
                return Err(PipelineError::LevelMismatch {
                    expected: self.level,
                    got: ct.level(),
                });
            }
        }
        for &k in blocks {
            let index = t * self.layout.capacity() + k;
            if k >= self.layout.capacity() || index >= self.capacity {
                return Err(PipelineError::CapacityExceeded {
                    index,
                    capacity: self.capacity,
                });
            }
        }
        for &k in blocks {
            self.occupancy[t][k] = true;
        }
        self.sets[t] = Some(cts);
        Ok(())
    }

    /// Rebuilds a store from persisted parts.
    pub fn from_parts(
        layout: PackingLayout,
        level: usize,
        capacity: usize,
        sets: Vec<Option<Vec<Ciphertext>>>,
        occupancy: Vec<Vec<bool>>,
    ) -> Result<Self, PipelineError> {
        let mut store = Self::new(layout, level, capacity);
        if sets.len() != store.sets.len() || occupancy.len() != store.occupancy.len() {
            return Err(PipelineError::InvalidLayout("persisted set count".into()));
        }
        store.sets = sets;
        store.occupancy = occupancy;
        Ok(store)
    }
}
