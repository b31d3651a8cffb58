use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

/// Operations tracked by [`OpCounters`] and priced by timing tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    MulC,
    MulP,
    Rot,
    Res,
}

impl Op {
    pub const ALL: [Op; 5] = [Op::Add, Op::MulC, Op::MulP, Op::Rot, Op::Res];

    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "Add",
            Op::MulC => "MulC",
            Op::MulP => "MulP",
            Op::Rot => "Rot",
            Op::Res => "Res",
        }
    }

    pub fn parse(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.name().eq_ignore_ascii_case(s))
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const MAX_TRACKED_LEVEL: usize = 15;

/// Per-(operation, level) call counts. Levels are those of the input
/// ciphertext at call time.
pub struct OpCounters {
    counts: [[AtomicU64; MAX_TRACKED_LEVEL + 1]; 5],
}

impl Default for OpCounters {
    fn default() -> Self {
        Self {
            counts: std::array::from_fn(|_| std::array::from_fn(|_| AtomicU64::new(0))),
        }
    }
}

impl fmt::Debug for OpCounters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.snapshot().fmt(f)
    }
}

impl OpCounters {
    pub fn record(&self, op: Op, level: usize) {
        self.counts[op.index()][level.min(MAX_TRACKED_LEVEL)].fetch_add(1, Ordering::Relaxed);
    }

    pub fn reset(&self) {
        for row in &self.counts {
            for c in row {
                c.store(0, Ordering::Relaxed);
            }
        }
    }

    pub fn snapshot(&self) -> CountSnapshot {
        let mut counts = [[0u64; MAX_TRACKED_LEVEL + 1]; 5];
        for (i, row) in self.counts.iter().enumerate() {
            for (l, c) in row.iter().enumerate() {
                counts[i][l] = c.load(Ordering::Relaxed);
            }
        }
        CountSnapshot { counts }
    }
}

/// Immutable copy of [`OpCounters`]; supports differencing and merging.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct CountSnapshot {
    counts: [[u64; MAX_TRACKED_LEVEL + 1]; 5],
}

impl Default for CountSnapshot {
    fn default() -> Self {
        Self {
            counts: [[0; MAX_TRACKED_LEVEL + 1]; 5],
        }
    }
}

impl CountSnapshot {
    pub fn get(&self, op: Op, level: usize) -> u64 {
        self.counts[op.index()][level]
    }

    pub fn set(&mut self, op: Op, level: usize, count: u64) {
        self.counts[op.index()][level] = count;
    }

    pub fn add(&mut self, op: Op, level: usize, count: u64) {
        self.counts[op.index()][level] += count;
    }

    pub fn total(&self, op: Op) -> u64 {
        self.counts[op.index()].iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().flatten().all(|&c| c == 0)
    }

    /// `self - earlier`, saturating at zero.
    pub fn since(&self, earlier: &CountSnapshot) -> CountSnapshot {
        let mut out = *self;
        for (i, row) in out.counts.iter_mut().enumerate() {
            for (l, c) in row.iter_mut().enumerate() {
                *c = c.saturating_sub(earlier.counts[i][l]);
            }
        }
        out
    }

    pub fn merge(&mut self, other: &CountSnapshot) {
        for (i, row) in self.counts.iter_mut().enumerate() {
            for (l, c) in row.iter_mut().enumerate() {
                *c += other.counts[i][l];
            }
        }
    }

    /// Non-zero `(op, level, count)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (Op, usize, u64)> + '_ {
        Op::ALL.into_iter().flat_map(move |op| {
            (0..=MAX_TRACKED_LEVEL).filter_map(move |l| {
                let c = self.counts[op.index()][l];
                (c > 0).then_some((op, l, c))
            })
        })
    }
}

impl fmt::Debug for CountSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (op, l, c) in self.entries() {
            m.entry(&format_args!("{op}@{l}"), &c);
        }
        m.finish()
    }
}
