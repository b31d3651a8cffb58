use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::CostError;
use crate::he::Op;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub mean_ms: f64,
    pub std_ms: Option<f64>,
}

/// Mean execution time per (operation, level) in milliseconds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimingTable {
    entries: BTreeMap<(Op, usize), Timing>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    op: String,
    level: usize,
    mean_ms: f64,
    std_ms: Option<f64>,
}

impl TimingTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reference timings (ms) at levels 3, 2, 1 with standard deviations.
    pub fn reference() -> Self {
        const ROWS: [(Op, [(f64, f64); 3]); 5] = [
            (Op::Add, [(0.44, 0.03), (0.33, 0.01), (0.09, 0.01)]),
            (Op::MulC, [(7.87, 0.51), (5.49, 0.34), (3.13, 0.10)]),
            (Op::MulP, [(1.25, 0.13), (0.97, 0.06), (0.76, 0.08)]),
            (Op::Rot, [(7.50, 0.33), (5.33, 0.45), (2.95, 0.16)]),
            (Op::Res, [(1.30, 0.04), (0.95, 0.02), (0.60, 0.03)]),
        ];
        let mut t = Self::new();
        for (op, by_level) in ROWS {
            for (i, (mean, std)) in by_level.into_iter().enumerate() {
                t.insert(op, 3 - i, mean, Some(std));
            }
        }
        t
    }

    /// Every operation costs `ms` at levels `1..=depth`.
    pub fn uniform(depth: usize, ms: f64) -> Self {
        let mut t = Self::new();
        for op in Op::ALL {
            for l in 1..=depth {
                t.insert(op, l, ms, None);
            }
        }
        t
    }

    pub fn insert(&mut self, op: Op, level: usize, mean_ms: f64, std_ms: Option<f64>) {
        self.entries.insert((op, level), Timing { mean_ms, std_ms });
    }

    pub fn entry(&self, op: Op, level: usize) -> Option<Timing> {
        self.entries.get(&(op, level)).copied()
    }

    /// Mean time at `level`. Level 0 (only reachable by `Add`) falls back
    /// to the lowest tabulated level.
    pub fn get(&self, op: Op, level: usize) -> Result<f64, CostError> {
        if let Some(t) = self.entries.get(&(op, level)) {
            return Ok(t.mean_ms);
        }
        if level == 0 {
            if let Some((_, t)) = self.entries.range((op, 1)..=(op, usize::MAX)).next() {
                return Ok(t.mean_ms);
            }
        }
        Err(CostError::MissingEntry { op, level })
    }

    pub fn levels(&self) -> Vec<usize> {
        let mut l: Vec<usize> = self.entries.keys().map(|&(_, l)| l).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Op, usize, Timing)> + '_ {
        self.entries.iter().map(|(&(op, l), &t)| (op, l, t))
    }

    /// Every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(&k, t)| {
                (
                    k,
                    Timing {
                        mean_ms: t.mean_ms * c,
                        std_ms: t.std_ms.map(|s| s * c),
                    },
                )
            })
            .collect();
        Self { entries }
    }

    /// Checks positivity and that all five operations cover levels `1..=depth`.
    pub fn validate(&self, depth: usize) -> Result<(), CostError> {
        for op in Op::ALL {
            for l in 1..=depth {
                let t = self.entry(op, l).ok_or(CostError::MissingEntry { op, level: l })?;
                if !(t.mean_ms > 0.0) {
                    return Err(CostError::NonPositive { op, level: l });
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CostError> {
        let mut out = csv::Writer::from_writer(w);
        for (op, level, t) in self.iter() {
            out.serialize(CsvRow {
                op: op.name().to_string(),
                level,
                mean_ms: t.mean_ms,
                std_ms: t.std_ms,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, CostError> {
        let mut rd = csv::Reader::from_reader(r);
        let mut t = Self::new();
        for row in rd.deserialize() {
            let row: CsvRow = row?;
            let op = Op::parse(&row.op).ok_or_else(|| CostError::Parse(format!("unknown op {}", row.op)))?;
            t.insert(op, row.level, row.mean_ms, row.std_ms);
        }
        Ok(t)
    }

    /// Markdown table with one row per operation and one column per level,
    /// highest level first, cells formatted as `mean (std)`.
    pub fn to_markdown(&self) -> String {
        let mut levels = self.levels();
        levels.reverse();
        let mut s = String::from("| Operation |");
        for l in &levels {
            let _ = write!(s, " l = {l} |");
        }
        s.push_str("\n|---|");
        for _ in &levels {
            s.push_str("---|");
        }
        s.push('\n');
        for op in Op::ALL {
            let _ = write!(s, "| {op} |");
            for &l in &levels {
                match self.entry(op, l) {
                    Some(Timing { mean_ms, std_ms: Some(sd) }) => {
                        let _ = write!(s, " {mean_ms:.2} ({sd:.2}) |");
                    }
                    Some(Timing { mean_ms, std_ms: None }) => {
                        let _ = write!(s, " {mean_ms:.2} |");
                    }
                    None => s.push_str(" - |"),
                }
            }
            s.push('\n');
        }
        s
    }
}
