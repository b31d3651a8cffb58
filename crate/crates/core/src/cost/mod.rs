//! Operation timing tables and the analytical matching-time model.

mod calibrate;
mod model;
mod table;

pub use calibrate::calibrate;
pub use model::{
    bracket_check, compression_cost, continuous_f, default_candidates, expansion_cost,
    matching_cost, optimal_nin, total_cost, total_f, BracketReport, CostBreakdown, CostOptions,
    ExpansionForm, Geometry, LadderLength,
};
pub use table::{Timing, TimingTable};

use std::fmt::Write as _;

use thiserror::Error;

use crate::error::HeError;
use crate::he::{CountSnapshot, Op};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("N_in = {0} is not a positive power of two")]
    InvalidNin(usize),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("timing table has no entry for {op} at level {level}")]
    MissingEntry { op: Op, level: usize },
    #[error("timing for {op} at level {level} is not positive")]
    NonPositive { op: Op, level: usize },
    #[error("no candidate N_in values")]
    NoCandidates,
    #[error("backend unavailable for calibration: {0}")]
    BackendUnavailable(String),
    #[error("timing table parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    He(#[from] HeError),
}

/// `sum count(op, l) * t(op, l)`. Entries missing from the table are
/// priced at the nearest tabulated level of the same operation.
pub fn predict_from_counts(counts: &CountSnapshot, tt: &TimingTable) -> f64 {
    counts
        .entries()
        .map(|(op, level, n)| n as f64 * nearest(tt, op, level))
        .sum()
}

fn nearest(tt: &TimingTable, op: Op, level: usize) -> f64 {
    if let Ok(t) = tt.get(op, level) {
        return t;
    }
    tt.iter()
        .filter(|(o, _, _)| *o == op)
        .min_by_key(|(_, l, _)| l.abs_diff(level))
        .map_or(0.0, |(_, _, t)| t.mean_ms)
}

/// Markdown report: the timing table, `F(N_in)` per candidate with its
/// breakdown, the optimum, and the alternative term forms side by side.
pub fn markdown_report(tt: &TimingTable, g: &Geometry, candidates: &[usize]) -> Result<String, CostError> {
    let mut s = String::new();
    let _ = writeln!(s, "## Operation times (ms)\n");
    s.push_str(&tt.to_markdown());
    let _ = writeln!(
        s,
        "\n## Matching time model (m = {}, R = {}, S = {}, m' = {})\n",
        g.m,
        g.r,
        g.slots,
        g.m_prime()
    );
    s.push_str("| N_in | expansion | matching | compression | F | F (collapsed expansion) | F (log s ladder) |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for &n in candidates {
        let b = total_f(tt, g, n)?;
        let collapsed = total_cost(
            tt,
            g,
            n,
            CostOptions {
                expansion: ExpansionForm::Collapsed,
                ..CostOptions::default()
            },
        )?;
        let alg = total_cost(
            tt,
            g,
            n,
            CostOptions {
                ladder: LadderLength::Block,
                ..CostOptions::default()
            },
        )?;
        let _ = writeln!(
            s,
            "| {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |",
            n, b.expansion_ms, b.matching_ms, b.compression_ms, b.total_ms, collapsed.total_ms, alg.total_ms
        );
    }
    let best = optimal_nin(tt, g, candidates)?;
    let _ = writeln!(s, "\nOptimal N_in: {best}");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_counts_predict_zero() {
        assert_eq!(predict_from_counts(&CountSnapshot::default(), &TimingTable::reference()), 0.0);
    }

    #[test]
    fn expansion_counts_dot_product() {
        let tt = TimingTable::reference();
        let mut c = CountSnapshot::default();
        c.set(Op::MulP, 3, 4);
        c.set(Op::Res, 3, 4);
        c.set(Op::Rot, 2, 8);
        c.set(Op::Add, 2, 8);
        let want = 4.0 * 1.25 + 4.0 * 1.30 + 8.0 * 5.33 + 8.0 * 0.33;
        assert!((predict_from_counts(&c, &tt) - want).abs() < 1e-12);
        // Level-0 additions fall back to level 1.
        c.set(Op::Add, 0, 10);
        assert!((predict_from_counts(&c, &tt) - want - 0.9).abs() < 1e-12);
    }

    #[test]
    fn report_mentions_optimum() {
        let r = markdown_report(
            &TimingTable::reference(),
            &Geometry::new(128, 2048, 8192),
            &[2, 4, 8, 16, 32],
        )
        .unwrap();
        assert!(r.contains("| 4 | 61.72 | 281.92 | 91.20 | 434.84 |"));
        assert!(r.contains("Optimal N_in: 4"));
    }
}
