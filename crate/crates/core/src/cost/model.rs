//! Closed-form matching-time model.
//!
//! With `m' = m*R/S` stored ciphertexts worth of features and split count
//! `N_in`, expansion runs at level 3, matching at levels 2 and 1 and
//! compression at level 1.

use super::{CostError, TimingTable};
use crate::he::Op;

/// Database geometry: feature dimension, enrollee count and slot count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub m: usize,
    pub r: usize,
    pub slots: usize,
}

impl Geometry {
    pub fn new(m: usize, r: usize, slots: usize) -> Self {
        Self { m, r, slots }
    }

    /// `m*R/S`, the number of ciphertexts holding `R` full feature vectors.
    pub fn m_prime(&self) -> f64 {
        (self.m * self.r) as f64 / self.slots as f64
    }
}

/// Form of the expansion term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExpansionForm {
    /// `N(MulP + Res) + N log N (Res + MulC)`, one rescale and constant multiply per ladder rotation.
    #[default]
    Evaluated,
    /// `N(MulP + Res) + log N (Res + MulC)`, ladder terms counted once.
    Collapsed,
}

/// Length of the per-set rotation ladder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LadderLength {
    /// `log m' - log N`, ladder length of the aggregate model.
    #[default]
    Aggregate,
    /// `log m - log N = log s`, the ladder the pipeline runs.
    Block,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CostOptions {
    pub expansion: ExpansionForm,
    pub ladder: LadderLength,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostBreakdown {
    pub n_in: usize,
    pub m_prime: f64,
    pub expansion_ms: f64,
    pub matching_ms: f64,
    pub compression_ms: f64,
    pub total_ms: f64,
}

fn check_nin(n_in: usize) -> Result<(), CostError> {
    if n_in == 0 || !n_in.is_power_of_two() {
        return Err(CostError::InvalidNin(n_in));
    }
    Ok(())
}

fn check_geometry(g: &Geometry, n_in: usize) -> Result<f64, CostError> {
    check_nin(n_in)?;
    let mp = g.m_prime();
    if g.slots == 0 || g.m == 0 || mp < n_in as f64 {
        return Err(CostError::InvalidGeometry(format!(
            "m'={mp} must be at least N_in={n_in}"
        )));
    }
    Ok(mp)
}

fn t(tt: &TimingTable, op: Op, level: usize) -> Result<f64, CostError> {
    tt.get(op, level)
}

pub fn expansion_cost(tt: &TimingTable, n_in: usize, form: ExpansionForm) -> Result<f64, CostError> {
    check_nin(n_in)?;
    let x = n_in as f64;
    let head = x * (t(tt, Op::MulP, 3)? + t(tt, Op::Res, 3)?);
    let ladder = x.log2() * (t(tt, Op::Res, 2)? + t(tt, Op::MulC, 2)?);
    Ok(match form {
        ExpansionForm::Evaluated => head + x * ladder,
        ExpansionForm::Collapsed => head + ladder,
    })
}

fn ladder_len(g: &Geometry, mp: f64, n_in: usize, ladder: LadderLength) -> f64 {
    match ladder {
        LadderLength::Aggregate => mp.log2() - (n_in as f64).log2(),
        LadderLength::Block => (g.m as f64).log2() - (n_in as f64).log2(),
    }
}

fn sets(mp: f64, n_in: usize) -> f64 {
    (mp / n_in as f64).ceil()
}

pub fn matching_cost(
    tt: &TimingTable,
    g: &Geometry,
    n_in: usize,
    ladder: LadderLength,
) -> Result<f64, CostError> {
    let mp = check_geometry(g, n_in)?;
    let per_set = n_in as f64 * (t(tt, Op::MulC, 2)? + t(tt, Op::Res, 2)? + t(tt, Op::Add, 1)?)
        + ladder_len(g, mp, n_in, ladder) * (t(tt, Op::Rot, 1)? + t(tt, Op::Add, 1)?);
    Ok(sets(mp, n_in) * per_set)
}

pub fn compression_cost(
    tt: &TimingTable,
    g: &Geometry,
    n_in: usize,
    ladder: LadderLength,
) -> Result<f64, CostError> {
    let mp = check_geometry(g, n_in)?;
    Ok(sets(mp, n_in)
        * ladder_len(g, mp, n_in, ladder)
        * (t(tt, Op::MulP, 1)? + t(tt, Op::Rot, 1)? + t(tt, Op::Add, 1)?))
}

pub fn total_cost(
    tt: &TimingTable,
    g: &Geometry,
    n_in: usize,
    opts: CostOptions,
) -> Result<CostBreakdown, CostError> {
    let expansion_ms = expansion_cost(tt, n_in, opts.expansion)?;
    let matching_ms = matching_cost(tt, g, n_in, opts.ladder)?;
    let compression_ms = compression_cost(tt, g, n_in, opts.ladder)?;
    Ok(CostBreakdown {
        n_in,
        m_prime: g.m_prime(),
        expansion_ms,
        matching_ms,
        compression_ms,
        total_ms: expansion_ms + matching_ms + compression_ms,
    })
}

/// Default-form total, `F(N_in)`.
pub fn total_f(tt: &TimingTable, g: &Geometry, n_in: usize) -> Result<CostBreakdown, CostError> {
    total_cost(tt, g, n_in, CostOptions::default())
}

/// Powers of two in `[2, m']`.
pub fn default_candidates(g: &Geometry) -> Vec<usize> {
    let mp = g.m_prime();
    (1..usize::BITS)
        .map(|k| 1usize << k)
        .take_while(|&x| x as f64 <= mp)
        .collect()
}

/// Candidate with the smallest `F`; exact ties go to the smaller `N_in`.
pub fn optimal_nin(tt: &TimingTable, g: &Geometry, candidates: &[usize]) -> Result<usize, CostError> {
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<(usize, f64)> = None;
    for n in sorted {
        let f = total_f(tt, g, n)?.total_ms;
        if best.map_or(true, |(_, b)| f < b) {
            best = Some((n, f));
        }
    }
    best.map(|(n, _)| n).ok_or(CostError::NoCandidates)
}

/// Continuous relaxation of `F`: real `x`, exact division instead of ceil.
pub fn continuous_f(tt: &TimingTable, m_prime: f64, x: f64) -> Result<f64, CostError> {
    let a = t(tt, Op::MulP, 3)? + t(tt, Op::Res, 3)?;
    let b = t(tt, Op::Res, 2)? + t(tt, Op::MulC, 2)?;
    let c = t(tt, Op::MulC, 2)? + t(tt, Op::Res, 2)? + t(tt, Op::Add, 1)?;
    let d = t(tt, Op::Rot, 1)? + t(tt, Op::Add, 1)?;
    let e = t(tt, Op::MulP, 1)? + t(tt, Op::Rot, 1)? + t(tt, Op::Add, 1)?;
    let gap = m_prime.log2() - x.log2();
    Ok(x * a + x * x.log2() * b + m_prime * c + (m_prime / x) * gap * (d + e))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BracketReport {
    pub m_prime: f64,
    pub x_min: f64,
    pub f_min: f64,
    pub lower: f64,
    pub upper: f64,
    pub bracket_ok: bool,
    /// The two powers of two around `x_min`.
    pub neighbours: (usize, usize),
}

/// Minimizes the continuous `F` on `[1, m']` with a log-spaced grid and
/// golden-section refinement, then tests `m'^(1/3) < x_min < m'^(1/2)`.
pub fn bracket_check(tt: &TimingTable, m_prime: f64) -> Result<BracketReport, CostError> {
    if m_prime < 4.0 {
        return Err(CostError::InvalidGeometry(format!("m'={m_prime} below 4")));
    }
    let f = |x: f64| continuous_f(tt, m_prime, x);
    let hi = m_prime.ln();
    let steps = (hi / 1e-3).ceil() as usize;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..=steps {
        let x = (hi * i as f64 / steps as f64).exp();
        let v = f(x)?;
        if v < best.1 {
            best = (i, v);
        }
    }
    let at = |i: usize| (hi * i as f64 / steps as f64).exp();
    let (mut a, mut b) = (at(best.0.saturating_sub(1)), at((best.0 + 1).min(steps)));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d)?;
        }
    }
    let x_min = (a + b) / 2.0;
    let lower = m_prime.cbrt();
    let upper = m_prime.sqrt();
    let k = x_min.log2().floor().max(0.0) as u32;
    Ok(BracketReport {
        m_prime,
        x_min,
        f_min: f(x_min)?,
        lower,
        upper,
        bracket_ok: lower < x_min && x_min < upper,
        neighbours: (1usize << k, 1usize << (k + 1)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_geometry() -> Geometry {
        Geometry::new(128, 2048, 8192)
    }

    #[test]
    fn breakdown_components() {
        let tt = TimingTable::reference();
        let b = total_f(&tt, &paper_geometry(), 4).unwrap();
        assert!((b.expansion_ms - 61.72).abs() < 1e-9);
        assert!((b.matching_ms - 281.92).abs() < 1e-9);
        assert!((b.compression_ms - 91.2).abs() < 1e-9);
        assert!((b.total_ms - 434.84).abs() < 1e-9);
        assert_eq!(b.m_prime, 32.0);
    }

    #[test]
    fn expansion_examples() {
        let tt = TimingTable::reference();
        assert!((expansion_cost(&tt, 2, ExpansionForm::Evaluated).unwrap() - 17.98).abs() < 1e-9);
        assert!((expansion_cost(&tt, 1, ExpansionForm::Evaluated).unwrap() - 2.55).abs() < 1e-9);
        assert!((expansion_cost(&tt, 4, ExpansionForm::Collapsed).unwrap() - (10.2 + 12.88)).abs() < 1e-9);
        assert!(matches!(expansion_cost(&tt, 3, ExpansionForm::Evaluated), Err(CostError::InvalidNin(3))));
    }

    #[test]
    fn boundary_ladder_vanishes() {
        let tt = TimingTable::reference();
        let g = paper_geometry();
        let m = matching_cost(&tt, &g, 32, LadderLength::Aggregate).unwrap();
        assert!((m - 208.96).abs() < 1e-9);
        assert_eq!(compression_cost(&tt, &g, 32, LadderLength::Aggregate).unwrap(), 0.0);
        assert!((compression_cost(&tt, &g, 2, LadderLength::Aggregate).unwrap() - 243.2).abs() < 1e-9);
        assert!(matches!(
            matching_cost(&tt, &g, 64, LadderLength::Aggregate),
            Err(CostError::InvalidGeometry(_))
        ));
    }

    #[test]
    fn algorithm_ladder_uses_block_size() {
        let tt = TimingTable::reference();
        // m = 128, N_in = 4: log s = 5 instead of log m' - log N_in = 3.
        let g = paper_geometry();
        let prop = matching_cost(&tt, &g, 4, LadderLength::Aggregate).unwrap();
        let alg = matching_cost(&tt, &g, 4, LadderLength::Block).unwrap();
        assert!((alg - prop - 8.0 * 2.0 * 3.04).abs() < 1e-9);
    }

    #[test]
    fn optimal_is_four_and_ties_go_low() {
        let tt = TimingTable::reference();
        let g = paper_geometry();
        assert_eq!(default_candidates(&g), vec![2, 4, 8, 16, 32]);
        assert_eq!(optimal_nin(&tt, &g, &default_candidates(&g)).unwrap(), 4);
        assert_eq!(optimal_nin(&tt, &g, &[8]).unwrap(), 8);
        assert!(matches!(optimal_nin(&tt, &g, &[]), Err(CostError::NoCandidates)));
    }

    #[test]
    fn bracket_for_reference_table() {
        let tt = TimingTable::reference();
        let r = bracket_check(&tt, 32.0).unwrap();
        assert!((r.lower - 3.1748).abs() < 1e-3 && (r.upper - 5.6569).abs() < 1e-3);
        assert!(r.bracket_ok, "{r:?}");
        assert_eq!(r.neighbours, (4, 8));
    }
}
