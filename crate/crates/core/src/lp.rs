//! Dense two-phase primal simplex.
//!
//! Supports free and nonnegative variables, <=/=/>= rows and both senses.
//! Free variables are split internally into differences of nonnegative
//! variables; rows are equilibrated to unit max-abs before solving.
//! Pricing is Dantzig with a switch to Bland's rule after a run of
//! degenerate iterations, so a given problem always pivots the same way.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarBound {
    NonNegative,
    Free,
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Relation, f64)>,
    pub var_bounds: Vec<VarBound>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub value: f64,
}

const PIVOT_TOL: f64 = 1e-10;
const EXP2_53: f64 = 9007199254740992.0;
const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

impl LpProblem {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem { sense, objective, rows: Vec::new(), var_bounds: vec![VarBound::NonNegative; n] }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        self.rows.push((coeffs, rel, rhs));
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.var_bounds.len() != n {
            return Err(Error::Dimension(format!(
                "{} var bounds for {n} variables",
                self.var_bounds.len()
            )));
        }
        for (i, (coeffs, _, rhs)) in self.rows.iter().enumerate() {
            if coeffs.len() != n {
                return Err(Error::Dimension(format!(
                    "row {i} has {} coefficients, expected {n}",
                    coeffs.len()
                )));
            }
            if !rhs.is_finite() {
                return Err(Error::Invalid(format!("row {i} rhs is not finite")));
            }
            if coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::Invalid(format!("row {i} has a non-finite coefficient")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("objective has a non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Write the problem in dense CSV form, one row per constraint.
    pub fn dump_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "objective")?;
        for c in &self.objective {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (coeffs, rel, rhs) in &self.rows {
            let rel = match rel {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            write!(w, "{rel},{rhs}")?;
            for c in coeffs {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

struct Tableau {
    /// Rows m+1 (last is the cost row), columns ncols+1 (last is rhs).
    data: Vec<f64>,
    m: usize,
    ncols: usize,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.ncols + 1) + c]
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * (self.ncols + 1) + c] = v;
    }

    fn pivot(&mut self, prow: usize, pcol: usize) {
        let w = self.ncols + 1;
        let pval = self.at(prow, pcol);
        let inv = 1.0 / pval;
        for c in 0..w {
            self.data[prow * w + c] *= inv;
        }
        self.set(prow, pcol, 1.0);
        for r in 0..=self.m {
            if r == prow {
                continue;
            }
            let factor = self.at(r, pcol);
            if factor == 0.0 {
                continue;
            }
            let (head, tail) = self.data.split_at_mut(prow.max(r) * w);
            let (src, dst) = if prow < r {
                (&head[prow * w..prow * w + w], &mut tail[..w])
            } else {
                (&tail[..w], &mut head[r * w..r * w + w])
            };
            for c in 0..w {
                dst[c] -= factor * src[c];
            }
            self.set(r, pcol, 0.0);
        }
        self.basis[prow] = pcol;
    }
}

/// Column bookkeeping for the standard-form problem.
struct StdForm {
    /// For each structural column: (original var, sign).
    col_map: Vec<(usize, f64)>,
    nstruct: usize,
    nslack: usize,
    nart: usize,
}

pub fn solve(lp: &LpProblem) -> Result<LpSolution> {
    lp.validate()?;
    // Degenerate problems can stall the pivot rules; a tiny deterministic
    // rhs perturbation breaks the ties. The final basis is re-solved against
    // the unperturbed data, so the perturbation does not leak into x.
    match solve_inner(lp, 0.0) {
        Err(Error::Numerical(_)) => solve_inner(lp, 1e-9),
        Ok(sol) if sol.status == LpStatus::Unbounded => {
            // Re-check an unbounded verdict on the perturbed problem: long
            // degenerate pivot runs can corrupt the reduced costs enough to
            // fake one, and the perturbation forces a different pivot path.
            solve_inner(lp, 1e-9)
        }
        other => other,
    }
}

fn solve_inner(lp: &LpProblem, perturb: f64) -> Result<LpSolution> {
    let n = lp.num_vars();
    let m = lp.rows.len();

    let minimize: Vec<f64> = match lp.sense {
        Sense::Min => lp.objective.clone(),
        Sense::Max => lp.objective.iter().map(|c| -c).collect(),
    };

    // Row equilibration to unit max-abs.
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = lp.rows.clone();
    for (coeffs, _, rhs) in rows.iter_mut() {
        let scale = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        if scale > 0.0 {
            let inv = 1.0 / scale;
            coeffs.iter_mut().for_each(|c| *c *= inv);
            *rhs *= inv;
        }
    }

    // Column equilibration: substitute y_j = s_j x_j so every column has
    // unit max-abs too, then bring the rows back to unit scale.
    let mut col_scale = vec![1.0f64; n];
    for j in 0..n {
        let s = rows.iter().fold(0.0f64, |a, (coeffs, _, _)| a.max(coeffs[j].abs()));
        if s > 0.0 {
            col_scale[j] = s;
        }
    }
    for (coeffs, _, _) in rows.iter_mut() {
        for j in 0..n {
            coeffs[j] /= col_scale[j];
        }
    }
    for (coeffs, _, rhs) in rows.iter_mut() {
        let scale = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        if scale > 0.0 {
            let inv = 1.0 / scale;
            coeffs.iter_mut().for_each(|c| *c *= inv);
            *rhs *= inv;
        }
    }

    // Orient rows so that as many as possible start with a basic slack:
    // `<=` with nonnegative rhs gets a slack, anything else an artificial.
    for (coeffs, rel, rhs) in rows.iter_mut() {
        let flip = match rel {
            Relation::Le => *rhs < 0.0,
            Relation::Ge => *rhs <= 0.0,
            Relation::Eq => *rhs < 0.0,
        };
        if flip {
            coeffs.iter_mut().for_each(|c| *c = -*c);
            *rhs = -*rhs;
            *rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    // Structural columns: free variables split into plus/minus parts.
    let mut col_map = Vec::new();
    for (j, b) in lp.var_bounds.iter().enumerate() {
        col_map.push((j, 1.0));
        if *b == VarBound::Free {
            col_map.push((j, -1.0));
        }
    }
    let nstruct = col_map.len();
    let nslack = m; // one slack or surplus per row
    let mut art_rows: Vec<usize> = Vec::new();
    for (i, (_, rel, rhs)) in rows.iter().enumerate() {
        let needs_art = match rel {
            Relation::Le => *rhs < 0.0, // cannot happen after orientation
            Relation::Ge => true,
            Relation::Eq => true,
        };
        if needs_art {
            art_rows.push(i);
        }
    }
    let nart = art_rows.len();
    let std = StdForm { col_map, nstruct, nslack, nart };
    let ncols = std.nstruct + std.nslack + std.nart;

    let mut tab = Tableau {
        data: vec![0.0; (m + 1) * (ncols + 1)],
        m,
        ncols,
        basis: vec![usize::MAX; m],
    };

    let mut art_index = 0usize;
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        for (c, &(j, sign)) in std.col_map.iter().enumerate() {
            tab.set(i, c, sign * coeffs[j]);
        }
        let slack_col = std.nstruct + i;
        match rel {
            Relation::Le => {
                tab.set(i, slack_col, 1.0);
                tab.basis[i] = slack_col;
            }
            Relation::Ge => {
                tab.set(i, slack_col, -1.0);
            }
            Relation::Eq => {}
        }
        if tab.basis[i] == usize::MAX {
            let art_col = std.nstruct + std.nslack + art_index;
            art_index += 1;
            tab.set(i, art_col, 1.0);
            tab.basis[i] = art_col;
        }
        let xi = 1.0 + ((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64 / EXP2_53;
        tab.set(i, ncols, *rhs + perturb * xi);
    }
    debug_assert_eq!(art_index, std.nart);

    let art_start = std.nstruct + std.nslack;

    // Phase 1: minimize the sum of artificials.
    if std.nart > 0 {
        for c in 0..=ncols {
            let mut s = 0.0;
            for i in 0..m {
                if tab.basis[i] >= art_start {
                    s += tab.at(i, c);
                }
            }
            tab.set(m, c, -s);
        }
        for i in 0..m {
            if tab.basis[i] >= art_start {
                tab.set(m, tab.basis[i], 0.0);
            }
        }
        run_simplex(&mut tab, Some(art_start))?;
        let phase1 = -tab.at(m, ncols);
        if phase1 > 1e-7 {
            return Ok(LpSolution { status: LpStatus::Infeasible, x: vec![0.0; n], value: 0.0 });
        }
        // Drive remaining artificials out of the basis where possible.
        for i in 0..m {
            if tab.basis[i] >= art_start {
                let mut pcol = None;
                for c in 0..art_start {
                    if tab.at(i, c).abs() > PIVOT_TOL {
                        pcol = Some(c);
                        break;
                    }
                }
                if let Some(c) = pcol {
                    tab.pivot(i, c);
                }
                // A row whose artificial cannot leave is redundant; the
                // artificial stays basic at level zero and is never priced.
            }
        }
    }

    // Phase 2 cost row: reduced costs of the objective in column-scaled units.
    let cost_of = |col: usize| -> f64 {
        if col < std.nstruct {
            let (j, sign) = std.col_map[col];
            sign * minimize[j] / col_scale[j]
        } else {
            0.0
        }
    };
    for c in 0..=ncols {
        tab.set(m, c, 0.0);
    }
    for c in 0..ncols {
        tab.set(m, c, cost_of(c));
    }
    for i in 0..m {
        let b = tab.basis[i];
        let cb = cost_of(b);
        if cb != 0.0 {
            for c in 0..=ncols {
                let v = tab.at(m, c) - cb * tab.at(i, c);
                tab.set(m, c, v);
            }
        }
    }
    for i in 0..m {
        tab.set(m, tab.basis[i], 0.0);
    }

    let status = run_simplex(&mut tab, Some(art_start))?;
    if status == LpStatus::Unbounded {
        return Ok(LpSolution { status, x: vec![0.0; n], value: 0.0 });
    }

    // Recover basic values by re-solving the basis system against the
    // input rows, stripping the error accumulated across tableau pivots.
    let mut bmat = vec![0.0; m * m];
    for (k, &b) in tab.basis.iter().enumerate() {
        for i in 0..m {
            let v = if b < std.nstruct {
                let (j, sign) = std.col_map[b];
                sign * rows[i].0[j]
            } else if b < art_start {
                let r = b - std.nstruct;
                if i != r {
                    0.0
                } else {
                    match rows[r].1 {
                        Relation::Le => 1.0,
                        Relation::Ge => -1.0,
                        Relation::Eq => 0.0,
                    }
                }
            } else if i == art_rows[b - art_start] {
                1.0
            } else {
                0.0
            };
            bmat[i * m + k] = v;
        }
    }
    let rhs: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let max_violation = |x: &[f64]| -> f64 {
        let mut worst = 0.0f64;
        for (coeffs, rel, rhs) in rows.iter() {
            let lhs: f64 = coeffs.iter().zip(x).map(|(c, v)| c * v).sum();
            let v = match rel {
                Relation::Le => lhs - rhs,
                Relation::Ge => rhs - lhs,
                Relation::Eq => (lhs - rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    };
    let mut x = vec![0.0; n];
    for i in 0..m {
        let b = tab.basis[i];
        if b < std.nstruct {
            let (j, sign) = std.col_map[b];
            x[j] += sign * tab.at(i, ncols);
        }
    }
    if let Some(vals) = gauss_solve(&mut bmat, rhs, m) {
        let mut refined = vec![0.0; n];
        for (k, &b) in tab.basis.iter().enumerate() {
            if b < std.nstruct {
                let (j, sign) = std.col_map[b];
                refined[j] += sign * vals[k];
            }
        }
        if refined.iter().all(|v| v.is_finite()) && max_violation(&refined) <= max_violation(&x) {
            x = refined;
        }
    }
    // Feasibility audit on the equilibrated rows.
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        let lhs: f64 = coeffs.iter().zip(&x).map(|(c, v)| c * v).sum();
        let ok = match rel {
            Relation::Le => lhs <= rhs + FEAS_TOL,
            Relation::Ge => lhs >= rhs - FEAS_TOL,
            Relation::Eq => (lhs - rhs).abs() <= FEAS_TOL,
        };
        if !ok {
            return Err(Error::Numerical(format!(
                "solution violates row {i} by {:.3e}",
                (lhs - rhs).abs()
            )));
        }
    }

    // Undo the column scaling.
    for (j, v) in x.iter_mut().enumerate() {
        *v /= col_scale[j];
    }
    let value_min: f64 = minimize.iter().zip(&x).map(|(c, v)| c * v).sum();
    let value = match lp.sense {
        Sense::Min => value_min,
        Sense::Max => -value_min,
    };

    Ok(LpSolution { status: LpStatus::Optimal, x, value })
}

/// Gaussian elimination with partial pivoting; `a` is row-major m x m.
fn gauss_solve(a: &mut [f64], mut b: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    for col in 0..m {
        let mut pivot = col;
        for r in col + 1..m {
            if a[r * m + col].abs() > a[pivot * m + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * m + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for c in 0..m {
                a.swap(col * m + c, pivot * m + c);
            }
            b.swap(col, pivot);
        }
        let inv = 1.0 / a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] * inv;
            if f == 0.0 {
                continue;
            }
            for c in col..m {
                a[r * m + c] -= f * a[col * m + c];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..m).rev() {
        let mut v = b[col];
        for c in col + 1..m {
            v -= a[col * m + c] * b[c];
        }
        b[col] = v / a[col * m + col];
    }
    Some(b)
}

/// Runs simplex iterations on the tableau until optimal or unbounded.
/// Columns at or beyond `forbidden_from` are never chosen to enter.
fn run_simplex(tab: &mut Tableau, forbidden_from: Option<usize>) -> Result<LpStatus> {
    let m = tab.m;
    let ncols = tab.ncols;
    let limit = forbidden_from.unwrap_or(ncols);
    let max_iter = 200 * (m + ncols) + 2000;
    let degenerate_switch = 5 * (m + ncols);
    let mut degenerate_run = 0usize;
    let mut bland = false;

    for _ in 0..max_iter {
        // entering column
        let mut entering = None;
        if bland {
            for c in 0..limit {
                if tab.at(m, c) < -OPT_TOL {
                    entering = Some(c);
                    break;
                }
            }
        } else {
            let mut best = -OPT_TOL;
            for c in 0..limit {
                let r = tab.at(m, c);
                if r < best {
                    best = r;
                    entering = Some(c);
                }
            }
        }
        let Some(e) = entering else {
            return Ok(LpStatus::Optimal);
        };

        // Ratio test. Ties go to the largest pivot element for stability,
        // except under Bland's rule where the smallest basis index must win.
        let mut prow = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let a = tab.at(i, e);
            if a > PIVOT_TOL {
                let ratio = tab.at(i, ncols) / a;
                let better = match prow {
                    None => true,
                    Some(p) => {
                        ratio < best_ratio - 1e-12
                            || (ratio < best_ratio + 1e-12
                                && if bland {
                                    tab.basis[i] < tab.basis[p]
                                } else {
                                    a > tab.at(p, e)
                                })
                    }
                };
                if better {
                    best_ratio = ratio.max(0.0);
                    prow = Some(i);
                }
            }
        }
        let Some(p) = prow else {
            return Ok(LpStatus::Unbounded);
        };

        if best_ratio <= 1e-12 {
            degenerate_run += 1;
            if degenerate_run > degenerate_switch {
                bland = true; // stays on: guarantees termination
            }
        } else {
            degenerate_run = 0;
        }
        tab.pivot(p, e);
    }
    Err(Error::Numerical("simplex iteration limit exceeded".into()))
}
