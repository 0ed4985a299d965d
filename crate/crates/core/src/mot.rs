//! Marginal discretization and two-marginal martingale-transport bounds.
//!
//! One-dimensional marginals are reduced to equal-weight atom lists whose
//! atoms are cell averages of the quantile function; the discretization
//! preserves the mean and converges in Wasserstein-1. Price bounds are
//! then linear programs over couplings with fixed marginals and the
//! martingale (conditional mean) rows, optionally with one extra row
//! pinning the variance of returns.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::lp::{solve, LpProblem, LpStatus, Relation, Sense};

const ATOM_MERGE_TOL: f64 = 1e-12;
const ORDER_TOL: f64 = 1e-9;

/// One-dimensional marginal laws with support on the nonnegative axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Distribution {
    /// Law of exp(N(mu, sigma^2)).
    LogNormal { mu: f64, sigma: f64 },
    Uniform { a: f64, b: f64 },
    DiscreteUniform { points: Vec<f64> },
    Triangular { lower: f64, mode: f64, upper: f64 },
    Empirical { atoms: Vec<f64>, weights: Vec<f64> },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            Distribution::LogNormal { mu, sigma } => {
                if !mu.is_finite() || !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::Invalid("lognormal requires finite mu and sigma > 0".into()));
                }
            }
            Distribution::Uniform { a, b } => {
                if !(*a >= 0.0 && a < b && b.is_finite()) {
                    return Err(Error::Invalid("uniform requires 0 <= a < b".into()));
                }
            }
            Distribution::DiscreteUniform { points } => {
                if points.is_empty() || points.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::Invalid(
                        "discrete uniform requires nonempty nonnegative points".into(),
                    ));
                }
            }
            Distribution::Triangular { lower, mode, upper } => {
                if !(*lower >= 0.0 && lower <= mode && mode <= upper && lower < upper) {
                    return Err(Error::Invalid(
                        "triangular requires 0 <= lower <= mode <= upper, lower < upper".into(),
                    ));
                }
            }
            Distribution::Empirical { atoms, weights } => {
                if atoms.len() != weights.len() || atoms.is_empty() {
                    return Err(Error::Dimension("empirical atoms/weights mismatch".into()));
                }
                if atoms.iter().any(|a| !a.is_finite() || *a < 0.0) {
                    return Err(Error::Invalid("empirical atoms must be nonnegative".into()));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::Invalid("empirical weights must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            Distribution::Uniform { a, b } => 0.5 * (a + b),
            Distribution::DiscreteUniform { points } => {
                points.iter().sum::<f64>() / points.len() as f64
            }
            Distribution::Triangular { lower, mode, upper } => (lower + mode + upper) / 3.0,
            Distribution::Empirical { atoms, weights } => {
                let total: f64 = weights.iter().sum();
                atoms.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / total
            }
        }
    }
}

/// Left-continuous generalized inverse of the cdf, for u in (0, 1).
pub fn quantile(dist: &Distribution, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Invalid(format!("quantile level {u} outside (0,1)")));
    }
    dist.validate()?;
    Ok(match dist {
        Distribution::LogNormal { mu, sigma } => {
            let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(u);
            (mu + sigma * z).exp()
        }
        Distribution::Uniform { a, b } => a + (b - a) * u,
        Distribution::DiscreteUniform { points } => {
            let mut sorted = points.clone();
            sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let n = sorted.len() as f64;
            let idx = (u * n).ceil() as usize;
            sorted[idx.clamp(1, sorted.len()) - 1]
        }
        Distribution::Triangular { lower, mode, upper } => {
            let c = (mode - lower) / (upper - lower);
            if u <= c {
                lower + (u * (upper - lower) * (mode - lower)).sqrt()
            } else {
                upper - ((1.0 - u) * (upper - lower) * (upper - mode)).sqrt()
            }
        }
        Distribution::Empirical { atoms, weights } => {
            let (atoms, weights) = sorted_normalized(atoms, weights);
            let mut cum = 0.0;
            let mut result = *atoms.last().unwrap();
            for (a, w) in atoms.iter().zip(&weights) {
                cum += w;
                if cum >= u - 1e-15 {
                    result = *a;
                    break;
                }
            }
            result
        }
    })
}

fn sorted_normalized(atoms: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = atoms.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = weights.iter().sum();
    (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1 / total).collect())
}

/// Sorted atoms with positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Sorts, merges atoms closer than 1e-12 and renormalizes the weights.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() || atoms.is_empty() {
            return Err(Error::Dimension("atoms and weights must be nonempty, equal length".into()));
        }
        if atoms.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Invalid("atoms must be finite and nonnegative".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("weights sum to {total}, expected 1")));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.retain(|p| p.1 > 0.0);
        if pairs.is_empty() {
            return Err(Error::Invalid("measure has no positive-weight atoms".into()));
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut atoms = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            match atoms.last() {
                Some(&last) if a - last <= ATOM_MERGE_TOL => {
                    *weights.last_mut().unwrap() += w;
                }
                _ => {
                    atoms.push(a);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(DiscreteMeasure { atoms, weights })
    }

    pub fn dirac(atom: f64) -> Self {
        DiscreteMeasure { atoms: vec![atom], weights: vec![1.0] }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Expected call payoff at strike `l`.
    pub fn call_value(&self, l: f64) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| (a - l).max(0.0) * w).sum()
    }
}

/// N-atom discretization with atoms equal to quantile cell averages.
pub fn u_quantize(dist: &Distribution, n: usize) -> Result<DiscreteMeasure> {
    let atoms = u_quantize_cells(dist, n)?;
    DiscreteMeasure::new(atoms, vec![1.0 / n as f64; n])
}

/// Raw per-cell averages before any atom merging; always length n, so
/// suitable as a fixed-width feature block.
pub fn u_quantize_cells(dist: &Distribution, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Invalid("quantization needs at least one atom".into()));
    }
    dist.validate()?;
    let atoms: Vec<f64> = match dist {
        Distribution::Uniform { a, b } => (1..=n)
            .map(|i| a + (b - a) * (2.0 * i as f64 - 1.0) / (2.0 * n as f64))
            .collect(),
        Distribution::LogNormal { mu, sigma } => lognormal_cells(*mu, *sigma, n),
        Distribution::Triangular { lower, mode, upper } => {
            triangular_cells(*lower, *mode, *upper, n)
        }
        Distribution::DiscreteUniform { points } => {
            let weights = vec![1.0 / points.len() as f64; points.len()];
            step_cells(points, &weights, n)
        }
        Distribution::Empirical { atoms, weights } => step_cells(atoms, weights, n),
    };
    Ok(atoms)
}

/// Exact cell averages of the lognormal quantile via the identity
/// integral exp(mu + sigma z(u)) du = exp(mu + sigma^2/2) Phi(z(u) - sigma).
fn lognormal_cells(mu: f64, sigma: f64, n: usize) -> Vec<f64> {
    let std = Normal::new(0.0, 1.0).unwrap();
    let scale = (mu + 0.5 * sigma * sigma).exp();
    let shifted = |p: f64| -> f64 {
        if p <= 0.0 {
            0.0
        } else if p >= 1.0 {
            1.0
        } else {
            std.cdf(std.inverse_cdf(p) - sigma)
        }
    };
    (1..=n)
        .map(|i| {
            let p0 = (i - 1) as f64 / n as f64;
            let p1 = i as f64 / n as f64;
            n as f64 * scale * (shifted(p1) - shifted(p0))
        })
        .collect()
}

fn triangular_cells(lower: f64, mode: f64, upper: f64, n: usize) -> Vec<f64> {
    let c = (mode - lower) / (upper - lower);
    // antiderivative of the quantile on [0, c]
    let left = |p: f64| -> f64 {
        lower * p + ((upper - lower) * (mode - lower)).sqrt() * (2.0 / 3.0) * p.powf(1.5)
    };
    // antiderivative of the quantile on [c, 1]
    let right = |p: f64| -> f64 {
        upper * p + ((upper - lower) * (upper - mode)).sqrt() * (2.0 / 3.0) * (1.0 - p).powf(1.5)
    };
    let integral = |p0: f64, p1: f64| -> f64 {
        let lo = p0.min(c);
        let hi = p1.min(c);
        let mut acc = 0.0;
        if hi > lo {
            acc += left(hi) - left(lo);
        }
        let lo = p0.max(c);
        let hi = p1.max(c);
        if hi > lo {
            acc += right(hi) - right(lo);
        }
        acc
    };
    (1..=n)
        .map(|i| {
            let p0 = (i - 1) as f64 / n as f64;
            let p1 = i as f64 / n as f64;
            n as f64 * integral(p0, p1)
        })
        .collect()
}

/// Cell averages of a piecewise-constant (step) quantile.
fn step_cells(atoms: &[f64], weights: &[f64], n: usize) -> Vec<f64> {
    let (atoms, weights) = sorted_normalized(atoms, weights);
    let mut cells = Vec::with_capacity(n);
    let mut j = 0usize;
    let mut cum = weights[0];
    for i in 1..=n {
        let p0 = (i - 1) as f64 / n as f64;
        let p1 = i as f64 / n as f64;
        let mut pos = p0;
        let mut acc = 0.0;
        while pos < p1 - 1e-15 {
            while j + 1 < atoms.len() && cum <= pos + 1e-15 {
                j += 1;
                cum += weights[j];
            }
            let upper = if j + 1 < atoms.len() { cum.min(p1) } else { p1 };
            acc += atoms[j] * (upper - pos);
            pos = upper;
        }
        cells.push(n as f64 * acc);
    }
    cells
}

/// Exact Wasserstein-1 distance between discrete measures on the line,
/// computed as the L1 distance of their quantile functions.
pub fn wasserstein1(m1: &DiscreteMeasure, m2: &DiscreteMeasure) -> f64 {
    let mut dist = 0.0;
    let mut i = 0usize;
    let mut j = 0usize;
    let mut pos = 0.0f64;
    let mut cum1 = m1.weights[0];
    let mut cum2 = m2.weights[0];
    while pos < 1.0 - 1e-15 {
        let next = cum1.min(cum2).min(1.0);
        dist += (m1.atoms[i] - m2.atoms[j]).abs() * (next - pos);
        pos = next;
        if cum1 <= next + 1e-15 && i + 1 < m1.len() {
            i += 1;
            cum1 += m1.weights[i];
        }
        if cum2 <= next + 1e-15 && j + 1 < m2.len() {
            j += 1;
            cum2 += m2.weights[j];
        }
        if i == m1.len() - 1 && j == m2.len() - 1 {
            dist += (m1.atoms[i] - m2.atoms[j]).abs() * (1.0 - pos).max(0.0);
            break;
        }
    }
    dist
}

/// Convex-order test: equal means and dominated call values at every atom
/// of either measure.
pub fn check_convex_order(m1: &DiscreteMeasure, m2: &DiscreteMeasure) -> bool {
    if (m1.mean() - m2.mean()).abs() > ORDER_TOL {
        return false;
    }
    m1.atoms
        .iter()
        .chain(m2.atoms.iter())
        .all(|&l| m1.call_value(l) <= m2.call_value(l) + ORDER_TOL)
}

/// Payoffs of the two-period transport problem; all are continuous with
/// at most linear growth in (x, y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "payoff")]
pub enum MotPayoff {
    AbsDiff,
    CallT2 { strike: f64 },
    PutT2 { strike: f64 },
    SpreadCall { strike: f64 },
}

impl MotPayoff {
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        match self {
            MotPayoff::AbsDiff => (y - x).abs(),
            MotPayoff::CallT2 { strike } => (y - strike).max(0.0),
            MotPayoff::PutT2 { strike } => (strike - y).max(0.0),
            MotPayoff::SpreadCall { strike } => (y - x - strike).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotConstraints {
    /// Required variance of the return S2/S1 under the coupling.
    pub variance: Option<f64>,
}

/// The transport LP over coupling weights; public so callers can dump it
/// for diagnostics.
pub fn coupling_lp(
    m1: &DiscreteMeasure,
    m2: &DiscreteMeasure,
    objective: Vec<f64>,
    constraints: &MotConstraints,
    sense: Sense,
) -> Result<LpProblem> {
    let n1 = m1.len();
    let n2 = m2.len();
    let nv = n1 * n2;
    let mut lp = LpProblem::new(sense, objective);
    // Both marginal blocks are kept even though one row is redundant.
    for l in 0..n1 {
        let mut row = vec![0.0; nv];
        for m in 0..n2 {
            row[l * n2 + m] = 1.0;
        }
        lp.add_row(row, Relation::Eq, m1.weights[l]);
    }
    for m in 0..n2 {
        let mut row = vec![0.0; nv];
        for l in 0..n1 {
            row[l * n2 + m] = 1.0;
        }
        lp.add_row(row, Relation::Eq, m2.weights[m]);
    }
    for l in 0..n1 {
        let mut row = vec![0.0; nv];
        for m in 0..n2 {
            row[l * n2 + m] = m2.atoms[m] - m1.atoms[l];
        }
        lp.add_row(row, Relation::Eq, 0.0);
    }
    if let Some(var) = constraints.variance {
        if var < 0.0 {
            return Err(Error::Invalid("variance level must be nonnegative".into()));
        }
        if m1.atoms.iter().any(|&x| x <= 0.0) {
            return Err(Error::Invalid(
                "variance constraint requires strictly positive first-marginal atoms".into(),
            ));
        }
        // The martingale rows force E[S2/S1] = 1, so pinning the second
        // moment of the return pins its variance.
        let mut row = vec![0.0; nv];
        for l in 0..n1 {
            for m in 0..n2 {
                let r = m2.atoms[m] / m1.atoms[l];
                row[l * n2 + m] = r * r;
            }
        }
        lp.add_row(row, Relation::Eq, var + 1.0);
    }
    Ok(lp)
}

/// Lower and upper expected payoff over martingale couplings of the two
/// marginals, optionally with the return-variance row.
pub fn mot_bounds(
    m1: &DiscreteMeasure,
    m2: &DiscreteMeasure,
    payoff: &MotPayoff,
    constraints: &MotConstraints,
) -> Result<(f64, f64)> {
    let objective: Vec<f64> = m1
        .atoms
        .iter()
        .flat_map(|&x| m2.atoms.iter().map(move |&y| payoff.evaluate(x, y)))
        .collect();
    let lower = solve(&coupling_lp(m1, m2, objective.clone(), constraints, Sense::Min)?)?;
    let upper = solve(&coupling_lp(m1, m2, objective, constraints, Sense::Max)?)?;
    match (lower.status, upper.status) {
        (LpStatus::Optimal, LpStatus::Optimal) => Ok((lower.value, upper.value)),
        _ => {
            let why = if !check_convex_order(m1, m2) {
                "marginals are not in convex order"
            } else if constraints.variance.is_some() {
                "variance level is unattainable"
            } else {
                "transport problem is infeasible"
            };
            Err(Error::Invalid(format!("no feasible martingale coupling: {why}")))
        }
    }
}

/// Attainable range of the return variance over the transport set,
/// found by minimizing and maximizing the second moment of S2/S1.
pub fn variance_range(m1: &DiscreteMeasure, m2: &DiscreteMeasure) -> Result<(f64, f64)> {
    if m1.atoms.iter().any(|&x| x <= 0.0) {
        return Err(Error::Invalid(
            "variance range requires strictly positive first-marginal atoms".into(),
        ));
    }
    let objective: Vec<f64> = m1
        .atoms
        .iter()
        .flat_map(|&x| m2.atoms.iter().map(move |&y| (y / x) * (y / x)))
        .collect();
    let none = MotConstraints::default();
    let lo = solve(&coupling_lp(m1, m2, objective.clone(), &none, Sense::Min)?)?;
    let hi = solve(&coupling_lp(m1, m2, objective, &none, Sense::Max)?)?;
    if lo.status != LpStatus::Optimal || hi.status != LpStatus::Optimal {
        return Err(Error::Invalid("no feasible martingale coupling".into()));
    }
    Ok(((lo.value - 1.0).max(0.0), (hi.value - 1.0).max(0.0)))
}
