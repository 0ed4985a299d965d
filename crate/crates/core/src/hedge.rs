//! Super- and sub-hedging bounds over a grid discretization of the price box.
//!
//! The upper bound is the cheapest semi-static strategy dominating the
//! payoff at every grid point subject to the position budget. The lower
//! bound is obtained by reflection: sub-hedging a payoff is super-hedging
//! its negation, with the cost of short legs valued at the bid. The grid
//! constraints are activated lazily; a candidate solution is checked
//! against every grid point and violated points are added until the full
//! grid is satisfied, which yields the same optimum as the one-shot LP.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve, LpProblem, LpStatus, Relation, Sense, VarBound};
use crate::model::{
    evaluate_payoff, validate_snapshot, HedgeStrategy, MarketSnapshot, OptionKind, PayoffSpec,
    PricerConfig,
};

const DEDUP_TOL: f64 = 1e-12;
const VIOLATION_TOL: f64 = 1e-9;
const MAX_CUT_ROUNDS: usize = 500;
const MAX_POINTS_PER_ROUND: usize = 128;

/// Per-axis breakpoints spanning [0, B] with all payoff and strike kinks.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
}

impl Grid {
    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn num_points(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn point(&self, index: &[usize]) -> Vec<f64> {
        index.iter().zip(&self.axes).map(|(&i, axis)| axis[i]).collect()
    }

    /// Iterator over the full product set, last axis fastest.
    pub fn iter_points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let sizes: Vec<usize> = self.axes.iter().map(|a| a.len()).collect();
        let total = self.num_points();
        (0..total).map(move |mut flat| {
            let mut idx = vec![0usize; sizes.len()];
            for k in (0..sizes.len()).rev() {
                idx[k] = flat % sizes[k];
                flat /= sizes[k];
            }
            self.point(&idx)
        })
    }
}

/// Uniform points joined with every traded strike on the axis' asset and
/// the payoff kink projection, deduplicated and sorted.
pub fn build_grid(
    snapshot: &MarketSnapshot,
    spec: &PayoffSpec,
    config: &PricerConfig,
) -> Result<Grid> {
    config.validate(snapshot)?;
    spec.validate(snapshot.num_assets())?;
    let g = config.grid_per_axis;
    let cap = config.cap;
    let mut axes = Vec::with_capacity(snapshot.num_assets());
    for k in 0..snapshot.num_assets() {
        let mut axis: Vec<f64> = (0..g).map(|j| cap * j as f64 / (g - 1) as f64).collect();
        for q in &snapshot.chains[k] {
            axis.push(q.strike);
        }
        match spec {
            PayoffSpec::Call { asset_index, strike } => {
                if *asset_index == k && *strike >= 0.0 && *strike <= cap {
                    axis.push(*strike);
                }
            }
            PayoffSpec::BasketCall { weights, strike } => {
                if weights[k] > 0.0 {
                    let kink = strike / weights[k];
                    if kink >= 0.0 && kink <= cap {
                        axis.push(kink);
                    }
                }
            }
        }
        axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        axis.dedup_by(|a, b| (*a - *b).abs() <= DEDUP_TOL);
        axes.push(axis);
    }
    Ok(Grid { axes })
}

/// Profit of a semi-static strategy at terminal prices `s`.
pub fn evaluate_strategy(
    strategy: &HedgeStrategy,
    snapshot: &MarketSnapshot,
    s: &[f64],
    kappa: f64,
) -> Result<f64> {
    strategy.check_shapes(snapshot)?;
    if s.len() != snapshot.num_assets() {
        return Err(Error::Dimension(format!(
            "price vector has {} entries for {} assets",
            s.len(),
            snapshot.num_assets()
        )));
    }
    let mut value = strategy.cash;
    for (k, &sk) in s.iter().enumerate() {
        let calls = snapshot.sorted_quotes(k, OptionKind::Call);
        for (j, q) in calls.iter().enumerate() {
            value += (strategy.calls_long[k][j] - strategy.calls_short[k][j])
                * (sk - q.strike).max(0.0);
        }
        let puts = snapshot.sorted_quotes(k, OptionKind::Put);
        for (j, q) in puts.iter().enumerate() {
            value += (strategy.puts_long[k][j] - strategy.puts_short[k][j])
                * (q.strike - sk).max(0.0);
        }
        let delta = strategy.delta0[k];
        value += delta * (sk - snapshot.spots[k]) - kappa * snapshot.spots[k] * delta.abs();
    }
    Ok(value)
}

/// Setup cost: longs pay the ask, shorts receive the bid; the forward
/// position is self-financing and costs nothing upfront.
pub fn strategy_cost(strategy: &HedgeStrategy, snapshot: &MarketSnapshot) -> Result<f64> {
    strategy.check_shapes(snapshot)?;
    let mut cost = strategy.cash;
    for k in 0..snapshot.num_assets() {
        let calls = snapshot.sorted_quotes(k, OptionKind::Call);
        for (j, q) in calls.iter().enumerate() {
            cost += strategy.calls_long[k][j] * q.ask - strategy.calls_short[k][j] * q.bid;
        }
        let puts = snapshot.sorted_quotes(k, OptionKind::Put);
        for (j, q) in puts.iter().enumerate() {
            cost += strategy.puts_long[k][j] * q.ask - strategy.puts_short[k][j] * q.bid;
        }
    }
    Ok(cost)
}

/// Cash received when taking the opposite side of every leg: longs are
/// sold at the bid, shorts are covered at the ask. This is the price a
/// sub-hedging strategy certifies.
pub fn strategy_revenue(strategy: &HedgeStrategy, snapshot: &MarketSnapshot) -> Result<f64> {
    strategy.check_shapes(snapshot)?;
    let mut value = strategy.cash;
    for k in 0..snapshot.num_assets() {
        let calls = snapshot.sorted_quotes(k, OptionKind::Call);
        for (j, q) in calls.iter().enumerate() {
            value += strategy.calls_long[k][j] * q.bid - strategy.calls_short[k][j] * q.ask;
        }
        let puts = snapshot.sorted_quotes(k, OptionKind::Put);
        for (j, q) in puts.iter().enumerate() {
            value += strategy.puts_long[k][j] * q.bid - strategy.puts_short[k][j] * q.ask;
        }
    }
    Ok(value)
}

/// Gross position: option legs counted gross plus absolute forwards.
pub fn position_size(strategy: &HedgeStrategy) -> f64 {
    let options: f64 = strategy
        .calls_long
        .iter()
        .chain(&strategy.calls_short)
        .chain(&strategy.puts_long)
        .chain(&strategy.puts_short)
        .flat_map(|v| v.iter())
        .sum();
    options + strategy.delta0.iter().map(|d| d.abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SideStatus {
    Optimal,
    ArbitrageDetected,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct BoundResult {
    pub lower: f64,
    pub upper: f64,
    pub lower_strategy: HedgeStrategy,
    pub upper_strategy: HedgeStrategy,
    pub lower_status: SideStatus,
    pub upper_status: SideStatus,
}

/// Basket form shared by both payoff variants: sign * max(w.s - L, 0).
struct SeparablePayoff {
    weights: Vec<f64>,
    strike: f64,
    negate: bool,
}

impl SeparablePayoff {
    fn from_spec(spec: &PayoffSpec, d: usize, negate: bool) -> Self {
        match spec {
            PayoffSpec::Call { asset_index, strike } => {
                let mut weights = vec![0.0; d];
                weights[*asset_index] = 1.0;
                SeparablePayoff { weights, strike: *strike, negate }
            }
            PayoffSpec::BasketCall { weights, strike } => {
                SeparablePayoff { weights: weights.clone(), strike: *strike, negate }
            }
        }
    }

    fn eval(&self, s: &[f64]) -> f64 {
        let basket: f64 = self.weights.iter().zip(s).map(|(w, x)| w * x).sum();
        let v = (basket - self.strike).max(0.0);
        if self.negate {
            -v
        } else {
            v
        }
    }
}

/// Column layout of the hedging LP.
struct VarLayout {
    d: usize,
    call_counts: Vec<usize>,
    put_counts: Vec<usize>,
    asset_offsets: Vec<usize>,
    delta_offset: usize,
    total: usize,
}

impl VarLayout {
    fn new(snapshot: &MarketSnapshot) -> Self {
        let d = snapshot.num_assets();
        let call_counts: Vec<usize> =
            (0..d).map(|k| snapshot.sorted_quotes(k, OptionKind::Call).len()).collect();
        let put_counts: Vec<usize> =
            (0..d).map(|k| snapshot.sorted_quotes(k, OptionKind::Put).len()).collect();
        let mut asset_offsets = Vec::with_capacity(d);
        let mut off = 1; // column 0 is the cash amount
        for k in 0..d {
            asset_offsets.push(off);
            off += 2 * call_counts[k] + 2 * put_counts[k];
        }
        VarLayout { d, call_counts, put_counts, asset_offsets, delta_offset: off, total: off + 2 * d }
    }

    fn call_long(&self, k: usize, j: usize) -> usize {
        self.asset_offsets[k] + j
    }
    fn call_short(&self, k: usize, j: usize) -> usize {
        self.asset_offsets[k] + self.call_counts[k] + j
    }
    fn put_long(&self, k: usize, j: usize) -> usize {
        self.asset_offsets[k] + 2 * self.call_counts[k] + j
    }
    fn put_short(&self, k: usize, j: usize) -> usize {
        self.asset_offsets[k] + 2 * self.call_counts[k] + self.put_counts[k] + j
    }
    fn delta_plus(&self, k: usize) -> usize {
        self.delta_offset + k
    }
    fn delta_minus(&self, k: usize) -> usize {
        self.delta_offset + self.d + k
    }
}

struct SuperHedgeBuilder<'a> {
    snapshot: &'a MarketSnapshot,
    layout: VarLayout,
    grid: &'a Grid,
    payoff: SeparablePayoff,
    kappa: f64,
    budget: f64,
    call_quotes: Vec<Vec<crate::model::OptionQuote>>,
    put_quotes: Vec<Vec<crate::model::OptionQuote>>,
}

impl<'a> SuperHedgeBuilder<'a> {
    fn new(
        snapshot: &'a MarketSnapshot,
        grid: &'a Grid,
        payoff: SeparablePayoff,
        config: &PricerConfig,
    ) -> Self {
        let d = snapshot.num_assets();
        SuperHedgeBuilder {
            snapshot,
            layout: VarLayout::new(snapshot),
            grid,
            payoff,
            kappa: config.kappa,
            budget: config.budget,
            call_quotes: (0..d).map(|k| snapshot.sorted_quotes(k, OptionKind::Call)).collect(),
            put_quotes: (0..d).map(|k| snapshot.sorted_quotes(k, OptionKind::Put)).collect(),
        }
    }

    fn objective(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.layout.total];
        c[0] = 1.0;
        for k in 0..self.layout.d {
            for (j, q) in self.call_quotes[k].iter().enumerate() {
                c[self.layout.call_long(k, j)] = q.ask;
                c[self.layout.call_short(k, j)] = -q.bid;
            }
            for (j, q) in self.put_quotes[k].iter().enumerate() {
                c[self.layout.put_long(k, j)] = q.ask;
                c[self.layout.put_short(k, j)] = -q.bid;
            }
        }
        c
    }

    /// Domination row at one grid point: profit(s) >= payoff(s).
    fn point_row(&self, index: &[usize]) -> (Vec<f64>, f64) {
        let s = self.grid.point(index);
        let mut row = vec![0.0; self.layout.total];
        row[0] = 1.0;
        for k in 0..self.layout.d {
            for (j, q) in self.call_quotes[k].iter().enumerate() {
                let v = (s[k] - q.strike).max(0.0);
                row[self.layout.call_long(k, j)] = v;
                row[self.layout.call_short(k, j)] = -v;
            }
            for (j, q) in self.put_quotes[k].iter().enumerate() {
                let v = (q.strike - s[k]).max(0.0);
                row[self.layout.put_long(k, j)] = v;
                row[self.layout.put_short(k, j)] = -v;
            }
            let fwd = s[k] - self.snapshot.spots[k];
            let fee = self.kappa * self.snapshot.spots[k];
            row[self.layout.delta_plus(k)] = fwd - fee;
            row[self.layout.delta_minus(k)] = -fwd - fee;
        }
        (row, self.payoff.eval(&s))
    }

    fn budget_row(&self) -> Vec<f64> {
        let mut row = vec![1.0; self.layout.total];
        row[0] = 0.0;
        row
    }

    fn build_lp(&self, active: &[Vec<usize>]) -> LpProblem {
        let mut lp = LpProblem::new(Sense::Min, self.objective());
        lp.var_bounds[0] = VarBound::Free;
        for idx in active {
            let (row, rhs) = self.point_row(idx);
            lp.add_row(row, Relation::Ge, rhs);
        }
        lp.add_row(self.budget_row(), Relation::Le, self.budget);
        lp
    }

    /// Per-asset profit tables for the current LP point, so the full-grid
    /// violation scan is a sum of axis lookups.
    fn profit_tables(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.layout.d)
            .map(|k| {
                let dp = x[self.layout.delta_plus(k)];
                let dm = x[self.layout.delta_minus(k)];
                let spot = self.snapshot.spots[k];
                self.grid.axes[k]
                    .iter()
                    .map(|&v| {
                        let mut t = (dp - dm) * (v - spot) - self.kappa * spot * (dp + dm);
                        for (j, q) in self.call_quotes[k].iter().enumerate() {
                            t += (x[self.layout.call_long(k, j)]
                                - x[self.layout.call_short(k, j)])
                                * (v - q.strike).max(0.0);
                        }
                        for (j, q) in self.put_quotes[k].iter().enumerate() {
                            t += (x[self.layout.put_long(k, j)] - x[self.layout.put_short(k, j)])
                                * (q.strike - v).max(0.0);
                        }
                        t
                    })
                    .collect()
            })
            .collect()
    }

    /// Most violated grid points for the candidate solution.
    fn violations(&self, x: &[f64]) -> Vec<(f64, Vec<usize>)> {
        let tables = self.profit_tables(x);
        let baskets: Vec<Vec<f64>> = (0..self.layout.d)
            .map(|k| self.grid.axes[k].iter().map(|&v| self.payoff.weights[k] * v).collect())
            .collect();
        let cash = x[0];
        let sizes: Vec<usize> = self.grid.axes.iter().map(|a| a.len()).collect();
        let mut idx = vec![0usize; self.layout.d];
        let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
        loop {
            let mut profit = cash;
            let mut basket = -self.payoff.strike;
            for k in 0..self.layout.d {
                profit += tables[k][idx[k]];
                basket += baskets[k][idx[k]];
            }
            let payoff = if self.payoff.negate { -basket.max(0.0) } else { basket.max(0.0) };
            let violation = payoff - profit;
            if violation > VIOLATION_TOL {
                out.push((violation, idx.clone()));
            }
            // odometer increment, last axis fastest
            let mut k = self.layout.d;
            loop {
                if k == 0 {
                    return finish_violations(out);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < sizes[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    fn extract_strategy(&self, x: &[f64]) -> HedgeStrategy {
        let d = self.layout.d;
        HedgeStrategy {
            cash: x[0],
            calls_long: (0..d)
                .map(|k| (0..self.layout.call_counts[k]).map(|j| x[self.layout.call_long(k, j)]).collect())
                .collect(),
            calls_short: (0..d)
                .map(|k| (0..self.layout.call_counts[k]).map(|j| x[self.layout.call_short(k, j)]).collect())
                .collect(),
            puts_long: (0..d)
                .map(|k| (0..self.layout.put_counts[k]).map(|j| x[self.layout.put_long(k, j)]).collect())
                .collect(),
            puts_short: (0..d)
                .map(|k| (0..self.layout.put_counts[k]).map(|j| x[self.layout.put_short(k, j)]).collect())
                .collect(),
            delta0: (0..d)
                .map(|k| x[self.layout.delta_plus(k)] - x[self.layout.delta_minus(k)])
                .collect(),
        }
    }
}

fn finish_violations(mut out: Vec<(f64, Vec<usize>)>) -> Vec<(f64, Vec<usize>)> {
    out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    out.truncate(MAX_POINTS_PER_ROUND);
    out
}

/// Evenly strided starting set that always includes the axis endpoints.
fn seed_points(grid: &Grid) -> Vec<Vec<usize>> {
    let d = grid.axes.len();
    let per_axis = match d {
        1 => 48,
        2 => 14,
        _ => 7,
    };
    let picks: Vec<Vec<usize>> = grid
        .axes
        .iter()
        .map(|axis| {
            let n = axis.len();
            if n <= per_axis {
                (0..n).collect()
            } else {
                let mut v: Vec<usize> =
                    (0..per_axis).map(|i| i * (n - 1) / (per_axis - 1)).collect();
                v.dedup();
                v
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        out.push((0..d).map(|k| picks[k][idx[k]]).collect());
        let mut k = d;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < picks[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn solve_super_hedge(
    snapshot: &MarketSnapshot,
    grid: &Grid,
    payoff: SeparablePayoff,
    config: &PricerConfig,
) -> Result<(f64, HedgeStrategy, SideStatus)> {
    let builder = SuperHedgeBuilder::new(snapshot, grid, payoff, config);
    let mut active = seed_points(grid);
    let mut seen: HashSet<Vec<usize>> = active.iter().cloned().collect();

    for _ in 0..MAX_CUT_ROUNDS {
        let lp = builder.build_lp(&active);
        let sol = solve(&lp)?;
        match sol.status {
            LpStatus::Infeasible => {
                return Ok((f64::NAN, HedgeStrategy::zero(snapshot), SideStatus::Infeasible));
            }
            LpStatus::Unbounded => {
                return Ok((
                    f64::NEG_INFINITY,
                    HedgeStrategy::zero(snapshot),
                    SideStatus::ArbitrageDetected,
                ));
            }
            LpStatus::Optimal => {}
        }
        let violated = builder.violations(&sol.x);
        let mut added = false;
        for (_, idx) in violated {
            if seen.insert(idx.clone()) {
                active.push(idx);
                added = true;
            }
        }
        if !added {
            return Ok((sol.value, builder.extract_strategy(&sol.x), SideStatus::Optimal));
        }
    }
    Err(Error::Numerical("constraint generation did not converge".into()))
}

fn reflect(strategy: HedgeStrategy) -> HedgeStrategy {
    HedgeStrategy {
        cash: -strategy.cash,
        calls_long: strategy.calls_short,
        calls_short: strategy.calls_long,
        puts_long: strategy.puts_short,
        puts_short: strategy.puts_long,
        delta0: strategy.delta0.iter().map(|d| -d).collect(),
    }
}

/// Model-free lower and upper price bounds with the attaining strategies.
pub fn price_bounds(
    snapshot: &MarketSnapshot,
    spec: &PayoffSpec,
    config: &PricerConfig,
) -> Result<BoundResult> {
    let violations = validate_snapshot(snapshot);
    if !violations.is_empty() {
        return Err(Error::Invalid(format!("invalid snapshot: {}", violations[0])));
    }
    spec.validate(snapshot.num_assets())?;
    config.validate(snapshot)?;
    if snapshot.num_assets() > 3 {
        return Err(Error::Invalid("hedging LP supports at most 3 assets".into()));
    }
    let grid = build_grid(snapshot, spec, config)?;
    let d = snapshot.num_assets();

    let (upper, upper_strategy, upper_status) = solve_super_hedge(
        snapshot,
        &grid,
        SeparablePayoff::from_spec(spec, d, false),
        config,
    )?;
    // Sub-hedging the payoff is super-hedging its negation; the reflected
    // strategy certifies the lower bound at revenue -cost(-phi side).
    let (neg_upper, neg_strategy, lower_status) = solve_super_hedge(
        snapshot,
        &grid,
        SeparablePayoff::from_spec(spec, d, true),
        config,
    )?;

    Ok(BoundResult {
        lower: -neg_upper,
        upper,
        lower_strategy: reflect(neg_strategy),
        upper_strategy,
        lower_status,
        upper_status,
    })
}

#[derive(Debug, Clone)]
pub struct ArbitrageReport {
    pub arbitrage_free: bool,
    pub zero_payoff_upper: f64,
    pub zero_payoff_lower: f64,
    pub exploit: Option<HedgeStrategy>,
}

/// Prices the zero payoff: any nonzero bound exhibits an arbitrage.
pub fn check_no_arbitrage(snapshot: &MarketSnapshot, config: &PricerConfig) -> Result<ArbitrageReport> {
    let zero = PayoffSpec::BasketCall {
        weights: vec![0.0; snapshot.num_assets()],
        strike: 0.0,
    };
    let bounds = price_bounds(snapshot, &zero, config)?;
    let upper_bad = bounds.upper < -1e-7;
    let lower_bad = bounds.lower > 1e-7;
    let exploit = if upper_bad {
        Some(bounds.upper_strategy.clone())
    } else if lower_bad {
        Some(bounds.lower_strategy.clone())
    } else {
        None
    };
    Ok(ArbitrageReport {
        arbitrage_free: !(upper_bad || lower_bad),
        zero_payoff_upper: bounds.upper,
        zero_payoff_lower: bounds.lower,
        exploit,
    })
}

/// Convenience wrapper asserting the payoff dominance of a returned
/// strategy at every grid point; used by the labeled-data pipeline.
pub fn max_dominance_violation(
    snapshot: &MarketSnapshot,
    spec: &PayoffSpec,
    config: &PricerConfig,
    strategy: &HedgeStrategy,
    upper_side: bool,
) -> Result<f64> {
    let grid = build_grid(snapshot, spec, config)?;
    let mut worst = f64::NEG_INFINITY;
    for s in grid.iter_points() {
        let profit = evaluate_strategy(strategy, snapshot, &s, config.kappa)?;
        let payoff = evaluate_payoff(spec, &s)?;
        let gap = if upper_side { payoff - profit } else { profit - payoff };
        worst = worst.max(gap);
    }
    Ok(worst)
}
