//! Synthetic dataset generation: marginal pairs labeled with transport
//! bounds, and market snapshots labeled with hedging bounds or with the
//! optimal strategies themselves.
//!
//! Every row draws from its own generator seeded with `seed ^ row`, so
//! a parallel labeling run assembles the exact dataset a serial run does.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hedge::{check_no_arbitrage, price_bounds, SideStatus};
use crate::model::{
    feature_vector, HedgeStrategy, MarketSnapshot, OptionKind, OptionQuote, PayoffSpec,
    PricerConfig,
};
use crate::mot::{
    check_convex_order, mot_bounds, u_quantize, u_quantize_cells, variance_range, Distribution,
    DiscreteMeasure, MotConstraints, MotPayoff,
};

const MAX_PAIR_ATTEMPTS: usize = 10_000;
const MAX_SNAPSHOT_ATTEMPTS: usize = 20;
// distinct stream for the snapshot shared by a block of payoff draws
const SNAPSHOT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
    pub layout: String,
    pub seed: u64,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.nrows() != self.targets.nrows() {
            return Err(Error::Dimension("feature/target row counts differ".into()));
        }
        if self.features.iter().chain(self.targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("dataset contains non-finite entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    Prices,
    Strategies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffFamily {
    Call,
    Basket,
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub samples: usize,
    pub n_subset: usize,
    pub seed: u64,
    /// atoms per quantized marginal in transport labeling
    pub atoms: usize,
    pub variance: bool,
    pub mode: LabelMode,
    pub family: PayoffFamily,
    pub assets: usize,
    pub quotes_per_asset: usize,
    pub spread: f64,
    pub pricer: PricerConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            samples: 1,
            n_subset: 5,
            seed: 0,
            atoms: 20,
            variance: false,
            mode: LabelMode::Prices,
            family: PayoffFamily::Call,
            assets: 1,
            quotes_per_asset: 20,
            spread: 0.005,
            pricer: PricerConfig::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.n_subset == 0 {
            return Err(Error::Invalid("need at least one sample and one payoff draw".into()));
        }
        if self.atoms == 0 {
            return Err(Error::Invalid("need at least one atom".into()));
        }
        if !(self.assets >= 1 && self.assets <= 3) {
            return Err(Error::Invalid("snapshot generation supports 1 to 3 assets".into()));
        }
        if !(self.spread >= 0.0 && self.spread < 1.0) {
            return Err(Error::Invalid("spread must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One random marginal pair from the rotating hyper-parameter families.
/// The draw is not guaranteed to be in convex order; callers filter.
pub fn gen_marginal_pair(family_index: usize, rng: &mut impl Rng) -> (Distribution, Distribution) {
    match family_index % 4 {
        0 => {
            let mu: f64 = rng.gen_range(-2.0..2.0);
            let s1: f64 = rng.gen_range(0.0f64..0.5).max(1e-6);
            let s2 = s1 * rng.gen_range(1.0..2.0);
            (
                Distribution::LogNormal { mu: mu - s1 * s1 / 2.0, sigma: s1 },
                Distribution::LogNormal { mu: mu - s2 * s2 / 2.0, sigma: s2 },
            )
        }
        1 => {
            let c: f64 = rng.gen_range(10.0..20.0);
            let a: f64 = rng.gen_range(0.0f64..5.0).max(1e-6);
            let b: f64 = rng.gen_range(a..a + 5.0);
            (
                Distribution::Uniform { a: c - a, b: c + a },
                Distribution::Uniform { a: c - b, b: c + b },
            )
        }
        2 => {
            let c: f64 = rng.gen_range(5.0..10.0);
            let a: f64 = rng.gen_range(0.0f64..5.0).max(1e-6);
            (
                Distribution::Uniform { a: c - a, b: c + a },
                Distribution::DiscreteUniform { points: vec![c - a, c + a] },
            )
        }
        _ => {
            let l: f64 = rng.gen_range(0.0f64..5.0).max(1e-6);
            let m: f64 = rng.gen_range(l..l + 10.0);
            // upper limit chosen so the triangular mean equals the uniform's;
            // a free draw almost never yields matching means
            let u = 2.0 * m - l;
            (
                Distribution::Uniform { a: m - l / 2.0, b: m + l / 2.0 },
                Distribution::Triangular { lower: l, mode: m, upper: u },
            )
        }
    }
}

struct AcceptedPair {
    cells1: Vec<f64>,
    cells2: Vec<f64>,
    q1: DiscreteMeasure,
    q2: DiscreteMeasure,
}

fn draw_convex_ordered_pair(
    family_index: usize,
    atoms: usize,
    need_positive: bool,
    rng: &mut impl Rng,
) -> Result<AcceptedPair> {
    for _ in 0..MAX_PAIR_ATTEMPTS {
        let (d1, d2) = gen_marginal_pair(family_index, rng);
        let cells1 = u_quantize_cells(&d1, atoms)?;
        let cells2 = u_quantize_cells(&d2, atoms)?;
        let q1 = u_quantize(&d1, atoms)?;
        let q2 = u_quantize(&d2, atoms)?;
        if need_positive && q1.atoms().first().is_some_and(|&x| x <= 1e-9) {
            continue;
        }
        if check_convex_order(&q1, &q2) {
            return Ok(AcceptedPair { cells1, cells2, q1, q2 });
        }
    }
    Err(Error::Numerical(format!(
        "no convex-ordered pair found in family {family_index} after {MAX_PAIR_ATTEMPTS} draws"
    )))
}

/// Transport-bound dataset for the payoff |S2 - S1|: features are the two
/// sorted atom lists (plus the return volatility level in variance mode),
/// targets are the lower and upper bounds.
pub fn gen_mot_dataset(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let n = config.atoms;
    let width = 2 * n + usize::from(config.variance);
    let mut features = Array2::zeros((config.samples, width));
    let mut targets = Array2::zeros((config.samples, 2));
    for i in 0..config.samples {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ i as u64);
        let pair = draw_convex_ordered_pair(i, n, config.variance, &mut rng)?;
        let mut constraints = MotConstraints::default();
        if config.variance {
            let (lo, hi) = variance_range(&pair.q1, &pair.q2)?;
            let lambda: f64 = rng.gen_range(0.0..1.0);
            let var = lo + lambda * (hi - lo);
            constraints.variance = Some(var);
            features[[i, 2 * n]] = var.sqrt();
        }
        let (lower, upper) = mot_bounds(&pair.q1, &pair.q2, &MotPayoff::AbsDiff, &constraints)?;
        for j in 0..n {
            features[[i, j]] = pair.cells1[j];
            features[[i, n + j]] = pair.cells2[j];
        }
        targets[[i, 0]] = lower;
        targets[[i, 1]] = upper;
    }
    let layout = if config.variance {
        format!("mot:atoms={n},variance")
    } else {
        format!("mot:atoms={n}")
    };
    Ok(Dataset { features, targets, layout, seed: config.seed })
}

/// Random arbitrage-free snapshot: call quotes priced as expectations
/// under an explicit reference martingale law with mean equal to spot.
pub fn gen_market_snapshot(
    rng: &mut impl Rng,
    d: usize,
    quotes_per_asset: usize,
    spread: f64,
) -> Result<MarketSnapshot> {
    if d == 0 {
        return Err(Error::Invalid("need at least one asset".into()));
    }
    let mut spots = Vec::with_capacity(d);
    let mut chains = Vec::with_capacity(d);
    for _ in 0..d {
        let spot: f64 = rng.gen_range(20.0..200.0);
        let sigma: f64 = rng.gen_range(0.1..0.5);
        let law = u_quantize(
            &Distribution::LogNormal { mu: spot.ln() - sigma * sigma / 2.0, sigma },
            10,
        )?;
        let mut chain = Vec::with_capacity(quotes_per_asset);
        for j in 0..quotes_per_asset {
            let frac = if quotes_per_asset == 1 {
                1.0
            } else {
                0.6 + 0.8 * j as f64 / (quotes_per_asset - 1) as f64
            };
            let strike = frac * spot;
            let mid = law.call_value(strike);
            chain.push(OptionQuote {
                kind: OptionKind::Call,
                strike,
                bid: mid * (1.0 - spread),
                ask: mid * (1.0 + spread),
            });
        }
        spots.push(spot);
        chains.push(chain);
    }
    Ok(MarketSnapshot { spots, chains })
}

/// Net-position encoding of a strategy: cash, then one net option
/// position per sorted quote (calls then puts, per asset), then the
/// forward position per asset.
pub fn flatten_strategy(strategy: &HedgeStrategy, snapshot: &MarketSnapshot) -> Result<Vec<f64>> {
    strategy.check_shapes(snapshot)?;
    let mut out = vec![strategy.cash];
    for k in 0..snapshot.num_assets() {
        for j in 0..strategy.calls_long[k].len() {
            out.push(strategy.calls_long[k][j] - strategy.calls_short[k][j]);
        }
        for j in 0..strategy.puts_long[k].len() {
            out.push(strategy.puts_long[k][j] - strategy.puts_short[k][j]);
        }
    }
    out.extend_from_slice(&strategy.delta0);
    Ok(out)
}

pub fn strategy_width(snapshot: &MarketSnapshot) -> usize {
    1 + snapshot.quote_count(OptionKind::Call)
        + snapshot.quote_count(OptionKind::Put)
        + snapshot.num_assets()
}

/// Inverse of [`flatten_strategy`]; net positions split by sign.
pub fn strategy_from_flat(flat: &[f64], snapshot: &MarketSnapshot) -> Result<HedgeStrategy> {
    if flat.len() != strategy_width(snapshot) {
        return Err(Error::Dimension(format!(
            "strategy vector has {} entries, expected {}",
            flat.len(),
            strategy_width(snapshot)
        )));
    }
    let mut st = HedgeStrategy::zero(snapshot);
    st.cash = flat[0];
    let mut pos = 1;
    for k in 0..snapshot.num_assets() {
        for j in 0..st.calls_long[k].len() {
            st.calls_long[k][j] = flat[pos].max(0.0);
            st.calls_short[k][j] = (-flat[pos]).max(0.0);
            pos += 1;
        }
        for j in 0..st.puts_long[k].len() {
            st.puts_long[k][j] = flat[pos].max(0.0);
            st.puts_short[k][j] = (-flat[pos]).max(0.0);
            pos += 1;
        }
    }
    for k in 0..snapshot.num_assets() {
        st.delta0[k] = flat[pos];
        pos += 1;
    }
    Ok(st)
}

fn gen_snapshot_for_block(config: &GenConfig, block: u64) -> Result<MarketSnapshot> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SNAPSHOT_STREAM ^ block);
    for _ in 0..MAX_SNAPSHOT_ATTEMPTS {
        let snap = gen_market_snapshot(&mut rng, config.assets, config.quotes_per_asset, config.spread)?;
        if config.pricer.validate(&snap).is_err() {
            continue;
        }
        if check_no_arbitrage(&snap, &config.pricer)?.arbitrage_free {
            return Ok(snap);
        }
    }
    Err(Error::Numerical(format!(
        "could not generate an arbitrage-free snapshot for block {block}"
    )))
}

fn draw_payoff(config: &GenConfig, snapshot: &MarketSnapshot, rng: &mut impl Rng) -> PayoffSpec {
    match config.family {
        PayoffFamily::Call => {
            let asset_index = rng.gen_range(0..snapshot.num_assets());
            let strike = rng.gen_range(0.5..1.5) * snapshot.spots[asset_index];
            PayoffSpec::Call { asset_index, strike }
        }
        PayoffFamily::Basket => {
            let weights: Vec<f64> =
                (0..snapshot.num_assets()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let basket_spot: f64 =
                weights.iter().zip(&snapshot.spots).map(|(w, s)| w * s).sum();
            let strike = rng.gen_range(0.5..1.5) * basket_spot;
            PayoffSpec::BasketCall { weights, strike }
        }
    }
}

/// Hedging-bound dataset: one row per payoff draw, a fresh snapshot every
/// `n_subset` rows. Targets are (lower, upper) prices, or the two flat
/// strategy vectors (lower side first) in strategy mode.
pub fn gen_hedge_dataset(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let mut features: Vec<Vec<f64>> = Vec::with_capacity(config.samples);
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(config.samples);
    let mut cached: Option<(u64, MarketSnapshot)> = None;
    for i in 0..config.samples {
        let block = (i / config.n_subset) as u64;
        if cached.as_ref().map(|(b, _)| *b) != Some(block) {
            cached = Some((block, gen_snapshot_for_block(config, block)?));
        }
        let snapshot = &cached.as_ref().unwrap().1;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ i as u64);
        let spec = draw_payoff(config, snapshot, &mut rng);
        let bounds = price_bounds(snapshot, &spec, &config.pricer)?;
        if bounds.lower_status != SideStatus::Optimal || bounds.upper_status != SideStatus::Optimal
        {
            return Err(Error::Numerical(format!(
                "pricing failed on sample {i}: statuses {:?}/{:?}",
                bounds.lower_status, bounds.upper_status
            )));
        }
        features.push(feature_vector(snapshot, &spec)?);
        match config.mode {
            LabelMode::Prices => targets.push(vec![bounds.lower, bounds.upper]),
            LabelMode::Strategies => {
                let mut row = flatten_strategy(&bounds.lower_strategy, snapshot)?;
                row.extend(flatten_strategy(&bounds.upper_strategy, snapshot)?);
                targets.push(row);
            }
        }
    }
    let fw = features[0].len();
    let tw = targets[0].len();
    let features =
        Array2::from_shape_vec((config.samples, fw), features.into_iter().flatten().collect())
            .map_err(|e| Error::Dimension(e.to_string()))?;
    let targets =
        Array2::from_shape_vec((config.samples, tw), targets.into_iter().flatten().collect())
            .map_err(|e| Error::Dimension(e.to_string()))?;
    let mode = match config.mode {
        LabelMode::Prices => "prices",
        LabelMode::Strategies => "strategies",
    };
    let family = match config.family {
        PayoffFamily::Call => "call",
        PayoffFamily::Basket => "basket",
    };
    let layout = format!(
        "hedge:{mode},family={family},assets={},quotes={}",
        config.assets, config.quotes_per_asset
    );
    Ok(Dataset { features, targets, layout, seed: config.seed })
}

/// Seeded shuffle, then the first rows train and the rounded fraction
/// tests; together they are the original multiset.
pub fn split_dataset(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Invalid("test fraction must lie in (0, 1)".into()));
    }
    let n = dataset.rows();
    if n < 2 {
        return Err(Error::Invalid("need at least 2 rows to split".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let n_test = n_test.clamp(1, n - 1);
    let (train_idx, test_idx) = order.split_at(n - n_test);
    let take = |idx: &[usize]| -> Dataset {
        let mut f = Array2::zeros((idx.len(), dataset.features.ncols()));
        let mut t = Array2::zeros((idx.len(), dataset.targets.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            f.row_mut(r).assign(&dataset.features.row(i));
            t.row_mut(r).assign(&dataset.targets.row(i));
        }
        Dataset { features: f, targets: t, layout: dataset.layout.clone(), seed: dataset.seed }
    };
    Ok((take(train_idx), take(test_idx)))
}
