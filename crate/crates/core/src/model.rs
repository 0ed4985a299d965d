//! Market data types, payoff evaluation and the canonical feature layout.

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

/// A single quoted option: strike plus bid and ask price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub kind: OptionKind,
    pub strike: f64,
    pub bid: f64,
    pub ask: f64,
}

/// Spot prices and per-asset option chains at a single future maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSnapshot {
    pub spots: Vec<f64>,
    pub chains: Vec<Vec<OptionQuote>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub asset: usize,
    pub quote: Option<usize>,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.quote {
            Some(q) => write!(f, "asset {} quote {}: {}", self.asset, q, self.rule),
            None => write!(f, "asset {}: {}", self.asset, self.rule),
        }
    }
}

impl MarketSnapshot {
    pub fn num_assets(&self) -> usize {
        self.spots.len()
    }

    pub fn quote_count(&self, kind: OptionKind) -> usize {
        self.chains
            .iter()
            .map(|c| c.iter().filter(|q| q.kind == kind).count())
            .sum()
    }

    /// Quotes of one kind on one asset, sorted by strike ascending.
    pub fn sorted_quotes(&self, asset: usize, kind: OptionKind) -> Vec<OptionQuote> {
        let mut qs: Vec<OptionQuote> = self.chains[asset]
            .iter()
            .filter(|q| q.kind == kind)
            .copied()
            .collect();
        qs.sort_by(|a, b| a.strike.partial_cmp(&b.strike).unwrap());
        qs
    }
}

/// Reports every invariant violation instead of failing on the first one.
pub fn validate_snapshot(snapshot: &MarketSnapshot) -> Vec<Violation> {
    let mut out = Vec::new();
    if snapshot.spots.is_empty() {
        out.push(Violation {
            asset: 0,
            quote: None,
            rule: "snapshot must contain at least one asset".into(),
        });
    }
    if snapshot.spots.len() != snapshot.chains.len() {
        out.push(Violation {
            asset: 0,
            quote: None,
            rule: format!(
                "spots ({}) and chains ({}) lengths differ",
                snapshot.spots.len(),
                snapshot.chains.len()
            ),
        });
        return out;
    }
    for (k, spot) in snapshot.spots.iter().enumerate() {
        if !spot.is_finite() || *spot < 0.0 {
            out.push(Violation {
                asset: k,
                quote: None,
                rule: format!("spot {spot} must be finite and nonnegative"),
            });
        }
    }
    for (k, chain) in snapshot.chains.iter().enumerate() {
        for (j, q) in chain.iter().enumerate() {
            if !(q.strike.is_finite() && q.strike >= 0.0) {
                out.push(Violation {
                    asset: k,
                    quote: Some(j),
                    rule: format!("strike {} must be finite and nonnegative", q.strike),
                });
            }
            if !(q.bid.is_finite() && q.ask.is_finite() && 0.0 <= q.bid && q.bid <= q.ask) {
                out.push(Violation {
                    asset: k,
                    quote: Some(j),
                    rule: format!("prices must satisfy 0 <= bid ({}) <= ask ({})", q.bid, q.ask),
                });
            }
        }
        // non-redundancy: (kind, strike) unique within an asset
        for (j, q) in chain.iter().enumerate() {
            for prev in &chain[..j] {
                if prev.kind == q.kind && prev.strike == q.strike {
                    out.push(Violation {
                        asset: k,
                        quote: Some(j),
                        rule: format!(
                            "duplicate {:?} strike {} (market instruments must be non-redundant)",
                            q.kind, q.strike
                        ),
                    });
                    break;
                }
            }
        }
    }
    out
}

/// Parametric payoff family: single-asset calls and basket calls.
///
/// The parameter vector theta is serialized as weights in asset order
/// followed by the strike; a plain call has theta = (L).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "variant")]
pub enum PayoffSpec {
    Call { asset_index: usize, strike: f64 },
    BasketCall { weights: Vec<f64>, strike: f64 },
}

impl PayoffSpec {
    pub fn theta(&self) -> Vec<f64> {
        match self {
            PayoffSpec::Call { strike, .. } => vec![*strike],
            PayoffSpec::BasketCall { weights, strike } => {
                let mut t = weights.clone();
                t.push(*strike);
                t
            }
        }
    }

    pub fn theta_len(&self) -> usize {
        match self {
            PayoffSpec::Call { .. } => 1,
            PayoffSpec::BasketCall { weights, .. } => weights.len() + 1,
        }
    }

    pub fn validate(&self, num_assets: usize) -> Result<(), Error> {
        match self {
            PayoffSpec::Call { asset_index, strike } => {
                if *asset_index >= num_assets {
                    return Err(Error::Dimension(format!(
                        "payoff asset index {asset_index} out of range for {num_assets} assets"
                    )));
                }
                if !strike.is_finite() {
                    return Err(Error::Invalid("payoff strike must be finite".into()));
                }
            }
            PayoffSpec::BasketCall { weights, strike } => {
                if weights.len() != num_assets {
                    return Err(Error::Dimension(format!(
                        "basket has {} weights but snapshot has {num_assets} assets",
                        weights.len()
                    )));
                }
                if !strike.is_finite() || weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Invalid("basket parameters must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// Payoff value at a terminal price vector.
pub fn evaluate_payoff(spec: &PayoffSpec, s: &[f64]) -> Result<f64, Error> {
    match spec {
        PayoffSpec::Call { asset_index, strike } => {
            let v = s.get(*asset_index).ok_or_else(|| {
                Error::Dimension(format!(
                    "price vector of length {} lacks asset {asset_index}",
                    s.len()
                ))
            })?;
            Ok((v - strike).max(0.0))
        }
        PayoffSpec::BasketCall { weights, strike } => {
            if weights.len() != s.len() {
                return Err(Error::Dimension(format!(
                    "basket has {} weights but price vector has {} entries",
                    weights.len(),
                    s.len()
                )));
            }
            let basket: f64 = weights.iter().zip(s).map(|(w, x)| w * x).sum();
            Ok((basket - strike).max(0.0))
        }
    }
}

/// Canonical feature vector fed to the regression network.
///
/// Per asset in index order: call strikes ascending, call bids, call asks,
/// then the same three blocks for puts; then all spots; then theta.
pub fn feature_vector(snapshot: &MarketSnapshot, spec: &PayoffSpec) -> Result<Vec<f64>, Error> {
    let violations = validate_snapshot(snapshot);
    if !violations.is_empty() {
        return Err(Error::Invalid(format!("invalid snapshot: {}", violations[0])));
    }
    spec.validate(snapshot.num_assets())?;
    let mut v = Vec::with_capacity(feature_len(snapshot, spec));
    for asset in 0..snapshot.num_assets() {
        for kind in [OptionKind::Call, OptionKind::Put] {
            let qs = snapshot.sorted_quotes(asset, kind);
            v.extend(qs.iter().map(|q| q.strike));
            v.extend(qs.iter().map(|q| q.bid));
            v.extend(qs.iter().map(|q| q.ask));
        }
    }
    v.extend_from_slice(&snapshot.spots);
    v.extend(spec.theta());
    Ok(v)
}

/// Feature width implied by quote counts: 3 entries per quote of either
/// kind, plus one spot per asset, plus the payoff parameters.
pub fn feature_len(snapshot: &MarketSnapshot, spec: &PayoffSpec) -> usize {
    3 * snapshot.quote_count(OptionKind::Call)
        + 3 * snapshot.quote_count(OptionKind::Put)
        + snapshot.num_assets()
        + spec.theta_len()
}

/// Static option legs plus a one-shot position in each underlying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeStrategy {
    pub cash: f64,
    /// Per asset, aligned with the sorted call quotes of that asset.
    pub calls_long: Vec<Vec<f64>>,
    pub calls_short: Vec<Vec<f64>>,
    /// Per asset, aligned with the sorted put quotes of that asset.
    pub puts_long: Vec<Vec<f64>>,
    pub puts_short: Vec<Vec<f64>>,
    pub delta0: Vec<f64>,
}

impl HedgeStrategy {
    pub fn zero(snapshot: &MarketSnapshot) -> Self {
        let calls: Vec<Vec<f64>> = snapshot
            .chains
            .iter()
            .enumerate()
            .map(|(k, _)| vec![0.0; snapshot.sorted_quotes(k, OptionKind::Call).len()])
            .collect();
        let puts: Vec<Vec<f64>> = snapshot
            .chains
            .iter()
            .enumerate()
            .map(|(k, _)| vec![0.0; snapshot.sorted_quotes(k, OptionKind::Put).len()])
            .collect();
        HedgeStrategy {
            cash: 0.0,
            calls_long: calls.clone(),
            calls_short: calls,
            puts_long: puts.clone(),
            puts_short: puts,
            delta0: vec![0.0; snapshot.num_assets()],
        }
    }

    pub fn check_shapes(&self, snapshot: &MarketSnapshot) -> Result<(), Error> {
        let d = snapshot.num_assets();
        if self.delta0.len() != d
            || self.calls_long.len() != d
            || self.calls_short.len() != d
            || self.puts_long.len() != d
            || self.puts_short.len() != d
        {
            return Err(Error::Dimension("strategy asset count mismatch".into()));
        }
        for k in 0..d {
            let nc = snapshot.sorted_quotes(k, OptionKind::Call).len();
            let np = snapshot.sorted_quotes(k, OptionKind::Put).len();
            if self.calls_long[k].len() != nc || self.calls_short[k].len() != nc {
                return Err(Error::Dimension(format!("call position shape mismatch on asset {k}")));
            }
            if self.puts_long[k].len() != np || self.puts_short[k].len() != np {
                return Err(Error::Dimension(format!("put position shape mismatch on asset {k}")));
            }
        }
        Ok(())
    }
}

/// Pricing parameters: transaction-cost rate, price cap, position budget,
/// and grid resolution per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricerConfig {
    pub kappa: f64,
    pub cap: f64,
    pub budget: f64,
    pub grid_per_axis: usize,
}

impl Default for PricerConfig {
    fn default() -> Self {
        PricerConfig { kappa: 0.0, cap: 1000.0, budget: 100.0, grid_per_axis: 64 }
    }
}

impl PricerConfig {
    pub fn validate(&self, snapshot: &MarketSnapshot) -> Result<(), Error> {
        if !(self.cap.is_finite() && self.cap > 0.0) {
            return Err(Error::Invalid("price cap must be finite and positive".into()));
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(Error::Invalid("budget must be finite and positive".into()));
        }
        if self.grid_per_axis < 2 {
            return Err(Error::Invalid("grid_per_axis must be at least 2".into()));
        }
        if self.kappa < 0.0 || !self.kappa.is_finite() {
            return Err(Error::Invalid("kappa must be finite and nonnegative".into()));
        }
        for (k, spot) in snapshot.spots.iter().enumerate() {
            if *spot >= self.cap {
                return Err(Error::Invalid(format!(
                    "price cap {} does not exceed spot {} of asset {k}",
                    self.cap, spot
                )));
            }
        }
        for (k, chain) in snapshot.chains.iter().enumerate() {
            for q in chain {
                if q.strike >= self.cap {
                    return Err(Error::Invalid(format!(
                        "price cap {} does not exceed strike {} on asset {k}",
                        self.cap, q.strike
                    )));
                }
            }
        }
        Ok(())
    }
}
