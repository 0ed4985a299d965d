//! Acceptance suite: each test prints one pass/fail line for its criterion.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pricebounds::hedge::{build_grid, price_bounds, strategy_cost, strategy_revenue};
use pricebounds::io::{evaluate, normalizers};
use pricebounds::lp::{solve, LpProblem, LpStatus, Relation, Sense};
use pricebounds::mlp::{fit, gradients, predict, MlpNetwork, TrainConfig};
use pricebounds::model::{
    evaluate_payoff, MarketSnapshot, OptionKind, OptionQuote, PayoffSpec, PricerConfig,
};
use pricebounds::mot::{
    check_convex_order, mot_bounds, u_quantize, variance_range, DiscreteMeasure, Distribution,
    MotConstraints, MotPayoff, wasserstein1,
};
use pricebounds::pipeline::{
    gen_hedge_dataset, gen_marginal_pair, gen_market_snapshot, gen_mot_dataset, split_dataset,
    strategy_from_flat, GenConfig, LabelMode,
};

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("criterion {criterion}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Reference two-marginal transport bounds, N = 20 atoms, payoff |S2 - S1|.

/// Cell averages of the trapezoidal law on [1, 5] with shoulders on
/// [1, 2] and [4, 5] (quantile: 1 + sqrt(6u) below u = 1/6, affine in the
/// middle, 5 - sqrt(6(1 - u)) above u = 5/6).
fn trapezoid_cells(n: usize) -> Vec<f64> {
    let s6 = 6.0f64.sqrt();
    let lo = |t: f64| t + (2.0 / 3.0) * s6 * t.powf(1.5);
    let mid = |t: f64| 2.0 * (t - 1.0 / 6.0) + 1.5 * (t - 1.0 / 6.0) * (t - 1.0 / 6.0);
    let hi = |t: f64| 5.0 * t + (2.0 / 3.0) * s6 * (1.0 - t).powf(1.5);
    let integral = |a: f64, b: f64| -> f64 {
        let mut total = 0.0;
        if a < 1.0 / 6.0 {
            total += lo(b.min(1.0 / 6.0)) - lo(a);
        }
        let (ma, mb) = (a.clamp(1.0 / 6.0, 5.0 / 6.0), b.clamp(1.0 / 6.0, 5.0 / 6.0));
        if mb > ma {
            total += mid(mb) - mid(ma);
        }
        if b > 5.0 / 6.0 {
            total += hi(b) - hi(a.max(5.0 / 6.0));
        }
        total
    };
    (0..n)
        .map(|i| n as f64 * integral(i as f64 / n as f64, (i + 1) as f64 / n as f64))
        .collect()
}

#[test]
fn criterion_1_reference_transport_bounds() {
    let n = 20;
    let quant = |d: Distribution| u_quantize(&d, n).unwrap();
    let trapezoid = DiscreteMeasure::new(trapezoid_cells(n), vec![1.0 / n as f64; n]).unwrap();

    let rows: Vec<(&str, DiscreteMeasure, DiscreteMeasure, f64, f64)> = vec![
        (
            "a",
            quant(Distribution::LogNormal { mu: 0.46875, sigma: 0.25 }),
            quant(Distribution::LogNormal { mu: 0.375, sigma: 0.5 }),
            0.3712409386916309,
            0.68533703330278,
        ),
        (
            "b",
            quant(Distribution::LogNormal { mu: -0.05, sigma: 0.1f64.sqrt() }),
            quant(Distribution::LogNormal { mu: -0.1, sigma: 0.2f64.sqrt() }),
            0.13068277359747996,
            0.306638061930813,
        ),
        (
            "c",
            quant(Distribution::Uniform { a: 8.0, b: 12.0 }),
            quant(Distribution::Uniform { a: 5.0, b: 15.0 }),
            1.7491,
            2.6220,
        ),
        (
            "d",
            quant(Distribution::Uniform { a: 5.0, b: 10.0 }),
            quant(Distribution::DiscreteUniform { points: vec![5.0, 10.0] }),
            1.66875,
            1.66875,
        ),
        (
            "e",
            quant(Distribution::Uniform { a: 2.0, b: 4.0 }),
            trapezoid,
            0.3501409347451707,
            0.7000878570967606,
        ),
    ];

    let tol = 2e-2;
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for (name, m1, m2, want_lo, want_hi) in rows {
        let t0 = Instant::now();
        let (lo, hi) =
            mot_bounds(&m1, &m2, &MotPayoff::AbsDiff, &MotConstraints::default()).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        let err = (lo - want_lo).abs().max((hi - want_hi).abs());
        worst = worst.max(err);
        assert!(
            err <= tol,
            "row {name}: got ({lo:.6}, {hi:.6}), want ({want_lo:.6}, {want_hi:.6})"
        );
        assert!(secs < 1.0, "row {name} took {secs:.3}s");
        if name == "d" {
            // Fully determined case: the interval collapses.
            assert!(hi - lo <= 5e-3, "row d interval width {}", hi - lo);
        }
    }
    report(
        "1 (reference transport bounds)",
        true,
        &format!("worst error {worst:.2e}, slowest row {slowest:.3}s"),
    );
}

// ---------------------------------------------------------------------------
// 2. Transport LP against brute-force vertex enumeration on tiny instances.

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    for col in 0..m {
        let pivot = (col..m).max_by(|&r, &s| {
            a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-11 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            let (top, bottom) = a.split_at_mut(r);
            for (c, v) in bottom[0][col..].iter_mut().enumerate() {
                *v -= f * top[col][col + c];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..m).rev() {
        let mut v = b[col];
        for c in col + 1..m {
            v -= a[col][c] * b[c];
        }
        b[col] = v / a[col][col];
    }
    Some(b)
}

/// Pivot rows of `a` under Gaussian elimination: a maximal independent set.
fn independent_rows(a: &[Vec<f64>]) -> Vec<usize> {
    let rows = a.len();
    let cols = a[0].len();
    let mut work: Vec<Vec<f64>> = a.to_vec();
    let mut picked = Vec::new();
    let mut used = vec![false; rows];
    for col in 0..cols {
        let mut best: Option<usize> = None;
        for r in 0..rows {
            if !used[r]
                && work[r][col].abs() > 1e-10
                && best.is_none_or(|b| work[r][col].abs() > work[b][col].abs())
            {
                best = Some(r);
            }
        }
        let Some(p) = best else { continue };
        used[p] = true;
        picked.push(p);
        for r in 0..rows {
            if r != p && work[r][col].abs() > 0.0 {
                let f = work[r][col] / work[p][col];
                let pivot_row = work[p].clone();
                for (c, v) in work[r].iter_mut().enumerate() {
                    *v -= f * pivot_row[c];
                }
            }
        }
    }
    picked.sort_unstable();
    picked
}

fn brute_force_mot(m1: &DiscreteMeasure, m2: &DiscreteMeasure, payoff: &MotPayoff) -> (f64, f64) {
    let (n1, n2) = (m1.len(), m2.len());
    let nv = n1 * n2;
    let mut a: Vec<Vec<f64>> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    for l in 0..n1 {
        let mut row = vec![0.0; nv];
        for m in 0..n2 {
            row[l * n2 + m] = 1.0;
        }
        a.push(row);
        b.push(m1.weights()[l]);
    }
    for m in 0..n2 {
        let mut row = vec![0.0; nv];
        for l in 0..n1 {
            row[l * n2 + m] = 1.0;
        }
        a.push(row);
        b.push(m2.weights()[m]);
    }
    for l in 0..n1 {
        let mut row = vec![0.0; nv];
        for m in 0..n2 {
            row[l * n2 + m] = m2.atoms()[m] - m1.atoms()[l];
        }
        a.push(row);
        b.push(0.0);
    }
    let cost: Vec<f64> = (0..nv)
        .map(|j| payoff.evaluate(m1.atoms()[j / n2], m2.atoms()[j % n2]))
        .collect();

    let rows = independent_rows(&a);
    let rank = rows.len();
    let mut best = (f64::INFINITY, f64::NEG_INFINITY);
    // Basic solutions: every column subset of size `rank`.
    for mask in 0u32..(1 << nv) {
        if mask.count_ones() as usize != rank {
            continue;
        }
        let cols: Vec<usize> = (0..nv).filter(|j| mask & (1 << j) != 0).collect();
        let sys: Vec<Vec<f64>> =
            rows.iter().map(|&r| cols.iter().map(|&c| a[r][c]).collect()).collect();
        let rhs: Vec<f64> = rows.iter().map(|&r| b[r]).collect();
        let Some(sol) = solve_square(sys, rhs) else { continue };
        if sol.iter().any(|&v| v < -1e-9) {
            continue;
        }
        let mut q = vec![0.0; nv];
        for (k, &c) in cols.iter().enumerate() {
            q[c] = sol[k];
        }
        // check every constraint, including the dependent ones
        let feasible = a.iter().zip(&b).all(|(row, &rhs)| {
            let lhs: f64 = row.iter().zip(&q).map(|(x, y)| x * y).sum();
            (lhs - rhs).abs() <= 1e-8
        });
        if !feasible {
            continue;
        }
        let value: f64 = cost.iter().zip(&q).map(|(c, v)| c * v).sum();
        best.0 = best.0.min(value);
        best.1 = best.1.max(value);
    }
    best
}

#[test]
fn criterion_2_transport_vs_vertex_enumeration() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        // A martingale coupling built forward: second-marginal atoms, then
        // conditional laws whose means become the first-marginal atoms.
        let n2 = rng.gen_range(1..=3usize);
        let mut ys: Vec<f64> = (0..n2).map(|_| rng.gen_range(1.0..10.0)).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n1 = rng.gen_range(1..=3usize);
        let mut xs = Vec::with_capacity(n1);
        let mut rows_p = Vec::with_capacity(n1);
        for _ in 0..n1 {
            let raw: Vec<f64> = (0..n2).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            xs.push(p.iter().zip(&ys).map(|(pi, yi)| pi * yi).sum::<f64>());
            rows_p.push(p);
        }
        let raw: Vec<f64> = (0..n1).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w1: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let w2: Vec<f64> = (0..n2)
            .map(|m| (0..n1).map(|l| w1[l] * rows_p[l][m]).sum())
            .collect();
        let m1 = DiscreteMeasure::new(xs, w1).unwrap();
        let m2 = DiscreteMeasure::new(ys, w2).unwrap();

        let payoff = if trial % 2 == 0 {
            MotPayoff::AbsDiff
        } else {
            MotPayoff::SpreadCall { strike: rng.gen_range(-1.0..1.0) }
        };
        let (lo, hi) = mot_bounds(&m1, &m2, &payoff, &MotConstraints::default()).unwrap();
        let (blo, bhi) = brute_force_mot(&m1, &m2, &payoff);
        let err = (lo - blo).abs().max((hi - bhi).abs());
        worst = worst.max(err);
        assert!(
            err <= 1e-7,
            "trial {trial}: lp ({lo}, {hi}) vs enumeration ({blo}, {bhi})"
        );
    }
    let secs = t0.elapsed().as_secs_f64();
    assert!(secs < 10.0, "enumeration comparison took {secs:.2}s");
    report(
        "2 (transport vs vertex enumeration)",
        true,
        &format!("50 instances, worst gap {worst:.2e}, {secs:.2}s"),
    );
}

// ---------------------------------------------------------------------------
// 3. Replication identities and one-asset bounds without quotes.

#[test]
fn criterion_3_replication_identities() {
    let t0 = Instant::now();

    // A call quoted without spread is replicated exactly.
    let traded = MarketSnapshot {
        spots: vec![100.0],
        chains: vec![vec![OptionQuote {
            kind: OptionKind::Call,
            strike: 100.0,
            bid: 8.0,
            ask: 8.0,
        }]],
    };
    let cfg = PricerConfig { kappa: 0.0, cap: 400.0, budget: 100.0, grid_per_axis: 32 };
    let b = price_bounds(&traded, &PayoffSpec::Call { asset_index: 0, strike: 100.0 }, &cfg)
        .unwrap();
    assert!((b.lower - 8.0).abs() <= 1e-9 && (b.upper - 8.0).abs() <= 1e-9,
        "traded call bounds ({}, {})", b.lower, b.upper);

    // A zero-strike basket call is a forward on the underlying.
    let bare = MarketSnapshot { spots: vec![40.0], chains: vec![vec![]] };
    let fwd = price_bounds(
        &bare,
        &PayoffSpec::BasketCall { weights: vec![1.0], strike: 0.0 },
        &PricerConfig { cap: 200.0, ..cfg },
    )
    .unwrap();
    assert!((fwd.lower - 40.0).abs() <= 1e-9 && (fwd.upper - 40.0).abs() <= 1e-9,
        "forward bounds ({}, {})", fwd.lower, fwd.upper);

    // With no quotes at all, the call bounds have closed forms, and both
    // must agree with a direct search over two-point martingale laws.
    let spot = 50.0;
    let cap = 100.0;
    let no_quotes = MarketSnapshot { spots: vec![spot], chains: vec![vec![]] };
    let cfg = PricerConfig { kappa: 0.0, cap, budget: 100.0, grid_per_axis: 64 };
    for strike in [30.0, 50.0, 70.0] {
        let spec = PayoffSpec::Call { asset_index: 0, strike };
        let b = price_bounds(&no_quotes, &spec, &cfg).unwrap();
        let want_hi = spot * (cap - strike) / cap;
        let want_lo = (spot - strike).max(0.0);
        assert!((b.upper - want_hi).abs() <= 1e-6, "upper {} vs {}", b.upper, want_hi);
        assert!((b.lower - want_lo).abs() <= 1e-6, "lower {} vs {}", b.lower, want_lo);

        // brute force: all mean-spot laws on two grid points
        let axis = build_grid(&no_quotes, &spec, &cfg).unwrap().axes()[0].clone();
        let phi = |s: f64| evaluate_payoff(&spec, &[s]).unwrap();
        let mut blo = f64::INFINITY;
        let mut bhi = f64::NEG_INFINITY;
        for (i, &si) in axis.iter().enumerate() {
            if si > spot {
                continue;
            }
            for &sj in &axis[i..] {
                if sj < spot || sj <= si {
                    continue;
                }
                let q = (sj - spot) / (sj - si);
                let v = q * phi(si) + (1.0 - q) * phi(sj);
                blo = blo.min(v);
                bhi = bhi.max(v);
            }
        }
        assert!((b.upper - bhi).abs() <= 1e-6, "upper {} vs search {}", b.upper, bhi);
        assert!((b.lower - blo).abs() <= 1e-6, "lower {} vs search {}", b.lower, blo);
    }
    let secs = t0.elapsed().as_secs_f64();
    assert!(secs < 5.0, "replication checks took {secs:.2}s");
    report("3 (replication identities)", true, &format!("{secs:.2}s"));
}

// ---------------------------------------------------------------------------
// 4. Hedging LP value equals the martingale-measure LP over the same grid.

#[test]
fn criterion_4_hedge_duality() {
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + trial);
        let quotes = rng.gen_range(3..=8usize);
        let snapshot = gen_market_snapshot(&mut rng, 1, quotes, 0.01).unwrap();
        let spot = snapshot.spots[0];
        let strike = rng.gen_range(0.5..1.5) * spot;
        let spec = PayoffSpec::Call { asset_index: 0, strike };
        let cfg = PricerConfig { kappa: 0.0, cap: 500.0, budget: 1000.0, grid_per_axis: 24 };

        let bounds = price_bounds(&snapshot, &spec, &cfg).unwrap();

        // measure side: probabilities on grid points, mean pinned to spot,
        // quoted calls priced inside their spreads
        let axis = build_grid(&snapshot, &spec, &cfg).unwrap().axes()[0].clone();
        let objective: Vec<f64> =
            axis.iter().map(|&s| evaluate_payoff(&spec, &[s]).unwrap()).collect();
        let chain = snapshot.sorted_quotes(0, OptionKind::Call);
        let build = |sense: Sense| {
            let mut lp = LpProblem::new(sense, objective.clone());
            lp.add_row(vec![1.0; axis.len()], Relation::Eq, 1.0);
            lp.add_row(axis.clone(), Relation::Eq, spot);
            for q in &chain {
                let payoffs: Vec<f64> = axis.iter().map(|&s| (s - q.strike).max(0.0)).collect();
                lp.add_row(payoffs.clone(), Relation::Le, q.ask);
                lp.add_row(payoffs, Relation::Ge, q.bid);
            }
            lp
        };
        let hi = solve(&build(Sense::Max)).unwrap();
        let lo = solve(&build(Sense::Min)).unwrap();
        assert_eq!(hi.status, LpStatus::Optimal);
        assert_eq!(lo.status, LpStatus::Optimal);
        let gap = (bounds.upper - hi.value).abs().max((bounds.lower - lo.value).abs());
        worst = worst.max(gap);
        assert!(
            gap <= 1e-6,
            "trial {trial}: hedge ({}, {}) vs measure ({}, {})",
            bounds.lower,
            bounds.upper,
            lo.value,
            hi.value
        );
    }
    report("4 (hedging/measure duality)", true, &format!("20 instances, worst gap {worst:.2e}"));
}

// ---------------------------------------------------------------------------
// 5. Backprop gradients against central finite differences.

#[test]
fn criterion_5_gradient_check() {
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + trial);
        let d_in = rng.gen_range(1..=5usize);
        let d_out = rng.gen_range(1..=3usize);
        let mut dims = vec![d_in];
        for _ in 0..rng.gen_range(1..=3usize) {
            dims.push(rng.gen_range(1..=8usize));
        }
        dims.push(d_out);
        let mut net = MlpNetwork::init(&dims, trial).unwrap();
        // Fresh-init biases are zero, which parks dead units exactly on the
        // ReLU kink; jitter them so the loss is differentiable at the point.
        for b in &mut net.biases {
            for v in b.iter_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
        let x = Array2::from_shape_fn((4, d_in), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((4, d_out), |_| rng.gen_range(-1.0..1.0));

        let (grads, _) = gradients(&net, &x, &y).unwrap();
        for layer in 0..net.num_layers() {
            let ncols = net.weights[layer].ncols();
            for idx in 0..net.weights[layer].len() {
                let at = [idx / ncols, idx % ncols];
                let orig = net.weights[layer][at];
                net.weights[layer][at] = orig + eps;
                let up = pricebounds::mlp::mse(&net.forward(&x).unwrap(), &y);
                net.weights[layer][at] = orig - eps;
                let down = pricebounds::mlp::mse(&net.forward(&x).unwrap(), &y);
                net.weights[layer][at] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.weights[layer][at];
                let err = (analytic - numeric).abs();
                let rel = err / analytic.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
                assert!(
                    err <= 1e-4 * analytic.abs().max(numeric.abs()) + 1e-8,
                    "trial {trial} layer {layer} weight {idx}: {analytic} vs {numeric}"
                );
            }
            for idx in 0..net.biases[layer].len() {
                let orig = net.biases[layer][idx];
                net.biases[layer][idx] = orig + eps;
                let up = pricebounds::mlp::mse(&net.forward(&x).unwrap(), &y);
                net.biases[layer][idx] = orig - eps;
                let down = pricebounds::mlp::mse(&net.forward(&x).unwrap(), &y);
                net.biases[layer][idx] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.biases[layer][idx];
                let err = (analytic - numeric).abs();
                let rel = err / analytic.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
                assert!(
                    err <= 1e-4 * analytic.abs().max(numeric.abs()) + 1e-8,
                    "trial {trial} layer {layer} bias {idx}: {analytic} vs {numeric}"
                );
            }
        }
    }
    report("5 (gradient check)", true, &format!("20 networks, worst relative error {worst:.2e}"));
}

// ---------------------------------------------------------------------------
// 6. End-to-end transport regression: 20k samples, held-out MAE below 0.05.

#[test]
fn criterion_6_transport_regression() {
    let t0 = Instant::now();
    let config = GenConfig { samples: 20_000, seed: 20_260_823, ..GenConfig::default() };
    let dataset = gen_mot_dataset(&config).unwrap();
    let (train, test) = split_dataset(&dataset, 0.1, 1).unwrap();

    let net = MlpNetwork::init(&[40, 128, 128, 128, 2], 1).unwrap();
    let tc = TrainConfig { max_epochs: 250, patience: 30, seed: 1, ..TrainConfig::default() };
    let (model, scaler, _) = fit(&net, &train.features, &train.targets, &tc).unwrap();

    let pred = predict(&model, &scaler, &test.features).unwrap();
    let report_eval = evaluate(&pred, &test.targets, &vec![1.0; test.rows()]).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let worst = report_eval.mae.iter().cloned().fold(0.0f64, f64::max);
    assert!(worst < 0.05, "held-out MAE {:?}", report_eval.mae);
    assert!(secs < 900.0, "pipeline took {secs:.1}s");
    report(
        "6 (transport regression)",
        true,
        &format!("held-out MAE {:?}, {secs:.0}s", report_eval.mae),
    );
}

// ---------------------------------------------------------------------------
// 7. End-to-end hedging-bound regression: relative MAE below 5%.

#[test]
fn criterion_7_hedge_regression() {
    let t0 = Instant::now();
    let config = GenConfig {
        samples: 10_000,
        seed: 99,
        pricer: PricerConfig { grid_per_axis: 32, ..PricerConfig::default() },
        ..GenConfig::default()
    };
    let dataset = gen_hedge_dataset(&config).unwrap();
    assert_eq!(dataset.features.ncols(), 62);
    let (train, test) = split_dataset(&dataset, 0.1, 1).unwrap();

    let net = MlpNetwork::init(&[62, 128, 128, 128, 2], 1).unwrap();
    let tc = TrainConfig { max_epochs: 250, patience: 30, seed: 1, ..TrainConfig::default() };
    let (model, scaler, _) = fit(&net, &train.features, &train.targets, &tc).unwrap();

    let pred = predict(&model, &scaler, &test.features).unwrap();
    let norms = normalizers(&test).unwrap();
    let report_eval = evaluate(&pred, &test.targets, &norms).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let worst = report_eval.relative_mae.iter().cloned().fold(0.0f64, f64::max);
    assert!(worst < 0.05, "relative MAE {:?}", report_eval.relative_mae);
    report(
        "7 (hedge-bound regression)",
        true,
        &format!("relative MAE {:?}, {secs:.0}s", report_eval.relative_mae),
    );
}

// ---------------------------------------------------------------------------
// 8. Strategy labels reprice exactly, and the direct price network beats
//    prices reconstructed from a predicted-strategy network.

fn snapshot_from_features(row: &[f64], quotes: usize) -> MarketSnapshot {
    let chain: Vec<OptionQuote> = (0..quotes)
        .map(|j| OptionQuote {
            kind: OptionKind::Call,
            strike: row[j],
            bid: row[quotes + j],
            ask: row[2 * quotes + j],
        })
        .collect();
    MarketSnapshot { spots: vec![row[3 * quotes]], chains: vec![chain] }
}

#[test]
fn criterion_8_strategy_consistency() {
    let base = GenConfig {
        samples: 1000,
        seed: 7777,
        pricer: PricerConfig { grid_per_axis: 32, ..PricerConfig::default() },
        ..GenConfig::default()
    };
    let strat_cfg = GenConfig { mode: LabelMode::Strategies, ..base.clone() };
    let prices = gen_hedge_dataset(&base).unwrap();
    let strats = gen_hedge_dataset(&strat_cfg).unwrap();
    assert_eq!(strats.targets.ncols(), 44);

    // Labeled strategies reprice to the labeled bounds.
    let width = 22;
    for i in 0..prices.rows() {
        let row = strats.features.row(i);
        let snapshot = snapshot_from_features(row.as_slice().unwrap(), 20);
        let t = strats.targets.row(i);
        let t = t.as_slice().unwrap();
        let lower = strategy_from_flat(&t[..width], &snapshot).unwrap();
        let upper = strategy_from_flat(&t[width..], &snapshot).unwrap();
        let lo = strategy_revenue(&lower, &snapshot).unwrap();
        let hi = strategy_cost(&upper, &snapshot).unwrap();
        assert!((lo - prices.targets[[i, 0]]).abs() <= 1e-6, "row {i} lower {lo}");
        assert!((hi - prices.targets[[i, 1]]).abs() <= 1e-6, "row {i} upper {hi}");
    }

    // Same split of the same snapshots for both networks.
    let (ptrain, ptest) = split_dataset(&prices, 0.2, 3).unwrap();
    let (strain, stest) = split_dataset(&strats, 0.2, 3).unwrap();
    assert_eq!(ptest.features, stest.features);

    let tc = TrainConfig {
        batch_size: 64,
        max_epochs: 200,
        patience: 25,
        seed: 1,
        ..TrainConfig::default()
    };
    let pnet = MlpNetwork::init(&[62, 64, 64, 2], 1).unwrap();
    let (pmodel, pscaler, _) = fit(&pnet, &ptrain.features, &ptrain.targets, &tc).unwrap();
    let snet = MlpNetwork::init(&[62, 64, 64, 44], 1).unwrap();
    let (smodel, sscaler, _) = fit(&snet, &strain.features, &strain.targets, &tc).unwrap();

    let ppred = predict(&pmodel, &pscaler, &ptest.features).unwrap();
    let norms = normalizers(&ptest).unwrap();
    let direct = evaluate(&ppred, &ptest.targets, &norms).unwrap();

    let spred = predict(&smodel, &sscaler, &stest.features).unwrap();
    let mut derived = Array2::zeros((stest.rows(), 2));
    for i in 0..stest.rows() {
        let row = stest.features.row(i);
        let snapshot = snapshot_from_features(row.as_slice().unwrap(), 20);
        let p = spred.row(i);
        let p = p.as_slice().unwrap();
        let lower = strategy_from_flat(&p[..width], &snapshot).unwrap();
        let upper = strategy_from_flat(&p[width..], &snapshot).unwrap();
        derived[[i, 0]] = strategy_revenue(&lower, &snapshot).unwrap();
        derived[[i, 1]] = strategy_cost(&upper, &snapshot).unwrap();
    }
    let via_strategy = evaluate(&derived, &ptest.targets, &norms).unwrap();

    let direct_score: f64 = direct.relative_mae.iter().sum::<f64>() / 2.0;
    let strategy_score: f64 = via_strategy.relative_mae.iter().sum::<f64>() / 2.0;
    assert!(
        direct_score < strategy_score,
        "direct {direct_score} vs via-strategy {strategy_score}"
    );
    report(
        "8 (strategy consistency)",
        true,
        &format!(
            "labels reprice to 1e-6; relative MAE direct {direct_score:.2e} < via strategies {strategy_score:.2e}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Invariant suites: quantization, distances, and bound monotonicity.

#[test]
fn criterion_9_invariants() {
    // Quantization preserves the mean and the convex order of the
    // generator families that guarantee it at the continuous level.
    let n = 20;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + trial);
        let (d1, d2) = gen_marginal_pair((trial % 3) as usize, &mut rng);
        let q1 = u_quantize(&d1, n).unwrap();
        let q2 = u_quantize(&d2, n).unwrap();
        assert!(check_convex_order(&q1, &q2), "trial {trial}: convex order lost");
        for (d, q) in [(&d1, &q1), (&d2, &q2)] {
            let err = (q.mean() - d.mean()).abs();
            assert!(err <= 1e-8 * (1.0 + d.mean().abs()), "trial {trial}: mean drift {err:.2e}");
        }
    }

    // Wasserstein-1 against closed forms.
    let unit = u_quantize(&Distribution::Uniform { a: 0.0, b: 1.0 }, 16).unwrap();
    let shifted = DiscreteMeasure::new(
        unit.atoms().iter().map(|a| a + 0.3).collect(),
        unit.weights().to_vec(),
    )
    .unwrap();
    assert!((wasserstein1(&unit, &shifted) - 0.3).abs() < 1e-12);
    let u2 = u_quantize(&Distribution::Uniform { a: 0.0, b: 2.0 }, 16).unwrap();
    assert!((wasserstein1(&unit, &u2) - 0.5).abs() < 1e-12);
    assert!((wasserstein1(&DiscreteMeasure::dirac(1.0), &DiscreteMeasure::dirac(4.5)) - 3.5).abs() < 1e-12);
    // Quantizations approach a fine reference as the atom count grows.
    let ln = Distribution::LogNormal { mu: 0.1, sigma: 0.4 };
    let reference = u_quantize(&ln, 160).unwrap();
    let mut last = f64::INFINITY;
    for n in [5, 10, 20, 40, 80] {
        let w = wasserstein1(&u_quantize(&ln, n).unwrap(), &reference);
        assert!(w <= last + 1e-12, "W1 to reference increased at n={n}");
        last = w;
    }

    // Bound interval nests inward as the budget grows ...
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let snapshot = gen_market_snapshot(&mut rng, 1, 5, 0.01).unwrap();
    let spec = PayoffSpec::Call { asset_index: 0, strike: 1.1 * snapshot.spots[0] };
    let mut last: Option<(f64, f64)> = None;
    for budget in [1.0, 2.0, 5.0, 1000.0] {
        let cfg = PricerConfig { kappa: 0.0, cap: 1000.0, budget, grid_per_axis: 32 };
        let b = price_bounds(&snapshot, &spec, &cfg).unwrap();
        if let Some((plo, phi)) = last {
            assert!(b.lower >= plo - 1e-9, "lower bound fell as budget grew");
            assert!(b.upper <= phi + 1e-9, "upper bound rose as budget grew");
        }
        last = Some((b.lower, b.upper));
    }

    // ... and widens outward as nested grids refine.
    let mut last: Option<(f64, f64)> = None;
    for grid in [9, 17, 33, 65] {
        let cfg = PricerConfig { kappa: 0.0, cap: 1000.0, budget: 1000.0, grid_per_axis: grid };
        let b = price_bounds(&snapshot, &spec, &cfg).unwrap();
        if let Some((plo, phi)) = last {
            assert!(b.lower <= plo + 1e-9, "lower bound rose under refinement");
            assert!(b.upper >= phi - 1e-9, "upper bound fell under refinement");
        }
        last = Some((b.lower, b.upper));
    }

    // Variance-pinned transport bounds nest inside the unconstrained ones.
    let m1 = u_quantize(&Distribution::LogNormal { mu: 100f64.ln() - 0.02, sigma: 0.2 }, 15).unwrap();
    let m2 = u_quantize(&Distribution::LogNormal { mu: 100f64.ln() - 0.045, sigma: 0.3 }, 15).unwrap();
    let payoff = MotPayoff::AbsDiff;
    let (lo, hi) = mot_bounds(&m1, &m2, &payoff, &MotConstraints::default()).unwrap();
    let (vmin, vmax) = variance_range(&m1, &m2).unwrap();
    assert!(vmax > vmin);
    for lambda in [0.25, 0.5, 0.75] {
        let v = vmin + lambda * (vmax - vmin);
        let (clo, chi) =
            mot_bounds(&m1, &m2, &payoff, &MotConstraints { variance: Some(v) }).unwrap();
        assert!(clo >= lo - 1e-7 && chi <= hi + 1e-7,
            "variance-pinned interval ({clo}, {chi}) escapes ({lo}, {hi})");
    }
    assert!(mot_bounds(&m1, &m2, &payoff, &MotConstraints { variance: Some(2.0 * vmax + 1.0) })
        .is_err());

    report("9 (invariant suites)", true, "quantization, distances, monotonicity");
}
