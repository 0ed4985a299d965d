//! Command-line front end: quantization, transport and hedging bounds,
//! dataset generation, training, prediction, and evaluation.
//!
//! Exit codes: 0 success, 1 diagnostics (bad flags, unreadable files,
//! validation failures), 2 arbitrage detected in pricing inputs.

use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use pricebounds::error::Error;
use pricebounds::hedge::{check_no_arbitrage, price_bounds, SideStatus};
use pricebounds::io::{
    evaluate, load_dataset, load_measure, load_model, load_snapshot, normalizers, save_dataset,
    save_measure, save_model, save_per_sample_errors,
};
use pricebounds::mlp::{fit, predict, MlpNetwork, TrainConfig};
use pricebounds::model::{PayoffSpec, PricerConfig};
use pricebounds::mot::{
    coupling_lp, mot_bounds, u_quantize, Distribution, MotConstraints, MotPayoff,
};
use pricebounds::pipeline::{
    gen_hedge_dataset, gen_mot_dataset, split_dataset, GenConfig, LabelMode, PayoffFamily,
};
use pricebounds::Result;

#[derive(Parser)]
#[command(name = "pricebounds", about = "Model-free derivative price bounds", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discretize a marginal law into an equal-weight atom list
    Quantize(QuantizeArgs),
    /// Martingale-transport pricing
    Mot {
        #[command(subcommand)]
        command: MotCommand,
    },
    /// Hedging-based pricing on a market snapshot
    Hedge {
        #[command(subcommand)]
        command: HedgeCommand,
    },
    /// Dataset generation
    Gen {
        #[command(subcommand)]
        command: GenCommand,
    },
    /// Train a network on a labeled dataset
    Train(TrainArgs),
    /// Run a saved model on a dataset's features
    Predict(PredictArgs),
    /// Score a saved model against a labeled dataset
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DistKind {
    Lognormal,
    Uniform,
    Triangular,
    DiscreteUniform,
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long, value_enum)]
    dist: DistKind,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    lower: Option<f64>,
    #[arg(long)]
    mode: Option<f64>,
    #[arg(long)]
    upper: Option<f64>,
    /// comma-separated support points for discrete-uniform
    #[arg(long)]
    points: Option<String>,
    #[arg(short = 'N', long = "atoms")]
    atoms: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum MotCommand {
    /// Lower and upper bound over martingale couplings of two measures
    Price(MotPriceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MotPayoffKind {
    AbsDiff,
    CallT2,
    PutT2,
    SpreadCall,
}

#[derive(Args)]
struct MotPriceArgs {
    #[arg(long)]
    m1: PathBuf,
    #[arg(long)]
    m2: PathBuf,
    #[arg(long, value_enum, default_value = "abs-diff")]
    payoff: MotPayoffKind,
    #[arg(long)]
    strike: Option<f64>,
    /// pin the variance of S2/S1 to this level
    #[arg(long)]
    variance: Option<f64>,
    /// write the minimization LP to this CSV for inspection
    #[arg(long)]
    dump_lp: Option<PathBuf>,
}

#[derive(Subcommand)]
enum HedgeCommand {
    /// Price bounds for a payoff against quoted options
    Price(HedgePriceArgs),
    /// Check a snapshot for arbitrage
    Check(HedgeCheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PayoffKind {
    Call,
    Basket,
}

#[derive(Args)]
struct HedgePriceArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, value_enum)]
    payoff: PayoffKind,
    #[arg(long, default_value_t = 0)]
    asset: usize,
    /// comma-separated basket weights
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    strike: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    /// also print both optimal strategies as JSON
    #[arg(long)]
    emit_strategy: bool,
}

#[derive(Args)]
struct HedgeCheckArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum GenCommand {
    /// Marginal pairs labeled with |S2-S1| transport bounds
    MotData(GenMotArgs),
    /// Market snapshots labeled with hedging bounds or strategies
    HedgeData(GenHedgeArgs),
}

#[derive(Args)]
struct GenMotArgs {
    #[arg(long)]
    samples: usize,
    #[arg(short = 'N', long = "atoms", default_value_t = 20)]
    atoms: usize,
    #[arg(long)]
    variance: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeKind {
    Prices,
    Strategies,
}

#[derive(Args)]
struct GenHedgeArgs {
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    assets: usize,
    #[arg(long, default_value_t = 20)]
    quotes: usize,
    #[arg(long, value_enum, default_value = "prices")]
    mode: ModeKind,
    #[arg(long, value_enum, default_value = "call")]
    payoff: PayoffKind,
    #[arg(long, default_value_t = 0.005)]
    spread: f64,
    #[arg(long, default_value_t = 5)]
    n_subset: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// hidden layer sizes, comma-separated
    #[arg(long, default_value = "128,128,128")]
    arch: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// fraction held out before training for the test report
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// write per-sample absolute errors to this CSV
    #[arg(long)]
    errors: Option<PathBuf>,
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("cannot parse {what} entry '{p}'")))
        })
        .collect()
}

fn run_quantize(args: &QuantizeArgs) -> Result<()> {
    let need = |opt: Option<f64>, name: &str| {
        opt.ok_or_else(|| Error::Invalid(format!("--{name} is required for this distribution")))
    };
    let dist = match args.dist {
        DistKind::Lognormal => Distribution::LogNormal {
            mu: need(args.mu, "mu")?,
            sigma: need(args.sigma, "sigma")?,
        },
        DistKind::Uniform => {
            Distribution::Uniform { a: need(args.a, "a")?, b: need(args.b, "b")? }
        }
        DistKind::Triangular => Distribution::Triangular {
            lower: need(args.lower, "lower")?,
            mode: need(args.mode, "mode")?,
            upper: need(args.upper, "upper")?,
        },
        DistKind::DiscreteUniform => {
            let points = args
                .points
                .as_deref()
                .ok_or_else(|| Error::Invalid("--points is required".into()))?;
            Distribution::DiscreteUniform { points: parse_list(points, "point")? }
        }
    };
    let measure = u_quantize(&dist, args.atoms)?;
    save_measure(&args.out, &measure)?;
    println!("wrote {} atoms to {}", measure.len(), args.out.display());
    Ok(())
}

fn run_mot_price(args: &MotPriceArgs) -> Result<()> {
    let m1 = load_measure(&args.m1)?;
    let m2 = load_measure(&args.m2)?;
    let payoff = match args.payoff {
        MotPayoffKind::AbsDiff => MotPayoff::AbsDiff,
        MotPayoffKind::CallT2 => MotPayoff::CallT2 {
            strike: args.strike.ok_or_else(|| Error::Invalid("--strike required".into()))?,
        },
        MotPayoffKind::PutT2 => MotPayoff::PutT2 {
            strike: args.strike.ok_or_else(|| Error::Invalid("--strike required".into()))?,
        },
        MotPayoffKind::SpreadCall => MotPayoff::SpreadCall {
            strike: args.strike.ok_or_else(|| Error::Invalid("--strike required".into()))?,
        },
    };
    let constraints = MotConstraints { variance: args.variance };
    if let Some(path) = &args.dump_lp {
        let objective: Vec<f64> = m1
            .atoms()
            .iter()
            .flat_map(|&x| m2.atoms().iter().map(move |&y| payoff.evaluate(x, y)))
            .collect();
        let lp = coupling_lp(&m1, &m2, objective, &constraints, pricebounds::lp::Sense::Min)?;
        let mut file = File::create(path)?;
        lp.dump_csv(&mut file)?;
    }
    let (lower, upper) = mot_bounds(&m1, &m2, &payoff, &constraints)?;
    println!("{lower},{upper}");
    Ok(())
}

fn pricer_config(
    cap: Option<f64>,
    budget: Option<f64>,
    grid: Option<usize>,
    kappa: f64,
) -> PricerConfig {
    let mut config = PricerConfig { kappa, ..Default::default() };
    if let Some(cap) = cap {
        config.cap = cap;
    }
    if let Some(budget) = budget {
        config.budget = budget;
    }
    if let Some(grid) = grid {
        config.grid_per_axis = grid;
    }
    config
}

fn run_hedge_price(args: &HedgePriceArgs) -> Result<()> {
    let snapshot = load_snapshot(&args.snapshot)?;
    let spec = match args.payoff {
        PayoffKind::Call => PayoffSpec::Call { asset_index: args.asset, strike: args.strike },
        PayoffKind::Basket => {
            let weights = args
                .weights
                .as_deref()
                .ok_or_else(|| Error::Invalid("--weights required for basket".into()))?;
            PayoffSpec::BasketCall { weights: parse_list(weights, "weight")?, strike: args.strike }
        }
    };
    let config = pricer_config(args.cap, args.budget, args.grid, args.kappa);
    let report = check_no_arbitrage(&snapshot, &config)?;
    if !report.arbitrage_free {
        return Err(Error::Arbitrage(format!(
            "snapshot admits arbitrage (zero-payoff bounds {}, {})",
            report.zero_payoff_lower, report.zero_payoff_upper
        )));
    }
    let bounds = price_bounds(&snapshot, &spec, &config)?;
    if bounds.lower_status != SideStatus::Optimal || bounds.upper_status != SideStatus::Optimal {
        return Err(Error::Numerical(format!(
            "pricing did not reach optimality: {:?}/{:?}",
            bounds.lower_status, bounds.upper_status
        )));
    }
    println!("{},{}", bounds.lower, bounds.upper);
    if args.emit_strategy {
        let both = serde_json::json!({
            "lower": bounds.lower_strategy,
            "upper": bounds.upper_strategy,
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&both)
                .map_err(|e| Error::Format(format!("cannot serialize strategies: {e}")))?
        );
    }
    Ok(())
}

fn run_hedge_check(args: &HedgeCheckArgs) -> Result<()> {
    let snapshot = load_snapshot(&args.snapshot)?;
    let config = pricer_config(args.cap, args.budget, args.grid, 0.0);
    let report = check_no_arbitrage(&snapshot, &config)?;
    if report.arbitrage_free {
        println!("arbitrage-free");
        Ok(())
    } else {
        if let Some(strategy) = &report.exploit {
            eprintln!(
                "exploiting strategy: {}",
                serde_json::to_string(strategy)
                    .map_err(|e| Error::Format(format!("cannot serialize strategy: {e}")))?
            );
        }
        Err(Error::Arbitrage(format!(
            "zero-payoff bounds ({}, {})",
            report.zero_payoff_lower, report.zero_payoff_upper
        )))
    }
}

fn run_gen_mot(args: &GenMotArgs) -> Result<()> {
    let config = GenConfig {
        samples: args.samples,
        atoms: args.atoms,
        variance: args.variance,
        seed: args.seed,
        ..Default::default()
    };
    let dataset = gen_mot_dataset(&config)?;
    save_dataset(&args.out, &dataset)?;
    println!("wrote {} samples to {}", dataset.rows(), args.out.display());
    Ok(())
}

fn run_gen_hedge(args: &GenHedgeArgs) -> Result<()> {
    let config = GenConfig {
        samples: args.samples,
        n_subset: args.n_subset,
        seed: args.seed,
        mode: match args.mode {
            ModeKind::Prices => LabelMode::Prices,
            ModeKind::Strategies => LabelMode::Strategies,
        },
        family: match args.payoff {
            PayoffKind::Call => PayoffFamily::Call,
            PayoffKind::Basket => PayoffFamily::Basket,
        },
        assets: args.assets,
        quotes_per_asset: args.quotes,
        spread: args.spread,
        pricer: pricer_config(args.cap, args.budget, args.grid, 0.0),
        ..Default::default()
    };
    let dataset = gen_hedge_dataset(&config)?;
    save_dataset(&args.out, &dataset)?;
    println!("wrote {} samples to {}", dataset.rows(), args.out.display());
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let (train, test) = split_dataset(&dataset, args.test_fraction, args.seed)?;
    let hidden: Vec<usize> = args
        .arch
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad layer size '{p}'")))
        })
        .collect::<Result<_>>()?;
    let mut dims = vec![train.features.ncols()];
    dims.extend(hidden);
    dims.push(train.targets.ncols());
    let net = MlpNetwork::init(&dims, args.seed)?;
    let config = TrainConfig {
        batch_size: args.batch_size,
        max_epochs: args.max_epochs,
        patience: args.patience,
        validation_fraction: args.val_fraction,
        learning_rate: args.lr,
        seed: args.seed,
    };
    let (model, scaler, history) = fit(&net, &train.features, &train.targets, &config)?;
    let predictions = predict(&model, &scaler, &test.features)?;
    let report = evaluate(&predictions, &test.targets, &normalizers(&test)?)?;
    let meta = serde_json::json!({
        "layout": dataset.layout,
        "dims": dims,
        "seed": args.seed,
        "best_epoch": history.best_epoch,
        "val_mse": history.val_mse[history.best_epoch],
        "test_mae": report.mae,
        "test_relative_mae": report.relative_mae,
    });
    save_model(&args.out, &model, &scaler, meta)?;
    println!(
        "trained {} epochs (best {}), val mse {:.6e}, test mae {:?}",
        history.val_mse.len(),
        history.best_epoch,
        history.val_mse[history.best_epoch],
        report.mae
    );
    Ok(())
}

fn write_predictions(path: &PathBuf, predictions: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..predictions.ncols()).map(|j| format!("pred_{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in predictions.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn run_predict(args: &PredictArgs) -> Result<()> {
    let (net, scaler, _) = load_model(&args.model)?;
    let dataset = load_dataset(&args.data)?;
    let predictions = predict(&net, &scaler, &dataset.features)?;
    match &args.out {
        Some(path) => {
            write_predictions(path, &predictions)?;
            println!("wrote {} predictions to {}", predictions.nrows(), path.display());
        }
        None => {
            for row in predictions.rows() {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                println!("{}", cells.join(","));
            }
        }
    }
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let (net, scaler, _) = load_model(&args.model)?;
    let dataset = load_dataset(&args.data)?;
    let predictions = predict(&net, &scaler, &dataset.features)?;
    let report = evaluate(&predictions, &dataset.targets, &normalizers(&dataset)?)?;
    println!("mae: {:?}", report.mae);
    println!("relative_mae: {:?}", report.relative_mae);
    if let Some(path) = &args.errors {
        save_per_sample_errors(path, &report)?;
        println!("wrote per-sample errors to {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Quantize(args) => run_quantize(args),
        Command::Mot { command: MotCommand::Price(args) } => run_mot_price(args),
        Command::Hedge { command } => match command {
            HedgeCommand::Price(args) => run_hedge_price(args),
            HedgeCommand::Check(args) => run_hedge_check(args),
        },
        Command::Gen { command } => match command {
            GenCommand::MotData(args) => run_gen_mot(args),
            GenCommand::HedgeData(args) => run_gen_hedge(args),
        },
        Command::Train(args) => run_train(args),
        Command::Predict(args) => run_predict(args),
        Command::Eval(args) => run_eval(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Arbitrage(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
