//! File formats and evaluation reports.
//!
//! Floats in CSV files are written in scientific notation with 17
//! significant digits, so every value round-trips bit-exactly. Model
//! files are versioned JSON.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::mlp::{MlpNetwork, Scaler};
use crate::model::{MarketSnapshot, OptionKind, OptionQuote};
use crate::mot::DiscreteMeasure;
use crate::pipeline::Dataset;

pub const MODEL_VERSION: u32 = 1;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("cannot parse {what} from '{s}'")))
}

// ---------------------------------------------------------------- snapshots

pub fn load_snapshot_json(path: &Path) -> Result<MarketSnapshot> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad snapshot JSON: {e}")))
}

pub fn save_snapshot_json(path: &Path, snapshot: &MarketSnapshot) -> Result<()> {
    let text = serde_json::to_string_pretty(snapshot)
        .map_err(|e| Error::Format(format!("cannot serialize snapshot: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// First line `spots,<s1>,...`; then a header `asset,kind,strike,bid,ask`
/// followed by one quote per line.
pub fn load_snapshot_csv(path: &Path) -> Result<MarketSnapshot> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let spots_line = lines.next().ok_or_else(|| Error::Format("empty snapshot file".into()))?;
    let mut parts = spots_line.split(',');
    if parts.next().map(str::trim) != Some("spots") {
        return Err(Error::Format("snapshot CSV must start with a spots row".into()));
    }
    let spots: Vec<f64> =
        parts.map(|p| parse_f64(p, "spot")).collect::<Result<_>>()?;
    if spots.is_empty() {
        return Err(Error::Format("spots row has no entries".into()));
    }
    let header = lines.next().ok_or_else(|| Error::Format("missing quote header".into()))?;
    if header.trim() != "asset,kind,strike,bid,ask" {
        return Err(Error::Format(format!("unexpected quote header '{header}'")));
    }
    let mut chains = vec![Vec::new(); spots.len()];
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Format(format!("quote row needs 5 columns: '{line}'")));
        }
        let asset: usize = cols[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad asset index '{}'", cols[0])))?;
        if asset >= spots.len() {
            return Err(Error::Format(format!("asset index {asset} out of range")));
        }
        let kind = match cols[1].trim() {
            "call" => OptionKind::Call,
            "put" => OptionKind::Put,
            other => return Err(Error::Format(format!("unknown option kind '{other}'"))),
        };
        chains[asset].push(OptionQuote {
            kind,
            strike: parse_f64(cols[2], "strike")?,
            bid: parse_f64(cols[3], "bid")?,
            ask: parse_f64(cols[4], "ask")?,
        });
    }
    Ok(MarketSnapshot { spots, chains })
}

/// Dispatch on extension: `.json` is JSON, anything else the CSV layout.
pub fn load_snapshot(path: &Path) -> Result<MarketSnapshot> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        load_snapshot_json(path)
    } else {
        load_snapshot_csv(path)
    }
}

// ----------------------------------------------------------------- measures

/// Lines `atom,weight`; a missing weight column means equal weights.
pub fn load_measure(path: &Path) -> Result<DiscreteMeasure> {
    let text = fs::read_to_string(path)?;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let mut has_weights: Option<bool> = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let with_weight = match cols.len() {
            1 => false,
            2 => true,
            _ => return Err(Error::Format(format!("measure row needs 1 or 2 columns: '{line}'"))),
        };
        if *has_weights.get_or_insert(with_weight) != with_weight {
            return Err(Error::Format("mixed weighted and unweighted measure rows".into()));
        }
        atoms.push(parse_f64(cols[0], "atom")?);
        if with_weight {
            weights.push(parse_f64(cols[1], "weight")?);
        }
    }
    if atoms.is_empty() {
        return Err(Error::Format("measure file has no atoms".into()));
    }
    if weights.is_empty() {
        weights = vec![1.0 / atoms.len() as f64; atoms.len()];
    }
    DiscreteMeasure::new(atoms, weights)
}

pub fn save_measure(path: &Path, measure: &DiscreteMeasure) -> Result<()> {
    let mut out = String::new();
    for (a, w) in measure.atoms().iter().zip(measure.weights()) {
        out.push_str(&format!("{},{}\n", fmt(*a), fmt(*w)));
    }
    fs::write(path, out)?;
    Ok(())
}

// ----------------------------------------------------------------- datasets

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    dataset.validate()?;
    let mut out = format!(
        "layout={};seed={};feature_width={};target_width={}\n",
        dataset.layout,
        dataset.seed,
        dataset.features.ncols(),
        dataset.targets.ncols()
    );
    for i in 0..dataset.rows() {
        let row: Vec<String> = dataset
            .features
            .row(i)
            .iter()
            .chain(dataset.targets.row(i).iter())
            .map(|&v| fmt(v))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))?;
    let mut layout = None;
    let mut seed = None;
    let mut fw = None;
    let mut tw = None;
    for field in header.split(';') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field '{field}'")))?;
        match key {
            "layout" => layout = Some(value.to_string()),
            "seed" => {
                seed = Some(value.parse::<u64>().map_err(|_| {
                    Error::Format(format!("bad seed '{value}'"))
                })?)
            }
            "feature_width" => {
                fw = Some(value.parse::<usize>().map_err(|_| {
                    Error::Format(format!("bad feature width '{value}'"))
                })?)
            }
            "target_width" => {
                tw = Some(value.parse::<usize>().map_err(|_| {
                    Error::Format(format!("bad target width '{value}'"))
                })?)
            }
            other => return Err(Error::Format(format!("unknown header key '{other}'"))),
        }
    }
    let layout = layout.ok_or_else(|| Error::Format("header missing layout".into()))?;
    let seed = seed.ok_or_else(|| Error::Format("header missing seed".into()))?;
    let fw = fw.ok_or_else(|| Error::Format("header missing feature width".into()))?;
    let tw = tw.ok_or_else(|| Error::Format("header missing target width".into()))?;

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut rows = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|v| parse_f64(v, "dataset entry"))
            .collect::<Result<_>>()?;
        if values.len() != fw + tw {
            return Err(Error::Format(format!(
                "row {} has {} entries, expected {}",
                rows + 1,
                values.len(),
                fw + tw
            )));
        }
        features.extend_from_slice(&values[..fw]);
        targets.extend_from_slice(&values[fw..]);
        rows += 1;
    }
    let features = Array2::from_shape_vec((rows, fw), features)
        .map_err(|e| Error::Format(e.to_string()))?;
    let targets =
        Array2::from_shape_vec((rows, tw), targets).map_err(|e| Error::Format(e.to_string()))?;
    let ds = Dataset { features, targets, layout, seed };
    ds.validate()?;
    Ok(ds)
}

// ------------------------------------------------------------------- models

#[derive(Serialize, Deserialize)]
struct LayerFile {
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    dims: Vec<usize>,
    layers: Vec<LayerFile>,
    scaler: Scaler,
    meta: Value,
}

pub fn save_model(path: &Path, net: &MlpNetwork, scaler: &Scaler, meta: Value) -> Result<()> {
    let file = ModelFile {
        version: MODEL_VERSION,
        dims: net.dims.clone(),
        layers: net
            .weights
            .iter()
            .zip(&net.biases)
            .map(|(w, b)| LayerFile { w: w.iter().cloned().collect(), b: b.to_vec() })
            .collect(),
        scaler: scaler.clone(),
        meta,
    };
    let text = serde_json::to_string(&file)
        .map_err(|e| Error::Format(format!("cannot serialize model: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(MlpNetwork, Scaler, Value)> {
    let text = fs::read_to_string(path)?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad model file: {e}")))?;
    if file.version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {} (this build reads version {MODEL_VERSION})",
            file.version
        )));
    }
    if file.dims.len() < 2 || file.layers.len() != file.dims.len() - 1 {
        return Err(Error::Format("model layer count does not match dims".into()));
    }
    let mut weights = Vec::with_capacity(file.layers.len());
    let mut biases = Vec::with_capacity(file.layers.len());
    for (i, layer) in file.layers.iter().enumerate() {
        let (rows, cols) = (file.dims[i + 1], file.dims[i]);
        if layer.w.len() != rows * cols || layer.b.len() != rows {
            return Err(Error::Format(format!("layer {i} has inconsistent shapes")));
        }
        weights.push(
            Array2::from_shape_vec((rows, cols), layer.w.clone())
                .map_err(|e| Error::Format(e.to_string()))?,
        );
        biases.push(ndarray::Array1::from_vec(layer.b.clone()));
    }
    if file.scaler.min.len() != file.dims[0] || file.scaler.max.len() != file.dims[0] {
        return Err(Error::Format("scaler width does not match input layer".into()));
    }
    let net = MlpNetwork { dims: file.dims, weights, biases };
    if net.weights.iter().flat_map(|w| w.iter()).any(|v| !v.is_finite())
        || net.biases.iter().flat_map(|b| b.iter()).any(|v| !v.is_finite())
    {
        return Err(Error::Format("model contains non-finite parameters".into()));
    }
    Ok((net, file.scaler, file.meta))
}

// --------------------------------------------------------------- evaluation

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// mean absolute error per target column
    pub mae: Vec<f64>,
    /// MAE of predictions and targets divided by the per-sample normalizer
    pub relative_mae: Vec<f64>,
    /// per row: normalizer, then the absolute error per target column
    pub per_sample_errors: Vec<Vec<f64>>,
}

pub fn evaluate(
    predictions: &Array2<f64>,
    targets: &Array2<f64>,
    normalizers: &[f64],
) -> Result<EvalReport> {
    let (n, m) = targets.dim();
    if predictions.dim() != (n, m) {
        return Err(Error::Dimension("prediction and target shapes differ".into()));
    }
    if normalizers.len() != n {
        return Err(Error::Dimension("one normalizer per sample required".into()));
    }
    if normalizers.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::Invalid("normalizers must be positive and finite".into()));
    }
    let mut mae = vec![0.0; m];
    let mut relative_mae = vec![0.0; m];
    let mut per_sample_errors = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(m + 1);
        row.push(normalizers[i]);
        for j in 0..m {
            let err = (predictions[[i, j]] - targets[[i, j]]).abs();
            mae[j] += err;
            relative_mae[j] += err / normalizers[i];
            row.push(err);
        }
        per_sample_errors.push(row);
    }
    for j in 0..m {
        mae[j] /= n as f64;
        relative_mae[j] /= n as f64;
    }
    Ok(EvalReport { mae, relative_mae, per_sample_errors })
}

/// Per-sample normalizers implied by a dataset's layout descriptor:
/// spot for single-name calls, the weighted spot sum for baskets, 1 for
/// transport datasets.
pub fn normalizers(dataset: &Dataset) -> Result<Vec<f64>> {
    let layout = &dataset.layout;
    if layout.starts_with("mot:") {
        return Ok(vec![1.0; dataset.rows()]);
    }
    if !layout.starts_with("hedge:") {
        return Err(Error::Format(format!("unknown dataset layout '{layout}'")));
    }
    let field = |key: &str| -> Result<&str> {
        layout
            .split(',')
            .find_map(|f| f.strip_prefix(&format!("{key}=")))
            .ok_or_else(|| Error::Format(format!("layout '{layout}' missing {key}")))
    };
    let assets: usize = field("assets")?
        .parse()
        .map_err(|_| Error::Format("bad asset count in layout".into()))?;
    let quotes: usize = field("quotes")?
        .parse()
        .map_err(|_| Error::Format("bad quote count in layout".into()))?;
    let family = field("family")?;
    let spot_offset = 3 * quotes * assets;
    let mut out = Vec::with_capacity(dataset.rows());
    for i in 0..dataset.rows() {
        let row = dataset.features.row(i);
        let spots = &row.as_slice().unwrap()[spot_offset..spot_offset + assets];
        let norm = match family {
            "call" => spots.iter().sum::<f64>() / assets as f64,
            "basket" => {
                let weights = &row.as_slice().unwrap()[spot_offset + assets..spot_offset + 2 * assets];
                weights.iter().zip(spots).map(|(w, s)| w * s).sum()
            }
            other => return Err(Error::Format(format!("unknown payoff family '{other}'"))),
        };
        out.push(norm);
    }
    Ok(out)
}

pub fn save_per_sample_errors(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = String::from("normalizer");
    for j in 0..report.mae.len() {
        out.push_str(&format!(",abs_error_{j}"));
    }
    out.push('\n');
    for row in &report.per_sample_errors {
        let cells: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
