//! Time-series ingestion, sliding windows and chronological splits.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const TIME_HEADERS: [&str; 4] = ["timestamp", "time", "date", "datetime"];

/// Node series on a regular time grid, rows are time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDataset {
    pub node_ids: Vec<String>,
    pub timestamps: Option<Vec<String>>,
    /// `values[t][i]`, gaps already filled.
    pub values: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub interval_minutes: f64,
    /// Cells filled by interpolation.
    pub imputed: usize,
}

impl SeriesDataset {
    /// Builds a dataset from complete rows and records per-column statistics.
    pub fn from_rows(node_ids: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if node_ids.is_empty() || values.is_empty() {
            return Err(Error::data("series needs at least one node and one time step"));
        }
        if let Some(t) = values.iter().position(|r| r.len() != node_ids.len()) {
            return Err(Error::shape(format!("row {t} has {} values for {} nodes", values[t].len(), node_ids.len())));
        }
        let n = values.len() as f64;
        let mean: Vec<f64> = (0..node_ids.len()).map(|i| values.iter().map(|r| r[i]).sum::<f64>() / n).collect();
        let std = (0..node_ids.len())
            .map(|i| {
                let sd = (values.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { node_ids, timestamps: None, values, mean, std, interval_minutes: 5.0, imputed: 0 })
    }

    pub fn nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn standardize(&self, node: usize, v: f64) -> f64 {
        (v - self.mean[node]) / self.std[node]
    }

    pub fn destandardize(&self, node: usize, z: f64) -> f64 {
        z * self.std[node] + self.mean[node]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = Vec::with_capacity(self.nodes() + 1);
        if self.timestamps.is_some() {
            header.push("timestamp".to_string());
        }
        header.extend(self.node_ids.iter().cloned());
        w.write_record(&header)?;
        for (t, row) in self.values.iter().enumerate() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if let Some(ts) = &self.timestamps {
                rec.push(ts[t].clone());
            }
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim().to_ascii_lowercase().as_str(), "" | "nan" | "na" | "null")
}

/// Reads a CSV whose header holds node ids, optionally preceded by a timestamp
/// column (empty header or one of `timestamp`, `time`, `date`, `datetime`).
/// Missing cells are filled by linear interpolation along their column.
pub fn ingest_csv<R: Read>(reader: R) -> Result<SeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let has_time = header.first().is_some_and(|h| h.is_empty() || TIME_HEADERS.contains(&h.to_ascii_lowercase().as_str()));
    let offset = usize::from(has_time);
    let node_ids: Vec<String> = header[offset..].to_vec();
    if node_ids.is_empty() {
        return Err(Error::data("CSV header names no nodes"));
    }
    let mut timestamps = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // 1-based data row numbers, header excluded
        let row = r + 1;
        if rec.len() != header.len() {
            return Err(Error::Parse { row, column: rec.len().min(header.len()), message: format!("expected {} fields, found {}", header.len(), rec.len()) });
        }
        if has_time {
            timestamps.push(rec[0].to_string());
        }
        let parsed = rec
            .iter()
            .skip(offset)
            .enumerate()
            .map(|(c, cell)| {
                if is_missing(cell) {
                    return Ok(None);
                }
                match cell.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(Error::Parse { row, column: c + offset + 1, message: format!("not a number: {cell:?}") }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(parsed);
    }
    if cells.is_empty() {
        return Err(Error::data("CSV has no data rows"));
    }
    let (values, imputed) = interpolate(&cells, &node_ids)?;
    let mut ds = SeriesDataset::from_rows(node_ids, values)?;
    ds.imputed = imputed;
    if has_time {
        ds.timestamps = Some(timestamps);
    }
    Ok(ds)
}

pub fn ingest_csv_path(path: &Path) -> Result<SeriesDataset> {
    ingest_csv(std::fs::File::open(path)?)
}

/// Linear interpolation per column; leading and trailing gaps take the nearest value.
fn interpolate(cells: &[Vec<Option<f64>>], node_ids: &[String]) -> Result<(Vec<Vec<f64>>, usize)> {
    let t_len = cells.len();
    let mut out = vec![vec![0.0; node_ids.len()]; t_len];
    let mut imputed = 0;
    for (c, id) in node_ids.iter().enumerate() {
        let known: Vec<usize> = (0..t_len).filter(|&t| cells[t][c].is_some()).collect();
        if known.is_empty() {
            return Err(Error::data(format!("column {id:?} has no values")));
        }
        for t in 0..t_len {
            out[t][c] = match cells[t][c] {
                Some(v) => v,
                None => {
                    imputed += 1;
                    let after = known.partition_point(|&k| k < t);
                    let v = |k: usize| cells[k][c].expect("known cell");
                    match (after.checked_sub(1).map(|i| known[i]), known.get(after).copied()) {
                        (Some(a), Some(b)) => v(a) + (v(b) - v(a)) * (t - a) as f64 / (b - a) as f64,
                        (Some(a), None) => v(a),
                        (None, Some(b)) => v(b),
                        (None, None) => unreachable!("column has a known value"),
                    }
                }
            };
        }
    }
    Ok((out, imputed))
}

/// Supervised samples: standardized lag windows and the standardized values `horizon` steps ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub window: usize,
    pub horizon: usize,
    /// Component `node * window + lag`, lag 0 being the latest observation.
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Latest observation per node in each window.
    pub fn last_observed(&self, nodes: usize) -> Vec<Vec<f64>> {
        self.xs.iter().map(|x| (0..nodes).map(|i| x[i * self.window]).collect()).collect()
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Samples {
        Samples { window: self.window, horizon: self.horizon, xs: self.xs[range.clone()].to_vec(), ys: self.ys[range].to_vec() }
    }
}

/// Names of the input components in [`Samples`] order.
pub fn component_names(ds: &SeriesDataset, window: usize) -> Vec<String> {
    ds.node_ids.iter().flat_map(|id| (0..window).map(move |l| format!("n{id}_lag{l}"))).collect()
}

/// `len - window - horizon + 1` samples.
pub fn make_samples(ds: &SeriesDataset, window: usize, horizon: usize) -> Result<Samples> {
    if window == 0 || horizon == 0 {
        return Err(Error::config("window and horizon must be >= 1"));
    }
    let needed = window + horizon;
    if ds.len() < needed {
        return Err(Error::data(format!("{} steps cannot hold a window of {window} and horizon {horizon}", ds.len())));
    }
    let count = ds.len() - needed + 1;
    let n = ds.nodes();
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    for s in 0..count {
        let last = s + window - 1;
        let mut x = vec![0.0; n * window];
        for i in 0..n {
            for l in 0..window {
                x[i * window + l] = ds.standardize(i, ds.values[last - l][i]);
            }
        }
        xs.push(x);
        ys.push((0..n).map(|i| ds.standardize(i, ds.values[last + horizon][i])).collect());
    }
    Ok(Samples { window, horizon, xs, ys })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Samples,
    pub val: Samples,
    pub test: Samples,
}

/// Chronological 60/20/20 split.
pub fn split(samples: &Samples) -> Result<Split> {
    let n = samples.len();
    if n < 5 {
        return Err(Error::data(format!("{n} samples; a split needs at least 5")));
    }
    let n_train = n * 6 / 10;
    let n_val = n * 2 / 10;
    Ok(Split {
        train: samples.slice(0..n_train),
        val: samples.slice(n_train..n_train + n_val),
        test: samples.slice(n_train + n_val..n),
    })
}

/// A daily sinusoid per node plus second-order autoregressive noise that also
/// feeds on the previous node's noise one step back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub nodes: usize,
    pub steps: usize,
    /// Steps per sinusoid period (288 five-minute steps = one day).
    pub period: usize,
    pub level: f64,
    pub amplitude: f64,
    pub ar1: f64,
    pub ar2: f64,
    pub coupling: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nodes: 15,
            steps: 2016,
            period: 288,
            level: 60.0,
            amplitude: 10.0,
            ar1: 0.6,
            ar2: 0.2,
            coupling: 0.1,
            noise_sd: 1.5,
            seed: 0,
        }
    }
}

pub fn synthetic_dataset(config: &SyntheticConfig) -> Result<SeriesDataset> {
    if config.nodes == 0 || config.steps == 0 || config.period == 0 {
        return Err(Error::config("synthetic series needs nodes, steps and period >= 1"));
    }
    if !(config.noise_sd >= 0.0) {
        return Err(Error::config(format!("noise_sd must be >= 0, got {}", config.noise_sd)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| Error::config(e.to_string()))?;
    let n = config.nodes;
    let phase: Vec<f64> = (0..n).map(|i| std::f64::consts::TAU * i as f64 / n as f64).collect();
    let mut e = vec![vec![0.0; n]; config.steps];
    let mut values = Vec::with_capacity(config.steps);
    for t in 0..config.steps {
        for i in 0..n {
            let prev = |k: usize, j: usize| if t >= k { e[t - k][j] } else { 0.0 };
            e[t][i] = config.ar1 * prev(1, i) + config.ar2 * prev(2, i) + config.coupling * prev(1, (i + n - 1) % n) + noise.sample(&mut rng);
        }
        let angle = std::f64::consts::TAU * t as f64 / config.period as f64;
        values.push((0..n).map(|i| config.level + config.amplitude * (angle + phase[i]).sin() + e[t][i]).collect());
    }
    let ids = (0..n).map(|i| i.to_string()).collect();
    let mut ds = SeriesDataset::from_rows(ids, values)?;
    ds.timestamps = Some((0..config.steps).map(|t| format!("{}", t as f64 * ds.interval_minutes)).collect());
    Ok(ds)
}
