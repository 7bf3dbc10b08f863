//! Multivariate series container, delay-coordinate embedding and
//! standardization.
//!
//! Everything downstream (estimators, surrogates, the harness) works on a
//! [`Dataset`]: an n x K matrix of finite samples with one label per column.
//! [`embed`] turns selected columns into the aligned delay-coordinate blocks
//! consumed by the neighbor estimators. Row `i` of every block refers to the
//! same time index, and the target vector holds the response value `h` steps
//! ahead of that index, so all entropy terms of a measure share their time
//! alignment by construction.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{rng_from, stream};

/// A length-n, K-variable time series with per-variable labels.
///
/// Immutable after construction; all samples are finite and column labels
/// are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Array2<f64>,
    labels: Vec<String>,
}

impl Dataset {
    pub fn new(values: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, k) = values.dim();
        if n < 1 {
            return Err(Error::InvalidParameter("dataset must have n >= 1 rows".into()));
        }
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "dataset must have K >= 2 variables, got {k}"
            )));
        }
        if labels.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {k} columns",
                labels.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::InvalidParameter(format!("duplicate label '{a}'")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "dataset contains non-finite samples".into(),
            ));
        }
        Ok(Self { values, labels })
    }

    /// Builds a dataset from equal-length columns.
    pub fn from_columns(columns: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch("columns differ in length".into()));
        }
        let k = columns.len();
        let mut values = Array2::zeros((n, k));
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values[[i, j]] = v;
            }
        }
        Self::new(values, labels)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> Result<ArrayView1<'_, f64>> {
        if j >= self.k() {
            return Err(Error::IndexOutOfRange { index: j, count: self.k() });
        }
        Ok(self.values.column(j))
    }

    pub(crate) fn column_vec(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }

    /// Per-column sample mean and sample standard deviation (n-1 denominator).
    pub fn column_stats(&self, j: usize) -> Result<(f64, f64)> {
        let col = self.column(j)?;
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = if col.len() > 1 {
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok((mean, var.sqrt()))
    }

    /// Returns a copy with every column transformed to sample mean 0 and
    /// sample standard deviation 1.
    pub fn standardize(&self) -> Result<Dataset> {
        let mut values = self.values.clone();
        for j in 0..self.k() {
            let (mean, sd) = self.column_stats(j)?;
            if sd == 0.0 {
                return Err(Error::ZeroVariance { column: self.labels[j].clone() });
            }
            for v in values.column_mut(j) {
                *v = (*v - mean) / sd;
            }
        }
        Ok(Dataset { values, labels: self.labels.clone() })
    }

    /// Returns a copy with uniform noise of amplitude
    /// `rel_amplitude * sd(column)` added to each sample.
    ///
    /// Intended for integer-valued or heavily tied inputs where the
    /// continuous-distribution assumption of the neighbor estimators breaks;
    /// `1e-10` is a reasonable amplitude.
    pub fn with_jitter(&self, rel_amplitude: f64, seed: u64) -> Result<Dataset> {
        let mut rng = rng_from(seed, &[stream::JITTER]);
        let mut values = self.values.clone();
        for j in 0..self.k() {
            let (_, sd) = self.column_stats(j)?;
            let amp = rel_amplitude * if sd > 0.0 { sd } else { 1.0 };
            for v in values.column_mut(j) {
                *v += rng.gen_range(-amp..=amp);
            }
        }
        Dataset::new(values, self.labels.clone())
    }

    /// Reads a dataset from CSV: header row carries the labels, one row per
    /// time step. Missing or non-numeric cells are rejected.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let labels: Vec<String> =
            rdr.headers()?.iter().map(|h| h.to_string()).collect();
        let k = labels.len();
        let mut rows: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has {} cells, expected {k}",
                    line + 2,
                    rec.len()
                )));
            }
            for (j, cell) in rec.iter().enumerate() {
                if cell.is_empty() {
                    return Err(Error::InvalidParameter(format!(
                        "missing cell at row {}, column '{}'",
                        line + 2,
                        labels[j]
                    )));
                }
                let v: f64 = cell.parse().map_err(|_| {
                    Error::InvalidParameter(format!(
                        "non-numeric cell '{}' at row {}, column '{}'",
                        cell,
                        line + 2,
                        labels[j]
                    ))
                })?;
                rows.push(v);
            }
            n += 1;
        }
        let values = Array2::from_shape_vec((n, k), rows)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Self::new(values, labels)
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.labels)?;
        for i in 0..self.n() {
            let row: Vec<String> =
                (0..self.k()).map(|j| format!("{}", self.values[[i, j]])).collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(std::io::BufWriter::new(file))
    }
}

/// Hyperparameters of one causality estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationParams {
    /// Embedding dimension.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Delay time between embedding coordinates.
    #[serde(default = "default_tau")]
    pub tau: usize,
    /// Prediction horizon.
    #[serde(default = "default_h")]
    pub h: usize,
    /// Neighbor count of the KNN estimator.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Conditioning-set size for the connectivity variants (0 = all).
    #[serde(default)]
    pub nc: usize,
    /// Significance level of the surrogate test.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Number of time-shifted surrogates.
    #[serde(default = "default_surrogates")]
    pub n_surrogates: usize,
}

fn default_m() -> usize {
    2
}
fn default_tau() -> usize {
    1
}
fn default_h() -> usize {
    1
}
fn default_k() -> usize {
    10
}
fn default_alpha() -> f64 {
    0.05
}
fn default_surrogates() -> usize {
    100
}

impl Default for EstimationParams {
    fn default() -> Self {
        Self {
            m: default_m(),
            tau: default_tau(),
            h: default_h(),
            k: default_k(),
            nc: 0,
            alpha: default_alpha(),
            n_surrogates: default_surrogates(),
        }
    }
}

impl EstimationParams {
    pub fn with_m(m: usize) -> Self {
        Self { m, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.tau == 0 || self.h == 0 || self.k == 0 {
            return Err(Error::InvalidParameter(
                "m, tau, h and k must all be positive".into(),
            ));
        }
        if self.n_surrogates == 0 {
            return Err(Error::InvalidParameter("n_surrogates must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Effective sample count `n - (m-1)*tau - h`, checked against the
    /// neighbor count: the estimators need `n_eff > k + 1`.
    pub fn effective_samples(&self, n: usize) -> Result<usize> {
        self.validate()?;
        let used = (self.m - 1) * self.tau + self.h;
        let n_eff = n.saturating_sub(used);
        if n_eff <= self.k + 1 {
            return Err(Error::SeriesTooShort { n_eff, min: self.k + 1 });
        }
        Ok(n_eff)
    }
}

/// Partition of the embedded columns into roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleSplit {
    pub driver: usize,
    pub response: usize,
    pub conditioning: Vec<usize>,
}

/// Aligned delay-coordinate view of a dataset.
///
/// All blocks have `n_eff` rows; row `i` of every block refers to time index
/// `first_t + i` and `target[i]` is the response sample at `first_t + i + h`.
/// Block columns are ordered `[x_t, x_{t-tau}, ..., x_{t-(m-1)tau}]` per
/// variable.
#[derive(Debug, Clone)]
pub struct EmbeddedView {
    pub target: Vec<f64>,
    pub driver: Array2<f64>,
    pub response: Array2<f64>,
    pub conditioning: Array2<f64>,
    pub first_t: usize,
}

impl EmbeddedView {
    pub fn rows(&self) -> usize {
        self.target.len()
    }
}

/// Lag block of a single series: `n_eff` rows, `m` columns, aligned like
/// [`embed`].
pub fn lag_matrix(series: &[f64], params: &EstimationParams) -> Result<Array2<f64>> {
    let n = series.len();
    let n_eff = params.effective_samples(n)?;
    let first_t = (params.m - 1) * params.tau;
    let mut block = Array2::zeros((n_eff, params.m));
    for i in 0..n_eff {
        let t = first_t + i;
        for lag in 0..params.m {
            block[[i, lag]] = series[t - lag * params.tau];
        }
    }
    Ok(block)
}

fn multi_lag_matrix(
    data: &Dataset,
    vars: &[usize],
    params: &EstimationParams,
    n_eff: usize,
) -> Result<Array2<f64>> {
    let mut block = Array2::zeros((n_eff, params.m * vars.len()));
    for (b, &v) in vars.iter().enumerate() {
        let col = data.column(v)?;
        let first_t = (params.m - 1) * params.tau;
        for i in 0..n_eff {
            let t = first_t + i;
            for lag in 0..params.m {
                block[[i, b * params.m + lag]] = col[t - lag * params.tau];
            }
        }
    }
    Ok(block)
}

/// Embeds the selected variables into aligned delay-coordinate blocks.
pub fn embed(data: &Dataset, roles: &RoleSplit, params: &EstimationParams) -> Result<EmbeddedView> {
    let n = data.n();
    let n_eff = params.effective_samples(n)?;
    for &v in [roles.driver, roles.response]
        .iter()
        .chain(roles.conditioning.iter())
    {
        if v >= data.k() {
            return Err(Error::IndexOutOfRange { index: v, count: data.k() });
        }
    }
    let first_t = (params.m - 1) * params.tau;
    let response_col = data.column(roles.response)?;
    let target: Vec<f64> = (0..n_eff).map(|i| response_col[first_t + i + params.h]).collect();
    let driver = multi_lag_matrix(data, &[roles.driver], params, n_eff)?;
    let response = multi_lag_matrix(data, &[roles.response], params, n_eff)?;
    let conditioning = multi_lag_matrix(data, &roles.conditioning, params, n_eff)?;
    Ok(EmbeddedView { target, driver, response, conditioning, first_t })
}
