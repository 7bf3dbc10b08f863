//! Monte Carlo experiment orchestration.
//!
//! A run sweeps realizations x lengths x ordered pairs x variants: each
//! (length, realization) cell simulates one dataset, standardizes it and
//! runs the surrogate test for every pair and variant. Cells are persisted
//! as individual CSV files as soon as they finish, so an interrupted run
//! resumes from what is on disk; because every random choice derives from
//! `(master seed, cell coordinates)`, a resumed run is bit-identical to an
//! uninterrupted one. Aggregation is a deterministic reduction over the cell
//! files, independent of completion order.
//!
//! The persisted record is a directory:
//!
//! ```text
//! out/
//!   config.json     resolved configuration + hash
//!   cells/          one CSV per (length, realization) + timing sidecars
//!   record.json     summaries, rejection rates, timings
//!   tables/         per-variant-class Sen/Spec/F1 tables (CSV, percent)
//!   networks/       DOT + JSON consensus networks per variant and length
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate, network_edges, score, to_dot, ConfusionSummary, CouplingMatrix,
};
use crate::forest::ForestConfig;
use crate::rng::{derive_seed, stream};
use crate::significance::surrogate_test_in;
use crate::simulators::{SystemId, SystemSpec};
use crate::timeseries::EstimationParams;
use crate::variants::{AnalysisContext, VariantId};

/// System template of an experiment; the per-realization seed is derived by
/// the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub id: SystemId,
    pub k: usize,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    crate::simulators::DEFAULT_BURN_IN
}

impl SystemConfig {
    pub fn spec_with_seed(&self, seed: u64) -> Result<SystemSpec> {
        SystemSpec::new(self.id, self.k, self.c, self.burn_in, seed)
    }
}

/// A fully resolved Monte Carlo experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub lengths: Vec<usize>,
    pub realizations: usize,
    pub variants: Vec<VariantId>,
    pub params: EstimationParams,
    #[serde(default = "default_assoc_perms")]
    pub assoc_permutations: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses all cores. Not part of the config hash.
    #[serde(default)]
    pub jobs: Option<usize>,
}

fn default_assoc_perms() -> usize {
    100
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() {
            return Err(Error::InvalidParameter("no time series lengths configured".into()));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidParameter("realizations must be >= 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidParameter("no variants configured".into()));
        }
        let mut keys: Vec<String> = self.variants.iter().map(|v| v.key()).collect();
        keys.sort();
        keys.dedup();
        if keys.len() != self.variants.len() {
            return Err(Error::InvalidParameter("duplicate variant entries".into()));
        }
        self.system.spec_with_seed(0)?;
        for &n in &self.lengths {
            self.params.effective_samples(n)?;
        }
        Ok(())
    }

    /// Hash over every result-affecting field (`output_dir` and `jobs` are
    /// excluded). FNV-1a over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            system: &'a SystemConfig,
            lengths: &'a [usize],
            realizations: usize,
            variants: &'a [VariantId],
            params: &'a EstimationParams,
            assoc_permutations: usize,
            seed: u64,
        }
        let json = serde_json::to_vec(&Hashed {
            system: &self.system,
            lengths: &self.lengths,
            realizations: self.realizations,
            variants: &self.variants,
            params: &self.params,
            assoc_permutations: self.assoc_permutations,
            seed: self.seed,
        })
        .expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        format!("{h:016x}")
    }

    fn cells(&self) -> Vec<(usize, usize)> {
        let mut cells = Vec::with_capacity(self.lengths.len() * self.realizations);
        for li in 0..self.lengths.len() {
            for r in 0..self.realizations {
                cells.push((li, r));
            }
        }
        cells
    }

    fn cell_path(&self, li: usize, r: usize) -> PathBuf {
        self.output_dir.join("cells").join(format!("n{}_r{r}.csv", self.lengths[li]))
    }

    fn timing_path(&self, li: usize, r: usize) -> PathBuf {
        self.output_dir.join("cells").join(format!("n{}_r{r}.time.json", self.lengths[li]))
    }

    /// File prefix identifying the system (distinguishes S3 sizes).
    pub fn system_tag(&self) -> String {
        match self.system.id {
            SystemId::S3 => format!("s3k{}", self.system.k),
            other => other.to_string(),
        }
    }
}

/// Friendly TOML form of an experiment; flags and defaults are resolved by
/// [`RawExperiment::resolve`].
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawExperiment {
    pub system: Option<RawSystem>,
    pub lengths: Option<Vec<usize>>,
    pub realizations: Option<usize>,
    pub variants: Option<Vec<RawVariant>>,
    pub params: Option<EstimationParams>,
    pub assoc_permutations: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RawSystem {
    pub id: String,
    pub k: Option<usize>,
    pub c: Option<f64>,
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RawVariant {
    pub id: String,
    pub nc: Option<usize>,
    pub trees: Option<usize>,
    pub mtry: Option<usize>,
    pub min_node_size: Option<usize>,
}

impl RawExperiment {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Resolves the raw form into a validated [`ExperimentConfig`]. When
    /// `params.m` is absent the system's equation-implied embedding
    /// dimension is used.
    pub fn resolve(&self, output_dir: PathBuf, jobs: Option<usize>) -> Result<ExperimentConfig> {
        let raw_system = self
            .system
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("missing [system] section".into()))?;
        let id: SystemId = raw_system.id.parse()?;
        let system = SystemConfig {
            id,
            k: raw_system.k.unwrap_or(5),
            c: raw_system.c.unwrap_or(if id == SystemId::S3 { 0.2 } else { 0.0 }),
            burn_in: raw_system.burn_in.unwrap_or(default_burn_in()),
        };
        let mut params = self.params.unwrap_or_default();
        if self.params.is_none() {
            params.m = system.spec_with_seed(0)?.default_m();
        }
        let default_nc = if params.nc == 0 { 1 } else { params.nc };
        let variant_entries = self.variants.as_ref().ok_or_else(|| {
            Error::InvalidParameter("no variants configured (e.g. [[variants]] id = \"TE\")".into())
        })?;
        let variants: Vec<VariantId> = variant_entries
            .iter()
            .map(|raw| {
                let defaults = ForestConfig::default();
                let forest = ForestConfig {
                    n_trees: raw.trees.unwrap_or(defaults.n_trees),
                    mtry: raw.mtry.or(defaults.mtry),
                    min_node_size: raw.min_node_size.unwrap_or(defaults.min_node_size),
                    ..defaults
                };
                VariantId::parse(&raw.id, raw.nc.unwrap_or(default_nc), forest)
            })
            .collect::<Result<_>>()?;
        let config = ExperimentConfig {
            system,
            lengths: self.lengths.clone().unwrap_or_else(|| vec![512, 1024, 2048]),
            realizations: self.realizations.unwrap_or(100),
            variants,
            params,
            assoc_permutations: self.assoc_permutations.unwrap_or(default_assoc_perms()),
            seed: self.seed.unwrap_or(1),
            output_dir,
            jobs,
        };
        config.validate()?;
        Ok(config)
    }
}

/// One persisted per-(pair, variant) outcome.
#[derive(Debug, Clone)]
struct CellRow {
    variant_key: String,
    driver: usize,
    response: usize,
    ok: bool,
    error: String,
    fallback: bool,
    conditioning: Vec<usize>,
    measure: f64,
    p_value: f64,
    reject: bool,
}

/// Wall-clock accounting for one cell.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CellTiming {
    pub n: usize,
    pub realization: usize,
    pub seconds: f64,
    pub evaluations: u64,
}

/// Aggregated outcome of a finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub labels: Vec<String>,
    pub truth: CouplingMatrix,
    /// Per variant key, per length: metrics aggregated over realizations.
    pub summaries: BTreeMap<String, BTreeMap<usize, ConfusionSummary>>,
    /// Per variant key: arithmetic mean of the per-length rows.
    pub mean_summaries: BTreeMap<String, ConfusionSummary>,
    /// Per variant key, per length, per "Xi->Xj": rejection rate over
    /// realizations.
    pub rejection_rates: BTreeMap<String, BTreeMap<usize, BTreeMap<String, f64>>>,
    pub failures: usize,
    pub total_evaluations: u64,
    pub timings: Vec<CellTiming>,
    pub total_seconds: f64,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn ordered_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(k * (k - 1));
    for i in 0..k {
        for j in 0..k {
            if i != j {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

fn expected_rows(config: &ExperimentConfig) -> usize {
    let k = config.system.k;
    k * (k - 1) * config.variants.len()
}

fn cell_complete(config: &ExperimentConfig, li: usize, r: usize) -> bool {
    let path = config.cell_path(li, r);
    let Ok(mut rdr) = csv::Reader::from_path(&path) else {
        return false;
    };
    rdr.records().filter(|r| r.is_ok()).count() == expected_rows(config)
}

/// Runs one (length, realization) cell and persists it.
fn process_cell(config: &ExperimentConfig, li: usize, r: usize) -> Result<CellTiming> {
    let n = config.lengths[li];
    let started = Instant::now();
    let labels: Vec<String> = (1..=config.system.k).map(|i| format!("X{i}")).collect();
    let pairs = ordered_pairs(config.system.k);

    let sim_seed = derive_seed(config.seed, &[stream::SIMULATE, li as u64, r as u64]);
    let cell_seed = derive_seed(config.seed, &[stream::CELL, li as u64, r as u64]);

    let rows: Vec<CellRow> = match config
        .system
        .spec_with_seed(sim_seed)
        .and_then(|spec| spec.simulate(n))
        .and_then(|raw| raw.standardize())
    {
        Ok(data) => {
            let ctx = AnalysisContext::new(&data, config.params, cell_seed)
                .with_assoc_permutations(config.assoc_permutations);
            let tasks: Vec<(usize, usize, &VariantId)> = pairs
                .iter()
                .flat_map(|&(i, j)| config.variants.iter().map(move |v| (i, j, v)))
                .collect();
            tasks
                .into_par_iter()
                .map(|(driver, response, variant)| {
                    match surrogate_test_in(&ctx, driver, response, variant) {
                        Ok((test, sel)) => CellRow {
                            variant_key: variant.key(),
                            driver,
                            response,
                            ok: true,
                            error: String::new(),
                            fallback: sel.fallback_to_te,
                            conditioning: if sel.fallback_to_te {
                                Vec::new()
                            } else {
                                sel.conditioning
                            },
                            measure: test.observed,
                            p_value: test.p_value,
                            reject: test.reject,
                        },
                        Err(e) => {
                            eprintln!(
                                "cell n={n} r={r}: {} {} -> {} failed: {e}",
                                variant.key(),
                                labels[driver],
                                labels[response]
                            );
                            CellRow {
                                variant_key: variant.key(),
                                driver,
                                response,
                                ok: false,
                                error: e.to_string(),
                                fallback: false,
                                conditioning: Vec::new(),
                                measure: f64::NAN,
                                p_value: f64::NAN,
                                reject: false,
                            }
                        }
                    }
                })
                .collect()
        }
        Err(e) => {
            eprintln!("cell n={n} r={r}: simulation failed: {e}");
            let message = e.to_string();
            pairs
                .iter()
                .flat_map(|&(i, j)| {
                    let message = message.clone();
                    config.variants.iter().map(move |v| CellRow {
                        variant_key: v.key(),
                        driver: i,
                        response: j,
                        ok: false,
                        error: message.clone(),
                        fallback: false,
                        conditioning: Vec::new(),
                        measure: f64::NAN,
                        p_value: f64::NAN,
                        reject: false,
                    })
                })
                .collect()
        }
    };

    let mut buf = Vec::new();
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        wtr.write_record([
            "variant",
            "driver",
            "response",
            "status",
            "fallback",
            "conditioning",
            "measure",
            "p_value",
            "reject",
        ])?;
        for row in &rows {
            let conditioning: Vec<String> =
                row.conditioning.iter().map(|&v| labels[v].clone()).collect();
            wtr.write_record([
                row.variant_key.clone(),
                labels[row.driver].clone(),
                labels[row.response].clone(),
                if row.ok { "ok".into() } else { format!("error: {}", row.error) },
                row.fallback.to_string(),
                conditioning.join("|"),
                if row.ok { format!("{}", row.measure) } else { String::new() },
                if row.ok { format!("{}", row.p_value) } else { String::new() },
                row.reject.to_string(),
            ])?;
        }
        wtr.flush()?;
    }
    write_atomic(&config.cell_path(li, r), &buf)?;

    let ok_rows = rows.iter().filter(|r| r.ok).count() as u64;
    let timing = CellTiming {
        n,
        realization: r,
        seconds: started.elapsed().as_secs_f64(),
        evaluations: ok_rows * (1 + config.params.n_surrogates as u64),
    };
    write_atomic(&config.timing_path(li, r), &serde_json::to_vec_pretty(&timing)?)?;
    Ok(timing)
}

fn prepare_output_dir(config: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(config.output_dir.join("cells"))?;
    let config_path = config.output_dir.join("config.json");
    if config_path.exists() {
        let existing: ExperimentConfig =
            serde_json::from_slice(&std::fs::read(&config_path)?)?;
        if existing.hash() != config.hash() {
            return Err(Error::InvalidParameter(format!(
                "output dir {} holds a different experiment (hash {} vs {}); use a fresh dir",
                config.output_dir.display(),
                existing.hash(),
                config.hash()
            )));
        }
    } else {
        write_atomic(&config_path, &serde_json::to_vec_pretty(config)?)?;
    }
    Ok(())
}

fn install_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Advances up to `limit` incomplete cells (all of them when `None`).
/// Returns the number of cells processed. The primary use of the limit is
/// exercising interruption/resume; killing the process mid-run has the same
/// effect.
pub fn advance_cells(config: &ExperimentConfig, limit: Option<usize>) -> Result<usize> {
    config.validate()?;
    prepare_output_dir(config)?;
    let todo: Vec<(usize, usize)> = config
        .cells()
        .into_iter()
        .filter(|&(li, r)| !cell_complete(config, li, r))
        .take(limit.unwrap_or(usize::MAX))
        .collect();
    install_pool(config.jobs, || {
        todo.par_iter().map(|&(li, r)| process_cell(config, li, r).map(|_| ())).collect()
    })
    .and_then(|r: Result<Vec<()>>| r)?;
    Ok(todo.len())
}

/// Runs (or resumes) the full experiment and aggregates the record.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    advance_cells(config, None)?;
    assemble_record(config)
}

/// Builds the [`RunRecord`] from the persisted cells of a finished run.
pub fn assemble_record(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let spec = config.system.spec_with_seed(0)?;
    let labels = spec.labels();
    let truth = spec.truth();
    let index_of = |label: &str| -> Result<usize> {
        labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::IncompleteRecord(format!("unknown variable '{label}'")))
    };
    let pairs = ordered_pairs(config.system.k);

    // reject[variant][n][realization][(i,j)] and failure bookkeeping
    type PairMap = BTreeMap<(usize, usize), bool>;
    let mut rejects: BTreeMap<String, BTreeMap<usize, Vec<Option<PairMap>>>> = BTreeMap::new();
    for v in &config.variants {
        let mut per_n = BTreeMap::new();
        for &n in &config.lengths {
            per_n.insert(n, vec![Some(PairMap::new()); config.realizations]);
        }
        rejects.insert(v.key(), per_n);
    }

    let mut failures = 0usize;
    let mut total_evaluations = 0u64;
    let mut timings = Vec::new();
    for (li, &n) in config.lengths.iter().enumerate() {
        for r in 0..config.realizations {
            let path = config.cell_path(li, r);
            if !path.exists() {
                return Err(Error::IncompleteRecord(format!(
                    "missing cell file {}",
                    path.display()
                )));
            }
            let mut rdr = csv::Reader::from_path(&path)?;
            let mut rows = 0usize;
            for rec in rdr.records() {
                let rec = rec?;
                rows += 1;
                let variant_key = rec[0].to_string();
                let driver = index_of(&rec[1])?;
                let response = index_of(&rec[2])?;
                let ok = &rec[3] == "ok";
                let slot = rejects
                    .get_mut(&variant_key)
                    .and_then(|per_n| per_n.get_mut(&n))
                    .ok_or_else(|| {
                        Error::IncompleteRecord(format!("unexpected variant '{variant_key}'"))
                    })?;
                if ok {
                    let reject: bool = rec[8].parse().map_err(|_| {
                        Error::IncompleteRecord("bad reject flag in cell file".into())
                    })?;
                    if let Some(m) = &mut slot[r] {
                        m.insert((driver, response), reject);
                    }
                    total_evaluations += 1 + config.params.n_surrogates as u64;
                } else {
                    // one failed pair poisons this (variant, n, realization)
                    slot[r] = None;
                    failures += 1;
                }
            }
            if rows != expected_rows(config) {
                return Err(Error::IncompleteRecord(format!(
                    "cell file {} has {rows} rows, expected {}",
                    path.display(),
                    expected_rows(config)
                )));
            }
            let timing_path = config.timing_path(li, r);
            if timing_path.exists() {
                timings.push(serde_json::from_slice(&std::fs::read(&timing_path)?)?);
            }
        }
    }

    let mut summaries = BTreeMap::new();
    let mut mean_summaries = BTreeMap::new();
    let mut rejection_rates = BTreeMap::new();
    for variant in &config.variants {
        let key = variant.key();
        let per_n_rejects = &rejects[&key];
        let mut per_n_summary = BTreeMap::new();
        let mut per_n_rates = BTreeMap::new();
        for &n in &config.lengths {
            let realizations = &per_n_rejects[&n];
            let mut runs = Vec::new();
            let mut rate_acc: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
            for pair_map in realizations.iter().flatten() {
                let mut detected = CouplingMatrix::new(config.system.k);
                for (&(i, j), &reject) in pair_map {
                    detected.set(i, j, reject);
                    let e = rate_acc.entry((i, j)).or_insert((0, 0));
                    e.0 += reject as usize;
                    e.1 += 1;
                }
                runs.push(score(&detected, &truth)?);
            }
            if runs.is_empty() {
                return Err(Error::IncompleteRecord(format!(
                    "variant {key} at n={n} has no successful realizations"
                )));
            }
            per_n_summary.insert(n, aggregate(&runs)?);
            let rates: BTreeMap<String, f64> = pairs
                .iter()
                .filter_map(|&(i, j)| {
                    rate_acc.get(&(i, j)).map(|&(hits, total)| {
                        (
                            format!("{}->{}", labels[i], labels[j]),
                            hits as f64 / total as f64,
                        )
                    })
                })
                .collect();
            per_n_rates.insert(n, rates);
        }
        // MEAN row metrics are the plain column means of the per-n rows
        let per_length_rows: Vec<ConfusionSummary> = per_n_summary.values().copied().collect();
        mean_summaries.insert(key.clone(), aggregate(&per_length_rows)?);
        summaries.insert(key.clone(), per_n_summary);
        rejection_rates.insert(key, per_n_rates);
    }

    let total_seconds = timings.iter().map(|t: &CellTiming| t.seconds).sum();
    let record = RunRecord {
        config_hash: config.hash(),
        config: config.clone(),
        labels,
        truth,
        summaries,
        mean_summaries,
        rejection_rates,
        failures,
        total_evaluations,
        timings,
        total_seconds,
    };
    write_atomic(
        &config.output_dir.join("record.json"),
        &serde_json::to_vec_pretty(&record)?,
    )?;
    Ok(record)
}

impl RunRecord {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("record.json");
        if !path.exists() {
            return Err(Error::IncompleteRecord(format!(
                "{} not found; run `benchmark` first",
                path.display()
            )));
        }
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    fn variant_class(key: &str) -> &'static str {
        if key == "TE" || key == "PTE" {
            "te_pte"
        } else if key.starts_with('5') {
            "rf"
        } else {
            "connectivity"
        }
    }
}

fn percent(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Writes one CSV per variant class: per-length rows plus a MEAN row, with
/// Sen/Spec/F1 in percent. Returns the written paths.
pub fn emit_tables(record: &RunRecord, dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| record.config.output_dir.join("tables"));
    std::fs::create_dir_all(&dir)?;
    let mut by_class: BTreeMap<&'static str, Vec<&VariantId>> = BTreeMap::new();
    for v in &record.config.variants {
        by_class.entry(RunRecord::variant_class(&v.key())).or_default().push(v);
    }
    let mut written = Vec::new();
    for (class, variants) in by_class {
        let mut buf = Vec::new();
        {
            let mut wtr = csv::Writer::from_writer(&mut buf);
            wtr.write_record(["variant", "nc", "n", "sen", "spec", "f1"])?;
            for v in variants {
                let key = v.key();
                let nc = v.nc().map(|n| n.to_string()).unwrap_or_default();
                let per_n = record.summaries.get(&key).ok_or_else(|| {
                    Error::IncompleteRecord(format!("no summary for variant {key}"))
                })?;
                for (&n, s) in per_n {
                    wtr.write_record([
                        v.label().to_string(),
                        nc.clone(),
                        n.to_string(),
                        percent(s.sen),
                        percent(s.spec),
                        percent(s.f1),
                    ])?;
                }
                let mean = &record.mean_summaries[&key];
                wtr.write_record([
                    v.label().to_string(),
                    nc,
                    "MEAN".to_string(),
                    percent(mean.sen),
                    percent(mean.spec),
                    percent(mean.f1),
                ])?;
            }
            wtr.flush()?;
        }
        let path = dir.join(format!("{}_{class}.csv", record.config.system_tag()));
        write_atomic(&path, &buf)?;
        written.push(path);
    }
    Ok(written)
}

/// Consensus-network export: an edge is drawn when its rejection rate over
/// realizations reaches 50%. Writes one DOT and one JSON file per variant
/// and length and returns the paths.
pub fn emit_networks(record: &RunRecord, dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let dir =
        dir.map(Path::to_path_buf).unwrap_or_else(|| record.config.output_dir.join("networks"));
    std::fs::create_dir_all(&dir)?;
    let index_of = |label: &str| record.labels.iter().position(|l| l == label);
    let mut written = Vec::new();
    for variant in &record.config.variants {
        let key = variant.key();
        let per_n = record
            .rejection_rates
            .get(&key)
            .ok_or_else(|| Error::IncompleteRecord(format!("no rejection rates for {key}")))?;
        for (&n, rates) in per_n {
            let mut detected = CouplingMatrix::new(record.labels.len());
            let mut rate_map = BTreeMap::new();
            for (pair, &rate) in rates {
                let (from, to) = pair.split_once("->").ok_or_else(|| {
                    Error::IncompleteRecord(format!("bad pair key '{pair}'"))
                })?;
                let (i, j) = match (index_of(from), index_of(to)) {
                    (Some(i), Some(j)) => (i, j),
                    _ => {
                        return Err(Error::IncompleteRecord(format!(
                            "unknown variables in pair '{pair}'"
                        )))
                    }
                };
                rate_map.insert((i, j), rate);
                if rate >= 0.5 {
                    detected.set(i, j, true);
                }
            }
            let edges = network_edges(&detected, &record.truth, &record.labels, Some(&rate_map));
            let name = format!("{}_{key}_n{n}", record.config.system_tag());
            let dot_path = dir.join(format!("{name}.dot"));
            write_atomic(&dot_path, to_dot(&name, &record.labels, &edges).as_bytes())?;
            let json_path = dir.join(format!("{name}.json"));
            let json = serde_json::json!({
                "system": record.config.system_tag(),
                "variant": key,
                "n": n,
                "threshold": 0.5,
                "labels": record.labels,
                "edges": edges,
            });
            write_atomic(&json_path, &serde_json::to_vec_pretty(&json)?)?;
            written.push(dot_path);
            written.push(json_path);
        }
    }
    Ok(written)
}
