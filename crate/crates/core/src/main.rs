//! Command-line front end: simulate benchmark systems, analyze one dataset,
//! run the full Monte Carlo benchmark, and re-emit reports from a stored
//! run.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use tenet::error::{Error, Result};
use tenet::evaluation::network_edges;
use tenet::forest::ForestConfig;
use tenet::harness::{
    emit_networks, emit_tables, run_experiment, RawExperiment, RawSystem, RawVariant, RunRecord,
};
use tenet::significance::surrogate_test_in;
use tenet::simulators::{SystemId, SystemSpec, DEFAULT_BURN_IN};
use tenet::timeseries::{Dataset, EstimationParams};
use tenet::variants::{AnalysisContext, VariantId};

#[derive(Parser)]
#[command(
    name = "tenet",
    about = "Directed causality analysis for multivariate time series",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a realization of a benchmark system as CSV.
    Simulate(SimulateArgs),
    /// Test driver -> response causality on one dataset.
    Analyze(AnalyzeArgs),
    /// Run the full Monte Carlo benchmark.
    Benchmark(BenchmarkArgs),
    /// Re-emit tables and networks from a stored benchmark record.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Benchmark system: s1, s2 or s3.
    #[arg(long)]
    system: String,
    /// Series length (after burn-in).
    #[arg(long)]
    n: usize,
    /// Variable count (s3 only; s1/s2 are fixed at 5).
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Coupling strength (s3 only).
    #[arg(long, default_value_t = 0.2)]
    c: f64,
    /// Discarded initial steps.
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the ground-truth coupling matrix as JSON.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input CSV (header = variable names, one row per time step).
    #[arg(long)]
    data: PathBuf,
    /// Driver variable name; omit to test all ordered pairs.
    #[arg(long)]
    driver: Option<String>,
    /// Response variable name; omit to test all ordered pairs.
    #[arg(long)]
    response: Option<String>,
    /// Measure variant: TE, PTE, 1A..4B, 5A..5C.
    #[arg(long, default_value = "TE")]
    variant: String,
    /// Conditioning-set size for connectivity variants.
    #[arg(long, default_value_t = 1)]
    nc: usize,
    /// Embedding dimension.
    #[arg(long)]
    m: usize,
    /// Embedding delay.
    #[arg(long, default_value_t = 1)]
    tau: usize,
    /// Prediction horizon.
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// Neighbor count of the KNN estimator.
    #[arg(long = "knn-k", default_value_t = 10)]
    knn_k: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Number of time-shifted surrogates.
    #[arg(long, default_value_t = 100)]
    surrogates: usize,
    /// Permutations of the MI association test.
    #[arg(long, default_value_t = 100)]
    assoc_perms: usize,
    /// Random-forest tree count (5A/5B/5C).
    #[arg(long, default_value_t = 500)]
    trees: usize,
    /// Optional relative jitter amplitude for heavily tied inputs.
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output JSON report path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// TOML experiment file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Comma-separated series lengths, e.g. 512,1024,2048.
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Comma-separated variants; `:nc` overrides per entry (e.g.
    /// TE,PTE,3B:2).
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    /// Default nc for connectivity variants without an explicit `:nc`.
    #[arg(long)]
    nc: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long = "knn-k")]
    knn_k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    surrogates: Option<usize>,
    #[arg(long)]
    assoc_perms: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for the run record.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of a stored benchmark record.
    #[arg(long)]
    record: PathBuf,
    /// Output directory (default: inside the record directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path too
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Analyze(args) => analyze(args),
        Command::Benchmark(args) => benchmark(args),
        Command::Report(args) => report(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let id: SystemId = args.system.parse()?;
    let spec = SystemSpec::new(id, args.k, args.c, args.burn_in, args.seed)?;
    let data = spec.simulate(args.n)?;
    data.write_csv(&args.out)?;
    eprintln!("wrote {} ({} x {})", args.out.display(), data.n(), data.k());
    if let Some(truth_out) = args.truth_out {
        let truth = spec.truth();
        let edges = network_edges(&truth, &truth, &spec.labels(), None);
        let json = serde_json::json!({
            "system": id.to_string(),
            "k": spec.k,
            "c": spec.c,
            "labels": spec.labels(),
            "edges": edges,
        });
        std::fs::write(&truth_out, serde_json::to_vec_pretty(&json)?)?;
        eprintln!("wrote {}", truth_out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let params = EstimationParams {
        m: args.m,
        tau: args.tau,
        h: args.horizon,
        k: args.knn_k,
        nc: args.nc,
        alpha: args.alpha,
        n_surrogates: args.surrogates,
    };
    params.validate()?;
    let forest = ForestConfig { n_trees: args.trees, ..Default::default() };
    let variant = VariantId::parse(&args.variant, args.nc, forest)?;

    let raw = Dataset::read_csv(&args.data)?;
    let jittered = match args.jitter {
        Some(amp) => raw.with_jitter(amp, args.seed)?,
        None => raw,
    };
    let data = jittered.standardize()?;
    params.effective_samples(data.n())?;

    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }

    let pairs: Vec<(usize, usize)> = match (&args.driver, &args.response) {
        (Some(d), Some(r)) => {
            let di = data
                .label_index(d)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown variable '{d}'")))?;
            let ri = data
                .label_index(r)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown variable '{r}'")))?;
            vec![(di, ri)]
        }
        (None, None) => {
            let k = data.k();
            (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).collect()
        }
        _ => {
            return Err(Error::InvalidParameter(
                "provide both --driver and --response, or neither for all pairs".into(),
            ))
        }
    };

    let ctx = AnalysisContext::new(&data, params, args.seed)
        .with_assoc_permutations(args.assoc_perms);
    let mut results = Vec::new();
    let mut failures = 0usize;
    for (driver, response) in pairs {
        match surrogate_test_in(&ctx, driver, response, &variant) {
            Ok((test, selection)) => {
                results.push(serde_json::json!({
                    "driver": data.labels()[driver],
                    "response": data.labels()[response],
                    "variant": variant.key(),
                    "measure": test.observed,
                    "p_value": test.p_value,
                    "reject": test.reject,
                    "fallback_to_te": selection.fallback_to_te,
                    "conditioning": selection.conditioning.iter()
                        .map(|&v| data.labels()[v].clone()).collect::<Vec<_>>(),
                    "diagnostics": selection.diagnostics.iter().map(|d| serde_json::json!({
                        "variable": data.labels()[d.variable],
                        "value": d.value,
                        "p_value": d.p_value,
                        "significant": d.significant,
                        "selected": d.selected,
                    })).collect::<Vec<_>>(),
                }));
            }
            Err(e) => {
                eprintln!(
                    "pair {} -> {} failed: {e}",
                    data.labels()[driver],
                    data.labels()[response]
                );
                failures += 1;
            }
        }
    }

    let report = serde_json::json!({
        "data": args.data.display().to_string(),
        "n": data.n(),
        "variables": data.labels(),
        "params": params,
        "variant": variant.key(),
        "standardized": true,
        "failures": failures,
        "results": results,
    });
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(if failures > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn benchmark(args: BenchmarkArgs) -> Result<ExitCode> {
    let mut raw = match &args.config {
        Some(path) => RawExperiment::from_toml(&std::fs::read_to_string(path)?)?,
        None => RawExperiment::default(),
    };
    if let Some(system) = &args.system {
        let prev = raw.system.take();
        raw.system = Some(RawSystem {
            id: system.clone(),
            k: args.k.or(prev.as_ref().and_then(|s| s.k)),
            c: args.c.or(prev.as_ref().and_then(|s| s.c)),
            burn_in: args.burn_in.or(prev.as_ref().and_then(|s| s.burn_in)),
        });
    } else if let Some(system) = raw.system.as_mut() {
        system.k = args.k.or(system.k);
        system.c = args.c.or(system.c);
        system.burn_in = args.burn_in.or(system.burn_in);
    }
    if let Some(lengths) = &args.lengths {
        raw.lengths = Some(lengths.clone());
    }
    if let Some(realizations) = args.realizations {
        raw.realizations = Some(realizations);
    }
    if let Some(variant_specs) = &args.variants {
        let entries = variant_specs
            .iter()
            .map(|spec| {
                let (id, nc) = match spec.split_once(':') {
                    Some((id, nc)) => {
                        let nc: usize = nc.parse().map_err(|_| {
                            Error::InvalidParameter(format!("bad nc in variant '{spec}'"))
                        })?;
                        (id.to_string(), Some(nc))
                    }
                    None => (spec.clone(), None),
                };
                Ok(RawVariant { id, nc, trees: None, mtry: None, min_node_size: None })
            })
            .collect::<Result<Vec<_>>>()?;
        raw.variants = Some(entries);
    }
    if args.m.is_some()
        || args.tau.is_some()
        || args.horizon.is_some()
        || args.knn_k.is_some()
        || args.alpha.is_some()
        || args.surrogates.is_some()
        || args.nc.is_some()
    {
        let mut params = raw.params.unwrap_or_default();
        if let Some(m) = args.m {
            params.m = m;
        } else if raw.params.is_none() {
            // keep the system default resolution path alive: resolve() only
            // applies the system's m when [params] is absent entirely
            if let Some(system) = &raw.system {
                if let Ok(id) = system.id.parse::<SystemId>() {
                    params.m = match id {
                        SystemId::S1 => 4,
                        SystemId::S2 => 3,
                        SystemId::S3 => 2,
                    };
                }
            }
        }
        if let Some(tau) = args.tau {
            params.tau = tau;
        }
        if let Some(h) = args.horizon {
            params.h = h;
        }
        if let Some(k) = args.knn_k {
            params.k = k;
        }
        if let Some(alpha) = args.alpha {
            params.alpha = alpha;
        }
        if let Some(s) = args.surrogates {
            params.n_surrogates = s;
        }
        if let Some(nc) = args.nc {
            params.nc = nc;
        }
        raw.params = Some(params);
    }
    if let Some(assoc) = args.assoc_perms {
        raw.assoc_permutations = Some(assoc);
    }
    if let Some(seed) = args.seed {
        raw.seed = Some(seed);
    }

    let config = raw.resolve(args.out.clone(), args.jobs)?;
    if config.system.id == SystemId::S2 && args.m.is_none() && raw.params.map_or(true, |p| p.m == 3)
    {
        eprintln!(
            "note: embedding dimension m=3 for s2 is the equation-implied default; \
             override with --m if needed"
        );
    }
    eprintln!(
        "benchmark: {} | lengths {:?} | {} realizations | variants [{}] | seed {}",
        config.system_tag(),
        config.lengths,
        config.realizations,
        config.variants.iter().map(|v| v.key()).collect::<Vec<_>>().join(", "),
        config.seed
    );
    let record = run_experiment(&config)?;
    let tables = emit_tables(&record, None)?;
    let networks = emit_networks(&record, None)?;
    eprintln!(
        "done in {:.1}s cpu across cells; {} tables, {} network files, {} failures",
        record.total_seconds,
        tables.len(),
        networks.len(),
        record.failures
    );
    for path in &tables {
        eprintln!("  {}", path.display());
    }
    Ok(if record.failures > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let record = RunRecord::load(&args.record)?;
    if record.config.variants.is_empty() {
        eprintln!("warning: record has no variants; nothing to emit");
        return Ok(ExitCode::SUCCESS);
    }
    let tables_dir = args.out.as_ref().map(|d| d.join("tables"));
    let networks_dir = args.out.as_ref().map(|d| d.join("networks"));
    let tables = emit_tables(&record, tables_dir.as_deref())?;
    let networks = emit_networks(&record, networks_dir.as_deref())?;
    for path in tables.iter().chain(&networks) {
        eprintln!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
