//! CLI for the active-learning tensor regression harness.

use clap::Parser;
use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Duration;
use tenreg::harness::benchmarks::BenchmarkKind;
use tenreg::harness::{run_active_loop, HarnessError, RunConfig, RunMode, SimulatorSpec};

#[derive(Parser, Debug)]
#[command(
    name = "tenreg",
    about = "Low-rank tensor regression surrogate with rank-adaptive regularization and Voronoi-guided adaptive sampling",
    version
)]
struct Cli {
    /// Flat key=value config file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Number of random input dimensions.
    #[arg(long)]
    dim: Option<usize>,

    /// Highest polynomial order per dimension.
    #[arg(long)]
    order: Option<usize>,

    /// Initial CP rank before automatic shrinkage.
    #[arg(long = "rank-init")]
    rank_init: Option<usize>,

    /// Group-norm exponent q in (0, 1].
    #[arg(long)]
    q: Option<f64>,

    /// Penalty strength; defaults to 1e-3 times the training-set size.
    #[arg(long)]
    lambda: Option<f64>,

    /// Initial Latin hypercube sample count.
    #[arg(long = "init-samples")]
    init_samples: Option<usize>,

    /// Number of adaptive batches after the initial design.
    #[arg(long)]
    batches: Option<usize>,

    /// Samples per adaptive batch.
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,

    /// Monte-Carlo pool size per batch; defaults to 100x the design size.
    #[arg(long = "pool-size")]
    pool_size: Option<usize>,

    /// Batch selection rule: explore, exploit or random.
    #[arg(long)]
    mode: Option<String>,

    #[arg(long)]
    seed: Option<u64>,

    /// Built-in benchmark: planted-cp, quad-exp or affine.
    #[arg(long, conflicts_with = "sim_cmd")]
    benchmark: Option<String>,

    /// External simulator command (CSV points on stdin, one value per line).
    #[arg(long = "sim-cmd")]
    sim_cmd: Option<String>,

    /// Test-set size for builtin benchmarks.
    #[arg(long = "test-size")]
    test_size: Option<usize>,

    /// Raw-space test file for external simulators: CSV lines `x1,..,xd,y`.
    #[arg(long = "test-file")]
    test_file: Option<PathBuf>,

    /// Output directory for model.txt and history.csv.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Per-dimension means, comma separated (default all 0).
    #[arg(long)]
    mean: Option<String>,

    /// Per-dimension standard deviations, comma separated (default all 1).
    #[arg(long)]
    std: Option<String>,

    /// Disable the rank penalty: lambda = 0 and the rank stays fixed.
    #[arg(long = "no-rank-penalty")]
    no_rank_penalty: bool,

    /// Per-batch simulator timeout in seconds.
    #[arg(long = "timeout-secs")]
    timeout_secs: Option<u64>,
}

fn config_error(msg: String) -> HarnessError {
    HarnessError::Config(msg)
}

fn read_config_file(path: &PathBuf) -> Result<HashMap<String, String>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_error(format!("config line {}: expected key=value", i + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn merged<T: std::str::FromStr>(
    flag: Option<T>,
    file: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>, HarnessError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| config_error(format!("config key {key}: cannot parse `{raw}`"))),
        None => Ok(None),
    }
}

fn parse_list(raw: &str, dim: usize, what: &str) -> Result<Vec<f64>, HarnessError> {
    let values: Result<Vec<f64>, _> = raw.split(',').map(|f| f.trim().parse()).collect();
    let values =
        values.map_err(|_| config_error(format!("cannot parse {what} list `{raw}`")))?;
    if values.len() != dim {
        return Err(config_error(format!(
            "{what} list has {} entries for dimension {dim}",
            values.len()
        )));
    }
    Ok(values)
}

fn build_config(cli: Cli) -> Result<RunConfig, HarnessError> {
    let file = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => HashMap::new(),
    };

    let dim = merged(cli.dim, &file, "dim")?
        .ok_or_else(|| config_error("--dim is required".into()))?;

    let sim_cmd: Option<String> = merged(cli.sim_cmd, &file, "sim-cmd")?;
    let benchmark: Option<String> = merged(cli.benchmark, &file, "benchmark")?;
    let simulator = match (sim_cmd, benchmark) {
        (Some(command), _) => SimulatorSpec::External { command },
        (None, name) => {
            let name = name.unwrap_or_else(|| "planted-cp".into());
            let kind = BenchmarkKind::from_name(&name)
                .ok_or_else(|| config_error(format!("unknown benchmark `{name}`")))?;
            SimulatorSpec::Builtin(kind)
        }
    };

    let mode_name = merged(cli.mode, &file, "mode")?.unwrap_or_else(|| "explore".into());
    let mode = RunMode::from_name(&mode_name)
        .ok_or_else(|| config_error(format!("unknown mode `{mode_name}`")))?;

    let means = match merged(cli.mean, &file, "mean")? {
        Some(raw) => parse_list(&raw, dim, "mean")?,
        None => vec![0.0; dim],
    };
    let stds = match merged(cli.std, &file, "std")? {
        Some(raw) => parse_list(&raw, dim, "std")?,
        None => vec![1.0; dim],
    };

    let no_rank_penalty = cli.no_rank_penalty
        || file
            .get("no-rank-penalty")
            .map(|v| v == "true" || v == "1")
            .unwrap_or(false);

    Ok(RunConfig {
        dim,
        order: merged(cli.order, &file, "order")?.unwrap_or(2),
        initial_rank: merged(cli.rank_init, &file, "rank-init")?.unwrap_or(4),
        q: merged(cli.q, &file, "q")?.unwrap_or(0.5),
        lambda: merged(cli.lambda, &file, "lambda")?,
        n_init: merged(cli.init_samples, &file, "init-samples")?.unwrap_or(60),
        n_batches: merged(cli.batches, &file, "batches")?.unwrap_or(6),
        batch_size: merged(cli.batch_size, &file, "batch-size")?.unwrap_or(10),
        pool_size: merged(cli.pool_size, &file, "pool-size")?,
        mode,
        seed: merged(cli.seed, &file, "seed")?.unwrap_or(0),
        simulator,
        test_size: merged(cli.test_size, &file, "test-size")?.unwrap_or(100_000),
        test_file: merged(cli.test_file, &file, "test-file")?,
        out_dir: merged(cli.out, &file, "out")?,
        standardization: means.into_iter().zip(stds).collect(),
        no_rank_penalty,
        simulator_timeout: Duration::from_secs(
            merged(cli.timeout_secs, &file, "timeout-secs")?.unwrap_or(600),
        ),
    })
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let cfg = build_config(cli)?;
    let history = run_active_loop(&cfg)?;
    println!("round,samples,train_err,test_err,rank,objective,wall_ms");
    for r in &history.rounds {
        println!(
            "{},{},{:.6e},{:.6e},{},{:.6e},{}",
            r.round, r.samples, r.train_err, r.test_err, r.rank, r.objective, r.wall_ms
        );
    }
    if let Some(last) = history.rounds.last() {
        let params = cfg.dim * (cfg.order + 1) * last.rank;
        println!(
            "final: rank {} with {} free parameters, test error {:.6e}",
            last.rank, params, last.test_err
        );
    }
    if let Some(dir) = &cfg.out_dir {
        println!("outputs written to {}", dir.display());
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
