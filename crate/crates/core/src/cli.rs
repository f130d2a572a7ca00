//! The `ake` command line. Every subcommand loads a bundle, runs its
//! experiments, and writes `results.csv`, `trace.jsonl` and the effective
//! `config.json` into `--out`.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::exchange::{ExchangeEvent, ExchangeStrategy};
use crate::io::{self, IoError, ResultsRow};
use crate::pipeline::{
    ablation_sweep, depth_sweep, fewshot_sweep, run_method, ExperimentConfig, ExperimentResult, Method, PipelineError,
};

#[derive(Debug, Parser)]
#[command(name = "ake", version, about = "Multi-view GCN training with channel exchange")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Dataset bundle directory.
    #[arg(long)]
    bundle: PathBuf,
    /// JSON experiment config; omitted fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// A count `N` (seeds 0..N) or a comma-separated list such as `3,7,11`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the config's method (or `--method`).
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
    },
    /// Run AKE.
    Ake {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<ExchangeStrategy>,
    },
    /// AKE once per exchange strategy.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy, default_value = "adaptive-output,random-output,in-order-output")]
        strategies: Vec<ExchangeStrategy>,
    },
    /// Backbone and AKE at several depths.
    Depth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        depths: Vec<usize>,
    },
    /// Backbone and AKE with resampled small training sets.
    Fewshot {
        #[command(flatten)]
        common: Common,
        #[arg(long = "labels-per-class", value_delimiter = ',', default_value = "1,3,5,10")]
        labels_per_class: Vec<usize>,
    },
    /// Backbone, FT, both ensembles and AKE side by side.
    Baselines {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    seed_list(s).map(SeedList)
}

fn seed_list(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    if s.contains(',') {
        let seeds = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<u64>().map_err(|_| format!("'{t}' is not a seed")))
            .collect::<Result<Vec<_>, _>>()?;
        if seeds.is_empty() {
            return Err("empty seed list".into());
        }
        return Ok(seeds);
    }
    match s.parse::<u64>() {
        Ok(0) => Err("seed count must be positive".into()),
        Ok(n) => Ok((0..n).collect()),
        Err(_) => Err(format!("'{s}' is neither a seed count nor a comma-separated list")),
    }
}

fn parse_strategy(s: &str) -> Result<ExchangeStrategy, String> {
    s.trim().parse()
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
        let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method '{s}', expected one of {}", names.join(", "))
    })
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Pipeline(PipelineError::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }
}

/// A finished experiment with the table context its rows need.
struct Labeled {
    result: ExperimentResult,
    depth: usize,
    labels_per_class: Option<usize>,
}

fn depth_of(cfg: &ExperimentConfig) -> usize {
    cfg.hidden.len() + 1
}

fn config_for(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => io::load_config(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.0.clone();
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<(), CliError> {
    let (common, mut cfg) = match &command {
        Command::Train { common, .. }
        | Command::Ake { common, .. }
        | Command::Ablate { common, .. }
        | Command::Depth { common, .. }
        | Command::Fewshot { common, .. }
        | Command::Baselines { common } => (common, config_for(common)?),
    };
    let meta = io::read_meta(&common.bundle)?;
    let graph = io::load_bundle(&common.bundle)?;

    let plain = |result, cfg: &ExperimentConfig| Labeled {
        result,
        depth: depth_of(cfg),
        labels_per_class: None,
    };
    let done: Vec<Labeled> = match &command {
        Command::Train { method, .. } => {
            if let Some(m) = method {
                cfg.method = *m;
            }
            cfg.validate()?;
            vec![plain(run_method(&graph, &cfg)?, &cfg)]
        }
        Command::Ake { strategy, .. } => {
            cfg.method = Method::Ake;
            if let Some(s) = strategy {
                cfg.exchange.strategy = *s;
            }
            cfg.validate()?;
            vec![plain(run_method(&graph, &cfg)?, &cfg)]
        }
        Command::Ablate { strategies, .. } => {
            cfg.method = Method::Ake;
            cfg.validate()?;
            ablation_sweep(&graph, &cfg, strategies)?
                .into_iter()
                .map(|r| plain(r, &cfg))
                .collect()
        }
        Command::Depth { depths, .. } => {
            if depths.is_empty() {
                return Err(CliError::Usage("no depths given".into()));
            }
            cfg.validate()?;
            depth_sweep(&graph, &cfg, depths)?
                .into_iter()
                .flat_map(|p| {
                    [p.backbone, p.ake].map(|result| Labeled {
                        result,
                        depth: p.depth,
                        labels_per_class: None,
                    })
                })
                .collect()
        }
        Command::Fewshot { labels_per_class, .. } => {
            if labels_per_class.is_empty() {
                return Err(CliError::Usage("no label budgets given".into()));
            }
            cfg.validate()?;
            fewshot_sweep(&graph, &cfg, labels_per_class)?
                .into_iter()
                .flat_map(|p| {
                    [p.backbone, p.ake].map(|result| Labeled {
                        result,
                        depth: depth_of(&cfg),
                        labels_per_class: Some(p.labels_per_class),
                    })
                })
                .collect()
        }
        Command::Baselines { .. } => {
            cfg.validate()?;
            Method::ALL
                .into_iter()
                .map(|method| {
                    let cfg = ExperimentConfig { method, ..cfg.clone() };
                    Ok(plain(run_method(&graph, &cfg)?, &cfg))
                })
                .collect::<Result<_, PipelineError>>()?
        }
    };

    fs::create_dir_all(&common.out).map_err(|source| IoError::Io {
        path: common.out.clone(),
        source,
    })?;
    let mut rows = Vec::new();
    let mut traces: Vec<(String, u64, &[ExchangeEvent])> = Vec::new();
    for d in &done {
        let these = ResultsRow::from_result(&meta.name, &d.result, d.depth, d.labels_per_class);
        for (row, run) in these.iter().zip(&d.result.runs) {
            traces.push((row.run_id.clone(), run.seed, &run.events));
        }
        rows.extend(these);
    }
    io::write_results(&rows, common.out.join("results.csv"))?;
    io::write_trace(
        common.out.join("trace.jsonl"),
        traces.iter().map(|(id, seed, ev)| (id.as_str(), *seed, *ev)),
    )?;
    let json = serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n";
    let path = common.out.join("config.json");
    fs::write(&path, json).map_err(|source| IoError::Io { path, source })?;

    for line in io::summary_lines(&rows) {
        println!("{}", line.trim_start_matches("# "));
    }
    Ok(())
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var("AKE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("AKE_THREADS='{v}' is not a thread count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 1 on a failed run, 2 on a usage error.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = thread_pool().and_then(|pool| pool.install(|| execute(cli.command)));
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_accept_counts_and_lists() {
        assert_eq!(seed_list("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(seed_list("4,9, 2").unwrap(), vec![4, 9, 2]);
        assert_eq!(seed_list("7,").unwrap(), vec![7]);
        assert!(seed_list("0").is_err());
        assert!(seed_list("x").is_err());
        assert!(seed_list(",").is_err());
    }

    #[test]
    fn strategies_accept_unique_prefixes() {
        assert_eq!(parse_strategy("pointwise").unwrap(), ExchangeStrategy::PointwiseRandom);
        assert_eq!(parse_strategy("self").unwrap(), ExchangeStrategy::SelfExchange);
        assert!(parse_strategy("random").is_err());
        assert!(parse_strategy("").is_err());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run_cli(["ake"]), 2);
        assert_eq!(run_cli(["ake", "bogus"]), 2);
        assert_eq!(run_cli(["ake", "ake"]), 2);
        assert_eq!(run_cli(["ake", "ake", "--bundle", "x", "--seeds", "q"]), 2);
        assert_eq!(run_cli(["ake", "--help"]), 0);
    }
}
