//! The `pmcmc` command line.
//!
//! Exit codes: 0 success, 1 usage, 2 data, 3 runtime.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::datagen::{downsample, generate_bmm, load_network, planted_network, scaled_count, toy_network};
use crate::diagnostics::{diagnose, Quantity};
use crate::error::Error;
use crate::kernel::Sampler;
use crate::model::{BernoulliMixture, FeatureDataset, InfiniteRelational, ModelParams, NetworkDataset};
use crate::oracle::{exact_posterior, verify_exact};
use crate::orchestrator::RunConfig;
use crate::trace::{run_to_dir, DataInfo};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::InvalidParameter(_) => CliError::Usage(m),
            Error::Data(_) | Error::Parse(_) => CliError::Data(m),
            _ => CliError::Runtime(m),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn data_err(path: &Path) -> impl FnOnce(Error) -> CliError + '_ {
    move |e| match e {
        Error::InvalidParameter(m) => CliError::Usage(m),
        e => CliError::Data(format!("{}: {e}", path.display())),
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

#[derive(Parser, Debug)]
#[command(name = "pmcmc", version, about = "Partition MCMC for Dirichlet-process mixtures and relational models")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenModel {
    /// Five-component Bernoulli mixture, 100 observations.
    Bmm,
    /// Planted-partition network.
    Irm,
    /// The four-vertex test graph.
    Toy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RunModel {
    Bmm,
    Irm,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset and its planted partition (`<out>.truth`).
    Generate {
        #[arg(long, value_enum, default_value = "bmm")]
        model: GenModel,
        /// Feature count for the mixture: 6, 8 or 10.
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 15)]
        block_size: usize,
        #[arg(long, default_value_t = 0.5)]
        p_in: f64,
        #[arg(long, default_value_t = 0.05)]
        p_out: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run independent restarts of a multi-chain ensemble.
    Run(RunArgs),
    /// Autocorrelation times, R-hat and accept rates from trace files.
    Diagnose {
        /// Glob matching one trace file per restart.
        #[arg(long)]
        traces: String,
        #[arg(long, default_value = "logjoint")]
        quantity: String,
        /// Observations (1-based, whitespace separated) whose pairwise
        /// co-clustering indicators are analysed.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        burn_in: f64,
        /// JSON report; a CSV summary is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare long-run sampler frequencies with the exact posterior.
    VerifyExact {
        #[arg(long)]
        sampler: Sampler,
        #[arg(long, default_value_t = 160_000)]
        iters: usize,
        /// Defaults to 1, or 4 for kernels that need other chains.
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Edge list to use instead of the four-vertex test graph.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Keep the Gibbs sweep after every kernel move.
        #[arg(long)]
        interlace: bool,
        #[arg(long, default_value_t = 5)]
        l: usize,
        /// Also write the exact posterior table here.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args, Debug, Default)]
pub struct RunArgs {
    #[arg(long)]
    sampler: Option<Sampler>,
    #[arg(long, value_enum)]
    model: Option<RunModel>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep this fraction of vertices (networks only).
    #[arg(long)]
    scale: Option<f64>,
    /// Intermediate restricted sweeps for split-merge.
    #[arg(long = "L", alias = "l")]
    l: Option<usize>,
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta_plus: Option<f64>,
    #[arg(long)]
    beta_minus: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Skip the Gibbs sweep after kernel moves.
    #[arg(long)]
    no_interlace: bool,
    /// `key=value` defaults; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses a `key=value` file; `#` starts a comment.
pub fn parse_config(text: &str) -> CliResult<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().replace('-', "_").to_lowercase(), v.trim().to_string());
    }
    Ok(out)
}

const CONFIG_KEYS: [&str; 16] = [
    "sampler", "model", "data", "chains", "iters", "restarts", "seed", "scale", "l", "burn_in",
    "alpha", "beta_plus", "beta_minus", "threads", "interlace", "out",
];

struct Settings {
    file: HashMap<String, String>,
}

impl Settings {
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config: bad value {v:?} for {key}"))),
        }
    }
}

/// The resolved configuration for `run`.
#[derive(Debug)]
pub struct RunPlan {
    pub config: RunConfig,
    pub model: RunModel,
    pub data: PathBuf,
    pub scale: Option<f64>,
    pub threads: usize,
    pub out: PathBuf,
}

pub fn resolve_run(args: RunArgs) -> CliResult<RunPlan> {
    let file = match &args.config {
        Some(p) => parse_config(
            &std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        )?,
        None => HashMap::new(),
    };
    if let Some(k) = file.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(CliError::Usage(format!("config: unknown key {k:?}")));
    }
    let s = Settings { file };
    let d = RunConfig::default();
    let model = match args.model {
        Some(m) => m,
        None => match s.file.get("model").map(String::as_str) {
            None => return Err(CliError::Usage("--model is required".into())),
            Some(v) => RunModel::from_str(v, true)
                .map_err(|_| CliError::Usage(format!("config: bad model {v:?}")))?,
        },
    };
    let data = s
        .pick(args.data, "data")?
        .ok_or_else(|| CliError::Usage("--data is required".into()))?;
    let out = s
        .pick(args.out, "out")?
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let interlace = if args.no_interlace {
        false
    } else {
        s.pick(None, "interlace")?.unwrap_or(true)
    };
    let params = ModelParams {
        alpha: s.pick(args.alpha, "alpha")?.unwrap_or(d.params.alpha),
        beta_plus: s.pick(args.beta_plus, "beta_plus")?.unwrap_or(d.params.beta_plus),
        beta_minus: s.pick(args.beta_minus, "beta_minus")?.unwrap_or(d.params.beta_minus),
    };
    let config = RunConfig {
        sampler: s.pick(args.sampler, "sampler")?.unwrap_or(d.sampler),
        chains: s.pick(args.chains, "chains")?.unwrap_or(d.chains),
        iterations: s.pick(args.iters, "iters")?.unwrap_or(d.iterations),
        burn_in: s.pick(args.burn_in, "burn_in")?.unwrap_or(d.burn_in),
        seed: s.pick(args.seed, "seed")?.unwrap_or(d.seed),
        restarts: s.pick(args.restarts, "restarts")?.unwrap_or(d.restarts),
        params,
        l: s.pick(args.l, "l")?.unwrap_or(d.l),
        interlace,
    };
    config.validate()?;
    let scale = s.pick(args.scale, "scale")?;
    if scale.is_some() && model != RunModel::Irm {
        return Err(CliError::Usage("--scale only applies to networks".into()));
    }
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    let threads = s.pick(args.threads, "threads")?.unwrap_or(config.chains.min(hw));
    if threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    Ok(RunPlan {
        config,
        model,
        data,
        scale,
        threads,
        out,
    })
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn load_scaled_network(path: &Path, scale: Option<f64>) -> CliResult<NetworkDataset> {
    let g = load_network(path).map_err(data_err(path))?;
    match scale {
        None => Ok(g),
        Some(f) => {
            let m = scaled_count(g.num_vertices(), f)?;
            Ok(downsample(&g, m)?.0)
        }
    }
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let plan = resolve_run(args)?;
    let info = DataInfo {
        model: format!("{:?}", plan.model).to_lowercase(),
        path: plan.data.display().to_string(),
        sha256: sha256_file(&plan.data)?,
        scale: plan.scale,
    };
    let p = plan.config.params;
    let manifest = match plan.model {
        RunModel::Bmm => {
            let data = FeatureDataset::load(&plan.data).map_err(data_err(&plan.data))?;
            let m = BernoulliMixture::new(data, p)?;
            run_to_dir(&m, &plan.config, &plan.out, plan.threads, &info)?
        }
        RunModel::Irm => {
            let g = load_scaled_network(&plan.data, plan.scale)?;
            let m = InfiniteRelational::new(g, p)?;
            run_to_dir(&m, &plan.config, &plan.out, plan.threads, &info)?
        }
    };
    println!(
        "{} restarts x {} chains x {} iterations written to {}",
        manifest.restarts.len(),
        plan.config.chains,
        plan.config.iterations,
        plan.out.display()
    );
    Ok(())
}

fn cmd_generate(
    model: GenModel,
    d: usize,
    (blocks, size, p_in, p_out): (usize, usize, f64, f64),
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    let (text, truth) = match model {
        GenModel::Bmm => {
            let (data, z) = generate_bmm(d, seed)?;
            (data.to_csv(), z)
        }
        GenModel::Irm => {
            let (g, z) = planted_network(blocks, size, p_in, p_out, seed)?;
            (g.to_edge_list(), z)
        }
        GenModel::Toy => {
            let g = toy_network();
            (g.to_edge_list(), crate::Partition::singletons(g.num_vertices()))
        }
    };
    write_file(out, &text)?;
    if model != GenModel::Toy {
        let mut side = out.as_os_str().to_owned();
        side.push(".truth");
        write_file(Path::new(&side), &format!("{}\n", truth.canonical()))?;
    }
    Ok(())
}

fn read_observations(path: &Path) -> CliResult<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.split_whitespace()
        .map(|w| match w.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(CliError::Data(format!("{}: bad observation {w:?}", path.display()))),
        })
        .collect()
}

fn cmd_diagnose(traces: &str, quantity: &str, pairs: Option<&Path>, burn_in: f64, out: &Path) -> CliResult<()> {
    let quantity: Quantity = quantity.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let mut files: Vec<PathBuf> = glob::glob(traces)
        .map_err(|e| CliError::Usage(format!("bad glob: {e}")))?
        .filter_map(|p| p.ok())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no trace files match {traces:?}")));
    }
    let observations = match (quantity, pairs) {
        (Quantity::Indicator, None) => {
            return Err(CliError::Usage("--quantity indicator needs --pairs".into()));
        }
        (_, Some(p)) => read_observations(p)?,
        (_, None) => Vec::new(),
    };
    let report = diagnose(&files, quantity, &observations, burn_in)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(out, &(json + "\n"))?;
    write_file(&out.with_extension("csv"), &report.to_csv())?;
    print!("{}", report.to_csv());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify_exact(
    sampler: Sampler,
    iters: usize,
    chains: Option<usize>,
    seed: u64,
    data: Option<&Path>,
    interlace: bool,
    l: usize,
    table: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let g = match data {
        Some(p) => load_network(p).map_err(data_err(p))?,
        None => toy_network(),
    };
    let m = InfiniteRelational::new(g, ModelParams::default())?;
    let config = RunConfig {
        sampler,
        chains: chains.unwrap_or(if sampler.is_adaptive() { 4 } else { 1 }),
        iterations: iters,
        seed,
        restarts: 1,
        l,
        interlace,
        ..RunConfig::default()
    };
    if let Some(t) = table {
        write_file(t, &exact_posterior(&m)?.to_csv())?;
    }
    let report = verify_exact(&m, &config)?;
    write_file(out, &report.to_csv())?;
    println!(
        "sampler={sampler} samples={} total_variation={:.6} max_deviation={:.6}",
        report.samples, report.total_variation, report.max_deviation
    );
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate {
            model,
            d,
            blocks,
            block_size,
            p_in,
            p_out,
            seed,
            out,
        } => cmd_generate(model, d, (blocks, block_size, p_in, p_out), seed, &out),
        Command::Run(args) => cmd_run(args),
        Command::Diagnose {
            traces,
            quantity,
            pairs,
            burn_in,
            out,
        } => cmd_diagnose(&traces, &quantity, pairs.as_deref(), burn_in, &out),
        Command::VerifyExact {
            sampler,
            iters,
            chains,
            seed,
            data,
            interlace,
            l,
            table,
            out,
        } => cmd_verify_exact(sampler, iters, chains, seed, data.as_deref(), interlace, l, table.as_deref(), &out),
    }
}

/// Runs the command line and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_syntax() {
        let c = parse_config("# comment\nchains = 4\nburn-in=0.3 # trailing\n").unwrap();
        assert_eq!(c["chains"], "4");
        assert_eq!(c["burn_in"], "0.3");
        assert!(parse_config("oops\n").is_err());
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "chains=3\nseed=9\nmodel=irm\ndata=x.txt\nout=o\n").unwrap();
        let args = RunArgs {
            chains: Some(5),
            config: Some(cfg),
            ..RunArgs::default()
        };
        let plan = resolve_run(args).unwrap();
        assert_eq!(plan.config.chains, 5);
        assert_eq!(plan.config.seed, 9);
        assert_eq!(plan.config.l, 5);
        assert_eq!(plan.model, RunModel::Irm);
    }

    #[test]
    fn error_classes() {
        assert_eq!(CliError::from(Error::InvalidParameter("x".into())).code(), 1);
        assert_eq!(CliError::from(Error::Data("x".into())).code(), 2);
        assert_eq!(CliError::from(Error::NotANumber("x")).code(), 3);
    }
}
