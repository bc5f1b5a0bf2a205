//! Run output: per-restart trace, timing and state files plus a manifest.
//!
//! Trace and state files depend only on seeds and configuration. Wall-clock
//! measurements go to the timing file so that the others stay
//! byte-reproducible.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::{Ensemble, RunConfig, StepKind, StepRecord};
use crate::model::PartitionModel;
use crate::partition::Partition;

pub const TRACE_HEADER: &str = "iteration,chain,log_q,blocks,kind,accepted,log_t_fwd,log_t_rev";
pub const TIMING_HEADER: &str = "iteration,chain,kernel_ns,gibbs_ns";
pub const STATES_HEADER: &str = "iteration,chain,partition";

pub fn trace_file(dir: &Path, restart: usize) -> PathBuf {
    dir.join(format!("trace_r{restart}.csv"))
}

pub fn timing_file(trace: &Path) -> PathBuf {
    sibling(trace, "timing")
}

pub fn states_file(trace: &Path) -> PathBuf {
    sibling(trace, "states")
}

fn sibling(trace: &Path, stem: &str) -> PathBuf {
    let name = trace.file_name().and_then(|s| s.to_str()).unwrap_or_default();
    let suffix = name.strip_prefix("trace").unwrap_or(name);
    trace.with_file_name(format!("{stem}{suffix}"))
}

/// One row of a trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub chain: usize,
    pub log_q: f64,
    pub blocks: usize,
    pub kind: StepKind,
    pub accepted: bool,
    /// NaN when no proposal was made.
    pub log_t_fwd: f64,
    pub log_t_rev: f64,
}

fn opt_float(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

fn parse_float(s: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse(format!("bad integer {s:?}")))
}

/// Streaming writer for the three per-restart files.
pub struct RestartWriter {
    trace: BufWriter<File>,
    timing: BufWriter<File>,
    states: BufWriter<File>,
}

impl RestartWriter {
    pub fn create(trace_path: &Path) -> Result<Self> {
        let open = |p: &Path, header: &str| -> Result<BufWriter<File>> {
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "{header}")?;
            Ok(w)
        };
        Ok(Self {
            trace: open(trace_path, TRACE_HEADER)?,
            timing: open(&timing_file(trace_path), TIMING_HEADER)?,
            states: open(&states_file(trace_path), STATES_HEADER)?,
        })
    }

    pub fn write(&mut self, r: &StepRecord) -> Result<()> {
        writeln!(
            self.trace,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            r.chain,
            r.log_q,
            r.blocks,
            r.kind,
            r.accepted as u8,
            opt_float(r.log_t_fwd),
            opt_float(r.log_t_rev)
        )?;
        writeln!(self.timing, "{},{},{},{}", r.iteration, r.chain, r.kernel_ns, r.gibbs_ns)?;
        writeln!(
            self.states,
            "{},{},\"{}\"",
            r.iteration,
            r.chain,
            Partition::from_labels(&r.labels).canonical()
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.trace.flush()?;
        self.timing.flush()?;
        self.states.flush()?;
        Ok(())
    }
}

fn data_lines(path: &Path, header: &str) -> Result<Vec<String>> {
    let f = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = BufReader::new(f).lines();
    match lines.next() {
        Some(Ok(h)) if h == header => {}
        _ => return Err(Error::Parse(format!("{}: unexpected header", path.display()))),
    }
    lines
        .filter(|l| !matches!(l, Ok(s) if s.is_empty()))
        .map(|l| l.map_err(Error::from))
        .collect()
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    data_lines(path, TRACE_HEADER)?
        .iter()
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Parse(format!("trace row {line:?}")));
            }
            Ok(TraceRow {
                iteration: parse_usize(f[0])?,
                chain: parse_usize(f[1])?,
                log_q: parse_float(f[2])?,
                blocks: parse_usize(f[3])?,
                kind: f[4].parse()?,
                accepted: f[5] == "1",
                log_t_fwd: parse_float(f[6])?,
                log_t_rev: parse_float(f[7])?,
            })
        })
        .collect()
}

/// `(chain, kernel_ns, gibbs_ns)` per row.
pub fn read_timing(path: &Path) -> Result<Vec<(usize, u64, u64)>> {
    data_lines(path, TIMING_HEADER)?
        .iter()
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("timing row {line:?}")));
            }
            let ns = |s: &str| s.parse::<u64>().map_err(|_| Error::Parse(format!("bad time {s:?}")));
            Ok((parse_usize(f[1])?, ns(f[2])?, ns(f[3])?))
        })
        .collect()
}

/// `(chain, partition)` per row.
pub fn read_states(path: &Path) -> Result<Vec<(usize, Partition)>> {
    data_lines(path, STATES_HEADER)?
        .iter()
        .map(|line| {
            let mut f = line.splitn(3, ',');
            let _it = f.next();
            let chain = parse_usize(f.next().unwrap_or_default())?;
            let z = f.next().unwrap_or_default().trim_matches('"').parse()?;
            Ok((chain, z))
        })
        .collect()
}

/// Files written for one restart.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RestartFiles {
    pub restart: usize,
    pub trace: String,
    pub timing: String,
    pub states: String,
}

/// Everything needed to repeat a run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    pub model: String,
    pub data: String,
    pub data_sha256: String,
    pub scale: Option<f64>,
    pub observations: usize,
    pub threads: usize,
    pub restarts: Vec<RestartFiles>,
    pub kernel_seconds: f64,
    pub gibbs_seconds: f64,
}

/// Description of the data a run was made on, echoed into the manifest.
#[derive(Clone, Debug, Default)]
pub struct DataInfo {
    pub model: String,
    pub path: String,
    pub sha256: String,
    pub scale: Option<f64>,
}

/// Runs every restart of `config` and writes its files into `dir`.
pub fn run_to_dir<M: PartitionModel>(
    model: &M,
    config: &RunConfig,
    dir: &Path,
    threads: usize,
    info: &DataInfo,
) -> Result<RunManifest> {
    config.validate()?;
    std::fs::create_dir_all(dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    let (mut kernel_ns, mut gibbs_ns) = (0u128, 0u128);
    let mut restarts = Vec::with_capacity(config.restarts);
    for r in 0..config.restarts {
        let trace = trace_file(dir, r);
        let mut out = RestartWriter::create(&trace)?;
        let mut ensemble = pool.install(|| Ensemble::new(model, config, r))?;
        for _ in 0..config.iterations {
            for rec in pool.install(|| ensemble.step())? {
                kernel_ns += rec.kernel_ns as u128;
                gibbs_ns += rec.gibbs_ns as u128;
                out.write(&rec)?;
            }
        }
        out.finish()?;
        let name = |p: PathBuf| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        restarts.push(RestartFiles {
            restart: r,
            timing: name(timing_file(&trace)),
            states: name(states_file(&trace)),
            trace: name(trace),
        });
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        model: info.model.clone(),
        data: info.path.clone(),
        data_sha256: info.sha256.clone(),
        scale: info.scale,
        observations: model.num_observations(),
        threads,
        restarts,
        kernel_seconds: kernel_ns as f64 * 1e-9,
        gibbs_seconds: gibbs_ns as f64 * 1e-9,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Precondition(format!("manifest: {e}")))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}
