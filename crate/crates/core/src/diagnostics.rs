//! Convergence and efficiency statistics computed from sampler traces.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::StepKind;
use crate::partition::Partition;
use crate::trace::{read_states, read_timing, read_trace, states_file, timing_file};

/// An estimate together with a flag for degenerate input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub degenerate: bool,
}

fn check_finite(series: &[f64]) -> Result<()> {
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("trace contains non-finite values".into()));
    }
    Ok(())
}

/// Integrated autocorrelation time `1 + 2 Σ_{τ=1}^{m} r(τ)`, where the sum
/// stops before the first lag whose sample autocorrelation is not positive.
/// A constant series has no correlation structure and yields 1, flagged.
pub fn autocorrelation_time(series: &[f64]) -> Result<Estimate> {
    let n = series.len();
    if n < 10 {
        return Err(Error::InvalidParameter(format!(
            "autocorrelation needs at least 10 samples, got {n}"
        )));
    }
    check_finite(series)?;
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = dev.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return Ok(Estimate {
            value: 1.0,
            degenerate: true,
        });
    }
    let mut tau = 1.0;
    for lag in 1..n {
        let c: f64 = dev[..n - lag].iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>()
            / n as f64;
        let r = c / c0;
        if r <= 0.0 {
            break;
        }
        tau += 2.0 * r;
    }
    Ok(Estimate {
        value: tau,
        degenerate: false,
    })
}

/// Potential scale reduction across restarts. The first `burn_in` fraction
/// of every series is discarded and all series are cut to the shortest.
///
/// Zero within-series variance gives 1 when the series also agree with each
/// other and +∞ when they do not; both are flagged.
pub fn gelman_rubin(restarts: &[Vec<f64>], burn_in: f64) -> Result<Estimate> {
    if restarts.len() < 2 {
        return Err(Error::InvalidParameter("R-hat needs at least two restarts".into()));
    }
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::InvalidParameter(format!("burn-in {burn_in} outside [0, 1)")));
    }
    let kept: Vec<&[f64]> = restarts
        .iter()
        .map(|s| &s[(s.len() as f64 * burn_in).floor() as usize..])
        .collect();
    let n = kept.iter().map(|s| s.len()).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "R-hat needs at least 4 retained samples per restart, got {n}"
        )));
    }
    for s in &kept {
        check_finite(s)?;
    }
    let m = kept.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = kept.iter().map(|s| s[..n].iter().sum::<f64>() / nf).collect();
    let w = kept
        .iter()
        .zip(&means)
        .map(|(s, mu)| s[..n].iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m;
    let grand = means.iter().sum::<f64>() / m;
    let b = nf * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0);
    if w <= 0.0 {
        let value = if b <= 0.0 { 1.0 } else { f64::INFINITY };
        return Ok(Estimate {
            value,
            degenerate: true,
        });
    }
    let value = (((nf - 1.0) / nf * w + b / nf) / w).sqrt();
    Ok(Estimate {
        value,
        degenerate: b <= 0.0,
    })
}

/// Fraction of observations in the `k` largest blocks of each partition.
pub fn block_fraction_trace(series: &[Partition], k: usize) -> Result<Vec<f64>> {
    if k < 1 {
        return Err(Error::InvalidParameter("block rank starts at 1".into()));
    }
    Ok(series.iter().map(|z| block_fraction(z, k)).collect())
}

pub fn block_fraction(z: &Partition, k: usize) -> f64 {
    let mut sizes: Vec<usize> = z.blocks().iter().map(Vec::len).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return 0.0;
    }
    sizes.iter().take(k).sum::<usize>() as f64 / total as f64
}

/// `1` when `i` and `j` share a block, else `0`, per partition.
pub fn indicator_series(series: &[Partition], i: usize, j: usize) -> Result<Vec<f64>> {
    if i == j {
        return Err(Error::InvalidParameter("indicator needs two distinct observations".into()));
    }
    series
        .iter()
        .map(|z| Ok(if z.block_index_of(i)? == z.block_index_of(j)? { 1.0 } else { 0.0 }))
        .collect()
}

/// Indicator series from per-observation label vectors.
pub fn indicator_from_labels(labels: &[Vec<usize>], i: usize, j: usize) -> Vec<f64> {
    labels
        .iter()
        .map(|l| if l[i] == l[j] { 1.0 } else { 0.0 })
        .collect()
}

/// Largest autocorrelation time over all unordered pairs of `obs`.
pub fn max_pair_autocorrelation(labels: &[Vec<usize>], obs: &[usize]) -> Result<Estimate> {
    let mut best: Option<Estimate> = None;
    for (a, &i) in obs.iter().enumerate() {
        for &j in &obs[a + 1..] {
            let e = autocorrelation_time(&indicator_from_labels(labels, i, j))?;
            if best.is_none_or(|b| e.value > b.value) {
                best = Some(e);
            }
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("need at least two observations".into()))
}

/// Iterations re-expressed in Gibbs-sweep units: `iterations × total / gibbs`.
pub fn standardized_iterations(kernel_time: f64, gibbs_time: f64, iterations: f64) -> Result<f64> {
    if gibbs_time.is_nan() || gibbs_time <= 0.0 || kernel_time < 0.0 {
        return Err(Error::InvalidParameter(
            "standardisation needs positive Gibbs time and non-negative kernel time".into(),
        ));
    }
    Ok(iterations * (kernel_time + gibbs_time) / gibbs_time)
}

/// Accepted moves per attempted move, ×100.
pub fn accept_rate_percent(accepted: usize, attempted: usize) -> Option<f64> {
    (attempted > 0).then(|| 100.0 * accepted as f64 / attempted as f64)
}


/// Which per-iteration quantity a report is computed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    LogJoint,
    TopFrac,
    Indicator,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::LogJoint => "logjoint",
            Quantity::TopFrac => "topfrac",
            Quantity::Indicator => "indicator",
        }
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logjoint" => Ok(Quantity::LogJoint),
            "topfrac" => Ok(Quantity::TopFrac),
            "indicator" => Ok(Quantity::Indicator),
            _ => Err(Error::Parse(format!("unknown quantity {s:?}"))),
        }
    }
}

/// Summary of a set of restarts, one trace file each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub quantity: Quantity,
    pub restarts: usize,
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: f64,
    /// Autocorrelation time per restart and chain, after burn-in. For the
    /// indicator quantity each entry is the maximum over pairs.
    pub tau: Vec<Vec<f64>>,
    pub tau_mean: f64,
    pub tau_max: f64,
    /// Over restarts, on the per-iteration mean across chains. Absent for
    /// a single restart.
    pub rhat: Option<Estimate>,
    pub accept_rate_x100: Option<f64>,
    pub standardized_iterations: Option<f64>,
    pub warnings: Vec<String>,
}

impl DiagnosticsReport {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "quantity,restarts,chains,iterations,tau_mean,tau_max,rhat,rhat_degenerate,accept_rate_x100,standardized_iterations\n{},{},{},{},{},{},{},{},{},{}\n",
            self.quantity.name(),
            self.restarts,
            self.chains,
            self.iterations,
            self.tau_mean,
            self.tau_max,
            opt(self.rhat.map(|e| e.value)),
            self.rhat.map(|e| e.degenerate.to_string()).unwrap_or_default(),
            opt(self.accept_rate_x100),
            opt(self.standardized_iterations),
        )
    }
}

/// Per-chain series of `quantity` for one restart, in iteration order.
fn restart_series(
    trace: &Path,
    quantity: Quantity,
    observations: &[usize],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut per_chain: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    match quantity {
        Quantity::LogJoint => {
            for row in read_trace(trace)? {
                per_chain.entry(row.chain).or_insert_with(|| vec![Vec::new()])[0].push(row.log_q);
            }
        }
        Quantity::TopFrac => {
            for (chain, z) in read_states(&states_file(trace))? {
                per_chain.entry(chain).or_insert_with(|| vec![Vec::new()])[0].push(block_fraction(&z, 1));
            }
        }
        Quantity::Indicator => {
            let pairs: Vec<(usize, usize)> = observations
                .iter()
                .enumerate()
                .flat_map(|(a, &i)| observations[a + 1..].iter().map(move |&j| (i, j)))
                .collect();
            if pairs.is_empty() {
                return Err(Error::InvalidParameter("indicator needs at least two observations".into()));
            }
            for (chain, z) in read_states(&states_file(trace))? {
                let series = per_chain.entry(chain).or_insert_with(|| vec![Vec::new(); pairs.len()]);
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    series[k].push((z.block_index_of(i)? == z.block_index_of(j)?) as u8 as f64);
                }
            }
        }
    }
    Ok(per_chain.into_values().collect())
}

fn after_burn_in(s: &[f64], burn_in: f64) -> &[f64] {
    &s[(s.len() as f64 * burn_in).floor() as usize..]
}

/// Diagnostics over restarts, each given by its trace file; state and
/// timing files are found next to it.
pub fn diagnose(
    traces: &[PathBuf],
    quantity: Quantity,
    observations: &[usize],
    burn_in: f64,
) -> Result<DiagnosticsReport> {
    if traces.is_empty() {
        return Err(Error::Data("no trace files".into()));
    }
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::InvalidParameter(format!("burn-in {burn_in} outside [0, 1)")));
    }
    let mut warnings = Vec::new();
    let mut tau = Vec::new();
    let mut means = Vec::new();
    let (mut accepted, mut attempted) = (0usize, 0usize);
    let (mut kernel_ns, mut gibbs_ns, mut rows) = (0u128, 0u128, 0usize);
    let mut timing_complete = true;
    let mut shape: Option<(usize, usize)> = None;
    for trace in traces {
        for row in read_trace(trace)? {
            if matches!(row.kind, StepKind::Split | StepKind::Merge) {
                attempted += 1;
                accepted += row.accepted as usize;
            }
        }
        match read_timing(&timing_file(trace)) {
            Ok(t) => {
                rows += t.len();
                for (_, k, g) in t {
                    kernel_ns += k as u128;
                    gibbs_ns += g as u128;
                }
            }
            Err(_) => timing_complete = false,
        }
        let chains = restart_series(trace, quantity, observations)?;
        let len = chains.iter().map(|c| c[0].len()).min().unwrap_or(0);
        match shape {
            None => shape = Some((chains.len(), len)),
            Some(s) if s != (chains.len(), len) => {
                warnings.push(format!("{} has a different shape; series cut to the shortest", trace.display()));
                shape = Some((s.0.min(chains.len()), s.1.min(len)));
            }
            _ => {}
        }
        let mut row = Vec::new();
        for series in &chains {
            let mut best = f64::NEG_INFINITY;
            for s in series {
                best = best.max(autocorrelation_time(after_burn_in(s, burn_in))?.value);
            }
            row.push(best);
        }
        tau.push(row);
        let mean: Vec<f64> = (0..len)
            .map(|t| chains.iter().map(|c| c.iter().map(|s| s[t]).sum::<f64>() / c.len() as f64).sum::<f64>() / chains.len() as f64)
            .collect();
        means.push(mean);
    }
    let (chains, iterations) = shape.unwrap_or((0, 0));
    let rhat = if traces.len() >= 2 {
        Some(gelman_rubin(&means, burn_in)?)
    } else {
        warnings.push("single restart: R-hat omitted".into());
        None
    };
    let all: Vec<f64> = tau.iter().flatten().copied().collect();
    let standardized = if timing_complete && gibbs_ns > 0 && chains > 0 {
        let per_chain_iters = rows as f64 / (traces.len() * chains) as f64;
        standardized_iterations(kernel_ns as f64, gibbs_ns as f64, per_chain_iters).ok()
    } else {
        None
    };
    Ok(DiagnosticsReport {
        quantity,
        restarts: traces.len(),
        chains,
        iterations,
        burn_in,
        tau_mean: all.iter().sum::<f64>() / all.len().max(1) as f64,
        tau_max: all.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        tau,
        rhat,
        accept_rate_x100: accept_rate_percent(accepted, attempted),
        standardized_iterations: standardized,
        warnings,
    })
}
