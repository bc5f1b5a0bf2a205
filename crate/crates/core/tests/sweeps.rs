mod common;

use partition_mcmc::datagen::toy_network;
use partition_mcmc::kernel::Sampler;
use partition_mcmc::model::{
    crp_log_density, CrpTable, InfiniteRelational, ModelParams, PartitionModel, Target,
};
use partition_mcmc::oracle::{enumerate_partitions, exact_posterior, verify_exact, DirectLikelihood};
use partition_mcmc::orchestrator::RunConfig;
use partition_mcmc::state::{Assignment, State};
use partition_mcmc::sweep::{full_candidates, full_sweep_step};
use partition_mcmc::Partition;

/// Likelihood that ignores the partition: the posterior is the CRP prior.
struct Flat {
    n: usize,
    params: ModelParams,
    crp: CrpTable,
}

impl Flat {
    fn new(n: usize, alpha: f64) -> Self {
        let params = ModelParams::new(alpha, 1.0, 1.0).unwrap();
        Self { n, params, crp: CrpTable::new(alpha, n) }
    }
}

impl PartitionModel for Flat {
    type Stats = ();
    type Move = ();

    fn num_observations(&self) -> usize {
        self.n
    }
    fn params(&self) -> &ModelParams {
        &self.params
    }
    fn crp(&self) -> &CrpTable {
        &self.crp
    }
    fn empty_stats(&self) {}
    fn prepare_move(&self, _: &Assignment, _: &[usize]) {}
    fn delta_log_likelihood(&self, _: &(), _: &Assignment, _: &(), _: Option<usize>, _: Target) -> f64 {
        0.0
    }
    fn detach(&self, _: &mut (), _: &(), _: usize) {}
    fn attach(&self, _: &mut (), _: &(), _: usize) {}
    fn log_likelihood(&self, _: &(), _: &Assignment) -> f64 {
        0.0
    }
    fn stats_from_scratch(&self, _: &Assignment) {}
}

#[test]
fn flat_posterior_is_the_prior() {
    let two = exact_posterior(&Flat::new(2, 1.0)).unwrap();
    assert_eq!(two.len(), 2);
    for (_, p) in two.entries() {
        assert!((p - 0.5).abs() < 1e-12);
    }
    let m = Flat::new(5, 1.7);
    let table = exact_posterior(&m).unwrap();
    for (z, p) in table.entries() {
        assert!((p - crp_log_density(z, 1.7).unwrap().exp()).abs() < 1e-12);
    }
}

#[test]
fn samplers_recover_the_prior_under_a_flat_likelihood() {
    let m = Flat::new(4, 0.8);
    for (sampler, chains) in [(Sampler::Gibbs, 1), (Sampler::Sm, 1), (Sampler::Srm, 1), (Sampler::Arm, 3)] {
        let cfg = RunConfig {
            sampler,
            chains,
            iterations: 30_000 / chains,
            seed: 3,
            interlace: false,
            ..RunConfig::default()
        };
        let r = verify_exact(&m, &cfg).unwrap();
        assert!(r.total_variation < 0.03, "{sampler}: TV {}", r.total_variation);
    }
}

/// Conditional of observation `h` given the rest, by brute force over the
/// partitions that agree with `z` off `h`.
fn exact_conditional(m: &InfiniteRelational, z: &Partition, h: usize) -> Vec<(Partition, f64)> {
    let n = m.num_observations();
    let rest = z.remove_set(&[h]).canonical();
    let mut out: Vec<(Partition, f64)> = enumerate_partitions(n)
        .unwrap()
        .into_iter()
        .filter(|w| w.remove_set(&[h]).canonical() == rest)
        .map(|w| {
            let lq = m.direct_log_joint(&w);
            (w, lq)
        })
        .collect();
    let top = out.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = out.iter().map(|x| (x.1 - top).exp()).sum();
    for x in &mut out {
        x.1 = (x.1 - top).exp() / total;
    }
    out
}

#[test]
fn single_site_sweep_matches_exact_conditional() {
    let m = InfiniteRelational::new(toy_network(), ModelParams::default()).unwrap();
    let mut r = common::rng(7);
    for z in enumerate_partitions(4).unwrap() {
        for h in 0..4 {
            let cond = exact_conditional(&m, &z, h);
            let start = State::from_partition(&m, &z).unwrap();
            assert_eq!(full_candidates(start.assignment(), &[h]).unwrap().len(), cond.len());
            let draws = 20_000;
            let mut counts = vec![0usize; cond.len()];
            for _ in 0..draws {
                let mut s = start.clone();
                full_sweep_step(&mut s, &[h], &mut r).unwrap();
                let w = s.partition().canonical();
                counts[cond.iter().position(|c| c.0.canonical() == w).unwrap()] += 1;
            }
            for (c, (_, p)) in counts.iter().zip(&cond) {
                let f = *c as f64 / draws as f64;
                // about five standard errors
                let tol = 5.0 * (p * (1.0 - p) / draws as f64).sqrt() + 1e-3;
                assert!((f - p).abs() < tol, "z={z} h={h}: {f} vs {p}");
            }
        }
    }
}
