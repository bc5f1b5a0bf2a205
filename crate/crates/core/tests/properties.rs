mod common;

use partition_mcmc::datagen::downsample;
use partition_mcmc::diagnostics::{autocorrelation_time, block_fraction, gelman_rubin};
use partition_mcmc::model::{NetworkDataset, PartitionModel, Target};
use partition_mcmc::oracle::DirectLikelihood;
use partition_mcmc::state::State;
use partition_mcmc::Partition;
use proptest::prelude::*;
use rand::Rng;

fn arb_labels() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..5, 1..12)
}

/// Applies `moves` random joint reassignments, each checked against the
/// direct likelihood, and returns the final state.
fn random_moves<'m, M: PartitionModel + DirectLikelihood>(
    m: &'m M,
    labels: &[usize],
    moves: usize,
    seed: u64,
) -> State<'m, M> {
    let mut r = common::rng(seed);
    let mut s = State::from_partition(m, &Partition::from_labels(labels)).unwrap();
    for _ in 0..moves {
        let asg = s.assignment();
        let b = asg.active()[r.random_range(0..asg.num_blocks())];
        let members = asg.members(b).to_vec();
        let set: Vec<usize> = members.iter().copied().filter(|_| r.random_bool(0.5)).collect();
        let set = if set.is_empty() { vec![members[0]] } else { set };
        let others: Vec<usize> = asg.active().iter().copied().filter(|&o| o != b).collect();
        let target = if others.is_empty() || r.random_bool(0.3) {
            Target::New
        } else {
            Target::Block(others[r.random_range(0..others.len())])
        };
        let delta = s.delta_log_joint(&set, target).unwrap();
        let before = m.direct_log_joint(&s.partition());
        s.move_set(&set, target).unwrap();
        let after = m.direct_log_joint(&s.partition());
        assert!((delta - (after - before)).abs() < 1e-9, "{delta} vs {}", after - before);
    }
    s
}

proptest! {
    #[test]
    fn canonical_labels_round_trip(a in arb_labels()) {
        let z = Partition::from_labels(&a);
        let labels = z.canonical_labels(a.len()).unwrap();
        prop_assert_eq!(Partition::from_labels(&labels).canonical(), z.canonical());
        let text = z.canonical().to_string();
        let back: Partition = text.parse().unwrap();
        prop_assert_eq!(back.canonical(), z.canonical());
    }

    #[test]
    fn irm_moves_match_direct_likelihood(a in arb_labels(), seed in any::<u64>()) {
        let m = common::random_irm(a.len(), seed);
        let s = random_moves(&m, &a, 8, seed ^ 1);
        prop_assert!(s.stats_match_rebuild());
        prop_assert!((s.log_joint() - m.direct_log_joint(&s.partition())).abs() < 1e-9);
    }

    #[test]
    fn bmm_moves_match_direct_likelihood(a in arb_labels(), seed in any::<u64>()) {
        let m = common::random_bmm(a.len(), 3, seed);
        let s = random_moves(&m, &a, 8, seed ^ 2);
        prop_assert!(s.stats_match_rebuild());
        prop_assert!((s.log_joint() - m.direct_log_joint(&s.partition())).abs() < 1e-9);
    }

    #[test]
    fn block_fraction_is_monotone(a in arb_labels()) {
        let z = Partition::from_labels(&a);
        let f: Vec<f64> = (1..=z.num_blocks()).map(|k| block_fraction(&z, k)).collect();
        prop_assert!(f.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(f[0] >= 1.0 / z.num_blocks() as f64 - 1e-12);
        prop_assert!((f[f.len() - 1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn autocorrelation_time_is_at_least_one(xs in prop::collection::vec(-10.0f64..10.0, 8..200)) {
        if let Ok(e) = autocorrelation_time(&xs) {
            prop_assert!(e.value >= 1.0);
        }
    }

    #[test]
    fn rhat_is_affine_invariant(
        xs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 20), 2..5),
        scale in 0.1f64..10.0,
        shift in -100.0f64..100.0,
    ) {
        let ys: Vec<Vec<f64>> = xs.iter().map(|s| s.iter().map(|x| scale * x + shift).collect()).collect();
        let a = gelman_rubin(&xs, 0.2).unwrap().value;
        let b = gelman_rubin(&ys, 0.2).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }

    #[test]
    fn downsample_is_idempotent(n in 2usize..20, seed in any::<u64>(), m in 1usize..20) {
        let mut r = common::rng(seed);
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|_| r.random_bool(0.3))
            .collect();
        let g = NetworkDataset::from_edges(n, &edges).unwrap();
        let m = m.min(n);
        let (once, kept) = downsample(&g, m).unwrap();
        prop_assert_eq!(kept.len(), m);
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        let (twice, again) = downsample(&once, m).unwrap();
        prop_assert_eq!(again, (0..m).collect::<Vec<_>>());
        prop_assert_eq!(twice.edges(), once.edges());
    }
}
