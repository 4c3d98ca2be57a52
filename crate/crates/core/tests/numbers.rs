mod common;

use common::{permute, top_degree};
use hassett_core::numbers::{dimension, hassett_number, relative_hassett_correlator};
use hassett_core::partitions::{enumerate_totally_unstable, relative_unstable_partitions, SetPartition, WeightData};
use hassett_core::rational::rat;
use hassett_core::witten::witten_correlator;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;

fn weights(n: usize) -> impl Strategy<Value = WeightData> {
    prop::collection::vec((1i64..=8).prop_flat_map(|d| (1..=d, Just(d))), n)
        .prop_map(|v| WeightData::new(v.into_iter().map(|(p, d)| rat(p, d)).collect()).unwrap())
}

fn case() -> impl Strategy<Value = (u32, WeightData, Vec<u32>, Vec<usize>)> {
    (0u32..=2, 1usize..=5)
        .prop_filter("needs a top-degree vector", |(g, n)| dimension(*g, *n) >= 0)
        .prop_flat_map(|(g, n)| {
            let ks = top_degree(g, n);
            (
                Just(g),
                weights(n),
                prop::sample::select(ks),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            )
        })
}

/// Signed sum over `partitions` of either plain correlators or integrals
/// on the collapsed larger-weight space.
fn partition_sum(partitions: &[SetPartition], g: u32, fine: &WeightData, k: &[u32], collapsed: bool) -> BigRational {
    let n = fine.len();
    let mut total = BigRational::zero();
    'partitions: for p in partitions {
        let (mut weights, mut exps) = (Vec::new(), Vec::new());
        for part in p.parts() {
            let alpha: i64 = part.iter().map(|&i| k[i] as i64).sum();
            let Ok(e) = u32::try_from(alpha - part.len() as i64 + 1) else {
                continue 'partitions;
            };
            weights.push(if let [i] = part[..] {
                fine.weights()[i].clone()
            } else {
                BigRational::one()
            });
            exps.push(e);
        }
        let v = if collapsed {
            hassett_number(g, &WeightData::new(weights).unwrap(), &exps).unwrap()
        } else {
            witten_correlator(g, &exps)
        };
        total += if (n + p.len()).is_multiple_of(2) { v } else { -v };
    }
    total
}

#[test]
fn unit_weights_reduce_to_plain_correlators() {
    for g in 0..=2 {
        for n in 1..=5 {
            for k in top_degree(g, n) {
                assert_eq!(
                    hassett_number(g, &WeightData::ones(n), &k).unwrap(),
                    witten_correlator(g, &k)
                );
            }
        }
    }
}

#[test]
fn both_partition_filter_and_collapsed_summands_are_needed() {
    let fine = WeightData::parse("2/3,2/3,1/2,1/2").unwrap();
    let coarse = WeightData::diagonal(2, 4);
    let relative = relative_unstable_partitions(&fine, &coarse).unwrap();
    let fine_set = enumerate_totally_unstable(&fine);
    let mut difference: Vec<_> = enumerate_totally_unstable(&coarse)
        .into_iter()
        .filter(|p| !fine_set.contains(p))
        .collect();
    difference.push(SetPartition::singletons(4));

    let mut failures = [0; 3];
    for k in top_degree(1, 4) {
        let direct = hassett_number(1, &coarse, &k).unwrap();
        assert_eq!(relative_hassett_correlator(1, &fine, &coarse, &k).unwrap(), direct);
        assert_eq!(partition_sum(&relative, 1, &fine, &k, true), direct);
        failures[0] += (partition_sum(&relative, 1, &fine, &k, false) != direct) as usize;
        failures[1] += (partition_sum(&difference, 1, &fine, &k, true) != direct) as usize;
        failures[2] += (partition_sum(&difference, 1, &fine, &k, false) != direct) as usize;
    }
    assert_eq!(failures, [26, 25, 30]);

    let k = [1, 1, 1, 1];
    assert_eq!(hassett_number(1, &coarse, &k).unwrap(), rat(-1, 8));
    assert_eq!(partition_sum(&relative, 1, &fine, &k, false), rat(-1, 12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_equivariance((g, a, k, perm) in case()) {
        prop_assert_eq!(
            hassett_number(g, &a, &k).unwrap(),
            hassett_number(g, &a.permuted(&perm), &permute(&k, &perm)).unwrap()
        );
    }

    #[test]
    fn off_degree_vectors_vanish((g, a, k, _p) in case(), bump in 1u32..=2) {
        let mut off = k.clone();
        off[0] += bump;
        prop_assert!(hassett_number(g, &a, &off).unwrap().is_zero());
    }

    #[test]
    fn relative_reduction_composes((g, a, k, _p) in case(), shrink in prop::collection::vec(1i64..=4, 5)) {
        let smaller = WeightData::new(
            a.weights().iter().zip(&shrink).map(|(w, s)| w * rat(*s, 4)).collect()
        ).unwrap();
        let direct = hassett_number(g, &smaller, &k).unwrap();
        prop_assert_eq!(relative_hassett_correlator(g, &a, &smaller, &k).unwrap(), direct.clone());
        prop_assert_eq!(relative_hassett_correlator(g, &WeightData::ones(a.len()), &smaller, &k).unwrap(), direct);
    }
}
