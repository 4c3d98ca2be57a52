mod common;

use common::{compositions, permute};
use hassett_core::cycles::{
    edge_polynomial, expressions_equal, has_support_property, integrate, pullback_psi_monomial, PinwheelExpression,
    PullbackOracle,
};
use hassett_core::numbers::hassett_number;
use hassett_core::partitions::WeightData;
use hassett_core::rational::rat;
use hassett_core::Error;
use proptest::prelude::*;

fn stable_case() -> impl Strategy<Value = (u32, WeightData, Vec<u32>, Vec<usize>)> {
    (0u32..=1, 2usize..=5)
        .prop_flat_map(|(g, n)| {
            let w = prop::collection::vec((1i64..=6).prop_flat_map(|d| (1..=d, Just(d))), n)
                .prop_map(|v| WeightData::new(v.into_iter().map(|(p, d)| rat(p, d)).collect()).unwrap());
            let ks: Vec<Vec<u32>> = (0..=3).flat_map(|t| compositions(t, n)).collect();
            (
                Just(g),
                w,
                prop::sample::select(ks),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            )
        })
        .prop_filter("stable space", |(g, a, _, _)| a.is_stable(*g))
}

#[test]
fn edge_polynomials_have_alternating_unit_coefficients() {
    assert!(edge_polynomial(0).is_zero());
    for alpha in 1..=6 {
        let e = edge_polynomial(alpha);
        assert_eq!(e.degree(), Some(alpha - 1));
        assert_eq!(e.coefficients().len(), alpha as usize);
    }
}

#[test]
fn halves_in_genus_zero_integrate_to_minus_three() {
    let a = WeightData::diagonal(2, 5);
    let expr = pullback_psi_monomial(0, &a, &[2, 0, 0, 0, 0]).unwrap();
    assert_eq!(integrate(&expr).unwrap(), rat(-3, 1));
    assert!(matches!(
        integrate(&pullback_psi_monomial(0, &a, &[1, 0, 0, 0, 0]).unwrap()),
        Err(Error::DegreeMismatch { .. })
    ));
}

#[test]
fn serialized_form_round_trips_through_json() {
    let a = WeightData::parse("7/8,2/3,1/3,1/4,1/6").unwrap();
    let expr = pullback_psi_monomial(0, &a, &[0, 1, 1, 0, 0]).unwrap();
    let json = serde_json::to_string(&expr.to_serialized()).unwrap();
    let back = PinwheelExpression::from_serialized(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back, expr);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_form_and_inductive_product_agree((g, a, k, _p) in stable_case()) {
        let closed = pullback_psi_monomial(g, &a, &k).unwrap();
        let inductive = PullbackOracle::new().pullback(g, &a, &k).unwrap();
        prop_assert!(expressions_equal(&closed, &inductive).unwrap(), "{} vs {}", closed, inductive);
        prop_assert!(has_support_property(&closed, &k));
    }

    #[test]
    fn pullback_is_permutation_equivariant((g, a, k, perm) in stable_case()) {
        let moved = pullback_psi_monomial(g, &a.permuted(&perm), &permute(&k, &perm)).unwrap();
        prop_assert_eq!(moved, pullback_psi_monomial(g, &a, &k).unwrap().permuted(&perm));
    }

    #[test]
    fn top_degree_part_integrates_to_the_number((g, a, _k, _p) in stable_case(), pick in any::<prop::sample::Index>()) {
        let n = a.len();
        let d = 3 * g as i64 - 3 + n as i64;
        prop_assume!(d >= 0);
        let ks = compositions(d as u32, n);
        let k = &ks[pick.index(ks.len())];
        let expr = pullback_psi_monomial(g, &a, k).unwrap();
        prop_assert_eq!(integrate(&expr).unwrap(), hassett_number(g, &a, k).unwrap());
    }
}
