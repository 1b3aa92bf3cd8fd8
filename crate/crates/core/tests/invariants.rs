#[path = "support/invariants.rs"]
mod support;

use proptest::prelude::*;

use rgbt_core::tensor::Tensor;
use support::{fused_pair, gate_values, orthogonal_to, self_sup};

#[test]
fn seeded_loss_identities() {
    support::check_loss_identities(200, 1).unwrap();
}

#[test]
fn seeded_fusion_consistency() {
    support::check_fusion(100, 2).unwrap();
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

proptest! {
    #[test]
    fn loss_is_invariant_to_positive_scaling(
        (u, v) in (2usize..32).prop_flat_map(|n| (vector(n), vector(n))),
        a in 1e-3f64..1e3,
        b in 1e-3f64..1e3,
    ) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
        let au: Vec<f64> = u.iter().map(|x| a * x).collect();
        let bv: Vec<f64> = v.iter().map(|x| b * x).collect();
        prop_assert!((self_sup(&au, &bv) - self_sup(&u, &v)).abs() < 1e-9);
    }

    #[test]
    fn loss_stays_in_zero_to_four(
        (u, v) in (2usize..32).prop_flat_map(|n| (vector(n), vector(n))),
    ) {
        let l = self_sup(&u, &v);
        prop_assert!((-1e-12..=4.0 + 1e-12).contains(&l), "{l}");
    }

    #[test]
    fn orthogonal_vectors_give_two(
        (u, w) in (2usize..32).prop_flat_map(|n| (vector(n), vector(n))),
    ) {
        prop_assume!(u.iter().map(|x| x * x).sum::<f64>() > 1e-2);
        let v = orthogonal_to(&u, &w);
        prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-2);
        prop_assert!((self_sup(&u, &v) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stage_two_with_identical_streams_is_stage_one(
        values in prop::collection::vec(-100.0f64..100.0, 2 * 8 * 3 * 3),
        weights in prop::collection::vec(0.0f64..1.0, 2 * 8),
    ) {
        let r = Tensor::from_vec(&[2, 8, 3, 3], values).unwrap();
        let w = Tensor::from_vec(&[2, 8], weights).unwrap();
        let (one, two) = fused_pair(&r, &w);
        prop_assert!(one.iter().zip(&two).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn gates_are_strictly_between_zero_and_one(
        p in prop::collection::vec(-10.0f64..10.0, 16),
        seed in 0u64..1000,
    ) {
        let p = Tensor::from_vec(&[1, 16], p).unwrap();
        for v in gate_values(16, 4, rgbt_core::tensor::nn::Init::UniformFanIn, &p, seed) {
            prop_assert!(v > 0.0 && v < 1.0, "{v}");
        }
    }
}
