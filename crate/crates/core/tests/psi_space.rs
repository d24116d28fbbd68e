use proptest::prelude::*;
use psiflat::psi::is_canonical;
use psiflat::verify::{random_dataset, random_net};
use psiflat::*;

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn factors(h: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.1f64..10.0, h)
}

#[test]
fn fig1_scaling_by_two() {
    let net = Mlp::from_flat(&[2, 1, 2], &[1.0, 2.0, 1.0, 3.0]).unwrap();
    let out = apply_scaling(&net, &ScalingVector::new(vec![2.0]).unwrap()).unwrap();
    assert_eq!(out.flatten(), vec![2.0, 4.0, 0.5, 1.5]);
    assert_eq!(out.predict(&[1.0, 1.0]).unwrap(), vec![3.0, 9.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaling_preserves_values_and_outputs(seed in 0u64..10_000, c in factors(8)) {
        let net = random_net(&[3, 4, 4, 2], seed);
        let scaled = apply_scaling(&net, &ScalingVector::new(c).unwrap()).unwrap();
        let a = extract_basis(&net).unwrap().values;
        let b = extract_basis(&scaled).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(rel(*x, *y) <= 1e-9);
        }
        let x = [0.3, -0.7, 1.1];
        let (p, q) = (net.predict(&x).unwrap(), scaled.predict(&x).unwrap());
        for (x, y) in p.iter().zip(&q) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn equivalent_nets_share_a_canonical_form(seed in 0u64..10_000, c in factors(6)) {
        let net = random_net(&[2, 3, 3, 2], seed);
        let scaled = apply_scaling(&net, &ScalingVector::new(c).unwrap()).unwrap();
        let a = canonicalize(&net).unwrap().net;
        let b = canonicalize(&scaled).unwrap().net;
        prop_assert!(is_canonical(&a) && is_canonical(&b));
        for (x, y) in a.flatten().iter().zip(b.flatten()) {
            prop_assert!(rel(*x, y) <= 1e-12);
        }
    }

    #[test]
    fn canonicalize_is_idempotent(seed in 0u64..10_000) {
        let once = canonicalize(&random_net(&[3, 3, 3, 3, 2], seed)).unwrap().net;
        let twice = canonicalize(&once).unwrap();
        prop_assert!(twice.applied.as_slice().iter().all(|&c| c == 1.0));
        prop_assert_eq!(twice.net, once);
    }

    #[test]
    fn projection_round_trip(seed in 0u64..10_000, dir in proptest::collection::vec(-1.0f64..1.0, 15), r in 0.0f64..0.01) {
        let net = random_net(&[2, 3, 3, 2], seed);
        let canon = canonicalize(&net).unwrap();
        let basis = extract_basis(&canon.net).unwrap();
        prop_assert_eq!(basis.len(), 15);
        let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let eps: Vec<f64> = dir.iter().map(|v| v * r / n).collect();
        let moved = project_values_to_weights(&canon, &basis, &eps).unwrap();
        let got = extract_basis(&moved).unwrap().values;
        for ((g, v), e) in got.iter().zip(&basis.values).zip(&eps) {
            prop_assert!(rel(*g, v + e) <= 1e-9);
        }
    }

    #[test]
    fn chart_loss_at_center_is_network_loss(seed in 0u64..10_000) {
        let net = random_net(&[2, 3, 3, 2], seed);
        let data = random_dataset(2, 2, 10, seed);
        let chart = PsiChart::new(&net).unwrap();
        let a = chart.loss_at(chart.values(), &data).unwrap();
        prop_assert!(rel(a, net.loss(&data).unwrap()) <= 1e-12);
    }
}
