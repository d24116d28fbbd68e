use proptest::prelude::*;
use psiflat::oracle::{enumerate_all_paths, rational_rank};
use psiflat::paths::{basis_counts, count_paths, reconstruction_factors};
use psiflat::verify::random_net;
use psiflat::*;

fn fig1() -> Mlp {
    Mlp::from_flat(&[2, 1, 2], &[1.0, 2.0, 1.0, 3.0]).unwrap()
}

fn shape() -> impl Strategy<Value = Vec<usize>> {
    (1usize..5, 1usize..5, 1usize..4, 1usize..5).prop_map(|(d0, d1, hidden, dl)| {
        let mut dims = vec![d0];
        dims.extend(std::iter::repeat(d1).take(hidden));
        dims.push(dl);
        dims
    })
}

#[test]
fn fig1_inner_dependency() {
    let net = fig1();
    let basis = extract_basis(&net).unwrap();
    let all = enumerate_all_paths(&[2, 1, 2]).unwrap();
    let outside: Vec<_> = all.iter().filter(|p| !basis.contains(p)).collect();
    assert_eq!(outside.len(), 1);
    let r = reconstruction_factors(&basis, outside[0]).unwrap();
    assert_eq!(r.value, 6.0);
    assert_eq!(path_value(&net, outside[0]), 6.0);
}

#[test]
fn fig1_path_matrix_has_rank_three() {
    let rows: Vec<Vec<u8>> = enumerate_all_paths(&[2, 1, 2])
        .unwrap()
        .iter()
        .map(|p| p.incidence(&[2, 1, 2]))
        .collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rational_rank(&rows), 3);
}

#[test]
fn path_counts() {
    assert_eq!(count_paths(&[2, 1, 2]), 4);
    assert_eq!(count_paths(&[1, 1, 1]), 1);
    assert_eq!(count_paths(&[2, 2, 2, 2]), 16);
    assert_eq!(basis_counts(&[2, 2, 2]).unwrap(), (8, 2, 6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_count_is_m_minus_h(dims in shape()) {
        let net = random_net(&dims, 3);
        let basis = extract_basis(&net).unwrap();
        prop_assert_eq!(basis.len(), net.num_weights() - net.num_hidden());
        let l = dims.len() - 2;
        prop_assert_eq!(basis.len(), net.num_weights() - l * dims[1]);
    }

    #[test]
    fn every_weight_lies_on_a_basis_path(dims in shape()) {
        let basis = extract_basis(&random_net(&dims, 4)).unwrap();
        let m: usize = dims.windows(2).map(|w| w[0] * w[1]).sum();
        let mut hit = vec![false; m];
        for b in &basis.paths {
            for k in b.path.weight_indices(&dims) {
                hit[k] = true;
            }
        }
        prop_assert!(hit.iter().all(|&h| h));
    }

    #[test]
    fn path_sum_equals_forward(seed in 0u64..10_000, x in proptest::collection::vec(-2.0f64..2.0, 3)) {
        let net = random_net(&[3, 2, 2, 2], seed);
        let a = net.predict(&x).unwrap();
        let b = output_via_paths(&net, &x).unwrap();
        let scale = a.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn reconstruction_matches_direct_product(seed in 0u64..10_000) {
        let dims = [2, 3, 3, 2];
        let net = random_net(&dims, seed);
        let basis = extract_basis(&net).unwrap();
        for p in enumerate_all_paths(&dims).unwrap() {
            let r = reconstruction_factors(&basis, &p).unwrap();
            let direct = path_value(&net, &p);
            prop_assert!((r.value - direct).abs() <= 1e-9 * direct.abs());
        }
    }
}
