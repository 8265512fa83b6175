use waiid_core::sources::*;
use waiid_core::{Caps, DensityOperator, Payload, StateN};

fn caps() -> Caps {
    Caps::default()
}

#[test]
fn haar_purity_matches_closed_form() {
    for (d, n, k) in [(2usize, 2usize, 1usize), (2, 4, 1), (2, 6, 2), (3, 4, 1)] {
        let subset: Vec<usize> = (1..=k).collect();
        let values: Vec<f64> = (0..2000u64)
            .map(|seed| marginal_purity(&haar_state(d, n, seed), &subset).unwrap())
            .collect();
        let (mean, se) = mean_and_std_error(&values);
        let want = expected_purity_exact(d, n, k).unwrap();
        assert!((mean - want).abs() <= 3.0 * se, "({d},{n},{k}): {mean} vs {want} ± {se}");
    }
}

#[test]
fn haar_defect_within_bound() {
    for k in [1usize, 2] {
        for n in [6usize, 8, 10] {
            let values: Vec<f64> = (0..200u64)
                .map(|seed| {
                    waiid_defect(&SourceSpec::haar(2, seed), n, k, DefectMode::Exact, 0, 0, &caps())
                        .unwrap()
                        .defect
                })
                .collect();
            let (mean, se) = mean_and_std_error(&values);
            let bound = haar_defect_bound(2, n, k).unwrap();
            assert!(mean <= bound + 3.0 * se, "k={k} n={n}: {mean} vs {bound}");
        }
    }
}

#[test]
fn iid_sources_have_no_defect() {
    let mixed = DensityOperator::from_diag(&[0.6, 0.3, 0.1]).unwrap();
    let pure = DensityOperator::from_pure(&[
        waiid_core::C64::new(0.6, 0.0),
        waiid_core::C64::new(0.0, 0.8),
    ])
    .unwrap();
    for rho in [mixed, pure] {
        for n in 1..=10 {
            for k in 1..=3.min(n) {
                let r = waiid_defect(&SourceSpec::iid(rho.clone()), n, k, DefectMode::Auto, 100, 1, &caps()).unwrap();
                assert!(r.defect.abs() <= 1e-10, "n={n} k={k}: {}", r.defect);
            }
        }
    }
    let rho = DensityOperator::from_diag(&[0.7, 0.3]).unwrap();
    let dense = StateN::dense(2, 5, rho.tensor_power(5)).unwrap();
    assert!(defect_of_state(&dense, &rho, 2, DefectMode::Exact, 0, 0).unwrap().defect <= 1e-10);
}

#[test]
fn equal_seeds_give_identical_states() {
    for (d, n, seed) in [(2usize, 10usize, 7u64), (3, 5, 123)] {
        let a = haar_state(d, n, seed);
        let b = haar_state(d, n, seed);
        match (a.payload(), b.payload()) {
            (Payload::Pure(x), Payload::Pure(y)) => {
                assert!(x.iter().zip(y).all(|(p, q)| p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits()));
            }
            _ => panic!("haar states are pure"),
        }
        assert_ne!(format!("{:?}", haar_state(d, n, seed + 1).payload()), format!("{:?}", a.payload()));
    }
}

#[test]
fn exact_and_sampled_defects_agree() {
    let state = haar_state(2, 6, 42);
    let rho = DensityOperator::maximally_mixed(2);
    let exact = defect_of_state(&state, &rho, 2, DefectMode::Exact, 0, 0).unwrap();
    assert_eq!(exact.subsets_evaluated, 15);
    let sampled = defect_of_state(&state, &rho, 2, DefectMode::Sampled, 10_000, 9).unwrap();
    assert_eq!(sampled.mode, DefectMode::Sampled);
    assert!((exact.defect - sampled.defect).abs() <= 3.0 * sampled.std_error);
}

#[test]
fn auto_mode_switches_at_subset_limit() {
    let state = StateN::product(DensityOperator::maximally_mixed(2), 30).unwrap();
    let rho = DensityOperator::maximally_mixed(2);
    assert_eq!(defect_of_state(&state, &rho, 3, DefectMode::Auto, 10, 0).unwrap().mode, DefectMode::Exact);
    assert_eq!(defect_of_state(&state, &rho, 4, DefectMode::Auto, 10, 0).unwrap().mode, DefectMode::Sampled);
}
