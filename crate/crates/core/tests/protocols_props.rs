mod common;

use common::*;
use proptest::prelude::*;
use waiid_core::info::entanglement_fidelity;
use waiid_core::linalg::{self, eigh_unchecked, spectral_projector, trace_of_product, CMat, Side, C64};
use waiid_core::protocols::*;
use waiid_core::sources::haar_state;
use waiid_core::typicality::build_sigma_q;
use waiid_core::{Caps, DensityOperator, StateN};

fn caps() -> Caps {
    Caps::default()
}

fn tensor_power(rho: &DensityOperator, n: usize) -> CMat {
    linalg::kron_power(rho.matrix(), n)
}

/// `-(1/n) log2 σ^{⊗n}` materialized.
fn dense_minus_log(sigma: &DensityOperator, n: usize) -> CMat {
    let e = eigh_unchecked(sigma.matrix());
    dense_average(&e.map(|l| -l.log2()), n)
}

/// `(α, β)` of `T = QPQ` built from dense spectral projectors.
fn dense_stein(rho: &DensityOperator, sigma: &DensityOperator, q: f64, delta: f64, omega: &CMat, n: usize) -> (f64, f64) {
    let sq = build_sigma_q(rho, q).unwrap();
    let p = spectral_projector(&dense_average(sq.a_q().matrix(), n), sq.h_q + delta, Side::Le).unwrap();
    let es = eigh_unchecked(sigma.matrix());
    let b = es.map(|l| -l.log2());
    let a = trace_of_product(rho.matrix(), &b).re;
    let qn = spectral_projector(&dense_minus_log(sigma, n), a - delta, Side::Ge).unwrap();
    let t = &qn * &p * &qn;
    let alpha = 1.0 - trace_of_product(&t, omega).re;
    let beta = trace_of_product(&t, &tensor_power(sigma, n)).re;
    (alpha, beta)
}

/// Primal Neyman–Pearson: bisect on `λ` for the test `{ρ − λσ > 0}` whose
/// acceptance brackets `1 − ε`, then add the boundary eigenspace of
/// `ρ − λσ` fractionally (on it `ρ` and `λσ` agree, so any fraction is optimal).
fn primal_min_beta(rho: &CMat, sigma: &CMat, eps: f64) -> f64 {
    let tol = 1e-9;
    let split = |lambda: f64| {
        let e = eigh_unchecked(&(rho - sigma.scale(lambda)));
        (e.projector(|x| x > tol), e.projector(|x| x.abs() <= tol))
    };
    let accept = |lambda: f64| trace_of_product(&split(lambda).0, rho).re;
    let (mut lo, mut hi) = (0.0, 1.0);
    while accept(hi) > 1.0 - eps {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if accept(mid) >= 1.0 - eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (t, boundary) = split(hi);
    let acc = trace_of_product(&t, rho).re;
    let pb = trace_of_product(&boundary, rho).re;
    assert!(acc + pb >= 1.0 - eps - 1e-7, "boundary too thin: {acc} + {pb}");
    let gamma = if pb > 0.0 { ((1.0 - eps - acc) / pb).clamp(0.0, 1.0) } else { 0.0 };
    trace_of_product(&t, sigma).re + gamma * trace_of_product(&boundary, sigma).re
}

/// Minimum `β` over `1[r > t] + γ 1[r = t]` for every ratio threshold `t`.
fn threshold_min_beta(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let ratio = |i: usize| if q[i] == 0.0 { f64::INFINITY } else { p[i] / q[i] };
    let mut best = f64::INFINITY;
    for t in (0..p.len()).map(ratio) {
        let (mut pa, mut qa, mut pb, mut qb) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..p.len() {
            let r = ratio(i);
            if r > t && (r - t).abs() > 1e-12 * t.abs().max(1.0) {
                pa += p[i];
                qa += q[i];
            } else if (r - t).abs() <= 1e-12 * t.abs().max(1.0) || r == t {
                pb += p[i];
                qb += q[i];
            }
        }
        let need = 1.0 - eps - pa;
        let gamma = if need <= 0.0 { 0.0 } else if pb > 0.0 { need / pb } else { continue };
        if gamma <= 1.0 + 1e-12 {
            best = best.min(qa + gamma.min(1.0) * qb);
        }
    }
    best
}

#[test]
fn stein_noncommuting_matches_dense_oracle() {
    for seed in 0..6u64 {
        let rho = random_density(2, seed);
        let sigma = random_density(2, seed + 100);
        for n in [2usize, 3, 5] {
            let test = build_stein_test(&rho, &sigma, 0.2, 0.2, n).unwrap();
            assert!(test.joint.is_none());
            let omega = haar_state(2, n, seed);
            let e = stein_errors(&test, &omega, &caps()).unwrap();
            let (alpha, beta) = dense_stein(&rho, &sigma, 0.2, 0.2, &omega.to_dense(&caps()).unwrap(), n);
            assert!((e.alpha - alpha).abs() < 1e-10, "alpha {} vs {}", e.alpha, alpha);
            assert!((e.beta - beta).abs() < 1e-10, "beta {} vs {}", e.beta, beta);
            assert!(e.holds());
        }
    }
}

#[test]
fn stein_commuting_pair_matches_diagonal_enumeration() {
    let rho = DensityOperator::from_diag(&[0.8, 0.2]).unwrap();
    let sigma = DensityOperator::from_diag(&[0.3, 0.7]).unwrap();
    let (q, delta, n) = (0.1, 0.1, 10);
    let test = build_stein_test(&rho, &sigma, q, delta, n).unwrap();
    assert!(test.joint.is_some());
    let e = stein_errors(&test, &StateN::product(rho.clone(), n).unwrap(), &caps()).unwrap();
    let sq = build_sigma_q(&rho, q).unwrap();
    let aq = [-(0.77f64).log2(), -(0.23f64).log2()];
    let b = [-(0.3f64).log2(), -(0.7f64).log2()];
    let a = 0.8 * b[0] + 0.2 * b[1];
    let (mut acc_rho, mut acc_sigma) = (0.0, 0.0);
    for idx in 0..1usize << n {
        let ones = idx.count_ones() as usize;
        let zeros = n - ones;
        let level_p = (zeros as f64 * aq[0] + ones as f64 * aq[1]) / n as f64;
        let level_q = (zeros as f64 * b[0] + ones as f64 * b[1]) / n as f64;
        if level_p <= sq.h_q + delta + 1e-12 && level_q >= a - delta - 1e-12 {
            acc_rho += 0.8f64.powi(zeros as i32) * 0.2f64.powi(ones as i32);
            acc_sigma += 0.3f64.powi(zeros as i32) * 0.7f64.powi(ones as i32);
        }
    }
    assert!((e.alpha - (1.0 - acc_rho)).abs() < 1e-12);
    assert!((e.beta - acc_sigma).abs() < 1e-12);
}

#[test]
fn stein_maximally_mixed_everywhere() {
    let mm = DensityOperator::maximally_mixed(2);
    let test = build_stein_test(&mm, &mm, 0.3, 0.05, 6).unwrap();
    assert!((test.certificate_exponent + 0.1).abs() < 1e-12);
    let e = stein_errors(&test, &StateN::product(mm, 6).unwrap(), &caps()).unwrap();
    assert!(e.alpha.abs() < 1e-12);
    assert!((e.beta - 1.0).abs() < 1e-12);
}

#[test]
fn singular_alternative_is_rejected() {
    let rho = DensityOperator::maximally_mixed(2);
    let sigma = DensityOperator::from_diag(&[1.0, 0.0]).unwrap();
    assert!(matches!(build_stein_test(&rho, &sigma, 0.1, 0.1, 4), Err(waiid_core::Error::Hypothesis(_))));
}

#[test]
fn compression_fidelity_matches_kraus_sum() {
    for seed in 0..4u64 {
        let rho = random_density(2, seed);
        for tau in [TauChoice::FirstBasisVectorOfRange, TauChoice::MaximallyMixedOnRange] {
            for n in [2usize, 4] {
                let scheme = build_compression(&rho, 0.2, 0.15, n, tau).unwrap();
                let kraus = scheme.encoder_kraus(&caps()).unwrap();
                let omegas = [
                    haar_state(2, n, seed + 7),
                    StateN::dense(2, n, tensor_power(&random_density(2, seed + 9), n)).unwrap(),
                ];
                for omega in &omegas {
                    let f = compression_fidelity(&scheme, omega, &caps()).unwrap();
                    let oracle = entanglement_fidelity(&omega.to_dense(&caps()).unwrap(), &kraus).unwrap();
                    assert!((f.exact.unwrap() - oracle).abs() < 1e-10, "{:?} vs {oracle}", f.exact);
                    assert!(f.holds());
                }
            }
        }
    }
}

#[test]
fn orthogonal_input_two_qubit_oracle() {
    // ρ = |0><0| with small smoothing keeps only |00> typical at n = 2.
    let rho = DensityOperator::from_diag(&[1.0, 0.0]).unwrap();
    let scheme = build_compression(&rho, 0.5, 0.1, 2, TauChoice::FirstBasisVectorOfRange).unwrap();
    assert_eq!(scheme.projector.count(), 1u32.into());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let amps = vec![C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(0.0, s), C64::new(0.0, 0.0)];
    let omega = StateN::pure(2, 2, amps.clone()).unwrap();
    let f = compression_fidelity(&scheme, &omega, &caps()).unwrap();
    // E(ω) = |00><00| since Tr(Πω) = 0; F = |<ω|00>|² = 0 by hand.
    let mut channel_out = CMat::zeros(4, 4);
    channel_out[(0, 0)] = C64::new(1.0, 0.0);
    let v = nalgebra::DVector::from_vec(amps);
    let oracle = (v.adjoint() * &channel_out * &v)[(0, 0)].re;
    assert!((f.exact.unwrap() - oracle).abs() < 1e-10);
    assert_eq!(f.lower_bound, 0.0);
}

#[test]
fn classical_dh_matches_threshold_enumeration() {
    let p1 = [0.7, 0.2, 0.1];
    let q1 = [0.2, 0.5, 0.3];
    let n = 6;
    let p = product_distribution(&p1, n);
    let q = product_distribution(&q1, n);
    for eps in [0.01, 0.1, 0.3, 0.7] {
        let got = classical_min_beta(&p, &q, eps).unwrap();
        let want = threshold_min_beta(&p, &q, eps);
        assert!((got - want).abs() < 1e-10, "eps {eps}: {got} vs {want}");
        let rn = StateN::product(DensityOperator::from_diag(&p1).unwrap(), n).unwrap();
        let sn = StateN::product(DensityOperator::from_diag(&q1).unwrap(), n).unwrap();
        let bits = dh_epsilon_states(&rn, &sn, eps, &caps()).unwrap();
        assert!((bits + want.log2()).abs() < 1e-9);
    }
}

#[test]
fn noncommuting_dh_matches_primal_search() {
    for seed in 0..5u64 {
        let rho = random_density(2, seed).tensor_power(2);
        let sigma = random_density(2, seed + 50).tensor_power(2);
        for eps in [0.05, 0.2, 0.5] {
            let got = dh_epsilon_oracle(&rho, &sigma, eps).unwrap();
            let want = -primal_min_beta(&rho, &sigma, eps).log2();
            assert!((got - want).abs() < 1e-6, "seed {seed} eps {eps}: {got} vs {want}");
        }
    }
}

#[test]
fn dh_closed_forms() {
    let rho = random_density(3, 4);
    for eps in [0.1, 0.5, 0.9] {
        let v = dh_epsilon_oracle(rho.matrix(), rho.matrix(), eps).unwrap();
        assert!((v + (1.0 - eps).log2()).abs() < 1e-10);
    }
    let a = DensityOperator::from_diag(&[1.0, 0.0]).unwrap();
    let b = DensityOperator::from_diag(&[0.0, 1.0]).unwrap();
    assert_eq!(dh_epsilon_oracle(a.matrix(), b.matrix(), 0.1).unwrap(), f64::INFINITY);
    assert!(dh_epsilon_oracle(a.matrix(), b.matrix(), 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn beta_never_exceeds_certificate(seed in any::<u64>(), q in 0.05f64..0.6, delta in 0.02f64..0.4, n in 1usize..=6, commuting in any::<bool>()) {
        let (rho, sigma) = if commuting {
            (random_diagonal_density(2, seed), random_diagonal_density(2, seed ^ 3))
        } else {
            (random_density(2, seed), random_density(2, seed ^ 3))
        };
        let test = build_stein_test(&rho, &sigma, q, delta, n).unwrap();
        let omega = haar_state(2, n, seed);
        let e = stein_errors(&test, &omega, &caps()).unwrap();
        prop_assert!(e.beta <= e.beta_bound + 1e-12, "{:?}", e);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&e.alpha));
    }

    #[test]
    fn fidelity_dominates_lower_bound(seed in any::<u64>(), q in 0.05f64..0.6, delta in 0.02f64..0.4, n in 1usize..=6, pure in any::<bool>()) {
        let rho = random_density(2, seed);
        let scheme = build_compression(&rho, q, delta, n, TauChoice::FirstBasisVectorOfRange).unwrap();
        let omega = if pure { haar_state(2, n, seed) } else { StateN::product(random_density(2, seed ^ 5), n).unwrap() };
        let f = compression_fidelity(&scheme, &omega, &caps()).unwrap();
        prop_assert!(f.exact.unwrap() >= f.lower_bound - 1e-10);
        let sq = build_sigma_q(&rho, q).unwrap();
        prop_assert!(scheme.compressed_logdim <= n as f64 * (sq.h_q + delta) + 1e-9);
    }

    #[test]
    fn encoder_is_trace_preserving(seed in any::<u64>(), n in 1usize..=4, mixed_tau in any::<bool>()) {
        let tau = if mixed_tau { TauChoice::MaximallyMixedOnRange } else { TauChoice::FirstBasisVectorOfRange };
        let scheme = build_compression(&random_density(2, seed), 0.2, 0.1, n, tau).unwrap();
        let kraus = scheme.encoder_kraus(&caps()).unwrap();
        let dim = 1usize << n;
        let mut sum = CMat::zeros(dim, dim);
        for k in &kraus {
            sum += k.adjoint() * k;
        }
        prop_assert!(linalg::max_abs(&(sum - linalg::identity(dim))) < 1e-8);
    }

    #[test]
    fn oracle_dominates_constructed_test(seed in any::<u64>(), q in 0.05f64..0.5, delta in 0.05f64..0.4, n in 1usize..=4, eps in 0.05f64..0.95) {
        let rho = random_density(2, seed);
        let sigma = random_density(2, seed ^ 11);
        let test = build_stein_test(&rho, &sigma, q, delta, n).unwrap();
        let rn = StateN::product(rho.clone(), n).unwrap();
        let e = stein_errors(&test, &rn, &caps()).unwrap();
        if e.alpha <= eps && e.beta > 0.0 {
            let dh = dh_epsilon_states(&rn, &StateN::product(sigma, n).unwrap(), eps, &caps()).unwrap();
            prop_assert!(dh / n as f64 >= -e.beta.log2() / n as f64 - 1e-9, "{dh} vs {}", -e.beta.log2());
        }
    }

    #[test]
    fn dh_is_nondecreasing_in_epsilon(seed in any::<u64>(), e1 in 0.01f64..0.98, gap in 0.0f64..0.5, commuting in any::<bool>()) {
        let e2 = (e1 + gap).min(0.99);
        let (rho, sigma) = if commuting {
            (random_diagonal_density(3, seed), random_diagonal_density(3, seed ^ 1))
        } else {
            (random_density(3, seed), random_density(3, seed ^ 1))
        };
        let a = dh_epsilon_oracle(rho.matrix(), sigma.matrix(), e1).unwrap();
        let b = dh_epsilon_oracle(rho.matrix(), sigma.matrix(), e2).unwrap();
        prop_assert!(b >= a - 1e-9, "{a} then {b}");
    }
}
