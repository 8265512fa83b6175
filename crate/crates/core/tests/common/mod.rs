#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use waiid_core::linalg::{self, CMat, C64};
use waiid_core::{DensityOperator, Observable};

pub fn random_matrix(d: usize, rng: &mut ChaCha20Rng) -> CMat {
    let mut m = CMat::zeros(d, d);
    for x in m.iter_mut() {
        *x = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    m
}

/// Full-rank random state `A A† / Tr(A A†)`.
pub fn random_density(d: usize, seed: u64) -> DensityOperator {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let a = random_matrix(d, &mut rng);
    let m = &a * a.adjoint();
    let tr = linalg::trace(&m).re;
    DensityOperator::new(m.unscale(tr)).unwrap()
}

/// Random state diagonal in the computational basis.
pub fn random_diagonal_density(d: usize, seed: u64) -> DensityOperator {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    DensityOperator::from_diag(&w.iter().map(|x| x / s).collect::<Vec<_>>()).unwrap()
}

pub fn random_observable(d: usize, seed: u64) -> Observable {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let a = random_matrix(d, &mut rng);
    Observable::new(linalg::hermitian_part(&a)).unwrap()
}

pub fn random_unitary(d: usize, seed: u64) -> CMat {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    random_matrix(d, &mut rng).qr().q()
}

/// `(1/n) Σ_i A^{(i)}` as a dense matrix.
pub fn dense_average(a: &CMat, n: usize) -> CMat {
    let d = a.nrows();
    let dim = d.pow(n as u32);
    let id = linalg::identity(d);
    let mut total = CMat::zeros(dim, dim);
    for i in 0..n {
        let mut term = linalg::identity(1);
        for s in 0..n {
            term = linalg::kron(&term, if s == i { a } else { &id });
        }
        total += term;
    }
    total.unscale(n as f64)
}
