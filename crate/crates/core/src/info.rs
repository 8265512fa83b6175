//! Entropies and fidelities of single states.

use crate::error::{Error, Result};
use crate::linalg::{self, eigh_unchecked, max_abs, CMat, EIG_CUTOFF};
use crate::state::DensityOperator;

/// `-Σ λ log2 λ` over eigenvalues above [`EIG_CUTOFF`].
pub fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values
        .iter()
        .filter(|&&l| l > EIG_CUTOFF)
        .map(|&l| -l * l.log2())
        .sum()
}

pub fn von_neumann_entropy(rho: &DensityOperator) -> f64 {
    entropy_of_spectrum(&rho.spectrum()).max(0.0)
}

/// Weight of `ρ` outside the support of `σ` above which `D(ρ‖σ)` is infinite.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Umegaki relative entropy in bits; `f64::INFINITY` when the support of `ρ`
/// is not contained in that of `σ`.
pub fn relative_entropy(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension(format!(
            "relative entropy of {}- and {}-dimensional states",
            rho.dim(),
            sigma.dim()
        )));
    }
    let es = eigh_unchecked(sigma.matrix());
    let kernel = es.projector(|l| l <= EIG_CUTOFF);
    if rho.expectation(&kernel) > SUPPORT_TOL {
        return Ok(f64::INFINITY);
    }
    let log_sigma = es.map(|l| if l > EIG_CUTOFF { l.log2() } else { 0.0 });
    let cross = rho.expectation(&log_sigma);
    Ok((-von_neumann_entropy(rho) - cross).max(0.0))
}

/// Checks `Σ E_k† E_k = 1` within `1e-8`.
pub fn check_kraus(kraus: &[CMat]) -> Result<()> {
    let d = match kraus.first() {
        Some(k) => k.ncols(),
        None => return Err(Error::Validation("empty Kraus set".into())),
    };
    let mut total = CMat::zeros(d, d);
    for k in kraus {
        if k.ncols() != d {
            return Err(Error::Dimension("Kraus operators have mixed input dimensions".into()));
        }
        total += k.adjoint() * k;
    }
    let err = max_abs(&(total - linalg::identity(d)));
    if err > 1e-8 {
        return Err(Error::Validation(format!(
            "Kraus set is not trace preserving (error {err:e})"
        )));
    }
    Ok(())
}

/// `F_e = Σ_k |Tr(ρ E_k)|²`.
pub fn entanglement_fidelity(rho: &CMat, kraus: &[CMat]) -> Result<f64> {
    check_kraus(kraus)?;
    for k in kraus {
        if !k.is_square() || k.nrows() != rho.nrows() {
            return Err(Error::Dimension(
                "fidelity needs square Kraus operators matching the state".into(),
            ));
        }
    }
    Ok(kraus
        .iter()
        .map(|k| linalg::trace_of_product(rho, k).norm_sqr())
        .sum())
}
