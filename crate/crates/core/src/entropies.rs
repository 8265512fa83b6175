//! Smooth zero-Rényi entropy and spectral sup-entropy diagnostics.

use crate::error::{Error, Result};
use crate::linalg::eigh_unchecked;
use crate::state::{Caps, Payload, StateN};

/// Default crossing tolerance for the sup-entropy proxy.
pub const DEFAULT_TOL: f64 = 1e-3;

/// Slack on cumulative sums so that exact rationals like `(1−ε)D/D` count.
const SUM_TOL: f64 = 1e-12;

/// Eigenvalues of `ρ_n`, descending.
pub fn spectrum_desc(s: &StateN, caps: &Caps) -> Result<Vec<f64>> {
    let mut v = match s.payload() {
        Payload::Pure(_) => vec![1.0],
        Payload::Product(rho) => {
            let dim = crate::linalg::checked_pow(rho.dim(), s.sites()).unwrap_or(usize::MAX);
            caps.check_pure(dim)?;
            crate::protocols::product_distribution(&rho.spectrum(), s.sites())
        }
        Payload::Dense(m) => {
            caps.check_dense(m.nrows())?;
            eigh_unchecked(m).values.into_iter().map(|x| x.max(0.0)).collect()
        }
    };
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

/// `log2` of the fewest top eigenvalues carrying weight at least `1−ε`.
pub fn smooth_zero_renyi(s: &StateN, eps: f64, caps: &Caps) -> Result<f64> {
    check_eps(eps)?;
    Ok(smooth_zero_renyi_of_spectrum(&spectrum_desc(s, caps)?, eps))
}

/// Same as [`smooth_zero_renyi`] for a spectrum sorted in descending order.
pub fn smooth_zero_renyi_of_spectrum(desc: &[f64], eps: f64) -> f64 {
    let mut acc = 0.0;
    for (k, &l) in desc.iter().enumerate() {
        acc += l;
        if acc >= 1.0 - eps - SUM_TOL {
            return ((k + 1) as f64).log2();
        }
    }
    (desc.len() as f64).log2()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("ε must lie in (0,1), got {eps}")));
    }
    Ok(())
}

/// `γ ↦ Tr[{A_n(γ) ≥ 0} A_n(γ)]` with `A_n(γ) = ω_n − 2^{−nγ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCurve {
    pub n: usize,
    pub gammas: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn spectral_curve(s: &StateN, gammas: &[f64], caps: &Caps) -> Result<SpectralCurve> {
    if gammas.is_empty() {
        return Err(Error::Parameter("γ grid is empty".into()));
    }
    if gammas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("γ grid must be strictly ascending".into()));
    }
    let spec = spectrum_desc(s, caps)?;
    Ok(spectral_curve_of_spectrum(s.sites(), &spec, gammas))
}

pub fn spectral_curve_of_spectrum(n: usize, spectrum: &[f64], gammas: &[f64]) -> SpectralCurve {
    let values = gammas
        .iter()
        .map(|&g| {
            let t = (-(n as f64) * g).exp2();
            spectrum
                .iter()
                .filter(|&&l| l > t)
                .map(|&l| l - t)
                .sum::<f64>()
                .clamp(0.0, 1.0)
        })
        .collect();
    SpectralCurve {
        n,
        gammas: gammas.to_vec(),
        values,
    }
}

/// `linspace(0, log2 d, points)`.
pub fn default_gamma_grid(d: usize, points: usize) -> Vec<f64> {
    let top = (d as f64).log2();
    if points < 2 {
        return vec![top];
    }
    (0..points)
        .map(|i| top * i as f64 / (points - 1) as f64)
        .collect()
}

/// Finite-n proxy for the spectral sup-entropy rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SupEntropyEstimate {
    /// `(n, smallest γ with value ≥ 1−tol)`; `None` when no grid point
    /// reaches it.
    pub per_n: Vec<(usize, Option<f64>)>,
    /// Crossing at the largest `n`, or the grid maximum when flagged.
    pub estimate: f64,
    /// No crossing at the largest `n`.
    pub flagged: bool,
}

pub fn sup_entropy_estimate(curves: &[SpectralCurve], tol: f64) -> Result<SupEntropyEstimate> {
    if curves.len() < 2 {
        return Err(Error::Parameter("need curves for at least two values of n".into()));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Parameter(format!("tol must lie in (0,1), got {tol}")));
    }
    let mut sorted: Vec<&SpectralCurve> = curves.iter().collect();
    sorted.sort_by_key(|c| c.n);
    let per_n: Vec<(usize, Option<f64>)> = sorted
        .iter()
        .map(|c| {
            let hit = c
                .gammas
                .iter()
                .zip(&c.values)
                .find(|(_, &v)| v >= 1.0 - tol)
                .map(|(&g, _)| g);
            (c.n, hit)
        })
        .collect();
    let last = sorted[sorted.len() - 1];
    let (_, crossing) = per_n[per_n.len() - 1];
    let grid_max = last.gammas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(SupEntropyEstimate {
        per_n,
        estimate: crossing.unwrap_or(grid_max),
        flagged: crossing.is_none(),
    })
}

/// One projector per `n`: its weight on `ω_n` and its log-dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorPoint {
    pub n: usize,
    pub weight: f64,
    pub logdim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCertificate {
    /// `max_n r_n/n + 2η`.
    pub bits: f64,
    /// Weight at the largest `n` below `1−tol`.
    pub flagged: bool,
    pub final_weight: f64,
}

pub fn projector_rate_certificate(points: &[ProjectorPoint], eta: f64, tol: f64) -> Result<RateCertificate> {
    if points.is_empty() {
        return Err(Error::Parameter("no projector data".into()));
    }
    if !(eta >= 0.0) {
        return Err(Error::Parameter(format!("η must be nonnegative, got {eta}")));
    }
    let rate = points
        .iter()
        .map(|p| p.logdim / p.n as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let last = points.iter().max_by_key(|p| p.n).expect("nonempty");
    Ok(RateCertificate {
        bits: rate + 2.0 * eta,
        flagged: last.weight < 1.0 - tol,
        final_weight: last.weight,
    })
}
