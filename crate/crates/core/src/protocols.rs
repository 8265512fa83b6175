//! Universal compression, the Stein test `T_n = Q_n P_n Q_n`, and an exact
//! hypothesis-testing relative entropy oracle.

use crate::error::{Error, Result};
use crate::linalg::{
    self, apply_product_in_place, commutator_norm, eigh_unchecked, rotate_into_basis, CMat, Side,
    C64, EIG_CUTOFF,
};
use crate::state::{Caps, DensityOperator, Payload, StateN};
use crate::typicality::{
    basis_diagonal, build_sigma_q, typical_projector, ImplicitLevelProjector, LevelConstraint,
    SigmaQ,
};

/// Fixed state `τ_n` the encoder substitutes for rejected inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauChoice {
    FirstBasisVectorOfRange,
    MaximallyMixedOnRange,
}

/// `E_n(ν) = Π ν Π + Tr[(1−Π)ν] τ_n`, decoded by inclusion.
#[derive(Debug, Clone)]
pub struct CompressionScheme {
    pub n: usize,
    pub projector: ImplicitLevelProjector,
    pub tau_choice: TauChoice,
    pub compressed_logdim: f64,
    pub sigma_q: SigmaQ,
    pub delta: f64,
}

pub fn build_compression(
    rho: &DensityOperator,
    q: f64,
    delta: f64,
    n: usize,
    tau_choice: TauChoice,
) -> Result<CompressionScheme> {
    let sigma_q = build_sigma_q(rho, q)?;
    let projector = typical_projector(&sigma_q, delta, n)?;
    let compressed_logdim = projector.logdim();
    Ok(CompressionScheme {
        n,
        projector,
        tau_choice,
        compressed_logdim,
        sigma_q,
        delta,
    })
}

impl CompressionScheme {
    /// Product-basis indices spanning `τ_n` with their weights `μ_m`. An empty
    /// range falls back to the first product basis vector.
    fn tau_support(&self, mask: &[bool]) -> Vec<(usize, f64)> {
        let range: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect();
        match (self.tau_choice, range.first()) {
            (_, None) => vec![(0, 1.0)],
            (TauChoice::FirstBasisVectorOfRange, Some(&i)) => vec![(i, 1.0)],
            (TauChoice::MaximallyMixedOnRange, Some(_)) => {
                let mu = 1.0 / range.len() as f64;
                range.into_iter().map(|i| (i, mu)).collect()
            }
        }
    }

    /// Full Kraus set of the encoder as dense matrices (dense cap applies).
    pub fn encoder_kraus(&self, caps: &Caps) -> Result<Vec<CMat>> {
        let d = self.projector.local_dim();
        let dim = linalg::checked_pow(d, self.n).unwrap_or(usize::MAX);
        caps.check_dense(dim)?;
        let mask = self.projector.mask(caps)?;
        let vectors = product_basis(self.projector.basis(), self.n);
        let mut kraus = vec![self.projector.to_dense(caps)?];
        for (m, mu) in self.tau_support(&mask) {
            let t = vectors.column(m);
            for (l, _) in mask.iter().enumerate().filter(|(_, &b)| !b) {
                let e = vectors.column(l);
                kraus.push((t * e.adjoint()).scale(mu.sqrt()));
            }
        }
        Ok(kraus)
    }
}

/// Columns are the product basis vectors `V^{⊗n} |i>`.
fn product_basis(v: &CMat, n: usize) -> CMat {
    linalg::kron_power(v, n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionFidelity {
    /// `None` when the state is too large for the exact path.
    pub exact: Option<f64>,
    /// `|Tr(ω Π)|²`.
    pub lower_bound: f64,
    pub weight: f64,
}

impl CompressionFidelity {
    pub fn holds(&self) -> bool {
        self.exact.is_none_or(|f| f >= self.lower_bound - 1e-10)
    }
}

/// Entanglement fidelity of encode-then-include on `ω_n`.
///
/// With `τ_n = Σ μ_m |t_m><t_m|` and `{e_l}` a basis of `ran(1−Π)`, the Kraus
/// sum collapses to `|Tr ωΠ|² + Σ_m μ_m ‖(1−Π) ω |t_m>‖²`, which only needs
/// columns of `ω` in the rotated product basis.
pub fn compression_fidelity(
    scheme: &CompressionScheme,
    omega: &StateN,
    caps: &Caps,
) -> Result<CompressionFidelity> {
    let p = &scheme.projector;
    if omega.local_dim() != p.local_dim() || omega.sites() != scheme.n {
        return Err(Error::Dimension("scheme and state shapes differ".into()));
    }
    let d = p.local_dim();
    let n = scheme.n;
    let basis = p.basis();
    match omega.payload() {
        Payload::Product(rho) => {
            let weight = p.product_weight(rho);
            let rotated = basis.adjoint() * rho.matrix() * basis;
            let off = (0..d)
                .flat_map(|i| (0..d).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .fold(0.0_f64, |a, (i, j)| a.max(rotated[(i, j)].norm()));
            if off <= 1e-12 {
                // ω is diagonal in the projector basis, so (1−Π) ω |t> = 0
                return Ok(CompressionFidelity {
                    exact: Some(weight * weight),
                    lower_bound: weight * weight,
                    weight,
                });
            }
            match omega.to_dense(caps) {
                Ok(m) => dense_fidelity(scheme, &m, caps),
                Err(Error::CapExceeded { .. }) => Ok(CompressionFidelity {
                    exact: None,
                    lower_bound: weight * weight,
                    weight,
                }),
                Err(e) => Err(e),
            }
        }
        Payload::Pure(psi) => {
            let mut w = psi.clone();
            apply_product_in_place(&mut w, &basis.adjoint(), d, n);
            let mask = p.mask(caps)?;
            let weight: f64 = w
                .iter()
                .zip(&mask)
                .filter(|(_, &b)| b)
                .map(|(z, _)| z.norm_sqr())
                .sum();
            let outside = (1.0 - weight).max(0.0);
            let extra: f64 = scheme
                .tau_support(&mask)
                .iter()
                .map(|&(m, mu)| mu * outside * w[m].norm_sqr())
                .sum();
            Ok(CompressionFidelity {
                exact: Some(weight * weight + extra),
                lower_bound: weight * weight,
                weight,
            })
        }
        Payload::Dense(m) => dense_fidelity(scheme, m, caps),
    }
}

fn dense_fidelity(scheme: &CompressionScheme, m: &CMat, caps: &Caps) -> Result<CompressionFidelity> {
    let p = &scheme.projector;
    caps.check_dense(m.nrows())?;
    let r = rotate_into_basis(m, p.basis(), p.local_dim(), scheme.n);
    let mask = p.mask(caps)?;
    let weight: f64 = (0..r.nrows()).filter(|&i| mask[i]).map(|i| r[(i, i)].re).sum();
    let extra: f64 = scheme
        .tau_support(&mask)
        .iter()
        .map(|&(col, mu)| {
            mu * (0..r.nrows())
                .filter(|&j| !mask[j])
                .map(|j| r[(j, col)].norm_sqr())
                .sum::<f64>()
        })
        .sum();
    Ok(CompressionFidelity {
        exact: Some(weight * weight + extra),
        lower_bound: weight * weight,
        weight,
    })
}

/// `T_n = Q_n P_n Q_n` with `Q_n = {−(1/n) log2 σ^{⊗n} ≥ a − δ}` and `P_n` the
/// typical projector of `ρ`.
#[derive(Debug, Clone)]
pub struct SteinTest {
    pub n: usize,
    pub q_n: ImplicitLevelProjector,
    pub p_n: ImplicitLevelProjector,
    /// `Tr[ρ(−log2 σ)]`.
    pub a: f64,
    pub h_q: f64,
    pub q: f64,
    pub delta: f64,
    /// `a − h_q − 2δ`.
    pub certificate_exponent: f64,
    pub sigma: DensityOperator,
    /// `Q_n ∧ P_n` in a common product basis when `[ρ, σ] = 0`.
    pub joint: Option<ImplicitLevelProjector>,
}

pub fn build_stein_test(
    rho: &DensityOperator,
    sigma: &DensityOperator,
    q: f64,
    delta: f64,
    n: usize,
) -> Result<SteinTest> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension("ρ and σ dimensions differ".into()));
    }
    let es = eigh_unchecked(sigma.matrix());
    if es.values[0] <= EIG_CUTOFF {
        return Err(Error::Hypothesis(format!(
            "the Stein test needs a full-rank alternative σ > 0 (smallest eigenvalue {:e})",
            es.values[0]
        )));
    }
    let sq = build_sigma_q(rho, q)?;
    let p_n = typical_projector(&sq, delta, n)?;
    let b: Vec<f64> = es.values.iter().map(|&l| -l.log2()).collect();
    let a = basis_diagonal(rho.matrix(), &es.vectors)
        .iter()
        .zip(&b)
        .map(|(p, x)| p * x)
        .sum::<f64>();
    let q_n = ImplicitLevelProjector::single(b, es.vectors.clone(), n, a - delta, Side::Ge)?;
    let joint = if commutator_norm(rho.matrix(), sigma.matrix()) <= 1e-9 {
        let w = linalg::simultaneous_eigenbasis(&[rho.matrix(), sigma.matrix()])?;
        let aq = basis_diagonal(sq.a_q().matrix(), &w);
        let minus_log_sigma = es.map(|l| -l.log2());
        let bw = basis_diagonal(&minus_log_sigma, &w);
        Some(ImplicitLevelProjector::new(
            w,
            n,
            vec![
                LevelConstraint { levels: aq, threshold: sq.h_q + delta, side: Side::Le },
                LevelConstraint { levels: bw, threshold: a - delta, side: Side::Ge },
            ],
        )?)
    } else {
        None
    };
    Ok(SteinTest {
        n,
        q_n,
        p_n,
        a,
        h_q: sq.h_q,
        q,
        delta,
        certificate_exponent: a - sq.h_q - 2.0 * delta,
        sigma: sigma.clone(),
        joint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteinErrors {
    /// `1 − Tr(T_n ρ_n)`.
    pub alpha: f64,
    /// `Tr(T_n σ^{⊗n})`.
    pub beta: f64,
    /// `2^{−n(a − h_q − 2δ)}`.
    pub beta_bound: f64,
}

impl SteinErrors {
    pub fn holds(&self) -> bool {
        self.beta <= self.beta_bound + 1e-12
    }
}

pub fn stein_errors(test: &SteinTest, rho_n: &StateN, caps: &Caps) -> Result<SteinErrors> {
    let n = test.n;
    let d = test.sigma.dim();
    if rho_n.local_dim() != d || rho_n.sites() != n {
        return Err(Error::Dimension("test and state shapes differ".into()));
    }
    let beta_bound = (-(n as f64) * test.certificate_exponent).exp2();
    if let Some(joint) = &test.joint {
        let alpha = 1.0 - joint.weight(rho_n, caps)?;
        let beta = joint.product_weight(&test.sigma);
        return Ok(SteinErrors {
            alpha: alpha.clamp(0.0, 1.0),
            beta,
            beta_bound,
        });
    }
    let accepted = match rho_n.payload() {
        Payload::Pure(psi) => {
            let mut v = psi.clone();
            test.q_n.project_in_place(&mut v, caps)?;
            test.p_n.project_in_place(&mut v, caps)?;
            v.iter().map(|z| z.norm_sqr()).sum::<f64>()
        }
        _ => {
            let m = rho_n.to_dense(caps)?;
            let qd = test.q_n.to_dense(caps)?;
            let pd = test.p_n.to_dense(caps)?;
            let t = &qd * pd * &qd;
            linalg::trace_of_product(&t, &m).re
        }
    };
    Ok(SteinErrors {
        alpha: (1.0 - accepted).clamp(0.0, 1.0),
        beta: noncommuting_beta(test, caps)?,
        beta_bound,
    })
}

/// `Tr(Q P Q σ^{⊗n}) = Σ_{i∈P} Σ_{j∈Q} σ_j |<i|j>|²` where `|i>`, `|j>` run
/// over the product bases of `P` and `Q`; the overlap kernel is the tensor
/// power of the entrywise `|V†U|²`.
fn noncommuting_beta(test: &SteinTest, caps: &Caps) -> Result<f64> {
    let d = test.sigma.dim();
    let n = test.n;
    let u = test.q_n.basis();
    let v = test.p_n.basis();
    let overlap = v.adjoint() * u;
    let kernel = overlap.map(|z| C64::new(z.norm_sqr(), 0.0));
    let sigma_diag = basis_diagonal(test.sigma.matrix(), u);
    let q_mask = test.q_n.mask(caps)?;
    let mut x: Vec<C64> = q_mask
        .iter()
        .enumerate()
        .map(|(j, &keep)| {
            if !keep {
                return C64::new(0.0, 0.0);
            }
            let mut rest = j;
            let mut w = 1.0;
            for _ in 0..n {
                w *= sigma_diag[rest % d];
                rest /= d;
            }
            C64::new(w, 0.0)
        })
        .collect();
    apply_product_in_place(&mut x, &kernel, d, n);
    let p_mask = test.p_n.mask(caps)?;
    Ok(x.iter().zip(&p_mask).filter(|(_, &b)| b).map(|(z, _)| z.re).sum())
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("ε must lie in (0,1), got {eps}")));
    }
    Ok(())
}

/// Type-I mass at or above which a zero-cost test is feasible.
const ZERO_BETA_TOL: f64 = 1e-12;

/// Smallest `Σ T_i q_i` over `0 ≤ T ≤ 1` with `Σ T_i p_i ≥ 1−ε`: greedy by
/// likelihood ratio, with a fractional weight on the boundary ratio class.
pub fn classical_min_beta(p: &[f64], q: &[f64], eps: f64) -> Result<f64> {
    check_epsilon(eps)?;
    if p.len() != q.len() {
        return Err(Error::Dimension("distributions have different lengths".into()));
    }
    let target = 1.0 - eps;
    let free: f64 = p
        .iter()
        .zip(q)
        .filter(|(_, &qi)| qi <= EIG_CUTOFF)
        .map(|(&pi, _)| pi.max(0.0))
        .sum();
    if free >= target - ZERO_BETA_TOL {
        return Ok(0.0);
    }
    let mut items: Vec<(f64, f64)> = p
        .iter()
        .zip(q)
        .filter(|(_, &qi)| qi > EIG_CUTOFF)
        .map(|(&pi, &qi)| (pi.max(0.0), qi))
        .collect();
    items.sort_by(|x, y| (y.0 / y.1).total_cmp(&(x.0 / x.1)));
    let mut need = target - free;
    let mut beta = 0.0;
    let mut i = 0;
    while i < items.len() && need > 0.0 {
        let ratio = items[i].0 / items[i].1;
        let (mut pm, mut qm) = (0.0, 0.0);
        while i < items.len() && (items[i].0 / items[i].1 - ratio).abs() <= 1e-12 * ratio.max(1e-300) {
            pm += items[i].0;
            qm += items[i].1;
            i += 1;
        }
        if pm <= need {
            beta += qm;
            need -= pm;
        } else {
            beta += qm * need / pm;
            need = 0.0;
        }
    }
    Ok(beta)
}

fn bits(beta: f64) -> f64 {
    if beta <= 0.0 {
        f64::INFINITY
    } else {
        -beta.log2()
    }
}

/// `D_H^ε(ρ‖σ)` in bits; `f64::INFINITY` when a feasible test has zero
/// type-II error.
///
/// Commuting pairs reduce to the classical Neyman–Pearson problem in a common
/// eigenbasis. Otherwise the optimum is `max_μ≥0 μ(1−ε) − Tr(μρ−σ)_+`, the
/// Lagrange dual of the test problem (attained by `{μρ−σ>0}` plus a
/// fractional boundary part), maximized by golden-section search.
pub fn dh_epsilon_oracle(rho: &CMat, sigma: &CMat, eps: f64) -> Result<f64> {
    check_epsilon(eps)?;
    if rho.shape() != sigma.shape() || !rho.is_square() {
        return Err(Error::Dimension("ρ_n and σ_n shapes differ".into()));
    }
    if commutator_norm(rho, sigma) <= 1e-9 {
        let w = linalg::simultaneous_eigenbasis(&[rho, sigma])?;
        let p = basis_diagonal(rho, &w);
        let q = basis_diagonal(sigma, &w);
        return Ok(bits(classical_min_beta(&p, &q, eps)?));
    }
    let es = eigh_unchecked(sigma);
    let kernel = es.projector(|l| l <= EIG_CUTOFF);
    if linalg::trace_of_product(rho, &kernel).re >= 1.0 - eps - ZERO_BETA_TOL {
        return Ok(f64::INFINITY);
    }
    Ok(bits(dual_min_beta(rho, sigma, eps)))
}

/// `μ(1−ε) − Tr(μρ − σ)_+`.
pub fn dual_objective(rho: &CMat, sigma: &CMat, eps: f64, mu: f64) -> f64 {
    let m = rho.scale(mu) - sigma;
    let positive: f64 = m
        .symmetric_eigenvalues()
        .iter()
        .filter(|&&x| x > 0.0)
        .sum();
    mu * (1.0 - eps) - positive
}

fn dual_min_beta(rho: &CMat, sigma: &CMat, eps: f64) -> f64 {
    // the objective is concave and negative beyond μ = 1/ε
    let (mut lo, mut hi) = (0.0_f64, 1.0 / eps);
    let g = |mu: f64| dual_objective(rho, sigma, eps, mu);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (g(x1), g(x2));
    let mut best = f1.max(f2).max(0.0);
    while hi - lo > 1e-14 * (1.0 / eps) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = g(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = g(x1);
        }
        best = best.max(f1).max(f2);
    }
    best
}

/// Oracle on `n`-site states; product pairs whose single-site states commute
/// are handled without materializing `d^n × d^n` matrices.
pub fn dh_epsilon_states(rho_n: &StateN, sigma_n: &StateN, eps: f64, caps: &Caps) -> Result<f64> {
    check_epsilon(eps)?;
    if rho_n.local_dim() != sigma_n.local_dim() || rho_n.sites() != sigma_n.sites() {
        return Err(Error::Dimension("ρ_n and σ_n shapes differ".into()));
    }
    if let (Payload::Product(r), Payload::Product(s)) = (rho_n.payload(), sigma_n.payload()) {
        if commutator_norm(r.matrix(), s.matrix()) <= 1e-9 {
            let n = rho_n.sites();
            let dim = linalg::checked_pow(r.dim(), n).unwrap_or(usize::MAX);
            caps.check_pure(dim)?;
            let w = linalg::simultaneous_eigenbasis(&[r.matrix(), s.matrix()])?;
            let p = product_distribution(&basis_diagonal(r.matrix(), &w), n);
            let q = product_distribution(&basis_diagonal(s.matrix(), &w), n);
            return Ok(bits(classical_min_beta(&p, &q, eps)?));
        }
    }
    dh_epsilon_oracle(&rho_n.to_dense(caps)?, &sigma_n.to_dense(caps)?, eps)
}

/// All `d^n` products `p_{i_1} ... p_{i_n}`, site 1 most significant.
pub fn product_distribution(p: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..n {
        out = out
            .iter()
            .flat_map(|&a| p.iter().map(move |&b| a * b))
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::{check_kraus, entanglement_fidelity, relative_entropy};
    use crate::linalg::{from_real_diag, ONE, ZERO};
    use crate::sources::haar_state;

    fn caps() -> Caps {
        Caps::default()
    }

    #[test]
    fn maximally_mixed_compression_is_identity() {
        let rho = DensityOperator::maximally_mixed(2);
        let s = build_compression(&rho, 0.1, 0.1, 4, TauChoice::FirstBasisVectorOfRange).unwrap();
        assert_eq!(s.compressed_logdim, 4.0);
        let omega = haar_state(2, 4, 5);
        let f = compression_fidelity(&s, &omega, &caps()).unwrap();
        assert!((f.exact.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_bound_example() {
        let rho = DensityOperator::from_diag(&[0.75, 0.25]).unwrap();
        let s = build_compression(&rho, 0.1, 0.1, 8, TauChoice::FirstBasisVectorOfRange).unwrap();
        assert!(s.compressed_logdim <= 8.0 * (s.sigma_q.h_q + 0.1));
    }

    #[test]
    fn kraus_sets_are_complete_and_match_the_closed_form() {
        let mut m = from_real_diag(&[0.7, 0.3]);
        m[(0, 1)] = C64::new(0.2, 0.1);
        m[(1, 0)] = C64::new(0.2, -0.1);
        let rho = DensityOperator::new(m).unwrap();
        for tau in [TauChoice::FirstBasisVectorOfRange, TauChoice::MaximallyMixedOnRange] {
            let s = build_compression(&rho, 0.2, 0.05, 3, tau).unwrap();
            let kraus = s.encoder_kraus(&caps()).unwrap();
            check_kraus(&kraus).unwrap();
            for seed in 0..3 {
                let omega = haar_state(2, 3, seed);
                let dense = omega.to_dense(&caps()).unwrap();
                let oracle = entanglement_fidelity(&dense, &kraus).unwrap();
                let f = compression_fidelity(&s, &omega, &caps()).unwrap();
                assert!((f.exact.unwrap() - oracle).abs() < 1e-10);
                let fd = compression_fidelity(&s, &StateN::dense(2, 3, dense).unwrap(), &caps()).unwrap();
                assert!((fd.exact.unwrap() - oracle).abs() < 1e-10);
                assert!(f.holds());
            }
        }
    }

    #[test]
    fn orthogonal_input_two_qubit_oracle() {
        // ρ = |0><0| with q small: Π_2 = |00><00|
        let rho = DensityOperator::from_diag(&[1.0, 0.0]).unwrap();
        let s = build_compression(&rho, 0.01, 0.05, 2, TauChoice::FirstBasisVectorOfRange).unwrap();
        assert_eq!(s.projector.count(), 1u32.into());
        // ω = |ψ><ψ| with ψ = (|01> + |11>)/√2, orthogonal to |00>
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = vec![ZERO, C64::new(h, 0.0), ZERO, C64::new(h, 0.0)];
        let omega = StateN::pure(2, 2, psi.clone()).unwrap();
        // hand-built Kraus set: Π = |00><00|, E_l = |00><l| for l = 01, 10, 11
        let mut kraus = Vec::new();
        let mut pi = CMat::zeros(4, 4);
        pi[(0, 0)] = ONE;
        kraus.push(pi);
        for l in 1..4 {
            let mut e = CMat::zeros(4, 4);
            e[(0, l)] = ONE;
            kraus.push(e);
        }
        let dense = omega.to_dense(&caps()).unwrap();
        let oracle = entanglement_fidelity(&dense, &kraus).unwrap();
        // Tr(ω E_l) = <l|ω|00> = 0 for every l since ψ has no |00> component
        assert!(oracle.abs() < 1e-15);
        let f = compression_fidelity(&s, &omega, &caps()).unwrap();
        assert!((f.exact.unwrap() - oracle).abs() < 1e-10);
        assert_eq!(f.lower_bound, 0.0);
    }

    #[test]
    fn tau_choice_does_not_change_lower_bound() {
        let rho = DensityOperator::from_diag(&[0.8, 0.2]).unwrap();
        let omega = haar_state(2, 5, 2);
        let a = build_compression(&rho, 0.1, 0.1, 5, TauChoice::FirstBasisVectorOfRange).unwrap();
        let b = build_compression(&rho, 0.1, 0.1, 5, TauChoice::MaximallyMixedOnRange).unwrap();
        let fa = compression_fidelity(&a, &omega, &caps()).unwrap();
        let fb = compression_fidelity(&b, &omega, &caps()).unwrap();
        assert_eq!(fa.lower_bound, fb.lower_bound);
    }

    #[test]
    fn stein_trivial_case() {
        let mixed = DensityOperator::maximally_mixed(2);
        let t = build_stein_test(&mixed, &mixed, 0.1, 0.05, 6).unwrap();
        assert!((t.a - 1.0).abs() < 1e-12 && (t.a - t.h_q).abs() < 1e-12);
        assert!((t.certificate_exponent + 0.1).abs() < 1e-12);
        let st = StateN::product(mixed.clone(), 6).unwrap();
        let e = stein_errors(&t, &st, &caps()).unwrap();
        assert!(e.alpha.abs() < 1e-12 && (e.beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stein_exponent_example_and_singular_alternative() {
        let rho = DensityOperator::from_diag(&[1.0, 0.0]).unwrap();
        let sigma = DensityOperator::maximally_mixed(2);
        let t = build_stein_test(&rho, &sigma, 0.1, 0.05, 4).unwrap();
        let hq = build_sigma_q(&rho, 0.1).unwrap().h_q;
        assert!((t.a - 1.0).abs() < 1e-12);
        assert!((t.certificate_exponent - (1.0 - hq - 0.1)).abs() < 1e-12);
        let singular = DensityOperator::from_diag(&[0.0, 1.0]).unwrap();
        assert!(matches!(
            build_stein_test(&rho, &singular, 0.1, 0.05, 4),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn commuting_beta_matches_diagonal_enumeration() {
        let rho = DensityOperator::from_diag(&[0.8, 0.2]).unwrap();
        let sigma = DensityOperator::from_diag(&[0.3, 0.7]).unwrap();
        let (q, delta, n) = (0.1, 0.1, 10);
        let t = build_stein_test(&rho, &sigma, q, delta, n).unwrap();
        let sq = build_sigma_q(&rho, q).unwrap();
        // oracle: walk every bit string, compute both means directly
        let aq = |x: usize| -((1.0 - q) * [0.8, 0.2][x] + q / 2.0).log2();
        let b = |x: usize| -[0.3f64, 0.7][x].log2();
        let a = 0.8 * b(0) + 0.2 * b(1);
        let mut beta = 0.0;
        let mut accept_rho = 0.0;
        for idx in 0..(1usize << n) {
            let digits: Vec<usize> = (0..n).map(|s| (idx >> (n - 1 - s)) & 1).collect();
            let mean_a: f64 = digits.iter().map(|&x| aq(x)).sum::<f64>() / n as f64;
            let mean_b: f64 = digits.iter().map(|&x| b(x)).sum::<f64>() / n as f64;
            if mean_a <= sq.h_q + delta && mean_b >= a - delta {
                beta += digits.iter().map(|&x| [0.3, 0.7][x]).product::<f64>();
                accept_rho += digits.iter().map(|&x| [0.8, 0.2][x]).product::<f64>();
            }
        }
        let st = StateN::product(rho, n).unwrap();
        let e = stein_errors(&t, &st, &caps()).unwrap();
        assert!((e.beta - beta).abs() < 1e-12);
        assert!((e.alpha - (1.0 - accept_rho)).abs() < 1e-12);
        assert!(e.holds());
    }

    #[test]
    fn noncommuting_paths_agree_with_dense() {
        let mut m = from_real_diag(&[0.6, 0.4]);
        m[(0, 1)] = C64::new(0.3, 0.0);
        m[(1, 0)] = C64::new(0.3, 0.0);
        let rho = DensityOperator::new(m).unwrap();
        let sigma = DensityOperator::from_diag(&[0.85, 0.15]).unwrap();
        let n = 5;
        let t = build_stein_test(&rho, &sigma, 0.1, 0.1, n).unwrap();
        assert!(t.joint.is_none());
        let qd = t.q_n.to_dense(&caps()).unwrap();
        let pd = t.p_n.to_dense(&caps()).unwrap();
        let tn = &qd * pd * &qd;
        let beta_dense = linalg::trace_of_product(&tn, &sigma.tensor_power(n)).re;
        let psi = haar_state(2, n, 8);
        let alpha_dense = 1.0 - linalg::trace_of_product(&tn, &psi.to_dense(&caps()).unwrap()).re;
        let e = stein_errors(&t, &psi, &caps()).unwrap();
        assert!((e.beta - beta_dense).abs() < 1e-12);
        assert!((e.alpha - alpha_dense).abs() < 1e-10);
        let e2 = stein_errors(&t, &StateN::product(rho, n).unwrap(), &caps()).unwrap();
        assert!((e2.beta - beta_dense).abs() < 1e-12);
        // T_n is a contraction
        let ev = eigh_unchecked(&tn).values;
        assert!(ev[0] >= -1e-12 && ev[ev.len() - 1] <= 1.0 + 1e-12);
    }

    #[test]
    fn dh_examples() {
        let rho = DensityOperator::from_diag(&[0.7, 0.3]).unwrap();
        for eps in [0.01, 0.1, 0.5] {
            let v = dh_epsilon_oracle(rho.matrix(), rho.matrix(), eps).unwrap();
            assert!((v + (1.0 - eps).log2()).abs() < 1e-10);
        }
        let zero = from_real_diag(&[1.0, 0.0]);
        let one = from_real_diag(&[0.0, 1.0]);
        assert_eq!(dh_epsilon_oracle(&zero, &one, 0.1).unwrap(), f64::INFINITY);
        assert!(dh_epsilon_oracle(&zero, &one, 1.0).is_err());
        assert!(dh_epsilon_oracle(&zero, &one, 0.0).is_err());
    }

    /// Every deterministic threshold test plus every single randomized
    /// boundary index, enumerated over sorted ratios.
    fn brute_force_np(p: &[f64], q: &[f64], eps: f64) -> f64 {
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&i, &j| (p[j] / q[j]).total_cmp(&(p[i] / q[i])));
        let mut best = f64::INFINITY;
        for k in 0..=order.len() {
            let (mut pa, mut qa) = (0.0, 0.0);
            for &i in &order[..k] {
                pa += p[i];
                qa += q[i];
            }
            if pa >= 1.0 - eps - 1e-15 {
                best = best.min(qa);
            } else if k < order.len() {
                let i = order[k];
                let gamma = (1.0 - eps - pa) / p[i];
                if gamma <= 1.0 {
                    best = best.min(qa + gamma * q[i]);
                }
            }
        }
        best
    }

    #[test]
    fn commuting_dh_matches_classical_enumeration() {
        let r = [0.65, 0.35];
        let s = [0.4, 0.6];
        let n = 6;
        let p = product_distribution(&r, n);
        let q = product_distribution(&s, n);
        let oracle = -brute_force_np(&p, &q, 0.1).log2();
        let rho_n = StateN::product(DensityOperator::from_diag(&r).unwrap(), n).unwrap();
        let sigma_n = StateN::product(DensityOperator::from_diag(&s).unwrap(), n).unwrap();
        let fast = dh_epsilon_states(&rho_n, &sigma_n, 0.1, &caps()).unwrap();
        assert!((fast - oracle).abs() < 1e-10, "{fast} vs {oracle}");
        let dense = dh_epsilon_oracle(
            &rho_n.to_dense(&caps()).unwrap(),
            &sigma_n.to_dense(&caps()).unwrap(),
            0.1,
        )
        .unwrap();
        assert!((dense - oracle).abs() < 1e-10);
    }

    #[test]
    fn noncommuting_dual_is_attained_by_a_feasible_test() {
        let mut m = from_real_diag(&[0.6, 0.4]);
        m[(0, 1)] = C64::new(0.25, 0.1);
        m[(1, 0)] = C64::new(0.25, -0.1);
        let rho = DensityOperator::new(m).unwrap();
        let sigma = DensityOperator::from_diag(&[0.3, 0.7]).unwrap();
        let (r2, s2) = (rho.tensor_power(2), sigma.tensor_power(2));
        let eps = 0.2;
        let value = dh_epsilon_oracle(&r2, &s2, eps).unwrap();
        let beta = (-value).exp2();
        // primal: locate the optimal multiplier, build {μρ−σ>0} + γ·boundary
        let mut best_mu = 0.0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=200_000 {
            let mu = i as f64 / 200_000.0 / eps;
            let g = dual_objective(&r2, &s2, eps, mu);
            if g > best {
                best = g;
                best_mu = mu;
            }
        }
        assert!((best - beta).abs() < 1e-5);
        let e = eigh_unchecked(&(r2.scale(best_mu) - &s2));
        let plus = e.projector(|x| x > 1e-4);
        let boundary = e.projector(|x| x.abs() <= 1e-4);
        let pr = linalg::trace_of_product(&plus, &r2).re;
        let br = linalg::trace_of_product(&boundary, &r2).re;
        let gamma = ((1.0 - eps - pr) / br).clamp(0.0, 1.0);
        let t = plus + boundary.scale(gamma);
        let type1 = 1.0 - linalg::trace_of_product(&t, &r2).re;
        let type2 = linalg::trace_of_product(&t, &s2).re;
        assert!((type1 - eps).abs() < 1e-9);
        // weak duality: every feasible test costs at least the dual value
        assert!(type2 >= beta - 1e-12);
        assert!((type2 - beta).abs() < 1e-6);
    }

    #[test]
    fn dh_is_monotone_in_epsilon() {
        let rho = DensityOperator::from_diag(&[0.9, 0.1]).unwrap();
        let sigma = DensityOperator::from_diag(&[0.4, 0.6]).unwrap();
        let rn = StateN::product(rho.clone(), 8).unwrap();
        let sn = StateN::product(sigma.clone(), 8).unwrap();
        let mut last = f64::NEG_INFINITY;
        for eps in [0.01, 0.05, 0.1, 0.3, 0.6, 0.9] {
            let v = dh_epsilon_states(&rn, &sn, eps, &caps()).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(relative_entropy(&rho, &sigma).unwrap() > 0.0);
    }
}
