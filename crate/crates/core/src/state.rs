//! Single-site operators and `n`-site states.
//!
//! Sites are numbered from 1, and site 1 is the most significant digit of the
//! flattened index: for local dimension `d` the basis state
//! `|i_1 i_2 ... i_n>` sits at `sum_s i_s d^{n-s}`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{
    self, apply_local_in_place, check_hermitian, checked_pow, eigh_unchecked, from_real_diag,
    kron_power, max_abs, CMat, C64, ZERO,
};

/// Validation tolerance for state invariants (trace, positivity, norm).
pub const STATE_TOL: f64 = 1e-10;

/// Upper limits on the flattened dimension `d^n` of materialized payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Caps {
    pub dense_max_dim: usize,
    pub pure_max_dim: usize,
}

pub const DEFAULT_DENSE_CAP: usize = 4096;
pub const DEFAULT_PURE_CAP: usize = 1 << 20;
pub const DENSE_CAP_ENV: &str = "WAIID_DENSE_CAP";
pub const PURE_CAP_ENV: &str = "WAIID_PURE_CAP";

impl Default for Caps {
    fn default() -> Self {
        Caps {
            dense_max_dim: DEFAULT_DENSE_CAP,
            pure_max_dim: DEFAULT_PURE_CAP,
        }
    }
}

impl Caps {
    /// Defaults, overridden by `WAIID_DENSE_CAP` / `WAIID_PURE_CAP`.
    pub fn from_env() -> Result<Self> {
        let mut caps = Caps::default();
        for (var, slot) in [
            (DENSE_CAP_ENV, &mut caps.dense_max_dim),
            (PURE_CAP_ENV, &mut caps.pure_max_dim),
        ] {
            if let Ok(raw) = std::env::var(var) {
                *slot = raw
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("{var}={raw:?} is not a positive integer")))?;
                if *slot == 0 {
                    return Err(Error::Parse(format!("{var} must be positive")));
                }
            }
        }
        Ok(caps)
    }

    pub fn check_dense(&self, dim: usize) -> Result<()> {
        if dim > self.dense_max_dim {
            return Err(Error::CapExceeded {
                kind: "dense",
                size: dim,
                cap: self.dense_max_dim,
            });
        }
        Ok(())
    }

    pub fn check_pure(&self, dim: usize) -> Result<()> {
        if dim > self.pure_max_dim {
            return Err(Error::CapExceeded {
                kind: "pure",
                size: dim,
                cap: self.pure_max_dim,
            });
        }
        Ok(())
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMat,
}

impl DensityOperator {
    pub fn new(matrix: CMat) -> Result<Self> {
        check_hermitian(&matrix, "density operator")?;
        if matrix.nrows() == 0 {
            return Err(Error::Validation("density operator has dimension 0".into()));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::Validation(format!("trace is {tr}, expected 1")));
        }
        let min = eigh_unchecked(&matrix).values[0];
        if min < -STATE_TOL {
            return Err(Error::Validation(format!(
                "density operator has negative eigenvalue {min:e}"
            )));
        }
        Ok(DensityOperator {
            matrix: linalg::hermitian_part(&matrix),
        })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityOperator {
            matrix: linalg::identity(d).unscale(d as f64),
        }
    }

    pub fn from_diag(p: &[f64]) -> Result<Self> {
        Self::new(from_real_diag(p))
    }

    /// `|ψ><ψ|` for a unit vector `ψ`.
    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let v = DVector::from_column_slice(psi);
        let norm = v.norm();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::Validation(format!("state vector has norm {norm}")));
        }
        Self::new(&v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    /// Ascending eigenvalues, clamped at zero.
    pub fn spectrum(&self) -> Vec<f64> {
        eigh_unchecked(&self.matrix)
            .values
            .into_iter()
            .map(|x| x.max(0.0))
            .collect()
    }

    /// Some unit vector `ψ` with `ρ = |ψ><ψ|`, if `ρ` is pure to [`STATE_TOL`].
    pub fn pure_vector(&self) -> Option<Vec<C64>> {
        let e = eigh_unchecked(&self.matrix);
        let top = *e.values.last()?;
        if (top - 1.0).abs() > STATE_TOL {
            return None;
        }
        let col = e.vectors.column(e.dim() - 1);
        Some(col.iter().copied().collect())
    }

    pub fn tensor_power(&self, k: usize) -> CMat {
        kron_power(&self.matrix, k)
    }

    pub fn expectation(&self, obs: &CMat) -> f64 {
        linalg::trace_of_product(&self.matrix, obs).re
    }
}

/// Hermitian matrix on the local space.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: CMat,
}

impl Observable {
    pub fn new(matrix: CMat) -> Result<Self> {
        check_hermitian(&matrix, "observable")?;
        Ok(Observable {
            matrix: linalg::hermitian_part(&matrix),
        })
    }

    pub fn diag(values: &[f64]) -> Self {
        Observable {
            matrix: from_real_diag(values),
        }
    }

    pub fn identity(d: usize) -> Self {
        Observable {
            matrix: linalg::identity(d),
        }
    }

    /// Spin-z operator for spin `(d-1)/2`, diagonal `(j, j-1, ..., -j)`.
    pub fn spin_z(d: usize) -> Self {
        let j = (d as f64 - 1.0) / 2.0;
        let values: Vec<f64> = (0..d).map(|m| j - m as f64).collect();
        Self::diag(&values)
    }

    pub fn pauli_x() -> Self {
        let mut m = CMat::zeros(2, 2);
        m[(0, 1)] = linalg::ONE;
        m[(1, 0)] = linalg::ONE;
        Observable { matrix: m }
    }

    pub fn pauli_y() -> Self {
        let mut m = CMat::zeros(2, 2);
        m[(0, 1)] = C64::new(0.0, -1.0);
        m[(1, 0)] = C64::new(0.0, 1.0);
        Observable { matrix: m }
    }

    pub fn pauli_z() -> Self {
        Self::diag(&[1.0, -1.0])
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Operator norm `‖A‖_∞`.
    pub fn operator_norm(&self) -> f64 {
        let e = eigh_unchecked(&self.matrix);
        e.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn square(&self) -> Observable {
        Observable {
            matrix: &self.matrix * &self.matrix,
        }
    }
}

/// Finite POVM on the local space.
#[derive(Debug, Clone)]
pub struct Povm {
    effects: Vec<CMat>,
}

impl Povm {
    pub fn new(effects: Vec<CMat>) -> Result<Self> {
        let d = match effects.first() {
            Some(e) => e.nrows(),
            None => return Err(Error::Validation("POVM has no effects".into())),
        };
        let mut total = CMat::zeros(d, d);
        for (x, e) in effects.iter().enumerate() {
            if e.nrows() != d {
                return Err(Error::Dimension(format!("effect {x} has the wrong dimension")));
            }
            check_hermitian(e, "POVM effect")?;
            let min = eigh_unchecked(e).values[0];
            if min < -STATE_TOL {
                return Err(Error::Validation(format!(
                    "effect {x} is not positive semidefinite (eigenvalue {min:e})"
                )));
            }
            total += e;
        }
        let err = max_abs(&(total - linalg::identity(d)));
        if err > STATE_TOL {
            return Err(Error::Validation(format!(
                "effects sum to the identity only within {err:e}"
            )));
        }
        Ok(Povm { effects })
    }

    /// Projective measurement in the computational basis.
    pub fn computational_basis(d: usize) -> Self {
        let effects = (0..d)
            .map(|x| {
                let mut m = CMat::zeros(d, d);
                m[(x, x)] = linalg::ONE;
                m
            })
            .collect();
        Povm { effects }
    }

    pub fn dim(&self) -> usize {
        self.effects[0].nrows()
    }

    pub fn outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn effects(&self) -> &[CMat] {
        &self.effects
    }

    /// `p(x) = Tr(ρ M_x)`.
    pub fn probabilities(&self, rho: &DensityOperator) -> Vec<f64> {
        self.effects
            .iter()
            .map(|e| rho.expectation(e).max(0.0))
            .collect()
    }
}

/// Storage of an `n`-site state.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// `d^n × d^n` density matrix.
    Dense(CMat),
    /// Amplitude vector of length `d^n`.
    Pure(Vec<C64>),
    /// Exact tensor power `ρ^{⊗n}` of a single-site state, kept factored.
    Product(DensityOperator),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateN {
    local_dim: usize,
    sites: usize,
    payload: Payload,
}

impl StateN {
    pub fn pure(local_dim: usize, sites: usize, amplitudes: Vec<C64>) -> Result<Self> {
        let dim = flat_dim(local_dim, sites)?;
        if amplitudes.len() != dim {
            return Err(Error::Dimension(format!(
                "pure payload has {} amplitudes, expected {dim}",
                amplitudes.len()
            )));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::Validation(format!("pure payload has norm {norm}")));
        }
        Ok(StateN {
            local_dim,
            sites,
            payload: Payload::Pure(amplitudes),
        })
    }

    pub fn dense(local_dim: usize, sites: usize, matrix: CMat) -> Result<Self> {
        let dim = flat_dim(local_dim, sites)?;
        if matrix.nrows() != dim {
            return Err(Error::Dimension(format!(
                "dense payload is {}x{}, expected {dim}x{dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let rho = DensityOperator::new(matrix)?;
        Ok(StateN {
            local_dim,
            sites,
            payload: Payload::Dense(rho.into_matrix()),
        })
    }

    pub fn product(rho: DensityOperator, sites: usize) -> Result<Self> {
        if sites == 0 {
            return Err(Error::Parameter("a state needs at least one site".into()));
        }
        Ok(StateN {
            local_dim: rho.dim(),
            sites,
            payload: Payload::Product(rho),
        })
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    /// `d^n`.
    pub fn total_dim(&self) -> usize {
        self.local_dim.pow(self.sites as u32)
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.payload, Payload::Pure(_))
    }

    /// Dense density matrix, subject to the dense cap.
    pub fn to_dense(&self, caps: &Caps) -> Result<CMat> {
        let dim = self.total_dim();
        caps.check_dense(dim)?;
        Ok(match &self.payload {
            Payload::Dense(m) => m.clone(),
            Payload::Pure(v) => {
                let v = DVector::from_column_slice(v);
                &v * v.adjoint()
            }
            Payload::Product(rho) => rho.tensor_power(self.sites),
        })
    }

    /// Reduced state on the ordered site list `keep` (1-based). The output
    /// factors follow the order of `keep`.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityOperator> {
        validate_subset(keep, self.sites)?;
        let d = self.local_dim;
        let matrix = match &self.payload {
            Payload::Product(rho) => rho.tensor_power(keep.len()),
            Payload::Pure(psi) => {
                let (kept, rest, dk, dr) = split_indices(d, self.sites, keep);
                let mut slices = CMat::zeros(dk, dr);
                for (idx, amp) in psi.iter().enumerate() {
                    slices[(kept[idx], rest[idx])] = *amp;
                }
                &slices * slices.adjoint()
            }
            Payload::Dense(rho) => {
                let (kept, rest, dk, dr) = split_indices(d, self.sites, keep);
                let mut groups: Vec<Vec<usize>> = vec![Vec::new(); dr];
                for idx in 0..kept.len() {
                    groups[rest[idx]].push(idx);
                }
                let mut out = CMat::zeros(dk, dk);
                for group in &groups {
                    for &i in group {
                        for &j in group {
                            out[(kept[i], kept[j])] += rho[(i, j)];
                        }
                    }
                }
                out
            }
        };
        let tr = linalg::trace(&matrix).re;
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::Validation(format!("marginal has trace {tr}")));
        }
        Ok(DensityOperator {
            matrix: linalg::hermitian_part(&matrix),
        })
    }

    /// Applies a local unitary to a pure payload.
    pub fn apply_local_unitary(&self, u: &CMat, site: usize) -> Result<StateN> {
        match &self.payload {
            Payload::Pure(v) => {
                let out = apply_local_unitary(v, u, self.local_dim, self.sites, site)?;
                Ok(StateN {
                    local_dim: self.local_dim,
                    sites: self.sites,
                    payload: Payload::Pure(out),
                })
            }
            _ => Err(Error::Parameter(
                "local unitaries act on pure payloads only".into(),
            )),
        }
    }
}

fn flat_dim(d: usize, n: usize) -> Result<usize> {
    if d == 0 || n == 0 {
        return Err(Error::Parameter(format!("invalid shape d={d}, n={n}")));
    }
    checked_pow(d, n).ok_or_else(|| Error::Parameter(format!("d^n overflows for d={d}, n={n}")))
}

fn validate_subset(keep: &[usize], n: usize) -> Result<()> {
    if keep.is_empty() {
        return Err(Error::Parameter("site subset is empty".into()));
    }
    let mut seen = vec![false; n + 1];
    for &s in keep {
        if s == 0 || s > n {
            return Err(Error::Parameter(format!("site {s} outside 1..={n}")));
        }
        if seen[s] {
            return Err(Error::Parameter(format!("site {s} listed twice")));
        }
        seen[s] = true;
    }
    Ok(())
}

/// For every flattened index: its index within the kept factors (in `keep`
/// order) and within the remaining factors (ascending site order).
fn split_indices(d: usize, n: usize, keep: &[usize]) -> (Vec<usize>, Vec<usize>, usize, usize) {
    let dim = d.pow(n as u32);
    let k = keep.len();
    // place value of each site's digit inside the kept / remaining index
    let mut kept_weight = vec![0usize; n + 1];
    let mut rest_weight = vec![0usize; n + 1];
    for (j, &s) in keep.iter().enumerate() {
        kept_weight[s] = d.pow((k - 1 - j) as u32);
    }
    let mut w = 1;
    for s in (1..=n).rev() {
        if kept_weight[s] == 0 {
            rest_weight[s] = w;
            w *= d;
        }
    }
    let mut kept = vec![0usize; dim];
    let mut rest = vec![0usize; dim];
    for idx in 0..dim {
        let mut x = idx;
        let (mut a, mut b) = (0, 0);
        for s in (1..=n).rev() {
            let digit = x % d;
            x /= d;
            a += digit * kept_weight[s];
            b += digit * rest_weight[s];
        }
        kept[idx] = a;
        rest[idx] = b;
    }
    (kept, rest, d.pow(k as u32), d.pow((n - k) as u32))
}

/// `(1 ⊗ ... ⊗ U ⊗ ... ⊗ 1) v` with `U` at `site` (1-based).
pub fn apply_local_unitary(v: &[C64], u: &CMat, d: usize, n: usize, site: usize) -> Result<Vec<C64>> {
    if u.nrows() != d || !u.is_square() {
        return Err(Error::Dimension(format!("local operator must be {d}x{d}")));
    }
    if v.len() != flat_dim(d, n)? {
        return Err(Error::Dimension("payload length does not match d^n".into()));
    }
    if site == 0 || site > n {
        return Err(Error::Parameter(format!("site {site} outside 1..={n}")));
    }
    let err = linalg::unitarity_error(u);
    if err > 1e-9 {
        return Err(Error::Validation(format!("operator is not unitary (error {err:e})")));
    }
    let mut out = v.to_vec();
    apply_local_in_place(&mut out, u, d, n, site);
    Ok(out)
}

/// Basis state `|i_1 ... i_n>` as a flattened index.
pub fn flat_index(digits: &[usize], d: usize) -> usize {
    digits.iter().fold(0, |acc, &x| acc * d + x)
}

/// Pure product state `|φ>^{⊗n}`.
pub fn pure_power(phi: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![linalg::ONE];
    for _ in 0..n {
        let mut next = vec![ZERO; out.len() * phi.len()];
        for (i, a) in out.iter().enumerate() {
            for (j, b) in phi.iter().enumerate() {
                next[i * phi.len() + j] = a * b;
            }
        }
        out = next;
    }
    out
}
