//! Dense complex Hermitian linear algebra.
//!
//! Everything in the crate funnels its spectral work through [`eigh`], which
//! returns eigenvalues in ascending order together with an orthonormal
//! eigenbasis stored column-wise.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

/// Eigenvalues at or below this value are treated as zero when deciding
/// supports and the domain of matrix logarithms.
pub const EIG_CUTOFF: f64 = 1e-12;

/// Eigenvalues within this distance of a spectral threshold `r` are counted on
/// the `<= r` side.
pub const TIE_TOL: f64 = 1e-12;

/// Absolute Hermiticity tolerance (max-entry norm) for inputs of unit scale.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Which side of a threshold a spectral projector keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    /// `{Q <= r}`
    Le,
    /// `{Q > r}`
    Gt,
    /// `{Q >= r}`
    Ge,
    /// `{Q < r}`
    Lt,
}

impl Side {
    /// Threshold test with the shared tie rule: values within [`TIE_TOL`] of
    /// `r` count as equal to `r`.
    pub fn admits(self, value: f64, r: f64) -> bool {
        match self {
            Side::Le => value <= r + TIE_TOL,
            Side::Gt => value > r + TIE_TOL,
            Side::Ge => value >= r - TIE_TOL,
            Side::Lt => value < r - TIE_TOL,
        }
    }

    /// Exact comparison on quantized sums.
    pub fn admits_quantized(self, value: i64, r: i64) -> bool {
        match self {
            Side::Le => value <= r,
            Side::Gt => value > r,
            Side::Ge => value >= r,
            Side::Lt => value < r,
        }
    }

    pub fn complement(self) -> Side {
        match self {
            Side::Le => Side::Gt,
            Side::Gt => Side::Le,
            Side::Ge => Side::Lt,
            Side::Lt => Side::Ge,
        }
    }
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |m_ij - conj(m_ji)|`.
pub fn hermiticity_error(m: &CMat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut err: f64 = 0.0;
    for j in 0..n {
        for i in j..n {
            err = err.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    err
}

pub fn check_hermitian(m: &CMat, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Validation(format!(
            "{what} is {}x{}, expected a square matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let err = hermiticity_error(m);
    let tol = HERMITIAN_TOL * max_abs(m).max(1.0);
    if err > tol {
        return Err(Error::Validation(format!(
            "{what} is not Hermitian (max-entry error {err:e} > {tol:e})"
        )));
    }
    Ok(())
}

/// `(m + m†)/2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).unscale(2.0)
}

/// Spectral decomposition `M = V diag(values) V†`.
#[derive(Debug, Clone)]
pub struct Eigh {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: CMat,
}

impl Eigh {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Rebuilds `V f(Λ) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let s = f(lambda);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// Projector onto the span of the eigenvectors selected by `keep`.
    pub fn projector(&self, keep: impl Fn(f64) -> bool) -> CMat {
        self.map(|x| if keep(x) { 1.0 } else { 0.0 })
    }
}

pub fn eigh(m: &CMat) -> Result<Eigh> {
    check_hermitian(m, "matrix")?;
    Ok(eigh_unchecked(m))
}

/// [`eigh`] without the Hermiticity check; the input is symmetrized first.
pub fn eigh_unchecked(m: &CMat) -> Eigh {
    let n = m.nrows();
    if n == 0 {
        return Eigh {
            values: Vec::new(),
            vectors: CMat::zeros(0, 0),
        };
    }
    let sym = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sym.eigenvalues[a].total_cmp(&sym.eigenvalues[b]));
    let values = order.iter().map(|&k| sym.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &sym.eigenvectors.column(src));
    }
    Eigh { values, vectors }
}

/// `Tr|X|`, the sum of singular values.
pub fn trace_norm(x: &CMat) -> Result<f64> {
    if !x.is_square() {
        return Err(Error::Dimension(format!(
            "trace norm needs a square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.nrows() == 0 {
        return Ok(0.0);
    }
    let scale = max_abs(x).max(f64::MIN_POSITIVE);
    if hermiticity_error(x) <= 1e-13 * scale.max(1.0) {
        let e = eigh_unchecked(x);
        return Ok(e.values.iter().map(|v| v.abs()).sum());
    }
    Ok(x.clone().svd(false, false).singular_values.sum())
}

/// Spectral projector `{Q side r}`.
pub fn spectral_projector(q: &CMat, r: f64, side: Side) -> Result<CMat> {
    let e = eigh(q)?;
    Ok(e.projector(|lambda| side.admits(lambda, r)))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// `a ⊗ a ⊗ ... ⊗ a` (`k` factors); `k = 0` gives the 1x1 identity.
pub fn kron_power(a: &CMat, k: usize) -> CMat {
    let mut out = identity(1);
    for _ in 0..k {
        out = kron(&out, a);
    }
    out
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().sum()
}

/// `Tr(a b)` without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn commutator_norm(a: &CMat, b: &CMat) -> f64 {
    max_abs(&(a * b - b * a))
}

pub fn from_real_diag(values: &[f64]) -> CMat {
    let n = values.len();
    let mut m = CMat::zeros(n, n);
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = C64::new(v, 0.0);
    }
    m
}

/// `max |U†U - 1|`.
pub fn unitarity_error(u: &CMat) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(u.adjoint() * u - identity(u.nrows())))
}

/// Integer power with overflow detection.
pub fn checked_pow(d: usize, n: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..n {
        acc = acc.checked_mul(d)?;
    }
    Some(acc)
}

/// Applies `op` (d×d) to tensor factor `site` (1-based, site 1 most
/// significant) of a length-`d^n` vector, in place. `O(d^{n+1})`.
pub fn apply_local_in_place(v: &mut [C64], op: &CMat, d: usize, n: usize, site: usize) {
    debug_assert!(site >= 1 && site <= n);
    debug_assert_eq!(op.nrows(), d);
    let stride = d.pow((n - site) as u32);
    let block = stride * d;
    let mut gathered = vec![ZERO; d];
    for outer in (0..v.len()).step_by(block) {
        for inner in 0..stride {
            let base = outer + inner;
            for (k, g) in gathered.iter_mut().enumerate() {
                *g = v[base + k * stride];
            }
            for r in 0..d {
                let mut acc = ZERO;
                for (k, g) in gathered.iter().enumerate() {
                    acc += op[(r, k)] * g;
                }
                v[base + r * stride] = acc;
            }
        }
    }
}

/// Applies `op^{⊗n}` to a vector by `n` strided local applications.
pub fn apply_product_in_place(v: &mut [C64], op: &CMat, d: usize, n: usize) {
    for site in 1..=n {
        apply_local_in_place(v, op, d, n, site);
    }
}

/// `op^{⊗n} m`, applied column by column.
pub fn apply_product_left(m: &mut CMat, op: &CMat, d: usize, n: usize) {
    let rows = m.nrows();
    for col in m.as_mut_slice().chunks_mut(rows) {
        apply_product_in_place(col, op, d, n);
    }
}

/// `(op^{⊗n})† m op^{⊗n}`: expresses `m` in the product basis whose local
/// basis vectors are the columns of `op`.
pub fn rotate_into_basis(m: &CMat, op: &CMat, d: usize, n: usize) -> CMat {
    let opd = op.adjoint();
    let mut left = m.clone();
    apply_product_left(&mut left, &opd, d, n);
    let mut right = left.adjoint();
    apply_product_left(&mut right, &opd, d, n);
    right.adjoint()
}

/// `op^{⊗n} m (op^{⊗n})†`.
pub fn rotate_out_of_basis(m: &CMat, op: &CMat, d: usize, n: usize) -> CMat {
    let mut left = m.clone();
    apply_product_left(&mut left, op, d, n);
    let mut right = left.adjoint();
    apply_product_left(&mut right, op, d, n);
    right.adjoint()
}

/// Common orthonormal eigenbasis (columns) of a commuting Hermitian family.
///
/// Diagonalizes a fixed pseudo-random real combination of the family, then
/// re-diagonalizes every member inside each (near-)degenerate eigenspace.
/// The caller is responsible for checking commutation.
pub fn simultaneous_eigenbasis(family: &[&CMat]) -> Result<CMat> {
    let d = match family.first() {
        Some(m) => m.nrows(),
        None => return Err(Error::Parameter("empty operator family".into())),
    };
    for m in family {
        if m.nrows() != d || !m.is_square() {
            return Err(Error::Dimension("operator family has mixed dimensions".into()));
        }
        check_hermitian(m, "family member")?;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_0f_c0_ffee);
    let mut combo = CMat::zeros(d, d);
    for m in family {
        let c: f64 = rng.random_range(0.5..1.5);
        combo += (*m).scale(c / max_abs(m).max(1e-300));
    }
    let e = eigh_unchecked(&combo);
    let mut basis = e.vectors.clone();
    refine_blocks(&mut basis, &e.values, family, 0);
    Ok(basis)
}

fn degenerate_blocks(values: &[f64]) -> Vec<std::ops::Range<usize>> {
    let scale = values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let tol = 1e-8 * scale;
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > tol {
            blocks.push(start..i);
            start = i;
        }
    }
    blocks
}

fn refine_blocks(basis: &mut CMat, values: &[f64], family: &[&CMat], member: usize) {
    if member >= family.len() {
        return;
    }
    for block in degenerate_blocks(values) {
        if block.len() < 2 {
            continue;
        }
        let cols = basis.columns(block.start, block.len()).into_owned();
        let restricted = cols.adjoint() * family[member] * &cols;
        let e = eigh_unchecked(&restricted);
        let rotated = &cols * &e.vectors;
        for (k, j) in block.clone().enumerate() {
            basis.set_column(j, &rotated.column(k));
        }
        let mut sub = basis.columns(block.start, block.len()).into_owned();
        refine_blocks(&mut sub, &e.values, family, member + 1);
        for (k, j) in block.enumerate() {
            basis.set_column(j, &sub.column(k));
        }
    }
}
