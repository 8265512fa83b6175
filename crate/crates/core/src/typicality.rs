//! Concentration of empirical one-site averages and the universal typical
//! projector.
//!
//! An empirical average `(1/n) Σ_i A^{(i)}` is diagonal in the product basis
//! `V^{⊗n}` built from an eigenbasis `V` of `A`, with eigenvalue
//! `(1/n) Σ_j a_{i_j}` on the basis vector `|i_1 ... i_n>`. Its spectral
//! projectors are therefore stored as `V`, the level lists and a threshold
//! predicate, and never materialized as `d^n × d^n` matrices.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    self, apply_product_in_place, eigh_unchecked, rotate_into_basis, rotate_out_of_basis, CMat,
    Side, C64, ZERO,
};
use crate::state::{Caps, DensityOperator, Observable, Payload, StateN};

/// Quantization step for level values; level sums are compared on this grid.
pub const LEVEL_GRID: f64 = 1e-9;

pub fn quantize(x: f64) -> i64 {
    (x / LEVEL_GRID).round() as i64
}

/// Smoothed reference state `σ_q = (1−q)ρ + q·1/d` with its level data.
#[derive(Debug, Clone)]
pub struct SigmaQ {
    pub q: f64,
    pub rho: DensityOperator,
    pub sigma: DensityOperator,
    /// `−log2` of the eigenvalues of `σ_q`, in the column order of `basis`.
    pub levels: Vec<f64>,
    pub basis: CMat,
    /// `Tr(ρ · (−log2 σ_q))`.
    pub h_q: f64,
}

impl SigmaQ {
    /// `A_q = −log2 σ_q`.
    pub fn a_q(&self) -> Observable {
        let d = self.levels.len();
        let diag = linalg::from_real_diag(&self.levels);
        let m = &self.basis * diag * self.basis.adjoint();
        Observable::new(linalg::hermitian_part(&m)).unwrap_or_else(|_| Observable::identity(d))
    }

    /// `Tr(ρ A_q²) − h_q²`.
    pub fn variance(&self) -> f64 {
        let a2 = self.a_q().square();
        (self.rho.expectation(a2.matrix()) - self.h_q * self.h_q).max(0.0)
    }

    /// Diagonal of `ρ` in the eigenbasis of `σ_q`.
    pub fn reference_weights(&self) -> Vec<f64> {
        basis_diagonal(self.rho.matrix(), &self.basis)
    }
}

pub fn build_sigma_q(rho: &DensityOperator, q: f64) -> Result<SigmaQ> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Parameter(format!(
            "q must lie in (0,1), got {q} (q=0 breaks the full-rank guarantee)"
        )));
    }
    let d = rho.dim();
    let m = rho.matrix().scale(1.0 - q) + linalg::identity(d).scale(q / d as f64);
    let e = eigh_unchecked(&m);
    let min = e.values[0];
    if min < q / d as f64 - 1e-12 {
        return Err(Error::Validation(format!(
            "σ_q has eigenvalue {min:e} below q/d"
        )));
    }
    let levels: Vec<f64> = e.values.iter().map(|&l| -l.log2()).collect();
    let weights = basis_diagonal(rho.matrix(), &e.vectors);
    let h_q = weights.iter().zip(&levels).map(|(p, a)| p * a).sum();
    Ok(SigmaQ {
        q,
        rho: rho.clone(),
        sigma: DensityOperator::new(m)?,
        levels,
        basis: e.vectors,
        h_q,
    })
}

/// Real diagonal of `V† M V`.
pub fn basis_diagonal(m: &CMat, basis: &CMat) -> Vec<f64> {
    (0..basis.ncols())
        .map(|j| {
            let v = basis.column(j);
            (v.adjoint() * m * v)[(0, 0)].re
        })
        .collect()
}

/// `mean of levels  side  threshold` for one family of per-site levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelConstraint {
    pub levels: Vec<f64>,
    pub threshold: f64,
    pub side: Side,
}

/// Spectral projector of one or more commuting empirical averages, all
/// diagonal in the product basis `basis^{⊗n}`. A basis vector is in the range
/// iff it satisfies every constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitLevelProjector {
    basis: CMat,
    n: usize,
    constraints: Vec<LevelConstraint>,
}

impl ImplicitLevelProjector {
    pub fn new(basis: CMat, n: usize, constraints: Vec<LevelConstraint>) -> Result<Self> {
        let d = basis.nrows();
        if !basis.is_square() || d == 0 {
            return Err(Error::Dimension("basis must be a nonempty square matrix".into()));
        }
        if n == 0 {
            return Err(Error::Parameter("n must be at least 1".into()));
        }
        if constraints.is_empty() {
            return Err(Error::Parameter("a level projector needs a constraint".into()));
        }
        for c in &constraints {
            if c.levels.len() != d {
                return Err(Error::Dimension(format!(
                    "{} levels for a {d}-dimensional basis",
                    c.levels.len()
                )));
            }
            if !c.threshold.is_finite() || c.levels.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parameter("levels and thresholds must be finite".into()));
            }
        }
        let err = linalg::unitarity_error(&basis);
        if err > 1e-9 {
            return Err(Error::Validation(format!("basis is not unitary (error {err:e})")));
        }
        Ok(ImplicitLevelProjector { basis, n, constraints })
    }

    pub fn single(levels: Vec<f64>, basis: CMat, n: usize, threshold: f64, side: Side) -> Result<Self> {
        Self::new(basis, n, vec![LevelConstraint { levels, threshold, side }])
    }

    /// `{|mean − center| ≤ δ}` for every `(levels, center)` pair.
    pub fn window(basis: CMat, n: usize, windows: &[(Vec<f64>, f64)], delta: f64) -> Result<Self> {
        let mut constraints = Vec::with_capacity(2 * windows.len());
        for (levels, center) in windows {
            constraints.push(LevelConstraint {
                levels: levels.clone(),
                threshold: center - delta,
                side: Side::Ge,
            });
            constraints.push(LevelConstraint {
                levels: levels.clone(),
                threshold: center + delta,
                side: Side::Le,
            });
        }
        Self::new(basis, n, constraints)
    }

    pub fn local_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn constraints(&self) -> &[LevelConstraint] {
        &self.constraints
    }

    /// Same projector on a different number of sites.
    pub fn with_sites(&self, n: usize) -> Result<Self> {
        Self::new(self.basis.clone(), n, self.constraints.clone())
    }

    fn quantized_levels(&self) -> Vec<Vec<i64>> {
        self.constraints
            .iter()
            .map(|c| c.levels.iter().map(|&x| quantize(x)).collect())
            .collect()
    }

    fn quantized_thresholds(&self) -> Vec<i64> {
        self.constraints
            .iter()
            .map(|c| quantize(self.n as f64 * c.threshold))
            .collect()
    }

    fn admits_sums(&self, sums: &[i64], thresholds: &[i64]) -> bool {
        self.constraints
            .iter()
            .zip(sums.iter().zip(thresholds))
            .all(|(c, (&s, &t))| c.side.admits_quantized(s, t))
    }

    /// Whether the product basis vector with these digits is in the range.
    pub fn admits_digits(&self, digits: &[usize]) -> bool {
        let ql = self.quantized_levels();
        let sums: Vec<i64> = ql.iter().map(|l| digits.iter().map(|&x| l[x]).sum()).collect();
        self.admits_sums(&sums, &self.quantized_thresholds())
    }

    /// Range membership of every flattened product-basis index.
    pub fn mask(&self, caps: &Caps) -> Result<Vec<bool>> {
        let d = self.local_dim();
        let dim = linalg::checked_pow(d, self.n).unwrap_or(usize::MAX);
        caps.check_pure(dim)?;
        let ql = self.quantized_levels();
        let thresholds = self.quantized_thresholds();
        // sums over the first s digits, extended one site at a time
        let mut sums: Vec<Vec<i64>> = vec![vec![0]; ql.len()];
        for _ in 0..self.n {
            for (c, s) in sums.iter_mut().enumerate() {
                let mut next = Vec::with_capacity(s.len() * d);
                for &prefix in s.iter() {
                    for &l in &ql[c] {
                        next.push(prefix + l);
                    }
                }
                *s = next;
            }
        }
        let mut scratch = vec![0i64; ql.len()];
        Ok((0..dim)
            .map(|idx| {
                for (c, s) in sums.iter().enumerate() {
                    scratch[c] = s[idx];
                }
                self.admits_sums(&scratch, &thresholds)
            })
            .collect())
    }

    /// Exact number of product-basis vectors in the range.
    pub fn count(&self) -> BigUint {
        let classes = self.level_classes(&vec![1.0; self.local_dim()]);
        let thresholds = self.quantized_thresholds();
        let n = self.n;
        let binom = binomial_table(n);
        let mut total = BigUint::zero();
        for_each_type(&classes, n, &mut |counts, sums| {
            if self.admits_sums(sums, &thresholds) {
                let mut c = BigUint::one();
                let mut left = n;
                for (class, &k) in classes.iter().zip(counts) {
                    c *= &binom[left][k];
                    c *= BigUint::from(class.multiplicity).pow(k as u32);
                    left -= k;
                }
                total += c;
            }
        });
        total
    }

    /// `log2 Tr Π`; `-inf` for the zero projector.
    pub fn logdim(&self) -> f64 {
        log2_biguint(&self.count())
    }

    /// `Tr(Π ρ_n)`.
    pub fn weight(&self, state: &StateN, caps: &Caps) -> Result<f64> {
        self.check_state(state)?;
        let d = self.local_dim();
        let n = self.n;
        match state.payload() {
            Payload::Product(rho) => Ok(self.product_weight(rho)),
            Payload::Pure(v) => {
                let mut w = v.clone();
                apply_product_in_place(&mut w, &self.basis.adjoint(), d, n);
                let mask = self.mask(caps)?;
                Ok(masked_sum(&mask, |i| w[i].norm_sqr()))
            }
            Payload::Dense(m) => {
                caps.check_dense(m.nrows())?;
                let r = rotate_into_basis(m, &self.basis, d, n);
                let mask = self.mask(caps)?;
                Ok(masked_sum(&mask, |i| r[(i, i)].re))
            }
        }
    }

    /// `Tr(Π ρ^{⊗n})` from the one-site diagonal of `ρ`, summed over type
    /// classes with multinomial weights.
    pub fn product_weight(&self, rho: &DensityOperator) -> f64 {
        let p = basis_diagonal(rho.matrix(), &self.basis);
        let classes = self.level_classes(&p);
        let thresholds = self.quantized_thresholds();
        let n = self.n;
        let ln_fact: Vec<f64> = std::iter::once(0.0)
            .chain((1..=n).scan(0.0, |acc, k| {
                *acc += (k as f64).ln();
                Some(*acc)
            }))
            .collect();
        let mut total = 0.0;
        for_each_type(&classes, n, &mut |counts, sums| {
            if !self.admits_sums(sums, &thresholds) {
                return;
            }
            let mut ln_w = ln_fact[n];
            for (class, &k) in classes.iter().zip(counts) {
                if k == 0 {
                    continue;
                }
                if class.weight <= 0.0 {
                    return;
                }
                ln_w += k as f64 * class.weight.ln() - ln_fact[k];
            }
            total += ln_w.exp();
        });
        total.clamp(0.0, 1.0)
    }

    /// Digits grouped by identical quantized level vectors, with per-class
    /// multiplicity and summed `digit_weights`.
    fn level_classes(&self, digit_weights: &[f64]) -> Vec<LevelClass> {
        let ql = self.quantized_levels();
        let mut map: BTreeMap<Vec<i64>, (u64, f64)> = BTreeMap::new();
        for (x, &w) in digit_weights.iter().enumerate() {
            let key: Vec<i64> = ql.iter().map(|l| l[x]).collect();
            let e = map.entry(key).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += w.max(0.0);
        }
        map.into_iter()
            .map(|(levels, (multiplicity, weight))| LevelClass { levels, multiplicity, weight })
            .collect()
    }

    fn check_state(&self, state: &StateN) -> Result<()> {
        if state.local_dim() != self.local_dim() || state.sites() != self.n {
            return Err(Error::Dimension(format!(
                "projector on d={}, n={} applied to a state with d={}, n={}",
                self.local_dim(),
                self.n,
                state.local_dim(),
                state.sites()
            )));
        }
        Ok(())
    }

    /// First flattened product-basis index in the range.
    pub fn first_index(&self, caps: &Caps) -> Result<Option<usize>> {
        Ok(self.mask(caps)?.iter().position(|&b| b))
    }

    /// `Π v` in place.
    pub fn project_in_place(&self, v: &mut [C64], caps: &Caps) -> Result<()> {
        let d = self.local_dim();
        let mask = self.mask(caps)?;
        if v.len() != mask.len() {
            return Err(Error::Dimension("vector length does not match d^n".into()));
        }
        apply_product_in_place(v, &self.basis.adjoint(), d, self.n);
        for (x, keep) in v.iter_mut().zip(&mask) {
            if !keep {
                *x = ZERO;
            }
        }
        apply_product_in_place(v, &self.basis, d, self.n);
        Ok(())
    }

    /// Materialized `d^n × d^n` projector, subject to the dense cap.
    pub fn to_dense(&self, caps: &Caps) -> Result<CMat> {
        let d = self.local_dim();
        let dim = linalg::checked_pow(d, self.n).unwrap_or(usize::MAX);
        caps.check_dense(dim)?;
        let mask = self.mask(caps)?;
        let diag: Vec<f64> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let p = rotate_out_of_basis(&linalg::from_real_diag(&diag), &self.basis, d, self.n);
        Ok(linalg::hermitian_part(&p))
    }
}

struct LevelClass {
    levels: Vec<i64>,
    multiplicity: u64,
    weight: f64,
}

/// Calls `f(counts, sums)` for every way of distributing `n` sites over the
/// classes, with `sums` the resulting per-constraint level sums.
fn for_each_type(classes: &[LevelClass], n: usize, f: &mut dyn FnMut(&[usize], &[i64])) {
    let width = classes.first().map_or(0, |c| c.levels.len());
    let mut counts = vec![0usize; classes.len()];
    let mut sums = vec![0i64; width];
    fn walk(
        classes: &[LevelClass],
        j: usize,
        left: usize,
        counts: &mut [usize],
        sums: &mut [i64],
        f: &mut dyn FnMut(&[usize], &[i64]),
    ) {
        if j + 1 == classes.len() {
            counts[j] = left;
            for (s, l) in sums.iter_mut().zip(&classes[j].levels) {
                *s += l * left as i64;
            }
            f(counts, sums);
            for (s, l) in sums.iter_mut().zip(&classes[j].levels) {
                *s -= l * left as i64;
            }
            return;
        }
        for k in 0..=left {
            counts[j] = k;
            for (s, l) in sums.iter_mut().zip(&classes[j].levels) {
                *s += l * k as i64;
            }
            walk(classes, j + 1, left - k, counts, sums, f);
            for (s, l) in sums.iter_mut().zip(&classes[j].levels) {
                *s -= l * k as i64;
            }
        }
    }
    if !classes.is_empty() {
        walk(classes, 0, n, &mut counts, &mut sums, f);
    }
}

/// `C(r, k)` for `0 ≤ k ≤ r ≤ n` (Pascal's triangle).
fn binomial_table(n: usize) -> Vec<Vec<BigUint>> {
    let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(n + 1);
    for r in 0..=n {
        let mut row = vec![BigUint::one(); r + 1];
        for k in 1..r {
            row[k] = &rows[r - 1][k - 1] + &rows[r - 1][k];
        }
        rows.push(row);
    }
    rows
}

pub fn log2_biguint(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().map_or(f64::NAN, f64::log2);
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().unwrap_or(f64::NAN);
    top.log2() + shift as f64
}

/// Sum of `f(i)` over admitted indices, in fixed chunk order.
fn masked_sum(mask: &[bool], f: impl Fn(usize) -> f64 + Sync) -> f64 {
    const CHUNK: usize = 1 << 12;
    let partial: Vec<f64> = mask
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            chunk
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| f(c * CHUNK + i))
                .sum()
        })
        .collect();
    partial.iter().sum()
}

/// `Π_n = {−(1/n) log2 σ_q^{⊗n} ≤ h_q + δ}`.
pub fn typical_projector(sq: &SigmaQ, delta: f64, n: usize) -> Result<ImplicitLevelProjector> {
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("δ must be positive, got {delta}")));
    }
    ImplicitLevelProjector::single(sq.levels.clone(), sq.basis.clone(), n, sq.h_q + delta, Side::Le)
}

pub fn projector_weight(p: &ImplicitLevelProjector, s: &StateN, caps: &Caps) -> Result<f64> {
    p.weight(s, caps)
}

pub fn projector_logdim(p: &ImplicitLevelProjector) -> f64 {
    p.logdim()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `Tr(ρ_n Ā_n)`.
    pub mean: f64,
    /// `Tr(ρ_n (Ā_n − μ)²)`.
    pub moment: f64,
}

/// Mean of `Ā_n` and its second moment about `μ`, from one- and two-site
/// marginals.
pub fn empirical_moments(s: &StateN, a: &Observable, mu: f64) -> Result<Moments> {
    if a.dim() != s.local_dim() {
        return Err(Error::Dimension("observable and state dimensions differ".into()));
    }
    let n = s.sites();
    let d = a.dim();
    let b = a.matrix() - linalg::identity(d).scale(mu);
    let b2 = &b * &b;
    let bb = linalg::kron(&b, &b);
    let mut mean = 0.0;
    let mut diagonal = 0.0;
    for i in 1..=n {
        let m = s.partial_trace(&[i])?;
        mean += m.expectation(a.matrix());
        diagonal += m.expectation(&b2);
    }
    let pairs: Vec<(usize, usize)> = (1..=n)
        .flat_map(|i| ((i + 1)..=n).map(move |j| (i, j)))
        .collect();
    let cross: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| s.partial_trace(&[i, j]).map(|m| m.expectation(&bb)))
        .collect::<Result<_>>()?;
    let off_diagonal = 2.0 * cross.iter().sum::<f64>();
    let nf = n as f64;
    Ok(Moments {
        mean: mean / nf,
        moment: ((diagonal + off_diagonal) / (nf * nf)).max(0.0),
    })
}

/// `Tr(ρ_n {|Ā_n − μ| > δ})`, as `{Ā_n > μ+δ}` plus `{Ā_n < μ−δ}`.
pub fn chebyshev_tail(s: &StateN, a: &Observable, mu: f64, delta: f64, caps: &Caps) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("δ must be positive, got {delta}")));
    }
    if a.dim() != s.local_dim() {
        return Err(Error::Dimension("observable and state dimensions differ".into()));
    }
    let e = eigh_unchecked(a.matrix());
    let n = s.sites();
    let upper = ImplicitLevelProjector::single(e.values.clone(), e.vectors.clone(), n, mu + delta, Side::Gt)?;
    let lower = ImplicitLevelProjector::single(e.values, e.vectors, n, mu - delta, Side::Lt)?;
    Ok((upper.weight(s, caps)? + lower.weight(s, caps)?).clamp(0.0, 1.0))
}
