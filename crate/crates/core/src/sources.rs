//! Source sequences `(ρ_n)` and their defect from the i.i.d. reference.

use std::path::PathBuf;

use itertools::Itertools;
use rand::seq::index;

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::trace_norm;
use crate::rng;
use crate::state::{pure_power, Caps, DensityOperator, StateN};

/// How a source produces its `n`-site state.
#[derive(Debug, Clone)]
pub enum SourceKind {
    /// `ρ^{⊗n}`.
    Iid,
    /// Haar-random pure state on `(C^d)^{⊗n}`, reference `1/d`.
    HaarPure { seed: u64 },
    /// One state file per `n`; `{n}` in the path is replaced by `n`.
    File { path: String },
}

#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub reference: DensityOperator,
}

impl SourceSpec {
    pub fn iid(rho: DensityOperator) -> Self {
        SourceSpec { kind: SourceKind::Iid, reference: rho }
    }

    pub fn haar(d: usize, seed: u64) -> Self {
        SourceSpec {
            kind: SourceKind::HaarPure { seed },
            reference: DensityOperator::maximally_mixed(d),
        }
    }

    pub fn local_dim(&self) -> usize {
        self.reference.dim()
    }

    /// Parses `iid:rho=<lit|file>`, `haar:d=<int>[:seed=<int>]` or
    /// `file:path=<pattern>:rho=<lit|file>`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split(':');
        let kind = parts.next().unwrap_or_default();
        let mut rho = None;
        let mut d = None;
        let mut seed = None;
        let mut path = None;
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("source field {part:?} is not key=value")))?;
            match key {
                "rho" => rho = Some(value),
                "d" => {
                    d = Some(value.parse::<usize>().ok().filter(|&x| x >= 1).ok_or_else(
                        || Error::Parse(format!("source d={value:?} is not a positive integer")),
                    )?)
                }
                "seed" => {
                    seed = Some(value.parse::<u64>().map_err(|_| {
                        Error::Parse(format!("source seed={value:?} is not a 64-bit integer"))
                    })?)
                }
                "path" => path = Some(value),
                _ => return Err(Error::Parse(format!("unknown source field {key:?}"))),
            }
        }
        match kind {
            "iid" => {
                let rho = rho.ok_or_else(|| Error::Parse("iid source needs rho=".into()))?;
                Ok(SourceSpec::iid(io::parse_density(rho)?))
            }
            "haar" => {
                let d = d.ok_or_else(|| Error::Parse("haar source needs d=".into()))?;
                Ok(SourceSpec::haar(d, seed.unwrap_or(0)))
            }
            "file" => {
                let path = path.ok_or_else(|| Error::Parse("file source needs path=".into()))?;
                let rho = rho.ok_or_else(|| Error::Parse("file source needs rho=".into()))?;
                Ok(SourceSpec {
                    kind: SourceKind::File { path: path.to_string() },
                    reference: io::parse_density(rho)?,
                })
            }
            _ => Err(Error::Parse(format!(
                "unknown source kind {kind:?} (expected iid, haar or file)"
            ))),
        }
    }

    /// Same source with the Haar seed replaced; other kinds are unchanged.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        if let SourceKind::HaarPure { seed: s } = &mut out.kind {
            *s = seed;
        }
        out
    }

    pub fn is_random(&self) -> bool {
        matches!(self.kind, SourceKind::HaarPure { .. })
    }

    pub fn generate(&self, n: usize, caps: &Caps) -> Result<StateN> {
        if n == 0 {
            return Err(Error::Parameter("n must be at least 1".into()));
        }
        let d = self.local_dim();
        match &self.kind {
            SourceKind::Iid => match self.reference.pure_vector() {
                Some(phi) => {
                    caps.check_pure(dim_or_cap(d, n, caps.pure_max_dim))?;
                    StateN::pure(d, n, pure_power(&phi, n))
                }
                None => StateN::product(self.reference.clone(), n),
            },
            SourceKind::HaarPure { seed } => {
                caps.check_pure(dim_or_cap(d, n, caps.pure_max_dim))?;
                Ok(haar_state(d, n, *seed))
            }
            SourceKind::File { path } => {
                let path = PathBuf::from(path.replace("{n}", &n.to_string()));
                let st = io::read_state(&path)?;
                if st.local_dim() != d || st.sites() != n {
                    return Err(Error::Dimension(format!(
                        "{} holds d={}, n={}, expected d={d}, n={n}",
                        path.display(),
                        st.local_dim(),
                        st.sites()
                    )));
                }
                Ok(st)
            }
        }
    }
}

fn dim_or_cap(d: usize, n: usize, cap: usize) -> usize {
    crate::linalg::checked_pow(d, n).unwrap_or(cap.saturating_add(1))
}

/// Haar-random pure state, a deterministic function of `(d, n, seed)`.
pub fn haar_state(d: usize, n: usize, seed: u64) -> StateN {
    let dim = d.pow(n as u32);
    let mut r = rng::stream(seed, n as u64);
    let mut v = rng::complex_gaussians(&mut r, dim);
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut v {
        *z /= norm;
    }
    StateN::pure(d, n, v).expect("normalized Gaussian vector is a valid pure state")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefectMode {
    Auto,
    Exact,
    Sampled,
}

/// Subset counts up to this size are enumerated in [`DefectMode::Auto`].
pub const EXACT_SUBSET_LIMIT: u128 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DefectReport {
    pub n: usize,
    pub k: usize,
    /// `Exact` or `Sampled`, never `Auto`.
    pub mode: DefectMode,
    pub defect: f64,
    pub subsets_evaluated: usize,
    /// Standard error of the subset average; zero for exact enumeration.
    pub std_error: f64,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// `‖(ρ_n)_I − ρ^{⊗k}‖₁` averaged over size-`k` subsets `I`.
pub fn defect_of_state(
    state: &StateN,
    reference: &DensityOperator,
    k: usize,
    mode: DefectMode,
    sample_count: usize,
    seed: u64,
) -> Result<DefectReport> {
    let n = state.sites();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if reference.dim() != state.local_dim() {
        return Err(Error::Dimension("reference and source dimensions differ".into()));
    }
    let target = reference.tensor_power(k);
    let distance = |subset: &[usize]| -> Result<f64> {
        let marginal = state.partial_trace(subset)?;
        trace_norm(&(marginal.matrix() - &target))
    };
    let total = binomial(n, k);
    let mode = match mode {
        DefectMode::Auto if total <= EXACT_SUBSET_LIMIT => DefectMode::Exact,
        DefectMode::Auto => DefectMode::Sampled,
        m => m,
    };
    match mode {
        DefectMode::Exact => {
            let mut sum = 0.0;
            let mut count = 0usize;
            for subset in (1..=n).combinations(k) {
                sum += distance(&subset)?;
                count += 1;
            }
            Ok(DefectReport {
                n,
                k,
                mode,
                defect: sum / count as f64,
                subsets_evaluated: count,
                std_error: 0.0,
            })
        }
        _ => {
            if sample_count == 0 {
                return Err(Error::Parameter("sampled mode needs sample_count >= 1".into()));
            }
            let mut r = rng::seeded(seed);
            let mut values = Vec::with_capacity(sample_count);
            for _ in 0..sample_count {
                let mut subset: Vec<usize> =
                    index::sample(&mut r, n, k).into_iter().map(|i| i + 1).collect();
                subset.sort_unstable();
                values.push(distance(&subset)?);
            }
            let (mean, se) = mean_and_std_error(&values);
            Ok(DefectReport {
                n,
                k,
                mode: DefectMode::Sampled,
                defect: mean,
                subsets_evaluated: sample_count,
                std_error: se,
            })
        }
    }
}

pub fn waiid_defect(
    spec: &SourceSpec,
    n: usize,
    k: usize,
    mode: DefectMode,
    sample_count: usize,
    seed: u64,
    caps: &Caps,
) -> Result<DefectReport> {
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let state = spec.generate(n, caps)?;
    defect_of_state(&state, &spec.reference, k, mode, sample_count, seed)
}

/// Sample mean and standard error of the mean (sample standard deviation
/// over `√m`); the error is zero for fewer than two values.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// `Tr(ψ_I²)` of the marginal on `I`.
pub fn marginal_purity(state: &StateN, subset: &[usize]) -> Result<f64> {
    let m = state.partial_trace(subset)?;
    Ok(crate::linalg::trace_of_product(m.matrix(), m.matrix()).re)
}

/// `(d^k + d^{n−k}) / (d^n + 1)`, computed as `(d^{k−n} + d^{−k}) / (1 + d^{−n})`
/// so that large `n` cannot overflow.
pub fn expected_purity_exact(d: usize, n: usize, k: usize) -> Result<f64> {
    check_dnk(d, n, k)?;
    let df = d as f64;
    let num = df.powi(k as i32 - n as i32) + df.powi(-(k as i32));
    let den = 1.0 + df.powi(-(n as i32));
    Ok(num / den)
}

/// `√((d^{2k} − 1) / (d^n + 1))`.
pub fn haar_defect_bound(d: usize, n: usize, k: usize) -> Result<f64> {
    check_dnk(d, n, k)?;
    let df = d as f64;
    let ratio = (df.powi(2 * k as i32 - n as i32) - df.powi(-(n as i32)))
        / (1.0 + df.powi(-(n as i32)));
    Ok(ratio.max(0.0).sqrt())
}

fn check_dnk(d: usize, n: usize, k: usize) -> Result<()> {
    if d == 0 || k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "need d >= 1 and 1 <= k <= n, got d={d}, n={n}, k={k}"
        )));
    }
    if n > i32::MAX as usize / 2 {
        return Err(Error::Parameter(format!("n={n} is too large")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{C64, ONE, ZERO};
    use crate::state::Payload;

    #[test]
    fn iid_pure_reference_gives_basis_state() {
        let spec = SourceSpec::parse("iid:rho=ket(0,2)").unwrap();
        let st = spec.generate(3, &Caps::default()).unwrap();
        let mut expected = vec![ZERO; 8];
        expected[0] = ONE;
        match st.payload() {
            Payload::Pure(v) => {
                for (a, b) in v.iter().zip(&expected) {
                    assert!((a - b).norm() < 1e-15);
                }
            }
            _ => panic!("pure reference should give a pure payload"),
        }
    }

    #[test]
    fn haar_states_are_normalized_and_reproducible() {
        let a = haar_state(2, 5, 9);
        let b = haar_state(2, 5, 9);
        assert_eq!(a, b);
        assert_ne!(a, haar_state(2, 5, 10));
        if let Payload::Pure(v) = a.payload() {
            let norm: f64 = v.iter().map(|z: &C64| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn descriptor_parsing() {
        assert!(matches!(
            SourceSpec::parse("haar:d=2:seed=7").unwrap().kind,
            SourceKind::HaarPure { seed: 7 }
        ));
        assert!(SourceSpec::parse("haar:seed=7").is_err());
        assert!(SourceSpec::parse("iid").is_err());
        assert!(SourceSpec::parse("iid:rho=diag(0.5,0.5):x=1").is_err());
        assert!(SourceSpec::parse("gauss:d=2").is_err());
        let f = SourceSpec::parse("file:path=/nonexistent/s{n}.json:rho=mixed(2)").unwrap();
        assert!(matches!(f.generate(2, &Caps::default()), Err(Error::Io(_))));
    }

    #[test]
    fn closed_forms() {
        assert!((expected_purity_exact(2, 2, 1).unwrap() - 0.8).abs() < 1e-15);
        assert!((expected_purity_exact(2, 4, 1).unwrap() - 10.0 / 17.0).abs() < 1e-15);
        assert!((expected_purity_exact(3, 5, 5).unwrap() - 1.0).abs() < 1e-15);
        assert!((haar_defect_bound(2, 8, 1).unwrap() - (3.0f64 / 257.0).sqrt()).abs() < 1e-15);
        assert!((haar_defect_bound(2, 2, 1).unwrap() - 0.6f64.sqrt()).abs() < 1e-15);
        assert!((haar_defect_bound(2, 8, 1).unwrap() - 0.10804).abs() < 1e-5);
        let mut last = f64::INFINITY;
        for n in 1..40 {
            let b = haar_defect_bound(2, n, 1).unwrap();
            assert!(b < last);
            last = b;
        }
        assert!(expected_purity_exact(2, 1000, 3).unwrap().is_finite());
        assert!(haar_defect_bound(2, 3, 4).is_err());
    }

    #[test]
    fn iid_defect_vanishes() {
        let rho = DensityOperator::from_diag(&[0.6, 0.3, 0.1]).unwrap();
        let spec = SourceSpec::iid(rho);
        let r = waiid_defect(&spec, 4, 2, DefectMode::Auto, 0, 0, &Caps::default()).unwrap();
        assert_eq!(r.mode, DefectMode::Exact);
        assert_eq!(r.subsets_evaluated, 6);
        assert!(r.defect < 1e-10);
        assert!(waiid_defect(&spec, 3, 4, DefectMode::Auto, 0, 0, &Caps::default()).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(10, 5), 252);
        assert_eq!(binomial(60, 30), 118_264_581_564_861_424);
        assert_eq!(binomial(3, 4), 0);
    }
}
