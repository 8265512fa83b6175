//! Joint concentration of commuting one-site observables, generalized Gibbs
//! states, and empirical frequencies of repeated measurements.

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, apply_local_in_place, commutator_norm, CMat, C64};
use crate::rng;
use crate::sources::SourceSpec;
use crate::state::{Caps, DensityOperator, Observable, Payload, Povm, StateN};
use crate::typicality::{basis_diagonal, chebyshev_tail, ImplicitLevelProjector};

/// Largest commutator max-norm accepted as commuting.
pub const COMMUTE_TOL: f64 = 1e-9;

fn check_commuting(family: &[&CMat], what: &str) -> Result<()> {
    for i in 0..family.len() {
        for j in (i + 1)..family.len() {
            let c = commutator_norm(family[i], family[j]);
            if c > COMMUTE_TOL {
                return Err(Error::Hypothesis(format!(
                    "{what} must pairwise commute (members {i} and {j}: ‖[A,B]‖ = {c:e})"
                )));
            }
        }
    }
    Ok(())
}

/// `Tr[ρ_n ∏_j {|Ā_{j,n} − a_j| ≤ δ}]`.
pub fn joint_concentration(
    s: &StateN,
    obs: &[Observable],
    ref_means: &[f64],
    delta: f64,
    caps: &Caps,
) -> Result<f64> {
    joint_projector(obs, ref_means, delta, s.sites())?.weight(s, caps)
}

pub fn joint_projector(
    obs: &[Observable],
    ref_means: &[f64],
    delta: f64,
    n: usize,
) -> Result<ImplicitLevelProjector> {
    if obs.is_empty() || obs.len() != ref_means.len() {
        return Err(Error::Parameter(
            "need one reference mean per observable and at least one observable".into(),
        ));
    }
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("δ must be positive, got {delta}")));
    }
    let family: Vec<&CMat> = obs.iter().map(|o| o.matrix()).collect();
    check_commuting(&family, "joint concentration observables")?;
    let w = linalg::simultaneous_eigenbasis(&family)?;
    let windows: Vec<(Vec<f64>, f64)> = obs
        .iter()
        .zip(ref_means)
        .map(|(o, &m)| (basis_diagonal(o.matrix(), &w), m))
        .collect();
    ImplicitLevelProjector::window(w, n, &windows, delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointReport {
    pub weight: f64,
    /// `1 − Σ_j tail_j`.
    pub union_bound: f64,
}

impl JointReport {
    pub fn holds(&self) -> bool {
        self.weight >= self.union_bound - 1e-10
    }
}

/// Joint weight together with the union bound built from single-observable
/// tails.
pub fn joint_report(
    s: &StateN,
    obs: &[Observable],
    ref_means: &[f64],
    delta: f64,
    caps: &Caps,
) -> Result<JointReport> {
    let weight = joint_concentration(s, obs, ref_means, delta, caps)?;
    let mut tails = 0.0;
    for (o, &m) in obs.iter().zip(ref_means) {
        tails += chebyshev_tail(s, o, m, delta, caps)?;
    }
    Ok(JointReport {
        weight,
        union_bound: 1.0 - tails,
    })
}

/// `exp2(−λ₀H − Σ λ_j Q_j) / Z` for a commuting family.
#[derive(Debug, Clone)]
pub struct GgeSpec {
    pub h: Observable,
    pub qs: Vec<Observable>,
    /// `λ₀` first, then one multiplier per `Q_j`.
    pub lambdas: Vec<f64>,
}

impl GgeSpec {
    pub fn generators(&self) -> Vec<Observable> {
        std::iter::once(self.h.clone()).chain(self.qs.iter().cloned()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.lambdas.len() != 1 + self.qs.len() {
            return Err(Error::Parameter(format!(
                "{} multipliers for {} generators",
                self.lambdas.len(),
                1 + self.qs.len()
            )));
        }
        let gens = self.generators();
        let family: Vec<&CMat> = gens.iter().map(|o| o.matrix()).collect();
        if family.iter().any(|m| m.nrows() != self.h.dim()) {
            return Err(Error::Dimension("generators have mixed dimensions".into()));
        }
        check_commuting(&family, "GGE generators")
    }
}

pub fn gge_state(spec: &GgeSpec) -> Result<DensityOperator> {
    spec.validate()?;
    let gens = spec.generators();
    let family: Vec<&CMat> = gens.iter().map(|o| o.matrix()).collect();
    let w = linalg::simultaneous_eigenbasis(&family)?;
    let d = w.nrows();
    let mut exponent = vec![0.0; d];
    for (o, &l) in gens.iter().zip(&spec.lambdas) {
        for (e, x) in exponent.iter_mut().zip(basis_diagonal(o.matrix(), &w)) {
            *e -= l * x;
        }
    }
    // shift by the maximum before exponentiating
    let top = exponent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = exponent.iter().map(|e| (e - top).exp2()).collect();
    let z: f64 = weights.iter().sum();
    let diag = linalg::from_real_diag(&weights.iter().map(|x| x / z).collect::<Vec<_>>());
    DensityOperator::new(linalg::hermitian_part(&(&w * diag * w.adjoint())))
}

/// Expectations of `H, Q_1, ...` in the GGE.
pub fn gge_means(spec: &GgeSpec) -> Result<Vec<f64>> {
    let gamma = gge_state(spec)?;
    Ok(spec
        .generators()
        .iter()
        .map(|o| gamma.expectation(o.matrix()))
        .collect())
}

/// Joint weight of `{H} ∪ Qs` around their GGE expectations.
pub fn gge_typicality(s: &StateN, spec: &GgeSpec, delta: f64, caps: &Caps) -> Result<JointReport> {
    let means = gge_means(spec)?;
    joint_report(s, &spec.generators(), &means, delta, caps)
}

/// Probabilities below this are never sampled.
pub const MIN_OUTCOME_PROB: f64 = 1e-15;

fn matrix_sqrt_psd(m: &CMat) -> CMat {
    linalg::eigh_unchecked(m).map(|x| x.max(0.0).sqrt())
}

fn pick(weights: &[f64], rng: &mut rng::Rng) -> usize {
    let total: f64 = weights.iter().filter(|&&p| p >= MIN_OUTCOME_PROB).sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (x, &p) in weights.iter().enumerate() {
        if p < MIN_OUTCOME_PROB {
            continue;
        }
        acc += p;
        last = x;
        if u < acc {
            return x;
        }
    }
    last
}

/// One outcome per site from `M^{⊗n}`, drawn site by site with the `√M_x`
/// instrument.
pub fn sample_outcomes(s: &StateN, m: &Povm, rng: &mut rng::Rng, caps: &Caps) -> Result<Vec<usize>> {
    if m.dim() != s.local_dim() {
        return Err(Error::Dimension("POVM and state dimensions differ".into()));
    }
    let d = s.local_dim();
    let n = s.sites();
    let roots: Vec<CMat> = m.effects().iter().map(matrix_sqrt_psd).collect();
    match s.payload() {
        Payload::Product(rho) => {
            let p = m.probabilities(rho);
            Ok((0..n).map(|_| pick(&p, rng)).collect())
        }
        Payload::Pure(psi) => {
            let mut v = psi.clone();
            let mut out = Vec::with_capacity(n);
            for site in 1..=n {
                let branches: Vec<Vec<C64>> = roots
                    .iter()
                    .map(|r| {
                        let mut w = v.clone();
                        apply_local_in_place(&mut w, r, d, n, site);
                        w
                    })
                    .collect();
                let probs: Vec<f64> = branches
                    .iter()
                    .map(|w| w.iter().map(|z| z.norm_sqr()).sum())
                    .collect();
                let x = pick(&probs, rng);
                let norm = probs[x].sqrt();
                v = branches[x].iter().map(|z| z / norm).collect();
                out.push(x);
            }
            Ok(out)
        }
        Payload::Dense(_) => {
            // Measuring site 1 and tracing it out leaves Tr_1[(M_x ⊗ 1) ρ] / p_x
            // on the remaining sites, whatever instrument realizes M.
            let mut rho = s.to_dense(caps)?;
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let rest = rho.nrows() / d;
                let block = |a: usize, b: usize| rho.view((a * rest, b * rest), (rest, rest));
                let mut first = CMat::zeros(d, d);
                for a in 0..d {
                    for b in 0..d {
                        first[(a, b)] = block(a, b).trace();
                    }
                }
                let probs: Vec<f64> = m
                    .effects()
                    .iter()
                    .map(|e| linalg::trace_of_product(e, &first).re.max(0.0))
                    .collect();
                let x = pick(&probs, rng);
                let e = &m.effects()[x];
                let mut next = CMat::zeros(rest, rest);
                for a in 0..d {
                    for b in 0..d {
                        let w = e[(b, a)];
                        if w != linalg::ZERO {
                            next += block(a, b) * w;
                        }
                    }
                }
                rho = next.unscale(probs[x]);
                out.push(x);
            }
            Ok(out)
        }
    }
}

/// Per-outcome relative frequencies of a sampled string.
pub fn empirical_frequencies(outcomes: &[usize], num_outcomes: usize) -> Vec<f64> {
    let mut f = vec![0.0; num_outcomes];
    for &x in outcomes {
        f[x] += 1.0;
    }
    let n = outcomes.len() as f64;
    f.iter().map(|c| c / n).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyReport {
    pub trials: usize,
    pub n: usize,
    pub delta: f64,
    /// Fraction of trials with `max_x |p̂(x) − p(x)| > δ`.
    pub exceed_probability_estimate: f64,
    /// Binomial standard error `√(e(1−e)/trials)`.
    pub std_error: f64,
    /// `p̂` averaged over trials.
    pub per_outcome_means: Vec<f64>,
    /// `p(x) = Tr(ρ M_x)` for the reference state.
    pub reference_probabilities: Vec<f64>,
}

/// Monte Carlo estimate of the frequency deviation probability. Trial `t`
/// uses the source seeded with `seed ^ t` and a sampler on stream `n + 1` of
/// the same seed.
pub fn frequency_concentration(
    source: &SourceSpec,
    m: &Povm,
    n: usize,
    delta: f64,
    trials: usize,
    seed: u64,
    caps: &Caps,
) -> Result<FrequencyReport> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("δ must be positive, got {delta}")));
    }
    let p = m.probabilities(&source.reference);
    let fixed = if source.is_random() { None } else { Some(source.generate(n, caps)?) };
    let per_trial: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let ts = rng::trial_seed(seed, t);
            let state = match &fixed {
                Some(st) => st.clone(),
                None => source.with_seed(ts).generate(n, caps)?,
            };
            let mut r = rng::stream(ts, n as u64 + 1);
            let outcomes = sample_outcomes(&state, m, &mut r, caps)?;
            Ok(empirical_frequencies(&outcomes, m.outcomes()))
        })
        .collect::<Result<_>>()?;
    let mut exceed = 0usize;
    let mut means = vec![0.0; m.outcomes()];
    for f in &per_trial {
        let dev = f.iter().zip(&p).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        if dev > delta {
            exceed += 1;
        }
        for (acc, x) in means.iter_mut().zip(f) {
            *acc += x;
        }
    }
    let tf = trials as f64;
    let e = exceed as f64 / tf;
    Ok(FrequencyReport {
        trials,
        n,
        delta,
        exceed_probability_estimate: e,
        std_error: (e * (1.0 - e) / tf).sqrt(),
        per_outcome_means: means.iter().map(|x| x / tf).collect(),
        reference_probabilities: p,
    })
}
