//! Run configuration: command-line flags, optional JSON config files and
//! per-subcommand normalization.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use waiid_core::protocols::TauChoice;
use waiid_core::sources::{DefectMode, SourceKind, SourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Defect,
    Lln,
    Typical,
    Compress,
    Stein,
    Dh,
    Manybody,
    Gge,
    Measure,
    H0,
    Spectral,
    Haar,
}

#[derive(Debug, Parser)]
#[command(name = "waiid", version, about = "Finite-n experiments on weakly almost i.i.d. quantum sources")]
pub struct Cli {
    #[command(subcommand)]
    pub sub: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Weakly almost i.i.d. defect of a source against its reference.
    Defect(Flags),
    /// Empirical-average moments and Chebyshev tails.
    Lln(Flags),
    /// Universal typical projector: weight, rank and certificates.
    Typical(Flags),
    /// Typical-subspace compression fidelity.
    Compress(Flags),
    /// Stein test errors and their certified type-II bound.
    Stein(Flags),
    /// Hypothesis-testing relative entropy of tensor powers.
    Dh(Flags),
    /// Joint concentration of commuting one-site observables.
    Manybody(Flags),
    /// Generalized Gibbs ensemble typicality.
    Gge(Flags),
    /// Concentration of measurement frequencies.
    Measure(Flags),
    /// Smooth zero-Rényi entropy.
    H0(Flags),
    /// Spectral sup-entropy curves and projector certificates.
    Spectral(Flags),
    /// Marginal purity of Haar-random states.
    Haar(Flags),
}

impl Sub {
    pub fn split(self) -> (Command, Flags) {
        match self {
            Sub::Defect(f) => (Command::Defect, f),
            Sub::Lln(f) => (Command::Lln, f),
            Sub::Typical(f) => (Command::Typical, f),
            Sub::Compress(f) => (Command::Compress, f),
            Sub::Stein(f) => (Command::Stein, f),
            Sub::Dh(f) => (Command::Dh, f),
            Sub::Manybody(f) => (Command::Manybody, f),
            Sub::Gge(f) => (Command::Gge, f),
            Sub::Measure(f) => (Command::Measure, f),
            Sub::H0(f) => (Command::H0, f),
            Sub::Spectral(f) => (Command::Spectral, f),
            Sub::Haar(f) => (Command::Haar, f),
        }
    }
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Defect => "defect",
            Command::Lln => "lln",
            Command::Typical => "typical",
            Command::Compress => "compress",
            Command::Stein => "stein",
            Command::Dh => "dh",
            Command::Manybody => "manybody",
            Command::Gge => "gge",
            Command::Measure => "measure",
            Command::H0 => "h0",
            Command::Spectral => "spectral",
            Command::Haar => "haar",
        }
    }

    /// Flags beyond the common ones that this subcommand reads.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Defect => &["source", "k", "mode", "samples", "trials"],
            Command::Lln => &["source", "observable", "mu", "delta", "trials"],
            Command::Typical => &["source", "q", "delta", "trials"],
            Command::Compress => &["source", "q", "delta", "tau", "trials"],
            Command::Stein => &["source", "rho", "sigma", "q", "delta", "trials"],
            Command::Dh => &["source", "rho", "sigma", "epsilon", "q", "delta", "trials"],
            Command::Manybody => &["source", "observables", "means", "delta", "trials"],
            Command::Gge => &["source", "h", "qs", "lambdas", "delta", "trials"],
            Command::Measure => &["source", "povm", "delta-freq", "trials"],
            Command::H0 => &["source", "epsilon", "q", "delta", "trials"],
            Command::Spectral => {
                &["source", "gamma-points", "gamma-max", "tol", "q", "delta", "eta", "emit"]
            }
            Command::Haar => &["d", "k", "trials"],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const COMMON_KEYS: &[&str] = &["n-min", "n-max", "n-step", "seed", "format"];

/// Every flag, shared by all subcommands. JSON config files use the same
/// keys as the long flags.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Flags {
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Print the normalized configuration as JSON and exit.
    #[arg(long)]
    #[serde(skip)]
    pub print_config: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Output file (default: standard output).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,

    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<String>,

    /// Source descriptor: iid:rho=<state>, haar:d=<int>[:seed=<int>] or
    /// file:path=<pattern with {n}>:rho=<state>.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Reference state (literal or JSON file) when no source is given.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<String>,
    /// Alternative hypothesis state.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<String>,
    /// Local dimension.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Subset or marginal size.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Subset averaging: auto, exact or sampled.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Subsets drawn in sampled mode.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_step: Option<usize>,
    /// Smoothing parameters, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    /// Window half-widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    /// Type-I error levels or smoothing parameters, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    /// Frequency deviation thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub delta_freq: Option<Vec<f64>>,
    /// Monte Carlo draws of a random source.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// csv or json.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// One-site observable (literal or JSON file).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<String>,
    /// Reference mean; defaults to Tr(ρA).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Commuting observables, separated by ';'.
    #[arg(long, value_delimiter = ';')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub observables: Option<Vec<String>>,
    /// Reference means, comma separated; default Tr(ρA_j).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<f64>>,
    /// `basis` or effects separated by ';'.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub povm: Option<String>,
    /// first_basis_vector_of_range or maximally_mixed_on_range.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<String>,
    /// GGE Hamiltonian.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    /// GGE conserved quantities, separated by ';'.
    #[arg(long, value_delimiter = ';')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub qs: Option<Vec<String>>,
    /// GGE multipliers, λ₀ first.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    /// Number of γ grid points.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_points: Option<usize>,
    /// Largest γ (default log2 d).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_max: Option<f64>,
    /// Crossing tolerance for the sup-entropy estimate.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Slack added twice to certificate rates.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// curve or cert.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emit: Option<String>,
}

fn one_or_many<'de, D, T>(de: D) -> Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match Option::<OneOrMany<T>>::deserialize(de)? {
        None => None,
        Some(OneOrMany::One(x)) => Some(vec![x]),
        Some(OneOrMany::Many(v)) => Some(v),
    })
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

macro_rules! merge_fields {
    ($cli:expr, $file:expr, $($f:ident),*) => {
        $( if $cli.$f.is_none() { $cli.$f = $file.$f.take(); } )*
    };
}

impl Flags {
    /// Command-line values over those of the config file.
    pub fn merge_file(mut self, text: &str, command: Command) -> Result<Flags, ConfigError> {
        let mut file: Flags =
            serde_json::from_str(text).map_err(|e| bad(format!("config file: {e}")))?;
        if let Some(name) = &file.subcommand {
            if name != command.name() {
                return Err(bad(format!(
                    "config file is for subcommand {name}, not {}",
                    command.name()
                )));
            }
        }
        merge_fields!(
            self, file, source, rho, sigma, d, k, mode, samples, n_min, n_max, n_step, q, delta,
            epsilon, delta_freq, trials, seed, format, observable, mu, observables, means, povm,
            tau, h, qs, lambdas, gamma_points, gamma_max, tol, eta, emit
        );
        Ok(self)
    }

    fn present_keys(&self) -> Vec<String> {
        match serde_json::to_value(self) {
            Ok(Value::Object(map)) => map.keys().filter(|k| *k != "subcommand").cloned().collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Curve,
    Cert,
}

/// Validated configuration with defaults filled in.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub source: Option<String>,
    pub rho: Option<String>,
    pub sigma: Option<String>,
    pub d: usize,
    pub k: usize,
    pub mode: DefectMode,
    pub samples: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub n_step: usize,
    pub q: Vec<f64>,
    pub delta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub delta_freq: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub format: Format,
    pub observable: Option<String>,
    pub mu: Option<f64>,
    pub observables: Vec<String>,
    pub means: Option<Vec<f64>>,
    pub povm: String,
    pub tau: TauChoice,
    pub h: Option<String>,
    pub qs: Vec<String>,
    pub lambdas: Vec<f64>,
    pub gamma_points: usize,
    pub gamma_max: Option<f64>,
    pub tol: f64,
    pub eta: f64,
    pub emit: Emit,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

fn check_open_unit(name: &str, values: &[f64]) -> Result<(), ConfigError> {
    for &v in values {
        if !(v > 0.0 && v < 1.0) {
            return Err(bad(format!("{name} must lie in (0,1), got {v}")));
        }
    }
    Ok(())
}

fn check_positive(name: &str, values: &[f64]) -> Result<(), ConfigError> {
    for &v in values {
        if !(v > 0.0 && v.is_finite()) {
            return Err(bad(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

fn nonempty<T: Clone>(name: &str, v: Option<Vec<T>>, default: &[T]) -> Result<Vec<T>, ConfigError> {
    let v = v.unwrap_or_else(|| default.to_vec());
    if v.is_empty() {
        return Err(bad(format!("{name} grid must not be empty")));
    }
    Ok(v)
}

/// Checks flags against the subcommand and fills defaults.
pub fn validate(command: Command, flags: Flags) -> Result<RunConfig, ConfigError> {
    let allowed: Vec<&str> = COMMON_KEYS.iter().chain(command.keys()).copied().collect();
    for key in flags.present_keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(bad(format!("--{key} is not used by {command}")));
        }
    }
    let needs_source = !matches!(command, Command::Haar | Command::Gge);
    let source = flags.source.clone();
    let rho = flags.rho.clone();
    let uses_rho = command.keys().contains(&"rho");
    if needs_source && source.is_none() && !(uses_rho && rho.is_some()) {
        return Err(bad(if uses_rho {
            format!("{command} needs --source or --rho")
        } else {
            format!("{command} needs --source")
        }));
    }
    if source.is_some() && rho.is_some() {
        return Err(bad("give either --source or --rho, not both"));
    }
    let spec = match (&source, &rho) {
        (Some(s), _) => Some(SourceSpec::parse(s).map_err(|e| bad(e.to_string()))?),
        _ => None,
    };
    let descriptor_seed = match spec.as_ref().map(|s| &s.kind) {
        Some(SourceKind::HaarPure { seed }) => Some(*seed),
        _ => None,
    };

    let n_min = flags.n_min.unwrap_or(2);
    let n_max = flags.n_max.unwrap_or(n_min.max(8));
    let n_step = flags.n_step.unwrap_or(1);
    if n_min == 0 {
        return Err(bad("n-min must be at least 1"));
    }
    if n_max < n_min {
        return Err(bad(format!("n-max ({n_max}) must not be below n-min ({n_min})")));
    }
    if n_step == 0 {
        return Err(bad("n-step must be at least 1"));
    }

    let q = nonempty("q", flags.q, &[0.1])?;
    check_open_unit("q", &q)?;
    let delta = nonempty("delta", flags.delta, &[0.1])?;
    check_positive("delta", &delta)?;
    let epsilon = nonempty("epsilon", flags.epsilon, &[0.1])?;
    check_open_unit("epsilon", &epsilon)?;
    let delta_freq = nonempty("delta-freq", flags.delta_freq, &[0.1])?;
    check_positive("delta-freq", &delta_freq)?;

    let default_trials = match command {
        Command::Haar => 2000,
        Command::Defect => 200,
        Command::Measure => 500,
        _ => 1,
    };
    let trials = flags.trials.unwrap_or(default_trials);
    if trials == 0 {
        return Err(bad("trials must be at least 1"));
    }
    let k = flags.k.unwrap_or(1);
    if k == 0 {
        return Err(bad("k must be at least 1"));
    }
    let d = flags.d.unwrap_or(2);
    if d < 2 {
        return Err(bad("d must be at least 2"));
    }
    let mode = match flags.mode.as_deref().unwrap_or("auto") {
        "auto" => DefectMode::Auto,
        "exact" => DefectMode::Exact,
        "sampled" => DefectMode::Sampled,
        m => return Err(bad(format!("mode must be auto, exact or sampled, got {m:?}"))),
    };
    let samples = flags.samples.unwrap_or(1000);
    if samples == 0 {
        return Err(bad("samples must be at least 1"));
    }
    let format = match flags.format.as_deref().unwrap_or("csv") {
        "csv" => Format::Csv,
        "json" => Format::Json,
        f => return Err(bad(format!("format must be csv or json, got {f:?}"))),
    };
    let tau = match flags.tau.as_deref().unwrap_or("first_basis_vector_of_range") {
        "first_basis_vector_of_range" => TauChoice::FirstBasisVectorOfRange,
        "maximally_mixed_on_range" => TauChoice::MaximallyMixedOnRange,
        t => {
            return Err(bad(format!(
                "tau must be first_basis_vector_of_range or maximally_mixed_on_range, got {t:?}"
            )))
        }
    };
    let emit = match flags.emit.as_deref().unwrap_or("curve") {
        "curve" => Emit::Curve,
        "cert" => Emit::Cert,
        e => return Err(bad(format!("emit must be curve or cert, got {e:?}"))),
    };
    let gamma_points = flags.gamma_points.unwrap_or(257);
    if gamma_points < 2 {
        return Err(bad("gamma-points must be at least 2"));
    }
    if let Some(g) = flags.gamma_max {
        check_positive("gamma-max", &[g])?;
    }
    let tol = flags.tol.unwrap_or(waiid_core::entropies::DEFAULT_TOL);
    check_open_unit("tol", &[tol])?;
    let eta = flags.eta.unwrap_or(0.01);
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(bad(format!("eta must be nonnegative, got {eta}")));
    }
    if let Some(t) = flags.threads {
        if t == 0 {
            return Err(bad("threads must be at least 1"));
        }
    }

    let observables = flags.observables.unwrap_or_default();
    if matches!(command, Command::Manybody) && observables.is_empty() {
        return Err(bad("manybody needs --observables"));
    }
    if let Some(m) = &flags.means {
        if m.len() != observables.len() {
            return Err(bad(format!(
                "{} means given for {} observables",
                m.len(),
                observables.len()
            )));
        }
    }
    let qs = flags.qs.unwrap_or_default();
    let lambdas = flags.lambdas.unwrap_or_default();
    if matches!(command, Command::Gge) {
        if flags.h.is_none() {
            return Err(bad("gge needs --h"));
        }
        if lambdas.len() != qs.len() + 1 {
            return Err(bad(format!(
                "gge needs {} multipliers (λ₀ then one per conserved quantity), got {}",
                qs.len() + 1,
                lambdas.len()
            )));
        }
    }
    if matches!(command, Command::Stein | Command::Dh) && flags.sigma.is_none() {
        return Err(bad(format!("{command} needs --sigma")));
    }
    if matches!(command, Command::Defect | Command::Haar) && k > n_min {
        return Err(bad(format!("k ({k}) must not exceed n-min ({n_min})")));
    }

    Ok(RunConfig {
        command,
        source,
        rho,
        sigma: flags.sigma,
        d,
        k,
        mode,
        samples,
        n_min,
        n_max,
        n_step,
        q,
        delta,
        epsilon,
        delta_freq,
        trials,
        seed: flags.seed.or(descriptor_seed).unwrap_or(0),
        format,
        observable: flags.observable,
        mu: flags.mu,
        observables,
        means: flags.means,
        povm: flags.povm.unwrap_or_else(|| "basis".into()),
        tau,
        h: flags.h,
        qs,
        lambdas,
        gamma_points,
        gamma_max: flags.gamma_max,
        tol,
        eta,
        emit,
        threads: flags.threads,
        out: flags.out,
    })
}

impl RunConfig {
    pub fn n_values(&self) -> Vec<usize> {
        (self.n_min..=self.n_max).step_by(self.n_step).collect()
    }

    /// The normalized configuration restricted to the keys this subcommand
    /// reads; feeding it back through `--config` reproduces it.
    pub fn to_json(&self) -> Value {
        let mut all = serde_json::Map::new();
        let mut put = |key: &str, v: Value| {
            all.insert(key.to_string(), v);
        };
        put("subcommand", Value::from(self.command.name()));
        put("source", self.source.clone().map_or(Value::Null, Value::from));
        put("rho", self.rho.clone().map_or(Value::Null, Value::from));
        put("sigma", self.sigma.clone().map_or(Value::Null, Value::from));
        put("d", Value::from(self.d));
        put("k", Value::from(self.k));
        put("mode", serde_json::to_value(self.mode).unwrap_or(Value::Null));
        put("samples", Value::from(self.samples));
        put("n-min", Value::from(self.n_min));
        put("n-max", Value::from(self.n_max));
        put("n-step", Value::from(self.n_step));
        put("q", Value::from(self.q.clone()));
        put("delta", Value::from(self.delta.clone()));
        put("epsilon", Value::from(self.epsilon.clone()));
        put("delta-freq", Value::from(self.delta_freq.clone()));
        put("trials", Value::from(self.trials));
        put("seed", Value::from(self.seed));
        put("format", serde_json::to_value(self.format).unwrap_or(Value::Null));
        put("observable", self.observable.clone().map_or(Value::Null, Value::from));
        put("mu", self.mu.map_or(Value::Null, Value::from));
        put("observables", Value::from(self.observables.clone()));
        put("means", self.means.clone().map_or(Value::Null, Value::from));
        put("povm", Value::from(self.povm.clone()));
        put("tau", serde_json::to_value(self.tau).unwrap_or(Value::Null));
        put("h", self.h.clone().map_or(Value::Null, Value::from));
        put("qs", Value::from(self.qs.clone()));
        put("lambdas", Value::from(self.lambdas.clone()));
        put("gamma-points", Value::from(self.gamma_points));
        put("gamma-max", self.gamma_max.map_or(Value::Null, Value::from));
        put("tol", Value::from(self.tol));
        put("eta", Value::from(self.eta));
        put("emit", serde_json::to_value(self.emit).unwrap_or(Value::Null));
        let keep: Vec<&str> = ["subcommand"]
            .iter()
            .chain(COMMON_KEYS)
            .chain(self.command.keys())
            .copied()
            .collect();
        let mut out = serde_json::Map::new();
        for (key, value) in all {
            if keep.contains(&key.as_str()) && !value.is_null() {
                out.insert(key, value);
            }
        }
        Value::Object(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, ConfigError> {
        let cli = Cli::try_parse_from(std::iter::once("waiid").chain(args.iter().copied()))
            .map_err(|e| bad(e.to_string()))?;
        let (command, flags) = cli.sub.split();
        validate(command, flags)
    }

    fn err(args: &[&str]) -> String {
        parse(args).unwrap_err().0
    }

    #[test]
    fn range_errors_name_the_constraint() {
        assert!(err(&["typical", "--source", "haar:d=2", "--q", "0"]).contains("q must lie in (0,1)"));
        assert!(err(&["h0", "--source", "haar:d=2", "--epsilon", "1"]).contains("epsilon must lie in (0,1)"));
        assert!(err(&["lln", "--source", "haar:d=2", "--delta=-0.1"]).contains("delta must be positive"));
        assert!(err(&["defect", "--source", "haar:d=2", "--n-min", "5", "--n-max", "4"]).contains("n-max"));
        assert!(err(&["stein", "--source", "haar:d=2", "--sigma", "mixed(2)", "--k", "2"]).contains("--k is not used by stein"));
        assert!(err(&["gge", "--h", "pauli_z", "--lambdas", "1,2"]).contains("multipliers"));
        assert!(err(&["defect", "--source", "haar:d=2", "--mode", "fast"]).contains("mode must be"));
    }

    #[test]
    fn defaults_are_filled() {
        let c = parse(&["defect", "--source", "haar:d=2:seed=9"]).unwrap();
        assert_eq!((c.n_min, c.n_max, c.n_step, c.k, c.trials, c.seed), (2, 8, 1, 1, 200, 9));
        assert_eq!(c.format, Format::Csv);
        let c = parse(&["defect", "--source", "haar:d=2:seed=9", "--seed", "4"]).unwrap();
        assert_eq!(c.seed, 4);
        let c = parse(&["haar"]).unwrap();
        assert_eq!((c.d, c.trials), (2, 2000));
    }

    #[test]
    fn echo_round_trips_through_a_config_file() {
        let args = [
            "gge", "--h", "spin_z(3)", "--qs", "spin_z2(3)", "--lambdas", "0.7,-0.4", "--delta", "0.2,0.3",
            "--n-max", "5",
        ];
        let c = parse(&args).unwrap();
        let text = c.to_json().to_string();
        let flags = Flags::default().merge_file(&text, Command::Gge).unwrap();
        let again = validate(Command::Gge, flags).unwrap();
        assert_eq!(again.to_json(), c.to_json());
        assert_eq!(again.lambdas, vec![0.7, -0.4]);
    }

    #[test]
    fn command_line_beats_config_file() {
        let file = r#"{"source":"haar:d=2","n-max":6,"q":0.3}"#;
        let cli = Flags { q: Some(vec![0.2]), ..Flags::default() };
        let merged = cli.merge_file(file, Command::Typical).unwrap();
        let c = validate(Command::Typical, merged).unwrap();
        assert_eq!(c.q, vec![0.2]);
        assert_eq!(c.n_max, 6);
    }

    #[test]
    fn config_file_for_another_subcommand_is_rejected() {
        let file = r#"{"subcommand":"stein"}"#;
        assert!(Flags::default().merge_file(file, Command::Dh).is_err());
    }
}
