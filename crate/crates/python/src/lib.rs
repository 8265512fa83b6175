//! Python bindings. States, observables and sources are passed as the same
//! strings the command line accepts.

use std::collections::HashMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use waiid_core::entropies;
use waiid_core::io::{parse_density, parse_observable};
use waiid_core::manybody::{gge_means, GgeSpec};
use waiid_core::protocols::dh_epsilon_states;
use waiid_core::sources::{self, DefectMode, SourceSpec};
use waiid_core::typicality::{build_sigma_q, typical_projector};
use waiid_core::{Caps, StateN};

type Res<T> = Result<T, String>;

fn py_err(e: String) -> PyErr {
    PyValueError::new_err(e)
}

fn caps() -> Res<Caps> {
    Caps::from_env().map_err(|e| e.to_string())
}

fn run_args(args: Vec<String>) -> Res<(bool, String)> {
    let argv = std::iter::once("waiid".to_string()).chain(args);
    let (cfg, print) = waiid_cli::parse_config(argv).map_err(|e| e.to_string())?;
    if print {
        return Ok((true, waiid_cli::config_json(&cfg)));
    }
    let out = waiid_cli::render(&cfg, &caps()?).map_err(|e| e.to_string())?;
    Ok((out.passed, out.text))
}

fn parse_mode(mode: &str) -> Res<DefectMode> {
    match mode {
        "auto" => Ok(DefectMode::Auto),
        "exact" => Ok(DefectMode::Exact),
        "sampled" => Ok(DefectMode::Sampled),
        m => Err(format!("mode must be auto, exact or sampled, got {m:?}")),
    }
}

fn defect_inner(source: &str, n: usize, k: usize, mode: &str, samples: usize, seed: u64) -> Res<HashMap<String, f64>> {
    let spec = SourceSpec::parse(source).map_err(|e| e.to_string())?;
    let r = sources::waiid_defect(&spec, n, k, parse_mode(mode)?, samples, seed, &caps()?)
        .map_err(|e| e.to_string())?;
    Ok(HashMap::from([
        ("defect".to_string(), r.defect),
        ("std_error".to_string(), r.std_error),
        ("subsets_evaluated".to_string(), r.subsets_evaluated as f64),
    ]))
}

fn typical_inner(rho: &str, q: f64, delta: f64, n: usize) -> Res<HashMap<String, f64>> {
    let rho = parse_density(rho).map_err(|e| e.to_string())?;
    let sq = build_sigma_q(&rho, q).map_err(|e| e.to_string())?;
    let p = typical_projector(&sq, delta, n).map_err(|e| e.to_string())?;
    let iid = StateN::product(rho, n).map_err(|e| e.to_string())?;
    let weight = p.weight(&iid, &caps()?).map_err(|e| e.to_string())?;
    Ok(HashMap::from([
        ("h_q".to_string(), sq.h_q),
        ("logdim_bits".to_string(), p.logdim()),
        ("rank_bound_bits".to_string(), n as f64 * (sq.h_q + delta)),
        ("weight".to_string(), weight),
        ("variance".to_string(), sq.variance()),
    ]))
}

fn dh_inner(rho: &str, sigma: &str, epsilon: f64, n: usize) -> Res<f64> {
    let rho = parse_density(rho).map_err(|e| e.to_string())?;
    let sigma = parse_density(sigma).map_err(|e| e.to_string())?;
    let r = StateN::product(rho, n).map_err(|e| e.to_string())?;
    let s = StateN::product(sigma, n).map_err(|e| e.to_string())?;
    dh_epsilon_states(&r, &s, epsilon, &caps()?).map_err(|e| e.to_string())
}

fn h0_inner(source: &str, n: usize, epsilon: f64) -> Res<f64> {
    let spec = SourceSpec::parse(source).map_err(|e| e.to_string())?;
    let caps = caps()?;
    let s = spec.generate(n, &caps).map_err(|e| e.to_string())?;
    entropies::smooth_zero_renyi(&s, epsilon, &caps).map_err(|e| e.to_string())
}

fn gge_inner(h: &str, qs: Vec<String>, lambdas: Vec<f64>) -> Res<Vec<f64>> {
    let h = parse_observable(h).map_err(|e| e.to_string())?;
    let qs = qs
        .iter()
        .map(|q| parse_observable(q))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    gge_means(&GgeSpec { h, qs, lambdas }).map_err(|e| e.to_string())
}

/// Runs a subcommand with command-line style arguments and returns
/// `(audits_passed, output_text)`.
#[pyfunction]
fn run(args: Vec<String>) -> PyResult<(bool, String)> {
    run_args(args).map_err(py_err)
}

/// Purity of the first `k` sites of a Haar-random state.
#[pyfunction]
fn haar_purity(d: usize, n: usize, k: usize, seed: u64) -> PyResult<f64> {
    let subset: Vec<usize> = (1..=k).collect();
    sources::marginal_purity(&sources::haar_state(d, n, seed), &subset).map_err(|e| py_err(e.to_string()))
}

#[pyfunction]
fn expected_purity(d: usize, n: usize, k: usize) -> PyResult<f64> {
    sources::expected_purity_exact(d, n, k).map_err(|e| py_err(e.to_string()))
}

#[pyfunction]
fn defect_bound(d: usize, n: usize, k: usize) -> PyResult<f64> {
    sources::haar_defect_bound(d, n, k).map_err(|e| py_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (source, n, k, mode = "auto", samples = 1000, seed = 0))]
fn defect(source: &str, n: usize, k: usize, mode: &str, samples: usize, seed: u64) -> PyResult<HashMap<String, f64>> {
    defect_inner(source, n, k, mode, samples, seed).map_err(py_err)
}

/// Typical projector of `rho` and its weight on `rho^{⊗n}`.
#[pyfunction]
fn typical(rho: &str, q: f64, delta: f64, n: usize) -> PyResult<HashMap<String, f64>> {
    typical_inner(rho, q, delta, n).map_err(py_err)
}

/// `D_H^ε(ρ^{⊗n} ‖ σ^{⊗n})` in bits.
#[pyfunction]
fn dh(rho: &str, sigma: &str, epsilon: f64, n: usize) -> PyResult<f64> {
    dh_inner(rho, sigma, epsilon, n).map_err(py_err)
}

#[pyfunction]
fn smooth_zero_renyi(source: &str, n: usize, epsilon: f64) -> PyResult<f64> {
    h0_inner(source, n, epsilon).map_err(py_err)
}

/// GGE expectations of `h` and each of `qs`.
#[pyfunction]
fn gge(h: &str, qs: Vec<String>, lambdas: Vec<f64>) -> PyResult<Vec<f64>> {
    gge_inner(h, qs, lambdas).map_err(py_err)
}

#[pymodule]
fn waiid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(haar_purity, m)?)?;
    m.add_function(wrap_pyfunction!(expected_purity, m)?)?;
    m.add_function(wrap_pyfunction!(defect_bound, m)?)?;
    m.add_function(wrap_pyfunction!(defect, m)?)?;
    m.add_function(wrap_pyfunction!(typical, m)?)?;
    m.add_function(wrap_pyfunction!(dh, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_zero_renyi, m)?)?;
    m.add_function(wrap_pyfunction!(gge, m)?)?;
    Ok(())
}
