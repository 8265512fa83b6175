//! JSON state files, 17-significant-digit float formatting and small matrix
//! literals.
//!
//! A state file is `{"d": int, "n": int, "kind": "dense"|"pure", "data": ...}`
//! where `data` is a `d^n × d^n` nested array of `[re, im]` pairs for dense
//! payloads and a flat list of `[re, im]` pairs for pure ones.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::{from_real_diag, CMat, C64};
use crate::state::{DensityOperator, Observable, Payload, StateN};

/// Float with 17 significant digits; infinities as `inf`/`-inf`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Compact JSON with every non-integer number printed through [`fmt17`].
/// Non-finite floats become the strings `"inf"`, `"-inf"`, `"nan"`.
pub fn to_json_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value);
    out
}

fn write_value(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt17(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}:", Value::String(k.clone()));
                write_value(out, v);
            }
            out.push('}');
        }
    }
}

/// JSON value for a float; non-finite values become strings.
pub fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else {
        Value::String(fmt17(x))
    }
}

fn pair(z: C64) -> String {
    format!("[{},{}]", fmt17(z.re), fmt17(z.im))
}

/// Serializes pure and dense payloads. Product payloads are written densely.
pub fn state_to_json(state: &StateN) -> String {
    let (kind, data) = match state.payload() {
        Payload::Pure(v) => {
            let items: Vec<String> = v.iter().map(|z| pair(*z)).collect();
            ("pure", format!("[{}]", items.join(",")))
        }
        Payload::Dense(m) => ("dense", matrix_data(m)),
        Payload::Product(rho) => ("dense", matrix_data(&rho.tensor_power(state.sites()))),
    };
    format!(
        "{{\"d\":{},\"n\":{},\"kind\":\"{kind}\",\"data\":{data}}}",
        state.local_dim(),
        state.sites()
    )
}

fn matrix_data(m: &CMat) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols()).map(|j| pair(m[(i, j)])).collect();
            format!("[{}]", cells.join(","))
        })
        .collect();
    format!("[{}]", rows.join(","))
}

/// Raw content of a state file before state validation.
#[derive(Debug, Clone)]
pub enum RawState {
    Dense { d: usize, n: usize, matrix: CMat },
    Pure { d: usize, n: usize, amplitudes: Vec<C64> },
}

fn parse_pair(v: &Value) -> Result<C64> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| Error::Parse("expected a [re, im] pair".into()))?;
    let num = |x: &Value| {
        x.as_f64()
            .ok_or_else(|| Error::Parse(format!("{x} is not a number")))
    };
    Ok(C64::new(num(&arr[0])?, num(&arr[1])?))
}

pub fn parse_raw_state(text: &str) -> Result<RawState> {
    let v: Value = serde_json::from_str(text)?;
    let field = |name: &str| {
        v.get(name)
            .ok_or_else(|| Error::Parse(format!("state file lacks \"{name}\"")))
    };
    let dim = |name: &str| -> Result<usize> {
        field(name)?
            .as_u64()
            .filter(|&x| x > 0)
            .map(|x| x as usize)
            .ok_or_else(|| Error::Parse(format!("\"{name}\" must be a positive integer")))
    };
    let d = dim("d")?;
    let n = dim("n")?;
    let total = crate::linalg::checked_pow(d, n)
        .ok_or_else(|| Error::Parse("d^n overflows".into()))?;
    let data = field("data")?
        .as_array()
        .ok_or_else(|| Error::Parse("\"data\" must be an array".into()))?;
    match field("kind")?.as_str() {
        Some("pure") => {
            if data.len() != total {
                return Err(Error::Parse(format!(
                    "pure data has {} entries, expected {total}",
                    data.len()
                )));
            }
            let amplitudes = data.iter().map(parse_pair).collect::<Result<Vec<_>>>()?;
            Ok(RawState::Pure { d, n, amplitudes })
        }
        Some("dense") => {
            if data.len() != total {
                return Err(Error::Parse(format!(
                    "dense data has {} rows, expected {total}",
                    data.len()
                )));
            }
            let mut matrix = CMat::zeros(total, total);
            for (i, row) in data.iter().enumerate() {
                let row = row
                    .as_array()
                    .filter(|r| r.len() == total)
                    .ok_or_else(|| Error::Parse(format!("row {i} must have {total} entries")))?;
                for (j, z) in row.iter().enumerate() {
                    matrix[(i, j)] = parse_pair(z)?;
                }
            }
            Ok(RawState::Dense { d, n, matrix })
        }
        _ => Err(Error::Parse("\"kind\" must be \"dense\" or \"pure\"".into())),
    }
}

pub fn state_from_json(text: &str) -> Result<StateN> {
    match parse_raw_state(text)? {
        RawState::Pure { d, n, amplitudes } => StateN::pure(d, n, amplitudes),
        RawState::Dense { d, n, matrix } => StateN::dense(d, n, matrix),
    }
}

pub fn read_state(path: &Path) -> Result<StateN> {
    state_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_state(state: &StateN, path: &Path) -> Result<()> {
    std::fs::write(path, state_to_json(state))?;
    Ok(())
}

/// Square matrix from a file: any state file read as a matrix, without the
/// density-operator checks (so observables can share the format).
pub fn read_matrix(path: &Path) -> Result<CMat> {
    let raw = parse_raw_state(&std::fs::read_to_string(path)?)?;
    Ok(match raw {
        RawState::Dense { matrix, .. } => matrix,
        RawState::Pure { amplitudes, .. } => {
            let v = nalgebra::DVector::from_column_slice(&amplitudes);
            &v * v.adjoint()
        }
    })
}

fn literal_args(text: &str, name: &str) -> Option<Result<Vec<f64>>> {
    let rest = text.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')?;
    Some(
        rest.split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {x:?} in {text:?}")))
            })
            .collect(),
    )
}

fn as_dim(x: f64, text: &str) -> Result<usize> {
    if x >= 1.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        Err(Error::Parse(format!("{text:?}: dimension must be a positive integer")))
    }
}

/// Matrix from a literal or, failing that, a file path.
///
/// Literals: `diag(a,b,...)`, `identity(d)`, `mixed(d)`, `ket(i,d)`,
/// `spin_z(d)`, `spin_z2(d)`, `pauli_x`, `pauli_y`, `pauli_z`.
pub fn parse_matrix(text: &str) -> Result<CMat> {
    let text = text.trim();
    match text {
        "pauli_x" => return Ok(Observable::pauli_x().matrix().clone()),
        "pauli_y" => return Ok(Observable::pauli_y().matrix().clone()),
        "pauli_z" => return Ok(Observable::pauli_z().matrix().clone()),
        _ => {}
    }
    if let Some(args) = literal_args(text, "diag") {
        return Ok(from_real_diag(&args?));
    }
    let one_dim = |name: &str| -> Option<Result<usize>> {
        literal_args(text, name).map(|a| {
            let a = a?;
            if a.len() != 1 {
                return Err(Error::Parse(format!("{text:?} takes one argument")));
            }
            as_dim(a[0], text)
        })
    };
    if let Some(d) = one_dim("identity") {
        return Ok(crate::linalg::identity(d?));
    }
    if let Some(d) = one_dim("mixed") {
        return Ok(DensityOperator::maximally_mixed(d?).into_matrix());
    }
    if let Some(d) = one_dim("spin_z") {
        return Ok(Observable::spin_z(d?).matrix().clone());
    }
    if let Some(d) = one_dim("spin_z2") {
        return Ok(Observable::spin_z(d?).square().matrix().clone());
    }
    if let Some(args) = literal_args(text, "ket") {
        let args = args?;
        if args.len() != 2 {
            return Err(Error::Parse(format!("{text:?}: expected ket(i,d)")));
        }
        let i = as_dim(args[0] + 1.0, text)? - 1;
        let d = as_dim(args[1], text)?;
        if i >= d {
            return Err(Error::Parse(format!("{text:?}: index out of range")));
        }
        let mut p = vec![0.0; d];
        p[i] = 1.0;
        return Ok(from_real_diag(&p));
    }
    let path = Path::new(text);
    if path.exists() {
        return read_matrix(path);
    }
    Err(Error::Parse(format!(
        "{text:?} is neither a matrix literal nor an existing file"
    )))
}

pub fn parse_density(text: &str) -> Result<DensityOperator> {
    DensityOperator::new(parse_matrix(text)?)
}

pub fn parse_observable(text: &str) -> Result<Observable> {
    Observable::new(parse_matrix(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, ZERO};

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt17(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt17(f64::INFINITY), "inf");
    }

    #[test]
    fn json_floats_use_seventeen_digits() {
        let v = serde_json::json!({"a": 0.25, "b": 3, "c": [1.5]});
        assert_eq!(
            to_json_string(&v),
            "{\"a\":2.5000000000000000e-1,\"b\":3,\"c\":[1.5000000000000000e0]}"
        );
    }

    #[test]
    fn pure_state_round_trip_is_bit_exact() {
        let s = 1.0 / 3.0f64.sqrt();
        let amps = vec![
            C64::new(s, 0.0),
            C64::new(0.0, s),
            ZERO,
            C64::new(-s * 0.6, s * 0.8),
        ];
        let st = StateN::pure(2, 2, amps).unwrap();
        let text = state_to_json(&st);
        let back = state_from_json(&text).unwrap();
        assert_eq!(back, st);
        assert_eq!(state_to_json(&back), text);
    }

    #[test]
    fn dense_state_round_trip_is_bit_exact() {
        let rho = DensityOperator::from_diag(&[0.7, 0.2, 0.1]).unwrap();
        let st = StateN::product(rho.clone(), 2).unwrap();
        let back = state_from_json(&state_to_json(&st)).unwrap();
        match back.payload() {
            Payload::Dense(m) => assert_eq!(m, &rho.tensor_power(2)),
            _ => panic!("expected a dense payload"),
        }
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(state_from_json("{\"d\":2,\"n\":1,\"kind\":\"pure\",\"data\":[[1,0]]}").is_err());
        assert!(state_from_json("{\"d\":2,\"n\":1,\"kind\":\"mixed\",\"data\":[]}").is_err());
        assert!(state_from_json("{\"d\":2,\"n\":1,\"kind\":\"pure\",\"data\":[[0.6,0],[0.8,0]]}").is_ok());
        assert!(state_from_json("{\"d\":2,\"n\":1,\"kind\":\"pure\",\"data\":[[1,0],[1,0]]}").is_err());
    }

    #[test]
    fn literals() {
        let m = parse_matrix("diag(0.75, 0.25)").unwrap();
        assert_eq!(m, from_real_diag(&[0.75, 0.25]));
        let k = parse_density("ket(1,3)").unwrap();
        assert_eq!(k.matrix()[(1, 1)].re, 1.0);
        let z2 = parse_matrix("spin_z2(3)").unwrap();
        assert!(max_abs(&(z2 - from_real_diag(&[1.0, 0.0, 1.0]))) < 1e-15);
        assert!(parse_matrix("ket(3,3)").is_err());
        assert!(parse_matrix("no/such/file.json").is_err());
        assert!(parse_density("diag(0.5,0.6)").is_err());
    }
}
