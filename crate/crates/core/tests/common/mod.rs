//! Shared helpers for the integration and acceptance suites: independent
//! oracles (state enumeration, chain dynamic programming), a validator for
//! the subset of JSON Schema the shipped report schema uses, and small
//! fixtures.

#![allow(dead_code)]

use std::path::PathBuf;

use rsrg_seg::colormodel::GaussianLabelModel;
use rsrg_seg::grid::{LabelField, Torus};

/// Path of the compiled CLI binary.
pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rsrg-seg")
}

/// Unique scratch path under the target tmp dir.
pub fn scratch(name: &str) -> PathBuf {
    let mut p = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    p.push(format!("{}-{name}", std::process::id()));
    p
}

/// Exact marginals of the Potts posterior on a small torus by enumerating
/// all q^n states. The edge multiset is the torus's own enumeration, so
/// doubled edges on 2-wide lattices are weighed exactly as the model defines.
pub fn enumerate_marginals(t: Torus, log_unaries: &[f64], q: usize, alpha: f64) -> Vec<f64> {
    let n = t.num_sites();
    let total = q.pow(n as u32);
    let mut marg = vec![0.0f64; n * q];
    let mut z = 0.0;
    for code in 0..total {
        let mut cfg = vec![0usize; n];
        let mut c = code;
        for slot in cfg.iter_mut() {
            *slot = c % q;
            c /= q;
        }
        let mut logw = 0.0;
        for (i, &xi) in cfg.iter().enumerate() {
            logw += log_unaries[i * q + xi];
        }
        for e in 0..t.num_edges() {
            let (i, j) = t.edge_endpoints(e);
            if cfg[i] == cfg[j] {
                logw += 0.5 * alpha;
            }
        }
        let w = logw.exp();
        z += w;
        for (i, &xi) in cfg.iter().enumerate() {
            marg[i * q + xi] += w;
        }
    }
    for v in marg.iter_mut() {
        *v /= z;
    }
    marg
}

/// Exact Boltzmann probabilities of every labeling of a small torus under the
/// pure Potts prior, indexed by the base-q state code.
pub fn enumerate_prior(t: Torus, q: usize, alpha: f64) -> Vec<f64> {
    let n = t.num_sites();
    let total = q.pow(n as u32);
    let mut w = vec![0.0f64; total];
    for (code, slot) in w.iter_mut().enumerate() {
        let mut cfg = vec![0usize; n];
        let mut c = code;
        for s in cfg.iter_mut() {
            *s = c % q;
            c /= q;
        }
        let mut logw = 0.0;
        for e in 0..t.num_edges() {
            let (i, j) = t.edge_endpoints(e);
            if cfg[i] == cfg[j] {
                logw += 0.5 * alpha;
            }
        }
        *slot = logw.exp();
    }
    let z: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= z;
    }
    w
}

/// Exact site marginals of a Potts chain by a forward/backward transfer sweep.
pub fn chain_marginals(log_unaries: &[f64], q: usize, alpha: f64) -> Vec<f64> {
    let len = log_unaries.len() / q;
    let couple = |a: usize, b: usize| if a == b { (0.5 * alpha).exp() } else { 1.0 };
    let mut fwd = vec![vec![0.0f64; q]; len];
    for xi in 0..q {
        fwd[0][xi] = log_unaries[xi].exp();
    }
    for i in 1..len {
        for xi in 0..q {
            let mut s = 0.0;
            for prev in 0..q {
                s += fwd[i - 1][prev] * couple(prev, xi);
            }
            fwd[i][xi] = s * log_unaries[i * q + xi].exp();
        }
    }
    let mut bwd = vec![vec![1.0f64; q]; len];
    for i in (0..len - 1).rev() {
        for xi in 0..q {
            let mut s = 0.0;
            for next in 0..q {
                s += couple(xi, next) * log_unaries[(i + 1) * q + next].exp() * bwd[i + 1][next];
            }
            bwd[i][xi] = s;
        }
    }
    let mut out = vec![0.0f64; len * q];
    for i in 0..len {
        let mut z = 0.0;
        for xi in 0..q {
            out[i * q + xi] = fwd[i][xi] * bwd[i][xi];
            z += out[i * q + xi];
        }
        for xi in 0..q {
            out[i * q + xi] /= z;
        }
    }
    out
}

/// Grayscale model with one level per label and isotropic noise.
pub fn gray_model(levels: &[f64], sigma: f64) -> GaussianLabelModel {
    let var = sigma * sigma;
    let cov = [[var, 0.0, 0.0], [0.0, var, 0.0], [0.0, 0.0, var]];
    GaussianLabelModel::new(
        levels.iter().map(|&v| [v, v, v]).collect(),
        vec![cov; levels.len()],
    )
    .unwrap()
}

/// Labeling accuracy maximized over label permutations (q <= 4).
pub fn best_permutation_accuracy(
    got: &LabelField,
    truth: &LabelField,
    q: usize,
) -> (f64, Vec<usize>) {
    fn permutations(q: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut items: Vec<usize> = (0..q).collect();
        fn heap(k: usize, items: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if k <= 1 {
                out.push(items.clone());
                return;
            }
            for i in 0..k {
                heap(k - 1, items, out);
                if k.is_multiple_of(2) {
                    items.swap(i, k - 1);
                } else {
                    items.swap(0, k - 1);
                }
            }
        }
        heap(q, &mut items, &mut out);
        out
    }
    assert!(q <= 4, "permutation search is factorial");
    let n = got.torus().num_sites();
    let mut best = (0.0, Vec::new());
    for perm in permutations(q) {
        let acc = (0..n)
            .filter(|&i| perm[got.label(i)] == truth.label(i))
            .count() as f64
            / n as f64;
        if acc > best.0 {
            best = (acc, perm);
        }
    }
    best
}

/// Validate a JSON value against the subset of JSON Schema used by
/// `schema/run_report.schema.json`: `type`, `properties`, `required`,
/// `items`, `minItems`, `maxItems`.
pub fn validate_schema(
    value: &serde_json::Value,
    schema: &serde_json::Value,
    path: &str,
) -> Result<(), String> {
    if let Some(ty) = schema.get("type").and_then(|t| t.as_str()) {
        let ok = match ty {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "number" => value.is_number(),
            "integer" => value.is_i64() || value.is_u64(),
            "boolean" => value.is_boolean(),
            "string" => value.is_string(),
            other => return Err(format!("{path}: unsupported schema type {other}")),
        };
        if !ok {
            return Err(format!("{path}: expected {ty}, found {value}"));
        }
    }
    if let Some(required) = schema.get("required").and_then(|r| r.as_array()) {
        let obj = value
            .as_object()
            .ok_or_else(|| format!("{path}: not an object"))?;
        for key in required {
            let key = key.as_str().unwrap();
            if !obj.contains_key(key) {
                return Err(format!("{path}: missing required key {key}"));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(|p| p.as_object()) {
        if let Some(obj) = value.as_object() {
            for (key, sub) in props {
                if let Some(v) = obj.get(key) {
                    validate_schema(v, sub, &format!("{path}.{key}"))?;
                }
            }
        }
    }
    if let Some(arr) = value.as_array() {
        if let Some(min) = schema.get("minItems").and_then(|v| v.as_u64()) {
            if (arr.len() as u64) < min {
                return Err(format!("{path}: fewer than {min} items"));
            }
        }
        if let Some(max) = schema.get("maxItems").and_then(|v| v.as_u64()) {
            if (arr.len() as u64) > max {
                return Err(format!("{path}: more than {max} items"));
            }
        }
        if let Some(items) = schema.get("items") {
            for (k, v) in arr.iter().enumerate() {
                validate_schema(v, items, &format!("{path}[{k}]"))?;
            }
        }
    }
    Ok(())
}

/// The shipped report schema.
pub fn report_schema() -> serde_json::Value {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/schema/run_report.schema.json"
    ))
    .expect("schema file ships with the crate");
    serde_json::from_str(&text).expect("schema file is valid JSON")
}
