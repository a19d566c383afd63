//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! Every entry point returns a JSON string so the page can stay plain
//! JavaScript with no generated glue beyond `wasm-bindgen` itself.

use serde::Serialize;
use wasm_bindgen::prelude::*;
use wats_core::calibrator::{fit_global_ts, scale_logits, temperatures, train_wats};
use wats_core::metrics::{CalibrationReport, DEFAULT_DEGREE_EDGES};
use wats_core::synth::{generate, SyntheticSpec};
use wats_core::wavelet::{heat_coefficients, wavelet_features};
use wats_core::{CalibratorParams, CoeffScheme, LogitSet, TrainConfig, WaveletConfig};

fn scheme(exact: bool) -> CoeffScheme {
    if exact {
        CoeffScheme::ChebyshevExact
    } else {
        CoeffScheme::ExpIndex
    }
}

fn to_js<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

#[derive(Serialize)]
struct FilterCurve {
    coefficients: Vec<f64>,
    lambda: Vec<f64>,
    target: Vec<f64>,
    approx: Vec<f64>,
    max_error: f64,
}

/// Spectral response of the truncated filter `Σ c_k T_k(λ - 1)` on `[0, 2]`
/// against the heat kernel `exp(-sλ)`.
pub fn filter_curve_data(k: usize, s: f64, exact: bool, samples: usize) -> Result<String, String> {
    let cfg = WaveletConfig::new(k, s, scheme(exact));
    let c = heat_coefficients(&cfg).map_err(|e| e.to_string())?;
    let n = samples.max(2);
    let mut curve = FilterCurve {
        coefficients: c.clone(),
        lambda: Vec::with_capacity(n),
        target: Vec::with_capacity(n),
        approx: Vec::with_capacity(n),
        max_error: 0.0,
    };
    for j in 0..n {
        let lam = 2.0 * j as f64 / (n - 1) as f64;
        let x = lam - 1.0;
        let (mut t_prev, mut t_cur) = (1.0, x);
        let mut acc = c[0];
        for (idx, ck) in c.iter().enumerate().skip(1) {
            if idx > 1 {
                let next = 2.0 * x * t_cur - t_prev;
                t_prev = t_cur;
                t_cur = next;
            }
            acc += ck * t_cur;
        }
        let target = (-s * lam).exp();
        curve.max_error = curve.max_error.max((acc - target).abs());
        curve.lambda.push(lam);
        curve.target.push(target);
        curve.approx.push(acc);
    }
    Ok(to_js(&curve))
}

#[derive(Serialize)]
struct MethodSummary {
    method: &'static str,
    ece: f64,
    nll: f64,
    accuracy: f64,
    /// `(confidence, accuracy, count)` per non-empty bin.
    reliability: Vec<(f64, f64, usize)>,
    /// `(degree_lo, ece, count)` per non-empty degree bin.
    by_degree: Vec<(usize, f64, usize)>,
}

impl MethodSummary {
    fn from_report(method: &'static str, r: &CalibrationReport) -> Self {
        MethodSummary {
            method,
            ece: r.ece,
            nll: r.nll,
            accuracy: r.accuracy,
            reliability: r
                .bins
                .iter()
                .filter(|b| b.count > 0)
                .map(|b| (b.confidence, b.accuracy, b.count))
                .collect(),
            by_degree: r
                .degree_bins
                .iter()
                .filter(|b| b.count > 0)
                .map(|b| (b.degree_lo, b.ece, b.count))
                .collect(),
        }
    }
}

#[derive(Serialize)]
struct CalibrationDemo {
    methods: Vec<MethodSummary>,
    global_temperature: f64,
    /// `(degree, ideal, learned)` temperature per test node; ideal undoes the planted distortion.
    temperatures: Vec<(usize, f64, f64)>,
    epochs: usize,
}

/// Generate a synthetic graph with degree-dependent underconfidence, then
/// fit global and wavelet-aware temperature scaling on its validation split
/// and report test-split calibration for each.
pub fn calibration_demo_data(
    num_nodes: usize,
    strength: f64,
    k: usize,
    s: f64,
    seed: u64,
) -> Result<String, String> {
    let spec = SyntheticSpec {
        num_nodes,
        profile_strength: strength,
        seed,
        ..SyntheticSpec::default()
    };
    let inst = generate(&spec).map_err(|e| e.to_string())?;
    let data = LogitSet::new(inst.logits.clone(), inst.labels.clone(), inst.split.clone())
        .map_err(|e| e.to_string())?;
    let h = wavelet_features(&inst.graph, &WaveletConfig::new(k, s, CoeffScheme::ExpIndex))
        .map_err(|e| e.to_string())?;

    let params0 = CalibratorParams::init(h.width(), 32, 0.4, seed).map_err(|e| e.to_string())?;
    let trained = train_wats(&h, &data, &params0, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let tau = temperatures(&trained.params, &h, false).map_err(|e| e.to_string())?;
    let t_global = fit_global_ts(&data).map_err(|e| e.to_string())?;

    let test = &inst.split.test;
    let eval = |tag: &'static str, z: &[Vec<f64>]| -> Result<MethodSummary, String> {
        let r = CalibrationReport::from_logits(tag, &inst.graph, z, &inst.labels, test, 10, &DEFAULT_DEGREE_EDGES)
            .map_err(|e| e.to_string())?;
        Ok(MethodSummary::from_report(tag, &r))
    };
    let ts_logits = scale_logits(&inst.logits, &vec![t_global; inst.logits.len()]).map_err(|e| e.to_string())?;
    let wats_logits = scale_logits(&inst.logits, &tau).map_err(|e| e.to_string())?;

    let demo = CalibrationDemo {
        methods: vec![
            eval("Uncalibrated", &inst.logits)?,
            eval("TS", &ts_logits)?,
            eval("WATS", &wats_logits)?,
        ],
        global_temperature: t_global,
        temperatures: test
            .iter()
            .map(|&i| (inst.graph.degree(i), 1.0 / inst.planted_temperatures[i], tau[i]))
            .collect(),
        epochs: trained.epochs_run,
    };
    Ok(to_js(&demo))
}

#[wasm_bindgen]
pub fn filter_curve(k: usize, s: f64, exact: bool, samples: usize) -> Result<String, JsError> {
    filter_curve_data(k, s, exact, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn calibration_demo(
    num_nodes: usize,
    strength: f64,
    k: usize,
    s: f64,
    seed: u64,
) -> Result<String, JsError> {
    calibration_demo_data(num_nodes, strength, k, s, seed).map_err(|e| JsError::new(&e))
}
