//! Global temperature scaling and the three-member ensemble variant.

use serde::{Deserialize, Serialize};

use super::data::LogitSet;
use crate::error::Result;
use crate::metrics::{log_sum_exp, softmax};

pub const TS_LOWER: f64 = 0.05;
pub const TS_UPPER: f64 = 20.0;
pub const TS_TOL: f64 = 1e-4;

/// Mean NLL of `softmax(z / τ)` over `nodes`.
pub fn nll_at_temperature(data: &LogitSet, nodes: &[usize], tau: f64) -> f64 {
    let mut total = 0.0;
    let mut buf = Vec::new();
    for &i in nodes {
        buf.clear();
        buf.extend(data.logits[i].iter().map(|v| v / tau));
        total += log_sum_exp(&buf) - buf[data.labels[i]];
    }
    total / nodes.len() as f64
}

/// Golden-section minimizer of a unimodal function on `[lo, hi]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    if hi - lo <= tol {
        return 0.5 * (lo + hi);
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Single temperature minimizing validation NLL on `[0.05, 20]`.
pub fn fit_global_ts(data: &LogitSet) -> Result<f64> {
    fit_global_ts_in(data, TS_LOWER, TS_UPPER)
}

/// As [`fit_global_ts`] on a caller-chosen interval. A degenerate interval
/// `[t, t]` returns `t`.
pub fn fit_global_ts_in(data: &LogitSet, lo: f64, hi: f64) -> Result<f64> {
    let val = data.require_val()?;
    if !(lo > 0.0) || hi < lo {
        return Err(crate::error::WatsError::InvalidParameter(format!(
            "temperature interval [{lo}, {hi}] must be positive and ordered"
        )));
    }
    if hi == lo {
        return Ok(lo);
    }
    Ok(golden_section_min(
        |t| nll_at_temperature(data, val, t),
        lo,
        hi,
        TS_TOL,
    ))
}

/// Ensemble of the temperature-scaled, uncalibrated and uniform predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsModel {
    pub temperature: f64,
    /// Weights of (scaled, uncalibrated, uniform); on the probability simplex.
    pub weights: [f64; 3],
}

impl EtsModel {
    pub fn probabilities(&self, z: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = z.iter().map(|v| v / self.temperature).collect();
        let p_ts = softmax(&scaled);
        let p_raw = softmax(z);
        let uniform = 1.0 / z.len() as f64;
        let [w1, w2, w3] = self.weights;
        p_ts.iter()
            .zip(&p_raw)
            .map(|(a, b)| w1 * a + w2 * b + w3 * uniform)
            .collect()
    }
}

const ETS_STEPS: usize = 500;
const ETS_LR: f64 = 0.01;
pub const ETS_FALLBACK_MARGIN: f64 = 1e-7;

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Fit the ensemble: temperature from [`fit_global_ts`], then the weights by
/// 500 projected-gradient steps on validation NLL from equal weights. The
/// best iterate seen is returned; the pure temperature-scaled member replaces
/// it when it scores better by more than [`ETS_FALLBACK_MARGIN`].
pub fn fit_ets(data: &LogitSet) -> Result<EtsModel> {
    let val = data.require_val()?;
    let tau = fit_global_ts(data)?;
    let c = data.num_classes() as f64;
    // Per-node member probabilities of the true label.
    let members: Vec<[f64; 3]> = val
        .iter()
        .map(|&i| {
            let z = &data.logits[i];
            let y = data.labels[i];
            let scaled: Vec<f64> = z.iter().map(|v| v / tau).collect();
            [softmax(&scaled)[y], softmax(z)[y], 1.0 / c]
        })
        .collect();
    let objective = |w: &[f64]| -> f64 {
        members
            .iter()
            .map(|p| -(w[0] * p[0] + w[1] * p[1] + w[2] * p[2]).max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / members.len() as f64
    };

    let mut w = vec![1.0 / 3.0; 3];
    let mut best_w = w.clone();
    let mut best = objective(&w);
    for _ in 0..ETS_STEPS {
        let mut grad = [0.0; 3];
        for p in &members {
            let mix = (w[0] * p[0] + w[1] * p[1] + w[2] * p[2]).max(f64::MIN_POSITIVE);
            for k in 0..3 {
                grad[k] -= p[k] / mix;
            }
        }
        let n = members.len() as f64;
        let stepped: Vec<f64> = (0..3).map(|k| w[k] - ETS_LR * grad[k] / n).collect();
        w = project_simplex(&stepped);
        let value = objective(&w);
        if value < best {
            best = value;
            best_w = w.clone();
        }
    }
    let ts_only = [1.0, 0.0, 0.0];
    if objective(&ts_only) < best - ETS_FALLBACK_MARGIN {
        best_w = ts_only.to_vec();
    }
    Ok(EtsModel {
        temperature: tau,
        weights: [best_w[0], best_w[1], best_w[2]],
    })
}

/// Mean validation NLL of an ensemble.
pub fn ets_nll(model: &EtsModel, data: &LogitSet, nodes: &[usize]) -> f64 {
    nodes
        .iter()
        .map(|&i| -model.probabilities(&data.logits[i])[data.labels[i]].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / nodes.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrator::data::Split;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn all_val(logits: Vec<Vec<f64>>, labels: Vec<usize>) -> LogitSet {
        let n = logits.len();
        LogitSet::new(
            logits,
            labels,
            Split {
                train: vec![],
                val: (0..n).collect(),
                test: vec![],
            },
        )
        .unwrap()
    }

    /// Logits `c * z_true`, labels drawn from `softmax(z_true)`.
    fn planted(c: f64, n: usize, classes: usize, seed: u64) -> LogitSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut logits = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let z: Vec<f64> = (0..classes)
                .map(|_| 1.5 * { let v: f64 = StandardNormal.sample(&mut rng); v })
                .collect();
            let p = softmax(&z);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut y = classes - 1;
            for (k, pk) in p.iter().enumerate() {
                acc += pk;
                if u < acc {
                    y = k;
                    break;
                }
            }
            logits.push(z.iter().map(|v| c * v).collect());
            labels.push(y);
        }
        all_val(logits, labels)
    }

    #[test]
    fn recovers_planted_temperature() {
        for (c, seed) in [(2.5, 1), (0.5, 2)] {
            let data = planted(c, 20_000, 4, seed);
            let tau = fit_global_ts(&data).unwrap();
            assert!((tau - c).abs() < 0.05, "planted {c}, got {tau}");
        }
    }

    #[test]
    fn optimum_beats_identity() {
        let data = all_val(
            vec![vec![30.0, 0.0], vec![0.0, 25.0], vec![40.0, 1.0]],
            vec![0, 1, 0],
        );
        let tau = fit_global_ts(&data).unwrap();
        assert!((TS_LOWER..=TS_UPPER).contains(&tau));
        let val = &data.split.val;
        assert!(nll_at_temperature(&data, val, tau) <= nll_at_temperature(&data, val, 1.0));
    }

    #[test]
    fn identical_rows_are_temperature_invariant() {
        let data = all_val(vec![vec![1.0, 1.0, 1.0]; 5], vec![0, 1, 2, 0, 1]);
        let tau = fit_global_ts(&data).unwrap();
        assert!((TS_LOWER..=TS_UPPER).contains(&tau));
        let val = &data.split.val;
        assert_abs_diff_eq!(
            nll_at_temperature(&data, val, tau),
            nll_at_temperature(&data, val, 1.0),
            epsilon = 1e-9
        );
    }

    #[test]
    fn degenerate_interval() {
        let data = planted(2.0, 50, 3, 4);
        assert_eq!(fit_global_ts_in(&data, 1.0, 1.0).unwrap(), 1.0);
        assert!(fit_global_ts_in(&data, 0.0, 1.0).is_err());
    }

    #[test]
    fn golden_section_finds_parabola_min() {
        let x = golden_section_min(|x| (x - 3.3).powi(2), 0.0, 10.0, 1e-6);
        assert_abs_diff_eq!(x, 3.3, epsilon = 1e-6);
    }

    #[test]
    fn simplex_projection_contract() {
        for v in [vec![0.2, 0.3, 0.5], vec![5.0, -1.0, 0.0], vec![-3.0, -3.0, -3.0], vec![0.9, 0.9, -0.4]] {
            let w = project_simplex(&v);
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
    }

    /// Label frequencies per logit pattern equal `softmax(z)` exactly, so
    /// `τ = 1` is the exact NLL optimum.
    fn exactly_calibrated() -> LogitSet {
        let mut logits = Vec::new();
        let mut labels = Vec::new();
        let patterns: [(Vec<f64>, [usize; 3]); 3] = [
            (vec![3f64.ln(), 0.0, -50.0], [3, 1, 0]),
            (vec![0.0, 4f64.ln(), 0.0], [1, 4, 1]),
            (vec![2f64.ln(), 0.0, 2f64.ln()], [2, 1, 2]),
        ];
        for (z, counts) in patterns {
            for (y, &n) in counts.iter().enumerate() {
                for _ in 0..n * 10 {
                    logits.push(z.clone());
                    labels.push(y);
                }
            }
        }
        all_val(logits, labels)
    }

    #[test]
    fn ets_on_calibrated_input() {
        let data = exactly_calibrated();
        let model = fit_ets(&data).unwrap();
        let [w1, w2, w3] = model.weights;
        assert_abs_diff_eq!(w1 + w2 + w3, 1.0, epsilon = 1e-9);
        assert!(model.weights.iter().all(|&w| w >= 0.0));
        assert!((model.temperature - 1.0).abs() < 1e-3, "tau {}", model.temperature);
        let val = &data.split.val;
        let ts = nll_at_temperature(&data, val, model.temperature);
        assert!(ets_nll(&model, &data, val) <= ts + 1e-6);
        assert!(w2 >= w1 - 0.1, "weights {:?}", model.weights);
    }

    #[test]
    fn ets_on_sampled_calibrated_input() {
        let data = planted(1.0, 4000, 3, 8);
        let model = fit_ets(&data).unwrap();
        assert_abs_diff_eq!(model.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert!((model.temperature - 1.0).abs() < 0.1);
        let val = &data.split.val;
        let ts = nll_at_temperature(&data, val, model.temperature);
        assert!(ets_nll(&model, &data, val) <= ts + 1e-6);
    }

    #[test]
    fn ets_on_overconfident_input() {
        let data = planted(3.0, 3000, 5, 9);
        let model = fit_ets(&data).unwrap();
        let val = &data.split.val;
        let ts = nll_at_temperature(&data, val, model.temperature);
        let raw = nll_at_temperature(&data, val, 1.0);
        assert!(ets_nll(&model, &data, val) <= ts.min(raw) + 1e-6);
        assert_abs_diff_eq!(model.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }
}
