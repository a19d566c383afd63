//! Calibration metrics: softmax predictions, binned ECE, NLL, degree-binned
//! diagnostics and the one-hop bias estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WatsError};
use crate::graph::Graph;

/// Numerically stable softmax of one row.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

/// `log Σ exp(z)` with max subtraction.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Predicted class and confidence (max softmax probability) per row.
pub fn predict(z: &[Vec<f64>]) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut labels = Vec::with_capacity(z.len());
    let mut conf = Vec::with_capacity(z.len());
    for (i, row) in z.iter().enumerate() {
        if row.len() < 2 {
            return Err(WatsError::InvalidInput(format!(
                "row {i}: need at least two classes"
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(WatsError::InvalidInput(format!("row {i}: non-finite logit")));
        }
        let c = argmax(row);
        let p = softmax(row);
        labels.push(c);
        conf.push(p[c]);
    }
    Ok((labels, conf))
}

/// Confidence-histogram bin `((m-1)/M, m/M]`. `bin_index` is 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin_index: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub accuracy: f64,
    pub confidence: f64,
}

/// 0-based bin for `c` under `((m-1)/M, m/M]`, with `c == 0` in the first bin.
pub fn confidence_bin(c: f64, num_bins: usize) -> usize {
    let m = num_bins as f64;
    let mut idx = (c * m).ceil() as usize;
    // Correct rounding at the edges against the same edge values reported in BinStats.
    while idx > 1 && c <= (idx - 1) as f64 / m {
        idx -= 1;
    }
    while idx < num_bins && c > idx as f64 / m {
        idx += 1;
    }
    idx.clamp(1, num_bins) - 1
}

/// Expected calibration error with `num_bins` equal-width bins.
pub fn ece(confidences: &[f64], correct: &[bool], num_bins: usize) -> Result<(f64, Vec<BinStats>)> {
    if num_bins == 0 {
        return Err(WatsError::InvalidParameter("num_bins must be >= 1".into()));
    }
    if confidences.is_empty() {
        return Err(WatsError::InvalidInput("no samples to evaluate".into()));
    }
    if confidences.len() != correct.len() {
        return Err(WatsError::DimensionMismatch {
            expected: confidences.len(),
            actual: correct.len(),
        });
    }
    let mut counts = vec![0usize; num_bins];
    let mut hits = vec![0usize; num_bins];
    let mut conf_sum = vec![0.0f64; num_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        if !(0.0..=1.0).contains(&c) {
            return Err(WatsError::InvalidInput(format!(
                "confidence {c} outside [0, 1]"
            )));
        }
        let b = confidence_bin(c, num_bins);
        counts[b] += 1;
        hits[b] += ok as usize;
        conf_sum[b] += c;
    }
    let m = num_bins as f64;
    let bins: Vec<BinStats> = (0..num_bins)
        .map(|b| {
            let n = counts[b];
            let (accuracy, confidence) = if n == 0 {
                (0.0, 0.0)
            } else {
                (hits[b] as f64 / n as f64, conf_sum[b] / n as f64)
            };
            BinStats {
                bin_index: b,
                lo: b as f64 / m,
                hi: (b + 1) as f64 / m,
                count: n,
                accuracy,
                confidence,
            }
        })
        .collect();
    Ok((ece_from_bins(&bins), bins))
}

/// Weighted sum `Σ (|B_m| / N) |acc - conf|` recomputed from bin statistics.
pub fn ece_from_bins(bins: &[BinStats]) -> f64 {
    let total: usize = bins.iter().map(|b| b.count).sum();
    if total == 0 {
        return 0.0;
    }
    bins.iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 / total as f64 * (b.accuracy - b.confidence).abs())
        .sum()
}

/// Mean negative log-likelihood over `subset`.
pub fn nll(z: &[Vec<f64>], y: &[usize], subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(WatsError::InvalidInput("empty subset for NLL".into()));
    }
    let mut total = 0.0;
    for &i in subset {
        let row = z.get(i).ok_or_else(|| {
            WatsError::InvalidInput(format!("node {i} out of range for logits"))
        })?;
        let label = *y.get(i).ok_or_else(|| {
            WatsError::InvalidInput(format!("node {i} out of range for labels"))
        })?;
        total += log_sum_exp(row) - row[label];
    }
    Ok(total / subset.len() as f64)
}

/// Lower edges of the default degree bins: `[0,2), [2,4), ..., [64, ∞)`.
pub const DEFAULT_DEGREE_EDGES: [usize; 7] = [0, 2, 4, 8, 16, 32, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeBinStats {
    pub degree_lo: usize,
    /// Exclusive upper bound; `None` for the final open-ended bin.
    pub degree_hi: Option<usize>,
    pub count: usize,
    pub accuracy: f64,
    pub confidence: f64,
    pub ece: f64,
}

/// Per-degree-range accuracy, confidence and 10-bin ECE.
///
/// `edges` are strictly increasing lower bounds: bin `b` covers
/// `[edges[b], edges[b+1])` and the last bin is `[edges.last(), ∞)`. Nodes
/// with degree below `edges[0]` are not counted.
pub fn degree_binned_report(
    g: &Graph,
    nodes: &[usize],
    confidences: &[f64],
    correct: &[bool],
    edges: &[usize],
) -> Result<Vec<DegreeBinStats>> {
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(WatsError::InvalidParameter(
            "degree bin edges must be non-empty and strictly increasing".into(),
        ));
    }
    if nodes.len() != confidences.len() || nodes.len() != correct.len() {
        return Err(WatsError::DimensionMismatch {
            expected: nodes.len(),
            actual: confidences.len().min(correct.len()),
        });
    }
    let mut members: Vec<(Vec<f64>, Vec<bool>)> = vec![(Vec::new(), Vec::new()); edges.len()];
    for ((&node, &c), &ok) in nodes.iter().zip(confidences).zip(correct) {
        if node >= g.num_nodes() {
            return Err(WatsError::InvalidInput(format!("node {node} not in graph")));
        }
        let d = g.degree(node);
        if d < edges[0] {
            continue;
        }
        let b = edges.partition_point(|&e| e <= d) - 1;
        members[b].0.push(c);
        members[b].1.push(ok);
    }
    members
        .into_iter()
        .enumerate()
        .map(|(b, (conf, ok))| {
            let count = conf.len();
            let (accuracy, confidence, bin_ece) = if count == 0 {
                (0.0, 0.0, 0.0)
            } else {
                let acc = ok.iter().filter(|&&v| v).count() as f64 / count as f64;
                let mean_conf = conf.iter().sum::<f64>() / count as f64;
                (acc, mean_conf, ece(&conf, &ok, 10)?.0)
            };
            Ok(DegreeBinStats {
                degree_lo: edges[b],
                degree_hi: edges.get(b + 1).copied(),
                count,
                accuracy,
                confidence,
                ece: bin_ece,
            })
        })
        .collect()
}

/// Degree-normalized mean aggregation with a self loop:
/// `(h_i + Σ_{j ∈ N(i)} h_j) / (d_i + 1)`.
pub fn one_hop_mean(g: &Graph, h: &[f64]) -> Result<Vec<f64>> {
    if h.len() != g.num_nodes() {
        return Err(WatsError::DimensionMismatch {
            expected: g.num_nodes(),
            actual: h.len(),
        });
    }
    Ok((0..g.num_nodes())
        .map(|i| {
            let s: f64 = h[i] + g.neighbors(i).iter().map(|&j| h[j]).sum::<f64>();
            s / (g.degree(i) + 1) as f64
        })
        .collect())
}

/// Simplified one-hop bias estimate `|y_i - (1/(d_i+1)) Σ_{j∈N(i)} y_j|`
/// for binary label indicators.
pub fn one_hop_bias(g: &Graph, labels_binary: &[bool]) -> Result<Vec<f64>> {
    if labels_binary.len() != g.num_nodes() {
        return Err(WatsError::DimensionMismatch {
            expected: g.num_nodes(),
            actual: labels_binary.len(),
        });
    }
    let y = |j: usize| if labels_binary[j] { 1.0 } else { 0.0 };
    Ok((0..g.num_nodes())
        .map(|i| {
            let neigh: f64 = g.neighbors(i).iter().map(|&j| y(j)).sum();
            (y(i) - neigh / (g.degree(i) + 1) as f64).abs()
        })
        .collect())
}

/// Unsimplified form `|ĉ_i - 1(ŷ_i = y_i)|` where `ĉ_i` is the closed
/// one-hop label average (self included) and `predictions` holds `ŷ_i`.
pub fn one_hop_bias_exact(
    g: &Graph,
    labels_binary: &[bool],
    predictions: &[bool],
) -> Result<Vec<f64>> {
    if predictions.len() != g.num_nodes() {
        return Err(WatsError::DimensionMismatch {
            expected: g.num_nodes(),
            actual: predictions.len(),
        });
    }
    let y: Vec<f64> = labels_binary.iter().map(|&b| b as u8 as f64).collect();
    let conf = one_hop_mean(g, &y)?;
    Ok(conf
        .iter()
        .zip(labels_binary.iter().zip(predictions))
        .map(|(c, (yl, yp))| (c - if yl == yp { 1.0 } else { 0.0 }).abs())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method_tag: String,
    pub ece: f64,
    pub nll: f64,
    pub accuracy: f64,
    pub num_nodes: usize,
    pub num_bins: usize,
    pub bins: Vec<BinStats>,
    pub degree_bins: Vec<DegreeBinStats>,
    #[serde(default)]
    pub config_echo: serde_json::Value,
}

impl CalibrationReport {
    /// Evaluate logits on `nodes`.
    pub fn from_logits(
        method_tag: &str,
        g: &Graph,
        z: &[Vec<f64>],
        labels: &[usize],
        nodes: &[usize],
        num_bins: usize,
        degree_edges: &[usize],
    ) -> Result<Self> {
        let sub: Vec<Vec<f64>> = nodes.iter().map(|&i| z[i].clone()).collect();
        let (pred, conf) = predict(&sub)?;
        let nll_value = nll(z, labels, nodes)?;
        Self::assemble(method_tag, g, &pred, &conf, nll_value, labels, nodes, num_bins, degree_edges)
    }

    /// Evaluate probability rows on `nodes` (for ensembles that do not
    /// produce logits).
    pub fn from_probs(
        method_tag: &str,
        g: &Graph,
        probs: &[Vec<f64>],
        labels: &[usize],
        nodes: &[usize],
        num_bins: usize,
        degree_edges: &[usize],
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(WatsError::InvalidInput("no nodes to evaluate".into()));
        }
        let mut pred = Vec::with_capacity(nodes.len());
        let mut conf = Vec::with_capacity(nodes.len());
        let mut nll_sum = 0.0;
        for &i in nodes {
            let p = &probs[i];
            let c = argmax(p);
            pred.push(c);
            conf.push(p[c].clamp(0.0, 1.0));
            nll_sum -= p[labels[i]].max(f64::MIN_POSITIVE).ln();
        }
        let nll_value = nll_sum / nodes.len() as f64;
        Self::assemble(method_tag, g, &pred, &conf, nll_value, labels, nodes, num_bins, degree_edges)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        method_tag: &str,
        g: &Graph,
        pred: &[usize],
        conf: &[f64],
        nll_value: f64,
        labels: &[usize],
        nodes: &[usize],
        num_bins: usize,
        degree_edges: &[usize],
    ) -> Result<Self> {
        let correct: Vec<bool> = nodes
            .iter()
            .zip(pred)
            .map(|(&i, &p)| labels[i] == p)
            .collect();
        let (ece_value, bins) = ece(conf, &correct, num_bins)?;
        let accuracy = correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64;
        let degree_bins = degree_binned_report(g, nodes, conf, &correct, degree_edges)?;
        Ok(CalibrationReport {
            method_tag: method_tag.to_string(),
            ece: ece_value,
            nll: nll_value,
            accuracy,
            num_nodes: nodes.len(),
            num_bins,
            bins,
            degree_bins,
            config_echo: serde_json::Value::Null,
        })
    }

    /// Reliability-diagram rows: `bin_lo,bin_hi,count,accuracy,confidence`.
    pub fn reliability_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count,accuracy,confidence\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lo, b.hi, b.count, b.accuracy, b.confidence
            ));
        }
        out
    }

    pub fn degree_csv(&self) -> String {
        let mut out = String::from("degree_lo,degree_hi,count,accuracy,confidence,ece\n");
        for b in &self.degree_bins {
            let hi = b.degree_hi.map_or_else(|| "inf".to_string(), |h| h.to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.degree_lo, hi, b.count, b.accuracy, b.confidence, b.ece
            ));
        }
        out
    }
}
