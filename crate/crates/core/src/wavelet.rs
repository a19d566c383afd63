//! Heat-kernel graph-wavelet structural features.
//!
//! The heat kernel `g(λ) = exp(-s λ)` is applied to a seed signal through a
//! Chebyshev recurrence on the rescaled Laplacian, so the cost is `K` sparse
//! mat-vecs and no eigendecomposition. Each Chebyshev term, weighted by its
//! coefficient, becomes one feature column; rows are then ℓ1-normalized.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WatsError};
use crate::exec::Exec;
use crate::graph::{rescale_laplacian, sym_normalized_laplacian, Graph, SparseOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffScheme {
    /// `α_k = exp(-s k)`.
    #[default]
    ExpIndex,
    /// Chebyshev expansion coefficients of `exp(-s λ)` on `[0, λ_max]`.
    ChebyshevExact,
}

impl std::str::FromStr for CoeffScheme {
    type Err = WatsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "exp_index" | "exp" => Ok(CoeffScheme::ExpIndex),
            "chebyshev_exact" | "exact" | "chebyshev" => Ok(CoeffScheme::ChebyshevExact),
            other => Err(WatsError::InvalidParameter(format!(
                "unknown coefficient scheme '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for CoeffScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CoeffScheme::ExpIndex => "exp_index",
            CoeffScheme::ChebyshevExact => "chebyshev_exact",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum SeedSignal {
    /// `x0[i] = ln(1 + d_i)`.
    #[default]
    LogDegree,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletConfig {
    pub order_k: usize,
    pub scale_s: f64,
    pub coeff_scheme: CoeffScheme,
    pub seed_signal: SeedSignal,
    pub lambda_max: f64,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        WaveletConfig {
            order_k: 3,
            scale_s: 0.8,
            coeff_scheme: CoeffScheme::ExpIndex,
            seed_signal: SeedSignal::LogDegree,
            lambda_max: 2.0,
        }
    }
}

impl WaveletConfig {
    pub fn new(order_k: usize, scale_s: f64, coeff_scheme: CoeffScheme) -> Self {
        WaveletConfig {
            order_k,
            scale_s,
            coeff_scheme,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order_k < 1 {
            return Err(WatsError::InvalidParameter("order_k must be >= 1".into()));
        }
        if !(self.scale_s > 0.0) || !self.scale_s.is_finite() {
            return Err(WatsError::InvalidParameter(format!(
                "scale_s must be positive, got {}",
                self.scale_s
            )));
        }
        if !(self.lambda_max > 0.0) || !self.lambda_max.is_finite() {
            return Err(WatsError::InvalidParameter(format!(
                "lambda_max must be positive, got {}",
                self.lambda_max
            )));
        }
        Ok(())
    }
}

/// Row-normalized feature matrix `H`, `N × (K + 1)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFeatures {
    num_nodes: usize,
    order_k: usize,
    values: Vec<f64>,
    raw_norms: Vec<f64>,
}

impl WaveletFeatures {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if width < 2 {
            return Err(WatsError::InvalidInput(
                "feature rows need at least two columns".into(),
            ));
        }
        let mut values = Vec::with_capacity(rows.len() * width);
        let mut raw_norms = Vec::with_capacity(rows.len());
        for r in rows {
            if r.len() != width {
                return Err(WatsError::DimensionMismatch {
                    expected: width,
                    actual: r.len(),
                });
            }
            values.extend_from_slice(r);
            raw_norms.push(r.iter().map(|v| v.abs()).sum());
        }
        Ok(WaveletFeatures {
            num_nodes: rows.len(),
            order_k: width - 1,
            values,
            raw_norms,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn order_k(&self) -> usize {
        self.order_k
    }

    /// Number of feature columns, `K + 1`.
    pub fn width(&self) -> usize {
        self.order_k + 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// ℓ1 norms of the rows before normalization.
    pub fn raw_norms(&self) -> &[f64] {
        &self.raw_norms
    }

    /// CSV with header `node,h0,...,hK`; values carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("node".to_string())
            .chain((0..self.width()).map(|k| format!("h{k}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.num_nodes {
            line.clear();
            line.push_str(&i.to_string());
            for v in self.row(i) {
                line.push(',');
                line.push_str(&format!("{v:.16e}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Inverse of [`WaveletFeatures::write_csv`]. Raw norms are not stored in
    /// the file, so the loaded norms are the ℓ1 norms of the loaded rows
    /// (1 or 0).
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let width = match lines.next() {
            Some((_, Ok(h))) => {
                let cols: Vec<&str> = h.trim().split(',').collect();
                if cols.first() != Some(&"node") || cols.len() < 3 {
                    return Err(WatsError::Parse {
                        line: 1,
                        message: "expected header 'node,h0,...,hK'".into(),
                    });
                }
                cols.len() - 1
            }
            Some((_, Err(e))) => {
                return Err(WatsError::Parse {
                    line: 1,
                    message: e.to_string(),
                })
            }
            None => {
                return Err(WatsError::Parse {
                    line: 1,
                    message: "empty feature file".into(),
                })
            }
        };
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.map_err(|e| WatsError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |m: String| WatsError::Parse {
                line: line_no,
                message: m,
            };
            let mut fields = line.trim().split(',');
            let node: usize = fields
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err("invalid node index".into()))?;
            if node != rows.len() {
                return Err(parse_err(format!("expected node {}, got {node}", rows.len())));
            }
            let row = fields
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(e.to_string()))?;
            if row.len() != width {
                return Err(parse_err(format!("expected {width} values, got {}", row.len())));
            }
            rows.push(row);
        }
        let mut feats = WaveletFeatures::from_rows(&rows)?;
        if rows.is_empty() {
            feats.order_k = width - 1;
        }
        Ok(feats)
    }
}

/// Coefficient vector of length `K + 1` for the configured scheme.
pub fn heat_coefficients(cfg: &WaveletConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    Ok(coefficients_for(
        cfg.coeff_scheme,
        cfg.order_k,
        cfg.scale_s,
        cfg.lambda_max,
    ))
}

fn coefficients_for(scheme: CoeffScheme, order_k: usize, s: f64, lambda_max: f64) -> Vec<f64> {
    match scheme {
        CoeffScheme::ExpIndex => (0..=order_k).map(|k| (-s * k as f64).exp()).collect(),
        CoeffScheme::ChebyshevExact => {
            let half = 0.5 * lambda_max;
            chebyshev_expansion(order_k, |y| (-s * half * (y + 1.0)).exp())
        }
    }
}

const QUAD_TOL: f64 = 1e-12;
const QUAD_START: usize = 32;
const QUAD_MAX: usize = 1 << 16;

/// Chebyshev coefficients `c_k = (2/π) ∫ T_k(y) f(y) / sqrt(1 - y²) dy` for
/// `k = 0..=order_k`, with `c_0` already halved so that
/// `f(y) ≈ Σ c_k T_k(y)`.
///
/// Uses Gauss–Chebyshev quadrature, doubling the node count until no
/// coefficient moves by more than 1e-12.
pub fn chebyshev_expansion(order_k: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let rule = |n: usize| -> Vec<f64> {
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
                (theta, f(theta.cos()))
            })
            .collect();
        (0..=order_k)
            .map(|k| {
                let sum: f64 = samples
                    .iter()
                    .map(|&(theta, fv)| (k as f64 * theta).cos() * fv)
                    .sum();
                2.0 * sum / n as f64
            })
            .collect()
    };

    let mut n = QUAD_START.max(2 * (order_k + 1));
    let mut prev = rule(n);
    while n < QUAD_MAX {
        n *= 2;
        let next = rule(n);
        let delta = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prev = next;
        if delta <= QUAD_TOL {
            break;
        }
    }
    prev[0] *= 0.5;
    prev
}

/// The seed signal `x0` for a graph.
pub fn seed_signal(g: &Graph, cfg: &WaveletConfig) -> Result<Vec<f64>> {
    match &cfg.seed_signal {
        SeedSignal::LogDegree => Ok(g.degrees().iter().map(|&d| (d as f64).ln_1p()).collect()),
        SeedSignal::Custom(v) => {
            if v.len() != g.num_nodes() {
                return Err(WatsError::DimensionMismatch {
                    expected: g.num_nodes(),
                    actual: v.len(),
                });
            }
            Ok(v.clone())
        }
    }
}

/// Chebyshev terms `T_0 .. T_K` applied to `x0`:
/// `T_0 = x0`, `T_1 = L̂ x0`, `T_k = 2 L̂ T_{k-1} - T_{k-2}`.
pub fn chebyshev_terms(
    l_hat: &SparseOperator,
    x0: &[f64],
    order_k: usize,
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    if x0.len() != l_hat.dim() {
        return Err(WatsError::DimensionMismatch {
            expected: l_hat.dim(),
            actual: x0.len(),
        });
    }
    if order_k < 1 {
        return Err(WatsError::InvalidParameter("order_k must be >= 1".into()));
    }
    let n = x0.len();
    let mut terms = Vec::with_capacity(order_k + 1);
    terms.push(x0.to_vec());
    let mut t1 = vec![0.0; n];
    l_hat.matvec_into(x0, &mut t1, exec)?;
    terms.push(t1);
    for k in 2..=order_k {
        let mut next = vec![0.0; n];
        l_hat.matvec_into(&terms[k - 1], &mut next, exec)?;
        for (v, prev2) in next.iter_mut().zip(&terms[k - 2]) {
            *v = 2.0 * *v - prev2;
        }
        terms.push(next);
    }
    Ok(terms)
}

/// Chebyshev terms of one graph and seed signal, reusable across scales and
/// coefficient schemes.
#[derive(Debug, Clone)]
pub struct WaveletTerms {
    lambda_max: f64,
    terms: Vec<Vec<f64>>,
}

impl WaveletTerms {
    pub fn compute(g: &Graph, cfg: &WaveletConfig, exec: Exec) -> Result<Self> {
        cfg.validate()?;
        let l = sym_normalized_laplacian(g);
        let l_hat = rescale_laplacian(&l, cfg.lambda_max)?;
        let x0 = seed_signal(g, cfg)?;
        let terms = chebyshev_terms(&l_hat, &x0, cfg.order_k, exec)?;
        Ok(WaveletTerms {
            lambda_max: cfg.lambda_max,
            terms,
        })
    }

    pub fn order_k(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn terms(&self) -> &[Vec<f64>] {
        &self.terms
    }

    pub fn coefficients(&self, scheme: CoeffScheme, scale_s: f64) -> Vec<f64> {
        coefficients_for(scheme, self.order_k(), scale_s, self.lambda_max)
    }

    /// Pre-normalization matrix `S` as columns: `S[:, k] = coeff[k] * T_k`.
    pub fn raw_columns(&self, coeffs: &[f64]) -> Vec<Vec<f64>> {
        self.terms
            .iter()
            .zip(coeffs)
            .map(|(t, &c)| t.iter().map(|v| c * v).collect())
            .collect()
    }

    /// `Σ_k coeff[k] T_k`, the filtered signal. With exact Chebyshev
    /// coefficients this approximates `Ψ_s x0`.
    pub fn filtered_signal(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.terms[0].len();
        let mut out = vec![0.0; n];
        for (t, &c) in self.terms.iter().zip(coeffs) {
            for (o, v) in out.iter_mut().zip(t) {
                *o += c * v;
            }
        }
        out
    }

    pub fn features(&self, coeffs: &[f64]) -> WaveletFeatures {
        let width = self.terms.len();
        let n = self.terms[0].len();
        let mut values = vec![0.0; n * width];
        let mut raw_norms = vec![0.0; n];
        for i in 0..n {
            let row = &mut values[i * width..(i + 1) * width];
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = coeffs[k] * self.terms[k][i];
            }
            let norm: f64 = row.iter().map(|v| v.abs()).sum();
            raw_norms[i] = norm;
            if norm > 0.0 && norm.is_finite() {
                row.iter_mut().for_each(|v| *v /= norm);
            } else {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        WaveletFeatures {
            num_nodes: n,
            order_k: width - 1,
            values,
            raw_norms,
        }
    }

    pub fn features_for(&self, scheme: CoeffScheme, scale_s: f64) -> WaveletFeatures {
        self.features(&self.coefficients(scheme, scale_s))
    }
}

/// Full feature pipeline: Laplacian, rescaling, seed, recurrence,
/// coefficients, column assembly, ℓ1 row normalization.
pub fn wavelet_features(g: &Graph, cfg: &WaveletConfig) -> Result<WaveletFeatures> {
    wavelet_features_with(g, cfg, Exec::Sequential)
}

pub fn wavelet_features_with(g: &Graph, cfg: &WaveletConfig, exec: Exec) -> Result<WaveletFeatures> {
    let terms = WaveletTerms::compute(g, cfg, exec)?;
    let coeffs = heat_coefficients(cfg)?;
    Ok(terms.features(&coeffs))
}

pub const DENSE_ORACLE_LIMIT: usize = 2000;

/// `U diag(f(λ_i)) Uᵀ` from a full eigendecomposition of `L_sym`.
pub fn dense_spectral_filter(g: &Graph, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let n = g.num_nodes();
    if n > DENSE_ORACLE_LIMIT {
        return Err(WatsError::TooLarge {
            size: n,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    let l = sym_normalized_laplacian(g);
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in l.row(i) {
            dense[(i, j)] = v;
        }
    }
    let eig = SymmetricEigen::new(dense);
    let u = &eig.eigenvectors;
    let weights: Vec<f64> = eig.eigenvalues.iter().map(|&lam| f(lam)).collect();
    let mut scaled = u.clone();
    for (j, w) in weights.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*w);
    }
    Ok(scaled * u.transpose())
}

/// Exact heat-kernel wavelet operator `Ψ_s = U diag(exp(-s λ_i)) Uᵀ`.
/// Refuses graphs above 2000 nodes.
pub fn dense_wavelet_oracle(g: &Graph, s: f64) -> Result<DMatrix<f64>> {
    dense_spectral_filter(g, |lam| (-s * lam).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_edge() -> Graph {
        Graph::from_edges(2, [(0, 1)]).unwrap()
    }

    #[test]
    fn chebyshev_terms_zero_operator() {
        let zero = SparseOperator::from_rows(vec![vec![], vec![]], crate::graph::OperatorKind::General)
            .unwrap();
        let t = chebyshev_terms(&zero, &[1.0, 2.0], 2, Exec::Sequential).unwrap();
        assert_eq!(t, vec![vec![1.0, 2.0], vec![0.0, 0.0], vec![-1.0, -2.0]]);
    }

    #[test]
    fn chebyshev_terms_identity_operator() {
        let id = SparseOperator::identity(3);
        let x0 = vec![0.3, -1.5, 2.0];
        let t = chebyshev_terms(&id, &x0, 3, Exec::Sequential).unwrap();
        for term in t {
            assert_eq!(term, x0);
        }
    }

    #[test]
    fn chebyshev_terms_dimension_mismatch() {
        let id = SparseOperator::identity(3);
        assert!(matches!(
            chebyshev_terms(&id, &[1.0], 2, Exec::Sequential),
            Err(WatsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn exp_index_coefficients() {
        let c = heat_coefficients(&WaveletConfig::new(3, 1e-14, CoeffScheme::ExpIndex)).unwrap();
        for v in c {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
        let c = heat_coefficients(&WaveletConfig::new(2, 1.0, CoeffScheme::ExpIndex)).unwrap();
        assert_abs_diff_eq!(c[0], 1.0);
        assert_abs_diff_eq!(c[1], 0.36788, epsilon = 1e-5);
        assert_abs_diff_eq!(c[2], 0.13534, epsilon = 1e-5);
    }

    #[test]
    fn exp_index_monotone() {
        let a = heat_coefficients(&WaveletConfig::new(6, 0.4, CoeffScheme::ExpIndex)).unwrap();
        let b = heat_coefficients(&WaveletConfig::new(6, 0.8, CoeffScheme::ExpIndex)).unwrap();
        assert!(a.windows(2).all(|w| w[1] < w[0]));
        assert!(a.iter().zip(&b).skip(1).all(|(x, y)| y < x));
    }

    #[test]
    fn exact_coefficients_reconstruct_heat_kernel() {
        let cfg = WaveletConfig::new(20, 1.0, CoeffScheme::ChebyshevExact);
        let c = heat_coefficients(&cfg).unwrap();
        let mut worst: f64 = 0.0;
        for step in 0..=400 {
            let lam = 2.0 * step as f64 / 400.0;
            let y = lam - 1.0;
            // Direct T_k(y) via the scalar recurrence.
            let (mut t0, mut t1) = (1.0, y);
            let mut approx = c[0] * t0 + c[1] * t1;
            for ck in &c[2..] {
                let t2 = 2.0 * y * t1 - t0;
                approx += ck * t2;
                t0 = t1;
                t1 = t2;
            }
            worst = worst.max((approx - (-lam).exp()).abs());
        }
        assert!(worst <= 1e-10, "max error {worst}");
    }

    #[test]
    fn config_validation() {
        assert!(WaveletConfig::new(0, 1.0, CoeffScheme::ExpIndex).validate().is_err());
        assert!(WaveletConfig::new(2, 0.0, CoeffScheme::ExpIndex).validate().is_err());
        let cfg = WaveletConfig {
            lambda_max: -2.0,
            ..WaveletConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn log_degree_seed() {
        let g = Graph::from_edges(3, [(1, 2)]).unwrap();
        let g = Graph::from_edges(5, g.edges().chain([(2, 3), (2, 4)])).unwrap();
        // degrees [0, 1, 3, 1, 1]
        let x = seed_signal(&g, &WaveletConfig::default()).unwrap();
        assert_eq!(x[0], 0.0);
        assert_abs_diff_eq!(x[1], std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(x[2], 2.0 * std::f64::consts::LN_2, epsilon = 1e-15);

        let iso = Graph::from_edges(4, []).unwrap();
        assert!(seed_signal(&iso, &WaveletConfig::default())
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));

        let star = Graph::from_edges(5, (1..5).map(|j| (0, j))).unwrap();
        let x = seed_signal(&star, &WaveletConfig::default()).unwrap();
        assert_eq!(x, vec![5f64.ln(), 2f64.ln(), 2f64.ln(), 2f64.ln(), 2f64.ln()]);
    }

    #[test]
    fn custom_seed_length_checked() {
        let g = single_edge();
        let mut cfg = WaveletConfig {
            seed_signal: SeedSignal::Custom(vec![1.0, 2.0]),
            ..WaveletConfig::default()
        };
        assert_eq!(seed_signal(&g, &cfg).unwrap(), vec![1.0, 2.0]);
        cfg.seed_signal = SeedSignal::Custom(vec![1.0]);
        assert!(seed_signal(&g, &cfg).is_err());
    }

    #[test]
    fn isolated_graph_gives_zero_features() {
        let g = Graph::from_edges(4, []).unwrap();
        let h = wavelet_features(&g, &WaveletConfig::new(3, 1.0, CoeffScheme::ExpIndex)).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.0));
        assert!(h.raw_norms().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_edge_features_by_hand() {
        let g = single_edge();
        let h = wavelet_features(&g, &WaveletConfig::new(1, 1.0, CoeffScheme::ExpIndex)).unwrap();
        let ln2 = 2f64.ln();
        let raw = [ln2, -(-1f64).exp() * ln2];
        let norm = raw[0].abs() + raw[1].abs();
        for i in 0..2 {
            assert_abs_diff_eq!(h.row(i)[0], raw[0] / norm, epsilon = 1e-15);
            assert_abs_diff_eq!(h.row(i)[1], raw[1] / norm, epsilon = 1e-15);
            assert_abs_diff_eq!(h.row(i).iter().map(|v| v.abs()).sum::<f64>(), 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(h.raw_norms()[i], norm, epsilon = 1e-15);
        }
    }

    #[test]
    fn dense_oracle_examples() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let psi = dense_wavelet_oracle(&g, 0.0).unwrap();
        assert_abs_diff_eq!(psi, DMatrix::identity(3, 3), epsilon = 1e-12);

        let one = Graph::from_edges(1, []).unwrap();
        let psi = dense_wavelet_oracle(&one, 0.7).unwrap();
        assert_abs_diff_eq!(psi[(0, 0)], (-0.7f64).exp(), epsilon = 1e-14);

        let psi = dense_wavelet_oracle(&single_edge(), 1.0).unwrap();
        let e2 = (-2f64).exp();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0 + e2, 1.0 - e2, 1.0 - e2, 1.0 + e2]) * 0.5;
        assert_abs_diff_eq!(psi, expect, epsilon = 1e-12);
    }

    #[test]
    fn dense_oracle_size_guard() {
        let g = Graph::from_edges(DENSE_ORACLE_LIMIT + 1, []).unwrap();
        assert!(matches!(
            dense_wavelet_oracle(&g, 1.0),
            Err(WatsError::TooLarge { .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 0), (4, 1)]).unwrap();
        let h = wavelet_features(&g, &WaveletConfig::new(3, 0.8, CoeffScheme::ChebyshevExact)).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("node,h0,h1,h2,h3\n"));
        let back = WaveletFeatures::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), h.values());
    }
}
