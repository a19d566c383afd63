//! Sparse undirected graphs and the Laplacian operators built from them.
//!
//! Graphs are stored in compressed-row form with sorted, deduplicated
//! neighbor lists. Self-loops are dropped on construction and every edge is
//! stored in both directions.

use std::io::BufRead;

use crate::error::{Result, WatsError};
use crate::exec::Exec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    degrees: Vec<usize>,
}

impl Graph {
    /// Build a graph from an undirected edge list. Edges may appear in either
    /// or both directions; duplicates and self-loops are discarded.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(WatsError::InvalidInput(format!(
                    "edge ({a}, {b}) out of range for {num_nodes} nodes"
                )));
            }
            if a != b {
                pairs.push((a.min(b), a.max(b)));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut degrees = vec![0usize; num_nodes];
        for &(a, b) in &pairs {
            degrees[a] += 1;
            degrees[b] += 1;
        }
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        row_offsets.push(0);
        for &d in &degrees {
            row_offsets.push(row_offsets.last().unwrap() + d);
        }
        let mut cursor = row_offsets[..num_nodes].to_vec();
        let mut col_indices = vec![0usize; 2 * pairs.len()];
        // Two passes over the sorted pairs keep each row ascending: first all
        // lower neighbors (a < row), then all upper neighbors (b > row).
        for &(a, b) in &pairs {
            col_indices[cursor[b]] = a;
            cursor[b] += 1;
        }
        for &(a, b) in &pairs {
            col_indices[cursor[a]] = b;
            cursor[a] += 1;
        }

        Ok(Graph {
            num_nodes,
            row_offsets,
            col_indices,
            degrees,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// Each stored undirected edge once, as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .copied()
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Write the graph as a tab-separated edge list, one undirected edge per line.
    pub fn write_edge_list<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# nodes: {}", self.num_nodes)?;
        for (i, j) in self.edges() {
            writeln!(out, "{i}\t{j}")?;
        }
        Ok(())
    }
}

/// Parse a tab- or whitespace-separated edge list with 0-based node ids.
///
/// Lines starting with `#` and blank lines are skipped. The node count is
/// `1 + max id` unless `num_nodes` is given, in which case ids at or beyond it
/// are rejected. A `# nodes: N` header (as written by
/// [`Graph::write_edge_list`]) is honored when no explicit count is passed,
/// so trailing isolated nodes survive a round trip.
pub fn load_edge_list<R: BufRead>(reader: R, num_nodes: Option<usize>) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut max_id: Option<usize> = None;
    let mut header_nodes: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| WatsError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(n) = comment.trim().strip_prefix("nodes:") {
                header_nodes = n.trim().parse().ok();
            }
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let mut next_id = |what: &str| -> Result<usize> {
            let tok = tokens.next().ok_or_else(|| WatsError::Parse {
                line: line_no,
                message: format!("missing {what} node id"),
            })?;
            if tok.starts_with('-') {
                return Err(WatsError::Parse {
                    line: line_no,
                    message: format!("negative node id '{tok}'"),
                });
            }
            tok.parse::<usize>().map_err(|_| WatsError::Parse {
                line: line_no,
                message: format!("invalid node id '{tok}'"),
            })
        };
        let src = next_id("source")?;
        let dst = next_id("destination")?;
        if tokens.next().is_some() {
            return Err(WatsError::Parse {
                line: line_no,
                message: "expected exactly two node ids".into(),
            });
        }
        if let Some(n) = num_nodes {
            if src >= n || dst >= n {
                return Err(WatsError::Parse {
                    line: line_no,
                    message: format!("node id exceeds declared node count {n}"),
                });
            }
        }
        max_id = Some(max_id.map_or(src.max(dst), |m| m.max(src).max(dst)));
        edges.push((src, dst));
    }

    let inferred = max_id.map_or(0, |m| m + 1);
    let n = match (num_nodes, header_nodes) {
        (Some(n), _) => n,
        (None, Some(h)) => h.max(inferred),
        (None, None) => inferred,
    };
    Graph::from_edges(n, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    SymNormalizedLaplacian,
    RescaledLaplacian,
    General,
}

/// Sparse symmetric matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    kind: OperatorKind,
}

impl SparseOperator {
    /// Build from per-row `(col, value)` lists. Columns within a row must be
    /// strictly increasing.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, kind: OperatorKind) -> Result<Self> {
        let dim = rows.len();
        let mut row_offsets = Vec::with_capacity(dim + 1);
        row_offsets.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (i, row) in rows.into_iter().enumerate() {
            let mut prev: Option<usize> = None;
            for (c, v) in row {
                if c >= dim || prev.is_some_and(|p| p >= c) {
                    return Err(WatsError::InvalidInput(format!(
                        "row {i}: columns must be in range and strictly increasing"
                    )));
                }
                prev = Some(c);
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseOperator {
            dim,
            row_offsets,
            col_indices,
            values,
            kind,
        })
    }

    pub fn identity(dim: usize) -> Self {
        SparseOperator {
            dim,
            row_offsets: (0..=dim).collect(),
            col_indices: (0..dim).collect(),
            values: vec![1.0; dim],
            kind: OperatorKind::General,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Row-major dense copy. Intended for small test-scale operators.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.dim]; self.dim];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        dense
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        let mut acc = 0.0;
        for k in lo..hi {
            acc += self.values[k] * x[self.col_indices[k]];
        }
        acc
    }

    /// `out = self * x`.
    ///
    /// Each output entry is accumulated in the same order regardless of
    /// `exec`, so parallel and sequential results are bit-identical.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64], exec: Exec) -> Result<()> {
        if x.len() != self.dim {
            return Err(WatsError::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        if out.len() != self.dim {
            return Err(WatsError::DimensionMismatch {
                expected: self.dim,
                actual: out.len(),
            });
        }
        match exec {
            Exec::Sequential => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.row_dot(i, x);
                }
            }
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_iter_mut()
                    .with_min_len(4096)
                    .enumerate()
                    .for_each(|(i, o)| *o = self.row_dot(i, x));
            }
            #[cfg(not(feature = "parallel"))]
            Exec::Parallel => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.row_dot(i, x);
                }
            }
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.matvec_into(x, &mut out, Exec::Sequential)?;
        Ok(out)
    }

    /// Largest absolute deviation between `A[i][j]` and `A[j][i]`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// `L_sym = I - D^{-1/2} A D^{-1/2}`.
///
/// Isolated nodes keep a unit diagonal and no off-diagonal entries.
pub fn sym_normalized_laplacian(g: &Graph) -> SparseOperator {
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    let n = g.num_nodes();
    let mut row_offsets = Vec::with_capacity(n + 1);
    row_offsets.push(0);
    let nnz = g.col_indices().len() + n;
    let mut col_indices = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    for i in 0..n {
        let mut diag_done = false;
        for &j in g.neighbors(i) {
            if !diag_done && j > i {
                col_indices.push(i);
                values.push(1.0);
                diag_done = true;
            }
            col_indices.push(j);
            values.push(-inv_sqrt[i] * inv_sqrt[j]);
        }
        if !diag_done {
            col_indices.push(i);
            values.push(1.0);
        }
        row_offsets.push(col_indices.len());
    }
    SparseOperator {
        dim: n,
        row_offsets,
        col_indices,
        values,
        kind: OperatorKind::SymNormalizedLaplacian,
    }
}

/// `L_hat = (2 / lambda_max) L - I`, mapping a spectrum in `[0, lambda_max]`
/// onto `[-1, 1]`.
pub fn rescale_laplacian(l: &SparseOperator, lambda_max: f64) -> Result<SparseOperator> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(WatsError::InvalidParameter(format!(
            "lambda_max must be positive and finite, got {lambda_max}"
        )));
    }
    let scale = 2.0 / lambda_max;
    let mut row_offsets = Vec::with_capacity(l.dim + 1);
    row_offsets.push(0);
    let mut col_indices = Vec::with_capacity(l.nnz() + l.dim);
    let mut values = Vec::with_capacity(l.nnz() + l.dim);
    for i in 0..l.dim {
        let mut diag_done = false;
        for (j, v) in l.row(i) {
            if !diag_done && j > i {
                col_indices.push(i);
                values.push(-1.0);
                diag_done = true;
            }
            if j == i {
                col_indices.push(i);
                values.push(scale * v - 1.0);
                diag_done = true;
            } else {
                col_indices.push(j);
                values.push(scale * v);
            }
        }
        if !diag_done {
            col_indices.push(i);
            values.push(-1.0);
        }
        row_offsets.push(col_indices.len());
    }
    let kind = match l.kind {
        OperatorKind::SymNormalizedLaplacian => OperatorKind::RescaledLaplacian,
        _ => OperatorKind::General,
    };
    Ok(SparseOperator {
        dim: l.dim,
        row_offsets,
        col_indices,
        values,
        kind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBound {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

const POWER_TOL: f64 = 1e-6;
const POWER_MAX_ITERS: usize = 1000;
const POWER_SAFETY: f64 = 1.01;
const LSYM_BOUND_CAP: f64 = 2.0 * POWER_SAFETY;

/// Upper bound on the largest-magnitude eigenvalue of a symmetric operator by
/// power iteration on the Rayleigh quotient.
///
/// For `L_sym` the result is capped at 2.02, and falls back to 2.0 (with
/// `converged = false`) if the iteration stalls.
pub fn spectral_radius_upper_bound(l: &SparseOperator) -> SpectralBound {
    let n = l.dim;
    let is_lsym = l.kind == OperatorKind::SymNormalizedLaplacian;
    if n == 0 {
        return SpectralBound {
            value: 0.0,
            converged: true,
            iterations: 0,
        };
    }
    // Deterministic start vector with components along every eigenvector
    // in practice (non-constant, no sign symmetry).
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0)
        .collect();
    normalize(&mut x);
    let mut y = vec![0.0; n];
    let mut prev = f64::NAN;

    for it in 1..=POWER_MAX_ITERS {
        l.matvec_into(&x, &mut y, Exec::Sequential)
            .expect("dimensions match by construction");
        let rq: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return SpectralBound {
                value: 0.0,
                converged: true,
                iterations: it,
            };
        }
        // ||Ax|| >= |rq| and both converge to |lambda|; ||Ax|| is the
        // tighter upper-side estimate for the dominant eigenvalue.
        let est = norm.max(rq.abs());
        if prev.is_finite() && (est - prev).abs() <= POWER_TOL * est.abs() {
            let mut value = est * POWER_SAFETY;
            if is_lsym {
                value = value.min(LSYM_BOUND_CAP);
            }
            return SpectralBound {
                value,
                converged: true,
                iterations: it,
            };
        }
        prev = est;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
    }
    let value = if is_lsym {
        2.0
    } else {
        prev.abs() * POWER_SAFETY
    };
    SpectralBound {
        value,
        converged: false,
        iterations: POWER_MAX_ITERS,
    }
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}
