//! Synthetic graphs with planted, degree-dependent miscalibration.
//!
//! Clean logits are `margin * onehot(y) + N(0, σ²)` per class with
//! `σ = margin / 4` unless overridden. The Bayes posterior is
//! `softmax(margin z / σ²)`, so with the default noise the clean logits are
//! calibrated exactly when `margin = 16` (the default), and for any margin
//! when `σ = √margin`. The
//! `DegreeUnderconfidence` profile divides each node's logits by
//! `t(d) = 1 + strength / (1 + d)`, making sparse nodes underconfident while
//! leaving the argmax untouched.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibrator::Split;
use crate::error::{Result, WatsError};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphModel {
    /// Stochastic block model with one block per class. Empty `block_sizes`
    /// means near-equal contiguous blocks.
    Sbm {
        #[serde(default)]
        block_sizes: Vec<usize>,
        p_in: f64,
        p_out: f64,
    },
    /// Preferential attachment, `attach` edges per new node.
    BarabasiAlbert { attach: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiscalProfile {
    None,
    #[default]
    DegreeUnderconfidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub model: GraphModel,
    pub num_classes: usize,
    pub logit_margin: f64,
    pub miscal_profile: MiscalProfile,
    pub profile_strength: f64,
    pub seed: u64,
    /// Logit noise standard deviation; `margin / 4` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_nodes: 2000,
            model: GraphModel::Sbm {
                block_sizes: Vec::new(),
                p_in: 0.004,
                p_out: 0.0002,
            },
            num_classes: 7,
            logit_margin: 16.0,
            miscal_profile: MiscalProfile::DegreeUnderconfidence,
            profile_strength: 3.0,
            seed: 0,
            noise_sd: None,
        }
    }
}

impl SyntheticSpec {
    pub fn noise_sd(&self) -> f64 {
        self.noise_sd.unwrap_or(self.logit_margin / 4.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(WatsError::InvalidParameter("num_classes must be >= 2".into()));
        }
        if self.num_nodes < self.num_classes {
            return Err(WatsError::InvalidParameter(
                "num_nodes must be at least num_classes".into(),
            ));
        }
        if !(self.logit_margin > 0.0) || !self.logit_margin.is_finite() {
            return Err(WatsError::InvalidParameter("logit_margin must be > 0".into()));
        }
        if !(self.noise_sd() > 0.0) || !self.noise_sd().is_finite() {
            return Err(WatsError::InvalidParameter("noise_sd must be > 0".into()));
        }
        if !(self.profile_strength >= 0.0) || !self.profile_strength.is_finite() {
            return Err(WatsError::InvalidParameter(
                "profile_strength must be >= 0".into(),
            ));
        }
        match &self.model {
            GraphModel::Sbm {
                block_sizes,
                p_in,
                p_out,
            } => {
                for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
                    if !(0.0..=1.0).contains(p) {
                        return Err(WatsError::InvalidParameter(format!(
                            "{name} = {p} is not a probability"
                        )));
                    }
                }
                if !block_sizes.is_empty()
                    && (block_sizes.len() != self.num_classes
                        || block_sizes.iter().sum::<usize>() != self.num_nodes)
                {
                    return Err(WatsError::InvalidParameter(
                        "block_sizes must have one entry per class and sum to num_nodes".into(),
                    ));
                }
            }
            GraphModel::BarabasiAlbert { attach } => {
                if *attach == 0 || *attach >= self.num_nodes {
                    return Err(WatsError::InvalidParameter(
                        "attach must be in [1, num_nodes)".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub graph: Graph,
    pub labels: Vec<usize>,
    pub clean_logits: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
    /// `t(d_i)` used to distort node `i` (all ones without a profile).
    pub planted_temperatures: Vec<f64>,
    pub split: Split,
}

/// Planted temperature for a node of degree `d`.
pub fn planted_temperature(profile: MiscalProfile, strength: f64, d: usize) -> f64 {
    match profile {
        MiscalProfile::None => 1.0,
        MiscalProfile::DegreeUnderconfidence => 1.0 + strength / (1.0 + d as f64),
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_nodes;

    let (graph, labels) = match &spec.model {
        GraphModel::Sbm {
            block_sizes,
            p_in,
            p_out,
        } => {
            let sizes = if block_sizes.is_empty() {
                equal_blocks(n, spec.num_classes)
            } else {
                block_sizes.clone()
            };
            let labels: Vec<usize> = sizes
                .iter()
                .enumerate()
                .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
                .collect();
            let graph = sbm(&sizes, *p_in, *p_out, &mut rng)?;
            (graph, labels)
        }
        GraphModel::BarabasiAlbert { attach } => {
            let graph = barabasi_albert(n, *attach, &mut rng)?;
            let labels = (0..n).map(|_| rng.random_range(0..spec.num_classes)).collect();
            (graph, labels)
        }
    };

    let noise = Normal::new(0.0, spec.noise_sd())
        .map_err(|e| WatsError::InvalidParameter(e.to_string()))?;
    let clean_logits: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            (0..spec.num_classes)
                .map(|c| {
                    let base = if c == y { spec.logit_margin } else { 0.0 };
                    base + noise.sample(&mut rng)
                })
                .collect()
        })
        .collect();

    let planted_temperatures: Vec<f64> = graph
        .degrees()
        .iter()
        .map(|&d| planted_temperature(spec.miscal_profile, spec.profile_strength, d))
        .collect();
    let logits = clean_logits
        .iter()
        .zip(&planted_temperatures)
        .map(|(row, &t)| row.iter().map(|v| v / t).collect())
        .collect();

    let split = random_split(n, &mut rng);

    Ok(SyntheticInstance {
        graph,
        labels,
        clean_logits,
        logits,
        planted_temperatures,
        split,
    })
}

fn equal_blocks(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|b| n / k + usize::from(b < n % k)).collect()
}

/// Seeded shuffle into `⌊0.2N⌋` train, `⌊0.1N⌋` val and the rest test, each
/// sorted ascending.
pub fn random_split(n: usize, rng: &mut impl Rng) -> Split {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = n / 5;
    let n_val = n / 10;
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Split { train, val, test }
}

/// SBM over contiguous blocks, sampled with geometric skips so the cost is
/// proportional to the number of edges plus `N × blocks`.
pub fn sbm(block_sizes: &[usize], p_in: f64, p_out: f64, rng: &mut impl Rng) -> Result<Graph> {
    let n: usize = block_sizes.iter().sum();
    let mut starts = Vec::with_capacity(block_sizes.len() + 1);
    starts.push(0);
    for s in block_sizes {
        starts.push(starts.last().unwrap() + s);
    }
    let block_of = |i: usize| starts.partition_point(|&s| s <= i) - 1;

    let mut edges = Vec::new();
    for i in 0..n {
        let bi = block_of(i);
        for b in 0..block_sizes.len() {
            let p = if b == bi { p_in } else { p_out };
            let lo = starts[b].max(i + 1);
            let hi = starts[b + 1];
            if lo >= hi || p <= 0.0 {
                continue;
            }
            if p >= 1.0 {
                edges.extend((lo..hi).map(|j| (i, j)));
                continue;
            }
            let log_q = (1.0 - p).ln();
            let mut j = lo;
            loop {
                let u: f64 = rng.random();
                // Number of failures before the next success.
                let skip = ((1.0 - u).ln() / log_q).floor();
                if !skip.is_finite() || skip >= (hi - j) as f64 {
                    break;
                }
                j += skip as usize;
                edges.push((i, j));
                j += 1;
                if j >= hi {
                    break;
                }
            }
        }
    }
    Graph::from_edges(n, edges)
}

/// Preferential attachment starting from a clique on `attach + 1` nodes.
pub fn barabasi_albert(n: usize, attach: usize, rng: &mut impl Rng) -> Result<Graph> {
    if attach == 0 || attach >= n {
        return Err(WatsError::InvalidParameter(
            "attach must be in [1, num_nodes)".into(),
        ));
    }
    let seed_nodes = attach + 1;
    let mut edges = Vec::with_capacity(n * attach);
    // Every endpoint appears once per incident edge, so uniform draws from
    // this list are degree-proportional.
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * n * attach);
    for i in 0..seed_nodes {
        for j in i + 1..seed_nodes {
            edges.push((i, j));
            endpoints.push(i);
            endpoints.push(j);
        }
    }
    let mut targets: Vec<usize> = Vec::with_capacity(attach);
    for v in seed_nodes..n {
        targets.clear();
        while targets.len() < attach {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((t, v));
            endpoints.push(t);
            endpoints.push(v);
        }
    }
    Graph::from_edges(n, edges)
}
