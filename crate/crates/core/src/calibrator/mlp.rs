//! Node-wise temperature predictor: a two-layer ReLU MLP with a softplus
//! output, trained on validation cross-entropy of the rescaled logits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::LogitSet;
use crate::error::{Result, WatsError};
use crate::metrics::{ece, log_sum_exp, predict};
use crate::wavelet::WaveletFeatures;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights of the temperature MLP. `w1` is `hidden × input`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub seed: u64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl CalibratorParams {
    /// Uniform `±1/sqrt(fan_in)` initialization for every layer.
    pub fn init(input_dim: usize, hidden_dim: usize, dropout: f64, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(input_dim, hidden_dim, dropout, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = 1.0 / (input_dim as f64).sqrt();
        let a2 = 1.0 / (hidden_dim as f64).sqrt();
        p.w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        p.b1.iter_mut().for_each(|b| *b = rng.random_range(-a1..a1));
        p.w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        p.b2 = rng.random_range(-a2..a2);
        Ok(p)
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, dropout: f64, seed: u64) -> Result<Self> {
        if hidden_dim == 0 || input_dim == 0 {
            return Err(WatsError::InvalidParameter(
                "hidden_dim and input_dim must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(WatsError::InvalidParameter(format!(
                "dropout must be in [0, 1), got {dropout}"
            )));
        }
        Ok(CalibratorParams {
            input_dim,
            hidden_dim,
            dropout,
            seed,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim],
            b2: 0.0,
        })
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Flatten as `[w1, b1, w2, b2]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let (w1, rest) = flat.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, rest) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1.len() != self.hidden_dim * self.input_dim
            || self.b1.len() != self.hidden_dim
            || self.w2.len() != self.hidden_dim
        {
            return Err(WatsError::InvalidInput(
                "parameter shapes disagree with hidden_dim / input_dim".into(),
            ));
        }
        if self.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(WatsError::InvalidInput("non-finite calibrator weight".into()));
        }
        Ok(())
    }

    fn check_features(&self, h: &WaveletFeatures) -> Result<()> {
        if h.width() != self.input_dim {
            return Err(WatsError::DimensionMismatch {
                expected: self.input_dim,
                actual: h.width(),
            });
        }
        Ok(())
    }

    /// Hidden pre-activations and the output pre-softplus value for one row.
    /// `mask` scales each hidden unit after ReLU (dropout with rescaling).
    fn forward_row(&self, x: &[f64], mask: Option<&[f64]>, hidden: &mut [f64]) -> f64 {
        let d = self.input_dim;
        for (j, a) in hidden.iter_mut().enumerate() {
            let w = &self.w1[j * d..(j + 1) * d];
            *a = self.b1[j] + w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        let mut out = self.b2;
        for (j, &a) in hidden.iter().enumerate() {
            let m = mask.map_or(1.0, |m| m[j]);
            out += self.w2[j] * a.max(0.0) * m;
        }
        out
    }
}

/// Dropout masks, one per node row, already scaled by `1 / (1 - rate)`.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    hidden_dim: usize,
    values: Vec<f64>,
}

impl DropoutMask {
    pub fn sample(num_rows: usize, hidden_dim: usize, rate: f64, rng: &mut impl Rng) -> Self {
        let keep = 1.0 - rate;
        let values = (0..num_rows * hidden_dim)
            .map(|_| {
                if rate > 0.0 && rng.random::<f64>() < rate {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect();
        DropoutMask { hidden_dim, values }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.hidden_dim..(r + 1) * self.hidden_dim]
    }
}

/// Per-node temperatures `τ_i = softplus(MLP(h_i))`.
///
/// In training mode dropout is applied to the hidden activations using a
/// generator seeded from `params.seed`.
pub fn temperatures(
    params: &CalibratorParams,
    h: &WaveletFeatures,
    training_mode: bool,
) -> Result<Vec<f64>> {
    params.check_features(h)?;
    let n = h.num_nodes();
    let mask = (training_mode && params.dropout > 0.0).then(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        DropoutMask::sample(n, params.hidden_dim, params.dropout, &mut rng)
    });
    let mut hidden = vec![0.0; params.hidden_dim];
    Ok((0..n)
        .map(|i| {
            let o = params.forward_row(h.row(i), mask.as_ref().map(|m| m.row(i)), &mut hidden);
            softplus(o)
        })
        .collect())
}

/// Cross-entropy of `softmax(z / τ)` at label `y`, and its derivative in `τ`.
fn ce_and_dtau(z: &[f64], y: usize, tau: f64) -> (f64, f64) {
    let u: Vec<f64> = z.iter().map(|v| v / tau).collect();
    let lse = log_sum_exp(&u);
    let ce = lse - u[y];
    // dCE/dτ = -(E_p[z] - z_y) / τ²
    let expected: f64 = u.iter().zip(z).map(|(ui, zi)| (ui - lse).exp() * zi).sum();
    (ce, -(expected - z[y]) / (tau * tau))
}

/// Objective on `nodes`: mean CE of rescaled logits plus
/// `weight_decay * ||θ||²`, with its gradient in flattened parameter order.
pub fn loss_and_grad(
    params: &CalibratorParams,
    h: &WaveletFeatures,
    data: &LogitSet,
    nodes: &[usize],
    weight_decay: f64,
    mask: Option<&DropoutMask>,
) -> Result<(f64, Vec<f64>)> {
    params.check_features(h)?;
    if nodes.is_empty() {
        return Err(WatsError::MissingValidation);
    }
    let d = params.input_dim;
    let hd = params.hidden_dim;
    let mut grad = vec![0.0; params.num_params()];
    let (g_w1, rest) = grad.split_at_mut(hd * d);
    let (g_b1, rest) = rest.split_at_mut(hd);
    let (g_w2, g_b2) = rest.split_at_mut(hd);

    let scale = 1.0 / nodes.len() as f64;
    let mut hidden = vec![0.0; hd];
    let mut loss = 0.0;
    for (r, &i) in nodes.iter().enumerate() {
        let x = h.row(i);
        let m = mask.map(|m| m.row(r));
        let o = params.forward_row(x, m, &mut hidden);
        let tau = softplus(o);
        let (ce, dtau) = ce_and_dtau(&data.logits[i], data.labels[i], tau);
        loss += ce * scale;
        let d_o = dtau * sigmoid(o) * scale;
        g_b2[0] += d_o;
        for j in 0..hd {
            let mj = m.map_or(1.0, |m| m[j]);
            let a = hidden[j];
            g_w2[j] += d_o * a.max(0.0) * mj;
            if a > 0.0 {
                let d_a = d_o * params.w2[j] * mj;
                g_b1[j] += d_a;
                for (g, xk) in g_w1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += d_a * xk;
                }
            }
        }
    }
    if weight_decay > 0.0 {
        let flat = params.to_flat();
        loss += weight_decay * flat.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in grad.iter_mut().zip(&flat) {
            *g += 2.0 * weight_decay * v;
        }
    }
    Ok((loss, grad))
}

/// Mean validation NLL with dropout disabled.
pub fn eval_nll(
    params: &CalibratorParams,
    h: &WaveletFeatures,
    data: &LogitSet,
    nodes: &[usize],
) -> Result<f64> {
    let (loss, _) = loss_and_grad(params, h, data, nodes, 0.0, None)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
    PlainGd,
}

/// Metric used to pick the best epoch snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    Nll,
    Ece,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub weight_decay: f64,
    pub patience: usize,
    pub optimizer: Optimizer,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub selection: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            max_epochs: 1000,
            weight_decay: 0.0,
            patience: 100,
            optimizer: Optimizer::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            selection: Selection::Nll,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(WatsError::InvalidParameter("learning_rate must be > 0".into()));
        }
        if self.max_epochs < 1 {
            return Err(WatsError::InvalidParameter("max_epochs must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(WatsError::InvalidParameter("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: CalibratorParams,
    /// Validation NLL of the returned snapshot.
    pub best_val_nll: f64,
    /// Validation NLL before any update.
    pub initial_val_nll: f64,
    pub epochs_run: usize,
    /// Best-so-far validation NLL after each epoch.
    pub best_history: Vec<f64>,
}

/// Full-batch training of the temperature MLP on the validation split.
///
/// Returns the snapshot with the best selection metric seen, stopping after
/// `patience` epochs without improvement. Deterministic for a given
/// `params0.seed`.
pub fn train_wats(
    h: &WaveletFeatures,
    data: &LogitSet,
    params0: &CalibratorParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    params0.validate()?;
    params0.check_features(h)?;
    if h.num_nodes() != data.num_nodes() {
        return Err(WatsError::DimensionMismatch {
            expected: data.num_nodes(),
            actual: h.num_nodes(),
        });
    }
    let val = data.require_val()?.to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(params0.seed ^ 0x5741_5453);
    let mut params = params0.clone();
    let mut flat = params.to_flat();
    let mut m = vec![0.0; flat.len()];
    let mut v = vec![0.0; flat.len()];

    let selection_score = |p: &CalibratorParams| -> Result<(f64, f64)> {
        let nll = eval_nll(p, h, data, &val)?;
        let score = match cfg.selection {
            Selection::Nll => nll,
            Selection::Ece => val_ece(p, h, data, &val)?,
        };
        Ok((score, nll))
    };

    let (mut best_score, initial_nll) = selection_score(&params)?;
    if !initial_nll.is_finite() {
        return Err(WatsError::NonFiniteLoss {
            epoch: 0,
            param_norm: params.norm(),
        });
    }
    let mut best_nll = initial_nll;
    let mut best = params.clone();
    let mut history = Vec::new();
    let mut since_best = 0;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let mask = (params.dropout > 0.0)
            .then(|| DropoutMask::sample(val.len(), params.hidden_dim, params.dropout, &mut rng));
        let (loss, grad) = loss_and_grad(&params, h, data, &val, cfg.weight_decay, mask.as_ref())?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(WatsError::NonFiniteLoss {
                epoch,
                param_norm: params.norm(),
            });
        }
        match cfg.optimizer {
            Optimizer::Adam => {
                let t = epoch as i32;
                let bc1 = 1.0 - cfg.adam_beta1.powi(t);
                let bc2 = 1.0 - cfg.adam_beta2.powi(t);
                for k in 0..flat.len() {
                    m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * grad[k];
                    v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * grad[k] * grad[k];
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    flat[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
                }
            }
            Optimizer::PlainGd => {
                for (w, g) in flat.iter_mut().zip(&grad) {
                    *w -= cfg.learning_rate * g;
                }
            }
        }
        params.set_flat(&flat);

        let (score, nll) = selection_score(&params)?;
        if !nll.is_finite() {
            return Err(WatsError::NonFiniteLoss {
                epoch,
                param_norm: params.norm(),
            });
        }
        if score < best_score {
            best_score = score;
            best_nll = nll;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.push(best_nll);
        if since_best >= cfg.patience {
            break;
        }
    }

    Ok(TrainOutcome {
        params: best,
        best_val_nll: best_nll,
        initial_val_nll: initial_nll,
        epochs_run,
        best_history: history,
    })
}

fn val_ece(
    params: &CalibratorParams,
    h: &WaveletFeatures,
    data: &LogitSet,
    nodes: &[usize],
) -> Result<f64> {
    let tau = temperatures(params, h, false)?;
    let scaled: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&i| data.logits[i].iter().map(|v| v / tau[i]).collect())
        .collect();
    let (pred, conf) = predict(&scaled)?;
    let correct: Vec<bool> = nodes
        .iter()
        .zip(&pred)
        .map(|(&i, &p)| data.labels[i] == p)
        .collect();
    Ok(ece(&conf, &correct, 10)?.0)
}
