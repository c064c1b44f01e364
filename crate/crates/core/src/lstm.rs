//! Multi-layer LSTM forecaster trained by backpropagation through time.
//!
//! Parameters live in one flat vector. For each layer `l` with input width
//! `in_l` (`input_dim` for the first layer, `hidden_size` above it):
//!
//! * `W_l`: `4h x (in_l + h)` row-major. Row blocks are the input, forget,
//!   cell and output gates in that order; columns are `[x, h_prev]`.
//! * `b_l`: `4h`, same gate order.
//!
//! The linear head follows the last layer: `W_y` (`d x h`, row-major) then
//! `b_y` (`d`). Checkpoints store the config and this vector verbatim.

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LstmConfig {
    pub input_dim: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub seed: u64,
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_size == 0 || self.num_layers == 0 {
            return Err(Error::InvalidArgument(format!("LSTM sizes must be >= 1: {self:?}")));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden_size
        }
    }

    fn layer_len(&self, layer: usize) -> usize {
        let h = self.hidden_size;
        4 * h * (self.layer_input(layer) + h) + 4 * h
    }

    pub fn param_count(&self) -> usize {
        let layers: usize = (0..self.num_layers).map(|l| self.layer_len(l)).sum();
        layers + self.input_dim * self.hidden_size + self.input_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub gradient_clip_norm: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 500,
            gradient_clip_norm: 1.0,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.epochs == 0 || !(self.gradient_clip_norm > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Hidden and cell vectors per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub layers: Vec<LayerState>,
}

impl LstmState {
    pub fn zeros(cfg: &LstmConfig) -> Self {
        Self {
            layers: (0..cfg.num_layers)
                .map(|_| LayerState {
                    h: vec![0.0; cfg.hidden_size],
                    c: vec![0.0; cfg.hidden_size],
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    config: LstmConfig,
    #[serde(rename = "parameters")]
    params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-layer activations kept for the backward pass.
struct LayerCache {
    concat: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmModel {
    /// Seeded uniform init on `[-1/sqrt(h), 1/sqrt(h)]` with forget biases at 1.
    pub fn init(cfg: LstmConfig) -> Result<Self> {
        cfg.validate()?;
        let bound = 1.0 / (cfg.hidden_size as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut rng = seed::rng(cfg.seed);
        let params: Vec<f64> = (0..cfg.param_count()).map(|_| dist.sample(&mut rng)).collect();
        let mut model = Self { config: cfg, params };
        let h = cfg.hidden_size;
        for l in 0..cfg.num_layers {
            let b = model.bias_offset(l);
            model.params[b + h..b + 2 * h].fill(1.0);
        }
        Ok(model)
    }

    pub fn from_parameters(config: LstmConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if params.len() != config.param_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                config.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &LstmConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layer_offset(&self, layer: usize) -> usize {
        (0..layer).map(|l| self.config.layer_len(l)).sum()
    }

    fn bias_offset(&self, layer: usize) -> usize {
        let h = self.config.hidden_size;
        self.layer_offset(layer) + 4 * h * (self.config.layer_input(layer) + h)
    }

    fn head_offset(&self) -> usize {
        self.layer_offset(self.config.num_layers)
    }

    /// Zeroes the output head.
    pub fn zero_head(&mut self) {
        let off = self.head_offset();
        self.params[off..].fill(0.0);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: LstmModel = serde_json::from_str(text)?;
        Self::from_parameters(raw.config, raw.params)
    }

    fn layer_forward(&self, layer: usize, x: &[f64], prev: &LayerState) -> (LayerState, LayerCache) {
        let h = self.config.hidden_size;
        let in_l = self.config.layer_input(layer);
        let cols = in_l + h;
        let w = &self.params[self.layer_offset(layer)..];
        let b = &self.params[self.bias_offset(layer)..];

        let mut concat = Vec::with_capacity(cols);
        concat.extend_from_slice(x);
        concat.extend_from_slice(&prev.h);

        let mut z = vec![0.0; 4 * h];
        for (r, zr) in z.iter_mut().enumerate() {
            let row = &w[r * cols..(r + 1) * cols];
            *zr = b[r] + row.iter().zip(&concat).map(|(a, v)| a * v).sum::<f64>();
        }
        let i: Vec<f64> = z[..h].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * h..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..h).map(|k| f[k] * prev.c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let hn: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
        (
            LayerState { h: hn, c },
            LayerCache {
                concat,
                i,
                f,
                g,
                o,
                c_prev: prev.c.clone(),
                tanh_c,
            },
        )
    }

    fn head(&self, top: &[f64]) -> Vec<f64> {
        let h = self.config.hidden_size;
        let off = self.head_offset();
        let d = self.config.input_dim;
        let w = &self.params[off..off + d * h];
        let b = &self.params[off + d * h..];
        (0..d)
            .map(|j| b[j] + w[j * h..(j + 1) * h].iter().zip(top).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    fn step_cached(&self, x: &[f64], state: &LstmState) -> (Vec<f64>, LstmState, Vec<LayerCache>) {
        let mut input = x.to_vec();
        let mut layers = Vec::with_capacity(self.config.num_layers);
        let mut caches = Vec::with_capacity(self.config.num_layers);
        for (l, prev) in state.layers.iter().enumerate() {
            let (next, cache) = self.layer_forward(l, &input, prev);
            input = next.h.clone();
            layers.push(next);
            caches.push(cache);
        }
        (self.head(&input), LstmState { layers }, caches)
    }

    fn check_state(&self, state: &LstmState) -> Result<()> {
        let ok = state.layers.len() == self.config.num_layers
            && state
                .layers
                .iter()
                .all(|l| l.h.len() == self.config.hidden_size && l.c.len() == self.config.hidden_size);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("state dimensions do not match model".into()))
        }
    }

    /// One time-step: returns the next-step prediction and the new state.
    pub fn forward_step(&self, x: &[f64], state: &LstmState) -> Result<(Vec<f64>, LstmState)> {
        if x.len() != self.config.input_dim {
            return Err(Error::InvalidArgument(format!(
                "input has {} dims, model expects {}",
                x.len(),
                self.config.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite input".into()));
        }
        self.check_state(state)?;
        let (y, next, _) = self.step_cached(x, state);
        Ok((y, next))
    }

    /// Teacher-forced one-step-ahead MSE over `rows` and its gradient with
    /// respect to the flat parameter vector.
    pub fn loss_and_gradient(&self, rows: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let cfg = &self.config;
        let (h, d) = (cfg.hidden_size, cfg.input_dim);
        let steps = rows.len() - 1;
        let scale = 1.0 / (steps as f64 * d as f64);

        let mut state = LstmState::zeros(cfg);
        let mut caches = Vec::with_capacity(steps);
        let mut errors = Vec::with_capacity(steps);
        let mut tops = Vec::with_capacity(steps);
        let mut loss = 0.0;
        for t in 0..steps {
            let (y, next, cache) = self.step_cached(&rows[t], &state);
            let err: Vec<f64> = y.iter().zip(&rows[t + 1]).map(|(a, b)| a - b).collect();
            loss += err.iter().map(|e| e * e).sum::<f64>();
            tops.push(next.layers[cfg.num_layers - 1].h.clone());
            errors.push(err);
            caches.push(cache);
            state = next;
        }
        loss *= scale;

        let mut grad = vec![0.0; self.params.len()];
        let head = self.head_offset();
        let mut dh_next = vec![vec![0.0; h]; cfg.num_layers];
        let mut dc_next = vec![vec![0.0; h]; cfg.num_layers];
        for t in (0..steps).rev() {
            let dy: Vec<f64> = errors[t].iter().map(|e| 2.0 * e * scale).collect();
            let mut dh_above = vec![0.0; h];
            for j in 0..d {
                grad[head + d * h + j] += dy[j];
                for k in 0..h {
                    grad[head + j * h + k] += dy[j] * tops[t][k];
                    dh_above[k] += self.params[head + j * h + k] * dy[j];
                }
            }
            for l in (0..cfg.num_layers).rev() {
                let c = &caches[t][l];
                let cols = cfg.layer_input(l) + h;
                let w_off = self.layer_offset(l);
                let b_off = self.bias_offset(l);
                let mut dz = vec![0.0; 4 * h];
                for k in 0..h {
                    let dh = dh_above[k] + dh_next[l][k];
                    let dc = dh * c.o[k] * (1.0 - c.tanh_c[k] * c.tanh_c[k]) + dc_next[l][k];
                    dz[k] = dc * c.g[k] * c.i[k] * (1.0 - c.i[k]);
                    dz[h + k] = dc * c.c_prev[k] * c.f[k] * (1.0 - c.f[k]);
                    dz[2 * h + k] = dc * c.i[k] * (1.0 - c.g[k] * c.g[k]);
                    dz[3 * h + k] = dh * c.tanh_c[k] * c.o[k] * (1.0 - c.o[k]);
                    dc_next[l][k] = dc * c.f[k];
                }
                let mut dconcat = vec![0.0; cols];
                for (r, &dzr) in dz.iter().enumerate() {
                    grad[b_off + r] += dzr;
                    let row = w_off + r * cols;
                    for q in 0..cols {
                        grad[row + q] += dzr * c.concat[q];
                        dconcat[q] += self.params[row + q] * dzr;
                    }
                }
                let in_l = cfg.layer_input(l);
                dh_next[l] = dconcat[in_l..].to_vec();
                dh_above = dconcat[..in_l].to_vec();
            }
        }
        (loss, grad)
    }

    pub fn loss(&self, rows: &[Vec<f64>]) -> f64 {
        let steps = rows.len() - 1;
        let mut state = LstmState::zeros(&self.config);
        let mut sum = 0.0;
        for t in 0..steps {
            let (y, next, _) = self.step_cached(&rows[t], &state);
            sum += y.iter().zip(&rows[t + 1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            state = next;
        }
        sum / (steps as f64 * self.config.input_dim as f64)
    }
}

/// Convenience alias for [`LstmModel::init`].
pub fn init_model(cfg: LstmConfig) -> Result<LstmModel> {
    LstmModel::init(cfg)
}

fn check_rows(model: &LstmModel, rows: &[Vec<f64>]) -> Result<()> {
    if rows.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "training data needs at least 3 steps, got {}",
            rows.len()
        )));
    }
    let d = model.config.input_dim;
    if rows.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument(format!("training rows must be finite with {d} columns")));
    }
    Ok(())
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Trains on one sequence; `loss_history[e]` is the loss before update `e`.
pub fn train(model: &LstmModel, rows: &[Vec<f64>], tc: &TrainConfig) -> Result<(LstmModel, Vec<f64>)> {
    tc.validate()?;
    check_rows(model, rows)?;
    let mut m = model.clone();
    let mut history = Vec::with_capacity(tc.epochs);
    let n = m.params.len();
    let (mut m1, mut m2) = (vec![0.0; n], vec![0.0; n]);
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    for epoch in 0..tc.epochs {
        let (loss, mut grad) = m.loss_and_gradient(rows);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                member: format!("{:?}", m.config),
                epoch,
                loss,
            });
        }
        history.push(loss);
        clip(&mut grad, tc.gradient_clip_norm);
        match tc.optimizer {
            Optimizer::Sgd => {
                for (p, g) in m.params.iter_mut().zip(&grad) {
                    *p -= tc.learning_rate * g;
                }
            }
            Optimizer::Adam => {
                let t = (epoch + 1) as i32;
                let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                for k in 0..n {
                    m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[k];
                    m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[k] * grad[k];
                    m.params[k] -= tc.learning_rate * (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps);
                }
            }
        }
    }
    if m.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFiniteLoss {
            member: format!("{:?}", m.config),
            epoch: tc.epochs,
            loss: f64::NAN,
        });
    }
    Ok((m, history))
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences with step `h`, over every parameter.
#[allow(clippy::needless_range_loop)] // k indexes params and gradient alike
pub fn gradient_check(model: &LstmModel, rows: &[Vec<f64>], h: f64) -> Result<f64> {
    check_rows(model, rows)?;
    let (_, analytic) = model.loss_and_gradient(rows);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for k in 0..probe.params.len() {
        let orig = probe.params[k];
        probe.params[k] = orig + h;
        let up = probe.loss(rows);
        probe.params[k] = orig - h;
        let down = probe.loss(rows);
        probe.params[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[k];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(hidden: usize, layers: usize, seed: u64) -> LstmConfig {
        LstmConfig {
            input_dim: 2,
            hidden_size: hidden,
            num_layers: layers,
            seed,
        }
    }

    #[test]
    fn parameter_count_matches_gate_shapes() {
        let m = LstmModel::init(cfg(4, 2, 1)).unwrap();
        assert_eq!(m.param_count(), 266);
    }

    #[test]
    fn init_is_seeded() {
        let a = LstmModel::init(cfg(8, 2, 42)).unwrap();
        let b = LstmModel::init(cfg(8, 2, 42)).unwrap();
        let c = LstmModel::init(cfg(8, 2, 43)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.parameters(), c.parameters());
    }

    #[test]
    fn init_bounds_and_forget_bias() {
        let m = LstmModel::init(cfg(16, 3, 5)).unwrap();
        let bound = 0.25;
        for l in 0..3 {
            let b = m.bias_offset(l);
            assert!(m.params[b + 16..b + 32].iter().all(|&v| v == 1.0));
            assert!(m.params[b..b + 16].iter().all(|v| v.abs() <= bound));
        }
        assert!(m.params[m.head_offset()..].iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn zero_model_is_a_fixed_point() {
        let c = cfg(4, 2, 0);
        let m = LstmModel::from_parameters(c, vec![0.0; c.param_count()]).unwrap();
        let s0 = LstmState::zeros(&c);
        let (y, s1) = m.forward_step(&[3.0, -7.0], &s0).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
        assert_eq!(s1, s0);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let m = LstmModel::init(cfg(4, 1, 0)).unwrap();
        let s = LstmState::zeros(m.config());
        assert!(m.forward_step(&[f64::NAN, 0.0], &s).is_err());
        assert!(m.forward_step(&[0.0], &s).is_err());
        let wrong = LstmState::zeros(&cfg(8, 1, 0));
        assert!(m.forward_step(&[0.0, 0.0], &wrong).is_err());
    }

    #[test]
    fn forward_does_not_touch_input_state() {
        let m = LstmModel::init(cfg(8, 2, 3)).unwrap();
        let (_, s1) = m.forward_step(&[0.5, 0.2], &LstmState::zeros(m.config())).unwrap();
        let copy = s1.clone();
        let (_, s2) = m.forward_step(&[0.1, -0.3], &s1).unwrap();
        assert_eq!(s1, copy);
        assert_ne!(s1, s2);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = LstmModel::init(cfg(8, 3, 99)).unwrap();
        let back = LstmModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m.config(), back.config());
        for (a, b) in m.parameters().iter().zip(back.parameters()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    fn rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let dist = Uniform::new(-1.0, 1.0).unwrap();
        let mut rng = seed::rng(seed);
        (0..n).map(|_| vec![dist.sample(&mut rng), dist.sample(&mut rng)]).collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = LstmModel::init(cfg(4, 2, 11)).unwrap();
        let err = gradient_check(&m, &rows(10, 12), 1e-5).unwrap();
        assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn gradient_check_is_smooth_in_step() {
        let m = LstmModel::init(cfg(4, 1, 2)).unwrap();
        let data = rows(8, 3);
        let a = gradient_check(&m, &data, 1e-6).unwrap();
        let b = gradient_check(&m, &data, 2e-6).unwrap();
        assert!(a.is_finite() && b.is_finite());
    }

    #[test]
    fn zero_data_with_zero_head_stays_at_zero_loss() {
        let mut m = LstmModel::init(cfg(4, 1, 8)).unwrap();
        m.zero_head();
        let data = vec![vec![0.0, 0.0]; 20];
        let tc = TrainConfig { epochs: 20, ..Default::default() };
        let (_, hist) = train(&m, &data, &tc).unwrap();
        assert_eq!(hist.len(), 20);
        assert!(hist[0] < 1e-20);
        assert!(hist.iter().all(|&l| l <= hist[0]));
    }

    #[test]
    fn short_data_is_rejected() {
        let m = LstmModel::init(cfg(4, 1, 8)).unwrap();
        assert!(train(&m, &rows(2, 1), &TrainConfig::default()).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let m = LstmModel::init(cfg(4, 2, 8)).unwrap();
        let data = rows(30, 4);
        let tc = TrainConfig { epochs: 5, ..Default::default() };
        assert_eq!(train(&m, &data, &tc).unwrap(), train(&m, &data, &tc).unwrap());
    }

    #[test]
    fn diverging_training_aborts() {
        let m = LstmModel::init(cfg(4, 1, 8)).unwrap();
        let mut data = rows(10, 4);
        data[3][0] = 1e200;
        let tc = TrainConfig { epochs: 3, ..Default::default() };
        let err = train(&m, &data, &tc).unwrap_err();
        assert!(err.is_numerical());
    }
}
