//! A small LSTM regressor trained with truncated backpropagation through time.
//!
//! Each layer computes, for gate pre-activations `z = W x + U h + b` stacked
//! as `[input, forget, cell, output]`:
//!
//! ```text
//! i = sigmoid(z_i)   f = sigmoid(z_f)   g = tanh(z_g)   o = sigmoid(z_o)
//! c' = f * c + i * g
//! h' = o * tanh(c')
//! ```
//!
//! A linear head maps the top layer's final hidden state to a scalar in
//! normalized backlog units.
//!
//! All weights live in one flat vector so that gradients, clipping and the
//! text serialization share the same layout. Per layer `k` (input width `I_k`,
//! which is 3 for the first layer and `H` above it):
//! `W` (`4H x I_k`, row-major), `U` (`4H x H`, row-major), `b` (`4H`).
//! The head follows: `w_out` (`H`), `b_out` (1).

use std::str::Lines;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::{Error, Result};

/// Width of one input step: success, collision and idle fractions.
pub const INPUT_SIZE: usize = 3;

const FORMAT_TAG: &str = "rasim-lstm";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmModel {
    hidden: usize,
    layers: usize,
    /// Class population used to turn normalized outputs into device counts.
    population: u64,
    params: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct LayerOffsets {
    w: usize,
    u: usize,
    b: usize,
    input: usize,
}

/// Activations of one layer at one step, kept for the backward pass.
#[derive(Clone, Debug)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmModel {
    /// All-zero model; its output is the head bias.
    pub fn zeros(hidden: usize, layers: usize, population: u64) -> Result<Self> {
        if hidden == 0 || layers == 0 {
            return Err(Error::Shape("hidden size and depth must be positive".into()));
        }
        let mut m = Self {
            hidden,
            layers,
            population,
            params: Vec::new(),
        };
        m.params = vec![0.0; m.param_count()];
        Ok(m)
    }

    /// Uniform `±1/sqrt(H)` weights, forget-gate bias 1.
    pub fn init<R: Rng + ?Sized>(
        hidden: usize,
        layers: usize,
        population: u64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut m = Self::zeros(hidden, layers, population)?;
        let scale = 1.0 / (hidden as f64).sqrt();
        for p in m.params.iter_mut() {
            *p = rng.random_range(-scale..scale);
        }
        for k in 0..layers {
            let off = m.offsets(k);
            for j in 0..4 * hidden {
                m.params[off.b + j] = if (hidden..2 * hidden).contains(&j) { 1.0 } else { 0.0 };
            }
        }
        let head_b = m.params.len() - 1;
        m.params[head_b] = 0.0;
        Ok(m)
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_head_bias(&mut self, b: f64) {
        let last = self.params.len() - 1;
        self.params[last] = b;
    }

    fn layer_input(&self, k: usize) -> usize {
        if k == 0 {
            INPUT_SIZE
        } else {
            self.hidden
        }
    }

    fn layer_len(&self, k: usize) -> usize {
        let h4 = 4 * self.hidden;
        h4 * self.layer_input(k) + h4 * self.hidden + h4
    }

    fn param_count(&self) -> usize {
        (0..self.layers).map(|k| self.layer_len(k)).sum::<usize>() + self.hidden + 1
    }

    fn offsets(&self, k: usize) -> LayerOffsets {
        let start: usize = (0..k).map(|j| self.layer_len(j)).sum();
        let input = self.layer_input(k);
        let h4 = 4 * self.hidden;
        LayerOffsets {
            w: start,
            u: start + h4 * input,
            b: start + h4 * input + h4 * self.hidden,
            input,
        }
    }

    fn head_offset(&self) -> usize {
        self.params.len() - self.hidden - 1
    }

    fn run_layer(&self, k: usize, inputs: &[Vec<f64>]) -> Vec<StepCache> {
        let hs = self.hidden;
        let off = self.offsets(k);
        let p = &self.params;
        let mut h = vec![0.0; hs];
        let mut c = vec![0.0; hs];
        let mut caches = Vec::with_capacity(inputs.len());
        for x in inputs {
            let mut z = p[off.b..off.b + 4 * hs].to_vec();
            for (r, zr) in z.iter_mut().enumerate() {
                let wrow = &p[off.w + r * off.input..off.w + (r + 1) * off.input];
                let urow = &p[off.u + r * hs..off.u + (r + 1) * hs];
                *zr += wrow.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                *zr += urow.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
            }
            let i: Vec<f64> = z[..hs].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = z[hs..2 * hs].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = z[2 * hs..3 * hs].iter().map(|&v| v.tanh()).collect();
            let o: Vec<f64> = z[3 * hs..].iter().map(|&v| sigmoid(v)).collect();
            let c_new: Vec<f64> = (0..hs).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
            let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
            let h_new: Vec<f64> = (0..hs).map(|j| o[j] * tanh_c[j]).collect();
            caches.push(StepCache {
                x: x.clone(),
                h_prev: h,
                c_prev: c,
                i,
                f,
                g,
                o,
                tanh_c,
                h: h_new.clone(),
            });
            h = h_new;
            c = c_new;
        }
        caches
    }

    fn check_window(&self, window: &[[f64; INPUT_SIZE]]) -> Result<()> {
        if window.is_empty() {
            return Err(Error::Empty("input window"));
        }
        if self.params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, found {}",
                self.param_count(),
                self.params.len()
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, window: &[[f64; INPUT_SIZE]]) -> (f64, Vec<Vec<StepCache>>) {
        let mut inputs: Vec<Vec<f64>> = window.iter().map(|x| x.to_vec()).collect();
        let mut all = Vec::with_capacity(self.layers);
        for k in 0..self.layers {
            let caches = self.run_layer(k, &inputs);
            inputs = caches.iter().map(|s| s.h.clone()).collect();
            all.push(caches);
        }
        let h_last = inputs.last().expect("non-empty window");
        let head = self.head_offset();
        let y = self.params[head..head + self.hidden]
            .iter()
            .zip(h_last)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + self.params[head + self.hidden];
        (y, all)
    }

    /// Raw head output over a window of normalized triplets, oldest first.
    pub fn lstm_forward(&self, window: &[[f64; INPUT_SIZE]]) -> Result<f64> {
        self.check_window(window)?;
        Ok(self.forward_cached(window).0)
    }

    /// Forward pass clamped to the normalized range `[0, 1]`.
    pub fn predict_normalized(&self, window: &[[f64; INPUT_SIZE]]) -> Result<f64> {
        Ok(self.lstm_forward(window)?.clamp(0.0, 1.0))
    }

    /// Squared error on one sample and its gradient w.r.t. every parameter.
    pub fn loss_and_gradient(&self, window: &[[f64; INPUT_SIZE]], target: f64) -> Result<(f64, Vec<f64>)> {
        self.check_window(window)?;
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradient(window, target, 1.0, &mut grad);
        Ok((loss, grad))
    }

    /// Adds `scale * d(loss)/d(params)` into `grad`; returns the squared error.
    fn accumulate_gradient(
        &self,
        window: &[[f64; INPUT_SIZE]],
        target: f64,
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let hs = self.hidden;
        let (y, caches) = self.forward_cached(window);
        let err = y - target;
        let dy = 2.0 * err * scale;
        let head = self.head_offset();
        let top = caches.last().expect("at least one layer");
        let h_last = &top.last().expect("non-empty window").h;
        for j in 0..hs {
            grad[head + j] += dy * h_last[j];
        }
        grad[head + hs] += dy;

        // gradient w.r.t. the hidden output of the current layer at each step
        let steps = window.len();
        let mut dh_seq = vec![vec![0.0; hs]; steps];
        for j in 0..hs {
            dh_seq[steps - 1][j] = dy * self.params[head + j];
        }
        for k in (0..self.layers).rev() {
            let off = self.offsets(k);
            let layer = &caches[k];
            let mut dx_seq = vec![vec![0.0; off.input]; steps];
            let mut dh_next = vec![0.0; hs];
            let mut dc_next = vec![0.0; hs];
            for t in (0..steps).rev() {
                let s = &layer[t];
                let mut dz = vec![0.0; 4 * hs];
                for j in 0..hs {
                    let dh = dh_seq[t][j] + dh_next[j];
                    let dc = dc_next[j] + dh * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
                    dz[j] = dc * s.g[j] * s.i[j] * (1.0 - s.i[j]);
                    dz[hs + j] = dc * s.c_prev[j] * s.f[j] * (1.0 - s.f[j]);
                    dz[2 * hs + j] = dc * s.i[j] * (1.0 - s.g[j] * s.g[j]);
                    dz[3 * hs + j] = dh * s.tanh_c[j] * s.o[j] * (1.0 - s.o[j]);
                    dc_next[j] = dc * s.f[j];
                }
                dh_next.iter_mut().for_each(|v| *v = 0.0);
                for (r, &dzr) in dz.iter().enumerate() {
                    if dzr == 0.0 {
                        continue;
                    }
                    grad[off.b + r] += dzr;
                    let wrow = off.w + r * off.input;
                    for (q, &xq) in s.x.iter().enumerate() {
                        grad[wrow + q] += dzr * xq;
                        dx_seq[t][q] += dzr * self.params[wrow + q];
                    }
                    let urow = off.u + r * hs;
                    for q in 0..hs {
                        grad[urow + q] += dzr * s.h_prev[q];
                        dh_next[q] += dzr * self.params[urow + q];
                    }
                }
            }
            dh_seq = dx_seq;
        }
        err * err
    }

    /// Text serialization: a header of `key value` lines, then one parameter
    /// per line in the flat layout described in the module docs.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{FORMAT_TAG} {FORMAT_VERSION}\ninput_size {INPUT_SIZE}\nhidden_size {}\nlayers {}\npopulation {}\nparams {}\n",
            self.hidden,
            self.layers,
            self.population,
            self.params.len()
        );
        for p in &self.params {
            out.push_str(&format!("{p:e}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_from(&mut text.lines())
    }

    pub(crate) fn read_from(lines: &mut Lines<'_>) -> Result<Self> {
        let mut header = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::ModelFormat(format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(k), Some(v), None) if k == key => Ok(v.to_string()),
                _ => Err(Error::ModelFormat(format!("expected `{key} <value>`, got `{line}`"))),
            }
        };
        let num = |v: String, key: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::ModelFormat(format!("bad {key} `{v}`")))
        };
        let version = num(header(FORMAT_TAG)?, "version")?;
        if version != FORMAT_VERSION as usize {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let input = num(header("input_size")?, "input_size")?;
        if input != INPUT_SIZE {
            return Err(Error::Shape(format!("input size {input}, expected {INPUT_SIZE}")));
        }
        let hidden = num(header("hidden_size")?, "hidden_size")?;
        let layers = num(header("layers")?, "layers")?;
        let population = num(header("population")?, "population")? as u64;
        let count = num(header("params")?, "params")?;
        let mut model = Self::zeros(hidden, layers, population)?;
        if count != model.params.len() {
            return Err(Error::Shape(format!(
                "{count} parameters for hidden {hidden} x {layers} layers, expected {}",
                model.params.len()
            )));
        }
        for p in model.params.iter_mut() {
            let line = lines
                .next()
                .ok_or_else(|| Error::ModelFormat("truncated parameter list".into()))?;
            *p = line
                .trim()
                .parse()
                .map_err(|_| Error::ModelFormat(format!("bad parameter `{line}`")))?;
        }
        Ok(model)
    }
}

/// One training pair: a window of normalized triplets and the normalized backlog.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainingSample {
    pub window: Vec<[f64; INPUT_SIZE]>,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub hidden: usize,
    pub layers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Global gradient norm cap.
    pub clip_norm: f64,
    pub population: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            hidden: 20,
            layers: 1,
            epochs: 100,
            learning_rate: 1e-2,
            batch_size: 1,
            clip_norm: 1.0,
            population: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean squared error over the training set after each epoch's updates.
    pub epoch_loss: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_loss.last().copied().unwrap_or(f64::NAN)
    }
}

/// Minibatch gradient descent on mean squared error with global-norm clipping.
pub fn lstm_train<R: Rng + ?Sized>(
    dataset: &[TrainingSample],
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<(LstmModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if dataset.iter().any(|s| s.window.is_empty()) {
        return Err(Error::Empty("training window"));
    }
    if opts.batch_size == 0 {
        return Err(Error::config("train.batch_size", "must be at least 1"));
    }
    let mut model = LstmModel::init(opts.hidden, opts.layers, opts.population, rng)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut grad = vec![0.0; model.params.len()];
    let mut report = TrainReport {
        epoch_loss: Vec::with_capacity(opts.epochs),
    };
    for epoch in 0..opts.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(opts.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let s = &dataset[idx];
                loss_sum += model.accumulate_gradient(&s.window, s.target, scale, &mut grad);
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: norm,
                });
            }
            let step = if norm > opts.clip_norm {
                opts.learning_rate * opts.clip_norm / norm
            } else {
                opts.learning_rate
            };
            for (p, g) in model.params.iter_mut().zip(&grad) {
                *p -= step * g;
            }
        }
        let loss = loss_sum / dataset.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        report.epoch_loss.push(loss);
    }
    Ok((model, report))
}

/// Mean squared error of `model` on `dataset` in normalized units.
pub fn dataset_mse(model: &LstmModel, dataset: &[TrainingSample]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut sum = 0.0;
    for s in dataset {
        let y = model.predict_normalized(&s.window)?;
        sum += (y - s.target).powi(2);
    }
    Ok(sum / dataset.len() as f64)
}
