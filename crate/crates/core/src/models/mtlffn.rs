//! Multi-task feed-forward regressor: shared leaky-ReLU hidden layers and
//! one linear output unit per emotion variable, trained with Adam on mean
//! squared error.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_data, ModelError};

/// Hyperparameters of [`fit_mtlffn`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub input_dropout: f64,
    pub hidden_dropout: f64,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128],
            input_dropout: 0.2,
            hidden_dropout: 0.5,
            leaky_slope: 0.01,
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 168,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let rate = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(ModelError::Config(format!("{name} = {v} must lie in [0, 1)")))
            }
        };
        rate("input_dropout", self.input_dropout)?;
        rate("hidden_dropout", self.hidden_dropout)?;
        rate("learning_rate", self.learning_rate)?;
        rate("adam_beta1", self.adam_beta1)?;
        rate("adam_beta2", self.adam_beta2)?;
        if self.learning_rate == 0.0 {
            return Err(ModelError::Config("learning_rate must be positive".into()));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(ModelError::Config("adam_epsilon must be positive".into()));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(ModelError::Config("leaky_slope must be finite and non-negative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::Config("epochs and batch_size must be at least 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(ModelError::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }

    /// Optimizer steps for `n` training rows; the last partial batch of an
    /// epoch counts as a step.
    pub fn total_steps(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size) * self.epochs
    }
}

/// One fully connected layer, weights stored `inputs x outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((inputs, outputs), || {
            rng.random_range(-limit..limit)
        });
        Self { weights, bias: Array1::zeros(outputs) }
    }

    fn affine(&self, input: &ArrayView2<f64>) -> Array2<f64> {
        input.dot(&self.weights) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlffnModel {
    /// Hidden layers followed by the output layer.
    pub layers: Vec<Dense>,
    pub leaky_slope: f64,
}

/// Per-epoch training record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: usize,
    /// Mean minibatch loss (with dropout) of every epoch.
    pub epoch_losses: Vec<f64>,
}

struct Cache {
    /// Input to each layer, after dropout.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    /// Dropout multipliers applied to each hidden activation, if any.
    masks: Vec<Option<Array2<f64>>>,
    output: Array2<f64>,
}

impl MtlffnModel {
    pub fn new(input_dim: usize, outputs: usize, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::init(input_dim, outputs, cfg, &mut rng)
    }

    fn init(input_dim: usize, outputs: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(outputs);
        let layers = sizes.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect();
        Self { layers, leaky_slope: cfg.leaky_slope }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.ncols())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn leaky(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.leaky_slope * z
        }
    }

    fn forward_cached(
        &self,
        x: ArrayView2<f64>,
        dropout: Option<(f64, f64, &mut ChaCha8Rng)>,
    ) -> Cache {
        let (mut input, mut dropout) = match dropout {
            Some((p_in, p_hidden, rng)) => {
                let mut input = x.to_owned();
                if let Some(mask) = dropout_mask(input.dim(), p_in, rng) {
                    input *= &mask;
                }
                (input, Some((p_hidden, rng)))
            }
            None => (x.to_owned(), None),
        };
        let hidden = self.layers.len() - 1;
        let mut cache = Cache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(hidden),
            masks: Vec::with_capacity(hidden),
            output: Array2::zeros((0, 0)),
        };
        for layer in &self.layers[..hidden] {
            let z = layer.affine(&input.view());
            let mut h = z.mapv(|v| self.leaky(v));
            let mask = match dropout.as_mut() {
                Some((p, rng)) => dropout_mask(h.dim(), *p, rng),
                None => None,
            };
            if let Some(m) = &mask {
                h *= m;
            }
            cache.inputs.push(input);
            cache.pre.push(z);
            cache.masks.push(mask);
            input = h;
        }
        cache.output = self.layers[hidden].affine(&input.view());
        cache.inputs.push(input);
        cache
    }

    /// Loss gradient for every layer given a forward cache.
    fn backward(&self, cache: &Cache, y: ArrayView2<f64>) -> Vec<Dense> {
        let scale = 2.0 / (y.nrows() * y.ncols()) as f64;
        let mut delta = (&cache.output - &y) * scale;
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let weights = cache.inputs[l].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut upstream = delta.dot(&layer.weights.t());
                if let Some(m) = &cache.masks[l - 1] {
                    upstream *= m;
                }
                let slope = self.leaky_slope;
                Zip::from(&mut upstream).and(&cache.pre[l - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d *= slope;
                    }
                });
                delta = upstream;
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        grads
    }

    /// Mean squared error over rows and variables, without dropout.
    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
        let cache = self.forward_cached(x, None);
        mse(&cache.output, y)
    }

    /// Loss and its gradient for every parameter, without dropout.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> (f64, Vec<Dense>) {
        let cache = self.forward_cached(x, None);
        let loss = mse(&cache.output, y);
        (loss, self.backward(&cache, y))
    }

    /// Deterministic forward pass without dropout.
    ///
    /// Each row is computed independently with a fixed summation order, so
    /// equal input rows give bitwise-equal outputs.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        if x.ncols() != self.input_dim() {
            return Err(ModelError::Dimension { expected: self.input_dim(), found: x.ncols() });
        }
        let k = self.output_dim();
        let mut out = vec![0.0; x.nrows() * k];
        out.par_chunks_mut(k.max(1)).enumerate().for_each(|(r, dst)| {
            let mut a: Vec<f64> = x.row(r).to_vec();
            let last = self.layers.len() - 1;
            for (l, layer) in self.layers.iter().enumerate() {
                let mut z = affine_row(layer, &a);
                if l < last {
                    z.iter_mut().for_each(|v| *v = self.leaky(*v));
                }
                a = z;
            }
            dst.copy_from_slice(&a);
        });
        Ok(Array2::from_shape_vec((x.nrows(), k), out).expect("shape"))
    }
}

fn affine_row(layer: &Dense, input: &[f64]) -> Vec<f64> {
    let mut z = layer.bias.to_vec();
    for (i, &a) in input.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (zj, &w) in z.iter_mut().zip(layer.weights.row(i)) {
            *zj += a * w;
        }
    }
    z
}

fn mse(output: &Array2<f64>, y: ArrayView2<f64>) -> f64 {
    let n = (y.nrows() * y.ncols()) as f64;
    Zip::from(output).and(&y).fold(0.0, |acc, &o, &t| acc + (o - t) * (o - t)) / n
}

/// Inverted-dropout multipliers: 0 with probability `p`, else `1 / (1 - p)`.
fn dropout_mask(dim: (usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Option<Array2<f64>> {
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 - p;
    let scale = 1.0 / keep;
    Some(Array2::from_shape_simple_fn(dim, || {
        if rng.random::<f64>() < keep {
            scale
        } else {
            0.0
        }
    }))
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl Adam {
    fn new(model: &MtlffnModel) -> Self {
        let zeros = || {
            model
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect::<Vec<_>>()
        };
        Self { m: zeros(), v: zeros(), t: 0 }
    }

    fn step(&mut self, model: &mut MtlffnModel, grads: &[Dense], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = cfg.learning_rate;
        let eps = cfg.adam_epsilon;
        let update = |p: f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            p - lr * (*m / c1) / ((*v / c2).sqrt() + eps)
        };
        for (((layer, g), m), v) in model.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| *p = update(*p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| *p = update(*p, m, v, g));
        }
    }
}

/// Trains a multi-task network on rows of `x` against rows of `y`.
///
/// Initialization, epoch shuffles, and dropout masks all come from one
/// generator seeded with `cfg.seed`, so equal inputs give equal parameters.
pub fn fit_mtlffn(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<(MtlffnModel, TrainLog), ModelError> {
    cfg.validate()?;
    check_training_data(&x, &y)?;
    let n = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MtlffnModel::init(x.ncols(), y.ncols(), cfg, &mut rng);
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb = y.select(Axis(0), batch);
            let cache = model.forward_cached(
                xb.view(),
                Some((cfg.input_dropout, cfg.hidden_dropout, &mut rng)),
            );
            let loss = mse(&cache.output, yb.view());
            if !loss.is_finite() {
                return Err(ModelError::Divergence { step: log.steps });
            }
            let grads = model.backward(&cache, yb.view());
            adam.step(&mut model, &grads, cfg);
            log.steps += 1;
            epoch_loss += loss;
            batches += 1;
        }
        log.epoch_losses.push(epoch_loss / batches as f64);
    }
    if !model.is_finite() {
        return Err(ModelError::Divergence { step: log.steps });
    }
    Ok((model, log))
}
