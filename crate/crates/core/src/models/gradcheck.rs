//! Central finite-difference check of the network's analytic gradients.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::mtlffn::{MtlffnModel, TrainConfig};
use super::{check_training_data, ModelError};

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error; below it the comparison is
/// effectively absolute.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorError {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub parameters: usize,
    pub tensors: Vec<TensorError>,
}

/// `|a - b| / max(|a| + |b|, floor)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the backpropagated gradient of the full-batch loss against
/// central differences for every parameter of a freshly initialized network.
pub fn grad_check(
    cfg: &TrainConfig,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Result<GradCheckReport, ModelError> {
    cfg.validate()?;
    if cfg.input_dropout != 0.0 || cfg.hidden_dropout != 0.0 {
        return Err(ModelError::Config("gradient checking needs dropout rates of 0".into()));
    }
    check_training_data(&x, &y)?;
    let model = MtlffnModel::new(x.ncols(), y.ncols(), cfg);
    grad_check_model(&model, x, y)
}

/// Same as [`grad_check`] for an existing network.
pub fn grad_check_model(
    model: &MtlffnModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Result<GradCheckReport, ModelError> {
    let (_, grads) = model.loss_and_gradients(x, y);
    let mut probe = model.clone();
    let mut tensors = Vec::new();
    let mut parameters = 0;

    let numeric = |probe: &mut MtlffnModel, get: &dyn Fn(&mut MtlffnModel) -> &mut f64| {
        let orig = *get(probe);
        *get(probe) = orig + FD_STEP;
        let plus = probe.loss(x, y);
        *get(probe) = orig - FD_STEP;
        let minus = probe.loss(x, y);
        *get(probe) = orig;
        (plus - minus) / (2.0 * FD_STEP)
    };

    for (l, g) in grads.iter().enumerate() {
        let mut worst = 0.0f64;
        for ((i, j), &analytic) in g.weights.indexed_iter() {
            let n = numeric(&mut probe, &|m| &mut m.layers[l].weights[[i, j]]);
            worst = worst.max(relative_error(analytic, n));
            parameters += 1;
        }
        tensors.push(TensorError { name: format!("layer{l}.weights"), max_rel_error: worst });

        let mut worst = 0.0f64;
        for (j, &analytic) in g.bias.indexed_iter() {
            let n = numeric(&mut probe, &|m| &mut m.layers[l].bias[j]);
            worst = worst.max(relative_error(analytic, n));
            parameters += 1;
        }
        tensors.push(TensorError { name: format!("layer{l}.bias"), max_rel_error: worst });
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, parameters, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array, Array2, Axis};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    fn no_dropout(hidden: Vec<usize>, slope: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden,
            input_dropout: 0.0,
            hidden_dropout: 0.0,
            leaky_slope: slope,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn linear_network_is_exact() {
        let cfg = no_dropout(vec![5, 4], 1.0, 3);
        let r = grad_check(&cfg, normal(6, 3, 1).view(), normal(6, 2, 2).view()).unwrap();
        assert!(r.max_rel_error < 1e-7, "{r:?}");
    }

    #[test]
    fn random_small_instance() {
        let cfg = no_dropout(vec![10, 6], 0.01, 4);
        let r = grad_check(&cfg, normal(8, 4, 5).view(), normal(8, 2, 6).view()).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert_eq!(r.parameters, 4 * 10 + 10 + 10 * 6 + 6 + 6 * 2 + 2);
        assert_eq!(r.tensors.len(), 6);
    }

    #[test]
    fn output_bias_gradient_under_zero_input() {
        let cfg = no_dropout(vec![4, 3], 0.01, 7);
        let x = Array2::zeros((5, 3));
        let y = normal(5, 2, 8);
        let model = MtlffnModel::new(3, 2, &cfg);
        let (_, grads) = model.loss_and_gradients(x.view(), y.view());
        // zero input and zero hidden biases give a constant output equal to
        // the output bias, which starts at zero
        let out = model.predict(x.view()).unwrap();
        let residual_mean = (&out - &y).mean_axis(Axis(0)).unwrap();
        let k = y.ncols() as f64;
        for j in 0..2 {
            let expected = 2.0 / k * residual_mean[j];
            assert!((grads[2].bias[j] - expected).abs() < 1e-15);
            assert!((expected + 2.0 / k * y.column(j).mean().unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn dropout_is_rejected() {
        let cfg = TrainConfig { hidden: vec![3], ..TrainConfig::default() };
        assert!(grad_check(&cfg, normal(2, 2, 1).view(), normal(2, 1, 2).view()).is_err());
    }
}
