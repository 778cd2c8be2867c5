//! L2-regularized linear regression with an unpenalized intercept.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_training_data, ModelError};

pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    /// `inputs x outputs`
    pub coef: Array2<f64>,
    pub intercept: Array1<f64>,
    pub alpha: f64,
}

/// Minimizes `||Y - XW - b||^2 + alpha ||W||^2`.
///
/// Inputs and targets are centered, `(Xc'Xc + alpha I) W = Xc'Yc` is solved by
/// Cholesky factorization for all outputs at once, and the intercept is
/// recovered from the means.
pub fn fit_ridge(x: ArrayView2<f64>, y: ArrayView2<f64>, alpha: f64) -> Result<RidgeModel, ModelError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(ModelError::Config(format!("alpha = {alpha} must be finite and >= 0")));
    }
    check_training_data(&x, &y)?;
    let (n, d) = x.dim();
    let k = y.ncols();
    let x_mean = x.mean_axis(Axis(0)).expect("n >= 1");
    let y_mean = y.mean_axis(Axis(0)).expect("n >= 1");
    let xc = &x - &x_mean;
    let yc = &y - &y_mean;

    let xc = DMatrix::from_row_iterator(n, d, xc.iter().copied());
    let yc = DMatrix::from_row_iterator(n, k, yc.iter().copied());
    let mut gram = xc.tr_mul(&xc);
    for i in 0..d {
        gram[(i, i)] += alpha;
    }
    let rhs = xc.tr_mul(&yc);
    let largest = (0..d).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let chol = gram.cholesky().ok_or_else(|| {
        ModelError::Numeric(if alpha == 0.0 {
            "normal equations are singular; use alpha > 0".into()
        } else {
            "normal equations are not positive definite".into()
        })
    })?;
    // Cholesky succeeds on rank-deficient systems perturbed by rounding, so
    // tiny pivots relative to the largest diagonal entry count as singular.
    let floor = d as f64 * f64::EPSILON * largest;
    if (0..d).any(|i| chol.l_dirty()[(i, i)].powi(2) <= floor) {
        return Err(ModelError::Numeric("normal equations are numerically singular; use alpha > 0".into()));
    }
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Numeric("non-finite ridge solution; use alpha > 0".into()));
    }
    let coef = Array2::from_shape_fn((d, k), |(i, j)| w[(i, j)]);
    let intercept = &y_mean - &x_mean.dot(&coef);
    Ok(RidgeModel { coef, intercept, alpha })
}

impl RidgeModel {
    pub fn input_dim(&self) -> usize {
        self.coef.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.coef.ncols()
    }

    /// Row-wise `intercept + x W`, with a fixed summation order per row.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        if x.ncols() != self.input_dim() {
            return Err(ModelError::Dimension { expected: self.input_dim(), found: x.ncols() });
        }
        let mut out = Array2::zeros((x.nrows(), self.output_dim()));
        for (row, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
            dst.assign(&self.intercept);
            for (i, &a) in row.iter().enumerate() {
                dst.scaled_add(a, &self.coef.row(i));
            }
        }
        Ok(out)
    }

    /// Value of the ridge objective on `(x, y)`.
    pub fn objective(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
        let resid = &y - &(x.dot(&self.coef) + &self.intercept);
        resid.iter().map(|r| r * r).sum::<f64>()
            + self.alpha * self.coef.iter().map(|w| w * w).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use num_rational::BigRational;
    use num_traits::{ToPrimitive, Zero};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    fn q(v: f64) -> BigRational {
        BigRational::from_float(v).unwrap()
    }

    /// Exact rational solve of the augmented system `[X 1]` with penalty on
    /// the slope rows only.
    fn exact_ridge(x: &Array2<f64>, y: &[f64], alpha: f64) -> Vec<f64> {
        let (n, d) = x.dim();
        let p = d + 1;
        let mut a = vec![vec![BigRational::zero(); p + 1]; p];
        let feat = |r: usize, i: usize| if i < d { q(x[[r, i]]) } else { q(1.0) };
        for i in 0..p {
            for j in 0..p {
                let mut s = BigRational::zero();
                for r in 0..n {
                    s += feat(r, i) * feat(r, j);
                }
                if i == j && i < d {
                    s += q(alpha);
                }
                a[i][j] = s;
            }
            let mut s = BigRational::zero();
            for r in 0..n {
                s += feat(r, i) * q(y[r]);
            }
            a[i][p] = s;
        }
        // Gauss-Jordan with exact pivots
        for c in 0..p {
            let pivot = (c..p).find(|&r| !a[r][c].is_zero()).expect("non-singular");
            a.swap(c, pivot);
            let pv = a[c][c].clone();
            for j in c..=p {
                a[c][j] = &a[c][j] / &pv;
            }
            for r in 0..p {
                if r != c && !a[r][c].is_zero() {
                    let f = a[r][c].clone();
                    for j in c..=p {
                        let t = &f * &a[c][j];
                        a[r][j] -= t;
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p].to_f64().unwrap()).collect()
    }

    #[test]
    fn matches_exact_normal_equations() {
        let x = array![[1.0, 2.0], [2.0, 0.5], [3.0, -1.0], [4.0, 3.0], [5.0, 1.5]];
        let y = array![[2.0], [1.0], [4.5], [3.0], [6.0]];
        let m = fit_ridge(x.view(), y.view(), 1.0).unwrap();
        let exact = exact_ridge(&x, y.column(0).as_slice().unwrap(), 1.0);
        assert!((m.coef[[0, 0]] - exact[0]).abs() < 1e-10);
        assert!((m.coef[[1, 0]] - exact[1]).abs() < 1e-10);
        assert!((m.intercept[0] - exact[2]).abs() < 1e-10);
    }

    #[test]
    fn interpolates_linear_data_without_penalty() {
        let x = normal(40, 5, 1);
        let w = normal(5, 2, 2);
        let y = x.dot(&w) + &array![3.0, -1.0];
        let m = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        let p = m.predict(x.view()).unwrap();
        for (a, b) in p.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn huge_penalty_predicts_means() {
        let x = normal(30, 4, 3);
        let y = normal(30, 2, 4) + 5.0;
        let m = fit_ridge(x.view(), y.view(), 1e12).unwrap();
        let norm = m.coef.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "||W|| = {norm}");
        let means = y.mean_axis(Axis(0)).unwrap();
        let p = m.predict(x.view()).unwrap();
        for row in p.rows() {
            for (a, b) in row.iter().zip(means.iter()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn zero_input_predicts_intercept() {
        let x = normal(20, 3, 5);
        let y = normal(20, 2, 6);
        let m = fit_ridge(x.view(), y.view(), 1.0).unwrap();
        let p = m.predict(Array2::zeros((1, 3)).view()).unwrap();
        assert_eq!(p.row(0), m.intercept.view());
    }

    #[test]
    fn singular_without_penalty_is_an_error() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let y = array![[1.0], [2.0], [3.0]];
        assert!(matches!(fit_ridge(x.view(), y.view(), 0.0), Err(ModelError::Numeric(_))));
        let single = array![[1.0, 2.0]];
        assert!(fit_ridge(single.view(), array![[1.0]].view(), 0.0).is_err());
        assert!(fit_ridge(single.view(), array![[1.0]].view(), 1.0).is_ok());
        assert!(fit_ridge(x.view(), y.view(), -1.0).is_err());
    }

    #[test]
    fn gradient_descent_converges_to_closed_form() {
        let x = normal(60, 3, 7);
        let y = x.dot(&normal(3, 2, 8)) + normal(60, 2, 9) * 0.3 + 2.0;
        let alpha = 2.0;
        let closed = fit_ridge(x.view(), y.view(), alpha).unwrap();

        let mut w = Array2::<f64>::zeros((3, 2));
        let mut b = Array1::<f64>::zeros(2);
        let lr = 1e-3;
        for _ in 0..200_000 {
            let resid = x.dot(&w) + &b - &y;
            let gw = x.t().dot(&resid) * 2.0 + &w * (2.0 * alpha);
            let gb = resid.sum_axis(Axis(0)) * 2.0;
            w.scaled_add(-lr, &gw);
            b.scaled_add(-lr, &gb);
        }
        let dist = (&w - &closed.coef).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(dist < 1e-6, "coefficient distance {dist}");
        assert!((&b - &closed.intercept).iter().all(|v| v.abs() < 1e-6));
    }
}
