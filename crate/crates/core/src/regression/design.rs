use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::solver::{BallSolution, Gram};
use crate::error::{Error, Result};
use crate::function_spaces::{FeatureMap, NORM_TOL};
use crate::mdp::TransitionDataset;

/// `n x d` covariate matrix with rows of norm at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    pub label: String,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        for (row, r) in x.row_iter().enumerate() {
            let norm = r.norm();
            if !norm.is_finite() || norm > 1.0 + NORM_TOL {
                return Err(Error::RowNormExceeded { row, norm });
            }
        }
        Ok(Self {
            x,
            label: label.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimMismatch("rows have different lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), d, &flat), label)
    }

    /// Rows `phi_h(x_i, a_i)` for the dataset's tuples.
    pub fn from_dataset(feature: &FeatureMap, dataset: &TransitionDataset) -> Result<Self> {
        if feature.level() != dataset.level() {
            return Err(Error::LevelMismatch {
                expected: dataset.level(),
                found: feature.level(),
            });
        }
        let d = feature.dim();
        let mut x = DMatrix::zeros(dataset.len(), d);
        for (i, t) in dataset.tuples().iter().enumerate() {
            if t.x >= feature.num_states() || t.a >= feature.num_actions() {
                return Err(Error::ShapeMismatch(format!(
                    "tuple {t:?} outside the feature table"
                )));
            }
            for (j, v) in feature.phi(t.x, t.a).iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        Ok(Self {
            x,
            label: feature.label().to_string(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// `G = (1/n) X^T X`.
    pub fn gram(&self) -> Gram {
        Gram::new(self.x.tr_mul(&self.x) / self.n().max(1) as f64)
    }

    fn check_targets(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.n() {
            return Err(Error::DimMismatch(format!(
                "{} targets for {} rows",
                y.len(),
                self.n()
            )));
        }
        if self.n() == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(())
    }

    /// `(1/n) X^T y`.
    fn rhs(&self, y: &DVector<f64>) -> DVector<f64> {
        self.x.tr_mul(y) / self.n() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub sum: f64,
    pub mean: f64,
}

pub fn empirical_loss(x: &DesignMatrix, w: &DVector<f64>, y: &DVector<f64>) -> Result<Loss> {
    x.check_targets(y)?;
    if w.len() != x.d() {
        return Err(Error::DimMismatch(format!(
            "w has {} entries, d = {}",
            w.len(),
            x.d()
        )));
    }
    let sum = (x.matrix() * w - y).norm_squared();
    Ok(Loss {
        sum,
        mean: sum / x.n() as f64,
    })
}

/// `argmin_{||w|| <= radius} (1/n) ||X w - y||^2`.
pub fn constrained_lsq(x: &DesignMatrix, y: &DVector<f64>, radius: f64) -> Result<BallSolution> {
    x.check_targets(y)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let c = y.norm_squared() / x.n() as f64;
    Ok(x.gram().solve_ball(&x.rhs(y), c, radius))
}

/// `w = ((1/n) X^T X + lambda I)^{-1} (1/n) X^T y`.
pub fn ridge_solve(x: &DesignMatrix, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    x.check_targets(y)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let w = x.gram().ridge(&x.rhs(y), lambda);
    debug_assert!(w.iter().all(|v| v.is_finite()));
    Ok(w)
}

/// `A = I - X ((1/n) X^T X + lambda I)^{-1} (1/n) X^T`, kept implicit.
#[derive(Debug, Clone)]
pub struct ResidualOperator {
    x: DMatrix<f64>,
    /// `((1/n) X^T X + lambda I)^{-1} / n`.
    core: DMatrix<f64>,
}

pub fn residual_operator(x: &DesignMatrix, lambda: f64) -> Result<ResidualOperator> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(ResidualOperator {
        x: x.matrix().clone(),
        core: x.gram().ridge_inverse(lambda) / x.n() as f64,
    })
}

impl ResidualOperator {
    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        y - &self.x * (&self.core * self.x.tr_mul(y))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.x.nrows();
        DMatrix::identity(n, n) - &self.x * &self.core * self.x.transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadMax {
    pub value: f64,
    pub theta: DVector<f64>,
}

/// `max_{||theta|| <= r} theta^T M theta` for symmetric `M` (the input is
/// symmetrised first).
pub fn sym_quad_max(m: &DMatrix<f64>, r: f64) -> QuadMax {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (idx, top) =
        eig.eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
                if *v > acc.1 {
                    (i, *v)
                } else {
                    acc
                }
            });
    if top > 0.0 {
        QuadMax {
            value: r * r * top,
            theta: eig.eigenvectors.column(idx) * r,
        }
    } else {
        QuadMax {
            value: 0.0,
            theta: DVector::zeros(m.nrows()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_design(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DesignMatrix {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let r: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = rng.random::<f64>() / norm.max(1e-12);
                r.iter().map(|v| v * scale).collect()
            })
            .collect();
        DesignMatrix::from_rows(&rows, "random").unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0))
    }

    #[test]
    fn loss_examples() {
        let x = DesignMatrix::from_rows(
            &[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            "I",
        )
        .unwrap();
        let l = empirical_loss(&x, &DVector::zeros(3), &DVector::from_element(3, 1.0)).unwrap();
        assert_eq!((l.sum, l.mean), (3.0, 1.0));
        let w = DVector::from_vec(vec![0.5, -0.2, 0.1]);
        let y = x.matrix() * &w;
        assert_eq!(empirical_loss(&x, &w, &y).unwrap().sum, 0.0);
        assert!(empirical_loss(&x, &w, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn loss_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_design(&mut rng, 17, 3);
        let w = random_vec(&mut rng, 3);
        let y = random_vec(&mut rng, 17);
        let mut sum = 0.0;
        for i in 0..17 {
            let mut pred = 0.0;
            for j in 0..3 {
                pred += x.matrix()[(i, j)] * w[j];
            }
            sum += (pred - y[i]).powi(2);
        }
        let l = empirical_loss(&x, &w, &y).unwrap();
        assert!((l.sum - sum).abs() < 1e-12);
        assert!((l.mean - sum / 17.0).abs() < 1e-12);
    }

    #[test]
    fn constrained_inside_ball_is_unconstrained() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_design(&mut rng, 30, 3);
        let w0 = DVector::from_vec(vec![0.1, 0.2, -0.1]);
        let y = x.matrix() * &w0;
        let s = constrained_lsq(&x, &y, 10.0).unwrap();
        assert!(!s.on_boundary);
        assert!((&s.w - &w0).norm() < 1e-6);
    }

    #[test]
    fn one_dimensional_kkt_projection() {
        let x = DesignMatrix::from_rows(&vec![vec![1.0, 0.0]; 5], "e1").unwrap();
        let y = DVector::from_element(5, 2.0);
        let s = constrained_lsq(&x, &y, 1.0).unwrap();
        assert!((s.w[0] - 1.0).abs() < 1e-7);
        assert!(s.w[1].abs() < 1e-7);
        // Grid over the unit circle.
        let best = (0..10_000)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 10_000.0;
                empirical_loss(&x, &DVector::from_vec(vec![t.cos(), t.sin()]), &y)
                    .unwrap()
                    .mean
            })
            .fold(f64::INFINITY, f64::min);
        assert!(s.loss <= best + 1e-9);
        assert!((s.loss - 1.0).abs() < 1e-7);
    }

    #[test]
    fn constrained_beats_random_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_design(&mut rng, 20, 3);
        let y = random_vec(&mut rng, 20) * 3.0;
        let s = constrained_lsq(&x, &y, 0.5).unwrap();
        assert!(s.w.norm() <= 0.5 * (1.0 + 1e-12));
        for _ in 0..10_000 {
            let mut w = random_vec(&mut rng, 3);
            let r = 0.5 * rng.random::<f64>().cbrt();
            w *= r / w.norm();
            assert!(s.loss <= empirical_loss(&x, &w, &y).unwrap().mean + 1e-12);
        }
    }

    #[test]
    fn ridge_examples() {
        let x = DesignMatrix::from_rows(&[vec![1.0, 0.0]], "e1").unwrap();
        let w = ridge_solve(&x, &DVector::from_vec(vec![1.0]), 1.0).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15 && w[1].abs() < 1e-15);
        let w = ridge_solve(&x, &DVector::zeros(1), 1.0).unwrap();
        assert_eq!(w.norm(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_design(&mut rng, 25, 3);
        let y = random_vec(&mut rng, 25);
        let w = ridge_solve(&x, &y, 0.3).unwrap();
        let n = 25.0;
        let res = x.matrix().tr_mul(x.matrix()) / n * &w + &w * 0.3 - x.matrix().tr_mul(&y) / n;
        assert!(res.norm() < 1e-10);
    }

    #[test]
    fn residual_operator_examples() {
        let zero = DesignMatrix::new(DMatrix::zeros(4, 2), "0").unwrap();
        let a = residual_operator(&zero, 0.1).unwrap().to_dense();
        assert!((a - DMatrix::identity(4, 4)).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_design(&mut rng, 12, 3);
        let y = x.matrix() * random_vec(&mut rng, 3);
        let a = residual_operator(&x, 1e-8).unwrap();
        assert!(a.apply(&y).norm() < 1e-4 * y.norm());
        let dense = a.to_dense();
        let z = random_vec(&mut rng, 12);
        assert!((dense * &z - a.apply(&z)).norm() < 1e-10);
    }

    #[test]
    fn quad_max_examples() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1.0]));
        let q = sym_quad_max(&m, 2f64.sqrt());
        assert!((q.value - 4.0).abs() < 1e-12);
        assert!((q.theta[0].abs() - 2f64.sqrt()).abs() < 1e-12);
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, -1.0]));
        let q = sym_quad_max(&neg, 1.0);
        assert_eq!((q.value, q.theta.norm()), (0.0, 0.0));
        let q = sym_quad_max(&DMatrix::identity(3, 3), 1.0);
        assert!((q.value - 1.0).abs() < 1e-12 && (q.theta.norm() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kkt_holds_on_boundary(seed in 0u64..10_000, radius in 0.05f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_design(&mut rng, 15, 3);
            let y = random_vec(&mut rng, 15) * 4.0;
            let s = constrained_lsq(&x, &y, radius).unwrap();
            prop_assert!(s.w.norm() <= radius * (1.0 + 1e-12));
            if s.on_boundary {
                let n = 15.0;
                let grad = x.matrix().tr_mul(&(x.matrix() * &s.w - &y)) / n + &s.w * s.lambda;
                prop_assert!(grad.norm() < 1e-6, "{}", grad.norm());
            }
        }

        #[test]
        fn ridge_norm_decreases_in_lambda(seed in 0u64..10_000, l1 in 1e-4f64..1.0, gap in 1e-3f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_design(&mut rng, 10, 3);
            let y = random_vec(&mut rng, 10);
            let a = ridge_solve(&x, &y, l1).unwrap().norm();
            let b = ridge_solve(&x, &y, l1 + gap).unwrap().norm();
            prop_assert!(a >= b - 1e-12);
        }

        #[test]
        fn residual_is_ridge_loss(seed in 0u64..10_000, lambda in 1e-3f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_design(&mut rng, 20, 3);
            let y = random_vec(&mut rng, 20);
            let a = residual_operator(&x, lambda).unwrap();
            let w = ridge_solve(&x, &y, lambda).unwrap();
            let lhs = a.apply(&y).norm_squared();
            let rhs = empirical_loss(&x, &w, &y).unwrap().sum;
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
