use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Diagonal jitter on unregularised normal equations.
pub const JITTER: f64 = 1e-10;
pub const BISECTION_MAX_ITER: usize = 100;
/// Stop when `| ||w|| - B | <= BISECTION_REL_TOL * B`.
pub const BISECTION_REL_TOL: f64 = 1e-8;

/// Second-moment matrix `G = (1/n) X^T X` with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct Gram {
    matrix: DMatrix<f64>,
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// Minimiser of `c - 2 w^T b + w^T G w` over `||w|| <= B`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSolution {
    pub w: DVector<f64>,
    /// Multiplier of the active constraint (0 inside the ball).
    pub lambda: f64,
    /// Mean loss at `w`.
    pub loss: f64,
    pub on_boundary: bool,
}

impl Gram {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        Self {
            matrix: sym,
            values: eig.eigenvalues.map(|v| v.max(0.0)),
            vectors: eig.eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    /// `(G + lambda I)^{-1} b`.
    pub fn ridge(&self, b: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let beta = self.vectors.tr_mul(b);
        let scaled = DVector::from_iterator(
            beta.len(),
            beta.iter()
                .zip(self.values.iter())
                .map(|(c, v)| c / (v + lambda)),
        );
        &self.vectors * scaled
    }

    /// `(G + lambda I)^{-1}` as a dense matrix.
    pub fn ridge_inverse(&self, lambda: f64) -> DMatrix<f64> {
        let diag = DMatrix::from_diagonal(&self.values.map(|v| 1.0 / (v + lambda)));
        &self.vectors * diag * self.vectors.transpose()
    }

    /// `c - 2 w^T b + w^T G w`.
    pub fn loss(&self, w: &DVector<f64>, b: &DVector<f64>, c: f64) -> f64 {
        c - 2.0 * w.dot(b) + w.dot(&(&self.matrix * w))
    }

    fn norm_at(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        beta.iter()
            .zip(self.values.iter())
            .map(|(c, v)| (c / (v + lambda)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Ball-constrained least squares on the ridge path.
    ///
    /// Solves the jittered normal equations; if the solution leaves the ball,
    /// bisects the ridge parameter until the norm matches `radius`.
    pub fn solve_ball(&self, b: &DVector<f64>, c: f64, radius: f64) -> BallSolution {
        let beta = self.vectors.tr_mul(b);
        let inside = self.norm_at(&beta, JITTER);
        if inside <= radius {
            let w = self.ridge(b, JITTER);
            let loss = self.loss(&w, b, c);
            return BallSolution {
                w,
                lambda: 0.0,
                loss,
                on_boundary: false,
            };
        }
        let (mut lo, mut hi) = (0.0, b.norm() / radius);
        let mut lambda = hi;
        for _ in 0..BISECTION_MAX_ITER {
            lambda = 0.5 * (lo + hi);
            let norm = self.norm_at(&beta, lambda);
            if (norm - radius).abs() <= BISECTION_REL_TOL * radius {
                break;
            }
            if norm > radius {
                lo = lambda;
            } else {
                hi = lambda;
            }
        }
        let mut w = self.ridge(b, lambda);
        let norm = w.norm();
        if norm > radius {
            w *= radius / norm;
        }
        let loss = self.loss(&w, b, c);
        BallSolution {
            w,
            lambda,
            loss,
            on_boundary: true,
        }
    }
}
