//! Dense linear-algebra kernels shared by every stage.
//!
//! Matrices are `nalgebra` column-major `DMatrix<f64>`; embeddings are stored
//! one point per row and linear maps act on row vectors (`y = x W`).

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

const SVD_MAX_ITER: usize = 20_000;
const EIGEN_MAX_ITER: usize = 20_000;
const SYMMETRY_TOL: f64 = 1e-10;

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
///
/// Singular values are non-increasing. Column signs are fixed so that the
/// largest-magnitude entry of every column of `u` is positive.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vector,
    pub v: Mat,
}

impl Svd {
    pub fn recompose(&self) -> Mat {
        &self.u * Mat::from_diagonal(&self.s) * self.v.transpose()
    }
}

pub fn svd(a: &Mat) -> Result<Svd> {
    ensure_finite(a, "svd")?;
    let dec = SVD::try_new(a.clone(), true, true, f64::EPSILON, SVD_MAX_ITER).ok_or_else(|| {
        Error::NumericalFailure {
            operation: "svd",
            condition: condition_estimate(a),
        }
    })?;
    let mut u = dec.u.expect("u requested");
    let mut v = dec.v_t.expect("v requested").transpose();
    let mut s = dec.singular_values;

    // try_new already orders, but a stable re-sort keeps the contract explicit.
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    if order.iter().enumerate().any(|(k, &i)| k != i) {
        u = Mat::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
        v = Mat::from_fn(v.nrows(), order.len(), |r, c| v[(r, order[c])]);
        s = Vector::from_fn(order.len(), |i, _| s[order[i]]);
    }

    for j in 0..s.len() {
        let col = u.column(j);
        let mut pivot = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(Svd { u, s, v })
}

/// Rough 2-norm condition number from the eigenvalues of `AᵀA`.
pub fn condition_estimate(a: &Mat) -> f64 {
    if a.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let gram = a.transpose() * a;
    match SymmetricEigen::try_new(gram, f64::EPSILON, EIGEN_MAX_ITER) {
        Some(eig) => {
            let max = eig.eigenvalues.max();
            let min = eig.eigenvalues.min();
            if min <= 0.0 {
                f64::INFINITY
            } else {
                (max / min).sqrt()
            }
        }
        None => f64::INFINITY,
    }
}

/// Eigenvalue floor used by the symmetric root functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clamp {
    /// Eigenvalues below this value are raised to it.
    Absolute(f64),
    /// Floor is this factor times the largest eigenvalue.
    RelativeToMax(f64),
}

impl Default for Clamp {
    fn default() -> Self {
        Clamp::RelativeToMax(1e-10)
    }
}

/// Result of a symmetric matrix power, with the number of eigenvalues that
/// had to be raised to the clamp floor (the rank defect seen by the caller).
#[derive(Debug, Clone)]
pub struct SymRoot {
    pub matrix: Mat,
    pub clamped: usize,
}

/// Symmetric eigendecomposition with a symmetry check. Eigenpairs are
/// returned in ascending eigenvalue order.
pub fn sym_eigen(a: &Mat) -> Result<(Vector, Mat)> {
    check_symmetric(a)?;
    let sym = symmetrize(a);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER).ok_or_else(|| {
        Error::NumericalFailure {
            operation: "symmetric eigendecomposition",
            condition: condition_estimate(a),
        }
    })?;
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .total_cmp(&eig.eigenvalues[j])
            .then(i.cmp(&j))
    });
    let values = Vector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let vectors = Mat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// `A^power` for symmetric `A` via eigendecomposition, eigenvalues clamped
/// from below.
pub fn sym_power(a: &Mat, power: f64, clamp: Clamp) -> Result<SymRoot> {
    ensure_finite(a, "symmetric power")?;
    let (values, vectors) = sym_eigen(a)?;
    let floor = match clamp {
        Clamp::Absolute(eps) => eps,
        Clamp::RelativeToMax(factor) => {
            let max = values.max();
            if max > 0.0 {
                factor * max
            } else {
                factor
            }
        }
    };
    if !(floor > 0.0) {
        return Err(Error::Contract(format!(
            "eigenvalue clamp must be positive, got {floor}"
        )));
    }
    let mut clamped = 0;
    let scaled = Vector::from_iterator(
        values.len(),
        values.iter().map(|&lambda| {
            let lambda = if lambda < floor {
                clamped += 1;
                floor
            } else {
                lambda
            };
            lambda.powf(power)
        }),
    );
    let matrix = &vectors * Mat::from_diagonal(&scaled) * vectors.transpose();
    Ok(SymRoot {
        matrix: symmetrize(&matrix),
        clamped,
    })
}

/// `A^{-1/2}` with eigenvalues below `eps` raised to `eps`.
pub fn sym_inv_sqrt(a: &Mat, eps: f64) -> Result<Mat> {
    Ok(sym_power(a, -0.5, Clamp::Absolute(eps))?.matrix)
}

/// `A^{1/2}` with eigenvalues below `eps` raised to `eps`.
pub fn sym_sqrt(a: &Mat, eps: f64) -> Result<Mat> {
    Ok(sym_power(a, 0.5, Clamp::Absolute(eps))?.matrix)
}

/// Square matrix acting on row vectors: `map(x) = x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap(pub Mat);

impl LinearMap {
    pub fn identity(d: usize) -> Self {
        LinearMap(Mat::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        LinearMap(Mat::zeros(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    /// Maps every row of `x`.
    pub fn apply(&self, x: &Mat) -> Mat {
        x * &self.0
    }

    pub fn transpose(&self) -> Self {
        LinearMap(self.0.transpose())
    }

    pub fn inverse(&self) -> Result<Self> {
        self.0
            .clone()
            .try_inverse()
            .map(LinearMap)
            .ok_or_else(|| Error::NumericalFailure {
                operation: "linear map inverse",
                condition: condition_estimate(&self.0),
            })
    }

    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

/// `‖A Aᵀ − I‖_F`.
pub fn orthogonality_defect(a: &Mat) -> f64 {
    let mut prod = a * a.transpose();
    for i in 0..prod.nrows() {
        prod[(i, i)] -= 1.0;
    }
    prod.norm()
}

/// `Xᵀ X`.
pub fn gram(x: &Mat) -> Mat {
    x.tr_mul(x)
}

pub fn rotation2(theta: f64) -> Mat {
    let (s, c) = theta.sin_cos();
    Mat::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with
/// the diagonal sign correction). Determinant may be ±1.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Mat {
    let g = gaussian_matrix(d, d, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random rotation (determinant +1).
pub fn random_rotation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Mat {
    let mut q = random_orthogonal(d, rng);
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Matrix of independent standard normal entries, filled row by row.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

pub(crate) fn ensure_finite(a: &Mat, operation: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("input to {operation}")))
    }
}

fn check_symmetric(a: &Mat) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Contract(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax().max(1.0);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Contract(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    a[(i, j)],
                    a[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}
