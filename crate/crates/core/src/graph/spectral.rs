use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold below which `pseudoinverse` treats an eigenvalue as zero.
pub const PSEUDOINVERSE_CLAMP: f64 = 1e-9;

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
const SIGN_TOL: f64 = 1e-10;
const DEGENERACY_TOL: f64 = 1e-9;

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
///
/// Column `i` of `eigenvectors` pairs with `eigenvalues[i]`. Each column is
/// oriented so its first entry with magnitude above `1e-10` is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    #[serde(with = "matrix_rows")]
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    /// `V diag(f(lambda)) V^T`.
    pub fn apply_function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = DVector::from_iterator(self.dim(), self.eigenvalues.iter().map(|&l| f(l)));
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&d);
        scaled * self.eigenvectors.transpose()
    }

    /// `V Lambda V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.apply_function(|l| l)
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// The input is symmetrized first; asymmetry above `1e-12 * ||M||_F` is
/// rejected. Iteration stops once the off-diagonal Frobenius norm drops to
/// `1e-12 * ||M||_F`.
pub fn spectral_decomp(m: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::NotSquare {
            rows: n,
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let norm = m.norm();
    let asymmetry = (m - m.transpose()).norm();
    if asymmetry > SYMMETRY_TOL * norm {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);

    let target = OFF_DIAGONAL_TOL * norm;
    let mut converged = off_diagonal_norm(&a) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        converged = off_diagonal_norm(&a) <= target;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).into_owned();
        if let Some(first) = col.iter().find(|x| x.abs() > SIGN_TOL) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation zeroing `a[(p, q)]`, accumulated into `v`.
fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.nrows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix (a connected
/// Laplacian): eigenvalues at or below `1e-9 * lambda_max` are zeroed.
pub fn pseudoinverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let spec = spectral_decomp(l)?;
    let lambda_max = spec.eigenvalues.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let clamp = PSEUDOINVERSE_CLAMP * lambda_max;
    let near_zero = spec.eigenvalues.iter().filter(|x| x.abs() <= clamp).count();
    if near_zero > 1 {
        return Err(Error::DisconnectedGraph { near_zero });
    }
    Ok(spec.apply_function(|x| if x.abs() <= clamp { 0.0 } else { 1.0 / x }))
}

/// Second-smallest eigenvalue of a Laplacian and its unit eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct FiedlerPair {
    pub lambda2: f64,
    pub v2: DVector<f64>,
}

pub fn fiedler_pair(l: &DMatrix<f64>) -> Result<FiedlerPair> {
    let n = l.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "Fiedler pair needs at least two nodes".into(),
        ));
    }
    let spec = spectral_decomp(l)?;
    let lambda_max = spec.eigenvalues[n - 1].abs();
    let lambda2 = spec.eigenvalues[1];
    if lambda2 <= PSEUDOINVERSE_CLAMP * lambda_max {
        return Err(Error::DisconnectedGraph { near_zero: 2 });
    }
    if n >= 3 {
        let lambda3 = spec.eigenvalues[2];
        if (lambda3 - lambda2).abs() <= DEGENERACY_TOL * lambda_max.max(1.0) {
            return Err(Error::DegenerateFiedler { lambda2, lambda3 });
        }
    }
    Ok(FiedlerPair {
        lambda2,
        v2: spec.vector(1),
    })
}

/// Orthonormal Helmert contrasts: `(n-1) x n` with `Q Q^T = I` and
/// `Q^T Q = I - 11^T/n`.
///
/// Row `k` (1-based) is `(1, ..., 1, -k, 0, ..., 0) / sqrt(k (k + 1))` with
/// `k` leading ones.
pub fn projection_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(
            "projection matrix needs n >= 2".into(),
        ));
    }
    let mut q = DMatrix::zeros(n - 1, n);
    for k in 1..n {
        let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for j in 0..k {
            q[(k - 1, j)] = scale;
        }
        q[(k - 1, k)] = -(k as f64) * scale;
    }
    Ok(q)
}

pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_row_iterator(
            nrows,
            ncols,
            rows.into_iter().flatten(),
        ))
    }
}
