//! Dense kernels for the small matrices that show up in block quadrature:
//! `p x p` coefficient blocks and assembled `mp x mp` block-tridiagonal
//! matrices.
//!
//! Everything here is a pure function of its inputs. Real data lives in
//! [`Mat`]; resolvent values at complex shifts live in [`CMat`].

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

/// Real dense matrix, column-major.
pub type Mat = DMatrix<f64>;
/// Complex dense matrix, used for resolvent values at complex shifts.
pub type CMat = DMatrix<Complex64>;

/// Relative asymmetry accepted by [`sym_eig`] and friends.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues at or below `SPD_LOG_TOL * lambda_max` make a matrix log undefined.
pub const SPD_LOG_TOL: f64 = 1e-14;
/// Smallest singular value of a pivot block, relative to the matrix scale,
/// below which a shifted block-tridiagonal solve is declared singular.
pub const PIVOT_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmallMatError {
    #[error("rank deficient block: |R[{column},{column}]| = {magnitude:e} is below the deflation tolerance")]
    RankDeficient { column: usize, magnitude: f64 },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("shifted block-tridiagonal matrix is singular at block {block}")]
    SingularShift { block: usize },
    #[error("symmetric eigensolver failed to converge")]
    EigFailure,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Eigendecomposition of a symmetric matrix with ascending eigenvalues.
///
/// Each eigenvector is normalised so that its first component of magnitude
/// above `1e-12` is positive, which makes the factorisation reproducible.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat,
}

impl SymEig {
    /// `Q f(Λ) Qᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let q = &self.eigenvectors;
        let mut scaled = q.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let fj = f(lambda);
            scaled.column_mut(j).scale_mut(fj);
        }
        let out = scaled * q.transpose();
        symmetrize(&out)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &CMat) -> Mat {
    m.map(|z| z.re)
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Relative asymmetry `‖M − Mᵀ‖_max / ‖M‖_max` (zero for the zero matrix).
pub fn asymmetry(m: &Mat) -> f64 {
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    max_abs(&(m - m.transpose())) / scale
}

/// Spectral norm of a real matrix.
pub fn norm2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Spectral norm of a complex matrix.
pub fn norm2_c(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Thin QR factorisation `W = QR` with `diag(R) ≥ 0`.
///
/// Fails with [`SmallMatError::RankDeficient`] as soon as a diagonal entry of
/// `R` has magnitude at or below `deflation_tol` (an absolute threshold; the
/// caller scales it by its operator norm estimate).
pub fn qr_thin(w: &Mat, deflation_tol: f64) -> Result<(Mat, Mat), SmallMatError> {
    let (n, p) = w.shape();
    if p == 0 {
        return Ok((Mat::zeros(n, 0), Mat::zeros(0, 0)));
    }
    if n < p {
        return Err(SmallMatError::RankDeficient {
            column: n,
            magnitude: 0.0,
        });
    }
    let qr = w.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    for j in 0..p {
        let magnitude = r[(j, j)].abs();
        if magnitude <= deflation_tol || !magnitude.is_finite() {
            return Err(SmallMatError::RankDeficient { column: j, magnitude });
        }
    }
    Ok((q, r))
}

/// Symmetric eigendecomposition, ascending.
pub fn sym_eig(m: &Mat) -> Result<SymEig, SmallMatError> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(SmallMatError::DimensionMismatch(format!(
            "sym_eig needs a square matrix, got {rows}x{cols}"
        )));
    }
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(SmallMatError::NonSymmetric { asymmetry: asym });
    }
    if rows == 0 {
        return Ok(SymEig {
            eigenvalues: Vec::new(),
            eigenvectors: Mat::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 0)
        .ok_or(SmallMatError::EigFailure)?;
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = Mat::zeros(rows, rows);
    for (j, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        eigenvectors.set_column(j, &v);
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// `Q f(Λ) Qᵀ` for symmetric `M`.
pub fn spd_fn(m: &Mat, f: impl Fn(f64) -> f64) -> Result<Mat, SmallMatError> {
    Ok(sym_eig(m)?.map(f))
}

/// Principal logarithm of an SPD matrix.
pub fn spd_log(m: &Mat) -> Result<Mat, SmallMatError> {
    let eig = sym_eig(m)?;
    let lmax = eig.max();
    let lmin = eig.min();
    if lmax <= 0.0 || lmin <= SPD_LOG_TOL * lmax {
        return Err(SmallMatError::NotPositiveDefinite {
            min_eigenvalue: lmin,
        });
    }
    Ok(eig.map(f64::ln))
}

/// Matrix exponential of a symmetric matrix.
pub fn sym_exp(m: &Mat) -> Result<Mat, SmallMatError> {
    spd_fn(m, f64::exp)
}

/// Inverse of an SPD matrix through its Cholesky factor; `None` if the
/// factorisation fails.
pub fn spd_inverse(m: &Mat) -> Option<Mat> {
    let chol = symmetrize(m).cholesky()?;
    Some(symmetrize(&chol.inverse()))
}

/// Loewner comparison `G1 ⪰ G2` up to a relative slack:
/// `λ_min(G1 − G2) ≥ −tol · max(1, ‖G1‖₂, ‖G2‖₂)`.
pub fn loewner_geq(g1: &Mat, g2: &Mat, tol: f64) -> bool {
    assert_eq!(g1.shape(), g2.shape(), "loewner_geq: shape mismatch");
    let diff = symmetrize(&(g1 - g2));
    let Ok(eig) = sym_eig(&diff) else {
        return false;
    };
    let scale = 1.0_f64.max(norm2(g1)).max(norm2(g2));
    eig.min() >= -tol * scale
}

/// Solves `(T + sI) X = rhs` for the block-tridiagonal `T` with diagonal
/// blocks `diag[0..m]` and sub-diagonal blocks `sub[0..m-1]` (block `(i+1, i)`;
/// the super-diagonal holds their transposes).
///
/// Block LU without pivoting across blocks: `O(m p³)` work.
pub fn block_tridiag_solve(
    diag: &[Mat],
    sub: &[Mat],
    s: Complex64,
    rhs: &CMat,
) -> Result<CMat, SmallMatError> {
    let m = diag.len();
    if m == 0 {
        return Err(SmallMatError::DimensionMismatch("empty block-tridiagonal matrix".into()));
    }
    let p = diag[0].nrows();
    if sub.len() + 1 != m {
        return Err(SmallMatError::DimensionMismatch(format!(
            "{} diagonal blocks need {} sub-diagonal blocks, got {}",
            m,
            m - 1,
            sub.len()
        )));
    }
    if rhs.nrows() != m * p {
        return Err(SmallMatError::DimensionMismatch(format!(
            "rhs has {} rows, expected {}",
            rhs.nrows(),
            m * p
        )));
    }
    let k = rhs.ncols();
    let scale = diag
        .iter()
        .chain(sub.iter())
        .map(max_abs)
        .fold(0.0_f64, f64::max)
        + s.norm();
    let tol = PIVOT_TOL * scale.max(f64::MIN_POSITIVE);

    let shift = CMat::identity(p, p) * s;
    // Forward elimination: pivots D_i and transformed right-hand sides y_i.
    let mut pivots: Vec<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>> =
        Vec::with_capacity(m);
    let mut ys: Vec<CMat> = Vec::with_capacity(m);
    for i in 0..m {
        let mut d = to_complex(&diag[i]) + &shift;
        let mut y = rhs.rows(i * p, p).into_owned();
        if i > 0 {
            let b = to_complex(&sub[i - 1]);
            let prev = &pivots[i - 1];
            let bt = b.transpose();
            let dinv_bt = prev
                .solve(&bt)
                .ok_or(SmallMatError::SingularShift { block: i - 1 })?;
            let dinv_y = prev
                .solve(&ys[i - 1])
                .ok_or(SmallMatError::SingularShift { block: i - 1 })?;
            d -= &b * dinv_bt;
            y -= &b * dinv_y;
        }
        let smin = d.clone().svd(false, false).singular_values.min();
        if !(smin > tol) {
            return Err(SmallMatError::SingularShift { block: i });
        }
        pivots.push(d.lu());
        ys.push(y);
    }
    // Back substitution.
    let mut x = CMat::zeros(m * p, k);
    let mut next: Option<CMat> = None;
    for i in (0..m).rev() {
        let mut y = ys[i].clone();
        if let Some(xn) = &next {
            let bt = to_complex(&sub[i]).transpose();
            y -= bt * xn;
        }
        let xi = pivots[i]
            .solve(&y)
            .ok_or(SmallMatError::SingularShift { block: i })?;
        x.rows_mut(i * p, p).copy_from(&xi);
        next = Some(xi);
    }
    Ok(x)
}
