//! Reference values from direct methods: sparse Cholesky (real shifts),
//! sparse LU (complex shifts) and a dense eigendecomposition (exponential).

use super::{PhiSpec, QuadratureError};
use crate::operators::SparseSym;
use crate::smallmat::{symmetrize, to_complex, CMat, Mat};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{c64, Side};
use num_complex::Complex64;
use std::sync::OnceLock;

/// Largest dimension handled by the sparse factorisations.
pub const SPARSE_LIMIT: usize = 200_000;
/// Largest dimension handled by the dense eigendecomposition.
pub const DENSE_LIMIT: usize = 3_000;

struct DenseEig {
    values: Vec<f64>,
    vectors: faer::Mat<f64>,
}

/// Direct-method evaluation of `Bᵀ φ(A) B`. The dense eigendecomposition
/// needed for the exponential is computed once and shared between calls.
pub struct ReferenceOracle<'a> {
    a: &'a SparseSym,
    eig: OnceLock<Result<DenseEig, QuadratureError>>,
}

fn to_faer(b: &Mat) -> faer::Mat<f64> {
    faer::Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)])
}

impl<'a> ReferenceOracle<'a> {
    pub fn new(a: &'a SparseSym) -> Self {
        ReferenceOracle {
            a,
            eig: OnceLock::new(),
        }
    }

    pub fn evaluate(&self, b: &Mat, phi: PhiSpec) -> Result<CMat, QuadratureError> {
        phi.validate()?;
        if b.nrows() != self.a.n() {
            return Err(QuadratureError::Oracle(format!(
                "block has {} rows, operator dimension is {}",
                b.nrows(),
                self.a.n()
            )));
        }
        match phi {
            PhiSpec::Resolvent(s) if s.im == 0.0 => self.resolvent_real(b, s.re).map(|x| to_complex(&x)),
            PhiSpec::Resolvent(s) => self.resolvent_complex(b, s),
            PhiSpec::Exponential(t) => self.exponential(b, t).map(|x| to_complex(&x)),
        }
    }

    fn check_sparse_size(&self) -> Result<(), QuadratureError> {
        let n = self.a.n();
        if n > SPARSE_LIMIT {
            return Err(QuadratureError::TooLarge { n, limit: SPARSE_LIMIT });
        }
        Ok(())
    }

    fn shifted_triplets<T>(&self, s: T, lift: impl Fn(f64) -> T) -> Vec<Triplet<usize, usize, T>>
    where
        T: Copy + std::ops::Add<Output = T>,
    {
        let n = self.a.n();
        self.a
            .triplets()
            .filter(|&(i, j, _)| i != j)
            .map(|(i, j, v)| Triplet::new(i, j, lift(v)))
            .chain((0..n).map(|i| Triplet::new(i, i, lift(self.a.get(i, i)) + s)))
            .collect()
    }

    fn resolvent_real(&self, b: &Mat, s: f64) -> Result<Mat, QuadratureError> {
        self.check_sparse_size()?;
        let n = self.a.n();
        let triplets = self.shifted_triplets(s, |v| v);
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| QuadratureError::Oracle(format!("{e:?}")))?;
        let llt = m
            .sp_cholesky(Side::Lower)
            .map_err(|e| QuadratureError::Oracle(format!("Cholesky failed: {e:?}")))?;
        let rhs = to_faer(b);
        let mut x = llt.solve(&rhs);
        // one step of iterative refinement
        let residual = &rhs - &m * &x;
        x += llt.solve(&residual);
        let btx = to_faer(&b.transpose()) * &x;
        let out = Mat::from_fn(b.ncols(), b.ncols(), |i, j| btx[(i, j)]);
        Ok(symmetrize(&out))
    }

    fn resolvent_complex(&self, b: &Mat, s: Complex64) -> Result<CMat, QuadratureError> {
        self.check_sparse_size()?;
        let n = self.a.n();
        let triplets = self.shifted_triplets(c64::new(s.re, s.im), |v| c64::new(v, 0.0));
        let m = SparseColMat::<usize, c64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| QuadratureError::Oracle(format!("{e:?}")))?;
        let lu = m
            .sp_lu()
            .map_err(|e| QuadratureError::Oracle(format!("LU failed: {e:?}")))?;
        let rhs = faer::Mat::<c64>::from_fn(n, b.ncols(), |i, j| c64::new(b[(i, j)], 0.0));
        let mut x = lu.solve(&rhs);
        let residual = &rhs - &m * &x;
        x += lu.solve(&residual);
        let p = b.ncols();
        Ok(CMat::from_fn(p, p, |i, j| {
            (0..n).fold(Complex64::new(0.0, 0.0), |acc, k| {
                let v = x[(k, j)];
                acc + Complex64::new(v.re, v.im) * b[(k, i)]
            })
        }))
    }

    fn dense_eig(&self) -> Result<&DenseEig, QuadratureError> {
        let n = self.a.n();
        if n > DENSE_LIMIT {
            return Err(QuadratureError::TooLarge { n, limit: DENSE_LIMIT });
        }
        self.eig
            .get_or_init(|| {
                let dense = to_faer(&self.a.to_dense());
                let evd = dense
                    .self_adjoint_eigen(Side::Lower)
                    .map_err(|e| QuadratureError::Oracle(format!("eigendecomposition failed: {e:?}")))?;
                let values = (0..n).map(|i| evd.S()[i]).collect();
                Ok(DenseEig {
                    values,
                    vectors: evd.U().to_owned(),
                })
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn exponential(&self, b: &Mat, t: f64) -> Result<Mat, QuadratureError> {
        let eig = self.dense_eig()?;
        let c = eig.vectors.transpose() * to_faer(b);
        let p = b.ncols();
        let mut out = Mat::zeros(p, p);
        for (k, lambda) in eig.values.iter().enumerate() {
            let e = (-t * lambda).exp();
            for i in 0..p {
                for j in 0..p {
                    out[(i, j)] += c[(k, i)] * e * c[(k, j)];
                }
            }
        }
        Ok(symmetrize(&out))
    }
}

/// One-shot form of [`ReferenceOracle::evaluate`].
pub fn reference_oracle(a: &SparseSym, b: &Mat, phi: PhiSpec) -> Result<CMat, QuadratureError> {
    ReferenceOracle::new(a).evaluate(b, phi)
}
