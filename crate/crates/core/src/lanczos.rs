//! Block Lanczos recurrence.
//!
//! Starting from an orthonormal `n x p` block `Q_1 = B`, the recurrence
//!
//! ```text
//! W = A Q_1,  α_1 = Q_1ᵀ W,  W ← W − Q_1 α_1
//! for i = 2..m:
//!     Q_i β_i = W                  (thin QR, diag(β_i) ≥ 0)
//!     W = A Q_i − Q_{i−1} β_iᵀ
//!     α_i = Q_iᵀ W
//!     W ← W − Q_i α_i
//! ```
//!
//! produces the block-tridiagonal `T_m` with diagonal blocks `α_i` and
//! sub-diagonal blocks `β_i`. Without reorthogonalisation only two blocks of
//! length `n` are kept alive.

use crate::operators::{norm_estimate, SymOperator};
use crate::smallmat::{self, block_tridiag_solve, norm2, qr_thin, symmetrize, CMat, Mat, SmallMatError};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LanczosError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("at least one Lanczos step is required")]
    NoSteps,
    #[error("starting block is rank deficient (breakdown at step 1)")]
    RankDeficientStart,
    #[error("malformed block-tridiagonal matrix: {0}")]
    Malformed(String),
}

/// Block-tridiagonal Lanczos matrix `T_m`: diagonal blocks `α_1..α_m` and
/// sub-diagonal blocks `β_2..β_m` (stored from index 0).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    p: usize,
    alphas: Vec<Mat>,
    betas: Vec<Mat>,
}

impl BlockTridiagonal {
    pub fn new(alphas: Vec<Mat>, betas: Vec<Mat>) -> Result<Self, LanczosError> {
        let Some(first) = alphas.first() else {
            return Err(LanczosError::Malformed("no diagonal blocks".into()));
        };
        let p = first.nrows();
        if betas.len() + 1 != alphas.len() {
            return Err(LanczosError::Malformed(format!(
                "{} diagonal blocks need {} sub-diagonal blocks, got {}",
                alphas.len(),
                alphas.len() - 1,
                betas.len()
            )));
        }
        if alphas.iter().chain(betas.iter()).any(|b| b.shape() != (p, p)) {
            return Err(LanczosError::Malformed(format!("all blocks must be {p}x{p}")));
        }
        Ok(BlockTridiagonal { p, alphas, betas })
    }

    /// Scalar tridiagonal matrix from its diagonal and off-diagonal.
    pub fn scalar(diag: &[f64], off: &[f64]) -> Result<Self, LanczosError> {
        let one = |x: f64| Mat::from_element(1, 1, x);
        Self::new(diag.iter().map(|&x| one(x)).collect(), off.iter().map(|&x| one(x)).collect())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of block steps `m`.
    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[Mat] {
        &self.alphas
    }

    /// `β_2..β_m`.
    pub fn betas(&self) -> &[Mat] {
        &self.betas
    }

    /// Leading `m`-step principal submatrix `T_m`.
    pub fn prefix(&self, m: usize) -> Self {
        assert!(m >= 1 && m <= self.steps(), "prefix {m} of a {}-step matrix", self.steps());
        BlockTridiagonal {
            p: self.p,
            alphas: self.alphas[..m].to_vec(),
            betas: self.betas[..m - 1].to_vec(),
        }
    }

    /// Same matrix with the last diagonal block replaced.
    pub fn with_last_alpha(&self, alpha: Mat) -> Self {
        let mut out = self.clone();
        *out.alphas.last_mut().expect("non-empty") = alpha;
        out
    }

    /// Dense `mp x mp` layout.
    pub fn assemble(&self) -> Mat {
        let (p, m) = (self.p, self.steps());
        let mut t = Mat::zeros(m * p, m * p);
        for (i, a) in self.alphas.iter().enumerate() {
            t.view_mut((i * p, i * p), (p, p)).copy_from(a);
        }
        for (i, b) in self.betas.iter().enumerate() {
            t.view_mut(((i + 1) * p, i * p), (p, p)).copy_from(b);
            t.view_mut((i * p, (i + 1) * p), (p, p)).copy_from(&b.transpose());
        }
        t
    }

    /// Solves `(T + sI) X = rhs`.
    pub fn solve_shifted(&self, s: Complex64, rhs: &CMat) -> Result<CMat, SmallMatError> {
        block_tridiag_solve(&self.alphas, &self.betas, s, rhs)
    }

    /// `E_1ᵀ (T + sI)^{-1} E_1`.
    pub fn resolvent_corner(&self, s: Complex64) -> Result<CMat, SmallMatError> {
        let (p, m) = (self.p, self.steps());
        let mut e1 = CMat::zeros(m * p, p);
        for k in 0..p {
            e1[(k, k)] = Complex64::new(1.0, 0.0);
        }
        let x = self.solve_shifted(s, &e1)?;
        Ok(x.rows(0, p).into_owned())
    }
}

/// Free-function form of [`BlockTridiagonal::assemble`].
pub fn assemble(t: &BlockTridiagonal) -> Mat {
    t.assemble()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosOptions {
    /// Full two-pass Gram–Schmidt against all previous blocks.
    pub reorth: bool,
    /// Breakdown when a diagonal entry of `β_i` falls to
    /// `deflation_tol · ‖A‖_est` or below.
    pub deflation_tol: f64,
    /// Power iterations used for `‖A‖_est`.
    pub norm_iters: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            reorth: false,
            deflation_tol: 1e-12,
            norm_iters: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LanczosStatus {
    Completed,
    /// The new block lost rank at this (1-based) step; the returned matrix
    /// holds the `step − 1` completed steps.
    Breakdown { step: usize },
}

#[derive(Debug, Clone)]
pub struct LanczosState {
    /// `Q_{m−1}` (absent when `m = 1`).
    pub q_prev: Option<Mat>,
    /// `Q_m`.
    pub q_curr: Mat,
    /// The final `W = Q_{m+1} β_{m+1}`, so `A 𝐐_m = 𝐐_m T_m + W E_mᵀ`.
    pub residual: Mat,
    pub steps: usize,
    pub status: LanczosStatus,
    /// `[Q_1, …, Q_m]`, kept only with reorthogonalisation.
    pub basis: Option<Mat>,
    pub norm_estimate: f64,
    /// `R` with `B = Q_1 R` when the starting block had to be orthonormalised.
    pub change_of_basis: Option<Mat>,
}

fn project_out(blocks: &[Mat], w: &mut Mat) {
    // two passes of classical Gram–Schmidt
    for _ in 0..2 {
        for q in blocks {
            let c = q.transpose() * &*w;
            *w -= q * c;
        }
    }
}

/// Runs up to `m` block Lanczos steps from `b`.
///
/// A breakdown is reported through [`LanczosState::status`]; the coefficients
/// of all completed steps are returned.
pub fn lanczos_run<A: SymOperator + ?Sized>(
    a: &A,
    b: &Mat,
    m: usize,
    opts: LanczosOptions,
) -> Result<(BlockTridiagonal, LanczosState), LanczosError> {
    let (n, p) = b.shape();
    if n != a.dim() {
        return Err(LanczosError::DimensionMismatch(format!(
            "operator of dimension {} with a starting block of {n} rows",
            a.dim()
        )));
    }
    if p == 0 || m == 0 {
        return Err(LanczosError::NoSteps);
    }
    let norm_est = norm_estimate(a, opts.norm_iters).max(f64::MIN_POSITIVE);
    let tol = opts.deflation_tol * norm_est;

    let orthonormal = norm2(&(b.transpose() * b - Mat::identity(p, p))) <= 1e-10;
    let (q1, change_of_basis) = if orthonormal {
        (b.clone(), None)
    } else {
        let (q, r) = qr_thin(b, 1e-12 * b.norm()).map_err(|_| LanczosError::RankDeficientStart)?;
        (q, Some(r))
    };

    let mut basis: Vec<Mat> = Vec::new();
    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m.saturating_sub(1));

    let mut w = a.apply(&q1).map_err(|e| LanczosError::DimensionMismatch(e.to_string()))?;
    let alpha = symmetrize(&(q1.transpose() * &w));
    w -= &q1 * &alpha;
    alphas.push(alpha);
    if opts.reorth {
        basis.push(q1.clone());
        project_out(&basis, &mut w);
    }

    let mut q_prev: Option<Mat> = None;
    let mut q_curr = q1;
    let mut status = LanczosStatus::Completed;
    let mut aq = Mat::zeros(n, p);
    for step in 2..=m {
        let (q_next, beta) = match qr_thin(&w, tol) {
            Ok(qr) => qr,
            Err(SmallMatError::RankDeficient { .. }) => {
                status = LanczosStatus::Breakdown { step };
                break;
            }
            Err(e) => unreachable!("thin QR only reports rank deficiency: {e}"),
        };
        a.apply_to(&q_next, &mut aq);
        w.copy_from(&aq);
        w -= &q_curr * beta.transpose();
        let alpha = symmetrize(&(q_next.transpose() * &w));
        w -= &q_next * &alpha;
        alphas.push(alpha);
        betas.push(beta);
        if opts.reorth {
            basis.push(q_next.clone());
            project_out(&basis, &mut w);
        }
        q_prev = Some(std::mem::replace(&mut q_curr, q_next));
    }

    let steps = alphas.len();
    let basis = opts.reorth.then(|| {
        let mut full = Mat::zeros(n, steps * p);
        for (i, q) in basis.iter().enumerate() {
            full.columns_mut(i * p, p).copy_from(q);
        }
        full
    });
    let tri = BlockTridiagonal { p, alphas, betas };
    let state = LanczosState {
        q_prev,
        q_curr,
        residual: w,
        steps,
        status,
        basis,
        norm_estimate: norm_est,
        change_of_basis,
    };
    Ok((tri, state))
}

/// `‖A 𝐐_m − 𝐐_m T_m − W E_mᵀ‖₂` for a run with a retained basis.
pub fn three_term_residual<A: SymOperator + ?Sized>(
    a: &A,
    tri: &BlockTridiagonal,
    state: &LanczosState,
) -> Option<f64> {
    let basis = state.basis.as_ref()?;
    let (p, m) = (tri.p(), tri.steps());
    let aq = a.apply(basis).ok()?;
    let mut r = aq - basis * tri.assemble();
    let mut tail = r.columns_mut((m - 1) * p, p);
    tail -= &state.residual;
    Some(smallmat::norm2(&r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::SparseSym;
    use crate::smallmat::sym_eig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(&(&g * g.transpose() / n as f64 + Mat::identity(n, n) * 0.05))
    }

    fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Mat {
        let g = Mat::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        qr_thin(&g, 0.0).unwrap().0
    }

    #[test]
    fn two_by_two_hand_example() {
        let a = SparseSym::from_diagonal(&[1.0, 3.0]);
        let b = Mat::from_column_slice(2, 1, &[1.0, 1.0]) / 2f64.sqrt();
        let (t, state) = lanczos_run(&a, &b, 2, LanczosOptions::default()).unwrap();
        assert_eq!(state.status, LanczosStatus::Completed);
        assert!((t.alphas()[0][(0, 0)] - 2.0).abs() < 1e-14);
        assert!((t.betas()[0][(0, 0)] - 1.0).abs() < 1e-14);
        assert!((t.alphas()[1][(0, 0)] - 2.0).abs() < 1e-14);
        let q2 = &state.q_curr;
        assert!((q2[(0, 0)] + 1.0 / 2f64.sqrt()).abs() < 1e-14);
        assert!((q2[(1, 0)] - 1.0 / 2f64.sqrt()).abs() < 1e-14);
        let dense = t.assemble();
        assert!((dense - Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).norm() < 1e-14);
    }

    #[test]
    fn identity_breaks_down_at_step_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = SparseSym::identity(12);
        let b = random_orthonormal(&mut rng, 12, 3);
        let (t, state) = lanczos_run(&a, &b, 4, LanczosOptions::default()).unwrap();
        assert_eq!(state.status, LanczosStatus::Breakdown { step: 2 });
        assert_eq!(t.steps(), 1);
        assert!((t.alphas()[0].clone() - Mat::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn exhausted_space_breaks_down() {
        let a = SparseSym::from_diagonal(&[1.0, 3.0]);
        let b = Mat::from_column_slice(2, 1, &[1.0, 1.0]) / 2f64.sqrt();
        let (t, state) = lanczos_run(&a, &b, 3, LanczosOptions::default()).unwrap();
        assert_eq!(state.status, LanczosStatus::Breakdown { step: 3 });
        assert_eq!(t.steps(), 2);
    }

    #[test]
    fn rank_deficient_start_is_an_error() {
        let a = SparseSym::identity(4);
        let b = Mat::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            lanczos_run(&a, &b, 2, LanczosOptions::default()).unwrap_err(),
            LanczosError::RankDeficientStart
        );
        assert_eq!(lanczos_run(&a, &b, 0, LanczosOptions::default()).unwrap_err(), LanczosError::NoSteps);
    }

    #[test]
    fn non_orthonormal_start_records_change_of_basis() {
        let a = SparseSym::from_diagonal(&[1.0, 2.0, 3.0, 4.0]);
        let b = Mat::from_row_slice(4, 2, &[2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0]);
        let (_, state) = lanczos_run(&a, &b, 1, LanczosOptions::default()).unwrap();
        let r = state.change_of_basis.unwrap();
        assert!((&state.q_curr * r - &b).norm() < 1e-14);
    }

    #[test]
    fn assemble_layout() {
        let t = BlockTridiagonal::scalar(&[2.0], &[]).unwrap();
        assert_eq!(t.assemble(), Mat::from_element(1, 1, 2.0));
        let t = BlockTridiagonal::scalar(&[2.0, 2.0], &[1.0]).unwrap();
        assert_eq!(assemble(&t), Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let blocks = |rng: &mut ChaCha8Rng, k| (0..k).map(|_| Mat::from_fn(2, 2, |_, _| rng.random::<f64>())).collect::<Vec<_>>();
        let alphas = blocks(&mut rng, 4).into_iter().map(|a| symmetrize(&a)).collect();
        let t = BlockTridiagonal::new(alphas, blocks(&mut rng, 3)).unwrap();
        let d = t.assemble();
        assert_eq!(d, d.transpose());
        assert!(BlockTridiagonal::new(vec![Mat::zeros(2, 2)], vec![Mat::zeros(2, 2)]).is_err());
    }

    #[test]
    fn ritz_values_lie_in_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (n, p, m) in [(40, 1, 10), (60, 2, 12), (80, 3, 15)] {
            let a = random_spd(&mut rng, n);
            let spectrum = sym_eig(&a).unwrap();
            let b = random_orthonormal(&mut rng, n, p);
            let (t, _) = lanczos_run(&a, &b, m, LanczosOptions::default()).unwrap();
            let ritz = sym_eig(&t.assemble()).unwrap();
            let slack = 1e-10 * spectrum.max();
            assert!(ritz.min() >= spectrum.min() - slack);
            assert!(ritz.max() <= spectrum.max() + slack);
        }
    }

    #[test]
    fn three_term_relation_with_reorth() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = random_spd(&mut rng, 150);
        let b = random_orthonormal(&mut rng, 150, 3);
        let opts = LanczosOptions {
            reorth: true,
            ..Default::default()
        };
        let (t, state) = lanczos_run(&a, &b, 40, opts).unwrap();
        let res = three_term_residual(&a, &t, &state).unwrap();
        assert!(res <= 1e-8 * state.norm_estimate, "residual {res}");
        let q = state.basis.as_ref().unwrap();
        assert!(norm2(&(q.transpose() * q - Mat::identity(120, 120))) <= 1e-8);
    }

    #[test]
    fn shift_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let a = random_spd(&mut rng, 50);
        let b = random_orthonormal(&mut rng, 50, 2);
        let c = 0.75;
        let shifted = &a + Mat::identity(50, 50) * c;
        let (t0, _) = lanczos_run(&a, &b, 8, LanczosOptions::default()).unwrap();
        let (t1, _) = lanczos_run(&shifted, &b, 8, LanczosOptions::default()).unwrap();
        for (x, y) in t0.alphas().iter().zip(t1.alphas()) {
            assert!(norm2(&(y - x - Mat::identity(2, 2) * c)) <= 1e-10);
        }
        for (x, y) in t0.betas().iter().zip(t1.betas()) {
            assert!(norm2(&(y - x)) <= 1e-10);
        }
    }

    #[test]
    fn beta_blocks_are_upper_triangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = random_spd(&mut rng, 30);
        let b = random_orthonormal(&mut rng, 30, 3);
        let (t, _) = lanczos_run(&a, &b, 6, LanczosOptions::default()).unwrap();
        for beta in t.betas() {
            for j in 0..3 {
                assert!(beta[(j, j)] > 0.0);
                for i in j + 1..3 {
                    assert_eq!(beta[(i, j)], 0.0);
                }
            }
        }
        for alpha in t.alphas() {
            assert_eq!(alpha, &alpha.transpose());
        }
    }
}
