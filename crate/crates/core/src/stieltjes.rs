//! Stieltjes parameters of a Lanczos matrix and the matrix S-fraction.
//!
//! A breakdown-free block-tridiagonal `T_m` admits the block `LDLᵀ`
//! parameterisation
//!
//! ```text
//! α_1 = γ_1^{-1}
//! α_i = κ̂_i^{-T} (γ_{i−1}^{-1} + γ_i^{-1}) κ̂_i^{-1}
//! β_i = κ̂_i^{-T} γ_{i−1}^{-1} κ̂_{i−1}^{-1}           (κ̂_1 = I)
//! ```
//!
//! with s.p.d. `γ_i` and `γ̂_i = κ̂_iᵀ κ̂_i`. In these parameters
//! `E_1ᵀ (T_m + sI)^{-1} E_1` is the top floor `C_1` of
//!
//! ```text
//! C_i = [ s γ̂_i + (γ_i + C_{i+1})^{-1} ]^{-1},   C_{m+1} = 0,
//! ```
//!
//! and dropping the last `γ_m` floor (`C_{m+1} = ∞`) gives the Gauss-Radau
//! value, which corresponds to replacing `α_m` by
//! `α̃_m = κ̂_m^{-T} γ_{m−1}^{-1} κ̂_m^{-1}`.

use crate::lanczos::BlockTridiagonal;
use crate::smallmat::{max_abs, norm2, spd_inverse, symmetrize, Mat};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StieltjesError {
    #[error("not a Stieltjes fraction at floor {index}: {reason}")]
    NotStieltjes { index: usize, reason: String },
    #[error("S-fraction evaluation needs a positive shift, got {0}")]
    NonPositiveShift(f64),
    #[error("parameters describe {params} steps but the matrix has {matrix}")]
    StepMismatch { params: usize, matrix: usize },
}

fn not_stieltjes(index: usize, reason: &str) -> StieltjesError {
    StieltjesError::NotStieltjes {
        index,
        reason: reason.to_string(),
    }
}

/// Stieltjes parameters `γ_i`, `κ̂_i`, `γ̂_i` for `i = 1..m` (stored from 0).
#[derive(Debug, Clone)]
pub struct StieltjesParams {
    gammas: Vec<Mat>,
    gamma_invs: Vec<Mat>,
    kappa_hats: Vec<Mat>,
    kappa_hat_invs: Vec<Mat>,
    gamma_hats: Vec<Mat>,
}

impl StieltjesParams {
    pub fn steps(&self) -> usize {
        self.gammas.len()
    }

    pub fn p(&self) -> usize {
        self.gammas[0].nrows()
    }

    pub fn gammas(&self) -> &[Mat] {
        &self.gammas
    }

    pub fn gamma_hats(&self) -> &[Mat] {
        &self.gamma_hats
    }

    pub fn kappa_hats(&self) -> &[Mat] {
        &self.kappa_hats
    }

    /// Parameters of the leading `k` steps (those of `T_k`).
    pub fn prefix(&self, k: usize) -> Self {
        assert!(k >= 1 && k <= self.steps(), "prefix length {k} out of range");
        StieltjesParams {
            gammas: self.gammas[..k].to_vec(),
            gamma_invs: self.gamma_invs[..k].to_vec(),
            kappa_hats: self.kappa_hats[..k].to_vec(),
            kappa_hat_invs: self.kappa_hat_invs[..k].to_vec(),
            gamma_hats: self.gamma_hats[..k].to_vec(),
        }
    }

    /// Rebuilds `(α_i, β_i)` from the parameters.
    pub fn reconstruct(&self) -> BlockTridiagonal {
        let m = self.steps();
        let mut alphas = Vec::with_capacity(m);
        let mut betas = Vec::with_capacity(m - 1);
        alphas.push(self.gamma_invs[0].clone());
        for i in 1..m {
            let kinv = &self.kappa_hat_invs[i];
            let sum = &self.gamma_invs[i - 1] + &self.gamma_invs[i];
            alphas.push(symmetrize(&(kinv.transpose() * sum * kinv)));
            betas.push(kinv.transpose() * &self.gamma_invs[i - 1] * &self.kappa_hat_invs[i - 1]);
        }
        BlockTridiagonal::new(alphas, betas).expect("shapes are consistent")
    }

    /// `Σ γ_i`, the Gauss value at `s = 0`.
    pub fn gamma_sum(&self) -> Mat {
        self.gammas.iter().fold(Mat::zeros(self.p(), self.p()), |acc, g| acc + g)
    }

    /// `Σ γ̂_i`; its inverse is the residue of the Gauss-Radau value at `s = 0`.
    pub fn gamma_hat_sum(&self) -> Mat {
        self.gamma_hats.iter().fold(Mat::zeros(self.p(), self.p()), |acc, g| acc + g)
    }
}

/// Block `LDLᵀ` extraction of the Stieltjes parameters.
///
/// Fails with [`StieltjesError::NotStieltjes`] when some `γ_i^{-1}` is not
/// s.p.d. or some `κ̂_i` is singular.
pub fn extract(t: &BlockTridiagonal) -> Result<StieltjesParams, StieltjesError> {
    let p = t.p();
    let m = t.steps();
    let mut gammas = Vec::with_capacity(m);
    let mut gamma_invs = Vec::with_capacity(m);
    let mut kappa_hats = Vec::with_capacity(m);
    let mut kappa_hat_invs = Vec::with_capacity(m);
    let mut gamma_hats = Vec::with_capacity(m);

    let gamma_inv = symmetrize(&t.alphas()[0]);
    let gamma = spd_inverse(&gamma_inv).ok_or_else(|| not_stieltjes(1, "γ_1^{-1} = α_1 is not s.p.d."))?;
    gamma_invs.push(gamma_inv);
    gammas.push(gamma);
    kappa_hats.push(Mat::identity(p, p));
    kappa_hat_invs.push(Mat::identity(p, p));
    gamma_hats.push(Mat::identity(p, p));

    for i in 1..m {
        let beta = &t.betas()[i - 1];
        let kinv = &gammas[i - 1] * kappa_hats[i - 1].transpose() * beta.transpose();
        let kappa = kinv
            .clone()
            .try_inverse()
            .filter(|k| k.iter().all(|x| x.is_finite()))
            .ok_or_else(|| not_stieltjes(i + 1, "κ̂ is singular"))?;
        let gamma_inv = symmetrize(&(kappa.transpose() * &t.alphas()[i] * &kappa)) - &gamma_invs[i - 1];
        let gamma = spd_inverse(&gamma_inv).ok_or_else(|| not_stieltjes(i + 1, "γ^{-1} is not s.p.d."))?;
        gamma_hats.push(symmetrize(&(kappa.transpose() * &kappa)));
        gamma_invs.push(gamma_inv);
        gammas.push(gamma);
        kappa_hats.push(kappa);
        kappa_hat_invs.push(kinv);
    }
    Ok(StieltjesParams {
        gammas,
        gamma_invs,
        kappa_hats,
        kappa_hat_invs,
        gamma_hats,
    })
}

/// Evaluates the matrix S-fraction at a real `s > 0`: the Gauss value
/// `F_m(s)` (`radau = false`) or the Gauss-Radau value `F̃_m(s)`.
///
/// Every floor `C_i(s)` is checked to be s.p.d. on the way up.
pub fn sfraction_eval(params: &StieltjesParams, s: f64, radau: bool) -> Result<Mat, StieltjesError> {
    if !(s > 0.0) {
        return Err(StieltjesError::NonPositiveShift(s));
    }
    let m = params.steps();
    let last = m - 1;
    let floor_inv = if radau {
        &params.gamma_hats[last] * s
    } else {
        &params.gamma_hats[last] * s + &params.gamma_invs[last]
    };
    let mut c = spd_inverse(&floor_inv).ok_or_else(|| not_stieltjes(m, "C_m is not s.p.d."))?;
    for i in (0..last).rev() {
        let lower = spd_inverse(&(&params.gammas[i] + &c))
            .ok_or_else(|| not_stieltjes(i + 1, "γ_i + C_{i+1} is not s.p.d."))?;
        c = spd_inverse(&(&params.gamma_hats[i] * s + lower))
            .ok_or_else(|| not_stieltjes(i + 1, "C_i is not s.p.d."))?;
    }
    Ok(c)
}

/// `T̃_m`: the Lanczos matrix with its last diagonal block replaced by
/// `α̃_m`. Positive semidefinite with a `p`-dimensional null space.
#[derive(Debug, Clone)]
pub struct RadauMatrix {
    tri: BlockTridiagonal,
}

impl RadauMatrix {
    pub fn tri(&self) -> &BlockTridiagonal {
        &self.tri
    }

    pub fn alpha_tilde(&self) -> &Mat {
        self.tri.alphas().last().expect("non-empty")
    }

    /// Extracts the parameters of `t` and builds its Radau matrix.
    pub fn from_lanczos(t: &BlockTridiagonal) -> Result<Self, StieltjesError> {
        radau_matrix(t, &extract(t)?)
    }
}

/// Builds `T̃_m` from `T_m` and its Stieltjes parameters. For `m = 1` the
/// modified block is `α̃_1 = 0`.
///
/// `params` may describe a longer run than `t`; only the leading `m` steps
/// are used, so one extraction serves every prefix.
pub fn radau_matrix(t: &BlockTridiagonal, params: &StieltjesParams) -> Result<RadauMatrix, StieltjesError> {
    let m = t.steps();
    if params.steps() < m {
        return Err(StieltjesError::StepMismatch {
            params: params.steps(),
            matrix: m,
        });
    }
    let p = t.p();
    let alpha_tilde = if m == 1 {
        Mat::zeros(p, p)
    } else {
        let kinv = &params.kappa_hat_invs[m - 1];
        symmetrize(&(kinv.transpose() * &params.gamma_invs[m - 2] * kinv))
    };
    Ok(RadauMatrix {
        tri: t.with_last_alpha(alpha_tilde),
    })
}

/// Residuals of the closed forms at `s = 0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct IdentityReport {
    /// `‖F_m(0) − Σγ_i‖₂ / ‖Σγ_i‖₂`, with `F_m(0)` from a direct solve with
    /// `T_m` (NaN if that solve fails).
    pub gauss_at_zero: f64,
    /// `‖s F̃_m(s) − (Σγ̂_i)^{-1}‖₂ / ‖(Σγ̂_i)^{-1}‖₂` at `s = 1e-8 τ`.
    pub residue_raw: f64,
    /// Same with Richardson extrapolation from `s = 1e-8 τ` and `1e-9 τ`.
    pub residue: f64,
    /// Shift scale `τ = max_i ‖α_i‖_max`.
    pub shift_scale: f64,
}

/// Checks `F_m(0) = Σγ_i` and `lim_{s→0} s F̃_m(s) = (Σγ̂_i)^{-1}`.
pub fn check_identities(t: &BlockTridiagonal, params: &StieltjesParams) -> IdentityReport {
    let gamma_sum = params.gamma_sum();
    let gauss_at_zero = t
        .resolvent_corner(Complex64::new(0.0, 0.0))
        .map(|f0| norm2(&(f0.map(|z| z.re) - &gamma_sum)) / norm2(&gamma_sum))
        .unwrap_or(f64::NAN);

    let tau = t.alphas().iter().map(max_abs).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
    let (s1, s2) = (1e-8 * tau, 1e-9 * tau);
    let residue = spd_inverse(&params.gamma_hat_sum()).expect("sum of s.p.d. matrices");
    let scale = norm2(&residue);
    let scaled = |s: f64| sfraction_eval(params, s, true).map(|f| f * s);
    let (residue_raw, residue_rich) = match (scaled(s1), scaled(s2)) {
        (Ok(g1), Ok(g2)) => {
            let rich = (&g2 * s1 - &g1 * s2) / (s1 - s2);
            (norm2(&(g1 - &residue)) / scale, norm2(&(rich - &residue)) / scale)
        }
        _ => (f64::NAN, f64::NAN),
    };
    IdentityReport {
        gauss_at_zero,
        residue_raw,
        residue: residue_rich,
        shift_scale: tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lanczos::{lanczos_run, LanczosOptions};
    use crate::smallmat::{qr_thin, sym_eig, to_complex, CMat};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn worked() -> BlockTridiagonal {
        BlockTridiagonal::scalar(&[2.0, 2.0], &[1.0]).unwrap()
    }

    fn random_lanczos(seed: u64, n: usize, p: usize, m: usize) -> BlockTridiagonal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = symmetrize(&(&g * g.transpose() / n as f64 + Mat::identity(n, n) * 0.1));
        let b = qr_thin(&Mat::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0)), 0.0).unwrap().0;
        lanczos_run(&a, &b, m, LanczosOptions::default()).unwrap().0
    }

    /// Pencil form `E_1ᵀ (Z_m + s Γ̂_m)^{-1} E_1` with
    /// `Z_m = J Γ^{-1} Jᵀ`, assembled densely.
    fn pencil_value(params: &StieltjesParams, s: f64) -> Mat {
        let (p, m) = (params.p(), params.steps());
        let mut j = Mat::zeros(m * p, m * p);
        let mut gamma_inv = Mat::zeros(m * p, m * p);
        let mut gamma_hat = Mat::zeros(m * p, m * p);
        for i in 0..m {
            j.view_mut((i * p, i * p), (p, p)).copy_from(&Mat::identity(p, p));
            if i + 1 < m {
                j.view_mut(((i + 1) * p, i * p), (p, p)).copy_from(&(-Mat::identity(p, p)));
            }
            gamma_inv.view_mut((i * p, i * p), (p, p)).copy_from(&params.gamma_invs[i]);
            gamma_hat.view_mut((i * p, i * p), (p, p)).copy_from(&params.gamma_hats[i]);
        }
        let pencil = &j * gamma_inv * j.transpose() + gamma_hat * s;
        let inv = pencil.try_inverse().unwrap();
        inv.view((0, 0), (p, p)).into_owned()
    }

    #[test]
    fn one_step_parameters() {
        let t = BlockTridiagonal::scalar(&[2.0], &[]).unwrap();
        let params = extract(&t).unwrap();
        assert_abs_diff_eq!(params.gammas()[0][(0, 0)], 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(params.gamma_hats()[0][(0, 0)], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(sfraction_eval(&params, 1.0, false).unwrap()[(0, 0)], 1.0 / 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(sfraction_eval(&params, 1.0, true).unwrap()[(0, 0)], 1.0, epsilon = 1e-13);
        let radau = radau_matrix(&t, &params).unwrap();
        assert_eq!(radau.alpha_tilde(), &Mat::zeros(1, 1));
    }

    #[test]
    fn two_step_hand_example() {
        let t = worked();
        let params = extract(&t).unwrap();
        let g: Vec<f64> = params.gammas().iter().map(|x| x[(0, 0)]).collect();
        let gh: Vec<f64> = params.gamma_hats().iter().map(|x| x[(0, 0)]).collect();
        assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(g[1], 1.0 / 6.0, epsilon = 1e-13);
        assert_abs_diff_eq!(gh[1], 4.0, epsilon = 1e-13);
        assert_abs_diff_eq!(params.kappa_hats()[1][(0, 0)], 2.0, epsilon = 1e-13);

        assert_abs_diff_eq!(sfraction_eval(&params, 1.0, false).unwrap()[(0, 0)], 3.0 / 8.0, epsilon = 1e-13);
        assert_abs_diff_eq!(sfraction_eval(&params, 1.0, true).unwrap()[(0, 0)], 3.0 / 7.0, epsilon = 1e-13);

        let radau = radau_matrix(&t, &params).unwrap();
        assert_abs_diff_eq!(radau.alpha_tilde()[(0, 0)], 0.5, epsilon = 1e-13);
        let dense = radau.tri().assemble();
        assert_abs_diff_eq!(dense.determinant(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn identities_on_worked_example() {
        let t = worked();
        let params = extract(&t).unwrap();
        assert_abs_diff_eq!(params.gamma_sum()[(0, 0)], 2.0 / 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(params.gamma_hat_sum()[(0, 0)], 5.0, epsilon = 1e-13);
        let report = check_identities(&t, &params);
        assert!(report.gauss_at_zero < 1e-14);
        assert!(report.residue < 1e-10, "{report:?}");

        let one = BlockTridiagonal::new(vec![Mat::identity(2, 2) * 3.0], vec![]).unwrap();
        let params = extract(&one).unwrap();
        assert_eq!(params.gamma_hat_sum(), Mat::identity(2, 2));
        assert!(check_identities(&one, &params).residue < 1e-10);
    }

    #[test]
    fn nonpositive_shift_rejected() {
        let params = extract(&worked()).unwrap();
        assert_eq!(sfraction_eval(&params, 0.0, false), Err(StieltjesError::NonPositiveShift(0.0)));
        assert!(sfraction_eval(&params, -1.0, true).is_err());
    }

    #[test]
    fn indefinite_matrix_is_not_stieltjes() {
        let t = BlockTridiagonal::scalar(&[1.0, 1.0], &[2.0]).unwrap();
        assert!(matches!(extract(&t), Err(StieltjesError::NotStieltjes { index: 2, .. })));
        let t = BlockTridiagonal::scalar(&[-1.0], &[]).unwrap();
        assert!(matches!(extract(&t), Err(StieltjesError::NotStieltjes { index: 1, .. })));
    }

    #[test]
    fn reconstruction_matches_input() {
        for (seed, p, m) in [(1, 1, 8), (2, 2, 10), (3, 3, 12), (4, 4, 6)] {
            let t = random_lanczos(seed, 80, p, m);
            let params = extract(&t).unwrap();
            let rebuilt = params.reconstruct();
            for (x, y) in t.alphas().iter().zip(rebuilt.alphas()) {
                assert!(norm2(&(x - y)) <= 1e-9 * norm2(x));
            }
            for (x, y) in t.betas().iter().zip(rebuilt.betas()) {
                assert!(norm2(&(x - y)) <= 1e-9 * norm2(x));
            }
        }
    }

    #[test]
    fn sfraction_matches_pencil_and_resolvent() {
        for (seed, p, m) in [(5, 1, 7), (6, 2, 9), (7, 3, 11)] {
            let t = random_lanczos(seed, 90, p, m);
            let params = extract(&t).unwrap();
            let radau = radau_matrix(&t, &params).unwrap();
            for s in [1e-3, 1e-1, 1.0, 10.0] {
                let cs = Complex64::new(s, 0.0);
                let gauss = sfraction_eval(&params, s, false).unwrap();
                let solve = t.resolvent_corner(cs).unwrap().map(|z| z.re);
                let pencil = pencil_value(&params, s);
                assert!(norm2(&(&gauss - &solve)) <= 1e-9 * norm2(&solve));
                assert!(norm2(&(&gauss - &pencil)) <= 1e-9 * norm2(&pencil));

                let gr = sfraction_eval(&params, s, true).unwrap();
                let gr_solve = radau.tri().resolvent_corner(cs).unwrap().map(|z| z.re);
                assert!(norm2(&(&gr - &gr_solve)) <= 1e-9 * norm2(&gr_solve));
            }
        }
    }

    #[test]
    fn radau_null_space_has_dimension_p() {
        for (seed, p, m) in [(8, 1, 6), (9, 2, 8), (10, 3, 10)] {
            let t = random_lanczos(seed, 100, p, m);
            let radau = RadauMatrix::from_lanczos(&t).unwrap();
            let dense = radau.tri().assemble();
            let eig = sym_eig(&dense).unwrap();
            let scale = eig.max();
            let zeros = eig.eigenvalues.iter().filter(|x| x.abs() <= 1e-8 * scale).count();
            assert_eq!(zeros, p);
            assert!(eig.eigenvalues[p] > 1e-8 * scale);
        }
    }

    #[test]
    fn identities_on_random_instances() {
        for (seed, p, m) in [(11, 1, 10), (12, 2, 12), (13, 3, 15)] {
            let t = random_lanczos(seed, 120, p, m);
            let params = extract(&t).unwrap();
            let report = check_identities(&t, &params);
            assert!(report.gauss_at_zero <= 1e-8, "{report:?}");
            assert!(report.residue <= 1e-7, "{report:?}");
        }
    }

    #[test]
    fn radau_resolvent_is_singular_at_zero() {
        let t = worked();
        let radau = RadauMatrix::from_lanczos(&t).unwrap();
        let e1 = to_complex(&Mat::from_column_slice(2, 1, &[1.0, 0.0]));
        let r = radau.tri().solve_shifted(Complex64::new(0.0, 0.0), &e1);
        assert!(r.is_err());
        let _: CMat = radau.tri().solve_shifted(Complex64::new(1.0, 0.0), &e1).unwrap();
    }
}
