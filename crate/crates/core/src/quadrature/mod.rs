//! Block Gauss and Gauss-Radau values of `Bᵀ φ(A) B`, the two-sided bound,
//! the extrapolations and a direct-solve reference.
//!
//! Values are returned as complex `p x p` matrices so that real shifts,
//! complex shifts and the exponential share one code path; for real
//! functions the imaginary parts are exactly zero.

mod oracle;

pub use oracle::{reference_oracle, ReferenceOracle, DENSE_LIMIT, SPARSE_LIMIT};

use crate::lanczos::BlockTridiagonal;
use crate::smallmat::{
    loewner_geq, norm2, norm2_c, real_part, spd_inverse, spd_log, sym_eig, sym_exp, symmetrize, to_complex, CMat, Mat,
    SmallMatError,
};
use crate::stieltjes::RadauMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("invalid function: {0}")]
    InvalidPhi(String),
    #[error("shifted matrix is singular: {0}")]
    SingularShift(SmallMatError),
    #[error("eigendecomposition failed: {0}")]
    EigFailure(SmallMatError),
    #[error("Gauss-Radau matrix has {radau} steps, expected {expected}")]
    StepMismatch { radau: usize, expected: usize },
    #[error("problem of dimension {n} exceeds the direct-method limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("spectral interval must have θ_max > 0 and s > 0, got θ_max = {theta_max}, s = {s}")]
    InvalidSpectrum { theta_max: f64, s: f64 },
    #[error("direct solve failed: {0}")]
    Oracle(String),
}

/// The function `φ(A)`: the resolvent `(A + sI)^{-1}` or `exp(−tA)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiSpec {
    Resolvent(Complex64),
    Exponential(f64),
}

impl PhiSpec {
    pub fn resolvent(s: f64) -> Self {
        PhiSpec::Resolvent(Complex64::new(s, 0.0))
    }

    /// Rejects shifts on the negative real axis and non-positive times.
    pub fn validate(&self) -> Result<(), QuadratureError> {
        match *self {
            PhiSpec::Resolvent(s) => {
                if !s.re.is_finite() || !s.im.is_finite() {
                    return Err(QuadratureError::InvalidPhi(format!("shift {s} is not finite")));
                }
                if s.im == 0.0 && s.re < 0.0 {
                    return Err(QuadratureError::InvalidPhi(format!("shift {s} lies on the negative real axis")));
                }
                Ok(())
            }
            PhiSpec::Exponential(t) => {
                if t > 0.0 && t.is_finite() {
                    Ok(())
                } else {
                    Err(QuadratureError::InvalidPhi(format!("time {t} must be positive")))
                }
            }
        }
    }

    /// `Some(s)` for a resolvent at a real shift `s > 0`, the case in which
    /// Gauss and Gauss-Radau bracket the true value.
    pub fn real_shift(&self) -> Option<f64> {
        match *self {
            PhiSpec::Resolvent(s) if s.im == 0.0 && s.re > 0.0 => Some(s.re),
            _ => None,
        }
    }

    pub fn is_real(&self) -> bool {
        match *self {
            PhiSpec::Resolvent(s) => s.im == 0.0,
            PhiSpec::Exponential(_) => true,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PhiSpec::Resolvent(_) => "resolvent",
            PhiSpec::Exponential(_) => "exponential",
        }
    }

    /// The shift or time, formatted for output.
    pub fn param_label(&self) -> String {
        match *self {
            PhiSpec::Resolvent(s) if s.im == 0.0 => format!("{:.16e}", s.re),
            PhiSpec::Resolvent(s) => format!("{:.16e}{:+.16e}i", s.re, s.im),
            PhiSpec::Exponential(t) => format!("{t:.16e}"),
        }
    }

    /// `φ` at a scalar node.
    pub fn scalar(&self, x: f64) -> Complex64 {
        match *self {
            PhiSpec::Resolvent(s) => 1.0 / (s + x),
            PhiSpec::Exponential(t) => Complex64::new((-t * x).exp(), 0.0),
        }
    }
}

fn eval_tri(t: &BlockTridiagonal, phi: PhiSpec) -> Result<CMat, QuadratureError> {
    phi.validate()?;
    match phi {
        PhiSpec::Resolvent(s) => t.resolvent_corner(s).map_err(QuadratureError::SingularShift),
        PhiSpec::Exponential(time) => {
            let p = t.p();
            let e = sym_exp(&(t.assemble() * -time)).map_err(QuadratureError::EigFailure)?;
            Ok(to_complex(&symmetrize(&e.view((0, 0), (p, p)).into_owned())))
        }
    }
}

/// Block Gauss value `F_m = E_1ᵀ φ(T_m) E_1`.
pub fn eval_gauss(t: &BlockTridiagonal, phi: PhiSpec) -> Result<CMat, QuadratureError> {
    eval_tri(t, phi)
}

/// Block Gauss-Radau value `F̃_m = E_1ᵀ φ(T̃_m) E_1`. Singular at `s = 0`.
pub fn eval_radau(radau: &RadauMatrix, phi: PhiSpec) -> Result<CMat, QuadratureError> {
    eval_tri(radau.tri(), phi)
}

/// Nodes `x_i` (eigenvalues of the assembled matrix) and `p x p` weights
/// `w_i = u_i u_iᵀ`, where `u_i` holds the first `p` entries of the i-th
/// eigenvector.
#[derive(Debug, Clone)]
pub struct NodesWeights {
    pub nodes: Vec<f64>,
    pub weights: Vec<Mat>,
}

impl NodesWeights {
    /// `Σ_i φ(x_i) w_i`.
    pub fn eval(&self, phi: PhiSpec) -> CMat {
        let p = self.weights.first().map_or(0, |w| w.nrows());
        let mut out = CMat::zeros(p, p);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let f = phi.scalar(*x);
            out += w.map(|v| f * v);
        }
        out
    }

    /// `Σ_i w_i`, which equals `I_p`.
    pub fn weight_sum(&self) -> Mat {
        let p = self.weights.first().map_or(0, |w| w.nrows());
        self.weights.iter().fold(Mat::zeros(p, p), |acc, w| acc + w)
    }
}

pub fn nodes_weights(t: &BlockTridiagonal) -> Result<NodesWeights, QuadratureError> {
    let p = t.p();
    let eig = sym_eig(&t.assemble()).map_err(QuadratureError::EigFailure)?;
    let weights = (0..eig.eigenvalues.len())
        .map(|i| {
            let u = eig.eigenvectors.view((0, i), (p, 1));
            u * u.transpose()
        })
        .collect();
    Ok(NodesWeights {
        nodes: eig.eigenvalues,
        weights,
    })
}

/// `F̂ = ½(F_m + F̃_{m+1})`, `F̄^{-1} = ½(F_m^{-1} + F̃_{m+1}^{-1})` and the
/// dual-invariant `F̌ = exp(½(log F̄ + log F̂))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolations {
    pub hat: Mat,
    pub bar: Option<Mat>,
    pub check: Option<Mat>,
}

/// Extrapolations of a real pair; `bar` and `check` are omitted when an
/// inverse or a logarithm is undefined.
pub fn extrapolate(gauss: &Mat, radau: &Mat) -> Extrapolations {
    let hat = symmetrize(&((gauss + radau) * 0.5));
    let bar = spd_inverse(gauss)
        .zip(spd_inverse(radau))
        .and_then(|(gi, ri)| spd_inverse(&((gi + ri) * 0.5)));
    let check = bar.as_ref().and_then(|bar| {
        let logs = spd_log(bar).ok()? + spd_log(&hat).ok()?;
        sym_exp(&(logs * 0.5)).ok()
    });
    Extrapolations { hat, bar, check }
}

/// Everything reported for one `(m, φ)`: `F_m`, `F̃_{m+1}` (both from the
/// same `m + 1` Lanczos coefficients), the bound `‖F̃_{m+1} − F_m‖₂` and the
/// extrapolations.
#[derive(Debug, Clone)]
pub struct QuadratureSet {
    pub m: usize,
    pub gauss: CMat,
    pub radau: CMat,
    pub bound: f64,
    pub hat: CMat,
    /// Only for real shifts `s > 0`.
    pub bar: Option<Mat>,
    /// Only for real shifts `s > 0`.
    pub check: Option<Mat>,
}

/// Pairs `F_m` from `gauss_t` (m steps) with `F̃_{m+1}` from `radau`
/// (m + 1 steps).
///
/// For real `s > 0`, `F_m ⪯ F̃_{m+1}` is checked in debug builds.
pub fn two_sided(gauss_t: &BlockTridiagonal, radau: &RadauMatrix, phi: PhiSpec) -> Result<QuadratureSet, QuadratureError> {
    let m = gauss_t.steps();
    if radau.tri().steps() != m + 1 {
        return Err(QuadratureError::StepMismatch {
            radau: radau.tri().steps(),
            expected: m + 1,
        });
    }
    let gauss = eval_gauss(gauss_t, phi)?;
    let radau_value = eval_radau(radau, phi)?;
    let bound = norm2_c(&(&radau_value - &gauss));
    let (hat, bar, check) = if phi.real_shift().is_some() {
        let (g, r) = (real_part(&gauss), real_part(&radau_value));
        debug_assert!(loewner_geq(&r, &g, 1e-9), "Gauss-Radau value below Gauss value at m = {m}");
        let ex = extrapolate(&g, &r);
        (to_complex(&ex.hat), ex.bar, ex.check)
    } else {
        ((&gauss + &radau_value) * Complex64::new(0.5, 0.0), None, None)
    };
    Ok(QuadratureSet {
        m,
        gauss,
        radau: radau_value,
        bound,
        hat,
        bar,
        check,
    })
}

/// Convergence-rate diagnostic for a spectrum in `[0, θ_max]`: the Green
/// function of the complement of `[−√θ_max, √θ_max]` at `λ = i√s`,
/// `g = asinh(√(s / θ_max))`. The Gauss error decays like `exp(−4 m g)`.
pub fn potential_rate(theta_max: f64, s: f64) -> Result<f64, QuadratureError> {
    if !(theta_max > 0.0 && s > 0.0 && theta_max.is_finite() && s.is_finite()) {
        return Err(QuadratureError::InvalidSpectrum { theta_max, s });
    }
    Ok((s / theta_max).sqrt().asinh())
}

/// Spectral norm of the difference of two values.
pub fn error_norm(approx: &CMat, exact: &CMat) -> f64 {
    norm2_c(&(approx - exact))
}

/// Spectral norm of a real difference.
pub fn error_norm_real(approx: &Mat, exact: &Mat) -> f64 {
    norm2(&(approx - exact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lanczos::{lanczos_run, LanczosOptions};
    use crate::smallmat::qr_thin;
    use crate::stieltjes::{extract, radau_matrix};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn worked() -> BlockTridiagonal {
        BlockTridiagonal::scalar(&[2.0, 2.0], &[1.0]).unwrap()
    }

    fn re(x: &CMat) -> f64 {
        x[(0, 0)].re
    }

    fn random_problem(seed: u64, n: usize, p: usize) -> (Mat, Mat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = symmetrize(&(&g * g.transpose() / n as f64 + Mat::identity(n, n) * 0.05));
        let b = qr_thin(&Mat::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0)), 0.0).unwrap().0;
        (a, b)
    }

    #[test]
    fn gauss_hand_values() {
        let t = worked();
        assert_abs_diff_eq!(re(&eval_gauss(&t, PhiSpec::resolvent(1.0)).unwrap()), 3.0 / 8.0, epsilon = 1e-15);
        let tiny = eval_gauss(&t, PhiSpec::Exponential(1e-12)).unwrap();
        assert_abs_diff_eq!(re(&tiny), 1.0, epsilon = 1e-11);
        // diag(1,3) in the eigenbasis of T: nodes 1, 3 with weights ½
        let e = eval_gauss(&t, PhiSpec::Exponential(1.0)).unwrap();
        assert_abs_diff_eq!(re(&e), 0.5 * ((-1.0f64).exp() + (-3.0f64).exp()), epsilon = 1e-14);
    }

    #[test]
    fn gauss_at_imaginary_shift_matches_eigen_expansion() {
        let t = worked();
        let s = Complex64::new(0.0, 1e-3);
        let v = eval_gauss(&t, PhiSpec::Resolvent(s)).unwrap()[(0, 0)];
        let expected = 0.5 / (1.0 + s) + 0.5 / (3.0 + s);
        assert!((v - expected).norm() < 1e-14);
        assert!(v.norm() <= 1.0);
    }

    #[test]
    fn radau_hand_values() {
        let radau = radau_matrix(&worked(), &extract(&worked()).unwrap()).unwrap();
        assert_abs_diff_eq!(re(&eval_radau(&radau, PhiSpec::resolvent(1.0)).unwrap()), 3.0 / 7.0, epsilon = 1e-14);
        assert!(matches!(
            eval_radau(&radau, PhiSpec::resolvent(0.0)),
            Err(QuadratureError::SingularShift(_))
        ));
        // T̃ has nodes 0 and 5/2; the zero node carries weight 1/5
        let late = eval_radau(&radau, PhiSpec::Exponential(60.0)).unwrap();
        assert_abs_diff_eq!(re(&late), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn invalid_phi_rejected() {
        let t = worked();
        assert!(matches!(eval_gauss(&t, PhiSpec::resolvent(-1.0)), Err(QuadratureError::InvalidPhi(_))));
        assert!(matches!(eval_gauss(&t, PhiSpec::Exponential(0.0)), Err(QuadratureError::InvalidPhi(_))));
        assert!(eval_gauss(&t, PhiSpec::Resolvent(Complex64::new(-1.0, 0.5))).is_ok());
    }

    #[test]
    fn nodes_weights_examples() {
        let nw = nodes_weights(&BlockTridiagonal::scalar(&[2.0], &[]).unwrap()).unwrap();
        assert_eq!(nw.nodes, vec![2.0]);
        assert_abs_diff_eq!(nw.weights[0][(0, 0)], 1.0, epsilon = 1e-15);

        let nw = nodes_weights(&worked()).unwrap();
        assert_abs_diff_eq!(nw.nodes[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(nw.nodes[1], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(nw.weights[0][(0, 0)], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(nw.weights[1][(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn nodes_weights_reproduce_values() {
        for (seed, p) in [(1, 1), (2, 2), (3, 3)] {
            let (a, b) = random_problem(seed, 60, p);
            let (t, _) = lanczos_run(&a, &b, 8, LanczosOptions::default()).unwrap();
            let nw = nodes_weights(&t).unwrap();
            assert!(norm2(&(nw.weight_sum() - Mat::identity(p, p))) <= 1e-9);
            for phi in [PhiSpec::resolvent(0.3), PhiSpec::Resolvent(Complex64::new(0.1, 2.0)), PhiSpec::Exponential(0.7)] {
                let direct = eval_gauss(&t, phi).unwrap();
                assert!(error_norm(&nw.eval(phi), &direct) <= 1e-9 * norm2_c(&direct));
            }
        }
    }

    #[test]
    fn radau_zero_nodes_have_full_rank_weight() {
        let (a, b) = random_problem(4, 80, 3);
        let (t, _) = lanczos_run(&a, &b, 7, LanczosOptions::default()).unwrap();
        let radau = RadauMatrix::from_lanczos(&t).unwrap();
        let nw = nodes_weights(radau.tri()).unwrap();
        let scale = nw.nodes.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let mut zero_weight = Mat::zeros(3, 3);
        let mut zeros = 0;
        for (x, w) in nw.nodes.iter().zip(&nw.weights) {
            if x.abs() <= 1e-8 * scale {
                zeros += 1;
                zero_weight += w;
            }
        }
        assert!(zeros >= 3);
        assert_eq!(zero_weight.rank(1e-10), 3);
        // the zero-node weight is the residue (Σγ̂)^{-1}
        let residue = spd_inverse(&extract(&t).unwrap().gamma_hat_sum()).unwrap();
        assert!(norm2(&(zero_weight - &residue)) <= 1e-8 * norm2(&residue));
    }

    #[test]
    fn scalar_extrapolations() {
        let g = Mat::from_element(1, 1, 1.0 / 3.0);
        let r = Mat::from_element(1, 1, 3.0 / 7.0);
        let ex = extrapolate(&g, &r);
        assert_abs_diff_eq!(ex.hat[(0, 0)], 8.0 / 21.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ex.bar.unwrap()[(0, 0)], 3.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ex.check.as_ref().unwrap()[(0, 0)], (1.0f64 / 7.0).sqrt(), epsilon = 1e-15);

        let dual = extrapolate(&r.map(|x| 1.0 / x), &g.map(|x| 1.0 / x));
        assert_abs_diff_eq!(dual.check.unwrap()[(0, 0)], 1.0 / ex.check.unwrap()[(0, 0)], epsilon = 1e-14);
    }

    #[test]
    fn extrapolations_of_equal_arguments() {
        let g = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let ex = extrapolate(&g, &g);
        assert!(norm2(&(&ex.hat - &g)) < 1e-14);
        assert!(norm2(&(ex.bar.unwrap() - &g)) < 1e-14);
        assert!(norm2(&(ex.check.unwrap() - &g)) < 1e-13);
    }

    #[test]
    fn extrapolation_skips_indefinite() {
        let g = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let ex = extrapolate(&g, &Mat::identity(2, 2));
        assert!(ex.bar.is_none() && ex.check.is_none());
    }

    #[test]
    fn two_sided_hand_example() {
        let a = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0]));
        let b = Mat::from_column_slice(2, 1, &[1.0, 1.0]) / 2.0_f64.sqrt();
        let (t, _) = lanczos_run(&a, &b, 2, LanczosOptions::default()).unwrap();
        let params = extract(&t).unwrap();
        let radau2 = radau_matrix(&t, &params).unwrap();
        let set = two_sided(&t.prefix(1), &radau2, PhiSpec::resolvent(1.0)).unwrap();
        assert_eq!(set.m, 1);
        assert_abs_diff_eq!(re(&set.gauss), 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(re(&set.radau), 3.0 / 7.0, epsilon = 1e-14);
        assert_abs_diff_eq!(set.bound, 2.0 / 21.0, epsilon = 1e-14);
        assert_abs_diff_eq!(re(&set.hat), 8.0 / 21.0, epsilon = 1e-14);
        assert!(set.check.is_some());

        assert!(matches!(
            two_sided(&t, &radau2, PhiSpec::resolvent(1.0)),
            Err(QuadratureError::StepMismatch { .. })
        ));
        let complex = two_sided(&t.prefix(1), &radau2, PhiSpec::Resolvent(Complex64::new(1.0, 1.0))).unwrap();
        assert!(complex.check.is_none() && complex.bar.is_none());
    }

    #[test]
    fn potential_rate_values() {
        assert_abs_diff_eq!(potential_rate(4.0, 1.0).unwrap(), 0.5f64.asinh(), epsilon = 1e-15);
        assert!(potential_rate(0.0, 1.0).is_err());
        assert!(potential_rate(1.0, 0.0).is_err());
        let mut prev = 0.0;
        for k in -8..4 {
            let g = potential_rate(2.0, 10f64.powi(k)).unwrap();
            assert!(g > prev);
            prev = g;
        }
        // small s: g ≈ √(s/θ_max)
        assert_abs_diff_eq!(potential_rate(8.0, 8e-6).unwrap(), 1e-3, epsilon = 1e-9);
    }

    #[test]
    fn scalar_convergence_follows_potential_rate() {
        // uniform spectrum on [0.001, 1]; the observed Gauss rate must not be
        // slower than the single-interval model
        let n = 400;
        let diag: Vec<f64> = (0..n).map(|i| 1e-3 + (1.0 - 1e-3) * i as f64 / (n - 1) as f64).collect();
        let a = Mat::from_diagonal(&nalgebra::DVector::from_vec(diag.clone()));
        let b = Mat::from_element(n, 1, 1.0 / (n as f64).sqrt());
        let s = 1e-2;
        let exact: f64 = diag.iter().map(|x| 1.0 / (n as f64 * (x + s))).sum();
        let opts = LanczosOptions {
            reorth: true,
            ..Default::default()
        };
        let (t, _) = lanczos_run(&a, &b, 30, opts).unwrap();
        let err = |m: usize| (re(&eval_gauss(&t.prefix(m), PhiSpec::resolvent(s)).unwrap()) - exact).abs();
        let observed = (err(10) / err(25)).ln() / 15.0;
        let g = potential_rate(1.0, s).unwrap();
        assert!(observed >= 4.0 * g * 0.9, "observed {observed}, model {}", 4.0 * g);
    }
}
