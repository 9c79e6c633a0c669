//! Five-point finite-difference discretisation of `−σ^{-1/2} Δ σ^{-1/2}` on a
//! tensor grid: a uniform interior (unit step) padded on every side by
//! geometrically growing steps, with a homogeneous Dirichlet condition on the
//! outer boundary.
//!
//! With primal steps `h` and dual steps `ĥ_k = (h_k + h_{k+1}) / 2` the
//! stiffness matrix `K` is symmetric and the operator is written in the
//! symmetric form `M^{-1/2} K M^{-1/2}` with `M = diag(ĥx ĥy)`. The sign is
//! chosen so that the result is positive definite.

use super::{OperatorError, SparseSym};
use crate::smallmat::Mat;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    /// Interior column range `[start, end)`.
    pub x: [usize; 2],
    /// Interior row range `[start, end)`.
    pub y: [usize; 2],
    pub value: f64,
}

/// Conductivity sampled on the interior nodes. Exterior nodes take the value
/// of the nearest interior node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaField {
    #[serde(default = "one")]
    pub background: f64,
    #[serde(default)]
    pub inclusions: Vec<Inclusion>,
    /// Optional full sample, `nx * ny` values with `x` running fastest.
    /// Overrides `background` and `inclusions`.
    #[serde(default)]
    pub samples: Option<Vec<f64>>,
}

impl Default for SigmaField {
    fn default() -> Self {
        SigmaField {
            background: 1.0,
            inclusions: Vec::new(),
            samples: None,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_n_opt() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diffusion2dSpec {
    /// Interior nodes in `x`.
    pub nx: usize,
    /// Interior nodes in `y`.
    pub ny: usize,
    /// Geometrically growing exterior steps on each side.
    #[serde(default = "default_n_opt")]
    pub n_opt: usize,
    /// Step ratio of the exterior grid; defaults to `exp(π / √n_opt)`.
    #[serde(default)]
    pub factor: Option<f64>,
    #[serde(default)]
    pub sigma: SigmaField,
    /// Interior node coordinates `[ix, iy]` of the delta-function inputs.
    pub transducers: Vec<[usize; 2]>,
}

impl Diffusion2dSpec {
    pub fn factor(&self) -> f64 {
        self.factor
            .unwrap_or_else(|| (std::f64::consts::PI / (self.n_opt.max(1) as f64).sqrt()).exp())
    }

    /// Unknowns per grid line in `x` and `y`.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.nx + 2 * self.n_opt, self.ny + 2 * self.n_opt)
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        let (gx, _) = self.grid_shape();
        (iy + self.n_opt) * gx + ix + self.n_opt
    }

    /// Evenly spread transducers: `count` nodes along the middle row at the
    /// fractional positions `(k + 1) / (count + 1)`.
    pub fn spread_transducers(nx: usize, ny: usize, count: usize) -> Vec<[usize; 2]> {
        (0..count)
            .map(|k| {
                let fx = (k + 1) as f64 / (count + 1) as f64;
                [((nx as f64 - 1.0) * fx).round() as usize, ny / 2]
            })
            .collect()
    }

    fn validate(&self) -> Result<(), OperatorError> {
        let invalid = |msg: String| Err(OperatorError::InvalidSpec(msg));
        if self.nx == 0 || self.ny == 0 {
            return invalid(format!("interior grid must be non-empty, got {}x{}", self.nx, self.ny));
        }
        if self.n_opt > 0 && !(self.factor() > 0.0 && self.factor().is_finite()) {
            return invalid(format!("exterior step ratio must be positive, got {}", self.factor()));
        }
        if self.transducers.is_empty() {
            return invalid("at least one transducer is required".into());
        }
        for (k, t) in self.transducers.iter().enumerate() {
            if t[0] >= self.nx || t[1] >= self.ny {
                return invalid(format!(
                    "transducer {k} at {:?} lies outside the {}x{} interior",
                    t, self.nx, self.ny
                ));
            }
            if self.transducers[..k].contains(t) {
                return invalid(format!("transducer {k} at {t:?} is duplicated"));
            }
        }
        let sigma = &self.sigma;
        if let Some(samples) = &sigma.samples {
            if samples.len() != self.nx * self.ny {
                return invalid(format!(
                    "sigma sample has {} values, expected {}",
                    samples.len(),
                    self.nx * self.ny
                ));
            }
            if let Some(bad) = samples.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return invalid(format!("sigma must be positive, found {bad}"));
            }
        } else {
            if !(sigma.background > 0.0 && sigma.background.is_finite()) {
                return invalid(format!("sigma background must be positive, got {}", sigma.background));
            }
            for inc in &sigma.inclusions {
                if !(inc.value > 0.0 && inc.value.is_finite()) {
                    return invalid(format!("inclusion sigma must be positive, got {}", inc.value));
                }
                if inc.x[0] > inc.x[1] || inc.y[0] > inc.y[1] || inc.x[1] > self.nx || inc.y[1] > self.ny {
                    return invalid(format!("inclusion {:?} x {:?} outside the interior", inc.x, inc.y));
                }
            }
        }
        Ok(())
    }

    fn sigma_at(&self, ix: usize, iy: usize) -> f64 {
        if let Some(samples) = &self.sigma.samples {
            return samples[iy * self.nx + ix];
        }
        self.sigma
            .inclusions
            .iter()
            .rev()
            .find(|inc| (inc.x[0]..inc.x[1]).contains(&ix) && (inc.y[0]..inc.y[1]).contains(&iy))
            .map_or(self.sigma.background, |inc| inc.value)
    }
}

/// Primal steps of one grid line: `n_interior + 2 n_opt + 1` values from the
/// left boundary to the right boundary.
///
/// Each side carries `n_opt` exterior nodes reached with steps
/// `1, r, …, r^{n_opt−1}` followed by the step `r^{n_opt}` to the Dirichlet
/// boundary.
pub fn optimal_grid_steps(n_interior: usize, n_opt: usize, ratio: f64) -> Vec<f64> {
    let outward: Vec<f64> = (0..=n_opt).map(|k| ratio.powi(k as i32)).collect();
    let mut steps: Vec<f64> = outward.iter().rev().copied().collect();
    steps.extend(std::iter::repeat_n(1.0, n_interior.saturating_sub(1)));
    steps.extend(outward);
    steps
}

fn dual_steps(steps: &[f64]) -> Vec<f64> {
    steps.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Assembles `A` and the delta-function block `B` for a 2D diffusion problem.
pub fn gen_diffusion2d(spec: &Diffusion2dSpec) -> Result<(SparseSym, Mat), OperatorError> {
    spec.validate()?;
    let ratio = spec.factor();
    let hx = optimal_grid_steps(spec.nx, spec.n_opt, ratio);
    let hy = optimal_grid_steps(spec.ny, spec.n_opt, ratio);
    let dx = dual_steps(&hx);
    let dy = dual_steps(&hy);
    let (gx, gy) = spec.grid_shape();
    let n = gx * gy;

    let clamp = |k: usize, len: usize| k.saturating_sub(spec.n_opt).min(len - 1);
    // scale_k = 1 / sqrt(mass_k * sigma_k)
    let scale: Vec<f64> = (0..n)
        .map(|k| {
            let (i, j) = (k % gx, k / gx);
            let sigma = spec.sigma_at(clamp(i, spec.nx), clamp(j, spec.ny));
            1.0 / (dx[i] * dy[j] * sigma).sqrt()
        })
        .collect();

    let mut triplets = Vec::with_capacity(5 * n);
    for j in 0..gy {
        for i in 0..gx {
            let k = j * gx + i;
            let west = dy[j] / hx[i];
            let east = dy[j] / hx[i + 1];
            let south = dx[i] / hy[j];
            let north = dx[i] / hy[j + 1];
            triplets.push((k, k, (west + east + south + north) * scale[k] * scale[k]));
            if i + 1 < gx {
                let v = -east * scale[k] * scale[k + 1];
                triplets.push((k, k + 1, v));
                triplets.push((k + 1, k, v));
            }
            if j + 1 < gy {
                let v = -north * scale[k] * scale[k + gx];
                triplets.push((k, k + gx, v));
                triplets.push((k + gx, k, v));
            }
        }
    }
    let a = SparseSym::from_triplets(n, triplets)?;

    let mut b = Mat::zeros(n, spec.transducers.len());
    for (c, t) in spec.transducers.iter().enumerate() {
        b[(spec.node_index(t[0], t[1]), c)] = 1.0;
    }
    Ok((a, b))
}
