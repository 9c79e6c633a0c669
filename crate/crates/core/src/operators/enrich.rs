use super::OperatorError;
use crate::smallmat::{qr_thin, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_ATTEMPTS: usize = 3;

/// Standard normal samples from a seeded ChaCha8 stream via Box–Muller.
///
/// ChaCha8 output is specified independently of platform, so the same seed
/// gives the same samples everywhere.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite
        let u1: f64 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// Appends `extra` standard normal columns to `b` and orthonormalises the
/// result, processing the columns of `b` first so that the leading `p`
/// columns span `range(b)`.
pub fn enrich(b: &Mat, extra: usize, seed: u64) -> Result<Mat, OperatorError> {
    if extra == 0 {
        return Ok(b.clone());
    }
    let (n, p) = b.shape();
    if p + extra > n {
        return Err(OperatorError::InvalidSpec(format!(
            "cannot enrich a {n}x{p} block with {extra} columns"
        )));
    }
    let scale = b.norm().max(1.0);
    let mut normals = NormalStream::new(seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut joined = Mat::zeros(n, p + extra);
        joined.columns_mut(0, p).copy_from(b);
        for j in p..p + extra {
            for i in 0..n {
                joined[(i, j)] = normals.sample();
            }
        }
        if let Ok((q, _)) = qr_thin(&joined, 1e-12 * scale * (n as f64).sqrt()) {
            return Ok(q);
        }
    }
    Err(OperatorError::RankDeficient {
        attempts: MAX_ATTEMPTS,
    })
}
