//! Symmetric operators applied to `n x p` blocks, the test-problem generators,
//! and random enrichment of the starting block.
//!
//! The only thing block Lanczos needs from `A` is the product `A X` for a
//! block `X`; [`SymOperator`] captures exactly that.

mod diffusion;
mod enrich;
mod graph;
mod io;
mod problem;
mod sparse;

pub use diffusion::{gen_diffusion2d, optimal_grid_steps, Diffusion2dSpec, Inclusion, SigmaField};
pub use enrich::{enrich, NormalStream};
pub use graph::{gen_graph_laplacian, normalized_laplacian};
pub use io::{
    load_block, load_edge_list, load_matrix_market, parse_edge_list, parse_matrix_market, write_block,
    write_matrix_market,
};
pub use problem::{BlockInput, DiagonalSpec, GraphSpec, MatrixMarketSpec, Problem, ProblemSpec};
pub use sparse::SparseSym;

use crate::smallmat::Mat;
use thiserror::Error;

/// An `n x p` block of column vectors (the starting block `B`, Lanczos
/// blocks `Q_i`, enriched blocks).
pub type BlockVec = Mat;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operator is not symmetric: entry ({row}, {col})")]
    NonSymmetric { row: usize, col: usize },
    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("matrix is not square ({rows} x {cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("block lost rank after {attempts} enrichment attempts")]
    RankDeficient { attempts: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A symmetric linear operator that can be applied to a block of vectors.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;

    /// `y ← A x`. Shapes are assumed to agree; see [`SymOperator::apply`].
    fn apply_to(&self, x: &Mat, y: &mut Mat);

    fn apply(&self, x: &Mat) -> Result<Mat, OperatorError> {
        if x.nrows() != self.dim() {
            return Err(OperatorError::DimensionMismatch(format!(
                "operator of dimension {} applied to a block with {} rows",
                self.dim(),
                x.nrows()
            )));
        }
        let mut y = Mat::zeros(x.nrows(), x.ncols());
        self.apply_to(x, &mut y);
        Ok(y)
    }
}

impl SymOperator for Mat {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_to(&self, x: &Mat, y: &mut Mat) {
        self.mul_to(x, y);
    }
}

/// Power-iteration estimate of `‖A‖₂` from a fixed pseudo-random start.
pub fn norm_estimate<A: SymOperator + ?Sized>(a: &A, iters: usize) -> f64 {
    let n = a.dim();
    if n == 0 {
        return 0.0;
    }
    let mut normals = NormalStream::new(0x5eed);
    let mut v = Mat::from_fn(n, 1, |_, _| normals.sample());
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let norm = v.norm();
        if norm == 0.0 {
            return estimate;
        }
        v /= norm;
        let mut w = Mat::zeros(n, 1);
        a.apply_to(&v, &mut w);
        estimate = w.norm();
        v = w;
    }
    estimate
}
