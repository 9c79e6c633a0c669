use super::{
    gen_diffusion2d, gen_graph_laplacian, load_block, load_edge_list, load_matrix_market, normalized_laplacian,
    Diffusion2dSpec, NormalStream, OperatorError, SparseSym,
};
use crate::smallmat::{qr_thin, Mat};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// How the input block `B` is formed for problems that are not generated
/// with their own transducers. Exactly one source must be given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockInput {
    /// Delta functions at these (0-based) nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_nodes: Option<Vec<usize>>,
    /// Delta functions at this many distinct nodes drawn with `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_deltas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Explicit columns (each of length `n`); orthonormalised on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<Vec<f64>>>,
    /// Plain-text column file; orthonormalised on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl BlockInput {
    pub fn deltas(nodes: Vec<usize>) -> Self {
        BlockInput {
            delta_nodes: Some(nodes),
            ..Default::default()
        }
    }

    fn delta_nodes(&self, n: usize) -> Result<Option<Vec<usize>>, OperatorError> {
        if let Some(nodes) = &self.delta_nodes {
            if let Some(bad) = nodes.iter().find(|&&k| k >= n) {
                return Err(OperatorError::InvalidSpec(format!("delta node {bad} out of range 0..{n}")));
            }
            return Ok(Some(nodes.clone()));
        }
        if let Some(count) = self.random_deltas {
            if count == 0 || count > n {
                return Err(OperatorError::InvalidSpec(format!("cannot draw {count} distinct nodes out of {n}")));
            }
            let mut stream = NormalStream::new(self.seed.unwrap_or(1));
            let mut nodes = Vec::with_capacity(count);
            while nodes.len() < count {
                let k = stream.index(n);
                if !nodes.contains(&k) {
                    nodes.push(k);
                }
            }
            return Ok(Some(nodes));
        }
        Ok(None)
    }

    fn resolve(&self, n: usize, base: &Path) -> Result<Mat, OperatorError> {
        let sources = [
            self.delta_nodes.is_some(),
            self.random_deltas.is_some(),
            self.columns.is_some(),
            self.file.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(OperatorError::InvalidSpec(
                "input block needs exactly one of delta_nodes, random_deltas, columns, file".into(),
            ));
        }
        if let Some(nodes) = self.delta_nodes(n)? {
            let mut b = Mat::zeros(n, nodes.len());
            for (c, &k) in nodes.iter().enumerate() {
                if nodes[..c].contains(&k) {
                    return Err(OperatorError::InvalidSpec(format!("delta node {k} is duplicated")));
                }
                b[(k, c)] = 1.0;
            }
            return Ok(b);
        }
        let raw = if let Some(columns) = &self.columns {
            if let Some(bad) = columns.iter().find(|c| c.len() != n) {
                return Err(OperatorError::InvalidSpec(format!(
                    "input column has length {}, expected {n}",
                    bad.len()
                )));
            }
            Mat::from_fn(n, columns.len(), |i, j| columns[j][i])
        } else {
            let path = base.join(self.file.as_ref().expect("checked above"));
            let b = load_block(&path)?;
            if b.nrows() != n {
                return Err(OperatorError::DimensionMismatch(format!(
                    "{} has {} rows, expected {n}",
                    path.display(),
                    b.nrows()
                )));
            }
            b
        };
        if raw.ncols() == 0 {
            return Err(OperatorError::InvalidSpec("input block has no columns".into()));
        }
        let (q, _) = qr_thin(&raw, 1e-12 * raw.norm())
            .map_err(|e| OperatorError::InvalidSpec(format!("input block is rank deficient: {e}")))?;
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub edge_list: PathBuf,
    pub input: BlockInput,
}

/// Diagonal test matrix: explicit `values`, or `n` eigenvalues evenly spaced
/// on `[lambda_min, lambda_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalSpec {
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub lambda_min: Option<f64>,
    #[serde(default)]
    pub lambda_max: Option<f64>,
    pub input: BlockInput,
}

impl DiagonalSpec {
    fn values(&self) -> Result<Vec<f64>, OperatorError> {
        let values = match (&self.values, self.n, self.lambda_min, self.lambda_max) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(n), Some(lo), Some(hi)) if n >= 1 && lo <= hi => {
                if n == 1 {
                    vec![lo]
                } else {
                    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
                }
            }
            _ => {
                return Err(OperatorError::InvalidSpec(
                    "diagonal problem needs either `values` or `n`, `lambda_min <= lambda_max`".into(),
                ))
            }
        };
        if values.is_empty() || values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(OperatorError::InvalidSpec("diagonal values must be finite and nonnegative".into()));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixMarketSpec {
    pub matrix: PathBuf,
    pub input: BlockInput,
}

/// Declarative description of a test problem `(A, B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Diffusion2d(Diffusion2dSpec),
    GraphLaplacian(GraphSpec),
    DiagonalSynthetic(DiagonalSpec),
    MatrixMarket(MatrixMarketSpec),
}

impl ProblemSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::Diffusion2d(_) => "diffusion2d",
            ProblemSpec::GraphLaplacian(_) => "graph-laplacian",
            ProblemSpec::DiagonalSynthetic(_) => "diagonal-synthetic",
            ProblemSpec::MatrixMarket(_) => "matrix-market",
        }
    }

    /// Builds the operator and the orthonormal input block. Relative paths
    /// are resolved against `base`.
    pub fn build(&self, base: &Path) -> Result<Problem, OperatorError> {
        let (a, b) = match self {
            ProblemSpec::Diffusion2d(spec) => gen_diffusion2d(spec)?,
            ProblemSpec::GraphLaplacian(spec) => {
                let edges = load_edge_list(&base.join(&spec.edge_list))?;
                match (&spec.input.delta_nodes, spec.input.random_deltas) {
                    (Some(nodes), None) if spec.input.columns.is_none() && spec.input.file.is_none() => {
                        gen_graph_laplacian(&edges, nodes)?
                    }
                    _ => {
                        let n = edges.iter().flat_map(|&(u, v)| [u, v]).max().map_or(0, |m| m + 1);
                        let a = normalized_laplacian(n, &edges)?;
                        let b = spec.input.resolve(n, base)?;
                        (a, b)
                    }
                }
            }
            ProblemSpec::DiagonalSynthetic(spec) => {
                let a = SparseSym::from_diagonal(&spec.values()?);
                let b = spec.input.resolve(a.n(), base)?;
                (a, b)
            }
            ProblemSpec::MatrixMarket(spec) => {
                let a = load_matrix_market(&base.join(&spec.matrix))?;
                let b = spec.input.resolve(a.n(), base)?;
                (a, b)
            }
        };
        Ok(Problem { a, b })
    }
}

/// A built problem: symmetric `A` and an orthonormal `n x p` block `B`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub a: SparseSym,
    pub b: Mat,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_from_toml() {
        let text = r#"
            kind = "diagonal-synthetic"
            values = [1.0, 3.0]
            [input]
            columns = [[1.0, 1.0]]
        "#;
        let spec: ProblemSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.kind(), "diagonal-synthetic");
        let p = spec.build(Path::new(".")).unwrap();
        assert_eq!(p.a.diagonal(), vec![1.0, 3.0]);
        let s = 1.0 / 2f64.sqrt();
        assert!((p.b[(0, 0)] - s).abs() < 1e-15 && (p.b[(1, 0)] - s).abs() < 1e-15);
    }

    #[test]
    fn uniform_diagonal() {
        let spec = DiagonalSpec {
            values: None,
            n: Some(5),
            lambda_min: Some(0.0),
            lambda_max: Some(4.0),
            input: BlockInput::deltas(vec![0, 4]),
        };
        assert_eq!(spec.values().unwrap(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let p = ProblemSpec::DiagonalSynthetic(spec).build(Path::new(".")).unwrap();
        assert_eq!(p.b.shape(), (5, 2));
        assert_eq!(p.b[(4, 1)], 1.0);
    }

    #[test]
    fn diffusion_from_toml() {
        let text = r#"
            kind = "diffusion2d"
            nx = 4
            ny = 3
            n_opt = 2
            transducers = [[0, 0], [3, 2]]
            [sigma]
            background = 1.0
            inclusions = [{ x = [1, 3], y = [0, 2], value = 0.1 }]
        "#;
        let spec: ProblemSpec = toml::from_str(text).unwrap();
        let p = spec.build(Path::new(".")).unwrap();
        assert_eq!(p.a.n(), 8 * 7);
        assert_eq!(p.b.ncols(), 2);
    }

    #[test]
    fn random_deltas_are_distinct_and_seeded() {
        let input = BlockInput {
            random_deltas: Some(3),
            seed: Some(1),
            ..Default::default()
        };
        let b1 = input.resolve(10, Path::new(".")).unwrap();
        let b2 = input.resolve(10, Path::new(".")).unwrap();
        assert_eq!(b1, b2);
        assert!((b1.transpose() * &b1 - Mat::identity(3, 3)).norm() == 0.0);
    }

    #[test]
    fn input_needs_exactly_one_source() {
        let input = BlockInput {
            delta_nodes: Some(vec![0]),
            random_deltas: Some(1),
            ..Default::default()
        };
        assert!(input.resolve(4, Path::new(".")).is_err());
        assert!(BlockInput::default().resolve(4, Path::new(".")).is_err());
        assert!(BlockInput::deltas(vec![4]).resolve(4, Path::new(".")).is_err());
    }

    #[test]
    fn graph_and_matrix_market_from_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("g.txt"), "# tri\n1 2\n2 3\n3 1\n").unwrap();
        let spec = ProblemSpec::GraphLaplacian(GraphSpec {
            edge_list: "g.txt".into(),
            input: BlockInput::deltas(vec![0, 2]),
        });
        let p = spec.build(dir.path()).unwrap();
        assert_eq!(p.a.n(), 3);
        assert!((p.a.get(0, 1) + 0.5).abs() < 1e-15);

        super::super::write_matrix_market(&dir.path().join("a.mtx"), &p.a).unwrap();
        let spec = ProblemSpec::MatrixMarket(MatrixMarketSpec {
            matrix: "a.mtx".into(),
            input: BlockInput::deltas(vec![1]),
        });
        let q = spec.build(dir.path()).unwrap();
        assert_eq!(q.a, p.a);
    }
}
