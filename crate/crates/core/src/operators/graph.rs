use super::{OperatorError, SparseSym};
use crate::smallmat::Mat;

/// Normalised Laplacian `I − D^{-1/2} W D^{-1/2}` of an undirected,
/// unweighted graph on `n` vertices.
///
/// Self-loops are dropped and repeated edges (in either orientation) count
/// once. Isolated vertices get a zero diagonal.
pub fn normalized_laplacian(n: usize, edges: &[(usize, usize)]) -> Result<SparseSym, OperatorError> {
    let mut pairs: Vec<(usize, usize)> = edges
        .iter()
        .filter(|(u, v)| u != v)
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .collect();
    if let Some(&(_, v)) = pairs.iter().find(|(_, v)| *v >= n) {
        return Err(OperatorError::InvalidSpec(format!("vertex {v} outside a graph of {n} vertices")));
    }
    pairs.sort_unstable();
    pairs.dedup();
    if pairs.is_empty() {
        return Err(OperatorError::EmptyGraph);
    }

    let mut degree = vec![0usize; n];
    for &(u, v) in &pairs {
        degree[u] += 1;
        degree[v] += 1;
    }
    let mut triplets = Vec::with_capacity(2 * pairs.len() + n);
    for (i, &d) in degree.iter().enumerate() {
        if d > 0 {
            triplets.push((i, i, 1.0));
        }
    }
    for &(u, v) in &pairs {
        let w = -1.0 / ((degree[u] * degree[v]) as f64).sqrt();
        triplets.push((u, v, w));
        triplets.push((v, u, w));
    }
    SparseSym::from_triplets(n, triplets)
}

/// Normalised Laplacian of the graph spanned by `edges` together with the
/// delta-function block for `delta_nodes`.
///
/// The vertex count is one past the largest index that appears in either.
pub fn gen_graph_laplacian(
    edges: &[(usize, usize)],
    delta_nodes: &[usize],
) -> Result<(SparseSym, Mat), OperatorError> {
    if edges.is_empty() {
        return Err(OperatorError::EmptyGraph);
    }
    let n = edges
        .iter()
        .flat_map(|&(u, v)| [u, v])
        .chain(delta_nodes.iter().copied())
        .max()
        .map_or(0, |m| m + 1);
    let a = normalized_laplacian(n, edges)?;
    if delta_nodes.is_empty() {
        return Err(OperatorError::InvalidSpec("at least one delta node is required".into()));
    }
    let mut b = Mat::zeros(n, delta_nodes.len());
    for (c, &node) in delta_nodes.iter().enumerate() {
        if delta_nodes[..c].contains(&node) {
            return Err(OperatorError::InvalidSpec(format!("delta node {node} is duplicated")));
        }
        b[(node, c)] = 1.0;
    }
    Ok((a, b))
}
