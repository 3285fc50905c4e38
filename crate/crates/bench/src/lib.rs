//! Deterministic fixtures shared by the benchmarks.

use consensus_net::graph::{build_laplacian, DirectedGraph};
use consensus_net::LaplacianData;
use nalgebra::DMatrix;

/// Directed ring `1→2→…→n→1` with chords `i→i+2`; strongly connected, with
/// complex Laplacian eigenvalues for `n ≥ 3`.
pub fn ring_with_chords(n: usize) -> DirectedGraph {
    let mut edges = Vec::new();
    for i in 1..=n {
        edges.push((i, i % n + 1, 1.0));
        let skip = (i + 1) % n + 1;
        if n > 3 && skip != i {
            edges.push((i, skip, 0.5));
        }
    }
    DirectedGraph::from_edges(n, &edges).expect("fixture graph is valid")
}

pub fn laplacian(n: usize) -> LaplacianData {
    build_laplacian(&ring_with_chords(n)).expect("fixture graph has a Laplacian")
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}
