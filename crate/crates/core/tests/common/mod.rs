#![allow(dead_code)]

use consensus_net::graph::{build_laplacian, DirectedGraph};
use consensus_net::LaplacianData;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random weighted digraph on `n` agents containing a directed spanning
/// tree: a random tree rooted at a random agent plus extra edges with
/// probability `density`.
pub fn spanning_tree_graph(n: usize, density: f64, rng: &mut impl Rng) -> DirectedGraph {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut w = DMatrix::zeros(n, n);
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        w[(order[k], parent)] = rng.random_range(0.2..2.0);
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && w[(i, j)] == 0.0 && rng.random_bool(density) {
                w[(i, j)] = rng.random_range(0.2..2.0);
            }
        }
    }
    DirectedGraph::new(w).expect("generated weights are valid")
}

/// Random digraph with no connectivity guarantee.
pub fn arbitrary_graph(n: usize, density: f64, rng: &mut impl Rng) -> DirectedGraph {
    let w = DMatrix::from_fn(n, n, |i, j| {
        if i != j && rng.random_bool(density) {
            rng.random_range(0.2..2.0)
        } else {
            0.0
        }
    });
    DirectedGraph::new(w).expect("generated weights are valid")
}

pub fn spanning_laplacian(n: usize, rng: &mut impl Rng) -> LaplacianData {
    let lap = build_laplacian(&spanning_tree_graph(n, 0.3, rng)).expect("laplacian");
    assert!(lap.has_spanning_tree);
    lap
}

/// Root-by-root depth-first reachability, following edges `j → i` whenever
/// `a_ij > 0`.
pub fn brute_force_spanning_tree(g: &DirectedGraph) -> bool {
    let n = g.n_agents();
    let w = g.weights();
    (0..n).any(|root| {
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(j) = stack.pop() {
            for i in 0..n {
                if w[(i, j)] > 0.0 && !seen[i] {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
        seen.iter().all(|&s| s)
    })
}

pub fn random_vector(n: usize, scale: f64, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Solves `PL + LᵀP + α(P·1·vᵀ + v·1ᵀ·P) = Q` as one `n² × n²` linear
/// system on `vec(P)` (column-major).
pub fn kronecker_lyapunov(
    l: &DMatrix<f64>,
    v: &DVector<f64>,
    q: &DMatrix<f64>,
    alpha: f64,
) -> DMatrix<f64> {
    let n = l.nrows();
    let idx = |r: usize, c: usize| c * n + r;
    let mut a = DMatrix::zeros(n * n, n * n);
    // (PM)_{rc} = Σ_k P_{rk} M_{kc}; (MᵀP)_{rc} = Σ_k M_{kr} P_{kc}.
    let ones_v = DMatrix::from_fn(n, n, |_, c| v[c]);
    let m = l + ones_v * alpha;
    for r in 0..n {
        for c in 0..n {
            for k in 0..n {
                a[(idx(r, c), idx(r, k))] += m[(k, c)];
                a[(idx(r, c), idx(k, c))] += m[(k, r)];
            }
        }
    }
    let rhs = DVector::from_fn(n * n, |i, _| q[(i % n, i / n)]);
    let sol = a.lu().solve(&rhs).expect("nonsingular vectorized system");
    DMatrix::from_fn(n, n, |r, c| sol[idx(r, c)])
}
