//! Weighted directed interconnection graphs and their Laplacians.
//!
//! Orientation: `weights[(i, j)] = a_ij > 0` means agent `i` receives the
//! state of agent `j`, i.e. there is an edge `j → i`. Reachability for the
//! spanning-tree test follows that transmit direction.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance below which a clamped left-eigenvector entry is treated as zero.
const CLAMP_TOL: f64 = 1e-12;
/// Second-smallest eigenvalue modulus below which the zero eigenvalue is
/// considered non-simple.
const SIMPLE_ZERO_TOL: f64 = 1e-8;
/// Maximum tolerated `|vᵀL|` entry.
const LEFT_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    weights: DMatrix<f64>,
}

impl DirectedGraph {
    /// Wraps an adjacency matrix after checking it: square, at least one
    /// agent, finite nonnegative entries and an empty diagonal.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() == 0 {
            return Err(Error::validation(
                "weights",
                "graph needs at least one agent",
            ));
        }
        if weights.nrows() != weights.ncols() {
            return Err(Error::Dimension {
                what: "adjacency matrix columns",
                expected: weights.nrows(),
                got: weights.ncols(),
            });
        }
        let n = weights.nrows();
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::validation(
                        format!("weights[{i}][{j}]"),
                        format!("edge weight must be finite and nonnegative, got {w}"),
                    ));
                }
                if i == j && w != 0.0 {
                    return Err(Error::validation(
                        format!("weights[{i}][{i}]"),
                        format!("self connections are not allowed, got {w}"),
                    ));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Builds a graph from 1-based `(from, to, weight)` triples.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let file = GraphFile {
            n,
            edges: edges
                .iter()
                .map(|&(from, to, w)| EdgeSpec { from, to, w })
                .collect(),
        };
        file.to_graph("")
    }

    pub fn n_agents(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Agents that agent `i` listens to (0-based).
    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_agents()).filter(move |&j| self.weights[(i, j)] > 0.0)
    }

    pub fn to_file(&self) -> GraphFile {
        let n = self.n_agents();
        let mut edges = Vec::new();
        for to in 0..n {
            for from in 0..n {
                let w = self.weights[(to, from)];
                if w > 0.0 {
                    edges.push(EdgeSpec {
                        from: from + 1,
                        to: to + 1,
                        w,
                    });
                }
            }
        }
        GraphFile { n, edges }
    }
}

/// JSON form of a graph: `{"n": 3, "edges": [{"from": 1, "to": 2, "w": 1.0}]}`
/// with 1-based agent indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    pub w: f64,
}

impl GraphFile {
    /// Validates and converts. `prefix` is prepended to error paths so that a
    /// graph embedded in a scenario reports e.g. `graph.edges[2].w`.
    pub fn to_graph(&self, prefix: &str) -> Result<DirectedGraph> {
        let at = |field: &str| {
            if prefix.is_empty() {
                field.to_string()
            } else {
                format!("{prefix}.{field}")
            }
        };
        if self.n == 0 {
            return Err(Error::validation(at("n"), "graph needs at least one agent"));
        }
        let n = self.n;
        let mut weights = DMatrix::zeros(n, n);
        for (k, e) in self.edges.iter().enumerate() {
            if e.from == 0 || e.from > n {
                return Err(Error::validation(
                    at(&format!("edges[{k}].from")),
                    format!("agent index {} outside 1..={n}", e.from),
                ));
            }
            if e.to == 0 || e.to > n {
                return Err(Error::validation(
                    at(&format!("edges[{k}].to")),
                    format!("agent index {} outside 1..={n}", e.to),
                ));
            }
            if e.from == e.to {
                return Err(Error::validation(
                    at(&format!("edges[{k}]")),
                    format!("self connection on agent {}", e.from),
                ));
            }
            if !e.w.is_finite() || e.w < 0.0 {
                return Err(Error::validation(
                    at(&format!("edges[{k}].w")),
                    format!("edge weight must be finite and nonnegative, got {}", e.w),
                ));
            }
            let slot = &mut weights[(e.to - 1, e.from - 1)];
            if *slot != 0.0 {
                return Err(Error::validation(
                    at(&format!("edges[{k}]")),
                    format!("duplicate edge {} -> {}", e.from, e.to),
                ));
            }
            *slot = e.w;
        }
        DirectedGraph::new(weights)
    }
}

pub fn load_graph(path: &Path) -> Result<DirectedGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let file: GraphFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::validation(e.path().to_string(), e.inner().to_string()))?;
    file.to_graph("")
}

#[derive(Debug, Clone)]
pub struct LaplacianData {
    pub l: DMatrix<f64>,
    pub has_spanning_tree: bool,
    /// Left null vector of `L`, nonnegative and summing to one. `None` when
    /// the graph has no spanning tree (the null space is then not simple).
    pub v_left: Option<DVector<f64>>,
    /// Spectral norm of `L`.
    pub lambda_l: f64,
    /// Every eigenvalue apart from the (single) zero one has positive real
    /// part.
    pub nonzero_eigenvalue_real_parts_positive: bool,
}

impl LaplacianData {
    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    /// The left eigenvector, or a degeneracy error when the graph has no
    /// spanning tree.
    pub fn v(&self) -> Result<&DVector<f64>> {
        self.v_left.as_ref().ok_or_else(|| {
            Error::Degenerate(
                "graph has no directed spanning tree; left eigenvector undefined".into(),
            )
        })
    }
}

/// `L_ii = Σ_k a_ik`, `L_ij = −a_ij`.
pub fn laplacian_matrix(g: &DirectedGraph) -> DMatrix<f64> {
    let a = g.weights();
    let n = g.n_agents();
    DMatrix::from_fn(
        n,
        n,
        |i, j| {
            if i == j {
                a.row(i).sum()
            } else {
                -a[(i, j)]
            }
        },
    )
}

pub fn build_laplacian(g: &DirectedGraph) -> Result<LaplacianData> {
    let l = laplacian_matrix(g);
    let spanning = has_spanning_tree(g);
    let lambda_l = crate::spectral::spectral_norm(&l);
    let (v_left, positive) = if spanning {
        let v = left_eigenvector(&l)?;
        let ev = linalg::eigenvalues(&l);
        // ev is sorted by modulus; ev[0] is the zero eigenvalue.
        let positive = ev.iter().skip(1).all(|z| z.re > 1e-9);
        (Some(v), positive)
    } else {
        (None, false)
    };
    Ok(LaplacianData {
        l,
        has_spanning_tree: spanning,
        v_left,
        lambda_l,
        nonzero_eigenvalue_real_parts_positive: positive,
    })
}

/// True when some agent reaches every other agent along transmit edges.
pub fn has_spanning_tree(g: &DirectedGraph) -> bool {
    let n = g.n_agents();
    // out[j] = agents that hear j.
    let out: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..n).filter(|&i| g.weights()[(i, j)] > 0.0).collect())
        .collect();
    (0..n).any(|root| reach_count(&out, root) == n)
}

fn reach_count(out: &[Vec<usize>], root: usize) -> usize {
    let mut seen = vec![false; out.len()];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    let mut count = 1;
    while let Some(j) = queue.pop_front() {
        for &i in &out[j] {
            if !seen[i] {
                seen[i] = true;
                count += 1;
                queue.push_back(i);
            }
        }
    }
    count
}

/// Left null vector of a Laplacian with a simple zero eigenvalue, normalised
/// so its entries sum to one.
///
/// The null space of `Lᵀ` is read off the singular vector of the smallest
/// singular value, which is robust for an eigenvalue known to be exactly
/// zero.
pub fn left_eigenvector(l: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = l.nrows();
    if n != l.ncols() {
        return Err(Error::Dimension {
            what: "Laplacian columns",
            expected: n,
            got: l.ncols(),
        });
    }
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let ev = linalg::eigenvalues(l);
    if ev[1].norm() < SIMPLE_ZERO_TOL {
        return Err(Error::Degenerate(format!(
            "zero eigenvalue is not simple (second smallest |λ| = {:.3e})",
            ev[1].norm()
        )));
    }

    let svd = l.transpose().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let mut v: DVector<f64> = v_t.row(k).transpose();
    let s = v.sum();
    if s.abs() < f64::EPSILON {
        return Err(Error::Degenerate("left null vector sums to zero".into()));
    }
    v /= s;
    for (i, x) in v.iter_mut().enumerate() {
        if *x < 0.0 {
            if *x >= -CLAMP_TOL {
                *x = 0.0;
            } else {
                return Err(Error::Degenerate(format!(
                    "left null vector has negative entry v[{i}] = {x:.3e}"
                )));
            }
        }
    }
    v /= v.sum();

    let residual = linalg::max_abs_vec(&(l.transpose() * &v));
    if residual >= LEFT_RESIDUAL_TOL {
        return Err(Error::Degenerate(format!(
            "left null vector residual {residual:.3e} exceeds {LEFT_RESIDUAL_TOL:e}"
        )));
    }
    Ok(v)
}
