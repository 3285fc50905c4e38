//! Robust integral consensus for networks of double integrators coupled over a
//! directed graph.
//!
//! The crate covers the whole pipeline: build the graph Laplacian and its left
//! null vector, solve the shifted Lyapunov equation for a certificate `P`,
//! check the gain inequalities of the matched and unmatched controllers,
//! integrate either closed loop with fixed-step RK4, and post-process the
//! trajectories into consensus errors, mean-field states, Lyapunov values,
//! decay rates and orbit fits.
//!
//! ```
//! use consensus_net::graph::{build_laplacian, DirectedGraph};
//! use consensus_net::spectral::solve_p;
//!
//! let g = DirectedGraph::from_edges(3, &[(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)]).unwrap();
//! let lap = build_laplacian(&g).unwrap();
//! assert!(lap.has_spanning_tree);
//! let cert = solve_p(&lap, &nalgebra::DMatrix::identity(3, 3), 1.0).unwrap();
//! assert!(cert.residual < 1e-10);
//! ```

pub mod analysis;
pub mod artifacts;
pub mod dynamics;
pub mod error;
pub mod gains;
pub mod graph;
pub mod linalg;
pub mod plot;
pub mod scenario;
pub mod sim;
pub mod spectral;

pub use analysis::{ErrorTriple, MeanField, OrbitFit};
pub use artifacts::RunArtifacts;
pub use dynamics::{DisturbanceProfile, Mode, Segment, SimState};
pub use error::{Error, Result};
pub use gains::{CertificationReport, Check, Gains, MatchedGains, UnmatchedGains};
pub use graph::{DirectedGraph, LaplacianData};
pub use scenario::Scenario;
pub use sim::{SimParams, Trajectory};
pub use spectral::LyapunovCertificate;
