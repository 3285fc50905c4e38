//! Scenario files and the two built-in reproductions.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ClosedLoop, DisturbanceProfile, Mode, Segment, SimState};
use crate::error::{Error, Result};
use crate::gains::{Gains, MatchedGains, UnmatchedGains};
use crate::graph::{build_laplacian, DirectedGraph, GraphFile, LaplacianData};
use crate::sim::{align_dt, SimParams};
use crate::spectral::{solve_p, LyapunovCertificate};

pub const BUILTIN_MATCHED: &str = "paper-matched";
pub const BUILTIN_UNMATCHED: &str = "paper-unmatched";
pub const BUILTINS: [&str; 2] = [BUILTIN_MATCHED, BUILTIN_UNMATCHED];

/// `Q = q_scale·I` and the shift `α` of the certificate equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSpec {
    #[serde(default = "one")]
    pub q_scale: f64,
    #[serde(default = "one")]
    pub alpha: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for LyapunovSpec {
    fn default() -> Self {
        Self {
            q_scale: 1.0,
            alpha: 1.0,
        }
    }
}

/// Initial condition: explicit vectors (`y0`, `delta_hat0` default to zero)
/// or positions drawn uniformly from `x_range` with a seeded generator.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Vectors {
        x0: Vec<f64>,
        y0: Option<Vec<f64>>,
        delta_hat0: Option<Vec<f64>>,
    },
    Random {
        seed: u64,
        x_range: (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomInitial {
    seed: u64,
    #[serde(default = "unit_range")]
    x_range: (f64, f64),
}

fn unit_range() -> (f64, f64) {
    (-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta_hat0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    random: Option<RandomInitial>,
}

/// Matched gains as written in files; `gamma4`, `rho`, `epsilon` default to
/// their substituted values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchedGainsFile {
    gamma1: f64,
    gamma2: f64,
    gamma3: f64,
    mu: f64,
    b: f64,
    #[serde(default)]
    gamma4: Option<f64>,
    #[serde(default)]
    rho: Option<f64>,
    #[serde(default)]
    epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    fig1_substitute: bool,
    graph: GraphFile,
    mode: Mode,
    gains: serde_json::Value,
    #[serde(default)]
    lyapunov: LyapunovSpec,
    disturbance: Vec<Segment>,
    initial: InitialFile,
    sim: SimParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Marks the built-in graph as a stand-in for an unpublished topology.
    pub fig1_substitute: bool,
    pub graph: DirectedGraph,
    pub mode: Mode,
    pub gains: Gains,
    pub lyapunov: LyapunovSpec,
    pub disturbance: DisturbanceProfile,
    pub initial: InitialSpec,
    pub sim: SimParams,
}

fn parse_at<T: DeserializeOwned>(value: &serde_json::Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            prefix.to_string()
        } else {
            format!("{prefix}.{inner}")
        };
        Error::validation(path, e.into_inner().to_string())
    })
}

fn check_len(path: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::validation(
            path,
            format!("expected {n} entries, got {}", v.len()),
        ));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::validation(format!("{path}[{i}]"), "must be finite"));
    }
    Ok(())
}

impl Scenario {
    /// Parses and validates scenario JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::validation(e.path().to_string(), e.into_inner().to_string()))?;
        Self::from_file(file)
    }

    fn from_file(f: ScenarioFile) -> Result<Self> {
        let graph = f.graph.to_graph("graph")?;
        let gains = match f.mode {
            Mode::Matched => {
                let m: MatchedGainsFile = parse_at(&f.gains, "gains")?;
                let base =
                    MatchedGains::with_substitutions(m.gamma1, m.gamma2, m.gamma3, m.mu, m.b);
                Gains::Matched(MatchedGains {
                    gamma4: m.gamma4.unwrap_or(base.gamma4),
                    rho: m.rho.unwrap_or(base.rho),
                    epsilon: m.epsilon.unwrap_or(base.epsilon),
                    ..base
                })
            }
            Mode::Unmatched => Gains::Unmatched(parse_at::<UnmatchedGains>(&f.gains, "gains")?),
        };
        let disturbance = DisturbanceProfile::new(f.disturbance)?;
        let initial = match (f.initial.random, f.initial.x0) {
            (Some(r), None) if f.initial.y0.is_none() && f.initial.delta_hat0.is_none() => {
                InitialSpec::Random {
                    seed: r.seed,
                    x_range: r.x_range,
                }
            }
            (None, Some(x0)) => InitialSpec::Vectors {
                x0,
                y0: f.initial.y0,
                delta_hat0: f.initial.delta_hat0,
            },
            _ => {
                return Err(Error::validation(
                    "initial",
                    "give either x0 (with optional y0, delta_hat0) or random, not both",
                ))
            }
        };
        let s = Self {
            name: f.name,
            fig1_substitute: f.fig1_substitute,
            graph,
            mode: f.mode,
            gains,
            lyapunov: f.lyapunov,
            disturbance,
            initial,
            sim: f.sim,
        };
        s.validate()?;
        Ok(s)
    }

    fn to_file(&self) -> ScenarioFile {
        let gains = match &self.gains {
            Gains::Matched(g) => serde_json::to_value(g),
            Gains::Unmatched(g) => serde_json::to_value(g),
        }
        .expect("gains serialize to JSON");
        let initial = match &self.initial {
            InitialSpec::Vectors { x0, y0, delta_hat0 } => InitialFile {
                x0: Some(x0.clone()),
                y0: y0.clone(),
                delta_hat0: delta_hat0.clone(),
                random: None,
            },
            InitialSpec::Random { seed, x_range } => InitialFile {
                x0: None,
                y0: None,
                delta_hat0: None,
                random: Some(RandomInitial {
                    seed: *seed,
                    x_range: *x_range,
                }),
            },
        };
        ScenarioFile {
            name: self.name.clone(),
            fig1_substitute: self.fig1_substitute,
            graph: self.graph.to_file(),
            mode: self.mode,
            gains,
            lyapunov: self.lyapunov,
            disturbance: self.disturbance.segments().to_vec(),
            initial,
            sim: self.sim,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s =
            serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes to JSON");
        s.push('\n');
        s
    }

    pub fn n(&self) -> usize {
        self.graph.n_agents()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let mode_ok = matches!(
            (self.mode, &self.gains),
            (Mode::Matched, Gains::Matched(_)) | (Mode::Unmatched, Gains::Unmatched(_))
        );
        if !mode_ok {
            return Err(Error::validation(
                "gains",
                format!("gains do not belong to mode {}", self.mode),
            ));
        }
        self.gains.validate().map_err(|e| match e {
            Error::Validation { path, reason } => {
                Error::validation(format!("gains.{path}"), reason)
            }
            other => other,
        })?;
        for (field, value) in [
            ("q_scale", self.lyapunov.q_scale),
            ("alpha", self.lyapunov.alpha),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::validation(
                    format!("lyapunov.{field}"),
                    "must be positive",
                ));
            }
        }
        if self.disturbance.n() != n {
            return Err(Error::validation(
                "disturbance[0].base",
                format!("expected {n} entries, got {}", self.disturbance.n()),
            ));
        }
        match &self.initial {
            InitialSpec::Vectors { x0, y0, delta_hat0 } => {
                check_len("initial.x0", x0, n)?;
                if let Some(y0) = y0 {
                    check_len("initial.y0", y0, n)?;
                }
                if let Some(d0) = delta_hat0 {
                    check_len("initial.delta_hat0", d0, n)?;
                }
            }
            InitialSpec::Random {
                x_range: (lo, hi), ..
            } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::validation(
                        "initial.random.x_range",
                        "needs finite lo ≤ hi",
                    ));
                }
            }
        }
        self.sim.validate()?;
        crate::sim::check_switch_alignment(&self.disturbance.switch_times(), &self.sim)
    }

    pub fn initial_state(&self) -> SimState {
        let n = self.n();
        match &self.initial {
            InitialSpec::Vectors { x0, y0, delta_hat0 } => {
                let vec_or_zero = |v: &Option<Vec<f64>>| {
                    v.as_ref()
                        .map_or_else(|| DVector::zeros(n), |v| DVector::from_column_slice(v))
                };
                SimState {
                    x: DVector::from_column_slice(x0),
                    y: vec_or_zero(y0),
                    delta_hat: vec_or_zero(delta_hat0),
                    t: 0.0,
                }
            }
            InitialSpec::Random {
                seed,
                x_range: (lo, hi),
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let x = DVector::from_fn(n, |_, _| {
                    if lo == hi {
                        *lo
                    } else {
                        rng.random_range(*lo..=*hi)
                    }
                });
                SimState {
                    x,
                    ..SimState::zeros(n)
                }
            }
        }
    }

    /// Overrides the horizon and step. With `align`, the step is reduced to
    /// the largest value dividing `t_final` and every switch time.
    pub fn with_sim_overrides(
        mut self,
        t_final: Option<f64>,
        dt: Option<f64>,
        align: bool,
    ) -> Result<Self> {
        if let Some(t) = t_final {
            self.sim.t_final = t;
        }
        if let Some(dt) = dt {
            self.sim.dt = dt;
        }
        if align {
            self.sim.dt = align_dt(
                self.sim.dt,
                self.sim.t_final,
                &self.disturbance.switch_times(),
            )?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn q(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) * self.lyapunov.q_scale
    }

    pub fn laplacian(&self) -> Result<LaplacianData> {
        build_laplacian(&self.graph)
    }

    pub fn certificate(&self, lap: &LaplacianData) -> Result<LyapunovCertificate> {
        solve_p(lap, &self.q(), self.lyapunov.alpha)
    }

    pub fn closed_loop(&self, lap: &LaplacianData) -> Result<ClosedLoop> {
        ClosedLoop::new(self.gains, lap, self.disturbance.clone())
    }
}

/// Built-in five-agent topology: a spanning tree rooted at agent 1
/// (1→2, 2→3, 3→4, 2→5) plus the edges 1→3 and 4→1.
///
/// With the tree alone the matched loop's slowest consensus mode decays too
/// slowly for the errors to settle below 1e-3 within 30 s; the two extra
/// edges make agents 1–4 a strongly connected core feeding agent 5.
pub fn default_graph() -> DirectedGraph {
    DirectedGraph::from_edges(
        5,
        &[
            (1, 2, 1.0),
            (2, 3, 1.0),
            (3, 4, 1.0),
            (2, 5, 1.0),
            (1, 3, 1.0),
            (4, 1, 1.0),
        ],
    )
    .expect("built-in graph is valid")
}

/// Switching disturbance shared by both built-ins: `d_a + 1/(12+t)` before
/// the switch, `d_b + exp(−0.2t)/(12+t)` after it.
pub fn switching_disturbance(t_switch: f64) -> DisturbanceProfile {
    DisturbanceProfile::new(vec![
        Segment {
            hyperbolic_coeff: 1.0,
            ..Segment::constant(0.0, vec![0.1, -0.1, 0.2, -0.2, 0.1])
        },
        Segment {
            exp_coeff: 1.0,
            exp_rate: 0.2,
            ..Segment::constant(t_switch, vec![0.2, -0.2, -0.1, 0.2, -0.3])
        },
    ])
    .expect("built-in disturbance is valid")
}

pub fn builtin(name: &str) -> Option<Scenario> {
    let x0 = vec![1.0, -0.5, 0.5, -1.0, 0.0];
    match name {
        BUILTIN_MATCHED => Some(Scenario {
            name: BUILTIN_MATCHED.into(),
            fig1_substitute: true,
            graph: default_graph(),
            mode: Mode::Matched,
            gains: Gains::Matched(MatchedGains::with_substitutions(6.0, 17.0, 4.0, 1.0, 10.0)),
            lyapunov: LyapunovSpec::default(),
            disturbance: switching_disturbance(50.0),
            initial: InitialSpec::Vectors {
                x0,
                y0: None,
                delta_hat0: None,
            },
            sim: SimParams::new(100.0, 1e-3, 10),
        }),
        BUILTIN_UNMATCHED => Some(Scenario {
            name: BUILTIN_UNMATCHED.into(),
            fig1_substitute: true,
            graph: default_graph(),
            mode: Mode::Unmatched,
            gains: Gains::Unmatched(UnmatchedGains {
                k_x: 3.4,
                k_d: 7.5,
                k_s: 5.0,
                alpha1: 7.5,
                nu: 3.0,
                alpha2: 1.0,
            }),
            lyapunov: LyapunovSpec::default(),
            disturbance: switching_disturbance(20.0),
            initial: InitialSpec::Vectors {
                x0,
                y0: Some(vec![1.0, 0.0, 0.5, 0.0, -0.5]),
                delta_hat0: None,
            },
            sim: SimParams::new(40.0, 1e-3, 10),
        }),
        _ => None,
    }
}

/// Loads a built-in by name or a scenario file by path.
pub fn load_scenario(spec: &str) -> Result<Scenario> {
    if let Some(s) = builtin(spec) {
        return Ok(s);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_json(&text)
}

pub fn save_scenario(s: &Scenario, path: &Path) -> Result<()> {
    crate::artifacts::write_atomic(path, s.to_json().as_bytes())
}
