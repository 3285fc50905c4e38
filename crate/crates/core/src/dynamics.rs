//! Disturbance profiles and the two closed-loop vector fields in physical
//! coordinates `(x, y, δ̂)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::{Gains, MatchedGains, UnmatchedGains};
use crate::graph::LaplacianData;
use crate::sim::VectorField;

fn default_offset() -> f64 {
    12.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// One piece of a disturbance profile, active from `t_start` until the next
/// segment starts:
/// `d(t) = base + c_h/(τ + t) + c_e·exp(−r·t)/(τ + t)` with `τ = offset`.
/// The scalar terms are broadcast to every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub t_start: f64,
    pub base: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub hyperbolic_coeff: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub exp_coeff: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub exp_rate: f64,
    #[serde(default = "default_offset")]
    pub offset: f64,
}

impl Segment {
    pub fn constant(t_start: f64, base: Vec<f64>) -> Self {
        Self {
            t_start,
            base,
            hyperbolic_coeff: 0.0,
            exp_coeff: 0.0,
            exp_rate: 0.0,
            offset: default_offset(),
        }
    }

    /// Scalar time-varying part added to every entry of `base`.
    pub fn scalar_term(&self, t: f64) -> f64 {
        let denom = self.offset + t;
        let mut s = 0.0;
        if self.hyperbolic_coeff != 0.0 {
            s += self.hyperbolic_coeff / denom;
        }
        if self.exp_coeff != 0.0 {
            s += self.exp_coeff * (-self.exp_rate * t).exp() / denom;
        }
        s
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let s = self.scalar_term(t);
        DVector::from_iterator(self.base.len(), self.base.iter().map(|b| b + s))
    }

    fn eval_into(&self, t: f64, out: &mut DVector<f64>) {
        let s = self.scalar_term(t);
        for (o, b) in out.iter_mut().zip(&self.base) {
            *o = b + s;
        }
    }

    pub fn is_constant(&self) -> bool {
        self.hyperbolic_coeff == 0.0 && self.exp_coeff == 0.0
    }
}

/// Piecewise disturbance signal; right-continuous at segment starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct DisturbanceProfile {
    segments: Vec<Segment>,
}

impl TryFrom<Vec<Segment>> for DisturbanceProfile {
    type Error = Error;

    fn try_from(segments: Vec<Segment>) -> Result<Self> {
        Self::new(segments)
    }
}

impl From<DisturbanceProfile> for Vec<Segment> {
    fn from(p: DisturbanceProfile) -> Self {
        p.segments
    }
}

impl DisturbanceProfile {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::validation("disturbance", "at least one segment is required"))?;
        if first.t_start != 0.0 {
            return Err(Error::validation(
                "disturbance[0].t_start",
                "the first segment must start at 0",
            ));
        }
        let n = first.base.len();
        if n == 0 {
            return Err(Error::validation(
                "disturbance[0].base",
                "must not be empty",
            ));
        }
        for (k, seg) in segments.iter().enumerate() {
            if seg.base.len() != n {
                return Err(Error::validation(
                    format!("disturbance[{k}].base"),
                    format!("expected {n} entries, got {}", seg.base.len()),
                ));
            }
            if let Some(i) = seg.base.iter().position(|b| !b.is_finite()) {
                return Err(Error::validation(
                    format!("disturbance[{k}].base[{i}]"),
                    "must be finite",
                ));
            }
            for (field, value) in [
                ("hyperbolic_coeff", seg.hyperbolic_coeff),
                ("exp_coeff", seg.exp_coeff),
                ("exp_rate", seg.exp_rate),
            ] {
                if !value.is_finite() {
                    return Err(Error::validation(
                        format!("disturbance[{k}].{field}"),
                        "must be finite",
                    ));
                }
            }
            if !(seg.offset.is_finite() && seg.offset > 0.0) {
                return Err(Error::validation(
                    format!("disturbance[{k}].offset"),
                    "must be positive",
                ));
            }
            if k > 0 && (seg.t_start.is_nan() || seg.t_start <= segments[k - 1].t_start) {
                return Err(Error::validation(
                    format!("disturbance[{k}].t_start"),
                    "segment start times must be strictly increasing",
                ));
            }
            if !seg.t_start.is_finite() {
                return Err(Error::validation(
                    format!("disturbance[{k}].t_start"),
                    "must be finite",
                ));
            }
        }
        Ok(Self { segments })
    }

    pub fn constant(base: Vec<f64>) -> Result<Self> {
        Self::new(vec![Segment::constant(0.0, base)])
    }

    pub fn n(&self) -> usize {
        self.segments[0].base.len()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Start times of every segment after the first.
    pub fn switch_times(&self) -> Vec<f64> {
        self.segments[1..].iter().map(|s| s.t_start).collect()
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.segments.iter().all(Segment::is_constant)
    }

    /// Index of the segment active at `t` (right-continuous).
    pub fn segment_index(&self, t: f64) -> usize {
        self.segments
            .partition_point(|s| s.t_start <= t)
            .saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        self.segments[self.segment_index(t)].eval(t)
    }

    /// Left limit `d(t⁻)`; equals `eval(t)` away from switch times.
    pub fn eval_left(&self, t: f64) -> DVector<f64> {
        let idx = self
            .segments
            .partition_point(|s| s.t_start < t)
            .saturating_sub(1);
        self.segments[idx].eval(t)
    }

    /// Evaluates at `t` with the segment selected by `anchor`, the left end of
    /// the integration step containing `t`.
    pub fn eval_anchored_into(&self, t: f64, anchor: f64, out: &mut DVector<f64>) {
        self.segments[self.segment_index(anchor)].eval_into(t, out);
    }
}

/// Which disturbance channel the loop is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Matched,
    Unmatched,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Matched => "matched",
            Mode::Unmatched => "unmatched",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched" => Ok(Mode::Matched),
            "unmatched" => Ok(Mode::Unmatched),
            other => Err(Error::validation(
                "mode",
                format!("expected matched or unmatched, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub delta_hat: DVector<f64>,
    pub t: f64,
}

impl SimState {
    pub fn new(x: DVector<f64>, y: DVector<f64>, delta_hat: DVector<f64>, t: f64) -> Result<Self> {
        let n = x.len();
        for (what, v) in [("y", &y), ("delta_hat", &delta_hat)] {
            if v.len() != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        let s = Self { x, y, delta_hat, t };
        if !s.is_finite() {
            return Err(Error::validation("state", "entries must be finite"));
        }
        Ok(s)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            x: DVector::zeros(n),
            y: DVector::zeros(n),
            delta_hat: DVector::zeros(n),
            t: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(self.y.iter())
            .chain(self.delta_hat.iter())
            .all(|v| v.is_finite())
    }

    /// Stacks `[x; y; δ̂]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(3 * n);
        out.rows_mut(0, n).copy_from(&self.x);
        out.rows_mut(n, n).copy_from(&self.y);
        out.rows_mut(2 * n, n).copy_from(&self.delta_hat);
        out
    }

    pub fn from_vector(z: &DVector<f64>, t: f64) -> Self {
        let n = z.len() / 3;
        Self {
            x: z.rows(0, n).into_owned(),
            y: z.rows(n, n).into_owned(),
            delta_hat: z.rows(2 * n, n).into_owned(),
            t,
        }
    }
}

/// Time derivative of a [`SimState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateRate {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub delta_hat: DVector<f64>,
}

/// `u = −γ1·L·x − γ2·y − γ3·δ̂`.
pub fn matched_control(state: &SimState, g: &MatchedGains, lap: &LaplacianData) -> DVector<f64> {
    -(&lap.l * &state.x) * g.gamma1 - &state.y * g.gamma2 - &state.delta_hat * g.gamma3
}

/// Matched loop at the state's own time.
pub fn matched_field(
    state: &SimState,
    g: &MatchedGains,
    lap: &LaplacianData,
    p: &DisturbanceProfile,
) -> StateRate {
    matched_rate(state, g, &lap.l, &p.eval(state.t))
}

/// `ẋ = y`, `ẏ = u + d`, `δ̂̇ = γ1·L·x + γ4·y` for a given disturbance value.
pub fn matched_rate(
    state: &SimState,
    g: &MatchedGains,
    l: &DMatrix<f64>,
    d: &DVector<f64>,
) -> StateRate {
    let lx = l * &state.x;
    let u = -&lx * g.gamma1 - &state.y * g.gamma2 - &state.delta_hat * g.gamma3;
    StateRate {
        x: state.y.clone(),
        y: u + d,
        delta_hat: lx * g.gamma1 + &state.y * g.gamma4,
    }
}

/// `ỹ = y − k_s·δ̂`.
pub fn y_tilde(state: &SimState, k_s: f64) -> DVector<f64> {
    &state.y - &state.delta_hat * k_s
}

/// `u = −k_x·L·x − k_d·ỹ − k_s·(α1·x + ν·ỹ)`.
pub fn unmatched_control(
    state: &SimState,
    g: &UnmatchedGains,
    lap: &LaplacianData,
) -> DVector<f64> {
    let yt = y_tilde(state, g.k_s);
    unmatched_input(state, g, &lap.l, &yt)
}

fn unmatched_input(
    state: &SimState,
    g: &UnmatchedGains,
    l: &DMatrix<f64>,
    yt: &DVector<f64>,
) -> DVector<f64> {
    -(l * &state.x) * g.k_x - yt * g.k_d - (&state.x * g.alpha1 + yt * g.nu) * g.k_s
}

/// Unmatched loop at the state's own time.
pub fn unmatched_field(
    state: &SimState,
    g: &UnmatchedGains,
    lap: &LaplacianData,
    p: &DisturbanceProfile,
) -> StateRate {
    unmatched_rate(state, g, &lap.l, &p.eval(state.t))
}

/// `ẋ = y + d`, `ẏ = u`, `δ̂̇ = −α1·x − ν·ỹ` for a given disturbance value.
pub fn unmatched_rate(
    state: &SimState,
    g: &UnmatchedGains,
    l: &DMatrix<f64>,
    d: &DVector<f64>,
) -> StateRate {
    let yt = y_tilde(state, g.k_s);
    let u = unmatched_input(state, g, l, &yt);
    StateRate {
        x: &state.y + d,
        y: u,
        delta_hat: -&state.x * g.alpha1 - yt * g.nu,
    }
}

/// Either closed loop packaged as a [`VectorField`] over `[x; y; δ̂]`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    gains: Gains,
    l: DMatrix<f64>,
    profile: DisturbanceProfile,
}

impl ClosedLoop {
    pub fn new(gains: Gains, lap: &LaplacianData, profile: DisturbanceProfile) -> Result<Self> {
        if profile.n() != lap.n() {
            return Err(Error::Dimension {
                what: "disturbance base",
                expected: lap.n(),
                got: profile.n(),
            });
        }
        Ok(Self {
            gains,
            l: lap.l.clone(),
            profile,
        })
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn profile(&self) -> &DisturbanceProfile {
        &self.profile
    }
}

impl VectorField for ClosedLoop {
    fn dim(&self) -> usize {
        3 * self.n()
    }

    fn eval(&self, t: f64, step_start: f64, z: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.n();
        let x = z.rows(0, n);
        let y = z.rows(n, n);
        let dh = z.rows(2 * n, n);
        let mut d = DVector::zeros(n);
        self.profile.eval_anchored_into(t, step_start, &mut d);
        let lx = &self.l * x;
        match &self.gains {
            Gains::Matched(g) => {
                out.rows_mut(0, n).copy_from(&y);
                let u = &lx * -g.gamma1 - y * g.gamma2 - dh * g.gamma3;
                out.rows_mut(n, n).copy_from(&(u + d));
                out.rows_mut(2 * n, n)
                    .copy_from(&(lx * g.gamma1 + y * g.gamma4));
            }
            Gains::Unmatched(g) => {
                let yt = y - dh * g.k_s;
                let u = &lx * -g.k_x - &yt * g.k_d - (x * g.alpha1 + &yt * g.nu) * g.k_s;
                out.rows_mut(0, n).copy_from(&(y + d));
                out.rows_mut(n, n).copy_from(&u);
                out.rows_mut(2 * n, n)
                    .copy_from(&(x * -g.alpha1 - yt * g.nu));
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.profile.switch_times()
    }
}
