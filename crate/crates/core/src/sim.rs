//! Fixed-step classical Runge–Kutta integration with switch times placed on
//! the step grid.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::SimState;
use crate::error::{Error, Result};
use crate::gains::CertificationReport;

/// Relative tolerance, in units of steps, for a time to count as on the grid.
const GRID_TOL: f64 = 1e-9;

/// A right-hand side `ż = f(t, z)` for the integrator.
///
/// `step_start` is the left end of the step that contains `t`; piecewise
/// inputs select their active piece from it, which keeps every step inside a
/// single smooth piece.
pub trait VectorField {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, step_start: f64, z: &DVector<f64>, out: &mut DVector<f64>);

    /// Times at which the field switches pieces; each must lie on the grid.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Adapts a smooth closure `f(t, z)` to [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, _step_start: f64, z: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&(self.f)(t, z));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
}

fn default_sample_every() -> usize {
    10
}

impl SimParams {
    pub fn new(t_final: f64, dt: f64, sample_every: usize) -> Self {
        Self {
            t_final,
            dt,
            sample_every,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::validation("sim.t_final", "must be positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::validation("sim.dt", "must be positive"));
        }
        if self.dt > self.t_final * (1.0 + GRID_TOL) {
            return Err(Error::validation("sim.dt", "must not exceed t_final"));
        }
        if self.sample_every == 0 {
            return Err(Error::validation("sim.sample_every", "must be at least 1"));
        }
        if grid_index(self.t_final, self.dt).is_none() {
            return Err(Error::validation(
                "sim.t_final",
                format!("{} is not a multiple of dt = {}", self.t_final, self.dt),
            ));
        }
        Ok(())
    }

    /// Number of steps to `t_final`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Largest divisor of the step count not exceeding `sample_every`, so the
    /// final state is always sampled and spacing stays uniform.
    pub fn effective_sample_every(&self) -> usize {
        let steps = self.n_steps().max(1);
        (1..=self.sample_every.min(steps))
            .rev()
            .find(|k| steps % k == 0)
            .unwrap_or(1)
    }

    pub fn sample_spacing(&self) -> f64 {
        self.effective_sample_every() as f64 * self.dt
    }
}

/// Step index of `t` when it lies on the grid of spacing `dt`.
pub fn grid_index(t: f64, dt: f64) -> Option<usize> {
    let k = t / dt;
    let r = k.round();
    if r >= 0.0 && (k - r).abs() <= GRID_TOL * r.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

/// Largest step `≤ requested` that divides `t_final` and every time in
/// `switch_times` lying inside the horizon.
pub fn align_dt(requested: f64, t_final: f64, switch_times: &[f64]) -> Result<f64> {
    if !(requested > 0.0 && t_final > 0.0) {
        return Err(Error::validation(
            "sim.dt",
            "dt and t_final must be positive",
        ));
    }
    let inside: Vec<f64> = switch_times
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s < t_final)
        .collect();
    let first = (t_final / requested * (1.0 - GRID_TOL)).ceil().max(1.0) as u64;
    let limit = first.saturating_mul(1000).max(first + 1_000_000);
    for m in first..=limit {
        let dt = t_final / m as f64;
        if dt <= requested * (1.0 + GRID_TOL) && inside.iter().all(|&s| grid_index(s, dt).is_some())
        {
            return Ok(dt);
        }
    }
    Err(Error::validation(
        "sim.dt",
        format!("no step size ≤ {requested} divides t_final and every switch time"),
    ))
}

/// Raw samples of a packed state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Samples {
    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("samples always include t = 0")
    }
}

/// Result of an integration that may have stopped early.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub samples: Samples,
    /// Last finite time when the state became non-finite.
    pub diverged_after: Option<f64>,
}

/// Rejects switch times inside the horizon that are not on the step grid.
pub fn check_switch_alignment(switch_times: &[f64], params: &SimParams) -> Result<()> {
    for (k, &bp) in switch_times.iter().enumerate() {
        if bp > 0.0 && bp < params.t_final && grid_index(bp, params.dt).is_none() {
            return Err(Error::validation(
                format!("disturbance[{}].t_start", k + 1),
                format!(
                    "switch time {bp} is not a multiple of dt = {}; enable dt alignment",
                    params.dt
                ),
            ));
        }
    }
    Ok(())
}

/// Integrates until `t_final` or until the state turns non-finite, keeping
/// every sample taken before that.
pub fn integrate_partial(
    field: &impl VectorField,
    z0: &DVector<f64>,
    params: &SimParams,
) -> Result<Outcome> {
    params.validate()?;
    if z0.len() != field.dim() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: field.dim(),
            got: z0.len(),
        });
    }
    if z0.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("initial", "entries must be finite"));
    }
    check_switch_alignment(&field.breakpoints(), params)?;

    let h = params.dt;
    let steps = params.n_steps();
    let every = params.effective_sample_every();
    let dim = z0.len();
    let mut z = z0.clone();
    let mut k1 = DVector::zeros(dim);
    let mut k2 = DVector::zeros(dim);
    let mut k3 = DVector::zeros(dim);
    let mut k4 = DVector::zeros(dim);
    let mut tmp = DVector::zeros(dim);

    let mut samples = Samples {
        times: Vec::with_capacity(steps / every + 1),
        states: Vec::with_capacity(steps / every + 1),
    };
    samples.times.push(0.0);
    samples.states.push(z.clone());

    for step in 0..steps {
        let t = step as f64 * h;
        field.eval(t, t, &z, &mut k1);
        tmp.copy_from(&z);
        tmp.axpy(0.5 * h, &k1, 1.0);
        field.eval(t + 0.5 * h, t, &tmp, &mut k2);
        tmp.copy_from(&z);
        tmp.axpy(0.5 * h, &k2, 1.0);
        field.eval(t + 0.5 * h, t, &tmp, &mut k3);
        tmp.copy_from(&z);
        tmp.axpy(h, &k3, 1.0);
        field.eval(t + h, t, &tmp, &mut k4);

        k2.axpy(1.0, &k3, 1.0);
        k1.axpy(2.0, &k2, 1.0);
        k1.axpy(1.0, &k4, 1.0);
        z.axpy(h / 6.0, &k1, 1.0);

        if z.iter().any(|v| !v.is_finite()) {
            return Ok(Outcome {
                samples,
                diverged_after: Some(t),
            });
        }
        if (step + 1) % every == 0 {
            samples.times.push((step + 1) as f64 * h);
            samples.states.push(z.clone());
        }
    }
    Ok(Outcome {
        samples,
        diverged_after: None,
    })
}

/// Integrates to `t_final`; a non-finite state is an error.
pub fn integrate(
    field: &impl VectorField,
    z0: &DVector<f64>,
    params: &SimParams,
) -> Result<Samples> {
    let out = integrate_partial(field, z0, params)?;
    match out.diverged_after {
        Some(t) => Err(Error::Divergence { last_finite_t: t }),
        None => Ok(out.samples),
    }
}

/// Observed order of accuracy, or `Exact` when the coarse run already hits
/// round-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Observed(f64),
    Exact,
}

/// Richardson-style order estimate from runs at `dt` and `dt/2` against a
/// reference at `dt/100`, compared at `t_final`.
pub fn convergence_order(
    field: &impl VectorField,
    z0: &DVector<f64>,
    params: &SimParams,
) -> Result<Order> {
    let final_state = |dt: f64| -> Result<DVector<f64>> {
        let p = SimParams::new(params.t_final, dt, usize::MAX);
        Ok(integrate(field, z0, &p)?.last().clone())
    };
    let coarse = final_state(params.dt)?;
    let half = final_state(params.dt / 2.0)?;
    let reference = final_state(params.dt / 100.0)?;
    let floor = 1e-13 * (1.0 + crate::linalg::max_abs_vec(&reference));
    let e_coarse = crate::linalg::max_abs_vec(&(coarse - &reference));
    let e_half = crate::linalg::max_abs_vec(&(half - &reference));
    if e_coarse <= floor {
        return Ok(Order::Exact);
    }
    if e_half <= floor {
        return Err(Error::Fit(format!(
            "dt/2 error {e_half:e} is at round-off; use a larger dt"
        )));
    }
    Ok(Order::Observed((e_coarse / e_half).log2()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SimState>,
    pub scenario_id: String,
    pub gain_report: Option<CertificationReport>,
}

impl Trajectory {
    pub fn from_samples(samples: Samples, scenario_id: impl Into<String>) -> Self {
        let states = samples
            .times
            .iter()
            .zip(&samples.states)
            .map(|(&t, z)| SimState::from_vector(z, t))
            .collect();
        Self {
            times: samples.times,
            states,
            scenario_id: scenario_id.into(),
            gain_report: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n(&self) -> usize {
        self.states.first().map_or(0, SimState::n)
    }

    /// Index of the sample nearest `t`, if it lies within half a spacing.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        if self.times.is_empty() {
            return None;
        }
        let idx = self.times.partition_point(|&s| s < t);
        let candidates = [idx.saturating_sub(1), idx.min(self.times.len() - 1)];
        let best = candidates.into_iter().min_by(|&a, &b| {
            (self.times[a] - t)
                .abs()
                .total_cmp(&(self.times[b] - t).abs())
        })?;
        let spacing = if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        };
        ((self.times[best] - t).abs() <= 0.5 * spacing + 1e-12).then_some(best)
    }

    pub fn state_at(&self, t: f64) -> Option<&SimState> {
        self.index_at(t).map(|i| &self.states[i])
    }

    pub fn last(&self) -> Option<&SimState> {
        self.states.last()
    }
}

/// Integrates a closed loop from a [`SimState`] and wraps the result.
pub fn simulate(
    field: &impl VectorField,
    x0: &SimState,
    params: &SimParams,
    scenario_id: &str,
) -> Result<Trajectory> {
    let samples = integrate(field, &x0.to_vector(), params)?;
    Ok(Trajectory::from_samples(samples, scenario_id))
}
