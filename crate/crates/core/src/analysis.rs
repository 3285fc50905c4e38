//! Quantities computed from trajectories: consensus errors, weighted
//! averages, Lyapunov values, decay and orbit fits, and the closed-form
//! averaged models.
//!
//! This is the only layer that uses the true disturbance `d`; the closed
//! loops never see it.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{y_tilde, DisturbanceProfile, SimState};
use crate::error::{Error, Result};
use crate::gains::{Gains, MatchedGains, UnmatchedGains};
use crate::linalg;
use crate::sim::Trajectory;

/// Projected errors `Π·(·)` with `Π = I − 1·vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTriple {
    pub e_x: DVector<f64>,
    pub e_y: DVector<f64>,
    pub e_d: DVector<f64>,
}

/// Weighted averages `vᵀ(·)` of the transformed state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub x_m: f64,
    pub y_m: f64,
    pub delta_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitFit {
    pub angular_frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    /// RMS of the fit residual over the RMS of the centred signal.
    pub residual: f64,
}

/// Velocity-like and disturbance-like transformed states:
/// matched `(y, δ̂ − d/γ3)`, unmatched `(y − k_s·δ̂, k_s·δ̂ + d)`.
pub fn transformed(state: &SimState, g: &Gains, d: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    match g {
        Gains::Matched(m) => (state.y.clone(), &state.delta_hat - d / m.gamma3),
        Gains::Unmatched(u) => (y_tilde(state, u.k_s), &state.delta_hat * u.k_s + d),
    }
}

fn project(v: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
    z - DVector::from_element(z.len(), v.dot(z))
}

pub fn consensus_errors(
    state: &SimState,
    v: &DVector<f64>,
    g: &Gains,
    d: &DVector<f64>,
) -> ErrorTriple {
    let (yt, dt) = transformed(state, g, d);
    ErrorTriple {
        e_x: project(v, &state.x),
        e_y: project(v, &yt),
        e_d: project(v, &dt),
    }
}

pub fn mean_field(state: &SimState, v: &DVector<f64>, g: &Gains, d: &DVector<f64>) -> MeanField {
    let (yt, dt) = transformed(state, g, d);
    MeanField {
        x_m: v.dot(&state.x),
        y_m: v.dot(&yt),
        delta_m: v.dot(&dt),
    }
}

fn quad(p: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(&(p * b))
}

/// `H = ½[e_x; e_y]ᵀ[[ρP, εP], [εP, 2μI]][e_x; e_y] + ½b[e_y; e_d]ᵀ[[2I, I], [I, I]][e_y; e_d]`.
pub fn lyapunov_h(e: &ErrorTriple, g: &MatchedGains, p: &DMatrix<f64>) -> f64 {
    let hs = 0.5
        * (g.rho * quad(p, &e.e_x, &e.e_x)
            + 2.0 * g.epsilon * quad(p, &e.e_x, &e.e_y)
            + 2.0 * g.mu * e.e_y.norm_squared());
    let hd =
        0.5 * g.b * (2.0 * e.e_y.norm_squared() + 2.0 * e.e_y.dot(&e.e_d) + e.e_d.norm_squared());
    hs + hd
}

/// `W = ½[e_x; e_y]ᵀ[[α1P, νP], [νP, α2I]][e_x; e_y] + (1/(2k_s))·e_dᵀPe_d`.
///
/// The `1/k_s` weight matches `ė_d = −k_s·Π(α1x + νỹ)`, so the cross terms
/// cancel for every `k_s`; at `k_s = 1` it reduces to `½e_dᵀPe_d`.
pub fn lyapunov_w(e: &ErrorTriple, g: &UnmatchedGains, p: &DMatrix<f64>) -> f64 {
    0.5 * (g.alpha1 * quad(p, &e.e_x, &e.e_x)
        + 2.0 * g.nu * quad(p, &e.e_x, &e.e_y)
        + g.alpha2 * e.e_y.norm_squared())
        + 0.5 / g.k_s * quad(p, &e.e_d, &e.e_d)
}

pub fn lyapunov(e: &ErrorTriple, g: &Gains, p: &DMatrix<f64>) -> f64 {
    match g {
        Gains::Matched(m) => lyapunov_h(e, m, p),
        Gains::Unmatched(u) => lyapunov_w(e, u, p),
    }
}

fn window_indices(times: &[f64], window: (f64, f64)) -> std::ops::Range<usize> {
    let lo = times.partition_point(|&t| t < window.0 - 1e-12);
    let hi = times.partition_point(|&t| t <= window.1 + 1e-12);
    lo..hi.max(lo)
}

/// Negated least-squares slope of `ln|signal|` over `window`.
pub fn fit_exponential_decay(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::Dimension {
            what: "decay fit values",
            expected: times.len(),
            got: values.len(),
        });
    }
    let r = window_indices(times, window);
    if r.len() < 2 {
        return Err(Error::Fit(format!(
            "window [{}, {}] holds fewer than two samples",
            window.0, window.1
        )));
    }
    let (ts, vs) = (&times[r.clone()], &values[r]);
    let sign = vs[0].signum();
    if vs
        .iter()
        .any(|&v| v == 0.0 || v.signum() != sign || !v.is_finite())
    {
        return Err(Error::Fit(
            "signal touches or crosses zero in the window; use a shorter window".into(),
        ));
    }
    let n = ts.len() as f64;
    let logs: Vec<f64> = vs.iter().map(|v| v.abs().ln()).collect();
    let tm = ts.iter().sum::<f64>() / n;
    let lm = logs.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, l) in ts.iter().zip(&logs) {
        num += (t - tm) * (l - lm);
        den += (t - tm) * (t - tm);
    }
    Ok(-num / den)
}

/// Fits `A·sin(ωt + φ) + c` over `window`: a zero-crossing frequency
/// estimate refined by Gauss–Newton on all four parameters.
pub fn fit_orbit(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<OrbitFit> {
    if times.len() != values.len() {
        return Err(Error::Dimension {
            what: "orbit fit values",
            expected: times.len(),
            got: values.len(),
        });
    }
    let r = window_indices(times, window);
    if r.len() < 8 {
        return Err(Error::Fit("no orbit: window holds too few samples".into()));
    }
    let (ts, vs) = (&times[r.clone()], &values[r]);
    let t0 = 0.5 * (ts[0] + ts[ts.len() - 1]);
    let tc: Vec<f64> = ts.iter().map(|t| t - t0).collect();
    let mean = vs.iter().sum::<f64>() / vs.len() as f64;
    let rms = (vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vs.len() as f64).sqrt();
    if !(rms > 0.0 && rms.is_finite()) {
        return Err(Error::Fit("no orbit: signal is constant".into()));
    }

    let mut crossings = Vec::new();
    for k in 1..vs.len() {
        let (a, b) = (vs[k - 1] - mean, vs[k] - mean);
        if a == 0.0 || a.signum() != b.signum() && b != 0.0 {
            let frac = if a == b { 0.0 } else { a / (a - b) };
            crossings.push(tc[k - 1] + frac * (tc[k] - tc[k - 1]));
        }
    }
    if crossings.len() < 3 {
        return Err(Error::Fit(format!(
            "no orbit: {} mean crossings in the window",
            crossings.len()
        )));
    }
    let half_period =
        (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let mut omega = std::f64::consts::PI / half_period;

    // Linear coefficients for a fixed ω: model a·sin(ωt) + b·cos(ωt) + c.
    let linear = |omega: f64| -> Option<Vector3> {
        let mut ata = nalgebra::Matrix3::zeros();
        let mut atb = Vector3::zeros();
        for (t, v) in tc.iter().zip(vs) {
            let row = Vector3::new((omega * t).sin(), (omega * t).cos(), 1.0);
            ata += row * row.transpose();
            atb += row * *v;
        }
        ata.cholesky().map(|c| c.solve(&atb))
    };
    let sse = |omega: f64, p: &Vector3| -> f64 {
        tc.iter()
            .zip(vs)
            .map(|(t, v)| (p[0] * (omega * t).sin() + p[1] * (omega * t).cos() + p[2] - v).powi(2))
            .sum()
    };
    let mut params = linear(omega).ok_or_else(|| Error::Fit("no orbit: singular fit".into()))?;
    let mut err = sse(omega, &params);
    for _ in 0..100 {
        let mut jtj = nalgebra::Matrix4::<f64>::zeros();
        let mut jtr = nalgebra::Vector4::<f64>::zeros();
        for (t, v) in tc.iter().zip(vs) {
            let (s, c) = (omega * t).sin_cos();
            let model = params[0] * s + params[1] * c + params[2];
            let row = nalgebra::Vector4::new(s, c, 1.0, t * (params[0] * c - params[1] * s));
            jtj += row * row.transpose();
            jtr += row * (v - model);
        }
        let Some(step) = jtj.cholesky().map(|ch| ch.solve(&jtr)) else {
            break;
        };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand_omega = omega + scale * step[3];
            let cand = params + scale * Vector3::new(step[0], step[1], step[2]);
            let cand_err = sse(cand_omega, &cand);
            if cand_err <= err {
                improved = cand_err < err;
                omega = cand_omega;
                params = cand;
                err = cand_err;
                break;
            }
            scale *= 0.5;
        }
        if !improved || (scale * step[3]).abs() <= 1e-15 * omega.abs() {
            break;
        }
    }

    let residual = (err / vs.len() as f64).sqrt() / rms;
    if omega.is_nan() || omega <= 0.0 || residual > 0.5 {
        return Err(Error::Fit(format!(
            "no orbit: fit residual {residual:.3} exceeds half the signal RMS"
        )));
    }
    let amplitude = params[0].hypot(params[1]);
    // a·sin(ωτ) + b·cos(ωτ) = A·sin(ωτ + θ), θ = atan2(b, a); τ = t − t0.
    let phase = (params[1].atan2(params[0]) - omega * t0).rem_euclid(2.0 * std::f64::consts::PI);
    Ok(OrbitFit {
        angular_frequency: omega,
        amplitude,
        phase,
        offset: params[2],
        residual,
    })
}

type Vector3 = nalgebra::Vector3<f64>;

/// Closed-form flow of `ẋ_m = y_m`, `[ẏ_m; δ̇_m] = 𝒮[y_m; δ_m]`.
pub fn averaged_model_matched(mf0: &MeanField, g: &MatchedGains, t: f64) -> MeanField {
    let s = g.s_matrix();
    let z0 = Vector2::new(mf0.y_m, mf0.delta_m);
    let e = linalg::expm2(&s, t);
    let z = e * z0;
    // ∫₀ᵗ e^{𝒮τ}dτ = 𝒮⁻¹(e^{𝒮t} − I); 𝒮 is invertible whenever γ3·γ4 ≠ 0.
    let integral = s.try_inverse().expect("γ3·γ4 ≠ 0") * (e - Matrix2::identity());
    MeanField {
        x_m: mf0.x_m + (integral * z0)[0],
        y_m: z[0],
        delta_m: z[1],
    }
}

/// Closed-form flow of `ẋ̄_m = ȳ_m + δ̄_m`, `ẏ̄_m = −k_d·ȳ_m`,
/// `δ̄̇_m = −k_s·(α1·x̄_m + ν·ȳ_m)`: a harmonic oscillator at
/// `ω = sqrt(k_s·α1)` forced by the decaying `ȳ_m`.
pub fn averaged_model_unmatched(mf0: &MeanField, g: &UnmatchedGains, t: f64) -> MeanField {
    let omega_sq = g.k_s * g.alpha1;
    let osc = Matrix2::new(0.0, 1.0, -omega_sq, 0.0);
    let forcing = Vector2::new(1.0, -g.k_s * g.nu);
    let decay = (-g.k_d * t).exp();
    // Particular solution c·e^{−k_d t} with (O + k_d I)c = −b·ȳ0; the shifted
    // matrix has determinant k_d² + ω² > 0.
    let c = -(osc + Matrix2::identity() * g.k_d)
        .try_inverse()
        .expect("k_d² + ω² > 0")
        * forcing
        * mf0.y_m;
    let z0 = Vector2::new(mf0.x_m, mf0.delta_m);
    let z = linalg::expm2(&osc, t) * (z0 - c) + c * decay;
    MeanField {
        x_m: z[0],
        y_m: mf0.y_m * decay,
        delta_m: z[1],
    }
}

pub fn averaged_model(mf0: &MeanField, g: &Gains, t: f64) -> MeanField {
    match g {
        Gains::Matched(m) => averaged_model_matched(mf0, m, t),
        Gains::Unmatched(u) => averaged_model_unmatched(mf0, u, t),
    }
}

/// `δ̂` at a time of interest next to its predicted limit `d(t⁻)/γ3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationCheckpoint {
    pub t: f64,
    pub delta_hat: Vec<f64>,
    pub predicted: Vec<f64>,
    pub max_abs_error: f64,
}

/// Checkpoints at every switch time inside the horizon (left limit, i.e. the
/// sample just before the new segment acts) and at the final time.
pub fn estimation_limits(
    traj: &Trajectory,
    profile: &DisturbanceProfile,
    g: &MatchedGains,
) -> Vec<EstimationCheckpoint> {
    let Some(t_end) = traj.times.last().copied() else {
        return Vec::new();
    };
    let mut times: Vec<f64> = profile
        .switch_times()
        .into_iter()
        .filter(|&s| s > 0.0 && s <= t_end)
        .collect();
    if times.last() != Some(&t_end) {
        times.push(t_end);
    }
    times
        .into_iter()
        .filter_map(|t| {
            let state = traj.state_at(t)?;
            let predicted = profile.eval_left(t) / g.gamma3;
            let max_abs_error = linalg::max_abs_vec(&(&state.delta_hat - &predicted));
            Some(EstimationCheckpoint {
                t,
                delta_hat: state.delta_hat.iter().copied().collect(),
                predicted: predicted.iter().copied().collect(),
                max_abs_error,
            })
        })
        .collect()
}

/// Per-sample error norms, averages and Lyapunov value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: f64,
    pub e_x: f64,
    pub e_y: f64,
    pub e_d: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub delta_m: f64,
    pub lyapunov: f64,
    /// `max |vᵀe_⋆|`, zero up to round-off.
    pub projector_residual: f64,
}

pub fn metrics(
    traj: &Trajectory,
    v: &DVector<f64>,
    g: &Gains,
    p: &DMatrix<f64>,
    profile: &DisturbanceProfile,
) -> Vec<MetricRow> {
    traj.states
        .iter()
        .map(|s| {
            let d = profile.eval(s.t);
            let e = consensus_errors(s, v, g, &d);
            let mf = mean_field(s, v, g, &d);
            MetricRow {
                t: s.t,
                e_x: e.e_x.norm(),
                e_y: e.e_y.norm(),
                e_d: e.e_d.norm(),
                x_m: mf.x_m,
                y_m: mf.y_m,
                delta_m: mf.delta_m,
                lyapunov: lyapunov(&e, g, p),
                projector_residual: v
                    .dot(&e.e_x)
                    .abs()
                    .max(v.dot(&e.e_y).abs())
                    .max(v.dot(&e.e_d).abs()),
            }
        })
        .collect()
}

/// Earliest time after which `values` stay below `threshold` through the end
/// of the series, provided that stretch lasts at least `hold` seconds.
pub fn settling_time(times: &[f64], values: &[f64], threshold: f64, hold: f64) -> Option<f64> {
    let last_bad = values.iter().rposition(|v| v.is_nan() || *v >= threshold);
    let start = match last_bad {
        None => 0,
        Some(i) if i + 1 < times.len() => i + 1,
        Some(_) => return None,
    };
    let t = times[start];
    (times[times.len() - 1] - t >= hold - 1e-12).then_some(t)
}

/// Default hold time for [`settling_time`].
pub const SETTLING_HOLD: f64 = 10.0;

/// Largest `|ẋ_i − δ̄_m|` over agents and samples in `window`, with
/// `ẋ_i = y_i + d_i` and `δ̄_m = vᵀ(k_s·δ̂ + d)`.
pub fn output_tracking_error(
    traj: &Trajectory,
    v: &DVector<f64>,
    g: &UnmatchedGains,
    profile: &DisturbanceProfile,
    window: (f64, f64),
) -> f64 {
    let r = window_indices(&traj.times, window);
    traj.states[r]
        .iter()
        .map(|s| {
            let d = profile.eval(s.t);
            let y_bar = &s.y + &d;
            let delta_m = v.dot(&(&s.delta_hat * g.k_s + &d));
            y_bar
                .iter()
                .map(|yi| (yi - delta_m).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}
