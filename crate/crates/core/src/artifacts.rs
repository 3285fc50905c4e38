//! End-to-end scenario runs and their on-disk artifacts.
//!
//! Numbers in CSV files use `{:.16e}` (17 significant digits), `.` as the
//! decimal separator and `\n` line endings, so identical runs produce
//! identical bytes. Every file is written to a temporary sibling and renamed
//! into place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, estimation_limits, fit_exponential_decay, fit_orbit, output_tracking_error,
    settling_time, EstimationCheckpoint, MetricRow, OrbitFit,
};
use crate::dynamics::{Mode, SimState};
use crate::error::{Error, Result};
use crate::gains::{certify, CertificationReport, Gains};
use crate::graph::LaplacianData;
use crate::scenario::Scenario;
use crate::sim::{integrate_partial, Trajectory};
use crate::spectral::{CertificateExport, LyapunovCertificate};

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CERTIFICATION_JSON: &str = "certification.json";

/// Consensus threshold used for settling times in the summary.
pub const SETTLING_THRESHOLD: f64 = 1e-3;
/// Window for the decay fit of the averaged unmatched velocity.
pub const DECAY_WINDOW: (f64, f64) = (0.5, 2.5);
/// Length of the late window for the unmatched output-tracking error.
pub const TRACKING_WINDOW: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifacts {
    pub trajectory_csv: PathBuf,
    pub metrics_csv: PathBuf,
    pub summary_json: PathBuf,
    pub certification_json: PathBuf,
}

impl RunArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            trajectory_csv: dir.join(TRAJECTORY_CSV),
            metrics_csv: dir.join(METRICS_CSV),
            summary_json: dir.join(SUMMARY_JSON),
            certification_json: dir.join(CERTIFICATION_JSON),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationFile {
    pub report: CertificationReport,
    pub certificate: CertificateExport,
    pub v_left: Vec<f64>,
    pub lambda_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settling {
    pub threshold: f64,
    pub hold: f64,
    pub e_x: Option<f64>,
    pub e_y: Option<f64>,
    pub e_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedSummary {
    pub estimation_limits: Vec<EstimationCheckpoint>,
    /// `x_m(t_final) − x_m(0)`.
    pub consensus_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOrbit {
    pub agent: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<OrbitFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedSummary {
    pub decay_window: (f64, f64),
    pub decay_rate: Option<f64>,
    pub k_d: f64,
    pub orbit_window: (f64, f64),
    /// `sqrt(k_s·α1)`, the averaged model's natural frequency.
    pub predicted_angular_frequency: f64,
    pub orbit_fits: Vec<AgentOrbit>,
    pub tracking_window: (f64, f64),
    pub tracking_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub mode: Mode,
    pub fig1_substitute: bool,
    pub n: usize,
    pub t_final: f64,
    pub dt: f64,
    pub samples: usize,
    pub certification_passed: bool,
    pub final_errors: [f64; 3],
    pub settling: Settling,
    pub max_projector_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched: Option<MatchedSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unmatched: Option<UnmatchedSummary>,
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub artifacts: RunArtifacts,
    pub trajectory: Trajectory,
    pub metrics: Vec<MetricRow>,
    pub summary: Summary,
    pub laplacian: LaplacianData,
    pub certificate: LyapunovCertificate,
}

/// Writes `bytes` to a temporary file next to `path` and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let file_name = path.file_name().ok_or_else(|| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "no file name"),
        )
    })?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn push_num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.n();
    let mut out = String::from("t");
    for prefix in ["x", "y", "dhat"] {
        for i in 1..=n {
            write!(out, ",{prefix}_{i}").expect("String write");
        }
    }
    out.push('\n');
    for s in &traj.states {
        push_num(&mut out, s.t);
        for v in s.x.iter().chain(s.y.iter()).chain(s.delta_hat.iter()) {
            out.push(',');
            push_num(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

pub fn metrics_csv(rows: &[MetricRow], mode: Mode) -> String {
    let lyap = match mode {
        Mode::Matched => "H",
        Mode::Unmatched => "W",
    };
    let mut out = format!("t,e_x_norm,e_y_norm,e_d_norm,x_m,y_m,delta_m,{lyap}\n");
    for r in rows {
        for (k, v) in [
            r.t, r.e_x, r.e_y, r.e_d, r.x_m, r.y_m, r.delta_m, r.lyapunov,
        ]
        .into_iter()
        .enumerate()
        {
            if k > 0 {
                out.push(',');
            }
            push_num(&mut out, v);
        }
        out.push('\n');
    }
    out
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn summarize(
    scenario: &Scenario,
    traj: &Trajectory,
    rows: &[MetricRow],
    report: &CertificationReport,
    v: &DVector<f64>,
) -> Summary {
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let col = |f: fn(&MetricRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let settle =
        |vals: Vec<f64>| settling_time(&times, &vals, SETTLING_THRESHOLD, analysis::SETTLING_HOLD);
    let last = rows.last().expect("trajectory holds at least t = 0");
    let t_final = scenario.sim.t_final;

    let (matched, unmatched) = match &scenario.gains {
        Gains::Matched(g) => (
            Some(MatchedSummary {
                estimation_limits: estimation_limits(traj, &scenario.disturbance, g),
                consensus_drift: last.x_m - rows[0].x_m,
            }),
            None,
        ),
        Gains::Unmatched(g) => {
            let y_m = col(|r| r.y_m);
            let decay_rate = fit_exponential_decay(&times, &y_m, DECAY_WINDOW).ok();
            let orbit_start = scenario
                .disturbance
                .switch_times()
                .into_iter()
                .rev()
                .find(|&s| s < t_final)
                .unwrap_or(0.0);
            let orbit_window = (orbit_start, t_final);
            let orbit_fits = (0..scenario.n())
                .map(|i| {
                    let xi: Vec<f64> = traj.states.iter().map(|s| s.x[i]).collect();
                    match fit_orbit(&traj.times, &xi, orbit_window) {
                        Ok(fit) => AgentOrbit {
                            agent: i + 1,
                            fit: Some(fit),
                            error: None,
                        },
                        Err(e) => AgentOrbit {
                            agent: i + 1,
                            fit: None,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect();
            let tracking_window = ((t_final - TRACKING_WINDOW).max(0.0), t_final);
            (
                None,
                Some(UnmatchedSummary {
                    decay_window: DECAY_WINDOW,
                    decay_rate,
                    k_d: g.k_d,
                    orbit_window,
                    predicted_angular_frequency: g.orbit_frequency(),
                    orbit_fits,
                    tracking_window,
                    tracking_error: output_tracking_error(
                        traj,
                        v,
                        g,
                        &scenario.disturbance,
                        tracking_window,
                    ),
                }),
            )
        }
    };

    Summary {
        scenario: scenario.name.clone(),
        mode: scenario.mode,
        fig1_substitute: scenario.fig1_substitute,
        n: scenario.n(),
        t_final,
        dt: scenario.sim.dt,
        samples: traj.len(),
        certification_passed: report.passed,
        final_errors: [last.e_x, last.e_y, last.e_d],
        settling: Settling {
            threshold: SETTLING_THRESHOLD,
            hold: analysis::SETTLING_HOLD,
            e_x: settle(col(|r| r.e_x)),
            e_y: settle(col(|r| r.e_y)),
            e_d: settle(col(|r| r.e_d)),
        },
        max_projector_residual: rows
            .iter()
            .map(|r| r.projector_residual)
            .fold(0.0, f64::max),
        matched,
        unmatched,
    }
}

/// Laplacian, certificate, certification, integration and analysis for one
/// scenario, with all four artifacts written to `out_dir`.
///
/// Failed certification is recorded, not fatal. On divergence the partial
/// trajectory and the certification are still written before the error is
/// returned.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunOutput> {
    scenario.validate()?;
    let lap = scenario.laplacian()?;
    let cert = scenario.certificate(&lap)?;
    let report = certify(&scenario.gains, &lap, &cert)?;
    let v = lap.v()?.clone();
    let field = scenario.closed_loop(&lap)?;
    let x0: SimState = scenario.initial_state();

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let artifacts = RunArtifacts::in_dir(out_dir);
    let cert_file = CertificationFile {
        report: report.clone(),
        certificate: cert.to_export(),
        v_left: v.iter().copied().collect(),
        lambda_l: lap.lambda_l,
    };
    write_atomic(&artifacts.certification_json, &json_bytes(&cert_file)?)?;

    let outcome = integrate_partial(&field, &x0.to_vector(), &scenario.sim)?;
    let mut traj = Trajectory::from_samples(outcome.samples, scenario.name.clone());
    traj.gain_report = Some(report.clone());
    write_atomic(&artifacts.trajectory_csv, trajectory_csv(&traj).as_bytes())?;
    if let Some(t) = outcome.diverged_after {
        return Err(Error::Divergence { last_finite_t: t });
    }

    let rows = analysis::metrics(&traj, &v, &scenario.gains, &cert.p, &scenario.disturbance);
    write_atomic(
        &artifacts.metrics_csv,
        metrics_csv(&rows, scenario.mode).as_bytes(),
    )?;
    let summary = summarize(scenario, &traj, &rows, &report, &v);
    write_atomic(&artifacts.summary_json, &json_bytes(&summary)?)?;

    Ok(RunOutput {
        artifacts,
        trajectory: traj,
        metrics: rows,
        summary,
        laplacian: lap,
        certificate: cert,
    })
}

/// A CSV file read back as a header and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn columns_with_prefix(&self, prefix: &str) -> Vec<(String, Vec<f64>)> {
        self.header
            .iter()
            .enumerate()
            .filter(|(_, h)| {
                h.strip_prefix(prefix)
                    .is_some_and(|rest| rest.parse::<usize>().is_ok())
            })
            .map(|(i, h)| (h.clone(), self.rows.iter().map(|r| r[i]).collect()))
            .collect()
    }
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::validation(path.display().to_string(), "empty file"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let row: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| {
                Error::validation(format!("{}:{}", path.display(), k + 2), format!("{e}"))
            })?;
        if row.len() != header.len() {
            return Err(Error::validation(
                format!("{}:{}", path.display(), k + 2),
                format!("expected {} fields, got {}", header.len(), row.len()),
            ));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}
