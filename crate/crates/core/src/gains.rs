//! Controller gains for both disturbance cases and the numerical
//! certification of their stability conditions.
//!
//! Each `certify_*` function evaluates every inequality of the corresponding
//! Lyapunov argument, in order, and assembles the quadratic-form matrix whose
//! positive definiteness closes the argument. Reports are advisory: callers
//! may still simulate uncertified gains.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LaplacianData;
use crate::linalg;
use crate::spectral::LyapunovCertificate;

/// Relative tolerance of the substitution (equality) checks.
const EQ_TOL: f64 = 1e-12;
/// Lower bounds are exceeded by this factor when suggesting gains.
const SUGGEST_FACTOR: f64 = 1.05;

/// Gains of the matched-disturbance controller and the parameters of its
/// Lyapunov function `H = H_s + H_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchedGains {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub mu: f64,
    pub b: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl MatchedGains {
    /// Completes `(γ1, γ2, γ3, μ, b)` with the substitutions
    /// `γ4 = 2γ3(1 + μ/b) + γ2`, `ρ = γ2`, `ε = ρ/γ2 = 1`.
    pub fn with_substitutions(gamma1: f64, gamma2: f64, gamma3: f64, mu: f64, b: f64) -> Self {
        Self {
            gamma1,
            gamma2,
            gamma3,
            gamma4: 2.0 * gamma3 * (1.0 + mu / b) + gamma2,
            mu,
            b,
            rho: gamma2,
            epsilon: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("gamma4", self.gamma4),
            ("mu", self.mu),
            ("b", self.b),
            ("rho", self.rho),
            ("epsilon", self.epsilon),
        ];
        check_positive(&fields)
    }

    /// The averaged-dynamics matrix `[[−γ2, −γ3], [γ4, 0]]`.
    pub fn s_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(-self.gamma2, -self.gamma3, self.gamma4, 0.0)
    }
}

/// Gains of the unmatched-disturbance controller plus the Lyapunov weight
/// `α2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnmatchedGains {
    pub k_x: f64,
    pub k_d: f64,
    pub k_s: f64,
    pub alpha1: f64,
    pub nu: f64,
    pub alpha2: f64,
}

impl UnmatchedGains {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("k_x", self.k_x),
            ("k_d", self.k_d),
            ("k_s", self.k_s),
            ("alpha1", self.alpha1),
            ("nu", self.nu),
            ("alpha2", self.alpha2),
        ];
        check_positive(&fields)
    }

    /// Natural angular frequency of the averaged oscillator,
    /// `sqrt(k_s·α1)`.
    pub fn orbit_frequency(&self) -> f64 {
        (self.k_s * self.alpha1).sqrt()
    }
}

fn check_positive(fields: &[(&str, f64)]) -> Result<()> {
    for &(name, value) in fields {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::validation(
                name,
                format!("must be positive, got {value}"),
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gains {
    Matched(MatchedGains),
    Unmatched(UnmatchedGains),
}

impl Gains {
    pub fn validate(&self) -> Result<()> {
        match self {
            Gains::Matched(g) => g.validate(),
            Gains::Unmatched(g) => g.validate(),
        }
    }
}

/// One inequality (or substitution) of a stability argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs − rhs` for inequalities; `tol − |lhs − rhs|` for equalities.
    pub margin: f64,
    pub satisfied: bool,
}

impl Check {
    fn strict(name: &str, inequality: &str, lhs: f64, rhs: f64) -> Self {
        let margin = lhs - rhs;
        Self {
            name: name.into(),
            inequality: inequality.into(),
            lhs,
            rhs,
            margin,
            satisfied: margin > 0.0,
        }
    }

    fn non_strict(name: &str, inequality: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        let margin = lhs - rhs;
        Self {
            name: name.into(),
            inequality: inequality.into(),
            lhs,
            rhs,
            margin,
            satisfied: margin >= -slack,
        }
    }

    fn equality(name: &str, inequality: &str, lhs: f64, rhs: f64) -> Self {
        let tol = EQ_TOL * rhs.abs().max(1.0);
        let margin = tol - (lhs - rhs).abs();
        Self {
            name: name.into(),
            inequality: inequality.into(),
            lhs,
            rhs,
            margin,
            satisfied: margin >= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub mode: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Smallest eigenvalue of `𝒩` (matched) or `𝓜` (unmatched).
    pub min_eig_n_or_m: f64,
    /// Smallest eigenvalue of the Schur matrix `𝒟` (unmatched only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub min_eig_d: Option<f64>,
}

impl CertificationReport {
    fn new(mode: &str, checks: Vec<Check>, min_eig: f64, min_eig_d: Option<f64>) -> Self {
        let passed = checks.iter().all(|c| c.satisfied) && min_eig > 0.0;
        Self {
            mode: mode.into(),
            passed,
            checks,
            min_eig_n_or_m: min_eig,
            min_eig_d,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.satisfied)
    }

    /// Plain-text table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{} certification: {}\n",
            self.mode,
            if self.passed { "PASSED" } else { "FAILED" }
        );
        out.push_str(&format!(
            "{:<24} {:<52} {:>14} {:>14} {:>14}  ok\n",
            "check", "condition", "lhs", "rhs", "margin"
        ));
        for c in &self.checks {
            out.push_str(&format!(
                "{:<24} {:<52} {:>14.6e} {:>14.6e} {:>14.6e}  {}\n",
                c.name,
                c.inequality,
                c.lhs,
                c.rhs,
                c.margin,
                if c.satisfied { "yes" } else { "NO" }
            ));
        }
        out
    }
}

fn check_dims(lap: &LaplacianData, cert: &LyapunovCertificate) -> Result<()> {
    if cert.n() != lap.n() {
        return Err(Error::Dimension {
            what: "certificate P rows",
            expected: lap.n(),
            got: cert.n(),
        });
    }
    Ok(())
}

/// Assembles the symmetric `3n × 3n` matrix `𝒩` with `Ḣ = −½ eᵀ𝒩e`.
pub fn assemble_n(
    g: &MatchedGains,
    l: &DMatrix<f64>,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = l.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let MatchedGains {
        gamma1: g1,
        gamma2: g2,
        gamma3: g3,
        gamma4: g4,
        mu,
        b,
        rho,
        epsilon: eps,
    } = *g;
    let n11 = q * (g1 * eps);
    let n12 = l.transpose() * (g1 * (2.0 * mu + b)) - p * (rho - eps * g2);
    let n13 = p * (g3 * eps);
    let n22 = (&eye * (2.0 * b * g2 - b * g4 + 2.0 * mu * g2) - p * eps) * 2.0;
    let n23 = &eye * (2.0 * mu * g3 + 2.0 * b * g3 + b * g2 - b * g4);
    let n33 = &eye * (2.0 * g3 * b);

    let mut m = DMatrix::zeros(3 * n, 3 * n);
    let blocks = [
        (0, 0, &n11),
        (0, 1, &n12),
        (0, 2, &n13),
        (1, 1, &n22),
        (1, 2, &n23),
        (2, 2, &n33),
    ];
    for (bi, bj, blk) in blocks {
        m.view_mut((bi * n, bj * n), (n, n)).copy_from(blk);
        if bi != bj {
            m.view_mut((bj * n, bi * n), (n, n))
                .copy_from(&blk.transpose());
        }
    }
    m
}

pub fn certify_matched(
    g: &MatchedGains,
    lap: &LaplacianData,
    cert: &LyapunovCertificate,
) -> Result<CertificationReport> {
    check_dims(lap, cert)?;
    let MatchedGains {
        gamma1: g1,
        gamma2: g2,
        gamma3: g3,
        gamma4: g4,
        mu,
        b,
        rho,
        epsilon: eps,
    } = *g;
    let lp = cert.lambda_p;
    let ll = cert.lambda_l;

    let gamma2_bound =
        (lp + 2.0 * g3 * (mu + b)) / (2.0 * mu + b) + 0.5 * g1 * (2.0 * mu + b) * ll * ll;
    let n_mat = assemble_n(g, &lap.l, &cert.p, &cert.q);
    let min_eig = linalg::min_sym_eigenvalue(&n_mat);

    let checks = vec![
        Check::strict(
            "H_positive",
            "sqrt(2·rho·mu/‖P‖) > epsilon",
            (2.0 * rho * mu / lp).sqrt(),
            eps,
        ),
        Check::equality(
            "gamma4_substitution",
            "gamma4 = 2·gamma3·(1 + mu/b) + gamma2",
            g4,
            2.0 * g3 * (1.0 + mu / b) + g2,
        ),
        Check::equality(
            "epsilon_substitution",
            "epsilon = rho/gamma2",
            eps,
            rho / g2,
        ),
        Check::equality("rho_substitution", "rho = gamma2", rho, g2),
        Check::strict(
            "gamma2_lower_bound",
            "gamma2 > (λ_P + 2γ3(μ+b))/(2μ+b) + ½γ1(2μ+b)λ_L²",
            g2,
            gamma2_bound,
        ),
        Check::non_strict(
            "b_lower_bound",
            "b ≥ (gamma3/gamma1)·λ_P²",
            b,
            g3 / g1 * lp * lp,
            0.0,
        ),
        Check::strict("N_positive_definite", "λ_min(𝒩) > 0", min_eig, 0.0),
    ];
    Ok(CertificationReport::new("matched", checks, min_eig, None))
}

/// Smallest `γ2` (with `ρ = γ2`, `ε = 1`, `γ4` substituted) for which `𝒩`
/// is positive definite.
///
/// Under those substitutions only `𝒩₂₂ = c(γ2)·I − 2P` depends on `γ2`, with
/// `c(γ2) = 2γ2(2μ+b) − 4γ3(μ+b)`, and `𝒩₂₃ = 0`. Taking the Schur
/// complement over the `(e_x, e_d)` block `K` gives
/// `𝒩 ≻ 0 ⇔ K ≻ 0 and c(γ2) > λ_max(2P + 𝒩₁₂ᵀK⁻¹𝒩₁₂)`.
pub fn matched_n_threshold(
    gamma1: f64,
    gamma3: f64,
    mu: f64,
    b: f64,
    l: &DMatrix<f64>,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<f64> {
    let n = l.nrows();
    let mut k = DMatrix::zeros(2 * n, 2 * n);
    k.view_mut((0, 0), (n, n)).copy_from(&(q * gamma1));
    k.view_mut((0, n), (n, n)).copy_from(&(p * gamma3));
    k.view_mut((n, 0), (n, n)).copy_from(&(p * gamma3));
    k.view_mut((n, n), (n, n))
        .copy_from(&(DMatrix::<f64>::identity(n, n) * (2.0 * gamma3 * b)));
    let chol = k.cholesky().ok_or_else(|| Error::Infeasible {
        reason: "the (e_x, e_d) block of 𝒩 is not positive definite".into(),
        name: "b",
        minimal: 0.0,
    })?;
    let mut coupling = DMatrix::zeros(2 * n, n);
    coupling
        .view_mut((0, 0), (n, n))
        .copy_from(&(l.transpose() * (gamma1 * (2.0 * mu + b))));
    let solved = chol.solve(&coupling);
    let schur = p * 2.0 + coupling.transpose() * solved;
    let lam = linalg::max_sym_eigenvalue(&schur);
    Ok((lam + 4.0 * gamma3 * (mu + b)) / (2.0 * (2.0 * mu + b)))
}

/// Proposes matched gains that certify: `γ2` is placed 5% above the largest
/// of its lower bounds (the explicit bound, the `H > 0` bound `‖P‖/(2μ)` and
/// the exact `𝒩 ≻ 0` threshold), and `γ4, ε, ρ` follow from the
/// substitutions.
pub fn suggest_matched(
    gamma1: f64,
    gamma3: f64,
    mu: f64,
    b: f64,
    lap: &LaplacianData,
    cert: &LyapunovCertificate,
) -> Result<MatchedGains> {
    check_dims(lap, cert)?;
    check_positive(&[("gamma1", gamma1), ("gamma3", gamma3), ("mu", mu), ("b", b)])?;
    let lp = cert.lambda_p;
    let ll = cert.lambda_l;
    let b_min = gamma3 / gamma1 * lp * lp;
    if b < b_min {
        return Err(Error::Infeasible {
            reason: format!("b = {b} is below (gamma3/gamma1)·λ_P²"),
            name: "b",
            minimal: b_min,
        });
    }
    let explicit =
        (lp + 2.0 * gamma3 * (mu + b)) / (2.0 * mu + b) + 0.5 * gamma1 * (2.0 * mu + b) * ll * ll;
    let positivity = lp / (2.0 * mu);
    let exact = matched_n_threshold(gamma1, gamma3, mu, b, &lap.l, &cert.p, &cert.q)?;
    let gamma2 = SUGGEST_FACTOR * explicit.max(positivity).max(exact);
    Ok(MatchedGains::with_substitutions(
        gamma1, gamma2, gamma3, mu, b,
    ))
}

/// Both eigenvalues of `𝒮 = [[−γ2, −γ3], [γ4, 0]]` in the open left half
/// plane, i.e. `tr 𝒮 = −γ2 < 0` and `det 𝒮 = γ3γ4 > 0`.
pub fn is_s_hurwitz(g: &MatchedGains) -> bool {
    let s = g.s_matrix();
    s.trace() < 0.0 && s.determinant() > 0.0
}

/// `𝓜` with `Ẇ = −½ [e_x; e_y]ᵀ 𝓜 [e_x; e_y]` once `ν = α1/k_d`.
pub fn assemble_m(
    g: &UnmatchedGains,
    l: &DMatrix<f64>,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = l.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let ratio = g.alpha1 / g.k_d;
    let m11 = q * (ratio * g.k_x);
    let m21 = l * (g.alpha2 * g.k_x);
    let m22 = (&eye * (g.alpha2 * g.k_d) - p * ratio) * 2.0;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&m11);
    m.view_mut((n, 0), (n, n)).copy_from(&m21);
    m.view_mut((0, n), (n, n)).copy_from(&m21.transpose());
    m.view_mut((n, n), (n, n)).copy_from(&m22);
    m
}

/// Schur matrix `𝒟 = 2(α2·k_d·I − P) − α2²·k_x·L·Lᵀ` (for `α1 = k_d`, `Q = I`).
pub fn assemble_d(g: &UnmatchedGains, l: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    (&eye * (g.alpha2 * g.k_d) - p) * 2.0 - l * l.transpose() * (g.alpha2 * g.alpha2 * g.k_x)
}

pub fn certify_unmatched(
    g: &UnmatchedGains,
    lap: &LaplacianData,
    cert: &LyapunovCertificate,
) -> Result<CertificationReport> {
    check_dims(lap, cert)?;
    let lp = cert.lambda_p;
    let ll = cert.lambda_l;
    let kd_bound = 0.5 * g.alpha2 * g.k_x * ll * ll + lp / g.alpha2;
    let m = assemble_m(g, &lap.l, &cert.p, &cert.q);
    let d = assemble_d(g, &lap.l, &cert.p);
    let min_m = linalg::min_sym_eigenvalue(&m);
    let min_d = linalg::min_sym_eigenvalue(&d);

    let checks = vec![
        Check::strict(
            "W_positive",
            "sqrt(alpha1·alpha2/‖P‖) > nu",
            (g.alpha1 * g.alpha2 / lp).sqrt(),
            g.nu,
        ),
        Check::equality("nu_substitution", "nu = alpha1/k_d", g.nu, g.alpha1 / g.k_d),
        Check::equality("alpha1_substitution", "alpha1 = k_d", g.alpha1, g.k_d),
        Check::strict(
            "k_d_lower_bound",
            "k_d > ½·alpha2·k_x·λ_L² + λ_P/alpha2",
            g.k_d,
            kd_bound,
        ),
        Check::strict("M_positive_definite", "λ_min(𝓜) > 0", min_m, 0.0),
        Check::non_strict("D_positive_semidefinite", "λ_min(𝒟) ≥ 0", min_d, 0.0, 1e-10),
    ];
    Ok(CertificationReport::new(
        "unmatched",
        checks,
        min_m,
        Some(min_d),
    ))
}

/// Proposes unmatched gains that certify: `k_d` 5% above its lower bound,
/// `α1 = k_d`, `ν = α1/k_d = 1`.
pub fn suggest_unmatched(
    k_x: f64,
    k_s: f64,
    alpha2: f64,
    lap: &LaplacianData,
    cert: &LyapunovCertificate,
) -> Result<UnmatchedGains> {
    check_dims(lap, cert)?;
    check_positive(&[("k_x", k_x), ("k_s", k_s), ("alpha2", alpha2)])?;
    let ll = cert.lambda_l;
    let k_d = SUGGEST_FACTOR * (0.5 * alpha2 * k_x * ll * ll + cert.lambda_p / alpha2);
    Ok(UnmatchedGains {
        k_x,
        k_d,
        k_s,
        alpha1: k_d,
        nu: 1.0,
        alpha2,
    })
}

pub fn certify(
    g: &Gains,
    lap: &LaplacianData,
    cert: &LyapunovCertificate,
) -> Result<CertificationReport> {
    match g {
        Gains::Matched(m) => certify_matched(m, lap, cert),
        Gains::Unmatched(u) => certify_unmatched(u, lap, cert),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, DirectedGraph};
    use crate::spectral::solve_p;

    fn scalar_setup() -> (LaplacianData, LyapunovCertificate) {
        let lap = build_laplacian(&DirectedGraph::new(DMatrix::zeros(1, 1)).unwrap()).unwrap();
        let cert = solve_p(&lap, &DMatrix::identity(1, 1), 1.0).unwrap();
        (lap, cert)
    }

    #[test]
    fn s_matrix_eigenvalues() {
        let g = MatchedGains::with_substitutions(6.0, 17.0, 4.0, 1.0, 10.0);
        assert!((g.gamma4 - 25.8).abs() < 1e-12);
        assert!(is_s_hurwitz(&g));
        let ev = nalgebra::DMatrix::from_row_slice(2, 2, &[-17.0f64, -4.0, 25.8, 0.0])
            .complex_eigenvalues();
        for z in ev.iter() {
            assert!((z.re + 8.5).abs() < 1e-12);
            assert!((z.im.abs() - (412.8f64 - 289.0).sqrt() / 2.0).abs() < 1e-9);
        }
        assert!((((412.8f64 - 289.0).sqrt() / 2.0) - 5.563).abs() < 1e-3);
    }

    #[test]
    fn s_not_hurwitz_at_zero_damping() {
        let mut g = MatchedGains::with_substitutions(6.0, 17.0, 4.0, 1.0, 10.0);
        g.gamma2 = 0.0;
        assert!(!is_s_hurwitz(&g));
    }

    #[test]
    fn scalar_n_matrix() {
        // n = 1, L = 0, P = ½: 𝒩 = [[γ1ε, −(ρ−εγ2)/2, γ3ε/2], [·, 2(2bγ2 − bγ4 + 2μγ2) − ε, 𝒩23], [·, ·, 2γ3b]].
        let (lap, cert) = scalar_setup();
        let g = MatchedGains::with_substitutions(6.0, 17.0, 4.0, 1.0, 10.0);
        let n = assemble_n(&g, &lap.l, &cert.p, &cert.q);
        let c = 2.0 * 17.0 * 12.0 - 4.0 * 4.0 * 11.0 - 1.0;
        let expect = DMatrix::from_row_slice(3, 3, &[6.0, 0.0, 2.0, 0.0, c, 0.0, 2.0, 0.0, 80.0]);
        assert!(linalg::max_abs(&(&n - expect)) < 1e-12);
        let report = certify_matched(&g, &lap, &cert).unwrap();
        assert!(report.passed);
    }

    #[test]
    fn tiny_gamma2_fails_bound() {
        let (lap, cert) = scalar_setup();
        let mut g = MatchedGains::with_substitutions(6.0, 17.0, 4.0, 1.0, 10.0);
        g.gamma2 = 0.01;
        let report = certify_matched(&g, &lap, &cert).unwrap();
        assert!(report.check("gamma2_lower_bound").unwrap().margin < 0.0);
        assert!(!report.passed);
    }

    #[test]
    fn suggest_scalar_collapses_laplacian_term() {
        let (lap, cert) = scalar_setup();
        let g = suggest_matched(6.0, 4.0, 1.0, 10.0, &lap, &cert).unwrap();
        let explicit = (0.5 + 2.0 * 4.0 * 11.0) / 12.0;
        assert!((g.gamma2 - 1.05 * explicit).abs() < 1e-12);
        assert!(certify_matched(&g, &lap, &cert).unwrap().passed);
    }

    #[test]
    fn suggest_rejects_small_b() {
        let (lap, cert) = scalar_setup();
        // λ_P = ½ so b_min = (γ3/γ1)/4.
        match suggest_matched(1.0, 4.0, 1.0, 0.5, &lap, &cert) {
            Err(Error::Infeasible { minimal, .. }) => assert!((minimal - 1.0).abs() < 1e-12),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unmatched_scalar_d() {
        let (lap, cert) = scalar_setup();
        let g = UnmatchedGains {
            k_x: 3.4,
            k_d: 0.4,
            k_s: 5.0,
            alpha1: 0.4,
            nu: 1.0,
            alpha2: 1.0,
        };
        let d = assemble_d(&g, &lap.l, &cert.p);
        assert!((d[(0, 0)] - 2.0 * (0.4 - 0.5)).abs() < 1e-14);
        let r = certify_unmatched(&g, &lap, &cert).unwrap();
        assert!(!r.passed);
        let g = UnmatchedGains {
            k_d: 0.6,
            alpha1: 0.6,
            ..g
        };
        let r = certify_unmatched(&g, &lap, &cert).unwrap();
        assert!(r.min_eig_d.unwrap() > 0.0);
        assert!(r.passed);
    }

    #[test]
    fn unmatched_flags_nu_mismatch() {
        let (lap, cert) = scalar_setup();
        let g = UnmatchedGains {
            k_x: 3.4,
            k_d: 7.5,
            k_s: 5.0,
            alpha1: 7.5,
            nu: 3.0,
            alpha2: 1.0,
        };
        let r = certify_unmatched(&g, &lap, &cert).unwrap();
        let nu = r.check("nu_substitution").unwrap();
        assert!(!nu.satisfied);
        assert_eq!(nu.rhs, 1.0);
        assert!(!r.passed);
    }

    #[test]
    fn dimension_mismatch() {
        let (_, cert) = scalar_setup();
        let lap2 = build_laplacian(&DirectedGraph::from_edges(2, &[(1, 2, 1.0)]).unwrap()).unwrap();
        let g = MatchedGains::with_substitutions(6.0, 17.0, 4.0, 1.0, 10.0);
        assert!(matches!(
            certify_matched(&g, &lap2, &cert),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn validate_rejects_nonpositive() {
        let mut g = MatchedGains::with_substitutions(6.0, 17.0, 4.0, 1.0, 10.0);
        g.mu = 0.0;
        assert!(g.validate().is_err());
    }
}
