//! Lyapunov certificates for directed Laplacians.
//!
//! For a Laplacian `L` with simple zero eigenvalue and left eigenvector `v`
//! (`vᵀ1 = 1`), the shifted matrix `L̄ = L + α·1·vᵀ` moves the zero eigenvalue
//! to `α` and leaves the rest of the spectrum alone, so `L̄` is positive
//! stable and
//!
//! ```text
//! P L̄ + L̄ᵀ P = Q
//! ```
//!
//! has a unique symmetric positive-definite solution. Expanding `L̄` shows this
//! is exactly `PL + LᵀP = Q − α[P·1·vᵀ + v·1ᵀ·P]`.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LaplacianData;
use crate::linalg;

/// Smallest admissible real part of an eigenvalue of `L̄`.
const SHIFT_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LyapunovCertificate {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub alpha: f64,
    /// Max-norm of `PL + LᵀP − Q + α[P·1·vᵀ + v·1ᵀ·P]`.
    pub residual: f64,
    /// `‖P‖₂`.
    pub lambda_p: f64,
    /// `‖L‖₂`.
    pub lambda_l: f64,
    pub min_eig_p: f64,
    /// `λ_max(P) / λ_min(P)`.
    pub condition_number: f64,
}

impl LyapunovCertificate {
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn to_export(&self) -> CertificateExport {
        CertificateExport {
            n: self.n(),
            p: rows(&self.p),
            q: rows(&self.q),
            alpha: self.alpha,
            residual: self.residual,
            lambda_p: self.lambda_p,
            lambda_l: self.lambda_l,
            min_eig_p: self.min_eig_p,
            condition_number: self.condition_number,
        }
    }
}

/// JSON export of a certificate. Matrices are row-major lists of rows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificateExport {
    pub n: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub alpha: f64,
    pub residual: f64,
    #[serde(rename = "lambda_P")]
    pub lambda_p: f64,
    #[serde(rename = "lambda_L")]
    pub lambda_l: f64,
    #[serde(rename = "min_eig_P")]
    pub min_eig_p: f64,
    pub condition_number: f64,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0_f64, |a, &s| a.max(s))
}

/// Left-hand side minus right-hand side of the certificate equation, in its
/// unshifted form.
pub fn certificate_residual(
    p: &DMatrix<f64>,
    l: &DMatrix<f64>,
    v: &DVector<f64>,
    q: &DMatrix<f64>,
    alpha: f64,
) -> DMatrix<f64> {
    let n = l.nrows();
    let ones = DVector::from_element(n, 1.0);
    let p1 = p * &ones;
    let coupling = &p1 * v.transpose() + v * p1.transpose();
    p * l + l.transpose() * p - q + coupling * alpha
}

pub fn solve_p(lap: &LaplacianData, q: &DMatrix<f64>, alpha: f64) -> Result<LyapunovCertificate> {
    let n = lap.n();
    if !lap.has_spanning_tree {
        return Err(Error::Degenerate(
            "certificate requires a graph with a directed spanning tree".into(),
        ));
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension {
            what: "Q rows",
            expected: n,
            got: q.nrows(),
        });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::validation(
            "alpha",
            format!("must be positive, got {alpha}"),
        ));
    }
    let q_norm = spectral_norm(q);
    let asym = linalg::max_abs(&(q - q.transpose()));
    if asym > 1e-12 * q_norm.max(1.0) {
        return Err(Error::validation(
            "Q",
            format!("not symmetric (max |Q − Qᵀ| = {asym:.3e})"),
        ));
    }
    if linalg::min_sym_eigenvalue(q) <= 0.0 {
        return Err(Error::validation("Q", "not positive definite"));
    }

    let v = lap.v()?;
    let shifted = &lap.l + linalg::ones_outer(v) * alpha;
    let min_re = linalg::eigenvalues(&shifted)
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min);
    if min_re < SHIFT_MARGIN {
        return Err(Error::Degenerate(format!(
            "shifted Laplacian has an eigenvalue with real part {min_re:.3e}"
        )));
    }

    let p = lyapunov_shifted(&shifted, q)?;
    let residual = linalg::max_abs(&certificate_residual(&p, &lap.l, v, q, alpha));
    if residual >= 1e-8 * q_norm.max(1.0) {
        return Err(Error::Degenerate(format!(
            "certificate residual {residual:.3e} too large"
        )));
    }
    let ev = linalg::sym_eigenvalues(&p);
    let min_eig = ev[0];
    let max_eig = *ev.last().expect("n >= 1");
    if min_eig <= 0.0 {
        return Err(Error::Degenerate(format!(
            "certificate P is not positive definite (min eigenvalue {min_eig:.3e})"
        )));
    }
    Ok(LyapunovCertificate {
        lambda_p: spectral_norm(&p),
        lambda_l: lap.lambda_l,
        p,
        q: q.clone(),
        alpha,
        residual,
        min_eig_p: min_eig,
        condition_number: max_eig / min_eig,
    })
}

/// Solves `P A + Aᵀ P = Q` for positive-stable `A` by Bartels–Stewart on the
/// real Schur form `A = U T Uᵀ`: with `X = Uᵀ P U` the equation becomes
/// `Tᵀ X + X T = Uᵀ Q U`, solved block by block over the 1×1 and 2×2
/// diagonal blocks of the quasi-triangular `T`.
pub fn lyapunov_shifted(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::Degenerate("real Schur decomposition did not converge".into()))?;
    let (u, t) = schur.unpack();
    let c = u.transpose() * q * &u;

    let blocks = diagonal_blocks(&t);
    let mut x = DMatrix::<f64>::zeros(n, n);
    for &(i0, p) in &blocks {
        for &(j0, r) in &blocks {
            let mut rhs = c.view((i0, j0), (p, r)).clone_owned();
            // Σ_{K<I} T_KIᵀ X_KJ
            if i0 > 0 {
                let t_ki = t.view((0, i0), (i0, p));
                let x_kj = x.view((0, j0), (i0, r));
                rhs -= t_ki.transpose() * x_kj;
            }
            // Σ_{K<J} X_IK T_KJ
            if j0 > 0 {
                let x_ik = x.view((i0, 0), (p, j0));
                let t_kj = t.view((0, j0), (j0, r));
                rhs -= x_ik * t_kj;
            }
            let t_ii = t.view((i0, i0), (p, p)).clone_owned();
            let t_jj = t.view((j0, j0), (r, r)).clone_owned();
            let y = small_sylvester(&t_ii, &t_jj, &rhs)?;
            x.view_mut((i0, j0), (p, r)).copy_from(&y);
        }
    }
    let p = &u * x * u.transpose();
    Ok((&p + p.transpose()) * 0.5)
}

/// Start index and size of each diagonal block of a quasi-triangular matrix.
fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solves `Aᵀ Y + Y B = R` for blocks of size at most 2 via the Kronecker
/// form `(I ⊗ Aᵀ + Bᵀ ⊗ I) vec(Y) = vec(R)`.
fn small_sylvester(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let q = b.nrows();
    let m = p * q;
    let mut k = DMatrix::<f64>::zeros(m, m);
    for col in 0..q {
        for i in 0..p {
            for j in 0..p {
                k[(col * p + i, col * p + j)] += a[(j, i)];
            }
        }
    }
    for c1 in 0..q {
        for c2 in 0..q {
            let w = b[(c2, c1)];
            if w != 0.0 {
                for i in 0..p {
                    k[(c1 * p + i, c2 * p + i)] += w;
                }
            }
        }
    }
    let rhs = DVector::from_iterator(m, r.iter().copied());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("singular Sylvester block (λ_i + λ_j = 0)".into()))?;
    Ok(DMatrix::from_column_slice(p, q, sol.as_slice()))
}
