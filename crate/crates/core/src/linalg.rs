//! Small dense helpers shared by the spectral, gains and analysis modules.

use nalgebra::{Complex, DMatrix, DVector, Matrix2, SymmetricEigen};

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(m).last().expect("non-empty matrix")
}

/// Eigenvalues of a general real square matrix, sorted by modulus.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut ev: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    ev
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Exact exponential of a real 2×2 matrix via Putzer's formula:
/// `exp(At) = e^{τt/2} [c(t) I + s(t) (A − τ/2 I)]` with τ = tr A and
/// `c, s` the cosh/sinh (or cos/sin) pair of the half-discriminant.
pub fn expm2(a: &Matrix2<f64>, t: f64) -> Matrix2<f64> {
    let tau = a.trace();
    let half = tau / 2.0;
    let shifted = a - Matrix2::identity() * half;
    // q² = τ²/4 − det(A); eigenvalues are half ± q.
    let q2 = half * half - a.determinant();
    let (c, s) = if q2 > 0.0 {
        let q = q2.sqrt();
        ((q * t).cosh(), (q * t).sinh() / q)
    } else if q2 < 0.0 {
        let w = (-q2).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        (1.0, t)
    };
    (Matrix2::identity() * c + shifted * s) * (half * t).exp()
}

/// `1 vᵀ` as a dense matrix.
pub fn ones_outer(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_fn(n, n, |_, j| v[j])
}

/// The consensus projector `I − 1 vᵀ`.
pub fn projector(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::identity(v.len(), v.len()) - ones_outer(v)
}
