//! Dense helpers on the weighted space: operator norms, solves, fits.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fock::{standard_normal, weighted_similarity, MeasureWeights};

/// Below this dimension norms come from a full SVD.
pub const DENSE_NORM_LIMIT: usize = 2000;

/// Operator norm of `A` on the weighted space.
pub fn weighted_norm(a: &DMatrix<f64>, mu: &MeasureWeights) -> f64 {
    let b = weighted_similarity(a, mu);
    if b.nrows() < DENSE_NORM_LIMIT {
        spectral_norm(&b)
    } else {
        power_iteration_norm(&b, 500, 1e-10, 0x5eed)
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// `sqrt(λ_max(AᵀA))` by power iteration.
pub fn power_iteration_norm(a: &DMatrix<f64>, max_iter: usize, tol: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DVector::from_fn(a.ncols(), |_, _| standard_normal(&mut rng));
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let norm = x.norm();
        if norm == 0.0 {
            return 0.0;
        }
        x /= norm;
        let y = a.tr_mul(&(a * &x));
        let next = y.norm().sqrt();
        let converged = (next - estimate).abs() <= tol * next;
        estimate = next;
        x = y;
        if converged {
            break;
        }
    }
    estimate
}

/// Weighted norm of `A` restricted to basis indices `cols` (input) and `rows` (output).
pub fn weighted_norm_restricted(
    a: &DMatrix<f64>,
    mu: &MeasureWeights,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> f64 {
    let b = weighted_similarity(a, mu);
    let sub = b.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned();
    spectral_norm(&sub)
}

/// `A + shift·I` inverted by LU.
pub fn shifted_inverse(a: &DMatrix<f64>, shift: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = a + DMatrix::identity(n, n) * shift;
    m.lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularSolve(format!("A + {shift} I is singular")))
}

/// Weighted-space residual `‖A X - I‖`.
pub fn inverse_residual(a: &DMatrix<f64>, x: &DMatrix<f64>, mu: &MeasureWeights) -> f64 {
    let n = a.nrows();
    weighted_norm(&(a * x - DMatrix::identity(n, n)), mu)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Largest `|⟨A*φ,ψ⟩ - ⟨φ,Aψ⟩| / (‖φ‖‖ψ‖‖A‖)` over random probe pairs.
pub fn adjoint_probe_error(
    a: &DMatrix<f64>,
    a_star: &DMatrix<f64>,
    mu: &MeasureWeights,
    probes: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = mu.as_slice();
    let dot = |x: &DVector<f64>, y: &DVector<f64>| x.iter().zip(y.iter()).zip(w).map(|((x, y), w)| w * x * y).sum::<f64>();
    let norm = weighted_norm(a, mu);
    if norm == 0.0 {
        return 0.0;
    }
    (0..probes)
        .map(|_| {
            let phi = DVector::from_fn(a.nrows(), |_, _| standard_normal(&mut rng));
            let psi = DVector::from_fn(a.ncols(), |_, _| standard_normal(&mut rng));
            let lhs = dot(&(a_star * &phi), &psi);
            let rhs = dot(&phi, &(a * &psi));
            (lhs - rhs).abs() / (dot(&phi, &phi).sqrt() * dot(&psi, &psi).sqrt() * norm)
        })
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
