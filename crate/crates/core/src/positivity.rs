//! Cones `C_+` (pointwise nonnegative) and `C_- = Γ(-1) C_+`, entrywise
//! certificates, and the Perron–Frobenius check on the ground state.
//!
//! With strictly positive measure weights, a real matrix maps `C_+` into
//! itself iff all entries are `≥ 0`, and `⟨φ, Aψ⟩ > 0` for all nonzero
//! `φ, ψ ∈ C_+` iff all entries are `> 0`. Both are exact statements about
//! the discrete operator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{weighted_similarity, FockBasis, FockVector, MeasureWeights};

/// Smallest spectral gap `perron_frobenius_check` accepts.
pub const MIN_GAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeKind {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub kind: ConeKind,
    pub tolerance: f64,
}

impl Cone {
    pub fn plus() -> Self {
        Self { kind: ConeKind::Plus, tolerance: 0.0 }
    }

    pub fn minus() -> Self {
        Self { kind: ConeKind::Minus, tolerance: 0.0 }
    }

    pub fn with_tolerance(self, tolerance: f64) -> Self {
        Self { tolerance, ..self }
    }
}

/// `Γ(-1)ψ`: flips the sign of odd sectors.
pub fn conjugate_vector(basis: &FockBasis, psi: &FockVector) -> FockVector {
    let signs = basis.parity_signs();
    FockVector::from_values(DVector::from_iterator(
        psi.len(),
        psi.values.iter().zip(&signs).map(|(x, s)| x * s),
    ))
}

/// `Γ(-1) A Γ(-1)`.
pub fn conjugate_matrix(basis: &FockBasis, a: &DMatrix<f64>) -> DMatrix<f64> {
    let s = basis.parity_signs();
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * s[r] * s[c])
}

pub fn is_in_cone(basis: &FockBasis, psi: &FockVector, cone: &Cone) -> bool {
    let signs = basis.parity_signs();
    psi.values.iter().zip(&signs).all(|(x, s)| {
        let v = match cone.kind {
            ConeKind::Plus => *x,
            ConeKind::Minus => x * s,
        };
        v >= -cone.tolerance
    })
}

/// Result of an entrywise scan, with the extreme entry located.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub holds: bool,
    pub min_entry: f64,
    /// `(row, column)` of the smallest entry.
    pub witness: Option<(usize, usize)>,
    /// Basis multisets of the witness row and column.
    pub witness_elements: Option<(Vec<u32>, Vec<u32>)>,
}

fn scan(basis: &FockBasis, a: &DMatrix<f64>, cone: &Cone) -> (f64, Option<(usize, usize)>) {
    let a = match cone.kind {
        ConeKind::Plus => a.clone(),
        ConeKind::Minus => conjugate_matrix(basis, a),
    };
    let mut min = f64::INFINITY;
    let mut at = None;
    for c in 0..a.ncols() {
        for r in 0..a.nrows() {
            if a[(r, c)] < min {
                min = a[(r, c)];
                at = Some((r, c));
            }
        }
    }
    (min, at)
}

fn report(basis: &FockBasis, holds: bool, min: f64, at: Option<(usize, usize)>) -> CertificateReport {
    CertificateReport {
        holds,
        min_entry: min,
        witness: at,
        witness_elements: at.map(|(r, c)| (basis.element(r).to_vec(), basis.element(c).to_vec())),
    }
}

/// All entries (after cone conjugation) `≥ -tolerance`.
pub fn certify_preserves(basis: &FockBasis, a: &DMatrix<f64>, cone: &Cone) -> CertificateReport {
    let (min, at) = scan(basis, a, cone);
    report(basis, min >= -cone.tolerance, min, at)
}

/// All entries (after cone conjugation) `> max(tolerance, 1e-300)`.
pub fn certify_improves(basis: &FockBasis, a: &DMatrix<f64>, cone: &Cone) -> CertificateReport {
    let (min, at) = scan(basis, a, cone);
    report(basis, min > cone.tolerance.max(1e-300), min, at)
}

#[derive(Debug, Clone, Serialize)]
pub struct PerronFrobeniusReport {
    pub e0: f64,
    pub e1: f64,
    pub gap: f64,
    /// Ground vector in the value representation, sign fixed so its largest entry is positive.
    #[serde(skip)]
    pub ground_state: DVector<f64>,
    pub min_component: f64,
    pub strictly_positive: bool,
}

/// Sorted eigenvalues and eigenvectors (value representation) of an operator
/// symmetric in the weighted product.
pub fn weighted_eigen(h: &DMatrix<f64>, mu: &MeasureWeights) -> (Vec<f64>, DMatrix<f64>) {
    let b = weighted_similarity(h, mu);
    let b = (&b + b.transpose()) * 0.5;
    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let inv_sqrt: Vec<f64> = mu.as_slice().iter().map(|w| 1.0 / w.sqrt()).collect();
    let n = h.nrows();
    let vectors = DMatrix::from_fn(n, order.len(), |r, c| eig.eigenvectors[(r, order[c])] * inv_sqrt[r]);
    (values, vectors)
}

/// Simplicity and positivity of the ground state of `H` in `cone`.
pub fn perron_frobenius_check(
    basis: &FockBasis,
    h: &DMatrix<f64>,
    mu: &MeasureWeights,
    cone: &Cone,
) -> Result<PerronFrobeniusReport> {
    let (values, vectors) = weighted_eigen(h, mu);
    if values.len() < 2 {
        return Err(Error::DegenerateNumerics("need at least two eigenvalues".into()));
    }
    let gap = values[1] - values[0];
    if gap < MIN_GAP {
        return Err(Error::DegenerateNumerics(format!("ground-state gap {gap:e} below {MIN_GAP:e}")));
    }
    let mut ground: DVector<f64> = vectors.column(0).into_owned();
    if let ConeKind::Minus = cone.kind {
        ground = conjugate_vector(basis, &FockVector::from_values(ground)).values;
    }
    let pivot = ground.iter().copied().fold(0.0, |m: f64, x| if x.abs() > m.abs() { x } else { m });
    if pivot < 0.0 {
        ground = -ground;
    }
    let min_component = ground.min();
    if let ConeKind::Minus = cone.kind {
        ground = conjugate_vector(basis, &FockVector::from_values(ground)).values;
    }
    Ok(PerronFrobeniusReport {
        e0: values[0],
        e1: values[1],
        gap,
        ground_state: ground,
        min_component,
        strictly_positive: min_component > cone.tolerance.max(1e-300),
    })
}
