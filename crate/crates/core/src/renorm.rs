//! Ultraviolet-cutoff Hamiltonians `H_Λ = L_P + a(v_Λ) + a*(v_Λ)` and the
//! comparison of `H_Λ - E_Λ` with the interior-boundary `H_P`.
//!
//! `E_Λ` is the continuum self-energy; the cutoff only removes grid nodes with
//! `|k| > Λ`, so Λ is restricted to the grid's radial support.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{integrate_interval, TailQuadrature};
use crate::instance::Instance;
use crate::linalg::{shifted_inverse, weighted_norm};
use crate::model::{form_factor_sq_radial, omega_radial, ModelParams};
use crate::ops_core::{assemble_annihilation_masked, t_d_tail_corrections, CoreOperators, TdMode};
use crate::positivity::weighted_eigen;
use crate::resolvent::build_h_g;

/// `E_Λ = -∫_{|k|≤Λ} |v(k)|^2 / (k^2 + ω(k)) dk`.
pub fn compute_e_lambda(params: &ModelParams, cutoff: f64, tail: &TailQuadrature) -> Result<f64> {
    if !(cutoff >= 0.0 && cutoff.is_finite()) {
        return Err(Error::InvalidConfig(format!("cutoff must be >= 0, got {cutoff}")));
    }
    let integrand = |r: f64| {
        let w = omega_radial(r, params.mass);
        if w == 0.0 {
            return 0.0;
        }
        r * r * form_factor_sq_radial(r, params) / (r * r + w)
    };
    let radial = integrate_interval(integrand, 0.0, cutoff, tail.tolerance, tail.n_tail)?;
    Ok(-4.0 * std::f64::consts::PI * radial)
}

/// Grid nodes with `|k| ≤ Λ`.
pub fn cutoff_mask(inst: &Instance, cutoff: f64) -> Vec<bool> {
    (0..inst.n_nodes()).map(|q| inst.grid.radius(q) <= cutoff).collect()
}

/// `L_P + a(v_Λ) + a*(v_Λ)`, without the self-energy subtraction.
pub fn build_h_cutoff_unsubtracted(inst: &Instance, mask: &[bool]) -> DMatrix<f64> {
    let a = assemble_annihilation_masked(inst, mask);
    let mut h = a.to_dense() + a.adjoint(&inst.measure).to_dense();
    for (i, l) in inst.lp.iter().enumerate() {
        h[(i, i)] += l;
    }
    h
}

/// `L_P + a(v_Λ) + a*(v_Λ) - E_Λ`.
pub fn build_h_cutoff(inst: &Instance, cutoff: f64, e_lambda: f64) -> DMatrix<f64> {
    let mut h = build_h_cutoff_unsubtracted(inst, &cutoff_mask(inst, cutoff));
    for i in 0..inst.dim() {
        h[(i, i)] -= e_lambda;
    }
    h
}

#[derive(Debug, Clone)]
pub struct CutoffMember {
    pub cutoff: f64,
    pub mask: Vec<bool>,
    pub e_lambda: f64,
    /// `H_Λ` without subtraction.
    pub h_unsubtracted: DMatrix<f64>,
}

impl CutoffMember {
    pub fn h_subtracted(&self) -> DMatrix<f64> {
        let n = self.h_unsubtracted.nrows();
        &self.h_unsubtracted - DMatrix::identity(n, n) * self.e_lambda
    }
}

#[derive(Debug, Clone)]
pub struct CutoffFamily {
    pub members: Vec<CutoffMember>,
}

impl CutoffFamily {
    /// `cutoffs` must be ascending, positive and inside `(0, r_max]`.
    pub fn new(inst: &Instance, cutoffs: &[f64], tail: &TailQuadrature) -> Result<Self> {
        let r_max = inst.grid.config().r_max;
        if cutoffs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("cutoffs must be strictly ascending".into()));
        }
        if let Some(bad) = cutoffs.iter().find(|&&c| !(c > 0.0 && c <= r_max)) {
            return Err(Error::InvalidConfig(format!("cutoff {bad} outside (0, r_max = {r_max}]")));
        }
        let members = cutoffs
            .par_iter()
            .map(|&cutoff| {
                let mask = cutoff_mask(inst, cutoff);
                Ok(CutoffMember {
                    cutoff,
                    e_lambda: compute_e_lambda(&inst.params, cutoff, tail)?,
                    h_unsubtracted: build_h_cutoff_unsubtracted(inst, &mask),
                    mask,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }
}

/// `H_P` with the continuum remainder of every ξ-integral restored, and the
/// largest such correction (the floor below which the grid cannot resolve
/// the comparison).
pub fn physics_hamiltonian(inst: &Instance, lambda_build: f64, tail: &TailQuadrature) -> Result<(DMatrix<f64>, f64)> {
    let core = CoreOperators::assemble(inst, lambda_build, &TdMode::TailCorrected(tail.clone()))?;
    let floor = t_d_tail_corrections(inst, lambda_build, tail)?
        .iter()
        .fold(0.0, |m: f64, c| m.max(c.abs()));
    Ok((build_h_g(inst, &core), floor))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    #[serde(rename = "Lambda")]
    pub cutoff: f64,
    #[serde(rename = "E_Lambda")]
    pub e_lambda: f64,
    pub resolvent_diff: f64,
    #[serde(rename = "E0_cutoff")]
    pub e0_cutoff: f64,
    #[serde(rename = "E0_ibc")]
    pub e0_ibc: f64,
    pub saturation_floor: f64,
    /// Ground energy of `H_Λ` without the `E_Λ` subtraction.
    #[serde(rename = "E0_unsubtracted")]
    pub e0_unsubtracted: f64,
}

/// `‖(H_P+λ)^{-1} - (H_Λ-E_Λ+λ)^{-1}‖` and ground energies along the family.
pub fn convergence_study(
    inst: &Instance,
    family: &CutoffFamily,
    h_p: &DMatrix<f64>,
    lambda_eval: f64,
    saturation_floor: f64,
) -> Result<Vec<StudyRow>> {
    let r_p = shifted_inverse(h_p, lambda_eval)?;
    let e0_ibc = weighted_eigen(h_p, &inst.measure).0[0];
    family
        .members
        .par_iter()
        .map(|m| {
            let h = m.h_subtracted();
            let r = shifted_inverse(&h, lambda_eval)?;
            let e0_unsubtracted = weighted_eigen(&m.h_unsubtracted, &inst.measure).0[0];
            Ok(StudyRow {
                cutoff: m.cutoff,
                e_lambda: m.e_lambda,
                resolvent_diff: weighted_norm(&(&r - &r_p), &inst.measure),
                e0_cutoff: e0_unsubtracted - m.e_lambda,
                e0_ibc,
                saturation_floor,
                e0_unsubtracted,
            })
        })
        .collect()
}

pub fn write_study_csv(rows: &[StudyRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
