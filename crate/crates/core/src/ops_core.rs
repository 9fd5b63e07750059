//! Operators of the IBC representation `H = (1-G)*(L+λ)(1-G) + T - λ`.
//!
//! Truncation: an operator whose kernel visits `K ∪ {ξ}` is only defined
//! where `K ∪ {ξ}` lies inside the truncated basis. Raising operators drop
//! the overflow into sector `n_max + 1`, and every ξ-sum that would pass
//! through that sector (the off-diagonal `T_od`, the `1/(L_P(K,ξ)+λ)` part of
//! `T_d`) vanishes on the top sector. With this rule the discrete
//! Hamiltonian is independent of `λ` and the algebraic identities between
//! the representations close to rounding error.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fock::SectorBlockMatrix;
use crate::grid::{integrate_radial, TailQuadrature};
use crate::instance::Instance;
use crate::model::{form_factor_sq_radial, omega_radial, ModelParams};

/// How the ξ-integral in `T_d` is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TdMode {
    /// ξ-sums on the Fock grid only; operator identities close exactly.
    #[default]
    GridConsistent,
    /// Grid-consistent values plus the continuum remainder of each ξ-integral
    /// (the part of momentum space the grid does not resolve).
    TailCorrected(TailQuadrature),
}

#[derive(Debug, Clone)]
pub struct CoreOperators {
    pub lambda: f64,
    pub mode: TdMode,
    /// `L_P(K)`.
    pub lp: Vec<f64>,
    /// `Ω(K) = dΓ(ω)`.
    pub dgamma_omega: Vec<f64>,
    /// `a(v)`: sector `n+1 -> n`.
    pub annihilation: SectorBlockMatrix,
    /// `a*(v)`: sector `n -> n+1`.
    pub creation: SectorBlockMatrix,
    /// `G_λ`: sector `n -> n+1`.
    pub g: SectorBlockMatrix,
    /// `G_λ* = -a(v)(L_P+λ)^{-1}`.
    pub g_star: SectorBlockMatrix,
    pub t_d: Vec<f64>,
    pub t_od: SectorBlockMatrix,
}

impl CoreOperators {
    pub fn assemble(inst: &Instance, lambda: f64, mode: &TdMode) -> Result<Self> {
        assert!(lambda > 0.0, "λ must be positive");
        let annihilation = assemble_annihilation(inst);
        let creation = annihilation.adjoint(&inst.measure);
        let g = assemble_g(inst, lambda);
        let g_star = g.adjoint(&inst.measure);
        Ok(Self {
            lambda,
            mode: mode.clone(),
            lp: inst.lp.clone(),
            dgamma_omega: assemble_dgamma_omega(inst),
            annihilation,
            creation,
            g,
            g_star,
            t_d: assemble_t_d(inst, lambda, mode)?,
            t_od: assemble_t_od(inst, lambda),
        })
    }

    /// `T = T_d + T_od` as a dense matrix.
    pub fn t_dense(&self) -> DMatrix<f64> {
        let mut t = self.t_od.to_dense();
        for (i, d) in self.t_d.iter().enumerate() {
            t[(i, i)] += d;
        }
        t
    }
}

/// `(a(v)ψ)⁽ⁿ⁾(K) = √(n+1) Σ_q w_q v(q) ψ⁽ⁿ⁺¹⁾(K ∪ {q})`.
pub fn assemble_annihilation(inst: &Instance) -> SectorBlockMatrix {
    assemble_annihilation_masked(inst, &vec![true; inst.n_nodes()])
}

/// `a(v · 1_mask)`, used for ultraviolet cutoffs.
pub fn assemble_annihilation_masked(inst: &Instance, mask: &[bool]) -> SectorBlockMatrix {
    let basis = &inst.basis;
    let mut triplets = Vec::new();
    for i in 0..basis.dim() {
        let n = basis.sector_of(i);
        let scale = ((n + 1) as f64).sqrt();
        for q in (0..inst.n_nodes()).filter(|&q| mask[q]) {
            if let Some(j) = basis.insert(i, q as u32) {
                triplets.push((i, j, scale * inst.grid.weight(q) * inst.form_factor[q]));
            }
        }
    }
    SectorBlockMatrix::from_triplets(basis, triplets)
}

/// `(a*(v)ψ)⁽ⁿ⁺¹⁾(K) = (n+1)^{-1/2} Σ_j v(k_j) ψ⁽ⁿ⁾(K̂_j)`, assembled from the
/// kernel directly (repeated entries counted with multiplicity).
pub fn assemble_creation(inst: &Instance) -> SectorBlockMatrix {
    raising_kernel(inst, |_| 1.0)
}

/// `(G_λψ)⁽ⁿ⁺¹⁾(K) = -(n+1)^{-1/2} Σ_j v(k_j) ψ⁽ⁿ⁾(K̂_j) / (L_P(K)+λ)`.
pub fn assemble_g(inst: &Instance, lambda: f64) -> SectorBlockMatrix {
    raising_kernel(inst, |i| -1.0 / (inst.lp[i] + lambda))
}

/// `G_λ` as the adjoint of `-a(v)(L_P+λ)^{-1}`.
pub fn g_via_adjoint(inst: &Instance, annihilation: &SectorBlockMatrix, lambda: f64) -> SectorBlockMatrix {
    let resolvent: Vec<f64> = inst.lp.iter().map(|l| -1.0 / (l + lambda)).collect();
    annihilation.scale_cols(&resolvent).adjoint(&inst.measure)
}

/// Raising kernel `row_factor(M) · (n+1)^{-1/2} m_c v(c)` from `M \ {c}` to `M`.
fn raising_kernel<F: Fn(usize) -> f64>(inst: &Instance, row_factor: F) -> SectorBlockMatrix {
    let basis = &inst.basis;
    let mut triplets = Vec::new();
    for i in 0..basis.dim() {
        let n1 = basis.sector_of(i);
        if n1 == 0 {
            continue;
        }
        let scale = row_factor(i) / (n1 as f64).sqrt();
        for (c, count) in basis.multiplicities(i) {
            let j = basis.remove(i, c).expect("removal stays inside the basis");
            triplets.push((i, j, scale * count as f64 * inst.form_factor[c as usize]));
        }
    }
    SectorBlockMatrix::from_triplets(basis, triplets)
}

/// Diagonal `Ω(K)`.
pub fn assemble_dgamma_omega(inst: &Instance) -> Vec<f64> {
    inst.field_energy.clone()
}

/// `T_d(K) = ∫ |v(ξ)|^2 (1/(ξ^2+ω(ξ)) - 1/(L_P(K,ξ)+λ)) dξ`.
pub fn assemble_t_d(inst: &Instance, lambda: f64, mode: &TdMode) -> Result<Vec<f64>> {
    let self_energy = inst.grid_self_energy();
    let grid: Vec<f64> = (0..inst.dim())
        .map(|i| self_energy - resolvent_sum(inst, i, |j| 1.0 / (inst.lp[j] + lambda)))
        .collect();
    match mode {
        TdMode::GridConsistent => Ok(grid),
        TdMode::TailCorrected(tail) => {
            let corrections = t_d_tail_corrections(inst, lambda, tail)?;
            Ok(grid.iter().zip(&corrections).map(|(g, c)| g + c).collect())
        }
    }
}

/// Continuum `T_d(K)` minus its quadrature on the full (untruncated) grid.
pub fn t_d_tail_corrections(inst: &Instance, lambda: f64, tail: &TailQuadrature) -> Result<Vec<f64>> {
    (0..inst.dim())
        .into_par_iter()
        .map(|i| {
            let continuum = t_d_continuum(
                &inst.params,
                inst.residual_momentum[i].norm(),
                inst.field_energy[i],
                lambda,
                tail,
            )?;
            Ok(continuum - t_d_grid_untruncated(inst, i, lambda))
        })
        .collect()
}

/// Grid quadrature of the `T_d` integrand, including nodes whose `K ∪ {q}`
/// leaves the truncated basis.
pub fn t_d_grid_untruncated(inst: &Instance, i: usize, lambda: f64) -> f64 {
    (0..inst.n_nodes())
        .map(|q| {
            let v = inst.form_factor[q];
            let free = inst.grid.node(q).norm_squared() + inst.node_omega[q];
            inst.grid.weight(q) * v * v * (1.0 / free - 1.0 / (inst.lp_appended(i, q) + lambda))
        })
        .sum()
}

/// `T_d` over all of momentum space for an element with residual momentum
/// `|P - Σk_j| = p` and field energy `Ω(K)`, after exact angular integration.
pub fn t_d_continuum(
    params: &ModelParams,
    p: f64,
    field_energy: f64,
    lambda: f64,
    tail: &TailQuadrature,
) -> Result<f64> {
    let integrand = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        let w = omega_radial(r, params.mass);
        let c = field_energy + w + lambda;
        let free = r * r + w;
        // ∫ dΩ [1/(ξ²+ω) - 1/((p-ξ)²+c)] over the sphere |ξ| = r
        let angular = if p * r < 1e-12 * (p * p + r * r + c) {
            4.0 * std::f64::consts::PI * (p * p + c - w) / (free * (r * r + p * p + c))
        } else {
            let x = 4.0 * p * r / ((p - r) * (p - r) + c);
            4.0 * std::f64::consts::PI / free - std::f64::consts::PI / (p * r) * x.ln_1p()
        };
        r * r * form_factor_sq_radial(r, params) * angular
    };
    integrate_radial(integrand, tail)
}

/// `Σ_q w_q |v(q)|^2 h(K ∪ {q})` over the nodes that keep `K ∪ {q}` inside the basis.
pub(crate) fn resolvent_sum<H: Fn(usize) -> f64>(inst: &Instance, i: usize, h: H) -> f64 {
    (0..inst.n_nodes())
        .filter_map(|q| {
            inst.basis.insert(i, q as u32).map(|j| {
                let v = inst.form_factor[q];
                inst.grid.weight(q) * v * v * h(j)
            })
        })
        .sum()
}

/// Kernel `-Σ_j Σ_q w_q v(q) v(k_j) h(K ∪ {q}) ψ(K̂_j ∪ {q})`, the shape shared by
/// `T_od` and `S_od`. Vanishes on sector 0 and on the top sector.
pub(crate) fn exchange_kernel<H: Fn(usize) -> f64>(inst: &Instance, h: H) -> SectorBlockMatrix {
    let basis = &inst.basis;
    let mut triplets = Vec::new();
    for i in 0..basis.dim() {
        if basis.sector_of(i) == 0 {
            continue;
        }
        for q in 0..inst.n_nodes() {
            let Some(up) = basis.insert(i, q as u32) else {
                continue;
            };
            let wq = inst.grid.weight(q) * inst.form_factor[q] * h(up);
            for (c, count) in basis.multiplicities(i) {
                let target = basis.remove(up, c).expect("c is an entry of K ∪ {q}");
                triplets.push((i, target, -wq * count as f64 * inst.form_factor[c as usize]));
            }
        }
    }
    SectorBlockMatrix::from_triplets(basis, triplets)
}

/// `(T_od ψ)⁽ⁿ⁾(K) = -Σ_j Σ_q w_q v(q) v(k_j) ψ(K̂_j ∪ {q}) / (L_P(K ∪ {q}) + λ)`.
pub fn assemble_t_od(inst: &Instance, lambda: f64) -> SectorBlockMatrix {
    exchange_kernel(inst, |j| 1.0 / (inst.lp[j] + lambda))
}
