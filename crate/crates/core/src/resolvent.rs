//! Assembly of `H_P` in both representations and its resolvent as a
//! positivity-preserving Neumann series.
//!
//! With `D = L_P + τ_+ + λ` and `R_0 = (1-F)^{-1} D^{-1} (1-F*)^{-1}`,
//!
//! ```text
//! H + λ - μ = R_0^{-1} + (S - μ)   ⇒   (H + λ - μ)^{-1} = R_0 Σ_j (-(S-μ) R_0)^j.
//! ```
//!
//! `F` and `G` raise the particle number, so `(1-F)^{-1}` is a finite sum.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{dense_adjoint, SectorBlockMatrix};
use crate::instance::Instance;
use crate::linalg::{max_abs, max_abs_diff, shifted_inverse, weighted_norm};
use crate::ops_core::{CoreOperators, TdMode};
use crate::ops_modified::ModifiedOperators;

/// Contraction target for automatic `λ`.
pub const AUTO_CONTRACTION: f64 = 0.9;

/// Space in which `‖G‖` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormSpace {
    Plain,
    /// Graph norm of `dΓ(ω)^{1/2}`, weight `(1 + Ω)^{1/2}`.
    OmegaWeighted,
}

#[derive(Debug, Clone)]
pub struct OneMinusInverse {
    pub inverse: DMatrix<f64>,
    pub norm: f64,
    pub space: NormSpace,
}

/// `(1 - X)^{-1} = Σ_{j=0}^{n_max} X^j` for a sector-raising `X`, with `‖X‖` in `space`.
pub fn invert_one_minus(inst: &Instance, x: &SectorBlockMatrix, space: NormSpace) -> OneMinusInverse {
    let dense = x.to_dense();
    let n = inst.dim();
    let mut inverse = DMatrix::identity(n, n);
    let mut power = DMatrix::identity(n, n);
    for _ in 0..inst.n_max() {
        power = &dense * &power;
        inverse += &power;
    }
    let norm = match space {
        NormSpace::Plain => weighted_norm(&dense, &inst.measure),
        NormSpace::OmegaWeighted => {
            let w: Vec<f64> = inst.field_energy.iter().map(|o| (1.0 + o).sqrt()).collect();
            let scaled = DMatrix::from_fn(n, n, |i, j| w[i] * dense[(i, j)] / w[j]);
            weighted_norm(&scaled, &inst.measure)
        }
    };
    OneMinusInverse { inverse, norm, space }
}

/// Smallest tested `λ` with `‖G_λ‖ < 1`, with the norms measured at each `λ`.
pub fn empirical_lambda0(inst: &Instance, lambdas: &[f64], space: NormSpace) -> (Option<f64>, Vec<f64>) {
    let norms: Vec<f64> = lambdas
        .iter()
        .map(|&l| invert_one_minus(inst, &crate::ops_core::assemble_g(inst, l), space).norm)
        .collect();
    let threshold = lambdas
        .iter()
        .zip(&norms)
        .filter(|(_, n)| **n < 1.0)
        .map(|(l, _)| *l)
        .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.min(l))));
    (threshold, norms)
}

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

fn with_diagonal(mut m: DMatrix<f64>, values: &[f64]) -> DMatrix<f64> {
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] += v;
    }
    m
}

/// `(1-G)*(L_P+λ)(1-G) + T_d + T_od - λ`.
pub fn build_h_g(inst: &Instance, core: &CoreOperators) -> DMatrix<f64> {
    let n = inst.dim();
    let one_minus = DMatrix::identity(n, n) - core.g.to_dense();
    let one_minus_star = DMatrix::identity(n, n) - core.g_star.to_dense();
    let shifted: Vec<f64> = core.lp.iter().map(|l| l + core.lambda).collect();
    let h = one_minus_star * diag(&shifted) * one_minus + core.t_od.to_dense();
    let t_minus_lambda: Vec<f64> = core.t_d.iter().map(|t| t - core.lambda).collect();
    with_diagonal(h, &t_minus_lambda)
}

/// `(1-F)*(L_P+τ_++λ)(1-F) + S_d + S_od - λ`.
pub fn build_h_f(inst: &Instance, core: &CoreOperators, modified: &ModifiedOperators) -> DMatrix<f64> {
    let n = inst.dim();
    let one_minus = DMatrix::identity(n, n) - modified.f.to_dense();
    let one_minus_star = DMatrix::identity(n, n) - modified.f_star.to_dense();
    let h = one_minus_star * diag(&modified.shifted_symbol(&core.lp)) * one_minus + modified.s_od.to_dense();
    let s_minus_lambda: Vec<f64> = modified.s_d.iter().map(|s| s - core.lambda).collect();
    with_diagonal(h, &s_minus_lambda)
}

/// `R_0 = (1-F)^{-1} (L_P+τ_++λ)^{-1} (1-F*)^{-1}`.
pub fn build_r0(inst: &Instance, core: &CoreOperators, modified: &ModifiedOperators, inv_one_minus_f: &DMatrix<f64>) -> DMatrix<f64> {
    let d_inv: Vec<f64> = modified.shifted_symbol(&core.lp).iter().map(|d| 1.0 / d).collect();
    let inv_star = dense_adjoint(inv_one_minus_f, &inst.measure);
    inv_one_minus_f * diag(&d_inv) * inv_star
}

/// Both representations of `H_P` and the pieces of its resolvent at one `λ`.
#[derive(Debug, Clone)]
pub struct HamiltonianBuild {
    pub lambda: f64,
    pub core: CoreOperators,
    pub modified: ModifiedOperators,
    pub h_g: DMatrix<f64>,
    pub h_f: DMatrix<f64>,
    pub inv_one_minus_g: OneMinusInverse,
    pub inv_one_minus_f: OneMinusInverse,
    pub r0: DMatrix<f64>,
}

impl HamiltonianBuild {
    pub fn new(inst: &Instance, lambda: f64, mode: &TdMode) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("λ must be positive, got {lambda}")));
        }
        let core = CoreOperators::assemble(inst, lambda, mode)?;
        let modified = ModifiedOperators::assemble(inst, &core);
        let h_g = build_h_g(inst, &core);
        let h_f = build_h_f(inst, &core, &modified);
        let inv_one_minus_g = invert_one_minus(inst, &core.g, NormSpace::Plain);
        let inv_one_minus_f = invert_one_minus(inst, &modified.f, NormSpace::Plain);
        let r0 = build_r0(inst, &core, &modified, &inv_one_minus_f.inverse);
        Ok(Self {
            lambda,
            core,
            modified,
            h_g,
            h_f,
            inv_one_minus_g,
            inv_one_minus_f,
            r0,
        })
    }

    pub fn mu0(&self) -> f64 {
        self.modified.mu0()
    }

    /// `-(S - μ) R_0`, the series generator.
    pub fn series_generator(&self, mu: f64) -> DMatrix<f64> {
        let s = self.modified.s_dense();
        let n = s.nrows();
        -(s - DMatrix::identity(n, n) * mu) * &self.r0
    }

    /// `‖(S - μ) R_0‖`.
    pub fn contraction(&self, inst: &Instance, mu: f64) -> f64 {
        weighted_norm(&self.series_generator(mu), &inst.measure)
    }

    /// `‖H_G - H_F‖ / ‖H_G‖` in the weighted operator norm.
    pub fn representation_residual(&self, inst: &Instance) -> f64 {
        weighted_norm(&(&self.h_g - &self.h_f), &inst.measure) / weighted_norm(&self.h_g, &inst.measure)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub terms: usize,
    pub contraction: f64,
    pub residual: f64,
    /// Smallest entry over all partial sums.
    pub min_partial_entry: f64,
    pub min_entry: f64,
}

#[derive(Debug, Clone)]
pub struct SeriesResult {
    pub resolvent: DMatrix<f64>,
    pub report: SeriesReport,
}

/// `(H + λ - μ)^{-1}` as `R_0 Σ_j (-(S-μ)R_0)^j`.
pub fn resolvent_neumann(
    inst: &Instance,
    build: &HamiltonianBuild,
    mu: f64,
    j_max: usize,
    tol: f64,
) -> Result<SeriesResult> {
    let generator = build.series_generator(mu);
    let contraction = weighted_norm(&generator, &inst.measure);
    if contraction >= 1.0 {
        return Err(Error::SeriesDivergent { norm: contraction });
    }
    let n = inst.dim();
    let target = &build.h_g + DMatrix::identity(n, n) * (build.lambda - mu);
    let mut term = build.r0.clone();
    let mut sum = term.clone();
    let mut min_partial = sum.min();
    let mut terms = 1;
    let mut residual = weighted_norm(&(&target * &sum - DMatrix::identity(n, n)), &inst.measure);
    while residual > tol {
        if terms > j_max {
            return Err(Error::SeriesTruncated { terms, residual, tolerance: tol });
        }
        term = &term * &generator;
        sum += &term;
        min_partial = min_partial.min(sum.min());
        terms += 1;
        residual = weighted_norm(&(&target * &sum - DMatrix::identity(n, n)), &inst.measure);
    }
    let min_entry = sum.min();
    Ok(SeriesResult {
        resolvent: sum,
        report: SeriesReport {
            terms,
            contraction,
            residual,
            min_partial_entry: min_partial,
            min_entry,
        },
    })
}

/// `(H + λ)^{-1} = R_γ Σ_j ((γ-λ) R_γ)^j` from `R_γ = (H + γ)^{-1}`, summed by
/// doubling: `Σ_{j<2^k} X^j = Π_{i<k} (1 + X^{2^i})`.
pub fn extend_resolvent(
    inst: &Instance,
    h: &DMatrix<f64>,
    r_gamma: &DMatrix<f64>,
    gamma: f64,
    lambda: f64,
    max_doublings: usize,
    tol: f64,
) -> Result<SeriesResult> {
    let n = inst.dim();
    let x = r_gamma * (gamma - lambda);
    let contraction = weighted_norm(&x, &inst.measure);
    if contraction >= 1.0 {
        return Err(Error::SeriesDivergent { norm: contraction });
    }
    let target = h + DMatrix::identity(n, n) * lambda;
    let identity = DMatrix::identity(n, n);
    let mut partial = identity.clone();
    let mut power = x;
    let mut sum = r_gamma.clone();
    let mut min_partial = sum.min();
    let mut terms = 1;
    let mut residual = weighted_norm(&(&target * &sum - &identity), &inst.measure);
    while residual > tol {
        if terms >= 1 << max_doublings {
            return Err(Error::SeriesTruncated { terms, residual, tolerance: tol });
        }
        partial = &partial * (&identity + &power);
        power = &power * &power;
        terms *= 2;
        sum = r_gamma * &partial;
        min_partial = min_partial.min(sum.min());
        residual = weighted_norm(&(&target * &sum - &identity), &inst.measure);
    }
    let min_entry = sum.min();
    Ok(SeriesResult {
        resolvent: sum,
        report: SeriesReport {
            terms,
            contraction,
            residual,
            min_partial_entry: min_partial,
            min_entry,
        },
    })
}

/// Relative max-entry distance between a series resolvent and `(H + shift)^{-1}` by LU.
pub fn dense_oracle_distance(h: &DMatrix<f64>, shift: f64, candidate: &DMatrix<f64>) -> Result<f64> {
    let exact = shifted_inverse(h, shift)?;
    Ok(max_abs_diff(&exact, candidate) / max_abs(&exact))
}

#[derive(Debug, Clone)]
pub struct DistributionalReport {
    /// `max |Hψ - (L_Pψ + a*ψ + Aψ)|`, relative to `max |Hψ|`.
    pub residual: f64,
    /// `Aψ = a(v)(1-G)ψ + Tψ`.
    pub a_action: DVector<f64>,
}

/// Checks `Hψ = L_Pψ + a*(v)ψ + Aψ` with `Aψ = a(v)(1-G_λ)ψ + T_λψ`.
pub fn verify_distributional_identity(
    core: &CoreOperators,
    h: &DMatrix<f64>,
    psi: &DVector<f64>,
) -> DistributionalReport {
    let one_minus_g = psi - core.g.apply(psi);
    let a_action = core.annihilation.apply(&one_minus_g) + core.t_od.apply(psi)
        + DVector::from_iterator(psi.len(), core.t_d.iter().zip(psi.iter()).map(|(t, x)| t * x));
    let free = DVector::from_iterator(psi.len(), core.lp.iter().zip(psi.iter()).map(|(l, x)| l * x));
    let rhs = free + core.creation.apply(psi) + &a_action;
    let lhs = h * psi;
    let scale = lhs.amax().max(f64::MIN_POSITIVE);
    DistributionalReport {
        residual: (lhs - rhs).amax() / scale,
        a_action,
    }
}

/// Resolved series parameters.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesParameters {
    pub lambda: f64,
    pub mu: f64,
    pub mu0: f64,
    pub contraction: f64,
}

/// `μ = μ₀ + 1` unless given; `λ` doubles from `start` until `‖(S-μ)R_0‖ ≤ 0.9` unless given.
pub fn resolve_parameters(
    inst: &Instance,
    lambda: Option<f64>,
    mu: Option<f64>,
    mode: &TdMode,
) -> Result<(SeriesParameters, HamiltonianBuild)> {
    let evaluate = |l: f64| -> Result<(SeriesParameters, HamiltonianBuild)> {
        let build = HamiltonianBuild::new(inst, l, mode)?;
        let mu0 = build.mu0();
        let mu = mu.unwrap_or(mu0 + 1.0);
        let contraction = build.contraction(inst, mu);
        Ok((SeriesParameters { lambda: l, mu, mu0, contraction }, build))
    };
    if let Some(l) = lambda {
        return evaluate(l);
    }
    let mut l = 1.0;
    let mut last = f64::INFINITY;
    for _ in 0..40 {
        let (params, build) = evaluate(l)?;
        if params.contraction <= AUTO_CONTRACTION {
            return Ok((params, build));
        }
        last = params.contraction;
        l *= 2.0;
    }
    Err(Error::NoConvergence {
        estimate: last,
        tolerance: AUTO_CONTRACTION,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockVector;
    use crate::grid::{GridConfig, GridScheme};
    use crate::model::ModelParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(coupling: f64, n_radial: usize, n_angular: usize, p: [f64; 3]) -> Instance {
        let params = ModelParams {
            mass: 0.0,
            coupling,
            total_momentum: p,
        };
        let grid = GridConfig {
            r_min: 0.5,
            r_max: 4.0,
            n_radial,
            n_angular,
            scheme: GridScheme::ProductGauss,
        };
        Instance::new(&params, &grid, 2, None).unwrap()
    }

    fn gc() -> TdMode {
        TdMode::GridConsistent
    }

    #[test]
    fn free_field_is_lp() {
        let inst = instance(0.0, 1, 6, [0.5, 0.0, 0.0]);
        let b = HamiltonianBuild::new(&inst, 3.0, &gc()).unwrap();
        let lp = diag(&inst.lp);
        assert!(max_abs_diff(&b.h_g, &lp) <= 1e-14 * max_abs(&lp));
        assert!((b.h_g[(0, 0)] - 0.25).abs() <= 1e-15);
        assert_eq!(b.inv_one_minus_g.inverse, DMatrix::identity(inst.dim(), inst.dim()));
    }

    #[test]
    fn representations_agree_and_are_symmetric() {
        let inst = instance(-1.0, 2, 6, [0.0, 0.2, 0.0]);
        let b = HamiltonianBuild::new(&inst, 2.0, &gc()).unwrap();
        assert!(b.representation_residual(&inst) <= 1e-9);
        let norm = weighted_norm(&b.h_g, &inst.measure);
        for h in [&b.h_g, &b.h_f] {
            let asym = weighted_norm(&(h - dense_adjoint(h, &inst.measure)), &inst.measure);
            assert!(asym <= 1e-12 * norm);
        }
    }

    #[test]
    fn lambda_independence() {
        let inst = instance(-1.0, 2, 6, [0.0; 3]);
        let a = HamiltonianBuild::new(&inst, 2.0, &gc()).unwrap();
        let b = HamiltonianBuild::new(&inst, 5.0, &gc()).unwrap();
        assert!(max_abs_diff(&a.h_g, &b.h_g) <= 1e-9 * max_abs(&a.h_g));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = FockVector::random(&inst.basis, &mut rng, 0).values;
        let ra = verify_distributional_identity(&a.core, &a.h_g, &psi);
        let rb = verify_distributional_identity(&b.core, &b.h_g, &psi);
        assert!(ra.residual <= 1e-10 && rb.residual <= 1e-10);
        let scale = ra.a_action.amax();
        assert!((ra.a_action - rb.a_action).amax() <= 1e-10 * scale);
    }

    #[test]
    fn distributional_identity_on_vacuum_and_free_field() {
        let inst = instance(-1.0, 1, 6, [0.0; 3]);
        let b = HamiltonianBuild::new(&inst, 1.0, &gc()).unwrap();
        let vac = FockVector::vacuum(&inst.basis).values;
        assert!(verify_distributional_identity(&b.core, &b.h_g, &vac).residual <= 1e-12);
        let free = instance(0.0, 1, 6, [0.0; 3]);
        let b = HamiltonianBuild::new(&free, 1.0, &gc()).unwrap();
        let psi = DVector::from_fn(free.dim(), |i, _| (i as f64).sin());
        let r = verify_distributional_identity(&b.core, &b.h_g, &psi);
        assert_eq!(r.a_action.amax(), 0.0);
        assert!(r.residual <= 1e-14);
    }

    #[test]
    fn nilpotent_inverse_is_exact() {
        let inst = instance(-1.0, 2, 6, [0.0; 3]);
        let b = HamiltonianBuild::new(&inst, 1.0, &gc()).unwrap();
        let n = inst.dim();
        let one_minus = DMatrix::identity(n, n) - b.core.g.to_dense();
        let prod = one_minus * &b.inv_one_minus_g.inverse;
        assert!(max_abs_diff(&prod, &DMatrix::identity(n, n)) <= 1e-12);
        let omega = invert_one_minus(&inst, &b.core.g, NormSpace::OmegaWeighted);
        assert!(omega.norm.is_finite() && omega.norm > 0.0);
    }

    #[test]
    fn g_norm_decreases() {
        let inst = instance(-1.0, 2, 6, [0.0; 3]);
        let (l0, norms) = empirical_lambda0(&inst, &[10.0, 100.0, 1000.0], NormSpace::Plain);
        assert!(norms[0] > norms[1] && norms[1] > norms[2]);
        assert_eq!(l0, Some(10.0));
    }

    #[test]
    fn r0_positivity() {
        let inst = instance(-1.0, 2, 6, [0.0; 3]);
        let b = HamiltonianBuild::new(&inst, 2.0, &gc()).unwrap();
        assert!(b.r0.min() > 0.0);
        assert!(b.r0.column(0).iter().all(|&x| x > 0.0));

        let free = instance(0.0, 2, 6, [0.0; 3]);
        let b = HamiltonianBuild::new(&free, 2.0, &gc()).unwrap();
        assert_eq!(b.r0.min(), 0.0);
        for i in 0..free.dim() {
            assert!((b.r0[(i, i)] - 1.0 / (free.lp[i] + 2.0)).abs() <= 1e-15);
        }
    }

    #[test]
    fn neumann_matches_dense_solve() {
        let inst = instance(-1.0, 2, 6, [0.0; 3]);
        let (params, build) = resolve_parameters(&inst, None, None, &gc()).unwrap();
        assert!(params.contraction <= AUTO_CONTRACTION);
        let series = resolvent_neumann(&inst, &build, params.mu, 2000, 1e-12).unwrap();
        assert!(series.report.min_partial_entry > 0.0);
        let dist = dense_oracle_distance(&build.h_g, params.lambda - params.mu, &series.resolvent).unwrap();
        assert!(dist <= 1e-8, "distance {dist}");
        assert!(build.series_generator(params.mu).min() >= 0.0);
    }

    #[test]
    fn free_series_terminates() {
        let inst = instance(0.0, 1, 6, [0.0; 3]);
        let b = HamiltonianBuild::new(&inst, 1.0, &gc()).unwrap();
        let r = resolvent_neumann(&inst, &b, 0.0, 10, 1e-13).unwrap();
        assert_eq!(r.report.terms, 1);
    }

    #[test]
    fn small_lambda_diverges() {
        let inst = instance(-1.0, 2, 6, [0.0; 3]);
        let b = HamiltonianBuild::new(&inst, 0.01, &gc()).unwrap();
        let mu = b.mu0() + 1.0;
        let c = b.contraction(&inst, mu);
        match resolvent_neumann(&inst, &b, mu, 100, 1e-10) {
            Err(Error::SeriesDivergent { norm }) => assert_eq!(norm, c),
            other => assert!(c < 1.0, "unexpected {:?}", other.map(|r| r.report)),
        }
    }

    #[test]
    fn extension_to_smaller_lambda() {
        let inst = instance(-1.0, 2, 6, [0.0; 3]);
        let (params, build) = resolve_parameters(&inst, None, None, &gc()).unwrap();
        let gamma = params.lambda - params.mu;
        let r_gamma = shifted_inverse(&build.h_g, gamma).unwrap();
        // H is symmetric only in the weighted product; diagonalize its similarity
        let sym = crate::fock::weighted_similarity(&build.h_g, &inst.measure);
        let sym = (&sym + sym.transpose()) * 0.5;
        let e0 = sym.symmetric_eigenvalues().min();

        let same = extend_resolvent(&inst, &build.h_g, &r_gamma, gamma, gamma, 10, 1e-10).unwrap();
        assert_eq!(same.report.terms, 1);

        for lambda in [gamma - 1.0, -e0 + 0.1] {
            let r = extend_resolvent(&inst, &build.h_g, &r_gamma, gamma, lambda, 20, 1e-10).unwrap();
            assert!(r.report.min_entry > 0.0);
            assert!(dense_oracle_distance(&build.h_g, lambda, &r.resolvent).unwrap() <= 1e-8);
        }
        assert!(matches!(
            extend_resolvent(&inst, &build.h_g, &r_gamma, gamma, -e0 - 0.1, 20, 1e-10),
            Err(Error::SeriesDivergent { .. })
        ));
    }
}
