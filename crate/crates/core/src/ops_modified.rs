//! The modified representation: the split `T_d = τ_+ + τ_-`, the map `F_λ`
//! and the perturbation `S = S_d + S_od` with
//! `H = (1-F)*(L+τ_++λ)(1-F) + S - λ`.
//!
//! The ξ-integral in `S_d` uses the Fock grid (same truncation rule as
//! `T_d`); in tail-corrected mode the continuum remainder enters only through
//! `τ_±`.

use crate::fock::SectorBlockMatrix;
use crate::instance::Instance;
use crate::ops_core::{assemble_creation, exchange_kernel, resolvent_sum, CoreOperators};

#[derive(Debug, Clone)]
pub struct ModifiedOperators {
    pub lambda: f64,
    pub tau_plus: Vec<f64>,
    pub tau_minus: Vec<f64>,
    pub f: SectorBlockMatrix,
    pub f_star: SectorBlockMatrix,
    pub s_d: Vec<f64>,
    pub s_od: SectorBlockMatrix,
}

impl ModifiedOperators {
    pub fn assemble(inst: &Instance, core: &CoreOperators) -> Self {
        let (tau_plus, tau_minus) = split_tau(&core.t_d);
        let f = assemble_f_from_g(inst, core, &tau_plus);
        let f_star = f.adjoint(&inst.measure);
        let (s_d, s_od) = assemble_s(inst, core.lambda, &tau_plus, &tau_minus);
        Self {
            lambda: core.lambda,
            tau_plus,
            tau_minus,
            f,
            f_star,
            s_d,
            s_od,
        }
    }

    /// Dense `S = S_d + S_od`.
    pub fn s_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut s = self.s_od.to_dense();
        for (i, d) in self.s_d.iter().enumerate() {
            s[(i, i)] += d;
        }
        s
    }

    /// `L_P + τ_+ + λ` per basis element.
    pub fn shifted_symbol(&self, lp: &[f64]) -> Vec<f64> {
        lp.iter().zip(&self.tau_plus).map(|(l, t)| l + t + self.lambda).collect()
    }

    pub fn mu0(&self) -> f64 {
        compute_mu0(&self.s_d)
    }
}

/// Positive and negative parts of a diagonal.
pub fn split_tau(t_d: &[f64]) -> (Vec<f64>, Vec<f64>) {
    t_d.iter().map(|&t| if t > 0.0 { (t, 0.0) } else { (0.0, t) }).unzip()
}

/// `F_λ` assembled from its kernel, denominator `L_P(K) + τ_+(K) + λ`.
pub fn assemble_f_direct(inst: &Instance, lambda: f64, tau_plus: &[f64]) -> SectorBlockMatrix {
    let scale: Vec<f64> = inst
        .lp
        .iter()
        .zip(tau_plus)
        .map(|(l, t)| -1.0 / (l + t + lambda))
        .collect();
    assemble_creation(inst).scale_rows(&scale)
}

/// `F = G - (L_P+τ_++λ)^{-1} τ_+ G`, i.e. `G` row-scaled by `(L_P+λ)/(L_P+τ_++λ)`.
pub fn assemble_f_from_g(inst: &Instance, core: &CoreOperators, tau_plus: &[f64]) -> SectorBlockMatrix {
    let scale: Vec<f64> = inst
        .lp
        .iter()
        .zip(tau_plus)
        .map(|(l, t)| (l + core.lambda) / (l + t + core.lambda))
        .collect();
    core.g.scale_rows(&scale)
}

/// `S_d(K) = τ_-(K) + Σ_q w_q |v(q)|^2 τ_+(K,q) / ((L_P(K,q)+λ)(L_P(K,q)+τ_+(K,q)+λ))`
/// and `S_od`, the `T_od` kernel with denominator `L_P + τ_+ + λ`.
pub fn assemble_s(
    inst: &Instance,
    lambda: f64,
    tau_plus: &[f64],
    tau_minus: &[f64],
) -> (Vec<f64>, SectorBlockMatrix) {
    let s_d = (0..inst.dim())
        .map(|i| {
            tau_minus[i]
                + resolvent_sum(inst, i, |j| {
                    tau_plus[j] / ((inst.lp[j] + lambda) * (inst.lp[j] + tau_plus[j] + lambda))
                })
        })
        .collect();
    let s_od = exchange_kernel(inst, |j| 1.0 / (inst.lp[j] + tau_plus[j] + lambda));
    (s_d, s_od)
}

/// `μ₀ = max_K S_d(K)`; any `μ > μ₀` makes `-(S_d - μ)` nonnegative.
pub fn compute_mu0(s_d: &[f64]) -> f64 {
    s_d.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridConfig, GridScheme};
    use crate::linalg::{max_abs, max_abs_diff};
    use crate::model::ModelParams;
    use crate::ops_core::TdMode;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn instance(n_radial: usize, n_angular: usize, n_max: usize, p: [f64; 3]) -> Instance {
        let params = ModelParams {
            mass: 0.0,
            coupling: -1.0,
            total_momentum: p,
        };
        let grid = GridConfig {
            r_min: 0.5,
            r_max: 4.0,
            n_radial,
            n_angular,
            scheme: GridScheme::ProductGauss,
        };
        Instance::new(&params, &grid, n_max, None).unwrap()
    }

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_tau(&[0.0]), (vec![0.0], vec![0.0]));
        assert_eq!(split_tau(&[-3.0]), (vec![0.0], vec![-3.0]));
        assert_eq!(split_tau(&[2.0, -1.0]), (vec![2.0, 0.0], vec![0.0, -1.0]));
    }

    proptest! {
        #[test]
        fn split_recomposes(t in prop::collection::vec(-10.0..10.0f64, 0..40)) {
            let (p, m) = split_tau(&t);
            for i in 0..t.len() {
                prop_assert!(p[i] >= 0.0 && m[i] <= 0.0);
                prop_assert_eq!(p[i] + m[i], t[i]);
                prop_assert_eq!(p[i] * m[i], 0.0);
            }
        }
    }

    #[test]
    fn mu0_examples() {
        assert_eq!(compute_mu0(&[2.5]), 2.5);
        assert!(compute_mu0(&[-1.0, -0.2, -3.0]) <= 0.0);
        let inst = instance(1, 6, 2, [0.0; 3]);
        let core = CoreOperators::assemble(&inst, 1.0, &TdMode::GridConsistent).unwrap();
        let m = ModifiedOperators::assemble(&inst, &core);
        let mut scan = f64::NEG_INFINITY;
        for &s in &m.s_d {
            if s > scan {
                scan = s;
            }
        }
        assert_eq!(m.mu0(), scan);
    }

    #[test]
    fn zero_tau_plus_reduces_to_core() {
        let inst = instance(1, 6, 2, [0.0; 3]);
        let core = CoreOperators::assemble(&inst, 3.0, &TdMode::GridConsistent).unwrap();
        let zeros = vec![0.0; inst.dim()];
        let f = assemble_f_from_g(&inst, &core, &zeros);
        assert_eq!(f.to_dense(), core.g.to_dense());
        let f_direct = assemble_f_direct(&inst, 3.0, &zeros);
        assert!(max_abs_diff(&f_direct.to_dense(), &core.g.to_dense()) <= 1e-15);
        let (s_d, s_od) = assemble_s(&inst, 3.0, &zeros, &core.t_d);
        assert_eq!(s_d, core.t_d);
        assert!(max_abs_diff(&s_od.to_dense(), &core.t_od.to_dense()) <= 1e-15);
    }

    #[test]
    fn vacuum_value_of_f() {
        // A single node at |k| = 1 on the z-axis: F(vacuum)(k) = -v(k)/(k²+ω+τ_++λ) = 1/(3+t).
        let params = ModelParams::default();
        let grid = GridConfig {
            r_min: 1.0,
            r_max: 1.0,
            n_radial: 1,
            n_angular: 1,
            scheme: GridScheme::ProductGauss,
        };
        let inst = Instance::new(&params, &grid, 1, None).unwrap();
        let t = 0.75;
        let f = assemble_f_direct(&inst, 1.0, &[0.0, t]);
        let out = f.apply(&nalgebra::DVector::from_vec(vec![1.0, 0.0]));
        assert_relative_eq!(out[1], 1.0 / (3.0 + t), epsilon = 1e-15);
    }

    #[test]
    fn f_routes_agree_and_are_dominated_by_g() {
        for (p, lambda) in [([0.0; 3], 0.5), ([0.3, -0.2, 0.5], 2.0), ([1.0, 0.0, 0.0], 10.0)] {
            let inst = instance(2, 6, 2, p);
            let core = CoreOperators::assemble(&inst, lambda, &TdMode::GridConsistent).unwrap();
            let (tau_plus, _) = split_tau(&core.t_d);
            let direct = assemble_f_direct(&inst, lambda, &tau_plus).to_dense();
            let relation = assemble_f_from_g(&inst, &core, &tau_plus).to_dense();
            assert!(max_abs_diff(&direct, &relation) <= 1e-13 * max_abs(&direct));
            let g = core.g.to_dense();
            for (f, g) in relation.iter().zip(g.iter()) {
                assert!(*f >= 0.0 && *f <= *g + 1e-15);
            }
            // G - F = (L+τ_++λ)^{-1} τ_+ G
            let scale: Vec<f64> = (0..inst.dim())
                .map(|i| tau_plus[i] / (inst.lp[i] + tau_plus[i] + lambda))
                .collect();
            let rhs = diag(&scale) * &g;
            assert!(max_abs_diff(&(&g - &relation), &rhs) <= 1e-13 * max_abs(&g));
        }
    }

    #[test]
    fn f_star_is_minus_a_times_resolvent() {
        let inst = instance(2, 6, 2, [0.2, 0.0, -0.1]);
        let core = CoreOperators::assemble(&inst, 1.5, &TdMode::GridConsistent).unwrap();
        let m = ModifiedOperators::assemble(&inst, &core);
        let r: Vec<f64> = m.shifted_symbol(&inst.lp).iter().map(|x| -1.0 / x).collect();
        let expected = core.annihilation.to_dense() * diag(&r);
        assert!(max_abs_diff(&m.f_star.to_dense(), &expected) <= 1e-13 * max_abs(&expected));
    }

    #[test]
    fn s_identity_closes() {
        // S = T_od + τ_- + F* τ_+ G, with both sides assembled independently.
        for lambda in [0.5, 1.0, 4.0] {
            let inst = instance(1, 3, 2, [0.0, 0.0, 0.4]);
            let core = CoreOperators::assemble(&inst, lambda, &TdMode::GridConsistent).unwrap();
            let m = ModifiedOperators::assemble(&inst, &core);
            let rhs = core.t_od.to_dense()
                + diag(&m.tau_minus)
                + m.f_star.to_dense() * diag(&m.tau_plus) * core.g.to_dense();
            let lhs = m.s_dense();
            assert!(max_abs_diff(&lhs, &rhs) <= 1e-10 * max_abs(&lhs).max(1.0));
        }
        let inst = instance(3, 6, 2, [0.0; 3]);
        let core = CoreOperators::assemble(&inst, 2.0, &TdMode::GridConsistent).unwrap();
        let m = ModifiedOperators::assemble(&inst, &core);
        let rhs = core.t_od.to_dense()
            + diag(&m.tau_minus)
            + m.f_star.to_dense() * diag(&m.tau_plus) * core.g.to_dense();
        assert!(max_abs_diff(&m.s_dense(), &rhs) <= 1e-10 * max_abs(&rhs));
    }

    #[test]
    fn sign_structure() {
        let inst = instance(2, 6, 2, [0.5, 0.0, 0.0]);
        let core = CoreOperators::assemble(&inst, 1.0, &TdMode::GridConsistent).unwrap();
        let m = ModifiedOperators::assemble(&inst, &core);
        assert!(m.f.min_entry().unwrap_or(0.0) >= 0.0);
        assert!(m.f_star.min_entry().unwrap_or(0.0) >= 0.0);
        assert!(m.s_od.max_entry().unwrap_or(0.0) <= 0.0);
        for i in 0..inst.dim() {
            assert!(m.s_d[i] - m.tau_minus[i] >= 0.0);
        }
        // sector 0 is not reached by S_od
        for (row, col, _) in m.s_od.entries() {
            assert!(inst.basis.sector_of(row) > 0 && inst.basis.sector_of(col) > 0);
        }
    }

    #[test]
    fn s_d_excess_is_bounded_in_lambda() {
        let inst = instance(2, 6, 2, [0.0; 3]);
        let mut worst: f64 = 0.0;
        for lambda in [0.1, 1.0, 10.0, 100.0, 1000.0] {
            let core = CoreOperators::assemble(&inst, lambda, &TdMode::GridConsistent).unwrap();
            let m = ModifiedOperators::assemble(&inst, &core);
            let excess = (0..inst.dim()).map(|i| m.s_d[i] - m.tau_minus[i]).fold(0.0, f64::max);
            worst = worst.max(excess);
        }
        // bounded by Σ_q w v² / (L_P(K,q)) ≤ -E_grid
        assert!(worst <= inst.grid_self_energy());
    }
}
