//! A fully specified discretization: model, grid, Fock basis and the
//! per-element symbols every operator needs.

use nalgebra::Vector3;

use crate::error::Result;
use crate::fock::{enumerate_basis, FockBasis, MeasureWeights};
use crate::grid::{build_grid, GridConfig, MomentumGrid};
use crate::model::{form_factor, omega, ModelParams};

#[derive(Debug, Clone)]
pub struct Instance {
    pub params: ModelParams,
    pub grid: MomentumGrid,
    pub basis: FockBasis,
    pub measure: MeasureWeights,
    /// `v(q)` on every node.
    pub form_factor: Vec<f64>,
    /// `ω(q)` on every node.
    pub node_omega: Vec<f64>,
    /// `L_P(K)` per basis element.
    pub lp: Vec<f64>,
    /// `Ω(K)` per basis element.
    pub field_energy: Vec<f64>,
    /// `P - Σ_j k_j` per basis element.
    pub residual_momentum: Vec<Vector3<f64>>,
}

impl Instance {
    pub fn new(params: &ModelParams, grid: &GridConfig, n_max: usize, max_dim: Option<usize>) -> Result<Self> {
        params.validate()?;
        let grid = build_grid(grid)?;
        let basis = enumerate_basis(&grid, n_max, max_dim)?;
        Self::from_parts(params.clone(), grid, basis)
    }

    pub fn from_parts(params: ModelParams, grid: MomentumGrid, basis: FockBasis) -> Result<Self> {
        let measure = MeasureWeights::new(&basis, &grid);
        let form = grid
            .nodes()
            .iter()
            .map(|k| form_factor(k, &params))
            .collect::<Result<Vec<_>>>()?;
        let node_omega: Vec<f64> = grid.nodes().iter().map(|k| omega(k, params.mass)).collect();

        let mut lp = Vec::with_capacity(basis.dim());
        let mut field_energy = Vec::with_capacity(basis.dim());
        let mut residual_momentum = Vec::with_capacity(basis.dim());
        for m in basis.elements() {
            let mut p = params.momentum();
            let mut field = 0.0;
            for &q in m {
                p -= grid.node(q as usize);
                field += node_omega[q as usize];
            }
            lp.push(p.norm_squared() + field);
            field_energy.push(field);
            residual_momentum.push(p);
        }

        Ok(Self {
            params,
            grid,
            basis,
            measure,
            form_factor: form,
            node_omega,
            lp,
            field_energy,
            residual_momentum,
        })
    }

    /// The same discretization with coupling `g`.
    pub fn with_coupling(&self, coupling: f64) -> Result<Self> {
        Self::from_parts(self.params.with_coupling(coupling), self.grid.clone(), self.basis.clone())
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn n_max(&self) -> usize {
        self.basis.n_max()
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }

    /// `L_P(K, q)` for a node `q` appended to element `i`, without a basis lookup.
    pub fn lp_appended(&self, i: usize, q: usize) -> f64 {
        let p = self.residual_momentum[i] - self.grid.node(q);
        p.norm_squared() + self.field_energy[i] + self.node_omega[q]
    }

    /// `|v(q)|^2 / (q^2 + ω(q))`, the integrand of the self-energy on a node.
    pub fn self_energy_density(&self, q: usize) -> f64 {
        let v = self.form_factor[q];
        v * v / (self.grid.node(q).norm_squared() + self.node_omega[q])
    }

    /// `-E` on the grid: `Σ_q w_q |v(q)|^2 / (q^2 + ω(q))`.
    pub fn grid_self_energy(&self) -> f64 {
        (0..self.n_nodes())
            .map(|q| self.grid.weight(q) * self.self_energy_density(q))
            .sum()
    }
}
