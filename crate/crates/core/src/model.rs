//! Dispersion, form factor and the free fiber symbol.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Boson mass `m >= 0`.
    pub mass: f64,
    /// Coupling `g`; `g < 0` makes the form factor negative.
    pub coupling: f64,
    /// Total momentum `P`.
    pub total_momentum: [f64; 3],
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mass: 0.0,
            coupling: -1.0,
            total_momentum: [0.0; 3],
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass >= 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidConfig(format!("mass must be >= 0, got {}", self.mass)));
        }
        if !self.coupling.is_finite() {
            return Err(Error::InvalidConfig("coupling must be finite".into()));
        }
        if self.total_momentum.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("total momentum must be finite".into()));
        }
        Ok(())
    }

    pub fn momentum(&self) -> Vector3<f64> {
        Vector3::from(self.total_momentum)
    }

    /// The same model with `g -> -g`.
    pub fn with_flipped_coupling(&self) -> Self {
        Self {
            coupling: -self.coupling,
            ..self.clone()
        }
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        Self {
            coupling,
            ..self.clone()
        }
    }
}

/// `ω(k) = sqrt(k^2 + m^2)`.
pub fn omega(k: &Vector3<f64>, mass: f64) -> f64 {
    omega_radial(k.norm(), mass)
}

pub fn omega_radial(r: f64, mass: f64) -> f64 {
    r.hypot(mass)
}

/// `v(k) = g ω(k)^{-1/2}`.
pub fn form_factor(k: &Vector3<f64>, params: &ModelParams) -> Result<f64> {
    let w = omega(k, params.mass);
    if w == 0.0 {
        return Err(Error::SingularInput("form factor diverges at k = 0 when m = 0".into()));
    }
    Ok(params.coupling / w.sqrt())
}

/// `|v|^2` as a function of `|k|`.
pub fn form_factor_sq_radial(r: f64, params: &ModelParams) -> f64 {
    params.coupling * params.coupling / omega_radial(r, params.mass)
}

/// `Ω(K) = Σ_j ω(k_j)`.
pub fn field_energy_symbol<'a, I>(momenta: I, params: &ModelParams) -> f64
where
    I: IntoIterator<Item = &'a Vector3<f64>>,
{
    momenta.into_iter().map(|k| omega(k, params.mass)).sum()
}

/// `L_P(K) = (P - Σ_j k_j)^2 + Σ_j ω(k_j)`.
pub fn lp_symbol<'a, I>(momenta: I, params: &ModelParams) -> f64
where
    I: IntoIterator<Item = &'a Vector3<f64>>,
{
    let mut residual = params.momentum();
    let mut field = 0.0;
    for k in momenta {
        residual -= k;
        field += omega(k, params.mass);
    }
    residual.norm_squared() + field
}
