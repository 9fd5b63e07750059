//! Run configuration, read from TOML.
//!
//! Every section is optional; missing keys take the reference defaults
//! (`m = 0`, `g = -1`, `P = 0`, 18-node grid, `n_max = 2`, automatic `λ`/`μ`).
//!
//! ```toml
//! campaign = "all"
//! seed = 1
//!
//! [model]
//! mass = 0.0
//! coupling = -1.0
//! total_momentum = [0.0, 0.0, 0.0]
//!
//! [grid]
//! r_min = 0.5
//! r_max = 4.0
//! n_radial = 3
//! n_angular = 6
//! scheme = "product-gauss"
//!
//! [fock]
//! n_max = 2
//! max_dim = 20000
//!
//! [resolvent]
//! lambda = "auto"
//! mu = "auto"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{GridConfig, TailQuadrature};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Campaign {
    BuildCheck,
    Positivity,
    RenormStudy,
    Bounds,
    #[default]
    All,
}

impl Campaign {
    pub const EACH: [Campaign; 4] = [
        Campaign::BuildCheck,
        Campaign::Positivity,
        Campaign::RenormStudy,
        Campaign::Bounds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Campaign::BuildCheck => "build-check",
            Campaign::Positivity => "positivity",
            Campaign::RenormStudy => "renorm-study",
            Campaign::Bounds => "bounds",
            Campaign::All => "all",
        }
    }

    pub fn expand(self) -> Vec<Campaign> {
        match self {
            Campaign::All => Self::EACH.to_vec(),
            c => vec![c],
        }
    }
}

impl fmt::Display for Campaign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Campaign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Campaign::EACH
            .into_iter()
            .chain([Campaign::All])
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown campaign {s:?}")))
    }
}

/// A parameter that is either given or resolved automatically.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Setting {
    #[default]
    Auto,
    Value(f64),
}

impl Setting {
    pub fn value(self) -> Option<f64> {
        match self {
            Setting::Auto => None,
            Setting::Value(v) => Some(v),
        }
    }
}

impl Serialize for Setting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Setting::Auto => s.serialize_str("auto"),
            Setting::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Setting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Setting::Value(v)),
            Raw::Text(t) if t == "auto" => Ok(Setting::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected \"auto\" or a number, got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FockSection {
    pub n_max: usize,
    pub max_dim: usize,
}

impl Default for FockSection {
    fn default() -> Self {
        Self { n_max: 2, max_dim: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventSection {
    pub lambda: Setting,
    pub mu: Setting,
    pub j_max: usize,
    pub tol: f64,
}

impl Default for ResolventSection {
    fn default() -> Self {
        Self {
            lambda: Setting::Auto,
            mu: Setting::Auto,
            j_max: 2000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenormSection {
    pub cutoffs: Vec<f64>,
    /// `λ` at which the tail-corrected `H_P` is assembled.
    pub lambda_build: f64,
    /// Spectral parameter of the compared resolvents.
    pub lambda_eval: f64,
    /// Grid for the study; four shells so that every cutoff removes a shell.
    pub grid: GridConfig,
}

impl Default for RenormSection {
    fn default() -> Self {
        Self {
            cutoffs: vec![1.0, 2.0, 4.0],
            lambda_build: 10.0,
            lambda_eval: 20.0,
            grid: GridConfig {
                n_radial: 4,
                ..GridConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub lambdas: Vec<f64>,
    /// Smoothing exponent for `‖(L_P+λ)^s G_λ‖`.
    pub s: f64,
    pub epsilon: f64,
    /// `λ` values for the `T_d` constant.
    pub td_lambdas: Vec<f64>,
    pub probes: usize,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            lambdas: vec![10.0, 100.0, 1000.0],
            s: 0.2,
            epsilon: 0.1,
            td_lambdas: vec![1.0, 10.0],
            probes: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub campaign: Campaign,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelParams,
    pub grid: GridConfig,
    pub tail: TailQuadrature,
    pub fock: FockSection,
    pub resolvent: ResolventSection,
    pub renorm: RenormSection,
    pub bounds: BoundsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            campaign: Campaign::All,
            seed: 1,
            out_dir: PathBuf::from("nelson-ibc-out"),
            model: ModelParams::default(),
            grid: GridConfig::default(),
            tail: TailQuadrature::default(),
            fock: FockSection::default(),
            resolvent: ResolventSection::default(),
            renorm: RenormSection::default(),
            bounds: BoundsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.grid.validate()?;
        self.renorm.grid.validate()?;
        self.tail.validate(self.grid.r_max.max(self.renorm.grid.r_max))?;
        for (name, s) in [("lambda", self.resolvent.lambda), ("mu", self.resolvent.mu)] {
            if let Setting::Value(v) = s {
                if !v.is_finite() {
                    return Err(Error::InvalidConfig(format!("resolvent.{name} must be finite")));
                }
            }
        }
        if let Setting::Value(l) = self.resolvent.lambda {
            if l <= 0.0 {
                return Err(Error::InvalidConfig(format!("resolvent.lambda must be positive, got {l}")));
            }
        }
        if !(self.resolvent.tol > 0.0) {
            return Err(Error::InvalidConfig("resolvent.tol must be positive".into()));
        }
        if self.bounds.lambdas.len() < 3 {
            return Err(Error::InvalidConfig("bounds.lambdas needs at least three values".into()));
        }
        if !(self.bounds.epsilon > 0.0) || !(self.bounds.s >= 0.0) {
            return Err(Error::InvalidConfig("bounds.epsilon must be > 0 and bounds.s >= 0".into()));
        }
        if !(self.renorm.lambda_build > 0.0 && self.renorm.lambda_eval > 0.0) {
            return Err(Error::InvalidConfig("renorm λ values must be positive".into()));
        }
        Ok(())
    }

    /// Pretty TOML of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}
