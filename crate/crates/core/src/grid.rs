//! Momentum-space quadrature.
//!
//! A [`MomentumGrid`] is a product rule on the spherical shell
//! `r_min <= |k| <= r_max`: a radial rule (Gauss–Legendre or equal-width
//! shells) times an equal-weight angular rule. The origin is always excluded
//! so that the form factor stays finite on every node even when `m = 0`.
//!
//! Scalar integrals over all of momentum space are reduced to one radial
//! integral and evaluated with [`integrate_radial`], an adaptive
//! Gauss–Kronrod scheme with a mapped tail beyond
//! [`TailQuadrature::r_tail_max`].

use std::collections::BinaryHeap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridScheme {
    /// Gauss–Legendre nodes in `r` with the `r^2` Jacobian folded into the weights.
    ProductGauss,
    /// Equal-width radial shells; each node carries the exact volume of its cell.
    UniformShell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub n_radial: usize,
    pub n_angular: usize,
    pub scheme: GridScheme,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            r_min: 0.5,
            r_max: 4.0,
            n_radial: 3,
            n_angular: 6,
            scheme: GridScheme::ProductGauss,
        }
    }
}

impl GridConfig {
    /// One refinement step: twice the radial nodes and the next richer angular rule.
    pub fn refined(&self) -> Self {
        let n_angular = match self.n_angular {
            1 => 2,
            2 => 6,
            6 => 12,
            8 | 12 => 20,
            n => 2 * n,
        };
        Self {
            n_radial: 2 * self.n_radial,
            n_angular,
            ..self.clone()
        }
    }

    pub fn node_count(&self) -> usize {
        self.n_radial * self.n_angular
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.r_min.is_finite() && self.r_min > 0.0) {
            return bad(format!("r_min must be positive, got {}", self.r_min));
        }
        if !self.r_max.is_finite() || self.r_max < self.r_min {
            return bad(format!("r_max must be >= r_min, got {}", self.r_max));
        }
        if self.r_max == self.r_min && self.n_radial != 1 {
            return bad("a degenerate shell (r_min == r_max) admits only n_radial = 1".into());
        }
        if self.n_radial == 0 || self.n_angular == 0 {
            return bad("n_radial and n_angular must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MomentumGrid {
    config: GridConfig,
    nodes: Vec<Vector3<f64>>,
    weights: Vec<f64>,
}

pub fn build_grid(config: &GridConfig) -> Result<MomentumGrid> {
    config.validate()?;
    let radial = radial_rule(config);
    let angular = angular_rule(config.n_angular);

    let mut nodes = Vec::with_capacity(config.node_count());
    let mut weights = Vec::with_capacity(config.node_count());
    for &(r, wr) in &radial {
        for &(dir, wa) in &angular {
            nodes.push(dir * r);
            weights.push(wr * wa);
        }
    }

    let grid = MomentumGrid {
        config: config.clone(),
        nodes,
        weights,
    };
    grid.check_invariants()?;
    Ok(grid)
}

impl MomentumGrid {
    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vector3<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, i: usize) -> &Vector3<f64> {
        &self.nodes[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.nodes[i].norm()
    }

    /// Volume of the continuum shell the grid discretizes.
    pub fn shell_volume(&self) -> f64 {
        4.0 / 3.0 * PI * (self.config.r_max.powi(3) - self.config.r_min.powi(3))
    }

    /// Highest degree `d` such that `∫ |k|^j d^3k` is exact for all `j <= d`.
    /// `None` when the radial rule is not polynomially exact.
    pub fn radial_degree(&self) -> Option<usize> {
        match self.config.scheme {
            GridScheme::ProductGauss if self.config.r_max > self.config.r_min => {
                // 2n - 1 for the full integrand, two of which go to the r^2 Jacobian.
                (2 * self.config.n_radial).checked_sub(3)
            }
            _ => None,
        }
    }

    /// Quadrature of a radial function over the shell.
    pub fn integrate<F: Fn(&Vector3<f64>) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(k, w)| w * f(k))
            .sum()
    }

    fn check_invariants(&self) -> Result<()> {
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig(format!("non-positive quadrature weight {w}")));
        }
        let eps = 1e-12 * self.config.r_max;
        for (i, k) in self.nodes.iter().enumerate() {
            let r = k.norm();
            if r < self.config.r_min * (1.0 - 1e-12) || r > self.config.r_max * (1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!("node {i} at |k| = {r} outside the shell")));
            }
            if self.nodes[..i].iter().any(|q| (q - k).norm() <= eps) {
                return Err(Error::InvalidConfig(format!("duplicate node {i}")));
            }
        }
        Ok(())
    }
}

/// Radial nodes and weights including the `r^2` Jacobian.
fn radial_rule(config: &GridConfig) -> Vec<(f64, f64)> {
    let (a, b, n) = (config.r_min, config.r_max, config.n_radial);
    if a == b {
        // Degenerate single sphere: a surface rule, no radial extent.
        return vec![(a, a * a)];
    }
    match config.scheme {
        GridScheme::ProductGauss => {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            gauss_legendre(n)
                .into_iter()
                .map(|(x, w)| {
                    let r = mid + half * x;
                    (r, half * w * r * r)
                })
                .collect()
        }
        GridScheme::UniformShell => {
            let h = (b - a) / n as f64;
            (0..n)
                .map(|i| {
                    let lo = a + i as f64 * h;
                    let hi = lo + h;
                    (lo + 0.5 * h, (hi.powi(3) - lo.powi(3)) / 3.0)
                })
                .collect()
        }
    }
}

/// Gauss–Legendre rule on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut rule = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                dp = legendre_with_derivative(n, x).1;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule[i] = (-x, w);
        rule[n - 1 - i] = (x, w);
    }
    rule
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Unit directions with solid-angle weights summing to `4π`.
///
/// Platonic vertex sets for 6, 8, 12 and 20 points; a Gauss × trapezoid
/// product for `n = 2q^2`; a Fibonacci spiral otherwise.
fn angular_rule(n: usize) -> Vec<(Vector3<f64>, f64)> {
    let dirs: Vec<Vector3<f64>> = match n {
        1 => vec![Vector3::z()],
        6 => octahedron(),
        8 => cube(),
        12 => icosahedron(),
        20 => dodecahedron(),
        _ => {
            let q = ((n / 2) as f64).sqrt().round() as usize;
            if q >= 1 && 2 * q * q == n {
                return gauss_product_sphere(q);
            }
            fibonacci_sphere(n)
        }
    };
    let w = 4.0 * PI / dirs.len() as f64;
    dirs.into_iter().map(|d| (d.normalize(), w)).collect()
}

fn octahedron() -> Vec<Vector3<f64>> {
    vec![
        Vector3::x(),
        -Vector3::x(),
        Vector3::y(),
        -Vector3::y(),
        Vector3::z(),
        -Vector3::z(),
    ]
}

fn cube() -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(8);
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                out.push(Vector3::new(sx, sy, sz));
            }
        }
    }
    out
}

fn icosahedron() -> Vec<Vector3<f64>> {
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    let mut out = Vec::with_capacity(12);
    for a in [-1.0, 1.0] {
        for b in [-phi, phi] {
            out.push(Vector3::new(0.0, a, b));
            out.push(Vector3::new(a, b, 0.0));
            out.push(Vector3::new(b, 0.0, a));
        }
    }
    out
}

fn dodecahedron() -> Vec<Vector3<f64>> {
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    let inv = 1.0 / phi;
    let mut out = cube();
    for a in [-inv, inv] {
        for b in [-phi, phi] {
            out.push(Vector3::new(0.0, a, b));
            out.push(Vector3::new(a, b, 0.0));
            out.push(Vector3::new(b, 0.0, a));
        }
    }
    out
}

fn gauss_product_sphere(q: usize) -> Vec<(Vector3<f64>, f64)> {
    let n_phi = 2 * q;
    let dphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(q * n_phi);
    for (z, wz) in gauss_legendre(q) {
        let s = (1.0 - z * z).sqrt();
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * dphi;
            out.push((Vector3::new(s * phi.cos(), s * phi.sin(), z), wz * dphi));
        }
    }
    out
}

fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let s = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector3::new(s * phi.cos(), s * phi.sin(), z)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailQuadrature {
    /// Split point between the direct and the inverted (`r = R/t`) radial pieces.
    pub r_tail_max: f64,
    /// Subdivision budget of the adaptive rule.
    pub n_tail: usize,
    pub tolerance: f64,
}

impl Default for TailQuadrature {
    fn default() -> Self {
        Self {
            r_tail_max: 64.0,
            n_tail: 4000,
            tolerance: 1e-10,
        }
    }
}

impl TailQuadrature {
    pub fn validate(&self, r_max: f64) -> Result<()> {
        if !(self.r_tail_max > r_max) {
            return Err(Error::InvalidConfig(format!(
                "r_tail_max = {} must exceed the grid's r_max = {r_max}",
                self.r_tail_max
            )));
        }
        if !(self.tolerance > 0.0) || self.n_tail == 0 {
            return Err(Error::InvalidConfig("tail tolerance and n_tail must be positive".into()));
        }
        Ok(())
    }
}

/// `∫_0^∞ f(r) dr`. The caller includes any `4π r^2` factor in `f`.
///
/// Converged means the summed error estimate is below
/// `tolerance * max(1, |result|)`.
pub fn integrate_radial<F: Fn(f64) -> f64>(f: F, tail: &TailQuadrature) -> Result<f64> {
    let big_r = tail.r_tail_max;
    let inverted = |t: f64| {
        let r = big_r / t;
        f(r) * big_r / (t * t)
    };
    let budget = tail.n_tail.max(2);
    let (near, near_err) = adaptive_gauss_kronrod(&f, 0.0, big_r, tail.tolerance * 0.5, budget / 2);
    let (far, far_err) = adaptive_gauss_kronrod(&inverted, 0.0, 1.0, tail.tolerance * 0.5, budget / 2);
    finish(near + far, near_err + far_err, tail.tolerance)
}

/// `∫_a^b f(r) dr` with the same acceptance rule as [`integrate_radial`].
pub fn integrate_interval<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tolerance: f64,
    max_intervals: usize,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (value, err) = adaptive_gauss_kronrod(&f, a, b, tolerance, max_intervals);
    finish(value, err, tolerance)
}

fn finish(value: f64, err: f64, tolerance: f64) -> Result<f64> {
    if value.is_finite() && err.is_finite() && err <= tolerance * value.abs().max(1.0) {
        Ok(value)
    } else {
        Err(Error::NoConvergence {
            estimate: if err.is_finite() { err } else { f64::INFINITY },
            tolerance,
        })
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err).is_eq()
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive bisection; returns `(value, error estimate)`.
fn adaptive_gauss_kronrod<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tolerance: f64,
    max_intervals: usize,
) -> (f64, f64) {
    let (value, err) = gauss_kronrod_15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, err });
    let (mut total, mut total_err) = (value, err);

    while heap.len() < max_intervals {
        if !(total.is_finite() && total_err.is_finite()) {
            break;
        }
        if total_err <= tolerance * total.abs().max(1.0) {
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (lv, le) = gauss_kronrod_15(f, worst.a, mid);
        let (rv, re) = gauss_kronrod_15(f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: lv, err: le });
        heap.push(Piece { a: mid, b: worst.b, value: rv, err: re });
    }
    // Re-sum to shed the drift of the running totals.
    heap.iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.err))
}
