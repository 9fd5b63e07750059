//! Verification campaigns and the machine-readable run report.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{verify_f_bounds, verify_g_bounds, verify_series_contraction, verify_td_bound, verify_tod_sod_bounds, BoundReport};
use crate::config::{Campaign, RunConfig};
use crate::error::Result;
use crate::fock::{dense_adjoint, sector_sizes, FockVector};
use crate::instance::Instance;
use crate::linalg::{adjoint_probe_error, max_abs, max_abs_diff, shifted_inverse, weighted_norm};
use crate::ops_core::{assemble_creation, TdMode};
use crate::ops_modified::assemble_f_direct;
use crate::positivity::{certify_improves, certify_preserves, perron_frobenius_check, weighted_eigen, Cone};
use crate::renorm::{compute_e_lambda, convergence_study, physics_hamiltonian, write_study_csv, CutoffFamily};
use crate::resolvent::{
    dense_oracle_distance, empirical_lambda0, extend_resolvent, resolve_parameters, resolvent_neumann, verify_distributional_identity,
    HamiltonianBuild, NormSpace, SeriesParameters,
};

/// Adjointness probe pairs per operator.
pub const ADJOINT_PROBES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Above,
    #[serde(rename = "<")]
    Below,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub campaign: String,
    pub name: String,
    pub measured: f64,
    pub comparison: Comparison,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(campaign: Campaign, name: &str, measured: f64, comparison: Comparison, tolerance: f64) -> Self {
        let passed = match comparison {
            Comparison::AtMost => measured <= tolerance,
            Comparison::AtLeast => measured >= tolerance,
            Comparison::Above => measured > tolerance,
            Comparison::Below => measured < tolerance,
        };
        Self {
            campaign: campaign.name().to_owned(),
            name: name.to_owned(),
            measured,
            comparison,
            tolerance,
            passed,
        }
    }

    fn flag(campaign: Campaign, name: &str, holds: bool) -> Self {
        Self::new(campaign, name, if holds { 1.0 } else { 0.0 }, Comparison::AtLeast, 1.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub dimension: usize,
    pub sector_sizes: Vec<usize>,
    pub nodes: usize,
    pub series: SeriesParameters,
    /// `‖G_λ‖` at the series `λ`.
    pub g_norm: f64,
    /// Smallest `λ = 2^k` (k = 0..=10) with `‖G_λ‖ < 1`.
    pub empirical_lambda0: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub version: &'static str,
    /// Seconds since the Unix epoch; the only field that varies between identical runs.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: RunConfig,
    pub resolved: Resolved,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub passed: bool,
    pub meta: Meta,
}

impl Report {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Context<'a> {
    config: &'a RunConfig,
    inst: Instance,
    params: SeriesParameters,
    build: HamiltonianBuild,
    out_dir: &'a Path,
    artifacts: Vec<String>,
}

impl Context<'_> {
    fn write_csv(&mut self, name: &str, report: &BoundReport) -> Result<()> {
        report.write_csv(&self.out_dir.join(name))?;
        self.artifacts.push(name.to_owned());
        Ok(())
    }
}

/// Runs the configured campaigns, writing CSV tables into `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<Report> {
    config.validate()?;
    let inst = Instance::new(&config.model, &config.grid, config.fock.n_max, Some(config.fock.max_dim))?;
    std::fs::create_dir_all(out_dir)?;
    let (params, build) = resolve_parameters(
        &inst,
        config.resolvent.lambda.value(),
        config.resolvent.mu.value(),
        &TdMode::GridConsistent,
    )?;
    let mut ctx = Context {
        config,
        inst,
        params,
        build,
        out_dir,
        artifacts: Vec::new(),
    };
    let mut checks = Vec::new();
    for campaign in config.campaign.expand() {
        checks.extend(match campaign {
            Campaign::BuildCheck => build_check(&ctx)?,
            Campaign::Positivity => positivity(&ctx)?,
            Campaign::RenormStudy => renorm_study(&mut ctx)?,
            Campaign::Bounds => bounds(&mut ctx)?,
            Campaign::All => unreachable!("expanded above"),
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    let doubling: Vec<f64> = (0..=10).map(|k| f64::from(1u32 << k)).collect();
    let (empirical_lambda0, _) = empirical_lambda0(&ctx.inst, &doubling, NormSpace::Plain);
    Ok(Report {
        config: config.clone(),
        resolved: Resolved {
            dimension: ctx.inst.dim(),
            sector_sizes: ctx.inst.basis.sector_lens(),
            nodes: ctx.inst.n_nodes(),
            series: ctx.params.clone(),
            g_norm: ctx.build.inv_one_minus_g.norm,
            empirical_lambda0,
        },
        checks,
        artifacts: ctx.artifacts,
        passed,
        meta: Meta {
            version: env!("CARGO_PKG_VERSION"),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
    })
}

pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
}

fn build_check(ctx: &Context) -> Result<Vec<Check>> {
    use Comparison::*;
    let c = Campaign::BuildCheck;
    let inst = &ctx.inst;
    let b = &ctx.build;
    let mu = &inst.measure;
    let seed = ctx.config.seed;
    let mut out = Vec::new();

    // adjoints against independently assembled kernels
    let a = b.core.annihilation.to_dense();
    let resolvent: Vec<f64> = inst.lp.iter().map(|l| -1.0 / (l + b.lambda)).collect();
    let modified: Vec<f64> = b.modified.shifted_symbol(&inst.lp).iter().map(|d| -1.0 / d).collect();
    let pairs: [(&str, DMatrix<f64>, DMatrix<f64>); 6] = [
        ("adjoint_a", a.clone(), assemble_creation(inst).to_dense()),
        ("adjoint_G", b.core.g.to_dense(), &a * diag(&resolvent)),
        ("adjoint_F", b.modified.f.to_dense(), &a * diag(&modified)),
        ("adjoint_T_od", b.core.t_od.to_dense(), b.core.t_od.to_dense()),
        ("adjoint_S_od", b.modified.s_od.to_dense(), b.modified.s_od.to_dense()),
        ("adjoint_H", b.h_g.clone(), b.h_g.clone()),
    ];
    for (i, (name, op, star)) in pairs.iter().enumerate() {
        let err = adjoint_probe_error(op, star, mu, ADJOINT_PROBES, seed.wrapping_add(i as u64));
        out.push(Check::new(c, name, err, AtMost, 1e-12));
    }

    out.push(Check::new(c, "representation_agreement", b.representation_residual(inst), AtMost, 1e-9));
    let h_norm = weighted_norm(&b.h_g, mu);
    let asym = weighted_norm(&(&b.h_g - dense_adjoint(&b.h_g, mu)), mu) / h_norm;
    out.push(Check::new(c, "symmetry_H", asym, AtMost, 1e-12));

    let b2 = HamiltonianBuild::new(inst, 2.0, &TdMode::GridConsistent)?;
    let b5 = HamiltonianBuild::new(inst, 5.0, &TdMode::GridConsistent)?;
    out.push(Check::new(
        c,
        "lambda_independence_H",
        max_abs_diff(&b2.h_g, &b5.h_g) / max_abs(&b2.h_g),
        AtMost,
        1e-9,
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = FockVector::random(&inst.basis, &mut rng, 0).values;
    let r2 = verify_distributional_identity(&b2.core, &b2.h_g, &psi);
    let r5 = verify_distributional_identity(&b5.core, &b5.h_g, &psi);
    out.push(Check::new(c, "distributional_identity", r2.residual.max(r5.residual), AtMost, 1e-10));
    out.push(Check::new(
        c,
        "lambda_independence_A",
        (&r2.a_action - &r5.a_action).amax() / r2.a_action.amax().max(f64::MIN_POSITIVE),
        AtMost,
        1e-10,
    ));

    let n = inst.dim();
    let id = DMatrix::identity(n, n);
    let inv_err = max_abs_diff(&((&id - b.core.g.to_dense()) * &b.inv_one_minus_g.inverse), &id)
        .max(max_abs_diff(&((&id - b.modified.f.to_dense()) * &b.inv_one_minus_f.inverse), &id));
    out.push(Check::new(c, "nilpotent_inverse", inv_err, AtMost, 1e-12));

    let f_direct = assemble_f_direct(inst, b.lambda, &b.modified.tau_plus).to_dense();
    let f = b.modified.f.to_dense();
    out.push(Check::new(c, "F_relation", max_abs_diff(&f_direct, &f) / max_abs(&f), AtMost, 1e-13));

    let rhs = b.core.t_od.to_dense()
        + diag(&b.modified.tau_minus)
        + b.modified.f_star.to_dense() * diag(&b.modified.tau_plus) * b.core.g.to_dense();
    let s = b.modified.s_dense();
    out.push(Check::new(c, "S_identity", max_abs_diff(&s, &rhs) / max_abs(&s).max(1.0), AtMost, 1e-10));
    Ok(out)
}

fn positivity(ctx: &Context) -> Result<Vec<Check>> {
    use Comparison::*;
    let c = Campaign::Positivity;
    let inst = &ctx.inst;
    let b = &ctx.build;
    let p = &ctx.params;
    let basis = &inst.basis;
    let mut out = Vec::new();

    out.push(Check::new(c, "R0_min_entry", certify_improves(basis, &b.r0, &Cone::plus()).min_entry, Above, 0.0));
    let generator = b.series_generator(p.mu);
    out.push(Check::new(
        c,
        "generator_min_entry",
        certify_preserves(basis, &generator, &Cone::plus()).min_entry,
        AtLeast,
        0.0,
    ));
    out.push(Check::new(c, "series_contraction", p.contraction, AtMost, 0.9));

    let cfg = &ctx.config.resolvent;
    let series = resolvent_neumann(inst, b, p.mu, cfg.j_max, cfg.tol)?;
    out.push(Check::new(c, "neumann_partial_sums_min", series.report.min_partial_entry, AtLeast, 0.0));
    out.push(Check::new(c, "neumann_min_entry", series.report.min_entry, Above, 0.0));
    let gamma = p.lambda - p.mu;
    out.push(Check::new(
        c,
        "neumann_vs_dense",
        dense_oracle_distance(&b.h_g, gamma, &series.resolvent)?,
        AtMost,
        1e-8,
    ));

    let (values, _) = weighted_eigen(&b.h_g, &inst.measure);
    let e0 = values[0];
    let r_gamma = shifted_inverse(&b.h_g, gamma)?;
    let low = -e0 + 0.1;
    if low < gamma {
        for (name, lambda) in [("extension_low", low), ("extension_mid", 0.5 * (low + gamma))] {
            let ext = extend_resolvent(inst, &b.h_g, &r_gamma, gamma, lambda, 30, cfg.tol)?;
            out.push(Check::new(
                c,
                &format!("{name}_vs_dense"),
                dense_oracle_distance(&b.h_g, lambda, &ext.resolvent)?,
                AtMost,
                1e-8,
            ));
            out.push(Check::new(c, &format!("{name}_min_entry"), ext.report.min_entry, Above, 0.0));
        }
    }

    let native = if inst.params.coupling <= 0.0 { Cone::plus() } else { Cone::minus() };
    let pf = perron_frobenius_check(basis, &b.h_g, &inst.measure, &native)?;
    out.push(Check::new(c, "ground_gap", pf.gap, Above, 1e-8));
    out.push(Check::new(c, "ground_state_min_component", pf.min_component, Above, 0.0));

    let flipped = inst.with_coupling(-inst.params.coupling)?;
    let fb = HamiltonianBuild::new(&flipped, b.lambda, &TdMode::GridConsistent)?;
    let (flipped_values, _) = weighted_eigen(&fb.h_g, &flipped.measure);
    let spectrum_diff = values
        .iter()
        .zip(&flipped_values)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max);
    out.push(Check::new(c, "flipped_spectrum", spectrum_diff, AtMost, 1e-10));
    let other = if native.kind == crate::positivity::ConeKind::Plus { Cone::minus() } else { Cone::plus() };
    let fpf = perron_frobenius_check(&flipped.basis, &fb.h_g, &flipped.measure, &other)?;
    out.push(Check::new(c, "flipped_ground_state_min_component", fpf.min_component, Above, 0.0));
    Ok(out)
}

fn renorm_study(ctx: &mut Context) -> Result<Vec<Check>> {
    use Comparison::*;
    let c = Campaign::RenormStudy;
    let cfg = &ctx.config;
    let r = &cfg.renorm;
    let inst = Instance::new(&cfg.model, &r.grid, cfg.fock.n_max, Some(cfg.fock.max_dim))?;
    let mut out = Vec::new();

    if cfg.model.mass == 0.0 {
        let g2 = cfg.model.coupling * cfg.model.coupling;
        let worst = [1.0, 10.0, 100.0]
            .iter()
            .map(|&l| {
                let oracle = -4.0 * std::f64::consts::PI * g2 * f64::ln_1p(l);
                compute_e_lambda(&cfg.model, l, &cfg.tail).map(|e| if oracle == 0.0 { e.abs() } else { (e - oracle).abs() / oracle.abs() })
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        out.push(Check::new(c, "E_Lambda_closed_form", worst, AtMost, 1e-6));
    }

    let family = CutoffFamily::new(&inst, &r.cutoffs, &cfg.tail)?;
    let (h_p, floor) = physics_hamiltonian(&inst, r.lambda_build, &cfg.tail)?;
    let rows = convergence_study(&inst, &family, &h_p, r.lambda_eval, floor)?;
    write_study_csv(&rows, &ctx.out_dir.join("renorm.csv"))?;
    ctx.artifacts.push("renorm.csv".into());

    // largest ratio of consecutive entries; < 1 means strictly decreasing
    let ratio = |f: &dyn Fn(usize) -> f64| {
        (1..rows.len())
            .map(|i| f(i) / f(i - 1))
            .fold(0.0, f64::max)
    };
    if rows.len() >= 2 && cfg.model.coupling != 0.0 {
        out.push(Check::new(c, "resolvent_diff_ratio", ratio(&|i| rows[i].resolvent_diff), Below, 1.0));
        let drops = (1..rows.len())
            .map(|i| rows[i].e0_unsubtracted - rows[i - 1].e0_unsubtracted)
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(Check::new(c, "unsubtracted_energy_step", drops, Below, 0.0));
    }
    Ok(out)
}

fn bounds(ctx: &mut Context) -> Result<Vec<Check>> {
    use Comparison::*;
    let c = Campaign::Bounds;
    let cfg = ctx.config;
    let bc = &cfg.bounds;
    let inst = &ctx.inst;
    let mode = TdMode::GridConsistent;
    let mut out = Vec::new();
    let mut tables: Vec<(String, BoundReport)> = Vec::new();

    let push_decay = |out: &mut Vec<Check>, r: &BoundReport| {
        out.push(Check::new(c, &format!("{}_slope", r.name), r.slope.unwrap_or(f64::NAN), AtMost, r.tolerance));
        out.push(Check::flag(c, &format!("{}_non_increasing", r.name), r.passed));
    };

    let g = verify_g_bounds(inst, &bc.lambdas, bc.s)?;
    push_decay(&mut out, &g.norm);
    push_decay(&mut out, &g.omega);
    let first = g.smoothing.measured[0];
    out.push(Check::new(
        c,
        &format!("{}_uniform", g.smoothing.name),
        if g.smoothing.in_regime { g.smoothing.constant / first - 1.0 } else { 0.0 },
        AtMost,
        crate::bounds::UNIFORM_TOLERANCE,
    ));

    let f = verify_f_bounds(inst, &bc.lambdas, bc.s, &mode)?;
    push_decay(&mut out, &f.raising.norm);
    out.push(Check::flag(c, "F_norm_dominated_by_G", f.dominated));
    out.push(Check::flag(c, "F_difference_finite", f.difference.passed));

    let sc = verify_series_contraction(inst, &bc.lambdas, &mode)?;
    push_decay(&mut out, &sc);

    let ex = verify_tod_sod_bounds(inst, &bc.lambdas, bc.probes, cfg.seed, &mode)?;
    out.push(Check::flag(c, "T_od_S_od_finite", ex.t_od.passed && ex.s_od.passed));
    out.push(Check::flag(c, "S_od_dominated_by_T_od", ex.s_dominated));

    for &l in &bc.td_lambdas {
        let td = verify_td_bound(inst, &cfg.grid, bc.epsilon, l, &cfg.tail)?;
        out.push(Check::new(
            c,
            &format!("T_d_constant_refinement_lambda{l}"),
            td.relative_change,
            AtMost,
            crate::bounds::REFINEMENT_TOLERANCE,
        ));
    }

    tables.push(("bounds_G_norm.csv".into(), g.norm));
    tables.push(("bounds_G_smoothing.csv".into(), g.smoothing));
    tables.push(("bounds_G_omega.csv".into(), g.omega));
    tables.push(("bounds_F_norm.csv".into(), f.raising.norm));
    tables.push(("bounds_F_difference.csv".into(), f.difference));
    tables.push(("bounds_series_contraction.csv".into(), sc));
    tables.push(("bounds_T_od.csv".into(), ex.t_od));
    tables.push(("bounds_S_od.csv".into(), ex.s_od));
    for (name, report) in &tables {
        ctx.write_csv(name, report)?;
    }
    Ok(out)
}

/// Human-readable summary of a configuration; counts only.
pub fn describe(config: &RunConfig) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let g = &config.grid;
    let nodes = g.node_count();
    let sizes = sector_sizes(nodes, config.fock.n_max);
    let total: u128 = sizes.iter().fold(0u128, |a, b| a.saturating_add(*b));
    let _ = writeln!(s, "model: m = {}, g = {}, P = {:?}", config.model.mass, config.model.coupling, config.model.total_momentum);
    let _ = writeln!(
        s,
        "grid: {:?}, r in [{}, {}], {} radial x {} angular = {} nodes",
        g.scheme, g.r_min, g.r_max, g.n_radial, g.n_angular, nodes
    );
    let _ = writeln!(s, "n_max: {}", config.fock.n_max);
    for (n, size) in sizes.iter().enumerate() {
        let _ = writeln!(s, "  sector {n}: {size}");
    }
    let _ = writeln!(s, "dimension: {total} (cap {})", config.fock.max_dim);
    if total > config.fock.max_dim as u128 {
        let _ = writeln!(s, "  exceeds the cap; runs will stop with exit code 3");
    }
    let setting = |x: crate::config::Setting, auto: &str| match x.value() {
        Some(v) => v.to_string(),
        None => format!("auto ({auto})"),
    };
    let _ = writeln!(s, "lambda: {}", setting(config.resolvent.lambda, "doubling from 1 until the series contracts by 0.9"));
    let _ = writeln!(s, "mu: {}", setting(config.resolvent.mu, "mu0 + 1"));
    let _ = writeln!(s, "campaign: {}", config.campaign);
    s
}

/// Default location of the report inside `out_dir`.
pub fn report_path(out_dir: &Path) -> PathBuf {
    out_dir.join("report.json")
}
