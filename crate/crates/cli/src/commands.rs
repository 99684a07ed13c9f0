//! Subcommand pipelines.

use std::path::PathBuf;

use biasfield_core::bias::{check_symmetries, effective_constants, EffectiveConstants};
use biasfield_core::fields::{fields_csv, Field, IncrementalAction};
use biasfield_core::solver::{run_simulation, Discretization, Model, Scenario, Trajectory};
use biasfield_core::tensor::{multi_indices, Tensor};
use biasfield_core::theorems::{
    dissipation_identity, energy_balance_residual, energy_functionals, hamilton_density_checks,
    hamilton_variation_residual, laplace_transform, random_point, reciprocity_preconditions,
    reciprocity_residual, uniqueness_experiment, EnergyLedger, DENSITY_TOL, TRUNCATION_TOL,
    VARIATION_TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::output::{line_chart, num, table_csv, OutDir, Series};

/// Acceptance bound on the reciprocity relative residual.
pub const RECIPROCITY_TOL: f64 = 1e-3;
/// Minimum observed order in refinement studies.
pub const MIN_ORDER: f64 = 0.9;

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] biasfield_core::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    fn from(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

pub struct Ctx {
    pub config: Config,
    pub out: OutDir,
    pub command: &'static str,
}

impl Ctx {
    fn manifest(&self, files: &[PathBuf], extra: serde_json::Value, status: Status) -> Result<(), AppError> {
        let files: Vec<String> = files.iter().map(|p| self.out.relative(p)).collect();
        let m = json!({
            "schema": "biasfield-manifest v1",
            "command": self.command,
            "status": if status == Status::Pass { "pass" } else { "fail" },
            "seed": self.config.verification.seed,
            "files": files,
            "details": extra,
        });
        self.out.write("manifest.json", &serde_json::to_string_pretty(&m).expect("json"))?;
        Ok(())
    }
}

fn run_parallel(scenarios: Vec<Scenario>) -> Result<Vec<Trajectory>, AppError> {
    std::thread::scope(|s| {
        let handles: Vec<_> = scenarios.iter().map(|sc| s.spawn(move || run_simulation(sc))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked").map_err(AppError::from))
            .collect()
    })
}

fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn ledger_rows(ledger: &[EnergyLedger]) -> Vec<Vec<String>> {
    ledger
        .iter()
        .map(|l| {
            [l.t, l.w_def, l.k_kin, l.p_heat, l.e_elec, l.c_coupling, l.dissipation(), l.rhs_power, l.total(), l.residual]
                .iter()
                .map(|v| num(*v))
                .collect()
        })
        .collect()
}

const LEDGER_HEADER: [&str; 10] = ["t", "W", "K", "P", "E", "C", "chi_sum", "rhs", "total", "residual"];

fn ledger_chart(ledger: &[EnergyLedger]) -> String {
    let pick = |f: fn(&EnergyLedger) -> f64| ledger.iter().map(|l| (l.t, f(l))).collect();
    line_chart(
        "energy ledger",
        "t",
        "value",
        &[
            Series { label: "W", points: pick(|l| l.w_def) },
            Series { label: "K", points: pick(|l| l.k_kin) },
            Series { label: "P", points: pick(|l| l.p_heat) },
            Series { label: "E", points: pick(|l| l.e_elec) },
            Series { label: "C", points: pick(|l| l.c_coupling) },
            Series { label: "total", points: pick(|l| l.total()) },
        ],
        false,
    )
}

pub fn simulate(ctx: &Ctx) -> Result<Status, AppError> {
    let cfg = &ctx.config;
    let built = cfg.build()?;
    let sc = cfg.scenario(built.model.clone(), &cfg.action, cfg.integrator.dt);
    let tr = run_simulation(&sc)?;
    let grid = &built.grid;
    let mut files = Vec::new();
    let mut levels = Vec::new();
    for (k, s) in tr.states.iter().enumerate() {
        let name = format!("fields/level_{k:05}.csv");
        let csv = fields_csv(grid, &[("u", &s.u), ("v", &s.v), ("phi", &s.phi1), ("theta", &s.theta1)]);
        files.push(ctx.out.write(&name, &csv)?);
        let step = k * sc.save_stride;
        let diag = tr.diagnostics.iter().find(|d| d.step == step);
        levels.push(json!({
            "step": step,
            "time": s.t,
            "file": name,
            "gauss_residual": diag.map(|d| d.gauss_residual),
            "balance_residual": diag.map(|d| d.balance_residual),
        }));
    }
    let disc = Discretization::new(built.model);
    let ledger: Option<Vec<EnergyLedger>> = tr.states.iter().map(|s| energy_functionals(&disc, s).ok()).collect();
    if let Some(ledger) = &ledger {
        files.push(ctx.out.write("ledger.csv", &table_csv(&LEDGER_HEADER, &ledger_rows(ledger)))?);
        files.push(ctx.out.write("ledger.svg", &ledger_chart(ledger))?);
    }
    println!("simulate: {} steps, {} saved levels", tr.diagnostics.len(), tr.states.len());
    println!("  max Gauss residual   {:.3e}", tr.max_gauss_residual());
    let last = tr.states.last().expect("initial state");
    println!("  final max |state|    {:.3e}", last.max_abs());
    for w in &tr.warnings {
        println!("  warning: {w}");
    }
    ctx.manifest(&files, json!({ "levels": levels, "warnings": tr.warnings, "dt": cfg.integrator.dt }), Status::Pass)?;
    Ok(Status::Pass)
}

fn tensor_rows(name: &str, eff: &Tensor, classical: &Tensor, rows: &mut Vec<Vec<String>>) {
    let d = eff.dim();
    for (k, i) in multi_indices(d, eff.rank()).enumerate() {
        let (a, b) = (eff.data()[k], classical.data()[k]);
        let label: String = i.iter().map(|v| (v + 1).to_string()).collect();
        rows.push(vec![name.to_string(), label, num(a), num(b), num(a - b)]);
    }
}

pub fn constants(ctx: &Ctx) -> Result<Status, AppError> {
    let built = ctx.config.build()?;
    let ec = effective_constants(&built.material, &built.bias, built.grid.lo())?;
    let cl = EffectiveConstants::classical(&built.material);
    let rep = check_symmetries(&ec);
    let mut rows = Vec::new();
    tensor_rows("G", &ec.g, &cl.g, &mut rows);
    tensor_rows("R", &ec.r, &cl.r, &mut rows);
    tensor_rows("Lambda", &ec.lam, &cl.lam, &mut rows);
    tensor_rows("L", &ec.l, &cl.l, &mut rows);
    tensor_rows("P", &ec.p, &cl.p, &mut rows);
    tensor_rows("kappa", &ec.kap_2, &cl.kap_2, &mut rows);
    rows.push(vec!["alpha".into(), "-".into(), num(ec.alpha), num(cl.alpha), num(ec.alpha - cl.alpha)]);
    let header = ["name", "index", "effective", "classical", "difference"];
    println!("{:<8} {:<6} {:>14} {:>14} {:>12}", header[0], header[1], header[2], header[3], header[4]);
    for r in &rows {
        println!("{:<8} {:<6} {:>14} {:>14} {:>12}", r[0], r[1], r[2], r[3], r[4]);
    }
    println!(
        "symmetry: G {:.2e}, L {:.2e} -> {}",
        rep.g_asymmetry,
        rep.l_asymmetry,
        if rep.pass { "pass" } else { "FAIL" }
    );
    let status = Status::from(rep.pass);
    let f = ctx.out.write("constants.csv", &table_csv(&header, &rows))?;
    ctx.manifest(&[f], json!({ "g_asymmetry": rep.g_asymmetry, "l_asymmetry": rep.l_asymmetry }), status)?;
    Ok(status)
}

pub fn verify_energy(ctx: &Ctx) -> Result<Status, AppError> {
    let cfg = &ctx.config;
    let built = cfg.build()?;
    let disc = Discretization::new(built.model.clone());
    let levels = cfg.verification.levels;
    let dts: Vec<f64> = (0..=levels).map(|k| cfg.integrator.dt / (1u64 << k) as f64).collect();
    let scs = dts.iter().map(|&dt| cfg.scenario(built.model.clone(), &cfg.action, dt)).collect();
    let trs = run_parallel(scs)?;
    let mut norms = Vec::new();
    let mut scale: f64 = 0.0;
    let mut finest = Vec::new();
    for tr in &trs {
        let eb = energy_balance_residual(&disc, tr)?;
        norms.push(eb.residual_norm);
        scale = scale.max(eb.scale);
        finest = eb.ledger;
    }
    let orders = observed_orders(&norms);
    // A conservative scheme can balance to roundoff; then there is no order to measure.
    let exact = norms.iter().all(|n| *n <= 1e-8 * scale);
    let ok = exact || orders.iter().all(|o| *o >= MIN_ORDER);
    println!("{:>10} {:>14} {:>8}", "dt", "residual", "order");
    let mut rows = Vec::new();
    for (k, (dt, n)) in dts.iter().zip(&norms).enumerate() {
        let o = if k == 0 { String::from("-") } else { format!("{:.2}", orders[k - 1]) };
        println!("{dt:>10.3e} {n:>14.4e} {o:>8}");
        rows.push(vec![num(*dt), num(*n), o]);
    }
    if exact {
        println!("residuals at roundoff level; balance holds exactly");
    }
    println!("energy balance: {}", if ok { "pass" } else { "FAIL" });
    let status = Status::from(ok);
    let files = vec![
        ctx.out.write("energy_convergence.csv", &table_csv(&["dt", "residual", "order"], &rows))?,
        ctx.out.write("ledger.csv", &table_csv(&LEDGER_HEADER, &ledger_rows(&finest)))?,
        ctx.out.write("ledger.svg", &ledger_chart(&finest))?,
        ctx.out.write(
            "energy_convergence.svg",
            &line_chart(
                "energy balance residual",
                "log2(dt)",
                "residual",
                &[Series { label: "max residual", points: dts.iter().map(|d| d.log2()).zip(norms.iter().copied()).collect() }],
                true,
            ),
        )?,
    ];
    ctx.manifest(&files, json!({ "dt": dts, "residual": norms, "orders": orders, "exact": exact }), status)?;
    Ok(status)
}

/// Random perturbation of interior nodal values; boundary values are left alone.
fn perturb(field: &mut Field, grid: &biasfield_core::fields::Grid, rng: &mut ChaCha8Rng, amp: f64) {
    let nc = field.ncomp();
    for i in 0..grid.num_nodes() {
        if grid.is_boundary(i) {
            continue;
        }
        for c in 0..nc {
            let v = field.at(i, c) + rng.gen_range(-amp..amp);
            field.set(i, c, v);
        }
    }
}

pub fn verify_uniqueness(ctx: &Ctx) -> Result<Status, AppError> {
    let cfg = &ctx.config;
    let built = cfg.build()?;
    let base = cfg.scenario(built.model.clone(), &cfg.action, cfg.integrator.dt);
    let mut pert = base.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.verification.seed);
    let amp = cfg.verification.perturbation;
    perturb(&mut pert.initial.u, &built.grid, &mut rng, amp);
    perturb(&mut pert.initial.v, &built.grid, &mut rng, amp);
    perturb(&mut pert.initial.theta, &built.grid, &mut rng, amp);
    let r = uniqueness_experiment(&base, &pert)?;
    let hyp = r.check_preconditions();
    println!("uniqueness: difference of two runs, seed {}", cfg.verification.seed);
    if let Err(e) = &hyp {
        println!("  hypotheses not satisfied, result inconclusive: {e}");
    }
    println!("  initial total        {:.4e}", r.total[0]);
    println!("  final / initial      {:.4e}", r.final_ratio);
    println!("  max relative rise    {:.3e} (with coupling)", r.max_relative_increase);
    println!("  max relative rise    {:.3e} (without coupling)", r.max_relative_increase_without_coupling);
    println!("  monotone             {}", r.monotone);
    let ok = hyp.is_ok() && r.monotone;
    println!("uniqueness: {}", if ok { "pass" } else { "FAIL" });
    let rows: Vec<Vec<String>> = r
        .times
        .iter()
        .zip(&r.total)
        .zip(&r.total_without_coupling)
        .map(|((t, a), b)| vec![num(*t), num(*a), num(*b)])
        .collect();
    let chart = line_chart(
        "difference energy",
        "t",
        "total",
        &[
            Series { label: "with C", points: r.times.iter().copied().zip(r.total.iter().copied()).collect() },
            Series {
                label: "without C",
                points: r.times.iter().copied().zip(r.total_without_coupling.iter().copied()).collect(),
            },
        ],
        false,
    );
    let status = Status::from(ok);
    let files = vec![
        ctx.out.write("uniqueness.csv", &table_csv(&["t", "total", "total_without_coupling"], &rows))?,
        ctx.out.write("uniqueness.svg", &chart)?,
    ];
    ctx.manifest(
        &files,
        json!({
            "monotone": r.monotone,
            "final_ratio": r.final_ratio,
            "max_relative_increase": r.max_relative_increase,
            "precondition_failure": r.precondition_failure,
        }),
        status,
    )?;
    Ok(status)
}

pub fn verify_hamilton(ctx: &Ctx) -> Result<Status, AppError> {
    let cfg = &ctx.config;
    let built = cfg.build()?;
    let d = built.grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.verification.seed);
    let n = cfg.verification.samples;
    let ec = &built.model.constants[0];
    let pts: Vec<_> = (0..n).map(|_| random_point(&mut rng, d, 1.0)).collect();
    let dens = hamilton_density_checks(ec, &pts);
    let mut rows = vec![
        vec!["density_stress".into(), num(dens.stress)],
        vec!["density_displacement".into(), num(dens.displacement)],
        vec!["density_entropy".into(), num(dens.entropy)],
        vec!["density_heat_flux".into(), num(dens.heat_flux)],
    ];
    let mut ok = dens.holds();

    let disc = Discretization::new(built.model.clone());
    let uniform = energy_functionals(&disc, &biasfield_core::solver::IncrementalState::zero(&built.grid, 0.0)).is_ok();
    if uniform {
        let mut worst: f64 = 0.0;
        let mut sign_ok = true;
        for _ in 0..n.min(20) {
            let mut s = biasfield_core::solver::IncrementalState::zero(&built.grid, 0.0);
            for f in [&mut s.u, &mut s.v, &mut s.phi1, &mut s.theta1] {
                for v in f.data_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
            let r = dissipation_identity(&disc, &s)?;
            worst = worst.max(r.residual);
            sign_ok &= r.holds();
        }
        rows.push(vec!["dissipation_identity".into(), num(worst)]);
        ok &= sign_ok;
    } else {
        println!("  dissipation identity skipped: bias temperature is not uniform");
    }

    let steps = ((cfg.integrator.t_final / cfg.integrator.dt).round() as usize).clamp(1, 10);
    let mut sc = cfg.scenario(built.model.clone(), &cfg.action, cfg.integrator.dt);
    sc.t_final = steps as f64 * cfg.integrator.dt;
    sc.save_stride = 1;
    let tr = run_simulation(&sc)?;
    let k = tr.states.len() - 1;
    let var = hamilton_variation_residual(&disc, &cfg.action, &tr.states[k - 1], &tr.states[k])?;
    rows.push(vec!["euler_lagrange_mismatch".into(), num(var.el_mismatch)]);
    rows.push(vec!["field_residual".into(), num(var.field_residual)]);
    rows.push(vec!["psi_variation".into(), num(var.psi_variation)]);
    rows.push(vec!["heat_residual".into(), num(var.heat_residual)]);
    rows.push(vec!["defect_mismatch".into(), num(var.defect_mismatch)]);
    ok &= var.el_mismatch <= VARIATION_TOL && var.psi_variation <= VARIATION_TOL && var.defect_mismatch <= VARIATION_TOL;

    println!("{:<26} {:>12}", "check", "value");
    for r in &rows {
        println!("{:<26} {:>12}", r[0], r[1]);
    }
    println!("tolerances: density {DENSITY_TOL:e}, variation {VARIATION_TOL:e}");
    println!("hamilton: {}", if ok { "pass" } else { "FAIL" });
    let status = Status::from(ok);
    let f = ctx.out.write("hamilton.csv", &table_csv(&["check", "value"], &rows))?;
    ctx.manifest(&[f], json!({ "samples": n }), status)?;
    Ok(status)
}

pub fn verify_reciprocity(ctx: &Ctx) -> Result<Status, AppError> {
    let cfg = &ctx.config;
    let built = cfg.build()?;
    let b_action: &IncrementalAction = cfg
        .action_b
        .as_ref()
        .ok_or_else(|| AppError::Input("verify-reciprocity needs a second loading in [action_b]".into()))?;
    let disc = Discretization::new(built.model.clone());
    let model: Model = built.model;
    let trs = run_parallel(vec![
        cfg.scenario(model.clone(), &cfg.action, cfg.integrator.dt),
        cfg.scenario(model, b_action, cfg.integrator.dt),
    ])?;
    for tr in &trs {
        reciprocity_preconditions(&disc, tr)?;
    }
    let sign = cfg.verification.electric_sign;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut ok = true;
    println!("{:>8} {:>14} {:>14} {:>12}", "p", "residual", "scale", "relative");
    for &p in &cfg.verification.p {
        let fa = laplace_transform(&trs[0], p)?;
        let fb = laplace_transform(&trs[1], p)?;
        let r = reciprocity_residual(&disc, &fa, &fb, sign)?;
        for (name, v) in &r.terms {
            rows.push(vec![num(p), name.clone(), num(*v)]);
        }
        rows.push(vec![num(p), "total".into(), num(r.total)]);
        println!("{p:>8.3} {:>14.4e} {:>14.4e} {:>12.3e}", r.total, r.normalization, r.relative);
        ok &= r.relative <= RECIPROCITY_TOL;
        summary.push(json!({ "p": p, "relative": r.relative, "truncation": fa.truncation.max(fb.truncation) }));
    }
    println!("tolerance {RECIPROCITY_TOL:e}, Laplace truncation budget {TRUNCATION_TOL:e}");
    println!("reciprocity: {}", if ok { "pass" } else { "FAIL" });
    let status = Status::from(ok);
    let f = ctx.out.write("reciprocity.csv", &table_csv(&["p", "term", "value"], &rows))?;
    ctx.manifest(&[f], json!({ "electric_sign": format!("{sign:?}"), "results": summary }), status)?;
    Ok(status)
}

/// Joint grid and time refinement; errors are measured against the finest run
/// at the coarse nodes of the final saved level.
pub fn converge(ctx: &Ctx) -> Result<Status, AppError> {
    let cfg = &ctx.config;
    let built = cfg.build()?;
    let levels = cfg.verification.levels;
    let mut scs = Vec::new();
    for k in 0..=levels {
        let grid = cfg.refined_grid(k)?;
        let model = Model::from_bias(&built.material, &built.bias, grid, cfg.partitions())?;
        let mut sc = cfg.scenario(model, &cfg.action, cfg.integrator.dt / (1u64 << k) as f64);
        sc.initial = cfg.initial_conditions(&sc.model.grid);
        sc.save_stride = 1usize << k;
        scs.push(sc);
    }
    let trs = run_parallel(scs)?;
    let finest = trs.last().expect("levels").states.last().expect("state");
    let fine_grid = cfg.refined_grid(levels)?;
    let mut errors = Vec::new();
    for (k, tr) in trs.iter().enumerate().take(levels) {
        let s = tr.states.last().expect("state");
        let grid = cfg.refined_grid(k)?;
        let stride = 1usize << (levels - k);
        let mut e: f64 = 0.0;
        for i in 0..grid.num_nodes() {
            let fine_idx: Vec<usize> = grid.indices(i).iter().map(|j| j * stride).collect();
            let fi = fine_grid.node(&fine_idx);
            for (a, b) in [(&s.u, &finest.u), (&s.phi1, &finest.phi1), (&s.theta1, &finest.theta1)] {
                for c in 0..a.ncomp() {
                    e = e.max((a.at(i, c) - b.at(fi, c)).abs());
                }
            }
        }
        errors.push(e);
    }
    let orders = observed_orders(&errors);
    println!("{:>6} {:>10} {:>14} {:>8}", "level", "dt", "error", "order");
    let mut rows = Vec::new();
    for (k, e) in errors.iter().enumerate() {
        let dt = cfg.integrator.dt / (1u64 << k) as f64;
        let o = if k == 0 { String::from("-") } else { format!("{:.2}", orders[k - 1]) };
        println!("{k:>6} {dt:>10.3e} {e:>14.4e} {o:>8}");
        rows.push(vec![k.to_string(), num(dt), num(*e), o]);
    }
    let chart = line_chart(
        "self-convergence",
        "level",
        "error",
        &[Series { label: "max nodal error", points: errors.iter().enumerate().map(|(k, e)| (k as f64, *e)).collect() }],
        true,
    );
    let files = vec![
        ctx.out.write("convergence.csv", &table_csv(&["level", "dt", "error", "order"], &rows))?,
        ctx.out.write("convergence.svg", &chart)?,
    ];
    ctx.manifest(&files, json!({ "errors": errors, "orders": orders }), Status::Pass)?;
    Ok(Status::Pass)
}
