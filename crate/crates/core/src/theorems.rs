//! Discrete checks of the energy balance, uniqueness, Hamilton-principle and
//! reciprocity identities of the incremental theory.

use serde::{Deserialize, Serialize};

use crate::bias::{coupling_bound, EffectiveConstants};
use crate::error::{Error, Result};
use crate::fields::{Field, FieldKind, IncrementalAction, QuadPoint};
use crate::linalg;
use crate::solver::{
    incremental_constitutive, point_gradients, run_simulation, Discretization, IncrementalState,
    NodalLoads, PointGradients, Scenario, Trajectory,
};

fn uniform_model(disc: &Discretization) -> Result<(&EffectiveConstants, f64)> {
    let theta0 = disc.model.uniform_theta().ok_or(Error::NonUniformBiasTemperature)?;
    if !disc.model.is_homogeneous() {
        return Err(Error::NonUniformBiasTemperature);
    }
    Ok((&disc.model.constants[0], theta0))
}

/// Energy functionals of one state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub t: f64,
    pub w_def: f64,
    pub k_kin: f64,
    pub p_heat: f64,
    pub e_elec: f64,
    pub c_coupling: f64,
    pub chi: f64,
    pub chi_theta: f64,
    pub chi_phi: f64,
    pub chi_u: f64,
    pub rhs_power: f64,
    pub residual: f64,
}

impl EnergyLedger {
    /// `𝒲 + 𝒦 + 𝒫 + ℰ + C`.
    pub fn total(&self) -> f64 {
        self.w_def + self.k_kin + self.p_heat + self.e_elec + self.c_coupling
    }

    pub fn total_without_coupling(&self) -> f64 {
        self.w_def + self.k_kin + self.p_heat + self.e_elec
    }

    pub fn dissipation(&self) -> f64 {
        self.chi + self.chi_theta + self.chi_phi + self.chi_u
    }
}

/// Instantaneous functionals; `rhs_power` and `residual` are left at zero.
pub fn energy_functionals(disc: &Discretization, s: &IncrementalState) -> Result<EnergyLedger> {
    let (ec, theta0) = uniform_model(disc)?;
    let d = disc.model.dim();
    let rho = ec.rho0;
    let mut out = EnergyLedger {
        t: s.t,
        ..Default::default()
    };
    for q in disc.quadrature() {
        let pg = point_gradients(d, q, &s.u, &s.phi1, &s.theta1);
        let w = q.weight;
        let gu = &pg.grad_u;
        let wv: Vec<f64> = pg.grad_phi.iter().map(|x| -x).collect();
        let th = pg.theta;
        let tg = &pg.grad_theta;
        let mut wdef = 0.0;
        for m in 0..d {
            for a in 0..d {
                for l in 0..d {
                    for c in 0..d {
                        wdef += ec.g.t4(m, a, l, c) * gu[a * d + m] * gu[c * d + l];
                    }
                }
            }
        }
        out.w_def += 0.5 * w * wdef;
        let mut e = 0.0;
        let mut chi_t = 0.0;
        let mut chi_p = 0.0;
        let mut chi_u = 0.0;
        for m in 0..d {
            for k in 0..d {
                e += ec.l.m(k, m) * wv[m] * wv[k];
                chi_t += ec.kap_2.m(m, k) * tg[m] * tg[k];
                chi_p += ec.kap_e.m(m, k) * tg[m] * pg.grad_phi[k];
                for a in 0..d {
                    chi_u += ec.kap_u.t3(m, k, a) * tg[m] * gu[a * d + k];
                }
            }
            out.c_coupling += w * rho * ec.p.v(m) * th * wv[m];
            out.chi += w * ec.kap_1.v(m) * tg[m] * th / theta0;
        }
        out.e_elec += 0.5 * w * e;
        out.chi_theta += w * chi_t / theta0;
        out.chi_phi += w * chi_p / theta0;
        out.chi_u += w * chi_u / theta0;
        out.p_heat += 0.5 * w * ec.alpha * rho * th * th;
    }
    for (i, m) in disc.mass.iter().enumerate() {
        let v2: f64 = s.v.node_values(i).iter().map(|x| x * x).sum();
        out.k_kin += 0.5 * m * v2;
    }
    Ok(out)
}

/// Power supplied at a level by the loads; `charge_rate` is the time
/// derivative of the electric loads at that level.
fn supplied_power(
    disc: &Discretization,
    theta0: f64,
    s: &IncrementalState,
    l: &NodalLoads,
    charge_rate: &[f64],
) -> f64 {
    let d = disc.model.dim();
    let mut p = 0.0;
    for i in 0..disc.grid().num_nodes() {
        for a in 0..d {
            p += (l.force_body.at(i, a) + l.force_surface.at(i, a)) * s.v.at(i, a);
        }
        p += charge_rate[i] * s.phi1.at(i, 0);
        p += (l.heat_body.at(i, 0) - l.heat_surface.at(i, 0)) * s.theta1.at(i, 0) / theta0;
    }
    p
}

/// Residual series of the modified energy balance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBalance {
    /// Ledgers at every saved level; `rhs_power` and `residual` are filled at
    /// interior levels.
    pub ledger: Vec<EnergyLedger>,
    /// `max |residual|` over interior levels.
    pub residual_norm: f64,
    /// `max |total|` over the series, for relative statements.
    pub scale: f64,
}

/// Centered-difference balance `d/dt(total) + χ-sum − rhs` at interior levels.
pub fn energy_balance_residual(disc: &Discretization, traj: &Trajectory) -> Result<EnergyBalance> {
    let (_, theta0) = uniform_model(disc)?;
    let mut ledger: Vec<EnergyLedger> = traj
        .states
        .iter()
        .map(|s| energy_functionals(disc, s))
        .collect::<Result<_>>()?;
    let nn = disc.grid().num_nodes();
    let dt = traj.dt;
    let n = ledger.len();
    let mut norm: f64 = 0.0;
    for k in 1..n.saturating_sub(1) {
        let rate: Vec<f64> = (0..nn)
            .map(|i| {
                let c = |l: &NodalLoads| l.charge_body.at(i, 0) + l.charge_surface.at(i, 0);
                (c(&traj.loads[k + 1]) - c(&traj.loads[k - 1])) / (2.0 * dt)
            })
            .collect();
        let rhs = supplied_power(disc, theta0, &traj.states[k], &traj.loads[k], &rate);
        let dtotal = (ledger[k + 1].total() - ledger[k - 1].total()) / (2.0 * dt);
        let lk = &mut ledger[k];
        lk.rhs_power = rhs;
        lk.residual = dtotal + lk.dissipation() - rhs;
        norm = norm.max(lk.residual.abs());
    }
    let scale = ledger.iter().map(|l| l.total().abs()).fold(0.0, f64::max);
    Ok(EnergyBalance {
        ledger,
        residual_norm: norm,
        scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DissipationReport {
    /// `−(χ + χ_θ + χ_φ + χ_u)`.
    pub lhs: f64,
    /// `(1/θ°) ∫ Q¹·Θ¹ dV`.
    pub rhs: f64,
    pub residual: f64,
    /// Fourier model only: `Q¹·Θ¹ ≤ 0` at every quadrature point. `None`
    /// for other heat-flux models.
    pub sign_ok: Option<bool>,
}

pub const DISSIPATION_TOL: f64 = 1e-10;

impl DissipationReport {
    pub fn holds(&self) -> bool {
        self.residual <= DISSIPATION_TOL * self.lhs.abs().max(self.rhs.abs()).max(1.0)
            && self.sign_ok != Some(false)
    }
}

pub fn dissipation_identity(disc: &Discretization, s: &IncrementalState) -> Result<DissipationReport> {
    let (ec, theta0) = uniform_model(disc)?;
    let ledger = energy_functionals(disc, s)?;
    let fourier = ec.is_fourier();
    let mut rhs = 0.0;
    let mut sign_ok = true;
    for q in disc.quadrature() {
        let (pg, r) = disc.point_response(q, &s.u, &s.phi1, &s.theta1);
        let qt: f64 = r.q1.iter().zip(&pg.grad_theta).map(|(a, b)| a * b).sum();
        rhs += q.weight * qt / theta0;
        if qt > 0.0 {
            sign_ok = false;
        }
    }
    let lhs = -ledger.dissipation();
    Ok(DissipationReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        sign_ok: fourier.then_some(sign_ok),
    })
}

/// Lyapunov history of a difference trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub times: Vec<f64>,
    /// `𝒲 + 𝒦 + 𝒫 + ℰ + C` of the difference.
    pub total: Vec<f64>,
    /// `𝒲 + 𝒦 + 𝒫 + ℰ` of the difference.
    pub total_without_coupling: Vec<f64>,
    /// Largest per-step increase of `total`, relative to its initial value.
    pub max_relative_increase: f64,
    pub max_relative_increase_without_coupling: f64,
    pub monotone: bool,
    pub final_ratio: f64,
    /// Largest nodal value of the difference fields over the run.
    pub max_difference: f64,
    /// Set when the hypotheses (positive definite `G`, `L`, coupling-bound
    /// condition) fail; the report is then inconclusive.
    pub precondition_failure: Option<String>,
}

pub const MONOTONE_TOL: f64 = 1e-10;

impl UniquenessReport {
    pub fn check_preconditions(&self) -> Result<()> {
        match &self.precondition_failure {
            Some(m) => Err(Error::PreconditionFailed(m.clone())),
            None => Ok(()),
        }
    }
}

/// Hypotheses of the uniqueness argument at the model's constants.
pub fn uniqueness_hypotheses(disc: &Discretization) -> Result<Option<String>> {
    let (ec, theta0) = uniform_model(disc)?;
    let d = ec.dim();
    let gm = crate::tensor::Tensor::from_vec(d * d, 2, ec.g.data().to_vec()).unwrap();
    let gmin = linalg::min_eigenvalue(&gm);
    if gmin <= 0.0 {
        return Ok(Some(format!("G is not positive definite (min eigenvalue {gmin:e})")));
    }
    let lmin = linalg::min_eigenvalue(&ec.l);
    if lmin <= 0.0 {
        return Ok(Some(format!("L is not positive definite (min eigenvalue {lmin:e})")));
    }
    if !(ec.alpha > 0.0) {
        return Ok(Some("specific-heat modulus α is not positive".into()));
    }
    let ig = coupling_bound(ec, ec.rho0, theta0)?;
    if !ig.holds {
        return Ok(Some(format!(
            "pyroelectric coupling bound fails: |g| = {:e} > c·λ_m = {:e}",
            ig.gnorm,
            ig.c * ig.lambda_m
        )));
    }
    Ok(None)
}

/// Runs two scenarios that differ only in initial data and tracks the
/// Lyapunov total of their difference.
pub fn uniqueness_experiment(a: &Scenario, b: &Scenario) -> Result<UniquenessReport> {
    if a.model != b.model || a.action != b.action || a.dt != b.dt || a.t_final != b.t_final {
        return Err(Error::InvalidArgument(
            "scenario pair must share model, action and time grid".into(),
        ));
    }
    let ta = run_simulation(a)?;
    let tb = run_simulation(b)?;
    let disc = Discretization::new(a.model.clone());
    let precondition_failure = uniqueness_hypotheses(&disc)?;
    let mut times = Vec::new();
    let mut total = Vec::new();
    let mut total_nc = Vec::new();
    let mut max_difference: f64 = 0.0;
    for (sa, sb) in ta.states.iter().zip(&tb.states) {
        let diff = sa.difference(sb);
        max_difference = max_difference.max(diff.max_abs());
        let l = energy_functionals(&disc, &diff)?;
        times.push(sa.t);
        total.push(l.total());
        total_nc.push(l.total_without_coupling());
    }
    let max_inc = |series: &[f64]| {
        let v0 = series[0].abs();
        let worst = series.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        if series.len() < 2 {
            0.0
        } else if v0 > 0.0 {
            worst / v0
        } else {
            worst
        }
    };
    let inc = max_inc(&total);
    let inc_nc = max_inc(&total_nc);
    let final_ratio = if total[0] != 0.0 {
        total[total.len() - 1] / total[0]
    } else {
        0.0
    };
    Ok(UniquenessReport {
        monotone: inc <= MONOTONE_TOL,
        times,
        total,
        total_without_coupling: total_nc,
        max_relative_increase: inc,
        max_relative_increase_without_coupling: inc_nc,
        final_ratio,
        max_difference,
        precondition_failure,
    })
}

/// Incremental free energy `ψ¹` at a point.
pub fn psi1(ec: &EffectiveConstants, z: &PointGradients) -> f64 {
    let d = ec.dim();
    let gu = &z.grad_u;
    let mut v = 0.0;
    let mut bracket = 0.5 * ec.alpha * z.theta;
    for m in 0..d {
        for a in 0..d {
            for l in 0..d {
                for c in 0..d {
                    v += 0.5 * ec.g.t4(m, a, l, c) * gu[a * d + m] * gu[c * d + l];
                }
                v += ec.r.t3(l, m, a) * z.grad_phi[l] * gu[a * d + m];
            }
            bracket += ec.lam.m(m, a) * gu[a * d + m];
        }
        bracket -= ec.p.v(m) * z.grad_phi[m];
    }
    v - ec.rho0 * z.theta * bracket
}

/// Electric enthalpy `H¹ = ψ¹ − ½ L W¹W¹` with `W¹ = −∇φ¹`.
pub fn enthalpy1(ec: &EffectiveConstants, z: &PointGradients) -> f64 {
    let d = ec.dim();
    let mut e = 0.0;
    for a in 0..d {
        for b in 0..d {
            e += ec.l.m(a, b) * z.grad_phi[a] * z.grad_phi[b];
        }
    }
    psi1(ec, z) - 0.5 * e
}

/// Heat-flow potential `Γ`.
pub fn heat_potential(ec: &EffectiveConstants, z: &PointGradients) -> f64 {
    let d = ec.dim();
    let tg = &z.grad_theta;
    let mut v = 0.0;
    for m in 0..d {
        for n in 0..d {
            for a in 0..d {
                v += ec.kap_u.t3(m, n, a) * z.grad_u[a * d + n] * tg[m];
            }
            v += 0.5 * ec.kap_2.m(m, n) * tg[m] * tg[n] + ec.kap_e.m(m, n) * tg[m] * z.grad_phi[n];
        }
        v += ec.kap_1.v(m) * z.theta * tg[m];
    }
    -v
}

pub fn random_point<R: rand::Rng + ?Sized>(rng: &mut R, d: usize, amp: f64) -> PointGradients {
    let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-amp..amp)).collect::<Vec<f64>>();
    PointGradients {
        grad_u: v(d * d),
        grad_phi: v(d),
        theta: v(1)[0],
        grad_theta: v(d),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonDensityReport {
    pub samples: usize,
    /// Max relative error of `∂H¹/∂u_{α,M} = K¹_{Mα}`.
    pub stress: f64,
    /// Max relative error of `∂H¹/∂W¹_L = −Δ¹_L`.
    pub displacement: f64,
    /// Max relative error of `∂H¹/∂θ¹ = −ρ₀η¹`.
    pub entropy: f64,
    /// Max relative error of `Q¹_M = ∂Γ/∂θ¹_{,M}`.
    pub heat_flux: f64,
}

pub const DENSITY_TOL: f64 = 1e-6;

impl HamiltonDensityReport {
    pub fn max_error(&self) -> f64 {
        self.stress.max(self.displacement).max(self.entropy).max(self.heat_flux)
    }

    pub fn holds(&self) -> bool {
        self.max_error() <= DENSITY_TOL
    }
}

/// Checks the derivative identities of `H¹` and `Γ` by central differences.
pub fn hamilton_density_checks(ec: &EffectiveConstants, states: &[PointGradients]) -> HamiltonDensityReport {
    let d = ec.dim();
    let mut rep = HamiltonDensityReport {
        samples: states.len(),
        stress: 0.0,
        displacement: 0.0,
        entropy: 0.0,
        heat_flux: 0.0,
    };
    let h = 1e-3;
    let fd = |f: &dyn Fn(&PointGradients) -> f64, z: &PointGradients, bump: &dyn Fn(&mut PointGradients, f64)| {
        let mut zp = z.clone();
        bump(&mut zp, h);
        let mut zm = z.clone();
        bump(&mut zm, -h);
        (f(&zp) - f(&zm)) / (2.0 * h)
    };
    let h1 = |z: &PointGradients| enthalpy1(ec, z);
    let gam = |z: &PointGradients| heat_potential(ec, z);
    for z in states {
        let r = incremental_constitutive(ec, &z.grad_u, &z.grad_phi, z.theta, &z.grad_theta);
        let scale = r
            .k1
            .iter()
            .chain(&r.delta1)
            .chain(&r.q1)
            .map(|v| v.abs())
            .fold((ec.rho0 * r.eta1).abs(), f64::max)
            .max(f64::MIN_POSITIVE);
        let rel = |a: f64, b: f64| (a - b).abs() / scale;
        for m in 0..d {
            for a in 0..d {
                let g = fd(&h1, z, &|p, s| p.grad_u[a * d + m] += s);
                rep.stress = rep.stress.max(rel(g, r.k1[m * d + a]));
            }
            // W = −∇φ, so a step +s in W_m is a step −s in φ_{,m}.
            let g = fd(&h1, z, &|p, s| p.grad_phi[m] -= s);
            rep.displacement = rep.displacement.max(rel(g, -r.delta1[m]));
            let g = fd(&gam, z, &|p, s| p.grad_theta[m] += s);
            rep.heat_flux = rep.heat_flux.max(rel(g, r.q1[m]));
        }
        let g = fd(&h1, z, &|p, s| p.theta += s);
        rep.entropy = rep.entropy.max(rel(g, -ec.rho0 * r.eta1));
    }
    rep
}

/// Discrete Euler–Lagrange and entropy-variation residuals on one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonVariationReport {
    /// Max |EL residual − field-equation residual| over momentum and Gauss
    /// rows.
    pub el_mismatch: f64,
    /// Max |field-equation residual| over free momentum and Gauss rows.
    pub field_residual: f64,
    /// Max |δΨ/δθ¹| over free thermal nodes.
    pub psi_variation: f64,
    /// Max |heat-equation residual| over free thermal nodes.
    pub heat_residual: f64,
    /// Max |(δΨ/δθ¹ − heat residual) − (−∫κ_Lθ¹_{,L}N_i)|.
    pub defect_mismatch: f64,
    /// Max |predicted defect| `|∫κ_Lθ¹_{,L}N_i|`.
    pub defect: f64,
    /// Nodal `δΨ/δθ¹ − heat residual` at free thermal nodes (zero elsewhere).
    pub defect_nodal: Vec<f64>,
}

pub const VARIATION_TOL: f64 = 1e-10;

fn quad_by_node(disc: &Discretization) -> Vec<Vec<usize>> {
    let mut by = vec![Vec::new(); disc.grid().num_nodes()];
    for (k, q) in disc.quadrature().iter().enumerate() {
        for (node, _) in &q.stencil {
            if !by[*node].contains(&k) {
                by[*node].push(k);
            }
        }
    }
    by
}

fn local_enthalpy(disc: &Discretization, qs: &[usize], x: &crate::solver::IncrementalState) -> f64 {
    let d = disc.model.dim();
    qs.iter()
        .map(|&k| {
            let q: &QuadPoint = &disc.quadrature()[k];
            let z = point_gradients(d, q, &x.u, &x.phi1, &x.theta1);
            q.weight * enthalpy1(&disc.model.constants[q.node], &z)
        })
        .sum()
}

/// Compares the discrete variations of the action functionals with the
/// assembled field-equation residuals of the step `s0 → s1` (midpoint heat
/// scheme).
pub fn hamilton_variation_residual(
    disc: &Discretization,
    action: &IncrementalAction,
    s0: &IncrementalState,
    s1: &IncrementalState,
) -> Result<HamiltonVariationReport> {
    let d = disc.model.dim();
    let nd = d + 2;
    let nn = disc.grid().num_nodes();
    let dt = s1.t - s0.t;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("states must be increasing in time".into()));
    }
    let mid_t = 0.5 * (s0.t + s1.t);
    let mid_loads = disc.loads(action, mid_t);
    let new_loads = disc.loads(action, s1.t);
    let field = disc.step_residual(s0, s1, &mid_loads, &new_loads);
    let avg = |a: &Field, b: &Field| {
        let mut c = a.scaled(0.5);
        c.axpy(0.5, b);
        c
    };
    let mid = IncrementalState {
        t: mid_t,
        u: avg(&s0.u, &s1.u),
        v: avg(&s0.v, &s1.v),
        phi1: avg(&s0.phi1, &s1.phi1),
        theta1: avg(&s0.theta1, &s1.theta1),
    };
    let by = quad_by_node(disc);

    // Euler–Lagrange rows of ∫(𝒦 − Π) dt; exact central differences of the
    // quadratic action with unit steps.
    let mut el_mismatch: f64 = 0.0;
    let mut field_res: f64 = 0.0;
    for i in 0..nn {
        for a in 0..d {
            let mut p = mid.clone();
            let base = p.u.at(i, a);
            p.u.set(i, a, base + 1.0);
            let hp = local_enthalpy(disc, &by[i], &p);
            p.u.set(i, a, base - 1.0);
            let hm = local_enthalpy(disc, &by[i], &p);
            let dpi = 0.5 * (hp - hm)
                - mid_loads.force_body.at(i, a)
                - mid_loads.force_surface.at(i, a);
            let el = disc.mass[i] * (s1.v.at(i, a) - s0.v.at(i, a)) / dt + dpi;
            let f = field[i * nd + a];
            el_mismatch = el_mismatch.max((el - f).abs());
            if !disc.is_essential(FieldKind::Mechanical, i) {
                field_res = field_res.max(f.abs());
            }
        }
        let mut p = s1.clone();
        let base = p.phi1.at(i, 0);
        p.phi1.set(i, 0, base + 1.0);
        let hp = local_enthalpy(disc, &by[i], &p);
        p.phi1.set(i, 0, base - 1.0);
        let hm = local_enthalpy(disc, &by[i], &p);
        let el = 0.5 * (hp - hm) + new_loads.charge_body.at(i, 0) + new_loads.charge_surface.at(i, 0);
        let f = field[i * nd + d];
        el_mismatch = el_mismatch.max((el - f).abs());
        if !disc.is_essential(FieldKind::Electric, i) && disc.gauge_node() != Some(i) {
            field_res = field_res.max(f.abs());
        }
    }

    // δΨ with δθ¹ only: −∂Γ/∂θ¹_{,L} tested with ∇N_i, ∂Γ/∂θ¹ and the rate
    // terms tested with N_i, plus the boundary flux datum.
    let mut variation = vec![0.0; nn];
    let mut predicted = vec![0.0; nn];
    for q in disc.quadrature() {
        let ec = &disc.model.constants[q.node];
        let (zm, rm) = disc.point_response(q, &mid.u, &mid.phi1, &mid.theta1);
        let (_, r0) = disc.point_response(q, &s0.u, &s0.phi1, &s0.theta1);
        let (_, r1) = disc.point_response(q, &s1.u, &s1.phi1, &s1.theta1);
        for (node, c) in &q.stencil {
            let dq: f64 = (0..d).map(|m| rm.q1[m] * c[m]).sum();
            variation[*node] -= q.weight * dq;
        }
        let dgam_dtheta: f64 = -(0..d).map(|m| ec.kap_1.v(m) * zm.grad_theta[m]).sum::<f64>();
        let th0 = disc.model.theta0[q.node];
        variation[q.node] += q.weight * (dgam_dtheta + ec.rho0 * th0 * (r1.eta1 - r0.eta1) / dt);
        predicted[q.node] += q.weight * dgam_dtheta;
    }
    let mut psi: f64 = 0.0;
    let mut heat: f64 = 0.0;
    let mut dmis: f64 = 0.0;
    let mut dmax: f64 = 0.0;
    let mut defect_nodal = vec![0.0; nn];
    for i in 0..nn {
        variation[i] += -mid_loads.heat_body.at(i, 0) + mid_loads.heat_surface.at(i, 0);
        if disc.is_essential(FieldKind::Thermal, i) {
            continue;
        }
        let hr = field[i * nd + d + 1];
        psi = psi.max(variation[i].abs());
        heat = heat.max(hr.abs());
        defect_nodal[i] = variation[i] - hr;
        dmis = dmis.max((defect_nodal[i] - predicted[i]).abs());
        dmax = dmax.max(predicted[i].abs());
    }
    Ok(HamiltonVariationReport {
        el_mismatch,
        field_residual: field_res,
        psi_variation: psi,
        heat_residual: heat,
        defect_mismatch: dmis,
        defect: dmax,
        defect_nodal,
    })
}

/// Trapezoidal Laplace transform of a sampled series with a tail estimate
/// `max|ν| e^{−pT}/p`.
pub fn laplace_series(times: &[f64], values: &[f64], p: f64) -> (f64, f64) {
    let mut acc = 0.0;
    for k in 1..times.len() {
        let (t0, t1) = (times[k - 1], times[k]);
        acc += 0.5 * (t1 - t0) * ((-p * t0).exp() * values[k - 1] + (-p * t1).exp() * values[k]);
    }
    let vmax = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tail = times.last().map_or(f64::INFINITY, |t| vmax * (-p * t).exp() / p);
    (acc, tail)
}

/// Trapezoidal transform of a sequence of fields sampled at `times`.
fn laplace_fields<'a>(times: &[f64], p: f64, get: &dyn Fn(usize) -> &'a Field) -> (Field, f64) {
    let mut out = get(0).scaled(0.0);
    let mut vmax: f64 = 0.0;
    let n = times.len();
    for k in 0..n {
        let left = if k > 0 { times[k] - times[k - 1] } else { 0.0 };
        let right = if k + 1 < n { times[k + 1] - times[k] } else { 0.0 };
        let f = get(k);
        out.axpy(0.5 * (left + right) * (-p * times[k]).exp(), f);
        vmax = vmax.max(f.max_abs());
    }
    let tail = times.last().map_or(f64::INFINITY, |t| vmax * (-p * t).exp() / p);
    (out, tail)
}

/// Laplace-transformed nodal fields and loads of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceField {
    pub p: f64,
    pub state: IncrementalState,
    pub loads: NodalLoads,
    /// Largest tail estimate over all transformed series.
    pub truncation: f64,
    /// Largest transformed magnitude.
    pub magnitude: f64,
}

pub const TRUNCATION_TOL: f64 = 1e-6;

/// Transforms every nodal series of `traj`; fails when the finite horizon
/// leaves a tail above `1e-6` of the transform magnitude.
pub fn laplace_transform(traj: &Trajectory, p: f64) -> Result<LaplaceField> {
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("transform parameter must be positive, got {p}")));
    }
    let times = traj.times();
    let mut trunc: f64 = 0.0;
    let mut mag: f64 = 0.0;
    let mut transform = |(out, tail): (Field, f64)| {
        trunc = trunc.max(tail);
        mag = mag.max(out.max_abs());
        out
    };
    let state = IncrementalState {
        t: 0.0,
        u: transform(laplace_fields(&times, p, &|k| &traj.states[k].u)),
        v: transform(laplace_fields(&times, p, &|k| &traj.states[k].v)),
        phi1: transform(laplace_fields(&times, p, &|k| &traj.states[k].phi1)),
        theta1: transform(laplace_fields(&times, p, &|k| &traj.states[k].theta1)),
    };
    let loads = NodalLoads {
        force_body: transform(laplace_fields(&times, p, &|k| &traj.loads[k].force_body)),
        force_surface: transform(laplace_fields(&times, p, &|k| &traj.loads[k].force_surface)),
        charge_body: transform(laplace_fields(&times, p, &|k| &traj.loads[k].charge_body)),
        charge_surface: transform(laplace_fields(&times, p, &|k| &traj.loads[k].charge_surface)),
        heat_body: transform(laplace_fields(&times, p, &|k| &traj.loads[k].heat_body)),
        heat_surface: transform(laplace_fields(&times, p, &|k| &traj.loads[k].heat_surface)),
    };
    if trunc > TRUNCATION_TOL * mag.max(f64::MIN_POSITIVE) {
        return Err(Error::InsufficientHorizon {
            estimate: trunc,
            budget: TRUNCATION_TOL * mag,
        });
    }
    Ok(LaplaceField {
        p,
        state,
        loads,
        truncation: trunc,
        magnitude: mag,
    })
}

/// Sign used for the electric-surface term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElectricSurfaceSign {
    /// `(Δ̄φ̄′ − Δ̄′φ̄)`, antisymmetric under exchange of the loadings.
    #[default]
    Antisymmetric,
    /// `(Δ̄φ̄′ + Δ̄′φ̄)`.
    Symmetric,
}

pub const RECIPROCITY_TERMS: [&str; 10] = [
    "heat_surface",
    "heat_volume",
    "pyroelectric",
    "body_force",
    "traction_surface",
    "electric_surface",
    "electric_gradient",
    "pyro_volume",
    "stress_gradient",
    "source",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReciprocityReport {
    pub p: f64,
    /// Values in the order of [`RECIPROCITY_TERMS`].
    pub terms: Vec<(String, f64)>,
    pub total: f64,
    pub normalization: f64,
    pub relative: f64,
}

impl ReciprocityReport {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Checks the hypotheses of the reciprocity identity on a trajectory.
pub fn reciprocity_preconditions(disc: &Discretization, traj: &Trajectory) -> Result<()> {
    let s0 = traj.states.first().ok_or_else(|| Error::PreconditionFailed("empty trajectory".into()))?;
    if s0.u.max_abs() != 0.0 || s0.v.max_abs() != 0.0 || s0.theta1.max_abs() != 0.0 {
        return Err(Error::PreconditionFailed(
            "initial displacement, velocity and temperature must vanish".into(),
        ));
    }
    if traj.loads.iter().any(|l| l.charge_body.max_abs() != 0.0) {
        return Err(Error::PreconditionFailed("free charge must vanish".into()));
    }
    if !disc.model.constants.iter().all(|c| c.is_fourier()) {
        return Err(Error::PreconditionFailed("heat flux must follow the Fourier law".into()));
    }
    Ok(())
}

/// Evaluates every term of the reciprocity identity between loadings `a`
/// (unprimed) and `b` (primed). Terms are weighted by `p θ̄° = θ°`.
pub fn reciprocity_residual(
    disc: &Discretization,
    a: &LaplaceField,
    b: &LaplaceField,
    sign: ElectricSurfaceSign,
) -> Result<ReciprocityReport> {
    if a.p != b.p {
        return Err(Error::InvalidArgument("both transforms need the same p".into()));
    }
    let p = a.p;
    let d = disc.model.dim();
    let nn = disc.grid().num_nodes();
    let t0 = &disc.model.theta0;
    let (sa, sb) = (&a.state, &b.state);
    let (la, lb) = (&a.loads, &b.loads);
    let mut heat_surface = 0.0;
    let mut body = 0.0;
    let mut traction = 0.0;
    let mut elec_surface = 0.0;
    let mut source = 0.0;
    for i in 0..nn {
        let t = t0[i];
        heat_surface -= (sa.theta1.at(i, 0) * lb.heat_surface.at(i, 0)
            - sb.theta1.at(i, 0) * la.heat_surface.at(i, 0))
            / p;
        source += (sa.theta1.at(i, 0) * lb.heat_body.at(i, 0)
            - sb.theta1.at(i, 0) * la.heat_body.at(i, 0))
            / p;
        for c in 0..d {
            body += t * (la.force_body.at(i, c) * sb.u.at(i, c) - lb.force_body.at(i, c) * sa.u.at(i, c));
            traction +=
                t * (la.force_surface.at(i, c) * sb.u.at(i, c) - lb.force_surface.at(i, c) * sa.u.at(i, c));
        }
        // charge_surface = s Δ̃ with Δ¹·N = −Δ̃.
        let (x, y) = (
            la.charge_surface.at(i, 0) * sb.phi1.at(i, 0),
            lb.charge_surface.at(i, 0) * sa.phi1.at(i, 0),
        );
        elec_surface -= t * match sign {
            ElectricSurfaceSign::Antisymmetric => x - y,
            ElectricSurfaceSign::Symmetric => x + y,
        };
    }
    let mut heat_volume = 0.0;
    let mut pyro = 0.0;
    let mut pyro_volume = 0.0;
    let mut elec_grad = 0.0;
    let mut stress_grad = 0.0;
    for q in disc.quadrature() {
        let ec = &disc.model.constants[q.node];
        let w = q.weight;
        let t = t0[q.node];
        let mut tg = vec![0.0; d];
        for (node, c) in &q.stencil {
            for m in 0..d {
                tg[m] += c[m] * t0[*node];
            }
        }
        let (za, ra) = disc.point_response(q, &sa.u, &sa.phi1, &sa.theta1);
        let (zb, rb) = disc.point_response(q, &sb.u, &sb.phi1, &sb.theta1);
        let n = q.node;
        for m in 0..d {
            heat_volume += w * (za.grad_theta[m] * rb.q1[m] - zb.grad_theta[m] * ra.q1[m]) / p;
            pyro += w * ec.rho0 * t * ec.p.v(m) * (za.theta * zb.grad_phi[m] - zb.theta * za.grad_phi[m]);
            pyro_volume +=
                w * ec.rho0 * t * ec.p.v(m) * (za.theta * -zb.grad_phi[m] - zb.theta * -za.grad_phi[m]);
            elec_grad -= w * tg[m] * (ra.delta1[m] * sb.phi1.at(n, 0) - rb.delta1[m] * sa.phi1.at(n, 0));
            for c in 0..d {
                stress_grad -= w
                    * tg[m]
                    * (ra.k1[m * d + c] * sb.u.at(n, c) - rb.k1[m * d + c] * sa.u.at(n, c));
            }
        }
    }
    let values = [
        heat_surface,
        heat_volume,
        pyro,
        body,
        traction,
        elec_surface,
        elec_grad,
        pyro_volume,
        stress_grad,
        source,
    ];
    let total: f64 = values.iter().sum();
    let normalization = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let relative = if normalization > 0.0 { total.abs() / normalization } else { 0.0 };
    Ok(ReciprocityReport {
        p,
        terms: RECIPROCITY_TERMS
            .iter()
            .zip(values)
            .map(|(n, v)| (n.to_string(), v))
            .collect(),
        total,
        normalization,
        relative,
    })
}
