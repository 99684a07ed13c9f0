//! Monolithic implicit time integration of the incremental field equations.
//!
//! Space: Galerkin weak form on the node grid with quadrature points on the
//! element vertices (lumped mass). Time: implicit midpoint for `(u, v)` and
//! `θ¹`, Gauss constraint enforced at each new level.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bias::{effective_constants, BiasState, EffectiveConstants};
use crate::error::{Error, Result};
use crate::fields::{
    apply_essential, body_values, boundary_values, BoundaryValues, Field, FieldKind, Grid,
    IncrementalAction, Partitions, QuadPoint,
};
use crate::linalg::{self, BandLu, BandMatrix};
use crate::material::MaterialModel;
use crate::tensor::Tensor;

/// Incremental response at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalResponse {
    /// `K¹_{Mα}` stored `[M * d + α]`.
    pub k1: Vec<f64>,
    pub delta1: Vec<f64>,
    pub eta1: f64,
    pub q1: Vec<f64>,
}

/// Linear incremental constitutive relations.
///
/// `grad_u[α * d + M] = u_{α,M}`.
pub fn incremental_constitutive(
    ec: &EffectiveConstants,
    grad_u: &[f64],
    grad_phi1: &[f64],
    theta1: f64,
    grad_theta1: &[f64],
) -> IncrementalResponse {
    let d = ec.dim();
    let rho = ec.rho0;
    let mut k1 = vec![0.0; d * d];
    let mut delta1 = vec![0.0; d];
    let mut q1 = vec![0.0; d];
    let mut eta1 = ec.alpha * theta1;
    for m in 0..d {
        for a in 0..d {
            let mut k = -rho * ec.lam.m(m, a) * theta1;
            for l in 0..d {
                for c in 0..d {
                    k += ec.g.t4(m, a, l, c) * grad_u[c * d + l];
                }
                k += ec.r.t3(l, m, a) * grad_phi1[l];
            }
            k1[m * d + a] = k;
            eta1 += ec.lam.m(m, a) * grad_u[a * d + m];
        }
        let mut dm = rho * ec.p.v(m) * theta1;
        let mut qm = -ec.kap_1.v(m) * theta1;
        for n in 0..d {
            for c in 0..d {
                dm += ec.r.t3(m, n, c) * grad_u[c * d + n];
                qm -= ec.kap_u.t3(m, n, c) * grad_u[c * d + n];
            }
            dm -= ec.l.m(m, n) * grad_phi1[n];
            qm -= ec.kap_e.m(m, n) * grad_phi1[n] + ec.kap_2.m(m, n) * grad_theta1[n];
        }
        delta1[m] = dm;
        q1[m] = qm;
        eta1 -= ec.p.v(m) * grad_phi1[m];
    }
    IncrementalResponse {
        k1,
        delta1,
        eta1,
        q1,
    }
}

/// Grid, partitions and per-node effective constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub grid: Grid,
    pub partitions: Partitions,
    pub constants: Vec<EffectiveConstants>,
    pub theta0: Vec<f64>,
}

impl Model {
    pub fn from_bias(
        m: &MaterialModel,
        bias: &BiasState,
        grid: Grid,
        partitions: Partitions,
    ) -> Result<Self> {
        if bias.dim() != grid.dim() {
            return Err(Error::DimensionMismatch("bias and grid dimensions differ".into()));
        }
        let nn = grid.num_nodes();
        let theta0: Vec<f64> = (0..nn).map(|i| bias.theta_at(&grid.coords(i))).collect();
        let constants = if bias.theta0.is_uniform() {
            vec![effective_constants(m, bias, &grid.coords(0))?; nn]
        } else {
            (0..nn)
                .map(|i| effective_constants(m, bias, &grid.coords(i)))
                .collect::<Result<_>>()?
        };
        Self::new(grid, partitions, constants, theta0)
    }

    /// Homogeneous constants with uniform bias temperature.
    pub fn homogeneous(
        ec: EffectiveConstants,
        theta0: f64,
        grid: Grid,
        partitions: Partitions,
    ) -> Result<Self> {
        let nn = grid.num_nodes();
        Self::new(grid, partitions, vec![ec; nn], vec![theta0; nn])
    }

    pub fn new(
        grid: Grid,
        partitions: Partitions,
        constants: Vec<EffectiveConstants>,
        theta0: Vec<f64>,
    ) -> Result<Self> {
        partitions.validate(grid.dim())?;
        let nn = grid.num_nodes();
        if constants.len() != nn || theta0.len() != nn {
            return Err(Error::DimensionMismatch("one constant set per node".into()));
        }
        if constants.iter().any(|c| c.dim() != grid.dim()) {
            return Err(Error::DimensionMismatch("constants and grid dimensions differ".into()));
        }
        if let Some(t) = theta0.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::NonPositiveTemperature(*t));
        }
        Ok(Self {
            grid,
            partitions,
            constants,
            theta0,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn dofs_per_node(&self) -> usize {
        self.dim() + 2
    }

    pub fn uniform_theta(&self) -> Option<f64> {
        let t = self.theta0[0];
        self.theta0.iter().all(|&x| x == t).then_some(t)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.constants.iter().all(|c| c == &self.constants[0])
    }

    /// Largest wave speed `sqrt(λ_max(G)/ρ₀)` over the nodes.
    pub fn max_wave_speed(&self) -> f64 {
        let d = self.dim();
        let mut seen: Vec<&EffectiveConstants> = Vec::new();
        let mut cmax: f64 = 0.0;
        for ec in &self.constants {
            if seen.iter().any(|s| *s == ec) {
                continue;
            }
            seen.push(ec);
            let gm = Tensor::from_vec(d * d, 2, ec.g.data().to_vec()).unwrap();
            let lmax = linalg::symmetric_eigenvalues(&gm).last().copied().unwrap_or(0.0);
            cmax = cmax.max((lmax.max(0.0) / ec.rho0).sqrt());
        }
        cmax
    }

    /// Accuracy guard `h / c_max`.
    pub fn stability_bound(&self) -> f64 {
        let c = self.max_wave_speed();
        if c > 0.0 {
            self.grid.min_spacing() / c
        } else {
            f64::INFINITY
        }
    }
}

/// Local linear map from the quadrature-point variables
/// `z = (u_{α,M}, φ¹_{,M}, θ¹, θ¹_{,M})` to `(K¹, Δ¹, η¹, Q¹)`.
#[derive(Debug, Clone)]
struct LocalMap {
    /// Row-major `nout × nz`.
    mat: Vec<f64>,
    nz: usize,
}

fn local_map(ec: &EffectiveConstants) -> LocalMap {
    let d = ec.dim();
    let nz = d * d + 2 * d + 1;
    let nout = d * d + 2 * d + 1;
    let mut mat = vec![0.0; nout * nz];
    let mut z = vec![0.0; nz];
    for col in 0..nz {
        z.iter_mut().for_each(|v| *v = 0.0);
        z[col] = 1.0;
        let r = incremental_constitutive(ec, &z[..d * d], &z[d * d..d * d + d], z[d * d + d], &z[d * d + d + 1..]);
        let out: Vec<f64> = r
            .k1
            .iter()
            .chain(&r.delta1)
            .chain(std::iter::once(&r.eta1))
            .chain(&r.q1)
            .copied()
            .collect();
        for (row, v) in out.into_iter().enumerate() {
            mat[row * nz + col] = v;
        }
    }
    LocalMap { mat, nz }
}

/// Nodal loads at one time level, already multiplied by quadrature weights.
///
/// Sign conventions: `force_*` enter the momentum balance as supplied
/// forces; `charge_*` satisfy `Σ wΔ¹·∇N + charge_body + charge_surface = 0`;
/// `heat_surface` is the outward heat flow `Q¹·N` through the node's
/// boundary patch.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalLoads {
    pub force_body: Field,
    pub force_surface: Field,
    pub charge_body: Field,
    pub charge_surface: Field,
    pub heat_body: Field,
    pub heat_surface: Field,
}

impl NodalLoads {
    pub fn zeros(grid: &Grid) -> Self {
        let d = grid.dim();
        Self {
            force_body: Field::zeros(grid, d),
            force_surface: Field::zeros(grid, d),
            charge_body: Field::zeros(grid, 1),
            charge_surface: Field::zeros(grid, 1),
            heat_body: Field::zeros(grid, 1),
            heat_surface: Field::zeros(grid, 1),
        }
    }
}

/// Assembled discrete operators of a model.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub model: Model,
    quad: Vec<QuadPoint>,
    node_weight: Vec<f64>,
    /// Spatial operator: momentum rows `Σ wK¹·∇N`, Gauss rows `Σ wΔ¹·∇N`,
    /// heat rows `−Σ wQ¹·∇N`.
    pub stiffness: BandMatrix,
    /// Heat rows: `Σ_{q at i} w ρ₀θ° η¹(q)`.
    pub capacity: BandMatrix,
    /// `ρ₀ m_i` per node.
    pub mass: Vec<f64>,
    essential: [Vec<bool>; 3],
    gauge: Option<usize>,
}

impl Discretization {
    pub fn new(model: Model) -> Self {
        let grid = &model.grid;
        let d = grid.dim();
        let nd = d + 2;
        let nn = grid.num_nodes();
        let band = (grid.node_bandwidth() + 1) * nd - 1;
        let quad = grid.quadrature();
        let node_weight = grid.node_weights();
        let mut uniq: Vec<(usize, LocalMap)> = Vec::new();
        let maps: Vec<LocalMap> = (0..nn)
            .map(|i| {
                let ec = &model.constants[i];
                if let Some((_, m)) = uniq.iter().find(|(j, _)| &model.constants[*j] == ec) {
                    return m.clone();
                }
                let m = local_map(ec);
                uniq.push((i, m.clone()));
                m
            })
            .collect();
        let mut stiffness = BandMatrix::zeros(nn * nd, band, band);
        let mut capacity = BandMatrix::zeros(nn * nd, band, band);
        let nz = d * d + 2 * d + 1;
        for q in &quad {
            let lm = &maps[q.node];
            let rho = model.constants[q.node].rho0;
            let th0 = model.theta0[q.node];
            // B: z = Σ_j B_j x_j.
            let ns = q.stencil.len();
            let mut b = vec![0.0; nz * ns * nd];
            let bidx = |zr: usize, s: usize, c: usize| zr * ns * nd + s * nd + c;
            for (s, (node, coef)) in q.stencil.iter().enumerate() {
                for a in 0..d {
                    for m in 0..d {
                        b[bidx(a * d + m, s, a)] += coef[m];
                    }
                }
                for m in 0..d {
                    b[bidx(d * d + m, s, d)] += coef[m];
                    b[bidx(d * d + d + 1 + m, s, d + 1)] += coef[m];
                }
                if *node == q.node {
                    b[bidx(d * d + d, s, d + 1)] += 1.0;
                }
            }
            // out = D z = D B x
            let nout = nz;
            let mut db = vec![0.0; nout * ns * nd];
            for o in 0..nout {
                for zr in 0..nz {
                    let dv = lm.mat[o * lm.nz + zr];
                    if dv == 0.0 {
                        continue;
                    }
                    for k in 0..ns * nd {
                        db[o * ns * nd + k] += dv * b[zr * ns * nd + k];
                    }
                }
            }
            let k_row = |m: usize, a: usize| m * d + a;
            let delta_row = |m: usize| d * d + m;
            let eta_row = d * d + d;
            let q_row = |m: usize| d * d + d + 1 + m;
            for (ni, ci) in &q.stencil {
                for (sj, (nj, _)) in q.stencil.iter().enumerate() {
                    for cj in 0..nd {
                        let col = nj * nd + cj;
                        let k = sj * nd + cj;
                        for a in 0..d {
                            let v: f64 = (0..d).map(|m| db[k_row(m, a) * ns * nd + k] * ci[m]).sum();
                            if v != 0.0 {
                                stiffness.add(ni * nd + a, col, q.weight * v);
                            }
                        }
                        let vg: f64 = (0..d).map(|m| db[delta_row(m) * ns * nd + k] * ci[m]).sum();
                        if vg != 0.0 {
                            stiffness.add(ni * nd + d, col, q.weight * vg);
                        }
                        let vh: f64 = (0..d).map(|m| db[q_row(m) * ns * nd + k] * ci[m]).sum();
                        if vh != 0.0 {
                            stiffness.add(ni * nd + d + 1, col, -q.weight * vh);
                        }
                    }
                }
            }
            for (sj, (nj, _)) in q.stencil.iter().enumerate() {
                for cj in 0..nd {
                    let v = db[eta_row * ns * nd + sj * nd + cj];
                    if v != 0.0 {
                        capacity.add(q.node * nd + d + 1, nj * nd + cj, q.weight * rho * th0 * v);
                    }
                }
            }
        }
        let mass = (0..nn).map(|i| model.constants[i].rho0 * node_weight[i]).collect();
        let essential = [
            model.partitions.essential_nodes(grid, FieldKind::Mechanical),
            model.partitions.essential_nodes(grid, FieldKind::Electric),
            model.partitions.essential_nodes(grid, FieldKind::Thermal),
        ];
        let gauge = (!essential[1].iter().any(|&e| e)).then_some(0);
        Self {
            model,
            quad,
            node_weight,
            stiffness,
            capacity,
            mass,
            essential,
            gauge,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.model.grid
    }

    pub fn num_dofs(&self) -> usize {
        self.grid().num_nodes() * self.model.dofs_per_node()
    }

    pub fn quadrature(&self) -> &[QuadPoint] {
        &self.quad
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weight
    }

    /// Node whose potential is pinned when no electric side is essential.
    pub fn gauge_node(&self) -> Option<usize> {
        self.gauge
    }

    pub fn is_essential(&self, kind: FieldKind, node: usize) -> bool {
        let k = match kind {
            FieldKind::Mechanical => 0,
            FieldKind::Electric => 1,
            FieldKind::Thermal => 2,
        };
        self.essential[k][node]
    }

    pub fn pack(&self, u: &Field, phi: &Field, theta: &Field) -> Vec<f64> {
        let d = self.model.dim();
        let nd = d + 2;
        let nn = self.grid().num_nodes();
        let mut x = vec![0.0; nn * nd];
        for i in 0..nn {
            for a in 0..d {
                x[i * nd + a] = u.at(i, a);
            }
            x[i * nd + d] = phi.at(i, 0);
            x[i * nd + d + 1] = theta.at(i, 0);
        }
        x
    }

    pub fn unpack(&self, x: &[f64]) -> (Field, Field, Field) {
        let d = self.model.dim();
        let nd = d + 2;
        let nn = self.grid().num_nodes();
        let mut u = Vec::with_capacity(nn * d);
        let mut phi = Vec::with_capacity(nn);
        let mut th = Vec::with_capacity(nn);
        for i in 0..nn {
            u.extend_from_slice(&x[i * nd..i * nd + d]);
            phi.push(x[i * nd + d]);
            th.push(x[i * nd + d + 1]);
        }
        (Field::from_data(d, u), Field::from_data(1, phi), Field::from_data(1, th))
    }

    pub fn pack_state(&self, s: &IncrementalState) -> Vec<f64> {
        self.pack(&s.u, &s.phi1, &s.theta1)
    }

    /// Quadrature-point variables `z` and constitutive response at `q`.
    pub fn point_response(
        &self,
        q: &QuadPoint,
        u: &Field,
        phi: &Field,
        theta: &Field,
    ) -> (PointGradients, IncrementalResponse) {
        let pg = point_gradients(self.grid().dim(), q, u, phi, theta);
        let r = incremental_constitutive(
            &self.model.constants[q.node],
            &pg.grad_u,
            &pg.grad_phi,
            pg.theta,
            &pg.grad_theta,
        );
        (pg, r)
    }

    /// Body loads and natural boundary data at time `t`.
    pub fn loads(&self, action: &IncrementalAction, t: f64) -> NodalLoads {
        let grid = self.grid();
        let d = grid.dim();
        let nn = grid.num_nodes();
        let bv = boundary_values(grid, &self.model.partitions, action, t, false);
        let f = body_values(grid, &action.body_force, d, t);
        let rho_e = body_values(grid, &action.charge, 1, t);
        let gam = body_values(grid, &action.heat_source, 1, t);
        let mut out = NodalLoads::zeros(grid);
        for i in 0..nn {
            let w = self.node_weight[i];
            let rho = self.model.constants[i].rho0;
            for a in 0..d {
                out.force_body.set(i, a, w * rho * f.at(i, a));
                out.force_surface.set(i, a, bv.traction_nodal.at(i, a));
            }
            out.charge_body.set(i, 0, w * rho_e.at(i, 0));
            out.charge_surface.set(i, 0, bv.charge_nodal.at(i, 0));
            out.heat_body.set(i, 0, w * rho * gam.at(i, 0));
            out.heat_surface.set(i, 0, bv.heat_nodal.at(i, 0));
        }
        out
    }

    /// Right-hand sides `(momentum, Gauss, heat)` packed like the unknowns.
    fn load_vector(&self, l: &NodalLoads) -> Vec<f64> {
        let d = self.model.dim();
        let nd = d + 2;
        let nn = self.grid().num_nodes();
        let mut b = vec![0.0; nn * nd];
        for i in 0..nn {
            for a in 0..d {
                b[i * nd + a] = l.force_body.at(i, a) + l.force_surface.at(i, a);
            }
            b[i * nd + d] = -l.charge_body.at(i, 0) - l.charge_surface.at(i, 0);
            b[i * nd + d + 1] = l.heat_body.at(i, 0) - l.heat_surface.at(i, 0);
        }
        b
    }

    fn constrained(&self, node: usize, comp: usize) -> bool {
        let d = self.model.dim();
        if comp < d {
            self.essential[0][node]
        } else if comp == d {
            self.essential[1][node] || self.gauge == Some(node)
        } else {
            self.essential[2][node]
        }
    }

    fn essential_value(&self, bv: &BoundaryValues, node: usize, comp: usize) -> f64 {
        let d = self.model.dim();
        let v = if comp < d {
            bv.essential_u.at(node, comp)
        } else if comp == d {
            bv.essential_phi.at(node, 0)
        } else {
            bv.essential_theta.at(node, 0)
        };
        if v.is_nan() {
            0.0
        } else {
            v
        }
    }

    /// Discrete residuals of the field equations for a step `s0 → s1` at the
    /// midpoint, with the supplied midpoint loads. Momentum rows:
    /// `ρ₀m(v¹−v⁰)/Δt + K̄ − F`; heat rows: `C(x¹−x⁰)/Δt + Ā − H`;
    /// Gauss rows use level `s1` and `gauss_loads`.
    pub fn step_residual(
        &self,
        s0: &IncrementalState,
        s1: &IncrementalState,
        mid_loads: &NodalLoads,
        gauss_loads: &NodalLoads,
    ) -> Vec<f64> {
        let d = self.model.dim();
        let nd = d + 2;
        let dt = s1.t - s0.t;
        let x0 = self.pack_state(s0);
        let x1 = self.pack_state(s1);
        let a0 = self.stiffness.matvec(&x0);
        let a1 = self.stiffness.matvec(&x1);
        let dx: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| (a - b) / dt).collect();
        let cap = self.capacity.matvec(&dx);
        let bm = self.load_vector(mid_loads);
        let bg = self.load_vector(gauss_loads);
        let mut r = vec![0.0; x0.len()];
        for i in 0..self.grid().num_nodes() {
            for a in 0..d {
                let k = i * nd + a;
                r[k] = self.mass[i] * (s1.v.at(i, a) - s0.v.at(i, a)) / dt + 0.5 * (a0[k] + a1[k])
                    - bm[k];
            }
            let k = i * nd + d;
            r[k] = a1[k] - bg[k];
            let k = i * nd + d + 1;
            r[k] = cap[k] + 0.5 * (a0[k] + a1[k]) - bm[k];
        }
        r
    }
}

/// Variables at a quadrature point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGradients {
    /// `u_{α,M}` stored `[α * d + M]`.
    pub grad_u: Vec<f64>,
    pub grad_phi: Vec<f64>,
    pub theta: f64,
    pub grad_theta: Vec<f64>,
}

pub fn point_gradients(d: usize, q: &QuadPoint, u: &Field, phi: &Field, theta: &Field) -> PointGradients {
    let mut pg = PointGradients {
        grad_u: vec![0.0; d * d],
        grad_phi: vec![0.0; d],
        theta: theta.at(q.node, 0),
        grad_theta: vec![0.0; d],
    };
    for (node, c) in &q.stencil {
        for m in 0..d {
            for a in 0..d {
                pg.grad_u[a * d + m] += c[m] * u.at(*node, a);
            }
            pg.grad_phi[m] += c[m] * phi.at(*node, 0);
            pg.grad_theta[m] += c[m] * theta.at(*node, 0);
        }
    }
    pg
}

/// Incremental state at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalState {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub phi1: Field,
    pub theta1: Field,
}

impl IncrementalState {
    pub fn zero(grid: &Grid, t: f64) -> Self {
        let d = grid.dim();
        Self {
            t,
            u: Field::zeros(grid, d),
            v: Field::zeros(grid, d),
            phi1: Field::zeros(grid, 1),
            theta1: Field::zeros(grid, 1),
        }
    }

    pub fn max_abs(&self) -> f64 {
        [&self.u, &self.v, &self.phi1, &self.theta1]
            .iter()
            .map(|f| f.max_abs())
            .fold(0.0, f64::max)
    }

    /// Nodewise `self − other`.
    pub fn difference(&self, other: &Self) -> Self {
        let sub = |a: &Field, b: &Field| {
            let mut c = a.clone();
            c.axpy(-1.0, b);
            c
        };
        Self {
            t: self.t,
            u: sub(&self.u, &other.u),
            v: sub(&self.v, &other.v),
            phi1: sub(&self.phi1, &other.phi1),
            theta1: sub(&self.theta1, &other.theta1),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.difference(other).max_abs()
    }
}

/// Initial incremental data; `φ¹(·,0)` is obtained from the Gauss constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    pub u: Field,
    pub v: Field,
    pub theta: Field,
}

impl InitialConditions {
    pub fn zero(grid: &Grid) -> Self {
        let d = grid.dim();
        Self {
            u: Field::zeros(grid, d),
            v: Field::zeros(grid, d),
            theta: Field::zeros(grid, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermalScheme {
    #[default]
    Midpoint,
    BackwardEuler,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    /// Max nodal Gauss residual over unconstrained nodes.
    pub gauss_residual: f64,
    /// Max nodal residual of the momentum and heat rows at free dofs.
    pub balance_residual: f64,
}

/// Time integrator with a factored constant system matrix.
pub struct Integrator {
    pub disc: Discretization,
    pub action: IncrementalAction,
    pub dt: f64,
    pub scheme: ThermalScheme,
    lu: BandLu,
}

/// Result of one step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: IncrementalState,
    /// Reaction-augmented loads at the midpoint (support forces, charges and
    /// heat flows at constrained nodes).
    pub mid_loads: NodalLoads,
    pub diagnostics: StepDiagnostics,
}

impl Integrator {
    pub fn new(disc: Discretization, action: IncrementalAction, dt: f64, scheme: ThermalScheme) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        action.validate(disc.grid(), &disc.model.partitions)?;
        let d = disc.model.dim();
        let nd = d + 2;
        let nn = disc.grid().num_nodes();
        let theta_w = match scheme {
            ThermalScheme::Midpoint => 0.5,
            ThermalScheme::BackwardEuler => 1.0,
        };
        let mut s = BandMatrix::zeros(nn * nd, disc.stiffness.kl(), disc.stiffness.ku());
        for i in 0..nn * nd {
            let (node, comp) = (i / nd, i % nd);
            let (lo, hi) = disc.stiffness.row_range(i);
            let w = if comp < d {
                0.5
            } else if comp == d {
                1.0
            } else {
                theta_w
            };
            for j in lo..hi {
                let mut v = w * disc.stiffness.get(i, j);
                if comp == d + 1 {
                    v += disc.capacity.get(i, j) / dt;
                }
                if v != 0.0 {
                    s.add(i, j, v);
                }
            }
            if comp < d {
                s.add(i, i, 2.0 * disc.mass[node] / (dt * dt));
            }
        }
        for i in 0..nn * nd {
            if disc.constrained(i / nd, i % nd) {
                s.set_identity_row(i);
            }
        }
        let lu = s.factorize()?;
        Ok(Self {
            disc,
            action,
            dt,
            scheme,
            lu,
        })
    }

    /// Initial state: essential data applied at `t = 0`, `φ¹` from Gauss.
    pub fn initial_state(&self, ic: &InitialConditions) -> Result<IncrementalState> {
        let disc = &self.disc;
        let grid = disc.grid();
        let d = grid.dim();
        let nd = d + 2;
        let nn = grid.num_nodes();
        let bv = boundary_values(grid, &disc.model.partitions, &self.action, 0.0, false);
        let rate = boundary_values(grid, &disc.model.partitions, &self.action, 0.0, true);
        let mut u = ic.u.clone();
        let mut th = ic.theta.clone();
        let mut phi = Field::zeros(grid, 1);
        apply_essential(&mut u, &mut phi, &mut th, &bv);
        let mut v = ic.v.clone();
        let mut scratch_phi = Field::zeros(grid, 1);
        let mut scratch_th = Field::zeros(grid, 1);
        apply_essential(&mut v, &mut scratch_phi, &mut scratch_th, &rate);

        // Gauss rows only, with u and θ moved to the right-hand side.
        let kb = disc.stiffness.kl();
        let mut m = BandMatrix::zeros(nn, kb / nd + 1, kb / nd + 1);
        let x = disc.pack(&u, &Field::zeros(grid, 1), &th);
        let ax = disc.stiffness.matvec(&x);
        let loads = disc.loads(&self.action, 0.0);
        let mut rhs = vec![0.0; nn];
        for i in 0..nn {
            let row = i * nd + d;
            let (lo, hi) = disc.stiffness.row_range(row);
            for j in lo..hi {
                if j % nd == d {
                    let v = disc.stiffness.get(row, j);
                    if v != 0.0 {
                        m.add(i, j / nd, v);
                    }
                }
            }
            rhs[i] = -loads.charge_body.at(i, 0) - loads.charge_surface.at(i, 0) - ax[row];
            if disc.constrained(i, d) {
                m.set_identity_row(i);
                rhs[i] = disc.essential_value(&bv, i, d);
            }
        }
        let sol = m.factorize()?.solve(&rhs);
        phi.data_mut().copy_from_slice(&sol);
        Ok(IncrementalState {
            t: 0.0,
            u,
            v,
            phi1: phi,
            theta1: th,
        })
    }

    /// Advances one step.
    pub fn step(&self, s0: &IncrementalState) -> Result<StepOutput> {
        let disc = &self.disc;
        let grid = disc.grid();
        let d = grid.dim();
        let nd = d + 2;
        let nn = grid.num_nodes();
        let dt = self.dt;
        let t1 = s0.t + dt;
        let th = 0.5 * (s0.t + t1);
        let x0 = disc.pack_state(s0);
        let a0 = disc.stiffness.matvec(&x0);
        let c0 = disc.capacity.matvec(&x0);
        let mid = disc.loads(&self.action, th);
        let new = disc.loads(&self.action, t1);
        let bm = disc.load_vector(&mid);
        let bn = disc.load_vector(&new);
        let bv = boundary_values(grid, &disc.model.partitions, &self.action, t1, false);
        let mut rhs = vec![0.0; nn * nd];
        for i in 0..nn {
            for a in 0..d {
                let k = i * nd + a;
                rhs[k] = bm[k] + 2.0 * disc.mass[i] / (dt * dt) * (s0.u.at(i, a) + dt * s0.v.at(i, a))
                    - 0.5 * a0[k];
            }
            let k = i * nd + d;
            rhs[k] = bn[k];
            let k = i * nd + d + 1;
            rhs[k] = match self.scheme {
                ThermalScheme::Midpoint => bm[k] + c0[k] / dt - 0.5 * a0[k],
                ThermalScheme::BackwardEuler => bn[k] + c0[k] / dt,
            };
            for comp in 0..nd {
                if disc.constrained(i, comp) {
                    rhs[i * nd + comp] = disc.essential_value(&bv, i, comp);
                }
            }
        }
        let x1 = self.lu.solve(&rhs);
        if x1.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailure("non-finite solution".into()));
        }
        let (u1, phi1, th1) = disc.unpack(&x1);
        let mut v1 = u1.clone();
        for (k, v) in v1.data_mut().iter_mut().enumerate() {
            *v = 2.0 * (u1.data()[k] - s0.u.data()[k]) / dt - s0.v.data()[k];
        }
        let s1 = IncrementalState {
            t: t1,
            u: u1,
            v: v1,
            phi1,
            theta1: th1,
        };

        // Residuals at every dof; at constrained dofs they are the reactions.
        let a1 = disc.stiffness.matvec(&x1);
        let dx: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| (a - b) / dt).collect();
        let cdx = disc.capacity.matvec(&dx);
        let mut mid_loads = mid;
        let mut gauss_res: f64 = 0.0;
        let mut bal_res: f64 = 0.0;
        for i in 0..nn {
            for a in 0..d {
                let k = i * nd + a;
                let r = disc.mass[i] * (s1.v.at(i, a) - s0.v.at(i, a)) / dt + 0.5 * (a0[k] + a1[k]) - bm[k];
                if disc.constrained(i, a) {
                    let cur = mid_loads.force_surface.at(i, a);
                    mid_loads.force_surface.set(i, a, cur + r);
                } else {
                    bal_res = bal_res.max(r.abs());
                }
            }
            let k = i * nd + d;
            let r = a1[k] - bn[k];
            if !disc.constrained(i, d) {
                gauss_res = gauss_res.max(r.abs());
            }
            let k = i * nd + d + 1;
            let r = match self.scheme {
                ThermalScheme::Midpoint => cdx[k] + 0.5 * (a0[k] + a1[k]) - bm[k],
                ThermalScheme::BackwardEuler => cdx[k] + a1[k] - bn[k],
            };
            if disc.constrained(i, d + 1) {
                let cur = mid_loads.heat_surface.at(i, 0);
                mid_loads.heat_surface.set(i, 0, cur - r);
            } else {
                bal_res = bal_res.max(r.abs());
            }
        }
        Ok(StepOutput {
            state: s1,
            mid_loads,
            diagnostics: StepDiagnostics {
                step: 0,
                t: t1,
                gauss_residual: gauss_res,
                balance_residual: bal_res,
            },
        })
    }

    /// Loads at level `t` with the electric reactions of state `s` (exact at
    /// the level since Gauss holds there).
    fn level_loads(&self, s: &IncrementalState) -> NodalLoads {
        let disc = &self.disc;
        let d = disc.model.dim();
        let nd = d + 2;
        let mut l = disc.loads(&self.action, s.t);
        let ax = disc.stiffness.matvec(&disc.pack_state(s));
        for i in 0..disc.grid().num_nodes() {
            if disc.essential[1][i] {
                let r = -ax[i * nd + d] - l.charge_body.at(i, 0);
                l.charge_surface.set(i, 0, r);
            }
        }
        l
    }
}

/// Everything needed to run one simulation.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: Model,
    pub action: IncrementalAction,
    pub initial: InitialConditions,
    pub dt: f64,
    pub t_final: f64,
    pub save_stride: usize,
    pub thermal_scheme: ThermalScheme,
    /// Turn the `Δt ≤ h/c_max` guard into an error.
    pub strict_stability: bool,
    pub metadata: BTreeMap<String, String>,
}

impl Scenario {
    pub fn new(model: Model, action: IncrementalAction, dt: f64, t_final: f64) -> Self {
        let initial = InitialConditions::zero(&model.grid);
        Self {
            model,
            action,
            initial,
            dt,
            t_final,
            save_stride: 1,
            thermal_scheme: ThermalScheme::Midpoint,
            strict_stability: false,
            metadata: BTreeMap::new(),
        }
    }

    pub fn num_steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Saved time levels at a uniform interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Interval between saved levels.
    pub dt: f64,
    pub states: Vec<IncrementalState>,
    /// Loads at each saved level, including reactions at constrained nodes.
    pub loads: Vec<NodalLoads>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub warnings: Vec<String>,
    pub metadata: BTreeMap<String, String>,
}

impl Trajectory {
    pub fn max_gauss_residual(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.gauss_residual).fold(0.0, f64::max)
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }
}

pub fn run_simulation(sc: &Scenario) -> Result<Trajectory> {
    if sc.save_stride == 0 {
        return Err(Error::InvalidArgument("save stride must be at least 1".into()));
    }
    if !(sc.t_final >= 0.0) {
        return Err(Error::InvalidArgument("final time must be non-negative".into()));
    }
    let mut warnings = Vec::new();
    let bound = sc.model.stability_bound();
    if sc.dt > bound {
        if sc.strict_stability {
            return Err(Error::StabilityViolation { dt: sc.dt, bound });
        }
        warnings.push(format!("time step {} exceeds the accuracy guard h/c_max = {bound}", sc.dt));
    }
    let disc = Discretization::new(sc.model.clone());
    let integ = Integrator::new(disc, sc.action.clone(), sc.dt, sc.thermal_scheme)?;
    let nsteps = sc.num_steps();
    let mut state = integ.initial_state(&sc.initial)?;
    let mut states = vec![state.clone()];
    let mut level_loads = vec![integ.level_loads(&state)];
    let mut mids: Vec<NodalLoads> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut saved_mid_before: Vec<Option<NodalLoads>> = vec![None];
    for n in 0..nsteps {
        let out = integ.step(&state)?;
        let mut diag = out.diagnostics;
        diag.step = n + 1;
        state = out.state;
        diagnostics.push(diag);
        if (n + 1) % sc.save_stride == 0 {
            states.push(state.clone());
            level_loads.push(integ.level_loads(&state));
            saved_mid_before.push(Some(out.mid_loads.clone()));
        }
        // Mid loads just after each saved level.
        if n % sc.save_stride == 0 {
            mids.push(out.mid_loads.clone());
        }
    }
    // Level reactions: average of the adjacent midpoint reactions.
    let d = sc.model.dim();
    let disc = &integ.disc;
    for (k, ll) in level_loads.iter_mut().enumerate() {
        let before = saved_mid_before[k].as_ref();
        let after = mids.get(k);
        let pick: Vec<&NodalLoads> = before.into_iter().chain(after).collect();
        if pick.is_empty() {
            continue;
        }
        let w = 1.0 / pick.len() as f64;
        for i in 0..disc.grid().num_nodes() {
            if disc.is_essential(FieldKind::Mechanical, i) {
                for a in 0..d {
                    let v: f64 = pick.iter().map(|m| m.force_surface.at(i, a)).sum::<f64>() * w;
                    ll.force_surface.set(i, a, v);
                }
            }
            if disc.is_essential(FieldKind::Thermal, i) {
                let v: f64 = pick.iter().map(|m| m.heat_surface.at(i, 0)).sum::<f64>() * w;
                ll.heat_surface.set(i, 0, v);
            }
        }
    }
    let mut metadata = sc.metadata.clone();
    metadata.insert("dt".into(), format!("{}", sc.dt));
    metadata.insert("steps".into(), nsteps.to_string());
    metadata.insert("save_stride".into(), sc.save_stride.to_string());
    Ok(Trajectory {
        dt: sc.dt * sc.save_stride as f64,
        states,
        loads: level_loads,
        diagnostics,
        warnings,
        metadata,
    })
}

/// Steady (static) solution of the spatial problem at time `t`: inertia and
/// heat-capacity terms dropped, boundary data frozen at `t`.
pub fn solve_static(disc: &Discretization, action: &IncrementalAction, t: f64) -> Result<IncrementalState> {
    action.validate(disc.grid(), &disc.model.partitions)?;
    let grid = disc.grid();
    let nd = disc.model.dofs_per_node();
    let n = disc.num_dofs();
    let mut a = disc.stiffness.clone();
    let mut rhs = disc.load_vector(&disc.loads(action, t));
    let bv = boundary_values(grid, &disc.model.partitions, action, t, false);
    for i in 0..n {
        if disc.constrained(i / nd, i % nd) {
            a.set_identity_row(i);
            rhs[i] = disc.essential_value(&bv, i / nd, i % nd);
        }
    }
    let x = a.factorize()?.solve(&rhs);
    let (u, phi1, theta1) = disc.unpack(&x);
    Ok(IncrementalState {
        t,
        v: Field::zeros(grid, grid.dim()),
        u,
        phi1,
        theta1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::{build_bias_state, BiasConfig, BiasTemperature};
    use crate::fields::{BoundaryKind, BoundaryLoad, Load, Profile, Side, Signal, SidePartition};
    use crate::sampling::random_material;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn elastic_bar(g: f64, rho: f64) -> MaterialModel {
        let mut m = MaterialModel::zero(1);
        m.c2.set(&[0, 0, 0, 0], g);
        m.rho0 = rho;
        m
    }

    fn natural_model(m: &MaterialModel, grid: Grid, parts: Partitions) -> Model {
        let b = build_bias_state(m, &BiasConfig::natural(m), grid.lo(), grid.hi()).unwrap();
        Model::from_bias(m, &b, grid, parts).unwrap()
    }

    fn fixed_both(dim: usize) -> Partitions {
        Partitions::uniform(SidePartition::all_essential(dim))
    }

    #[test]
    fn natural_thermal_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_material(&mut rng, 2, false);
        let ec = EffectiveConstants::classical(&m);
        let tau = 0.7;
        let r = incremental_constitutive(&ec, &[0.0; 4], &[0.0; 2], tau, &[0.0; 2]);
        for mm in 0..2 {
            for a in 0..2 {
                assert!((r.k1[mm * 2 + a] + m.rho0 * ec.lam.m(mm, a) * tau).abs() < 1e-14);
            }
            assert!((r.delta1[mm] - m.rho0 * ec.p.v(mm) * tau).abs() < 1e-14);
            assert_eq!(r.q1[mm], 0.0);
        }
        assert!((r.eta1 - ec.alpha * tau).abs() < 1e-14);
        let z = incremental_constitutive(&ec, &[0.0; 4], &[0.0; 2], 0.0, &[0.0; 2]);
        assert!(z.k1.iter().chain(&z.delta1).chain(&z.q1).all(|v| *v == 0.0) && z.eta1 == 0.0);
    }

    #[test]
    fn zero_inputs_stay_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_material(&mut rng, 2, false);
        let grid = Grid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![6, 5]).unwrap();
        let model = natural_model(&m, grid, fixed_both(2));
        let traj = run_simulation(&Scenario::new(model, IncrementalAction::default(), 0.01, 0.2)).unwrap();
        assert_eq!(traj.states.len(), 21);
        assert!(traj.states.iter().all(|s| s.max_abs() == 0.0));
    }

    fn standing_wave(n: usize, dt: f64, t_final: f64) -> (Trajectory, Grid) {
        let m = elastic_bar(1.0, 1.0);
        let grid = Grid::uniform_1d(1.0, n).unwrap();
        let model = natural_model(&m, grid.clone(), fixed_both(1));
        let mut sc = Scenario::new(model, IncrementalAction::default(), dt, t_final);
        sc.initial.u = Field::from_fn(&grid, 1, |x| vec![(PI * x[0]).sin()]);
        (run_simulation(&sc).unwrap(), grid)
    }

    #[test]
    fn standing_wave_frequency() {
        let (traj, grid) = standing_wave(200, 0.005, 4.0);
        let mid = grid.num_nodes() / 2;
        let xm = grid.coords(mid)[0];
        // Zero crossings of u(mid, t) by linear interpolation.
        let vals: Vec<(f64, f64)> = traj.states.iter().map(|s| (s.t, s.u.at(mid, 0))).collect();
        let mut zeros = Vec::new();
        for w in vals.windows(2) {
            if w[0].1 * w[1].1 < 0.0 {
                zeros.push(w[0].0 - w[0].1 * (w[1].0 - w[0].0) / (w[1].1 - w[0].1));
            }
        }
        assert!(zeros.len() >= 3, "{zeros:?}");
        let half_period = (zeros[zeros.len() - 1] - zeros[0]) / (zeros.len() - 1) as f64;
        let omega = PI / half_period;
        let exact = PI; // sqrt(G/ρ₀)·k
        assert!(((omega - exact) / exact).abs() < 0.02, "{omega}");
        assert!((traj.states[0].u.at(mid, 0) - (PI * xm).sin()).abs() < 1e-14);
    }

    fn wave_error(dt: f64) -> f64 {
        let t_final = 2.0;
        let (traj, grid) = standing_wave(200, dt, t_final);
        let s = traj.states.last().unwrap();
        (0..grid.num_nodes())
            .map(|i| {
                let x = grid.coords(i)[0];
                (s.u.at(i, 0) - (PI * x).sin() * (PI * s.t).cos()).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn time_step_convergence() {
        let e1 = wave_error(0.04);
        let e2 = wave_error(0.02);
        assert!(e1 / e2 >= 1.8, "{e1} {e2}");
    }

    #[test]
    fn heat_decay_rate() {
        let mut m = MaterialModel::zero(1);
        m.rho0 = 2.0;
        m.a_heat = 1.5;
        m.theta_ref = 3.0;
        m.kappa_cond.set(&[0, 0], 0.4);
        let n = 101;
        let grid = Grid::uniform_1d(1.0, n).unwrap();
        let model = natural_model(&m, grid.clone(), fixed_both(1));
        let mut sc = Scenario::new(model, IncrementalAction::default(), 0.002, 0.3);
        sc.initial.theta = Field::from_fn(&grid, 1, |x| vec![(PI * x[0]).sin()]);
        let traj = run_simulation(&sc).unwrap();
        let mid = n / 2;
        let s = traj.states.last().unwrap();
        let rate = -(s.theta1.at(mid, 0) / traj.states[0].theta1.at(mid, 0)).ln() / s.t;
        // ρ₀θ°α θ̇ = κ θ'' with α = a/θ_ref and θ° = θ_ref.
        let alpha = m.a_heat / m.theta_ref;
        let exact = 0.4 * PI * PI / (m.rho0 * alpha * m.theta_ref);
        assert!(((rate - exact) / exact).abs() < 0.02, "{rate} {exact}");
        assert!(s.u.max_abs() == 0.0);
    }

    fn coupled_model(seed: u64, n: usize, parts: Partitions) -> (Model, MaterialModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_material(&mut rng, 1, true);
        let cfg = BiasConfig {
            f0: vec![vec![1.05]],
            w0: vec![0.2],
            theta0: BiasTemperature::Affine {
                center: m.theta_ref,
                gradient: vec![0.1 * m.theta_ref],
            },
        };
        let grid = Grid::uniform_1d(1.0, n).unwrap();
        let b = build_bias_state(&m, &cfg, grid.lo(), grid.hi()).unwrap();
        (Model::from_bias(&m, &b, grid, parts).unwrap(), m)
    }

    fn pulse(kind: BoundaryKind, side: Side, amp: f64, center: f64) -> BoundaryLoad {
        BoundaryLoad {
            side,
            kind,
            load: Load {
                amplitude: vec![amp],
                profile: Profile::Uniform,
                signal: Signal::GaussianPulse { center, width: 0.05 },
            },
        }
    }

    fn left_fixed() -> Partitions {
        Partitions::uniform(SidePartition::essential_on(1, &[Side::Left]))
    }

    #[test]
    fn superposition_and_gauss_residual() {
        let (model, _) = coupled_model(11, 41, left_fixed());
        let a1 = IncrementalAction {
            body_force: vec![Load {
                amplitude: vec![1.0],
                profile: Profile::Gaussian { center: vec![0.5], width: 0.2 },
                signal: Signal::Sine { freq: 2.0, phase: 0.0 },
            }],
            boundary: vec![pulse(BoundaryKind::Traction, Side::Right, 0.5, 0.2)],
            ..Default::default()
        };
        let a2 = IncrementalAction {
            heat_source: vec![Load {
                amplitude: vec![2.0],
                profile: Profile::Uniform,
                signal: Signal::Ramp { t0: 0.0, t1: 0.3 },
            }],
            boundary: vec![
                pulse(BoundaryKind::Charge, Side::Right, 0.3, 0.25),
                pulse(BoundaryKind::HeatFlux, Side::Right, -0.4, 0.1),
            ],
            ..Default::default()
        };
        let (a, b) = (0.7, -1.3);
        let run = |act: &IncrementalAction| {
            run_simulation(&Scenario::new(model.clone(), act.clone(), 0.005, 0.5)).unwrap()
        };
        let t1 = run(&a1);
        let t2 = run(&a2);
        let t12 = run(&a1.scaled(a).combined(&a2.scaled(b)));
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 0..t12.states.len() {
            let s = &t12.states[k];
            let comb = |f: fn(&IncrementalState) -> &Field| {
                let mut c = f(&t1.states[k]).scaled(a);
                c.axpy(b, f(&t2.states[k]));
                f(s).max_abs_diff(&c)
            };
            worst = worst
                .max(comb(|s| &s.u))
                .max(comb(|s| &s.v))
                .max(comb(|s| &s.phi1))
                .max(comb(|s| &s.theta1));
            scale = scale.max(s.max_abs());
        }
        assert!(scale > 1e-3);
        assert!(worst <= 1e-10 * scale.max(1.0), "{worst}");
        for t in [&t1, &t2, &t12] {
            assert!(t.max_gauss_residual() <= 1e-10, "{}", t.max_gauss_residual());
            assert!(t.diagnostics.iter().all(|d| d.balance_residual <= 1e-9));
        }
    }

    #[test]
    fn deterministic() {
        let (model, _) = coupled_model(2, 21, left_fixed());
        let act = IncrementalAction {
            boundary: vec![pulse(BoundaryKind::Traction, Side::Right, 1.0, 0.1)],
            ..Default::default()
        };
        let sc = Scenario::new(model, act, 0.01, 0.3);
        assert_eq!(run_simulation(&sc).unwrap(), run_simulation(&sc).unwrap());
    }

    #[test]
    fn insulated_uniform_temperature_stays_uniform() {
        let m = MaterialModel::zero(1);
        let grid = Grid::uniform_1d(1.0, 11).unwrap();
        let parts = Partitions {
            mechanical: SidePartition::all_essential(1),
            electric: SidePartition::all_essential(1),
            thermal: SidePartition::all_natural(1),
        };
        let model = natural_model(&m, grid.clone(), parts);
        let mut sc = Scenario::new(model, IncrementalAction::default(), 0.01, 0.01);
        sc.initial.theta = Field::from_fn(&grid, 1, |_| vec![0.25]);
        let traj = run_simulation(&sc).unwrap();
        let th = &traj.states[1].theta1;
        for i in 0..grid.num_nodes() {
            assert!((th.at(i, 0) - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn static_traction_bar() {
        // Fixed at X=0, traction T at X=L, uniform body force b:
        // G u'' + ρ₀ b = 0, G u'(L) = T  ⇒  u = (T + ρ₀bL)X/G − ρ₀bX²/(2G).
        let (g, rho, t_load, b) = (2.0, 1.5, 0.8, 0.3);
        let m = elastic_bar(g, rho);
        let err = |n: usize| {
            let grid = Grid::uniform_1d(1.0, n).unwrap();
            let model = natural_model(&m, grid.clone(), left_fixed());
            let act = IncrementalAction {
                body_force: vec![Load {
                    amplitude: vec![b],
                    profile: Profile::Uniform,
                    signal: Signal::Constant,
                }],
                boundary: vec![BoundaryLoad {
                    side: Side::Right,
                    kind: BoundaryKind::Traction,
                    load: Load {
                        amplitude: vec![t_load],
                        profile: Profile::Uniform,
                        signal: Signal::Constant,
                    },
                }],
                ..Default::default()
            };
            let s = solve_static(&Discretization::new(model), &act, 0.0).unwrap();
            let mut e: f64 = 0.0;
            for i in 0..n - 1 {
                let (x0, x1) = (grid.coords(i)[0], grid.coords(i + 1)[0]);
                let stress = g * (s.u.at(i + 1, 0) - s.u.at(i, 0)) / (x1 - x0);
                let xm = 0.5 * (x0 + x1);
                e = e.max((stress - (t_load + rho * b * (1.0 - xm))).abs());
                let exact_u = (t_load + rho * b) * x1 / g - rho * b * x1 * x1 / (2.0 * g);
                e = e.max((s.u.at(i + 1, 0) - exact_u).abs());
            }
            e
        };
        let (e1, e2) = (err(11), err(21));
        assert!(e1 < 1e-10 || e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn rejects_bad_step_and_strict_guard() {
        let m = elastic_bar(1.0, 1.0);
        let grid = Grid::uniform_1d(1.0, 11).unwrap();
        let model = natural_model(&m, grid, fixed_both(1));
        let mut sc = Scenario::new(model, IncrementalAction::default(), 0.5, 1.0);
        let t = run_simulation(&sc).unwrap();
        assert_eq!(t.warnings.len(), 1);
        sc.strict_stability = true;
        assert!(matches!(run_simulation(&sc), Err(Error::StabilityViolation { .. })));
        sc.dt = -1.0;
        assert!(run_simulation(&sc).is_err());
    }
}
