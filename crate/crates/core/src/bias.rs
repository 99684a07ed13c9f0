//! Finite static bias state and the effective incremental constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::material::{
    green_strain, heat_flux, nonlinear_constitutive, present_field, psi_derivatives,
    LocalThermoState, MaterialModel,
};
use crate::tensor::{multi_indices, Tensor};

/// Bias temperature: uniform, or affine `θ°(X) = θ_c + G·X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasTemperature {
    Uniform(f64),
    Affine { center: f64, gradient: Vec<f64> },
}

impl BiasTemperature {
    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            Self::Uniform(t) => *t,
            Self::Affine { center, gradient } => {
                center + gradient.iter().zip(x).map(|(g, xi)| g * xi).sum::<f64>()
            }
        }
    }

    pub fn gradient(&self, dim: usize) -> Vec<f64> {
        match self {
            Self::Uniform(_) => vec![0.0; dim],
            Self::Affine { gradient, .. } => gradient.clone(),
        }
    }

    pub fn is_uniform(&self) -> bool {
        match self {
            Self::Uniform(_) => true,
            Self::Affine { gradient, .. } => gradient.iter().all(|g| *g == 0.0),
        }
    }

    /// Smallest value over the box `[lo, hi]` (affine, so attained at a corner).
    pub fn min_over_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let d = lo.len();
        (0..1usize << d)
            .map(|mask| {
                let x: Vec<f64> = (0..d)
                    .map(|k| if mask >> k & 1 == 1 { hi[k] } else { lo[k] })
                    .collect();
                self.at(&x)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Description of a homogeneous bias, as read from a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    /// Deformation gradient `y°_{α,L}`, row-major `[α][L]`.
    pub f0: Vec<Vec<f64>>,
    /// Reference potential gradient `W°_L = −φ°_{,L}`.
    pub w0: Vec<f64>,
    pub theta0: BiasTemperature,
}

impl BiasConfig {
    pub fn natural(m: &MaterialModel) -> Self {
        let d = m.dim();
        Self {
            f0: (0..d)
                .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            w0: vec![0.0; d],
            theta0: BiasTemperature::Uniform(m.theta_ref),
        }
    }
}

/// Static equilibrium residuals of the bias under zero bias body action.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResidual {
    /// `K°_{Lα,L}` per component.
    pub momentum: Vec<f64>,
    /// `Δ°_{L,L}`.
    pub gauss: f64,
    /// `Q°_{L,L}`.
    pub heat: f64,
}

impl EquilibriumResidual {
    pub fn max_abs(&self) -> f64 {
        self.momentum
            .iter()
            .fold(self.gauss.abs().max(self.heat.abs()), |a, b| a.max(b.abs()))
    }
}

/// Finite static bias state with its derived kinematics.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasState {
    pub f0: Tensor,
    pub w0: Tensor,
    pub theta0: BiasTemperature,
    pub j0: f64,
    pub x0inv: Tensor,
    pub e0: Tensor,
    pub equilibrium: EquilibriumResidual,
}

/// Bias response quantities at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasPointFields {
    pub theta: f64,
    pub entropy: f64,
    pub stress: Tensor,
    pub displacement: Tensor,
    pub heat_flux: Tensor,
}

impl BiasState {
    pub fn dim(&self) -> usize {
        self.f0.dim()
    }

    pub fn theta_at(&self, x: &[f64]) -> f64 {
        self.theta0.at(x)
    }

    /// `θ°` when uniform.
    pub fn uniform_theta(&self) -> Option<f64> {
        self.theta0.is_uniform().then(|| self.theta0.at(&vec![0.0; self.dim()]))
    }

    pub fn is_natural(&self, m: &MaterialModel) -> bool {
        self.f0 == Tensor::identity(self.dim())
            && self.w0.data().iter().all(|&w| w == 0.0)
            && self.theta0.is_uniform()
            && self.uniform_theta() == Some(m.theta_ref)
    }

    pub fn fields_at(&self, m: &MaterialModel, x: &[f64]) -> Result<BiasPointFields> {
        let theta = self.theta_at(x);
        let r = nonlinear_constitutive(m, &self.f0, &self.w0, theta)?;
        let d = self.dim();
        let state = LocalThermoState {
            strain: self.e0.clone(),
            w: self.w0.clone(),
            theta,
            theta_grad: Tensor::from_vec(d, 1, self.theta0.gradient(d)).unwrap(),
        };
        Ok(BiasPointFields {
            theta,
            entropy: r.entropy,
            stress: r.stress,
            displacement: r.displacement,
            heat_flux: heat_flux(m, &state)?,
        })
    }
}

/// Builds the bias state and its reported equilibrium residual.
///
/// `lo`/`hi` bound the body; the bias temperature must be positive on it.
pub fn build_bias_state(
    m: &MaterialModel,
    cfg: &BiasConfig,
    lo: &[f64],
    hi: &[f64],
) -> Result<BiasState> {
    let d = m.dim();
    if cfg.f0.len() != d || cfg.f0.iter().any(|r| r.len() != d) || cfg.w0.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "bias F0/W0 must be {d}-dimensional"
        )));
    }
    if let BiasTemperature::Affine { gradient, .. } = &cfg.theta0 {
        if gradient.len() != d {
            return Err(Error::DimensionMismatch("bias temperature gradient".into()));
        }
    }
    let f0 = Tensor::from_vec(d, 2, cfg.f0.iter().flatten().copied().collect()).unwrap();
    let w0 = Tensor::from_vec(d, 1, cfg.w0.clone()).unwrap();
    let (j0, x0inv) = linalg::det_inverse(&f0)?;
    let tmin = cfg.theta0.min_over_box(lo, hi);
    if !(tmin > 0.0) {
        return Err(Error::NonPositiveTemperature(tmin));
    }
    let e0 = green_strain(&f0);

    // F0 and W0 are constant, so spatial variation enters only through the
    // affine θ°; K° and Δ° are affine in θ and Q° is constant.
    let grad = cfg.theta0.gradient(d);
    let state = LocalThermoState {
        strain: e0.clone(),
        w: w0.clone(),
        theta: cfg.theta0.at(lo),
        theta_grad: Tensor::zeros(d, 1),
    };
    let der = psi_derivatives(m, &state)?;
    let mut momentum = vec![0.0; d];
    for (alpha, slot) in momentum.iter_mut().enumerate() {
        for (l, g) in grad.iter().enumerate() {
            for a in 0..d {
                *slot += f0.m(alpha, a) * m.rho0 * der.d_etheta.m(a, l) * g;
            }
        }
    }
    let gauss = grad
        .iter()
        .enumerate()
        .map(|(l, g)| -m.rho0 * der.d_wtheta.v(l) * g)
        .sum();

    Ok(BiasState {
        f0,
        w0,
        theta0: cfg.theta0.clone(),
        j0,
        x0inv,
        e0,
        equilibrium: EquilibriumResidual {
            momentum,
            gauss,
            heat: 0.0,
        },
    })
}

/// Effective (biased) incremental constants at a point.
///
/// Index conventions: `g[K][α][L][γ]`, `r[K][L][γ]` with `K` the electric
/// index, `lam[M][α]`, `kap_u[M][N][α]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConstants {
    pub rho0: f64,
    pub g: Tensor,
    pub r: Tensor,
    pub lam: Tensor,
    pub l: Tensor,
    pub p: Tensor,
    pub alpha: f64,
    pub kap_u: Tensor,
    pub kap_e: Tensor,
    pub kap_1: Tensor,
    pub kap_2: Tensor,
    pub g_corr: Tensor,
    pub r_corr: Tensor,
    pub l_corr: Tensor,
}

impl EffectiveConstants {
    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    /// Fourier-law model: only `κ_{MN}` is non-zero among the heat tensors.
    pub fn is_fourier(&self) -> bool {
        [&self.kap_u, &self.kap_e, &self.kap_1]
            .iter()
            .all(|t| t.data().iter().all(|&v| v == 0.0))
    }

    /// Classical linear thermopiezoelectric moduli read off the ψ polynomial
    /// (the natural-state constants).
    pub fn classical(m: &MaterialModel) -> Self {
        let d = m.dim();
        let mut l = m.chi_diel.clone();
        for i in 0..d {
            l.add(&[i, i], m.eps0);
        }
        Self {
            rho0: m.rho0,
            g: m.c2.clone(),
            r: m.e_piezo.clone(),
            lam: m.lam_thermo.scaled(1.0 / m.rho0),
            l,
            p: m.p_pyro.clone(),
            alpha: m.a_heat / m.theta_ref,
            kap_u: Tensor::zeros(d, 3),
            kap_e: Tensor::zeros(d, 2),
            kap_1: Tensor::zeros(d, 1),
            kap_2: m.kappa_cond.clone(),
            g_corr: Tensor::zeros(d, 4),
            r_corr: Tensor::zeros(d, 3),
            l_corr: Tensor::identity(d).scaled(m.eps0),
        }
    }
}

/// Maxwell corrections `(g, r, l)` for present field `ef`, inverse deformation
/// `x[L][α]` and Jacobian `j`.
pub fn maxwell_corrections(eps0: f64, j: f64, x: &Tensor, ef: &Tensor) -> (Tensor, Tensor, Tensor) {
    let d = x.dim();
    let e2: f64 = ef.data().iter().map(|v| v * v).sum();
    let s = eps0 * j;
    let mut g = Tensor::zeros(d, 4);
    for idx in multi_indices(d, 4) {
        let (k, a, l, c) = (idx[0], idx[1], idx[2], idx[3]);
        let mut v = 0.5 * e2 * (x.m(k, c) * x.m(l, a) - x.m(k, a) * x.m(l, c));
        for b in 0..d {
            v += ef.v(a) * ef.v(b) * (x.m(k, b) * x.m(l, c) - x.m(k, c) * x.m(l, b));
            v += ef.v(b) * ef.v(c) * (x.m(k, a) * x.m(l, b) - x.m(k, b) * x.m(l, a));
            v -= ef.v(a) * ef.v(c) * x.m(k, b) * x.m(l, b);
        }
        g.set(&idx, s * v);
    }
    let mut r = Tensor::zeros(d, 3);
    for idx in multi_indices(d, 3) {
        let (k, l, c) = (idx[0], idx[1], idx[2]);
        let mut v = 0.0;
        for a in 0..d {
            v += ef.v(a) * x.m(k, a) * x.m(l, c)
                - ef.v(a) * x.m(k, c) * x.m(l, a)
                - ef.v(c) * x.m(k, a) * x.m(l, a);
        }
        r.set(&idx, s * v);
    }
    let mut lc = Tensor::zeros(d, 2);
    for mm in 0..d {
        for n in 0..d {
            lc.set(&[mm, n], s * (0..d).map(|a| x.m(mm, a) * x.m(n, a)).sum::<f64>());
        }
    }
    (g, r, lc)
}

/// Effective constants at reference point `x`.
pub fn effective_constants(
    m: &MaterialModel,
    b: &BiasState,
    x: &[f64],
) -> Result<EffectiveConstants> {
    let d = m.dim();
    let f = &b.f0;
    let theta = b.theta_at(x);
    let state = LocalThermoState {
        strain: b.e0.clone(),
        w: b.w0.clone(),
        theta,
        theta_grad: Tensor::zeros(d, 1),
    };
    let der = psi_derivatives(m, &state)?;
    let rho = m.rho0;
    let ef = present_field(&b.x0inv, &b.w0);
    let (g_corr, r_corr, l_corr) = maxwell_corrections(m.eps0, b.j0, &b.x0inv, &ef);

    let mut g = g_corr.clone();
    for idx in multi_indices(d, 4) {
        let (k, a, l, c) = (idx[0], idx[1], idx[2], idx[3]);
        let mut v = if a == c { rho * der.d_e.m(k, l) } else { 0.0 };
        for mm in 0..d {
            for n in 0..d {
                v += f.m(a, mm) * rho * der.d_ee.t4(k, mm, l, n) * f.m(c, n);
            }
        }
        g.add(&idx, v);
    }
    let mut r = r_corr.clone();
    for idx in multi_indices(d, 3) {
        let (k, l, c) = (idx[0], idx[1], idx[2]);
        let v: f64 = (0..d).map(|mm| -rho * der.d_ew.t3(k, l, mm) * f.m(c, mm)).sum();
        r.add(&idx, v);
    }
    let mut lam = Tensor::zeros(d, 2);
    for mm in 0..d {
        for c in 0..d {
            let v: f64 = (0..d).map(|l| -der.d_etheta.m(l, mm) * f.m(c, l)).sum();
            lam.set(&[mm, c], v);
        }
    }
    let mut l = l_corr.clone();
    for mm in 0..d {
        for n in 0..d {
            l.add(&[mm, n], -rho * der.d_ww.m(mm, n));
        }
    }
    // Fourier law with constant κ: A = B = C = 0 and F = −κ, so by
    // κ_{MNα} = −A, κ^E = B, κ_M = −C, κ_{MN} = −F only κ_{MN} survives.
    Ok(EffectiveConstants {
        rho0: rho,
        g,
        r,
        lam,
        l,
        p: der.d_wtheta.scaled(-1.0),
        alpha: -der.d_thetatheta,
        kap_u: Tensor::zeros(d, 3),
        kap_e: Tensor::zeros(d, 2),
        kap_1: Tensor::zeros(d, 1),
        kap_2: m.kappa_cond.clone(),
        g_corr,
        r_corr,
        l_corr,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    /// `max|G_{KαLγ} − G_{LγKα}| / ‖G‖`.
    pub g_asymmetry: f64,
    /// `max|L_{MN} − L_{NM}| / ‖L‖`.
    pub l_asymmetry: f64,
    pub pass: bool,
}

pub const SYMMETRY_TOL: f64 = 1e-8;

pub fn check_symmetries(ec: &EffectiveConstants) -> SymmetryReport {
    let d = ec.dim();
    let gn = ec.g.norm();
    let ln = ec.l.norm();
    let g_asym = multi_indices(d, 4)
        .map(|i| (ec.g.get(&i) - ec.g.t4(i[2], i[3], i[0], i[1])).abs())
        .fold(0.0, f64::max);
    let l_asym = multi_indices(d, 2)
        .map(|i| (ec.l.m(i[0], i[1]) - ec.l.m(i[1], i[0])).abs())
        .fold(0.0, f64::max);
    let g_rel = if gn > 0.0 { g_asym / gn } else { g_asym };
    let l_rel = if ln > 0.0 { l_asym / ln } else { l_asym };
    SymmetryReport {
        g_asymmetry: g_rel,
        l_asymmetry: l_rel,
        pass: g_rel <= SYMMETRY_TOL && l_rel <= SYMMETRY_TOL,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBoundReport {
    pub holds: bool,
    /// Smallest eigenvalue of `L`.
    pub lambda_m: f64,
    /// `c = ρ₀α/(2θ°)`.
    pub c: f64,
    /// `|g|` with `g_I = ρ₀P_I`.
    pub gnorm: f64,
    /// Whether `g·L⁻¹g ≤ ρ₀α`, i.e. the density `½ρ₀αθ² + ρ₀θP·W + ½W·LW`
    /// is non-negative.
    pub lyapunov_definite: bool,
}

pub fn coupling_bound(
    ec: &EffectiveConstants,
    rho0: f64,
    theta0: f64,
) -> Result<CouplingBoundReport> {
    let lambda_m = linalg::min_eigenvalue(&ec.l);
    if lambda_m <= 0.0 {
        return Err(Error::NotPositiveDefinite(lambda_m));
    }
    if !(theta0 > 0.0) {
        return Err(Error::NonPositiveTemperature(theta0));
    }
    let c = rho0 * ec.alpha / (2.0 * theta0);
    let gvec: Vec<f64> = ec.p.data().iter().map(|p| rho0 * p).collect();
    let gnorm = gvec.iter().map(|x| x * x).sum::<f64>().sqrt();
    let linv = linalg::to_matrix(&ec.l)
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite(lambda_m))?;
    let gv = nalgebra::DVector::from_vec(gvec);
    let quad = gv.dot(&(&linv * &gv));
    Ok(CouplingBoundReport {
        holds: gnorm <= c * lambda_m,
        lambda_m,
        c,
        gnorm,
        lyapunov_definite: quad <= rho0 * ec.alpha,
    })
}
