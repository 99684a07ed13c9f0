//! Nonlinear free energy and heat-flux law.
//!
//! The free energy per unit mass is the polynomial
//!
//! ```text
//! ρ₀ψ = ½ c_{KLMN} E_{KL} E_{MN} + ⅙ c3_{KLMNPQ} E_{KL} E_{MN} E_{PQ}
//!       − e_{MKL} W_M E_{KL} − ½ χ_{MN} W_M W_N
//!       − λ_{KL} E_{KL} τ − ρ₀ p_M W_M τ − (ρ₀ a / 2θ_ref) τ²,   τ = θ − θ_ref
//! ```
//!
//! and the heat flux follows the linear Fourier law `Q = −κ Θ` with constant,
//! symmetric positive definite `κ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{multi_indices, Tensor};

const SYM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub rho0: f64,
    pub eps0: f64,
    pub theta_ref: f64,
    /// Fourth-order elastic coefficients `c_{KLMN}`.
    pub c2: Tensor,
    /// Optional sixth-order coefficients `c3_{KLMNPQ}`, fully symmetric.
    pub c3: Option<Tensor>,
    /// Piezoelectric coefficients `e_{MKL}`, symmetric in `KL`.
    pub e_piezo: Tensor,
    pub chi_diel: Tensor,
    pub lam_thermo: Tensor,
    pub p_pyro: Tensor,
    pub a_heat: f64,
    pub kappa_cond: Tensor,
}

/// Local state `(E, W, θ, Θ)` at a material point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalThermoState {
    pub strain: Tensor,
    pub w: Tensor,
    pub theta: f64,
    pub theta_grad: Tensor,
}

impl LocalThermoState {
    pub fn natural(m: &MaterialModel) -> Self {
        let d = m.dim();
        Self {
            strain: Tensor::zeros(d, 2),
            w: Tensor::zeros(d, 1),
            theta: m.theta_ref,
            theta_grad: Tensor::zeros(d, 1),
        }
    }
}

/// First and second partials of ψ (per unit mass) with respect to `(E, W, θ)`.
///
/// `d_ew[M][K][L]` is `∂²ψ/∂W_M∂E_{KL}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiDerivatives {
    pub d_e: Tensor,
    pub d_w: Tensor,
    pub d_theta: f64,
    pub d_ee: Tensor,
    pub d_ew: Tensor,
    pub d_ww: Tensor,
    pub d_etheta: Tensor,
    pub d_wtheta: Tensor,
    pub d_thetatheta: f64,
}

/// Outputs of the nonlinear constitutive relations.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearResponse {
    /// First Piola–Kirchhoff stress `K[L][i]`.
    pub stress: Tensor,
    /// Reference electric displacement `Δ_L`.
    pub displacement: Tensor,
    /// Entropy per unit mass.
    pub entropy: f64,
}

impl MaterialModel {
    /// A valid model with every coupling switched off: unit density, unit
    /// permittivity and reference temperature, `a = 1`, `κ = I`, no elasticity.
    pub fn zero(dim: usize) -> Self {
        Self {
            rho0: 1.0,
            eps0: 1.0,
            theta_ref: 1.0,
            c2: Tensor::zeros(dim, 4),
            c3: None,
            e_piezo: Tensor::zeros(dim, 3),
            chi_diel: Tensor::zeros(dim, 2),
            lam_thermo: Tensor::zeros(dim, 2),
            p_pyro: Tensor::zeros(dim, 1),
            a_heat: 1.0,
            kappa_cond: Tensor::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.c2.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(1..=2).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        let shapes: [(&str, &Tensor, usize); 6] = [
            ("c2", &self.c2, 4),
            ("e_piezo", &self.e_piezo, 3),
            ("chi_diel", &self.chi_diel, 2),
            ("lam_thermo", &self.lam_thermo, 2),
            ("p_pyro", &self.p_pyro, 1),
            ("kappa_cond", &self.kappa_cond, 2),
        ];
        for (name, t, rank) in shapes {
            if t.dim() != d || t.rank() != rank {
                return Err(Error::InvalidMaterial(format!(
                    "{name} must have rank {rank} over dimension {d}"
                )));
            }
            if !t.is_finite() {
                return Err(Error::InvalidMaterial(format!("{name} has non-finite entries")));
            }
        }
        if let Some(c3) = &self.c3 {
            if c3.dim() != d || c3.rank() != 6 {
                return Err(Error::InvalidMaterial(format!(
                    "c3 must have rank 6 over dimension {d}"
                )));
            }
            if !c3_is_symmetric(c3) {
                return Err(Error::InvalidMaterial("c3 must be fully symmetric".into()));
            }
        }
        for (name, v) in [
            ("rho0", self.rho0),
            ("theta_ref", self.theta_ref),
            ("a_heat", self.a_heat),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidMaterial(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eps0 >= 0.0 && self.eps0.is_finite()) {
            return Err(Error::InvalidMaterial("eps0 must be non-negative".into()));
        }
        let scale = self.c2.norm().max(1.0);
        for idx in multi_indices(d, 4) {
            let (k, l, m, n) = (idx[0], idx[1], idx[2], idx[3]);
            let c = self.c2.t4(k, l, m, n);
            let worst = (c - self.c2.t4(l, k, m, n))
                .abs()
                .max((c - self.c2.t4(k, l, n, m)).abs())
                .max((c - self.c2.t4(m, n, k, l)).abs());
            if worst > SYM_TOL * scale {
                return Err(Error::InvalidMaterial(
                    "c2 lacks minor/major symmetry".into(),
                ));
            }
        }
        for idx in multi_indices(d, 3) {
            let (m, k, l) = (idx[0], idx[1], idx[2]);
            if (self.e_piezo.t3(m, k, l) - self.e_piezo.t3(m, l, k)).abs()
                > SYM_TOL * self.e_piezo.norm().max(1.0)
            {
                return Err(Error::InvalidMaterial("e_piezo must be symmetric in KL".into()));
            }
        }
        for (name, t) in [
            ("chi_diel", &self.chi_diel),
            ("lam_thermo", &self.lam_thermo),
            ("kappa_cond", &self.kappa_cond),
        ] {
            if !linalg::is_symmetric(t, SYM_TOL) {
                return Err(Error::InvalidMaterial(format!("{name} must be symmetric")));
            }
        }
        let lmin = linalg::min_eigenvalue(&self.kappa_cond);
        if lmin <= 0.0 {
            return Err(Error::InvalidMaterial(format!(
                "kappa_cond must be positive definite (min eigenvalue {lmin})"
            )));
        }
        Ok(())
    }
}

fn c3_is_symmetric(c3: &Tensor) -> bool {
    let d = c3.dim();
    let tol = SYM_TOL * c3.norm().max(1.0);
    multi_indices(d, 6).all(|i| {
        let v = c3.get(&i);
        let swaps = [
            [i[1], i[0], i[2], i[3], i[4], i[5]],
            [i[2], i[3], i[0], i[1], i[4], i[5]],
            [i[4], i[5], i[2], i[3], i[0], i[1]],
        ];
        swaps.iter().all(|s| (c3.get(s) - v).abs() <= tol)
    })
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTemperature(theta))
    }
}

/// ψ per unit mass.
pub fn free_energy(m: &MaterialModel, s: &LocalThermoState) -> Result<f64> {
    check_theta(s.theta)?;
    let d = m.dim();
    let tau = s.theta - m.theta_ref;
    let e = &s.strain;
    let w = &s.w;
    let mut rho_psi = 0.0;
    for k in 0..d {
        for l in 0..d {
            let ekl = e.m(k, l);
            for mm in 0..d {
                for n in 0..d {
                    rho_psi += 0.5 * m.c2.t4(k, l, mm, n) * ekl * e.m(mm, n);
                }
            }
            for mm in 0..d {
                rho_psi -= m.e_piezo.t3(mm, k, l) * w.v(mm) * ekl;
            }
            rho_psi -= m.lam_thermo.m(k, l) * ekl * tau;
        }
    }
    if let Some(c3) = &m.c3 {
        for idx in multi_indices(d, 6) {
            rho_psi += c3.get(&idx) * e.m(idx[0], idx[1]) * e.m(idx[2], idx[3]) * e.m(idx[4], idx[5])
                / 6.0;
        }
    }
    for mm in 0..d {
        for n in 0..d {
            rho_psi -= 0.5 * m.chi_diel.m(mm, n) * w.v(mm) * w.v(n);
        }
        rho_psi -= m.rho0 * m.p_pyro.v(mm) * w.v(mm) * tau;
    }
    rho_psi -= m.rho0 * m.a_heat / (2.0 * m.theta_ref) * tau * tau;
    Ok(rho_psi / m.rho0)
}

/// Analytic first and second partials of ψ.
pub fn psi_derivatives(m: &MaterialModel, s: &LocalThermoState) -> Result<PsiDerivatives> {
    check_theta(s.theta)?;
    let d = m.dim();
    let inv_rho = 1.0 / m.rho0;
    let tau = s.theta - m.theta_ref;
    let e = &s.strain;
    let w = &s.w;

    let mut d_ee = m.c2.clone();
    if let Some(c3) = &m.c3 {
        for idx in multi_indices(d, 6) {
            d_ee.add(&idx[..4], c3.get(&idx) * e.m(idx[4], idx[5]));
        }
    }

    let mut d_e = Tensor::zeros(d, 2);
    for k in 0..d {
        for l in 0..d {
            let mut v = -m.lam_thermo.m(k, l) * tau;
            for mm in 0..d {
                for n in 0..d {
                    v += m.c2.t4(k, l, mm, n) * e.m(mm, n);
                }
                v -= m.e_piezo.t3(mm, k, l) * w.v(mm);
            }
            d_e.set(&[k, l], v);
        }
    }
    if let Some(c3) = &m.c3 {
        for idx in multi_indices(d, 6) {
            d_e.add(
                &idx[..2],
                0.5 * c3.get(&idx) * e.m(idx[2], idx[3]) * e.m(idx[4], idx[5]),
            );
        }
    }

    let mut d_w = Tensor::zeros(d, 1);
    for mm in 0..d {
        let mut v = -m.rho0 * m.p_pyro.v(mm) * tau;
        for k in 0..d {
            for l in 0..d {
                v -= m.e_piezo.t3(mm, k, l) * e.m(k, l);
            }
            v -= m.chi_diel.m(mm, k) * w.v(k);
        }
        d_w.set(&[mm], v);
    }

    let mut d_theta = -m.rho0 * m.a_heat / m.theta_ref * tau;
    for k in 0..d {
        for l in 0..d {
            d_theta -= m.lam_thermo.m(k, l) * e.m(k, l);
        }
        d_theta -= m.rho0 * m.p_pyro.v(k) * w.v(k);
    }

    Ok(PsiDerivatives {
        d_e: d_e.scaled(inv_rho),
        d_w: d_w.scaled(inv_rho),
        d_theta: d_theta * inv_rho,
        d_ee: d_ee.scaled(inv_rho),
        d_ew: m.e_piezo.scaled(-inv_rho),
        d_ww: m.chi_diel.scaled(-inv_rho),
        d_etheta: m.lam_thermo.scaled(-inv_rho),
        d_wtheta: m.p_pyro.scaled(-1.0),
        d_thetatheta: -m.a_heat / m.theta_ref,
    })
}

/// Green–Lagrange strain `E = (FᵀF − I)/2` of a deformation gradient `F[i][A]`.
pub fn green_strain(f: &Tensor) -> Tensor {
    let d = f.dim();
    let mut e = Tensor::zeros(d, 2);
    for mm in 0..d {
        for n in 0..d {
            let mut v = if mm == n { -1.0 } else { 0.0 };
            for j in 0..d {
                v += f.m(j, mm) * f.m(j, n);
            }
            e.set(&[mm, n], 0.5 * v);
        }
    }
    e
}

/// Present electric field `E_j = X_{L,j} W_L` for inverse deformation `X[L][j]`.
pub fn present_field(x_inv: &Tensor, w: &Tensor) -> Tensor {
    let d = w.dim();
    let mut e = Tensor::zeros(d, 1);
    for j in 0..d {
        e.set(&[j], (0..d).map(|l| x_inv.m(l, j) * w.v(l)).sum());
    }
    e
}

/// First Piola–Kirchhoff stress, reference electric displacement and entropy,
/// including the vacuum Maxwell terms.
pub fn nonlinear_constitutive(
    m: &MaterialModel,
    f: &Tensor,
    w: &Tensor,
    theta: f64,
) -> Result<NonlinearResponse> {
    let d = m.dim();
    let (jac, x) = linalg::det_inverse(f)?;
    let state = LocalThermoState {
        strain: green_strain(f),
        w: w.clone(),
        theta,
        theta_grad: Tensor::zeros(d, 1),
    };
    let der = psi_derivatives(m, &state)?;
    let ef = present_field(&x, w);
    let e2: f64 = ef.data().iter().map(|v| v * v).sum();

    let mut stress = Tensor::zeros(d, 2);
    for l in 0..d {
        for i in 0..d {
            let mut v = 0.0;
            for a in 0..d {
                v += f.m(i, a) * m.rho0 * der.d_e.m(a, l);
            }
            for j in 0..d {
                let maxwell = ef.v(j) * ef.v(i) - if i == j { 0.5 * e2 } else { 0.0 };
                v += jac * x.m(l, j) * m.eps0 * maxwell;
            }
            stress.set(&[l, i], v);
        }
    }
    let mut displacement = Tensor::zeros(d, 1);
    for l in 0..d {
        let mut v = -m.rho0 * der.d_w.v(l);
        for j in 0..d {
            v += m.eps0 * jac * x.m(l, j) * ef.v(j);
        }
        displacement.set(&[l], v);
    }
    Ok(NonlinearResponse {
        stress,
        displacement,
        entropy: -der.d_theta,
    })
}

/// Fourier heat flux `Q_L = −κ_{LM} Θ_M`.
pub fn heat_flux(m: &MaterialModel, s: &LocalThermoState) -> Result<Tensor> {
    check_theta(s.theta)?;
    let d = m.dim();
    let mut q = Tensor::zeros(d, 1);
    for l in 0..d {
        q.set(
            &[l],
            -(0..d).map(|n| m.kappa_cond.m(l, n) * s.theta_grad.v(n)).sum::<f64>(),
        );
    }
    Ok(q)
}
