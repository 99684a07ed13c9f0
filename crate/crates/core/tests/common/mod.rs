//! Independent classical assembly shared by integration tests.
#![allow(dead_code)]

use biasfield_core::material::MaterialModel;

pub struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] += v;
    }
}

/// One quadrature point: node, weight, and `(node, dN/dX)` for each stencil node.
pub type Point = (usize, f64, Vec<(usize, Vec<f64>)>);

pub fn points_1d(n: usize, h: f64) -> Vec<Point> {
    let mut out = Vec::new();
    for e in 0..n - 1 {
        let st = vec![(e, vec![-1.0 / h]), (e + 1, vec![1.0 / h])];
        out.push((e, h / 2.0, st.clone()));
        out.push((e + 1, h / 2.0, st));
    }
    out
}

pub fn points_2d(nx: usize, ny: usize, hx: f64, hy: f64) -> Vec<Point> {
    let id = |i: usize, j: usize| j * nx + i;
    let mut out = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            for b in 0..2 {
                for a in 0..2 {
                    let mut st: Vec<(usize, Vec<f64>)> = Vec::new();
                    let mut push = |node: usize, g: [f64; 2]| match st.iter_mut().find(|(n, _)| *n == node) {
                        Some((_, v)) => {
                            v[0] += g[0];
                            v[1] += g[1];
                        }
                        None => st.push((node, g.to_vec())),
                    };
                    push(id(i + 1, j + b), [1.0 / hx, 0.0]);
                    push(id(i, j + b), [-1.0 / hx, 0.0]);
                    push(id(i + a, j + 1), [0.0, 1.0 / hy]);
                    push(id(i + a, j), [0.0, -1.0 / hy]);
                    out.push((id(i + a, j + b), hx * hy / 4.0, st));
                }
            }
        }
    }
    out
}

/// Classical linear thermopiezoelectric operator, stiffness, capacity and mass.
pub fn classical(m: &MaterialModel, pts: &[Point], nn: usize) -> (Dense, Dense, Vec<f64>) {
    let d = m.dim();
    let nd = d + 2;
    let n = nn * nd;
    let mut k = Dense { n, a: vec![0.0; n * n] };
    let mut c = Dense { n, a: vec![0.0; n * n] };
    let mut mass = vec![0.0; nn];
    let eps = |i: usize, j: usize| m.chi_diel.m(i, j) + if i == j { m.eps0 } else { 0.0 };
    for (qn, w, st) in pts {
        mass[*qn] += m.rho0 * w;
        for (ti, gi) in st {
            // Unit trial values: each stencil node and component in turn.
            for (tj, gj) in st {
                for comp in 0..nd {
                    let col = tj * nd + comp;
                    // grad u[a][L], grad φ[L], θ, grad θ[L] for this trial.
                    let mut gu = vec![vec![0.0; d]; d];
                    let mut gp = vec![0.0; d];
                    let mut gt = vec![0.0; d];
                    let mut th = 0.0;
                    if comp < d {
                        gu[comp] = gj.clone();
                    } else if comp == d {
                        gp = gj.clone();
                    } else {
                        gt = gj.clone();
                        if tj == qn {
                            th = 1.0;
                        }
                    }
                    for kk in 0..d {
                        for l in 0..d {
                            // T_{KL} = c u_{M,N} + e_{MKL} φ_{,M} − λ θ
                            let mut t = -m.lam_thermo.m(kk, l) * th;
                            for mm in 0..d {
                                for nn2 in 0..d {
                                    t += m.c2.t4(kk, l, mm, nn2) * gu[mm][nn2];
                                }
                                t += m.e_piezo.t3(mm, kk, l) * gp[mm];
                            }
                            k.add(ti * nd + l, col, w * t * gi[kk]);
                        }
                        // D_K = e u + ε E + ρ p θ with E = −∇φ
                        let mut dk = m.rho0 * m.p_pyro.v(kk) * th;
                        let mut qk = 0.0;
                        for l in 0..d {
                            for mm in 0..d {
                                dk += m.e_piezo.t3(kk, l, mm) * gu[l][mm];
                            }
                            dk -= eps(kk, l) * gp[l];
                            qk -= m.kappa_cond.m(kk, l) * gt[l];
                        }
                        k.add(ti * nd + d, col, w * dk * gi[kk]);
                        k.add(ti * nd + d + 1, col, -w * qk * gi[kk]);
                    }
                    if ti == qn {
                        // ρ₀θ_ref η = θ_ref λ:∇u − ρ₀θ_ref p·∇φ + ρ₀ a θ
                        let mut eta = m.rho0 * m.a_heat * th;
                        for kk in 0..d {
                            for l in 0..d {
                                eta += m.theta_ref * m.lam_thermo.m(kk, l) * gu[l][kk];
                            }
                            eta -= m.rho0 * m.theta_ref * m.p_pyro.v(kk) * gp[kk];
                        }
                        c.add(ti * nd + d + 1, col, w * eta);
                    }
                }
            }
        }
    }
    (k, c, mass)
}
