//! Seeded random materials, bias states and local states for property checks.

use rand::Rng;

use crate::material::{LocalThermoState, MaterialModel};
use crate::tensor::{multi_indices, Tensor};

fn voigt_pairs(dim: usize) -> Vec<(usize, usize)> {
    match dim {
        1 => vec![(0, 0)],
        _ => vec![(0, 0), (1, 1), (0, 1)],
    }
}

fn voigt_index(dim: usize, k: usize, l: usize) -> usize {
    if dim == 1 {
        0
    } else if k == l {
        k
    } else {
        2
    }
}

fn random_sym<R: Rng + ?Sized>(rng: &mut R, dim: usize, amp: f64) -> Tensor {
    let mut t = Tensor::zeros(dim, 2);
    for i in 0..dim {
        for j in i..dim {
            let v = rng.gen_range(-amp..amp);
            t.set(&[i, j], v);
            t.set(&[j, i], v);
        }
    }
    t
}

fn random_spd<R: Rng + ?Sized>(rng: &mut R, dim: usize, floor: f64, amp: f64) -> Tensor {
    let mut t = random_sym(rng, dim, amp);
    // diagonal dominance keeps it comfortably positive definite
    for i in 0..dim {
        let row: f64 = (0..dim).filter(|&j| j != i).map(|j| t.m(i, j).abs()).sum();
        t.set(&[i, i], floor + row + rng.gen_range(0.0..amp));
    }
    t
}

/// Elastic tensor built from a random SPD Voigt matrix, so it has full
/// minor and major symmetry and is strongly elliptic.
pub fn random_c2<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Tensor {
    let nv = voigt_pairs(dim).len();
    let mut v = vec![vec![0.0f64; nv]; nv];
    for i in 0..nv {
        for j in i..nv {
            let x = rng.gen_range(-0.3..0.3);
            v[i][j] = x;
            v[j][i] = x;
        }
    }
    for (i, row) in v.iter_mut().enumerate() {
        let off: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.abs()).sum();
        row[i] = 1.0 + off + rng.gen_range(0.0..1.0);
    }
    let mut c = Tensor::zeros(dim, 4);
    for idx in multi_indices(dim, 4) {
        let a = voigt_index(dim, idx[0], idx[1]);
        let b = voigt_index(dim, idx[2], idx[3]);
        c.set(&idx, v[a][b]);
    }
    c
}

/// Fully symmetric sixth-order tensor as a sum of `A⊗A⊗A` with symmetric `A`.
pub fn random_c3<R: Rng + ?Sized>(rng: &mut R, dim: usize, amp: f64) -> Tensor {
    let mut c = Tensor::zeros(dim, 6);
    for _ in 0..3 {
        let a = random_sym(rng, dim, 1.0);
        let s = rng.gen_range(-amp..amp);
        for idx in multi_indices(dim, 6) {
            c.add(&idx, s * a.m(idx[0], idx[1]) * a.m(idx[2], idx[3]) * a.m(idx[4], idx[5]));
        }
    }
    c
}

/// A random valid material with O(1) moduli and moderate couplings.
pub fn random_material<R: Rng + ?Sized>(rng: &mut R, dim: usize, with_c3: bool) -> MaterialModel {
    let mut e = Tensor::zeros(dim, 3);
    for mm in 0..dim {
        for k in 0..dim {
            for l in k..dim {
                let v = rng.gen_range(-0.3..0.3);
                e.set(&[mm, k, l], v);
                e.set(&[mm, l, k], v);
            }
        }
    }
    let mut p = Tensor::zeros(dim, 1);
    for k in 0..dim {
        p.set(&[k], rng.gen_range(-0.1..0.1));
    }
    MaterialModel {
        rho0: rng.gen_range(0.8..1.5),
        eps0: rng.gen_range(0.5..1.5),
        theta_ref: rng.gen_range(0.8..1.5),
        c2: random_c2(rng, dim),
        c3: with_c3.then(|| random_c3(rng, dim, 0.5)),
        e_piezo: e,
        chi_diel: random_spd(rng, dim, 0.5, 0.3),
        lam_thermo: random_sym(rng, dim, 0.3),
        p_pyro: p,
        a_heat: rng.gen_range(0.8..2.0),
        kappa_cond: random_spd(rng, dim, 0.5, 0.3),
    }
}

/// Random local state with strain, field and temperature offsets of order `amp`.
pub fn random_local_state<R: Rng + ?Sized>(
    rng: &mut R,
    m: &MaterialModel,
    amp: f64,
) -> LocalThermoState {
    let dim = m.dim();
    let mut w = Tensor::zeros(dim, 1);
    let mut g = Tensor::zeros(dim, 1);
    for k in 0..dim {
        w.set(&[k], rng.gen_range(-amp..amp));
        g.set(&[k], rng.gen_range(-1.0..1.0));
    }
    LocalThermoState {
        strain: random_sym(rng, dim, amp),
        w,
        theta: m.theta_ref * (1.0 + rng.gen_range(-amp..amp)),
        theta_grad: g,
    }
}

/// Random deformation gradient near identity with positive determinant.
pub fn random_deformation<R: Rng + ?Sized>(rng: &mut R, dim: usize, amp: f64) -> Tensor {
    let mut f = Tensor::identity(dim);
    for i in 0..dim {
        for j in 0..dim {
            f.add(&[i, j], rng.gen_range(-amp..amp));
        }
    }
    f
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize, amp: f64) -> Tensor {
    let mut v = Tensor::zeros(dim, 1);
    for k in 0..dim {
        v.set(&[k], rng.gen_range(-amp..amp));
    }
    v
}
