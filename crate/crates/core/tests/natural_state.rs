//! Natural-state operator against an independent classical assembly.

mod common;

use biasfield_core::bias::{build_bias_state, effective_constants, BiasConfig};
use biasfield_core::fields::{Grid, Partitions, SidePartition};
use biasfield_core::material::MaterialModel;
use biasfield_core::sampling::random_material;
use biasfield_core::solver::{Discretization, Model};
use biasfield_core::tensor::Tensor;
use common::{classical, points_1d, points_2d, Point};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check(m: &MaterialModel, grid: Grid, pts: &[Point]) {
    let b = build_bias_state(m, &BiasConfig::natural(m), grid.lo(), grid.hi()).unwrap();
    let ec = effective_constants(m, &b, grid.lo()).unwrap();
    let d = m.dim();
    assert!(ec.g_corr.data().iter().all(|&v| v == 0.0));
    assert!(ec.r_corr.data().iter().all(|&v| v == 0.0));
    assert_eq!(ec.l_corr, Tensor::identity(d).scaled(m.eps0));
    let nn = grid.num_nodes();
    let parts = Partitions::uniform(SidePartition::all_natural(d));
    let disc = Discretization::new(Model::from_bias(m, &b, grid, parts).unwrap());
    let (k, c, mass) = classical(m, pts, nn);
    let n = k.n;
    let scale = k.a.iter().chain(&c.a).fold(0.0f64, |a, b| a.max(b.abs()));
    for i in 0..n {
        for j in 0..n {
            let (ek, ec) = (k.a[i * n + j], c.a[i * n + j]);
            assert!((disc.stiffness.get(i, j) - ek).abs() <= 1e-12 * scale, "K[{i},{j}]");
            assert!((disc.capacity.get(i, j) - ec).abs() <= 1e-12 * scale, "C[{i},{j}]");
        }
    }
    for (a, b) in disc.mass.iter().zip(&mass) {
        assert!((a - b).abs() <= 1e-12 * b.abs());
    }
}

#[test]
fn natural_operator_matches_classical_1d() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5 {
        let m = random_material(&mut rng, 1, true);
        let grid = Grid::uniform_1d(1.3, 9).unwrap();
        let pts = points_1d(9, grid.h()[0]);
        check(&m, grid, &pts);
    }
}

#[test]
fn natural_operator_matches_classical_2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..3 {
        let m = random_material(&mut rng, 2, true);
        let grid = Grid::new(vec![0.0, 0.0], vec![1.0, 0.6], vec![5, 4]).unwrap();
        let pts = points_2d(5, 4, grid.h()[0], grid.h()[1]);
        check(&m, grid, &pts);
    }
}
