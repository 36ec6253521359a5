//! Random scenes and antenna states shared by unit tests.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{sample_coupling, PatternParams, PolCombinerRx, PolStateTx, Scene, C64};
use crate::geometry::{build_upa_positions, project_so3, RotationMatrix, Vec3};

pub const LAMBDA: f64 = 299_792_458.0 / 2.4e9;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_point(rng: &mut ChaCha8Rng, rmin: f64, rmax: f64) -> Vec3 {
    let r = rng.gen_range(rmin..rmax);
    let th: f64 = rng.gen_range(0.0..1.2);
    let ph: f64 = rng.gen_range(0.0..(2.0 * PI));
    Vec3::new(
        r * th.sin() * ph.cos(),
        r * th.sin() * ph.sin(),
        r * th.cos(),
    )
}

pub fn random_scene(m: (usize, usize), k: usize, l: usize, seed: u64) -> Scene {
    let mut rng = rng(seed);
    let users: Vec<Vec3> = (0..k).map(|_| random_point(&mut rng, 30.0, 60.0)).collect();
    let scatterers: Vec<Vec3> = (0..l).map(|_| random_point(&mut rng, 10.0, 50.0)).collect();
    let coupling = (0..k * l)
        .map(|_| sample_coupling(0.9, &mut rng).unwrap())
        .collect();
    Scene {
        antennas: build_upa_positions(m.0, m.1, LAMBDA / 2.0).unwrap(),
        users,
        scatterers,
        coupling,
        pattern: PatternParams::new(2.0, LAMBDA, None).unwrap(),
        scatter_loss: 0.1,
        noise_w: vec![1e-11; k],
        rate_targets: vec![2.0; k],
        theta_max: PI / 5.0,
        seed,
    }
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> RotationMatrix {
    let y = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0)) * 0.4 + Matrix3::identity();
    project_so3(&y).unwrap()
}

pub fn random_tx(rng: &mut ChaCha8Rng) -> PolStateTx {
    PolStateTx::from_parts(
        rng.gen_range(0.0..1.0),
        rng.gen_range(0.0..6.0),
        rng.gen_range(0.0..6.0),
    )
    .unwrap()
}

pub fn random_rx(rng: &mut ChaCha8Rng) -> PolCombinerRx {
    PolCombinerRx::from_phases(rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0))
}

pub fn random_complex_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}
