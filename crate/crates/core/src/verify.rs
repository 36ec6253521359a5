//! Self-checks against independent oracles: grid searches for the line-of-sight
//! closed forms, central finite differences for the objective gradients, random
//! retraction chains for the manifolds and the duality fixed point for the
//! beamforming solver.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, Matrix3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::beamforming::{
    dc_rank_one_loop, duality_oracle, recover_beamformers, BeamformingProblem, DcOptions,
};
use crate::channel::{PolCombinerRx, PolStateTx, Propagation, C64};
use crate::geometry::{
    geodesic_from_ez, project_so3, rotation_from_axis_angle, RotationMatrix, Vec3,
};
use crate::harness::{generate_scene, SimConfig};
use crate::los::{eta_fixed, eta_rot, eta_star, projected_field};
use crate::manifold::{
    BoresightModel, ComplexCircleProduct, ComplexSphereProduct, LinearRx, LinearTx, Manifold,
    RealSphereProduct, RotationModel, SmoothingParams, So3Product, SubproblemData,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

impl std::str::FromStr for Level {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(crate::Error::Config(format!(
                "unknown verify level `{other}` (expected fast or full)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error and the tolerance it was held to.
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{status} {:<12} {} ({:.2}s)",
            self.name, self.detail, self.seconds
        )
    }
}

fn report(name: &'static str, start: Instant, worst: f64, tol: f64, what: &str) -> SuiteReport {
    SuiteReport {
        name,
        passed: worst.is_finite() && worst <= tol,
        detail: format!("{what} {worst:.3e} (tol {tol:.0e})"),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// All suites at the given level.
pub fn run_all(level: Level) -> Vec<SuiteReport> {
    let identity = |_: &str, s: f64| s;
    match level {
        Level::Fast => vec![
            los_suite(40, 10_000, 20_000, 1),
            gradient_suite(5, 2, &identity),
            manifold_suite(2_000, 3),
            beamforming_suite(10, 4),
        ],
        Level::Full => vec![
            los_suite(200, 10_000, 100_000, 1),
            gradient_suite(20, 2, &identity),
            manifold_suite(10_000, 3),
            beamforming_suite(50, 4),
        ],
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Largest |u₁* t₁ + u₂* t₂|² over a uniform grid of relative phases.
fn phase_grid_max(t: &Vector2<C64>, n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let u = Vector2::new(
                C64::new(1.0, 0.0),
                C64::from_polar(1.0, 2.0 * PI * i as f64 / n as f64),
            );
            u.dotc(t).norm_sqr()
        })
        .fold(0.0, f64::max)
}

/// Best efficiency over a roll grid with the boresight held on f.
fn roll_grid_max(f: &Vec3, n: usize) -> f64 {
    let base = geodesic_from_ez(f);
    (0..n)
        .map(|i| {
            let roll = rotation_from_axis_angle(&Vec3::z(), 2.0 * PI * i as f64 / n as f64)
                .expect("unit axis");
            eta_star(&projected_field(f, &base.compose(&roll)))
        })
        .fold(0.0, f64::max)
}

/// Closed-form efficiencies against phase and roll grid searches.
pub fn los_suite(directions: usize, phase_grid: usize, roll_grid: usize, seed: u64) -> SuiteReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..directions {
        let f = random_unit(&mut rng);
        let fixed = phase_grid_max(
            &projected_field(&f, &RotationMatrix::identity()),
            phase_grid,
        );
        worst = worst.max((eta_fixed(&f) - fixed).abs());
        worst = worst.max((eta_rot(&f) - roll_grid_max(&f, roll_grid)).abs());
    }
    report("los", start, worst, 1e-4, "max |closed form - grid|")
}

/// Random small instance (M = 2, K = 2, L = 2) with SINRs near the targets.
pub struct DeskInstance {
    prop: Propagation,
    r: Vec<RotationMatrix>,
    v: Vec<PolStateTx>,
    u: Vec<PolCombinerRx>,
    w: DMatrix<C64>,
    noise: Vec<f64>,
    iota: Vec<f64>,
}

impl DeskInstance {
    pub fn random(seed: u64) -> crate::Result<Self> {
        let cfg = SimConfig {
            mx: 2,
            my: 1,
            num_users: 2,
            num_scatterers: 2,
            ..Default::default()
        };
        let scene = generate_scene(&cfg, seed)?;
        let prop = Propagation::new(&scene)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let (m, k) = (scene.num_antennas(), scene.num_users());
        let r = (0..m)
            .map(|_| {
                project_so3(
                    &(Matrix3::identity() + Matrix3::from_fn(|_, _| rng.gen_range(-0.4..0.4))),
                )
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let v = (0..m)
            .map(|_| {
                PolStateTx::from_parts(
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..6.0),
                    rng.gen_range(0.0..6.0),
                )
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let u: Vec<PolCombinerRx> = (0..k)
            .map(|_| PolCombinerRx::from_phases(rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0)))
            .collect();
        let mut w = DMatrix::from_fn(m, k, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let h = prop.channels(&r, &v, &u);
        let gain = h.iter().map(|x| x.norm_squared()).sum::<f64>() / k as f64;
        // SINRs of a few units, where the threshold penalty is active
        w.scale_mut((3.0 * scene.noise_w[0] / gain).sqrt());
        Ok(DeskInstance {
            prop,
            r,
            v,
            u,
            w,
            noise: scene.noise_w.clone(),
            iota: scene.sinr_targets(),
        })
    }
}

/// Best relative mismatch of the central difference over h ∈ {1e-4, 1e-5, 1e-6}.
pub fn fd_relative_error(f: impl Fn(f64) -> f64, slope: f64) -> f64 {
    [1e-4, 1e-5, 1e-6]
        .iter()
        .map(|h| ((f(*h) - f(-*h)) / (2.0 * h) - slope).abs() / slope.abs().max(1e-10))
        .fold(f64::INFINITY, f64::min)
}

/// Directional derivatives of every block objective against finite differences.
///
/// `hook` receives each analytic slope with its block name and may alter it,
/// which lets callers confirm the suite catches a wrong gradient.
pub fn gradient_suite(instances: usize, seed: u64, hook: &dyn Fn(&str, f64) -> f64) -> SuiteReport {
    let start = Instant::now();
    let params = SmoothingParams::default();
    let mut worst = 0.0f64;
    for i in 0..instances {
        let s = seed.wrapping_mul(1000).wrapping_add(i as u64);
        let inst = match DeskInstance::random(s) {
            Ok(x) => x,
            Err(e) => {
                return SuiteReport {
                    name: "gradient",
                    passed: false,
                    detail: e.to_string(),
                    seconds: start.elapsed().as_secs_f64(),
                }
            }
        };
        for (_, err) in inst.gradient_errors(&params, s, hook) {
            if !(err <= worst) {
                worst = err;
            }
        }
    }
    report("gradient", start, worst, 1e-5, "max relative FD error")
}

impl DeskInstance {
    /// Relative finite-difference errors of the rotation, boresight, transmit and
    /// receive polarization gradients along random directions.
    pub fn gradient_errors(
        &self,
        params: &SmoothingParams,
        seed: u64,
        hook: &dyn Fn(&str, f64) -> f64,
    ) -> Vec<(&'static str, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd1e);
        let data = SubproblemData {
            prop: &self.prop,
            w: &self.w,
            noise: &self.noise,
            iota: &self.iota,
            cos_theta_max: 0.95,
        };
        let mut out = Vec::new();

        let rot = RotationModel::new(&self.prop, &self.v, &self.u);
        let r: Vec<Matrix3<f64>> = self.r.iter().map(|x| *x.matrix()).collect();
        let dir: Vec<Matrix3<f64>> = r
            .iter()
            .map(|_| Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let slope: f64 = rot
            .gradient(&r, &data, params)
            .iter()
            .zip(&dir)
            .map(|(g, d)| g.dot(d))
            .sum();
        let err = fd_relative_error(
            |t| {
                rot.value(
                    &r.iter()
                        .zip(&dir)
                        .map(|(a, d)| a + d * t)
                        .collect::<Vec<_>>(),
                    &data,
                    params,
                )
            },
            hook("rotation", slope),
        );
        out.push(("rotation", err));

        let bore = BoresightModel::new(&self.prop, &self.v, &self.u);
        let b: Vec<Vec3> = self.r.iter().map(|x| x.boresight()).collect();
        let db: Vec<Vec3> = b
            .iter()
            .map(|_| Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let slope: f64 = bore
            .gradient(&b, &data, params)
            .iter()
            .zip(&db)
            .map(|(g, d)| g.dot(d))
            .sum();
        let err = fd_relative_error(
            |t| {
                bore.value(
                    &b.iter()
                        .zip(&db)
                        .map(|(a, d)| a + d * t)
                        .collect::<Vec<_>>(),
                    &data,
                    params,
                )
            },
            hook("boresight", slope),
        );
        out.push(("boresight", err));

        let mut cdir = |n: usize| -> Vec<Vector2<C64>> {
            (0..n)
                .map(|_| {
                    Vector2::from_fn(|_, _| {
                        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    })
                })
                .collect()
        };
        let wirtinger = |g: &[Vector2<C64>], d: &[Vector2<C64>]| -> f64 {
            g.iter().zip(d).map(|(a, b)| 2.0 * a.dotc(b).re).sum()
        };
        let shift = |x: &[Vector2<C64>], d: &[Vector2<C64>], t: f64| -> Vec<Vector2<C64>> {
            x.iter().zip(d).map(|(a, b)| a + b * C64::from(t)).collect()
        };

        let tx = LinearTx::new(&self.prop, &self.r, &self.u);
        let v: Vec<Vector2<C64>> = self.v.iter().map(|x| x.0).collect();
        let dv = cdir(v.len());
        let slope = wirtinger(&tx.gradient(&v, &data, params), &dv);
        out.push((
            "tx_pol",
            fd_relative_error(
                |t| tx.value(&shift(&v, &dv, t), &data, params),
                hook("tx_pol", slope),
            ),
        ));

        let rx = LinearRx::new(&self.prop, &self.r, &self.v);
        let u: Vec<Vector2<C64>> = self.u.iter().map(|x| x.0).collect();
        let du = cdir(u.len());
        let slope = wirtinger(&rx.gradient(&u, &data, params), &du);
        out.push((
            "rx_pol",
            fd_relative_error(
                |t| rx.value(&shift(&u, &du, t), &data, params),
                hook("rx_pol", slope),
            ),
        ));
        out
    }
}

fn chain<M: Manifold>(
    manifold: &M,
    mut x: M::Point,
    steps: usize,
    random_dir: &mut dyn FnMut(&M::Point) -> M::Point,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut worst = manifold.residual(&x);
    for _ in 0..steps {
        let d = random_dir(&x);
        let xi = manifold.project_tangent(&x, &d);
        let t = 10f64.powf(rng.gen_range(-4.0..1.0));
        x = manifold.retract(&x, &xi, t);
        worst = worst.max(manifold.residual(&x));
    }
    worst
}

/// Chains of random tangent steps and retractions on every manifold.
pub fn manifold_suite(steps: usize, seed: u64) -> SuiteReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir_rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let mut worst = 0.0f64;

    let x0 = vec![Matrix3::identity(); 4];
    worst = worst.max(chain(
        &So3Product,
        x0,
        steps,
        &mut |x: &Vec<Matrix3<f64>>| {
            x.iter()
                .map(|_| Matrix3::from_fn(|_, _| dir_rng.gen_range(-1.0..1.0)))
                .collect()
        },
        &mut rng,
    ));

    let c2 = |r: &mut ChaCha8Rng| {
        Vector2::from_fn(|_, _| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
    };
    let v0 = vec![Vector2::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0)); 4];
    worst = worst.max(chain(
        &ComplexSphereProduct,
        v0,
        steps,
        &mut |x: &Vec<Vector2<C64>>| x.iter().map(|_| c2(&mut dir_rng)).collect(),
        &mut rng,
    ));
    let u0 = vec![Vector2::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0)); 3];
    worst = worst.max(chain(
        &ComplexCircleProduct,
        u0,
        steps,
        &mut |x: &Vec<Vector2<C64>>| x.iter().map(|_| c2(&mut dir_rng)).collect(),
        &mut rng,
    ));
    let b0 = vec![Vec3::z(); 4];
    worst = worst.max(chain(
        &RealSphereProduct,
        b0,
        steps,
        &mut |x: &Vec<Vec3>| {
            x.iter()
                .map(|_| Vec3::from_fn(|_, _| dir_rng.gen_range(-1.0..1.0)))
                .collect()
        },
        &mut rng,
    ));
    report("manifold", start, worst, 1e-9, "max constraint residual")
}

/// Outcome of one relaxation-plus-penalty solve checked against the duality oracle.
#[derive(Clone, Copy, Debug)]
pub struct BeamformingCheck {
    pub power_gap: f64,
    pub rank_residual: f64,
    pub sinr_violation: f64,
}

/// Random problem with M ≤ 8 antennas and K ≤ min(3, M) users.
pub fn random_beamforming_problem(rng: &mut ChaCha8Rng) -> BeamformingProblem {
    let m = rng.gen_range(1..=8usize);
    let k = rng.gen_range(1..=m.min(3));
    let scale = 10f64.powf(rng.gen_range(-5.0..-3.0));
    let h = (0..k)
        .map(|_| {
            nalgebra::DVector::from_fn(m, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
            })
        })
        .collect();
    let iota = (0..k).map(|_| rng.gen_range(0.5..7.0)).collect();
    BeamformingProblem::new(h, iota, vec![1e-11; k]).expect("consistent dimensions")
}

pub fn check_beamforming(problem: &BeamformingProblem) -> crate::Result<BeamformingCheck> {
    let opts = DcOptions::default();
    let out = dc_rank_one_loop(problem, &opts)?;
    let w = recover_beamformers(problem, &out.iterate.d, opts.tol)?;
    let (_, oracle) = duality_oracle(problem)?;
    Ok(BeamformingCheck {
        power_gap: (w.norm_squared() - oracle).abs() / oracle,
        rank_residual: out.residual,
        sinr_violation: problem.sinr_violation(&w),
    })
}

/// Relaxation + penalty + recovery against the uplink-downlink fixed point.
pub fn beamforming_suite(instances: usize, seed: u64) -> SuiteReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_gap = 0.0f64;
    let mut passed = true;
    let mut failure = None;
    for _ in 0..instances {
        let problem = random_beamforming_problem(&mut rng);
        match check_beamforming(&problem) {
            Ok(c) => {
                worst_gap = worst_gap.max(c.power_gap);
                passed &=
                    c.power_gap <= 0.01 && c.rank_residual <= 1e-6 && c.sinr_violation <= 1e-6;
            }
            Err(e) => {
                passed = false;
                failure = Some(e.to_string());
            }
        }
    }
    SuiteReport {
        name: "beamforming",
        passed,
        detail: failure
            .unwrap_or_else(|| format!("max relative power gap {worst_gap:.3e} (tol 1e-2)")),
        seconds: start.elapsed().as_secs_f64(),
    }
}
