//! Riemannian conjugate gradient on the constraint manifolds of the antenna
//! variables, together with the smoothed max-min SINR objectives it minimizes.
//!
//! Points and tangent vectors share one ambient representation. Tangent
//! projection doubles as the Riemannian gradient map and as vector transport.

mod objective;

pub use objective::{
    euclid_grad_boresight, euclid_grad_r, euclid_grad_u, euclid_grad_v, log_sum_exp_min,
    smooth_objective, softplus, AntennaState, Block, BoresightModel, LinearRx, LinearTx,
    RotationModel, SinrEval, SmoothingParams, SubproblemData,
};

use nalgebra::{Matrix3, Vector2};

use crate::channel::C64;
use crate::geometry::{project_so3, Vec3};

/// A product manifold embedded in a real inner-product space.
pub trait Manifold {
    type Point: Clone;

    /// Real Euclidean inner product of two ambient vectors.
    fn inner(&self, a: &Self::Point, b: &Self::Point) -> f64;

    /// `a·x + b·y` in the ambient space.
    fn lincomb(&self, a: f64, x: &Self::Point, b: f64, y: &Self::Point) -> Self::Point;

    /// Maps an ambient vector into the tangent space at `x`.
    fn project_tangent(&self, x: &Self::Point, g: &Self::Point) -> Self::Point;

    /// Maps `x + t·xi` back onto the manifold.
    fn retract(&self, x: &Self::Point, xi: &Self::Point, t: f64) -> Self::Point;

    /// Largest violation of the defining constraints at `x`.
    fn residual(&self, x: &Self::Point) -> f64;

    fn riem_grad(&self, x: &Self::Point, euclid_grad: &Self::Point) -> Self::Point {
        self.project_tangent(x, euclid_grad)
    }

    /// Projection transport.
    fn vector_transport(
        &self,
        _old: &Self::Point,
        new: &Self::Point,
        xi: &Self::Point,
    ) -> Self::Point {
        self.project_tangent(new, xi)
    }

    fn norm(&self, v: &Self::Point) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }
}

fn sym3(a: &Matrix3<f64>) -> Matrix3<f64> {
    (a + a.transpose()) * 0.5
}

/// SO(3)^M with the Frobenius metric.
#[derive(Clone, Copy, Debug, Default)]
pub struct So3Product;

impl Manifold for So3Product {
    type Point = Vec<Matrix3<f64>>;

    fn inner(&self, a: &Self::Point, b: &Self::Point) -> f64 {
        a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
    }

    fn lincomb(&self, a: f64, x: &Self::Point, b: f64, y: &Self::Point) -> Self::Point {
        x.iter().zip(y).map(|(p, q)| p * a + q * b).collect()
    }

    /// G − R sym(RᵀG)
    fn project_tangent(&self, x: &Self::Point, g: &Self::Point) -> Self::Point {
        x.iter()
            .zip(g)
            .map(|(r, gm)| gm - r * sym3(&(r.transpose() * gm)))
            .collect()
    }

    fn retract(&self, x: &Self::Point, xi: &Self::Point, t: f64) -> Self::Point {
        x.iter()
            .zip(xi)
            .map(|(r, d)| match project_so3(&(r + d * t)) {
                Ok(q) => *q.matrix(),
                Err(_) => *r,
            })
            .collect()
    }

    fn residual(&self, x: &Self::Point) -> f64 {
        x.iter()
            .map(|r| {
                let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
                orth.max((r.determinant() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }
}

fn cinner(a: &[Vector2<C64>], b: &[Vector2<C64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dotc(y).re).sum()
}

fn clincomb(a: f64, x: &[Vector2<C64>], b: f64, y: &[Vector2<C64>]) -> Vec<Vector2<C64>> {
    x.iter()
        .zip(y)
        .map(|(p, q)| p * C64::from(a) + q * C64::from(b))
        .collect()
}

/// Product of unit spheres in C².
#[derive(Clone, Copy, Debug, Default)]
pub struct ComplexSphereProduct;

impl Manifold for ComplexSphereProduct {
    type Point = Vec<Vector2<C64>>;

    fn inner(&self, a: &Self::Point, b: &Self::Point) -> f64 {
        cinner(a, b)
    }

    fn lincomb(&self, a: f64, x: &Self::Point, b: f64, y: &Self::Point) -> Self::Point {
        clincomb(a, x, b, y)
    }

    /// (I − vvᴴ) G, which also removes the phase direction i·v.
    fn project_tangent(&self, x: &Self::Point, g: &Self::Point) -> Self::Point {
        x.iter().zip(g).map(|(v, gm)| gm - v * v.dotc(gm)).collect()
    }

    fn retract(&self, x: &Self::Point, xi: &Self::Point, t: f64) -> Self::Point {
        x.iter()
            .zip(xi)
            .map(|(v, d)| {
                let y = v + d * C64::from(t);
                let n = y.norm();
                if n > 0.0 {
                    y.unscale(n)
                } else {
                    *v
                }
            })
            .collect()
    }

    fn residual(&self, x: &Self::Point) -> f64 {
        x.iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Complex circle manifold: every entry has unit modulus.
#[derive(Clone, Copy, Debug, Default)]
pub struct ComplexCircleProduct;

impl Manifold for ComplexCircleProduct {
    type Point = Vec<Vector2<C64>>;

    fn inner(&self, a: &Self::Point, b: &Self::Point) -> f64 {
        cinner(a, b)
    }

    fn lincomb(&self, a: f64, x: &Self::Point, b: f64, y: &Self::Point) -> Self::Point {
        clincomb(a, x, b, y)
    }

    /// G − Re{G ⊙ u*} ⊙ u
    fn project_tangent(&self, x: &Self::Point, g: &Self::Point) -> Self::Point {
        x.iter()
            .zip(g)
            .map(|(u, gk)| Vector2::from_fn(|j, _| gk[j] - u[j] * (gk[j] * u[j].conj()).re))
            .collect()
    }

    /// Entry-wise phase projection exp(j∠(u + t·ξ)).
    fn retract(&self, x: &Self::Point, xi: &Self::Point, t: f64) -> Self::Point {
        x.iter()
            .zip(xi)
            .map(|(u, d)| {
                Vector2::from_fn(|j, _| {
                    let y = u[j] + d[j] * t;
                    if y.norm() > 0.0 {
                        C64::from_polar(1.0, y.arg())
                    } else {
                        u[j]
                    }
                })
            })
            .collect()
    }

    fn residual(&self, x: &Self::Point) -> f64 {
        x.iter()
            .flat_map(|u| u.iter().map(|z| (z.norm() - 1.0).abs()))
            .fold(0.0, f64::max)
    }
}

/// Product of real unit spheres S², used for boresight-only steering.
#[derive(Clone, Copy, Debug, Default)]
pub struct RealSphereProduct;

impl Manifold for RealSphereProduct {
    type Point = Vec<Vec3>;

    fn inner(&self, a: &Self::Point, b: &Self::Point) -> f64 {
        a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
    }

    fn lincomb(&self, a: f64, x: &Self::Point, b: f64, y: &Self::Point) -> Self::Point {
        x.iter().zip(y).map(|(p, q)| p * a + q * b).collect()
    }

    fn project_tangent(&self, x: &Self::Point, g: &Self::Point) -> Self::Point {
        x.iter().zip(g).map(|(b, gm)| gm - b * b.dot(gm)).collect()
    }

    fn retract(&self, x: &Self::Point, xi: &Self::Point, t: f64) -> Self::Point {
        x.iter()
            .zip(xi)
            .map(|(b, d)| {
                let y = b + d * t;
                let n = y.norm();
                if n > 0.0 {
                    y / n
                } else {
                    *b
                }
            })
            .collect()
    }

    fn residual(&self, x: &Self::Point) -> f64 {
        x.iter().map(|b| (b.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct RcgOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Stop when an accepted step lowers the objective by less than this, relative.
    pub f_tol: f64,
    pub armijo_c: f64,
    pub max_backtracks: usize,
    /// Cap on the ambient length of a trial step.
    pub max_step: f64,
}

impl Default for RcgOptions {
    fn default() -> Self {
        RcgOptions {
            max_iters: 200,
            grad_tol: 1e-8,
            f_tol: 1e-12,
            armijo_c: 1e-4,
            max_backtracks: 30,
            max_step: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RcgResult<P> {
    pub point: P,
    pub value: f64,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    /// The line search failed to find a decrease before the stopping test fired.
    pub degraded: bool,
}

/// Polak–Ribière+ conjugate gradient with Armijo backtracking.
///
/// `cost` evaluates the objective and `egrad` its Euclidean gradient in the
/// real ambient metric of `manifold`.
pub fn rcg_minimize<M, F, G>(
    manifold: &M,
    mut cost: F,
    mut egrad: G,
    x0: M::Point,
    opts: &RcgOptions,
) -> RcgResult<M::Point>
where
    M: Manifold,
    F: FnMut(&M::Point) -> f64,
    G: FnMut(&M::Point) -> M::Point,
{
    let mut x = x0;
    let mut fx = cost(&x);
    let mut eg = egrad(&x);
    let mut g = manifold.riem_grad(&x, &eg);
    let mut gn = manifold.norm(&g);
    let mut dir = manifold.lincomb(-1.0, &g, 0.0, &g);
    let mut trace = vec![fx];
    let mut step_len = opts.max_step;
    let mut degraded = false;
    let mut iterations = 0;

    while iterations < opts.max_iters && gn > opts.grad_tol && fx.is_finite() {
        let mut slope = manifold.inner(&eg, &dir);
        if !(slope < 0.0) {
            dir = manifold.lincomb(-1.0, &g, 0.0, &g);
            slope = manifold.inner(&eg, &dir);
            if !(slope < 0.0) {
                break;
            }
        }
        let dn = manifold.norm(&dir);
        let mut t = step_len.min(opts.max_step) / dn;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let y = manifold.retract(&x, &dir, t);
            let fy = cost(&y);
            if fy.is_finite() && fy <= fx + opts.armijo_c * t * slope {
                accepted = Some((y, fy));
                break;
            }
            t *= 0.5;
        }
        let Some((y, fy)) = accepted else {
            degraded = true;
            break;
        };
        iterations += 1;
        step_len = 2.0 * t * dn;
        let decrease = fx - fy;
        let eg_new = egrad(&y);
        let g_new = manifold.riem_grad(&y, &eg_new);
        let g_old_t = manifold.vector_transport(&x, &y, &g);
        let dir_t = manifold.vector_transport(&x, &y, &dir);
        let diff = manifold.lincomb(1.0, &g_new, -1.0, &g_old_t);
        let beta = (manifold.inner(&g_new, &diff) / (gn * gn)).max(0.0);
        dir = manifold.lincomb(-1.0, &g_new, beta, &dir_t);
        x = y;
        fx = fy;
        eg = eg_new;
        g = g_new;
        gn = manifold.norm(&g);
        trace.push(fx);
        if decrease <= opts.f_tol * (1.0 + fx.abs()) {
            break;
        }
    }
    RcgResult {
        point: x,
        value: fx,
        trace,
        iterations,
        grad_norm: gn,
        degraded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::los::eta_star;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let y = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        *project_so3(&(y + Matrix3::identity())).unwrap().matrix()
    }

    fn random_c2(rng: &mut ChaCha8Rng) -> Vector2<C64> {
        Vector2::from_fn(|_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn so3_projection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = vec![random_rotation(&mut rng)];
        let g = vec![Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0))];
        let t = So3Product.riem_grad(&r, &g);
        let omega = r[0].transpose() * t[0];
        assert!((omega + omega.transpose()).abs().max() < 1e-12);
        let again = So3Product.project_tangent(&r, &t);
        assert!((again[0] - t[0]).abs().max() < 1e-12);
        let same = So3Product.vector_transport(&r, &r, &t);
        assert!((same[0] - t[0]).abs().max() < 1e-12);
    }

    #[test]
    fn sphere_projection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = vec![random_c2(&mut rng).normalize()];
        let radial = vec![v[0] * C64::new(0.3, -1.2)];
        assert!(ComplexSphereProduct.riem_grad(&v, &radial)[0].norm() < 1e-14);
        let g = vec![random_c2(&mut rng)];
        let t = ComplexSphereProduct.riem_grad(&v, &g);
        assert!(v[0].dotc(&t[0]).norm() < 1e-14);
        assert!(ComplexSphereProduct.norm(&t) <= ComplexSphereProduct.norm(&g) + 1e-14);
    }

    #[test]
    fn circle_projection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = vec![Vector2::new(
            C64::from_polar(1.0, 0.4),
            C64::from_polar(1.0, -2.0),
        )];
        let g = vec![random_c2(&mut rng)];
        let t = ComplexCircleProduct.riem_grad(&u, &g);
        for j in 0..2 {
            assert!((t[0][j] * u[0][j].conj()).re.abs() < 1e-14);
        }
    }

    #[test]
    fn so3_model_problem_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target = random_rotation(&mut rng);
        let axis = Vec3::new(0.3, -0.5, 0.8).normalize();
        let nudge = crate::geometry::rotation_from_axis_angle(&axis, 0.4).unwrap();
        let x0 = vec![target * nudge.matrix()];
        let res = rcg_minimize(
            &So3Product,
            |x: &Vec<Matrix3<f64>>| (x[0] - target).norm_squared(),
            |x: &Vec<Matrix3<f64>>| vec![(x[0] - target) * 2.0],
            x0,
            &RcgOptions {
                grad_tol: 1e-12,
                f_tol: 0.0,
                ..RcgOptions::default()
            },
        );
        assert!((res.point[0] - target).norm() < 1e-6);
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(So3Product.residual(&res.point) < 1e-10);
    }

    #[test]
    fn sphere_dominant_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_c2(&mut rng);
        let res = rcg_minimize(
            &ComplexSphereProduct,
            |v: &Vec<Vector2<C64>>| -a.dotc(&v[0]).norm_sqr(),
            |v: &Vec<Vector2<C64>>| vec![-(a * a.dotc(&v[0])) * C64::from(2.0)],
            vec![Vector2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0))],
            &RcgOptions {
                f_tol: 0.0,
                grad_tol: 1e-12,
                ..RcgOptions::default()
            },
        );
        assert_relative_eq!(-res.value, a.norm_squared(), max_relative = 1e-9);
        assert_relative_eq!(a.dotc(&res.point[0]).norm(), a.norm(), max_relative = 1e-9);
    }

    #[test]
    fn circle_recovers_phase_aligned_efficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let t = random_c2(&mut rng);
            let res = rcg_minimize(
                &ComplexCircleProduct,
                |u: &Vec<Vector2<C64>>| -u[0].dotc(&t).norm_sqr(),
                // ∂/∂u* of −|uᴴt|² is −t (tᴴu), doubled for the real metric
                |u: &Vec<Vector2<C64>>| vec![-(t * t.dotc(&u[0])) * C64::from(2.0)],
                vec![Vector2::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0))],
                &RcgOptions {
                    f_tol: 0.0,
                    grad_tol: 1e-10,
                    ..RcgOptions::default()
                },
            );
            assert!((-res.value - eta_star(&t)).abs() < 1e-6);
        }
    }

    #[test]
    fn random_steps_keep_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut r = vec![Matrix3::identity(); 2];
        let mut v = vec![Vector2::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0)); 2];
        let mut u = vec![Vector2::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0)); 2];
        for _ in 0..2000 {
            let t = rng.gen_range(0.0..10.0);
            let gr: Vec<_> = (0..2)
                .map(|_| Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            r = So3Product.retract(&r, &So3Product.riem_grad(&r, &gr), t);
            let gv: Vec<_> = (0..2).map(|_| random_c2(&mut rng)).collect();
            v = ComplexSphereProduct.retract(&v, &ComplexSphereProduct.riem_grad(&v, &gv), t);
            let gu: Vec<_> = (0..2).map(|_| random_c2(&mut rng)).collect();
            u = ComplexCircleProduct.retract(&u, &ComplexCircleProduct.riem_grad(&u, &gu), t);
        }
        assert!(So3Product.residual(&r) <= 1e-9);
        assert!(ComplexSphereProduct.residual(&v) <= 1e-9);
        assert!(ComplexCircleProduct.residual(&u) <= 1e-9);
    }

    proptest! {
        #[test]
        fn transport_is_tangent_and_nonexpansive(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = vec![random_rotation(&mut rng)];
            let b = vec![random_rotation(&mut rng)];
            let xi = So3Product.riem_grad(&a, &vec![Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0))]);
            let moved = So3Product.vector_transport(&a, &b, &xi);
            let omega = b[0].transpose() * moved[0];
            prop_assert!((omega + omega.transpose()).abs().max() < 1e-10);
            prop_assert!(So3Product.norm(&moved) <= So3Product.norm(&xi) + 1e-12);

            let v0 = vec![random_c2(&mut rng).normalize()];
            let v1 = vec![random_c2(&mut rng).normalize()];
            let d = ComplexSphereProduct.riem_grad(&v0, &vec![random_c2(&mut rng)]);
            let moved = ComplexSphereProduct.vector_transport(&v0, &v1, &d);
            prop_assert!(v1[0].dotc(&moved[0]).norm() < 1e-10);
            prop_assert!(ComplexSphereProduct.norm(&moved) <= ComplexSphereProduct.norm(&d) + 1e-12);
        }

        #[test]
        fn retraction_restores_invariants(seed in 0u64..10_000, t in 0.0f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = vec![Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 1.0).normalize()];
            let d = RealSphereProduct.riem_grad(&b, &vec![Vec3::new(rng.gen_range(-1.0..1.0), 0.3, -0.2)]);
            prop_assert!(RealSphereProduct.residual(&RealSphereProduct.retract(&b, &d, t)) < 1e-10);
            let u = vec![Vector2::new(C64::from_polar(1.0, 0.1), C64::from_polar(1.0, 2.0))];
            let gu = ComplexCircleProduct.riem_grad(&u, &vec![random_c2(&mut rng)]);
            prop_assert!(ComplexCircleProduct.residual(&ComplexCircleProduct.retract(&u, &gu, t)) < 1e-10);
        }
    }
}
