use nalgebra::{DMatrix, DVector};

use super::{tight_powers, BeamformingProblem};
use crate::channel::C64;
use crate::error::{Error, Result};

const MAX_ITER: usize = 20_000;
const REL_TOL: f64 = 1e-13;

fn uplink_covariance(g: &[DVector<C64>], lambda: &[f64]) -> DMatrix<C64> {
    let m = g[0].len();
    let mut cov = DMatrix::identity(m, m);
    for (gj, lj) in g.iter().zip(lambda) {
        cov += (gj * gj.adjoint()) * C64::from(*lj);
    }
    cov
}

/// Uplink-downlink duality solver.
///
/// Virtual uplink powers follow the fixed point
/// λ_k = 1 / ((1 + 1/ι_k) g_kᴴ (I + Σ_j λ_j g_j g_jᴴ)⁻¹ g_k) on noise-whitened
/// channels g_k = h_k/σ_k. The MMSE receive filters give the downlink
/// directions and the downlink powers solve the tight SINR equations.
/// Returns the beamformers as columns and their total power.
pub fn duality_oracle(problem: &BeamformingProblem) -> Result<(DMatrix<C64>, f64)> {
    let k = problem.num_users();
    let g: Vec<DVector<C64>> = problem
        .channels
        .iter()
        .zip(&problem.noise)
        .map(|(h, s2)| h.unscale(s2.sqrt()))
        .collect();
    let iota = &problem.sinr_targets;

    let mut lambda: Vec<f64> = g
        .iter()
        .zip(iota)
        .map(|(gk, t)| t / gk.norm_squared())
        .collect();
    let start: f64 = lambda.iter().sum();
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let chol = uplink_covariance(&g, &lambda)
            .cholesky()
            .ok_or_else(|| Error::Numerical("uplink covariance not positive definite".into()))?;
        let next: Vec<f64> = g
            .iter()
            .zip(iota)
            .map(|(gk, t)| 1.0 / ((1.0 + 1.0 / t) * gk.dotc(&chol.solve(gk)).re))
            .collect();
        let change = next
            .iter()
            .zip(&lambda)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / next.iter().sum::<f64>();
        lambda = next;
        let total: f64 = lambda.iter().sum();
        if !total.is_finite() || total > 1e12 * start {
            return Err(Error::Infeasible {
                min_slack: f64::NAN,
            });
        }
        if change <= REL_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Infeasible {
            min_slack: f64::NAN,
        });
    }
    let chol = uplink_covariance(&g, &lambda)
        .cholesky()
        .ok_or_else(|| Error::Numerical("uplink covariance not positive definite".into()))?;
    let dirs: Vec<DVector<C64>> = g
        .iter()
        .map(|gk| {
            let f = chol.solve(gk);
            f.unscale(f.norm())
        })
        .collect();
    let powers = tight_powers(problem, &dirs).ok_or(Error::Infeasible {
        min_slack: f64::NAN,
    })?;
    let cols: Vec<DVector<C64>> = dirs
        .iter()
        .zip(&powers)
        .map(|(d, p)| d * C64::from(p.sqrt()))
        .collect();
    let w = DMatrix::from_columns(&cols);
    let power = powers.iter().sum();
    debug_assert_eq!(w.ncols(), k);
    Ok((w, power))
}
