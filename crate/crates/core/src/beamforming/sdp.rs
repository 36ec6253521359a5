//! Small dense block-diagonal SDP solver.
//!
//! Primal `min ⟨C, X⟩  s.t. ⟨A_i, X⟩ = b_i, X ⪰ 0`, dual
//! `max bᵀy  s.t. Σ y_i A_i + Z = C, Z ⪰ 0`. Infeasible-start primal-dual
//! path following with the HKM search direction and a Mehrotra
//! predictor-corrector. Every block is a dense symmetric matrix; 1×1 blocks
//! play the role of nonnegative scalars.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// One constraint: the blocks it touches and the symmetric coefficient on each.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub terms: Vec<(usize, DMatrix<f64>)>,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct BlockSdp {
    pub c: Vec<DMatrix<f64>>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Debug)]
pub struct SdpSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    /// Looser tolerances accepted when progress stalls.
    pub fallback_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings {
            gap_tol: 1e-9,
            feas_tol: 1e-9,
            fallback_tol: 1e-7,
            max_iter: 120,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub rel_gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub iterations: usize,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn block_inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| inner(x, y)).sum()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn frob(blocks: &[DMatrix<f64>]) -> f64 {
    blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
}

/// Largest α with M + α dM ⪰ 0, given a Cholesky factor of M.
fn max_step(chol: &Cholesky<f64, nalgebra::Dyn>, dm: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let s = sym(&linv * dm * linv.transpose());
    let lmin = SymmetricEigen::new(s).eigenvalues.min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

impl BlockSdp {
    fn dims(&self) -> Vec<usize> {
        self.c.iter().map(|c| c.nrows()).collect()
    }

    fn validate(&self) -> Result<()> {
        let dims = self.dims();
        for c in &self.c {
            if !c.is_square() {
                return Err(Error::Dimension("cost blocks must be square".into()));
            }
        }
        for con in &self.constraints {
            for (b, a) in &con.terms {
                if *b >= dims.len() || a.nrows() != dims[*b] || a.ncols() != dims[*b] {
                    return Err(Error::Dimension(
                        "constraint block does not match the cost layout".into(),
                    ));
                }
            }
        }
        if self.constraints.is_empty() {
            return Err(Error::invalid("SDP needs at least one constraint"));
        }
        Ok(())
    }

    fn apply(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints
                .iter()
                .map(|con| con.terms.iter().map(|(b, a)| inner(a, &x[*b])).sum::<f64>()),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self
            .c
            .iter()
            .map(|c| DMatrix::zeros(c.nrows(), c.ncols()))
            .collect();
        for (i, con) in self.constraints.iter().enumerate() {
            for (b, a) in &con.terms {
                out[*b] += a * y[i];
            }
        }
        out
    }

    pub fn solve(&self, settings: &SdpSettings) -> Result<SdpSolution> {
        self.validate()?;
        let dims = self.dims();
        let n: usize = dims.iter().sum();
        let m = self.constraints.len();
        let b = DVector::from_iterator(m, self.constraints.iter().map(|c| c.rhs));
        let b_norm = b.norm();
        let c_norm = frob(&self.c);

        // Scaled identity start in the style of SDPT3.
        let nf = n as f64;
        let mut xi = 10f64.max(nf.sqrt());
        let mut eta = 10f64.max(nf.sqrt()).max(c_norm);
        for con in &self.constraints {
            let a_norm = con
                .terms
                .iter()
                .map(|(_, a)| a.norm_squared())
                .sum::<f64>()
                .sqrt();
            xi = xi.max(nf * (1.0 + con.rhs.abs()) / (1.0 + a_norm));
            eta = eta.max(a_norm);
        }
        let mut x: Vec<DMatrix<f64>> = dims.iter().map(|&d| DMatrix::identity(d, d) * xi).collect();
        let mut z: Vec<DMatrix<f64>> = dims
            .iter()
            .map(|&d| DMatrix::identity(d, d) * eta)
            .collect();
        let mut y = DVector::zeros(m);

        let mut best: Option<SdpSolution> = None;
        for iter in 0..=settings.max_iter {
            let ax = self.apply(&x);
            let rp = &b - &ax;
            let aty = self.adjoint(&y);
            let rd: Vec<DMatrix<f64>> = self
                .c
                .iter()
                .zip(&z)
                .zip(&aty)
                .map(|((c, zb), ab)| c - zb - ab)
                .collect();
            let pobj = block_inner(&self.c, &x);
            let dobj = b.dot(&y);
            let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let pinf = rp.norm() / (1.0 + b_norm);
            let dinf = frob(&rd) / (1.0 + c_norm);
            let snapshot = || SdpSolution {
                x: x.clone(),
                y: y.clone(),
                z: z.clone(),
                primal_obj: pobj,
                dual_obj: dobj,
                rel_gap,
                primal_infeas: pinf,
                dual_infeas: dinf,
                iterations: iter,
            };
            let score = |s: &SdpSolution| s.rel_gap.max(s.primal_infeas).max(s.dual_infeas);
            if rel_gap <= settings.gap_tol && pinf <= settings.feas_tol && dinf <= settings.feas_tol
            {
                return Ok(snapshot());
            }
            let current = snapshot();
            if best.as_ref().is_none_or(|s| score(&current) < score(s)) {
                best = Some(current);
            }
            if dobj.abs() > 1e12 * (1.0 + c_norm) && dinf <= 1e-6 {
                return Err(Error::Infeasible {
                    min_slack: f64::NAN,
                });
            }
            if iter == settings.max_iter {
                break;
            }

            let zchol: Vec<_> = z
                .iter()
                .map(|zb| Cholesky::new(zb.clone()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Numerical("dual slack lost definiteness".into()))?;
            let xchol: Vec<_> = x
                .iter()
                .map(|xb| Cholesky::new(xb.clone()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Numerical("primal iterate lost definiteness".into()))?;
            let zinv: Vec<DMatrix<f64>> = zchol.iter().map(|c| c.inverse()).collect();
            let mu = block_inner(&x, &z) / nf;

            // Schur complement O_ij = Σ_b tr(A_ib X_b A_jb Z_b⁻¹).
            let mut schur = DMatrix::zeros(m, m);
            let mut scratch: Vec<Vec<(usize, DMatrix<f64>)>> = Vec::with_capacity(m);
            for con in &self.constraints {
                scratch.push(
                    con.terms
                        .iter()
                        .map(|(blk, a)| (*blk, &x[*blk] * a * &zinv[*blk]))
                        .collect(),
                );
            }
            for i in 0..m {
                for j in 0..=i {
                    let mut s = 0.0;
                    for (bi, ai) in &self.constraints[i].terms {
                        for (bj, t) in &scratch[j] {
                            if bi == bj {
                                s += inner(ai, t);
                            }
                        }
                    }
                    schur[(i, j)] = s;
                    schur[(j, i)] = s;
                }
            }
            let schur_chol = Cholesky::new(schur.clone());
            let solve_schur = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
                match &schur_chol {
                    Some(c) => Some(c.solve(rhs)),
                    None => schur.clone().lu().solve(rhs),
                }
            };

            let x_rd_zinv: Vec<DMatrix<f64>> = x
                .iter()
                .zip(&rd)
                .zip(&zinv)
                .map(|((xb, r), zi)| xb * r * zi)
                .collect();
            let a_xrdz = self.apply(&x_rd_zinv);

            let direction = |kterm: &[DMatrix<f64>]| -> Option<(Vec<DMatrix<f64>>, DVector<f64>, Vec<DMatrix<f64>>)> {
                let rhs = &rp - self.apply(kterm) + &a_xrdz;
                let dy = solve_schur(&rhs)?;
                let atdy = self.adjoint(&dy);
                let dz: Vec<DMatrix<f64>> = rd.iter().zip(&atdy).map(|(r, a)| r - a).collect();
                let dx: Vec<DMatrix<f64>> = kterm
                    .iter()
                    .zip(&x)
                    .zip(&dz)
                    .zip(&zinv)
                    .map(|(((k, xb), dzb), zi)| k - sym(xb * dzb * zi))
                    .collect();
                Some((dx, dy, dz))
            };
            let steps = |dx: &[DMatrix<f64>], dz: &[DMatrix<f64>]| -> (f64, f64) {
                let ap = xchol
                    .iter()
                    .zip(dx)
                    .map(|(c, d)| max_step(c, d))
                    .fold(f64::INFINITY, f64::min);
                let ad = zchol
                    .iter()
                    .zip(dz)
                    .map(|(c, d)| max_step(c, d))
                    .fold(f64::INFINITY, f64::min);
                (ap, ad)
            };

            let neg_x: Vec<DMatrix<f64>> = x.iter().map(|xb| -xb).collect();
            let Some((dxa, _, dza)) = direction(&neg_x) else {
                break;
            };
            let (apa, ada) = steps(&dxa, &dza);
            let (apa, ada) = (apa.min(1.0), ada.min(1.0));
            let x_aff: Vec<DMatrix<f64>> = x.iter().zip(&dxa).map(|(a, d)| a + d * apa).collect();
            let z_aff: Vec<DMatrix<f64>> = z.iter().zip(&dza).map(|(a, d)| a + d * ada).collect();
            let mu_aff = block_inner(&x_aff, &z_aff) / nf;
            let expon = 1f64.max(3.0 * apa.min(ada).powi(2));
            let sigma = (mu_aff / mu).max(0.0).powf(expon).min(1.0);

            let kterm: Vec<DMatrix<f64>> = x
                .iter()
                .zip(&zinv)
                .zip(dxa.iter().zip(&dza))
                .map(|((xb, zi), (dxb, dzb))| zi * (sigma * mu) - xb - sym(dxb * dzb * zi))
                .collect();
            let Some((dx, dy, dz)) = direction(&kterm) else {
                break;
            };
            let (ap, ad) = steps(&dx, &dz);
            let gamma = 0.9 + 0.09 * apa.min(ada);
            let ap = (gamma * ap).min(1.0);
            let ad = (gamma * ad).min(1.0);
            if ap < 1e-12 && ad < 1e-12 {
                break;
            }
            for (xb, d) in x.iter_mut().zip(&dx) {
                *xb = sym(&*xb + d * ap);
            }
            for (zb, d) in z.iter_mut().zip(&dz) {
                *zb = sym(&*zb + d * ad);
            }
            y += dy * ad;
        }

        let best = best.ok_or_else(|| Error::Numerical("SDP produced no iterate".into()))?;
        if best.rel_gap <= settings.fallback_tol
            && best.primal_infeas <= settings.fallback_tol
            && best.dual_infeas <= settings.fallback_tol
        {
            Ok(best)
        } else {
            Err(Error::NonConvergence {
                iterations: best.iterations,
                reason: format!(
                    "gap {:.2e}, primal infeasibility {:.2e}, dual infeasibility {:.2e}",
                    best.rel_gap, best.primal_infeas, best.dual_infeas
                ),
            })
        }
    }
}
