//! Minimum-power downlink beamforming under per-user SINR targets.
//!
//! The rank-one outer products w_k w_kᴴ are relaxed to PSD matrices D_k. A
//! difference-of-convex penalty λ₀ Σ (tr D_k − ‖D_k‖₂), linearized at the
//! previous dominant eigenvectors, drives the relaxed solution back to rank
//! one. Each convex step is embedded as a real block SDP and handed to
//! [`sdp::BlockSdp`]. [`duality_oracle`] solves the same problem by an
//! independent uplink fixed point.

mod oracle;
pub mod sdp;

pub use oracle::duality_oracle;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::channel::{sinr_and_rate, C64};
use crate::error::{Error, Result};
use sdp::{BlockSdp, Constraint, SdpSettings};

/// Channels h_k, SINR targets ι_k and noise powers σ_k².
#[derive(Clone, Debug)]
pub struct BeamformingProblem {
    pub channels: Vec<DVector<C64>>,
    pub sinr_targets: Vec<f64>,
    pub noise: Vec<f64>,
}

impl BeamformingProblem {
    pub fn new(
        channels: Vec<DVector<C64>>,
        sinr_targets: Vec<f64>,
        noise: Vec<f64>,
    ) -> Result<Self> {
        let k = channels.len();
        if k == 0 {
            return Err(Error::invalid("beamforming needs at least one user"));
        }
        if sinr_targets.len() != k || noise.len() != k {
            return Err(Error::Dimension(
                "one SINR target and noise power per user required".into(),
            ));
        }
        let m = channels[0].len();
        if m == 0 || channels.iter().any(|h| h.len() != m) {
            return Err(Error::Dimension(
                "all channels must have the same nonzero length".into(),
            ));
        }
        if channels
            .iter()
            .any(|h| !(h.norm() > 0.0) || h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
        {
            return Err(Error::invalid("channels must be finite and nonzero"));
        }
        if sinr_targets.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::invalid("SINR targets must be positive"));
        }
        if noise.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("noise powers must be positive"));
        }
        Ok(BeamformingProblem {
            channels,
            sinr_targets,
            noise,
        })
    }

    pub fn num_users(&self) -> usize {
        self.channels.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.channels[0].len()
    }

    /// SINR of every user under the beamformers in the columns of `w`.
    pub fn sinrs(&self, w: &DMatrix<C64>) -> Vec<f64> {
        sinr_and_rate(w, &self.channels, &self.noise)
            .into_iter()
            .map(|(g, _)| g)
            .collect()
    }

    /// Largest relative SINR shortfall max_k (1 − γ_k/ι_k), clipped at 0.
    pub fn sinr_violation(&self, w: &DMatrix<C64>) -> f64 {
        self.sinrs(w)
            .iter()
            .zip(&self.sinr_targets)
            .map(|(g, t)| (1.0 - g / t).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Noise-whitened channels rescaled so their mean squared norm is one.
struct Normalized {
    g: Vec<DVector<C64>>,
    iota: Vec<f64>,
    /// D in watts equals D̃ / scale.
    scale: f64,
}

impl Normalized {
    fn new(problem: &BeamformingProblem) -> Self {
        let white: Vec<DVector<C64>> = problem
            .channels
            .iter()
            .zip(&problem.noise)
            .map(|(h, s2)| h.unscale(s2.sqrt()))
            .collect();
        let scale = white.iter().map(|g| g.norm_squared()).sum::<f64>() / white.len() as f64;
        let g = white.iter().map(|g| g.unscale(scale.sqrt())).collect();
        Normalized {
            g,
            iota: problem.sinr_targets.clone(),
            scale,
        }
    }
}

/// Real symmetric embedding [[Re H, −Im H], [Im H, Re H]] of a Hermitian matrix.
pub fn embed_hermitian(h: &DMatrix<C64>) -> DMatrix<f64> {
    let m = h.nrows();
    DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        let z = h[(i % m, j % m)];
        match (i < m, j < m) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Inverse of [`embed_hermitian`] that also symmetrizes a generic real block.
pub fn extract_hermitian(x: &DMatrix<f64>) -> DMatrix<C64> {
    let m = x.nrows() / 2;
    DMatrix::from_fn(m, m, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + m, j + m)]);
        let im = 0.5 * (x[(i + m, j)] - x[(i, j + m)]);
        C64::new(re, im)
    })
}

fn outer(g: &DVector<C64>) -> DMatrix<C64> {
    g * g.adjoint()
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Largest eigenpair of a Hermitian matrix.
pub fn dominant_eigen(d: &DMatrix<C64>) -> (f64, DVector<C64>) {
    let eig = SymmetricEigen::new(d.clone());
    let (idx, lmax) =
        eig.eigenvalues
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            );
    (lmax, eig.eigenvectors.column(idx).into_owned())
}

/// Σ_k (tr D_k − λ_max(D_k)) / Σ_k tr D_k.
pub fn rank_residual(d: &[DMatrix<C64>]) -> f64 {
    let total: f64 = d.iter().map(|dk| dk.trace().re).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let gap: f64 = d
        .iter()
        .map(|dk| dk.trace().re - dominant_eigen(dk).0)
        .sum();
    gap.max(0.0) / total
}

/// Penalized power Σ_k [tr D_k + λ₀ (tr D_k − ‖D_k‖₂)].
pub fn dc_objective(d: &[DMatrix<C64>], lambda0: f64) -> f64 {
    d.iter()
        .map(|dk| {
            let tr = dk.trace().re;
            tr + lambda0 * (tr - dominant_eigen(dk).0)
        })
        .sum()
}

#[derive(Clone, Debug)]
pub struct CovarianceIterate {
    pub d: Vec<DMatrix<C64>>,
    pub lambda0: f64,
    pub prev_eigvecs: Option<Vec<DVector<C64>>>,
    /// Σ tr D_k in watts.
    pub power: f64,
    /// Value of the linearized objective at the solution, in watts.
    pub objective: f64,
    pub sdp_iterations: usize,
}

fn sinr_constraints(n: &Normalized, extra_slack: Option<usize>, rhs: f64) -> Vec<Constraint> {
    let k = n.g.len();
    (0..k)
        .map(|kk| {
            let e = embed_hermitian(&outer(&n.g[kk])) * 0.5;
            let mut terms: Vec<(usize, DMatrix<f64>)> = (0..k)
                .map(|i| (i, if i == kk { &e / n.iota[kk] } else { -&e }))
                .collect();
            terms.push((k + kk, scalar(-1.0)));
            if let Some(t) = extra_slack {
                terms.push((t, scalar(-1.0)));
            }
            Constraint { terms, rhs }
        })
        .collect()
}

/// Maximizes the worst normalized SINR slack over Σ tr D = 1; a nonpositive
/// optimum certifies that no beamformer meets the targets.
fn phase_one(n: &Normalized) -> Result<f64> {
    let k = n.g.len();
    let m = n.g[0].len();
    let shift = n.g.iter().map(|g| g.norm_squared()).fold(0.0, f64::max);
    let mut c: Vec<DMatrix<f64>> = vec![DMatrix::zeros(2 * m, 2 * m); k];
    c.extend((0..k).map(|_| scalar(0.0)));
    c.push(scalar(-1.0));
    let mut constraints = sinr_constraints(n, Some(2 * k), -shift);
    constraints.push(Constraint {
        terms: (0..k)
            .map(|i| (i, DMatrix::identity(2 * m, 2 * m) * 0.5))
            .collect(),
        rhs: 1.0,
    });
    let sol = BlockSdp { c, constraints }.solve(&SdpSettings::default())?;
    Ok(-sol.primal_obj - shift)
}

fn solve_normalized(
    n: &Normalized,
    lambda0: f64,
    prev: Option<&[DVector<C64>]>,
) -> Result<(Vec<DMatrix<C64>>, usize)> {
    let k = n.g.len();
    let m = n.g[0].len();
    let mut c: Vec<DMatrix<f64>> = (0..k)
        .map(|kk| {
            let mut ck = DMatrix::<C64>::identity(m, m) * C64::from(1.0 + lambda0);
            if let Some(p) = prev {
                let d = p[kk].unscale(p[kk].norm());
                ck -= outer(&d) * C64::from(lambda0);
            }
            embed_hermitian(&ck) * 0.5
        })
        .collect();
    c.extend((0..k).map(|_| scalar(0.0)));
    let sdp = BlockSdp {
        c,
        constraints: sinr_constraints(n, None, 1.0),
    };
    match sdp.solve(&SdpSettings::default()) {
        Ok(sol) => Ok((
            sol.x[..k].iter().map(extract_hermitian).collect(),
            sol.iterations,
        )),
        Err(err) => {
            let slack = phase_one(n)?;
            let tol = 1e-9 * n.g.iter().map(|g| g.norm_squared()).fold(1.0, f64::max);
            if slack <= tol {
                Err(Error::Infeasible { min_slack: slack })
            } else {
                Err(err)
            }
        }
    }
}

/// One convex step: the plain relaxation when `prev_eigvecs` is `None`,
/// otherwise the penalty linearized at the given eigenvectors.
pub fn solve_sdp(
    problem: &BeamformingProblem,
    lambda0: f64,
    prev_eigvecs: Option<&[DVector<C64>]>,
) -> Result<CovarianceIterate> {
    if !(lambda0 >= 0.0) {
        return Err(Error::invalid("penalty weight must be nonnegative"));
    }
    if let Some(p) = prev_eigvecs {
        if p.len() != problem.num_users()
            || p.iter()
                .any(|d| d.len() != problem.num_antennas() || !(d.norm() > 0.0))
        {
            return Err(Error::Dimension(
                "one nonzero eigenvector per user required".into(),
            ));
        }
    }
    let n = Normalized::new(problem);
    let (d_scaled, iters) = solve_normalized(&n, lambda0, prev_eigvecs)?;
    let d: Vec<DMatrix<C64>> = d_scaled.into_iter().map(|x| x.unscale(n.scale)).collect();
    let power = d.iter().map(|dk| dk.trace().re).sum();
    let objective = match prev_eigvecs {
        Some(p) => d
            .iter()
            .zip(p)
            .map(|(dk, v)| {
                let v = v.unscale(v.norm());
                let tr = dk.trace().re;
                tr + lambda0 * (tr - v.dotc(&(dk * &v)).re)
            })
            .sum(),
        None => power,
    };
    Ok(CovarianceIterate {
        d,
        lambda0,
        prev_eigvecs: prev_eigvecs.map(|p| p.to_vec()),
        power,
        objective,
        sdp_iterations: iters,
    })
}

#[derive(Clone, Debug)]
pub struct DcOptions {
    /// Initial penalty weight; `None` selects 0.01 × K, i.e. 0.01 Σσ² once the
    /// noise is normalized to one.
    pub lambda0: Option<f64>,
    pub tau: f64,
    pub tol: f64,
    pub max_escalations: usize,
}

impl Default for DcOptions {
    fn default() -> Self {
        DcOptions {
            lambda0: None,
            tau: 5.0,
            tol: 1e-6,
            max_escalations: 12,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DcStep {
    pub lambda0: f64,
    pub power: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct DcOutcome {
    pub iterate: CovarianceIterate,
    pub residual: f64,
    /// One entry per convex solve; the first is the unpenalized relaxation.
    pub trace: Vec<DcStep>,
}

pub fn dc_rank_one_loop(problem: &BeamformingProblem, opts: &DcOptions) -> Result<DcOutcome> {
    if !(opts.tau > 1.0) {
        return Err(Error::invalid("penalty escalation factor must exceed 1"));
    }
    let mut lambda = opts.lambda0.unwrap_or(0.01 * problem.num_users() as f64);
    let mut current = solve_sdp(problem, 0.0, None)?;
    let mut residual = rank_residual(&current.d);
    let mut trace = vec![DcStep {
        lambda0: 0.0,
        power: current.power,
        residual,
    }];
    let mut escalations = 0;
    while residual > opts.tol {
        if escalations > opts.max_escalations {
            return Err(Error::RankResidual { residual });
        }
        let eigvecs: Vec<DVector<C64>> = current.d.iter().map(|dk| dominant_eigen(dk).1).collect();
        current = solve_sdp(problem, lambda, Some(&eigvecs))?;
        residual = rank_residual(&current.d);
        trace.push(DcStep {
            lambda0: lambda,
            power: current.power,
            residual,
        });
        lambda *= opts.tau;
        escalations += 1;
    }
    Ok(DcOutcome {
        iterate: current,
        residual,
        trace,
    })
}

/// Minimum powers that make every SINR constraint tight for fixed unit directions.
pub(crate) fn tight_powers(
    problem: &BeamformingProblem,
    dirs: &[DVector<C64>],
) -> Option<Vec<f64>> {
    let k = problem.num_users();
    let mut f = DMatrix::zeros(k, k);
    for kk in 0..k {
        for i in 0..k {
            let x = problem.channels[kk].dotc(&dirs[i]).norm_sqr() / problem.noise[kk];
            f[(kk, i)] = if i == kk {
                x / problem.sinr_targets[kk]
            } else {
                -x
            };
        }
    }
    let p = f.lu().solve(&DVector::from_element(k, 1.0))?;
    if p.iter().all(|x| x.is_finite() && *x > 0.0) {
        Some(p.iter().copied().collect())
    } else {
        None
    }
}

fn columns_to_matrix(cols: &[DVector<C64>]) -> DMatrix<C64> {
    DMatrix::from_columns(cols)
}

/// w_k = √λ_max q_max from each D_k, then the powers are re-solved so the SINR
/// constraints hold with equality for the recovered directions.
pub fn recover_beamformers(
    problem: &BeamformingProblem,
    d: &[DMatrix<C64>],
    tol: f64,
) -> Result<DMatrix<C64>> {
    if d.len() != problem.num_users() {
        return Err(Error::Dimension("one covariance per user required".into()));
    }
    let residual = rank_residual(d);
    if residual > tol {
        return Err(Error::RankResidual { residual });
    }
    let eig: Vec<(f64, DVector<C64>)> = d.iter().map(dominant_eigen).collect();
    let raw: Vec<DVector<C64>> = eig
        .iter()
        .map(|(l, q)| q * C64::from(l.max(0.0).sqrt()))
        .collect();
    let dirs: Vec<DVector<C64>> = eig.iter().map(|(_, q)| q.clone()).collect();
    let w = match tight_powers(problem, &dirs) {
        Some(p) => columns_to_matrix(
            &dirs
                .iter()
                .zip(&p)
                .map(|(q, pk)| q * C64::from(pk.sqrt()))
                .collect::<Vec<_>>(),
        ),
        None => columns_to_matrix(&raw),
    };
    let violation = problem.sinr_violation(&w);
    if violation > 1e-6 {
        return Err(Error::Numerical(format!(
            "recovered beamformers miss a SINR target by {violation:.2e}"
        )));
    }
    Ok(w)
}

#[derive(Clone, Debug)]
pub struct BeamformingSolution {
    /// Beamformers as columns, M × K.
    pub w: DMatrix<C64>,
    /// Σ‖w_k‖² in watts.
    pub power: f64,
    pub rank_residual: f64,
    pub trace: Vec<DcStep>,
}

/// Relaxation, rank-one penalty loop and recovery in one call.
pub fn solve_beamforming(
    problem: &BeamformingProblem,
    opts: &DcOptions,
) -> Result<BeamformingSolution> {
    let out = dc_rank_one_loop(problem, opts)?;
    let w = recover_beamformers(problem, &out.iterate.d, opts.tol)?;
    Ok(BeamformingSolution {
        power: w.norm_squared(),
        w,
        rank_residual: out.residual,
        trace: out.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_channel(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> DVector<C64> {
        DVector::from_fn(m, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
        })
    }

    fn random_problem(seed: u64, m: usize, k: usize) -> BeamformingProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = (0..k).map(|_| random_channel(&mut rng, m, 1e-4)).collect();
        let iota = (0..k).map(|_| rng.gen_range(0.5..3.0)).collect();
        let noise = (0..k).map(|_| rng.gen_range(0.5e-11..2e-11)).collect();
        BeamformingProblem::new(h, iota, noise).unwrap()
    }

    #[test]
    fn embedding_round_trip_and_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_channel(&mut rng, 3, 1.0);
        let b = random_channel(&mut rng, 3, 1.0);
        let h = outer(&a) + outer(&b) * C64::new(0.3, 0.0);
        let d = outer(&b);
        assert!((extract_hermitian(&embed_hermitian(&h)) - &h).norm() < 1e-15);
        let lhs = (&h * &d).trace().re;
        let rhs = 0.5
            * embed_hermitian(&h)
                .component_mul(&embed_hermitian(&d))
                .sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn single_user_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_channel(&mut rng, 4, 3e-4);
        let (iota, s2) = (3.0, 1e-11);
        let problem = BeamformingProblem::new(vec![h.clone()], vec![iota], vec![s2]).unwrap();
        let expected = iota * s2 / h.norm_squared();
        let it = solve_sdp(&problem, 0.0, None).unwrap();
        assert_relative_eq!(it.power, expected, max_relative = 1e-7);
        assert!(rank_residual(&it.d) < 1e-8);
        let (_, q) = dominant_eigen(&it.d[0]);
        assert_relative_eq!(q.dotc(&h).norm(), h.norm(), max_relative = 1e-7);

        let out = dc_rank_one_loop(&problem, &DcOptions::default()).unwrap();
        assert_eq!(out.trace.len(), 1);
        let sol = solve_beamforming(&problem, &DcOptions::default()).unwrap();
        assert_relative_eq!(sol.power, expected, max_relative = 1e-7);
        let (oracle_w, oracle_p) = duality_oracle(&problem).unwrap();
        assert_relative_eq!(oracle_p, expected, max_relative = 1e-9);
        assert_relative_eq!(oracle_w.norm_squared(), expected, max_relative = 1e-9);
    }

    #[test]
    fn noise_scaling_scales_power() {
        let p = random_problem(3, 4, 2);
        let base = solve_sdp(&p, 0.0, None).unwrap().power;
        let mut q = p.clone();
        q.noise.iter_mut().for_each(|s| *s *= 7.0);
        assert_relative_eq!(
            solve_sdp(&q, 0.0, None).unwrap().power,
            7.0 * base,
            max_relative = 1e-7
        );
    }

    #[test]
    fn orthogonal_users_decouple() {
        let z = C64::new(0.0, 0.0);
        let h1 = DVector::from_vec(vec![C64::new(2e-4, 1e-4), z, z]);
        let h2 = DVector::from_vec(vec![z, C64::new(0.0, 3e-4), C64::new(1e-4, 0.0)]);
        let problem = BeamformingProblem::new(
            vec![h1.clone(), h2.clone()],
            vec![1.0, 3.0],
            vec![1e-11, 2e-11],
        )
        .unwrap();
        let expected = 1e-11 / h1.norm_squared() + 3.0 * 2e-11 / h2.norm_squared();
        let (_, p) = duality_oracle(&problem).unwrap();
        assert_relative_eq!(p, expected, max_relative = 1e-9);
        let sol = solve_beamforming(&problem, &DcOptions::default()).unwrap();
        assert_relative_eq!(sol.power, expected, max_relative = 1e-6);
    }

    #[test]
    fn random_instances_match_duality_oracle() {
        for (seed, m, k) in [(10, 4, 2), (11, 6, 3), (12, 8, 3), (13, 3, 3)] {
            let problem = random_problem(seed, m, k);
            let (w_oracle, p_oracle) = duality_oracle(&problem).unwrap();
            assert!(problem.sinr_violation(&w_oracle) < 1e-9);
            let sol = solve_beamforming(&problem, &DcOptions::default()).unwrap();
            assert!(
                (sol.power - p_oracle).abs() <= 0.01 * p_oracle,
                "seed {seed}: {} vs {p_oracle}",
                sol.power
            );
            assert!(sol.rank_residual <= 1e-6);
            assert!(problem.sinr_violation(&sol.w) <= 1e-6);
            let ratios: Vec<f64> = problem
                .sinrs(&sol.w)
                .iter()
                .zip(&problem.sinr_targets)
                .map(|(g, t)| g / t)
                .collect();
            let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            assert!((1.0 - 1e-5..=1.0 + 1e-3).contains(&worst));
        }
    }

    #[test]
    fn relaxation_never_exceeds_oracle() {
        for seed in 20..26 {
            let problem = random_problem(seed, 4, 3);
            let (_, p_oracle) = duality_oracle(&problem).unwrap();
            let sdr = solve_sdp(&problem, 0.0, None).unwrap();
            assert!(sdr.power <= p_oracle * (1.0 + 1e-6));
        }
    }

    #[test]
    fn dc_objective_non_increasing_at_fixed_weight() {
        let problem = random_problem(31, 4, 3);
        let mut it = solve_sdp(&problem, 0.0, None).unwrap();
        let lambda = 0.5;
        let mut last = dc_objective(&it.d, lambda);
        for _ in 0..4 {
            let v: Vec<_> = it.d.iter().map(|d| dominant_eigen(d).1).collect();
            it = solve_sdp(&problem, lambda, Some(&v)).unwrap();
            let now = dc_objective(&it.d, lambda);
            assert!(now <= last * (1.0 + 1e-7), "{now} > {last}");
            last = now;
        }
    }

    #[test]
    fn recovery_examples() {
        let h = DVector::from_vec(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.1)]);
        let problem =
            BeamformingProblem::new(vec![h.clone()], vec![h.norm_squared().powi(2)], vec![1.0])
                .unwrap();
        let w = recover_beamformers(&problem, &[outer(&h)], 1e-6).unwrap();
        let phase = w[(0, 0)] / h[0];
        assert_relative_eq!(phase.norm(), 1.0, epsilon = 1e-12);
        assert!((w.column(0) - &h * phase).norm() < 1e-12);

        let mut d = DMatrix::zeros(3, 3);
        d[(0, 0)] = C64::new(4.0, 0.0);
        let e1 = DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ]);
        let problem = BeamformingProblem::new(vec![e1], vec![4.0], vec![1.0]).unwrap();
        let w = recover_beamformers(&problem, &[d], 1e-6).unwrap();
        assert_relative_eq!(w[(0, 0)].norm(), 2.0, epsilon = 1e-12);
        assert_eq!(w[(1, 0)].norm(), 0.0);

        let mut full = DMatrix::<C64>::identity(2, 2);
        full[(0, 0)] = C64::new(2.0, 0.0);
        assert!(matches!(
            recover_beamformers(
                &BeamformingProblem::new(vec![h], vec![1.0], vec![1.0]).unwrap(),
                &[full],
                1e-6
            ),
            Err(Error::RankResidual { .. })
        ));
    }

    #[test]
    fn infeasible_instance_reported() {
        // three users sharing one antenna with SINR targets of 3 cannot all be served
        let h = |x: f64| DVector::from_vec(vec![C64::new(x, 0.0)]);
        let problem = BeamformingProblem::new(
            vec![h(1e-4), h(2e-4), h(1.5e-4)],
            vec![3.0; 3],
            vec![1e-11; 3],
        )
        .unwrap();
        let err = solve_sdp(&problem, 0.0, None).unwrap_err();
        assert!(err.is_infeasible(), "{err}");
        assert!(duality_oracle(&problem).unwrap_err().is_infeasible());
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = DVector::from_vec(vec![C64::new(1.0, 0.0)]);
        assert!(BeamformingProblem::new(vec![h.clone()], vec![0.0], vec![1.0]).is_err());
        assert!(BeamformingProblem::new(vec![h.clone()], vec![1.0], vec![-1.0]).is_err());
        assert!(BeamformingProblem::new(vec![DVector::zeros(1)], vec![1.0], vec![1.0]).is_err());
        assert!(BeamformingProblem::new(vec![h], vec![1.0, 2.0], vec![1.0]).is_err());
        let p = random_problem(1, 2, 1);
        assert!(dc_rank_one_loop(
            &p,
            &DcOptions {
                tau: 1.0,
                ..DcOptions::default()
            }
        )
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn power_invariant_under_common_unitary(seed in 0u64..1000, angle in 0.0f64..std::f64::consts::TAU) {
            let problem = random_problem(seed, 3, 2);
            let (_, base) = duality_oracle(&problem).unwrap();
            // a unitary built from a Householder reflection and a phase
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
            let v = random_channel(&mut rng, 3, 1.0).normalize();
            let u = DMatrix::<C64>::identity(3, 3) - (&v * v.adjoint()) * C64::from(2.0);
            let u = u * C64::from_polar(1.0, angle);
            let rotated = BeamformingProblem::new(
                problem.channels.iter().map(|h| &u * h).collect(),
                problem.sinr_targets.clone(),
                problem.noise.clone(),
            ).unwrap();
            let sol = solve_beamforming(&rotated, &DcOptions::default()).unwrap();
            prop_assert!((sol.power - base).abs() <= 0.01 * base);
        }
    }
}
