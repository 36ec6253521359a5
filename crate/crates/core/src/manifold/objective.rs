//! Smoothed max-min SINR objectives and their Euclidean gradients.
//!
//! With W fixed, γ_k depends on the channel h_k only. Writing x_ki = h_kᴴ w_i,
//! S_k = |x_kk|² and I_k = Σ_{i≠k} |x_ki|² + σ_k²,
//! `dγ_k = 2 Re Σ_m Ξ_mk dh_mk` with
//! `Ξ_mk = (I_k x_kk w*_mk − S_k Σ_{i≠k} x_ki w*_mi) / I_k²`.
//! The objective J = f_obj(γ) + λ P_thresh(γ) (+ λ₁ P_angle for rotations) then
//! satisfies `dJ = 2 Re Σ_mk ω_k Ξ_mk dh_mk` with ω_k = ∂J/∂γ_k, and each
//! variable block only has to supply dh.
//!
//! Complex gradients are returned in the Wirtinger form G = ∂J/∂z*, so that the
//! real directional derivative along δ is 2 Re⟨G, δ⟩.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use crate::channel::{PatternParams, PolCombinerRx, PolStateTx, Propagation, C64};
use crate::geometry::{geodesic_matrix, geodesic_matrix_partials, RotationMatrix, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingParams {
    /// Log-sum-exp sharpness.
    pub mu: f64,
    /// Softplus sharpness.
    pub alpha: f64,
    /// Angle penalty weight of the rotation block.
    pub lambda1: f64,
    /// SINR-threshold penalty weight of the rotation block.
    pub lambda2: f64,
    /// SINR-threshold penalty weight of the transmit-polarization block.
    pub lambda3: f64,
    /// SINR-threshold penalty weight of the receive-polarization block.
    pub lambda4: f64,
    pub tau: f64,
    /// Use γ_k/ι_k inside the log-sum-exp instead of γ_k.
    pub normalize_sinr: bool,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams {
            mu: 10.0,
            alpha: 20.0,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            lambda4: 1.0,
            tau: 5.0,
            normalize_sinr: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Rotation,
    TxPol,
    RxPol,
}

impl SmoothingParams {
    fn thresh_weight(&self, block: Block) -> f64 {
        match block {
            Block::Rotation => self.lambda2,
            Block::TxPol => self.lambda3,
            Block::RxPol => self.lambda4,
        }
    }
}

/// Everything held fixed while one block is optimized.
#[derive(Clone, Copy, Debug)]
pub struct SubproblemData<'a> {
    pub prop: &'a Propagation,
    /// Beamformers as columns, M × K.
    pub w: &'a DMatrix<C64>,
    pub noise: &'a [f64],
    pub iota: &'a [f64],
    pub cos_theta_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AntennaState {
    pub r: Vec<RotationMatrix>,
    pub v: Vec<PolStateTx>,
    pub u: Vec<PolCombinerRx>,
}

/// `sp_α(x) = ln(1 + e^{αx})/α` and its derivative σ(αx).
pub fn softplus(x: f64, alpha: f64) -> (f64, f64) {
    let z = alpha * x;
    let value = if z > 30.0 {
        x + (-z).exp().ln_1p() / alpha
    } else {
        z.exp().ln_1p() / alpha
    };
    let sigma = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    (value, sigma)
}

/// `(1/μ) ln Σ exp(−μ s_k)` with a max shift, and its softmax weights
/// (so that ∂/∂s_k = −weight_k).
pub fn log_sum_exp_min(s: &[f64], mu: f64) -> (f64, Vec<f64>) {
    let shift = s.iter().map(|x| -mu * x).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|x| (-mu * x - shift).exp()).collect();
    let total: f64 = e.iter().sum();
    (
        (shift + total.ln()) / mu,
        e.iter().map(|x| x / total).collect(),
    )
}

/// Cross products x_ki = h_kᴴ w_i and the resulting SINRs.
#[derive(Clone, Debug)]
pub struct SinrEval {
    pub x: DMatrix<C64>,
    pub signal: Vec<f64>,
    /// Interference plus noise.
    pub interference: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl SinrEval {
    pub fn new(h: &[DVector<C64>], w: &DMatrix<C64>, noise: &[f64]) -> Self {
        let k = h.len();
        let x = DMatrix::from_fn(k, w.ncols(), |kk, i| h[kk].dotc(&w.column(i)));
        let mut signal = vec![0.0; k];
        let mut interference = noise.to_vec();
        for kk in 0..k {
            for i in 0..w.ncols() {
                let p = x[(kk, i)].norm_sqr();
                if i == kk {
                    signal[kk] = p;
                } else {
                    interference[kk] += p;
                }
            }
        }
        let gamma = signal
            .iter()
            .zip(&interference)
            .map(|(s, i)| s / i)
            .collect();
        SinrEval {
            x,
            signal,
            interference,
            gamma,
        }
    }

    /// Ξ_{·k}, the sensitivity of γ_k to h_k.
    pub fn xi(&self, w: &DMatrix<C64>, k: usize) -> DVector<C64> {
        let (s, i) = (self.signal[k], self.interference[k]);
        let mut acc = w.column(k).map(|z| z.conj()) * (self.x[(k, k)] * i);
        for j in 0..w.ncols() {
            if j != k {
                acc -= w.column(j).map(|z| z.conj()) * (self.x[(k, j)] * s);
            }
        }
        acc.unscale(i * i)
    }
}

fn sinr_scores(gamma: &[f64], iota: &[f64], params: &SmoothingParams) -> Vec<f64> {
    if params.normalize_sinr {
        gamma.iter().zip(iota).map(|(g, t)| g / t).collect()
    } else {
        gamma.to_vec()
    }
}

/// f_obj + λ P_thresh.
fn sinr_part(gamma: &[f64], iota: &[f64], params: &SmoothingParams, lambda: f64) -> f64 {
    let (f, _) = log_sum_exp_min(&sinr_scores(gamma, iota, params), params.mu);
    let pen: f64 = gamma
        .iter()
        .zip(iota)
        .map(|(g, t)| softplus(t - g, params.alpha).0.powi(2))
        .sum();
    f + lambda * pen
}

/// ω_k = ∂(f_obj + λ P_thresh)/∂γ_k.
fn sinr_weights(gamma: &[f64], iota: &[f64], params: &SmoothingParams, lambda: f64) -> Vec<f64> {
    let (_, p) = log_sum_exp_min(&sinr_scores(gamma, iota, params), params.mu);
    gamma
        .iter()
        .zip(iota)
        .zip(p)
        .map(|((g, t), pk)| {
            let scale = if params.normalize_sinr { 1.0 / t } else { 1.0 };
            let (sp, sig) = softplus(t - g, params.alpha);
            -pk * scale - 2.0 * lambda * sp * sig
        })
        .collect()
}

/// Σ_m sp_α(cos θ_max − R_m[2][2])² and its derivatives in R_m[2][2].
fn angle_penalty(bz: impl Iterator<Item = f64>, cos_max: f64, alpha: f64) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = Vec::new();
    for z in bz {
        let (sp, sig) = softplus(cos_max - z, alpha);
        value += sp * sp;
        grad.push(-2.0 * sp * sig);
    }
    (value, grad)
}

/// Θ_mk = ω_k Ξ_mk, stored per user.
fn theta(
    h: &[DVector<C64>],
    data: &SubproblemData,
    params: &SmoothingParams,
    lambda: f64,
) -> (SinrEval, Vec<DVector<C64>>) {
    let ev = SinrEval::new(h, data.w, data.noise);
    let omega = sinr_weights(&ev.gamma, data.iota, params, lambda);
    let th = (0..h.len())
        .map(|k| ev.xi(data.w, k) * C64::from(omega[k]))
        .collect();
    (ev, th)
}

/// Per-path data for the rotation block (V and U fixed).
#[derive(Clone, Debug)]
pub struct RotationModel {
    m: usize,
    k: usize,
    per_link: usize,
    pattern: PatternParams,
    /// α · (uᴴT)ᵀ per path.
    rows: Vec<Vector3<C64>>,
    f: Vec<Vec3>,
    v: Vec<Vector2<C64>>,
}

impl RotationModel {
    pub fn new(prop: &Propagation, v: &[PolStateTx], u: &[PolCombinerRx]) -> Self {
        let (mc, kc, per) = (prop.num_antennas(), prop.num_users(), prop.paths_per_link());
        let mut rows = Vec::with_capacity(mc * kc * per);
        let mut f = Vec::with_capacity(mc * kc * per);
        for m in 0..mc {
            for (k, uk) in u.iter().enumerate().take(kc) {
                let uc = uk.0.map(|z| z.conj());
                for path in prop.link(m, k) {
                    rows.push(path.t.transpose() * uc * path.alpha);
                    f.push(path.f_tx);
                }
            }
        }
        RotationModel {
            m: mc,
            k: kc,
            per_link: per,
            pattern: prop.pattern,
            rows,
            f,
            v: v.iter().map(|x| x.0).collect(),
        }
    }

    fn rev(&self, r: &Matrix3<f64>, m: usize) -> Vector3<C64> {
        let v = self.v[m];
        Vector3::from_fn(|i, _| v[0] * r[(i, 0)] + v[1] * r[(i, 1)])
    }

    pub fn channels(&self, r: &[Matrix3<f64>]) -> Vec<DVector<C64>> {
        let mut h = vec![DVector::zeros(self.m); self.k];
        for m in 0..self.m {
            let rev = self.rev(&r[m], m);
            let bore = r[m].column(2).into_owned();
            for (k, hk) in h.iter_mut().enumerate() {
                let base = (m * self.k + k) * self.per_link;
                let mut acc = C64::new(0.0, 0.0);
                for idx in base..base + self.per_link {
                    let a = self.pattern.amplitude(self.f[idx].dot(&bore));
                    if a != 0.0 {
                        acc += self.rows[idx].dot(&rev) * a;
                    }
                }
                hk[m] = acc;
            }
        }
        h
    }

    pub fn value(
        &self,
        r: &[Matrix3<f64>],
        data: &SubproblemData,
        params: &SmoothingParams,
    ) -> f64 {
        let h = self.channels(r);
        let ev = SinrEval::new(&h, data.w, data.noise);
        let (pa, _) = angle_penalty(
            r.iter().map(|x| x[(2, 2)]),
            data.cos_theta_max,
            params.alpha,
        );
        sinr_part(&ev.gamma, data.iota, params, params.lambda2) + params.lambda1 * pa
    }

    pub fn gradient(
        &self,
        r: &[Matrix3<f64>],
        data: &SubproblemData,
        params: &SmoothingParams,
    ) -> Vec<Matrix3<f64>> {
        let h = self.channels(r);
        let (_, th) = theta(&h, data, params, params.lambda2);
        let (_, dpa) = angle_penalty(
            r.iter().map(|x| x[(2, 2)]),
            data.cos_theta_max,
            params.alpha,
        );
        (0..self.m)
            .map(|m| {
                let rev = self.rev(&r[m], m);
                let ev = Vector3::new(self.v[m][0], self.v[m][1], C64::new(0.0, 0.0));
                let bore = r[m].column(2).into_owned();
                let mut acc = nalgebra::Matrix3::<C64>::zeros();
                let mut gain_dir = Vec3::zeros();
                for (k, thk) in th.iter().enumerate() {
                    let t = thk[m];
                    let base = (m * self.k + k) * self.per_link;
                    for idx in base..base + self.per_link {
                        let c = self.f[idx].dot(&bore);
                        let a = self.pattern.amplitude(c);
                        if a == 0.0 {
                            continue;
                        }
                        let row = self.rows[idx] * t;
                        acc += row * ev.transpose() * C64::from(a);
                        let da = self.pattern.amplitude_derivative(c);
                        if da != 0.0 {
                            gain_dir += self.f[idx] * (row.dot(&rev).re * da);
                        }
                    }
                }
                let mut g = acc.map(|z| 2.0 * z.re);
                for i in 0..3 {
                    g[(i, 2)] += 2.0 * gain_dir[i];
                }
                g[(2, 2)] += params.lambda1 * dpa[m];
                g
            })
            .collect()
    }
}

/// Boresight-only steering: R_m is the zero-roll geodesic rotation onto b_m.
#[derive(Clone, Debug)]
pub struct BoresightModel {
    pub inner: RotationModel,
}

impl BoresightModel {
    pub fn new(prop: &Propagation, v: &[PolStateTx], u: &[PolCombinerRx]) -> Self {
        BoresightModel {
            inner: RotationModel::new(prop, v, u),
        }
    }

    pub fn rotations(b: &[Vec3]) -> Vec<Matrix3<f64>> {
        b.iter().map(geodesic_matrix).collect()
    }

    pub fn value(&self, b: &[Vec3], data: &SubproblemData, params: &SmoothingParams) -> f64 {
        self.inner.value(&Self::rotations(b), data, params)
    }

    /// Gradient in the ambient coordinates of b (chain rule through the geodesic formula).
    pub fn gradient(
        &self,
        b: &[Vec3],
        data: &SubproblemData,
        params: &SmoothingParams,
    ) -> Vec<Vec3> {
        let g = self.inner.gradient(&Self::rotations(b), data, params);
        b.iter()
            .zip(&g)
            .map(|(bm, gm)| {
                let parts = geodesic_matrix_partials(bm);
                Vec3::new(gm.dot(&parts[0]), gm.dot(&parts[1]), gm.dot(&parts[2]))
            })
            .collect()
    }
}

/// h_k[m] = b_mkᵀ v_m with R and U fixed.
#[derive(Clone, Debug)]
pub struct LinearTx {
    m: usize,
    k: usize,
    coeff: Vec<Vector2<C64>>,
}

impl LinearTx {
    pub fn new(prop: &Propagation, r: &[RotationMatrix], u: &[PolCombinerRx]) -> Self {
        let (mc, kc) = (prop.num_antennas(), prop.num_users());
        let mut coeff = Vec::with_capacity(mc * kc);
        for (m, rm) in r.iter().enumerate().take(mc) {
            let bore = rm.boresight();
            let re = rm.matrix().fixed_columns::<2>(0).map(C64::from);
            for (k, uk) in u.iter().enumerate().take(kc) {
                let uc = uk.0.map(|z| z.conj());
                let mut acc = Vector2::zeros();
                for path in prop.link(m, k) {
                    let a = prop.pattern.amplitude(path.f_tx.dot(&bore));
                    if a != 0.0 {
                        let row = path.t.transpose() * uc;
                        acc += re.transpose() * row * (path.alpha * a);
                    }
                }
                coeff.push(acc);
            }
        }
        LinearTx {
            m: mc,
            k: kc,
            coeff,
        }
    }

    pub fn channels(&self, v: &[Vector2<C64>]) -> Vec<DVector<C64>> {
        (0..self.k)
            .map(|k| DVector::from_fn(self.m, |m, _| self.coeff[m * self.k + k].dot(&v[m])))
            .collect()
    }

    pub fn value(
        &self,
        v: &[Vector2<C64>],
        data: &SubproblemData,
        params: &SmoothingParams,
    ) -> f64 {
        let ev = SinrEval::new(&self.channels(v), data.w, data.noise);
        sinr_part(&ev.gamma, data.iota, params, params.lambda3)
    }

    /// Wirtinger gradient ∂J/∂v_m*.
    pub fn gradient(
        &self,
        v: &[Vector2<C64>],
        data: &SubproblemData,
        params: &SmoothingParams,
    ) -> Vec<Vector2<C64>> {
        let (_, th) = theta(&self.channels(v), data, params, params.lambda3);
        (0..self.m)
            .map(|m| {
                let mut g = Vector2::zeros();
                for (k, thk) in th.iter().enumerate() {
                    g += (self.coeff[m * self.k + k] * thk[m]).map(|z| z.conj());
                }
                g
            })
            .collect()
    }
}

/// h_k[m] = u_kᴴ c_mk with R and V fixed.
#[derive(Clone, Debug)]
pub struct LinearRx {
    m: usize,
    k: usize,
    coeff: Vec<Vector2<C64>>,
}

impl LinearRx {
    pub fn new(prop: &Propagation, r: &[RotationMatrix], v: &[PolStateTx]) -> Self {
        let (mc, kc) = (prop.num_antennas(), prop.num_users());
        let mut coeff = Vec::with_capacity(mc * kc);
        for m in 0..mc {
            let rev = crate::channel::e_v(&r[m], &v[m]);
            let bore = r[m].boresight();
            for k in 0..kc {
                let mut acc = Vector2::zeros();
                for path in prop.link(m, k) {
                    let a = prop.pattern.amplitude(path.f_tx.dot(&bore));
                    if a != 0.0 {
                        acc += path.t * rev * (path.alpha * a);
                    }
                }
                coeff.push(acc);
            }
        }
        LinearRx {
            m: mc,
            k: kc,
            coeff,
        }
    }

    pub fn channels(&self, u: &[Vector2<C64>]) -> Vec<DVector<C64>> {
        (0..self.k)
            .map(|k| DVector::from_fn(self.m, |m, _| u[k].dotc(&self.coeff[m * self.k + k])))
            .collect()
    }

    pub fn value(
        &self,
        u: &[Vector2<C64>],
        data: &SubproblemData,
        params: &SmoothingParams,
    ) -> f64 {
        let ev = SinrEval::new(&self.channels(u), data.w, data.noise);
        sinr_part(&ev.gamma, data.iota, params, params.lambda4)
    }

    /// Wirtinger gradient ∂J/∂u_k*; user k's entry only involves h_k.
    pub fn gradient(
        &self,
        u: &[Vector2<C64>],
        data: &SubproblemData,
        params: &SmoothingParams,
    ) -> Vec<Vector2<C64>> {
        let (_, th) = theta(&self.channels(u), data, params, params.lambda4);
        (0..self.k)
            .map(|k| {
                let mut g = Vector2::zeros();
                for m in 0..self.m {
                    g += self.coeff[m * self.k + k] * th[k][m];
                }
                g
            })
            .collect()
    }
}

fn raw_rotations(state: &AntennaState) -> Vec<Matrix3<f64>> {
    state.r.iter().map(|r| *r.matrix()).collect()
}

/// Smoothed objective of one block at `state`.
pub fn smooth_objective(
    state: &AntennaState,
    data: &SubproblemData,
    params: &SmoothingParams,
    block: Block,
) -> f64 {
    match block {
        Block::Rotation => RotationModel::new(data.prop, &state.v, &state.u).value(
            &raw_rotations(state),
            data,
            params,
        ),
        Block::TxPol | Block::RxPol => {
            let h = data.prop.channels(&state.r, &state.v, &state.u);
            let ev = SinrEval::new(&h, data.w, data.noise);
            sinr_part(&ev.gamma, data.iota, params, params.thresh_weight(block))
        }
    }
}

/// ∂J_R/∂R_m as real 3×3 matrices.
pub fn euclid_grad_r(
    state: &AntennaState,
    data: &SubproblemData,
    params: &SmoothingParams,
) -> Vec<Matrix3<f64>> {
    RotationModel::new(data.prop, &state.v, &state.u).gradient(&raw_rotations(state), data, params)
}

/// ∂J_V/∂v_m* (Wirtinger).
pub fn euclid_grad_v(
    state: &AntennaState,
    data: &SubproblemData,
    params: &SmoothingParams,
) -> Vec<Vector2<C64>> {
    let v: Vec<_> = state.v.iter().map(|x| x.0).collect();
    LinearTx::new(data.prop, &state.r, &state.u).gradient(&v, data, params)
}

/// ∂J_U/∂u_k* (Wirtinger).
pub fn euclid_grad_u(
    state: &AntennaState,
    data: &SubproblemData,
    params: &SmoothingParams,
) -> Vec<Vector2<C64>> {
    let u: Vec<_> = state.u.iter().map(|x| x.0).collect();
    LinearRx::new(data.prop, &state.r, &state.v).gradient(&u, data, params)
}

/// Ambient gradient of the boresight-parameterized objective.
pub fn euclid_grad_boresight(
    b: &[Vec3],
    v: &[PolStateTx],
    u: &[PolCombinerRx],
    data: &SubproblemData,
    params: &SmoothingParams,
) -> Vec<Vec3> {
    BoresightModel::new(data.prop, v, u).gradient(b, data, params)
}
