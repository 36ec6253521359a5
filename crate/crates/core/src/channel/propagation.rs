use nalgebra::{DVector, Matrix2, Matrix2x3, Matrix3x2, Vector2, Vector3};
use std::f64::consts::PI;

use super::{PatternParams, PolCombinerRx, PolStateTx, Scene, C64};
use crate::error::{Error, Result};
use crate::geometry::{
    misalignment_angle, port_basis, transverse_basis_unchecked, RotationMatrix, Vec3,
};

/// Rotation- and polarization-independent data of one (antenna, user, path) triple.
#[derive(Clone, Debug)]
pub struct PathTerm {
    /// Departure direction at the BS.
    pub f_tx: Vec3,
    pub z_tx: Matrix3x2<f64>,
    /// Receive projection EᵀZ_rx.
    pub q: Matrix2<f64>,
    pub coupling: Matrix2<C64>,
    /// √(A G0 κ / (4π d²)) · e^{−j2πd/λ}; the directional amplitude is applied separately.
    pub alpha: C64,
    /// Q M Z_txᵀ, so that the polarization factor is uᴴ T R E v.
    pub t: Matrix2x3<C64>,
    pub distance: f64,
}

/// Per-scene cache of every path; index `(m·K + k)·(L + 1) + l`, `l = 0` being LoS.
#[derive(Clone, Debug)]
pub struct Propagation {
    num_antennas: usize,
    num_users: usize,
    paths_per_link: usize,
    pub pattern: PatternParams,
    paths: Vec<PathTerm>,
}

/// Effective channels together with the per-path values that produced them.
#[derive(Clone, Debug)]
pub struct ChannelSet {
    /// h_k ∈ C^M, one per user.
    pub h: Vec<DVector<C64>>,
    /// h_{m,k,l}, indexed like [`Propagation`].
    pub path_h: Vec<C64>,
    /// fᵀR_m e_z per path.
    pub cos_tx: Vec<f64>,
    /// Transmit projections P = Z_txᵀ R_m E per path.
    pub p_mats: Vec<Matrix2<f64>>,
    paths_per_link: usize,
    num_users: usize,
}

impl ChannelSet {
    pub fn path_index(&self, m: usize, k: usize, l: usize) -> usize {
        (m * self.num_users + k) * self.paths_per_link + l
    }

    /// Re-sums h_k from the cached path values.
    pub fn rebuild_from_cache(&self) -> Vec<DVector<C64>> {
        let m_count = self.h.first().map_or(0, |h| h.len());
        (0..self.num_users)
            .map(|k| {
                DVector::from_fn(m_count, |m, _| {
                    (0..self.paths_per_link)
                        .map(|l| self.path_h[self.path_index(m, k, l)])
                        .sum()
                })
            })
            .collect()
    }
}

fn unit_and_distance(from: &Vec3, to: &Vec3) -> Result<(Vec3, f64)> {
    let d = (to - from).norm();
    if !(d > 1e-9) {
        return Err(Error::invalid("path endpoints coincide"));
    }
    Ok(((to - from) / d, d))
}

pub(crate) fn e_v(r: &RotationMatrix, v: &PolStateTx) -> Vector3<C64> {
    let m = r.matrix();
    let h = m.column(0);
    let vv = m.column(1);
    Vector3::from_fn(|i, _| v.0[0] * h[i] + v.0[1] * vv[i])
}

impl Propagation {
    pub fn new(scene: &Scene) -> Result<Self> {
        scene.validate()?;
        let (mc, kc, lc) = (
            scene.num_antennas(),
            scene.num_users(),
            scene.num_scatterers(),
        );
        let pattern = scene.pattern;
        let e = port_basis();
        let phase = |d: f64| C64::from_polar(1.0, -2.0 * PI * d / pattern.lambda);
        let scale = |d: f64, kappa: f64| {
            (pattern.aperture * pattern.g0 * kappa / (4.0 * PI * d * d)).sqrt()
        };

        let mut paths = Vec::with_capacity(mc * kc * (lc + 1));
        for m in 0..mc {
            let pm = scene.antennas[m];
            for k in 0..kc {
                let pk = scene.users[k];
                let (f, d) = unit_and_distance(&pm, &pk)?;
                let zb = transverse_basis_unchecked(&f);
                let q = e.transpose() * zb.z;
                let t = q.map(C64::from) * zb.z.transpose().map(C64::from);
                paths.push(PathTerm {
                    f_tx: f,
                    z_tx: zb.z,
                    q,
                    coupling: Matrix2::identity(),
                    alpha: phase(d) * scale(d, 1.0),
                    t,
                    distance: d,
                });
                for l in 0..lc {
                    let sl = scene.scatterers[l];
                    let (ftx, d1) = unit_and_distance(&pm, &sl)?;
                    let (frx, d2) = unit_and_distance(&sl, &pk)?;
                    let ztx = transverse_basis_unchecked(&ftx);
                    let zrx = transverse_basis_unchecked(&frx);
                    let q = e.transpose() * zrx.z;
                    let mm = scene.coupling(k, l).m;
                    let t = q.map(C64::from) * mm * ztx.z.transpose().map(C64::from);
                    let d = d1 + d2;
                    paths.push(PathTerm {
                        f_tx: ftx,
                        z_tx: ztx.z,
                        q,
                        coupling: mm,
                        alpha: phase(d) * scale(d, scene.scatter_loss),
                        t,
                        distance: d,
                    });
                }
            }
        }
        Ok(Propagation {
            num_antennas: mc,
            num_users: kc,
            paths_per_link: lc + 1,
            pattern,
            paths,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn paths_per_link(&self) -> usize {
        self.paths_per_link
    }

    pub fn index(&self, m: usize, k: usize, l: usize) -> usize {
        (m * self.num_users + k) * self.paths_per_link + l
    }

    pub fn path(&self, m: usize, k: usize, l: usize) -> &PathTerm {
        &self.paths[self.index(m, k, l)]
    }

    /// All paths of link (m, k), LoS first.
    pub fn link(&self, m: usize, k: usize) -> &[PathTerm] {
        let start = self.index(m, k, 0);
        &self.paths[start..start + self.paths_per_link]
    }

    fn check_dims(
        &self,
        r: &[RotationMatrix],
        v: &[PolStateTx],
        u: &[PolCombinerRx],
    ) -> Result<()> {
        if r.len() != self.num_antennas || v.len() != self.num_antennas || u.len() != self.num_users
        {
            return Err(Error::Dimension(format!(
                "expected {} rotations, {} tx states, {} rx combiners; got {}, {}, {}",
                self.num_antennas,
                self.num_antennas,
                self.num_users,
                r.len(),
                v.len(),
                u.len()
            )));
        }
        Ok(())
    }

    /// Effective channels h_k only, without filling the per-path cache.
    pub fn channels(
        &self,
        r: &[RotationMatrix],
        v: &[PolStateTx],
        u: &[PolCombinerRx],
    ) -> Vec<DVector<C64>> {
        let mut h = vec![DVector::zeros(self.num_antennas); self.num_users];
        for m in 0..self.num_antennas {
            let rev = e_v(&r[m], &v[m]);
            let bore = r[m].boresight();
            for (k, hk) in h.iter_mut().enumerate() {
                let uc = u[k].0.map(|z| z.conj());
                let mut acc = C64::new(0.0, 0.0);
                for path in self.link(m, k) {
                    let a = self.pattern.amplitude(path.f_tx.dot(&bore));
                    if a == 0.0 {
                        continue;
                    }
                    let row = path.t.transpose() * uc;
                    acc += path.alpha * a * row.dot(&rev);
                }
                hk[m] = acc;
            }
        }
        h
    }

    pub fn assemble(
        &self,
        r: &[RotationMatrix],
        v: &[PolStateTx],
        u: &[PolCombinerRx],
    ) -> Result<ChannelSet> {
        self.check_dims(r, v, u)?;
        let e = port_basis();
        let n = self.paths.len();
        let mut path_h = vec![C64::new(0.0, 0.0); n];
        let mut cos_tx = vec![0.0; n];
        let mut p_mats = vec![Matrix2::zeros(); n];
        for m in 0..self.num_antennas {
            let rev = e_v(&r[m], &v[m]);
            let bore = r[m].boresight();
            let re = r[m].matrix() * e;
            for k in 0..self.num_users {
                let uc = u[k].0.map(|z| z.conj());
                for l in 0..self.paths_per_link {
                    let idx = self.index(m, k, l);
                    let path = &self.paths[idx];
                    let c = path.f_tx.dot(&bore);
                    cos_tx[idx] = c;
                    p_mats[idx] = path.z_tx.transpose() * re;
                    let a = self.pattern.amplitude(c);
                    if a != 0.0 {
                        let row = path.t.transpose() * uc;
                        path_h[idx] = path.alpha * a * row.dot(&rev);
                    }
                }
            }
        }
        let mut set = ChannelSet {
            h: Vec::new(),
            path_h,
            cos_tx,
            p_mats,
            paths_per_link: self.paths_per_link,
            num_users: self.num_users,
        };
        set.h = (0..self.num_users)
            .map(|k| {
                DVector::from_fn(self.num_antennas, |m, _| {
                    (0..self.paths_per_link)
                        .map(|l| set.path_h[set.path_index(m, k, l)])
                        .sum()
                })
            })
            .collect();
        Ok(set)
    }
}

/// Builds the propagation cache for `scene` and assembles the channels once.
pub fn assemble_channels(
    r: &[RotationMatrix],
    v: &[PolStateTx],
    u: &[PolCombinerRx],
    scene: &Scene,
) -> Result<ChannelSet> {
    Propagation::new(scene)?.assemble(r, v, u)
}

/// Line-of-sight coefficient h_{m,k,0} evaluated from first principles.
pub fn channel_coefficient_los(
    m: usize,
    k: usize,
    r_m: &RotationMatrix,
    v_m: &PolStateTx,
    u_k: &PolCombinerRx,
    scene: &Scene,
) -> Result<C64> {
    let pm = scene
        .antennas
        .get(m)
        .ok_or_else(|| Error::invalid("antenna index out of range"))?;
    let pk = scene
        .users
        .get(k)
        .ok_or_else(|| Error::invalid("user index out of range"))?;
    let (f, d) = unit_and_distance(pm, pk)?;
    let eps = misalignment_angle(r_m, &f);
    let beta = super::los_pathloss(d, eps, &scene.pattern)?;
    let z = transverse_basis_unchecked(&f).z;
    let e = port_basis();
    let p = z.transpose() * r_m.matrix() * e;
    let q = e.transpose() * z;
    Ok(polarization_factor(&q, &Matrix2::identity(), &p, v_m, u_k)
        * beta.sqrt()
        * C64::from_polar(1.0, -2.0 * PI * d / scene.pattern.lambda))
}

/// NLoS coefficient through scatterer `l` (0-based), from first principles.
pub fn channel_coefficient_nlos(
    m: usize,
    k: usize,
    l: usize,
    r_m: &RotationMatrix,
    v_m: &PolStateTx,
    u_k: &PolCombinerRx,
    scene: &Scene,
) -> Result<C64> {
    let pm = scene
        .antennas
        .get(m)
        .ok_or_else(|| Error::invalid("antenna index out of range"))?;
    let pk = scene
        .users
        .get(k)
        .ok_or_else(|| Error::invalid("user index out of range"))?;
    let sl = scene
        .scatterers
        .get(l)
        .ok_or_else(|| Error::invalid("scatterer index out of range"))?;
    let (ftx, d1) = unit_and_distance(pm, sl)?;
    let (frx, d2) = unit_and_distance(sl, pk)?;
    let d = d1 + d2;
    let eps = misalignment_angle(r_m, &ftx);
    let beta = super::los_pathloss(d, eps, &scene.pattern)? * scene.scatter_loss;
    if beta == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let e = port_basis();
    let p = transverse_basis_unchecked(&ftx).z.transpose() * r_m.matrix() * e;
    let q = e.transpose() * transverse_basis_unchecked(&frx).z;
    Ok(
        polarization_factor(&q, &scene.coupling(k, l).m, &p, v_m, u_k)
            * beta.sqrt()
            * C64::from_polar(1.0, -2.0 * PI * d / scene.pattern.lambda),
    )
}

fn polarization_factor(
    q: &Matrix2<f64>,
    coupling: &Matrix2<C64>,
    p: &Matrix2<f64>,
    v: &PolStateTx,
    u: &PolCombinerRx,
) -> C64 {
    let inner: Vector2<C64> = q.map(C64::from) * coupling * p.map(C64::from) * v.0;
    u.0.dotc(&inner)
}
