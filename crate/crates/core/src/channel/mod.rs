//! Polarized multipath channel synthesis and the SINR/rate map.
//!
//! Every path coefficient has the form
//! `h = α · a(fᵀR e_z) · uᴴ Q M Zᵀ R E v`, where α carries path loss and
//! propagation phase, `a(c) = c^p` (zero for `c ≤ 0`) is the BS directional
//! amplitude, `Q = EᵀZ_rx`, `P = Z_txᵀ R E` and `M` the coupling (identity on the
//! line-of-sight path). [`Propagation`] caches everything that does not depend on
//! the rotation or polarization variables.

mod propagation;
mod scene;

pub(crate) use propagation::e_v;
pub use propagation::{
    assemble_channels, channel_coefficient_los, channel_coefficient_nlos, ChannelSet, PathTerm,
    Propagation,
};
pub use scene::Scene;

use nalgebra::{Complex, DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Guard on cos(misalignment) used when differentiating the directional amplitude.
pub const AMPLITUDE_GUARD: f64 = 1e-6;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Cosine-power directional pattern and Friis aperture parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternParams {
    pub p: f64,
    pub g0: f64,
    /// Receive effective aperture in m².
    pub aperture: f64,
    pub lambda: f64,
}

impl PatternParams {
    /// `aperture = None` selects the isotropic effective aperture λ²/(4π).
    pub fn new(p: f64, lambda: f64, aperture: Option<f64>) -> Result<Self> {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::invalid(format!(
                "directivity factor must be >= 0, got {p}"
            )));
        }
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!(
                "wavelength must be positive, got {lambda}"
            )));
        }
        let aperture = aperture.unwrap_or(lambda * lambda / (4.0 * PI));
        if !(aperture > 0.0) {
            return Err(Error::invalid("aperture must be positive"));
        }
        Ok(PatternParams {
            p,
            g0: 2.0 * (2.0 * p + 1.0),
            aperture,
            lambda,
        })
    }

    /// Amplitude `c^p` for `c = cos ε > 0`, zero otherwise.
    pub fn amplitude(&self, cos_eps: f64) -> f64 {
        if cos_eps > 0.0 {
            cos_eps.powf(self.p)
        } else {
            0.0
        }
    }

    /// d/dc of [`amplitude`](Self::amplitude), with `c` floored at [`AMPLITUDE_GUARD`].
    pub fn amplitude_derivative(&self, cos_eps: f64) -> f64 {
        if cos_eps > 0.0 && self.p != 0.0 {
            self.p * cos_eps.max(AMPLITUDE_GUARD).powf(self.p - 1.0)
        } else {
            0.0
        }
    }
}

/// G(ε) = G0 cos^{2p}(ε) inside the front hemisphere, zero behind it.
pub fn gain_pattern(eps: f64, params: &PatternParams) -> f64 {
    if eps <= PI / 2.0 {
        params.g0 * eps.cos().max(0.0).powf(2.0 * params.p)
    } else {
        0.0
    }
}

/// Friis line-of-sight power gain β = A/(4πd²) · G(ε).
pub fn los_pathloss(d: f64, eps: f64, params: &PatternParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::invalid(format!(
            "distance must be positive, got {d}"
        )));
    }
    Ok(params.aperture / (4.0 * PI * d * d) * gain_pattern(eps, params))
}

/// Transmit polarization state v with ‖v‖ = 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolStateTx(pub Vector2<C64>);

impl PolStateTx {
    pub fn new(v: Vector2<C64>) -> Result<Self> {
        let n = v.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "transmit polarization must have unit norm, got {n}"
            )));
        }
        Ok(PolStateTx(v))
    }

    /// (ρ_H e^{−jφ_H}, ρ_V e^{−jφ_V}) with ρ_V = √(1 − ρ_H²).
    pub fn from_parts(rho_h: f64, phi_h: f64, phi_v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho_h) {
            return Err(Error::invalid("rho_h must lie in [0, 1]"));
        }
        let rho_v = (1.0 - rho_h * rho_h).sqrt();
        Ok(PolStateTx(Vector2::new(
            C64::from_polar(rho_h, -phi_h),
            C64::from_polar(rho_v, -phi_v),
        )))
    }

    pub fn vertical() -> Self {
        PolStateTx(Vector2::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0)))
    }
}

/// Receive combiner u with unit-modulus entries (phase-only control).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolCombinerRx(pub Vector2<C64>);

impl PolCombinerRx {
    pub fn new(u: Vector2<C64>) -> Result<Self> {
        for z in u.iter() {
            if (z.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "combiner entries must be unit modulus, got {}",
                    z.norm()
                )));
            }
        }
        Ok(PolCombinerRx(u))
    }

    pub fn from_phases(phi_h: f64, phi_v: f64) -> Self {
        PolCombinerRx(Vector2::new(
            C64::from_polar(1.0, -phi_h),
            C64::from_polar(1.0, -phi_v),
        ))
    }

    /// u = (1, 1).
    pub fn equal() -> Self {
        PolCombinerRx(Vector2::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0)))
    }
}

/// Scatterer depolarization matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingMatrix {
    pub m: Matrix2<C64>,
    pub chi: f64,
    /// θ^{HH}, θ^{HV}, θ^{VH}, θ^{VV}
    pub phases: [f64; 4],
}

impl CouplingMatrix {
    pub fn from_phases(chi: f64, phases: [f64; 4]) -> Result<Self> {
        if !(0.0..=1.0).contains(&chi) {
            return Err(Error::invalid(format!(
                "co-polar fraction must lie in [0, 1], got {chi}"
            )));
        }
        let co = chi.sqrt();
        let cross = (1.0 - chi).sqrt();
        let m = Matrix2::new(
            C64::from_polar(co, phases[0]),
            C64::from_polar(cross, phases[1]),
            C64::from_polar(cross, phases[2]),
            C64::from_polar(co, phases[3]),
        );
        Ok(CouplingMatrix { m, chi, phases })
    }

    pub fn identity() -> Self {
        CouplingMatrix {
            m: Matrix2::identity(),
            chi: 1.0,
            phases: [0.0; 4],
        }
    }

    /// Cross-polarization discrimination χ/(1 − χ).
    pub fn xpd(&self) -> f64 {
        self.chi / (1.0 - self.chi)
    }
}

/// Coupling with the four phases i.i.d. uniform on (0, 2π].
pub fn sample_coupling<R: Rng + ?Sized>(chi: f64, rng: &mut R) -> Result<CouplingMatrix> {
    if !(0.0..=1.0).contains(&chi) {
        return Err(Error::invalid(format!(
            "co-polar fraction must lie in [0, 1], got {chi}"
        )));
    }
    let mut phases = [0.0; 4];
    for ph in phases.iter_mut() {
        *ph = 2.0 * PI * (1.0 - rng.gen::<f64>());
    }
    CouplingMatrix::from_phases(chi, phases)
}

/// Per-user SINR and achievable rate. `w` holds one beamformer per column.
pub fn sinr_and_rate(w: &DMatrix<C64>, h: &[DVector<C64>], sigma2: &[f64]) -> Vec<(f64, f64)> {
    h.iter()
        .zip(sigma2)
        .enumerate()
        .map(|(k, (hk, &s2))| {
            let mut signal = 0.0;
            let mut interference = 0.0;
            for i in 0..w.ncols() {
                let x = hk.dotc(&w.column(i)).norm_sqr();
                if i == k {
                    signal = x;
                } else {
                    interference += x;
                }
            }
            let gamma = signal / (interference + s2);
            (gamma, (1.0 + gamma).log2())
        })
        .collect()
}
