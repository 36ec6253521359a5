use super::{CouplingMatrix, PatternParams};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// The frozen random world of one trial: array, users, scatterers and link budget.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub antennas: Vec<Vec3>,
    pub users: Vec<Vec3>,
    pub scatterers: Vec<Vec3>,
    /// Depolarization of scatterer `l` toward user `k`, stored at `k * L + l`.
    pub coupling: Vec<CouplingMatrix>,
    pub pattern: PatternParams,
    /// Extra power loss applied to every scattered path (linear, ≤ 1).
    pub scatter_loss: f64,
    /// Per-user noise power in watts.
    pub noise_w: Vec<f64>,
    /// Per-user rate requirement in bps/Hz.
    pub rate_targets: Vec<f64>,
    /// Maximum boresight deviation from e_z, radians.
    pub theta_max: f64,
    pub seed: u64,
}

impl Scene {
    pub fn num_antennas(&self) -> usize {
        self.antennas.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_scatterers(&self) -> usize {
        self.scatterers.len()
    }

    pub fn coupling(&self, k: usize, l: usize) -> &CouplingMatrix {
        &self.coupling[k * self.scatterers.len() + l]
    }

    /// ι_k = 2^{R̄_k} − 1
    pub fn sinr_targets(&self) -> Vec<f64> {
        self.rate_targets
            .iter()
            .map(|r| 2f64.powf(*r) - 1.0)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, k, l) = (self.num_antennas(), self.num_users(), self.num_scatterers());
        if m == 0 || k == 0 {
            return Err(Error::invalid(
                "scene needs at least one antenna and one user",
            ));
        }
        if self.coupling.len() != k * l {
            return Err(Error::Dimension(format!(
                "expected {} coupling matrices, found {}",
                k * l,
                self.coupling.len()
            )));
        }
        if self.noise_w.len() != k || self.rate_targets.len() != k {
            return Err(Error::Dimension(
                "noise and rate targets need one entry per user".into(),
            ));
        }
        if self.noise_w.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("noise powers must be positive"));
        }
        if self.rate_targets.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::invalid("rate targets must be positive"));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.theta_max) {
            return Err(Error::invalid("theta_max must lie in [0, π]"));
        }
        if !(self.scatter_loss > 0.0) {
            return Err(Error::invalid("scatter loss must be positive"));
        }
        for a in &self.antennas {
            for p in self.users.iter().chain(&self.scatterers) {
                if (p - a).norm() < 1e-9 {
                    return Err(Error::invalid(
                        "user or scatterer coincides with an antenna",
                    ));
                }
            }
        }
        for s in &self.scatterers {
            for u in &self.users {
                if (u - s).norm() < 1e-9 {
                    return Err(Error::invalid("user coincides with a scatterer"));
                }
            }
        }
        Ok(())
    }
}
