//! Closed-form single-user line-of-sight analysis.
//!
//! One antenna, one user, no scatterers and vertically polarized transmission.
//! The effective gain splits into the directional pattern G(ε) and the
//! polarization efficiency η; both the fixed (R = I) and the best rotated
//! configuration have closed forms.

use nalgebra::{Matrix3, Vector2};
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

use crate::channel::C64;
use crate::error::{Error, Result};
use crate::geometry::{port_basis, transverse_basis_unchecked, RotationMatrix, Vec3};

/// η⋆ = (|t₁| + |t₂|)², the efficiency after co-phasing a unit-modulus combiner.
pub fn eta_star(t: &Vector2<C64>) -> f64 {
    let s = t[0].norm() + t[1].norm();
    s * s
}

/// Projected transmit field t = Eᵀ(I − ffᵀ) R e_v.
pub fn projected_field(f: &Vec3, r: &RotationMatrix) -> Vector2<C64> {
    let proj = Matrix3::identity() - f * f.transpose();
    let t = port_basis().transpose() * proj * r.v_axis();
    t.map(C64::from)
}

/// Efficiency with the boresight left on e_z.
pub fn eta_fixed(f: &Vec3) -> f64 {
    let s = (f.x * f.y).abs() + (1.0 - f.y * f.y).abs();
    s * s
}

/// Best efficiency over all rotations that steer the boresight onto f.
pub fn eta_rot(f: &Vec3) -> f64 {
    let plus = (f.x + f.y).powi(2);
    let minus = (f.x - f.y).powi(2);
    2.0 - plus.min(minus)
}

/// Boresight on f, vertical port along the projection of (1, s, 0) with the better sign.
pub fn optimal_rotation_los(f: &Vec3) -> Result<RotationMatrix> {
    let n = f.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "direction must be a unit vector, got norm {n}"
        )));
    }
    let f = f / n;
    let best = if (f.x + f.y).powi(2) <= (f.x - f.y).powi(2) {
        1.0
    } else {
        -1.0
    };
    let proj = Matrix3::identity() - f * f.transpose();
    let mut r2 = None;
    for s in [best, -best] {
        let cand = proj * Vec3::new(1.0, s, 0.0);
        if cand.norm() > 1e-9 {
            r2 = Some(cand.normalize());
            break;
        }
    }
    let r2 = r2.unwrap_or_else(|| transverse_basis_unchecked(&f).z.column(1).into_owned());
    let r1 = r2.cross(&f);
    Ok(RotationMatrix::from_matrix_unchecked(
        Matrix3::from_columns(&[r1, r2, f]),
    ))
}

/// Rotated-over-fixed gain decomposition, all in dB.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainRatio {
    pub total_db: f64,
    pub directional_db: f64,
    pub polarization_db: f64,
    /// Set when the fixed gain is zero (ε_fix ≥ π/2); the total is then +∞.
    pub unbounded: bool,
}

pub fn gain_ratio(f: &Vec3, p: f64) -> GainRatio {
    let cos_fix = f.z;
    let pol = eta_rot(f) / eta_fixed(f);
    if cos_fix <= 0.0 || eta_fixed(f) == 0.0 {
        return GainRatio {
            total_db: f64::INFINITY,
            directional_db: if cos_fix <= 0.0 {
                f64::INFINITY
            } else {
                -20.0 * p * cos_fix.log10()
            },
            polarization_db: 10.0 * pol.log10(),
            unbounded: true,
        };
    }
    let dir = cos_fix.powf(-2.0 * p);
    GainRatio {
        total_db: 10.0 * (dir * pol).log10(),
        directional_db: 10.0 * dir.log10(),
        polarization_db: 10.0 * pol.log10(),
        unbounded: false,
    }
}

/// Effective gains g_fix/G0 and g_rot/G0 toward f.
pub fn normalized_gains(f: &Vec3, p: f64) -> (f64, f64) {
    let c = f.z.max(0.0);
    (c.powf(2.0 * p) * eta_fixed(f), eta_rot(f))
}

/// Gains on a horizontal plane, normalized by 2G0, row-major over (y, x).
#[derive(Clone, Debug)]
pub struct CoverageHeatmap {
    pub plane_z: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub gain_fixed_db: Vec<f64>,
    pub gain_rot_db: Vec<f64>,
}

impl CoverageHeatmap {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x_m", "y_m", "gain_fixed_db", "gain_rot_db"])?;
        let n = self.xs.len();
        for (i, y) in self.ys.iter().enumerate() {
            for (j, x) in self.xs.iter().enumerate() {
                let idx = i * n + j;
                w.write_record([
                    x.to_string(),
                    y.to_string(),
                    self.gain_fixed_db[idx].to_string(),
                    self.gain_rot_db[idx].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::Io {
            path: "<heatmap>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub fn coverage_heatmap(
    plane_z: f64,
    extent: f64,
    grid_n: usize,
    p: f64,
) -> Result<CoverageHeatmap> {
    if !(plane_z > 0.0) {
        return Err(Error::invalid("plane height must be positive"));
    }
    if !(extent > 0.0) || grid_n < 2 {
        return Err(Error::invalid(
            "heatmap needs a positive extent and at least 2 points per side",
        ));
    }
    let step = 2.0 * extent / (grid_n - 1) as f64;
    let axis: Vec<f64> = (0..grid_n).map(|i| -extent + i as f64 * step).collect();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = axis
        .par_iter()
        .map(|&y| {
            axis.iter()
                .map(|&x| {
                    let f = Vec3::new(x, y, plane_z).normalize();
                    let (g_fix, g_rot) = normalized_gains(&f, p);
                    (10.0 * (g_fix / 2.0).log10(), 10.0 * (g_rot / 2.0).log10())
                })
                .unzip()
        })
        .collect();
    let mut gain_fixed_db = Vec::with_capacity(grid_n * grid_n);
    let mut gain_rot_db = Vec::with_capacity(grid_n * grid_n);
    for (fx, rot) in rows {
        gain_fixed_db.extend(fx);
        gain_rot_db.extend(rot);
    }
    Ok(CoverageHeatmap {
        plane_z,
        xs: axis.clone(),
        ys: axis,
        gain_fixed_db,
        gain_rot_db,
    })
}
