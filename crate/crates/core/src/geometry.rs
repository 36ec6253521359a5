//! Vector and rotation primitives: UPA placement, SO(3) handling, transverse
//! bases of propagation directions and boresight misalignment.

use nalgebra::{Matrix3, Matrix3x2, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance on ‖f‖ − 1 accepted for "unit" direction inputs.
pub const UNIT_TOL: f64 = 1e-9;

/// Global H/V reference port directions stacked as columns: E = [e_x, e_y].
pub fn port_basis() -> Matrix3x2<f64> {
    Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

fn check_unit(v: &Vec3, what: &str) -> Result<()> {
    let n = v.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!(
            "{what} must be a unit vector (norm {n})"
        )));
    }
    Ok(())
}

/// Rigid rotation of one antenna element.
///
/// Columns are the rotated H-port direction, the rotated V-port direction and the
/// boresight, in that order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Matrix3::identity())
    }

    /// Wraps `m` after checking orthogonality and unit determinant to `tol`.
    pub fn new_checked(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        let r = RotationMatrix(m);
        let (orth, det) = r.residuals();
        if orth > tol || det > tol {
            return Err(Error::invalid(format!(
                "not a rotation: ‖RᵀR − I‖ = {orth:.3e}, |det − 1| = {det:.3e}"
            )));
        }
        Ok(r)
    }

    /// Wraps without validation; the caller guarantees membership in SO(3).
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        RotationMatrix(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn h_axis(&self) -> Vec3 {
        self.0.column(0).into_owned()
    }

    pub fn v_axis(&self) -> Vec3 {
        self.0.column(1).into_owned()
    }

    pub fn boresight(&self) -> Vec3 {
        self.0.column(2).into_owned()
    }

    /// Cosine of the boresight elevation from the array normal, i.e. r3ᵀe_z.
    pub fn boresight_z(&self) -> f64 {
        self.0[(2, 2)]
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    pub fn compose(&self, other: &RotationMatrix) -> Self {
        RotationMatrix(self.0 * other.0)
    }

    /// (‖RᵀR − I‖_F, |det R − 1|)
    pub fn residuals(&self) -> (f64, f64) {
        let orth = (self.0.transpose() * self.0 - Matrix3::identity()).norm();
        let det = (self.0.determinant() - 1.0).abs();
        (orth, det)
    }
}

/// Orthonormal basis Z of the plane transverse to a propagation direction f.
#[derive(Clone, Copy, Debug)]
pub struct TransverseBasis {
    pub z: Matrix3x2<f64>,
    pub f: Vec3,
}

/// Element positions of an `mx` × `my` planar array in the x–y plane, centered at
/// the origin. Element (n_x, n_y) lands at index n_x·my + n_y.
pub fn build_upa_positions(mx: usize, my: usize, delta: f64) -> Result<Vec<Vec3>> {
    if mx == 0 || my == 0 {
        return Err(Error::invalid("array dimensions must be at least 1"));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!(
            "element spacing must be positive, got {delta}"
        )));
    }
    let cx = (mx as f64 - 1.0) / 2.0;
    let cy = (my as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(mx * my);
    for nx in 0..mx {
        for ny in 0..my {
            out.push(Vec3::new(
                (nx as f64 - cx) * delta,
                (ny as f64 - cy) * delta,
                0.0,
            ));
        }
    }
    Ok(out)
}

/// z₁ = normalize(e_z × f) away from the pole (e_x at it), z₂ = f × z₁.
pub fn transverse_basis(f: &Vec3) -> Result<TransverseBasis> {
    check_unit(f, "propagation direction")?;
    Ok(transverse_basis_unchecked(f))
}

pub(crate) fn transverse_basis_unchecked(f: &Vec3) -> TransverseBasis {
    let c = Vec3::z().cross(f);
    let n = c.norm();
    let z1 = if n > 1e-9 { c / n } else { Vec3::x() };
    // Re-orthogonalize so that round-off in f does not leak into Zᵀf.
    let z1 = (z1 - f * f.dot(&z1)).normalize();
    let z2 = f.cross(&z1);
    TransverseBasis {
        z: Matrix3x2::from_columns(&[z1, z2]),
        f: *f,
    }
}

/// Angle between the boresight r3 and the direction f, in [0, π].
pub fn misalignment_angle(r: &RotationMatrix, f: &Vec3) -> f64 {
    r.boresight().dot(f).clamp(-1.0, 1.0).acos()
}

/// Polar retraction onto SO(3): Y = AΣBᵀ ↦ A·diag(1, 1, det(ABᵀ))·Bᵀ.
pub fn project_so3(y: &Matrix3<f64>) -> Result<RotationMatrix> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let svd = y.svd(true, true);
    let (a, bt) = match (svd.u, svd.v_t) {
        (Some(a), Some(bt)) => (a, bt),
        _ => return Err(Error::Numerical("SVD failed".into())),
    };
    let s = svd.singular_values;
    // The correction must land on the smallest singular direction.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    let smax = s[order[0]];
    let smin = s[order[2]];
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::invalid(format!(
            "rank-deficient matrix (singular values {:.3e}, {:.3e}, {:.3e})",
            s[0], s[1], s[2]
        )));
    }
    let a = Matrix3::from_columns(&[a.column(order[0]), a.column(order[1]), a.column(order[2])]);
    let bt = Matrix3::from_rows(&[bt.row(order[0]), bt.row(order[1]), bt.row(order[2])]);
    let d = (a * bt).determinant().signum();
    let r = a * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * bt;
    Ok(RotationMatrix(r))
}

/// Rodrigues rotation about a unit axis.
pub fn rotation_from_axis_angle(axis: &Vec3, angle: f64) -> Result<RotationMatrix> {
    check_unit(axis, "rotation axis")?;
    Ok(rodrigues(axis, angle))
}

fn rodrigues(axis: &Vec3, angle: f64) -> RotationMatrix {
    let k = axis.cross_matrix();
    let r = Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
    RotationMatrix(r)
}

/// Rotation taking e_z to the unit vector `b` along the shortest great circle,
/// with no roll about the boresight: R = I + [v]× + [v]×²/(1 + b_z), v = e_z × b.
///
/// Undefined at b = −e_z; that case falls back to a half turn about e_x.
pub fn geodesic_from_ez(b: &Vec3) -> RotationMatrix {
    let b = b.normalize();
    if b.z <= -1.0 + 1e-12 {
        return rodrigues(&Vec3::x(), std::f64::consts::PI);
    }
    RotationMatrix(geodesic_matrix(&b))
}

/// The geodesic formula evaluated for an arbitrary (not necessarily unit) `b`.
pub(crate) fn geodesic_matrix(b: &Vec3) -> Matrix3<f64> {
    let v = Vec3::z().cross(b);
    let k = v.cross_matrix();
    Matrix3::identity() + k + k * k / (1.0 + b.z)
}

/// Partial derivatives of [`geodesic_matrix`] with respect to b_x, b_y, b_z.
pub(crate) fn geodesic_matrix_partials(b: &Vec3) -> [Matrix3<f64>; 3] {
    // R = I + K(b) + K(b)²/(1 + b_z), with K linear in (b_x, b_y) and independent of b_z.
    let v = Vec3::z().cross(b);
    let k = v.cross_matrix();
    let k2 = k * k;
    let inv = 1.0 / (1.0 + b.z);
    let dk = |i: usize| {
        let mut e = Vec3::zeros();
        e[i] = 1.0;
        Vec3::z().cross(&e).cross_matrix()
    };
    let dkx = dk(0);
    let dky = dk(1);
    [
        dkx + (dkx * k + k * dkx) * inv,
        dky + (dky * k + k * dky) * inv,
        -k2 * inv * inv,
    ]
}
