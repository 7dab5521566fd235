use nalgebra::{Matrix3, Vector3};

use crate::geometry::{wrap_angle, Pose2, RelativeConstraint};

/// Residual of the edge `e_ij` between vertex states `e_i` and `e_j`.
///
/// The translational part is expressed in the world frame; the angular part
/// is wrapped into `[-π, π)`.
pub fn residual(ei: &Pose2, ej: &Pose2, c: &RelativeConstraint) -> Vector3<f64> {
    let dir = ei.theta() + c.heading();
    Vector3::new(
        ej.x() - ei.x() - c.d() * dir.cos(),
        ej.y() - ei.y() - c.d() * dir.sin(),
        wrap_angle(ej.theta() - ei.theta() - c.facing()),
    )
}

/// Analytic `(∂r/∂e_i, ∂r/∂e_j)`.
pub fn residual_jacobians(
    ei: &Pose2,
    _ej: &Pose2,
    c: &RelativeConstraint,
) -> (Matrix3<f64>, Matrix3<f64>) {
    let (s, co) = (ei.theta() + c.heading()).sin_cos();
    #[rustfmt::skip]
    let ji = Matrix3::new(
        -1.0, 0.0, c.d() * s,
        0.0, -1.0, -c.d() * co,
        0.0, 0.0, -1.0,
    );
    (ji, Matrix3::identity())
}

/// Robust loss applied to a squared residual norm.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Loss {
    Quadratic,
    Huber { delta: f64 },
}

impl Default for Loss {
    fn default() -> Self {
        Loss::Huber { delta: 1.0 }
    }
}

impl Loss {
    /// `ρ(s)`.
    pub fn rho(&self, s: f64) -> f64 {
        match *self {
            Loss::Quadratic => s,
            Loss::Huber { delta } => huber_rho(s, delta),
        }
    }

    /// `ρ'(s)`, the weight applied to the edge's normal-equation terms.
    pub fn weight(&self, s: f64) -> f64 {
        match *self {
            Loss::Quadratic => 1.0,
            Loss::Huber { delta } => huber_weight(s, delta),
        }
    }
}

pub fn huber_rho(s: f64, delta: f64) -> f64 {
    if s <= delta * delta {
        s
    } else {
        2.0 * delta * s.sqrt() - delta * delta
    }
}

/// `ρ'(s)` of the Huber loss: 1 inside the `δ` ball, `δ/√s` outside.
pub fn huber_weight(s: f64, delta: f64) -> f64 {
    if s <= delta * delta {
        1.0
    } else {
        delta / s.sqrt()
    }
}
