//! SE(2) primitives in the (distance, heading, facing) parametrization.
//!
//! A [`RelativeConstraint`] describes where vertex `j` sits as seen from
//! vertex `i`: travel `d` meters along direction `heading` (measured in the
//! frame of `i`), then end up rotated by `facing`. Heading and facing are
//! kept separate because a place match can report a relative view angle that
//! differs from the direction of travel.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into the half-open interval `[-π, π)`.
///
/// `π` itself maps to `-π`. Non-finite input yields NaN; use
/// [`checked_wrap_angle`] to get an error instead.
pub fn wrap_angle(a: f64) -> f64 {
    if (-PI..PI).contains(&a) {
        return a;
    }
    if !a.is_finite() {
        return f64::NAN;
    }
    let mut r = (a + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if r >= PI {
        r -= TAU;
    }
    if r < -PI {
        r = -PI;
    }
    r
}

pub fn checked_wrap_angle(a: f64) -> Result<f64> {
    if a.is_finite() {
        Ok(wrap_angle(a))
    } else {
        Err(Error::NonFinite("angle"))
    }
}

/// Vertex state `(x, y, θ)` with `θ ∈ [-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    x: f64,
    y: f64,
    theta: f64,
}

impl Pose2 {
    pub const ORIGIN: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Pose reached by applying `c` from this pose.
    pub fn predict(&self, c: &RelativeConstraint) -> Pose2 {
        let dir = self.theta + c.heading;
        Pose2::new(
            self.x + c.d * dir.cos(),
            self.y + c.d * dir.sin(),
            self.theta + c.facing,
        )
    }

    /// Constraint that takes this pose onto `other`, i.e. the inverse of
    /// [`Pose2::predict`].
    pub fn between(&self, other: &Pose2) -> RelativeConstraint {
        let (s, c) = self.theta.sin_cos();
        let wx = other.x - self.x;
        let wy = other.y - self.y;
        RelativeConstraint::from_xy(c * wx + s * wy, -s * wx + c * wy, other.theta - self.theta)
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Applies the rigid transform `t` (interpreted as a pose of this frame
    /// in a parent frame) to the pose.
    pub fn transformed_by(&self, t: &Pose2) -> Pose2 {
        let (s, c) = t.theta.sin_cos();
        Pose2::new(
            t.x + c * self.x - s * self.y,
            t.y + s * self.x + c * self.y,
            t.theta + self.theta,
        )
    }
}

/// Edge measurement `(d, heading, facing)`; `d ≥ 0` and both angles wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelativeConstraint {
    d: f64,
    heading: f64,
    facing: f64,
}

impl RelativeConstraint {
    pub const IDENTITY: RelativeConstraint = RelativeConstraint {
        d: 0.0,
        heading: 0.0,
        facing: 0.0,
    };

    /// Builds a constraint, normalizing angles. A negative `d` is folded
    /// into the heading.
    pub fn new(d: f64, heading: f64, facing: f64) -> Self {
        let (d, heading) = if d < 0.0 {
            (-d, heading + PI)
        } else {
            (d, heading)
        };
        let heading = if d == 0.0 { 0.0 } else { wrap_angle(heading) };
        RelativeConstraint {
            d,
            heading,
            facing: wrap_angle(facing),
        }
    }

    /// Like [`RelativeConstraint::new`] but rejects non-finite fields.
    pub fn try_new(d: f64, heading: f64, facing: f64) -> Result<Self> {
        if !(d.is_finite() && heading.is_finite() && facing.is_finite()) {
            return Err(Error::NonFinite("relative constraint"));
        }
        Ok(Self::new(d, heading, facing))
    }

    /// From a displacement `(dx, dy)` in the frame of the source vertex plus
    /// a rotation. A pure rotation gets heading 0.
    pub fn from_xy(dx: f64, dy: f64, dtheta: f64) -> Self {
        let d = dx.hypot(dy);
        let heading = if d == 0.0 { 0.0 } else { dy.atan2(dx) };
        RelativeConstraint {
            d,
            heading: wrap_angle(heading),
            facing: wrap_angle(dtheta),
        }
    }

    pub fn to_xy(&self) -> (f64, f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (self.d * c, self.d * s, self.facing)
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn facing(&self) -> f64 {
        self.facing
    }

    /// `self` followed by `next`, with `next` expressed in the frame reached
    /// after `self`.
    pub fn compose(&self, next: &RelativeConstraint) -> RelativeConstraint {
        if *next == Self::IDENTITY {
            return *self;
        }
        if *self == Self::IDENTITY {
            return *next;
        }
        let (x1, y1, f1) = self.to_xy();
        let (x2, y2, f2) = next.to_xy();
        let (s, c) = f1.sin_cos();
        RelativeConstraint::from_xy(x1 + c * x2 - s * y2, y1 + s * x2 + c * y2, f1 + f2)
    }

    pub fn inverse(&self) -> RelativeConstraint {
        let (x, y, f) = self.to_xy();
        let (s, c) = f.sin_cos();
        RelativeConstraint::from_xy(-c * x - s * y, s * x - c * y, -f)
    }

    pub fn is_finite(&self) -> bool {
        self.d.is_finite() && self.heading.is_finite() && self.facing.is_finite()
    }
}

/// Free-function spelling of [`RelativeConstraint::to_xy`].
pub fn constraint_to_xy(c: &RelativeConstraint) -> (f64, f64, f64) {
    c.to_xy()
}

/// Free-function spelling of [`RelativeConstraint::from_xy`].
pub fn xy_to_constraint(dx: f64, dy: f64, dtheta: f64) -> RelativeConstraint {
    RelativeConstraint::from_xy(dx, dy, dtheta)
}

pub fn compose(a: &RelativeConstraint, b: &RelativeConstraint) -> RelativeConstraint {
    a.compose(b)
}

pub fn predict(p: &Pose2, c: &RelativeConstraint) -> Pose2 {
    p.predict(c)
}
