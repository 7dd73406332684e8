//! Differential-drive kinematics and pose integration.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

/// Planar velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub linear_mps: f64,
    pub angular_radps: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist::new(0.0, 0.0);

    pub const fn new(linear_mps: f64, angular_radps: f64) -> Self {
        Self {
            linear_mps,
            angular_radps,
        }
    }
}

/// Ground speed of each wheel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelSpeeds {
    pub left_mps: f64,
    pub right_mps: f64,
}

impl WheelSpeeds {
    pub const ZERO: WheelSpeeds = WheelSpeeds::new(0.0, 0.0);

    pub const fn new(left_mps: f64, right_mps: f64) -> Self {
        Self { left_mps, right_mps }
    }
}

/// Position and heading in the odometry frame. `theta_rad` is kept in
/// `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub x_m: f64,
    pub y_m: f64,
    pub theta_rad: f64,
}

impl Pose {
    pub const ORIGIN: Pose = Pose::new(0.0, 0.0, 0.0);

    pub const fn new(x_m: f64, y_m: f64, theta_rad: f64) -> Self {
        Self { x_m, y_m, theta_rad }
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4} m, {:.4} m, {:.4} rad)", self.x_m, self.y_m, self.theta_rad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum KinematicsError {
    #[error("wheel track must be positive, got {0}")]
    NonPositiveTrack(f64),
    #[error("time step must be non-negative, got {0}")]
    NegativeDt(f64),
}

/// Below this `|ω·dt|` the arc update switches to the straight-line form.
pub const STRAIGHT_LINE_EPS: f64 = 1e-9;

/// Maps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

fn check_track(track: f64) -> Result<(), KinematicsError> {
    if track > 0.0 {
        Ok(())
    } else {
        Err(KinematicsError::NonPositiveTrack(track))
    }
}

/// Wheel speeds that realize `t`: `v ∓ ω·track/2`.
pub fn inverse(t: Twist, wheel_track_m: f64) -> Result<WheelSpeeds, KinematicsError> {
    check_track(wheel_track_m)?;
    let half = t.angular_radps * wheel_track_m / 2.0;
    Ok(WheelSpeeds {
        left_mps: t.linear_mps - half,
        right_mps: t.linear_mps + half,
    })
}

/// Body twist produced by wheel speeds `w`.
pub fn forward(w: WheelSpeeds, wheel_track_m: f64) -> Result<Twist, KinematicsError> {
    check_track(wheel_track_m)?;
    Ok(Twist {
        linear_mps: (w.left_mps + w.right_mps) / 2.0,
        angular_radps: (w.right_mps - w.left_mps) / wheel_track_m,
    })
}

/// Advances `p` along the exact constant-twist arc for `dt_s` seconds.
pub fn integrate_pose(p: Pose, t: Twist, dt_s: f64) -> Result<Pose, KinematicsError> {
    if dt_s < 0.0 || dt_s.is_nan() {
        return Err(KinematicsError::NegativeDt(dt_s));
    }
    let v = t.linear_mps;
    let w = t.angular_radps;
    let dtheta = w * dt_s;
    let (x, y, theta) = if dtheta.abs() < STRAIGHT_LINE_EPS {
        let (s, c) = p.theta_rad.sin_cos();
        (p.x_m + v * dt_s * c, p.y_m + v * dt_s * s, p.theta_rad + dtheta)
    } else {
        let r = v / w;
        let theta1 = p.theta_rad + dtheta;
        (
            p.x_m + r * (theta1.sin() - p.theta_rad.sin()),
            p.y_m - r * (theta1.cos() - p.theta_rad.cos()),
            theta1,
        )
    };
    Ok(Pose {
        x_m: x,
        y_m: y,
        theta_rad: normalize_angle(theta),
    })
}
