//! Pose integration for odometry mappings that report wheel travel.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rdis_core::{integrate_pose, Env, EvalError, ExprAst, Pose, Twist};

#[derive(Debug)]
struct Track {
    last: Option<(f64, f64)>,
    pose: Pose,
}

/// Turns cumulative left/right wheel travel into a pose. Each update
/// treats the travel since the previous one as a constant-curvature arc,
/// which is exact when the wheel speeds were constant in between.
#[derive(Debug)]
pub struct OdometryTracker {
    returns: BTreeMap<String, ExprAst>,
    bindings: BTreeMap<String, ExprAst>,
    wheel_track_m: f64,
    track: Mutex<Track>,
}

impl OdometryTracker {
    pub fn new(returns: BTreeMap<String, ExprAst>, bindings: BTreeMap<String, ExprAst>, wheel_track_m: f64) -> Self {
        Self {
            returns,
            bindings,
            wheel_track_m,
            track: Mutex::new(Track {
                last: None,
                pose: Pose::ORIGIN,
            }),
        }
    }

    /// Evaluates `(left_m, right_m)` with `env` holding constants and state.
    pub fn wheel_travel(&self, env: &Env) -> Result<(f64, f64), EvalError> {
        let mut bound = env.clone();
        for (k, e) in &self.returns {
            bound.bind(k.clone(), e.eval(env)?);
        }
        let get = |k: &str| {
            self.bindings
                .get(k)
                .expect("validated wheel-travel binding")
                .eval(&bound)
        };
        Ok((get("left_m")?, get("right_m")?))
    }

    /// Folds a new travel reading into the pose. The first reading only
    /// sets the baseline.
    pub fn update(&self, env: &Env) -> Result<Pose, EvalError> {
        let (l, r) = self.wheel_travel(env)?;
        let mut t = self.track.lock().expect("odometry lock poisoned");
        if let Some((l0, r0)) = t.last {
            let (dl, dr) = (l - l0, r - r0);
            let twist = Twist::new((dl + dr) / 2.0, (dr - dl) / self.wheel_track_m);
            t.pose = integrate_pose(t.pose, twist, 1.0).expect("unit step is non-negative");
        }
        t.last = Some((l, r));
        Ok(t.pose)
    }

    pub fn pose(&self) -> Pose {
        self.track.lock().expect("odometry lock poisoned").pose
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rdis_core::parse_expr;

    fn tracker() -> OdometryTracker {
        let e = |s: &str| parse_expr(s).unwrap();
        OdometryTracker::new(
            BTreeMap::from([("left_m".into(), e("l / 1000")), ("right_m".into(), e("r / 1000"))]),
            BTreeMap::from([("left_m".into(), e("left_m")), ("right_m".into(), e("right_m"))]),
            0.1,
        )
    }

    #[test]
    fn first_reading_is_baseline() {
        let t = tracker();
        let p = t.update(&Env::new().with("l", 500.0).with("r", 500.0)).unwrap();
        assert_eq!(p, Pose::ORIGIN);
        let p = t.update(&Env::new().with("l", 700.0).with("r", 700.0)).unwrap();
        assert!((p.x_m - 0.2).abs() < 1e-12 && p.y_m.abs() < 1e-12);
    }

    #[test]
    fn spin_in_place() {
        let t = tracker();
        t.update(&Env::new().with("l", 0.0).with("r", 0.0)).unwrap();
        let p = t.update(&Env::new().with("l", -50.0).with("r", 50.0)).unwrap();
        assert!((p.theta_rad - 1.0).abs() < 1e-12);
        assert!(p.x_m.abs() < 1e-12 && p.y_m.abs() < 1e-12);
    }
}
