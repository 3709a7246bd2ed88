use crate::smdp::{normalize_angle, ExecutableAction, Pose};

/// `sin(u) / u`, continuous through zero.
fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-6 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// Exact unicycle motion under constant `(v, omega)` for `dt` seconds.
///
/// Uses the half-angle form of the arc displacement,
/// `v dt sinc(omega dt / 2) (cos, sin)(theta + omega dt / 2)`, which equals
/// `(v / omega)(sin(theta + omega dt) - sin theta, cos theta - cos(theta + omega dt))`
/// and stays accurate as `omega -> 0`.
pub fn propagate_arc(pose: Pose, action: &ExecutableAction, dt: f64) -> Pose {
    if dt == 0.0 {
        return pose;
    }
    let half = 0.5 * action.omega * dt;
    let chord = action.v * dt * sinc(half);
    let heading = pose.theta + half;
    Pose {
        x: pose.x + chord * heading.cos(),
        y: pose.y + chord * heading.sin(),
        theta: normalize_angle(pose.theta + action.omega * dt),
    }
}
