//! Angle conversions and per-eye target correction.
//!
//! Angles are degrees of visual angle, rightward and upward positive. Direction
//! vectors use a z-forward frame, so `(0, 0, 1)` is straight ahead.

use crate::error::{Error, Result};
use crate::types::{Eye, GazeChannel, TargetStep, UnitGazeVector};

/// Converts a gaze direction into horizontal and vertical angles.
///
/// `x = atan2(vx, vz)` and `y = atan2(vy, vz)`, both mapped into (-180, 180].
pub fn unit_vector_to_angles(v: UnitGazeVector) -> Result<(f64, f64)> {
    let UnitGazeVector { vx, vy, vz } = v;
    if !(vx.is_finite() && vy.is_finite() && vz.is_finite()) {
        return Err(Error::DegenerateVector);
    }
    if (vx == 0.0 && vz == 0.0) || (vy == 0.0 && vz == 0.0) {
        return Err(Error::DegenerateVector);
    }
    Ok((atan2_deg(vx, vz), atan2_deg(vy, vz)))
}

/// Inverse of [`unit_vector_to_angles`] for angles strictly inside (-90, 90).
pub fn angles_to_unit_vector(x_deg: f64, y_deg: f64) -> Option<UnitGazeVector> {
    if x_deg.abs() >= 90.0 || y_deg.abs() >= 90.0 {
        return None;
    }
    UnitGazeVector::normalized(x_deg.to_radians().tan(), y_deg.to_radians().tan(), 1.0)
}

fn atan2_deg(y: f64, x: f64) -> f64 {
    let a = y.atan2(x).to_degrees();
    if a <= -180.0 {
        a + 360.0
    } else {
        a
    }
}

/// Re-expresses a nasal-bridge target in the frame of one eye.
///
/// The target sits at `(depth·tan x, depth·tan y)` on a plane `depth_mm` in front
/// of the eyes; the eye is displaced horizontally by half the interpupillary
/// distance (left eye negative). Non-monocular eyes are returned unchanged.
pub fn correct_target_for_eye(step: TargetStep, eye: Eye, ipd_mm: f64) -> Result<TargetStep> {
    if !(step.depth_mm > 0.0) {
        return Err(Error::InvalidGeometry("target depth must be positive"));
    }
    if !(ipd_mm >= 0.0) {
        return Err(Error::InvalidGeometry(
            "interpupillary distance must be non-negative",
        ));
    }
    let eye_x_mm = match eye {
        Eye::Left => -ipd_mm / 2.0,
        Eye::Right => ipd_mm / 2.0,
        Eye::Binocular | Eye::Version => return Ok(step),
    };
    let depth = step.depth_mm;
    let world_x = depth * step.x_deg.to_radians().tan();
    let world_y = depth * step.y_deg.to_radians().tan();
    Ok(TargetStep {
        x_deg: atan2_deg(world_x - eye_x_mm, depth),
        // Same vertical convention as the tracker output: atan2(vy, vz).
        y_deg: atan2_deg(world_y, depth),
        ..step
    })
}

/// Shifts every valid sample by a constant offset.
pub fn apply_static_offset(channel: &GazeChannel, dx_deg: f64, dy_deg: f64) -> GazeChannel {
    channel.map_valid(|x, y| (x + dx_deg, y + dy_deg))
}
