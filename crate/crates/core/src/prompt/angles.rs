use crate::numerics::Scalar;
use crate::{Error, Result};

use super::{PrimitiveSet, SpatialPrimitive};

/// Lower edges of the eight 45° horizontal regions after the wrap-around one.
const REGION_EDGES: [f64; 8] = [22.5, 67.5, 112.5, 157.5, 202.5, 247.5, 292.5, 337.5];

/// Elevation at or below which only horizontal terms are used.
pub const HORIZONTAL_ONLY_LIMIT: f64 = 20.0;
/// Elevation above which only the vertical term is used.
pub const VERTICAL_ONLY_LIMIT: f64 = 75.0;

/// Direction of `a` as seen from `b`, in the camera's horizontal frame.
///
/// Azimuth is in `[0, 360)`: 0° points away from the camera (behind) and the
/// angle grows toward the camera's right. Elevation is in `[-90, 90]`.
pub fn relative_geometry<T: Scalar>(pos_a: [T; 3], pos_b: [T; 3], camera_yaw_deg: T) -> Result<(T, T)> {
    let d = [pos_a[0] - pos_b[0], pos_a[1] - pos_b[1], pos_a[2] - pos_b[2]];
    if d.iter().all(|v| v.is_zero()) {
        return Err(Error::DegenerateGeometry);
    }
    if d.iter().any(|v| !v.is_finite()) || !camera_yaw_deg.is_finite() {
        return Err(Error::NonFinite("object or camera pose"));
    }
    let yaw = camera_yaw_deg.to_radians();
    let (s, c) = yaw.sin_cos();
    // Camera forward is (sin ψ, 0, cos ψ), camera right is (cos ψ, 0, −sin ψ).
    let depth = d[0] * s + d[2] * c;
    let lateral = d[0] * c - d[2] * s;
    let full = T::of(360.0);
    let mut azimuth = lateral.atan2(depth).to_degrees();
    if azimuth < T::zero() {
        azimuth += full;
    }
    if azimuth >= full {
        azimuth -= full;
    }
    let planar = (depth * depth + lateral * lateral).sqrt();
    let elevation = d[1].atan2(planar).to_degrees();
    Ok((azimuth, elevation))
}

/// Region index in `0..8`, region 0 being `[337.5, 22.5)`.
pub fn horizontal_region<T: Scalar>(azimuth: T) -> usize {
    REGION_EDGES.iter().filter(|&&edge| azimuth >= T::of(edge)).count() % 8
}

pub fn classify_horizontal<T: Scalar>(azimuth: T) -> PrimitiveSet {
    use SpatialPrimitive::*;
    let set = PrimitiveSet::EMPTY;
    match horizontal_region(azimuth) {
        0 => set.with(Behind),
        1 => set.with(Behind).with(Right),
        2 => set.with(Right),
        3 => set.with(Front).with(Right),
        4 => set.with(Front),
        5 => set.with(Front).with(Left),
        6 => set.with(Left),
        _ => set.with(Behind).with(Left),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElevationBand {
    HorizontalOnly,
    /// Horizontal terms plus this vertical term.
    Mixed(SpatialPrimitive),
    /// Only this vertical term.
    VerticalOnly(SpatialPrimitive),
}

pub fn classify_elevation<T: Scalar>(elevation: T) -> ElevationBand {
    let magnitude = elevation.abs();
    let vertical = if elevation > T::zero() {
        SpatialPrimitive::Above
    } else {
        SpatialPrimitive::Below
    };
    if magnitude <= T::of(HORIZONTAL_ONLY_LIMIT) {
        ElevationBand::HorizontalOnly
    } else if magnitude <= T::of(VERTICAL_ONLY_LIMIT) {
        ElevationBand::Mixed(vertical)
    } else {
        ElevationBand::VerticalOnly(vertical)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SpatialPrimitive::*;

    #[test]
    fn azimuth_convention_anchor() {
        // A farther from the camera (camera looks along +z at yaw 0), same height.
        let (az, el) = relative_geometry([0.0, 1.0, 1.0], [0.0, 1.0, 0.0], 0.0).unwrap();
        assert_eq!((az, el), (0.0, 0.0));
        // A to the camera's right.
        let (az, _) = relative_geometry([1.0, 1.0, 0.0], [0.0, 1.0, 0.0], 0.0f64).unwrap();
        assert!((az - 90.0).abs() < 1e-12);
    }

    #[test]
    fn straight_up_is_ninety() {
        let (_, el) = relative_geometry([0.2, 2.0, 0.3], [0.2, 1.0, 0.3], 37.0f64).unwrap();
        assert_eq!(el, 90.0);
    }

    #[test]
    fn coincident_centers_are_degenerate() {
        assert!(matches!(
            relative_geometry([1.0, 1.0, 1.0], [1.0, 1.0, 1.0], 0.0),
            Err(Error::DegenerateGeometry)
        ));
    }

    #[test]
    fn camera_yaw_shifts_azimuth() {
        // Oracle: rotate the displacement by hand with an explicit matrix.
        let d = [0.4, 0.0, 0.3];
        let (base, _) = relative_geometry(d, [0.0; 3], 0.0f64).unwrap();
        let (turned, _) = relative_geometry(d, [0.0; 3], 90.0f64).unwrap();
        let expected = (base - 90.0).rem_euclid(360.0);
        assert!((turned - expected).abs() < 1e-9, "{turned} vs {expected}");
        let rot = |yaw: f64| {
            let r = yaw.to_radians();
            let m = [[r.cos(), -r.sin()], [r.sin(), r.cos()]];
            // rows: lateral, depth in terms of (x, z)
            let lateral = m[0][0] * d[0] + m[0][1] * d[2];
            let depth = m[1][0] * d[0] + m[1][1] * d[2];
            lateral.atan2(depth).to_degrees().rem_euclid(360.0)
        };
        for yaw in [0.0, 30.0, 90.0, 135.0, 200.0, 315.0] {
            let (az, _) = relative_geometry(d, [0.0; 3], yaw).unwrap();
            assert!((az - rot(yaw)).abs() < 1e-9);
        }
    }

    #[test]
    fn horizontal_regions() {
        let set = |ps: &[SpatialPrimitive]| ps.iter().copied().collect::<PrimitiveSet>();
        assert_eq!(classify_horizontal(0.0), set(&[Behind]));
        assert_eq!(classify_horizontal(180.0), set(&[Front]));
        assert_eq!(classify_horizontal(45.0), set(&[Behind, Right]));
        assert_eq!(classify_horizontal(22.5), set(&[Behind, Right]));
        assert_eq!(classify_horizontal(22.499), set(&[Behind]));
        assert_eq!(classify_horizontal(337.5), set(&[Behind]));
        assert_eq!(classify_horizontal(270.0), set(&[Left]));
        assert_eq!(classify_horizontal(300.0f32), set(&[Behind, Left]));
    }

    #[test]
    fn elevation_bands() {
        assert_eq!(classify_elevation(10.0), ElevationBand::HorizontalOnly);
        assert_eq!(classify_elevation(20.0), ElevationBand::HorizontalOnly);
        assert_eq!(classify_elevation(45.0), ElevationBand::Mixed(Above));
        assert_eq!(classify_elevation(75.0), ElevationBand::Mixed(Above));
        assert_eq!(classify_elevation(-80.0), ElevationBand::VerticalOnly(Below));
        assert_eq!(classify_elevation(-20.5), ElevationBand::Mixed(Below));
    }
}
