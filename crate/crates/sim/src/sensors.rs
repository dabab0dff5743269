//! Rangefinder and noiseless flow emulation.

use crate::noise::{range_factor, NoiseConfig};
use crate::raycast::{raycast_depth, Pose};
use crate::terrain::Terrain;
use crate::SimError;
use nalgebra::Vector3;
use ofnav_core::{
    predict_flow, AngularRates, CameraIntrinsics, CameraVelocity, FlowObservation, PixelPoint,
};

/// Boresight range with relative Gaussian error; reading `index` selects the
/// noise draw.
pub fn rangefinder_reading(
    terrain: &Terrain,
    pose: &Pose,
    k: &CameraIntrinsics,
    noise: &NoiseConfig,
    index: u64,
) -> Result<f64, SimError> {
    let z = raycast_depth(terrain, pose, PixelPoint::new(0.0, 0.0), k)?;
    Ok(z * range_factor(noise, index))
}

/// Motion field at `pts` for camera-frame velocity `v` and rates `w`, using
/// the exact ray-cast depth.
pub fn ground_truth_flow(
    terrain: &Terrain,
    pose: &Pose,
    v: &CameraVelocity,
    w: &AngularRates,
    pts: &[PixelPoint],
    k: &CameraIntrinsics,
) -> Vec<Result<FlowObservation, SimError>> {
    pts.iter()
        .map(|&p| {
            let z = raycast_depth(terrain, pose, p, k)?;
            Ok(FlowObservation {
                point: p,
                flow: predict_flow(p, 1.0 / z, v, w, k),
            })
        })
        .collect()
}

/// Camera-frame velocity from a world-frame velocity.
pub fn camera_velocity(pose: &Pose, v_world: &Vector3<f64>) -> CameraVelocity {
    let v = pose.r_cw * v_world;
    CameraVelocity::new(v.x, v.y, v.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::TerrainSpec;
    use ofnav_core::{pixel_to_normalized, planar_inverse_depth, Attitude, PlanarFixedModel};

    fn setup() -> (Terrain, Pose, CameraIntrinsics) {
        let t = Terrain::new(TerrainSpec::flat_plane(0.0), 0).unwrap();
        let a = Attitude::new(0.02, -0.03, 0.4);
        let pose = Pose::from_attitude(&t, Vector3::new(10.0, -5.0, 1000.0), &a);
        (
            t,
            pose,
            CameraIntrinsics::from_fov(1024, 1024, 1.0).unwrap(),
        )
    }

    fn grid() -> Vec<PixelPoint> {
        (0..25)
            .map(|i| {
                PixelPoint::new(
                    (i % 5) as f64 * 200.0 - 400.0,
                    (i / 5) as f64 * 200.0 - 400.0,
                )
            })
            .collect()
    }

    #[test]
    fn rangefinder_flat_nadir() {
        let t = Terrain::new(TerrainSpec::flat_plane(0.0), 0).unwrap();
        let pose = Pose::from_attitude(&t, Vector3::new(0.0, 0.0, 1000.0), &Attitude::identity());
        let k = CameraIntrinsics::from_fov(64, 64, 1.0).unwrap();
        let n = NoiseConfig::default();
        assert_eq!(rangefinder_reading(&t, &pose, &k, &n, 0).unwrap(), 1000.0);
        let noisy = NoiseConfig {
            range_sigma: 0.01,
            seed: 3,
            ..n
        };
        let a = rangefinder_reading(&t, &pose, &k, &noisy, 9).unwrap();
        assert_eq!(a, rangefinder_reading(&t, &pose, &k, &noisy, 9).unwrap());
        assert_ne!(a, 1000.0);
    }

    #[test]
    fn zero_motion_zero_flow() {
        let (t, pose, k) = setup();
        for o in ground_truth_flow(
            &t,
            &pose,
            &CameraVelocity::new(0.0, 0.0, 0.0),
            &AngularRates::default(),
            &grid(),
            &k,
        ) {
            let o = o.unwrap();
            assert_eq!((o.flow.u, o.flow.v), (0.0, 0.0));
        }
    }

    #[test]
    fn flat_matches_planar_model() {
        let (t, pose, k) = setup();
        let v = CameraVelocity::new(3.0, -20.0, 45.0);
        let w = AngularRates::new(0.01, -0.02, 0.005);
        let rho = raycast_depth(&t, &pose, PixelPoint::new(0.0, 0.0), &k).unwrap();
        let a = Attitude::new(0.02, -0.03, 0.4);
        let m = PlanarFixedModel::from_attitude(&a, rho).unwrap();
        for o in ground_truth_flow(&t, &pose, &v, &w, &grid(), &k) {
            let o = o.unwrap();
            let d = planar_inverse_depth(pixel_to_normalized(o.point, &k), &m).unwrap();
            let e = predict_flow(o.point, d.value(), &v, &w, &k);
            assert!((e.u - o.flow.u).abs() < 1e-10 * (1.0 + e.u.abs()));
            assert!((e.v - o.flow.v).abs() < 1e-10 * (1.0 + e.v.abs()));
        }
    }

    #[test]
    fn flow_matches_reprojection() {
        let (t, pose, k) = setup();
        let vw = Vector3::new(12.0, -7.0, -60.0);
        let v = camera_velocity(&pose, &vw);
        let w = AngularRates::new(0.01, -0.02, 0.03);
        let dt = 1e-3;
        // Advance the pose: position by v dt, rotation by exp(-[w]x dt).
        let wv = w.as_vector() * dt;
        let rot = nalgebra::Rotation3::new(-wv).into_inner();
        let next = Pose {
            position: pose.position + vw * dt,
            r_cw: rot * pose.r_cw,
        };
        for o in ground_truth_flow(&t, &pose, &v, &w, &grid(), &k) {
            let o = o.unwrap();
            let z = raycast_depth(&t, &pose, o.point, &k).unwrap();
            let world = pose.position + pose.ray_world(o.point.x / k.fx, o.point.y / k.fy) * z;
            let c = next.to_camera(&world);
            let (x, y) = (k.fx * c.x / c.z, k.fy * c.y / c.z);
            assert!((x - o.point.x - o.flow.u * dt).abs() < 1e-4);
            assert!((y - o.point.y - o.flow.v * dt).abs() < 1e-4);
        }
    }
}
