//! Pinhole camera: +z looks forward, image origin at the top-left,
//! pixel (u, v) = (fx x/z + cx, fy y/z + cy).

use super::{Mat3, Vec3, Z_NEAR};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// World-to-camera rotation.
    pub r_cw: Mat3,
    /// World-to-camera translation.
    pub t_cw: Vec3,
}

impl Camera {
    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.r_cw.mul_vec(p) + self.t_cw
    }

    pub fn camera_to_world(&self, p_cam: Vec3) -> Vec3 {
        self.r_cw.transpose().mul_vec(p_cam - self.t_cw)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -self.r_cw.transpose().mul_vec(self.t_cw)
    }

    /// Pixel coordinates and depth of a camera-space point, `None` when the
    /// point sits at or behind the near plane.
    pub fn project_point(&self, p_cam: Vec3) -> Option<(f64, f64, f64)> {
        if p_cam.z <= Z_NEAR {
            return None;
        }
        let inv_z = 1.0 / p_cam.z;
        Some((
            self.fx * p_cam.x * inv_z + self.cx,
            self.fy * p_cam.y * inv_z + self.cy,
            p_cam.z,
        ))
    }

    /// Ray direction in camera space through the center of pixel (px, py),
    /// with unit z.
    pub fn pixel_ray(&self, px: u32, py: u32) -> Vec3 {
        Vec3::new(
            (px as f64 + 0.5 - self.cx) / self.fx,
            (py as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fy.is_finite() && self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Invalid(format!(
                "focal lengths must be finite and positive, got ({}, {})",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::Invalid("principal point must be finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid(format!(
                "image size must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !self.r_cw.is_finite() || !self.t_cw.is_finite() {
            return Err(Error::Invalid("camera pose must be finite".into()));
        }
        let err = self.r_cw.orthonormality_error();
        if err > 1e-8 {
            return Err(Error::Invalid(format!(
                "camera rotation is not orthonormal (error {err:.2e})"
            )));
        }
        if (self.r_cw.det() - 1.0).abs() > 1e-8 {
            return Err(Error::Invalid("camera rotation must have det +1".into()));
        }
        Ok(())
    }

    /// Camera on a sphere around `target`, looking at it, world +z as the up
    /// hint.
    pub fn look_at(center: Vec3, target: Vec3, fx: f64, fy: f64, width: u32, height: u32) -> Camera {
        let forward = (target - center).normalized().expect("camera on top of target");
        let up_hint = if forward.z.abs() > 0.99 {
            Vec3::new(0.0, 1.0, 0.0)
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };
        // Camera basis in world coordinates: x right, y down, z forward.
        let right = forward.cross(up_hint).normalized().expect("degenerate camera basis");
        let down = forward.cross(right);
        let r_cw = Mat3::from_rows(
            [right.x, right.y, right.z],
            [down.x, down.y, down.z],
            [forward.x, forward.y, forward.z],
        );
        let t_cw = -r_cw.mul_vec(center);
        Camera {
            fx,
            fy,
            cx: width as f64 * 0.5,
            cy: height as f64 * 0.5,
            width,
            height,
            r_cw,
            t_cw,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{quat_to_rotmat, Quat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_camera(rng: &mut impl Rng) -> Camera {
        let q = Quat::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(1.0..2.0),
        )
        .normalized();
        Camera {
            fx: rng.gen_range(50.0..200.0),
            fy: rng.gen_range(50.0..200.0),
            cx: rng.gen_range(20.0..50.0),
            cy: rng.gen_range(20.0..50.0),
            width: 64,
            height: 64,
            r_cw: quat_to_rotmat(q),
            t_cw: Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ),
        }
    }

    #[test]
    fn world_to_camera_matches_homogeneous_oracle() {
        // Oracle: 4x4 homogeneous transform applied to [p; 1].
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let p = Vec3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let mut h = [[0.0f64; 4]; 4];
            for i in 0..3 {
                for j in 0..3 {
                    h[i][j] = cam.r_cw.m[i][j];
                }
            }
            h[0][3] = cam.t_cw.x;
            h[1][3] = cam.t_cw.y;
            h[2][3] = cam.t_cw.z;
            h[3][3] = 1.0;
            let hp = [p.x, p.y, p.z, 1.0];
            let mut out = [0.0f64; 4];
            for i in 0..4 {
                for j in 0..4 {
                    out[i] += h[i][j] * hp[j];
                }
            }
            let got = cam.world_to_camera(p);
            assert!((got.x - out[0]).abs() < 1e-12);
            assert!((got.y - out[1]).abs() < 1e-12);
            assert!((got.z - out[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn world_camera_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let p = Vec3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            let back = cam.camera_to_world(cam.world_to_camera(p));
            assert!((back - p).norm() < 1e-10, "round trip error {}", (back - p).norm());
        }
    }

    #[test]
    fn camera_center_maps_to_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..50 {
            let cam = random_camera(&mut rng);
            assert!(cam.world_to_camera(cam.center()).norm() < 1e-10);
        }
    }

    #[test]
    fn project_point_matches_projection_matrix_oracle() {
        // Oracle: P = K [R | t], homogeneous divide.
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..200 {
            let cam = random_camera(&mut rng);
            let p = Vec3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let pc = cam.world_to_camera(p);
            let k = [
                [cam.fx, 0.0, cam.cx],
                [0.0, cam.fy, cam.cy],
                [0.0, 0.0, 1.0],
            ];
            let mut q = [0.0f64; 3];
            for i in 0..3 {
                q[i] = k[i][0] * pc.x + k[i][1] * pc.y + k[i][2] * pc.z;
            }
            match cam.project_point(pc) {
                Some((u, v, depth)) => {
                    assert!(pc.z > Z_NEAR);
                    assert!((u - q[0] / q[2]).abs() < 1e-9);
                    assert!((v - q[1] / q[2]).abs() < 1e-9);
                    assert!((depth - pc.z).abs() < 1e-12);
                }
                None => assert!(pc.z <= Z_NEAR),
            }
        }
    }

    #[test]
    fn on_axis_point_projects_to_principal_point() {
        let cam = Camera {
            fx: 100.0,
            fy: 100.0,
            cx: 32.0,
            cy: 32.0,
            width: 64,
            height: 64,
            r_cw: Mat3::identity(),
            t_cw: Vec3::ZERO,
        };
        let (u, v, d) = cam.project_point(Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((u, v, d), (32.0, 32.0, 2.0));
        // Doubling fx doubles the offset of off-axis points.
        let (u1, _, _) = cam.project_point(Vec3::new(0.5, 0.0, 2.0)).unwrap();
        let cam2 = Camera { fx: 200.0, ..cam };
        let (u2, _, _) = cam2.project_point(Vec3::new(0.5, 0.0, 2.0)).unwrap();
        assert!((u2 - 32.0 - 2.0 * (u1 - 32.0)).abs() < 1e-12);
        assert!(cam2.project_point(Vec3::new(0.0, 0.0, -1.0)).is_none());
    }

    #[test]
    fn look_at_faces_target() {
        let cam = Camera::look_at(Vec3::new(3.0, 1.0, 2.0), Vec3::ZERO, 80.0, 80.0, 64, 64);
        cam.validate().unwrap();
        let pc = cam.world_to_camera(Vec3::ZERO);
        assert!(pc.x.abs() < 1e-10 && pc.y.abs() < 1e-10);
        assert!(pc.z > 0.0, "target must be in front");
        let (u, v, _) = cam.project_point(pc).unwrap();
        assert!((u - 32.0).abs() < 1e-9 && (v - 32.0).abs() < 1e-9);
    }

    #[test]
    fn validate_rejects_bad_cameras() {
        let mut cam = Camera::look_at(Vec3::new(0.0, -3.0, 0.0), Vec3::ZERO, 80.0, 80.0, 64, 64);
        cam.fx = -1.0;
        assert!(cam.validate().is_err());
        cam.fx = 80.0;
        cam.r_cw.m[0][0] = 2.0;
        assert!(cam.validate().is_err());
    }
}
