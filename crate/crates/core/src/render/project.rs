//! EWA projection of 3D gaussians to screen-space splats.

use crate::linalg::{self, Vec2, Vec3};
use crate::scene::{ActivatedGaussian, Camera};
use crate::sh;
use crate::Scalar;

/// Added to the diagonal of every projected covariance, in px².
pub const COV2D_REGULARIZATION: f64 = 0.3;
/// Means projecting outside `±GUARD_BAND` in NDC are culled.
pub const GUARD_BAND: f64 = 1.3;
/// Splat footprint radius in standard deviations.
pub const FOOTPRINT_SIGMAS: f64 = 3.0;

/// Screen-space splat of one gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Projected2D<T> {
    /// Pixel coordinates; pixel `(i, j)` has its center at `(i + ½, j + ½)`.
    pub mean2d: Vec2<T>,
    pub ndc_mean: Vec2<T>,
    /// Regularized covariance `(a, b, c)` of `[[a, b], [b, c]]`, px².
    pub cov2d: [T; 3],
    /// Inverse of `cov2d`, same packing.
    pub conic: [T; 3],
    pub depth: T,
    pub color: Vec3<T>,
    pub alpha0: T,
    /// Half extents of the footprint bounding box, px.
    pub extent: Vec2<T>,
    pub(crate) cam_point: Vec3<T>,
    /// Unit direction from the camera center to the mean.
    pub(crate) view_dir: Vec3<T>,
    pub(crate) view_dist: T,
    pub(crate) color_clamped: [bool; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub enum Projection<T> {
    Visible(Projected2D<T>),
    /// Behind the near plane, beyond the far plane, or outside the guard band.
    Culled,
    /// Projected covariance not positive definite after regularization.
    Singular,
}

impl<T> Projection<T> {
    pub fn visible(&self) -> Option<&Projected2D<T>> {
        match self {
            Projection::Visible(p) => Some(p),
            _ => None,
        }
    }
}

/// Jacobian of the perspective projection at camera-space point `t`, as its
/// four nonzero entries `(J00, J02, J11, J12)`.
#[inline]
pub(crate) fn projection_jacobian<T: Scalar>(cam: &Camera<T>, t: Vec3<T>) -> [T; 4] {
    let iz = T::one() / t[2];
    let iz2 = iz * iz;
    [cam.fx * iz, -cam.fx * t[0] * iz2, cam.fy * iz, -cam.fy * t[1] * iz2]
}

/// `T = J · W`, a 2×3 matrix.
#[inline]
pub(crate) fn jw<T: Scalar>(cam: &Camera<T>, jac: [T; 4]) -> [[T; 3]; 2] {
    let w = &cam.rotation;
    let mut out = [[T::zero(); 3]; 2];
    for k in 0..3 {
        out[0][k] = jac[0] * w[0][k] + jac[1] * w[2][k];
        out[1][k] = jac[2] * w[1][k] + jac[3] * w[2][k];
    }
    out
}

/// `T · Σ · Tᵀ` without regularization, packed `(a, b, c)`.
pub fn project_covariance<T: Scalar>(
    cam: &Camera<T>,
    cam_point: Vec3<T>,
    covariance: &linalg::Mat3<T>,
) -> [T; 3] {
    let t = jw(cam, projection_jacobian(cam, cam_point));
    let mut ts = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            ts[r][c] = t[r][0] * covariance[0][c] + t[r][1] * covariance[1][c] + t[r][2] * covariance[2][c];
        }
    }
    let dot = |a: &[T; 3], b: &[T; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    [dot(&ts[0], &t[0]), dot(&ts[0], &t[1]), dot(&ts[1], &t[1])]
}

/// Projects an activated gaussian, evaluating its color at SH `sh_degree`.
pub fn project<T: Scalar>(g: &ActivatedGaussian<T>, cam: &Camera<T>, sh_degree: usize) -> Projection<T> {
    let t = cam.world_to_camera(g.mean);
    let depth = t[2];
    if !(depth > cam.near) || !(depth <= cam.far) {
        return Projection::Culled;
    }
    let u = cam.fx * t[0] / depth + cam.cx;
    let v = cam.fy * t[1] / depth + cam.cy;
    let (w, h) = (T::from_usize_lossy(cam.width), T::from_usize_lossy(cam.height));
    let two = T::lit(2.0);
    let ndc = [two * u / w - T::one(), two * v / h - T::one()];
    let guard = T::lit(GUARD_BAND);
    if !(ndc[0].abs() <= guard && ndc[1].abs() <= guard) {
        return Projection::Culled;
    }

    let raw = project_covariance(cam, t, &g.covariance);
    let reg = T::lit(COV2D_REGULARIZATION);
    let cov2d = [raw[0] + reg, raw[1], raw[2] + reg];
    let Some((ca, cb, cc, _)) = linalg::inverse_sym2(cov2d[0], cov2d[1], cov2d[2]) else {
        return Projection::Singular;
    };

    let offset = linalg::sub3(g.mean, cam.center());
    let view_dist = linalg::norm3(offset);
    if !(view_dist > T::zero()) {
        return Projection::Culled;
    }
    let view_dir = linalg::scale3(offset, T::one() / view_dist);
    let basis = sh::basis(view_dir, sh_degree);
    let raw_color = sh::color_unclamped(&g.sh, &basis, sh_degree);
    let color_clamped = raw_color.map(|c| !(c > T::zero()));
    let color = raw_color.map(|c| c.max(T::zero()));

    let sigmas = T::lit(FOOTPRINT_SIGMAS);
    Projection::Visible(Projected2D {
        mean2d: [u, v],
        ndc_mean: ndc,
        cov2d,
        conic: [ca, cb, cc],
        depth,
        color,
        alpha0: g.opacity,
        extent: [sigmas * cov2d[0].sqrt(), sigmas * cov2d[2].sqrt()],
        cam_point: t,
        view_dir,
        view_dist,
        color_clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Gaussian3D;

    fn camera() -> Camera<f64> {
        Camera {
            rotation: linalg::identity3(),
            translation: [0.0; 3],
            fx: 40.0,
            fy: 40.0,
            cx: 16.0,
            cy: 16.0,
            width: 32,
            height: 32,
            near: 0.01,
            far: 100.0,
        }
    }

    #[test]
    fn on_axis_mean_hits_principal_point() {
        let g = Gaussian3D::isotropic([0.0, 0.0, 5.0], 0.1, 0.5, [0.2, 0.4, 0.6])
            .activate(0)
            .unwrap();
        let p = project(&g, &camera(), 0);
        let p = p.visible().unwrap();
        assert_eq!(p.mean2d, [16.0, 16.0]);
        assert_eq!(p.ndc_mean, [0.0, 0.0]);
        assert_eq!(p.depth, 5.0);
        assert!((p.color[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn on_axis_isotropic_covariance_scales_with_focal_over_depth() {
        let (sigma, z, f) = (0.1_f64, 5.0, 40.0);
        let g = Gaussian3D::isotropic([0.0, 0.0, z], sigma, 0.5, [0.5; 3])
            .activate(0)
            .unwrap();
        let raw = project_covariance(&camera(), [0.0, 0.0, z], &g.covariance);
        let expected = (f * sigma / z).powi(2);
        assert!((raw[0] - expected).abs() < 1e-12);
        assert!(raw[1].abs() < 1e-15);
        assert!((raw[2] - expected).abs() < 1e-12);
        let p = project(&g, &camera(), 0);
        let p = p.visible().unwrap();
        assert!((p.cov2d[0] - expected - COV2D_REGULARIZATION).abs() < 1e-12);
    }

    #[test]
    fn culling() {
        let cam = camera();
        let behind = Gaussian3D::isotropic([0.0, 0.0, -1.0], 0.1, 0.5, [0.5; 3])
            .activate(0)
            .unwrap();
        assert_eq!(project(&behind, &cam, 0), Projection::Culled);
        let at_near = Gaussian3D::isotropic([0.0, 0.0, 0.01], 0.1, 0.5, [0.5; 3])
            .activate(0)
            .unwrap();
        assert_eq!(project(&at_near, &cam, 0), Projection::Culled);
        // x_ndc = 2·(40·x/5 + 16)/32 − 1 = x/2: outside the guard band beyond x = 2.6.
        let far_left = Gaussian3D::isotropic([-2.7, 0.0, 5.0], 0.1, 0.5, [0.5; 3])
            .activate(0)
            .unwrap();
        assert_eq!(project(&far_left, &cam, 0), Projection::Culled);
        let inside_band = Gaussian3D::isotropic([-2.5, 0.0, 5.0], 0.1, 0.5, [0.5; 3])
            .activate(0)
            .unwrap();
        assert!(project(&inside_band, &cam, 0).visible().is_some());
    }
}
