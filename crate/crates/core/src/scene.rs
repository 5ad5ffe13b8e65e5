//! Optimizable scene representation: gaussians, cameras and image buffers.
//!
//! Raw parameters are unconstrained. Scale is stored as `ln(σ)` and opacity
//! as a logit, so every optimizer step yields a valid gaussian:
//!
//! ```text
//! σ = exp(log_scale)            α₀ = sigmoid(opacity_logit)
//! Σ = R(q) · diag(σ²) · R(q)ᵀ
//! ```

use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Vec3};
use crate::Scalar;

/// Number of SH coefficients per channel at degree 3.
pub const SH_COEFFS: usize = 16;
/// Highest supported SH degree.
pub const MAX_SH_DEGREE: usize = 3;
/// Scalars per gaussian in the flat parameter layout.
pub const PARAMS_PER_GAUSSIAN: usize = 59;

/// Offsets into the flat per-gaussian parameter layout
/// `position(3) log_scale(3) rotation(4) opacity_logit(1) sh(16×3)`.
pub mod layout {
    pub const POSITION: usize = 0;
    pub const LOG_SCALE: usize = 3;
    pub const ROTATION: usize = 6;
    pub const OPACITY: usize = 10;
    pub const SH: usize = 11;
    /// First coefficient after the DC band.
    pub const SH_REST: usize = SH + 3;
}

/// Number of SH coefficients used at `degree`.
#[inline]
pub fn sh_coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian3D<T> {
    pub position: Vec3<T>,
    pub log_scale: Vec3<T>,
    /// `(w, x, y, z)`, unit norm after every optimizer step.
    pub rotation: [T; 4],
    pub opacity_logit: T,
    /// `sh[k][c]`: coefficient `k = l² + l + m` for channel `c`.
    pub sh: [[T; 3]; SH_COEFFS],
}

/// Gaussian with its activations applied.
#[derive(Clone, Debug)]
pub struct ActivatedGaussian<T> {
    pub mean: Vec3<T>,
    pub scale: Vec3<T>,
    pub rotation: Mat3<T>,
    pub covariance: Mat3<T>,
    pub opacity: T,
    pub sh: [[T; 3]; SH_COEFFS],
}

impl<T: Scalar> Gaussian3D<T> {
    /// Isotropic, unrotated gaussian with the given position, `σ`, opacity and base color.
    pub fn isotropic(position: Vec3<T>, sigma: T, opacity: T, rgb: Vec3<T>) -> Self {
        let mut sh = [[T::zero(); 3]; SH_COEFFS];
        for c in 0..3 {
            sh[0][c] = crate::sh::rgb_to_dc(rgb[c]);
        }
        Self {
            position,
            log_scale: [sigma.ln(); 3],
            rotation: [T::one(), T::zero(), T::zero(), T::zero()],
            opacity_logit: opacity.logit(),
            sh,
        }
    }

    #[inline]
    pub fn scale(&self) -> Vec3<T> {
        self.log_scale.map(|v| v.exp())
    }

    #[inline]
    pub fn opacity(&self) -> T {
        self.opacity_logit.sigmoid()
    }

    #[inline]
    pub fn max_scale(&self) -> T {
        let s = self.scale();
        s[0].max(s[1]).max(s[2])
    }

    /// First non-finite field, if any.
    pub fn non_finite_field(&self) -> Option<&'static str> {
        if self.position.iter().any(|v| !v.is_finite()) {
            return Some("position");
        }
        if self.log_scale.iter().any(|v| !v.is_finite()) {
            return Some("log_scale");
        }
        if self.rotation.iter().any(|v| !v.is_finite()) {
            return Some("rotation");
        }
        if !self.opacity_logit.is_finite() {
            return Some("opacity_logit");
        }
        if self.sh.iter().flatten().any(|v| !v.is_finite()) {
            return Some("sh");
        }
        None
    }

    /// Applies activations. `index` is only used in the error.
    pub fn activate(&self, index: usize) -> Result<ActivatedGaussian<T>> {
        if let Some(field) = self.non_finite_field() {
            return Err(Error::NonFiniteGaussian { index, field });
        }
        let scale = self.scale();
        if scale.iter().any(|s| !(s.is_finite() && *s > T::zero())) {
            return Err(Error::NonFiniteGaussian {
                index,
                field: "scale",
            });
        }
        let qn = self.rotation.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if !(qn > T::zero()) {
            return Err(Error::NonFiniteGaussian {
                index,
                field: "rotation",
            });
        }
        let rotation = linalg::quat_to_mat(self.rotation);
        let mut m = rotation;
        for row in m.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * scale[j];
            }
        }
        let covariance = linalg::mat3_mul(&m, &linalg::transpose3(&m));
        Ok(ActivatedGaussian {
            mean: self.position,
            scale,
            rotation,
            covariance,
            opacity: self.opacity(),
            sh: self.sh,
        })
    }

    pub fn normalize_rotation(&mut self) {
        let n = self.rotation.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if n > T::zero() && n.is_finite() {
            for v in self.rotation.iter_mut() {
                *v = *v / n;
            }
        } else {
            self.rotation = [T::one(), T::zero(), T::zero(), T::zero()];
        }
    }

    pub fn to_flat(&self) -> [T; PARAMS_PER_GAUSSIAN] {
        let mut out = [T::zero(); PARAMS_PER_GAUSSIAN];
        out[layout::POSITION..layout::POSITION + 3].copy_from_slice(&self.position);
        out[layout::LOG_SCALE..layout::LOG_SCALE + 3].copy_from_slice(&self.log_scale);
        out[layout::ROTATION..layout::ROTATION + 4].copy_from_slice(&self.rotation);
        out[layout::OPACITY] = self.opacity_logit;
        for (k, coeff) in self.sh.iter().enumerate() {
            out[layout::SH + 3 * k..layout::SH + 3 * k + 3].copy_from_slice(coeff);
        }
        out
    }

    pub fn from_flat(flat: &[T; PARAMS_PER_GAUSSIAN]) -> Self {
        let mut sh = [[T::zero(); 3]; SH_COEFFS];
        for (k, coeff) in sh.iter_mut().enumerate() {
            coeff.copy_from_slice(&flat[layout::SH + 3 * k..layout::SH + 3 * k + 3]);
        }
        Self {
            position: [flat[0], flat[1], flat[2]],
            log_scale: [flat[3], flat[4], flat[5]],
            rotation: [flat[6], flat[7], flat[8], flat[9]],
            opacity_logit: flat[layout::OPACITY],
            sh,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCloud<T> {
    pub gaussians: Vec<Gaussian3D<T>>,
    /// Highest SH band evaluated by the renderer, in `0..=3`.
    pub active_sh_degree: usize,
}

impl<T: Scalar> GaussianCloud<T> {
    pub fn new(gaussians: Vec<Gaussian3D<T>>, active_sh_degree: usize) -> Self {
        Self {
            gaussians,
            active_sh_degree: active_sh_degree.min(MAX_SH_DEGREE),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn activate_all(&self) -> Result<Vec<ActivatedGaussian<T>>> {
        self.gaussians
            .iter()
            .enumerate()
            .map(|(i, g)| g.activate(i))
            .collect()
    }

    /// Fails on the first gaussian with a non-finite parameter.
    pub fn validate(&self) -> Result<()> {
        for (index, g) in self.gaussians.iter().enumerate() {
            if let Some(field) = g.non_finite_field() {
                return Err(Error::NonFiniteGaussian { index, field });
            }
        }
        Ok(())
    }
}

/// Pinhole camera with a world-to-camera pose: `x_cam = R · x_world + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
    pub near: T,
    pub far: T,
}

pub const MIN_IMAGE_SIDE: usize = 16;

impl<T: Scalar> Camera<T> {
    /// Camera looking from `eye` at `target` with a symmetric field of view.
    pub fn look_at(
        eye: Vec3<T>,
        target: Vec3<T>,
        up: Vec3<T>,
        fov_x_degrees: T,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let rotation = linalg::look_at(eye, target, up);
        let translation = linalg::scale3(linalg::mat3_vec(&rotation, eye), -T::one());
        let half = fov_x_degrees.to_radians() / T::lit(2.0);
        let f = T::from_usize_lossy(width) / (T::lit(2.0) * half.tan());
        let cam = Self {
            rotation,
            translation,
            fx: f,
            fy: f,
            cx: T::from_usize_lossy(width) / T::lit(2.0),
            cy: T::from_usize_lossy(height) / T::lit(2.0),
            width,
            height,
            near: T::lit(0.01),
            far: T::lit(100.0),
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_IMAGE_SIDE || self.height < MIN_IMAGE_SIDE {
            return Err(Error::InvalidCamera(format!(
                "image {}x{} smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}",
                self.width, self.height
            )));
        }
        let err = linalg::orthonormality_error(&self.rotation);
        if !(err <= T::lit(1e-6)) {
            return Err(Error::InvalidCamera(format!(
                "rotation not orthonormal (error {err})"
            )));
        }
        if !(self.near > T::zero() && self.near < self.far) {
            return Err(Error::InvalidCamera(format!(
                "need 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .chain(self.translation.iter())
            .all(|v| v.is_finite());
        if !finite || !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidCamera("non-finite or non-positive intrinsics".into()));
        }
        Ok(())
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vec3<T> {
        linalg::scale3(linalg::mat3_t_vec(&self.rotation, self.translation), -T::one())
    }

    #[inline]
    pub fn world_to_camera(&self, p: Vec3<T>) -> Vec3<T> {
        linalg::add3(linalg::mat3_vec(&self.rotation, p), self.translation)
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Row-major `H×W×3` float image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> ImageBuffer<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [T::zero(); 3])
    }

    pub fn filled(width: usize, height: usize, rgb: Vec3<T>) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height}x3 image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> Vec3<T> {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn clamped(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|v| v.max(T::zero()).min(T::one()))
                .collect(),
        }
    }

    /// Index of the first value outside `[0, 1]` (or non-finite).
    pub fn first_out_of_range(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|v| !(*v >= T::zero() && *v <= T::one()))
    }

    /// Rec.601 luminance as a single-channel plane.
    pub fn luminance(&self) -> crate::loss::Plane<T> {
        let (r, g, b) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| r * p[0] + g * p[1] + b * p[2])
            .collect();
        crate::loss::Plane {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn cast<U: Scalar>(&self) -> ImageBuffer<U> {
        ImageBuffer {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}
