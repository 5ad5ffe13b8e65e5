//! Edge extraction for the geometric weights: Sobel gradient magnitude,
//! non-maximum suppression and box-kernel edge spreading.
//!
//! There is no hysteresis stage. Suppressed magnitudes are kept as a
//! continuous edge strength rather than binarized.

use super::Plane;
use crate::error::{Error, Result};
use crate::scene::ImageBuffer;
use crate::Scalar;

/// σ of the 5×5 pre-blur applied before differentiation.
pub const PRE_BLUR_SIGMA: f64 = 1.4;

/// Non-negative edge strength per pixel.
pub type EdgeMap<T> = Plane<T>;

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable 5×5 Gaussian blur with replicated borders.
pub fn gaussian_blur5<T: Scalar>(src: &Plane<T>, sigma: f64) -> Plane<T> {
    let raw: Vec<f64> = (-2..=2)
        .map(|d: i32| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let kernel: Vec<T> = raw.iter().map(|v| T::lit(v / total)).collect();
    let (w, h) = (src.width, src.height);
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = clamp_index(x as isize + k as isize - 2, w);
                acc = acc + kv * src.data[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = clamp_index(y as isize + k as isize - 2, h);
                acc = acc + kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    Plane {
        width: w,
        height: h,
        data: out,
    }
}

/// Sobel gradient magnitude `√(gx² + gy²)` and direction `atan2(gy, gx)`
/// (radians, `y` pointing down the rows). Borders are replicated.
pub fn gradient_magnitude<T: Scalar>(image: &Plane<T>) -> Result<(Plane<T>, Plane<T>)> {
    let (w, h) = (image.width, image.height);
    if w < 3 || h < 3 {
        return Err(Error::InvalidArgument(format!(
            "gradient needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let at = |x: isize, y: isize| image.data[clamp_index(y, h) * w + clamp_index(x, w)];
    let two = T::lit(2.0);
    let mut mag = vec![T::zero(); w * h];
    let mut dir = vec![T::zero(); w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + two * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + two * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + two * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + two * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            dir[i] = gy.atan2(gx);
        }
    }
    Ok((
        Plane {
            width: w,
            height: h,
            data: mag,
        },
        Plane {
            width: w,
            height: h,
            data: dir,
        },
    ))
}

/// Neighbor offset along the gradient direction quantized to 0°, 45°, 90° or 135°.
#[inline]
fn quantized_step<T: Scalar>(angle: T) -> (isize, isize) {
    let mut deg = angle.to_degrees().to_f64_lossy();
    if deg < 0.0 {
        deg += 180.0;
    }
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Keeps a pixel's magnitude iff it is `≥` both neighbors along its quantized
/// gradient direction; out-of-image neighbors are replicated border pixels.
pub fn non_max_suppression<T: Scalar>(magnitude: &Plane<T>, direction: &Plane<T>) -> Result<EdgeMap<T>> {
    if !magnitude.same_shape(direction) {
        return Err(Error::ShapeMismatch("magnitude and direction differ in shape".into()));
    }
    let (w, h) = (magnitude.width, magnitude.height);
    let at = |x: isize, y: isize| magnitude.data[clamp_index(y, h) * w + clamp_index(x, w)];
    let mut out = vec![T::zero(); w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let m = magnitude.data[i];
            if m <= T::zero() {
                continue;
            }
            let (sx, sy) = quantized_step(direction.data[i]);
            if m >= at(x + sx, y + sy) && m >= at(x - sx, y - sy) {
                out[i] = m;
            }
        }
    }
    Ok(Plane {
        width: w,
        height: h,
        data: out,
    })
}

/// Convolution with a normalized `(2r+1)²` box kernel, zero-padded.
pub fn edge_enhance<T: Scalar>(edge: &EdgeMap<T>, radius: usize) -> EdgeMap<T> {
    if radius == 0 {
        return edge.clone();
    }
    let (w, h) = (edge.width, edge.height);
    let r = radius as isize;
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w as isize {
            let mut acc = T::zero();
            for sx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                acc = acc + edge.data[y * w + sx as usize];
            }
            tmp[y * w + x as usize] = acc;
        }
    }
    let side = 2 * radius + 1;
    let norm = T::one() / T::from_usize_lossy(side * side);
    let mut out = vec![T::zero(); w * h];
    for y in 0..h as isize {
        for x in 0..w {
            let mut acc = T::zero();
            for sy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                acc = acc + tmp[sy as usize * w + x];
            }
            out[y as usize * w + x] = acc * norm;
        }
    }
    Plane {
        width: w,
        height: h,
        data: out,
    }
}

/// Thin edge map of an RGB image: luminance, pre-blur, Sobel, NMS.
pub fn canny<T: Scalar>(image: &ImageBuffer<T>) -> Result<EdgeMap<T>> {
    let gray = image.luminance();
    let blurred = gaussian_blur5(&gray, PRE_BLUR_SIGMA);
    let (mag, dir) = gradient_magnitude(&blurred)?;
    non_max_suppression(&mag, &dir)
}

/// `edge_enhance(canny(image), radius)`.
pub fn enhanced_edges<T: Scalar>(image: &ImageBuffer<T>, radius: usize) -> Result<EdgeMap<T>> {
    Ok(edge_enhance(&canny(image)?, radius))
}
