//! Real spherical-harmonics color model, degrees 0 through 3.
//!
//! Coefficient `k = l² + l + m` multiplies basis function `Y_{l,m}`; the sign
//! convention matches the widely used splatting renderers so that coefficient
//! files are interchangeable.

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scene::{sh_coeff_count, MAX_SH_DEGREE, SH_COEFFS};
use crate::Scalar;

pub const C0: f64 = 0.282_094_791_773_878_14;
pub const C1: f64 = 0.488_602_511_902_919_9;
pub const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// DC coefficient producing `rgb` in the absence of higher bands.
#[inline]
pub fn rgb_to_dc<T: Scalar>(rgb: T) -> T {
    (rgb - T::lit(0.5)) / T::lit(C0)
}

/// Basis values at a unit direction; entries above `degree` are zero.
pub fn basis<T: Scalar>(dir: Vec3<T>, degree: usize) -> [T; SH_COEFFS] {
    let mut y = [T::zero(); SH_COEFFS];
    let [x, yy, z] = dir;
    y[0] = T::lit(C0);
    if degree >= 1 {
        let c1 = T::lit(C1);
        y[1] = -c1 * yy;
        y[2] = c1 * z;
        y[3] = -c1 * x;
    }
    if degree >= 2 {
        let (xx, y2, zz) = (x * x, yy * yy, z * z);
        let c = C2.map(T::lit);
        y[4] = c[0] * x * yy;
        y[5] = c[1] * yy * z;
        y[6] = c[2] * (T::lit(2.0) * zz - xx - y2);
        y[7] = c[3] * x * z;
        y[8] = c[4] * (xx - y2);
        if degree >= 3 {
            let c = C3.map(T::lit);
            let (three, four) = (T::lit(3.0), T::lit(4.0));
            y[9] = c[0] * yy * (three * xx - y2);
            y[10] = c[1] * x * yy * z;
            y[11] = c[2] * yy * (four * zz - xx - y2);
            y[12] = c[3] * z * (T::lit(2.0) * zz - three * xx - three * y2);
            y[13] = c[4] * x * (four * zz - xx - y2);
            y[14] = c[5] * z * (xx - y2);
            y[15] = c[6] * x * (xx - three * y2);
        }
    }
    y
}

/// Partial derivatives `∂Y_k/∂(x, y, z)` of the basis polynomials, treating
/// the direction components as independent.
pub fn basis_gradient<T: Scalar>(dir: Vec3<T>, degree: usize) -> [Vec3<T>; SH_COEFFS] {
    let z0 = T::zero();
    let mut g = [[z0; 3]; SH_COEFFS];
    let [x, y, z] = dir;
    if degree >= 1 {
        let c1 = T::lit(C1);
        g[1] = [z0, -c1, z0];
        g[2] = [z0, z0, c1];
        g[3] = [-c1, z0, z0];
    }
    if degree >= 2 {
        let c = C2.map(T::lit);
        let two = T::lit(2.0);
        g[4] = [c[0] * y, c[0] * x, z0];
        g[5] = [z0, c[1] * z, c[1] * y];
        g[6] = [-two * c[2] * x, -two * c[2] * y, T::lit(4.0) * c[2] * z];
        g[7] = [c[3] * z, z0, c[3] * x];
        g[8] = [two * c[4] * x, -two * c[4] * y, z0];
        if degree >= 3 {
            let c = C3.map(T::lit);
            let (xx, yy, zz) = (x * x, y * y, z * z);
            let (three, four, six, eight) = (T::lit(3.0), T::lit(4.0), T::lit(6.0), T::lit(8.0));
            g[9] = [c[0] * six * x * y, c[0] * (three * xx - three * yy), z0];
            g[10] = [c[1] * y * z, c[1] * x * z, c[1] * x * y];
            g[11] = [
                -c[2] * two * x * y,
                c[2] * (four * zz - xx - three * yy),
                c[2] * eight * y * z,
            ];
            g[12] = [
                -c[3] * six * x * z,
                -c[3] * six * y * z,
                c[3] * (six * zz - three * xx - three * yy),
            ];
            g[13] = [
                c[4] * (four * zz - three * xx - yy),
                -c[4] * two * x * y,
                c[4] * eight * x * z,
            ];
            g[14] = [c[5] * two * x * z, -c[5] * two * y * z, c[5] * (xx - yy)];
            g[15] = [c[6] * (three * xx - three * yy), -c[6] * six * x * y, z0];
        }
    }
    g
}

/// Raw color `Σ c·Y + 0.5` before the non-negativity clamp.
pub fn color_unclamped<T: Scalar>(sh: &[[T; 3]; SH_COEFFS], y: &[T; SH_COEFFS], degree: usize) -> Vec3<T> {
    let mut rgb = [T::lit(0.5); 3];
    for k in 0..sh_coeff_count(degree) {
        for c in 0..3 {
            rgb[c] = rgb[c] + sh[k][c] * y[k];
        }
    }
    rgb
}

/// View-dependent color of one gaussian, clamped to `≥ 0`.
///
/// `view_direction` is normalized here; a zero-length direction is an error.
pub fn evaluate_sh<T: Scalar>(
    sh: &[[T; 3]; SH_COEFFS],
    view_direction: Vec3<T>,
    degree: usize,
) -> Result<Vec3<T>> {
    if degree > MAX_SH_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "SH degree {degree} exceeds {MAX_SH_DEGREE}"
        )));
    }
    let n = crate::linalg::norm3(view_direction);
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::InvalidArgument(
            "zero-length or non-finite view direction".into(),
        ));
    }
    let dir = view_direction.map(|v| v / n);
    let y = basis(dir, degree);
    Ok(color_unclamped(sh, &y, degree).map(|v| v.max(T::zero())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs(seed: u64) -> [[f64; 3]; SH_COEFFS] {
        let mut state = seed;
        let mut out = [[0.0; 3]; SH_COEFFS];
        for v in out.iter_mut().flatten() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.4;
        }
        out
    }

    #[test]
    fn dc_only() {
        let mut sh = [[0.0; 3]; SH_COEFFS];
        sh[0] = [0.3, -0.2, 1.0];
        let rgb = evaluate_sh(&sh, [0.0, 0.0, 1.0], 0).unwrap();
        for c in 0..3 {
            assert!((rgb[c] - (C0 * sh[0][c] + 0.5)).abs() < 1e-15);
        }
        let zero = evaluate_sh(&[[0.0; 3]; SH_COEFFS], [1.0, 2.0, 3.0], 3).unwrap();
        assert_eq!(zero, [0.5; 3]);
    }

    #[test]
    fn degree_one_flips_with_z() {
        let mut sh = [[0.0_f64; 3]; SH_COEFFS];
        sh[2][0] = 0.3;
        let up = evaluate_sh(&sh, [0.0, 0.0, 1.0], 1).unwrap();
        let down = evaluate_sh(&sh, [0.0, 0.0, -1.0], 1).unwrap();
        assert!((up[0] - down[0] - 2.0 * 0.488_602_51 * 0.3).abs() < 1e-8);
        assert_eq!(up[1], down[1]);
    }

    #[test]
    fn zero_direction_rejected() {
        assert!(evaluate_sh(&[[0.0; 3]; SH_COEFFS], [0.0; 3], 0).is_err());
    }

    #[test]
    fn higher_bands_ignored() {
        let sh = coeffs(3);
        let dir = [0.3, -0.4, 0.5];
        for degree in 0..3 {
            let mut trimmed = sh;
            for coeff in trimmed.iter_mut().skip(sh_coeff_count(degree)) {
                *coeff = [0.0; 3];
            }
            assert_eq!(
                evaluate_sh(&sh, dir, degree).unwrap(),
                evaluate_sh(&trimmed, dir, degree).unwrap()
            );
        }
    }

    #[test]
    fn basis_gradient_matches_finite_differences() {
        let dir = [0.31_f64, -0.52, 0.77];
        let g = basis_gradient(dir, 3);
        let h = 1e-6;
        for axis in 0..3 {
            let mut p = dir;
            let mut m = dir;
            p[axis] += h;
            m[axis] -= h;
            let (bp, bm) = (basis(p, 3), basis(m, 3));
            for k in 0..SH_COEFFS {
                let fd = (bp[k] - bm[k]) / (2.0 * h);
                assert!((fd - g[k][axis]).abs() < 1e-8, "k={k} axis={axis}");
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_on_sphere() {
        // Fibonacci-sphere quadrature: ∫ Y_i Y_j dΩ ≈ δ_ij.
        let n = 20_000;
        let mut gram = [[0.0_f64; SH_COEFFS]; SH_COEFFS];
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        for i in 0..n {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let y = basis([r * phi.cos(), r * phi.sin(), z], 3);
            for a in 0..SH_COEFFS {
                for b in 0..SH_COEFFS {
                    gram[a][b] += y[a] * y[b];
                }
            }
        }
        let w = 4.0 * std::f64::consts::PI / n as f64;
        for a in 0..SH_COEFFS {
            for b in 0..SH_COEFFS {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a][b] * w - expected).abs() < 1e-3, "({a},{b})");
            }
        }
    }
}
