//! Fixed-size vector and matrix helpers on plain arrays.
//!
//! Matrices are row-major `[[T; C]; R]`.

use crate::Scalar;

pub type Vec2<T> = [T; 2];
pub type Vec3<T> = [T; 3];
pub type Mat2<T> = [[T; 2]; 2];
pub type Mat3<T> = [[T; 3]; 3];

#[inline]
pub fn add3<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3<T: Scalar>(a: Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot3<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3<T: Scalar>(a: Vec3<T>) -> T {
    dot3(a, a).sqrt()
}

#[inline]
pub fn norm2<T: Scalar>(a: Vec2<T>) -> T {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

#[inline]
pub fn identity3<T: Scalar>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

#[inline]
pub fn mat3_vec<T: Scalar>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [dot3(m[0], v), dot3(m[1], v), dot3(m[2], v)]
}

/// `mᵀ · v`
#[inline]
pub fn mat3_t_vec<T: Scalar>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat3_mul<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose3<T: Scalar>(m: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[j][i] = v;
        }
    }
    out
}

/// Max absolute deviation of `m · mᵀ` from the identity.
pub fn orthonormality_error<T: Scalar>(m: &Mat3<T>) -> T {
    let p = mat3_mul(m, &transpose3(m));
    let id = identity3::<T>();
    let mut worst = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((p[i][j] - id[i][j]).abs());
        }
    }
    worst
}

/// Inverse `(A, B, C)` and determinant of the symmetric 2×2 matrix `[[a, b], [b, c]]`.
///
/// Returns `None` when the determinant is not strictly positive.
#[inline]
pub fn inverse_sym2<T: Scalar>(a: T, b: T, c: T) -> Option<(T, T, T, T)> {
    let det = a * c - b * b;
    if !(det > T::zero()) || !det.is_finite() {
        return None;
    }
    let inv = T::one() / det;
    Some((c * inv, -b * inv, a * inv, det))
}

/// Rotation matrix of the quaternion `(w, x, y, z)` after normalization.
pub fn quat_to_mat<T: Scalar>(q: [T; 4]) -> Mat3<T> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let two = T::lit(2.0);
    let one = T::one();
    [
        [
            one - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
        ],
        [
            two * (x * y + w * z),
            one - two * (x * x + z * z),
            two * (y * z - w * x),
        ],
        [
            two * (x * z - w * y),
            two * (y * z + w * x),
            one - two * (x * x + y * y),
        ],
    ]
}

/// Hamilton product `a ⊗ b` of `(w, x, y, z)` quaternions.
pub fn quat_mul<T: Scalar>(a: [T; 4], b: [T; 4]) -> [T; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Quaternion `(w, x, y, z)` of a rotation matrix (Shepperd's method).
pub fn mat_to_quat<T: Scalar>(m: &Mat3<T>) -> [T; 4] {
    let one = T::one();
    let quarter = T::lit(0.25);
    let trace = m[0][0] + m[1][1] + m[2][2];
    let q = if trace > T::zero() {
        let s = (trace + one).sqrt() * T::lit(2.0);
        [
            quarter * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        ]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * T::lit(2.0);
        [
            (m[2][1] - m[1][2]) / s,
            quarter * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        ]
    } else if m[1][1] > m[2][2] {
        let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * T::lit(2.0);
        [
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            quarter * s,
            (m[1][2] + m[2][1]) / s,
        ]
    } else {
        let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * T::lit(2.0);
        [
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            quarter * s,
        ]
    };
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// World-to-camera rotation for a camera at `eye` looking at `target`.
///
/// Camera axes follow the pinhole convention: +x right, +y down, +z forward.
pub fn look_at<T: Scalar>(eye: Vec3<T>, target: Vec3<T>, world_up: Vec3<T>) -> Mat3<T> {
    let fwd = sub3(target, eye);
    let fwd = scale3(fwd, T::one() / norm3(fwd));
    let right = cross3(fwd, world_up);
    let right = scale3(right, T::one() / norm3(right));
    let down = cross3(fwd, right);
    [right, down, fwd]
}

#[inline]
pub fn cross3<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
