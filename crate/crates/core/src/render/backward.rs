use rayon::prelude::*;

use super::project::{jw, projection_jacobian, Projected2D, Projection};
use super::{pixel_center, splat_alpha, RenderAux, SortedSplatList, TRANSMITTANCE_MIN};
use crate::error::{Error, Result};
use crate::linalg::{self, Vec3};
use crate::scene::{layout, ActivatedGaussian, Camera, GaussianCloud, ImageBuffer, PARAMS_PER_GAUSSIAN};
use crate::sh;
use crate::Scalar;

/// Gradient of the loss with respect to every gaussian parameter, in the
/// flat layout of [`crate::scene::layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads<T> {
    pub per_gaussian: Vec<[T; PARAMS_PER_GAUSSIAN]>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            per_gaussian: vec![[T::zero(); PARAMS_PER_GAUSSIAN]; n],
        }
    }

    pub fn position(&self, i: usize) -> Vec3<T> {
        let g = &self.per_gaussian[i];
        [g[0], g[1], g[2]]
    }

    pub fn is_finite(&self, i: usize) -> bool {
        self.per_gaussian[i].iter().all(|v| v.is_finite())
    }
}

// Screen-space gradient slots accumulated per (tile, gaussian).
const G_MEAN: usize = 0; // 2
const G_CONIC: usize = 2; // 3
const G_COLOR: usize = 5; // 3
const G_ALPHA0: usize = 8;
const G_LEN: usize = 9;

struct TileBackward<T> {
    grads: Vec<[T; G_LEN]>,
    weighted_ndc: Vec<T>,
}

struct Contributor<T> {
    slot: usize,
    alpha: T,
    gauss: T,
    capped: bool,
    trans: T,
}

fn backward_tile<T: Scalar>(
    splats: &SortedSplatList,
    tile: usize,
    projections: &[Projection<T>],
    aux: &RenderAux<T>,
    dl_dimage: &ImageBuffer<T>,
    ndc_scale: [T; 2],
) -> TileBackward<T> {
    let (x0, x1, y0, y1) = splats.tile_rect(tile);
    let list = &splats.lists[tile];
    let mut out = TileBackward {
        grads: vec![[T::zero(); G_LEN]; list.len()],
        weighted_ndc: vec![T::zero(); list.len()],
    };
    let t_min = T::lit(TRANSMITTANCE_MIN);
    let half = T::lit(0.5);
    let mut contributors: Vec<Contributor<T>> = Vec::with_capacity(list.len());
    for y in y0..y1 {
        let py = pixel_center::<T>(y);
        for x in x0..x1 {
            let px = pixel_center::<T>(x);
            let pix = y * aux.width + x;
            let dl_dc = [
                dl_dimage.data[pix * 3],
                dl_dimage.data[pix * 3 + 1],
                dl_dimage.data[pix * 3 + 2],
            ];
            if dl_dc.iter().all(|v| *v == T::zero()) {
                continue;
            }

            // Same traversal and stopping rule as the forward pass.
            contributors.clear();
            let mut trans = T::one();
            for (slot, &gi) in list.iter().enumerate() {
                let Projection::Visible(p) = &projections[gi as usize] else {
                    continue;
                };
                let Some((alpha, gauss, capped)) = splat_alpha(p, px, py) else {
                    continue;
                };
                let next = trans * (T::one() - alpha);
                if next < t_min {
                    break;
                }
                contributors.push(Contributor {
                    slot,
                    alpha,
                    gauss,
                    capped,
                    trans,
                });
                trans = next;
            }

            // Back to front; `behind` is the color composited after the current splat.
            let mut behind = [
                trans * aux.background[0],
                trans * aux.background[1],
                trans * aux.background[2],
            ];
            for ctr in contributors.iter().rev() {
                let p: &Projected2D<T> = projections[list[ctr.slot] as usize]
                    .visible()
                    .expect("contributors are visible");
                let weight = ctr.alpha * ctr.trans;
                let inv_one_minus = T::one() / (T::one() - ctr.alpha);
                let mut dl_dalpha = T::zero();
                let g = &mut out.grads[ctr.slot];
                for c in 0..3 {
                    g[G_COLOR + c] = g[G_COLOR + c] + weight * dl_dc[c];
                    dl_dalpha = dl_dalpha + dl_dc[c] * (ctr.trans * p.color[c] - behind[c] * inv_one_minus);
                    behind[c] = behind[c] + p.color[c] * weight;
                }
                if ctr.capped {
                    continue;
                }
                g[G_ALPHA0] = g[G_ALPHA0] + dl_dalpha * ctr.gauss;
                let dl_dpower = dl_dalpha * p.alpha0 * ctr.gauss;
                let dx = px - p.mean2d[0];
                let dy = py - p.mean2d[1];
                let [a, b, c] = p.conic;
                let gmx = dl_dpower * (a * dx + b * dy);
                let gmy = dl_dpower * (b * dx + c * dy);
                g[G_MEAN] = g[G_MEAN] + gmx;
                g[G_MEAN + 1] = g[G_MEAN + 1] + gmy;
                g[G_CONIC] = g[G_CONIC] - half * dl_dpower * dx * dx;
                g[G_CONIC + 1] = g[G_CONIC + 1] - dl_dpower * dx * dy;
                g[G_CONIC + 2] = g[G_CONIC + 2] - half * dl_dpower * dy * dy;
                let ndc_norm = (gmx * ndc_scale[0]).hypot(gmy * ndc_scale[1]);
                out.weighted_ndc[ctr.slot] = out.weighted_ndc[ctr.slot] + weight * ndc_norm;
            }
        }
    }
    out
}

/// Chain rule from screen-space gradients to the raw parameters of one gaussian.
fn gaussian_chain<T: Scalar>(
    act: &ActivatedGaussian<T>,
    raw_rotation: [T; 4],
    p: &Projected2D<T>,
    cam: &Camera<T>,
    sh_degree: usize,
    g: &[T; G_LEN],
) -> [T; PARAMS_PER_GAUSSIAN] {
    let mut out = [T::zero(); PARAMS_PER_GAUSSIAN];
    let two = T::lit(2.0);

    // Opacity.
    out[layout::OPACITY] = g[G_ALPHA0] * p.alpha0 * (T::one() - p.alpha0);

    // Color -> SH coefficients and view direction.
    let dl_draw: Vec3<T> = std::array::from_fn(|c| {
        if p.color_clamped[c] {
            T::zero()
        } else {
            g[G_COLOR + c]
        }
    });
    let basis = sh::basis(p.view_dir, sh_degree);
    let basis_grad = sh::basis_gradient(p.view_dir, sh_degree);
    let mut dl_ddir = [T::zero(); 3];
    for k in 0..crate::scene::sh_coeff_count(sh_degree) {
        let mut s = T::zero();
        for c in 0..3 {
            out[layout::SH + 3 * k + c] = dl_draw[c] * basis[k];
            s = s + dl_draw[c] * act.sh[k][c];
        }
        for axis in 0..3 {
            dl_ddir[axis] = dl_ddir[axis] + s * basis_grad[k][axis];
        }
    }
    let radial = linalg::dot3(p.view_dir, dl_ddir);
    let mut dl_dmean: Vec3<T> = std::array::from_fn(|a| (dl_ddir[a] - p.view_dir[a] * radial) / p.view_dist);

    // Conic -> 2D covariance: dL/dΣ₂ = −K·G·K with G the symmetric-matrix form of dL/dK.
    let [ka, kb, kc] = p.conic;
    let (ga, gb, gc) = (g[G_CONIC], g[G_CONIC + 1] * T::lit(0.5), g[G_CONIC + 2]);
    // K·G
    let kg = [[ka * ga + kb * gb, ka * gb + kb * gc], [kb * ga + kc * gb, kb * gb + kc * gc]];
    // −(K·G)·K
    let gcov = [
        [-(kg[0][0] * ka + kg[0][1] * kb), -(kg[0][0] * kb + kg[0][1] * kc)],
        [-(kg[1][0] * ka + kg[1][1] * kb), -(kg[1][0] * kb + kg[1][1] * kc)],
    ];

    // 2D covariance T·Σ·Tᵀ with T = J·W.
    let t = p.cam_point;
    let jac = projection_jacobian(cam, t);
    let tm = jw(cam, jac);
    let sigma = &act.covariance;
    // dL/dΣ = Tᵀ·G·T
    let mut dl_dsigma = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = T::zero();
            for r in 0..2 {
                for q in 0..2 {
                    s = s + tm[r][i] * gcov[r][q] * tm[q][j];
                }
            }
            dl_dsigma[i][j] = s;
        }
    }
    // dL/dT = 2·G·T·Σ
    let mut ts = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            ts[r][c] = tm[r][0] * sigma[0][c] + tm[r][1] * sigma[1][c] + tm[r][2] * sigma[2][c];
        }
    }
    let mut dl_dt = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            dl_dt[r][c] = two * (gcov[r][0] * ts[0][c] + gcov[r][1] * ts[1][c]);
        }
    }
    // dL/dJ = dL/dT·Wᵀ; only the four structurally nonzero entries matter.
    let w = &cam.rotation;
    let dj = |r: usize, c: usize| dl_dt[r][0] * w[c][0] + dl_dt[r][1] * w[c][1] + dl_dt[r][2] * w[c][2];
    let (dj00, dj02, dj11, dj12) = (dj(0, 0), dj(0, 2), dj(1, 1), dj(1, 2));
    let iz = T::one() / t[2];
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let mut dl_dcam = [
        -dj02 * cam.fx * iz2,
        -dj12 * cam.fy * iz2,
        -dj00 * cam.fx * iz2 + dj02 * two * cam.fx * t[0] * iz3 - dj11 * cam.fy * iz2
            + dj12 * two * cam.fy * t[1] * iz3,
    ];

    // Projected mean.
    let (gu, gv) = (g[G_MEAN], g[G_MEAN + 1]);
    dl_dcam[0] = dl_dcam[0] + gu * cam.fx * iz;
    dl_dcam[1] = dl_dcam[1] + gv * cam.fy * iz;
    dl_dcam[2] = dl_dcam[2] - gu * cam.fx * t[0] * iz2 - gv * cam.fy * t[1] * iz2;
    dl_dmean = linalg::add3(dl_dmean, linalg::mat3_t_vec(w, dl_dcam));
    out[layout::POSITION..layout::POSITION + 3].copy_from_slice(&dl_dmean);

    // Σ = M·Mᵀ with M = R·diag(s): dL/dM = 2·dL/dΣ·M.
    let r = &act.rotation;
    let s = act.scale;
    let mut dl_dm = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = T::zero();
            for k in 0..3 {
                acc = acc + dl_dsigma[i][k] * r[k][j] * s[j];
            }
            dl_dm[i][j] = two * acc;
        }
    }
    let mut dl_dr = [[T::zero(); 3]; 3];
    for j in 0..3 {
        let mut ds = T::zero();
        for i in 0..3 {
            ds = ds + dl_dm[i][j] * r[i][j];
            dl_dr[i][j] = dl_dm[i][j] * s[j];
        }
        out[layout::LOG_SCALE + j] = ds * s[j];
    }

    // Rotation matrix -> normalized quaternion -> raw quaternion.
    let qn = raw_rotation.iter().map(|v| *v * *v).sum::<T>().sqrt();
    let [qw, qx, qy, qz] = raw_rotation.map(|v| v / qn);
    let d = &dl_dr;
    let four = T::lit(4.0);
    let dqw = two * (-qz * d[0][1] + qy * d[0][2] + qz * d[1][0] - qx * d[1][2] - qy * d[2][0] + qx * d[2][1]);
    let dqx = two * (qy * d[0][1] + qz * d[0][2] + qy * d[1][0] - qw * d[1][2] + qz * d[2][0] + qw * d[2][1])
        - four * qx * (d[1][1] + d[2][2]);
    let dqy = two * (qx * d[0][1] + qw * d[0][2] + qx * d[1][0] + qz * d[1][2] - qw * d[2][0] + qz * d[2][1])
        - four * qy * (d[0][0] + d[2][2]);
    let dqz = two * (-qw * d[0][1] + qx * d[0][2] + qw * d[1][0] + qy * d[1][2] + qx * d[2][0] + qy * d[2][1])
        - four * qz * (d[0][0] + d[1][1]);
    let dq = [dqw, dqx, dqy, dqz];
    let qhat = [qw, qx, qy, qz];
    let proj = (0..4).map(|i| qhat[i] * dq[i]).sum::<T>();
    for i in 0..4 {
        out[layout::ROTATION + i] = (dq[i] - qhat[i] * proj) / qn;
    }
    out
}

/// Back-propagates `dl_dimage` through the render that produced `aux`.
///
/// Fills `aux.ndc_grad` and `aux.pixel_weighted_ndc_grad` and returns the
/// parameter gradients. Gaussians that did not contribute get zeros.
pub fn rasterize_backward<T: Scalar>(
    cloud: &GaussianCloud<T>,
    camera: &Camera<T>,
    aux: &mut RenderAux<T>,
    dl_dimage: &ImageBuffer<T>,
) -> Result<ParamGrads<T>> {
    if aux.gaussian_count() != cloud.len() {
        return Err(Error::AuxMismatch {
            aux: aux.gaussian_count(),
            cloud: cloud.len(),
        });
    }
    if dl_dimage.width != aux.width || dl_dimage.height != aux.height {
        return Err(Error::ShapeMismatch(format!(
            "gradient image {}x{} vs render {}x{}",
            dl_dimage.width, dl_dimage.height, aux.width, aux.height
        )));
    }
    let n = cloud.len();
    let ndc_scale = [
        T::from_usize_lossy(aux.width) / T::lit(2.0),
        T::from_usize_lossy(aux.height) / T::lit(2.0),
    ];

    let tile_out: Vec<TileBackward<T>> = (0..aux.splats.lists.len())
        .into_par_iter()
        .map(|tile| backward_tile(&aux.splats, tile, &aux.projections, aux, dl_dimage, ndc_scale))
        .collect();

    let mut screen = vec![[T::zero(); G_LEN]; n];
    let mut weighted_ndc = vec![T::zero(); n];
    for (tile, out) in tile_out.iter().enumerate() {
        for (slot, &gi) in aux.splats.lists[tile].iter().enumerate() {
            let acc = &mut screen[gi as usize];
            for (a, v) in acc.iter_mut().zip(out.grads[slot].iter()) {
                *a = *a + *v;
            }
            weighted_ndc[gi as usize] = weighted_ndc[gi as usize] + out.weighted_ndc[slot];
        }
    }

    for (i, g) in screen.iter().enumerate() {
        aux.ndc_grad[i] = [
            g[G_MEAN] * ndc_scale[0],
            g[G_MEAN + 1] * ndc_scale[1],
        ];
    }
    aux.pixel_weighted_ndc_grad = weighted_ndc;

    let degree = cloud.active_sh_degree;
    let per_gaussian: Vec<[T; PARAMS_PER_GAUSSIAN]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let Projection::Visible(p) = &aux.projections[i] else {
                return [T::zero(); PARAMS_PER_GAUSSIAN];
            };
            if screen[i].iter().all(|v| *v == T::zero()) {
                return [T::zero(); PARAMS_PER_GAUSSIAN];
            }
            let gauss = &cloud.gaussians[i];
            let act = gauss.activate(i).expect("activated during forward");
            gaussian_chain(&act, gauss.rotation, p, camera, degree, &screen[i])
        })
        .collect();
    Ok(ParamGrads { per_gaussian })
}
