//! Differentiable tile rasterizer.
//!
//! The forward pass composites splats front to back per pixel,
//!
//! ```text
//! C(p) = Σᵢ cᵢ·αᵢ(p)·Tᵢ(p) + T_final(p)·bg,   Tᵢ = Πⱼ<ᵢ (1 − αⱼ(p))
//! αᵢ(p) = min(0.99, α₀ᵢ·exp(−½ dᵀ Σ₂ᵢ⁻¹ d)),  d = p − μ₂ᵢ
//! ```
//!
//! and records the per-gaussian statistics used by densification. The
//! backward pass re-traverses each pixel's contributor list back to front.
//!
//! Tiles are processed in parallel but every per-gaussian accumulator is
//! reduced in tile order, so results do not depend on the thread count.

mod backward;
pub mod project;
pub mod tiles;

pub use backward::{rasterize_backward, ParamGrads};
pub use project::{project, Projected2D, Projection};
pub use tiles::{SortedSplatList, TILE_SIZE};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Vec2, Vec3};
use crate::loss::Plane;
use crate::scene::{Camera, GaussianCloud, ImageBuffer};
use crate::Scalar;

pub const ALPHA_MAX: f64 = 0.99;
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
pub const TRANSMITTANCE_MIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderStats {
    pub visible: usize,
    pub culled: usize,
    /// Skipped because the regularized 2D covariance was not invertible.
    pub singular: usize,
    /// Composited (pixel, gaussian) pairs.
    pub contributions: u64,
    /// Pairs whose alpha hit the 0.99 cap.
    pub alpha_capped: u64,
    /// Pixels whose traversal stopped on the transmittance floor.
    pub early_stops: u64,
}

/// By-products of one render needed by the backward pass and densification.
#[derive(Clone, Debug)]
pub struct RenderAux<T> {
    pub width: usize,
    pub height: usize,
    pub background: Vec3<T>,
    /// Per pixel, row-major.
    pub final_transmittance: Vec<T>,
    /// Per gaussian: `Σ_p αᵢ(p)·Tᵢ(p)`.
    pub blend_weight_sum: Vec<T>,
    /// Per gaussian: pixels it was composited into.
    pub pixel_hit_count: Vec<u32>,
    /// Per gaussian `∂L/∂μ_ndc`, filled by the backward pass.
    pub ndc_grad: Vec<Vec2<T>>,
    /// Per gaussian `Σ_p αᵢ(p)·Tᵢ(p)·‖∂L_p/∂μ_ndc‖`, filled by the backward pass.
    pub pixel_weighted_ndc_grad: Vec<T>,
    pub projections: Vec<Projection<T>>,
    pub splats: SortedSplatList,
    pub stats: RenderStats,
}

impl<T: Scalar> RenderAux<T> {
    pub fn gaussian_count(&self) -> usize {
        self.projections.len()
    }

    pub fn is_visible(&self, index: usize) -> bool {
        self.pixel_hit_count[index] > 0
    }

    /// Final transmittance as a grayscale plane, for debugging.
    pub fn transmittance_plane(&self) -> Plane<T> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.final_transmittance.clone(),
        }
    }
}

/// Alpha of splat `p` at pixel center `(px, py)`: `(α, G, capped)`, or `None`
/// when the contribution is below `ALPHA_MIN`.
#[inline]
pub(crate) fn splat_alpha<T: Scalar>(p: &Projected2D<T>, px: T, py: T) -> Option<(T, T, bool)> {
    let dx = px - p.mean2d[0];
    let dy = py - p.mean2d[1];
    let [a, b, c] = p.conic;
    let power = -T::lit(0.5) * (a * dx * dx + c * dy * dy) - b * dx * dy;
    if power > T::zero() {
        return None;
    }
    let g = power.exp();
    let raw = p.alpha0 * g;
    let cap = T::lit(ALPHA_MAX);
    let (alpha, capped) = if raw > cap { (cap, true) } else { (raw, false) };
    if alpha < T::lit(ALPHA_MIN) {
        return None;
    }
    Some((alpha, g, capped))
}

#[inline]
pub(crate) fn pixel_center<T: Scalar>(x: usize) -> T {
    T::from_usize_lossy(x) + T::lit(0.5)
}

pub(crate) fn project_all<T: Scalar>(
    cloud: &GaussianCloud<T>,
    camera: &Camera<T>,
) -> Result<(Vec<Projection<T>>, RenderStats)> {
    let activated = cloud.activate_all()?;
    let degree = cloud.active_sh_degree;
    let projections: Vec<Projection<T>> = activated
        .par_iter()
        .map(|g| project(g, camera, degree))
        .collect();
    let mut stats = RenderStats::default();
    for p in &projections {
        match p {
            Projection::Visible(_) => stats.visible += 1,
            Projection::Culled => stats.culled += 1,
            Projection::Singular => stats.singular += 1,
        }
    }
    Ok((projections, stats))
}

struct TileForward<T> {
    color: Vec<Vec3<T>>,
    transmittance: Vec<T>,
    weight: Vec<T>,
    hits: Vec<u32>,
    contributions: u64,
    capped: u64,
    early: u64,
}

fn forward_tile<T: Scalar>(
    splats: &SortedSplatList,
    tile: usize,
    projections: &[Projection<T>],
    background: Vec3<T>,
) -> TileForward<T> {
    let (x0, x1, y0, y1) = splats.tile_rect(tile);
    let list = &splats.lists[tile];
    let mut out = TileForward {
        color: Vec::with_capacity((x1 - x0) * (y1 - y0)),
        transmittance: Vec::with_capacity((x1 - x0) * (y1 - y0)),
        weight: vec![T::zero(); list.len()],
        hits: vec![0; list.len()],
        contributions: 0,
        capped: 0,
        early: 0,
    };
    let t_min = T::lit(TRANSMITTANCE_MIN);
    for y in y0..y1 {
        let py = pixel_center::<T>(y);
        for x in x0..x1 {
            let px = pixel_center::<T>(x);
            let mut trans = T::one();
            let mut rgb = [T::zero(); 3];
            for (slot, &gi) in list.iter().enumerate() {
                let Projection::Visible(p) = &projections[gi as usize] else {
                    continue;
                };
                let Some((alpha, _, capped)) = splat_alpha(p, px, py) else {
                    continue;
                };
                let next = trans * (T::one() - alpha);
                if next < t_min {
                    out.early += 1;
                    break;
                }
                let w = alpha * trans;
                for c in 0..3 {
                    rgb[c] = rgb[c] + p.color[c] * w;
                }
                out.weight[slot] = out.weight[slot] + w;
                out.hits[slot] += 1;
                out.contributions += 1;
                out.capped += u64::from(capped);
                trans = next;
            }
            for c in 0..3 {
                rgb[c] = rgb[c] + trans * background[c];
            }
            out.color.push(rgb);
            out.transmittance.push(trans);
        }
    }
    out
}

/// Renders `cloud` from `camera` over a constant `background`.
///
/// The returned image is not clamped; use [`ImageBuffer::clamped`] for output.
pub fn rasterize_forward<T: Scalar>(
    cloud: &GaussianCloud<T>,
    camera: &Camera<T>,
    background: Vec3<T>,
) -> Result<(ImageBuffer<T>, RenderAux<T>)> {
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("cannot render an empty cloud".into()));
    }
    camera.validate()?;
    let (projections, mut stats) = project_all(cloud, camera)?;
    let splats = tiles::bin_and_sort(&projections, camera.width, camera.height);

    let tile_out: Vec<TileForward<T>> = (0..splats.lists.len())
        .into_par_iter()
        .map(|tile| forward_tile(&splats, tile, &projections, background))
        .collect();

    let (w, h) = (camera.width, camera.height);
    let mut image = ImageBuffer::new(w, h);
    let mut final_transmittance = vec![T::one(); w * h];
    let n = cloud.len();
    let mut blend_weight_sum = vec![T::zero(); n];
    let mut pixel_hit_count = vec![0u32; n];
    for (tile, out) in tile_out.into_iter().enumerate() {
        let (x0, x1, y0, y1) = splats.tile_rect(tile);
        let mut k = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                let idx = y * w + x;
                image.data[idx * 3..idx * 3 + 3].copy_from_slice(&out.color[k]);
                final_transmittance[idx] = out.transmittance[k];
                k += 1;
            }
        }
        for (slot, &gi) in splats.lists[tile].iter().enumerate() {
            blend_weight_sum[gi as usize] = blend_weight_sum[gi as usize] + out.weight[slot];
            pixel_hit_count[gi as usize] += out.hits[slot];
        }
        stats.contributions += out.contributions;
        stats.alpha_capped += out.capped;
        stats.early_stops += out.early;
    }

    let aux = RenderAux {
        width: w,
        height: h,
        background,
        final_transmittance,
        blend_weight_sum,
        pixel_hit_count,
        ndc_grad: vec![[T::zero(); 2]; n],
        pixel_weighted_ndc_grad: vec![T::zero(); n],
        projections,
        splats,
        stats,
    };
    Ok((image, aux))
}

/// Forward render, image only.
pub fn render<T: Scalar>(
    cloud: &GaussianCloud<T>,
    camera: &Camera<T>,
    background: Vec3<T>,
) -> Result<ImageBuffer<T>> {
    rasterize_forward(cloud, camera, background).map(|(img, _)| img)
}
