//! Screen-space binning of splats into depth-sorted tile lists.

use super::project::{Projected2D, Projection, FOOTPRINT_SIGMAS};
use crate::Scalar;

pub const TILE_SIZE: usize = 16;

/// Per-tile lists of gaussian indices, front to back.
#[derive(Clone, Debug, PartialEq)]
pub struct SortedSplatList {
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub width: usize,
    pub height: usize,
    pub lists: Vec<Vec<u32>>,
}

impl SortedSplatList {
    /// Pixel rectangle `[x0, x1) × [y0, y1)` of a tile.
    pub fn tile_rect(&self, tile: usize) -> (usize, usize, usize, usize) {
        let (tx, ty) = (tile % self.tiles_x, tile / self.tiles_x);
        let x0 = tx * TILE_SIZE;
        let y0 = ty * TILE_SIZE;
        (
            x0,
            (x0 + TILE_SIZE).min(self.width),
            y0,
            (y0 + TILE_SIZE).min(self.height),
        )
    }

    pub fn total_entries(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

/// Smallest Mahalanobis distance² from the splat mean to the closed box
/// `[x0, x1] × [y0, y1]`.
pub(crate) fn min_mahalanobis_sq<T: Scalar>(p: &Projected2D<T>, x0: T, x1: T, y0: T, y1: T) -> T {
    let [mx, my] = p.mean2d;
    if mx >= x0 && mx <= x1 && my >= y0 && my <= y1 {
        return T::zero();
    }
    let [a, b, c] = p.conic;
    let q = |dx: T, dy: T| a * dx * dx + T::lit(2.0) * b * dx * dy + c * dy * dy;
    let mut best = T::infinity();
    // Edges of constant x: minimize over dy.
    for x in [x0, x1] {
        let dx = x - mx;
        let dy = if c > T::zero() { -b * dx / c } else { T::zero() };
        let dy = dy.max(y0 - my).min(y1 - my);
        best = best.min(q(dx, dy));
    }
    for y in [y0, y1] {
        let dy = y - my;
        let dx = if a > T::zero() { -b * dy / a } else { T::zero() };
        let dx = dx.max(x0 - mx).min(x1 - mx);
        best = best.min(q(dx, dy));
    }
    best
}

/// Bins every visible splat into the tiles its footprint ellipse touches and
/// sorts each tile by `(depth, index)`.
pub fn bin_and_sort<T: Scalar>(projections: &[Projection<T>], width: usize, height: usize) -> SortedSplatList {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    let ts = T::from_usize_lossy(TILE_SIZE);
    let limit = T::lit(FOOTPRINT_SIGMAS * FOOTPRINT_SIGMAS);
    for (index, proj) in projections.iter().enumerate() {
        let Some(p) = proj.visible() else { continue };
        let lo_x = p.mean2d[0] - p.extent[0];
        let hi_x = p.mean2d[0] + p.extent[0];
        let lo_y = p.mean2d[1] - p.extent[1];
        let hi_y = p.mean2d[1] + p.extent[1];
        let (w, h) = (T::from_usize_lossy(width), T::from_usize_lossy(height));
        if hi_x < T::zero() || hi_y < T::zero() || lo_x >= w || lo_y >= h {
            continue;
        }
        let tile_of = |v: T, n: usize| -> usize {
            let t = (v / ts).floor().max(T::zero()).to_f64_lossy() as usize;
            t.min(n - 1)
        };
        let (tx0, tx1) = (tile_of(lo_x, tiles_x), tile_of(hi_x, tiles_x));
        let (ty0, ty1) = (tile_of(lo_y, tiles_y), tile_of(hi_y, tiles_y));
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                let x0 = T::from_usize_lossy(tx * TILE_SIZE);
                let y0 = T::from_usize_lossy(ty * TILE_SIZE);
                let x1 = T::from_usize_lossy(((tx + 1) * TILE_SIZE).min(width));
                let y1 = T::from_usize_lossy(((ty + 1) * TILE_SIZE).min(height));
                if min_mahalanobis_sq(p, x0, x1, y0, y1) <= limit {
                    lists[ty * tiles_x + tx].push(index as u32);
                }
            }
        }
    }
    for list in lists.iter_mut() {
        list.sort_by(|&i, &j| {
            let di = projections[i as usize].visible().map(|p| p.depth);
            let dj = projections[j as usize].visible().map(|p| p.depth);
            di.partial_cmp(&dj)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
    }
    SortedSplatList {
        tiles_x,
        tiles_y,
        width,
        height,
        lists,
    }
}
