//! Geometric and appearance attention weights, the weighted L1 losses built
//! on them, and the sigmoid hand-over schedule between the two.
//!
//! All losses are means over pixels and channels. Weight maps are treated as
//! constants: no gradient flows through their max-normalization.

use super::edges::{enhanced_edges, EdgeMap};
use crate::error::{Error, Result};
use crate::metrics;
use crate::scene::ImageBuffer;
use crate::Scalar;

/// Per-pixel (1 channel) or per-pixel-per-channel (3 channels) loss weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> WeightMap<T> {
    pub fn uniform(width: usize, height: usize, channels: usize, value: T) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Weight applied to channel `c` of pixel `pix`.
    #[inline]
    pub fn at(&self, pix: usize, c: usize) -> T {
        if self.channels == 1 {
            self.data[pix]
        } else {
            self.data[pix * 3 + c]
        }
    }

    fn check(&self, image: &ImageBuffer<T>) -> Result<()> {
        if self.width != image.width || self.height != image.height || !(self.channels == 1 || self.channels == 3) {
            return Err(Error::ShapeMismatch(format!(
                "weights {}x{}x{} vs image {}x{}",
                self.width, self.height, self.channels, image.width, image.height
            )));
        }
        Ok(())
    }
}

/// Divides by the global maximum; an all-zero input stays zero.
fn max_normalized<T: Scalar>(mut data: Vec<T>) -> Vec<T> {
    let max = data.iter().fold(T::zero(), |m, &v| m.max(v));
    if max > T::zero() {
        for v in data.iter_mut() {
            *v = *v / max;
        }
    }
    data
}

/// `|E_gt − E_render| / max|E_gt − E_render|` from precomputed enhanced edge maps.
pub fn geometric_weights_from_edges<T: Scalar>(gt_edges: &EdgeMap<T>, render_edges: &EdgeMap<T>) -> Result<WeightMap<T>> {
    if !gt_edges.same_shape(render_edges) {
        return Err(Error::ShapeMismatch("edge maps differ in shape".into()));
    }
    let diff = gt_edges
        .data
        .iter()
        .zip(&render_edges.data)
        .map(|(a, b)| (*a - *b).abs())
        .collect();
    Ok(WeightMap {
        width: gt_edges.width,
        height: gt_edges.height,
        channels: 1,
        data: max_normalized(diff),
    })
}

/// One-channel geometric attention weights with edge-spreading radius `radius`.
pub fn geometric_weights<T: Scalar>(gt: &ImageBuffer<T>, render: &ImageBuffer<T>, radius: usize) -> Result<WeightMap<T>> {
    gt.check_same_shape(render)?;
    geometric_weights_from_edges(&enhanced_edges(gt, radius)?, &enhanced_edges(render, radius)?)
}

/// Three-channel appearance weights `|gt − render| / max|gt − render|`.
pub fn appearance_weights<T: Scalar>(gt: &ImageBuffer<T>, render: &ImageBuffer<T>) -> Result<WeightMap<T>> {
    gt.check_same_shape(render)?;
    let diff = gt
        .data
        .iter()
        .zip(&render.data)
        .map(|(a, b)| (*a - *b).abs())
        .collect();
    Ok(WeightMap {
        width: gt.width,
        height: gt.height,
        channels: 3,
        data: max_normalized(diff),
    })
}

/// `mean(w·|gt − render|)` over pixels and channels, and its gradient with
/// respect to `render`.
fn weighted_l1<T: Scalar>(gt: &ImageBuffer<T>, render: &ImageBuffer<T>, w: &WeightMap<T>) -> Result<(T, ImageBuffer<T>)> {
    gt.check_same_shape(render)?;
    w.check(gt)?;
    let count = T::from_usize_lossy(gt.data.len());
    let inv = T::one() / count;
    let mut grad = ImageBuffer::new(gt.width, gt.height);
    let mut total = T::zero();
    for (i, (g, r)) in gt.data.iter().zip(&render.data).enumerate() {
        let weight = w.at(i / 3, i % 3);
        let diff = *r - *g;
        total = total + weight * diff.abs();
        grad.data[i] = if diff > T::zero() {
            weight * inv
        } else if diff < T::zero() {
            -weight * inv
        } else {
            T::zero()
        };
    }
    Ok((total * inv, grad))
}

/// Plain mean absolute error and its gradient.
pub fn l1_loss<T: Scalar>(gt: &ImageBuffer<T>, render: &ImageBuffer<T>) -> Result<(T, ImageBuffer<T>)> {
    weighted_l1(gt, render, &WeightMap::uniform(gt.width, gt.height, 1, T::one()))
}

/// Geometric-weighted L1; the one-channel weight is shared by all channels.
pub fn geometric_loss<T: Scalar>(gt: &ImageBuffer<T>, render: &ImageBuffer<T>, w: &WeightMap<T>) -> Result<(T, ImageBuffer<T>)> {
    weighted_l1(gt, render, w)
}

/// Appearance-weighted L1 with per-channel weights.
pub fn appearance_loss<T: Scalar>(gt: &ImageBuffer<T>, render: &ImageBuffer<T>, w_app: &WeightMap<T>) -> Result<(T, ImageBuffer<T>)> {
    weighted_l1(gt, render, w_app)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleParams {
    /// Steepness `s > 0`.
    pub steepness: f64,
    /// Total iterations `N ≥ 1`.
    pub total_iters: usize,
    /// Fraction of training `m ∈ (0, 1)` where the weight crosses ½.
    pub decay_node: f64,
}

impl ScheduleParams {
    pub fn new(steepness: f64, total_iters: usize, decay_node: f64) -> Result<Self> {
        let p = Self {
            steepness,
            total_iters,
            decay_node,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.steepness > 0.0 && self.steepness.is_finite()) {
            return Err(Error::InvalidArgument(format!("steepness must be > 0, got {}", self.steepness)));
        }
        if self.total_iters < 1 {
            return Err(Error::InvalidArgument("total iterations must be >= 1".into()));
        }
        if !(self.decay_node > 0.0 && self.decay_node < 1.0) {
            return Err(Error::InvalidArgument(format!("decay node must lie in (0, 1), got {}", self.decay_node)));
        }
        Ok(())
    }
}

/// Geometric-term weight `f(i) = 1 / (1 + exp(2·s·(i/N − m)))`; the
/// appearance term gets `1 − f(i)`.
pub fn schedule<T: Scalar>(iter: usize, params: &ScheduleParams) -> T {
    let s = T::lit(params.steepness);
    let progress = T::from_usize_lossy(iter) / T::from_usize_lossy(params.total_iters);
    T::one() / (T::one() + (T::lit(2.0) * s * (progress - T::lit(params.decay_node))).exp())
}

/// Which attention terms enter the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionTerms {
    pub geometric: bool,
    pub appearance: bool,
}

impl AttentionTerms {
    pub const BOTH: Self = Self {
        geometric: true,
        appearance: true,
    };
    pub const NONE: Self = Self {
        geometric: false,
        appearance: false,
    };
}

/// Objective configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub schedule: ScheduleParams,
    pub edge_radius: usize,
    pub terms: AttentionTerms,
    /// Weight `λ` of an optional D-SSIM term mixed into the photometric base:
    /// `(1 − λ)·L1 + λ·(1 − SSIM)`.
    pub dssim_weight: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents<T> {
    /// Photometric base term (plain L1 unless D-SSIM is mixed in).
    pub l1: T,
    pub l_geo: T,
    pub l_app: T,
    /// Schedule value `f(i)`; 0 when the geometric term is disabled.
    pub f: T,
}

impl<T: Scalar> LossComponents<T> {
    /// `L1 + f·L_geo + (1 − f)·L_app`.
    pub fn recombined(&self) -> T {
        self.l1 + self.f * self.l_geo + (T::one() - self.f) * self.l_app
    }
}

#[derive(Clone, Debug)]
pub struct LossOutput<T> {
    pub loss: T,
    pub grad: ImageBuffer<T>,
    pub components: LossComponents<T>,
}

impl LossConfig {
    /// Evaluates the objective at iteration `iter`. `gt_edges` may carry the
    /// cached enhanced edges of `gt` (same radius).
    pub fn evaluate<T: Scalar>(
        &self,
        gt: &ImageBuffer<T>,
        render: &ImageBuffer<T>,
        gt_edges: Option<&EdgeMap<T>>,
        iter: usize,
    ) -> Result<LossOutput<T>> {
        gt.check_same_shape(render)?;
        let (l1, mut grad) = l1_loss(gt, render)?;
        let mut components = LossComponents {
            l1,
            ..Default::default()
        };

        if let Some(lambda) = self.dssim_weight {
            let lambda = T::lit(lambda);
            let (ssim, ssim_grad) = metrics::ssim_with_grad(gt, render)?;
            components.l1 = (T::one() - lambda) * l1 + lambda * (T::one() - ssim);
            for (g, s) in grad.data.iter_mut().zip(&ssim_grad.data) {
                *g = (T::one() - lambda) * *g - lambda * *s;
            }
        }

        let f = if self.terms.geometric {
            schedule::<T>(iter, &self.schedule)
        } else {
            T::zero()
        };
        components.f = f;

        if self.terms.geometric {
            let computed;
            let gt_edges = match gt_edges {
                Some(e) => e,
                None => {
                    computed = enhanced_edges(gt, self.edge_radius)?;
                    &computed
                }
            };
            let w = geometric_weights_from_edges(gt_edges, &enhanced_edges(render, self.edge_radius)?)?;
            let (l_geo, g_geo) = geometric_loss(gt, render, &w)?;
            components.l_geo = l_geo;
            for (g, v) in grad.data.iter_mut().zip(&g_geo.data) {
                *g = *g + f * *v;
            }
        }
        if self.terms.appearance {
            let w = appearance_weights(gt, render)?;
            let (l_app, g_app) = appearance_loss(gt, render, &w)?;
            components.l_app = l_app;
            let one_minus = T::one() - f;
            for (g, v) in grad.data.iter_mut().zip(&g_app.data) {
                *g = *g + one_minus * *v;
            }
        }
        Ok(LossOutput {
            loss: components.recombined(),
            grad,
            components,
        })
    }
}

/// Full objective `L1 + f(i)·L_geo + (1 − f(i))·L_app` with both attention terms.
pub fn total_loss<T: Scalar>(
    gt: &ImageBuffer<T>,
    render: &ImageBuffer<T>,
    iter: usize,
    params: &ScheduleParams,
    radius: usize,
) -> Result<LossOutput<T>> {
    LossConfig {
        schedule: *params,
        edge_radius: radius,
        terms: AttentionTerms::BOTH,
        dssim_weight: None,
    }
    .evaluate(gt, render, None, iter)
}
