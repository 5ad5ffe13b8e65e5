//! Adaptive density control: view statistics, clone/split decisions, pruning
//! and opacity reset.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, Vec2, Vec3};
use crate::render::RenderAux;
use crate::scene::{Gaussian3D, GaussianCloud};
use crate::Scalar;

/// Which accumulated gradient statistic decides densification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DensifyMode {
    /// Mean NDC gradient norm over the views that saw the gaussian.
    #[default]
    Baseline,
    /// Transmittance-weighted mean NDC gradient norm.
    OpacityWeighted,
}

impl DensifyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::OpacityWeighted => "opacity_weighted",
        }
    }
}

impl fmt::Display for DensifyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DensifyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "opacity_weighted" | "opacity-weighted" => Ok(Self::OpacityWeighted),
            _ => Err(Error::InvalidArgument(format!(
                "unknown densify mode {s:?} (expected baseline or opacity_weighted)"
            ))),
        }
    }
}

/// How a gaussian's transmittance weight is read from a render.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TransmittanceReading {
    /// One weight per view: the gaussian's summed blend weight `Σ_p α·T` in that view,
    /// paired with the view's NDC gradient norm.
    #[default]
    PerView,
    /// One weight per pixel: `Σ_p α·T·‖∂L_p/∂μ‖ / Σ_p α·T` over all pixels of all views.
    PerPixel,
}

impl TransmittanceReading {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PerView => "per_view",
            Self::PerPixel => "per_pixel",
        }
    }
}

impl FromStr for TransmittanceReading {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_view" | "per-view" => Ok(Self::PerView),
            "per_pixel" | "per-pixel" => Ok(Self::PerPixel),
            _ => Err(Error::InvalidArgument(format!(
                "unknown transmittance reading {s:?} (expected per_view or per_pixel)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensifyConfig {
    pub tau_pos: f64,
    /// Split instead of clone above this fraction of the scene extent.
    pub percent_dense: f64,
    pub interval: usize,
    pub start_iter: usize,
    pub stop_iter: usize,
    pub opacity_reset_interval: usize,
    pub prune_opacity_threshold: f64,
    /// Prune gaussians larger than this fraction of the scene extent (after the first reset).
    pub max_world_scale_fraction: f64,
    pub mode: DensifyMode,
    pub reading: TransmittanceReading,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            tau_pos: 0.0002,
            percent_dense: 0.01,
            interval: 100,
            start_iter: 500,
            stop_iter: 15000,
            opacity_reset_interval: 3000,
            prune_opacity_threshold: 0.005,
            max_world_scale_fraction: 0.1,
            mode: DensifyMode::Baseline,
            reading: TransmittanceReading::PerView,
        }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.tau_pos > 0.0) {
            return bad(format!("tau_pos must be > 0, got {}", self.tau_pos));
        }
        if self.start_iter >= self.stop_iter {
            return bad(format!(
                "densify start_iter ({}) must be < stop_iter ({})",
                self.start_iter, self.stop_iter
            ));
        }
        if self.interval == 0 || self.opacity_reset_interval == 0 {
            return bad("densify interval and opacity_reset_interval must be >= 1".into());
        }
        if !(self.percent_dense > 0.0) || !(self.max_world_scale_fraction > 0.0) {
            return bad("percent_dense and max_world_scale_fraction must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.prune_opacity_threshold) {
            return bad(format!(
                "prune_opacity_threshold must lie in [0, 1), got {}",
                self.prune_opacity_threshold
            ));
        }
        Ok(())
    }

    /// Whether a densify event runs after iteration `iter` of a run of `total` iterations.
    /// The final iteration never densifies.
    pub fn is_densify_iter(&self, iter: usize, total: usize) -> bool {
        iter > self.start_iter && iter <= self.stop_iter && iter < total && iter % self.interval == 0
    }

    /// Whether opacities are reset after iteration `iter` of a run of `total` iterations.
    pub fn is_reset_iter(&self, iter: usize, total: usize) -> bool {
        iter > 0 && iter % self.opacity_reset_interval == 0 && iter < self.stop_iter.min(total)
    }
}

/// Per-gaussian accumulators between densify events.
#[derive(Clone, Debug, PartialEq)]
pub struct DensifyStats<T> {
    pub grad_norm_sum: Vec<T>,
    pub weighted_grad_sum: Vec<T>,
    pub transmittance_sum: Vec<T>,
    pub view_count: Vec<u32>,
}

impl<T: Scalar> DensifyStats<T> {
    pub fn new(n: usize) -> Self {
        Self {
            grad_norm_sum: vec![T::zero(); n],
            weighted_grad_sum: vec![T::zero(); n],
            transmittance_sum: vec![T::zero(); n],
            view_count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.view_count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.view_count.is_empty()
    }

    pub fn reset(&mut self, n: usize) {
        *self = Self::new(n);
    }

    fn check_t(index: usize, t: T) -> Result<()> {
        if t < T::zero() || !t.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "transmittance weight for gaussian {index} must be finite and >= 0, got {t}"
            )));
        }
        Ok(())
    }

    /// Adds one view of gaussian `index`. Views where it covered no pixel are ignored.
    pub fn record_view(&mut self, index: usize, ndc_grad: Vec2<T>, t_view: T, hits: u32) -> Result<()> {
        Self::check_t(index, t_view)?;
        if hits == 0 {
            return Ok(());
        }
        let g = linalg::norm2(ndc_grad);
        self.grad_norm_sum[index] = self.grad_norm_sum[index] + g;
        self.weighted_grad_sum[index] = self.weighted_grad_sum[index] + t_view * g;
        self.transmittance_sum[index] = self.transmittance_sum[index] + t_view;
        self.view_count[index] += 1;
        Ok(())
    }

    /// Per-pixel variant: `pixel_weighted` is `Σ_p α·T·‖∂L_p/∂μ‖` for this view.
    pub fn record_pixels(&mut self, index: usize, ndc_grad: Vec2<T>, t_view: T, pixel_weighted: T, hits: u32) -> Result<()> {
        Self::check_t(index, t_view)?;
        Self::check_t(index, pixel_weighted)?;
        if hits == 0 {
            return Ok(());
        }
        self.grad_norm_sum[index] = self.grad_norm_sum[index] + linalg::norm2(ndc_grad);
        self.weighted_grad_sum[index] = self.weighted_grad_sum[index] + pixel_weighted;
        self.transmittance_sum[index] = self.transmittance_sum[index] + t_view;
        self.view_count[index] += 1;
        Ok(())
    }

    /// Records every gaussian of a render whose backward pass has run.
    pub fn record_render(&mut self, aux: &RenderAux<T>, reading: TransmittanceReading) -> Result<()> {
        if aux.gaussian_count() != self.len() {
            return Err(Error::AuxMismatch {
                aux: aux.gaussian_count(),
                cloud: self.len(),
            });
        }
        for i in 0..self.len() {
            let (g, t, hits) = (aux.ndc_grad[i], aux.blend_weight_sum[i], aux.pixel_hit_count[i]);
            match reading {
                TransmittanceReading::PerView => self.record_view(i, g, t, hits)?,
                TransmittanceReading::PerPixel => self.record_pixels(i, g, t, aux.pixel_weighted_ndc_grad[i], hits)?,
            }
        }
        Ok(())
    }

    /// Criterion value of gaussian `index`, or `None` when it cannot be evaluated.
    pub fn criterion(&self, index: usize, mode: DensifyMode) -> Option<T> {
        match mode {
            DensifyMode::Baseline => {
                (self.view_count[index] > 0).then(|| self.grad_norm_sum[index] / T::from(self.view_count[index]).unwrap())
            }
            DensifyMode::OpacityWeighted => (self.view_count[index] > 0 && self.transmittance_sum[index] > T::zero())
                .then(|| self.weighted_grad_sum[index] / self.transmittance_sum[index]),
        }
    }

    /// Keeps the rows named by `kept`, in order.
    pub fn retain(&mut self, kept: &[usize]) {
        let pick = |v: &[T]| kept.iter().map(|&i| v[i]).collect::<Vec<_>>();
        self.grad_norm_sum = pick(&self.grad_norm_sum);
        self.weighted_grad_sum = pick(&self.weighted_grad_sum);
        self.transmittance_sum = pick(&self.transmittance_sum);
        self.view_count = kept.iter().map(|&i| self.view_count[i]).collect();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Clone,
    Split,
}

/// Per-gaussian decisions; `extent` is the scene extent in world units.
pub fn densify_decision<T: Scalar>(
    stats: &DensifyStats<T>,
    cloud: &GaussianCloud<T>,
    config: &DensifyConfig,
    extent: T,
) -> Result<Vec<Decision>> {
    if stats.len() != cloud.len() {
        return Err(Error::ShapeMismatch(format!(
            "densify stats cover {} gaussians, cloud has {}",
            stats.len(),
            cloud.len()
        )));
    }
    let tau = T::lit(config.tau_pos);
    let split_above = T::lit(config.percent_dense) * extent;
    Ok((0..cloud.len())
        .map(|i| match stats.criterion(i, config.mode) {
            Some(v) if v > tau => {
                if cloud.gaussians[i].max_scale() > split_above {
                    Decision::Split
                } else {
                    Decision::Clone
                }
            }
            _ => Decision::Keep,
        })
        .collect())
}

pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;

/// Result of [`apply_densify`].
#[derive(Clone, Debug)]
pub struct Densified<T> {
    pub cloud: GaussianCloud<T>,
    /// For each new index, the old index whose optimizer state carries over (`None` = fresh).
    pub origin: Vec<Option<usize>>,
    pub clones: usize,
    pub splits: usize,
}

/// Applies clone/split decisions.
///
/// Kept and cloned gaussians stay in place; clone duplicates follow, then the
/// two children of each split. `clone_offsets`, when given, displaces each
/// duplicate. Split children are drawn from the parent density with a sampler
/// seeded by `(seed, iter)`.
pub fn apply_densify<T: Scalar>(
    cloud: &GaussianCloud<T>,
    decisions: &[Decision],
    clone_offsets: Option<&[Vec3<T>]>,
    seed: u64,
    iter: usize,
) -> Result<Densified<T>> {
    if decisions.len() != cloud.len() || clone_offsets.is_some_and(|o| o.len() != cloud.len()) {
        return Err(Error::ShapeMismatch(format!(
            "{} decisions for {} gaussians",
            decisions.len(),
            cloud.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (iter as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut kept = Vec::new();
    let mut origin = Vec::new();
    let mut clones = Vec::new();
    let mut children = Vec::new();
    for (i, (g, d)) in cloud.gaussians.iter().zip(decisions).enumerate() {
        match d {
            Decision::Keep => {
                kept.push(g.clone());
                origin.push(Some(i));
            }
            Decision::Clone => {
                kept.push(g.clone());
                origin.push(Some(i));
                let mut dup = g.clone();
                if let Some(off) = clone_offsets {
                    dup.position = linalg::add3(dup.position, off[i]);
                }
                clones.push(dup);
            }
            Decision::Split => {
                let act = g.activate(i)?;
                for _ in 0..2 {
                    let z: Vec3<T> = [0; 3].map(|_| T::lit(StandardNormal.sample(&mut rng)));
                    let local = [act.scale[0] * z[0], act.scale[1] * z[1], act.scale[2] * z[2]];
                    let mut child: Gaussian3D<T> = g.clone();
                    child.position = linalg::add3(g.position, linalg::mat3_vec(&act.rotation, local));
                    let shrink = T::lit(SPLIT_SCALE_DIVISOR.ln());
                    child.log_scale = g.log_scale.map(|s| s - shrink);
                    children.push(child);
                }
            }
        }
    }
    let (n_clones, n_splits) = (clones.len(), children.len() / 2);
    origin.extend(std::iter::repeat_n(None, clones.len() + children.len()));
    kept.extend(clones);
    kept.extend(children);
    Ok(Densified {
        cloud: GaussianCloud::new(kept, cloud.active_sh_degree),
        origin,
        clones: n_clones,
        splits: n_splits,
    })
}

/// Result of [`prune`]: the surviving cloud and the old indices it keeps.
#[derive(Clone, Debug)]
pub struct Pruned<T> {
    pub cloud: GaussianCloud<T>,
    pub kept: Vec<usize>,
}

impl<T> Pruned<T> {
    pub fn removed(&self, before: usize) -> usize {
        before - self.kept.len()
    }
}

/// Removes near-transparent gaussians and, when `prune_large`, those wider than
/// `max_world_scale_fraction · extent`.
pub fn prune<T: Scalar>(
    cloud: &GaussianCloud<T>,
    config: &DensifyConfig,
    extent: T,
    prune_large: bool,
    iteration: usize,
) -> Result<Pruned<T>> {
    let min_opacity = T::lit(config.prune_opacity_threshold);
    let max_scale = T::lit(config.max_world_scale_fraction) * extent;
    let kept: Vec<usize> = cloud
        .gaussians
        .iter()
        .enumerate()
        .filter(|(_, g)| !(g.opacity() < min_opacity) && !(prune_large && g.max_scale() > max_scale))
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyCloud { iteration });
    }
    Ok(Pruned {
        cloud: GaussianCloud::new(
            kept.iter().map(|&i| cloud.gaussians[i].clone()).collect(),
            cloud.active_sh_degree,
        ),
        kept,
    })
}

pub const OPACITY_RESET_CAP: f64 = 0.01;

/// Clamps every activated opacity to at most [`OPACITY_RESET_CAP`].
pub fn reset_opacity<T: Scalar>(cloud: &mut GaussianCloud<T>) {
    let cap = T::lit(OPACITY_RESET_CAP).logit();
    for g in &mut cloud.gaussians {
        g.opacity_logit = g.opacity_logit.min(cap);
    }
}

/// Prune, then reset opacities when `iter` falls on the reset schedule.
/// Large-gaussian pruning starts once the first reset has happened.
pub fn prune_and_reset<T: Scalar>(
    cloud: &GaussianCloud<T>,
    iter: usize,
    total_iters: usize,
    config: &DensifyConfig,
    extent: T,
) -> Result<(Pruned<T>, bool)> {
    let mut pruned = prune(cloud, config, extent, iter > config.opacity_reset_interval, iter)?;
    let reset = config.is_reset_iter(iter, total_iters);
    if reset {
        reset_opacity(&mut pruned.cloud);
    }
    Ok((pruned, reset))
}

/// One densification event, logged as a single line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DensifyEvent {
    pub iteration: usize,
    pub mode: DensifyMode,
    pub clones: usize,
    pub splits: usize,
    pub pruned: usize,
    pub size: usize,
}

impl fmt::Display for DensifyEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "densify iter={} mode={} clones={} splits={} pruned={} size={}",
            self.iteration, self.mode, self.clones, self.splits, self.pruned, self.size
        )
    }
}
