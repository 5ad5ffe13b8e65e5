//! Training loop: render, loss, backward, Adam, densification.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::TrainState;
use crate::density::{self, DensifyConfig, DensifyEvent, DensifyStats};
use crate::error::{Error, Result};
use crate::init::{slv_initialize, SlvInit};
use crate::loss::{enhanced_edges, AttentionTerms, EdgeMap, LossComponents, LossConfig, ScheduleParams};
use crate::metrics;
use crate::optim::{Adam, AdamConfig, LearningRates};
use crate::render::{rasterize_backward, rasterize_forward, render};
use crate::scene::{GaussianCloud, MAX_SH_DEGREE};
use crate::synth::Scene;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub total_iters: usize,
    pub lr: LearningRates,
    pub adam: AdamConfig,
    pub steepness: f64,
    pub decay_node: f64,
    pub edge_radius: usize,
    pub terms: AttentionTerms,
    pub dssim_weight: Option<f64>,
    pub densify: DensifyConfig,
    pub init_count: usize,
    pub init_variance_scale: f64,
    pub seed: u64,
    /// Overrides the scene background when set.
    pub background: Option<[f64; 3]>,
    pub sh_degree_interval: usize,
    pub max_sh_degree: usize,
    /// Loss components are logged every `log_interval` iterations.
    pub log_interval: usize,
    /// PSNRs are added to the log every `eval_interval` iterations and at the end.
    pub eval_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_iters: 7000,
            lr: LearningRates::default(),
            adam: AdamConfig::default(),
            steepness: 10.0,
            decay_node: 0.25,
            edge_radius: 2,
            terms: AttentionTerms::BOTH,
            dssim_weight: None,
            densify: DensifyConfig {
                mode: density::DensifyMode::OpacityWeighted,
                ..Default::default()
            },
            init_count: 100,
            init_variance_scale: 0.1,
            seed: 0,
            background: None,
            sh_degree_interval: 1000,
            max_sh_degree: MAX_SH_DEGREE,
            log_interval: 100,
            eval_interval: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.lr.validate()?;
        self.adam.validate()?;
        self.densify.validate()?;
        self.schedule().validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.init_count == 0 || !(self.init_variance_scale > 0.0) {
            return bad("init count must be >= 1 and variance scale > 0");
        }
        if self.sh_degree_interval == 0 || self.log_interval == 0 || self.eval_interval == 0 {
            return bad("sh_degree_interval, log_interval and eval_interval must be >= 1");
        }
        if self.max_sh_degree > MAX_SH_DEGREE {
            return bad("max_sh_degree must be <= 3");
        }
        if self.dssim_weight.is_some_and(|l| !(0.0..=1.0).contains(&l)) {
            return bad("dssim_weight must lie in [0, 1]");
        }
        if self.background.is_some_and(|b| b.iter().any(|c| !(0.0..=1.0).contains(c))) {
            return bad("background must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn schedule(&self) -> ScheduleParams {
        ScheduleParams {
            steepness: self.steepness,
            total_iters: self.total_iters.max(1),
            decay_node: self.decay_node,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            schedule: self.schedule(),
            edge_radius: self.edge_radius,
            terms: self.terms,
            dssim_weight: self.dssim_weight,
        }
    }

    pub fn slv(&self, scene_extent: crate::init::Aabb) -> SlvInit {
        SlvInit {
            count: self.init_count,
            extent: scene_extent,
            variance_scale: self.init_variance_scale,
        }
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub loss: f64,
    pub l1: f64,
    pub l_geo: f64,
    pub l_app: f64,
    pub f: f64,
    pub cloud_size: usize,
    pub train_psnr: Option<f64>,
    pub test_psnr: Option<f64>,
}

pub const METRICS_HEADER: &str = "iter,L,L1,L_geo,L_app,f,cloud_size,train_psnr,test_psnr";

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.loss,
            self.l1,
            self.l_geo,
            self.l_app,
            self.f,
            self.cloud_size,
            opt(self.train_psnr),
            opt(self.test_psnr)
        )
    }

    pub fn parse_csv_line(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            return None;
        }
        let opt = |s: &str| if s.is_empty() { Some(None) } else { s.parse().ok().map(Some) };
        Some(Self {
            iter: f[0].parse().ok()?,
            loss: f[1].parse().ok()?,
            l1: f[2].parse().ok()?,
            l_geo: f[3].parse().ok()?,
            l_app: f[4].parse().ok()?,
            f: f[5].parse().ok()?,
            cloud_size: f[6].parse().ok()?,
            train_psnr: opt(f[7])?,
            test_psnr: opt(f[8])?,
        })
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{}", r.to_csv_line()).unwrap();
    }
    s
}

/// Mean PSNR of `cloud` over the given views of `scene`.
pub fn mean_psnr<T: Scalar>(scene: &Scene<T>, cloud: &GaussianCloud<T>, views: &[usize], background: [T; 3]) -> Result<f64> {
    if views.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for &v in views {
        let img = render(cloud, &scene.cameras[v], background)?.clamped();
        total += metrics::psnr(&img, &scene.images[v])?;
    }
    Ok(total / views.len() as f64)
}

/// Iteration-by-iteration trainer over a loaded scene.
pub struct Trainer<'a, T> {
    scene: &'a Scene<T>,
    config: TrainConfig,
    loss: LossConfig,
    background: [T; 3],
    extent: f64,
    train_views: Vec<usize>,
    test_views: Vec<usize>,
    gt_edges: Vec<Option<EdgeMap<T>>>,
    order: (usize, Vec<usize>),
    pub cloud: GaussianCloud<T>,
    pub adam: Adam<T>,
    pub stats: DensifyStats<T>,
    /// Last completed iteration.
    pub iteration: usize,
    pub events: Vec<DensifyEvent>,
    last: LossComponents<T>,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(scene: &'a Scene<T>, config: TrainConfig, cloud: GaussianCloud<T>) -> Result<Self> {
        let n = cloud.len();
        Self::build(scene, config, cloud, Adam::new(AdamConfig::default(), n), DensifyStats::new(n), 0)
    }

    /// Starts from SLV initialization over the scene's extent.
    pub fn from_slv(scene: &'a Scene<T>, config: TrainConfig) -> Result<Self> {
        let cloud = slv_initialize(&config.slv(scene.manifest.extent), config.seed)?;
        Self::new(scene, config, cloud)
    }

    pub fn resume(scene: &'a Scene<T>, config: TrainConfig, cloud: GaussianCloud<T>, state: TrainState<T>) -> Result<Self> {
        if state.adam.len() != cloud.len() || state.stats.len() != cloud.len() {
            return Err(Error::ShapeMismatch(format!(
                "training state covers {} gaussians, checkpoint has {}",
                state.adam.len(),
                cloud.len()
            )));
        }
        Self::build(scene, config, cloud, state.adam, state.stats, state.iteration)
    }

    fn build(
        scene: &'a Scene<T>,
        config: TrainConfig,
        cloud: GaussianCloud<T>,
        mut adam: Adam<T>,
        stats: DensifyStats<T>,
        iteration: usize,
    ) -> Result<Self> {
        config.validate()?;
        if cloud.is_empty() {
            return Err(Error::EmptyCloud { iteration });
        }
        cloud.validate()?;
        let train_views = scene.manifest.train_indices();
        if train_views.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "training needs at least 2 training views, scene has {}",
                train_views.len()
            )));
        }
        adam.config = config.adam;
        let background = config.background.unwrap_or(scene.manifest.background).map(T::lit);
        Ok(Self {
            scene,
            loss: config.loss(),
            background,
            extent: scene.camera_extent(),
            test_views: scene.manifest.test_indices(),
            gt_edges: vec![None; scene.images.len()],
            order: (usize::MAX, Vec::new()),
            train_views,
            config,
            cloud,
            adam,
            stats,
            iteration,
            events: Vec::new(),
            last: LossComponents::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn background(&self) -> [T; 3] {
        self.background
    }

    pub fn state(&self) -> TrainState<T> {
        TrainState {
            iteration: self.iteration,
            adam: self.adam.clone(),
            stats: self.stats.clone(),
        }
    }

    /// Camera used at 1-based iteration `iter`: a seeded shuffle per epoch.
    pub fn camera_for(&mut self, iter: usize) -> usize {
        let n = self.train_views.len();
        let epoch = (iter - 1) / n;
        if self.order.0 != epoch {
            let mut order = self.train_views.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add((epoch as u64).wrapping_mul(0xA24B_AED4_963E_E407)));
            order.shuffle(&mut rng);
            self.order = (epoch, order);
        }
        self.order.1[(iter - 1) % n]
    }

    fn edges_for(&mut self, view: usize) -> Result<()> {
        if self.loss.terms.geometric && self.gt_edges[view].is_none() {
            self.gt_edges[view] = Some(enhanced_edges(&self.scene.images[view], self.loss.edge_radius)?);
        }
        Ok(())
    }

    /// Runs one iteration and returns its loss components.
    pub fn step(&mut self) -> Result<LossComponents<T>> {
        let iter = self.iteration + 1;
        let total = self.config.total_iters;
        if iter % self.config.sh_degree_interval == 0 && self.cloud.active_sh_degree < self.config.max_sh_degree {
            self.cloud.active_sh_degree += 1;
        }
        let view = self.camera_for(iter);
        self.edges_for(view)?;
        let camera = &self.scene.cameras[view];
        let gt = &self.scene.images[view];

        let (image, mut aux) = rasterize_forward(&self.cloud, camera, self.background)?;
        let out = self.loss.evaluate(gt, &image, self.gt_edges[view].as_ref(), iter)?;
        let grads = rasterize_backward(&self.cloud, camera, &mut aux, &out.grad)?;
        if iter <= self.config.densify.stop_iter {
            self.stats.record_render(&aux, self.config.densify.reading)?;
        }

        let lr = self.config.lr.per_slot::<T>(iter, total, self.extent);
        self.adam.step_cloud(&mut self.cloud, &grads, &lr)?;

        if self.config.densify.is_densify_iter(iter, total) {
            self.densify(iter, lr[0])?;
        }
        if self.config.densify.is_reset_iter(iter, total) {
            density::reset_opacity(&mut self.cloud);
            self.adam.zero_opacity_moments();
        }
        self.iteration = iter;
        self.last = out.components;
        Ok(out.components)
    }

    fn densify(&mut self, iter: usize, lr_pos: T) -> Result<()> {
        let cfg = &self.config.densify;
        let extent = T::lit(self.extent);
        let decisions = density::densify_decision(&self.stats, &self.cloud, cfg, extent)?;
        let offsets: Vec<_> = (0..self.cloud.len()).map(|i| self.adam.position_step(i, lr_pos)).collect();
        let grown = density::apply_densify(&self.cloud, &decisions, Some(&offsets), self.config.seed, iter)?;
        self.adam.remap(&grown.origin);
        let before = grown.cloud.len();
        let pruned = density::prune(&grown.cloud, cfg, extent, iter > cfg.opacity_reset_interval, iter)?;
        self.adam.retain(&pruned.kept);
        let event = DensifyEvent {
            iteration: iter,
            mode: cfg.mode,
            clones: grown.clones,
            splits: grown.splits,
            pruned: pruned.removed(before),
            size: pruned.cloud.len(),
        };
        log::info!("{event}");
        self.events.push(event);
        self.cloud = pruned.cloud;
        self.stats.reset(self.cloud.len());
        Ok(())
    }

    /// Mean PSNR over training and held-out views.
    pub fn evaluate(&self) -> Result<(f64, f64)> {
        Ok((
            mean_psnr(self.scene, &self.cloud, &self.train_views, self.background)?,
            mean_psnr(self.scene, &self.cloud, &self.test_views, self.background)?,
        ))
    }

    fn row(&self, with_eval: bool) -> Result<MetricsRow> {
        let c = &self.last;
        let (train_psnr, test_psnr) = if with_eval {
            let (a, b) = self.evaluate()?;
            (Some(a), Some(b))
        } else {
            (None, None)
        };
        Ok(MetricsRow {
            iter: self.iteration,
            loss: c.recombined().to_f64_lossy(),
            l1: c.l1.to_f64_lossy(),
            l_geo: c.l_geo.to_f64_lossy(),
            l_app: c.l_app.to_f64_lossy(),
            f: c.f.to_f64_lossy(),
            cloud_size: self.cloud.len(),
            train_psnr,
            test_psnr: test_psnr.filter(|v| !v.is_nan()),
        })
    }

    /// Trains through iteration `end` (capped at the configured total).
    /// `on_row` sees each metrics row; `after_step` runs after every iteration.
    pub fn run_to<E: From<Error>>(
        &mut self,
        end: usize,
        mut on_row: impl FnMut(&MetricsRow) -> std::result::Result<(), E>,
        mut after_step: impl FnMut(&Self) -> std::result::Result<(), E>,
    ) -> std::result::Result<(), E> {
        let end = end.min(self.config.total_iters);
        while self.iteration < end {
            self.step()?;
            let i = self.iteration;
            let eval = i % self.config.eval_interval == 0 || i == self.config.total_iters;
            if eval || i % self.config.log_interval == 0 {
                on_row(&self.row(eval)?)?;
            }
            after_step(self)?;
        }
        Ok(())
    }
}

/// Result of a complete run.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub cloud: GaussianCloud<T>,
    pub history: Vec<MetricsRow>,
    pub events: Vec<DensifyEvent>,
}

/// Trains `initial` on `scene` for the configured number of iterations.
pub fn train<T: Scalar>(scene: &Scene<T>, config: &TrainConfig, initial: GaussianCloud<T>) -> Result<TrainOutcome<T>> {
    let mut trainer = Trainer::new(scene, config.clone(), initial)?;
    let mut history = Vec::new();
    trainer.run_to::<Error>(
        config.total_iters,
        |r| {
            history.push(r.clone());
            Ok(())
        },
        |_| Ok(()),
    )?;
    Ok(TrainOutcome {
        cloud: trainer.cloud,
        history,
        events: trainer.events,
    })
}
