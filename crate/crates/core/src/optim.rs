//! Adam over the flat per-gaussian parameter layout.

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::render::ParamGrads;
use crate::scene::{layout, Gaussian3D, GaussianCloud, PARAMS_PER_GAUSSIAN};
use crate::Scalar;

/// Learning rates per parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningRates {
    /// Position rate at iteration 0, in units of the scene extent.
    pub position_init: f64,
    pub position_final: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position_init: 0.00016,
            position_final: 0.0000016,
            sh_dc: 0.0025,
            sh_rest: 0.0025 / 20.0,
            opacity: 0.05,
            scale: 0.005,
            rotation: 0.001,
        }
    }
}

impl LearningRates {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("position_init", self.position_init),
            ("position_final", self.position_final),
            ("sh_dc", self.sh_dc),
            ("sh_rest", self.sh_rest),
            ("opacity", self.opacity),
            ("scale", self.scale),
            ("rotation", self.rotation),
        ];
        for (name, v) in all {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("learning rate {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Log-linear decay from `position_init` to `position_final` over `total` iterations.
    pub fn position_at(&self, iter: usize, total: usize) -> f64 {
        let t = if total == 0 { 1.0 } else { (iter as f64 / total as f64).clamp(0.0, 1.0) };
        (self.position_init.ln() * (1.0 - t) + self.position_final.ln() * t).exp()
    }

    /// Rate for every flat parameter slot at `iter`; positions are scaled by `extent`.
    pub fn per_slot<T: Scalar>(&self, iter: usize, total: usize, extent: f64) -> [T; PARAMS_PER_GAUSSIAN] {
        let mut lr = [T::zero(); PARAMS_PER_GAUSSIAN];
        let pos = T::lit(self.position_at(iter, total) * extent);
        for (k, v) in lr.iter_mut().enumerate() {
            *v = match k {
                k if k < layout::LOG_SCALE => pos,
                k if k < layout::ROTATION => T::lit(self.scale),
                k if k < layout::OPACITY => T::lit(self.rotation),
                layout::OPACITY => T::lit(self.opacity),
                k if k < layout::SH_REST => T::lit(self.sh_dc),
                _ => T::lit(self.sh_rest),
            };
        }
        lr
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "adam betas must lie in [0, 1) and eps > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// First and second moments for every gaussian, plus the shared step count.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<[T; PARAMS_PER_GAUSSIAN]>,
    pub v: Vec<[T; PARAMS_PER_GAUSSIAN]>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![[T::zero(); PARAMS_PER_GAUSSIAN]; n],
            v: vec![[T::zero(); PARAMS_PER_GAUSSIAN]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    fn bias_corrections(&self, step: u64) -> (T, T) {
        let b1 = T::lit(self.config.beta1);
        let b2 = T::lit(self.config.beta2);
        let s = step.min(i32::MAX as u64) as i32;
        (T::one() - b1.powi(s), T::one() - b2.powi(s))
    }

    /// One update of `params` in place. Rows with a non-finite gradient are left
    /// untouched (moments included); their indices are returned.
    pub fn step_flat(
        &mut self,
        params: &mut [[T; PARAMS_PER_GAUSSIAN]],
        grads: &[[T; PARAMS_PER_GAUSSIAN]],
        lr: &[T; PARAMS_PER_GAUSSIAN],
    ) -> Result<Vec<usize>> {
        if params.len() != self.len() || grads.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam state for {} gaussians, got {} params and {} gradients",
                self.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let (c1, c2) = self.bias_corrections(self.step);
        let b1 = T::lit(self.config.beta1);
        let b2 = T::lit(self.config.beta2);
        let eps = T::lit(self.config.eps);
        let mut skipped = Vec::new();
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                skipped.push(i);
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..PARAMS_PER_GAUSSIAN {
                m[k] = b1 * m[k] + (T::one() - b1) * g[k];
                v[k] = b2 * v[k] + (T::one() - b2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] = p[k] - lr[k] * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(skipped)
    }

    /// Steps a whole cloud and renormalizes its quaternions.
    pub fn step_cloud(
        &mut self,
        cloud: &mut GaussianCloud<T>,
        grads: &ParamGrads<T>,
        lr: &[T; PARAMS_PER_GAUSSIAN],
    ) -> Result<Vec<usize>> {
        let mut flat: Vec<_> = cloud.gaussians.iter().map(Gaussian3D::to_flat).collect();
        let skipped = self.step_flat(&mut flat, &grads.per_gaussian, lr)?;
        for s in &skipped {
            log::warn!("non-finite gradient for gaussian {s} at step {}; update skipped", self.step);
        }
        for (g, f) in cloud.gaussians.iter_mut().zip(&flat) {
            *g = Gaussian3D::from_flat(f);
            g.normalize_rotation();
        }
        Ok(skipped)
    }

    /// Position displacement the next step would apply to gaussian `i` under
    /// the current moments.
    pub fn position_step(&self, i: usize, lr: T) -> Vec3<T> {
        let (c1, c2) = self.bias_corrections(self.step.max(1));
        let eps = T::lit(self.config.eps);
        [0, 1, 2].map(|k| {
            let k = layout::POSITION + k;
            -lr * (self.m[i][k] / c1) / ((self.v[i][k] / c2).sqrt() + eps)
        })
    }

    /// Reorders state after densification; `None` rows start from zero.
    pub fn remap(&mut self, origin: &[Option<usize>]) {
        let zero = [T::zero(); PARAMS_PER_GAUSSIAN];
        let pick = |src: &[[T; PARAMS_PER_GAUSSIAN]]| origin.iter().map(|o| o.map_or(zero, |i| src[i])).collect();
        self.m = pick(&self.m);
        self.v = pick(&self.v);
    }

    pub fn retain(&mut self, kept: &[usize]) {
        self.m = kept.iter().map(|&i| self.m[i]).collect();
        self.v = kept.iter().map(|&i| self.v[i]).collect();
    }

    pub fn zero_opacity_moments(&mut self) {
        for (m, v) in self.m.iter_mut().zip(&mut self.v) {
            m[layout::OPACITY] = T::zero();
            v[layout::OPACITY] = T::zero();
        }
    }
}
