//! Sparse, large-variance random initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Vec3};
use crate::scene::{Gaussian3D, GaussianCloud};
use crate::Scalar;

pub const INITIAL_OPACITY: f64 = 0.1;

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn diagonal(&self) -> f64 {
        linalg::norm3(linalg::sub3(self.max, self.min))
    }

    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| 0.5 * (self.min[k] + self.max[k]))
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            if !(self.max[k] > self.min[k]) || !self.min[k].is_finite() || !self.max[k].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "degenerate extent on axis {k}: [{}, {}]",
                    self.min[k], self.max[k]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlvInit {
    pub count: usize,
    pub extent: Aabb,
    /// Multiplier on the per-axis σ relative to the extent.
    pub variance_scale: f64,
}

impl SlvInit {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("initial gaussian count must be >= 1".into()));
        }
        if !(self.variance_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "variance_scale must be > 0, got {}",
                self.variance_scale
            )));
        }
        self.extent.validate()
    }

    /// Per-axis σ shared by every initial gaussian.
    pub fn sigma(&self) -> f64 {
        self.variance_scale * self.extent.diagonal() / (self.count as f64).cbrt()
    }
}

/// `count` isotropic gray gaussians, uniform in the extent.
pub fn slv_initialize<T: Scalar>(init: &SlvInit, seed: u64) -> Result<GaussianCloud<T>> {
    init.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = T::lit(init.sigma());
    let gaussians = (0..init.count)
        .map(|_| {
            let p: Vec3<T> = [0, 1, 2].map(|k| T::lit(rng.random_range(init.extent.min[k]..init.extent.max[k])));
            Gaussian3D::isotropic(p, sigma, T::lit(INITIAL_OPACITY), [T::lit(0.5); 3])
        })
        .collect();
    Ok(GaussianCloud::new(gaussians, 0))
}
