//! Attention-weighted photometric losses.

pub mod attention;
pub mod edges;

pub use attention::{
    appearance_loss, appearance_weights, geometric_loss, geometric_weights, geometric_weights_from_edges,
    l1_loss, schedule, total_loss, AttentionTerms, LossComponents, LossConfig, LossOutput, ScheduleParams,
    WeightMap,
};
pub use edges::{canny, edge_enhance, enhanced_edges, gradient_magnitude, non_max_suppression, EdgeMap};

use crate::Scalar;

/// Single-channel row-major float image.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![T::zero(); width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn max_value(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v))
    }
}
