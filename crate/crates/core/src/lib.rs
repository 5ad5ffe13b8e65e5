//! CPU 3D Gaussian splatting: differentiable tile rasterizer, edge- and
//! appearance-attention losses, adaptive densification and a training loop.

pub mod ablation;
pub mod checkpoint;
pub mod density;
pub mod error;
pub mod imageio;
pub mod init;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod render;
pub mod scalar;
pub mod scene;
pub mod sh;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use scene::{Camera, Gaussian3D, GaussianCloud, ImageBuffer};

pub type Cloud = GaussianCloud<f64>;
pub type Cloud32 = GaussianCloud<f32>;
pub type Image = ImageBuffer<f64>;
pub type Image32 = ImageBuffer<f32>;
pub type Cam = Camera<f64>;
