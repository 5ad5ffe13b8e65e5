//! The four-arm ablation: baseline, +geometric, +opacity-weighted densification, full.

use std::fmt;
use std::str::FromStr;

use crate::checkpoint::cloud_hash;
use crate::density::DensifyMode;
use crate::error::{Error, Result};
use crate::init::slv_initialize;
use crate::loss::AttentionTerms;
use crate::metrics;
use crate::render::render;
use crate::synth::Scene;
use crate::train::{train, TrainConfig, TrainOutcome};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AblationMode {
    /// Plain L1, mean-gradient densification.
    Baseline,
    /// Adds the geometric attention term.
    Geo,
    /// Geometric term with opacity-weighted densification.
    GeoOpacity,
    /// Both attention terms with opacity-weighted densification.
    Full,
}

impl AblationMode {
    pub const ALL: [Self; 4] = [Self::Baseline, Self::Geo, Self::GeoOpacity, Self::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Geo => "geo",
            Self::GeoOpacity => "geo+opacity",
            Self::Full => "full",
        }
    }

    pub fn terms(self) -> AttentionTerms {
        match self {
            Self::Baseline => AttentionTerms::NONE,
            Self::Geo | Self::GeoOpacity => AttentionTerms {
                geometric: true,
                appearance: false,
            },
            Self::Full => AttentionTerms::BOTH,
        }
    }

    pub fn densify_mode(self) -> DensifyMode {
        match self {
            Self::Baseline | Self::Geo => DensifyMode::Baseline,
            Self::GeoOpacity | Self::Full => DensifyMode::OpacityWeighted,
        }
    }

    /// `base` with this arm's loss terms and densification criterion.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        c.terms = self.terms();
        c.densify.mode = self.densify_mode();
        c
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "geo" => Ok(Self::Geo),
            "geo+opacity" | "geo_opacity" => Ok(Self::GeoOpacity),
            "full" => Ok(Self::Full),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode {s:?} (expected baseline, geo, geo+opacity or full)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub test_psnr: f64,
    pub test_ssim: f64,
    pub train_psnr: f64,
    pub final_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub init_hash: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, mode: AblationMode) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<12} {:>10} {:>8} {:>11} {:>6}\n",
            "mode", "PSNR(dB)", "SSIM", "train PSNR", "size"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<12} {:>10.3} {:>8.4} {:>11.3} {:>6}\n",
                r.mode.as_str(),
                r.test_psnr,
                r.test_ssim,
                r.train_psnr,
                r.final_size
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,test_psnr,test_ssim,train_psnr,final_size\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.mode, r.test_psnr, r.test_ssim, r.train_psnr, r.final_size
            ));
        }
        s
    }
}

/// Mean `(PSNR, SSIM)` of `cloud` over `views`.
pub fn evaluate_views<T: Scalar>(
    scene: &Scene<T>,
    cloud: &crate::scene::GaussianCloud<T>,
    views: &[usize],
    background: [T; 3],
) -> Result<(f64, f64)> {
    let (mut p, mut s) = (0.0, 0.0);
    for &v in views {
        let img = render(cloud, &scene.cameras[v], background)?.clamped();
        p += metrics::psnr(&img, &scene.images[v])?;
        s += metrics::ssim(&img, &scene.images[v])?.to_f64_lossy();
    }
    let n = views.len() as f64;
    Ok((p / n, s / n))
}

/// Trains every arm in `modes` from one shared SLV initialization.
/// `on_done` sees each arm's outcome as it finishes.
pub fn run_ablation<T: Scalar>(
    scene: &Scene<T>,
    base: &TrainConfig,
    modes: &[AblationMode],
    mut on_done: impl FnMut(AblationMode, &TrainOutcome<T>) -> Result<()>,
) -> Result<AblationReport> {
    base.validate()?;
    let init = slv_initialize::<T>(&base.slv(scene.manifest.extent), base.seed)?;
    let init_hash = cloud_hash(&init);
    let background = base.background.unwrap_or(scene.manifest.background).map(T::lit);
    let test = scene.manifest.test_indices();
    let train_views = scene.manifest.train_indices();
    let mut rows = Vec::new();
    for &mode in modes {
        let start = init.clone();
        if cloud_hash(&start) != init_hash {
            return Err(Error::InvalidArgument("ablation arms diverged in initialization".into()));
        }
        let outcome = train(scene, &mode.configure(base), start)?;
        let (test_psnr, test_ssim) = evaluate_views(scene, &outcome.cloud, &test, background)?;
        let (train_psnr, _) = evaluate_views(scene, &outcome.cloud, &train_views, background)?;
        on_done(mode, &outcome)?;
        rows.push(AblationRow {
            mode,
            test_psnr,
            test_ssim,
            train_psnr,
            final_size: outcome.cloud.len(),
        });
    }
    Ok(AblationReport { init_hash, rows })
}
