//! Synthetic scenes: a known gaussian cloud, a camera rig and its renders.
//!
//! Layout of a scene directory:
//!
//! ```text
//! manifest.txt
//! images/cam_0000.ppm ...
//! reference.ckpt        (optional)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::imageio::{self, BitDepth};
use crate::init::Aabb;
use crate::linalg::{self, Vec3};
use crate::render;
use crate::scene::{Camera, Gaussian3D, GaussianCloud, ImageBuffer};
use crate::Scalar;

const MANIFEST_HEADER: &str = "edgesplat-scene v1";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const REFERENCE_FILE: &str = "reference.ckpt";

/// Every `TEST_STRIDE`-th camera is held out.
pub const TEST_STRIDE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rig {
    /// Full circle around the centroid.
    Orbit,
    /// Forward-facing grid with a small angular spread.
    Grid,
}

impl Rig {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Orbit => "orbit",
            Self::Grid => "grid",
        }
    }
}

impl FromStr for Rig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orbit" => Ok(Self::Orbit),
            "grid" => Ok(Self::Grid),
            _ => Err(Error::InvalidArgument(format!("unknown rig {s:?} (expected orbit or grid)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_gaussians: usize,
    pub rig: Rig,
    pub n_cameras: usize,
    pub resolution: usize,
    pub seed: u64,
    pub fov_degrees: f64,
    pub camera_distance: f64,
    pub background: [f64; 3],
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_gaussians: 50,
            rig: Rig::Orbit,
            n_cameras: 24,
            resolution: 128,
            seed: 0,
            fov_degrees: 50.0,
            camera_distance: 4.0,
            background: [0.0; 3],
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_cameras < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 cameras, got {}", self.n_cameras)));
        }
        if self.n_gaussians == 0 {
            return Err(Error::InvalidArgument("need at least 1 gaussian".into()));
        }
        if self.resolution < crate::scene::MIN_IMAGE_SIDE {
            return Err(Error::InvalidArgument(format!(
                "resolution must be >= {}, got {}",
                crate::scene::MIN_IMAGE_SIDE,
                self.resolution
            )));
        }
        if !(self.fov_degrees > 1.0 && self.fov_degrees < 170.0) || !(self.camera_distance > 0.0) {
            return Err(Error::InvalidArgument("fov must lie in (1, 170) degrees and distance be > 0".into()));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument("background must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraEntry {
    pub camera: Camera<f64>,
    /// Relative to the scene directory.
    pub image: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneManifest {
    pub width: usize,
    pub height: usize,
    pub background: [f64; 3],
    pub extent: Aabb,
    pub rig: Rig,
    pub seed: u64,
    pub reference: Option<PathBuf>,
    pub cameras: Vec<CameraEntry>,
}

impl SceneManifest {
    pub fn is_test(index: usize) -> bool {
        index % TEST_STRIDE == 0
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.cameras.len()).filter(|&i| !Self::is_test(i)).collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.cameras.len()).filter(|&i| Self::is_test(i)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let v3 = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        writeln!(s, "{MANIFEST_HEADER}").unwrap();
        writeln!(s, "width {}", self.width).unwrap();
        writeln!(s, "height {}", self.height).unwrap();
        writeln!(s, "background {}", v3(&self.background)).unwrap();
        writeln!(s, "extent_min {}", v3(&self.extent.min)).unwrap();
        writeln!(s, "extent_max {}", v3(&self.extent.max)).unwrap();
        writeln!(s, "rig {}", self.rig.as_str()).unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        if let Some(r) = &self.reference {
            writeln!(s, "reference {}", r.display()).unwrap();
        }
        writeln!(s, "cameras {}", self.cameras.len()).unwrap();
        for (i, e) in self.cameras.iter().enumerate() {
            let c = &e.camera;
            writeln!(s, "\ncamera {i}").unwrap();
            writeln!(s, "image {}", e.image.display()).unwrap();
            writeln!(s, "rotation {}", v3(&c.rotation.concat())).unwrap();
            writeln!(s, "translation {}", v3(&c.translation)).unwrap();
            writeln!(s, "intrinsics {}", v3(&[c.fx, c.fy, c.cx, c.cy])).unwrap();
            writeln!(s, "clip {}", v3(&[c.near, c.far])).unwrap();
            writeln!(s, "end").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, l)) if l == MANIFEST_HEADER => {}
            _ => return Err(format!("missing header line {MANIFEST_HEADER:?}")),
        }

        fn floats(n: usize, rest: &str, want: usize) -> std::result::Result<Vec<f64>, String> {
            let v: std::result::Result<Vec<f64>, _> = rest.split_whitespace().map(str::parse).collect();
            let v = v.map_err(|e| format!("line {n}: {e}"))?;
            if v.len() != want || v.iter().any(|x| !x.is_finite()) {
                return Err(format!("line {n}: expected {want} finite numbers"));
            }
            Ok(v)
        }
        fn int<U: FromStr>(n: usize, rest: &str) -> std::result::Result<U, String> {
            rest.trim().parse().map_err(|_| format!("line {n}: expected an integer, got {rest:?}"))
        }

        let (mut width, mut height, mut background, mut emin, mut emax) = (None, None, None, None, None);
        let (mut rig, mut seed, mut reference, mut declared) = (None, None, None, None);
        let mut cameras = Vec::new();
        while let Some((n, line)) = lines.next() {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "width" => width = Some(int::<usize>(n, rest)?),
                "height" => height = Some(int::<usize>(n, rest)?),
                "background" => background = Some(floats(n, rest, 3)?),
                "extent_min" => emin = Some(floats(n, rest, 3)?),
                "extent_max" => emax = Some(floats(n, rest, 3)?),
                "rig" => rig = Some(rest.trim().parse::<Rig>().map_err(|e| format!("line {n}: {e}"))?),
                "seed" => seed = Some(int::<u64>(n, rest)?),
                "reference" => reference = Some(PathBuf::from(rest.trim())),
                "cameras" => declared = Some(int::<usize>(n, rest)?),
                "camera" => {
                    let idx: usize = int(n, rest)?;
                    if idx != cameras.len() {
                        return Err(format!("line {n}: camera {idx} out of order"));
                    }
                    let (w, h) = match (width, height) {
                        (Some(w), Some(h)) => (w, h),
                        _ => return Err(format!("line {n}: width/height must precede cameras")),
                    };
                    let (mut image, mut rot, mut tr, mut intr, mut clip) = (None, None, None, None, None);
                    loop {
                        let (n, line) = lines.next().ok_or_else(|| format!("camera {idx}: missing end"))?;
                        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
                        match key {
                            "image" => image = Some(PathBuf::from(rest.trim())),
                            "rotation" => rot = Some(floats(n, rest, 9)?),
                            "translation" => tr = Some(floats(n, rest, 3)?),
                            "intrinsics" => intr = Some(floats(n, rest, 4)?),
                            "clip" => clip = Some(floats(n, rest, 2)?),
                            "end" => break,
                            other => return Err(format!("line {n}: unknown camera key {other:?}")),
                        }
                    }
                    let missing = |what: &str| format!("camera {idx}: missing {what}");
                    let rot = rot.ok_or_else(|| missing("rotation"))?;
                    let tr = tr.ok_or_else(|| missing("translation"))?;
                    let intr = intr.ok_or_else(|| missing("intrinsics"))?;
                    let clip = clip.ok_or_else(|| missing("clip"))?;
                    let camera = Camera {
                        rotation: [[rot[0], rot[1], rot[2]], [rot[3], rot[4], rot[5]], [rot[6], rot[7], rot[8]]],
                        translation: [tr[0], tr[1], tr[2]],
                        fx: intr[0],
                        fy: intr[1],
                        cx: intr[2],
                        cy: intr[3],
                        width: w,
                        height: h,
                        near: clip[0],
                        far: clip[1],
                    };
                    camera.validate().map_err(|e| format!("camera {idx}: {e}"))?;
                    cameras.push(CameraEntry {
                        camera,
                        image: image.ok_or_else(|| missing("image"))?,
                    });
                }
                other => return Err(format!("line {n}: unknown key {other:?}")),
            }
        }
        let req = |what: &str| format!("missing {what}");
        let to3 = |v: Vec<f64>| [v[0], v[1], v[2]];
        let manifest = Self {
            width: width.ok_or_else(|| req("width"))?,
            height: height.ok_or_else(|| req("height"))?,
            background: to3(background.ok_or_else(|| req("background"))?),
            extent: Aabb {
                min: to3(emin.ok_or_else(|| req("extent_min"))?),
                max: to3(emax.ok_or_else(|| req("extent_max"))?),
            },
            rig: rig.ok_or_else(|| req("rig"))?,
            seed: seed.ok_or_else(|| req("seed"))?,
            reference,
            cameras,
        };
        if declared != Some(manifest.cameras.len()) {
            return Err(format!(
                "declared {declared:?} cameras but found {}",
                manifest.cameras.len()
            ));
        }
        if manifest.cameras.len() < 2 {
            return Err("a scene needs at least 2 cameras".into());
        }
        manifest.extent.validate().map_err(|e| e.to_string())?;
        Ok(manifest)
    }
}

/// A loaded scene: manifest plus ground-truth images in camera order.
#[derive(Clone, Debug)]
pub struct Scene<T> {
    pub root: PathBuf,
    pub manifest: SceneManifest,
    pub cameras: Vec<Camera<T>>,
    pub images: Vec<ImageBuffer<T>>,
}

impl<T: Scalar> Scene<T> {
    pub fn background(&self) -> Vec3<T> {
        self.manifest.background.map(T::lit)
    }

    /// Scene radius used to scale densification thresholds and the position
    /// learning rate: 1.1 × the largest camera distance from the camera centroid.
    pub fn camera_extent(&self) -> f64 {
        camera_extent(&self.manifest.cameras.iter().map(|c| c.camera.clone()).collect::<Vec<_>>())
    }

    pub fn reference_cloud(&self) -> Result<Option<GaussianCloud<T>>> {
        self.manifest
            .reference
            .as_ref()
            .map(|r| checkpoint::load_cloud(&self.root.join(r)))
            .transpose()
    }
}

pub fn camera_extent(cameras: &[Camera<f64>]) -> f64 {
    let centers: Vec<Vec3<f64>> = cameras.iter().map(Camera::center).collect();
    let n = centers.len().max(1) as f64;
    let mean = centers.iter().fold([0.0; 3], |a, c| linalg::add3(a, *c)).map(|v| v / n);
    let radius = centers.iter().map(|c| linalg::norm3(linalg::sub3(*c, mean))).fold(0.0, f64::max);
    // A single viewpoint (or coincident ones) still needs a nonzero scale.
    1.1 * if radius > 0.0 { radius } else { 1.0 }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let q: [f64; 4] = [0; 4].map(|_| StandardNormal.sample(rng));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    q.map(|v| v / n)
}

/// Random reference cloud: a few clusters of anisotropic, degree-1 colored gaussians.
pub fn reference_cloud(n: usize, seed: u64) -> GaussianCloud<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters: Vec<Vec3<f64>> = (0..n.clamp(1, 5))
        .map(|_| [0; 3].map(|_| rng.random_range(-0.6..0.6)))
        .collect();
    let gaussians = (0..n)
        .map(|i| {
            let c = clusters[i % clusters.len()];
            let offset: Vec3<f64> = [0; 3].map(|_| 0.25 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
            let rgb: Vec3<f64> = [0; 3].map(|_| rng.random_range(0.1..0.9));
            let mut g = Gaussian3D::isotropic(linalg::add3(c, offset), 0.1, rng.random_range(0.5..0.95), rgb);
            g.log_scale = [0; 3].map(|_| rng.random_range(0.04_f64..0.2).ln());
            g.rotation = random_rotation(&mut rng);
            for k in 1..4 {
                for ch in 0..3 {
                    g.sh[k][ch] = rng.random_range(-0.1..0.1);
                }
            }
            g
        })
        .collect();
    GaussianCloud::new(gaussians, 1)
}

fn centroid(cloud: &GaussianCloud<f64>) -> Vec3<f64> {
    let n = cloud.len() as f64;
    cloud
        .gaussians
        .iter()
        .fold([0.0; 3], |a, g| linalg::add3(a, g.position))
        .map(|v| v / n)
}

/// Camera poses for `spec` around `target`.
pub fn rig_cameras(spec: &SynthSpec, target: Vec3<f64>) -> Result<Vec<Camera<f64>>> {
    let up = [0.0, -1.0, 0.0];
    let r = spec.camera_distance;
    let (w, h) = (spec.resolution, spec.resolution);
    (0..spec.n_cameras)
        .map(|i| {
            let offset = match spec.rig {
                Rig::Orbit => {
                    let theta = std::f64::consts::TAU * i as f64 / spec.n_cameras as f64;
                    let elev = 0.35_f64;
                    [r * elev.cos() * theta.sin(), -r * elev.sin(), -r * elev.cos() * theta.cos()]
                }
                Rig::Grid => {
                    let cols = (spec.n_cameras as f64).sqrt().ceil() as usize;
                    let rows = spec.n_cameras.div_ceil(cols);
                    let spread = 0.12 * r;
                    let u = |k: usize, n: usize| if n <= 1 { 0.0 } else { (k as f64 / (n - 1) as f64 - 0.5) * 2.0 };
                    let (cx, cy) = (u(i % cols, cols), u(i / cols, rows));
                    let lateral = [spread * cx, spread * cy, 0.0];
                    let dir = linalg::sub3(lateral, [0.0, 0.0, r]);
                    linalg::scale3(dir, r / linalg::norm3(dir))
                }
            };
            Camera::look_at(linalg::add3(target, offset), target, up, spec.fov_degrees, w, h)
        })
        .collect()
}

fn image_name(i: usize) -> PathBuf {
    PathBuf::from(format!("images/cam_{i:04}.ppm"))
}

/// Renders a synthetic scene into `dir` (created if needed) and returns its manifest.
pub fn generate_scene(spec: &SynthSpec, dir: &Path) -> Result<SceneManifest> {
    spec.validate()?;
    let cloud = reference_cloud(spec.n_gaussians, spec.seed);
    let target = centroid(&cloud);
    let cameras = rig_cameras(spec, target)?;

    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for g in &cloud.gaussians {
        let pad = 2.0 * g.max_scale();
        for k in 0..3 {
            min[k] = min[k].min(g.position[k] - pad);
            max[k] = max[k].max(g.position[k] + pad);
        }
    }

    fs::create_dir_all(dir.join("images")).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(cameras.len());
    for (i, camera) in cameras.into_iter().enumerate() {
        let img = render::render(&cloud, &camera, spec.background)?.clamped();
        let rel = image_name(i);
        imageio::write_ppm(&dir.join(&rel), &img, BitDepth::Sixteen)?;
        entries.push(CameraEntry { camera, image: rel });
    }
    checkpoint::save_cloud(&dir.join(REFERENCE_FILE), &cloud)?;
    let manifest = SceneManifest {
        width: spec.resolution,
        height: spec.resolution,
        background: spec.background,
        extent: Aabb { min, max },
        rig: spec.rig,
        seed: spec.seed,
        reference: Some(PathBuf::from(REFERENCE_FILE)),
        cameras: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads and validates a scene directory.
pub fn load_scene<T: Scalar>(dir: &Path) -> Result<Scene<T>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = SceneManifest::parse(&text).map_err(|m| Error::format(&path, m))?;
    let mut images = Vec::with_capacity(manifest.cameras.len());
    for entry in &manifest.cameras {
        let p = dir.join(&entry.image);
        let img: ImageBuffer<T> = imageio::read_ppm(&p)?;
        if img.width != manifest.width || img.height != manifest.height {
            return Err(Error::format(
                &p,
                format!(
                    "image is {}x{}, manifest says {}x{}",
                    img.width, img.height, manifest.width, manifest.height
                ),
            ));
        }
        if let Some(i) = img.first_out_of_range() {
            return Err(Error::format(&p, format!("sample {i} outside [0, 1]")));
        }
        images.push(img);
    }
    if let Some(r) = &manifest.reference {
        let p = dir.join(r);
        if !p.is_file() {
            return Err(Error::format(&p, "reference checkpoint missing"));
        }
    }
    let cameras = manifest.cameras.iter().map(|e| cast_camera(&e.camera)).collect();
    Ok(Scene {
        root: dir.to_path_buf(),
        manifest,
        cameras,
        images,
    })
}

pub fn cast_camera<T: Scalar>(c: &Camera<f64>) -> Camera<T> {
    Camera {
        rotation: c.rotation.map(|r| r.map(T::lit)),
        translation: c.translation.map(T::lit),
        fx: T::lit(c.fx),
        fy: T::lit(c.fy),
        cx: T::lit(c.cx),
        cy: T::lit(c.cy),
        width: c.width,
        height: c.height,
        near: T::lit(c.near),
        far: T::lit(c.far),
    }
}
