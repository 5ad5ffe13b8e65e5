//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion.
//!
//! Failures are reported, not hidden; set `EDGESPLAT_ACCEPTANCE_STRICT=1` to
//! turn any failure into a non-zero exit. `EDGESPLAT_ACCEPTANCE_ONLY=1,4,9`
//! runs a subset.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgesplat::ablation::{run_ablation, AblationMode};
use edgesplat::density::{densify_decision, Decision, DensifyConfig, DensifyMode, DensifyStats};
use edgesplat::loss::{
    appearance_loss, appearance_weights, geometric_loss, geometric_weights, schedule, total_loss, ScheduleParams,
    WeightMap,
};
use edgesplat::render::{rasterize_backward, rasterize_forward, Projection, RenderStats, ALPHA_MAX, ALPHA_MIN, TRANSMITTANCE_MIN};
use edgesplat::scene::{Camera, Gaussian3D, GaussianCloud, ImageBuffer, PARAMS_PER_GAUSSIAN, SH_COEFFS};
use edgesplat::synth::{generate_scene, load_scene, Rig, SynthSpec};
use edgesplat::train::{TrainConfig, Trainer};
use edgesplat::Error;

/// Iteration budgets for the training criteria.
const RECON_ITERS: usize = 3000;
const LADDER_ITERS: usize = 3000;
const GAP_ITERS: usize = 7000;
const SEEDS: [u64; 3] = [0, 1, 2];
/// Narrow-rig scene: few cameras, small angular spread.
const GAP_CAMERAS: usize = 9;
const GAP_RESOLUTION: usize = 64;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("EDGESPLAT_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let strict = std::env::var("EDGESPLAT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [(usize, fn() -> Verdict); 9] = [
        (1, gradients),
        (2, conservation),
        (3, criterion_equivalences),
        (4, schedule_checks),
        (5, self_reconstruction),
        (6, ablation_ladder),
        (7, overfitting_gap),
        (8, edge_pipeline),
        (9, determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (n, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t = Instant::now();
        let v = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        ran += 1;
        failed += usize::from(!v.pass);
        println!(
            "[{}] criterion {n}: {} ({:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

// ---- shared fixtures ----

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, degree: usize) -> GaussianCloud<f64> {
    let gaussians = (0..n)
        .map(|_| {
            let mut g = Gaussian3D::isotropic(
                [0; 3].map(|_| rng.random_range(-0.6..0.6)),
                1.0,
                rng.random_range(0.2..0.9),
                [0; 3].map(|_| rng.random_range(0.2..0.8)),
            );
            g.log_scale = [0; 3].map(|_| rng.random_range(-2.6_f64..-1.4));
            g.rotation = [0; 4].map(|_| rng.random_range(-1.0_f64..1.0));
            for k in 1..SH_COEFFS {
                for c in 0..3 {
                    g.sh[k][c] = rng.random_range(-0.05..0.05);
                }
            }
            g
        })
        .collect();
    GaussianCloud::new(gaussians, degree)
}

fn random_camera(rng: &mut ChaCha8Rng, size: usize) -> Camera<f64> {
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let r = rng.random_range(2.5..3.5);
    let eye = [r * theta.cos(), rng.random_range(-1.0..1.0), r * theta.sin()];
    Camera::look_at(eye, [0.0; 3], [0.0, -1.0, 0.0], rng.random_range(40.0..60.0), size, size).unwrap()
}

fn perturbed(cloud: &GaussianCloud<f64>, i: usize, k: usize, delta: f64) -> GaussianCloud<f64> {
    let mut out = cloud.clone();
    let mut flat = out.gaussians[i].to_flat();
    flat[k] += delta;
    out.gaussians[i] = Gaussian3D::from_flat(&flat);
    out
}

/// Everything that fixes the discrete structure of a render.
fn active_set(cloud: &GaussianCloud<f64>, cam: &Camera<f64>, bg: [f64; 3]) -> (ImageBuffer<f64>, RenderStats, Vec<Vec<u32>>) {
    let (img, aux) = rasterize_forward(cloud, cam, bg).unwrap();
    (img, aux.stats, aux.splats.lists)
}

// ---- 1 ----

fn gradients() -> Verdict {
    let start = Instant::now();
    let h = 1e-6;
    let (mut checked, mut skipped, mut loss_checked) = (0usize, 0usize, 0usize);
    let mut failures = Vec::new();
    let mut worst = 0.0_f64;
    for scene in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + scene);
        let n = 1 + (scene as usize % 8);
        let cloud = random_cloud(&mut rng, n, (scene % 4) as usize);
        let cam = random_camera(&mut rng, 32);
        let bg = [0; 3].map(|_| rng.random_range(0.0..0.3));
        let (img, mut aux) = rasterize_forward(&cloud, &cam, bg).unwrap();

        // Weighted losses against a different scene, weights held fixed.
        let gt = rasterize_forward(&random_cloud(&mut rng, n + 1, 0), &cam, bg).unwrap().0.clamped();
        let w_geo = geometric_weights(&gt, &img, 2).unwrap();
        let w_app = appearance_weights(&gt, &img).unwrap();
        for (name, w) in [("geometric", &w_geo), ("appearance", &w_app)] {
            let (k, bad) = check_loss_fd(&gt, &img, w, name == "geometric");
            loss_checked += k;
            failures.extend(bad.into_iter().map(|b| format!("scene {scene} {name} loss {b}")));
        }

        // Rasterizer under two objectives: a random linear probe and the
        // weighted losses composed with the render.
        let probe = ImageBuffer::from_vec(32, 32, (0..32 * 32 * 3).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let objective = |r: &ImageBuffer<f64>, which: usize| -> f64 {
            match which {
                0 => r.data.iter().zip(&probe.data).map(|(a, b)| a * b).sum(),
                _ => geometric_loss(&gt, r, &w_geo).unwrap().0 + appearance_loss(&gt, r, &w_app).unwrap().0,
            }
        };
        let loss_grad = {
            let (_, gg) = geometric_loss(&gt, &img, &w_geo).unwrap();
            let (_, ga) = appearance_loss(&gt, &img, &w_app).unwrap();
            let mut g = gg;
            for (a, b) in g.data.iter_mut().zip(&ga.data) {
                *a += b;
            }
            g
        };
        for (which, dl) in [(0, &probe), (1, &loss_grad)] {
            let grads = rasterize_backward(&cloud, &cam, &mut aux, dl).unwrap();
            for i in 0..n {
                for k in 0..PARAMS_PER_GAUSSIAN {
                    let (ip, sp, tp) = active_set(&perturbed(&cloud, i, k, h), &cam, bg);
                    let (im, sm, tm) = active_set(&perturbed(&cloud, i, k, -h), &cam, bg);
                    let kink = which == 1
                        && ip.data.iter().zip(&im.data).zip(&gt.data).any(|((p, m), g)| (p - g).signum() != (m - g).signum());
                    if sp != sm || tp != tm || kink {
                        skipped += 1;
                        continue;
                    }
                    let fd = (objective(&ip, which) - objective(&im, which)) / (2.0 * h);
                    let an = grads.per_gaussian[i][k];
                    let err = (fd - an).abs() / (1e-7 + 1e-4 * fd.abs());
                    worst = worst.max(err);
                    if err > 1.0 {
                        failures.push(format!("scene {scene} objective {which} gaussian {i} param {k}: {an} vs {fd}"));
                    }
                    checked += 1;
                }
            }
            // The screen-space mean gradient, summed over gaussians, is the
            // derivative with respect to the principal point.
            let shift = |dx: f64, dy: f64| {
                let mut c = cam.clone();
                c.cx += dx;
                c.cy += dy;
                active_set(&cloud, &c, bg)
            };
            for axis in 0..2 {
                let d = if axis == 0 { (h, 0.0) } else { (0.0, h) };
                let (ip, sp, tp) = shift(d.0, d.1);
                let (im, sm, tm) = shift(-d.0, -d.1);
                if sp != sm || tp != tm {
                    skipped += 1;
                    continue;
                }
                let fd = (objective(&ip, which) - objective(&im, which)) / (2.0 * h);
                let size = if axis == 0 { cam.width } else { cam.height } as f64;
                let an: f64 = aux.ndc_grad.iter().map(|g| g[axis]).sum::<f64>() * 2.0 / size;
                let err = (fd - an).abs() / (1e-7 + 1e-4 * fd.abs());
                worst = worst.max(err);
                if err > 1.0 {
                    failures.push(format!("scene {scene} objective {which} ndc axis {axis}: {an} vs {fd}"));
                }
                checked += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let skip_frac = skipped as f64 / (checked + skipped) as f64;
    let pass = failures.is_empty() && secs < 120.0 && skip_frac < 0.05 && loss_checked > 1000;
    let mut detail = format!(
        "20 scenes, {checked} rasterizer components (worst error {:.3} of tolerance, {:.2}% skipped on thresholds), {loss_checked} loss components, {secs:.1}s",
        worst,
        100.0 * skip_frac
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; {} mismatches, first: {f}", failures.len()));
    }
    verdict(pass, detail)
}

/// Central differences of a fixed-weight loss with respect to the render.
/// The loss is linear between kinks, so a step that stays clear of them is exact.
fn check_loss_fd(gt: &ImageBuffer<f64>, r: &ImageBuffer<f64>, w: &WeightMap<f64>, geometric: bool) -> (usize, Vec<String>) {
    let loss = |x: &ImageBuffer<f64>| {
        if geometric {
            geometric_loss(gt, x, w).unwrap()
        } else {
            appearance_loss(gt, x, w).unwrap()
        }
    };
    let (_, grad) = loss(r);
    let step = 1e-4;
    let mut bad = Vec::new();
    let mut checked = 0;
    for k in 0..r.data.len() {
        if (gt.data[k] - r.data[k]).abs() < 2.0 * step {
            continue;
        }
        let mut p = r.clone();
        p.data[k] += step;
        let mut m = r.clone();
        m.data[k] -= step;
        let fd = (loss(&p).0 - loss(&m).0) / (2.0 * step);
        let an = grad.data[k];
        if (fd - an).abs() > 1e-12 + 1e-6 * an.abs() {
            bad.push(format!("component {k}: {an} vs {fd}"));
        }
        checked += 1;
    }
    (checked, bad)
}

// ---- 2 ----

fn conservation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    let mut worst_white = 0.0_f64;
    let mut pixels = 0;
    let mut composited = 0u64;
    for scene in 0..20 {
        let n = 1 + scene * 3;
        let mut cloud = random_cloud(&mut rng, n, 0);
        for g in &mut cloud.gaussians {
            g.opacity_logit = rng.random_range(-3.0..5.0);
            g.sh[0] = [edgesplat::sh::rgb_to_dc(1.0); 3];
        }
        let cam = random_camera(&mut rng, 48);
        let (img, aux) = rasterize_forward(&cloud, &cam, [0.0; 3]).unwrap();
        for _ in 0..50 {
            let (x, y) = (rng.random_range(0..cam.width), rng.random_range(0..cam.height));
            // Alphas recomputed here from the projected splats, in tile order.
            let tile = (y / 16) * aux.splats.tiles_x + x / 16;
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0_f64;
            let mut absorbed = 0.0;
            for &gi in &aux.splats.lists[tile] {
                let Projection::Visible(p) = &aux.projections[gi as usize] else { continue };
                let (dx, dy) = (px - p.mean2d[0], py - p.mean2d[1]);
                let [a, b, c] = p.conic;
                let power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy;
                if power > 0.0 {
                    continue;
                }
                let alpha = (p.alpha0 * power.exp()).min(ALPHA_MAX);
                if alpha < ALPHA_MIN {
                    continue;
                }
                if t * (1.0 - alpha) < TRANSMITTANCE_MIN {
                    break;
                }
                absorbed += alpha * t;
                t *= 1.0 - alpha;
                composited += 1;
            }
            let t_final = aux.final_transmittance[y * cam.width + x];
            worst = worst.max((absorbed + t_final - 1.0).abs());
            // White splats over black: the pixel value is the absorbed light.
            worst_white = worst_white.max((img.get(x, y, 0) + t_final - 1.0).abs());
            pixels += 1;
        }
    }
    verdict(
        pixels == 1000 && worst <= 1e-6 && worst_white <= 1e-6 && composited > 1000,
        format!("{pixels} pixels, {composited} splat contributions, worst |Σ αT + T_final − 1| = {worst:.2e} (white-splat render {worst_white:.2e})"),
    )
}

// ---- 3 ----

type View = ([f64; 2], f64, u32);

fn stats_from(views: &[Vec<View>]) -> DensifyStats<f64> {
    let mut s = DensifyStats::new(views.len());
    for (i, vs) in views.iter().enumerate() {
        for &(g, t, hits) in vs {
            s.record_view(i, g, t, hits).unwrap();
        }
    }
    s
}

fn random_views(rng: &mut ChaCha8Rng, allow_invisible: bool) -> Vec<View> {
    (0..rng.random_range(1..8))
        .map(|_| {
            let g = [rng.random_range(-6e-4..6e-4), rng.random_range(-6e-4..6e-4)];
            let t = if allow_invisible && rng.random_bool(0.1) { 0.0 } else { rng.random_range(1e-3..50.0) };
            let hits = if allow_invisible && rng.random_bool(0.15) { 0 } else { rng.random_range(1..200) };
            (g, t, hits)
        })
        .collect()
}

fn oracle_decision(views: &[View], max_scale: f64, mode: DensifyMode, tau: f64, split_above: f64) -> Decision {
    let visible: Vec<_> = views.iter().filter(|v| v.2 > 0).collect();
    let norm = |g: [f64; 2]| (g[0] * g[0] + g[1] * g[1]).sqrt();
    let value = match mode {
        DensifyMode::Baseline if !visible.is_empty() => visible.iter().map(|v| norm(v.0)).sum::<f64>() / visible.len() as f64,
        DensifyMode::OpacityWeighted => {
            let t_sum: f64 = visible.iter().map(|v| v.1).sum();
            if t_sum <= 0.0 {
                return Decision::Keep;
            }
            visible.iter().map(|v| v.1 * norm(v.0)).sum::<f64>() / t_sum
        }
        _ => return Decision::Keep,
    };
    if value <= tau {
        Decision::Keep
    } else if max_scale > split_above {
        Decision::Split
    } else {
        Decision::Clone
    }
}

fn criterion_equivalences() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_a, mut worst_b) = (0.0_f64, 0.0_f64);
    for _ in 0..500 {
        let views = random_views(&mut rng, false);
        let t = rng.random_range(1e-3..100.0);
        let equal: Vec<View> = views.iter().map(|&(g, _, h)| (g, t, h)).collect();
        let k = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled: Vec<View> = views.iter().map(|&(g, t, h)| (g, t * k, h)).collect();
        let s = stats_from(&[equal, views, scaled]);
        let w = s.criterion(0, DensifyMode::OpacityWeighted).unwrap();
        let b = s.criterion(0, DensifyMode::Baseline).unwrap();
        worst_a = worst_a.max((w - b).abs() / b.max(f64::MIN_POSITIVE));
        let (x, y) = (
            s.criterion(1, DensifyMode::OpacityWeighted).unwrap(),
            s.criterion(2, DensifyMode::OpacityWeighted).unwrap(),
        );
        worst_b = worst_b.max((x - y).abs() / x.max(f64::MIN_POSITIVE));
    }

    let mut disagreements = 0;
    let mut tally = [0usize; 3];
    for instance in 0..500 {
        let n = rng.random_range(1..8);
        let views: Vec<Vec<View>> = (0..n).map(|_| random_views(&mut rng, true)).collect();
        let gaussians = (0..n)
            .map(|i| {
                let mut g = Gaussian3D::isotropic([i as f64, 0.0, 0.0], 1.0, 0.5, [0.5; 3]);
                let ls = rng.random_range(-5.0..-1.0);
                g.log_scale = [ls, ls - 0.4, ls - 0.8];
                g
            })
            .collect();
        let cloud = GaussianCloud::new(gaussians, 0);
        let extent = rng.random_range(1.0..6.0);
        let mode = if instance % 2 == 0 { DensifyMode::Baseline } else { DensifyMode::OpacityWeighted };
        let cfg = DensifyConfig {
            tau_pos: rng.random_range(5e-5..4e-4),
            mode,
            ..Default::default()
        };
        let got = densify_decision(&stats_from(&views), &cloud, &cfg, extent).unwrap();
        for i in 0..n {
            let want = oracle_decision(&views[i], cloud.gaussians[i].max_scale(), mode, cfg.tau_pos, cfg.percent_dense * extent);
            tally[want as usize] += 1;
            disagreements += usize::from(got[i] != want);
        }
    }
    verdict(
        worst_a <= 1e-12 && worst_b <= 1e-12 && disagreements == 0,
        format!(
            "(a) equal-t relative gap {worst_a:.1e}, (b) t-rescaling gap {worst_b:.1e} over 500 cases each; (c) 500 instances, {disagreements} disagreements (keep/clone/split {tally:?})"
        ),
    )
}

// ---- 4 ----

fn schedule_checks() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut midpoint_ok = true;
    for _ in 0..2000 {
        let n = rng.random_range(2..20000);
        let k = rng.random_range(1..n);
        let p = ScheduleParams::new(rng.random_range(0.1..30.0), n, k as f64 / n as f64).unwrap();
        midpoint_ok &= schedule::<f64>(k, &p) == 0.5;
    }
    let mut decreasing = true;
    for s in [0.5, 1.0, 5.0, 10.0, 15.0] {
        let p = ScheduleParams::new(s, 7000, 0.25).unwrap();
        let mut prev = schedule::<f64>(0, &p);
        for i in 1..=7000 {
            let f = schedule::<f64>(i, &p);
            decreasing &= f < prev;
            prev = f;
        }
    }
    let reference = ScheduleParams::new(10.0, 7000, 0.25).unwrap();
    let f1750 = schedule::<f64>(1750, &reference);
    verdict(
        midpoint_ok && decreasing && f1750 == 0.5,
        format!("f(mN) = 0.5 exactly on 2000 random (m, N, s): {midpoint_ok}; strictly decreasing on 0..=7000 for 5 steepnesses: {decreasing}; f(1750) = {f1750} for N = 7000, m = 0.25"),
    )
}

// ---- 5 ----

fn default_scene(dir: &Path, seed: u64) -> edgesplat::synth::Scene<f64> {
    generate_scene(&SynthSpec { seed, ..Default::default() }, dir).unwrap();
    load_scene(dir).unwrap()
}

fn self_reconstruction() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let scene = default_scene(tmp.path(), 0);
    let cfg = TrainConfig {
        total_iters: RECON_ITERS,
        init_count: scene.reference_cloud().unwrap().unwrap().len(),
        ..Default::default()
    };
    let mut trainer = Trainer::from_slv(&scene, cfg).unwrap();
    trainer.run_to::<Error>(RECON_ITERS, |_| Ok(()), |_| Ok(())).unwrap();
    let (train_psnr, test_psnr) = trainer.evaluate().unwrap();
    verdict(
        test_psnr > 35.0,
        format!(
            "24 cameras, 128x128, 50 reference / 50 initial gaussians, {RECON_ITERS} iterations: test PSNR {test_psnr:.2} dB (train {train_psnr:.2} dB, {} gaussians)",
            trainer.cloud.len()
        ),
    )
}

// ---- 6 ----

fn ablation_ladder() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let scene = default_scene(tmp.path(), 0);
    let mut sums = [0.0_f64; 4];
    for seed in SEEDS {
        let base = TrainConfig {
            total_iters: LADDER_ITERS,
            seed,
            ..Default::default()
        };
        let report = run_ablation(&scene, &base, &AblationMode::ALL, |_, _| Ok(())).unwrap();
        for line in report.to_table().lines() {
            println!("    seed {seed} | {line}");
        }
        for (k, mode) in AblationMode::ALL.iter().enumerate() {
            sums[k] += report.row(*mode).unwrap().test_psnr;
        }
    }
    let mean = sums.map(|s| s / SEEDS.len() as f64);
    let [base, geo, geo_op, full] = mean;
    let pass = full >= geo_op && geo_op >= geo && geo >= base && full - base >= 1.0;
    verdict(
        pass,
        format!(
            "mean test PSNR over seeds {SEEDS:?} at {LADDER_ITERS} iterations: baseline {base:.3}, geo {geo:.3}, geo+opacity {geo_op:.3}, full {full:.3} dB (full - baseline {:+.3} dB)",
            full - base
        ),
    )
}

// ---- 7 ----

fn overfitting_gap() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        rig: Rig::Grid,
        n_cameras: GAP_CAMERAS,
        resolution: GAP_RESOLUTION,
        ..Default::default()
    };
    generate_scene(&spec, tmp.path()).unwrap();
    let scene = load_scene::<f64>(tmp.path()).unwrap();
    let mut gaps = [0.0_f64; 2];
    for seed in SEEDS {
        for (k, mode) in [AblationMode::Baseline, AblationMode::Full].into_iter().enumerate() {
            let cfg = mode.configure(&TrainConfig {
                total_iters: GAP_ITERS,
                seed,
                ..Default::default()
            });
            let mut trainer = Trainer::from_slv(&scene, cfg).unwrap();
            trainer.run_to::<Error>(GAP_ITERS, |_| Ok(()), |_| Ok(())).unwrap();
            let (train_psnr, test_psnr) = trainer.evaluate().unwrap();
            println!(
                "    seed {seed} | {:<8} train {train_psnr:.3} test {test_psnr:.3} gap {:.3} size {}",
                mode.as_str(),
                train_psnr - test_psnr,
                trainer.cloud.len()
            );
            gaps[k] += (train_psnr - test_psnr) / SEEDS.len() as f64;
        }
    }
    verdict(
        gaps[1] < gaps[0],
        format!(
            "{GAP_CAMERAS}-camera grid rig ({} train / {} test, {GAP_RESOLUTION}x{GAP_RESOLUTION}), iteration {GAP_ITERS}, mean train-test gap: baseline {:.3} dB, full {:.3} dB",
            scene.manifest.train_indices().len(),
            scene.manifest.test_indices().len(),
            gaps[0],
            gaps[1]
        ),
    )
}

// ---- 8 ----

fn shape_fixture(kind: usize, ox: usize, oy: usize) -> ImageBuffer<f64> {
    let (w, h) = (44, 40);
    let mut img = ImageBuffer::filled(w, h, [0.1, 0.15, 0.2]);
    for y in 0..h {
        for x in 0..w {
            let (lx, ly) = (x as isize - ox as isize, y as isize - oy as isize);
            let inside = match kind {
                0 => (0..9).contains(&lx) && (0..7).contains(&ly),
                1 => (1..10).contains(&lx) && (0..7).contains(&ly),
                2 => (lx - 5).pow(2) + (ly - 5).pow(2) <= 16,
                3 => (0..12).contains(&lx) && (0..12).contains(&ly) && (lx - ly).abs() <= 1,
                _ => (0..12).contains(&lx) && (0..10).contains(&ly) && (lx / 3 + ly / 3) % 2 == 0,
            };
            if inside {
                img.set(x, y, 0, 0.9);
                img.set(x, y, 1, 0.3 + 0.05 * kind as f64);
                img.set(x, y, 2, 0.7);
            }
        }
    }
    img
}

fn edge_pipeline() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut fixtures: Vec<ImageBuffer<f64>> = (0..5).map(|k| shape_fixture(k, 14, 12)).collect();
    fixtures.push(ImageBuffer::filled(44, 40, [0.0; 3]));
    fixtures.push(ImageBuffer::filled(44, 40, [1.0; 3]));
    fixtures.push(ImageBuffer::filled(44, 40, [0.4, 0.5, 0.6]));
    for _ in 0..6 {
        fixtures.push(ImageBuffer::from_vec(44, 40, (0..44 * 40 * 3).map(|_| rng.random::<f64>()).collect()).unwrap());
    }
    for _ in 0..2 {
        fixtures.push(ImageBuffer::from_vec(44, 40, (0..44 * 40 * 3).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect()).unwrap());
    }

    let mut range_ok = true;
    let mut pairs = 0;
    for a in &fixtures {
        for b in &fixtures {
            for radius in 0..=3 {
                let w = geometric_weights(a, b, radius).unwrap();
                range_ok &= w.data.iter().all(|v| (0.0..=1.0).contains(v));
                pairs += 1;
            }
            range_ok &= appearance_weights(a, b).unwrap().data.iter().all(|v| (0.0..=1.0).contains(v));
        }
    }

    let mut identical_ok = true;
    let p = ScheduleParams::new(10.0, 7000, 0.25).unwrap();
    for img in &fixtures {
        for radius in 0..=3 {
            let w = geometric_weights(img, img, radius).unwrap();
            identical_ok &= w.data.iter().all(|&v| v == 0.0);
            for iter in [0, 1750, 7000] {
                let out = total_loss(img, img, iter, &p, radius).unwrap();
                identical_ok &= out.components.l_geo == 0.0 && out.components.l_app == 0.0 && out.loss == 0.0;
                identical_ok &= out.grad.data.iter().all(|&g| g == 0.0);
            }
        }
        identical_ok &= appearance_weights(img, img).unwrap().data.iter().all(|&v| v == 0.0);
    }

    let mut shifts = 0;
    let mut worst = 0.0_f64;
    for a in 0..5 {
        for b in 0..5 {
            if a == b {
                continue;
            }
            for radius in 0..=3 {
                let reference = geometric_weights(&shape_fixture(a, 10, 10), &shape_fixture(b, 10, 10), radius).unwrap();
                let margin = 4 + radius;
                for dy in 0..=5 {
                    for dx in 0..=5 {
                        let moved = geometric_weights(&shape_fixture(a, 10 + dx, 10 + dy), &shape_fixture(b, 10 + dx, 10 + dy), radius).unwrap();
                        for y in margin..40 - margin - dy {
                            for x in margin..44 - margin - dx {
                                worst = worst.max((reference.data[y * 44 + x] - moved.data[(y + dy) * 44 + x + dx]).abs());
                            }
                        }
                        shifts += 1;
                    }
                }
            }
        }
    }
    verdict(
        range_ok && identical_ok && worst <= 1e-12,
        format!(
            "weights in [0,1] on {pairs} fixture pairs: {range_ok}; identical images give zero weights, losses and gradients: {identical_ok}; {shifts} shifted pairs, worst interior deviation {worst:.1e}"
        ),
    )
}

// ---- 9 ----

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let bin = env!("CARGO_BIN_EXE_edgesplat");
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).env("RUST_LOG", "warn").output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["synth", "--out", scene.to_str().unwrap(), "--gaussians", "12", "--cameras", "12", "--resolution", "48", "--seed", "9"]);
    let mut outputs = Vec::new();
    for k in 0..2 {
        let dir = tmp.path().join(format!("run{k}"));
        run(&[
            "--threads", "1", "train", "--scene", scene.to_str().unwrap(), "--run-dir", dir.to_str().unwrap(),
            "--train.seed", "5", "--train.total_iters", "400", "--train.log_interval", "20", "--train.eval_interval", "100",
            "--densify.start_iter", "50", "--densify.interval", "50",
        ]);
        outputs.push((fs::read(dir.join("metrics.csv")).unwrap(), fs::read_to_string(dir.join("events.log")).unwrap()));
    }
    let identical = outputs[0].0 == outputs[1].0;
    let rows = String::from_utf8_lossy(&outputs[0].0).lines().count() - 1;
    let events = outputs[0].1.lines().count();
    verdict(
        identical && rows == 20 && events > 0,
        format!("two single-threaded 400-iteration runs, seed 5: metrics.csv byte-identical: {identical} ({rows} rows, {events} densification events)"),
    )
}
