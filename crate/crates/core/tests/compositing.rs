use edgesplat::render::rasterize_forward;
use edgesplat::scene::{Camera, Gaussian3D, GaussianCloud};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// White gaussians over a black background: every pixel holds `Σ αᵢTᵢ`.
fn white_scene(seed: u64, n: usize) -> GaussianCloud<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = (0..n)
        .map(|_| {
            let mut g = Gaussian3D::isotropic(
                [0; 3].map(|_| rng.random_range(-0.8..0.8)),
                1.0,
                rng.random_range(0.05..0.999),
                [1.0; 3],
            );
            g.log_scale = [0; 3].map(|_| rng.random_range(-3.0_f64..-0.7));
            g.rotation = [0; 4].map(|_| rng.random_range(-1.0_f64..1.0));
            g
        })
        .collect();
    GaussianCloud::new(gaussians, 0)
}

fn camera(seed: u64) -> Camera<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let eye = [3.0 * theta.cos(), rng.random_range(-1.0..1.0), 3.0 * theta.sin()];
    Camera::look_at(eye, [0.0; 3], [0.0, -1.0, 0.0], 50.0, 48, 40).unwrap()
}

#[test]
fn thousand_pixels_conserve_transmittance() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    let mut worst = 0.0_f64;
    for scene in 0..20u64 {
        let cloud = white_scene(scene, 1 + (scene as usize % 12) * 4);
        let cam = camera(scene);
        let (img, aux) = rasterize_forward(&cloud, &cam, [0.0; 3]).unwrap();
        for _ in 0..50 {
            let (x, y) = (rng.random_range(0..cam.width), rng.random_range(0..cam.height));
            let blended = img.get(x, y, 0);
            let t_final = aux.final_transmittance[y * cam.width + x];
            worst = worst.max((blended + t_final - 1.0).abs());
            checked += 1;
        }
    }
    assert_eq!(checked, 1000);
    assert!(worst <= 1e-6, "worst deviation {worst}");
}

#[test]
fn blend_weights_account_for_all_absorbed_light() {
    for scene in 0..5u64 {
        let cloud = white_scene(100 + scene, 20);
        let cam = camera(scene);
        let (_, aux) = rasterize_forward(&cloud, &cam, [0.0; 3]).unwrap();
        let absorbed: f64 = aux.final_transmittance.iter().map(|t| 1.0 - t).sum();
        let weights: f64 = aux.blend_weight_sum.iter().sum();
        assert!((absorbed - weights).abs() <= 1e-9 * absorbed.max(1.0), "{absorbed} vs {weights}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_pixel_conserves_and_stays_in_range(seed in any::<u64>(), n in 1usize..24) {
        let cloud = white_scene(seed, n);
        let cam = camera(seed);
        let (img, aux) = rasterize_forward(&cloud, &cam, [0.0; 3]).unwrap();
        for (p, t) in aux.final_transmittance.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(t));
            prop_assert!((img.data[p * 3] + t - 1.0).abs() <= 1e-9);
        }
        for w in &aux.blend_weight_sum {
            prop_assert!(*w >= 0.0);
        }
    }
}
