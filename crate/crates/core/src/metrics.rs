//! Image quality metrics.

use crate::error::{Error, Result};
use crate::scene::ImageBuffer;
use crate::Scalar;

/// PSNR reported for identical images (and the ceiling for near-identical ones).
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// `10·log10(1 / MSE)` for images in `[0, 1]`, capped at [`PSNR_CAP_DB`].
pub fn psnr<T: Scalar>(a: &ImageBuffer<T>, b: &ImageBuffer<T>) -> Result<f64> {
    a.check_same_shape(b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        / a.data.len() as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn window<T: Scalar>() -> Vec<T> {
    let half = (SSIM_WINDOW / 2) as i64;
    let raw: Vec<f64> = (-half..=half)
        .map(|d| (-((d * d) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| T::lit(v / total)).collect()
}

/// Valid-mode separable filtering of one channel; output is `(w−k+1)×(h−k+1)`.
fn filter_valid<T: Scalar>(src: &[T], w: usize, h: usize, k: &[T]) -> Vec<T> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![T::zero(); ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = T::zero();
            for (i, &kv) in k.iter().enumerate() {
                acc = acc + kv * src[y * w + x + i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    let mut out = vec![T::zero(); ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = T::zero();
            for (i, &kv) in k.iter().enumerate() {
                acc = acc + kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a `(w−k+1)×(h−k+1)` map back to `w×h`.
fn filter_valid_adjoint<T: Scalar>(src: &[T], w: usize, h: usize, k: &[T]) -> Vec<T> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![T::zero(); ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for (i, &kv) in k.iter().enumerate() {
                tmp[(y + i) * ow + x] = tmp[(y + i) * ow + x] + kv * v;
            }
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for (i, &kv) in k.iter().enumerate() {
                out[y * w + x + i] = out[y * w + x + i] + kv * v;
            }
        }
    }
    out
}

fn channel<T: Scalar>(img: &ImageBuffer<T>, c: usize) -> Vec<T> {
    img.data.iter().skip(c).step_by(3).copied().collect()
}

fn check_ssim_shape<T: Scalar>(a: &ImageBuffer<T>, b: &ImageBuffer<T>) -> Result<()> {
    a.check_same_shape(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.width, a.height
        )));
    }
    Ok(())
}

/// Single-scale SSIM (11×11 Gaussian window, σ = 1.5), valid windows only,
/// averaged over positions and channels.
pub fn ssim<T: Scalar>(a: &ImageBuffer<T>, b: &ImageBuffer<T>) -> Result<T> {
    ssim_impl(a, b, false).map(|(v, _)| v)
}

/// SSIM and its gradient with respect to `b`.
pub fn ssim_with_grad<T: Scalar>(a: &ImageBuffer<T>, b: &ImageBuffer<T>) -> Result<(T, ImageBuffer<T>)> {
    ssim_impl(a, b, true).map(|(v, g)| (v, g.expect("gradient requested")))
}

fn ssim_impl<T: Scalar>(a: &ImageBuffer<T>, b: &ImageBuffer<T>, want_grad: bool) -> Result<(T, Option<ImageBuffer<T>>)> {
    check_ssim_shape(a, b)?;
    let (w, h) = (a.width, a.height);
    let k = window::<T>();
    let c1 = T::lit(SSIM_K1 * SSIM_K1);
    let c2 = T::lit(SSIM_K2 * SSIM_K2);
    let two = T::lit(2.0);
    let positions = (w + 1 - SSIM_WINDOW) * (h + 1 - SSIM_WINDOW);
    let norm = T::one() / T::from_usize_lossy(positions * 3);
    let mut total = T::zero();
    let mut grad = want_grad.then(|| ImageBuffer::new(w, h));

    for c in 0..3 {
        let xa = channel(a, c);
        let xb = channel(b, c);
        let aa: Vec<T> = xa.iter().map(|v| *v * *v).collect();
        let bb: Vec<T> = xb.iter().map(|v| *v * *v).collect();
        let ab: Vec<T> = xa.iter().zip(&xb).map(|(p, q)| *p * *q).collect();
        let mu_a = filter_valid(&xa, w, h, &k);
        let mu_b = filter_valid(&xb, w, h, &k);
        let e_aa = filter_valid(&aa, w, h, &k);
        let e_bb = filter_valid(&bb, w, h, &k);
        let e_ab = filter_valid(&ab, w, h, &k);

        let mut d_mu = vec![T::zero(); positions];
        let mut d_ebb = vec![T::zero(); positions];
        let mut d_eab = vec![T::zero(); positions];
        for p in 0..positions {
            let (ma, mb) = (mu_a[p], mu_b[p]);
            let var_a = e_aa[p] - ma * ma;
            let var_b = e_bb[p] - mb * mb;
            let cov = e_ab[p] - ma * mb;
            let n1 = two * ma * mb + c1;
            let n2 = two * cov + c2;
            let d1 = ma * ma + mb * mb + c1;
            let d2 = var_a + var_b + c2;
            let s = (n1 * n2) / (d1 * d2);
            total = total + s;
            if want_grad {
                let den = d1 * d2;
                // ∂/∂μ_b through n1, n2 (cov = E_ab − μ_a μ_b), d1 and d2 (var_b = E_bb − μ_b²).
                let dn1 = two * ma;
                let dn2 = -two * ma;
                let dd1 = two * mb;
                let dd2 = -two * mb;
                d_mu[p] = ((dn1 * n2 + n1 * dn2) - s * (dd1 * d2 + d1 * dd2)) / den;
                d_eab[p] = two * n1 / den;
                d_ebb[p] = -s / d2;
            }
        }
        if let Some(grad) = grad.as_mut() {
            let g_mu = filter_valid_adjoint(&d_mu, w, h, &k);
            let g_ebb = filter_valid_adjoint(&d_ebb, w, h, &k);
            let g_eab = filter_valid_adjoint(&d_eab, w, h, &k);
            for i in 0..w * h {
                let v = g_mu[i] + two * xb[i] * g_ebb[i] + xa[i] * g_eab[i];
                grad.data[i * 3 + c] = v * norm;
            }
        }
    }
    Ok((total * norm, grad))
}

/// Per-view and mean quality numbers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    /// `(view name, psnr dB, ssim)`
    pub views: Vec<(String, f64, f64)>,
}

impl MetricReport {
    pub fn push(&mut self, name: impl Into<String>, psnr: f64, ssim: f64) {
        self.views.push((name.into(), psnr, ssim));
    }

    pub fn mean_psnr(&self) -> f64 {
        mean(self.views.iter().map(|v| v.1))
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(self.views.iter().map(|v| v.2))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("view,psnr,ssim\n");
        for (name, p, s) in &self.views {
            out.push_str(&format!("{name},{p},{s}\n"));
        }
        out.push_str(&format!("mean,{},{}\n", self.mean_psnr(), self.mean_ssim()));
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16} {:>10} {:>8}\n", "view", "PSNR(dB)", "SSIM");
        for (name, p, s) in &self.views {
            out.push_str(&format!("{name:<16} {p:>10.3} {s:>8.4}\n"));
        }
        out.push_str(&format!("{:<16} {:>10.3} {:>8.4}\n", "mean", self.mean_psnr(), self.mean_ssim()));
        out
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}
