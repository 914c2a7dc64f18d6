//! Mean SSIM over every `k x k` window position (stride 1, uniform weights,
//! population statistics).
//!
//! Window sums of `a`, `b`, `a²`, `b²` and `ab` come from exact integer
//! summed-area tables, so each window's mean, variance and covariance are
//! formed from exact integer numerators. The per-window expression is
//! symmetric in its operands, which makes `ssim(a, b) == ssim(b, a)` hold
//! bit-for-bit.

use super::{check_same_dims, ImageError, MatchConfig, Thumbnail};

struct Integral {
    stride: usize,
    a: Vec<u64>,
    b: Vec<u64>,
    aa: Vec<u64>,
    bb: Vec<u64>,
    ab: Vec<u64>,
}

impl Integral {
    fn build(a: &Thumbnail, b: &Thumbnail) -> Self {
        let (w, h) = a.dims();
        let stride = w + 1;
        let len = stride * (h + 1);
        let mut t = Integral {
            stride,
            a: vec![0; len],
            b: vec![0; len],
            aa: vec![0; len],
            bb: vec![0; len],
            ab: vec![0; len],
        };
        let (pa, pb) = (a.pixels(), b.pixels());
        for y in 0..h {
            let (mut ra, mut rb, mut raa, mut rbb, mut rab) = (0u64, 0u64, 0u64, 0u64, 0u64);
            for x in 0..w {
                let va = pa[y * w + x] as u64;
                let vb = pb[y * w + x] as u64;
                ra += va;
                rb += vb;
                raa += va * va;
                rbb += vb * vb;
                rab += va * vb;
                let up = y * stride + x + 1;
                let at = (y + 1) * stride + x + 1;
                t.a[at] = t.a[up] + ra;
                t.b[at] = t.b[up] + rb;
                t.aa[at] = t.aa[up] + raa;
                t.bb[at] = t.bb[up] + rbb;
                t.ab[at] = t.ab[up] + rab;
            }
        }
        t
    }

    fn rect(table: &[u64], stride: usize, x: usize, y: usize, k: usize) -> i64 {
        let tl = table[y * stride + x];
        let tr = table[y * stride + x + k];
        let bl = table[(y + k) * stride + x];
        let br = table[(y + k) * stride + x + k];
        (br + tl - tr - bl) as i64
    }
}

pub fn ssim(a: &Thumbnail, b: &Thumbnail, cfg: &MatchConfig) -> Result<f64, ImageError> {
    check_same_dims(a, b)?;
    let k = cfg.ssim_window;
    let (w, h) = a.dims();
    if k == 0 {
        return Err(ImageError::InvalidConfig("ssim_window must be positive".into()));
    }
    if w < k || h < k {
        return Err(ImageError::SmallerThanWindow {
            width: w,
            height: h,
            window: k,
        });
    }
    let t = Integral::build(a, b);
    let n = (k * k) as i64;
    let nf = n as f64;
    let n2 = nf * nf;
    let (c1, c2) = (cfg.c1, cfg.c2);

    let mut total = 0.0;
    for y in 0..=h - k {
        for x in 0..=w - k {
            let sa = Integral::rect(&t.a, t.stride, x, y, k);
            let sb = Integral::rect(&t.b, t.stride, x, y, k);
            let saa = Integral::rect(&t.aa, t.stride, x, y, k);
            let sbb = Integral::rect(&t.bb, t.stride, x, y, k);
            let sab = Integral::rect(&t.ab, t.stride, x, y, k);

            let mu_a = sa as f64 / nf;
            let mu_b = sb as f64 / nf;
            let var_a = (n * saa - sa * sa) as f64 / n2;
            let var_b = (n * sbb - sb * sb) as f64 / n2;
            let cov = (n * sab - sa * sb) as f64 / n2;

            let num = (2.0 * (mu_a * mu_b) + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
        }
    }
    let windows = ((w - k + 1) * (h - k + 1)) as f64;
    Ok(total / windows)
}
