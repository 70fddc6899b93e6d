//! SSIM with the standard 11x11 Gaussian window (sigma 1.5), zero-padded
//! same-size convolution, plus the analytic adjoint used by the backward
//! pass. Images are interleaved rgb planes in linear [0,1].

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Normalized 1D window; the 2D window is its outer product.
pub fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-(i as f64 - c).powi(2) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Separable same-size convolution of one plane with zero padding.
fn conv_same(src: &[f64], width: usize, height: usize, kernel: &[f64; WINDOW]) -> Vec<f64> {
    let r = WINDOW as isize / 2;
    let mut mid = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = x as isize + k as isize - r;
                if sx >= 0 && (sx as usize) < width {
                    acc += kv * src[y * width + sx as usize];
                }
            }
            mid[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = y as isize + k as isize - r;
                if sy >= 0 && (sy as usize) < height {
                    acc += kv * mid[sy as usize * width + x];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn extract_plane(img: &[f64], ch: usize) -> Vec<f64> {
    img.iter().skip(ch).step_by(3).copied().collect()
}

struct SsimMoments {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    m_xx: Vec<f64>,
    m_yy: Vec<f64>,
    m_xy: Vec<f64>,
}

fn moments(x: &[f64], y: &[f64], width: usize, height: usize) -> SsimMoments {
    let kernel = gaussian_window();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    SsimMoments {
        mu_x: conv_same(x, width, height, &kernel),
        mu_y: conv_same(y, width, height, &kernel),
        m_xx: conv_same(&xx, width, height, &kernel),
        m_yy: conv_same(&yy, width, height, &kernel),
        m_xy: conv_same(&xy, width, height, &kernel),
    }
}

/// Mean SSIM over all pixels and channels of two interleaved rgb images.
pub fn ssim_mean(img: &[f64], target: &[f64], width: usize, height: usize) -> f64 {
    assert_eq!(img.len(), 3 * width * height, "image size");
    assert_eq!(img.len(), target.len(), "target size");
    let mut total = 0.0;
    for ch in 0..3 {
        let x = extract_plane(img, ch);
        let y = extract_plane(target, ch);
        let m = moments(&x, &y, width, height);
        for p in 0..width * height {
            let (mu_x, mu_y) = (m.mu_x[p], m.mu_y[p]);
            let sig_x = m.m_xx[p] - mu_x * mu_x;
            let sig_y = m.m_yy[p] - mu_y * mu_y;
            let sig_xy = m.m_xy[p] - mu_x * mu_y;
            let a1 = 2.0 * mu_x * mu_y + C1;
            let a2 = 2.0 * sig_xy + C2;
            let b1 = mu_x * mu_x + mu_y * mu_y + C1;
            let b2 = sig_x + sig_y + C2;
            total += (a1 * a2) / (b1 * b2);
        }
    }
    total / (3 * width * height) as f64
}

/// Gradient of `upstream * ssim_mean(img, target)` with respect to `img`.
/// The adjoint of a zero-padded convolution with a symmetric window is the
/// same convolution, so each moment contributes one more separable pass.
pub fn ssim_mean_backward(
    img: &[f64],
    target: &[f64],
    width: usize,
    height: usize,
    upstream: f64,
) -> Vec<f64> {
    assert_eq!(img.len(), 3 * width * height, "image size");
    assert_eq!(img.len(), target.len(), "target size");
    let kernel = gaussian_window();
    let scale = upstream / (3 * width * height) as f64;
    let mut grad = vec![0.0; img.len()];
    for ch in 0..3 {
        let x = extract_plane(img, ch);
        let y = extract_plane(target, ch);
        let m = moments(&x, &y, width, height);
        let n = width * height;
        let mut g_mx = vec![0.0; n];
        let mut g_mxx = vec![0.0; n];
        let mut g_mxy = vec![0.0; n];
        for p in 0..n {
            let (mu_x, mu_y) = (m.mu_x[p], m.mu_y[p]);
            let sig_x = m.m_xx[p] - mu_x * mu_x;
            let sig_y = m.m_yy[p] - mu_y * mu_y;
            let sig_xy = m.m_xy[p] - mu_x * mu_y;
            let a1 = 2.0 * mu_x * mu_y + C1;
            let a2 = 2.0 * sig_xy + C2;
            let b1 = mu_x * mu_x + mu_y * mu_y + C1;
            let b2 = sig_x + sig_y + C2;
            let s = (a1 * a2) / (b1 * b2);
            let inv_bb = 1.0 / (b1 * b2);
            // d s / d mu_x, folding in sigma's dependence on mu_x.
            let ds_dmu = 2.0 * mu_y * a2 * inv_bb - 2.0 * mu_x * s / b1
                + 2.0 * mu_x * s / b2
                - 2.0 * mu_y * a1 * inv_bb;
            g_mx[p] = scale * ds_dmu;
            g_mxx[p] = scale * (-s / b2);
            g_mxy[p] = scale * (2.0 * a1 * inv_bb);
        }
        let back_mx = conv_same(&g_mx, width, height, &kernel);
        let back_mxx = conv_same(&g_mxx, width, height, &kernel);
        let back_mxy = conv_same(&g_mxy, width, height, &kernel);
        for p in 0..n {
            grad[3 * p + ch] = back_mx[p] + 2.0 * x[p] * back_mxx[p] + y[p] * back_mxy[p];
        }
    }
    grad
}
