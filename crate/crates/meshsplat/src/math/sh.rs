//! Real spherical harmonics up to degree 3, 3DGS color convention:
//! rgb = sum_b coeff[b] * basis_b(dir) + 0.5, clamped to >= 0.

use super::Vec3;

pub const MAX_DEGREE: usize = 3;
pub const MAX_BASIS: usize = 16;

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Coefficient count per channel for a given degree.
pub const fn basis_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Owned coefficient block for one splat, channel-major:
/// `data[ch * basis_count + b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoeffs {
    pub degree: usize,
    pub data: Vec<f64>,
}

impl ShCoeffs {
    pub fn new(degree: usize) -> Self {
        assert!(degree <= MAX_DEGREE, "sh degree {degree} > {MAX_DEGREE}");
        ShCoeffs { degree, data: vec![0.0; 3 * basis_count(degree)] }
    }

    /// DC-only gray level `v` (the constant term that evaluates to `v` after
    /// the 0.5 offset).
    pub fn constant_gray(degree: usize, v: f64) -> Self {
        let mut sh = ShCoeffs::new(degree);
        let dc = (v - 0.5) / C0;
        let b = basis_count(degree);
        for ch in 0..3 {
            sh.data[ch * b] = dc;
        }
        sh
    }

    pub fn constant_rgb(degree: usize, rgb: [f64; 3]) -> Self {
        let mut sh = ShCoeffs::new(degree);
        let b = basis_count(degree);
        for ch in 0..3 {
            sh.data[ch * b] = (rgb[ch] - 0.5) / C0;
        }
        sh
    }

    pub fn eval(&self, dir: Vec3) -> [f64; 3] {
        eval_sh(self.degree, &self.data, dir)
    }
}

/// Basis values at a unit direction; entries past `basis_count(degree)` are 0.
pub fn sh_basis(degree: usize, dir: Vec3) -> [f64; MAX_BASIS] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut b = [0.0; MAX_BASIS];
    b[0] = C0;
    if degree >= 1 {
        b[1] = -C1 * y;
        b[2] = C1 * z;
        b[3] = -C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = C2[0] * x * y;
        b[5] = C2[1] * y * z;
        b[6] = C2[2] * (2.0 * zz - xx - yy);
        b[7] = C2[3] * x * z;
        b[8] = C2[4] * (xx - yy);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[9] = C3[0] * y * (3.0 * xx - yy);
        b[10] = C3[1] * x * y * z;
        b[11] = C3[2] * y * (4.0 * zz - xx - yy);
        b[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
        b[13] = C3[4] * x * (4.0 * zz - xx - yy);
        b[14] = C3[5] * z * (xx - yy);
        b[15] = C3[6] * x * (xx - 3.0 * yy);
    }
    b
}

/// Basis values and their gradients w.r.t. the (unnormalized) direction
/// components, evaluated at a unit direction.
pub fn sh_basis_grad(degree: usize, dir: Vec3) -> ([f64; MAX_BASIS], [Vec3; MAX_BASIS]) {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let b = sh_basis(degree, dir);
    let mut g = [Vec3::ZERO; MAX_BASIS];
    if degree >= 1 {
        g[1] = Vec3::new(0.0, -C1, 0.0);
        g[2] = Vec3::new(0.0, 0.0, C1);
        g[3] = Vec3::new(-C1, 0.0, 0.0);
    }
    if degree >= 2 {
        g[4] = Vec3::new(y, x, 0.0) * C2[0];
        g[5] = Vec3::new(0.0, z, y) * C2[1];
        g[6] = Vec3::new(-2.0 * x, -2.0 * y, 4.0 * z) * C2[2];
        g[7] = Vec3::new(z, 0.0, x) * C2[3];
        g[8] = Vec3::new(2.0 * x, -2.0 * y, 0.0) * C2[4];
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        g[9] = Vec3::new(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0) * C3[0];
        g[10] = Vec3::new(y * z, x * z, x * y) * C3[1];
        g[11] = Vec3::new(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z) * C3[2];
        g[12] = Vec3::new(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy) * C3[3];
        g[13] = Vec3::new(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z) * C3[4];
        g[14] = Vec3::new(2.0 * x * z, -2.0 * y * z, xx - yy) * C3[5];
        g[15] = Vec3::new(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0) * C3[6];
    }
    (b, g)
}

/// Color at a unit view direction. `coeffs` is channel-major with
/// `basis_count(degree)` entries per channel. Output is clamped to >= 0.
pub fn eval_sh(degree: usize, coeffs: &[f64], dir: Vec3) -> [f64; 3] {
    let n = basis_count(degree);
    debug_assert_eq!(coeffs.len(), 3 * n);
    let basis = sh_basis(degree, dir);
    let mut rgb = [0.0; 3];
    for (ch, out) in rgb.iter_mut().enumerate() {
        let mut v = 0.5;
        for b in 0..n {
            v += coeffs[ch * n + b] * basis[b];
        }
        *out = v.max(0.0);
    }
    rgb
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Associated Legendre P_l^m with the Condon-Shortley phase.
    fn legendre(l: usize, m: usize, x: f64) -> f64 {
        let mut pmm = 1.0;
        if m > 0 {
            let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
            let mut fact = 1.0;
            for _ in 0..m {
                pmm *= -fact * somx2;
                fact += 2.0;
            }
        }
        if l == m {
            return pmm;
        }
        let mut pmmp1 = x * (2.0 * m as f64 + 1.0) * pmm;
        if l == m + 1 {
            return pmmp1;
        }
        let mut pll = 0.0;
        for ll in (m + 2)..=l {
            pll = (x * (2.0 * ll as f64 - 1.0) * pmmp1 - (ll + m - 1) as f64 * pmm)
                / (ll - m) as f64;
            pmm = pmmp1;
            pmmp1 = pll;
        }
        pll
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Textbook real spherical harmonic for basis index l*(l+1)+m.
    fn real_sh_oracle(l: usize, m: i32, dir: Vec3) -> f64 {
        let theta_cos = dir.z;
        let phi = dir.y.atan2(dir.x);
        let ma = m.unsigned_abs() as usize;
        let k = ((2.0 * l as f64 + 1.0) / (4.0 * PI) * factorial(l - ma) / factorial(l + ma))
            .sqrt();
        if m == 0 {
            k * legendre(l, 0, theta_cos)
        } else if m > 0 {
            std::f64::consts::SQRT_2 * k * (ma as f64 * phi).cos() * legendre(l, ma, theta_cos)
        } else {
            std::f64::consts::SQRT_2 * k * (ma as f64 * phi).sin() * legendre(l, ma, theta_cos)
        }
    }

    fn random_dir(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if v.norm() > 0.2 && v.norm() < 1.0 {
                return v.normalized().unwrap();
            }
        }
    }

    #[test]
    fn basis_matches_legendre_oracle_up_to_degree_3() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let dir = random_dir(&mut rng);
            let basis = sh_basis(3, dir);
            for l in 0..=3usize {
                for m in -(l as i32)..=(l as i32) {
                    let idx = (l * (l + 1)) as i32 + m;
                    let want = real_sh_oracle(l, m, dir);
                    let got = basis[idx as usize];
                    assert!(
                        (got - want).abs() < 1e-12,
                        "basis l={l} m={m}: got {got}, oracle {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn degree0_is_constant_color() {
        let sh = ShCoeffs::constant_rgb(0, [0.25, 0.5, 0.75]);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..20 {
            let rgb = sh.eval(random_dir(&mut rng));
            assert!((rgb[0] - 0.25).abs() < 1e-12);
            assert!((rgb[1] - 0.5).abs() < 1e-12);
            assert!((rgb[2] - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn degree1_terms_are_odd_around_dc() {
        // Only degree-1 coefficients set: outputs at dir and -dir must be
        // symmetric about the 0.5 offset.
        let mut sh = ShCoeffs::new(1);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for v in sh.data.iter_mut() {
            *v = rng.gen_range(-0.2..0.2);
        }
        // Zero the DC entries (channel-major stride 4).
        for ch in 0..3 {
            sh.data[ch * 4] = 0.0;
        }
        for _ in 0..50 {
            let d = random_dir(&mut rng);
            let a = sh.eval(d);
            let b = sh.eval(-d);
            for ch in 0..3 {
                assert!((a[ch] + b[ch] - 1.0).abs() < 1e-12, "not symmetric about DC");
            }
        }
    }

    #[test]
    fn eval_clamps_negative_colors_to_zero() {
        let sh = ShCoeffs::constant_gray(0, -2.0);
        let rgb = sh.eval(Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(rgb, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn basis_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let h = 1e-6;
        for _ in 0..100 {
            let d = random_dir(&mut rng);
            let (_, grads) = sh_basis_grad(3, d);
            for axis in 0..3 {
                let mut dp = d;
                let mut dm = d;
                dp.set(axis, d.get(axis) + h);
                dm.set(axis, d.get(axis) - h);
                // The basis is a polynomial in the raw components, so the
                // finite difference is taken without renormalizing.
                let bp = sh_basis(3, dp);
                let bm = sh_basis(3, dm);
                for b in 0..16 {
                    let fd = (bp[b] - bm[b]) / (2.0 * h);
                    let an = grads[b].get(axis);
                    assert!(
                        (fd - an).abs() < 1e-7,
                        "basis {b} axis {axis}: fd {fd} vs analytic {an}"
                    );
                }
            }
        }
    }
}
