//! Faddeeva function w(z) = e^{−z²} erfc(−iz) and the scaled complementary error function.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::linalg::{c, C64, I};

const N_TERMS: usize = 40;

fn weideman() -> &'static (f64, [f64; N_TERMS]) {
    static COEFFS: OnceLock<(f64, [f64; N_TERMS])> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let n = N_TERMS;
        let m = 2 * n;
        let m2 = 2 * m;
        let l = (n as f64 / 2f64.sqrt()).sqrt();
        // samples ordered as after fftshift: index j holds k = j (j < m) or j − m2
        let mut g = vec![0.0; m2];
        for (j, gj) in g.iter_mut().enumerate() {
            let k = if j < m { j as i64 } else { j as i64 - m2 as i64 };
            if k == -(m as i64) {
                continue;
            }
            let theta = k as f64 * PI / m as f64;
            let t = l * (theta / 2.0).tan();
            *gj = (-t * t).exp() * (l * l + t * t);
        }
        let mut a = [0.0; N_TERMS];
        for (idx, an) in a.iter_mut().enumerate() {
            let nn = idx + 1;
            let s: f64 = g
                .iter()
                .enumerate()
                .map(|(j, &v)| v * (2.0 * PI * (j * nn % m2) as f64 / m2 as f64).cos())
                .sum();
            *an = s / m2 as f64;
        }
        (l, a)
    })
}

fn w_upper(z: C64) -> C64 {
    if z.norm() > 12.0 {
        // Laplace continued fraction, fast for large |z|
        let mut r = z;
        for k in (1..=24).rev() {
            r = z - c(k as f64 / 2.0, 0.0) / r;
        }
        return I / (r * PI.sqrt());
    }
    let (l, a) = weideman();
    let lz = c(*l, 0.0) - I * z;
    let zz = (c(*l, 0.0) + I * z) / lz;
    let mut p = C64::new(0.0, 0.0);
    for an in a.iter().rev() {
        p = p * zz + an;
    }
    p * 2.0 / (lz * lz) + c(1.0 / PI.sqrt(), 0.0) / lz
}

/// Faddeeva function, valid in the whole complex plane.
pub fn faddeeva(z: C64) -> C64 {
    if z.im >= 0.0 {
        w_upper(z)
    } else {
        (-(z * z)).exp() * 2.0 - w_upper(-z)
    }
}

/// e^{x²} erfc(x) for real x.
pub fn erfcx(x: f64) -> f64 {
    faddeeva(c(0.0, x)).re
}

/// e^{z²} erfc(z) for complex z.
pub fn erfcx_complex(z: C64) -> C64 {
    faddeeva(I * z)
}

pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        erfcx(x) * (-x * x).exp()
    } else {
        2.0 - erfcx(-x) * (-x * x).exp()
    }
}
