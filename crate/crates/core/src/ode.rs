//! Classical fourth-order Runge–Kutta shared by all integrators.

use crate::linalg::{CMat, CVec, C64};

pub trait OdeState: Clone {
    /// self + h·k
    fn add_scaled(&self, k: &Self, h: f64) -> Self;
}

impl OdeState for CMat {
    fn add_scaled(&self, k: &Self, h: f64) -> Self {
        self + k * C64::new(h, 0.0)
    }
}

impl OdeState for CVec {
    fn add_scaled(&self, k: &Self, h: f64) -> Self {
        self + k * C64::new(h, 0.0)
    }
}

impl<const N: usize> OdeState for [C64; N] {
    fn add_scaled(&self, k: &Self, h: f64) -> Self {
        let mut out = *self;
        for (o, kk) in out.iter_mut().zip(k) {
            *o += kk * h;
        }
        out
    }
}

pub fn rk4_step<S: OdeState>(y: &S, h: f64, mut f: impl FnMut(&S) -> S) -> S {
    let k1 = f(y);
    let k2 = f(&y.add_scaled(&k1, h / 2.0));
    let k3 = f(&y.add_scaled(&k2, h / 2.0));
    let k4 = f(&y.add_scaled(&k3, h));
    y.add_scaled(&k1, h / 6.0)
        .add_scaled(&k2, h / 3.0)
        .add_scaled(&k3, h / 3.0)
        .add_scaled(&k4, h / 6.0)
}

/// Number of equal steps no longer than `dt` covering `duration`.
pub fn step_count(duration: f64, dt: f64) -> usize {
    ((duration / dt) - 1e-9).ceil().max(1.0) as usize
}
