//! Spin-½ register of N emitters. Basis index = Σ eₙ 2ⁿ, so |gg…g⟩ is index 0
//! and emitter n excited alone is index 2ⁿ.

use crate::linalg::{CMat, CVec, C64, ONE};

pub fn dim(n_emitters: usize) -> usize {
    1 << n_emitters
}

/// σ̂ₙ lowering operator on emitter `n`.
pub fn lowering(n: usize, n_emitters: usize) -> CMat {
    let d = dim(n_emitters);
    let mut m = CMat::zeros(d, d);
    for idx in 0..d {
        if idx & (1 << n) != 0 {
            m[(idx ^ (1 << n), idx)] = ONE;
        }
    }
    m
}

pub fn number(n: usize, n_emitters: usize) -> CMat {
    let d = dim(n_emitters);
    let mut m = CMat::zeros(d, d);
    for idx in 0..d {
        if idx & (1 << n) != 0 {
            m[(idx, idx)] = ONE;
        }
    }
    m
}

pub fn excitation_number(idx: usize) -> u32 {
    idx.count_ones()
}

pub fn ground(n_emitters: usize) -> CVec {
    let mut v = CVec::zeros(dim(n_emitters));
    v[0] = ONE;
    v
}

/// Single-excitation state Σ cₙ |eₙ⟩.
pub fn single_excitation(coeffs: &[C64]) -> CVec {
    let n = coeffs.len();
    let mut v = CVec::zeros(dim(n));
    for (k, &ck) in coeffs.iter().enumerate() {
        v[1 << k] = ck;
    }
    v
}

/// σ̂†_c = Σ cₙ σ̂ₙ† for a collective mode with coefficients c.
pub fn collective_raising(coeffs: &[C64]) -> CMat {
    let n = coeffs.len();
    let mut m = CMat::zeros(dim(n), dim(n));
    for (k, &ck) in coeffs.iter().enumerate() {
        m += lowering(k, n).adjoint() * ck;
    }
    m
}

/// Collective mode coefficients for the three-emitter mirror configuration.
pub mod modes {
    use super::*;

    pub fn d() -> [C64; 3] {
        let s = 1.0 / 2f64.sqrt();
        [C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(-s, 0.0)]
    }

    pub fn a() -> [C64; 3] {
        let s = 1.0 / 6f64.sqrt();
        [C64::new(s, 0.0), C64::new(-2.0 * s, 0.0), C64::new(s, 0.0)]
    }

    pub fn b() -> [C64; 3] {
        let s = 1.0 / 3f64.sqrt();
        [C64::new(s, 0.0); 3]
    }
}

pub fn ket_g() -> CVec {
    ground(3)
}

pub fn ket_d() -> CVec {
    single_excitation(&modes::d())
}

pub fn ket_a() -> CVec {
    single_excitation(&modes::a())
}

pub fn ket_b() -> CVec {
    single_excitation(&modes::b())
}

/// DFS basis in gate order (|D⟩, |G⟩, |A⟩) as columns of an 8×3 matrix.
pub fn dfs_basis() -> CMat {
    CMat::from_columns(&[ket_d(), ket_g(), ket_a()])
}

pub fn projector(v: &CVec) -> CMat {
    v * v.adjoint()
}
