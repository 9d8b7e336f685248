//! Emitter positions along the mirror-terminated waveguide and the couplings they induce.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::dynamics::{nonhermitian_hamiltonian, ControlSegment};
use crate::error::{invalid, Error, Result};
use crate::hilbert::{self, modes};
use crate::linalg::{c, eig_general, CMat, CVec, C64};
use crate::wavepacket::Wavepacket;

fn default_gamma0() -> f64 {
    1.0
}

/// Positions in units of λ0, rates in units of γ0. k0 is fixed to 2π.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterArray {
    pub positions: Vec<f64>,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    #[serde(default)]
    pub gamma_prime: f64,
}

/// sin(2πx) with exact zeros at half-integers and exact ±1 at quarter points.
pub fn sin_tau(x: f64) -> f64 {
    let r = x - x.round();
    let s = r.signum();
    let mut a = r.abs();
    if a > 0.25 {
        a = 0.5 - a;
    }
    s * (TAU * a).sin()
}

impl EmitterArray {
    pub fn new(positions: Vec<f64>, gamma0: f64, gamma_prime: f64) -> Result<Self> {
        let a = EmitterArray { positions, gamma0, gamma_prime };
        a.validate()?;
        Ok(a)
    }

    /// Three emitters one wavelength apart at antinodes: x = 1.25, 2.25, 3.25.
    pub fn mirror() -> Self {
        EmitterArray { positions: vec![1.25, 2.25, 3.25], gamma0: 1.0, gamma_prime: 0.0 }
    }

    pub fn with_gamma_prime(mut self, gamma_prime: f64) -> Self {
        self.gamma_prime = gamma_prime;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return invalid("emitter array needs at least one emitter");
        }
        if self.positions.len() > 6 {
            return Err(Error::SizeLimit(format!("{} emitters (max 6)", self.positions.len())));
        }
        if self.positions.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return invalid("emitter positions must be finite and > 0");
        }
        if !(self.gamma0 > 0.0) || !self.gamma0.is_finite() {
            return invalid("gamma0 must be > 0");
        }
        if !(self.gamma_prime >= 0.0) || !self.gamma_prime.is_finite() {
            return invalid("gamma_prime must be ≥ 0");
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn k0(&self) -> f64 {
        TAU
    }

    /// sin(k0 xₙ) for every emitter.
    pub fn sin_factors(&self) -> Vec<f64> {
        self.positions.iter().map(|&x| sin_tau(x)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingMatrices {
    pub j: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
}

impl CouplingMatrices {
    pub fn j_mat(&self) -> CMat {
        let n = self.j.len();
        CMat::from_fn(n, n, |a, b| c(self.j[a][b], 0.0))
    }

    pub fn gamma_mat(&self) -> CMat {
        let n = self.gamma.len();
        CMat::from_fn(n, n, |a, b| c(self.gamma[a][b], 0.0))
    }
}

/// J_nm − iΓ_nm/2 = −i(γ0/4)(e^{ik0|xₙ−xₘ|} − e^{ik0(xₙ+xₘ)}).
pub fn coupling_matrices(array: &EmitterArray) -> CouplingMatrices {
    let n = array.n();
    let g0 = array.gamma0;
    let s = array.sin_factors();
    let mut j = vec![vec![0.0; n]; n];
    let mut gamma = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            let xa = array.positions[a];
            let xb = array.positions[b];
            j[a][b] = 0.25 * g0 * (sin_tau((xa - xb).abs()) - sin_tau(xa + xb));
            // the imaginary part collapses to a product of sines
            gamma[a][b] = g0 * s[a] * s[b];
        }
    }
    CouplingMatrices { j, gamma }
}

/// Collective jump operator Ŝ on the 2ᴺ-dim register and its rate Γ_B.
/// A fully dark configuration returns (0, 0).
pub fn jump_operator(array: &EmitterArray) -> (CMat, f64) {
    let n = array.n();
    let s = array.sin_factors();
    let rate: f64 = array.gamma0 * s.iter().map(|x| x * x).sum::<f64>();
    let d = hilbert::dim(n);
    if rate <= 1e-14 * array.gamma0 {
        log::warn!("all emitters sit at field nodes: fully dark configuration");
        return (CMat::zeros(d, d), 0.0);
    }
    let pref = (array.gamma0 / rate).sqrt();
    let mut op = CMat::zeros(d, d);
    for (k, &sk) in s.iter().enumerate() {
        op += hilbert::lowering(k, n) * c(pref * sk, 0.0);
    }
    (op, rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TwoExcitationLabel {
    SD,
    Lambda1,
    Lambda2,
}

#[derive(Clone, Debug)]
pub struct TwoExcitationState {
    pub label: TwoExcitationLabel,
    pub shift: f64,
    pub decay: f64,
    /// normalized right eigenvector on the 8-dim register
    pub vector: CVec,
}

#[derive(Clone, Debug)]
pub struct CollectiveBasis {
    pub g: CVec,
    pub d: CVec,
    pub a: CVec,
    pub b: CVec,
    /// ordered by ascending decay, ties by ascending shift
    pub two_excitation: Vec<TwoExcitationState>,
    pub xi: [C64; 2],
    pub epsilon: [C64; 2],
}

impl CollectiveBasis {
    pub fn state(&self, label: TwoExcitationLabel) -> &TwoExcitationState {
        self.two_excitation.iter().find(|s| s.label == label).expect("all labels present")
    }

    pub fn xi_sq(&self) -> [f64; 2] {
        [self.xi[0].norm_sqr(), self.xi[1].norm_sqr()]
    }
}

pub fn is_mirror_configuration(array: &EmitterArray) -> bool {
    if array.n() != 3 {
        return false;
    }
    let cm = coupling_matrices(array);
    let g0 = array.gamma0;
    (0..3).all(|a| (0..3).all(|b| cm.j[a][b].abs() < 1e-12 * g0 && (cm.gamma[a][b] - g0).abs() < 1e-12 * g0))
}

const TWO_EX: [usize; 3] = [0b011, 0b101, 0b110];

/// Collective states of the mirror configuration at exchange J (δ = −J, Δ = 0, no drive).
pub fn collective_basis(array: &EmitterArray, j: f64) -> Result<CollectiveBasis> {
    if !is_mirror_configuration(array) {
        return invalid("collective_basis needs the three-emitter mirror configuration");
    }
    let seg = ControlSegment::idle(1.0, 0.0, -j, j);
    let h = nonhermitian_hamiltonian(array, &seg, 0.0)?;
    let sub = CMat::from_fn(3, 3, |r, cc| h[(TWO_EX[r], TWO_EX[cc])]);
    let (vals, vecs) = eig_general(&sub)?;

    let embed = |k: usize| {
        let mut v = CVec::zeros(8);
        for (r, &idx) in TWO_EX.iter().enumerate() {
            v[idx] = vecs[(r, k)];
        }
        v
    };
    let antisym = {
        let mut v = CVec::zeros(8);
        let s = 1.0 / 2f64.sqrt();
        v[0b011] = c(s, 0.0);
        v[0b110] = c(-s, 0.0);
        v
    };
    let mut states: Vec<(C64, CVec)> = (0..3).map(|k| (vals[k], embed(k))).collect();
    let sd_idx = (0..3)
        .max_by(|&p, &q| {
            antisym.dotc(&states[p].1).norm().partial_cmp(&antisym.dotc(&states[q].1).norm()).unwrap()
        })
        .unwrap();
    let (sd_val, sd_vec) = states.remove(sd_idx);
    let order = |x: &(C64, CVec), y: &(C64, CVec)| {
        let dx = -2.0 * x.0.im;
        let dy = -2.0 * y.0.im;
        if (dx - dy).abs() > 1e-9 * (1.0 + dx.abs()) {
            dx.partial_cmp(&dy).unwrap()
        } else {
            x.0.re.partial_cmp(&y.0.re).unwrap()
        }
    };
    states.sort_by(order);

    let mut two = vec![TwoExcitationState {
        label: TwoExcitationLabel::SD,
        shift: sd_val.re,
        decay: -2.0 * sd_val.im,
        vector: sd_vec,
    }];
    for (label, (val, vec)) in [TwoExcitationLabel::Lambda1, TwoExcitationLabel::Lambda2].into_iter().zip(states) {
        two.push(TwoExcitationState { label, shift: val.re, decay: -2.0 * val.im, vector: vec });
    }
    two.sort_by(|x, y| {
        let a = (c(x.shift, -x.decay / 2.0), x.vector.clone());
        let b = (c(y.shift, -y.decay / 2.0), y.vector.clone());
        order(&a, &b)
    });

    let sigma_d_dag = hilbert::collective_raising(&modes::d());
    let src = &sigma_d_dag * hilbert::ket_d();
    let find = |l: TwoExcitationLabel| two.iter().find(|s| s.label == l).unwrap().vector.clone();
    let l1 = find(TwoExcitationLabel::Lambda1);
    let l2 = find(TwoExcitationLabel::Lambda2);
    let xi = [l1.dotc(&src), l2.dotc(&src)];

    let (s_op, _) = jump_operator(array);
    let s_dag = s_op.adjoint();
    let normed = |v: CVec| {
        let n = v.norm();
        v / c(n, 0.0)
    };
    let s_b = normed(&s_dag * hilbert::ket_b());
    let s_a = normed(&s_dag * hilbert::ket_a());
    let epsilon = [s_b.dotc(&l1), s_a.dotc(&l1)];

    Ok(CollectiveBasis {
        g: hilbert::ket_g(),
        d: hilbert::ket_d(),
        a: hilbert::ket_a(),
        b: hilbert::ket_b(),
        two_excitation: two,
        xi,
        epsilon,
    })
}

/// ψ_out(t) = √γ0 Σₙ sin(k0xₙ)⟨σ̂ₙ⟩(t). In the single-excitation picture ⟨σ̂ₙ⟩ is the
/// amplitude on |eₙ⟩, one row per time sample.
pub fn emitted_field(t0: f64, dt: f64, sigma: &[Vec<C64>], array: &EmitterArray) -> Result<Wavepacket> {
    let n = array.n();
    if let Some(bad) = sigma.iter().position(|row| row.len() != n) {
        return invalid(format!("sample {bad} has {} amplitudes, expected {n}", sigma[bad].len()));
    }
    let s = array.sin_factors();
    let pref = array.gamma0.sqrt();
    let samples = sigma
        .iter()
        .map(|row| row.iter().zip(&s).map(|(a, sk)| a * (pref * sk)).sum())
        .collect();
    Wavepacket::new(t0, dt, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_couplings_exact() {
        let cm = coupling_matrices(&EmitterArray::mirror());
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(cm.j[a][b], 0.0);
                assert_eq!(cm.gamma[a][b], 1.0);
            }
        }
    }

    #[test]
    fn single_emitter_node_and_antinode() {
        let node = coupling_matrices(&EmitterArray::new(vec![0.5], 1.0, 0.0).unwrap());
        assert_eq!(node.j[0][0], 0.0);
        assert_eq!(node.gamma[0][0], 0.0);
        let anti = coupling_matrices(&EmitterArray::new(vec![0.25], 1.0, 0.0).unwrap());
        assert_eq!(anti.gamma[0][0], 1.0);
        assert!(anti.j[0][0].abs() < 1e-15);
    }

    #[test]
    fn jump_operator_mirror() {
        let (s, rate) = jump_operator(&EmitterArray::mirror());
        assert_eq!(rate, 3.0);
        let expect = hilbert::collective_raising(&modes::b()).adjoint();
        assert!((s - expect).norm() < 1e-15);
    }

    #[test]
    fn jump_operator_dark_configuration() {
        let arr = EmitterArray::new(vec![0.5, 1.0, 1.5], 1.0, 0.0).unwrap();
        let (s, rate) = jump_operator(&arr);
        assert_eq!(rate, 0.0);
        assert_eq!(s.norm(), 0.0);
    }

    #[test]
    fn dark_states_annihilated() {
        let (s, _) = jump_operator(&EmitterArray::mirror());
        assert!((&s * hilbert::ket_d()).norm() < 1e-15);
        assert!((&s * hilbert::ket_a()).norm() < 1e-15);
    }

    #[test]
    fn two_excitation_structure_at_large_j() {
        let j = 10.0;
        let cb = collective_basis(&EmitterArray::mirror(), j).unwrap();
        let sd = cb.state(TwoExcitationLabel::SD);
        assert!((sd.shift + j).abs() < 1e-9);
        assert!((sd.decay - 1.0).abs() < 1e-9);
        let l1 = cb.state(TwoExcitationLabel::Lambda1);
        let l2 = cb.state(TwoExcitationLabel::Lambda2);
        // frozen from an independent diagonalization of the same 3×3 block
        assert!((l1.shift + 19.992_6).abs() < 1e-3, "{}", l1.shift);
        assert!((l2.shift - 9.992_6).abs() < 1e-3, "{}", l2.shift);
        assert!((l1.decay - 4.0 / 3.0).abs() < 2e-3, "{}", l1.decay);
        assert!((l2.decay - 11.0 / 3.0).abs() < 2e-3, "{}", l2.decay);
        let [x1, x2] = cb.xi_sq();
        assert!((x1 - 0.33399).abs() < 1e-4, "{x1}");
        assert!((x2 - 0.66601).abs() < 1e-4, "{x2}");
        assert!((x1 + x2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn emitted_field_mirror_is_bright_amplitude() {
        let b = 0.3;
        let row: Vec<C64> = modes::b().iter().map(|x| x * b).collect();
        let wp = emitted_field(0.0, 0.1, &[row.clone(), row], &EmitterArray::mirror()).unwrap();
        assert!((wp.samples[0].re - 3f64.sqrt() * b).abs() < 1e-15);
        let bad = emitted_field(0.0, 0.1, &[vec![C64::new(0.0, 0.0); 2]], &EmitterArray::mirror());
        assert!(bad.is_err());
    }
}
