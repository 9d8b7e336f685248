//! Reflection of a single photon off the array and the resulting light–matter CZ gate.
//!
//! Frequencies ω are measured from the |G⟩↔|B⟩ resonance at the working point Δ = −J.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, C64, ONE};
use crate::special::{erfcx, erfcx_complex};
use crate::wavepacket::{PacketShape, Wavepacket};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatterBranch {
    G,
    D,
}

/// Ground-state reflection, resonant with the bright state: r_G(0) = −1.
pub fn reflection_g(omega: f64, _j: f64, gamma0: f64) -> C64 {
    ONE - c(6.0 * gamma0, 0.0) / c(3.0 * gamma0, 2.0 * omega)
}

/// Reflection with the matter qubit in |D⟩, detuned by 2J from the two-excitation resonance.
pub fn reflection_d(omega: f64, j: f64, gamma0: f64) -> C64 {
    ONE - c(2.0 * gamma0, 0.0) / c(gamma0, 2.0 * (omega - 2.0 * j))
}

pub fn reflection(branch: MatterBranch, omega: f64, j: f64, gamma0: f64) -> C64 {
    match branch {
        MatterBranch::G => reflection_g(omega, j, gamma0),
        MatterBranch::D => reflection_d(omega, j, gamma0),
    }
}

pub const PADDING: usize = 8;
pub const MAX_DT: f64 = 0.05;

/// Scattered packet on the incoming grid, extended by zero padding to a power of two.
pub fn scatter(incoming: &Wavepacket, branch: MatterBranch, j: f64, gamma0: f64) -> Result<Wavepacket> {
    if incoming.dt * gamma0 > MAX_DT {
        return Err(Error::SpectralAccuracy(format!(
            "grid step {} is coarser than {MAX_DT}/γ0",
            incoming.dt
        )));
    }
    if incoming.norm() > 1.0 + 1e-6 {
        return invalid("incoming packet norm exceeds 1");
    }
    let p = incoming.padded(PADDING);
    let n = p.len();
    let mut buf = p.samples.clone();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let dnu = 2.0 * PI / (n as f64 * incoming.dt);
    for (k, z) in buf.iter_mut().enumerate() {
        let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        // the forward FFT kernel e^{−iνt} corresponds to ω = −ν
        *z *= reflection(branch, -kk * dnu, j, gamma0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
    Ok(Wavepacket::new(incoming.t0, incoming.dt, buf)?.with_shape(PacketShape::Numeric))
}

/// O_λ = ∫ψ*_in ψ_out dt for the normalized incoming packet.
pub fn scattering_overlap(incoming: &Wavepacket, branch: MatterBranch, j: f64, gamma0: f64) -> Result<C64> {
    let x = incoming.normalized()?;
    let y = scatter(&x, branch, j, gamma0)?;
    x.overlap(&y)
}

pub fn cz_fidelity_from_overlaps(o_g: C64, o_d: C64) -> f64 {
    0.2 + (c(2.0, 0.0) - o_g + o_d).norm_sqr() / 20.0
}

/// Overlaps for a Gaussian of width τ (e^{−t²/2τ²} amplitude).
pub fn gaussian_overlaps(tau: f64, j: f64, gamma0: f64) -> (C64, C64) {
    let x = 3.0 * gamma0 * tau;
    let o_g = 1.0 - PI.sqrt() * x * erfcx(x / 2.0);
    let z = c(gamma0 * tau / 2.0, -2.0 * j * tau);
    let o_d = ONE - erfcx_complex(z) * (PI.sqrt() * gamma0 * tau);
    (c(o_g, 0.0), o_d)
}

/// Overlaps for the packet emitted under a constant coupling J̃.
pub fn constant_coupling_overlaps(j_tilde: f64, j: f64, gamma0: f64) -> (C64, C64) {
    let (jt, jj) = (j_tilde / gamma0, j / gamma0);
    let q = 4.0 * jt * jt;
    let o_g = -(1.0 - q) / (1.0 + q);
    let m = c(1.0, -jj);
    let num = c(1.0, 4.0 * jj) * m - c(18.0 * jt * jt, 0.0);
    let den = c(1.0, -4.0 * jj) * m + c(18.0 * jt * jt, 0.0);
    (c(o_g, 0.0), -num / den)
}

#[derive(Clone, Debug, Serialize)]
pub struct CzResult {
    pub o_g: C64,
    pub o_d: C64,
    pub fidelity: f64,
    pub closed_form: Option<ClosedForm>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ClosedForm {
    pub o_g: C64,
    pub o_d: C64,
    pub fidelity: f64,
}

impl CzResult {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.fidelity
    }
}

pub fn cz_fidelity(incoming: &Wavepacket, j: f64, gamma0: f64) -> Result<CzResult> {
    let o_g = scattering_overlap(incoming, MatterBranch::G, j, gamma0)?;
    let o_d = scattering_overlap(incoming, MatterBranch::D, j, gamma0)?;
    let closed = match incoming.shape {
        PacketShape::Gaussian { tau, .. } => Some(gaussian_overlaps(tau, j, gamma0)),
        PacketShape::ConstantCoupling { j_tilde } => Some(constant_coupling_overlaps(j_tilde, j, gamma0)),
        PacketShape::Numeric => None,
    }
    .map(|(g, d)| ClosedForm { o_g: g, o_d: d, fidelity: cz_fidelity_from_overlaps(g, d) });
    Ok(CzResult { o_g, o_d, fidelity: cz_fidelity_from_overlaps(o_g, o_d), closed_form: closed })
}

/// Infidelity of a monochromatic photon, where both overlaps reduce to r_λ(0).
pub fn zero_bandwidth_infidelity(j: f64, gamma0: f64) -> f64 {
    1.0 - cz_fidelity_from_overlaps(reflection_g(0.0, j, gamma0), reflection_d(0.0, j, gamma0))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PacketStats {
    pub t_av: f64,
    pub tau: f64,
    pub o_g: C64,
    pub o_d: C64,
}

/// Mean emission time, second-moment width and CZ overlaps of the constant-J̃ packet.
pub fn constj_packet_stats(j_tilde: f64, j: f64, gamma0: f64) -> Result<PacketStats> {
    let limit = gamma0 / 32f64.sqrt();
    if !(j_tilde > 0.0) || j_tilde >= limit {
        return invalid(format!("J̃ must lie in (0, γ0/√32 = {limit:.6}), got {j_tilde}"));
    }
    let kappa = (9.0 * gamma0 * gamma0 / 16.0 - 18.0 * j_tilde * j_tilde).sqrt();
    let (s1, s2) = (0.75 * gamma0 - kappa, 0.75 * gamma0 + kappa);
    let moment = |n: i32| {
        let f = (1..=n).product::<i32>() as f64;
        f * ((2.0 * s1).powi(-(n + 1)) - 2.0 * (s1 + s2).powi(-(n + 1)) + (2.0 * s2).powi(-(n + 1)))
    };
    let (m0, m1, m2) = (moment(0), moment(1), moment(2));
    let t_av = m1 / m0;
    let tau = (m2 / m0 - t_av * t_av).sqrt();
    let (o_g, o_d) = constant_coupling_overlaps(j_tilde, j, gamma0);
    Ok(PacketStats { t_av, tau, o_g, o_d })
}

/// The J̃ whose packet has second-moment bandwidth 1/τ = `b`, by bisection.
pub fn j_tilde_for_bandwidth(b: f64, gamma0: f64) -> Result<f64> {
    let bw = |jt: f64| constj_packet_stats(jt, 0.0, gamma0).map(|s| 1.0 / s.tau);
    let (mut lo, mut hi) = (1e-6 * gamma0, gamma0 / 32f64.sqrt() * (1.0 - 1e-9));
    if !(b > bw(lo)?) || !(b < bw(hi)?) {
        return invalid(format!("bandwidth {b} is outside the constant-coupling range"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bw(mid)? < b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Phase factor e^{iφ_D} of the |D⟩ branch for a monochromatic photon.
pub fn d_phase(j: f64, gamma0: f64) -> C64 {
    reflection_d(0.0, j, gamma0)
}
