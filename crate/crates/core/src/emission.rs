//! Conditional photon emission from |A⟩ and the CPE gate built around it.
//!
//! Emission runs at Δ = −4J, δ = 8J where the single-excitation sector reduces to
//! ḋ = 4iJd, ȧ = 3√2iJb, ḃ = −(3γ0/2)b + 3√2iJa and ψ(t) = √(3γ0)·b(t).

use std::f64::consts::PI;

use serde::Serialize;

use crate::dynamics::{segment_propagator, ControlSegment};
use crate::error::{invalid, Error, Result};
use crate::gates::{simulate_gate, GateSpec, Propagation};
use crate::geometry::{emitted_field, EmitterArray};
use crate::linalg::{c, CMat, CVec, C64, I, ONE, ZERO};
use crate::ode::rk4_step;
use crate::special::erfcx;
use crate::wavepacket::Wavepacket;

const SQ18: f64 = 4.242640687119285; // 3√2

/// Piecewise-constant exchange: `j[k]` acts on [k·dt, (k+1)·dt).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingSequence {
    pub dt: f64,
    pub j: Vec<f64>,
}

impl CouplingSequence {
    pub fn constant(j: f64, duration: f64, dt: f64) -> Self {
        let n = (duration / dt).round() as usize;
        CouplingSequence { dt, j: vec![j; n] }
    }

    pub fn duration(&self) -> f64 {
        self.j.len() as f64 * self.dt
    }

    /// ∫J dt
    pub fn area(&self) -> f64 {
        self.j.iter().sum::<f64>() * self.dt
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EmissionResult {
    pub d: C64,
    pub a: C64,
    pub b: C64,
    pub wavepacket: Wavepacket,
    /// phase 4∫J acquired by |D⟩ during emission
    pub d_phase: f64,
}

impl EmissionResult {
    pub fn matter_norm(&self) -> f64 {
        self.d.norm_sqr() + self.a.norm_sqr() + self.b.norm_sqr()
    }
}

fn check_initial(d0: C64, a0: C64) -> Result<()> {
    if a0.re.abs() > 1e-12 * a0.norm().max(1.0) {
        return Err(Error::Convention(format!(
            "emission starts from a purely imaginary |A⟩ amplitude; got {a0} (apply a phase gate first)"
        )));
    }
    let n = d0.norm_sqr() + a0.norm_sqr();
    if (n - 1.0).abs() > 1e-9 {
        return invalid(format!("|d0|² + |a0|² must be 1, got {n}"));
    }
    Ok(())
}

/// Emission under a prescribed coupling sequence; γ′ damps every amplitude at γ′/2.
pub fn emit_with_coupling(d0: C64, a0: C64, seq: &CouplingSequence, gamma0: f64, gamma_prime: f64) -> Result<EmissionResult> {
    check_initial(d0, a0)?;
    emit_linear(d0, a0, seq, gamma0, gamma_prime)
}

fn emit_linear(d0: C64, a0: C64, seq: &CouplingSequence, gamma0: f64, gamma_prime: f64) -> Result<EmissionResult> {
    if !(seq.dt > 0.0) || seq.j.iter().any(|x| !x.is_finite()) {
        return invalid("coupling sequence needs dt > 0 and finite values");
    }
    if gamma0 * seq.dt > 1e-2 {
        return Err(Error::IntegrationAccuracy(format!("emission step γ0·dt = {} exceeds 1e-2", gamma0 * seq.dt)));
    }
    let loss = 0.5 * gamma_prime;
    let mut y = [d0, a0, ZERO];
    let mut samples = Vec::with_capacity(seq.j.len() + 1);
    let amp = (3.0 * gamma0).sqrt();
    samples.push(y[2] * amp);
    for &j in &seq.j {
        y = rk4_step(&y, seq.dt, |s| {
            [
                s[0] * c(-loss, 4.0 * j),
                I * (SQ18 * j) * s[2] - s[1] * loss,
                I * (SQ18 * j) * s[1] - s[2] * (1.5 * gamma0 + loss),
            ]
        });
        samples.push(y[2] * amp);
    }
    let wavepacket = Wavepacket::new(0.0, seq.dt, samples)?;
    Ok(EmissionResult { d: y[0], a: y[1], b: y[2], wavepacket, d_phase: 4.0 * seq.area() })
}

pub fn emit_constant_j(d0: C64, a0: C64, j: f64, t_em: f64, dt: f64, gamma0: f64) -> Result<EmissionResult> {
    emit_with_coupling(d0, a0, &CouplingSequence::constant(j, t_em, dt), gamma0, 0.0)
}

/// Inverts the discretized emission equations for the coupling that produces `target`
/// starting from a(0) = −i. The grid of the target fixes dt.
pub fn optimal_coupling_sequence(target: &Wavepacket, gamma0: f64) -> Result<CouplingSequence> {
    let dt = target.dt;
    if target.len() < 2 {
        return invalid("target needs at least two samples");
    }
    let peak = target.samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if target.samples.iter().any(|z| z.im.abs() > 1e-9 * peak.max(1e-300)) {
        return invalid("target wavepacket must be real-valued");
    }
    if target.samples[0].norm() > 1e-6 * peak.max(1e-300) {
        return invalid("target must vanish at t = 0 (b(0) = 0 forces ψ(0) = 0)");
    }
    let sq = (3.0 * gamma0).sqrt();
    // remaining target energy after each sample, for the exhaustion test
    let mut tail = vec![0.0; target.len() + 1];
    for k in (0..target.len()).rev() {
        tail[k] = tail[k + 1] + target.samples[k].norm_sqr() * dt;
    }
    let mut b = 0.0;
    let mut im_a = -1.0;
    let mut j = Vec::with_capacity(target.len() - 1);
    for k in 1..target.len() {
        let num = b * (1.0 - 1.5 * gamma0 * dt) - target.samples[k].re / sq;
        let jk = if im_a > -1e-6 {
            if tail[k] > 1e-8 && num.abs() > 1e-6 {
                return Err(Error::ControlSingularity(format!(
                    "|A⟩ exhausted at t = {:.4} while the target still holds {:.3e} of its energy",
                    target.time(k),
                    tail[k]
                )));
            }
            0.0
        } else {
            num / (SQ18 * dt * im_a)
        };
        if !jk.is_finite() || SQ18 * dt * jk.abs() > 0.5 {
            return Err(Error::ControlSingularity(format!("coupling diverged at t = {:.4}", target.time(k))));
        }
        b = b * (1.0 - 1.5 * gamma0 * dt) - SQ18 * dt * jk * im_a;
        // semi-implicit: uses the updated b
        im_a += SQ18 * dt * jk * b;
        j.push(jk);
    }
    Ok(CouplingSequence { dt, j })
}

/// γ_eff(t) = 2e^{−u²}/(τ√π·erfc(u)), u = (t − t0)/τ, the rate that lets a
/// Gaussian of width τ leave an initially full |A⟩.
pub fn gamma_eff_gaussian(t: f64, tau: f64, t0: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return invalid("τ must be > 0");
    }
    let u = (t - t0) / tau;
    if u < -26.0 {
        return Ok(0.0);
    }
    // erfcx keeps the ratio finite for large u
    Ok(2.0 / (tau * PI.sqrt() * erfcx(u)))
}

/// Adiabatic coupling J(t) = √(γ0γ_eff/24) sampled at step midpoints.
pub fn gaussian_coupling(tau: f64, t0: f64, gamma0: f64, dt: f64, duration: f64) -> Result<CouplingSequence> {
    let n = (duration / dt).round() as usize;
    let j = (0..n)
        .map(|k| Ok((gamma0 * gamma_eff_gaussian((k as f64 + 0.5) * dt, tau, t0)? / 24.0).sqrt()))
        .collect::<Result<Vec<_>>>()?;
    Ok(CouplingSequence { dt, j })
}

/// |∫ψ*_target ψ dt|² with the target normalized.
pub fn overlap_fidelity(target: &Wavepacket, emitted: &Wavepacket) -> Result<f64> {
    Ok(target.normalized()?.overlap(emitted)?.norm_sqr())
}

/// The same emission propagated through the full 8-dim non-Hermitian dynamics on
/// `array`; returns the final register state and the field from `emitted_field`.
pub fn emit_full(array: &EmitterArray, psi0: &CVec, seq: &CouplingSequence) -> Result<(CVec, Wavepacket)> {
    if array.n() != 3 {
        return invalid("full emission needs three emitters");
    }
    let mut psi = psi0.clone();
    let single = [0b001usize, 0b010, 0b100];
    let mut rows = vec![single.iter().map(|&i| psi[i]).collect::<Vec<_>>()];
    let mut cache: Option<(f64, CMat)> = None;
    for &j in &seq.j {
        let u = match &cache {
            Some((jj, u)) if *jj == j => u.clone(),
            _ => {
                let seg = ControlSegment::idle(seq.dt, -4.0 * j, 8.0 * j, j);
                let u = segment_propagator(array, &seg, 0.0)?;
                cache = Some((j, u.clone()));
                u
            }
        };
        psi = u * psi;
        rows.push(single.iter().map(|&i| psi[i]).collect());
    }
    let field = emitted_field(0.0, seq.dt, &rows, array)?;
    Ok((psi, field))
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpeParams {
    pub j_ga: f64,
    pub omega_ga: f64,
    /// rotation parameters of the Y_π used by the disentangling variant
    pub j_y: f64,
    pub omega_y: f64,
    pub gamma_prime: f64,
    pub gamma0: f64,
}

impl Default for CpeParams {
    fn default() -> Self {
        CpeParams { j_ga: 10.0, omega_ga: 0.2, j_y: 10.0, omega_y: 0.2, gamma_prime: 0.0, gamma0: 1.0 }
    }
}

/// Linear map of a CPE gate: rows (|D,0⟩, |G,0⟩, |A,0⟩, |G,1⟩), columns (|D⟩, |G⟩, |A⟩).
#[derive(Clone, Debug)]
pub struct CpeMap {
    pub matrix: CMat,
    pub disentangling: bool,
    pub xi: f64,
    pub t_ga: f64,
    pub t_em: f64,
    pub t_final: f64,
    pub photon_overlap: C64,
    pub emission: EmissionResult,
    pub fidelity: f64,
}

impl CpeMap {
    pub fn total_duration(&self) -> f64 {
        self.t_ga + self.t_em + self.t_final
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "disentangling": self.disentangling,
            "xi": self.xi,
            "t_ga": self.t_ga,
            "t_em": self.t_em,
            "t_final": self.t_final,
            "total_duration": self.total_duration(),
            "photon_overlap": [self.photon_overlap.re, self.photon_overlap.im],
            "fidelity": self.fidelity,
            "matrix": crate::gates::matrix_json(&self.matrix),
        })
    }
}

/// Emission stage as a map on (D, G, A): returns the matter part and the photon row.
fn emission_stage(seq: &CouplingSequence, target: &Wavepacket, p: &CpeParams) -> Result<(CMat, [C64; 3], EmissionResult, C64)> {
    // the equations are linear; −i|A⟩ is simulated and the unit-amplitude response is i times that
    let from_a = emit_linear(ZERO, -I, seq, p.gamma0, p.gamma_prime)?;
    let from_d = emit_linear(ONE, ZERO, seq, p.gamma0, p.gamma_prime)?;
    let ov = target.normalized()?.overlap(&from_a.wavepacket)?;
    let mut m = CMat::zeros(3, 3);
    m[(0, 0)] = from_d.d;
    m[(1, 1)] = ONE;
    m[(2, 2)] = I * from_a.a;
    Ok((m, [ZERO, ZERO, I * ov], from_a, ov))
}

fn cpe_fidelity(matrix: &CMat, disentangling: bool) -> Result<f64> {
    let r0 = if disentangling { 1 } else { 0 };
    let block = CMat::from_row_slice(2, 2, &[matrix[(r0, 0)], matrix[(r0, 1)], matrix[(3, 0)], matrix[(3, 1)]]);
    crate::gates::avg_gate_fidelity(&CMat::identity(2, 2), &block, 2)
}

/// CPE gate: R_GA(π/2, 0), emission shaped to `target`, then P_D(ξ) (standard) or,
/// for the disentangling variant, R_GA, P_A, Y_π and emission so both branches end in |G⟩.
pub fn cpe_map(target: &Wavepacket, p: &CpeParams, disentangling: bool) -> Result<CpeMap> {
    let seq = optimal_coupling_sequence(target, p.gamma0)?;
    cpe_map_with(&seq, target, p, disentangling)
}

pub fn cpe_map_with(seq: &CouplingSequence, target: &Wavepacket, p: &CpeParams, disentangling: bool) -> Result<CpeMap> {
    let prop = Propagation::Exact;
    let ga = simulate_gate(&GateSpec::r_ga(PI / 2.0, 0.0, p.omega_ga, p.j_ga), p.gamma_prime, prop)?;
    let (e, photon, emission, ov) = emission_stage(seq, target, p)?;
    let t_ga = ga.duration;
    let t_em = seq.duration();
    let mut matrix = CMat::zeros(4, 3);
    let (xi, t_final) = if !disentangling {
        let xi = (-2.0 * p.j_ga * t_ga + emission.d_phase).rem_euclid(2.0 * PI);
        let pd = simulate_gate(&GateSpec::p_d(xi, p.j_ga.abs().max(1.0)), p.gamma_prime, prop)?;
        let before = &e * &ga.achieved;
        let top = &pd.achieved * &before;
        let ph = (pd.achieved.row(1) * CVec::from_column_slice(&[ZERO, ONE, ZERO]))[(0, 0)];
        for col in 0..3 {
            for r in 0..3 {
                matrix[(r, col)] = top[(r, col)];
            }
            let p1: C64 = (0..3).map(|k| photon[k] * ga.achieved[(k, col)]).sum();
            matrix[(3, col)] = ph * p1;
        }
        (xi, pd.duration)
    } else {
        let y = simulate_gate(&GateSpec::y_pi(p.omega_y, p.j_y), p.gamma_prime, prop)?;
        let phi_c = -2.0 * p.j_ga * t_ga - 2.0 * p.j_y * y.duration;
        let pa = simulate_gate(&GateSpec::p_a(phi_c, p.j_ga), p.gamma_prime, prop)?;
        let pre = &y.achieved * &pa.achieved * &ga.achieved;
        let top = &e * &pre;
        for col in 0..3 {
            for r in 0..3 {
                matrix[(r, col)] = top[(r, col)];
            }
            matrix[(3, col)] = (0..3).map(|k| photon[k] * pre[(k, col)]).sum();
        }
        // P_A and Y_π happen before emission; their time is reported as the final stage
        (phi_c.rem_euclid(2.0 * PI), pa.duration + y.duration)
    };
    let fidelity = cpe_fidelity(&matrix, disentangling)?;
    Ok(CpeMap { matrix, disentangling, xi, t_ga, t_em, t_final, photon_overlap: ov, emission, fidelity })
}
