//! Gates inside the decoherence-free subspace {|D⟩, |G⟩, |A⟩}.
//!
//! Rotation angles follow the cos θ convention with T = θ/Ω, so the y-axis
//! π/2 rotation is R_DG(θ = π/4, φ = −π/2).

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    evolve_nonhermitian, nonhermitian_hamiltonian, schedule_propagator, ControlSchedule, ControlSegment, Integration,
};
use crate::error::{invalid, Error, Result};
use crate::geometry::{collective_basis, EmitterArray};
use crate::hilbert::{self, modes};
use crate::linalg::{c, eig_general, left_eigenvectors, trace, CMat, CVec, C64, I, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    #[serde(rename = "R_DG")]
    RDg,
    #[serde(rename = "R_GA")]
    RGa,
    #[serde(rename = "P_A")]
    PA,
    #[serde(rename = "P_D")]
    PD,
    #[serde(rename = "P_G")]
    PG,
}

fn yes() -> bool {
    true
}

/// `detuning` is the global Δ used by P_D (defaults to J, or 1 when J = 0);
/// `drive_detuning` is ω_L − ω0 for P_G.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub kind: GateKind,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub j: f64,
    #[serde(default)]
    pub detuning: Option<f64>,
    #[serde(default)]
    pub drive_detuning: Option<f64>,
    #[serde(default = "yes")]
    pub stark_compensation: bool,
}

impl GateSpec {
    fn base(kind: GateKind) -> Self {
        GateSpec { kind, theta: 0.0, phi: 0.0, omega: 0.0, j: 0.0, detuning: None, drive_detuning: None, stark_compensation: true }
    }

    pub fn r_dg(theta: f64, phi: f64, omega: f64, j: f64) -> Self {
        GateSpec { theta, phi, omega, j, ..Self::base(GateKind::RDg) }
    }

    pub fn y_half_pi(omega: f64, j: f64) -> Self {
        Self::r_dg(PI / 4.0, -PI / 2.0, omega, j)
    }

    /// Maps |D⟩ → |G⟩.
    pub fn y_pi(omega: f64, j: f64) -> Self {
        Self::r_dg(PI / 2.0, -PI / 2.0, omega, j)
    }

    pub fn r_ga(theta: f64, phi: f64, omega: f64, j: f64) -> Self {
        GateSpec { theta, phi, omega, j, ..Self::base(GateKind::RGa) }
    }

    pub fn p_a(phi: f64, j: f64) -> Self {
        GateSpec { phi, j, ..Self::base(GateKind::PA) }
    }

    pub fn p_d(phi: f64, detuning: f64) -> Self {
        GateSpec { phi, detuning: Some(detuning), ..Self::base(GateKind::PD) }
    }

    pub fn p_g(phi: f64, omega: f64, drive_detuning: f64) -> Self {
        GateSpec { phi, omega, drive_detuning: Some(drive_detuning), ..Self::base(GateKind::PG) }
    }

    pub fn with_compensation(mut self, on: bool) -> Self {
        self.stark_compensation = on;
        self
    }

    fn pd_detuning(&self) -> f64 {
        self.detuning.unwrap_or(if self.j != 0.0 { self.j.abs() } else { 1.0 })
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.theta, self.phi, self.omega, self.j];
        if vals.iter().any(|x| !x.is_finite()) {
            return invalid("gate parameters must be finite");
        }
        if self.omega < 0.0 {
            return invalid("drive amplitude Ω must be ≥ 0");
        }
        match self.kind {
            GateKind::RDg | GateKind::RGa => {
                if self.theta != 0.0 && !(self.omega > 0.0) {
                    return invalid("rotations need Ω > 0");
                }
                if self.theta < 0.0 {
                    return invalid("rotation angle θ must be ≥ 0 (use φ for the axis)");
                }
            }
            GateKind::PA => {
                if self.phi != 0.0 && self.j == 0.0 {
                    return invalid("P_A needs J ≠ 0");
                }
            }
            GateKind::PD => {
                let d = self.pd_detuning();
                if !(d > 0.0) || !d.is_finite() {
                    return invalid("P_D needs a detuning Δ > 0");
                }
            }
            GateKind::PG => {
                let dw = self.drive_detuning.unwrap_or(0.0);
                if self.phi != 0.0 && (!(self.omega > 0.0) || dw == 0.0) {
                    return invalid("P_G needs Ω > 0 and a drive detuning");
                }
                if self.phi * dw < 0.0 {
                    return invalid("P_G phase φ = Ω²T/δω must share the sign of δω");
                }
            }
        }
        Ok(())
    }

    /// Gate time T from the defining relation of each kind.
    pub fn duration(&self) -> f64 {
        match self.kind {
            GateKind::RDg | GateKind::RGa => {
                if self.theta == 0.0 {
                    0.0
                } else {
                    self.theta / self.omega
                }
            }
            GateKind::PA => {
                if self.phi == 0.0 {
                    0.0
                } else {
                    (self.phi * self.j.signum()).rem_euclid(TAU) / (2.0 * self.j.abs())
                }
            }
            GateKind::PD => self.phi.rem_euclid(TAU) / self.pd_detuning(),
            GateKind::PG => {
                if self.phi == 0.0 {
                    0.0
                } else {
                    self.phi * self.drive_detuning.unwrap_or(0.0) / (self.omega * self.omega)
                }
            }
        }
    }

    /// Dimension of the block the fidelity is computed on.
    pub fn block_dim(&self) -> usize {
        if self.kind == GateKind::RDg {
            2
        } else {
            3
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriveTarget {
    D,
    A,
    B,
}

/// Per-emitter Rabi amplitudes with collective projection Ωe^{iφ} on `target` only.
pub fn drive_profile(target: DriveTarget, omega: f64, phi: f64) -> [C64; 3] {
    let amp = C64::from_polar(omega, phi);
    let m = match target {
        DriveTarget::D => modes::d(),
        DriveTarget::A => modes::a(),
        DriveTarget::B => modes::b(),
    };
    m.map(|x| x * amp)
}

/// Ideal 3×3 matrix on (|D⟩, |G⟩, |A⟩).
pub fn ideal_gate(spec: &GateSpec) -> CMat {
    let t = spec.duration();
    let (cs, sn) = (spec.theta.cos(), spec.theta.sin());
    let e = |x: f64| C64::from_polar(1.0, x);
    match spec.kind {
        GateKind::RDg => CMat::from_row_slice(3, 3, &[
            c(cs, 0.0), -I * e(spec.phi) * sn, ZERO,
            -I * e(-spec.phi) * sn, c(cs, 0.0), ZERO,
            ZERO, ZERO, e(2.0 * spec.j * t),
        ]),
        GateKind::RGa => CMat::from_row_slice(3, 3, &[
            e(-2.0 * spec.j * t), ZERO, ZERO,
            ZERO, c(cs, 0.0), -I * e(spec.phi) * sn,
            ZERO, -I * e(-spec.phi) * sn, c(cs, 0.0),
        ]),
        GateKind::PA => CMat::from_diagonal(&CVec::from_vec(vec![ONE, ONE, e(spec.phi)])),
        GateKind::PD => CMat::from_diagonal(&CVec::from_vec(vec![e(-spec.phi), ONE, e(-spec.phi)])),
        GateKind::PG => CMat::from_diagonal(&CVec::from_vec(vec![e(-spec.phi / 3.0), e(-spec.phi), e(-spec.phi / 3.0)])),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorModel {
    pub gamma_d: f64,
    pub delta_d: f64,
    pub f_leading: f64,
    pub xi_sq: [f64; 2],
}

/// Adiabatic-elimination estimate of the D-state decay γ_d, shift δ_d and leading fidelity.
pub fn predicted_error_model(omega: f64, j: f64, gamma0: f64) -> Result<ErrorModel> {
    if !(omega > 0.0) {
        return invalid("error model needs Ω > 0");
    }
    let array = EmitterArray::new(vec![1.25, 2.25, 3.25], gamma0, 0.0)?;
    let cb = collective_basis(&array, j)?;
    let [x1, x2] = cb.xi_sq();
    let g0 = gamma0;
    let w2 = omega * omega;
    let den1 = 4.0 * j * j + g0 * g0 / 4.0;
    let den2 = j * j + 4.0 * g0 * g0;
    let gamma_d = w2 * g0 * (x1 / den1 + 4.0 * x2 / den2);
    let delta_d = w2 * j * (2.0 * x1 / den1 - x2 / den2);
    let f_leading = 1.0 - PI * gamma_d / (12.0 * omega);
    Ok(ErrorModel { gamma_d, delta_d, f_leading, xi_sq: [x1, x2] })
}

/// Second-order (complex) energy shift of a single-excitation dark state `ket`
/// with energy `e_ket`, induced by the raising part of the drive through the
/// non-Hermitian two-excitation manifold. Uses biorthogonal left/right eigenvectors.
pub fn two_excitation_shift(array: &EmitterArray, base: &ControlSegment, drive: &[C64; 3], ket: &CVec, e_ket: C64) -> Result<C64> {
    let h0 = nonhermitian_hamiltonian(array, base, 0.0)?;
    const TWO: [usize; 3] = [0b011, 0b101, 0b110];
    let sub = CMat::from_fn(3, 3, |r, cc| h0[(TWO[r], TWO[cc])]);
    let (vals, right) = eig_general(&sub)?;
    let left = left_eigenvectors(&right)?;
    let up = hilbert::collective_raising(drive) * ket;
    let up2 = CVec::from_fn(3, |r, _| up[TWO[r]]);
    let mut shift = ZERO;
    for k in 0..3 {
        let rk = right.column(k);
        let lk = left.row(k);
        let bra = up2.dotc(&rk);
        let ket_part = (lk * &up2)[(0, 0)];
        shift += bra * ket_part / (e_ket - vals[k]);
    }
    Ok(shift)
}

fn nominal_array(gamma0: f64) -> Result<EmitterArray> {
    EmitterArray::new(vec![1.25, 2.25, 3.25], gamma0, 0.0)
}

/// Control program realizing `spec` on the nominal mirror configuration.
pub fn gate_schedule(spec: &GateSpec, gamma0: f64) -> Result<ControlSchedule> {
    spec.validate()?;
    let t = spec.duration();
    if t == 0.0 {
        return Ok(ControlSchedule::default());
    }
    let j = spec.j;
    let seg = match spec.kind {
        GateKind::RDg => {
            let delta = if spec.stark_compensation {
                -predicted_error_model(spec.omega, j, gamma0)?.delta_d
            } else {
                0.0
            };
            ControlSegment::driven(t, delta, -j, j, drive_profile(DriveTarget::D, spec.omega, spec.phi).to_vec())
        }
        GateKind::RGa => {
            // the drive phase is reversed so the propagator matches the matrix convention of ideal_gate
            let drive = drive_profile(DriveTarget::A, spec.omega, -spec.phi);
            let mut delta = 2.0 * j;
            if spec.stark_compensation {
                let base = ControlSegment::idle(t, delta, -j, j);
                let shift = two_excitation_shift(&nominal_array(gamma0)?, &base, &drive, &hilbert::ket_a(), ZERO)?;
                delta -= shift.re;
            }
            ControlSegment::driven(t, delta, -j, j, drive.to_vec())
        }
        GateKind::PA => ControlSegment::idle(t, 0.0, -j, j),
        GateKind::PD => ControlSegment::idle(t, spec.pd_detuning(), 0.0, 0.0),
        GateKind::PG => {
            let dw = spec.drive_detuning.unwrap_or(0.0);
            if dw.abs() < 10.0 * spec.omega.max(gamma0) {
                return Err(Error::GateRegime(format!(
                    "P_G needs |δω| ≥ 10·max(Ω, γ0); got δω = {dw}, Ω = {}",
                    spec.omega
                )));
            }
            let om = spec.omega / 3f64.sqrt();
            ControlSegment {
                duration: t,
                delta: 0.0,
                delta2: 0.0,
                j: 0.0,
                omega: vec![c(om, 0.0); 3],
                drive_detuning: dw,
            }
        }
    };
    Ok(ControlSchedule::new(vec![seg]))
}

/// F = (1 + |tr(U†Ũ)|²/d)/(d + 1).
pub fn avg_gate_fidelity(u: &CMat, utilde: &CMat, d: usize) -> Result<f64> {
    if u.shape() != (d, d) || utilde.shape() != (d, d) {
        return invalid(format!("fidelity needs two {d}×{d} matrices, got {:?} and {:?}", u.shape(), utilde.shape()));
    }
    let tr = trace(&(u.adjoint() * utilde));
    Ok((1.0 + tr.norm_sqr() / d as f64) / (d as f64 + 1.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Propagation {
    /// exact segment propagators (matrix exponential of H_nH)
    #[default]
    Exact,
    /// fixed-step RK4 integration
    Rk4 { dt: f64 },
}

#[derive(Clone, Debug)]
pub struct GateResult {
    pub spec: GateSpec,
    pub duration: f64,
    pub ideal: CMat,
    pub achieved: CMat,
    /// full 8×8 propagator on the emitter register
    pub propagator: CMat,
    pub fidelity: f64,
    pub leakage: f64,
    pub block_dim: usize,
}

impl GateResult {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.fidelity
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.spec.kind,
            "spec": self.spec,
            "duration": self.duration,
            "fidelity": self.fidelity,
            "infidelity": self.infidelity(),
            "leakage": self.leakage,
            "block_dim": self.block_dim,
            "ideal": matrix_json(&self.ideal),
            "achieved": matrix_json(&self.achieved),
        })
    }
}

pub fn matrix_json(m: &CMat) -> serde_json::Value {
    let rows: Vec<Vec<[f64; 2]>> =
        (0..m.nrows()).map(|r| (0..m.ncols()).map(|cc| [m[(r, cc)].re, m[(r, cc)].im]).collect()).collect();
    serde_json::json!(rows)
}

/// Achieved DFS map and fidelity of `spec` on the nominal mirror array with loss γ′.
pub fn simulate_gate(spec: &GateSpec, gamma_prime: f64, prop: Propagation) -> Result<GateResult> {
    let array = EmitterArray::mirror().with_gamma_prime(gamma_prime);
    simulate_gate_on(spec, &array, prop)
}

/// As `simulate_gate`, with controls tuned to the nominal configuration but the
/// physics of `array` (perturbed positions and losses).
pub fn simulate_gate_on(spec: &GateSpec, array: &EmitterArray, prop: Propagation) -> Result<GateResult> {
    array.validate()?;
    if array.n() != 3 {
        return invalid("DFS gates need three emitters");
    }
    let sched = gate_schedule(spec, array.gamma0)?;
    let g0 = array.gamma0;
    if matches!(spec.kind, GateKind::RDg | GateKind::RGa) && spec.omega.powi(2) > 0.1 * (g0 * g0 + spec.j * spec.j) {
        log::warn!("Ω = {} is outside the weak-drive regime Ω² ≪ γ0² + J²", spec.omega);
    }
    let u = match prop {
        Propagation::Exact => schedule_propagator(array, &sched)?,
        Propagation::Rk4 { dt } => {
            let opts = Integration { dt, stride: usize::MAX };
            let mut cols = Vec::with_capacity(8);
            for k in 0..8 {
                let mut e = CVec::zeros(8);
                e[k] = ONE;
                if sched.segments.is_empty() {
                    cols.push(e);
                } else {
                    cols.push(evolve_nonhermitian(&e, array, &sched, &opts)?.last().clone());
                }
            }
            CMat::from_columns(&cols)
        }
    };
    let basis = hilbert::dfs_basis();
    let achieved = basis.adjoint() * &u * &basis;
    let ideal = ideal_gate(spec);
    let d = spec.block_dim();
    let mut leakage: f64 = 0.0;
    for j in 0..d {
        let full = &u * basis.column(j);
        let inside: f64 = (0..3).map(|i| achieved[(i, j)].norm_sqr()).sum();
        leakage = leakage.max(full.norm_squared() - inside);
    }
    if leakage > 0.5 {
        return Err(Error::GateRegime(format!("{leakage:.3} of the population left the DFS; reduce Ω")));
    }
    let fidelity = avg_gate_fidelity(
        &ideal.view((0, 0), (d, d)).into_owned(),
        &achieved.view((0, 0), (d, d)).into_owned(),
        d,
    )?;
    Ok(GateResult { spec: spec.clone(), duration: sched.total_duration(), ideal, achieved, propagator: u, fidelity, leakage, block_dim: d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    #[test]
    fn drive_profiles() {
        let d = drive_profile(DriveTarget::D, 1.0, 0.0);
        let s = 1.0 / 2f64.sqrt();
        assert!((d[0] - c(s, 0.0)).norm() < 1e-15 && d[1].norm() == 0.0 && (d[2] + c(s, 0.0)).norm() < 1e-15);
        let a = drive_profile(DriveTarget::A, 1.0, PI);
        let r6 = 1.0 / 6f64.sqrt();
        assert!((a[0] + c(r6, 0.0)).norm() < 1e-15 && (a[1] - c(2.0 * r6, 0.0)).norm() < 1e-15);
        let b = drive_profile(DriveTarget::B, 1.0, 0.0);
        let dot = |x: &[C64; 3], y: &[C64; 3]| x.iter().zip(y).map(|(p, q)| p.conj() * q).sum::<C64>();
        assert!(dot(&b, &d).norm() < 1e-15 && dot(&b, &drive_profile(DriveTarget::A, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn y_half_pi_action() {
        let u = ideal_gate(&GateSpec::y_half_pi(0.1, 10.0));
        let s = 1.0 / 2f64.sqrt();
        // |G⟩ → (|G⟩ − |D⟩)/√2 and |D⟩ → (|D⟩ + |G⟩)/√2
        assert!((u[(0, 1)] - c(-s, 0.0)).norm() < 1e-15 && (u[(1, 1)] - c(s, 0.0)).norm() < 1e-15);
        assert!((u[(0, 0)] - c(s, 0.0)).norm() < 1e-15 && (u[(1, 0)] - c(s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn identity_rotation_and_phase_gates() {
        let u = ideal_gate(&GateSpec::r_dg(0.0, 0.3, 0.1, 10.0));
        assert!(max_abs_diff(&u, &CMat::identity(3, 3)) < 1e-15);
        let phi = 0.9;
        let pd = ideal_gate(&GateSpec::p_d(phi, 2.0));
        assert!((pd[(0, 0)] - C64::from_polar(1.0, -phi)).norm() < 1e-15);
        assert!((pd[(1, 1)] - ONE).norm() < 1e-15);
        assert!((pd[(2, 2)] - C64::from_polar(1.0, -phi)).norm() < 1e-15);
    }

    #[test]
    fn fidelity_formula() {
        let id = CMat::identity(2, 2);
        assert!((avg_gate_fidelity(&id, &id, 2).unwrap() - 1.0).abs() < 1e-15);
        let z = CMat::from_diagonal(&CVec::from_vec(vec![ONE, -ONE]));
        assert!((avg_gate_fidelity(&id, &z, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let u4 = CMat::identity(4, 4);
        assert!((avg_gate_fidelity(&u4, &CMat::zeros(4, 4), 4).unwrap() - 0.2).abs() < 1e-15);
        assert!(avg_gate_fidelity(&u4, &id, 4).is_err());
    }

    #[test]
    fn error_model_limits() {
        let m = predicted_error_model(0.05, 10.0, 1.0).unwrap();
        assert!(m.gamma_d > 0.0);
        let far = predicted_error_model(0.05, 1e5, 1.0).unwrap();
        assert!(far.gamma_d < 1e-12 && far.delta_d.abs() < 1e-7 && (far.f_leading - 1.0).abs() < 1e-10);
    }

    #[test]
    fn undriven_gate_is_identity() {
        let r = simulate_gate(&GateSpec::r_dg(0.0, 0.0, 0.0, 10.0), 0.0, Propagation::Exact).unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simulated_phase_gates() {
        let pa = simulate_gate(&GateSpec::p_a(1.1, 10.0), 0.0, Propagation::Exact).unwrap();
        assert!(1.0 - pa.fidelity < 1e-12, "{}", pa.fidelity);
        let pd = simulate_gate(&GateSpec::p_d(2.3, 5.0), 0.0, Propagation::Exact).unwrap();
        assert!(1.0 - pd.fidelity < 1e-12, "{}", pd.fidelity);
        let pg = simulate_gate(&GateSpec::p_g(PI / 2.0, 20.0, 2000.0), 0.0, Propagation::Exact).unwrap();
        assert!(1.0 - pg.fidelity < 1e-2, "{}", pg.fidelity);
    }

    #[test]
    fn p_g_regime_guard() {
        let r = simulate_gate(&GateSpec::p_g(0.5, 1.0, 5.0), 0.0, Propagation::Exact);
        assert!(matches!(r, Err(Error::GateRegime(_))));
    }

    #[test]
    fn exact_and_rk4_agree() {
        let spec = GateSpec::y_half_pi(0.5, 5.0);
        let a = simulate_gate(&spec, 0.01, Propagation::Exact).unwrap();
        let b = simulate_gate(&spec, 0.01, Propagation::Rk4 { dt: 5e-4 }).unwrap();
        let diff = max_abs_diff(&a.achieved, &b.achieved);
        assert!(diff < 1e-9, "{diff:e}");
    }
}
