//! Master-equation and non-Hermitian evolution of the emitter register.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{coupling_matrices, jump_operator, EmitterArray};
use crate::hilbert;
use crate::io::fmt_num;
use crate::linalg::{c, expm, kron, trace, unvectorize, vectorize, CMat, CVec, C64, I};
use crate::ode::{rk4_step, step_count};

/// One piecewise-constant stretch of the control program. `delta2` is the extra
/// detuning on the middle emitter, `omega` the per-emitter Rabi amplitudes
/// (empty means undriven), `drive_detuning` is ω_L − ω0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSegment {
    pub duration: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub delta2: f64,
    #[serde(default)]
    pub j: f64,
    #[serde(default)]
    pub omega: Vec<C64>,
    #[serde(default)]
    pub drive_detuning: f64,
}

impl ControlSegment {
    pub fn idle(duration: f64, delta: f64, delta2: f64, j: f64) -> Self {
        ControlSegment { duration, delta, delta2, j, omega: Vec::new(), drive_detuning: 0.0 }
    }

    pub fn driven(duration: f64, delta: f64, delta2: f64, j: f64, omega: Vec<C64>) -> Self {
        ControlSegment { duration, delta, delta2, j, omega, drive_detuning: 0.0 }
    }

    fn validate(&self, n: usize) -> Result<()> {
        self.validate_values(n)?;
        if !(self.duration > 0.0) {
            return invalid("control segment duration must be > 0");
        }
        Ok(())
    }

    fn validate_values(&self, n: usize) -> Result<()> {
        let finite = [self.duration, self.delta, self.delta2, self.j, self.drive_detuning]
            .iter()
            .all(|x| x.is_finite())
            && self.omega.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return invalid("control segment values must be finite");
        }
        if !self.omega.is_empty() && self.omega.len() != n {
            return invalid(format!("{} Rabi amplitudes for {n} emitters", self.omega.len()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSchedule {
    pub segments: Vec<ControlSegment>,
}

impl ControlSchedule {
    pub fn new(segments: Vec<ControlSegment>) -> Self {
        ControlSchedule { segments }
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn then(mut self, other: ControlSchedule) -> Self {
        self.segments.extend(other.segments);
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        self.segments.iter().try_for_each(|s| s.validate(n))
    }

    fn starts(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let t0 = t;
                t += s.duration;
                t0
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integration {
    pub dt: f64,
    pub stride: usize,
}

impl Default for Integration {
    fn default() -> Self {
        Integration { dt: 1e-3, stride: 10 }
    }
}

impl Integration {
    fn validate(&self, gamma0: f64) -> Result<()> {
        if !(self.dt > 0.0) || gamma0 * self.dt > 1e-2 + 1e-15 {
            return invalid(format!("time step γ0·dt = {} must lie in (0, 1e-2]", gamma0 * self.dt));
        }
        if self.stride == 0 {
            return invalid("output stride must be ≥ 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
}

impl<S> Trajectory<S> {
    pub fn last(&self) -> &S {
        self.states.last().expect("trajectories hold at least the initial state")
    }
}

/// Hamiltonian of a segment in the frame rotating at the drive frequency, with
/// the drive phase referenced to the segment start `t_start`.
pub fn build_hamiltonian_at(array: &EmitterArray, seg: &ControlSegment, t_start: f64) -> Result<CMat> {
    array.validate()?;
    let n = array.n();
    seg.validate_values(n)?;
    let d = hilbert::dim(n);
    let lows: Vec<CMat> = (0..n).map(|k| hilbert::lowering(k, n)).collect();
    let mut h = CMat::zeros(d, d);
    for k in 0..n {
        let nk = hilbert::number(k, n);
        h += &nk * c(seg.delta - seg.drive_detuning, 0.0);
        if k == 1 {
            h += &nk * c(seg.delta2, 0.0);
        }
        if k + 1 < n && seg.j != 0.0 {
            let hop = lows[k].adjoint() * &lows[k + 1];
            h += (&hop + hop.adjoint()) * c(seg.j, 0.0);
        }
    }
    let cm = coupling_matrices(array);
    for a in 0..n {
        for b in 0..n {
            if cm.j[a][b] != 0.0 {
                h += lows[a].adjoint() * &lows[b] * c(cm.j[a][b], 0.0);
            }
        }
    }
    if !seg.omega.is_empty() {
        let ph = C64::from_polar(1.0, -seg.drive_detuning * t_start);
        for (k, &om) in seg.omega.iter().enumerate() {
            let term = lows[k].adjoint() * (om * ph);
            h += &term + term.adjoint();
        }
    }
    Ok(h)
}

pub fn build_hamiltonian(array: &EmitterArray, seg: &ControlSegment) -> Result<CMat> {
    build_hamiltonian_at(array, seg, 0.0)
}

/// H − i(Γ_B/2)Ŝ†Ŝ − i(γ′/2)Σσ̂ₙ†σ̂ₙ in the segment's rotating frame.
pub fn nonhermitian_hamiltonian(array: &EmitterArray, seg: &ControlSegment, t_start: f64) -> Result<CMat> {
    let mut h = build_hamiltonian_at(array, seg, t_start)?;
    let (s, rate) = jump_operator(array);
    h -= s.adjoint() * &s * c(0.0, rate / 2.0);
    if array.gamma_prime > 0.0 {
        for k in 0..array.n() {
            h -= hilbert::number(k, array.n()) * c(0.0, array.gamma_prime / 2.0);
        }
    }
    Ok(h)
}

fn jump_ops(array: &EmitterArray) -> Vec<CMat> {
    let (s, rate) = jump_operator(array);
    let mut ops = Vec::new();
    if rate > 0.0 {
        ops.push(s * c(rate.sqrt(), 0.0));
    }
    if array.gamma_prime > 0.0 {
        for k in 0..array.n() {
            ops.push(hilbert::lowering(k, array.n()) * c(array.gamma_prime.sqrt(), 0.0));
        }
    }
    ops
}

/// Vectorized Lindbladian (column stacking) for one segment.
pub fn liouvillian(array: &EmitterArray, seg: &ControlSegment, t_start: f64) -> Result<CMat> {
    let heff = nonhermitian_hamiltonian(array, seg, t_start)?;
    let d = heff.nrows();
    let id = CMat::identity(d, d);
    let mut l = kron(&id, &heff) * (-I) + kron(&heff.map(|z| z.conj()), &id) * I;
    for cop in jump_ops(array) {
        l += kron(&cop.map(|z| z.conj()), &cop);
    }
    Ok(l)
}

/// Diagonal frame change e^{−iδω τ N̂} back to the ω0 frame.
fn frame_phases(n: usize, drive_detuning: f64, tau: f64) -> Vec<C64> {
    (0..hilbert::dim(n))
        .map(|idx| C64::from_polar(1.0, -drive_detuning * tau * hilbert::excitation_number(idx) as f64))
        .collect()
}

fn to_lab_rho(phi: &CMat, ph: &[C64]) -> CMat {
    CMat::from_fn(phi.nrows(), phi.ncols(), |a, b| ph[a] * phi[(a, b)] * ph[b].conj())
}

fn to_lab_psi(phi: &CVec, ph: &[C64]) -> CVec {
    CVec::from_fn(phi.len(), |a, _| ph[a] * phi[a])
}

fn check_rho(rho: &CMat, d: usize) -> Result<()> {
    if rho.shape() != (d, d) {
        return invalid(format!("density matrix is {:?}, register needs {d}×{d}", rho.shape()));
    }
    if crate::linalg::frobenius(&(rho - rho.adjoint())) > 1e-9 {
        return invalid("density matrix is not Hermitian");
    }
    if (trace(rho).re - 1.0).abs() > 1e-9 {
        return invalid("density matrix trace must be 1");
    }
    Ok(())
}

/// Fixed-step RK4 integration of the Lindblad equation.
pub fn evolve_master(
    rho0: &CMat,
    array: &EmitterArray,
    schedule: &ControlSchedule,
    opts: &Integration,
) -> Result<Trajectory<CMat>> {
    array.validate()?;
    opts.validate(array.gamma0)?;
    let n = array.n();
    if n > 3 {
        return Err(Error::SizeLimit("master-equation integration supports at most 3 emitters".into()));
    }
    check_rho(rho0, hilbert::dim(n))?;
    schedule.validate(n)?;
    let cops = jump_ops(array);
    let cdag: Vec<CMat> = cops.iter().map(|m| m.adjoint()).collect();
    let mut times = vec![0.0];
    let mut states = vec![rho0.clone()];
    let mut rho = rho0.clone();
    let mut t = 0.0;
    for (seg, t_start) in schedule.segments.iter().zip(schedule.starts()) {
        let heff = nonhermitian_hamiltonian(array, seg, t_start)?;
        let heff_dag = heff.adjoint();
        let steps = step_count(seg.duration, opts.dt);
        let h = seg.duration / steps as f64;
        let rhs = |r: &CMat| {
            let mut out = (&heff * r - r * &heff_dag) * (-I);
            for (cop, cd) in cops.iter().zip(&cdag) {
                out += cop * r * cd;
            }
            out
        };
        let mut phi = rho.clone();
        for k in 1..=steps {
            phi = rk4_step(&phi, h, rhs);
            if k % opts.stride == 0 || k == steps {
                let tau = k as f64 * h;
                let lab = to_lab_rho(&phi, &frame_phases(n, seg.drive_detuning, tau));
                let drift = (trace(&lab).re - 1.0).abs();
                if drift > 1e-6 {
                    return Err(Error::IntegrationAccuracy(format!(
                        "trace drifted by {drift:e} at t = {}; reduce dt",
                        t + tau
                    )));
                }
                times.push(t + tau);
                states.push(lab);
            }
        }
        rho = states.last().unwrap().clone();
        t += seg.duration;
    }
    Ok(Trajectory { times, states })
}

/// Fixed-step RK4 integration of dψ/dt = −iH_nH ψ.
pub fn evolve_nonhermitian(
    psi0: &CVec,
    array: &EmitterArray,
    schedule: &ControlSchedule,
    opts: &Integration,
) -> Result<Trajectory<CVec>> {
    array.validate()?;
    opts.validate(array.gamma0)?;
    let n = array.n();
    if psi0.len() != hilbert::dim(n) {
        return invalid(format!("state has dimension {}, register needs {}", psi0.len(), hilbert::dim(n)));
    }
    if psi0.norm() > 1.0 + 1e-12 {
        return invalid("initial state norm exceeds 1");
    }
    schedule.validate(n)?;
    let mut times = vec![0.0];
    let mut states = vec![psi0.clone()];
    let mut psi = psi0.clone();
    let mut t = 0.0;
    for (seg, t_start) in schedule.segments.iter().zip(schedule.starts()) {
        let gen = nonhermitian_hamiltonian(array, seg, t_start)? * (-I);
        let steps = step_count(seg.duration, opts.dt);
        let h = seg.duration / steps as f64;
        let mut phi = psi.clone();
        let mut prev = phi.norm();
        for k in 1..=steps {
            phi = rk4_step(&phi, h, |v: &CVec| &gen * v);
            let nrm = phi.norm();
            if nrm > prev * (1.0 + 1e-9) + 1e-15 {
                return Err(Error::IntegrationAccuracy(format!(
                    "norm grew from {prev} to {nrm} at t = {}",
                    t + k as f64 * h
                )));
            }
            prev = nrm;
            if k % opts.stride == 0 || k == steps {
                let tau = k as f64 * h;
                times.push(t + tau);
                states.push(to_lab_psi(&phi, &frame_phases(n, seg.drive_detuning, tau)));
            }
        }
        psi = states.last().unwrap().clone();
        t += seg.duration;
    }
    Ok(Trajectory { times, states })
}

/// Exact propagation of one constant segment through the exponentiated Liouvillian.
pub fn expm_oracle(array: &EmitterArray, seg: &ControlSegment, t: f64, rho0: &CMat) -> Result<CMat> {
    array.validate()?;
    let n = array.n();
    if n > 3 {
        return Err(Error::SizeLimit("Liouvillian oracle supports at most 64 dimensions".into()));
    }
    check_rho(rho0, hilbert::dim(n))?;
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let l = liouvillian(array, seg, 0.0)?;
    let prop = expm(&(l * c(t, 0.0)));
    let phi = unvectorize(&(prop * vectorize(rho0)), hilbert::dim(n));
    Ok(to_lab_rho(&phi, &frame_phases(n, seg.drive_detuning, t)))
}

/// Exact non-Hermitian propagator of one segment, returned in the ω0 frame.
pub fn segment_propagator(array: &EmitterArray, seg: &ControlSegment, t_start: f64) -> Result<CMat> {
    let gen = nonhermitian_hamiltonian(array, seg, t_start)? * c(0.0, -seg.duration);
    let u = expm(&gen);
    let ph = frame_phases(array.n(), seg.drive_detuning, seg.duration);
    Ok(CMat::from_fn(u.nrows(), u.ncols(), |a, b| ph[a] * u[(a, b)]))
}

pub fn schedule_propagator(array: &EmitterArray, schedule: &ControlSchedule) -> Result<CMat> {
    array.validate()?;
    schedule.validate(array.n())?;
    let d = hilbert::dim(array.n());
    let mut u = CMat::identity(d, d);
    for (seg, t0) in schedule.segments.iter().zip(schedule.starts()) {
        u = segment_propagator(array, seg, t0)? * u;
    }
    Ok(u)
}

/// Populations of |G⟩, |D⟩, |A⟩, |B⟩ for the three-emitter register.
pub fn collective_populations(rho: &CMat) -> [f64; 4] {
    let kets = [hilbert::ket_g(), hilbert::ket_d(), hilbert::ket_a(), hilbert::ket_b()];
    kets.map(|k| (k.adjoint() * rho * &k)[(0, 0)].re)
}

pub fn collective_populations_psi(psi: &CVec) -> [f64; 4] {
    let kets = [hilbert::ket_g(), hilbert::ket_d(), hilbert::ket_a(), hilbert::ket_b()];
    kets.map(|k| k.dotc(psi).norm_sqr())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryColumns {
    Populations,
    Full,
}

pub fn trajectory_csv(traj: &Trajectory<CMat>, columns: TrajectoryColumns) -> String {
    let mut s = String::from("# t in 1/gamma0; entries dimensionless\n");
    match columns {
        TrajectoryColumns::Populations => {
            s.push_str("t,p_g,p_d,p_a,p_b\n");
            for (t, rho) in traj.times.iter().zip(&traj.states) {
                let p = collective_populations(rho);
                let _ = writeln!(s, "{},{},{},{},{}", fmt_num(*t), fmt_num(p[0]), fmt_num(p[1]), fmt_num(p[2]), fmt_num(p[3]));
            }
        }
        TrajectoryColumns::Full => {
            let d = traj.states.first().map(|r| r.nrows()).unwrap_or(0);
            let mut head = vec!["t".to_string()];
            for a in 0..d {
                for b in 0..d {
                    head.push(format!("re_{a}_{b}"));
                    head.push(format!("im_{a}_{b}"));
                }
            }
            let _ = writeln!(s, "{}", head.join(","));
            for (t, rho) in traj.times.iter().zip(&traj.states) {
                let mut row = vec![fmt_num(*t)];
                for a in 0..d {
                    for b in 0..d {
                        row.push(fmt_num(rho[(a, b)].re));
                        row.push(fmt_num(rho[(a, b)].im));
                    }
                }
                let _ = writeln!(s, "{}", row.join(","));
            }
        }
    }
    s
}
