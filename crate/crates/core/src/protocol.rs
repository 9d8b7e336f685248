//! Sequential generation of GHZ and cluster states of time-bin photons.
//!
//! Logical encoding: |D⟩ = |0⟩ and |G⟩ = |1⟩ for the matter qubit, vacuum = |0⟩ and one
//! photon = |1⟩ for a bin. Bin k (0-based, emission order) is bit k of the photonic index.
//! The CPE gate acts as a CNOT from matter to the fresh bin.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{schedule_propagator, segment_propagator, ControlSegment};
use crate::emission::{cpe_map_with, optimal_coupling_sequence, CouplingSequence, CpeParams};
use crate::error::{invalid, Error, Result};
use crate::gates::{gate_schedule, ideal_gate, simulate_gate, GateSpec, Propagation};
use crate::geometry::EmitterArray;
use crate::hilbert;
use crate::linalg::{c, hermitian_eigenvalues, CMat, CVec, C64, ONE, ZERO};
use crate::scattering::{constj_packet_stats, cz_fidelity, scattering_overlap, MatterBranch};
use crate::wavepacket::Wavepacket;

pub const MAX_PHOTONS: usize = 12;
pub const MAX_INLINED: usize = 3;

const MD: usize = 0;
const MG: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProtocolKind {
    Ghz,
    #[serde(rename = "CLUSTER_1D")]
    Cluster1d,
    #[serde(rename = "CLUSTER_2D")]
    Cluster2d,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateModel {
    #[default]
    Ideal,
    Noisy,
    /// full emitter register and propagators at every step (m ≤ 3)
    Inlined,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedForward {
    /// CZ overlaps use the ideal target packet
    #[default]
    Refresh,
    /// CZ overlaps use the packet actually emitted by the CPE gate
    Carry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PacketSpec {
    Gaussian { tau: f64 },
    ConstantCoupling { j_tilde: f64 },
}

fn default_dt() -> f64 {
    1e-3
}
fn default_gamma0() -> f64 {
    1.0
}
fn default_packet() -> PacketSpec {
    PacketSpec::Gaussian { tau: 1.75 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    pub j: f64,
    pub omega: f64,
    #[serde(default)]
    pub gamma_prime: f64,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    #[serde(default = "default_packet")]
    pub packet: PacketSpec,
    #[serde(default)]
    pub feed_forward: FeedForward,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl NoiseParams {
    pub fn new(j: f64, omega: f64, gamma_prime: f64) -> Self {
        NoiseParams { j, omega, gamma_prime, gamma0: 1.0, packet: default_packet(), feed_forward: FeedForward::Refresh, dt: 1e-3 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.j > 0.0) || !(self.omega > 0.0) || !(self.gamma0 > 0.0) || !(self.gamma_prime >= 0.0) || !(self.dt > 0.0) {
            return invalid("noise parameters need J, Ω, γ0, dt > 0 and γ′ ≥ 0");
        }
        match self.packet {
            PacketSpec::Gaussian { tau } if !(tau > 0.0) => invalid("packet width τ must be > 0"),
            PacketSpec::ConstantCoupling { j_tilde } if !(j_tilde > 0.0) => invalid("J̃ must be > 0"),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    /// photon count for GHZ and 1D clusters
    #[serde(default)]
    pub m: Option<usize>,
    /// grid rows (M) and columns (N) for 2D clusters
    #[serde(default)]
    pub rows: Option<usize>,
    #[serde(default)]
    pub cols: Option<usize>,
    #[serde(default)]
    pub gate_model: GateModel,
    #[serde(default)]
    pub noise: Option<NoiseParams>,
}

impl ProtocolSpec {
    pub fn ghz(m: usize) -> Self {
        ProtocolSpec { kind: ProtocolKind::Ghz, m: Some(m), rows: None, cols: None, gate_model: GateModel::Ideal, noise: None }
    }

    pub fn cluster_1d(m: usize) -> Self {
        ProtocolSpec { kind: ProtocolKind::Cluster1d, ..Self::ghz(m) }
    }

    pub fn cluster_2d(rows: usize, cols: usize) -> Self {
        ProtocolSpec { kind: ProtocolKind::Cluster2d, m: None, rows: Some(rows), cols: Some(cols), gate_model: GateModel::Ideal, noise: None }
    }

    pub fn noisy(mut self, noise: NoiseParams) -> Self {
        self.gate_model = GateModel::Noisy;
        self.noise = Some(noise);
        self
    }

    pub fn inlined(mut self, noise: NoiseParams) -> Self {
        self.gate_model = GateModel::Inlined;
        self.noise = Some(noise);
        self
    }

    pub fn photons(&self) -> Result<usize> {
        let n = match self.kind {
            ProtocolKind::Ghz | ProtocolKind::Cluster1d => {
                let m = self.m.ok_or_else(|| Error::InvalidInput("protocol needs m".into()))?;
                if m < 1 {
                    return invalid("m must be ≥ 1");
                }
                m
            }
            ProtocolKind::Cluster2d => {
                let (r, cc) = match (self.rows, self.cols) {
                    (Some(r), Some(cc)) => (r, cc),
                    _ => return invalid("2D cluster needs rows and cols"),
                };
                if r < 2 || cc < 2 {
                    return invalid("2D cluster needs M ≥ 2 and N ≥ 2");
                }
                r * cc
            }
        };
        if n > MAX_PHOTONS {
            return Err(Error::SizeLimit(format!("{n} photons exceed the dense limit of {MAX_PHOTONS}")));
        }
        Ok(n)
    }

    pub fn validate(&self) -> Result<usize> {
        let n = self.photons()?;
        match (self.gate_model, &self.noise) {
            (GateModel::Ideal, _) => {}
            (_, None) => return invalid("noisy and inlined runs need noise parameters"),
            (_, Some(p)) => p.validate()?,
        }
        if self.gate_model == GateModel::Inlined && n > MAX_INLINED {
            return Err(Error::SizeLimit(format!("inlined mode supports at most {MAX_INLINED} photons")));
        }
        Ok(n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    /// Y_{π/2} = R_DG(π/4, −π/2)
    Y,
    /// P_D(π), a Z on the matter qubit
    Z,
    Cpe { bin: usize },
    CpeDisentangle { bin: usize },
    Cz { bin: usize },
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Y => write!(f, "Y_pi/2"),
            Op::Z => write!(f, "Z"),
            Op::Cpe { bin } => write!(f, "CPE({})", bin + 1),
            Op::CpeDisentangle { bin } => write!(f, "CPE_dis({})", bin + 1),
            Op::Cz { bin } => write!(f, "CZ({})", bin + 1),
        }
    }
}

/// Matter rotation before emission `step` of `n`: Y at the ends of the chain, Z·Y inside.
fn rotation(step: usize, n: usize, ops: &mut Vec<Op>) {
    ops.push(Op::Y);
    if n == 1 || (step > 0 && step + 1 < n) {
        ops.push(Op::Z);
    }
}

fn emit(step: usize, n: usize, ops: &mut Vec<Op>) {
    ops.push(if step + 1 == n { Op::CpeDisentangle { bin: step } } else { Op::Cpe { bin: step } });
}

pub fn build_sequence(spec: &ProtocolSpec) -> Result<Vec<Op>> {
    let n = spec.photons()?;
    let mut ops = Vec::new();
    match spec.kind {
        ProtocolKind::Ghz => {
            ops.extend([Op::Y, Op::Z]);
            for k in 0..n {
                emit(k, n, &mut ops);
            }
        }
        ProtocolKind::Cluster1d => {
            for k in 0..n {
                rotation(k, n, &mut ops);
                emit(k, n, &mut ops);
            }
        }
        ProtocolKind::Cluster2d => {
            let cols = spec.cols.unwrap_or(0);
            for k in 0..n {
                rotation(k, n, &mut ops);
                if k >= cols {
                    ops.push(Op::Cz { bin: k - cols });
                }
                emit(k, n, &mut ops);
            }
        }
    }
    Ok(ops)
}

/// Matter ⊗ photons: row = matter (D, G, A), column = photonic basis index.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    pub n_photons: usize,
    pub amps: CMat,
}

impl JointState {
    pub fn product(matter: [C64; 3], n_photons: usize) -> Self {
        let mut amps = CMat::zeros(3, 1 << n_photons);
        for (r, z) in matter.iter().enumerate() {
            amps[(r, 0)] = *z;
        }
        JointState { n_photons, amps }
    }

    pub fn ground(n_photons: usize) -> Self {
        Self::product([ZERO, ONE, ZERO], n_photons)
    }

    /// |G⟩ ⊗ photonic state
    pub fn with_photons(photons: &CVec) -> Result<Self> {
        let len = photons.len();
        if !len.is_power_of_two() {
            return invalid("photonic vector length must be a power of two");
        }
        let mut amps = CMat::zeros(3, len);
        amps.row_mut(MG).copy_from(&photons.transpose());
        Ok(JointState { n_photons: len.trailing_zeros() as usize, amps })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.norm_squared()
    }

    /// unnormalized photonic vector for each matter index
    pub fn components(&self) -> Vec<CVec> {
        (0..3).map(|r| self.amps.row(r).transpose()).collect()
    }

    pub fn matter_density(&self) -> CMat {
        &self.amps * self.amps.adjoint()
    }

    fn apply_matter(&mut self, m: &CMat) {
        self.amps = m * &self.amps;
    }

    /// 4×3 CPE map with rows (D0, G0, A0, G1) onto a fresh bin.
    fn apply_cpe(&mut self, bin: usize, map: &CMat) -> Result<()> {
        let bit = 1usize << bin;
        let mut out = CMat::zeros(3, self.amps.ncols());
        for x in 0..self.amps.ncols() {
            let col = self.amps.column(x);
            if col.iter().all(|z| *z == ZERO) {
                continue;
            }
            if x & bit != 0 {
                return Err(Error::Convention(format!("bin {} already holds a photon before its emission", bin + 1)));
            }
            for r in 0..3 {
                out[(r, x)] += (0..3).map(|k| map[(r, k)] * col[k]).sum::<C64>();
            }
            out[(MG, x | bit)] += (0..3).map(|k| map[(3, k)] * col[k]).sum::<C64>();
        }
        self.amps = out;
        Ok(())
    }

    fn apply_cz(&mut self, bin: usize, o_g: C64, o_d: C64) {
        let bit = 1usize << bin;
        for x in 0..self.amps.ncols() {
            if x & bit != 0 {
                self.amps[(MD, x)] *= o_d;
                self.amps[(MG, x)] *= o_g;
            }
        }
    }
}

pub fn ideal_reference(spec: &ProtocolSpec) -> Result<CVec> {
    let n = spec.photons()?;
    let dim = 1usize << n;
    match spec.kind {
        ProtocolKind::Ghz => {
            let mut v = CVec::zeros(dim);
            v[0] = c(0.5f64.sqrt(), 0.0);
            v[dim - 1] = c(0.5f64.sqrt(), 0.0);
            Ok(v)
        }
        _ => Ok(graph_state(n, &lattice_edges(spec)?)),
    }
}

/// Edges of the generated graph: the emission chain, plus k ↔ k+N for 2D.
pub fn lattice_edges(spec: &ProtocolSpec) -> Result<Vec<(usize, usize)>> {
    let n = spec.photons()?;
    let mut e: Vec<(usize, usize)> = (1..n).map(|k| (k - 1, k)).collect();
    if spec.kind == ProtocolKind::Cluster2d {
        let cols = spec.cols.unwrap_or(0);
        e.extend((0..n.saturating_sub(cols)).map(|k| (k, k + cols)));
    }
    Ok(e)
}

/// CZ on `edges` applied to |+⟩^⊗n.
pub fn graph_state(n: usize, edges: &[(usize, usize)]) -> CVec {
    let dim = 1usize << n;
    let amp = (dim as f64).powf(-0.5);
    CVec::from_fn(dim, |x, _| {
        let odd = edges.iter().filter(|(a, b)| (x >> a) & 1 == 1 && (x >> b) & 1 == 1).count() % 2 == 1;
        c(if odd { -amp } else { amp }, 0.0)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// Tensor product of Paulis; character k acts on bin k.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliString(pub Vec<Pauli>);

impl FromStr for PauliString {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|ch| match ch {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => invalid(format!("unknown Pauli '{other}'")),
            })
            .collect::<Result<Vec<_>>>()
            .map(PauliString)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            let ch = match p {
                Pauli::I => 'I',
                Pauli::X => 'X',
                Pauli::Y => 'Y',
                Pauli::Z => 'Z',
            };
            write!(f, "{ch}")?;
        }
        Ok(())
    }
}

impl PauliString {
    /// ⟨v|P|v⟩ for an unnormalized vector.
    pub fn expectation(&self, v: &CVec) -> Result<C64> {
        if v.len() != 1 << self.0.len() {
            return invalid(format!("{}-qubit string on a vector of length {}", self.0.len(), v.len()));
        }
        let (mut xm, mut zm, mut ny) = (0usize, 0usize, 0u32);
        for (k, p) in self.0.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => xm |= 1 << k,
                Pauli::Z => zm |= 1 << k,
                Pauli::Y => {
                    xm |= 1 << k;
                    zm |= 1 << k;
                    ny += 1;
                }
            }
        }
        // Y = iXZ per factor
        let yphase = C64::from_polar(1.0, PI / 2.0 * ny as f64);
        let mut acc = ZERO;
        for x in 0..v.len() {
            let sign = if (x & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            acc += v[x ^ xm].conj() * v[x] * sign;
        }
        Ok(acc * yphase)
    }
}

pub fn stabilizers(spec: &ProtocolSpec) -> Result<Vec<PauliString>> {
    let n = spec.photons()?;
    match spec.kind {
        ProtocolKind::Ghz => {
            let mut out = vec![PauliString(vec![Pauli::X; n])];
            for k in 1..n {
                let mut s = vec![Pauli::I; n];
                s[k - 1] = Pauli::Z;
                s[k] = Pauli::Z;
                out.push(PauliString(s));
            }
            Ok(out)
        }
        _ => {
            let edges = lattice_edges(spec)?;
            Ok((0..n)
                .map(|a| {
                    let mut s = vec![Pauli::I; n];
                    s[a] = Pauli::X;
                    for &(p, q) in &edges {
                        if p == a {
                            s[q] = Pauli::Z;
                        } else if q == a {
                            s[p] = Pauli::Z;
                        }
                    }
                    PauliString(s)
                })
                .collect())
        }
    }
}

/// ⟨K⟩ on the mixture Σ|ψ_i⟩⟨ψ_i| of unnormalized components.
pub fn expectation_mixture(components: &[CVec], k: &PauliString) -> Result<f64> {
    let tr: f64 = components.iter().map(|v| v.norm_squared()).sum();
    if !(tr > 0.0) {
        return invalid("expectation on an empty state");
    }
    let mut acc = 0.0;
    for v in components {
        acc += k.expectation(v)?.re;
    }
    Ok(acc / tr)
}

/// Stabilizer expectations of the photonic state with matter traced out.
pub fn stabilizer_check(state: &JointState, stabs: &[PauliString]) -> Result<Vec<f64>> {
    let comps = state.components();
    stabs.iter().map(|k| expectation_mixture(&comps, k)).collect()
}

/// |⟨a|b⟩|², same register shape required.
pub fn state_fidelity(a: &JointState, b: &JointState) -> Result<f64> {
    if a.amps.shape() != b.amps.shape() {
        return invalid("states have different register shapes");
    }
    Ok(a.amps.iter().zip(b.amps.iter()).map(|(x, y)| x.conj() * y).sum::<C64>().norm_sqr())
}

/// ⟨ref|ρ_ph|ref⟩ with the matter index traced out.
pub fn photonic_fidelity(state: &JointState, reference: &CVec) -> Result<f64> {
    if reference.len() != state.amps.ncols() {
        return invalid("reference and state have different photon counts");
    }
    Ok(state.components().iter().map(|v| reference.dotc(v).norm_sqr()).sum())
}

pub fn matter_purity(state: &JointState) -> f64 {
    let rho = state.matter_density();
    let tr = crate::linalg::trace(&rho).re;
    crate::linalg::trace(&(&rho * &rho)).re / (tr * tr)
}

/// Matter–photon mutual information 2S(ρ_m) of the normalized pure joint state, in bits.
pub fn mutual_information(state: &JointState) -> f64 {
    let rho = state.matter_density();
    let tr = crate::linalg::trace(&rho).re;
    let s: f64 = hermitian_eigenvalues(&(rho / c(tr, 0.0)))
        .into_iter()
        .filter(|&p| p > 1e-300)
        .map(|p| -p * p.log2())
        .sum();
    2.0 * s
}

#[derive(Clone, Debug, Serialize)]
pub struct LedgerEntry {
    pub step: usize,
    pub op: String,
    pub infidelity: f64,
    pub duration: f64,
}

#[derive(Clone, Debug)]
pub struct ProtocolResult {
    pub spec: ProtocolSpec,
    pub sequence: Vec<Op>,
    pub state: JointState,
    pub reference: CVec,
    pub fidelity: f64,
    pub joint_fidelity: f64,
    pub stabilizers: Vec<(String, f64)>,
    pub matter_purity: f64,
    pub mutual_information: f64,
    pub ledger: Vec<LedgerEntry>,
}

impl ProtocolResult {
    pub fn error_budget(&self) -> f64 {
        self.ledger.iter().map(|e| e.infidelity).sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let amps = if self.state.n_photons <= 6 {
            let rows: Vec<Vec<[f64; 2]>> = (0..3)
                .map(|r| self.state.amps.row(r).iter().map(|z| [z.re, z.im]).collect())
                .collect();
            serde_json::json!({"matter_order": ["D", "G", "A"], "bin_order": "little_endian", "rows": rows})
        } else {
            serde_json::Value::Null
        };
        serde_json::json!({
            "spec": self.spec,
            "sequence": self.sequence.iter().map(|o| o.to_string()).collect::<Vec<_>>(),
            "photons": self.state.n_photons,
            "norm": self.state.norm_sqr(),
            "fidelity": self.fidelity,
            "joint_fidelity": self.joint_fidelity,
            "stabilizers": self.stabilizers.iter().map(|(k, v)| serde_json::json!({"string": k, "value": v})).collect::<Vec<_>>(),
            "matter_purity": self.matter_purity,
            "mutual_information": self.mutual_information,
            "error_budget": self.error_budget(),
            "ledger": self.ledger,
            "amplitudes": amps,
        })
    }
}

/// Effective maps of every operation for one run.
struct GateMaps {
    y: CMat,
    z: CMat,
    cpe: CMat,
    cpe_dis: CMat,
    o_g: C64,
    o_d: C64,
    errors: [(f64, f64); 5],
}

fn ideal_maps() -> GateMaps {
    let y = ideal_gate(&GateSpec::y_half_pi(1.0, 0.0));
    let z = ideal_gate(&GateSpec::p_d(PI, 1.0));
    let mut cpe = CMat::zeros(4, 3);
    cpe[(0, MD)] = ONE;
    cpe[(3, MG)] = ONE;
    let mut cpe_dis = CMat::zeros(4, 3);
    cpe_dis[(1, MD)] = ONE;
    cpe_dis[(3, MG)] = ONE;
    GateMaps { y, z, cpe, cpe_dis, o_g: -ONE, o_d: ONE, errors: [(0.0, 0.0); 5] }
}

/// Emission target and the coupling sequence that produces it.
pub fn emission_plan(p: &NoiseParams) -> Result<(Wavepacket, CouplingSequence)> {
    match p.packet {
        PacketSpec::Gaussian { tau } => {
            let target = Wavepacket::gaussian(tau, 6.0 * tau, p.dt, 12.0 * tau)?;
            let seq = optimal_coupling_sequence(&target, p.gamma0)?;
            Ok((target, seq))
        }
        PacketSpec::ConstantCoupling { j_tilde } => {
            let stats = constj_packet_stats(j_tilde, p.j, p.gamma0)?;
            let duration = stats.t_av + 12.0 * stats.tau;
            let target = Wavepacket::constant_coupling(j_tilde, p.gamma0, p.dt, duration)?;
            Ok((target, CouplingSequence::constant(j_tilde, duration, p.dt)))
        }
    }
}

/// Packet resampled to the scattering grid limit.
fn scattering_grid(w: &Wavepacket) -> Result<Wavepacket> {
    let stride = ((0.02 / w.dt).floor() as usize).max(1);
    let samples = w.samples.iter().step_by(stride).copied().collect();
    Ok(Wavepacket::new(w.t0, w.dt * stride as f64, samples)?.with_shape(w.shape.clone()))
}

fn noisy_maps(p: &NoiseParams) -> Result<GateMaps> {
    let prop = Propagation::Exact;
    let y = simulate_gate(&GateSpec::y_half_pi(p.omega, p.j), p.gamma_prime, prop)?;
    let z = simulate_gate(&GateSpec::p_d(PI, p.j), p.gamma_prime, prop)?;
    let (target, seq) = emission_plan(p)?;
    let cp = CpeParams { j_ga: p.j, omega_ga: p.omega, j_y: p.j, omega_y: p.omega, gamma_prime: p.gamma_prime, gamma0: p.gamma0 };
    let cpe = cpe_map_with(&seq, &target, &cp, false)?;
    let dis = cpe_map_with(&seq, &target, &cp, true)?;
    let incoming = match p.feed_forward {
        FeedForward::Refresh => target.clone(),
        FeedForward::Carry => cpe.emission.wavepacket.clone(),
    };
    let incoming = scattering_grid(&incoming)?;
    let o_g = scattering_overlap(&incoming, MatterBranch::G, p.j, p.gamma0)?;
    let o_d = scattering_overlap(&incoming, MatterBranch::D, p.j, p.gamma0)?;
    let cz = cz_fidelity(&incoming, p.j, p.gamma0)?;
    Ok(GateMaps {
        y: y.achieved.clone(),
        z: z.achieved.clone(),
        errors: [
            (y.infidelity(), y.duration),
            (z.infidelity(), z.duration),
            (1.0 - cpe.fidelity, cpe.total_duration()),
            (1.0 - dis.fidelity, dis.total_duration()),
            (cz.infidelity(), 0.0),
        ],
        cpe: cpe.matrix,
        cpe_dis: dis.matrix,
        o_g,
        o_d,
    })
}

fn op_error(maps: &GateMaps, op: &Op) -> (f64, f64) {
    match op {
        Op::Y => maps.errors[0],
        Op::Z => maps.errors[1],
        Op::Cpe { .. } => maps.errors[2],
        Op::CpeDisentangle { .. } => maps.errors[3],
        Op::Cz { .. } => maps.errors[4],
    }
}

pub fn apply_sequence(spec: &ProtocolSpec) -> Result<ProtocolResult> {
    let n = spec.validate()?;
    let sequence = build_sequence(spec)?;
    let (state, ledger) = match spec.gate_model {
        GateModel::Inlined => run_inlined(spec, n, &sequence)?,
        model => {
            let maps = match (model, &spec.noise) {
                (GateModel::Noisy, Some(p)) => noisy_maps(p)?,
                _ => ideal_maps(),
            };
            let mut st = JointState::ground(n);
            let mut ledger = Vec::with_capacity(sequence.len());
            for (step, op) in sequence.iter().enumerate() {
                match *op {
                    Op::Y => st.apply_matter(&maps.y),
                    Op::Z => st.apply_matter(&maps.z),
                    Op::Cpe { bin } => st.apply_cpe(bin, &maps.cpe)?,
                    Op::CpeDisentangle { bin } => st.apply_cpe(bin, &maps.cpe_dis)?,
                    Op::Cz { bin } => st.apply_cz(bin, maps.o_g, maps.o_d),
                }
                let (infidelity, duration) = op_error(&maps, op);
                ledger.push(LedgerEntry { step, op: op.to_string(), infidelity, duration });
            }
            (st, ledger)
        }
    };
    finish(spec, sequence, state, ledger)
}

fn finish(spec: &ProtocolSpec, sequence: Vec<Op>, state: JointState, ledger: Vec<LedgerEntry>) -> Result<ProtocolResult> {
    let reference = ideal_reference(spec)?;
    let target = JointState::with_photons(&reference)?;
    let stabs = stabilizers(spec)?;
    let values = stabilizer_check(&state, &stabs)?;
    Ok(ProtocolResult {
        spec: spec.clone(),
        sequence,
        fidelity: photonic_fidelity(&state, &reference)?,
        joint_fidelity: state_fidelity(&target, &state)?,
        stabilizers: stabs.iter().map(|s| s.to_string()).zip(values).collect(),
        matter_purity: matter_purity(&state),
        mutual_information: mutual_information(&state),
        reference,
        state,
        ledger,
    })
}

/// CPE on the full register: photon-0 propagator and the photon-1 functional.
struct InlinedCpe {
    stay: CMat,
    photon: CMat,
}

fn inlined_emission(array: &EmitterArray, seq: &CouplingSequence, target: &Wavepacket) -> Result<(CMat, CMat)> {
    let target = target.normalized()?;
    let sin = array.sin_factors();
    let pref = array.gamma0.sqrt();
    let mut u = CMat::identity(8, 8);
    let mut func = CMat::zeros(1, 8);
    let readout = |u: &CMat, w: C64| -> CMat {
        let mut row = CMat::zeros(1, 8);
        for (n, s) in sin.iter().enumerate() {
            row += u.row(1 << n) * (w * (pref * s));
        }
        row
    };
    let mut cache: Option<(f64, CMat)> = None;
    for (k, &j) in seq.j.iter().enumerate() {
        let step = match &cache {
            Some((jj, m)) if *jj == j => m.clone(),
            _ => {
                let m = segment_propagator(array, &ControlSegment::idle(seq.dt, -4.0 * j, 8.0 * j, j), 0.0)?;
                cache = Some((j, m.clone()));
                m
            }
        };
        u = step * u;
        if let Some(tk) = target.samples.get(k + 1) {
            func += readout(&u, tk.conj() * seq.dt);
        }
    }
    Ok((u, func))
}

fn propagator(array: &EmitterArray, spec: &GateSpec) -> Result<(CMat, f64)> {
    let sched = gate_schedule(spec, array.gamma0)?;
    Ok((schedule_propagator(array, &sched)?, sched.total_duration()))
}

fn run_inlined(spec: &ProtocolSpec, n: usize, sequence: &[Op]) -> Result<(JointState, Vec<LedgerEntry>)> {
    let p = spec.noise.as_ref().ok_or_else(|| Error::InvalidInput("inlined mode needs noise parameters".into()))?;
    let array = EmitterArray::new(vec![1.25, 2.25, 3.25], p.gamma0, p.gamma_prime)?;
    let (y, ty) = propagator(&array, &GateSpec::y_half_pi(p.omega, p.j))?;
    let (z, tz) = propagator(&array, &GateSpec::p_d(PI, p.j))?;
    let (ga, tga) = propagator(&array, &GateSpec::r_ga(PI / 2.0, 0.0, p.omega, p.j))?;
    let (target, seq) = emission_plan(p)?;
    let (em, func) = inlined_emission(&array, &seq, &target)?;
    let xi = (-2.0 * p.j * tga + 4.0 * seq.area()).rem_euclid(2.0 * PI);
    let (pd, _) = propagator(&array, &GateSpec::p_d(xi, p.j))?;
    let (ypi, typi) = propagator(&array, &GateSpec::y_pi(p.omega, p.j))?;
    let (pa, _) = propagator(&array, &GateSpec::p_a(-2.0 * p.j * tga - 2.0 * p.j * typi, p.j))?;
    let std_cpe = InlinedCpe { stay: &pd * &em * &ga, photon: &func * &ga };
    let pre = &ypi * &pa * &ga;
    let dis_cpe = InlinedCpe { stay: &em * &pre, photon: &func * &pre };
    let ket_d = hilbert::ket_d();
    let (o_g, o_d) = {
        let incoming = scattering_grid(&match p.feed_forward {
            FeedForward::Refresh => target.clone(),
            FeedForward::Carry => crate::emission::emit_with_coupling(ZERO, -crate::linalg::I, &seq, p.gamma0, p.gamma_prime)?.wavepacket,
        })?;
        (
            scattering_overlap(&incoming, MatterBranch::G, p.j, p.gamma0)?,
            scattering_overlap(&incoming, MatterBranch::D, p.j, p.gamma0)?,
        )
    };

    let dim = 1usize << n;
    let mut amps = CMat::zeros(8, dim);
    amps[(0, 0)] = ONE;
    let mut ledger = Vec::new();
    for (step, op) in sequence.iter().enumerate() {
        let duration = match *op {
            Op::Y => {
                amps = &y * &amps;
                ty
            }
            Op::Z => {
                amps = &z * &amps;
                tz
            }
            Op::Cpe { bin } | Op::CpeDisentangle { bin } => {
                let m = if matches!(op, Op::Cpe { .. }) { &std_cpe } else { &dis_cpe };
                let bit = 1usize << bin;
                let mut out = CMat::zeros(8, dim);
                for x in 0..dim {
                    let col = amps.column(x).into_owned();
                    if col.iter().all(|z| *z == ZERO) {
                        continue;
                    }
                    if x & bit != 0 {
                        return Err(Error::Convention(format!("bin {} already holds a photon", bin + 1)));
                    }
                    let stay = &m.stay * &col;
                    for r in 0..8 {
                        out[(r, x)] += stay[r];
                    }
                    out[(0, x | bit)] += (&m.photon * &col)[(0, 0)];
                }
                amps = out;
                seq.duration()
            }
            Op::Cz { bin } => {
                let bit = 1usize << bin;
                for x in 0..dim {
                    if x & bit != 0 {
                        let col = amps.column(x).into_owned();
                        let dpart = ket_d.dotc(&col);
                        let mut new = col.clone();
                        new[0] *= o_g;
                        new += &ket_d * (dpart * (o_d - ONE));
                        amps.set_column(x, &new);
                    }
                }
                0.0
            }
        };
        ledger.push(LedgerEntry { step, op: op.to_string(), infidelity: f64::NAN, duration });
    }
    let basis = hilbert::dfs_basis();
    let dfs = basis.adjoint() * amps;
    Ok((JointState { n_photons: n, amps: dfs }, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequences() {
        let s = build_sequence(&ProtocolSpec::ghz(2)).unwrap();
        assert_eq!(s, vec![Op::Y, Op::Z, Op::Cpe { bin: 0 }, Op::CpeDisentangle { bin: 1 }]);
        let s = build_sequence(&ProtocolSpec::cluster_1d(3)).unwrap();
        assert_eq!(s, vec![Op::Y, Op::Cpe { bin: 0 }, Op::Y, Op::Z, Op::Cpe { bin: 1 }, Op::Y, Op::CpeDisentangle { bin: 2 }]);
        let s = build_sequence(&ProtocolSpec::cluster_2d(2, 2)).unwrap();
        let cz = s.iter().position(|o| *o == Op::Cz { bin: 0 }).unwrap();
        let c2 = s.iter().position(|o| *o == Op::Cpe { bin: 1 }).unwrap();
        let c3 = s.iter().position(|o| *o == Op::Cpe { bin: 2 }).unwrap();
        assert!(c2 < cz && cz < c3);
    }

    #[test]
    fn ghz_two_ideal() {
        let r = apply_sequence(&ProtocolSpec::ghz(2)).unwrap();
        let s = 0.5f64.sqrt();
        assert!((r.state.amps[(MG, 0)] - c(s, 0.0)).norm() < 1e-12);
        assert!((r.state.amps[(MG, 3)] - c(s, 0.0)).norm() < 1e-12);
        assert!((r.state.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ideal_runs_exact() {
        let mut specs: Vec<ProtocolSpec> = (1..=6).flat_map(|m| [ProtocolSpec::ghz(m), ProtocolSpec::cluster_1d(m)]).collect();
        specs.push(ProtocolSpec::cluster_2d(2, 2));
        specs.push(ProtocolSpec::cluster_2d(2, 3));
        specs.push(ProtocolSpec::cluster_2d(3, 2));
        for spec in specs {
            let r = apply_sequence(&spec).unwrap();
            assert!(1.0 - r.fidelity < 1e-9, "{:?}: {}", spec.kind, r.fidelity);
            for (k, v) in &r.stabilizers {
                assert!((v - 1.0).abs() < 1e-9, "{:?} {k} = {v}", spec.kind);
            }
            assert!(1.0 - r.matter_purity < 1e-9 && r.mutual_information < 1e-9);
        }
    }

    #[test]
    fn cluster_two_brute_force() {
        let v = ideal_reference(&ProtocolSpec::cluster_1d(2)).unwrap();
        let e = [0.5, 0.5, 0.5, -0.5];
        for (k, x) in e.iter().enumerate() {
            assert!((v[k] - c(*x, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn flipped_bin_breaks_parity() {
        let spec = ProtocolSpec::ghz(3);
        let mut v = ideal_reference(&spec).unwrap();
        let flipped = CVec::from_fn(8, |x, _| v[x ^ 0b010]);
        v.copy_from(&flipped);
        let st = JointState::with_photons(&v).unwrap();
        let vals = stabilizer_check(&st, &stabilizers(&spec).unwrap()).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] + 1.0).abs() < 1e-12 && (vals[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_state_has_zero_stabilizers() {
        let comps: Vec<CVec> = (0..8).map(|k| {
            let mut v = CVec::zeros(8);
            v[k] = ONE;
            v
        }).collect();
        for s in stabilizers(&ProtocolSpec::cluster_1d(3)).unwrap() {
            assert!(expectation_mixture(&comps, &s).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn size_limits() {
        assert!(matches!(ProtocolSpec::ghz(13).validate(), Err(Error::SizeLimit(_))));
        assert!(ProtocolSpec::cluster_2d(1, 3).validate().is_err());
        let noisy = ProtocolSpec::ghz(4).inlined(NoiseParams::new(10.0, 0.1, 0.0));
        assert!(matches!(noisy.validate(), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn noisy_ghz_bounded() {
        let spec = ProtocolSpec::ghz(2).noisy(NoiseParams::new(10.0, 0.05, 0.0));
        let r = apply_sequence(&spec).unwrap();
        assert!(r.fidelity < 1.0);
        assert!(r.fidelity >= 1.0 - 4.0 * r.error_budget(), "{} {}", r.fidelity, r.error_budget());
    }

    #[test]
    fn inlined_matches_noisy() {
        let p = NoiseParams::new(10.0, 0.2, 1e-3);
        let a = apply_sequence(&ProtocolSpec::cluster_1d(2).noisy(p.clone())).unwrap();
        let b = apply_sequence(&ProtocolSpec::cluster_1d(2).inlined(p)).unwrap();
        assert!((a.fidelity - b.fidelity).abs() < 2e-3, "{} {}", a.fidelity, b.fidelity);
    }
}
