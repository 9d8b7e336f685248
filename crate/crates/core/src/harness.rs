//! Task execution: every run writes its artifacts plus `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{EmitMethod, RunConfig, Task};
use crate::emission::{emit_with_coupling, gaussian_coupling, optimal_coupling_sequence, overlap_fidelity};
use crate::error::{invalid, Result};
use crate::gates::{predicted_error_model, simulate_gate_on, GateKind};
use crate::geometry::{coupling_matrices, EmitterArray};
use crate::io::{fmt_num, CsvTable};
use crate::linalg::{I, ZERO};
use crate::protocol::{apply_sequence, emission_plan, NoiseParams, PacketSpec};
use crate::robustness::{default_gate, robustness_csv};
use crate::scattering::{constj_packet_stats, cz_fidelity, zero_bandwidth_infidelity};
use crate::sweep::{
    cz_sweep_csv, gate_sweep_csv, loglog_slope, sweep_cz_bandwidth, sweep_gate_infidelity, sweep_robustness,
    RobustnessSweep,
};
use crate::wavepacket::Wavepacket;

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub task: String,
    pub config_sha256: String,
    pub version: String,
    pub wall_time_s: f64,
    pub seed: Option<u64>,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Writer {
    dir: PathBuf,
    prefix: String,
    artifacts: Vec<Artifact>,
}

impl Writer {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let file = format!("{}{name}", self.prefix);
        fs::write(self.dir.join(&file), contents)?;
        self.artifacts.push(Artifact { path: file, sha256: sha256_hex(contents.as_bytes()) });
        Ok(())
    }

    fn json(&mut self, name: &str, v: &serde_json::Value) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| crate::Error::Config(e.to_string()))?;
        s.push('\n');
        self.write(name, &s)
    }
}

/// Runs `task` with `cfg`, writing into `out_dir`. `config_bytes` is hashed into the manifest.
pub fn run(task: Task, cfg: &RunConfig, config_bytes: &[u8], out_dir: &Path) -> Result<Manifest> {
    cfg.validate_for(task)?;
    let start = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut w = Writer { dir: out_dir.to_path_buf(), prefix: cfg.output.prefix.clone().unwrap_or_default(), artifacts: Vec::new() };
    let dt = cfg.numerics.dt.unwrap_or(DEFAULT_DT);
    let array = cfg.array.clone().unwrap_or_else(EmitterArray::mirror);
    match task {
        Task::Couplings => couplings(&mut w, &array)?,
        Task::Gate => gate(&mut w, cfg, &array, dt)?,
        Task::Emit => emit(&mut w, cfg, &array, dt)?,
        Task::Cz => cz(&mut w, cfg, &array)?,
        Task::Protocol => protocol(&mut w, cfg)?,
        Task::SweepFig3a | Task::SweepFig3b => gate_sweep(&mut w, cfg, task)?,
        Task::SweepFig3c => cz_sweep(&mut w, cfg, &array)?,
        Task::SweepFigS1 => robustness_sweep(&mut w, cfg, dt)?,
    }
    let manifest = Manifest {
        task: task.name().to_string(),
        config_sha256: sha256_hex(config_bytes),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
        artifacts: w.artifacts.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| crate::Error::Config(e.to_string()))? + "\n";
    fs::write(out_dir.join(format!("{}manifest.json", w.prefix)), text)?;
    Ok(manifest)
}

fn couplings(w: &mut Writer, array: &EmitterArray) -> Result<()> {
    let cm = coupling_matrices(array);
    let mut t = CsvTable::new("positions in lambda0; J and Gamma in gamma0", &["n", "m", "x_n", "x_m", "J", "Gamma"]);
    for a in 0..array.n() {
        for b in 0..array.n() {
            t.push(vec![
                (a + 1).to_string(),
                (b + 1).to_string(),
                fmt_num(array.positions[a]),
                fmt_num(array.positions[b]),
                fmt_num(cm.j[a][b]),
                fmt_num(cm.gamma[a][b]),
            ]);
        }
    }
    w.write("couplings.csv", &t.render())
}

fn gate(w: &mut Writer, cfg: &RunConfig, array: &EmitterArray, dt: f64) -> Result<()> {
    let g = cfg.gate.as_ref().expect("validated");
    let arr = if g.gamma_prime > 0.0 { array.clone().with_gamma_prime(g.gamma_prime) } else { array.clone() };
    let prop = match (g.propagation, cfg.numerics.dt) {
        (crate::gates::Propagation::Rk4 { .. }, Some(_)) => crate::gates::Propagation::Rk4 { dt },
        (p, _) => p,
    };
    let on = simulate_gate_on(&g.spec, &arr, prop)?;
    let off = simulate_gate_on(&g.spec.clone().with_compensation(!g.spec.stark_compensation), &arr, prop)?;
    let mut v = on.to_json();
    v["other_compensation_setting"] = serde_json::json!({
        "stark_compensation": !g.spec.stark_compensation,
        "fidelity": off.fidelity,
        "infidelity": off.infidelity(),
    });
    if matches!(g.spec.kind, GateKind::RDg | GateKind::RGa) && g.spec.omega > 0.0 {
        v["error_model"] = serde_json::to_value(predicted_error_model(g.spec.omega, g.spec.j, arr.gamma0)?).unwrap_or_default();
    }
    w.json("gate.json", &v)
}

fn emit(w: &mut Writer, cfg: &RunConfig, array: &EmitterArray, dt: f64) -> Result<()> {
    let e = cfg.emit.as_ref().expect("validated");
    let g0 = array.gamma0;
    let p = NoiseParams { packet: e.packet.clone(), dt, gamma0: g0, ..NoiseParams::new(10.0, 0.1, 0.0) };
    let (target, seq) = match (e.method, &e.packet) {
        (EmitMethod::Inversion, PacketSpec::Gaussian { .. }) => {
            let t = emission_plan(&p)?.0;
            let s = optimal_coupling_sequence(&t, g0)?;
            (t, s)
        }
        (EmitMethod::Inversion, PacketSpec::ConstantCoupling { .. }) => emission_plan(&p)?,
        (EmitMethod::Adiabatic, PacketSpec::Gaussian { tau }) => {
            let t = emission_plan(&p)?.0;
            let s = gaussian_coupling(*tau, 6.0 * tau, g0, dt, t.duration())?;
            (t, s)
        }
        (EmitMethod::Adiabatic, _) => return invalid("adiabatic control is defined for Gaussian targets only"),
    };
    let out = emit_with_coupling(ZERO, -I, &seq, g0, e.gamma_prime)?;
    let f = overlap_fidelity(&target, &out.wavepacket)?;
    let mut t = CsvTable::new("t in 1/gamma0; psi in gamma0^(1/2); J in gamma0", &["t", "target", "emitted_re", "emitted_im", "J"]);
    for k in 0..out.wavepacket.len() {
        let z = out.wavepacket.samples[k];
        let tg = target.samples.get(k).map(|x| x.re).unwrap_or(0.0);
        let j = seq.j.get(k).copied().unwrap_or(0.0);
        t.push(vec![fmt_num(out.wavepacket.time(k)), fmt_num(tg), fmt_num(z.re), fmt_num(z.im), fmt_num(j)]);
    }
    w.write("emission.csv", &t.render())?;
    w.json("emission.json", &serde_json::json!({
        "packet": e.packet,
        "method": e.method,
        "dt": dt,
        "duration": seq.duration(),
        "overlap_fidelity": f,
        "photon_norm": out.wavepacket.norm(),
        "matter_norm": out.matter_norm(),
        "d_phase": out.d_phase,
        "max_coupling": seq.j.iter().cloned().fold(0.0, f64::max),
    }))
}

fn cz_packet(packet: &PacketSpec, gamma0: f64) -> Result<Wavepacket> {
    match *packet {
        PacketSpec::Gaussian { tau } => {
            let dt = (tau / 50.0).min(0.02 / gamma0);
            Wavepacket::gaussian(tau, 8.0 * tau, dt, 16.0 * tau)
        }
        PacketSpec::ConstantCoupling { j_tilde } => {
            let s = constj_packet_stats(j_tilde, 0.0, gamma0)?;
            Wavepacket::constant_coupling(j_tilde, gamma0, 0.01 / gamma0, s.t_av + 14.0 * s.tau)
        }
    }
}

fn cz(w: &mut Writer, cfg: &RunConfig, array: &EmitterArray) -> Result<()> {
    let c = cfg.cz.as_ref().expect("validated");
    let pk = cz_packet(&c.packet, array.gamma0)?;
    let r = cz_fidelity(&pk, c.j, array.gamma0)?;
    let (t_av, var) = pk.moments();
    w.write("cz_packet.csv", &pk.to_csv(true))?;
    w.json("cz.json", &serde_json::json!({
        "packet": c.packet,
        "j": c.j,
        "numeric": {"o_g": [r.o_g.re, r.o_g.im], "o_d": [r.o_d.re, r.o_d.im], "fidelity": r.fidelity, "infidelity": r.infidelity()},
        "closed_form": r.closed_form.map(|cf| serde_json::json!({
            "o_g": [cf.o_g.re, cf.o_g.im], "o_d": [cf.o_d.re, cf.o_d.im], "fidelity": cf.fidelity, "infidelity": 1.0 - cf.fidelity,
        })),
        "zero_bandwidth_infidelity": zero_bandwidth_infidelity(c.j, array.gamma0),
        "t_av": t_av,
        "width": var.sqrt(),
    }))
}

fn protocol(w: &mut Writer, cfg: &RunConfig) -> Result<()> {
    let mut spec = cfg.protocol.clone().expect("validated");
    if let (Some(n), Some(d)) = (spec.noise.as_mut(), cfg.numerics.dt) {
        n.dt = d;
    }
    let r = apply_sequence(&spec)?;
    w.json("protocol.json", &r.to_json())
}

fn gate_sweep(w: &mut Writer, cfg: &RunConfig, task: Task) -> Result<()> {
    let sc = if task == Task::SweepFig3a { cfg.sweep_fig3a.as_ref() } else { cfg.sweep_fig3b.as_ref() }.expect("validated");
    let ts = sc.t.resolve("t")?;
    let js = sc.j.resolve("j")?;
    let gps = sc.gamma_prime.resolve("gamma_prime")?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &gp in &gps {
        let r = sweep_gate_infidelity(&ts, &js, gp)?;
        // slope along the swept axis for every fixed value of the other one
        if task == Task::SweepFig3a && ts.len() > 1 {
            for &j in &js {
                let pts: Vec<_> = r.iter().filter(|x| x.j == j).collect();
                let slope = loglog_slope(&ts, &pts.iter().map(|x| x.infidelity_y).collect::<Vec<_>>()).ok();
                fits.push(serde_json::json!({"gamma_prime": gp, "J": j, "slope_vs_T": slope}));
            }
        } else if task == Task::SweepFig3b && js.len() > 1 {
            for &t in &ts {
                let pts: Vec<_> = r.iter().filter(|x| x.t == t).collect();
                let slope = loglog_slope(&js, &pts.iter().map(|x| x.infidelity_y).collect::<Vec<_>>()).ok();
                fits.push(serde_json::json!({"gamma_prime": gp, "T": t, "slope_vs_J": slope}));
            }
        }
        rows.extend(r);
    }
    let stem = if task == Task::SweepFig3a { "sweep_fig3a" } else { "sweep_fig3b" };
    w.write(&format!("{stem}.csv"), &gate_sweep_csv(&rows))?;
    w.json(&format!("{stem}_fits.json"), &serde_json::json!({"fits": fits}))
}

fn cz_sweep(w: &mut Writer, cfg: &RunConfig, array: &EmitterArray) -> Result<()> {
    let sc = cfg.sweep_fig3c.as_ref().expect("validated");
    let bs = sc.b.resolve("b")?;
    if sc.packets.is_empty() {
        return invalid("sweep_fig3c needs at least one packet kind");
    }
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &kind in &sc.packets {
        let r = sweep_cz_bandwidth(&bs, sc.j, kind, array.gamma0)?;
        let excess: Vec<f64> = r.iter().map(|x| x.infidelity - x.floor).collect();
        let slope = if bs.len() > 1 { loglog_slope(&bs, &excess).ok() } else { None };
        fits.push(serde_json::json!({
            "packet": kind,
            "slope_above_floor": slope,
            "zero_bandwidth_floor": r[0].floor,
        }));
        rows.extend(r);
    }
    w.write("sweep_fig3c.csv", &cz_sweep_csv(&rows))?;
    w.json("sweep_fig3c_fits.json", &serde_json::json!({"fits": fits}))
}

fn robustness_sweep(w: &mut Writer, cfg: &RunConfig, dt: f64) -> Result<()> {
    let sc = cfg.sweep_figs1.as_ref().expect("validated");
    let sweep = RobustnessSweep {
        modes: sc.modes.clone(),
        epsilons: sc.epsilon.resolve("epsilon")?,
        gate_realizations: sc.gate_realizations,
        emission_realizations: sc.emission_realizations,
        seed: cfg.seed.unwrap_or(0),
    };
    let gate = sc.gate.clone().unwrap_or_else(default_gate);
    let tau = sc.target_tau;
    let target = Wavepacket::gaussian(tau, 6.0 * tau, dt, 12.0 * tau)?;
    let rows = sweep_robustness(&sweep, &gate, &target)?;
    w.write("sweep_figS1.csv", &robustness_csv(&rows))?;
    Ok(())
}
