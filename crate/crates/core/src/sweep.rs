//! Parameter sweeps behind the scaling studies. Points run on the rayon pool and come
//! back in input order.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emission::CpeParams;
use crate::error::{invalid, Result};
use crate::gates::{predicted_error_model, simulate_gate, GateSpec, Propagation};
use crate::io::{fmt_num, CsvTable};
use crate::robustness::{
    emission_infidelity_under, gate_infidelity_under, Perturbation, PerturbationMode, SweepRow,
};
use crate::scattering::{constj_packet_stats, cz_fidelity, j_tilde_for_bandwidth, zero_bandwidth_infidelity};
use crate::wavepacket::Wavepacket;

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("slope fit needs at least two paired points");
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return invalid("log-log fit needs positive data");
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GateSweepRow {
    pub t: f64,
    pub j: f64,
    pub gamma_prime: f64,
    pub omega: f64,
    pub infidelity_y: f64,
    pub infidelity_y_uncompensated: f64,
    pub infidelity_transfer: f64,
    pub leakage_y: f64,
    pub predicted_y: f64,
}

/// Y_{π/2} and CPE transfer-stage R_GA(π/2, 0) infidelities over the grid T × J.
pub fn sweep_gate_infidelity(ts: &[f64], js: &[f64], gamma_prime: f64) -> Result<Vec<GateSweepRow>> {
    if ts.is_empty() || js.is_empty() {
        return invalid("gate sweep needs non-empty T and J ranges");
    }
    if ts.iter().chain(js).any(|v| !(*v > 0.0)) {
        return invalid("gate sweep values must be > 0");
    }
    let points: Vec<(f64, f64)> = js.iter().flat_map(|&j| ts.iter().map(move |&t| (t, j))).collect();
    points
        .par_iter()
        .map(|&(t, j)| {
            let omega = (PI / 4.0) / t;
            let prop = Propagation::Exact;
            let y = simulate_gate(&GateSpec::y_half_pi(omega, j), gamma_prime, prop)?;
            let yu = simulate_gate(&GateSpec::y_half_pi(omega, j).with_compensation(false), gamma_prime, prop)?;
            let ga = simulate_gate(&GateSpec::r_ga(PI / 2.0, 0.0, (PI / 2.0) / t, j), gamma_prime, prop)?;
            let model = predicted_error_model(omega, j, 1.0)?;
            Ok(GateSweepRow {
                t,
                j,
                gamma_prime,
                omega,
                infidelity_y: y.infidelity(),
                infidelity_y_uncompensated: yu.infidelity(),
                infidelity_transfer: ga.infidelity(),
                leakage_y: y.leakage,
                predicted_y: 1.0 - model.f_leading,
            })
        })
        .collect()
}

pub fn gate_sweep_csv(rows: &[GateSweepRow]) -> String {
    let mut t = CsvTable::new("T in 1/gamma0; J, gamma_prime, Omega in gamma0; infidelities dimensionless", &[
        "T", "J", "gamma_prime", "Omega", "infidelity_Y", "infidelity_Y_uncompensated", "infidelity_CPE_transfer",
        "leakage_Y", "predicted_Y",
    ]);
    for r in rows {
        t.push(
            [r.t, r.j, r.gamma_prime, r.omega, r.infidelity_y, r.infidelity_y_uncompensated, r.infidelity_transfer, r.leakage_y, r.predicted_y]
                .iter()
                .map(|v| fmt_num(*v))
                .collect(),
        );
    }
    t.render()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    Gaussian,
    ConstantCoupling,
}

#[derive(Clone, Debug, Serialize)]
pub struct CzSweepRow {
    pub bandwidth: f64,
    pub kind: PacketKind,
    /// τ for Gaussian packets, J̃ for constant-coupling packets
    pub packet_parameter: f64,
    pub o_g: (f64, f64),
    pub o_d: (f64, f64),
    pub infidelity: f64,
    pub infidelity_closed_form: f64,
    pub floor: f64,
    pub bandwidth_definition: &'static str,
}

/// Packet with bandwidth `b`, on a grid fine enough for scattering.
pub fn packet_for_bandwidth(b: f64, kind: PacketKind, gamma0: f64) -> Result<(Wavepacket, f64)> {
    if !(b > 0.0) || b > gamma0 {
        return invalid(format!("bandwidth must lie in (0, γ0], got {b}"));
    }
    match kind {
        PacketKind::Gaussian => {
            let tau = 1.0 / b;
            let dt = (tau / 50.0).min(0.02 / gamma0);
            Ok((Wavepacket::gaussian(tau, 8.0 * tau, dt, 16.0 * tau)?, tau))
        }
        PacketKind::ConstantCoupling => {
            let jt = j_tilde_for_bandwidth(b, gamma0)?;
            let s = constj_packet_stats(jt, 0.0, gamma0)?;
            Ok((Wavepacket::constant_coupling(jt, gamma0, 0.01 / gamma0, s.t_av + 14.0 * s.tau)?, jt))
        }
    }
}

pub fn sweep_cz_bandwidth(bs: &[f64], j: f64, kind: PacketKind, gamma0: f64) -> Result<Vec<CzSweepRow>> {
    if bs.is_empty() {
        return invalid("bandwidth sweep needs at least one value");
    }
    let floor = zero_bandwidth_infidelity(j, gamma0);
    bs.par_iter()
        .map(|&b| {
            let (pk, param) = packet_for_bandwidth(b, kind, gamma0)?;
            let r = cz_fidelity(&pk, j, gamma0)?;
            let cf = r.closed_form.map(|c| 1.0 - c.fidelity).unwrap_or(f64::NAN);
            Ok(CzSweepRow {
                bandwidth: b,
                kind,
                packet_parameter: param,
                o_g: (r.o_g.re, r.o_g.im),
                o_d: (r.o_d.re, r.o_d.im),
                infidelity: r.infidelity(),
                infidelity_closed_form: cf,
                floor,
                bandwidth_definition: match kind {
                    PacketKind::Gaussian => "1/tau (Gaussian width parameter)",
                    PacketKind::ConstantCoupling => "1/tau (second-moment width)",
                },
            })
        })
        .collect()
}

pub fn cz_sweep_csv(rows: &[CzSweepRow]) -> String {
    let mut t = CsvTable::new("B in gamma0; tau in 1/gamma0; J_tilde in gamma0; overlaps and infidelities dimensionless", &[
        "B", "packet", "packet_parameter", "O_G_re", "O_G_im", "O_D_re", "O_D_im", "infidelity", "infidelity_closed_form",
        "zero_bandwidth_floor", "bandwidth_definition",
    ]);
    for r in rows {
        let kind = match r.kind {
            PacketKind::Gaussian => "gaussian",
            PacketKind::ConstantCoupling => "constant_coupling",
        };
        let mut row = vec![fmt_num(r.bandwidth), kind.to_string()];
        row.extend(
            [r.packet_parameter, r.o_g.0, r.o_g.1, r.o_d.0, r.o_d.1, r.infidelity, r.infidelity_closed_form, r.floor]
                .iter()
                .map(|v| fmt_num(*v)),
        );
        row.push(r.bandwidth_definition.to_string());
        t.push(row);
    }
    t.render()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessSweep {
    pub modes: Vec<PerturbationMode>,
    pub epsilons: Vec<f64>,
    pub gate_realizations: usize,
    pub emission_realizations: usize,
    pub seed: u64,
}

pub fn sweep_robustness(cfg: &RobustnessSweep, gate: &GateSpec, target: &Wavepacket) -> Result<Vec<SweepRow>> {
    if cfg.modes.is_empty() || cfg.epsilons.is_empty() {
        return invalid("robustness sweep needs modes and ε values");
    }
    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        for &eps in &cfg.epsilons {
            let p = Perturbation { mode, epsilon: eps, seed: Some(cfg.seed), realizations: cfg.gate_realizations };
            rows.push(SweepRow { observable: "gate", mode, epsilon: eps, stats: gate_infidelity_under(&p, gate)? });
            let p = Perturbation { realizations: cfg.emission_realizations, ..p };
            rows.push(SweepRow { observable: "emission", mode, epsilon: eps, stats: emission_infidelity_under(&p, target)? });
        }
    }
    Ok(rows)
}

/// CPE parameters at a sweep point (same J and gate time as the matter rotation).
pub fn cpe_params(j: f64, omega: f64, gamma_prime: f64) -> CpeParams {
    CpeParams { j_ga: j, omega_ga: omega, j_y: j, omega_y: omega, gamma_prime, gamma0: 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = logspace(1.0, 100.0, 7);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-1.7)).collect();
        assert!((loglog_slope(&x, &y).unwrap() + 1.7).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn empty_ranges_rejected() {
        assert!(sweep_gate_infidelity(&[], &[10.0], 0.0).is_err());
        assert!(sweep_cz_bandwidth(&[], 10.0, PacketKind::Gaussian, 1.0).is_err());
        assert!(packet_for_bandwidth(2.0, PacketKind::Gaussian, 1.0).is_err());
    }

    #[test]
    fn sweep_preserves_order() {
        let rows = sweep_gate_infidelity(&[20.0, 5.0], &[10.0, 20.0], 0.0).unwrap();
        let order: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.j)).collect();
        assert_eq!(order, vec![(20.0, 10.0), (5.0, 10.0), (20.0, 20.0), (5.0, 20.0)]);
    }
}
