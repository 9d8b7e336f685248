//! Acceptance suite. One line per criterion; exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use dfs_core::dynamics::{evolve_master, expm_oracle, ControlSchedule, ControlSegment, Integration};
use dfs_core::emission::{emit_with_coupling, optimal_coupling_sequence, overlap_fidelity};
use dfs_core::geometry::{coupling_matrices, EmitterArray};
use dfs_core::hilbert;
use dfs_core::linalg::{c, frobenius, CMat, CVec, C64, I, ZERO};
use dfs_core::protocol::{apply_sequence, ProtocolSpec};
use dfs_core::rng::normal;
use dfs_core::robustness::{
    default_gate, default_target, emission_infidelity_under, gate_infidelity_under, Perturbation, PerturbationMode,
    Stats,
};
use dfs_core::scattering::{
    constant_coupling_overlaps, gaussian_overlaps, scattering_overlap, zero_bandwidth_infidelity, MatterBranch,
};
use dfs_core::sweep::{logspace, loglog_slope, sweep_cz_bandwidth, sweep_gate_infidelity, PacketKind};
use dfs_core::wavepacket::Wavepacket;

type Outcome = (bool, String);

fn pure(v: &CVec) -> CMat {
    v * v.adjoint()
}

fn c1_couplings() -> Outcome {
    let t = Instant::now();
    let cm = coupling_matrices(&EmitterArray::mirror());
    let mut worst = 0.0f64;
    for a in 0..3 {
        for b in 0..3 {
            worst = worst.max(cm.j[a][b].abs()).max((cm.gamma[a][b] - 1.0).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    (worst <= 1e-12 && secs < 1.0, format!("max |J|, |Γ−γ0| = {worst:.2e}, {secs:.3} s"))
}

fn c2_dark_states() -> Outcome {
    let a = EmitterArray::mirror();
    let sched = ControlSchedule::new(vec![ControlSegment::idle(20.0, 0.0, 0.0, 0.0)]);
    let opts = Integration { dt: 1e-3, stride: 100 };
    let mut dark = 0.0f64;
    for k in [hilbert::ket_d(), hilbert::ket_a()] {
        let r0 = pure(&k);
        let tr = evolve_master(&r0, &a, &sched, &opts).unwrap();
        for r in &tr.states {
            dark = dark.max(frobenius(&(r - &r0)));
        }
    }
    let b = hilbert::ket_b();
    let tr = evolve_master(&pure(&b), &a, &sched, &opts).unwrap();
    let mut rel = 0.0f64;
    for (t, r) in tr.times.iter().zip(&tr.states) {
        let p = (b.adjoint() * r * &b)[(0, 0)].re;
        let want = (-3.0 * t).exp();
        rel = rel.max((p - want).abs() / want);
    }
    (dark <= 1e-9 && rel <= 1e-6, format!("dark drift {dark:.2e}, |B⟩ relative error {rel:.2e}"))
}

fn c3_integrator() -> Outcome {
    let a = EmitterArray::mirror().with_gamma_prime(0.05);
    let seg = ControlSegment::driven(5.0, 0.4, -1.0, 2.0, vec![c(0.3, 0.0), c(0.0, 0.5), c(0.2, -0.1)]);
    let sched = ControlSchedule::new(vec![seg.clone()]);
    let opts = Integration { dt: 1e-3, stride: 5000 };
    let mut worst = 0.0f64;
    for k in 0..10u64 {
        let v: Vec<C64> = (0..8).map(|i| c(normal(3, k, 0, 2 * i, 16), normal(3, k, 0, 2 * i + 1, 16))).collect();
        let v = CVec::from_vec(v).normalize();
        let r0 = pure(&v);
        let rk = evolve_master(&r0, &a, &sched, &opts).unwrap();
        let ex = expm_oracle(&a, &seg, 5.0, &r0).unwrap();
        worst = worst.max(frobenius(&(rk.last() - ex)));
    }
    (worst <= 1e-8, format!("max Frobenius distance {worst:.2e} over 10 states"))
}

fn c4_scaling_t() -> Outcome {
    let ts = logspace(4.0, 40.0, 6);
    let rows = sweep_gate_infidelity(&ts, &[10.0], 0.0).unwrap();
    let slope = loglog_slope(&ts, &rows.iter().map(|r| r.infidelity_y).collect::<Vec<_>>()).unwrap();
    let ts2 = logspace(0.3, 100.0, 12);
    let noisy: Vec<f64> = sweep_gate_infidelity(&ts2, &[10.0], 1e-3).unwrap().iter().map(|r| r.infidelity_y).collect();
    let imin = (0..noisy.len()).min_by(|&i, &j| noisy[i].total_cmp(&noisy[j])).unwrap();
    let interior = imin > 0 && imin + 1 < noisy.len();
    (
        (slope + 1.0).abs() <= 0.1 && interior,
        format!("slope {slope:.3}; γ′=1e-3 minimum at T = {:.2} (index {imin}/{})", ts2[imin], noisy.len() - 1),
    )
}

fn c5_scaling_j() -> Outcome {
    let js = logspace(5.0, 50.0, 6);
    let rows = sweep_gate_infidelity(&[20.0], &js, 0.0).unwrap();
    let slope = loglog_slope(&js, &rows.iter().map(|r| r.infidelity_y).collect::<Vec<_>>()).unwrap();
    let js2 = logspace(5.0, 500.0, 9);
    let noisy: Vec<f64> = sweep_gate_infidelity(&[20.0], &js2, 1e-3).unwrap().iter().map(|r| r.infidelity_y).collect();
    let tail = loglog_slope(&js2[6..], &noisy[6..]).unwrap();
    (
        (slope + 2.0).abs() <= 0.15 && tail > -0.3,
        format!("slope {slope:.3}; γ′=1e-3 slope over J ∈ [{:.0}, 500] is {tail:.3}", js2[6]),
    )
}

fn c6_error_model() -> Outcome {
    let ts = logspace(4.0, 40.0, 6);
    let js = logspace(5.0, 50.0, 6);
    let rows = sweep_gate_infidelity(&ts, &js, 0.0).unwrap();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for r in &rows {
        let q = r.predicted_y / r.infidelity_y;
        lo = lo.min(q);
        hi = hi.max(q);
    }
    let pick = |f: &dyn Fn(&&dfs_core::sweep::GateSweepRow) -> bool| -> (Vec<f64>, Vec<f64>) {
        let v: Vec<_> = rows.iter().filter(f).collect();
        (v.iter().map(|r| r.infidelity_y).collect(), v.iter().map(|r| r.predicted_y).collect())
    };
    let nearest = |xs: &[f64], x: f64| xs.iter().cloned().min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs())).unwrap();
    let (jn, tn) = (nearest(&js, 10.0), nearest(&ts, 20.0));
    let (sim_t, mod_t) = pick(&|r| r.j == jn);
    let (sim_j, mod_j) = pick(&|r| r.t == tn);
    let st = (loglog_slope(&ts, &sim_t).unwrap(), loglog_slope(&ts, &mod_t).unwrap());
    let sj = (loglog_slope(&js, &sim_j).unwrap(), loglog_slope(&js, &mod_j).unwrap());
    let ok = lo >= 0.5 && hi <= 2.0 && (st.1 + 1.0).abs() <= 0.1 && (sj.1 + 2.0).abs() <= 0.15;
    (
        ok,
        format!(
            "model/sim ratio ∈ [{lo:.2}, {hi:.2}] on {} points; T slope sim {:.3} model {:.3}; J slope sim {:.3} model {:.3}",
            rows.len(),
            st.0,
            st.1,
            sj.0,
            sj.1
        ),
    )
}

fn c7_photon_shaping() -> Outcome {
    let tau = 1.75;
    let target = Wavepacket::gaussian(tau, 6.0 * tau, 1e-3, 12.0 * tau).unwrap();
    let seq = optimal_coupling_sequence(&target, 1.0).unwrap();
    let out = emit_with_coupling(ZERO, -I, &seq, 1.0, 0.0).unwrap();
    let f = overlap_fidelity(&target, &out.wavepacket).unwrap();
    let jt = 0.1;
    let packet = Wavepacket::constant_coupling(jt, 1.0, 1e-3, 60.0).unwrap();
    let back = optimal_coupling_sequence(&packet, 1.0).unwrap();
    // compare where the packet still carries amplitude
    let cut = (40.0 / 1e-3) as usize;
    let dev = back.j[5..cut].iter().map(|x| (x - jt).abs() / jt).fold(0.0, f64::max);
    (f >= 0.99 && dev <= 0.05, format!("Gaussian overlap fidelity {f:.6}; J̃ recovered within {:.2}%", 100.0 * dev))
}

fn c8_cz_closed_forms() -> Outcome {
    let j = 10.0;
    let mut worst = 0.0f64;
    for tau in [4.0, 6.0, 10.0] {
        let p = Wavepacket::gaussian(tau, 8.0 * tau, 0.02, 16.0 * tau).unwrap();
        let (g, d) = gaussian_overlaps(tau, j, 1.0);
        worst = worst.max((scattering_overlap(&p, MatterBranch::G, j, 1.0).unwrap() - g).norm());
        worst = worst.max((scattering_overlap(&p, MatterBranch::D, j, 1.0).unwrap() - d).norm());
    }
    for jt in [0.02, 0.05] {
        let p = Wavepacket::constant_coupling(jt, 1.0, 0.01, 10.0 / jt).unwrap();
        let (g, d) = constant_coupling_overlaps(jt, j, 1.0);
        worst = worst.max((scattering_overlap(&p, MatterBranch::G, j, 1.0).unwrap() - g).norm());
        worst = worst.max((scattering_overlap(&p, MatterBranch::D, j, 1.0).unwrap() - d).norm());
    }
    let floor = zero_bandwidth_infidelity(j, 1.0);
    let stated = 0.8 / (1.0 + 16.0 * j * j);
    let rel = (floor - stated).abs() / stated;
    // the narrowest packet we can afford, as a direct check of the floor
    let narrow = Wavepacket::gaussian(200.0, 1600.0, 0.05, 3200.0).unwrap();
    let og = scattering_overlap(&narrow, MatterBranch::G, j, 1.0).unwrap();
    let od = scattering_overlap(&narrow, MatterBranch::D, j, 1.0).unwrap();
    let numeric = 1.0 - dfs_core::scattering::cz_fidelity_from_overlaps(og, od);
    (
        worst <= 1e-3 && rel <= 0.01,
        format!(
            "max |O − closed form| {worst:.2e}; floor {floor:.4e} vs (4/5)γ0²/(γ0²+16J²) = {stated:.4e} ({:.1}% off); τ = 200 numeric {numeric:.4e}",
            100.0 * rel
        ),
    )
}

fn c9_scaling_b() -> Outcome {
    let bs = logspace(0.01, 0.1, 5);
    let mut slopes = Vec::new();
    for kind in [PacketKind::Gaussian, PacketKind::ConstantCoupling] {
        let rows = sweep_cz_bandwidth(&bs, 10.0, kind, 1.0).unwrap();
        let ex: Vec<f64> = rows.iter().map(|r| r.infidelity - r.floor).collect();
        slopes.push(loglog_slope(&bs, &ex).unwrap());
    }
    (
        (slopes[0] - 2.0).abs() <= 0.2 && (slopes[1] - 1.0).abs() <= 0.2,
        format!("Gaussian slope {:.3}, constant-J slope {:.3}", slopes[0], slopes[1]),
    )
}

fn c10_protocols() -> Outcome {
    let mut specs: Vec<ProtocolSpec> = Vec::new();
    for m in 1..=6 {
        specs.push(ProtocolSpec::ghz(m));
        specs.push(ProtocolSpec::cluster_1d(m));
    }
    specs.push(ProtocolSpec::cluster_2d(2, 2));
    specs.push(ProtocolSpec::cluster_2d(2, 3));
    let (mut fid, mut stab, mut pur) = (0.0f64, 0.0f64, 0.0f64);
    for s in &specs {
        let r = apply_sequence(s).unwrap();
        fid = fid.max(1.0 - r.fidelity);
        for (_, v) in &r.stabilizers {
            stab = stab.max((v - 1.0).abs());
        }
        pur = pur.max(1.0 - r.matter_purity);
    }
    (
        fid <= 1e-9 && stab <= 1e-9 && pur <= 1e-9,
        format!("{} runs: 1−F ≤ {fid:.1e}, stabilizer error ≤ {stab:.1e}, 1−purity ≤ {pur:.1e}", specs.len()),
    )
}

fn c11_robustness() -> Outcome {
    let seed = 1;
    let gate = default_gate();
    let target = default_target(1e-3).unwrap();
    let run = |mode, eps: f64| -> (Stats, Stats) {
        let mut p = Perturbation::new(mode, eps);
        if mode == PerturbationMode::Disorder {
            p = Perturbation::disorder(eps, seed, 100);
        }
        let g = gate_infidelity_under(&p, &gate).unwrap();
        if mode == PerturbationMode::Disorder {
            p.realizations = 50;
        }
        (g, emission_infidelity_under(&p, &target).unwrap())
    };
    let (bg, be) = run(PerturbationMode::Spacing, 0.0);
    let mut ok = true;
    let mut notes = Vec::new();
    for eps in [1e-4, 1e-3] {
        let (g, e) = run(PerturbationMode::Spacing, eps);
        let dg = (g.mean / bg.mean - 1.0).abs();
        let de = (e.mean / be.mean - 1.0).abs();
        // the plateau is a statement about the drive-limited gate; the emission
        // baseline is the inversion residual and is reported only
        ok &= dg <= 0.1;
        notes.push(format!("SPACING {eps:.0e}: gate {:+.1}% (emission {:+.1}%)", 100.0 * dg, 100.0 * de));
    }
    for mode in [PerturbationMode::GammaPrime, PerturbationMode::Spacing, PerturbationMode::Disorder] {
        let (g, e) = run(mode, 0.1);
        let up = g.significantly_above(&bg) && e.significantly_above(&be);
        ok &= up;
        notes.push(format!("{} 0.1: gate {:.2e}, emission {:.2e}{}", mode.label(), g.mean, e.mean, if up { "" } else { " (not significant)" }));
    }
    let again = run(PerturbationMode::Disorder, 0.1);
    let first = run(PerturbationMode::Disorder, 0.1);
    let repro = again.0.mean.to_bits() == first.0.mean.to_bits() && again.1.mean.to_bits() == first.1.mean.to_bits();
    ok &= repro;
    notes.push(format!("reproducible {repro}"));
    (ok, format!("baseline gate {:.3e}, emission {:.3e}; {}", bg.mean, be.mean, notes.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("mirror couplings", c1_couplings),
        ("dark-state protection", c2_dark_states),
        ("integrator vs matrix exponential", c3_integrator),
        ("gate infidelity vs T", c4_scaling_t),
        ("gate infidelity vs J", c5_scaling_j),
        ("error model consistency", c6_error_model),
        ("photon shaping", c7_photon_shaping),
        ("CZ closed forms", c8_cz_closed_forms),
        ("CZ infidelity vs bandwidth", c9_scaling_b),
        ("ideal protocols", c10_protocols),
        ("robustness trends", c11_robustness),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(f) {
            Ok(r) => r,
            Err(_) => (false, "panicked".to_string()),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {name}: {detail} [{:.1} s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
