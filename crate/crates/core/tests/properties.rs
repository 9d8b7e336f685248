use std::f64::consts::PI;

use dfs_core::dynamics::{evolve_master, Integration};
use dfs_core::emission::{emit_constant_j, optimal_coupling_sequence, overlap_fidelity};
use dfs_core::gates::{gate_schedule, ideal_gate, simulate_gate, GateSpec, Propagation};
use dfs_core::geometry::{coupling_matrices, EmitterArray};
use dfs_core::hilbert;
use dfs_core::linalg::{hermitian_eigenvalues, is_hermitian, max_abs_diff, trace, CMat, C64, I, ZERO};
use dfs_core::protocol::{apply_sequence, NoiseParams, ProtocolSpec};
use dfs_core::rng::normal;
use dfs_core::scattering::{reflection_d, reflection_g, scattering_overlap, MatterBranch};
use dfs_core::wavepacket::Wavepacket;
use proptest::prelude::*;

fn unitary_err(u: &CMat) -> f64 {
    max_abs_diff(&(u.adjoint() * u), &CMat::identity(u.nrows(), u.ncols()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_is_symmetric_psd(x1 in 0.0..1.0f64, d1 in 0.05..3.0f64, d2 in 0.05..3.0f64) {
        let a = EmitterArray::new(vec![x1, x1 + d1, x1 + d1 + d2], 1.0, 0.0).unwrap();
        let cm = coupling_matrices(&a);
        let g = cm.gamma_mat();
        prop_assert!(is_hermitian(&g, 1e-12));
        prop_assert!(is_hermitian(&cm.j_mat(), 1e-12));
        for e in hermitian_eigenvalues(&g) {
            prop_assert!(e > -1e-10, "eigenvalue {e}");
        }
    }

    #[test]
    fn ideal_gates_are_unitary(theta in -7.0..7.0f64, phi in -7.0..7.0f64, om in 0.01..1.0f64, j in 1.0..50.0f64) {
        for s in [
            GateSpec::r_dg(theta.abs(), phi, om, j),
            GateSpec::r_ga(theta.abs(), phi, om, j),
            GateSpec::p_a(phi, j),
            GateSpec::p_d(phi, j),
        ] {
            prop_assert!(unitary_err(&ideal_gate(&s)) < 1e-12);
        }
    }

    #[test]
    fn phase_gates_compose(a in -6.0..6.0f64, b in -6.0..6.0f64, j in 1.0..50.0f64) {
        let ua = ideal_gate(&GateSpec::p_a(a, j));
        let ub = ideal_gate(&GateSpec::p_a(b, j));
        prop_assert!(max_abs_diff(&(&ua * &ub), &ideal_gate(&GateSpec::p_a(a + b, j))) < 1e-12);
        let da = ideal_gate(&GateSpec::p_d(a, j));
        let db = ideal_gate(&GateSpec::p_d(b, j));
        prop_assert!(max_abs_diff(&(&da * &db), &ideal_gate(&GateSpec::p_d(a + b, j))) < 1e-12);
    }

    #[test]
    fn reflection_has_unit_modulus(w in -1e3..1e3f64, j in -50.0..50.0f64, g in 0.1..10.0f64) {
        prop_assert!((reflection_g(w, j, g).norm() - 1.0).abs() < 1e-12);
        prop_assert!((reflection_d(w, j, g).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rng_is_reproducible(seed in any::<u64>(), r in 0u64..1000, att in 0u64..4, e in 0u64..3) {
        let x = normal(seed, r, att, e, 3);
        prop_assert_eq!(x.to_bits(), normal(seed, r, att, e, 3).to_bits());
        prop_assert!(x.is_finite());
        prop_assert_ne!(x.to_bits(), normal(seed, r, att, (e + 1) % 3, 3).to_bits());
        prop_assert_ne!(x.to_bits(), normal(seed, r + 1, att, e, 3).to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn spectrum_preserves_norm(tau in 0.5..6.0f64, pad in 1usize..4) {
        let p = Wavepacket::gaussian(tau, 8.0 * tau, tau / 40.0, 16.0 * tau).unwrap();
        let s = p.spectrum(1 << pad);
        prop_assert!((s.norm() - p.norm()).abs() < 1e-9, "{} vs {}", s.norm(), p.norm());
    }

    #[test]
    fn scattering_is_lossless(tau in 1.0..8.0f64, j in 1.0..30.0f64) {
        let p = Wavepacket::gaussian(tau, 8.0 * tau, (tau / 50.0).min(0.02), 16.0 * tau).unwrap();
        for b in [MatterBranch::G, MatterBranch::D] {
            prop_assert!(scattering_overlap(&p, b, j, 1.0).unwrap().norm() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn leakage_grows_with_drive(om in 0.02..0.05f64, j in 5.0..30.0f64) {
        let om = om * j / 10.0;
        let a = simulate_gate(&GateSpec::y_half_pi(om, j), 0.0, Propagation::Exact).unwrap();
        let b = simulate_gate(&GateSpec::y_half_pi(1.4 * om, j), 0.0, Propagation::Exact).unwrap();
        prop_assert!(b.leakage > a.leakage, "{} !> {}", b.leakage, a.leakage);
    }

    #[test]
    fn emission_conserves_excitation(j in 0.0..0.35f64, t in 0.5..15.0f64, phase in 0.0..(2.0 * PI)) {
        // lossless: what leaves the emitters is in the photon
        let d0 = C64::from_polar(0.6, phase);
        let out = emit_constant_j(d0, -I * 0.8, j, t, 1e-3, 1.0).unwrap();
        let total = out.wavepacket.norm() + out.matter_norm();
        prop_assert!((total - 1.0).abs() < 1e-6, "total {total}");
    }

    #[test]
    fn inversion_reproduces_gaussians(tau in 1.5..4.0f64) {
        let target = Wavepacket::gaussian(tau, 6.0 * tau, 1e-3, 12.0 * tau).unwrap();
        let seq = optimal_coupling_sequence(&target, 1.0).unwrap();
        let out = dfs_core::emission::emit_with_coupling(ZERO, -I, &seq, 1.0, 0.0).unwrap();
        prop_assert!(overlap_fidelity(&target, &out.wavepacket).unwrap() > 0.9998);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn master_equation_keeps_trace_and_hermiticity(theta in 0.3..3.0f64, phi in -3.0..3.0f64, gp in 0.0..0.1f64) {
        let spec = GateSpec::r_dg(theta, phi, 1.0, 10.0);
        let sched = gate_schedule(&spec, 1.0).unwrap();
        let a = EmitterArray::mirror().with_gamma_prime(gp);
        let psi = hilbert::ket_d();
        let rho0 = &psi * psi.adjoint();
        let tr = evolve_master(&rho0, &a, &sched, &Integration { dt: 1e-3, stride: 500 }).unwrap();
        for r in &tr.states {
            prop_assert!((trace(r).re - 1.0).abs() < 1e-9);
            prop_assert!(is_hermitian(r, 1e-10));
        }
    }

    #[test]
    fn ideal_protocols_are_exact(m in 1usize..7, kind in 0usize..3) {
        let spec = match kind {
            0 => ProtocolSpec::ghz(m),
            1 => ProtocolSpec::cluster_1d(m),
            _ => ProtocolSpec::cluster_2d(2, m.clamp(2, 4)),
        };
        let r = apply_sequence(&spec).unwrap();
        prop_assert!((r.fidelity - 1.0).abs() < 1e-10, "{}", r.fidelity);
        for (k, s) in &r.stabilizers {
            prop_assert!((s - 1.0).abs() < 1e-10, "{k}: {s}");
        }
    }
}

#[test]
fn bystander_phase_follows_exchange() {
    // weak drive: the spectator D picks up exp(-2iJT)
    let spec = GateSpec::r_ga(PI / 2.0, 0.0, 0.02, 10.0);
    let r = simulate_gate(&spec, 0.0, Propagation::Exact).unwrap();
    let want = -2.0 * 10.0 * spec.duration();
    let got = r.achieved[(0, 0)].arg();
    let d = (got - want).rem_euclid(2.0 * PI);
    assert!(d.min(2.0 * PI - d) < 1e-3, "phase {got} vs {want}");
}

#[test]
fn ghz_fidelity_drops_with_length() {
    for gp in [1e-3, 1e-2] {
        let f: Vec<f64> = (2..=5)
            .map(|m| apply_sequence(&ProtocolSpec::ghz(m).noisy(NoiseParams::new(10.0, 0.2, gp))).unwrap().fidelity)
            .collect();
        assert!(f.windows(2).all(|w| w[1] < w[0]), "γ' = {gp}: {f:?}");
    }
}
