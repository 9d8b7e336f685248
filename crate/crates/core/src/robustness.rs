//! Imperfections of the emitter array: non-guided loss, a systematic spacing error and
//! Gaussian position disorder. Controls stay tuned to the nominal mirror configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{nonhermitian_hamiltonian, ControlSegment};
use crate::emission::{optimal_coupling_sequence, CouplingSequence};
use crate::error::{invalid, Result};
use crate::gates::{simulate_gate_on, GateSpec, Propagation};
use crate::geometry::{emitted_field, EmitterArray};
use crate::io::{fmt_num, CsvTable};
use crate::linalg::{CMat, CVec, C64, I};
use crate::ode::rk4_step;
use crate::rng;
use crate::wavepacket::Wavepacket;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PerturbationMode {
    GammaPrime,
    Spacing,
    Disorder,
}

impl PerturbationMode {
    pub fn label(&self) -> &'static str {
        match self {
            PerturbationMode::GammaPrime => "GAMMA_PRIME",
            PerturbationMode::Spacing => "SPACING",
            PerturbationMode::Disorder => "DISORDER",
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub mode: PerturbationMode,
    pub epsilon: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub realizations: usize,
}

impl Perturbation {
    pub fn new(mode: PerturbationMode, epsilon: f64) -> Self {
        Perturbation { mode, epsilon, seed: None, realizations: 1 }
    }

    pub fn disorder(epsilon: f64, seed: u64, realizations: usize) -> Self {
        Perturbation { mode: PerturbationMode::Disorder, epsilon, seed: Some(seed), realizations }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return invalid("ε must be finite and ≥ 0");
        }
        if self.realizations < 1 {
            return invalid("at least one realization is required");
        }
        if self.mode == PerturbationMode::Disorder && self.seed.is_none() {
            return invalid("DISORDER needs a seed");
        }
        Ok(())
    }

    /// Deterministic modes need a single evaluation.
    pub fn effective_realizations(&self) -> usize {
        if self.mode == PerturbationMode::Disorder {
            self.realizations
        } else {
            1
        }
    }
}

const MAX_ATTEMPTS: u64 = 1000;

/// Perturbed copy of `base` and the number of rejected disorder draws.
pub fn perturbed_array(base: &EmitterArray, p: &Perturbation, realization: usize) -> Result<(EmitterArray, u64)> {
    p.validate()?;
    base.validate()?;
    let mut out = base.clone();
    match p.mode {
        PerturbationMode::GammaPrime => out.gamma_prime = p.epsilon * base.gamma0,
        PerturbationMode::Spacing => {
            let x0 = base.positions[0];
            out.positions = base.positions.iter().map(|x| x0 + (x - x0) * (1.0 + p.epsilon)).collect();
        }
        PerturbationMode::Disorder => {
            let seed = p.seed.unwrap_or_default();
            let n = base.n() as u64;
            for attempt in 0..MAX_ATTEMPTS {
                let pos: Vec<f64> = base
                    .positions
                    .iter()
                    .enumerate()
                    .map(|(k, x)| x + p.epsilon * rng::normal(seed, realization as u64, attempt, k as u64, n))
                    .collect();
                if pos.iter().all(|&x| x > 0.0) {
                    out.positions = pos;
                    if attempt > 0 {
                        log::info!("realization {realization}: {attempt} disorder draws rejected");
                    }
                    return Ok((out, attempt));
                }
            }
            return invalid(format!("no admissible disorder draw after {MAX_ATTEMPTS} attempts"));
        }
    }
    Ok((out, 0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub stderr: f64,
    pub realizations: usize,
    pub rejected: u64,
}

impl Stats {
    pub fn from_samples(xs: &[f64], rejected: u64) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt()
        } else {
            0.0
        };
        Stats { mean, stderr, realizations: n, rejected }
    }

    /// One-sided test at 95% that `self` lies above `other`.
    pub fn significantly_above(&self, other: &Stats) -> bool {
        self.mean - other.mean > 1.645 * (self.stderr.powi(2) + other.stderr.powi(2)).sqrt()
    }
}

fn over_realizations(p: &Perturbation, f: impl Fn(usize) -> Result<(f64, u64)> + Sync) -> Result<Stats> {
    p.validate()?;
    let r = p.effective_realizations();
    let results: Vec<(f64, u64)> = (0..r).into_par_iter().map(&f).collect::<Result<_>>()?;
    let xs: Vec<f64> = results.iter().map(|x| x.0).collect();
    Ok(Stats::from_samples(&xs, results.iter().map(|x| x.1).sum()))
}

pub fn gate_infidelity_under(p: &Perturbation, spec: &GateSpec) -> Result<Stats> {
    let base = EmitterArray::mirror();
    over_realizations(p, |k| {
        let (arr, rej) = perturbed_array(&base, p, k)?;
        Ok((simulate_gate_on(spec, &arr, Propagation::Exact)?.infidelity(), rej))
    })
}

/// Emission of −i|A⟩ on `array` under `seq`, in the single-excitation sector.
pub fn emit_on_array(array: &EmitterArray, seq: &CouplingSequence) -> Result<Wavepacket> {
    if array.n() != 3 {
        return invalid("emission needs three emitters");
    }
    let idx = [0b001usize, 0b010, 0b100];
    let block = |seg: &ControlSegment| -> Result<CMat> {
        let h = nonhermitian_hamiltonian(array, seg, 0.0)?;
        Ok(CMat::from_fn(3, 3, |r, c| h[(idx[r], idx[c])]))
    };
    // H(J) is affine in J at Δ = −4J, δ = 8J
    let h0 = block(&ControlSegment::idle(seq.dt, 0.0, 0.0, 0.0))?;
    let h1 = block(&ControlSegment::idle(seq.dt, -4.0, 8.0, 1.0))? - &h0;
    let a = crate::hilbert::modes::a();
    let mut y = CVec::from_fn(3, |k, _| -I * a[k]);
    let mut rows = vec![y.iter().copied().collect::<Vec<C64>>()];
    for &j in &seq.j {
        let h = &h0 + &h1 * crate::linalg::c(j, 0.0);
        let gen = h * crate::linalg::c(0.0, -1.0);
        y = rk4_step(&y, seq.dt, |s| &gen * s);
        rows.push(y.iter().copied().collect());
    }
    emitted_field(0.0, seq.dt, &rows, array)
}

pub fn emission_infidelity_under(p: &Perturbation, target: &Wavepacket) -> Result<Stats> {
    let seq = optimal_coupling_sequence(target, EmitterArray::mirror().gamma0)?;
    let tn = target.normalized()?;
    let base = EmitterArray::mirror();
    over_realizations(p, |k| {
        let (arr, rej) = perturbed_array(&base, p, k)?;
        let out = emit_on_array(&arr, &seq)?;
        Ok((1.0 - tn.overlap(&out)?.norm_sqr(), rej))
    })
}

/// Operating points used when none are configured.
pub fn default_gate() -> GateSpec {
    GateSpec::y_half_pi(0.2, 10.0)
}

pub fn default_target(dt: f64) -> Result<Wavepacket> {
    Wavepacket::gaussian(1.75, 10.5, dt, 21.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub observable: &'static str,
    pub mode: PerturbationMode,
    pub epsilon: f64,
    pub stats: Stats,
}

pub fn robustness_csv(rows: &[SweepRow]) -> String {
    let mut t = CsvTable::new("epsilon dimensionless; infidelity dimensionless", &[
        "observable", "mode", "epsilon", "realizations", "mean_infidelity", "stderr",
    ]);
    for r in rows {
        t.push(vec![
            r.observable.to_string(),
            r.mode.label().to_string(),
            fmt_num(r.epsilon),
            r.stats.realizations.to_string(),
            fmt_num(r.stats.mean),
            fmt_num(r.stats.stderr),
        ]);
    }
    t.render()
}

pub fn ensure_disorder_seed(p: &mut Perturbation, seed: u64) {
    if p.mode == PerturbationMode::Disorder && p.seed.is_none() {
        p.seed = Some(seed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epsilon_identity() {
        let base = EmitterArray::mirror();
        for mode in [PerturbationMode::GammaPrime, PerturbationMode::Spacing] {
            let (a, _) = perturbed_array(&base, &Perturbation::new(mode, 0.0), 0).unwrap();
            assert_eq!(a, base);
        }
        let (a, _) = perturbed_array(&base, &Perturbation::disorder(0.0, 1, 5), 3).unwrap();
        assert_eq!(a, base);
    }

    #[test]
    fn spacing_keeps_first_emitter() {
        let (a, _) = perturbed_array(&EmitterArray::mirror(), &Perturbation::new(PerturbationMode::Spacing, 0.1), 0).unwrap();
        assert_eq!(a.positions[0], 1.25);
        assert!((a.positions[2] - 1.25 - 2.2).abs() < 1e-14);
    }

    #[test]
    fn disorder_needs_seed_and_rejects_negative() {
        let mut p = Perturbation::new(PerturbationMode::Disorder, 0.1);
        assert!(p.validate().is_err());
        p.seed = Some(3);
        assert!(p.validate().is_ok());
        let near = EmitterArray::new(vec![0.05, 1.05, 2.05], 1.0, 0.0).unwrap();
        let (a, _) = perturbed_array(&near, &Perturbation::disorder(0.2, 11, 40), 2).unwrap();
        assert!(a.positions.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn nominal_emission_matches_reduced() {
        let target = default_target(1e-3).unwrap();
        let s = emission_infidelity_under(&Perturbation::new(PerturbationMode::Spacing, 0.0), &target).unwrap();
        assert!(s.mean < 1e-3, "{}", s.mean);
    }
}
