//! Run configuration: one JSON document, one section per task, unknown keys rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{GateSpec, Propagation};
use crate::geometry::EmitterArray;
use crate::protocol::{PacketSpec, ProtocolSpec};
use crate::robustness::PerturbationMode;
use crate::sweep::{logspace, PacketKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "couplings")]
    Couplings,
    #[serde(rename = "gate")]
    Gate,
    #[serde(rename = "emit")]
    Emit,
    #[serde(rename = "cz")]
    Cz,
    #[serde(rename = "protocol")]
    Protocol,
    #[serde(rename = "sweep-fig3a")]
    SweepFig3a,
    #[serde(rename = "sweep-fig3b")]
    SweepFig3b,
    #[serde(rename = "sweep-fig3c")]
    SweepFig3c,
    #[serde(rename = "sweep-figS1")]
    SweepFigS1,
}

impl Task {
    pub const ALL: [Task; 9] = [
        Task::Couplings,
        Task::Gate,
        Task::Emit,
        Task::Cz,
        Task::Protocol,
        Task::SweepFig3a,
        Task::SweepFig3b,
        Task::SweepFig3c,
        Task::SweepFigS1,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Couplings => "couplings",
            Task::Gate => "gate",
            Task::Emit => "emit",
            Task::Cz => "cz",
            Task::Protocol => "protocol",
            Task::SweepFig3a => "sweep-fig3a",
            Task::SweepFig3b => "sweep-fig3b",
            Task::SweepFig3c => "sweep-fig3c",
            Task::SweepFigS1 => "sweep-figS1",
        }
    }

    pub fn parse(s: &str) -> Result<Task> {
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task '{s}'")))
    }
}

/// Either an explicit list or `{"start", "stop", "num", "log"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Values {
    List(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub num: usize,
    #[serde(default)]
    pub log: bool,
}

impl Values {
    pub fn resolve(&self, what: &str) -> Result<Vec<f64>> {
        let v = match self {
            Values::List(v) => v.clone(),
            Values::Range(r) => {
                if r.log {
                    if !(r.start > 0.0 && r.stop > 0.0) {
                        return Err(Error::Config(format!("{what}: log range needs positive bounds")));
                    }
                    logspace(r.start, r.stop, r.num)
                } else if r.num == 1 {
                    vec![r.start]
                } else {
                    (0..r.num).map(|k| r.start + (r.stop - r.start) * k as f64 / (r.num - 1) as f64).collect()
                }
            }
        };
        if v.is_empty() {
            return Err(Error::Config(format!("{what}: empty range")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!("{what}: values must be finite")));
        }
        Ok(v)
    }
}

fn ten() -> usize {
    10
}
fn eight() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// time step for emission grids and RK4 propagation
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "ten")]
    pub stride: usize,
    #[serde(default = "eight")]
    pub padding: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics { dt: None, stride: 10, padding: 8 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub prefix: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateTask {
    pub spec: GateSpec,
    #[serde(default)]
    pub gamma_prime: f64,
    #[serde(default)]
    pub propagation: Propagation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitMethod {
    /// discrete inversion of the emission equations
    #[default]
    Inversion,
    /// J(t) = √(γ0γ_eff/24) (Gaussian targets only)
    Adiabatic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitTask {
    pub packet: PacketSpec,
    #[serde(default)]
    pub gamma_prime: f64,
    #[serde(default)]
    pub method: EmitMethod,
}

fn j_default() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CzTask {
    pub packet: PacketSpec,
    #[serde(default = "j_default")]
    pub j: f64,
}

fn zero_values() -> Values {
    Values::List(vec![0.0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSweepConfig {
    pub t: Values,
    pub j: Values,
    #[serde(default = "zero_values")]
    pub gamma_prime: Values,
}

fn both_packets() -> Vec<PacketKind> {
    vec![PacketKind::Gaussian, PacketKind::ConstantCoupling]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CzSweepConfig {
    pub b: Values,
    #[serde(default = "j_default")]
    pub j: f64,
    #[serde(default = "both_packets")]
    pub packets: Vec<PacketKind>,
}

fn hundred() -> usize {
    100
}
fn fifty() -> usize {
    50
}
fn target_tau() -> f64 {
    1.75
}
fn all_modes() -> Vec<PerturbationMode> {
    vec![PerturbationMode::GammaPrime, PerturbationMode::Spacing, PerturbationMode::Disorder]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    #[serde(default = "all_modes")]
    pub modes: Vec<PerturbationMode>,
    pub epsilon: Values,
    #[serde(default = "hundred")]
    pub gate_realizations: usize,
    #[serde(default = "fifty")]
    pub emission_realizations: usize,
    /// operating point; Y_{π/2} at Ω = 0.2γ0, J = 10γ0 when absent
    #[serde(default)]
    pub gate: Option<GateSpec>,
    #[serde(default = "target_tau")]
    pub target_tau: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub array: Option<EmitterArray>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub gate: Option<GateTask>,
    #[serde(default)]
    pub emit: Option<EmitTask>,
    #[serde(default)]
    pub cz: Option<CzTask>,
    #[serde(default)]
    pub protocol: Option<ProtocolSpec>,
    #[serde(default)]
    pub sweep_fig3a: Option<GateSweepConfig>,
    #[serde(default)]
    pub sweep_fig3b: Option<GateSweepConfig>,
    #[serde(default)]
    pub sweep_fig3c: Option<CzSweepConfig>,
    #[serde(default, rename = "sweep_figS1")]
    pub sweep_figs1: Option<RobustnessConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks the section for `task` exists and basic numeric sanity.
    pub fn validate_for(&self, task: Task) -> Result<()> {
        if let Some(t) = self.task {
            if t != task {
                return Err(Error::Config(format!("config is for task '{}', not '{}'", t.name(), task.name())));
            }
        }
        if let Some(dt) = self.numerics.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::Config("numerics.dt must be > 0".into()));
            }
        }
        if self.numerics.stride == 0 || self.numerics.padding == 0 {
            return Err(Error::Config("numerics.stride and numerics.padding must be ≥ 1".into()));
        }
        if let Some(a) = &self.array {
            a.validate()?;
        }
        let missing = |s: &str| Err(Error::Config(format!("task '{}' needs a '{s}' section", task.name())));
        match task {
            Task::Couplings => Ok(()),
            Task::Gate if self.gate.is_none() => missing("gate"),
            Task::Emit if self.emit.is_none() => missing("emit"),
            Task::Cz if self.cz.is_none() => missing("cz"),
            Task::Protocol if self.protocol.is_none() => missing("protocol"),
            Task::SweepFig3a if self.sweep_fig3a.is_none() => missing("sweep_fig3a"),
            Task::SweepFig3b if self.sweep_fig3b.is_none() => missing("sweep_fig3b"),
            Task::SweepFig3c if self.sweep_fig3c.is_none() => missing("sweep_fig3c"),
            Task::SweepFigS1 if self.sweep_figs1.is_none() => missing("sweep_figS1"),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"gate": {"spec": {"kind": "R_DG"}, "bogus": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"colour": 1}"#).is_err());
    }

    #[test]
    fn values_forms() {
        let list: Values = serde_json::from_str("[1, 2, 3]").unwrap();
        assert_eq!(list.resolve("x").unwrap(), vec![1.0, 2.0, 3.0]);
        let r: Values = serde_json::from_str(r#"{"start": 1, "stop": 100, "num": 3, "log": true}"#).unwrap();
        let v = r.resolve("x").unwrap();
        assert!((v[1] - 10.0).abs() < 1e-12);
        let empty: Values = serde_json::from_str("[]").unwrap();
        assert!(matches!(empty.resolve("x"), Err(Error::Config(_))));
    }

    #[test]
    fn task_names_round_trip() {
        for t in Task::ALL {
            assert_eq!(Task::parse(t.name()).unwrap(), t);
            let j = serde_json::to_string(&t).unwrap();
            assert_eq!(j, format!("\"{}\"", t.name()));
        }
    }

    #[test]
    fn section_required() {
        let c = RunConfig::from_json("{}").unwrap();
        assert!(c.validate_for(Task::Couplings).is_ok());
        assert!(matches!(c.validate_for(Task::Gate), Err(Error::Config(_))));
    }
}
