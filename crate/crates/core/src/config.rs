//! Experiment configuration files (TOML).
//!
//! Frequencies are strings with a mandatory unit suffix (`"200 MHz"`,
//! `"5 GHz"`), durations are in ns and gate angles in units of π. Unknown
//! keys are rejected.
//!
//! ```
//! use cqed_synth::config::ExperimentConfig;
//! let cfg = ExperimentConfig::from_toml_str(r#"
//!     [system]
//!     preset = "B"
//!
//!     [[gates]]
//!     layer = "mix"
//!     angles = [0.2]
//!
//!     [pulse]
//!     durations_ns = [500.0]
//! "#).unwrap();
//! assert_eq!(cfg.system().unwrap().basis().dim_full(), 125);
//! assert_eq!(cfg.pulse.splines, 10);
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Integrator, StepControl};
use crate::error::{Error, Result};
use crate::fockspace::ModeSpec;
use crate::model::{CrossKerr, Frame, SystemSpec};
use crate::optimizer::OptimizerConfig;
use crate::targets::{build_layer, LayerKind, LayerOptions, TargetGate};
use crate::units::{ns, parse_frequency};

/// Shipped configuration for preset A.
pub const PRESET_A_TOML: &str = include_str!("../configs/preset_a.toml");
/// Shipped configuration for preset B.
pub const PRESET_B_TOML: &str = include_str!("../configs/preset_b.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub gates: Vec<GateConfig>,
    pub pulse: PulseConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// `"A"` or `"B"`; mutually exclusive with `modes`.
    #[serde(default)]
    pub preset: Option<String>,
    /// Control mode first, then the computational modes.
    #[serde(default)]
    pub modes: Vec<ModeConfig>,
    /// Explicit couplings. Absent: geometric-mean control couplings only.
    #[serde(default)]
    pub cross_kerr: Option<Vec<CrossKerrConfig>>,
    #[serde(default)]
    pub frame: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub label: String,
    pub essential_levels: usize,
    pub guard_levels: usize,
    pub frequency: String,
    pub self_kerr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossKerrConfig {
    pub a: String,
    pub b: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    /// `hadamard`, `mix` or `phase`.
    pub layer: String,
    /// Angles in units of π. Ignored for `hadamard`.
    #[serde(default)]
    pub angles: Vec<f64>,
    /// Qudit pairs of the phase-separation graph.
    #[serde(default)]
    pub graph: Option<Vec<(usize, usize)>>,
    /// Per-gate override of `optimizer.max_iterations`.
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub durations_ns: Vec<f64>,
    #[serde(default = "default_splines")]
    pub splines: usize,
}

fn default_splines() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub max_iterations: usize,
    /// Range of iteration caps, informational.
    pub max_iterations_range: Option<(usize, usize)>,
    pub target_fidelity: f64,
    pub memory: usize,
    pub restarts: usize,
    /// Symmetric amplitude box, e.g. `"5 MHz"`.
    pub bounds: Option<String>,
    pub init_amplitude: String,
    pub c1: f64,
    pub c2: f64,
    pub gradient_floor: f64,
    pub max_line_search: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            max_iterations: d.max_iterations,
            max_iterations_range: None,
            target_fidelity: d.target_fidelity,
            memory: d.memory,
            restarts: d.restarts,
            bounds: None,
            init_amplitude: "0.2 MHz".into(),
            c1: d.c1,
            c2: d.c2,
            gradient_floor: d.gradient_floor,
            max_line_search: d.max_line_search,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub steps: Option<usize>,
    pub integrator: Integrator,
    pub min_steps_per_period: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        let d = StepControl::default();
        Self {
            steps: d.steps,
            integrator: d.integrator,
            min_steps_per_period: d.min_steps_per_period,
        }
    }
}

/// One gate of the campaign, resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSpec {
    pub kind: LayerKind,
    /// Angle in units of π.
    pub angle_over_pi: f64,
    pub graph: Option<Vec<(usize, usize)>>,
    pub max_iterations: usize,
}

impl GateSpec {
    pub fn target(&self, system: &SystemSpec) -> Result<TargetGate> {
        let options = LayerOptions {
            graph: self.graph.clone(),
        };
        build_layer(system, self.kind, self.angle_over_pi * PI, &options)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Shipped preset configuration by name (`A` or `B`).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "A" | "a" => Self::from_toml_str(PRESET_A_TOML),
            "B" | "b" => Self::from_toml_str(PRESET_B_TOML),
            other => Err(Error::Config(format!("no shipped config for preset `{other}`"))),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.system()?;
        if self.gates.is_empty() {
            return Err(Error::Config("`gates` must list at least one gate".into()));
        }
        for gate in &self.gates {
            let kind = LayerKind::from_short_name(&gate.layer)?;
            if kind != LayerKind::Initialization && gate.angles.is_empty() {
                return Err(Error::Config(format!("gate `{}` needs a non-empty `angles` list", gate.layer)));
            }
            if gate.angles.iter().any(|a| !a.is_finite()) {
                return Err(Error::Config(format!("gate `{}` has a non-finite angle", gate.layer)));
            }
        }
        if self.pulse.durations_ns.is_empty() {
            return Err(Error::Config("`pulse.durations_ns` must not be empty".into()));
        }
        if self.pulse.durations_ns.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Config("`pulse.durations_ns` entries must be positive".into()));
        }
        self.optimizer_config()?.validate()?;
        Ok(())
    }

    pub fn system(&self) -> Result<SystemSpec> {
        let s = &self.system;
        let spec = match (&s.preset, s.modes.is_empty()) {
            (Some(_), false) => {
                return Err(Error::Config("`system.preset` and `system.modes` are mutually exclusive".into()))
            }
            (None, true) => return Err(Error::Config("`system` needs either `preset` or `modes`".into())),
            (Some(name), true) => {
                if s.cross_kerr.is_some() {
                    return Err(Error::Config("`system.cross_kerr` requires explicit `modes`".into()));
                }
                SystemSpec::preset(name).map_err(|e| Error::Config(e.to_string()))?
            }
            (None, false) => {
                let modes = s
                    .modes
                    .iter()
                    .map(|m| {
                        ModeSpec::new(
                            m.label.clone(),
                            m.essential_levels,
                            m.guard_levels,
                            parse_frequency(&m.frequency)?,
                            parse_frequency(&m.self_kerr)?,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut modes = modes.into_iter();
                let control = modes.next().expect("non-empty");
                let computational: Vec<ModeSpec> = modes.collect();
                match &s.cross_kerr {
                    None => SystemSpec::multimode(control, computational)?,
                    Some(list) => {
                        let labels: Vec<String> = std::iter::once(control.label.clone())
                            .chain(computational.iter().map(|m| m.label.clone()))
                            .collect();
                        let find = |l: &str| {
                            labels
                                .iter()
                                .position(|x| x == l)
                                .ok_or_else(|| Error::Config(format!("cross_kerr references unknown mode `{l}`")))
                        };
                        let terms = list
                            .iter()
                            .map(|c| {
                                Ok(CrossKerr {
                                    a: find(&c.a)?,
                                    b: find(&c.b)?,
                                    value: parse_frequency(&c.value)?,
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        SystemSpec::new(control, computational, terms)?
                    }
                }
            }
        };
        Ok(spec.with_frame(s.frame))
    }

    pub fn optimizer_config(&self) -> Result<OptimizerConfig> {
        let o = &self.optimizer;
        Ok(OptimizerConfig {
            max_iterations: o.max_iterations,
            target_fidelity: o.target_fidelity,
            memory: o.memory,
            restarts: o.restarts,
            seed: self.seed,
            bounds: o.bounds.as_deref().map(parse_frequency).transpose()?,
            c1: o.c1,
            c2: o.c2,
            gradient_floor: o.gradient_floor,
            max_line_search: o.max_line_search,
            init_amplitude: parse_frequency(&o.init_amplitude)?,
        })
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            steps: self.dynamics.steps,
            integrator: self.dynamics.integrator,
            min_steps_per_period: self.dynamics.min_steps_per_period,
        }
    }

    /// Durations in seconds.
    pub fn durations(&self) -> Vec<f64> {
        self.pulse.durations_ns.iter().map(|&t| ns(t)).collect()
    }

    /// Every (gate, angle) pair of the campaign, in file order.
    pub fn gate_specs(&self) -> Result<Vec<GateSpec>> {
        let mut out = Vec::new();
        for gate in &self.gates {
            let kind = LayerKind::from_short_name(&gate.layer)?;
            let angles = if kind == LayerKind::Initialization {
                vec![0.0]
            } else {
                gate.angles.clone()
            };
            for angle in angles {
                out.push(GateSpec {
                    kind,
                    angle_over_pi: angle,
                    graph: gate.graph.clone(),
                    max_iterations: gate.max_iterations.unwrap_or(self.optimizer.max_iterations),
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resonance::enumerate_transitions;

    #[test]
    fn shipped_presets_match_builtin_systems() {
        let a = ExperimentConfig::preset("A").unwrap();
        assert_eq!(a.system().unwrap(), SystemSpec::preset_a());
        let b = ExperimentConfig::preset("B").unwrap();
        assert_eq!(b.system().unwrap(), SystemSpec::preset_b());
    }

    #[test]
    fn table_values() {
        let a = ExperimentConfig::preset("A").unwrap();
        let b = ExperimentConfig::preset("B").unwrap();
        for cfg in [&a, &b] {
            assert_eq!(cfg.pulse.splines, 10);
            assert_eq!(cfg.optimizer.restarts, 10);
            assert_eq!(cfg.optimizer.target_fidelity, 0.99);
            let sys = cfg.system().unwrap();
            assert_eq!(sys.control.guard_levels, 3);
            assert!(sys.computational.iter().all(|m| m.guard_levels == 2));
        }
        assert_eq!(a.optimizer.max_iterations, 100);
        assert_eq!(b.optimizer.max_iterations_range, Some((30, 150)));
        assert_eq!(enumerate_transitions(&a.system().unwrap()).total_distinct(), 22);
        assert_eq!(enumerate_transitions(&b.system().unwrap()).total_distinct(), 17);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{PRESET_B_TOML}\nbogus = 1\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn missing_duration_names_field() {
        let err = ExperimentConfig::from_toml_str(
            "[system]\npreset = \"B\"\n[[gates]]\nlayer = \"mix\"\nangles = [0.2]\n[pulse]\nsplines = 10\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("durations_ns"), "{err}");
    }

    #[test]
    fn frequencies_need_units() {
        let text = PRESET_A_TOML.replace("\"0.6 MHz\"", "\"0.6\"");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Unit(_))));
    }

    #[test]
    fn toml_round_trip() {
        let b = ExperimentConfig::preset("B").unwrap();
        let again = ExperimentConfig::from_toml_str(&b.to_toml_string()).unwrap();
        assert_eq!(again, b);
    }

    #[test]
    fn gate_expansion() {
        let b = ExperimentConfig::preset("B").unwrap();
        let specs = b.gate_specs().unwrap();
        assert_eq!(specs.len(), 11 + 11 + 1);
        let t = specs[0].target(&b.system().unwrap()).unwrap();
        assert_eq!(t.dim(), 18);
    }
}
