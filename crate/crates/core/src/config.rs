//! Experiment configuration: schema, defaults, overrides and hashing.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bsde::Scheme;
use crate::counterexample::CounterexampleConfig;
use crate::error::{Error, Result};
use crate::estimates::ProofParams;
use crate::family::{DriverFamily, InstanceFamily, ObstacleFamily, TerminalFamily};
use crate::generator::{GeneratorSpec, ProcessSpec};
use crate::norms::NormConfig;
use crate::suites::SuiteConfig;
use crate::tree::TreeConfig;

/// Version accepted in the `version` field.
pub const CONFIG_VERSION: u32 = 1;

/// The configuration used when none is given on the command line.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.json");

/// What a configuration runs when invoked through `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    Reflect,
    Picard,
    #[default]
    Verify,
    Counterexample,
    SnellCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Reflect => "reflect",
            Self::Picard => "picard",
            Self::Verify => "verify",
            Self::Counterexample => "counterexample",
            Self::SnellCheck => "snell-check",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            Self::Solve,
            Self::Reflect,
            Self::Picard,
            Self::Verify,
            Self::Counterexample,
            Self::SnellCheck,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

/// Seeded instance family; the tree and seed come from the enclosing config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(default)]
    pub driver: DriverFamily,
    pub terminal: TerminalFamily,
    #[serde(default = "no_obstacle")]
    pub obstacle: ObstacleFamily,
    pub count: usize,
}

fn no_obstacle() -> ObstacleFamily {
    ObstacleFamily::None
}

/// A single hand-written instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub generator: GeneratorSpec,
    pub terminal: ProcessSpec,
    #[serde(default)]
    pub obstacle: Option<ProcessSpec>,
}

/// Overrides of the suite defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ProofParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_h: Option<Vec<f64>>,
}

/// Picard iteration settings; `alpha` defaults to `α* + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_picard_tol")]
    pub tol: f64,
}

fn default_max_iter() -> usize {
    500
}

fn default_picard_tol() -> f64 {
    1e-12
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            alpha: None,
            max_iter: default_max_iter(),
            tol: default_picard_tol(),
        }
    }
}

fn default_norms() -> Vec<NormConfig> {
    vec![NormConfig { p: 2.0, alpha: 0.0 }]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    pub tree: TreeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceSpec>,
    #[serde(default = "default_norms")]
    pub norms: Vec<NormConfig>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub suites: SuiteOptions,
    #[serde(default)]
    pub picard: PicardOptions,
    #[serde(default)]
    pub counterexample: CounterexampleConfig,
    /// Where artifacts go; not part of the hash.
    #[serde(default = "default_out", skip_serializing)]
    pub output: PathBuf,
}

impl ExperimentConfig {
    /// Parses JSON, reporting the path of the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn default_config() -> Self {
        Self::from_json(DEFAULT_CONFIG).expect("shipped default config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "at `version`: unsupported version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.tree
            .build()
            .map_err(|e| Error::Config(format!("at `tree`: {e}")))?;
        for (i, n) in self.norms.iter().enumerate() {
            n.validate().map_err(|e| Error::Config(format!("at `norms[{i}]`: {e}")))?;
        }
        if let Some(f) = &self.family {
            let fam = self.instance_family(f);
            fam.member(&fam.build_tree()?, 0)
                .map_err(|e| Error::Config(format!("at `family`: {e}")))?;
        }
        if let Some(inst) = &self.instance {
            let tree = self.tree.build()?;
            inst.generator
                .build(&tree)
                .map_err(|e| Error::Config(format!("at `instance.generator`: {e}")))?;
            inst.terminal
                .materialize(&tree)
                .map_err(|e| Error::Config(format!("at `instance.terminal`: {e}")))?;
            if let Some(o) = &inst.obstacle {
                o.materialize(&tree)
                    .map_err(|e| Error::Config(format!("at `instance.obstacle`: {e}")))?;
            }
        }
        if !(self.picard.tol > 0.0 && self.picard.max_iter > 0) {
            return Err(Error::Config("at `picard`: need tol > 0 and max_iter > 0".into()));
        }
        if let Some(a) = self.picard.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("at `picard.alpha`: must be non-negative, got {a}")));
            }
        }
        if let Some(f) = &self.family {
            self.suite_config(f)
                .validate()
                .map_err(|e| Error::Config(format!("at `suites`: {e}")))?;
        }
        Ok(())
    }

    pub fn instance_family(&self, spec: &FamilySpec) -> InstanceFamily {
        InstanceFamily {
            tree: self.tree.clone(),
            driver: spec.driver.clone(),
            terminal: spec.terminal.clone(),
            obstacle: spec.obstacle.clone(),
            count: spec.count,
            seed: self.seed,
        }
    }

    /// The configured family, or a config error naming the missing block.
    pub fn family(&self, what: &str) -> Result<InstanceFamily> {
        self.family
            .as_ref()
            .map(|f| self.instance_family(f))
            .ok_or_else(|| Error::Config(format!("{what} needs a `family` block")))
    }

    pub fn suite_config(&self, spec: &FamilySpec) -> SuiteConfig {
        let mut cfg = SuiteConfig::new(self.instance_family(spec));
        let o = &self.suites;
        if let Some(v) = &o.p_values {
            cfg.p_values = v.clone();
        }
        cfg.alpha = o.alpha;
        if let Some(v) = o.params {
            cfg.params = v;
        }
        if let Some(v) = o.samples {
            cfg.samples = v;
        }
        if let Some(v) = o.path_steps {
            cfg.path_steps = v;
        }
        if let Some(v) = &o.decay_h {
            cfg.decay_h = v.clone();
        }
        cfg
    }

    pub fn counterexample_config(&self) -> CounterexampleConfig {
        CounterexampleConfig {
            seed: self.seed,
            ..self.counterexample.clone()
        }
    }

    /// Canonical JSON; field order is fixed by the struct definitions.
    pub fn canonical_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_parses_and_round_trips() {
        let cfg = ExperimentConfig::default_config();
        let text = String::from_utf8(cfg.canonical_json()).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad = r#"{"version": 1, "tree": {"horizon": 1.0, "n_steps": "four"}}"#;
        let msg = ExperimentConfig::from_json(bad).unwrap_err().to_string();
        assert!(msg.contains("tree.n_steps"), "{msg}");
        let unknown = r#"{"version": 1, "tree": {"horizon": 1.0, "n_steps": 4}, "sed": 3}"#;
        let msg = ExperimentConfig::from_json(unknown).unwrap_err().to_string();
        assert!(msg.contains("sed"), "{msg}");
        let version = r#"{"version": 9, "tree": {"horizon": 1.0, "n_steps": 4}}"#;
        let msg = ExperimentConfig::from_json(version).unwrap_err().to_string();
        assert!(msg.contains("version"), "{msg}");
    }

    #[test]
    fn seed_changes_the_hash() {
        let a = ExperimentConfig::default_config();
        let b = ExperimentConfig { seed: a.seed + 1, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
    }
}
