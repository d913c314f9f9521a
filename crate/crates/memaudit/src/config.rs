//! Experiment configuration: one TOML file describing the data, the target,
//! the attacker, optional DP training and a single scenario sweep.
//!
//! ```toml
//! name = "depth"
//! seeds = [0, 1, 2]
//!
//! [dataset.synth]
//! kind = "blobs"
//! classes = 2
//! per_class = 400
//! features = 6
//! spread = 0.4
//!
//! [target]
//! model = { kind = "decision_tree" }
//! split = { target_train_fraction = 0.4, eval_in_count = 100, eval_out_count = 100 }
//!
//! [scenario]
//! kind = "depth_sweep"
//! depths = [1, 3, 5, "unbounded"]
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use memaudit_core::attack::ShadowDataSource;
use memaudit_core::audit::{AttackMethod, AttackerPlan, AuditPlan, ClassGroup, DpPlan, SubstitutePlan};
use memaudit_core::data::{SkewConfig, SplitPlan, SynthSpec};
use memaudit_core::dp::{DpConfig, NoiseSchedule};
use memaudit_core::models::{ModelKind, ModelSpec, TreeParams};
use serde::{Deserialize, Serialize};

use crate::csvio::CsvSource;
use crate::error::{io_err, parse_err, Result};

pub const ENV_OUTPUT_DIR: &str = "MEMAUDIT_OUTPUT_DIR";
pub const ENV_MASTER_SEED: &str = "MEMAUDIT_MASTER_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Mixed into every per-seed run; overridable from the environment.
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetBlock,
    #[serde(default)]
    pub target: TargetBlock,
    #[serde(default)]
    pub skew: Option<SkewBlock>,
    #[serde(default)]
    pub attacker: AttackerPlan,
    #[serde(default)]
    pub dp: Option<DpBlock>,
    #[serde(default)]
    pub groups: Vec<ClassGroup>,
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default)]
    pub outputs: OutputBlock,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    "memaudit-out".into()
}

/// Exactly one of `csv` or `synth`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetBlock {
    pub csv: Option<CsvSource>,
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetBlock {
    pub model: ModelSpec,
    pub split: SplitBlock,
}

impl Default for TargetBlock {
    fn default() -> Self {
        Self {
            model: ModelSpec::default_for(ModelKind::DecisionTree),
            split: SplitBlock::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitBlock {
    pub target_train_fraction: f64,
    pub eval_in_count: usize,
    pub eval_out_count: usize,
}

impl Default for SplitBlock {
    fn default() -> Self {
        Self {
            target_train_fraction: 0.3,
            eval_in_count: 100,
            eval_out_count: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewBlock {
    pub target_class: usize,
    pub target_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpBlock {
    #[serde(default)]
    pub training: DpConfig,
    /// Required whenever an epsilon target is given.
    pub delta: Option<f64>,
    /// Calibrate a fixed noise multiplier to reach this ε.
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// Write `pca.csv` (train vs. predicted-in/out) per run.
    pub pca: bool,
    /// Write the attack dataset as `attack_records.csv` per run.
    pub attack_records: bool,
    /// Save the target model (`target_model.json`) per run.
    pub save_models: bool,
    pub substitute: Option<SubstitutePlan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    /// Noise on the records the attacker queries.
    TargetData,
    /// Noise on the attacker's shadow data.
    ShadowData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unbounded {
    Unbounded,
}

/// A tree depth: a number or the string `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Depth {
    Limited(usize),
    Unbounded(Unbounded),
}

impl Depth {
    pub fn max_depth(self) -> Option<usize> {
        match self {
            Self::Limited(d) => Some(d),
            Self::Unbounded(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    #[default]
    Single,
    SkewSweep {
        fractions: Vec<f64>,
        #[serde(default)]
        target_class: usize,
    },
    NoiseSweep {
        sigmas: Vec<f64>,
        applied_to: NoiseTarget,
    },
    /// Every (shadow model kind, attack model kind) pair.
    TransferMatrix { kinds: Vec<ModelKind> },
    DpSweep {
        #[serde(default)]
        epsilons: Vec<f64>,
        #[serde(default)]
        sigmas: Vec<f64>,
    },
    DepthSweep { depths: Vec<Depth> },
}

/// One point of the scenario sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPoint {
    pub id: String,
    pub plan: AuditPlan,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads a config file; a relative CSV path is resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| parse_err(path, e))?;
        if let Some(csv) = &mut cfg.dataset.csv {
            if csv.path.is_relative() {
                if let Some(dir) = path.parent() {
                    csv.path = dir.join(&csv.path);
                }
            }
        }
        Ok(cfg)
    }

    /// Canonical JSON of the resolved config; hashed into the manifest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    fn needs_delta(&self) -> bool {
        let sweep_eps = matches!(&self.scenario, Scenario::DpSweep { epsilons, .. } if !epsilons.is_empty());
        sweep_eps || self.dp.as_ref().is_some_and(|d| d.epsilon.is_some())
    }

    fn base_plan(&self) -> AuditPlan {
        AuditPlan {
            target: self.target.model.clone(),
            split: SplitPlan {
                seed: 0,
                target_train_fraction: self.target.split.target_train_fraction,
                eval_in_count: self.target.split.eval_in_count,
                eval_out_count: self.target.split.eval_out_count,
            },
            skew: self.skew.map(|s| SkewConfig {
                target_class: s.target_class,
                target_fraction: s.target_fraction,
                seed: 0,
            }),
            attacker: self.attacker.clone(),
            dp: self.dp.as_ref().map(|d| DpPlan {
                config: d.training.clone(),
                delta: d.delta.unwrap_or(memaudit_core::accountant::DEFAULT_DELTA),
                target_epsilon: d.epsilon,
            }),
            groups: self.groups.clone(),
            pca_view: self.outputs.pca,
            substitute: self.outputs.substitute.clone(),
            keep_attack_records: self.outputs.attack_records,
            keep_target_model: self.outputs.save_models,
        }
    }

    /// Expands the scenario into concrete audit plans, in sweep order.
    pub fn points(&self) -> Vec<ScenarioPoint> {
        let base = self.base_plan();
        let point = |id: String, plan: AuditPlan| ScenarioPoint { id, plan };
        match &self.scenario {
            Scenario::Single => vec![point("single".into(), base)],
            Scenario::SkewSweep { fractions, target_class } => fractions
                .iter()
                .map(|&f| {
                    let mut p = base.clone();
                    p.skew = Some(SkewConfig {
                        target_class: *target_class,
                        target_fraction: f,
                        seed: 0,
                    });
                    point(format!("skew_{f}"), p)
                })
                .collect(),
            Scenario::NoiseSweep { sigmas, applied_to } => sigmas
                .iter()
                .map(|&s| {
                    let mut p = base.clone();
                    match applied_to {
                        NoiseTarget::TargetData => p.attacker.query_noise = s,
                        NoiseTarget::ShadowData => {
                            if let Some(shadow) = shadow_of(&mut p.attacker.method) {
                                shadow.source = ShadowDataSource::NoisyCopy { sigma: s };
                            }
                        }
                    }
                    let tag = match applied_to {
                        NoiseTarget::TargetData => "target_data",
                        NoiseTarget::ShadowData => "shadow_data",
                    };
                    point(format!("noise_{tag}_{s}"), p)
                })
                .collect(),
            Scenario::TransferMatrix { kinds } => {
                let mut out = Vec::new();
                for &s in kinds {
                    for &a in kinds {
                        let mut p = base.clone();
                        if let AttackMethod::Shadow { shadow, attack } = &mut p.attacker.method {
                            shadow.shadow_spec = ModelSpec::default_for(s);
                            attack.spec = ModelSpec::default_for(a);
                        }
                        out.push(point(format!("transfer_{}_{}", s.name(), a.name()), p));
                    }
                }
                out
            }
            Scenario::DpSweep { epsilons, sigmas } => {
                let mut out = Vec::new();
                let dp_base = base.dp.clone().unwrap_or_default();
                for &e in epsilons {
                    let mut p = base.clone();
                    p.dp = Some(DpPlan {
                        target_epsilon: Some(e),
                        ..dp_base.clone()
                    });
                    out.push(point(format!("dp_eps_{e}"), p));
                }
                for &s in sigmas {
                    let mut p = base.clone();
                    let mut dp = dp_base.clone();
                    dp.target_epsilon = None;
                    dp.config.schedule = NoiseSchedule::Fixed { sigma: s };
                    p.dp = Some(dp);
                    out.push(point(format!("dp_sigma_{s}"), p));
                }
                out
            }
            Scenario::DepthSweep { depths } => depths
                .iter()
                .map(|&d| {
                    let mut p = base.clone();
                    let tree = |spec: &mut ModelSpec| {
                        if let ModelSpec::DecisionTree(t) = spec {
                            *t = TreeParams {
                                max_depth: d.max_depth(),
                                ..t.clone()
                            };
                        }
                    };
                    tree(&mut p.target);
                    if let Some(shadow) = shadow_of(&mut p.attacker.method) {
                        tree(&mut shadow.shadow_spec);
                    }
                    let id = match d.max_depth() {
                        Some(n) => format!("depth_{n}"),
                        None => "depth_unbounded".into(),
                    };
                    point(id, p)
                })
                .collect(),
        }
    }

    /// Every problem that would stop the run, each naming its config path.
    /// Empty iff the config is runnable.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.seeds.is_empty() {
            out.push("seeds: at least one seed is required".into());
        }
        match (&self.dataset.csv, &self.dataset.synth) {
            (Some(_), Some(_)) | (None, None) => out.push("dataset: exactly one of csv or synth is required".into()),
            (Some(csv), None) => {
                if !csv.path.is_file() {
                    out.push(format!("dataset.csv.path: {} does not exist", csv.path.display()));
                }
            }
            (None, Some(synth)) => out.extend(synth_problems(synth)),
        }
        if self.needs_delta() && self.dp.as_ref().and_then(|d| d.delta).is_none() {
            out.push("dp.delta: missing; delta is required when an epsilon target is given".into());
        }
        match &self.scenario {
            Scenario::Single => {}
            Scenario::SkewSweep { fractions, .. } => {
                if fractions.is_empty() {
                    out.push("scenario.fractions: empty".into());
                }
                for (i, f) in fractions.iter().enumerate() {
                    if !(*f > 0.0 && *f <= 1.0) {
                        out.push(format!("scenario.fractions[{i}]: target_fraction must be in (0,1]"));
                    }
                }
            }
            Scenario::NoiseSweep { sigmas, applied_to } => {
                if sigmas.is_empty() {
                    out.push("scenario.sigmas: empty".into());
                }
                for (i, s) in sigmas.iter().enumerate() {
                    if !(0.0..=1.0).contains(s) {
                        out.push(format!("scenario.sigmas[{i}]: noise level {s} must be in [0,1]"));
                    }
                }
                let mut method = self.attacker.method.clone();
                if *applied_to == NoiseTarget::ShadowData && shadow_of(&mut method).is_none() {
                    out.push("scenario.applied_to: shadow_data needs an attacker with shadow models".into());
                }
            }
            Scenario::TransferMatrix { kinds } => {
                if kinds.is_empty() {
                    out.push("scenario.kinds: empty".into());
                }
                if !matches!(self.attacker.method, AttackMethod::Shadow { .. }) {
                    out.push("scenario: transfer_matrix needs a shadow-model attacker".into());
                }
            }
            Scenario::DpSweep { epsilons, sigmas } => {
                if self.dp.is_none() {
                    out.push("dp: dp_sweep needs a dp block".into());
                }
                if epsilons.is_empty() == sigmas.is_empty() {
                    out.push("scenario: dp_sweep needs exactly one of epsilons or sigmas".into());
                }
                for (i, e) in epsilons.iter().enumerate() {
                    if !(*e > 0.0 && e.is_finite()) {
                        out.push(format!("scenario.epsilons[{i}]: {e} must be > 0"));
                    }
                }
                for (i, s) in sigmas.iter().enumerate() {
                    if !(*s >= 0.0 && s.is_finite()) {
                        out.push(format!("scenario.sigmas[{i}]: {s} must be >= 0"));
                    }
                }
            }
            Scenario::DepthSweep { depths } => {
                if depths.is_empty() {
                    out.push("scenario.depths: empty".into());
                }
                if self.target.model.kind() != ModelKind::DecisionTree {
                    out.push("target.model: depth_sweep needs a decision_tree target".into());
                }
            }
        }
        let mut seen: BTreeSet<String> = out.iter().cloned().collect();
        let plans = std::iter::once(self.base_plan()).chain(self.points().into_iter().map(|p| p.plan));
        for plan in plans {
            for problem in plan.problems() {
                if seen.insert(problem.clone()) {
                    out.push(problem);
                }
            }
        }
        out
    }
}

fn shadow_of(method: &mut AttackMethod) -> Option<&mut memaudit_core::attack::ShadowConfig> {
    match method {
        AttackMethod::Shadow { shadow, .. } => Some(shadow),
        AttackMethod::Threshold { shadow, .. } => shadow.as_mut(),
    }
}

fn synth_problems(s: &SynthSpec) -> Vec<String> {
    let mut out = Vec::new();
    let (classes, per_class, features) = match *s {
        SynthSpec::Blobs { classes, per_class, features, spread } => {
            if !(spread >= 0.0 && spread.is_finite()) {
                out.push(format!("dataset.synth.spread: {spread} must be >= 0"));
            }
            (classes, per_class, features)
        }
        SynthSpec::Purchases { classes, per_class, features, flip_prob } => {
            if !(0.0..0.5).contains(&flip_prob) {
                out.push(format!("dataset.synth.flip_prob: {flip_prob} must be in [0,0.5)"));
            }
            (classes, per_class, features)
        }
    };
    if classes < 2 {
        out.push("dataset.synth.classes: need at least 2".into());
    }
    if per_class == 0 || features == 0 {
        out.push("dataset.synth: per_class and features must be >= 1".into());
    }
    out
}

/// Default DP block used by `dp_sweep` when only sweep values are given.
pub fn default_dp_block() -> DpBlock {
    DpBlock {
        training: DpConfig::default(),
        delta: Some(memaudit_core::accountant::DEFAULT_DELTA),
        epsilon: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset.synth]
kind = "blobs"
classes = 3
per_class = 100
features = 4
spread = 0.2
"#;

    #[test]
    fn minimal_config_is_valid() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.validate(), Vec::<String>::new());
        assert_eq!(cfg.points().len(), 1);
        assert_eq!(cfg.seeds, vec![0]);
    }

    #[test]
    fn zero_skew_fraction_is_reported() {
        let text = format!("{MINIMAL}\n[skew]\ntarget_class = 0\ntarget_fraction = 0.0\n");
        let p = ExperimentConfig::from_toml(&text).unwrap().validate();
        assert!(p.iter().any(|s| s.contains("target_fraction must be in (0,1]")), "{p:?}");
        let text = format!("{MINIMAL}\n[scenario]\nkind = \"skew_sweep\"\nfractions = [0.1, 0.0]\n");
        let p = ExperimentConfig::from_toml(&text).unwrap().validate();
        assert!(p.iter().any(|s| s == "scenario.fractions[1]: target_fraction must be in (0,1]"), "{p:?}");
    }

    #[test]
    fn epsilon_without_delta_names_the_field() {
        let text = format!(
            "{MINIMAL}\n[target.model]\nkind = \"logistic_regression\"\n[dp]\n[scenario]\nkind = \"dp_sweep\"\nepsilons = [1.0, 8.0]\n"
        );
        let p = ExperimentConfig::from_toml(&text).unwrap().validate();
        assert!(p.iter().any(|s| s.starts_with("dp.delta: missing")), "{p:?}");
    }

    #[test]
    fn problems_accumulate() {
        let text = r#"
seeds = []
[dataset]
[target.split]
target_train_fraction = 1.5
[scenario]
kind = "depth_sweep"
depths = []
"#;
        let p = ExperimentConfig::from_toml(text).unwrap().validate();
        assert!(p.len() >= 4, "{p:?}");
        assert!(p.iter().any(|s| s.starts_with("dataset:")));
        assert!(p.iter().any(|s| s.starts_with("target.split.target_train_fraction")));
    }

    #[test]
    fn scenarios_expand() {
        let depth = format!("{MINIMAL}\n[scenario]\nkind = \"depth_sweep\"\ndepths = [1, 3, \"unbounded\"]\n");
        let cfg = ExperimentConfig::from_toml(&depth).unwrap();
        let ids: Vec<String> = cfg.points().into_iter().map(|p| p.id).collect();
        assert_eq!(ids, ["depth_1", "depth_3", "depth_unbounded"]);
        let transfer = format!(
            "{MINIMAL}\n[scenario]\nkind = \"transfer_matrix\"\nkinds = [\"decision_tree\", \"knn\", \"logistic_regression\", \"gaussian_nb\"]\n"
        );
        let pts = ExperimentConfig::from_toml(&transfer).unwrap().points();
        assert_eq!(pts.len(), 16);
        let noise = format!("{MINIMAL}\n[scenario]\nkind = \"noise_sweep\"\nsigmas = [0.0, 0.5]\napplied_to = \"shadow_data\"\n");
        let pts = ExperimentConfig::from_toml(&noise).unwrap().points();
        let AttackMethod::Shadow { shadow, .. } = &pts[1].plan.attacker.method else { panic!() };
        assert_eq!(shadow.source, ShadowDataSource::NoisyCopy { sigma: 0.5 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}\nbogus = 1\n")).is_err());
    }
}
