//! One complete audit: split the data, train the target (optionally with
//! DP-SGD), mount the configured attack and summarize the outcome. Every
//! random choice derives from a single master seed.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::accountant::{calibrate_noise_multiplier, AccountantState, DEFAULT_DELTA};
use crate::attack::{
    build_attack_dataset, build_shadow_data, build_substitute, train_attack_model, train_shadows, AttackConfig,
    AttackRecord, MembershipAttack, MembershipView, ShadowConfig, SubstituteConfig, ThresholdAttackConfig,
};
use crate::data::{apply_skew, inject_noise, split_in_out, Dataset, SkewConfig, SplitPlan};
use crate::dp::{dp_train, AccountingSummary, DpConfig, NoiseSchedule};
use crate::error::invalid;
use crate::models::{train, Classifier, ModelSpec, ProbModel};
use crate::report::{evaluate_attack, utility_summary, Clock, Subgroup, UtilityLossSummary, VulnerabilityReport};
use crate::rng::{derive_seed, streams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackMethod {
    /// Shadow models feeding a trained attack classifier.
    Shadow {
        #[serde(default)]
        shadow: ShadowConfig,
        #[serde(default)]
        attack: AttackConfig,
    },
    /// Loss threshold; `Auto` thresholds use the shadows for calibration.
    Threshold {
        threshold: ThresholdAttackConfig,
        #[serde(default)]
        shadow: Option<ShadowConfig>,
    },
}

impl Default for AttackMethod {
    fn default() -> Self {
        Self::Shadow {
            shadow: ShadowConfig::default(),
            attack: AttackConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackerPlan {
    pub method: AttackMethod,
    /// Uniform `[0, σ]` noise on the records the attacker queries.
    pub query_noise: f64,
    /// Train shadows with the target's DP-SGD recipe when the target has one.
    pub mirror_dp: bool,
}

impl Default for AttackerPlan {
    fn default() -> Self {
        Self {
            method: AttackMethod::default(),
            query_noise: 0.0,
            mirror_dp: true,
        }
    }
}

/// Private training of the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpPlan {
    pub config: DpConfig,
    pub delta: f64,
    /// Replaces the schedule by the fixed σ that reaches this ε.
    pub target_epsilon: Option<f64>,
}

impl Default for DpPlan {
    fn default() -> Self {
        Self {
            config: DpConfig::default(),
            delta: DEFAULT_DELTA,
            target_epsilon: None,
        }
    }
}

impl DpPlan {
    /// The DP config actually used for `n_train` rows.
    pub fn resolve(&self, n_train: usize) -> Result<DpConfig> {
        let mut cfg = self.config.clone();
        if let Some(eps) = self.target_epsilon {
            let q = cfg.sampling_rate(n_train);
            let steps = (cfg.epochs * cfg.steps_per_epoch(n_train)) as u64;
            let sigma = calibrate_noise_multiplier(eps, self.delta, q, steps)?;
            cfg.schedule = NoiseSchedule::Fixed { sigma };
        }
        Ok(cfg)
    }
}

/// A named set of classes reported as one subgroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassGroup {
    pub name: String,
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditPlan {
    pub target: ModelSpec,
    pub split: SplitPlan,
    pub skew: Option<SkewConfig>,
    pub attacker: AttackerPlan,
    pub dp: Option<DpPlan>,
    pub groups: Vec<ClassGroup>,
    /// Build the 2-D PCA view of train vs. predicted-in/out records.
    pub pca_view: bool,
    pub substitute: Option<SubstitutePlan>,
    /// Keep the attack dataset in the outcome (for export).
    pub keep_attack_records: bool,
    /// Keep the deployed target model in the outcome.
    pub keep_target_model: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubstitutePlan {
    pub spec: ModelSpec,
    pub config: SubstituteConfig,
}

impl Default for SubstitutePlan {
    fn default() -> Self {
        Self {
            spec: ModelSpec::default_for(crate::models::ModelKind::LogisticRegression),
            config: SubstituteConfig::default(),
        }
    }
}

impl Default for AuditPlan {
    fn default() -> Self {
        Self {
            target: ModelSpec::default_for(crate::models::ModelKind::DecisionTree),
            split: SplitPlan {
                seed: 0,
                target_train_fraction: 0.3,
                eval_in_count: 100,
                eval_out_count: 100,
            },
            skew: None,
            attacker: AttackerPlan::default(),
            dp: None,
            groups: Vec::new(),
            pca_view: false,
            substitute: None,
            keep_attack_records: false,
            keep_target_model: false,
        }
    }
}

impl AuditPlan {
    /// Every problem found, each prefixed by its config path.
    pub fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = self.target.problems().into_iter().map(|p| format!("target.model: {p}")).collect();
        let f = self.split.target_train_fraction;
        if !(f > 0.0 && f < 1.0) {
            out.push(format!("target.split.target_train_fraction: {f} must be in (0,1)"));
        }
        if self.split.eval_in_count != self.split.eval_out_count {
            out.push("target.split: eval_in_count must equal eval_out_count".into());
        }
        if self.split.eval_in_count == 0 {
            out.push("target.split.eval_in_count: must be >= 1".into());
        }
        if let Some(s) = &self.skew {
            if !(s.target_fraction > 0.0 && s.target_fraction <= 1.0) {
                out.push("skew.target_fraction: target_fraction must be in (0,1]".into());
            }
        }
        let a = &self.attacker;
        if !(0.0..=1.0).contains(&a.query_noise) {
            out.push(format!("attacker.query_noise: {} must be in [0,1]", a.query_noise));
        }
        match &a.method {
            AttackMethod::Shadow { shadow, attack } => {
                out.extend(shadow.problems().into_iter().map(|p| format!("attacker.shadow: {p}")));
                out.extend(attack.problems().into_iter().map(|p| format!("attacker.attack: {p}")));
            }
            AttackMethod::Threshold { threshold, shadow } => {
                if let crate::attack::Threshold::Fixed(t) = threshold.threshold {
                    if !(t > 0.0) {
                        out.push(format!("attacker.threshold: {t} must be > 0"));
                    }
                }
                if threshold.threshold == crate::attack::Threshold::Auto && shadow.is_none() {
                    out.push("attacker.shadow: auto threshold needs a shadow block".into());
                }
                if let Some(s) = shadow {
                    out.extend(s.problems().into_iter().map(|p| format!("attacker.shadow: {p}")));
                }
            }
        }
        if let Some(dp) = &self.dp {
            out.extend(dp.config.problems().into_iter().map(|p| format!("dp: {p}")));
            if !(dp.delta > 0.0 && dp.delta < 1.0) {
                out.push(format!("dp.delta: {} must be in (0,1)", dp.delta));
            }
            if let Some(e) = dp.target_epsilon {
                if !(e > 0.0) {
                    out.push(format!("dp.epsilon: {e} must be > 0"));
                }
            }
            if !self.target.kind().is_differentiable() {
                out.push(format!("dp: target model {} cannot be trained with DP-SGD", self.target.kind()));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(invalid(p.join("; ")))
        }
    }
}

/// Private-training side results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpRecord {
    pub accounting: Option<AccountingSummary>,
    pub utility: UtilityLossSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub report: VulnerabilityReport,
    pub target_train_accuracy: f64,
    pub target_test_accuracy: f64,
    pub train_size: usize,
    pub dp: Option<DpRecord>,
    pub substitute_agreement: Option<f64>,
    pub view: Option<MembershipView>,
    pub attack_records: Option<Vec<AttackRecord>>,
    /// The deployed (DP when requested) target, if kept.
    pub target_model: Option<ProbModel>,
    /// Seconds spent building the attack (shadow training included).
    pub setup_seconds: f64,
}

/// Seeds of one audit, all derived from the master seed.
fn seeded_plan(plan: &AuditPlan, seed: u64) -> AuditPlan {
    let mut p = plan.clone();
    p.split.seed = derive_seed(seed, streams::SPLIT);
    if let Some(s) = &mut p.skew {
        s.seed = derive_seed(seed, streams::SPLIT ^ 0xff);
    }
    p.target = p.target.reseeded(derive_seed(seed, streams::TARGET));
    let shadow_seed = derive_seed(seed, streams::SHADOW);
    match &mut p.attacker.method {
        AttackMethod::Shadow { shadow, .. } => shadow.seed = shadow_seed,
        AttackMethod::Threshold { shadow: Some(shadow), .. } => shadow.seed = shadow_seed,
        AttackMethod::Threshold { shadow: None, .. } => {}
    }
    if let Some(dp) = &mut p.dp {
        dp.config.seed = derive_seed(seed, streams::TARGET ^ 0xd9);
    }
    if let Some(s) = &mut p.substitute {
        s.config.seed = derive_seed(seed, streams::PROBE);
        s.spec = s.spec.reseeded(derive_seed(seed, streams::PROBE ^ 0x5b));
    }
    p
}

enum Attacker {
    Model(Box<crate::attack::AttackModel>),
    Threshold(crate::attack::ThresholdAttack),
}

impl MembershipAttack for Attacker {
    fn infer(&self, target: &dyn Classifier, x: &[f64], y: usize) -> Result<crate::attack::Guess> {
        match self {
            Self::Model(m) => m.infer(target, x, y),
            Self::Threshold(t) => t.infer(target, x, y),
        }
    }
}

/// Runs one audit of `plan` on `data` with master seed `seed`.
pub fn run_audit(plan: &AuditPlan, data: &Dataset, seed: u64, clock: &dyn Clock) -> Result<AuditOutcome> {
    plan.validate()?;
    let plan = seeded_plan(plan, seed);
    let data = match &plan.skew {
        Some(s) => apply_skew(data, s)?,
        None => data.clone(),
    };
    let split = split_in_out(&data, &plan.split)?;
    let pool = split
        .holdout
        .clone()
        .ok_or_else(|| Error::InsufficientData("no rows left for the attacker's shadow pool".into()))?;
    let non_members = split.non_members()?;

    // Target, plus its DP twin when requested.
    let base = train(&plan.target, &split.train, Some(&non_members))?;
    let mut dp_cfg = None;
    let mut dp_outcome = None;
    if let Some(dp) = &plan.dp {
        let cfg = dp.resolve(split.train.len())?;
        let ledger = AccountantState::new(dp.delta)?;
        dp_outcome = Some(dp_train(&plan.target, &split.train, Some(&non_members), &cfg, ledger)?);
        dp_cfg = Some(cfg);
    }
    let deployed = dp_outcome.as_ref().map_or(&base, |o| &o.model);

    // Attacker.
    let setup_start = clock.now_seconds();
    let mirror = |s: &ShadowConfig| {
        let mut s = s.clone();
        if plan.attacker.mirror_dp && s.dp.is_none() {
            s.dp = dp_cfg.clone();
        }
        s
    };
    let mut records = None;
    let attacker = match &plan.attacker.method {
        AttackMethod::Shadow { shadow, attack } => {
            let shadow = mirror(shadow);
            let d = build_shadow_data(&pool, &shadow)?;
            let shadows = train_shadows(&d, &shadow)?;
            let r = build_attack_dataset(&shadows, &d, attack.sort_features)?;
            let model = train_attack_model(&r, attack)?;
            if plan.keep_attack_records {
                records = Some(r);
            }
            Attacker::Model(Box::new(model))
        }
        AttackMethod::Threshold { threshold, shadow } => {
            let trained = match shadow {
                Some(s) => {
                    let s = mirror(s);
                    let d = build_shadow_data(&pool, &s)?;
                    let shadows = train_shadows(&d, &s)?;
                    Some((shadows, d))
                }
                None => None,
            };
            let resolved = threshold.resolve(trained.as_ref().map(|(s, d)| (s.as_slice(), d)))?;
            Attacker::Threshold(resolved)
        }
    };
    let setup_seconds = (clock.now_seconds() - setup_start).max(0.0);

    // The attacker only knows noisy copies of the records it queries.
    let (q_in, q_out) = if plan.attacker.query_noise > 0.0 {
        let s = derive_seed(seed, streams::QUERY_NOISE);
        (
            inject_noise(&split.eval_in, plan.attacker.query_noise, s)?,
            inject_noise(&split.eval_out, plan.attacker.query_noise, derive_seed(s, 1))?,
        )
    } else {
        (split.eval_in.clone(), split.eval_out.clone())
    };
    let eval_labels: Vec<usize> = q_in.labels().iter().chain(q_out.labels()).copied().collect();
    let subgroups: Vec<Subgroup> = plan
        .groups
        .iter()
        .map(|g| Subgroup {
            name: g.name.clone(),
            indices: (0..eval_labels.len()).filter(|&i| g.classes.contains(&eval_labels[i])).collect(),
        })
        .filter(|g| !g.indices.is_empty())
        .collect();
    let report = evaluate_attack(&attacker, deployed, &q_in, &q_out, &split.train, &subgroups, clock)?;

    let dp = match &dp_outcome {
        Some(o) => {
            Some(DpRecord {
                accounting: o.summary().ok(),
                utility: utility_summary(&base, &o.model, &non_members, o.guarantee().ok())?,
            })
        }
        None => None,
    };

    let probes = q_in.concat(&q_out)?;
    let view = if plan.pca_view {
        let verdicts = (0..probes.len())
            .map(|i| attacker.infer(deployed, probes.row(i), probes.label(i)).map(|g| g.member))
            .collect::<Result<Vec<_>>>()?;
        Some(MembershipView::build(&split.train, &probes, &verdicts)?)
    } else {
        None
    };
    let substitute_agreement = match &plan.substitute {
        Some(s) => Some(build_substitute(&attacker, deployed, &probes, &s.spec, &s.config)?.agreement),
        None => None,
    };

    Ok(AuditOutcome {
        report,
        target_train_accuracy: deployed.train_accuracy().unwrap_or(0.0),
        target_test_accuracy: deployed.test_accuracy().unwrap_or(0.0),
        train_size: split.train.len(),
        dp,
        substitute_agreement,
        view,
        attack_records: records,
        target_model: plan.keep_target_model.then(|| deployed.clone()),
        setup_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::models::{ModelKind, TreeParams};
    use crate::report::NoClock;
    use alloc::vec;

    fn data() -> Dataset {
        synth_blobs(3, 200, 5, 0.3, 4).unwrap()
    }

    #[test]
    fn default_plan_runs_and_is_deterministic() {
        let plan = AuditPlan {
            groups: vec![ClassGroup { name: "class0".into(), classes: vec![0] }],
            pca_view: true,
            keep_attack_records: true,
            ..Default::default()
        };
        let a = run_audit(&plan, &data(), 7, &NoClock).unwrap();
        let b = run_audit(&plan, &data(), 7, &NoClock).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report.support, 200);
        assert!(a.report.subgroups.contains_key("class0"));
        assert_eq!(a.view.as_ref().unwrap().points.len(), a.train_size + 200);
        assert!(!a.attack_records.as_ref().unwrap().is_empty());
        let c = run_audit(&plan, &data(), 8, &NoClock).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dp_plan_records_accounting_and_utility() {
        let plan = AuditPlan {
            target: ModelSpec::default_for(ModelKind::LogisticRegression),
            dp: Some(DpPlan {
                config: DpConfig { epochs: 5, ..Default::default() },
                target_epsilon: Some(4.0),
                ..Default::default()
            }),
            ..Default::default()
        };
        let out = run_audit(&plan, &data(), 1, &NoClock).unwrap();
        let dp = out.dp.unwrap();
        let acc = dp.accounting.unwrap();
        assert!(acc.epsilon <= 4.0 && acc.epsilon > 3.99);
        assert_eq!(dp.utility.per_class_f1_loss.len(), 3);
    }

    #[test]
    fn threshold_and_substitute() {
        let plan = AuditPlan {
            target: ModelSpec::DecisionTree(TreeParams { max_depth: None, min_leaf: 1 }),
            attacker: AttackerPlan {
                method: AttackMethod::Threshold {
                    threshold: ThresholdAttackConfig { threshold: crate::attack::Threshold::Auto },
                    shadow: Some(ShadowConfig::default()),
                },
                query_noise: 0.1,
                ..Default::default()
            },
            substitute: Some(SubstitutePlan {
                config: SubstituteConfig { min_size: 5, ..Default::default() },
                ..Default::default()
            }),
            ..Default::default()
        };
        let out = run_audit(&plan, &data(), 3, &NoClock).unwrap();
        assert!(out.report.confidence.true_positive.is_none());
        assert!((0.0..=1.0).contains(&out.substitute_agreement.unwrap()));
    }

    #[test]
    fn problems_name_paths() {
        let plan = AuditPlan {
            skew: Some(SkewConfig { target_class: 0, target_fraction: 0.0, seed: 0 }),
            dp: Some(DpPlan { delta: 0.0, ..Default::default() }),
            ..Default::default()
        };
        let p = plan.problems();
        assert!(p.iter().any(|s| s.contains("target_fraction must be in (0,1]")));
        assert!(p.iter().any(|s| s.starts_with("dp.delta")));
        assert!(p.iter().any(|s| s.contains("cannot be trained with DP-SGD")));
        assert!(AuditPlan::default().problems().is_empty());
    }
}
