//! Vulnerability metrics: confusion statistics of an attack over a balanced
//! member / non-member evaluation set, broken down by class and by
//! caller-named subgroups, plus utility loss of private models.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attack::MembershipAttack;
use crate::data::Dataset;
use crate::error::invalid;
use crate::math::{sq_dist, sqrt};
use crate::models::{accuracy, accuracy_difference, Classifier, ProbModel};
use crate::{Error, Result};

/// Source of wall-clock time. The core crate has no clock of its own.
pub trait Clock {
    fn now_seconds(&self) -> f64;
}

/// Always reads zero; reports built with it carry no timing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}

/// Confusion statistics with "member" as the positive class. Undefined
/// ratios (0/0) are reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn confusion_metrics(truth: &[bool], predicted: &[bool]) -> Result<ConfusionMetrics> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: truth.len(), right: predicted.len() });
    }
    if truth.is_empty() {
        return Err(invalid("no predictions to score"));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut correct = 0;
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
        correct += usize::from(t == p);
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ConfusionMetrics {
        accuracy: ratio(correct, truth.len()),
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub metrics: ConfusionMetrics,
    pub support: usize,
    pub members: usize,
    pub non_members: usize,
}

/// Mean attack confidence per outcome; `None` when the outcome never
/// occurred or the attack reports no confidence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBreakdown {
    pub true_positive: Option<f64>,
    pub false_positive: Option<f64>,
    pub true_negative: Option<f64>,
    pub false_negative: Option<f64>,
}

/// One worked example: how sure the target was, how sure the attack was,
/// and the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleTriple {
    pub target_confidence: f64,
    pub attack_confidence: Option<f64>,
    pub member: bool,
    pub predicted_member: bool,
}

/// Examples kept per side (members, non-members).
pub const EXAMPLES_PER_SIDE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityReport {
    pub aggregate: ConfusionMetrics,
    pub support: usize,
    /// Keyed by the evaluated record's true class.
    pub per_class: BTreeMap<usize, GroupMetrics>,
    pub subgroups: BTreeMap<String, GroupMetrics>,
    pub confidence: ConfidenceBreakdown,
    pub fp_mean_distance: Option<f64>,
    pub fn_mean_distance: Option<f64>,
    /// Seconds spent in attack inference only.
    pub attack_wall_time: f64,
    pub target_accuracy_difference: Option<f64>,
    pub baseline: f64,
    pub examples: Vec<ExampleTriple>,
}

/// A named set of evaluation records. Indices address the concatenation
/// `eval_in ++ eval_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgroup {
    pub name: String,
    pub indices: Vec<usize>,
}

fn group_metrics(truth: &[bool], pred: &[bool], idx: &[usize]) -> Result<GroupMetrics> {
    let t: Vec<bool> = idx.iter().map(|&i| truth[i]).collect();
    let p: Vec<bool> = idx.iter().map(|&i| pred[i]).collect();
    let members = t.iter().filter(|&&m| m).count();
    Ok(GroupMetrics {
        metrics: confusion_metrics(&t, &p)?,
        support: idx.len(),
        members,
        non_members: idx.len() - members,
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs `attack` on every record of `eval_in` (members) and `eval_out`
/// (non-members) and summarizes the outcome.
pub fn evaluate_attack(
    attack: &dyn MembershipAttack,
    target: &ProbModel,
    eval_in: &Dataset,
    eval_out: &Dataset,
    train_set: &Dataset,
    subgroups: &[Subgroup],
    clock: &dyn Clock,
) -> Result<VulnerabilityReport> {
    if eval_in.len() != eval_out.len() {
        return Err(Error::UnbalancedEvaluation {
            members: eval_in.len(),
            non_members: eval_out.len(),
        });
    }
    let eval = eval_in.concat(eval_out)?;
    let n = eval.len();
    let truth: Vec<bool> = (0..n).map(|i| i < eval_in.len()).collect();

    let start = clock.now_seconds();
    let guesses = (0..n)
        .map(|i| attack.infer(target, eval.row(i), eval.label(i)))
        .collect::<Result<Vec<_>>>()?;
    let attack_wall_time = (clock.now_seconds() - start).max(0.0);
    let pred: Vec<bool> = guesses.iter().map(|g| g.member).collect();

    let all: Vec<usize> = (0..n).collect();
    let aggregate = confusion_metrics(&truth, &pred)?;
    let mut per_class = BTreeMap::new();
    for c in 0..eval.n_classes() {
        let idx: Vec<usize> = all.iter().copied().filter(|&i| eval.label(i) == c).collect();
        if !idx.is_empty() {
            per_class.insert(c, group_metrics(&truth, &pred, &idx)?);
        }
    }
    let mut groups = BTreeMap::new();
    for g in subgroups {
        if let Some(&bad) = g.indices.iter().find(|&&i| i >= n) {
            return Err(invalid(format!("subgroup {} index {bad} outside 0..{n}", g.name)));
        }
        if g.indices.is_empty() {
            return Err(invalid(format!("subgroup {} is empty", g.name)));
        }
        groups.insert(g.name.clone(), group_metrics(&truth, &pred, &g.indices)?);
    }

    let mut conf: [Vec<f64>; 4] = Default::default();
    let mut fp_dist = Vec::new();
    let mut fn_dist = Vec::new();
    for i in 0..n {
        let slot = match (truth[i], pred[i]) {
            (true, true) => 0,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        };
        if let Some(c) = guesses[i].confidence {
            conf[slot].push(c);
        }
        match slot {
            1 => fp_dist.push(distance_to_training(eval.row(i), train_set)?),
            3 => fn_dist.push(distance_to_training(eval.row(i), train_set)?),
            _ => {}
        }
    }

    let mut examples = Vec::new();
    for side in [0..eval_in.len(), eval_in.len()..n] {
        for i in side.take(EXAMPLES_PER_SIDE) {
            let p = target.predict_proba(eval.row(i))?;
            examples.push(ExampleTriple {
                target_confidence: p.iter().copied().fold(0.0, f64::max),
                attack_confidence: guesses[i].confidence,
                member: truth[i],
                predicted_member: pred[i],
            });
        }
    }

    Ok(VulnerabilityReport {
        aggregate,
        support: n,
        per_class,
        subgroups: groups,
        confidence: ConfidenceBreakdown {
            true_positive: mean(&conf[0]),
            false_positive: mean(&conf[1]),
            true_negative: mean(&conf[2]),
            false_negative: mean(&conf[3]),
        },
        fp_mean_distance: mean(&fp_dist),
        fn_mean_distance: mean(&fn_dist),
        attack_wall_time,
        target_accuracy_difference: accuracy_difference(target).ok(),
        baseline: 0.5,
        examples,
    })
}

/// Euclidean distance from `x` to its nearest training row.
pub fn distance_to_training(x: &[f64], train_set: &Dataset) -> Result<f64> {
    if x.len() != train_set.n_features() {
        return Err(Error::DimensionMismatch {
            expected: train_set.n_features(),
            found: x.len(),
        });
    }
    let best = train_set.rows().map(|r| sq_dist(x, r)).fold(f64::INFINITY, f64::min);
    Ok(sqrt(best))
}

/// `1 − dp_acc / base_acc`; negative when the private model is better.
pub fn utility_loss(base_accuracy: f64, dp_accuracy: f64) -> Result<f64> {
    if !(base_accuracy > 0.0) {
        return Err(invalid(format!("base accuracy {base_accuracy} must be > 0")));
    }
    Ok(1.0 - dp_accuracy / base_accuracy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum F1Loss {
    Value(f64),
    /// Both models score F1 = 0 on the class.
    Undefined,
}

impl F1Loss {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(v),
            Self::Undefined => None,
        }
    }
}

/// One-vs-rest F1 of `model` for `class_id` on `test`.
pub fn class_f1(model: &dyn Classifier, test: &Dataset, class_id: usize) -> Result<f64> {
    let truth: Vec<bool> = test.labels().iter().map(|&l| l == class_id).collect();
    let pred = test
        .rows()
        .map(|r| model.predict(r).map(|p| p == class_id))
        .collect::<Result<Vec<_>>>()?;
    Ok(confusion_metrics(&truth, &pred)?.f1)
}

/// `1 − F1_dp / F1_base` for one class.
pub fn f1_loss_per_class(base: &dyn Classifier, dp: &dyn Classifier, test: &Dataset, class_id: usize) -> Result<F1Loss> {
    if !test.labels().contains(&class_id) {
        return Err(Error::ClassAbsent(class_id));
    }
    let f_base = class_f1(base, test, class_id)?;
    let f_dp = class_f1(dp, test, class_id)?;
    Ok(if f_base == 0.0 {
        if f_dp == 0.0 {
            F1Loss::Undefined
        } else {
            F1Loss::Value(f64::NEG_INFINITY)
        }
    } else {
        F1Loss::Value(1.0 - f_dp / f_base)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityLossSummary {
    pub base_accuracy: f64,
    pub dp_accuracy: f64,
    pub overall_accuracy_loss: f64,
    /// Classes absent from the test set are omitted.
    pub per_class_f1_loss: BTreeMap<usize, F1Loss>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
}

pub fn utility_summary(
    base: &dyn Classifier,
    dp: &dyn Classifier,
    test: &Dataset,
    guarantee: Option<crate::accountant::DpGuarantee>,
) -> Result<UtilityLossSummary> {
    let base_accuracy = accuracy(base, test)?;
    let dp_accuracy = accuracy(dp, test)?;
    let mut per_class = BTreeMap::new();
    for (c, &count) in test.class_counts().iter().enumerate() {
        if count > 0 {
            per_class.insert(c, f1_loss_per_class(base, dp, test, c)?);
        }
    }
    Ok(UtilityLossSummary {
        base_accuracy,
        dp_accuracy,
        overall_accuracy_loss: utility_loss(base_accuracy, dp_accuracy)?,
        per_class_f1_loss: per_class,
        epsilon: guarantee.map(|g| g.epsilon),
        delta: guarantee.map(|g| g.delta),
    })
}
