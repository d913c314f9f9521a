//! Black-box membership inference.
//!
//! The shadow-model attack trains look-alike models on attacker data with
//! known membership, harvests their prediction vectors into labelled
//! [`AttackRecord`]s and fits binary "in"/"out" classifiers on them. A loss
//! threshold attack and a substitute-model builder reuse the same pieces.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{fit_pca_rows, inject_noise, Dataset};
use crate::dp::{dp_train, DpConfig};
use crate::accountant::AccountantState;
use crate::error::invalid;
use crate::math::{argmax, floor, round, sq_dist, sqrt};
use crate::models::{per_example_loss, train, Classifier, ModelKind, ModelSpec, ProbModel, TreeParams};
use crate::rng::{derive_seed, seeded, streams};
use crate::{Error, Result};

/// Where the shadow dataset `D′` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShadowDataSource {
    /// The pool itself; the caller keeps it disjoint from the target's data.
    DisjointSameDistribution,
    /// The pool with uniform `[0, σ]` noise added to every feature.
    NoisyCopy { sigma: f64 },
    /// A seeded fraction of the pool, bootstrap-resampled back to pool size.
    BootstrapSeeded { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    pub num_shadows: usize,
    pub shadow_spec: ModelSpec,
    pub source: ShadowDataSource,
    /// Share of `D′` each shadow trains on; an equal share is held out.
    pub per_shadow_train_fraction: f64,
    pub seed: u64,
    /// Trains shadows with DP-SGD, for attackers who know the target's recipe.
    pub dp: Option<DpConfig>,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        Self {
            num_shadows: 4,
            shadow_spec: ModelSpec::default_for(ModelKind::DecisionTree),
            source: ShadowDataSource::DisjointSameDistribution,
            per_shadow_train_fraction: 0.5,
            seed: 0,
            dp: None,
        }
    }
}

impl ShadowConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.num_shadows == 0 {
            out.push("num_shadows must be >= 1".into());
        }
        let f = self.per_shadow_train_fraction;
        if !(f > 0.0 && f <= 0.5) {
            out.push(format!("per_shadow_train_fraction {f} must be in (0, 0.5] for balanced in/out splits"));
        }
        match self.source {
            ShadowDataSource::NoisyCopy { sigma } if !(0.0..=1.0).contains(&sigma) => {
                out.push(format!("noisy_copy sigma {sigma} must be in [0,1]"));
            }
            ShadowDataSource::BootstrapSeeded { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                out.push(format!("bootstrap fraction {fraction} must be in (0,1]"));
            }
            _ => {}
        }
        out.extend(self.shadow_spec.problems().into_iter().map(|p| format!("shadow_spec: {p}")));
        if let Some(dp) = &self.dp {
            out.extend(dp.problems().into_iter().map(|p| format!("dp: {p}")));
        }
        out
    }
}

fn first_problem(problems: Vec<String>) -> Result<()> {
    match problems.into_iter().next() {
        Some(p) => Err(invalid(p)),
        None => Ok(()),
    }
}

/// Builds `D′` from the attacker's pool.
pub fn build_shadow_data(pool: &Dataset, cfg: &ShadowConfig) -> Result<Dataset> {
    first_problem(cfg.problems())?;
    let seed = derive_seed(cfg.seed, streams::SHADOW_DATA);
    match cfg.source {
        ShadowDataSource::DisjointSameDistribution => Ok(pool.clone()),
        ShadowDataSource::NoisyCopy { sigma } => inject_noise(pool, sigma, seed),
        ShadowDataSource::BootstrapSeeded { fraction } => {
            let n = pool.len();
            let n_seeds = (round(fraction * n as f64) as usize).max(1);
            let mut rng = seeded(seed);
            let seeds = index::sample(&mut rng, n, n_seeds).into_vec();
            let picks: Vec<usize> = (0..n).map(|_| seeds[rng.random_range(0..n_seeds)]).collect();
            pool.subset(&picks)
        }
    }
}

/// A trained shadow with its membership ground truth (indices into `D′`).
#[derive(Debug, Clone)]
pub struct ShadowModel {
    pub model: ProbModel,
    pub in_indices: Vec<usize>,
    pub out_indices: Vec<usize>,
}

/// Trains `cfg.num_shadows` models, each on its own random `in` half of a
/// balanced `in`/`out` draw from `D′`.
pub fn train_shadows(data: &Dataset, cfg: &ShadowConfig) -> Result<Vec<ShadowModel>> {
    first_problem(cfg.problems())?;
    let n = data.len();
    let per_side = floor(cfg.per_shadow_train_fraction * n as f64) as usize;
    if per_side == 0 || 2 * per_side > n {
        return Err(Error::InfeasibleSplit(format!(
            "cannot draw two disjoint sets of {per_side} from {n} shadow rows"
        )));
    }
    let base = derive_seed(cfg.seed, streams::SHADOW);
    (0..cfg.num_shadows)
        .map(|s| {
            let seed = derive_seed(base, s as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seeded(seed));
            let in_indices = order[..per_side].to_vec();
            let out_indices = order[per_side..2 * per_side].to_vec();
            let train_set = data.subset(&in_indices)?;
            let spec = cfg.shadow_spec.reseeded(seed);
            let model = match &cfg.dp {
                Some(dp) if spec.kind().is_differentiable() => {
                    let dp = DpConfig { seed, ..dp.clone() };
                    let ledger = AccountantState::new(crate::accountant::DEFAULT_DELTA)?;
                    dp_train(&spec, &train_set, None, &dp, ledger)?.model
                }
                _ => train(&spec, &train_set, None)?,
            };
            Ok(ShadowModel { model, in_indices, out_indices })
        })
        .collect()
}

/// One row of the attack dataset `D*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub prediction: Vec<f64>,
    pub true_class: usize,
    pub member: bool,
}

fn attack_features(mut p: Vec<f64>, sort: bool) -> Vec<f64> {
    if sort {
        p.sort_by(|a, b| b.total_cmp(a));
    }
    p
}

/// Queries every shadow on its own `in` and `out` rows, in shadow order.
pub fn build_attack_dataset(shadows: &[ShadowModel], data: &Dataset, sort_features: bool) -> Result<Vec<AttackRecord>> {
    let mut out = Vec::new();
    for s in shadows {
        for (indices, member) in [(&s.in_indices, true), (&s.out_indices, false)] {
            for &i in indices {
                let p = s.model.predict_proba(data.row(i))?;
                out.push(AttackRecord {
                    prediction: attack_features(p, sort_features),
                    true_class: data.label(i),
                    member,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    #[default]
    PerClass,
    Global,
}

/// Which class picks the per-class attack classifier at inference time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    /// The queried record's label, known to the attacker holding the record.
    #[default]
    TrueClass,
    /// The target's argmax; needs no label at all.
    PredictedClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub spec: ModelSpec,
    pub mode: AttackMode,
    pub routing: Routing,
    /// Classes with fewer records use the global classifier.
    pub min_class_records: usize,
    /// Sort prediction vectors in descending order before use.
    pub sort_features: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            spec: ModelSpec::DecisionTree(TreeParams {
                max_depth: Some(4),
                min_leaf: 5,
            }),
            mode: AttackMode::PerClass,
            routing: Routing::TrueClass,
            min_class_records: 20,
            sort_features: false,
        }
    }
}

impl AttackConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = self.spec.problems().into_iter().map(|p| format!("spec: {p}")).collect();
        if self.min_class_records == 0 {
            out.push("min_class_records must be >= 1".into());
        }
        out
    }
}

/// One membership decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guess {
    pub member: bool,
    /// Winning-class probability in `[0.5, 1]`, when the attack has one.
    pub confidence: Option<f64>,
}

/// Anything that labels a record "in" or "out" given black-box access to
/// the target.
pub trait MembershipAttack {
    fn infer(&self, target: &dyn Classifier, x: &[f64], true_class: usize) -> Result<Guess>;
}

/// The trained binary classifier(s) `F_a`.
#[derive(Debug, Clone)]
pub struct AttackModel {
    config: AttackConfig,
    n_classes: usize,
    global: Option<ProbModel>,
    per_class: Vec<Option<ProbModel>>,
}

fn records_to_dataset<'a>(records: impl Iterator<Item = &'a AttackRecord>, k: usize) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for r in records {
        if r.prediction.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: r.prediction.len() });
        }
        features.extend_from_slice(&r.prediction);
        labels.push(usize::from(r.member));
    }
    Dataset::from_flat(features, k, labels, 2)
}

/// Fits `F_a` on `D*`. Per-class mode groups records by true class and
/// falls back to one global classifier for classes below
/// `min_class_records`.
pub fn train_attack_model(records: &[AttackRecord], config: &AttackConfig) -> Result<AttackModel> {
    first_problem(config.problems())?;
    let k = records
        .first()
        .map(|r| r.prediction.len())
        .ok_or_else(|| Error::InsufficientData("empty attack dataset".into()))?;
    if k < 2 {
        return Err(Error::DegenerateLabelSet(k));
    }
    let mut by_class: Vec<Vec<&AttackRecord>> = vec![Vec::new(); k];
    for r in records {
        if r.true_class >= k {
            return Err(Error::ClassAbsent(r.true_class));
        }
        by_class[r.true_class].push(r);
    }
    let mut per_class = vec![None; k];
    if config.mode == AttackMode::PerClass {
        for (c, rs) in by_class.iter().enumerate() {
            if rs.len() >= config.min_class_records {
                let ds = records_to_dataset(rs.iter().copied(), k)?;
                per_class[c] = Some(train(&config.spec, &ds, None)?);
            }
        }
    }
    let global = if per_class.iter().any(Option::is_none) {
        Some(train(&config.spec, &records_to_dataset(records.iter(), k)?, None)?)
    } else {
        None
    };
    Ok(AttackModel {
        config: config.clone(),
        n_classes: k,
        global,
        per_class,
    })
}

impl AttackModel {
    pub fn config(&self) -> &AttackConfig {
        &self.config
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Number of classes served by their own classifier.
    pub fn dedicated_classifiers(&self) -> usize {
        self.per_class.iter().filter(|m| m.is_some()).count()
    }

    /// Decision from an already observed prediction vector.
    pub fn infer_from_prediction(&self, prediction: &[f64], true_class: usize) -> Result<Guess> {
        if prediction.len() != self.n_classes {
            return Err(Error::DimensionMismatch {
                expected: self.n_classes,
                found: prediction.len(),
            });
        }
        let route = match self.config.routing {
            Routing::TrueClass => true_class,
            Routing::PredictedClass => argmax(prediction),
        };
        let model = self
            .per_class
            .get(route)
            .ok_or(Error::ClassAbsent(route))?
            .as_ref()
            .or(self.global.as_ref())
            .ok_or(Error::Untrained)?;
        let features = attack_features(prediction.to_vec(), self.config.sort_features);
        let q = model.predict_proba(&features)?;
        let member = q[1] > q[0];
        Ok(Guess {
            member,
            confidence: Some(if member { q[1] } else { q[0] }),
        })
    }
}

impl MembershipAttack for AttackModel {
    fn infer(&self, target: &dyn Classifier, x: &[f64], true_class: usize) -> Result<Guess> {
        self.infer_from_prediction(&target.predict_proba(x)?, true_class)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Attacker-supplied loss cutoff.
    Fixed(f64),
    /// Mean loss of the shadow models on their own training rows.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdAttackConfig {
    pub threshold: Threshold,
}

/// Relative slack added to the auto threshold so that a shadow population
/// with identical in-losses still compares `≤` after summation rounding.
const AUTO_TAU_SLACK: f64 = 1e-9;

impl ThresholdAttackConfig {
    pub fn resolve(&self, shadows: Option<(&[ShadowModel], &Dataset)>) -> Result<ThresholdAttack> {
        let tau = match self.threshold {
            Threshold::Fixed(t) => {
                if !(t > 0.0) {
                    return Err(invalid(format!("threshold {t} must be > 0")));
                }
                t
            }
            Threshold::Auto => {
                let (shadows, data) = shadows
                    .filter(|(s, _)| !s.is_empty())
                    .ok_or_else(|| invalid("auto threshold needs trained shadow models"))?;
                let mut sum = 0.0;
                let mut count = 0usize;
                for s in shadows {
                    for &i in &s.in_indices {
                        sum += per_example_loss(&s.model, data.row(i), data.label(i))?;
                        count += 1;
                    }
                }
                (sum / count as f64) * (1.0 + AUTO_TAU_SLACK)
            }
        };
        Ok(ThresholdAttack { tau })
    }
}

/// Loss-threshold attack: member iff `loss(target, x, y) ≤ τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAttack {
    pub tau: f64,
}

impl MembershipAttack for ThresholdAttack {
    fn infer(&self, target: &dyn Classifier, x: &[f64], true_class: usize) -> Result<Guess> {
        Ok(Guess {
            member: per_example_loss(target, x, true_class)? <= self.tau,
            confidence: None,
        })
    }
}

/// Which probes train the substitute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeSelection {
    /// Probes the attack labels "in".
    #[default]
    PredictedIn,
    /// Every non-held-out probe.
    All,
    /// A seeded random subset of this size.
    RandomSubset { size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubstituteConfig {
    pub holdout_fraction: f64,
    pub min_size: usize,
    pub selection: ProbeSelection,
    pub seed: u64,
}

impl Default for SubstituteConfig {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.3,
            min_size: 50,
            selection: ProbeSelection::PredictedIn,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Substitute {
    pub model: ProbModel,
    /// Share of held-out probes where substitute and target argmax agree.
    pub agreement: f64,
    pub training_size: usize,
    /// Indices into the probe pool of the rows used for training.
    pub training_indices: Vec<usize>,
}

fn relabel(ds: &Dataset, rows: &[usize], labels: Vec<usize>, k: usize) -> Result<Dataset> {
    let mut features = Vec::with_capacity(rows.len() * ds.n_features());
    for &i in rows {
        features.extend_from_slice(ds.row(i));
    }
    Dataset::from_flat(features, ds.n_features(), labels, k)
}

/// Trains `spec` to mimic `target` from probes labelled by the target's own
/// argmax, keeping only probes chosen by `cfg.selection`.
pub fn build_substitute(
    attack: &dyn MembershipAttack,
    target: &ProbModel,
    probe_pool: &Dataset,
    spec: &ModelSpec,
    cfg: &SubstituteConfig,
) -> Result<Substitute> {
    if !(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0) {
        return Err(invalid("holdout_fraction must be in (0,1)"));
    }
    let n = probe_pool.len();
    let k = target.n_classes();
    let mut rng = seeded(derive_seed(cfg.seed, streams::PROBE));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_hold = (round(cfg.holdout_fraction * n as f64) as usize).clamp(1, n.saturating_sub(1).max(1));
    let (held, rest) = order.split_at(n_hold);
    let target_label = |i: usize| -> Result<usize> { target.predict(probe_pool.row(i)) };

    let chosen: Vec<usize> = match cfg.selection {
        ProbeSelection::All => rest.to_vec(),
        ProbeSelection::PredictedIn => {
            let mut keep = Vec::new();
            for &i in rest {
                if attack.infer(target, probe_pool.row(i), target_label(i)?)?.member {
                    keep.push(i);
                }
            }
            keep
        }
        ProbeSelection::RandomSubset { size } => {
            if size > rest.len() {
                return Err(Error::InsufficientData(format!("random subset of {size} from {} probes", rest.len())));
            }
            index::sample(&mut rng, rest.len(), size).into_iter().map(|j| rest[j]).collect()
        }
    };
    if chosen.len() < cfg.min_size {
        return Err(Error::InsufficientData(format!(
            "{} selected probes, need at least {}",
            chosen.len(),
            cfg.min_size
        )));
    }
    let labels = chosen.iter().map(|&i| target_label(i)).collect::<Result<Vec<_>>>()?;
    let train_set = relabel(probe_pool, &chosen, labels, k)?;
    let model = train(spec, &train_set, None)?;
    let mut agree = 0usize;
    for &i in held {
        if model.predict(probe_pool.row(i))? == target_label(i)? {
            agree += 1;
        }
    }
    Ok(Substitute {
        model,
        agreement: agree as f64 / held.len() as f64,
        training_size: chosen.len(),
        training_indices: chosen,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointGroup {
    Train,
    PredictedIn,
    PredictedOut,
}

impl PointGroup {
    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::PredictedIn => "predicted_in",
            Self::PredictedOut => "predicted_out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub pc1: f64,
    pub pc2: f64,
    pub label: usize,
    pub group: PointGroup,
}

/// 2-D PCA view of the training set against probes split by the attack's
/// verdict, with one basis fitted on all points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipView {
    pub points: Vec<PcaPoint>,
}

impl MembershipView {
    pub fn build(train_set: &Dataset, probes: &Dataset, predicted_in: &[bool]) -> Result<Self> {
        if predicted_in.len() != probes.len() {
            return Err(Error::LengthMismatch { left: probes.len(), right: predicted_in.len() });
        }
        let rows: Vec<&[f64]> = train_set.rows().chain(probes.rows()).collect();
        let basis = fit_pca_rows(&rows, 2.min(train_set.n_features()))?;
        let mut points = Vec::with_capacity(rows.len());
        let groups = (0..train_set.len())
            .map(|i| (train_set.label(i), PointGroup::Train))
            .chain(predicted_in.iter().enumerate().map(|(i, &p)| {
                (probes.label(i), if p { PointGroup::PredictedIn } else { PointGroup::PredictedOut })
            }));
        for (row, (label, group)) in rows.iter().zip(groups) {
            let pc = basis.project_row(row)?;
            points.push(PcaPoint {
                pc1: pc[0],
                pc2: pc.get(1).copied().unwrap_or(0.0),
                label,
                group,
            });
        }
        Ok(Self { points })
    }

    pub fn centroids(&self) -> BTreeMap<PointGroup, (f64, f64)> {
        let mut acc: BTreeMap<PointGroup, (f64, f64, usize)> = BTreeMap::new();
        for p in &self.points {
            let e = acc.entry(p.group).or_insert((0.0, 0.0, 0));
            e.0 += p.pc1;
            e.1 += p.pc2;
            e.2 += 1;
        }
        acc.into_iter().map(|(g, (a, b, n))| (g, (a / n as f64, b / n as f64))).collect()
    }

    pub fn centroid_distance(&self, a: PointGroup, b: PointGroup) -> Option<f64> {
        let c = self.centroids();
        let (x, y) = (c.get(&a)?, c.get(&b)?);
        Some(sqrt(sq_dist(&[x.0, x.1], &[y.0, y.1])))
    }
}
