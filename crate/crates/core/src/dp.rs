//! Differentially private SGD: per-example clipping, Gaussian noise on the
//! clipped batch sum, and per-step charging of a Rényi ledger. The noise
//! multiplier follows a per-epoch [`NoiseSchedule`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accountant::{AccountantState, DpGuarantee};
use crate::data::Dataset;
use crate::error::invalid;
use crate::math::{exp, floor, l2_norm};
use crate::models::{apply_update, epoch_batches, ModelSpec, ProbModel, SgdConfig};
use crate::rng::{derive_seed, seeded, standard_normal, streams, SeededRng};
use crate::{Error, Result};

/// `ḡ = g / max(1, ‖g‖₂ / C)`. `C = +inf` leaves every gradient untouched.
pub fn clip_gradient(g: &[f64], clip_norm: f64) -> Result<Vec<f64>> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, clip_norm)?;
    Ok(out)
}

fn clip_in_place(g: &mut [f64], clip_norm: f64) -> Result<()> {
    if !(clip_norm > 0.0) {
        return Err(invalid(format!("clip norm {clip_norm} must be positive")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let norm = l2_norm(g);
    let scale = (norm / clip_norm).max(1.0);
    if scale > 1.0 {
        for v in g.iter_mut() {
            *v /= scale;
        }
        debug_assert!(l2_norm(g) <= clip_norm * (1.0 + 1e-12));
    }
    Ok(())
}

/// Adds `N(0, σ²C²)` to every coordinate of an already clipped sum and
/// divides by `divisor`. Zero σ draws nothing.
fn finish_noisy_sum(sum: &mut [f64], clip_norm: f64, sigma: f64, divisor: f64, rng: &mut SeededRng) {
    if sigma > 0.0 {
        let sd = sigma * clip_norm;
        for v in sum.iter_mut() {
            *v += sd * standard_normal(rng);
        }
    }
    for v in sum.iter_mut() {
        *v /= divisor;
    }
}

/// `g̃ = (1/L) (Σ ḡ_i + N(0, σ²C² I))` for one batch of per-example gradients.
pub fn noisy_batch_update(
    grads: &[Vec<f64>],
    clip_norm: f64,
    sigma: f64,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let dim = grads.first().map(Vec::len).ok_or_else(|| invalid("empty gradient batch"))?;
    if grads.len() > batch_size {
        return Err(invalid(format!("{} gradients exceed batch size {batch_size}", grads.len())));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid("noise multiplier must be finite and non-negative"));
    }
    let mut sum = vec![0.0; dim];
    for g in grads {
        if g.len() != dim {
            return Err(Error::LengthMismatch { left: dim, right: g.len() });
        }
        let clipped = clip_gradient(g, clip_norm)?;
        for (s, c) in sum.iter_mut().zip(&clipped) {
            *s += c;
        }
    }
    finish_noisy_sum(&mut sum, clip_norm, sigma, batch_size as f64, rng);
    Ok(sum)
}

/// Per-epoch noise multiplier. Decay kinds give later epochs less noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSchedule {
    Fixed { sigma: f64 },
    /// `σ₀ + (σ_f − σ₀) · i / (E − 1)`
    LinearDecay { initial: f64, terminal: f64 },
    /// `σ₀ · exp(−r i)`
    ExpDecay { initial: f64, rate: f64 },
    /// `σ₀ · factor^⌊i / period⌋`
    StepDecay { initial: f64, factor: f64, period: usize },
    /// `σ₀ / (1 + r i)`
    InverseTimeDecay { initial: f64, rate: f64 },
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::Fixed { sigma: 1.1 }
    }
}

impl NoiseSchedule {
    pub fn initial(&self) -> f64 {
        match *self {
            Self::Fixed { sigma } => sigma,
            Self::LinearDecay { initial, .. }
            | Self::ExpDecay { initial, .. }
            | Self::StepDecay { initial, .. }
            | Self::InverseTimeDecay { initial, .. } => initial,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fixed { .. } => "fixed",
            Self::LinearDecay { .. } => "linear_decay",
            Self::ExpDecay { .. } => "exp_decay",
            Self::StepDecay { .. } => "step_decay",
            Self::InverseTimeDecay { .. } => "inverse_time_decay",
        }
    }

    pub fn problems(&self) -> Vec<alloc::string::String> {
        let mut out = Vec::new();
        let s0 = self.initial();
        if !(s0 >= 0.0 && s0.is_finite()) {
            out.push(format!("initial sigma {s0} must be finite and >= 0"));
        }
        match *self {
            Self::Fixed { .. } => {}
            Self::LinearDecay { initial, terminal } => {
                if !(terminal > 0.0 || (terminal == 0.0 && initial == 0.0)) || terminal > initial {
                    out.push(format!("terminal sigma {terminal} must be in (0, {initial}]"));
                }
            }
            Self::ExpDecay { rate, .. } | Self::InverseTimeDecay { rate, .. } => {
                if !(rate >= 0.0 && rate.is_finite()) {
                    out.push(format!("decay rate {rate} must be finite and >= 0"));
                }
            }
            Self::StepDecay { factor, period, .. } => {
                if !(factor > 0.0 && factor <= 1.0) {
                    out.push(format!("step factor {factor} must be in (0,1]"));
                }
                if period == 0 {
                    out.push("step period must be >= 1".into());
                }
            }
        }
        out
    }

    /// `σ_i` for epoch `epoch` of `total_epochs`.
    pub fn sigma_at(&self, epoch: usize, total_epochs: usize) -> f64 {
        let i = epoch as f64;
        match *self {
            Self::Fixed { sigma } => sigma,
            Self::LinearDecay { initial, terminal } => {
                if total_epochs <= 1 {
                    initial
                } else {
                    initial + (terminal - initial) * i / (total_epochs - 1) as f64
                }
            }
            Self::ExpDecay { initial, rate } => initial * exp(-rate * i),
            Self::StepDecay { initial, factor, period } => {
                initial * libm::pow(factor, floor(i / period.max(1) as f64))
            }
            Self::InverseTimeDecay { initial, rate } => initial / (1.0 + rate * i),
        }
    }

    pub fn trace(&self, total_epochs: usize) -> Vec<f64> {
        (0..total_epochs).map(|i| self.sigma_at(i, total_epochs)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Shuffle once per epoch and walk consecutive batches.
    #[default]
    Shuffle,
    /// Each example joins each batch independently with probability `L/n`.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpConfig {
    /// `f64::INFINITY` disables clipping; only meaningful in tests.
    pub clip_norm: f64,
    pub schedule: NoiseSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub sampling: SamplingMode,
    pub seed: u64,
    /// Hard ε ceiling; training stops with `BudgetExhausted` once crossed.
    pub epsilon_cap: Option<f64>,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            clip_norm: 1.0,
            schedule: NoiseSchedule::default(),
            batch_size: 16,
            epochs: 20,
            learning_rate: 0.2,
            sampling: SamplingMode::Shuffle,
            seed: 0,
            epsilon_cap: None,
        }
    }
}

impl DpConfig {
    pub fn problems(&self) -> Vec<alloc::string::String> {
        let mut out = self.schedule.problems();
        if !(self.clip_norm > 0.0) {
            out.push(format!("clip_norm {} must be > 0", self.clip_norm));
        }
        if self.batch_size == 0 {
            out.push("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            out.push("epochs must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if let Some(cap) = self.epsilon_cap {
            if !(cap > 0.0) {
                out.push(format!("epsilon_cap {cap} must be > 0"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().first() {
            Some(p) => Err(invalid(p.clone())),
            None => Ok(()),
        }
    }

    /// Steps per epoch: `⌈n / L⌉` in both sampling modes.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size.max(1))
    }

    pub fn sampling_rate(&self, n: usize) -> f64 {
        (self.batch_size as f64 / n as f64).min(1.0)
    }
}

/// Exported record of a finished private run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingSummary {
    pub epsilon: f64,
    pub delta: f64,
    pub achieving_order: u32,
    pub steps: u64,
    pub q: f64,
    pub sigma_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DpOutcome {
    pub model: ProbModel,
    pub accountant: AccountantState,
    /// σ used in each epoch.
    pub sigma_trace: Vec<f64>,
    pub steps: u64,
    pub q: f64,
}

impl DpOutcome {
    pub fn guarantee(&self) -> Result<DpGuarantee> {
        self.accountant.to_guarantee()
    }

    pub fn summary(&self) -> Result<AccountingSummary> {
        let g = self.guarantee()?;
        Ok(AccountingSummary {
            epsilon: g.epsilon,
            delta: g.delta,
            achieving_order: g.achieving_order,
            steps: self.steps,
            q: self.q,
            sigma_trace: self.sigma_trace.clone(),
        })
    }
}

/// Trains a logistic-regression or MLP spec with DP-SGD.
///
/// Initialization, batching and the L2 term follow the plain trainer keyed
/// by `dp.seed`, so σ = 0 with unbounded clipping reproduces it exactly.
/// Shuffle mode averages over the actual batch length; Poisson mode divides
/// by `L`. Every step charges `accountant` with `(σ_i, q = L/n)`; steps with
/// σ = 0 or unbounded clipping are recorded as unaccounted instead.
pub fn dp_train(
    spec: &ModelSpec,
    train: &Dataset,
    test: Option<&Dataset>,
    dp: &DpConfig,
    mut accountant: AccountantState,
) -> Result<DpOutcome> {
    spec.validate()?;
    dp.validate()?;
    let spec = spec.reseeded(dp.seed);
    let base = spec.sgd_config().ok_or(Error::NotDifferentiable(spec.kind().name()))?;
    let mut net = spec
        .init_network(train.n_features(), train.n_classes())
        .ok_or(Error::NotDifferentiable(spec.kind().name()))?;
    let n = train.len();
    if dp.batch_size > n {
        return Err(invalid(format!("batch size {} exceeds {n} training rows", dp.batch_size)));
    }
    let cfg = SgdConfig {
        learning_rate: dp.learning_rate,
        epochs: dp.epochs,
        batch_size: dp.batch_size,
        l2: base.l2,
        seed: dp.seed,
    };
    let q = dp.sampling_rate(n);
    let mut batch_rng = cfg.batch_rng();
    let mut noise_rng = seeded(derive_seed(dp.seed, streams::NOISE));
    let mask = net.weight_mask();
    let p = net.params().len();
    let mut grad = vec![0.0; p];
    let mut sum = vec![0.0; p];
    let mut scratch = net.scratch();
    let sigma_trace = dp.schedule.trace(dp.epochs);
    let mut steps = 0u64;

    for (epoch, &sigma) in sigma_trace.iter().enumerate() {
        let accounted = sigma > 0.0 && dp.clip_norm.is_finite();
        let cost = if accounted { Some(accountant.step_cost(sigma, q)?) } else { None };
        let batches = match dp.sampling {
            SamplingMode::Shuffle => epoch_batches(&mut batch_rng, n, dp.batch_size),
            SamplingMode::Poisson => (0..dp.steps_per_epoch(n))
                .map(|_| (0..n).filter(|_| batch_rng.random::<f64>() < q).collect())
                .collect(),
        };
        let mut epoch_loss = 0.0;
        for batch in batches {
            sum.iter_mut().for_each(|v| *v = 0.0);
            for &i in &batch {
                epoch_loss += net.loss_and_gradient(train.row(i), train.label(i), &mut grad, &mut scratch);
                clip_in_place(&mut grad, dp.clip_norm).map_err(|_| Error::Diverged { epoch })?;
                for (s, g) in sum.iter_mut().zip(&grad) {
                    *s += g;
                }
            }
            let divisor = match dp.sampling {
                SamplingMode::Shuffle => batch.len() as f64,
                SamplingMode::Poisson => dp.batch_size as f64,
            };
            finish_noisy_sum(&mut sum, dp.clip_norm, sigma, divisor, &mut noise_rng);
            apply_update(&mut net, &mask, &sum, cfg.learning_rate, cfg.l2);
            steps += 1;
            match &cost {
                Some(c) => accountant.charge_cost(c),
                None => accountant.charge_unaccounted(),
            }
            if let (Some(cap), Some(_)) = (dp.epsilon_cap, &cost) {
                if let Ok(g) = accountant.to_guarantee() {
                    if g.epsilon > cap {
                        return Err(Error::BudgetExhausted {
                            step: steps,
                            epsilon: g.epsilon,
                            cap,
                        });
                    }
                }
            }
        }
        if !epoch_loss.is_finite() || net.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }

    let mut model = ProbModel::from_network(spec, net);
    model.record_accuracies(train, test)?;
    Ok(DpOutcome {
        model,
        accountant,
        sigma_trace,
        steps,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accountant::DEFAULT_DELTA;
    use crate::data::synth_blobs;
    use crate::models::{per_example_gradient, train as plain_train, LogisticParams, MlpParams, ModelKind};
    use proptest::prelude::*;

    fn fresh() -> AccountantState {
        AccountantState::new(DEFAULT_DELTA).unwrap()
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_gradient(&[3.0, 4.0], 1.0).unwrap(), vec![0.6, 0.8]);
        assert_eq!(clip_gradient(&[0.3, 0.4], 1.0).unwrap(), vec![0.3, 0.4]);
        let c = clip_gradient(&[3.0, 4.0], 2.0).unwrap();
        assert!((c[0] - 1.2).abs() < 1e-15 && (c[1] - 1.6).abs() < 1e-15);
        assert_eq!(clip_gradient(&[3.0, 4.0], f64::INFINITY).unwrap(), vec![3.0, 4.0]);
        assert!(clip_gradient(&[f64::NAN], 1.0).is_err());
        assert!(clip_gradient(&[1.0], 0.0).is_err());
    }

    #[test]
    fn noiseless_update_is_clipped_mean() {
        let mut rng = seeded(0);
        let grads = vec![vec![3.0, 4.0], vec![0.3, 0.4]];
        let u = noisy_batch_update(&grads, 1.0, 0.0, 2, &mut rng).unwrap();
        assert!((u[0] - 0.45).abs() < 1e-15 && (u[1] - 0.6).abs() < 1e-15);
        assert!(noisy_batch_update(&grads, 1.0, 0.0, 1, &mut rng).is_err());
        assert!(noisy_batch_update(&[], 1.0, 0.0, 1, &mut rng).is_err());
    }

    #[test]
    fn noise_has_unit_variance() {
        let mut rng = seeded(5);
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| noisy_batch_update(&[vec![0.0]], 1.0, 1.0, 1, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn noiseless_update_is_linear_in_clip() {
        let mut rng = seeded(0);
        let grads = vec![vec![10.0, -3.0], vec![-4.0, 8.0], vec![0.0, 6.0]];
        let a = noisy_batch_update(&grads, 1.0, 0.0, 3, &mut rng).unwrap();
        let b = noisy_batch_update(&grads, 2.0, 0.0, 3, &mut rng).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn schedule_examples() {
        let fixed = NoiseSchedule::Fixed { sigma: 1.1 };
        assert!((0..7).all(|i| fixed.sigma_at(i, 7) == 1.1));
        let lin = NoiseSchedule::LinearDecay { initial: 2.0, terminal: 1.0 };
        assert!((lin.sigma_at(5, 11) - 1.5).abs() < 1e-15);
        assert_eq!(lin.sigma_at(10, 11), 1.0);
        let ex = NoiseSchedule::ExpDecay { initial: 2.0, rate: core::f64::consts::LN_2 };
        assert!((ex.sigma_at(1, 5) - 1.0).abs() < 1e-15);
        let st = NoiseSchedule::StepDecay { initial: 4.0, factor: 0.5, period: 3 };
        assert_eq!(st.trace(7), vec![4.0, 4.0, 4.0, 2.0, 2.0, 2.0, 1.0]);
        let inv = NoiseSchedule::InverseTimeDecay { initial: 3.0, rate: 0.5 };
        assert_eq!(inv.sigma_at(4, 10), 1.0);
        assert!(!NoiseSchedule::LinearDecay { initial: 1.0, terminal: 2.0 }.problems().is_empty());
        assert!(!NoiseSchedule::StepDecay { initial: 1.0, factor: 0.5, period: 0 }.problems().is_empty());
    }

    fn lr_setup() -> (ModelSpec, Dataset, DpConfig) {
        let ds = synth_blobs(3, 40, 4, 0.15, 11).unwrap();
        let spec = ModelSpec::LogisticRegression(LogisticParams {
            learning_rate: 0.3,
            epochs: 6,
            batch_size: 16,
            l2: 1e-3,
            seed: 21,
        });
        let dp = DpConfig {
            clip_norm: f64::INFINITY,
            schedule: NoiseSchedule::Fixed { sigma: 0.0 },
            batch_size: 16,
            epochs: 6,
            learning_rate: 0.3,
            sampling: SamplingMode::Shuffle,
            seed: 21,
            epsilon_cap: None,
        };
        (spec, ds, dp)
    }

    #[test]
    fn reduces_to_plain_sgd() {
        let (spec, ds, dp) = lr_setup();
        let plain = plain_train(&spec, &ds, None).unwrap();
        let out = dp_train(&spec, &ds, None, &dp, fresh()).unwrap();
        assert_eq!(out.model.parameters().unwrap(), plain.parameters().unwrap());
        assert_eq!(out.guarantee(), Err(Error::Unaccounted));
        assert_eq!(out.accountant.steps(), 6 * 8);

        let mlp = ModelSpec::Mlp(MlpParams {
            hidden: vec![8],
            learning_rate: 0.3,
            epochs: 6,
            batch_size: 16,
            l2: 0.0,
            seed: 21,
        });
        let plain = plain_train(&mlp, &ds, None).unwrap();
        let out = dp_train(&mlp, &ds, None, &dp, fresh()).unwrap();
        assert_eq!(out.model.parameters().unwrap(), plain.parameters().unwrap());
    }

    /// Full-batch clipped gradient descent rebuilt from `clip_gradient`.
    #[test]
    fn matches_clipped_sgd_composition() {
        let (_, ds, _) = lr_setup();
        let spec = ModelSpec::LogisticRegression(LogisticParams {
            learning_rate: 0.5,
            epochs: 3,
            batch_size: ds.len(),
            l2: 0.0,
            seed: 1,
        });
        let dp = DpConfig {
            clip_norm: 0.05,
            schedule: NoiseSchedule::Fixed { sigma: 0.0 },
            batch_size: ds.len(),
            epochs: 3,
            learning_rate: 0.5,
            seed: 1,
            ..Default::default()
        };
        let got = dp_train(&spec, &ds, None, &dp, fresh()).unwrap();

        let mut model = ProbModel::initialized(spec, ds.n_features(), ds.n_classes()).unwrap();
        for _ in 0..3 {
            let mut mean = vec![0.0; model.parameters().unwrap().len()];
            for i in 0..ds.len() {
                let g = per_example_gradient(&model, ds.row(i), ds.label(i)).unwrap();
                for (m, c) in mean.iter_mut().zip(clip_gradient(&g, 0.05).unwrap()) {
                    *m += c / ds.len() as f64;
                }
            }
            let theta: Vec<f64> = model.parameters().unwrap().iter().zip(&mean).map(|(t, m)| t - 0.5 * m).collect();
            model.set_parameters(&theta).unwrap();
        }
        for (a, b) in got.model.parameters().unwrap().iter().zip(model.parameters().unwrap()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn epsilon_matches_ledger_oracle() {
        let ds = synth_blobs(2, 50, 3, 0.2, 3).unwrap();
        let spec = ModelSpec::default_for(ModelKind::LogisticRegression);
        let dp = DpConfig {
            clip_norm: 1.0,
            schedule: NoiseSchedule::Fixed { sigma: 1.1 },
            batch_size: 10,
            epochs: 10,
            learning_rate: 0.1,
            ..Default::default()
        };
        let out = dp_train(&spec, &ds, None, &dp, fresh()).unwrap();
        assert_eq!(out.steps, 100);
        assert_eq!(out.q, 0.1);
        let mut oracle = fresh();
        for _ in 0..100 {
            oracle.charge(1.1, 0.1).unwrap();
        }
        let want = oracle.to_guarantee().unwrap();
        let got = out.summary().unwrap();
        assert!((got.epsilon - want.epsilon).abs() < 1e-12);
        assert_eq!(got.achieving_order, want.achieving_order);
        assert_eq!(got.sigma_trace, vec![1.1; 10]);
    }

    #[test]
    fn budget_cap_names_the_step() {
        let ds = synth_blobs(2, 50, 3, 0.2, 3).unwrap();
        let spec = ModelSpec::default_for(ModelKind::LogisticRegression);
        let mut ledger = fresh();
        for _ in 0..40 {
            ledger.charge(1.1, 0.1).unwrap();
        }
        let cap = ledger.to_guarantee().unwrap().epsilon;
        let dp = DpConfig {
            schedule: NoiseSchedule::Fixed { sigma: 1.1 },
            batch_size: 10,
            epochs: 10,
            epsilon_cap: Some(cap),
            ..Default::default()
        };
        let Err(Error::BudgetExhausted { step, epsilon, .. }) = dp_train(&spec, &ds, None, &dp, fresh()) else {
            panic!("expected budget exhaustion");
        };
        assert_eq!(step, 41);
        assert!(epsilon > cap);
    }

    #[test]
    fn poisson_mode_runs_and_accounts() {
        let ds = synth_blobs(2, 50, 3, 0.2, 3).unwrap();
        let spec = ModelSpec::default_for(ModelKind::LogisticRegression);
        let dp = DpConfig {
            sampling: SamplingMode::Poisson,
            batch_size: 10,
            epochs: 4,
            schedule: NoiseSchedule::ExpDecay { initial: 2.0, rate: 0.1 },
            ..Default::default()
        };
        let a = dp_train(&spec, &ds, None, &dp, fresh()).unwrap();
        let b = dp_train(&spec, &ds, None, &dp, fresh()).unwrap();
        assert_eq!(a.steps, 40);
        assert_eq!(a.model.parameters().unwrap(), b.model.parameters().unwrap());
        assert!(a.guarantee().unwrap().epsilon.is_finite());
    }

    #[test]
    fn rejects_trees_and_oversized_batches() {
        let ds = synth_blobs(2, 10, 3, 0.2, 3).unwrap();
        let tree = ModelSpec::default_for(ModelKind::DecisionTree);
        assert!(matches!(
            dp_train(&tree, &ds, None, &DpConfig::default(), fresh()),
            Err(Error::NotDifferentiable(_))
        ));
        let lr = ModelSpec::default_for(ModelKind::LogisticRegression);
        let dp = DpConfig { batch_size: 21, ..Default::default() };
        assert!(dp_train(&lr, &ds, None, &dp, fresh()).is_err());
    }

    proptest! {
        #[test]
        fn clipped_norm_bounded(g in proptest::collection::vec(-1e3f64..1e3, 1..20), c in 1e-3f64..10.0) {
            let out = clip_gradient(&g, c).unwrap();
            let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm <= c * (1.0 + 1e-12));
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn > 0.0 {
                let cos = g.iter().zip(&out).map(|(a, b)| a * b).sum::<f64>() / (gn * norm.max(1e-300));
                prop_assert!(norm == 0.0 || cos > 1.0 - 1e-9);
            }
        }

        #[test]
        fn decay_schedules_non_increasing(s0 in 0.1f64..10.0, r in 0.0f64..2.0, f in 0.05f64..1.0, period in 1usize..5, e in 2usize..30) {
            for sched in [
                NoiseSchedule::LinearDecay { initial: s0, terminal: s0 * f },
                NoiseSchedule::ExpDecay { initial: s0, rate: r },
                NoiseSchedule::StepDecay { initial: s0, factor: f, period },
                NoiseSchedule::InverseTimeDecay { initial: s0, rate: r },
            ] {
                let t = sched.trace(e);
                prop_assert!(t.iter().all(|&s| s > 0.0));
                prop_assert!(t.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }
}
