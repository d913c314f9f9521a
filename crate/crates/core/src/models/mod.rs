//! Trainable classifiers producing probability vectors.
//!
//! Every model implements [`Classifier`]: a length-`k` vector of
//! non-negative probabilities summing to one. Target models, shadow models,
//! attack models and substitute models are all [`ProbModel`]s.

mod knn;
mod naive_bayes;
mod network;
mod sgd;
mod tree;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub(crate) use network::Network;
pub(crate) use sgd::{apply_update, epoch_batches, SgdConfig};

use crate::data::Dataset;
use crate::error::invalid;
use crate::math::{argmax, ln};
use crate::{Error, Result};

/// Probability floor used by the cross-entropy loss.
pub const LOSS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DecisionTree,
    Knn,
    LogisticRegression,
    GaussianNb,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::DecisionTree,
        ModelKind::Knn,
        ModelKind::LogisticRegression,
        ModelKind::GaussianNb,
        ModelKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::Knn => "knn",
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::GaussianNb => "gaussian_nb",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "DT",
            ModelKind::Knn => "k-NN",
            ModelKind::LogisticRegression => "LR",
            ModelKind::GaussianNb => "NB",
            ModelKind::Mlp => "MLP",
        }
    }

    pub fn is_differentiable(self) -> bool {
        matches!(self, ModelKind::LogisticRegression | ModelKind::Mlp)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// CART with Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    /// `None` grows until leaves are pure. `Some(0)` is a single root leaf,
    /// i.e. a constant predictor of the training class frequencies.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k_neighbors: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k_neighbors: 5 }
    }
}

/// Multinomial logistic regression trained with mini-batch SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 50,
            l2: 0.0,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbParams {
    pub var_floor: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        Self { var_floor: 1e-9 }
    }
}

/// Fully connected ReLU network with a softmax output, trained with
/// mini-batch SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: alloc::vec![32],
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 16,
            l2: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    DecisionTree(TreeParams),
    Knn(KnnParams),
    LogisticRegression(LogisticParams),
    GaussianNb(NbParams),
    Mlp(MlpParams),
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::DecisionTree => Self::DecisionTree(TreeParams::default()),
            ModelKind::Knn => Self::Knn(KnnParams::default()),
            ModelKind::LogisticRegression => Self::LogisticRegression(LogisticParams::default()),
            ModelKind::GaussianNb => Self::GaussianNb(NbParams::default()),
            ModelKind::Mlp => Self::Mlp(MlpParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::DecisionTree(_) => ModelKind::DecisionTree,
            Self::Knn(_) => ModelKind::Knn,
            Self::LogisticRegression(_) => ModelKind::LogisticRegression,
            Self::GaussianNb(_) => ModelKind::GaussianNb,
            Self::Mlp(_) => ModelKind::Mlp,
        }
    }

    /// Copy with the RNG seed replaced (no-op for deterministic learners).
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::LogisticRegression(p) => p.seed = seed,
            Self::Mlp(p) => p.seed = seed,
            _ => {}
        }
        out
    }

    /// Problems with the hyperparameters, one message per problem.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                out.push(String::from(msg));
            }
        };
        match self {
            Self::DecisionTree(p) => check(p.min_leaf >= 1, "min_leaf must be >= 1"),
            Self::Knn(p) => check(p.k_neighbors >= 1, "k_neighbors must be >= 1"),
            Self::LogisticRegression(p) => {
                check(p.learning_rate > 0.0 && p.learning_rate.is_finite(), "learning_rate must be positive");
                check(p.epochs >= 1, "epochs must be >= 1");
                check(p.batch_size >= 1, "batch_size must be >= 1");
                check(p.l2 >= 0.0, "l2 must be non-negative");
            }
            Self::GaussianNb(p) => check(p.var_floor > 0.0, "var_floor must be positive"),
            Self::Mlp(p) => {
                check(p.hidden.iter().all(|&h| h >= 1), "hidden layer sizes must be >= 1");
                check(p.learning_rate > 0.0 && p.learning_rate.is_finite(), "learning_rate must be positive");
                check(p.epochs >= 1, "epochs must be >= 1");
                check(p.batch_size >= 1, "batch_size must be >= 1");
                check(p.l2 >= 0.0, "l2 must be non-negative");
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().into_iter().next() {
            Some(p) => Err(Error::InvalidArgument(p)),
            None => Ok(()),
        }
    }

    /// Optimizer settings for gradient-trained kinds.
    pub(crate) fn sgd_config(&self) -> Option<SgdConfig> {
        match self {
            Self::LogisticRegression(p) => Some(SgdConfig {
                learning_rate: p.learning_rate,
                epochs: p.epochs,
                batch_size: p.batch_size,
                l2: p.l2,
                seed: p.seed,
            }),
            Self::Mlp(p) => Some(SgdConfig {
                learning_rate: p.learning_rate,
                epochs: p.epochs,
                batch_size: p.batch_size,
                l2: p.l2,
                seed: p.seed,
            }),
            _ => None,
        }
    }

    /// Freshly initialized network for gradient-trained kinds.
    pub(crate) fn init_network(&self, n_features: usize, n_classes: usize) -> Option<Network> {
        match self {
            Self::LogisticRegression(_) => Some(Network::zeros(alloc::vec![n_features, n_classes])),
            Self::Mlp(p) => {
                let mut sizes = alloc::vec![n_features];
                sizes.extend_from_slice(&p.hidden);
                sizes.push(n_classes);
                Some(Network::glorot(sizes, p.seed))
            }
            _ => None,
        }
    }
}

/// Anything that maps a feature vector to class probabilities.
pub trait Classifier {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Params {
    Tree(tree::DecisionTree),
    Knn(knn::Knn),
    NaiveBayes(naive_bayes::GaussianNb),
    Network(Network),
}

/// A (possibly untrained) classifier of a given [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbModel {
    spec: ModelSpec,
    n_features: usize,
    n_classes: usize,
    params: Option<Params>,
    train_accuracy: Option<f64>,
    test_accuracy: Option<f64>,
}

impl ProbModel {
    /// A model shell without parameters; prediction fails until trained.
    pub fn untrained(spec: ModelSpec, n_features: usize, n_classes: usize) -> Self {
        Self {
            spec,
            n_features,
            n_classes,
            params: None,
            train_accuracy: None,
            test_accuracy: None,
        }
    }

    /// Gradient-trained kinds only: the initial parameters training would
    /// start from.
    pub fn initialized(spec: ModelSpec, n_features: usize, n_classes: usize) -> Result<Self> {
        spec.validate()?;
        let net = spec
            .init_network(n_features, n_classes)
            .ok_or(Error::NotDifferentiable(spec.kind().name()))?;
        Ok(Self {
            params: Some(Params::Network(net)),
            ..Self::untrained(spec, n_features, n_classes)
        })
    }

    pub(crate) fn from_network(spec: ModelSpec, net: Network) -> Self {
        Self {
            n_features: net.n_inputs(),
            n_classes: net.n_outputs(),
            params: Some(Params::Network(net)),
            spec,
            train_accuracy: None,
            test_accuracy: None,
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    pub fn is_trained(&self) -> bool {
        self.params.is_some()
    }

    pub fn train_accuracy(&self) -> Option<f64> {
        self.train_accuracy
    }

    pub fn test_accuracy(&self) -> Option<f64> {
        self.test_accuracy
    }

    /// Flat parameter vector of a gradient-trained model.
    ///
    /// Layout, layer by layer from input to output: the weight matrix
    /// (`out × in`, row-major) followed by the bias vector (`out`). For
    /// logistic regression that is `W` (`k × m`) then `b` (`k`).
    pub fn parameters(&self) -> Option<&[f64]> {
        match &self.params {
            Some(Params::Network(n)) => Some(n.params()),
            _ => None,
        }
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        match &mut self.params {
            Some(Params::Network(n)) => {
                if values.len() != n.params().len() {
                    return Err(Error::LengthMismatch {
                        left: values.len(),
                        right: n.params().len(),
                    });
                }
                n.params_mut().copy_from_slice(values);
                Ok(())
            }
            Some(_) => Err(Error::NotDifferentiable(self.spec.kind().name())),
            None => Err(Error::Untrained),
        }
    }

    pub(crate) fn network(&self) -> Result<&Network> {
        match &self.params {
            Some(Params::Network(n)) => Ok(n),
            Some(_) => Err(Error::NotDifferentiable(self.spec.kind().name())),
            None => Err(Error::Untrained),
        }
    }

    /// Recomputes the cached train/test accuracies.
    pub fn record_accuracies(&mut self, train: &Dataset, test: Option<&Dataset>) -> Result<()> {
        self.train_accuracy = Some(accuracy(self, train)?);
        self.test_accuracy = match test {
            Some(t) => Some(accuracy(self, t)?),
            None => None,
        };
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(())
    }
}

impl Classifier for ProbModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        match self.params.as_ref().ok_or(Error::Untrained)? {
            Params::Tree(t) => Ok(t.predict_proba(x)),
            Params::Knn(k) => Ok(k.predict_proba(x)),
            Params::NaiveBayes(nb) => Ok(nb.predict_proba(x)),
            Params::Network(n) => Ok(n.predict_proba(x)),
        }
    }
}

/// Trains `spec` on `train`; `test`, when given, fills the test-accuracy
/// cache used by [`accuracy_difference`].
pub fn train(spec: &ModelSpec, train: &Dataset, test: Option<&Dataset>) -> Result<ProbModel> {
    spec.validate()?;
    if let Some(t) = test {
        if t.n_features() != train.n_features() {
            return Err(Error::DimensionMismatch {
                expected: train.n_features(),
                found: t.n_features(),
            });
        }
    }
    let params = match spec {
        ModelSpec::DecisionTree(p) => Params::Tree(tree::DecisionTree::fit(train, p)),
        ModelSpec::Knn(p) => Params::Knn(knn::Knn::fit(train, p)),
        ModelSpec::GaussianNb(p) => Params::NaiveBayes(naive_bayes::GaussianNb::fit(train, p)),
        ModelSpec::LogisticRegression(_) | ModelSpec::Mlp(_) => {
            let mut net = spec
                .init_network(train.n_features(), train.n_classes())
                .ok_or(Error::NotDifferentiable(spec.kind().name()))?;
            let cfg = spec.sgd_config().ok_or(Error::NotDifferentiable(spec.kind().name()))?;
            sgd::train_sgd(&mut net, train, &cfg)?;
            Params::Network(net)
        }
    };
    let mut model = ProbModel {
        params: Some(params),
        ..ProbModel::untrained(spec.clone(), train.n_features(), train.n_classes())
    };
    model.record_accuracies(train, test)?;
    Ok(model)
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(model: &dyn Classifier, ds: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for (i, row) in ds.rows().enumerate() {
        if model.predict(row)? == ds.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Training accuracy minus test accuracy.
pub fn accuracy_difference(model: &ProbModel) -> Result<f64> {
    let train = model.train_accuracy.ok_or(Error::Untrained)?;
    let test = model
        .test_accuracy
        .ok_or_else(|| invalid("test accuracy was not recorded"))?;
    Ok(train - test)
}

/// Cross-entropy `-ln p_y` of the model's prediction, with `p_y` floored at
/// [`LOSS_FLOOR`].
pub fn per_example_loss(model: &dyn Classifier, x: &[f64], y: usize) -> Result<f64> {
    if y >= model.n_classes() {
        return Err(invalid("label outside the model's classes"));
    }
    let p = model.predict_proba(x)?;
    Ok(-ln(p[y].max(LOSS_FLOOR)))
}

/// Gradient of the per-example cross-entropy with respect to every trainable
/// parameter, in the order of [`ProbModel::parameters`].
pub fn per_example_gradient(model: &ProbModel, x: &[f64], y: usize) -> Result<Vec<f64>> {
    model.check_input(x)?;
    if y >= model.n_classes {
        return Err(invalid("label outside the model's classes"));
    }
    let net = model.network()?;
    let mut grad = alloc::vec![0.0; net.params().len()];
    let mut scratch = net.scratch();
    net.loss_and_gradient(x, y, &mut grad, &mut scratch);
    Ok(grad)
}
