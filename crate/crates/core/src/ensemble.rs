//! Random Machines and the single-kernel bagged SVM.
//!
//! Random Machines fits one SVM per candidate kernel on an internal split
//! of the training data and turns the held-out accuracies into kernel
//! sampling probabilities
//!
//! ```text
//! λ_r = logit(ACC_r) / Σ_i logit(ACC_i)
//! ```
//!
//! It then draws `B` bootstrap samples of the training data, trains each
//! with a kernel sampled from `λ`, and weights each bootstrap model by its
//! out-of-bag accuracy `Ω_b` as `w_b = 1 / (1 − Ω_b)²`. Prediction is the
//! sign of the weighted sum of the base models' hard ±1 votes.
//!
//! Accuracies are clamped to `[0.501, 0.999]` before the logit, so kernels
//! at or below chance get a probability close to zero instead of a negative
//! one. `Ω_b` is clamped to at most `0.999`, capping weights at `10⁶`.
//!
//! Each bootstrap draws from its own RNG stream derived from the master
//! seed, so fits are identical regardless of thread scheduling.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_indices, Dataset, Label};
use crate::error::{Error, Result};
use crate::kernel::{cross_matrix, gram_matrix, KernelSpec};
use crate::metrics;
use crate::rng::{self, tag};
use crate::solver::{train_indexed, SolverSettings, TrainedSvm, DENSE_GRAM_LIMIT};

pub const ACC_CLAMP_DELTA: f64 = 1e-3;
pub const OMEGA_CAP: f64 = 1.0 - 1e-3;
pub const BOOTSTRAP_RETRIES: usize = 50;
pub const MIN_TRAIN_ROWS: usize = 10;

// ---------------------------------------------------------------------------
// Kernel probabilities
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelProbability {
    pub kernel: KernelSpec,
    /// Unclamped held-out accuracy.
    pub accuracy: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelProbabilities {
    pub entries: Vec<KernelProbability>,
}

impl KernelProbabilities {
    pub fn lambdas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.lambda).collect()
    }

    pub fn kernels(&self) -> Vec<KernelSpec> {
        self.entries.iter().map(|e| e.kernel).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sampling probabilities from per-kernel accuracies.
///
/// Accuracies are clamped to `[0.5 + δ, 1 − δ]`; if every kernel sits at
/// the lower clamp the result is uniform.
pub fn lambdas_from_accuracies(accuracies: &[f64]) -> Result<Vec<f64>> {
    if accuracies.is_empty() {
        return Err(Error::input("at least one accuracy is required"));
    }
    if let Some(a) = accuracies.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::input(format!("accuracy {a} outside [0, 1]")));
    }
    let lo = 0.5 + ACC_CLAMP_DELTA;
    let hi = 1.0 - ACC_CLAMP_DELTA;
    let clamped: Vec<f64> = accuracies.iter().map(|a| a.clamp(lo, hi)).collect();
    let r = clamped.len() as f64;
    if clamped.iter().all(|&a| a == lo) {
        return Ok(vec![1.0 / r; clamped.len()]);
    }
    let logits: Vec<f64> = clamped.iter().map(|a| (a / (1.0 - a)).ln()).collect();
    let total: f64 = logits.iter().sum();
    Ok(logits.iter().map(|l| l / total).collect())
}

/// Trains one SVM per kernel on `train`, scores it on `probe`, and converts
/// the accuracies into sampling probabilities.
pub fn estimate_kernel_probabilities(
    train: &Dataset,
    probe: &Dataset,
    kernels: &[KernelSpec],
    cost: f64,
    solver: &SolverSettings,
) -> Result<KernelProbabilities> {
    if kernels.len() < 2 {
        return Err(Error::input("kernel probabilities need at least two kernels"));
    }
    let accuracies = probe_accuracies(train, probe, kernels, cost, solver, solver.seed)?;
    build_probabilities(kernels, &accuracies)
}

fn build_probabilities(kernels: &[KernelSpec], accuracies: &[f64]) -> Result<KernelProbabilities> {
    let lambdas = lambdas_from_accuracies(accuracies)?;
    Ok(KernelProbabilities {
        entries: kernels
            .iter()
            .zip(accuracies)
            .zip(lambdas)
            .map(|((&kernel, &accuracy), lambda)| KernelProbability { kernel, accuracy, lambda })
            .collect(),
    })
}

fn probe_accuracies(
    train: &Dataset,
    probe: &Dataset,
    kernels: &[KernelSpec],
    cost: f64,
    solver: &SolverSettings,
    seed: u64,
) -> Result<Vec<f64>> {
    if probe.n_rows() == 0 {
        return Err(Error::input("probe set is empty"));
    }
    if probe.n_features() != train.n_features() {
        return Err(Error::input("probe and train differ in feature count"));
    }
    let rows: Vec<usize> = (0..train.n_rows()).collect();
    kernels
        .par_iter()
        .enumerate()
        .map(|(r, spec)| {
            let settings = SolverSettings {
                cost,
                seed: rng::derive_seed(seed, tag::PROBE_SOLVER, r as u64),
                ..*solver
            };
            let (model, _) = train_indexed(train.features(), train.labels(), &rows, spec, &settings, None)?;
            let predicted = model.predict_batch(probe.features())?;
            metrics::accuracy(&metrics::confusion(&predicted, probe.labels())?)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Weights, bootstraps, votes
// ---------------------------------------------------------------------------

/// Vote weight `1 / (1 − Ω)²` with Ω clamped to at most [`OMEGA_CAP`].
pub fn oob_weight(omega: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::input(format!("out-of-bag accuracy {omega} outside [0, 1]")));
    }
    let o = omega.min(OMEGA_CAP);
    Ok(1.0 / ((1.0 - o) * (1.0 - o)))
}

/// One bootstrap draw: `indices` with repeats and the rows never drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bootstrap {
    pub indices: Vec<usize>,
    /// Sorted ascending.
    pub oob: Vec<usize>,
}

/// Draws `n` indices uniformly with replacement from `0..n`.
pub fn bootstrap_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Bootstrap> {
    if n < 2 {
        return Err(Error::input("bootstrap needs at least two rows"));
    }
    let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut drawn = vec![false; n];
    for &i in &indices {
        drawn[i] = true;
    }
    let oob = (0..n).filter(|&i| !drawn[i]).collect();
    Ok(Bootstrap { indices, oob })
}

fn bootstrap_with_both_classes<R: Rng + ?Sized>(labels: &[Label], rng: &mut R) -> Result<Bootstrap> {
    for _ in 0..=BOOTSTRAP_RETRIES {
        let b = bootstrap_sample(labels.len(), rng)?;
        let first = labels[b.indices[0]];
        if b.indices.iter().any(|&i| labels[i] != first) {
            return Ok(b);
        }
    }
    Err(Error::training(format!(
        "no bootstrap sample with both classes after {BOOTSTRAP_RETRIES} retries"
    )))
}

/// Sign of `Σ w_b v_b`; a zero sum votes +1.
pub fn weighted_vote(weights: &[f64], votes: &[Label]) -> Label {
    let total: f64 = weights.iter().zip(votes).map(|(w, v)| w * v.sign()).sum();
    Label::from_score(total)
}

/// Unweighted sign vote; a tie votes +1.
pub fn majority_vote(votes: &[Label]) -> Label {
    let pos = votes.iter().filter(|&&v| v == Label::Positive).count();
    Label::from_score(pos as f64 * 2.0 - votes.len() as f64)
}

const POINT_BLOCK: usize = 2048;

/// Hard labels of every model on every row of `points`; `out[b][k]` is model
/// `b` on point `k`.
///
/// Support vectors shared between models (bootstrap models reuse training
/// rows) are evaluated once per kernel and the per-model sums become one
/// matrix product, which makes scoring large point sets against a whole
/// ensemble affordable. Decision values match [`TrainedSvm::decision_value`]
/// up to summation order.
pub fn base_predictions<'a, I>(models: I, points: ArrayView2<f64>) -> Result<Vec<Vec<Label>>>
where
    I: IntoIterator<Item = &'a TrainedSvm>,
{
    let models: Vec<&TrainedSvm> = models.into_iter().collect();
    for m in &models {
        if m.dimension() != points.ncols() {
            return Err(Error::input(format!(
                "model expects {} features, got {}",
                m.dimension(),
                points.ncols()
            )));
        }
    }
    let k = points.nrows();
    let mut out = vec![Vec::with_capacity(k); models.len()];

    // group models by kernel; pool each group's distinct support vectors
    let mut groups: Vec<(KernelSpec, Vec<usize>)> = Vec::new();
    for (b, m) in models.iter().enumerate() {
        match groups.iter_mut().find(|(s, _)| s == m.kernel()) {
            Some((_, members)) => members.push(b),
            None => groups.push((*m.kernel(), vec![b])),
        }
    }
    let mut slot_of: Vec<Vec<usize>> = vec![Vec::new(); models.len()];
    let mut pools: Vec<Array2<f64>> = Vec::with_capacity(groups.len());
    let mut coefs: Vec<Array2<f64>> = Vec::with_capacity(groups.len());
    for (_, members) in &groups {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut pool: Vec<f64> = Vec::new();
        for &b in members {
            slot_of[b] = models[b]
                .support_vectors()
                .iter()
                .map(|sv| {
                    let key: Vec<u64> = sv.x.iter().map(|v| v.to_bits()).collect();
                    *index.entry(key).or_insert_with(|| {
                        pool.extend_from_slice(&sv.x);
                        pool.len() / points.ncols() - 1
                    })
                })
                .collect();
        }
        let m = pool.len() / points.ncols();
        pools.push(Array2::from_shape_vec((m, points.ncols()), pool).expect("pooled rows"));
        // column c holds member c's coefficients over the pool
        let mut w = Array2::zeros((m, members.len()));
        for (c, &b) in members.iter().enumerate() {
            for (sv, &j) in models[b].support_vectors().iter().zip(&slot_of[b]) {
                w[[j, c]] += sv.coef();
            }
        }
        coefs.push(w);
    }

    for start in (0..k).step_by(POINT_BLOCK) {
        let block = points.slice(ndarray::s![start..(start + POINT_BLOCK).min(k), ..]);
        for (g, ((spec, members), pool)) in groups.iter().zip(&pools).enumerate() {
            let kv = if pool.nrows() > 0 {
                cross_matrix(spec, block, pool.view())?
            } else {
                Array2::zeros((block.nrows(), 0))
            };
            let scores = kv.dot(&coefs[g]);
            let labels: Vec<Vec<Label>> = members
                .iter()
                .enumerate()
                .map(|(c, &b)| {
                    let bias = models[b].bias();
                    scores.column(c).iter().map(|s| Label::from_score(s + bias)).collect()
                })
                .collect();
            for (&b, l) in members.iter().zip(labels) {
                out[b].extend(l);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub kernels: Vec<KernelSpec>,
    pub bootstraps: usize,
    pub cost: f64,
    /// Fraction of the training data held out to score each kernel.
    pub probe_split: f64,
    pub solver: SolverSettings,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            kernels: KernelSpec::default_set(1.0, 2).expect("valid defaults"),
            bootstraps: 100,
            cost: 1.0,
            probe_split: 0.3,
            solver: SolverSettings::default(),
            seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::input("at least one kernel is required"));
        }
        if self.bootstraps == 0 {
            return Err(Error::input("number of bootstraps must be at least 1"));
        }
        if !(self.probe_split > 0.0 && self.probe_split < 1.0) {
            return Err(Error::input(format!("probe split must lie in (0, 1), got {}", self.probe_split)));
        }
        self.solver_settings(0).validate()
    }

    fn solver_settings(&self, seed: u64) -> SolverSettings {
        SolverSettings {
            cost: self.cost,
            seed,
            ..self.solver
        }
    }
}

fn check_train(train: &Dataset) -> Result<()> {
    if train.n_rows() < MIN_TRAIN_ROWS {
        return Err(Error::input(format!(
            "ensembles need at least {MIN_TRAIN_ROWS} training rows, got {}",
            train.n_rows()
        )));
    }
    if !train.has_both_classes() {
        return Err(Error::training("degenerate labels: training data has a single class"));
    }
    Ok(())
}

struct BootstrapPlan {
    sample: Bootstrap,
    kernel_index: usize,
    solver_seed: u64,
}

fn plan_bootstraps(labels: &[Label], count: usize, seed: u64, lambdas: Option<&[f64]>) -> Result<Vec<BootstrapPlan>> {
    // a single kernel needs no draw, which keeps its streams equal to bagging
    let picker = match lambdas {
        Some(l) if l.len() > 1 => {
            Some(WeightedIndex::new(l).map_err(|e| Error::input(format!("invalid kernel probabilities: {e}")))?)
        }
        _ => None,
    };
    (0..count)
        .map(|b| {
            let mut rng = rng::seeded(rng::derive_seed(seed, tag::BOOTSTRAP, b as u64));
            let sample = bootstrap_with_both_classes(labels, &mut rng)?;
            let kernel_index = picker.as_ref().map_or(0, |p| p.sample(&mut rng));
            Ok(BootstrapPlan {
                sample,
                kernel_index,
                solver_seed: rng.gen(),
            })
        })
        .collect()
}

fn gram_cache(train: &Dataset, kernels: &[KernelSpec], used: &[bool]) -> Result<Vec<Option<Array2<f64>>>> {
    if train.n_rows() > DENSE_GRAM_LIMIT {
        return Ok(vec![None; kernels.len()]);
    }
    kernels
        .iter()
        .zip(used)
        .map(|(k, &u)| if u { gram_matrix(k, train.features()).map(Some) } else { Ok(None) })
        .collect()
}

/// Accuracy on `rows` of `data`, reading kernel values from `gram` when
/// available.
fn subset_accuracy(
    model: &TrainedSvm,
    support_rows: &[usize],
    data: &Dataset,
    rows: &[usize],
    gram: Option<&Array2<f64>>,
) -> Result<f64> {
    let mut correct = 0usize;
    for &o in rows {
        let label = match gram {
            Some(g) => {
                let s: f64 = model
                    .support_vectors()
                    .iter()
                    .zip(support_rows)
                    .map(|(sv, &r)| sv.coef() * g[[r, o]])
                    .sum();
                Label::from_score(s + model.bias())
            }
            None => model.predict_view(data.row(o))?,
        };
        correct += (label == data.labels()[o]) as usize;
    }
    Ok(correct as f64 / rows.len() as f64)
}

// ---------------------------------------------------------------------------
// Random Machines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseModel {
    pub weight: f64,
    pub oob_accuracy: f64,
    pub kernel_index: usize,
    pub model: TrainedSvm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RmWire", try_from = "RmWire")]
pub struct RandomMachinesModel {
    base_models: Vec<BaseModel>,
    probabilities: KernelProbabilities,
    seed: u64,
}

impl RandomMachinesModel {
    /// Assembles a model from parts, checking that every weight equals
    /// `oob_weight(oob_accuracy)` and kernel indices are in range.
    pub fn from_parts(base_models: Vec<BaseModel>, probabilities: KernelProbabilities, seed: u64) -> Result<Self> {
        if base_models.is_empty() {
            return Err(Error::input("an ensemble needs at least one base model"));
        }
        if probabilities.is_empty() {
            return Err(Error::input("kernel probabilities are empty"));
        }
        let total: f64 = probabilities.lambdas().iter().sum();
        if (total - 1.0).abs() > 1e-12 || probabilities.lambdas().iter().any(|&l| l < 0.0) {
            return Err(Error::input("kernel probabilities must be non-negative and sum to one"));
        }
        let dim = base_models[0].model.dimension();
        for (b, m) in base_models.iter().enumerate() {
            if m.weight != oob_weight(m.oob_accuracy)? {
                return Err(Error::input(format!("base model {b}: weight does not match its out-of-bag accuracy")));
            }
            if m.kernel_index >= probabilities.len() {
                return Err(Error::input(format!("base model {b}: kernel index out of range")));
            }
            if m.model.dimension() != dim {
                return Err(Error::input("base models disagree on feature dimension"));
            }
        }
        Ok(RandomMachinesModel {
            base_models,
            probabilities,
            seed,
        })
    }

    pub fn base_models(&self) -> &[BaseModel] {
        &self.base_models
    }

    pub fn probabilities(&self) -> &KernelProbabilities {
        &self.probabilities
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> Vec<f64> {
        self.base_models.iter().map(|m| m.weight).collect()
    }

    pub fn dimension(&self) -> usize {
        self.base_models[0].model.dimension()
    }

    /// Sign of the OOB-weighted hard vote.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        let votes: Vec<Label> = self
            .base_models
            .iter()
            .map(|m| m.model.predict(x))
            .collect::<Result<_>>()?;
        Ok(weighted_vote(&self.weights(), &votes))
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Vec<Label>> {
        let votes = self.base_predictions(x)?;
        let weights = self.weights();
        Ok((0..x.nrows())
            .map(|k| {
                let column: Vec<Label> = votes.iter().map(|v| v[k]).collect();
                weighted_vote(&weights, &column)
            })
            .collect())
    }

    pub fn base_predictions(&self, x: ArrayView2<f64>) -> Result<Vec<Vec<Label>>> {
        base_predictions(self.base_models.iter().map(|m| &m.model), x)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub const RM_FORMAT: &str = "random-machines/ensemble";
pub const BAGGED_FORMAT: &str = "random-machines/bagged";
pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RmWire {
    format: String,
    version: u32,
    seed: u64,
    probabilities: Vec<KernelProbability>,
    base_models: Vec<RmBaseWire>,
}

#[derive(Serialize, Deserialize)]
struct RmBaseWire {
    weight: f64,
    oob_accuracy: f64,
    kernel_index: usize,
    kernel: KernelSpec,
    model: TrainedSvm,
}

impl From<RandomMachinesModel> for RmWire {
    fn from(m: RandomMachinesModel) -> Self {
        RmWire {
            format: RM_FORMAT.into(),
            version: ENSEMBLE_FORMAT_VERSION,
            seed: m.seed,
            probabilities: m.probabilities.entries,
            base_models: m
                .base_models
                .into_iter()
                .map(|b| RmBaseWire {
                    weight: b.weight,
                    oob_accuracy: b.oob_accuracy,
                    kernel_index: b.kernel_index,
                    kernel: *b.model.kernel(),
                    model: b.model,
                })
                .collect(),
        }
    }
}

impl TryFrom<RmWire> for RandomMachinesModel {
    type Error = String;

    fn try_from(w: RmWire) -> std::result::Result<Self, String> {
        if w.format != RM_FORMAT || w.version != ENSEMBLE_FORMAT_VERSION {
            return Err(format!("unsupported ensemble document {} v{}", w.format, w.version));
        }
        let base_models = w
            .base_models
            .into_iter()
            .map(|b| {
                if b.kernel != *b.model.kernel() {
                    return Err("base model kernel token disagrees with embedded model".to_string());
                }
                Ok(BaseModel {
                    weight: b.weight,
                    oob_accuracy: b.oob_accuracy,
                    kernel_index: b.kernel_index,
                    model: b.model,
                })
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        RandomMachinesModel::from_parts(base_models, KernelProbabilities { entries: w.probabilities }, w.seed)
            .map_err(|e| e.to_string())
    }
}

/// Fits a Random Machines ensemble.
///
/// 1. Splits `train` (stratified) into a fit part and a probe part of
///    relative size `probe_split`, and scores one SVM per kernel.
/// 2. Converts the probe accuracies to kernel probabilities.
/// 3. For each of `B` bootstraps of the full training data, samples a
///    kernel, trains, and weights the model by its out-of-bag accuracy.
///    A bootstrap with an empty OOB set falls back to its kernel's probe
///    accuracy.
pub fn fit_random_machines(train: &Dataset, config: &EnsembleConfig) -> Result<RandomMachinesModel> {
    config.validate()?;
    check_train(train)?;

    let mut split_rng = rng::seeded(rng::derive_seed(config.seed, tag::PROBE_SPLIT, 0));
    let (fit_rows, probe_rows) = stratified_indices(train.labels(), 1.0 - config.probe_split, &mut split_rng)?;
    let fit_part = train.subset(&fit_rows)?;
    let probe_part = train.subset(&probe_rows)?;
    if !fit_part.has_both_classes() {
        return Err(Error::training("probe split left a single class for kernel scoring"));
    }
    let accuracies = probe_accuracies(
        &fit_part,
        &probe_part,
        &config.kernels,
        config.cost,
        &config.solver,
        rng::derive_seed(config.seed, tag::PROBE_SOLVER, 0),
    )?;
    let probabilities = build_probabilities(&config.kernels, &accuracies)?;

    let plans = plan_bootstraps(train.labels(), config.bootstraps, config.seed, Some(&probabilities.lambdas()))?;
    let mut used = vec![false; config.kernels.len()];
    for p in &plans {
        used[p.kernel_index] = true;
    }
    let grams = gram_cache(train, &config.kernels, &used)?;

    let base_models = plans
        .par_iter()
        .map(|plan| {
            let r = plan.kernel_index;
            let gram = grams[r].as_ref();
            let settings = config.solver_settings(plan.solver_seed);
            let (model, support_rows) = train_indexed(
                train.features(),
                train.labels(),
                &plan.sample.indices,
                &config.kernels[r],
                &settings,
                gram,
            )?;
            let oob_accuracy = if plan.sample.oob.is_empty() {
                accuracies[r]
            } else {
                subset_accuracy(&model, &support_rows, train, &plan.sample.oob, gram)?
            };
            Ok(BaseModel {
                weight: oob_weight(oob_accuracy)?,
                oob_accuracy,
                kernel_index: r,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    RandomMachinesModel::from_parts(base_models, probabilities, config.seed)
}

// ---------------------------------------------------------------------------
// Bagged SVM
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "BaggedWire", try_from = "BaggedWire")]
pub struct BaggedSvmModel {
    kernel: KernelSpec,
    base_models: Vec<TrainedSvm>,
    seed: u64,
}

impl BaggedSvmModel {
    pub fn from_parts(base_models: Vec<TrainedSvm>, seed: u64) -> Result<Self> {
        let first = base_models
            .first()
            .ok_or_else(|| Error::input("an ensemble needs at least one base model"))?;
        let kernel = *first.kernel();
        if base_models.iter().any(|m| *m.kernel() != kernel || m.dimension() != first.dimension()) {
            return Err(Error::input("bagged base models must share one kernel and dimension"));
        }
        Ok(BaggedSvmModel {
            kernel,
            base_models,
            seed,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn base_models(&self) -> &[TrainedSvm] {
        &self.base_models
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        let votes: Vec<Label> = self.base_models.iter().map(|m| m.predict(x)).collect::<Result<_>>()?;
        Ok(majority_vote(&votes))
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Vec<Label>> {
        let votes = self.base_predictions(x)?;
        Ok((0..x.nrows())
            .map(|k| {
                let column: Vec<Label> = votes.iter().map(|v| v[k]).collect();
                majority_vote(&column)
            })
            .collect())
    }

    pub fn base_predictions(&self, x: ArrayView2<f64>) -> Result<Vec<Vec<Label>>> {
        base_predictions(&self.base_models, x)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct BaggedWire {
    format: String,
    version: u32,
    seed: u64,
    kernel: KernelSpec,
    base_models: Vec<TrainedSvm>,
}

impl From<BaggedSvmModel> for BaggedWire {
    fn from(m: BaggedSvmModel) -> Self {
        BaggedWire {
            format: BAGGED_FORMAT.into(),
            version: ENSEMBLE_FORMAT_VERSION,
            seed: m.seed,
            kernel: m.kernel,
            base_models: m.base_models,
        }
    }
}

impl TryFrom<BaggedWire> for BaggedSvmModel {
    type Error = String;

    fn try_from(w: BaggedWire) -> std::result::Result<Self, String> {
        if w.format != BAGGED_FORMAT || w.version != ENSEMBLE_FORMAT_VERSION {
            return Err(format!("unsupported bagged document {} v{}", w.format, w.version));
        }
        let m = BaggedSvmModel::from_parts(w.base_models, w.seed).map_err(|e| e.to_string())?;
        if m.kernel != w.kernel {
            return Err("kernel token disagrees with base models".into());
        }
        Ok(m)
    }
}

/// Bagging with a single kernel and an unweighted vote.
pub fn fit_bagged_svm(
    train: &Dataset,
    spec: &KernelSpec,
    bootstraps: usize,
    cost: f64,
    solver: &SolverSettings,
    seed: u64,
) -> Result<BaggedSvmModel> {
    if bootstraps == 0 {
        return Err(Error::input("number of bootstraps must be at least 1"));
    }
    SolverSettings { cost, ..*solver }.validate()?;
    check_train(train)?;
    let plans = plan_bootstraps(train.labels(), bootstraps, seed, None)?;
    let grams = gram_cache(train, std::slice::from_ref(spec), &[true])?;
    let gram = grams[0].as_ref();
    let models = plans
        .par_iter()
        .map(|plan| {
            let settings = SolverSettings {
                cost,
                seed: plan.solver_seed,
                ..*solver
            };
            train_indexed(train.features(), train.labels(), &plan.sample.indices, spec, &settings, gram).map(|(m, _)| m)
        })
        .collect::<Result<Vec<_>>>()?;
    BaggedSvmModel::from_parts(models, seed)
}
