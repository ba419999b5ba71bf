//! Soft-margin SVM trained in the dual.
//!
//! The solver maximizes
//!
//! ```text
//! W(α) = Σ α_i − ½ Σ_i Σ_j α_i α_j y_i y_j K(x_i, x_j)
//! subject to Σ α_i y_i = 0,  0 ≤ α_i ≤ C
//! ```
//!
//! with two-variable coordinate ascent (SMO). The working pair is the
//! maximal violating `i` together with the `j` that maximizes the
//! second-order gain, as in LIBSVM. Candidates are scanned in a seeded random
//! order, which fixes tie-breaking and nothing else. Internally the problem is
//! kept in minimization form `f(α) = −W(α)` with gradient `G = Qα − e`.

use std::num::NonZeroUsize;
use std::rc::Rc;

use lru::LruCache;
use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, KernelSpec};
use crate::rng;

/// Above this many training rows the kernel is served from an LRU row cache
/// instead of a dense Gram matrix.
pub const DENSE_GRAM_LIMIT: usize = 4000;

const CACHE_BYTES: usize = 512 << 20;
const TAU: f64 = 1e-12;
/// A pass with no α moving further than this counts as stalled.
const PROGRESS_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub cost: f64,
    /// Maximal violating-pair gap accepted as optimal.
    pub kkt_tolerance: f64,
    /// Consecutive stalled passes (n pair updates each) before giving up.
    pub max_passes: usize,
    /// Hard cap on pair updates.
    pub max_iterations: usize,
    /// Seed for the candidate scan order.
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            cost: 1.0,
            kkt_tolerance: 1e-3,
            max_passes: 10,
            max_iterations: 100_000,
            seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn with_cost(cost: f64) -> Self {
        SolverSettings { cost, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cost.is_finite() && self.cost > 0.0) {
            return Err(Error::input(format!("cost must be positive, got {}", self.cost)));
        }
        if !(self.kkt_tolerance.is_finite() && self.kkt_tolerance > 0.0) {
            return Err(Error::input("kkt tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::input("max_iterations must be at least 1"));
        }
        if self.max_passes == 0 {
            return Err(Error::input("max_passes must be at least 1"));
        }
        Ok(())
    }
}

/// One retained training point with its dual coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportVector {
    pub x: Vec<f64>,
    pub label: Label,
    /// α_i in (0, C].
    pub alpha: f64,
}

impl SupportVector {
    /// α_i · y_i
    pub fn coef(&self) -> f64 {
        self.alpha * self.label.sign()
    }
}

/// A fitted soft-margin SVM. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SvmWire", try_from = "SvmWire")]
pub struct TrainedSvm {
    kernel: KernelSpec,
    support_vectors: Vec<SupportVector>,
    bias: f64,
    cost: f64,
    dual_objective: f64,
    converged: bool,
    iterations: usize,
    dimension: usize,
}

impl TrainedSvm {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn support_vectors(&self) -> &[SupportVector] {
        &self.support_vectors
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Final value of W(α).
    pub fn dual_objective(&self) -> f64 {
        self.dual_objective
    }

    /// False when training stopped on the iteration cap or on stalling
    /// before the KKT gap closed.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dimension {
            return Err(Error::input(format!(
                "model expects {} features, got {len}",
                self.dimension
            )));
        }
        Ok(())
    }

    /// f(x) = Σ α_i y_i K(x_i, x) + b
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self
            .support_vectors
            .iter()
            .map(|sv| sv.coef() * self.kernel.eval_unchecked(&sv.x, x))
            .sum::<f64>()
            + self.bias)
    }

    pub fn decision_value_view(&self, x: ArrayView1<f64>) -> Result<f64> {
        match x.as_slice() {
            Some(s) => self.decision_value(s),
            None => self.decision_value(&x.to_vec()),
        }
    }

    /// Sign of the decision value; zero maps to +1.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(Label::from_score(self.decision_value(x)?))
    }

    pub fn predict_view(&self, x: ArrayView1<f64>) -> Result<Label> {
        Ok(Label::from_score(self.decision_value_view(x)?))
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Vec<Label>> {
        self.check_dim(x.ncols())?;
        x.rows().into_iter().map(|r| self.predict_view(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub const SVM_FORMAT: &str = "random-machines/svm";
pub const SVM_FORMAT_VERSION: u32 = 1;

/// On-disk layout. Floats are written in shortest round-trip form, so a
/// save/load cycle reproduces every coefficient bit for bit.
#[derive(Serialize, Deserialize)]
struct SvmWire {
    format: String,
    version: u32,
    kernel: KernelSpec,
    cost: f64,
    bias: f64,
    dual_objective: f64,
    converged: bool,
    iterations: usize,
    dimension: usize,
    /// `[α_i·y_i, [x_i...]]`
    support_vectors: Vec<(f64, Vec<f64>)>,
}

impl From<TrainedSvm> for SvmWire {
    fn from(m: TrainedSvm) -> Self {
        SvmWire {
            format: SVM_FORMAT.into(),
            version: SVM_FORMAT_VERSION,
            kernel: m.kernel,
            cost: m.cost,
            bias: m.bias,
            dual_objective: m.dual_objective,
            converged: m.converged,
            iterations: m.iterations,
            dimension: m.dimension,
            support_vectors: m.support_vectors.into_iter().map(|sv| (sv.coef(), sv.x)).collect(),
        }
    }
}

impl TryFrom<SvmWire> for TrainedSvm {
    type Error = String;

    fn try_from(w: SvmWire) -> std::result::Result<Self, String> {
        if w.format != SVM_FORMAT {
            return Err(format!("unexpected format '{}'", w.format));
        }
        if w.version != SVM_FORMAT_VERSION {
            return Err(format!("unsupported svm format version {}", w.version));
        }
        let mut svs = Vec::with_capacity(w.support_vectors.len());
        for (coef, x) in w.support_vectors {
            if coef == 0.0 || !coef.is_finite() {
                return Err(format!("invalid support vector coefficient {coef}"));
            }
            if x.len() != w.dimension {
                return Err("support vector dimension mismatch".into());
            }
            svs.push(SupportVector {
                x,
                label: Label::from_score(coef),
                alpha: coef.abs(),
            });
        }
        Ok(TrainedSvm {
            kernel: w.kernel,
            support_vectors: svs,
            bias: w.bias,
            cost: w.cost,
            dual_objective: w.dual_objective,
            converged: w.converged,
            iterations: w.iterations,
            dimension: w.dimension,
        })
    }
}

/// Trains on every row of `x`.
pub fn train_svm(x: ArrayView2<f64>, y: &[Label], spec: &KernelSpec, settings: &SolverSettings) -> Result<TrainedSvm> {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    train_svm_on_rows(x, y, &rows, spec, settings, None)
}

/// Trains on the rows of `x` listed in `rows` (repeats allowed, as in a
/// bootstrap sample).
///
/// `gram`, when given, must be the Gram matrix of all of `x` under `spec`;
/// the sub-problem then reads kernel values from it instead of recomputing.
pub fn train_svm_on_rows(
    x: ArrayView2<f64>,
    y: &[Label],
    rows: &[usize],
    spec: &KernelSpec,
    settings: &SolverSettings,
    gram: Option<&Array2<f64>>,
) -> Result<TrainedSvm> {
    train_indexed(x, y, rows, spec, settings, gram).map(|(m, _)| m)
}

/// As [`train_svm_on_rows`], also returning the row of `x` behind each
/// support vector.
pub(crate) fn train_indexed(
    x: ArrayView2<f64>,
    y: &[Label],
    rows: &[usize],
    spec: &KernelSpec,
    settings: &SolverSettings,
    gram: Option<&Array2<f64>>,
) -> Result<(TrainedSvm, Vec<usize>)> {
    settings.validate()?;
    if y.len() != x.nrows() {
        return Err(Error::input(format!("{} labels for {} rows", y.len(), x.nrows())));
    }
    if x.ncols() == 0 {
        return Err(Error::input("training data needs at least one feature"));
    }
    let n = rows.len();
    if n < 2 {
        return Err(Error::input("training needs at least two rows"));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= x.nrows()) {
        return Err(Error::input(format!("row index {bad} out of range")));
    }
    if let Some(g) = gram {
        if g.dim() != (x.nrows(), x.nrows()) {
            return Err(Error::input("precomputed gram matrix has the wrong shape"));
        }
    }
    let labels: Vec<Label> = rows.iter().map(|&r| y[r]).collect();
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::training("degenerate labels: training data has a single class"));
    }
    for &r in rows {
        if let Some(j) = x.row(r).iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite feature at row {r}, column {j}")));
        }
    }

    let sample = x.select(ndarray::Axis(0), rows);
    let solution = if n <= DENSE_GRAM_LIMIT {
        let sub = match gram {
            Some(g) => Array2::from_shape_fn((n, n), |(a, b)| g[[rows[a], rows[b]]]),
            None => gram_matrix(spec, sample.view())?,
        };
        solve(DenseRows::new(sub), &labels, settings)
    } else {
        solve(CachedRows::new(sample.view(), *spec), &labels, settings)
    };

    let mut support_rows = Vec::new();
    let support_vectors = solution
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(k, &a)| {
            support_rows.push(rows[k]);
            SupportVector {
                x: sample.row(k).to_vec(),
                label: labels[k],
                alpha: a,
            }
        })
        .collect();
    let model = TrainedSvm {
        kernel: *spec,
        support_vectors,
        bias: solution.bias,
        cost: settings.cost,
        dual_objective: solution.objective,
        converged: solution.converged,
        iterations: solution.iterations,
        dimension: x.ncols(),
    };
    Ok((model, support_rows))
}

// ---------------------------------------------------------------------------
// Kernel row providers
// ---------------------------------------------------------------------------

trait KernelRows {
    fn size(&self) -> usize;
    fn diag(&self, i: usize) -> f64;
    fn row(&mut self, i: usize) -> Rc<[f64]>;
}

struct DenseRows {
    rows: Vec<Rc<[f64]>>,
}

impl DenseRows {
    fn new(gram: Array2<f64>) -> Self {
        DenseRows {
            rows: gram.rows().into_iter().map(|r| Rc::from(r.to_vec())).collect(),
        }
    }
}

impl KernelRows for DenseRows {
    fn size(&self) -> usize {
        self.rows.len()
    }

    fn diag(&self, i: usize) -> f64 {
        self.rows[i][i]
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        Rc::clone(&self.rows[i])
    }
}

struct CachedRows {
    points: Vec<Vec<f64>>,
    spec: KernelSpec,
    diag: Vec<f64>,
    cache: LruCache<usize, Rc<[f64]>>,
}

impl CachedRows {
    fn new(x: ArrayView2<f64>, spec: KernelSpec) -> Self {
        let points: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let diag = points.iter().map(|p| spec.eval_unchecked(p, p)).collect();
        let capacity = (CACHE_BYTES / (8 * points.len().max(1))).max(2);
        CachedRows {
            points,
            spec,
            diag,
            cache: LruCache::new(NonZeroUsize::new(capacity).unwrap()),
        }
    }
}

impl KernelRows for CachedRows {
    fn size(&self) -> usize {
        self.points.len()
    }

    fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        if let Some(r) = self.cache.get(&i) {
            return Rc::clone(r);
        }
        let xi = &self.points[i];
        let r: Rc<[f64]> = self.points.iter().map(|xj| self.spec.eval_unchecked(xi, xj)).collect();
        self.cache.put(i, Rc::clone(&r));
        r
    }
}

// ---------------------------------------------------------------------------
// SMO
// ---------------------------------------------------------------------------

struct DualSolution {
    alpha: Vec<f64>,
    bias: f64,
    objective: f64,
    converged: bool,
    iterations: usize,
}

fn solve<K: KernelRows>(mut kernel: K, labels: &[Label], settings: &SolverSettings) -> DualSolution {
    let n = kernel.size();
    let c = settings.cost;
    let eps = settings.kkt_tolerance;
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|i| kernel.diag(i)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(settings.seed));

    let mut iterations = 0;
    let mut converged = false;
    let mut stalled_passes = 0;
    let mut pass_max_change: f64 = 0.0;

    loop {
        let Some((i, j)) = select_pair(&mut kernel, &order, &alpha, &grad, &y, &diag, c, eps) else {
            converged = true;
            break;
        };
        if iterations >= settings.max_iterations {
            break;
        }
        iterations += 1;

        let row_i = kernel.row(i);
        let row_j = kernel.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (diag[i] + diag[j] - 2.0 * row_i[j]).max(TAU);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        let (d_i, d_j) = (ai - old_i, aj - old_j);

        #[cfg(debug_assertions)]
        {
            let q_ij = y[i] * y[j] * row_i[j];
            let change = grad[i] * d_i
                + grad[j] * d_j
                + 0.5 * (diag[i] * d_i * d_i + diag[j] * d_j * d_j + 2.0 * q_ij * d_i * d_j);
            let scale = 1.0 + grad[i].abs() * d_i.abs() + grad[j].abs() * d_j.abs();
            debug_assert!(change <= 1e-9 * scale, "pair update decreased the dual objective by {change}");
        }

        alpha[i] = ai;
        alpha[j] = aj;
        let (si, sj) = (y[i] * d_i, y[j] * d_j);
        for t in 0..n {
            grad[t] += y[t] * (si * row_i[t] + sj * row_j[t]);
        }

        pass_max_change = pass_max_change.max(d_i.abs()).max(d_j.abs());
        if iterations % n == 0 {
            if pass_max_change < PROGRESS_EPS {
                stalled_passes += 1;
                if stalled_passes >= settings.max_passes {
                    break;
                }
            } else {
                stalled_passes = 0;
            }
            pass_max_change = 0.0;
        }
    }

    let objective = -0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    DualSolution {
        bias: bias(&alpha, &grad, &y, c),
        alpha,
        objective,
        converged,
        iterations,
    }
}

#[allow(clippy::too_many_arguments)]
fn select_pair<K: KernelRows>(
    kernel: &mut K,
    order: &[usize],
    alpha: &[f64],
    grad: &[f64],
    y: &[f64],
    diag: &[f64],
    c: f64,
    eps: f64,
) -> Option<(usize, usize)> {
    // i: maximal violator in I_up
    let mut g_max = f64::NEG_INFINITY;
    let mut best_i = None;
    for &t in order {
        let candidate = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
        if candidate {
            let v = -y[t] * grad[t];
            if v >= g_max {
                g_max = v;
                best_i = Some(t);
            }
        }
    }
    let i = best_i?;
    let row_i = kernel.row(i);

    // j: best second-order gain in I_low
    let mut g_max2 = f64::NEG_INFINITY;
    let mut best_j = None;
    let mut best_gain = f64::INFINITY;
    for &t in order {
        let candidate = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
        if !candidate {
            continue;
        }
        let v = y[t] * grad[t];
        g_max2 = g_max2.max(v);
        let grad_diff = g_max + v;
        if grad_diff > 0.0 {
            let quad = (diag[i] + diag[t] - 2.0 * row_i[t]).max(TAU);
            let gain = -(grad_diff * grad_diff) / quad;
            if gain <= best_gain {
                best_gain = gain;
                best_j = Some(t);
            }
        }
    }
    if g_max + g_max2 < eps {
        return None;
    }
    best_j.map(|j| (i, j))
}

/// b = mean over free α of `y_i − Σ_j α_j y_j K_ij`; with no free α the
/// midpoint of the feasible interval.
fn bias(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        0.5 * (upper + lower)
    };
    -rho
}
