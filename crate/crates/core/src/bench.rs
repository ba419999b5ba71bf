//! Experiment harness: repeated holdout comparisons, γ sweeps, win
//! proportions and the accuracy/agreement study.
//!
//! Reports are deterministic functions of the plan. Wall times are only
//! recorded when [`ExperimentPlan::record_timing`] is set, so two runs of
//! the same plan without timing produce byte-identical output.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{holdout_split, load_csv, standardize, CsvOptions, Dataset, Label, SimConfig};
use crate::ensemble::{fit_bagged_svm, fit_random_machines, EnsembleConfig};
use crate::error::{Error, Result};
use crate::kernel::{KernelKind, KernelSpec};
use crate::metrics;
use crate::rng::{self, tag};
use crate::solver::{train_svm, SolverSettings};

pub const DEFAULT_SEED: u64 = 20190407;
pub const DEFAULT_REPETITIONS: usize = 30;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;
pub const DEFAULT_K_PER_DIM: usize = 1000;

pub const TIE_RULE: &str = "win proportions count strict wins only; ties add to the denominator";
pub const RATIO_MEANING: &str = "ratio is the fraction of class A, labelled -1";
pub const AGREEMENT_NOTE: &str =
    "agreement is the mean pairwise agreement of base models on k_per_dim * p fresh generator points, transformed like the test split";

/// A classifier under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    RandomMachines,
    Bagged(KernelKind),
    Single(KernelKind),
}

impl Method {
    pub fn is_ensemble(self) -> bool {
        !matches!(self, Method::Single(_))
    }

    /// Every method: RM, then bagged and single SVMs for each kernel.
    pub fn all() -> Vec<Method> {
        let mut v = vec![Method::RandomMachines];
        v.extend(KernelKind::ALL.iter().map(|&k| Method::Bagged(k)));
        v.extend(KernelKind::ALL.iter().map(|&k| Method::Single(k)));
        v
    }

    /// Parses a comma-separated list such as `rm,bsvm:gaussian,svm:linear`.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = Vec::new();
        for token in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let m: Method = token.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::input("no methods given"));
        }
        Ok(out)
    }

    fn seed_index(self) -> u64 {
        match self {
            Method::RandomMachines => 0,
            Method::Bagged(k) => 1 + kind_index(k),
            Method::Single(k) => 101 + kind_index(k),
        }
    }
}

fn kind_index(k: KernelKind) -> u64 {
    KernelKind::ALL.iter().position(|&x| x == k).expect("known kind") as u64
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::RandomMachines => write!(f, "rm"),
            Method::Bagged(k) => write!(f, "bsvm:{}", k.token()),
            Method::Single(k) => write!(f, "svm:{}", k.token()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "rm" {
            return Ok(Method::RandomMachines);
        }
        let (prefix, kernel) = s
            .split_once(':')
            .ok_or_else(|| Error::input(format!("unknown method '{s}'")))?;
        let kind = KernelKind::from_token(kernel).ok_or_else(|| Error::input(format!("unknown kernel in method '{s}'")))?;
        match prefix {
            "bsvm" => Ok(Method::Bagged(kind)),
            "svm" => Ok(Method::Single(kind)),
            _ => Err(Error::input(format!("unknown method '{s}'"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    Generator(SimConfig),
    Csv { path: PathBuf, options: CsvOptions },
}

impl DataSource {
    fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Generator(cfg) => cfg.generate(),
            DataSource::Csv { path, options } => load_csv(path, options),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub data: DataSource,
    pub methods: Vec<Method>,
    pub repetitions: usize,
    pub train_fraction: f64,
    /// Kernels, bootstraps and cost shared by every method. Bagged and
    /// single SVMs use the kernel of the matching kind from this list.
    pub ensemble: EnsembleConfig,
    pub seed: u64,
    /// Monte Carlo points per feature for the agreement column; `None`
    /// skips agreement.
    pub agreement_k_per_dim: Option<usize>,
    /// Scale continuous columns with training-split statistics. Defaults
    /// to on for CSV data and off for generated data.
    pub standardize: bool,
    pub record_timing: bool,
}

impl ExperimentPlan {
    pub fn new(data: DataSource, methods: Vec<Method>) -> Self {
        let standardize = matches!(data, DataSource::Csv { .. });
        ExperimentPlan {
            data,
            methods,
            repetitions: DEFAULT_REPETITIONS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            ensemble: EnsembleConfig::default(),
            seed: DEFAULT_SEED,
            agreement_k_per_dim: None,
            standardize,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::input("repetitions must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::input("at least one method is required"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::input(format!("train fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        if self.agreement_k_per_dim == Some(0) {
            return Err(Error::input("agreement needs at least one point per dimension"));
        }
        if let DataSource::Generator(cfg) = &self.data {
            cfg.validate()?;
        }
        self.ensemble.validate()?;
        for m in &self.methods {
            if let Method::Bagged(k) | Method::Single(k) = m {
                self.kernel_for(*k)?;
            }
        }
        Ok(())
    }

    fn kernel_for(&self, kind: KernelKind) -> Result<KernelSpec> {
        self.ensemble
            .kernels
            .iter()
            .find(|k| k.kind() == kind)
            .copied()
            .ok_or_else(|| Error::input(format!("no {} kernel configured", kind.token())))
    }

    /// Seed used for repetition `r`; recorded in each report row.
    pub fn repetition_seed(&self, r: usize) -> u64 {
        rng::derive_seed(self.seed, tag::REPETITION, r as u64)
    }

    fn gamma(&self) -> Option<f64> {
        let first = self.ensemble.kernels.first()?.gamma();
        self.ensemble.kernels.iter().all(|k| k.gamma() == first).then_some(first)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub repetition: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub mcc: f64,
    pub umcc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single repetition.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub accuracy: MeanSd,
    pub mcc: MeanSd,
    pub umcc: MeanSd,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub ratio_meaning: String,
    pub tie_rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement_note: Option<String>,
    pub plan: ExperimentPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: Provenance,
    /// Sorted by method, then repetition.
    pub rows: Vec<ReportRow>,
    pub summary: Vec<MethodSummary>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn methods(&self) -> Vec<Method> {
        self.summary.iter().map(|s| s.method).collect()
    }
}

struct Split {
    train: Dataset,
    test: Dataset,
    monte_carlo: Option<Dataset>,
}

fn prepare_split(plan: &ExperimentPlan, data: &Dataset, rep_seed: u64) -> Result<Split> {
    let (train, test) = holdout_split(data, plan.train_fraction, rng::derive_seed(rep_seed, tag::DATASET, 0))?;
    let mc = match (plan.agreement_k_per_dim, &plan.data) {
        (Some(k), DataSource::Generator(cfg)) => {
            let seed = rng::derive_seed(rep_seed, tag::MONTE_CARLO, 0);
            Some(cfg.resized(k * cfg.p, seed).generate()?)
        }
        (Some(_), DataSource::Csv { .. }) => {
            return Err(Error::input(
                "agreement needs Monte Carlo points; use a generator-backed dataset (--dataset sim1|sim2|sim3)",
            ))
        }
        (None, _) => None,
    };
    let mut others = vec![test];
    others.extend(mc);
    let (train, mut others) = if plan.standardize {
        standardize(&train, &others)?
    } else {
        (train, others)
    };
    let monte_carlo = if others.len() > 1 { others.pop() } else { None };
    let test = others.pop().expect("test split");
    Ok(Split { train, test, monte_carlo })
}

struct Outcome {
    predicted: Vec<Label>,
    agreement: Option<f64>,
    fit_seconds: f64,
    predict_seconds: f64,
}

fn evaluate_method(plan: &ExperimentPlan, method: Method, split: &Split, seed: u64) -> Result<Outcome> {
    let cfg = &plan.ensemble;
    let started = Instant::now();
    let solver = SolverSettings { cost: cfg.cost, ..cfg.solver };
    let x_test = split.test.features();
    let (predicted, base_votes, fit_seconds, predict_started) = match method {
        Method::RandomMachines => {
            let model = fit_random_machines(&split.train, &EnsembleConfig { seed, ..cfg.clone() })?;
            let fit = started.elapsed().as_secs_f64();
            let t = Instant::now();
            let predicted = model.predict_batch(x_test)?;
            let votes = match &split.monte_carlo {
                Some(mc) => Some(model.base_predictions(mc.features())?),
                None => None,
            };
            (predicted, votes, fit, t)
        }
        Method::Bagged(kind) => {
            let model = fit_bagged_svm(&split.train, &plan.kernel_for(kind)?, cfg.bootstraps, cfg.cost, &solver, seed)?;
            let fit = started.elapsed().as_secs_f64();
            let t = Instant::now();
            let predicted = model.predict_batch(x_test)?;
            let votes = match &split.monte_carlo {
                Some(mc) => Some(model.base_predictions(mc.features())?),
                None => None,
            };
            (predicted, votes, fit, t)
        }
        Method::Single(kind) => {
            let model = train_svm(
                split.train.features(),
                split.train.labels(),
                &plan.kernel_for(kind)?,
                &SolverSettings { seed, ..solver },
            )?;
            let fit = started.elapsed().as_secs_f64();
            let t = Instant::now();
            (model.predict_batch(x_test)?, None, fit, t)
        }
    };
    let agreement = match base_votes {
        Some(v) if v.len() >= 2 => Some(metrics::mean_pairwise_agreement(&v)?),
        Some(_) => Some(1.0),
        None => None,
    };
    Ok(Outcome {
        predicted,
        agreement,
        fit_seconds,
        predict_seconds: predict_started.elapsed().as_secs_f64(),
    })
}

/// Repeated stratified holdout over every method in the plan.
///
/// Generator-backed data is drawn once; each repetition redraws the split
/// from its own seed, standardizes on the training part, fits each method
/// and scores it on the test part.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<EvalReport> {
    plan.validate()?;
    let data = plan.data.load()?;
    let mut rows = Vec::with_capacity(plan.methods.len() * plan.repetitions);
    for r in 0..plan.repetitions {
        let rep_seed = plan.repetition_seed(r);
        let split = prepare_split(plan, &data, rep_seed)?;
        for &method in &plan.methods {
            let seed = rng::derive_seed(rep_seed, tag::METHOD, method.seed_index());
            let out = evaluate_method(plan, method, &split, seed).map_err(|e| Error::Context {
                method: method.to_string(),
                repetition: r,
                source: Box::new(e),
            })?;
            let c = metrics::confusion(&out.predicted, split.test.labels())?;
            let mcc = metrics::mcc(&c)?;
            rows.push(ReportRow {
                method,
                repetition: r,
                seed,
                accuracy: metrics::accuracy(&c)?,
                mcc,
                umcc: metrics::umcc(mcc),
                agreement: out.agreement,
                fit_seconds: plan.record_timing.then_some(out.fit_seconds),
                predict_seconds: plan.record_timing.then_some(out.predict_seconds),
            });
        }
    }
    rows.sort_by_key(|row| (row.method, row.repetition));

    let mut warnings = Vec::new();
    if plan.agreement_k_per_dim.is_some() && plan.ensemble.bootstraps < 2 {
        warnings.push("agreement is undefined for a single base model; reported as 1".to_string());
    }
    let mut methods = plan.methods.clone();
    methods.sort();
    let summary = methods
        .iter()
        .map(|&m| {
            let mine: Vec<&ReportRow> = rows.iter().filter(|r| r.method == m).collect();
            let col = |f: fn(&ReportRow) -> f64| MeanSd::of(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            let agr: Vec<f64> = mine.iter().filter_map(|r| r.agreement).collect();
            MethodSummary {
                method: m,
                accuracy: col(|r| r.accuracy),
                mcc: col(|r| r.mcc),
                umcc: col(|r| r.umcc),
                agreement: (!agr.is_empty()).then(|| MeanSd::of(&agr)),
            }
        })
        .collect();

    Ok(EvalReport {
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: plan.seed,
            gamma: plan.gamma(),
            ratio_meaning: RATIO_MEANING.into(),
            tie_rule: TIE_RULE.into(),
            agreement_note: plan.agreement_k_per_dim.map(|_| AGREEMENT_NOTE.to_string()),
            plan: plan.clone(),
        },
        rows,
        summary,
        warnings,
    })
}

/// `2^-3, 2^-2, …, 2^3`.
pub fn default_gamma_grid() -> Vec<f64> {
    (-3..=3).map(|e| 2f64.powi(e)).collect()
}

/// One experiment per `gamma`, applied to every kernel in the plan.
pub fn gamma_sweep(plan: &ExperimentPlan, gammas: &[f64]) -> Result<Vec<EvalReport>> {
    if gammas.is_empty() {
        return Err(Error::input("gamma grid is empty"));
    }
    gammas
        .iter()
        .map(|&g| {
            let mut p = plan.clone();
            p.ensemble.kernels = plan
                .ensemble
                .kernels
                .iter()
                .map(|k| k.with_gamma(g))
                .collect::<Result<_>>()?;
            run_experiment(&p)
        })
        .collect()
}

/// Test accuracy and base-model agreement for ensemble methods.
pub fn agreement_study(plan: &ExperimentPlan, k_per_dim: usize) -> Result<EvalReport> {
    if let Some(m) = plan.methods.iter().find(|m| !m.is_ensemble()) {
        return Err(Error::input(format!("agreement is only defined for ensembles, not {m}")));
    }
    if matches!(plan.data, DataSource::Csv { .. }) {
        return Err(Error::input(
            "agreement needs Monte Carlo points; use a generator-backed dataset (--dataset sim1|sim2|sim3)",
        ));
    }
    let mut p = plan.clone();
    p.agreement_k_per_dim = Some(k_per_dim);
    run_experiment(&p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Mcc,
    Umcc,
}

impl Metric {
    fn of(self, row: &ReportRow) -> f64 {
        match self {
            Metric::Accuracy => row.accuracy,
            Metric::Mcc => row.mcc,
            Metric::Umcc => row.umcc,
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "acc" | "accuracy" => Ok(Metric::Accuracy),
            "mcc" => Ok(Metric::Mcc),
            "umcc" => Ok(Metric::Umcc),
            other => Err(Error::input(format!("unknown metric '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinMatrix {
    pub metric: Metric,
    pub methods: Vec<Method>,
    /// `values[i][j]`: fraction of cells where method `i` strictly beats `j`.
    pub values: Vec<Vec<f64>>,
    pub cells: usize,
    pub tie_rule: String,
}

/// Pairwise win proportions over every (report, repetition) cell.
pub fn win_proportions(reports: &[EvalReport], metric: Metric) -> Result<WinMatrix> {
    let first = reports.first().ok_or_else(|| Error::input("no reports given"))?;
    let methods = first.methods();
    if methods.len() < 2 {
        return Err(Error::input("win proportions need at least two methods"));
    }
    // scores[cell][method]
    let mut scores: Vec<Vec<f64>> = Vec::new();
    for (d, report) in reports.iter().enumerate() {
        if report.methods() != methods {
            return Err(Error::input(format!("report {d} has a different method set")));
        }
        let reps: Vec<usize> = report.rows.iter().filter(|r| r.method == methods[0]).map(|r| r.repetition).collect();
        for &rep in &reps {
            let cell = methods
                .iter()
                .map(|&m| {
                    let hits: Vec<&ReportRow> = report.rows.iter().filter(|r| r.method == m && r.repetition == rep).collect();
                    match hits.as_slice() {
                        [row] => Ok(metric.of(row)),
                        _ => Err(Error::input(format!("report {d}: repetition {rep} misaligned for {m}"))),
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            scores.push(cell);
        }
        if report.rows.len() != reps.len() * methods.len() {
            return Err(Error::input(format!("report {d}: methods have different repetition sets")));
        }
    }
    if scores.is_empty() {
        return Err(Error::input("reports contain no repetitions"));
    }
    let k = methods.len();
    let mut values = vec![vec![0.0; k]; k];
    for (i, row) in values.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j {
                let wins = scores.iter().filter(|c| c[i] > c[j]).count();
                *v = wins as f64 / scores.len() as f64;
            }
        }
    }
    Ok(WinMatrix {
        metric,
        methods,
        values,
        cells: scores.len(),
        tie_rule: TIE_RULE.into(),
    })
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::input(format!("unknown format '{other}'"))),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV table for one or more reports (a γ sweep emits several).
///
/// Provenance goes into `#` comment lines ahead of the header.
pub fn render_csv(reports: &[EvalReport]) -> Result<String> {
    let first = reports.first().ok_or_else(|| Error::input("no reports to render"))?;
    let prov = &first.provenance;
    let mut out = String::new();
    out.push_str(&format!("# tool: {} {}\n", prov.tool, prov.version));
    out.push_str(&format!("# seed: {}\n", prov.seed));
    out.push_str(&format!("# {}\n", prov.ratio_meaning));
    out.push_str(&format!("# {}\n", prov.tie_rule));
    if let Some(note) = &prov.agreement_note {
        out.push_str(&format!("# {note}\n"));
    }
    for r in reports {
        for w in &r.warnings {
            out.push_str(&format!("# warning: {w}\n"));
        }
    }
    out.push_str(&format!("# plan: {}\n", serde_json::to_string(&prov.plan)?));

    let timing = reports.iter().any(|r| r.rows.iter().any(|row| row.fit_seconds.is_some()));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["gamma", "method", "repetition", "seed", "accuracy", "mcc", "umcc", "agreement"];
    if timing {
        header.extend(["fit_seconds", "predict_seconds"]);
    }
    w.write_record(&header)?;
    for r in reports {
        let gamma = fmt_opt(r.provenance.gamma);
        for row in &r.rows {
            let mut rec = vec![
                gamma.clone(),
                row.method.to_string(),
                row.repetition.to_string(),
                row.seed.to_string(),
                row.accuracy.to_string(),
                row.mcc.to_string(),
                row.umcc.to_string(),
                fmt_opt(row.agreement),
            ];
            if timing {
                rec.push(fmt_opt(row.fit_seconds));
                rec.push(fmt_opt(row.predict_seconds));
            }
            w.write_record(&rec)?;
        }
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(out)
}

pub fn render_json(reports: &[EvalReport]) -> Result<String> {
    let mut s = match reports {
        [one] => serde_json::to_string_pretty(one)?,
        many => serde_json::to_string_pretty(many)?,
    };
    s.push('\n');
    Ok(s)
}

pub fn render(reports: &[EvalReport], format: Format) -> Result<String> {
    match format {
        Format::Csv => render_csv(reports),
        Format::Json => render_json(reports),
    }
}

pub fn render_wins(m: &WinMatrix, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(m)? + "\n"),
        Format::Csv => {
            let mut out = format!("# metric: {:?}\n# cells: {}\n# {}\n", m.metric, m.cells, m.tie_rule).to_lowercase();
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["method".to_string()];
            header.extend(m.methods.iter().map(|x| x.to_string()));
            w.write_record(&header)?;
            for (method, row) in m.methods.iter().zip(&m.values) {
                let mut rec = vec![method.to_string()];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
            let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
            Ok(out)
        }
    }
}

/// Reads reports written by [`render_json`]: a single object or an array.
pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(match value {
        serde_json::Value::Array(_) => serde_json::from_value(value)?,
        _ => vec![serde_json::from_value(value)?],
    })
}

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SimKind;

    fn tiny_plan(methods: Vec<Method>) -> ExperimentPlan {
        let mut plan = ExperimentPlan::new(
            DataSource::Generator(SimConfig {
                which: SimKind::Sim1,
                n: 40,
                p: 2,
                ratio: 0.5,
                seed: 3,
            }),
            methods,
        );
        plan.repetitions = 1;
        plan.ensemble.bootstraps = 3;
        plan
    }

    #[test]
    fn method_tokens_round_trip() {
        for m in Method::all() {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!(
            Method::parse_list("rm, bsvm:gaussian,svm:lin").unwrap(),
            vec![Method::RandomMachines, Method::Bagged(KernelKind::Gaussian), Method::Single(KernelKind::Linear)]
        );
        assert!("forest".parse::<Method>().is_err());
        assert!("bsvm:cubic".parse::<Method>().is_err());
        assert!(Method::parse_list(" , ").is_err());
    }

    #[test]
    fn one_repetition_one_method_gives_one_row() {
        let r = run_experiment(&tiny_plan(vec![Method::Single(KernelKind::Linear)])).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.summary.len(), 1);
        assert_eq!(r.summary[0].accuracy.sd, 0.0);
    }

    #[test]
    fn row_count_is_methods_times_reps() {
        let mut plan = tiny_plan(vec![Method::Single(KernelKind::Gaussian), Method::RandomMachines]);
        plan.repetitions = 3;
        let r = run_experiment(&plan).unwrap();
        assert_eq!(r.rows.len(), 6);
        // sorted by method then repetition
        assert_eq!(r.rows[0].method, Method::RandomMachines);
        assert_eq!(r.rows.iter().map(|x| x.repetition).collect::<Vec<_>>(), vec![0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn reports_are_reproducible() {
        let plan = tiny_plan(vec![Method::RandomMachines, Method::Bagged(KernelKind::Laplacian)]);
        let a = render_csv(&[run_experiment(&plan).unwrap()]).unwrap();
        let b = render_csv(&[run_experiment(&plan).unwrap()]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_plans_are_rejected() {
        let mut plan = tiny_plan(vec![Method::RandomMachines]);
        plan.repetitions = 0;
        assert!(matches!(run_experiment(&plan), Err(Error::Input(_))));
        let mut plan = tiny_plan(vec![Method::Bagged(KernelKind::Linear)]);
        plan.ensemble.kernels = vec![KernelSpec::gaussian(1.0).unwrap()];
        assert!(run_experiment(&plan).is_err());
        assert!(run_experiment(&tiny_plan(vec![])).is_err());
    }

    #[test]
    fn sweep_carries_gamma() {
        let plan = tiny_plan(vec![Method::Single(KernelKind::Gaussian)]);
        let reports = gamma_sweep(&plan, &[0.5, 2.0]).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].provenance.gamma, Some(0.5));
        assert_eq!(reports[1].provenance.gamma, Some(2.0));
        let base = run_experiment(&plan).unwrap();
        assert_eq!(gamma_sweep(&plan, &[1.0]).unwrap()[0], base);
        assert_eq!(default_gamma_grid().len(), 7);
        assert_eq!(default_gamma_grid()[0], 0.125);
    }

    #[test]
    fn agreement_with_one_bootstrap_is_flagged() {
        let mut plan = tiny_plan(vec![Method::Bagged(KernelKind::Gaussian)]);
        plan.ensemble.bootstraps = 1;
        let r = agreement_study(&plan, 20).unwrap();
        assert_eq!(r.rows[0].agreement, Some(1.0));
        assert_eq!(r.warnings.len(), 1);
        assert!(agreement_study(&tiny_plan(vec![Method::Single(KernelKind::Linear)]), 10).is_err());
    }

    fn fake_report(cells: &[(Method, usize, f64)]) -> EvalReport {
        let mut plan = tiny_plan(vec![]);
        let mut methods: Vec<Method> = cells.iter().map(|c| c.0).collect();
        methods.sort();
        methods.dedup();
        plan.methods = methods.clone();
        EvalReport {
            provenance: Provenance {
                tool: "t".into(),
                version: "0".into(),
                seed: 0,
                gamma: None,
                ratio_meaning: String::new(),
                tie_rule: String::new(),
                agreement_note: None,
                plan,
            },
            rows: cells
                .iter()
                .map(|&(method, repetition, accuracy)| ReportRow {
                    method,
                    repetition,
                    seed: 0,
                    accuracy,
                    mcc: 0.0,
                    umcc: 0.5,
                    agreement: None,
                    fit_seconds: None,
                    predict_seconds: None,
                })
                .collect(),
            summary: methods
                .iter()
                .map(|&method| MethodSummary {
                    method,
                    accuracy: MeanSd { mean: 0.0, sd: 0.0 },
                    mcc: MeanSd { mean: 0.0, sd: 0.0 },
                    umcc: MeanSd { mean: 0.0, sd: 0.0 },
                    agreement: None,
                })
                .collect(),
            warnings: vec![],
        }
    }

    const A: Method = Method::RandomMachines;
    const B: Method = Method::Bagged(KernelKind::Linear);

    #[test]
    fn strict_winner_and_ties() {
        let r = fake_report(&[(A, 0, 0.9), (B, 0, 0.8), (A, 1, 0.7), (B, 1, 0.6)]);
        let m = win_proportions(&[r], Metric::Accuracy).unwrap();
        assert_eq!(m.values, vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
        let same = fake_report(&[(A, 0, 0.5), (B, 0, 0.5)]);
        let m = win_proportions(&[same], Metric::Accuracy).unwrap();
        assert_eq!(m.values, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn misaligned_reports_are_rejected() {
        let r = fake_report(&[(A, 0, 0.9), (B, 0, 0.8), (A, 1, 0.7)]);
        assert!(win_proportions(&[r], Metric::Accuracy).is_err());
        let one = fake_report(&[(A, 0, 0.9)]);
        assert!(win_proportions(&[one], Metric::Accuracy).is_err());
    }

    #[test]
    fn wins_csv_has_matrix_shape() {
        let r = fake_report(&[(A, 0, 0.9), (B, 0, 0.8)]);
        let m = win_proportions(&[r], Metric::Accuracy).unwrap();
        let text = render_wins(&m, Format::Csv).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, vec!["method,rm,bsvm:linear", "rm,0,1", "bsvm:linear,0,0"]);
    }

    #[test]
    fn json_report_round_trips() {
        let r = run_experiment(&tiny_plan(vec![Method::Single(KernelKind::Polynomial)])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_atomic(&path, &render_json(&[r.clone()]).unwrap()).unwrap();
        assert_eq!(read_reports(&path).unwrap(), vec![r]);
    }
}
