//! Datasets, synthetic generators, CSV ingestion, scaling and splitting.
//!
//! Three synthetic problems are provided:
//!
//! * **sim1**: class A ~ N(0, 4I), class B ~ N(4·1, I).
//! * **sim2**: as sim1 with class B ~ N(2·1, I).
//! * **sim3**: points uniform on the cube `[-1, 1]^p`; class A is the set of
//!   points inside a centred ball whose radius is chosen so that the ball
//!   covers a fraction `ratio` of the cube.
//!
//! Class A (the `ratio` fraction) is always labelled −1 and class B +1.

use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Binary class label. Serialized as `-1` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Negative => -1.0,
            Label::Positive => 1.0,
        }
    }

    /// Sign of a real score; exact zero maps to [`Label::Positive`].
    pub fn from_score(v: f64) -> Self {
        if v >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn from_i64(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(Error::input(format!("labels must be -1 or +1, got {other}"))),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.sign() as i8)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Label::from_i64(i64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Discrete,
}

/// Train-derived affine transform applied to one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub mean: f64,
    /// Population standard deviation; zero means the column was only centred.
    pub std_dev: f64,
}

/// A labelled observation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<Label>,
    feature_kinds: Vec<FeatureKind>,
    scaling: Option<Vec<Option<ColumnScaling>>>,
}

impl Dataset {
    /// Builds a dataset with all columns continuous.
    pub fn new(features: Array2<f64>, labels: Vec<Label>) -> Result<Self> {
        let p = features.ncols();
        Self::with_kinds(features, labels, vec![FeatureKind::Continuous; p])
    }

    pub fn with_kinds(features: Array2<f64>, labels: Vec<Label>, feature_kinds: Vec<FeatureKind>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::input("dataset must contain at least one row"));
        }
        if features.ncols() == 0 {
            return Err(Error::input("dataset must contain at least one feature"));
        }
        if labels.len() != features.nrows() {
            return Err(Error::input(format!(
                "{} labels for {} rows",
                labels.len(),
                features.nrows()
            )));
        }
        if feature_kinds.len() != features.ncols() {
            return Err(Error::input("one feature kind is required per column"));
        }
        if let Some((idx, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let p = features.ncols();
            return Err(Error::input(format!(
                "non-finite feature at row {}, column {}",
                idx / p,
                idx % p
            )));
        }
        Ok(Dataset {
            features,
            labels,
            feature_kinds,
            scaling: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    /// Per-column transform applied by [`standardize`], if any.
    pub fn scaling(&self) -> Option<&[Option<ColumnScaling>]> {
        self.scaling.as_deref()
    }

    /// `(negatives, positives)`
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == Label::Positive).count();
        (self.labels.len() - pos, pos)
    }

    pub fn has_both_classes(&self) -> bool {
        let (neg, pos) = self.class_counts();
        neg > 0 && pos > 0
    }

    /// Rows at `indices`, in that order; repeats are allowed.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::input("subset must select at least one row"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_rows()) {
            return Err(Error::input(format!("row index {bad} out of range")));
        }
        Ok(Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_kinds: self.feature_kinds.clone(),
            scaling: self.scaling.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    Sim1,
    Sim2,
    Sim3,
}

impl SimKind {
    pub fn token(self) -> &'static str {
        match self {
            SimKind::Sim1 => "sim1",
            SimKind::Sim2 => "sim2",
            SimKind::Sim3 => "sim3",
        }
    }
}

/// Configuration of a synthetic dataset draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub which: SimKind,
    pub n: usize,
    pub p: usize,
    /// Fraction of class A (label −1).
    pub ratio: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::input(format!("simulated datasets need n >= 4, got {}", self.n)));
        }
        if self.p < 1 {
            return Err(Error::input("simulated datasets need p >= 1"));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::input(format!("ratio must lie in (0, 1), got {}", self.ratio)));
        }
        Ok(())
    }

    /// Same distribution, different size and seed. Used to draw Monte Carlo
    /// evaluation points.
    pub fn resized(&self, n: usize, seed: u64) -> Self {
        SimConfig { n, seed, ..*self }
    }

    pub fn generate(&self) -> Result<Dataset> {
        match self.which {
            SimKind::Sim1 | SimKind::Sim2 => gen_gaussian_pair(self),
            SimKind::Sim3 => gen_circle(self),
        }
    }
}

/// Two Gaussian classes with scaled-identity covariances.
pub fn gen_gaussian_pair(config: &SimConfig) -> Result<Dataset> {
    config.validate()?;
    let mean_b = match config.which {
        SimKind::Sim1 => 4.0,
        SimKind::Sim2 => 2.0,
        SimKind::Sim3 => return Err(Error::input("sim3 is not a Gaussian-pair dataset")),
    };
    let (n, p) = (config.n, config.p);
    let n_a = (config.ratio * n as f64).round() as usize;
    if n_a == 0 || n_a == n {
        return Err(Error::input(format!(
            "ratio {} with n = {} leaves a class with zero rows",
            config.ratio, n
        )));
    }
    let mut rng = rng::seeded(config.seed);
    let mut rows = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    // class A: mean 0, sd 2 (covariance 4I)
    for _ in 0..n_a {
        for _ in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            rows.push(2.0 * z);
        }
        labels.push(Label::Negative);
    }
    // class B: mean `mean_b`, sd 1
    for _ in n_a..n {
        for _ in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            rows.push(mean_b + z);
        }
        labels.push(Label::Positive);
    }
    let ordered = Array2::from_shape_vec((n, p), rows).expect("n*p values generated");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let features = ordered.select(Axis(0), &order);
    let labels = order.iter().map(|&i| labels[i]).collect();
    Dataset::new(features, labels)
}

/// Points uniform on `[-1, 1]^p`, labelled −1 inside the ball of radius
/// [`circle_radius`] and +1 outside.
pub fn gen_circle(config: &SimConfig) -> Result<Dataset> {
    config.validate()?;
    if config.which != SimKind::Sim3 {
        return Err(Error::input("gen_circle requires the sim3 configuration"));
    }
    let radius = circle_radius(config.p, config.ratio)?;
    let (n, p) = (config.n, config.p);
    let mut rng = rng::seeded(config.seed);
    let values: Vec<f64> = (0..n * p).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let features = Array2::from_shape_vec((n, p), values).expect("n*p values generated");
    let labels = features.rows().into_iter().map(|r| circle_label(r, radius)).collect();
    Dataset::new(features, labels)
}

pub fn circle_label(x: ArrayView1<f64>, radius: f64) -> Label {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    if sq <= radius * radius {
        Label::Negative
    } else {
        Label::Positive
    }
}

/// Radius `r` such that `{x in [-1,1]^p : |x| <= r}` has volume fraction
/// `ratio` of the cube.
///
/// When the ball fits in the cube this is the closed form
/// `(ratio * 2^p * Γ(p/2 + 1))^(1/p) / sqrt(pi)`. Otherwise the ball is
/// clipped by the cube faces and `r` is found by inverting the distribution
/// of `|U|^2` for `U` uniform on the cube (see [`cube_norm_sq_cdf`]).
pub fn circle_radius(p: usize, ratio: f64) -> Result<f64> {
    if p == 0 {
        return Err(Error::input("dimension must be at least 1"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::input(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    let pf = p as f64;
    let ln_r = (ratio.ln() + pf * std::f64::consts::LN_2 + libm::lgamma(pf / 2.0 + 1.0)) / pf
        - 0.5 * std::f64::consts::PI.ln();
    let closed = ln_r.exp();
    if closed <= 1.0 {
        return Ok(closed);
    }
    let cdf = cube_norm_sq_cdf(p, CDF_GRID);
    let target = ratio;
    // F is non-decreasing in s = r^2 on [0, p]
    let (mut lo, mut hi) = (1.0f64, pf);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf.eval(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).sqrt())
}

const CDF_GRID: usize = 8000;
const QUAD_INTERVALS: usize = 128;

/// Tabulated CDF of `S = sum u_k^2` for `u_k` i.i.d. uniform on [-1, 1].
#[derive(Debug, Clone)]
pub struct NormSqCdf {
    step: f64,
    values: Vec<f64>,
}

impl NormSqCdf {
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let pos = s / self.step;
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            return 1.0;
        }
        let t = pos - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }
}

/// Builds the CDF of `|U|^2` on a grid over `[0, p]` with the recursion
/// `F_k(s) = ∫_0^{min(1, √s)} F_{k-1}(s - x^2) dx`, `F_1(s) = min(1, √s)`,
/// integrated by composite Simpson.
pub fn cube_norm_sq_cdf(p: usize, grid: usize) -> NormSqCdf {
    let step = p as f64 / grid as f64;
    let grid_s = |i: usize| i as f64 * step;
    let mut prev = NormSqCdf {
        step,
        values: (0..=grid).map(|i| grid_s(i).sqrt().min(1.0)).collect(),
    };
    for _ in 1..p {
        let values = (0..=grid)
            .map(|i| {
                let s = grid_s(i);
                let upper = s.sqrt().min(1.0);
                if upper == 0.0 {
                    return 0.0;
                }
                let h = upper / QUAD_INTERVALS as f64;
                let mut acc = prev.eval(s) + prev.eval(s - upper * upper);
                for k in 1..QUAD_INTERVALS {
                    let x = k as f64 * h;
                    let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * prev.eval(s - x * x);
                }
                (acc * h / 3.0).min(1.0)
            })
            .collect();
        prev = NormSqCdf { step, values };
    }
    prev
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Column selector by header name or 0-based index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl ColumnRef {
    /// Numeric strings select by index, anything else by name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.to_string()),
        }
    }

    fn resolve(&self, headers: &[String]) -> Option<usize> {
        match self {
            ColumnRef::Index(i) if *i < headers.len() => Some(*i),
            ColumnRef::Index(_) => None,
            ColumnRef::Name(n) => headers.iter().position(|h| h == n),
        }
    }
}

/// How to read a labelled CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub label_column: ColumnRef,
    pub positive_label: String,
    #[serde(default)]
    pub discrete_columns: Vec<ColumnRef>,
}

/// Optional JSON sidecar next to a CSV file. Any field it sets overrides
/// the command-line value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSidecar {
    pub label_column: Option<ColumnRef>,
    pub positive_label: Option<String>,
    #[serde(default)]
    pub discrete_columns: Vec<ColumnRef>,
}

impl CsvSidecar {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }

    pub fn apply(self, mut options: CsvOptions) -> CsvOptions {
        if let Some(c) = self.label_column {
            options.label_column = c;
        }
        if let Some(p) = self.positive_label {
            options.positive_label = p;
        }
        options.discrete_columns.extend(self.discrete_columns);
        options
    }
}

const MISSING_MARKERS: [&str; 4] = ["", "?", "NA", "NaN"];

/// Reads a comma-separated file with a header row.
///
/// The label column must hold exactly two distinct values; `positive_label`
/// maps to +1 and the other value to −1. All remaining columns must be
/// numeric. Missing cells are an error.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let load_err = |row: usize, column: &str, message: String| Error::Load {
        path: PathBuf::from(path),
        row,
        column: column.to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = options
        .label_column
        .resolve(&headers)
        .ok_or_else(|| load_err(0, &format!("{:?}", options.label_column), "label column not found".into()))?;
    let mut discrete = HashSet::new();
    for c in &options.discrete_columns {
        let idx = c
            .resolve(&headers)
            .ok_or_else(|| load_err(0, &format!("{c:?}"), "discrete column not found".into()))?;
        discrete.insert(idx);
    }
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(load_err(0, &headers[label_idx], "no feature columns besides the label".into()));
    }

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut distinct: Vec<String> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record?;
        if record.len() != headers.len() {
            return Err(load_err(
                row,
                "*",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let label = record[label_idx].trim().to_string();
        if MISSING_MARKERS.contains(&label.as_str()) {
            return Err(load_err(row, &headers[label_idx], "missing label".into()));
        }
        if !distinct.contains(&label) {
            distinct.push(label.clone());
            if distinct.len() > 2 {
                return Err(load_err(
                    row,
                    &headers[label_idx],
                    format!("more than two label values: {distinct:?}"),
                ));
            }
        }
        raw_labels.push(label);
        for &c in &feature_cols {
            let cell = record[c].trim();
            if MISSING_MARKERS.contains(&cell) {
                return Err(load_err(row, &headers[c], "missing value".into()));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| load_err(row, &headers[c], format!("cannot parse '{cell}' as a number")))?;
            if !v.is_finite() {
                return Err(load_err(row, &headers[c], format!("non-finite value '{cell}'")));
            }
            values.push(v);
        }
    }
    if raw_labels.is_empty() {
        return Err(load_err(1, "*", "file has no data rows".into()));
    }
    if distinct.len() != 2 {
        return Err(load_err(
            0,
            &headers[label_idx],
            format!("expected exactly two label values, found {distinct:?}"),
        ));
    }
    if !distinct.contains(&options.positive_label) {
        return Err(load_err(
            0,
            &headers[label_idx],
            format!(
                "positive label '{}' not among label values {distinct:?}",
                options.positive_label
            ),
        ));
    }
    let labels = raw_labels
        .iter()
        .map(|l| {
            if *l == options.positive_label {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();
    let kinds = feature_cols
        .iter()
        .map(|c| {
            if discrete.contains(c) {
                FeatureKind::Discrete
            } else {
                FeatureKind::Continuous
            }
        })
        .collect();
    let features = Array2::from_shape_vec((raw_labels.len(), feature_cols.len()), values)
        .expect("one value per feature column per row");
    Dataset::with_kinds(features, labels, kinds)
}

// ---------------------------------------------------------------------------
// Scaling and splitting
// ---------------------------------------------------------------------------

/// Scales continuous columns to zero mean and unit population variance
/// using statistics of `train` only, and applies the same transform to every
/// dataset in `others`. Zero-variance columns are centred only; discrete
/// columns pass through.
pub fn standardize(train: &Dataset, others: &[Dataset]) -> Result<(Dataset, Vec<Dataset>)> {
    let p = train.n_features();
    if let Some(o) = others.iter().find(|o| o.n_features() != p) {
        return Err(Error::input(format!(
            "cannot apply a {p}-column transform to a {}-column dataset",
            o.n_features()
        )));
    }
    let n = train.n_rows() as f64;
    let scaling: Vec<Option<ColumnScaling>> = (0..p)
        .map(|j| {
            if train.feature_kinds[j] == FeatureKind::Discrete {
                return None;
            }
            let col = train.features.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std_dev = var.sqrt();
            // variance below round-off of the mean counts as constant
            let std_dev = if std_dev <= 1e-12 * mean.abs().max(1.0) { 0.0 } else { std_dev };
            Some(ColumnScaling { mean, std_dev })
        })
        .collect();
    let apply = |d: &Dataset| {
        let mut out = d.clone();
        for (j, s) in scaling.iter().enumerate() {
            if let Some(s) = s {
                out.features.column_mut(j).mapv_inplace(|v| {
                    let c = v - s.mean;
                    if s.std_dev > 0.0 {
                        c / s.std_dev
                    } else {
                        c
                    }
                });
            }
        }
        out.scaling = Some(scaling.clone());
        out
    };
    Ok((apply(train), others.iter().map(apply).collect()))
}

/// Stratified split of `labels` into train and test index lists.
///
/// The train side receives `round(train_fraction * n)` rows, allotted to
/// each class by largest remainder so per-class counts stay within one row
/// of proportional.
pub fn stratified_indices(labels: &[Label], train_fraction: f64, rng: &mut rng::Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::input(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let n = labels.len();
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        by_class[(*l == Label::Positive) as usize].push(i);
    }
    if by_class.iter().any(|c| c.is_empty()) {
        return Err(Error::input("stratified split requires both classes"));
    }
    let total_train = (train_fraction * n as f64).round() as usize;
    let exact: Vec<f64> = by_class.iter().map(|c| train_fraction * c.len() as f64).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = total_train.saturating_sub(take.iter().sum());
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(4) {
        if remaining == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            remaining -= 1;
        }
    }
    let mut train = Vec::with_capacity(total_train);
    let mut test = Vec::with_capacity(n - total_train);
    for (c, idx) in by_class.iter_mut().enumerate() {
        idx.shuffle(rng);
        train.extend_from_slice(&idx[..take[c]]);
        test.extend_from_slice(&idx[take[c]..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::input(format!(
            "split of {n} rows at fraction {train_fraction} leaves one side empty"
        )));
    }
    train.shuffle(rng);
    test.shuffle(rng);
    Ok((train, test))
}

/// Stratified holdout split, deterministic per seed.
pub fn holdout_split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = rng::seeded(seed);
    let (train, test) = stratified_indices(data.labels(), train_fraction, &mut rng)?;
    Ok((data.subset(&train)?, data.subset(&test)?))
}
