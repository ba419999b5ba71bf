//! Kernel functions and Gram matrices.
//!
//! Four kernels are supported, each scaled by a positive `gamma`:
//!
//! | kind        | K(x, y)                 |
//! |-------------|-------------------------|
//! | linear      | γ (x·y)                 |
//! | polynomial  | (γ (x·y))^d             |
//! | gaussian    | exp(−γ ‖x−y‖²)          |
//! | laplacian   | exp(−γ ‖x−y‖)           |
//!
//! Norms are Euclidean. The polynomial kernel is homogeneous: there is no
//! additive constant, so with an even degree it cannot tell `x` from `−x`.
//! The SVM bias term still supplies a constant in the decision function.
//!
//! A [`KernelSpec`] has a compact text form used on the command line and in
//! report files: `linear:g=1`, `poly:g=1,d=2`, `gaussian:g=0.5`,
//! `laplacian:g=1`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Polynomial,
    Gaussian,
    Laplacian,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Linear,
        KernelKind::Polynomial,
        KernelKind::Gaussian,
        KernelKind::Laplacian,
    ];

    /// Name used in text tokens.
    pub fn token(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Polynomial => "poly",
            KernelKind::Gaussian => "gaussian",
            KernelKind::Laplacian => "laplacian",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "linear" | "lin" => Some(KernelKind::Linear),
            "poly" | "polynomial" | "pol" => Some(KernelKind::Polynomial),
            "gaussian" | "gau" | "rbf" => Some(KernelKind::Gaussian),
            "laplacian" | "lap" => Some(KernelKind::Laplacian),
            _ => None,
        }
    }
}

/// A kernel function together with its hyperparameters.
///
/// `degree` is only meaningful for the polynomial kernel; other kinds store 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    gamma: f64,
    degree: u32,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, gamma: f64, degree: u32) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::input(format!("kernel gamma must be positive and finite, got {gamma}")));
        }
        if degree == 0 {
            return Err(Error::input("polynomial degree must be at least 1"));
        }
        let degree = if kind == KernelKind::Polynomial { degree } else { 1 };
        Ok(KernelSpec { kind, gamma, degree })
    }

    pub fn linear(gamma: f64) -> Result<Self> {
        Self::new(KernelKind::Linear, gamma, 1)
    }

    pub fn polynomial(gamma: f64, degree: u32) -> Result<Self> {
        Self::new(KernelKind::Polynomial, gamma, degree)
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        Self::new(KernelKind::Gaussian, gamma, 1)
    }

    pub fn laplacian(gamma: f64) -> Result<Self> {
        Self::new(KernelKind::Laplacian, gamma, 1)
    }

    /// The four kernels with a shared `gamma` and polynomial `degree`.
    pub fn default_set(gamma: f64, degree: u32) -> Result<Vec<Self>> {
        KernelKind::ALL
            .iter()
            .map(|&k| Self::new(k, gamma, degree))
            .collect()
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Same kernel with a different `gamma`.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.kind, gamma, self.degree)
    }

    /// Evaluates K(x, y). Both slices must have the same length.
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::input(format!(
                "kernel arguments differ in dimension: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::input("kernel arguments must have at least one coordinate"));
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Evaluates K(x, y) on ndarray views.
    pub fn evaluate_view(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        match (x.as_slice(), y.as_slice()) {
            (Some(a), Some(b)) => self.evaluate(a, b),
            _ => self.evaluate(&x.to_vec(), &y.to_vec()),
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => self.gamma * dot(x, y),
            KernelKind::Polynomial => (self.gamma * dot(x, y)).powi(self.degree as i32),
            KernelKind::Gaussian => (-self.gamma * sq_dist(x, y)).exp(),
            KernelKind::Laplacian => (-self.gamma * sq_dist(x, y).sqrt()).exp(),
        }
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

// Sum of squared differences is symmetric term by term, which keeps
// K(x, y) == K(y, x) bit for bit.
#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            KernelKind::Polynomial => write!(f, "poly:g={},d={}", self.gamma, self.degree),
            k => write!(f, "{}:g={}", k.token(), self.gamma),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses `kind[:g=<gamma>[,d=<degree>]]`. Missing parameters default to
    /// `g=1` and `d=2`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind_str, params) = match s.split_once(':') {
            Some((k, p)) => (k, p),
            None => (s, ""),
        };
        let kind = KernelKind::from_token(kind_str)
            .ok_or_else(|| Error::input(format!("unknown kernel '{kind_str}' in token '{s}'")))?;
        let mut gamma = 1.0;
        let mut degree = 2;
        for part in params.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::input(format!("malformed kernel parameter '{part}' in '{s}'")))?;
            match key.trim() {
                "g" | "gamma" => {
                    gamma = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::input(format!("bad gamma '{value}' in '{s}'")))?
                }
                "d" | "degree" => {
                    degree = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::input(format!("bad degree '{value}' in '{s}'")))?
                }
                other => return Err(Error::input(format!("unknown kernel parameter '{other}' in '{s}'"))),
            }
        }
        KernelSpec::new(kind, gamma, degree)
    }
}

impl Serialize for KernelSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KernelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dense symmetric Gram matrix `G[i][j] = K(x_i, x_j)`.
///
/// Only the upper triangle is evaluated; the lower triangle is a mirror.
pub fn gram_matrix(spec: &KernelSpec, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::input("gram matrix needs at least one row"));
    }
    if x.ncols() == 0 {
        return Err(Error::input("gram matrix needs at least one feature"));
    }
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| spec.eval_unchecked(&rows[i], &rows[j])).collect())
        .collect();
    let mut g = Array2::zeros((n, n));
    for (i, tail) in upper.into_iter().enumerate() {
        for (off, v) in tail.into_iter().enumerate() {
            let j = i + off;
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    Ok(g)
}

/// Kernel values between every row of `a` and every row of `b`.
pub fn cross_matrix(spec: &KernelSpec, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::input(format!(
            "cross kernel dimension mismatch: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let b_rows: Vec<Vec<f64>> = b.rows().into_iter().map(|r| r.to_vec()).collect();
    let out: Vec<f64> = a
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .flat_map_iter(|r| {
            let r = r.to_vec();
            b_rows.iter().map(move |br| spec.eval_unchecked(&r, br)).collect::<Vec<_>>()
        })
        .collect();
    Ok(Array2::from_shape_vec((a.nrows(), b.nrows()), out).expect("shape matches element count"))
}
