//! Binary classification metrics and classifier agreement.
//!
//! +1 is the positive class throughout.

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    fn ensure_nonempty(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(Error::input("confusion counts are empty"));
        }
        Ok(())
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::input(format!("label sequences differ in length: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::input("label sequences are empty"));
    }
    Ok(())
}

pub fn confusion(predicted: &[Label], truth: &[Label]) -> Result<ConfusionCounts> {
    check_lengths(predicted.len(), truth.len())?;
    let mut c = ConfusionCounts::default();
    for (p, t) in predicted.iter().zip(truth) {
        match (p, t) {
            (Label::Positive, Label::Positive) => c.tp += 1,
            (Label::Negative, Label::Negative) => c.tn += 1,
            (Label::Positive, Label::Negative) => c.fp += 1,
            (Label::Negative, Label::Positive) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Same as [`confusion`] for ±1 integer labels; anything else is an input error.
pub fn confusion_from_signs(predicted: &[i64], truth: &[i64]) -> Result<ConfusionCounts> {
    check_lengths(predicted.len(), truth.len())?;
    let p: Vec<Label> = predicted.iter().map(|&v| Label::from_i64(v)).collect::<Result<_>>()?;
    let t: Vec<Label> = truth.iter().map(|&v| Label::from_i64(v)).collect::<Result<_>>()?;
    confusion(&p, &t)
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    c.ensure_nonempty()?;
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

/// Matthews correlation coefficient. Returns 0 when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> Result<f64> {
    c.ensure_nonempty()?;
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(((tp * tn - fp * fn_) / denom.sqrt()).clamp(-1.0, 1.0))
}

/// MCC rescaled to [0, 1].
pub fn umcc(mcc_value: f64) -> f64 {
    (mcc_value + 1.0) / 2.0
}

/// Fraction of positions where two label sequences coincide.
pub fn agreement(a: &[Label], b: &[Label]) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}

/// Mean of [`agreement`] over all unordered pairs of classifiers.
///
/// `predictions[b][k]` is classifier `b`'s label for point `k`. For binary
/// labels the number of agreeing pairs at a point with `m` positive votes
/// out of `B` is `C(m, 2) + C(B − m, 2)`, which makes this O(B·k).
pub fn mean_pairwise_agreement(predictions: &[Vec<Label>]) -> Result<f64> {
    let b = predictions.len();
    if b < 2 {
        return Err(Error::input("pairwise agreement needs at least two classifiers"));
    }
    let k = predictions[0].len();
    for p in predictions {
        check_lengths(p.len(), k)?;
    }
    let mut positives = vec![0u64; k];
    for p in predictions {
        for (slot, l) in positives.iter_mut().zip(p) {
            *slot += (*l == Label::Positive) as u64;
        }
    }
    let pairs = |m: u64| m * m.saturating_sub(1) / 2;
    let b = b as u64;
    let agreeing: u64 = positives.iter().map(|&m| pairs(m) + pairs(b - m)).sum();
    Ok(agreeing as f64 / (k as u64 * pairs(b)) as f64)
}
