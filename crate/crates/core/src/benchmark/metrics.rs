use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {truth} ground-truth values vs {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
}

fn check(y: &[f64], yhat: &[f64], min: usize) -> Result<(), MetricError> {
    if y.len() != yhat.len() {
        return Err(MetricError::LengthMismatch { truth: y.len(), predicted: yhat.len() });
    }
    if y.len() < min {
        return Err(MetricError::TooShort { needed: min, got: y.len() });
    }
    Ok(())
}

/// Coefficient of determination, or `Skipped` when the truth is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum R2 {
    Score(f64),
    Skipped,
}

impl R2 {
    pub fn score(self) -> Option<f64> {
        match self {
            R2::Score(v) => Some(v),
            R2::Skipped => None,
        }
    }
}

impl Serialize for R2 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            R2::Score(v) => s.serialize_f64(*v),
            R2::Skipped => s.serialize_str("skipped"),
        }
    }
}

impl<'de> Deserialize<'de> for R2 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(R2::Score(v)),
            Raw::Text(t) if t == "skipped" => Ok(R2::Skipped),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected R2 value `{t}`"))),
        }
    }
}

/// `1 - SS_res / SS_tot`.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<R2, MetricError> {
    check(y, yhat, 2)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(R2::Skipped);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(R2::Score(1.0 - ss_res / ss_tot))
}

/// Symmetric MAPE in percent with a fixed `+1` in the denominator.
pub fn smape(y: &[f64], yhat: &[f64]) -> Result<f64, MetricError> {
    check(y, yhat, 1)?;
    let s: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| (a - b).abs() / (a.abs() + b.abs() + 1.0))
        .sum();
    Ok(200.0 * s / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, MetricError> {
    check(y, yhat, 1)?;
    let s: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((s / y.len() as f64).sqrt())
}

/// Relative percentage error per element: `(y - yhat) / (y + 1) * 100`.
/// Under-prediction is positive.
pub fn rpe(y: &[f64], yhat: &[f64]) -> Result<Vec<f64>, MetricError> {
    check(y, yhat, 0)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b) / (a + 1.0) * 100.0).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub r2: R2,
    pub smape: f64,
    pub rmse: f64,
}

impl MetricTriple {
    /// All three metrics; R² is marked skipped when it cannot be computed
    /// (constant truth or a single sample).
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Self, MetricError> {
        let r2 = match r2(y, yhat) {
            Ok(v) => v,
            Err(MetricError::TooShort { .. }) => R2::Skipped,
            Err(e) => return Err(e),
        };
        Ok(Self { r2, smape: smape(y, yhat)?, rmse: rmse(y, yhat)? })
    }
}
