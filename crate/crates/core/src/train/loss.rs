use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPS_CLAMP, 1 - EPS_CLAMP]` before any
/// logarithm.
pub const EPS_CLAMP: f64 = 1e-7;

/// Logarithm base of the cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Two,
    E,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::E => x.ln(),
        }
    }

    /// `ln(base)`: dividing a natural-log quantity by this converts it.
    pub fn ln_base(self) -> f64 {
        match self {
            LogBase::Two => std::f64::consts::LN_2,
            LogBase::E => 1.0,
        }
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" => Ok(LogBase::Two),
            "e" => Ok(LogBase::E),
            other => Err(Error::usage(format!("log base must be `2` or `e`, got `{other}`"))),
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogBase::Two => "2",
            LogBase::E => "e",
        })
    }
}

/// Binary cross-entropy `-(1/N) sum[y log p + (1 - y) log(1 - p)]`.
pub fn bce_loss(labels: &[u8], probs: &[f64], base: LogBase) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::usage("bce_loss of an empty batch"));
    }
    if labels.len() != probs.len() {
        return Err(Error::shape(format!(
            "{} labels but {} probabilities",
            labels.len(),
            probs.len()
        )));
    }
    let mut sum = 0.0;
    for (&y, &p) in labels.iter().zip(probs) {
        if p.is_nan() {
            return Err(Error::Domain("probability is NaN".into()));
        }
        let p = p.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
        sum += match y {
            0 => base.log(1.0 - p),
            1 => base.log(p),
            other => return Err(Error::Data(format!("label {other} is not 0 or 1"))),
        };
    }
    Ok(-sum / labels.len() as f64)
}
