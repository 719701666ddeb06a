//! Weight sequences over recall cut-offs and their telescoping cumulative sums.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Weighting `w_K` of the per-cut-off recall losses.
///
/// Both schemes are chosen so that the cumulative sum `W(k) = Σ_{i≤k} w_i`
/// telescopes into a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightScheme {
    /// `w_k = log(1 + 1/k)`, `W(k) = log(1 + k)`; decays like `1/k`.
    Log,
    /// `w_k = log(1 + log(1 + 1/k) / (1 + log k))`, `W(k) = log(1 + log(1 + k))`;
    /// decays like `1/(k log k)`.
    LogLog,
}

impl WeightScheme {
    /// `w_k` for `k ≥ 1`.
    pub fn weight(self, k: usize) -> f64 {
        assert!(k >= 1, "weights are indexed from 1");
        let k = k as f64;
        match self {
            WeightScheme::Log => (1.0 / k).ln_1p(),
            WeightScheme::LogLog => ((1.0 / k).ln_1p() / (1.0 + k.ln())).ln_1p(),
        }
    }

    /// Closed-form `W(k)`; `W(0) = 0`.
    pub fn cumulative(self, k: usize) -> f64 {
        self.cumulative_at(k as f64)
    }

    /// Continuous extension of `W` to real `r ≥ 0`.
    pub fn cumulative_at(self, r: f64) -> f64 {
        match self {
            WeightScheme::Log => r.ln_1p(),
            WeightScheme::LogLog => r.ln_1p().ln_1p(),
        }
    }

    /// `W'(r)` of the continuous extension.
    pub fn cumulative_derivative(self, r: f64) -> f64 {
        match self {
            WeightScheme::Log => 1.0 / (1.0 + r),
            WeightScheme::LogLog => 1.0 / ((1.0 + r.ln_1p()) * (1.0 + r)),
        }
    }
}

/// `W(k)` for the given scheme.
pub fn weight_cumulative(scheme: WeightScheme, k: usize) -> f64 {
    scheme.cumulative(k)
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Log => "log",
            WeightScheme::LogLog => "loglog",
        })
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "log" => Ok(WeightScheme::Log),
            "loglog" | "log-log" | "log_log" => Ok(WeightScheme::LogLog),
            other => Err(Error::InvalidInput(format!(
                "unknown weight scheme '{other}'"
            ))),
        }
    }
}
