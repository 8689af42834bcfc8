use crate::error::{invalid, Error};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Taper `φ` applied to the Fourier coefficients before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    /// `φ(t) = 1 - |t|`
    #[default]
    Fejer,
    /// Raised cosine `φ(t) = (1 + cos πt) / 2`
    Cosine,
    /// `φ ≡ 1`
    Sharp,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Fejer, FilterKind::Cosine, FilterKind::Sharp];

    /// `φ(t)` for `t ∈ [-1, 1]`; zero outside.
    pub fn weight(self, t: f64) -> f64 {
        let a = t.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            FilterKind::Fejer => 1.0 - a,
            FilterKind::Cosine => 0.5 * (1.0 + (PI * a).cos()),
            FilterKind::Sharp => 1.0,
        }
    }

    /// `φ(n/N)` for `n = 0..=N`.
    pub fn taper(self, order: usize) -> Vec<f64> {
        (0..=order)
            .map(|n| self.weight(n as f64 / order as f64))
            .collect()
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Fejer => "fejer",
            FilterKind::Cosine => "cosine",
            FilterKind::Sharp => "sharp",
        })
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fejer" => Ok(FilterKind::Fejer),
            "cosine" => Ok(FilterKind::Cosine),
            "sharp" => Ok(FilterKind::Sharp),
            other => Err(invalid(format!(
                "unknown filter `{other}` (fejer, cosine, sharp)"
            ))),
        }
    }
}
