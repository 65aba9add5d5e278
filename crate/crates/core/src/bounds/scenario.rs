//! Selection scenarios: the monotonicity key and Monte Carlo settings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Max,
    Min,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Max => "max",
            Direction::Min => "min",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Weights of the ordering key `β₁σ₁² + β₂σ₂²`: selection probability is
/// non-increasing in the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionKey {
    pub label: String,
    pub beta1: f64,
    pub beta2: f64,
}

impl SelectionKey {
    /// Selection depends on the sensitivity variance only.
    pub fn d41() -> Self {
        Self::labelled("d41", 1.0, 0.0)
    }

    /// Selection depends on the specificity variance only.
    pub fn d42() -> Self {
        Self::labelled("d42", 0.0, 1.0)
    }

    /// Selection depends on the sum of both variances.
    pub fn d43() -> Self {
        Self::labelled("d43", 1.0, 1.0)
    }

    pub fn presets() -> Vec<Self> {
        vec![Self::d41(), Self::d42(), Self::d43()]
    }

    pub fn custom(beta1: f64, beta2: f64) -> Result<Self> {
        let key = Self::labelled(&format!("beta_{beta1}_{beta2}"), beta1, beta2);
        key.validate()?;
        Ok(key)
    }

    fn labelled(label: &str, beta1: f64, beta2: f64) -> Self {
        SelectionKey {
            label: label.to_string(),
            beta1,
            beta2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |b: f64| (0.0..=1.0).contains(&b);
        if !ok(self.beta1) || !ok(self.beta2) {
            return Err(Error::InvalidInput(format!(
                "scenario {}: beta weights must lie in [0,1]",
                self.label
            )));
        }
        if self.beta1 == 0.0 && self.beta2 == 0.0 {
            return Err(Error::InvalidInput(format!(
                "scenario {}: beta weights are both zero",
                self.label
            )));
        }
        Ok(())
    }

    /// Key value for a study with variances `(v1, v2)`. The weights are
    /// normalized by their maximum so that proportional weight pairs produce
    /// bit-identical keys.
    pub fn key(&self, v1: f64, v2: f64) -> f64 {
        let m = self.beta1.max(self.beta2);
        (self.beta1 / m) * v1 + (self.beta2 / m) * v2
    }
}

impl FromStr for SelectionKey {
    type Err = Error;

    /// Accepts `d41`, `d42`, `d43`, `beta_<b1>_<b2>` or `<b1>:<b2>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "d41" => return Ok(Self::d41()),
            "d42" => return Ok(Self::d42()),
            "d43" => return Ok(Self::d43()),
            _ => {}
        }
        let parts: Vec<&str> = if let Some(rest) = s.strip_prefix("beta_") {
            rest.split('_').collect()
        } else {
            s.split(':').collect()
        };
        let bad = || Error::InvalidInput(format!("unknown scenario '{s}'"));
        if parts.len() != 2 {
            return Err(bad());
        }
        let b1: f64 = parts[0].parse().map_err(|_| bad())?;
        let b2: f64 = parts[1].parse().map_err(|_| bad())?;
        Self::custom(b1, b2)
    }
}

/// One cell of a sensitivity analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionScenario {
    pub key: SelectionKey,
    /// Marginal selection probability.
    pub p: f64,
    /// Monte Carlo sample size (even).
    pub k: usize,
    pub replicates: usize,
    pub base_seed: u64,
}

impl SelectionScenario {
    pub fn validate(&self) -> Result<()> {
        self.key.validate()?;
        validate_p(self.p)?;
        validate_k(self.k)?;
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be at least 1".into()));
        }
        Ok(())
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        self.base_seed.wrapping_add(replicate as u64)
    }
}

pub fn validate_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "selection probability {p} not in (0,1]"
        )))
    }
}

pub fn validate_k(k: usize) -> Result<()> {
    if k >= 2 && k.is_multiple_of(2) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "K = {k}: the Monte Carlo size must be even and at least 2"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_presets_and_custom() {
        assert_eq!("d43".parse::<SelectionKey>().unwrap(), SelectionKey::d43());
        let k: SelectionKey = "0.5:0.5".parse().unwrap();
        assert_eq!(k.label, "beta_0.5_0.5");
        let k2: SelectionKey = "beta_0.5_0.5".parse().unwrap();
        assert_eq!(k, k2);
        assert!("0:0".parse::<SelectionKey>().is_err());
        assert!("d44".parse::<SelectionKey>().is_err());
        assert!("1.5:0".parse::<SelectionKey>().is_err());
    }

    #[test]
    fn proportional_keys_identical() {
        let a = SelectionKey::custom(0.5, 0.5).unwrap();
        let b = SelectionKey::d43();
        for (v1, v2) in [(0.3, 1.7), (2.1, 0.01), (1e-3, 5.5)] {
            assert_eq!(a.key(v1, v2), b.key(v1, v2));
        }
    }

    #[test]
    fn scenario_validation() {
        let mut s = SelectionScenario {
            key: SelectionKey::d41(),
            p: 0.5,
            k: 2000,
            replicates: 10,
            base_seed: 1,
        };
        assert!(s.validate().is_ok());
        s.k = 11;
        assert!(s.validate().is_err());
        s.k = 12;
        s.p = 0.0;
        assert!(s.validate().is_err());
        s.p = 1.0;
        s.replicates = 0;
        assert!(s.validate().is_err());
    }
}
