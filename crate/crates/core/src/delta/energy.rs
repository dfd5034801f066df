//! Cumulative singular-value energy and threshold-based rank selection.
//!
//! The default [`EnergyMode::Linear`] measures energy as the plain sum of
//! singular values, `E(t) = sum(sigma[..t]) / sum(sigma)`. This is not the
//! squared (Frobenius) energy most SVD tooling uses; [`EnergyMode::Squared`]
//! is available for that convention but is never the default.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyMode {
    /// `sum(sigma_i)`
    #[default]
    Linear,
    /// `sum(sigma_i^2)`
    Squared,
}

impl EnergyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EnergyMode::Linear => "linear",
            EnergyMode::Squared => "squared",
        }
    }

    fn weight(self, sigma: f64) -> f64 {
        match self {
            EnergyMode::Linear => sigma,
            EnergyMode::Squared => sigma * sigma,
        }
    }
}

impl fmt::Display for EnergyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnergyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(EnergyMode::Linear),
            "squared" => Ok(EnergyMode::Squared),
            other => Err(Error::InvalidArgument(format!("unknown energy mode `{other}`"))),
        }
    }
}

/// Prefix sums of singular-value energy normalized by the total.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    pub sigma: Vec<f64>,
    /// `cumulative[t - 1] = E(t)`; the last entry is exactly 1.
    pub cumulative: Vec<f64>,
    pub total: f64,
    pub mode: EnergyMode,
}

/// Linear-energy profile of a non-increasing, non-negative spectrum.
pub fn cumulative_energy(sigma: &[f64]) -> Result<EnergyProfile> {
    cumulative_energy_with(sigma, EnergyMode::Linear)
}

pub fn cumulative_energy_with(sigma: &[f64], mode: EnergyMode) -> Result<EnergyProfile> {
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidArgument("singular values must be finite and non-negative".into()));
    }
    if sigma.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument("singular values must be non-increasing".into()));
    }
    let mut running = 0.0;
    let prefix: Vec<f64> = sigma
        .iter()
        .map(|&s| {
            running += mode.weight(s);
            running
        })
        .collect();
    let total = running;
    if total <= 0.0 {
        return Err(Error::ZeroEnergy);
    }
    Ok(EnergyProfile {
        sigma: sigma.to_vec(),
        cumulative: prefix.into_iter().map(|p| p / total).collect(),
        total,
        mode,
    })
}

pub fn validate_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidTau(tau))
    }
}

/// Smallest `t >= 1` with `E(t) >= tau`.
///
/// At `tau == 1` this is the number of nonzero singular values, so trailing
/// zeros never count and tiny values lost to rounding in the total still do.
pub fn select_rank(profile: &EnergyProfile, tau: f64) -> Result<usize> {
    validate_tau(tau)?;
    if tau == 1.0 {
        return Ok(profile.sigma.iter().filter(|&&s| s > 0.0).count().max(1));
    }
    let t = profile
        .cumulative
        .iter()
        .position(|&e| e >= tau)
        .map_or(profile.cumulative.len(), |i| i + 1);
    Ok(t.max(1))
}
