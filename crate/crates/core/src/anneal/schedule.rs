use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoolingKind {
    /// `gamma0 * rate^j`
    #[default]
    Geometric,
    /// `gamma0 - rate * j`
    Linear,
    /// `gamma0 / (1 + rate * ln(1 + j))`
    Logarithmic,
}

impl std::str::FromStr for CoolingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(Self::Geometric),
            "linear" => Ok(Self::Linear),
            "logarithmic" | "log" => Ok(Self::Logarithmic),
            _ => Err(Error::InvalidParameter(format!("unknown cooling schedule '{s}'"))),
        }
    }
}

/// Temperature sequence, clamped from below by `floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingSchedule {
    pub kind: CoolingKind,
    pub gamma0: f64,
    pub rate: f64,
    pub floor: f64,
}

impl CoolingSchedule {
    pub const DEFAULT_RATE: f64 = 0.999;
    pub const DEFAULT_FLOOR: f64 = 1e-4;

    pub fn new(kind: CoolingKind, gamma0: f64, rate: f64, floor: f64) -> Result<Self> {
        if !(gamma0.is_finite() && gamma0 > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma0 must be positive, got {gamma0}")));
        }
        if !(floor.is_finite() && floor > 0.0) {
            return Err(Error::InvalidParameter(format!("temperature floor must be positive, got {floor}")));
        }
        let rate_ok = match kind {
            CoolingKind::Geometric => rate > 0.0 && rate <= 1.0,
            CoolingKind::Linear | CoolingKind::Logarithmic => rate.is_finite() && rate >= 0.0,
        };
        if !rate_ok {
            return Err(Error::InvalidParameter(format!("cooling rate {rate} invalid for {kind:?}")));
        }
        Ok(Self {
            kind,
            gamma0,
            rate,
            floor,
        })
    }

    pub fn geometric(gamma0: f64) -> Result<Self> {
        Self::new(CoolingKind::Geometric, gamma0, Self::DEFAULT_RATE, Self::DEFAULT_FLOOR)
    }

    /// Fixed temperature, e.g. `1.0` for plain Metropolis-Hastings sampling.
    pub fn constant(gamma: f64) -> Result<Self> {
        Self::new(CoolingKind::Geometric, gamma, 1.0, gamma.min(Self::DEFAULT_FLOOR))
    }

    pub fn gamma(&self, j: u64) -> f64 {
        let j = j as f64;
        let g = match self.kind {
            CoolingKind::Geometric => self.gamma0 * self.rate.powf(j),
            CoolingKind::Linear => self.gamma0 - self.rate * j,
            CoolingKind::Logarithmic => self.gamma0 / (1.0 + self.rate * j.ln_1p()),
        };
        g.max(self.floor)
    }
}
