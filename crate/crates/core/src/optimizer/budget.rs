use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Fidelity;

/// Evaluation budget. Every evaluation counts towards `max_total`; real ones
/// also count towards `max_real`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budget {
    pub max_real: usize,
    pub max_total: usize,
    #[serde(skip)]
    pub used_real: usize,
    #[serde(skip)]
    pub used_total: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget::new(15, 161)
    }
}

impl Budget {
    pub fn new(max_real: usize, max_total: usize) -> Self {
        Budget { max_real, max_total, used_real: 0, used_total: 0 }
    }

    pub fn allows(&self, fidelity: Fidelity) -> bool {
        self.used_total < self.max_total && (fidelity == Fidelity::Simulation || self.used_real < self.max_real)
    }

    pub fn exhausted(&self) -> bool {
        !self.allows(Fidelity::Simulation)
    }

    pub fn real_exhausted(&self) -> bool {
        !self.allows(Fidelity::Real)
    }

    pub fn charge(&mut self, fidelity: Fidelity) -> Result<()> {
        if !self.allows(fidelity) {
            return Err(Error::BudgetExhausted);
        }
        self.used_total += 1;
        if fidelity == Fidelity::Real {
            self.used_real += 1;
        }
        Ok(())
    }

    pub fn is_consistent(&self) -> bool {
        self.used_real <= self.max_real && self.used_total <= self.max_total && self.used_real <= self.used_total
    }
}
