//! Simulated reserve outcomes shared by every stochastic model.

use serde::{Deserialize, Serialize};

/// One simulated (or realised) run-off: outstanding reserve, payments in the
/// next calendar year and the ultimate cost, all in monetary units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Outcome {
    pub reserve: f64,
    pub next_year: f64,
    pub ultimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Reserve,
    NextYear,
    Ultimate,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Reserve, Quantity::NextYear, Quantity::Ultimate];

    pub fn of(self, o: &Outcome) -> f64 {
        match self {
            Quantity::Reserve => o.reserve,
            Quantity::NextYear => o.next_year,
            Quantity::Ultimate => o.ultimate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReserveDistribution {
    outcomes: Vec<Outcome>,
}

impl ReserveDistribution {
    pub fn new(outcomes: Vec<Outcome>) -> Self {
        Self { outcomes }
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn values(&self, q: Quantity) -> Vec<f64> {
        self.outcomes.iter().map(|o| q.of(o)).collect()
    }

    pub fn mean(&self, q: Quantity) -> f64 {
        if self.outcomes.is_empty() {
            return f64::NAN;
        }
        self.outcomes.iter().map(|o| q.of(o)).sum::<f64>() / self.outcomes.len() as f64
    }

    /// Sample standard deviation (n − 1 denominator); zero for a single outcome.
    pub fn sd(&self, q: Quantity) -> f64 {
        let n = self.outcomes.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean(q);
        let ss: f64 = self.outcomes.iter().map(|o| (q.of(o) - m).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    /// Empirical quantile with linear interpolation between order statistics
    /// (position `level · (n − 1)`), so it is monotone in `level`.
    pub fn percentile(&self, q: Quantity, level: f64) -> f64 {
        let mut v = self.values(q);
        v.sort_by(|a, b| a.total_cmp(b));
        quantile_sorted(&v, level)
    }

    pub fn summary(&self, q: Quantity, level: f64) -> Summary {
        Summary {
            mean: self.mean(q),
            sd: self.sd(q),
            percentile: self.percentile(q, level),
        }
    }
}

/// Mean, standard deviation and one upper percentile of a simulated quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub percentile: f64,
}

pub(crate) fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let level = level.clamp(0.0, 1.0);
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
