//! Reserve variability around a completed scaled rectangle: per development
//! year moments, a moment-matched log-normal law, and simulated run-offs.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::ReserveDistribution;
use crate::error::{Error, Result};
use crate::seeds::stream_rng;
use crate::triangle::{runoff_outcome, Grid};

/// Form of the variance parameter inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eq17Variant {
    /// `σ² = ln(1 + Var / E²)`, the exact inverse of the log-normal moments.
    #[default]
    Standard,
    /// `σ² = ln(1 + Var / E)`.
    Printed,
}

impl std::str::FromStr for Eq17Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "printed" => Ok(Self::Printed),
            other => Err(Error::Argument(format!("unknown variance variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LognormalParams {
    /// Location per cell; identical down each column.
    pub mu: Grid,
    pub sigma2: Vec<f64>,
}

/// Column means and `n − 1` variances over all accident years.
pub fn dev_year_moments(rect: &Grid) -> Vec<Moments> {
    let n = rect.n();
    (1..=n)
        .map(|dy| {
            let col = rect.column(dy);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Moments { mean, var }
        })
        .collect()
}

pub fn moment_match(moments: &[Moments], variant: Eq17Variant) -> Result<LognormalParams> {
    let n = moments.len();
    let mut mu_col = Vec::with_capacity(n);
    let mut sigma2 = Vec::with_capacity(n);
    for (j, m) in moments.iter().enumerate() {
        if !(m.mean > 0.0) {
            return Err(Error::MomentSupport { dy: j + 1 });
        }
        let e2 = m.mean * m.mean;
        mu_col.push((e2 / (m.var + e2).sqrt()).ln());
        sigma2.push(match variant {
            Eq17Variant::Standard => (1.0 + m.var / e2).ln(),
            Eq17Variant::Printed => (1.0 + m.var / m.mean).ln(),
        });
    }
    Ok(LognormalParams {
        mu: Grid::from_fn(n, |_, dy| mu_col[dy - 1]),
        sigma2,
    })
}

/// Draws `t` rectangles of lower-triangle cells, rescales by premium and
/// reduces each to a run-off outcome against `paid_to_date`.
pub fn simulate(
    params: &LognormalParams,
    premiums: &[f64],
    paid_to_date: &[f64],
    t: usize,
    seed: u64,
) -> Result<ReserveDistribution> {
    if t == 0 {
        return Err(Error::Argument("simulation count must be at least 1".into()));
    }
    let n = params.mu.n();
    if premiums.len() != n || paid_to_date.len() != n || params.sigma2.len() != n {
        return Err(Error::Argument("simulation inputs differ in size".into()));
    }
    let sigma: Vec<f64> = params.sigma2.iter().map(|s| s.sqrt()).collect();
    let outcomes = (0..t)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let mut lower = Grid::filled(n, f64::NAN);
            for ay in 2..=n {
                for dy in n + 2 - ay..=n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let v = (params.mu.get(ay, dy) + sigma[dy - 1] * z).exp();
                    lower.set(ay, dy, v * premiums[ay - 1]);
                }
            }
            runoff_outcome(paid_to_date, |ay, dy| lower.get(ay, dy))
        })
        .collect();
    Ok(ReserveDistribution::new(outcomes))
}

/// Moments, inversion and simulation in one step.
pub fn reserve_distribution(
    completed: &Grid,
    premiums: &[f64],
    paid_to_date: &[f64],
    variant: Eq17Variant,
    t: usize,
    seed: u64,
) -> Result<ReserveDistribution> {
    let params = moment_match(&dev_year_moments(completed), variant)?;
    simulate(&params, premiums, paid_to_date, t, seed)
}
