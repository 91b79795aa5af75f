//! Cross-company error measures, risk ratios and the Kupiec backtest.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distribution::{Outcome, Quantity, ReserveDistribution, Summary};
use crate::error::{Error, Result};
use crate::triangle::{Actuals, Line};

pub const DEFAULT_ALPHA: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Odp,
    Mack,
    Csr,
    Ann,
    StackedAnn,
}

impl Model {
    pub const ALL: [Model; 5] = [Model::Odp, Model::Mack, Model::Csr, Model::Ann, Model::StackedAnn];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Odp => "odp",
            Model::Mack => "mack",
            Model::Csr => "csr",
            Model::Ann => "ann",
            Model::StackedAnn => "stacked_ann",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `100 · sqrt(Σ (pred − act)² / K) / Σ act`.
pub fn pct_rmse(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != actuals.len() {
        return Err(Error::Argument("predictions and actuals must be non-empty and aligned".into()));
    }
    let total: f64 = actuals.iter().sum();
    if total == 0.0 {
        return Err(Error::Normalization);
    }
    let k = predictions.len() as f64;
    let mse = predictions.iter().zip(actuals).map(|(p, a)| (p - a).powi(2)).sum::<f64>() / k;
    Ok(100.0 * mse.sqrt() / total)
}

/// Reserve distribution summary of one company for one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub mean: f64,
    pub sd: f64,
    pub percentile: f64,
}

impl From<Summary> for RiskSummary {
    fn from(s: Summary) -> Self {
        Self {
            mean: s.mean,
            sd: s.sd,
            percentile: s.percentile,
        }
    }
}

fn check_means<'a>(risks: impl Iterator<Item = (&'a str, &'a RiskSummary)>) -> Result<Vec<&'a RiskSummary>> {
    risks
        .map(|(company, r)| {
            if r.mean == 0.0 {
                Err(Error::RatioUndefined {
                    company: company.to_string(),
                })
            } else {
                Ok(r)
            }
        })
        .collect()
}

/// Mean of `(q_{1−α} − mean) / mean` across companies.
pub fn ratio_rr<'a>(risks: impl IntoIterator<Item = (&'a str, &'a RiskSummary)>) -> Result<f64> {
    let r = check_means(risks.into_iter())?;
    if r.is_empty() {
        return Err(Error::Argument("no companies".into()));
    }
    Ok(r.iter().map(|s| (s.percentile - s.mean) / s.mean).sum::<f64>() / r.len() as f64)
}

/// Mean of `sd / mean` across companies.
pub fn ratio_sigma<'a>(risks: impl IntoIterator<Item = (&'a str, &'a RiskSummary)>) -> Result<f64> {
    let r = check_means(risks.into_iter())?;
    if r.is_empty() {
        return Err(Error::Argument("no companies".into()));
    }
    Ok(r.iter().map(|s| s.sd / s.mean).sum::<f64>() / r.len() as f64)
}

/// Upper tail of the χ² law with one degree of freedom.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        libm::erfc((x / 2.0).sqrt())
    }
}

fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

pub fn kupiec_lr(exceedances: usize, k: usize, p: f64) -> f64 {
    assert!(exceedances <= k && k > 0, "need 0 <= x <= K and K > 0");
    let (x, kf) = (exceedances as f64, k as f64);
    let rate = x / kf;
    let null = xlny(kf - x, 1.0 - p) + xlny(x, p);
    let alt = xlny(kf - x, 1.0 - rate) + xlny(x, rate);
    (-2.0 * null + 2.0 * alt).max(0.0)
}

/// Proportion-of-failures likelihood-ratio p-value.
pub fn kupiec_test(exceedances: usize, k: usize, p: f64) -> f64 {
    chi2_1_sf(kupiec_lr(exceedances, k, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub point: Outcome,
    pub reserve: RiskSummary,
    pub next_year: RiskSummary,
    pub ultimate: RiskSummary,
}

impl ModelResult {
    pub fn new(point: Outcome, dist: &ReserveDistribution, alpha: f64) -> Self {
        let level = 1.0 - alpha;
        Self {
            point,
            reserve: dist.summary(Quantity::Reserve, level).into(),
            next_year: dist.summary(Quantity::NextYear, level).into(),
            ultimate: dist.summary(Quantity::Ultimate, level).into(),
        }
    }

    /// Point estimate equal to the distribution mean.
    pub fn from_distribution(dist: &ReserveDistribution, alpha: f64) -> Self {
        let point = Outcome {
            reserve: dist.mean(Quantity::Reserve),
            next_year: dist.mean(Quantity::NextYear),
            ultimate: dist.mean(Quantity::Ultimate),
        };
        Self::new(point, dist, alpha)
    }

    /// Actual reserve strictly above the stored percentile.
    pub fn exceeded(&self, actual_reserve: f64) -> bool {
        actual_reserve > self.reserve.percentile
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyResult {
    pub group_id: String,
    pub line: Line,
    pub actuals: Option<Actuals>,
    pub models: BTreeMap<Model, ModelResult>,
    /// Failures per model, or under `"actuals"` / `"dataset"`.
    pub errors: BTreeMap<String, String>,
}

impl CompanyResult {
    pub fn exceeded(&self, model: Model) -> Option<bool> {
        Some(self.models.get(&model)?.exceeded(self.actuals?.reserve))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: Model,
    pub k: usize,
    pub pct_rmse_reserve: Option<f64>,
    pub pct_rmse_next_year: Option<f64>,
    pub pct_rmse_ultimate: Option<f64>,
    pub ratio_rr: Option<f64>,
    pub ratio_sigma: Option<f64>,
    pub exceedances: usize,
    pub kupiec_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineMetrics {
    pub line: Line,
    /// Companies in the run for this line.
    pub companies: usize,
    pub models: Vec<ModelMetrics>,
}

impl LineMetrics {
    pub fn model(&self, m: Model) -> Option<&ModelMetrics> {
        self.models.iter().find(|x| x.model == m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub alpha: f64,
    pub lines: Vec<LineMetrics>,
}

impl EvaluationReport {
    pub fn line(&self, line: Line) -> Option<&LineMetrics> {
        self.lines.iter().find(|l| l.line == line)
    }
}

/// Aggregates per line and model over companies that have both actuals and
/// a result for that model; `K` counts them.
pub fn evaluate(results: &[CompanyResult], alpha: f64) -> EvaluationReport {
    let mut lines = Vec::new();
    for line in Line::ALL {
        let companies: Vec<&CompanyResult> = results.iter().filter(|r| r.line == line).collect();
        if companies.is_empty() {
            continue;
        }
        let models = Model::ALL
            .iter()
            .map(|&model| {
                let rows: Vec<(&CompanyResult, &ModelResult, Actuals)> = companies
                    .iter()
                    .filter_map(|c| Some((*c, c.models.get(&model)?, c.actuals?)))
                    .collect();
                let k = rows.len();
                let metric = |f: &dyn Fn(&Outcome) -> f64| -> Option<f64> {
                    let p: Vec<f64> = rows.iter().map(|(_, m, _)| f(&m.point)).collect();
                    let a: Vec<f64> = rows.iter().map(|(_, _, a)| f(&a.as_outcome())).collect();
                    pct_rmse(&p, &a).ok()
                };
                let risks = || rows.iter().map(|(c, m, _)| (c.group_id.as_str(), &m.reserve));
                let exceedances = rows.iter().filter(|(_, m, a)| m.exceeded(a.reserve)).count();
                ModelMetrics {
                    model,
                    k,
                    pct_rmse_reserve: metric(&|o| o.reserve),
                    pct_rmse_next_year: metric(&|o| o.next_year),
                    pct_rmse_ultimate: metric(&|o| o.ultimate),
                    ratio_rr: ratio_rr(risks()).ok(),
                    ratio_sigma: ratio_sigma(risks()).ok(),
                    exceedances,
                    kupiec_p: (k > 0).then(|| kupiec_test(exceedances, k, alpha)),
                }
            })
            .collect();
        lines.push(LineMetrics {
            line,
            companies: companies.len(),
            models,
        });
    }
    EvaluationReport { alpha, lines }
}
