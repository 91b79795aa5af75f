//! Over-dispersed Poisson model fitted through its Chain Ladder equivalence,
//! with the residual bootstrap plus gamma process error.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::chain_ladder::{dev_factors, project, DevFactors};
use crate::distribution::{Outcome, ReserveDistribution};
use crate::error::{Error, Result};
use crate::seeds::stream_rng;
use crate::triangle::{runoff_outcome, Grid, LossTriangle, TriangleKind};

const MAX_RESAMPLE_ATTEMPTS: usize = 100;

#[derive(Debug, Clone)]
pub struct OdpFit {
    observed: LossTriangle,
    factors: DevFactors,
    /// Fitted incremental means on the upper triangle (zero below).
    fitted_incrementals: Grid,
    dispersion: f64,
    pearson_residuals: Vec<f64>,
    adjusted_residuals: Vec<f64>,
}

impl OdpFit {
    pub fn fitted_incrementals(&self) -> &Grid {
        &self.fitted_incrementals
    }

    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    /// Unadjusted Pearson residuals, row-major over the upper triangle.
    pub fn pearson_residuals(&self) -> &[f64] {
        &self.pearson_residuals
    }

    /// Residuals scaled by `sqrt(N / dof)`; this is the resampling pool.
    pub fn adjusted_residuals(&self) -> &[f64] {
        &self.adjusted_residuals
    }

    pub fn factors(&self) -> &DevFactors {
        &self.factors
    }

    /// Zero dispersion: the triangle follows Chain Ladder ratios exactly.
    pub fn is_degenerate(&self) -> bool {
        self.dispersion == 0.0
    }

    pub fn deterministic_reserve(&self) -> f64 {
        let n = self.observed.n();
        let g = project(&self.observed, &self.factors).expect("factors cover triangle");
        (1..=n).map(|ay| g.get(ay, n) - g.get(ay, n + 1 - ay)).sum()
    }
}

pub fn degrees_of_freedom(n: usize) -> isize {
    (n * (n + 1) / 2) as isize - (2 * n - 1) as isize
}

/// Fitted values come from recursing each latest diagonal backwards through
/// the Chain Ladder factors, which reproduces the GLM's row and column
/// margins.
pub fn fit_odp(triangle: &LossTriangle) -> Result<OdpFit> {
    let cum = triangle.to_kind(TriangleKind::Cumulative);
    let inc = triangle.to_kind(TriangleKind::Incremental);
    let n = cum.n();
    let dof = degrees_of_freedom(n);
    if dof <= 0 {
        return Err(Error::Estimation(format!(
            "{n}x{n} triangle leaves no degrees of freedom for the dispersion"
        )));
    }
    let factors = dev_factors(&cum)?;
    let mut fitted = Grid::filled(n, 0.0);
    let mut residuals = Vec::with_capacity(n * (n + 1) / 2);
    let mut fitted_cum = vec![0.0; n];
    for i in 0..n {
        let diag = n - 1 - i;
        fitted_cum[diag] = cum.at(i, diag);
        for j in (1..=diag).rev() {
            fitted_cum[j - 1] = fitted_cum[j] / factors.factor(j + 1);
        }
        for j in 0..=diag {
            let m = if j == 0 {
                fitted_cum[0]
            } else {
                fitted_cum[j] - fitted_cum[j - 1]
            };
            let c = inc.at(i, j);
            // a zero fit is only meaningful against a zero observation
            let r = if m == 0.0 && c == 0.0 {
                0.0
            } else if m != 0.0 && m.is_finite() {
                (c - m) / m.abs().sqrt()
            } else {
                return Err(Error::FitDegeneracy { ay: i + 1, dy: j + 1 });
            };
            fitted.set(i + 1, j + 1, m);
            residuals.push(r);
        }
    }
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    let dispersion = ss / dof as f64;
    let cells = residuals.len() as f64;
    let adj = (cells / dof as f64).sqrt();
    let adjusted = residuals.iter().map(|r| r * adj).collect();
    Ok(OdpFit {
        observed: cum,
        factors,
        fitted_incrementals: fitted,
        dispersion,
        pearson_residuals: residuals,
        adjusted_residuals: adjusted,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct OdpBootstrapOptions {
    /// Add gamma process error to the future increments.
    pub process_error: bool,
}

impl Default for OdpBootstrapOptions {
    fn default() -> Self {
        Self {
            process_error: true,
        }
    }
}

pub fn odp_bootstrap(fit: &OdpFit, n_sims: usize, seed: u64) -> Result<ReserveDistribution> {
    odp_bootstrap_with(fit, n_sims, seed, OdpBootstrapOptions::default())
}

pub fn odp_bootstrap_with(
    fit: &OdpFit,
    n_sims: usize,
    seed: u64,
    opts: OdpBootstrapOptions,
) -> Result<ReserveDistribution> {
    if n_sims == 0 {
        return Err(Error::Argument("n_sims must be at least 1".into()));
    }
    if fit.adjusted_residuals.is_empty() {
        return Err(Error::Argument("empty residual pool".into()));
    }
    let outcomes = (0..n_sims)
        .into_par_iter()
        .map(|s| one_replicate(fit, seed, s as u64, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReserveDistribution::new(outcomes))
}

/// Sample from a gamma law with the given mean and variance `phi·|mean|`,
/// reflected for negative means.
fn signed_gamma<R: Rng>(rng: &mut R, mean: f64, phi: f64) -> f64 {
    if mean == 0.0 || phi <= 0.0 {
        return mean;
    }
    let shape = mean.abs() / phi;
    let draw = Gamma::new(shape, phi)
        .map(|g| g.sample(rng))
        .unwrap_or(mean.abs());
    draw.copysign(mean)
}

fn one_replicate(fit: &OdpFit, seed: u64, stream: u64, opts: OdpBootstrapOptions) -> Result<Outcome> {
    let n = fit.observed.n();
    let mut rng = stream_rng(seed, stream);
    let pool = &fit.adjusted_residuals;
    let mut pseudo = vec![0.0; n * n];
    for _ in 0..MAX_RESAMPLE_ATTEMPTS {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n - i {
                let m = fit.fitted_incrementals.get(i + 1, j + 1);
                let r = pool[rng.random_range(0..pool.len())];
                acc += m + r * m.abs().sqrt();
                pseudo[i * n + j] = acc;
            }
        }
        let tri = LossTriangle::new(n, pseudo.clone(), TriangleKind::Cumulative)?;
        let Ok(factors) = dev_factors(&tri) else {
            continue;
        };
        let proj = project(&tri, &factors)?;
        let paid = fit.observed.latest_diagonal();
        let mut lower = Grid::filled(n, f64::NAN);
        for i in 1..n {
            let diag = n - i;
            let mut cum = paid[i];
            for j in diag..n {
                let mean = proj.get(i + 1, j + 1) - proj.get(i + 1, j);
                let inc = if opts.process_error {
                    signed_gamma(&mut rng, mean, fit.dispersion)
                } else {
                    mean
                };
                cum += inc;
                lower.set(i + 1, j + 1, cum);
            }
        }
        return Ok(runoff_outcome(&paid, |ay, dy| lower.get(ay, dy)));
    }
    Err(Error::Estimation(format!(
        "bootstrap replicate {stream}: no pseudo triangle with valid factors after {MAX_RESAMPLE_ATTEMPTS} attempts"
    )))
}
