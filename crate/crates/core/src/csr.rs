//! Changing Settlement Rate model: log-normal cumulative payments whose
//! location drifts across accident years, fitted by adaptive random-walk
//! Metropolis within Gibbs.
//!
//! Location is `μ_ij = α_i + β_j (1 − γ)^(i−1)`, scale
//! `σ_j = a_j + … + a_n`, and priors follow the standard calibration:
//! `α_i ~ N(ln P_i + logelr, √10)`, `logelr ~ U(−1, 0.5)`,
//! `β_j ~ U(−5, 5)` with `β_n = 0`, `γ ~ N(0, 0.025)`, `a_i ~ U(0, 1)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distribution::ReserveDistribution;
use crate::error::{Error, Result};
use crate::seeds::rng;
use crate::triangle::{observed, runoff_outcome, CompanyDataset, Grid};

const ALPHA_SD: f64 = 3.162_277_660_168_379_5; // sqrt(10)
const GAMMA_SD: f64 = 0.025;
const LOGELR_MIN: f64 = -1.0;
const LOGELR_MAX: f64 = 0.5;
const BETA_BOUND: f64 = 5.0;
const TARGET_ACCEPTANCE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrParams {
    pub alpha: Vec<f64>,
    /// Last entry is fixed at zero.
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub logelr: f64,
    pub a: Vec<f64>,
}

impl CsrParams {
    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// `σ_j = Σ_{i ≥ j} a_i`, strictly decreasing when every `a_i > 0`.
    pub fn sigma(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.a.len()];
        let mut acc = 0.0;
        for j in (0..self.a.len()).rev() {
            acc += self.a[j];
            s[j] = acc;
        }
        s
    }

    /// Location for 1-based cell `(ay, dy)`.
    pub fn mu(&self, ay: usize, dy: usize) -> f64 {
        self.alpha[ay - 1] + self.beta[dy - 1] * (1.0 - self.gamma).powi(ay as i32 - 1)
    }

    pub fn in_support(&self) -> bool {
        let n = self.n();
        self.beta.len() == n
            && self.a.len() == n
            && self.beta[n - 1] == 0.0
            && self.beta[..n - 1].iter().all(|b| b.abs() <= BETA_BOUND)
            && (LOGELR_MIN..=LOGELR_MAX).contains(&self.logelr)
            && self.a.iter().all(|&a| a > 0.0 && a < 1.0)
            && self.alpha.iter().all(|a| a.is_finite())
            && self.gamma.is_finite()
    }
}

fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - (sd * (2.0 * PI).sqrt()).ln()
}

/// Observed log payments; rejects non-positive cells.
#[derive(Debug, Clone)]
struct Data {
    n: usize,
    /// (row, col, ln D) with 0-based coordinates.
    cells: Vec<(usize, usize, f64)>,
    log_premium: Vec<f64>,
}

impl Data {
    fn new(ds: &CompanyDataset) -> Result<Self> {
        let n = ds.n();
        if ds.premiums.len() != n {
            return Err(Error::Structural("premium vector length".into()));
        }
        if let Some(i) = ds.premiums.iter().position(|&p| !(p > 0.0)) {
            return Err(Error::Exposure { accident_year: i + 1 });
        }
        let mut cells = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..n {
                if observed(n, i, j) {
                    let d = ds.rectangle.get(i + 1, j + 1);
                    if !(d > 0.0) {
                        return Err(Error::Support { ay: i + 1, dy: j + 1 });
                    }
                    cells.push((i, j, d.ln()));
                }
            }
        }
        Ok(Self {
            n,
            cells,
            log_premium: ds.premiums.iter().map(|p| p.ln()).collect(),
        })
    }

    fn log_posterior(&self, p: &CsrParams) -> f64 {
        if !p.in_support() {
            return f64::NEG_INFINITY;
        }
        let n = self.n;
        let sigma = p.sigma();
        let decay: Vec<f64> = (0..n).map(|i| (1.0 - p.gamma).powi(i as i32)).collect();
        let mut lp = 0.0;
        for &(i, j, ld) in &self.cells {
            let mu = p.alpha[i] + p.beta[j] * decay[i];
            let z = (ld - mu) / sigma[j];
            // log-normal density at D, written in terms of ln D
            lp += -0.5 * z * z - ld - sigma[j].ln() - 0.5 * (2.0 * PI).ln();
        }
        for i in 0..n {
            lp += normal_logpdf(p.alpha[i], self.log_premium[i] + p.logelr, ALPHA_SD);
        }
        lp += normal_logpdf(p.gamma, 0.0, GAMMA_SD);
        lp -= (LOGELR_MAX - LOGELR_MIN).ln();
        lp -= (n - 1) as f64 * (2.0 * BETA_BOUND).ln();
        // U(0, 1) densities for a_i contribute zero
        lp
    }
}

/// Log posterior density, prior normalising constants included.
pub fn log_posterior(params: &CsrParams, ds: &CompanyDataset) -> Result<f64> {
    let data = Data::new(ds)?;
    if params.n() != data.n {
        return Err(Error::Argument("parameter and triangle sizes differ".into()));
    }
    Ok(data.log_posterior(params))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_draws: usize,
    pub burn_in: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_draws: 10_000,
            burn_in: 5_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsrPosterior {
    pub draws: Vec<CsrParams>,
    /// Post burn-in acceptance for the blocks α, β, (γ, logelr), a.
    pub acceptance_rates: [f64; 4],
    pub warning: Option<String>,
}

impl CsrPosterior {
    pub fn mean_params(&self) -> CsrParams {
        let k = self.draws.len() as f64;
        let first = &self.draws[0];
        let n = first.n();
        let mut m = CsrParams {
            alpha: vec![0.0; n],
            beta: vec![0.0; n],
            gamma: 0.0,
            logelr: 0.0,
            a: vec![0.0; n],
        };
        for d in &self.draws {
            for i in 0..n {
                m.alpha[i] += d.alpha[i] / k;
                m.beta[i] += d.beta[i] / k;
                m.a[i] += d.a[i] / k;
            }
            m.gamma += d.gamma / k;
            m.logelr += d.logelr / k;
        }
        m
    }

    /// Posterior mean of each `σ_j`.
    pub fn mean_sigma(&self) -> Vec<f64> {
        let k = self.draws.len() as f64;
        let mut s = vec![0.0; self.draws[0].n()];
        for d in &self.draws {
            for (acc, v) in s.iter_mut().zip(d.sigma()) {
                *acc += v / k;
            }
        }
        s
    }

    pub fn gamma_interval(&self, level: f64) -> (f64, f64) {
        let mut g: Vec<f64> = self.draws.iter().map(|d| d.gamma).collect();
        g.sort_by(f64::total_cmp);
        let tail = (1.0 - level) / 2.0;
        (
            crate::distribution::quantile_sorted(&g, tail),
            crate::distribution::quantile_sorted(&g, 1.0 - tail),
        )
    }
}

/// Coordinates of the flat sampling vector:
/// `[α_1..α_n, β_1..β_{n−1}, γ, logelr, logit a_1..logit a_n]`.
struct Layout {
    n: usize,
}

impl Layout {
    fn len(&self) -> usize {
        3 * self.n + 1
    }

    fn block(&self, k: usize) -> usize {
        let n = self.n;
        if k < n {
            0
        } else if k < 2 * n - 1 {
            1
        } else if k < 2 * n + 1 {
            2
        } else {
            3
        }
    }

    fn params(&self, x: &[f64]) -> CsrParams {
        let n = self.n;
        let mut beta = x[n..2 * n - 1].to_vec();
        beta.push(0.0);
        CsrParams {
            alpha: x[..n].to_vec(),
            beta,
            gamma: x[2 * n - 1],
            logelr: x[2 * n],
            a: x[2 * n + 1..].iter().map(|&l| logistic(l)).collect(),
        }
    }

    fn log_target(&self, data: &Data, x: &[f64]) -> f64 {
        let lp = data.log_posterior(&self.params(x));
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        // Jacobian of a = logistic(l)
        let jac: f64 = x[2 * self.n + 1..]
            .iter()
            .map(|&l| {
                let a = logistic(l);
                a.ln() + (1.0 - a).ln()
            })
            .sum();
        lp + jac
    }
}

fn logistic(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

fn logit(a: f64) -> f64 {
    (a / (1.0 - a)).ln()
}

/// Starting point from column means of log payments.
fn initial_state(data: &Data) -> Vec<f64> {
    let n = data.n;
    let mut row_last = vec![0.0; n];
    let mut col_sum = vec![0.0; n];
    let mut col_cnt = vec![0.0; n];
    for &(i, j, ld) in &data.cells {
        if i + j == n - 1 {
            row_last[i] = ld;
        }
        col_sum[j] += ld;
        col_cnt[j] += 1.0;
    }
    let last = col_sum[n - 1] / col_cnt[n - 1];
    let mut x = vec![0.0; 3 * n + 1];
    let mut beta = vec![0.0; n];
    for j in 0..n {
        beta[j] = (col_sum[j] / col_cnt[j] - last).clamp(-BETA_BOUND + 0.1, BETA_BOUND - 0.1);
    }
    // rows are levelled so that their latest observation fits exactly
    for i in 0..n {
        x[i] = row_last[i] - beta[n - 1 - i];
    }
    x[n..2 * n - 1].copy_from_slice(&beta[..n - 1]);
    x[2 * n - 1] = 0.0;
    let elr: f64 = (0..n).map(|i| x[i] - data.log_premium[i]).sum::<f64>() / n as f64;
    x[2 * n] = elr.clamp(LOGELR_MIN + 0.05, LOGELR_MAX - 0.05);
    for k in 0..n {
        x[2 * n + 1 + k] = logit(0.3 / n as f64);
    }
    x
}

pub fn sample_posterior(ds: &CompanyDataset, config: SamplerConfig, seed: u64) -> Result<CsrPosterior> {
    if config.n_draws == 0 {
        return Err(Error::Argument("n_draws must be at least 1".into()));
    }
    let data = Data::new(ds)?;
    let layout = Layout { n: data.n };
    let dim = layout.len();
    let mut x = initial_state(&data);
    let mut lp = layout.log_target(&data, &x);
    if !lp.is_finite() {
        return Err(Error::Estimation("initial CSR state outside support".into()));
    }
    let mut log_step = vec![(0.1f64).ln(); dim];
    for k in 0..dim {
        if layout.block(k) == 2 && k == 2 * data.n - 1 {
            log_step[k] = (0.01f64).ln();
        }
    }
    let mut r = rng(seed);
    let mut accepted = [0usize; 4];
    let mut proposed = [0usize; 4];
    let mut draws = Vec::with_capacity(config.n_draws);
    let total = config.burn_in + config.n_draws;
    for sweep in 0..total {
        let adapting = sweep < config.burn_in;
        for k in 0..dim {
            let old = x[k];
            let z: f64 = StandardNormal.sample(&mut r);
            x[k] = old + log_step[k].exp() * z;
            let cand = layout.log_target(&data, &x);
            let accept = cand.is_finite() && (cand - lp >= 0.0 || r.random::<f64>().ln() < cand - lp);
            if accept {
                lp = cand;
            } else {
                x[k] = old;
            }
            if adapting {
                let rate = 1.0 / (1.0 + sweep as f64).powf(0.6);
                let hit = if accept { 1.0 } else { 0.0 };
                log_step[k] += rate * (hit - TARGET_ACCEPTANCE);
            } else {
                let b = layout.block(k);
                proposed[b] += 1;
                accepted[b] += accept as usize;
            }
        }
        if !adapting {
            draws.push(layout.params(&x));
        }
    }
    let acceptance_rates = [0, 1, 2, 3].map(|b| accepted[b] as f64 / proposed[b].max(1) as f64);
    let warning = acceptance_rates
        .iter()
        .position(|&a| a < 0.01)
        .map(|b| format!("block {b} accepted {:.4} of proposals after adaptation", acceptance_rates[b]));
    Ok(CsrPosterior {
        draws,
        acceptance_rates,
        warning,
    })
}

/// Mean over draws of a log-normal sample per cell, divided by `P_i`.
pub fn csr_feature(posterior: &CsrPosterior, ds: &CompanyDataset, seed: u64) -> Result<Grid> {
    if posterior.draws.is_empty() {
        return Err(Error::Argument("empty posterior".into()));
    }
    let n = ds.n();
    let mut r = rng(seed);
    let mut acc = Grid::filled(n, 0.0);
    let k = posterior.draws.len() as f64;
    for d in &posterior.draws {
        let sigma = d.sigma();
        for ay in 1..=n {
            for dy in 1..=n {
                let z: f64 = StandardNormal.sample(&mut r);
                let v = (d.mu(ay, dy) + sigma[dy - 1] * z).exp() / ds.premiums[ay - 1];
                acc.set(ay, dy, acc.get(ay, dy) + v / k);
            }
        }
    }
    Ok(acc)
}

/// One run-off outcome per draw, with lower cells sampled from that draw.
pub fn csr_reserve_distribution(
    posterior: &CsrPosterior,
    ds: &CompanyDataset,
    seed: u64,
) -> Result<ReserveDistribution> {
    if posterior.draws.is_empty() {
        return Err(Error::Argument("empty posterior".into()));
    }
    let n = ds.n();
    let paid = ds.paid_to_date();
    let mut r = rng(seed);
    let mut lower = Grid::filled(n, f64::NAN);
    let outcomes = posterior
        .draws
        .iter()
        .map(|d| {
            let sigma = d.sigma();
            for ay in 2..=n {
                for dy in n + 2 - ay..=n {
                    let z: f64 = StandardNormal.sample(&mut r);
                    lower.set(ay, dy, (d.mu(ay, dy) + sigma[dy - 1] * z).exp());
                }
            }
            runoff_outcome(&paid, |ay, dy| lower.get(ay, dy))
        })
        .collect();
    Ok(ReserveDistribution::new(outcomes))
}
