//! Mack's distribution-free Chain Ladder model and its residual bootstrap.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::chain_ladder::{dev_factors, DevFactors};
use crate::distribution::{Outcome, ReserveDistribution};
use crate::error::{Error, Result};
use crate::seeds::stream_rng;
use crate::triangle::{runoff_outcome, Grid, LossTriangle, TriangleKind};

#[derive(Debug, Clone, PartialEq)]
pub struct MackFit {
    pub lambda: DevFactors,
    /// `sigma2[j - 1]` is the variance parameter of development year `j`;
    /// the entry for `j = 1` is unused and zero.
    pub sigma2: Vec<f64>,
}

impl MackFit {
    pub fn sigma2(&self, dy: usize) -> f64 {
        self.sigma2[dy - 1]
    }
}

pub fn fit_mack(triangle: &LossTriangle) -> Result<MackFit> {
    let cum = triangle.to_kind(TriangleKind::Cumulative);
    let n = cum.n();
    let lambda = dev_factors(&cum)?;
    let mut sigma2 = vec![0.0; n];
    for j in 1..n {
        let pairs = n - j;
        if pairs < 2 {
            continue;
        }
        let mut ss = 0.0;
        for i in 0..pairs {
            let prev = cum.at(i, j - 1);
            let cur = cum.at(i, j);
            if prev == 0.0 {
                if cur != 0.0 {
                    return Err(Error::Estimation(format!(
                        "accident year {} develops from zero at lag {}",
                        i + 1,
                        j + 1
                    )));
                }
                continue;
            }
            ss += prev * (cur / prev - lambda.factor(j + 1)).powi(2);
        }
        sigma2[j] = ss / (pairs - 1) as f64;
    }
    // the last development year has a single pair
    if n < 4 {
        return Err(Error::Estimation(format!(
            "cannot extrapolate the last variance parameter of a {n}x{n} triangle"
        )));
    }
    let (a, b) = (sigma2[n - 3], sigma2[n - 2]);
    sigma2[n - 1] = if a > 0.0 { (b * b / a).min(a.min(b)) } else { a.min(b) };
    Ok(MackFit { lambda, sigma2 })
}

#[derive(Debug, Clone, Copy)]
pub struct MackBootstrapOptions {
    pub process_error: bool,
}

impl Default for MackBootstrapOptions {
    fn default() -> Self {
        Self {
            process_error: true,
        }
    }
}

pub fn mack_bootstrap(
    fit: &MackFit,
    triangle: &LossTriangle,
    n_sims: usize,
    seed: u64,
) -> Result<ReserveDistribution> {
    mack_bootstrap_with(fit, triangle, n_sims, seed, MackBootstrapOptions::default())
}

/// Resamples scaled age-to-age residuals
/// `r = sqrt(D_{i,j-1}) (F_ij − λ_j) / σ_j`, rebuilds the factors, and runs
/// the latest diagonal forward with normal process noise of variance
/// `σ²_j |D_{i,j-1}|`.
pub fn mack_bootstrap_with(
    fit: &MackFit,
    triangle: &LossTriangle,
    n_sims: usize,
    seed: u64,
    opts: MackBootstrapOptions,
) -> Result<ReserveDistribution> {
    if n_sims == 0 {
        return Err(Error::Argument("n_sims must be at least 1".into()));
    }
    let cum = triangle.to_kind(TriangleKind::Cumulative);
    let n = cum.n();
    if fit.sigma2.len() != n {
        return Err(Error::Argument("fit and triangle sizes differ".into()));
    }
    let mut pool = Vec::new();
    for j in 1..n {
        let pairs = n - j;
        let s2 = fit.sigma2[j];
        if pairs < 2 || s2 <= 0.0 {
            continue;
        }
        let adj = (pairs as f64 / (pairs - 1) as f64).sqrt();
        let lam = fit.lambda.factor(j + 1);
        for i in 0..pairs {
            let prev = cum.at(i, j - 1);
            if prev > 0.0 {
                let f = cum.at(i, j) / prev;
                pool.push(adj * prev.sqrt() * (f - lam) / s2.sqrt());
            }
        }
    }
    // only the volume-weighted residual sum vanishes; centering the pool
    // keeps the resampled factors unbiased
    if !pool.is_empty() {
        let mean = pool.iter().sum::<f64>() / pool.len() as f64;
        pool.iter_mut().for_each(|r| *r -= mean);
    }
    let outcomes = (0..n_sims)
        .into_par_iter()
        .map(|s| replicate(fit, &cum, &pool, seed, s as u64, opts))
        .collect::<Vec<_>>();
    Ok(ReserveDistribution::new(outcomes))
}

fn replicate(
    fit: &MackFit,
    cum: &LossTriangle,
    pool: &[f64],
    seed: u64,
    stream: u64,
    opts: MackBootstrapOptions,
) -> Outcome {
    let n = cum.n();
    let mut rng = stream_rng(seed, stream);
    let mut lambda = vec![1.0; n];
    for (j, lam_out) in lambda.iter_mut().enumerate().skip(1) {
        let lam = fit.lambda.factor(j + 1);
        let sd = fit.sigma2[j].sqrt();
        if pool.is_empty() || sd == 0.0 {
            *lam_out = lam;
            continue;
        }
        // λ* = Σ D F* / Σ D with F* = λ + r* σ / sqrt(D)
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n - j {
            let prev = cum.at(i, j - 1);
            if prev <= 0.0 {
                continue;
            }
            let r = pool[rng.random_range(0..pool.len())];
            num += prev * lam + r * sd * prev.sqrt();
            den += prev;
        }
        *lam_out = if den > 0.0 { num / den } else { lam };
    }
    let paid = cum.latest_diagonal();
    let mut lower = Grid::filled(n, f64::NAN);
    for i in 1..n {
        let mut prev = paid[i];
        for j in n - i..n {
            let mut next = lambda[j] * prev;
            if opts.process_error {
                let z: f64 = StandardNormal.sample(&mut rng);
                next += z * (fit.sigma2[j] * prev.abs()).sqrt();
            }
            lower.set(i + 1, j + 1, next);
            prev = next;
        }
    }
    runoff_outcome(&paid, |ay, dy| lower.get(ay, dy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_ladder;
    use crate::distribution::Quantity;
    use crate::stochastic::fixtures::taylor_ashe;

    /// Analytic mean squared error of prediction of the total reserve, written
    /// independently from the closed-form Mack formulas.
    fn mack_msep(rows: &[Vec<f64>]) -> f64 {
        let n = rows.len();
        let mut f = vec![1.0; n];
        let mut colsum = vec![0.0; n];
        for k in 1..n {
            let (mut a, mut b) = (0.0, 0.0);
            for r in rows.iter().take(n - k) {
                a += r[k];
                b += r[k - 1];
            }
            f[k] = a / b;
            colsum[k - 1] = b;
        }
        let mut s2 = vec![0.0; n];
        for k in 1..n - 1 {
            let m = n - k;
            let mut acc = 0.0;
            for r in rows.iter().take(m) {
                acc += r[k - 1] * (r[k] / r[k - 1] - f[k]).powi(2);
            }
            s2[k] = acc / (m - 1) as f64;
        }
        s2[n - 1] = (s2[n - 2].powi(2) / s2[n - 3]).min(s2[n - 3].min(s2[n - 2]));
        let mut ult = vec![0.0; n];
        let mut full = vec![vec![0.0; n]; n];
        for (i, r) in rows.iter().enumerate() {
            for k in 0..n {
                full[i][k] = if k < r.len() { r[k] } else { full[i][k - 1] * f[k] };
            }
            ult[i] = full[i][n - 1];
        }
        let mut total = 0.0;
        for i in 1..n {
            let first = n - i;
            let mut own = 0.0;
            let mut shared = 0.0;
            for k in first..n {
                let w = s2[k] / (f[k] * f[k]);
                own += w * (1.0 / full[i][k - 1] + 1.0 / colsum[k - 1]);
                shared += 2.0 * w / colsum[k - 1];
            }
            let later: f64 = ult[i + 1..].iter().sum();
            total += ult[i] * ult[i] * own + ult[i] * later * shared;
        }
        total
    }

    fn cumulative_rows(tri: &LossTriangle) -> Vec<Vec<f64>> {
        let c = tri.to_kind(TriangleKind::Cumulative);
        (0..c.n()).map(|i| c.row(i).to_vec()).collect()
    }

    #[test]
    fn taylor_ashe_total_standard_error() {
        let rows = cumulative_rows(&taylor_ashe());
        // Mack's published total standard error for this triangle: 2,447,095
        let se = mack_msep(&rows).sqrt();
        assert!((se - 2_447_095.0).abs() / 2_447_095.0 < 1e-3, "{se}");
    }

    #[test]
    fn sigma_estimates() {
        let fit = fit_mack(&taylor_ashe()).unwrap();
        // published as 160 on a thousands scale
        assert!((fit.sigma2(2) - 160_280.0).abs() / 160_280.0 < 1e-2, "{}", fit.sigma2(2));
        let n = 10;
        let (a, b) = (fit.sigma2(n - 2), fit.sigma2(n - 1));
        assert!((fit.sigma2(n) - (b * b / a).min(a.min(b))).abs() < 1e-9);
    }

    #[test]
    fn small_triangle_cannot_extrapolate() {
        let t = LossTriangle::from_rows(
            &[vec![100.0, 150.0, 180.0], vec![110.0, 165.0], vec![120.0]],
            TriangleKind::Cumulative,
        )
        .unwrap();
        assert!(matches!(fit_mack(&t), Err(Error::Estimation(_))));
    }

    #[test]
    fn exact_ratios_give_degenerate_distribution() {
        let lam = [1.0, 2.0, 1.4, 1.1, 1.02];
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                let mut v = 500.0 + 100.0 * i as f64;
                (0..5 - i)
                    .map(|j| {
                        if j > 0 {
                            v *= lam[j];
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let t = LossTriangle::from_rows(&rows, TriangleKind::Cumulative).unwrap();
        let fit = fit_mack(&t).unwrap();
        assert!(fit.sigma2.iter().all(|s| s.abs() < 1e-20));
        let d = mack_bootstrap(&fit, &t, 20, 3).unwrap();
        let cl = chain_ladder::reserve(&t).unwrap();
        for o in d.outcomes() {
            assert!((o.reserve - cl).abs() < 1e-6 * cl);
        }
    }

    #[test]
    fn bootstrap_matches_analytic_msep() {
        let tri = taylor_ashe();
        let fit = fit_mack(&tri).unwrap();
        let d = mack_bootstrap(&fit, &tri, 10_000, 11).unwrap();
        let cl = chain_ladder::reserve(&tri).unwrap();
        let mean = d.mean(Quantity::Reserve);
        assert!((mean - cl).abs() / cl < 0.02, "mean {mean} vs {cl}");
        let oracle = mack_msep(&cumulative_rows(&tri)).sqrt();
        let sd = d.sd(Quantity::Reserve);
        assert!((sd - oracle).abs() / oracle < 0.15, "sd {sd} vs {oracle}");
        assert_eq!(d, mack_bootstrap(&fit, &tri, 10_000, 11).unwrap());
    }

    #[test]
    fn zero_sims_rejected() {
        let tri = taylor_ashe();
        let fit = fit_mack(&tri).unwrap();
        assert!(matches!(mack_bootstrap(&fit, &tri, 0, 1), Err(Error::Argument(_))));
    }
}
