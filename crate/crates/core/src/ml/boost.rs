//! Stage-wise gradient boosting of regression trees under squared loss.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{grow, RegressionTree};
use super::{Regressor, Samples};
use crate::error::{Error, Result};
use crate::seeds::rng;

pub const DEFAULT_LEARNING_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_trees: usize,
    /// Minimum observations per leaf (`Obs_GB`).
    pub min_leaf: usize,
    pub learning_rate: f64,
    /// Fraction of rows drawn without replacement for each tree.
    pub subsample: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub initial_value: f64,
    pub trees: Vec<RegressionTree>,
    pub params: BoostParams,
}

impl BoostModel {
    /// Prediction using only the first `stages` trees.
    pub fn predict_staged(&self, x: &[f64], stages: usize) -> f64 {
        self.initial_value
            + self.params.learning_rate * self.trees[..stages].iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

impl Regressor for BoostModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.predict_staged(x, self.trees.len())
    }
}

pub fn fit_gb(samples: &Samples, params: BoostParams, seed: u64) -> Result<BoostModel> {
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::Argument("boosting needs at least one tree and min_leaf >= 1".into()));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(Error::Argument(format!("subsample fraction {} outside (0, 1]", params.subsample)));
    }
    if samples.is_empty() {
        return Err(Error::Argument("no training samples".into()));
    }
    let m = samples.len();
    let initial_value = samples.y.iter().sum::<f64>() / m as f64;
    let mut current = vec![initial_value; m];
    let take = ((params.subsample * m as f64).round() as usize).clamp(1, m);
    let mut r = rng(seed);
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut residual = vec![0.0; m];
    for _ in 0..params.n_trees {
        for i in 0..m {
            residual[i] = samples.y[i] - current[i];
        }
        let rows: Vec<usize> = if take == m {
            (0..m).collect()
        } else {
            let mut v = sample(&mut r, m, take).into_vec();
            v.sort_unstable();
            v
        };
        let tree = grow::<rand_chacha::ChaCha8Rng>(samples, &rows, &residual, params.min_leaf, None);
        for i in 0..m {
            current[i] += params.learning_rate * tree.predict(&samples.x[i]);
        }
        trees.push(tree);
    }
    Ok(BoostModel {
        initial_value,
        trees,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::rmse;

    fn toy() -> Samples {
        let x: Vec<Vec<f64>> = (0..24)
            .map(|i| vec![(i % 6) as f64 / 5.0, (i / 6) as f64 / 3.0])
            .collect();
        let y = x.iter().map(|r| 1.0 + r[0] * r[0] - 0.5 * r[1]).collect();
        Samples::new(x, y)
    }

    fn params(n_trees: usize, subsample: f64) -> BoostParams {
        BoostParams {
            n_trees,
            min_leaf: 2,
            learning_rate: DEFAULT_LEARNING_RATE,
            subsample,
        }
    }

    #[test]
    fn single_stage_telescopes() {
        let s = toy();
        let g = fit_gb(&s, params(1, 0.5), 3).unwrap();
        let mean = s.y.iter().sum::<f64>() / s.len() as f64;
        assert_eq!(g.initial_value, mean);
        for x in &s.x {
            assert_eq!(g.predict(x), mean + 0.01 * g.trees[0].predict(x));
        }
    }

    #[test]
    fn full_sample_training_error_never_increases() {
        let s = toy();
        let g = fit_gb(&s, params(200, 1.0), 1).unwrap();
        let mut prev = f64::INFINITY;
        for b in 0..=200 {
            let pred: Vec<f64> = s.x.iter().map(|x| g.predict_staged(x, b)).collect();
            let e = rmse(&pred, &s.y);
            assert!(e <= prev + 1e-12, "stage {b}: {e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn each_stage_bounded_by_its_residual_range() {
        let s = toy();
        let g = fit_gb(&s, params(50, 0.5), 9).unwrap();
        let mut current = vec![g.initial_value; s.len()];
        for tree in &g.trees {
            let res: Vec<f64> = s.y.iter().zip(&current).map(|(y, c)| y - c).collect();
            let (lo, hi) = res.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            for (i, x) in s.x.iter().enumerate() {
                let t = tree.predict(x);
                assert!(t >= lo - 1e-12 && t <= hi + 1e-12);
                current[i] += 0.01 * t;
            }
        }
    }

    #[test]
    fn deterministic() {
        let s = toy();
        assert_eq!(fit_gb(&s, params(20, 0.5), 4).unwrap(), fit_gb(&s, params(20, 0.5), 4).unwrap());
    }
}
