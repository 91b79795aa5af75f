//! Random forest regression: bootstrap rows, random feature subset per split.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, FeatureSampler, RegressionTree};
use super::{Regressor, Samples};
use crate::error::{Error, Result};
use crate::seeds::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features considered at each split (`N`).
    pub n_features: usize,
    /// Minimum observations per leaf (`Obs_RF`).
    pub min_leaf: usize,
    /// Resample rows with replacement for each tree; off only in tests.
    pub bootstrap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub params: ForestParams,
}

impl Regressor for ForestModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn fit_rf(samples: &Samples, params: ForestParams, seed: u64) -> Result<ForestModel> {
    if params.n_trees == 0 {
        return Err(Error::Argument("forest needs at least one tree".into()));
    }
    if params.n_features == 0 || params.n_features > samples.dim() {
        return Err(Error::Argument(format!(
            "cannot sample {} of {} features",
            params.n_features,
            samples.dim()
        )));
    }
    if samples.is_empty() {
        return Err(Error::Argument("no training samples".into()));
    }
    let m = samples.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..m).map(|_| rng.random_range(0..m)).collect()
            } else {
                (0..m).collect()
            };
            let sampler = FeatureSampler {
                rng: &mut rng,
                n_features: params.n_features,
            };
            grow(samples, &rows, &samples.y, params.min_leaf, Some(sampler))
        })
        .collect();
    Ok(ForestModel { trees, params })
}
