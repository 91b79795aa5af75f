//! Grid-searched level-1 learners for one triangle.

use serde::{Deserialize, Serialize};

use super::{
    fit_ann, fit_gb, fit_rf, grid_search, AnnConfig, BoostModel, BoostParams, ForestModel, ForestParams,
    NeuralNet, Regressor, Samples,
};
use crate::error::Result;
use crate::seeds::derive_seed;
use crate::triangle::{scaled_coords, CellFeatures, Grid, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Level1Config {
    pub rf_trees: usize,
    pub gb_trees: usize,
    pub gb_subsample: f64,
    pub gb_learning_rate: f64,
    pub obs_rf: Vec<usize>,
    pub n_features: Vec<usize>,
    pub obs_gb: Vec<usize>,
    pub theta: Vec<f64>,
    pub ann: AnnConfig,
}

pub fn default_theta_grid() -> Vec<f64> {
    (0..=6).map(|k| k as f64 * 0.05).collect()
}

impl Default for Level1Config {
    fn default() -> Self {
        Self {
            rf_trees: 500,
            gb_trees: 500,
            gb_subsample: 0.5,
            gb_learning_rate: super::boost::DEFAULT_LEARNING_RATE,
            obs_rf: (1..=5).collect(),
            n_features: vec![1, 2],
            obs_gb: (1..=8).collect(),
            theta: default_theta_grid(),
            ann: AnnConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Level1Models {
    pub rf: ForestModel,
    pub gb: BoostModel,
    pub ann: NeuralNet,
    pub obs_rf: usize,
    pub n_features: usize,
    pub obs_gb: usize,
    pub theta: f64,
    pub test_rmse: [f64; 3],
}

pub fn train_test(features: &[CellFeatures]) -> (Samples, Samples) {
    (
        Samples::from_features(features, Split::Train),
        Samples::from_features(features, Split::Test),
    )
}

pub fn fit_rf_grid(train: &Samples, test: &Samples, cfg: &Level1Config, seed: u64) -> Result<(ForestModel, (usize, usize), f64)> {
    let grid: Vec<(usize, usize)> = cfg
        .obs_rf
        .iter()
        .flat_map(|&o| cfg.n_features.iter().map(move |&n| (o, n)))
        .collect();
    let s = derive_seed(seed, &["rf"]);
    let r = grid_search(&grid, train, test, |&(min_leaf, n_features), tr| {
        fit_rf(
            tr,
            ForestParams {
                n_trees: cfg.rf_trees,
                n_features,
                min_leaf,
                bootstrap: true,
            },
            s,
        )
    })?;
    Ok((r.model, r.params, r.test_rmse))
}

pub fn fit_gb_grid(train: &Samples, test: &Samples, cfg: &Level1Config, seed: u64) -> Result<(BoostModel, usize, f64)> {
    let s = derive_seed(seed, &["gb"]);
    let r = grid_search(&cfg.obs_gb, train, test, |&min_leaf, tr| {
        fit_gb(
            tr,
            BoostParams {
                n_trees: cfg.gb_trees,
                min_leaf,
                learning_rate: cfg.gb_learning_rate,
                subsample: cfg.gb_subsample,
            },
            s,
        )
    })?;
    Ok((r.model, r.params, r.test_rmse))
}

/// Network on any input width; shared by the level-1 learner, the
/// standalone benchmark and the level-2 stacker.
pub fn fit_ann_grid(
    train: &Samples,
    test: &Samples,
    theta: &[f64],
    ann: AnnConfig,
    seed: u64,
) -> Result<(NeuralNet, f64, f64)> {
    let r = grid_search(theta, train, test, |&dropout, tr| fit_ann(tr, AnnConfig { dropout, ..ann }, seed))?;
    Ok((r.model, r.params, r.test_rmse))
}

pub fn fit_level1(features: &[CellFeatures], cfg: &Level1Config, seed: u64) -> Result<Level1Models> {
    let (train, test) = train_test(features);
    let ann_seed = derive_seed(seed, &["ann"]);
    let ((rf, gb), ann) = rayon::join(
        || rayon::join(|| fit_rf_grid(&train, &test, cfg, seed), || fit_gb_grid(&train, &test, cfg, seed)),
        || fit_ann_grid(&train, &test, &cfg.theta, cfg.ann, ann_seed),
    );
    let (rf, (obs_rf, n_features), rf_err) = rf?;
    let (gb, obs_gb, gb_err) = gb?;
    let (ann, theta, ann_err) = ann?;
    Ok(Level1Models {
        rf,
        gb,
        ann,
        obs_rf,
        n_features,
        obs_gb,
        theta,
        test_rmse: [rf_err, gb_err, ann_err],
    })
}

/// Evaluates a level-1 model on every cell of the n×n rectangle.
pub fn predict_grid(model: &impl Regressor, n: usize) -> Grid {
    Grid::from_fn(n, |ay, dy| {
        let (a, d) = scaled_coords(n, ay, dy);
        model.predict(&[a, d])
    })
}
