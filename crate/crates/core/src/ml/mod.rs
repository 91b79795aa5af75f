//! Level-1 learners on scaled (accident year, development year) coordinates.

pub mod ann;
pub mod boost;
pub mod forest;
pub mod grid;
pub mod level1;
pub mod tree;

pub use ann::{fit_ann, AdamConfig, AdamState, AnnConfig, NeuralNet};
pub use boost::{fit_gb, BoostModel, BoostParams};
pub use forest::{fit_rf, ForestModel, ForestParams};
pub use grid::{grid_search, GridResult};
pub use tree::{fit_tree, RegressionTree};

use crate::triangle::{CellFeatures, Split};

/// Design matrix and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Samples {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len(), "inputs and targets differ in length");
        if let Some(first) = x.first() {
            assert!(x.iter().all(|r| r.len() == first.len()), "ragged inputs");
        }
        Self { x, y }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// `(AY*, DY*) → D*` for the cells of one split.
    pub fn from_features(features: &[CellFeatures], split: Split) -> Self {
        let cells: Vec<&CellFeatures> = features.iter().filter(|c| c.split == split).collect();
        Self::new(
            cells.iter().map(|c| vec![c.ay_star, c.dy_star]).collect(),
            cells.iter().map(|c| c.d_star).collect(),
        )
    }
}

pub trait Regressor {
    fn predict(&self, x: &[f64]) -> f64;

    fn predict_all(&self, samples: &Samples) -> Vec<f64> {
        samples.x.iter().map(|x| self.predict(x)).collect()
    }
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> f64 {
    let n = pred.len() as f64;
    (pred.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum::<f64>() / n).sqrt()
}
