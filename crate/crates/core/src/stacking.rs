//! Level-2 stacker: a network over the five level-1 outputs per cell.

use serde::{Deserialize, Serialize};

use crate::chain_ladder::DevFactors;
use crate::distribution::Outcome;
use crate::error::{Error, Result};
use crate::ml::level1::fit_ann_grid;
use crate::ml::{AnnConfig, NeuralNet, Regressor, Samples};
use crate::triangle::{runoff_outcome, split_of, CompanyDataset, Grid, Split};

pub const N_INPUTS: usize = 5;
pub const INPUT_NAMES: [&str; N_INPUTS] = ["rf", "gb", "ann", "cl", "csr"];

/// Level-1 outputs on the full rectangle (all on the `D*` scale except the
/// factors).
#[derive(Debug, Clone, Default)]
pub struct Level1Grids {
    pub rf: Option<Grid>,
    pub gb: Option<Grid>,
    pub ann: Option<Grid>,
    pub cl: Option<DevFactors>,
    pub csr: Option<Grid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackedRecord {
    pub ay: usize,
    pub dy: usize,
    pub inputs: [f64; N_INPUTS],
    /// Observed `D*` for upper-triangle cells.
    pub target: Option<f64>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedFeatures {
    pub n: usize,
    /// Row-major over the full rectangle.
    pub records: Vec<StackedRecord>,
}

impl StackedFeatures {
    pub fn record(&self, ay: usize, dy: usize) -> &StackedRecord {
        &self.records[(ay - 1) * self.n + dy - 1]
    }

    pub fn samples(&self, split: Split) -> Samples {
        let recs: Vec<&StackedRecord> = self.records.iter().filter(|r| r.split == split).collect();
        Samples::new(
            recs.iter().map(|r| r.inputs.to_vec()).collect(),
            recs.iter().map(|r| r.target.unwrap_or(f64::NAN)).collect(),
        )
    }
}

/// Positional pass-through of the five sources; targets come from the
/// dataset's observed scaled payments.
pub fn assemble_features(grids: &Level1Grids, ds: &CompanyDataset) -> Result<StackedFeatures> {
    let rf = grids.rf.as_ref().ok_or(Error::Assembly { source_name: "rf" })?;
    let gb = grids.gb.as_ref().ok_or(Error::Assembly { source_name: "gb" })?;
    let ann = grids.ann.as_ref().ok_or(Error::Assembly { source_name: "ann" })?;
    let cl = grids.cl.as_ref().ok_or(Error::Assembly { source_name: "cl" })?;
    let csr = grids.csr.as_ref().ok_or(Error::Assembly { source_name: "csr" })?;
    let n = ds.n();
    if [rf, gb, ann, csr].iter().any(|g| g.n() != n) || cl.len() < n {
        return Err(Error::Argument("level-1 outputs do not match the triangle size".into()));
    }
    let mut records = Vec::with_capacity(n * n);
    for ay in 1..=n {
        for dy in 1..=n {
            let split = split_of(n, ay, dy);
            let target = (split != Split::Lower).then(|| ds.rectangle.get(ay, dy) / ds.premiums[ay - 1]);
            records.push(StackedRecord {
                ay,
                dy,
                inputs: [rf.get(ay, dy), gb.get(ay, dy), ann.get(ay, dy), cl.factor(dy), csr.get(ay, dy)],
                target,
                split,
            });
        }
    }
    Ok(StackedFeatures { n, records })
}

#[derive(Debug, Clone)]
pub struct StackedModel {
    pub features: StackedFeatures,
    pub level2: NeuralNet,
    pub theta: f64,
    pub test_rmse: f64,
}

/// Trains the level-2 network at each dropout rate on the training cells
/// and keeps the rate with the lowest test-diagonal RMSE.
pub fn fit_level2(features: StackedFeatures, theta_grid: &[f64], ann: AnnConfig, seed: u64) -> Result<StackedModel> {
    let train = features.samples(Split::Train);
    let test = features.samples(Split::Test);
    let (level2, theta, test_rmse) = fit_ann_grid(&train, &test, theta_grid, ann, seed)?;
    Ok(StackedModel {
        features,
        level2,
        theta,
        test_rmse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectanglePrediction {
    /// Model output on every cell, `D*` scale.
    pub predicted: Grid,
    /// Observed `D*` on the upper triangle, model output below it.
    pub completed: Grid,
    /// Point run-off in monetary units.
    pub point: Outcome,
}

/// Completes a scaled rectangle from cell-wise predictions and reduces it to
/// a monetary point estimate using the observed diagonal as paid to date.
pub fn complete(ds: &CompanyDataset, predicted: Grid) -> RectanglePrediction {
    let n = ds.n();
    let completed = Grid::from_fn(n, |ay, dy| {
        if split_of(n, ay, dy) == Split::Lower {
            predicted.get(ay, dy)
        } else {
            ds.rectangle.get(ay, dy) / ds.premiums[ay - 1]
        }
    });
    let paid = ds.paid_to_date();
    let point = runoff_outcome(&paid, |ay, dy| completed.get(ay, dy) * ds.premiums[ay - 1]);
    RectanglePrediction {
        predicted,
        completed,
        point,
    }
}

/// Level-2 network evaluated on the assembled level-1 features of every cell.
pub fn predict_rectangle(model: &StackedModel, ds: &CompanyDataset) -> RectanglePrediction {
    let n = model.features.n;
    let predicted = Grid::from_fn(n, |ay, dy| model.level2.predict(&model.features.record(ay, dy).inputs));
    complete(ds, predicted)
}
