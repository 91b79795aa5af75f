//! Hyperparameter selection by test-diagonal RMSE.

use rayon::prelude::*;

use super::{rmse, Regressor, Samples};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GridResult<P, M> {
    pub params: P,
    pub model: M,
    pub test_rmse: f64,
    /// Test RMSE per grid point in grid order; `None` where training diverged.
    pub scores: Vec<Option<f64>>,
}

/// Fits every grid point on `train`, scores on `test`, keeps the first
/// minimiser. Divergent grid points are skipped with a warning; other
/// failures abort the search.
pub fn grid_search<P, M, F>(grid: &[P], train: &Samples, test: &Samples, fit: F) -> Result<GridResult<P, M>>
where
    P: Clone + Send + Sync + std::fmt::Debug,
    M: Regressor + Send,
    F: Fn(&P, &Samples) -> Result<M> + Send + Sync,
{
    if grid.is_empty() {
        return Err(Error::Argument("empty hyperparameter grid".into()));
    }
    let fitted: Vec<Result<(M, f64)>> = grid
        .par_iter()
        .map(|p| {
            let m = fit(p, train)?;
            let score = rmse(&m.predict_all(test), &test.y);
            Ok((m, score))
        })
        .collect();
    let mut best: Option<(usize, M, f64)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    let mut last_divergence = None;
    for (k, res) in fitted.into_iter().enumerate() {
        match res {
            Ok((m, score)) => {
                scores.push(Some(score));
                if best.as_ref().is_none_or(|(_, _, b)| score < *b) {
                    best = Some((k, m, score));
                }
            }
            Err(e @ Error::Divergence { .. }) => {
                log::warn!("grid point {:?} skipped: {e}", grid[k]);
                scores.push(None);
                last_divergence = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((k, model, test_rmse)) => Ok(GridResult {
            params: grid[k].clone(),
            model,
            test_rmse,
            scores,
        }),
        None => Err(last_divergence.expect("non-empty grid")),
    }
}
