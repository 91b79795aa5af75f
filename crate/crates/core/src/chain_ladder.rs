//! Deterministic Chain Ladder on cumulative triangles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::triangle::{Grid, LossTriangle, TriangleKind};

/// Age-to-age factors indexed by development year; `factor(1)` is 1 by
/// convention and `factor(j)` maps lag `j − 1` to lag `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevFactors {
    lambda: Vec<f64>,
}

impl DevFactors {
    pub fn new(mut lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::Argument("empty factor vector".into()));
        }
        if let Some(j) = lambda.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("factor {} is not finite", j + 1)));
        }
        lambda[0] = 1.0;
        Ok(Self { lambda })
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Factor for 1-based development year `dy`.
    pub fn factor(&self, dy: usize) -> f64 {
        self.lambda[dy - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambda
    }

    /// Product of factors for development years `from + 1 ..= to`.
    pub fn cumulative(&self, from: usize, to: usize) -> f64 {
        (from + 1..=to).map(|j| self.factor(j)).product()
    }
}

/// Volume-weighted factors using every accident year observed at both lags.
pub fn dev_factors(triangle: &LossTriangle) -> Result<DevFactors> {
    let tri = triangle.to_kind(TriangleKind::Cumulative);
    let n = tri.n();
    let mut lambda = vec![1.0; n];
    for j in 1..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n - j {
            num += tri.at(i, j);
            den += tri.at(i, j - 1);
        }
        if den == 0.0 {
            return Err(Error::DegenerateColumn { lag: j + 1 });
        }
        lambda[j] = num / den;
    }
    DevFactors::new(lambda)
}

/// Completes the rectangle: observed cells are copied, each lower cell is
/// the row's latest value developed by the intervening factors.
pub fn project(triangle: &LossTriangle, factors: &DevFactors) -> Result<Grid> {
    let tri = triangle.to_kind(TriangleKind::Cumulative);
    let n = tri.n();
    if factors.len() < n {
        return Err(Error::Argument(format!(
            "need {n} development factors, got {}",
            factors.len()
        )));
    }
    let mut grid = Grid::filled(n, 0.0);
    for i in 0..n {
        let diag = n - i;
        let mut value = 0.0;
        for j in 0..n {
            if j < diag {
                value = tri.at(i, j);
            } else {
                value *= factors.factor(j + 1);
            }
            grid.set(i + 1, j + 1, value);
        }
    }
    Ok(grid)
}

/// Deterministic reserve: projected ultimate minus paid to date, summed.
pub fn reserve(triangle: &LossTriangle) -> Result<f64> {
    let tri = triangle.to_kind(TriangleKind::Cumulative);
    let f = dev_factors(&tri)?;
    let g = project(&tri, &f)?;
    let n = tri.n();
    Ok((1..=n).map(|ay| g.get(ay, n) - g.get(ay, n + 1 - ay)).sum())
}
