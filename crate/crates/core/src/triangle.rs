//! Loss triangles, company datasets, exposure-scaled cell features and the
//! realised quantities (reserve, next-year payments, ultimate) that models are
//! scored against.
//!
//! Public coordinates are 1-based: accident year `ay` and development year
//! `dy` both run over `1..=n`, and cell `(ay, dy)` is observed exactly when
//! `ay + dy <= n + 1`. Storage is row-major and 0-based.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distribution::Outcome;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Line {
    CA,
    PA,
    WC,
    OL,
}

impl Line {
    pub const ALL: [Line; 4] = [Line::CA, Line::PA, Line::WC, Line::OL];

    /// Column-name suffix used by the CAS loss reserve database files.
    pub fn cas_suffix(self) -> &'static str {
        match self {
            Line::CA => "C",
            Line::PA => "B",
            Line::WC => "D",
            Line::OL => "h1",
        }
    }

    pub fn cas_file_stem(self) -> &'static str {
        match self {
            Line::CA => "comauto",
            Line::PA => "ppauto",
            Line::WC => "wkcomp",
            Line::OL => "othliab",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Line::CA => "CA",
            Line::PA => "PA",
            Line::WC => "WC",
            Line::OL => "OL",
        }
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Line {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CA" | "COMAUTO" => Ok(Line::CA),
            "PA" | "PPAUTO" => Ok(Line::PA),
            "WC" | "WKCOMP" => Ok(Line::WC),
            "OL" | "OTHLIAB" => Ok(Line::OL),
            other => Err(Error::Argument(format!("unknown line of business `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriangleKind {
    Cumulative,
    Incremental,
}

#[inline]
pub(crate) fn observed(n: usize, i: usize, j: usize) -> bool {
    i + j < n
}

/// Square array of payments whose upper triangle is observed.
/// Cells below the latest diagonal are stored as zero and never read.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTriangle {
    n: usize,
    cells: Vec<f64>,
    kind: TriangleKind,
}

impl LossTriangle {
    pub fn new(n: usize, cells: Vec<f64>, kind: TriangleKind) -> Result<Self> {
        if n < 2 {
            return Err(Error::Structural(format!("triangle side must be at least 2, got {n}")));
        }
        if cells.len() != n * n {
            return Err(Error::Structural(format!(
                "expected {} cells for a {n}x{n} triangle, got {}",
                n * n,
                cells.len()
            )));
        }
        let mut cells = cells;
        for i in 0..n {
            for j in 0..n {
                let v = &mut cells[i * n + j];
                if observed(n, i, j) {
                    if !v.is_finite() {
                        return Err(Error::Structural(format!(
                            "observed cell ({}, {}) is not finite",
                            i + 1,
                            j + 1
                        )));
                    }
                } else {
                    *v = 0.0;
                }
            }
        }
        Ok(Self { n, cells, kind })
    }

    /// Builds a triangle from rows; row `i` (0-based) must hold at least
    /// `n − i` values, and anything past the latest diagonal is ignored.
    pub fn from_rows(rows: &[Vec<f64>], kind: TriangleKind) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::Structural(format!("triangle side must be at least 2, got {n}")));
        }
        let mut cells = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() < n - i || row.len() > n {
                return Err(Error::Structural(format!(
                    "row {} has {} values; expected between {} and {n}",
                    i + 1,
                    row.len(),
                    n - i
                )));
            }
            for j in 0..n - i {
                cells[i * n + j] = row[j];
            }
        }
        Self::new(n, cells, kind)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> TriangleKind {
        self.kind
    }

    pub fn is_observed(&self, ay: usize, dy: usize) -> bool {
        ay >= 1 && dy >= 1 && ay <= self.n && dy <= self.n && observed(self.n, ay - 1, dy - 1)
    }

    /// Observed value at 1-based `(ay, dy)`; `None` below the latest diagonal.
    pub fn get(&self, ay: usize, dy: usize) -> Option<f64> {
        self.is_observed(ay, dy)
            .then(|| self.cells[(ay - 1) * self.n + dy - 1])
    }

    #[inline]
    pub(crate) fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.n + j]
    }

    /// Observed prefix of 0-based row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.cells[i * self.n..i * self.n + self.n - i]
    }

    /// Values on the latest diagonal, ordered by accident year.
    pub fn latest_diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.at(i, self.n - 1 - i)).collect()
    }

    pub fn observed_mask(&self) -> Vec<bool> {
        (0..self.n * self.n)
            .map(|k| observed(self.n, k / self.n, k % self.n))
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            cells: self.cells.iter().map(|v| v * factor).collect(),
            kind: self.kind,
        }
    }

    /// Same triangle in the requested representation.
    pub fn to_kind(&self, kind: TriangleKind) -> Self {
        convert(self, kind)
    }
}

/// Switches between cumulative and incremental form. Cumulative values are
/// rebuilt by summing increments along each row, so amounts on an integer
/// grid round-trip exactly.
pub fn convert(triangle: &LossTriangle, to: TriangleKind) -> LossTriangle {
    let n = triangle.n;
    if triangle.kind == to {
        return triangle.clone();
    }
    let mut cells = vec![0.0; n * n];
    for i in 0..n {
        let row = triangle.row(i);
        match to {
            TriangleKind::Incremental => {
                for j in 0..row.len() {
                    cells[i * n + j] = if j == 0 { row[0] } else { row[j] - row[j - 1] };
                }
            }
            TriangleKind::Cumulative => {
                let mut acc = 0.0;
                for j in 0..row.len() {
                    acc += row[j];
                    cells[i * n + j] = acc;
                }
            }
        }
    }
    LossTriangle { n, cells, kind: to }
}

/// Dense `n × n` array of reals (completed rectangles, prediction grids).
/// Unknown cells hold `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    cells: Vec<f64>,
}

impl Grid {
    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            n,
            cells: vec![value; n * n],
        }
    }

    pub fn from_cells(n: usize, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != n * n {
            return Err(Error::Structural(format!(
                "expected {} cells for a {n}x{n} grid, got {}",
                n * n,
                cells.len()
            )));
        }
        Ok(Self { n, cells })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut cells = Vec::with_capacity(n * n);
        for ay in 1..=n {
            for dy in 1..=n {
                cells.push(f(ay, dy));
            }
        }
        Self { n, cells }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Value at 1-based `(ay, dy)`.
    pub fn get(&self, ay: usize, dy: usize) -> f64 {
        self.cells[(ay - 1) * self.n + dy - 1]
    }

    pub fn set(&mut self, ay: usize, dy: usize, value: f64) {
        self.cells[(ay - 1) * self.n + dy - 1] = value;
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn column(&self, dy: usize) -> Vec<f64> {
        (1..=self.n).map(|ay| self.get(ay, dy)).collect()
    }
}

/// One insurer and line of business: the full paid rectangle (lower cells
/// may be `NaN` when the run-off is not known), net premiums and identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyDataset {
    pub group_id: String,
    pub group_name: String,
    pub line: Line,
    pub rectangle: Grid,
    pub premiums: Vec<f64>,
    pub calendar_origin: i32,
}

impl CompanyDataset {
    pub fn n(&self) -> usize {
        self.rectangle.n()
    }

    /// Checks positive premiums, a finite non-negative upper triangle and
    /// non-negative known lower cells.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 2 {
            return Err(Error::Structural(format!("dataset side must be at least 2, got {n}")));
        }
        if self.premiums.len() != n {
            return Err(Error::Structural(format!(
                "expected {n} premiums, got {}",
                self.premiums.len()
            )));
        }
        for (i, &p) in self.premiums.iter().enumerate() {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Exposure { accident_year: i + 1 });
            }
        }
        for ay in 1..=n {
            for dy in 1..=n {
                let v = self.rectangle.get(ay, dy);
                let upper = ay + dy <= n + 1;
                if upper && !v.is_finite() {
                    return Err(Error::IncompleteData(format!(
                        "group {}: observed cell ({ay}, {dy}) missing",
                        self.group_id
                    )));
                }
                if v < 0.0 {
                    return Err(Error::Structural(format!(
                        "group {}: negative cumulative payment at ({ay}, {dy})",
                        self.group_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when every lower-triangle cell is known.
    pub fn has_full_rectangle(&self) -> bool {
        self.rectangle.cells().iter().all(|v| v.is_finite())
    }

    pub fn upper_triangle(&self) -> LossTriangle {
        let n = self.n();
        let cells = (0..n * n)
            .map(|k| {
                if observed(n, k / n, k % n) {
                    self.rectangle.cells()[k]
                } else {
                    0.0
                }
            })
            .collect();
        LossTriangle {
            n,
            cells,
            kind: TriangleKind::Cumulative,
        }
    }

    /// Upper triangle divided row-wise by net premium (`D* = D / P`).
    pub fn scaled_upper_triangle(&self) -> Result<LossTriangle> {
        self.check_premiums()?;
        let n = self.n();
        let mut tri = self.upper_triangle();
        for i in 0..n {
            for j in 0..n - i {
                tri.cells[i * n + j] /= self.premiums[i];
            }
        }
        Ok(tri)
    }

    /// Cumulative paid to date per accident year (the latest diagonal).
    pub fn paid_to_date(&self) -> Vec<f64> {
        let n = self.n();
        (1..=n).map(|ay| self.rectangle.get(ay, n + 1 - ay)).collect()
    }

    fn check_premiums(&self) -> Result<()> {
        match self.premiums.iter().position(|&p| !(p > 0.0)) {
            Some(i) => Err(Error::Exposure { accident_year: i + 1 }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Lower,
}

pub fn split_of(n: usize, ay: usize, dy: usize) -> Split {
    match (ay + dy).cmp(&(n + 1)) {
        std::cmp::Ordering::Less => Split::Train,
        std::cmp::Ordering::Equal => Split::Test,
        std::cmp::Ordering::Greater => Split::Lower,
    }
}

/// Scaled coordinates `((ay − 1)/(n − 1), (dy − 1)/(n − 1))`.
pub fn scaled_coords(n: usize, ay: usize, dy: usize) -> (f64, f64) {
    let d = (n - 1) as f64;
    ((ay - 1) as f64 / d, (dy - 1) as f64 / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellFeatures {
    pub ay: usize,
    pub dy: usize,
    pub ay_star: f64,
    pub dy_star: f64,
    pub d_star: f64,
    pub split: Split,
}

/// Feature records for the observed upper triangle in row-major order; the
/// latest diagonal is the test split.
pub fn build_features(ds: &CompanyDataset) -> Result<Vec<CellFeatures>> {
    ds.check_premiums()?;
    let n = ds.n();
    if n < 2 {
        return Err(Error::Structural(format!("dataset side must be at least 2, got {n}")));
    }
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for ay in 1..=n {
        for dy in 1..=n + 1 - ay {
            let (ay_star, dy_star) = scaled_coords(n, ay, dy);
            out.push(CellFeatures {
                ay,
                dy,
                ay_star,
                dy_star,
                d_star: ds.rectangle.get(ay, dy) / ds.premiums[ay - 1],
                split: split_of(n, ay, dy),
            });
        }
    }
    Ok(out)
}

/// Realised reserve, next-year payments and ultimate cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuals {
    pub reserve: f64,
    pub next_year_payments: f64,
    pub ultimate: f64,
}

impl From<Outcome> for Actuals {
    fn from(o: Outcome) -> Self {
        Self {
            reserve: o.reserve,
            next_year_payments: o.next_year,
            ultimate: o.ultimate,
        }
    }
}

impl Actuals {
    pub fn as_outcome(&self) -> Outcome {
        Outcome {
            reserve: self.reserve,
            next_year: self.next_year_payments,
            ultimate: self.ultimate,
        }
    }
}

/// Reduces a run-off to (reserve, next-year payments, ultimate).
///
/// `cell(ay, dy)` supplies cumulative paid amounts for lower-triangle cells
/// only; paid-to-date always comes from the observed diagonal, so the first
/// accident year never contributes to the reserve.
pub fn runoff_outcome(paid_to_date: &[f64], mut cell: impl FnMut(usize, usize) -> f64) -> Outcome {
    let n = paid_to_date.len();
    let mut reserve = 0.0;
    let mut next_year = 0.0;
    for ay in 2..=n {
        let diag = n + 1 - ay;
        let paid = paid_to_date[ay - 1];
        reserve += cell(ay, n) - paid;
        next_year += cell(ay, diag + 1) - paid;
    }
    let paid_total: f64 = paid_to_date.iter().sum();
    Outcome {
        reserve,
        next_year,
        ultimate: paid_total + reserve,
    }
}

/// Realised quantities from the full rectangle.
pub fn compute_actuals(ds: &CompanyDataset) -> Result<Actuals> {
    if !ds.has_full_rectangle() {
        return Err(Error::IncompleteData(format!(
            "group {} ({}): lower-triangle payments are not available",
            ds.group_id, ds.line
        )));
    }
    let paid = ds.paid_to_date();
    Ok(runoff_outcome(&paid, |ay, dy| ds.rectangle.get(ay, dy)).into())
}
