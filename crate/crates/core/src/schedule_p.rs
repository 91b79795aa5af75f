//! Reading NAIC Schedule P extracts (CAS loss reserve database layout) and
//! applying a fixed list of selected insurers.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::triangle::{CompanyDataset, Grid, Line};

/// Physical CSV column names for the logical fields the parser needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub group_code: String,
    #[serde(default)]
    pub group_name: Option<String>,
    pub accident_year: String,
    pub development_lag: String,
    pub cumulative_paid: String,
    pub net_premium: String,
}

impl ColumnMap {
    /// Column names used by the CAS files, e.g. `CumPaidLoss_C` for
    /// commercial auto.
    pub fn cas(line: Line) -> Self {
        let s = line.cas_suffix();
        Self {
            group_code: "GRCODE".into(),
            group_name: Some("GRNAME".into()),
            accident_year: "AccidentYear".into(),
            development_lag: "DevelopmentLag".into(),
            cumulative_paid: format!("CumPaidLoss_{s}"),
            net_premium: format!("EarnedPremNet_{s}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub columns: ColumnMap,
    /// Number of accident (= development) years.
    pub n: usize,
    pub calendar_origin: i32,
    /// When false, groups with only the upper triangle are accepted and
    /// their lower cells are left unknown.
    pub require_full_rectangle: bool,
}

impl ParseOptions {
    pub fn cas(line: Line) -> Self {
        Self {
            columns: ColumnMap::cas(line),
            n: 10,
            calendar_origin: 1988,
            require_full_rectangle: true,
        }
    }
}

struct Partial {
    name: String,
    cells: Vec<Option<f64>>,
    premiums: Vec<Option<f64>>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema {
            column: name.to_string(),
        })
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    column: &str,
) -> Result<T> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse::<T>().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

/// Sort key putting numeric group codes in numeric order.
pub(crate) fn code_key(code: &str) -> (usize, &str) {
    (code.len(), code)
}

/// Parses one line-of-business file into one dataset per group code.
///
/// Output is ordered by group code and does not depend on row order. Rows
/// outside the `n × n` window are rejected.
pub fn parse_schedule_p<R: Read>(
    source: R,
    line: Line,
    opts: &ParseOptions,
) -> Result<Vec<CompanyDataset>> {
    let n = opts.n;
    if n < 2 {
        return Err(Error::Argument(format!("n must be at least 2, got {n}")));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let c = &opts.columns;
    let i_code = column_index(&headers, &c.group_code)?;
    let i_name = match &c.group_name {
        Some(name) => Some(column_index(&headers, name)?),
        None => None,
    };
    let i_ay = column_index(&headers, &c.accident_year)?;
    let i_lag = column_index(&headers, &c.development_lag)?;
    let i_paid = column_index(&headers, &c.cumulative_paid)?;
    let i_prem = column_index(&headers, &c.net_premium)?;

    let mut groups: BTreeMap<String, Partial> = BTreeMap::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        // header is row 1
        let row = k + 2;
        let code = record.get(i_code).unwrap_or("").trim().to_string();
        if code.is_empty() {
            return Err(Error::Parse {
                row,
                column: c.group_code.clone(),
                value: String::new(),
            });
        }
        let ay: i32 = parse_field(&record, i_ay, row, &c.accident_year)?;
        let lag: usize = parse_field(&record, i_lag, row, &c.development_lag)?;
        let paid: f64 = parse_field(&record, i_paid, row, &c.cumulative_paid)?;
        let premium: f64 = parse_field(&record, i_prem, row, &c.net_premium)?;
        if !paid.is_finite() || !premium.is_finite() {
            return Err(Error::Parse {
                row,
                column: c.cumulative_paid.clone(),
                value: record.get(i_paid).unwrap_or("").to_string(),
            });
        }
        let ay_idx = ay - opts.calendar_origin;
        if ay_idx < 0 || ay_idx as usize >= n {
            return Err(Error::OutOfWindow {
                row,
                detail: format!(
                    "accident year {ay} outside {}..={}",
                    opts.calendar_origin,
                    opts.calendar_origin + n as i32 - 1
                ),
            });
        }
        if lag < 1 || lag > n {
            return Err(Error::OutOfWindow {
                row,
                detail: format!("development lag {lag} outside 1..={n}"),
            });
        }
        let i = ay_idx as usize;
        let entry = groups.entry(code.clone()).or_insert_with(|| Partial {
            name: String::new(),
            cells: vec![None; n * n],
            premiums: vec![None; n],
        });
        if let Some(idx) = i_name {
            if entry.name.is_empty() {
                entry.name = record.get(idx).unwrap_or("").trim().to_string();
            }
        }
        let cell = &mut entry.cells[i * n + lag - 1];
        match cell {
            Some(prev) if *prev != paid => {
                return Err(Error::Conflict {
                    group: code,
                    detail: format!("duplicate cell ({ay}, {lag}) with values {prev} and {paid}"),
                })
            }
            _ => *cell = Some(paid),
        }
        let prem = &mut entry.premiums[i];
        match prem {
            Some(prev) if *prev != premium => {
                return Err(Error::Conflict {
                    group: code,
                    detail: format!(
                        "accident year {ay} has conflicting net premiums {prev} and {premium}"
                    ),
                })
            }
            _ => *prem = Some(premium),
        }
    }

    let mut out = Vec::with_capacity(groups.len());
    for (code, partial) in groups {
        let mut missing_upper = 0;
        let mut missing_lower = 0;
        for i in 0..n {
            for j in 0..n {
                if partial.cells[i * n + j].is_none() {
                    if i + j < n {
                        missing_upper += 1;
                    } else {
                        missing_lower += 1;
                    }
                }
            }
        }
        if missing_upper > 0 || (opts.require_full_rectangle && missing_lower > 0) {
            return Err(Error::Completeness {
                group: code,
                detail: format!(
                    "{} of {} cells present",
                    n * n - missing_upper - missing_lower,
                    n * n
                ),
            });
        }
        let cells = partial
            .cells
            .iter()
            .map(|v| v.unwrap_or(f64::NAN))
            .collect();
        // every accident year has its lag-1 row, so premiums are all present
        let premiums = partial.premiums.iter().map(|p| p.unwrap_or(f64::NAN)).collect();
        out.push(CompanyDataset {
            group_id: code,
            group_name: partial.name,
            line,
            rectangle: Grid::from_cells(n, cells)?,
            premiums,
            calendar_origin: opts.calendar_origin,
        });
    }
    out.sort_by(|a, b| code_key(&a.group_id).cmp(&code_key(&b.group_id)));
    Ok(out)
}

pub fn parse_schedule_p_file(
    path: &Path,
    line: Line,
    opts: &ParseOptions,
) -> Result<Vec<CompanyDataset>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    parse_schedule_p(std::io::BufReader::new(file), line, opts)
}

/// Ordered group codes per line of business.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelectionList {
    lines: BTreeMap<Line, Vec<String>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Code {
    Text(String),
    Number(i64),
}

impl SelectionList {
    pub fn new(lines: BTreeMap<Line, Vec<String>>) -> Result<Self> {
        for (line, codes) in &lines {
            let mut seen = HashSet::new();
            for c in codes {
                if !seen.insert(c.as_str()) {
                    return Err(Error::Config(format!(
                        "duplicate group code {c} in selection for {line}"
                    )));
                }
            }
        }
        Ok(Self { lines })
    }

    /// Parses a TOML document with one array of group codes per line key,
    /// e.g. `CA = ["353", "388"]`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<Code>> =
            toml::from_str(text).map_err(|e| Error::Config(format!("selection list: {e}")))?;
        let mut lines = BTreeMap::new();
        for (key, codes) in raw {
            let line: Line = key.parse()?;
            let codes = codes
                .into_iter()
                .map(|c| match c {
                    Code::Text(s) => s.trim().to_string(),
                    Code::Number(v) => v.to_string(),
                })
                .collect();
            lines.insert(line, codes);
        }
        Self::new(lines)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn codes(&self, line: Line) -> &[String] {
        self.lines.get(&line).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn lines(&self) -> impl Iterator<Item = Line> + '_ {
        self.lines.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.lines.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True for the full layout: 50 codes in each of the four lines.
    pub fn is_full_size(&self) -> bool {
        Line::ALL.iter().all(|l| self.codes(*l).len() == 50)
    }

    /// Keeps the first `k` codes of each line.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            lines: self
                .lines
                .iter()
                .map(|(l, c)| (*l, c.iter().take(k).cloned().collect()))
                .collect(),
        }
    }

    pub fn restricted_to(&self, keep: &[Line]) -> Self {
        Self {
            lines: self
                .lines
                .iter()
                .filter(|(l, _)| keep.contains(l))
                .map(|(l, c)| (*l, c.clone()))
                .collect(),
        }
    }
}

/// Picks the selected datasets in selection order (lines in CA, PA, WC, OL
/// order, codes in list order). Every picked dataset is validated.
pub fn select_triangles(
    datasets: &[CompanyDataset],
    selection: &SelectionList,
) -> Result<Vec<CompanyDataset>> {
    let index: BTreeMap<(Line, &str), &CompanyDataset> = datasets
        .iter()
        .map(|d| ((d.line, d.group_id.as_str()), d))
        .collect();
    let mut out = Vec::with_capacity(selection.len());
    for line in selection.lines() {
        for code in selection.codes(line) {
            let ds = index
                .get(&(line, code.as_str()))
                .ok_or_else(|| Error::Selection {
                    code: code.clone(),
                    line,
                })?;
            ds.validate()?;
            out.push((*ds).clone());
        }
    }
    Ok(out)
}
