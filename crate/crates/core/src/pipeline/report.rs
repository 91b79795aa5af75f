//! Aggregation of per-company artifacts into the report tables.
//!
//! `report.json` carries every table with its `K` and the master seed;
//! each `tableN.csv` has the columns `line,model,metric,value`, with an
//! empty value where a metric could not be computed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_artifacts, write_json, CompanyArtifact, SensitivityArtifact, PER_COMPANY_DIR, SENSITIVITY_DIR};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, pct_rmse, EvaluationReport};
use crate::schedule_p::code_key;
use crate::triangle::Line;

/// Means of the selected hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRow {
    pub line: Line,
    pub k: usize,
    pub obs_rf: f64,
    pub n_features: f64,
    pub obs_gb: f64,
    pub theta_level1: f64,
    pub theta_level2: f64,
}

/// Means of the scaled Chain Ladder factors; `lambda[j]` develops lag
/// `j + 1` to lag `j + 2`, and the last entry is the unit tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub line: Line,
    pub k: usize,
    pub lambda: Vec<f64>,
}

/// Means of the CSR posterior-mean location parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrLocationRow {
    pub line: Line,
    pub k: usize,
    pub alpha: Vec<f64>,
    /// `β_1 .. β_{n−1}`; the last is pinned at zero.
    pub beta: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrScaleRow {
    pub line: Line,
    pub k: usize,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub line: Line,
    pub depth: usize,
    pub k: usize,
    pub pct_rmse_reserve: Option<f64>,
    pub pct_rmse_next_year: Option<f64>,
    pub pct_rmse_ultimate: Option<f64>,
}

/// A model or input that could not be produced for one company.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub line: Line,
    pub group_id: String,
    pub source: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub alpha: f64,
    pub companies: usize,
    pub table1: Vec<HyperRow>,
    pub table2: Vec<FactorRow>,
    pub table3: Vec<CsrLocationRow>,
    pub table4: Vec<CsrScaleRow>,
    /// Error measures and risk ratios; tables 5 and 6.
    pub evaluation: EvaluationReport,
    pub table7: Option<Vec<DepthRow>>,
    pub gaps: Vec<Gap>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = values.fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
    s / k as f64
}

/// Element-wise mean of equal-length vectors.
fn mean_vec<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut k = 0usize;
    for r in rows {
        if acc.is_empty() {
            acc = vec![0.0; r.len()];
        }
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
        k += 1;
    }
    acc.iter().map(|a| a / k as f64).collect()
}

fn sorted<T>(mut items: Vec<T>, key: impl Fn(&T) -> (Line, &str)) -> Vec<T> {
    items.sort_by(|a, b| {
        let (la, ga) = key(a);
        let (lb, gb) = key(b);
        (la, code_key(ga)).cmp(&(lb, code_key(gb)))
    });
    items
}

impl Report {
    /// Aggregates in a fixed (line, group code) order so the result does not
    /// depend on the order the artifacts arrive in.
    pub fn build(artifacts: &[CompanyArtifact], sensitivity: &[SensitivityArtifact], alpha: f64, seed: u64) -> Result<Self> {
        let arts = sorted(artifacts.iter().collect(), |a| (a.result.line, a.result.group_id.as_str()));
        if let Some(a) = arts.iter().find(|a| a.seed != seed || a.alpha != alpha) {
            return Err(Error::Config(format!(
                "artifact {} {} was produced with a different seed or alpha",
                a.result.line, a.result.group_id
            )));
        }
        let mut table1 = Vec::new();
        let mut table2 = Vec::new();
        let mut table3 = Vec::new();
        let mut table4 = Vec::new();
        for line in Line::ALL {
            let of_line: Vec<&&CompanyArtifact> = arts.iter().filter(|a| a.result.line == line).collect();
            if of_line.is_empty() {
                continue;
            }
            let hyper: Vec<_> = of_line.iter().filter_map(|a| a.hyperparameters.as_ref()).collect();
            if !hyper.is_empty() {
                table1.push(HyperRow {
                    line,
                    k: hyper.len(),
                    obs_rf: mean(hyper.iter().map(|h| h.obs_rf as f64)),
                    n_features: mean(hyper.iter().map(|h| h.n_features as f64)),
                    obs_gb: mean(hyper.iter().map(|h| h.obs_gb as f64)),
                    theta_level1: mean(hyper.iter().map(|h| h.theta_level1)),
                    theta_level2: mean(hyper.iter().map(|h| h.theta_level2)),
                });
            }
            let factors: Vec<&Vec<f64>> = of_line.iter().filter_map(|a| a.dev_factors.as_ref()).collect();
            if !factors.is_empty() {
                let mut lambda = mean_vec(factors.iter().map(|f| &f[1..]));
                lambda.push(1.0);
                table2.push(FactorRow {
                    line,
                    k: factors.len(),
                    lambda,
                });
            }
            let csr: Vec<_> = of_line.iter().filter_map(|a| a.csr.as_ref()).collect();
            if !csr.is_empty() {
                table3.push(CsrLocationRow {
                    line,
                    k: csr.len(),
                    alpha: mean_vec(csr.iter().map(|c| c.alpha.as_slice())),
                    beta: mean_vec(csr.iter().map(|c| &c.beta[..c.beta.len() - 1])),
                    gamma: mean(csr.iter().map(|c| c.gamma)),
                });
                table4.push(CsrScaleRow {
                    line,
                    k: csr.len(),
                    sigma: mean_vec(csr.iter().map(|c| c.sigma.as_slice())),
                });
            }
        }
        let results: Vec<_> = arts.iter().map(|a| a.result.clone()).collect();
        let gaps = arts
            .iter()
            .flat_map(|a| {
                a.result.errors.iter().map(|(source, message)| Gap {
                    line: a.result.line,
                    group_id: a.result.group_id.clone(),
                    source: source.clone(),
                    message: message.clone(),
                })
            })
            .collect();
        Ok(Self {
            seed,
            alpha,
            companies: arts.len(),
            table1,
            table2,
            table3,
            table4,
            evaluation: evaluate(&results, alpha),
            table7: (!sensitivity.is_empty()).then(|| table7(sensitivity)),
            gaps,
        })
    }

    /// `report.json`, `table1.csv` to `table6.csv`, and `table7.csv` when
    /// the sensitivity table is present.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("report.json"), self)?;
        write_rows(&dir.join("table1.csv"), &self.table1_rows())?;
        write_rows(&dir.join("table2.csv"), &self.table2_rows())?;
        write_rows(&dir.join("table3.csv"), &self.table3_rows())?;
        write_rows(&dir.join("table4.csv"), &self.table4_rows())?;
        write_rows(&dir.join("table5.csv"), &self.table5_rows())?;
        write_rows(&dir.join("table6.csv"), &self.table6_rows())?;
        if let Some(t7) = &self.table7 {
            write_rows(&dir.join("table7.csv"), &table7_rows(t7))?;
        }
        Ok(())
    }

    fn table1_rows(&self) -> Vec<CsvRow> {
        let mut out = Vec::new();
        for r in &self.table1 {
            let l = r.line;
            out.push(row(l, "rf", "k", Some(r.k as f64)));
            out.push(row(l, "rf", "obs_rf", Some(r.obs_rf)));
            out.push(row(l, "rf", "n_features", Some(r.n_features)));
            out.push(row(l, "gb", "obs_gb", Some(r.obs_gb)));
            out.push(row(l, "ann", "theta", Some(r.theta_level1)));
            out.push(row(l, "stacked_ann", "theta", Some(r.theta_level2)));
        }
        out
    }

    fn table2_rows(&self) -> Vec<CsvRow> {
        let mut out = Vec::new();
        for r in &self.table2 {
            out.push(row(r.line, "cl", "k", Some(r.k as f64)));
            for (j, v) in r.lambda.iter().enumerate() {
                out.push(row(r.line, "cl", &format!("lambda_{}", j + 1), Some(*v)));
            }
        }
        out
    }

    fn table3_rows(&self) -> Vec<CsvRow> {
        let mut out = Vec::new();
        for r in &self.table3 {
            out.push(row(r.line, "csr", "k", Some(r.k as f64)));
            for (j, v) in r.alpha.iter().enumerate() {
                out.push(row(r.line, "csr", &format!("alpha_{}", j + 1), Some(*v)));
            }
            for (j, v) in r.beta.iter().enumerate() {
                out.push(row(r.line, "csr", &format!("beta_{}", j + 1), Some(*v)));
            }
            out.push(row(r.line, "csr", "gamma", Some(r.gamma)));
        }
        out
    }

    fn table4_rows(&self) -> Vec<CsvRow> {
        let mut out = Vec::new();
        for r in &self.table4 {
            out.push(row(r.line, "csr", "k", Some(r.k as f64)));
            for (j, v) in r.sigma.iter().enumerate() {
                out.push(row(r.line, "csr", &format!("sigma_{}", j + 1), Some(*v)));
            }
        }
        out
    }

    fn table5_rows(&self) -> Vec<CsvRow> {
        let mut out = Vec::new();
        for l in &self.evaluation.lines {
            for m in &l.models {
                let name = m.model.as_str();
                out.push(row(l.line, name, "k", Some(m.k as f64)));
                out.push(row(l.line, name, "pct_rmse_reserve", m.pct_rmse_reserve));
                out.push(row(l.line, name, "pct_rmse_next_year", m.pct_rmse_next_year));
                out.push(row(l.line, name, "pct_rmse_ultimate", m.pct_rmse_ultimate));
            }
        }
        out
    }

    fn table6_rows(&self) -> Vec<CsvRow> {
        let mut out = Vec::new();
        for l in &self.evaluation.lines {
            for m in &l.models {
                let name = m.model.as_str();
                out.push(row(l.line, name, "k", Some(m.k as f64)));
                out.push(row(l.line, name, "ratio_rr", m.ratio_rr));
                out.push(row(l.line, name, "ratio_sigma", m.ratio_sigma));
                out.push(row(l.line, name, "exceedances", Some(m.exceedances as f64)));
                out.push(row(l.line, name, "kupiec_p", m.kupiec_p));
            }
        }
        out
    }
}

/// %RMSE of the stacked point predictions per line and depth, over the
/// companies with actuals.
pub fn table7(artifacts: &[SensitivityArtifact]) -> Vec<DepthRow> {
    let arts = sorted(artifacts.iter().collect(), |a| (a.line, a.group_id.as_str()));
    let mut depths: Vec<usize> = arts.iter().flat_map(|a| a.depths.iter().map(|d| d.depth)).collect();
    depths.sort_unstable();
    depths.dedup();
    let mut rows = Vec::new();
    for line in Line::ALL {
        for &depth in &depths {
            let pairs: Vec<_> = arts
                .iter()
                .filter(|a| a.line == line)
                .filter_map(|a| {
                    let point = a.depths.iter().find(|d| d.depth == depth)?.point?;
                    Some((point, a.actuals?.as_outcome()))
                })
                .collect();
            if !arts.iter().any(|a| a.line == line) {
                continue;
            }
            let metric = |f: fn(&crate::distribution::Outcome) -> f64| {
                let p: Vec<f64> = pairs.iter().map(|(p, _)| f(p)).collect();
                let a: Vec<f64> = pairs.iter().map(|(_, a)| f(a)).collect();
                pct_rmse(&p, &a).ok()
            };
            rows.push(DepthRow {
                line,
                depth,
                k: pairs.len(),
                pct_rmse_reserve: metric(|o| o.reserve),
                pct_rmse_next_year: metric(|o| o.next_year),
                pct_rmse_ultimate: metric(|o| o.ultimate),
            });
        }
    }
    rows
}

#[derive(Serialize)]
struct SensitivityReport<'a> {
    seed: u64,
    table7: &'a [DepthRow],
}

/// `sensitivity.json` and `table7.csv`.
pub fn write_table7(dir: &Path, rows: &[DepthRow], seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("sensitivity.json"), &SensitivityReport { seed, table7: rows })?;
    write_rows(&dir.join("table7.csv"), &table7_rows(rows))
}

fn table7_rows(rows: &[DepthRow]) -> Vec<CsvRow> {
    let mut out = Vec::new();
    for r in rows {
        let model = format!("stacked_ann_depth{}", r.depth);
        out.push(row(r.line, &model, "k", Some(r.k as f64)));
        out.push(row(r.line, &model, "pct_rmse_reserve", r.pct_rmse_reserve));
        out.push(row(r.line, &model, "pct_rmse_next_year", r.pct_rmse_next_year));
        out.push(row(r.line, &model, "pct_rmse_ultimate", r.pct_rmse_ultimate));
    }
    out
}

#[derive(Debug, Serialize)]
struct CsvRow {
    line: Line,
    model: String,
    metric: String,
    value: Option<f64>,
}

fn row(line: Line, model: &str, metric: &str, value: Option<f64>) -> CsvRow {
    CsvRow {
        line,
        model: model.to_string(),
        metric: metric.to_string(),
        value,
    }
}

fn write_rows(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["line", "model", "metric", "value"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Re-aggregates the artifacts already in `dir` and rewrites the report.
pub fn rebuild(dir: &Path) -> Result<Report> {
    let artifacts: Vec<CompanyArtifact> = read_artifacts(&dir.join(PER_COMPANY_DIR))?;
    let sensitivity: Vec<SensitivityArtifact> = read_artifacts(&dir.join(SENSITIVITY_DIR))?;
    let first = artifacts
        .first()
        .ok_or_else(|| Error::Config(format!("no company artifacts under {}", dir.display())))?;
    let (seed, alpha) = (first.seed, first.alpha);
    if sensitivity.iter().any(|s| s.seed != seed) {
        return Err(Error::Config("sensitivity artifacts were produced with a different seed".into()));
    }
    let report = Report::build(&artifacts, &sensitivity, alpha, seed)?;
    report.write(dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_wise_means() {
        let a = [1.0, 2.0];
        let b = [3.0, 6.0];
        assert_eq!(mean_vec([&a[..], &b[..]].into_iter()), vec![2.0, 4.0]);
        assert_eq!(mean([1.0, 2.0, 6.0].into_iter()), 3.0);
    }

    #[test]
    fn missing_values_are_blank_in_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_rows(&p, &[row(Line::OL, "odp", "ratio_rr", None), row(Line::OL, "odp", "k", Some(3.0))]).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, "line,model,metric,value\nOL,odp,ratio_rr,\nOL,odp,k,3.0\n");
    }
}
