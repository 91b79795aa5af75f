//! End-to-end experiment: ingest, fit the five reserving models per
//! triangle, simulate their distributions and write per-company artifacts.
//!
//! Every random choice is seeded by `derive_seed(master, [company, model,
//! role])`, so a triangle's numbers do not depend on which other triangles
//! run, in what order, or on how many threads.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain_ladder::{self, DevFactors};
use crate::csr::{self, CsrPosterior};
use crate::distribution::Outcome;
use crate::error::{Error, Result};
use crate::evaluation::{CompanyResult, Model, ModelResult};
use crate::lognormal;
use crate::ml::level1::{fit_ann_grid, fit_gb_grid, fit_rf_grid, predict_grid, train_test};
use crate::ml::{BoostModel, ForestModel, NeuralNet, Samples};
use crate::schedule_p::{parse_schedule_p_file, select_triangles, SelectionList};
use crate::seeds::derive_seed;
use crate::stacking::{assemble_features, complete, fit_level2, predict_rectangle, Level1Grids};
use crate::stochastic::{fit_mack, fit_odp, mack_bootstrap, odp_bootstrap};
use crate::triangle::{build_features, compute_actuals, Actuals, CompanyDataset, Grid, Line};

pub use config::RunConfig;

pub const PER_COMPANY_DIR: &str = "per_company";
pub const SENSITIVITY_DIR: &str = "sensitivity";

/// Stable label of one triangle, used for seeds and file names.
pub fn company_key(line: Line, group_id: &str) -> String {
    format!("{line}_{group_id}")
}

/// Parses the configured files and applies the selection list, its line
/// filter and the per-line limit.
pub fn load_datasets(cfg: &RunConfig) -> Result<Vec<CompanyDataset>> {
    let selection = SelectionList::from_file(&cfg.data.selection)?.restricted_to(&cfg.lines);
    let selection = match cfg.limit {
        Some(k) => selection.truncated(k),
        None => selection,
    };
    let mut parsed = Vec::new();
    for line in selection.lines() {
        let path = cfg
            .data
            .files
            .get(&line)
            .ok_or_else(|| Error::Config(format!("no data file configured for {line}")))?;
        parsed.extend(parse_schedule_p_file(path, line, &cfg.data.parse_options(line))?);
    }
    select_triangles(&parsed, &selection)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub obs_rf: usize,
    pub n_features: usize,
    pub obs_gb: usize,
    pub theta_level1: f64,
    pub theta_level2: f64,
    /// Test-diagonal RMSE of rf, gb, level-1 ann and level-2 ann.
    pub test_rmse: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrSummary {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub logelr: f64,
    pub sigma: Vec<f64>,
    pub gamma_interval_90: (f64, f64),
    pub acceptance_rates: [f64; 4],
    pub warning: Option<String>,
}

impl CsrSummary {
    fn from_posterior(p: &CsrPosterior) -> Self {
        let m = p.mean_params();
        Self {
            alpha: m.alpha,
            beta: m.beta,
            gamma: m.gamma,
            logelr: m.logelr,
            sigma: p.mean_sigma(),
            gamma_interval_90: p.gamma_interval(0.9),
            acceptance_rates: p.acceptance_rates,
            warning: p.warning.clone(),
        }
    }
}

/// Everything written to `per_company/<line>_<group>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyArtifact {
    pub seed: u64,
    pub alpha: f64,
    pub group_name: String,
    pub result: CompanyResult,
    /// Chain Ladder factors of the premium-scaled triangle.
    pub dev_factors: Option<Vec<f64>>,
    /// Deterministic Chain Ladder reserve in monetary units.
    pub cl_reserve: Option<f64>,
    pub hyperparameters: Option<Hyperparameters>,
    pub csr: Option<CsrSummary>,
}

/// A stack input, or why it could not be produced.
type Input<T> = std::result::Result<T, String>;

/// Level-1 fits that do not depend on the network depth. Inputs fail
/// independently so the standalone network survives a missing stack input.
struct SharedFits {
    train: Samples,
    test: Samples,
    rf: Input<(ForestModel, (usize, usize), f64)>,
    gb: Input<(BoostModel, usize, f64)>,
    cl: Input<DevFactors>,
    csr: Input<Grid>,
}

struct StackFit {
    ann: NeuralNet,
    theta_level1: f64,
    ann_rmse: f64,
    stacked: Result<crate::stacking::StackedModel>,
}

fn input<'a, T>(name: &str, i: &'a Input<T>) -> Result<&'a T> {
    i.as_ref().map_err(|e| Error::Estimation(format!("{name} input unavailable: {e}")))
}

fn seed_for(cfg: &RunConfig, key: &str, model: &str, role: &str) -> u64 {
    derive_seed(cfg.seed, &[key, model, role])
}

/// Level-1 network and level-2 stack at one depth on top of the shared fits.
fn fit_stack(ds: &CompanyDataset, shared: &SharedFits, cfg: &RunConfig, depth: usize) -> Result<StackFit> {
    let key = company_key(ds.line, &ds.group_id);
    let ann_cfg = cfg.ann(depth);
    let (ann, theta_level1, ann_rmse) = fit_ann_grid(
        &shared.train,
        &shared.test,
        &cfg.grids.theta,
        ann_cfg,
        seed_for(cfg, &key, "ann", &format!("level1_depth{depth}")),
    )?;
    let n = ds.n();
    let stacked = (|| {
        let grids = Level1Grids {
            rf: Some(predict_grid(&input("rf", &shared.rf)?.0, n)),
            gb: Some(predict_grid(&input("gb", &shared.gb)?.0, n)),
            ann: Some(predict_grid(&ann, n)),
            cl: Some(input("cl", &shared.cl)?.clone()),
            csr: Some(input("csr", &shared.csr)?.clone()),
        };
        let features = assemble_features(&grids, ds)?;
        fit_level2(
            features,
            &cfg.grids.theta_level2,
            ann_cfg,
            seed_for(cfg, &key, "stacked_ann", &format!("level2_depth{depth}")),
        )
    })();
    Ok(StackFit {
        ann,
        theta_level1,
        ann_rmse,
        stacked,
    })
}

/// RF, GB, CL factors and the CSR posterior, with the CSR chain running
/// alongside the tree ensembles.
fn fit_shared(ds: &CompanyDataset, cfg: &RunConfig) -> (Result<SharedFits>, Result<CsrPosterior>) {
    let key = company_key(ds.line, &ds.group_id);
    let features = match build_features(ds) {
        Ok(f) => f,
        Err(e) => {
            let msg = e.to_string();
            return (Err(e), Err(Error::Estimation(msg)));
        }
    };
    let (train, test) = train_test(&features);
    let l1 = cfg.level1();
    let ((rf, gb), posterior) = rayon::join(
        || {
            rayon::join(
                || fit_rf_grid(&train, &test, &l1, seed_for(cfg, &key, "rf", "level1")),
                || fit_gb_grid(&train, &test, &l1, seed_for(cfg, &key, "gb", "level1")),
            )
        },
        || csr::sample_posterior(ds, cfg.sampler(), seed_for(cfg, &key, "csr", "mcmc")),
    );
    let csr = posterior
        .as_ref()
        .map_err(|e| e.to_string())
        .and_then(|p| csr::csr_feature(p, ds, seed_for(cfg, &key, "csr", "feature")).map_err(|e| e.to_string()));
    let shared = SharedFits {
        rf: rf.map_err(|e| e.to_string()),
        gb: gb.map_err(|e| e.to_string()),
        cl: ds
            .scaled_upper_triangle()
            .and_then(|t| chain_ladder::dev_factors(&t))
            .map_err(|e| e.to_string()),
        csr,
        train,
        test,
    };
    (Ok(shared), posterior)
}

/// Runs all five models on one triangle. Failures are recorded per model
/// and never abort the company.
pub fn run_company(ds: &CompanyDataset, cfg: &RunConfig) -> CompanyArtifact {
    let start = Instant::now();
    let key = company_key(ds.line, &ds.group_id);
    let alpha = cfg.alpha;
    let mut models = BTreeMap::new();
    let mut errors = BTreeMap::new();
    let mut record = |model: Model, r: Result<ModelResult>, errors: &mut BTreeMap<String, String>| match r {
        Ok(m) => {
            models.insert(model, m);
        }
        Err(e) => {
            log::warn!("{key}: {model} failed: {e}");
            errors.insert(model.as_str().to_string(), e.to_string());
        }
    };

    let actuals = match compute_actuals(ds) {
        Ok(a) => Some(a),
        Err(e) => {
            errors.insert("actuals".into(), e.to_string());
            None
        }
    };

    let upper = ds.upper_triangle();
    let cl_reserve = chain_ladder::reserve(&upper).ok();
    let odp = fit_odp(&upper)
        .and_then(|f| odp_bootstrap(&f, cfg.counts.bootstrap_sims, seed_for(cfg, &key, "odp", "bootstrap")))
        .map(|d| ModelResult::from_distribution(&d, alpha));
    record(Model::Odp, odp, &mut errors);
    let mack = fit_mack(&upper)
        .and_then(|f| mack_bootstrap(&f, &upper, cfg.counts.bootstrap_sims, seed_for(cfg, &key, "mack", "bootstrap")))
        .map(|d| ModelResult::from_distribution(&d, alpha));
    record(Model::Mack, mack, &mut errors);

    let (shared, posterior) = fit_shared(ds, cfg);
    let csr_summary = posterior.as_ref().ok().map(CsrSummary::from_posterior);
    let csr_result = posterior
        .as_ref()
        .map_err(|e| Error::Estimation(e.to_string()))
        .and_then(|p| csr::csr_reserve_distribution(p, ds, seed_for(cfg, &key, "csr", "predictive")))
        .map(|d| ModelResult::from_distribution(&d, alpha));
    record(Model::Csr, csr_result, &mut errors);

    let paid = ds.paid_to_date();
    let simulate = |completed: &Grid, model: Model| {
        lognormal::reserve_distribution(
            completed,
            &ds.premiums,
            &paid,
            cfg.eq17,
            cfg.counts.lognormal_sims,
            seed_for(cfg, &key, model.as_str(), "lognormal"),
        )
    };
    let mut dev_factors = None;
    let mut hyperparameters = None;
    match shared.and_then(|s| fit_stack(ds, &s, cfg, cfg.depth).map(|f| (s, f))) {
        Ok((s, fit)) => {
            dev_factors = s.cl.as_ref().ok().map(|cl| cl.as_slice().to_vec());
            // the standalone benchmark is the level-1 network itself
            let ann = complete(ds, predict_grid(&fit.ann, ds.n()));
            let r = simulate(&ann.completed, Model::Ann).map(|d| ModelResult::new(ann.point, &d, alpha));
            record(Model::Ann, r, &mut errors);
            if let (Ok(stacked_fit), Ok(rf), Ok(gb)) = (&fit.stacked, &s.rf, &s.gb) {
                hyperparameters = Some(Hyperparameters {
                    obs_rf: rf.1 .0,
                    n_features: rf.1 .1,
                    obs_gb: gb.1,
                    theta_level1: fit.theta_level1,
                    theta_level2: stacked_fit.theta,
                    test_rmse: [rf.2, gb.2, fit.ann_rmse, stacked_fit.test_rmse],
                });
            }
            let r = fit.stacked.and_then(|m| {
                let stacked = predict_rectangle(&m, ds);
                simulate(&stacked.completed, Model::StackedAnn).map(|d| ModelResult::new(stacked.point, &d, alpha))
            });
            record(Model::StackedAnn, r, &mut errors);
        }
        Err(e) => {
            for m in [Model::Ann, Model::StackedAnn] {
                record(m, Err(Error::Estimation(e.to_string())), &mut errors);
            }
        }
    }
    log::info!("{key}: done in {:.1}s", start.elapsed().as_secs_f64());
    CompanyArtifact {
        seed: cfg.seed,
        alpha,
        group_name: ds.group_name.clone(),
        result: CompanyResult {
            group_id: ds.group_id.clone(),
            line: ds.line,
            actuals,
            models,
            errors,
        },
        dev_factors,
        cl_reserve,
        hyperparameters,
        csr: csr_summary,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthOutcome {
    pub depth: usize,
    pub point: Option<Outcome>,
    pub theta_level1: Option<f64>,
    pub theta_level2: Option<f64>,
    pub error: Option<String>,
}

/// Everything written to `sensitivity/<line>_<group>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityArtifact {
    pub seed: u64,
    pub group_id: String,
    pub line: Line,
    pub actuals: Option<Actuals>,
    pub depths: Vec<DepthOutcome>,
}

/// Stacked point predictions at each depth; RF, GB, CL and CSR are fitted
/// once and shared. The run's depth reproduces its Stacked-ANN point.
pub fn run_company_sensitivity(ds: &CompanyDataset, cfg: &RunConfig, depths: &[usize]) -> SensitivityArtifact {
    let key = company_key(ds.line, &ds.group_id);
    let (shared, _) = fit_shared(ds, cfg);
    let depths = depths
        .iter()
        .map(|&depth| {
            let fit = shared
                .as_ref()
                .map_err(|e| Error::Estimation(e.to_string()))
                .and_then(|s| fit_stack(ds, s, cfg, depth))
                .and_then(|f| Ok((f.theta_level1, f.stacked?)));
            match fit {
                Ok((theta_level1, stacked)) => DepthOutcome {
                    depth,
                    point: Some(predict_rectangle(&stacked, ds).point),
                    theta_level1: Some(theta_level1),
                    theta_level2: Some(stacked.theta),
                    error: None,
                },
                Err(e) => {
                    log::warn!("{key}: depth {depth} failed: {e}");
                    DepthOutcome {
                        depth,
                        point: None,
                        theta_level1: None,
                        theta_level2: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    SensitivityArtifact {
        seed: cfg.seed,
        group_id: ds.group_id.clone(),
        line: ds.line,
        actuals: compute_actuals(ds).ok(),
        depths,
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn artifact_path(dir: &Path, line: Line, group_id: &str) -> PathBuf {
    dir.join(format!("{}.json", company_key(line, group_id)))
}

/// Fits every selected triangle, writes `per_company/*.json`, `report.json`
/// and the table CSVs, and returns the aggregated report.
pub fn run_pipeline(cfg: &RunConfig) -> Result<report::Report> {
    cfg.validate()?;
    let datasets = load_datasets(cfg)?;
    log::info!("fitting {} triangles", datasets.len());
    let artifacts: Vec<CompanyArtifact> =
        pool(cfg.jobs)?.install(|| datasets.par_iter().map(|ds| run_company(ds, cfg)).collect());
    let dir = cfg.output.join(PER_COMPANY_DIR);
    std::fs::create_dir_all(&dir)?;
    for a in &artifacts {
        write_json(&artifact_path(&dir, a.result.line, &a.result.group_id), a)?;
    }
    let report = report::Report::build(&artifacts, &[], cfg.alpha, cfg.seed)?;
    report.write(&cfg.output)?;
    Ok(report)
}

/// Stacked-ANN at each depth; writes `sensitivity/*.json`,
/// `sensitivity.json` and `table7.csv`.
pub fn run_sensitivity(cfg: &RunConfig, depths: &[usize]) -> Result<Vec<report::DepthRow>> {
    cfg.validate()?;
    if depths.is_empty() || depths.iter().any(|d| !(1..=3).contains(d)) {
        return Err(Error::Config("sensitivity depths must be a non-empty subset of 1..=3".into()));
    }
    let datasets = load_datasets(cfg)?;
    log::info!("sensitivity over {} triangles at depths {depths:?}", datasets.len());
    let artifacts: Vec<SensitivityArtifact> = pool(cfg.jobs)?
        .install(|| datasets.par_iter().map(|ds| run_company_sensitivity(ds, cfg, depths)).collect());
    let dir = cfg.output.join(SENSITIVITY_DIR);
    std::fs::create_dir_all(&dir)?;
    for a in &artifacts {
        write_json(&artifact_path(&dir, a.line, &a.group_id), a)?;
    }
    let rows = report::table7(&artifacts);
    report::write_table7(&cfg.output, &rows, cfg.seed)?;
    Ok(rows)
}

/// Reads every JSON artifact in `dir`, in file-name order.
pub fn read_artifacts<T: serde::de::DeserializeOwned>(dir: &Path) -> Result<Vec<T>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(Error::from)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestLine {
    pub line: Line,
    pub triangles: usize,
    pub with_runoff: usize,
    /// Mean scaled Chain Ladder factors, first age-to-age factor first.
    pub mean_dev_factors: Vec<f64>,
    /// Triangles whose scaled factors could not be computed.
    pub factor_failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub lines: Vec<IngestLine>,
}

impl IngestSummary {
    pub fn line(&self, line: Line) -> Option<&IngestLine> {
        self.lines.iter().find(|l| l.line == line)
    }
}

/// Per-line counts and mean scaled development factors of validated
/// datasets; pure arithmetic, no fitting.
pub fn ingest_summary(datasets: &[CompanyDataset]) -> IngestSummary {
    let mut lines = Vec::new();
    for line in Line::ALL {
        let of_line: Vec<&CompanyDataset> = datasets.iter().filter(|d| d.line == line).collect();
        if of_line.is_empty() {
            continue;
        }
        let mut sums: Vec<f64> = Vec::new();
        let mut k = 0usize;
        let mut factor_failures = Vec::new();
        for ds in &of_line {
            match ds.scaled_upper_triangle().and_then(|t| chain_ladder::dev_factors(&t)) {
                Ok(f) => {
                    let f = &f.as_slice()[1..];
                    if sums.is_empty() {
                        sums = vec![0.0; f.len()];
                    }
                    for (s, v) in sums.iter_mut().zip(f) {
                        *s += v;
                    }
                    k += 1;
                }
                Err(e) => factor_failures.push(format!("{}: {e}", ds.group_id)),
            }
        }
        lines.push(IngestLine {
            line,
            triangles: of_line.len(),
            with_runoff: of_line.iter().filter(|d| d.has_full_rectangle()).count(),
            mean_dev_factors: sums.iter().map(|s| s / k as f64).collect(),
            factor_failures,
        });
    }
    IngestSummary { lines }
}

/// Loads and validates the selection and writes `ingest.json`.
pub fn run_ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    cfg.validate()?;
    let datasets = load_datasets(cfg)?;
    let summary = ingest_summary(&datasets);
    std::fs::create_dir_all(&cfg.output)?;
    write_json(&cfg.output.join("ingest.json"), &summary)?;
    Ok(summary)
}
