//! Run configuration, read from TOML. Relative paths resolve against the
//! directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::csr::SamplerConfig;
use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_ALPHA;
use crate::lognormal::Eq17Variant;
use crate::ml::level1::{default_theta_grid, Level1Config};
use crate::ml::{AdamConfig, AnnConfig};
use crate::schedule_p::{ColumnMap, ParseOptions};
use crate::triangle::Line;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub files: BTreeMap<Line, PathBuf>,
    pub selection: PathBuf,
    /// Per-line overrides of the CAS column names.
    pub columns: BTreeMap<Line, ColumnMap>,
    pub n: usize,
    pub calendar_origin: i32,
    /// Accept groups whose lower triangle is absent; they are fitted but
    /// carry no actuals.
    pub allow_upper_only: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        let files = Line::ALL
            .iter()
            .map(|&l| (l, PathBuf::from(format!("data/{}_pos.csv", l.cas_file_stem()))))
            .collect();
        Self {
            files,
            selection: PathBuf::from("config/selection.toml"),
            columns: BTreeMap::new(),
            n: 10,
            calendar_origin: 1988,
            allow_upper_only: true,
        }
    }
}

impl DataConfig {
    pub fn parse_options(&self, line: Line) -> ParseOptions {
        ParseOptions {
            columns: self.columns.get(&line).cloned().unwrap_or_else(|| ColumnMap::cas(line)),
            n: self.n,
            calendar_origin: self.calendar_origin,
            require_full_rectangle: !self.allow_upper_only,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Counts {
    pub bootstrap_sims: usize,
    pub lognormal_sims: usize,
    pub mcmc_draws: usize,
    pub mcmc_burn_in: usize,
    pub rf_trees: usize,
    pub gb_trees: usize,
    pub epochs: usize,
}

impl Default for Counts {
    fn default() -> Self {
        Self {
            bootstrap_sims: 10_000,
            lognormal_sims: 10_000,
            mcmc_draws: 10_000,
            mcmc_burn_in: 5_000,
            rf_trees: 500,
            gb_trees: 500,
            epochs: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub obs_rf: Vec<usize>,
    pub n_features: Vec<usize>,
    pub obs_gb: Vec<usize>,
    /// Dropout rates for the level-1 network.
    pub theta: Vec<f64>,
    /// Dropout rates for the level-2 network.
    pub theta_level2: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        let l1 = Level1Config::default();
        Self {
            obs_rf: l1.obs_rf,
            n_features: l1.n_features,
            obs_gb: l1.obs_gb,
            theta: default_theta_grid(),
            theta_level2: default_theta_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub lines: Vec<Line>,
    /// First `limit` selected triangles per line.
    pub limit: Option<usize>,
    /// Hidden layers of both networks in the stack.
    pub depth: usize,
    pub sensitivity_depths: Vec<usize>,
    pub eq17: Eq17Variant,
    pub alpha: f64,
    pub gb_subsample: f64,
    pub learning_rate: f64,
    pub width: usize,
    pub data: DataConfig,
    pub counts: Counts,
    pub grids: Grids,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1995,
            output: PathBuf::from("out"),
            jobs: 0,
            lines: Line::ALL.to_vec(),
            limit: None,
            depth: 2,
            sensitivity_depths: vec![1, 2, 3],
            eq17: Eq17Variant::Standard,
            alpha: DEFAULT_ALPHA,
            gb_subsample: 0.5,
            learning_rate: AdamConfig::default().learning_rate,
            width: 5,
            data: DataConfig::default(),
            counts: Counts::default(),
            grids: Grids::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output);
        resolve(base, &mut self.data.selection);
        for p in self.data.files.values_mut() {
            resolve(base, p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks ranges and that every input file exists.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let c = &self.counts;
        for (name, v) in [
            ("bootstrap_sims", c.bootstrap_sims),
            ("lognormal_sims", c.lognormal_sims),
            ("mcmc_draws", c.mcmc_draws),
            ("rf_trees", c.rf_trees),
            ("gb_trees", c.gb_trees),
            ("epochs", c.epochs),
            ("width", self.width),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        for d in std::iter::once(&self.depth).chain(&self.sensitivity_depths) {
            if !(1..=3).contains(d) {
                return bad(format!("depth {d} outside 1..=3"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if !(self.gb_subsample > 0.0 && self.gb_subsample <= 1.0) {
            return bad(format!("gb_subsample {} outside (0, 1]", self.gb_subsample));
        }
        let g = &self.grids;
        if g.obs_rf.is_empty() || g.n_features.is_empty() || g.obs_gb.is_empty() || g.theta.is_empty() || g.theta_level2.is_empty() {
            return bad("every hyperparameter grid needs at least one value".into());
        }
        if g.n_features.iter().any(|&n| n == 0 || n > 2) {
            return bad("n_features values must be 1 or 2".into());
        }
        if g.theta.iter().chain(&g.theta_level2).any(|t| !(0.0..1.0).contains(t)) {
            return bad("dropout rates must lie in [0, 1)".into());
        }
        if self.lines.is_empty() {
            return bad("no lines selected".into());
        }
        if self.data.n < 3 {
            return bad("triangle side must be at least 3".into());
        }
        if !self.data.selection.is_file() {
            return bad(format!("selection list {} not found", self.data.selection.display()));
        }
        for line in &self.lines {
            match self.data.files.get(line) {
                Some(p) if p.is_file() => {}
                Some(p) => return bad(format!("data file {} for {line} not found", p.display())),
                None => return bad(format!("no data file configured for {line}")),
            }
        }
        Ok(())
    }

    pub fn ann(&self, depth: usize) -> AnnConfig {
        AnnConfig {
            depth,
            width: self.width,
            dropout: 0.0,
            epochs: self.counts.epochs,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
        }
    }

    pub fn level1(&self) -> Level1Config {
        Level1Config {
            rf_trees: self.counts.rf_trees,
            gb_trees: self.counts.gb_trees,
            gb_subsample: self.gb_subsample,
            gb_learning_rate: crate::ml::boost::DEFAULT_LEARNING_RATE,
            obs_rf: self.grids.obs_rf.clone(),
            n_features: self.grids.n_features.clone(),
            obs_gb: self.grids.obs_gb.clone(),
            theta: self.grids.theta.clone(),
            ann: self.ann(self.depth),
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            n_draws: self.counts.mcmc_draws,
            burn_in: self.counts.mcmc_burn_in,
        }
    }
}
