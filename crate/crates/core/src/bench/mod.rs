//! Experiment protocol: random splits, grid search on validation accuracy,
//! multi-seed suites and report assembly.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{propagate, BaselineKind, BaselineSpec};
use crate::classifier::{fit, group_norms, predict, FitConfig, SparseLinearModel, STEPS_PER_EPOCH};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::io::{load_citation_network, load_edge_list, load_features_csv, load_labels, UNLABELED};
use crate::slimg::{build_slimg_features, build_slimg_features_cached, PropagatedFeatures};
use crate::synth::{gen_scenario, ScenarioSpec};

pub use config::{load_config, parse_config};
pub use report::{Aggregate, RunReport};

/// Status text for methods that exceed the dense-size limit.
pub const OOM: &str = "O.O.M.";

/// Train / validation / test fractions used throughout.
pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.025, 0.025, 0.95);

/// Disjoint node index sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles the labeled nodes with `seed` and cuts them by `ratios` with floor
/// rounding; the remainder goes to the test set.
pub fn make_split(n: usize, labeled: &[usize], ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(0.0..=1.0).contains(r)) || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "split ratios {tr}/{va}/{te} must be in [0, 1] and sum to 1"
        )));
    }
    if labeled.is_empty() {
        return Err(Error::Argument("no labeled nodes to split".into()));
    }
    if let Some(&i) = labeled.iter().find(|&&i| i >= n) {
        return Err(Error::Argument(format!("labeled node {i} beyond {n} nodes")));
    }
    let mut idx = labeled.to_vec();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let m = idx.len();
    let n_train = (m as f64 * tr).floor() as usize;
    let n_val = (m as f64 * va).floor() as usize;
    if n_train == 0 || n_val == 0 {
        return Err(Error::Argument(format!(
            "{m} labeled nodes give an empty training or validation set at {tr}/{va}; use a larger graph"
        )));
    }
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(Split {
        train: idx,
        val,
        test,
    })
}

/// Fraction of `idx` where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[i64], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::Argument("accuracy over an empty index set".into()));
    }
    let mut hits = 0usize;
    for &i in idx {
        let (Some(&p), Some(&t)) = (pred.get(i), truth.get(i)) else {
            return Err(Error::Argument(format!("index {i} out of bounds")));
        };
        hits += (t >= 0 && p as i64 == t) as usize;
    }
    Ok(hits as f64 / idx.len() as f64)
}

/// A method evaluated by the harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Slimg,
    Baseline(BaselineKind),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Slimg => f.write_str("slimg"),
            Method::Baseline(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("slimg") {
            Ok(Method::Slimg)
        } else {
            s.parse().map(Method::Baseline)
        }
    }
}

/// One grid cell: propagator parameters plus classifier penalties.
pub type Cell = BTreeMap<String, f64>;

fn cell_string(cell: &Cell) -> String {
    cell.iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Hyperparameter axes searched when a config does not override them.
pub fn default_axes(method: Method) -> Vec<(String, Vec<f64>)> {
    match method {
        Method::Slimg => vec![
            ("lasso".into(), vec![1e-3, 1e-4, 1e-5]),
            ("group_lasso".into(), vec![1e-3, 1e-4, 1e-5, 1e-6]),
        ],
        Method::Baseline(kind) => {
            let grid = kind.default_grid();
            let mut axes: Vec<(String, Vec<f64>)> = kind
                .default_params()
                .iter()
                .map(|&(k, v)| {
                    let vals: Vec<f64> = grid
                        .iter()
                        .filter_map(|cell| cell.iter().find(|(ck, _)| *ck == k).map(|&(_, cv)| cv))
                        .collect();
                    (k.to_string(), if vals.is_empty() { vec![v] } else { vals })
                })
                .collect();
            axes.push(("wd".into(), vec![0.0, 5e-4]));
            axes
        }
    }
}

pub(super) fn allowed_keys(method: Method) -> Vec<String> {
    let mut keys = vec!["lasso".to_string(), "group_lasso".to_string()];
    if let Method::Baseline(kind) = method {
        keys.push("wd".into());
        keys.extend(kind.default_params().iter().map(|(k, _)| k.to_string()));
        if kind == BaselineKind::G2cn {
            keys.extend((1..=8).flat_map(|i| [format!("T{i}"), format!("b{i}")]));
        }
    }
    keys
}

/// Cartesian product of the axes, the first axis varying slowest.
pub fn expand_grid(axes: &[(String, Vec<f64>)]) -> Vec<Cell> {
    let mut cells = vec![Cell::new()];
    for (key, vals) in axes {
        let mut next = Vec::with_capacity(cells.len() * vals.len());
        for cell in &cells {
            for &v in vals {
                let mut c = cell.clone();
                c.insert(key.clone(), v);
                next.push(c);
            }
        }
        cells = next;
    }
    cells
}

/// A method and the grid searched for it.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    pub grid: Vec<Cell>,
}

impl MethodConfig {
    /// The default grid, with `overrides` replacing (or adding) axes.
    pub fn with_overrides(method: Method, overrides: &[(String, Vec<f64>)]) -> Result<Self> {
        let allowed = allowed_keys(method);
        let mut axes = default_axes(method);
        for (key, vals) in overrides {
            if !allowed.contains(key) {
                return Err(Error::Argument(format!("{method} has no parameter {key}")));
            }
            if vals.is_empty() {
                return Err(Error::Argument(format!("empty value list for {key}")));
            }
            // wd and lasso are the same classifier setting for baselines
            if key == "lasso" {
                axes.retain(|(k, _)| k != "wd");
            }
            match axes.iter_mut().find(|(k, _)| k == key) {
                Some(axis) => axis.1 = vals.clone(),
                None => axes.push((key.clone(), vals.clone())),
            }
        }
        Ok(MethodConfig {
            method,
            grid: expand_grid(&axes),
        })
    }

    pub fn default_for(method: Method) -> Self {
        Self::with_overrides(method, &[]).expect("default axes are valid")
    }
}

/// Where a dataset comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    /// Regenerated for every seed; the spec's own seed is ignored.
    Scenario(ScenarioSpec),
    /// A directory with `edges.txt`, `features.csv` and `labels.txt`.
    Directory(PathBuf),
    /// `<dir>/<name>.content` and `<dir>/<name>.cites`.
    Citation { dir: PathBuf, name: String },
}

impl DatasetSource {
    pub fn name(&self) -> String {
        match self {
            DatasetSource::Scenario(s) => s.name(),
            DatasetSource::Directory(p) => p
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            DatasetSource::Citation { name, .. } => name.clone(),
        }
    }
}

/// Graph, features and labels (`-1` for unlabeled) ready for the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: SparseGraph,
    pub features: DenseMatrix,
    pub labels: Vec<i64>,
}

impl Dataset {
    pub fn labeled(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] >= 0).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }
}

/// Ingestion options for files on disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ingest {
    /// Scale each feature row to sum to one.
    pub row_normalize: bool,
    /// Classes with fewer labeled nodes become unlabeled.
    pub min_class_size: Option<usize>,
}

impl Default for Ingest {
    fn default() -> Self {
        Ingest {
            row_normalize: true,
            min_class_size: None,
        }
    }
}

/// Rows scaled to unit sum; all-zero rows stay zero.
pub fn row_normalize_features(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let s: f64 = row.iter().sum();
        if s != 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    out
}

/// Marks classes with fewer than `min` members unlabeled and renumbers the
/// remaining classes densely, keeping their order.
pub fn filter_small_classes(labels: &[i64], min: usize) -> Vec<i64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in labels.iter().filter(|&&l| l >= 0) {
        *counts.entry(l).or_default() += 1;
    }
    let remap: BTreeMap<i64, i64> = counts
        .iter()
        .filter(|(_, &c)| c >= min)
        .enumerate()
        .map(|(new, (&old, _))| (old, new as i64))
        .collect();
    labels
        .iter()
        .map(|l| remap.get(l).copied().unwrap_or(UNLABELED))
        .collect()
}

/// Loads or generates the dataset for one seed.
pub fn load_dataset(source: &DatasetSource, seed: u64, ingest: &Ingest) -> Result<Dataset> {
    let name = source.name();
    let (graph, features, labels) = match source {
        DatasetSource::Scenario(spec) => {
            let spec = ScenarioSpec { seed, ..*spec };
            let ds = gen_scenario(&spec)?;
            return Ok(Dataset {
                name,
                graph: ds.graph,
                features: ds.features,
                labels: ds.labels,
            });
        }
        DatasetSource::Directory(dir) => {
            let labels = load_labels(dir.join("labels.txt"))?;
            let features = load_features_csv(dir.join("features.csv"))?;
            let graph = load_edge_list(dir.join("edges.txt"), Some(labels.len()))?;
            (graph, features, labels)
        }
        DatasetSource::Citation { dir, name } => {
            let net = load_citation_network(dir, name)?;
            (net.graph, net.features, net.labels)
        }
    };
    if features.rows() != graph.n() || labels.len() != graph.n() {
        return Err(Error::Dimension(format!(
            "{name}: {} nodes, {} feature rows, {} labels",
            graph.n(),
            features.rows(),
            labels.len()
        )));
    }
    let features = if ingest.row_normalize {
        row_normalize_features(&features)
    } else {
        features
    };
    let labels = match ingest.min_class_size {
        Some(m) => filter_small_classes(&labels, m),
        None => labels,
    };
    Ok(Dataset {
        name,
        graph,
        features,
        labels,
    })
}

/// Classifier settings shared by every cell of a search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainBudget {
    pub max_epochs: usize,
    pub patience: usize,
    pub steps_per_epoch: usize,
}

impl Default for TrainBudget {
    fn default() -> Self {
        TrainBudget {
            max_epochs: 100,
            patience: 5,
            steps_per_epoch: STEPS_PER_EPOCH,
        }
    }
}

/// Result of searching one method's grid on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct GridOutcome {
    pub best: Cell,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    /// Block norms of the selected model.
    pub group_norms: Vec<(String, f64)>,
    /// How many times propagated features were computed.
    pub feature_builds: usize,
    /// Failed cells with their reasons, in grid order.
    pub failures: Vec<(Cell, String)>,
    pub model: SparseLinearModel,
}

/// Options for [`grid_search`] beyond the data itself.
#[derive(Clone, Debug, Default)]
pub struct SearchOptions {
    pub budget: TrainBudget,
    /// Directory for cached SlimG features.
    pub cache_dir: Option<PathBuf>,
}

fn propagation_key(method: Method, cell: &Cell) -> Vec<(String, u64)> {
    let classifier_keys = ["lasso", "group_lasso", "wd"];
    match method {
        Method::Slimg => Vec::new(),
        Method::Baseline(_) => cell
            .iter()
            .filter(|(k, _)| !classifier_keys.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.to_bits()))
            .collect(),
    }
}

fn build_features(
    method: Method,
    cell: &Cell,
    ds: &Dataset,
    seed: u64,
    opts: &SearchOptions,
) -> Result<PropagatedFeatures> {
    match method {
        Method::Slimg => match &opts.cache_dir {
            Some(dir) => build_slimg_features_cached(&ds.graph, &ds.features, seed, dir),
            None => build_slimg_features(&ds.graph, &ds.features, seed),
        },
        Method::Baseline(kind) => {
            let mut spec = BaselineSpec::new(kind);
            for (k, v) in cell {
                if !["lasso", "group_lasso", "wd"].contains(&k.as_str()) {
                    spec = spec.with(k, *v);
                }
            }
            propagate(&spec, &ds.graph, &ds.features)
        }
    }
}

fn fit_config(cell: &Cell, budget: TrainBudget, seed: u64, c: usize) -> FitConfig {
    let lasso = cell.get("lasso").or_else(|| cell.get("wd")).copied().unwrap_or(0.0);
    let group_lasso = cell.get("group_lasso").copied().unwrap_or(0.0);
    FitConfig {
        lasso,
        group_lasso,
        max_epochs: budget.max_epochs,
        patience: budget.patience,
        steps_per_epoch: budget.steps_per_epoch,
        seed,
        n_classes: Some(c),
    }
}

/// Evaluates every cell, picks the best by validation accuracy (first cell
/// wins ties) and reports its test accuracy. Features are computed once per
/// distinct propagator setting, so SlimG builds them exactly once.
pub fn grid_search(
    mc: &MethodConfig,
    ds: &Dataset,
    split: &Split,
    seed: u64,
    opts: &SearchOptions,
) -> Result<GridOutcome> {
    if mc.grid.is_empty() {
        return Err(Error::Argument(format!("{} has an empty grid", mc.method)));
    }
    let c = ds.n_classes();
    // distinct propagator settings in first-appearance order
    let mut keys: Vec<Vec<(String, u64)>> = Vec::new();
    let mut cell_key = Vec::with_capacity(mc.grid.len());
    for cell in &mc.grid {
        let k = propagation_key(mc.method, cell);
        let pos = match keys.iter().position(|x| *x == k) {
            Some(p) => p,
            None => {
                keys.push(k);
                keys.len() - 1
            }
        };
        cell_key.push(pos);
    }
    let first_cell: Vec<usize> = (0..keys.len())
        .map(|k| cell_key.iter().position(|&p| p == k).unwrap())
        .collect();
    let features: Vec<Result<PropagatedFeatures>> = first_cell
        .par_iter()
        .map(|&ci| build_features(mc.method, &mc.grid[ci], ds, seed, opts))
        .collect();

    let results: Vec<Result<(f64, SparseLinearModel)>> = mc
        .grid
        .par_iter()
        .zip(cell_key.par_iter())
        .map(|(cell, &k)| {
            let f = features[k].as_ref().map_err(|e| Error::Data(e.to_string()))?;
            let cfg = fit_config(cell, opts.budget, seed, c);
            let model = fit(f, &ds.labels, &split.train, &split.val, &cfg)?;
            let pred = model.predict_matrix(&f.gather_rows(&split.val))?;
            let val_labels: Vec<i64> = split.val.iter().map(|&i| ds.labels[i]).collect();
            let local: Vec<usize> = (0..split.val.len()).collect();
            Ok((accuracy(&pred, &val_labels, &local)?, model))
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    let mut failures = Vec::new();
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok((acc, _)) => {
                if best.is_none_or(|(_, b)| *acc > b) {
                    best = Some((i, *acc));
                }
            }
            Err(e) => failures.push((mc.grid[i].clone(), e.to_string())),
        }
    }
    let Some((bi, val_accuracy)) = best else {
        if let Some(e) = features.into_iter().find_map(|f| f.err()) {
            return Err(e);
        }
        let reason = failures.first().map(|(_, e)| e.clone()).unwrap_or_default();
        return Err(Error::Data(format!("{}: every grid cell failed: {reason}", mc.method)));
    };
    let model = results.into_iter().nth(bi).unwrap()?.1;
    let f = features[cell_key[bi]].as_ref().unwrap();
    let pred = predict(&model, f)?;
    Ok(GridOutcome {
        best: mc.grid[bi].clone(),
        val_accuracy,
        test_accuracy: accuracy(&pred, &ds.labels, &split.test)?,
        group_norms: group_norms(&model),
        feature_builds: keys.len(),
        failures,
        model,
    })
}

/// Everything needed to run a suite.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSource>,
    pub methods: Vec<MethodConfig>,
    pub seeds: Vec<u64>,
    pub ratios: (f64, f64, f64),
    pub ingest: Ingest,
    pub budget: TrainBudget,
    /// Directory for cached SlimG features.
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(datasets: Vec<DatasetSource>, methods: Vec<MethodConfig>) -> Self {
        ExperimentConfig {
            datasets,
            methods,
            seeds: (0..5).collect(),
            ratios: DEFAULT_RATIOS,
            ingest: Ingest::default(),
            budget: TrainBudget::default(),
            cache_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Argument("no datasets configured".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Argument("no methods configured".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Argument("no seeds configured".into()));
        }
        if let Some(m) = self.methods.iter().find(|m| m.grid.is_empty()) {
            return Err(Error::Argument(format!("{} has an empty grid", m.method)));
        }
        Ok(())
    }
}

/// Outcome of one (dataset, method, seed) run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub dataset: String,
    pub method: Method,
    pub seed: u64,
    pub outcome: std::result::Result<GridOutcome, String>,
    /// Wall-clock seconds; kept out of report files so they stay reproducible.
    pub wall_secs: f64,
}

/// Runs every method on every dataset and seed. Synthetic scenarios are
/// regenerated per seed; files on disk are loaded once and only the split
/// changes between seeds.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let opts = SearchOptions {
        budget: cfg.budget,
        cache_dir: cfg.cache_dir.clone(),
    };
    let mut records = Vec::new();
    for source in &cfg.datasets {
        let fixed = match source {
            DatasetSource::Scenario(_) => None,
            _ => Some(load_dataset(source, 0, &cfg.ingest)?),
        };
        let per_seed: Vec<Result<Vec<RunRecord>>> = cfg
            .seeds
            .par_iter()
            .map(|&seed| {
                let ds = match &fixed {
                    Some(d) => d.clone(),
                    None => load_dataset(source, seed, &cfg.ingest)?,
                };
                let split = make_split(ds.graph.n(), &ds.labeled(), cfg.ratios, seed)?;
                Ok(cfg
                    .methods
                    .par_iter()
                    .map(|mc| {
                        let start = Instant::now();
                        let outcome = grid_search(mc, &ds, &split, seed, &opts).map_err(|e| match e {
                            Error::Capacity { .. } => OOM.to_string(),
                            other => other.to_string(),
                        });
                        RunRecord {
                            dataset: ds.name.clone(),
                            method: mc.method,
                            seed,
                            outcome,
                            wall_secs: start.elapsed().as_secs_f64(),
                        }
                    })
                    .collect())
            })
            .collect();
        for r in per_seed {
            records.extend(r?);
        }
    }
    Ok(RunReport::new(
        cfg.datasets.iter().map(DatasetSource::name).collect(),
        cfg.methods.iter().map(|m| m.method).collect(),
        records,
    ))
}
