//! Line-based experiment configuration.
//!
//! Each line is `key = value`; `#` starts a comment. Keys before the first
//! `method` line are global:
//!
//! ```text
//! seeds = 0,1,2,3,4
//! split = 0.025,0.025,0.95
//! dataset = scenario:homophily:semantic
//! dataset = dir:data/mygraph
//! dataset = citation:data/cora:cora
//! n = 2500                 # scenario overrides: n c d avg_degree homophily_ratio svd_rank
//! min_class_size = 10
//! row_normalize = true
//! max_epochs = 100
//! patience = 5
//! steps_per_epoch = 20
//! cache_dir = .slimg-cache
//!
//! method = slimg
//! lasso = 1e-3,1e-4
//! method = sgc             # default grid
//! method = dgc
//! T = 3,4,5
//! ```
//!
//! Lines after a `method` line set grid axes for that method; comma-separated
//! values become one axis each. Relative paths resolve against `base`.

use std::path::{Path, PathBuf};

use super::{allowed_keys, DatasetSource, ExperimentConfig, Method, MethodConfig};
use crate::error::{Error, Result};
use crate::synth::{is_excluded, FeatureKind, ScenarioSpec, Structure};

fn parse_list<T: std::str::FromStr>(v: &str) -> Option<Vec<T>> {
    v.split(',').map(|x| x.trim().parse().ok()).collect()
}

/// Parses a configuration. `path` only labels errors.
pub fn parse_config(text: &str, path: &Path, base: &Path) -> Result<ExperimentConfig> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut cfg = ExperimentConfig::new(Vec::new(), Vec::new());
    let mut overrides: Vec<(String, String, usize)> = Vec::new();
    let mut methods: Vec<(Method, Vec<(String, Vec<f64>)>, usize)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(err(line, format!("expected key = value, got {content:?}")));
        };
        let (key, value) = (key.trim(), value.trim());
        if key == "method" {
            let m: Method = value.parse().map_err(|e: Error| err(line, e.to_string()))?;
            if methods.iter().any(|(x, _, _)| *x == m) {
                return Err(err(line, format!("method {m} listed twice")));
            }
            methods.push((m, Vec::new(), line));
            continue;
        }
        if let Some((m, axes, _)) = methods.last_mut() {
            if !allowed_keys(*m).iter().any(|k| k == key) {
                return Err(err(line, format!("{m} has no parameter {key}")));
            }
            let vals = parse_list::<f64>(value)
                .filter(|v| v.iter().all(|x| x.is_finite()))
                .ok_or_else(|| err(line, format!("{key}: expected numbers, got {value:?}")))?;
            if axes.iter().any(|(k, _)| k == key) {
                return Err(err(line, format!("{key} set twice")));
            }
            axes.push((key.to_string(), vals));
            continue;
        }
        match key {
            "seeds" => {
                cfg.seeds = parse_list(value).ok_or_else(|| err(line, format!("bad seed list {value:?}")))?;
            }
            "split" => {
                let r: Vec<f64> = parse_list(value)
                    .filter(|r: &Vec<f64>| r.len() == 3)
                    .ok_or_else(|| err(line, "split needs three fractions".into()))?;
                cfg.ratios = (r[0], r[1], r[2]);
            }
            "dataset" => {
                let parts: Vec<&str> = value.splitn(3, ':').collect();
                let src = match parts.as_slice() {
                    ["scenario", s, f] => {
                        let s: Structure = s.parse().map_err(|e: Error| err(line, e.to_string()))?;
                        let f: FeatureKind = f.parse().map_err(|e: Error| err(line, e.to_string()))?;
                        if is_excluded(s, f) {
                            return Err(err(line, format!("scenario {s}-{f} is not defined")));
                        }
                        DatasetSource::Scenario(ScenarioSpec::new(s, f, 0))
                    }
                    ["dir", p] => DatasetSource::Directory(resolve(p)),
                    ["dir", p, rest] => DatasetSource::Directory(resolve(&format!("{p}:{rest}"))),
                    ["citation", rest @ ..] if !rest.is_empty() => {
                        let joined = rest.join(":");
                        let Some((dir, name)) = joined.rsplit_once(':') else {
                            return Err(err(line, "citation needs <dir>:<name>".into()));
                        };
                        DatasetSource::Citation {
                            dir: resolve(dir),
                            name: name.to_string(),
                        }
                    }
                    _ => {
                        return Err(err(
                            line,
                            format!("unknown dataset {value:?}; use scenario:, dir: or citation:"),
                        ))
                    }
                };
                cfg.datasets.push(src);
            }
            "n" | "c" | "d" | "avg_degree" | "homophily_ratio" | "svd_rank" => {
                overrides.push((key.to_string(), value.to_string(), line));
            }
            "min_class_size" => {
                cfg.ingest.min_class_size =
                    Some(value.parse().map_err(|_| err(line, format!("bad count {value:?}")))?);
            }
            "row_normalize" => {
                cfg.ingest.row_normalize =
                    value.parse().map_err(|_| err(line, format!("expected true or false, got {value:?}")))?;
            }
            "max_epochs" | "patience" | "steps_per_epoch" => {
                let v: usize = value.parse().map_err(|_| err(line, format!("bad count {value:?}")))?;
                match key {
                    "max_epochs" => cfg.budget.max_epochs = v,
                    "patience" => cfg.budget.patience = v,
                    _ => cfg.budget.steps_per_epoch = v,
                }
            }
            "cache_dir" => cfg.cache_dir = Some(resolve(value)),
            other => return Err(err(line, format!("unknown key {other:?}"))),
        }
    }

    for src in &mut cfg.datasets {
        let DatasetSource::Scenario(spec) = src else { continue };
        for (k, v, line) in &overrides {
            let bad = || err(*line, format!("bad value {v:?} for {k}"));
            match k.as_str() {
                "n" => spec.n = v.parse().map_err(|_| bad())?,
                "c" => spec.c = v.parse().map_err(|_| bad())?,
                "d" => spec.d = v.parse().map_err(|_| bad())?,
                "svd_rank" => spec.svd_rank = v.parse().map_err(|_| bad())?,
                "avg_degree" => spec.avg_degree = v.parse().map_err(|_| bad())?,
                _ => spec.homophily_ratio = v.parse().map_err(|_| bad())?,
            }
        }
        spec.validate().map_err(|e| err(0, e.to_string()))?;
    }
    for (m, axes, line) in methods {
        cfg.methods
            .push(MethodConfig::with_overrides(m, &axes).map_err(|e| err(line, e.to_string()))?);
    }
    cfg.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(cfg)
}

/// Reads and parses a configuration file; relative paths resolve against its
/// directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, path, base)
}
