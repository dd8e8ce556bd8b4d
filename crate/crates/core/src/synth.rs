//! Synthetic sanity-check graphs: block-structured adjacency crossed with
//! random, structural or semantic node features.
//!
//! Nodes are split into `c` equal contiguous groups that double as labels.
//! The three structures share the same expected edge count:
//!
//! * uniform: every pair has the same probability;
//! * homophily: intra-group pairs are `homophily_ratio` times likelier;
//! * heterophily: classes are paired at random and pairs of nodes across a
//!   paired group couple are `homophily_ratio` times likelier than any other.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::io::{write_edge_list, write_features_csv, write_labels};
use crate::linalg::{standardize_columns, truncated_svd};

/// Rejection-sampling budget per node for semantic features.
pub const SEMANTIC_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Structure {
    Uniform,
    Homophily,
    Heterophily,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Random,
    Structural,
    Semantic,
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Uniform => "uniform",
            Structure::Homophily => "homophily",
            Structure::Heterophily => "heterophily",
        })
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Random => "random",
            FeatureKind::Structural => "structural",
            FeatureKind::Semantic => "semantic",
        })
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Structure::Uniform),
            "homophily" => Ok(Structure::Homophily),
            "heterophily" => Ok(Structure::Heterophily),
            other => Err(Error::Argument(format!("unknown structure {other:?}"))),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(FeatureKind::Random),
            "structural" => Ok(FeatureKind::Structural),
            "semantic" => Ok(FeatureKind::Semantic),
            other => Err(Error::Argument(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// The seven evaluated (structure, features) cells in report column order.
pub const SANITY_SCENARIOS: [(Structure, FeatureKind); 7] = [
    (Structure::Uniform, FeatureKind::Semantic),
    (Structure::Homophily, FeatureKind::Random),
    (Structure::Heterophily, FeatureKind::Random),
    (Structure::Homophily, FeatureKind::Structural),
    (Structure::Heterophily, FeatureKind::Structural),
    (Structure::Homophily, FeatureKind::Semantic),
    (Structure::Heterophily, FeatureKind::Semantic),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub structure: Structure,
    pub features: FeatureKind,
    pub n: usize,
    pub c: usize,
    pub d: usize,
    pub avg_degree: f64,
    /// High-rate to low-rate edge probability ratio. `f64::INFINITY` removes
    /// all low-rate edges.
    pub homophily_ratio: f64,
    pub svd_rank: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(structure: Structure, features: FeatureKind, seed: u64) -> Self {
        ScenarioSpec {
            structure,
            features,
            n: 2500,
            c: 4,
            d: 32,
            avg_degree: 10.0,
            homophily_ratio: 20.0,
            svd_rank: 32,
            seed,
        }
    }

    /// Short scenario name such as `homophily-random`.
    pub fn name(&self) -> String {
        format!("{}-{}", self.structure, self.features)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.c < 2 || self.c % 2 != 0 {
            return bad(format!("class count {} must be even and at least 2", self.c));
        }
        if self.n == 0 || self.n % self.c != 0 {
            return bad(format!("node count {} must be a positive multiple of {}", self.n, self.c));
        }
        if self.d == 0 {
            return bad("feature dimension must be at least 1".into());
        }
        if !(self.avg_degree >= 0.0) || self.avg_degree > (self.n - 1) as f64 {
            return bad(format!(
                "average degree {} impossible with {} nodes",
                self.avg_degree, self.n
            ));
        }
        if !(self.homophily_ratio >= 1.0) {
            return bad(format!("homophily ratio {} must be at least 1", self.homophily_ratio));
        }
        if self.features == FeatureKind::Structural && (self.svd_rank == 0 || self.svd_rank > self.n) {
            return bad(format!("SVD rank {} outside 1..={}", self.svd_rank, self.n));
        }
        Ok(())
    }

    /// `(high, low)` pair probabilities. Uniform returns the same value twice.
    pub fn edge_probabilities(&self) -> Result<(f64, f64)> {
        let n = self.n as f64;
        let s = (self.n / self.c) as f64;
        let total_pairs = n * (n - 1.0) / 2.0;
        let expected = n * self.avg_degree / 2.0;
        let high_pairs = match self.structure {
            Structure::Uniform => return Ok((expected / total_pairs, expected / total_pairs)),
            Structure::Homophily => self.c as f64 * s * (s - 1.0) / 2.0,
            Structure::Heterophily => (self.c / 2) as f64 * s * s,
        };
        let low_pairs = total_pairs - high_pairs;
        let (hi, lo) = if self.homophily_ratio.is_infinite() {
            (expected / high_pairs, 0.0)
        } else {
            let lo = expected / (self.homophily_ratio * high_pairs + low_pairs);
            (self.homophily_ratio * lo, lo)
        };
        if hi > 1.0 || !hi.is_finite() {
            return Err(Error::Generation(format!(
                "{} structure needs edge probability {hi:.3} > 1; lower the degree or ratio",
                self.structure
            )));
        }
        Ok((hi, lo))
    }
}

/// A generated graph with features and one label per node.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub graph: SparseGraph,
    pub features: DenseMatrix,
    pub labels: Vec<i64>,
}

fn structure_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn feature_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Appends the pairs `(i, j)`, `j` in `lo..hi`, each kept with probability `p`,
/// by jumping geometric gaps between kept pairs.
fn sample_segment(
    rng: &mut ChaCha8Rng,
    i: usize,
    lo: usize,
    hi: usize,
    p: f64,
    out: &mut Vec<(usize, usize)>,
) {
    if p <= 0.0 || lo >= hi {
        return;
    }
    if p >= 1.0 {
        out.extend((lo..hi).map(|j| (i, j)));
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut j = lo;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>(); // in (0, 1]
        let gap = (u.ln() / log_q).floor();
        if gap >= (hi - j) as f64 {
            return;
        }
        j += gap as usize;
        out.push((i, j));
        j += 1;
        if j >= hi {
            return;
        }
    }
}

/// Samples the adjacency and returns it with the group labels.
pub fn gen_structure(spec: &ScenarioSpec) -> Result<(SparseGraph, Vec<i64>)> {
    spec.validate()?;
    let (n, c) = (spec.n, spec.c);
    let s = n / c;
    let labels: Vec<i64> = (0..n).map(|i| (i / s) as i64).collect();
    let (p_hi, p_lo) = spec.edge_probabilities()?;
    let mut rng = structure_rng(spec.seed);

    // partner[g] is the group that g is preferentially linked to
    let partner: Vec<usize> = match spec.structure {
        Structure::Heterophily => {
            let mut order: Vec<usize> = (0..c).collect();
            order.shuffle(&mut rng);
            let mut partner = vec![0; c];
            for pair in order.chunks(2) {
                partner[pair[0]] = pair[1];
                partner[pair[1]] = pair[0];
            }
            partner
        }
        _ => (0..c).collect(),
    };
    let rate = |gi: usize, gj: usize| match spec.structure {
        Structure::Uniform => p_hi,
        _ if partner[gi] == gj => p_hi,
        _ => p_lo,
    };

    let mut edges = Vec::with_capacity((n as f64 * spec.avg_degree / 2.0 * 1.1) as usize);
    for i in 0..n {
        let gi = i / s;
        // columns j > i, split at group boundaries so each run has one rate
        let mut lo = i + 1;
        while lo < n {
            let gj = lo / s;
            let hi = ((gj + 1) * s).min(n);
            sample_segment(&mut rng, i, lo, hi, rate(gi, gj), &mut edges);
            lo = hi;
        }
    }
    Ok((SparseGraph::from_edges(n, edges)?, labels))
}

/// Node features for an already generated structure.
pub fn gen_features(spec: &ScenarioSpec, g: &SparseGraph, labels: &[i64]) -> Result<DenseMatrix> {
    spec.validate()?;
    let (n, d, c) = (spec.n, spec.d, spec.c);
    if g.n() != n || labels.len() != n {
        return Err(Error::Dimension(format!(
            "scenario has {n} nodes, graph {} and labels {}",
            g.n(),
            labels.len()
        )));
    }
    let mut rng = feature_rng(spec.seed);
    match spec.features {
        FeatureKind::Random => Ok(DenseMatrix::from_fn(n, d, |_, _| rng.random::<f64>())),
        FeatureKind::Structural => {
            let u = truncated_svd(g, spec.svd_rank, spec.seed)?.u;
            let mut z = standardize_columns(&u);
            z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            Ok(z)
        }
        FeatureKind::Semantic => {
            let reps = draw_representatives(&mut rng, c, d);
            let mut x = DenseMatrix::zeros(n, d);
            let mut cand = vec![0.0; d];
            for (i, &y) in labels.iter().enumerate() {
                let y = y as usize;
                let mut accepted = false;
                for _ in 0..SEMANTIC_ATTEMPTS {
                    cand.iter_mut().for_each(|v| *v = rng.random::<f64>());
                    if semantic_margin(&cand, &reps, y) > 0.0 {
                        x.row_mut(i).copy_from_slice(&cand);
                        accepted = true;
                        break;
                    }
                }
                if !accepted {
                    return Err(Error::Generation(format!(
                        "no feature vector for class {y} within {SEMANTIC_ATTEMPTS} draws; \
                         its representative vector is dominated, try another seed"
                    )));
                }
            }
            Ok(x)
        }
    }
}

fn draw_representatives(rng: &mut ChaCha8Rng, c: usize, d: usize) -> DenseMatrix {
    DenseMatrix::from_fn(c, d, |_, _| rng.random::<f64>())
}

/// The per-class vectors `v_k` (one row per class) that semantic features
/// for `spec` are sampled against.
pub fn semantic_representatives(spec: &ScenarioSpec) -> DenseMatrix {
    draw_representatives(&mut feature_rng(spec.seed), spec.c, spec.d)
}

/// `x.v_y - max_{k != y} x.v_k`
pub fn semantic_margin(x: &[f64], reps: &DenseMatrix, y: usize) -> f64 {
    let score = |k: usize| x.iter().zip(reps.row(k)).map(|(a, b)| a * b).sum::<f64>();
    let own = score(y);
    let other = (0..reps.rows())
        .filter(|&k| k != y)
        .map(score)
        .fold(f64::NEG_INFINITY, f64::max);
    own - other
}

/// True for the two cells where neither the graph nor the features carry
/// label information.
pub fn is_excluded(structure: Structure, features: FeatureKind) -> bool {
    structure == Structure::Uniform && features != FeatureKind::Semantic
}

pub fn gen_scenario(spec: &ScenarioSpec) -> Result<SyntheticDataset> {
    if is_excluded(spec.structure, spec.features) {
        return Err(Error::Argument(format!(
            "{} is excluded: with uniform structure and {} features neither input carries label information",
            spec.name(),
            spec.features
        )));
    }
    let (graph, labels) = gen_structure(spec)?;
    let features = gen_features(spec, &graph, &labels)?;
    Ok(SyntheticDataset {
        graph,
        features,
        labels,
    })
}

/// Writes `edges.txt`, `features.csv`, `labels.txt` and `manifest.txt`.
pub fn write_dataset(dir: &Path, spec: &ScenarioSpec, ds: &SyntheticDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_edge_list(dir.join("edges.txt"), &ds.graph)?;
    write_features_csv(dir.join("features.csv"), &ds.features)?;
    write_labels(dir.join("labels.txt"), &ds.labels)?;
    let manifest = format!(
        "scenario={}\nstructure={}\nfeatures={}\nn={}\nc={}\nd={}\navg_degree={}\nhomophily_ratio={}\nsvd_rank={}\nseed={}\nedges={}\n",
        spec.name(),
        spec.structure,
        spec.features,
        spec.n,
        spec.c,
        ds.features.cols(),
        spec.avg_degree,
        spec.homophily_ratio,
        spec.svd_rank,
        spec.seed,
        ds.graph.edge_count(),
    );
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

/// Undirected graph with `edges` distinct uniformly random edges, used for
/// scaling measurements.
pub fn random_graph_with_edges(n: usize, edges: usize, seed: u64) -> Result<SparseGraph> {
    let max_edges = n.saturating_mul(n.saturating_sub(1)) / 2;
    if edges > max_edges / 2 {
        return Err(Error::Argument(format!(
            "{edges} edges is too dense for {n} nodes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list: Vec<(usize, usize)> = Vec::with_capacity(edges + edges / 8);
    let mut have = 0;
    // draw with replacement, then top up until enough distinct edges exist
    while have < edges {
        for _ in 0..(edges - have) {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v {
                list.push((u.min(v), u.max(v)));
            }
        }
        list.sort_unstable();
        list.dedup();
        have = list.len();
    }
    // drop the surplus at random rather than from the sorted tail
    list.shuffle(&mut rng);
    list.truncate(edges);
    SparseGraph::from_edges(n, list)
}
