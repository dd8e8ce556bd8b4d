//! Linearized GNN propagators and graph kernels used as baselines.
//!
//! Every propagator maps `(A, X)` to one or more feature blocks that feed the
//! same classifier as SlimG. Power-series propagators only ever multiply a
//! sparse matrix into an `n x d` block; kernels that need an inverse or a
//! matrix exponential go through a dense `n x n` matrix and are refused above
//! a node limit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{normalize, normalized_laplacian, spmm, NormScheme, SparseGraph};
use crate::slimg::PropagatedFeatures;

/// Largest graph for which dense kernels and PPNP are attempted.
pub const DENSE_LIMIT: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaselineKind {
    Lr,
    Sgc,
    Dgc,
    S2gc,
    G2cn,
    Ppnp,
    Appnp,
    Gprgnn,
    ChebNet,
    Sage,
    H2gcn,
    RegKernel,
    DiffKernel,
    RwKernel,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 14] = [
        BaselineKind::Lr,
        BaselineKind::Sgc,
        BaselineKind::Dgc,
        BaselineKind::S2gc,
        BaselineKind::G2cn,
        BaselineKind::Ppnp,
        BaselineKind::Appnp,
        BaselineKind::Gprgnn,
        BaselineKind::ChebNet,
        BaselineKind::Sage,
        BaselineKind::H2gcn,
        BaselineKind::RegKernel,
        BaselineKind::DiffKernel,
        BaselineKind::RwKernel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Lr => "lr",
            BaselineKind::Sgc => "sgc",
            BaselineKind::Dgc => "dgc",
            BaselineKind::S2gc => "s2gc",
            BaselineKind::G2cn => "g2cn",
            BaselineKind::Ppnp => "ppnp",
            BaselineKind::Appnp => "appnp",
            BaselineKind::Gprgnn => "gprgnn",
            BaselineKind::ChebNet => "chebnet",
            BaselineKind::Sage => "sage",
            BaselineKind::H2gcn => "h2gcn",
            BaselineKind::RegKernel => "regkernel",
            BaselineKind::DiffKernel => "diffkernel",
            BaselineKind::RwKernel => "rwkernel",
        }
    }

    /// Parameters this kind reads, with their defaults.
    pub fn default_params(self) -> &'static [(&'static str, f64)] {
        match self {
            BaselineKind::Lr => &[],
            BaselineKind::Sgc => &[("K", 2.0)],
            BaselineKind::Dgc => &[("K", 200.0), ("T", 5.0)],
            BaselineKind::S2gc => &[("K", 16.0), ("alpha", 0.05)],
            BaselineKind::G2cn => &[("K", 100.0), ("N", 2.0), ("T", 20.0), ("b1", 0.0), ("b2", 2.0)],
            BaselineKind::Ppnp => &[("alpha", 0.1)],
            BaselineKind::Appnp => &[("K", 10.0), ("alpha", 0.1)],
            BaselineKind::Gprgnn => &[("K", 10.0)],
            BaselineKind::ChebNet => &[("K", 3.0)],
            BaselineKind::Sage => &[("K", 2.0)],
            BaselineKind::H2gcn => &[("K", 1.0)],
            BaselineKind::RegKernel => &[("sigma", 1.0)],
            BaselineKind::DiffKernel => &[("sigma", 1.0)],
            BaselineKind::RwKernel => &[("a", 1.0), ("p", 2.0)],
        }
    }

    /// Propagation-parameter grid searched by default (weight decay is a
    /// classifier setting and is not part of this grid).
    pub fn default_grid(self) -> Vec<Vec<(&'static str, f64)>> {
        match self {
            BaselineKind::Dgc => [3.0, 4.0, 5.0, 6.0].iter().map(|&t| vec![("T", t)]).collect(),
            BaselineKind::S2gc => [0.01, 0.03, 0.05, 0.07, 0.09]
                .iter()
                .map(|&a| vec![("alpha", a)])
                .collect(),
            BaselineKind::G2cn => [10.0, 20.0, 30.0, 40.0].iter().map(|&t| vec![("T", t)]).collect(),
            BaselineKind::H2gcn => vec![vec![("K", 1.0)], vec![("K", 2.0)]],
            _ => vec![vec![]],
        }
    }

    fn needs_dense(self) -> bool {
        matches!(
            self,
            BaselineKind::Ppnp | BaselineKind::RegKernel | BaselineKind::DiffKernel
        )
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        BaselineKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Argument(format!("unknown baseline {s:?}")))
    }
}

/// A baseline kind plus its named numeric parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub params: BTreeMap<String, f64>,
}

impl BaselineSpec {
    /// Spec with every parameter at its default.
    pub fn new(kind: BaselineKind) -> Self {
        let params = kind
            .default_params()
            .iter()
            .map(|&(k, v)| (k.to_string(), v))
            .collect();
        BaselineSpec { kind, params }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| Error::Argument(format!("{} needs parameter {key}", self.kind)))
    }

    fn count(&self, key: &str, min: usize) -> Result<usize> {
        let v = self.get(key)?;
        if v.fract() != 0.0 || v < min as f64 {
            return Err(Error::Argument(format!(
                "{} parameter {key}={v} must be an integer >= {min}",
                self.kind
            )));
        }
        Ok(v as usize)
    }

    /// `key=value` pairs in key order, for reports.
    pub fn describe(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Runs the propagator with the default dense limit.
pub fn propagate(spec: &BaselineSpec, g: &SparseGraph, x: &DenseMatrix) -> Result<PropagatedFeatures> {
    propagate_with_limit(spec, g, x, DENSE_LIMIT)
}

pub fn propagate_with_limit(
    spec: &BaselineSpec,
    g: &SparseGraph,
    x: &DenseMatrix,
    dense_limit: usize,
) -> Result<PropagatedFeatures> {
    if x.rows() != g.n() {
        return Err(Error::Dimension(format!(
            "{} feature rows for a graph with {} nodes",
            x.rows(),
            g.n()
        )));
    }
    if spec.kind.needs_dense() && g.n() > dense_limit {
        return Err(Error::Capacity {
            what: spec.kind.name(),
            n: g.n(),
            limit: dense_limit,
        });
    }
    let one = |m: DenseMatrix| Ok(PropagatedFeatures::single("P", m));
    match spec.kind {
        BaselineKind::Lr => one(x.clone()),
        BaselineKind::Sgc => {
            let k = spec.count("K", 1)?;
            let s = normalize(g, NormScheme::SymWithLoops);
            one(power(&s, x, k)?)
        }
        BaselineKind::Dgc => {
            let k = spec.count("K", 1)?;
            let t = spec.get("T")?;
            let s = normalize(g, NormScheme::SymWithLoops);
            let step = s.shifted(t / k as f64, 1.0 - t / k as f64);
            one(power(&step, x, k)?)
        }
        BaselineKind::S2gc => {
            let k = spec.count("K", 1)?;
            let alpha = spec.get("alpha")?;
            let s = normalize(g, NormScheme::SymWithLoops);
            let mut acc = x.clone();
            acc.scale(alpha * k as f64);
            let mut h = x.clone();
            for _ in 0..k {
                h = spmm(&s, &h)?;
                acc.axpy(1.0 - alpha, &h);
            }
            one(acc)
        }
        BaselineKind::G2cn => {
            let k = spec.count("K", 1)?;
            let n_blocks = spec.count("N", 1)?;
            let s = normalize(g, NormScheme::SymNoLoops);
            let mut blocks = Vec::with_capacity(n_blocks);
            for i in 1..=n_blocks {
                let t = spec
                    .params
                    .get(&format!("T{i}"))
                    .copied()
                    .map_or_else(|| spec.get("T"), Ok)?;
                let b = spec.get(&format!("b{i}"))?;
                // H <- H - (T/K) M^2 H with M = (b-1) I + A_sym
                let m = s.shifted(1.0, b - 1.0);
                let mut h = x.clone();
                for _ in 0..k {
                    let mh = spmm(&m, &spmm(&m, &h)?)?;
                    h.axpy(-t / k as f64, &mh);
                }
                blocks.push((format!("H{i}"), h));
            }
            PropagatedFeatures::new(blocks)
        }
        BaselineKind::Ppnp => {
            let alpha = spec.get("alpha")?;
            let s = normalize(g, NormScheme::SymWithLoops);
            // I - (1 - alpha) A~_sym
            let m = s.shifted(-(1.0 - alpha), 1.0);
            one(dense_solve(&m, x)?)
        }
        BaselineKind::Appnp => {
            let k = spec.count("K", 1)?;
            let alpha = spec.get("alpha")?;
            let s = normalize(g, NormScheme::SymWithLoops);
            let mut h = x.clone();
            for _ in 0..k {
                let mut next = spmm(&s, &h)?;
                next.scale(1.0 - alpha);
                next.axpy(alpha, x);
                h = next;
            }
            one(h)
        }
        BaselineKind::Gprgnn => {
            let k = spec.count("K", 1)?;
            power_blocks(&normalize(g, NormScheme::SymWithLoops), x, k + 1)
        }
        BaselineKind::ChebNet => {
            let k = spec.count("K", 1)?;
            power_blocks(&normalize(g, NormScheme::SymNoLoops), x, k)
        }
        BaselineKind::Sage => {
            let k = spec.count("K", 1)?;
            power_blocks(&normalize(g, NormScheme::RowNoLoops), x, k + 1)
        }
        BaselineKind::H2gcn => {
            let k = spec.count("K", 1)?;
            power_blocks(&normalize(g, NormScheme::SymNoLoops), x, 2 * k + 1)
        }
        BaselineKind::RegKernel => {
            let sigma = spec.get("sigma")?;
            let m = normalized_laplacian(g).shifted(sigma * sigma, 1.0);
            one(dense_solve(&m, x)?)
        }
        BaselineKind::DiffKernel => {
            let sigma = spec.get("sigma")?;
            one(diffusion(g, x, sigma)?)
        }
        BaselineKind::RwKernel => {
            let a = spec.get("a")?;
            let p = spec.count("p", 0)?;
            let m = normalized_laplacian(g).shifted(-1.0, a);
            one(power(&m, x, p)?)
        }
    }
}

fn power(s: &SparseGraph, x: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let mut h = x.clone();
    for _ in 0..k {
        h = spmm(s, &h)?;
    }
    Ok(h)
}

/// Blocks `S^0 X, ..., S^(count-1) X`, named `k0`, `k1`, ...
fn power_blocks(s: &SparseGraph, x: &DenseMatrix, count: usize) -> Result<PropagatedFeatures> {
    let mut blocks = Vec::with_capacity(count);
    let mut h = x.clone();
    for k in 0..count {
        if k > 0 {
            h = spmm(s, &h)?;
        }
        blocks.push((format!("k{k}"), h.clone()));
    }
    PropagatedFeatures::new(blocks)
}

fn to_dense_na(s: &SparseGraph) -> DMatrix<f64> {
    let n = s.n();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (&j, &v) in s.row_indices(i).iter().zip(s.row_values(i)) {
            m[(i, j)] = v;
        }
    }
    m
}

/// Solves `M Z = X` for a symmetric positive definite `M`, falling back to LU.
fn dense_solve(m: &SparseGraph, x: &DenseMatrix) -> Result<DenseMatrix> {
    let a = to_dense_na(m);
    let b = x.to_nalgebra();
    let z = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Data("propagation matrix is singular".into()))?,
    };
    DenseMatrix::from_vec(z.nrows(), z.ncols(), DenseMatrix::from_nalgebra(&z).into_vec())
}

/// `exp(-sigma^2 / 2 L~) X` through the eigendecomposition of `L~`.
fn diffusion(g: &SparseGraph, x: &DenseMatrix, sigma: f64) -> Result<DenseMatrix> {
    let l = to_dense_na(&normalized_laplacian(g));
    let eig = l.symmetric_eigen();
    let q = &eig.eigenvectors;
    let mut coeffs = q.transpose() * x.to_nalgebra();
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        let f = (-sigma * sigma / 2.0 * lambda).exp();
        coeffs.row_mut(i).scale_mut(f);
    }
    Ok(DenseMatrix::from_nalgebra(&(q * coeffs)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
        assert_eq!("S2GC".parse::<BaselineKind>().unwrap(), BaselineKind::S2gc);
        assert!("gat".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn sgc_on_empty_graph_is_identity() {
        let x = DenseMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        let f = propagate(&BaselineSpec::new(BaselineKind::Sgc), &SparseGraph::empty(4), &x).unwrap();
        assert_eq!(f.blocks()[0].1, x);
    }

    #[test]
    fn s2gc_with_alpha_one_is_k_times_x() {
        let g = SparseGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let x = DenseMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64);
        let spec = BaselineSpec::new(BaselineKind::S2gc).with("alpha", 1.0);
        let out = propagate(&spec, &g, &x).unwrap();
        let mut want = x.clone();
        want.scale(16.0);
        assert!(out.blocks()[0].1.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn dense_kinds_refuse_large_graphs() {
        let g = SparseGraph::empty(10);
        let x = DenseMatrix::zeros(10, 1);
        for kind in [BaselineKind::Ppnp, BaselineKind::RegKernel, BaselineKind::DiffKernel] {
            let err = propagate_with_limit(&BaselineSpec::new(kind), &g, &x, 5).unwrap_err();
            assert!(matches!(err, Error::Capacity { n: 10, limit: 5, .. }));
        }
        assert!(propagate_with_limit(&BaselineSpec::new(BaselineKind::RwKernel), &g, &x, 5).is_ok());
    }

    #[test]
    fn non_integer_step_count_rejected() {
        let g = SparseGraph::empty(3);
        let x = DenseMatrix::zeros(3, 1);
        let spec = BaselineSpec::new(BaselineKind::Sgc).with("K", 1.5);
        assert!(propagate(&spec, &g, &x).is_err());
    }

    #[test]
    fn block_counts() {
        let g = SparseGraph::from_edges(3, [(0, 1)]).unwrap();
        let x = DenseMatrix::zeros(3, 2);
        let count = |kind| propagate(&BaselineSpec::new(kind), &g, &x).unwrap().blocks().len();
        assert_eq!(count(BaselineKind::Gprgnn), 11);
        assert_eq!(count(BaselineKind::ChebNet), 3);
        assert_eq!(count(BaselineKind::Sage), 3);
        assert_eq!(count(BaselineKind::H2gcn), 3);
        assert_eq!(count(BaselineKind::G2cn), 2);
    }
}
