//! Dense brute-force reference implementations shared by the test targets.
//! Everything here is computed from a plain edge list with nalgebra, without
//! going through the crate's sparse normalization code.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slimg::baselines::{BaselineKind, BaselineSpec};
use slimg::{DenseMatrix, SparseGraph};

pub struct Case {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub graph: SparseGraph,
    pub x: DenseMatrix,
}

pub fn random_case(n: usize, d: usize, density: f64, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    let graph = SparseGraph::from_edges(n, edges.clone()).unwrap();
    let x = DenseMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    Case { n, edges, graph, x }
}

pub fn adjacency(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(n, n);
    for &(u, v) in edges {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    a
}

fn inv_or_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0 / v
    } else {
        0.0
    }
}

/// `D^-1/2 A D^-1/2`, optionally after adding `I`.
pub fn sym(a: &DMatrix<f64>, loops: bool) -> DMatrix<f64> {
    let n = a.nrows();
    let a = if loops { a + DMatrix::identity(n, n) } else { a.clone() };
    let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] * inv_or_zero(d[i]).sqrt() * inv_or_zero(d[j]).sqrt())
}

/// `D^-1 A`, optionally after adding `I`.
pub fn row(a: &DMatrix<f64>, loops: bool) -> DMatrix<f64> {
    let n = a.nrows();
    let a = if loops { a + DMatrix::identity(n, n) } else { a.clone() };
    let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] * inv_or_zero(d[i]))
}

/// `I - A_sym`
pub fn laplacian(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::identity(n, n) - sym(a, false)
}

pub fn matpow(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        p = &p * m;
    }
    p
}

pub fn to_na(x: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j))
}

pub fn max_diff(a: &DMatrix<f64>, b: &DenseMatrix) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), b.shape());
    let mut m = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            m = m.max((a[(i, j)] - b.get(i, j)).abs());
        }
    }
    m
}

/// Dense blocks for `spec` computed straight from the formulas.
pub fn dense_reference(spec: &BaselineSpec, c: &Case) -> Vec<DMatrix<f64>> {
    let a = adjacency(c.n, &c.edges);
    let x = to_na(&c.x);
    let id = DMatrix::<f64>::identity(c.n, c.n);
    let p = |k: &str| spec.get(k).unwrap();
    let ku = |k: &str| spec.get(k).unwrap() as usize;
    match spec.kind {
        BaselineKind::Lr => vec![x],
        BaselineKind::Sgc => vec![matpow(&sym(&a, true), ku("K")) * x],
        BaselineKind::Dgc => {
            let (k, t) = (p("K"), p("T"));
            let step = &id * (1.0 - t / k) + sym(&a, true) * (t / k);
            vec![matpow(&step, ku("K")) * x]
        }
        BaselineKind::S2gc => {
            let alpha = p("alpha");
            let s = sym(&a, true);
            let mut total = DMatrix::<f64>::zeros(c.n, c.n);
            for k in 1..=ku("K") {
                total += &id * alpha + matpow(&s, k) * (1.0 - alpha);
            }
            vec![total * x]
        }
        BaselineKind::G2cn => {
            let k = ku("K");
            let s = sym(&a, false);
            (1..=ku("N"))
                .map(|i| {
                    let b = p(&format!("b{i}"));
                    let m = &id * (b - 1.0) + &s;
                    let step = &id - (&m * &m) * (p("T") / k as f64);
                    matpow(&step, k) * &x
                })
                .collect()
        }
        BaselineKind::Ppnp => {
            let m = &id - sym(&a, true) * (1.0 - p("alpha"));
            vec![m.try_inverse().unwrap() * x]
        }
        BaselineKind::Appnp => {
            let (k, alpha) = (ku("K"), p("alpha"));
            let s = sym(&a, true);
            let mut total = matpow(&s, k) * (1.0 - alpha).powi(k as i32);
            for j in 0..k {
                total += matpow(&s, j) * (alpha * (1.0 - alpha).powi(j as i32));
            }
            vec![total * x]
        }
        BaselineKind::Gprgnn => (0..=ku("K")).map(|k| matpow(&sym(&a, true), k) * &x).collect(),
        BaselineKind::ChebNet => (0..ku("K")).map(|k| matpow(&sym(&a, false), k) * &x).collect(),
        BaselineKind::Sage => (0..=ku("K")).map(|k| matpow(&row(&a, false), k) * &x).collect(),
        BaselineKind::H2gcn => (0..=2 * ku("K")).map(|k| matpow(&sym(&a, false), k) * &x).collect(),
        BaselineKind::RegKernel => {
            let m = &id + laplacian(&a) * p("sigma").powi(2);
            vec![m.try_inverse().unwrap() * x]
        }
        BaselineKind::DiffKernel => {
            let eig = laplacian(&a).symmetric_eigen();
            let f = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (-p("sigma").powi(2) / 2.0 * l).exp()));
            vec![&eig.eigenvectors * f * eig.eigenvectors.transpose() * x]
        }
        BaselineKind::RwKernel => {
            let m = &id * p("a") - laplacian(&a);
            vec![matpow(&m, ku("p")) * x]
        }
    }
}
