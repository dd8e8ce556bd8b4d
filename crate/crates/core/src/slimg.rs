//! The four-block SlimG propagator and its on-disk feature cache.
//!
//! `P(A, X) = U | g(X) | g(A_row^2 X) | g(A~_sym^2 X)` where `g` is PCA to
//! rank `r` followed by row-wise L2 normalization and `U` holds the leading
//! left singular vectors of `A`. The rank `r` keeps 90% of the adjacency
//! energy and never exceeds the feature dimension.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{normalize, spmm, NormScheme, SparseGraph};
use crate::linalg::{
    l2_normalize_rows, pca_reduce, rank_by_energy_with_svd, select_rank_by_energy, truncated_svd, SvdResult,
};

/// Fraction of `||A||_F^2` retained by the structural block.
pub const ENERGY_THRESHOLD: f64 = 0.9;

pub const BLOCK_NAMES: [&str; 4] = ["U", "gX", "gArow2X", "gAsym2X"];

const CACHE_MAGIC: &[u8; 8] = b"SLIMGPF1";

/// Ordered, named feature blocks sharing one row count.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagatedFeatures {
    blocks: Vec<(String, DenseMatrix)>,
    n: usize,
}

impl PropagatedFeatures {
    pub fn new(blocks: Vec<(String, DenseMatrix)>) -> Result<Self> {
        let n = match blocks.first() {
            Some((_, m)) => m.rows(),
            None => return Err(Error::Argument("at least one feature block is required".into())),
        };
        for (i, (name, m)) in blocks.iter().enumerate() {
            if m.rows() != n {
                return Err(Error::Dimension(format!(
                    "block {name} has {} rows, expected {n}",
                    m.rows()
                )));
            }
            if blocks[..i].iter().any(|(other, _)| other == name) {
                return Err(Error::Argument(format!("duplicate block name {name}")));
            }
        }
        Ok(PropagatedFeatures { blocks, n })
    }

    /// A single block named `name`.
    pub fn single(name: &str, x: DenseMatrix) -> Self {
        let n = x.rows();
        PropagatedFeatures {
            blocks: vec![(name.to_string(), x)],
            n,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[(String, DenseMatrix)] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&DenseMatrix> {
        self.blocks.iter().find(|(b, _)| b == name).map(|(_, m)| m)
    }

    pub fn names(&self) -> Vec<String> {
        self.blocks.iter().map(|(b, _)| b.clone()).collect()
    }

    pub fn width(&self) -> usize {
        self.blocks.iter().map(|(_, m)| m.cols()).sum()
    }

    /// Column offsets delimiting the blocks, starting at 0 and ending at the
    /// total width.
    pub fn bounds(&self) -> Vec<usize> {
        let mut b = Vec::with_capacity(self.blocks.len() + 1);
        b.push(0);
        for (_, m) in &self.blocks {
            b.push(b.last().unwrap() + m.cols());
        }
        b
    }

    /// Concatenated feature rows for the listed nodes, in block order.
    pub fn gather_rows(&self, idx: &[usize]) -> DenseMatrix {
        let parts: Vec<DenseMatrix> = self.blocks.iter().map(|(_, m)| m.select_rows(idx)).collect();
        let refs: Vec<&DenseMatrix> = parts.iter().collect();
        DenseMatrix::hcat(&refs).expect("blocks share row count")
    }

    pub fn into_blocks(self) -> Vec<(String, DenseMatrix)> {
        self.blocks
    }
}

/// Horizontal concatenation of all blocks plus the block boundary offsets.
pub fn concat_blocks(f: &PropagatedFeatures) -> (DenseMatrix, Vec<usize>) {
    let refs: Vec<&DenseMatrix> = f.blocks.iter().map(|(_, m)| m).collect();
    let m = DenseMatrix::hcat(&refs).expect("blocks share row count");
    (m, f.bounds())
}

/// `S (S X)` as two sparse-dense products.
pub fn two_hop(g: &SparseGraph, x: &DenseMatrix, scheme: NormScheme) -> Result<DenseMatrix> {
    let s = normalize(g, scheme);
    spmm(&s, &spmm(&s, x)?)
}

/// Rank used by the structural and PCA blocks for this graph and feature width.
pub fn slimg_rank(g: &SparseGraph, d: usize, seed: u64) -> Result<usize> {
    let r = select_rank_by_energy(g, ENERGY_THRESHOLD, d, seed)?;
    Ok(r.min(g.n()).min(d))
}

/// Row-normalized leading `r` left singular vectors, reusing `svd` when it
/// already covers rank `r`.
fn structural_block(g: &SparseGraph, r: usize, seed: u64, svd: Option<SvdResult>) -> Result<DenseMatrix> {
    let u = match svd {
        Some(s) if s.u.cols() >= r => s.u.column_range(0, r),
        _ => truncated_svd(g, r, seed)?.u,
    };
    Ok(l2_normalize_rows(&u))
}

/// Builds the four SlimG blocks, each `n x r`.
pub fn build_slimg_features(g: &SparseGraph, x: &DenseMatrix, seed: u64) -> Result<PropagatedFeatures> {
    let (n, d) = x.shape();
    if d == 0 {
        return Err(Error::Argument("node features need at least one column".into()));
    }
    if n != g.n() {
        return Err(Error::Dimension(format!(
            "{n} feature rows for a graph with {} nodes",
            g.n()
        )));
    }
    let (r, svd) = rank_by_energy_with_svd(g, ENERGY_THRESHOLD, d, seed)?;
    let r = r.min(n).min(d);

    let structural = || structural_block(g, r, seed, svd);
    let reduced = |m: &DenseMatrix| -> Result<DenseMatrix> { Ok(l2_normalize_rows(&pca_reduce(m, r)?)) };
    let row_two = || -> Result<DenseMatrix> { reduced(&two_hop(g, x, NormScheme::RowNoLoops)?) };
    let sym_two = || -> Result<DenseMatrix> { reduced(&two_hop(g, x, NormScheme::SymWithLoops)?) };

    let ((u, gx), (grow, gsym)) = rayon::join(
        || rayon::join(structural, || reduced(x)),
        || rayon::join(row_two, sym_two),
    );
    let mats = [u?, gx?, grow?, gsym?];
    let blocks = BLOCK_NAMES
        .iter()
        .zip(mats)
        .map(|(name, m)| (name.to_string(), m))
        .collect();
    PropagatedFeatures::new(blocks)
}

/// Hex SHA-256 over the graph structure and feature values.
pub fn dataset_hash(g: &SparseGraph, x: &DenseMatrix) -> String {
    let mut h = Sha256::new();
    h.update((g.n() as u64).to_le_bytes());
    for &p in g.row_ptr() {
        h.update((p as u64).to_le_bytes());
    }
    for &c in g.col_idx() {
        h.update((c as u64).to_le_bytes());
    }
    for &v in g.values() {
        h.update(v.to_le_bytes());
    }
    h.update((x.rows() as u64).to_le_bytes());
    h.update((x.cols() as u64).to_le_bytes());
    for &v in x.as_slice() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// File name of the cached features for a dataset hash and seed.
pub fn cache_path(dir: &Path, hash: &str, seed: u64) -> PathBuf {
    dir.join(format!("slimg-{hash}-{seed}.bin"))
}

/// Loads cached features if present, otherwise builds and stores them.
pub fn build_slimg_features_cached(
    g: &SparseGraph,
    x: &DenseMatrix,
    seed: u64,
    cache_dir: &Path,
) -> Result<PropagatedFeatures> {
    let path = cache_path(cache_dir, &dataset_hash(g, x), seed);
    if path.exists() {
        return read_features(&path);
    }
    let f = build_slimg_features(g, x, seed)?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    // write to a temporary name first so a concurrent reader never sees a partial file
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    write_features(&tmp, &f)?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(f)
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Binary layout: magic, n, block count, then per block the name length, the
/// UTF-8 name, rows and cols; then every block's values as little-endian f64.
pub fn write_features(path: &Path, f: &PropagatedFeatures) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        put_u64(&mut w, f.n as u64)?;
        put_u64(&mut w, f.blocks.len() as u64)?;
        for (name, m) in &f.blocks {
            put_u64(&mut w, name.len() as u64)?;
            w.write_all(name.as_bytes())?;
            put_u64(&mut w, m.rows() as u64)?;
            put_u64(&mut w, m.cols() as u64)?;
        }
        for (_, m) in &f.blocks {
            for v in m.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<PropagatedFeatures> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: msg.to_string(),
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != CACHE_MAGIC {
        return Err(bad("not a feature cache file"));
    }
    let io = |e| Error::io(path, e);
    let n = get_u64(&mut r).map_err(io)? as usize;
    let count = get_u64(&mut r).map_err(io)? as usize;
    let mut headers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = get_u64(&mut r).map_err(io)? as usize;
        if len > 4096 {
            return Err(bad("block name too long"));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name).map_err(|_| bad("block name is not UTF-8"))?;
        let rows = get_u64(&mut r).map_err(io)? as usize;
        let cols = get_u64(&mut r).map_err(io)? as usize;
        if rows != n {
            return Err(bad("block row count differs from header"));
        }
        headers.push((name, rows, cols));
    }
    let mut blocks = Vec::with_capacity(headers.len());
    let mut buf = [0u8; 8];
    for (name, rows, cols) in headers {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut buf).map_err(io)?;
            data.push(f64::from_le_bytes(buf));
        }
        blocks.push((name, DenseMatrix::from_vec(rows, cols, data)?));
    }
    PropagatedFeatures::new(blocks)
}
