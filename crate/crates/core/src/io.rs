//! Text formats: edge lists, feature CSV, label files, and the raw
//! citation-network (`.content` / `.cites`) layout used by Cora and CiteSeer.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// Label value for nodes without a class.
pub const UNLABELED: i64 = -1;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Reads whitespace-separated `src dst` pairs (0-indexed) into an undirected,
/// deduplicated, self-loop-free graph. The node count is `max index + 1`, or
/// `n_hint` when that is larger.
pub fn load_edge_list(path: impl AsRef<Path>, n_hint: Option<usize>) -> Result<SparseGraph> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut edges = Vec::new();
    let mut max_idx = None::<usize>;
    for (line, l) in content_lines(&text) {
        let mut it = l.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(path, line, format!("expected `src dst`, got `{l}`")));
        };
        let parse = |tok: &str| {
            tok.parse::<usize>()
                .map_err(|_| parse_err(path, line, format!("`{tok}` is not a node index")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if let Some(n) = n_hint {
            if let Some(bad) = [u, v].into_iter().find(|&i| i >= n) {
                return Err(Error::Bounds {
                    path: path.to_path_buf(),
                    line,
                    index: bad,
                    n,
                });
            }
        }
        max_idx = Some(max_idx.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let n = max_idx.map_or(0, |m| m + 1).max(n_hint.unwrap_or(0));
    SparseGraph::from_edges(n, edges)
}

/// Reads one comma-separated row of reals per node.
pub fn load_features_csv(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, l) in content_lines(&text) {
        let before = data.len();
        for tok in l.split(',') {
            let tok = tok.trim();
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, line, format!("`{tok}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, "non-finite feature value"));
            }
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(parse_err(path, line, format!("expected {c} values, got {width}")))
            }
            _ => {}
        }
        rows += 1;
    }
    DenseMatrix::from_vec(rows, cols.unwrap_or(0), data)
}

/// Reads one integer label per line; `-1` marks an unlabeled node.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut labels = Vec::new();
    for (line, l) in content_lines(&text) {
        let y: i64 = l
            .parse()
            .map_err(|_| parse_err(path, line, format!("`{l}` is not an integer label")))?;
        if y < UNLABELED {
            return Err(parse_err(path, line, format!("label {y} below -1")));
        }
        labels.push(y);
    }
    Ok(labels)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes each undirected edge once as `u v` with `u < v`.
pub fn write_edge_list(path: impl AsRef<Path>, g: &SparseGraph) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for i in 0..g.n() {
        for &j in g.row_indices(i) {
            if !g.is_undirected() || i < j {
                writeln!(w, "{i} {j}").map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn write_features_csv(path: impl AsRef<Path>, x: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for i in 0..x.rows() {
        let row: Vec<String> = x.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[i64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for y in labels {
        writeln!(w, "{y}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// A citation network loaded from `<name>.content` and `<name>.cites`.
#[derive(Clone, Debug)]
pub struct CitationNetwork {
    pub graph: SparseGraph,
    pub features: DenseMatrix,
    pub labels: Vec<i64>,
    pub class_names: Vec<String>,
}

/// Loads the raw citation-network layout distributed with Cora and CiteSeer.
///
/// `.content` rows are `<paper id> <f_1> ... <f_d> <class>` (tab or space
/// separated); `.cites` rows are `<cited id> <citing id>`. Node order follows
/// `.content`, class ids follow the sorted class names, and citations that
/// mention papers absent from `.content` are skipped.
pub fn load_citation_network(dir: impl AsRef<Path>, name: &str) -> Result<CitationNetwork> {
    let dir = dir.as_ref();
    let content_path = dir.join(format!("{name}.content"));
    let cites_path = dir.join(format!("{name}.cites"));
    let content = read(&content_path)?;

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut feats: Vec<f64> = Vec::new();
    let mut classes: Vec<String> = Vec::new();
    let mut width = None;
    for (line, l) in content_lines(&content) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(parse_err(&content_path, line, "expected id, features and class"));
        }
        let d = toks.len() - 2;
        match width {
            None => width = Some(d),
            Some(w) if w != d => {
                return Err(parse_err(
                    &content_path,
                    line,
                    format!("expected {w} features, got {d}"),
                ))
            }
            _ => {}
        }
        if ids.insert(toks[0].to_string(), ids.len()).is_some() {
            return Err(parse_err(&content_path, line, format!("duplicate id {}", toks[0])));
        }
        for tok in &toks[1..toks.len() - 1] {
            let v: f64 = tok.parse().map_err(|_| {
                parse_err(&content_path, line, format!("`{tok}` is not a number"))
            })?;
            feats.push(v);
        }
        classes.push(toks[toks.len() - 1].to_string());
    }
    let n = ids.len();
    let class_names: Vec<String> = classes
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let class_id: HashMap<&str, i64> = class_names
        .iter()
        .enumerate()
        .map(|(k, c)| (c.as_str(), k as i64))
        .collect();
    let labels = classes.iter().map(|c| class_id[c.as_str()]).collect();

    let cites = read(&cites_path)?;
    let mut edges = Vec::new();
    for (line, l) in content_lines(&cites) {
        let mut it = l.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(&cites_path, line, "expected `cited citing`"));
        };
        if let (Some(&u), Some(&v)) = (ids.get(a), ids.get(b)) {
            edges.push((u, v));
        }
    }
    Ok(CitationNetwork {
        graph: SparseGraph::from_edges(n, edges)?,
        features: DenseMatrix::from_vec(n, width.unwrap_or(0), feats)?,
        labels,
        class_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn path_is_symmetrized() {
        let dir = tempfile::tempdir().unwrap();
        let g = load_edge_list(write(dir.path(), "e", "0 1\n1 2"), None).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.nnz(), 4);
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
            assert_eq!(g.get(i, j), 1.0);
        }
    }

    #[test]
    fn duplicates_collapse() {
        let dir = tempfile::tempdir().unwrap();
        let g = load_edge_list(write(dir.path(), "e", "0 1\n1 0\n0 1"), None).unwrap();
        assert_eq!(g.nnz(), 2);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn empty_file_uses_hint() {
        let dir = tempfile::tempdir().unwrap();
        let g = load_edge_list(write(dir.path(), "e", ""), Some(5)).unwrap();
        assert_eq!((g.n(), g.nnz()), (5, 0));
    }

    #[test]
    fn self_loops_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let g = load_edge_list(write(dir.path(), "e", "0 0\n0 1\n"), None).unwrap();
        assert_eq!(g.nnz(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_edge_list(write(dir.path(), "e", "0 1\n\n1 x\n"), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = load_edge_list(write(dir.path(), "e", "0 1 2\n"), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn index_beyond_hint_is_bounds_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_edge_list(write(dir.path(), "e", "0 1\n2 7\n"), Some(5)).unwrap_err();
        assert!(matches!(err, Error::Bounds { line: 2, index: 7, n: 5, .. }), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(load_edge_list("/definitely/not/here", None).unwrap_err().is_io());
    }

    #[test]
    fn features_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let x = load_features_csv(write(dir.path(), "x", "1,2.5\n-3,4e-1\n")).unwrap();
        assert_eq!(x.shape(), (2, 2));
        assert_eq!(x.get(1, 1), 0.4);
        let err = load_features_csv(write(dir.path(), "x", "1,2\n3\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let y = load_labels(write(dir.path(), "y", "0\n-1\n3\n")).unwrap();
        assert_eq!(y, vec![0, -1, 3]);
        assert!(matches!(
            load_labels(write(dir.path(), "y", "0\n-2\n")).unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn written_files_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let g = SparseGraph::from_edges(4, [(0, 1), (2, 3), (1, 3)]).unwrap();
        let x = DenseMatrix::from_fn(4, 2, |i, j| i as f64 * 0.1 - j as f64 / 3.0);
        write_edge_list(dir.path().join("g"), &g).unwrap();
        write_features_csv(dir.path().join("x"), &x).unwrap();
        write_labels(dir.path().join("y"), &[0, 1, -1, 1]).unwrap();
        assert_eq!(load_edge_list(dir.path().join("g"), Some(4)).unwrap(), g);
        assert_eq!(load_features_csv(dir.path().join("x")).unwrap(), x);
        assert_eq!(load_labels(dir.path().join("y")).unwrap(), vec![0, 1, -1, 1]);
    }

    #[test]
    fn citation_network_layout() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "toy.content",
            "p10\t1\t0\t0\tTheory\np7\t0\t1\t0\tAI\np3\t0\t0\t1\tTheory\n",
        );
        write(dir.path(), "toy.cites", "p10 p7\np7 p3\np3 ghost\np7 p10\n");
        let net = load_citation_network(dir.path(), "toy").unwrap();
        assert_eq!(net.class_names, vec!["AI", "Theory"]);
        assert_eq!(net.labels, vec![1, 0, 1]);
        assert_eq!(net.features.shape(), (3, 3));
        assert_eq!(net.graph.edge_count(), 2);
        assert_eq!(net.graph.get(0, 1), 1.0);
        assert_eq!(net.graph.get(1, 2), 1.0);
    }
}
