//! Multinomial logistic regression with LASSO and block group-LASSO penalties.
//!
//! Training minimizes
//! `mean CE(train) + lasso * ||W||_1 + group_lasso * sum_b ||W_b||_F`
//! with monotone FISTA: every epoch is one full-batch proximal step with a
//! backtracking line search. The bias is unpenalized. The weights of the epoch
//! with the best validation accuracy are returned.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::slimg::PropagatedFeatures;

/// Default proximal steps per epoch.
pub const STEPS_PER_EPOCH: usize = 20;

const MODEL_MAGIC: &[u8; 8] = b"SLIMGLM1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitConfig {
    pub lasso: f64,
    pub group_lasso: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Proximal-gradient steps taken between validation checks.
    pub steps_per_epoch: usize,
    /// Kept for API symmetry with the propagators; training itself is
    /// deterministic and draws no random numbers.
    pub seed: u64,
    /// Number of classes. Inferred from the largest label when `None`.
    pub n_classes: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lasso: 0.0,
            group_lasso: 0.0,
            max_epochs: 100,
            patience: 5,
            steps_per_epoch: STEPS_PER_EPOCH,
            seed: 0,
            n_classes: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub objective: f64,
    pub val_accuracy: f64,
}

/// Linear classifier over concatenated feature blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseLinearModel {
    /// `h x c`
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
    pub block_bounds: Vec<usize>,
    pub block_names: Vec<String>,
    pub train_trace: Vec<EpochRecord>,
}

impl SparseLinearModel {
    pub fn zeros(block_names: Vec<String>, block_bounds: Vec<usize>, c: usize) -> Result<Self> {
        check_bounds(&block_bounds, block_names.len())?;
        let h = *block_bounds.last().unwrap();
        Ok(SparseLinearModel {
            weights: DenseMatrix::zeros(h, c),
            bias: vec![0.0; c],
            block_bounds,
            block_names,
            train_trace: Vec::new(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.weights.cols()
    }

    /// Logits `X W + 1 b^T`.
    pub fn logits(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut z = x.matmul(&self.weights)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    /// Argmax class per row of an already concatenated feature matrix.
    pub fn predict_matrix(&self, x: &DenseMatrix) -> Result<Vec<usize>> {
        if x.cols() != self.n_features() {
            return Err(Error::Dimension(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.cols()
            )));
        }
        let z = self.logits(x)?;
        Ok((0..z.rows()).map(|i| argmax(z.row(i))).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let res = (|| -> std::io::Result<()> {
            w.write_all(MODEL_MAGIC)?;
            for v in [self.n_features(), self.n_classes(), self.block_names.len()] {
                w.write_all(&(v as u64).to_le_bytes())?;
            }
            for &b in &self.block_bounds {
                w.write_all(&(b as u64).to_le_bytes())?;
            }
            for name in &self.block_names {
                w.write_all(&(name.len() as u64).to_le_bytes())?;
                w.write_all(name.as_bytes())?;
            }
            for v in self.weights.as_slice().iter().chain(&self.bias) {
                w.write_all(&v.to_le_bytes())?;
            }
            w.flush()
        })();
        res.map_err(|e| Error::io(path, e))
    }

    /// Reads a model written by [`SparseLinearModel::save`]. The training
    /// trace is not stored.
    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: msg.to_string(),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MODEL_MAGIC {
            return Err(bad("not a model file"));
        }
        let h = word(&mut r).map_err(io)? as usize;
        let c = word(&mut r).map_err(io)? as usize;
        let nb = word(&mut r).map_err(io)? as usize;
        if nb > 1 << 20 {
            return Err(bad("implausible block count"));
        }
        let mut bounds = Vec::with_capacity(nb + 1);
        for _ in 0..=nb {
            bounds.push(word(&mut r).map_err(io)? as usize);
        }
        let mut names = Vec::with_capacity(nb);
        for _ in 0..nb {
            let len = word(&mut r).map_err(io)? as usize;
            if len > 4096 {
                return Err(bad("block name too long"));
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(io)?;
            names.push(String::from_utf8(buf).map_err(|_| bad("block name is not UTF-8"))?);
        }
        if bounds.last() != Some(&h) {
            return Err(bad("block bounds do not end at the feature count"));
        }
        let mut vals = Vec::with_capacity(h * c + c);
        let mut buf = [0u8; 8];
        for _ in 0..h * c + c {
            r.read_exact(&mut buf).map_err(io)?;
            vals.push(f64::from_le_bytes(buf));
        }
        let bias = vals.split_off(h * c);
        let mut m = SparseLinearModel::zeros(names, bounds, c).map_err(|e| bad(&e.to_string()))?;
        m.weights = DenseMatrix::from_vec(h, c, vals)?;
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite bias"));
        }
        m.bias = bias;
        Ok(m)
    }
}

fn word(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn check_bounds(bounds: &[usize], blocks: usize) -> Result<()> {
    if bounds.len() != blocks + 1 || bounds.first() != Some(&0) {
        return Err(Error::Argument(format!(
            "{} block bounds for {blocks} blocks",
            bounds.len()
        )));
    }
    if bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("block bounds must be strictly increasing".into()));
    }
    Ok(())
}

/// Index of the largest entry; the smallest index wins ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Mean cross-entropy of softmax(X W + b) and its gradients `(dW, db)`.
pub fn smooth_loss_and_grad(
    x: &DenseMatrix,
    y: &[usize],
    w: &DenseMatrix,
    b: &[f64],
) -> (f64, DenseMatrix, Vec<f64>) {
    let (m, h) = x.shape();
    let c = w.cols();
    let mut gw = DenseMatrix::zeros(h, c);
    let mut gb = vec![0.0; c];
    let mut loss = 0.0;
    let mut z = vec![0.0; c];
    let inv_m = 1.0 / m as f64;
    for i in 0..m {
        let xi = x.row(i);
        z.copy_from_slice(b);
        for (j, &xij) in xi.iter().enumerate() {
            if xij != 0.0 {
                for (zk, &wjk) in z.iter_mut().zip(w.row(j)) {
                    *zk += xij * wjk;
                }
            }
        }
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for zk in z.iter_mut() {
            *zk = (*zk - zmax).exp();
            sum += *zk;
        }
        loss += sum.ln() + zmax - (z[y[i]].ln() + zmax);
        // z now holds softmax - onehot, scaled by 1/m
        for (k, zk) in z.iter_mut().enumerate() {
            *zk /= sum;
            if k == y[i] {
                *zk -= 1.0;
            }
            *zk *= inv_m;
        }
        for (g, d) in gb.iter_mut().zip(&z) {
            *g += d;
        }
        for (j, &xij) in xi.iter().enumerate() {
            if xij != 0.0 {
                for (g, &d) in gw.row_mut(j).iter_mut().zip(&z) {
                    *g += xij * d;
                }
            }
        }
    }
    (loss * inv_m, gw, gb)
}

/// Elementwise `sign(w) * max(|w| - t, 0)`.
pub fn soft_threshold(w: &mut DenseMatrix, t: f64) {
    if t <= 0.0 {
        return;
    }
    for v in w.as_mut_slice() {
        let a = v.abs() - t;
        *v = if a > 0.0 { v.signum() * a } else { 0.0 };
    }
}

/// Scales each row block `bounds[b]..bounds[b+1]` (all classes jointly) by
/// `max(1 - t / ||W_b||_F, 0)`.
pub fn group_shrink(w: &mut DenseMatrix, bounds: &[usize], t: f64) {
    if t <= 0.0 {
        return;
    }
    let c = w.cols();
    for pair in bounds.windows(2) {
        let block = &mut w.as_mut_slice()[pair[0] * c..pair[1] * c];
        let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { (1.0 - t / norm).max(0.0) } else { 0.0 };
        block.iter_mut().for_each(|v| *v *= scale);
    }
}

fn penalty(w: &DenseMatrix, bounds: &[usize], l1: f64, l2: f64) -> f64 {
    let mut p = 0.0;
    if l1 > 0.0 {
        p += l1 * w.as_slice().iter().map(|v| v.abs()).sum::<f64>();
    }
    if l2 > 0.0 {
        let c = w.cols();
        for pair in bounds.windows(2) {
            let block = &w.as_slice()[pair[0] * c..pair[1] * c];
            p += l2 * block.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
    }
    p
}

/// Full regularized objective at `(w, b)`.
pub fn objective(
    x: &DenseMatrix,
    y: &[usize],
    w: &DenseMatrix,
    b: &[f64],
    bounds: &[usize],
    cfg: &FitConfig,
) -> f64 {
    smooth_loss_and_grad(x, y, w, b).0 + penalty(w, bounds, cfg.lasso, cfg.group_lasso)
}

fn accuracy_of(pred: &[usize], y: &[usize]) -> f64 {
    let hits = pred.iter().zip(y).filter(|(a, b)| a == b).count();
    hits as f64 / y.len() as f64
}

fn class_ids(labels: &[i64], idx: &[usize], c: usize, what: &str) -> Result<Vec<usize>> {
    idx.iter()
        .map(|&i| {
            let l = *labels
                .get(i)
                .ok_or_else(|| Error::Argument(format!("{what} index {i} beyond {} labels", labels.len())))?;
            if l < 0 {
                Err(Error::Argument(format!("{what} node {i} is unlabeled")))
            } else if l as usize >= c {
                Err(Error::Argument(format!("class id {l} not below class count {c}")))
            } else {
                Ok(l as usize)
            }
        })
        .collect()
}

/// Trains on `train_idx`, early-stopping on validation accuracy.
pub fn fit(
    f: &PropagatedFeatures,
    labels: &[i64],
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &FitConfig,
) -> Result<SparseLinearModel> {
    if train_idx.is_empty() {
        return Err(Error::Argument("empty training set".into()));
    }
    if val_idx.is_empty() {
        return Err(Error::Argument("empty validation set".into()));
    }
    if !(cfg.lasso >= 0.0 && cfg.group_lasso >= 0.0) {
        return Err(Error::Argument("penalty weights must be non-negative".into()));
    }
    if labels.len() != f.n() {
        return Err(Error::Dimension(format!(
            "{} labels for {} nodes",
            labels.len(),
            f.n()
        )));
    }
    let mut seen = vec![false; f.n()];
    for &i in train_idx {
        if i < seen.len() {
            seen[i] = true;
        }
    }
    if val_idx.iter().any(|&i| i < seen.len() && seen[i]) {
        return Err(Error::Argument("training and validation sets overlap".into()));
    }
    let c = match cfg.n_classes {
        Some(c) => c,
        None => labels.iter().copied().max().unwrap_or(-1).max(0) as usize + 1,
    };
    let y_train = class_ids(labels, train_idx, c, "training")?;
    let y_val = class_ids(labels, val_idx, c, "validation")?;
    let x_train = f.gather_rows(train_idx);
    let x_val = f.gather_rows(val_idx);
    if !x_train.is_finite() || !x_val.is_finite() {
        return Err(Error::Data("non-finite feature values".into()));
    }
    let bounds = f.bounds();
    let mut model = SparseLinearModel::zeros(f.names(), bounds.clone(), c)?;
    let h = model.n_features();

    let prox = |w: &mut DenseMatrix, step: f64| {
        soft_threshold(w, step * cfg.lasso);
        group_shrink(w, &bounds, step * cfg.group_lasso);
    };
    let obj = |w: &DenseMatrix, b: &[f64]| objective(&x_train, &y_train, w, b, &bounds, cfg);

    // x_k: monotone iterate, y_k: extrapolated point
    let mut xw = DenseMatrix::zeros(h, c);
    let mut xb = vec![0.0; c];
    let mut yw = xw.clone();
    let mut yb = xb.clone();
    let mut fx = obj(&xw, &xb);
    let mut t = 1.0f64;
    let mut step = 1.0f64;

    let mut best_acc = f64::NEG_INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
      for inner in 0..cfg.steps_per_epoch.max(1) {
        // let the step grow again after each accepted step so that flat
        // losses (small feature scales) are not stuck with a tiny step
        if epoch + inner > 0 {
            step *= 2.0;
        }
        let (fy, gw, gb) = smooth_loss_and_grad(&x_train, &y_train, &yw, &yb);
        let (zw, zb) = loop {
            let mut zw = yw.clone();
            zw.axpy(-step, &gw);
            prox(&mut zw, step);
            let zb: Vec<f64> = yb.iter().zip(&gb).map(|(b, g)| b - step * g).collect();
            let fz = smooth_loss_and_grad(&x_train, &y_train, &zw, &zb).0;
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((z, y), g) in zw.as_slice().iter().zip(yw.as_slice()).zip(gw.as_slice()) {
                lin += g * (z - y);
                sq += (z - y) * (z - y);
            }
            for ((z, y), g) in zb.iter().zip(&yb).zip(&gb) {
                lin += g * (z - y);
                sq += (z - y) * (z - y);
            }
            if fz <= fy + lin + sq / (2.0 * step) + 1e-12 * fy.abs() || step < 1e-12 {
                break (zw, zb);
            }
            step *= 0.5;
        };
        let fz = obj(&zw, &zb);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let (nw, nb, fnew) = if fz <= fx { (zw.clone(), zb.clone(), fz) } else { (xw.clone(), xb.clone(), fx) };
        // y = x_new + (t/t_next)(z - x_new) + ((t-1)/t_next)(x_new - x_old)
        let a = t / t_next;
        let bcoef = (t - 1.0) / t_next;
        yw = nw.clone();
        for (((yv, &zv), &nv), &ov) in yw
            .as_mut_slice()
            .iter_mut()
            .zip(zw.as_slice())
            .zip(nw.as_slice())
            .zip(xw.as_slice())
        {
            *yv = nv + a * (zv - nv) + bcoef * (nv - ov);
        }
        yb = nb
            .iter()
            .zip(&zb)
            .zip(&xb)
            .map(|((&nv, &zv), &ov)| nv + a * (zv - nv) + bcoef * (nv - ov))
            .collect();
        xw = nw;
        xb = nb;
        fx = fnew;
        t = t_next;
      }

        let cur = SparseLinearModel {
            weights: xw.clone(),
            bias: xb.clone(),
            block_bounds: Vec::new(),
            block_names: Vec::new(),
            train_trace: Vec::new(),
        };
        let acc = accuracy_of(&cur.predict_matrix(&x_val)?, &y_val);
        model.train_trace.push(EpochRecord {
            objective: fx,
            val_accuracy: acc,
        });
        if acc > best_acc {
            best_acc = acc;
            since_best = 0;
            model.weights = xw.clone();
            model.bias = xb.clone();
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(model)
}

/// Predicted class per node.
pub fn predict(m: &SparseLinearModel, f: &PropagatedFeatures) -> Result<Vec<usize>> {
    if f.width() != m.n_features() {
        return Err(Error::Dimension(format!(
            "model expects {} features, got {}",
            m.n_features(),
            f.width()
        )));
    }
    let all: Vec<usize> = (0..f.n()).collect();
    m.predict_matrix(&f.gather_rows(&all))
}

/// Frobenius norm of each block's weights, in block order.
pub fn group_norms(m: &SparseLinearModel) -> Vec<(String, f64)> {
    let c = m.n_classes();
    m.block_names
        .iter()
        .zip(m.block_bounds.windows(2))
        .map(|(name, pair)| {
            let block = &m.weights.as_slice()[pair[0] * c..pair[1] * c];
            (name.clone(), block.iter().map(|v| v * v).sum::<f64>().sqrt())
        })
        .collect()
}
