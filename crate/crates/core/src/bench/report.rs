//! Aggregation of run records into per-method summaries, ranks, a CSV of
//! every run and a Markdown accuracy table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{cell_string, Method, RunRecord};
use crate::error::{Error, Result};

/// Test accuracy summary of one method on one dataset across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub dataset: String,
    pub method: Method,
    /// Mean and population standard deviation over successful seeds.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
    /// First failure message, if any seed failed.
    pub failure: Option<String>,
    /// Mean norm of each weight block over successful seeds, in block order.
    pub group_norms: Vec<(String, f64)>,
}

impl Aggregate {
    pub fn failed(&self) -> bool {
        self.mean.is_none()
    }
}

/// All records of a suite plus derived summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub datasets: Vec<String>,
    pub methods: Vec<Method>,
    /// Sorted by dataset, method (both in configured order) and seed.
    pub records: Vec<RunRecord>,
    /// One per (dataset, method), datasets outermost.
    pub aggregates: Vec<Aggregate>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    (m, v.sqrt())
}

/// Ranks in `1..=len`, higher value is better, ties share the average rank and
/// `None` entries tie for the worst positions.
pub fn average_ranks(values: &[Option<f64>]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    let key = |i: usize| values[i].unwrap_or(f64::NEG_INFINITY);
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && key(order[end]) == key(order[start]) {
            end += 1;
        }
        // positions start+1 ..= end share their average
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

impl RunReport {
    pub fn new(datasets: Vec<String>, methods: Vec<Method>, mut records: Vec<RunRecord>) -> Self {
        let pos_d = |d: &str| datasets.iter().position(|x| x == d).unwrap_or(usize::MAX);
        let pos_m = |m: Method| methods.iter().position(|&x| x == m).unwrap_or(usize::MAX);
        records.sort_by_key(|r| (pos_d(&r.dataset), pos_m(r.method), r.seed));
        let mut aggregates = Vec::new();
        for d in &datasets {
            for &m in &methods {
                let rs: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| &r.dataset == d && r.method == m)
                    .collect();
                let ok: Vec<_> = rs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
                let failure = rs.iter().find_map(|r| r.outcome.as_ref().err().cloned());
                let accs: Vec<f64> = ok.iter().map(|o| o.test_accuracy).collect();
                let (mean, std) = if accs.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_std(&accs);
                    (Some(m), Some(s))
                };
                let mut norms: Vec<(String, f64)> = Vec::new();
                for o in &ok {
                    for (i, (name, v)) in o.group_norms.iter().enumerate() {
                        match norms.get_mut(i) {
                            Some(slot) if slot.0 == *name => slot.1 += v / ok.len() as f64,
                            _ => norms.push((name.clone(), v / ok.len() as f64)),
                        }
                    }
                }
                aggregates.push(Aggregate {
                    dataset: d.clone(),
                    method: m,
                    mean,
                    std,
                    n_ok: ok.len(),
                    n_failed: rs.len() - ok.len(),
                    failure,
                    group_norms: norms,
                });
            }
        }
        RunReport {
            datasets,
            methods,
            records,
            aggregates,
        }
    }

    pub fn aggregate(&self, dataset: &str, method: Method) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.dataset == dataset && a.method == method)
    }

    /// Rank of every method on `dataset`, in method order.
    pub fn ranks(&self, dataset: &str) -> Vec<f64> {
        let vals: Vec<Option<f64>> = self
            .methods
            .iter()
            .map(|&m| self.aggregate(dataset, m).and_then(|a| a.mean))
            .collect();
        average_ranks(&vals)
    }

    /// Mean rank of `method` over all datasets.
    pub fn average_rank(&self, method: Method) -> f64 {
        let i = self.methods.iter().position(|&m| m == method).unwrap_or(0);
        let total: f64 = self.datasets.iter().map(|d| self.ranks(d)[i]).sum();
        total / self.datasets.len() as f64
    }

    /// Mean accuracy over datasets; `None` if the method failed anywhere.
    pub fn average_accuracy(&self, method: Method) -> Option<f64> {
        let accs: Option<Vec<f64>> = self
            .datasets
            .iter()
            .map(|d| self.aggregate(d, method).and_then(|a| a.mean))
            .collect();
        accs.map(|a| a.iter().sum::<f64>() / a.len() as f64)
    }

    /// One line per run. Wall-clock times are left out so the file is
    /// reproducible.
    pub fn runs_csv(&self) -> String {
        let mut s = String::from("dataset,method,seed,status,val_acc,test_acc,params\n");
        for r in &self.records {
            match &r.outcome {
                Ok(o) => writeln!(
                    s,
                    "{},{},{},ok,{:.6},{:.6},{}",
                    r.dataset,
                    r.method,
                    r.seed,
                    o.val_accuracy,
                    o.test_accuracy,
                    cell_string(&o.best)
                ),
                Err(e) => writeln!(
                    s,
                    "{},{},{},failed,,,{}",
                    r.dataset,
                    r.method,
                    r.seed,
                    e.replace([',', '\n'], ";")
                ),
            }
            .unwrap();
        }
        s
    }

    /// Accuracy table in percent with the best entry of each column in bold,
    /// followed by SlimG block norms when SlimG was run.
    pub fn markdown(&self) -> String {
        let mut s = String::from("# Results\n\nTest accuracy (%), mean");
        let single_seed = self
            .aggregates
            .iter()
            .all(|a| a.n_ok + a.n_failed <= 1);
        if !single_seed {
            s.push_str(" ± std over seeds");
        }
        s.push_str(".\n\n| Method |");
        for d in &self.datasets {
            write!(s, " {d} |").unwrap();
        }
        s.push_str(" Avg. Acc | Avg. Rank |\n|---|");
        s.push_str(&"---:|".repeat(self.datasets.len() + 2));
        s.push('\n');

        let best_of = |vals: Vec<Option<f64>>, higher: bool| -> Option<f64> {
            vals.into_iter()
                .flatten()
                .reduce(|a, b| if (b > a) == higher { b } else { a })
        };
        let fmt_pct = |v: f64| format!("{:.1}", 100.0 * v);
        let col_best: Vec<Option<String>> = self
            .datasets
            .iter()
            .map(|d| {
                best_of(
                    self.methods
                        .iter()
                        .map(|&m| self.aggregate(d, m).and_then(|a| a.mean))
                        .collect(),
                    true,
                )
                .map(fmt_pct)
            })
            .collect();
        let acc_best = best_of(self.methods.iter().map(|&m| self.average_accuracy(m)).collect(), true)
            .map(fmt_pct);
        let rank_best = best_of(
            self.methods.iter().map(|&m| Some(self.average_rank(m))).collect(),
            false,
        )
        .map(|r| format!("{r:.1}"));
        let bold = |text: String, best: &Option<String>| {
            if best.as_deref() == Some(text.as_str()) {
                format!("**{text}**")
            } else {
                text
            }
        };

        for &m in &self.methods {
            write!(s, "| {m} |").unwrap();
            for (d, best) in self.datasets.iter().zip(&col_best) {
                let a = self.aggregate(d, m);
                let cell = match a.and_then(|a| a.mean.zip(a.std)) {
                    Some((mean, std)) => {
                        let mut c = bold(fmt_pct(mean), best);
                        if !single_seed {
                            write!(c, " ± {}", fmt_pct(std)).unwrap();
                        }
                        if a.is_some_and(|a| a.n_failed > 0) {
                            c.push_str(" (partial)");
                        }
                        c
                    }
                    None => match a.and_then(|a| a.failure.as_deref()) {
                        Some(super::OOM) => super::OOM.to_string(),
                        _ => "failed".to_string(),
                    },
                };
                write!(s, " {cell} |").unwrap();
            }
            let avg = self
                .average_accuracy(m)
                .map(|v| bold(fmt_pct(v), &acc_best))
                .unwrap_or_else(|| "-".into());
            let rank = bold(format!("{:.1}", self.average_rank(m)), &rank_best);
            writeln!(s, " {avg} | {rank} |").unwrap();
        }

        if self.methods.contains(&Method::Slimg) {
            let rows: Vec<&Aggregate> = self
                .datasets
                .iter()
                .filter_map(|d| self.aggregate(d, Method::Slimg))
                .filter(|a| !a.group_norms.is_empty())
                .collect();
            if let Some(first) = rows.first() {
                s.push_str("\n## SlimG block norms\n\nMean Frobenius norm of each weight block.\n\n| Dataset |");
                for (name, _) in &first.group_norms {
                    write!(s, " {name} |").unwrap();
                }
                s.push_str("\n|---|");
                s.push_str(&"---:|".repeat(first.group_norms.len()));
                s.push('\n');
                for a in rows {
                    write!(s, "| {} |", a.dataset).unwrap();
                    for (_, v) in &a.group_norms {
                        write!(s, " {v:.4} |").unwrap();
                    }
                    s.push('\n');
                }
            }
        }

        let failures: Vec<&Aggregate> = self.aggregates.iter().filter(|a| a.n_failed > 0).collect();
        if !failures.is_empty() {
            s.push_str("\n## Failures\n\n");
            for a in failures {
                writeln!(
                    s,
                    "- {} on {}: {} of {} seeds failed ({})",
                    a.method,
                    a.dataset,
                    a.n_failed,
                    a.n_ok + a.n_failed,
                    a.failure.as_deref().unwrap_or("")
                )
                .unwrap();
            }
        }
        s
    }

    /// Writes `runs.csv` and `report.md` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [("runs.csv", self.runs_csv()), ("report.md", self.markdown())] {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    /// Accuracy of every successful run grouped by (dataset, method).
    pub fn accuracies(&self) -> BTreeMap<(String, String), Vec<f64>> {
        let mut out: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for r in &self.records {
            if let Ok(o) = &r.outcome {
                out.entry((r.dataset.clone(), r.method.to_string()))
                    .or_default()
                    .push(o.test_accuracy);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn ranks_stay_within_bounds(accs in prop::collection::vec(prop::option::of(0u8..5), 1..8)) {
            let accs: Vec<Option<f64>> = accs.into_iter().map(|a| a.map(f64::from)).collect();
            let ranks = average_ranks(&accs);
            let k = accs.len() as f64;
            prop_assert!(ranks.iter().all(|&r| (1.0..=k).contains(&r)));
            let total: f64 = ranks.iter().sum();
            prop_assert!((total - k * (k + 1.0) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ranks_average_ties_and_put_failures_last() {
        assert_eq!(average_ranks(&[Some(0.9), Some(0.8), Some(0.9)]), vec![1.5, 3.0, 1.5]);
        assert_eq!(average_ranks(&[None, Some(0.1), None]), vec![2.5, 1.0, 2.5]);
        assert_eq!(average_ranks(&[Some(0.5)]), vec![1.0]);
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
