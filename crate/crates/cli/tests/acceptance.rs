//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slimg::baselines::{propagate, BaselineKind, BaselineSpec};
use slimg::bench::{run_suite, DatasetSource, ExperimentConfig, Method, MethodConfig, RunReport};
use slimg::classifier::{group_shrink, smooth_loss_and_grad, soft_threshold};
use slimg::slimg::build_slimg_features;
use slimg::synth::{random_graph_with_edges, SANITY_SCENARIOS};
use slimg::{fit, DenseMatrix, FeatureKind, FitConfig, PropagatedFeatures, ScenarioSpec, Structure};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, o: &Outcome) {
    let status = if o.pass { "PASS" } else { "FAIL" };
    println!("{status} criterion {id} ({name}): {}", o.detail);
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn sanity_suite() -> (RunReport, Duration) {
    let datasets = SANITY_SCENARIOS
        .iter()
        .map(|&(s, f)| DatasetSource::Scenario(ScenarioSpec::new(s, f, 0)))
        .collect();
    let methods = [
        Method::Slimg,
        Method::Baseline(BaselineKind::Lr),
        Method::Baseline(BaselineKind::Sgc),
    ]
    .into_iter()
    .map(MethodConfig::default_for)
    .collect();
    let cfg = ExperimentConfig::new(datasets, methods);
    let start = Instant::now();
    let r = run_suite(&cfg).expect("sanity suite runs");
    (r, start.elapsed())
}

fn scenario_name(s: Structure, f: FeatureKind) -> String {
    ScenarioSpec::new(s, f, 0).name()
}

fn criterion_1(r: &RunReport, took: Duration) -> Outcome {
    let mut pass = took <= Duration::from_secs(600);
    let mut parts = Vec::new();
    for d in &r.datasets {
        let a = r.aggregate(d, Method::Slimg).unwrap();
        let m = a.mean.unwrap_or(0.0);
        pass &= m >= 0.80 && a.n_failed == 0;
        parts.push(format!("{d}={}", pct(m)));
    }
    Outcome {
        pass,
        detail: format!(
            "SlimG mean accuracy >= 80.0 on all seven scenarios over 5 seeds: {} ({:.0}s)",
            parts.join(" "),
            took.as_secs_f64()
        ),
    }
}

fn criterion_2(r: &RunReport) -> Outcome {
    let lr = r
        .aggregate(
            &scenario_name(Structure::Homophily, FeatureKind::Random),
            Method::Baseline(BaselineKind::Lr),
        )
        .and_then(|a| a.mean)
        .unwrap_or(1.0);
    let sgc = r
        .aggregate(
            &scenario_name(Structure::Uniform, FeatureKind::Semantic),
            Method::Baseline(BaselineKind::Sgc),
        )
        .and_then(|a| a.mean)
        .unwrap_or(1.0);
    Outcome {
        pass: lr <= 0.35 && sgc <= 0.65,
        detail: format!(
            "LR on homophily-random {} (<= 35.0), SGC on uniform-semantic {} (<= 65.0)",
            pct(lr),
            pct(sgc)
        ),
    }
}

fn find_citation(root: &Path, name: &str) -> Option<PathBuf> {
    [root.join(name), root.to_path_buf()]
        .into_iter()
        .find(|d| d.join(format!("{name}.content")).is_file() && d.join(format!("{name}.cites")).is_file())
}

fn criterion_3() -> Outcome {
    let Some(root) = std::env::var_os("SLIMG_DATA_DIR").map(PathBuf::from) else {
        return Outcome {
            pass: false,
            detail: "SLIMG_DATA_DIR is not set; Cora and CiteSeer files are required".into(),
        };
    };
    let targets = [("cora", 0.778, 0.030), ("citeseer", 0.671, 0.035)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, want, tol) in targets {
        let Some(dir) = find_citation(&root, name) else {
            pass = false;
            parts.push(format!("{name}: files not found under {}", root.display()));
            continue;
        };
        let cfg = ExperimentConfig::new(
            vec![DatasetSource::Citation {
                dir,
                name: name.into(),
            }],
            vec![MethodConfig::default_for(Method::Slimg)],
        );
        let start = Instant::now();
        match run_suite(&cfg) {
            Ok(r) => {
                let took = start.elapsed();
                let m = r.aggregate(name, Method::Slimg).and_then(|a| a.mean).unwrap_or(0.0);
                let ok = (m - want).abs() <= tol && took <= Duration::from_secs(300);
                pass &= ok;
                parts.push(format!(
                    "{name} {} (target {} +/- {}, {:.0}s)",
                    pct(m),
                    pct(want),
                    pct(tol),
                    took.as_secs_f64()
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_4(r: &RunReport) -> Outcome {
    let top_block = |dataset: &str, seed: u64| -> Option<String> {
        let rec = r
            .records
            .iter()
            .find(|x| x.dataset == dataset && x.method == Method::Slimg && x.seed == seed)?;
        let norms = &rec.outcome.as_ref().ok()?.group_norms;
        norms
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(n, _)| n.clone())
    };
    let count = |dataset: &str, block: &str| {
        (0..5)
            .filter(|&s| top_block(dataset, s).as_deref() == Some(block))
            .count()
    };
    let gx = count(&scenario_name(Structure::Uniform, FeatureKind::Semantic), "gX");
    let u = count(&scenario_name(Structure::Homophily, FeatureKind::Random), "U");
    Outcome {
        pass: gx >= 4 && u >= 4,
        detail: format!("gX largest on uniform-semantic in {gx}/5 seeds, U largest on homophily-random in {u}/5 (need >= 4)"),
    }
}

fn criterion_5() -> Outcome {
    let n = 100_000;
    let d = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DenseMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
    let mut times = Vec::new();
    for (i, m) in [1_000_000usize, 2_000_000, 4_000_000].into_iter().enumerate() {
        let g = random_graph_with_edges(n, m, i as u64).expect("scaling graph");
        let best = (0..2)
            .map(|_| {
                let start = Instant::now();
                build_slimg_features(&g, &x, 0).expect("feature build");
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min);
        times.push(best);
    }
    let ratios = [times[1] / times[0], times[2] / times[1]];
    Outcome {
        pass: ratios.iter().all(|&r| r <= 2.5),
        detail: format!(
            "feature build at 1M/2M/4M edges: {:.2}s/{:.2}s/{:.2}s, growth per doubling {:.2} and {:.2} (<= 2.5)",
            times[0], times[1], times[2], ratios[0], ratios[1]
        ),
    }
}

fn criterion_6() -> Outcome {
    let kinds = [
        BaselineKind::Sgc,
        BaselineKind::Dgc,
        BaselineKind::S2gc,
        BaselineKind::G2cn,
        BaselineKind::Appnp,
        BaselineKind::Gprgnn,
        BaselineKind::ChebNet,
        BaselineKind::Sage,
        BaselineKind::H2gcn,
        BaselineKind::RwKernel,
    ];
    let mut worst = 0.0f64;
    let mut worst_kind = "";
    for seed in 0..10 {
        let c = common::random_case(50, 4, 0.08, 1000 + seed);
        for kind in kinds {
            for cell in kind.default_grid() {
                let spec = cell.iter().fold(BaselineSpec::new(kind), |s, &(k, v)| s.with(k, v));
                let got = propagate(&spec, &c.graph, &c.x).expect("propagate");
                let want = common::dense_reference(&spec, &c);
                let dev = if got.blocks().len() == want.len() {
                    got.blocks()
                        .iter()
                        .zip(&want)
                        .map(|((_, g), w)| common::max_diff(w, g))
                        .fold(0.0, f64::max)
                } else {
                    f64::INFINITY
                };
                if dev > worst || dev.is_nan() {
                    worst = if dev.is_nan() { f64::INFINITY } else { dev };
                    worst_kind = kind.name();
                }
            }
        }
    }
    Outcome {
        pass: worst <= 1e-8,
        detail: format!("max deviation from dense formulas over 10 graphs: {worst:.2e} ({worst_kind}; <= 1e-8)"),
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // gradient against central differences
    let x = DenseMatrix::from_fn(5, 4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let y = [0usize, 2, 1, 2, 0];
    let w = DenseMatrix::from_fn(4, 3, |_, _| rng.random::<f64>() - 0.5);
    let b = vec![0.1, -0.2, 0.05];
    let (_, gw, gb) = smooth_loss_and_grad(&x, &y, &w, &b);
    let h = 1e-5;
    let (mut err, mut norm) = (0.0f64, 0.0f64);
    for j in 0..4 {
        for k in 0..3 {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp.set(j, k, w.get(j, k) + h);
            wm.set(j, k, w.get(j, k) - h);
            let num = (smooth_loss_and_grad(&x, &y, &wp, &b).0 - smooth_loss_and_grad(&x, &y, &wm, &b).0) / (2.0 * h);
            err += (num - gw.get(j, k)).powi(2);
            norm += num * num;
        }
    }
    for k in 0..3 {
        let (mut bp, mut bm) = (b.clone(), b.clone());
        bp[k] += h;
        bm[k] -= h;
        let num = (smooth_loss_and_grad(&x, &y, &w, &bp).0 - smooth_loss_and_grad(&x, &y, &w, &bm).0) / (2.0 * h);
        err += (num - gb[k]).powi(2);
        norm += num * num;
    }
    let rel = (err / norm).sqrt();

    // objective monotone over a full training run
    let labels: Vec<i64> = (0..120).map(|i| (i % 3) as i64).collect();
    let feats = DenseMatrix::from_fn(120, 9, |i, j| {
        let noise = rng.random::<f64>() - 0.5;
        if j < 3 && j == labels[i] as usize {
            1.0 + noise
        } else {
            noise
        }
    });
    let blocks = vec![
        ("a".to_string(), feats.column_range(0, 3)),
        ("b".to_string(), feats.column_range(3, 9)),
    ];
    let f = PropagatedFeatures::new(blocks).expect("blocks");
    let train: Vec<usize> = (0..60).collect();
    let val: Vec<usize> = (60..90).collect();
    let cfg = FitConfig {
        lasso: 1e-3,
        group_lasso: 1e-3,
        patience: 100,
        ..FitConfig::default()
    };
    let m = fit(&f, &labels, &train, &val, &cfg).expect("fit");
    let monotone = m
        .train_trace
        .windows(2)
        .all(|p| p[1].objective <= p[0].objective + 1e-10);

    // prox identities
    let mut prox_ok = true;
    for _ in 0..1000 {
        let v: f64 = rng.random::<f64>() * 20.0 - 10.0;
        let t: f64 = rng.random::<f64>() * 5.0;
        let mut s = DenseMatrix::from_vec(1, 1, vec![v]).unwrap();
        soft_threshold(&mut s, t);
        prox_ok &= s.get(0, 0) == v.signum() * (v.abs() - t).max(0.0);
        let vals: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let mut g = DenseMatrix::from_vec(2, 2, vals.clone()).unwrap();
        group_shrink(&mut g, &[0, 2], t);
        let nrm = vals.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = if nrm > 0.0 { (1.0 - t / nrm).max(0.0) } else { 0.0 };
        prox_ok &= g.as_slice().iter().zip(&vals).all(|(a, b)| *a == b * scale);
    }
    Outcome {
        pass: rel <= 1e-6 && monotone && prox_ok,
        detail: format!(
            "gradient relative error {rel:.1e} (<= 1e-6), objective monotone over {} epochs: {monotone}, prox identities exact: {prox_ok}",
            m.train_trace.len()
        ),
    }
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    let run = |out: &Path| {
        Command::new(env!("CARGO_BIN_EXE_slimg"))
            .args(["sanity", "--seeds", "1", "--out-dir"])
            .arg(out)
            .env_remove("SLIMG_CACHE_DIR")
            .output()
            .expect("run slimg")
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let (oa, ob) = (run(&a), run(&b));
    let codes_ok = [&oa, &ob].iter().all(|o| matches!(o.status.code(), Some(0) | Some(3)));
    let same = |name: &str| {
        let (x, y) = (std::fs::read(a.join(name)), std::fs::read(b.join(name)));
        matches!((x, y), (Ok(x), Ok(y)) if x == y)
    };
    let identical = same("report.md") && same("runs.csv") && oa.stdout == ob.stdout;
    Outcome {
        pass: codes_ok && identical,
        detail: format!(
            "two `sanity --seeds 1` runs: exit codes {:?}/{:?}, report.md and runs.csv byte-identical: {identical}",
            oa.status.code(),
            ob.status.code()
        ),
    }
}

fn main() {
    let (suite, took) = sanity_suite();
    let outcomes = [
        (1, "sanity sweep", criterion_1(&suite, took)),
        (2, "baseline failure pattern", criterion_2(&suite)),
        (3, "Cora and CiteSeer", criterion_3()),
        (4, "interpretability", criterion_4(&suite)),
        (5, "feature-build scaling", criterion_5()),
        (6, "oracle equivalence", criterion_6()),
        (7, "optimizer correctness", criterion_7()),
        (8, "determinism", criterion_8()),
    ];
    for (id, name, o) in &outcomes {
        report(*id, name, o);
    }
    let failed = outcomes.iter().filter(|(_, _, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
