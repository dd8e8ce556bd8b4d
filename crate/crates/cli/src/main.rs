//! Command-line front end: synthetic data generation, the sanity-check suite,
//! configured experiments and model inspection.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slimg::bench::{load_config, run_suite, DatasetSource, ExperimentConfig, Method, MethodConfig, RunReport};
use slimg::synth::{is_excluded, write_dataset, SANITY_SCENARIOS};
use slimg::{gen_scenario, Error, FeatureKind, ScenarioSpec, SparseLinearModel, Structure};

/// Accuracy SlimG must reach on every sanity scenario.
const SANITY_THRESHOLD: f64 = 0.80;

#[derive(Parser)]
#[command(name = "slimg", version, about = "Sparse linear graph learning toolkit")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario and write it as edges.txt, features.csv,
    /// labels.txt and manifest.txt.
    Gen(GenArgs),
    /// Run the seven synthetic sanity scenarios and check SlimG reaches 80%.
    Sanity(SanityArgs),
    /// Run the experiment described by a configuration file.
    Run(RunArgs),
    /// Print block norms and the strongest features of a saved model.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    structure: Structure,
    #[arg(long)]
    features: FeatureKind,
    #[arg(long, default_value_t = 2500)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    c: usize,
    #[arg(long, default_value_t = 32)]
    d: usize,
    #[arg(long, default_value_t = 10.0)]
    avg_degree: f64,
    #[arg(long, default_value_t = 20.0)]
    homophily_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SanityArgs {
    /// Comma-separated methods. The 80% rule is checked only when SlimG is
    /// among them.
    #[arg(long, default_value = "slimg,lr,sgc", value_delimiter = ',')]
    methods: Vec<String>,
    /// Number of seeds, starting at 0.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value = "sanity-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long, default_value = "run-out")]
    out_dir: PathBuf,
    /// Also write the selected model of every run under <out-dir>/models.
    #[arg(long)]
    save_model: bool,
}

#[derive(Args)]
struct InspectArgs {
    model: PathBuf,
    /// Strongest features listed per class.
    #[arg(long, default_value_t = 5)]
    top: usize,
}

enum Failure {
    Error(Error),
    SanityFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot start {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Sanity(a) => sanity(a),
        Command::Run(a) => run(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::SanityFailed) => ExitCode::from(3),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 1 } else { 2 })
        }
    }
}

fn gen(a: GenArgs) -> Result<(), Failure> {
    if is_excluded(a.structure, a.features) {
        return Err(Error::Argument(format!(
            "{} structure with {} features is not a defined scenario",
            a.structure, a.features
        ))
        .into());
    }
    let spec = ScenarioSpec {
        n: a.n,
        c: a.c,
        d: a.d,
        avg_degree: a.avg_degree,
        homophily_ratio: a.homophily_ratio,
        ..ScenarioSpec::new(a.structure, a.features, a.seed)
    };
    let ds = gen_scenario(&spec)?;
    write_dataset(&a.out, &spec, &ds)?;
    println!(
        "{}: {} nodes, {} edges -> {}",
        spec.name(),
        ds.graph.n(),
        ds.graph.edge_count(),
        a.out.display()
    );
    Ok(())
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("SLIMG_CACHE_DIR").map(PathBuf::from)
}

fn sanity(a: SanityArgs) -> Result<(), Failure> {
    if a.seeds == 0 {
        return Err(Error::Argument("--seeds must be at least 1".into()).into());
    }
    let mut methods = Vec::new();
    for m in &a.methods {
        let m: Method = m.parse()?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let datasets = SANITY_SCENARIOS
        .iter()
        .map(|&(s, f)| DatasetSource::Scenario(ScenarioSpec::new(s, f, 0)))
        .collect();
    let mut cfg = ExperimentConfig::new(datasets, methods.into_iter().map(MethodConfig::default_for).collect());
    cfg.seeds = (0..a.seeds).collect();
    cfg.cache_dir = cache_dir();
    let report = run_suite(&cfg)?;
    report.write(&a.out_dir)?;

    eprintln!("reports written to {}", a.out_dir.display());
    if !report.methods.contains(&Method::Slimg) {
        return Ok(());
    }
    let mut all_pass = true;
    for d in &report.datasets {
        let agg = report.aggregate(d, Method::Slimg).expect("slimg was run");
        let (status, acc) = match agg.mean {
            Some(m) if m >= SANITY_THRESHOLD && agg.n_failed == 0 => ("PASS", format!("{:.1}", 100.0 * m)),
            Some(m) => ("FAIL", format!("{:.1}", 100.0 * m)),
            None => ("FAIL", "failed".into()),
        };
        all_pass &= status == "PASS";
        println!("{status} {d} slimg={acc}");
    }
    if all_pass {
        Ok(())
    } else {
        Err(Failure::SanityFailed)
    }
}

fn save_models(report: &RunReport, dir: &Path) -> Result<(), Error> {
    let dir = dir.join("models");
    for r in &report.records {
        if let Ok(o) = &r.outcome {
            let name = format!("{}-{}-seed{}.bin", r.dataset, r.method, r.seed);
            o.model.save(&dir.join(name))?;
        }
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&a.config)?;
    if cfg.cache_dir.is_none() {
        cfg.cache_dir = cache_dir();
    }
    let report = run_suite(&cfg)?;
    report.write(&a.out_dir)?;
    if a.save_model {
        std::fs::create_dir_all(a.out_dir.join("models")).map_err(|e| Error::Io {
            path: a.out_dir.join("models"),
            source: e,
        })?;
        save_models(&report, &a.out_dir)?;
    }
    print!("{}", report.markdown());
    for r in &report.records {
        if let Err(e) = &r.outcome {
            eprintln!("warning: {} on {} seed {}: {e}", r.method, r.dataset, r.seed);
        }
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<(), Failure> {
    let m = SparseLinearModel::load(&a.model)?;
    let mut norms = slimg::group_norms(&m);
    norms.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    println!("block norms:");
    for (name, v) in &norms {
        println!("  {name:<10} {v:.6}");
    }
    let locate = |j: usize| {
        let b = m.block_bounds.windows(2).position(|w| j >= w[0] && j < w[1]).unwrap_or(0);
        (m.block_names[b].as_str(), j - m.block_bounds[b])
    };
    for k in 0..m.n_classes() {
        let mut feats: Vec<(usize, f64)> = (0..m.n_features())
            .map(|j| (j, m.weights.get(j, k)))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        feats.sort_by(|x, y| y.1.abs().total_cmp(&x.1.abs()).then(x.0.cmp(&y.0)));
        println!("class {k}:");
        for &(j, w) in feats.iter().take(a.top) {
            let (block, local) = locate(j);
            println!("  {block}[{local}] {w:+.6}");
        }
    }
    Ok(())
}
