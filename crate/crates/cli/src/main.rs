//! `cprm`: environments, datasets, training, planning and benchmarks from the
//! command line.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use critical_prm::bench::{aggregate_curves, derive_seed, run_bench, BenchConfig};
use critical_prm::centrality::{build_dataset, CentralityConfig};
use critical_prm::cprm::{build_roadmap, plan, validate_query, CriticalPrmConfig, Method, PlanProblem};
use critical_prm::env::{
    generate_narrow_passage, Environment, NarrowPassageParams, State, DEFAULT_WALL_THICKNESS,
};
use critical_prm::io;
use critical_prm::learner::{train, MlpModel, TrainConfig};
use critical_prm::roadmap::{build_prm, default_gamma, RoadmapConfig};
use critical_prm::verify::selftest;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "cprm", version, about = "Critical probabilistic roadmaps")]
struct Cli {
    /// JSON object supplying flags; explicit flags take precedence. For
    /// `bench` this is the bench config itself.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for parallel stages (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate narrow-passage environments.
    GenEnvs(GenEnvs),
    /// Build a uniform PRM in one environment.
    BuildPrm(BuildPrm),
    /// Label PRM nodes with smoothed betweenness and write a balanced dataset.
    BuildDataset(BuildDataset),
    /// Train the criticality regressor.
    Train(Train),
    /// Build a roadmap and answer one query.
    Plan(Plan),
    /// Run the benchmark described by a bench config.
    Bench(Bench),
    /// Run the built-in oracle and gradient checks.
    Selftest,
}

#[derive(Args)]
struct GenEnvs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 3)]
    walls: usize,
    #[arg(long, default_value_t = 2)]
    gaps: usize,
    #[arg(long, default_value_t = 0.03)]
    gap_width: f64,
    #[arg(long, default_value_t = DEFAULT_WALL_THICKNESS)]
    wall_thickness: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BuildPrm {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    n: usize,
    /// Radius scale; the dimension default when absent.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildDataset {
    #[arg(long)]
    envs_dir: PathBuf,
    /// PRM nodes per environment.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Centrality source nodes per environment.
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Labelled nodes kept per environment before balancing.
    #[arg(long)]
    per_env: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    dataset: PathBuf,
    /// Layer widths, input first, e.g. `100,128,64,1`.
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 128, 64, 1])]
    arch: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_model: PathBuf,
}

#[derive(Args)]
struct Plan {
    #[arg(long)]
    env: PathBuf,
    /// Required by the critical methods.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "critical")]
    method: Method,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "Gamma")]
    gamma_oversample: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `x0,y0:gx,gy:r` (three coordinates each in 3D).
    #[arg(long)]
    query: String,
    /// Result file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Bench {
    #[arg(long)]
    out_records: PathBuf,
    /// Curves with build time amortized over each roadmap's problems.
    #[arg(long)]
    out_curves: PathBuf,
    /// Curves with full build time per problem; defaults next to `--out-curves`.
    #[arg(long)]
    out_curves_unamortized: Option<PathBuf>,
}

fn parse_state(s: &str) -> Result<State> {
    let coords = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().with_context(|| format!("bad coordinate {c:?}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(State::new(&coords)?)
}

fn parse_query(s: &str) -> Result<PlanProblem> {
    let parts: Vec<&str> = s.split(':').collect();
    let [init, goal, r] = parts.as_slice() else {
        bail!("query {s:?} must look like x0,y0:gx,gy:r");
    };
    Ok(PlanProblem {
        x_init: parse_state(init)?,
        goal_center: parse_state(goal)?,
        goal_radius: r.trim().parse().with_context(|| format!("bad goal radius {r:?}"))?,
    })
}

fn env_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no environment files in {}", dir.display());
    }
    Ok(files)
}

fn gen_envs(a: GenEnvs) -> Result<()> {
    let params = NarrowPassageParams {
        dim: a.dim,
        num_walls: a.walls,
        gaps_per_wall: a.gaps,
        gap_width: a.gap_width,
        wall_thickness: a.wall_thickness,
    };
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for i in 0..a.count {
        let env = generate_narrow_passage(&params, derive_seed(a.seed, i as u64))?;
        let path = a.out_dir.join(format!("env_{i:04}.json"));
        io::save_env(&env, &path)?;
    }
    println!("wrote {} environments to {}", a.count, a.out_dir.display());
    Ok(())
}

fn build_prm_cmd(a: BuildPrm) -> Result<()> {
    let env = io::load_env(&a.env)?;
    let cfg = RoadmapConfig {
        n: a.n,
        gamma: a.gamma.unwrap_or_else(|| default_gamma(env.dim())),
        radius_override: None,
    };
    let rm = build_prm(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let env_ref = a.env.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned());
    io::save_roadmap(&rm, &env_ref, &a.out)?;
    println!("{} nodes, {} edges", rm.len(), rm.edge_count());
    Ok(())
}

fn build_dataset_cmd(a: BuildDataset) -> Result<()> {
    let envs = env_files(&a.envs_dir)?
        .iter()
        .map(|p| io::load_env(p))
        .collect::<Result<Vec<Environment>, _>>()?;
    let dim = envs[0].dim();
    if envs.iter().any(|e| e.dim() != dim) {
        bail!("environments in {} have mixed dimensions", a.envs_dir.display());
    }
    let ds = build_dataset(
        &envs,
        &RoadmapConfig::new(a.n, dim),
        &CentralityConfig {
            m: a.m,
            smoothing: true,
            seed: a.seed,
        },
        a.per_env.unwrap_or(usize::MAX),
        &mut ChaCha8Rng::seed_from_u64(a.seed),
    )?;
    io::save_dataset(&ds, &a.out)?;
    println!("{} rows, {} critical", ds.len(), ds.critical_count());
    Ok(())
}

fn train_cmd(a: Train) -> Result<()> {
    let ds = io::load_dataset(&a.dataset)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        momentum: a.momentum,
        dropout_rate: a.dropout,
        validation_fraction: a.validation_fraction,
        seed: a.seed,
    };
    let (model, report) = train(&ds.to_samples(), &cfg, &a.arch)?;
    for e in &report.epochs {
        match e.validation_loss {
            Some(v) => eprintln!("epoch {:3}  train {:.4}  val {:.4}", e.epoch, e.train_loss, v),
            None => eprintln!("epoch {:3}  train {:.4}", e.epoch, e.train_loss),
        }
    }
    io::save_model(&model, &a.out_model)?;
    if let (Some(last), Some(base)) = (report.epochs.last(), report.constant_baseline_loss) {
        println!(
            "validation loss {:.4} (constant predictor {:.4})",
            last.validation_loss.unwrap_or(f64::NAN),
            base
        );
    }
    Ok(())
}

fn plan_cmd(a: Plan) -> Result<()> {
    let env = io::load_env(&a.env)?;
    let prob = parse_query(&a.query)?;
    let model: Option<MlpModel> = a.model.as_deref().map(io::load_model).transpose()?;
    let mut cfg = CriticalPrmConfig::new(a.n, env.dim(), a.seed);
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(g) = a.gamma_oversample {
        cfg.gamma_oversample = g;
    }
    // query validity first, so a bad query fails before the build
    validate_query(&env, &prob)?;
    let (rm, build) = build_roadmap(a.method, &env, model.as_ref(), &cfg)?;
    let mut res = plan(&env, &rm, &prob)?;
    res.timing.sample = build.sample;
    res.timing.predict = build.predict;
    res.timing.connect += build.connect;
    match a.out {
        Some(path) => {
            io::save_plan_result(&res, &path)?;
            if res.success {
                println!("success, cost {:.6}", res.cost);
            } else {
                println!("no path found");
            }
        }
        None => println!("{}", serde_json::to_string_pretty(&res)?),
    }
    Ok(())
}

fn bench_cmd(a: Bench, config: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading {}", config.display()))?;
    let cfg: BenchConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing bench config {}", config.display()))?;
    let model = match &cfg.model {
        Some(p) => {
            let p = config.parent().unwrap_or(Path::new(".")).join(p);
            Some(io::load_model(&p)?)
        }
        None => None,
    };
    let records = run_bench(&cfg, model.as_ref())?;
    io::save_records(&records, &a.out_records)?;
    io::save_curves(&aggregate_curves(&records, true), &a.out_curves)?;
    let unamortized = a.out_curves_unamortized.unwrap_or_else(|| {
        let stem = a.out_curves.file_stem().map_or_else(|| "curves".into(), |s| s.to_string_lossy().into_owned());
        a.out_curves.with_file_name(format!("{stem}_unamortized.csv"))
    });
    io::save_curves(&aggregate_curves(&records, false), &unamortized)?;
    println!("{} records", records.len());
    Ok(())
}

fn selftest_cmd() -> Result<bool> {
    let mut ok = true;
    for c in selftest() {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::GenEnvs(a) => gen_envs(a)?,
        Command::BuildPrm(a) => build_prm_cmd(a)?,
        Command::BuildDataset(a) => build_dataset_cmd(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Plan(a) => plan_cmd(a)?,
        Command::Bench(a) => {
            let Some(config) = cli.config.as_deref() else {
                Cli::command()
                    .error(ErrorKind::MissingRequiredArgument, "bench needs --config <FILE>")
                    .exit();
            };
            bench_cmd(a, config)?
        }
        Command::Selftest => return selftest_cmd(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let args = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
