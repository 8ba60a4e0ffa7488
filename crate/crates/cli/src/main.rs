use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use evcs_core::bench::{
    beta_sweep, day_seeds, learn_policy, run_benchmark, sensitivity_sweep, simulate_day, standard_roster,
    write_benchmark_csv, write_sweep_csv, write_trace_csv, Control, ExperimentConfig, Pricing, PolicySpec, Profile,
    SweepDimension, METRIC_FIELDS,
};
use evcs_core::ebo::PricingPolicy;
use evcs_core::env::admit;
use evcs_core::heuristic::{simulate_stage, ChargeRule};
use evcs_core::mpc::{build_mpc_model, plan_scenario};
use evcs_core::stochastic::{generate_sample_paths, stream_rng, Stream};
use evcs_core::validate;
use evcs_milp::{branch_and_bound, lpformat, MipOptions};

#[derive(Parser)]
#[command(name = "evcs", version, about = "EV charging station pricing and dispatch")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; the profile defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "desk")]
    profile: String,
    /// Overrides the training and evaluation seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// MPC branch-and-bound node limit per stage.
    #[arg(long, global = true)]
    node_limit: Option<usize>,
    /// MPC time limit per stage in milliseconds.
    #[arg(long, global = true)]
    time_limit_ms: Option<u64>,
    #[arg(long, global = true)]
    scenarios: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a pricing table and write it with its iteration log.
    Learn {
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Simulate one day and write the stage trace.
    Simulate {
        /// Learned table JSON; constant or event pricing otherwise.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        price: Option<f64>,
        #[arg(long, value_enum, default_value = "mpc")]
        control: ControlArg,
    },
    /// Run the ten-policy comparison on paired days.
    Benchmark {
        /// Learned table JSON; trained first when absent.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated policy ids to keep.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
    /// Sweep the variance weight, capacity or arrival rate.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Repetitions per value for the variance-weight sweep.
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Run the oracle suites.
    Validate,
    /// Solve a CPLEX-LP file with branch-and-bound.
    SolveLp {
        file: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        gap: f64,
    },
    /// Write the MPC model of one stage as CPLEX-LP.
    ExportModel {
        #[arg(long, default_value_t = 12)]
        stage: usize,
        #[arg(long, default_value_t = 1.5)]
        price: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ControlArg {
    Mpc,
    Greedy,
    Delayed,
}

impl From<ControlArg> for Control {
    fn from(c: ControlArg) -> Self {
        match c {
            ControlArg::Mpc => Control::Mpc,
            ControlArg::Greedy => Control::Greedy,
            ControlArg::Delayed => Control::Delayed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Beta,
    Capacity,
    Arrival,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'static str,
    profile: &'a str,
    config_sha256: String,
    learn_seed: u64,
    day_seeds: Vec<u64>,
    seconds: f64,
    outputs: Vec<String>,
}

struct Run {
    cfg: ExperimentConfig,
    profile: String,
    out_dir: PathBuf,
    outputs: Vec<String>,
    started: Instant,
}

impl Run {
    fn new(common: &Common) -> Result<Self> {
        let profile: Profile = common.profile.parse()?;
        let mut cfg = match &common.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::profile(profile),
        };
        if let Some(s) = common.seed {
            cfg.learn.seed = s;
            cfg.bench.seed = s;
        }
        if let Some(n) = common.node_limit {
            cfg.mpc.node_limit = n;
        }
        if let Some(ms) = common.time_limit_ms {
            cfg.mpc.time_limit_ms = Some(ms);
        }
        if let Some(m) = common.scenarios {
            cfg.mpc.scenarios = m;
        }
        fs::create_dir_all(&common.out_dir).with_context(|| format!("creating {}", common.out_dir.display()))?;
        Ok(Self {
            cfg,
            profile: common.profile.clone(),
            out_dir: common.out_dir.clone(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out_dir.join(name);
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out_dir.join(name)
    }

    fn finish(mut self, command: &str) -> Result<()> {
        let text = self.cfg.to_toml_string()?;
        fs::write(self.out_dir.join("config.toml"), &text)?;
        self.outputs.push("config.toml".into());
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            profile: &self.profile,
            config_sha256: hex::encode(Sha256::digest(text.as_bytes())),
            learn_seed: self.cfg.learn.seed,
            day_seeds: day_seeds(&self.cfg.bench),
            seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs.clone(),
        };
        let path = self.out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn train(run: &mut Run) -> Result<PricingPolicy> {
    let exo = run.cfg.exogenous()?;
    let (policy, log) = learn_policy(&exo, &run.cfg.learn)?;
    println!(
        "learned over {} episodes ({:?}), monotone records: {}",
        log.episodes.len(),
        log.stop,
        log.is_monotone()
    );
    let path = run.path("policy.json");
    policy.save_json(&path)?;
    log.write_trace_csv(run.create("learning_trace.csv")?)?;
    log.write_episodes_csv(run.create("episodes.csv")?)?;
    Ok(policy)
}

fn load_policy(run: &Run, path: &Path) -> Result<PricingPolicy> {
    PricingPolicy::load_json(path, run.cfg.station.price_cap).with_context(|| format!("loading {}", path.display()))
}

fn print_runs(runs: &[evcs_core::bench::PolicyRun]) {
    let shown = ["obj", "profit", "qos_cost", "service_ratio", "price_std"];
    print!("{:<6}", "policy");
    for name in shown {
        print!(" {name:>20}");
    }
    println!(" {:>8}", "secs");
    for r in runs {
        print!("{:<6}", r.spec.id);
        for (_, f) in METRIC_FIELDS.iter().filter(|(n, _)| shown.contains(n)) {
            let e = r.estimate(f);
            print!(" {:>20}", format!("{:.3} ± {:.3}", e.mean, e.half_width));
        }
        println!(" {:>8.1}", r.seconds);
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut run = Run::new(&cli.common)?;
    match cli.command {
        Command::Learn { episodes } => {
            if let Some(n) = episodes {
                run.cfg.learn.max_episodes = n;
            }
            train(&mut run)?;
            run.finish("learn")
        }
        Command::Simulate { policy, price, control } => {
            let exo = run.cfg.exogenous()?;
            let horizon = run.cfg.station.horizon;
            let prices = match (policy, price) {
                (Some(p), _) => load_policy(&run, &p)?,
                (None, Some(p)) => PricingPolicy::constant(horizon, p),
                (None, None) => PolicySpec {
                    id: "event".into(),
                    pricing: Pricing::Event(run.cfg.bench.event_prices),
                    control: control.into(),
                }
                .price_table(horizon, None)?,
            };
            let seed = day_seeds(&run.cfg.bench)[0];
            let mut trace = Vec::new();
            let m = simulate_day(&exo, control.into(), &prices, &run.cfg.mpc, seed, Some(&mut trace))?;
            for (name, f) in METRIC_FIELDS {
                println!("{name:<18} {:.4}", f(&m));
            }
            write_trace_csv(&trace, run.create("trace.csv")?)?;
            run.finish("simulate")
        }
        Command::Benchmark { policy, seeds, only } => {
            if let Some(n) = seeds {
                run.cfg.bench.seeds = n;
            }
            let mut specs = standard_roster(&run.cfg.bench);
            if !only.is_empty() {
                specs.retain(|s| only.contains(&s.id));
                if specs.is_empty() {
                    bail!("no policy matches {only:?}");
                }
            }
            let needs_table = specs.iter().any(|s| matches!(s.pricing, Pricing::Learned));
            let learned = match (policy, needs_table) {
                (Some(p), _) => Some(load_policy(&run, &p)?),
                (None, true) => Some(train(&mut run)?),
                (None, false) => None,
            };
            let exo = run.cfg.exogenous()?;
            let runs = run_benchmark(&exo, &specs, learned.as_ref(), &day_seeds(&run.cfg.bench), &run.cfg.mpc)?;
            print_runs(&runs);
            write_benchmark_csv(&runs, run.create("benchmark.csv")?)?;
            run.finish("benchmark")
        }
        Command::Sweep { kind, values, reps } => {
            match kind {
                SweepKind::Beta => {
                    let points = beta_sweep(&run.cfg, &values, reps)?;
                    let mut w = csv::Writer::from_writer(run.create("beta_sweep.csv")?);
                    for p in &points {
                        println!("beta {:>6.2} rep {:>2}: price std {:.4}, obj {:.2}", p.beta, p.repetition, p.price_std, p.obj);
                        w.serialize(p)?;
                    }
                    w.flush()?;
                }
                SweepKind::Capacity | SweepKind::Arrival => {
                    let dim = match kind {
                        SweepKind::Capacity => SweepDimension::Capacity,
                        _ => SweepDimension::ArrivalRate,
                    };
                    let points = sensitivity_sweep(&run.cfg, dim, &values)?;
                    for p in &points {
                        println!("{:>6.1}: welfare {:.2} ± {:.2}", p.value, p.welfare.mean, p.welfare.half_width);
                    }
                    write_sweep_csv(&points, run.create("sweep.csv")?)?;
                }
            }
            run.finish("sweep")
        }
        Command::Validate => {
            let seed = run.cfg.learn.seed;
            let reports = validate::run_all(seed, &run.cfg.station, &run.cfg.mpc)?;
            let mut ok = true;
            for r in &reports {
                ok &= r.passed();
                println!(
                    "{:<24} {} cases {:>7} max error {:.2e} (tol {:.0e}) failures {}",
                    r.suite,
                    if r.passed() { "PASS" } else { "FAIL" },
                    r.cases,
                    r.max_error,
                    r.tolerance,
                    r.failures
                );
            }
            fs::write(run.path("validate.json"), serde_json::to_string_pretty(&reports)?)?;
            run.finish("validate")?;
            if !ok {
                bail!("validation failed");
            }
            Ok(())
        }
        Command::SolveLp { file, gap } => {
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let model = lpformat::read_lp(&text)?;
            let opts = MipOptions {
                node_limit: run.cfg.mpc.node_limit,
                time_limit: run.cfg.mpc.time_limit_ms.map(Duration::from_millis),
                rel_gap: gap,
                ..MipOptions::default()
            };
            let res = branch_and_bound(&model, &opts)?;
            println!(
                "status {:?} objective {} bound {} gap {:.2e} nodes {}",
                res.status, res.objective, res.best_bound, res.gap, res.nodes
            );
            if let Some(x) = &res.values {
                let mut w = csv::Writer::from_writer(run.create("solution.csv")?);
                w.write_record(["column", "value"])?;
                for (c, v) in model.columns.iter().zip(x) {
                    w.write_record([c.name.as_str(), &v.to_string()])?;
                }
                w.flush()?;
            }
            run.finish("solve-lp")
        }
        Command::ExportModel { stage, price } => {
            let params = run.cfg.station.clone();
            if stage >= params.horizon {
                bail!("stage must be below {}", params.horizon);
            }
            let exo = run.cfg.exogenous()?;
            let seed = day_seeds(&run.cfg.bench)[0];
            let mut rng = stream_rng(seed, Stream::Day, &[]);
            let mut state = exo.initial_state(0);
            for t in 0..stage {
                let x = exo.sample_stage(t, &mut rng);
                simulate_stage(&mut state, price, &x.arrivals, x.next_wind, x.next_solar, ChargeRule::Greedy, &params)?;
            }
            let x = exo.sample_stage(stage, &mut rng);
            let adm = admit(&state, price, &x.arrivals, &params)?;
            let policy = PricingPolicy::constant(params.horizon, price);
            let set = generate_sample_paths(&exo, &adm.state, params.window, run.cfg.mpc.scenarios.max(1), seed, Stream::Scenario, &[stage as u64]);
            let plans = set
                .paths
                .iter()
                .map(|p| plan_scenario(&adm.state, price, adm.counters.lost, p, &policy, &params))
                .collect::<evcs_core::Result<Vec<_>>>()?;
            let mpc = build_mpc_model(&adm.state, &plans, &params)?;
            println!("{} columns, {} rows", mpc.model.num_cols(), mpc.model.num_rows());
            fs::write(run.path("model.lp"), lpformat::write_lp(&mpc.model))?;
            run.finish("export-model")
        }
    }
}
