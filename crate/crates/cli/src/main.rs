use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use polyagg::harness::{
    gini, nash_welfare, normalized_returns, run_experiment, ExperimentSpec, Prepared, RuleSpec, SampleOptions,
    DEFAULT_SAMPLES, RULE_NAMES,
};
use polyagg::instances::{self, CnfFormula, Graph, ListMode, WarehouseParams};
use polyagg::lp::MilpConfig;
use polyagg::volume::{CdfMethod, SampleCloud};
use polyagg::{Momdp, Result};

#[derive(Parser)]
#[command(name = "polyagg", version, about = "Policy aggregation for multi-objective MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a MOMDP and write it as JSON.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
        /// Output file (stdout if omitted).
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Run one rule on a MOMDP and write `result.json` into the output directory.
    Aggregate(AggregateArgs),
    /// Run an experiment described by a JSON spec.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the spec's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// Warehouse monitoring environment with `m` warehouses and `n` agents.
    Warehouse {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Lists::RandomSubset)]
        lists: Lists,
        #[arg(long)]
        max_vars: Option<usize>,
    },
    /// One state, `l` actions and `l` one-hot agents.
    Simplex {
        #[arg(long)]
        l: usize,
    },
    /// Plurality instance from a graph in `p edge` format.
    Mis {
        #[arg(long)]
        graph: PathBuf,
    },
    /// 0.95-approval instance from a 2-CNF in `p cnf` format.
    Max2sat {
        #[arg(long)]
        cnf: PathBuf,
    },
    /// Random MOMDP with positive transitions and rewards in [0, 1).
    Random {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Lists {
    RandomSubset,
    OnePerWarehouse,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cdf {
    Empirical,
    Logistic,
}

#[derive(clap::Args)]
struct AggregateArgs {
    #[arg(long)]
    momdp: PathBuf,
    #[arg(long, value_parser = RULE_NAMES)]
    rule: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Veto order as comma-separated agent positions.
    #[arg(long, value_delimiter = ',')]
    veto_order: Option<Vec<usize>>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, value_enum, default_value_t = Cdf::Empirical)]
    cdf: Cdf,
    /// Read the sample cloud from this CSV instead of sampling.
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Write the sample cloud to this CSV.
    #[arg(long)]
    save_cloud: Option<PathBuf>,
    #[arg(long)]
    node_budget: Option<usize>,
    /// Keep wall-clock time in the result.
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: PathBuf,
}

fn write_output(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn generate(kind: &GenKind) -> Result<Momdp> {
    match kind {
        GenKind::Warehouse { m, n, seed, lists, max_vars } => {
            let lists = match lists {
                Lists::RandomSubset => ListMode::RandomSubset,
                Lists::OnePerWarehouse => ListMode::OnePerWarehouse,
            };
            let mut params = WarehouseParams::sample(*m, *n, lists, *seed)?;
            if let Some(cap) = max_vars {
                params.max_vars = *cap;
            }
            instances::gen_warehouse(&params)
        }
        GenKind::Simplex { l } => instances::gen_simplex_instance(*l),
        GenKind::Mis { graph } => instances::gen_from_mis(&Graph::parse_dimacs(&fs::read_to_string(graph)?)?),
        GenKind::Max2sat { cnf } => {
            instances::gen_from_max2sat(&CnfFormula::parse_dimacs(&fs::read_to_string(cnf)?)?)
        }
        GenKind::Random { states, actions, agents, seed } => {
            instances::random_momdp(*states, *actions, *agents, *seed)
        }
    }
}

fn aggregate(args: &AggregateArgs) -> Result<()> {
    let momdp = Momdp::read_json(&args.momdp)?;
    let mut rule = RuleSpec::from_name(&args.rule, args.alpha, args.epsilon)?;
    if let (RuleSpec::VetoCore { order, .. }, Some(o)) = (&mut rule, &args.veto_order) {
        *order = Some(o.clone());
    }
    let method = match args.cdf {
        Cdf::Empirical => CdfMethod::Empirical,
        Cdf::Logistic => CdfMethod::Logistic,
    };
    let prepared = if !rule.needs_samples() {
        Prepared::new(momdp, None)?
    } else if let Some(path) = &args.cloud {
        let mut p = Prepared::new(momdp, None)?;
        p.attach_cloud(SampleCloud::read_csv(path)?, method)?;
        p
    } else {
        let opts = SampleOptions {
            burn_in: args.burn_in,
            cdf_method: method,
            ..SampleOptions::new(args.samples, args.seed)
        };
        Prepared::new(momdp, Some(&opts))?
    };
    if let (Some(path), Some(cloud)) = (&args.save_cloud, &prepared.cloud) {
        cloud.write_csv(path)?;
    }
    let mut milp = MilpConfig::default();
    if let Some(b) = args.node_budget {
        milp.node_budget = b;
    }
    let mut result = prepared.run(&rule, milp)?;
    if !args.timings {
        result = result.without_timing();
    }
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("result.json"), serde_json::to_string_pretty(&result)? + "\n")?;
    let returns = normalized_returns(&prepared.norm, &prepared.momdp, &result.occupancy);
    let g = gini(&returns).map_or_else(|_| "n/a".to_string(), |g| format!("{g:.4}"));
    println!("rule {}", result.rule);
    println!("normalized returns {returns:.4?}");
    println!("gini {g}  nash {:.4}", nash_welfare(&returns));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { kind, out } => {
            let m = generate(&kind)?;
            write_output(&(m.to_json_string()? + "\n"), out.as_deref())
        }
        Command::Aggregate(args) => aggregate(&args),
        Command::Experiment { spec, out } => {
            let mut spec = ExperimentSpec::read_json(&spec)?;
            if out.is_some() {
                spec.output_dir = out;
            }
            let report = run_experiment(&spec)?;
            for a in &report.aggregates {
                let fmt = |m: Option<f64>, s: Option<f64>| match (m, s) {
                    (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
                    _ => "n/a".to_string(),
                };
                println!(
                    "{:<20} runs {:>3}  failures {:>3}  gini {}  nash {}",
                    a.rule,
                    a.runs,
                    a.failures,
                    fmt(a.gini_mean, a.gini_sem),
                    fmt(a.nash_mean, a.nash_sem)
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
