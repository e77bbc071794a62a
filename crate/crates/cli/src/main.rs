use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use udn_ec::analytics::queue_violation_prob;
use udn_ec::experiments::{self, ExperimentConfig, ExperimentId};
use udn_ec::game::Game;
use udn_ec::sim::{aggregate, run_many, write_runs_jsonl, SimConfig};
use udn_ec::solver::{solve_qos_exponents_as, InterferenceModel};

#[derive(Parser)]
#[command(name = "udn", version, about = "Effective capacity of dense small-cell networks with bursty traffic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled QoS-exponent fixed point and print JSON.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Model::Unsaturated)]
        model: Model,
    },
    /// Run the queue simulator and print aggregated JSON.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Model::Unsaturated)]
        model: Model,
        /// Also write one JSON line per replication here.
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Iterate best responses and print the trace as CSV.
    Game {
        #[command(flatten)]
        common: Common,
    },
    /// Regenerate the data of one figure as CSV.
    Figure {
        #[arg(value_enum)]
        figure: Figure,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a custom parameter grid as CSV.
    Custom {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON file overriding the experiment's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    slots: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Unsaturated,
    Full,
}

impl From<Model> for InterferenceModel {
    fn from(m: Model) -> Self {
        match m {
            Model::Unsaturated => InterferenceModel::Unsaturated,
            Model::Full => InterferenceModel::FullInterference,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

impl From<Figure> for ExperimentId {
    fn from(f: Figure) -> Self {
        match f {
            Figure::Fig2 => ExperimentId::Fig2,
            Figure::Fig3 => ExperimentId::Fig3,
            Figure::Fig4 => ExperimentId::Fig4,
            Figure::Fig5 => ExperimentId::Fig5,
            Figure::Fig6 => ExperimentId::Fig6,
        }
    }
}

/// Loads the config file, applies flag overrides and resolves it against
/// the preset of `id`. With `follow_file`, an `experiment` field in the
/// file selects the preset instead.
fn load(common: &Common, id: ExperimentId, follow_file: bool) -> Result<ExperimentConfig> {
    let mut value = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => Value::Object(Map::new()),
    };
    let Value::Object(map) = &mut value else {
        bail!("config must be a JSON object");
    };
    let id = match map.get("experiment").and_then(Value::as_str) {
        Some(name) if follow_file => ExperimentId::parse(name)?,
        _ => id,
    };
    if let Some(seed) = common.seed {
        map.insert("seed".into(), json!(seed));
    }
    if common.runs.is_some() || common.slots.is_some() {
        let sim = map.entry("sim").or_insert_with(|| json!({}));
        let Value::Object(sim) = sim else {
            bail!("`sim` must be an object");
        };
        if let Some(r) = common.runs {
            sim.insert("runs".into(), json!(r));
        }
        if let Some(s) = common.slots {
            sim.insert("slots".into(), json!(s));
        }
    }
    if let Some(j) = common.jobs {
        map.insert("jobs".into(), json!(j));
    }
    if let Some(o) = &common.out {
        map.insert("out".into(), json!(o));
    }
    Ok(ExperimentConfig::from_value(id, value)?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(config: &ExperimentConfig, value: &Value) -> Result<()> {
    let mut out = output(config.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn solve(common: &Common, model: Model) -> Result<()> {
    let config = load(common, ExperimentId::Fig2, true)?;
    let (gains, traffic, channel) = config.instance()?;
    let r = solve_qos_exponents_as(model.into(), &gains, &traffic, &channel, &config.solver)?;
    let violation = r
        .theta_star
        .iter()
        .zip(&traffic)
        .map(|(&t, tr)| queue_violation_prob(t, tr, config.q_threshold))
        .collect::<udn_ec::Result<Vec<f64>>>()?;
    write_json(
        &config,
        &json!({
            "seed": config.seed,
            "result": r,
            "normalized": r.normalized(&traffic),
            "violation_prob": violation,
        }),
    )?;
    if !r.converged {
        eprintln!("warning: solver stopped after {} sweeps without converging", r.iterations);
    }
    Ok(())
}

fn simulate(common: &Common, model: Model, raw: Option<&Path>) -> Result<()> {
    let config = load(common, ExperimentId::Fig2, true)?;
    let (gains, traffic, channel) = config.instance()?;
    let sim = SimConfig {
        q_threshold: config.q_threshold,
        ..config.sim.clone()
    };
    let runs = config
        .pool()?
        .install(|| run_many(model.into(), &gains, &traffic, &channel, &sim))?;
    if let Some(path) = raw {
        let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_runs_jsonl(&runs, BufWriter::new(f))?;
    }
    let stats = aggregate(&runs)?;
    write_json(&config, &json!({ "seed": config.seed, "sim": sim, "stats": stats }))
}

fn game(common: &Common) -> Result<()> {
    let config = load(common, ExperimentId::Fig6, true)?;
    let (gains, traffic, channel) = config.instance()?;
    let n = gains.n();
    let theta = vec![config.theta; n];
    let g = Game::new(&gains, &traffic, &theta, &channel)?;
    let state = g.find_ne(&vec![config.game_init; n], &config.game)?;
    let mut out = output(config.out.as_deref())?;
    writeln!(out, "# seed: {}", config.seed)?;
    writeln!(out, "# config: {}", config.echo()?)?;
    writeln!(
        out,
        "# converged: {} iterations: {} total_utility: {}",
        state.converged,
        state.iterations,
        state.total_utility()
    )?;
    state.write_trace_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn experiment(common: &Common, id: ExperimentId) -> Result<()> {
    let config = load(common, id, false)?;
    let table = experiments::run(&config)?;
    let mut out = output(config.out.as_deref())?;
    table.write_csv(&config, &mut out)?;
    out.flush()?;
    let s = table.summary();
    eprintln!(
        "{}: {} rows ({} ok, {} infeasible, {} failed, {} skipped)",
        id.name(),
        s.rows,
        s.ok,
        s.infeasible,
        s.failed,
        s.skipped
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve { common, model } => solve(common, *model),
        Command::Simulate { common, model, raw } => simulate(common, *model, raw.as_deref()),
        Command::Game { common } => game(common),
        Command::Figure { figure, common } => experiment(common, (*figure).into()),
        Command::Custom { common } => experiment(common, ExperimentId::Custom),
    }
}
