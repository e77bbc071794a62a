use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fmt_f64, fmt_opt, ExperimentConfig, Status, Table};
use crate::analytics::{effective_bandwidth, queue_violation_prob, IdleProfile, TrafficModel};
use crate::error::{Error, Result};
use crate::game::Game;
use crate::sim::{aggregate, run_many, SimConfig};
use crate::solver::{max_arrival_rates, solve_qos_exponents_as, InterferenceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomOperation {
    /// QoS exponents of the unsaturated model.
    #[default]
    Solve,
    /// QoS exponents with every peer always interfering.
    SolveFull,
    /// Maximum arrival rates of both models for requirement `d`.
    MaxRate,
    /// Effective capacity and bandwidth at the common exponent `theta`.
    Ec,
    /// Best-response equilibrium at the common exponent `theta`.
    Game,
    /// Simulated statistics of the unsaturated model.
    Simulate,
}

/// Axis names a custom grid may vary.
pub const AXES: [&str; 9] = [
    "bandwidth",
    "d",
    "layout",
    "mean_size",
    "n_sbs",
    "p",
    "q_threshold",
    "theta",
    "tx_power_dbm",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomSpec {
    pub operation: CustomOperation,
    /// Axis name to values. The grid is the Cartesian product in axis-name
    /// order with the last axis varying fastest; no axes means no cells.
    pub axes: BTreeMap<String, Vec<f64>>,
}

impl CustomSpec {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in &self.axes {
            if !AXES.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown custom axis `{k}`; expected one of {AXES:?}")));
            }
            if matches!(k.as_str(), "n_sbs" | "layout") && v.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
                return Err(Error::Config(format!("axis `{k}` takes nonnegative integers")));
            }
        }
        Ok(())
    }

    /// Grid points in emission order.
    pub fn cells(&self) -> Vec<Vec<f64>> {
        if self.axes.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for values in self.axes.values() {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

fn columns(op: CustomOperation) -> &'static [&'static str] {
    match op {
        CustomOperation::Solve | CustomOperation::SolveFull => {
            &["theta_star", "residual", "violation_prob", "idle_prob", "iterations"]
        }
        CustomOperation::MaxRate => &["rate_unsaturated_bps", "rate_full_interference_bps"],
        CustomOperation::Ec => &["effective_capacity_bps", "effective_bandwidth_bps"],
        CustomOperation::Game => &["p", "utility", "iterations"],
        CustomOperation::Simulate => &[
            "violation_prob",
            "violation_ci",
            "busy_fraction",
            "mean_queue_bits",
            "throughput_bps",
        ],
    }
}

fn joined(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

/// Resolved per-cell parameters.
struct CellParams {
    config: ExperimentConfig,
    d: f64,
    layout: usize,
}

fn resolve(config: &ExperimentConfig, names: &[&String], values: &[f64]) -> Result<CellParams> {
    let mut c = config.clone();
    let mut d = config.d_values.first().copied().unwrap_or(0.1);
    let mut layout = 0;
    for (name, &v) in names.iter().zip(values) {
        match name.as_str() {
            "bandwidth" => c.radio.bandwidth_hz = v,
            "d" => d = v,
            "layout" => layout = v as usize,
            "mean_size" => c.traffic.mean_size = v,
            "n_sbs" => c.n_sbs = v as usize,
            "p" => c.traffic.p = v,
            "q_threshold" => c.q_threshold = v,
            "theta" => c.theta = v,
            "tx_power_dbm" => c.radio.tx_power_dbm = v,
            other => return Err(Error::Config(format!("unknown custom axis `{other}`"))),
        }
    }
    c.radio.validate()?;
    c.traffic.validate()?;
    Ok(CellParams { config: c, d, layout })
}

fn evaluate(cell: &CellParams, op: CustomOperation) -> Result<Vec<String>> {
    let c = &cell.config;
    let gains = c.gains(c.n_sbs, cell.layout)?;
    let n = gains.n();
    let traffic: Vec<TrafficModel> = vec![c.traffic; n];
    let channel = c.channel()?;
    Ok(match op {
        CustomOperation::Solve | CustomOperation::SolveFull => {
            let model = if op == CustomOperation::Solve {
                InterferenceModel::Unsaturated
            } else {
                InterferenceModel::FullInterference
            };
            let r = solve_qos_exponents_as(model, &gains, &traffic, &channel, &c.solver)?;
            if !r.converged {
                return Err(Error::Config(format!(
                    "solver stopped after {} sweeps without converging",
                    r.iterations
                )));
            }
            let violation = r
                .theta_star
                .iter()
                .zip(&traffic)
                .map(|(&t, tr)| queue_violation_prob(t, tr, c.q_threshold))
                .collect::<Result<Vec<f64>>>()?;
            vec![
                joined(&r.theta_star),
                joined(&r.residuals),
                joined(&violation),
                joined(r.idle_profile.idle()),
                r.iterations.to_string(),
            ]
        }
        CustomOperation::MaxRate => {
            let d = vec![cell.d; n];
            [InterferenceModel::Unsaturated, InterferenceModel::FullInterference]
                .iter()
                .map(|&m| max_arrival_rates(m, &d, &traffic, &gains, &channel, &c.solver).map(|r| joined(&r)))
                .collect::<Result<Vec<String>>>()?
        }
        CustomOperation::Ec => {
            let theta = vec![c.theta; n];
            let idle = IdleProfile::from_exponents(&theta, &traffic)?;
            let ec = (0..n)
                .map(|k| channel.ec_n_sbs(k, c.theta, &gains, idle.idle()))
                .collect::<Result<Vec<f64>>>()?;
            let eb = traffic
                .iter()
                .map(|t| effective_bandwidth(t, c.theta))
                .collect::<Result<Vec<f64>>>()?;
            vec![joined(&ec), joined(&eb)]
        }
        CustomOperation::Game => {
            let theta = vec![c.theta; n];
            let game = Game::new(&gains, &traffic, &theta, &channel)?;
            let s = game.find_ne(&vec![c.game_init; n], &c.game)?;
            if !s.converged {
                return Err(Error::Config(format!("no equilibrium within {} iterations", s.iterations)));
            }
            vec![joined(&s.p), joined(&s.utilities), s.iterations.to_string()]
        }
        CustomOperation::Simulate => {
            let sim = SimConfig {
                q_threshold: c.q_threshold,
                ..c.sim.clone()
            };
            let stats = aggregate(&run_many(
                InterferenceModel::Unsaturated,
                &gains,
                &traffic,
                &channel,
                &sim,
            )?)?;
            let col = |f: &dyn Fn(&crate::sim::SbsSummary) -> String| {
                stats.sbs.iter().map(f).collect::<Vec<_>>().join(";")
            };
            vec![
                col(&|s| fmt_f64(s.violation_prob.mean)),
                col(&|s| fmt_opt(s.violation_prob.half_width)),
                col(&|s| fmt_f64(s.busy_fraction.mean)),
                col(&|s| fmt_f64(s.mean_queue_bits.mean)),
                col(&|s| fmt_f64(s.throughput_bps.mean)),
            ]
        }
    })
}

/// Evaluates `config.custom.operation` at every grid point, one row per
/// point. Failed points keep their row with a marker.
pub fn run_custom(config: &ExperimentConfig) -> Result<Table> {
    let spec = &config.custom;
    spec.validate()?;
    let names: Vec<&String> = spec.axes.keys().collect();
    let metrics = columns(spec.operation);
    let mut header: Vec<String> = vec!["cell".into()];
    header.extend(names.iter().map(|s| s.to_string()));
    header.extend(metrics.iter().map(|s| s.to_string()));
    header.push("status".into());
    header.push("note".into());
    let mut table = Table::with_columns(header);

    let cells = spec.cells();
    let pool = config.pool()?;
    let rows: Vec<Vec<String>> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, values)| {
                let mut row = vec![i.to_string()];
                row.extend(values.iter().map(|v| fmt_f64(*v)));
                match resolve(config, &names, values).and_then(|cell| evaluate(&cell, spec.operation)) {
                    Ok(m) => {
                        row.extend(m);
                        row.push(Status::Ok.as_str().into());
                        row.push(String::new());
                    }
                    Err(e) => {
                        row.extend(metrics.iter().map(|_| String::new()));
                        row.push(Status::of(&e).as_str().into());
                        row.push(e.to_string());
                    }
                }
                row
            })
            .collect()
    });
    for r in rows {
        table.push(r);
    }
    Ok(table)
}
