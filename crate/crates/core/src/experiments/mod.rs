//! Configurable experiment sweeps emitting self-describing CSV.
//!
//! An [`ExperimentConfig`] starts from a per-experiment preset; a JSON
//! document merged over the preset overrides any field. Cells of a sweep run
//! on a dedicated thread pool and rows are emitted in sweep order, so output
//! bytes depend only on the resolved configuration.

mod custom;
mod figures;

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analytics::{Channel, TrafficModel};
use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::model::{build_layout, link_gains, LinkGainMatrix, RadioParams};
use crate::sim::SimConfig;
use crate::solver::SolverConfig;

pub use custom::{run_custom, CustomOperation, CustomSpec};
pub use figures::{run_fig2, run_fig3, run_fig4, run_fig5, run_fig6};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Custom,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Fig2 => "fig2",
            ExperimentId::Fig3 => "fig3",
            ExperimentId::Fig4 => "fig4",
            ExperimentId::Fig5 => "fig5",
            ExperimentId::Fig6 => "fig6",
            ExperimentId::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_ascii_lowercase()))
            .map_err(|_| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Which knob scales the mean arrival rate `p * mean_size / slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKnob {
    MeanSize,
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSweep {
    pub knob: SweepKnob,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub radio: RadioParams,
    /// Side of the square deployment area in metres.
    pub area_side: f64,
    /// Candidate UEs dropped per SBS before association.
    pub ues_per_sbs: usize,
    /// Explicit mean-SNR matrix in dB, `gains_db[from][to]`; replaces the
    /// random layout when present.
    pub gains_db: Option<Vec<Vec<f64>>>,
    /// SBS count of single-instance experiments.
    pub n_sbs: usize,
    /// SBS counts of density sweeps.
    pub densities: Vec<usize>,
    /// Layout draws averaged per density.
    pub layouts: usize,
    /// Common traffic of every SBS.
    pub traffic: TrafficModel,
    pub sweep: TrafficSweep,
    /// Queue threshold in bits.
    pub q_threshold: f64,
    pub d_values: Vec<f64>,
    /// Fixed QoS exponent of the game.
    pub theta: f64,
    /// Uniform arrival probabilities compared against the equilibrium.
    pub baseline_grid: Vec<f64>,
    /// Starting arrival probability of every player.
    pub game_init: f64,
    /// Run the simulator where an experiment supports it.
    pub simulate: bool,
    pub solver: SolverConfig,
    pub game: GameConfig,
    pub sim: SimConfig,
    pub custom: CustomSpec,
    /// Worker threads; `None` uses every core. Never echoed into output.
    #[serde(skip_serializing, default)]
    pub jobs: Option<usize>,
    #[serde(skip_serializing, default)]
    pub out: Option<PathBuf>,
}

fn base_config(id: ExperimentId) -> ExperimentConfig {
    ExperimentConfig {
        experiment: id,
        seed: 1,
        radio: RadioParams::default(),
        area_side: 500.0,
        ues_per_sbs: 10,
        gains_db: None,
        n_sbs: 8,
        densities: vec![1, 2, 4, 8, 12, 16, 24, 32],
        layouts: 5,
        traffic: TrafficModel {
            p: 0.2,
            mean_size: 100.0,
            slot: 1e-3,
        },
        sweep: TrafficSweep {
            knob: SweepKnob::MeanSize,
            values: vec![100.0, 200.0, 400.0, 600.0, 800.0, 1000.0],
        },
        q_threshold: 10.0,
        d_values: vec![0.1, 0.3, 0.5],
        theta: 1e-3,
        baseline_grid: (1..=10).map(|k| k as f64 / 10.0).collect(),
        game_init: 0.0,
        simulate: true,
        solver: SolverConfig::default(),
        game: GameConfig::default(),
        sim: SimConfig {
            runs: 200,
            slots: 20_000,
            ..SimConfig::default()
        },
        custom: CustomSpec::default(),
        jobs: None,
        out: None,
    }
}

impl ExperimentConfig {
    /// Defaults of experiment `id`.
    pub fn preset(id: ExperimentId) -> Self {
        let mut c = base_config(id);
        match id {
            ExperimentId::Fig2 => {
                c.gains_db = Some(vec![vec![10.0, 1.0], vec![2.0, 20.0]]);
                c.n_sbs = 2;
            }
            ExperimentId::Fig3 => {
                c.sim.runs = 20;
            }
            ExperimentId::Fig4 => {
                c.layouts = 1;
                c.d_values = vec![1e-3, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
            }
            ExperimentId::Fig5 => {}
            ExperimentId::Fig6 => {
                c.radio.bandwidth_hz = 1e5;
                c.densities = vec![2, 4, 8, 12, 16, 24, 32, 40, 48];
                c.layouts = 3;
            }
            ExperimentId::Custom => {
                c.layouts = 1;
            }
        }
        c
    }

    /// Preset of `id` overridden by the fields present in `overrides`.
    pub fn from_value(id: ExperimentId, overrides: Value) -> Result<Self> {
        let mut base = serde_json::to_value(Self::preset(id))?;
        if let Value::Object(map) = &overrides {
            if let Some(v) = map.get("experiment") {
                if v != &Value::String(id.name().into()) {
                    return Err(Error::Config(format!(
                        "config is for experiment {v}, but {} was requested",
                        id.name()
                    )));
                }
            }
        } else if !overrides.is_null() {
            return Err(Error::Config("config must be a JSON object".into()));
        }
        merge(&mut base, overrides);
        let config: Self = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(id: ExperimentId, text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(id, value)
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        self.traffic.validate()?;
        self.solver.validate()?;
        self.sim.validate()?;
        if self.ues_per_sbs == 0 {
            return Err(Error::Config("ues_per_sbs must be at least 1".into()));
        }
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return Err(Error::Config("area_side must be positive".into()));
        }
        if let Some(rows) = &self.gains_db {
            LinkGainMatrix::from_db(rows)?;
        } else if self.n_sbs == 0 {
            return Err(Error::Config("n_sbs must be at least 1".into()));
        }
        if self.layouts == 0 {
            return Err(Error::Config("layouts must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.game_init) {
            return Err(Error::Config("game_init must lie in [0, 1]".into()));
        }
        let nonempty = |name: &str, empty: bool| {
            if empty {
                Err(Error::Config(format!("{name} must not be empty")))
            } else {
                Ok(())
            }
        };
        match self.experiment {
            ExperimentId::Fig2 => {
                nonempty("sweep.values", self.sweep.values.is_empty())?;
                if self.gains_db.as_ref().map(Vec::len) != Some(2) {
                    return Err(Error::Config("fig2 needs an explicit 2x2 gains_db".into()));
                }
            }
            ExperimentId::Fig3 | ExperimentId::Fig6 => nonempty("densities", self.densities.is_empty())?,
            ExperimentId::Fig4 => nonempty("d_values", self.d_values.is_empty())?,
            ExperimentId::Fig5 => {
                nonempty("densities", self.densities.is_empty())?;
                nonempty("d_values", self.d_values.is_empty())?;
            }
            ExperimentId::Custom => self.custom.validate()?,
        }
        if self.densities.contains(&0) {
            return Err(Error::Config("densities must be positive".into()));
        }
        Ok(())
    }

    pub fn channel(&self) -> Result<Channel> {
        Channel::new(self.radio.bandwidth_hz, self.traffic.slot)
    }

    /// Gains of the explicit matrix, or of layout `layout` with `n_sbs` SBSs.
    pub fn gains(&self, n_sbs: usize, layout: usize) -> Result<LinkGainMatrix> {
        match &self.gains_db {
            Some(rows) => LinkGainMatrix::from_db(rows),
            None => random_gains(self, n_sbs, layout),
        }
    }

    /// The single instance used by `solve`, `simulate` and `game`.
    pub fn instance(&self) -> Result<(LinkGainMatrix, Vec<TrafficModel>, Channel)> {
        let gains = self.gains(self.n_sbs, 0)?;
        let traffic = vec![self.traffic; gains.n()];
        Ok((gains, traffic, self.channel()?))
    }

    /// Configuration echoed into output headers.
    pub fn echo(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Worker pool honouring `jobs`.
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            builder = builder.num_threads(j);
        }
        builder.build().map_err(|e| Error::Config(e.to_string()))
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of layout draw `layout` at density `n_sbs`.
pub fn layout_seed(master: u64, n_sbs: usize, layout: usize) -> u64 {
    splitmix(splitmix(splitmix(master) ^ n_sbs as u64) ^ layout as u64)
}

const LAYOUT_ATTEMPTS: u64 = 64;

/// Gains of a random layout. A draw leaving an SBS without candidate UEs is
/// redrawn from the next seed in a fixed sequence.
pub fn random_gains(config: &ExperimentConfig, n_sbs: usize, layout: usize) -> Result<LinkGainMatrix> {
    let seed = layout_seed(config.seed, n_sbs, layout);
    let mut last = None;
    for attempt in 0..LAYOUT_ATTEMPTS {
        match build_layout(n_sbs, config.area_side, n_sbs * config.ues_per_sbs, config.radio, splitmix(seed ^ attempt)) {
            Ok(l) => return link_gains(&l),
            Err(e @ (Error::EmptyCell { .. } | Error::ZeroDistance { .. })) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Outcome marker of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Infeasible,
    Failed,
    Skipped,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Infeasible => "infeasible",
            Status::Failed => "failed",
            Status::Skipped => "skipped",
        }
    }

    pub fn of(err: &Error) -> Self {
        match err {
            Error::Infeasible { .. } => Status::Infeasible,
            _ => Status::Failed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Summary {
    pub rows: usize,
    pub ok: usize,
    pub infeasible: usize,
    pub failed: usize,
    pub skipped: usize,
}

/// A finished sweep: columns, rows in sweep order, and status counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    status_column: usize,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        let status_column = columns.iter().position(|c| *c == "status").expect("tables carry a status column");
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            status_column,
        }
    }

    pub(crate) fn with_columns(columns: Vec<String>) -> Self {
        let status_column = columns.iter().position(|c| c == "status").expect("tables carry a status column");
        Self {
            columns,
            rows: Vec::new(),
            status_column,
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary {
            rows: self.rows.len(),
            ..Default::default()
        };
        for r in &self.rows {
            match r[self.status_column].as_str() {
                "ok" => s.ok += 1,
                "infeasible" => s.infeasible += 1,
                "skipped" => s.skipped += 1,
                _ => s.failed += 1,
            }
        }
        s
    }

    /// CSV preceded by `#` lines with the resolved configuration and the
    /// row summary.
    pub fn write_csv<W: Write>(&self, config: &ExperimentConfig, mut out: W) -> Result<()> {
        let s = self.summary();
        // same CRLF terminator as the records below
        write!(out, "# experiment: {}\r\n", config.experiment.name())?;
        write!(out, "# seed: {}\r\n", config.seed)?;
        write!(out, "# config: {}\r\n", config.echo()?)?;
        write!(
            out,
            "# rows: {} ok: {} infeasible: {} failed: {} skipped: {}\r\n",
            s.rows, s.ok, s.infeasible, s.failed, s.skipped
        )?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, config: &ExperimentConfig) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(config, &mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Runs the experiment named in `config`.
pub fn run(config: &ExperimentConfig) -> Result<Table> {
    config.validate()?;
    match config.experiment {
        ExperimentId::Fig2 => run_fig2(config),
        ExperimentId::Fig3 => run_fig3(config),
        ExperimentId::Fig4 => run_fig4(config),
        ExperimentId::Fig5 => run_fig5(config),
        ExperimentId::Fig6 => run_fig6(config),
        ExperimentId::Custom => run_custom(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_merge_into_preset() {
        let c = ExperimentConfig::from_value(
            ExperimentId::Fig6,
            json!({"seed": 9, "radio": {"tx_power_dbm": 20.0}, "sim": {"runs": 3}}),
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.radio.tx_power_dbm, 20.0);
        assert_eq!(c.radio.bandwidth_hz, 1e5);
        assert_eq!(c.sim.runs, 3);
        assert_eq!(c.sim.slots, 20_000);
    }

    #[test]
    fn unknown_fields_and_mismatched_ids_rejected() {
        assert!(ExperimentConfig::from_value(ExperimentId::Fig2, json!({"sede": 3})).is_err());
        assert!(ExperimentConfig::from_value(ExperimentId::Fig2, json!({"experiment": "fig3"})).is_err());
        assert!(ExperimentConfig::from_value(ExperimentId::Fig4, json!({"d_values": []})).is_err());
    }

    #[test]
    fn echo_omits_runtime_fields() {
        let mut c = ExperimentConfig::preset(ExperimentId::Fig4);
        c.jobs = Some(4);
        c.out = Some("x.csv".into());
        let e = c.echo().unwrap();
        assert!(!e.contains("jobs") && !e.contains("x.csv"));
        let back = ExperimentConfig::from_json(ExperimentId::Fig4, &e).unwrap();
        assert_eq!(back.jobs, None);
        assert_eq!(back.d_values, c.d_values);
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.0, 1.5, 1.36e-3, 2.5e-9, 123456.0, 1e20, -4.2e-7] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(2.5e-9), "2.5e-9");
        assert_eq!(fmt_f64(0.25), "0.25");
    }

    #[test]
    fn layout_seeds_are_distinct() {
        let a = layout_seed(1, 8, 0);
        assert_ne!(a, layout_seed(1, 8, 1));
        assert_ne!(a, layout_seed(1, 9, 0));
        assert_ne!(a, layout_seed(2, 8, 0));
    }
}
