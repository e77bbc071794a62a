//! Non-cooperative traffic-saturation game.
//!
//! Player `n` picks its arrival probability `p_n` to maximise
//! `U_n = mean_size_n p_n / (theta_n T_s)` subject to its effective bandwidth
//! staying below its effective capacity. Peers' choices enter through their
//! idle probabilities `theta_j mean_size_j (1 - p_j)`. QoS exponents are
//! exogenous constants here.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{eb_log_term, Channel, TrafficModel};
use crate::error::{Error, Result};
use crate::model::LinkGainMatrix;

/// Utility in bits/s.
pub fn utility(p_n: f64, theta_n: f64, mean_size_n: f64, slot: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_n) {
        return Err(Error::param("p_n", "must lie in [0, 1]"));
    }
    if !(theta_n > 0.0) || theta_n * mean_size_n >= 1.0 {
        return Err(Error::Domain("need 0 < theta_n mean_size_n < 1".into()));
    }
    Ok(mean_size_n * p_n / (theta_n * slot))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateSchedule {
    /// Every player responds to the previous profile.
    #[default]
    Simultaneous,
    /// Players respond in ascending order to the latest profile.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub schedule: UpdateSchedule,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 1000,
            schedule: UpdateSchedule::Simultaneous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponse {
    /// Clamped to `[0, 1]`.
    pub p: f64,
    /// Value before clamping.
    pub unclamped: f64,
    /// `theta_n T_s C_n` under the peers' profile.
    pub scaled_capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub p: Vec<f64>,
    /// `max_n |p^{k} - p^{k-1}|`; `None` for the initial profile.
    pub max_change: Option<f64>,
    pub total_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub p: Vec<f64>,
    pub utilities: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

impl GameState {
    pub fn total_utility(&self) -> f64 {
        self.utilities.iter().sum()
    }

    /// CSV rows `iteration, p_1..p_N, total_utility, max_change`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.p.len();
        let mut header = vec!["iteration".to_string()];
        header.extend((1..=n).map(|i| format!("p_{i}")));
        header.push("total_utility".into());
        header.push("max_change".into());
        w.write_record(&header)?;
        for e in &self.trace {
            let mut row = vec![e.iteration.to_string()];
            row.extend(e.p.iter().map(|v| v.to_string()));
            row.push(e.total_utility.to_string());
            row.push(e.max_change.map(|v| v.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The game for fixed exponents, gains and packet sizes. The `p` fields of
/// `traffic` are ignored; strategies are passed explicitly.
#[derive(Debug, Clone, Copy)]
pub struct Game<'a> {
    pub gains: &'a LinkGainMatrix,
    pub traffic: &'a [TrafficModel],
    pub theta: &'a [f64],
    pub channel: &'a Channel,
}

impl<'a> Game<'a> {
    pub fn new(
        gains: &'a LinkGainMatrix,
        traffic: &'a [TrafficModel],
        theta: &'a [f64],
        channel: &'a Channel,
    ) -> Result<Self> {
        crate::solver::check_inputs(gains, traffic, channel)?;
        if theta.len() != gains.n() {
            return Err(Error::param("theta", "length must match the SBS count"));
        }
        for (t, tr) in theta.iter().zip(traffic) {
            let d = t * tr.mean_size;
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::Domain(format!("theta mean_size = {d} must lie in (0, 1)")));
            }
        }
        Ok(Self {
            gains,
            traffic,
            theta,
            channel,
        })
    }

    pub fn n(&self) -> usize {
        self.gains.n()
    }

    fn d(&self, n: usize) -> f64 {
        self.theta[n] * self.traffic[n].mean_size
    }

    fn check_profile(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.n() {
            return Err(Error::param("p", "length must match the SBS count"));
        }
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("p", "strategies must lie in [0, 1]"));
        }
        Ok(())
    }

    /// `theta_n T_s C_n` with peers at profile `p` (`p[n]` ignored).
    pub fn scaled_capacity(&self, n: usize, p: &[f64]) -> Result<f64> {
        self.check_profile(p)?;
        let idle: Vec<f64> = (0..self.n())
            .map(|j| if j == n { 0.0 } else { self.d(j) * (1.0 - p[j]) })
            .collect();
        Ok(self
            .channel
            .service_mgf(n, self.theta[n], self.gains, &idle)?
            .neg_log())
    }

    pub fn best_response_detail(&self, n: usize, p: &[f64]) -> Result<BestResponse> {
        self.check_profile(p)?;
        if n >= self.n() {
            return Err(Error::param("n", "SBS index out of range"));
        }
        let scaled = self.scaled_capacity(n, p)?;
        let d = self.d(n);
        // (e^{theta T_s C} - 1)(1 - d)/d
        let unclamped = scaled.exp_m1() * (1.0 - d) / d;
        Ok(BestResponse {
            p: unclamped.clamp(0.0, 1.0),
            unclamped,
            scaled_capacity: scaled,
        })
    }

    pub fn best_response(&self, n: usize, p: &[f64]) -> Result<f64> {
        Ok(self.best_response_detail(n, p)?.p)
    }

    pub fn utilities(&self, p: &[f64]) -> Result<Vec<f64>> {
        (0..self.n())
            .map(|n| utility(p[n], self.theta[n], self.traffic[n].mean_size, self.traffic[n].slot))
            .collect()
    }

    /// Whether `p_n` meets the QoS constraint against the peers in `p`.
    pub fn is_feasible(&self, n: usize, p_n: f64, p: &[f64]) -> Result<bool> {
        let scaled = self.scaled_capacity(n, p)?;
        Ok(eb_log_term(p_n, self.d(n)) <= scaled)
    }

    /// Whether the uniform profile `q` meets every player's QoS constraint.
    pub fn uniform_feasible(&self, q: f64) -> Result<bool> {
        let p = vec![q; self.n()];
        for n in 0..self.n() {
            if !self.is_feasible(n, q, &p)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Iterated best response from `p_init`.
    pub fn find_ne(&self, p_init: &[f64], config: &GameConfig) -> Result<GameState> {
        self.check_profile(p_init)?;
        if !(config.tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        let mut p = p_init.to_vec();
        let mut trace = vec![TraceEntry {
            iteration: 0,
            p: p.clone(),
            max_change: None,
            total_utility: self.utilities(&p)?.iter().sum(),
        }];
        let mut converged = false;
        let mut iterations = 0;
        while iterations < config.max_iter {
            iterations += 1;
            let next = match config.schedule {
                UpdateSchedule::Simultaneous => (0..self.n())
                    .into_par_iter()
                    .map(|n| self.best_response(n, &p))
                    .collect::<Result<Vec<f64>>>()?,
                UpdateSchedule::Sequential => {
                    let mut q = p.clone();
                    for n in 0..self.n() {
                        q[n] = self.best_response(n, &q)?;
                    }
                    q
                }
            };
            let change = next
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            p = next;
            trace.push(TraceEntry {
                iteration: iterations,
                p: p.clone(),
                max_change: Some(change),
                total_utility: self.utilities(&p)?.iter().sum(),
            });
            if change <= config.tol {
                converged = true;
                break;
            }
        }
        Ok(GameState {
            utilities: self.utilities(&p)?,
            p,
            iterations,
            converged,
            trace,
        })
    }

    /// Unilateral deviations on `grid` that satisfy the QoS constraint yet
    /// beat the utility at `p`, as `(player, deviation)` pairs.
    pub fn profitable_deviations(&self, p: &[f64], grid: &[f64], slack: f64) -> Result<Vec<(usize, f64)>> {
        let base = self.utilities(p)?;
        let mut found = Vec::new();
        for n in 0..self.n() {
            let scaled = self.scaled_capacity(n, p)?;
            for &q in grid {
                if eb_log_term(q, self.d(n)) <= scaled {
                    let u = utility(q, self.theta[n], self.traffic[n].mean_size, self.traffic[n].slot)?;
                    if u > base[n] * (1.0 + slack) + slack {
                        found.push((n, q));
                    }
                }
            }
        }
        Ok(found)
    }
}

/// Free-function form of [`Game::best_response`].
pub fn best_response(
    n: usize,
    p: &[f64],
    theta: &[f64],
    traffic: &[TrafficModel],
    gains: &LinkGainMatrix,
    channel: &Channel,
) -> Result<f64> {
    Game::new(gains, traffic, theta, channel)?.best_response(n, p)
}

/// Free-function form of [`Game::find_ne`].
pub fn find_ne(
    theta: &[f64],
    traffic: &[TrafficModel],
    gains: &LinkGainMatrix,
    channel: &Channel,
    p_init: &[f64],
    config: &GameConfig,
) -> Result<GameState> {
    Game::new(gains, traffic, theta, channel)?.find_ne(p_init, config)
}
