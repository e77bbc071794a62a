//! QoS-exponent fixed point and per-SBS maximum arrival rate.
//!
//! [`solve_qos_exponents`] runs coordinate-wise bisection on
//! `C_n(theta) = A_n(theta_n)` for all SBSs at once: each sweep visits the
//! SBSs in ascending order, compares effective capacity with effective
//! bandwidth at the current iterate, and halves that coordinate's bracket.
//! The idle profile is recomputed from the current iterate at every
//! evaluation, so the coordinates are coupled through interference.
//!
//! Bisection on a coupled system can lose its root: a move of the other
//! coordinates shifts the root of SBS `n` past a bracket end. After
//! `stall_sweeps` consecutive moves in one direction, or once the bracket has
//! shrunk to rounding, the solver evaluates the sign at the stale end. If the
//! root has left, the bracket moves past that end by a step that doubles
//! while the root keeps escaping, and the next end is checked after a single
//! further move.

use serde::{Deserialize, Serialize};

use crate::analytics::{eb_log_term, effective_bandwidth, Channel, IdleProfile, TrafficModel};
use crate::error::{Error, Result};
use crate::model::LinkGainMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceModel {
    /// Peers interfere only while their queues are nonempty.
    Unsaturated,
    /// Every peer always interferes (idle probabilities pinned to zero).
    FullInterference,
}

impl InterferenceModel {
    pub fn label(self) -> &'static str {
        match self {
            InterferenceModel::Unsaturated => "unsaturated",
            InterferenceModel::FullInterference => "full_interference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Residual tolerance relative to each SBS's mean arrival rate:
    /// converged when `|C_n - A_n| <= tolerance * mu_n` for every `n`.
    pub tolerance: f64,
    /// Maximum number of sweeps.
    pub max_iterations: usize,
    /// Keeps `theta_n mean_size_n` inside `(0, 1 - epsilon_guard]`.
    pub epsilon_guard: f64,
    /// Starting iterate; `None` starts from the bracket midpoints.
    pub initial_theta: Option<Vec<f64>>,
    /// Consecutive one-directional moves that trigger a bracket check.
    pub stall_sweeps: usize,
    /// Relative bracket width ending the scalar bisection for a given `d`.
    pub theta_rel_tol: f64,
    /// Keep every bracket update in [`SolveResult::trace`].
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_iterations: 200,
            epsilon_guard: 1e-12,
            initial_theta: None,
            stall_sweeps: 8,
            theta_rel_tol: 1e-8,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::param("tolerance", "must lie in (0, 1)"));
        }
        if !(self.epsilon_guard > 0.0 && self.epsilon_guard < 1.0) {
            return Err(Error::param("epsilon_guard", "must lie in (0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be positive"));
        }
        if !(self.theta_rel_tol > 0.0 && self.theta_rel_tol < 1.0) {
            return Err(Error::param("theta_rel_tol", "must lie in (0, 1)"));
        }
        if self.stall_sweeps < 2 {
            return Err(Error::param("stall_sweeps", "must be at least 2"));
        }
        Ok(())
    }
}

/// One bracket update: the iterate when SBS `sbs` was evaluated and the
/// bracket after the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketEvent {
    pub sweep: usize,
    pub sbs: usize,
    pub theta: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub reopened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub model: InterferenceModel,
    pub theta_star: Vec<f64>,
    /// `|C_n - A_n|` at `theta_star`, bits/s.
    pub residuals: Vec<f64>,
    /// Per-SBS residual tolerance in bits/s.
    pub tolerances: Vec<f64>,
    /// Sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    pub idle_profile: IdleProfile,
    pub bracket_reopenings: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<BracketEvent>,
}

impl SolveResult {
    pub fn normalized(&self, traffic: &[TrafficModel]) -> Vec<f64> {
        self.theta_star.iter().zip(traffic).map(|(t, tr)| t * tr.mean_size).collect()
    }
}

pub(crate) fn check_inputs(gains: &LinkGainMatrix, traffic: &[TrafficModel], channel: &Channel) -> Result<()> {
    if traffic.len() != gains.n() {
        return Err(Error::param(
            "traffic",
            format!("{} traffic models for {} SBSs", traffic.len(), gains.n()),
        ));
    }
    for t in traffic {
        t.validate()?;
        if (t.slot - channel.slot).abs() > 1e-12 * channel.slot {
            return Err(Error::param("slot", "traffic slot differs from channel slot"));
        }
    }
    Ok(())
}

fn idle_for(model: InterferenceModel, theta: &[f64], traffic: &[TrafficModel]) -> Result<IdleProfile> {
    match model {
        InterferenceModel::Unsaturated => IdleProfile::from_exponents(theta, traffic),
        InterferenceModel::FullInterference => Ok(IdleProfile::full_interference(theta.len())),
    }
}

/// Capacity minus bandwidth for SBS `n` at iterate `theta`.
fn gap(
    model: InterferenceModel,
    n: usize,
    theta: &[f64],
    gains: &LinkGainMatrix,
    traffic: &[TrafficModel],
    channel: &Channel,
) -> Result<(f64, f64)> {
    let idle = idle_for(model, theta, traffic)?;
    let c = channel.ec_n_sbs(n, theta[n], gains, idle.idle())?;
    let a = effective_bandwidth(&traffic[n], theta[n])?;
    Ok((c, a))
}

/// QoS exponents of the unsaturated model.
pub fn solve_qos_exponents(
    gains: &LinkGainMatrix,
    traffic: &[TrafficModel],
    channel: &Channel,
    config: &SolverConfig,
) -> Result<SolveResult> {
    solve_qos_exponents_as(InterferenceModel::Unsaturated, gains, traffic, channel, config)
}

/// QoS exponents when every peer always interferes.
pub fn solve_qos_exponents_full_interference(
    gains: &LinkGainMatrix,
    traffic: &[TrafficModel],
    channel: &Channel,
    config: &SolverConfig,
) -> Result<SolveResult> {
    solve_qos_exponents_as(InterferenceModel::FullInterference, gains, traffic, channel, config)
}

pub fn solve_qos_exponents_as(
    model: InterferenceModel,
    gains: &LinkGainMatrix,
    traffic: &[TrafficModel],
    channel: &Channel,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    check_inputs(gains, traffic, channel)?;
    let n_sbs = gains.n();
    let eps = config.epsilon_guard;

    let upper0: Vec<f64> = traffic.iter().map(|t| (1.0 - eps) / t.mean_size).collect();
    // SBSs without traffic never queue: their exponent is unbounded and they
    // are pinned at the upper bound (idle whenever the model allows it).
    let silent: Vec<bool> = traffic.iter().map(|t| t.p == 0.0).collect();

    // stability: capacity near theta -> 0+ must exceed the mean arrival rate
    let theta_lo: Vec<f64> = traffic.iter().map(|t| eps / t.mean_size).collect();
    let mut unstable = Vec::new();
    for n in 0..n_sbs {
        if silent[n] {
            continue;
        }
        let (c, a) = gap(model, n, &theta_lo, gains, traffic, channel)?;
        if c <= a {
            unstable.push(n);
        }
    }
    if !unstable.is_empty() {
        return Err(Error::Infeasible { sbs: unstable });
    }

    let mut lower = vec![0.0; n_sbs];
    let mut upper = upper0.clone();
    let mut theta: Vec<f64> = match &config.initial_theta {
        Some(start) => {
            if start.len() != n_sbs {
                return Err(Error::param("initial_theta", "length must match the SBS count"));
            }
            for (s, u) in start.iter().zip(&upper0) {
                if !(*s > 0.0 && s <= u) {
                    return Err(Error::param("initial_theta", "entries must lie in (0, upper bound]"));
                }
            }
            start.clone()
        }
        None => upper0.iter().map(|u| 0.5 * u).collect(),
    };
    for n in 0..n_sbs {
        if silent[n] {
            theta[n] = upper0[n];
        }
    }
    let tolerances: Vec<f64> = traffic.iter().map(|t| config.tolerance * t.mean_rate()).collect();

    let mut streak = vec![0i64; n_sbs];
    // last expansion step per SBS; zero once the root is found inside
    let mut last_step = vec![0.0; n_sbs];
    let mut trace = Vec::new();
    let mut reopenings = 0;
    let mut iterations = 0;
    let mut residuals;
    let converged = loop {
        residuals = Vec::with_capacity(n_sbs);
        for n in 0..n_sbs {
            if silent[n] {
                residuals.push(0.0);
            } else {
                let (c, a) = gap(model, n, &theta, gains, traffic, channel)?;
                residuals.push((c - a).abs());
            }
        }
        if residuals.iter().zip(&tolerances).all(|(r, t)| r <= t) {
            break true;
        }
        if iterations >= config.max_iterations {
            break false;
        }
        iterations += 1;

        for n in 0..n_sbs {
            if silent[n] {
                continue;
            }
            let (c, a) = gap(model, n, &theta, gains, traffic, channel)?;
            let snapshot = config.record_trace.then(|| theta.clone());
            let up = c > a;
            if up {
                lower[n] = theta[n];
            } else {
                upper[n] = theta[n];
            }
            streak[n] = match (up, streak[n].signum()) {
                (true, 1) => streak[n] + 1,
                (false, -1) => streak[n] - 1,
                (true, _) => 1,
                (false, _) => -1,
            };

            // a bracket bisected down to rounding can no longer follow a
            // root that the other coordinates keep moving
            let collapsed = upper[n] - lower[n] <= 4.0 * f64::EPSILON * upper0[n];
            let mut reopened = false;
            if collapsed || streak[n].unsigned_abs() as usize >= config.stall_sweeps {
                streak[n] = 0;
                let mut probe = theta.clone();
                let escaped = if up {
                    probe[n] = upper[n];
                    upper[n] < upper0[n] && {
                        let (c, a) = gap(model, n, &probe, gains, traffic, channel)?;
                        c > a
                    }
                } else {
                    probe[n] = lower[n];
                    lower[n] > 0.0 && {
                        let (c, a) = gap(model, n, &probe, gains, traffic, channel)?;
                        c <= a
                    }
                };
                if escaped {
                    // the stale end becomes the opposite bound; grow past it
                    // by a step that doubles on repeated escapes
                    let step = if last_step[n] > 0.0 {
                        2.0 * last_step[n]
                    } else {
                        2.0 * (upper[n] - lower[n]).max(f64::EPSILON * upper0[n])
                    };
                    last_step[n] = step;
                    if up {
                        lower[n] = upper[n];
                        upper[n] = (upper[n] + step).min(upper0[n]);
                    } else {
                        upper[n] = lower[n];
                        lower[n] = (lower[n] - step).max(0.0);
                    }
                    // probe again after one more move the same way
                    let primed = config.stall_sweeps as i64 - 1;
                    streak[n] = if up { primed } else { -primed };
                    reopened = true;
                    reopenings += 1;
                } else {
                    last_step[n] = 0.0;
                }
            }
            theta[n] = 0.5 * (lower[n] + upper[n]);

            if let Some(snapshot) = snapshot {
                trace.push(BracketEvent {
                    sweep: iterations,
                    sbs: n,
                    theta: snapshot,
                    lower: lower[n],
                    upper: upper[n],
                    reopened,
                });
            }
        }
    };

    let idle_profile = idle_for(model, &theta, traffic)?;
    Ok(SolveResult {
        model,
        theta_star: theta,
        residuals,
        tolerances,
        iterations,
        converged,
        idle_profile,
        bracket_reopenings: reopenings,
        trace,
    })
}

fn idle_from_requirements(model: InterferenceModel, d: &[f64], traffic: &[TrafficModel]) -> Result<IdleProfile> {
    match model {
        InterferenceModel::Unsaturated => IdleProfile::from_requirements(d, traffic),
        InterferenceModel::FullInterference => Ok(IdleProfile::full_interference(d.len())),
    }
}

/// QoS exponent of SBS `n` meeting requirement vector `d` in the
/// unsaturated model: solves `theta T_s C_n(theta) = ln(p/(1-d_n) + 1 - p)`
/// with peers idle with probability `d_j (1 - p_j)`.
pub fn solve_theta_given_d(
    n: usize,
    d: &[f64],
    traffic: &[TrafficModel],
    gains: &LinkGainMatrix,
    channel: &Channel,
    config: &SolverConfig,
) -> Result<f64> {
    solve_theta_given_d_as(InterferenceModel::Unsaturated, n, d, traffic, gains, channel, config)
}

pub fn solve_theta_given_d_as(
    model: InterferenceModel,
    n: usize,
    d: &[f64],
    traffic: &[TrafficModel],
    gains: &LinkGainMatrix,
    channel: &Channel,
    config: &SolverConfig,
) -> Result<f64> {
    config.validate()?;
    check_inputs(gains, traffic, channel)?;
    if n >= gains.n() {
        return Err(Error::param("n", "SBS index out of range"));
    }
    if d.len() != gains.n() {
        return Err(Error::param("d", "length must match the SBS count"));
    }
    if let Some(bad) = d.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::Domain(format!("requirement d = {bad} must lie in (0, 1)")));
    }
    if traffic[n].p == 0.0 {
        return Err(Error::Domain(format!("SBS {n} has no traffic; its exponent is unbounded")));
    }
    let idle = idle_from_requirements(model, d, traffic)?;
    let target = eb_log_term(traffic[n].p, d[n]);
    let lhs = |theta: f64| -> Result<f64> {
        Ok(channel.service_mgf(n, theta, gains, idle.idle())?.neg_log())
    };

    // lhs is increasing from 0 to infinity; bracket geometrically around
    // theta with theta B T_s = 1
    let mut lo = 1.0 / channel.bits_per_slot();
    let mut hi = lo;
    let mut f_lo = lhs(lo)? - target;
    let mut steps = 0;
    while f_lo >= 0.0 {
        hi = lo;
        lo *= 0.5;
        f_lo = lhs(lo)? - target;
        steps += 1;
        if steps > 400 || lo == 0.0 {
            return Err(Error::NoBracket { sbs: n });
        }
    }
    if hi == lo {
        let mut f_hi = lhs(hi)? - target;
        while f_hi < 0.0 {
            lo = hi;
            hi *= 2.0;
            f_hi = lhs(hi)? - target;
            steps += 1;
            if steps > 400 || !hi.is_finite() {
                return Err(Error::NoBracket { sbs: n });
            }
        }
    }

    while hi - lo > config.theta_rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if lhs(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Maximum mean arrival rate (bits/s) of SBS `n` for its requirement, i.e.
/// the mean rate with `mean_size = d_n / theta*_n`.
pub fn max_arrival_rate(n: usize, d: &[f64], traffic: &[TrafficModel], theta_star_n: f64) -> Result<f64> {
    if n >= d.len() || n >= traffic.len() {
        return Err(Error::param("n", "SBS index out of range"));
    }
    if !(theta_star_n > 0.0) {
        return Err(Error::Domain("theta* must be positive".into()));
    }
    Ok(d[n] * traffic[n].p / (theta_star_n * traffic[n].slot))
}

/// Per-SBS maximum arrival rates for a common requirement vector.
pub fn max_arrival_rates(
    model: InterferenceModel,
    d: &[f64],
    traffic: &[TrafficModel],
    gains: &LinkGainMatrix,
    channel: &Channel,
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    (0..gains.n())
        .map(|n| {
            let theta = solve_theta_given_d_as(model, n, d, traffic, gains, channel, config)?;
            max_arrival_rate(n, d, traffic, theta)
        })
        .collect()
}
