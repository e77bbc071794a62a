//! Slot-level Monte Carlo simulator of coupled FIFO queues.
//!
//! Within slot `t`:
//!
//! 1. SBSs with a nonempty queue at slot start form the active set (every
//!    SBS in the full-interference variant).
//! 2. A fresh fading matrix is drawn (block fading).
//! 3. Each SBS with a nonempty queue serves up to `B T_s log2(1 + sinr)` bits,
//!    draining packets in FIFO order; partial service is allowed.
//! 4. Post-warmup statistics are recorded. Queue statistics use the backlog
//!    left after service.
//! 5. With probability `p_n` a packet of exponential size (mean
//!    `mean_size_n`) arrives; it is first servable in slot `t + 1`.
//!
//! Randomness comes from one master seed expanded into independent ChaCha
//! streams per (run, purpose), so a replication is a pure function of
//! `(seed, run_index, config)` and the two interference models see identical
//! fading and arrivals under the same seed.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{Channel, TrafficModel};
use crate::error::{Error, Result};
use crate::model::{sinr_with_mask, FadingDraw, LinkGainMatrix};
use crate::solver::{check_inputs, InterferenceModel};

const STREAM_FADING: u64 = 0;
const STREAM_ARRIVALS: u64 = 1;
const STREAM_SIZES: u64 = 2;
const STREAM_RESERVOIR: u64 = 3;
const STREAMS_PER_RUN: u64 = 8;

/// Independent stream `purpose` of replication `run_index`.
pub fn stream_rng(seed: u64, run_index: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index * STREAMS_PER_RUN + purpose);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub slots: u64,
    pub runs: usize,
    /// Slots discarded before recording; `None` means 5% of `slots`.
    pub warmup: Option<u64>,
    pub seed: u64,
    /// Queue threshold in bits.
    pub q_threshold: f64,
    /// Delay bound in slots for the empirical delay-violation fraction.
    pub delay_bound_slots: u64,
    pub record_sinr: bool,
    /// Reservoir size per SBS when `record_sinr` is set.
    pub sinr_reservoir: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            slots: 100_000,
            runs: 2000,
            warmup: None,
            seed: 1,
            q_threshold: 10.0,
            delay_bound_slots: 10,
            record_sinr: false,
            sinr_reservoir: 10_000,
        }
    }
}

impl SimConfig {
    pub fn warmup_slots(&self) -> u64 {
        self.warmup.unwrap_or(self.slots / 20)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::param("runs", "must be at least 1"));
        }
        if self.slots <= self.warmup_slots() {
            return Err(Error::param("slots", "must exceed warmup"));
        }
        if !(self.q_threshold >= 0.0) {
            return Err(Error::param("q_threshold", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Raw statistics of one SBS in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbsRun {
    /// Fraction of recorded slots whose post-service backlog exceeds the threshold.
    pub violation_prob: f64,
    pub mean_queue_bits: f64,
    /// Bit-weighted departure slot minus arrival slot; `None` without departures.
    pub mean_delay_slots: Option<f64>,
    /// Fraction of departed bits whose delay exceeds the delay bound.
    pub delay_violation_prob: Option<f64>,
    /// Fraction of recorded slots with a nonempty queue at slot start.
    pub busy_fraction: f64,
    pub throughput_bps: f64,
    /// Bookkeeping over the whole run, warmup included.
    pub arrived_bits: f64,
    pub served_bits: f64,
    pub final_queue_bits: f64,
}

impl SbsRun {
    pub fn idle_fraction(&self) -> f64 {
        1.0 - self.busy_fraction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub run_index: u64,
    pub model: InterferenceModel,
    pub sbs: Vec<SbsRun>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sinr_samples: Vec<Vec<f64>>,
}

/// What happened in the most recent slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    /// Queue nonempty at slot start.
    pub busy: Vec<bool>,
    /// SBSs counted as interferers.
    pub active: Vec<bool>,
    /// SINR of busy SBSs.
    pub sinr: Vec<Option<f64>>,
    pub capacity_bits: Vec<f64>,
    pub served_bits: Vec<f64>,
    /// Desired-link fading `|H_{n,n}|^2`.
    pub desired_fading: Vec<f64>,
    pub backlog_bits: Vec<f64>,
    /// Size of the packet that arrived at the end of the slot, or 0.
    pub arrival_bits: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    slots: u64,
    violations: u64,
    queue_sum: f64,
    busy: u64,
    served: f64,
    delay_weighted: f64,
    departed: f64,
    delay_violated: f64,
    arrived_total: f64,
    served_total: f64,
}

#[derive(Debug, Clone)]
struct Reservoir {
    capacity: usize,
    seen: u64,
    samples: Vec<f64>,
}

impl Reservoir {
    fn offer<R: Rng>(&mut self, value: f64, rng: &mut R) {
        self.seen += 1;
        if self.samples.len() < self.capacity {
            self.samples.push(value);
        } else {
            let k = rng.random_range(0..self.seen);
            if (k as usize) < self.capacity {
                self.samples[k as usize] = value;
            }
        }
    }
}

/// One replication, advanced slot by slot.
pub struct Simulator<'a> {
    gains: &'a LinkGainMatrix,
    traffic: &'a [TrafficModel],
    channel: &'a Channel,
    config: &'a SimConfig,
    model: InterferenceModel,
    run_index: u64,
    queues: Vec<VecDeque<(u64, f64)>>,
    backlog: Vec<f64>,
    fading: FadingDraw,
    fading_rng: ChaCha8Rng,
    arrival_rng: ChaCha8Rng,
    size_rng: ChaCha8Rng,
    reservoir_rng: ChaCha8Rng,
    acc: Vec<Accumulator>,
    reservoirs: Vec<Reservoir>,
    record: SlotRecord,
    slot: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(
        gains: &'a LinkGainMatrix,
        traffic: &'a [TrafficModel],
        channel: &'a Channel,
        config: &'a SimConfig,
        model: InterferenceModel,
        run_index: u64,
    ) -> Result<Self> {
        check_inputs(gains, traffic, channel)?;
        config.validate()?;
        let n = gains.n();
        let seed = config.seed;
        let reservoirs = if config.record_sinr {
            vec![
                Reservoir {
                    capacity: config.sinr_reservoir,
                    seen: 0,
                    samples: Vec::new(),
                };
                n
            ]
        } else {
            Vec::new()
        };
        Ok(Self {
            gains,
            traffic,
            channel,
            config,
            model,
            run_index,
            queues: vec![VecDeque::new(); n],
            backlog: vec![0.0; n],
            fading: FadingDraw::unit(n),
            fading_rng: stream_rng(seed, run_index, STREAM_FADING),
            arrival_rng: stream_rng(seed, run_index, STREAM_ARRIVALS),
            size_rng: stream_rng(seed, run_index, STREAM_SIZES),
            reservoir_rng: stream_rng(seed, run_index, STREAM_RESERVOIR),
            acc: vec![Accumulator::default(); n],
            reservoirs,
            record: SlotRecord {
                slot: 0,
                busy: vec![false; n],
                active: vec![false; n],
                sinr: vec![None; n],
                capacity_bits: vec![0.0; n],
                served_bits: vec![0.0; n],
                desired_fading: vec![0.0; n],
                backlog_bits: vec![0.0; n],
                arrival_bits: vec![0.0; n],
            },
            slot: 0,
        })
    }

    /// Replaces the fading stream's next draw: the next [`step`](Self::step)
    /// uses `draw` instead of sampling.
    pub fn step_with_fading(&mut self, draw: FadingDraw) -> Result<&SlotRecord> {
        if draw.n() != self.gains.n() {
            return Err(Error::param("fading", "dimension differs from gains"));
        }
        self.fading = draw;
        self.advance(false);
        Ok(&self.record)
    }

    pub fn step(&mut self) -> &SlotRecord {
        self.advance(true);
        &self.record
    }

    pub fn backlog(&self) -> &[f64] {
        &self.backlog
    }

    fn advance(&mut self, sample_fading: bool) {
        let n_sbs = self.gains.n();
        let t = self.slot;
        let recording = t >= self.config.warmup_slots();
        let bits_per_slot = self.channel.bits_per_slot();
        let rec = &mut self.record;
        rec.slot = t;

        for n in 0..n_sbs {
            rec.busy[n] = self.backlog[n] > 0.0;
            rec.active[n] = match self.model {
                InterferenceModel::Unsaturated => rec.busy[n],
                InterferenceModel::FullInterference => true,
            };
        }
        if sample_fading {
            self.fading.resample(&mut self.fading_rng);
        }

        for n in 0..n_sbs {
            rec.desired_fading[n] = self.fading.get(n, n);
            rec.served_bits[n] = 0.0;
            rec.sinr[n] = None;
            rec.capacity_bits[n] = 0.0;
            if !rec.busy[n] {
                continue;
            }
            let gamma = sinr_with_mask(self.gains, n, &rec.active, &self.fading);
            let capacity = bits_per_slot * (1.0 + gamma).log2();
            rec.sinr[n] = Some(gamma);
            rec.capacity_bits[n] = capacity;

            let mut budget = capacity;
            let mut served = 0.0;
            let acc = &mut self.acc[n];
            let queue = &mut self.queues[n];
            while budget > 0.0 {
                let Some(front) = queue.front_mut() else { break };
                let take = front.1.min(budget);
                front.1 -= take;
                budget -= take;
                served += take;
                if recording {
                    let delay = (t - front.0) as f64;
                    acc.delay_weighted += delay * take;
                    acc.departed += take;
                    if t - front.0 > self.config.delay_bound_slots {
                        acc.delay_violated += take;
                    }
                }
                if front.1 <= 0.0 {
                    queue.pop_front();
                }
            }
            // the queue sum is authoritative; recompute to avoid drift
            self.backlog[n] = if queue.is_empty() { 0.0 } else { self.backlog[n] - served };
            if self.backlog[n] < 0.0 {
                self.backlog[n] = queue.iter().map(|p| p.1).sum();
            }
            rec.served_bits[n] = served;
            acc.served_total += served;
            if recording {
                if let Some(res) = self.reservoirs.get_mut(n) {
                    res.offer(gamma, &mut self.reservoir_rng);
                }
            }
        }

        for n in 0..n_sbs {
            rec.backlog_bits[n] = self.backlog[n];
            if recording {
                let acc = &mut self.acc[n];
                acc.slots += 1;
                if rec.busy[n] {
                    acc.busy += 1;
                }
                if self.backlog[n] > self.config.q_threshold {
                    acc.violations += 1;
                }
                acc.queue_sum += self.backlog[n];
                acc.served += rec.served_bits[n];
            }
        }

        for n in 0..n_sbs {
            let u: f64 = self.arrival_rng.random();
            rec.arrival_bits[n] = 0.0;
            if u < self.traffic[n].p {
                let e: f64 = Exp1.sample(&mut self.size_rng);
                let size = e * self.traffic[n].mean_size;
                if size > 0.0 {
                    self.queues[n].push_back((t, size));
                    self.backlog[n] += size;
                    self.acc[n].arrived_total += size;
                    rec.arrival_bits[n] = size;
                }
            }
        }
        self.slot += 1;
    }

    pub fn finish(self) -> RunStats {
        let slot_len = self.channel.slot;
        let sbs = self
            .acc
            .iter()
            .zip(&self.queues)
            .map(|(a, q)| {
                let slots = a.slots as f64;
                SbsRun {
                    violation_prob: a.violations as f64 / slots,
                    mean_queue_bits: a.queue_sum / slots,
                    mean_delay_slots: (a.departed > 0.0).then(|| a.delay_weighted / a.departed),
                    delay_violation_prob: (a.departed > 0.0).then(|| a.delay_violated / a.departed),
                    busy_fraction: a.busy as f64 / slots,
                    throughput_bps: a.served / (slots * slot_len),
                    arrived_bits: a.arrived_total,
                    served_bits: a.served_total,
                    final_queue_bits: q.iter().map(|p| p.1).sum(),
                }
            })
            .collect();
        RunStats {
            run_index: self.run_index,
            model: self.model,
            sbs,
            sinr_samples: self.reservoirs.into_iter().map(|r| r.samples).collect(),
        }
    }
}

fn run_as(
    model: InterferenceModel,
    gains: &LinkGainMatrix,
    traffic: &[TrafficModel],
    channel: &Channel,
    config: &SimConfig,
    run_index: u64,
) -> Result<RunStats> {
    let mut sim = Simulator::new(gains, traffic, channel, config, model, run_index)?;
    for _ in 0..config.slots {
        sim.step();
    }
    Ok(sim.finish())
}

/// One replication of the state-dependent interference model.
pub fn run_replication(
    gains: &LinkGainMatrix,
    traffic: &[TrafficModel],
    channel: &Channel,
    config: &SimConfig,
    run_index: u64,
) -> Result<RunStats> {
    run_as(InterferenceModel::Unsaturated, gains, traffic, channel, config, run_index)
}

/// One replication where every SBS always interferes.
pub fn run_full_interference_replication(
    gains: &LinkGainMatrix,
    traffic: &[TrafficModel],
    channel: &Channel,
    config: &SimConfig,
    run_index: u64,
) -> Result<RunStats> {
    run_as(InterferenceModel::FullInterference, gains, traffic, channel, config, run_index)
}

/// `config.runs` replications in parallel, returned in run order.
pub fn run_many(
    model: InterferenceModel,
    gains: &LinkGainMatrix,
    traffic: &[TrafficModel],
    channel: &Channel,
    config: &SimConfig,
) -> Result<Vec<RunStats>> {
    config.validate()?;
    (0..config.runs as u64)
        .into_par_iter()
        .map(|r| run_as(model, gains, traffic, channel, config, r))
        .collect()
}

pub fn simulate(
    model: InterferenceModel,
    gains: &LinkGainMatrix,
    traffic: &[TrafficModel],
    channel: &Channel,
    config: &SimConfig,
) -> Result<SimStats> {
    aggregate(&run_many(model, gains, traffic, channel, config)?)
}

/// Across-run mean with a normal-approximation 95% half-width; the
/// half-width is `None` with fewer than two samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: Option<f64>,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half_width = (n > 1).then(|| {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            1.959_963_984_540_054 * (var / n as f64).sqrt()
        });
        Some(Self {
            mean,
            half_width,
            samples: n,
        })
    }

    pub fn contains(&self, value: f64) -> bool {
        match self.half_width {
            Some(h) => (value - self.mean).abs() <= h,
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbsSummary {
    pub violation_prob: Estimate,
    pub mean_queue_bits: Estimate,
    pub mean_delay_slots: Option<Estimate>,
    pub delay_violation_prob: Option<Estimate>,
    pub busy_fraction: Estimate,
    pub idle_fraction: Estimate,
    pub throughput_bps: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub runs: usize,
    pub model: InterferenceModel,
    pub sbs: Vec<SbsSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sinr_samples: Vec<Vec<f64>>,
}

/// Deterministic reduction over replications, in the order given.
pub fn aggregate(runs: &[RunStats]) -> Result<SimStats> {
    let first = runs.first().ok_or_else(|| Error::param("runs", "need at least one run"))?;
    let n = first.sbs.len();
    if runs.iter().any(|r| r.sbs.len() != n || r.model != first.model) {
        return Err(Error::param("runs", "runs disagree on SBS count or model"));
    }
    let column = |f: &dyn Fn(&SbsRun) -> f64, k: usize| -> Estimate {
        let v: Vec<f64> = runs.iter().map(|r| f(&r.sbs[k])).collect();
        Estimate::from_samples(&v).expect("nonempty")
    };
    let optional = |f: &dyn Fn(&SbsRun) -> Option<f64>, k: usize| -> Option<Estimate> {
        let v: Vec<f64> = runs.iter().filter_map(|r| f(&r.sbs[k])).collect();
        Estimate::from_samples(&v)
    };
    let sbs = (0..n)
        .map(|k| SbsSummary {
            violation_prob: column(&|s| s.violation_prob, k),
            mean_queue_bits: column(&|s| s.mean_queue_bits, k),
            mean_delay_slots: optional(&|s| s.mean_delay_slots, k),
            delay_violation_prob: optional(&|s| s.delay_violation_prob, k),
            busy_fraction: column(&|s| s.busy_fraction, k),
            idle_fraction: column(&|s| s.idle_fraction(), k),
            throughput_bps: column(&|s| s.throughput_bps, k),
        })
        .collect();
    let mut sinr_samples: Vec<Vec<f64>> = Vec::new();
    for r in runs {
        for (k, s) in r.sinr_samples.iter().enumerate() {
            if sinr_samples.len() <= k {
                sinr_samples.resize(k + 1, Vec::new());
            }
            sinr_samples[k].extend_from_slice(s);
        }
    }
    Ok(SimStats {
        runs: runs.len(),
        model: first.model,
        sbs,
        sinr_samples,
    })
}

/// One JSON record per run.
pub fn write_runs_jsonl<W: Write>(runs: &[RunStats], mut out: W) -> Result<()> {
    for r in runs {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_runs_jsonl<R: BufRead>(input: R) -> Result<Vec<RunStats>> {
    let mut runs = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        runs.push(serde_json::from_str(&line)?);
    }
    Ok(runs)
}

/// SINR samples of SBS `n` with each peer `j` active independently with
/// probability `1 - idle[j]`.
pub fn collect_sinr_samples(gains: &LinkGainMatrix, n: usize, idle: &[f64], draws: usize, seed: u64) -> Result<Vec<f64>> {
    let size = gains.n();
    if n >= size || idle.len() != size {
        return Err(Error::param("idle", "length must match gains and n must be in range"));
    }
    if draws == 0 {
        return Err(Error::param("draws", "must be at least 1"));
    }
    let mut activity = stream_rng(seed, 0, STREAM_ARRIVALS);
    let mut fading = stream_rng(seed, 0, STREAM_FADING);
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut interference = 0.0;
        for j in 0..size {
            if j == n {
                continue;
            }
            let u: f64 = activity.random();
            let h: f64 = Exp1.sample(&mut fading);
            if u >= idle[j] {
                interference += gains.mean_snr(j, n) * h;
            }
        }
        let h: f64 = Exp1.sample(&mut fading);
        out.push(gains.desired(n) * h / (interference + 1.0));
    }
    Ok(out)
}
