//! Effective bandwidth, SINR densities, effective capacity and the
//! probabilities built on them.
//!
//! Conventions: the physical-layer rate is `B * log2(1 + sinr)` bits per
//! second; every outer logarithm of an effective bandwidth or effective
//! capacity is natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LinkGainMatrix;
use crate::quad::{integrate_to_infinity, QuadOptions};

/// Bernoulli arrivals with exponentially distributed sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    /// Arrival probability per slot.
    pub p: f64,
    /// Mean packet size in bits.
    pub mean_size: f64,
    /// Slot duration in seconds.
    pub slot: f64,
}

impl TrafficModel {
    pub fn new(p: f64, mean_size: f64, slot: f64) -> Result<Self> {
        let t = Self { p, mean_size, slot };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param("p", format!("must lie in [0, 1], got {}", self.p)));
        }
        if !(self.mean_size > 0.0 && self.mean_size.is_finite()) {
            return Err(Error::param("mean_size", "must be positive and finite"));
        }
        if !(self.slot > 0.0 && self.slot.is_finite()) {
            return Err(Error::param("slot", "must be positive and finite"));
        }
        Ok(())
    }

    /// Mean arrival rate in bits/s.
    pub fn mean_rate(&self) -> f64 {
        self.p * self.mean_size / self.slot
    }

    pub fn with_p(self, p: f64) -> Self {
        Self { p, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosSpec {
    /// QoS exponent in 1/bit.
    pub theta: f64,
    /// Queue threshold in bits.
    pub q_threshold: f64,
    /// Delay bound in seconds.
    pub delay_bound: f64,
    /// Normalized requirement `theta * mean_size`.
    pub d: f64,
}

impl QosSpec {
    pub fn new(theta: f64, q_threshold: f64, delay_bound: f64, traffic: &TrafficModel) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::param("theta", "must be positive"));
        }
        if !(q_threshold >= 0.0) {
            return Err(Error::param("q_threshold", "must be nonnegative"));
        }
        if !(delay_bound >= 0.0) {
            return Err(Error::param("delay_bound", "must be nonnegative"));
        }
        let d = theta * traffic.mean_size;
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::Domain(format!(
                "theta * mean_size = {d} must lie in (0, 1)"
            )));
        }
        Ok(Self {
            theta,
            q_threshold,
            delay_bound,
            d,
        })
    }
}

/// Steady-state idle probabilities `P_n` and nonempty-buffer probabilities
/// `eta_n`, tied by `P_n = (1 - eta_n)(1 - p_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdleProfile {
    idle: Vec<f64>,
    eta: Vec<f64>,
}

impl IdleProfile {
    /// Profile induced by QoS exponents.
    pub fn from_exponents(theta: &[f64], traffic: &[TrafficModel]) -> Result<Self> {
        if theta.len() != traffic.len() {
            return Err(Error::param("theta", "length must match traffic"));
        }
        let d: Vec<f64> = theta.iter().zip(traffic).map(|(t, tr)| t * tr.mean_size).collect();
        Self::from_requirements(&d, traffic)
    }

    /// Profile induced by normalized requirements `d_n = theta_n * mean_size_n`.
    pub fn from_requirements(d: &[f64], traffic: &[TrafficModel]) -> Result<Self> {
        if d.len() != traffic.len() {
            return Err(Error::param("d", "length must match traffic"));
        }
        let mut idle = Vec::with_capacity(d.len());
        let mut eta = Vec::with_capacity(d.len());
        for (&dn, tr) in d.iter().zip(traffic) {
            if !(0.0..=1.0).contains(&dn) {
                return Err(Error::Domain(format!("normalized requirement {dn} outside [0, 1]")));
            }
            eta.push(1.0 - dn);
            idle.push(dn * (1.0 - tr.p));
        }
        Ok(Self { idle, eta })
    }

    /// Every SBS always transmits.
    pub fn full_interference(n: usize) -> Self {
        Self {
            idle: vec![0.0; n],
            eta: vec![1.0; n],
        }
    }

    pub fn idle(&self) -> &[f64] {
        &self.idle
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }
}

/// `E[exp(-theta * r * T_s)]` together with its complement, each computed
/// without cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceMgf {
    pub mgf: f64,
    pub complement: f64,
}

impl ServiceMgf {
    /// `-ln E[exp(-theta r T_s)]`.
    pub fn neg_log(&self) -> f64 {
        if self.complement <= 0.5 {
            -(-self.complement).ln_1p()
        } else {
            -self.mgf.ln()
        }
    }

    /// `exp(-ln mgf) - 1 = (1 - mgf) / mgf`.
    pub fn odds(&self) -> f64 {
        self.complement / self.mgf
    }

    fn check(self) -> Result<Self> {
        if !(self.mgf > 0.0) || !self.mgf.is_finite() {
            return Err(Error::Capacity(format!(
                "service moment generating function {:e} is not positive (quadrature failure)",
                self.mgf
            )));
        }
        if !(self.complement >= 0.0) || self.complement > 1.0 + 1e-12 || self.mgf > 1.0 + 1e-12 {
            return Err(Error::Capacity(format!(
                "probability out of range: mgf {:e}, complement {:e}",
                self.mgf, self.complement
            )));
        }
        Ok(self)
    }
}

/// Physical-layer constants the effective capacity depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub bandwidth: f64,
    pub slot: f64,
    pub quad: QuadOptions,
}

impl Channel {
    pub fn new(bandwidth: f64, slot: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::param("bandwidth", "must be positive and finite"));
        }
        if !(slot > 0.0 && slot.is_finite()) {
            return Err(Error::param("slot", "must be positive and finite"));
        }
        Ok(Self {
            bandwidth,
            slot,
            quad: QuadOptions::default(),
        })
    }

    /// Bits a slot can carry per unit of log2(1 + sinr).
    pub fn bits_per_slot(&self) -> f64 {
        self.bandwidth * self.slot
    }

    fn check_theta(&self, theta: f64) -> Result<f64> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Domain(format!("QoS exponent must be positive, got {theta}")));
        }
        Ok(theta * self.bits_per_slot())
    }

    /// Effective capacity of SBS `n` under the independent-idle interference
    /// model, in bits/s. `idle[j]` is the idle probability of SBS `j`;
    /// `idle[n]` is ignored.
    pub fn ec_n_sbs(&self, n: usize, theta: f64, gains: &LinkGainMatrix, idle: &[f64]) -> Result<f64> {
        let m = self.service_mgf(n, theta, gains, idle)?;
        Ok(m.neg_log() / (theta * self.slot))
    }

    /// `E[exp(-theta r_n T_s)]` through the `t`-integral representation,
    /// integrated after the substitution `u = -ln t`:
    ///
    /// `1 - ∫_0^∞ e^{-u} e^{-s(u)} Π_{j≠n} ((1-P_j)/(1+s(u) β̄_{j,n}) + P_j) du`
    ///
    /// with `s(u) = (2^{u/(θ B T_s)} - 1)/β̄_{n,n}`. Both the integral and its
    /// complement are bounded by `e^{-u}` tails, which sets the truncation.
    pub fn service_mgf(&self, n: usize, theta: f64, gains: &LinkGainMatrix, idle: &[f64]) -> Result<ServiceMgf> {
        let k = self.check_theta(theta)?;
        let size = gains.n();
        if n >= size {
            return Err(Error::param("n", "SBS index out of range"));
        }
        if idle.len() != size {
            return Err(Error::param("idle", "length must match gains"));
        }
        for (j, &p) in idle.iter().enumerate() {
            if j != n && !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("idle probability {p} of SBS {j} outside [0, 1]")));
            }
        }

        let desired = gains.desired(n);
        let peers: Vec<(f64, f64)> = (0..size)
            .filter(|&j| j != n && idle[j] < 1.0)
            .map(|j| (gains.mean_snr(j, n), idle[j]))
            .collect();
        let rate = std::f64::consts::LN_2 / k;
        let log_g = |u: f64| -> f64 {
            let s = (u * rate).exp_m1() / desired;
            let mut acc = -s;
            for &(beta, p_idle) in &peers {
                acc += ((1.0 - p_idle) / (1.0 + s * beta) + p_idle).ln();
            }
            acc
        };

        let opts = &self.quad;
        let first = k.min(1.0);
        let tail = |x: f64| (-x).exp();
        let tail_mass = integrate_to_infinity(|u| (-u + log_g(u)).exp(), 0.0, first, tail, opts)?.value;
        let mgf = if tail_mass <= 0.5 {
            ServiceMgf {
                mgf: 1.0 - tail_mass,
                complement: tail_mass,
            }
        } else {
            let mgf = integrate_to_infinity(
                |u| (-u).exp() * -log_g(u).exp_m1(),
                0.0,
                first,
                tail,
                opts,
            )?
            .value;
            ServiceMgf {
                mgf,
                complement: 1.0 - mgf,
            }
        };
        mgf.check()
    }

    /// Effective capacity of `own` in a two-SBS network from the SINR
    /// densities: a mixture of the interference-free density (peer idle) and
    /// the one-interferer density (peer active).
    pub fn ec_two_sbs(&self, theta: f64, gains: &LinkGainMatrix, own: usize, peer_idle_prob: f64) -> Result<f64> {
        let m = self.service_mgf_two_sbs(theta, gains, own, peer_idle_prob)?;
        Ok(m.neg_log() / (theta * self.slot))
    }

    pub fn service_mgf_two_sbs(
        &self,
        theta: f64,
        gains: &LinkGainMatrix,
        own: usize,
        peer_idle_prob: f64,
    ) -> Result<ServiceMgf> {
        let k = self.check_theta(theta)?;
        if gains.n() != 2 || own > 1 {
            return Err(Error::param("gains", "two-SBS route needs a 2x2 matrix and own in {0, 1}"));
        }
        if !(0.0..=1.0).contains(&peer_idle_prob) {
            return Err(Error::Domain(format!("peer idle probability {peer_idle_prob} outside [0, 1]")));
        }
        let peer = 1 - own;
        let b_own = gains.desired(own);
        let b_peer = gains.mean_snr(peer, own);
        let a = k / std::f64::consts::LN_2;

        // weight(x) = exp(-θ B T_s log2(1 + x)) = (1 + x)^(-a)
        let log_weight = |x: f64| -a * x.ln_1p();
        let first = b_own.min(1.0);
        let tail = |x: f64| (-x / b_own).exp();
        let opts = &self.quad;
        let pair = |pdf: &dyn Fn(f64) -> f64| -> Result<(f64, f64)> {
            let w = integrate_to_infinity(|x| log_weight(x).exp() * pdf(x), 0.0, first, tail, opts)?.value;
            let c = integrate_to_infinity(|x| -log_weight(x).exp_m1() * pdf(x), 0.0, first, tail, opts)?.value;
            Ok((w, c))
        };

        let (w1, c1) = pair(&|x| pdf_sinr_type1(b_own, x))?;
        let (w2, c2) = if peer_idle_prob < 1.0 {
            pair(&|x| pdf_sinr_type2(b_own, b_peer, x))?
        } else {
            (0.0, 0.0)
        };
        let pi = peer_idle_prob;
        ServiceMgf {
            mgf: pi * w1 + (1.0 - pi) * w2,
            complement: pi * c1 + (1.0 - pi) * c2,
        }
        .check()
    }
}

/// Minimum constant service rate (bits/s) for Bernoulli/exponential traffic
/// at QoS exponent `theta`.
pub fn effective_bandwidth(traffic: &TrafficModel, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("QoS exponent must be positive, got {theta}")));
    }
    let d = theta * traffic.mean_size;
    if d >= 1.0 {
        return Err(Error::Domain(format!(
            "theta * mean_size = {d} reaches the effective bandwidth pole"
        )));
    }
    Ok(eb_log_term(traffic.p, d) / (theta * traffic.slot))
}

/// `ln(p/(1-d) + 1 - p)`, evaluated as `ln1p(p d / (1 - d))`.
pub fn eb_log_term(p: f64, d: f64) -> f64 {
    (p * d / (1.0 - d)).ln_1p()
}

/// Density of the interference-free SINR, exponential with mean `beta11`.
pub fn pdf_sinr_type1(beta11: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    (-x / beta11).exp() / beta11
}

/// Density of `beta11 |h1|^2 / (beta21 |h2|^2 + 1)` with one active interferer.
pub fn pdf_sinr_type2(beta11: f64, beta21: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let den = beta11 + beta21 * x;
    (1.0 / den + beta11 * beta21 / (den * den)) * (-x / beta11).exp()
}

pub fn cdf_sinr_type1(beta11: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    -(-x / beta11).exp_m1()
}

/// Closed-form distribution function matching [`pdf_sinr_type2`].
pub fn cdf_sinr_type2(beta11: f64, beta21: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    1.0 - (-x / beta11).exp() * beta11 / (beta11 + beta21 * x)
}

/// Idle probability `theta* mean_size (1 - p)`.
pub fn idle_probability(theta_star: f64, traffic: &TrafficModel) -> Result<f64> {
    let d = normalized(theta_star, traffic)?;
    Ok(d * (1.0 - traffic.p))
}

/// `Pr{Q > q_threshold} ≈ (1 - theta* mean_size) exp(-theta* q_threshold)`.
pub fn queue_violation_prob(theta_star: f64, traffic: &TrafficModel, q_threshold: f64) -> Result<f64> {
    let d = normalized(theta_star, traffic)?;
    if !(q_threshold >= 0.0) {
        return Err(Error::param("q_threshold", "must be nonnegative"));
    }
    Ok((1.0 - d) * (-theta_star * q_threshold).exp())
}

/// Delay-violation probability for normalized requirement `d`; `delay_bound`
/// and `slot` in seconds.
pub fn delay_violation_prob(d: f64, p: f64, delay_bound: f64, slot: f64) -> Result<f64> {
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Domain(format!("d = {d} must lie in (0, 1)")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", "must lie in [0, 1]"));
    }
    if !(delay_bound >= 0.0) || !(slot > 0.0) {
        return Err(Error::param("delay_bound", "need delay_bound >= 0 and slot > 0"));
    }
    Ok((1.0 - d) * (-eb_log_term(p, d) * delay_bound / slot).exp())
}

fn normalized(theta_star: f64, traffic: &TrafficModel) -> Result<f64> {
    let d = theta_star * traffic.mean_size;
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Domain(format!(
            "theta* mean_size = {d} must lie in (0, 1)"
        )));
    }
    Ok(d)
}
