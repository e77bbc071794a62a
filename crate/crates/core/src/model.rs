//! Network layouts, large-scale path loss and instantaneous SINR.
//!
//! Conversion from dB to linear happens once, when a [`LinkGainMatrix`] is
//! built. Entry `(j, n)` of the matrix is the mean received SNR from SBS `j`
//! at the UE served by SBS `n`; use [`LinkGainMatrix::mean_snr`] rather than
//! indexing rows by hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioParams {
    /// Transmit power per SBS in dBm.
    pub tx_power_dbm: f64,
    /// Noise power spectral density in dBm/Hz.
    pub noise_density_dbm_hz: f64,
    pub bandwidth_hz: f64,
    /// Path loss at 1 m in dB.
    pub pathloss_offset_db: f64,
    /// Path loss slope in dB per decade of distance.
    pub pathloss_slope_db: f64,
    /// Distances below this are clamped before evaluating path loss.
    pub min_distance_m: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            tx_power_dbm: 23.0,
            noise_density_dbm_hz: -174.0,
            bandwidth_hz: 1.0e6,
            pathloss_offset_db: 60.0,
            pathloss_slope_db: 37.6,
            min_distance_m: 1.0,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::param("bandwidth_hz", "must be positive and finite"));
        }
        if !(self.min_distance_m > 0.0) {
            return Err(Error::param("min_distance_m", "must be positive"));
        }
        for (name, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_density_dbm_hz", self.noise_density_dbm_hz),
            ("pathloss_offset_db", self.pathloss_offset_db),
            ("pathloss_slope_db", self.pathloss_slope_db),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// Path loss in dB at `distance_m` (no clamping).
    pub fn path_loss_db(&self, distance_m: f64) -> f64 {
        self.pathloss_offset_db + self.pathloss_slope_db * distance_m.log10()
    }

    /// Noise power over the whole band in dBm.
    pub fn noise_dbm(&self) -> f64 {
        self.noise_density_dbm_hz + 10.0 * self.bandwidth_hz.log10()
    }

    /// Mean received SNR in dB at `distance_m`, after min-distance clamping.
    pub fn mean_snr_db(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(self.min_distance_m);
        self.tx_power_dbm - self.path_loss_db(d) - self.noise_dbm()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub sbs_positions: Vec<Point>,
    /// One served UE per SBS, same order as `sbs_positions`.
    pub served_ue_positions: Vec<Point>,
    pub area_side: f64,
    pub radio: RadioParams,
}

impl NetworkLayout {
    pub fn new(
        sbs_positions: Vec<Point>,
        served_ue_positions: Vec<Point>,
        area_side: f64,
        radio: RadioParams,
    ) -> Result<Self> {
        let layout = Self {
            sbs_positions,
            served_ue_positions,
            area_side,
            radio,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return Err(Error::param("area_side", "must be positive and finite"));
        }
        if self.sbs_positions.is_empty() {
            return Err(Error::param("sbs_positions", "need at least one SBS"));
        }
        if self.sbs_positions.len() != self.served_ue_positions.len() {
            return Err(Error::param(
                "served_ue_positions",
                format!(
                    "expected exactly one served UE per SBS ({} SBSs, {} UEs)",
                    self.sbs_positions.len(),
                    self.served_ue_positions.len()
                ),
            ));
        }
        let inside = |p: &Point| {
            p.iter()
                .all(|c| c.is_finite() && *c >= 0.0 && *c <= self.area_side)
        };
        if !self.sbs_positions.iter().all(inside) || !self.served_ue_positions.iter().all(inside) {
            return Err(Error::param("positions", "every position must lie in [0, area_side]^2"));
        }
        self.radio.validate()
    }

    pub fn n_sbs(&self) -> usize {
        self.sbs_positions.len()
    }
}

fn distance(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Draws SBSs and candidate UEs uniformly over the square, associates every
/// candidate with its strongest SBS (lowest index on ties) and picks one
/// served UE per SBS uniformly among its candidates.
pub fn build_layout(
    n_sbs: usize,
    area_side: f64,
    n_candidate_ues: usize,
    radio: RadioParams,
    seed: u64,
) -> Result<NetworkLayout> {
    if n_sbs == 0 {
        return Err(Error::param("n_sbs", "must be at least 1"));
    }
    if n_candidate_ues < n_sbs {
        return Err(Error::param("n_candidate_ues", "must be at least n_sbs"));
    }
    if !(area_side > 0.0 && area_side.is_finite()) {
        return Err(Error::param("area_side", "must be positive and finite"));
    }
    radio.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| -> Point {
        [rng.random::<f64>() * area_side, rng.random::<f64>() * area_side]
    };
    let sbs: Vec<Point> = (0..n_sbs).map(|_| point(&mut rng)).collect();
    let ues: Vec<Point> = (0..n_candidate_ues).map(|_| point(&mut rng)).collect();

    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); n_sbs];
    for (u, ue) in ues.iter().enumerate() {
        let mut best = 0;
        let mut best_rx = f64::NEG_INFINITY;
        for (j, s) in sbs.iter().enumerate() {
            let rx = radio.mean_snr_db(distance(s, ue));
            if rx > best_rx {
                best_rx = rx;
                best = j;
            }
        }
        cells[best].push(u);
    }

    let mut served = Vec::with_capacity(n_sbs);
    for (j, cell) in cells.iter().enumerate() {
        if cell.is_empty() {
            return Err(Error::EmptyCell { sbs: j });
        }
        served.push(ues[cell[rng.random_range(0..cell.len())]]);
    }

    NetworkLayout::new(sbs, served, area_side, radio)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GainsDoc", into = "GainsDoc")]
pub struct LinkGainMatrix {
    n: usize,
    // row-major: data[from * n + to]
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GainsDoc {
    n: usize,
    /// `beta_bar[j][n]`: from SBS j to the UE of SBS n, linear scale.
    beta_bar: Vec<Vec<f64>>,
}

impl TryFrom<GainsDoc> for LinkGainMatrix {
    type Error = Error;

    fn try_from(doc: GainsDoc) -> Result<Self> {
        if doc.beta_bar.len() != doc.n {
            return Err(Error::param("beta_bar", "row count does not match n"));
        }
        Self::from_linear(doc.beta_bar)
    }
}

impl From<LinkGainMatrix> for GainsDoc {
    fn from(g: LinkGainMatrix) -> Self {
        GainsDoc {
            n: g.n,
            beta_bar: g.rows(),
        }
    }
}

impl LinkGainMatrix {
    /// `rows[j][n]` is the mean SNR from SBS `j` at the UE of SBS `n`.
    pub fn from_linear(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::param("beta_bar", "empty matrix"));
        }
        let mut data = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(Error::param("beta_bar", "matrix must be square"));
            }
            for &v in row {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::param(
                        "beta_bar",
                        format!("entries must be positive and finite, got {v}"),
                    ));
                }
                data.push(v);
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_db(rows_db: &[Vec<f64>]) -> Result<Self> {
        Self::from_linear(
            rows_db
                .iter()
                .map(|r| r.iter().map(|&db| db_to_linear(db)).collect())
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Mean SNR from SBS `from` at the UE served by SBS `to`.
    #[inline]
    pub fn mean_snr(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.n + to]
    }

    /// Desired-link mean SNR of SBS `n`.
    #[inline]
    pub fn desired(&self, n: usize) -> f64 {
        self.mean_snr(n, n)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    /// Symmetric relabelling helper: the matrix seen with SBS indices permuted.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::param("perm", "length must equal n"));
        }
        let rows = (0..self.n)
            .map(|j| (0..self.n).map(|k| self.mean_snr(perm[j], perm[k])).collect())
            .collect();
        Self::from_linear(rows)
    }

    /// Copy with one entry replaced.
    pub fn with_entry(&self, from: usize, to: usize, value: f64) -> Result<Self> {
        let mut rows = self.rows();
        rows[from][to] = value;
        Self::from_linear(rows)
    }
}

/// Mean SNR matrix of a layout; errors on a zero SBS–UE distance.
pub fn link_gains(layout: &NetworkLayout) -> Result<LinkGainMatrix> {
    layout.validate()?;
    let n = layout.n_sbs();
    let mut rows = vec![vec![0.0; n]; n];
    for (j, s) in layout.sbs_positions.iter().enumerate() {
        for (k, ue) in layout.served_ue_positions.iter().enumerate() {
            let d = distance(s, ue);
            if d == 0.0 {
                return Err(Error::ZeroDistance { from: j, to: k });
            }
            rows[j][k] = db_to_linear(layout.radio.mean_snr_db(d));
        }
    }
    LinkGainMatrix::from_linear(rows)
}

/// Squared Rayleigh fading magnitudes `|H_{j,n}|^2` for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingDraw {
    n: usize,
    h_sq: Vec<f64>,
}

impl FadingDraw {
    pub fn unit(n: usize) -> Self {
        Self {
            n,
            h_sq: vec![1.0; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut h_sq = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::param("h_sq", "matrix must be square"));
            }
            if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::param("h_sq", "entries must be finite and nonnegative"));
            }
            h_sq.extend(row);
        }
        Ok(Self { n, h_sq })
    }

    pub fn sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut draw = Self::unit(n);
        draw.resample(rng);
        draw
    }

    /// Overwrites every entry with a fresh unit-mean exponential, row-major.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for v in &mut self.h_sq {
            *v = Exp1.sample(rng);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.h_sq[from * self.n + to]
    }

    pub fn set(&mut self, from: usize, to: usize, value: f64) {
        self.h_sq[from * self.n + to] = value;
    }
}

/// SINR at the UE of SBS `n` with `active_set` transmitting.
pub fn sinr(
    gains: &LinkGainMatrix,
    n: usize,
    active_set: &[usize],
    fading: &FadingDraw,
) -> Result<f64> {
    let size = gains.n();
    if fading.n() != size {
        return Err(Error::param("fading", "dimension differs from gains"));
    }
    if n >= size {
        return Err(Error::param("n", "SBS index out of range"));
    }
    let mut mask = vec![false; size];
    for &j in active_set {
        if j == n {
            return Err(Error::param("active_set", "must not contain the served SBS"));
        }
        if j >= size {
            return Err(Error::param("active_set", "SBS index out of range"));
        }
        mask[j] = true;
    }
    Ok(sinr_with_mask(gains, n, &mask, fading))
}

/// Unchecked SINR where `active[j]` marks transmitting SBSs; `active[n]` is
/// ignored. This is the form used inside the simulator's slot loop.
#[inline]
pub fn sinr_with_mask(gains: &LinkGainMatrix, n: usize, active: &[bool], fading: &FadingDraw) -> f64 {
    let mut interference = 0.0;
    for (j, &on) in active.iter().enumerate() {
        if on && j != n {
            interference += gains.mean_snr(j, n) * fading.get(j, n);
        }
    }
    gains.desired(n) * fading.get(n, n) / (interference + 1.0)
}
