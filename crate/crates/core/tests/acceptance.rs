//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Criterion numbers given as arguments restrict the
//! run, e.g. `cargo test --test acceptance -- 3 7`.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde_json::json;

use udn_ec::analytics::{cdf_sinr_type2, pdf_sinr_type1, pdf_sinr_type2, Channel, TrafficModel};
use udn_ec::experiments::{self, random_gains, ExperimentConfig, ExperimentId, Table};
use udn_ec::game::{Game, GameConfig};
use udn_ec::model::{sinr, FadingDraw, LinkGainMatrix};
use udn_ec::quad::{integrate, QuadOptions};
use udn_ec::solver::solve_qos_exponents;
use udn_ec::analytics;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: udn_ec::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

// one-sample Kolmogorov-Smirnov statistic; sorts `xs`
fn ks_statistic(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

// integral over [0, inf) through x = t/(1-t)
fn integral_half_line(f: impl Fn(f64) -> f64) -> Result<f64, String> {
    let opts = QuadOptions {
        rel_tol: 1e-10,
        ..QuadOptions::default()
    };
    let g = |t: f64| {
        if t >= 1.0 {
            0.0
        } else {
            let x = t / (1.0 - t);
            f(x) / ((1.0 - t) * (1.0 - t))
        }
    };
    Ok(lib(integrate(g, 0.0, 1.0, &opts))?.value)
}

fn density_oracle() -> Check {
    const DRAWS: usize = 1_000_000;
    let critical = 1.628 / (DRAWS as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1);
    let mut worst_ks: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    for _ in 0..5 {
        let b11 = 10f64.powf(rng.random_range(0.0..3.0));
        let b21 = 10f64.powf(rng.random_range(-1.0..1.5));
        let mut xs: Vec<f64> = (0..DRAWS)
            .map(|_| {
                let h1: f64 = Exp1.sample(&mut rng);
                let h2: f64 = Exp1.sample(&mut rng);
                b11 * h1 / (b21 * h2 + 1.0)
            })
            .collect();
        let d = ks_statistic(&mut xs, |x| cdf_sinr_type2(b11, b21, x));
        ensure(d < critical, || {
            format!("KS {d:.3e} >= {critical:.3e} at b11={b11:.4}, b21={b21:.4}")
        })?;
        worst_ks = worst_ks.max(d);
        for mass in [
            integral_half_line(|x| pdf_sinr_type1(b11, x))?,
            integral_half_line(|x| pdf_sinr_type2(b11, b21, x))?,
        ] {
            ensure((mass - 1.0).abs() <= 1e-6, || {
                format!("density mass {mass} at b11={b11:.4}, b21={b21:.4}")
            })?;
            worst_mass = worst_mass.max((mass - 1.0).abs());
        }
    }
    Ok(format!(
        "max KS {worst_ks:.3e} < {critical:.3e}; max |mass - 1| {worst_mass:.1e}"
    ))
}

// E[exp(-theta T_s R_n)] by enumerating the peers' active sets, weighting
// each by its probability, with common fading draws across sets
fn enumeration_mgf(gains: &LinkGainMatrix, n: usize, idle: &[f64], k: f64, draws: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let peers: Vec<usize> = (0..gains.n()).filter(|&j| j != n).collect();
    let sets = 1usize << peers.len();
    let weights: Vec<f64> = (0..sets)
        .map(|mask| {
            peers
                .iter()
                .enumerate()
                .map(|(b, &j)| if mask >> b & 1 == 1 { 1.0 - idle[j] } else { idle[j] })
                .product()
        })
        .collect();
    let power = k / std::f64::consts::LN_2;
    let mut h = vec![0.0; peers.len()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let e: f64 = Exp1.sample(rng);
        let signal = gains.desired(n) * e;
        for (b, &j) in peers.iter().enumerate() {
            let e: f64 = Exp1.sample(rng);
            h[b] = gains.mean_snr(j, n) * e;
        }
        let mut y = 0.0;
        for (mask, w) in weights.iter().enumerate() {
            let interference: f64 = (0..peers.len()).filter(|b| mask >> b & 1 == 1).map(|b| h[b]).sum();
            let gamma = signal / (interference + 1.0);
            y += w * (-power * gamma.ln_1p()).exp();
        }
        sum += y;
        sum_sq += y * y;
    }
    let m = sum / draws as f64;
    let var = (sum_sq / draws as f64 - m * m).max(0.0);
    (m, (var / draws as f64).sqrt())
}

fn enumeration_oracle() -> Check {
    const DRAWS: usize = 1_000_000;
    let channel = lib(Channel::new(1e6, 1e-3))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xE2);
    let mut worst: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    let mut total_draws = 0;
    let mut instances = 0;
    for size in 2..=4 {
        for _ in 0..10 {
            let rows: Vec<Vec<f64>> = (0..size)
                .map(|j| {
                    (0..size)
                        .map(|n| {
                            let db = if j == n { rng.random_range(5.0..30.0) } else { rng.random_range(-10.0..15.0) };
                            10f64.powf(db / 10.0)
                        })
                        .collect()
                })
                .collect();
            let gains = lib(LinkGainMatrix::from_linear(rows))?;
            let idle: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
            let n = rng.random_range(0..size);
            let k = rng.random_range(0.05..2.0);
            let theta = k / channel.bits_per_slot();
            let (m, se) = enumeration_mgf(&gains, n, &idle, k, DRAWS, &mut rng);
            let oracle = -m.ln() / (theta * 1e-3);
            let ec = lib(channel.ec_n_sbs(n, theta, &gains, &idle))?;
            let err = rel(ec, oracle);
            ensure(err <= 5e-3, || {
                format!("N={size}: EC {ec:.6e} vs enumeration {oracle:.6e} (rel {err:.2e}, mgf se {:.1e})", se / m)
            })?;
            worst = worst.max(err);
            worst_z = worst_z.max(err / (se / m / m.ln().abs()));
            total_draws += DRAWS * (1 << (size - 1));
            instances += 1;
        }
    }
    Ok(format!(
        "{instances} instances, {total_draws} set-draws, max rel err {worst:.2e} <= 5e-3 (max {worst_z:.2} standard errors)"
    ))
}

fn fig2_gains() -> Result<LinkGainMatrix, String> {
    lib(LinkGainMatrix::from_db(&[vec![10.0, 1.0], vec![2.0, 20.0]]))
}

fn two_route_consistency() -> Check {
    let gains = fig2_gains()?;
    let channel = lib(Channel::new(1e6, 1e-3))?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for i in 0..=12 {
        let theta = 10f64.powf(-5.0 + 3.0 * i as f64 / 12.0);
        for own in 0..2 {
            for peer_idle in [0.0, 0.08, 0.5, 0.92, 1.0] {
                let mut idle = [0.3, 0.3];
                idle[1 - own] = peer_idle;
                let pdf_route = lib(channel.ec_two_sbs(theta, &gains, own, peer_idle))?;
                let integral_route = lib(channel.ec_n_sbs(own, theta, &gains, &idle))?;
                let err = rel(pdf_route, integral_route);
                ensure(err <= 1e-6, || {
                    format!("theta={theta:.2e}, own={own}, P={peer_idle}: {pdf_route:.9e} vs {integral_route:.9e}")
                })?;
                worst = worst.max(err);
                count += 1;
            }
        }
    }
    Ok(format!("{count} comparisons over theta in [1e-5, 1e-2], max rel diff {worst:.1e}"))
}

// both sides of the fixed point recomputed from first principles
fn verify_fixed_point(gains: &LinkGainMatrix, traffic: &[TrafficModel], channel: &Channel, label: &str) -> Result<usize, String> {
    let r = lib(solve_qos_exponents(gains, traffic, channel, &Default::default()))?;
    ensure(r.converged, || format!("{label}: not converged after {} sweeps", r.iterations))?;
    let idle: Vec<f64> = r
        .theta_star
        .iter()
        .zip(traffic)
        .map(|(t, tr)| t * tr.mean_size * (1.0 - tr.p))
        .collect();
    for (n, tr) in traffic.iter().enumerate() {
        let theta = r.theta_star[n];
        let d = theta * tr.mean_size;
        ensure(d > 0.0 && d < 1.0, || format!("{label}: theta*L = {d} outside (0, 1)"))?;
        let tol = 1e-3 * tr.p * tr.mean_size / tr.slot;
        ensure(rel(r.tolerances[n], tol) < 1e-12, || format!("{label}: tolerance {} vs {tol}", r.tolerances[n]))?;
        if tr.p == 0.0 {
            continue;
        }
        let a = (tr.p / (1.0 - d) + 1.0 - tr.p).ln() / (theta * tr.slot);
        let c = lib(channel.ec_n_sbs(n, theta, gains, &idle))?;
        let residual = (c - a).abs();
        ensure(residual <= tol, || format!("{label}: SBS {n} |C - A| = {residual:.3e} > {tol:.3e}"))?;
        ensure((residual - r.residuals[n]).abs() <= 1e-6 * tol, || {
            format!("{label}: SBS {n} recomputed residual {residual:.6e} vs reported {:.6e}", r.residuals[n])
        })?;
    }
    Ok(r.iterations)
}

fn fixed_point() -> Check {
    let channel = lib(Channel::new(1e6, 1e-3))?;
    let traffic = vec![lib(TrafficModel::new(0.2, 100.0, 1e-3))?; 2];
    let mut sweeps = vec![verify_fixed_point(&fig2_gains()?, &traffic, &channel, "two-SBS instance")?];

    let mut rng = ChaCha8Rng::seed_from_u64(0xF4);
    let mut infeasible = 0;
    let mut attempt = 0;
    while sweeps.len() < 21 {
        attempt += 1;
        ensure(attempt < 200, || "too few feasible random instances".into())?;
        let size = rng.random_range(2..=8);
        let config = ExperimentConfig {
            seed: rng.random(),
            ..ExperimentConfig::preset(ExperimentId::Custom)
        };
        let gains = lib(random_gains(&config, size, 0))?;
        let traffic: Vec<TrafficModel> = (0..size)
            .map(|_| TrafficModel::new(rng.random_range(0.05..0.6), rng.random_range(50.0..1500.0), 1e-3))
            .collect::<udn_ec::Result<_>>()
            .map_err(|e| e.to_string())?;
        match verify_fixed_point(&gains, &traffic, &channel, &format!("random N={size}")) {
            Ok(s) => sweeps.push(s),
            Err(e) if e.starts_with("infeasible") => infeasible += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(format!(
        "21 instances converged and re-verified (sweeps {}..{}); {infeasible} infeasible draws skipped",
        sweeps.iter().min().unwrap(),
        sweeps.iter().max().unwrap()
    ))
}

fn cell<'a>(table: &'a Table, row: &'a [String], name: &str) -> &'a str {
    &row[table.column(name).unwrap_or_else(|| panic!("column {name}"))]
}

fn num(s: &str) -> Result<f64, String> {
    s.parse().map_err(|_| format!("not a number: {s:?}"))
}

fn analytics_vs_simulation() -> Check {
    let config = lib(ExperimentConfig::from_value(ExperimentId::Fig2, json!({})))?;
    ensure(config.sim.runs == 200 && config.sim.slots == 20_000, || "unexpected desk scale".into())?;
    let table = lib(experiments::run(&config))?;
    let mut points: BTreeMap<(String, String), BTreeMap<String, (f64, Option<f64>)>> = BTreeMap::new();
    for row in &table.rows {
        ensure(cell(&table, row, "status") == "ok", || format!("row not ok: {row:?}"))?;
        let hw = cell(&table, row, "ci_half_width");
        let hw = if hw.is_empty() { None } else { Some(num(hw)?) };
        points
            .entry((cell(&table, row, "point").into(), cell(&table, row, "ue").into()))
            .or_default()
            .insert(cell(&table, row, "series").into(), (num(cell(&table, row, "value"))?, hw));
    }
    let mut inside = 0;
    for ((point, ue), s) in &points {
        let get = |k: &str| s.get(k).copied().ok_or_else(|| format!("missing {k} at point {point}"));
        let (analytic, _) = get("analytic_unsaturated")?;
        let (simulated, hw) = get("simulated_unsaturated")?;
        let hw = hw.ok_or("simulated value without half-width")?;
        if (analytic - simulated).abs() <= hw {
            inside += 1;
        }
        let (full_a, _) = get("analytic_full_interference")?;
        let (full_s, _) = get("simulated_full_interference")?;
        ensure(full_a > analytic && full_s > simulated, || {
            format!("point {point} UE {ue}: full interference ({full_a:.4e}, {full_s:.4e}) not above ({analytic:.4e}, {simulated:.4e})")
        })?;
    }
    let total = points.len();
    ensure(inside * 5 >= total * 4, || format!("only {inside}/{total} analytic points inside the 95% CI"))?;
    Ok(format!(
        "{inside}/{total} points inside the 95% CI; full interference above at all {total}"
    ))
}

fn saturation_limit() -> Check {
    let config = lib(ExperimentConfig::from_value(ExperimentId::Fig4, json!({"d_values": [1e-3, 0.5]})))?;
    ensure(config.n_sbs == 8, || "setup must have 8 SBSs".into())?;
    let table = lib(experiments::run(&config))?;
    let mut total = Vec::new();
    for row in &table.rows {
        ensure(cell(&table, row, "status") == "ok", || format!("row not ok: {row:?}"))?;
        total.push((
            num(cell(&table, row, "d"))?,
            cell(&table, row, "model").to_string(),
            num(cell(&table, row, "total_rate_bps"))?,
        ));
    }
    let get = |d: f64, m: &str| {
        total
            .iter()
            .find(|(x, model, _)| *x == d && model == m)
            .map(|r| r.2)
            .ok_or(format!("missing {d}/{m}"))
    };
    let (u0, f0) = (get(1e-3, "unsaturated")?, get(1e-3, "full_interference")?);
    let (u5, f5) = (get(0.5, "unsaturated")?, get(0.5, "full_interference")?);
    let gap = rel(u0, f0);
    ensure(gap <= 0.02, || format!("d=1e-3: {u0:.6e} vs {f0:.6e} ({:.2}%)", 100.0 * gap))?;
    ensure(u5 > f5, || format!("d=0.5: unsaturated {u5:.6e} not above full {f5:.6e}"))?;
    Ok(format!(
        "d=1e-3 gap {:.3}%; d=0.5 unsaturated {u5:.4e} > full {f5:.4e} bit/s",
        100.0 * gap
    ))
}

fn monotonicity() -> Check {
    const SLACK: f64 = 1e-9;
    let channel = lib(Channel::new(1e6, 1e-3))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xA7);
    let mut checks = [0usize; 4];
    let mut violations = Vec::new();
    for inst in 0..100 {
        let size = rng.random_range(2..=6);
        let rows: Vec<Vec<f64>> = (0..size)
            .map(|j| {
                (0..size)
                    .map(|n| 10f64.powf(if j == n { rng.random_range(0.0..40.0) } else { rng.random_range(-10.0..20.0) } / 10.0))
                    .collect()
            })
            .collect();
        let gains = lib(LinkGainMatrix::from_linear(rows))?;
        let idle: Vec<f64> = (0..size).map(|_| rng.random()).collect();
        let n = rng.random_range(0..size);

        // capacity against the exponent
        let mut ks: Vec<f64> = (0..4).map(|_| 10f64.powf(rng.random_range(-2.0..0.7))).collect();
        ks.sort_by(f64::total_cmp);
        let caps = ks
            .iter()
            .map(|k| lib(channel.ec_n_sbs(n, k / channel.bits_per_slot(), &gains, &idle)))
            .collect::<Result<Vec<_>, _>>()?;
        for w in caps.windows(2) {
            checks[0] += 1;
            if !(w[1] < w[0] * (1.0 + SLACK)) {
                violations.push(format!("instance {inst}: C not decreasing in theta ({} -> {})", w[0], w[1]));
            }
        }

        // a peer's capacity against this SBS's idle probability
        let m = (n + 1 + rng.random_range(0..size - 1)) % size;
        let theta = 10f64.powf(rng.random_range(-2.0..0.5)) / channel.bits_per_slot();
        let mut lo = idle.clone();
        let mut hi = idle.clone();
        let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
        lo[n] = a.min(b);
        hi[n] = a.max(b);
        let (c_lo, c_hi) = (lib(channel.ec_n_sbs(m, theta, &gains, &lo))?, lib(channel.ec_n_sbs(m, theta, &gains, &hi))?);
        checks[1] += 1;
        if c_hi < c_lo * (1.0 - SLACK) {
            violations.push(format!("instance {inst}: C_{m} fell from {c_lo} to {c_hi} as P_{n} rose"));
        }

        // effective bandwidth against the exponent
        let tr = lib(TrafficModel::new(rng.random_range(0.01..1.0), rng.random_range(10.0..2000.0), 1e-3))?;
        let mut ds: Vec<f64> = (0..4).map(|_| rng.random_range(1e-6..0.999)).collect();
        ds.sort_by(f64::total_cmp);
        let ebs = ds
            .iter()
            .map(|d| lib(analytics::effective_bandwidth(&tr, d / tr.mean_size)))
            .collect::<Result<Vec<_>, _>>()?;
        for w in ebs.windows(2) {
            checks[2] += 1;
            if !(w[1] > w[0]) {
                violations.push(format!("instance {inst}: EB not increasing ({} -> {})", w[0], w[1]));
            }
        }

        // SINR against active-set growth
        let fading = FadingDraw::sample(size, &mut rng);
        let mut active: Vec<usize> = Vec::new();
        let mut last = lib(sinr(&gains, n, &active, &fading))?;
        let mut order: Vec<usize> = (0..size).filter(|&j| j != n).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        for j in order {
            active.push(j);
            let next = lib(sinr(&gains, n, &active, &fading))?;
            checks[3] += 1;
            if next > last * (1.0 + SLACK) {
                violations.push(format!("instance {inst}: SINR rose from {last} to {next} adding SBS {j}"));
            }
            last = next;
        }
    }
    ensure(violations.is_empty(), || format!("{} violations, first: {}", violations.len(), violations[0]))?;
    Ok(format!(
        "100 instances, 0 violations ({} EC-theta, {} EC-idle, {} EB-theta, {} SINR-set checks)",
        checks[0], checks[1], checks[2], checks[3]
    ))
}

fn game_convergence() -> Check {
    let config = lib(ExperimentConfig::from_value(ExperimentId::Fig6, json!({})))?;
    ensure(config.n_sbs == 8 && config.radio.bandwidth_hz == 1e5 && config.theta == 1e-3, || {
        "unexpected game setup".into()
    })?;
    let (gains, traffic, channel) = lib(config.instance())?;
    let theta = vec![config.theta; gains.n()];
    let game = lib(Game::new(&gains, &traffic, &theta, &channel))?;
    let rules = GameConfig {
        tol: 1e-6,
        ..GameConfig::default()
    };
    let state = lib(game.find_ne(&vec![config.game_init; gains.n()], &rules))?;
    ensure(state.converged && state.iterations <= 200, || {
        format!("converged={} after {} iterations", state.converged, state.iterations)
    })?;
    let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let deviations = lib(game.profitable_deviations(&state.p, &grid, 1e-9))?;
    ensure(deviations.is_empty(), || format!("profitable deviations {deviations:?}"))?;
    for (n, &p) in state.p.iter().enumerate() {
        let b = lib(game.best_response(n, &state.p))?;
        ensure((b - p).abs() <= 1e-6, || format!("player {n}: p={p} but best response {b}"))?;
    }
    let ne = state.total_utility();
    let mut best_baseline = 0.0_f64;
    for &q in &grid[1..] {
        if lib(game.uniform_feasible(q))? {
            let total: f64 = lib(game.utilities(&vec![q; gains.n()]))?.iter().sum();
            ensure(ne >= total * (1.0 - 1e-12), || format!("uniform {q} gives {total:.6e} > NE {ne:.6e}"))?;
            best_baseline = best_baseline.max(total);
        }
    }
    Ok(format!(
        "converged in {} iterations; no profitable deviation; NE utility {ne:.4e} >= best feasible uniform {best_baseline:.4e}",
        state.iterations
    ))
}

fn reproducibility() -> Check {
    let sim = json!({"runs": 4, "slots": 1500});
    let cases = [
        (ExperimentId::Fig2, json!({"sweep": {"knob": "mean_size", "values": [100.0, 600.0]}, "sim": sim})),
        (ExperimentId::Fig3, json!({"densities": [1, 3], "layouts": 2, "sim": sim})),
        (ExperimentId::Fig4, json!({"n_sbs": 4, "d_values": [0.01, 0.5]})),
        (ExperimentId::Fig5, json!({"densities": [2, 4], "layouts": 2, "d_values": [0.1, 0.5]})),
        (ExperimentId::Fig6, json!({"n_sbs": 4, "densities": [2, 3], "layouts": 1, "sim": sim})),
        (
            ExperimentId::Custom,
            json!({"custom": {"operation": "simulate", "axes": {"n_sbs": [2, 3], "p": [0.1, 0.3]}}, "sim": sim}),
        ),
    ];
    let mut bytes = 0;
    for (id, overrides) in cases {
        let mut outputs = Vec::new();
        for jobs in [1, 1, 3] {
            let mut v = overrides.clone();
            v["jobs"] = json!(jobs);
            let config = lib(ExperimentConfig::from_value(id, v))?;
            let table = lib(experiments::run(&config))?;
            outputs.push(lib(table.to_csv_string(&config))?);
        }
        ensure(outputs.iter().all(|o| o == &outputs[0]), || {
            format!("{}: CSV differs between reruns or job counts", id.name())
        })?;
        ensure(!outputs[0].contains(",failed,"), || format!("{}: failed rows", id.name()))?;
        bytes += outputs[0].len();
    }
    Ok(format!("6 experiments byte-identical over 2 sequential runs and jobs=3 ({bytes} bytes)"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("SINR density oracle", density_oracle),
        ("active-set enumeration", enumeration_oracle),
        ("two-route capacity", two_route_consistency),
        ("fixed point", fixed_point),
        ("analytics vs simulation", analytics_vs_simulation),
        ("saturation limit", saturation_limit),
        ("monotonicity", monotonicity),
        ("game equilibrium", game_convergence),
        ("reproducibility", reproducibility),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
