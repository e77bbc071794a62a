use rayon::prelude::*;

use super::{fmt_f64, fmt_opt, ExperimentConfig, Status, SweepKnob, Table};
use crate::analytics::{queue_violation_prob, TrafficModel};
use crate::error::{Error, Result};
use crate::game::{utility, Game};
use crate::model::LinkGainMatrix;
use crate::sim::{run_many, Estimate, RunStats, SimConfig};
use crate::solver::{max_arrival_rates, solve_qos_exponents_as, InterferenceModel};

const MODELS: [InterferenceModel; 2] = [InterferenceModel::Unsaturated, InterferenceModel::FullInterference];

/// A value with an optional half-width, or a marked failure.
type Outcome = std::result::Result<(f64, Option<f64>), (Status, String)>;

fn failure(e: Error) -> (Status, String) {
    (Status::of(&e), e.to_string())
}

fn skipped() -> Outcome {
    Err((Status::Skipped, "simulation disabled".into()))
}

fn outcome_cells(o: &Outcome) -> [String; 4] {
    match o {
        Ok((v, h)) => [fmt_f64(*v), fmt_opt(*h), Status::Ok.as_str().into(), String::new()],
        Err((s, note)) => [String::new(), String::new(), s.as_str().into(), note.clone()],
    }
}

fn sim_config(config: &ExperimentConfig) -> SimConfig {
    SimConfig {
        q_threshold: config.q_threshold,
        ..config.sim.clone()
    }
}

/// Per-SBS analytical violation probabilities.
fn analytic_violation(
    config: &ExperimentConfig,
    model: InterferenceModel,
    gains: &LinkGainMatrix,
    traffic: &[TrafficModel],
) -> std::result::Result<Vec<f64>, (Status, String)> {
    let channel = config.channel().map_err(failure)?;
    let r = solve_qos_exponents_as(model, gains, traffic, &channel, &config.solver).map_err(failure)?;
    if !r.converged {
        return Err((
            Status::Failed,
            format!("solver stopped after {} sweeps without converging", r.iterations),
        ));
    }
    r.theta_star
        .iter()
        .zip(traffic)
        .map(|(&t, tr)| queue_violation_prob(t, tr, config.q_threshold).map_err(failure))
        .collect()
}

fn simulate_runs(
    config: &ExperimentConfig,
    model: InterferenceModel,
    gains: &LinkGainMatrix,
    traffic: &[TrafficModel],
) -> std::result::Result<Vec<RunStats>, (Status, String)> {
    let channel = config.channel().map_err(failure)?;
    run_many(model, gains, traffic, &channel, &sim_config(config)).map_err(failure)
}

fn estimate(values: &[f64]) -> (f64, Option<f64>) {
    let e = Estimate::from_samples(values).expect("at least one run");
    (e.mean, e.half_width)
}

fn point_traffic(config: &ExperimentConfig, value: f64) -> Result<TrafficModel> {
    let t = config.traffic;
    match config.sweep.knob {
        SweepKnob::MeanSize => TrafficModel::new(t.p, value, t.slot),
        SweepKnob::Probability => TrafficModel::new(value, t.mean_size, t.slot),
    }
}

/// Violation probability of both UEs of the two-SBS instance along the
/// traffic sweep: analytical and simulated, for both interference models.
pub fn run_fig2(config: &ExperimentConfig) -> Result<Table> {
    let gains = config.gains(2, 0)?;
    if gains.n() != 2 {
        return Err(Error::Config("fig2 needs exactly two SBSs".into()));
    }
    let knob = match config.sweep.knob {
        SweepKnob::MeanSize => "mean_size",
        SweepKnob::Probability => "p",
    };
    let pool = config.pool()?;
    let cells: Vec<Vec<Vec<String>>> = pool.install(|| {
        config
            .sweep
            .values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| {
                let traffic = match point_traffic(config, v) {
                    Ok(t) => t,
                    Err(e) => {
                        let note = e.to_string();
                        return (0..2)
                            .flat_map(|ue| {
                                SERIES.iter().map({
                                    let note = note.clone();
                                    move |s| {
                                        let mut r = vec![i.to_string(), knob.into(), fmt_f64(v), String::new(), (ue + 1).to_string(), s.to_string()];
                                        r.extend(outcome_cells(&Err((Status::Failed, note.clone()))));
                                        r
                                    }
                                })
                            })
                            .collect();
                    }
                };
                let tr = vec![traffic; 2];
                let mut per_series: Vec<[Outcome; 2]> = Vec::new();
                for model in MODELS {
                    let analytic: [Outcome; 2] = match analytic_violation(config, model, &gains, &tr) {
                        Ok(v) => [Ok((v[0], None)), Ok((v[1], None))],
                        Err(e) => [Err(e.clone()), Err(e)],
                    };
                    let simulated: [Outcome; 2] = if config.simulate {
                        match simulate_runs(config, model, &gains, &tr) {
                            Ok(runs) => [0, 1].map(|k| {
                                let v: Vec<f64> = runs.iter().map(|r| r.sbs[k].violation_prob).collect();
                                Ok(estimate(&v))
                            }),
                            Err(e) => [Err(e.clone()), Err(e)],
                        }
                    } else {
                        [skipped(), skipped()]
                    };
                    per_series.push(analytic);
                    per_series.push(simulated);
                }
                let mut rows = Vec::new();
                for ue in 0..2 {
                    for (s, outcomes) in SERIES.iter().zip(&per_series) {
                        let mut r = vec![
                            i.to_string(),
                            knob.into(),
                            fmt_f64(v),
                            fmt_f64(traffic.mean_rate()),
                            (ue + 1).to_string(),
                            s.to_string(),
                        ];
                        r.extend(outcome_cells(&outcomes[ue]));
                        rows.push(r);
                    }
                }
                rows
            })
            .collect()
    });
    let mut table = Table::new(&[
        "point",
        "knob",
        "knob_value",
        "mean_rate_bps",
        "ue",
        "series",
        "value",
        "ci_half_width",
        "status",
        "note",
    ]);
    for row in cells.into_iter().flatten() {
        table.push(row);
    }
    Ok(table)
}

const SERIES: [&str; 4] = [
    "analytic_unsaturated",
    "simulated_unsaturated",
    "analytic_full_interference",
    "simulated_full_interference",
];

/// Mean over layouts; half-widths of independent layout estimates combine
/// in quadrature.
fn combine(outcomes: &[Outcome]) -> (Outcome, usize) {
    let ok: Vec<(f64, Option<f64>)> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
    if ok.is_empty() {
        let first = outcomes
            .iter()
            .find_map(|o| o.as_ref().err())
            .cloned()
            .unwrap_or((Status::Failed, "no layouts".into()));
        let status = if outcomes.iter().any(|o| matches!(o, Err((Status::Infeasible, _)))) {
            Status::Infeasible
        } else {
            first.0
        };
        return (Err((status, first.1)), 0);
    }
    let k = ok.len() as f64;
    let mean = ok.iter().map(|x| x.0).sum::<f64>() / k;
    let hw = if ok.iter().all(|x| x.1.is_some()) {
        Some(ok.iter().map(|x| x.1.unwrap().powi(2)).sum::<f64>().sqrt() / k)
    } else {
        None
    };
    (Ok((mean, hw)), ok.len())
}

fn layout_note(used: usize, total: usize, outcomes: &[Outcome]) -> String {
    if used == total {
        return String::new();
    }
    let infeasible = outcomes.iter().filter(|o| matches!(o, Err((Status::Infeasible, _)))).count();
    format!("{} of {total} layouts excluded ({infeasible} infeasible)", total - used)
}

fn reduced_cells(outcomes: &[Outcome]) -> Vec<String> {
    let (o, used) = combine(outcomes);
    let mut cells = outcome_cells(&o).to_vec();
    cells.insert(2, used.to_string());
    if o.is_ok() {
        cells[4] = layout_note(used, outcomes.len(), outcomes);
    }
    cells
}

fn density_grid(config: &ExperimentConfig) -> Vec<(usize, usize)> {
    config
        .densities
        .iter()
        .flat_map(|&n| (0..config.layouts).map(move |l| (n, l)))
        .collect()
}

/// Average violation probability versus SBS count.
pub fn run_fig3(config: &ExperimentConfig) -> Result<Table> {
    let grid = density_grid(config);
    let pool = config.pool()?;
    let cells: Vec<[Outcome; 4]> = pool.install(|| {
        grid.par_iter()
            .map(|&(n, layout)| {
                let gains = match config.gains(n, layout) {
                    Ok(g) => g,
                    Err(e) => {
                        let f = failure(e);
                        return [Err(f.clone()), Err(f.clone()), Err(f.clone()), Err(f)];
                    }
                };
                let tr = vec![config.traffic; gains.n()];
                // a layout without analytics is excluded from every series
                let analytic: Vec<Outcome> = MODELS
                    .iter()
                    .map(|&m| analytic_violation(config, m, &gains, &tr).map(|v| (mean(&v), None)))
                    .collect();
                if let Some(Err(f)) = analytic.iter().find(|o| o.is_err()) {
                    return [Err(f.clone()), Err(f.clone()), Err(f.clone()), Err(f.clone())];
                }
                let mut out: Vec<Outcome> = Vec::new();
                for (model, a) in MODELS.into_iter().zip(analytic) {
                    out.push(a);
                    out.push(if config.simulate {
                        simulate_runs(config, model, &gains, &tr).map(|runs| {
                            let per_run: Vec<f64> = runs
                                .iter()
                                .map(|r| mean(&r.sbs.iter().map(|s| s.violation_prob).collect::<Vec<_>>()))
                                .collect();
                            estimate(&per_run)
                        })
                    } else {
                        skipped()
                    });
                }
                out.try_into().expect("four series")
            })
            .collect()
    });
    let mut table = Table::new(&["n_sbs", "series", "value", "ci_half_width", "layouts_used", "status", "note"]);
    for (d, &n) in config.densities.iter().enumerate() {
        let block = &cells[d * config.layouts..(d + 1) * config.layouts];
        for (s, name) in SERIES.iter().enumerate() {
            let outcomes: Vec<Outcome> = block.iter().map(|c| c[s].clone()).collect();
            let mut row = vec![n.to_string(), name.to_string()];
            row.extend(reduced_cells(&outcomes));
            table.push(row);
        }
    }
    Ok(table)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rates(
    config: &ExperimentConfig,
    model: InterferenceModel,
    gains: &LinkGainMatrix,
    d: f64,
) -> std::result::Result<Vec<f64>, (Status, String)> {
    let channel = config.channel().map_err(failure)?;
    let tr = vec![config.traffic; gains.n()];
    max_arrival_rates(model, &vec![d; gains.n()], &tr, gains, &channel, &config.solver).map_err(failure)
}

/// Maximum total arrival rate versus the common requirement `d`.
pub fn run_fig4(config: &ExperimentConfig) -> Result<Table> {
    let grid: Vec<(usize, f64)> = config
        .d_values
        .iter()
        .flat_map(|&d| (0..config.layouts).map(move |l| (l, d)))
        .collect();
    let pool = config.pool()?;
    let cells: Vec<[Outcome; 2]> = pool.install(|| {
        grid.par_iter()
            .map(|&(layout, d)| match config.gains(config.n_sbs, layout) {
                Ok(g) => MODELS.map(|m| rates(config, m, &g, d).map(|r| (r.iter().sum(), None))),
                Err(e) => {
                    let f = failure(e);
                    [Err(f.clone()), Err(f)]
                }
            })
            .collect()
    });
    let mut table = Table::new(&["d", "model", "total_rate_bps", "ci_half_width", "layouts_used", "status", "note"]);
    for (k, &d) in config.d_values.iter().enumerate() {
        let block = &cells[k * config.layouts..(k + 1) * config.layouts];
        for (m, model) in MODELS.iter().enumerate() {
            let outcomes: Vec<Outcome> = block.iter().map(|c| c[m].clone()).collect();
            let mut row = vec![fmt_f64(d), model.label().into()];
            row.extend(reduced_cells(&outcomes));
            table.push(row);
        }
    }
    Ok(table)
}

/// Per-SBS maximum arrival rate versus SBS count at several requirements.
pub fn run_fig5(config: &ExperimentConfig) -> Result<Table> {
    let grid: Vec<(usize, f64, usize)> = config
        .densities
        .iter()
        .flat_map(|&n| config.d_values.iter().flat_map(move |&d| (0..config.layouts).map(move |l| (n, d, l))))
        .collect();
    let pool = config.pool()?;
    let cells: Vec<[Outcome; 2]> = pool.install(|| {
        grid.par_iter()
            .map(|&(n, d, layout)| match config.gains(n, layout) {
                Ok(g) => MODELS.map(|m| rates(config, m, &g, d).map(|r| (mean(&r), None))),
                Err(e) => {
                    let f = failure(e);
                    [Err(f.clone()), Err(f)]
                }
            })
            .collect()
    });
    let mut table = Table::new(&[
        "n_sbs",
        "d",
        "model",
        "rate_per_sbs_bps",
        "ci_half_width",
        "layouts_used",
        "status",
        "note",
    ]);
    let mut chunks = cells.chunks(config.layouts);
    for &n in &config.densities {
        for &d in &config.d_values {
            let block = chunks.next().expect("one chunk per (n, d)");
            for (m, model) in MODELS.iter().enumerate() {
                let outcomes: Vec<Outcome> = block.iter().map(|c| c[m].clone()).collect();
                let mut row = vec![n.to_string(), fmt_f64(d), model.label().into()];
                row.extend(reduced_cells(&outcomes));
                table.push(row);
            }
        }
    }
    Ok(table)
}

/// Fine grid plus the baseline grid, used for the equilibrium certificate.
pub(crate) fn deviation_grid(config: &ExperimentConfig) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    g.extend(config.baseline_grid.iter().copied());
    g
}

struct Equilibrium {
    total_utility: f64,
    total_traffic: f64,
}

fn solve_game(config: &ExperimentConfig, gains: &LinkGainMatrix) -> std::result::Result<Equilibrium, (Status, String)> {
    let channel = config.channel().map_err(failure)?;
    let n = gains.n();
    let tr = vec![config.traffic; n];
    let theta = vec![config.theta; n];
    let game = Game::new(gains, &tr, &theta, &channel).map_err(failure)?;
    let state = game.find_ne(&vec![config.game_init; n], &config.game).map_err(failure)?;
    if !state.converged {
        return Err((
            Status::Failed,
            format!("no equilibrium within {} iterations", state.iterations),
        ));
    }
    Ok(Equilibrium {
        total_utility: state.total_utility(),
        total_traffic: state.p.iter().zip(&tr).map(|(p, t)| p * t.mean_size / t.slot).sum(),
    })
}

/// Best-response trace, equilibrium certificate and uniform baselines on the
/// primary instance, then equilibrium totals versus SBS count.
pub fn run_fig6(config: &ExperimentConfig) -> Result<Table> {
    let mut table = Table::new(&[
        "section",
        "n_sbs",
        "iteration",
        "p",
        "profile",
        "max_change",
        "total_utility",
        "total_traffic_bps",
        "ci_half_width",
        "status",
        "note",
    ]);
    let blank = || vec![String::new(); 11];
    let channel = config.channel()?;
    let primary = config.gains(config.n_sbs, 0);
    let primary_n = primary.as_ref().map(|g| g.n()).unwrap_or(config.n_sbs);
    let mut row = |section: &str, f: &dyn Fn(&mut Vec<String>)| {
        let mut r = blank();
        r[0] = section.into();
        r[1] = primary_n.to_string();
        f(&mut r);
        table.push(r);
    };
    match primary {
        Err(e) => row("trace", &|r| {
            r[9] = Status::of(&e).as_str().into();
            r[10] = e.to_string();
        }),
        Ok(gains) => {
            let n = gains.n();
            let tr = vec![config.traffic; n];
            let theta = vec![config.theta; n];
            let game = Game::new(&gains, &tr, &theta, &channel)?;
            let state = game.find_ne(&vec![config.game_init; n], &config.game)?;
            for t in &state.trace {
                let profile = t.p.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";");
                row("trace", &|r| {
                    r[2] = t.iteration.to_string();
                    r[4] = profile.clone();
                    r[5] = fmt_opt(t.max_change);
                    r[6] = fmt_f64(t.total_utility);
                    r[7] = fmt_f64(t.p.iter().map(|p| p * config.traffic.mean_size / config.traffic.slot).sum());
                    r[9] = "ok".into();
                });
            }
            let deviations = game.profitable_deviations(&state.p, &deviation_grid(config), 1e-9)?;
            row("certificate", &|r| {
                r[2] = state.iterations.to_string();
                r[6] = fmt_f64(state.total_utility());
                r[9] = if state.converged && deviations.is_empty() { "ok" } else { "failed" }.into();
                r[10] = if !state.converged {
                    format!("no equilibrium within {} iterations", state.iterations)
                } else {
                    format!("{} profitable deviations", deviations.len())
                };
            });
            for &q in &config.baseline_grid {
                let feasible = game.uniform_feasible(q)?;
                let u = tr
                    .iter()
                    .map(|t| utility(q, config.theta, t.mean_size, t.slot))
                    .sum::<Result<f64>>()?;
                row("uniform_baseline", &|r| {
                    r[3] = fmt_f64(q);
                    r[6] = fmt_f64(u);
                    r[7] = fmt_f64(q * n as f64 * config.traffic.mean_size / config.traffic.slot);
                    r[9] = if feasible { "ok" } else { "infeasible" }.into();
                    r[10] = if feasible { "" } else { "violates the QoS constraint" }.into();
                });
            }
        }
    }

    let grid = density_grid(config);
    let pool = config.pool()?;
    let cells: Vec<[Outcome; 2]> = pool.install(|| {
        grid.par_iter()
            .map(|&(n, layout)| {
                let eq = config.gains(n, layout).map_err(failure).and_then(|g| solve_game(config, &g));
                match eq {
                    Ok(e) => [Ok((e.total_utility, None)), Ok((e.total_traffic, None))],
                    Err(f) => [Err(f.clone()), Err(f)],
                }
            })
            .collect()
    });
    for (k, &n) in config.densities.iter().enumerate() {
        let block = &cells[k * config.layouts..(k + 1) * config.layouts];
        let utilities: Vec<Outcome> = block.iter().map(|c| c[0].clone()).collect();
        let traffic: Vec<Outcome> = block.iter().map(|c| c[1].clone()).collect();
        let (u, used) = combine(&utilities);
        let (t, _) = combine(&traffic);
        let mut r = blank();
        r[0] = "density".into();
        r[1] = n.to_string();
        match (&u, &t) {
            (Ok((u, _)), Ok((t, _))) => {
                r[6] = fmt_f64(*u);
                r[7] = fmt_f64(*t);
                r[9] = "ok".into();
                r[10] = layout_note(used, utilities.len(), &utilities);
            }
            (Err((s, note)), _) | (_, Err((s, note))) => {
                r[9] = s.as_str().into();
                r[10] = note.clone();
            }
        }
        table.push(r);
    }
    Ok(table)
}
