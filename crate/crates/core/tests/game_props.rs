use proptest::prelude::*;
use serde_json::json;

use udn_ec::analytics::{Channel, TrafficModel};
use udn_ec::experiments::{ExperimentConfig, ExperimentId};
use udn_ec::game::{utility, Game, GameConfig, UpdateSchedule};
use udn_ec::model::LinkGainMatrix;

fn layout_game(seed: u64) -> (LinkGainMatrix, Vec<TrafficModel>, Channel, f64) {
    let config = ExperimentConfig::from_value(ExperimentId::Fig6, json!({ "seed": seed })).unwrap();
    let (gains, traffic, channel) = config.instance().unwrap();
    (gains, traffic, channel, config.theta)
}

fn small_game() -> (LinkGainMatrix, Vec<TrafficModel>, Channel) {
    let gains = LinkGainMatrix::from_db(&[
        vec![15.0, 4.0, 0.0],
        vec![6.0, 12.0, 3.0],
        vec![-2.0, 5.0, 18.0],
    ])
    .unwrap();
    let traffic = vec![TrafficModel::new(0.5, 100.0, 1e-3).unwrap(); 3];
    (gains, traffic, Channel::new(1e5, 1e-3).unwrap())
}

#[test]
fn best_response_falls_as_a_peer_transmits_more() {
    let (gains, traffic, channel) = small_game();
    let theta = vec![1e-3; 3];
    let game = Game::new(&gains, &traffic, &theta, &channel).unwrap();
    for n in 0..3 {
        let j = (n + 1) % 3;
        let mut p = vec![0.4; 3];
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            p[j] = k as f64 / 10.0;
            let b = game.best_response_detail(n, &p).unwrap().unclamped;
            assert!(b <= last * (1.0 + 1e-12), "player {n}: {b} after {last}");
            last = b;
        }
    }
}

#[test]
fn trace_records_what_happened() {
    let (gains, traffic, channel, theta) = layout_game(3);
    let theta = vec![theta; gains.n()];
    let game = Game::new(&gains, &traffic, &theta, &channel).unwrap();
    let config = GameConfig::default();
    let state = game.find_ne(&vec![0.5; gains.n()], &config).unwrap();
    assert!(state.converged);
    assert_eq!(state.trace.len(), state.iterations + 1);
    assert!(state.trace[0].max_change.is_none());
    for w in state.trace.windows(2) {
        let change = w[1].p.iter().zip(&w[0].p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert_eq!(w[1].max_change, Some(change));
        let total: f64 = game.utilities(&w[1].p).unwrap().iter().sum();
        assert!((total - w[1].total_utility).abs() <= 1e-9 * total);
    }
    let changes: Vec<f64> = state.trace.iter().filter_map(|t| t.max_change).collect();
    assert!(*changes.last().unwrap() <= config.tol);
    assert!(changes[..changes.len() - 1].iter().all(|c| *c > config.tol));
    for (n, u) in state.utilities.iter().enumerate() {
        let by_hand = traffic[n].mean_size * state.p[n] / (theta[n] * traffic[n].slot);
        assert!((u - by_hand).abs() <= 1e-12 * by_hand.max(1.0));
    }
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let (gains, traffic, channel) = small_game();
    let theta = vec![1e-3; 3];
    let game = Game::new(&gains, &traffic, &theta, &channel).unwrap();
    let config = GameConfig {
        tol: 1e-300,
        max_iter: 1,
        ..GameConfig::default()
    };
    let state = game.find_ne(&[0.0; 3], &config).unwrap();
    assert!(!state.converged);
    assert_eq!(state.iterations, 1);
}

#[test]
fn sequential_updates_reach_the_same_equilibrium() {
    for seed in [1, 7] {
        let (gains, traffic, channel, theta) = layout_game(seed);
        let theta = vec![theta; gains.n()];
        let game = Game::new(&gains, &traffic, &theta, &channel).unwrap();
        let start = vec![0.5; gains.n()];
        let a = game.find_ne(&start, &GameConfig { tol: 1e-10, ..GameConfig::default() }).unwrap();
        let b = game
            .find_ne(
                &start,
                &GameConfig {
                    tol: 1e-10,
                    schedule: UpdateSchedule::Sequential,
                    ..GameConfig::default()
                },
            )
            .unwrap();
        assert!(a.converged && b.converged);
        assert!(b.iterations <= a.iterations);
        for (x, y) in a.p.iter().zip(&b.p) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn equilibria_admit_no_profitable_deviation_across_layouts() {
    let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    for seed in [2, 5, 11, 19] {
        let (gains, traffic, channel, theta) = layout_game(seed);
        let theta = vec![theta; gains.n()];
        let game = Game::new(&gains, &traffic, &theta, &channel).unwrap();
        let state = game.find_ne(&vec![0.5; gains.n()], &GameConfig::default()).unwrap();
        assert!(state.converged);
        assert!(game.profitable_deviations(&state.p, &grid, 1e-6).unwrap().is_empty());
        for n in 0..gains.n() {
            assert!(game.is_feasible(n, (state.p[n] - 1e-6).max(0.0), &state.p).unwrap());
        }
    }
}

#[test]
fn utility_rejects_bad_inputs() {
    assert!(utility(1.5, 1e-3, 100.0, 1e-3).is_err());
    assert!(utility(0.5, 0.0, 100.0, 1e-3).is_err());
    assert!(utility(0.5, 1e-2, 100.0, 1e-3).is_err());
    assert_eq!(utility(0.5, 1e-3, 100.0, 1e-3).unwrap(), 5e7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn best_response_stays_in_unit_interval(
        p in prop::collection::vec(0.0f64..=1.0, 3),
        theta in 1e-5f64..9e-3,
        n in 0usize..3,
    ) {
        let (gains, traffic, channel) = small_game();
        let theta = vec![theta; 3];
        let game = Game::new(&gains, &traffic, &theta, &channel).unwrap();
        let b = game.best_response(n, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        // the clamped response is itself feasible
        prop_assert!(game.is_feasible(n, b, &p).unwrap() || b == 0.0);
    }
}
