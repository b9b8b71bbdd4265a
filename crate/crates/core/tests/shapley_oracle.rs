//! Exact Shapley axioms, the permutation-average oracle, and the gradient
//! estimator against the exact baseline-replacement game.

mod common;

use common::permutation_shapley;
use exad_core::explain::{
    exact_shapley, gradient_shap, make_game_from_model, BaselineSet, FnScore, ShapleyGame,
};
use ndarray::{array, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_game(players: usize, seed: u64) -> ShapleyGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ShapleyGame::from_fn(players, |_| rng.random_range(-1.0..1.0)).unwrap()
}

#[test]
fn matches_permutation_average_oracle() {
    for players in 2..=7usize {
        for seed in 0..4u64 {
            let game = random_game(players, seed * 31 + players as u64);
            let exact = exact_shapley(&game).unwrap();
            let oracle = permutation_shapley(&game);
            for (e, o) in exact.iter().zip(&oracle) {
                assert!((e - o).abs() <= 1e-12, "M={players} seed={seed}: {e} vs {o}");
            }
        }
    }
}

#[test]
fn efficiency_up_to_twelve_players() {
    for players in [3usize, 8, 12] {
        let game = random_game(players, players as u64);
        let phi = exact_shapley(&game).unwrap();
        let gap = game.grand_coalition_value() - game.empty_coalition_value();
        assert!((phi.iter().sum::<f64>() - gap).abs() <= 1e-12);
    }
}

#[test]
fn symmetry_for_interchangeable_players() {
    // Players 0 and 1 enter the value only through their count.
    let game = ShapleyGame::from_fn(4, |mask| {
        let pair = (mask & 0b0011).count_ones() as f64;
        let rest = (mask & 0b1100) as f64;
        pair * 1.7 + pair * pair + rest * 0.3
    })
    .unwrap();
    let phi = exact_shapley(&game).unwrap();
    assert!((phi[0] - phi[1]).abs() <= 1e-12);
}

#[test]
fn linearity_of_the_value_operator() {
    for seed in 0..5u64 {
        let a = random_game(5, seed);
        let b = random_game(5, seed + 100);
        let sum = ShapleyGame::from_fn(5, |mask| a.value(mask) + b.value(mask)).unwrap();
        let phi_a = exact_shapley(&a).unwrap();
        let phi_b = exact_shapley(&b).unwrap();
        let phi_sum = exact_shapley(&sum).unwrap();
        for k in 0..5 {
            assert!((phi_sum[k] - (phi_a[k] + phi_b[k])).abs() <= 1e-12);
        }
    }
}

fn quadratic_score() -> impl exad_core::explain::DifferentiableScore {
    FnScore::new(
        |x: &ArrayView2<f64>| x.sum().powi(2),
        |x: &ArrayView2<f64>| Array2::from_elem(x.raw_dim(), 2.0 * x.sum()),
    )
}

#[test]
fn completeness_gap_shrinks_with_sample_count() {
    let x = array![[0.8, 0.3], [0.5, 0.4]];
    let baselines = BaselineSet::new(vec![
        array![[0.1, 0.05], [0.2, 0.15]],
        array![[0.3, 0.3], [0.1, 0.0]],
    ])
    .unwrap();
    let score = quadratic_score();
    let gap_at = |n: usize| {
        gradient_shap(&score, &x.view(), &baselines, n, 5)
            .unwrap()
            .completeness_gap()
            .abs()
    };
    let coarse = gap_at(50);
    let fine = gap_at(20_000);
    assert!(
        fine < coarse,
        "completeness gap did not shrink: {coarse} -> {fine}"
    );
}

#[test]
fn gradient_estimator_agrees_with_exact_game_on_nonlinear_fixture() {
    // 4-cell window, s(x) = (sum x)^2, a single baseline.
    let x = array![[0.8, 0.3], [0.5, 0.4]];
    let baseline = array![[0.1, 0.05], [0.2, 0.15]];
    let score = quadratic_score();
    let baselines = BaselineSet::new(vec![baseline]).unwrap();

    let game = make_game_from_model(&score, &x.view(), &baselines).unwrap();
    let exact = exact_shapley(&game).unwrap();

    let attr = gradient_shap(&score, &x.view(), &baselines, 50_000, 2024).unwrap();

    let gap = attr.explained_score - attr.baseline_expectation;
    assert!(
        attr.completeness_gap().abs() <= 0.01 * gap.abs(),
        "completeness gap {} vs score gap {gap}",
        attr.completeness_gap()
    );
    for (cell, phi) in exact.iter().enumerate() {
        let (t, k) = (cell / 2, cell % 2);
        let estimate = attr.values[[t, k]];
        assert!(
            (estimate - phi).abs() <= 0.02 * phi.abs(),
            "cell {cell}: estimate {estimate} vs exact {phi}"
        );
    }
}
