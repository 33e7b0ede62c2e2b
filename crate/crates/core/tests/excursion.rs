mod common;

use common::{field_draws, in_excursion, mean_and_se, random_spec, random_state, rng};
use grf_excursion::cokriging::PosteriorState;
use grf_excursion::excursion::{
    emv, excursion_moment, excursion_probability_field, ibv, ExcursionSpec, MeasureWeights, Orientation,
};
use grf_excursion::gaussian::CdfOptions;
use grf_excursion::grf::{Extent, GridDomain};
use grf_excursion::Error;

fn three_node_state(seed: u64) -> PosteriorState {
    let mut r = rng(seed);
    let prior = common::random_prior(&mut r);
    let grid = GridDomain::new(3, 1, Extent { y_max: 0.3, ..Extent::UNIT }).unwrap();
    PosteriorState::from_prior(&prior, &grid).unwrap()
}

#[test]
fn excursion_probabilities_match_field_draws() {
    let mut r = rng(5);
    let opts = CdfOptions::default();
    for case in 0..5 {
        let state = random_state(&mut r, 4);
        let spec = random_spec(&mut r, &state);
        let ep = excursion_probability_field(&state, &spec, &opts).unwrap();
        let draws = field_draws(&state, 40_000, case);
        for (node, &p) in ep.iter().enumerate() {
            let hits = (0..draws.nrows())
                .filter(|&d| in_excursion(draws.row(d).transpose().as_slice(), node, 2, &spec))
                .count() as f64;
            let est = hits / draws.nrows() as f64;
            let se = (p * (1.0 - p) / draws.nrows() as f64).sqrt().max(1e-4);
            assert!((est - p).abs() < 4.5 * se, "case {case} node {node}: {est} vs {p}");
        }
    }
}

#[test]
fn orientations_partition_probability() {
    let mut r = rng(9);
    let state = random_state(&mut r, 3);
    let opts = CdfOptions::default();
    let t = vec![0.2, -0.4];
    let mut total = vec![0.0; state.grid().len()];
    for o0 in [Orientation::Above, Orientation::Below] {
        for o1 in [Orientation::Above, Orientation::Below] {
            let spec = ExcursionSpec {
                thresholds: t.clone(),
                orientation: vec![o0, o1],
            };
            for (acc, p) in total.iter_mut().zip(excursion_probability_field(&state, &spec, &opts).unwrap()) {
                *acc += p;
            }
        }
    }
    assert!(total.iter().all(|s| (s - 1.0).abs() < 1e-10));
}

#[test]
fn moments_match_monte_carlo_on_three_nodes() {
    let opts = CdfOptions::default();
    let weights = MeasureWeights(vec![1.0, 1.0, 1.0]);
    for seed in 0..4 {
        let state = three_node_state(seed);
        let mut r = rng(100 + seed);
        let spec = random_spec(&mut r, &state);
        let draws = field_draws(&state, 100_000, seed);
        let vols: Vec<f64> = (0..draws.nrows())
            .map(|d| {
                let row = draws.row(d).transpose();
                (0..3).filter(|&n| in_excursion(row.as_slice(), n, 2, &spec)).count() as f64
            })
            .collect();
        let sq: Vec<f64> = vols.iter().map(|v| v * v).collect();
        let (m2, se2) = mean_and_se(&sq);
        let closed2 = excursion_moment(&state, &spec, &weights, 2, &opts).unwrap();
        assert!((closed2 - m2).abs() < 3.0 * se2 + 1e-9, "E[v^2] {closed2} vs {m2} ± {se2}");

        let (m1, _) = mean_and_se(&vols);
        let centred: Vec<f64> = vols.iter().map(|v| (v - m1).powi(2)).collect();
        let (var, se_var) = mean_and_se(&centred);
        let closed = emv(&state, &spec, &weights, &opts).unwrap();
        assert!((closed - var).abs() < 3.0 * se_var + 1e-9, "EMV {closed} vs {var} ± {se_var}");
    }
}

#[test]
fn ibv_bounds_and_grid_limit() {
    let mut r = rng(1);
    let state = random_state(&mut r, 5);
    let spec = random_spec(&mut r, &state);
    let w = MeasureWeights::uniform(25, 1.0 / 25.0);
    let v = ibv(&state, &spec, &w, &CdfOptions::default()).unwrap();
    assert!((0.0..=0.25).contains(&v));
    let big = PosteriorState::from_prior(state.prior(), &GridDomain::unit(16)).unwrap();
    let wb = MeasureWeights::uniform(256, 1.0);
    assert!(matches!(
        emv(&big, &spec, &wb, &CdfOptions::default()),
        Err(Error::GridTooLarge { .. })
    ));
}
