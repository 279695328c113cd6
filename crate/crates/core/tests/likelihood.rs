mod common;

use common::{ingest, obs, small_simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supplyshare::data::{Dataset, Method, Sector};
use supplyshare::inference::{log_likelihood, ModelSpec};
use supplyshare::model::ParameterState;
use supplyshare::variants::ModelKind;

fn random_state(spec: &ModelSpec, seed: u64) -> ParameterState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ParameterState::zeros(spec.layout.clone());
    for i in 0..spec.layout.len() {
        let v = if i >= spec.layout.first_scale() {
            rng.random_range(0.1..1.0)
        } else {
            rng.random_range(-1.5..1.5)
        };
        state.set(i, v);
    }
    state
}

#[test]
fn no_likelihood_observations_give_zero() {
    let data = small_simulation(2);
    let spec = ModelSpec::build(&data, ModelKind::Full, 3.5).unwrap();
    let other_only: Vec<_> = data
        .observations
        .iter()
        .filter(|o| o.sector == Sector::PrivateOther)
        .cloned()
        .collect();
    let excluded = Dataset {
        observations: other_only,
        ..data.clone()
    };
    let state = random_state(&spec, 1);
    assert_eq!(log_likelihood(&excluded, &state, &spec).unwrap(), 0.0);
}

#[test]
fn duplicated_observations_double_the_log_likelihood() {
    let data = small_simulation(3);
    for kind in ModelKind::ALL {
        let spec = ModelSpec::build(&data, kind, 3.5).unwrap();
        let mut doubled = data.clone();
        doubled.observations.extend(data.observations.iter().cloned());
        for seed in 0..5 {
            let state = random_state(&spec, seed);
            let once = log_likelihood(&data, &state, &spec).unwrap();
            let twice = log_likelihood(&doubled, &state, &spec).unwrap();
            assert!((twice - 2.0 * once).abs() <= 1e-9 * once.abs().max(1.0), "{kind}: {twice} vs {once}");
        }
    }
}

#[test]
fn other_private_rows_do_not_enter() {
    let base = vec![
        obs("A", "R", Method::Iud, Sector::Public, 2010.0, 0.6, 0.02),
        obs("A", "R", Method::Iud, Sector::PrivateMedical, 2010.0, 0.3, 0.02),
    ];
    let mut with_other = base.clone();
    with_other.push(obs("A", "R", Method::Iud, Sector::PrivateOther, 2010.0, 0.1, 0.02));
    let (a, b) = (ingest(base), ingest(with_other));
    assert_eq!(b.exclusions.len(), 1);
    let spec = ModelSpec::build(&a, ModelKind::Full, 3.5).unwrap();
    let state = random_state(&spec, 9);
    assert_eq!(
        log_likelihood(&a, &state, &spec).unwrap(),
        log_likelihood(&b, &state, &spec).unwrap()
    );
}
