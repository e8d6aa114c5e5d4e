//! Agreement with an independent accountant (fixtures from `dp_accounting`).

use dpscale_core::accounting::calibrate_branch;
use dpscale_core::{calibrate_nbr, epsilon_of, AccountingSetup, Batching, NoiseBatchRatio, PrivacySpec};
use serde::Deserialize;

#[derive(Deserialize)]
struct EpsilonCase {
    data: u64,
    batch: f64,
    steps: u64,
    nbr: f64,
    delta: f64,
    epsilon: f64,
}

#[derive(Deserialize)]
struct CalibrationCase {
    epsilon: f64,
    delta: f64,
    data: u64,
    batch: f64,
    steps: u64,
    poisson_nbr: f64,
    deterministic_nbr: f64,
    nbr: f64,
}

#[derive(Deserialize)]
struct Fixture {
    epsilon_of: Vec<EpsilonCase>,
    calibration: Vec<CalibrationCase>,
}

fn fixture() -> Fixture {
    serde_json::from_str(include_str!("fixtures/reference_accountant.json")).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn epsilon_matches_reference() {
    for c in fixture().epsilon_of {
        let setup = AccountingSetup::new(c.data, c.batch, c.steps, Batching::Poisson).unwrap();
        let eps = epsilon_of(&setup, NoiseBatchRatio::new(c.nbr).unwrap(), c.delta).unwrap();
        assert!(rel(eps, c.epsilon) <= 0.01, "{eps} vs {}", c.epsilon);
    }
}

#[test]
fn calibration_matches_reference() {
    let cases = fixture().calibration;
    assert_eq!(cases.len(), 20);
    for c in cases {
        let spec = PrivacySpec::new(c.epsilon, c.delta).unwrap();
        let setup = AccountingSetup::new(c.data, c.batch, c.steps, Batching::Poisson).unwrap();
        let got = calibrate_nbr(&spec, &setup).unwrap();
        assert!(
            rel(got.nbr.value(), c.nbr) <= 0.01,
            "eps={} N={} B={} T={}: {} vs {}",
            c.epsilon, c.data, c.batch, c.steps, got.nbr.value(), c.nbr
        );
        let p = calibrate_branch(&spec, &setup).unwrap();
        assert!(rel(p.nbr.value(), c.poisson_nbr) <= 0.01);
        let d = calibrate_branch(&spec, &setup.with_batching(Batching::Deterministic).unwrap()).unwrap();
        assert!(
            rel(d.nbr.value(), c.deterministic_nbr) <= 0.01,
            "deterministic {} vs {}",
            d.nbr.value(),
            c.deterministic_nbr
        );
    }
}
