use lowrank_demo::{dln_spectrum, galore_relora, shrinkage_curve};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn shrinkage_matches_hand_values() {
    let v = parse(&shrinkage_curve("0.5, 2.0 ,1.0", 0.75, 0.0));
    let nuclear: Vec<f64> = serde_json::from_value(v["nuclear"].clone()).unwrap();
    assert_eq!(nuclear, vec![1.25, 0.25, 0.0]);
    let squared: Vec<f64> = serde_json::from_value(v["squared_nuclear"].clone()).unwrap();
    assert_eq!(squared, vec![2.0, 1.0, 0.5]);
}

#[test]
fn bad_input_is_reported_not_panicked() {
    assert!(parse(&shrinkage_curve("1,x", 0.1, 0.1))["error"].is_string());
    assert!(parse(&shrinkage_curve("", 0.1, 0.1))["error"].is_string());
    assert!(parse(&dln_spectrum(0, 1, 2, 10, 0))["error"].is_string());
    assert!(parse(&galore_relora(8, 9, 2, 10, 0, false))["error"].is_string());
}

#[test]
fn galore_relora_separates_resets() {
    let svd = parse(&galore_relora(8, 2, 5, 20, 3, false));
    let random = parse(&galore_relora(8, 2, 5, 20, 3, true));
    assert!(svd["max_deviation"].as_f64().unwrap() < 1e-9);
    assert!(random["max_deviation"].as_f64().unwrap() > 1e-3);
}

#[test]
fn spectrum_has_one_row_per_record() {
    let v = parse(&dln_spectrum(12, 3, 3, 200, 1));
    let iters = v["iters"].as_array().unwrap();
    let values = v["values"].as_array().unwrap();
    assert_eq!(iters.len(), values.len());
    assert_eq!(values[0].as_array().unwrap().len(), 12);
}
