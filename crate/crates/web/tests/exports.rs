use serde_json::Value;
use witten_web::{landscape, quasimode, spectrum, MAX_DEMO_SITES};

fn call(out: String) -> Value {
    serde_json::from_str(&out).unwrap()
}

const DOUBLE: &str = r#"{"name": "double_well_1d"}"#;

#[test]
fn landscape_of_the_double_well() {
    let v = call(landscape(DOUBLE));
    assert_eq!(v["critical_points"].as_array().unwrap().len(), 3);
    assert!((v["E"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert!((v["A"].as_f64().unwrap() - 1.800632).abs() < 1e-5);
    let (x, f) = (v["x"].as_array().unwrap(), v["v"].as_array().unwrap());
    assert_eq!(x.len(), f.len());
    assert_eq!(x[0].as_f64().unwrap(), -2.5);
    // one minimum is fine for a plot, there is just no barrier
    let single = call(landscape(r#"{"name": "x", "coeffs": [0, 0, 1]}"#));
    assert_eq!(single["critical_points"].as_array().unwrap().len(), 1);
    assert!(single["E"].is_null() && single["note"].is_string());
}

#[test]
fn spectrum_matches_the_prediction() {
    let v = call(spectrum(DOUBLE, 0.1, 4));
    let l: Vec<f64> = v["eigenvalues"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(l.len(), 4);
    assert!((l[1] / 8.2028884948221047e-6 - 1.0).abs() < 1e-8);
    assert!((v["ratio"].as_f64().unwrap() - 1.0034287).abs() < 1e-6);
    assert_eq!(v["n_small"], 2);
    let modes = v["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 4);
    let peak = modes[1].as_array().unwrap().iter().map(|x| x.as_f64().unwrap().abs()).fold(0.0, f64::max);
    assert_eq!(peak, 1.0);

    let triple = call(spectrum(r#"{"name": "triple_well_1d"}"#, 0.08, 4));
    assert_eq!(triple["n_small"], 3);
}

#[test]
fn every_slider_position_solves() {
    // the page's eps slider spans 10^-1.6 .. 10^-0.4 and k up to 8
    for name in ["double_well_1d", "triple_well_1d"] {
        let p = format!(r#"{{"name": "{name}"}}"#);
        for e in [-1.6, -1.2, -0.8, -0.5, -0.4] {
            let v = call(spectrum(&p, 10f64.powf(e), 8));
            assert!(v["error"].is_null(), "{name} at 10^{e}: {}", v["error"]);
        }
    }
}

#[test]
fn quasimode_tracks_the_second_eigenvector() {
    let v = call(quasimode(DOUBLE, 0.1));
    assert!(v["overlap"].as_f64().unwrap() > 0.9999);
    let (lb, l2, rq) =
        (v["lower_bound"].as_f64().unwrap(), v["lambda2"].as_f64().unwrap(), v["rayleigh_quotient"].as_f64().unwrap());
    assert!(lb <= l2 && l2 <= rq);
    assert_eq!(v["psi"].as_array().unwrap().len(), v["x"].as_array().unwrap().len());
}

#[test]
fn errors_come_back_as_json() {
    for out in [
        spectrum(DOUBLE, 0.001, 4),
        spectrum(DOUBLE, -1.0, 4),
        spectrum("not json", 0.1, 4),
        spectrum(r#"{"name": "double_well_aniso_2d"}"#, 0.1, 4),
        spectrum(r#"{"name": "x", "coeffs": []}"#, 0.1, 4),
        landscape(r#"{"name": "double_well_1d", "half_width": -1}"#),
        quasimode(r#"{"name": "x", "coeffs": [0, 0, 1]}"#, 0.1),
    ] {
        assert!(call(out)["error"].is_string());
    }
    assert!(call(spectrum(DOUBLE, 0.001, 4))["error"].as_str().unwrap().contains(&MAX_DEMO_SITES.to_string()));
}
