use session_planner_demo::{noise_curves, plan_model, strategy_comparison};

#[test]
fn hand_written_model_reproduces_the_two_step_example() {
    let model = r#"{"horizon":2,"num_items":2,"item_ids":["A","B"],
        "reward":[[0.5,0.35],[0.5,0.35]],"quit":[[0.6,0.2],[1.0,1.0]]}"#;
    let out = plan_model(model, 2).unwrap();
    let plans = out["plans"].as_array().unwrap();
    let ipv = |name: &str| {
        plans.iter().find(|p| p["plan"]["strategy"] == name).unwrap()["plan"]["expected_ipv"]
            .as_f64()
            .unwrap()
    };
    assert!((ipv("ssp") - 0.75).abs() < 1e-12);
    assert!((ipv("greedy") - 0.70).abs() < 1e-12);
    assert!(plan_model("{}", 2).is_err());
    assert!(plan_model(model, 0).is_err());
}

#[test]
fn comparison_has_one_survival_curve_per_strategy() {
    let out = strategy_comparison(3, 20, 10, 0.2, 3).unwrap();
    assert_eq!(out["rows"].as_array().unwrap().len(), 3);
    for curve in out["curves"].as_array().unwrap() {
        let s = curve["survival"].as_array().unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s[0].as_f64().unwrap(), 1.0);
    }
}

#[test]
fn noise_series_span_every_level() {
    let out = noise_curves(3, 15, 10, 4).unwrap();
    for series in out["series"].as_array().unwrap() {
        assert_eq!(series["revenue"].as_array().unwrap().len(), 5);
    }
}
