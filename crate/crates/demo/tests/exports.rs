use enrichbench_demo::{mock_cosine, preprocess, synthetic_ap};
use serde_json::Value;

#[test]
fn preprocess_reports_steps() {
    let out: Value = serde_json::from_str(&preprocess(
        "Loved it https://t.co/abc #happy @Support THANKS",
        true,
        true,
    ))
    .unwrap();
    assert_eq!(out["cleaned"], "loved it thanks");
    assert_eq!(
        out["applied_steps"],
        serde_json::json!(["strip_noise", "lowercase"])
    );
    assert_eq!(out["tokens"], 3);

    let out: Value = serde_json::from_str(&preprocess("Keep #THIS", false, false)).unwrap();
    assert_eq!(out["cleaned"], "Keep #THIS");
    assert_eq!(out["applied_steps"], serde_json::json!([]));
}

#[test]
fn cosine_matches_token_overlap() {
    let c = mock_cosine("a b c", "a b d", 256, 42).unwrap();
    assert!((c - 2.0 / 3.0).abs() < 1e-12);
    assert!(mock_cosine("a b c", "x y z", 256, 42).unwrap().abs() < 1e-12);
}

#[test]
fn synthetic_run_summarises_ranking() {
    let out: Value = serde_json::from_str(&synthetic_ap(20, 20, 7, 128, 42).unwrap()).unwrap();
    assert_eq!(out["pairs"], 40);
    let ap = out["ap_percent"].as_f64().unwrap();
    assert!(ap > 50.0 && ap <= 100.0);
    let top = out["top"].as_array().unwrap();
    assert_eq!(top.len(), 10);
    let scores: Vec<f64> = top.iter().map(|p| p["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}
