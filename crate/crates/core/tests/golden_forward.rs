//! Golden-output pin for the toy forward pass.
//!
//! The reference vector was recorded once from a build whose gradients had
//! passed the finite-difference suite, and is asserted bit-for-bit since.
//! Regenerate deliberately with LAMBDA_PRIOR_BLESS=1 after an intentional
//! numeric change.

use lambda_prior::prior::{forward, init_params, PriorConfig};
use lambda_prior::train::toy_batch;
use lambda_prior::FloatMode;

const GOLDEN_PATH: &str = "tests/golden/toy_forward.json";

#[test]
fn toy_forward_matches_golden_vector() {
    let config = PriorConfig::toy();
    let params = init_params(&config, 2024, FloatMode::F32).unwrap();
    let sample = &toy_batch(&config, 1, 2024)[0];
    let out = forward(&params, &sample.seq, None, FloatMode::F32).unwrap();
    let got: Vec<f64> = out.z_hat.values().to_vec();

    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN_PATH);
    if std::env::var("LAMBDA_PRIOR_BLESS").is_ok() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&got).unwrap()).unwrap();
        eprintln!("blessed {} values to {}", got.len(), path.display());
        return;
    }
    let text = std::fs::read_to_string(&path)
        .expect("golden file missing; run with LAMBDA_PRIOR_BLESS=1 to record it");
    let want: Vec<f64> = serde_json::from_str(&text).unwrap();
    assert_eq!(got.len(), want.len());
    for (i, (g, w)) in got.iter().zip(&want).enumerate() {
        assert_eq!(g, w, "coordinate {i} drifted from the golden value");
    }
}
