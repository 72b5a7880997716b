//! Build a model from JSON, validate it, and run the diagnostics.

use effham::cli::{run_checks, CheckBlock};
use effham::model::{validate, Model};

fn main() -> effham::Result<()> {
    let text = r#"{
        "kind": "discrete", "J": 2, "regime": "I", "ell": 3,
        "hop_plus": [[2, 1, 1], [0.5, 0.5, 0.5]],
        "hop_minus": [[1, 1, 1], [1, 2, 1]],
        "switching": [[[0, 0, 0], [1, 1, 1]], [[0.5, 0.5, 0.5], [0, 0, 0]]]
    }"#;
    let model = Model::from_json(text)?;
    println!("valid: {}", validate(&model).is_valid());
    let report = run_checks(&model, &serde_json::from_str::<CheckBlock>("{}")?)?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}
