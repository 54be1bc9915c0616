use std::path::Path;

use serde_json::Value;
use spectral_gng::image::{segment_image, RgbImage};
use spectral_gng::report::{EvalReport, PipelineReport, SweepReport, SweepRun, SweepSummary};
use spectral_gng::synth::{generate, SyntheticSpec};
use spectral_gng::{cluster_points, RunConfig};

fn validator(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    jsonschema::draft202012::new(&schema).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn assert_valid(v: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn point_and_image_reports_match_schema() {
    let v = validator("report");
    let data = generate(&SyntheticSpec::three_rings(100), 1).unwrap();
    let cfg = RunConfig { seed: 1, ..RunConfig::default() };
    let run = cluster_points(&data.points, &cfg).unwrap();
    let with_timings = PipelineReport::from_points("rings.csv", &cfg, &data.points, &run, true);
    assert_valid(&v, &serde_json::to_value(&with_timings).unwrap());

    let image = RgbImage::from_fn(24, 16, |x, _| if x < 12 { [200, 0, 0] } else { [0, 0, 200] }).unwrap();
    let run = segment_image(&image, &cfg).unwrap();
    assert_valid(&v, &serde_json::to_value(PipelineReport::from_image("img.png", &cfg, &run, 3, false)).unwrap());

    let flat = RgbImage::from_fn(4, 4, |_, _| [1, 2, 3]).unwrap();
    let run = segment_image(&flat, &cfg).unwrap();
    assert_valid(&v, &serde_json::to_value(PipelineReport::from_image("flat.png", &cfg, &run, 3, false)).unwrap());
}

#[test]
fn eval_sweep_and_config_match_schema() {
    let metrics = spectral_gng::eval::evaluate(&[0, 0, 1, 1], &[0, 1, 1, 1], &spectral_gng::eval::Metric::ALL).unwrap();
    let eval = EvalReport { pred: "a".into(), gt: "b".into(), n: 4, metrics };
    assert_valid(&validator("eval"), &serde_json::to_value(eval).unwrap());

    let runs = vec![
        SweepRun { seed: 0, chosen_k: 3, chosen_eigenvectors: 2, accuracy: Some(1.0) },
        SweepRun { seed: 1, chosen_k: 2, chosen_eigenvectors: 1, accuracy: None },
    ];
    let sweep = SweepReport { input: "x".into(), config: RunConfig::default(), summary: SweepSummary::new(&runs), runs };
    assert_valid(&validator("sweep"), &serde_json::to_value(sweep).unwrap());

    let config = validator("config");
    assert_valid(&config, &serde_json::to_value(RunConfig::default()).unwrap());
    assert_valid(&config, &serde_json::json!({ "seed": 4, "m": 40 }));
    assert!(!config.is_valid(&serde_json::json!({ "m": "many" })));
    assert!(!config.is_valid(&serde_json::json!({ "k_max": 1 })));
}
