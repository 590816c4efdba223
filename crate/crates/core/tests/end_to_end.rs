//! Five-seed properties of the default experiment.

use std::path::Path;
use std::sync::OnceLock;

use ungan_core::data::load_dataset;
use ungan_core::eval::{evaluate_accuracy, MetricsReport, ModelMetrics};
use ungan_core::experiment::{paths, run_experiment, ExperimentConfig, RunOptions};
use ungan_core::nn::load_checkpoint;

struct Run {
    report: MetricsReport,
    train_accuracy: f64,
}

fn runs() -> &'static [Run] {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let cfg_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
        (0..5)
            .map(|seed| {
                let dir = tempfile::tempdir().unwrap();
                let cfg = ExperimentConfig {
                    master_seed: 100 + seed,
                    ..ExperimentConfig::load(&cfg_path).unwrap()
                };
                run_experiment(&cfg, dir.path(), &RunOptions::default()).unwrap();
                let text = std::fs::read_to_string(dir.path().join(paths::EVAL_METRICS)).unwrap();
                let (model, _) = load_checkpoint(&dir.path().join(paths::PRETRAINED)).unwrap();
                let train = load_dataset(&dir.path().join(paths::TRAIN)).unwrap();
                Run {
                    report: MetricsReport::from_json(&text).unwrap(),
                    train_accuracy: evaluate_accuracy(&model, &train).unwrap(),
                }
            })
            .collect()
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn median_of(model: &str, f: fn(&ModelMetrics) -> f64) -> f64 {
    median(
        runs()
            .iter()
            .map(|r| f(r.report.model(model).unwrap()))
            .collect(),
    )
}

#[test]
fn pretrained_model_fits_its_training_set() {
    let acc = median(runs().iter().map(|r| r.train_accuracy).collect());
    assert!(acc >= 0.95, "train accuracy {acc}");
    let test = median_of("pretrained", |m| m.test_accuracy);
    assert!(acc > test, "train {acc} should exceed test {test}");
}

#[test]
fn unlearning_lowers_forget_accuracy() {
    let pre = median_of("pretrained", |m| m.forget_accuracy);
    assert!(median_of("proposed", |m| m.forget_accuracy) < pre);
    assert!(median_of("baseline2", |m| m.forget_accuracy) < pre);
}

#[test]
fn unlearning_keeps_retain_accuracy() {
    let pre = median_of("pretrained", |m| m.retain_accuracy);
    let proposed = median_of("proposed", |m| m.retain_accuracy);
    assert!(
        proposed >= pre - 0.05,
        "proposed {proposed} vs pretrained {pre}"
    );
}

#[test]
fn retain_only_baseline_stays_within_two_points() {
    let pre = median_of("pretrained", |m| m.retain_accuracy);
    let b1 = median_of("baseline1", |m| m.retain_accuracy);
    assert!(b1 >= pre - 0.02, "baseline1 {b1} vs pretrained {pre}");
}
