use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate_accuracy, mia_score, MiaConfig, MiaReport};
use crate::codec::json_error_offset;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gan::{kl_trace_csv, KlPoint};
use crate::io::write_atomic;
use crate::nn::Network;

/// Models compared in a full experiment, in report order.
pub const REPORT_MODELS: [&str; 4] = ["pretrained", "baseline1", "baseline2", "proposed"];
/// Datasets every report needs.
pub const EVAL_SETS: [&str; 3] = ["retain", "test", "forget"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub retain_accuracy: f64,
    pub test_accuracy: f64,
    /// Accuracy on the forget set against its original labels.
    pub forget_accuracy: f64,
    pub mia: MiaReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub models: Vec<ModelMetrics>,
    pub kl_forget: Vec<KlPoint>,
    pub kl_retain: Vec<KlPoint>,
    pub config: serde_json::Value,
}

pub struct ReportInputs<'a> {
    pub models: BTreeMap<String, &'a Network>,
    pub datasets: BTreeMap<String, &'a Dataset>,
    pub kl_forget: Vec<KlPoint>,
    pub kl_retain: Vec<KlPoint>,
    pub mia: MiaConfig,
    pub config: serde_json::Value,
}

/// Accuracy on retain/test/forget plus membership inference for every model
/// in `model_names`, in that order.
pub fn compile_report(inputs: &ReportInputs<'_>, model_names: &[&str]) -> Result<MetricsReport> {
    let missing: Vec<String> = model_names
        .iter()
        .filter(|m| !inputs.models.contains_key(**m))
        .map(|m| format!("model `{m}`"))
        .chain(
            EVAL_SETS
                .iter()
                .filter(|d| !inputs.datasets.contains_key(**d))
                .map(|d| format!("dataset `{d}`")),
        )
        .collect();
    if !missing.is_empty() {
        return Err(Error::config(format!(
            "report inputs missing: {}",
            missing.join(", ")
        )));
    }
    let (retain, test, forget) = (
        inputs.datasets["retain"],
        inputs.datasets["test"],
        inputs.datasets["forget"],
    );
    let mut models = Vec::with_capacity(model_names.len());
    for &name in model_names {
        let net = inputs.models[name];
        models.push(ModelMetrics {
            model: name.to_owned(),
            retain_accuracy: evaluate_accuracy(net, retain)?,
            test_accuracy: evaluate_accuracy(net, test)?,
            forget_accuracy: evaluate_accuracy(net, forget)?,
            mia: mia_score(net, name, forget, test, &inputs.mia)?,
        });
    }
    Ok(MetricsReport {
        models,
        kl_forget: inputs.kl_forget.clone(),
        kl_retain: inputs.kl_retain.clone(),
        config: inputs.config.clone(),
    })
}

impl MetricsReport {
    pub fn model(&self, name: &str) -> Option<&ModelMetrics> {
        self.models.iter().find(|m| m.model == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format {
            offset: json_error_offset(text, &e),
            message: e.to_string(),
        })
    }

    /// `model,retain,test,forget`
    pub fn accuracy_csv(&self) -> String {
        let mut out = String::from("model,retain,test,forget\n");
        for m in &self.models {
            writeln!(
                out,
                "{},{},{},{}",
                m.model, m.retain_accuracy, m.test_accuracy, m.forget_accuracy
            )
            .expect("write");
        }
        out
    }

    /// `model,attacker,score`
    pub fn mia_csv(&self) -> String {
        let mut out = String::from("model,attacker,score\n");
        for m in &self.models {
            for a in &m.mia.attackers {
                writeln!(out, "{},{},{}", m.model, a.attacker.as_str(), a.score).expect("write");
            }
        }
        out
    }

    /// Writes `metrics.json` and the CSV companions into `dir`; returns the
    /// paths written.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let files = [
            ("metrics.json", self.to_json()),
            ("accuracy.csv", self.accuracy_csv()),
            ("mia.csv", self.mia_csv()),
            ("kl_forget.csv", kl_trace_csv(&self.kl_forget)),
            ("kl_retain.csv", kl_trace_csv(&self.kl_retain)),
        ];
        let mut written = Vec::with_capacity(files.len());
        for (name, body) in files {
            let path = dir.join(name);
            write_atomic(&path, body.as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_mixture, split_dataset, SplitSpec};
    use crate::nn::{init_network, HiddenActivation, OutputActivation};

    fn fixture() -> (crate::data::Splits, Vec<Network>) {
        let full = generate_mixture(4, 3, 400, 3.0, 1).unwrap();
        let splits = split_dataset(
            &full,
            &SplitSpec {
                seed: 1,
                ..SplitSpec::default()
            },
        )
        .unwrap();
        let nets = (0..4)
            .map(|s| {
                init_network(
                    &[3, 6, 4],
                    HiddenActivation::Relu,
                    OutputActivation::Softmax,
                    s,
                )
                .unwrap()
            })
            .collect();
        (splits, nets)
    }

    fn inputs<'a>(splits: &'a crate::data::Splits, nets: &'a [Network]) -> ReportInputs<'a> {
        ReportInputs {
            models: REPORT_MODELS
                .iter()
                .map(|m| m.to_string())
                .zip(nets.iter())
                .collect(),
            datasets: [
                ("retain", &splits.retain),
                ("test", &splits.test),
                ("forget", &splits.forget),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            kl_forget: vec![KlPoint { epoch: 1, kl: 0.3 }],
            kl_retain: vec![KlPoint { epoch: 1, kl: 0.2 }],
            mia: MiaConfig::default(),
            config: serde_json::json!({"master_seed": 1}),
        }
    }

    #[test]
    fn report_shape_and_roundtrip() {
        let (splits, nets) = fixture();
        let report = compile_report(&inputs(&splits, &nets), &REPORT_MODELS).unwrap();
        assert_eq!(report.models.len(), 4);
        for m in &report.models {
            for acc in [m.retain_accuracy, m.test_accuracy, m.forget_accuracy] {
                assert!((0.0..=1.0).contains(&acc));
            }
            assert_eq!(m.mia.attackers.len(), 3);
        }
        assert_eq!(MetricsReport::from_json(&report.to_json()).unwrap(), report);
        assert_eq!(report.accuracy_csv().lines().count(), 5);
        assert_eq!(report.mia_csv().lines().count(), 13);
    }

    #[test]
    fn missing_inputs_are_listed() {
        let (splits, nets) = fixture();
        let mut inp = inputs(&splits, &nets);
        inp.models.remove("baseline2");
        inp.datasets.remove("test");
        match compile_report(&inp, &REPORT_MODELS) {
            Err(Error::Config(msg)) => {
                assert!(msg.contains("baseline2") && msg.contains("test"), "{msg}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
