//! Config-driven pipeline runner.
//!
//! An experiment directory is built by five stages, each of which reads only
//! files written by earlier stages:
//!
//! | stage       | writes |
//! |-------------|--------|
//! | `pretrain`  | `config.json`, `data/{train,test,forget,retain}.json`, `models/pretrained.json` |
//! | `gan-train` | `gan/{forget,retain}_{generator,discriminator}.json`, `gan/kl_{forget,retain}.csv`, `data/synthetic_{forget,retain}.json` |
//! | `unlearn`   | `models/{proposed,baseline1,baseline2}.json`, `logs/{proposed,baseline1,baseline2}_phases.csv` |
//! | `evaluate`  | `eval/metrics.json` |
//! | `report`    | `report/{metrics.json,accuracy.csv,mia.csv,kl_forget.csv,kl_retain.csv}` |
//!
//! Every stage updates `manifest.json` in its output directory with the
//! SHA-256 of the files it read and wrote.

mod config;
mod manifest;

pub use config::{
    ClassifierSection, DataSection, ExperimentConfig, GanSection, MiaSection, UnlearnSection,
    SEED_COMPONENTS,
};
pub use manifest::{ArtifactRef, Manifest, Stage, StageRecord, MANIFEST_FILE, MANIFEST_VERSION};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{error, info};

use crate::data::{generate_mixture, split_dataset, Dataset};
use crate::error::{Error, Result};
use crate::eval::{compile_report, MetricsReport, ReportInputs, REPORT_MODELS};
use crate::gan::{
    kl_trace_csv, parse_kl_csv, sample_synthetic, train_gan, GanPair, GanSource, KlPoint,
};
use crate::io::{read_text, sha256_hex, write_atomic};
use crate::linalg::Matrix;
use crate::nn::{Checkpoint, Network};
use crate::unlearn::{
    baseline_inverted_no_gan, baseline_retain_only, build_combined_sets, finetune_unlearn,
    label_synthetic, pretrain_model,
};

pub const CONFIG_FILE: &str = "config.json";

pub mod paths {
    pub const TRAIN: &str = "data/train.json";
    pub const TEST: &str = "data/test.json";
    pub const FORGET: &str = "data/forget.json";
    pub const RETAIN: &str = "data/retain.json";
    pub const SYNTHETIC_FORGET: &str = "data/synthetic_forget.json";
    pub const SYNTHETIC_RETAIN: &str = "data/synthetic_retain.json";
    pub const PRETRAINED: &str = "models/pretrained.json";
    pub const EVAL_METRICS: &str = "eval/metrics.json";
    pub const REPORT_DIR: &str = "report";

    pub fn model(name: &str) -> String {
        format!("models/{name}.json")
    }

    pub fn phase_log(name: &str) -> String {
        format!("logs/{name}_phases.csv")
    }

    pub fn generator(source: &str) -> String {
        format!("gan/{source}_generator.json")
    }

    pub fn discriminator(source: &str) -> String {
        format!("gan/{source}_discriminator.json")
    }

    pub fn kl_trace(source: &str) -> String {
        format!("gan/kl_{source}.csv")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for stages with independent work (the two GANs).
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1 }
    }
}

/// Reads from one directory and writes into another, hashing everything
/// that passes through.
struct StageIo<'a> {
    input: &'a Path,
    output: &'a Path,
    inputs: Vec<ArtifactRef>,
    outputs: Vec<ArtifactRef>,
}

impl<'a> StageIo<'a> {
    fn new(input: &'a Path, output: &'a Path) -> Self {
        Self {
            input,
            output,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn read(&mut self, rel: &str) -> Result<String> {
        let text = read_text(&self.input.join(rel))?;
        self.inputs.push(ArtifactRef {
            path: rel.to_owned(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(text)
    }

    fn read_config(&mut self) -> Result<ExperimentConfig> {
        let text = self.read(CONFIG_FILE)?;
        ExperimentConfig::from_json(&text)
    }

    fn read_dataset(&mut self, rel: &str) -> Result<Dataset> {
        let text = self.read(rel)?;
        Dataset::from_json(&text).map_err(|e| in_file(self.input, rel, e))
    }

    fn read_network(&mut self, rel: &str) -> Result<Network> {
        let text = self.read(rel)?;
        Checkpoint::parse(&text)
            .map(|(net, _)| net)
            .map_err(|e| in_file(self.input, rel, e))
    }

    fn read_kl(&mut self, rel: &str) -> Result<Vec<KlPoint>> {
        let text = self.read(rel)?;
        parse_kl_csv(&text).map_err(|e| in_file(self.input, rel, e))
    }

    fn write(&mut self, rel: &str, body: &str) -> Result<()> {
        write_atomic(&self.output.join(rel), body.as_bytes())?;
        self.outputs.push(ArtifactRef {
            path: rel.to_owned(),
            sha256: sha256_hex(body.as_bytes()),
        });
        Ok(())
    }

    fn write_dataset(&mut self, rel: &str, ds: &Dataset) -> Result<()> {
        self.write(rel, &ds.to_json())
    }

    fn write_network(&mut self, rel: &str, net: &Network, role: &str) -> Result<()> {
        self.write(rel, &Checkpoint::from_network(net, Some(role)).to_json())
    }
}

fn in_file(dir: &Path, rel: &str, err: Error) -> Error {
    match err {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", dir.join(rel).display()),
        },
        other => other,
    }
}

/// Runs `body` as `stage`, then records its outcome in `output`'s manifest.
fn execute<F>(stage: Stage, input: &Path, output: &Path, body: F) -> Result<StageRecord>
where
    F: FnOnce(&mut StageIo<'_>) -> Result<ExperimentConfig>,
{
    info!("stage {stage}: {} -> {}", input.display(), output.display());
    let start = Instant::now();
    let mut io = StageIo::new(input, output);
    let outcome = body(&mut io);
    let mut manifest = match (stage, Manifest::load(output)) {
        (Stage::Pretrain, _) | (_, Ok(None)) => Manifest::default(),
        (_, Ok(Some(m))) => m,
        (_, Err(e)) => {
            error!("stage {stage}: discarding unreadable manifest: {e}");
            Manifest::default()
        }
    };
    match outcome {
        Ok(cfg) => {
            manifest.config = Some(cfg.echo());
            manifest.seeds = cfg.seeds();
            let rec = StageRecord {
                stage,
                inputs: io.inputs,
                outputs: io.outputs,
                wall_time_ms: start.elapsed().as_millis() as u64,
            };
            manifest.record(rec.clone());
            manifest.save(output)?;
            info!("stage {stage}: done in {} ms", rec.wall_time_ms);
            Ok(rec)
        }
        Err(e) => {
            error!("stage {stage} failed: {e}");
            manifest.record_failure(stage, &e);
            if let Err(save_err) = manifest.save(output) {
                error!("could not record failure in manifest: {save_err}");
            }
            Err(e)
        }
    }
}

/// Generates the mixture, splits it and trains the classifier `M`.
pub fn pretrain(config: &ExperimentConfig, output: &Path) -> Result<StageRecord> {
    execute(Stage::Pretrain, output, output, |io| {
        config.validate()?;
        io.write(CONFIG_FILE, &config.to_json())?;
        let d = &config.data;
        let full = generate_mixture(
            d.num_classes,
            d.dim,
            d.samples,
            d.separation,
            config.seed("data"),
        )?;
        let splits = split_dataset(&full, &config.split_spec())?;
        io.write_dataset(paths::TRAIN, &splits.train)?;
        io.write_dataset(paths::TEST, &splits.test)?;
        io.write_dataset(paths::FORGET, &splits.forget)?;
        io.write_dataset(paths::RETAIN, &splits.retain)?;
        let model = pretrain_model(&splits.train, &config.pretrain_config())?;
        io.write_network(paths::PRETRAINED, &model, "pretrained")?;
        Ok(config.clone())
    })
}

fn train_and_sample(
    config: &ExperimentConfig,
    real: &Dataset,
    model: &Network,
    source: GanSource,
) -> Result<(GanPair, Dataset)> {
    let pair = train_gan(real, &config.gan_config(source), source)?;
    let n = config.unlearn_plan().synthetic_count(real.len());
    let seed = config.sample_seed(source);
    if n == 0 {
        let empty = Dataset::new(
            Matrix::zeros(0, real.dim()),
            Some(Vec::new()),
            real.num_classes(),
            source.synthetic_tag(),
            seed,
        )?;
        return Ok((pair, empty));
    }
    let synth = sample_synthetic(
        &pair.generator,
        n,
        real.num_classes(),
        source.synthetic_tag(),
        seed,
    )?;
    let labelled = label_synthetic(model, &synth)?;
    Ok((pair, labelled))
}

/// Trains one GAN per set, then samples and labels the synthetic sets.
pub fn gan_train(input: &Path, output: &Path, opts: &RunOptions) -> Result<StageRecord> {
    execute(Stage::GanTrain, input, output, |io| {
        let config = io.read_config()?;
        let forget = io.read_dataset(paths::FORGET)?;
        let retain = io.read_dataset(paths::RETAIN)?;
        let model = io.read_network(paths::PRETRAINED)?;
        let (f, r) = if opts.jobs > 1 {
            std::thread::scope(|s| {
                let f = s.spawn(|| train_and_sample(&config, &forget, &model, GanSource::Forget));
                let r = train_and_sample(&config, &retain, &model, GanSource::Retain);
                (f.join().expect("forget GAN thread panicked"), r)
            })
        } else {
            (
                train_and_sample(&config, &forget, &model, GanSource::Forget),
                train_and_sample(&config, &retain, &model, GanSource::Retain),
            )
        };
        for ((pair, synth), synth_path) in
            [(f?, paths::SYNTHETIC_FORGET), (r?, paths::SYNTHETIC_RETAIN)]
        {
            let src = pair.source.as_str();
            io.write_network(
                &paths::generator(src),
                &pair.generator,
                &format!("{src}_generator"),
            )?;
            io.write_network(
                &paths::discriminator(src),
                &pair.discriminator,
                &format!("{src}_discriminator"),
            )?;
            io.write(&paths::kl_trace(src), &kl_trace_csv(&pair.kl_trace))?;
            io.write_dataset(synth_path, &synth)?;
        }
        Ok(config)
    })
}

/// Produces the unlearned model and both baselines from `M`.
pub fn unlearn(input: &Path, output: &Path) -> Result<StageRecord> {
    execute(Stage::Unlearn, input, output, |io| {
        let config = io.read_config()?;
        let model = io.read_network(paths::PRETRAINED)?;
        let forget = io.read_dataset(paths::FORGET)?;
        let retain = io.read_dataset(paths::RETAIN)?;
        let synth_forget = io.read_dataset(paths::SYNTHETIC_FORGET)?;
        let synth_retain = io.read_dataset(paths::SYNTHETIC_RETAIN)?;
        let plan = config.unlearn_plan();
        let sets = build_combined_sets(
            &forget,
            &retain,
            Some(&synth_forget).filter(|d| !d.is_empty()),
            Some(&synth_retain).filter(|d| !d.is_empty()),
            &model,
            &plan,
        )?;
        let (proposed, log_p) = finetune_unlearn(&model, &sets, &plan)?;
        let (b1, log_b1) = baseline_retain_only(&model, &retain, &plan)?;
        let (b2, log_b2) = baseline_inverted_no_gan(&model, &forget, &retain, &plan)?;
        for (name, net, log) in [
            ("proposed", &proposed, log_p),
            ("baseline1", &b1, log_b1),
            ("baseline2", &b2, log_b2),
        ] {
            io.write_network(&paths::model(name), net, name)?;
            io.write(&paths::phase_log(name), &log.to_csv())?;
        }
        Ok(config)
    })
}

fn compute_report(io: &mut StageIo<'_>) -> Result<(ExperimentConfig, MetricsReport)> {
    let config = io.read_config()?;
    let mut datasets = BTreeMap::new();
    for (name, rel) in [
        ("retain", paths::RETAIN),
        ("test", paths::TEST),
        ("forget", paths::FORGET),
    ] {
        datasets.insert(name.to_owned(), io.read_dataset(rel)?);
    }
    let mut models = BTreeMap::new();
    for name in REPORT_MODELS {
        models.insert(name.to_owned(), io.read_network(&paths::model(name))?);
    }
    let kl_forget = io.read_kl(&paths::kl_trace("forget"))?;
    let kl_retain = io.read_kl(&paths::kl_trace("retain"))?;
    let inputs = ReportInputs {
        models: models.iter().map(|(k, v)| (k.clone(), v)).collect(),
        datasets: datasets.iter().map(|(k, v)| (k.clone(), v)).collect(),
        kl_forget,
        kl_retain,
        mia: config.mia_config(),
        config: config.echo(),
    };
    let report = compile_report(&inputs, &REPORT_MODELS)?;
    Ok((config, report))
}

/// Accuracy and membership inference for all four models.
pub fn evaluate(input: &Path, output: &Path) -> Result<StageRecord> {
    execute(Stage::Evaluate, input, output, |io| {
        let (config, report) = compute_report(io)?;
        io.write(paths::EVAL_METRICS, &report.to_json())?;
        Ok(config)
    })
}

/// Regenerates the metrics from the checkpoints on disk and renders the
/// report tables.
pub fn report(input: &Path, output: &Path) -> Result<StageRecord> {
    execute(Stage::Report, input, output, |io| {
        let (config, report) = compute_report(io)?;
        let dir = paths::REPORT_DIR;
        io.write(&format!("{dir}/metrics.json"), &report.to_json())?;
        io.write(&format!("{dir}/accuracy.csv"), &report.accuracy_csv())?;
        io.write(&format!("{dir}/mia.csv"), &report.mia_csv())?;
        io.write(
            &format!("{dir}/kl_forget.csv"),
            &kl_trace_csv(&report.kl_forget),
        )?;
        io.write(
            &format!("{dir}/kl_retain.csv"),
            &kl_trace_csv(&report.kl_retain),
        )?;
        Ok(config)
    })
}

/// Runs one stage reading from `input` and writing to `output`. `pretrain`
/// needs `config`; the other stages read `config.json` from `input`.
pub fn run_stage(
    stage: Stage,
    config: Option<&ExperimentConfig>,
    input: &Path,
    output: &Path,
    opts: &RunOptions,
) -> Result<StageRecord> {
    match stage {
        Stage::Pretrain => {
            let cfg =
                config.ok_or_else(|| Error::config("the pretrain stage needs a config file"))?;
            pretrain(cfg, output)
        }
        Stage::GanTrain => gan_train(input, output, opts),
        Stage::Unlearn => unlearn(input, output),
        Stage::Evaluate => evaluate(input, output),
        Stage::Report => report(input, output),
    }
}

/// All five stages in order inside `output`. Stops at the first failure,
/// leaving earlier artifacts and a manifest naming the failed stage.
pub fn run_experiment(
    config: &ExperimentConfig,
    output: &Path,
    opts: &RunOptions,
) -> Result<Manifest> {
    for stage in Stage::ALL {
        run_stage(stage, Some(config), output, output, opts)?;
    }
    Ok(Manifest::load(output)?.expect("manifest written by every stage"))
}

/// Loads the config at `config_path` and runs it into `output`, falling back
/// to the config's own `output_dir` and then `runs/default`.
pub fn run_experiment_file(
    config_path: &Path,
    output: Option<&Path>,
    opts: &RunOptions,
) -> Result<(PathBuf, Manifest)> {
    let config = ExperimentConfig::load(config_path)?;
    let out = output
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs/default"));
    let manifest = run_experiment(&config, &out, opts)?;
    Ok((out, manifest))
}
