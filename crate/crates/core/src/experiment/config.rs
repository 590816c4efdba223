use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::json_error_offset;
use crate::data::{ForgetMode, InversionMode, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{AttackerKind, AttackerParams, MiaConfig};
use crate::gan::{GanConfig, GanSource, DEFAULT_KL_BINS, DEFAULT_KL_EPSILON};
use crate::io::read_text;
use crate::nn::{GeneratorLoss, HiddenActivation};
use crate::rng::derive_seed;
use crate::unlearn::{PretrainConfig, UnlearnPlan};

/// Component names fed to [`derive_seed`] together with `master_seed`.
pub const SEED_COMPONENTS: [&str; 9] = [
    "data",
    "split",
    "classifier",
    "gan_forget",
    "gan_retain",
    "sample_forget",
    "sample_retain",
    "unlearn",
    "mia",
];

/// Everything one experiment needs. Sections carry no seeds of their own;
/// every seed is derived from `master_seed`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Where `run` writes when no `--out` is given. Not part of the config echo.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub gan_forget: GanSection,
    #[serde(default)]
    pub gan_retain: GanSection,
    #[serde(default)]
    pub unlearn: UnlearnSection,
    #[serde(default)]
    pub mia: MiaSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub num_classes: usize,
    pub dim: usize,
    pub samples: usize,
    pub separation: f64,
    pub test_fraction: f64,
    pub forget_fraction: f64,
    pub forget_mode: ForgetMode,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 16,
            samples: 5000,
            separation: 4.0,
            test_fraction: 0.1,
            forget_fraction: 0.1,
            forget_mode: ForgetMode::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub hidden_dims: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let d = PretrainConfig::default();
        Self {
            hidden_dims: d.hidden_dims,
            hidden_activation: d.hidden_activation,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            batch_size: d.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanSection {
    pub noise_dim: usize,
    /// Hidden widths only; the data dimension closes the generator and a
    /// single logit closes the discriminator.
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub epochs: usize,
    pub batch_size: usize,
    pub disc_steps_per_gen_step: usize,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    pub momentum: f64,
    pub loss_variant: GeneratorLoss,
    pub kl_bins: usize,
    pub kl_epsilon: f64,
}

impl Default for GanSection {
    fn default() -> Self {
        let g = GanConfig::for_dim(1);
        Self {
            noise_dim: g.noise_dim,
            generator_hidden: g.generator_dims[1..g.generator_dims.len() - 1].to_vec(),
            discriminator_hidden: g.discriminator_dims[1..g.discriminator_dims.len() - 1].to_vec(),
            hidden_activation: g.hidden_activation,
            epochs: g.epochs,
            batch_size: g.batch_size,
            disc_steps_per_gen_step: g.disc_steps_per_gen_step,
            generator_lr: g.generator_lr,
            discriminator_lr: g.discriminator_lr,
            momentum: g.momentum,
            loss_variant: g.loss_variant,
            kl_bins: DEFAULT_KL_BINS,
            kl_epsilon: DEFAULT_KL_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnlearnSection {
    pub inversion_mode: InversionMode,
    pub synthetic_ratio: f64,
    pub finetune_epochs: usize,
    pub forget_lr: f64,
    pub retain_lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub invert_original_forget: bool,
}

impl Default for UnlearnSection {
    fn default() -> Self {
        let p = UnlearnPlan::default();
        Self {
            inversion_mode: p.inversion_mode,
            synthetic_ratio: p.synthetic_ratio,
            finetune_epochs: p.finetune_epochs,
            forget_lr: p.forget_lr,
            retain_lr: p.retain_lr,
            momentum: p.momentum,
            batch_size: p.batch_size,
            invert_original_forget: p.invert_original_forget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiaSection {
    pub attackers: Vec<AttackerKind>,
    pub cv_folds: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub stump_count: usize,
    pub stump_shrinkage: f64,
}

impl Default for MiaSection {
    fn default() -> Self {
        let m = MiaConfig::default();
        Self {
            attackers: m.attackers,
            cv_folds: m.cv_folds,
            iterations: m.params.iterations,
            learning_rate: m.params.learning_rate,
            regularization: m.params.regularization,
            stump_count: m.params.stump_count,
            stump_shrinkage: m.params.stump_shrinkage,
        }
    }
}

fn field_error(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

fn open_unit(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(field_error(
            path,
            format!("must lie strictly between 0 and 1, got {v}"),
        ))
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field_error(path, format!("must be positive, got {v}")))
    }
}

fn at_least_one(path: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(field_error(path, "must be >= 1"))
    }
}

fn momentum(path: &str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(field_error(path, format!("must lie in [0, 1), got {v}")))
    }
}

fn widths(path: &str, dims: &[usize]) -> Result<()> {
    match dims.iter().position(|&w| w == 0) {
        Some(i) => Err(field_error(
            &format!("{path}[{i}]"),
            "layer width must be >= 1",
        )),
        None => Ok(()),
    }
}

impl GanSection {
    fn validate(&self, prefix: &str) -> Result<()> {
        let p = |f: &str| format!("{prefix}.{f}");
        at_least_one(&p("noise_dim"), self.noise_dim)?;
        widths(&p("generator_hidden"), &self.generator_hidden)?;
        widths(&p("discriminator_hidden"), &self.discriminator_hidden)?;
        at_least_one(&p("epochs"), self.epochs)?;
        at_least_one(&p("batch_size"), self.batch_size)?;
        at_least_one(&p("disc_steps_per_gen_step"), self.disc_steps_per_gen_step)?;
        positive(&p("generator_lr"), self.generator_lr)?;
        positive(&p("discriminator_lr"), self.discriminator_lr)?;
        momentum(&p("momentum"), self.momentum)?;
        at_least_one(&p("kl_bins"), self.kl_bins)?;
        positive(&p("kl_epsilon"), self.kl_epsilon)
    }
}

impl ExperimentConfig {
    /// Parses and validates a config. Errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let offset = json_error_offset(text, &inner);
            if inner.is_data() {
                Error::Config(format!("{path}: {inner}"))
            } else {
                Error::Format {
                    offset,
                    message: inner.to_string(),
                }
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.num_classes < 2 {
            return Err(field_error(
                "data.num_classes",
                format!("must be >= 2, got {}", d.num_classes),
            ));
        }
        if d.dim < 2 {
            return Err(field_error(
                "data.dim",
                format!("must be >= 2, got {}", d.dim),
            ));
        }
        if d.samples == 0 || !d.samples.is_multiple_of(d.num_classes) {
            return Err(field_error(
                "data.samples",
                format!(
                    "must be a positive multiple of num_classes {}, got {}",
                    d.num_classes, d.samples
                ),
            ));
        }
        positive("data.separation", d.separation)?;
        open_unit("data.test_fraction", d.test_fraction)?;
        open_unit("data.forget_fraction", d.forget_fraction)?;
        if let ForgetMode::ClassTargeted { class } = d.forget_mode {
            if class >= d.num_classes {
                return Err(field_error(
                    "data.forget_mode.class",
                    format!("must be below num_classes {}, got {class}", d.num_classes),
                ));
            }
        }

        let c = &self.classifier;
        widths("classifier.hidden_dims", &c.hidden_dims)?;
        positive("classifier.learning_rate", c.learning_rate)?;
        momentum("classifier.momentum", c.momentum)?;
        at_least_one("classifier.batch_size", c.batch_size)?;

        self.gan_forget.validate("gan_forget")?;
        self.gan_retain.validate("gan_retain")?;

        let u = &self.unlearn;
        if !(u.synthetic_ratio >= 0.0 && u.synthetic_ratio.is_finite()) {
            return Err(field_error(
                "unlearn.synthetic_ratio",
                format!("must be >= 0, got {}", u.synthetic_ratio),
            ));
        }
        positive("unlearn.forget_lr", u.forget_lr)?;
        positive("unlearn.retain_lr", u.retain_lr)?;
        momentum("unlearn.momentum", u.momentum)?;
        at_least_one("unlearn.batch_size", u.batch_size)?;

        let m = &self.mia;
        if m.attackers.is_empty() {
            return Err(field_error(
                "mia.attackers",
                "must name at least one attacker",
            ));
        }
        if m.cv_folds < 2 {
            return Err(field_error(
                "mia.cv_folds",
                format!("must be >= 2, got {}", m.cv_folds),
            ));
        }
        at_least_one("mia.iterations", m.iterations)?;
        positive("mia.learning_rate", m.learning_rate)?;
        if !(m.regularization >= 0.0 && m.regularization.is_finite()) {
            return Err(field_error(
                "mia.regularization",
                format!("must be >= 0, got {}", m.regularization),
            ));
        }
        at_least_one("mia.stump_count", m.stump_count)?;
        positive("mia.stump_shrinkage", m.stump_shrinkage)
    }

    /// `derive_seed(master_seed, component)`.
    pub fn seed(&self, component: &str) -> u64 {
        derive_seed(self.master_seed, component)
    }

    pub fn seeds(&self) -> BTreeMap<String, u64> {
        SEED_COMPONENTS
            .iter()
            .map(|&c| (c.to_owned(), self.seed(c)))
            .collect()
    }

    /// The config as it is echoed into reports and manifests.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            test_fraction: self.data.test_fraction,
            forget_fraction: self.data.forget_fraction,
            forget_mode: self.data.forget_mode,
            seed: self.seed("split"),
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        let c = &self.classifier;
        PretrainConfig {
            hidden_dims: c.hidden_dims.clone(),
            hidden_activation: c.hidden_activation,
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            momentum: c.momentum,
            batch_size: c.batch_size,
            seed: self.seed("classifier"),
        }
    }

    pub fn gan_config(&self, source: GanSource) -> GanConfig {
        let (s, seed) = match source {
            GanSource::Forget => (&self.gan_forget, self.seed("gan_forget")),
            GanSource::Retain => (&self.gan_retain, self.seed("gan_retain")),
        };
        let dim = self.data.dim;
        GanConfig {
            noise_dim: s.noise_dim,
            generator_dims: std::iter::once(s.noise_dim)
                .chain(s.generator_hidden.iter().copied())
                .chain(std::iter::once(dim))
                .collect(),
            discriminator_dims: std::iter::once(dim)
                .chain(s.discriminator_hidden.iter().copied())
                .chain(std::iter::once(1))
                .collect(),
            hidden_activation: s.hidden_activation,
            epochs: s.epochs,
            batch_size: s.batch_size,
            disc_steps_per_gen_step: s.disc_steps_per_gen_step,
            generator_lr: s.generator_lr,
            discriminator_lr: s.discriminator_lr,
            momentum: s.momentum,
            loss_variant: s.loss_variant,
            kl_bins: s.kl_bins,
            kl_epsilon: s.kl_epsilon,
            seed,
        }
    }

    pub fn sample_seed(&self, source: GanSource) -> u64 {
        self.seed(&format!("sample_{}", source.as_str()))
    }

    pub fn unlearn_plan(&self) -> UnlearnPlan {
        let u = &self.unlearn;
        UnlearnPlan {
            inversion_mode: u.inversion_mode,
            synthetic_ratio: u.synthetic_ratio,
            finetune_epochs: u.finetune_epochs,
            forget_lr: u.forget_lr,
            retain_lr: u.retain_lr,
            momentum: u.momentum,
            batch_size: u.batch_size,
            invert_original_forget: u.invert_original_forget,
            seed: self.seed("unlearn"),
        }
    }

    pub fn mia_config(&self) -> MiaConfig {
        let m = &self.mia;
        MiaConfig {
            attackers: m.attackers.clone(),
            cv_folds: m.cv_folds,
            balance_seed: self.seed("mia"),
            params: AttackerParams {
                iterations: m.iterations,
                learning_rate: m.learning_rate,
                regularization: m.regularization,
                stump_count: m.stump_count,
                stump_shrinkage: m.stump_shrinkage,
            },
        }
    }
}
