use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{HmcConfig, IsOptions};
use crate::networks::{Activation, AdversaryForm};
use crate::training::{AvbConfig, Objective};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    DonutVb,
    EightSchools,
    Synthetic4,
    MnistSubset,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::DonutVb => "donut-vb",
            ExperimentId::EightSchools => "eight-schools",
            ExperimentId::Synthetic4 => "synthetic4",
            ExperimentId::MnistSubset => "mnist-subset",
        }
    }

    /// Variational inference against a fixed target, as opposed to learning a generative model.
    pub fn is_vb(self) -> bool {
        matches!(self, ExperimentId::DonutVb | ExperimentId::EightSchools)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Black-box encoder with the prior as contrast.
    Avb,
    /// Moment encoder with adaptive contrast.
    AvbAc,
    /// Diagonal Gaussian encoder with the analytic KL.
    Vae,
    /// Black-box encoder with an adversary on `z` alone.
    AaeVariant,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Avb => "avb",
            Method::AvbAc => "avb-ac",
            Method::Vae => "vae",
            Method::AaeVariant => "aae-variant",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Ignored by the VB experiments, whose latent size is fixed by the target.
    pub latent_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    /// Width of the noise fed to a black-box encoder.
    pub noise_dim: usize,
    /// Basis vectors of the moment encoder.
    pub num_bases: usize,
    /// Noise width of each basis network.
    pub basis_noise_dim: usize,
    pub basis_hidden_width: usize,
    pub basis_hidden_layers: usize,
    pub adversary_form: AdversaryForm,
    pub adversary_hidden_width: usize,
    pub adversary_hidden_layers: usize,
    pub adversary_embed_dim: usize,
    pub adversary_side_nets: bool,
    pub adversary_log_prior_offset: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            hidden_width: 64,
            hidden_layers: 2,
            activation: Activation::Elu,
            noise_dim: 2,
            num_bases: 8,
            basis_noise_dim: 2,
            basis_hidden_width: 32,
            basis_hidden_layers: 1,
            adversary_form: AdversaryForm::InnerProduct,
            adversary_hidden_width: 64,
            adversary_hidden_layers: 2,
            adversary_embed_dim: 16,
            adversary_side_nets: true,
            adversary_log_prior_offset: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Steps between metric lines; 0 evaluates only at the end.
    pub every: u64,
    /// Steps between training-log lines; 0 disables the log.
    pub log_every: u64,
    /// Noise draws per row for the ELBO estimate.
    pub elbo_samples: usize,
    /// Importance-sampling settings; `is_examples` rows are scored.
    pub is: IsOptions,
    /// Data points scored by importance sampling; 0 skips it.
    pub is_examples: usize,
    /// Sample size of the aggregated-posterior KL; 0 skips it.
    pub kl_samples: usize,
    /// Posterior draws written to disk and compared with the reference.
    pub n_samples: usize,
    pub hmc: HmcConfig,
    pub hmc_chains: usize,
    pub grid_images: usize,
    pub grid_cols: usize,
    /// Latent codes written to the scatter file.
    pub scatter_points: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            every: 0,
            log_every: 10,
            elbo_samples: 16,
            is: IsOptions::default(),
            is_examples: 4,
            kl_samples: 10_000,
            n_samples: 10_000,
            hmc: HmcConfig::default(),
            hmc_chains: 1,
            grid_images: 64,
            grid_cols: 8,
            scatter_points: 2_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub eval_images: Option<PathBuf>,
    pub eval_labels: Option<PathBuf>,
    /// Use only the first images of each split; 0 keeps all.
    pub train_limit: usize,
    pub eval_limit: usize,
    /// Eight Schools table; the bundled copy when absent.
    pub eight_schools: Option<PathBuf>,
}

/// A full experiment description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub method: Method,
    /// Master seed; model initialization, training and evaluation streams derive from it.
    pub seed: u64,
    pub steps: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub training: AvbConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub data: DataConfig,
}

impl ExperimentConfig {
    /// Parses TOML; relative data paths are resolved against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            context: "experiment config".into(),
            message: e.to_string(),
        })?;
        if let Some(base) = base {
            let d = &mut cfg.data;
            for p in [
                &mut d.train_images,
                &mut d.train_labels,
                &mut d.eval_images,
                &mut d.eval_labels,
                &mut d.eight_schools,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, path.parent())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            context: "experiment config".into(),
            message: e.to_string(),
        })
    }

    /// Training settings after the method has fixed the objective and contrast.
    pub fn effective_training(&self) -> Result<AvbConfig> {
        let mut t = self.training.clone();
        t.seed = self.seed.wrapping_add(1);
        match self.method {
            Method::AaeVariant => t.objective = Objective::AaeZOnly,
            Method::Avb | Method::AvbAc if t.objective == Objective::AaeZOnly => {
                return Err(Error::Config(format!(
                    "objective aae-z-only belongs to method aae-variant, not {}",
                    self.method.as_str()
                )))
            }
            _ => {}
        }
        t.adaptive_contrast = self.method == Method::AvbAc;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        self.effective_training()?.validate()?;
        let n = &self.network;
        if n.hidden_width == 0 || n.latent_dim == 0 || n.noise_dim == 0 || n.basis_noise_dim == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if self.method == Method::AvbAc && n.num_bases < 2 {
            return Err(Error::Config("avb-ac needs num_bases >= 2".into()));
        }
        if self.evaluation.grid_cols == 0 {
            return Err(Error::Config("grid_cols must be positive".into()));
        }
        if self.experiment == ExperimentId::MnistSubset {
            for (key, p) in [
                ("data.train_images", &self.data.train_images),
                ("data.eval_images", &self.data.eval_images),
            ] {
                match p {
                    None => return Err(Error::Config(format!("mnist-subset needs {key}"))),
                    Some(p) if !p.exists() => {
                        return Err(Error::Config(format!("{key} = {} does not exist", p.display())))
                    }
                    _ => {}
                }
            }
        }
        for (key, p) in [
            ("data.train_labels", &self.data.train_labels),
            ("data.eval_labels", &self.data.eval_labels),
            ("data.eight_schools", &self.data.eight_schools),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::Config(format!("{key} = {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "synthetic4"
method = "avb-ac"
seed = 3
steps = 10
out_dir = "runs/x"
"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL, None).unwrap();
        assert_eq!(c.experiment, ExperimentId::Synthetic4);
        assert_eq!(c.method, Method::AvbAc);
        assert_eq!(c.network, NetworkConfig::default());
        let t = c.effective_training().unwrap();
        assert!(t.adaptive_contrast);
        assert_eq!(t.seed, 4);
        c.validate().unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap(), None).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn seed_is_required_and_unknown_keys_rejected() {
        let no_seed = MINIMAL.replace("seed = 3\n", "");
        assert!(ExperimentConfig::from_toml(&no_seed, None).is_err());
        let extra = format!("{MINIMAL}\nbogus = 1\n");
        assert!(ExperimentConfig::from_toml(&extra, None).is_err());
    }

    #[test]
    fn missing_files_fail_validation() {
        let text = MINIMAL.replace("synthetic4", "mnist-subset")
            + "[data]\ntrain_images = \"nope.gz\"\neval_images = \"nope.gz\"\n";
        let c = ExperimentConfig::from_toml(&text, Some(Path::new("/nonexistent"))).unwrap();
        assert_eq!(c.data.train_images.as_deref(), Some(Path::new("/nonexistent/nope.gz")));
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn aae_objective_is_tied_to_its_method() {
        let text = format!("{MINIMAL}[training]\nobjective = \"aae-z-only\"\n");
        let c = ExperimentConfig::from_toml(&text, None).unwrap();
        assert!(c.effective_training().is_err());
        let c = ExperimentConfig::from_toml(&text.replace("avb-ac", "aae-variant"), None).unwrap();
        assert_eq!(c.effective_training().unwrap().objective, Objective::AaeZOnly);
    }
}
