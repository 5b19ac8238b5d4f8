use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, ExperimentId, Method};
use super::dataset::{synthetic4_dataset, BinaryImageDataset};
use super::idx::{load_idx, load_idx_labels};
use super::pgm::dump_pgm_grid;
use crate::autodiff::{ParamSet, Tensor};
use crate::distributions::{donut_target, EightSchools, EightSchoolsPosterior, TargetDensity};
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregated_posterior_kl, dataset_loglik, elbo_via_adversary, hmc_sample_chains, histogram_mode_count,
    knn_kl_estimate, reconstruction_error, MetricsRecord, SampleSet, DEFAULT_KNN_K, KNN_ESTIMATOR,
};
use crate::networks::{
    decode_checkpoint, encode_checkpoint, Adversary, AdversaryForm, AdversarySpec, BlackBoxEncoder, Decoder, Encoder,
    GaussianEncoder, Init, Mlp, MlpSpec, MomentEncoder,
};
use crate::training::{avb_step, standard_normal, AvbConfig, AvbModel, ObjectiveMode, StepLogger, StepLosses, TrainState};
use crate::vae::{vae_elbo, vae_step, VaeModel};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.avbckpt";
pub const LOCK_FILE: &str = ".lock";
const SCHOOLS_NAMES: [&str; 10] = ["mu", "tau", "eta1", "eta2", "eta3", "eta4", "eta5", "eta6", "eta7", "eta8"];
const MODE_BINS: usize = 50;

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Clone, Debug)]
pub enum Trainer {
    Avb(AvbModel),
    Vae(VaeModel),
}

impl Trainer {
    fn encoder(&self) -> Encoder {
        match self {
            Trainer::Avb(m) => m.encoder.clone(),
            Trainer::Vae(m) => Encoder::Gaussian(m.encoder.clone()),
        }
    }

    fn decoder(&self) -> &Decoder {
        match self {
            Trainer::Avb(m) => &m.decoder,
            Trainer::Vae(m) => &m.decoder,
        }
    }
}

enum Data {
    Images {
        train: BinaryImageDataset,
        eval: BinaryImageDataset,
        eval_labels: Option<Vec<u8>>,
    },
    Target(Arc<dyn TargetDensity>),
}

/// A built experiment: data, model and training state.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub training: AvbConfig,
    pub trainer: Trainer,
    pub state: TrainState,
    data: Data,
    reference: Option<SampleSet>,
}

/// What a run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub metrics: Vec<MetricsRecord>,
    pub last_losses: Option<StepLosses>,
}

fn truncate(d: BinaryImageDataset, limit: usize) -> Result<BinaryImageDataset> {
    if limit == 0 || limit >= d.len() {
        return Ok(d);
    }
    let t = d.slice(0, limit)?;
    BinaryImageDataset::new(limit, d.height(), d.width(), t.into_data())
}

fn load_data(cfg: &ExperimentConfig) -> Result<Data> {
    Ok(match cfg.experiment {
        ExperimentId::Synthetic4 => Data::Images {
            train: synthetic4_dataset(),
            eval: synthetic4_dataset(),
            eval_labels: Some(vec![0, 1, 2, 3]),
        },
        ExperimentId::MnistSubset => {
            let d = &cfg.data;
            let need = |p: &Option<PathBuf>, key: &str| {
                p.clone().ok_or_else(|| Error::Config(format!("mnist-subset needs {key}")))
            };
            let train = truncate(load_idx(&need(&d.train_images, "data.train_images")?)?, d.train_limit)?;
            let eval = truncate(load_idx(&need(&d.eval_images, "data.eval_images")?)?, d.eval_limit)?;
            let eval_labels = match &d.eval_labels {
                Some(p) => {
                    let mut l = load_idx_labels(p)?;
                    l.truncate(eval.len());
                    Some(l)
                }
                None => None,
            };
            Data::Images {
                train,
                eval,
                eval_labels,
            }
        }
        ExperimentId::DonutVb => Data::Target(Arc::new(donut_target())),
        ExperimentId::EightSchools => {
            let data = match &cfg.data.eight_schools {
                Some(p) => EightSchools::load(p)?,
                None => EightSchools::canonical(),
            };
            Data::Target(Arc::new(EightSchoolsPosterior::new(data)))
        }
    })
}

fn build_trainer(cfg: &ExperimentConfig, data: &Data) -> Result<(Trainer, ParamSet, ParamSet, ParamSet)> {
    let n = &cfg.network;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (data_dim, latent_dim) = match data {
        Data::Images { train, .. } => (train.pixels_per_image(), n.latent_dim),
        Data::Target(t) => (1, t.dim()),
    };
    let hidden = vec![n.hidden_width; n.hidden_layers];
    let (mut theta, mut phi, mut psi) = (ParamSet::new(), ParamSet::new(), ParamSet::new());
    let decoder = match data {
        Data::Images { .. } => Decoder::Bernoulli(Mlp::new(
            &mut theta,
            "dec",
            MlpSpec::new(latent_dim, n.hidden_width, n.hidden_layers, data_dim, n.activation),
            Init::GlorotUniform,
            &mut rng,
        )?),
        Data::Target(t) => Decoder::Target(t.clone()),
    };
    let encoder = match cfg.method {
        Method::Avb | Method::AaeVariant => Encoder::BlackBox(BlackBoxEncoder::new(
            &mut phi,
            data_dim,
            n.noise_dim,
            latent_dim,
            &hidden,
            n.activation,
            &mut rng,
        )?),
        Method::AvbAc => Encoder::Moment(MomentEncoder::new(
            &mut phi,
            data_dim,
            latent_dim,
            n.num_bases,
            n.basis_noise_dim,
            &vec![n.basis_hidden_width; n.basis_hidden_layers],
            &hidden,
            n.activation,
            &mut rng,
        )?),
        Method::Vae => {
            let e = GaussianEncoder::new(&mut phi, data_dim, latent_dim, &hidden, n.activation, &mut rng)?;
            return Ok((Trainer::Vae(VaeModel { encoder: e, decoder }), theta, phi, psi));
        }
    };
    let spec = AdversarySpec {
        form: if cfg.method == Method::AaeVariant {
            AdversaryForm::ZOnly
        } else {
            n.adversary_form
        },
        data_dim,
        latent_dim,
        hidden_width: n.adversary_hidden_width,
        hidden_layers: n.adversary_hidden_layers,
        embed_dim: n.adversary_embed_dim,
        side_nets: n.adversary_side_nets,
        log_prior_offset: n.adversary_log_prior_offset,
        activation: n.activation,
    };
    let adversary = Adversary::new(&mut psi, &spec, Init::GlorotUniform, &mut rng)?;
    Ok((
        Trainer::Avb(AvbModel {
            encoder,
            decoder,
            adversary,
        }),
        theta,
        phi,
        psi,
    ))
}

fn with_context<T>(cfg: &ExperimentConfig, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Experiment { .. } | Error::Locked(_) => e,
        e => Error::Experiment {
            experiment: format!("{}/{}", cfg.experiment.as_str(), cfg.method.as_str()),
            source: Box::new(e),
        },
    })
}

fn ones(rows: usize) -> Tensor {
    Tensor::ones(&[rows, 1])
}

fn csv_names(dim: usize, schools: bool) -> Option<Vec<&'static str>> {
    (schools && dim == SCHOOLS_NAMES.len()).then(|| SCHOOLS_NAMES.to_vec())
}

impl Experiment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        with_context(cfg, Self::build(cfg))
    }

    fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let training = cfg.effective_training()?;
        let data = load_data(cfg)?;
        let (trainer, theta, phi, psi) = build_trainer(cfg, &data)?;
        if let Trainer::Avb(m) = &trainer {
            m.check(&training)?;
        }
        let state = TrainState::new(theta, phi, psi, &training);
        Ok(Self {
            cfg: cfg.clone(),
            training,
            trainer,
            state,
            data,
            reference: None,
        })
    }

    fn next_batch(&mut self) -> Result<Tensor> {
        let rows = self.training.batch_size;
        match &self.data {
            Data::Images { train, .. } => Ok(train.sample_batch(&mut self.state.rng, rows)?.0),
            Data::Target(_) => Ok(ones(rows)),
        }
    }

    /// One training step on a fresh batch.
    pub fn step(&mut self) -> Result<StepLosses> {
        let batch = self.next_batch()?;
        let r = match &self.trainer {
            Trainer::Avb(m) => avb_step(&mut self.state, m, &batch, &self.training),
            Trainer::Vae(m) => vae_step(&mut self.state, m, &batch, &self.training),
        };
        with_context(&self.cfg, r)
    }

    /// Ground-truth posterior draws by HMC, computed once per experiment.
    pub fn reference_samples(&mut self) -> Result<Option<&SampleSet>> {
        if self.reference.is_none() {
            if let Data::Target(t) = &self.data {
                let mut hmc = self.cfg.evaluation.hmc.clone();
                hmc.n_samples = self.cfg.evaluation.n_samples;
                let r = with_context(&self.cfg, hmc_sample_chains(t.as_ref(), &hmc, self.cfg.evaluation.hmc_chains))?;
                self.reference = Some(r.samples);
            }
        }
        Ok(self.reference.as_ref())
    }

    fn eval_rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(2).wrapping_add(salt.wrapping_mul(0x9e37_79b9)))
    }

    /// Posterior draws `z ~ q(z | x = 1)` of a VB experiment.
    pub fn posterior_samples(&self, n: usize) -> Result<SampleSet> {
        let mut rng = self.eval_rng(self.state.step + 1);
        let enc = self.trainer.encoder();
        let eps = standard_normal(&mut rng, n.max(2), enc.noise_width());
        let z = enc.sample_values(&self.state.phi, &ones(n.max(2)), &eps)?;
        SampleSet::new("posterior", z.cols(), z.data()[..n * z.cols()].to_vec())
    }

    fn elbo(&self, x: &Tensor, rng: &mut ChaCha8Rng) -> Result<f64> {
        let reps = self.cfg.evaluation.elbo_samples.max(1);
        let s = &self.state;
        match &self.trainer {
            Trainer::Avb(m) => {
                elbo_via_adversary(m, &s.theta, &s.phi, &s.psi, x, reps, ObjectiveMode::from(&self.training), rng)
            }
            Trainer::Vae(m) => {
                let mut total = 0.0;
                for _ in 0..reps {
                    let eps = standard_normal(rng, x.rows(), m.encoder.latent_dim());
                    total += vae_elbo(m, &s.theta, &s.phi, x, &eps)?;
                }
                Ok(total / reps as f64)
            }
        }
    }

    /// Metrics at the current parameters.
    pub fn evaluate(&mut self, started: Instant) -> Result<MetricsRecord> {
        with_context(&self.cfg.clone(), self.evaluate_inner(started))
    }

    fn evaluate_inner(&mut self, started: Instant) -> Result<MetricsRecord> {
        let ev = self.cfg.evaluation.clone();
        let mut rng = self.eval_rng(self.state.step);
        let mut rec = MetricsRecord {
            experiment: self.cfg.experiment.as_str().into(),
            method: self.cfg.method.as_str().into(),
            step: self.state.step,
            knn_estimator: KNN_ESTIMATOR.into(),
            ..Default::default()
        };
        let encoder = self.trainer.encoder();
        match &self.data {
            Data::Images { eval, .. } => {
                let x = eval.to_tensor()?;
                rec.elbo = Some(self.elbo(&x, &mut rng)?);
                let s = &self.state;
                let decoder = self.trainer.decoder();
                let reps = ev.elbo_samples.max(1);
                let mut rerr = 0.0;
                for _ in 0..reps {
                    rerr += reconstruction_error(&encoder, &s.phi, decoder, &s.theta, &x, &mut rng)?;
                }
                rec.reconstruction_error = Some(rerr / reps as f64);
                if ev.is_examples > 0 {
                    let k = ev.is_examples.min(eval.len());
                    let ll = dataset_loglik(&encoder, &s.phi, decoder, &s.theta, &eval.slice(0, k)?, &ev.is, &mut rng)?;
                    rec.log_likelihood = Some(ll.value);
                    rec.log_likelihood_se = Some(ll.se);
                }
                if ev.kl_samples > 0 {
                    rec.kl_aggregated_posterior =
                        Some(aggregated_posterior_kl(&encoder, &s.phi, &x, ev.kl_samples, &mut rng)?);
                }
            }
            Data::Target(_) => {
                rec.elbo = Some(self.elbo(&ones(self.training.batch_size.max(2)), &mut rng)?);
                let samples = self.posterior_samples(ev.n_samples)?;
                let reference = self.reference_samples()?.expect("VB experiments have a reference").clone();
                rec.kl_to_reference = Some(knn_kl_estimate(&reference, &samples, DEFAULT_KNN_K)?);
                if self.cfg.experiment == ExperimentId::EightSchools {
                    for (key, set) in [("posterior", &samples), ("reference", &reference)] {
                        let tau = set.column(1);
                        let prod: Vec<f64> = set.rows().map(|r| r[1] * r[2]).collect();
                        rec.extra
                            .insert(format!("{key}_tau_modes"), histogram_mode_count(&tau, MODE_BINS) as f64);
                        rec.extra
                            .insert(format!("{key}_tau_eta1_modes"), histogram_mode_count(&prod, MODE_BINS) as f64);
                    }
                }
            }
        }
        let d = &self.state.diagnostics;
        for (k, v) in [
            ("fgan_clamped", d.fgan_clamped),
            ("sigma_floored", d.sigma_floored),
            ("grads_clipped", d.grads_clipped),
        ] {
            rec.extra.insert(k.into(), v as f64);
        }
        rec.wall_clock = started.elapsed().as_secs_f64();
        Ok(rec)
    }

    /// All parameters in one set, decoder first.
    pub fn checkpoint_params(&self) -> ParamSet {
        let mut all = ParamSet::new();
        for set in [&self.state.theta, &self.state.phi, &self.state.psi] {
            for (name, t) in set.iter() {
                all.push(name, t.clone());
            }
        }
        all
    }

    /// Restores parameters saved by [`Experiment::checkpoint_params`].
    pub fn load_params(&mut self, all: &ParamSet) -> Result<()> {
        let expected = self.checkpoint_params();
        if expected.names() != all.names()
            || expected.tensors().iter().zip(all.tensors()).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Checkpoint {
                offset: 0,
                message: "parameter layout does not match the configured model".into(),
            });
        }
        let mut it = all.tensors().iter();
        for set in [&mut self.state.theta, &mut self.state.phi, &mut self.state.psi] {
            for t in set.tensors_mut() {
                *t = it.next().expect("layout checked").clone();
            }
        }
        Ok(())
    }

    /// Writes samples, latent scatter, image grids and the checkpoint.
    pub fn write_artifacts(&mut self, dir: &Path) -> Result<()> {
        with_context(&self.cfg.clone(), self.write_artifacts_inner(dir))
    }

    fn write_artifacts_inner(&mut self, dir: &Path) -> Result<()> {
        let samples_dir = dir.join("samples");
        std::fs::create_dir_all(&samples_dir)?;
        std::fs::write(dir.join(CHECKPOINT_FILE), encode_checkpoint(&self.checkpoint_params()))?;
        let ev = self.cfg.evaluation.clone();
        let schools = self.cfg.experiment == ExperimentId::EightSchools;
        let encoder = self.trainer.encoder();
        match &self.data {
            Data::Target(_) => {
                let s = self.posterior_samples(ev.n_samples)?;
                let names = csv_names(s.dim(), schools);
                s.save_csv(&samples_dir.join("posterior.csv"), names.as_deref())?;
                let r = self.reference_samples()?.expect("VB experiments have a reference");
                r.save_csv(&samples_dir.join("reference_hmc.csv"), names.as_deref())?;
            }
            Data::Images { eval, eval_labels, .. } => {
                let mut rng = self.eval_rng(u64::MAX);
                let n = ev.scatter_points;
                let mut f = BufWriter::new(File::create(samples_dir.join("latent_scatter.csv"))?);
                let d = encoder.latent_dim();
                let header: Vec<String> = (0..d).map(|k| format!("z{k}")).chain(["color".into()]).collect();
                writeln!(f, "{}", header.join(","))?;
                if n > 0 && !eval.is_empty() {
                    let idx: Vec<usize> = (0..n).map(|i| i % eval.len()).collect();
                    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| eval.image(i).to_vec()).collect();
                    let x = Tensor::from_rows(&rows)?;
                    let eps = standard_normal(&mut rng, n.max(2), encoder.noise_width());
                    let x = if n < 2 { Tensor::from_rows(&[rows[0].clone(), rows[0].clone()])? } else { x };
                    let z = encoder.sample_values(&self.state.phi, &x, &eps)?;
                    for (r, &i) in idx.iter().enumerate() {
                        let color = eval_labels.as_ref().map_or(i, |l| l[i] as usize);
                        let vals: Vec<String> = z.row_slice(r).iter().map(|v| format!("{v}")).collect();
                        writeln!(f, "{},{color}", vals.join(","))?;
                    }
                }
                f.flush()?;

                let grids = dir.join("grids");
                std::fs::create_dir_all(&grids)?;
                let (h, w) = (eval.height(), eval.width());
                let decoder = self.trainer.decoder();
                let g = ev.grid_images.max(1);
                let prior = standard_normal(&mut rng, g, d);
                if let Some(means) = decoder.mean_values(&self.state.theta, &prior)? {
                    dump_pgm_grid(&means, h, w, &grids.join("samples.pgm"), ev.grid_cols)?;
                }
                let k = g.min(eval.len());
                if k >= 2 {
                    let x = eval.slice(0, k)?;
                    dump_pgm_grid(&x, h, w, &grids.join("data.pgm"), ev.grid_cols)?;
                    let eps = standard_normal(&mut rng, k, encoder.noise_width());
                    let z = encoder.sample_values(&self.state.phi, &x, &eps)?;
                    if let Some(means) = decoder.mean_values(&self.state.theta, &z)? {
                        dump_pgm_grid(&means, h, w, &grids.join("reconstructions.pgm"), ev.grid_cols)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Trains and evaluates one configured experiment, writing every artifact to `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let dir = cfg.out_dir.clone();
    let _lock = with_context(cfg, OutputLock::acquire(&dir))?;
    let started = Instant::now();
    let mut exp = Experiment::new(cfg)?;
    with_context(cfg, std::fs::write(dir.join("config.resolved.toml"), cfg.to_toml()?).map_err(Error::from))?;
    let metrics_path = dir.join(METRICS_FILE);
    with_context(cfg, File::create(&metrics_path).map(drop).map_err(Error::from))?;
    let mut logger = if cfg.evaluation.log_every > 0 {
        Some(StepLogger::new(BufWriter::new(with_context(
            cfg,
            File::create(dir.join(TRAIN_LOG_FILE)).map_err(Error::from),
        )?)))
    } else {
        None
    };
    let mut metrics = Vec::new();
    let mut last = None;
    for _ in 0..cfg.steps {
        let losses = exp.step()?;
        if let Some(l) = logger.as_mut() {
            if losses.step % cfg.evaluation.log_every == 0 {
                with_context(cfg, l.log(&losses))?;
            }
        }
        last = Some(losses);
        let every = cfg.evaluation.every;
        if every > 0 && losses.step % every == 0 && losses.step < cfg.steps {
            let rec = exp.evaluate(started)?;
            with_context(cfg, rec.append_to(&metrics_path))?;
            log::info!("{}", rec.to_json_line()?);
            metrics.push(rec);
        }
    }
    if let Some(l) = logger {
        with_context(cfg, l.into_inner().flush().map_err(Error::from))?;
    }
    let rec = exp.evaluate(started)?;
    with_context(cfg, rec.append_to(&metrics_path))?;
    metrics.push(rec);
    exp.write_artifacts(&dir)?;
    Ok(RunSummary {
        out_dir: dir,
        metrics,
        last_losses: last,
    })
}

/// Evaluates saved parameters under `cfg` without training.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<MetricsRecord> {
    let started = Instant::now();
    let mut exp = Experiment::new(cfg)?;
    let params = with_context(cfg, std::fs::read(checkpoint).map_err(Error::from).and_then(|b| decode_checkpoint(&b)))?;
    with_context(cfg, exp.load_params(&params))?;
    exp.state.step = cfg.steps;
    exp.evaluate(started)
}
