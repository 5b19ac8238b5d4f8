#![allow(dead_code)]

use std::path::{Path, PathBuf};

use avb::autodiff::{ParamSet, Tensor};
use avb::experiments::{run_experiment, ExperimentConfig, RunSummary};
use avb::networks::{Activation, Adversary, AdversaryForm, AdversarySpec, Init};
use avb::training::{fit_adversary, standard_normal, AvbConfig, Objective, OptimizerKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn normal_log_pdf(z: f64, mean: f64, sd: f64) -> f64 {
    let u = (z - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * u * u
}

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn config_path(name: &str) -> PathBuf {
    repo_root().join("configs").join(name)
}

/// Loads a shipped config and redirects its output below `out`.
pub fn shipped_config(name: &str, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    cfg.out_dir = out.join(name.trim_end_matches(".toml"));
    cfg
}

pub fn run(cfg: &ExperimentConfig) -> RunSummary {
    run_experiment(cfg).unwrap_or_else(|e| panic!("{e}"))
}

const MNIST_DATA: &str = r#"
[data]
train_images = "data/mnist-subset/train/images-idx3-ubyte.gz"
train_labels = "data/mnist-subset/train/labels-idx1-ubyte.gz"
eval_images = "data/mnist-subset/eval/images-idx3-ubyte.gz"
eval_labels = "data/mnist-subset/eval/labels-idx1-ubyte.gz"
train_limit = 64
eval_limit = 16
"#;

/// A small but complete run of `experiment` with `method`.
pub fn tiny_config(experiment: &str, method: &str, out: &Path) -> ExperimentConfig {
    let data = match experiment {
        "mnist-subset" => MNIST_DATA,
        "eight-schools" => "[data]\neight_schools = \"data/eight_schools.txt\"\n",
        _ => "",
    };
    let text = format!(
        r#"
experiment = "{experiment}"
method = "{method}"
seed = 5
steps = 30
out_dir = "{out}"

[network]
hidden_width = 8
adversary_hidden_width = 8
basis_hidden_width = 8

[training]
batch_size = 8
lr_generator = 1e-3
lr_adversary = 1e-3

[evaluation]
every = 15
log_every = 5
elbo_samples = 2
is_examples = 2
kl_samples = 200
n_samples = 200
grid_images = 4
scatter_points = 50

[evaluation.is]
n_samples = 50
n_fit = 50

[evaluation.hmc]
n_samples = 200
warmup = 50
leapfrog_steps = 8
{data}"#,
        out = out.display()
    );
    ExperimentConfig::from_toml(&text, Some(&repo_root())).unwrap()
}

/// A 1-d scalar density sampled by the adversary fits.
pub trait Sampler1d {
    fn draw(&self, rng: &mut ChaCha8Rng, n: usize) -> Tensor;
    fn log_pdf(&self, z: f64) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub struct Normal1d {
    pub mean: f64,
    pub sd: f64,
}

impl Sampler1d for Normal1d {
    fn draw(&self, rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        standard_normal(rng, n, 1).map(|e| self.mean + self.sd * e)
    }

    fn log_pdf(&self, z: f64) -> f64 {
        normal_log_pdf(z, self.mean, self.sd)
    }
}

/// Equal-weight mixture of two normals.
#[derive(Clone, Copy, Debug)]
pub struct Mixture1d(pub Normal1d, pub Normal1d);

impl Sampler1d for Mixture1d {
    fn draw(&self, rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        let a = self.0.draw(rng, n);
        let b = self.1.draw(rng, n);
        let pick = standard_normal(rng, n, 1);
        let data = (0..n)
            .map(|i| if pick.data()[i] < 0.0 { a.data()[i] } else { b.data()[i] })
            .collect();
        Tensor::matrix(n, 1, data).unwrap()
    }

    fn log_pdf(&self, z: f64) -> f64 {
        let (a, b) = (self.0.log_pdf(z), self.1.log_pdf(z));
        let m = a.max(b);
        m + (0.5 * ((a - m).exp() + (b - m).exp())).ln()
    }
}

/// Trains a 1-d adversary to separate `q` (label 1) from `p` (label 0).
pub fn fit_1d(
    form: AdversaryForm,
    objective: Objective,
    q: &dyn Sampler1d,
    p: &dyn Sampler1d,
    steps: usize,
    seed: u64,
) -> (Adversary, ParamSet) {
    let spec = AdversarySpec {
        form,
        data_dim: 1,
        latent_dim: 1,
        hidden_width: 32,
        hidden_layers: 2,
        embed_dim: 8,
        side_nets: true,
        log_prior_offset: false,
        activation: Activation::Elu,
    };
    let mut psi = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adv = Adversary::new(&mut psi, &spec, Init::GlorotUniform, &mut rng).unwrap();
    let cfg = AvbConfig {
        optimizer: OptimizerKind::Adam,
        lr_adversary: 3e-3,
        lr_half_life: Some((steps / 6).max(1) as u64),
        seed: seed + 1,
        ..Default::default()
    };
    fit_adversary(
        &adv,
        &mut psi,
        objective,
        &mut |rng, n| q.draw(rng, n),
        &mut |rng, n| p.draw(rng, n),
        steps,
        512,
        &cfg,
    )
    .unwrap();
    (adv, psi)
}

/// Largest `|T(z) - offset - truth(z)|` over an even grid on `[lo, hi]`.
pub fn sup_error(adv: &Adversary, psi: &ParamSet, offset: f64, lo: f64, hi: f64, truth: &dyn Fn(f64) -> f64) -> f64 {
    let n = 201;
    let zs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let z = Tensor::matrix(n, 1, zs.clone()).unwrap();
    let x = Tensor::ones(&[n, 1]);
    let t = adv.logits(psi, &x, &z).unwrap();
    zs.iter().zip(t).map(|(&z, t)| (t - offset - truth(z)).abs()).fold(0.0, f64::max)
}

/// Central interval holding 99% of the equal mixture of `p` and `q`, by bisection on the CDF.
pub fn central_99_interval(p: Normal1d, q: Normal1d) -> (f64, f64) {
    let cdf = |z: f64| 0.5 * (normal_cdf((z - p.mean) / p.sd) + normal_cdf((z - q.mean) / q.sd));
    let quantile = |u: f64| {
        let (mut a, mut b) = (-50.0, 50.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if cdf(m) < u {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    (quantile(0.005), quantile(0.995))
}

/// Standard normal CDF by Simpson integration of the density; accurate to ~1e-12 on |z| < 10.
pub fn normal_cdf(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - normal_cdf(-z);
    }
    let n = 2000;
    let h = z / n as f64;
    let f = |t: f64| (-0.5 * t * t).exp();
    let mut s = f(0.0) + f(z);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    0.5 + s * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
}

/// Means of consecutive non-overlapping windows of `values`; a trailing partial window is dropped.
pub fn window_means(values: &[f64], window: usize) -> Vec<f64> {
    values.chunks_exact(window).map(|c| c.iter().sum::<f64>() / window as f64).collect()
}

/// Per-step ELBO estimates (`-loss_gen`) from a `train_log.jsonl`.
pub fn train_log_elbos(path: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            -v["loss_gen"].as_f64().expect("loss_gen")
        })
        .collect()
}
