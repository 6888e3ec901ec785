//! Feed-forward autoencoders trained with Adam on the normalised positions.
//!
//! Unlike PCA, the network sees the [-1, 1] positions directly; the tanh
//! output layer already spans that range.

mod adam;
mod lae;
pub mod net;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::recon::Reconstruction;

pub use adam::Adam;
pub use lae::{latent_covariance, off_diagonal_ratio, recover_principal_directions, train_lae, LaeReport};
pub use net::{Activation, Layer, LayerGrad};

/// The four symmetric architectures, from a single latent layer to three
/// hidden layers on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeKind {
    Ae1,
    Ae2,
    Ae3,
    Ae4,
}

impl AeKind {
    pub const ALL: [AeKind; 4] = [Self::Ae1, Self::Ae2, Self::Ae3, Self::Ae4];

    pub fn encoder_widths(self) -> &'static [usize] {
        match self {
            Self::Ae1 => &[],
            Self::Ae2 => &[32],
            Self::Ae3 => &[64, 32],
            Self::Ae4 => &[128, 64, 32],
        }
    }
}

impl fmt::Display for AeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            Self::Ae1 => 1,
            Self::Ae2 => 2,
            Self::Ae3 => 3,
            Self::Ae4 => 4,
        };
        write!(f, "AE-{n}")
    }
}

impl FromStr for AeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "AE-1" | "AE1" => Ok(Self::Ae1),
            "AE-2" | "AE2" => Ok(Self::Ae2),
            "AE-3" | "AE3" => Ok(Self::Ae3),
            "AE-4" | "AE4" => Ok(Self::Ae4),
            _ => Err(Error::Config(format!("unknown autoencoder architecture '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeArchitecture {
    pub encoder_widths: Vec<usize>,
    pub latent_dim: usize,
    /// Always the reverse of `encoder_widths`.
    pub decoder_widths: Vec<usize>,
    /// Used on every hidden layer, the latent layer included.
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub l2_lambda: f64,
    pub biases: bool,
}

impl AeArchitecture {
    pub fn new(encoder_widths: Vec<usize>, latent_dim: usize) -> Result<Self> {
        if latent_dim < 1 {
            return Err(Error::Config("latent dimension must be at least 1".into()));
        }
        if encoder_widths.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        let decoder_widths = encoder_widths.iter().rev().copied().collect();
        Ok(Self {
            encoder_widths,
            latent_dim,
            decoder_widths,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Tanh,
            l2_lambda: 0.0,
            biases: true,
        })
    }

    pub fn make(kind: AeKind, k: usize) -> Result<Self> {
        Self::new(kind.encoder_widths().to_vec(), k)
    }

    /// Same shape with identity activations everywhere.
    pub fn linear(mut self) -> Self {
        self.hidden_activation = Activation::Linear;
        self.output_activation = Activation::Linear;
        self
    }

    /// Layer sizes from input to output for `t` days.
    pub fn sizes(&self, t: usize) -> Vec<usize> {
        let mut s = vec![t];
        s.extend(&self.encoder_widths);
        s.push(self.latent_dim);
        s.extend(&self.decoder_widths);
        s.push(t);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 200,
            batch_size: 256,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::Config("Adam betas must lie in (0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("Adam epsilon must be positive".into()));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub layers: Vec<Layer>,
    pub architecture: AeArchitecture,
    /// Full-data training objective after each epoch.
    pub train_log: Vec<f64>,
    pub seed: u64,
    /// Subtracted before and added after the network (linear AE only).
    pub input_mean: Option<Vec<f64>>,
}

impl AeModel {
    /// Untrained model with seeded Glorot-uniform weights.
    pub fn init(architecture: AeArchitecture, t: usize, seed: u64) -> Result<Self> {
        if t < 1 {
            return Err(Error::Shape("input must have at least one day".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = architecture.sizes(t);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last {
                    architecture.output_activation
                } else {
                    architecture.hidden_activation
                };
                Layer::init(w[0], w[1], architecture.biases, act, &mut rng)
            })
            .collect();
        Ok(Self {
            layers,
            architecture,
            train_log: Vec::new(),
            seed,
            input_mean: None,
        })
    }

    /// Wrap explicit layers, checking that their shapes chain.
    pub fn from_layers(architecture: AeArchitecture, layers: Vec<Layer>) -> Result<Self> {
        let t = layers.first().map(Layer::fan_in).unwrap_or(0);
        let sizes = architecture.sizes(t);
        let chained = layers.len() + 1 == sizes.len()
            && layers
                .iter()
                .zip(sizes.windows(2))
                .all(|(l, w)| l.fan_in() == w[0] && l.fan_out() == w[1]);
        if !chained {
            return Err(Error::Shape("layer shapes do not match the architecture".into()));
        }
        Ok(Self {
            layers,
            architecture,
            train_log: Vec::new(),
            seed: 0,
            input_mean: None,
        })
    }

    pub fn n_days(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn tag(&self) -> String {
        let widths: Vec<String> = self.architecture.encoder_widths.iter().map(|w| w.to_string()).collect();
        format!("ae([{}],k={})", widths.join(","), self.architecture.latent_dim)
    }

    fn check_shape(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.n_days() {
            return Err(Error::Shape(format!(
                "model expects {} days, matrix has {}",
                self.n_days(),
                x.ncols()
            )));
        }
        Ok(())
    }

    fn centred(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        if let Some(mean) = &self.input_mean {
            for mut row in z.row_iter_mut() {
                for (v, m) in row.iter_mut().zip(mean) {
                    *v -= m;
                }
            }
        }
        z
    }

    /// Training objective: mean squared error over all entries plus the L2
    /// weight penalty.
    pub fn objective(&self, x: &DMatrix<f64>) -> Result<f64> {
        self.check_shape(x)?;
        let z = self.centred(x);
        Ok(net::loss_and_grad(&self.layers, &z, &z, self.architecture.l2_lambda).0)
    }

    /// Objective and its gradient for every layer.
    pub fn gradient(&self, x: &DMatrix<f64>) -> Result<(f64, Vec<LayerGrad>)> {
        self.check_shape(x)?;
        let z = self.centred(x);
        Ok(net::loss_and_grad(&self.layers, &z, &z, self.architecture.l2_lambda))
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(x)?;
        const BLOCK: usize = 1024;
        let n = x.nrows();
        let parts = par::map_range(n.div_ceil(BLOCK), |b| {
            let start = b * BLOCK;
            let rows = x.rows(start, BLOCK.min(n - start)).into_owned();
            let mut out = net::forward(&self.layers, &self.centred(&rows));
            if let Some(mean) = &self.input_mean {
                for mut row in out.row_iter_mut() {
                    for (v, m) in row.iter_mut().zip(mean) {
                        *v += m;
                    }
                }
            }
            out
        });
        let mut x_hat = DMatrix::zeros(n, x.ncols());
        for (b, part) in parts.into_iter().enumerate() {
            x_hat.rows_mut(b * BLOCK, part.nrows()).copy_from(&part);
        }
        Ok(x_hat)
    }

    pub fn reconstruct(&self, x: &DMatrix<f64>) -> Result<Reconstruction> {
        let x_hat = self.forward(x)?;
        Reconstruction::new(x, x_hat, self.tag())
    }

    /// Text export: architecture header, then for each layer its shape,
    /// weight rows and optional bias row.
    pub fn to_text(&self) -> String {
        let fmt = |v: &mut dyn Iterator<Item = f64>| v.map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
        let a = &self.architecture;
        let mut out = String::from("ae\n");
        let widths: Vec<String> = a.encoder_widths.iter().map(|w| w.to_string()).collect();
        out.push_str(&format!("encoder {}\n", widths.join(" ")));
        out.push_str(&format!("latent {}\n", a.latent_dim));
        out.push_str(&format!("hidden {}\n", a.hidden_activation.as_str()));
        out.push_str(&format!("output {}\n", a.output_activation.as_str()));
        out.push_str(&format!("lambda {:.16e}\n", a.l2_lambda));
        out.push_str(&format!("biases {}\n", u8::from(a.biases)));
        out.push_str(&format!("seed {}\n", self.seed));
        match &self.input_mean {
            Some(m) => out.push_str(&format!("mean {}\n", fmt(&mut m.iter().copied()))),
            None => out.push_str("mean\n"),
        }
        out.push_str(&format!("layers {}\n", self.layers.len()));
        for l in &self.layers {
            out.push_str(&format!("layer {} {}\n", l.fan_in(), l.fan_out()));
            for row in l.weights.row_iter() {
                out.push_str(&fmt(&mut row.iter().copied()));
                out.push('\n');
            }
            if let Some(b) = &l.bias {
                out.push_str(&fmt(&mut b.iter().copied()));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Schema(format!("autoencoder model file: {what}"));
        let mut lines = text.lines();
        if lines.next() != Some("ae") {
            return Err(bad("missing 'ae' header"));
        }
        let field = |lines: &mut std::str::Lines, name: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {name}")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(&format!("expected {name}")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number '{s}'")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad integer '{s}'")));
        let one = |v: Vec<String>, name: &str| v.into_iter().next().ok_or_else(|| bad(name));

        let encoder = field(&mut lines, "encoder")?.iter().map(|s| int(s)).collect::<Result<Vec<_>>>()?;
        let latent = int(&one(field(&mut lines, "latent")?, "latent")?)?;
        let hidden = Activation::parse(&one(field(&mut lines, "hidden")?, "hidden")?).ok_or_else(|| bad("activation"))?;
        let output = Activation::parse(&one(field(&mut lines, "output")?, "output")?).ok_or_else(|| bad("activation"))?;
        let lambda = num(&one(field(&mut lines, "lambda")?, "lambda")?)?;
        let biases = one(field(&mut lines, "biases")?, "biases")? == "1";
        let seed = one(field(&mut lines, "seed")?, "seed")?.parse::<u64>().map_err(|_| bad("seed"))?;
        let mean = field(&mut lines, "mean")?;
        let input_mean = if mean.is_empty() {
            None
        } else {
            Some(mean.iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?)
        };
        let n_layers = int(&one(field(&mut lines, "layers")?, "layers")?)?;

        let mut architecture = AeArchitecture::new(encoder, latent)?;
        architecture.hidden_activation = hidden;
        architecture.output_activation = output;
        architecture.l2_lambda = lambda;
        architecture.biases = biases;

        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let shape = field(&mut lines, "layer")?;
            if shape.len() != 2 {
                return Err(bad("layer shape"));
            }
            let (fan_in, fan_out) = (int(&shape[0])?, int(&shape[1])?);
            let row_values = |lines: &mut std::str::Lines, expect: usize| -> Result<Vec<f64>> {
                let line = lines.next().ok_or_else(|| bad("truncated layer"))?;
                let v = line.split_whitespace().map(num).collect::<Result<Vec<_>>>()?;
                if v.len() != expect {
                    return Err(bad("layer row length"));
                }
                Ok(v)
            };
            let mut data = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_in {
                data.extend(row_values(&mut lines, fan_out)?);
            }
            let bias = if biases {
                Some(nalgebra::DVector::from_vec(row_values(&mut lines, fan_out)?))
            } else {
                None
            };
            let activation = if i + 1 == n_layers { output } else { hidden };
            layers.push(Layer {
                weights: DMatrix::from_row_slice(fan_in, fan_out, &data),
                bias,
                activation,
            });
        }
        let mut model = Self::from_layers(architecture, layers)?;
        model.seed = seed;
        model.input_mean = input_mean;
        Ok(model)
    }
}

/// Train with mini-batch Adam. Deterministic for a fixed `cfg.seed`, which
/// drives both the initial weights and the batch shuffling.
pub fn train(x: &DMatrix<f64>, arch: &AeArchitecture, cfg: &TrainConfig) -> Result<AeModel> {
    let model = AeModel::init(arch.clone(), x.ncols(), cfg.seed)?;
    fit(model, x, cfg)
}

/// Continue Adam training from the given weights.
pub(crate) fn fit(mut model: AeModel, x: &DMatrix<f64>, cfg: &TrainConfig) -> Result<AeModel> {
    cfg.validate()?;
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Shape("training matrix is empty".into()));
    }
    model.check_shape(x)?;
    let data = model.centred(x);
    let l2 = model.architecture.l2_lambda;
    let n = data.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut opt = Adam::new(&model.layers, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut order: Vec<usize> = (0..n).collect();
    let full_batch = cfg.batch_size >= n;

    model.train_log.clear();
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle && !full_batch {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grads) = if full_batch {
                net::loss_and_grad(&model.layers, &data, &data, l2)
            } else {
                let batch = data.select_rows(chunk);
                net::loss_and_grad(&model.layers, &batch, &batch, l2)
            };
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "batch loss is not finite".into(),
                });
            }
            opt.update(&mut model.layers, &grads);
        }
        let loss = net::loss_and_grad(&model.layers, &data, &data, l2).0;
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "loss is not finite".into(),
            });
        }
        model.train_log.push(loss);
    }
    Ok(model)
}

/// Train `runs` independent models with seeds `cfg.seed, cfg.seed + 1, ...`
/// in parallel.
pub fn train_runs(x: &DMatrix<f64>, arch: &AeArchitecture, cfg: &TrainConfig, runs: usize) -> Result<Vec<AeModel>> {
    par::map_range(runs, |r| {
        let cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(r as u64),
            ..cfg.clone()
        };
        train(x, arch, &cfg)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::Rng;

    fn toy(n: usize, t: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, t, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn architectures() {
        let a = AeArchitecture::make(AeKind::Ae2, 16).unwrap();
        assert_eq!((a.encoder_widths.clone(), a.latent_dim, a.decoder_widths.clone()), (vec![32], 16, vec![32]));
        let a = AeArchitecture::make(AeKind::Ae1, 16).unwrap();
        assert!(a.encoder_widths.is_empty());
        assert_eq!(a.sizes(100), vec![100, 16, 100]);
        let a = AeArchitecture::make("AE-4".parse().unwrap(), 24).unwrap();
        assert_eq!(a.sizes(50), vec![50, 128, 64, 32, 24, 32, 64, 128, 50]);
        assert_eq!((a.hidden_activation, a.output_activation, a.l2_lambda), (Activation::Relu, Activation::Tanh, 0.0));
        assert!("AE-9".parse::<AeKind>().is_err());
        assert!(AeArchitecture::make(AeKind::Ae1, 0).is_err());
        assert_eq!(AeKind::Ae3.to_string(), "AE-3");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { beta1: 1.0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn zero_weights_reconstruct_zero() {
        let arch = AeArchitecture::make(AeKind::Ae2, 3).unwrap();
        let mut m = AeModel::init(arch, 5, 1).unwrap();
        for l in &mut m.layers {
            l.weights.fill(0.0);
        }
        let x = toy(4, 5, 2);
        let r = m.reconstruct(&x).unwrap();
        assert_eq!(r.x_hat, DMatrix::zeros(4, 5));
        assert_eq!(r.errors, x.abs());
    }

    #[test]
    fn identity_linear_full_width() {
        let arch = AeArchitecture::make(AeKind::Ae1, 4).unwrap().linear();
        let id = |n| Layer {
            weights: DMatrix::identity(n, n),
            bias: Some(DVector::zeros(n)),
            activation: Activation::Linear,
        };
        let m = AeModel::from_layers(arch, vec![id(4), id(4)]).unwrap();
        let x = toy(6, 4, 3);
        assert_eq!(m.reconstruct(&x).unwrap().frobenius(), 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let m = AeModel::init(AeArchitecture::make(AeKind::Ae1, 2).unwrap(), 5, 0).unwrap();
        assert!(matches!(m.reconstruct(&toy(3, 4, 0)), Err(Error::Shape(_))));
        let arch = AeArchitecture::make(AeKind::Ae2, 2).unwrap();
        assert!(AeModel::from_layers(arch, m.layers.clone()).is_err());
    }

    #[test]
    fn rank_one_linear_converges() {
        let u: Vec<f64> = (0..30).map(|i| ((i as f64) * 0.37).sin()).collect();
        let v: Vec<f64> = (0..8).map(|j| ((j as f64) * 0.9 + 0.3).cos()).collect();
        let x = DMatrix::from_fn(30, 8, |i, j| u[i] * v[j] * 0.8);
        let arch = AeArchitecture::make(AeKind::Ae1, 1).unwrap().linear();
        let cfg = TrainConfig { epochs: 3000, learning_rate: 5e-3, seed: 7, ..Default::default() };
        let m = train(&x, &arch, &cfg).unwrap();
        assert!(*m.train_log.last().unwrap() < 1e-3, "{:?}", m.train_log.last());
    }

    #[test]
    fn deterministic_and_loss_decreases() {
        let x = toy(40, 6, 5);
        let arch = AeArchitecture::make(AeKind::Ae2, 2).unwrap();
        let cfg = TrainConfig { epochs: 30, batch_size: 16, seed: 3, ..Default::default() };
        let a = train(&x, &arch, &cfg).unwrap();
        let b = train(&x, &arch, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_log.len(), 30);
        let initial = AeModel::init(arch, 6, 3).unwrap().objective(&x).unwrap();
        assert!(*a.train_log.last().unwrap() < initial);
        let r = a.reconstruct(&x).unwrap();
        assert!(r.x_hat.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn divergence_names_epoch() {
        let mut x = toy(5, 3, 1);
        x[(0, 0)] = f64::NAN;
        let arch = AeArchitecture::make(AeKind::Ae1, 1).unwrap();
        match train(&x, &arch, &TrainConfig::default()) {
            Err(Error::Training { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn text_round_trip() {
        let arch = AeArchitecture::make(AeKind::Ae3, 3).unwrap();
        let m = AeModel::init(arch, 7, 11).unwrap();
        let back = AeModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(AeModel::from_text("ae\nencoder\n").is_err());
    }

    #[test]
    fn repeated_runs_use_consecutive_seeds() {
        let x = toy(10, 4, 2);
        let arch = AeArchitecture::make(AeKind::Ae1, 2).unwrap();
        let cfg = TrainConfig { epochs: 2, seed: 40, ..Default::default() };
        let runs = train_runs(&x, &arch, &cfg, 3).unwrap();
        assert_eq!(runs.iter().map(|m| m.seed).collect::<Vec<_>>(), vec![40, 41, 42]);
        assert_eq!(runs[1], train(&x, &arch, &TrainConfig { seed: 41, ..cfg }).unwrap());
    }
}
