//! Encoders mapping feature maps to latent vectors, a projection head for
//! the contrastive embedding z, and a linear classifier head.

mod attention;
mod conv_net;
mod layers;
mod param;

pub use param::{Param, Visit};

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::FeatureMap;
use crate::error::{Error, Result};
use crate::rngutil;

use attention::AttentionEncoder;
use conv_net::ConvEncoder;
use layers::{Linear, Relu};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    #[default]
    ConvResidual,
    Attention,
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv_residual" | "conv" => Ok(Arch::ConvResidual),
            "attention" => Ok(Arch::Attention),
            other => Err(Error::Config(format!("unknown encoder arch {other:?}"))),
        }
    }
}

/// Encoder hyperparameters. `width` is the stem channel count for the conv
/// encoder and the embedding dimension for the attention encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub arch: Arch,
    pub width: usize,
    pub depth: usize,
    pub latent_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            arch: Arch::ConvResidual,
            width: 16,
            depth: 3,
            latent_dim: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 || self.latent_dim == 0 {
            return Err(Error::Config(
                "encoder width, depth and latent_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

enum Encoder {
    Conv(ConvEncoder),
    Attention(AttentionEncoder),
}

impl Encoder {
    fn forward(&self, x: &Array4<f64>) -> Array2<f64> {
        match self {
            Encoder::Conv(e) => e.forward(x),
            Encoder::Attention(e) => e.forward(x),
        }
    }

    fn forward_t(&mut self, x: &Array4<f64>) -> Array2<f64> {
        match self {
            Encoder::Conv(e) => e.forward_t(x),
            Encoder::Attention(e) => e.forward_t(x),
        }
    }

    fn backward(&mut self, dy: &Array2<f64>) -> Array4<f64> {
        match self {
            Encoder::Conv(e) => e.backward(dy),
            Encoder::Attention(e) => e.backward(dy),
        }
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        match self {
            Encoder::Conv(e) => e.visit(f),
            Encoder::Attention(e) => e.visit(f),
        }
    }
}

/// Two-layer perceptron producing the contrastive embedding z. The output
/// is not pre-normalized; the loss normalizes inside its similarity.
struct ProjectionHead {
    fc1: Linear,
    relu: Relu,
    fc2: Linear,
}

impl ProjectionHead {
    fn new(latent_dim: usize, proj_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            fc1: Linear::new("proj.fc1", latent_dim, latent_dim, rng),
            relu: Relu::default(),
            fc2: Linear::new_head("proj.fc2", latent_dim, proj_dim, rng),
        }
    }

    fn forward(&self, h: &Array2<f64>) -> Array2<f64> {
        self.fc2.forward(&self.relu.forward(&self.fc1.forward(h)))
    }

    fn forward_t(&mut self, h: &Array2<f64>) -> Array2<f64> {
        self.fc2
            .forward_t(&self.relu.forward_t(&self.fc1.forward_t(h)))
    }

    fn backward(&mut self, dz: &Array2<f64>) -> Array2<f64> {
        self.fc1
            .backward(&self.relu.backward(&self.fc2.backward(dz)))
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.fc1.visit(f);
        self.fc2.visit(f);
    }
}

/// Outputs of a cached training forward pass.
pub struct TrainForward {
    pub h: Array2<f64>,
    pub z: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Encoder + projection head + classifier with consistent shapes.
pub struct ModelBundle {
    pub encoder_cfg: EncoderConfig,
    pub n_classes: usize,
    pub proj_dim: usize,
    pub input_shape: (usize, usize),
    encoder: Encoder,
    projection: ProjectionHead,
    classifier: Linear,
}

impl ModelBundle {
    pub fn new(
        cfg: &EncoderConfig,
        n_classes: usize,
        proj_dim: usize,
        input_shape: (usize, usize),
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if n_classes < 2 {
            return Err(Error::Model("need at least two classes".into()));
        }
        if proj_dim == 0 {
            return Err(Error::Model("proj_dim must be positive".into()));
        }
        let mut rng = rngutil::rng_from(&[seed, 0x6d6f64656c]);
        let encoder = match cfg.arch {
            Arch::ConvResidual => {
                Encoder::Conv(ConvEncoder::new(cfg.width, cfg.depth, cfg.latent_dim, &mut rng))
            }
            Arch::Attention => Encoder::Attention(AttentionEncoder::new(
                cfg.width,
                cfg.depth,
                cfg.latent_dim,
                input_shape.1,
                &mut rng,
            )),
        };
        let projection = ProjectionHead::new(cfg.latent_dim, proj_dim, &mut rng);
        let classifier = Linear::new_head("cls", cfg.latent_dim, n_classes, &mut rng);
        Ok(Self {
            encoder_cfg: cfg.clone(),
            n_classes,
            proj_dim,
            input_shape,
            encoder,
            projection,
            classifier,
        })
    }

    /// Stack feature maps into the (n, 1, frames, mels) input tensor,
    /// enforcing the expected shape.
    pub fn batch_tensor(&self, feats: &[FeatureMap]) -> Result<Array4<f64>> {
        if feats.is_empty() {
            return Err(Error::Model("empty feature batch".into()));
        }
        let (frames, mels) = self.input_shape;
        let mut x = Array4::zeros((feats.len(), 1, frames, mels));
        for (i, fm) in feats.iter().enumerate() {
            if fm.frames() != frames || fm.mels() != mels {
                return Err(Error::Model(format!(
                    "feature map {i} has shape ({}, {}), expected ({frames}, {mels})",
                    fm.frames(),
                    fm.mels()
                )));
            }
            x.slice_mut(ndarray::s![i, 0, .., ..]).assign(&fm.values);
        }
        Ok(x)
    }

    /// Inference-mode latent vectors, deterministic and side-effect free.
    pub fn encode(&self, feats: &[FeatureMap]) -> Result<Array2<f64>> {
        Ok(self.encoder.forward(&self.batch_tensor(feats)?))
    }

    /// Contrastive embeddings from latents.
    pub fn project(&self, h: &Array2<f64>) -> Array2<f64> {
        self.projection.forward(h)
    }

    /// Class logits from latents.
    pub fn classify(&self, h: &Array2<f64>) -> Array2<f64> {
        self.classifier.forward(h)
    }

    /// Caching forward pass for training.
    pub fn forward_t(&mut self, x: &Array4<f64>) -> TrainForward {
        let h = self.encoder.forward_t(x);
        let z = self.projection.forward_t(&h);
        let logits = self.classifier.forward_t(&h);
        TrainForward { h, z, logits }
    }

    /// Backward pass from loss gradients w.r.t. z and the logits.
    pub fn backward(&mut self, dz: &Array2<f64>, dlogits: &Array2<f64>) {
        let dh = self.projection.backward(dz) + self.classifier.backward(dlogits);
        let _ = self.encoder.backward(&dh);
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.encoder.visit(f);
        self.projection.visit(f);
        self.classifier.visit(f);
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }
}
