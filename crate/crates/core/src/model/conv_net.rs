//! Compact residual convolutional encoder.
//!
//! stem conv (stride 2) -> `depth` residual stages, each downsampling by 2
//! and doubling channels -> global average pool -> linear to the latent.

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use super::layers::{relu4, relu4_mask, ChannelNorm, Conv2d, GlobalAvgPool, Linear, SampleNorm};
use super::param::{Param, Visit};

struct ResBlock {
    conv1: Conv2d,
    norm1: ChannelNorm,
    conv2: Conv2d,
    norm2: ChannelNorm,
    skip_conv: Conv2d,
    skip_norm: ChannelNorm,
    mask1: Option<Array4<f64>>,
    mask_out: Option<Array4<f64>>,
}

impl ResBlock {
    fn new(name: &str, cin: usize, cout: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), cin, cout, 3, stride, 1, rng),
            norm1: ChannelNorm::new(&format!("{name}.norm1"), cout),
            conv2: Conv2d::new(&format!("{name}.conv2"), cout, cout, 3, 1, 1, rng),
            norm2: ChannelNorm::new(&format!("{name}.norm2"), cout),
            skip_conv: Conv2d::new(&format!("{name}.skip"), cin, cout, 1, stride, 0, rng),
            skip_norm: ChannelNorm::new(&format!("{name}.skip_norm"), cout),
            mask1: None,
            mask_out: None,
        }
    }

    fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let main = self.norm1.forward(&self.conv1.forward(x));
        let main = self.norm2.forward(&self.conv2.forward(&relu4(&main)));
        let skip = self.skip_norm.forward(&self.skip_conv.forward(x));
        relu4(&(main + skip))
    }

    fn forward_t(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let pre1 = self.norm1.forward_t(&self.conv1.forward_t(x));
        self.mask1 = Some(relu4_mask(&pre1));
        let main = self.norm2.forward_t(&self.conv2.forward_t(&relu4(&pre1)));
        let skip = self.skip_norm.forward_t(&self.skip_conv.forward_t(x));
        let pre_out = main + skip;
        self.mask_out = Some(relu4_mask(&pre_out));
        relu4(&pre_out)
    }

    fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let mask_out = self.mask_out.take().expect("block backward without forward_t");
        let dpre = dy * &mask_out;
        let dskip = self.skip_conv.backward(&self.skip_norm.backward(&dpre));
        let dmain = self.conv2.backward(&self.norm2.backward(&dpre));
        let mask1 = self.mask1.take().unwrap();
        let dmain = self.conv1.backward(&self.norm1.backward(&(dmain * &mask1)));
        dmain + dskip
    }
}

impl Visit for ResBlock {
    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv1.visit(f);
        self.norm1.visit(f);
        self.conv2.visit(f);
        self.norm2.visit(f);
        self.skip_conv.visit(f);
        self.skip_norm.visit(f);
    }
}

pub struct ConvEncoder {
    input_norm: SampleNorm,
    stem: Conv2d,
    stem_norm: ChannelNorm,
    stem_mask: Option<Array4<f64>>,
    blocks: Vec<ResBlock>,
    pool: GlobalAvgPool,
    head: Linear,
}

impl ConvEncoder {
    pub fn new(width: usize, depth: usize, latent_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let stem = Conv2d::new("encoder.stem", 1, width, 3, 2, 1, rng);
        let mut blocks = Vec::with_capacity(depth);
        let mut channels = width;
        for i in 0..depth {
            let cout = channels * 2;
            blocks.push(ResBlock::new(
                &format!("encoder.block{i}"),
                channels,
                cout,
                2,
                rng,
            ));
            channels = cout;
        }
        Self {
            input_norm: SampleNorm::default(),
            stem,
            stem_norm: ChannelNorm::new("encoder.stem_norm", width),
            stem_mask: None,
            blocks,
            pool: GlobalAvgPool::default(),
            head: Linear::new("encoder.head", channels, latent_dim, rng),
        }
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array2<f64> {
        let x = self.input_norm.forward(x);
        let mut t = relu4(&self.stem_norm.forward(&self.stem.forward(&x)));
        for block in &self.blocks {
            t = block.forward(&t);
        }
        self.head.forward(&self.pool.forward(&t))
    }

    pub fn forward_t(&mut self, x: &Array4<f64>) -> Array2<f64> {
        let x = self.input_norm.forward_t(x);
        let pre = self.stem_norm.forward_t(&self.stem.forward_t(&x));
        self.stem_mask = Some(relu4_mask(&pre));
        let mut t = relu4(&pre);
        for block in &mut self.blocks {
            t = block.forward_t(&t);
        }
        self.head.forward_t(&self.pool.forward_t(&t))
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array4<f64> {
        let mut dt = self.pool.backward(&self.head.backward(dy));
        for block in self.blocks.iter_mut().rev() {
            dt = block.backward(&dt);
        }
        let mask = self.stem_mask.take().expect("encoder backward without forward_t");
        let dstem = self.stem.backward(&self.stem_norm.backward(&(dt * &mask)));
        self.input_norm.backward(&dstem)
    }
}

impl Visit for ConvEncoder {
    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.stem.visit(f);
        self.stem_norm.visit(f);
        for block in &mut self.blocks {
            block.visit(f);
        }
        self.head.visit(f);
    }
}
