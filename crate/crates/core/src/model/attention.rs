//! Compact attention encoder: per-frame embedding plus sinusoidal
//! positions, pre-norm transformer blocks, mean pooling over time.

use ndarray::{s, Array2, Array3, Array4, Axis};
use rand_chacha::ChaCha8Rng;

use super::layers::{Linear, Relu, SampleNorm};
use super::param::{Param, Visit};

const NORM_EPS: f64 = 1e-5;

fn to_2d(x: &Array3<f64>) -> Array2<f64> {
    let (n, t, d) = x.dim();
    x.to_owned().into_shape_with_order((n * t, d)).unwrap()
}

fn to_3d(x: Array2<f64>, n: usize, t: usize) -> Array3<f64> {
    let d = x.ncols();
    x.into_shape_with_order((n, t, d)).unwrap()
}

/// Layer normalization over the embedding dimension with learned affine.
struct LayerNorm {
    gamma: Param,
    beta: Param,
    cache: Option<(Array3<f64>, Array2<f64>)>, // (xhat, inv_std)
}

impl LayerNorm {
    fn new(name: &str, dim: usize) -> Self {
        Self {
            gamma: Param::ones(format!("{name}.gamma"), &[dim]),
            beta: Param::zeros(format!("{name}.beta"), &[dim]),
            cache: None,
        }
    }

    fn stats(x: &Array3<f64>) -> (Array3<f64>, Array2<f64>) {
        let (n, t, d) = x.dim();
        let m = d as f64;
        let mut xhat = x.clone();
        let mut inv_std = Array2::zeros((n, t));
        for i in 0..n {
            for j in 0..t {
                let mut row = xhat.slice_mut(s![i, j, ..]);
                let mean = row.sum() / m;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
                let inv = 1.0 / (var + NORM_EPS).sqrt();
                row.mapv_inplace(|v| (v - mean) * inv);
                inv_std[[i, j]] = inv;
            }
        }
        (xhat, inv_std)
    }

    fn affine(&self, xhat: &Array3<f64>) -> Array3<f64> {
        let d = xhat.dim().2;
        let mut y = xhat.clone();
        for k in 0..d {
            let g = self.gamma.value[[k]];
            let b = self.beta.value[[k]];
            y.slice_mut(s![.., .., k]).mapv_inplace(|v| v * g + b);
        }
        y
    }

    fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        self.affine(&Self::stats(x).0)
    }

    fn forward_t(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (xhat, inv_std) = Self::stats(x);
        let y = self.affine(&xhat);
        self.cache = Some((xhat, inv_std));
        y
    }

    fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let (xhat, inv_std) = self.cache.take().expect("ln backward without forward_t");
        let (n, t, d) = dy.dim();
        let m = d as f64;
        let mut dx = Array3::zeros((n, t, d));
        for k in 0..d {
            let dyk = dy.slice(s![.., .., k]);
            let xhk = xhat.slice(s![.., .., k]);
            self.gamma.grad[[k]] += (&dyk * &xhk).sum();
            self.beta.grad[[k]] += dyk.sum();
        }
        for i in 0..n {
            for j in 0..t {
                let dyr = dy.slice(s![i, j, ..]);
                let xhr = xhat.slice(s![i, j, ..]);
                let dxhat: Vec<f64> = dyr
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * self.gamma.value[[k]])
                    .collect();
                let mean_dxhat: f64 = dxhat.iter().sum::<f64>() / m;
                let mean_dxhat_xhat: f64 =
                    dxhat.iter().zip(xhr.iter()).map(|(a, b)| a * b).sum::<f64>() / m;
                let inv = inv_std[[i, j]];
                for k in 0..d {
                    dx[[i, j, k]] = inv * (dxhat[k] - mean_dxhat - xhr[k] * mean_dxhat_xhat);
                }
            }
        }
        dx
    }
}

impl Visit for LayerNorm {
    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

/// Standard scaled-dot-product multi-head self-attention.
struct MultiHeadAttention {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    heads: usize,
    cache: Option<AttnCache>,
}

struct AttnCache {
    q: Array3<f64>,
    k: Array3<f64>,
    v: Array3<f64>,
    attn: Array4<f64>, // (n, heads, t, t)
}

impl MultiHeadAttention {
    fn new(name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(dim % heads == 0, "dim must divide into heads");
        Self {
            wq: Linear::new_head(&format!("{name}.wq"), dim, dim, rng),
            wk: Linear::new_head(&format!("{name}.wk"), dim, dim, rng),
            wv: Linear::new_head(&format!("{name}.wv"), dim, dim, rng),
            wo: Linear::new_head(&format!("{name}.wo"), dim, dim, rng),
            heads,
            cache: None,
        }
    }

    fn attend(
        &self,
        q: &Array3<f64>,
        k: &Array3<f64>,
        v: &Array3<f64>,
    ) -> (Array3<f64>, Array4<f64>) {
        let (n, t, d) = q.dim();
        let dk = d / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut out = Array3::zeros((n, t, d));
        let mut attn = Array4::zeros((n, self.heads, t, t));
        for i in 0..n {
            for h in 0..self.heads {
                let cols = h * dk..(h + 1) * dk;
                let qh = q.slice(s![i, .., cols.clone()]);
                let kh = k.slice(s![i, .., cols.clone()]);
                let vh = v.slice(s![i, .., cols.clone()]);
                let mut scores = qh.dot(&kh.t());
                scores.mapv_inplace(|x| x * scale);
                for mut row in scores.rows_mut() {
                    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|x| (x - mx).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|x| x / sum);
                }
                out.slice_mut(s![i, .., cols]).assign(&scores.dot(&vh));
                attn.slice_mut(s![i, h, .., ..]).assign(&scores);
            }
        }
        (out, attn)
    }

    fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (n, t, _) = x.dim();
        let x2 = to_2d(x);
        let q = to_3d(self.wq.forward(&x2), n, t);
        let k = to_3d(self.wk.forward(&x2), n, t);
        let v = to_3d(self.wv.forward(&x2), n, t);
        let (mixed, _) = self.attend(&q, &k, &v);
        to_3d(self.wo.forward(&to_2d(&mixed)), n, t)
    }

    fn forward_t(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (n, t, _) = x.dim();
        let x2 = to_2d(x);
        let q = to_3d(self.wq.forward_t(&x2), n, t);
        let k = to_3d(self.wk.forward_t(&x2), n, t);
        let v = to_3d(self.wv.forward_t(&x2), n, t);
        let (mixed, attn) = self.attend(&q, &k, &v);
        let y = to_3d(self.wo.forward_t(&to_2d(&mixed)), n, t);
        self.cache = Some(AttnCache { q, k, v, attn });
        y
    }

    fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let cache = self.cache.take().expect("attention backward without forward_t");
        let (n, t, d) = dy.dim();
        let dk = d / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();

        let dmixed = to_3d(self.wo.backward(&to_2d(dy)), n, t);
        let mut dq = Array3::zeros((n, t, d));
        let mut dkk = Array3::zeros((n, t, d));
        let mut dv = Array3::zeros((n, t, d));
        for i in 0..n {
            for h in 0..self.heads {
                let cols = h * dk..(h + 1) * dk;
                let dout = dmixed.slice(s![i, .., cols.clone()]);
                let a = cache.attn.slice(s![i, h, .., ..]);
                let qh = cache.q.slice(s![i, .., cols.clone()]);
                let kh = cache.k.slice(s![i, .., cols.clone()]);
                let vh = cache.v.slice(s![i, .., cols.clone()]);

                let da = dout.dot(&vh.t()); // (t, t)
                dv.slice_mut(s![i, .., cols.clone()]).assign(&a.t().dot(&dout));

                // Softmax rows: ds = a * (da - rowsum(da * a)).
                let mut ds = Array2::zeros((t, t));
                for r in 0..t {
                    let dot: f64 = (0..t).map(|c| da[[r, c]] * a[[r, c]]).sum();
                    for c in 0..t {
                        ds[[r, c]] = a[[r, c]] * (da[[r, c]] - dot) * scale;
                    }
                }
                dq.slice_mut(s![i, .., cols.clone()]).assign(&ds.dot(&kh));
                dkk.slice_mut(s![i, .., cols]).assign(&ds.t().dot(&qh));
            }
        }
        let dx = self.wq.backward(&to_2d(&dq))
            + self.wk.backward(&to_2d(&dkk))
            + self.wv.backward(&to_2d(&dv));
        to_3d(dx, n, t)
    }
}

impl Visit for MultiHeadAttention {
    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.wq.visit(f);
        self.wk.visit(f);
        self.wv.visit(f);
        self.wo.visit(f);
    }
}

/// Pre-norm transformer block with a 2x MLP.
struct AttnBlock {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    fc1: Linear,
    relu: Relu,
    fc2: Linear,
}

impl AttnBlock {
    fn new(name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            ln1: LayerNorm::new(&format!("{name}.ln1"), dim),
            attn: MultiHeadAttention::new(&format!("{name}.attn"), dim, heads, rng),
            ln2: LayerNorm::new(&format!("{name}.ln2"), dim),
            fc1: Linear::new(&format!("{name}.fc1"), dim, dim * 2, rng),
            relu: Relu::default(),
            fc2: Linear::new(&format!("{name}.fc2"), dim * 2, dim, rng),
        }
    }

    fn mlp(&self, x2: &Array2<f64>) -> Array2<f64> {
        self.fc2.forward(&self.relu.forward(&self.fc1.forward(x2)))
    }

    fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (n, t, _) = x.dim();
        let x1 = x + &self.attn.forward(&self.ln1.forward(x));
        let m = to_3d(self.mlp(&to_2d(&self.ln2.forward(&x1))), n, t);
        x1 + m
    }

    fn forward_t(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (n, t, _) = x.dim();
        let x1 = x + &self.attn.forward_t(&self.ln1.forward_t(x));
        let h = self.ln2.forward_t(&x1);
        let m = self
            .fc2
            .forward_t(&self.relu.forward_t(&self.fc1.forward_t(&to_2d(&h))));
        &x1 + &to_3d(m, n, t)
    }

    fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let (n, t, _) = dy.dim();
        let dm = self.fc1.backward(&self.relu.backward(&self.fc2.backward(&to_2d(dy))));
        let dx1 = dy + &self.ln2.backward(&to_3d(dm, n, t));
        let da = self.attn.backward(&dx1);
        &dx1 + &self.ln1.backward(&da)
    }
}

impl Visit for AttnBlock {
    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.ln1.visit(f);
        self.attn.visit(f);
        self.ln2.visit(f);
        self.fc1.visit(f);
        self.fc2.visit(f);
    }
}

/// Sinusoidal position table (t, d); fixed, not learned.
fn positional(t: usize, d: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((t, d));
    for pos in 0..t {
        for k in 0..d {
            let idx = (k / 2 * 2) as f64;
            let angle = pos as f64 / 10_000f64.powf(idx / d as f64);
            pe[[pos, k]] = if k % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

pub struct AttentionEncoder {
    input_norm: SampleNorm,
    embed: Linear,
    blocks: Vec<AttnBlock>,
    final_norm: LayerNorm,
    head: Linear,
    frames: Option<usize>,
}

impl AttentionEncoder {
    pub fn new(width: usize, depth: usize, latent_dim: usize, mels: usize, rng: &mut ChaCha8Rng) -> Self {
        let heads = [4usize, 2, 1]
            .into_iter()
            .find(|h| width % h == 0)
            .unwrap_or(1);
        Self {
            input_norm: SampleNorm::default(),
            embed: Linear::new("encoder.embed", mels, width, rng),
            blocks: (0..depth)
                .map(|i| AttnBlock::new(&format!("encoder.block{i}"), width, heads, rng))
                .collect(),
            final_norm: LayerNorm::new("encoder.final_norm", width),
            head: Linear::new("encoder.head", width, latent_dim, rng),
            frames: None,
        }
    }

    /// (n, 1, frames, mels) -> (n, frames, mels)
    fn squeeze(x: &Array4<f64>) -> Array3<f64> {
        let (n, c, t, m) = x.dim();
        assert_eq!(c, 1, "attention encoder expects a single input channel");
        x.to_owned().into_shape_with_order((n, t, m)).unwrap()
    }

    fn embed_pos(&self, x: &Array3<f64>) -> Array3<f64> {
        let (n, t, _) = x.dim();
        let mut e = to_3d(self.embed.forward(&to_2d(x)), n, t);
        let pe = positional(t, e.dim().2);
        for i in 0..n {
            let mut slice = e.slice_mut(s![i, .., ..]);
            slice += &pe;
        }
        e
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array2<f64> {
        let x3 = Self::squeeze(&self.input_norm.forward(x));
        let mut t = self.embed_pos(&x3);
        for block in &self.blocks {
            t = block.forward(&t);
        }
        let t = self.final_norm.forward(&t);
        let pooled = t.mean_axis(Axis(1)).unwrap();
        self.head.forward(&pooled)
    }

    pub fn forward_t(&mut self, x: &Array4<f64>) -> Array2<f64> {
        let x3 = Self::squeeze(&self.input_norm.forward_t(x));
        let (n, frames, _) = x3.dim();
        self.frames = Some(frames);
        let e2 = self.embed.forward_t(&to_2d(&x3));
        let mut t = to_3d(e2, n, frames);
        let pe = positional(frames, t.dim().2);
        for i in 0..n {
            let mut slice = t.slice_mut(s![i, .., ..]);
            slice += &pe;
        }
        for block in &mut self.blocks {
            t = block.forward_t(&t);
        }
        let t = self.final_norm.forward_t(&t);
        let pooled = t.mean_axis(Axis(1)).unwrap();
        self.head.forward_t(&pooled)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array4<f64> {
        let frames = self.frames.take().expect("encoder backward without forward_t");
        let dpool = self.head.backward(dy);
        let (n, d) = dpool.dim();
        let mut dt = Array3::zeros((n, frames, d));
        for i in 0..n {
            for j in 0..frames {
                for k in 0..d {
                    dt[[i, j, k]] = dpool[[i, k]] / frames as f64;
                }
            }
        }
        let mut dt = self.final_norm.backward(&dt);
        for block in self.blocks.iter_mut().rev() {
            dt = block.backward(&dt);
        }
        // Positions are constant; gradient passes straight to the embedding.
        let dx2 = self.embed.backward(&to_2d(&dt));
        let (nt, m) = dx2.dim();
        let dx3 = dx2.into_shape_with_order((nt / frames, frames, m)).unwrap();
        let (nn, t, mm) = dx3.dim();
        let dx4 = dx3.into_shape_with_order((nn, 1, t, mm)).unwrap();
        self.input_norm.backward(&dx4)
    }
}

impl Visit for AttentionEncoder {
    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.embed.visit(f);
        for block in &mut self.blocks {
            block.visit(f);
        }
        self.final_norm.visit(f);
        self.head.visit(f);
    }
}
