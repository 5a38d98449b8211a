//! Building-block layers with explicit forward/backward passes.
//!
//! Every layer offers `forward` (pure, inference) and `forward_t`
//! (caches activations for `backward`). Gradients accumulate into the
//! parameters' `grad` buffers; inputs' gradients are returned.

use ndarray::{Array1, Array2, Array4, ArrayView2, ArrayView3, Axis};
use rand_chacha::ChaCha8Rng;

use super::param::{Param, Visit};

const NORM_EPS: f64 = 1e-5;

fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// Unfold (c, h, w) into a (c*k*k, oh*ow) patch matrix.
fn im2col(x: ArrayView3<f64>, k: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let oh = conv_out_dim(h, k, stride, pad);
    let ow = conv_out_dim(w, k, stride, pad);
    let mut col = Array2::zeros((c * k * k, oh * ow));
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        col[[row, oi * ow + oj]] = x[[ci, ii as usize, jj as usize]];
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add the transpose of `im2col`.
fn col2im(
    dcol: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> ndarray::Array3<f64> {
    let oh = conv_out_dim(h, k, stride, pad);
    let ow = conv_out_dim(w, k, stride, pad);
    let mut dx = ndarray::Array3::zeros((c, h, w));
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        dx[[ci, ii as usize, jj as usize]] += dcol[[row, oi * ow + oj]];
                    }
                }
            }
        }
    }
    dx
}

/// 2-D convolution, square kernel. Weights are stored flattened as
/// (cout, cin*k*k) so forward is one matmul per sample.
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cache: Option<ConvCache>,
}

struct ConvCache {
    input_hw: (usize, usize),
    cols: Vec<Array2<f64>>,
}

impl Conv2d {
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = cin * k * k;
        Self {
            w: Param::he_normal(format!("{name}.w"), &[cout, fan_in], fan_in, rng),
            b: Param::zeros(format!("{name}.b"), &[cout]),
            cin,
            cout,
            k,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out_dim(h, self.k, self.stride, self.pad),
            conv_out_dim(w, self.k, self.stride, self.pad),
        )
    }

    fn run(&self, x: &Array4<f64>, keep: Option<&mut Vec<Array2<f64>>>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.cin, "conv input channels");
        let (oh, ow) = self.out_shape(h, w);
        let w2 = self.w.value.view().into_dimensionality::<ndarray::Ix2>().unwrap();
        let mut y = Array4::zeros((n, self.cout, oh, ow));
        let mut cols = keep;
        for i in 0..n {
            let col = im2col(x.index_axis(Axis(0), i), self.k, self.stride, self.pad);
            let out = w2.dot(&col); // (cout, oh*ow)
            for co in 0..self.cout {
                let bias = self.b.value[[co]];
                for oi in 0..oh {
                    for oj in 0..ow {
                        y[[i, co, oi, oj]] = out[[co, oi * ow + oj]] + bias;
                    }
                }
            }
            if let Some(store) = cols.as_deref_mut() {
                store.push(col);
            }
        }
        y
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        self.run(x, None)
    }

    pub fn forward_t(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let mut cols = Vec::with_capacity(x.dim().0);
        let y = self.run(x, Some(&mut cols));
        self.cache = Some(ConvCache {
            input_hw: (x.dim().2, x.dim().3),
            cols,
        });
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.take().expect("conv backward without forward_t");
        let (n, cout, oh, ow) = dy.dim();
        assert_eq!(cout, self.cout);
        let (h, w) = cache.input_hw;
        let w2 = self.w.value.view().into_dimensionality::<ndarray::Ix2>().unwrap();
        let mut dw = Array2::<f64>::zeros((self.cout, self.cin * self.k * self.k));
        let mut db = Array1::<f64>::zeros(self.cout);
        let mut dx = Array4::zeros((n, self.cin, h, w));
        for i in 0..n {
            let dyi = dy
                .index_axis(Axis(0), i)
                .into_shape_with_order((cout, oh * ow))
                .unwrap()
                .to_owned();
            dw += &dyi.dot(&cache.cols[i].t());
            db += &dyi.sum_axis(Axis(1));
            let dcol = w2.t().dot(&dyi);
            let dxi = col2im(&dcol, self.cin, h, w, self.k, self.stride, self.pad);
            dx.index_axis_mut(Axis(0), i).assign(&dxi);
        }
        self.w.grad += &dw.into_dyn();
        self.b.grad += &db.into_dyn();
        dx
    }
}

impl Visit for Conv2d {
    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

/// Per-sample, per-channel normalization over the spatial extent with a
/// learned channel affine. No running statistics: training and inference
/// behave identically and outputs are independent of batch composition.
pub struct ChannelNorm {
    pub gamma: Param,
    pub beta: Param,
    channels: usize,
    cache: Option<NormCache>,
}

struct NormCache {
    xhat: Array4<f64>,
    inv_std: Array2<f64>,
}

impl ChannelNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::ones(format!("{name}.gamma"), &[channels]),
            beta: Param::zeros(format!("{name}.beta"), &[channels]),
            channels,
            cache: None,
        }
    }

    fn stats(&self, x: &Array4<f64>) -> (Array4<f64>, Array2<f64>) {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels);
        let m = (h * w) as f64;
        let mut xhat = Array4::zeros((n, c, h, w));
        let mut inv_std = Array2::zeros((n, c));
        for i in 0..n {
            for ch in 0..c {
                let plane = x.slice(ndarray::s![i, ch, .., ..]);
                let mean = plane.sum() / m;
                let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
                let inv = 1.0 / (var + NORM_EPS).sqrt();
                inv_std[[i, ch]] = inv;
                let mut out = xhat.slice_mut(ndarray::s![i, ch, .., ..]);
                out.assign(&plane.mapv(|v| (v - mean) * inv));
            }
        }
        (xhat, inv_std)
    }

    fn affine(&self, xhat: &Array4<f64>) -> Array4<f64> {
        let mut y = xhat.clone();
        for ch in 0..self.channels {
            let g = self.gamma.value[[ch]];
            let b = self.beta.value[[ch]];
            y.slice_mut(ndarray::s![.., ch, .., ..])
                .mapv_inplace(|v| v * g + b);
        }
        y
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (xhat, _) = self.stats(x);
        self.affine(&xhat)
    }

    pub fn forward_t(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (xhat, inv_std) = self.stats(x);
        let y = self.affine(&xhat);
        self.cache = Some(NormCache { xhat, inv_std });
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.take().expect("norm backward without forward_t");
        let (n, c, h, w) = dy.dim();
        let m = (h * w) as f64;
        let mut dx = Array4::zeros((n, c, h, w));
        for ch in 0..c {
            let g = self.gamma.value[[ch]];
            let mut dgamma = 0.0;
            let mut dbeta = 0.0;
            for i in 0..n {
                let dyp = dy.slice(ndarray::s![i, ch, .., ..]);
                let xh = cache.xhat.slice(ndarray::s![i, ch, .., ..]);
                let inv = cache.inv_std[[i, ch]];
                dgamma += dyp.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>();
                dbeta += dyp.sum();

                // dxhat = g * dy; dx = inv*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                let mean_dxhat = g * dyp.sum() / m;
                let mean_dxhat_xhat =
                    g * dyp.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / m;
                let mut out = dx.slice_mut(ndarray::s![i, ch, .., ..]);
                ndarray::Zip::from(&mut out).and(&dyp).and(&xh).for_each(|o, &d, &x| {
                    *o = inv * (g * d - mean_dxhat - x * mean_dxhat_xhat);
                });
            }
            self.gamma.grad[[ch]] += dgamma;
            self.beta.grad[[ch]] += dbeta;
        }
        dx
    }
}

impl Visit for ChannelNorm {
    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

/// Parameter-free per-sample standardization over the whole feature map.
/// Puts log-mel inputs on a scale the encoders can digest.
#[derive(Default)]
pub struct SampleNorm {
    cache: Option<(Array4<f64>, Vec<f64>)>,
}

impl SampleNorm {
    fn stats(x: &Array4<f64>) -> (Array4<f64>, Vec<f64>) {
        let n = x.dim().0;
        let m = (x.len() / n) as f64;
        let mut xhat = x.clone();
        let mut inv_stds = Vec::with_capacity(n);
        for i in 0..n {
            let mut plane = xhat.index_axis_mut(Axis(0), i);
            let mean = plane.sum() / m;
            let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            plane.mapv_inplace(|v| (v - mean) * inv);
            inv_stds.push(inv);
        }
        (xhat, inv_stds)
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        Self::stats(x).0
    }

    pub fn forward_t(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (xhat, inv) = Self::stats(x);
        self.cache = Some((xhat.clone(), inv));
        xhat
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let (xhat, inv_stds) = self.cache.take().expect("backward without forward_t");
        let n = dy.dim().0;
        let m = (dy.len() / n) as f64;
        let mut dx = dy.clone();
        for i in 0..n {
            let xh = xhat.index_axis(Axis(0), i);
            let dyp = dy.index_axis(Axis(0), i);
            let mean_dy = dyp.sum() / m;
            let mean_dy_xh = dyp.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / m;
            let inv = inv_stds[i];
            let mut out = dx.index_axis_mut(Axis(0), i);
            ndarray::Zip::from(&mut out).and(&dyp).and(&xh).for_each(|o, &d, &x| {
                *o = inv * (d - mean_dy - x * mean_dy_xh);
            });
        }
        dx
    }
}

/// Fully connected layer, y = x W + b.
pub struct Linear {
    pub w: Param,
    pub b: Param,
    cache: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(name: &str, din: usize, dout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Param::he_normal(format!("{name}.w"), &[din, dout], din, rng),
            b: Param::zeros(format!("{name}.b"), &[dout]),
            cache: None,
        }
    }

    /// Smaller init for output heads (no ReLU after).
    pub fn new_head(name: &str, din: usize, dout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Param::lecun_normal(format!("{name}.w"), &[din, dout], din, rng),
            b: Param::zeros(format!("{name}.b"), &[dout]),
            cache: None,
        }
    }

    fn wview(&self) -> ArrayView2<'_, f64> {
        self.w.value.view().into_dimensionality::<ndarray::Ix2>().unwrap()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.wview());
        for (j, mut col) in y.columns_mut().into_iter().enumerate() {
            col += self.b.value[[j]];
        }
        y
    }

    pub fn forward_t(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let y = self.forward(x);
        self.cache = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache.take().expect("linear backward without forward_t");
        self.w.grad += &x.t().dot(dy).into_dyn();
        self.b.grad += &dy.sum_axis(Axis(0)).into_dyn();
        dy.dot(&self.wview().t())
    }
}

impl Visit for Linear {
    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

/// Dense ReLU with cached mask.
#[derive(Default)]
pub struct Relu {
    mask: Option<Array2<f64>>,
}

impl Relu {
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.mapv(|v| v.max(0.0))
    }

    pub fn forward_t(&mut self, x: &Array2<f64>) -> Array2<f64> {
        self.mask = Some(x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
        self.forward(x)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let mask = self.mask.take().expect("relu backward without forward_t");
        dy * &mask
    }
}

pub fn relu4(x: &Array4<f64>) -> Array4<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu4_mask(x: &Array4<f64>) -> Array4<f64> {
    x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// Spatial mean pooling (n, c, h, w) -> (n, c).
#[derive(Default)]
pub struct GlobalAvgPool {
    cache: Option<(usize, usize)>,
}

impl GlobalAvgPool {
    pub fn forward(&self, x: &Array4<f64>) -> Array2<f64> {
        let (n, c, h, w) = x.dim();
        let m = (h * w) as f64;
        let mut y = Array2::zeros((n, c));
        for i in 0..n {
            for ch in 0..c {
                y[[i, ch]] = x.slice(ndarray::s![i, ch, .., ..]).sum() / m;
            }
        }
        y
    }

    pub fn forward_t(&mut self, x: &Array4<f64>) -> Array2<f64> {
        self.cache = Some((x.dim().2, x.dim().3));
        self.forward(x)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array4<f64> {
        let (h, w) = self.cache.take().expect("pool backward without forward_t");
        let (n, c) = dy.dim();
        let m = (h * w) as f64;
        let mut dx = Array4::zeros((n, c, h, w));
        for i in 0..n {
            for ch in 0..c {
                dx.slice_mut(ndarray::s![i, ch, .., ..]).fill(dy[[i, ch]] / m);
            }
        }
        dx
    }
}
