//! Fixed convolutional real/synthetic classifier for 48×64×3 images.
//!
//! Four 5×5 stride-2 convolutions (zero padding 2, channels 3→8→16→32→64),
//! each followed by a leaky ReLU with slope 0.2, then one affine unit over
//! the flattened 3×4×64 map and a sigmoid. Output is the probability that
//! the input is a real underwater image.
//!
//! All weights live in one flat vector so the optimizer state, checkpoints
//! and finite-difference checks can treat them uniformly. Activations are
//! stored height-major, channel-last, matching [`LinearImage`] data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::LinearImage;
use crate::optim::Adam;

pub const INPUT_HEIGHT: usize = 48;
pub const INPUT_WIDTH: usize = 64;
pub const KERNEL: usize = 5;
const PAD: usize = 2;
const STRIDE: usize = 2;
pub const LEAK: f64 = 0.2;

/// (input channels, output channels) per convolution.
pub const CONV_CHANNELS: [(usize, usize); 4] = [(3, 8), (8, 16), (16, 32), (32, 64)];

#[derive(Debug, Clone, Copy)]
struct ConvLayout {
    cin: usize,
    cout: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    w_off: usize,
    b_off: usize,
}

impl ConvLayout {
    fn weight_index(&self, o: usize, ky: usize, kx: usize, i: usize) -> usize {
        self.w_off + ((o * KERNEL + ky) * KERNEL + kx) * self.cin + i
    }
}

#[derive(Debug, Clone)]
struct Layout {
    convs: [ConvLayout; 4],
    dense_w: usize,
    dense_len: usize,
    dense_b: usize,
    total: usize,
}

fn layout() -> Layout {
    let mut off = 0;
    let (mut h, mut w) = (INPUT_HEIGHT, INPUT_WIDTH);
    let convs = CONV_CHANNELS.map(|(cin, cout)| {
        let out_h = h.div_ceil(STRIDE);
        let out_w = w.div_ceil(STRIDE);
        let w_off = off;
        off += cout * KERNEL * KERNEL * cin;
        let b_off = off;
        off += cout;
        let l = ConvLayout {
            cin,
            cout,
            in_h: h,
            in_w: w,
            out_h,
            out_w,
            w_off,
            b_off,
        };
        h = out_h;
        w = out_w;
        l
    });
    let last = convs[3];
    let dense_len = last.out_h * last.out_w * last.cout;
    let dense_w = off;
    off += dense_len;
    let dense_b = off;
    off += 1;
    Layout {
        convs,
        dense_w,
        dense_len,
        dense_b,
        total: off,
    }
}

#[inline]
fn lrelu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAK * z
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Classifier weights and their optimizer moments.
#[derive(Debug, Clone)]
pub struct Discriminator {
    params: Vec<f64>,
    pub(crate) adam: Adam,
    layout: Layout,
}

impl PartialEq for Discriminator {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.adam == other.adam
    }
}

/// Per-layer pre-activations kept for the reverse pass.
struct Trace {
    /// Input of each convolution (the image, then post-activations).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each convolution.
    pre: Vec<Vec<f64>>,
    /// Flattened final post-activation.
    features: Vec<f64>,
    logit: f64,
}

impl Discriminator {
    /// Zero biases, weights uniform in ±sqrt(1/fan_in).
    pub fn new(seed: u64) -> Self {
        let layout = layout();
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &layout.convs {
            let bound = (1.0 / (KERNEL * KERNEL * l.cin) as f64).sqrt();
            for p in &mut params[l.w_off..l.b_off] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        let bound = (1.0 / layout.dense_len as f64).sqrt();
        for p in &mut params[layout.dense_w..layout.dense_b] {
            *p = rng.gen_range(-bound..bound);
        }
        Self {
            adam: Adam::new(layout.total),
            params,
            layout,
        }
    }

    /// All weights and biases zero.
    pub fn zeros() -> Self {
        let layout = layout();
        Self {
            params: vec![0.0; layout.total],
            adam: Adam::new(layout.total),
            layout,
        }
    }

    /// Rebuilds from a flat parameter vector with fresh optimizer state.
    pub fn from_params(params: Vec<f64>) -> Result<Self> {
        let layout = layout();
        if params.len() != layout.total {
            return Err(Error::invalid(
                "discriminator",
                format!("expected {} weights, got {}", layout.total, params.len()),
            ));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("discriminator", "non-finite weight"));
        }
        Ok(Self {
            adam: Adam::new(layout.total),
            params,
            layout,
        })
    }

    pub fn num_params() -> usize {
        layout().total
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Index of convolution weight `(out, ky, kx, in)` of `layer` in
    /// [`Self::params`].
    pub fn conv_weight_index(&self, layer: usize, o: usize, ky: usize, kx: usize, i: usize) -> usize {
        self.layout.convs[layer].weight_index(o, ky, kx, i)
    }

    pub fn conv_bias_index(&self, layer: usize, o: usize) -> usize {
        self.layout.convs[layer].b_off + o
    }

    /// Index of the affine weight for feature `(y, x, channel)` of the last
    /// convolution output.
    pub fn dense_weight_index(&self, y: usize, x: usize, ch: usize) -> usize {
        let l = self.layout.convs[3];
        self.layout.dense_w + (y * l.out_w + x) * l.cout + ch
    }

    pub fn dense_bias_index(&self) -> usize {
        self.layout.dense_b
    }

    pub fn step_count(&self) -> u64 {
        self.adam.t
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                stage: "discriminator update",
                detail: format!("weight {i} became {}", self.params[i]),
            });
        }
        Ok(())
    }

    fn check_input(img: &LinearImage) -> Result<()> {
        if img.width() != INPUT_WIDTH || img.height() != INPUT_HEIGHT {
            return Err(Error::DimensionMismatch {
                what: "discriminator input",
                expected_w: INPUT_WIDTH,
                expected_h: INPUT_HEIGHT,
                actual_w: img.width(),
                actual_h: img.height(),
            });
        }
        Ok(())
    }

    fn forward_trace(&self, img: &LinearImage) -> Trace {
        let p = &self.params;
        let mut inputs = Vec::with_capacity(4);
        let mut pre = Vec::with_capacity(4);
        let mut x = img.as_slice().to_vec();
        for l in &self.layout.convs {
            let z = conv_forward(l, &p[l.w_off..l.b_off], &p[l.b_off..l.b_off + l.cout], &x);
            let a: Vec<f64> = z.iter().map(|&v| lrelu(v)).collect();
            inputs.push(std::mem::replace(&mut x, a));
            pre.push(z);
        }
        let dw = &p[self.layout.dense_w..self.layout.dense_b];
        let logit = p[self.layout.dense_b] + dw.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
        Trace {
            inputs,
            pre,
            features: x,
            logit,
        }
    }

    /// Pre-sigmoid score.
    pub fn logit(&self, img: &LinearImage) -> Result<f64> {
        Self::check_input(img)?;
        Ok(self.forward_trace(img).logit)
    }

    /// Reverse pass for a given `dL/dlogit`. Returns the logit, the weight
    /// gradient and, when requested, the gradient with respect to the input
    /// image.
    pub(crate) fn backward(
        &self,
        img: &LinearImage,
        dlogit: impl FnOnce(f64) -> f64,
        want_input_grad: bool,
    ) -> (f64, Vec<f64>, Option<Vec<f64>>) {
        let tr = self.forward_trace(img);
        let g = dlogit(tr.logit);
        let lay = &self.layout;
        let p = &self.params;
        let mut grad = vec![0.0; lay.total];
        for (j, f) in tr.features.iter().enumerate() {
            grad[lay.dense_w + j] = g * f;
        }
        grad[lay.dense_b] = g;
        let mut dact: Vec<f64> = p[lay.dense_w..lay.dense_b].iter().map(|w| g * w).collect();
        let mut input_grad = None;
        for li in (0..4).rev() {
            let l = &lay.convs[li];
            let dz: Vec<f64> = dact
                .iter()
                .zip(&tr.pre[li])
                .map(|(d, &z)| if z > 0.0 { *d } else { LEAK * d })
                .collect();
            let need_dx = li > 0 || want_input_grad;
            let (gw, gb) = {
                let (head, tail) = grad.split_at_mut(l.b_off);
                (&mut head[l.w_off..], &mut tail[..l.cout])
            };
            let dx = conv_backward(l, &p[l.w_off..l.b_off], &tr.inputs[li], &dz, gw, gb, need_dx);
            if li == 0 {
                input_grad = dx;
            } else {
                dact = dx.expect("hidden layers always propagate");
            }
        }
        (tr.logit, grad, input_grad)
    }
}

fn conv_forward(l: &ConvLayout, w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; l.out_h * l.out_w * l.cout];
    for oy in 0..l.out_h {
        for ox in 0..l.out_w {
            let o_base = (oy * l.out_w + ox) * l.cout;
            out[o_base..o_base + l.cout].copy_from_slice(b);
            for ky in 0..KERNEL {
                let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                if iy < 0 || iy >= l.in_h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                    if ix < 0 || ix >= l.in_w as isize {
                        continue;
                    }
                    let i_base = (iy as usize * l.in_w + ix as usize) * l.cin;
                    let xin = &x[i_base..i_base + l.cin];
                    for o in 0..l.cout {
                        let wk = &w[((o * KERNEL + ky) * KERNEL + kx) * l.cin..][..l.cin];
                        out[o_base + o] += wk.iter().zip(xin).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(
    l: &ConvLayout,
    w: &[f64],
    x: &[f64],
    dz: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let mut dx = need_dx.then(|| vec![0.0; l.in_h * l.in_w * l.cin]);
    for oy in 0..l.out_h {
        for ox in 0..l.out_w {
            let o_base = (oy * l.out_w + ox) * l.cout;
            let dzo = &dz[o_base..o_base + l.cout];
            for (o, d) in dzo.iter().enumerate() {
                gb[o] += d;
            }
            for ky in 0..KERNEL {
                let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                if iy < 0 || iy >= l.in_h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                    if ix < 0 || ix >= l.in_w as isize {
                        continue;
                    }
                    let i_base = (iy as usize * l.in_w + ix as usize) * l.cin;
                    let xin = &x[i_base..i_base + l.cin];
                    for (o, &d) in dzo.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let k_off = ((o * KERNEL + ky) * KERNEL + kx) * l.cin;
                        for (g, xi) in gw[k_off..k_off + l.cin].iter_mut().zip(xin) {
                            *g += d * xi;
                        }
                        if let Some(dx) = dx.as_mut() {
                            let dxi = &mut dx[i_base..i_base + l.cin];
                            for (g, wi) in dxi.iter_mut().zip(&w[k_off..k_off + l.cin]) {
                                *g += d * wi;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Probability that `img` is a real underwater image, strictly inside (0,1).
pub fn disc_forward(img: &LinearImage, d: &Discriminator) -> Result<f64> {
    let z = d.logit(img)?;
    Ok(sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}
