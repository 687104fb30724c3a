use super::params::{Gradient, ParamVector};
use super::spec::{Layer, LayerPlan, NetworkSpec, Shape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

fn check_input(spec: &NetworkSpec, input: &Tensor) -> Result<()> {
    let [c, h, w] = spec.input_shape();
    let ok = match input.shape() {
        [ic, ih, iw] => (*ic, *ih, *iw) == (c, h, w),
        [n] => c * h == 1 && *n == w,
        _ => false,
    };
    if !ok {
        return Err(Error::dim(format!(
            "input shape {:?} does not match network input {:?}",
            input.shape(),
            spec.input_shape()
        )));
    }
    Ok(())
}

/// Per-layer state kept for the backward pass.
enum Cache {
    /// Input of a fully connected layer, or the unfolded input of a
    /// convolution.
    Input(Vec<f64>),
    /// Pre-activation of a ReLU.
    Relu(Vec<f64>),
    /// Flat index of the winning input for each pooled output.
    Pool(Vec<usize>),
    None,
}

/// Dot product with independent partial sums so the loop pipelines.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn spatial(s: Shape) -> (usize, usize, usize) {
    match s {
        Shape::Spatial { c, h, w } => (c, h, w),
        Shape::Flat(n) => (n, 1, 1),
    }
}

/// Unfolds the receptive fields into a `(in_ch * k * k) x (ho * wo)` matrix.
fn im2col(p: &LayerPlan, x: &[f64], kernel: usize, stride: usize) -> Vec<f64> {
    let (ci, hi, wi) = spatial(p.input);
    let (_, ho, wo) = spatial(p.output);
    let np = ho * wo;
    let mut col = vec![0.0; ci * kernel * kernel * np];
    for i in 0..ci {
        let xin = &x[i * hi * wi..(i + 1) * hi * wi];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = ((i * kernel + ky) * kernel + kx) * np;
                for y in 0..ho {
                    let start = (y * stride + ky) * wi + kx;
                    let dst = &mut col[row + y * wo..row + (y + 1) * wo];
                    if stride == 1 {
                        dst.copy_from_slice(&xin[start..start + wo]);
                    } else {
                        for (xo, d) in dst.iter_mut().enumerate() {
                            *d = xin[start + xo * stride];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adds the rows of `gcol` back onto the input positions they came from.
fn col2im(p: &LayerPlan, gcol: &[f64], kernel: usize, stride: usize) -> Vec<f64> {
    let (ci, hi, wi) = spatial(p.input);
    let (_, ho, wo) = spatial(p.output);
    let np = ho * wo;
    let mut gx = vec![0.0; ci * hi * wi];
    for i in 0..ci {
        let gin = &mut gx[i * hi * wi..(i + 1) * hi * wi];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = ((i * kernel + ky) * kernel + kx) * np;
                for y in 0..ho {
                    let start = (y * stride + ky) * wi + kx;
                    let src = &gcol[row + y * wo..row + (y + 1) * wo];
                    if stride == 1 {
                        for (d, v) in gin[start..start + wo].iter_mut().zip(src) {
                            *d += v;
                        }
                    } else {
                        for (xo, v) in src.iter().enumerate() {
                            gin[start + xo * stride] += v;
                        }
                    }
                }
            }
        }
    }
    gx
}

fn conv_forward(p: &LayerPlan, params: &[f64], col: &[f64]) -> Vec<f64> {
    let (co, ho, wo) = spatial(p.output);
    let np = ho * wo;
    let kk = p.weight_len / co;
    let w = &params[p.offset..p.offset + p.weight_len];
    let b = &params[p.offset + p.weight_len..p.offset + p.param_len()];
    let mut out = vec![0.0; co * np];
    for o in 0..co {
        let plane = &mut out[o * np..(o + 1) * np];
        plane.fill(b[o]);
        for k in 0..kk {
            let wv = w[o * kk + k];
            for (d, c) in plane.iter_mut().zip(&col[k * np..(k + 1) * np]) {
                *d += wv * c;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    p: &LayerPlan,
    params: &[f64],
    col: &[f64],
    g: &[f64],
    kernel: usize,
    stride: usize,
    grad: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let (co, ho, wo) = spatial(p.output);
    let np = ho * wo;
    let kk = p.weight_len / co;
    let w = &params[p.offset..p.offset + p.weight_len];
    let (gw, gb) = grad[p.offset..p.offset + p.param_len()].split_at_mut(p.weight_len);
    let mut gcol = if need_input_grad {
        vec![0.0; kk * np]
    } else {
        Vec::new()
    };
    for o in 0..co {
        let gplane = &g[o * np..(o + 1) * np];
        gb[o] += gplane.iter().sum::<f64>();
        for k in 0..kk {
            gw[o * kk + k] += dot(gplane, &col[k * np..(k + 1) * np]);
            if need_input_grad {
                let wv = w[o * kk + k];
                for (d, gv) in gcol[k * np..(k + 1) * np].iter_mut().zip(gplane) {
                    *d += wv * gv;
                }
            }
        }
    }
    if need_input_grad {
        col2im(p, &gcol, kernel, stride)
    } else {
        Vec::new()
    }
}

fn pool_forward(p: &LayerPlan, x: &[f64], kernel: usize, stride: usize) -> (Vec<f64>, Vec<usize>) {
    let (_, hi, wi) = spatial(p.input);
    let (c, ho, wo) = spatial(p.output);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * hi * wi;
        for y in 0..ho {
            for xo in 0..wo {
                let mut best_idx = base + (y * stride) * wi + xo * stride;
                let mut best = x[best_idx];
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let idx = base + (y * stride + ky) * wi + xo * stride + kx;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    (out, arg)
}

fn fc_forward(p: &LayerPlan, params: &[f64], x: &[f64], in_dim: usize, out_dim: usize) -> Vec<f64> {
    let w = &params[p.offset..p.offset + p.weight_len];
    let b = &params[p.offset + p.weight_len..p.offset + p.param_len()];
    (0..out_dim)
        .map(|j| {
            let row = &w[j * in_dim..(j + 1) * in_dim];
            b[j] + dot(row, x)
        })
        .collect()
}

fn ensure_finite(v: &[f64], idx: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("activations of layer {idx}")))
    }
}

/// Runs every layer but the final softmax and returns the logits, plus the
/// backward caches when `keep` is set.
fn logits(
    params: &ParamVector,
    spec: &NetworkSpec,
    input: &Tensor,
    keep: bool,
) -> Result<(Vec<f64>, Vec<Cache>)> {
    params.check_spec(spec)?;
    check_input(spec, input)?;
    let params = params.as_slice();
    let mut x = input.values().to_vec();
    let mut caches = Vec::new();
    for (idx, p) in spec.plan().iter().enumerate() {
        let (next, cache) = match p.layer {
            Layer::Conv2d { kernel, stride, .. } => {
                let col = im2col(p, &x, kernel, stride);
                let out = conv_forward(p, params, &col);
                ensure_finite(&out, idx)?;
                (out, Cache::Input(col))
            }
            Layer::Relu => {
                let out = x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                (out, Cache::Relu(x))
            }
            Layer::MaxPool2d { kernel, stride } => {
                let (out, arg) = pool_forward(p, &x, kernel, stride);
                (out, Cache::Pool(arg))
            }
            Layer::Flatten => (x, Cache::None),
            Layer::FullyConnected { in_dim, out_dim } => {
                let out = fc_forward(p, params, &x, in_dim, out_dim);
                ensure_finite(&out, idx)?;
                (out, Cache::Input(x))
            }
            Layer::Softmax => break,
        };
        if keep {
            caches.push(cache);
        }
        x = next;
    }
    Ok((x, caches))
}

/// Softmax output of the network for one input.
pub fn forward(params: &ParamVector, spec: &NetworkSpec, input: &Tensor) -> Result<Vec<f64>> {
    let (z, _) = logits(params, spec, input, false)?;
    Ok(softmax(&z))
}

/// Index of the most probable class (first on ties).
pub fn predict(params: &ParamVector, spec: &NetworkSpec, input: &Tensor) -> Result<usize> {
    let (z, _) = logits(params, spec, input, false)?;
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Mean cross-entropy over the batch and its gradient.
pub fn loss_and_grad(
    params: &ParamVector,
    spec: &NetworkSpec,
    inputs: &[&Tensor],
    labels: &[usize],
) -> Result<(f64, Gradient)> {
    if inputs.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    if inputs.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let m = spec.num_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= m) {
        return Err(Error::arg(format!("label {bad} outside [0, {m})")));
    }

    let scale = 1.0 / inputs.len() as f64;
    let mut grad = vec![0.0; spec.param_count()];
    let mut loss = 0.0;
    let raw = params.as_slice();
    let plan = spec.plan();
    for (input, &label) in inputs.iter().zip(labels) {
        let (z, caches) = logits(params, spec, input, true)?;
        loss += log_sum_exp(&z) - z[label];

        let mut g: Vec<f64> = softmax(&z).into_iter().map(|p| p * scale).collect();
        g[label] -= scale;

        // The first layer's input gradient is never needed.
        for (idx, (p, cache)) in plan.iter().zip(caches.iter()).enumerate().rev() {
            let need = idx > 0;
            g = match (p.layer, cache) {
                (Layer::Conv2d { kernel, stride, .. }, Cache::Input(x)) => {
                    conv_backward(p, raw, x, &g, kernel, stride, &mut grad, need)
                }
                (Layer::FullyConnected { in_dim, out_dim }, Cache::Input(x)) => {
                    let (gw, gb) =
                        grad[p.offset..p.offset + p.param_len()].split_at_mut(p.weight_len);
                    let w = &raw[p.offset..p.offset + p.weight_len];
                    let mut gx = vec![0.0; if need { in_dim } else { 0 }];
                    for j in 0..out_dim {
                        let gj = g[j];
                        gb[j] += gj;
                        if gj == 0.0 {
                            continue;
                        }
                        let row = &mut gw[j * in_dim..(j + 1) * in_dim];
                        for (r, xv) in row.iter_mut().zip(x) {
                            *r += gj * xv;
                        }
                        if need {
                            for (gxk, wk) in gx.iter_mut().zip(&w[j * in_dim..(j + 1) * in_dim]) {
                                *gxk += gj * wk;
                            }
                        }
                    }
                    gx
                }
                (Layer::Relu, Cache::Relu(pre)) => g
                    .iter()
                    .zip(pre)
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                    .collect(),
                (Layer::MaxPool2d { .. }, Cache::Pool(arg)) => {
                    let mut gx = vec![0.0; p.input.len()];
                    for (&gv, &i) in g.iter().zip(arg) {
                        gx[i] += gv;
                    }
                    gx
                }
                (Layer::Flatten, Cache::None) => g,
                _ => unreachable!("cache does not match layer"),
            };
        }
    }
    if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("loss or gradient".into()));
    }
    Ok((loss * scale, Gradient::new(grad)))
}
