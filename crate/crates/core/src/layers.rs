//! Forward and backward passes for the closed set of layer types.
//!
//! Images are `[height, width, channels]` tensors, convolution weights are
//! `[filter_h, filter_w, in_channels, out_channels]` and fully connected
//! weights are `[in_dim, out_dim]`. No layer carries a bias.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

use crate::rng::rng_from;
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Convolution {
        filter_h: usize,
        filter_w: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        same_padding: bool,
    },
    MaxPool {
        window: usize,
        stride: usize,
        ceil_mode: bool,
    },
    AvgPool {
        window: usize,
        stride: usize,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    FullyConnected {
        in_dim: usize,
        out_dim: usize,
    },
}

impl LayerKind {
    /// Square stride-1 same-padded convolution.
    pub fn conv3x3(in_channels: usize, out_channels: usize) -> Self {
        LayerKind::Convolution {
            filter_h: 3,
            filter_w: 3,
            stride: 1,
            in_channels,
            out_channels,
            same_padding: true,
        }
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        use ShapeError::InvalidParameter as Bad;
        match *self {
            LayerKind::Convolution {
                filter_h,
                filter_w,
                stride,
                in_channels,
                out_channels,
                ..
            } => {
                if filter_h == 0 || filter_w == 0 {
                    return Err(Bad("filter extent must be at least 1"));
                }
                if stride == 0 {
                    return Err(Bad("stride must be at least 1"));
                }
                if in_channels == 0 || out_channels == 0 {
                    return Err(Bad("channel counts must be at least 1"));
                }
            }
            LayerKind::MaxPool { window, stride, .. } | LayerKind::AvgPool { window, stride } => {
                if window == 0 {
                    return Err(Bad("window must be at least 1"));
                }
                if stride == 0 {
                    return Err(Bad("stride must be at least 1"));
                }
            }
            LayerKind::Relu => {}
            LayerKind::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Bad("dropout rate must lie in [0, 1)"));
                }
            }
            LayerKind::FullyConnected { in_dim, out_dim } => {
                if in_dim == 0 || out_dim == 0 {
                    return Err(Bad("fully connected dimensions must be at least 1"));
                }
            }
        }
        Ok(())
    }

    pub fn param_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerKind::Convolution {
                filter_h,
                filter_w,
                in_channels,
                out_channels,
                ..
            } => Some(vec![filter_h, filter_w, in_channels, out_channels]),
            LayerKind::FullyConnected { in_dim, out_dim } => Some(vec![in_dim, out_dim]),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shape().map_or(0, |s| s.iter().product())
    }

    /// Number of inputs feeding each output unit, used for He initialization.
    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            LayerKind::Convolution {
                filter_h,
                filter_w,
                in_channels,
                ..
            } => Some(filter_h * filter_w * in_channels),
            LayerKind::FullyConnected { in_dim, .. } => Some(in_dim),
            _ => None,
        }
    }

    pub fn is_parameterized(&self) -> bool {
        self.param_shape().is_some()
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, ShapeError> {
        self.validate()?;
        match *self {
            LayerKind::Convolution {
                filter_h,
                filter_w,
                stride,
                in_channels,
                out_channels,
                same_padding,
            } => {
                let (h, w, c) = as_hwc(input)?;
                if c != in_channels {
                    return Err(ShapeError::Dimension {
                        axis: "input channels",
                        expected: in_channels,
                        actual: c,
                    });
                }
                let g = ConvGeometry::new(h, w, filter_h, filter_w, stride, same_padding)?;
                Ok(vec![g.out_h, g.out_w, out_channels])
            }
            LayerKind::MaxPool {
                window,
                stride,
                ceil_mode,
            } => {
                let (h, w, c) = as_hwc(input)?;
                Ok(vec![
                    pooled_extent(h, window, stride, ceil_mode)?,
                    pooled_extent(w, window, stride, ceil_mode)?,
                    c,
                ])
            }
            LayerKind::AvgPool { window, stride } => {
                let (h, w, c) = as_hwc(input)?;
                Ok(vec![
                    pooled_extent(h, window, stride, false)?,
                    pooled_extent(w, window, stride, false)?,
                    c,
                ])
            }
            LayerKind::Relu | LayerKind::Dropout { .. } => Ok(input.to_vec()),
            LayerKind::FullyConnected { in_dim, out_dim } => {
                let n: usize = input.iter().product();
                if n != in_dim {
                    return Err(ShapeError::Dimension {
                        axis: "fully connected input",
                        expected: in_dim,
                        actual: n,
                    });
                }
                Ok(vec![out_dim])
            }
        }
    }
}

fn as_hwc(shape: &[usize]) -> Result<(usize, usize, usize), ShapeError> {
    match *shape {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(ShapeError::Rank {
            expected: 3,
            actual: shape.len(),
        }),
    }
}

/// Output extent of a pooling window sweep. Ceil mode admits a final partial
/// window as long as it starts inside the input.
pub fn pooled_extent(
    extent: usize,
    window: usize,
    stride: usize,
    ceil_mode: bool,
) -> Result<usize, ShapeError> {
    if window > extent {
        return Err(ShapeError::WindowTooLarge { window, extent });
    }
    let span = extent - window;
    let mut out = if ceil_mode {
        span.div_ceil(stride) + 1
    } else {
        span / stride + 1
    };
    if ceil_mode && (out - 1) * stride >= extent {
        out -= 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    out_h: usize,
    out_w: usize,
    pad_top: usize,
    pad_left: usize,
}

impl ConvGeometry {
    fn new(
        h: usize,
        w: usize,
        fh: usize,
        fw: usize,
        stride: usize,
        same: bool,
    ) -> Result<Self, ShapeError> {
        if same {
            let out_h = h.div_ceil(stride);
            let out_w = w.div_ceil(stride);
            let pad_h = ((out_h - 1) * stride + fh).saturating_sub(h);
            let pad_w = ((out_w - 1) * stride + fw).saturating_sub(w);
            Ok(Self {
                out_h,
                out_w,
                pad_top: pad_h / 2,
                pad_left: pad_w / 2,
            })
        } else {
            if fh > h {
                return Err(ShapeError::WindowTooLarge {
                    window: fh,
                    extent: h,
                });
            }
            if fw > w {
                return Err(ShapeError::WindowTooLarge {
                    window: fw,
                    extent: w,
                });
            }
            Ok(Self {
                out_h: (h - fh) / stride + 1,
                out_w: (w - fw) / stride + 1,
                pad_top: 0,
                pad_left: 0,
            })
        }
    }

    /// Source coordinate of a filter tap, `None` when it falls in padding.
    #[inline]
    fn source(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = o * stride + k;
        if pos < pad || pos - pad >= extent {
            None
        } else {
            Some(pos - pad)
        }
    }
}

fn check_conv(
    input: &Tensor,
    kind: &LayerKind,
    weights: &Tensor,
) -> Result<(ConvGeometry, usize, usize, usize, usize), ShapeError> {
    let LayerKind::Convolution {
        filter_h,
        filter_w,
        stride,
        in_channels,
        out_channels,
        same_padding,
    } = *kind
    else {
        return Err(ShapeError::InvalidParameter("expected a convolution layer"));
    };
    kind.validate()?;
    weights.expect_shape(&[filter_h, filter_w, in_channels, out_channels])?;
    let (h, w, c) = input.hwc()?;
    if c != in_channels {
        return Err(ShapeError::Dimension {
            axis: "input channels",
            expected: in_channels,
            actual: c,
        });
    }
    let g = ConvGeometry::new(h, w, filter_h, filter_w, stride, same_padding)?;
    Ok((g, filter_h, filter_w, stride, out_channels))
}

/// Cross-correlation of an `[h, w, c_in]` image with `[fh, fw, c_in, c_out]`
/// weights.
pub fn conv2d_forward(
    input: &Tensor,
    kind: &LayerKind,
    weights: &Tensor,
) -> Result<Tensor, ShapeError> {
    let (g, fh, fw, stride, co) = check_conv(input, kind, weights)?;
    let (h, w, ci) = input.hwc()?;
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![0.0; g.out_h * g.out_w * co];
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let o = &mut out[(oy * g.out_w + ox) * co..][..co];
            for ky in 0..fh {
                let Some(iy) = ConvGeometry::source(oy, ky, stride, g.pad_top, h) else {
                    continue;
                };
                for kx in 0..fw {
                    let Some(ix) = ConvGeometry::source(ox, kx, stride, g.pad_left, w) else {
                        continue;
                    };
                    let pixel = &x[(iy * w + ix) * ci..][..ci];
                    let base = (ky * fw + kx) * ci * co;
                    for (c, &v) in pixel.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let row = &wt[base + c * co..][..co];
                        for (acc, &wv) in o.iter_mut().zip(row) {
                            *acc += v * wv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[g.out_h, g.out_w, co], out)
}

/// Returns `(input_grad, weight_grad)`.
pub fn conv2d_backward(
    input: &Tensor,
    kind: &LayerKind,
    weights: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor), ShapeError> {
    let (g, fh, fw, stride, co) = check_conv(input, kind, weights)?;
    upstream.expect_shape(&[g.out_h, g.out_w, co])?;
    let (h, w, ci) = input.hwc()?;
    let x = input.data();
    let wt = weights.data();
    let up = upstream.data();
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; wt.len()];
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let gout = &up[(oy * g.out_w + ox) * co..][..co];
            if gout.iter().all(|&v| v == 0.0) {
                continue;
            }
            for ky in 0..fh {
                let Some(iy) = ConvGeometry::source(oy, ky, stride, g.pad_top, h) else {
                    continue;
                };
                for kx in 0..fw {
                    let Some(ix) = ConvGeometry::source(ox, kx, stride, g.pad_left, w) else {
                        continue;
                    };
                    let at = (iy * w + ix) * ci;
                    let base = (ky * fw + kx) * ci * co;
                    for c in 0..ci {
                        let row = &wt[base + c * co..][..co];
                        let mut acc = 0.0;
                        for (&wv, &gv) in row.iter().zip(gout) {
                            acc += wv * gv;
                        }
                        dx[at + c] += acc;
                        let v = x[at + c];
                        if v != 0.0 {
                            let drow = &mut dw[base + c * co..][..co];
                            for (d, &gv) in drow.iter_mut().zip(gout) {
                                *d += v * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(input.shape(), dx)?,
        Tensor::from_vec(weights.shape(), dw)?,
    ))
}

/// Max pooling; also returns, per output element, the flat input index that
/// won (the first maximum in row-major window order).
pub fn max_pool_forward(
    input: &Tensor,
    window: usize,
    stride: usize,
    ceil_mode: bool,
) -> Result<(Tensor, Vec<usize>), ShapeError> {
    LayerKind::MaxPool {
        window,
        stride,
        ceil_mode,
    }
    .validate()?;
    let (h, w, c) = input.hwc()?;
    let oh = pooled_extent(h, window, stride, ceil_mode)?;
    let ow = pooled_extent(w, window, stride, ceil_mode)?;
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        let y0 = oy * stride;
        let y1 = (y0 + window).min(h);
        for ox in 0..ow {
            let x0 = ox * stride;
            let x1 = (x0 + window).min(w);
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = (y0 * w + x0) * c + ch;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let at = (iy * w + ix) * c + ch;
                        if x[at] > best {
                            best = x[at];
                            best_at = at;
                        }
                    }
                }
                out.push(x[best_at]);
                argmax.push(best_at);
            }
        }
    }
    Ok((Tensor::from_vec(&[oh, ow, c], out)?, argmax))
}

pub fn max_pool_backward(
    input_shape: &[usize],
    argmax: &[usize],
    upstream: &Tensor,
) -> Result<Tensor, ShapeError> {
    if argmax.len() != upstream.len() {
        return Err(ShapeError::DataLength {
            expected: argmax.len(),
            actual: upstream.len(),
        });
    }
    let mut dx = Tensor::zeros(input_shape)?;
    let d = dx.data_mut();
    for (&at, &g) in argmax.iter().zip(upstream.data()) {
        d[at] += g;
    }
    Ok(dx)
}

/// Average pooling over full windows only.
pub fn avg_pool_forward(input: &Tensor, window: usize, stride: usize) -> Result<Tensor, ShapeError> {
    LayerKind::AvgPool { window, stride }.validate()?;
    let (h, w, c) = input.hwc()?;
    let oh = pooled_extent(h, window, stride, false)?;
    let ow = pooled_extent(w, window, stride, false)?;
    let x = input.data();
    let norm = (window * window) as f64;
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = &mut out[(oy * ow + ox) * c..][..c];
            for iy in oy * stride..oy * stride + window {
                for ix in ox * stride..ox * stride + window {
                    for (acc, &v) in o.iter_mut().zip(&x[(iy * w + ix) * c..][..c]) {
                        *acc += v;
                    }
                }
            }
            for v in o.iter_mut() {
                *v /= norm;
            }
        }
    }
    Tensor::from_vec(&[oh, ow, c], out)
}

pub fn avg_pool_backward(
    input_shape: &[usize],
    window: usize,
    stride: usize,
    upstream: &Tensor,
) -> Result<Tensor, ShapeError> {
    let (h, w, c) = as_hwc(input_shape)?;
    let oh = pooled_extent(h, window, stride, false)?;
    let ow = pooled_extent(w, window, stride, false)?;
    upstream.expect_shape(&[oh, ow, c])?;
    let norm = (window * window) as f64;
    let up = upstream.data();
    let mut dx = vec![0.0; h * w * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let g = &up[(oy * ow + ox) * c..][..c];
            for iy in oy * stride..oy * stride + window {
                for ix in ox * stride..ox * stride + window {
                    for (d, &gv) in dx[(iy * w + ix) * c..][..c].iter_mut().zip(g) {
                        *d += gv / norm;
                    }
                }
            }
        }
    }
    Tensor::from_vec(input_shape, dx)
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    input.map(|x| if x > 0.0 { x } else { 0.0 })
}

pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor, ShapeError> {
    upstream.expect_shape(input.shape())?;
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Inverted dropout. In train mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; the returned mask marks
/// survivors. Infer mode is the identity with an all-true mask.
pub fn dropout_forward(
    input: &Tensor,
    rate: f64,
    mode: Mode,
    seed: u64,
) -> Result<(Tensor, Vec<bool>), ShapeError> {
    LayerKind::Dropout { rate }.validate()?;
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((input.clone(), vec![true; input.len()]));
    }
    let mut rng = rng_from(seed);
    let keep_scale = 1.0 / (1.0 - rate);
    let mask: Vec<bool> = (0..input.len()).map(|_| rng.gen::<f64>() >= rate).collect();
    let data = input
        .data()
        .iter()
        .zip(&mask)
        .map(|(&x, &keep)| if keep { x * keep_scale } else { 0.0 })
        .collect();
    Ok((Tensor::from_vec(input.shape(), data)?, mask))
}

pub fn dropout_backward(rate: f64, mask: &[bool], upstream: &Tensor) -> Result<Tensor, ShapeError> {
    if mask.len() != upstream.len() {
        return Err(ShapeError::DataLength {
            expected: mask.len(),
            actual: upstream.len(),
        });
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let data = upstream
        .data()
        .iter()
        .zip(mask)
        .map(|(&g, &keep)| {
            if !keep {
                0.0
            } else if rate == 0.0 {
                g
            } else {
                g * keep_scale
            }
        })
        .collect();
    Tensor::from_vec(upstream.shape(), data)
}

fn check_fc(input: &Tensor, weights: &Tensor) -> Result<(usize, usize), ShapeError> {
    if weights.rank() != 2 {
        return Err(ShapeError::Rank {
            expected: 2,
            actual: weights.rank(),
        });
    }
    let (din, dout) = (weights.shape()[0], weights.shape()[1]);
    if input.len() != din {
        return Err(ShapeError::Dimension {
            axis: "fully connected input",
            expected: din,
            actual: input.len(),
        });
    }
    Ok((din, dout))
}

/// Matrix-vector product `x^T W`; the input is flattened first.
pub fn fc_forward(input: &Tensor, weights: &Tensor) -> Result<Tensor, ShapeError> {
    let (_, dout) = check_fc(input, weights)?;
    let w = weights.data();
    let mut out = vec![0.0; dout];
    for (i, &x) in input.data().iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(&w[i * dout..][..dout]) {
            *o += x * wv;
        }
    }
    Tensor::from_vec(&[dout], out)
}

/// Returns `(input_grad, weight_grad)`; the input gradient has the input's
/// original shape.
pub fn fc_backward(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor), ShapeError> {
    let (din, dout) = check_fc(input, weights)?;
    if upstream.len() != dout {
        return Err(ShapeError::Dimension {
            axis: "fully connected output",
            expected: dout,
            actual: upstream.len(),
        });
    }
    let w = weights.data();
    let g = upstream.data();
    let mut dx = vec![0.0; din];
    let mut dw = vec![0.0; din * dout];
    for (i, &x) in input.data().iter().enumerate() {
        let row = &w[i * dout..][..dout];
        dx[i] = row.iter().zip(g).map(|(a, b)| a * b).sum();
        if x != 0.0 {
            for (d, &gv) in dw[i * dout..][..dout].iter_mut().zip(g) {
                *d = x * gv;
            }
        }
    }
    Ok((
        Tensor::from_vec(input.shape(), dx)?,
        Tensor::from_vec(weights.shape(), dw)?,
    ))
}

/// Per-layer state captured during a forward pass that the backward pass
/// needs in addition to the layer input.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerAux {
    None,
    Argmax(Vec<usize>),
    Mask(Vec<bool>),
}

/// Dispatches a forward pass on any layer kind.
pub fn layer_forward(
    kind: &LayerKind,
    weights: Option<&Tensor>,
    input: &Tensor,
    mode: Mode,
    seed: u64,
) -> Result<(Tensor, LayerAux), ShapeError> {
    match *kind {
        LayerKind::Convolution { .. } => {
            let w = weights.ok_or(ShapeError::MissingWeights)?;
            Ok((conv2d_forward(input, kind, w)?, LayerAux::None))
        }
        LayerKind::MaxPool {
            window,
            stride,
            ceil_mode,
        } => {
            let (out, arg) = max_pool_forward(input, window, stride, ceil_mode)?;
            Ok((out, LayerAux::Argmax(arg)))
        }
        LayerKind::AvgPool { window, stride } => {
            Ok((avg_pool_forward(input, window, stride)?, LayerAux::None))
        }
        LayerKind::Relu => Ok((relu_forward(input), LayerAux::None)),
        LayerKind::Dropout { rate } => {
            let (out, mask) = dropout_forward(input, rate, mode, seed)?;
            Ok((out, LayerAux::Mask(mask)))
        }
        LayerKind::FullyConnected { .. } => {
            let w = weights.ok_or(ShapeError::MissingWeights)?;
            Ok((fc_forward(input, w)?, LayerAux::None))
        }
    }
}

/// Dispatches a backward pass; returns `(input_grad, weight_grad)`.
pub fn layer_backward(
    kind: &LayerKind,
    weights: Option<&Tensor>,
    input: &Tensor,
    aux: &LayerAux,
    upstream: &Tensor,
) -> Result<(Tensor, Option<Tensor>), ShapeError> {
    match (*kind, aux) {
        (LayerKind::Convolution { .. }, _) => {
            let w = weights.ok_or(ShapeError::MissingWeights)?;
            let (dx, dw) = conv2d_backward(input, kind, w, upstream)?;
            Ok((dx, Some(dw)))
        }
        (LayerKind::MaxPool { .. }, LayerAux::Argmax(arg)) => {
            Ok((max_pool_backward(input.shape(), arg, upstream)?, None))
        }
        (LayerKind::AvgPool { window, stride }, _) => Ok((
            avg_pool_backward(input.shape(), window, stride, upstream)?,
            None,
        )),
        (LayerKind::Relu, _) => Ok((relu_backward(input, upstream)?, None)),
        (LayerKind::Dropout { rate }, LayerAux::Mask(mask)) => {
            Ok((dropout_backward(rate, mask, upstream)?, None))
        }
        (LayerKind::FullyConnected { .. }, _) => {
            let w = weights.ok_or(ShapeError::MissingWeights)?;
            let (dx, dw) = fc_backward(input, w, upstream)?;
            Ok((dx, Some(dw)))
        }
        _ => Err(ShapeError::InvalidParameter(
            "forward state does not belong to this layer kind",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = rng_from(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Quadruple-loop correlation with explicit zero padding.
    fn naive_conv(x: &Tensor, w: &Tensor, pad: usize) -> Tensor {
        let (h, wd, ci) = x.hwc().unwrap();
        let (fh, fw, co) = (w.shape()[0], w.shape()[1], w.shape()[3]);
        let mut out = Tensor::zeros(&[h, wd, co]).unwrap();
        for y in 0..h {
            for xx in 0..wd {
                for o in 0..co {
                    let mut s = 0.0;
                    for ky in 0..fh {
                        for kx in 0..fw {
                            let sy = y as isize + ky as isize - pad as isize;
                            let sx = xx as isize + kx as isize - pad as isize;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                continue;
                            }
                            for c in 0..ci {
                                let xv = x.data()[((sy as usize) * wd + sx as usize) * ci + c];
                                let wv = w.data()[((ky * fw + kx) * ci + c) * co + o];
                                s += xv * wv;
                            }
                        }
                    }
                    out.data_mut()[(y * wd + xx) * co + o] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv11_output_shape() {
        let kind = LayerKind::conv3x3(1, 32);
        assert_eq!(kind.output_shape(&[100, 100, 1]).unwrap(), vec![100, 100, 32]);
        let x = Tensor::zeros(&[100, 100, 1]).unwrap();
        let w = Tensor::zeros(&[3, 3, 1, 32]).unwrap();
        assert_eq!(conv2d_forward(&x, &kind, &w).unwrap().shape(), &[100, 100, 32]);
    }

    #[test]
    fn identity_kernel_is_identity() {
        let kind = LayerKind::Convolution {
            filter_h: 1,
            filter_w: 1,
            stride: 1,
            in_channels: 1,
            out_channels: 1,
            same_padding: true,
        };
        let x = random(&[6, 5, 1], 3);
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &kind, &w).unwrap(), x);
        let up = random(&[6, 5, 1], 4);
        let (dx, _) = conv2d_backward(&x, &kind, &w, &up).unwrap();
        assert_eq!(dx, up);
    }

    #[test]
    fn conv_matches_naive_loop() {
        let kind = LayerKind::conv3x3(2, 3);
        let x = random(&[5, 5, 2], 11);
        let w = random(&[3, 3, 2, 3], 12);
        let fast = conv2d_forward(&x, &kind, &w).unwrap();
        let slow = naive_conv(&x, &w, 1);
        assert!(fast.max_abs_diff(&slow) < 1e-12);
    }

    #[test]
    fn conv_shape_errors_name_the_axis() {
        let kind = LayerKind::conv3x3(2, 3);
        let x = random(&[5, 5, 1], 1);
        let w = random(&[3, 3, 2, 3], 2);
        assert_eq!(
            conv2d_forward(&x, &kind, &w),
            Err(ShapeError::Dimension {
                axis: "input channels",
                expected: 2,
                actual: 1
            })
        );
        let bad_w = random(&[3, 3, 2, 4], 2);
        assert!(matches!(
            conv2d_forward(&random(&[5, 5, 2], 1), &kind, &bad_w),
            Err(ShapeError::Dimension { axis: "axis 3", .. })
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let kind = LayerKind::conv3x3(2, 2);
        let x = random(&[4, 4, 2], 1);
        let w = random(&[3, 3, 2, 2], 2);
        let up = Tensor::zeros(&[4, 4, 2]).unwrap();
        let (dx, dw) = conv2d_backward(&x, &kind, &w, &up).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(dw.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ceil_mode_pooling_chain() {
        assert_eq!(pooled_extent(100, 2, 2, true).unwrap(), 50);
        assert_eq!(pooled_extent(50, 2, 2, true).unwrap(), 25);
        assert_eq!(pooled_extent(25, 2, 2, true).unwrap(), 13);
        assert_eq!(pooled_extent(13, 2, 2, true).unwrap(), 7);
        assert_eq!(pooled_extent(7, 7, 1, false).unwrap(), 1);
        assert_eq!(pooled_extent(25, 2, 2, false).unwrap(), 12);
        assert_eq!(
            pooled_extent(3, 4, 1, true),
            Err(ShapeError::WindowTooLarge {
                window: 4,
                extent: 3
            })
        );
    }

    #[test]
    fn border_windows_pool_valid_region_only() {
        // 3x3 single channel, window 2 stride 2 ceil: last row/column windows are 1 wide.
        let x = Tensor::from_vec(
            &[3, 3, 1],
            vec![1.0, 2.0, -3.0, 4.0, 5.0, -6.0, -7.0, -8.0, -9.0],
        )
        .unwrap();
        let (out, arg) = max_pool_forward(&x, 2, 2, true).unwrap();
        assert_eq!(out.shape(), &[2, 2, 1]);
        assert_eq!(out.data(), &[5.0, -3.0, -7.0, -9.0]);
        assert_eq!(arg, vec![4, 2, 6, 8]);
    }

    #[test]
    fn max_pool_ties_route_to_first_element() {
        let x = Tensor::filled(&[2, 2, 1], 1.0).unwrap();
        let (out, arg) = max_pool_forward(&x, 2, 2, true).unwrap();
        assert_eq!(out.data(), &[1.0]);
        assert_eq!(arg, vec![0]);
        let up = Tensor::filled(&[1, 1, 1], 3.0).unwrap();
        let dx = max_pool_backward(x.shape(), &arg, &up).unwrap();
        assert_eq!(dx.data(), &[3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_input_pools_to_constant() {
        let x = Tensor::filled(&[25, 25, 3], 0.5).unwrap();
        let (out, _) = max_pool_forward(&x, 2, 2, true).unwrap();
        assert_eq!(out.shape(), &[13, 13, 3]);
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn pool5_averages_each_channel() {
        let x = random(&[7, 7, 320], 5);
        let out = avg_pool_forward(&x, 7, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 320]);
        for c in 0..320 {
            let mean: f64 = (0..49).map(|i| x.data()[i * 320 + c]).sum::<f64>() / 49.0;
            assert!((out.data()[c] - mean).abs() < 1e-12);
        }
        let ones = Tensor::filled(&[7, 7, 4], 1.0).unwrap();
        assert!(avg_pool_forward(&ones, 7, 1)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.0));
    }

    #[test]
    fn avg_pool_small_window_matches_direct_sum() {
        let x = random(&[3, 3, 1], 9);
        let out = avg_pool_forward(&x, 3, 1).unwrap();
        let mut sum = 0.0;
        for v in x.data() {
            sum += v;
        }
        assert!((out.data()[0] - sum / 9.0).abs() < 1e-15);
    }

    #[test]
    fn relu_cases() {
        let neg = Tensor::filled(&[3, 2], -0.5).unwrap();
        assert!(relu_forward(&neg).data().iter().all(|&v| v == 0.0));
        let pos = random(&[4, 4, 1], 1).map(|x| x.abs() + 0.1);
        assert_eq!(relu_forward(&pos), pos);
        let mixed = random(&[10, 1, 1], 2);
        let up = random(&[10, 1, 1], 3);
        let fwd = relu_forward(&mixed);
        let back = relu_backward(&mixed, &up).unwrap();
        for i in 0..10 {
            let x = mixed.data()[i];
            assert_eq!(fwd.data()[i], x.max(0.0));
            assert_eq!(back.data()[i], if x > 0.0 { up.data()[i] } else { 0.0 });
        }
    }

    #[test]
    fn dropout_identity_cases() {
        let x = random(&[50], 1);
        assert_eq!(dropout_forward(&x, 0.0, Mode::Train, 9).unwrap().0, x);
        assert_eq!(dropout_forward(&x, 0.0, Mode::Infer, 9).unwrap().0, x);
        assert_eq!(dropout_forward(&x, 0.7, Mode::Infer, 9).unwrap().0, x);
        assert!(dropout_forward(&x, 1.0, Mode::Train, 9).is_err());
        assert!(dropout_forward(&x, -0.1, Mode::Train, 9).is_err());
    }

    #[test]
    fn dropout_rate_law_of_large_numbers() {
        let x = Tensor::filled(&[1_000_000], 1.0).unwrap();
        let (out, mask) = dropout_forward(&x, 0.4, Mode::Train, 2024).unwrap();
        let zeros = out.data().iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / 1e6;
        assert!((frac - 0.4).abs() < 0.005, "zero fraction {frac}");
        assert_eq!(mask.iter().filter(|&&k| !k).count(), zeros);
        let survivor = out.data().iter().find(|&&v| v != 0.0).unwrap();
        assert!((survivor - 1.0 / 0.6).abs() < 1e-15);
        let again = dropout_forward(&x, 0.4, Mode::Train, 2024).unwrap().0;
        assert_eq!(again, out);
    }

    #[test]
    fn fc_cases() {
        let mut eye = Tensor::zeros(&[4, 4]).unwrap();
        for i in 0..4 {
            eye.data_mut()[i * 4 + i] = 1.0;
        }
        let x = random(&[4], 1);
        assert_eq!(fc_forward(&x, &eye).unwrap(), x);
        assert_eq!(
            LayerKind::FullyConnected {
                in_dim: 320,
                out_dim: 10575
            }
            .param_count(),
            3_384_000
        );
        let w = random(&[4, 3], 2);
        let out = fc_forward(&x, &w).unwrap();
        for j in 0..3 {
            let mut s = 0.0;
            for i in 0..4 {
                s += x.data()[i] * w.data()[i * 3 + j];
            }
            assert!((out.data()[j] - s).abs() < 1e-14);
        }
        assert!(fc_forward(&random(&[5], 1), &w).is_err());
    }
}
