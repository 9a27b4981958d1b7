use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding so that `out = ceil(T / stride)`. The pad total is split
    /// evenly; when odd, the extra zero goes on the right.
    Same,
    /// No padding: `out = floor((T - kernel) / stride) + 1`.
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// One layer of a sequential 1D-CNN stack. Inputs are `(time, channels)`.
///
/// Parameter layouts:
/// - `Conv1D`: weight `[kernel, in_channels, out_channels]`, bias `[out_channels]`.
///   The kernel is applied as a true convolution (flipped along time), so
///   `out[t] = sum_j w[j] * x[t*stride + kernel-1-j - pad_left]`.
/// - `Dense`: weight `[in, units]`, bias `[units]`, applied row-wise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayerKind {
    Conv1D {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        activation: Activation,
    },
    /// Ceil-mode pooling: the trailing partial window is pooled too.
    MaxPool1D { size: usize },
    /// Nearest-neighbour repetition along time.
    UpSample1D { factor: usize },
    /// Keep the first `length` time steps.
    Crop1D { length: usize },
    Dense { units: usize, activation: Activation },
    /// `(T, C) -> (1, C)`.
    GlobalAvgPool1D,
    /// Row-wise softmax.
    Softmax,
}

/// Gradients returned by [`backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub input: Tensor,
    pub params: Vec<Tensor>,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv1D { .. } => "Conv1D",
            LayerKind::MaxPool1D { .. } => "MaxPool1D",
            LayerKind::UpSample1D { .. } => "UpSample1D",
            LayerKind::Crop1D { .. } => "Crop1D",
            LayerKind::Dense { .. } => "Dense",
            LayerKind::GlobalAvgPool1D => "GlobalAvgPool1D",
            LayerKind::Softmax => "Softmax",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |field: &'static str, v: usize| {
            if v == 0 {
                Err(Error::config(field, "must be >= 1"))
            } else {
                Ok(())
            }
        };
        match *self {
            LayerKind::Conv1D {
                out_channels,
                kernel,
                stride,
                ..
            } => {
                check("out_channels", out_channels)?;
                check("kernel", kernel)?;
                check("stride", stride)
            }
            LayerKind::MaxPool1D { size } => check("size", size),
            LayerKind::UpSample1D { factor } => check("factor", factor),
            LayerKind::Crop1D { length } => check("length", length),
            LayerKind::Dense { units, .. } => check("units", units),
            LayerKind::GlobalAvgPool1D | LayerKind::Softmax => Ok(()),
        }
    }

    /// Output `(time, channels)` for an input of `(time, channels)`.
    pub fn output_shape(&self, (t, c): (usize, usize)) -> Result<(usize, usize)> {
        self.validate()?;
        let out = match *self {
            LayerKind::Conv1D {
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let len = match padding {
                    Padding::Same => t.div_ceil(stride),
                    Padding::Valid => {
                        if t < kernel {
                            return Err(Error::shape(
                                "Conv1D (valid)",
                                format!("time >= kernel {kernel}"),
                                t,
                            ));
                        }
                        (t - kernel) / stride + 1
                    }
                };
                (len, out_channels)
            }
            LayerKind::MaxPool1D { size } => (t.div_ceil(size), c),
            LayerKind::UpSample1D { factor } => (t * factor, c),
            LayerKind::Crop1D { length } => {
                if t < length {
                    return Err(Error::shape("Crop1D", format!("time >= {length}"), t));
                }
                (length, c)
            }
            LayerKind::Dense { units, .. } => (t, units),
            LayerKind::GlobalAvgPool1D => (1, c),
            LayerKind::Softmax => (t, c),
        };
        Ok(out)
    }

    /// Shapes of the trainable tensors for a given number of input channels.
    pub fn param_shapes(&self, in_channels: usize) -> Vec<Vec<usize>> {
        match *self {
            LayerKind::Conv1D {
                out_channels,
                kernel,
                ..
            } => vec![vec![kernel, in_channels, out_channels], vec![out_channels]],
            LayerKind::Dense { units, .. } => vec![vec![in_channels, units], vec![units]],
            _ => Vec::new(),
        }
    }

    /// `(fan_in, fan_out)` of the weight tensor, if the layer has one.
    pub fn fans(&self, in_channels: usize) -> Option<(usize, usize)> {
        match *self {
            LayerKind::Conv1D {
                out_channels,
                kernel,
                ..
            } => Some((kernel * in_channels, kernel * out_channels)),
            LayerKind::Dense { units, .. } => Some((in_channels, units)),
            _ => None,
        }
    }

    fn check_params(&self, params: &[Tensor], in_channels: usize) -> Result<()> {
        let expected = self.param_shapes(in_channels);
        let actual: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        if expected.len() != actual.len() || expected.iter().zip(&actual).any(|(e, a)| e[..] != **a) {
            return Err(Error::shape(format!("{} parameters", self.name()), &expected, &actual));
        }
        Ok(())
    }
}

fn same_pad_left(t: usize, kernel: usize, stride: usize) -> usize {
    let out = t.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(t);
    total / 2
}

fn conv_geometry(t: usize, kernel: usize, stride: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => same_pad_left(t, kernel, stride),
        Padding::Valid => 0,
    }
}

/// Forward pass of a single layer.
pub fn forward(layer: &LayerKind, params: &[Tensor], input: &Tensor) -> Result<Tensor> {
    let (t, c) = input.dims2(layer.name())?;
    layer.check_params(params, c)?;
    let (t_out, c_out) = layer.output_shape((t, c))?;
    let x = input.data();
    let mut out = vec![0.0; t_out * c_out];
    match *layer {
        LayerKind::Conv1D {
            kernel,
            stride,
            padding,
            activation,
            ..
        } => {
            let w = params[0].data();
            let b = params[1].data();
            let pad = conv_geometry(t, kernel, stride, padding) as isize;
            for (ti, orow) in out.chunks_exact_mut(c_out).enumerate() {
                orow.copy_from_slice(b);
                let base = (ti * stride) as isize - pad;
                for j in 0..kernel {
                    let p = base + (kernel - 1 - j) as isize;
                    if p < 0 || p >= t as isize {
                        continue;
                    }
                    let p = p as usize;
                    let xrow = &x[p * c..(p + 1) * c];
                    let wj = &w[j * c * c_out..(j + 1) * c * c_out];
                    for (xv, wrow) in xrow.iter().zip(wj.chunks_exact(c_out)) {
                        for (o, wv) in orow.iter_mut().zip(wrow) {
                            *o += xv * wv;
                        }
                    }
                }
                if activation != Activation::Linear {
                    for o in orow.iter_mut() {
                        *o = activation.apply(*o);
                    }
                }
            }
        }
        LayerKind::MaxPool1D { size } => {
            for (ti, orow) in out.chunks_exact_mut(c).enumerate() {
                let start = ti * size;
                let end = (start + size).min(t);
                orow.copy_from_slice(&x[start * c..(start + 1) * c]);
                for p in start + 1..end {
                    for (o, xv) in orow.iter_mut().zip(&x[p * c..(p + 1) * c]) {
                        if *xv > *o {
                            *o = *xv;
                        }
                    }
                }
            }
        }
        LayerKind::UpSample1D { factor } => {
            for (ti, orow) in out.chunks_exact_mut(c).enumerate() {
                let p = ti / factor;
                orow.copy_from_slice(&x[p * c..(p + 1) * c]);
            }
        }
        LayerKind::Crop1D { length } => {
            out.copy_from_slice(&x[..length * c]);
        }
        LayerKind::Dense { units, activation } => {
            let w = params[0].data();
            let b = params[1].data();
            for (xrow, orow) in x.chunks_exact(c).zip(out.chunks_exact_mut(units)) {
                orow.copy_from_slice(b);
                for (xv, wrow) in xrow.iter().zip(w.chunks_exact(units)) {
                    for (o, wv) in orow.iter_mut().zip(wrow) {
                        *o += xv * wv;
                    }
                }
                for o in orow.iter_mut() {
                    *o = activation.apply(*o);
                }
            }
        }
        LayerKind::GlobalAvgPool1D => {
            for xrow in x.chunks_exact(c) {
                for (o, xv) in out.iter_mut().zip(xrow) {
                    *o += xv;
                }
            }
            let inv = 1.0 / t as f64;
            for o in &mut out {
                *o *= inv;
            }
        }
        LayerKind::Softmax => {
            for (xrow, orow) in x.chunks_exact(c).zip(out.chunks_exact_mut(c)) {
                super::loss::softmax_into(xrow, orow);
            }
        }
    }
    Tensor::from_matrix(t_out, c_out, out)
}

/// Exact gradients of [`forward`] with respect to the input and parameters,
/// given the gradient of some scalar with respect to the layer output.
pub fn backward(
    layer: &LayerKind,
    params: &[Tensor],
    input: &Tensor,
    upstream: &Tensor,
) -> Result<Gradients> {
    let output = forward(layer, params, input)?;
    backward_with_output(layer, params, input, &output, upstream)
}

/// As [`backward`], reusing an output already produced by [`forward`].
pub fn backward_with_output(
    layer: &LayerKind,
    params: &[Tensor],
    input: &Tensor,
    output: &Tensor,
    upstream: &Tensor,
) -> Result<Gradients> {
    let (t, c) = input.dims2(layer.name())?;
    layer.check_params(params, c)?;
    let out_shape = layer.output_shape((t, c))?;
    if upstream.shape() != [out_shape.0, out_shape.1] || output.shape() != upstream.shape() {
        return Err(Error::shape(
            format!("{} upstream gradient", layer.name()),
            [out_shape.0, out_shape.1],
            upstream.shape(),
        ));
    }
    let (t_out, c_out) = out_shape;
    let x = input.data();
    let g = upstream.data();
    let y = output.data();
    let mut dx = vec![0.0; t * c];
    let mut param_grads = Vec::new();
    match *layer {
        LayerKind::Conv1D {
            kernel,
            stride,
            padding,
            activation,
            ..
        } => {
            let w = params[0].data();
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; c_out];
            let pad = conv_geometry(t, kernel, stride, padding) as isize;
            let mut dz = vec![0.0; c_out];
            for ti in 0..t_out {
                let grow = &g[ti * c_out..(ti + 1) * c_out];
                let yrow = &y[ti * c_out..(ti + 1) * c_out];
                for ((d, gv), yv) in dz.iter_mut().zip(grow).zip(yrow) {
                    *d = gv * activation.derivative_from_output(*yv);
                }
                for (bacc, d) in db.iter_mut().zip(&dz) {
                    *bacc += d;
                }
                let base = (ti * stride) as isize - pad;
                for j in 0..kernel {
                    let p = base + (kernel - 1 - j) as isize;
                    if p < 0 || p >= t as isize {
                        continue;
                    }
                    let p = p as usize;
                    let xrow = &x[p * c..(p + 1) * c];
                    let dxrow = &mut dx[p * c..(p + 1) * c];
                    let span = j * c * c_out..(j + 1) * c * c_out;
                    let wj = &w[span.clone()];
                    let dwj = &mut dw[span];
                    for (((xv, dxv), wrow), dwrow) in xrow
                        .iter()
                        .zip(dxrow.iter_mut())
                        .zip(wj.chunks_exact(c_out))
                        .zip(dwj.chunks_exact_mut(c_out))
                    {
                        let mut acc = 0.0;
                        for ((d, wv), dwv) in dz.iter().zip(wrow).zip(dwrow.iter_mut()) {
                            *dwv += xv * d;
                            acc += wv * d;
                        }
                        *dxv += acc;
                    }
                }
            }
            param_grads.push(Tensor::new(params[0].shape().to_vec(), dw)?);
            param_grads.push(Tensor::vector(db));
        }
        LayerKind::MaxPool1D { size } => {
            for ti in 0..t_out {
                let start = ti * size;
                let end = (start + size).min(t);
                for ch in 0..c {
                    let mut best = start;
                    for p in start + 1..end {
                        if x[p * c + ch] > x[best * c + ch] {
                            best = p;
                        }
                    }
                    dx[best * c + ch] += g[ti * c + ch];
                }
            }
        }
        LayerKind::UpSample1D { factor } => {
            for (ti, grow) in g.chunks_exact(c).enumerate() {
                let p = ti / factor;
                for (d, gv) in dx[p * c..(p + 1) * c].iter_mut().zip(grow) {
                    *d += gv;
                }
            }
        }
        LayerKind::Crop1D { length } => {
            dx[..length * c].copy_from_slice(g);
        }
        LayerKind::Dense { units, activation } => {
            let w = params[0].data();
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; units];
            let mut dz = vec![0.0; units];
            for r in 0..t {
                for ((d, gv), yv) in dz
                    .iter_mut()
                    .zip(&g[r * units..(r + 1) * units])
                    .zip(&y[r * units..(r + 1) * units])
                {
                    *d = gv * activation.derivative_from_output(*yv);
                }
                for (bacc, d) in db.iter_mut().zip(&dz) {
                    *bacc += d;
                }
                let xrow = &x[r * c..(r + 1) * c];
                let dxrow = &mut dx[r * c..(r + 1) * c];
                for (((xv, dxv), wrow), dwrow) in xrow
                    .iter()
                    .zip(dxrow.iter_mut())
                    .zip(w.chunks_exact(units))
                    .zip(dw.chunks_exact_mut(units))
                {
                    let mut acc = 0.0;
                    for ((d, wv), dwv) in dz.iter().zip(wrow).zip(dwrow.iter_mut()) {
                        *dwv += xv * d;
                        acc += wv * d;
                    }
                    *dxv += acc;
                }
            }
            param_grads.push(Tensor::new(params[0].shape().to_vec(), dw)?);
            param_grads.push(Tensor::vector(db));
        }
        LayerKind::GlobalAvgPool1D => {
            let inv = 1.0 / t as f64;
            for dxrow in dx.chunks_exact_mut(c) {
                for (d, gv) in dxrow.iter_mut().zip(g) {
                    *d = gv * inv;
                }
            }
        }
        LayerKind::Softmax => {
            for ((grow, yrow), dxrow) in g.chunks_exact(c).zip(y.chunks_exact(c)).zip(dx.chunks_exact_mut(c)) {
                let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                for ((d, gv), yv) in dxrow.iter_mut().zip(grow).zip(yrow) {
                    *d = yv * (gv - dot);
                }
            }
        }
    }
    Ok(Gradients {
        input: Tensor::from_matrix(t, c, dx)?,
        params: param_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::from_matrix(rows, cols, v.to_vec()).unwrap()
    }

    fn conv(out: usize, k: usize, s: usize, padding: Padding, activation: Activation) -> LayerKind {
        LayerKind::Conv1D {
            out_channels: out,
            kernel: k,
            stride: s,
            padding,
            activation,
        }
    }

    #[test]
    fn identity_kernel() {
        let layer = conv(1, 1, 1, Padding::Valid, Activation::Linear);
        let params = [Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap(), Tensor::vector(vec![0.0])];
        let x = m(5, 1, &[0.3, -2.0, 7.5, 1e-9, 4.0]);
        assert_eq!(forward(&layer, &params, &x).unwrap(), x);
    }

    #[test]
    fn hand_convolution() {
        // Flipped kernel: out[t] = w0*x[t+1] + w1*x[t].
        let layer = conv(1, 2, 1, Padding::Valid, Activation::Linear);
        let params = [Tensor::new(vec![2, 1, 1], vec![1.0, -1.0]).unwrap(), Tensor::vector(vec![0.0])];
        let y = forward(&layer, &params, &m(3, 1, &[3.0, 5.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[2.0, -1.0]);
    }

    #[test]
    fn max_pool_definition() {
        let y = forward(&LayerKind::MaxPool1D { size: 2 }, &[], &m(4, 1, &[1.0, 4.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.data(), &[4.0, 3.0]);
        // ceil mode keeps the trailing partial window
        let y = forward(&LayerKind::MaxPool1D { size: 2 }, &[], &m(3, 1, &[1.0, 4.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[4.0, 2.0]);
    }

    #[test]
    fn dense_hand_gradient() {
        let layer = LayerKind::Dense {
            units: 1,
            activation: Activation::Linear,
        };
        let params = [m(2, 1, &[0.5, -1.0]), Tensor::vector(vec![0.0])];
        let x = m(1, 2, &[2.0, 3.0]);
        let g = backward(&layer, &params, &x, &m(1, 1, &[1.0])).unwrap();
        assert_eq!(g.params[0].data(), &[2.0, 3.0]);
        assert_eq!(g.params[1].data(), &[1.0]);
        assert_eq!(g.input.data(), &[0.5, -1.0]);
    }

    #[test]
    fn same_padding_lengths() {
        for t in 1..20 {
            for k in 1..6 {
                for s in 1..4 {
                    let layer = conv(2, k, s, Padding::Same, Activation::Linear);
                    assert_eq!(layer.output_shape((t, 3)).unwrap(), (t.div_ceil(s), 2));
                    if t >= k {
                        let layer = conv(2, k, s, Padding::Valid, Activation::Linear);
                        assert_eq!(layer.output_shape((t, 3)).unwrap().0, (t - k) / s + 1);
                    }
                }
            }
        }
    }

    #[test]
    fn same_padding_puts_extra_zero_right() {
        // k=2, s=1: one pad element total, on the right. out[t] = w0*x[t+1] + w1*x[t].
        let layer = conv(1, 2, 1, Padding::Same, Activation::Linear);
        let params = [Tensor::new(vec![2, 1, 1], vec![1.0, 10.0]).unwrap(), Tensor::vector(vec![0.0])];
        let y = forward(&layer, &params, &m(3, 1, &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.data(), &[12.0, 23.0, 30.0]);
    }

    #[test]
    fn upsample_then_pool_restores() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = m(6, 2, &(0..12).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let up = forward(&LayerKind::UpSample1D { factor: 3 }, &[], &x).unwrap();
        let back = forward(&LayerKind::MaxPool1D { size: 3 }, &[], &up).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let layer = conv(2, 3, 1, Padding::Same, Activation::Relu);
        let params = [Tensor::zeros(&[3, 4, 2]), Tensor::zeros(&[2])];
        let err = forward(&layer, &params, &Tensor::zeros(&[8, 3])).unwrap_err();
        assert!(err.to_string().contains("Conv1D"), "{err}");
        let err = forward(&LayerKind::Softmax, &[], &Tensor::vector(vec![1.0])).unwrap_err();
        assert!(err.to_string().contains("Softmax"));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = m(8, 3, &(0..24).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let layers = [
            conv(2, 3, 2, Padding::Same, Activation::Sigmoid),
            LayerKind::MaxPool1D { size: 3 },
            LayerKind::UpSample1D { factor: 2 },
            LayerKind::Crop1D { length: 5 },
            LayerKind::Dense {
                units: 4,
                activation: Activation::Relu,
            },
            LayerKind::GlobalAvgPool1D,
            LayerKind::Softmax,
        ];
        for layer in layers {
            let params: Vec<Tensor> = layer
                .param_shapes(3)
                .iter()
                .map(|s| {
                    let n = s.iter().product();
                    Tensor::new(s.clone(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
                })
                .collect();
            let (to, co) = layer.output_shape((8, 3)).unwrap();
            let g = backward(&layer, &params, &x, &Tensor::zeros(&[to, co])).unwrap();
            assert!(g.input.data().iter().all(|v| *v == 0.0), "{}", layer.name());
            assert!(g.params.iter().all(|p| p.data().iter().all(|v| *v == 0.0)));
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = m(2, 4, &[1.0, 2.0, 3.0, 4.0, -500.0, 0.0, 500.0, 1.0]);
        let y = forward(&LayerKind::Softmax, &[], &x).unwrap();
        for r in 0..2 {
            let s: f64 = y.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(y.row(r).iter().all(|v| *v >= 0.0));
        }
    }
}
