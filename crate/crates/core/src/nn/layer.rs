use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Deconv,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f32 },
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn leaky_relu(slope: f32) -> Self {
        assert!(slope > 0.0 && slope < 1.0, "leaky slope must lie in (0, 1)");
        Activation::LeakyRelu { slope }
    }

    #[inline]
    pub fn apply_scalar(self, v: f32) -> f32 {
        match self {
            Activation::LeakyRelu { slope } => {
                if v >= 0.0 {
                    v
                } else {
                    slope * v
                }
            }
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
            Activation::Linear => v,
        }
    }

    /// Derivative with respect to the pre-activation value.
    #[inline]
    pub fn derivative(self, pre: f32) -> f32 {
        match self {
            Activation::LeakyRelu { slope } => {
                if pre >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(pre);
                s * (1.0 - s)
            }
            Activation::Linear => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Elementwise activation.
pub fn activation(kind: Activation, x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = kind.apply_scalar(*v);
    }
    out
}

/// Parameters of one layer.
///
/// Weight layouts: conv `[out, in, k, k]`, deconv `[in, out, k, k]` (so a
/// deconv holding the same array as a conv computes its adjoint), dense
/// `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub kind: LayerKind,
    pub weights: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
    pub activation: Activation,
}

impl LayerParams {
    pub fn conv<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(stride > 0 && kernel > 0);
        let bound = (1.0 / (in_channels * kernel * kernel) as f32).sqrt();
        LayerParams {
            kind: LayerKind::Conv,
            weights: Tensor::uniform(&[out_channels, in_channels, kernel, kernel], bound, rng),
            bias: Tensor::uniform(&[out_channels], bound, rng),
            stride,
            padding,
            activation,
        }
    }

    pub fn deconv<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(stride > 0 && kernel > 0);
        // each output cell sees about in·k²/s² inputs
        let fan_in = (in_channels * kernel * kernel / (stride * stride)).max(1);
        let bound = (1.0 / fan_in as f32).sqrt();
        LayerParams {
            kind: LayerKind::Deconv,
            weights: Tensor::uniform(&[in_channels, out_channels, kernel, kernel], bound, rng),
            bias: Tensor::uniform(&[out_channels], bound, rng),
            stride,
            padding,
            activation,
        }
    }

    pub fn dense<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = (1.0 / inputs.max(1) as f32).sqrt();
        LayerParams {
            kind: LayerKind::Dense,
            weights: Tensor::uniform(&[outputs, inputs], bound, rng),
            bias: Tensor::uniform(&[outputs], bound, rng),
            stride: 1,
            padding: 0,
            activation,
        }
    }

    pub fn in_channels(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.weights.shape()[1],
            LayerKind::Deconv => self.weights.shape()[0],
            LayerKind::Dense => self.weights.shape()[1],
        }
    }

    pub fn out_channels(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.weights.shape()[0],
            LayerKind::Deconv => self.weights.shape()[1],
            LayerKind::Dense => self.weights.shape()[0],
        }
    }

    /// Kernel extent; 1 for dense layers.
    pub fn kernel(&self) -> usize {
        match self.kind {
            LayerKind::Dense => 1,
            _ => self.weights.shape()[2],
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        match self.kind {
            LayerKind::Dense => {
                let n: usize = input.iter().product();
                if n != self.in_channels() {
                    return Err(NnError::ShapeMismatch {
                        op: "dense",
                        expected: format!("{} inputs", self.in_channels()),
                        found: format!("{:?}", input),
                    });
                }
                Ok(vec![self.out_channels()])
            }
            LayerKind::Conv | LayerKind::Deconv => {
                let op = if self.kind == LayerKind::Conv { "conv2d" } else { "deconv2d" };
                let &[c, h, w] = input else {
                    return Err(NnError::ShapeMismatch {
                        op,
                        expected: "c × h × w input".into(),
                        found: format!("{:?}", input),
                    });
                };
                if c != self.in_channels() {
                    return Err(NnError::ShapeMismatch {
                        op,
                        expected: format!("{} input channels", self.in_channels()),
                        found: format!("{} channels (input {:?})", c, input),
                    });
                }
                let (k, s, p) = (self.kernel(), self.stride, self.padding);
                let (oh, ow) = if self.kind == LayerKind::Conv {
                    (conv_out_len(h, k, s, p, op)?, conv_out_len(w, k, s, p, op)?)
                } else {
                    (deconv_out_len(h, k, s, p, op)?, deconv_out_len(w, k, s, p, op)?)
                };
                Ok(vec![self.out_channels(), oh, ow])
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Affine part of the layer (no activation).
    pub fn forward_linear(&self, x: &Tensor) -> Result<Tensor, NnError> {
        match self.kind {
            LayerKind::Conv => conv2d(self, x),
            LayerKind::Deconv => deconv2d(self, x),
            LayerKind::Dense => dense(self, x),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut out = self.forward_linear(x)?;
        if self.activation != Activation::Linear {
            for v in out.data_mut() {
                *v = self.activation.apply_scalar(*v);
            }
        }
        Ok(out)
    }
}

fn conv_out_len(n: usize, k: usize, s: usize, p: usize, op: &'static str) -> Result<usize, NnError> {
    if n + 2 * p < k {
        return Err(NnError::ShapeMismatch {
            op,
            expected: format!("padded extent ≥ kernel {}", k),
            found: format!("extent {} with padding {}", n, p),
        });
    }
    Ok((n + 2 * p - k) / s + 1)
}

fn deconv_out_len(n: usize, k: usize, s: usize, p: usize, op: &'static str) -> Result<usize, NnError> {
    let full = (n.max(1) - 1) * s + k;
    if n == 0 || full <= 2 * p {
        return Err(NnError::ShapeMismatch {
            op,
            expected: "positive output extent".into(),
            found: format!("extent {} (k {}, stride {}, pad {})", n, k, s, p),
        });
    }
    Ok(full - 2 * p)
}

/// Sliding-window geometry shared by im2col / col2im.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// `[c·k·k, out_h·out_w]` patch matrix of a `c × h × w` image.
pub(crate) fn im2col(x: &[f32], g: &Geometry) -> Vec<f32> {
    let positions = g.positions();
    let mut cols = vec![0.0f32; g.rows() * positions];
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[oy * g.out_w + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add inverse of [`im2col`].
pub(crate) fn col2im(cols: &[f32], g: &Geometry) -> Vec<f32> {
    let positions = g.positions();
    let mut x = vec![0.0f32; g.channels * g.height * g.width];
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst_row[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Row-major matrix view used by [`gemm`].
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f32],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Mat {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        Mat {
            transposed: !self.transposed,
            ..self
        }
    }

    fn logical(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = a · b + beta · out`, `out` row-major.
pub(crate) fn gemm(a: Mat<'_>, b: Mat<'_>, out: &mut [f32], beta: f32) {
    let (m, k) = a.logical();
    let (k2, n) = b.logical();
    assert_eq!(k, k2, "gemm inner dimension");
    assert_eq!(out.len(), m * n, "gemm output size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in out.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: strides and extents describe in-bounds views of the slices
    // checked above.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn expect_kind(params: &LayerParams, kind: LayerKind, op: &'static str) -> Result<(), NnError> {
    if params.kind != kind {
        return Err(NnError::KindMismatch {
            op,
            expected: kind,
            found: params.kind,
        });
    }
    Ok(())
}

pub(crate) fn conv_geometry(params: &LayerParams, c: usize, h: usize, w: usize) -> Result<Geometry, NnError> {
    let out = params.output_shape(&[c, h, w])?;
    Ok(Geometry {
        channels: c,
        height: h,
        width: w,
        kernel: params.kernel(),
        stride: params.stride,
        padding: params.padding,
        out_h: out[1],
        out_w: out[2],
    })
}

/// Geometry of the conv whose adjoint the deconv computes: the deconv output
/// plays the role of the conv input.
pub(crate) fn deconv_geometry(params: &LayerParams, c: usize, h: usize, w: usize) -> Result<Geometry, NnError> {
    let out = params.output_shape(&[c, h, w])?;
    Ok(Geometry {
        channels: out[0],
        height: out[1],
        width: out[2],
        kernel: params.kernel(),
        stride: params.stride,
        padding: params.padding,
        out_h: h,
        out_w: w,
    })
}

fn add_channel_bias(out: &mut [f32], bias: &[f32], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        if b != 0.0 {
            for v in chunk {
                *v += b;
            }
        }
    }
}

/// Strided, zero-padded 2-D convolution (cross-correlation) plus bias.
pub fn conv2d(params: &LayerParams, x: &Tensor) -> Result<Tensor, NnError> {
    expect_kind(params, LayerKind::Conv, "conv2d")?;
    let (c, h, w) = x.dims3()?;
    let g = conv_geometry(params, c, h, w)?;
    let oc = params.out_channels();
    let cols = im2col(x.data(), &g);
    let mut out = vec![0.0f32; oc * g.positions()];
    gemm(
        Mat::new(params.weights.data(), oc, g.rows()),
        Mat::new(&cols, g.rows(), g.positions()),
        &mut out,
        0.0,
    );
    add_channel_bias(&mut out, params.bias.data(), g.positions());
    Tensor::new(vec![oc, g.out_h, g.out_w], out)
}

/// Transposed convolution plus bias.
pub fn deconv2d(params: &LayerParams, x: &Tensor) -> Result<Tensor, NnError> {
    expect_kind(params, LayerKind::Deconv, "deconv2d")?;
    let (c, h, w) = x.dims3()?;
    let g = deconv_geometry(params, c, h, w)?;
    let mut cols = vec![0.0f32; g.rows() * g.positions()];
    gemm(
        Mat::new(params.weights.data(), c, g.rows()).t(),
        Mat::new(x.data(), c, g.positions()),
        &mut cols,
        0.0,
    );
    let mut out = col2im(&cols, &g);
    add_channel_bias(&mut out, params.bias.data(), g.height * g.width);
    Tensor::new(vec![g.channels, g.height, g.width], out)
}

/// `y = W x + b` over the flattened input.
pub fn dense(params: &LayerParams, x: &Tensor) -> Result<Tensor, NnError> {
    expect_kind(params, LayerKind::Dense, "dense")?;
    params.output_shape(x.shape())?;
    let (o, i) = (params.out_channels(), params.in_channels());
    let mut out = params.bias.data().to_vec();
    gemm(
        Mat::new(params.weights.data(), o, i),
        Mat::new(x.data(), i, 1),
        &mut out,
        1.0,
    );
    Tensor::new(vec![o], out)
}

/// Gradients of one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl LayerGrad {
    pub fn zeros_like(params: &LayerParams) -> Self {
        LayerGrad {
            weights: Tensor::zeros(params.weights.shape()),
            bias: Tensor::zeros(params.bias.shape()),
        }
    }
}

/// Backward pass of the affine part: given the layer input and the gradient
/// with respect to the (pre-activation) output, accumulates parameter
/// gradients into `grad` and returns the gradient with respect to the input.
pub(crate) fn linear_backward(
    params: &LayerParams,
    input: &Tensor,
    grad_out: &Tensor,
    grad: &mut LayerGrad,
) -> Result<Tensor, NnError> {
    let expected = params.output_shape(input.shape())?;
    if grad_out.shape() != expected.as_slice() {
        return Err(NnError::ShapeMismatch {
            op: "backward",
            expected: format!("{:?}", expected),
            found: format!("{:?}", grad_out.shape()),
        });
    }
    match params.kind {
        LayerKind::Conv => {
            let (c, h, w) = input.dims3()?;
            let g = conv_geometry(params, c, h, w)?;
            let oc = params.out_channels();
            let cols = im2col(input.data(), &g);
            let dy = Mat::new(grad_out.data(), oc, g.positions());
            gemm(dy, Mat::new(&cols, g.rows(), g.positions()).t(), grad.weights.data_mut(), 1.0);
            for (b, chunk) in grad.bias.data_mut().iter_mut().zip(grad_out.data().chunks(g.positions())) {
                *b += chunk.iter().sum::<f32>();
            }
            let mut dcols = vec![0.0f32; g.rows() * g.positions()];
            gemm(Mat::new(params.weights.data(), oc, g.rows()).t(), dy, &mut dcols, 0.0);
            Tensor::new(vec![c, h, w], col2im(&dcols, &g))
        }
        LayerKind::Deconv => {
            let (c, h, w) = input.dims3()?;
            let g = deconv_geometry(params, c, h, w)?;
            let dcols = im2col(grad_out.data(), &g);
            let dcols_m = Mat::new(&dcols, g.rows(), g.positions());
            gemm(Mat::new(input.data(), c, g.positions()), dcols_m.t(), grad.weights.data_mut(), 1.0);
            let plane = g.height * g.width;
            for (b, chunk) in grad.bias.data_mut().iter_mut().zip(grad_out.data().chunks(plane)) {
                *b += chunk.iter().sum::<f32>();
            }
            let mut dx = vec![0.0f32; c * g.positions()];
            gemm(Mat::new(params.weights.data(), c, g.rows()), dcols_m, &mut dx, 0.0);
            Tensor::new(vec![c, h, w], dx)
        }
        LayerKind::Dense => {
            let (o, i) = (params.out_channels(), params.in_channels());
            let dy = Mat::new(grad_out.data(), o, 1);
            gemm(dy, Mat::new(input.data(), i, 1).t(), grad.weights.data_mut(), 1.0);
            for (b, &d) in grad.bias.data_mut().iter_mut().zip(grad_out.data()) {
                *b += d;
            }
            let mut dx = vec![0.0f32; i];
            gemm(Mat::new(params.weights.data(), o, i).t(), dy, &mut dx, 0.0);
            Tensor::new(input.shape().to_vec(), dx)
        }
    }
}
