//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation applied during a forward pass in
//! topological order. [`Tape::backward`] walks the record once in reverse and
//! returns the gradient of a scalar loss with respect to every tracked leaf.
//!
//! ```
//! use cyclesearch_core::autodiff::Tape;
//! use cyclesearch_core::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::from_vec(vec![3.0]), true);
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.mean(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap(), &[6.0]);
//! ```

mod gradcheck;
pub mod kernels;

pub use gradcheck::{check_gradients, GradCheckReport, InputReport};
pub use kernels::{ConvGeometry, Dims, InterpMode, PoolMode};

use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pointwise {
    Relu,
    /// Leaky ReLU with negative slope 0.2.
    LeakyRelu,
    Tanh,
    Sigmoid,
    Log,
    Abs,
    Negate,
}

pub const LEAKY_SLOPE: f64 = 0.2;

impl Pointwise {
    fn apply(self, x: f64) -> f64 {
        match self {
            Pointwise::Relu => x.max(0.0),
            Pointwise::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Pointwise::Tanh => x.tanh(),
            Pointwise::Sigmoid => sigmoid(x),
            Pointwise::Log => x.ln(),
            Pointwise::Abs => x.abs(),
            Pointwise::Negate => -x,
        }
    }

    /// Derivative given the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Pointwise::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Pointwise::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Pointwise::Tanh => 1.0 - y * y,
            Pointwise::Sigmoid => y * (1.0 - y),
            Pointwise::Log => 1.0 / x,
            Pointwise::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Pointwise::Negate => -1.0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    ConvTranspose2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    Pool2d {
        input: Var,
        mode: PoolMode,
        window: usize,
        stride: usize,
        argmax: Vec<usize>,
    },
    Interpolate {
        input: Var,
        factor: usize,
        mode: InterpMode,
    },
    InstanceNorm {
        input: Var,
        inv_std: Vec<f64>,
    },
    Pointwise {
        input: Var,
        kind: Pointwise,
    },
    Binary {
        lhs: Var,
        rhs: Var,
        op: Binary,
    },
    Affine {
        input: Var,
        scale: f64,
    },
    MulScalar {
        input: Var,
        scalar: Var,
    },
    Mean {
        input: Var,
    },
    Softmax {
        input: Var,
    },
    WeightedSum {
        weights: Var,
        terms: Vec<Var>,
    },
    Clamp {
        input: Var,
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation record for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if `var` is tracked and
    /// the loss depends on it.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records an input. Tracked leaves receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Copies `var`'s value into a new untracked leaf, severing gradient flow.
    pub fn detach(&mut self, var: Var) -> Var {
        let value = self.nodes[var.0].value.clone();
        self.constant(value)
    }

    fn image_dims(&self, var: Var) -> Result<Dims> {
        let (batch, channels, height, width) = self.value(var).dims4()?;
        Ok(Dims {
            batch,
            channels,
            height,
            width,
        })
    }

    fn square_kernel(&self, weight: Var) -> Result<(usize, usize, usize)> {
        let (a, b, kh, kw) = self.value(weight).dims4()?;
        if kh != kw {
            return Err(shape_err!("kernel must be square, got {kh}x{kw}"));
        }
        Ok((a, b, kh))
    }

    fn check_bias(&self, bias: Option<Var>, channels: usize) -> Result<()> {
        if let Some(b) = bias {
            if self.value(b).shape() != [channels] {
                return Err(shape_err!(
                    "bias shape {:?} does not match {channels} output channels",
                    self.value(b).shape()
                ));
            }
        }
        Ok(())
    }

    /// 2-d convolution, weight laid out `[Cout, Cin, k, k]`, zero padding.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Var> {
        if stride == 0 || dilation == 0 {
            return Err(invalid!("stride and dilation must be positive"));
        }
        let xd = self.image_dims(input)?;
        let (cout, cin, k) = self.square_kernel(weight)?;
        if cin != xd.channels {
            return Err(shape_err!(
                "conv2d weight expects {cin} input channels, input has {}",
                xd.channels
            ));
        }
        self.check_bias(bias, cout)?;
        let geom = ConvGeometry {
            kernel: k,
            stride,
            padding,
            dilation,
        };
        let (oh, ow) = match (geom.output_extent(xd.height), geom.output_extent(xd.width)) {
            (Some(h), Some(w)) => (h, w),
            _ => {
                return Err(shape_err!(
                    "input {}x{} too small for kernel {k} with dilation {dilation} and padding {padding}",
                    xd.height,
                    xd.width
                ))
            }
        };
        let yd = Dims {
            batch: xd.batch,
            channels: cout,
            height: oh,
            width: ow,
        };
        let data = kernels::conv2d_forward(
            self.value(input).data(),
            xd,
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            cout,
            geom,
            yd,
        );
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.tracked(&deps);
        Ok(self.push(
            Tensor::new(yd.shape(), data)?,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
            rg,
        ))
    }

    /// Transposed convolution, weight laid out `[Cin, Cout, k, k]`.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        if stride == 0 {
            return Err(invalid!("stride must be positive"));
        }
        if output_padding >= stride {
            return Err(invalid!(
                "output_padding {output_padding} must be smaller than stride {stride}"
            ));
        }
        let xd = self.image_dims(input)?;
        let (cin, cout, k) = self.square_kernel(weight)?;
        if cin != xd.channels {
            return Err(shape_err!(
                "conv_transpose2d weight expects {cin} input channels, input has {}",
                xd.channels
            ));
        }
        self.check_bias(bias, cout)?;
        let extent = |n: usize| ((n - 1) * stride + k + output_padding).checked_sub(2 * padding);
        let (oh, ow) = match (extent(xd.height), extent(xd.width)) {
            (Some(h), Some(w)) if h > 0 && w > 0 => (h, w),
            _ => return Err(shape_err!("padding {padding} too large for transposed convolution")),
        };
        let geom = ConvGeometry {
            kernel: k,
            stride,
            padding,
            dilation: 1,
        };
        let yd = Dims {
            batch: xd.batch,
            channels: cout,
            height: oh,
            width: ow,
        };
        let data = kernels::conv_transpose2d_forward(
            self.value(input).data(),
            xd,
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            geom,
            yd,
        );
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.tracked(&deps);
        Ok(self.push(
            Tensor::new(yd.shape(), data)?,
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                geom,
            },
            rg,
        ))
    }

    pub fn pool2d(&mut self, input: Var, mode: PoolMode, window: usize, stride: usize) -> Result<Var> {
        if window == 0 || stride == 0 {
            return Err(invalid!("pooling window and stride must be positive"));
        }
        let xd = self.image_dims(input)?;
        if xd.height < window || xd.width < window {
            return Err(shape_err!(
                "pooling window {window} exceeds spatial extent {}x{}",
                xd.height,
                xd.width
            ));
        }
        let yd = Dims {
            height: (xd.height - window) / stride + 1,
            width: (xd.width - window) / stride + 1,
            ..xd
        };
        let (data, argmax) =
            kernels::pool2d_forward(self.value(input).data(), xd, mode, window, stride, yd);
        let rg = self.tracked(&[input]);
        Ok(self.push(
            Tensor::new(yd.shape(), data)?,
            Op::Pool2d {
                input,
                mode,
                window,
                stride,
                argmax,
            },
            rg,
        ))
    }

    pub fn interpolate2d(&mut self, input: Var, factor: usize, mode: InterpMode) -> Result<Var> {
        if factor == 0 {
            return Err(invalid!("interpolation factor must be at least 1"));
        }
        let xd = self.image_dims(input)?;
        let data = kernels::interpolate_forward(self.value(input).data(), xd, factor, mode);
        let shape = vec![xd.batch, xd.channels, xd.height * factor, xd.width * factor];
        let rg = self.tracked(&[input]);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Interpolate {
                input,
                factor,
                mode,
            },
            rg,
        ))
    }

    /// Per-plane normalization `(x - mean) / sqrt(var + eps)` with population variance.
    pub fn instance_norm2d(&mut self, input: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(invalid!("instance norm eps must be positive"));
        }
        let xd = self.image_dims(input)?;
        let (data, inv_std) = kernels::instance_norm_forward(self.value(input).data(), xd, eps);
        let rg = self.tracked(&[input]);
        Ok(self.push(
            Tensor::new(xd.shape(), data)?,
            Op::InstanceNorm { input, inv_std },
            rg,
        ))
    }

    pub fn pointwise(&mut self, input: Var, kind: Pointwise) -> Result<Var> {
        let x = self.value(input);
        if kind == Pointwise::Log {
            if let Some(bad) = x.data().iter().find(|&&v| !(v > 0.0)) {
                return Err(invalid!("log of non-positive value {bad}"));
            }
        }
        let y = x.map(|v| kind.apply(v));
        let rg = self.tracked(&[input]);
        Ok(self.push(y, Op::Pointwise { input, kind }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.pointwise(x, Pointwise::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var) -> Result<Var> {
        self.pointwise(x, Pointwise::LeakyRelu)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.pointwise(x, Pointwise::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.pointwise(x, Pointwise::Sigmoid)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.pointwise(x, Pointwise::Log)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.pointwise(x, Pointwise::Abs)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.pointwise(x, Pointwise::Negate)
    }

    fn binary(&mut self, lhs: Var, rhs: Var, op: Binary) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(shape_err!(
                "{op:?} needs equal shapes, got {:?} and {:?}",
                a.shape(),
                b.shape()
            ));
        }
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| match op {
                Binary::Add => x + y,
                Binary::Sub => x - y,
                Binary::Mul => x * y,
            })
            .collect();
        let value = Tensor::new(a.shape().to_vec(), data)?;
        let rg = self.tracked(&[lhs, rhs]);
        Ok(self.push(value, Op::Binary { lhs, rhs, op }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul)
    }

    /// `scale * x + shift` elementwise.
    pub fn affine(&mut self, input: Var, scale: f64, shift: f64) -> Result<Var> {
        let y = self.value(input).map(|v| scale * v + shift);
        let rg = self.tracked(&[input]);
        Ok(self.push(y, Op::Affine { input, scale }, rg))
    }

    pub fn scale(&mut self, input: Var, s: f64) -> Result<Var> {
        self.affine(input, s, 0.0)
    }

    /// Multiplies a tensor by a one-element tracked value.
    pub fn mul_scalar(&mut self, input: Var, scalar: Var) -> Result<Var> {
        let s = self.value(scalar);
        if !s.is_scalar() {
            return Err(shape_err!("mul_scalar needs a one-element factor, got {:?}", s.shape()));
        }
        let s = s.item();
        let y = self.value(input).map(|v| v * s);
        let rg = self.tracked(&[input, scalar]);
        Ok(self.push(y, Op::MulScalar { input, scalar }, rg))
    }

    /// Mean over all elements, as a one-element tensor.
    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let m = x.data().iter().sum::<f64>() / x.len() as f64;
        let rg = self.tracked(&[input]);
        Ok(self.push(Tensor::scalar(m), Op::Mean { input }, rg))
    }

    /// Softmax over all elements, using max subtraction.
    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let y = Tensor::new(x.shape().to_vec(), softmax(x.data()))?;
        let rg = self.tracked(&[input]);
        Ok(self.push(y, Op::Softmax { input }, rg))
    }

    /// `sum_i weights[i] * terms[i]` for a weight vector and equally shaped terms.
    pub fn weighted_sum(&mut self, weights: Var, terms: &[Var]) -> Result<Var> {
        let w = self.value(weights);
        if w.len() != terms.len() || terms.is_empty() {
            return Err(shape_err!(
                "weighted_sum has {} weights for {} terms",
                w.len(),
                terms.len()
            ));
        }
        let shape = self.value(terms[0]).shape().to_vec();
        let mut out = vec![0.0; self.value(terms[0]).len()];
        for (&wi, &t) in w.data().iter().zip(terms) {
            let tv = self.value(t);
            if tv.shape() != shape.as_slice() {
                return Err(shape_err!(
                    "weighted_sum terms disagree: {shape:?} vs {:?}",
                    tv.shape()
                ));
            }
            for (o, &v) in out.iter_mut().zip(tv.data()) {
                *o += wi * v;
            }
        }
        let mut deps = terms.to_vec();
        deps.push(weights);
        let rg = self.tracked(&deps);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::WeightedSum {
                weights,
                terms: terms.to_vec(),
            },
            rg,
        ))
    }

    /// Clamps into `[lo, hi]`; clamped entries pass no gradient.
    pub fn clamp(&mut self, input: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(invalid!("clamp bounds reversed: {lo} > {hi}"));
        }
        let y = self.value(input).map(|v| v.clamp(lo, hi));
        let rg = self.tracked(&[input]);
        Ok(self.push(y, Op::Clamp { input, lo, hi }, rg))
    }

    /// Gradients of the scalar `loss` with respect to every tracked node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(shape_err!("backward needs a scalar loss, got shape {:?}", lv.shape()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], var: Var, delta: Vec<f64>) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => existing.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let xd = self.image_dims(*input)?;
                let yd = Dims::from_tensor(&node.value)?;
                if self.requires_grad(*input) {
                    let gx =
                        kernels::conv2d_backward_input(g, yd, self.value(*weight).data(), *geom, xd);
                    self.accumulate(grads, *input, gx);
                }
                if self.requires_grad(*weight) {
                    let gw =
                        kernels::conv2d_backward_weight(g, yd, self.value(*input).data(), xd, *geom);
                    self.accumulate(grads, *weight, gw);
                }
                if let Some(b) = bias {
                    self.accumulate(grads, *b, kernels::channel_sums(g, yd));
                }
            }
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let xd = self.image_dims(*input)?;
                let yd = Dims::from_tensor(&node.value)?;
                if self.requires_grad(*input) {
                    // Adjoint of the adjoint: the input gradient is a plain conv2d.
                    let gx = kernels::conv2d_forward(
                        g,
                        yd,
                        self.value(*weight).data(),
                        None,
                        xd.channels,
                        *geom,
                        xd,
                    );
                    self.accumulate(grads, *input, gx);
                }
                if self.requires_grad(*weight) {
                    let gw = kernels::conv_transpose2d_backward_weight(
                        g,
                        yd,
                        self.value(*input).data(),
                        xd,
                        *geom,
                    );
                    self.accumulate(grads, *weight, gw);
                }
                if let Some(b) = bias {
                    self.accumulate(grads, *b, kernels::channel_sums(g, yd));
                }
            }
            Op::Pool2d {
                input,
                mode,
                window,
                stride,
                argmax,
            } => {
                let xd = self.image_dims(*input)?;
                let yd = Dims::from_tensor(&node.value)?;
                let gx = kernels::pool2d_backward(g, yd, xd, *mode, *window, *stride, argmax);
                self.accumulate(grads, *input, gx);
            }
            Op::Interpolate {
                input,
                factor,
                mode,
            } => {
                let xd = self.image_dims(*input)?;
                let gx = kernels::interpolate_backward(g, xd, *factor, *mode);
                self.accumulate(grads, *input, gx);
            }
            Op::InstanceNorm { input, inv_std } => {
                let xd = self.image_dims(*input)?;
                let gx = kernels::instance_norm_backward(g, node.value.data(), inv_std, xd.plane());
                self.accumulate(grads, *input, gx);
            }
            Op::Pointwise { input, kind } => {
                let x = self.value(*input).data();
                let y = node.value.data();
                let gx = g
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(&gv, (&xv, &yv))| gv * kind.derivative(xv, yv))
                    .collect();
                self.accumulate(grads, *input, gx);
            }
            Op::Binary { lhs, rhs, op } => match op {
                Binary::Add => {
                    self.accumulate(grads, *lhs, g.to_vec());
                    self.accumulate(grads, *rhs, g.to_vec());
                }
                Binary::Sub => {
                    self.accumulate(grads, *lhs, g.to_vec());
                    self.accumulate(grads, *rhs, g.iter().map(|v| -v).collect());
                }
                Binary::Mul => {
                    let (a, b) = (self.value(*lhs).data(), self.value(*rhs).data());
                    let ga = g.iter().zip(b).map(|(x, y)| x * y).collect();
                    let gb = g.iter().zip(a).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *lhs, ga);
                    self.accumulate(grads, *rhs, gb);
                }
            },
            Op::Affine { input, scale } => {
                self.accumulate(grads, *input, g.iter().map(|v| v * scale).collect());
            }
            Op::MulScalar { input, scalar } => {
                let s = self.value(*scalar).item();
                self.accumulate(grads, *input, g.iter().map(|v| v * s).collect());
                let dot = g.iter().zip(self.value(*input).data()).map(|(a, b)| a * b).sum();
                self.accumulate(grads, *scalar, vec![dot]);
            }
            Op::Mean { input } => {
                let n = self.value(*input).len();
                self.accumulate(grads, *input, vec![g[0] / n as f64; n]);
            }
            Op::Softmax { input } => {
                let y = node.value.data();
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                let gx = y.iter().zip(g).map(|(&yv, &gv)| yv * (gv - dot)).collect();
                self.accumulate(grads, *input, gx);
            }
            Op::WeightedSum { weights, terms } => {
                let w = self.value(*weights).data();
                if self.requires_grad(*weights) {
                    let gw = terms
                        .iter()
                        .map(|&t| g.iter().zip(self.value(t).data()).map(|(a, b)| a * b).sum())
                        .collect();
                    self.accumulate(grads, *weights, gw);
                }
                for (&t, &wi) in terms.iter().zip(w) {
                    if self.requires_grad(t) {
                        self.accumulate(grads, t, g.iter().map(|v| v * wi).collect());
                    }
                }
            }
            Op::Clamp { input, lo, hi } => {
                let x = self.value(*input).data();
                let gx = g
                    .iter()
                    .zip(x)
                    .map(|(&gv, &xv)| if xv > *lo && xv < *hi { gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *input, gx);
            }
        }
        Ok(())
    }
}

impl Dims {
    fn from_tensor(t: &Tensor) -> Result<Self> {
        let (batch, channels, height, width) = t.dims4()?;
        Ok(Self {
            batch,
            channels,
            height,
            width,
        })
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
