use rand::Rng;

use super::{init_weights, Model, NORM_EPS};
use crate::autodiff::{Tape, Var};
use crate::error::{invalid, shape_err, Result};
use crate::params::{Bound, ParamGroup, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const BASELINE_RESIDUAL_BLOCKS: usize = 9;

#[derive(Clone, Copy, Debug)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
}

/// The fixed ResNet generator used as the symmetric reference model: a 7×7
/// stem to `H`, two stride-2 convolutions (`2H`, `4H`), nine residual blocks
/// at `4H`, two transposed convolutions back to `H`, a 7×7 convolution to the
/// image channels and `tanh`.
#[derive(Clone, Debug)]
pub struct BaselineGenerator {
    hidden: usize,
    image_channels: usize,
    stem: Layer,
    down: [Layer; 2],
    blocks: Vec<[Layer; 2]>,
    up: [Layer; 2],
    out: Layer,
    params: ParamStore,
}

/// Closed-form parameter count of [`BaselineGenerator`].
pub fn baseline_parameter_count(hidden: usize, image_channels: usize) -> usize {
    let conv = |k: usize, cin: usize, cout: usize| k * k * cin * cout + cout;
    let h = hidden;
    conv(7, image_channels, h)
        + conv(3, h, 2 * h)
        + conv(3, 2 * h, 4 * h)
        + BASELINE_RESIDUAL_BLOCKS * 2 * conv(3, 4 * h, 4 * h)
        + conv(3, 4 * h, 2 * h)
        + conv(3, 2 * h, h)
        + conv(7, h, image_channels)
}

impl BaselineGenerator {
    pub fn new(hidden: usize, image_channels: usize, rng: &mut impl Rng) -> Result<Self> {
        if hidden < 2 {
            return Err(invalid!("baseline hidden dimension must be at least 2, got {hidden}"));
        }
        let mut params = ParamStore::new();
        let mut layer = |name: &str, shape: [usize; 4], cout: usize| Layer {
            weight: params.add(format!("{name}.weight"), ParamGroup::Weight, init_weights(&shape, rng)),
            bias: params.add(format!("{name}.bias"), ParamGroup::Weight, Tensor::zeros(&[cout])),
        };
        let h = hidden;
        let c = image_channels;
        let stem = layer("stem", [h, c, 7, 7], h);
        let down = [
            layer("down1", [2 * h, h, 3, 3], 2 * h),
            layer("down2", [4 * h, 2 * h, 3, 3], 4 * h),
        ];
        let blocks = (0..BASELINE_RESIDUAL_BLOCKS)
            .map(|i| {
                [
                    layer(&format!("blocks.{i}.conv1"), [4 * h, 4 * h, 3, 3], 4 * h),
                    layer(&format!("blocks.{i}.conv2"), [4 * h, 4 * h, 3, 3], 4 * h),
                ]
            })
            .collect();
        // transposed weights are [Cin, Cout, k, k]
        let up = [
            layer("up1", [4 * h, 2 * h, 3, 3], 2 * h),
            layer("up2", [2 * h, h, 3, 3], h),
        ];
        let out = layer("out", [c, h, 7, 7], c);
        Ok(Self {
            hidden,
            image_channels,
            stem,
            down,
            blocks,
            up,
            out,
            params,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn conv(tape: &mut Tape, bound: &Bound, l: Layer, x: Var, stride: usize, pad: usize) -> Result<Var> {
        tape.conv2d(x, bound.var(l.weight), Some(bound.var(l.bias)), stride, pad, 1)
    }

    fn norm_relu(tape: &mut Tape, x: Var) -> Result<Var> {
        let n = tape.instance_norm2d(x, NORM_EPS)?;
        tape.relu(n)
    }
}

impl Model for BaselineGenerator {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let (_, c, hh, ww) = tape.value(x).dims4()?;
        if c != self.image_channels || hh % 4 != 0 || ww % 4 != 0 || hh == 0 || ww == 0 {
            return Err(shape_err!(
                "baseline generator needs {} channels and extents divisible by 4, got {c}x{hh}x{ww}",
                self.image_channels
            ));
        }
        let mut h = Self::conv(tape, bound, self.stem, x, 1, 3)?;
        h = Self::norm_relu(tape, h)?;
        for l in self.down {
            h = Self::conv(tape, bound, l, h, 2, 1)?;
            h = Self::norm_relu(tape, h)?;
        }
        for [c1, c2] in &self.blocks {
            let input = h;
            let mut r = Self::conv(tape, bound, *c1, h, 1, 1)?;
            r = Self::norm_relu(tape, r)?;
            r = Self::conv(tape, bound, *c2, r, 1, 1)?;
            r = tape.instance_norm2d(r, NORM_EPS)?;
            h = tape.add(r, input)?;
        }
        for l in self.up {
            h = tape.conv_transpose2d(h, bound.var(l.weight), Some(bound.var(l.bias)), 2, 1, 1)?;
            h = Self::norm_relu(tape, h)?;
        }
        h = Self::conv(tape, bound, self.out, h, 1, 3)?;
        tape.tanh(h)
    }
}
