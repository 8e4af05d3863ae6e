//! Supernets and discrete networks built from cells.
//!
//! A generator is `(e, r × (N-2), d)`: the encoding cell halves the spatial
//! extent at each of its two slots, residual cells keep it, and the decoding
//! cell doubles it at each slot. A discriminator is `(e, e)` followed by a
//! fixed head (1×1 convolution to one channel, sigmoid, spatial mean).
//!
//! Each slot is `operation → instance norm → activation`. In a supernet every
//! slot holds all candidates of its cell type and outputs their β-weighted
//! sum; the norm and activation are applied once to that sum. The final slot
//! of a generator feeds `tanh` directly.

mod baseline;
pub mod checkpoint;
mod size;

pub use baseline::{baseline_parameter_count, BaselineGenerator, BASELINE_RESIDUAL_BLOCKS};
pub use size::{scale_hidden_to_target, BaselineFamily, HiddenScalable, SizeReport, BYTES_PER_PARAMETER};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{InterpMode, PoolMode, Tape, Var};
use crate::error::{invalid, shape_err, Error, Result};
use crate::params::{Bound, ParamGroup, ParamId, ParamStore, Trainable};
use crate::search_space::{
    argmax_first, cell_layout, entropy, mixture_weights, operation_set, AlphaCell, AlphaTable,
    ArchitectureSpec, CellSpec, CellType, OperationKind, Role,
};
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;

/// Something with parameters that maps an image batch to an output.
pub trait Model {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var>;

    /// Forward pass with nothing tracked.
    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params().bind(&mut tape, Trainable::NONE);
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, &bound, xv)?;
        Ok(tape.value(y).clone())
    }

    fn parameter_count(&self) -> usize {
        self.params().count(ParamGroup::Weight)
    }
}

impl Model for Box<dyn Model + Send + Sync> {
    fn params(&self) -> &ParamStore {
        (**self).params()
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        (**self).params_mut()
    }
    fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        (**self).forward(tape, bound, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpatialAction {
    Down,
    Same,
    Up,
}

/// Channel and spatial plan of one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotPlan {
    pub in_channels: usize,
    pub out_channels: usize,
    pub action: SpatialAction,
}

/// Per cell, the plans of its two slots.
pub type LayerPlan = Vec<[SlotPlan; 2]>;

pub fn layer_plan(role: Role, n_cells: usize, hidden: usize, image_channels: usize) -> Result<LayerPlan> {
    if hidden == 0 || image_channels == 0 {
        return Err(invalid!("hidden dimension and image channels must be positive"));
    }
    let layout = cell_layout(role, n_cells)?;
    let slot = |in_channels, out_channels, action| SlotPlan {
        in_channels,
        out_channels,
        action,
    };
    Ok(layout
        .iter()
        .enumerate()
        .map(|(i, t)| match (role, t) {
            (Role::Discriminator, _) if i > 0 => [
                slot(hidden, hidden, SpatialAction::Down),
                slot(hidden, hidden, SpatialAction::Down),
            ],
            (_, CellType::Encoding) => [
                slot(image_channels, hidden, SpatialAction::Down),
                slot(hidden, hidden, SpatialAction::Down),
            ],
            (_, CellType::Residual) => [
                slot(hidden, hidden, SpatialAction::Same),
                slot(hidden, hidden, SpatialAction::Same),
            ],
            (_, CellType::Decoding) => [
                slot(hidden, hidden, SpatialAction::Up),
                slot(hidden, image_channels, SpatialAction::Up),
            ],
        })
        .collect())
}

/// Concrete layer realizing a candidate operation for a spatial action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        kernel: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
    },
    /// 2×2 pooling followed by a 1×1 channel remap.
    PoolRemap(PoolMode),
    /// ×2 upsampling followed by a 3×3 convolution.
    UpsampleConv(InterpMode),
    /// Stride-2 transposed 3×3 convolution.
    TransposedConv,
}

impl LayerKind {
    pub fn for_operation(op: OperationKind, action: SpatialAction) -> Result<Self> {
        use OperationKind::*;
        let conv = |kernel, stride, padding, dilation| LayerKind::Conv {
            kernel,
            stride,
            padding,
            dilation,
        };
        let stride = match action {
            SpatialAction::Down => 2,
            _ => 1,
        };
        Ok(match (op, action) {
            (MaxPool, SpatialAction::Down) => LayerKind::PoolRemap(PoolMode::Max),
            (AvgPool, SpatialAction::Down) => LayerKind::PoolRemap(PoolMode::Avg),
            (Conv4x4, SpatialAction::Down) => conv(4, 2, 1, 1),
            (Conv3x3, SpatialAction::Down | SpatialAction::Same) => conv(3, stride, 1, 1),
            (Conv5x5, SpatialAction::Down | SpatialAction::Same) => conv(5, stride, 2, 1),
            (Conv7x7, SpatialAction::Down | SpatialAction::Same) => conv(7, stride, 3, 1),
            (DilConv3x3, SpatialAction::Down | SpatialAction::Same) => conv(3, stride, 2, 2),
            (DilConv5x5, SpatialAction::Down | SpatialAction::Same) => conv(5, stride, 4, 2),
            (Nearest, SpatialAction::Up) => LayerKind::UpsampleConv(InterpMode::Nearest),
            (Bilinear, SpatialAction::Up) => LayerKind::UpsampleConv(InterpMode::Bilinear),
            (TransConv3x3, SpatialAction::Up) => LayerKind::TransposedConv,
            _ => return Err(invalid!("operation {op} cannot realize a {action:?} slot")),
        })
    }

    /// Weight tensor shape for the given channel counts.
    pub fn weight_shape(self, cin: usize, cout: usize) -> [usize; 4] {
        match self {
            LayerKind::Conv { kernel, .. } => [cout, cin, kernel, kernel],
            LayerKind::PoolRemap(_) => [cout, cin, 1, 1],
            LayerKind::UpsampleConv(_) => [cout, cin, 3, 3],
            LayerKind::TransposedConv => [cin, cout, 3, 3],
        }
    }

    /// Weights plus biases.
    pub fn parameter_count(self, cin: usize, cout: usize) -> usize {
        self.weight_shape(cin, cout).iter().product::<usize>() + cout
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    LeakyRelu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Post {
    NormAct(Activation),
    Identity,
}

#[derive(Clone, Debug)]
struct Candidate {
    kind: OperationKind,
    layer: LayerKind,
    weight: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
struct Slot {
    alpha: Option<ParamId>,
    candidates: Vec<Candidate>,
    post: Post,
}

#[derive(Clone, Debug)]
struct Cell {
    cell_type: CellType,
    slots: [Slot; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetMode {
    Supernet,
    Discrete,
}

/// A cell-stacked generator or discriminator, either as a supernet (mixed
/// operations with architecture weights) or as a discrete network.
#[derive(Clone, Debug)]
pub struct Network {
    role: Role,
    mode: NetMode,
    hidden: usize,
    image_channels: usize,
    cells: Vec<Cell>,
    head: Option<(ParamId, ParamId)>,
    params: ParamStore,
}

fn slot_prefix(cell: usize, slot: usize) -> String {
    format!("cells.{cell}.slot{}", slot + 1)
}

fn init_weights(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    Tensor::from_fn(shape, |_| normal.sample(rng))
}

impl Network {
    fn build(
        role: Role,
        mode: NetMode,
        hidden: usize,
        image_channels: usize,
        ops: &[[Vec<OperationKind>; 2]],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let plan = layer_plan(role, ops.len(), hidden, image_channels)?;
        let layout = cell_layout(role, ops.len())?;
        let activation = match role {
            Role::Generator => Activation::Relu,
            Role::Discriminator => Activation::LeakyRelu,
        };
        let mut params = ParamStore::new();
        let mut cells = Vec::with_capacity(ops.len());
        let last = ops.len() - 1;
        for (i, ((cell_ops, slot_plans), &cell_type)) in ops.iter().zip(&plan).zip(&layout).enumerate() {
            let mut slots = Vec::with_capacity(2);
            for (s, (cands, &sp)) in cell_ops.iter().zip(slot_plans).enumerate() {
                let prefix = slot_prefix(i, s);
                let alpha = (mode == NetMode::Supernet).then(|| {
                    params.add(
                        format!("{prefix}.alpha"),
                        ParamGroup::Arch,
                        Tensor::zeros(&[cands.len()]),
                    )
                });
                let mut candidates = Vec::with_capacity(cands.len());
                for &kind in cands {
                    if !kind.allowed_in(cell_type) {
                        return Err(Error::InvalidSpec(format!(
                            "cell {i}: {kind} is not a {cell_type} operation"
                        )));
                    }
                    let layer = LayerKind::for_operation(kind, sp.action)?;
                    let weight = params.add(
                        format!("{prefix}.{kind}.weight"),
                        ParamGroup::Weight,
                        init_weights(&layer.weight_shape(sp.in_channels, sp.out_channels), rng),
                    );
                    let bias = params.add(
                        format!("{prefix}.{kind}.bias"),
                        ParamGroup::Weight,
                        Tensor::zeros(&[sp.out_channels]),
                    );
                    candidates.push(Candidate {
                        kind,
                        layer,
                        weight,
                        bias,
                    });
                }
                let post = if role == Role::Generator && i == last && s == 1 {
                    Post::Identity
                } else {
                    Post::NormAct(activation)
                };
                slots.push(Slot {
                    alpha,
                    candidates,
                    post,
                });
            }
            let [a, b]: [Slot; 2] = slots.try_into().expect("two slots");
            cells.push(Cell {
                cell_type,
                slots: [a, b],
            });
        }
        let head = (role == Role::Discriminator).then(|| {
            let w = params.add(
                "head.weight",
                ParamGroup::Weight,
                init_weights(&[1, hidden, 1, 1], rng),
            );
            let b = params.add("head.bias", ParamGroup::Weight, Tensor::zeros(&[1]));
            (w, b)
        });
        Ok(Self {
            role,
            mode,
            hidden,
            image_channels,
            cells,
            head,
            params,
        })
    }

    fn supernet(role: Role, n_cells: usize, hidden: usize, image_channels: usize, rng: &mut impl Rng) -> Result<Self> {
        if hidden < 2 {
            return Err(invalid!("search hidden dimension must be at least 2, got {hidden}"));
        }
        let ops: Vec<[Vec<OperationKind>; 2]> = cell_layout(role, n_cells)?
            .into_iter()
            .map(|t| [operation_set(t).to_vec(), operation_set(t).to_vec()])
            .collect();
        Self::build(role, NetMode::Supernet, hidden, image_channels, &ops, rng)
    }

    /// Generator supernet `(e, r × (N-2), d)` with uniform α and N(0, 0.02) weights.
    pub fn generator_supernet(n_cells: usize, hidden: usize, image_channels: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::supernet(Role::Generator, n_cells, hidden, image_channels, rng)
    }

    /// Discriminator supernet `(e, e)` plus the fixed head.
    pub fn discriminator_supernet(hidden: usize, image_channels: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::supernet(Role::Discriminator, 2, hidden, image_channels, rng)
    }

    /// Fresh discrete network for `spec` at hidden dimension `hidden`.
    pub fn discrete(spec: &ArchitectureSpec, hidden: usize, image_channels: usize, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let ops: Vec<[Vec<OperationKind>; 2]> = spec
            .cells
            .iter()
            .map(|c| [vec![c.op1], vec![c.op2]])
            .collect();
        Self::build(spec.role, NetMode::Discrete, hidden, image_channels, &ops, rng)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn mode(&self) -> NetMode {
        self.mode
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn image_channels(&self) -> usize {
        self.image_channels
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Spatial extents must be multiples of this.
    pub fn spatial_multiple(&self) -> usize {
        match self.role {
            Role::Generator => 4,
            Role::Discriminator => 16,
        }
    }

    /// Architecture weights of every slot (supernets only).
    pub fn alpha_table(&self) -> Option<AlphaTable> {
        if self.mode != NetMode::Supernet {
            return None;
        }
        let cells = self
            .cells
            .iter()
            .map(|c| AlphaCell {
                cell_type: c.cell_type,
                alpha: c.slots.clone().map(|s| {
                    self.params
                        .get(s.alpha.expect("supernet slot has alpha"))
                        .value
                        .data()
                        .to_vec()
                }),
            })
            .collect();
        Some(AlphaTable {
            role: self.role,
            cells,
        })
    }

    pub fn set_alpha_table(&mut self, table: &AlphaTable) -> Result<()> {
        if self.mode != NetMode::Supernet {
            return Err(invalid!("only supernets carry architecture weights"));
        }
        if table.role != self.role || table.cells.len() != self.cells.len() {
            return Err(invalid!("alpha table does not match this network's layout"));
        }
        table.validate()?;
        for (cell, tc) in self.cells.iter().zip(&table.cells) {
            for (slot, a) in cell.slots.iter().zip(&tc.alpha) {
                let id = slot.alpha.expect("supernet slot has alpha");
                self.params.get_mut(id).value = Tensor::from_vec(a.clone());
            }
        }
        Ok(())
    }

    /// Per-slot mixture weights β.
    pub fn slot_betas(&self) -> Vec<Vec<f64>> {
        self.cells
            .iter()
            .flat_map(|c| c.slots.iter())
            .map(|s| match s.alpha {
                Some(id) => mixture_weights(self.params.get(id).value.data()),
                None => vec![1.0],
            })
            .collect()
    }

    pub fn slot_entropies(&self) -> Vec<f64> {
        self.slot_betas().iter().map(|b| entropy(b)).collect()
    }

    /// Canonical index of the currently strongest candidate in each slot.
    pub fn slot_argmax(&self) -> Vec<usize> {
        self.slot_betas().iter().map(|b| argmax_first(b)).collect()
    }

    /// The discrete architecture this network currently encodes.
    pub fn to_spec(&self, hidden_dim: usize) -> Result<ArchitectureSpec> {
        let cells = self
            .cells
            .iter()
            .map(|c| {
                let pick = |s: &Slot| match s.alpha {
                    Some(id) => s.candidates[argmax_first(self.params.get(id).value.data())].kind,
                    None => s.candidates[0].kind,
                };
                CellSpec {
                    cell_type: c.cell_type,
                    op1: pick(&c.slots[0]),
                    op2: pick(&c.slots[1]),
                }
            })
            .collect();
        ArchitectureSpec::new(self.role, cells, hidden_dim)
    }

    /// Discrete network for `spec` sharing this supernet's candidate weights.
    pub fn extract_discrete(&self, spec: &ArchitectureSpec) -> Result<Network> {
        let mut rng = crate::rng::rng_for(0, crate::rng::Stream::Init, 0);
        let mut net = Network::discrete(spec, self.hidden, self.image_channels, &mut rng)?;
        let expected = net.params.len();
        let copied = net.params.copy_matching(&self.params)?;
        if copied != expected {
            return Err(invalid!("only {copied} of {expected} parameters found in the supernet"));
        }
        Ok(net)
    }

    pub fn size_report(&self) -> SizeReport {
        SizeReport::from_store(&self.params)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        let m = self.spatial_multiple();
        if c != self.image_channels {
            return Err(shape_err!("expected {} image channels, got {c}", self.image_channels));
        }
        if h < m || w < m || h % m != 0 || w % m != 0 {
            return Err(shape_err!(
                "{} input extents {h}x{w} must be positive multiples of {m}",
                self.role
            ));
        }
        Ok(())
    }

    /// Output of the first `count` cells, before any output activation or head.
    pub fn forward_cells(&self, tape: &mut Tape, bound: &Bound, x: Var, count: usize) -> Result<Var> {
        if count > self.cells.len() {
            return Err(invalid!("network has {} cells, asked for {count}", self.cells.len()));
        }
        self.check_input(tape.value(x))?;
        let mut h = x;
        for cell in &self.cells[..count] {
            let input = h;
            for slot in &cell.slots {
                h = self.apply_slot(tape, bound, slot, h)?;
            }
            if cell.cell_type == CellType::Residual {
                h = tape.add(h, input)?;
            }
        }
        Ok(h)
    }

    fn apply_candidate(tape: &mut Tape, bound: &Bound, cand: &Candidate, x: Var) -> Result<Var> {
        let w = bound.var(cand.weight);
        let b = Some(bound.var(cand.bias));
        match cand.layer {
            LayerKind::Conv {
                stride,
                padding,
                dilation,
                ..
            } => tape.conv2d(x, w, b, stride, padding, dilation),
            LayerKind::PoolRemap(mode) => {
                let p = tape.pool2d(x, mode, 2, 2)?;
                tape.conv2d(p, w, b, 1, 0, 1)
            }
            LayerKind::UpsampleConv(mode) => {
                let u = tape.interpolate2d(x, 2, mode)?;
                tape.conv2d(u, w, b, 1, 1, 1)
            }
            LayerKind::TransposedConv => tape.conv_transpose2d(x, w, b, 2, 1, 1),
        }
    }

    fn apply_slot(&self, tape: &mut Tape, bound: &Bound, slot: &Slot, x: Var) -> Result<Var> {
        let outputs = slot
            .candidates
            .iter()
            .map(|c| Self::apply_candidate(tape, bound, c, x))
            .collect::<Result<Vec<_>>>()?;
        let mixed = match slot.alpha {
            Some(alpha) => {
                let beta = tape.softmax(bound.var(alpha))?;
                tape.weighted_sum(beta, &outputs)?
            }
            None => outputs[0],
        };
        match slot.post {
            Post::Identity => Ok(mixed),
            Post::NormAct(act) => {
                let n = tape.instance_norm2d(mixed, NORM_EPS)?;
                match act {
                    Activation::Relu => tape.relu(n),
                    Activation::LeakyRelu => tape.leaky_relu(n),
                }
            }
        }
    }
}

impl Model for Network {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Generators return an image in `[-1, 1]`; discriminators a one-element
    /// probability.
    fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let h = self.forward_cells(tape, bound, x, self.cells.len())?;
        match self.head {
            None => tape.tanh(h),
            Some((w, b)) => {
                let logits = tape.conv2d(h, bound.var(w), Some(bound.var(b)), 1, 0, 1)?;
                let p = tape.sigmoid(logits)?;
                tape.mean(p)
            }
        }
    }

    fn parameter_count(&self) -> usize {
        self.params.count(ParamGroup::Weight)
    }
}

#[cfg(test)]
mod tests;
