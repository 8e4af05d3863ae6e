//! One generator pass and one discriminator pass of CycleGAN training,
//! shared by the architecture search and by discrete re-training.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::networks::Model;
use crate::objectives::{
    combine_on_tape, cycle_loss, discriminator_objective, generator_adversarial, identity_loss, l1,
    GeneratorAdversarial, LossBreakdown, LossWeights,
};
use crate::optim::{Adam, AdamConfig};
use crate::params::{Bound, ParamGroup, Trainable};
use crate::tensor::Tensor;

/// The four networks of a CycleGAN: `G_A: A→B`, `G_B: B→A`, and the
/// discriminators `D_A` (judges side A) and `D_B` (judges side B).
#[derive(Clone, Debug, PartialEq)]
pub struct CycleNets<G, D> {
    pub ga: G,
    pub gb: G,
    pub da: D,
    pub db: D,
}

/// The images of one step. A missing side drops every term anchored on it.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub a: Option<&'a Tensor>,
    pub b: Option<&'a Tensor>,
}

impl<'a> Batch<'a> {
    pub fn both(a: &'a Tensor, b: &'a Tensor) -> Self {
        Self { a: Some(a), b: Some(b) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub adversarial: GeneratorAdversarial,
}

/// Tape handles of the full objective.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveVars {
    /// `(adv_ab, adv_ba, cyc, idt_a, idt_b)`; `None` when its anchor is absent.
    pub components: [Option<Var>; 5],
    pub total: Var,
}

/// Records the generator objective for `batch` on `tape`.
pub fn generator_objective<G: Model, D: Model>(
    tape: &mut Tape,
    nets: &CycleNets<G, D>,
    bounds: &CycleNets<Bound, Bound>,
    batch: Batch,
    loss: &LossConfig,
) -> Result<ObjectiveVars> {
    let mut c: [Option<Var>; 5] = [None; 5];
    let mut cyc_terms = Vec::new();
    if let Some(a) = batch.a {
        let a = tape.constant(a.clone());
        let fake_b = nets.ga.forward(tape, &bounds.ga, a)?;
        let d = nets.db.forward(tape, &bounds.db, fake_b)?;
        c[0] = Some(generator_adversarial(tape, d, loss.adversarial)?);
        let rec_a = nets.gb.forward(tape, &bounds.gb, fake_b)?;
        cyc_terms.push((rec_a, a));
        let same_a = nets.gb.forward(tape, &bounds.gb, a)?;
        c[4] = Some(identity_loss(tape, same_a, a)?);
    }
    if let Some(b) = batch.b {
        let b = tape.constant(b.clone());
        let fake_a = nets.gb.forward(tape, &bounds.gb, b)?;
        let d = nets.da.forward(tape, &bounds.da, fake_a)?;
        c[1] = Some(generator_adversarial(tape, d, loss.adversarial)?);
        let rec_b = nets.ga.forward(tape, &bounds.ga, fake_a)?;
        cyc_terms.push((rec_b, b));
        let same_b = nets.ga.forward(tape, &bounds.ga, b)?;
        c[3] = Some(identity_loss(tape, same_b, b)?);
    }
    c[2] = match cyc_terms.as_slice() {
        [(ra, a), (rb, b)] => Some(cycle_loss(tape, *ra, *a, *rb, *b)?),
        [(r, x)] => Some(l1(tape, *r, *x)?),
        _ => None,
    };
    let total = combine_on_tape(tape, c, &loss.weights)?;
    Ok(ObjectiveVars { components: c, total })
}

fn breakdown(tape: &Tape, vars: &ObjectiveVars) -> LossBreakdown {
    let v = |i: usize| vars.components[i].map_or(0.0, |x| tape.value(x).item());
    LossBreakdown {
        adv_ab: v(0),
        adv_ba: v(1),
        cyc: v(2),
        idt_a: v(3),
        idt_b: v(4),
        total: tape.value(vars.total).item(),
    }
}

/// Fills the generators' gradient buffers with the gradient of the full
/// objective with respect to the `trainable` groups. Discriminators are
/// constants.
pub fn generator_gradients<G: Model, D: Model>(
    nets: &mut CycleNets<G, D>,
    batch: Batch,
    loss: &LossConfig,
    trainable: Trainable,
) -> Result<LossBreakdown> {
    nets.ga.params_mut().zero_grad();
    nets.gb.params_mut().zero_grad();
    let mut tape = Tape::new();
    let bounds = CycleNets {
        ga: nets.ga.params().bind(&mut tape, trainable),
        gb: nets.gb.params().bind(&mut tape, trainable),
        da: nets.da.params().bind(&mut tape, Trainable::NONE),
        db: nets.db.params().bind(&mut tape, Trainable::NONE),
    };
    let vars = generator_objective(&mut tape, nets, &bounds, batch, loss)?;
    let grads = tape.backward(vars.total)?;
    nets.ga.params_mut().accumulate(&bounds.ga, &grads);
    nets.gb.params_mut().accumulate(&bounds.gb, &grads);
    Ok(breakdown(&tape, &vars))
}

/// Fills the discriminators' gradient buffers from their adversarial losses
/// against the current (frozen) generators. Returns the summed loss.
pub fn discriminator_gradients<G: Model, D: Model>(
    nets: &mut CycleNets<G, D>,
    batch: Batch,
    trainable: Trainable,
) -> Result<f64> {
    let fake_b = batch.a.map(|a| nets.ga.infer(a)).transpose()?;
    let fake_a = batch.b.map(|b| nets.gb.infer(b)).transpose()?;
    nets.da.params_mut().zero_grad();
    nets.db.params_mut().zero_grad();
    let mut tape = Tape::new();
    let bda = nets.da.params().bind(&mut tape, trainable);
    let bdb = nets.db.params().bind(&mut tape, trainable);
    let judge = |tape: &mut Tape, net: &D, bound: &Bound, x: Option<&Tensor>| -> Result<Option<Var>> {
        x.map(|x| {
            let v = tape.constant(x.clone());
            net.forward(tape, bound, v)
        })
        .transpose()
    };
    let db_real = judge(&mut tape, &nets.db, &bdb, batch.b)?;
    let db_fake = judge(&mut tape, &nets.db, &bdb, fake_b.as_ref())?;
    let da_real = judge(&mut tape, &nets.da, &bda, batch.a)?;
    let da_fake = judge(&mut tape, &nets.da, &bda, fake_a.as_ref())?;
    let lb = discriminator_objective(&mut tape, db_real, db_fake)?;
    let la = discriminator_objective(&mut tape, da_real, da_fake)?;
    let total = match (la, lb) {
        (Some(x), Some(y)) => tape.add(x, y)?,
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => return Ok(0.0),
    };
    let grads = tape.backward(total)?;
    nets.da.params_mut().accumulate(&bda, &grads);
    nets.db.params_mut().accumulate(&bdb, &grads);
    Ok(tape.value(total).item())
}

/// Separate Adam states for the weights and architecture weights of each of
/// the four networks.
#[derive(Clone, Debug)]
pub struct CycleOptimizers {
    states: CycleNets<[Adam; 2], [Adam; 2]>,
    passes: u64,
}

fn pair(config: AdamConfig) -> [Adam; 2] {
    [Adam::new(config, ParamGroup::Weight), Adam::new(config, ParamGroup::Arch)]
}

fn step_groups(states: &mut [Adam; 2], net: &mut impl Model, trainable: Trainable) -> Result<()> {
    let [w, a] = states;
    if trainable.weights {
        w.step(net.params_mut())?;
    }
    if trainable.arch {
        a.step(net.params_mut())?;
    }
    Ok(())
}

impl CycleOptimizers {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            states: CycleNets {
                ga: pair(config),
                gb: pair(config),
                da: pair(config),
                db: pair(config),
            },
            passes: 0,
        })
    }

    /// Number of optimizer passes so far; one pass updates either both
    /// generators or both discriminators.
    pub fn passes(&self) -> u64 {
        self.passes
    }

    pub fn step_generators<G: Model, D: Model>(&mut self, nets: &mut CycleNets<G, D>, trainable: Trainable) -> Result<()> {
        step_groups(&mut self.states.ga, &mut nets.ga, trainable)?;
        step_groups(&mut self.states.gb, &mut nets.gb, trainable)?;
        self.passes += 1;
        Ok(())
    }

    pub fn step_discriminators<G: Model, D: Model>(&mut self, nets: &mut CycleNets<G, D>, trainable: Trainable) -> Result<()> {
        step_groups(&mut self.states.da, &mut nets.da, trainable)?;
        step_groups(&mut self.states.db, &mut nets.db, trainable)?;
        self.passes += 1;
        Ok(())
    }
}

/// Generator update followed by discriminator update on the same batch.
pub fn train_step<G: Model, D: Model>(
    nets: &mut CycleNets<G, D>,
    opt: &mut CycleOptimizers,
    batch: Batch,
    loss: &LossConfig,
    trainable: Trainable,
) -> Result<(LossBreakdown, f64)> {
    let g = generator_gradients(nets, batch, loss, trainable)?;
    opt.step_generators(nets, trainable)?;
    let d = discriminator_gradients(nets, batch, trainable)?;
    opt.step_discriminators(nets, trainable)?;
    Ok((g, d))
}
