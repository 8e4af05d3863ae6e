//! Architecture search over a CycleGAN of four supernets.
//!
//! * `OF`: one-step. Every iteration updates `(α, w)` of the generators from
//!   the full objective, then `(α, w)` of the discriminators from their
//!   adversarial losses.
//! * `TF`: two-step. Each iteration takes one `w`-step on the side-A anchored
//!   half of the objective and one `α`-step on the side-B anchored half.
//! * `TH`: two-step on seeded halves `A1, B1` (`w`) and `A2, B2` (`α`).
//! * `THS`: `TH` with the halves exchanged from the swap epoch on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{split_halves, PairSchedule, Side, UnpairedDataset};
use crate::error::{invalid, Error, Result};
use crate::networks::Network;
use crate::objectives::LossBreakdown;
use crate::optim::AdamConfig;
use crate::params::Trainable;
use crate::rng::{rng_for, Stream};
use crate::search_space::{AlphaTable, ArchitectureSpec};
use crate::training::{discriminator_gradients, generator_gradients, Batch, CycleNets, CycleOptimizers, LossConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Of,
    Tf,
    Th,
    Ths,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Of, Scheme::Tf, Scheme::Th, Scheme::Ths];

    pub fn is_two_step(self) -> bool {
        self != Scheme::Of
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Of => "of",
            Scheme::Tf => "tf",
            Scheme::Th => "th",
            Scheme::Ths => "ths",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid!("unknown scheme {s:?} (expected of, tf, th or ths)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub scheme: Scheme,
    #[serde(rename = "N")]
    pub n_cells: usize,
    pub hidden_search: usize,
    /// Hidden dimension written into the emitted specs; defaults to `hidden_search`.
    pub hidden_final: Option<usize>,
    pub epochs: usize,
    /// THS only; defaults to `epochs / 2`.
    pub swap_epoch: Option<usize>,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub seed: u64,
    pub batch_size: usize,
    /// Record which image every step consumed.
    pub trace_access: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Of,
            n_cells: 11,
            hidden_search: 64,
            hidden_final: None,
            epochs: 400,
            swap_epoch: None,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
            batch_size: 1,
            trace_access: false,
        }
    }
}

impl SearchConfig {
    pub fn swap_epoch(&self) -> usize {
        self.swap_epoch.unwrap_or(self.epochs / 2)
    }

    pub fn hidden_final(&self) -> usize {
        self.hidden_final.unwrap_or(self.hidden_search)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 3 {
            return Err(invalid!("N must be at least 3, got {}", self.n_cells));
        }
        if self.hidden_search < 2 {
            return Err(invalid!("hidden_search must be at least 2, got {}", self.hidden_search));
        }
        if self.hidden_final() == 0 {
            return Err(invalid!("hidden_final must be positive"));
        }
        if self.batch_size != 1 {
            return Err(invalid!("only batch size 1 is supported, got {}", self.batch_size));
        }
        if self.scheme == Scheme::Ths && self.swap_epoch() >= self.epochs {
            return Err(invalid!(
                "swap_epoch {} must be below epochs {}",
                self.swap_epoch(),
                self.epochs
            ));
        }
        self.loss.weights.validate()?;
        self.adam.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    Weight,
    Arch,
}

/// One image consumed by one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub epoch: usize,
    pub iter: usize,
    pub step: StepKind,
    pub side: Side,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchEvent {
    pub epoch: usize,
    pub message: String,
}

impl fmt::Display for SearchEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch {}: {}", self.epoch, self.message)
    }
}

/// Current mixture state of the two generators, one entry per slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureTrace {
    pub entropy_ga: Vec<f64>,
    pub entropy_gb: Vec<f64>,
    pub argmax_ga: Vec<usize>,
    pub argmax_gb: Vec<usize>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-iteration log entry. For two-step schemes `loss` is the `w`-step
/// objective and `arch_loss` the `α`-step objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub epoch: usize,
    pub iter: usize,
    pub loss: LossBreakdown,
    pub arch_loss: Option<LossBreakdown>,
    pub discriminator_loss: f64,
    pub mixture: MixtureTrace,
}

pub const METRICS_HEADER: &str = "epoch,iter,adv_ab,adv_ba,cyc,idt_a,idt_b,total,entropy_ga,entropy_gb";

impl IterationRecord {
    pub fn csv_row(&self) -> String {
        let l = &self.loss;
        format!(
            "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.epoch,
            self.iter,
            l.adv_ab,
            l.adv_ba,
            l.cyc,
            l.idt_a,
            l.idt_b,
            l.total,
            mean(&self.mixture.entropy_ga),
            mean(&self.mixture.entropy_gb)
        )
    }
}

pub fn metrics_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Mean total loss of each epoch.
pub fn epoch_means(records: &[IterationRecord]) -> Vec<f64> {
    let Some(last) = records.last() else {
        return Vec::new();
    };
    (0..=last.epoch)
        .map(|e| {
            let t: Vec<f64> = records.iter().filter(|r| r.epoch == e).map(|r| r.loss.total).collect();
            mean(&t)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub specs: CycleNets<ArchitectureSpec, ArchitectureSpec>,
    pub alphas: CycleNets<AlphaTable, AlphaTable>,
    pub records: Vec<IterationRecord>,
    pub events: Vec<SearchEvent>,
    pub access: Vec<Access>,
    pub optimizer_passes: u64,
    pub sampled_pairs: u64,
}

#[derive(Clone, Debug)]
struct Halves {
    a: (Vec<usize>, Vec<usize>),
    b: (Vec<usize>, Vec<usize>),
}

/// A running search: supernets, optimizer state and logs.
pub struct Search<'d> {
    config: SearchConfig,
    data: &'d UnpairedDataset,
    nets: CycleNets<Network, Network>,
    opt: CycleOptimizers,
    halves: Option<Halves>,
    epoch: usize,
    records: Vec<IterationRecord>,
    events: Vec<SearchEvent>,
    access: Vec<Access>,
    sampled_pairs: u64,
}

const WEIGHTS_ONLY: Trainable = Trainable {
    weights: true,
    arch: false,
};
const ARCH_ONLY: Trainable = Trainable {
    weights: false,
    arch: true,
};

impl<'d> Search<'d> {
    pub fn new(config: SearchConfig, data: &'d UnpairedDataset) -> Result<Self> {
        config.validate()?;
        let [c, h, w] = data.image_shape();
        if h % 16 != 0 || w % 16 != 0 {
            return Err(invalid!("image extents {h}x{w} must be multiples of 16"));
        }
        let halves = match config.scheme {
            Scheme::Th | Scheme::Ths => Some(Halves {
                a: split_halves(data.len(Side::A), config.seed, Side::A)?,
                b: split_halves(data.len(Side::B), config.seed, Side::B)?,
            }),
            _ => None,
        };
        let init = |i| rng_for(config.seed, Stream::Init, i);
        let (n, hs) = (config.n_cells, config.hidden_search);
        let nets = CycleNets {
            ga: Network::generator_supernet(n, hs, c, &mut init(0))?,
            gb: Network::generator_supernet(n, hs, c, &mut init(1))?,
            da: Network::discriminator_supernet(hs, c, &mut init(2))?,
            db: Network::discriminator_supernet(hs, c, &mut init(3))?,
        };
        let mut events = Vec::new();
        if let Some(hv) = &halves {
            events.push(SearchEvent {
                epoch: 0,
                message: format!(
                    "split A into {}+{}, B into {}+{}",
                    hv.a.0.len(),
                    hv.a.1.len(),
                    hv.b.0.len(),
                    hv.b.1.len()
                ),
            });
        }
        Ok(Self {
            opt: CycleOptimizers::new(config.adam)?,
            config,
            data,
            nets,
            halves,
            epoch: 0,
            records: Vec::new(),
            events,
            access: Vec::new(),
            sampled_pairs: 0,
        })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn nets(&self) -> &CycleNets<Network, Network> {
        &self.nets
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn events(&self) -> &[SearchEvent] {
        &self.events
    }

    pub fn optimizer_passes(&self) -> u64 {
        self.opt.passes()
    }

    /// Number of (a, b) pairs drawn so far.
    pub fn sampled_pairs(&self) -> u64 {
        self.sampled_pairs
    }

    /// The `(A1, A2)` and `(B1, B2)` halves of TH/THS.
    pub fn halves(&self) -> Option<((&[usize], &[usize]), (&[usize], &[usize]))> {
        self.halves
            .as_ref()
            .map(|h| ((&h.a.0[..], &h.a.1[..]), (&h.b.0[..], &h.b.1[..])))
    }

    pub fn trace(&self) -> MixtureTrace {
        MixtureTrace {
            entropy_ga: self.nets.ga.slot_entropies(),
            entropy_gb: self.nets.gb.slot_entropies(),
            argmax_ga: self.nets.ga.slot_argmax(),
            argmax_gb: self.nets.gb.slot_argmax(),
        }
    }

    fn log_access(&mut self, iter: usize, step: StepKind, batch: (Option<usize>, Option<usize>)) {
        if !self.config.trace_access {
            return;
        }
        for (side, idx) in [(Side::A, batch.0), (Side::B, batch.1)] {
            if let Some(index) = idx {
                self.access.push(Access {
                    epoch: self.epoch,
                    iter,
                    step,
                    side,
                    index,
                });
            }
        }
    }

    fn batch(&self, idx: (Option<usize>, Option<usize>)) -> Batch<'d> {
        let data = self.data;
        Batch {
            a: idx.0.map(|i| &data.side(Side::A)[i]),
            b: idx.1.map(|i| &data.side(Side::B)[i]),
        }
    }

    fn step(&mut self, iter: usize, kind: StepKind, idx: (Option<usize>, Option<usize>), trainable: Trainable) -> Result<(LossBreakdown, f64)> {
        self.log_access(iter, kind, idx);
        let batch = self.batch(idx);
        let g = generator_gradients(&mut self.nets, batch, &self.config.loss, trainable)?;
        self.opt.step_generators(&mut self.nets, trainable)?;
        let d = discriminator_gradients(&mut self.nets, batch, trainable)?;
        self.opt.step_discriminators(&mut self.nets, trainable)?;
        Ok((g, d))
    }

    /// Runs one full epoch.
    pub fn run_epoch(&mut self) -> Result<()> {
        let seed = self.config.seed;
        let epoch = self.epoch;
        let all_a: Vec<usize> = (0..self.data.len(Side::A)).collect();
        let all_b: Vec<usize> = (0..self.data.len(Side::B)).collect();
        let swapped = self.config.scheme == Scheme::Ths && epoch >= self.config.swap_epoch();
        if self.config.scheme == Scheme::Ths && epoch == self.config.swap_epoch() {
            self.events.push(SearchEvent {
                epoch,
                message: "swap: halves exchange training and validation roles".into(),
            });
        }
        let (train, val) = match &self.halves {
            None => (PairSchedule::new(&all_a, &all_b, seed, epoch, 0)?, None),
            Some(h) => {
                let (mut ta, mut va) = (&h.a.0, &h.a.1);
                let (mut tb, mut vb) = (&h.b.0, &h.b.1);
                if swapped {
                    std::mem::swap(&mut ta, &mut va);
                    std::mem::swap(&mut tb, &mut vb);
                }
                (
                    PairSchedule::new(ta, tb, seed, epoch, 0)?,
                    Some(PairSchedule::new(va, vb, seed, epoch, 1)?),
                )
            }
        };
        let iterations = train.iterations().max(val.as_ref().map_or(0, |v| v.iterations()));
        for iter in 0..iterations {
            let (a, b) = train.pair(iter);
            let (loss, arch_loss, discriminator_loss) = match self.config.scheme {
                Scheme::Of => {
                    let (g, d) = self.step(iter, StepKind::Weight, (Some(a), Some(b)), Trainable::ALL)?;
                    self.sampled_pairs += 1;
                    (g, None, d)
                }
                Scheme::Tf => {
                    let (g, d) = self.step(iter, StepKind::Weight, (Some(a), None), WEIGHTS_ONLY)?;
                    let (ga, _) = self.step(iter, StepKind::Arch, (None, Some(b)), ARCH_ONLY)?;
                    self.sampled_pairs += 1;
                    (g, Some(ga), d)
                }
                Scheme::Th | Scheme::Ths => {
                    let (va, vb) = val.as_ref().expect("halved schemes have a validation schedule").pair(iter);
                    let (g, d) = self.step(iter, StepKind::Weight, (Some(a), Some(b)), WEIGHTS_ONLY)?;
                    let (ga, _) = self.step(iter, StepKind::Arch, (Some(va), Some(vb)), ARCH_ONLY)?;
                    self.sampled_pairs += 1;
                    (g, Some(ga), d)
                }
            };
            if !loss.total.is_finite() {
                return Err(invalid!("loss diverged at epoch {epoch}, iteration {iter}"));
            }
            self.records.push(IterationRecord {
                epoch,
                iter,
                loss,
                arch_loss,
                discriminator_loss,
                mixture: self.trace(),
            });
        }
        log::debug!(
            "epoch {epoch}: mean total {:.6}",
            mean(&self.records.iter().filter(|r| r.epoch == epoch).map(|r| r.loss.total).collect::<Vec<_>>())
        );
        self.epoch += 1;
        Ok(())
    }

    /// Discretized architectures of the current supernets.
    pub fn specs(&self) -> Result<CycleNets<ArchitectureSpec, ArchitectureSpec>> {
        let h = self.config.hidden_final();
        Ok(CycleNets {
            ga: self.nets.ga.to_spec(h)?,
            gb: self.nets.gb.to_spec(h)?,
            da: self.nets.da.to_spec(h)?,
            db: self.nets.db.to_spec(h)?,
        })
    }

    pub fn alphas(&self) -> CycleNets<AlphaTable, AlphaTable> {
        let t = |n: &Network| n.alpha_table().expect("supernets carry alpha");
        CycleNets {
            ga: t(&self.nets.ga),
            gb: t(&self.nets.gb),
            da: t(&self.nets.da),
            db: t(&self.nets.db),
        }
    }

    /// Runs the remaining epochs and discretizes.
    pub fn run(mut self) -> Result<SearchOutcome> {
        while self.epoch < self.config.epochs {
            self.run_epoch()?;
        }
        Ok(SearchOutcome {
            specs: self.specs()?,
            alphas: self.alphas(),
            optimizer_passes: self.opt.passes(),
            sampled_pairs: self.sampled_pairs,
            records: self.records,
            events: self.events,
            access: self.access,
        })
    }
}

/// Runs a complete search.
pub fn search(config: SearchConfig, data: &UnpairedDataset) -> Result<SearchOutcome> {
    Search::new(config, data)?.run()
}
