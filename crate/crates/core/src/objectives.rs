//! CycleGAN losses on the tape.
//!
//! Discriminators maximize `log D(real) + log(1 - D(fake))`, implemented as
//! descent on its negation. The generator-side adversarial term defaults to
//! the non-saturating `-log D(G(x))`; the saturating `log(1 - D(G(x)))` is
//! available through [`GeneratorAdversarial`].

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, shape_err, Result};

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

/// Coefficients of the full objective, in component order
/// `(adv_ab, adv_ba, cyc, idt_a, idt_b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub adv_ab: f64,
    pub adv_ba: f64,
    pub cyc: f64,
    pub idt_a: f64,
    pub idt_b: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            adv_ab: 1.0,
            adv_ba: 1.0,
            cyc: 10.0,
            idt_a: 5.0,
            idt_b: 5.0,
        }
    }
}

impl LossWeights {
    pub fn new(values: [f64; 5]) -> Result<Self> {
        let w = Self::from_array(values);
        w.validate()?;
        Ok(w)
    }

    fn from_array([adv_ab, adv_ba, cyc, idt_a, idt_b]: [f64; 5]) -> Self {
        Self {
            adv_ab,
            adv_ba,
            cyc,
            idt_a,
            idt_b,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.adv_ab, self.adv_ba, self.cyc, self.idt_a, self.idt_b]
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.as_array().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid!("loss weights must be finite and non-negative, got {v}"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorAdversarial {
    #[default]
    NonSaturating,
    Saturating,
}

/// Component values of one evaluation of the full objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub adv_ab: f64,
    pub adv_ba: f64,
    pub cyc: f64,
    pub idt_a: f64,
    pub idt_b: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn components(&self) -> [f64; 5] {
        [self.adv_ab, self.adv_ba, self.cyc, self.idt_a, self.idt_b]
    }
}

/// Weighted sum of the five components.
pub fn combined_loss(components: [f64; 5], weights: &LossWeights) -> Result<LossBreakdown> {
    weights.validate()?;
    let total = weighted_total(components, weights);
    let [adv_ab, adv_ba, cyc, idt_a, idt_b] = components;
    Ok(LossBreakdown {
        adv_ab,
        adv_ba,
        cyc,
        idt_a,
        idt_b,
        total,
    })
}

fn weighted_total(components: [f64; 5], weights: &LossWeights) -> f64 {
    components
        .iter()
        .zip(weights.as_array())
        .map(|(c, w)| w * c)
        .sum()
}

fn clamped(tape: &mut Tape, p: Var) -> Result<Var> {
    let v = tape.value(p);
    if !v.is_scalar() {
        return Err(shape_err!("expected a probability scalar, got shape {:?}", v.shape()));
    }
    tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
}

fn log_one_minus(tape: &mut Tape, p: Var) -> Result<Var> {
    let q = tape.affine(p, -1.0, 1.0)?;
    tape.log(q)
}

/// `log d_real + log(1 - d_fake)`.
pub fn adversarial_loss(tape: &mut Tape, d_real: Var, d_fake: Var) -> Result<Var> {
    let r = clamped(tape, d_real)?;
    let f = clamped(tape, d_fake)?;
    let lr = tape.log(r)?;
    let lf = log_one_minus(tape, f)?;
    tape.add(lr, lf)
}

/// What the discriminator descends on for whichever halves are present.
pub fn discriminator_objective(tape: &mut Tape, d_real: Option<Var>, d_fake: Option<Var>) -> Result<Option<Var>> {
    let mut terms = Vec::new();
    if let Some(r) = d_real {
        let r = clamped(tape, r)?;
        terms.push(tape.log(r)?);
    }
    if let Some(f) = d_fake {
        let f = clamped(tape, f)?;
        terms.push(log_one_minus(tape, f)?);
    }
    let Some(mut sum) = terms.pop() else {
        return Ok(None);
    };
    for t in terms {
        sum = tape.add(t, sum)?;
    }
    tape.neg(sum).map(Some)
}

/// Generator-side adversarial term for a discriminator output on a fake.
pub fn generator_adversarial(tape: &mut Tape, d_fake: Var, form: GeneratorAdversarial) -> Result<Var> {
    let f = clamped(tape, d_fake)?;
    match form {
        GeneratorAdversarial::NonSaturating => {
            let l = tape.log(f)?;
            tape.neg(l)
        }
        GeneratorAdversarial::Saturating => log_one_minus(tape, f),
    }
}

/// Mean absolute difference.
pub fn l1(tape: &mut Tape, x: Var, y: Var) -> Result<Var> {
    let d = tape.sub(x, y)?;
    let a = tape.abs(d)?;
    tape.mean(a)
}

/// `mean|a_rec - a| + mean|b_rec - b|`.
pub fn cycle_loss(tape: &mut Tape, a_rec: Var, a: Var, b_rec: Var, b: Var) -> Result<Var> {
    let la = l1(tape, a_rec, a)?;
    let lb = l1(tape, b_rec, b)?;
    tape.add(la, lb)
}

/// `mean|G(b) - b|`.
pub fn identity_loss(tape: &mut Tape, g_of_b: Var, b: Var) -> Result<Var> {
    l1(tape, g_of_b, b)
}

/// Tape form of the weighted sum; absent components count as zero.
pub fn combine_on_tape(tape: &mut Tape, components: [Option<Var>; 5], weights: &LossWeights) -> Result<Var> {
    weights.validate()?;
    let mut total: Option<Var> = None;
    for (c, w) in components.into_iter().zip(weights.as_array()) {
        let Some(c) = c else { continue };
        let term = tape.scale(c, w)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    total.ok_or_else(|| invalid!("objective has no components"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn scalar_pair(tape: &mut Tape, r: f64, f: f64) -> (Var, Var) {
        (tape.leaf(Tensor::scalar(r), true), tape.leaf(Tensor::scalar(f), true))
    }

    #[test]
    fn adversarial_examples() {
        let mut tape = Tape::new();
        let (r, f) = scalar_pair(&mut tape, 0.5, 0.5);
        let l = adversarial_loss(&mut tape, r, f).unwrap();
        assert!((tape.value(l).item() - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((tape.value(l).item() + 1.386294).abs() < 1e-6);

        let (r, f) = scalar_pair(&mut tape, 1.0 - PROB_EPS, PROB_EPS);
        let l = adversarial_loss(&mut tape, r, f).unwrap();
        assert!(tape.value(l).item().abs() < 1e-6);

        let (r, f) = scalar_pair(&mut tape, 0.9, 0.1);
        let l = adversarial_loss(&mut tape, r, f).unwrap();
        assert!((tape.value(l).item() + 0.21072).abs() < 1e-5);
    }

    #[test]
    fn adversarial_clamps_extremes() {
        let mut tape = Tape::new();
        let (r, f) = scalar_pair(&mut tape, 0.0, 1.0);
        let l = adversarial_loss(&mut tape, r, f).unwrap();
        assert!(tape.value(l).item().is_finite());
        assert!((tape.value(l).item() - 2.0 * PROB_EPS.ln()).abs() < 1e-6);
    }

    #[test]
    fn adversarial_fake_gradient_is_minus_inverse() {
        for df in [0.1, 0.3, 0.77] {
            let mut tape = Tape::new();
            let (r, f) = scalar_pair(&mut tape, 0.6, df);
            let l = adversarial_loss(&mut tape, r, f).unwrap();
            let g = tape.backward(l).unwrap();
            assert!((g.get(f).unwrap()[0] + 1.0 / (1.0 - df)).abs() < 1e-12);
            let report = check_gradients(
                |t, v| adversarial_loss(t, v[0], v[1]),
                &[Tensor::scalar(0.6), Tensor::scalar(df)],
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(report.passed(), "{report:?}");
        }
    }

    #[test]
    fn generator_forms() {
        let mut tape = Tape::new();
        let f = tape.leaf(Tensor::scalar(0.25), true);
        let ns = generator_adversarial(&mut tape, f, GeneratorAdversarial::NonSaturating).unwrap();
        let s = generator_adversarial(&mut tape, f, GeneratorAdversarial::Saturating).unwrap();
        assert!((tape.value(ns).item() + 0.25f64.ln()).abs() < 1e-12);
        assert!((tape.value(s).item() - 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn discriminator_objective_negates_available_halves() {
        let mut tape = Tape::new();
        let (r, f) = scalar_pair(&mut tape, 0.9, 0.2);
        let both = discriminator_objective(&mut tape, Some(r), Some(f)).unwrap().unwrap();
        assert!((tape.value(both).item() + 0.9f64.ln() + 0.8f64.ln()).abs() < 1e-12);
        let real = discriminator_objective(&mut tape, Some(r), None).unwrap().unwrap();
        assert!((tape.value(real).item() + 0.9f64.ln()).abs() < 1e-12);
        assert!(discriminator_objective(&mut tape, None, None).unwrap().is_none());
    }

    fn brute_l1(x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..x.len() {
            s += (x[i] - y[i]).abs();
        }
        s / x.len() as f64
    }

    #[test]
    fn cycle_examples() {
        let mut tape = Tape::new();
        let a = Tensor::from_fn(&[1, 3, 4, 4], |i| (i as f64 * 0.37).sin());
        let b = Tensor::from_fn(&[1, 3, 4, 4], |i| (i as f64 * 0.11).cos());
        let av = tape.constant(a.clone());
        let bv = tape.constant(b.clone());
        let zero = cycle_loss(&mut tape, av, av, bv, bv).unwrap();
        assert_eq!(tape.value(zero).item(), 0.0);
        let shifted = tape.constant(a.map(|v| v + 0.1));
        let l = cycle_loss(&mut tape, shifted, av, bv, bv).unwrap();
        assert!((tape.value(l).item() - 0.1).abs() < 1e-12);
        let wrong = tape.constant(Tensor::zeros(&[1, 3, 4, 2]));
        assert!(cycle_loss(&mut tape, wrong, av, bv, bv).is_err());
    }

    #[test]
    fn identity_examples() {
        let mut tape = Tape::new();
        let b = Tensor::from_fn(&[1, 3, 4, 4], |i| (i as f64).sqrt() - 2.0);
        let bv = tape.constant(b.clone());
        let zero = identity_loss(&mut tape, bv, bv).unwrap();
        assert_eq!(tape.value(zero).item(), 0.0);
        let off = tape.constant(b.map(|v| v - 0.7));
        let l = identity_loss(&mut tape, off, bv).unwrap();
        assert!((tape.value(l).item() - 0.7).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn l1_losses_match_elementwise_oracle(
            x in prop::collection::vec(-1.0f64..1.0, 12),
            y in prop::collection::vec(-1.0f64..1.0, 12),
            u in prop::collection::vec(-1.0f64..1.0, 12),
            w in prop::collection::vec(-1.0f64..1.0, 12),
        ) {
            let t = |v: &Vec<f64>| Tensor::new(vec![1, 3, 2, 2], v.clone()).unwrap();
            let mut tape = Tape::new();
            let (xv, yv, uv, wv) = (tape.constant(t(&x)), tape.constant(t(&y)), tape.constant(t(&u)), tape.constant(t(&w)));
            let c = cycle_loss(&mut tape, xv, yv, uv, wv).unwrap();
            prop_assert!((tape.value(c).item() - (brute_l1(&x, &y) + brute_l1(&u, &w))).abs() <= 1e-12);
            let i = identity_loss(&mut tape, xv, yv).unwrap();
            prop_assert!((tape.value(i).item() - brute_l1(&x, &y)).abs() <= 1e-12);
            prop_assert!(tape.value(i).item() >= 0.0);
            let (nx, ny) = (tape.constant(t(&x).map(|v| -v)), tape.constant(t(&y).map(|v| -v)));
            let flipped = identity_loss(&mut tape, nx, ny).unwrap();
            prop_assert_eq!(tape.value(flipped).item(), tape.value(i).item());
        }

        #[test]
        fn combined_is_linear_in_each_component(
            c in prop::array::uniform5(-3.0f64..3.0),
            k in 0usize..5,
            delta in 0.01f64..1.0,
        ) {
            let w = LossWeights::default();
            let base = combined_loss(c, &w).unwrap().total;
            let mut bumped = c;
            bumped[k] += delta;
            let slope = (combined_loss(bumped, &w).unwrap().total - base) / delta;
            prop_assert!((slope - w.as_array()[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn combined_examples() {
        let w = LossWeights::default();
        assert_eq!(combined_loss([1.0; 5], &w).unwrap().total, 22.0);
        let adv_only = LossWeights::new([1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = combined_loss([0.3, -0.8, 4.0, 2.0, 1.0], &adv_only).unwrap();
        assert_eq!(b.total, 0.3 + -0.8);
        let b = combined_loss([-1.386294, -1.386294, 0.2, 0.1, 0.1], &w).unwrap();
        assert!((b.total - 0.227412).abs() < 1e-6);
        assert!(LossWeights::new([1.0, -1.0, 10.0, 5.0, 5.0]).is_err());
    }

    #[test]
    fn tape_combination_matches_scalar_form() {
        let vals = [0.4, -1.1, 0.25, 0.05, 0.5];
        let mut tape = Tape::new();
        let vars = vals.map(|v| Some(tape.leaf(Tensor::scalar(v), true)));
        let t = combine_on_tape(&mut tape, vars, &LossWeights::default()).unwrap();
        let expected = combined_loss(vals, &LossWeights::default()).unwrap().total;
        assert!((tape.value(t).item() - expected).abs() < 1e-12);
        let g = tape.backward(t).unwrap();
        for (v, w) in vars.iter().zip(LossWeights::default().as_array()) {
            assert_eq!(g.get(v.unwrap()).unwrap()[0], w);
        }
        assert!(combine_on_tape(&mut tape, [None; 5], &LossWeights::default()).is_err());
    }
}
