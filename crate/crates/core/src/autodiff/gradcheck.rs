use super::{Tape, Var};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`.
const RELATIVE_FLOOR: f64 = 1e-4;

/// One-sided slopes that disagree by more than this fraction mark a kink.
const KINK_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct InputReport {
    pub max_relative_error: f64,
    /// Coordinates compared against central differences.
    pub checked: usize,
    /// Coordinates skipped because the function is not smooth there.
    pub kinks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub inputs: Vec<InputReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.inputs
            .iter()
            .all(|r| r.max_relative_error <= self.tolerance)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.inputs
            .iter()
            .map(|r| r.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn total_kinks(&self) -> usize {
        self.inputs.iter().map(|r| r.kinks).sum()
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if !v.is_scalar() {
        return Err(shape_err!("gradient check needs a scalar function"));
    }
    Ok(v.item())
}

/// Compares reverse-mode gradients of the scalar function `f` against central
/// differences `(f(x+h) - f(x-h)) / 2h` for every coordinate of every input.
///
/// Coordinates where the forward and backward one-sided slopes disagree are
/// reported as kinks and left out of the error statistic.
pub fn check_gradients<F>(f: F, inputs: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let f0 = tape.value(out).item();

    let mut reports = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        let mut report = InputReport {
            max_relative_error: 0.0,
            checked: 0,
            kinks: 0,
        };
        for j in 0..inputs[i].len() {
            let original = inputs[i].data()[j];
            work[i].data_mut()[j] = original + h;
            let fp = evaluate(&f, &work)?;
            work[i].data_mut()[j] = original - h;
            let fm = evaluate(&f, &work)?;
            work[i].data_mut()[j] = original;

            let forward = (fp - f0) / h;
            let backward = (f0 - fm) / h;
            let spread = (forward - backward).abs();
            if spread > KINK_THRESHOLD * forward.abs().max(backward.abs()).max(1.0) {
                report.kinks += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[j];
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            report.max_relative_error = report.max_relative_error.max((a - numeric).abs() / denom);
            report.checked += 1;
        }
        reports.push(report);
    }
    Ok(GradCheckReport {
        inputs: reports,
        tolerance: tol,
    })
}
