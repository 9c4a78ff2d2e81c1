//! Central finite-difference checks for tape gradients.

use super::matrix::DenseMatrix;
use super::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};

/// Distance to a kink below which an evaluation point is excluded.
pub const KINK_EXCLUSION: f64 = 1e-6;

/// Outcome of [`gradcheck`] for one operation.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub op: String,
    pub tolerance: f64,
    pub max_rel_error: f64,
    /// Relative error per element, one matrix per input. Excluded points hold 0.
    pub errors: Vec<DenseMatrix>,
    /// `(input, flat element index)` pairs skipped because the difference
    /// stencil straddles a ReLU/clamp/abs kink.
    pub excluded: Vec<(usize, usize)>,
    pub checked: usize,
    pub pass: bool,
}

/// Runs `f` on fresh leaves for `inputs` and returns its output together with
/// the gradient of the sum of all output entries with respect to each input.
pub fn forward_backward<F>(f: F, inputs: &[DenseMatrix]) -> Result<(DenseMatrix, Vec<DenseMatrix>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, vars, out) = record(&f, inputs)?;
    let grads: Gradients = tape.backward(out)?;
    let output = tape.value(out).clone();
    Ok((output, vars.iter().map(|&v| grads.wrt(v)).collect()))
}

fn record<F>(f: &F, inputs: &[DenseMatrix]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.check_finite()?;
    Ok((tape, vars, out))
}

fn evaluate<F>(f: &F, inputs: &[DenseMatrix]) -> Result<(f64, Vec<i8>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, _, out) = record(f, inputs)?;
    Ok((tape.value(out).sum(), tape.kink_signature().to_vec()))
}

/// Compares tape gradients of `sum(f(inputs))` against central differences
/// `(f(x+h) - f(x-h)) / 2h`, element by element.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`. Elements whose stencil
/// crosses a kink are listed in `excluded` instead of being compared.
pub fn gradcheck<F>(op: &str, f: F, inputs: &[DenseMatrix], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let (_, analytic) = forward_backward(&f, inputs)?;
    let (first, base_sig) = evaluate(&f, inputs)?;
    let (second, _) = evaluate(&f, inputs)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let mut errors = Vec::with_capacity(inputs.len());
    let mut excluded = Vec::new();
    let mut max_rel_error: f64 = 0.0;
    let mut checked = 0;
    let mut point = inputs.to_vec();

    for (k, input) in inputs.iter().enumerate() {
        let mut err = DenseMatrix::zeros(input.rows(), input.cols());
        for e in 0..input.len() {
            let x = input.as_slice()[e];
            point[k].as_mut_slice()[e] = x + h;
            let (plus, plus_sig) = evaluate(&f, &point)?;
            point[k].as_mut_slice()[e] = x - h;
            let (minus, minus_sig) = evaluate(&f, &point)?;
            point[k].as_mut_slice()[e] = x;

            if plus_sig != base_sig || minus_sig != base_sig {
                excluded.push((k, e));
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[k].as_slice()[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            err.as_mut_slice()[e] = rel;
            max_rel_error = max_rel_error.max(rel);
            checked += 1;
        }
        errors.push(err);
    }

    Ok(GradCheckReport {
        op: op.to_string(),
        tolerance: tol,
        max_rel_error,
        errors,
        excluded,
        checked,
        pass: max_rel_error <= tol,
    })
}
