//! Named gradient checks over random inputs, shared by the command line and
//! the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::attention::{scaled_dot_on_tape, LogitSign};
use crate::error::{Error, Result};
use crate::numerics::{gradcheck, DenseMatrix, GradCheckReport, Tape, Var};
use crate::positions::{align_from_positions_on_tape, ap_loss_on_tape, density_on_tape, positions_on_tape, ApLossConfig};
use crate::toy::{forward_gradcheck, Mode, ToyTask, TrainConfig};
use crate::transforms::{align_from_imv_on_tape, hma_on_tape, sma_loss_on_tape, KernelConfig, SmaWeights};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Every name accepted by [`check_op`].
pub const OPS: &[&str] = &[
    "sma_loss",
    "hma_transform",
    "align_from_imv",
    "scaled_dot_alignment",
    "density_matrix",
    "extract_positions",
    "ap_loss",
    "align_from_positions",
    "toy_forward",
];

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix {
    DenseMatrix::from_raw(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect())
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_raw(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect())
}

/// A raw IMV whose out-of-range steps (backward or longer than one) are
/// always followed by an in-range step.
fn isolated_violations(rng: &mut ChaCha8Rng, t2: usize) -> DenseMatrix {
    let mut pi = vec![rng.gen_range(-0.5..0.5)];
    let mut violated = false;
    for _ in 1..t2 {
        let step = if !violated && rng.gen_bool(0.4) {
            violated = true;
            if rng.gen_bool(0.5) {
                rng.gen_range(-1.5..-0.05)
            } else {
                rng.gen_range(1.05..2.5)
            }
        } else {
            violated = false;
            rng.gen_range(0.05..0.95)
        };
        pi.push(pi[pi.len() - 1] + step);
    }
    DenseMatrix::from_raw(1, t2, pi)
}

/// Reduces a non-scalar output with fixed random weights so that
/// normalisation constraints do not zero the gradient.
fn weighted_sum(tape: &mut Tape, out: Var, weights: &DenseMatrix) -> Var {
    let w = tape.leaf(weights.clone());
    let prod = tape.mul(out, w);
    tape.sum_all(prod)
}

/// Runs the named check on inputs drawn from `seed`.
pub fn check_op(op: &str, seed: u64, h: f64, tol: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t1 = rng.gen_range(3..=6usize);
    let t2 = rng.gen_range(t1..=2 * t1 + 2);
    let kernel = KernelConfig::default();
    match op {
        "sma_loss" => {
            let pi = isolated_violations(&mut rng, t2);
            let w = SmaWeights::default();
            gradcheck(op, |tape, v| sma_loss_on_tape(tape, v[0], t1, &w), &[pi], h, tol)
        }
        "hma_transform" => {
            let pi = uniform(&mut rng, 1, t2, 0.0, (t1 - 1) as f64);
            let w = normal(&mut rng, 1, t2);
            gradcheck(
                op,
                |tape, v| {
                    let out = hma_on_tape(tape, v[0], t1)?;
                    Ok(weighted_sum(tape, out, &w))
                },
                &[pi],
                h,
                tol,
            )
        }
        "align_from_imv" => {
            let pi = uniform(&mut rng, 1, t2, 0.0, (t1 - 1) as f64);
            let w = normal(&mut rng, t1, t2);
            gradcheck(
                op,
                |tape, v| {
                    let out = align_from_imv_on_tape(tape, v[0], t1, &kernel);
                    Ok(weighted_sum(tape, out, &w))
                },
                &[pi],
                h,
                tol,
            )
        }
        "scaled_dot_alignment" => {
            let d = rng.gen_range(2..=6usize);
            let q = normal(&mut rng, t2, d);
            let k = normal(&mut rng, t1, d);
            let w = normal(&mut rng, t1, t2);
            gradcheck(
                op,
                |tape, v| {
                    let out = scaled_dot_on_tape(tape, v[0], v[1], LogitSign::Positive);
                    Ok(weighted_sum(tape, out, &w))
                },
                &[q, k],
                h,
                tol,
            )
        }
        "density_matrix" | "extract_positions" => {
            let pi = uniform(&mut rng, 1, t2, 0.0, (t1 - 1) as f64);
            let density = op == "density_matrix";
            let w = if density { normal(&mut rng, t1, t2) } else { normal(&mut rng, 1, t1) };
            gradcheck(
                op,
                |tape, v| {
                    let out = if density {
                        density_on_tape(tape, v[0], t1, &kernel)
                    } else {
                        positions_on_tape(tape, v[0], t1, &kernel)
                    };
                    Ok(weighted_sum(tape, out, &w))
                },
                &[pi],
                h,
                tol,
            )
        }
        "ap_loss" => {
            let pred = uniform(&mut rng, 1, t1, 0.2, 3.0);
            let target = uniform(&mut rng, 1, t1, 0.2, 3.0);
            let cfg = ApLossConfig::default();
            gradcheck(
                op,
                |tape, v| {
                    let t = tape.leaf(target.clone());
                    Ok(ap_loss_on_tape(tape, v[0], t, &cfg))
                },
                &[pred],
                h,
                tol,
            )
        }
        "align_from_positions" => {
            let mut e: Vec<f64> = (0..t1).map(|_| rng.gen_range(0.0..(t2 - 1) as f64)).collect();
            e.sort_by(f64::total_cmp);
            let w = normal(&mut rng, t1, t2);
            gradcheck(
                op,
                |tape, v| {
                    let out = align_from_positions_on_tape(tape, v[0], t2, &kernel);
                    Ok(weighted_sum(tape, out, &w))
                },
                &[DenseMatrix::from_raw(1, t1, e)],
                h,
                tol,
            )
        }
        "toy_forward" => {
            let cfg = TrainConfig { mode: Mode::Hma, ..Default::default() };
            forward_gradcheck(&ToyTask::default(), &cfg, seed, h, tol)
        }
        other => Err(Error::InvalidArgument(format!("unknown op {other:?}; known ops: {}", OPS.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_one_seed() {
        for op in OPS {
            let r = check_op(op, 1, DEFAULT_STEP, DEFAULT_TOLERANCE).unwrap();
            assert!(r.pass, "{op}: {}", r.max_rel_error);
            assert!(r.checked > 0, "{op}");
        }
    }

    #[test]
    fn unknown_op() {
        assert!(matches!(check_op("nope", 0, 1e-5, 1e-4), Err(Error::InvalidArgument(_))));
    }
}
