//! Soft and hard monotonic constraints on IMVs, and Gaussian reconstruction
//! of an alignment from an IMV.

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentMatrix, Axis, Imv, IndexVector};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, Tape, Var};

/// Terminal values at or below this are treated as "no forward motion" and
/// cannot be rescaled.
pub const DEGENERATE_THRESHOLD: f64 = 1e-8;

/// How the scalar boundary terms of the SMA loss are penalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPenalty {
    /// `x^2`
    #[default]
    Squared,
    /// `|x|`
    Absolute,
}

/// Coefficients of the four SMA terms: negative steps, steps above one,
/// start offset, end offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmaWeights {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub boundary: BoundaryPenalty,
}

impl Default for SmaWeights {
    fn default() -> Self {
        Self { lambda0: 1.0, lambda1: 1.0, lambda2: 1.0, lambda3: 1.0, boundary: BoundaryPenalty::Squared }
    }
}

impl SmaWeights {
    pub fn new(lambda0: f64, lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let w = Self { lambda0, lambda1, lambda2, lambda3, boundary: BoundaryPenalty::Squared };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda0, self.lambda1, self.lambda2, self.lambda3];
        if all.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidArgument(format!("SMA weights must be non-negative, got {all:?}")));
        }
        Ok(())
    }
}

/// Width of the Gaussian reconstruction kernel, in squared index units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    sigma2: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { sigma2: 0.25 }
    }
}

impl KernelConfig {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma^2 must be positive, got {sigma2}")));
        }
        Ok(Self { sigma2 })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

/// Soft monotonic alignment penalty. Zero exactly when every step lies in
/// `[0, 1]`, the IMV starts at 0 and ends at `T1 - 1`.
pub fn sma_loss(pi: &Imv, weights: &SmaWeights) -> Result<f64> {
    weights.validate()?;
    check_sma_lengths(pi.t1(), pi.t2())?;
    let mut tape = Tape::new();
    let v = tape.leaf(pi.to_row());
    let loss = sma_loss_on_tape(&mut tape, v, pi.t1(), weights)?;
    Ok(tape.scalar(loss))
}

fn check_sma_lengths(t1: usize, t2: usize) -> Result<()> {
    if t1 < 2 {
        return Err(Error::InvalidArgument(format!("SMA loss needs T1 >= 2, got {t1}")));
    }
    if t2 < 2 {
        return Err(Error::InvalidArgument(format!("SMA loss needs T2 >= 2, got {t2}")));
    }
    Ok(())
}

/// Tape form of [`sma_loss`] on a `1 x T2` IMV.
pub fn sma_loss_on_tape(tape: &mut Tape, pi: Var, t1: usize, weights: &SmaWeights) -> Result<Var> {
    let t2 = tape.shape(pi).1;
    check_sma_lengths(t1, t2)?;
    let norm = 1.0 / (t1 - 1) as f64;

    let d = tape.diff_cols(pi);
    // |d| - d is 2*max(-d, 0): non-zero only for backward steps
    let ad = tape.abs(d);
    let back = tape.sub(ad, d);
    let back = tape.sum_all(back);
    // |d - 1| + (d - 1) is non-zero only for steps larger than one
    let dm1 = tape.offset(d, -1.0);
    let adm1 = tape.abs(dm1);
    let jump = tape.add(adm1, dm1);
    let jump = tape.sum_all(jump);

    let first = tape.slice_cols(pi, 0, 1);
    let first = tape.scale(first, norm);
    let last = tape.slice_cols(pi, t2 - 1, t2);
    let last = tape.scale(last, norm);
    let last = tape.offset(last, -1.0);
    let (start, end) = match weights.boundary {
        BoundaryPenalty::Squared => (tape.square(first), tape.square(last)),
        BoundaryPenalty::Absolute => (tape.abs(first), tape.abs(last)),
    };

    let terms = [
        (back, weights.lambda0),
        (jump, weights.lambda1),
        (start, weights.lambda2),
        (end, weights.lambda3),
    ];
    let mut total = tape.scale(terms[0].0, terms[0].1);
    for &(term, w) in &terms[1..] {
        let t = tape.scale(term, w);
        total = tape.add(total, t);
    }
    Ok(total)
}

/// Hard monotonic transform: keep only the forward part of every step,
/// re-accumulate from 0, then rescale so the last entry lands on `T1 - 1`.
pub fn hma_transform(pi_raw: &Imv) -> Result<Imv> {
    let mut tape = Tape::new();
    let v = tape.leaf(pi_raw.to_row());
    let out = hma_on_tape(&mut tape, v, pi_raw.t1())?;
    Imv::new(tape.value(out).as_slice().to_vec(), pi_raw.t1())
}

/// Tape form of [`hma_transform`] on a `1 x T2` raw IMV.
pub fn hma_on_tape(tape: &mut Tape, pi_raw: Var, t1: usize) -> Result<Var> {
    let t2 = tape.shape(pi_raw).1;
    if t2 < 2 {
        return Err(Error::InvalidArgument(format!("HMA needs T2 >= 2, got {t2}")));
    }
    let d = tape.diff_cols(pi_raw);
    let d = tape.relu(d);
    let tail = tape.cumsum_cols(d);
    let zero = tape.leaf(DenseMatrix::zeros(1, 1));
    let pi = tape.concat_cols(zero, tail);

    let last = tape.slice_cols(pi, t2 - 1, t2);
    let terminal = tape.scalar(last);
    if terminal <= DEGENERATE_THRESHOLD {
        return Err(Error::DegenerateImv { terminal });
    }
    let inv = tape.recip(last);
    let unit = tape.mul_by_scalar(pi, inv);
    Ok(tape.scale(unit, (t1 - 1) as f64))
}

/// Gaussian-kernel alignment centred on an IMV: column `j` is a softmax over
/// input tokens `i` of `-(i - pi_j)^2 / sigma^2`.
pub fn align_from_imv(pi_star: &Imv, kernel: &KernelConfig) -> AlignmentMatrix {
    let mut tape = Tape::new();
    let v = tape.leaf(pi_star.to_row());
    let out = align_from_imv_on_tape(&mut tape, v, pi_star.t1(), kernel);
    AlignmentMatrix::from_normalized(tape.value(out).clone())
}

/// Tape form of [`align_from_imv`]: `1 x T2` IMV to `T1 x T2` alignment.
pub fn align_from_imv_on_tape(tape: &mut Tape, pi_star: Var, t1: usize, kernel: &KernelConfig) -> Var {
    let p = tape.leaf(IndexVector::new(t1, Axis::Input).to_row());
    gaussian_columns(tape, p, pi_star, kernel)
}

/// `softmax_i(-(rows_i - cols_j)^2 / sigma^2)` laid out `rows x cols`.
pub(crate) fn gaussian_columns(tape: &mut Tape, rows: Var, cols: Var, kernel: &KernelConfig) -> Var {
    let d2 = tape.sq_dist_outer(rows, cols);
    let logits = tape.scale(d2, -1.0 / kernel.sigma2());
    tape.softmax_cols(logits)
}

/// Single-column Gaussian kernel around `centre` over `0..t1`.
fn gaussian_column(centre: f64, t1: usize, kernel: &KernelConfig) -> Vec<f64> {
    let logits = DenseMatrix::from_raw(
        t1,
        1,
        (0..t1).map(|i| -(centre - i as f64).powi(2) / kernel.sigma2()).collect(),
    );
    crate::numerics::softmax_cols_value(&logits).into_vec()
}

/// Running state of the step-by-step hard monotonic attention.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamingHmaState {
    pi: f64,
    p: IndexVector,
}

impl StreamingHmaState {
    pub fn new(t1: usize) -> Self {
        Self { pi: 0.0, p: IndexVector::new(t1, Axis::Input) }
    }

    pub fn pi(&self) -> f64 {
        self.pi
    }

    pub fn t1(&self) -> usize {
        self.p.len()
    }
}

/// Advances the streaming state by one output step: the attended position of
/// `alpha_col` may move the running position forward by at most one, never
/// back, and the returned column is the Gaussian kernel around the new
/// position.
pub fn streaming_hma_step(
    state: StreamingHmaState,
    alpha_col: &[f64],
    kernel: &KernelConfig,
) -> Result<(StreamingHmaState, Vec<f64>)> {
    if alpha_col.len() != state.t1() {
        return Err(Error::Shape(format!(
            "attention column has {} entries, state tracks {} tokens",
            alpha_col.len(),
            state.t1()
        )));
    }
    let attended: f64 = alpha_col.iter().zip(state.p.values()).map(|(a, p)| a * p).sum();
    let step = (attended - state.pi).clamp(0.0, 1.0);
    let pi = state.pi + step;
    let column = gaussian_column(pi, state.t1(), kernel);
    Ok((StreamingHmaState { pi, ..state }, column))
}

/// Whole-sequence form of the streaming recurrence: starting from 0, each
/// entry moves toward the raw IMV by a step clamped to `[0, 1]`. No rescaling
/// is applied, so the result need not be complete.
pub fn clamped_monotonic_imv(pi_raw: &Imv) -> Imv {
    let mut pos = 0.0;
    let pi = pi_raw
        .values()
        .iter()
        .map(|&target| {
            pos += (target - pos).clamp(0.0, 1.0);
            pos
        })
        .collect();
    Imv::new(pi, pi_raw.t1()).expect("finite by construction")
}

/// Batch counterpart of [`streaming_hma_step`] over a full alignment: IMV,
/// clamped recurrence, then Gaussian reconstruction of every column at once.
pub fn hma_clamp_batch(alpha: &AlignmentMatrix, kernel: &KernelConfig) -> Result<(Imv, AlignmentMatrix)> {
    let raw = crate::alignment::compute_imv(alpha)?;
    let pi = clamped_monotonic_imv(&raw);
    let rebuilt = align_from_imv(&pi, kernel);
    Ok((pi, rebuilt))
}
