//! Aligned positions: where each input token sits on the output time axis.
//!
//! Positions are read off an IMV through a row-normalized Gaussian density
//! over output steps, and an alignment is rebuilt from positions with a
//! column-normalized kernel over tokens. At inference time the positions come
//! from a predictor of per-token deltas, and the output length follows from
//! the last position plus the last delta.

use crate::alignment::{AlignmentMatrix, Axis, Imv, IndexVector};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, Tape, Var};
use crate::transforms::{gaussian_columns, KernelConfig};

/// `T1 x T2` weights whose rows are distributions over output steps.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    gamma: DenseMatrix,
}

impl DensityMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.gamma
    }
}

/// Output-time position of every input token.
///
/// Deltas follow the cumulative convention: the first delta is `e_0` itself,
/// so summing the deltas gives back the positions.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPositions {
    e: Vec<f64>,
}

impl AlignedPositions {
    pub fn new(e: Vec<f64>) -> Result<Self> {
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("aligned positions must be finite".into()));
        }
        Ok(Self { e })
    }

    /// Positions as the running sum of per-token deltas.
    pub fn from_deltas(deltas: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        Self::new(
            deltas
                .iter()
                .map(|d| {
                    acc += d;
                    acc
                })
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.e
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    /// `[e_0, e_1 - e_0, ..., e_{T1-1} - e_{T1-2}]`.
    pub fn deltas(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.e.len());
        let mut prev = 0.0;
        for &v in &self.e {
            out.push(v - prev);
            prev = v;
        }
        out
    }

    pub fn to_row(&self) -> DenseMatrix {
        DenseMatrix::from_raw(1, self.e.len(), self.e.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApLossConfig {
    epsilon: f64,
}

impl Default for ApLossConfig {
    fn default() -> Self {
        Self { epsilon: 1e-6 }
    }
}

impl ApLossConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `gamma_in = softmax_n(-(i - pi_n)^2 / sigma^2)`.
pub fn density_matrix(pi: &Imv, kernel: &KernelConfig) -> DensityMatrix {
    let mut tape = Tape::new();
    let v = tape.leaf(pi.to_row());
    let g = density_on_tape(&mut tape, v, pi.t1(), kernel);
    DensityMatrix { gamma: tape.value(g).clone() }
}

/// Tape form of [`density_matrix`]: `1 x T2` IMV to `T1 x T2` density.
pub fn density_on_tape(tape: &mut Tape, pi: Var, t1: usize, kernel: &KernelConfig) -> Var {
    let p = tape.leaf(IndexVector::new(t1, Axis::Input).to_row());
    let d2 = tape.sq_dist_outer(p, pi);
    let logits = tape.scale(d2, -1.0 / kernel.sigma2());
    tape.softmax_rows(logits)
}

/// `e_i = sum_n gamma_in * n`.
pub fn extract_positions(pi: &Imv, kernel: &KernelConfig) -> AlignedPositions {
    let mut tape = Tape::new();
    let v = tape.leaf(pi.to_row());
    let e = positions_on_tape(&mut tape, v, pi.t1(), kernel);
    AlignedPositions { e: tape.value(e).as_slice().to_vec() }
}

/// Tape form of [`extract_positions`]: `1 x T2` IMV to `1 x T1` positions.
pub fn positions_on_tape(tape: &mut Tape, pi: Var, t1: usize, kernel: &KernelConfig) -> Var {
    let t2 = tape.shape(pi).1;
    let gamma = density_on_tape(tape, pi, t1, kernel);
    let q = tape.leaf(IndexVector::new(t2, Axis::Output).to_row().transpose());
    let e = tape.matmul(gamma, q);
    tape.transpose(e)
}

/// `sum_i |ln(pred_i + eps) - ln(target_i + eps)|`.
pub fn ap_loss(pred_delta: &[f64], target_delta: &[f64], cfg: &ApLossConfig) -> Result<f64> {
    if pred_delta.len() != target_delta.len() {
        return Err(Error::Shape(format!(
            "predicted deltas have length {}, targets {}",
            pred_delta.len(),
            target_delta.len()
        )));
    }
    if let Some(v) = pred_delta.iter().chain(target_delta).find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("position deltas must be non-negative, got {v}")));
    }
    let mut tape = Tape::new();
    let p = tape.leaf(DenseMatrix::from_raw(1, pred_delta.len(), pred_delta.to_vec()));
    let t = tape.leaf(DenseMatrix::from_raw(1, target_delta.len(), target_delta.to_vec()));
    let loss = ap_loss_on_tape(&mut tape, p, t, cfg);
    Ok(tape.scalar(loss))
}

/// Tape form of [`ap_loss`].
pub fn ap_loss_on_tape(tape: &mut Tape, pred: Var, target: Var, cfg: &ApLossConfig) -> Var {
    let p = tape.offset(pred, cfg.epsilon);
    let p = tape.ln(p);
    let t = tape.offset(target, cfg.epsilon);
    let t = tape.ln(t);
    let d = tape.sub(p, t);
    let d = tape.abs(d);
    tape.sum_all(d)
}

/// `alpha_ij = softmax_i(-(e_i - j)^2 / sigma^2)` over `T2` output steps.
pub fn align_from_positions(e: &AlignedPositions, t2: usize, kernel: &KernelConfig) -> Result<AlignmentMatrix> {
    if t2 == 0 {
        return Err(Error::InvalidArgument("output length must be at least 1".into()));
    }
    if e.is_empty() {
        return Err(Error::InvalidArgument("need at least one aligned position".into()));
    }
    let mut tape = Tape::new();
    let v = tape.leaf(e.to_row());
    let a = align_from_positions_on_tape(&mut tape, v, t2, kernel);
    Ok(AlignmentMatrix::from_normalized(tape.value(a).clone()))
}

/// Tape form of [`align_from_positions`]: `1 x T1` positions to `T1 x T2` alignment.
pub fn align_from_positions_on_tape(tape: &mut Tape, e: Var, t2: usize, kernel: &KernelConfig) -> Var {
    let q = tape.leaf(IndexVector::new(t2, Axis::Output).to_row());
    gaussian_columns(tape, e, q, kernel)
}

/// Output length implied by positions: last position plus last delta,
/// rounded to the nearest integer and at least 1.
pub fn infer_t2(e: &AlignedPositions) -> Result<usize> {
    let n = e.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("output length inference needs T1 >= 2, got {n}")));
    }
    let last = e.values()[n - 1];
    let len = (last + (last - e.values()[n - 2])).round();
    Ok(if len < 1.0 { 1 } else { len as usize })
}

/// Multiplies every position by `rate`; rates above 1 slow speech down.
pub fn scale_positions(e: &AlignedPositions, rate: f64) -> Result<AlignedPositions> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidArgument(format!("rate must be positive, got {rate}")));
    }
    AlignedPositions::new(e.values().iter().map(|v| v * rate).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(s2: f64) -> KernelConfig {
        KernelConfig::new(s2).unwrap()
    }

    fn pos(v: &[f64]) -> AlignedPositions {
        AlignedPositions::new(v.to_vec()).unwrap()
    }

    #[test]
    fn density_cases() {
        let g = density_matrix(&Imv::new(vec![0.0, 1.0], 2).unwrap(), &kernel(0.01));
        assert!(g.matrix().max_abs_diff(&DenseMatrix::identity(2)) < 1e-10);

        let g = density_matrix(&Imv::new(vec![0.7; 5], 3).unwrap(), &kernel(0.25));
        assert!(g.matrix().as_slice().iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn extract_cases() {
        let e = extract_positions(&Imv::new(vec![0.0, 1.0, 2.0, 3.0], 4).unwrap(), &kernel(0.01));
        for (i, v) in e.values().iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-10);
        }
        let e = extract_positions(&Imv::new(vec![0.0, 0.0, 1.0, 1.0], 2).unwrap(), &kernel(0.01));
        assert!((e.values()[0] - 0.5).abs() < 1e-10);
        assert!((e.values()[1] - 2.5).abs() < 1e-10);

        let e = extract_positions(&Imv::new(vec![0.4], 3).unwrap(), &kernel(0.25));
        assert_eq!(e.values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn ap_loss_cases() {
        let cfg = ApLossConfig::default();
        assert_eq!(ap_loss(&[0.5, 2.0], &[0.5, 2.0], &cfg).unwrap(), 0.0);
        let eps = 1e-3;
        let cfg = ApLossConfig::new(eps).unwrap();
        let l = ap_loss(&[std::f64::consts::E - eps], &[1.0 - eps], &cfg).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert_eq!(ap_loss(&[0.0], &[0.0], &ApLossConfig::default()).unwrap(), 0.0);
        assert!(ap_loss(&[-0.1], &[0.0], &ApLossConfig::default()).is_err());
        assert!(ap_loss(&[0.1, 0.2], &[0.0], &ApLossConfig::default()).is_err());
        assert!(ApLossConfig::new(0.0).is_err());
    }

    #[test]
    fn reconstruction_from_positions() {
        let a = align_from_positions(&pos(&[0.0, 1.0]), 2, &kernel(0.01)).unwrap();
        assert!(a.matrix().max_abs_diff(&DenseMatrix::identity(2)) < 1e-10);

        let a = align_from_positions(&pos(&[1.3, 1.3, 4.0]), 6, &kernel(0.5)).unwrap();
        for j in 0..6 {
            assert_eq!(a.matrix().get(0, j), a.matrix().get(1, j));
        }
        assert!(align_from_positions(&pos(&[1.0]), 0, &kernel(0.5)).is_err());
    }

    #[test]
    fn length_inference() {
        assert_eq!(infer_t2(&pos(&[2.0, 7.0])).unwrap(), 12);
        assert_eq!(infer_t2(&pos(&[0.0, 1.0])).unwrap(), 2);
        assert_eq!(infer_t2(&pos(&[3.0, 3.0])).unwrap(), 3);
        assert_eq!(infer_t2(&pos(&[0.0, 0.0])).unwrap(), 1);
        assert!(infer_t2(&pos(&[4.0])).is_err());
    }

    #[test]
    fn rate_scaling() {
        let e = pos(&[2.0, 7.0]);
        assert_eq!(scale_positions(&e, 1.0).unwrap(), e);
        let half = scale_positions(&e, 0.5).unwrap();
        assert_eq!(half.values(), &[1.0, 3.5]);
        assert_eq!(infer_t2(&half).unwrap(), 6);
        let slow = scale_positions(&pos(&[0.0, 5.0]), 1.2).unwrap();
        assert_eq!(slow.values(), &[0.0, 6.0]);
        assert_eq!(infer_t2(&slow).unwrap(), 12);
        assert!(scale_positions(&e, 0.0).is_err());
    }

    #[test]
    fn deltas_round_trip() {
        let e = pos(&[1.0, 2.5, 4.5]);
        assert_eq!(e.deltas(), vec![1.0, 1.5, 2.0]);
        assert_eq!(AlignedPositions::from_deltas(&e.deltas()).unwrap(), e);
    }
}
