//! Alignment matrices, index mapping vectors and their constraints.

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, Tape, Var};

/// Largest column-sum deviation accepted when an alignment enters the crate.
pub const COLUMN_SUM_TOLERANCE: f64 = 1e-3;

/// Default slack for [`validate_imv`].
pub const DEFAULT_VALIDATION_TOLERANCE: f64 = 1e-6;

/// `T1 x T2` attention weights: rows are input tokens, columns output steps,
/// and each column is a distribution over input tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentMatrix {
    alpha: DenseMatrix,
}

impl AlignmentMatrix {
    /// Validates entries in `[0, 1]` and column sums within
    /// [`COLUMN_SUM_TOLERANCE`] of 1. Columns are never renormalized.
    pub fn new(alpha: DenseMatrix) -> Result<Self> {
        if alpha.rows() == 0 || alpha.cols() == 0 {
            return Err(Error::Shape("alignment matrix must be non-empty".into()));
        }
        if let Some(v) = alpha.as_slice().iter().find(|v| !(-1e-12..=1.0 + 1e-12).contains(*v)) {
            return Err(Error::InvalidArgument(format!("alignment weight {v} outside [0, 1]")));
        }
        check_columns(&alpha, COLUMN_SUM_TOLERANCE)?;
        Ok(Self { alpha })
    }

    /// Wraps output of a softmax-over-rows kernel, which is normalized by construction.
    pub(crate) fn from_normalized(alpha: DenseMatrix) -> Self {
        debug_assert!(check_columns(&alpha, 1e-9).is_ok());
        Self { alpha }
    }

    /// One-hot columns: output step `j` attends input token `indices[j]`.
    pub fn from_path(t1: usize, indices: &[usize]) -> Result<Self> {
        let mut alpha = DenseMatrix::zeros(t1, indices.len());
        for (j, &i) in indices.iter().enumerate() {
            if i >= t1 {
                return Err(Error::InvalidArgument(format!("path index {i} outside 0..{t1}")));
            }
            alpha.set(i, j, 1.0);
        }
        Self::new(alpha)
    }

    pub fn t1(&self) -> usize {
        self.alpha.rows()
    }

    pub fn t2(&self) -> usize {
        self.alpha.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.alpha
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.alpha
    }

    /// Largest `|sum_i alpha_ij - 1|` over columns.
    pub fn max_column_deviation(&self) -> f64 {
        self.alpha.col_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }
}

fn check_columns(alpha: &DenseMatrix, tol: f64) -> Result<()> {
    for (col, sum) in alpha.col_sums().into_iter().enumerate() {
        if (sum - 1.0).abs() > tol {
            return Err(Error::NotNormalized { col, sum });
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Input token positions `p`.
    Input,
    /// Output step positions `q`.
    Output,
}

/// The index vector `{0, 1, ..., L-1}` along one sequence axis.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexVector {
    values: Vec<f64>,
    axis: Axis,
}

impl IndexVector {
    pub fn new(len: usize, axis: Axis) -> Self {
        Self { values: (0..len).map(|i| i as f64).collect(), axis }
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// As a `1 x L` row vector.
    pub fn to_row(&self) -> DenseMatrix {
        DenseMatrix::from_raw(1, self.values.len(), self.values.clone())
    }
}

/// Index mapping vector: expected input position for every output step.
///
/// A raw IMV may violate every constraint; use [`validate_imv`] to check.
#[derive(Clone, Debug, PartialEq)]
pub struct Imv {
    pi: Vec<f64>,
    t1: usize,
}

impl Imv {
    pub fn new(pi: Vec<f64>, t1: usize) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::InvalidArgument("IMV must have at least one entry".into()));
        }
        if t1 == 0 {
            return Err(Error::InvalidArgument("input length T1 must be positive".into()));
        }
        if pi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("IMV entries must be finite".into()));
        }
        Ok(Self { pi, t1 })
    }

    pub fn values(&self) -> &[f64] {
        &self.pi
    }

    pub fn t1(&self) -> usize {
        self.t1
    }

    pub fn t2(&self) -> usize {
        self.pi.len()
    }

    /// `pi_j - pi_{j-1}` for `j >= 1`.
    pub fn deltas(&self) -> Vec<f64> {
        self.pi.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn to_row(&self) -> DenseMatrix {
        DenseMatrix::from_raw(1, self.pi.len(), self.pi.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImvValidationReport {
    /// Every step moves by an amount in `[0, 1]`.
    pub monotone_continuous: bool,
    /// Starts at 0 and ends at `T1 - 1`.
    pub complete: bool,
    /// Steps `j` whose delta falls outside `[0, 1]`, with that delta.
    pub violations: Vec<(usize, f64)>,
    pub start: f64,
    pub end: f64,
}

impl ImvValidationReport {
    pub fn passed(&self) -> bool {
        self.monotone_continuous && self.complete
    }
}

/// `pi_j = sum_i alpha_ij * i`.
pub fn compute_imv(alpha: &AlignmentMatrix) -> Result<Imv> {
    check_columns(alpha.matrix(), COLUMN_SUM_TOLERANCE)?;
    let mut tape = Tape::new();
    let a = tape.leaf(alpha.matrix().clone());
    let pi = imv_on_tape(&mut tape, a);
    Imv::new(tape.value(pi).as_slice().to_vec(), alpha.t1())
}

/// Tape form of [`compute_imv`]: `alpha (T1 x T2) -> pi (1 x T2)`.
pub fn imv_on_tape(tape: &mut Tape, alpha: Var) -> Var {
    let t1 = tape.shape(alpha).0;
    let p = tape.leaf(IndexVector::new(t1, Axis::Input).to_row());
    tape.matmul(p, alpha)
}

/// Checks `0 <= delta <= 1` on every step and the boundary values
/// `pi_0 = 0`, `pi_{T2-1} = T1 - 1`, all within `tol`.
pub fn validate_imv(pi: &Imv, tol: f64) -> ImvValidationReport {
    let violations: Vec<(usize, f64)> = pi
        .deltas()
        .into_iter()
        .enumerate()
        .filter(|(_, d)| *d < -tol || *d > 1.0 + tol)
        .map(|(k, d)| (k + 1, d))
        .collect();
    let start = pi.values()[0];
    let end = pi.values()[pi.t2() - 1];
    let target = (pi.t1() - 1) as f64;
    ImvValidationReport {
        monotone_continuous: violations.is_empty(),
        complete: start.abs() <= tol && (end - target).abs() <= tol,
        violations,
        start,
        end,
    }
}

/// Context vectors `c_j = sum_i alpha_ij * h_i`, returned as `T2 x D`.
pub fn context_map(alpha: &AlignmentMatrix, h: &DenseMatrix) -> Result<DenseMatrix> {
    if h.rows() != alpha.t1() {
        return Err(Error::Shape(format!(
            "alignment has {} input rows but hidden states have {}",
            alpha.t1(),
            h.rows()
        )));
    }
    let mut tape = Tape::new();
    let a = tape.leaf(alpha.matrix().clone());
    let hv = tape.leaf(h.clone());
    let c = context_on_tape(&mut tape, a, hv);
    Ok(tape.value(c).clone())
}

/// Tape form of [`context_map`]: `alpha^T h`.
pub fn context_on_tape(tape: &mut Tape, alpha: Var, h: Var) -> Var {
    let at = tape.transpose(alpha);
    tape.matmul(at, h)
}

/// Attended input index per output step for every hard monotonic path that
/// starts at token 0, ends at token `T1 - 1` and advances by 0 or 1 per step.
/// Paths come out in lexicographic order.
pub fn enumerate_path_indices(t1: usize, t2: usize) -> Result<Vec<Vec<usize>>> {
    if t1 == 0 || t2 == 0 {
        return Err(Error::InvalidArgument("sequence lengths must be positive".into()));
    }
    if t1 > t2 {
        return Err(Error::Infeasible { t1, t2 });
    }
    let mut out = Vec::new();
    let mut path = vec![0usize; t2];
    extend_paths(&mut path, 1, t1, &mut out);
    Ok(out)
}

fn extend_paths(path: &mut Vec<usize>, j: usize, t1: usize, out: &mut Vec<Vec<usize>>) {
    let t2 = path.len();
    if j == t2 {
        if path[t2 - 1] == t1 - 1 {
            out.push(path.clone());
        }
        return;
    }
    let prev = path[j - 1];
    let remaining = t2 - j;
    for step in 0..=1 {
        let next = prev + step;
        // the last token must still be reachable from here
        if next < t1 && (t1 - 1 - next) < remaining {
            path[j] = next;
            extend_paths(path, j + 1, t1, out);
        }
    }
}

/// All hard monotonic, continuous, complete `T1 x T2` alignments.
pub fn enumerate_monotonic_paths(t1: usize, t2: usize) -> Result<Vec<AlignmentMatrix>> {
    enumerate_path_indices(t1, t2)?
        .iter()
        .map(|p| AlignmentMatrix::from_path(t1, p))
        .collect()
}

/// `n choose k` in `u64`.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alignment(rows: &[Vec<f64>]) -> AlignmentMatrix {
        AlignmentMatrix::new(DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn imv_of_identity_and_uniform() {
        let pi = compute_imv(&AlignmentMatrix::new(DenseMatrix::identity(2)).unwrap()).unwrap();
        assert_eq!(pi.values(), &[0.0, 1.0]);
        let pi = compute_imv(&alignment(&[vec![0.5; 3], vec![0.5; 3]])).unwrap();
        assert_eq!(pi.values(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn imv_of_three_by_two() {
        let pi = compute_imv(&alignment(&[vec![0.25, 0.1], vec![0.5, 0.2], vec![0.25, 0.7]])).unwrap();
        assert!((pi.values()[0] - 1.0).abs() < 1e-12);
        assert!((pi.values()[1] - 1.6).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_column_is_rejected() {
        let m = DenseMatrix::from_rows(&[vec![0.5, 1.0], vec![0.6, 0.0]]).unwrap();
        assert!(matches!(AlignmentMatrix::new(m), Err(Error::NotNormalized { col: 0, .. })));
        let ok = DenseMatrix::from_rows(&[vec![0.5005, 1.0], vec![0.5, 0.0]]).unwrap();
        assert!(AlignmentMatrix::new(ok).is_ok());
    }

    #[test]
    fn validation_cases() {
        let r = validate_imv(&Imv::new(vec![0.0, 0.5, 1.0], 2).unwrap(), 1e-6);
        assert!(r.monotone_continuous && r.complete);

        let r = validate_imv(&Imv::new(vec![0.0, -1.0, 1.0], 2).unwrap(), 1e-6);
        assert!(!r.monotone_continuous);
        // the step back to 1 is a jump of 2, also a violation
        assert_eq!(r.violations, vec![(1, -1.0), (2, 2.0)]);

        let r = validate_imv(&Imv::new(vec![0.0, 1.0, 1.5], 2).unwrap(), 1e-6);
        assert!(r.monotone_continuous);
        assert!(!r.complete);
    }

    #[test]
    fn context_of_identity_and_uniform() {
        let h = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5]]).unwrap();
        let id = AlignmentMatrix::new(DenseMatrix::identity(2)).unwrap();
        assert_eq!(context_map(&id, &h).unwrap(), h);

        let uni = alignment(&[vec![0.5; 3], vec![0.5; 3]]);
        let h = DenseMatrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(context_map(&uni, &h).unwrap().as_slice(), &[2.0, 2.0, 2.0]);

        let bad = DenseMatrix::zeros(3, 1);
        assert!(matches!(context_map(&uni, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn path_enumeration_small_cases() {
        assert_eq!(enumerate_path_indices(2, 3).unwrap(), vec![vec![0, 0, 1], vec![0, 1, 1]]);
        assert_eq!(enumerate_path_indices(2, 2).unwrap(), vec![vec![0, 1]]);
        assert_eq!(enumerate_monotonic_paths(3, 5).unwrap().len(), 6);
        assert!(matches!(enumerate_monotonic_paths(4, 3), Err(Error::Infeasible { t1: 4, t2: 3 })));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(2, 3), 0);
    }
}
