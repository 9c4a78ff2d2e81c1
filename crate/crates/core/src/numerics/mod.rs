//! Dense matrices, a reverse-mode tape, and finite-difference gradient checks.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{forward_backward, gradcheck, GradCheckReport, KINK_EXCLUSION};
pub use matrix::DenseMatrix;
pub use tape::{Gradients, KinkSignature, Tape, Var};

pub(crate) use tape::softmax_cols_value;
