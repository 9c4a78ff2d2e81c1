//! Monotonic sequence alignment through index mapping vectors (IMVs).
//!
//! An IMV is the expected input position attended at every output step of an
//! alignment matrix. Monotonicity, continuity and completeness of the
//! alignment become simple constraints on the IMV, which this crate enforces
//! softly (a penalty loss) or hard (a ReLU/cumsum/rescale transform), and from
//! which alignments are rebuilt with a Gaussian kernel. Every operation is
//! recorded on a small reverse-mode tape so it can be trained end to end; the
//! [`toy`] module does exactly that on a synthetic duration task.

pub mod alignment;
pub mod attention;
pub mod checks;
pub mod cli;
mod error;
pub mod numerics;
pub mod positions;
pub mod toy;
pub mod transforms;

pub use error::{Error, Result};
