//! Scaled dot-product alignment between output-side queries and input-side keys.

use crate::alignment::AlignmentMatrix;
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeqRole {
    /// Input (text) side.
    Key,
    /// Output (frame) side.
    Query,
}

/// `L x D` hidden states of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSeq {
    states: DenseMatrix,
    role: SeqRole,
}

impl EncodedSeq {
    pub fn new(states: DenseMatrix, role: SeqRole) -> Result<Self> {
        if states.cols() == 0 || states.rows() == 0 {
            return Err(Error::Shape("encoded sequence needs at least one step and D >= 1".into()));
        }
        Ok(Self { states, role })
    }

    pub fn states(&self) -> &DenseMatrix {
        &self.states
    }

    pub fn role(&self) -> SeqRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }
}

/// Sign applied to the similarity logits before the softmax.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LogitSign {
    /// Larger dot products attract more weight.
    #[default]
    Positive,
    /// Negated logits, so larger dot products repel.
    Negative,
}

impl LogitSign {
    fn factor(self) -> f64 {
        match self {
            LogitSign::Positive => 1.0,
            LogitSign::Negative => -1.0,
        }
    }
}

/// `alpha_ij = softmax_i(D^-1/2 * q_j . k_i)`, a `T1 x T2` alignment.
pub fn scaled_dot_alignment(queries: &EncodedSeq, keys: &EncodedSeq, sign: LogitSign) -> Result<AlignmentMatrix> {
    if queries.dim() != keys.dim() {
        return Err(Error::Shape(format!(
            "query dimension {} differs from key dimension {}",
            queries.dim(),
            keys.dim()
        )));
    }
    let mut tape = Tape::new();
    let q = tape.leaf(queries.states().clone());
    let k = tape.leaf(keys.states().clone());
    let alpha = scaled_dot_on_tape(&mut tape, q, k, sign);
    tape.check_finite()?;
    Ok(AlignmentMatrix::from_normalized(tape.value(alpha).clone()))
}

/// Tape form of [`scaled_dot_alignment`] on `T2 x D` queries and `T1 x D` keys.
pub fn scaled_dot_on_tape(tape: &mut Tape, queries: Var, keys: Var, sign: LogitSign) -> Var {
    let dim = tape.shape(keys).1;
    let qt = tape.transpose(queries);
    let logits = tape.matmul(keys, qt);
    let logits = tape.scale(logits, sign.factor() / (dim as f64).sqrt());
    tape.softmax_cols(logits)
}
