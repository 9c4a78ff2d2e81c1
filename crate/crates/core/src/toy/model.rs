//! The toy aligner: small encoders on both sides, IMV alignment, Gaussian
//! reconstruction from aligned positions, a linear decoder and a per-token
//! delta predictor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::task::{make_batch, ToyBatch, ToyTask};
use super::train::{Mode, TrainConfig};
use crate::alignment::{context_on_tape, imv_on_tape, AlignmentMatrix};
use crate::attention::{scaled_dot_on_tape, LogitSign};
use crate::error::{Error, Result};
use crate::numerics::{gradcheck, DenseMatrix, GradCheckReport, Tape, Var};
use crate::positions::{
    align_from_positions_on_tape, ap_loss_on_tape, infer_t2, positions_on_tape, scale_positions,
    AlignedPositions, ApLossConfig,
};
use crate::transforms::{hma_on_tape, sma_loss_on_tape, KernelConfig, SmaWeights};

/// Architecture knobs that fix the parameter shapes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Arch {
    pub vocab: usize,
    pub embed_dim: usize,
    pub frame_dim: usize,
    pub hidden_dim: usize,
    /// Half-width of the token-side convolution.
    pub text_radius: usize,
    /// Half-width of the frame-side convolution.
    pub frame_radius: usize,
}

impl Arch {
    pub fn new(task: &ToyTask, cfg: &TrainConfig) -> Self {
        Self {
            vocab: task.vocab_size,
            embed_dim: task.embed_dim,
            frame_dim: task.frame_dim,
            hidden_dim: cfg.hidden_dim,
            text_radius: cfg.text_radius,
            frame_radius: cfg.frame_radius,
        }
    }
}

/// Trainable weights in a fixed order. Index helpers below name each slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub(crate) tensors: Vec<DenseMatrix>,
    arch: Arch,
}

impl Params {
    pub(crate) fn init(arch: Arch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize, std: f64| {
            let normal = Normal::new(0.0, std).expect("positive std");
            DenseMatrix::from_raw(rows, cols, (0..rows * cols).map(|_| normal.sample(&mut rng)).collect())
        };
        let (d, f, h) = (arch.embed_dim, arch.frame_dim, arch.hidden_dim);
        let text_taps = 2 * arch.text_radius + 1;
        let frame_taps = 2 * arch.frame_radius + 1;

        let mut tensors = vec![draw(arch.vocab, d, 1.0)];
        for _ in 0..text_taps {
            tensors.push(draw(d, d, 0.5 / ((d * text_taps) as f64).sqrt()));
        }
        for _ in 0..frame_taps {
            tensors.push(draw(f, d, 1.0 / ((f * frame_taps) as f64).sqrt()));
        }
        tensors.push(draw(d, f, 1.0 / (d as f64).sqrt()));
        tensors.push(DenseMatrix::zeros(1, f));
        tensors.push(draw(d, h, 1.0 / (d as f64).sqrt()));
        tensors.push(DenseMatrix::zeros(1, h));
        tensors.push(draw(h, 1, 1.0 / (h as f64).sqrt()));
        // softplus(0.7) is roughly 1.1 frames per token
        tensors.push(DenseMatrix::filled(1, 1, 0.7));
        Self { tensors, arch }
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(DenseMatrix::len).sum()
    }

    pub(crate) fn arch(&self) -> Arch {
        self.arch
    }

    pub(crate) fn bind(&self, tape: &mut Tape) -> Bound {
        let vars: Vec<Var> = self.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        self.bind_vars(vars)
    }

    /// Names tape variables that already hold this parameter set, in order.
    pub(crate) fn bind_vars(&self, vars: Vec<Var>) -> Bound {
        let text_taps = 2 * self.arch.text_radius + 1;
        let frame_taps = 2 * self.arch.frame_radius + 1;
        let mut it = vars.iter().copied();
        let embed = it.next().unwrap();
        let text_conv = it.by_ref().take(text_taps).collect();
        let frame_conv = it.by_ref().take(frame_taps).collect();
        let mut next = || it.next().unwrap();
        Bound {
            embed,
            text_conv,
            frame_conv,
            out_w: next(),
            out_b: next(),
            pred_w1: next(),
            pred_b1: next(),
            pred_w2: next(),
            pred_b2: next(),
            all: vars,
            arch: self.arch,
        }
    }
}

/// Parameters placed on a tape.
pub(crate) struct Bound {
    embed: Var,
    text_conv: Vec<Var>,
    frame_conv: Vec<Var>,
    out_w: Var,
    out_b: Var,
    pred_w1: Var,
    pred_b1: Var,
    pred_w2: Var,
    pred_b2: Var,
    pub all: Vec<Var>,
    arch: Arch,
}

/// `sum_k shift(x, k) W_k` over `k in -radius..=radius`.
fn conv_rows(tape: &mut Tape, x: Var, taps: &[Var], radius: usize) -> Var {
    let mut acc: Option<Var> = None;
    for (idx, &w) in taps.iter().enumerate() {
        let k = idx as isize - radius as isize;
        let shifted = if k == 0 { x } else { tape.shift_rows(x, k) };
        let term = tape.matmul(shifted, w);
        acc = Some(match acc {
            Some(a) => tape.add(a, term),
            None => term,
        });
    }
    acc.expect("at least one tap")
}

impl Bound {
    /// Text-encoder stand-in: embeddings plus a residual token convolution.
    pub fn encode_text(&self, tape: &mut Tape, tokens: &[usize]) -> Var {
        let emb = tape.gather_rows(self.embed, tokens);
        let conv = conv_rows(tape, emb, &self.text_conv, self.arch.text_radius);
        tape.add(emb, conv)
    }

    /// Mel-encoder stand-in: a linear frame convolution.
    pub fn encode_frames(&self, tape: &mut Tape, frames: Var) -> Var {
        conv_rows(tape, frames, &self.frame_conv, self.arch.frame_radius)
    }

    pub fn decode(&self, tape: &mut Tape, context: Var) -> Var {
        let y = tape.matmul(context, self.out_w);
        tape.add_row_broadcast(y, self.out_b)
    }

    /// Per-token position deltas as a `1 x T1` row, always positive.
    pub fn predict_deltas(&self, tape: &mut Tape, h: Var) -> Var {
        let z = tape.matmul(h, self.pred_w1);
        let z = tape.add_row_broadcast(z, self.pred_b1);
        let z = tape.tanh(z);
        let z = tape.matmul(z, self.pred_w2);
        let z = tape.add_row_broadcast(z, self.pred_b2);
        let z = tape.softplus(z);
        tape.transpose(z)
    }
}

/// Settings the forward pass needs beyond the weights.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ForwardSettings {
    pub mode: Mode,
    pub kernel: KernelConfig,
    pub sma: SmaWeights,
    pub sma_weight: f64,
    pub ap: ApLossConfig,
    pub ap_weight: f64,
    pub sign: LogitSign,
}

impl ForwardSettings {
    pub fn from_config(cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            mode: cfg.mode,
            kernel: KernelConfig::new(cfg.sigma2)?,
            sma: cfg.sma,
            sma_weight: cfg.sma_weight,
            ap: ApLossConfig::new(cfg.epsilon)?,
            ap_weight: cfg.ap_weight,
            sign: if cfg.printed_sign { LogitSign::Negative } else { LogitSign::Positive },
        })
    }
}

/// Handles into one example's training graph.
pub(crate) struct ForwardOut {
    pub total: Var,
    pub recon: Var,
    pub ap: Var,
    pub sma: Option<Var>,
    /// IMV after the mode's monotonic treatment.
    pub imv: Var,
    /// Aligned positions `e` as a `1 x T1` row.
    pub positions: Var,
    /// Alignment rebuilt from positions and fed to the decoder.
    pub alignment: Var,
    /// HMA found no forward motion and used the diagonal ramp instead.
    pub degenerate: bool,
}

/// Teacher-forced training graph for one example.
pub(crate) fn forward(tape: &mut Tape, bound: &Bound, batch: &ToyBatch, s: &ForwardSettings) -> Result<ForwardOut> {
    forward_with_target(tape, bound, batch, s, None)
}

/// [`forward`] with the delta target optionally pinned instead of read off the
/// current positions.
fn forward_with_target(
    tape: &mut Tape,
    bound: &Bound,
    batch: &ToyBatch,
    s: &ForwardSettings,
    pinned: Option<&DenseMatrix>,
) -> Result<ForwardOut> {
    let t1 = batch.t1();
    let t2 = batch.t2();
    let frames = tape.leaf(batch.frames.clone());

    let h = bound.encode_text(tape, &batch.tokens);
    let q = bound.encode_frames(tape, frames);
    let attention = scaled_dot_on_tape(tape, q, h, s.sign);
    let raw = imv_on_tape(tape, attention);
    let mut degenerate = false;
    let imv = match s.mode {
        Mode::Hma => match hma_on_tape(tape, raw, t1) {
            Ok(v) => v,
            Err(Error::DegenerateImv { .. }) => {
                // no forward motion anywhere: fall back to the straight diagonal
                degenerate = true;
                let ramp = (0..t2).map(|j| j as f64 * (t1 - 1) as f64 / (t2 - 1) as f64).collect();
                tape.leaf(DenseMatrix::from_raw(1, t2, ramp))
            }
            Err(e) => return Err(e),
        },
        Mode::Sma | Mode::Nm => raw,
    };

    let e = positions_on_tape(tape, imv, t1, &s.kernel);
    let alignment = align_from_positions_on_tape(tape, e, t2, &s.kernel);
    let context = context_on_tape(tape, alignment, h);
    let out = bound.decode(tape, context);
    let err = tape.sub(out, frames);
    let err = tape.square(err);
    let recon = tape.mean_all(err);

    // delta targets are constants; negative steps of a non-monotone IMV are floored at 0
    let target = match pinned {
        Some(t) => t.clone(),
        None => delta_target(tape.value(e))?,
    };
    let target = tape.leaf(target);
    let pred = bound.predict_deltas(tape, h);
    let ap = ap_loss_on_tape(tape, pred, target, &s.ap);

    let weighted_ap = tape.scale(ap, s.ap_weight);
    let mut total = tape.add(recon, weighted_ap);
    let sma = if s.mode == Mode::Sma {
        let l = sma_loss_on_tape(tape, raw, t1, &s.sma)?;
        let w = tape.scale(l, s.sma_weight);
        total = tape.add(total, w);
        Some(l)
    } else {
        None
    };
    Ok(ForwardOut { total, recon, ap, sma, imv, positions: e, alignment, degenerate })
}

fn delta_target(e: &DenseMatrix) -> Result<DenseMatrix> {
    let deltas: Vec<f64> =
        AlignedPositions::new(e.as_slice().to_vec())?.deltas().into_iter().map(|d| d.max(0.0)).collect();
    Ok(DenseMatrix::from_raw(1, deltas.len(), deltas))
}

/// Finite-difference check of the full training loss against every weight,
/// for a freshly initialised model and one example drawn with `seed`. The
/// delta target is held at its value for the unperturbed weights.
pub fn forward_gradcheck(task: &ToyTask, cfg: &TrainConfig, seed: u64, h: f64, tol: f64) -> Result<GradCheckReport> {
    task.validate()?;
    cfg.validate()?;
    let settings = ForwardSettings::from_config(cfg)?;
    let params = Params::init(Arch::new(task, cfg), seed);
    let batch = make_batch(task, seed)?;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = forward(&mut tape, &bound, &batch, &settings)?;
    let target = delta_target(tape.value(out.positions))?;
    let name = format!("toy_forward[{}]", cfg.mode);
    gradcheck(
        &name,
        |tape, vars| {
            let bound = params.bind_vars(vars.to_vec());
            Ok(forward_with_target(tape, &bound, &batch, &settings, Some(&target))?.total)
        },
        &params.tensors,
        h,
        tol,
    )
}

/// Teacher-forced alignment (the one fed to the decoder) for `batch`.
pub fn teacher_alignment(model: &ToyModel, batch: &ToyBatch) -> Result<AlignmentMatrix> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let out = forward(&mut tape, &bound, batch, &model.settings)?;
    Ok(AlignmentMatrix::from_normalized(tape.value(out.alignment).clone()))
}

/// A trained toy model.
#[derive(Clone, Debug)]
pub struct ToyModel {
    pub(crate) params: Params,
    pub(crate) settings: ForwardSettings,
    pub(crate) steps_trained: usize,
    pub(crate) task: ToyTask,
}

/// Output of [`infer`].
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    /// `T2 x F` predicted frames.
    pub frames: DenseMatrix,
    pub positions: AlignedPositions,
    pub t2: usize,
}

impl ToyModel {
    pub fn steps_trained(&self) -> usize {
        self.steps_trained
    }

    pub fn task(&self) -> &ToyTask {
        &self.task
    }

    pub fn params(&self) -> &Params {
        &self.params
    }
}

/// Generates frames from tokens alone: predicted deltas, positions scaled by
/// `rate`, output length from the positions, then reconstruction and decoding.
pub fn infer(model: &ToyModel, tokens: &[usize], rate: f64) -> Result<Inference> {
    if model.steps_trained == 0 {
        return Err(Error::Untrained);
    }
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("token sequence is empty".into()));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t >= model.params.arch().vocab) {
        return Err(Error::InvalidArgument(format!("token {t} outside the vocabulary")));
    }
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let h = bound.encode_text(&mut tape, tokens);
    let deltas = bound.predict_deltas(&mut tape, h);
    let positions = AlignedPositions::from_deltas(tape.value(deltas).as_slice())?;
    let positions = scale_positions(&positions, rate)?;
    let t2 = if tokens.len() >= 2 {
        infer_t2(&positions)?
    } else {
        // a single token ends one delta after its centre
        ((2.0 * positions.values()[0]).round() as usize).max(1)
    };
    let e = tape.leaf(positions.to_row());
    let alignment = align_from_positions_on_tape(&mut tape, e, t2, &model.settings.kernel);
    let context = context_on_tape(&mut tape, alignment, h);
    let out = bound.decode(&mut tape, context);
    tape.check_finite()?;
    Ok(Inference { frames: tape.value(out).clone(), positions, t2 })
}
