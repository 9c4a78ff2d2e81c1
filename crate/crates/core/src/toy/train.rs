//! Training loop for the toy aligner and its report.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{alignment_accuracy, diagonality};
use super::model::{forward, Arch, ForwardSettings, Params, ToyModel};
use super::task::{sample_batch, ToyBatch, ToyTask};
use crate::alignment::Imv;
use crate::error::{Error, Result};
use crate::transforms::align_from_imv;
use crate::numerics::{DenseMatrix, Tape};
use crate::transforms::{KernelConfig, SmaWeights};

/// Which monotonic treatment the IMV gets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// No constraint: the raw IMV drives reconstruction.
    #[serde(rename = "NM")]
    Nm,
    /// Raw IMV plus the soft monotonic penalty.
    #[serde(rename = "SMA")]
    Sma,
    /// Hard monotonic transform of the IMV.
    #[serde(rename = "HMA")]
    Hma,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Nm => "NM",
            Mode::Sma => "SMA",
            Mode::Hma => "HMA",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NM" => Ok(Mode::Nm),
            "SMA" => Ok(Mode::Sma),
            "HMA" => Ok(Mode::Hma),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}, expected NM, SMA or HMA"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub sma: SmaWeights,
    /// Multiplier on the SMA penalty (SMA mode only).
    pub sma_weight: f64,
    /// Multiplier on the aligned-position loss.
    pub ap_weight: f64,
    pub epsilon: f64,
    pub sigma2: f64,
    /// Negate the attention logits.
    pub printed_sign: bool,
    pub hidden_dim: usize,
    pub text_radius: usize,
    pub frame_radius: usize,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
    /// Alignment metrics are computed every this many steps (and at the end).
    pub eval_every: usize,
    pub eval_size: usize,
    /// Evaluation accuracy at which the alignment counts as converged.
    pub accuracy_threshold: f64,
    pub seed: u64,
    /// Line-delimited JSON records, one per step.
    pub report_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Hma,
            optimizer: Optimizer::Sgd,
            learning_rate: 1e-2,
            steps: 2000,
            batch_size: 8,
            sma: SmaWeights::default(),
            sma_weight: 1.0,
            ap_weight: 0.1,
            epsilon: 1e-6,
            sigma2: 0.25,
            printed_sign: false,
            hidden_dim: 16,
            text_radius: 1,
            frame_radius: 2,
            clip_norm: 5.0,
            eval_every: 100,
            eval_size: 128,
            accuracy_threshold: 0.85,
            seed: 0,
            report_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.eval_size == 0 || self.eval_every == 0 {
            return bad("batch_size, eval_size and eval_every must be positive");
        }
        if !(0.0..=1.0).contains(&self.accuracy_threshold) {
            return bad("accuracy_threshold must lie in [0, 1]");
        }
        if !(self.sma_weight >= 0.0 && self.ap_weight >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        self.sma.validate()?;
        KernelConfig::new(self.sigma2)?;
        Ok(())
    }
}

/// Losses of one optimisation step, averaged over the batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub recon: f64,
    pub ap: f64,
    pub sma: Option<f64>,
    pub total: f64,
    /// Examples whose IMV had no forward motion (HMA only).
    pub degenerate: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagonality: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub accuracy: f64,
    pub diagonality: f64,
    pub recon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: Mode,
    /// Record `k` holds the losses measured before update `k` is applied; the
    /// last record is measured after the final update.
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    pub final_accuracy: f64,
    pub final_diagonality: f64,
    pub steps_to_threshold: Option<usize>,
}

impl TrainReport {
    pub fn reconstruction_losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.recon).collect()
    }

    pub fn final_recon(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.recon)
    }
}

struct Adam {
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &[DenseMatrix]) -> Self {
        let zeros = |p: &DenseMatrix| DenseMatrix::zeros(p.rows(), p.cols());
        Self { m: params.iter().map(zeros).collect(), v: params.iter().map(zeros).collect(), t: 0 }
    }

    fn step(&mut self, params: &mut [DenseMatrix], grads: &[DenseMatrix], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            for (((x, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                *mi = Self::BETA1 * *mi + (1.0 - Self::BETA1) * gi;
                *vi = Self::BETA2 * *vi + (1.0 - Self::BETA2) * gi * gi;
                *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + Self::EPS);
            }
        }
    }
}

struct Measured {
    record: StepRecord,
    grads: Vec<DenseMatrix>,
}

fn measure(params: &Params, batch: &[ToyBatch], settings: &ForwardSettings, step: usize) -> Result<Measured> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let n = batch.len() as f64;
    let mut total = None;
    let (mut recon, mut ap, mut sma) = (0.0, 0.0, 0.0);
    let mut degenerate = 0;
    for example in batch {
        let out = forward(&mut tape, &bound, example, settings).map_err(|e| match e {
            Error::NonFinite { .. } => Error::Diverged { step },
            other => other,
        })?;
        degenerate += usize::from(out.degenerate);
        recon += tape.scalar(out.recon) / n;
        ap += tape.scalar(out.ap) / n;
        if let Some(s) = out.sma {
            sma += tape.scalar(s) / n;
        }
        total = Some(match total {
            Some(t) => tape.add(t, out.total),
            None => out.total,
        });
    }
    let total = tape.scale(total.expect("non-empty batch"), 1.0 / n);
    let value = tape.scalar(total);
    if !value.is_finite() {
        return Err(Error::Diverged { step });
    }
    let grads = tape.backward(total).map_err(|_| Error::Diverged { step })?;
    Ok(Measured {
        record: StepRecord {
            step,
            recon,
            ap,
            sma: (settings.mode == Mode::Sma).then_some(sma),
            total: value,
            degenerate,
            accuracy: None,
            diagonality: None,
        },
        grads: bound.all.iter().map(|&v| grads.wrt(v)).collect(),
    })
}

/// Teacher-forced alignment metrics averaged over `examples`.
pub(crate) fn evaluate(params: &Params, examples: &[ToyBatch], settings: &ForwardSettings) -> Result<(f64, f64, f64)> {
    let (mut acc, mut diag, mut recon) = (0.0, 0.0, 0.0);
    for example in examples {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out = forward(&mut tape, &bound, example, settings)?;
        let alignment = tape.value(out.alignment);
        acc += alignment_accuracy(alignment, &example.centers);
        let imv = Imv::new(tape.value(out.imv).as_slice().to_vec(), example.t1())?;
        diag += diagonality(align_from_imv(&imv, &settings.kernel).matrix());
        recon += tape.scalar(out.recon);
    }
    let n = examples.len() as f64;
    Ok((acc / n, diag / n, recon / n))
}

/// Trains a fresh model on batches drawn from `task`.
pub fn train(task: &ToyTask, cfg: &TrainConfig) -> Result<(ToyModel, TrainReport)> {
    task.validate()?;
    cfg.validate()?;
    let settings = ForwardSettings::from_config(cfg)?;
    let lexicon = task.lexicon();
    let mut params = Params::init(Arch::new(task, cfg), cfg.seed);
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xe7a1_5e75);
    let eval_set: Vec<ToyBatch> = (0..cfg.eval_size).map(|_| sample_batch(task, &lexicon, &mut eval_rng)).collect();

    let mut writer = match &cfg.report_path {
        Some(path) => Some(BufWriter::new(
            File::create(path).map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", path.display())))?,
        )),
        None => None,
    };
    let mut adam = (cfg.optimizer == Optimizer::Adam).then(|| Adam::new(&params.tensors));
    let mut steps = Vec::with_capacity(cfg.steps + 1);
    let mut evals = Vec::new();

    for step in 0..=cfg.steps {
        let batch: Vec<ToyBatch> =
            (0..cfg.batch_size).map(|_| sample_batch(task, &lexicon, &mut data_rng)).collect();
        let Measured { mut record, mut grads } = measure(&params, &batch, &settings, step)?;

        if step % cfg.eval_every == 0 || step == cfg.steps {
            let (accuracy, diag, recon) = evaluate(&params, &eval_set, &settings)?;
            record.accuracy = Some(accuracy);
            record.diagonality = Some(diag);
            evals.push(EvalRecord { step, accuracy, diagonality: diag, recon });
        }
        if let Some(w) = writer.as_mut() {
            serde_json::to_writer(&mut *w, &record).expect("records serialize");
            w.write_all(b"\n").map_err(|e| Error::InvalidArgument(format!("report write failed: {e}")))?;
        }
        steps.push(record);
        if step == cfg.steps {
            break;
        }

        if cfg.clip_norm > 0.0 {
            let norm = grads.iter().flat_map(|g| g.as_slice()).map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.clip_norm {
                let k = cfg.clip_norm / norm;
                for g in &mut grads {
                    for v in g.as_mut_slice() {
                        *v *= k;
                    }
                }
            }
        }
        match adam.as_mut() {
            Some(opt) => opt.step(&mut params.tensors, &grads, cfg.learning_rate),
            None => {
                for (p, g) in params.tensors.iter_mut().zip(&grads) {
                    for (x, d) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *x -= cfg.learning_rate * d;
                    }
                }
            }
        }
    }
    if let Some(mut w) = writer {
        w.flush().map_err(|e| Error::InvalidArgument(format!("report write failed: {e}")))?;
    }

    let steps_to_threshold = first_reaching(&evals, cfg.accuracy_threshold);
    let last = evals.last().expect("final evaluation always runs");
    let report = TrainReport {
        mode: cfg.mode,
        final_accuracy: last.accuracy,
        final_diagonality: last.diagonality,
        steps,
        evals,
        steps_to_threshold,
    };
    let model = ToyModel {
        params,
        settings,
        steps_trained: cfg.steps,
        task: task.clone(),
    };
    Ok((model, report))
}

/// First evaluated step whose accuracy reaches `threshold`.
fn first_reaching(evals: &[EvalRecord], threshold: f64) -> Option<usize> {
    evals.iter().find(|e| e.accuracy >= threshold).map(|e| e.step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_first_accurate_eval() {
        let evals: Vec<_> = [0.3, 0.85, 0.92, 0.88, 0.95]
            .iter()
            .enumerate()
            .map(|(k, &accuracy)| EvalRecord { step: 10 * k, accuracy, diagonality: 0.0, recon: 0.0 })
            .collect();
        assert_eq!(first_reaching(&evals, 0.9), Some(20));
        assert_eq!(first_reaching(&evals, 0.99), None);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("HMA".parse::<Mode>().unwrap(), Mode::Hma);
        assert!("XYZ".parse::<Mode>().is_err());
        let m: Mode = serde_json::from_str("\"SMA\"").unwrap();
        assert_eq!(m, Mode::Sma);
    }

    #[test]
    fn zero_steps_reports_initial_losses() {
        let cfg = TrainConfig { steps: 0, eval_size: 2, ..Default::default() };
        let (model, report) = train(&ToyTask::default(), &cfg).unwrap();
        assert_eq!(report.steps.len(), 1);
        assert_eq!(report.evals.len(), 1);
        assert!(report.final_recon().is_finite());
        assert_eq!(model.steps_trained(), 0);
        assert!(matches!(super::super::infer(&model, &[0, 1], 1.0), Err(Error::Untrained)));
    }
}
