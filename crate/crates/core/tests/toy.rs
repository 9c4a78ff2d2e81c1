use imv_align::numerics::DenseMatrix;
use imv_align::toy::{infer, make_batch, teacher_alignment, train, Mode, ToyTask, TrainConfig};
use imv_align::Error;

fn short(mode: Mode, steps: usize) -> TrainConfig {
    TrainConfig { mode, steps, eval_every: 25, eval_size: 8, ..Default::default() }
}

/// Mean squared difference over the rows both matrices have.
fn overlap_mse(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let rows = a.rows().min(b.rows());
    let mut sum = 0.0;
    for i in 0..rows {
        for (x, y) in a.row(i).iter().zip(b.row(i)) {
            sum += (x - y) * (x - y);
        }
    }
    sum / (rows * a.cols()) as f64
}

#[test]
fn training_is_deterministic() {
    let task = ToyTask::default();
    for mode in [Mode::Nm, Mode::Sma, Mode::Hma] {
        let (_, a) = train(&task, &short(mode, 40)).unwrap();
        let (_, b) = train(&task, &short(mode, 40)).unwrap();
        assert_eq!(a, b, "{mode}");
    }
}

#[test]
fn nm_and_sma_share_a_forward_graph() {
    let task = ToyTask::default();
    let (_, nm) = train(&task, &short(Mode::Nm, 0)).unwrap();
    let (_, sma) = train(&task, &short(Mode::Sma, 0)).unwrap();
    let (a, b) = (&nm.steps[0], &sma.steps[0]);
    assert_eq!(a.recon, b.recon);
    assert_eq!(a.ap, b.ap);
    assert!(a.sma.is_none());
    let penalty = b.sma.unwrap();
    assert!((b.total - a.total - penalty).abs() < 1e-12);
}

#[test]
fn report_metrics_are_finite_and_bounded() {
    let (_, report) = train(&ToyTask::default(), &short(Mode::Hma, 50)).unwrap();
    assert_eq!(report.steps.len(), 51);
    assert_eq!(report.evals.iter().map(|e| e.step).collect::<Vec<_>>(), vec![0, 25, 50]);
    for s in &report.steps {
        assert!(s.recon.is_finite() && s.ap.is_finite() && s.total.is_finite());
    }
    for e in &report.evals {
        assert!((0.0..=1.0).contains(&e.accuracy));
        assert!(e.diagonality.is_finite());
    }
}

#[test]
fn decoder_alignment_is_normalised() {
    let task = ToyTask::default();
    let (model, _) = train(&task, &short(Mode::Hma, 30)).unwrap();
    for seed in 0..10 {
        let batch = make_batch(&task, seed).unwrap();
        let alpha = teacher_alignment(&model, &batch).unwrap();
        assert!(alpha.max_column_deviation() < 1e-12);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let task = ToyTask::default();
    let bad = TrainConfig { learning_rate: 0.0, ..Default::default() };
    assert!(matches!(train(&task, &bad), Err(Error::InvalidArgument(_))));
    let bad_task = ToyTask { vocab_size: 1, ..Default::default() };
    assert!(train(&bad_task, &TrainConfig::default()).is_err());
}

#[test]
fn inference_tracks_training_data_and_rate() {
    let task = ToyTask::default();
    let (model, report) = train(&task, &TrainConfig::default()).unwrap();
    let final_loss = report.final_recon();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let batch = make_batch(&task, seed).unwrap();
        let out = infer(&model, &batch.tokens, 1.0).unwrap();
        assert_eq!(out.frames.rows(), out.t2);
        assert!(out.t2.abs_diff(batch.t2()) <= 2, "predicted {} frames, target {}", out.t2, batch.t2());
        worst = worst.max(overlap_mse(&out.frames, &batch.clean_frames));

        let double = infer(&model, &batch.tokens, 2.0).unwrap();
        assert!(double.t2.abs_diff(2 * out.t2) <= 1, "{} vs 2 x {}", double.t2, out.t2);
    }
    assert!(worst < 2.0 * final_loss, "inference mse {worst} vs final loss {final_loss}");
}

#[test]
fn inference_errors() {
    let task = ToyTask::default();
    let (untrained, _) = train(&task, &short(Mode::Hma, 0)).unwrap();
    assert!(matches!(infer(&untrained, &[0, 1], 1.0), Err(Error::Untrained)));
    let (model, _) = train(&task, &short(Mode::Hma, 5)).unwrap();
    assert!(infer(&model, &[], 1.0).is_err());
    assert!(infer(&model, &[0, 99], 1.0).is_err());
    assert!(infer(&model, &[0, 1], 0.0).is_err());
}
