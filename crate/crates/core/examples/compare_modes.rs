//! Trains NM, SMA and HMA models on the default toy task for a few seeds and
//! prints final alignment metrics.
//!
//! Usage: `cargo run --release --example compare_modes -- [config.json] [seeds]`

use imv_align::toy::{train, Mode, TrainConfig, ToyTask};

fn main() {
    let mut args = std::env::args().skip(1);
    let (task, base) = match args.next() {
        Some(path) if path != "-" => {
            let v: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(path).expect("config file")).expect("valid json");
            let task: ToyTask = serde_json::from_value(v["task"].clone()).unwrap_or_default();
            let cfg: TrainConfig = serde_json::from_value(v["train"].clone()).expect("valid train config");
            (task, cfg)
        }
        _ => (ToyTask::default(), TrainConfig::default()),
    };
    let seeds: u64 = args.next().map_or(3, |s| s.parse().expect("seed count"));
    for seed in 0..seeds {
        for mode in [Mode::Nm, Mode::Sma, Mode::Hma] {
            let cfg = TrainConfig { mode, seed, ..base.clone() };
            let t = std::time::Instant::now();
            match train(&task, &cfg) {
                Ok((_, r)) => {
                    let curve: Vec<String> =
                        r.evals.iter().map(|e| format!("{:.2}/{:.2}", e.accuracy, e.diagonality)).collect();
                    println!(
                        "seed {seed} {mode:?}: acc {:.3} diag {:.3} recon {:.4} steps_to_threshold {:?} ({:.1}s)\n    {}",
                        r.final_accuracy,
                        r.final_diagonality,
                        r.final_recon(),
                        r.steps_to_threshold,
                        t.elapsed().as_secs_f64(),
                        curve.join(" ")
                    );
                }
                Err(e) => println!("seed {seed} {mode:?}: error {e}"),
            }
        }
    }
}
