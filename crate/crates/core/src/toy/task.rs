//! Synthetic paired sequences with known durations.
//!
//! Every vocabulary item owns a frame pattern and a duration, both drawn once
//! from the task seed. A sequence of tokens becomes a sequence of frames by
//! repeating each token's pattern for its duration and adding Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTask {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub frame_dim: usize,
    pub min_duration: usize,
    pub max_duration: usize,
    pub noise_sigma: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Seeds the per-token patterns and durations.
    pub seed: u64,
}

impl Default for ToyTask {
    fn default() -> Self {
        Self {
            vocab_size: 6,
            embed_dim: 16,
            frame_dim: 8,
            min_duration: 1,
            max_duration: 3,
            noise_sigma: 0.1,
            min_tokens: 4,
            max_tokens: 8,
            seed: 0,
        }
    }
}

impl ToyTask {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2");
        }
        if self.min_duration < 1 || self.max_duration < self.min_duration {
            return bad("durations need 1 <= min_duration <= max_duration");
        }
        if self.min_tokens < 2 || self.max_tokens < self.min_tokens {
            return bad("token counts need 2 <= min_tokens <= max_tokens");
        }
        if self.embed_dim == 0 || self.frame_dim == 0 {
            return bad("embed_dim and frame_dim must be positive");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        Ok(())
    }

    /// Frame pattern (`V x F`) and duration of every vocabulary item.
    pub fn lexicon(&self) -> Lexicon {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_1e71_c0de);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let patterns: Vec<f64> =
            (0..self.vocab_size * self.frame_dim).map(|_| normal.sample(&mut rng)).collect();
        let durations =
            (0..self.vocab_size).map(|_| rng.gen_range(self.min_duration..=self.max_duration)).collect();
        Lexicon {
            patterns: DenseMatrix::from_raw(self.vocab_size, self.frame_dim, patterns),
            durations,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pub patterns: DenseMatrix,
    pub durations: Vec<usize>,
}

/// One paired example.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyBatch {
    pub tokens: Vec<usize>,
    /// `T2 x F`.
    pub frames: DenseMatrix,
    /// Frames without noise, for evaluation.
    pub clean_frames: DenseMatrix,
    pub durations: Vec<usize>,
    /// Centre of every token's frame span: `sum_{m<=i} d_m - d_i / 2`.
    pub centers: Vec<f64>,
}

impl ToyBatch {
    pub fn t1(&self) -> usize {
        self.tokens.len()
    }

    pub fn t2(&self) -> usize {
        self.frames.rows()
    }
}

/// Token centres for a duration sequence.
pub fn token_centers(durations: &[usize]) -> Vec<f64> {
    let mut end = 0usize;
    durations
        .iter()
        .map(|&d| {
            end += d;
            end as f64 - d as f64 / 2.0
        })
        .collect()
}

/// Renders a token sequence into frames. Adjacent tokens differ so that every
/// token boundary is visible in the frames.
pub fn render(lexicon: &Lexicon, tokens: &[usize], noise_sigma: f64, rng: &mut impl Rng) -> ToyBatch {
    let durations: Vec<usize> = tokens.iter().map(|&t| lexicon.durations[t]).collect();
    let t2: usize = durations.iter().sum();
    let f = lexicon.patterns.cols();
    let mut clean = Vec::with_capacity(t2 * f);
    for (&tok, &d) in tokens.iter().zip(&durations) {
        for _ in 0..d {
            clean.extend_from_slice(lexicon.patterns.row(tok));
        }
    }
    let noisy: Vec<f64> = if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("positive sigma");
        clean.iter().map(|v| v + normal.sample(rng)).collect()
    } else {
        clean.clone()
    };
    ToyBatch {
        tokens: tokens.to_vec(),
        frames: DenseMatrix::from_raw(t2, f, noisy),
        clean_frames: DenseMatrix::from_raw(t2, f, clean),
        centers: token_centers(&durations),
        durations,
    }
}

/// Deterministic example for `(task, seed)`.
pub fn make_batch(task: &ToyTask, seed: u64) -> Result<ToyBatch> {
    task.validate()?;
    let lexicon = task.lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_batch(task, &lexicon, &mut rng))
}

pub(crate) fn sample_batch(task: &ToyTask, lexicon: &Lexicon, rng: &mut impl Rng) -> ToyBatch {
    let t1 = rng.gen_range(task.min_tokens..=task.max_tokens);
    let mut tokens = Vec::with_capacity(t1);
    for i in 0..t1 {
        let tok = loop {
            let t = rng.gen_range(0..task.vocab_size);
            if i == 0 || t != tokens[i - 1] {
                break t;
            }
        };
        tokens.push(tok);
    }
    render(lexicon, &tokens, task.noise_sigma, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_from_durations() {
        assert_eq!(token_centers(&[2, 1, 3]), vec![1.0, 2.5, 4.5]);
    }

    #[test]
    fn render_fixed_durations() {
        let lexicon = Lexicon {
            patterns: DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]])
                .unwrap(),
            durations: vec![2, 1, 3, 1],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = render(&lexicon, &[0, 1, 2], 0.0, &mut rng);
        assert_eq!(b.t2(), 6);
        assert_eq!(b.durations, vec![2, 1, 3]);
        assert_eq!(b.centers, vec![1.0, 2.5, 4.5]);
        assert_eq!(b.frames, b.clean_frames);
        assert_eq!(b.frames.row(0), &[1.0, 0.0]);
        assert_eq!(b.frames.row(2), &[0.0, 1.0]);
        assert_eq!(b.frames.row(5), &[2.0, 2.0]);
    }

    #[test]
    fn deterministic_and_consistent() {
        let task = ToyTask::default();
        let a = make_batch(&task, 42).unwrap();
        assert_eq!(a, make_batch(&task, 42).unwrap());
        assert_eq!(a.durations.iter().sum::<usize>(), a.t2());
        assert!(a.tokens.windows(2).all(|w| w[0] != w[1]));
        assert!((task.min_tokens..=task.max_tokens).contains(&a.t1()));
    }

    #[test]
    fn invalid_tasks() {
        assert!(ToyTask { vocab_size: 1, ..Default::default() }.validate().is_err());
        assert!(ToyTask { min_duration: 0, ..Default::default() }.validate().is_err());
    }
}
