//! Alignment quality measures for the toy experiment.

use crate::numerics::DenseMatrix;

/// Input token with the largest weight in every output column.
pub fn column_argmax(alpha: &DenseMatrix) -> Vec<usize> {
    (0..alpha.cols())
        .map(|j| {
            let mut best = 0;
            for i in 1..alpha.rows() {
                if alpha.get(i, j) > alpha.get(best, j) {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Fraction of tokens whose argmax-aligned frame span has its midpoint within
/// one frame of the true token centre. Tokens that win no frame count as misses.
pub fn alignment_accuracy(alpha: &DenseMatrix, centers: &[f64]) -> f64 {
    assert_eq!(alpha.rows(), centers.len());
    let winners = column_argmax(alpha);
    let hits = centers
        .iter()
        .enumerate()
        .filter(|&(i, &c)| {
            let first = winners.iter().position(|&w| w == i);
            let last = winners.iter().rposition(|&w| w == i);
            match (first, last) {
                (Some(a), Some(b)) => ((a + b + 1) as f64 / 2.0 - c).abs() <= 1.0,
                _ => false,
            }
        })
        .count();
    hits as f64 / centers.len() as f64
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // tied block shares the average rank
        let avg = (start + end - 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            out[k] = avg;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Mean column peak times the rank correlation between each column's argmax
/// token and the column index. A sharp monotone alignment scores near 1.
pub fn diagonality(alpha: &DenseMatrix) -> f64 {
    let cols = alpha.cols();
    if cols == 0 {
        return 0.0;
    }
    let sharpness = (0..cols)
        .map(|j| (0..alpha.rows()).map(|i| alpha.get(i, j)).fold(0.0, f64::max))
        .sum::<f64>()
        / cols as f64;
    let argmax: Vec<f64> = column_argmax(alpha).into_iter().map(|i| i as f64).collect();
    let steps: Vec<f64> = (0..cols).map(|j| j as f64).collect();
    sharpness * spearman(&argmax, &steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(t1: usize, idx: &[usize]) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(t1, idx.len());
        for (j, &i) in idx.iter().enumerate() {
            m.set(i, j, 1.0);
        }
        m
    }

    #[test]
    fn accuracy_of_exact_path() {
        let alpha = path(3, &[0, 0, 1, 2, 2, 2]);
        assert_eq!(alignment_accuracy(&alpha, &[1.0, 2.5, 4.5]), 1.0);
        // token 1 wins nothing
        let alpha = path(3, &[0, 0, 0, 2, 2, 2]);
        assert!((alignment_accuracy(&alpha, &[1.0, 2.5, 4.5]) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn diagonality_extremes() {
        assert!((diagonality(&path(3, &[0, 1, 2])) - 1.0).abs() < 1e-12);
        // tied argmax ranks: 4.5 / sqrt(4.5 * 5)
        assert!((diagonality(&path(3, &[0, 1, 1, 2])) - 3.0 / 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(diagonality(&DenseMatrix::filled(3, 4, 1.0 / 3.0)), 0.0);
        assert!(diagonality(&path(2, &[1, 1, 0, 0])) < -0.5);
    }

    #[test]
    fn spearman_with_ties() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 1.0, 2.0, 2.0], &[0.0, 1.0, 2.0, 3.0]) - 0.894_427_190_999_915_9).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[0.0, 1.0]), 0.0);
    }
}
