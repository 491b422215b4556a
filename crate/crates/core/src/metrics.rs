//! Classification metrics.

use crate::error::{Error, Result};

/// `matrix[gold][predicted]` counts.
pub fn confusion_matrix(gold: &[usize], predicted: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    if gold.len() != predicted.len() {
        return Err(Error::Config(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    let mut matrix = vec![vec![0usize; n_classes]; n_classes];
    for (&g, &p) in gold.iter().zip(predicted) {
        if g >= n_classes || p >= n_classes {
            return Err(Error::Bounds {
                index: g.max(p),
                length: n_classes,
            });
        }
        matrix[g][p] += 1;
    }
    Ok(matrix)
}

/// Macro-F1 in percent over the classes that occur in the gold labels or
/// the predictions.
pub fn macro_f1_from_confusion(matrix: &[Vec<usize>]) -> f64 {
    let n = matrix.len();
    let mut total = 0.0;
    let mut classes = 0;
    for c in 0..n {
        let tp = matrix[c][c] as f64;
        let support: usize = matrix[c].iter().sum();
        let predicted: usize = (0..n).map(|r| matrix[r][c]).sum();
        if support == 0 && predicted == 0 {
            continue;
        }
        classes += 1;
        let denom = support as f64 + predicted as f64;
        total += if denom > 0.0 { 2.0 * tp / denom } else { 0.0 };
    }
    if classes == 0 {
        0.0
    } else {
        100.0 * total / classes as f64
    }
}

pub fn macro_f1(gold: &[usize], predicted: &[usize], n_classes: usize) -> Result<f64> {
    Ok(macro_f1_from_confusion(&confusion_matrix(gold, predicted, n_classes)?))
}

pub fn accuracy(gold: &[usize], predicted: &[usize]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    gold.iter().zip(predicted).filter(|(g, p)| g == p).count() as f64 / gold.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_predictor_on_balanced_binary() {
        let gold = [0, 1, 0, 1, 0, 1];
        let pred = [0; 6];
        let f1 = macro_f1(&gold, &pred, 2).unwrap();
        assert!((f1 - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_and_absent_classes() {
        let gold = [0, 2, 2];
        assert_eq!(macro_f1(&gold, &gold, 4).unwrap(), 100.0);
        assert!(macro_f1(&gold, &[0, 2], 4).is_err());
    }
}
