use crate::domain::Sample;
use crate::error::{Error, Result};
use crate::losses::Loss;

/// Area under the ROC curve as the Mann-Whitney statistic: the probability
/// that a random positive outscores a random negative, ties counting one
/// half.
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<f64> {
    if scores.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite("roc_auc scores".into()));
    }
    let n_pos = scores.iter().filter(|(_, l)| *l).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].0 == sorted[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * sorted[i..=j].iter().filter(|(_, l)| *l).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean loss on held-out samples.
pub fn test_loss(loss: &Loss, w: &[f64], samples: &[Sample]) -> Result<f64> {
    loss.mean_loss(w, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        let sep = [(0.9, true), (0.8, true), (0.2, false), (0.1, false)];
        assert_eq!(roc_auc(&sep).unwrap(), 1.0);
        let tied = [(0.5, true), (0.5, false), (0.5, true), (0.5, false)];
        assert_eq!(roc_auc(&tied).unwrap(), 0.5);
        let mixed = [(0.9, true), (0.8, false), (0.7, true), (0.1, false)];
        assert_eq!(roc_auc(&mixed).unwrap(), 0.75);
        assert!(matches!(roc_auc(&[(0.1, true)]), Err(Error::SingleClass)));
    }
}
