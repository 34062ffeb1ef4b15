use ndarray::{Array1, ArrayView1};

/// `softmax(logits / temperature)` with max subtraction.
pub(crate) fn scaled_softmax(logits: ArrayView1<f64>, temperature: f64) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut out = logits.mapv(|x| ((x - max) / temperature).exp());
    let sum = out.sum();
    out /= sum;
    out
}

/// `log softmax(logits / temperature)[index]`.
pub(crate) fn scaled_log_prob(logits: ArrayView1<f64>, temperature: f64, index: usize) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = logits.fold(0.0, |acc, &x| acc + ((x - max) / temperature).exp()).ln();
    (logits[index] - max) / temperature - lse
}

/// Index of the largest component; ties go to the lowest index.
pub(crate) fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(array![1.0, 3.0, 3.0, 0.0].view()), 1);
        assert_eq!(argmax(array![2.0].view()), 0);
    }

    #[test]
    fn log_prob_matches_softmax() {
        let l = array![0.3, -1.0, 2.5, 0.0];
        for t in [0.5, 1.0, 3.0] {
            let p = scaled_softmax(l.view(), t);
            for i in 0..4 {
                assert!((p[i].ln() - scaled_log_prob(l.view(), t, i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let p = scaled_softmax(array![1000.0, -1000.0, 999.0].view(), 1.0);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }
}
