use rand::Rng;

/// `ln sum exp(x_i)` by pairwise tree reduction of max-shifted partial sums.
/// The reduction order depends only on the input length, so results are
/// reproducible regardless of how the inputs were computed.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    fn tree(v: &[f64]) -> f64 {
        match v.len() {
            0 => f64::NEG_INFINITY,
            1 => v[0],
            n => {
                let (a, b) = v.split_at(n / 2);
                log_add(tree(a), tree(b))
            }
        }
    }
    tree(values)
}

pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Draws an index with probability proportional to `exp(log_weights[i])`.
/// Entries equal to `-inf` are never chosen. Returns `None` if all are `-inf`.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (i, w) in log_weights.iter().enumerate() {
        if *w == f64::NEG_INFINITY {
            continue;
        }
        let p = (w - max).exp();
        if u < p {
            return Some(i);
        }
        u -= p;
        last = Some(i);
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_sum_exp_is_stable() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        let big = log_sum_exp(&[1000.0, 1000.0, 1000.0]);
        assert!((big - (1000.0 + 3f64.ln())).abs() < 1e-12);
        let small = log_sum_exp(&[-1000.0, f64::NEG_INFINITY]);
        assert_eq!(small, -1000.0);
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = [0.0, 2f64.ln(), f64::NEG_INFINITY, 1000.0 - 1000.0];
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[sample_log_categorical(&w, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[2], 0);
        assert!((counts[1] as f64 / 40_000.0 - 0.5).abs() < 0.01);
        assert!(sample_log_categorical(&[f64::NEG_INFINITY], &mut rng).is_none());
    }
}
