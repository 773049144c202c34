//! Summaries of posterior and posterior-predictive draws.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveSummary {
    /// Draw mean.
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Inverse empirical distribution function of sorted draws: the smallest
/// order statistic `x_(k)` with `k / N >= p`. A relative slack of 1e-9 keeps
/// products such as `0.95 * 100` from rounding up to the next index.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = (p * n as f64 * (1.0 - 1e-9)).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

/// Mean and equal-tailed interval at the given level.
pub fn predictive_summary(draws: &[f64], level: f64) -> Result<PredictiveSummary> {
    if draws.is_empty() {
        return Err(Error::InvalidInput("no draws to summarise".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "interval level must be in (0, 1), got {level}"
        )));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok(PredictiveSummary {
        point: draws.iter().sum::<f64>() / draws.len() as f64,
        lower: quantile_sorted(&sorted, tail),
        upper: quantile_sorted(&sorted, 1.0 - tail),
    })
}

/// Effective sample size from the initial positive sequence of
/// autocorrelation pair sums.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|t| (x[t] - mean) * (x[t + lag] - mean))
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    n as f64 / tau.max(1.0 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn constant_draws() {
        let s = predictive_summary(&[4.0; 17], 0.95).unwrap();
        assert_eq!((s.point, s.lower, s.upper), (4.0, 4.0, 4.0));
    }

    #[test]
    fn order_statistics() {
        let draws: Vec<f64> = (0..100).map(f64::from).collect();
        let s = predictive_summary(&draws, 0.9).unwrap();
        // 5th and 95th order statistics of 0..99
        assert_eq!((s.lower, s.upper), (4.0, 94.0));
        assert_eq!(s.point, 49.5);
    }

    #[test]
    fn errors() {
        assert!(predictive_summary(&[], 0.9).is_err());
        assert!(predictive_summary(&[1.0], 1.0).is_err());
    }

    #[test]
    fn ess_of_independent_and_sticky_chains() {
        let mut rng = crate::rng::RngHandle::new(1, 0).rng();
        let iid: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let e = effective_sample_size(&iid);
        assert!(e > 3000.0 && e < 5500.0, "{e}");
        let mut x = 0.0;
        let ar: Vec<f64> = (0..4000)
            .map(|_| {
                x = 0.95 * x + rng.random::<f64>() - 0.5;
                x
            })
            .collect();
        assert!(effective_sample_size(&ar) < 400.0);
    }

    proptest! {
        #[test]
        fn width_shrinks_with_level(draws in proptest::collection::vec(-1e3f64..1e3, 1..200), a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let narrow = predictive_summary(&draws, lo).unwrap();
            let wide = predictive_summary(&draws, hi).unwrap();
            prop_assert!(narrow.upper - narrow.lower <= wide.upper - wide.lower);
            prop_assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper);
        }
    }
}
