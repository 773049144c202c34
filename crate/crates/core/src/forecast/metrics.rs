//! Point and interval forecast metrics. Missing actuals (`None`) are
//! skipped; a metric with nothing left to average is `NaN`.

use crate::error::{Error, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!(
            "arrays of length {a} and {b}"
        )));
    }
    Ok(())
}

fn check_order(lowers: &[f64], uppers: &[f64]) -> Result<()> {
    same_len(lowers.len(), uppers.len())?;
    if let Some(i) = (0..lowers.len()).find(|&i| !(lowers[i] <= uppers[i])) {
        return Err(Error::InvalidInput(format!(
            "interval {i} has lower {} above upper {}",
            lowers[i], uppers[i]
        )));
    }
    Ok(())
}

fn mean_abs_error(actual: &[Option<f64>], point: &[f64]) -> Result<f64> {
    same_len(actual.len(), point.len())?;
    let (sum, count) = actual
        .iter()
        .zip(point)
        .filter_map(|(a, p)| a.map(|a| (a - p).abs()))
        .fold((0.0, 0usize), |(s, c), e| (s + e, c + 1));
    Ok(if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    })
}

/// Mean absolute error over the forecast weeks of one year.
pub fn mae_by_year(actual: &[Option<f64>], point: &[f64]) -> Result<f64> {
    mean_abs_error(actual, point)
}

/// Mean absolute error at one week across forecast years.
pub fn mae_by_week(actuals: &[Option<f64>], points: &[f64]) -> Result<f64> {
    mean_abs_error(actuals, points)
}

/// Number of covered cells and number of cells with an actual value.
pub fn coverage_counts(
    actuals: &[Option<f64>],
    lowers: &[f64],
    uppers: &[f64],
) -> Result<(usize, usize)> {
    same_len(actuals.len(), lowers.len())?;
    check_order(lowers, uppers)?;
    Ok(actuals
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|a| (lowers[i] <= a && a <= uppers[i]) as usize))
        .fold((0, 0), |(c, t), hit| (c + hit, t + 1)))
}

/// Empirical coverage probability pooled over all cells.
pub fn ecp(actuals: &[Option<f64>], lowers: &[f64], uppers: &[f64]) -> Result<f64> {
    let (covered, total) = coverage_counts(actuals, lowers, uppers)?;
    Ok(if total == 0 {
        f64::NAN
    } else {
        covered as f64 / total as f64
    })
}

/// Median with the mean-of-middle-two convention.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

/// Median interval width.
pub fn miw(lowers: &[f64], uppers: &[f64]) -> Result<f64> {
    check_order(lowers, uppers)?;
    let widths: Vec<f64> = lowers.iter().zip(uppers).map(|(l, u)| u - l).collect();
    Ok(median(&widths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn some(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().copied().map(Some).collect()
    }

    #[test]
    fn mae_fixtures() {
        assert_eq!(mae_by_year(&some(&[3.0, 4.0]), &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(mae_by_year(&some(&[0.0, 10.0]), &[5.0, 5.0]).unwrap(), 5.0);
        assert_eq!(
            mae_by_week(&some(&[10.0, 20.0]), &[12.0, 16.0]).unwrap(),
            3.0
        );
        assert_eq!(
            mae_by_week(&some(&[20.0, 40.0]), &[24.0, 32.0]).unwrap(),
            6.0
        );
        assert_eq!(mae_by_year(&[Some(1.0), None], &[2.0, 100.0]).unwrap(), 1.0);
        assert!(mae_by_year(&[None], &[2.0]).unwrap().is_nan());
        assert!(mae_by_year(&some(&[1.0]), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ecp_fixtures() {
        let lo = [0.0, 0.0, 0.0, 0.0];
        let hi = [10.0, 10.0, 10.0, 10.0];
        assert_eq!(ecp(&some(&[1.0, 2.0, 3.0, 10.0]), &lo, &hi).unwrap(), 1.0);
        assert_eq!(
            ecp(&some(&[11.0, 12.0, 13.0, 14.0]), &lo, &hi).unwrap(),
            0.0
        );
        assert_eq!(ecp(&some(&[1.0, 2.0, 3.0, 11.0]), &lo, &hi).unwrap(), 0.75);
        assert_eq!(ecp(&[Some(1.0), None], &lo[..2], &hi[..2]).unwrap(), 1.0);
        assert!(matches!(
            ecp(&some(&[1.0]), &[2.0], &[1.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn miw_fixtures() {
        assert_eq!(miw(&[0.0, 0.0, 0.0], &[1.0, 3.0, 5.0]).unwrap(), 3.0);
        assert_eq!(miw(&[2.0, 5.0, 9.0], &[6.0, 9.0, 13.0]).unwrap(), 4.0);
        assert_eq!(miw(&[0.0, 0.0], &[2.0, 4.0]).unwrap(), 3.0);
        assert!(miw(&[3.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn mae_is_permutation_invariant_and_scale_equivariant(
            pairs in proptest::collection::vec((0u32..1000, 0.0f64..1000.0), 1..40),
            shift in 0usize..40,
        ) {
            let actual: Vec<Option<f64>> = pairs.iter().map(|p| Some(p.0 as f64)).collect();
            let point: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let base = mae_by_year(&actual, &point).unwrap();
            let k = shift % pairs.len();
            let mut a2 = actual.clone();
            let mut p2 = point.clone();
            a2.rotate_left(k);
            p2.rotate_left(k);
            prop_assert!((mae_by_year(&a2, &p2).unwrap() - base).abs() < 1e-9 * (1.0 + base));
            let a3: Vec<Option<f64>> = actual.iter().map(|a| a.map(|v| 2.0 * v)).collect();
            let p3: Vec<f64> = point.iter().map(|v| 2.0 * v).collect();
            prop_assert!((mae_by_week(&a3, &p3).unwrap() - 2.0 * base).abs() < 1e-9 * (1.0 + base));
        }

        #[test]
        fn pooled_ecp_is_cell_weighted_mean(
            tasks in proptest::collection::vec(proptest::collection::vec((0.0f64..10.0, 0.0f64..5.0, 0.0f64..10.0), 1..10), 1..6)
        ) {
            let mut all = (Vec::new(), Vec::new(), Vec::new());
            let mut weighted = 0.0;
            let mut cells = 0usize;
            for t in &tasks {
                let a: Vec<Option<f64>> = t.iter().map(|c| Some(c.2)).collect();
                let l: Vec<f64> = t.iter().map(|c| c.0).collect();
                let u: Vec<f64> = t.iter().map(|c| c.0 + c.1).collect();
                weighted += ecp(&a, &l, &u).unwrap() * t.len() as f64;
                cells += t.len();
                all.0.extend(a);
                all.1.extend(l);
                all.2.extend(u);
            }
            let pooled = ecp(&all.0, &all.1, &all.2).unwrap();
            prop_assert!((pooled - weighted / cells as f64).abs() < 1e-12);
        }
    }
}
