//! Offset-rescaled functional baselines. Both return one entry per forecast
//! week; `None` marks a week with no usable training observation.

use super::task::ForecastTask;
use crate::error::Result;
use crate::io::CountPanel;

fn rate(panel: &CountPanel, i: usize, j: usize) -> Option<f64> {
    panel.get(i, j).map(|z| z as f64 / panel.offset(i, j))
}

/// Pointwise mean of past rates times the target-year offset.
pub fn baseline_mean_fda(panel: &CountPanel, task: &ForecastTask) -> Result<Vec<Option<f64>>> {
    task.validate(panel)?;
    let t = task.target_row;
    Ok((task.m0..panel.m())
        .map(|j| {
            let rates: Vec<f64> = task
                .train_rows
                .clone()
                .filter_map(|i| rate(panel, i, j))
                .collect();
            (!rates.is_empty())
                .then(|| panel.offset(t, j) * rates.iter().sum::<f64>() / rates.len() as f64)
        })
        .collect())
}

/// Most recent past rate at each week times the target-year offset.
pub fn baseline_rw_fda(panel: &CountPanel, task: &ForecastTask) -> Result<Vec<Option<f64>>> {
    task.validate(panel)?;
    let t = task.target_row;
    Ok((task.m0..panel.m())
        .map(|j| {
            task.train_rows
                .clone()
                .rev()
                .find_map(|i| rate(panel, i, j))
                .map(|r| panel.offset(t, j) * r)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(cells: &[Option<u64>], offsets: &[f64]) -> CountPanel {
        let m = 3;
        let n = cells.len() / m;
        let offs: Vec<f64> = offsets
            .iter()
            .flat_map(|&e| std::iter::repeat_n(e, m))
            .collect();
        CountPanel::from_cells(n, m, cells)
            .unwrap()
            .with_offsets(offs)
            .unwrap()
    }

    fn task(n: usize) -> ForecastTask {
        ForecastTask {
            train_rows: 0..n - 1,
            target_row: n - 1,
            m0: 1,
            level: 0.95,
        }
    }

    #[test]
    fn single_year_mean_equals_random_walk() {
        let p = panel(
            &[Some(4), Some(6), Some(8), Some(1), None, None],
            &[2.0, 3.0],
        );
        let t = task(2);
        assert_eq!(
            baseline_mean_fda(&p, &t).unwrap(),
            baseline_rw_fda(&p, &t).unwrap()
        );
        assert_eq!(
            baseline_rw_fda(&p, &t).unwrap(),
            vec![Some(9.0), Some(12.0)]
        );
    }

    #[test]
    fn hand_computed_means() {
        // rates 1 and 3 in the training years, target offset 5
        let p = panel(
            &[
                Some(1),
                Some(1),
                Some(1),
                Some(3),
                Some(6),
                Some(6),
                Some(0),
                None,
                None,
            ],
            &[1.0, 2.0, 5.0],
        );
        let t = task(3);
        assert_eq!(
            baseline_mean_fda(&p, &t).unwrap(),
            vec![Some(10.0), Some(10.0)]
        );
        assert_eq!(
            baseline_rw_fda(&p, &t).unwrap(),
            vec![Some(15.0), Some(15.0)]
        );
    }

    #[test]
    fn constant_rate_and_offset_scaling() {
        let p = panel(
            &[
                Some(7),
                Some(7),
                Some(7),
                Some(7),
                Some(7),
                Some(7),
                Some(0),
                None,
                None,
            ],
            &[1.0, 1.0, 1.0],
        );
        let t = task(3);
        assert_eq!(baseline_mean_fda(&p, &t).unwrap(), vec![Some(7.0); 2]);
        assert_eq!(baseline_rw_fda(&p, &t).unwrap(), vec![Some(7.0); 2]);
        let doubled = panel(
            &[
                Some(7),
                Some(7),
                Some(7),
                Some(7),
                Some(7),
                Some(7),
                Some(0),
                None,
                None,
            ],
            &[1.0, 1.0, 2.0],
        );
        assert_eq!(baseline_rw_fda(&doubled, &t).unwrap(), vec![Some(14.0); 2]);
    }

    #[test]
    fn random_walk_hand_value_and_fallbacks() {
        // Z_{t-1} = 10, E_{t-1} = 2, E_t = 3 -> 15; week 3 falls back to year 1
        let p = panel(
            &[
                Some(1),
                Some(4),
                Some(8),
                Some(1),
                Some(10),
                None,
                Some(0),
                None,
                None,
            ],
            &[1.0, 2.0, 3.0],
        );
        let t = task(3);
        assert_eq!(
            baseline_rw_fda(&p, &t).unwrap(),
            vec![Some(15.0), Some(24.0)]
        );
        let q = panel(
            &[
                Some(1),
                Some(4),
                None,
                Some(1),
                Some(10),
                None,
                Some(0),
                None,
                None,
            ],
            &[1.0, 2.0, 3.0],
        );
        assert_eq!(baseline_rw_fda(&q, &t).unwrap()[1], None);
        assert_eq!(baseline_mean_fda(&q, &t).unwrap()[1], None);
    }
}
