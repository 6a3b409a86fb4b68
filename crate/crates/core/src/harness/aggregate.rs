//! Per-time summary statistics across replications.

use crate::error::{Error, Result};
use crate::metrics::{MetricsRow, MetricsSeries};

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7, the
/// NumPy/R default).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    quantile(&s, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

impl Summary {
    /// Summary of `values`; the sample is sorted first so the result does
    /// not depend on input order.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        Some(Self {
            mean,
            q10: quantile(&s, 0.1),
            q50: quantile(&s, 0.5),
            q90: quantile(&s, 0.9),
        })
    }
}

/// Metric names in aggregate-column order for dimension `d`.
pub fn metric_names(d: usize) -> Vec<String> {
    MetricsSeries::header(d).into_iter().skip(1).collect()
}

fn metric_values(row: &MetricsRow) -> Vec<Option<f64>> {
    let mut out = vec![
        Some(row.ssd_v),
        Some(row.ssd_x),
        Some(row.d_x),
        Some(row.d_v),
    ];
    out.extend(row.momentum.iter().map(|&m| Some(m)));
    out.push(Some(row.energy));
    out.push(row.l2_error);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub t: f64,
    /// One entry per metric in [`metric_names`] order; `None` when no
    /// replication recorded the metric at this time.
    pub stats: Vec<Option<Summary>>,
    pub count: usize,
}

impl AggregateRow {
    pub fn stat(&self, d: usize, metric: &str) -> Option<Summary> {
        let idx = metric_names(d).iter().position(|m| m == metric)?;
        self.stats[idx]
    }
}

/// Aggregates replications that share a time grid.
pub fn aggregate(series: &[MetricsSeries]) -> Result<Vec<AggregateRow>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    for s in series {
        if s.d != first.d || s.rows.len() != first.rows.len() {
            return Err(Error::Validation(
                "replications have different shapes".into(),
            ));
        }
    }
    let n_metrics = metric_names(first.d).len();
    let mut out = Vec::with_capacity(first.rows.len());
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(series.len()); n_metrics];
    for (k, row0) in first.rows.iter().enumerate() {
        columns.iter_mut().for_each(Vec::clear);
        for s in series {
            let row = &s.rows[k];
            if (row.t - row0.t).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "replications disagree on time grid at row {k}"
                )));
            }
            for (col, v) in columns.iter_mut().zip(metric_values(row)) {
                if let Some(v) = v {
                    col.push(v);
                }
            }
        }
        out.push(AggregateRow {
            t: row0.t,
            stats: columns.iter().map(|c| Summary::of(c)).collect(),
            count: series.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricsRow;
    use proptest::prelude::*;

    fn row(t: f64, x: f64, l2: Option<f64>) -> MetricsRow {
        MetricsRow {
            t,
            ssd_v: x,
            ssd_x: 2.0 * x,
            d_x: 0.0,
            d_v: 0.0,
            momentum: vec![0.0],
            energy: x,
            l2_error: l2,
        }
    }

    #[test]
    fn type7_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.5);
        assert!((quantile(&s, 0.1) - 1.3).abs() < 1e-15);
        assert!((quantile(&s, 0.9) - 3.7).abs() < 1e-15);
        assert_eq!(quantile(&[5.0], 0.9), 5.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn single_replication_is_identity() {
        let mut s = MetricsSeries::new(1);
        s.push(row(0.0, 0.3, Some(0.0)));
        s.push(row(0.1, 0.123456789, None));
        let agg = aggregate(&[s]).unwrap();
        let st = agg[1].stat(1, "ssd_v").unwrap();
        assert_eq!(
            (st.mean, st.q10, st.q50, st.q90),
            (0.123456789, 0.123456789, 0.123456789, 0.123456789)
        );
        assert_eq!(agg[1].stat(1, "l2_error"), None);
        assert_eq!(agg[0].count, 1);
    }

    #[test]
    fn rejects_mismatched_grids() {
        let mut a = MetricsSeries::new(1);
        a.push(row(0.0, 1.0, None));
        let mut b = MetricsSeries::new(1);
        b.push(row(0.5, 1.0, None));
        assert!(aggregate(&[a, b]).is_err());
    }

    proptest! {
        #[test]
        fn quantiles_ordered_and_permutation_invariant(
            mut xs in proptest::collection::vec(-1e3f64..1e3, 1..40),
        ) {
            let a = Summary::of(&xs).unwrap();
            prop_assert!(a.q10 <= a.q50 && a.q50 <= a.q90);
            xs.reverse();
            let b = Summary::of(&xs).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
