use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location and spread of one metric over replicates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Divisor `n - 1`; zero for a single value.
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between order statistics at
/// probability points `(k - 1) / (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize_values(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::config("cannot summarize zero records"));
    }
    if let Some(x) = values.iter().find(|x| !x.is_finite()) {
        return Err(Error::config(format!("cannot summarize non-finite value {x}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(SummaryStats {
        n,
        mean,
        sd,
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[n - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn five_values() {
        let s = summarize_values(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(s.mean, 3.0);
        assert!((s.sd - 2.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_and_single() {
        let s = summarize_values(&[0.5; 9]).unwrap();
        assert_eq!(s.sd, 0.0);
        assert!([s.min, s.q1, s.median, s.q3, s.max].iter().all(|&x| x == 0.5));
        let one = summarize_values(&[0.3]).unwrap();
        assert_eq!((one.mean, one.sd, one.median), (0.3, 0.0, 0.3));
    }

    #[test]
    fn empty_is_error() {
        assert!(summarize_values(&[]).is_err());
    }

    #[test]
    fn interpolates_between_order_statistics() {
        // n = 4: q1 sits at h = 0.75 between the first two values.
        let s = summarize_values(&[0.0, 4.0, 8.0, 12.0]).unwrap();
        assert_eq!(s.q1, 3.0);
        assert_eq!(s.median, 6.0);
    }

    proptest! {
        #[test]
        fn ordered_summaries(v in prop::collection::vec(-1e3f64..1e3, 1..60)) {
            let s = summarize_values(&v).unwrap();
            prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
            prop_assert!(s.min <= s.mean + 1e-9 && s.mean <= s.max + 1e-9);
        }
    }
}
