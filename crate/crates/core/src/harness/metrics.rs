//! End-point error, outlier rate and boundary-distance buckets.

use crate::error::{Error, Result};
use crate::harness::stereo::{boundary_distance, MatchSample};

/// Errors above this many pixels count as outliers.
pub const OUTLIER_THRESHOLD: f64 = 3.0;

pub const DEFAULT_BOUNDARY_DISTANCES: [usize; 4] = [1, 2, 4, 8];

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryBucket {
    /// Pixels within this Chebyshev distance of an object boundary.
    pub max_distance: usize,
    /// `None` when the bucket is empty.
    pub epe: Option<f64>,
    pub n_eval: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub epe: f64,
    pub outlier_rate: f64,
    pub n_eval: usize,
    /// Sorted by `max_distance`.
    pub boundary: Vec<BoundaryBucket>,
}

impl MetricsReport {
    pub fn bucket(&self, max_distance: usize) -> Option<&BoundaryBucket> {
        self.boundary.iter().find(|b| b.max_distance == max_distance)
    }
}

/// Accumulates error sums over samples in double precision.
#[derive(Clone, Debug)]
pub struct MetricsAccumulator {
    distances: Vec<usize>,
    abs_sum: f64,
    outliers: usize,
    count: usize,
    bucket_sum: Vec<f64>,
    bucket_count: Vec<usize>,
}

impl MetricsAccumulator {
    pub fn new(distances: &[usize]) -> Self {
        let mut distances = distances.to_vec();
        distances.sort_unstable();
        distances.dedup();
        let k = distances.len();
        MetricsAccumulator {
            distances,
            abs_sum: 0.0,
            outliers: 0,
            count: 0,
            bucket_sum: vec![0.0; k],
            bucket_count: vec![0; k],
        }
    }

    /// Adds one full-resolution prediction against its sample.
    pub fn add(&mut self, pred: &[f32], sample: &MatchSample) -> Result<()> {
        let (h, w) = (sample.height, sample.width);
        if pred.len() != h * w {
            return Err(Error::Contract(format!(
                "prediction has {} values for a {h}x{w} sample",
                pred.len()
            )));
        }
        let dist = boundary_distance(&sample.object_mask, h, w);
        for p in 0..h * w {
            if !sample.valid_mask[p] {
                continue;
            }
            let err = (pred[p] as f64 - sample.gt_disparity[p] as f64).abs();
            self.abs_sum += err;
            self.count += 1;
            if err > OUTLIER_THRESHOLD {
                self.outliers += 1;
            }
            if let Some(d) = dist[p] {
                for (i, &limit) in self.distances.iter().enumerate() {
                    if d <= limit {
                        self.bucket_sum[i] += err;
                        self.bucket_count[i] += 1;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<MetricsReport> {
        if self.count == 0 {
            return Err(Error::Contract("no valid pixel to evaluate".into()));
        }
        Ok(MetricsReport {
            epe: self.abs_sum / self.count as f64,
            outlier_rate: self.outliers as f64 / self.count as f64,
            n_eval: self.count,
            boundary: self
                .distances
                .iter()
                .enumerate()
                .map(|(i, &max_distance)| BoundaryBucket {
                    max_distance,
                    epe: (self.bucket_count[i] > 0).then(|| self.bucket_sum[i] / self.bucket_count[i] as f64),
                    n_eval: self.bucket_count[i],
                })
                .collect(),
        })
    }
}

/// Metrics of full-resolution predictions over an evaluation set.
pub fn evaluate_predictions(
    preds: &[Vec<f32>],
    samples: &[MatchSample],
    boundary_distances: &[usize],
) -> Result<MetricsReport> {
    if preds.len() != samples.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} samples",
            preds.len(),
            samples.len()
        )));
    }
    let mut acc = MetricsAccumulator::new(boundary_distances);
    for (p, s) in preds.iter().zip(samples) {
        acc.add(p, s)?;
    }
    acc.finish()
}

/// EPE of the best single disparity for the whole set: the median of the
/// valid ground truth minimizes the mean absolute error.
pub fn best_constant_epe(samples: &[MatchSample]) -> Result<(f64, f64)> {
    let mut values: Vec<f64> = samples
        .iter()
        .flat_map(|s| {
            s.gt_disparity
                .iter()
                .zip(&s.valid_mask)
                .filter(|(_, &v)| v)
                .map(|(&d, _)| d as f64)
        })
        .collect();
    if values.is_empty() {
        return Err(Error::Contract("no valid pixel to evaluate".into()));
    }
    values.sort_by(f64::total_cmp);
    let median = values[values.len() / 2];
    let epe = values.iter().map(|v| (v - median).abs()).sum::<f64>() / values.len() as f64;
    Ok((median, epe))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::stereo::generate_sample;

    fn sample() -> MatchSample {
        generate_sample(64, 128, 3, 24, 5).unwrap()
    }

    #[test]
    fn perfect_and_offset() {
        let s = sample();
        let exact =
            evaluate_predictions(std::slice::from_ref(&s.gt_disparity), std::slice::from_ref(&s), &[1, 2]).unwrap();
        assert_eq!(exact.epe, 0.0);
        assert_eq!(exact.outlier_rate, 0.0);
        let shifted: Vec<f32> = s.gt_disparity.iter().map(|d| d + 4.0).collect();
        let off = evaluate_predictions(&[shifted], &[s], &[1, 2]).unwrap();
        assert_eq!(off.epe, 4.0);
        assert_eq!(off.outlier_rate, 1.0);
        assert!(off.boundary.iter().all(|b| b.epe == Some(4.0)));
    }

    #[test]
    fn empty_bucket_has_no_epe() {
        let s = generate_sample(64, 128, 0, 24, 1).unwrap();
        let r = evaluate_predictions(std::slice::from_ref(&s.gt_disparity), std::slice::from_ref(&s), &[1, 8]).unwrap();
        assert_eq!(r.boundary[0].n_eval, 0);
        assert_eq!(r.boundary[0].epe, None);
    }

    #[test]
    fn constant_predictor_is_median() {
        let s = sample();
        let (c, epe) = best_constant_epe(std::slice::from_ref(&s)).unwrap();
        let pred = vec![c as f32; s.gt_disparity.len()];
        let r = evaluate_predictions(&[pred], &[s], &[]).unwrap();
        assert!((r.epe - epe).abs() < 1e-9);
    }
}
