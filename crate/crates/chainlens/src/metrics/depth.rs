//! Metric-depth scoring: delta threshold accuracies and mean absolute
//! relative error over valid pixels.

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::raster::{BinaryMask, FloatRaster};

/// Aligned predictions are clamped to this floor before ratio metrics; the
/// scale/shift fit can push predictions negative.
pub const PRED_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub abs_rel: f64,
    pub pixels: u64,
}

/// Score a scale/shift-aligned prediction against positive ground truth.
/// delta_i is the fraction of pixels with max(pred/gt, gt/pred) < 1.25^i.
pub fn depth_metrics(
    pred: &FloatRaster,
    gt: &FloatRaster,
    validity: Option<&BinaryMask>,
) -> Result<DepthMetrics, MetricError> {
    if pred.size() != gt.size() {
        return Err(MetricError::SizeMismatch {
            a: pred.size(),
            b: gt.size(),
        });
    }
    let thresholds = [1.25, 1.25f64.powi(2), 1.25f64.powi(3)];
    let mut hits = [0u64; 3];
    let mut abs_rel_sum = 0.0;
    let mut n = 0u64;
    for idx in 0..gt.size().pixels() {
        let ok = pred.is_valid(idx)
            && gt.is_valid(idx)
            && validity.map_or(true, |m| m.bits()[idx])
            && gt.values()[idx] > 0.0;
        if !ok {
            continue;
        }
        let g = gt.values()[idx] as f64;
        let p = (pred.values()[idx] as f64).max(PRED_FLOOR);
        let ratio = (p / g).max(g / p);
        for (hit, thr) in hits.iter_mut().zip(thresholds) {
            *hit += (ratio < thr) as u64;
        }
        abs_rel_sum += (p - g).abs() / g;
        n += 1;
    }
    if n == 0 {
        return Err(MetricError::NoValidPixels);
    }
    Ok(DepthMetrics {
        delta1: hits[0] as f64 / n as f64,
        delta2: hits[1] as f64 / n as f64,
        delta3: hits[2] as f64 / n as f64,
        abs_rel: abs_rel_sum / n as f64,
        pixels: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::RasterSize;

    fn raster(values: Vec<f32>) -> FloatRaster {
        FloatRaster::from_values(RasterSize::new(values.len() as u32, 1), values)
    }

    #[test]
    fn exact_prediction() {
        let gt = raster(vec![1.0, 2.0, 5.0, 0.25]);
        let m = depth_metrics(&gt, &gt, None).unwrap();
        assert_eq!((m.delta1, m.delta2, m.delta3), (1.0, 1.0, 1.0));
        assert_eq!(m.abs_rel, 0.0);
    }

    #[test]
    fn ratio_1_3_lands_in_delta2() {
        let gt = raster(vec![1.0, 2.0, 4.0]);
        let pred = raster(vec![1.3, 2.6, 5.2]);
        let m = depth_metrics(&pred, &gt, None).unwrap();
        assert_eq!(m.delta1, 0.0, "1.3 >= 1.25");
        assert_eq!(m.delta2, 1.0, "1.3 < 1.5625");
        assert_eq!(m.delta3, 1.0);
        assert!((m.abs_rel - 0.3).abs() < 1e-6);
    }

    #[test]
    fn ratio_2_misses_all_deltas() {
        let gt = raster(vec![1.0, 3.0]);
        let pred = raster(vec![2.0, 6.0]);
        let m = depth_metrics(&pred, &gt, None).unwrap();
        assert_eq!((m.delta1, m.delta2, m.delta3), (0.0, 0.0, 0.0), "2 > 1.953125");
        assert!((m.abs_rel - 1.0).abs() < 1e-9);
    }

    #[test]
    fn negative_predictions_hit_the_floor() {
        let gt = raster(vec![1.0]);
        let pred = raster(vec![-3.0]);
        let m = depth_metrics(&pred, &gt, None).unwrap();
        assert_eq!(m.delta3, 0.0);
        assert!((m.abs_rel - (1.0 - PRED_FLOOR)).abs() < 1e-9);
    }

    #[test]
    fn nonpositive_gt_pixels_are_skipped() {
        let gt = raster(vec![1.0, 0.0, -1.0]);
        let pred = raster(vec![1.0, 5.0, 5.0]);
        let m = depth_metrics(&pred, &gt, None).unwrap();
        assert_eq!(m.pixels, 1);
        assert_eq!(m.delta1, 1.0);
        let all_bad = raster(vec![0.0]);
        assert!(depth_metrics(&raster(vec![1.0]), &all_bad, None).is_err());
    }
}
