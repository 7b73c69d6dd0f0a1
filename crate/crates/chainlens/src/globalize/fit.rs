//! Least-squares scale/shift alignment of a relative map to metric ground
//! truth: (s, t) = argmin sum (s*d_i + t - gt_i)^2 via the 2x2 normal
//! equations.

use serde::{Deserialize, Serialize};

use super::GlobalizeError;
use crate::raster::{BinaryMask, FloatRaster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleShift {
    pub scale: f64,
    pub shift: f64,
    /// Set when the relative map is constant; the fit falls back to
    /// scale 0 and shift mean(gt).
    pub degenerate: bool,
}

impl ScaleShift {
    pub fn apply(&self, d: f64) -> f64 {
        self.scale * d + self.shift
    }
}

/// Core fit on f64 slices. `d` and `gt` must have equal nonzero length.
pub fn fit_scale_shift(d: &[f64], gt: &[f64]) -> Result<ScaleShift, GlobalizeError> {
    assert_eq!(d.len(), gt.len());
    let n = d.len();
    if n == 0 {
        return Err(GlobalizeError::NoValidPixels);
    }
    let mean_gt = gt.iter().sum::<f64>() / n as f64;
    let (lo, hi) = d
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if n < 2 || lo == hi {
        return Ok(ScaleShift {
            scale: 0.0,
            shift: mean_gt,
            degenerate: true,
        });
    }
    // Normal equations, centered for conditioning:
    // s = cov(d, gt) / var(d), t = mean(gt) - s * mean(d).
    let mean_d = d.iter().sum::<f64>() / n as f64;
    let mut var = 0.0;
    let mut cov = 0.0;
    for (&di, &gi) in d.iter().zip(gt) {
        let dd = di - mean_d;
        var += dd * dd;
        cov += dd * (gi - mean_gt);
    }
    if var == 0.0 {
        return Ok(ScaleShift {
            scale: 0.0,
            shift: mean_gt,
            degenerate: true,
        });
    }
    let scale = cov / var;
    Ok(ScaleShift {
        scale,
        shift: mean_gt - scale * mean_d,
        degenerate: false,
    })
}

/// Fit over the valid pixels of two same-size rasters; `validity`
/// optionally restricts the domain further.
pub fn scale_shift_fit(
    relative: &FloatRaster,
    gt: &FloatRaster,
    validity: Option<&BinaryMask>,
) -> Result<ScaleShift, GlobalizeError> {
    if relative.size() != gt.size() {
        return Err(GlobalizeError::SizeMismatch {
            a: relative.size(),
            b: gt.size(),
        });
    }
    if let Some(mask) = validity {
        if mask.size() != gt.size() {
            return Err(GlobalizeError::SizeMismatch {
                a: mask.size(),
                b: gt.size(),
            });
        }
    }
    let mut d = Vec::new();
    let mut g = Vec::new();
    for idx in 0..relative.size().pixels() {
        let ok = relative.is_valid(idx)
            && gt.is_valid(idx)
            && validity.map_or(true, |m| m.bits()[idx]);
        if ok {
            d.push(relative.values()[idx] as f64);
            g.push(gt.values()[idx] as f64);
        }
    }
    if d.is_empty() {
        return Err(GlobalizeError::NoValidPixels);
    }
    fit_scale_shift(&d, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::RasterSize;

    #[test]
    fn identity_fit() {
        let d = vec![1.0, 2.0, 3.5, 0.5];
        let fit = fit_scale_shift(&d, &d).unwrap();
        assert!((fit.scale - 1.0).abs() < 1e-12);
        assert!(fit.shift.abs() < 1e-12);
        assert!(!fit.degenerate);
    }

    #[test]
    fn affine_recovery() {
        let d = vec![0.0, 1.0, 2.0, 5.0, -3.0];
        let gt: Vec<f64> = d.iter().map(|&v| 2.0 * v + 3.0).collect();
        let fit = fit_scale_shift(&d, &gt).unwrap();
        assert!((fit.scale - 2.0).abs() < 1e-9);
        assert!((fit.shift - 3.0).abs() < 1e-9);
    }

    #[test]
    fn constant_input_is_degenerate() {
        let d = vec![4.0; 6];
        let gt = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let fit = fit_scale_shift(&d, &gt).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.scale, 0.0);
        assert!((fit.shift - 3.5).abs() < 1e-12);
    }

    #[test]
    fn residuals_orthogonal_to_d_and_ones() {
        let d = vec![0.3, 1.7, -2.2, 4.4, 0.9, 8.1];
        let gt = vec![1.0, 0.5, 3.0, -2.0, 7.0, 2.5];
        let fit = fit_scale_shift(&d, &gt).unwrap();
        let r: Vec<f64> = d
            .iter()
            .zip(&gt)
            .map(|(&di, &gi)| fit.apply(di) - gi)
            .collect();
        let dot_d: f64 = r.iter().zip(&d).map(|(a, b)| a * b).sum();
        let dot_1: f64 = r.iter().sum();
        assert!(dot_d.abs() < 1e-8, "residual . d = {dot_d}");
        assert!(dot_1.abs() < 1e-8, "residual . 1 = {dot_1}");
    }

    #[test]
    fn raster_fit_respects_validity() {
        let size = RasterSize::new(2, 2);
        let rel = FloatRaster::from_values(size, vec![1.0, 2.0, 3.0, 100.0]);
        let gt = FloatRaster::from_values(size, vec![2.0, 4.0, 6.0, 0.0]);
        let mut mask = BinaryMask::new(size);
        for (x, y) in [(0, 0), (1, 0), (0, 1)] {
            mask.set(x, y, true);
        }
        let fit = scale_shift_fit(&rel, &gt, Some(&mask)).unwrap();
        assert!((fit.scale - 2.0).abs() < 1e-9);
        assert!(fit.shift.abs() < 1e-9);
    }

    #[test]
    fn no_valid_pixels_is_an_error() {
        let size = RasterSize::new(2, 1);
        let rel = FloatRaster::from_values(size, vec![f32::NAN, f32::NAN]);
        let gt = FloatRaster::new(size, 1.0);
        assert!(matches!(
            scale_shift_fit(&rel, &gt, None),
            Err(GlobalizeError::NoValidPixels)
        ));
    }
}
