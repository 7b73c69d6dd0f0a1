//! Rank correlations (Spearman with average-tie ranks, Kendall tau-b) and
//! pairwise comparison accuracy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MetricError;
use crate::globalize::ComparisonSet;
use crate::raster::FloatRaster;

/// Deterministic per-image pixel cap for raster rank correlations.
pub const RHO_SUBSAMPLE_CAP: usize = 10_000;

/// Spearman rank correlation: Pearson correlation of average-tie ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(MetricError::BadLength {
            a: a.len(),
            b: b.len(),
        });
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    // Exact limits for exact rank agreement or mirroring.
    if ra == rb {
        if ra.windows(2).all(|w| w[0] == w[1]) {
            return Err(MetricError::ConstantInput);
        }
        return Ok(1.0);
    }
    let n1 = a.len() as f64 + 1.0;
    if ra.iter().zip(&rb).all(|(x, y)| x + y == n1) {
        return Ok(-1.0);
    }
    pearson(&ra, &rb)
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut va = 0.0;
    let mut vb = 0.0;
    let mut cov = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        va += dx * dx;
        vb += dy * dy;
        cov += dx * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(MetricError::ConstantInput);
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their group average.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Kendall tau-b: (concordant - discordant) pairs over a tie-corrected
/// denominator.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(MetricError::BadLength {
            a: a.len(),
            b: b.len(),
        });
    }
    let n = a.len();
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    let mut tie_a = 0u64;
    let mut tie_b = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            match (da == 0.0, db == 0.0) {
                (true, true) => {}
                (true, false) => tie_a += 1,
                (false, true) => tie_b += 1,
                (false, false) => {
                    if (da > 0.0) == (db > 0.0) {
                        concordant += 1;
                    } else {
                        discordant += 1;
                    }
                }
            }
        }
    }
    let pq = (concordant + discordant) as f64;
    let denom = ((pq + tie_a as f64) * (pq + tie_b as f64)).sqrt();
    if denom == 0.0 {
        return Err(MetricError::ConstantInput);
    }
    Ok((concordant as f64 - discordant as f64) / denom)
}

/// Fraction of relations matching the relation induced by per-segment
/// ground-truth values, as a percentage. `eq_tolerance` mirrors the ternary
/// oracle rule; binary sets pass `None`.
pub fn pairwise_accuracy(
    set: &ComparisonSet,
    gt_field: &[f64],
    eq_tolerance: Option<f64>,
) -> Result<f64, MetricError> {
    if set.comparisons.is_empty() {
        return Err(MetricError::EmptyComparisons);
    }
    let mut correct = 0usize;
    for c in &set.comparisons {
        let truth = crate::globalize::relation_of(
            gt_field[c.i as usize],
            gt_field[c.j as usize],
            eq_tolerance,
        );
        correct += (truth == c.relation) as usize;
    }
    Ok(100.0 * correct as f64 / set.comparisons.len() as f64)
}

/// Spearman correlation between two rasters over their common valid pixels,
/// deterministically subsampled to `cap` pixels.
pub fn raster_spearman(
    pred: &FloatRaster,
    gt: &FloatRaster,
    cap: usize,
    seed: u64,
) -> Result<f64, MetricError> {
    if pred.size() != gt.size() {
        return Err(MetricError::SizeMismatch {
            a: pred.size(),
            b: gt.size(),
        });
    }
    let mut indices: Vec<usize> = (0..gt.size().pixels())
        .filter(|&i| pred.is_valid(i) && gt.is_valid(i))
        .collect();
    if indices.len() < 2 {
        return Err(MetricError::NoValidPixels);
    }
    if indices.len() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (picked, _) = indices.partial_shuffle(&mut rng, cap);
        let mut picked = picked.to_vec();
        picked.sort_unstable();
        indices = picked;
    }
    let a: Vec<f64> = indices.iter().map(|&i| pred.values()[i] as f64).collect();
    let b: Vec<f64> = indices.iter().map(|&i| gt.values()[i] as f64).collect();
    spearman(&a, &b)
}

/// Relation comparisons for monotone-transform invariance checks and tests.
#[allow(unused)]
pub(crate) fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}
