//! Power-law depth bins, expected-depth decoding and the ray regression loss.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Depth discretization `d_k = (d_min^γ + k/D·(d_max^γ − d_min^γ))^{1/γ}`, `k = 1..=D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinSpec {
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub n_bins: usize,
    pub gamma: f64,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            d_min_m: 0.1,
            d_max_m: 10.0,
            n_bins: 64,
            gamma: 1.0,
        }
    }
}

impl BinSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.d_min_m.is_finite() && self.d_min_m > 0.0,
            Validation,
            "d_min must be positive, got {}",
            self.d_min_m
        );
        ensure!(
            self.d_max_m.is_finite() && self.d_max_m > self.d_min_m,
            Validation,
            "d_max ({}) must exceed d_min ({})",
            self.d_max_m,
            self.d_min_m
        );
        ensure!(self.n_bins >= 1, Validation, "need at least one bin");
        ensure!(
            self.gamma.is_finite() && self.gamma > 0.0,
            Validation,
            "gamma must be positive, got {}",
            self.gamma
        );
        Ok(())
    }
}

/// Bin centers `d_1 … d_D`; strictly increasing with `d_D == d_max`.
pub fn bin_centers(spec: &BinSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let BinSpec {
        d_min_m,
        d_max_m,
        n_bins,
        gamma,
    } = *spec;
    let lo = d_min_m.powf(gamma);
    let hi = d_max_m.powf(gamma);
    let centers = (1..=n_bins)
        .map(|k| {
            if k == n_bins {
                // the power round trip is not exact in floating point
                d_max_m
            } else {
                let frac = k as f64 / n_bins as f64;
                (lo + frac * (hi - lo)).powf(1.0 / gamma)
            }
        })
        .collect();
    Ok(centers)
}

/// Per-ray probabilities over depth bins (N rows × D columns, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct RayProbDist {
    n_bins: usize,
    probs: Vec<f64>,
}

impl RayProbDist {
    /// Rows must be non-negative and sum to 1 within 1e-6.
    pub fn new(n_bins: usize, probs: Vec<f64>) -> Result<Self> {
        let dist = Self { n_bins, probs };
        dist.check_rows(1e-6)?;
        Ok(dist)
    }

    /// Build without row-sum validation; [`expected_depths`] still checks rows.
    pub fn new_unchecked(n_bins: usize, probs: Vec<f64>) -> Self {
        Self { n_bins, probs }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_bins = rows.first().map_or(0, Vec::len);
        ensure!(
            rows.iter().all(|r| r.len() == n_bins),
            Validation,
            "ragged probability rows"
        );
        Self::new(n_bins, rows.concat())
    }

    pub fn n_rays(&self) -> usize {
        if self.n_bins == 0 {
            0
        } else {
            self.probs.len() / self.n_bins
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n_bins..(i + 1) * self.n_bins]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.n_bins.max(1))
    }

    fn check_rows(&self, tol: f64) -> Result<()> {
        ensure!(self.n_bins > 0, Validation, "distribution has zero bins");
        ensure!(
            self.probs.len() % self.n_bins == 0,
            Validation,
            "{} probabilities do not split into rows of {}",
            self.probs.len(),
            self.n_bins
        );
        for (i, row) in self.rows().enumerate() {
            ensure!(
                row.iter().all(|p| p.is_finite() && *p >= 0.0),
                Validation,
                "row {i} has a negative or non-finite probability"
            );
            let sum: f64 = row.iter().sum();
            ensure!(
                (sum - 1.0).abs() <= tol,
                Validation,
                "row {i} sums to {sum}, expected 1"
            );
        }
        Ok(())
    }
}

/// Row-sum tolerance applied when decoding.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Expected depth per ray: `d_i = Σ_k P_ik · d_k`.
pub fn expected_depths(dist: &RayProbDist, spec: &BinSpec) -> Result<Vec<f64>> {
    let centers = bin_centers(spec)?;
    ensure!(
        dist.n_bins() == centers.len(),
        Validation,
        "distribution has {} bins, spec has {}",
        dist.n_bins(),
        centers.len()
    );
    dist.check_rows(ROW_SUM_TOLERANCE)?;
    Ok(dist
        .rows()
        .map(|row| row.iter().zip(&centers).map(|(p, d)| p * d).sum())
        .collect())
}

/// Inverse of [`expected_depths`] for one ray: split mass linearly between the
/// two bracketing centers. Depths outside `[d_1, d_max]` clamp to the end bins.
pub fn encode_depth(depth: f64, spec: &BinSpec) -> Result<Vec<f64>> {
    let centers = bin_centers(spec)?;
    let d = centers.len();
    let mut row = vec![0.0; d];
    if depth.is_nan() || depth <= centers[0] {
        row[0] = 1.0;
        return Ok(row);
    }
    if depth >= centers[d - 1] {
        row[d - 1] = 1.0;
        return Ok(row);
    }
    // first center strictly above depth
    let upper = centers.partition_point(|&c| c <= depth);
    let lower = upper - 1;
    if centers[lower] == depth {
        row[lower] = 1.0;
        return Ok(row);
    }
    let (a, b) = (centers[lower], centers[upper]);
    let w_hi = (depth - a) / (b - a);
    row[lower] = 1.0 - w_hi;
    row[upper] = w_hi;
    Ok(row)
}

/// Encode a full fan of depths.
pub fn encode_depths(depths: &[f64], spec: &BinSpec) -> Result<RayProbDist> {
    let mut probs = Vec::with_capacity(depths.len() * spec.n_bins);
    for &d in depths {
        probs.extend(encode_depth(d, spec)?);
    }
    RayProbDist::new(spec.n_bins, probs)
}

/// How the cosine term enters the ray regression loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeTerm {
    /// `‖d − d*‖₁ + cos(d, d*)`, the literal typeset form.
    AsPrinted,
    /// `‖d − d*‖₁ + (1 − cos(d, d*))`.
    #[default]
    ShapePenalty,
}

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// `d·d* / max(‖d‖‖d*‖, ε)`.
pub fn cosine_similarity(pred: &[f64], gt: &[f64], epsilon: f64) -> f64 {
    let dot: f64 = pred.iter().zip(gt).map(|(a, b)| a * b).sum();
    let na = pred.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = gt.iter().map(|b| b * b).sum::<f64>().sqrt();
    dot / (na * nb).max(epsilon)
}

/// L1 plus cosine shape loss between predicted and ground-truth depths.
pub fn floc_loss(pred: &[f64], gt: &[f64], mode: ShapeTerm, epsilon: f64) -> Result<f64> {
    ensure!(
        pred.len() == gt.len(),
        Validation,
        "prediction has {} rays, ground truth has {}",
        pred.len(),
        gt.len()
    );
    ensure!(epsilon > 0.0, Validation, "epsilon must be positive");
    let l1: f64 = pred.iter().zip(gt).map(|(a, b)| (a - b).abs()).sum();
    let cos = cosine_similarity(pred, gt, epsilon);
    Ok(match mode {
        ShapeTerm::AsPrinted => l1 + cos,
        ShapeTerm::ShapePenalty => l1 + (1.0 - cos),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn spec(d_min: f64, d_max: f64, n: usize, gamma: f64) -> BinSpec {
        BinSpec {
            d_min_m: d_min,
            d_max_m: d_max,
            n_bins: n,
            gamma,
        }
    }

    #[test]
    fn linear_bins() {
        let c = bin_centers(&spec(0.1, 10.0, 10, 1.0)).unwrap();
        assert_eq!(c[9], 10.0);
        assert!((c[4] - 5.05).abs() < 1e-12);
    }

    #[test]
    fn quadratic_bins() {
        let c = bin_centers(&spec(1.0, 3.0, 2, 2.0)).unwrap();
        assert!((c[0] - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(c[1], 3.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(bin_centers(&spec(0.0, 10.0, 10, 1.0)).is_err());
        assert!(bin_centers(&spec(5.0, 1.0, 10, 1.0)).is_err());
        assert!(bin_centers(&spec(0.1, 10.0, 0, 1.0)).is_err());
        assert!(bin_centers(&spec(0.1, 10.0, 4, -1.0)).is_err());
    }

    #[test]
    fn expected_depth_cases() {
        let s = spec(0.1, 10.0, 10, 1.0);
        let centers = bin_centers(&s).unwrap();
        let mut one_hot = vec![0.0; 10];
        one_hot[6] = 1.0;
        let dist = RayProbDist::from_rows(&[one_hot, vec![0.1; 10]]).unwrap();
        let d = expected_depths(&dist, &s).unwrap();
        assert_eq!(d[0], centers[6]);
        // mean of the ten centers: 0.1 + 9.9 * 5.5 / 10
        assert!((d[1] - 5.545).abs() < 1e-12);

        let half = RayProbDist::new_unchecked(10, vec![0.05; 10]);
        assert!(expected_depths(&half, &s).is_err());
    }

    #[test]
    fn encode_cases() {
        let s = spec(0.1, 10.0, 10, 1.0);
        let c = bin_centers(&s).unwrap();
        let row = encode_depth(c[2], &s).unwrap();
        assert_eq!(row[2], 1.0);
        assert_eq!(row.iter().sum::<f64>(), 1.0);

        let row = encode_depth(0.5 * (c[2] + c[3]), &s).unwrap();
        assert!((row[2] - 0.5).abs() < 1e-12 && (row[3] - 0.5).abs() < 1e-12);

        let row = encode_depth(15.0, &s).unwrap();
        assert_eq!(row[9], 1.0);
    }

    #[test]
    fn loss_cases() {
        let d = [1.0, 2.0, 3.0];
        assert_eq!(floc_loss(&d, &d, ShapeTerm::ShapePenalty, 1e-8).unwrap(), 0.0);
        assert!((floc_loss(&d, &d, ShapeTerm::AsPrinted, 1e-8).unwrap() - 1.0).abs() < 1e-12);
        let l = floc_loss(&[1.0, 0.0], &[0.0, 1.0], ShapeTerm::ShapePenalty, 1e-8).unwrap();
        assert!((l - 3.0).abs() < 1e-12);
        assert!(floc_loss(&[1.0], &[1.0, 2.0], ShapeTerm::default(), 1e-8).is_err());
    }

    proptest! {
        #[test]
        fn centers_increase_and_end_at_max(
            d_min in 0.01f64..2.0,
            span in 0.5f64..20.0,
            n in 1usize..200,
            gamma in 0.2f64..3.0,
        ) {
            let s = spec(d_min, d_min + span, n, gamma);
            let c = bin_centers(&s).unwrap();
            prop_assert_eq!(c[n - 1], s.d_max_m);
            for w in c.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
        }

        #[test]
        fn encode_round_trips(t in 0.0f64..=1.0, gamma in 0.3f64..3.0, n in 2usize..96) {
            let s = spec(0.1, 10.0, n, gamma);
            let c = bin_centers(&s).unwrap();
            let depth = c[0] + t * (c[n - 1] - c[0]);
            let dist = RayProbDist::new(n, encode_depth(depth, &s).unwrap()).unwrap();
            let back = expected_depths(&dist, &s).unwrap()[0];
            prop_assert!((back - depth).abs() < 1e-9, "{} vs {}", back, depth);
        }

        #[test]
        fn affine_ramp_for_unit_gamma(n in 2usize..128) {
            let c = bin_centers(&spec(0.1, 10.0, n, 1.0)).unwrap();
            let step = c[1] - c[0];
            for w in c.windows(2) {
                prop_assert!(((w[1] - w[0]) - step).abs() < 1e-12);
            }
        }

        #[test]
        fn shape_penalty_nonnegative(
            pred in prop::collection::vec(0.0f64..10.0, 8),
            gt in prop::collection::vec(0.1f64..10.0, 8),
            alpha in 0.01f64..50.0,
        ) {
            let l = floc_loss(&pred, &gt, ShapeTerm::ShapePenalty, 1e-8).unwrap();
            prop_assert!(l >= 0.0);
            let scaled: Vec<f64> = pred.iter().map(|p| alpha * p).collect();
            let a = cosine_similarity(&pred, &gt, 1e-8);
            let b = cosine_similarity(&scaled, &gt, 1e-8);
            if pred.iter().any(|p| *p > 1e-3) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
