//! Per-dimension standardization.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Affine per-dimension normalization: `y = (x - mean) / std`, with the
/// variance floored at 1e-12 so constant dimensions map to zero instead of
/// blowing up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const VARIANCE_FLOOR: f64 = 1e-12;

impl FeatureScaler {
    pub fn fit(points: &ArrayView2<f64>) -> Self {
        let n = points.nrows() as f64;
        let d = points.ncols();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for j in 0..d {
            let col = points.column(j);
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[j] = m;
            std[j] = var.max(VARIANCE_FLOOR).sqrt();
        }
        FeatureScaler { mean, std }
    }

    /// Identity scaler of the given dimensionality (no-op transform).
    pub fn identity(d: usize) -> Self {
        FeatureScaler {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, points: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = points.to_owned();
        for mut row in out.outer_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    pub fn transform_point(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.std[j])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standardizes_to_zero_mean_unit_variance() {
        let pts = array![[1.0, 10.0], [3.0, 30.0], [5.0, 50.0]];
        let scaler = FeatureScaler::fit(&pts.view());
        let scaled = scaler.transform(&pts.view());
        for j in 0..2 {
            let col = scaled.column(j);
            assert!(col.sum().abs() < 1e-12);
            let var: f64 = col.iter().map(|v| v * v).sum::<f64>() / 3.0;
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_dimension_maps_to_zero() {
        let pts = array![[2.0, 1.0], [2.0, 3.0], [2.0, 5.0]];
        let scaler = FeatureScaler::fit(&pts.view());
        let scaled = scaler.transform(&pts.view());
        for v in scaled.column(0) {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn identity_is_noop() {
        let pts = array![[1.5, -2.0], [0.0, 4.0]];
        let scaled = FeatureScaler::identity(2).transform(&pts.view());
        assert_eq!(pts, scaled);
    }
}
