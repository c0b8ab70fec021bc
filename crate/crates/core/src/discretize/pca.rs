//! Principal component projection of scaled feature matrices.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use super::scaler::FeatureScaler;
use crate::error::{Error, Result};

/// Project standardized data onto its top `dims` principal components.
/// Returns the projected coordinates and the explained variance (covariance
/// eigenvalues, descending) per kept component.
pub fn pca_project(points: &ArrayView2<f64>, dims: usize) -> Result<(Array2<f64>, Vec<f64>)> {
    let n = points.nrows();
    let d = points.ncols();
    if n < dims {
        return Err(Error::InsufficientData(format!(
            "pca needs at least dims = {dims} rows, got {n}"
        )));
    }
    if dims == 0 || dims > d {
        return Err(Error::Config(format!(
            "dims must lie in 1..={d}, got {dims}"
        )));
    }
    let scaler = FeatureScaler::fit(points);
    let scaled = scaler.transform(points);
    let denom = (n.max(2) - 1) as f64;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for r in 0..n {
                acc += scaled[[r, i]] * scaled[[r, j]];
            }
            let v = acc / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eigen = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

    let mut components = Array2::<f64>::zeros((d, dims));
    let mut explained = Vec::with_capacity(dims);
    for (out_c, &src_c) in order.iter().take(dims).enumerate() {
        let col = eigen.eigenvectors.column(src_c);
        // Sign convention: largest-magnitude loading is positive.
        let mut lead = 0;
        for i in 1..d {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        let flip = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            components[[i, out_c]] = flip * col[i];
        }
        explained.push(eigen.eigenvalues[src_c].max(0.0));
    }
    let projected = scaled.dot(&components);
    Ok((projected, explained))
}
