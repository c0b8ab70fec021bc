//! Quadratic minimization over the probability simplex.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{Error, Result};

/// Euclidean projection onto `{x : x >= 0, sum x = 1}` (sort-based).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    let mut rho = 0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
            rho = i + 1;
        }
    }
    debug_assert!(rho > 0);
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Minimize `x' M x` over the simplex by projected gradient descent with an
/// exact projection: fixed step `1 / (2 lambda_max)`, at most 2000
/// iterations, stopping when the step norm drops below 1e-10.
///
/// A matrix that is indefinite beyond tolerance is repaired by clamping its
/// negative eigenvalues at zero (logged); the search itself is then convex.
pub fn simplex_minimize(m: &Array2<f64>) -> Result<Vec<f64>> {
    let d = m.nrows();
    if d == 0 || m.ncols() != d {
        return Err(Error::Config("matrix must be square and nonempty".to_string()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".to_string()));
    }
    // Symmetrize; the quadratic form only sees the symmetric part.
    let mut sym = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            sym[(i, j)] = 0.5 * (m[[i, j]] + m[[j, i]]);
        }
    }
    let eigen = sym.clone().symmetric_eigen();
    let min_eig = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eig = eigen.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let work = if min_eig < -1e-9 {
        log::warn!("repairing indefinite blend matrix: min eigenvalue {min_eig:.3e} clamped to 0");
        let mut clamped = eigen.clone();
        for v in clamped.eigenvalues.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        clamped.recompose()
    } else {
        sym
    };
    let uniform = vec![1.0 / d as f64; d];
    if max_eig <= 0.0 {
        // Degenerate (effectively zero) objective: any feasible point works.
        return Ok(uniform);
    }
    let step = 1.0 / (2.0 * max_eig);
    let mut x = uniform;
    for _ in 0..2000 {
        let mut grad = vec![0.0; d];
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += work[(i, j)] * x[j];
            }
            grad[i] = 2.0 * acc;
        }
        let moved: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
        let next = project_to_simplex(&moved);
        let delta: f64 = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        x = next;
        if delta < 1e-10 {
            break;
        }
    }
    Ok(x)
}
